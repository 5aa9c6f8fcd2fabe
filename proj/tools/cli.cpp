#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "daug/daugnet/daugnet.hpp"
#include "daug/data/dataset.hpp"
#include "daug/data/image_io.hpp"
#include "daug/data/synth.hpp"
#include "daug/eval/eval.hpp"
#include "daug/nn/error.hpp"
#include "daug/nn/parallel.hpp"
#include "daug/train/style_trainer.hpp"

namespace daug::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct DataConfig {
  int image_size = 128;
  int patch_size = 256;
  int overlap = 32;
};

struct PredictConfig {
  int tile = 256;
  int overlap = 32;
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  DataConfig data;
  StyleTrainConfig style;
  bool decay_set = false;
  DAugConfig daugnet;
  PredictConfig predict;

  fs::path config_path;
  fs::path data_root;
  fs::path checkpoint;
  fs::path init;
  fs::path input;
  fs::path out;
  std::string domains;
  std::string method;
  std::string reference;
  std::optional<int> epochs;
  std::optional<double> diversify_prob;
  bool no_edge_loss = false;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

template <typename T>
void take(const json& obj, const char* key, T& into) {
  if (obj.contains(key)) into = obj.at(key).get<T>();
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw UsageError("config: unknown key '" + it.key() + "' in " + where);
  }
}

void read_weights(const json& w, LossWeights& out, const std::string& where) {
  reject_unknown(w, {"adversarial", "cross", "self", "edge", "cross_entropy", "soft_iou"}, where);
  take(w, "adversarial", out.adversarial);
  take(w, "cross", out.cross);
  take(w, "self", out.self);
  take(w, "edge", out.edge);
  take(w, "cross_entropy", out.cross_entropy);
  take(w, "soft_iou", out.soft_iou);
}

void read_config(RunConfig& rc) {
  std::ifstream in(rc.config_path);
  if (!in) throw IoError("cannot read config " + rc.config_path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config " + rc.config_path.string() + ": " + e.what());
  }
  try {
    reject_unknown(j, {"seed", "data", "style", "daugnet", "predict"}, "top level");
    if (j.contains("seed")) rc.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("data")) {
      const json& d = j.at("data");
      reject_unknown(d, {"image_size", "patch_size", "overlap"}, "data");
      take(d, "image_size", rc.data.image_size);
      take(d, "patch_size", rc.data.patch_size);
      take(d, "overlap", rc.data.overlap);
    }
    if (j.contains("style")) {
      const json& s = j.at("style");
      reject_unknown(s, {"epochs", "decay_epoch", "lr", "batch_size", "steps_per_epoch", "beta1", "beta2", "weights"},
                     "style");
      take(s, "epochs", rc.style.num_epochs);
      rc.decay_set = s.contains("decay_epoch");
      take(s, "decay_epoch", rc.style.decay_epoch);
      take(s, "lr", rc.style.base_lr);
      take(s, "batch_size", rc.style.batch_size);
      take(s, "steps_per_epoch", rc.style.steps_per_epoch);
      take(s, "beta1", rc.style.beta1);
      take(s, "beta2", rc.style.beta2);
      if (s.contains("weights")) read_weights(s.at("weights"), rc.style.weights, "style.weights");
    }
    if (j.contains("daugnet")) {
      const json& s = j.at("daugnet");
      reject_unknown(s, {"epochs", "lr", "batch_size", "steps_per_epoch", "diversify_prob", "weights"}, "daugnet");
      take(s, "epochs", rc.daugnet.epochs);
      take(s, "lr", rc.daugnet.lr);
      take(s, "batch_size", rc.daugnet.batch_size);
      take(s, "steps_per_epoch", rc.daugnet.steps_per_epoch);
      take(s, "diversify_prob", rc.daugnet.diversify_prob);
      if (s.contains("weights")) read_weights(s.at("weights"), rc.daugnet.weights, "daugnet.weights");
    }
    if (j.contains("predict")) {
      const json& p = j.at("predict");
      reject_unknown(p, {"tile", "overlap"}, "predict");
      take(p, "tile", rc.predict.tile);
      take(p, "overlap", rc.predict.overlap);
    }
  } catch (const json::exception& e) {
    throw UsageError("config " + rc.config_path.string() + ": " + e.what());
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void require_file(const fs::path& p, const char* flag) {
  if (p.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::is_regular_file(p)) throw IoError(std::string(flag) + ": no such file " + p.string());
}

void require_dir(const fs::path& p, const char* flag) {
  if (p.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::is_directory(p)) throw IoError(std::string(flag) + ": no such directory " + p.string());
}

void require_out(const fs::path& p) {
  if (p.empty()) throw UsageError("--out is required");
  const fs::path parent = p.has_parent_path() ? p.parent_path() : fs::path(".");
  if (!fs::is_directory(parent)) throw IoError("--out: directory " + parent.string() + " does not exist");
}

std::uint64_t require_seed(const RunConfig& rc) {
  if (!rc.seed) throw UsageError("--seed (or \"seed\" in --config) is required for training");
  return *rc.seed;
}

void apply_style_overrides(RunConfig& rc) {
  if (rc.epochs) rc.style.num_epochs = *rc.epochs;
  if (!rc.decay_set) rc.style.decay_epoch = std::max(1, rc.style.num_epochs * 15 / 25);
  if (rc.no_edge_loss) rc.style.weights.edge = 0.0f;
  rc.style.validate();
}

std::vector<DomainImage> select_domains(const std::vector<DomainImage>& all, const std::string& names) {
  if (names.empty()) return all;
  std::vector<DomainImage> out;
  for (const std::string& n : split_list(names)) {
    auto it = std::find_if(all.begin(), all.end(), [&](const DomainImage& d) { return d.name == n; });
    if (it == all.end()) throw UsageError("--domains: dataset has no domain '" + n + "'");
    out.push_back(*it);
  }
  return out;
}

Tensor4 standardize_image(const std::string& method, const Tensor4& image, const Tensor4* reference) {
  if (method == "gray-world") return gray_world(image);
  if (method == "hist-eq") return hist_equalize(image);
  if (method == "zscore") return zscore(image);
  if (method == "hist-match") {
    if (reference == nullptr) throw UsageError("hist-match needs --reference");
    return hist_match(image, *reference);
  }
  throw UsageError("unknown standardization method '" + method + "'");
}

void standardize_domains(std::vector<DomainImage>& domains, const RunConfig& rc, const std::vector<DomainImage>& all) {
  if (rc.method.empty()) return;
  std::optional<Tensor4> ref;
  if (!rc.reference.empty()) {
    auto it = std::find_if(all.begin(), all.end(), [&](const DomainImage& d) { return d.name == rc.reference; });
    if (it == all.end()) throw UsageError("--reference: dataset has no domain '" + rc.reference + "'");
    ref = it->image;
  }
  for (DomainImage& d : domains) d.image = standardize_image(rc.method, d.image, ref ? &*ref : nullptr);
}

StyleObserver style_progress(std::ostream& out) {
  return [&out, step = 0LL](int epoch, const StyleStepReport& r) mutable {
    if (++step % 50 == 0) {
      out << "epoch " << epoch << " step " << step << " d " << r.d_total << " g " << r.g_total << " self " << r.self
          << " cross " << r.cross << " edge " << r.edge << '\n';
    }
  };
}

int cmd_synth(RunConfig& rc, std::ostream& out) {
  if (rc.out.empty()) throw UsageError("--out is required");
  Rng rng(rc.seed.value_or(0));
  const auto domains = generate_synth_domains(default_synth_specs(rc.data.image_size), rng);
  save_dataset(rc.out, domains);
  for (const DomainImage& d : domains) out << d.name << ' ' << to_string(d.role) << '\n';
  return 0;
}

int cmd_extract(RunConfig& rc, std::ostream& out) {
  require_dir(rc.data_root, "--data");
  if (rc.out.empty()) throw UsageError("--out is required");
  const auto domains = select_domains(load_dataset(rc.data_root), rc.domains);
  const DomainRegistry registry = registry_for(domains, rc.seed.value_or(0));
  const LabeledPatchSet set = assemble_patchset(domains, registry, rc.data.patch_size, rc.data.overlap);
  fs::create_directories(rc.out);
  json index = json::array();
  for (std::size_t i = 0; i < set.patches.size(); ++i) {
    const LabeledPatch& p = set.patches[i];
    char stem[32];
    std::snprintf(stem, sizeof stem, "patch_%05zu", i);
    save_image(rc.out / (std::string(stem) + ".ppm"), p.image);
    json entry = {{"file", std::string(stem) + ".ppm"},
                  {"domain", registry.at(p.domain_id).name},
                  {"x", p.x},
                  {"y", p.y}};
    if (p.labeled()) {
      for (int c = 0; c < kClassCount; ++c) {
        const std::string name = std::string(stem) + "_" + kClassNames[c] + ".pgm";
        save_mask(rc.out / name, p.mask, c);
        entry["masks"][kClassNames[c]] = name;
      }
    }
    index.push_back(entry);
  }
  std::ofstream(rc.out / "patches.json") << index.dump(2) << '\n';
  out << set.patches.size() << " patches\n";
  return 0;
}

int cmd_train_style(RunConfig& rc, std::ostream& out) {
  require_dir(rc.data_root, "--data");
  require_out(rc.out);
  const std::uint64_t seed = require_seed(rc);
  apply_style_overrides(rc);
  rc.style.rng_seed = seed;
  const auto domains = select_domains(load_dataset(rc.data_root), rc.domains);
  const DomainRegistry registry = registry_for(domains, seed);
  const LabeledPatchSet set = assemble_patchset(domains, registry, rc.data.patch_size, rc.data.overlap);
  const StyleCheckpoint ckpt = train_style(set, registry, rc.style, style_progress(out));
  save_checkpoint(rc.out, ckpt);
  out << "wrote " << rc.out.string() << '\n';
  return 0;
}

int cmd_extend(RunConfig& rc, std::ostream& out) {
  require_file(rc.checkpoint, "--checkpoint");
  require_dir(rc.data_root, "--data");
  require_out(rc.out);
  if (rc.domains.empty()) throw UsageError("--domains must list the new domains");
  const std::uint64_t seed = require_seed(rc);
  apply_style_overrides(rc);
  rc.style.rng_seed = seed;
  rc.style.lifelong_mode = true;
  const StyleCheckpoint old = load_checkpoint(rc.checkpoint);
  const auto all = load_dataset(rc.data_root);
  std::vector<std::pair<std::string, DomainRole>> added;
  for (const DomainImage& d : select_domains(all, rc.domains)) {
    if (old.registry.contains(d.name)) throw UsageError("domain '" + d.name + "' is already in the checkpoint");
    added.emplace_back(d.name, d.role);
  }
  StyleCheckpoint state = extend_for_lifelong(old, added, seed);
  std::vector<DomainImage> known;
  for (const DomainImage& d : all) {
    if (state.registry.contains(d.name)) known.push_back(d);
  }
  const LabeledPatchSet set = assemble_patchset(known, state.registry, rc.data.patch_size, rc.data.overlap);
  train_style(state, set, rc.style, style_progress(out));
  save_checkpoint(rc.out, state);
  out << "wrote " << rc.out.string() << " with " << state.registry.size() << " domains\n";
  return 0;
}

int cmd_stylize(RunConfig& rc, std::ostream& out) {
  require_file(rc.checkpoint, "--checkpoint");
  require_file(rc.input, "--input");
  require_out(rc.out);
  const auto names = split_list(rc.domains);
  if (names.size() != 1) throw UsageError("--domains must name exactly one style domain");
  const StyleCheckpoint ckpt = load_checkpoint(rc.checkpoint);
  const Tensor4 fake = stylize(load_image(rc.input), ckpt.registry.find(names[0]).code, ckpt.generator);
  save_image(rc.out, fake);
  out << "wrote " << rc.out.string() << '\n';
  return 0;
}

int cmd_train_daugnet(RunConfig& rc, std::ostream& out) {
  require_file(rc.checkpoint, "--checkpoint");
  require_dir(rc.data_root, "--data");
  require_out(rc.out);
  if (!rc.init.empty()) require_file(rc.init, "--init");
  rc.daugnet.rng_seed = require_seed(rc);
  if (rc.epochs) rc.daugnet.epochs = *rc.epochs;
  if (rc.diversify_prob) rc.daugnet.diversify_prob = *rc.diversify_prob;
  rc.daugnet.validate();
  const StyleCheckpoint stage1 = load_checkpoint(rc.checkpoint);
  const auto all = load_dataset(rc.data_root);
  std::vector<DomainImage> domains;
  for (const DomainImage& d : select_domains(all, rc.domains)) {
    if (stage1.registry.contains(d.name)) domains.push_back(d);
  }
  standardize_domains(domains, rc, all);
  const LabeledPatchSet set = assemble_patchset(domains, stage1.registry, rc.data.patch_size, rc.data.overlap);
  std::optional<ClassifierParams> init;
  if (!rc.init.empty()) init = load_classifier(rc.init);
  const ClassifierParams params = train_daugnet(set, stage1, rc.daugnet, init, [&out](const DAugStepReport& r) {
    if ((r.step + 1) % 50 == 0) out << "epoch " << r.epoch << " step " << r.step + 1 << " loss " << r.loss << '\n';
  });
  save_classifier(rc.out, params);
  out << "wrote " << rc.out.string() << '\n';
  return 0;
}

int cmd_predict(RunConfig& rc, std::ostream& out) {
  require_file(rc.checkpoint, "--checkpoint");
  require_file(rc.input, "--input");
  if (rc.out.empty()) throw UsageError("--out is required");
  const ClassifierParams params = load_classifier(rc.checkpoint);
  Tensor4 image = load_image(rc.input);
  if (!rc.method.empty()) {
    std::optional<Tensor4> ref;
    if (!rc.reference.empty()) ref = load_image(rc.reference);
    image = standardize_image(rc.method, image, ref ? &*ref : nullptr);
  }
  const Tensor4 mask = predict_map(image, params, rc.predict.tile, rc.predict.overlap);
  fs::create_directories(rc.out);
  for (int c = 0; c < kClassCount; ++c) save_mask(rc.out / ("mask_" + std::string(kClassNames[c]) + ".pgm"), mask, c);
  out << "wrote " << rc.out.string() << '\n';
  return 0;
}

int cmd_evaluate(RunConfig& rc, std::ostream& out) {
  require_file(rc.checkpoint, "--checkpoint");
  require_dir(rc.data_root, "--data");
  require_out(rc.out);
  const ClassifierParams params = load_classifier(rc.checkpoint);
  const auto all = load_dataset(rc.data_root);
  std::vector<DomainImage> domains;
  for (const DomainImage& d : select_domains(all, rc.domains)) {
    if (!d.mask.empty()) domains.push_back(d);
  }
  if (domains.empty()) throw UsageError("no selected domain has ground-truth masks");
  standardize_domains(domains, rc, all);
  std::vector<DomainReport> reports;
  for (const DomainImage& d : domains) {
    const Tensor4 pred = predict_map(d.image, params, rc.predict.tile, rc.predict.overlap);
    reports.push_back({d.name, evaluate_masks(pred, d.mask)});
    const IoUReport& r = reports.back().report;
    out << d.name;
    for (int c = 0; c < kClassCount; ++c) {
      const auto& v = r.classes[static_cast<std::size_t>(c)].iou;
      out << ' ' << kClassNames[c] << ' ' << (v ? std::to_string(*v) : std::string("n/a"));
    }
    out << " overall " << r.overall << '\n';
  }
  write_report(rc.out, reports);
  return 0;
}

int cmd_standardize(RunConfig& rc, std::ostream& out) {
  require_file(rc.input, "--input");
  require_out(rc.out);
  if (rc.method.empty()) throw UsageError("--method is required");
  std::optional<Tensor4> ref;
  if (!rc.reference.empty()) {
    require_file(rc.reference, "--reference");
    ref = load_image(rc.reference);
  }
  const Tensor4 result = standardize_image(rc.method, load_image(rc.input), ref ? &*ref : nullptr);
  if (rc.method == "zscore") {
    TensorFile file;
    file.tensors.emplace_back("image", result);
    file.manifest = json{{"kind", "zscore"}}.dump();
    write_tensor_file(rc.out, file);
  } else {
    save_image(rc.out, result);
  }
  out << "wrote " << rc.out.string() << '\n';
  return 0;
}

void apply_threads_env() {
  const char* env = std::getenv("DAUG_THREADS");
  if (env == nullptr) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || n < 1) throw UsageError(std::string("DAUG_THREADS must be a positive integer, got '") + env + "'");
  set_thread_count(static_cast<int>(n));
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  CLI::App app{"Multi-domain style augmentation and segmentation toolkit", "daug"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", rc.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "RNG seed");
  };

  CLI::App* synth = app.add_subcommand("synth-data", "Generate the synthetic multi-domain dataset");
  common(synth);
  synth->add_option("--out", rc.out, "Dataset root to create");

  CLI::App* extract = app.add_subcommand("extract-patches", "Cut a dataset into overlapping patches");
  common(extract);
  extract->add_option("--data", rc.data_root, "Dataset root");
  extract->add_option("--domains", rc.domains, "Comma-separated domain names (default: all)");
  extract->add_option("--out", rc.out, "Output directory");

  CLI::App* style = app.add_subcommand("train-style", "Train the style-transfer generator and discriminator");
  common(style);
  style->add_option("--data", rc.data_root, "Dataset root");
  style->add_option("--domains", rc.domains, "Comma-separated domain names (default: all)");
  style->add_option("--epochs", rc.epochs, "Number of epochs");
  style->add_flag("--no-edge-loss", rc.no_edge_loss, "Disable the edge loss");
  style->add_option("--out", rc.out, "Checkpoint to write");

  CLI::App* extend = app.add_subcommand("extend-domains", "Add new domains to a trained style checkpoint");
  common(extend);
  extend->add_option("--checkpoint", rc.checkpoint, "Existing style checkpoint");
  extend->add_option("--data", rc.data_root, "Dataset root holding old and new domains");
  extend->add_option("--domains", rc.domains, "Comma-separated names of the new domains");
  extend->add_option("--epochs", rc.epochs, "Number of epochs");
  extend->add_flag("--no-edge-loss", rc.no_edge_loss, "Disable the edge loss");
  extend->add_option("--out", rc.out, "Checkpoint to write");

  CLI::App* styl = app.add_subcommand("stylize", "Render an image in the style of a domain");
  common(styl);
  styl->add_option("--checkpoint", rc.checkpoint, "Style checkpoint");
  styl->add_option("--input", rc.input, "Content image (PPM)");
  styl->add_option("--domains", rc.domains, "Style domain name");
  styl->add_option("--out", rc.out, "Output image (PPM)");

  CLI::App* daug = app.add_subcommand("train-daugnet", "Train the segmentation classifier behind the augmentor");
  common(daug);
  daug->add_option("--checkpoint", rc.checkpoint, "Stage-1 style checkpoint");
  daug->add_option("--data", rc.data_root, "Dataset root");
  daug->add_option("--domains", rc.domains, "Comma-separated domain names (default: all)");
  daug->add_option("--epochs", rc.epochs, "Number of epochs");
  daug->add_option("--diversify-prob", rc.diversify_prob, "Probability that a batch is restyled");
  daug->add_option("--init", rc.init, "Classifier checkpoint to continue from");
  daug->add_option("--standardize", rc.method, "Standardize images first: gray-world, hist-eq, zscore, hist-match");
  daug->add_option("--reference", rc.reference, "Reference domain for hist-match");
  daug->add_option("--out", rc.out, "Classifier checkpoint to write");

  CLI::App* predict = app.add_subcommand("predict", "Segment a full image");
  common(predict);
  predict->add_option("--checkpoint", rc.checkpoint, "Classifier checkpoint");
  predict->add_option("--input", rc.input, "Image (PPM)");
  predict->add_option("--standardize", rc.method, "Standardize the image first");
  predict->add_option("--reference", rc.reference, "Reference image for hist-match");
  predict->add_option("--out", rc.out, "Output directory for the class masks");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Score a classifier on labeled domains");
  common(evaluate);
  evaluate->add_option("--checkpoint", rc.checkpoint, "Classifier checkpoint");
  evaluate->add_option("--data", rc.data_root, "Dataset root");
  evaluate->add_option("--domains", rc.domains, "Comma-separated domain names (default: all labeled)");
  evaluate->add_option("--standardize", rc.method, "Standardize images first");
  evaluate->add_option("--reference", rc.reference, "Reference domain for hist-match");
  evaluate->add_option("--out", rc.out, "JSON report to write");

  CLI::App* standardize = app.add_subcommand("standardize", "Apply a data-standardization baseline to an image");
  common(standardize);
  standardize->add_option("--method", rc.method, "gray-world, hist-eq, zscore or hist-match");
  standardize->add_option("--input", rc.input, "Image (PPM)");
  standardize->add_option("--reference", rc.reference, "Reference image for hist-match");
  standardize->add_option("--out", rc.out, "Output (PPM; tensor file for zscore)");

  if (argc > 1 && argv[1][0] != '-') {
    const std::string token = argv[1];
    const auto subs = app.get_subcommands([&](CLI::App* a) { return a->get_name() == token; });
    if (subs.empty()) {
      err << "daug: unknown subcommand '" << token << "'\nRun with --help for more information.\n";
      return 2;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    apply_threads_env();
    if (!rc.config_path.empty()) read_config(rc);
    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--seed") > 0) rc.seed = seed;
    const std::string name = sub->get_name();
    if (name == "synth-data") return cmd_synth(rc, out);
    if (name == "extract-patches") return cmd_extract(rc, out);
    if (name == "train-style") return cmd_train_style(rc, out);
    if (name == "extend-domains") return cmd_extend(rc, out);
    if (name == "stylize") return cmd_stylize(rc, out);
    if (name == "train-daugnet") return cmd_train_daugnet(rc, out);
    if (name == "predict") return cmd_predict(rc, out);
    if (name == "evaluate") return cmd_evaluate(rc, out);
    return cmd_standardize(rc, out);
  } catch (const std::exception& e) {
    err << "daug: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace daug::cli
