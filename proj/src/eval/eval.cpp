#include "daug/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "daug/data/image_io.hpp"
#include "daug/data/patches.hpp"
#include "daug/nn/error.hpp"

namespace daug {

namespace {

void require_rgb(const Tensor4& image, const char* what) {
  if (image.n() != 1 || image.c() != 3) {
    throw DimensionError(std::string(what) + " expects a (1,3,H,W) image, got " + to_string(image.shape()));
  }
}

std::array<long long, 256> histogram(const float* plane, std::size_t count) {
  std::array<long long, 256> h{};
  for (std::size_t i = 0; i < count; ++i) ++h[to_byte(plane[i])];
  return h;
}

}  // namespace

ClassIoU iou(const Tensor4& pred, const Tensor4& gt, int channel) {
  if (pred.shape() != gt.shape()) {
    throw DimensionError("iou: prediction " + to_string(pred.shape()) + " and ground truth " + to_string(gt.shape()) +
                         " differ");
  }
  if (channel < 0 || channel >= pred.c()) throw DimensionError("iou: channel out of range");
  ClassIoU r;
  for (int n = 0; n < pred.n(); ++n) {
    const float* p = pred.plane(n, channel);
    const float* g = gt.plane(n, channel);
    for (std::size_t i = 0; i < pred.shape().plane(); ++i) {
      if ((p[i] != 0.0f && p[i] != 1.0f) || (g[i] != 0.0f && g[i] != 1.0f)) {
        throw ValueError("iou: masks must be binary");
      }
      const bool a = p[i] == 1.0f;
      const bool b = g[i] == 1.0f;
      r.intersection += (a && b) ? 1 : 0;
      r.union_count += (a || b) ? 1 : 0;
    }
  }
  if (r.union_count > 0) r.iou = static_cast<double>(r.intersection) / static_cast<double>(r.union_count);
  return r;
}

double mean_iou(std::span<const std::optional<double>> ious) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : ious) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) throw ValueError("mean_iou: every class is undefined");
  return sum / n;
}

IoUReport evaluate_masks(const Tensor4& pred, const Tensor4& gt) {
  if (pred.c() != kClassCount) throw DimensionError("evaluate_masks expects 3 class channels");
  IoUReport r;
  std::array<std::optional<double>, 3> values;
  for (int c = 0; c < kClassCount; ++c) {
    r.classes[static_cast<std::size_t>(c)] = iou(pred, gt, c);
    values[static_cast<std::size_t>(c)] = r.classes[static_cast<std::size_t>(c)].iou;
  }
  r.overall = mean_iou(values);
  return r;
}

Tensor4 gray_world(const Tensor4& image) {
  require_rgb(image, "gray_world");
  const std::size_t count = image.shape().plane();
  std::array<double, 3> mean{};
  for (int c = 0; c < 3; ++c) {
    const float* p = image.plane(0, c);
    for (std::size_t i = 0; i < count; ++i) mean[static_cast<std::size_t>(c)] += (p[i] + 1.0) / 2.0;
    mean[static_cast<std::size_t>(c)] /= static_cast<double>(count);
  }
  const double global = (mean[0] + mean[1] + mean[2]) / 3.0;
  Tensor4 out(image.shape());
  for (int c = 0; c < 3; ++c) {
    const double gain = mean[static_cast<std::size_t>(c)] > 0.0 ? global / mean[static_cast<std::size_t>(c)] : 1.0;
    const float* p = image.plane(0, c);
    float* o = out.plane(0, c);
    for (std::size_t i = 0; i < count; ++i) {
      const double v = std::clamp((p[i] + 1.0) / 2.0 * gain, 0.0, 1.0);
      o[i] = static_cast<float>(2.0 * v - 1.0);
    }
  }
  return out;
}

Tensor4 hist_equalize(const Tensor4& image) {
  require_rgb(image, "hist_equalize");
  const std::size_t count = image.shape().plane();
  Tensor4 out(image.shape());
  for (int c = 0; c < 3; ++c) {
    const float* p = image.plane(0, c);
    float* o = out.plane(0, c);
    const auto h = histogram(p, count);
    std::array<long long, 256> cdf{};
    long long run = 0;
    for (int v = 0; v < 256; ++v) cdf[static_cast<std::size_t>(v)] = run += h[static_cast<std::size_t>(v)];
    long long cdf_min = 0;
    for (int v = 0; v < 256; ++v) {
      if (h[static_cast<std::size_t>(v)] > 0) {
        cdf_min = cdf[static_cast<std::size_t>(v)];
        break;
      }
    }
    const long long denom = static_cast<long long>(count) - cdf_min;
    for (std::size_t i = 0; i < count; ++i) {
      const unsigned char b = to_byte(p[i]);
      if (denom == 0) {
        o[i] = from_byte(b);
        continue;
      }
      const double level = std::floor(255.0 * static_cast<double>(cdf[b] - cdf_min) / static_cast<double>(denom) + 0.5);
      o[i] = from_byte(static_cast<unsigned char>(level));
    }
  }
  return out;
}

Tensor4 zscore(const Tensor4& image) {
  Tensor4 out(image.shape());
  const std::size_t count = image.shape().plane() * static_cast<std::size_t>(image.n());
  for (int c = 0; c < image.c(); ++c) {
    double sum = 0.0, sq = 0.0;
    for (int n = 0; n < image.n(); ++n) {
      const float* p = image.plane(n, c);
      for (std::size_t i = 0; i < image.shape().plane(); ++i) sum += p[i];
    }
    const double mean = sum / static_cast<double>(count);
    for (int n = 0; n < image.n(); ++n) {
      const float* p = image.plane(n, c);
      for (std::size_t i = 0; i < image.shape().plane(); ++i) sq += (p[i] - mean) * (p[i] - mean);
    }
    const double sd = std::sqrt(sq / static_cast<double>(count));
    if (!(sd > 0.0)) throw ValueError("zscore: channel " + std::to_string(c) + " has zero variance");
    for (int n = 0; n < image.n(); ++n) {
      const float* p = image.plane(n, c);
      float* o = out.plane(n, c);
      for (std::size_t i = 0; i < image.shape().plane(); ++i) o[i] = static_cast<float>((p[i] - mean) / sd);
    }
  }
  return out;
}

Tensor4 hist_match(const Tensor4& src, const Tensor4& ref) {
  require_rgb(src, "hist_match");
  require_rgb(ref, "hist_match");
  const std::size_t ns = src.shape().plane();
  const std::size_t nr = ref.shape().plane();
  Tensor4 out(src.shape());
  for (int c = 0; c < 3; ++c) {
    const auto hs = histogram(src.plane(0, c), ns);
    const auto hr = histogram(ref.plane(0, c), nr);
    std::array<double, 256> cs{}, cr{};
    double a = 0.0, b = 0.0;
    for (int v = 0; v < 256; ++v) {
      cs[static_cast<std::size_t>(v)] = (a += static_cast<double>(hs[static_cast<std::size_t>(v)])) / static_cast<double>(ns);
      cr[static_cast<std::size_t>(v)] = (b += static_cast<double>(hr[static_cast<std::size_t>(v)])) / static_cast<double>(nr);
    }
    std::array<unsigned char, 256> map{};
    int r = 0;
    for (int v = 0; v < 256; ++v) {
      while (r < 255 && cr[static_cast<std::size_t>(r)] < cs[static_cast<std::size_t>(v)] - 1e-12) ++r;
      map[static_cast<std::size_t>(v)] = static_cast<unsigned char>(r);
    }
    const float* p = src.plane(0, c);
    float* o = out.plane(0, c);
    for (std::size_t i = 0; i < ns; ++i) o[i] = from_byte(map[to_byte(p[i])]);
  }
  return out;
}

std::string report_json(std::span<const DomainReport> reports) {
  nlohmann::json j;
  j["domains"] = nlohmann::json::array();
  std::vector<double> overall;
  for (const DomainReport& d : reports) {
    nlohmann::json classes = nlohmann::json::object();
    for (int c = 0; c < kClassCount; ++c) {
      const ClassIoU& r = d.report.classes[static_cast<std::size_t>(c)];
      classes[kClassNames[c]] = {{"iou", r.iou ? nlohmann::json(*r.iou) : nlohmann::json(nullptr)},
                                 {"intersection", r.intersection},
                                 {"union", r.union_count}};
    }
    j["domains"].push_back({{"name", d.domain}, {"classes", classes}, {"overall", d.report.overall}});
    overall.push_back(d.report.overall);
  }
  if (!overall.empty()) {
    double s = 0.0;
    for (double v : overall) s += v;
    j["mean_overall"] = s / static_cast<double>(overall.size());
  }
  return j.dump(2);
}

void write_report(const std::filesystem::path& path, std::span<const DomainReport> reports) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report " + path.string());
  out << report_json(reports) << '\n';
}

}  // namespace daug
