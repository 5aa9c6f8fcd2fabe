#include "daug/nn/tensor_file.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "daug/nn/error.hpp"

namespace daug {

namespace {

constexpr char kMagic[4] = {'D', 'A', 'U', 'G'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw TruncatedError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                           std::to_string(pos_));
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32(const char* what) {
    const auto b = take(4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint8_t u8(const char* what) { return take(1, what)[0]; }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor4* TensorFile::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_tensor_file(const TensorFile& file) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kTensorFileVersion);
  put_u32(out, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& [name, t] : file.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(0);
    put_u32(out, 4);
    for (int d : {t.n(), t.c(), t.h(), t.w()}) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data()) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, &v, 4);
      put_u32(out, bits);
    }
  }
  put_u32(out, static_cast<std::uint32_t>(file.manifest.size()));
  out.insert(out.end(), file.manifest.begin(), file.manifest.end());
  return out;
}

TensorFile decode_tensor_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint file (bad magic bytes)");
  }
  Reader r(bytes.subspan(4));
  const std::uint32_t version = r.u32("version");
  if (version != kTensorFileVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kTensorFileVersion) + ")");
  }
  const std::uint32_t count = r.u32("tensor count");
  TensorFile file;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32("tensor name length");
    const auto name_bytes = r.take(len, "tensor name");
    std::string name(name_bytes.begin(), name_bytes.end());
    if (!seen.insert(name).second) throw FormatError("checkpoint holds tensor " + name + " twice");
    const std::uint8_t dtype = r.u8("dtype");
    if (dtype != 0) throw FormatError("tensor " + name + ": unsupported dtype " + std::to_string(dtype));
    const std::uint32_t rank = r.u32("rank");
    if (rank < 1 || rank > 4) throw FormatError("tensor " + name + ": unsupported rank " + std::to_string(rank));
    int dims[4] = {1, 1, 1, 1};
    std::uint64_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint32_t d = r.u32("dims");
      if (d > (1u << 30)) throw FormatError("tensor " + name + ": implausible dimension");
      dims[4 - rank + k] = static_cast<int>(d);
      numel *= d;
    }
    if (numel * 4 > r.remaining()) throw TruncatedError("checkpoint truncated inside tensor " + name);
    Tensor4 t({dims[0], dims[1], dims[2], dims[3]});
    const auto payload = r.take(numel * 4, "payload");
    for (std::size_t k = 0; k < numel; ++k) {
      const std::uint32_t bits = static_cast<std::uint32_t>(payload[4 * k]) |
                                 (static_cast<std::uint32_t>(payload[4 * k + 1]) << 8) |
                                 (static_cast<std::uint32_t>(payload[4 * k + 2]) << 16) |
                                 (static_cast<std::uint32_t>(payload[4 * k + 3]) << 24);
      std::memcpy(&t[k], &bits, 4);
    }
    file.tensors.emplace_back(std::move(name), std::move(t));
  }
  const std::uint32_t mlen = r.u32("manifest length");
  const auto m = r.take(mlen, "manifest");
  file.manifest.assign(m.begin(), m.end());
  if (!r.done()) throw FormatError("trailing bytes after the checkpoint manifest");
  return file;
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  const auto bytes = encode_tensor_file(file);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor_file(bytes);
}

}  // namespace daug
