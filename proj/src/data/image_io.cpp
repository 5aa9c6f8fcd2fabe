#include "daug/data/image_io.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "daug/nn/error.hpp"

namespace daug {

namespace {

struct Netpbm {
  int channels = 0;
  int width = 0;
  int height = 0;
  std::vector<unsigned char> bytes;
};

int read_header_int(std::istream& in, const std::string& path) {
  int c = in.peek();
  while (c != EOF) {
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      break;
    }
    c = in.peek();
  }
  int v = 0;
  if (!(in >> v)) throw IoError(path + ": malformed image header");
  return v;
}

Netpbm read_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  Netpbm img;
  if (in.gcount() == 2 && magic[0] == 'P' && magic[1] == '6') {
    img.channels = 3;
  } else if (in.gcount() == 2 && magic[0] == 'P' && magic[1] == '5') {
    img.channels = 1;
  } else {
    throw IoError(path.string() + ": not a binary PPM/PGM file");
  }
  img.width = read_header_int(in, path.string());
  img.height = read_header_int(in, path.string());
  const int maxval = read_header_int(in, path.string());
  if (maxval != 255) {
    throw IoError(path.string() + ": unsupported bit depth (maxval " + std::to_string(maxval) + ", expected 255)");
  }
  if (img.width <= 0 || img.height <= 0) throw IoError(path.string() + ": empty image");
  in.get();
  img.bytes.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  in.read(reinterpret_cast<char*>(img.bytes.data()), static_cast<std::streamsize>(img.bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.bytes.size())) throw IoError(path.string() + ": truncated pixel data");
  return img;
}

void write_netpbm(const std::filesystem::path& path, const Netpbm& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.bytes.data()), static_cast<std::streamsize>(img.bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

unsigned char to_byte(float x) {
  const double v = std::floor((static_cast<double>(x) + 1.0) * 127.5 + 0.5);
  return static_cast<unsigned char>(v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v));
}

Tensor4 load_image(const std::filesystem::path& path) {
  const Netpbm img = read_netpbm(path);
  if (img.channels != 3) {
    throw DimensionError(path.string() + ": expected 3 channels, found " + std::to_string(img.channels));
  }
  Tensor4 t({1, 3, img.height, img.width});
  const std::size_t plane = t.shape().plane();
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) t.plane(0, c)[i] = from_byte(img.bytes[i * 3 + static_cast<std::size_t>(c)]);
  }
  return t;
}

void save_image(const std::filesystem::path& path, const Tensor4& image) {
  if (image.n() != 1 || image.c() != 3) {
    throw DimensionError("save_image expects (1,3,H,W), got " + to_string(image.shape()));
  }
  Netpbm img{3, image.w(), image.h(), {}};
  const std::size_t plane = image.shape().plane();
  img.bytes.resize(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) img.bytes[i * 3 + static_cast<std::size_t>(c)] = to_byte(image.plane(0, c)[i]);
  }
  write_netpbm(path, img);
}

Tensor4 load_mask(const std::filesystem::path& path) {
  const Netpbm img = read_netpbm(path);
  if (img.channels != 1) {
    throw DimensionError(path.string() + ": expected a single-channel mask, found " + std::to_string(img.channels) +
                         " channels");
  }
  Tensor4 t({1, 1, img.height, img.width});
  for (std::size_t i = 0; i < img.bytes.size(); ++i) {
    const unsigned char b = img.bytes[i];
    if (b != 0 && b != 255) throw ValueError(path.string() + ": mask values must be 0 or 255");
    t[i] = b == 255 ? 1.0f : 0.0f;
  }
  return t;
}

void save_mask(const std::filesystem::path& path, const Tensor4& mask, int channel) {
  if (mask.n() != 1 || channel < 0 || channel >= mask.c()) {
    throw DimensionError("save_mask: bad channel " + std::to_string(channel) + " for " + to_string(mask.shape()));
  }
  Netpbm img{1, mask.w(), mask.h(), {}};
  const float* src = mask.plane(0, channel);
  img.bytes.resize(mask.shape().plane());
  for (std::size_t i = 0; i < img.bytes.size(); ++i) {
    if (src[i] != 0.0f && src[i] != 1.0f) throw ValueError("save_mask: mask values must be 0 or 1");
    img.bytes[i] = src[i] == 1.0f ? 255 : 0;
  }
  write_netpbm(path, img);
}

}  // namespace daug
