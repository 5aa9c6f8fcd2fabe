#include "daug/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "daug/nn/error.hpp"

namespace daug {

std::string to_string(const Shape4& s) {
  std::ostringstream os;
  os << "(" << s.n << "," << s.c << "," << s.h << "," << s.w << ")";
  return os.str();
}

Tensor4::Tensor4(Shape4 shape, float fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw DimensionError("negative tensor dimension in shape " + to_string(shape));
  }
  data_.assign(shape.numel(), fill);
}

Tensor4::Tensor4(Shape4 shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw DimensionError("negative tensor dimension in shape " + to_string(shape));
  }
  if (data_.size() != shape.numel()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         to_string(shape));
  }
}

float Tensor4::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

Tensor4 Tensor4::sample(int i) const {
  if (i < 0 || i >= shape_.n) throw DimensionError("sample index out of range");
  const std::size_t per = static_cast<std::size_t>(shape_.c) * shape_.plane();
  Tensor4 out({1, shape_.c, shape_.h, shape_.w});
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(per * i), per, out.data_.begin());
  return out;
}

bool Tensor4::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor4 stack_batch(std::span<const Tensor4> items) {
  if (items.empty()) throw DimensionError("stack_batch of zero tensors");
  const Shape4 s0 = items.front().shape();
  Tensor4 out({0, s0.c, s0.h, s0.w});
  std::vector<float> data;
  int n = 0;
  for (const auto& t : items) {
    if (t.c() != s0.c || t.h() != s0.h || t.w() != s0.w) {
      throw DimensionError("stack_batch: shape " + to_string(t.shape()) + " differs from " + to_string(s0));
    }
    data.insert(data.end(), t.data().begin(), t.data().end());
    n += t.n();
  }
  return Tensor4({n, s0.c, s0.h, s0.w}, std::move(data));
}

}  // namespace daug
