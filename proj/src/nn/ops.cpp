#include "daug/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "daug/nn/error.hpp"
#include "daug/nn/parallel.hpp"

namespace daug {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// Upper bound on the im2col buffer, in floats.
constexpr std::size_t kMaxColumnFloats = std::size_t{1} << 22;

void require_same_shape(const Tensor4& a, const Tensor4& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                         " differ");
  }
}

void add_into(Tensor4& dst, const Tensor4& src) {
  float* d = dst.ptr();
  const float* s = src.ptr();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

// ---------------------------------------------------------------------------
// convolution

struct ConvGeom {
  int cin, h, w, cout, k, stride, pad, oh, ow;
  int patch() const { return cin * k * k; }
  std::size_t out_plane() const { return static_cast<std::size_t>(oh) * ow; }
  int rows_per_chunk() const {
    const std::size_t per_row = static_cast<std::size_t>(patch()) * ow;
    return static_cast<int>(std::clamp<std::size_t>(kMaxColumnFloats / std::max<std::size_t>(per_row, 1), 1, oh));
  }
};

void im2col(const float* img, const ConvGeom& g, int row0, int rows, float* col) {
  const int cols = rows * g.ow;
  for (int c = 0; c < g.cin; ++c) {
    const float* plane = img + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        float* dst = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * cols;
        for (int r = 0; r < rows; ++r) {
          const int iy = (row0 + r) * g.stride - g.pad + ky;
          float* drow = dst + static_cast<std::size_t>(r) * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(drow, g.ow, 0.0f);
            continue;
          }
          const float* srow = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            drow[ox] = (ix >= 0 && ix < g.w) ? srow[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, const ConvGeom& g, int row0, int rows, float* img) {
  const int cols = rows * g.ow;
  for (int c = 0; c < g.cin; ++c) {
    float* plane = img + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const float* src = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * cols;
        for (int r = 0; r < rows; ++r) {
          const int iy = (row0 + r) * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const float* srow = src + static_cast<std::size_t>(r) * g.ow;
          float* drow = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// normalisation

struct GroupStats {
  std::vector<float> mean;
  std::vector<float> rstd;
};

// Groups are contiguous runs of `size` elements.
GroupStats group_moments(const float* x, std::size_t groups, std::size_t size, float eps) {
  GroupStats st{std::vector<float>(groups), std::vector<float>(groups)};
  for (std::size_t g = 0; g < groups; ++g) {
    const float* p = x + g * size;
    double sum = 0.0;
    for (std::size_t i = 0; i < size; ++i) sum += p[i];
    const double mean = sum / static_cast<double>(size);
    double sq = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
      const double d = p[i] - mean;
      sq += d * d;
    }
    const double var = sq / static_cast<double>(size);
    st.mean[g] = static_cast<float>(mean);
    st.rstd[g] = static_cast<float>(1.0 / std::sqrt(var + static_cast<double>(eps)));
  }
  return st;
}

// dx for y = (x - mean) * rstd given upstream dxhat, accumulated into dx.
void group_norm_backward(const float* x, const float* dxhat, const GroupStats& st, std::size_t groups,
                         std::size_t size, float* dx) {
  for (std::size_t g = 0; g < groups; ++g) {
    const float* xp = x + g * size;
    const float* dp = dxhat + g * size;
    const double mean = st.mean[g];
    const double rstd = st.rstd[g];
    double sum_d = 0.0;
    double sum_dx = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
      const double xhat = (xp[i] - mean) * rstd;
      sum_d += dp[i];
      sum_dx += dp[i] * xhat;
    }
    const double inv_m = 1.0 / static_cast<double>(size);
    float* out = dx + g * size;
    for (std::size_t i = 0; i < size; ++i) {
      const double xhat = (xp[i] - mean) * rstd;
      out[i] += static_cast<float>(rstd * (dp[i] - inv_m * sum_d - xhat * inv_m * sum_dx));
    }
  }
}

Var normalize_groups(Tape& tape, Var x, std::size_t groups, std::size_t size, float eps) {
  const Tensor4& in = tape.value(x);
  GroupStats st = group_moments(in.ptr(), groups, size, eps);
  Tensor4 out(in.shape());
  for (std::size_t g = 0; g < groups; ++g) {
    const float* p = in.ptr() + g * size;
    float* o = out.ptr() + g * size;
    for (std::size_t i = 0; i < size; ++i) o[i] = (p[i] - st.mean[g]) * st.rstd[g];
  }
  return tape.record(std::move(out), {x}, [x, st = std::move(st), groups, size](Tape& t, const Tensor4& gout) {
    group_norm_backward(t.value(x).ptr(), gout.ptr(), st, groups, size, t.grad_buffer(x).ptr());
  });
}

template <typename Fwd, typename Bwd>
Var elementwise(Tape& tape, Var x, Fwd fwd, Bwd bwd) {
  const Tensor4& in = tape.value(x);
  Tensor4 out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return tape.record(std::move(out), {x}, [x, bwd](Tape& t, const Tensor4& g) {
    const Tensor4& xin = t.value(x);
    Tensor4& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < xin.size(); ++i) gx[i] += g[i] * bwd(xin[i]);
  });
}

// Sobel responses of a single-channel plane, valid padding.
void sobel_valid(const float* img, int h, int w, float* gx, float* gy) {
  const int oh = h - 2;
  const int ow = w - 2;
  for (int y = 0; y < oh; ++y) {
    const float* r0 = img + static_cast<std::size_t>(y) * w;
    const float* r1 = r0 + w;
    const float* r2 = r1 + w;
    for (int x = 0; x < ow; ++x) {
      gx[y * ow + x] = (r0[x + 2] - r0[x]) + 2.0f * (r1[x + 2] - r1[x]) + (r2[x + 2] - r2[x]);
      gy[y * ow + x] = (r2[x] + 2.0f * r2[x + 1] + r2[x + 2]) - (r0[x] + 2.0f * r0[x + 1] + r0[x + 2]);
    }
  }
}

// Adjoint of sobel_valid: scatters dgx/dgy back onto the input plane.
void sobel_valid_adjoint(const float* dgx, const float* dgy, int h, int w, float* dimg) {
  const int oh = h - 2;
  const int ow = w - 2;
  for (int y = 0; y < oh; ++y) {
    float* r0 = dimg + static_cast<std::size_t>(y) * w;
    float* r1 = r0 + w;
    float* r2 = r1 + w;
    for (int x = 0; x < ow; ++x) {
      const float a = dgx[y * ow + x];
      r0[x + 2] += a;
      r0[x] -= a;
      r1[x + 2] += 2.0f * a;
      r1[x] -= 2.0f * a;
      r2[x + 2] += a;
      r2[x] -= a;
      const float b = dgy[y * ow + x];
      r2[x] += b;
      r2[x + 1] += 2.0f * b;
      r2[x + 2] += b;
      r0[x] -= b;
      r0[x + 1] -= 2.0f * b;
      r0[x + 2] -= b;
    }
  }
}

float sign(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

}  // namespace

int conv_out_extent(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

Var conv2d(Tape& tape, Var x, Var weight, Var bias, ConvSpec spec) {
  const Tensor4& in = tape.value(x);
  const Tensor4& wt = tape.value(weight);
  const Tensor4& b = tape.value(bias);
  if (spec.stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  if (spec.padding < 0) throw DimensionError("conv2d: padding must be >= 0");
  if (wt.h() != wt.w()) throw DimensionError("conv2d: kernel must be square, got " + to_string(wt.shape()));
  if (in.c() != wt.c()) {
    throw DimensionError("conv2d: input channel axis (" + std::to_string(in.c()) +
                         ") does not match kernel input-channel axis (" + std::to_string(wt.c()) + ")");
  }
  if (b.size() != static_cast<std::size_t>(wt.n())) {
    throw DimensionError("conv2d: bias length " + std::to_string(b.size()) + " does not match output channels " +
                         std::to_string(wt.n()));
  }
  const int oh = conv_out_extent(in.h(), wt.h(), spec.stride, spec.padding);
  const int ow = conv_out_extent(in.w(), wt.w(), spec.stride, spec.padding);
  if (in.h() + 2 * spec.padding < wt.h() || in.w() + 2 * spec.padding < wt.w() || oh < 1 || ow < 1) {
    throw DimensionError("conv2d: spatial axes " + std::to_string(in.h()) + "x" + std::to_string(in.w()) +
                         " too small for kernel " + std::to_string(wt.h()));
  }
  const ConvGeom g{in.c(), in.h(), in.w(), wt.n(), wt.h(), spec.stride, spec.padding, oh, ow};
  const int batch = in.n();
  Tensor4 out({batch, g.cout, oh, ow});
  const std::size_t in_sample = static_cast<std::size_t>(g.cin) * g.h * g.w;
  const std::size_t out_sample = static_cast<std::size_t>(g.cout) * g.out_plane();

  parallel_for(batch, [&](int n) {
    const ConstMap wmat(wt.ptr(), g.cout, g.patch());
    const int chunk = g.rows_per_chunk();
    std::vector<float> col(static_cast<std::size_t>(g.patch()) * chunk * ow);
    for (int row0 = 0; row0 < oh; row0 += chunk) {
      const int rows = std::min(chunk, oh - row0);
      const int cols = rows * ow;
      im2col(in.ptr() + in_sample * n, g, row0, rows, col.data());
      const ConstMap cmat(col.data(), g.patch(), cols);
      StridedMap omat(out.ptr() + out_sample * n + static_cast<std::size_t>(row0) * ow, g.cout, cols,
                      Eigen::OuterStride<>(static_cast<Eigen::Index>(g.out_plane())));
      omat.noalias() = wmat * cmat;
    }
    for (int co = 0; co < g.cout; ++co) {
      float* p = out.plane(n, co);
      const float bv = b[static_cast<std::size_t>(co)];
      for (std::size_t i = 0; i < g.out_plane(); ++i) p[i] += bv;
    }
  });

  return tape.record(std::move(out), {x, weight, bias}, [x, weight, bias, g](Tape& t, const Tensor4& gout) {
    const Tensor4& in = t.value(x);
    const Tensor4& wt = t.value(weight);
    const bool need_x = t.requires_grad(x);
    const bool need_w = t.requires_grad(weight);
    const bool need_b = t.requires_grad(bias);
    const int batch = in.n();
    const std::size_t in_sample = static_cast<std::size_t>(g.cin) * g.h * g.w;
    const std::size_t out_sample = static_cast<std::size_t>(g.cout) * g.out_plane();
    float* dx = need_x ? t.grad_buffer(x).ptr() : nullptr;
    // Per-sample partials summed in sample order keep dW independent of the
    // worker count.
    std::vector<RowMat> dw_parts(need_w ? static_cast<std::size_t>(batch) : 0);

    parallel_for(batch, [&](int n) {
      const ConstMap wmat(wt.ptr(), g.cout, g.patch());
      const int chunk = g.rows_per_chunk();
      std::vector<float> col(static_cast<std::size_t>(g.patch()) * chunk * g.ow);
      std::vector<float> dcol(need_x ? col.size() : 0);
      // Built separately and added once so fan-out accumulation stays exact.
      std::vector<float> dx_sample(need_x ? in_sample : 0, 0.0f);
      if (need_w) dw_parts[static_cast<std::size_t>(n)] = RowMat::Zero(g.cout, g.patch());
      for (int row0 = 0; row0 < g.oh; row0 += chunk) {
        const int rows = std::min(chunk, g.oh - row0);
        const int cols = rows * g.ow;
        const ConstStridedMap gmat(gout.ptr() + out_sample * n + static_cast<std::size_t>(row0) * g.ow, g.cout,
                                   cols, Eigen::OuterStride<>(static_cast<Eigen::Index>(g.out_plane())));
        if (need_w) {
          im2col(in.ptr() + in_sample * n, g, row0, rows, col.data());
          const ConstMap cmat(col.data(), g.patch(), cols);
          dw_parts[static_cast<std::size_t>(n)].noalias() += gmat * cmat.transpose();
        }
        if (need_x) {
          MutMap dmat(dcol.data(), g.patch(), cols);
          dmat.noalias() = wmat.transpose() * gmat;
          col2im_add(dcol.data(), g, row0, rows, dx_sample.data());
        }
      }
      if (need_x) {
        float* dst = dx + in_sample * n;
        for (std::size_t i = 0; i < in_sample; ++i) dst[i] += dx_sample[i];
      }
    });

    if (need_w) {
      Tensor4& dw = t.grad_buffer(weight);
      MutMap dwm(dw.ptr(), g.cout, g.patch());
      for (const auto& part : dw_parts) dwm += part;
    }
    if (need_b) {
      Tensor4& db = t.grad_buffer(bias);
      for (int n = 0; n < batch; ++n) {
        for (int co = 0; co < g.cout; ++co) {
          const float* p = gout.plane(n, co);
          double s = 0.0;
          for (std::size_t i = 0; i < g.out_plane(); ++i) s += p[i];
          db[static_cast<std::size_t>(co)] += static_cast<float>(s);
        }
      }
    }
  });
}

Var upsample_nn2x(Tape& tape, Var x) {
  const Tensor4& in = tape.value(x);
  const Shape4 s = in.shape();
  Tensor4 out({s.n, s.c, 2 * s.h, 2 * s.w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* src = in.plane(n, c);
      float* dst = out.plane(n, c);
      const int ow = 2 * s.w;
      for (int y = 0; y < s.h; ++y) {
        float* d0 = dst + static_cast<std::size_t>(2 * y) * ow;
        for (int xx = 0; xx < s.w; ++xx) {
          const float v = src[y * s.w + xx];
          d0[2 * xx] = v;
          d0[2 * xx + 1] = v;
        }
        std::copy_n(d0, ow, d0 + ow);
      }
    }
  }
  return tape.record(std::move(out), {x}, [x](Tape& t, const Tensor4& g) {
    Tensor4& gx = t.grad_buffer(x);
    const Shape4 s = gx.shape();
    const int ow = 2 * s.w;
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const float* src = g.plane(n, c);
        float* dst = gx.plane(n, c);
        for (int y = 0; y < s.h; ++y) {
          const float* r0 = src + static_cast<std::size_t>(2 * y) * ow;
          const float* r1 = r0 + ow;
          for (int xx = 0; xx < s.w; ++xx) {
            dst[y * s.w + xx] += (r0[2 * xx] + r0[2 * xx + 1]) + (r1[2 * xx] + r1[2 * xx + 1]);
          }
        }
      }
    }
  });
}

Var max_pool2x2(Tape& tape, Var x) {
  const Tensor4& in = tape.value(x);
  const Shape4 s = in.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw DimensionError("max_pool2x2: spatial axes must be even, got " + to_string(s));
  }
  const int oh = s.h / 2;
  const int ow = s.w / 2;
  Tensor4 out({s.n, s.c, oh, ow});
  // Flat index of the winning input element for each output element.
  std::vector<std::size_t> arg(out.size());
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * s.plane();
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx, ++o) {
          std::size_t best = base + static_cast<std::size_t>(2 * y) * s.w + 2 * xx;
          const std::size_t cand[3] = {best + 1, best + s.w, best + s.w + 1};
          for (std::size_t ci : cand) {
            if (in[ci] > in[best]) best = ci;
          }
          arg[o] = best;
          out[o] = in[best];
        }
      }
    }
  }
  return tape.record(std::move(out), {x}, [x, arg = std::move(arg)](Tape& t, const Tensor4& g) {
    Tensor4& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < arg.size(); ++i) gx[arg[i]] += g[i];
  });
}

Var instance_norm(Tape& tape, Var x, float eps) {
  const Shape4 s = tape.shape(x);
  if (s.plane() < 1) throw DimensionError("instance_norm: empty spatial extent");
  return normalize_groups(tape, x, static_cast<std::size_t>(s.n) * s.c, s.plane(), eps);
}

Var layer_norm(Tape& tape, Var x, float eps) {
  const Shape4 s = tape.shape(x);
  if (s.plane() < 1 || s.c < 1) throw DimensionError("layer_norm: empty sample");
  return normalize_groups(tape, x, static_cast<std::size_t>(s.n), static_cast<std::size_t>(s.c) * s.plane(), eps);
}

Var adain(Tape& tape, Var x, const Tensor4& gamma, const Tensor4& beta, float eps) {
  const Tensor4& in = tape.value(x);
  const Shape4 s = in.shape();
  auto check_code = [&](const Tensor4& code, const char* name) {
    if (code.c() != s.c || code.h() != 1 || code.w() != 1 || (code.n() != 1 && code.n() != s.n)) {
      throw DimensionError(std::string("adain: ") + name + " shape " + to_string(code.shape()) +
                           " does not fit activation channel axis of " + to_string(s));
    }
  };
  check_code(gamma, "gamma");
  check_code(beta, "beta");
  const std::size_t groups = static_cast<std::size_t>(s.n) * s.c;
  const std::size_t size = s.plane();
  GroupStats st = group_moments(in.ptr(), groups, size, eps);
  auto code_index = [c = s.c](const Tensor4& code, int n, int ch) {
    return static_cast<std::size_t>(code.n() == 1 ? ch : n * c + ch);
  };
  Tensor4 out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t gi = static_cast<std::size_t>(n) * s.c + c;
      const float gm = gamma[code_index(gamma, n, c)];
      const float bt = beta[code_index(beta, n, c)];
      const float* p = in.plane(n, c);
      float* o = out.plane(n, c);
      for (std::size_t i = 0; i < size; ++i) o[i] = gm * ((p[i] - st.mean[gi]) * st.rstd[gi]) + bt;
    }
  }
  return tape.record(std::move(out), {x},
                     [x, gamma, st = std::move(st), groups, size, code_index](Tape& t, const Tensor4& g) {
                       const Shape4 s = t.shape(x);
                       Tensor4 dxhat(s);
                       for (int n = 0; n < s.n; ++n) {
                         for (int c = 0; c < s.c; ++c) {
                           const float gm = gamma[code_index(gamma, n, c)];
                           const float* src = g.plane(n, c);
                           float* dst = dxhat.plane(n, c);
                           for (std::size_t i = 0; i < size; ++i) dst[i] = gm * src[i];
                         }
                       }
                       group_norm_backward(t.value(x).ptr(), dxhat.ptr(), st, groups, size, t.grad_buffer(x).ptr());
                     });
}

Var relu(Tape& tape, Var x) {
  return elementwise(
      tape, x, [](float v) { return v > 0.0f ? v : 0.0f; }, [](float v) { return v > 0.0f ? 1.0f : 0.0f; });
}

Var leaky_relu(Tape& tape, Var x, float slope) {
  return elementwise(
      tape, x, [slope](float v) { return v >= 0.0f ? v : slope * v; },
      [slope](float v) { return v >= 0.0f ? 1.0f : slope; });
}

Var tanh(Tape& tape, Var x) {
  const Tensor4& in = tape.value(x);
  Tensor4 out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
  const Var y{tape.size()};
  return tape.record(std::move(out), {x}, [x, y](Tape& t, const Tensor4& g) {
    const Tensor4& yv = t.value(y);
    Tensor4& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < yv.size(); ++i) gx[i] += g[i] * (1.0f - yv[i] * yv[i]);
  });
}

Var sigmoid(Tape& tape, Var x) {
  const Tensor4& in = tape.value(x);
  Tensor4 out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = 1.0f / (1.0f + std::exp(-in[i]));
  const Var y{tape.size()};
  return tape.record(std::move(out), {x}, [x, y](Tape& t, const Tensor4& g) {
    const Tensor4& yv = t.value(y);
    Tensor4& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < yv.size(); ++i) gx[i] += g[i] * yv[i] * (1.0f - yv[i]);
  });
}

Var concat_channels(Tape& tape, Var a, Var b) {
  const Tensor4& av = tape.value(a);
  const Tensor4& bv = tape.value(b);
  if (av.n() != bv.n() || av.h() != bv.h() || av.w() != bv.w()) {
    throw DimensionError("concat_channels: " + to_string(av.shape()) + " and " + to_string(bv.shape()) +
                         " differ outside the channel axis");
  }
  const Shape4 s{av.n(), av.c() + bv.c(), av.h(), av.w()};
  Tensor4 out(s);
  const std::size_t a_len = static_cast<std::size_t>(av.c()) * s.plane();
  const std::size_t b_len = static_cast<std::size_t>(bv.c()) * s.plane();
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(av.ptr() + a_len * n, a_len, out.plane(n, 0));
    std::copy_n(bv.ptr() + b_len * n, b_len, out.plane(n, av.c()));
  }
  const int ca = av.c();
  return tape.record(std::move(out), {a, b}, [a, b, ca, a_len, b_len](Tape& t, const Tensor4& g) {
    const int batch = g.n();
    if (t.requires_grad(a)) {
      Tensor4& ga = t.grad_buffer(a);
      for (int n = 0; n < batch; ++n) {
        const float* src = g.plane(n, 0);
        float* dst = ga.ptr() + a_len * n;
        for (std::size_t i = 0; i < a_len; ++i) dst[i] += src[i];
      }
    }
    if (t.requires_grad(b)) {
      Tensor4& gb = t.grad_buffer(b);
      for (int n = 0; n < batch; ++n) {
        const float* src = g.plane(n, ca);
        float* dst = gb.ptr() + b_len * n;
        for (std::size_t i = 0; i < b_len; ++i) dst[i] += src[i];
      }
    }
  });
}

Var add(Tape& tape, Var a, Var b) {
  const Tensor4& av = tape.value(a);
  const Tensor4& bv = tape.value(b);
  require_same_shape(av, bv, "add");
  Tensor4 out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor4& g) {
    if (t.requires_grad(a)) add_into(t.grad_buffer(a), g);
    if (t.requires_grad(b)) add_into(t.grad_buffer(b), g);
  });
}

Var scale(Tape& tape, Var x, float factor) {
  return elementwise(
      tape, x, [factor](float v) { return factor * v; }, [factor](float) { return factor; });
}

Var mean_all(Tape& tape, Var x) {
  const Tensor4& in = tape.value(x);
  if (in.empty()) throw DimensionError("mean_all of an empty tensor");
  double s = 0.0;
  for (float v : in.data()) s += v;
  const auto count = static_cast<double>(in.size());
  return tape.record(Tensor4::scalar(static_cast<float>(s / count)), {x}, [x, count](Tape& t, const Tensor4& g) {
    Tensor4& gx = t.grad_buffer(x);
    const float d = static_cast<float>(g[0] / count);
    for (float& v : gx.data()) v += d;
  });
}

Var spatial_mean(Tape& tape, Var x) {
  const Tensor4& in = tape.value(x);
  const Shape4 s = in.shape();
  if (s.plane() < 1) throw DimensionError("spatial_mean: empty spatial extent");
  Tensor4 out({s.n, s.c, 1, 1});
  const auto size = static_cast<double>(s.plane());
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* p = in.plane(n, c);
      double acc = 0.0;
      for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
      out.at(n, c, 0, 0) = static_cast<float>(acc / size);
    }
  }
  return tape.record(std::move(out), {x}, [x, size](Tape& t, const Tensor4& g) {
    Tensor4& gx = t.grad_buffer(x);
    const Shape4 s = gx.shape();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const float d = static_cast<float>(g.at(n, c, 0, 0) / size);
        float* p = gx.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) p[i] += d;
      }
    }
  });
}

Var clamped_log(Tape& tape, Var x, float lo, float hi) {
  return elementwise(
      tape, x, [lo, hi](float v) { return std::log(std::clamp(v, lo, hi)); },
      [lo, hi](float v) { return (v < lo || v > hi) ? 0.0f : 1.0f / v; });
}

Var one_minus(Tape& tape, Var x) {
  return elementwise(
      tape, x, [](float v) { return 1.0f - v; }, [](float) { return -1.0f; });
}

Var mean_abs_diff(Tape& tape, Var a, Var b) {
  const Tensor4& av = tape.value(a);
  const Tensor4& bv = tape.value(b);
  require_same_shape(av, bv, "mean_abs_diff");
  if (av.empty()) throw DimensionError("mean_abs_diff of empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += std::fabs(static_cast<double>(av[i]) - bv[i]);
  const auto count = static_cast<double>(av.size());
  return tape.record(Tensor4::scalar(static_cast<float>(s / count)), {a, b}, [a, b, count](Tape& t, const Tensor4& g) {
    const Tensor4& av = t.value(a);
    const Tensor4& bv = t.value(b);
    const float d = static_cast<float>(g[0] / count);
    Tensor4* ga = t.requires_grad(a) ? &t.grad_buffer(a) : nullptr;
    Tensor4* gb = t.requires_grad(b) ? &t.grad_buffer(b) : nullptr;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const float sg = d * sign(av[i] - bv[i]);
      if (ga) (*ga)[i] += sg;
      if (gb) (*gb)[i] -= sg;
    }
  });
}

Var sobel_l1(Tape& tape, Var a, Var b) {
  const Tensor4& av = tape.value(a);
  const Tensor4& bv = tape.value(b);
  require_same_shape(av, bv, "sobel_l1");
  const Shape4 s = av.shape();
  if (s.c != 3) throw DimensionError("sobel_l1: expected 3-band images, got " + to_string(s));
  if (s.h < 3 || s.w < 3) throw DimensionError("sobel_l1: H and W must be >= 3, got " + to_string(s));
  const int oh = s.h - 2;
  const int ow = s.w - 2;
  const std::size_t resp = static_cast<std::size_t>(oh) * ow;
  // The filter is linear, so the response difference is the response of the
  // gray difference image.
  std::vector<float> sgx(resp * s.n);
  std::vector<float> sgy(resp * s.n);
  std::vector<float> diff(s.plane());
  std::vector<float> gx(resp);
  std::vector<float> gy(resp);
  double sum_x = 0.0;
  double sum_y = 0.0;
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < s.plane(); ++i) {
      const float ga = (av.plane(n, 0)[i] + av.plane(n, 1)[i] + av.plane(n, 2)[i]) / 3.0f;
      const float gb = (bv.plane(n, 0)[i] + bv.plane(n, 1)[i] + bv.plane(n, 2)[i]) / 3.0f;
      diff[i] = ga - gb;
    }
    sobel_valid(diff.data(), s.h, s.w, gx.data(), gy.data());
    for (std::size_t i = 0; i < resp; ++i) {
      sum_x += std::fabs(gx[i]);
      sum_y += std::fabs(gy[i]);
      sgx[resp * n + i] = sign(gx[i]);
      sgy[resp * n + i] = sign(gy[i]);
    }
  }
  const double count = static_cast<double>(resp) * s.n;
  const float value = static_cast<float>(sum_x / count + sum_y / count);
  return tape.record(Tensor4::scalar(value), {a, b},
                     [a, b, s, resp, count, sgx = std::move(sgx), sgy = std::move(sgy)](Tape& t, const Tensor4& g) {
                       const float d = static_cast<float>(g[0] / count);
                       std::vector<float> dgx(resp);
                       std::vector<float> dgy(resp);
                       std::vector<float> dgray(s.plane());
                       Tensor4* ga = t.requires_grad(a) ? &t.grad_buffer(a) : nullptr;
                       Tensor4* gb = t.requires_grad(b) ? &t.grad_buffer(b) : nullptr;
                       for (int n = 0; n < s.n; ++n) {
                         for (std::size_t i = 0; i < resp; ++i) {
                           dgx[i] = d * sgx[resp * n + i];
                           dgy[i] = d * sgy[resp * n + i];
                         }
                         std::fill(dgray.begin(), dgray.end(), 0.0f);
                         sobel_valid_adjoint(dgx.data(), dgy.data(), s.h, s.w, dgray.data());
                         for (int c = 0; c < 3; ++c) {
                           for (std::size_t i = 0; i < s.plane(); ++i) {
                             const float v = dgray[i] / 3.0f;
                             if (ga) ga->plane(n, c)[i] += v;
                             if (gb) gb->plane(n, c)[i] -= v;
                           }
                         }
                       }
                     });
}

Var detach(Tape& tape, Var x) { return tape.constant(tape.value(x)); }

}  // namespace daug
