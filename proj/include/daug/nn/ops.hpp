#pragma once

#include <span>

#include "daug/nn/tape.hpp"

namespace daug {

/// Epsilon used by every normalisation op.
inline constexpr float kNormEps = 1e-5f;
/// Default negative slope of leaky_relu.
inline constexpr float kLeakySlope = 0.2f;

struct ConvSpec {
  int stride = 1;
  int padding = 0;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Output extent of a convolution along one axis.
int conv_out_extent(int in, int kernel, int stride, int padding);

/// Cross-correlation with zero padding. weight is (Cout, Cin, k, k) with
/// square kernels, bias is (1, Cout, 1, 1).
Var conv2d(Tape& tape, Var x, Var weight, Var bias, ConvSpec spec);

/// Nearest-neighbour upsampling by 2 along H and W.
Var upsample_nn2x(Tape& tape, Var x);

/// 2x2 max pooling with stride 2; H and W must be even.
Var max_pool2x2(Tape& tape, Var x);

/// Per (sample, channel) whitening over H*W with population variance.
Var instance_norm(Tape& tape, Var x, float eps = kNormEps);

/// Per sample whitening over C*H*W with population variance.
Var layer_norm(Tape& tape, Var x, float eps = kNormEps);

/// Adaptive instance normalisation: gamma * instance_norm(x) + beta.
///
/// gamma and beta are (1, C, 1, 1), shared by the batch, or (N, C, 1, 1),
/// one code per sample. They are constants: no gradient flows into them.
Var adain(Tape& tape, Var x, const Tensor4& gamma, const Tensor4& beta, float eps = kNormEps);

Var relu(Tape& tape, Var x);
Var leaky_relu(Tape& tape, Var x, float slope = kLeakySlope);
Var tanh(Tape& tape, Var x);
Var sigmoid(Tape& tape, Var x);

/// Concatenates along the channel axis.
Var concat_channels(Tape& tape, Var a, Var b);

Var add(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var x, float factor);

/// Mean of all elements, as a (1,1,1,1) tensor.
Var mean_all(Tape& tape, Var x);

/// Per (sample, channel) mean over H*W, shape (N, C, 1, 1).
Var spatial_mean(Tape& tape, Var x);

/// log(clamp(x, lo, hi)) elementwise; the gradient is zero where clamped.
Var clamped_log(Tape& tape, Var x, float lo, float hi);

/// 1 - x elementwise.
Var one_minus(Tape& tape, Var x);

/// mean |a - b| over all elements.
Var mean_abs_diff(Tape& tape, Var a, Var b);

/// Edge discrepancy between two 3-band images.
///
/// Both images are turned to gray by the unweighted channel mean, filtered
/// with the 3x3 horizontal and vertical Sobel kernels (valid padding) and
/// compared as mean |gx_a - gx_b| + mean |gy_a - gy_b|.
Var sobel_l1(Tape& tape, Var a, Var b);

/// Detached copy: same value, no gradient path.
Var detach(Tape& tape, Var x);

}  // namespace daug
