#pragma once

#include <optional>
#include <utility>

#include "odcs/tensor.hpp"

namespace odcs {

/// Geometry of a 2-D convolution. For conv2d the weight is laid out
/// [out_channels, in_channels, kh, kw]; for conv_transpose2d it is
/// [in_channels, out_channels, kh, kw], so a conv and its adjoint share the
/// same weight buffer.
struct ConvSpec {
  int kernel_h = 1, kernel_w = 1;
  int stride_h = 1, stride_w = 1;
  int pad_h = 0, pad_w = 0;
  int in_channels = 1, out_channels = 1;

  static ConvSpec square(int kernel, int stride, int pad, int in_ch, int out_ch) {
    return ConvSpec{kernel, kernel, stride, stride, pad, pad, in_ch, out_ch};
  }
};

/// floor((in + 2*pad - kernel) / stride) + 1
int conv_output_size(int input, int kernel, int stride, int pad);
/// (in - 1)*stride - 2*pad + kernel
int conv_transpose_output_size(int input, int kernel, int stride, int pad);

/// Cross-correlation of input [N,C,H,W] with weight [O,C,kh,kw] plus bias [O].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvSpec& spec);

/// Exact adjoint of conv2d's linear map (bias aside). Input [N,O,h,w], weight
/// [O,C,kh,kw], bias [C], output [N,C,H,W]. The conv output-size formula loses
/// information to its floor, so the intended output size can be passed
/// explicitly; it must satisfy conv_output_size(H) == h. When omitted, the
/// minimal consistent size (in-1)*stride - 2*pad + kernel is used.
Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        const ConvSpec& spec,
                        std::optional<std::pair<int, int>> output_hw = std::nullopt);

/// Per-channel running statistics plus the normalization constants.
struct BatchNormState {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C]
  float eps = 1e-5f;
  float momentum = 0.1f;

  static BatchNormState create(int channels, float eps = 1e-5f, float momentum = 0.1f);
};

/// Train mode normalizes each channel by batch statistics (computed in 64-bit)
/// and updates the running statistics by exponential moving average; eval mode
/// normalizes by the running statistics. Differentiable through the batch
/// statistics in train mode.
Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, bool training);

enum class Activation { leaky_relu, relu, tanh };

Tensor activation(const Tensor& input, Activation kind, float slope = 0.2f);
Tensor leaky_relu(const Tensor& input, float slope = 0.2f);
Tensor relu(const Tensor& input);
Tensor tanh(const Tensor& input);

/// 2x2 window, stride 2, floor on odd spatial sizes. Gradient routes to the
/// first-occurring maximum in each window.
Tensor maxpool2d(const Tensor& input);

/// Channel-axis concatenation of [N,Ca,H,W] and [N,Cb,H,W].
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Channels [begin, begin+count) of a [N,C,H,W] tensor.
Tensor slice_channels(const Tensor& input, int begin, int count);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& input, float factor);
Tensor add_scalar(const Tensor& input, float value);
/// Sum of all elements (64-bit accumulation), shape [1].
Tensor sum(const Tensor& input);

}  // namespace odcs
