#include "odcs/network.hpp"

#include <cmath>

#include "odcs/rng.hpp"

namespace odcs {

namespace {

constexpr int kDepth = 8;
constexpr float kInitStd = 0.02f;
constexpr float kLeakySlope = 0.2f;

void fill_normal(Tensor& t, Rng& rng, float stddev) {
  for (float& v : t.values()) v = rng.normal(0.0f, stddev);
}

/// Conv geometry for one downsampling step: 4x4 stride 2, pad 1, except that
/// a 1x1 input takes pad 2 so the output stays 1x1.
ConvSpec down_spec(int in_size, int in_ch, int out_ch) {
  const int pad = (in_size == 1) ? 2 : 1;
  return ConvSpec::square(4, 2, pad, in_ch, out_ch);
}

NetBlock make_conv_block(int in_size, int in_ch, int out_ch, bool with_bn, Activation act,
                         Rng& rng) {
  NetBlock b;
  b.spec = down_spec(in_size, in_ch, out_ch);
  b.in_size = in_size;
  b.out_size = conv_output_size(in_size, b.spec.kernel_h, b.spec.stride_h, b.spec.pad_h);
  if (b.out_size <= 0) {
    throw ContractError("generator: encoder block cannot reduce spatial size " +
                        std::to_string(in_size));
  }
  b.weight = Tensor::from_values({out_ch, in_ch, 4, 4},
                                 std::vector<float>(static_cast<std::size_t>(out_ch) * in_ch * 16));
  fill_normal(b.weight, rng, kInitStd);
  b.weight.set_requires_grad(true);
  b.bias = Tensor::zeros({out_ch}, true);
  b.has_bn = with_bn;
  if (with_bn) {
    b.gamma = Tensor::full({out_ch}, 1.0f, true);
    b.beta = Tensor::zeros({out_ch}, true);
    b.bn = BatchNormState::create(out_ch);
  }
  b.act = act;
  return b;
}

/// Decoder stage inverting the geometry (kernel/stride/pad and spatial sizes)
/// of the given encoder stage.
NetBlock make_deconv_block(const NetBlock& mirror, int in_ch, int out_ch, bool with_bn,
                           Activation act, Rng& rng) {
  NetBlock b;
  b.spec = mirror.spec;
  b.spec.in_channels = in_ch;
  b.spec.out_channels = out_ch;
  b.transposed = true;
  b.in_size = mirror.out_size;
  b.out_size = mirror.in_size;
  b.weight = Tensor::from_values({in_ch, out_ch, 4, 4},
                                 std::vector<float>(static_cast<std::size_t>(in_ch) * out_ch * 16));
  fill_normal(b.weight, rng, kInitStd);
  b.weight.set_requires_grad(true);
  b.bias = Tensor::zeros({out_ch}, true);
  b.has_bn = with_bn;
  if (with_bn) {
    b.gamma = Tensor::full({out_ch}, 1.0f, true);
    b.beta = Tensor::zeros({out_ch}, true);
    b.bn = BatchNormState::create(out_ch);
  }
  b.act = act;
  return b;
}

Tensor run_block(NetBlock& b, const Tensor& x, bool training) {
  Tensor h = b.transposed
                 ? conv_transpose2d(x, b.weight, b.bias, b.spec,
                                    std::make_pair(b.out_size, b.out_size))
                 : conv2d(x, b.weight, b.bias, b.spec);
  if (b.has_bn) h = batchnorm2d(h, b.gamma, b.beta, b.bn, training);
  return activation(h, b.act, kLeakySlope);
}

void push_block_params(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
                       NetBlock& b) {
  out.emplace_back(prefix + ".weight", b.weight);
  out.emplace_back(prefix + ".bias", b.bias);
  if (b.has_bn) {
    out.emplace_back(prefix + ".gamma", b.gamma);
    out.emplace_back(prefix + ".beta", b.beta);
  }
}

void push_block_buffers(std::vector<std::pair<std::string, Tensor>>& out,
                        const std::string& prefix, NetBlock& b) {
  if (b.has_bn) {
    out.emplace_back(prefix + ".running_mean", b.bn.running_mean);
    out.emplace_back(prefix + ".running_var", b.bn.running_var);
  }
}

std::int64_t count_params(std::vector<std::pair<std::string, Tensor>> params) {
  std::int64_t n = 0;
  for (auto& [name, t] : params) n += t.numel();
  return n;
}

}  // namespace

int scaled_width(int width, double scale) {
  const auto scaled = static_cast<int>(std::llround(width * scale));
  return scaled < 1 ? 1 : scaled;
}

void GeneratorConfig::validate() const {
  if (input_channels < 1 || output_channels < 1) {
    throw ContractError("generator config: channel counts must be positive");
  }
  if (static_cast<int>(encoder_widths.size()) != kDepth) {
    throw ContractError("generator config: expected " + std::to_string(kDepth) +
                        " encoder widths, got " + std::to_string(encoder_widths.size()));
  }
  for (int w : encoder_widths) {
    if (w < 1) throw ContractError("generator config: encoder widths must be positive");
  }
  if (!(width_scale > 0.0 && width_scale <= 1.0)) {
    throw ContractError("generator config: width_scale must be in (0, 1]");
  }
  if (input_size < 2 || input_size % 2 != 0) {
    throw ContractError("generator config: input_size must be a positive even integer, got " +
                        std::to_string(input_size));
  }
}

Generator::Generator(const GeneratorConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.init_seed);

  std::vector<int> widths;
  widths.reserve(kDepth);
  for (int w : config_.encoder_widths) widths.push_back(scaled_width(w, config_.width_scale));

  int size = config_.input_size;
  int ch = config_.input_channels;
  for (int i = 0; i < kDepth; ++i) {
    encoder_.push_back(
        make_conv_block(size, ch, widths[i], /*with_bn=*/i != 0, Activation::leaky_relu, rng));
    size = encoder_.back().out_size;
    ch = widths[i];
  }

  // Decoder block j inverts encoder block 9-j (1-based). Its input is the
  // previous decoder output concatenated with encoder block 8-j's skip, and
  // its output width mirrors that skip so the two concat halves match.
  int prev_ch = widths[kDepth - 1];
  for (int j = 1; j <= kDepth; ++j) {
    const NetBlock& mirror = encoder_[kDepth - j];
    const int skip_ch = (j >= 2) ? widths[kDepth - j] : 0;
    const int in_ch = prev_ch + skip_ch;
    const bool last = (j == kDepth);
    const int out_ch = last ? config_.output_channels : widths[kDepth - 1 - j];
    decoder_.push_back(make_deconv_block(mirror, in_ch, out_ch, /*with_bn=*/!last,
                                         last ? Activation::tanh : Activation::relu, rng));
    prev_ch = out_ch;
  }
}

Tensor Generator::forward(const Tensor& x, bool training) {
  if (x.rank() != 4) {
    throw DimensionError("generator forward: input must be [N,C,H,W], got " +
                         shape_str(x.shape()));
  }
  if (x.dim(1) != config_.input_channels) {
    throw DimensionError("generator forward: channel axis (dim 1 = " + std::to_string(x.dim(1)) +
                         ") does not match config input_channels = " +
                         std::to_string(config_.input_channels));
  }
  if (x.dim(2) != config_.input_size || x.dim(3) != config_.input_size) {
    throw DimensionError("generator forward: spatial axes " + std::to_string(x.dim(2)) + "x" +
                         std::to_string(x.dim(3)) + " do not match config input_size = " +
                         std::to_string(config_.input_size));
  }

  std::vector<Tensor> skips;
  skips.reserve(kDepth);
  Tensor h = x;
  for (auto& block : encoder_) {
    h = run_block(block, h, training);
    skips.push_back(h);
  }
  for (int j = 1; j <= kDepth; ++j) {
    // Order matters: decoder-path channels first, skip channels second.
    Tensor in = (j >= 2) ? concat_channels(h, skips[kDepth - j]) : h;
    h = run_block(decoder_[j - 1], in, training);
  }
  return h;
}

std::vector<std::pair<std::string, Tensor>> Generator::parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  for (int i = 0; i < kDepth; ++i) push_block_params(out, "enc" + std::to_string(i + 1), encoder_[i]);
  for (int j = 0; j < kDepth; ++j) push_block_params(out, "dec" + std::to_string(j + 1), decoder_[j]);
  return out;
}

std::vector<std::pair<std::string, Tensor>> Generator::buffers() {
  std::vector<std::pair<std::string, Tensor>> out;
  for (int i = 0; i < kDepth; ++i) push_block_buffers(out, "enc" + std::to_string(i + 1), encoder_[i]);
  for (int j = 0; j < kDepth; ++j) push_block_buffers(out, "dec" + std::to_string(j + 1), decoder_[j]);
  return out;
}

std::int64_t Generator::parameter_count() { return count_params(parameters()); }

void FeatureExtractorConfig::validate() const {
  if (input_channels < 1) throw ContractError("extractor config: input_channels must be positive");
  if (widths.empty()) throw ContractError("extractor config: at least one layer required");
  if (strides.size() != widths.size() || pads.size() != widths.size()) {
    throw ContractError("extractor config: widths, strides and pads must have equal length");
  }
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] < 1) throw ContractError("extractor config: widths must be positive");
    if (strides[i] < 1) throw ContractError("extractor config: strides must be positive");
    if (pads[i] < 0) throw ContractError("extractor config: pads must be non-negative");
  }
  if (!(width_scale > 0.0 && width_scale <= 1.0)) {
    throw ContractError("extractor config: width_scale must be in (0, 1]");
  }
}

FeatureExtractor::FeatureExtractor(const FeatureExtractorConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.init_seed);
  int ch = config_.input_channels;
  for (std::size_t i = 0; i < config_.widths.size(); ++i) {
    const int out_ch = scaled_width(config_.widths[i], config_.width_scale);
    NetBlock b;
    b.spec = ConvSpec::square(4, config_.strides[i], config_.pads[i], ch, out_ch);
    b.weight = Tensor::from_values(
        {out_ch, ch, 4, 4}, std::vector<float>(static_cast<std::size_t>(out_ch) * ch * 16));
    fill_normal(b.weight, rng, kInitStd);
    b.weight.set_requires_grad(true);
    b.bias = Tensor::zeros({out_ch}, true);
    b.gamma = Tensor::full({out_ch}, 1.0f, true);
    b.beta = Tensor::zeros({out_ch}, true);
    b.bn = BatchNormState::create(out_ch);
    b.act = Activation::leaky_relu;
    layers_.push_back(std::move(b));
    ch = out_ch;
  }
}

FeaturePyramid FeatureExtractor::forward(const Tensor& condition, const Tensor& seg,
                                         bool training) {
  if (condition.rank() != 4 || seg.rank() != 4) {
    throw DimensionError("feature extractor: condition and segmentation must be [N,C,H,W]");
  }
  if (condition.dim(0) != seg.dim(0) || condition.dim(2) != seg.dim(2) ||
      condition.dim(3) != seg.dim(3)) {
    throw DimensionError("feature extractor: condition " + shape_str(condition.shape()) +
                         " and segmentation " + shape_str(seg.shape()) +
                         " disagree on batch or spatial axes");
  }
  return forward_features(concat_channels(condition, seg), training);
}

FeaturePyramid FeatureExtractor::forward_features(const Tensor& input, bool training) {
  if (input.rank() != 4 || input.dim(1) != config_.input_channels) {
    throw DimensionError("feature extractor: expected " +
                         std::to_string(config_.input_channels) + " input channels, got shape " +
                         shape_str(input.shape()));
  }
  FeaturePyramid pyr;
  Tensor h = input;
  for (auto& block : layers_) {
    h = run_block(block, h, training);
    pyr.layers.push_back(h);
  }
  return pyr;
}

std::vector<std::pair<std::string, Tensor>> FeatureExtractor::parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    push_block_params(out, "layer" + std::to_string(i + 1), layers_[i]);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> FeatureExtractor::buffers() {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    push_block_buffers(out, "layer" + std::to_string(i + 1), layers_[i]);
  }
  return out;
}

std::int64_t FeatureExtractor::parameter_count() { return count_params(parameters()); }

void FeatureExtractor::set_trainable(bool trainable) {
  for (auto& [name, t] : parameters()) t.set_requires_grad(trainable);
}

}  // namespace odcs
