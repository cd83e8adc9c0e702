#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "odcs/ops.hpp"
#include "odcs/tensor.hpp"

namespace odcs {

/// Nominal channel width scaled for desk-scale runs, never below one channel.
int scaled_width(int width, double scale);

struct GeneratorConfig {
  int input_channels = 3;
  int output_channels = 1;
  std::vector<int> encoder_widths{32, 64, 128, 256, 256, 256, 256, 256};
  double width_scale = 1.0;
  int input_size = 256;
  std::uint64_t init_seed = 0;

  /// Throws ContractError when a field is out of range or the block geometry
  /// cannot be constructed for input_size.
  void validate() const;
};

/// One encoder or decoder stage: conv (or transposed conv) -> optional
/// batchnorm -> activation. Weight layouts follow ConvSpec's convention.
struct NetBlock {
  ConvSpec spec;
  Tensor weight;
  Tensor bias;
  bool transposed = false;
  bool has_bn = true;
  Tensor gamma, beta;
  BatchNormState bn;
  Activation act = Activation::leaky_relu;
  int in_size = 0;   // spatial input side
  int out_size = 0;  // spatial output side
};

/// The 8-down/8-up U-shaped generator. Encoder block i (1-based) feeds its
/// output both down the spine and, for i = 1..7, as a skip concatenated in
/// front of decoder block 9-i's input; decoder block j inverts encoder block
/// 9-j's spatial geometry. Blocks whose input is already 1x1 widen the
/// padding to 2 so the 4x4/stride-2 kernel keeps the size at 1x1, which lets
/// the depth stay at 8 for inputs smaller than 256.
class Generator {
 public:
  explicit Generator(const GeneratorConfig& config);

  /// [N,3,S,S] -> [N,1,S,S], every element in (-1, 1).
  Tensor forward(const Tensor& x, bool training);

  const GeneratorConfig& config() const { return config_; }
  const std::vector<NetBlock>& encoder() const { return encoder_; }
  const std::vector<NetBlock>& decoder() const { return decoder_; }
  std::vector<NetBlock>& encoder() { return encoder_; }
  std::vector<NetBlock>& decoder() { return decoder_; }

  /// Trainable tensors as (name, tensor) pairs: enc1.weight, enc2.gamma, ...
  std::vector<std::pair<std::string, Tensor>> parameters();
  /// Running batchnorm statistics: enc2.running_mean, ...
  std::vector<std::pair<std::string, Tensor>> buffers();
  std::int64_t parameter_count();

 private:
  GeneratorConfig config_;
  std::vector<NetBlock> encoder_;
  std::vector<NetBlock> decoder_;
};

struct FeatureExtractorConfig {
  int input_channels = 4;  // 3-channel condition image + 1-channel segmentation
  std::vector<int> widths{32, 64, 128, 256};
  std::vector<int> strides{2, 2, 2, 1};
  std::vector<int> pads{1, 1, 1, 1};
  double width_scale = 1.0;
  std::uint64_t init_seed = 0;

  void validate() const;
};

/// Ordered per-layer feature maps of the extractor, shallow to deep.
struct FeaturePyramid {
  std::vector<Tensor> layers;
};

/// The conditioned feature extractor: a stack of conv 4x4 -> batchnorm ->
/// leaky-ReLU blocks over concat(condition, segmentation). Four layers with
/// widths (32,64,128,256) by default; fewer layers are allowed so tests can
/// build single-layer extractors.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const FeatureExtractorConfig& config);

  FeaturePyramid forward(const Tensor& condition, const Tensor& seg, bool training);
  /// Same, on an already-concatenated input.
  FeaturePyramid forward_features(const Tensor& input, bool training);

  const FeatureExtractorConfig& config() const { return config_; }
  const std::vector<NetBlock>& layers() const { return layers_; }
  std::vector<NetBlock>& layers() { return layers_; }

  std::vector<std::pair<std::string, Tensor>> parameters();
  std::vector<std::pair<std::string, Tensor>> buffers();
  std::int64_t parameter_count();

  /// Marks every parameter trainable or frozen.
  void set_trainable(bool trainable);

 private:
  FeatureExtractorConfig config_;
  std::vector<NetBlock> layers_;
};

}  // namespace odcs
