#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "odcs/checkpoint.hpp"
#include "odcs/config.hpp"
#include "odcs/image.hpp"
#include "odcs/losses.hpp"
#include "odcs/metrics.hpp"
#include "odcs/network.hpp"
#include "odcs/optim.hpp"

namespace odcs {

struct ManifestRecord {
  std::string image_path;
  std::string mask_path;
  std::optional<RoiBox> roi;
};

/// One record per line: image_path,mask_path[,x,y,w,h]; '#' starts a comment.
/// Relative paths are resolved against the manifest's directory; referenced
/// files must exist.
std::vector<ManifestRecord> read_manifest(const std::string& path);
void write_manifest(const std::vector<ManifestRecord>& records, const std::string& path);

/// Generator plus feature extractor wired from one TrainConfig, with the
/// naming scheme ("gen.enc1.weight", "fx.layer1.gamma", ...) the checkpoint
/// format uses.
struct Model {
  Generator gen;
  FeatureExtractor fx;

  static Model create(const TrainConfig& cfg);

  /// All parameters and running statistics, in checkpoint order.
  std::vector<std::pair<std::string, Tensor>> state();
  /// Parameters the optimizer updates (extractor only when trainable).
  std::vector<std::pair<std::string, Tensor>> trainable(const TrainConfig& cfg);
  /// Copies checkpoint tensors into the model; every model tensor must be
  /// present with a matching shape.
  void load_state(const Checkpoint& ckpt);
};

struct TrainResult {
  std::string last_checkpoint;
  std::string loss_log;
  std::int64_t steps = 0;
  float last_dice = 0.0f;
  float last_mfm = 0.0f;
  float last_total = 0.0f;
};

/// The full training loop: per step, assemble a batch (augmented, with
/// `workers` threads), run the generator, evaluate the total loss, backward,
/// Adam; per epoch, shuffle the manifest order and write a checkpoint.
/// Fully deterministic in (config, seed, data). `resume_path`, when given,
/// must hold a checkpoint whose config matches except possibly `epochs`; the
/// loss log is truncated back to the checkpoint's step so a resumed run's log
/// is byte-identical to an uninterrupted one.
TrainResult run_train(const std::string& config_path, const std::string& resume_path,
                      int workers);

/// Loads a checkpoint, predicts every manifest image at ROI resolution and
/// scores it against the ROI-cropped truth mask.
EvalReport run_eval(const std::string& ckpt_path, const std::string& manifest_path);

struct PredictResult {
  RoiBox roi;
  std::string mask_path;
};

/// Predicts one image. The ROI comes from `roi` when given, else from
/// detect_roi. The S x S prediction is re-projected onto the source
/// resolution (nearest neighbour) and written as P5; `overlay_path`, when
/// non-empty, gets a P6 copy of the source with cup/disc tinted.
PredictResult run_predict(const std::string& ckpt_path, const std::string& image_path,
                          std::optional<RoiBox> roi, const std::string& out_path,
                          const std::string& overlay_path);

/// Writes `count` synthetic samples (img_NNN.ppm / msk_NNN.pgm) plus
/// manifest.txt with the ground-truth ROI boxes into out_dir.
std::string run_synth(const std::string& out_dir, int count, int size, std::uint64_t seed);

}  // namespace odcs
