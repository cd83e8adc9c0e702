#pragma once

#include <cstdint>

#include "odcs/image.hpp"

namespace odcs {

/// Parameters drawn for one synthetic sample, recorded so tests can compare
/// rasterized geometry against the intended geometry.
struct SynthParams {
  int size = 0;
  int center_x = 0, center_y = 0;  // shared by disc and cup (concentric)
  int disc_rx = 0, disc_ry = 0;    // semi-axes in pixels
  int cup_rx = 0, cup_ry = 0;
  double cdr = 0.0;  // cup_ry / disc_ry
};

struct SynthSample {
  FundusImage image;
  SegmentationMask mask;
  RoiBox roi;  // ground-truth box around the disc
  SynthParams params;
};

/// Deterministic synthetic fundus: reddish textured background, a brighter
/// elliptical disc, a concentric brighter cup strictly inside it, mild pixel
/// noise. The mask is exact by construction. Requires size >= 32.
SynthSample synth_sample(std::uint64_t seed, int size);

}  // namespace odcs
