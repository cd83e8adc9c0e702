#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "odcs/rng.hpp"
#include "odcs/tensor.hpp"

namespace odcs {

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct FundusImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

/// 8-bit single-channel raster.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

enum class MaskClass : std::uint8_t { cup = 0, disc = 1, background = 2 };

struct SegmentationMask {
  int width = 0;
  int height = 0;
  std::vector<MaskClass> labels;
};

/// Rectangle in source-pixel coordinates.
struct RoiBox {
  int x = 0, y = 0, w = 0, h = 0;
};

// --- PPM (P6) / PGM (P5) ---------------------------------------------------
// Binary netpbm only, max value 255. Malformed content raises ParseError
// carrying the byte offset of the problem; filesystem failures raise IoError.

FundusImage read_ppm(const std::string& path);
void write_ppm(const FundusImage& image, const std::string& path);
GrayImage read_pgm(const std::string& path);
void write_pgm(const GrayImage& image, const std::string& path);

// --- Mask codecs -------------------------------------------------------------
// Gray codes: 0 = cup, 128 = disc, 255 = background. Other values snap to the
// nearest of the three; the decode result reports how many pixels snapped.

struct MaskDecodeResult {
  SegmentationMask mask;
  int snapped = 0;
};

MaskDecodeResult decode_mask(const GrayImage& gray);
GrayImage encode_mask(const SegmentationMask& mask);

/// Continuous target encoding: cup -> -1, disc -> 0, background -> +1.
Tensor mask_to_target(const SegmentationMask& mask);  // [1,H,W]
/// Inverse thresholds at -1/3 and +1/3.
SegmentationMask target_to_mask(const Tensor& target);  // accepts [1,H,W]

/// RGB bytes scaled to [-1, 1], shape [3,H,W].
Tensor image_to_tensor(const FundusImage& image);

/// Anatomical containment: every cup pixel's 4-neighbours are cup or disc,
/// so the cup never touches the background (or the border) directly.
/// Vacuously true when the cup is empty.
bool cup_inside_disc(const SegmentationMask& mask);

// --- ROI --------------------------------------------------------------------

void validate_box(const RoiBox& box, int width, int height, const char* op);

/// Resamples the box to out_size x out_size: bilinear for images (centre
/// aligned, so a full-image box at native size is the identity), nearest
/// neighbour with the top-left sample rule for masks.
FundusImage crop_roi(const FundusImage& image, const RoiBox& box, int out_size);
SegmentationMask crop_roi(const SegmentationMask& mask, const RoiBox& box, int out_size);

/// Default heuristic detector: a square box, side 40% of min(width, height),
/// centred on the centroid of the brightest 2% of green-channel pixels and
/// clamped into bounds. A degenerate image (all pixels identical) gets the
/// centred box.
RoiBox detect_roi(const FundusImage& image);

// --- Augmentation ------------------------------------------------------------

struct AugmentOptions {
  bool hflip = true;
  bool vflip = true;
  bool scale = true;
  bool illumination = true;
  float scale_lo = 0.9f, scale_hi = 1.1f;
  float illum_lo = 0.8f, illum_hi = 1.2f;
};

FundusImage hflip(const FundusImage& image);
SegmentationMask hflip(const SegmentationMask& mask);
FundusImage vflip(const FundusImage& image);
SegmentationMask vflip(const SegmentationMask& mask);

/// Per-channel multiply by gain, rounded and clamped to [0, 255].
FundusImage apply_illumination(const FundusImage& image, float gain);

/// Resamples by factor s about the image centre, keeping the output size:
/// bilinear with black padding for images, nearest (round to nearest source
/// pixel) with background padding for masks.
FundusImage scale_about_center(const FundusImage& image, float s);
SegmentationMask scale_about_center(const SegmentationMask& mask, float s);

/// Applies the enabled operations with randomness drawn from the seed, in the
/// fixed order hflip, vflip, scale, illumination. Flips toss a coin; scale and
/// illumination draw uniformly from their ranges. Geometry is applied to image
/// and mask identically; illumination touches only the image.
std::pair<FundusImage, SegmentationMask> augment(const FundusImage& image,
                                                 const SegmentationMask& mask,
                                                 const AugmentOptions& options,
                                                 std::uint64_t seed);

}  // namespace odcs
