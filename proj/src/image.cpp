#include "odcs/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace odcs {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed on '" + path + "'");
  return bytes;
}

void write_file(const std::string& path, const std::uint8_t* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw IoError("write failed on '" + path + "'");
}

bool is_pbm_space(std::uint8_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

/// Parses a netpbm header ("P6"/"P5", width, height, maxval, one whitespace
/// byte) and returns the payload offset. Throws ParseError at the offending
/// byte on malformed input.
struct PbmHeader {
  int width = 0, height = 0;
  std::size_t payload = 0;
};

PbmHeader parse_pbm_header(const std::vector<std::uint8_t>& bytes, const char* magic) {
  std::size_t pos = 0;
  if (bytes.size() < 2 || bytes[0] != static_cast<std::uint8_t>(magic[0]) ||
      bytes[1] != static_cast<std::uint8_t>(magic[1])) {
    throw ParseError(std::string("expected magic '") + magic + "'", 0);
  }
  pos = 2;

  auto skip_space = [&]() {
    for (;;) {
      while (pos < bytes.size() && is_pbm_space(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      return;
    }
  };
  auto parse_int = [&](const char* what) {
    skip_space();
    if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9') {
      throw ParseError(std::string("expected ") + what + " in header", pos);
    }
    const std::size_t start = pos;
    long value = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      value = value * 10 + (bytes[pos] - '0');
      if (value > 1'000'000'000L) throw ParseError(std::string(what) + " out of range", start);
      ++pos;
    }
    return value;
  };

  PbmHeader h;
  h.width = static_cast<int>(parse_int("width"));
  h.height = static_cast<int>(parse_int("height"));
  if (h.width <= 0 || h.height <= 0) {
    throw ParseError("width and height must be positive", 2);
  }
  const std::size_t maxval_at = [&] {
    skip_space();
    return pos;
  }();
  const long maxval = parse_int("max value");
  if (maxval != 255) {
    throw ParseError("unsupported max value " + std::to_string(maxval) + " (must be 255)",
                     maxval_at);
  }
  if (pos >= bytes.size() || !is_pbm_space(bytes[pos])) {
    throw ParseError("expected single whitespace before payload", pos);
  }
  h.payload = pos + 1;
  return h;
}

void check_payload(const std::vector<std::uint8_t>& bytes, std::size_t payload,
                   std::size_t expected) {
  const std::size_t have = bytes.size() - payload;
  if (have < expected) {
    throw ParseError("truncated payload: expected " + std::to_string(expected) + " bytes, got " +
                     std::to_string(have),
                     bytes.size());
  }
  if (have > expected) {
    throw ParseError("trailing bytes after payload", payload + expected);
  }
}

std::uint8_t clamp_byte(long v) {
  return static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
}

/// Bilinear sample of one channel at (sx, sy), clamped to the given rectangle.
double bilinear_in_box(const std::uint8_t* pixels, int stride_px, int channels, int channel,
                       double sx, double sy, int x_lo, int x_hi, int y_lo, int y_hi) {
  const double fx0 = std::floor(sx), fy0 = std::floor(sy);
  const double wx = sx - fx0, wy = sy - fy0;
  const auto cl = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  const int x0 = cl(static_cast<int>(fx0), x_lo, x_hi);
  const int x1 = cl(static_cast<int>(fx0) + 1, x_lo, x_hi);
  const int y0 = cl(static_cast<int>(fy0), y_lo, y_hi);
  const int y1 = cl(static_cast<int>(fy0) + 1, y_lo, y_hi);
  const auto at = [&](int x, int y) {
    return static_cast<double>(pixels[(static_cast<std::size_t>(y) * stride_px + x) * channels +
                                      channel]);
  };
  return (1.0 - wy) * ((1.0 - wx) * at(x0, y0) + wx * at(x1, y0)) +
         wy * ((1.0 - wx) * at(x0, y1) + wx * at(x1, y1));
}

}  // namespace

FundusImage read_ppm(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  const PbmHeader h = parse_pbm_header(bytes, "P6");
  FundusImage img;
  img.width = h.width;
  img.height = h.height;
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height * 3;
  check_payload(bytes, h.payload, n);
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload), bytes.end());
  return img;
}

void write_ppm(const FundusImage& image, const std::string& path) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw ContractError("write_ppm: pixel buffer does not match " + std::to_string(image.width) +
                        "x" + std::to_string(image.height));
  }
  char header[64];
  const int len = std::snprintf(header, sizeof header, "P6\n%d %d\n255\n", image.width,
                                image.height);
  std::vector<std::uint8_t> bytes(header, header + len);
  bytes.insert(bytes.end(), image.pixels.begin(), image.pixels.end());
  write_file(path, bytes.data(), bytes.size());
}

GrayImage read_pgm(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  const PbmHeader h = parse_pbm_header(bytes, "P5");
  GrayImage img;
  img.width = h.width;
  img.height = h.height;
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  check_payload(bytes, h.payload, n);
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload), bytes.end());
  return img;
}

void write_pgm(const GrayImage& image, const std::string& path) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw ContractError("write_pgm: pixel buffer does not match " + std::to_string(image.width) +
                        "x" + std::to_string(image.height));
  }
  char header[64];
  const int len = std::snprintf(header, sizeof header, "P5\n%d %d\n255\n", image.width,
                                image.height);
  std::vector<std::uint8_t> bytes(header, header + len);
  bytes.insert(bytes.end(), image.pixels.begin(), image.pixels.end());
  write_file(path, bytes.data(), bytes.size());
}

MaskDecodeResult decode_mask(const GrayImage& gray) {
  MaskDecodeResult r;
  r.mask.width = gray.width;
  r.mask.height = gray.height;
  r.mask.labels.reserve(gray.pixels.size());
  for (std::uint8_t v : gray.pixels) {
    MaskClass c;
    if (v == 0) {
      c = MaskClass::cup;
    } else if (v == 128) {
      c = MaskClass::disc;
    } else if (v == 255) {
      c = MaskClass::background;
    } else {
      // Snap to the nearest code; equidistant values take the lower code.
      const int d_cup = v, d_disc = std::abs(v - 128), d_bg = 255 - v;
      if (d_cup <= d_disc && d_cup <= d_bg) {
        c = MaskClass::cup;
      } else if (d_disc <= d_bg) {
        c = MaskClass::disc;
      } else {
        c = MaskClass::background;
      }
      ++r.snapped;
    }
    r.mask.labels.push_back(c);
  }
  return r;
}

GrayImage encode_mask(const SegmentationMask& mask) {
  GrayImage g;
  g.width = mask.width;
  g.height = mask.height;
  g.pixels.reserve(mask.labels.size());
  for (MaskClass c : mask.labels) {
    g.pixels.push_back(c == MaskClass::cup ? 0 : (c == MaskClass::disc ? 128 : 255));
  }
  return g;
}

Tensor mask_to_target(const SegmentationMask& mask) {
  Tensor t = Tensor::zeros({1, mask.height, mask.width});
  std::span<float> v = t.values();
  for (std::size_t i = 0; i < mask.labels.size(); ++i) {
    v[i] = mask.labels[i] == MaskClass::cup ? -1.0f
                                            : (mask.labels[i] == MaskClass::disc ? 0.0f : 1.0f);
  }
  return t;
}

SegmentationMask target_to_mask(const Tensor& target) {
  if (target.rank() != 3 || target.dim(0) != 1) {
    throw DimensionError("target_to_mask: expected [1,H,W], got " + shape_str(target.shape()));
  }
  SegmentationMask m;
  m.height = target.dim(1);
  m.width = target.dim(2);
  m.labels.reserve(static_cast<std::size_t>(m.width) * m.height);
  constexpr float kThird = 1.0f / 3.0f;
  for (float v : target.values()) {
    m.labels.push_back(v < -kThird ? MaskClass::cup
                                   : (v > kThird ? MaskClass::background : MaskClass::disc));
  }
  return m;
}

Tensor image_to_tensor(const FundusImage& image) {
  Tensor t = Tensor::zeros({3, image.height, image.width});
  std::span<float> v = t.values();
  const std::size_t hw = static_cast<std::size_t>(image.width) * image.height;
  for (std::size_t i = 0; i < hw; ++i) {
    for (int c = 0; c < 3; ++c) {
      v[c * hw + i] = static_cast<float>(image.pixels[i * 3 + c]) * (2.0f / 255.0f) - 1.0f;
    }
  }
  return t;
}

bool cup_inside_disc(const SegmentationMask& mask) {
  const auto at = [&](int x, int y) {
    return mask.labels[static_cast<std::size_t>(y) * mask.width + x];
  };
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (at(x, y) != MaskClass::cup) continue;
      const int nx[4] = {x - 1, x + 1, x, x};
      const int ny[4] = {y, y, y - 1, y + 1};
      for (int k = 0; k < 4; ++k) {
        if (nx[k] < 0 || nx[k] >= mask.width || ny[k] < 0 || ny[k] >= mask.height) return false;
        if (at(nx[k], ny[k]) == MaskClass::background) return false;
      }
    }
  }
  return true;
}

void validate_box(const RoiBox& box, int width, int height, const char* op) {
  if (box.w <= 0 || box.h <= 0 || box.x < 0 || box.y < 0 || box.x + box.w > width ||
      box.y + box.h > height) {
    throw ContractError(std::string(op) + ": box [x=" + std::to_string(box.x) +
                        ", y=" + std::to_string(box.y) + ", w=" + std::to_string(box.w) +
                        ", h=" + std::to_string(box.h) + "] outside image bounds " +
                        std::to_string(width) + "x" + std::to_string(height));
  }
}

FundusImage crop_roi(const FundusImage& image, const RoiBox& box, int out_size) {
  validate_box(box, image.width, image.height, "crop_roi");
  if (out_size <= 0) throw ContractError("crop_roi: out_size must be positive");
  FundusImage out;
  out.width = out.height = out_size;
  out.pixels.resize(static_cast<std::size_t>(out_size) * out_size * 3);
  const double sx = static_cast<double>(box.w) / out_size;
  const double sy = static_cast<double>(box.h) / out_size;
  for (int i = 0; i < out_size; ++i) {
    const double src_y = box.y + (i + 0.5) * sy - 0.5;
    for (int j = 0; j < out_size; ++j) {
      const double src_x = box.x + (j + 0.5) * sx - 0.5;
      for (int c = 0; c < 3; ++c) {
        const double v =
            bilinear_in_box(image.pixels.data(), image.width, 3, c, src_x, src_y, box.x,
                            box.x + box.w - 1, box.y, box.y + box.h - 1);
        out.pixels[(static_cast<std::size_t>(i) * out_size + j) * 3 + c] =
            clamp_byte(std::lround(v));
      }
    }
  }
  return out;
}

SegmentationMask crop_roi(const SegmentationMask& mask, const RoiBox& box, int out_size) {
  validate_box(box, mask.width, mask.height, "crop_roi");
  if (out_size <= 0) throw ContractError("crop_roi: out_size must be positive");
  SegmentationMask out;
  out.width = out.height = out_size;
  out.labels.resize(static_cast<std::size_t>(out_size) * out_size);
  for (int i = 0; i < out_size; ++i) {
    const int src_y = box.y + static_cast<int>(static_cast<std::int64_t>(i) * box.h / out_size);
    for (int j = 0; j < out_size; ++j) {
      const int src_x = box.x + static_cast<int>(static_cast<std::int64_t>(j) * box.w / out_size);
      out.labels[static_cast<std::size_t>(i) * out_size + j] =
          mask.labels[static_cast<std::size_t>(src_y) * mask.width + src_x];
    }
  }
  return out;
}

RoiBox detect_roi(const FundusImage& image) {
  if (image.width <= 0 || image.height <= 0) {
    throw ContractError("detect_roi: empty image");
  }
  const int side = std::max(1, static_cast<int>(std::lround(0.4 * std::min(image.width,
                                                                           image.height))));
  const auto centered = [&] {
    return RoiBox{(image.width - side) / 2, (image.height - side) / 2, side, side};
  };

  const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
  std::uint32_t hist[256] = {};
  for (std::size_t i = 0; i < n; ++i) ++hist[image.pixels[i * 3 + 1]];

  int lo = 0, hi = 255;
  while (lo < 256 && hist[lo] == 0) ++lo;
  while (hi >= 0 && hist[hi] == 0) --hi;
  if (lo >= hi) return centered();  // flat green channel: no usable signal

  // Smallest threshold t whose tail count reaches 2% of the pixels.
  const std::size_t want = (n + 49) / 50;
  std::size_t count = 0;
  int threshold = hi;
  for (int t = hi; t >= 0; --t) {
    count += hist[t];
    threshold = t;
    if (count >= want) break;
  }

  double cx = 0.0, cy = 0.0;
  std::size_t hits = 0;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (image.pixels[(static_cast<std::size_t>(y) * image.width + x) * 3 + 1] >= threshold) {
        cx += x;
        cy += y;
        ++hits;
      }
    }
  }
  if (hits == 0) return centered();
  const int bx = static_cast<int>(std::lround(cx / hits)) - side / 2;
  const int by = static_cast<int>(std::lround(cy / hits)) - side / 2;
  const auto cl = [](int v, int hi2) { return v < 0 ? 0 : (v > hi2 ? hi2 : v); };
  return RoiBox{cl(bx, image.width - side), cl(by, image.height - side), side, side};
}

FundusImage hflip(const FundusImage& image) {
  FundusImage out = image;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.pixels[(static_cast<std::size_t>(y) * image.width + x) * 3 + c] =
            image.pixels[(static_cast<std::size_t>(y) * image.width + (image.width - 1 - x)) * 3 +
                         c];
      }
    }
  }
  return out;
}

SegmentationMask hflip(const SegmentationMask& mask) {
  SegmentationMask out = mask;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      out.labels[static_cast<std::size_t>(y) * mask.width + x] =
          mask.labels[static_cast<std::size_t>(y) * mask.width + (mask.width - 1 - x)];
    }
  }
  return out;
}

FundusImage vflip(const FundusImage& image) {
  FundusImage out = image;
  const std::size_t row = static_cast<std::size_t>(image.width) * 3;
  for (int y = 0; y < image.height; ++y) {
    std::copy_n(image.pixels.begin() + static_cast<std::ptrdiff_t>((image.height - 1 - y) * row),
                row, out.pixels.begin() + static_cast<std::ptrdiff_t>(y * row));
  }
  return out;
}

SegmentationMask vflip(const SegmentationMask& mask) {
  SegmentationMask out = mask;
  for (int y = 0; y < mask.height; ++y) {
    std::copy_n(mask.labels.begin() +
                    static_cast<std::ptrdiff_t>((mask.height - 1 - y) * mask.width),
                mask.width, out.labels.begin() + static_cast<std::ptrdiff_t>(y * mask.width));
  }
  return out;
}

FundusImage apply_illumination(const FundusImage& image, float gain) {
  if (!(gain > 0.0f)) throw ContractError("apply_illumination: gain must be positive");
  FundusImage out = image;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = clamp_byte(std::lround(static_cast<double>(image.pixels[i]) * gain));
  }
  return out;
}

FundusImage scale_about_center(const FundusImage& image, float s) {
  if (!(s > 0.0f)) throw ContractError("scale_about_center: factor must be positive");
  FundusImage out = image;
  const double cx = (image.width - 1) / 2.0, cy = (image.height - 1) / 2.0;
  for (int y = 0; y < image.height; ++y) {
    const double sy = cy + (y - cy) / s;
    for (int x = 0; x < image.width; ++x) {
      const double sx = cx + (x - cx) / s;
      for (int c = 0; c < 3; ++c) {
        double v = 0.0;  // black outside the source
        if (sx >= -0.5 && sx <= image.width - 0.5 && sy >= -0.5 && sy <= image.height - 0.5) {
          v = bilinear_in_box(image.pixels.data(), image.width, 3, c, sx, sy, 0, image.width - 1,
                              0, image.height - 1);
        }
        out.pixels[(static_cast<std::size_t>(y) * image.width + x) * 3 + c] =
            clamp_byte(std::lround(v));
      }
    }
  }
  return out;
}

SegmentationMask scale_about_center(const SegmentationMask& mask, float s) {
  if (!(s > 0.0f)) throw ContractError("scale_about_center: factor must be positive");
  SegmentationMask out = mask;
  const double cx = (mask.width - 1) / 2.0, cy = (mask.height - 1) / 2.0;
  for (int y = 0; y < mask.height; ++y) {
    const long sy = std::lround(cy + (y - cy) / s);
    for (int x = 0; x < mask.width; ++x) {
      const long sx = std::lround(cx + (x - cx) / s);
      out.labels[static_cast<std::size_t>(y) * mask.width + x] =
          (sx >= 0 && sx < mask.width && sy >= 0 && sy < mask.height)
              ? mask.labels[static_cast<std::size_t>(sy) * mask.width + sx]
              : MaskClass::background;
    }
  }
  return out;
}

std::pair<FundusImage, SegmentationMask> augment(const FundusImage& image,
                                                 const SegmentationMask& mask,
                                                 const AugmentOptions& options,
                                                 std::uint64_t seed) {
  if (image.width != mask.width || image.height != mask.height) {
    throw DimensionError("augment: image " + std::to_string(image.width) + "x" +
                         std::to_string(image.height) + " and mask " +
                         std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                         " differ");
  }
  Rng rng(seed);
  FundusImage img = image;
  SegmentationMask m = mask;
  if (options.hflip && rng.coin()) {
    img = hflip(img);
    m = hflip(m);
  }
  if (options.vflip && rng.coin()) {
    img = vflip(img);
    m = vflip(m);
  }
  if (options.scale) {
    if (!(options.scale_lo > 0.0f) || options.scale_hi < options.scale_lo) {
      throw ContractError("augment: invalid scale range");
    }
    const float s = static_cast<float>(rng.uniform(options.scale_lo, options.scale_hi));
    img = scale_about_center(img, s);
    m = scale_about_center(m, s);
  }
  if (options.illumination) {
    if (!(options.illum_lo > 0.0f) || options.illum_hi < options.illum_lo) {
      throw ContractError("augment: invalid illumination range");
    }
    const float g = static_cast<float>(rng.uniform(options.illum_lo, options.illum_hi));
    img = apply_illumination(img, g);
  }
  return {std::move(img), std::move(m)};
}

}  // namespace odcs
