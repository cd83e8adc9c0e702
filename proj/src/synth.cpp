#include "odcs/synth.hpp"

#include <algorithm>
#include <cmath>

namespace odcs {

namespace {

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.below(static_cast<std::uint32_t>(hi - lo + 1)));
}

std::uint8_t clamp_byte(long v) {
  return static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
}

bool inside_ellipse(int x, int y, int cx, int cy, int rx, int ry) {
  const std::int64_t dx = x - cx, dy = y - cy;
  return dx * dx * static_cast<std::int64_t>(ry) * ry +
             dy * dy * static_cast<std::int64_t>(rx) * rx <=
         static_cast<std::int64_t>(rx) * rx * ry * ry;
}

}  // namespace

SynthSample synth_sample(std::uint64_t seed, int size) {
  if (size < 32) {
    throw ContractError("synth_sample: size must be at least 32, got " + std::to_string(size));
  }
  Rng rng(seed, 0x0dc5u);

  SynthSample s;
  SynthParams& p = s.params;
  p.size = size;

  const int jitter = size / 16;
  p.center_x = size / 2 + uniform_int(rng, -jitter, jitter);
  p.center_y = size / 2 + uniform_int(rng, -jitter, jitter);
  p.disc_rx = uniform_int(rng, size / 8, size / 5);
  p.disc_ry = uniform_int(rng, size / 8, size / 5);
  const double ratio = rng.uniform(0.3, 0.7);
  const auto cup_axis = [&](int disc_axis) {
    const int axis = static_cast<int>(std::lround(ratio * disc_axis));
    return std::clamp(axis, 1, disc_axis - 2);
  };
  p.cup_rx = cup_axis(p.disc_rx);
  p.cup_ry = cup_axis(p.disc_ry);
  p.cdr = static_cast<double>(p.cup_ry) / p.disc_ry;

  const int bg[3] = {uniform_int(rng, 150, 190), uniform_int(rng, 60, 90),
                     uniform_int(rng, 40, 70)};
  const int disc[3] = {uniform_int(rng, 215, 235), uniform_int(rng, 150, 185),
                       uniform_int(rng, 100, 130)};
  const int cup[3] = {uniform_int(rng, 235, 250), uniform_int(rng, 190, 220),
                      uniform_int(rng, 140, 170)};

  s.image.width = s.image.height = size;
  s.image.pixels.resize(static_cast<std::size_t>(size) * size * 3);
  s.mask.width = s.mask.height = size;
  s.mask.labels.resize(static_cast<std::size_t>(size) * size);

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * size + x;
      const int* color;
      if (inside_ellipse(x, y, p.center_x, p.center_y, p.cup_rx, p.cup_ry)) {
        s.mask.labels[idx] = MaskClass::cup;
        color = cup;
      } else if (inside_ellipse(x, y, p.center_x, p.center_y, p.disc_rx, p.disc_ry)) {
        s.mask.labels[idx] = MaskClass::disc;
        color = disc;
      } else {
        s.mask.labels[idx] = MaskClass::background;
        color = bg;
      }
      // Gentle radial falloff keeps the background from looking flat.
      const std::int64_t dx = x - size / 2, dy = y - size / 2;
      const long shade = std::lround(-18.0 * static_cast<double>(dx * dx + dy * dy) /
                                     (static_cast<double>(size) * size));
      for (int c = 0; c < 3; ++c) {
        const int noise = uniform_int(rng, -8, 8);
        s.image.pixels[idx * 3 + c] = clamp_byte(color[c] + shade + noise);
      }
    }
  }

  const int margin = size / 8;
  const int side = std::min(size, 2 * std::max(p.disc_rx, p.disc_ry) + margin * 2);
  const auto cl = [&](int v) { return std::clamp(v, 0, size - side); };
  s.roi = RoiBox{cl(p.center_x - side / 2), cl(p.center_y - side / 2), side, side};
  return s;
}

}  // namespace odcs
