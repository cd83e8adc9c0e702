#include "odcs/losses.hpp"

#include <vector>

#include "odcs/ops.hpp"

namespace odcs {

namespace {

bool recording_wanted(const Tensor& a, const Tensor& b) {
  return active_graph() && (a.requires_grad() || b.requires_grad());
}

}  // namespace

Tensor generalized_dice(const Tensor& a, const Tensor& b, float smooth) {
  if (a.shape() != b.shape()) {
    throw DimensionError("generalized_dice: shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
  if (!(smooth > 0.0f)) throw ContractError("generalized_dice: smooth must be positive");

  double num = 0.0, den = static_cast<double>(smooth);
  {
    std::span<const float> av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
      num += 2.0 * static_cast<double>(av[i]) * bv[i];
      den += static_cast<double>(av[i]) * av[i] + static_cast<double>(bv[i]) * bv[i];
    }
  }
  const double dice = num / den;
  Tensor out = Tensor::scalar(static_cast<float>(dice));
  check_finite(out, "generalized_dice");

  if (recording_wanted(a, b)) {
    out.set_requires_grad(true);
    Tensor a_t = a, b_t = b, out_t = out;
    active_graph()->record("generalized_dice", [=]() mutable {
      if (!out_t.has_grad()) return;
      const double g = out_t.grad()[0];
      const double two_over_den = 2.0 / den;
      std::span<const float> av = a_t.values(), bv = b_t.values();
      if (a_t.requires_grad()) {
        std::span<float> ga = a_t.grad();
        for (std::size_t i = 0; i < av.size(); ++i) {
          ga[i] += static_cast<float>(g * two_over_den * (bv[i] - dice * av[i]));
        }
      }
      if (b_t.requires_grad()) {
        std::span<float> gb = b_t.grad();
        for (std::size_t i = 0; i < av.size(); ++i) {
          gb[i] += static_cast<float>(g * two_over_den * (av[i] - dice * bv[i]));
        }
      }
    });
  }
  return out;
}

Tensor dice_loss(const Tensor& y, const Tensor& yhat, float smooth) {
  return add_scalar(scale(generalized_dice(y, yhat, smooth), -1.0f), 1.0f);
}

Tensor channelwise_dice_loss(const Tensor& a, const Tensor& b, float smooth) {
  if (a.rank() != 4 || b.rank() != 4) {
    throw DimensionError("channelwise_dice_loss: inputs must be [N,C,H,W]");
  }
  if (a.shape() != b.shape()) {
    throw DimensionError("channelwise_dice_loss: shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
  if (!(smooth > 0.0f)) throw ContractError("channelwise_dice_loss: smooth must be positive");

  const int n = a.dim(0), c = a.dim(1);
  const std::int64_t hw = static_cast<std::int64_t>(a.dim(2)) * a.dim(3);
  auto num = std::make_shared<std::vector<double>>(c, 0.0);
  auto den = std::make_shared<std::vector<double>>(c, static_cast<double>(smooth));
  {
    std::span<const float> av = a.values(), bv = b.values();
    for (int bn = 0; bn < n; ++bn) {
      for (int ch = 0; ch < c; ++ch) {
        const std::int64_t off = (static_cast<std::int64_t>(bn) * c + ch) * hw;
        double& nu = (*num)[ch];
        double& de = (*den)[ch];
        for (std::int64_t i = 0; i < hw; ++i) {
          const double x = av[off + i], y = bv[off + i];
          nu += 2.0 * x * y;
          de += x * x + y * y;
        }
      }
    }
  }
  double loss = 0.0;
  for (int ch = 0; ch < c; ++ch) loss += 1.0 - (*num)[ch] / (*den)[ch];
  Tensor out = Tensor::scalar(static_cast<float>(loss));
  check_finite(out, "channelwise_dice_loss");

  if (recording_wanted(a, b)) {
    out.set_requires_grad(true);
    Tensor a_t = a, b_t = b, out_t = out;
    active_graph()->record("channelwise_dice_loss", [=]() mutable {
      if (!out_t.has_grad()) return;
      const double g = out_t.grad()[0];
      std::span<const float> av = a_t.values(), bv = b_t.values();
      const int nn = a_t.dim(0), cc = a_t.dim(1);
      const std::int64_t hw2 = static_cast<std::int64_t>(a_t.dim(2)) * a_t.dim(3);
      for (int bn = 0; bn < nn; ++bn) {
        for (int ch = 0; ch < cc; ++ch) {
          const std::int64_t off = (static_cast<std::int64_t>(bn) * cc + ch) * hw2;
          const double dice = (*num)[ch] / (*den)[ch];
          const double k = -g * 2.0 / (*den)[ch];
          if (a_t.requires_grad()) {
            std::span<float> ga = a_t.grad();
            for (std::int64_t i = 0; i < hw2; ++i) {
              ga[off + i] += static_cast<float>(k * (bv[off + i] - dice * av[off + i]));
            }
          }
          if (b_t.requires_grad()) {
            std::span<float> gb = b_t.grad();
            for (std::int64_t i = 0; i < hw2; ++i) {
              gb[off + i] += static_cast<float>(k * (av[off + i] - dice * bv[off + i]));
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor mfm_loss(const Tensor& x, const Tensor& y, const Tensor& yhat, FeatureExtractor& f,
                float smooth) {
  FeaturePyramid truth = f.forward(x, y, /*training=*/false);
  FeaturePyramid pred = f.forward(x, yhat, /*training=*/false);
  Tensor total;
  for (std::size_t i = 0; i < truth.layers.size(); ++i) {
    Tensor layer = channelwise_dice_loss(truth.layers[i], pred.layers[i], smooth);
    total = total.defined() ? add(total, layer) : layer;
  }
  return total;
}

TotalLoss total_loss(const Tensor& x, const Tensor& y, const Tensor& yhat, FeatureExtractor& f,
                     const LossConfig& cfg) {
  if (cfg.lambda < 0.0f) throw ContractError("total_loss: lambda must be non-negative");
  if (!(cfg.smooth > 0.0f)) throw ContractError("total_loss: smooth must be positive");
  TotalLoss out;
  out.dice = dice_loss(y, yhat, cfg.smooth);
  out.mfm = mfm_loss(x, y, yhat, f, cfg.smooth);
  out.total = add(out.mfm, scale(out.dice, cfg.lambda));
  return out;
}

}  // namespace odcs
