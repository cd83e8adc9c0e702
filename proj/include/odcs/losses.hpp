#pragma once

#include "odcs/network.hpp"
#include "odcs/tensor.hpp"

namespace odcs {

struct LossConfig {
  /// Weight of the dice term in the total loss.
  float lambda = 150.0f;
  /// Smoothing term added to dice denominators so all-zero inputs stay finite.
  float smooth = 1e-6f;
};

/// 2*sum(a*b) / (sum(a^2) + sum(b^2) + smooth), a scalar in [-1, 1].
/// Differentiable in both arguments; exactly symmetric.
Tensor generalized_dice(const Tensor& a, const Tensor& b, float smooth = 1e-6f);

/// 1 - generalized_dice(y, yhat).
Tensor dice_loss(const Tensor& y, const Tensor& yhat, float smooth = 1e-6f);

/// Sum over channels c of 1 - dice(a[:,c], b[:,c]), where each per-channel
/// dice pools the batch and spatial axes. Inputs are [N,C,H,W].
Tensor channelwise_dice_loss(const Tensor& a, const Tensor& b, float smooth = 1e-6f);

/// Multi-scale feature matching: sum over extractor layers of the
/// channelwise dice loss between the features of (x, y) and (x, yhat).
/// The extractor runs in eval mode so both passes see identical statistics.
Tensor mfm_loss(const Tensor& x, const Tensor& y, const Tensor& yhat, FeatureExtractor& f,
                float smooth = 1e-6f);

struct TotalLoss {
  Tensor total;  // mfm + lambda * dice
  Tensor dice;
  Tensor mfm;
};

TotalLoss total_loss(const Tensor& x, const Tensor& y, const Tensor& yhat, FeatureExtractor& f,
                     const LossConfig& cfg);

}  // namespace odcs
