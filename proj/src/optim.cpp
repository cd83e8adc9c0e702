#include "odcs/optim.hpp"

#include <cmath>

namespace odcs {

void AdamConfig::validate() const {
  if (!(lr > 0.0f)) throw ContractError("adam config: lr must be positive");
  if (!(beta1 >= 0.0f && beta1 < 1.0f)) throw ContractError("adam config: beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0f && beta2 < 1.0f)) throw ContractError("adam config: beta2 must be in [0, 1)");
  if (!(eps > 0.0f)) throw ContractError("adam config: eps must be positive");
}

Adam::Adam(std::vector<std::pair<std::string, Tensor>> params, const AdamConfig& config)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (auto& [name, t] : params_) {
    if (!t.defined()) throw ContractError("adam: parameter '" + name + "' is undefined");
    m_.push_back(Tensor::zeros(t.shape()));
    v_.push_back(Tensor::zeros(t.shape()));
  }
}

void Adam::step() {
  for (auto& [name, t] : params_) {
    if (!t.has_grad()) {
      throw ContractError("adam step: parameter '" + name + "' has no gradient");
    }
  }
  ++step_count_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  const double lr = config_.lr, eps = config_.eps;

  for (std::size_t p = 0; p < params_.size(); ++p) {
    std::span<float> theta = params_[p].second.values();
    std::span<const float> g = std::as_const(params_[p].second).grad();
    std::span<float> m = m_[p].values();
    std::span<float> v = v_[p].values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i];
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * gi);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * gi * gi);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] = static_cast<float>(theta[i] - lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

void Adam::zero_grad() {
  for (auto& [name, t] : params_) {
    t.grad();  // ensure the buffer exists
    t.zero_grad();
  }
}

void Adam::set_step_count(std::int64_t t) {
  if (t < 0) throw ContractError("adam: step count must be non-negative");
  step_count_ = t;
}

std::vector<std::pair<std::string, Tensor>> Adam::state_tensors() {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(2 * params_.size());
  for (std::size_t p = 0; p < params_.size(); ++p) {
    out.emplace_back("adam.m." + params_[p].first, m_[p]);
    out.emplace_back("adam.v." + params_[p].first, v_[p]);
  }
  return out;
}

}  // namespace odcs
