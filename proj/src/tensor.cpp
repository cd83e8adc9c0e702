#include "odcs/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace odcs {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor dimension must be positive, got shape " + shape_str(shape));
  }
  auto s = std::make_shared<Storage>();
  s->values.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0f);
  s->shape = std::move(shape);
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (float& v : t.values()) v = value;
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<float> values, bool requires_grad) {
  if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  }
  Tensor t = zeros(std::move(shape), requires_grad);
  std::copy(values.begin(), values.end(), t.values().begin());
  return t;
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

Tensor::Storage& Tensor::storage() {
  if (!data_) throw ContractError("operation on undefined tensor");
  return *data_;
}

const Tensor::Storage& Tensor::storage() const {
  if (!data_) throw ContractError("operation on undefined tensor");
  return *data_;
}

const Shape& Tensor::shape() const { return storage().shape; }
int Tensor::rank() const { return static_cast<int>(storage().shape.size()); }

int Tensor::dim(int axis) const {
  const Shape& s = storage().shape;
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return shape_numel(storage().shape); }

std::span<float> Tensor::values() { return storage().values; }
std::span<const float> Tensor::values() const { return storage().values; }

float Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() requires a single-element tensor, got shape " + shape_str(shape()));
  }
  return storage().values[0];
}

bool Tensor::requires_grad() const { return storage().requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  storage().requires_grad = value;
  return *this;
}

bool Tensor::has_grad() const { return !storage().grad.empty(); }

std::span<float> Tensor::grad() {
  Storage& s = storage();
  if (s.grad.empty()) s.grad.assign(s.values.size(), 0.0f);
  return s.grad;
}

std::span<const float> Tensor::grad() const {
  const Storage& s = storage();
  if (s.grad.empty()) throw ContractError("gradient has not been populated");
  return s.grad;
}

void Tensor::zero_grad() {
  Storage& s = storage();
  if (!s.grad.empty()) std::fill(s.grad.begin(), s.grad.end(), 0.0f);
}

void Tensor::accumulate_grad(std::span<const float> delta) {
  Storage& s = storage();
  if (delta.size() != s.values.size()) {
    throw DimensionError("gradient size " + std::to_string(delta.size()) +
                         " does not match tensor shape " + shape_str(s.shape));
  }
  if (s.grad.empty()) s.grad.assign(s.values.size(), 0.0f);
  for (std::size_t i = 0; i < delta.size(); ++i) s.grad[i] += delta[i];
}

Tensor Tensor::clone() const {
  const Storage& s = storage();
  Tensor t = zeros(s.shape, s.requires_grad);
  std::copy(s.values.begin(), s.values.end(), t.values().begin());
  return t;
}

Tensor Tensor::detached() const {
  Tensor t = clone();
  t.set_requires_grad(false);
  return t;
}

void Graph::record(const char* op, std::function<void()> backward_step) {
  nodes_.push_back(Node{op, std::move(backward_step)});
}

namespace {
thread_local Graph* g_active_graph = nullptr;
std::atomic<bool> g_finite_checks{true};
}  // namespace

Recording::Recording(Graph& graph) {
  previous_ = g_active_graph;
  g_active_graph = &graph;
}

Recording::~Recording() { g_active_graph = previous_; }

Graph* active_graph() { return g_active_graph; }

void backward(const Tensor& loss, Graph& graph) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss tensor");
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward() loss does not require gradients; nothing was recorded");
  }
  Tensor seed = loss;
  seed.grad()[0] += 1.0f;
  for (auto it = graph.nodes_.rbegin(); it != graph.nodes_.rend(); ++it) {
    it->backward_step();
  }
}

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled, std::memory_order_relaxed); }
bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }

void check_finite(const Tensor& t, const char* op) {
  if (!finite_checks_enabled()) return;
  for (float v : t.values()) {
    if (!std::isfinite(v)) {
      throw NonFiniteError(std::string("non-finite value produced by ") + op);
    }
  }
}

}  // namespace odcs
