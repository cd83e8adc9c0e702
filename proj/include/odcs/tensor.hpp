#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "odcs/errors.hpp"

namespace odcs {

/// Dimensions of a dense array, outermost first (N, C, H, W for image data).
using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major float32 array with an optional same-shape gradient buffer.
///
/// Tensor is a shared handle: copying it aliases the same storage, clone()
/// makes a deep copy. Gradient buffers are allocated lazily on first
/// accumulation and always zero-filled at creation.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const;
  int rank() const;
  int dim(int axis) const;
  std::int64_t numel() const;

  std::span<float> values();
  std::span<const float> values() const;

  /// Value of a single-element tensor.
  float item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);

  bool has_grad() const;
  /// Gradient buffer; allocates a zero-filled one on demand.
  std::span<float> grad();
  std::span<const float> grad() const;
  void zero_grad();
  void accumulate_grad(std::span<const float> delta);

  /// Deep copy of the values (gradient buffer is not copied).
  Tensor clone() const;
  /// Deep copy that does not participate in differentiation.
  Tensor detached() const;

  /// Stable identity of the underlying storage.
  const void* id() const { return data_.get(); }

 private:
  struct Storage {
    Shape shape;
    std::vector<float> values;
    std::vector<float> grad;  // empty until first use
    bool requires_grad = false;
  };

  explicit Tensor(std::shared_ptr<Storage> data) : data_(std::move(data)) {}
  Storage& storage();
  const Storage& storage() const;

  std::shared_ptr<Storage> data_;
};

/// Append-only tape of executed primitives. Ops push one backward step per
/// recorded node; backward() replays the tape in exact reverse execution
/// order, accumulating additively into each participating tensor's grad.
class Graph {
 public:
  void record(const char* op, std::function<void()> backward_step);
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    const char* op;
    std::function<void()> backward_step;
  };
  std::vector<Node> nodes_;

  friend void backward(const Tensor& loss, Graph& graph);
};

/// RAII recording scope. While alive, primitives executed on this thread
/// append their backward steps to the given graph. Scopes nest; recording
/// is per-thread, so distinct threads can record to distinct graphs.
class Recording {
 public:
  explicit Recording(Graph& graph);
  ~Recording();
  Recording(const Recording&) = delete;
  Recording& operator=(const Recording&) = delete;

 private:
  Graph* previous_;
};

/// Graph currently recording on this thread, or nullptr.
Graph* active_graph();

/// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse, populating
/// grad on every tensor that requires it. The loss must be a single-element
/// tensor produced through the given graph.
void backward(const Tensor& loss, Graph& graph);

/// Element-wise finiteness guard. On by default; every primitive checks its
/// output and throws NonFiniteError naming the op when the guard trips.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();
void check_finite(const Tensor& t, const char* op);

}  // namespace odcs
