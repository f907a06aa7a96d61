#ifndef ADR_TENSOR_HPP
#define ADR_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "adr/errors.hpp"

namespace adr {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

class Tape;

/// Dense row-major float64 tensor. Immutable after construction; copies are
/// cheap (shared payload). A tensor is either a constant or tracked on a tape
/// (node() >= 0), in which case backward() can reach it.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  bool defined() const { return static_cast<bool>(data_); }
  const std::vector<double>& data() const { return *data_; }
  double value(std::size_t flat = 0) const { return (*data_)[flat]; }

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

  /// Same payload, detached from any tape.
  Tensor detached() const;

 private:
  friend class Tape;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

/// Reverse-mode tape. Built fresh for every forward pass and confined to one
/// logical thread. Nodes are appended in evaluation order, so reverse index
/// order is a valid topological order for the backward sweep.
class Tape {
 public:
  /// Backward fn: receives the node's output gradient and accumulates into
  /// parent gradients through grad_buffer().
  using BackwardFn = std::function<void(const std::vector<double>& gout, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers an input (parameter or attacked image) the caller wants a
  /// gradient for.
  Tensor leaf(Shape shape, std::vector<double> data);

  /// Registers an op result. `parents` are tracked inputs; `backward` may be
  /// empty for ops with no differentiable parents.
  Tensor track(Shape shape, std::vector<double> data, BackwardFn backward);

  /// Runs the reverse sweep from a scalar loss tracked on this tape.
  /// Throws ShapeError if the loss is not scalar, NumericError if the loss
  /// value is not finite.
  void backward(const Tensor& loss);

  /// Gradient of the last backward() w.r.t. a tracked tensor. Zero-filled if
  /// the tensor did not influence the loss.
  const std::vector<double>& grad(const Tensor& t);

  /// Accumulation buffer for node `id`, zero-initialized on first touch.
  std::vector<double>& grad_buffer(int id);

  int num_nodes() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    std::size_t size = 0;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool ran_backward_ = false;
};

}  // namespace adr

#endif  // ADR_TENSOR_HPP
