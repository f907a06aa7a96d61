#include "adr/tensor.hpp"

#include <cmath>
#include <sstream>

namespace adr {

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out << ',';
    out << s[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (data.size() != shape_numel(shape_)) {
    throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape_));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> d(shape_numel(shape), 0.0);
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> d(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = -1;
  return t;
}

Tensor Tape::leaf(Shape shape, std::vector<double> data) {
  Tensor t(std::move(shape), std::move(data));
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{t.size(), nullptr});
  return t;
}

Tensor Tape::track(Shape shape, std::vector<double> data, BackwardFn backward) {
  Tensor t(std::move(shape), std::move(data));
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{t.size(), std::move(backward)});
  return t;
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this || loss.node() < 0) {
    throw ShapeError("backward: loss is not tracked on this tape");
  }
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_str(loss.shape()));
  }
  if (!std::isfinite(loss.value())) {
    throw NumericError("backward: loss is not finite");
  }
  grads_.assign(nodes_.size(), {});
  grads_[static_cast<std::size_t>(loss.node())] = {1.0};
  for (int id = loss.node(); id >= 0; --id) {
    const auto idx = static_cast<std::size_t>(id);
    if (grads_[idx].empty()) continue;  // node did not influence the loss
    if (nodes_[idx].backward) nodes_[idx].backward(grads_[idx], *this);
  }
  ran_backward_ = true;
}

const std::vector<double>& Tape::grad(const Tensor& t) {
  if (t.tape() != this || t.node() < 0) {
    throw ShapeError("grad: tensor is not tracked on this tape");
  }
  auto& g = grads_.at(static_cast<std::size_t>(t.node()));
  if (g.empty()) g.assign(t.size(), 0.0);
  return g;
}

std::vector<double>& Tape::grad_buffer(int id) {
  auto& g = grads_.at(static_cast<std::size_t>(id));
  if (g.empty()) g.assign(nodes_[static_cast<std::size_t>(id)].size, 0.0);
  return g;
}

}  // namespace adr
