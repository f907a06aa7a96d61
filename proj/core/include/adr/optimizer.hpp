#ifndef ADR_OPTIMIZER_HPP
#define ADR_OPTIMIZER_HPP

#include <string>
#include <vector>

#include "adr/errors.hpp"

namespace adr {

enum class OptimizerKind { sgd_momentum, adam };

OptimizerKind optimizer_kind_from_string(const std::string& s);
std::string optimizer_kind_to_string(OptimizerKind k);

/// One named parameter buffer plus its gradient for a step.
struct ParamRef {
  std::string name;
  std::vector<double>* value = nullptr;
  const std::vector<double>* grad = nullptr;
};

/// Optimizer with per-parameter moment buffers.
///
/// SGD-momentum: v <- mu*v + g + wd*theta; theta <- theta - lr*v.
/// Adam: standard first/second-moment update with bias correction; weight
/// decay enters as an L2 term added to the gradient, same as SGD.
class OptimizerState {
 public:
  OptimizerState(OptimizerKind kind, double lr, double momentum = 0.9,
                 double weight_decay = 0.0, double beta1 = 0.9,
                 double beta2 = 0.999, double eps = 1e-8);

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

  /// Applies one update in place. Throws NumericError naming the parameter if
  /// its gradient is not finite. Moment buffers are allocated on first use and
  /// must keep matching shapes afterwards.
  void step(std::vector<ParamRef> params);

 private:
  OptimizerKind kind_;
  double lr_;
  double momentum_;
  double weight_decay_;
  double beta1_, beta2_, eps_;
  long step_count_ = 0;
  std::vector<std::vector<double>> m1_;  // momentum / first moment
  std::vector<std::vector<double>> m2_;  // second moment (adam)
};

}  // namespace adr

#endif  // ADR_OPTIMIZER_HPP
