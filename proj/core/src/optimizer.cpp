#include "adr/optimizer.hpp"

#include <cmath>

namespace adr {

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "sgd-momentum") return OptimizerKind::sgd_momentum;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("optimizer: unknown kind '" + s + "'");
}

std::string optimizer_kind_to_string(OptimizerKind k) {
  return k == OptimizerKind::sgd_momentum ? "sgd-momentum" : "adam";
}

OptimizerState::OptimizerState(OptimizerKind kind, double lr, double momentum,
                               double weight_decay, double beta1, double beta2,
                               double eps)
    : kind_(kind),
      lr_(lr),
      momentum_(momentum),
      weight_decay_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
  if (lr_ < 0.0) throw ConfigError("optimizer: negative learning rate");
}

void OptimizerState::step(std::vector<ParamRef> params) {
  if (m1_.empty()) {
    m1_.resize(params.size());
    if (kind_ == OptimizerKind::adam) m2_.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
      m1_[p].assign(params[p].value->size(), 0.0);
      if (kind_ == OptimizerKind::adam) m2_[p].assign(params[p].value->size(), 0.0);
    }
  }
  if (m1_.size() != params.size()) {
    throw ShapeError("optimizer: parameter count changed between steps");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].grad->size() != params[p].value->size() ||
        m1_[p].size() != params[p].value->size()) {
      throw ShapeError("optimizer: moment/gradient size mismatch for parameter '" +
                       params[p].name + "'");
    }
    for (double g : *params[p].grad) {
      if (!std::isfinite(g)) {
        throw NumericError("optimizer: non-finite gradient for parameter '" +
                           params[p].name + "'");
      }
    }
  }
  ++step_count_;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& theta = *params[p].value;
    const auto& grad = *params[p].grad;
    if (kind_ == OptimizerKind::sgd_momentum) {
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = grad[i] + weight_decay_ * theta[i];
        m1_[p][i] = momentum_ * m1_[p][i] + g;
        theta[i] -= lr_ * m1_[p][i];
      }
    } else {
      const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
      const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = grad[i] + weight_decay_ * theta[i];
        m1_[p][i] = beta1_ * m1_[p][i] + (1.0 - beta1_) * g;
        m2_[p][i] = beta2_ * m2_[p][i] + (1.0 - beta2_) * g * g;
        const double mhat = m1_[p][i] / bc1;
        const double vhat = m2_[p][i] / bc2;
        theta[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }
}

}  // namespace adr
