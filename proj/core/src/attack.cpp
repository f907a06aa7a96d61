#include "adr/attack.hpp"

#include <cmath>

#include "adr/ops.hpp"
#include "adr/rng.hpp"

namespace adr {
namespace {

constexpr std::uint64_t kStartStream = 0x53544152;  // "STAR"

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::vector<int> constant_labels(int value, std::size_t n) {
  return std::vector<int>(n, value);
}

}  // namespace

AttackMethod attack_method_from_string(const std::string& s) {
  if (s == "fgsm") return AttackMethod::fgsm;
  if (s == "pgd") return AttackMethod::pgd;
  if (s == "bim") return AttackMethod::bim;
  if (s == "mim") return AttackMethod::mim;
  if (s == "trades-kl") return AttackMethod::trades_kl;
  throw ConfigError("attack: unknown method '" + s + "'");
}

std::string attack_method_to_string(AttackMethod m) {
  switch (m) {
    case AttackMethod::fgsm: return "fgsm";
    case AttackMethod::pgd: return "pgd";
    case AttackMethod::bim: return "bim";
    case AttackMethod::mim: return "mim";
    default: return "trades-kl";
  }
}

AttackScenario attack_scenario_from_string(const std::string& s) {
  if (s == "non-targeted") return AttackScenario::non_targeted;
  if (s == "targeted") return AttackScenario::targeted;
  if (s == "multi-targeted") return AttackScenario::multi_targeted;
  throw ConfigError("attack: unknown scenario '" + s + "'");
}

std::string attack_scenario_to_string(AttackScenario s) {
  switch (s) {
    case AttackScenario::non_targeted: return "non-targeted";
    case AttackScenario::targeted: return "targeted";
    default: return "multi-targeted";
  }
}

void AttackConfig::validate() const {
  if (epsilon < 0.0) throw ConfigError("attack: epsilon must be >= 0");
  if (k < 0) throw ConfigError("attack: k must be >= 0");
  if (k > 0 && eta <= 0.0) throw ConfigError("attack: eta must be > 0 when k > 0");
  if (momentum_decay <= 0.0 || momentum_decay > 1.0) {
    throw ConfigError("attack: momentum decay must be in (0,1]");
  }
  if (method == AttackMethod::trades_kl &&
      scenario != AttackScenario::non_targeted) {
    throw ConfigError("attack: trades-kl supports only the non-targeted scenario");
  }
  if (scenario == AttackScenario::targeted && target_label < 0) {
    throw ConfigError("attack: targeted scenario needs a target label");
  }
}

Tensor project_linf(const Tensor& candidate, const Tensor& origin, double eps) {
  if (candidate.shape() != origin.shape()) {
    throw ShapeError("project_linf: candidate " + shape_str(candidate.shape()) +
                     " does not match origin " + shape_str(origin.shape()));
  }
  std::vector<double> out(candidate.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double lo = origin.data()[i] - eps;
    const double hi = origin.data()[i] + eps;
    double v = candidate.data()[i];
    v = v < lo ? lo : (v > hi ? hi : v);
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    out[i] = v;
  }
  return Tensor(candidate.shape(), std::move(out));
}

namespace {

struct BatchView {
  int batch = 0;
  std::size_t stride = 0;  // elements per example
};

BatchView batch_view(const Tensor& x) {
  if (x.shape().empty() || x.shape()[0] <= 0) {
    throw ShapeError("attack: expected batched input, got shape " +
                     shape_str(x.shape()));
  }
  BatchView v;
  v.batch = x.shape()[0];
  v.stride = x.size() / static_cast<std::size_t>(v.batch);
  return v;
}

/// Shared iterative core. `labels` drive the cross-entropy objective
/// (ascent for non-targeted, descent for targeted); when `kl_reference` is
/// set the objective is KL(reference || h(x')) ascent instead.
struct DriverSpec {
  const std::vector<int>* labels = nullptr;
  const Tensor* kl_reference = nullptr;  // [B,M] constant clean probabilities
  double direction = 1.0;                // +1 ascent, -1 descent
  bool random_start = false;
  bool use_momentum = false;
  double momentum_decay = 1.0;
  double epsilon = 0.0;
  double eta = 0.0;
  int k = 0;
  std::uint64_t seed = 0;
  std::uint64_t index_offset = 0;
  const std::vector<std::uint8_t>* frozen = nullptr;  // skip these examples
};

/// Per-example objective values [B] on the tape, plus the scalar masked sum
/// used for the backward sweep.
struct Objective {
  Tensor per_example;
  std::vector<double> values;
};

Objective eval_objective(const SplitModel& model, Tape& tape, const Tensor& x,
                         const DriverSpec& spec) {
  ModelPass pass = model.begin_pass(&tape, false);
  const Tensor probs = model.forward(pass, x).probs;
  Objective obj;
  if (spec.kl_reference) {
    const Tensor& ref = *spec.kl_reference;
    obj.per_example = sum_axis(
        mul(ref, sub(safe_log(ref), safe_log(probs))), 1);
  } else {
    obj.per_example = neg(safe_log(select_class(probs, *spec.labels)));
  }
  obj.values = obj.per_example.data();
  return obj;
}

AdversarialBatch run_driver(const SplitModel& model, const Tensor& x,
                            const DriverSpec& spec) {
  const BatchView view = batch_view(x);
  const std::size_t n = x.size();

  AdversarialBatch result;
  result.success.assign(static_cast<std::size_t>(view.batch), 0);
  result.achieved_loss.assign(static_cast<std::size_t>(view.batch), 0.0);
  result.aborted.assign(static_cast<std::size_t>(view.batch), 0);

  std::vector<std::uint8_t> frozen(static_cast<std::size_t>(view.batch), 0);
  if (spec.frozen) frozen = *spec.frozen;

  std::vector<double> cur = x.data();
  if (spec.random_start) {
    for (int i = 0; i < view.batch; ++i) {
      if (frozen[static_cast<std::size_t>(i)]) continue;
      DetRng rng(derive_seed(spec.seed,
                             {kStartStream, spec.index_offset +
                                                static_cast<std::uint64_t>(i)}));
      double* row = cur.data() + static_cast<std::size_t>(i) * view.stride;
      for (std::size_t e = 0; e < view.stride; ++e)
        row[e] += rng.uniform(-spec.epsilon, spec.epsilon);
    }
    cur = project_linf(Tensor(x.shape(), std::move(cur)), x, spec.epsilon).data();
  }

  std::vector<double> momentum;
  if (spec.use_momentum) momentum.assign(n, 0.0);

  for (int it = 0; it < spec.k; ++it) {
    Tape tape;
    const Tensor xt = tape.leaf(x.shape(), cur);
    const Objective obj = eval_objective(model, tape, xt, spec);

    // Mask out frozen and newly non-finite rows so backward sees a finite
    // scalar and their iterates stay put.
    std::vector<double> mask(static_cast<std::size_t>(view.batch), 1.0);
    bool any_active = false;
    for (int i = 0; i < view.batch; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      if (!std::isfinite(obj.values[idx]) && !frozen[idx]) {
        result.aborted[idx] = 1;
        frozen[idx] = 1;
      }
      if (frozen[idx]) {
        mask[idx] = 0.0;
      } else {
        any_active = true;
      }
    }
    if (!any_active) break;
    const Tensor total =
        sum_all(mul(obj.per_example, Tensor({view.batch}, std::move(mask))));
    tape.backward(total);
    const std::vector<double>& grad = tape.grad(xt);

    for (int i = 0; i < view.batch; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      if (frozen[idx]) continue;
      const std::size_t off = idx * view.stride;
      const double* g = grad.data() + off;
      double* row = cur.data() + off;
      if (spec.use_momentum) {
        double l1 = 0.0;
        for (std::size_t e = 0; e < view.stride; ++e) l1 += std::fabs(g[e]);
        double* m = momentum.data() + off;
        for (std::size_t e = 0; e < view.stride; ++e) {
          m[e] = spec.momentum_decay * m[e] + (l1 > 0.0 ? g[e] / l1 : 0.0);
          row[e] += spec.direction * spec.eta * sign0(m[e]);
        }
      } else {
        for (std::size_t e = 0; e < view.stride; ++e)
          row[e] += spec.direction * spec.eta * sign0(g[e]);
      }
    }
    cur = project_linf(Tensor(x.shape(), std::move(cur)), x, spec.epsilon).data();
  }

  result.x_adv = Tensor(x.shape(), std::move(cur));

  // Record the final objective value per example.
  {
    Tape tape;
    const Tensor xt = tape.leaf(x.shape(), result.x_adv.data());
    const Objective obj = eval_objective(model, tape, xt, spec);
    result.achieved_loss = obj.values;
  }
  return result;
}

void finish_flags_nontargeted(const SplitModel& model, const Tensor& x_adv,
                              const std::vector<int>& y,
                              AdversarialBatch& batch) {
  const std::vector<int> pred = SplitModel::argmax_rows(model.predict(x_adv));
  for (std::size_t i = 0; i < pred.size(); ++i)
    batch.success[i] = pred[i] != y[i] ? 1 : 0;
}

}  // namespace

AdversarialBatch iterative_attack(const SplitModel& model, const Tensor& x,
                                  const std::vector<int>& y,
                                  const AttackConfig& cfg,
                                  std::uint64_t example_index_offset) {
  cfg.validate();
  if (cfg.method != AttackMethod::pgd && cfg.method != AttackMethod::bim &&
      cfg.method != AttackMethod::mim) {
    throw ConfigError("iterative_attack: method must be pgd, bim, or mim");
  }
  const BatchView view = batch_view(x);
  if (static_cast<int>(y.size()) != view.batch) {
    throw ShapeError("attack: " + std::to_string(y.size()) +
                     " labels for batch shape " + shape_str(x.shape()));
  }
  DriverSpec spec;
  spec.labels = &y;
  spec.direction = 1.0;
  spec.random_start = cfg.method == AttackMethod::bim ? false : cfg.random_start;
  spec.use_momentum = cfg.method == AttackMethod::mim;
  spec.momentum_decay = cfg.momentum_decay;
  spec.epsilon = cfg.epsilon;
  spec.eta = cfg.eta;
  spec.k = cfg.k;
  spec.seed = cfg.seed;
  spec.index_offset = example_index_offset;
  AdversarialBatch batch = run_driver(model, x, spec);
  finish_flags_nontargeted(model, batch.x_adv, y, batch);
  return batch;
}

AdversarialBatch fgsm(const SplitModel& model, const Tensor& x,
                      const std::vector<int>& y, double epsilon,
                      std::uint64_t example_index_offset) {
  AttackConfig cfg;
  cfg.method = AttackMethod::pgd;
  cfg.epsilon = epsilon;
  cfg.eta = epsilon > 0.0 ? epsilon : 1.0;  // one full-strength step
  cfg.k = epsilon > 0.0 ? 1 : 0;
  cfg.random_start = false;
  AdversarialBatch batch = iterative_attack(model, x, y, cfg, example_index_offset);
  for (std::size_t i = 0; i < batch.aborted.size(); ++i) {
    if (batch.aborted[i]) {
      throw NumericError("fgsm: non-finite gradient for example " +
                         std::to_string(i));
    }
  }
  return batch;
}

AdversarialBatch targeted_attack(const SplitModel& model, const Tensor& x,
                                 const std::vector<int>& y_true, int target,
                                 const AttackConfig& cfg,
                                 std::uint64_t example_index_offset) {
  AttackConfig local = cfg;
  local.scenario = AttackScenario::targeted;
  local.target_label = target;
  local.validate();
  const BatchView view = batch_view(x);
  if (static_cast<int>(y_true.size()) != view.batch) {
    throw ShapeError("attack: " + std::to_string(y_true.size()) +
                     " labels for batch shape " + shape_str(x.shape()));
  }
  if (target >= model.num_classes()) {
    throw ConfigError("attack: target label " + std::to_string(target) +
                      " outside [0," + std::to_string(model.num_classes()) + ")");
  }
  // Examples already labeled `target` are skipped and flagged unsuccessful.
  std::vector<std::uint8_t> frozen(static_cast<std::size_t>(view.batch), 0);
  for (int i = 0; i < view.batch; ++i)
    if (y_true[static_cast<std::size_t>(i)] == target)
      frozen[static_cast<std::size_t>(i)] = 1;

  const std::vector<int> target_labels =
      constant_labels(target, static_cast<std::size_t>(view.batch));
  DriverSpec spec;
  spec.labels = &target_labels;
  spec.direction = -1.0;  // descend the target-label loss
  spec.random_start =
      cfg.method == AttackMethod::bim ? false : cfg.random_start;
  spec.use_momentum = cfg.method == AttackMethod::mim;
  spec.momentum_decay = cfg.momentum_decay;
  spec.epsilon = cfg.epsilon;
  spec.eta = cfg.eta;
  spec.k = cfg.k;
  spec.seed = cfg.seed;
  spec.index_offset = example_index_offset;
  spec.frozen = &frozen;
  AdversarialBatch batch = run_driver(model, x, spec);

  const std::vector<int> pred =
      SplitModel::argmax_rows(model.predict(batch.x_adv));
  for (int i = 0; i < view.batch; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    batch.success[idx] =
        (!frozen[idx] && pred[idx] == target && target != y_true[idx]) ? 1 : 0;
  }
  return batch;
}

MultiTargetedResult multi_targeted(const SplitModel& model, const Tensor& x,
                                   const std::vector<int>& y,
                                   const AttackConfig& cfg,
                                   std::uint64_t example_index_offset) {
  const BatchView view = batch_view(x);
  MultiTargetedResult result;
  result.attack_success.assign(static_cast<std::size_t>(view.batch), 0);
  result.clean_correct.assign(static_cast<std::size_t>(view.batch), 0);
  result.robust.assign(static_cast<std::size_t>(view.batch), 0);

  const std::vector<int> clean_pred = SplitModel::argmax_rows(model.predict(x));
  for (int i = 0; i < view.batch; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    result.clean_correct[idx] = clean_pred[idx] == y[idx] ? 1 : 0;
    // A naturally misclassified example counts as attack success, keeping
    // robust accuracy <= natural accuracy.
    if (!result.clean_correct[idx]) result.attack_success[idx] = 1;
  }

  for (int target = 0; target < model.num_classes(); ++target) {
    bool needed = false;
    for (int i = 0; i < view.batch; ++i)
      if (y[static_cast<std::size_t>(i)] != target) needed = true;
    if (!needed) continue;
    const AdversarialBatch batch =
        targeted_attack(model, x, y, target, cfg, example_index_offset);
    for (int i = 0; i < view.batch; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      if (batch.success[idx]) result.attack_success[idx] = 1;
    }
  }
  for (int i = 0; i < view.batch; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    result.robust[idx] =
        (result.clean_correct[idx] && !result.attack_success[idx]) ? 1 : 0;
  }
  return result;
}

AdversarialBatch trades_adversary(const SplitModel& model, const Tensor& x,
                                  const AttackConfig& cfg,
                                  std::uint64_t example_index_offset) {
  AttackConfig local = cfg;
  local.method = AttackMethod::trades_kl;
  local.validate();
  const Tensor reference = model.predict(x);
  DriverSpec spec;
  spec.kl_reference = &reference;
  spec.direction = 1.0;
  spec.random_start = true;  // KL gradient vanishes at x' = x
  spec.use_momentum = false;
  spec.epsilon = cfg.epsilon;
  spec.eta = cfg.eta;
  spec.k = cfg.k;
  spec.seed = cfg.seed;
  spec.index_offset = example_index_offset;
  AdversarialBatch batch = run_driver(model, x, spec);

  const std::vector<int> ref_pred = SplitModel::argmax_rows(reference);
  const std::vector<int> adv_pred =
      SplitModel::argmax_rows(model.predict(batch.x_adv));
  for (std::size_t i = 0; i < adv_pred.size(); ++i)
    batch.success[i] = adv_pred[i] != ref_pred[i] ? 1 : 0;
  return batch;
}

AdversarialBatch generate_adversarial(const SplitModel& model, const Tensor& x,
                                      const std::vector<int>& y,
                                      const AttackConfig& cfg,
                                      std::uint64_t example_index_offset) {
  cfg.validate();
  switch (cfg.method) {
    case AttackMethod::fgsm:
      return fgsm(model, x, y, cfg.epsilon, example_index_offset);
    case AttackMethod::trades_kl:
      return trades_adversary(model, x, cfg, example_index_offset);
    default:
      return iterative_attack(model, x, y, cfg, example_index_offset);
  }
}

}  // namespace adr
