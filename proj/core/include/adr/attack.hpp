#ifndef ADR_ATTACK_HPP
#define ADR_ATTACK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "adr/model.hpp"
#include "adr/tensor.hpp"

namespace adr {

enum class AttackMethod { fgsm, pgd, bim, mim, trades_kl };
enum class AttackScenario { non_targeted, targeted, multi_targeted };

AttackMethod attack_method_from_string(const std::string& s);
std::string attack_method_to_string(AttackMethod m);
AttackScenario attack_scenario_from_string(const std::string& s);
std::string attack_scenario_to_string(AttackScenario s);

/// The adversary A_eps: an l-inf ball of radius epsilon around each input,
/// explored with eta-sized sign steps for k iterations.
struct AttackConfig {
  AttackMethod method = AttackMethod::pgd;
  double epsilon = 0.3;
  double eta = 0.01;
  int k = 40;
  bool random_start = true;
  double momentum_decay = 1.0;  // MIM only
  AttackScenario scenario = AttackScenario::non_targeted;
  int target_label = -1;  // targeted scenario
  std::uint64_t seed = 0;

  void validate() const;
};

/// Attack output. Every row satisfies ||x_a - x||_inf <= epsilon + 1e-9 and
/// stays in [0,1]. `aborted` marks examples whose loss went non-finite during
/// the iteration; they are frozen at their last feasible iterate.
struct AdversarialBatch {
  Tensor x_adv;
  std::vector<std::uint8_t> success;
  std::vector<double> achieved_loss;
  std::vector<std::uint8_t> aborted;
};

struct MultiTargetedResult {
  std::vector<std::uint8_t> attack_success;  // any targeted attack landed
  std::vector<std::uint8_t> clean_correct;
  std::vector<std::uint8_t> robust;  // clean_correct && !attack_success
};

/// clip(clip(candidate, origin - eps, origin + eps), 0, 1), elementwise.
Tensor project_linf(const Tensor& candidate, const Tensor& origin, double eps);

/// Single sign-gradient step on the true-label loss. Equals the unified
/// driver at k=1, eta=eps, no random start (shared code path). Throws
/// NumericError if any example's gradient is non-finite.
AdversarialBatch fgsm(const SplitModel& model, const Tensor& x,
                      const std::vector<int>& y, double epsilon,
                      std::uint64_t example_index_offset = 0);

/// Unified PGD / BIM / MIM driver, non-targeted. Random start draws are keyed
/// by (cfg.seed, example_index_offset + i), so any batch partitioning yields
/// identical per-example results.
AdversarialBatch iterative_attack(const SplitModel& model, const Tensor& x,
                                  const std::vector<int>& y,
                                  const AttackConfig& cfg,
                                  std::uint64_t example_index_offset = 0);

/// Same driver descending the target-label loss. Examples whose true label
/// equals the target are skipped and flagged unsuccessful.
AdversarialBatch targeted_attack(const SplitModel& model, const Tensor& x,
                                 const std::vector<int>& y_true, int target,
                                 const AttackConfig& cfg,
                                 std::uint64_t example_index_offset = 0);

/// Runs targeted_attack toward every wrong label. An example is robust iff
/// its clean prediction is correct and every targeted attack fails; a
/// naturally misclassified example counts as attack success.
MultiTargetedResult multi_targeted(const SplitModel& model, const Tensor& x,
                                   const std::vector<int>& y,
                                   const AttackConfig& cfg,
                                   std::uint64_t example_index_offset = 0);

/// PGD-style ascent on KL(h(x') || h(x)) with h(x) held constant. Random
/// start is mandatory (the KL gradient vanishes at x' = x). Success means the
/// prediction changed relative to the clean input.
AdversarialBatch trades_adversary(const SplitModel& model, const Tensor& x,
                                  const AttackConfig& cfg,
                                  std::uint64_t example_index_offset = 0);

/// Dispatches on cfg.method for non-targeted generation (training loop and
/// evaluation both route through here).
AdversarialBatch generate_adversarial(const SplitModel& model, const Tensor& x,
                                      const std::vector<int>& y,
                                      const AttackConfig& cfg,
                                      std::uint64_t example_index_offset = 0);

}  // namespace adr

#endif  // ADR_ATTACK_HPP
