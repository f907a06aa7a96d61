#ifndef ADR_LOSSES_HPP
#define ADR_LOSSES_HPP

#include <vector>

#include "adr/attack.hpp"
#include "adr/model.hpp"
#include "adr/ops.hpp"

namespace adr {

/// Trade-off weights of the combined objective plus the pair-weight alpha and
/// the norm used by both compactness terms. Setting a lambda to zero disables
/// (and skips) the corresponding term.
struct LossWeights {
  double lambda_lc = 0.0;
  double lambda_gb = 0.0;
  double lambda_conf = 0.0;
  double lambda_smt = 0.0;
  double alpha = 0.99;
  PNorm p = PNorm::two;

  void validate() const;
};

/// Scalar values of every term. total always equals
/// supervision + lambda_lc*local + lambda_gb*global + lambda_conf*confidence
/// + lambda_smt*smoothness, combined in that order.
struct LossBreakdown {
  double supervision = 0.0;        // L_c
  double local_compactness = 0.0;  // L_com^lc
  double global_compactness = 0.0; // L_com^gb
  double confidence = 0.0;         // L_conf
  double smoothness = 0.0;         // L_smt
  double total = 0.0;
};

/// 1 for same-label pairs, (alpha-1)/alpha otherwise; negative for all
/// alpha in (0,1).
double pair_weight(int y_i, int y_j, double alpha);

// Tape-composable terms. Each returns a scalar tensor; gradients flow into
// whatever inputs are tracked.

/// Mean over the batch of ||f(x_i) - f(xa_i)||_p, one adversarial sample per
/// clean sample.
Tensor local_compactness_term(const Tensor& f_x, const Tensor& f_xa, PNorm p);

/// Mean over unordered within-batch pairs of w_ij * ||f(x_i) - f(x_j)||_p.
/// Batch size < 2 is defined as 0 with a warning on stderr.
Tensor global_compactness_term(const Tensor& reps, const std::vector<int>& labels,
                               double alpha, PNorm p);

/// -log of the true-class probability per row (probability floor applied).
Tensor cross_entropy_rows(const Tensor& probs, const std::vector<int>& labels);

/// H(q) = -q^T log q per row.
Tensor entropy_rows(const Tensor& probs);

/// KL(p || q) per row with p treated as a constant reference.
Tensor kl_rows(const Tensor& p_ref, const Tensor& q);

/// Convenience evaluations matching the per-term operations (no gradients).
double local_compactness(const Tensor& f_x, const Tensor& f_xa, PNorm p);
double global_compactness(const Tensor& reps, const std::vector<int>& labels,
                          double alpha, PNorm p);
double supervision_loss(const SplitModel& model, const Tensor& x,
                        const Tensor& x_adv, const std::vector<int>& y);
double confidence_loss(const SplitModel& model, const Tensor& x,
                       const Tensor& x_adv);
double smoothness_loss(const SplitModel& model, const Tensor& x,
                       const Tensor& x_adv);

struct LossComputation {
  LossBreakdown breakdown;
  Tensor total;  // scalar; tracked when the pass tracks parameters
};

/// Builds every enabled term on the pass's tape from pre-generated
/// adversarial samples, reusing one forward per branch. Terms with a zero
/// lambda are skipped, so an all-zero configuration is bit-identical to the
/// supervision loss alone.
LossComputation compose_total_loss(const SplitModel& model, ModelPass& pass,
                                   const Tensor& x,
                                   const std::vector<Tensor>& x_adv_samples,
                                   const std::vector<int>& y,
                                   const LossWeights& weights);

/// The full objective: generates x_a with the frozen model, then evaluates
/// the combined loss (no parameter gradients; the training loop composes the
/// tracked version itself).
struct TotalLossResult {
  LossBreakdown breakdown;
  Tensor x_adv;  // first adversarial sample
};
TotalLossResult total_loss(const SplitModel& model, const Tensor& x,
                           const std::vector<int>& y,
                           const AttackConfig& adversary,
                           const LossWeights& weights, int sample_count = 1,
                           std::uint64_t example_index_offset = 0);

}  // namespace adr

#endif  // ADR_LOSSES_HPP
