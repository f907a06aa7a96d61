#include "adr/losses.hpp"

#include <iostream>

namespace adr {

void LossWeights::validate() const {
  if (lambda_lc < 0.0 || lambda_gb < 0.0 || lambda_conf < 0.0 || lambda_smt < 0.0) {
    throw ConfigError("loss weights: lambdas must be non-negative");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("loss weights: alpha must lie strictly inside (0,1)");
  }
}

double pair_weight(int y_i, int y_j, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("pair_weight: alpha must lie strictly inside (0,1)");
  }
  return y_i == y_j ? 1.0 : (alpha - 1.0) / alpha;
}

Tensor local_compactness_term(const Tensor& f_x, const Tensor& f_xa, PNorm p) {
  if (f_x.shape() != f_xa.shape()) {
    throw ShapeError("local_compactness: clean shape " + shape_str(f_x.shape()) +
                     " does not match adversarial shape " +
                     shape_str(f_xa.shape()));
  }
  Tensor clean = f_x.shape().size() == 2 ? f_x : flatten(f_x);
  Tensor adv = f_xa.shape().size() == 2 ? f_xa : flatten(f_xa);
  return mean_all(rowwise_pnorm(sub(clean, adv), p));
}

Tensor global_compactness_term(const Tensor& reps, const std::vector<int>& labels,
                               double alpha, PNorm p) {
  Tensor flat = reps.shape().size() == 2 ? reps : flatten(reps);
  const int B = flat.shape()[0];
  if (static_cast<int>(labels.size()) != B) {
    throw ShapeError("global_compactness: " + std::to_string(labels.size()) +
                     " labels for batch shape " + shape_str(reps.shape()));
  }
  if (B < 2) {
    std::cerr << "warning: global compactness over a batch of " << B
              << " is defined as 0\n";
    return Tensor::scalar(0.0);
  }
  std::vector<double> weights;
  weights.reserve(static_cast<std::size_t>(B) * (B - 1) / 2);
  for (int i = 0; i < B; ++i)
    for (int j = i + 1; j < B; ++j)
      weights.push_back(pair_weight(labels[static_cast<std::size_t>(i)],
                                    labels[static_cast<std::size_t>(j)], alpha));
  return pairwise_weighted_pnorm_mean(flat, weights, p);
}

Tensor cross_entropy_rows(const Tensor& probs, const std::vector<int>& labels) {
  return neg(safe_log(select_class(probs, labels)));
}

Tensor entropy_rows(const Tensor& probs) {
  if (probs.shape().size() != 2) {
    throw ShapeError("entropy: expected [B,M], got " + shape_str(probs.shape()));
  }
  return neg(sum_axis(mul(probs, safe_log(probs)), 1));
}

Tensor kl_rows(const Tensor& p_ref, const Tensor& q) {
  if (p_ref.shape() != q.shape()) {
    throw ShapeError("kl: reference shape " + shape_str(p_ref.shape()) +
                     " does not match shape " + shape_str(q.shape()));
  }
  if (p_ref.shape().size() != 2) {
    throw ShapeError("kl: expected [B,M], got " + shape_str(p_ref.shape()));
  }
  const Tensor ref = p_ref.detached();
  return sum_axis(mul(ref, sub(safe_log(ref), safe_log(q))), 1);
}

double local_compactness(const Tensor& f_x, const Tensor& f_xa, PNorm p) {
  return local_compactness_term(f_x.detached(), f_xa.detached(), p).value();
}

double global_compactness(const Tensor& reps, const std::vector<int>& labels,
                          double alpha, PNorm p) {
  return global_compactness_term(reps.detached(), labels, alpha, p).value();
}

double supervision_loss(const SplitModel& model, const Tensor& x,
                        const Tensor& x_adv, const std::vector<int>& y) {
  const Tensor probs_clean = model.predict(x);
  const Tensor probs_adv = model.predict(x_adv);
  return add(mean_all(cross_entropy_rows(probs_adv, y)),
             mean_all(cross_entropy_rows(probs_clean, y)))
      .value();
}

double confidence_loss(const SplitModel& model, const Tensor& x,
                       const Tensor& x_adv) {
  const Tensor probs_clean = model.predict(x);
  const Tensor probs_adv = model.predict(x_adv);
  return add(mean_all(entropy_rows(probs_adv)), mean_all(entropy_rows(probs_clean)))
      .value();
}

double smoothness_loss(const SplitModel& model, const Tensor& x,
                       const Tensor& x_adv) {
  const Tensor probs_clean = model.predict(x);
  const Tensor probs_adv = model.predict(x_adv);
  return mean_all(kl_rows(probs_clean, probs_adv)).value();
}

LossComputation compose_total_loss(const SplitModel& model, ModelPass& pass,
                                   const Tensor& x,
                                   const std::vector<Tensor>& x_adv_samples,
                                   const std::vector<int>& y,
                                   const LossWeights& weights) {
  weights.validate();
  if (x_adv_samples.empty()) {
    throw ConfigError("total_loss: need at least one adversarial sample");
  }
  const double inv_s = 1.0 / static_cast<double>(x_adv_samples.size());

  const ForwardResult clean = model.forward(pass, x);
  std::vector<ForwardResult> adv;
  adv.reserve(x_adv_samples.size());
  for (const Tensor& xa : x_adv_samples) adv.push_back(model.forward(pass, xa));

  auto average_over_samples = [&](auto&& term_of) {
    Tensor acc = term_of(adv[0]);
    for (std::size_t s = 1; s < adv.size(); ++s)
      acc = add(acc, term_of(adv[s]));
    return adv.size() == 1 ? acc : scale(acc, inv_s);
  };

  LossComputation out;

  // L_c: classify both branches correctly.
  Tensor supervision = add(
      average_over_samples([&](const ForwardResult& a) {
        return mean_all(cross_entropy_rows(a.probs, y));
      }),
      mean_all(cross_entropy_rows(clean.probs, y)));
  out.breakdown.supervision = supervision.value();
  Tensor total = supervision;

  if (weights.lambda_lc > 0.0) {
    Tensor lc = average_over_samples([&](const ForwardResult& a) {
      return local_compactness_term(clean.rep, a.rep, weights.p);
    });
    out.breakdown.local_compactness = lc.value();
    total = add(total, scale(lc, weights.lambda_lc));
  }
  if (weights.lambda_gb > 0.0) {
    Tensor gb = global_compactness_term(clean.rep, y, weights.alpha, weights.p);
    out.breakdown.global_compactness = gb.value();
    total = add(total, scale(gb, weights.lambda_gb));
  }
  if (weights.lambda_conf > 0.0) {
    Tensor conf = add(average_over_samples([&](const ForwardResult& a) {
                        return mean_all(entropy_rows(a.probs));
                      }),
                      mean_all(entropy_rows(clean.probs)));
    out.breakdown.confidence = conf.value();
    total = add(total, scale(conf, weights.lambda_conf));
  }
  if (weights.lambda_smt > 0.0) {
    // VAT convention: the clean prediction is a constant anchor.
    Tensor smt = average_over_samples([&](const ForwardResult& a) {
      return mean_all(kl_rows(clean.probs, a.probs));
    });
    out.breakdown.smoothness = smt.value();
    total = add(total, scale(smt, weights.lambda_smt));
  }

  out.breakdown.total = total.value();
  out.total = total;
  return out;
}

TotalLossResult total_loss(const SplitModel& model, const Tensor& x,
                           const std::vector<int>& y,
                           const AttackConfig& adversary,
                           const LossWeights& weights, int sample_count,
                           std::uint64_t example_index_offset) {
  if (sample_count < 1) {
    throw ConfigError("total_loss: sample_count must be >= 1");
  }
  std::vector<Tensor> samples;
  samples.reserve(static_cast<std::size_t>(sample_count));
  for (int s = 0; s < sample_count; ++s) {
    AttackConfig cfg = adversary;
    cfg.seed = derive_seed(adversary.seed, {0xAD5A, static_cast<std::uint64_t>(s)});
    if (sample_count == 1) cfg.seed = adversary.seed;
    samples.push_back(
        generate_adversarial(model, x, y, cfg, example_index_offset).x_adv);
  }
  ModelPass pass = model.begin_pass(nullptr, false);
  const LossComputation comp =
      compose_total_loss(model, pass, x, samples, y, weights);
  return TotalLossResult{comp.breakdown, samples.front()};
}

}  // namespace adr
