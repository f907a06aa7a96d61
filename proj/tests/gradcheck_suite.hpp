#ifndef ADR_TESTS_GRADCHECK_SUITE_HPP
#define ADR_TESTS_GRADCHECK_SUITE_HPP

// Named finite-difference checks covering every differentiable op and every
// loss term. Both the unit suite and the acceptance gate run these.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "adr/losses.hpp"
#include "adr/model.hpp"
#include "adr/ops.hpp"
#include "gradcheck.hpp"

namespace gradsuite {

struct Outcome {
  double worst = 0.0;
  long checked = 0;
  long kink_skips = 0;
  bool failed = false;
};

inline double fd_coord(const std::function<double(const std::vector<double>&)>& f,
                       const std::vector<double>& x, std::size_t i, double h) {
  std::vector<double> probe = x;
  probe[i] = x[i] + h;
  const double up = f(probe);
  probe[i] = x[i] - h;
  const double down = f(probe);
  return (up - down) / (2.0 * h);
}

/// Compares an analytic gradient against central differences. Coordinates
/// whose FD estimate is itself unstable under step halving sit on a kink of
/// the piecewise objective and are skipped; a wrong analytic gradient gives a
/// stable mismatch and still fails.
inline void compare(Outcome& out,
                    const std::function<double(const std::vector<double>&)>& f,
                    const std::vector<double>& x0,
                    const std::vector<double>& analytic) {
  const auto fd = gradcheck::finite_difference(f, x0, gradcheck::kStep);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double err = gradcheck::rel_err(analytic[i], fd[i]);
    if (err >= gradcheck::kRelTol) {
      const double fd_half = fd_coord(f, x0, i, gradcheck::kStep / 2.0);
      if (gradcheck::rel_err(fd[i], fd_half) > 1e-6) {
        ++out.kink_skips;
        continue;
      }
      out.failed = true;
    }
    out.worst = std::max(out.worst, err);
    ++out.checked;
  }
}

/// Scalarizes an op with fixed random weights and checks the gradient w.r.t.
/// input `wrt`. `build` must be a pure function of its tensor arguments.
inline void check_op(Outcome& out, const std::vector<adr::Shape>& shapes,
                     const std::vector<std::vector<double>>& data, int wrt,
                     const std::function<adr::Tensor(const std::vector<adr::Tensor>&)>& build,
                     adr::DetRng& wrng) {
  using adr::Tensor;
  adr::Tape tape;
  std::vector<Tensor> tracked;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (static_cast<int>(i) == wrt) {
      tracked.push_back(tape.leaf(shapes[i], data[i]));
    } else {
      tracked.push_back(Tensor(shapes[i], data[i]));
    }
  }
  const Tensor output = build(tracked);
  std::vector<double> weights(output.size());
  for (auto& w : weights) w = wrng.uniform(-1.0, 1.0);
  const Tensor loss =
      adr::sum_all(adr::mul(output, Tensor(output.shape(), weights)));
  tape.backward(loss);
  const std::vector<double> analytic = tape.grad(tracked[static_cast<std::size_t>(wrt)]);

  auto f = [&](const std::vector<double>& v) {
    std::vector<Tensor> plain;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      plain.push_back(Tensor(shapes[i], static_cast<int>(i) == wrt ? v : data[i]));
    }
    const Tensor o = build(plain);
    double acc = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k)
      acc += o.value(k) * weights[k];
    return acc;
  };
  compare(out, f, data[static_cast<std::size_t>(wrt)], analytic);
}

using Check = std::function<void(Outcome&, std::uint64_t seed)>;

inline std::vector<double> uniform_vec(adr::DetRng& rng, std::size_t n,
                                       double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

/// One (name, per-instance check) pair per differentiable op.
inline std::vector<std::pair<std::string, Check>> op_checks() {
  using adr::PNorm;
  using adr::Shape;
  using adr::Tensor;
  std::vector<std::pair<std::string, Check>> checks;

  auto simple = [](const char* name,
                   std::function<Tensor(const Tensor&)> op,
                   std::vector<double> kinks = {},
                   double lo = -2.0, double hi = 2.0) {
    return std::make_pair(std::string(name),
                          Check([op = std::move(op), kinks, lo, hi](
                                    Outcome& out, std::uint64_t seed) {
      adr::DetRng rng(seed);
      std::vector<double> x(12);
      for (auto& v : x) {
        for (;;) {
          v = rng.uniform(lo, hi);
          bool ok = true;
          for (double k : kinks)
            if (std::fabs(v - k) < 1e-3) ok = false;
          if (ok) break;
        }
      }
      check_op(out, {{3, 4}}, {x}, 0,
               [op](const std::vector<Tensor>& t) { return op(t[0]); }, rng);
    }));
  };

  checks.push_back(simple("relu", [](const Tensor& t) { return adr::relu(t); },
                          {0.0}));
  checks.push_back(simple("elem_log",
                          [](const Tensor& t) { return adr::elem_log(t); }, {},
                          0.1, 2.0));
  checks.push_back(simple("elem_exp",
                          [](const Tensor& t) { return adr::elem_exp(t); }));
  checks.push_back(simple("safe_log",
                          [](const Tensor& t) { return adr::safe_log(t); }, {},
                          0.1, 2.0));
  checks.push_back(simple("scale",
                          [](const Tensor& t) { return adr::scale(t, -1.7); }));
  checks.push_back(simple("softmax", [](const Tensor& t) {
    return adr::softmax_last(t);
  }));
  checks.push_back(simple("flatten", [](const Tensor& t) {
    return adr::flatten(t);
  }));
  checks.push_back(simple("sum_all", [](const Tensor& t) {
    return adr::sum_all(t);
  }));
  checks.push_back(simple("mean_all", [](const Tensor& t) {
    return adr::mean_all(t);
  }));
  checks.push_back(simple("sum_axis", [](const Tensor& t) {
    return adr::sum_axis(t, 1);
  }));

  for (int side = 0; side < 2; ++side) {
    checks.emplace_back(std::string("add.arg") + std::to_string(side),
                        [side](Outcome& out, std::uint64_t seed) {
                          adr::DetRng rng(seed);
                          auto a = uniform_vec(rng, 12);
                          auto b = uniform_vec(rng, 12);
                          check_op(out, {{3, 4}, {3, 4}}, {a, b}, side,
                                   [](const std::vector<Tensor>& t) {
                                     return adr::add(t[0], t[1]);
                                   },
                                   rng);
                        });
    checks.emplace_back(std::string("sub.arg") + std::to_string(side),
                        [side](Outcome& out, std::uint64_t seed) {
                          adr::DetRng rng(seed);
                          auto a = uniform_vec(rng, 12);
                          auto b = uniform_vec(rng, 12);
                          check_op(out, {{3, 4}, {3, 4}}, {a, b}, side,
                                   [](const std::vector<Tensor>& t) {
                                     return adr::sub(t[0], t[1]);
                                   },
                                   rng);
                        });
    checks.emplace_back(std::string("mul.arg") + std::to_string(side),
                        [side](Outcome& out, std::uint64_t seed) {
                          adr::DetRng rng(seed);
                          auto a = uniform_vec(rng, 12);
                          auto b = uniform_vec(rng, 12);
                          check_op(out, {{3, 4}, {3, 4}}, {a, b}, side,
                                   [](const std::vector<Tensor>& t) {
                                     return adr::mul(t[0], t[1]);
                                   },
                                   rng);
                        });
    checks.emplace_back(std::string("matmul.arg") + std::to_string(side),
                        [side](Outcome& out, std::uint64_t seed) {
                          adr::DetRng rng(seed);
                          auto a = uniform_vec(rng, 6);
                          auto b = uniform_vec(rng, 12);
                          check_op(out, {{2, 3}, {3, 4}}, {a, b}, side,
                                   [](const std::vector<Tensor>& t) {
                                     return adr::matmul(t[0], t[1]);
                                   },
                                   rng);
                        });
    checks.emplace_back(std::string("bias_row.arg") + std::to_string(side),
                        [side](Outcome& out, std::uint64_t seed) {
                          adr::DetRng rng(seed);
                          auto a = uniform_vec(rng, 12);
                          auto b = uniform_vec(rng, 4);
                          check_op(out, {{3, 4}, {4}}, {a, b}, side,
                                   [](const std::vector<Tensor>& t) {
                                     return adr::bias_row(t[0], t[1]);
                                   },
                                   rng);
                        });
    checks.emplace_back(std::string("conv2d.arg") + std::to_string(side),
                        [side](Outcome& out, std::uint64_t seed) {
                          adr::DetRng rng(seed);
                          auto x = uniform_vec(rng, 2 * 2 * 5 * 4);
                          auto w = uniform_vec(rng, 3 * 2 * 2 * 2);
                          check_op(out, {{2, 2, 5, 4}, {3, 2, 2, 2}}, {x, w},
                                   side,
                                   [](const std::vector<Tensor>& t) {
                                     return adr::conv2d(t[0], t[1]);
                                   },
                                   rng);
                        });
    checks.emplace_back(std::string("bias_channel.arg") + std::to_string(side),
                        [side](Outcome& out, std::uint64_t seed) {
                          adr::DetRng rng(seed);
                          auto x = uniform_vec(rng, 2 * 3 * 2 * 2);
                          auto b = uniform_vec(rng, 3);
                          check_op(out, {{2, 3, 2, 2}, {3}}, {x, b}, side,
                                   [](const std::vector<Tensor>& t) {
                                     return adr::bias_channel(t[0], t[1]);
                                   },
                                   rng);
                        });
  }

  checks.emplace_back("maxpool2", [](Outcome& out, std::uint64_t seed) {
    adr::DetRng rng(seed);
    // Keep window entries separated so the selected maximum is stable under
    // the FD probes.
    std::vector<double> x;
    for (;;) {
      x = uniform_vec(rng, 1 * 2 * 4 * 4);
      if (gradcheck::magnitudes_separated(x, 1e-3)) break;
    }
    check_op(out, {{1, 2, 4, 4}}, {x}, 0,
             [](const std::vector<Tensor>& t) { return adr::maxpool2(t[0]); },
             rng);
  });

  checks.emplace_back("max_axis", [](Outcome& out, std::uint64_t seed) {
    adr::DetRng rng(seed);
    std::vector<double> x;
    for (;;) {
      x = uniform_vec(rng, 12);
      if (gradcheck::magnitudes_separated(x, 1e-3)) break;
    }
    check_op(out, {{3, 4}}, {x}, 0,
             [](const std::vector<Tensor>& t) { return adr::max_axis(t[0], 1); },
             rng);
  });

  const std::vector<std::pair<std::string, PNorm>> norms = {
      {"1", PNorm::one}, {"2", PNorm::two}, {"inf", PNorm::inf}};
  for (const auto& [pname, p] : norms) {
    checks.emplace_back("pnorm.p" + pname,
                        [p = p](Outcome& out, std::uint64_t seed) {
                          adr::DetRng rng(seed);
                          std::vector<double> x;
                          for (;;) {
                            x = gradcheck::sample_away_from(rng, 8, {0.0});
                            if (p != PNorm::inf ||
                                gradcheck::magnitudes_separated(x, 1e-3))
                              break;
                          }
                          check_op(out, {{8}}, {x}, 0,
                                   [p](const std::vector<Tensor>& t) {
                                     return adr::pnorm(t[0], p);
                                   },
                                   rng);
                        });
    checks.emplace_back("rowwise_pnorm.p" + pname,
                        [p = p](Outcome& out, std::uint64_t seed) {
                          adr::DetRng rng(seed);
                          std::vector<double> x;
                          for (;;) {
                            x = gradcheck::sample_away_from(rng, 12, {0.0});
                            if (p != PNorm::inf ||
                                gradcheck::magnitudes_separated(x, 1e-3))
                              break;
                          }
                          check_op(out, {{3, 4}}, {x}, 0,
                                   [p](const std::vector<Tensor>& t) {
                                     return adr::rowwise_pnorm(t[0], p);
                                   },
                                   rng);
                        });
    checks.emplace_back(
        "pairwise_weighted_pnorm_mean.p" + pname,
        [p = p](Outcome& out, std::uint64_t seed) {
          adr::DetRng rng(seed);
          std::vector<double> x;
          for (;;) {
            x = uniform_vec(rng, 12);
            if (p == PNorm::two || gradcheck::magnitudes_separated(x, 2e-3))
              break;
          }
          std::vector<double> w(3);  // B=3 -> 3 pairs
          for (auto& v : w) v = rng.uniform(-1.0, 1.0);
          check_op(out, {{3, 4}}, {x}, 0,
                   [p, w](const std::vector<Tensor>& t) {
                     return adr::pairwise_weighted_pnorm_mean(t[0], w, p);
                   },
                   rng);
        });
  }

  checks.emplace_back("select_class", [](Outcome& out, std::uint64_t seed) {
    adr::DetRng rng(seed);
    auto x = uniform_vec(rng, 12, 0.05, 2.0);
    std::vector<int> labels(3);
    for (auto& y : labels) y = static_cast<int>(rng.uniform_index(4));
    check_op(out, {{3, 4}}, {x}, 0,
             [labels](const std::vector<Tensor>& t) {
               return adr::select_class(t[0], labels);
             },
             rng);
  });

  return checks;
}

// --- Loss terms on a toy split model, differentiated w.r.t. theta ---------

inline std::vector<double> flatten_params(const adr::SplitModel& m) {
  std::vector<double> flat;
  for (const auto& p : m.params())
    flat.insert(flat.end(), p.value.begin(), p.value.end());
  return flat;
}

inline void set_params(adr::SplitModel& m, const std::vector<double>& flat) {
  std::size_t at = 0;
  for (auto& p : m.params()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(at), p.value.size(),
                p.value.begin());
    at += p.value.size();
  }
}

enum class LossTerm { supervision, local, global, confidence, smoothness, total };

/// Value of the chosen term at the pass's parameters. The smoothness anchor
/// is passed in frozen so the finite-difference direction matches the
/// stop-gradient semantics of the analytic term.
inline adr::Tensor build_term(const adr::SplitModel& model, adr::ModelPass& pass,
                              LossTerm term, const adr::Tensor& x,
                              const adr::Tensor& xa, const std::vector<int>& y,
                              const adr::Tensor& smoothness_ref, adr::PNorm p) {
  using namespace adr;
  const ForwardResult clean = model.forward(pass, x);
  const ForwardResult advr = model.forward(pass, xa);
  switch (term) {
    case LossTerm::supervision:
      return add(mean_all(cross_entropy_rows(advr.probs, y)),
                 mean_all(cross_entropy_rows(clean.probs, y)));
    case LossTerm::local:
      return local_compactness_term(clean.rep, advr.rep, p);
    case LossTerm::global:
      return global_compactness_term(clean.rep, y, 0.99, p);
    case LossTerm::confidence:
      return add(mean_all(entropy_rows(advr.probs)),
                 mean_all(entropy_rows(clean.probs)));
    case LossTerm::smoothness:
      return mean_all(kl_rows(smoothness_ref, advr.probs));
    case LossTerm::total: {
      // Eq-(7) combination with unit weights; smoothness checked separately
      // because its anchor freezes at the base parameters.
      Tensor t = add(mean_all(cross_entropy_rows(advr.probs, y)),
                     mean_all(cross_entropy_rows(clean.probs, y)));
      t = add(t, local_compactness_term(clean.rep, advr.rep, p));
      t = add(t, global_compactness_term(clean.rep, y, 0.99, p));
      t = add(t, add(mean_all(entropy_rows(advr.probs)),
                     mean_all(entropy_rows(clean.probs))));
      return t;
    }
  }
  throw std::logic_error("unreachable");
}

inline void check_loss_term(Outcome& out, LossTerm term, adr::PNorm p,
                            std::uint64_t seed) {
  using namespace adr;
  ArchitectureConfig arch;
  arch.preset = "mlp-toy";
  arch.input_shape = {2};
  arch.num_classes = 3;
  SplitModel model = build_model(arch, seed);

  DetRng rng(derive_seed(seed, {0x10, static_cast<std::uint64_t>(term)}));
  const int B = 3;
  std::vector<double> xd(B * 2), xad(B * 2);
  for (auto& v : xd) v = rng.uniform(0.0, 1.0);
  for (std::size_t i = 0; i < xad.size(); ++i)
    xad[i] = std::min(1.0, std::max(0.0, xd[i] + rng.uniform(-0.1, 0.1)));
  std::vector<int> y(B);
  for (auto& v : y) v = static_cast<int>(rng.uniform_index(3));
  const Tensor x({B, 2}, xd);
  const Tensor xa({B, 2}, xad);
  const Tensor smoothness_ref = model.predict(x);

  // Analytic gradient.
  Tape tape;
  ModelPass pass = model.begin_pass(&tape, true);
  const Tensor loss = build_term(model, pass, term, x, xa, y, smoothness_ref, p);
  tape.backward(loss);
  std::vector<double> analytic;
  for (const auto& pt : pass.params) {
    const auto& g = tape.grad(pt);
    analytic.insert(analytic.end(), g.begin(), g.end());
  }

  const std::vector<double> theta0 = flatten_params(model);
  SplitModel probe = model;
  auto f = [&](const std::vector<double>& theta) {
    set_params(probe, theta);
    ModelPass plain = probe.begin_pass(nullptr, false);
    return build_term(probe, plain, term, x, xa, y, smoothness_ref, p).value();
  };
  compare(out, f, theta0, analytic);
  set_params(probe, theta0);
}

inline std::vector<std::pair<std::string, Check>> loss_checks() {
  using adr::PNorm;
  std::vector<std::pair<std::string, Check>> checks;
  const std::vector<std::pair<std::string, LossTerm>> terms = {
      {"supervision(eq4)", LossTerm::supervision},
      {"local_compactness(eq1)", LossTerm::local},
      {"global_compactness(eq3)", LossTerm::global},
      {"confidence(eq5)", LossTerm::confidence},
      {"smoothness(eq6)", LossTerm::smoothness},
      {"total(eq7)", LossTerm::total},
  };
  for (const auto& [name, term] : terms) {
    checks.emplace_back("loss." + name,
                        [term = term](Outcome& out, std::uint64_t seed) {
                          const adr::PNorm p =
                              seed % 2 == 0 ? PNorm::two : PNorm::one;
                          check_loss_term(out, term, p, seed);
                        });
  }
  return checks;
}

inline Outcome run_instances(const Check& check, int instances,
                             std::uint64_t base_seed) {
  Outcome out;
  for (int i = 0; i < instances; ++i) {
    check(out, adr::derive_seed(base_seed, {static_cast<std::uint64_t>(i)}));
  }
  return out;
}

}  // namespace gradsuite

#endif  // ADR_TESTS_GRADCHECK_SUITE_HPP
