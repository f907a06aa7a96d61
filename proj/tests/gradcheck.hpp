#ifndef ADR_TESTS_GRADCHECK_HPP
#define ADR_TESTS_GRADCHECK_HPP

// Finite-difference oracle for gradient verification. Lives in test code and
// never touches the tape: every check pits the analytic gradient against an
// independent numerical estimate.

#include <cmath>
#include <functional>
#include <vector>

#include "adr/rng.hpp"

namespace gradcheck {

inline constexpr double kStep = 1e-5;
inline constexpr double kRelTol = 1e-4;

/// Central finite differences of a scalar function at x.
inline std::vector<double> finite_difference(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x, double h = kStep) {
  std::vector<double> grad(x.size());
  std::vector<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

/// Max relative error between an analytic gradient and the FD estimate.
inline double max_rel_err(const std::vector<double>& analytic,
                          const std::vector<double>& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, rel_err(analytic[i], numeric[i]));
  }
  return worst;
}

/// Uniform draw in [-2,2], redrawing any coordinate closer than `margin` to
/// the listed kink values (keeps finite differences off subgradient points).
inline std::vector<double> sample_away_from(
    adr::DetRng& rng, std::size_t n, const std::vector<double>& kinks,
    double margin = 1e-3) {
  std::vector<double> out(n);
  for (auto& v : out) {
    for (;;) {
      v = rng.uniform(-2.0, 2.0);
      bool ok = true;
      for (double k : kinks) {
        if (std::fabs(v - k) < margin) ok = false;
      }
      if (ok) break;
    }
  }
  return out;
}

/// Ensures pairwise |v_i| gaps exceed `margin` (for max/inf-norm ties).
inline bool magnitudes_separated(const std::vector<double>& v, double margin) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      if (std::fabs(std::fabs(v[i]) - std::fabs(v[j])) < margin) return false;
    }
  }
  return true;
}

}  // namespace gradcheck

#endif  // ADR_TESTS_GRADCHECK_HPP
