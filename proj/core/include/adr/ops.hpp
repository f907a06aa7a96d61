#ifndef ADR_OPS_HPP
#define ADR_OPS_HPP

#include <vector>

#include "adr/tensor.hpp"

namespace adr {

/// Norm selector for compactness terms and attack bookkeeping.
enum class PNorm { one, two, inf };

PNorm pnorm_from_int(int p);  // accepts 1 or 2
int pnorm_to_int(PNorm p);    // 1, 2, or 0 for inf

/// Floor applied inside every log of a probability so that one-hot outputs
/// contribute 0 * log 0 = 0 and gradients stay finite.
inline constexpr double kProbFloor = 1e-12;

// Elementwise. Binary ops require identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& x);
Tensor elem_log(const Tensor& x);
Tensor elem_exp(const Tensor& x);
Tensor safe_log(const Tensor& x, double floor = kProbFloor);

// Linear algebra and network layers.
Tensor matmul(const Tensor& a, const Tensor& b);        // [m,k] x [k,n]
Tensor bias_row(const Tensor& x, const Tensor& b);      // [N,D] + [D]
Tensor conv2d(const Tensor& x, const Tensor& w);        // valid padding, stride 1
Tensor bias_channel(const Tensor& x, const Tensor& b);  // [N,F,H,W] + [F]
Tensor maxpool2(const Tensor& x);                       // 2x2, stride 2
Tensor flatten(const Tensor& x);                        // [N,...] -> [N,rest]
Tensor reshape(const Tensor& x, Shape shape);
Tensor softmax_last(const Tensor& x);  // rows clamped to [kProbFloor, 1-kProbFloor]

// Reductions.
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor sum_axis(const Tensor& x, int axis);
Tensor max_axis(const Tensor& x, int axis);  // ties: first maximal in scan order

// p-norms. Subgradients at non-smooth points: sign(0)=0 for p=1; zero vector
// for p=2 at the origin; for p=inf the full gradient goes to the first
// maximal-magnitude coordinate.
Tensor pnorm(const Tensor& x, PNorm p);          // whole tensor -> scalar
Tensor rowwise_pnorm(const Tensor& x, PNorm p);  // [B,D] -> [B]

/// probs[i, labels[i]] per row; the building block of cross-entropy.
Tensor select_class(const Tensor& probs, const std::vector<int>& labels);

/// Fused kernel: mean over unordered pairs i<j of w_ij * ||r_i - r_j||_p.
/// `pair_weights` holds w_ij for pairs in row-major (i,j) order, length
/// B*(B-1)/2. Analytic backward; verified against finite differences.
Tensor pairwise_weighted_pnorm_mean(const Tensor& reps,
                                    const std::vector<double>& pair_weights,
                                    PNorm p);

}  // namespace adr

#endif  // ADR_OPS_HPP
