#ifndef ADR_EVAL_HPP
#define ADR_EVAL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "adr/attack.hpp"
#include "adr/data.hpp"
#include "adr/model.hpp"

namespace adr {

/// Robust accuracy for one attack configuration, with the per-example
/// outcome bitmaps persisted so positive/negative adversarial example
/// selection stays reproducible.
struct AttackOutcome {
  AttackConfig cfg;
  double accuracy = 0.0;
  std::vector<std::uint8_t> robust;
  std::vector<std::uint8_t> clean_correct;
};

struct EvalReport {
  double natural_accuracy = 0.0;
  std::vector<std::uint8_t> clean_bitmap;
  std::vector<AttackOutcome> attacks;
};

struct NaturalResult {
  double accuracy = 0.0;
  std::vector<std::uint8_t> correct;
};

struct RobustResult {
  double accuracy = 0.0;
  std::vector<std::uint8_t> robust;
  std::vector<std::uint8_t> clean_correct;
};

/// Fraction of examples whose argmax prediction matches the label.
NaturalResult natural_accuracy(const SplitModel& model, const Dataset& ds,
                               int batch_size = 128);

/// Robust accuracy under cfg. Non-targeted and trades-kl count an example as
/// robust iff it is clean-correct and the attack failed; multi-targeted uses
/// the all-wrong-labels rule. Attacks run in batches with per-example seeds
/// keyed by the global dataset index.
RobustResult robust_accuracy(const SplitModel& model, const Dataset& ds,
                             const AttackConfig& cfg, int batch_size = 128);

/// robust_accuracy per epsilon, collected into a report.
EvalReport epsilon_sweep(const SplitModel& model, const Dataset& ds,
                         const AttackConfig& base,
                         const std::vector<double>& epsilons,
                         int batch_size = 128);

/// Loss-landscape grid around one example: direction 1 is the normalized
/// input gradient of the true-label loss, direction 2 a random unit vector
/// orthogonalized against it. Cell (i,j) evaluates the displaced input
/// (clipped to [0,1] in input space); the center cell is the anchor itself.
struct SurfaceGrid {
  int grid_size = 0;  // odd
  double extent = 0.0;
  std::string space;  // "input" | "latent"
  std::uint64_t seed = 0;
  bool d1_fallback_random = false;  // gradient was zero at the anchor
  std::vector<double> d1, d2;       // unit vectors
  std::vector<double> u, v;         // per-cell displacements, row-major (i,j)
  std::vector<double> loss;
  std::vector<int> pred_label;
};

SurfaceGrid loss_surface(const SplitModel& model, const Tensor& x_single,
                         int label, double extent, int grid_size,
                         std::uint64_t seed, bool latent_space = false);

/// Embedding export row: intermediate representation plus label, adversarial
/// flag, polarity (+1 fooled / -1 failed, 0 for clean rows) and prediction
/// entropy.
struct EmbeddingRow {
  int id = 0;
  int label = 0;
  bool is_adv = false;
  int polarity = 0;
  double entropy = 0.0;
  std::vector<double> rep;
};

std::vector<EmbeddingRow> export_embeddings(const SplitModel& model,
                                            const Dataset& clean,
                                            const Tensor& x_adv,
                                            const std::vector<int>& adv_labels,
                                            const std::vector<std::uint8_t>& adv_success);

// CSV surfaces. Every writer has a reader and round-trips losslessly.

/// epsilon,eta,k,method,scenario,accuracy
void write_sweep_csv(const EvalReport& report, const std::string& path);
struct SweepRow {
  double epsilon = 0.0, eta = 0.0;
  int k = 0;
  std::string method, scenario;
  double accuracy = 0.0;
};
std::vector<SweepRow> read_sweep_csv(const std::string& path);

/// i,j,u,v,loss,pred_label with a comment header recording the directions'
/// seed and fallback flag.
void write_surface_csv(const SurfaceGrid& grid, const std::string& path);
SurfaceGrid read_surface_csv(const std::string& path);

/// id,label,is_adv,polarity,entropy,rep_0..rep_{d-1}
void write_embeddings_csv(const std::vector<EmbeddingRow>& rows,
                          const std::string& path);
std::vector<EmbeddingRow> read_embeddings_csv(const std::string& path);

/// Full report (summary + per-example bitmaps) across two CSV files in `dir`.
void save_report(const EvalReport& report, const std::string& dir);
EvalReport load_report(const std::string& dir);

}  // namespace adr

#endif  // ADR_EVAL_HPP
