#ifndef ADR_RUN_CONFIG_HPP
#define ADR_RUN_CONFIG_HPP

#include <optional>
#include <string>
#include <vector>

#include "adr/attack.hpp"
#include "adr/data.hpp"
#include "adr/trainer.hpp"

namespace adr {

/// One epsilon-sweep request: the base attack is run once per (eta, epsilon)
/// combination. Named presets expand to the standard grids
/// (mnist-pgd40: k=40, eta in {0.01,0.02}; cifar-pgd20: k=20,
/// eta in {0.0039,0.007}).
struct SweepSpec {
  AttackConfig base;
  std::vector<double> etas;
  std::vector<double> epsilons;
};

struct EvalConfig {
  int batch_size = 128;
  std::vector<AttackConfig> attacks;
  std::vector<SweepSpec> sweeps;
};

struct SurfaceConfig {
  double extent = 0.3;
  int grid_size = 41;
  std::uint64_t seed = 0;
  std::string space = "both";  // input | latent | both
};

struct EmbedConfig {
  AttackConfig attack;
  int max_examples = 500;
};

/// One JSON document per run: training setup, evaluation attack list, output
/// directory, seed. Unknown keys are rejected with their path; the resolved
/// form (defaults filled in) is echoed next to every artifact for provenance.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::optional<DatasetSpec> train_data;
  std::optional<DatasetSpec> test_data;
  ArchitectureConfig model;
  bool has_model = false;
  std::optional<TrainConfig> train;
  int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
  EvalConfig eval;
  SurfaceConfig surface;
  std::optional<EmbedConfig> embed;
};

RunConfig parse_run_config_file(const std::string& path);
RunConfig parse_run_config_text(const std::string& json_text);

/// Serializes the fully resolved configuration back to JSON.
std::string serialize_run_config(const RunConfig& cfg);

}  // namespace adr

#endif  // ADR_RUN_CONFIG_HPP
