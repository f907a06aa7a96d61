#ifndef ADR_TOOLS_COMMANDS_HPP
#define ADR_TOOLS_COMMANDS_HPP

#include <optional>
#include <string>

#include "adr/run_config.hpp"

namespace adr::cli {

/// Scalar overrides applied on top of the parsed config document.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;  // highest precedence
  std::optional<int> epochs;
  std::optional<double> epsilon;
  std::optional<int> batch_size;
};

/// Loads a run config and applies --flag and ADR_OUTPUT_DIR overrides.
RunConfig load_config(const std::string& path, const Overrides& overrides);

/// Writes checkpoint, training-log CSV, and the resolved-config echo into the
/// output directory.
int cmd_train(const RunConfig& cfg);

/// Natural accuracy, each configured attack, and every sweep; writes sweep
/// and report CSVs.
int cmd_eval(const RunConfig& cfg, const std::string& checkpoint);

/// Single-batch adversarial export for the first `count` test examples.
int cmd_attack(const RunConfig& cfg, const std::string& checkpoint, int count,
               int attack_index);

/// Input-space and/or latent-space loss grids around one test example.
int cmd_surface(const RunConfig& cfg, const std::string& checkpoint, int index,
                const std::string& space, int grid_size, double extent);

/// Embedding export: clean test subset plus adversarial examples.
int cmd_embed(const RunConfig& cfg, const std::string& checkpoint);

}  // namespace adr::cli

#endif  // ADR_TOOLS_COMMANDS_HPP
