#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "adr/errors.hpp"
#include "commands.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  adr::cli::Overrides overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_train_overrides) {
  cmd->add_option("--config", args.config_path, "Run configuration JSON")
      ->required();
  cmd->add_option_function<std::string>(
      "--output-dir",
      [&args](const std::string& v) { args.overrides.output_dir = v; },
      "Override the output directory (also: ADR_OUTPUT_DIR)");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&args](std::uint64_t v) { args.overrides.seed = v; },
      "Override the run seed");
  if (with_train_overrides) {
    cmd->add_option_function<int>(
        "--epochs", [&args](int v) { args.overrides.epochs = v; },
        "Override training epochs");
    cmd->add_option_function<int>(
        "--batch-size", [&args](int v) { args.overrides.batch_size = v; },
        "Override training batch size");
    cmd->add_option_function<double>(
        "--epsilon", [&args](double v) { args.overrides.epsilon = v; },
        "Override the training adversary's epsilon");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adr: adversarial robustness laboratory"};
  app.require_subcommand(1);

  CommonArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model");
  add_common(train_cmd, train_args, true);

  CommonArgs eval_args;
  std::string eval_checkpoint;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Evaluate natural and robust accuracy");
  add_common(eval_cmd, eval_args, false);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Model checkpoint")
      ->required();

  CommonArgs attack_args;
  std::string attack_checkpoint;
  int attack_count = 128;
  int attack_index = 0;
  CLI::App* attack_cmd =
      app.add_subcommand("attack", "Export one adversarial batch");
  add_common(attack_cmd, attack_args, false);
  attack_cmd->add_option("--checkpoint", attack_checkpoint, "Model checkpoint")
      ->required();
  attack_cmd->add_option("--count", attack_count, "Examples to attack");
  attack_cmd->add_option("--attack-index", attack_index,
                         "Index into $.eval.attacks");

  CommonArgs surface_args;
  std::string surface_checkpoint;
  int surface_index = 0;
  std::string surface_space;
  int surface_grid = 0;
  double surface_extent = 0.0;
  CLI::App* surface_cmd =
      app.add_subcommand("surface", "Loss-surface grid around one example");
  add_common(surface_cmd, surface_args, false);
  surface_cmd->add_option("--checkpoint", surface_checkpoint, "Model checkpoint")
      ->required();
  surface_cmd->add_option("--index", surface_index, "Test example index");
  surface_cmd->add_option("--space", surface_space,
                          "input | latent | both (default from config)");
  surface_cmd->add_option("--grid", surface_grid, "Grid size (odd)");
  surface_cmd->add_option("--extent", surface_extent, "Displacement extent");

  CommonArgs embed_args;
  std::string embed_checkpoint;
  CLI::App* embed_cmd =
      app.add_subcommand("embed", "Export intermediate representations");
  add_common(embed_cmd, embed_args, false);
  embed_cmd->add_option("--checkpoint", embed_checkpoint, "Model checkpoint")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) {
      return adr::cli::cmd_train(
          adr::cli::load_config(train_args.config_path, train_args.overrides));
    }
    if (eval_cmd->parsed()) {
      return adr::cli::cmd_eval(
          adr::cli::load_config(eval_args.config_path, eval_args.overrides),
          eval_checkpoint);
    }
    if (attack_cmd->parsed()) {
      return adr::cli::cmd_attack(
          adr::cli::load_config(attack_args.config_path, attack_args.overrides),
          attack_checkpoint, attack_count, attack_index);
    }
    if (surface_cmd->parsed()) {
      return adr::cli::cmd_surface(
          adr::cli::load_config(surface_args.config_path, surface_args.overrides),
          surface_checkpoint, surface_index, surface_space, surface_grid,
          surface_extent);
    }
    if (embed_cmd->parsed()) {
      return adr::cli::cmd_embed(
          adr::cli::load_config(embed_args.config_path, embed_args.overrides),
          embed_checkpoint);
    }
  } catch (const adr::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const adr::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const adr::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const adr::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
