#include "commands.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "adr/csv.hpp"
#include "adr/eval.hpp"
#include "adr/losses.hpp"
#include "adr/trainer.hpp"

namespace adr::cli {
namespace fs = std::filesystem;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
}

void echo_config(const RunConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  write_text(cfg.output_dir + "/config_resolved.json", serialize_run_config(cfg));
}

SplitModel load_and_check_model(const RunConfig& cfg, const std::string& path) {
  SplitModel model = load_checkpoint(path);
  if (cfg.has_model) {
    const auto& want = cfg.model;
    const auto& got = model.config();
    const bool cut_ok = want.cut_index < 0 || want.cut_index == got.cut_index;
    if (want.preset != got.preset || !cut_ok ||
        want.num_classes != got.num_classes ||
        (!want.input_shape.empty() && want.input_shape != got.input_shape)) {
      throw ConfigError("checkpoint '" + path +
                        "' does not match the configured architecture (" +
                        got.preset + ", cut " + std::to_string(got.cut_index) +
                        ", " + std::to_string(got.num_classes) + " classes)");
    }
  }
  return model;
}

Dataset require_test_data(const RunConfig& cfg) {
  if (!cfg.test_data) {
    throw ConfigError("config: this command needs $.data.test");
  }
  return materialize(*cfg.test_data);
}

}  // namespace

RunConfig load_config(const std::string& path, const Overrides& overrides) {
  RunConfig cfg = parse_run_config_file(path);
  if (overrides.seed) {
    cfg.seed = *overrides.seed;
    if (cfg.train) cfg.train->seed = *overrides.seed;
  }
  if (overrides.epochs && cfg.train) cfg.train->epochs = *overrides.epochs;
  if (overrides.batch_size && cfg.train)
    cfg.train->batch_size = *overrides.batch_size;
  if (overrides.epsilon && cfg.train)
    cfg.train->adversary.epsilon = *overrides.epsilon;
  if (const char* env = std::getenv("ADR_OUTPUT_DIR"); env && *env) {
    cfg.output_dir = env;
  }
  if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;
  if (cfg.train) cfg.train->validate();
  return cfg;
}

int cmd_train(const RunConfig& cfg) {
  if (!cfg.train) throw ConfigError("config: train command needs $.train");
  echo_config(cfg);

  const int every = cfg.checkpoint_every;
  const std::string outdir = cfg.output_dir;
  EpochCallback on_epoch;
  if (every > 0) {
    on_epoch = [every, outdir](int epoch, const SplitModel& model) {
      if ((epoch + 1) % every == 0) {
        save_checkpoint(model, outdir + "/checkpoint_epoch_" +
                                   std::to_string(epoch + 1) + ".ckpt");
      }
    };
  }

  const TrainResult result = train(*cfg.train, on_epoch);
  save_checkpoint(result.model, outdir + "/model.ckpt");
  write_train_log(result.log, outdir + "/training_log.csv");
  std::cout << "trained " << cfg.train->epochs << " epochs, "
            << result.log.size() << " steps; checkpoint at " << outdir
            << "/model.ckpt\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint) {
  echo_config(cfg);
  const SplitModel model = load_and_check_model(cfg, checkpoint);
  const Dataset test = require_test_data(cfg);

  EvalReport report;
  const NaturalResult nat = natural_accuracy(model, test, cfg.eval.batch_size);
  report.natural_accuracy = nat.accuracy;
  report.clean_bitmap = nat.correct;
  std::cout << "natural accuracy: " << nat.accuracy << "\n";

  for (const auto& attack : cfg.eval.attacks) {
    const RobustResult r = robust_accuracy(model, test, attack, cfg.eval.batch_size);
    AttackOutcome outcome;
    outcome.cfg = attack;
    outcome.accuracy = r.accuracy;
    outcome.robust = r.robust;
    outcome.clean_correct = r.clean_correct;
    report.attacks.push_back(std::move(outcome));
    std::cout << attack_method_to_string(attack.method) << " eps="
              << attack.epsilon << " eta=" << attack.eta << " k=" << attack.k
              << " " << attack_scenario_to_string(attack.scenario)
              << ": robust accuracy " << r.accuracy << "\n";
  }

  for (const auto& sweep : cfg.eval.sweeps) {
    for (double eta : sweep.etas) {
      AttackConfig base = sweep.base;
      base.eta = eta;
      EvalReport sweep_report =
          epsilon_sweep(model, test, base, sweep.epsilons, cfg.eval.batch_size);
      for (auto& outcome : sweep_report.attacks) {
        std::cout << "sweep " << attack_method_to_string(outcome.cfg.method)
                  << " eps=" << outcome.cfg.epsilon << " eta=" << outcome.cfg.eta
                  << ": robust accuracy " << outcome.accuracy << "\n";
        report.attacks.push_back(std::move(outcome));
      }
    }
  }

  save_report(report, cfg.output_dir);
  write_sweep_csv(report, cfg.output_dir + "/sweep.csv");
  std::cout << "report written to " << cfg.output_dir << "\n";
  return 0;
}

int cmd_attack(const RunConfig& cfg, const std::string& checkpoint, int count,
               int attack_index) {
  echo_config(cfg);
  const SplitModel model = load_and_check_model(cfg, checkpoint);
  const Dataset test = require_test_data(cfg);
  if (cfg.eval.attacks.empty()) {
    throw ConfigError("config: attack command needs $.eval.attacks");
  }
  if (attack_index < 0 ||
      attack_index >= static_cast<int>(cfg.eval.attacks.size())) {
    throw ConfigError("attack index " + std::to_string(attack_index) +
                      " outside the configured attack list");
  }
  const AttackConfig attack = cfg.eval.attacks[static_cast<std::size_t>(attack_index)];
  const int n = std::min(count > 0 ? count : test.size(), test.size());
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  const Tensor x = test.batch(idx);
  const std::vector<int> y = test.batch_labels(idx);

  AdversarialBatch batch;
  if (attack.scenario == AttackScenario::targeted) {
    batch = targeted_attack(model, x, y, attack.target_label, attack);
  } else {
    batch = generate_adversarial(model, x, y, attack);
  }
  const std::vector<int> pred = SplitModel::argmax_rows(model.predict(batch.x_adv));

  const std::size_t dim = x.size() / static_cast<std::size_t>(n);
  const std::string path = cfg.output_dir + "/adversarial.csv";
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "id,label,pred,success,aborted,achieved_loss,linf";
  for (std::size_t d = 0; d < dim; ++d) out << ",x_" << d;
  out << "\n";
  for (int i = 0; i < n; ++i) {
    const auto off = static_cast<std::size_t>(i) * dim;
    double linf = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      linf = std::max(linf,
                      std::fabs(batch.x_adv.data()[off + d] - x.data()[off + d]));
    }
    out << i << ',' << y[static_cast<std::size_t>(i)] << ','
        << pred[static_cast<std::size_t>(i)] << ','
        << int(batch.success[static_cast<std::size_t>(i)]) << ','
        << int(batch.aborted[static_cast<std::size_t>(i)]) << ','
        << format_double(batch.achieved_loss[static_cast<std::size_t>(i)]) << ','
        << format_double(linf);
    for (std::size_t d = 0; d < dim; ++d)
      out << ',' << format_double(batch.x_adv.data()[off + d]);
    out << '\n';
  }
  std::cout << "adversarial batch written to " << path << "\n";
  return 0;
}

int cmd_surface(const RunConfig& cfg, const std::string& checkpoint, int index,
                const std::string& space, int grid_size, double extent) {
  echo_config(cfg);
  const SplitModel model = load_and_check_model(cfg, checkpoint);
  const Dataset test = require_test_data(cfg);
  if (index < 0 || index >= test.size()) {
    throw ConfigError("surface: example index " + std::to_string(index) +
                      " outside [0," + std::to_string(test.size()) + ")");
  }
  const int G = grid_size > 0 ? grid_size : cfg.surface.grid_size;
  const double ext = extent > 0.0 ? extent : cfg.surface.extent;
  const std::string which = space.empty() ? cfg.surface.space : space;
  if (which != "input" && which != "latent" && which != "both") {
    throw ConfigError("surface: space must be input, latent, or both");
  }
  const Tensor x = test.example(index);
  const int label = test.labels[static_cast<std::size_t>(index)];

  if (which == "input" || which == "both") {
    const SurfaceGrid grid =
        loss_surface(model, x, label, ext, G, cfg.surface.seed, false);
    write_surface_csv(grid, cfg.output_dir + "/surface_input.csv");
    std::cout << "input-space grid (" << G << "x" << G << ") written\n";
  }
  if (which == "latent" || which == "both") {
    const SurfaceGrid grid =
        loss_surface(model, x, label, ext, G, cfg.surface.seed, true);
    write_surface_csv(grid, cfg.output_dir + "/surface_latent.csv");
    std::cout << "latent-space grid (" << G << "x" << G << ") written\n";
  }
  return 0;
}

int cmd_embed(const RunConfig& cfg, const std::string& checkpoint) {
  echo_config(cfg);
  const SplitModel model = load_and_check_model(cfg, checkpoint);
  Dataset test = require_test_data(cfg);
  if (!cfg.embed) throw ConfigError("config: embed command needs $.embed");

  const int n = std::min(cfg.embed->max_examples, test.size());
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Dataset subset;
  subset.images = test.batch(idx);
  subset.labels = test.batch_labels(idx);
  subset.num_classes = test.num_classes;
  subset.split = test.split;

  const AdversarialBatch batch = generate_adversarial(
      model, subset.images, subset.labels, cfg.embed->attack);
  const auto rows = export_embeddings(model, subset, batch.x_adv, subset.labels,
                                      batch.success);
  write_embeddings_csv(rows, cfg.output_dir + "/embeddings.csv");
  std::cout << rows.size() << " embedding rows written to " << cfg.output_dir
            << "/embeddings.csv\n";
  return 0;
}

}  // namespace adr::cli
