// End-to-end checks of the adr binary: subcommands, exit codes, artifacts.
// Usage: adr_cli_e2e <path-to-adr-binary>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "adr/csv.hpp"
#include "adr/eval.hpp"

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
  if (ok) {
    std::cout << "  ok: " << what << "\n";
  } else {
    ++failures;
    std::cout << "  FAILED: " << what << "\n";
  }
}

int run(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

const char* kConfig = R"JSON({
  "seed": 17,
  "output_dir": "%OUT%",
  "data": {
    "train": {"kind": "synthetic-blobs", "n": 96, "classes": 3, "dim": 2,
              "separation": 0.5, "noise": 0.04, "seed": 1},
    "test": {"kind": "synthetic-blobs", "n": 48, "classes": 3, "dim": 2,
             "separation": 0.5, "noise": 0.04, "seed": 2}
  },
  "model": {"preset": "mlp-toy", "input_shape": [2], "num_classes": 3},
  "train": {
    "adversary": {"method": "pgd", "epsilon": 0.1, "eta": 0.02, "k": 5},
    "loss_weights": {"lambda_lc": 1.0, "lambda_gb": 1.0, "lambda_smt": 1.0},
    "optimizer": {"kind": "sgd-momentum", "lr": 0.05, "momentum": 0.9},
    "batch_size": 16,
    "epochs": 6
  },
  "eval": {
    "attacks": [
      {"method": "pgd", "epsilon": 0.1, "eta": 0.02, "k": 10},
      {"method": "pgd", "epsilon": 0.1, "eta": 0.02, "k": 10,
       "scenario": "multi-targeted"}
    ],
    "sweeps": [{"method": "pgd", "k": 10, "etas": [0.02],
                "epsilons": [0.0, 0.05, 0.1], "random_start": false}]
  },
  "surface": {"extent": 0.3, "grid_size": 41, "seed": 4},
  "embed": {"attack": {"method": "pgd", "epsilon": 0.1, "eta": 0.02, "k": 10},
            "max_examples": 16}
})JSON";

std::string write_config(const fs::path& dir, const std::string& out_dir) {
  std::string text = kConfig;
  const std::string token = "%OUT%";
  text.replace(text.find(token), token.size(), out_dir);
  const fs::path path = dir / "run.json";
  std::ofstream out(path);
  out << text;
  return path.string();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: adr_cli_e2e <adr-binary>\n";
    return 2;
  }
  const std::string adr = argv[1];
  const fs::path work = fs::temp_directory_path() / "adr_cli_e2e";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string out1 = (work / "run1").string();
  const std::string config = write_config(work, out1);
  const std::string ckpt = out1 + "/model.ckpt";

  std::cout << "train subcommand:\n";
  check(run(adr + " train --config " + config) == 0, "train exits 0");
  check(fs::exists(ckpt), "checkpoint written");
  check(fs::exists(out1 + "/training_log.csv"), "training log written");
  check(fs::exists(out1 + "/config_resolved.json"), "resolved config echoed");

  std::cout << "determinism:\n";
  const std::string out2 = (work / "run2").string();
  check(run(adr + " train --config " + config + " --output-dir " + out2) == 0,
        "second run exits 0");
  check(slurp(ckpt) == slurp(out2 + "/model.ckpt"),
        "same config and seed give byte-identical checkpoints");

  std::cout << "eval subcommand:\n";
  check(run(adr + " eval --config " + config + " --checkpoint " + ckpt) == 0,
        "eval exits 0");
  check(fs::exists(out1 + "/sweep.csv"), "sweep csv written");
  check(fs::exists(out1 + "/report.csv"), "report summary written");
  check(fs::exists(out1 + "/outcomes.csv"), "per-example bitmaps written");
  {
    const auto rows = adr::read_sweep_csv(out1 + "/sweep.csv");
    check(rows.size() == 5, "two attacks plus three sweep points");
    const adr::EvalReport report = adr::load_report(out1);
    bool found_eps0 = false;
    for (const auto& r : rows) {
      if (r.epsilon == 0.0) {
        found_eps0 = true;
        check(r.accuracy == report.natural_accuracy,
              "epsilon 0 sweep row equals natural accuracy");
      }
    }
    check(found_eps0, "sweep includes the epsilon 0 row");
  }

  std::cout << "attack subcommand:\n";
  check(run(adr + " attack --config " + config + " --checkpoint " + ckpt +
            " --count 8") == 0,
        "attack exits 0");
  check(fs::exists(out1 + "/adversarial.csv"), "adversarial batch written");

  std::cout << "surface subcommand:\n";
  check(run(adr + " surface --config " + config + " --checkpoint " + ckpt +
            " --index 0") == 0,
        "surface exits 0");
  check(fs::exists(out1 + "/surface_input.csv"), "input-space grid written");
  check(fs::exists(out1 + "/surface_latent.csv"), "latent-space grid written");
  {
    const auto rows = adr::read_csv(out1 + "/surface_input.csv");
    check(rows.size() == 1 + 41 * 41, "default 41x41 grid has 1681 rows");
  }
  check(run(adr + " surface --config " + config + " --checkpoint " + ckpt +
            " --grid 40") == 2,
        "even grid size exits 2");
  check(run(adr + " surface --config " + config + " --checkpoint " + ckpt +
            " --index 99999") == 2,
        "out-of-range example index exits 2");

  std::cout << "embed subcommand:\n";
  check(run(adr + " embed --config " + config + " --checkpoint " + ckpt) == 0,
        "embed exits 0");
  check(fs::exists(out1 + "/embeddings.csv"), "embeddings written");

  std::cout << "error handling:\n";
  check(run(adr + " train --config " + (work / "missing.json").string()) == 2,
        "missing config exits 2");
  {
    const fs::path bad = work / "bad.json";
    std::ofstream out(bad);
    out << R"JSON({"seed": 1, "modell": {}})JSON";
    out.close();
    check(run(adr + " train --config " + bad.string()) == 2,
          "unknown key exits 2");
  }
  {
    std::string text = kConfig;
    const std::string token = "%OUT%";
    text.replace(text.find(token), token.size(), (work / "blowup").string());
    const std::string lr_from = R"("lr": 0.05)";
    text.replace(text.find(lr_from), lr_from.size(), R"("lr": 1e80)");
    const fs::path blowup = work / "blowup.json";
    std::ofstream out(blowup);
    out << text;
    out.close();
    check(run(adr + " train --config " + blowup.string() + " --epochs 8") == 3,
          "numeric blowup exits 3");
  }

  std::cout << "environment override:\n";
  {
    const std::string out3 = (work / "run3").string();
    const int code = run("ADR_OUTPUT_DIR=" + out3 + " " + adr +
                         " train --config " + config + " --epochs 1");
    check(code == 0, "train with ADR_OUTPUT_DIR exits 0");
    check(fs::exists(out3 + "/model.ckpt"), "env var redirects the output dir");
  }

  if (failures == 0) {
    std::cout << "all cli checks passed\n";
    return 0;
  }
  std::cout << failures << " cli checks FAILED\n";
  return 1;
}
