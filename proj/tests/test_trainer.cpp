#include <cstdio>
#include <filesystem>
#include <fstream>

#include "adr/trainer.hpp"
#include "doctest.h"

using namespace adr;

namespace {

TrainConfig toy_train_config(std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.dataset.kind = "synthetic-blobs";
  cfg.dataset.n = 60;
  cfg.dataset.classes = 3;
  cfg.dataset.dim = 2;
  cfg.dataset.separation = 0.45;
  cfg.dataset.noise = 0.04;
  cfg.dataset.seed = 7;
  cfg.architecture.preset = "mlp-toy";
  cfg.architecture.input_shape = {2};
  cfg.architecture.num_classes = 3;
  cfg.adversary.method = AttackMethod::pgd;
  cfg.adversary.epsilon = 0.1;
  cfg.adversary.eta = 0.02;
  cfg.adversary.k = 5;
  cfg.adversary.seed = 3;
  cfg.optimizer = OptimizerKind::sgd_momentum;
  cfg.base_lr = 0.05;
  cfg.momentum = 0.9;
  cfg.batch_size = 16;
  cfg.epochs = 5;
  cfg.seed = seed;
  return cfg;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("learning-rate schedule applies tenfold drops") {
  TrainConfig cfg;
  cfg.base_lr = 0.1;
  cfg.lr_drop_epochs = {100, 150};
  CHECK(lr_at(cfg, 99) == doctest::Approx(0.1));
  CHECK(lr_at(cfg, 100) == doctest::Approx(0.01));
  CHECK(lr_at(cfg, 150) == doctest::Approx(0.001));
  cfg.lr_drop_epochs = {};
  CHECK(lr_at(cfg, 5000) == doctest::Approx(0.1));
  CHECK_THROWS_AS(lr_at(cfg, -1), ConfigError);
}

TEST_CASE("train-config validation") {
  TrainConfig cfg = toy_train_config();
  cfg.lr_drop_epochs = {50, 20};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.lr_drop_epochs = {20, 50};
  CHECK_NOTHROW(cfg.validate());
  cfg.loss_weights.lambda_gb = 1.0;
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("augmentation is the identity when both flags are off") {
  DetRng rng(1);
  std::vector<double> data(2 * 1 * 4 * 4);
  for (auto& v : data) v = rng.uniform01();
  const Tensor x({2, 1, 4, 4}, data);
  AugmentFlags flags;
  const Tensor out = augment_batch(x, flags, rng);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(out.value(i) == x.value(i));
}

TEST_CASE("flipping twice with the same mask is the identity") {
  DetRng rng(2);
  std::vector<double> data(3 * 2 * 4 * 4);
  for (auto& v : data) v = rng.uniform01();
  const Tensor x({3, 2, 4, 4}, data);
  const std::vector<std::uint8_t> mask{1, 0, 1};
  const Tensor once = hflip(x, mask);
  const Tensor twice = hflip(once, mask);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(twice.value(i) == x.value(i));
  bool changed = false;
  for (std::size_t i = 0; i < x.size(); ++i) changed |= once.value(i) != x.value(i);
  CHECK(changed);
}

TEST_CASE("cropping the padded image at the center offset restores it") {
  DetRng rng(3);
  std::vector<double> data(1 * 1 * 6 * 6);
  for (auto& v : data) v = rng.uniform01();
  const Tensor x({1, 1, 6, 6}, data);
  const Tensor padded = pad_reflect(x, 4);
  CHECK(padded.shape() == Shape{1, 1, 14, 14});
  const Tensor restored = crop(padded, 4, 4, 6, 6);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(restored.value(i) == x.value(i));
}

TEST_CASE("augmented batches stay inside the unit box") {
  DetRng data_rng(4);
  std::vector<double> data(4 * 1 * 8 * 8);
  for (auto& v : data) v = data_rng.uniform01();
  const Tensor x({4, 1, 8, 8}, data);
  AugmentFlags flags;
  flags.random_crop_pad = 4;
  flags.horizontal_flip = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DetRng rng(seed);
    const Tensor out = augment_batch(x, flags, rng);
    CHECK(out.shape() == x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out.value(i) >= 0.0);
      CHECK(out.value(i) <= 1.0);
    }
  }
}

TEST_CASE("zero epochs returns the initialized model unchanged") {
  TrainConfig cfg = toy_train_config();
  cfg.epochs = 0;
  const TrainResult result = train(cfg);
  const SplitModel fresh = build_model(cfg.architecture, cfg.seed);
  REQUIRE(result.model.params().size() == fresh.params().size());
  for (std::size_t p = 0; p < fresh.params().size(); ++p) {
    for (std::size_t i = 0; i < fresh.params()[p].value.size(); ++i) {
      CHECK(result.model.params()[p].value[i] == fresh.params()[p].value[i]);
    }
  }
  CHECK(result.log.empty());
}

TEST_CASE("with all lambdas zero and eps zero the gradients are twice plain CE") {
  const SplitModel model = build_model(
      ArchitectureConfig{"mlp-toy", {2}, 3, -1, -1.0}, 5);
  DetRng rng(6);
  std::vector<double> xd(8 * 2);
  for (auto& v : xd) v = rng.uniform01();
  const Tensor x({8, 2}, xd);
  std::vector<int> y(8);
  for (auto& v : y) v = static_cast<int>(rng.uniform_index(3));

  // Combined objective with x_a = x (eps = 0 adversary).
  Tape tape1;
  ModelPass pass1 = model.begin_pass(&tape1, true);
  const LossComputation comp =
      compose_total_loss(model, pass1, x, {x}, y, LossWeights{});
  tape1.backward(comp.total);

  // Plain cross-entropy reference implemented independently of total_loss.
  Tape tape2;
  ModelPass pass2 = model.begin_pass(&tape2, true);
  const Tensor probs = model.forward(pass2, x).probs;
  tape2.backward(mean_all(cross_entropy_rows(probs, y)));

  for (std::size_t p = 0; p < model.params().size(); ++p) {
    const auto& g1 = tape1.grad(pass1.params[p]);
    const auto& g2 = tape2.grad(pass2.params[p]);
    for (std::size_t i = 0; i < g1.size(); ++i) {
      CHECK(g1[i] == 2.0 * g2[i]);
    }
  }
}

TEST_CASE("training makes progress on the toy problem") {
  TrainConfig cfg = toy_train_config();
  cfg.epochs = 30;
  const TrainResult result = train(cfg);
  REQUIRE_FALSE(result.log.empty());
  const double first = result.log.front().losses.supervision;
  const double last = result.log.back().losses.supervision;
  CHECK(last < first);
}

TEST_CASE("identical configs and seed give bit-identical checkpoints") {
  TrainConfig cfg = toy_train_config(99);
  cfg.epochs = 3;
  cfg.loss_weights.lambda_lc = 1.0;
  cfg.loss_weights.lambda_gb = 1.0;
  cfg.loss_weights.lambda_smt = 1.0;
  const TrainResult a = train(cfg);
  const TrainResult b = train(cfg);
  const std::string pa = temp_path("adr_det_a.ckpt");
  const std::string pb = temp_path("adr_det_b.ckpt");
  save_checkpoint(a.model, pa);
  save_checkpoint(b.model, pb);
  std::ifstream fa(pa, std::ios::binary), fb(pb, std::ios::binary);
  const std::string ba((std::istreambuf_iterator<char>(fa)),
                       std::istreambuf_iterator<char>());
  const std::string bb((std::istreambuf_iterator<char>(fb)),
                       std::istreambuf_iterator<char>());
  CHECK(ba == bb);
  CHECK_FALSE(ba.empty());
  std::remove(pa.c_str());
  std::remove(pb.c_str());
}

TEST_CASE("logged totals recombine from the logged components") {
  TrainConfig cfg = toy_train_config(7);
  cfg.epochs = 2;
  cfg.loss_weights.lambda_lc = 0.7;
  cfg.loss_weights.lambda_gb = 0.3;
  cfg.loss_weights.lambda_conf = 0.2;
  cfg.loss_weights.lambda_smt = 1.1;
  const TrainResult result = train(cfg);
  REQUIRE_FALSE(result.log.empty());
  for (const auto& row : result.log) {
    const double recombined =
        row.losses.supervision + cfg.loss_weights.lambda_lc * row.losses.local_compactness +
        cfg.loss_weights.lambda_gb * row.losses.global_compactness +
        cfg.loss_weights.lambda_conf * row.losses.confidence +
        cfg.loss_weights.lambda_smt * row.losses.smoothness;
    CHECK(row.losses.total == doctest::Approx(recombined).epsilon(1e-12));
  }
}

TEST_CASE("train log CSV round-trips losslessly") {
  TrainConfig cfg = toy_train_config(8);
  cfg.epochs = 2;
  const TrainResult result = train(cfg);
  const std::string path = temp_path("adr_train_log.csv");
  write_train_log(result.log, path);
  const auto loaded = read_train_log(path);
  REQUIRE(loaded.size() == result.log.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].epoch == result.log[i].epoch);
    CHECK(loaded[i].step == result.log[i].step);
    CHECK(loaded[i].losses.supervision == result.log[i].losses.supervision);
    CHECK(loaded[i].losses.total == result.log[i].losses.total);
    CHECK(loaded[i].lr == result.log[i].lr);
    CHECK(loaded[i].wall_time_s == result.log[i].wall_time_s);
  }
  std::remove(path.c_str());
}

TEST_CASE("epoch callback fires once per epoch") {
  TrainConfig cfg = toy_train_config(9);
  cfg.epochs = 4;
  int calls = 0;
  train(cfg, [&](int, const SplitModel&) { ++calls; });
  CHECK(calls == 4);
}
