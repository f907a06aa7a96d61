#ifndef ADR_TRAINER_HPP
#define ADR_TRAINER_HPP

#include <functional>
#include <string>
#include <vector>

#include "adr/attack.hpp"
#include "adr/data.hpp"
#include "adr/losses.hpp"
#include "adr/model.hpp"
#include "adr/optimizer.hpp"

namespace adr {

struct AugmentFlags {
  int random_crop_pad = 0;  // pad-and-random-crop; 0 disables
  bool horizontal_flip = false;
};

struct TrainConfig {
  DatasetSpec dataset;
  ArchitectureConfig architecture;
  AttackConfig adversary;  // training-time eps_d, eta_d, k
  LossWeights loss_weights;
  OptimizerKind optimizer = OptimizerKind::sgd_momentum;
  double base_lr = 0.01;
  std::vector<int> lr_drop_epochs;  // sorted ascending
  double lr_drop_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 128;
  int epochs = 100;
  std::uint64_t seed = 0;
  AugmentFlags augment;
  double grad_clip_norm = 0.0;  // global-norm clip; 0 disables
  int sample_count = 1;         // adversarial samples per clean example

  void validate() const;
};

struct TrainLogRow {
  int epoch = 0;
  int step = 0;
  LossBreakdown losses;
  double lr = 0.0;
  double wall_time_s = 0.0;
};

struct TrainResult {
  SplitModel model;
  std::vector<TrainLogRow> log;
};

/// base_lr * factor^(number of drop epochs <= epoch).
double lr_at(const TrainConfig& cfg, int epoch);

// Augmentation pieces; the seeded driver below composes them.
Tensor pad_reflect(const Tensor& x, int pad);
Tensor crop(const Tensor& x, int offset_y, int offset_x, int out_h, int out_w);
Tensor hflip(const Tensor& x, const std::vector<std::uint8_t>& mask);

/// Pad-and-random-crop (reflect padding) and/or per-example horizontal flip
/// with probability 0.5. Identity when both flags are off; output stays in
/// [0,1]. Requires [N,C,H,W] input when a flag is active.
Tensor augment_batch(const Tensor& x, const AugmentFlags& flags, DetRng& rng);

using EpochCallback = std::function<void(int epoch, const SplitModel& model)>;

/// The adversarial-training loop: per minibatch — augment, regenerate x_a
/// from the current frozen model, evaluate the combined objective,
/// backpropagate, step. Deterministic under a fixed seed (data order, attack
/// starts, dropout masks, augmentation all derive from it). Throws
/// NumericError recording the offending step if the loss goes non-finite.
TrainResult train(const TrainConfig& cfg, const EpochCallback& on_epoch = {});

void write_train_log(const std::vector<TrainLogRow>& rows, const std::string& path);
std::vector<TrainLogRow> read_train_log(const std::string& path);

}  // namespace adr

#endif  // ADR_TRAINER_HPP
