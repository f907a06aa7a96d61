#include "adr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "adr/csv.hpp"

namespace adr {
namespace {

constexpr std::uint64_t kShuffleStream = 0x53485546;  // "SHUF"
constexpr std::uint64_t kAttackStream = 0x41545441;   // "ATTA"
constexpr std::uint64_t kDropoutStream = 0x44524f50;  // "DROP"
constexpr std::uint64_t kAugmentStream = 0x41554731;  // "AUG1"

void require_nchw(const char* op, const Tensor& x) {
  if (x.shape().size() != 4) {
    throw ShapeError(std::string(op) + ": expected [N,C,H,W], got shape " +
                     shape_str(x.shape()));
  }
}

int reflect_index(int i, int extent) {
  if (i < 0) return -i;
  if (i >= extent) return 2 * extent - 2 - i;
  return i;
}

}  // namespace

void TrainConfig::validate() const {
  adversary.validate();
  loss_weights.validate();
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (loss_weights.lambda_gb > 0.0 && batch_size < 2) {
    throw ConfigError("train: global compactness needs batch size >= 2");
  }
  if (sample_count < 1) throw ConfigError("train: sample_count must be >= 1");
  if (base_lr < 0.0) throw ConfigError("train: negative learning rate");
  if (lr_drop_factor <= 0.0) throw ConfigError("train: lr drop factor must be > 0");
  for (std::size_t i = 1; i < lr_drop_epochs.size(); ++i) {
    if (lr_drop_epochs[i - 1] > lr_drop_epochs[i]) {
      throw ConfigError("train: lr drop epochs must be sorted ascending");
    }
  }
  if (grad_clip_norm < 0.0) throw ConfigError("train: negative gradient clip");
}

double lr_at(const TrainConfig& cfg, int epoch) {
  if (epoch < 0) throw ConfigError("lr_at: epoch must be >= 0");
  int drops = 0;
  for (int d : cfg.lr_drop_epochs)
    if (d <= epoch) ++drops;
  return cfg.base_lr * std::pow(cfg.lr_drop_factor, static_cast<double>(drops));
}

Tensor pad_reflect(const Tensor& x, int pad) {
  require_nchw("pad_reflect", x);
  if (pad == 0) return x;
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (pad < 0 || pad > H - 1 || pad > W - 1) {
    throw ShapeError("pad_reflect: pad " + std::to_string(pad) +
                     " too large for shape " + shape_str(x.shape()));
  }
  const int PH = H + 2 * pad, PW = W + 2 * pad;
  std::vector<double> out(static_cast<std::size_t>(N) * C * PH * PW);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t src = (static_cast<std::size_t>(n) * C + c) * H * W;
      const std::size_t dst = (static_cast<std::size_t>(n) * C + c) * PH * PW;
      for (int y = 0; y < PH; ++y) {
        const int sy = reflect_index(y - pad, H);
        for (int xx = 0; xx < PW; ++xx) {
          const int sx = reflect_index(xx - pad, W);
          out[dst + static_cast<std::size_t>(y) * PW + xx] =
              x.data()[src + static_cast<std::size_t>(sy) * W + sx];
        }
      }
    }
  return Tensor({N, C, PH, PW}, std::move(out));
}

Tensor crop(const Tensor& x, int offset_y, int offset_x, int out_h, int out_w) {
  require_nchw("crop", x);
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (offset_y < 0 || offset_x < 0 || offset_y + out_h > H || offset_x + out_w > W) {
    throw ShapeError("crop: window " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + "+" + std::to_string(offset_y) +
                     "+" + std::to_string(offset_x) + " outside shape " +
                     shape_str(x.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(N) * C * out_h * out_w);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t src = (static_cast<std::size_t>(n) * C + c) * H * W;
      const std::size_t dst =
          (static_cast<std::size_t>(n) * C + c) * out_h * out_w;
      for (int y = 0; y < out_h; ++y)
        for (int xx = 0; xx < out_w; ++xx)
          out[dst + static_cast<std::size_t>(y) * out_w + xx] =
              x.data()[src + static_cast<std::size_t>(y + offset_y) * W +
                       (xx + offset_x)];
    }
  return Tensor({N, C, out_h, out_w}, std::move(out));
}

Tensor hflip(const Tensor& x, const std::vector<std::uint8_t>& mask) {
  require_nchw("hflip", x);
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (static_cast<int>(mask.size()) != N) {
    throw ShapeError("hflip: " + std::to_string(mask.size()) +
                     " mask entries for batch shape " + shape_str(x.shape()));
  }
  std::vector<double> out = x.data();
  for (int n = 0; n < N; ++n) {
    if (!mask[static_cast<std::size_t>(n)]) continue;
    for (int c = 0; c < C; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * C + c) * H * W;
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W / 2; ++xx)
          std::swap(out[base + static_cast<std::size_t>(y) * W + xx],
                    out[base + static_cast<std::size_t>(y) * W + (W - 1 - xx)]);
    }
  }
  return Tensor(x.shape(), std::move(out));
}

Tensor augment_batch(const Tensor& x, const AugmentFlags& flags, DetRng& rng) {
  if (flags.random_crop_pad == 0 && !flags.horizontal_flip) return x;
  require_nchw("augment", x);
  const int N = x.shape()[0], H = x.shape()[2], W = x.shape()[3];
  Tensor result = x;

  if (flags.random_crop_pad > 0) {
    const int pad = flags.random_crop_pad;
    const Tensor padded = pad_reflect(x, pad);
    std::vector<double> out(x.size());
    const int C = x.shape()[1];
    const int PH = H + 2 * pad, PW = W + 2 * pad;
    for (int n = 0; n < N; ++n) {
      const int oy = static_cast<int>(rng.uniform_index(2 * pad + 1));
      const int ox = static_cast<int>(rng.uniform_index(2 * pad + 1));
      for (int c = 0; c < C; ++c) {
        const std::size_t src = (static_cast<std::size_t>(n) * C + c) * PH * PW;
        const std::size_t dst = (static_cast<std::size_t>(n) * C + c) * H * W;
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx)
            out[dst + static_cast<std::size_t>(y) * W + xx] =
                padded.data()[src + static_cast<std::size_t>(y + oy) * PW +
                              (xx + ox)];
      }
    }
    result = Tensor(x.shape(), std::move(out));
  }

  if (flags.horizontal_flip) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(N));
    for (auto& m : mask) m = rng.bernoulli(0.5) ? 1 : 0;
    result = hflip(result, mask);
  }
  return result;
}

TrainResult train(const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  Dataset ds = materialize(cfg.dataset);

  if (cfg.architecture.num_classes < ds.num_classes) {
    throw ConfigError("train: architecture has " +
                      std::to_string(cfg.architecture.num_classes) +
                      " classes but the dataset has " +
                      std::to_string(ds.num_classes));
  }

  TrainResult result;
  result.model = build_model(cfg.architecture, cfg.seed);

  OptimizerState optimizer(cfg.optimizer, cfg.base_lr, cfg.momentum,
                           cfg.weight_decay, cfg.adam_beta1, cfg.adam_beta2,
                           cfg.adam_eps);

  std::vector<int> order(static_cast<std::size_t>(ds.size()));
  std::iota(order.begin(), order.end(), 0);

  const auto t0 = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    optimizer.set_learning_rate(lr_at(cfg, epoch));
    {
      DetRng shuffle_rng(
          derive_seed(cfg.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)}));
      shuffle_rng.shuffle(order);
    }

    int step = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size), ++step) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
      Tensor x = ds.batch(idx);
      const std::vector<int> y = ds.batch_labels(idx);

      {
        DetRng aug_rng(derive_seed(
            cfg.seed, {kAugmentStream, static_cast<std::uint64_t>(epoch),
                       static_cast<std::uint64_t>(step)}));
        x = augment_batch(x, cfg.augment, aug_rng);
      }

      // Adversarial examples come from the current frozen model, regenerated
      // every step.
      std::vector<Tensor> samples;
      samples.reserve(static_cast<std::size_t>(cfg.sample_count));
      for (int s = 0; s < cfg.sample_count; ++s) {
        AttackConfig attack = cfg.adversary;
        attack.seed = derive_seed(
            cfg.seed, {kAttackStream, static_cast<std::uint64_t>(epoch),
                       static_cast<std::uint64_t>(step),
                       static_cast<std::uint64_t>(s)});
        samples.push_back(
            generate_adversarial(result.model, x, y, attack).x_adv);
      }

      DetRng dropout_rng(derive_seed(
          cfg.seed, {kDropoutStream, static_cast<std::uint64_t>(epoch),
                     static_cast<std::uint64_t>(step)}));
      Tape tape;
      ModelPass pass = result.model.begin_pass(&tape, true, true, &dropout_rng);
      LossComputation comp;
      try {
        comp = compose_total_loss(result.model, pass, x, samples, y,
                                  cfg.loss_weights);
        if (!std::isfinite(comp.breakdown.total)) {
          throw NumericError("non-finite total loss");
        }
        tape.backward(comp.total);
      } catch (const NumericError& e) {
        throw NumericError("train: aborted at epoch " + std::to_string(epoch) +
                           " step " + std::to_string(step) + ": " + e.what());
      }

      auto& params = result.model.params();
      std::vector<ParamRef> refs(params.size());
      for (std::size_t p = 0; p < params.size(); ++p) {
        refs[p] = ParamRef{params[p].name, &params[p].value,
                           &tape.grad(pass.params[p])};
      }

      std::vector<std::vector<double>> clipped;
      if (cfg.grad_clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& r : refs)
          for (double g : *r.grad) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip_norm) {
          const double scale = cfg.grad_clip_norm / norm;
          clipped.reserve(refs.size());
          for (auto& r : refs) {
            clipped.push_back(*r.grad);
            for (double& g : clipped.back()) g *= scale;
            r.grad = &clipped.back();
          }
        }
      }

      try {
        optimizer.step(refs);
      } catch (const NumericError& e) {
        throw NumericError("train: aborted at epoch " + std::to_string(epoch) +
                           " step " + std::to_string(step) + ": " + e.what());
      }

      TrainLogRow row;
      row.epoch = epoch;
      row.step = step;
      row.losses = comp.breakdown;
      row.lr = optimizer.learning_rate();
      row.wall_time_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      result.log.push_back(row);
    }
    if (on_epoch) on_epoch(epoch, result.model);
  }
  return result;
}

void write_train_log(const std::vector<TrainLogRow>& rows,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("train log: cannot open '" + path + "' for writing");
  out << "epoch,step,loss_c,loss_com_lc,loss_com_gb,loss_conf,loss_smt,"
         "loss_total,lr,wall_time_s\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.step << ',' << format_double(r.losses.supervision)
        << ',' << format_double(r.losses.local_compactness) << ','
        << format_double(r.losses.global_compactness) << ','
        << format_double(r.losses.confidence) << ','
        << format_double(r.losses.smoothness) << ','
        << format_double(r.losses.total) << ',' << format_double(r.lr) << ','
        << format_double(r.wall_time_s) << '\n';
  }
}

std::vector<TrainLogRow> read_train_log(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.empty() || rows[0].size() != 10) {
    throw IoError("train log: bad header in '" + path + "'");
  }
  std::vector<TrainLogRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 10) throw IoError("train log: bad row in '" + path + "'");
    TrainLogRow row;
    row.epoch = static_cast<int>(parse_long(r[0]));
    row.step = static_cast<int>(parse_long(r[1]));
    row.losses.supervision = parse_double(r[2]);
    row.losses.local_compactness = parse_double(r[3]);
    row.losses.global_compactness = parse_double(r[4]);
    row.losses.confidence = parse_double(r[5]);
    row.losses.smoothness = parse_double(r[6]);
    row.losses.total = parse_double(r[7]);
    row.lr = parse_double(r[8]);
    row.wall_time_s = parse_double(r[9]);
    out.push_back(row);
  }
  return out;
}

}  // namespace adr
