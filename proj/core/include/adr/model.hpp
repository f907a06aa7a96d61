#ifndef ADR_MODEL_HPP
#define ADR_MODEL_HPP

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "adr/ops.hpp"
#include "adr/rng.hpp"
#include "adr/tensor.hpp"

namespace adr {

/// Named architecture presets. The cnn-4c3f presets are the standard
/// 4-convolution / 3-fully-connected classifier; mlp-toy is a small dense
/// network for synthetic data.
struct ArchitectureConfig {
  std::string preset;       // cnn-4c3f-32 | cnn-4c3f-64 | mlp-toy
  Shape input_shape;        // [C,H,W] for cnn presets, [D] for mlp-toy
  int num_classes = 10;
  int cut_index = -1;       // layer boundary where f ends; -1 = preset default
  double dropout = -1.0;    // -1 = preset default
};

namespace layers {
struct Conv {
  int in_ch, out_ch, ksize;
  int w, b;  // parameter indices
};
struct Dense {
  int in_dim, out_dim;
  int w, b;
};
struct ReLU {};
struct MaxPool {};
struct Flatten {};
struct Dropout {
  double rate;
};
struct Softmax {};
using Layer = std::variant<Conv, Dense, ReLU, MaxPool, Flatten, Dropout, Softmax>;
}  // namespace layers

struct Parameter {
  std::string name;
  Shape shape;
  std::vector<double> value;
};

/// Per-pass binding of model parameters, either as tape leaves (training) or
/// constants (attacks, evaluation). Dropout draws masks from `dropout_rng`
/// when `training` is set; evaluation passes are deterministic.
struct ModelPass {
  Tape* tape = nullptr;
  bool training = false;
  DetRng* dropout_rng = nullptr;
  std::vector<Tensor> params;
};

struct ForwardResult {
  Tensor rep;    // f(x): activation at the cut boundary
  Tensor probs;  // h(x): softmax output
};

/// The split network h = g(f(.)). Layers [0, cut) form the generator f,
/// layers [cut, L) the classifier g; h is always evaluated as the single
/// sequential pass, so h(x) == g(f(x)) holds structurally.
class SplitModel {
 public:
  SplitModel() = default;

  const ArchitectureConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  int num_classes() const { return cfg_.num_classes; }
  int cut_index() const { return cfg_.cut_index; }
  int num_layers() const { return static_cast<int>(layers_.size()); }

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }

  ModelPass begin_pass(Tape* tape, bool track_params, bool training = false,
                       DetRng* dropout_rng = nullptr) const;

  /// Full forward; records on pass.tape when inputs/params are tracked.
  ForwardResult forward(ModelPass& pass, const Tensor& x) const;

  /// Forward through layers [from, to).
  Tensor forward_range(ModelPass& pass, const Tensor& x, int from, int to) const;

  /// f(x) for a batch, evaluation mode.
  Tensor intermediate(const Tensor& x_batch) const;

  /// h(x) probabilities for a batch, evaluation mode.
  Tensor predict(const Tensor& x_batch) const;

  /// g(rep) probabilities: classifier applied to representations.
  Tensor classify_representation(const Tensor& rep_batch) const;

  /// argmax of each probability row; ties resolve to the first index.
  static std::vector<int> argmax_rows(const Tensor& probs);

 private:
  friend SplitModel build_model(const ArchitectureConfig&, std::uint64_t);
  friend SplitModel load_checkpoint(const std::string&);

  void check_input(const Tensor& x) const;

  ArchitectureConfig cfg_;
  std::uint64_t seed_ = 0;
  std::vector<layers::Layer> layers_;
  std::vector<Parameter> params_;
};

/// Builds a preset architecture with He-uniform fan-in initialization.
/// The same (cfg, seed) always yields bit-identical parameters.
SplitModel build_model(const ArchitectureConfig& cfg, std::uint64_t seed);

/// Checkpoint: plain-text header (preset, input shape, cut index, classes,
/// dropout, seed, tensor manifest) followed by raw little-endian float64
/// payloads in manifest order. Round-trips bit-exactly.
void save_checkpoint(const SplitModel& model, const std::string& path);
SplitModel load_checkpoint(const std::string& path);

}  // namespace adr

#endif  // ADR_MODEL_HPP
