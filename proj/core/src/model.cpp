#include "adr/model.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace adr {
namespace {

constexpr std::uint64_t kInitStream = 0x494e4954;  // "INIT"

struct Builder {
  std::vector<layers::Layer> layers;
  std::vector<Parameter> params;

  int add_param(const std::string& name, Shape shape) {
    params.push_back(Parameter{name, std::move(shape), {}});
    return static_cast<int>(params.size() - 1);
  }

  void conv(const std::string& name, int in_ch, int out_ch, int k) {
    const int w = add_param(name + ".w", {out_ch, in_ch, k, k});
    const int b = add_param(name + ".b", {out_ch});
    layers.push_back(layers::Conv{in_ch, out_ch, k, w, b});
  }

  void dense(const std::string& name, int in_dim, int out_dim) {
    const int w = add_param(name + ".w", {in_dim, out_dim});
    const int b = add_param(name + ".b", {out_dim});
    layers.push_back(layers::Dense{in_dim, out_dim, w, b});
  }
};

void init_params(std::vector<Parameter>& params,
                 const std::vector<layers::Layer>& layers, std::uint64_t seed) {
  for (auto& p : params) p.value.assign(shape_numel(p.shape), 0.0);
  DetRng rng(derive_seed(seed, {kInitStream}));
  // He-style uniform fan-in init on weights; biases stay zero. Parameters are
  // visited in layer order so the draw sequence is part of the format.
  for (const auto& layer : layers) {
    if (const auto* c = std::get_if<layers::Conv>(&layer)) {
      auto& w = params[static_cast<std::size_t>(c->w)].value;
      const double limit =
          std::sqrt(6.0 / (static_cast<double>(c->in_ch) * c->ksize * c->ksize));
      for (auto& v : w) v = rng.uniform(-limit, limit);
    } else if (const auto* d = std::get_if<layers::Dense>(&layer)) {
      auto& w = params[static_cast<std::size_t>(d->w)].value;
      const double limit = std::sqrt(6.0 / static_cast<double>(d->in_dim));
      for (auto& v : w) v = rng.uniform(-limit, limit);
    }
  }
}

}  // namespace

SplitModel build_model(const ArchitectureConfig& cfg, std::uint64_t seed) {
  SplitModel model;
  ArchitectureConfig resolved = cfg;
  Builder b;

  if (cfg.preset == "cnn-4c3f-32" || cfg.preset == "cnn-4c3f-64") {
    const bool wide = cfg.preset == "cnn-4c3f-64";
    const int filters = wide ? 64 : 32;
    const int fc_dim = wide ? 256 : 200;
    if (resolved.input_shape.empty()) resolved.input_shape = {1, 28, 28};
    if (resolved.input_shape.size() != 3) {
      throw ConfigError("build_model: " + cfg.preset +
                        " expects a [C,H,W] input shape, got " +
                        shape_str(resolved.input_shape));
    }
    if (resolved.dropout < 0.0) resolved.dropout = 0.5;
    int C = resolved.input_shape[0];
    int H = resolved.input_shape[1];
    int W = resolved.input_shape[2];
    auto after_conv = [&](int k) { H -= k - 1; W -= k - 1; };
    b.conv("conv1", C, filters, 3);
    after_conv(3);
    b.layers.push_back(layers::ReLU{});
    b.conv("conv2", filters, filters, 3);
    after_conv(3);
    b.layers.push_back(layers::ReLU{});
    b.layers.push_back(layers::MaxPool{});
    H /= 2;
    W /= 2;
    b.conv("conv3", filters, filters, 3);
    after_conv(3);
    b.layers.push_back(layers::ReLU{});
    b.conv("conv4", filters, filters, 3);
    after_conv(3);
    b.layers.push_back(layers::ReLU{});
    b.layers.push_back(layers::MaxPool{});
    H /= 2;
    W /= 2;
    if (H <= 0 || W <= 0) {
      throw ConfigError("build_model: input shape " +
                        shape_str(resolved.input_shape) + " too small for " +
                        cfg.preset);
    }
    b.layers.push_back(layers::Flatten{});
    const int flat = filters * H * W;
    b.dense("fc1", flat, fc_dim);
    b.layers.push_back(layers::ReLU{});
    b.layers.push_back(layers::Dropout{resolved.dropout});
    b.dense("fc2", fc_dim, fc_dim);
    b.layers.push_back(layers::ReLU{});
    b.dense("fc3", fc_dim, resolved.num_classes);
    b.layers.push_back(layers::Softmax{});
    if (resolved.cut_index < 0) resolved.cut_index = 11;  // after Flatten
  } else if (cfg.preset == "mlp-toy") {
    if (resolved.input_shape.empty()) resolved.input_shape = {2};
    if (resolved.input_shape.size() != 1) {
      throw ConfigError("build_model: mlp-toy expects a [D] input shape, got " +
                        shape_str(resolved.input_shape));
    }
    if (resolved.dropout < 0.0) resolved.dropout = 0.0;
    const int d = resolved.input_shape[0];
    b.dense("fc1", d, 32);
    b.layers.push_back(layers::ReLU{});
    b.dense("fc2", 32, 32);
    b.layers.push_back(layers::ReLU{});
    b.dense("fc3", 32, resolved.num_classes);
    b.layers.push_back(layers::Softmax{});
    if (resolved.cut_index < 0) resolved.cut_index = 2;  // after first hidden ReLU
  } else {
    throw ConfigError("build_model: unknown preset '" + cfg.preset + "'");
  }

  const int L = static_cast<int>(b.layers.size());
  if (resolved.cut_index < 1 || resolved.cut_index > L - 1) {
    throw ConfigError("build_model: cut_index " +
                      std::to_string(resolved.cut_index) +
                      " outside [1," + std::to_string(L - 1) + "]");
  }
  if (resolved.num_classes < 2) {
    throw ConfigError("build_model: need at least 2 classes");
  }

  init_params(b.params, b.layers, seed);
  model.cfg_ = resolved;
  model.seed_ = seed;
  model.layers_ = std::move(b.layers);
  model.params_ = std::move(b.params);
  return model;
}

ModelPass SplitModel::begin_pass(Tape* tape, bool track_params, bool training,
                                 DetRng* dropout_rng) const {
  ModelPass pass;
  pass.tape = tape;
  pass.training = training;
  pass.dropout_rng = dropout_rng;
  pass.params.reserve(params_.size());
  for (const auto& p : params_) {
    if (track_params && tape) {
      pass.params.push_back(tape->leaf(p.shape, p.value));
    } else {
      pass.params.push_back(Tensor(p.shape, p.value));
    }
  }
  return pass;
}

void SplitModel::check_input(const Tensor& x) const {
  const auto& in = cfg_.input_shape;
  const auto& s = x.shape();
  const bool ok = s.size() == in.size() + 1 &&
                  std::equal(in.begin(), in.end(), s.begin() + 1);
  if (!ok) {
    throw ShapeError("model: batch shape " + shape_str(s) +
                     " does not match input shape " + shape_str(in));
  }
}

Tensor SplitModel::forward_range(ModelPass& pass, const Tensor& x, int from,
                                 int to) const {
  Tensor h = x;
  for (int li = from; li < to; ++li) {
    const auto& layer = layers_[static_cast<std::size_t>(li)];
    if (const auto* c = std::get_if<layers::Conv>(&layer)) {
      h = bias_channel(conv2d(h, pass.params[static_cast<std::size_t>(c->w)]),
                       pass.params[static_cast<std::size_t>(c->b)]);
    } else if (const auto* d = std::get_if<layers::Dense>(&layer)) {
      h = bias_row(matmul(h, pass.params[static_cast<std::size_t>(d->w)]),
                   pass.params[static_cast<std::size_t>(d->b)]);
    } else if (std::holds_alternative<layers::ReLU>(layer)) {
      h = relu(h);
    } else if (std::holds_alternative<layers::MaxPool>(layer)) {
      h = maxpool2(h);
    } else if (std::holds_alternative<layers::Flatten>(layer)) {
      h = flatten(h);
    } else if (const auto* dr = std::get_if<layers::Dropout>(&layer)) {
      if (pass.training && dr->rate > 0.0) {
        if (!pass.dropout_rng) {
          throw ConfigError("model: training pass with dropout needs an rng");
        }
        const double keep = 1.0 - dr->rate;
        std::vector<double> mask(h.size());
        for (auto& m : mask)
          m = pass.dropout_rng->uniform01() < keep ? 1.0 / keep : 0.0;
        h = mul(h, Tensor(h.shape(), std::move(mask)));
      }
    } else {
      h = softmax_last(h);
    }
  }
  return h;
}

ForwardResult SplitModel::forward(ModelPass& pass, const Tensor& x) const {
  check_input(x);
  ForwardResult out;
  out.rep = forward_range(pass, x, 0, cfg_.cut_index);
  out.probs = forward_range(pass, out.rep, cfg_.cut_index, num_layers());
  return out;
}

Tensor SplitModel::intermediate(const Tensor& x_batch) const {
  check_input(x_batch);
  ModelPass pass = begin_pass(nullptr, false);
  return forward_range(pass, x_batch, 0, cfg_.cut_index);
}

Tensor SplitModel::predict(const Tensor& x_batch) const {
  ModelPass pass = begin_pass(nullptr, false);
  return forward(pass, x_batch).probs;
}

Tensor SplitModel::classify_representation(const Tensor& rep_batch) const {
  ModelPass pass = begin_pass(nullptr, false);
  return forward_range(pass, rep_batch, cfg_.cut_index, num_layers());
}

std::vector<int> SplitModel::argmax_rows(const Tensor& probs) {
  if (probs.shape().size() != 2) {
    throw ShapeError("argmax_rows: expected [B,M], got " +
                     shape_str(probs.shape()));
  }
  const int B = probs.shape()[0], M = probs.shape()[1];
  std::vector<int> out(static_cast<std::size_t>(B));
  for (int i = 0; i < B; ++i) {
    const double* row = probs.data().data() + static_cast<std::size_t>(i) * M;
    int best = 0;
    for (int j = 1; j < M; ++j)
      if (row[j] > row[best]) best = j;
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

namespace {

void write_le_doubles(std::ostream& out, const std::vector<double>& v) {
  for (double d : v) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i)
      bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

void read_le_doubles(std::istream& in, std::vector<double>& v) {
  for (double& d : v) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw IoError("checkpoint: truncated payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    d = std::bit_cast<double>(bits);
  }
}

}  // namespace

void save_checkpoint(const SplitModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  const auto& cfg = model.config();
  out << "ADR-CHECKPOINT v1\n";
  out << "preset " << cfg.preset << "\n";
  out << "input_shape";
  for (int d : cfg.input_shape) out << ' ' << d;
  out << "\n";
  out << "cut_index " << cfg.cut_index << "\n";
  out << "num_classes " << cfg.num_classes << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", cfg.dropout);
  out << "dropout " << buf << "\n";
  out << "seed " << model.seed() << "\n";
  out << "tensors " << model.params().size() << "\n";
  for (const auto& p : model.params()) {
    out << p.name << ' ' << p.shape.size();
    for (int d : p.shape) out << ' ' << d;
    out << "\n";
  }
  out << "END-HEADER\n";
  for (const auto& p : model.params()) write_le_doubles(out, p.value);
  if (!out) throw IoError("checkpoint: write to '" + path + "' failed");
}

SplitModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(in, line)) throw IoError("checkpoint: truncated header");
    return line;
  };
  if (next_line() != "ADR-CHECKPOINT v1") {
    throw IoError("checkpoint: bad magic line in '" + path + "'");
  }
  ArchitectureConfig cfg;
  std::uint64_t seed = 0;
  std::size_t ntensors = 0;
  std::vector<std::pair<std::string, Shape>> manifest;
  auto expect_key = [&](std::istringstream& ss, const std::string& key) {
    std::string k;
    ss >> k;
    if (k != key) throw IoError("checkpoint: expected '" + key + "', got '" + k + "'");
  };
  {
    std::istringstream ss(next_line());
    expect_key(ss, "preset");
    ss >> cfg.preset;
  }
  {
    std::istringstream ss(next_line());
    expect_key(ss, "input_shape");
    int d;
    while (ss >> d) cfg.input_shape.push_back(d);
  }
  {
    std::istringstream ss(next_line());
    expect_key(ss, "cut_index");
    ss >> cfg.cut_index;
  }
  {
    std::istringstream ss(next_line());
    expect_key(ss, "num_classes");
    ss >> cfg.num_classes;
  }
  {
    std::istringstream ss(next_line());
    expect_key(ss, "dropout");
    ss >> cfg.dropout;
  }
  {
    std::istringstream ss(next_line());
    expect_key(ss, "seed");
    ss >> seed;
  }
  {
    std::istringstream ss(next_line());
    expect_key(ss, "tensors");
    ss >> ntensors;
  }
  for (std::size_t i = 0; i < ntensors; ++i) {
    std::istringstream ss(next_line());
    std::string name;
    std::size_t ndim = 0;
    ss >> name >> ndim;
    Shape shape(ndim);
    for (auto& d : shape) ss >> d;
    if (!ss) throw IoError("checkpoint: bad manifest entry '" + line + "'");
    manifest.emplace_back(name, shape);
  }
  if (next_line() != "END-HEADER") {
    throw IoError("checkpoint: missing END-HEADER");
  }

  SplitModel model = build_model(cfg, seed);
  if (model.params().size() != manifest.size()) {
    throw IoError("checkpoint: manifest has " + std::to_string(manifest.size()) +
                  " tensors, architecture expects " +
                  std::to_string(model.params().size()));
  }
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    auto& p = model.params()[i];
    if (p.name != manifest[i].first || p.shape != manifest[i].second) {
      throw IoError("checkpoint: manifest entry '" + manifest[i].first + "' " +
                    shape_str(manifest[i].second) +
                    " does not match architecture parameter '" + p.name + "' " +
                    shape_str(p.shape));
    }
    read_le_doubles(in, p.value);
  }
  return model;
}

}  // namespace adr
