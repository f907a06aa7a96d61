#include "adr/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace adr {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config: " + path + ": " + what);
}

void check_keys(const json& j, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) fail(path + "." + item.key(), "unknown key");
  }
}

double get_double(const json& j, const std::string& path, const char* key,
                  std::optional<double> fallback = std::nullopt) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    fail(path + "." + key, "missing required number");
  }
  if (!j[key].is_number()) fail(path + "." + key, "expected a number");
  return j[key].get<double>();
}

long get_long(const json& j, const std::string& path, const char* key,
              std::optional<long> fallback = std::nullopt) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    fail(path + "." + key, "missing required integer");
  }
  if (!j[key].is_number_integer()) fail(path + "." + key, "expected an integer");
  return j[key].get<long>();
}

bool get_bool(const json& j, const std::string& path, const char* key,
              std::optional<bool> fallback = std::nullopt) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    fail(path + "." + key, "missing required boolean");
  }
  if (!j[key].is_boolean()) fail(path + "." + key, "expected a boolean");
  return j[key].get<bool>();
}

std::string get_string(const json& j, const std::string& path, const char* key,
                       std::optional<std::string> fallback = std::nullopt) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    fail(path + "." + key, "missing required string");
  }
  if (!j[key].is_string()) fail(path + "." + key, "expected a string");
  return j[key].get<std::string>();
}

std::vector<double> get_double_array(const json& j, const std::string& path,
                                     const char* key) {
  if (!j.contains(key) || !j[key].is_array()) {
    fail(path + "." + key, "expected an array of numbers");
  }
  std::vector<double> out;
  for (const auto& v : j[key]) {
    if (!v.is_number()) fail(path + "." + key, "expected an array of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::vector<int> get_int_array(const json& j, const std::string& path,
                               const char* key) {
  if (!j.contains(key) || !j[key].is_array()) {
    fail(path + "." + key, "expected an array of integers");
  }
  std::vector<int> out;
  for (const auto& v : j[key]) {
    if (!v.is_number_integer()) fail(path + "." + key, "expected integers");
    out.push_back(v.get<int>());
  }
  return out;
}

PNorm parse_p(const json& j, const std::string& path) {
  if (!j.contains("p")) return PNorm::two;
  const auto& v = j["p"];
  if (v.is_string()) {
    if (v.get<std::string>() == "inf") return PNorm::inf;
    fail(path + ".p", "expected 1, 2, or \"inf\"");
  }
  if (v.is_number_integer()) return pnorm_from_int(v.get<int>());
  fail(path + ".p", "expected 1, 2, or \"inf\"");
}

DatasetSpec parse_dataset(const json& j, const std::string& path) {
  DatasetSpec spec;
  spec.kind = get_string(j, path, "kind");
  if (spec.kind == "idx") {
    check_keys(j, path, {"kind", "images", "labels", "subsample_per_class",
                         "subsample_seed"});
    spec.images_path = get_string(j, path, "images");
    spec.labels_path = get_string(j, path, "labels");
  } else if (spec.kind == "synthetic-blobs") {
    check_keys(j, path, {"kind", "n", "classes", "dim", "separation", "noise",
                         "seed", "subsample_per_class", "subsample_seed"});
    spec.n = static_cast<int>(get_long(j, path, "n"));
    spec.classes = static_cast<int>(get_long(j, path, "classes"));
    spec.dim = static_cast<int>(get_long(j, path, "dim", 2));
    spec.separation = get_double(j, path, "separation", 0.35);
    spec.noise = get_double(j, path, "noise", 0.05);
    spec.seed = static_cast<std::uint64_t>(get_long(j, path, "seed", 0));
  } else {
    fail(path + ".kind", "unknown dataset kind '" + spec.kind + "'");
  }
  spec.subsample_per_class =
      static_cast<int>(get_long(j, path, "subsample_per_class", 0));
  spec.subsample_seed =
      static_cast<std::uint64_t>(get_long(j, path, "subsample_seed", 0));
  return spec;
}

AttackConfig parse_attack(const json& j, const std::string& path) {
  check_keys(j, path,
             {"method", "epsilon", "eta", "k", "random_start", "momentum_decay",
              "scenario", "target_label", "seed"});
  AttackConfig cfg;
  cfg.method = attack_method_from_string(get_string(j, path, "method"));
  cfg.epsilon = get_double(j, path, "epsilon");
  cfg.k = static_cast<int>(get_long(j, path, "k"));
  std::optional<double> eta_default;  // required when the attack iterates
  if (cfg.k == 0) eta_default = 0.01;
  cfg.eta = get_double(j, path, "eta", eta_default);
  cfg.random_start = get_bool(j, path, "random_start", true);
  cfg.momentum_decay = get_double(j, path, "momentum_decay", 1.0);
  cfg.scenario = attack_scenario_from_string(
      get_string(j, path, "scenario", "non-targeted"));
  cfg.target_label = static_cast<int>(get_long(j, path, "target_label", -1));
  cfg.seed = static_cast<std::uint64_t>(get_long(j, path, "seed", 0));
  cfg.validate();
  return cfg;
}

LossWeights parse_weights(const json& j, const std::string& path) {
  check_keys(j, path, {"lambda_lc", "lambda_gb", "lambda_conf", "lambda_smt",
                       "alpha", "p"});
  LossWeights w;
  w.lambda_lc = get_double(j, path, "lambda_lc", 0.0);
  w.lambda_gb = get_double(j, path, "lambda_gb", 0.0);
  w.lambda_conf = get_double(j, path, "lambda_conf", 0.0);
  w.lambda_smt = get_double(j, path, "lambda_smt", 0.0);
  w.alpha = get_double(j, path, "alpha", 0.99);
  w.p = parse_p(j, path);
  w.validate();
  return w;
}

ArchitectureConfig parse_model(const json& j, const std::string& path) {
  check_keys(j, path,
             {"preset", "input_shape", "num_classes", "cut_index", "dropout"});
  ArchitectureConfig cfg;
  cfg.preset = get_string(j, path, "preset");
  cfg.input_shape = get_int_array(j, path, "input_shape");
  cfg.num_classes = static_cast<int>(get_long(j, path, "num_classes"));
  cfg.cut_index = static_cast<int>(get_long(j, path, "cut_index", -1));
  cfg.dropout = get_double(j, path, "dropout", -1.0);
  return cfg;
}

SweepSpec expand_sweep_preset(const std::string& name, const json& j,
                              const std::string& path) {
  SweepSpec sweep;
  sweep.base.method = AttackMethod::pgd;
  sweep.base.scenario = attack_scenario_from_string(
      get_string(j, path, "scenario", "non-targeted"));
  sweep.base.random_start = get_bool(j, path, "random_start", true);
  sweep.base.seed = static_cast<std::uint64_t>(get_long(j, path, "seed", 0));
  if (name == "mnist-pgd40") {
    sweep.base.k = 40;
    sweep.etas = {0.01, 0.02};
    sweep.epsilons = {0.1, 0.2, 0.3, 0.325, 0.4, 0.5, 0.6, 0.7};
  } else if (name == "cifar-pgd20") {
    sweep.base.k = 20;
    sweep.etas = {0.0039, 0.007};
    sweep.epsilons = {0.0039, 0.0157, 0.031, 0.047, 0.0627, 0.0784, 0.094, 0.11};
  } else {
    fail(path + ".preset", "unknown sweep preset '" + name + "'");
  }
  sweep.base.eta = sweep.etas.front();
  return sweep;
}

SweepSpec parse_sweep(const json& j, const std::string& path) {
  if (j.contains("preset")) {
    check_keys(j, path, {"preset", "scenario", "random_start", "seed"});
    return expand_sweep_preset(get_string(j, path, "preset"), j, path);
  }
  check_keys(j, path, {"method", "k", "etas", "epsilons", "scenario",
                       "random_start", "momentum_decay", "seed"});
  SweepSpec sweep;
  sweep.base.method = attack_method_from_string(get_string(j, path, "method"));
  sweep.base.k = static_cast<int>(get_long(j, path, "k"));
  sweep.base.scenario = attack_scenario_from_string(
      get_string(j, path, "scenario", "non-targeted"));
  sweep.base.random_start = get_bool(j, path, "random_start", true);
  sweep.base.momentum_decay = get_double(j, path, "momentum_decay", 1.0);
  sweep.base.seed = static_cast<std::uint64_t>(get_long(j, path, "seed", 0));
  sweep.etas = get_double_array(j, path, "etas");
  sweep.epsilons = get_double_array(j, path, "epsilons");
  if (sweep.etas.empty()) fail(path + ".etas", "need at least one eta");
  sweep.base.eta = sweep.etas.front();
  return sweep;
}

TrainConfig parse_train(const json& j, const std::string& path,
                        int* checkpoint_every) {
  check_keys(j, path,
             {"adversary", "loss_weights", "optimizer", "lr_drop_epochs",
              "lr_drop_factor", "batch_size", "epochs", "augment",
              "grad_clip_norm", "sample_count", "checkpoint_every"});
  TrainConfig cfg;
  if (!j.contains("adversary")) fail(path + ".adversary", "missing section");
  cfg.adversary = parse_attack(j["adversary"], path + ".adversary");
  if (!j.contains("loss_weights")) fail(path + ".loss_weights", "missing section");
  cfg.loss_weights = parse_weights(j["loss_weights"], path + ".loss_weights");

  if (!j.contains("optimizer")) fail(path + ".optimizer", "missing section");
  const json& opt = j["optimizer"];
  const std::string opath = path + ".optimizer";
  check_keys(opt, opath,
             {"kind", "lr", "momentum", "weight_decay", "beta1", "beta2", "eps"});
  cfg.optimizer = optimizer_kind_from_string(get_string(opt, opath, "kind"));
  cfg.base_lr = get_double(opt, opath, "lr");
  cfg.momentum = get_double(opt, opath, "momentum", 0.9);
  cfg.weight_decay = get_double(opt, opath, "weight_decay", 0.0);
  cfg.adam_beta1 = get_double(opt, opath, "beta1", 0.9);
  cfg.adam_beta2 = get_double(opt, opath, "beta2", 0.999);
  cfg.adam_eps = get_double(opt, opath, "eps", 1e-8);

  if (j.contains("lr_drop_epochs"))
    cfg.lr_drop_epochs = get_int_array(j, path, "lr_drop_epochs");
  cfg.lr_drop_factor = get_double(j, path, "lr_drop_factor", 0.1);
  cfg.batch_size = static_cast<int>(get_long(j, path, "batch_size", 128));
  cfg.epochs = static_cast<int>(get_long(j, path, "epochs"));
  if (j.contains("augment")) {
    const json& aug = j["augment"];
    const std::string apath = path + ".augment";
    check_keys(aug, apath, {"random_crop_pad", "horizontal_flip"});
    cfg.augment.random_crop_pad =
        static_cast<int>(get_long(aug, apath, "random_crop_pad", 0));
    cfg.augment.horizontal_flip = get_bool(aug, apath, "horizontal_flip", false);
  }
  cfg.grad_clip_norm = get_double(j, path, "grad_clip_norm", 0.0);
  cfg.sample_count = static_cast<int>(get_long(j, path, "sample_count", 1));
  *checkpoint_every = static_cast<int>(get_long(j, path, "checkpoint_every", 0));
  return cfg;
}

}  // namespace

RunConfig parse_run_config_text(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(j, "$",
             {"seed", "output_dir", "data", "model", "train", "eval", "surface",
              "embed"});
  RunConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(get_long(j, "$", "seed", 0));
  cfg.output_dir = get_string(j, "$", "output_dir", "out");

  if (j.contains("data")) {
    const json& data = j["data"];
    check_keys(data, "$.data", {"train", "test"});
    if (data.contains("train")) {
      cfg.train_data = parse_dataset(data["train"], "$.data.train");
      cfg.train_data->split = "train";
    }
    if (data.contains("test")) {
      cfg.test_data = parse_dataset(data["test"], "$.data.test");
      cfg.test_data->split = "test";
    }
  }

  if (j.contains("model")) {
    cfg.model = parse_model(j["model"], "$.model");
    cfg.has_model = true;
  }

  if (j.contains("train")) {
    cfg.train = parse_train(j["train"], "$.train", &cfg.checkpoint_every);
    if (!cfg.train_data) {
      fail("$.data.train", "training requires a train dataset");
    }
    if (!cfg.has_model) fail("$.model", "training requires a model section");
    cfg.train->dataset = *cfg.train_data;
    cfg.train->architecture = cfg.model;
    cfg.train->seed = cfg.seed;
    cfg.train->validate();
  }

  if (j.contains("eval")) {
    const json& ev = j["eval"];
    check_keys(ev, "$.eval", {"batch_size", "attacks", "sweeps"});
    cfg.eval.batch_size =
        static_cast<int>(get_long(ev, "$.eval", "batch_size", 128));
    if (ev.contains("attacks")) {
      if (!ev["attacks"].is_array()) fail("$.eval.attacks", "expected an array");
      int i = 0;
      for (const auto& a : ev["attacks"]) {
        cfg.eval.attacks.push_back(
            parse_attack(a, "$.eval.attacks[" + std::to_string(i++) + "]"));
      }
    }
    if (ev.contains("sweeps")) {
      if (!ev["sweeps"].is_array()) fail("$.eval.sweeps", "expected an array");
      int i = 0;
      for (const auto& s : ev["sweeps"]) {
        cfg.eval.sweeps.push_back(
            parse_sweep(s, "$.eval.sweeps[" + std::to_string(i++) + "]"));
      }
    }
  }

  if (j.contains("surface")) {
    const json& s = j["surface"];
    check_keys(s, "$.surface", {"extent", "grid_size", "seed", "space"});
    cfg.surface.extent = get_double(s, "$.surface", "extent", 0.3);
    cfg.surface.grid_size =
        static_cast<int>(get_long(s, "$.surface", "grid_size", 41));
    cfg.surface.seed =
        static_cast<std::uint64_t>(get_long(s, "$.surface", "seed", 0));
    cfg.surface.space = get_string(s, "$.surface", "space", "both");
    if (cfg.surface.space != "input" && cfg.surface.space != "latent" &&
        cfg.surface.space != "both") {
      fail("$.surface.space", "expected input, latent, or both");
    }
  }

  if (j.contains("embed")) {
    const json& e = j["embed"];
    check_keys(e, "$.embed", {"attack", "max_examples"});
    EmbedConfig embed;
    if (!e.contains("attack")) fail("$.embed.attack", "missing section");
    embed.attack = parse_attack(e["attack"], "$.embed.attack");
    embed.max_examples =
        static_cast<int>(get_long(e, "$.embed", "max_examples", 500));
    cfg.embed = embed;
  }
  return cfg;
}

RunConfig parse_run_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str());
}

namespace {

json dataset_to_json(const DatasetSpec& spec) {
  json j;
  j["kind"] = spec.kind;
  if (spec.kind == "idx") {
    j["images"] = spec.images_path;
    j["labels"] = spec.labels_path;
  } else {
    j["n"] = spec.n;
    j["classes"] = spec.classes;
    j["dim"] = spec.dim;
    j["separation"] = spec.separation;
    j["noise"] = spec.noise;
    j["seed"] = spec.seed;
  }
  j["subsample_per_class"] = spec.subsample_per_class;
  j["subsample_seed"] = spec.subsample_seed;
  return j;
}

json attack_to_json(const AttackConfig& cfg) {
  json j;
  j["method"] = attack_method_to_string(cfg.method);
  j["epsilon"] = cfg.epsilon;
  j["eta"] = cfg.eta;
  j["k"] = cfg.k;
  j["random_start"] = cfg.random_start;
  j["momentum_decay"] = cfg.momentum_decay;
  j["scenario"] = attack_scenario_to_string(cfg.scenario);
  j["target_label"] = cfg.target_label;
  j["seed"] = cfg.seed;
  return j;
}

json p_to_json(PNorm p) {
  if (p == PNorm::inf) return json("inf");
  return json(pnorm_to_int(p));
}

}  // namespace

std::string serialize_run_config(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  if (cfg.train_data || cfg.test_data) {
    json data;
    if (cfg.train_data) data["train"] = dataset_to_json(*cfg.train_data);
    if (cfg.test_data) data["test"] = dataset_to_json(*cfg.test_data);
    j["data"] = data;
  }
  if (cfg.has_model) {
    json m;
    m["preset"] = cfg.model.preset;
    m["input_shape"] = cfg.model.input_shape;
    m["num_classes"] = cfg.model.num_classes;
    m["cut_index"] = cfg.model.cut_index;
    m["dropout"] = cfg.model.dropout;
    j["model"] = m;
  }
  if (cfg.train) {
    const TrainConfig& t = *cfg.train;
    json tr;
    tr["adversary"] = attack_to_json(t.adversary);
    json w;
    w["lambda_lc"] = t.loss_weights.lambda_lc;
    w["lambda_gb"] = t.loss_weights.lambda_gb;
    w["lambda_conf"] = t.loss_weights.lambda_conf;
    w["lambda_smt"] = t.loss_weights.lambda_smt;
    w["alpha"] = t.loss_weights.alpha;
    w["p"] = p_to_json(t.loss_weights.p);
    tr["loss_weights"] = w;
    json o;
    o["kind"] = optimizer_kind_to_string(t.optimizer);
    o["lr"] = t.base_lr;
    o["momentum"] = t.momentum;
    o["weight_decay"] = t.weight_decay;
    o["beta1"] = t.adam_beta1;
    o["beta2"] = t.adam_beta2;
    o["eps"] = t.adam_eps;
    tr["optimizer"] = o;
    tr["lr_drop_epochs"] = t.lr_drop_epochs;
    tr["lr_drop_factor"] = t.lr_drop_factor;
    tr["batch_size"] = t.batch_size;
    tr["epochs"] = t.epochs;
    json aug;
    aug["random_crop_pad"] = t.augment.random_crop_pad;
    aug["horizontal_flip"] = t.augment.horizontal_flip;
    tr["augment"] = aug;
    tr["grad_clip_norm"] = t.grad_clip_norm;
    tr["sample_count"] = t.sample_count;
    tr["checkpoint_every"] = cfg.checkpoint_every;
    j["train"] = tr;
  }
  {
    json ev;
    ev["batch_size"] = cfg.eval.batch_size;
    ev["attacks"] = json::array();
    for (const auto& a : cfg.eval.attacks) ev["attacks"].push_back(attack_to_json(a));
    ev["sweeps"] = json::array();
    for (const auto& s : cfg.eval.sweeps) {
      json sw;
      sw["method"] = attack_method_to_string(s.base.method);
      sw["k"] = s.base.k;
      sw["etas"] = s.etas;
      sw["epsilons"] = s.epsilons;
      sw["scenario"] = attack_scenario_to_string(s.base.scenario);
      sw["random_start"] = s.base.random_start;
      sw["momentum_decay"] = s.base.momentum_decay;
      sw["seed"] = s.base.seed;
      ev["sweeps"].push_back(sw);
    }
    j["eval"] = ev;
  }
  {
    json s;
    s["extent"] = cfg.surface.extent;
    s["grid_size"] = cfg.surface.grid_size;
    s["seed"] = cfg.surface.seed;
    s["space"] = cfg.surface.space;
    j["surface"] = s;
  }
  if (cfg.embed) {
    json e;
    e["attack"] = attack_to_json(cfg.embed->attack);
    e["max_examples"] = cfg.embed->max_examples;
    j["embed"] = e;
  }
  return j.dump(2) + "\n";
}

}  // namespace adr
