#include "adr/eval.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "adr/csv.hpp"
#include "adr/losses.hpp"
#include "adr/ops.hpp"
#include "adr/rng.hpp"

namespace adr {
namespace {

std::vector<int> range_indices(int from, int to) {
  std::vector<int> idx(static_cast<std::size_t>(to - from));
  std::iota(idx.begin(), idx.end(), from);
  return idx;
}

double mean_of_bits(const std::vector<std::uint8_t>& bits) {
  if (bits.empty()) return 0.0;
  double acc = 0.0;
  for (auto b : bits) acc += b;
  return acc / static_cast<double>(bits.size());
}

}  // namespace

NaturalResult natural_accuracy(const SplitModel& model, const Dataset& ds,
                               int batch_size) {
  if (ds.size() == 0) throw ConfigError("natural_accuracy: empty dataset");
  NaturalResult result;
  result.correct.resize(static_cast<std::size_t>(ds.size()));
  for (int start = 0; start < ds.size(); start += batch_size) {
    const int end = std::min(ds.size(), start + batch_size);
    const auto idx = range_indices(start, end);
    const std::vector<int> pred =
        SplitModel::argmax_rows(model.predict(ds.batch(idx)));
    const std::vector<int> y = ds.batch_labels(idx);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      result.correct[static_cast<std::size_t>(start) + i] =
          pred[i] == y[i] ? 1 : 0;
    }
  }
  result.accuracy = mean_of_bits(result.correct);
  return result;
}

RobustResult robust_accuracy(const SplitModel& model, const Dataset& ds,
                             const AttackConfig& cfg, int batch_size) {
  cfg.validate();
  if (ds.size() == 0) throw ConfigError("robust_accuracy: empty dataset");
  RobustResult result;
  result.robust.resize(static_cast<std::size_t>(ds.size()));
  result.clean_correct.resize(static_cast<std::size_t>(ds.size()));

  for (int start = 0; start < ds.size(); start += batch_size) {
    const int end = std::min(ds.size(), start + batch_size);
    const auto idx = range_indices(start, end);
    const Tensor x = ds.batch(idx);
    const std::vector<int> y = ds.batch_labels(idx);
    const auto offset = static_cast<std::uint64_t>(start);

    const std::vector<int> clean_pred =
        SplitModel::argmax_rows(model.predict(x));
    if (cfg.scenario == AttackScenario::multi_targeted) {
      const MultiTargetedResult mt = multi_targeted(model, x, y, cfg, offset);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        result.clean_correct[static_cast<std::size_t>(start) + i] =
            mt.clean_correct[i];
        result.robust[static_cast<std::size_t>(start) + i] = mt.robust[i];
      }
    } else {
      AdversarialBatch batch;
      if (cfg.scenario == AttackScenario::targeted) {
        batch = targeted_attack(model, x, y, cfg.target_label, cfg, offset);
      } else {
        batch = generate_adversarial(model, x, y, cfg, offset);
      }
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const bool clean_ok = clean_pred[i] == y[i];
        result.clean_correct[static_cast<std::size_t>(start) + i] = clean_ok;
        result.robust[static_cast<std::size_t>(start) + i] =
            (clean_ok && !batch.success[i]) ? 1 : 0;
      }
    }
  }
  result.accuracy = mean_of_bits(result.robust);
  return result;
}

EvalReport epsilon_sweep(const SplitModel& model, const Dataset& ds,
                         const AttackConfig& base,
                         const std::vector<double>& epsilons, int batch_size) {
  EvalReport report;
  const NaturalResult nat = natural_accuracy(model, ds, batch_size);
  report.natural_accuracy = nat.accuracy;
  report.clean_bitmap = nat.correct;
  for (double eps : epsilons) {
    AttackConfig cfg = base;
    cfg.epsilon = eps;
    const RobustResult r = robust_accuracy(model, ds, cfg, batch_size);
    AttackOutcome outcome;
    outcome.cfg = cfg;
    outcome.accuracy = r.accuracy;
    outcome.robust = r.robust;
    outcome.clean_correct = r.clean_correct;
    report.attacks.push_back(std::move(outcome));
  }
  return report;
}

namespace {

double vec_norm(const std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

std::vector<double> random_unit(DetRng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  while (norm < 1e-12) {
    for (auto& x : v) x = rng.normal();
    norm = vec_norm(v);
  }
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace

SurfaceGrid loss_surface(const SplitModel& model, const Tensor& x_single,
                         int label, double extent, int grid_size,
                         std::uint64_t seed, bool latent_space) {
  if (grid_size < 1 || grid_size % 2 == 0) {
    throw ConfigError("loss_surface: grid size must be odd, got " +
                      std::to_string(grid_size));
  }
  if (x_single.shape().empty() || x_single.shape()[0] != 1) {
    throw ShapeError("loss_surface: expected a single-example batch, got " +
                     shape_str(x_single.shape()));
  }
  const std::vector<int> labels{label};

  SurfaceGrid grid;
  grid.grid_size = grid_size;
  grid.extent = extent;
  grid.space = latent_space ? "latent" : "input";
  grid.seed = seed;

  // Anchor point and its loss gradient in the displaced space.
  Tensor anchor;  // [1, dim] view of what gets displaced
  Shape anchor_shape;
  {
    Tape tape;
    if (latent_space) {
      const Tensor rep = model.intermediate(x_single);
      anchor_shape = rep.shape();
      const Tensor leaf = tape.leaf(rep.shape(), rep.data());
      ModelPass pass = model.begin_pass(&tape, false);
      const Tensor probs = model.forward_range(pass, leaf, model.cut_index(),
                                               model.num_layers());
      const Tensor loss = mean_all(cross_entropy_rows(probs, labels));
      tape.backward(loss);
      grid.d1 = tape.grad(leaf);
      anchor = rep;
    } else {
      anchor_shape = x_single.shape();
      const Tensor leaf = tape.leaf(x_single.shape(), x_single.data());
      ModelPass pass = model.begin_pass(&tape, false);
      const Tensor probs = model.forward(pass, leaf).probs;
      const Tensor loss = mean_all(cross_entropy_rows(probs, labels));
      tape.backward(loss);
      grid.d1 = tape.grad(leaf);
      anchor = x_single;
    }
  }

  DetRng rng(derive_seed(seed, {0xD1D2}));
  const double gnorm = vec_norm(grid.d1);
  if (gnorm < 1e-30) {
    grid.d1 = random_unit(rng, grid.d1.size());
    grid.d1_fallback_random = true;
  } else {
    for (auto& v : grid.d1) v /= gnorm;
  }

  // Gram-Schmidt a random direction against d1.
  while (true) {
    grid.d2 = random_unit(rng, grid.d1.size());
    double dot = 0.0;
    for (std::size_t i = 0; i < grid.d1.size(); ++i)
      dot += grid.d1[i] * grid.d2[i];
    for (std::size_t i = 0; i < grid.d2.size(); ++i)
      grid.d2[i] -= dot * grid.d1[i];
    const double res = vec_norm(grid.d2);
    if (res > 1e-8) {
      for (auto& v : grid.d2) v /= res;
      break;
    }
  }

  const int G = grid_size;
  grid.u.resize(static_cast<std::size_t>(G) * G);
  grid.v.resize(static_cast<std::size_t>(G) * G);
  grid.loss.resize(static_cast<std::size_t>(G) * G);
  grid.pred_label.resize(static_cast<std::size_t>(G) * G);

  std::vector<double> cell(anchor.size());
  for (int i = 0; i < G; ++i) {
    const double ui =
        G == 1 ? 0.0 : -extent + 2.0 * extent * i / static_cast<double>(G - 1);
    for (int j = 0; j < G; ++j) {
      const double vj =
          G == 1 ? 0.0 : -extent + 2.0 * extent * j / static_cast<double>(G - 1);
      for (std::size_t e = 0; e < cell.size(); ++e) {
        double val = anchor.data()[e] + ui * grid.d1[e] + vj * grid.d2[e];
        if (!latent_space) val = std::min(std::max(val, 0.0), 1.0);
        cell[e] = val;
      }
      const Tensor displaced(anchor_shape, cell);
      const Tensor probs = latent_space
                               ? model.classify_representation(displaced)
                               : model.predict(displaced);
      const std::size_t at = static_cast<std::size_t>(i) * G + j;
      grid.u[at] = ui;
      grid.v[at] = vj;
      grid.loss[at] = cross_entropy_rows(probs, labels).value();
      grid.pred_label[at] = SplitModel::argmax_rows(probs)[0];
    }
  }
  return grid;
}

std::vector<EmbeddingRow> export_embeddings(
    const SplitModel& model, const Dataset& clean, const Tensor& x_adv,
    const std::vector<int>& adv_labels,
    const std::vector<std::uint8_t>& adv_success) {
  const int n_adv = x_adv.defined() && !x_adv.shape().empty() ? x_adv.shape()[0] : 0;
  if (static_cast<int>(adv_labels.size()) != n_adv ||
      static_cast<int>(adv_success.size()) != n_adv) {
    throw ShapeError("export_embeddings: adversarial labels/flags do not match " +
                     std::to_string(n_adv) + " examples");
  }
  std::vector<EmbeddingRow> rows;
  int next_id = 0;

  auto append = [&](const Tensor& inputs, const std::vector<int>& labels,
                    bool is_adv, const std::vector<std::uint8_t>* success) {
    if (inputs.shape().empty() || inputs.shape()[0] == 0) return;
    Tensor rep = model.intermediate(inputs);
    if (rep.shape().size() != 2) rep = flatten(rep);
    const Tensor probs = model.predict(inputs);
    const Tensor entropy = entropy_rows(probs);
    const int B = rep.shape()[0], D = rep.shape()[1];
    if (!rows.empty() && static_cast<int>(rows.front().rep.size()) != D) {
      throw ShapeError("export_embeddings: representation dim " +
                       std::to_string(D) + " does not match earlier rows of dim " +
                       std::to_string(rows.front().rep.size()));
    }
    for (int i = 0; i < B; ++i) {
      EmbeddingRow row;
      row.id = next_id++;
      row.label = labels[static_cast<std::size_t>(i)];
      row.is_adv = is_adv;
      row.polarity =
          is_adv ? ((*success)[static_cast<std::size_t>(i)] ? 1 : -1) : 0;
      row.entropy = entropy.value(static_cast<std::size_t>(i));
      row.rep.assign(
          rep.data().begin() + static_cast<std::size_t>(i) * D,
          rep.data().begin() + static_cast<std::size_t>(i + 1) * D);
      rows.push_back(std::move(row));
    }
  };

  append(clean.images, clean.labels, false, nullptr);
  if (n_adv > 0) append(x_adv, adv_labels, true, &adv_success);
  return rows;
}

void write_sweep_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("sweep: cannot open '" + path + "' for writing");
  out << "epsilon,eta,k,method,scenario,accuracy\n";
  for (const auto& a : report.attacks) {
    out << format_double(a.cfg.epsilon) << ',' << format_double(a.cfg.eta) << ','
        << a.cfg.k << ',' << attack_method_to_string(a.cfg.method) << ','
        << attack_scenario_to_string(a.cfg.scenario) << ','
        << format_double(a.accuracy) << '\n';
  }
}

std::vector<SweepRow> read_sweep_csv(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.empty() || rows[0].size() != 6) {
    throw IoError("sweep: bad header in '" + path + "'");
  }
  std::vector<SweepRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 6) throw IoError("sweep: bad row in '" + path + "'");
    SweepRow s;
    s.epsilon = parse_double(r[0]);
    s.eta = parse_double(r[1]);
    s.k = static_cast<int>(parse_long(r[2]));
    s.method = r[3];
    s.scenario = r[4];
    s.accuracy = parse_double(r[5]);
    out.push_back(std::move(s));
  }
  return out;
}

void write_surface_csv(const SurfaceGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("surface: cannot open '" + path + "' for writing");
  out << "# space=" << grid.space << "\n";
  out << "# seed=" << grid.seed << "\n";
  out << "# grid_size=" << grid.grid_size << "\n";
  out << "# extent=" << format_double(grid.extent) << "\n";
  out << "# d1_fallback_random=" << (grid.d1_fallback_random ? 1 : 0) << "\n";
  out << "i,j,u,v,loss,pred_label\n";
  const int G = grid.grid_size;
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j) {
      const std::size_t at = static_cast<std::size_t>(i) * G + j;
      out << i << ',' << j << ',' << format_double(grid.u[at]) << ','
          << format_double(grid.v[at]) << ',' << format_double(grid.loss[at])
          << ',' << grid.pred_label[at] << '\n';
    }
}

SurfaceGrid read_surface_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("surface: cannot open '" + path + "'");
  SurfaceGrid grid;
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2);
      const std::string val = line.substr(eq + 1);
      if (key == "space") grid.space = val;
      else if (key == "seed") grid.seed = static_cast<std::uint64_t>(parse_long(val));
      else if (key == "grid_size") grid.grid_size = static_cast<int>(parse_long(val));
      else if (key == "extent") grid.extent = parse_double(val);
      else if (key == "d1_fallback_random") grid.d1_fallback_random = parse_long(val) != 0;
      continue;
    }
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty() || rows[0].size() != 6) {
    throw IoError("surface: bad header in '" + path + "'");
  }
  const int G = grid.grid_size;
  const std::size_t cells = static_cast<std::size_t>(G) * G;
  if (rows.size() - 1 != cells) {
    throw IoError("surface: expected " + std::to_string(cells) + " rows, got " +
                  std::to_string(rows.size() - 1));
  }
  grid.u.resize(cells);
  grid.v.resize(cells);
  grid.loss.resize(cells);
  grid.pred_label.resize(cells);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto i = static_cast<std::size_t>(parse_long(row[0]));
    const auto j = static_cast<std::size_t>(parse_long(row[1]));
    const std::size_t at = i * static_cast<std::size_t>(G) + j;
    grid.u[at] = parse_double(row[2]);
    grid.v[at] = parse_double(row[3]);
    grid.loss[at] = parse_double(row[4]);
    grid.pred_label[at] = static_cast<int>(parse_long(row[5]));
  }
  return grid;
}

void write_embeddings_csv(const std::vector<EmbeddingRow>& rows,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("embeddings: cannot open '" + path + "' for writing");
  const std::size_t dim = rows.empty() ? 0 : rows.front().rep.size();
  out << "id,label,is_adv,polarity,entropy";
  for (std::size_t d = 0; d < dim; ++d) out << ",rep_" << d;
  out << "\n";
  for (const auto& r : rows) {
    out << r.id << ',' << r.label << ',' << (r.is_adv ? 1 : 0) << ','
        << r.polarity << ',' << format_double(r.entropy);
    for (double v : r.rep) out << ',' << format_double(v);
    out << '\n';
  }
}

std::vector<EmbeddingRow> read_embeddings_csv(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.empty() || rows[0].size() < 5) {
    throw IoError("embeddings: bad header in '" + path + "'");
  }
  const std::size_t dim = rows[0].size() - 5;
  std::vector<EmbeddingRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != rows[0].size()) {
      throw IoError("embeddings: bad row in '" + path + "'");
    }
    EmbeddingRow row;
    row.id = static_cast<int>(parse_long(r[0]));
    row.label = static_cast<int>(parse_long(r[1]));
    row.is_adv = parse_long(r[2]) != 0;
    row.polarity = static_cast<int>(parse_long(r[3]));
    row.entropy = parse_double(r[4]);
    row.rep.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) row.rep[d] = parse_double(r[5 + d]);
    out.push_back(std::move(row));
  }
  return out;
}

void save_report(const EvalReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir + "/report.csv");
    if (!out) throw IoError("report: cannot open '" + dir + "/report.csv'");
    out << "natural_accuracy," << format_double(report.natural_accuracy) << "\n";
    out << "epsilon,eta,k,method,scenario,random_start,seed,accuracy\n";
    for (const auto& a : report.attacks) {
      out << format_double(a.cfg.epsilon) << ',' << format_double(a.cfg.eta)
          << ',' << a.cfg.k << ',' << attack_method_to_string(a.cfg.method)
          << ',' << attack_scenario_to_string(a.cfg.scenario) << ','
          << (a.cfg.random_start ? 1 : 0) << ',' << a.cfg.seed << ','
          << format_double(a.accuracy) << '\n';
    }
  }
  {
    std::ofstream out(dir + "/outcomes.csv");
    if (!out) throw IoError("report: cannot open '" + dir + "/outcomes.csv'");
    out << "attack_index,example_id,clean_correct,robust\n";
    for (std::size_t e = 0; e < report.clean_bitmap.size(); ++e) {
      out << -1 << ',' << e << ',' << int(report.clean_bitmap[e]) << ','
          << int(report.clean_bitmap[e]) << '\n';
    }
    for (std::size_t a = 0; a < report.attacks.size(); ++a) {
      const auto& outc = report.attacks[a];
      for (std::size_t e = 0; e < outc.robust.size(); ++e) {
        out << a << ',' << e << ',' << int(outc.clean_correct[e]) << ','
            << int(outc.robust[e]) << '\n';
      }
    }
  }
}

EvalReport load_report(const std::string& dir) {
  EvalReport report;
  {
    const auto rows = read_csv(dir + "/report.csv");
    if (rows.size() < 2 || rows[0].size() != 2 ||
        rows[0][0] != "natural_accuracy") {
      throw IoError("report: bad summary in '" + dir + "'");
    }
    report.natural_accuracy = parse_double(rows[0][1]);
    for (std::size_t i = 2; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.size() != 8) throw IoError("report: bad attack row in '" + dir + "'");
      AttackOutcome outcome;
      outcome.cfg.epsilon = parse_double(r[0]);
      outcome.cfg.eta = parse_double(r[1]);
      outcome.cfg.k = static_cast<int>(parse_long(r[2]));
      outcome.cfg.method = attack_method_from_string(r[3]);
      outcome.cfg.scenario = attack_scenario_from_string(r[4]);
      outcome.cfg.random_start = parse_long(r[5]) != 0;
      outcome.cfg.seed = static_cast<std::uint64_t>(parse_long(r[6]));
      outcome.accuracy = parse_double(r[7]);
      report.attacks.push_back(std::move(outcome));
    }
  }
  {
    const auto rows = read_csv(dir + "/outcomes.csv");
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.size() != 4) throw IoError("report: bad outcome row in '" + dir + "'");
      const long a = parse_long(r[0]);
      const bool clean_ok = parse_long(r[2]) != 0;
      const bool robust = parse_long(r[3]) != 0;
      if (a < 0) {
        report.clean_bitmap.push_back(clean_ok ? 1 : 0);
      } else {
        auto& outcome = report.attacks.at(static_cast<std::size_t>(a));
        outcome.clean_correct.push_back(clean_ok ? 1 : 0);
        outcome.robust.push_back(robust ? 1 : 0);
      }
    }
  }
  return report;
}

}  // namespace adr
