#include "pcs/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "pcs/plot.hpp"

namespace pcs::cli {

using exp::json;

namespace {

// Typed, path-aware view of one JSON object. Keys that are read get marked;
// finish() rejects the rest.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  [[nodiscard]] std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  bool get(const std::string& key, int& out) {
    const json* v = find(key);
    if (!v) return false;
    out = as_int(*v, at(key));
    return true;
  }

  bool get(const std::string& key, std::uint64_t& out) {
    const json* v = find(key);
    if (!v) return false;
    if (!(v->is_number_unsigned() || (v->is_number_integer() && v->get<std::int64_t>() >= 0)))
      throw ConfigError(at(key), "expected a non-negative integer");
    out = v->get<std::uint64_t>();
    return true;
  }

  bool get(const std::string& key, double& out) {
    const json* v = find(key);
    if (!v) return false;
    if (!v->is_number()) throw ConfigError(at(key), "expected a number");
    out = v->get<double>();
    if (!std::isfinite(out)) throw ConfigError(at(key), "must be finite");
    return true;
  }

  bool get(const std::string& key, bool& out) {
    const json* v = find(key);
    if (!v) return false;
    if (!v->is_boolean()) throw ConfigError(at(key), "expected true or false");
    out = v->get<bool>();
    return true;
  }

  bool get(const std::string& key, std::string& out) {
    const json* v = find(key);
    if (!v) return false;
    if (!v->is_string()) throw ConfigError(at(key), "expected a string");
    out = v->get<std::string>();
    return true;
  }

  bool get(const std::string& key, std::vector<int>& out) {
    const json* v = find(key);
    if (!v) return false;
    if (!v->is_array()) throw ConfigError(at(key), "expected an array of integers");
    out.clear();
    for (std::size_t i = 0; i < v->size(); ++i) out.push_back(as_int((*v)[i], at(key) + "[" + std::to_string(i) + "]"));
    return true;
  }

  template <class Enum, class Parse>
  bool get_enum(const std::string& key, Enum& out, Parse parse) {
    std::string s;
    if (!get(key, s)) return false;
    try {
      out = parse(s);
    } catch (const std::exception& e) {
      throw ConfigError(at(key), e.what());
    }
    return true;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(at(item.key()), "unknown key");
    }
  }

 private:
  static int as_int(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
      throw ConfigError(path, "integer out of range");
    return static_cast<int>(x);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
void wrap(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
}

void check(bool ok, const std::string& path, const std::string& msg) {
  if (!ok) throw ConfigError(path, msg);
}

// ---------------------------------------------------------------- sections

void read_arch(Node& n, ArchSpec& arch) {
  n.get("widths", arch.widths);
  n.get_enum("activation", arch.activation, activation_from_string);
  n.get("bias", arch.bias);
  n.finish();
  check(arch.widths.size() >= 2, "arch.widths", "needs at least 2 entries");
  for (std::size_t i = 0; i < arch.widths.size(); ++i)
    check(arch.widths[i] >= 1, "arch.widths[" + std::to_string(i) + "]", "must be >= 1");
}

void read_data(Node& n, data::DataConfig& d, bool& seed_given) {
  n.get_enum("kind", d.kind, data::data_kind_from_string);
  n.get("d_x", d.d_x);
  n.get("d_y", d.d_y);
  n.get("n_samples", d.n_samples);
  n.get("mean", d.mean);
  n.get("stddev", d.stddev);
  n.get("flip_dims", d.flip_dims);
  n.get("n_classes", d.n_classes);
  n.get("class_scale", d.class_scale);
  n.get("noise", d.noise);
  n.get("rows", d.rows);
  n.get("cols", d.cols);
  n.get("rank", d.rank);
  n.get("mask_fraction", d.mask_fraction);
  seed_given = n.get("seed", d.seed);
  n.finish();
}

void read_solver(Node& n, pc::SolverConfig& s) {
  n.get_enum("mode", s.mode, pc::solver_mode_from_string);
  n.get("dt", s.dt);
  n.get("max_steps", s.max_steps);
  n.get("abs_tol", s.abs_tol);
  n.get("rel_tol", s.rel_tol);
  n.get("grad_tol", s.grad_tol);
  n.get("t_max", s.t_max);
  n.finish();
}

std::pair<int, int> data_dims(const data::DataConfig& d) {
  if (d.kind == data::DataKind::lowrank_matrix) return {d.cols, d.rows};
  return {d.d_x, d.d_y};
}

void check_arch_data(const ArchSpec& arch, const data::DataConfig& d) {
  const auto [dx, dy] = data_dims(d);
  check(arch.in_dim() == dx, "arch.widths[0]", "input width " + std::to_string(arch.in_dim()) +
                                                   " differs from data input dimension " + std::to_string(dx));
  check(arch.out_dim() == dy, "arch.widths[" + std::to_string(arch.widths.size() - 1) + "]",
        "output width " + std::to_string(arch.out_dim()) + " differs from data output dimension " +
            std::to_string(dy));
}

void check_solver_arch(const pc::SolverConfig& s, const ArchSpec& arch) {
  check(s.mode != pc::SolverMode::exact_linear || arch.is_linear(), "solver.mode",
        "exact_linear needs a linear architecture");
}

void check_point(exp::InitKind k, const ArchSpec& arch) {
  check(k != exp::InitKind::zero_rank || arch.num_layers() >= 3, "training.point",
        "zero_rank needs at least 2 hidden layers");
}

// ---------------------------------------------------------------- defaults

void set_defaults(RunConfig& c) {
  data::DataConfig chain_data;
  chain_data.d_x = chain_data.d_y = 1;

  if (c.experiment == "validate-energy") {
    c.theory.arch = ArchSpec::uniform(16, 16, 2, 16);
    c.theory.data.d_x = c.theory.data.d_y = 16;
    c.theory.data.n_samples = 64;
    c.theory.solver.mode = pc::SolverMode::heun_adaptive;
  } else if (c.experiment == "escape") {
    c.escape.arch = ArchSpec::chain(2);
    c.escape.data = chain_data;
    c.escape.solver.mode = pc::SolverMode::euler;
    c.escape.solver.dt = 0.1;
    c.escape.solver.max_steps = 20;
  } else if (c.experiment == "matcomp") {
    c.matcomp.data.kind = data::DataKind::lowrank_matrix;
  } else if (c.experiment == "spectra") {
    c.spectra.arch = ArchSpec::chain(2);
    // One sample, x = 1, y = −1.
    c.spectra.data = chain_data;
    c.spectra.data.n_samples = 1;
    c.spectra.data.stddev = 0.0;
  } else if (c.experiment == "landscape") {
    c.landscape.arch = ArchSpec::chain(2);
    c.landscape.data = chain_data;
    c.landscape.data.n_samples = 1;
    c.landscape.data.stddev = 0.0;
    c.landscape.solver.mode = pc::SolverMode::exact_linear;
  }
}

// ---------------------------------------------------------------- training

void read_training(Node& n, RunConfig& c) {
  const std::string& e = c.experiment;
  if (e == "validate-energy") {
    n.get("steps", c.theory.steps);
    n.get("eta", c.theory.eta);
    n.get("init_gain", c.theory.init_gain);
  } else if (e == "escape") {
    n.get_enum("init", c.escape.init, exp::init_kind_from_string);
    if (const json* t = n.find("trainers")) {
      check(t->is_array() && !t->empty(), n.at("trainers"), "expected a non-empty array of \"bp\" / \"pc\"");
      c.trainers.clear();
      for (std::size_t i = 0; i < t->size(); ++i) {
        const std::string p = n.at("trainers") + "[" + std::to_string(i) + "]";
        check((*t)[i].is_string(), p, "expected a string");
        wrap(p, [&] { c.trainers.push_back(exp::trainer_from_string((*t)[i].get<std::string>())); });
      }
    }
    n.get("sigma", c.escape.sigma);
    n.get("eta", c.escape.eta);
    n.get("max_steps", c.escape.max_steps);
    n.get("batch_size", c.escape.batch_size);
    n.get("escape_factor", c.escape.escape_factor);
    n.get("stop_factor", c.escape.stop_factor);
  } else if (e == "matcomp") {
    auto& m = c.matcomp;
    n.get("width", m.width);
    n.get("hidden", m.hidden);
    n.get("sigma", m.sigma);
    n.get("eta", m.eta);
    n.get("bp_max_steps", m.bp_max_steps);
    n.get("bp_stop_loss", m.bp_stop_loss);
    n.get("pc_max_steps", m.pc_max_steps);
    n.get("plateau_window", m.plateau_window);
    n.get("plateau_rel_change", m.plateau_rel_change);
    n.get("rank_tol", m.rank_tol);
    n.get("checkpoint_every", m.checkpoint_every);
    n.get("pc_ranks", m.pc_ranks);
  } else if (e == "spectra") {
    n.get_enum("point", c.spectra.point, exp::init_kind_from_string);
  } else if (e == "landscape") {
    n.get_enum("point", c.landscape.point, exp::init_kind_from_string);
    n.get_enum("surface", c.landscape.surface, [](const std::string& s) {
      if (s == "loss") return exp::Surface::loss;
      if (s == "energy") return exp::Surface::energy;
      throw std::invalid_argument("unknown surface '" + s + "' (loss or energy)");
    });
    n.get("resolution", c.landscape.resolution);
    n.get("half_range", c.landscape.half_range);
  } else if (e == "chain-analysis") {
    auto& ch = c.chain;
    n.get("instances", ch.instances);
    n.get("min_hidden", ch.min_hidden);
    n.get("max_hidden", ch.max_hidden);
    n.get("minima_instances", ch.minima_instances);
    n.get("minima_max_hidden", ch.minima_max_hidden);
  }
  n.finish();
}

void apply_overrides(RunConfig& c, const Overrides& ov) {
  const std::string& e = c.experiment;
  if (ov.seed) c.seed = *ov.seed;
  if (ov.steps) {
    if (e == "validate-energy") c.theory.steps = *ov.steps;
    else if (e == "escape") c.escape.max_steps = *ov.steps;
    else if (e == "matcomp") c.matcomp.bp_max_steps = *ov.steps;
    else throw ConfigError("--steps", "not used by " + e);
  }
  if (ov.eta) {
    if (e == "validate-energy") c.theory.eta = *ov.eta;
    else if (e == "escape") c.escape.eta = *ov.eta;
    else if (e == "matcomp") c.matcomp.eta = *ov.eta;
    else throw ConfigError("--eta", "not used by " + e);
  }
  if (ov.sigma) {
    if (e == "escape") c.escape.sigma = *ov.sigma;
    else if (e == "matcomp") c.matcomp.sigma = *ov.sigma;
    else throw ConfigError("--sigma", "not used by " + e);
  }
}

void validate(const RunConfig& c) {
  const std::string& e = c.experiment;
  auto common = [](const ArchSpec& arch, const data::DataConfig& d) {
    wrap("arch", [&] { arch.validate(); });
    wrap("data", [&] { d.validate(); });
    check_arch_data(arch, d);
  };
  if (e == "validate-energy") {
    const auto& t = c.theory;
    common(t.arch, t.data);
    wrap("solver", [&] { t.solver.validate(); });
    check(t.arch.is_linear(), "arch.activation", "validate-energy needs a linear architecture");
    check(t.steps >= 0, "training.steps", "must be >= 0");
    check(t.eta >= 0.0, "training.eta", "must be >= 0");
    check(t.init_gain >= 0.0, "training.init_gain", "must be >= 0");
  } else if (e == "escape") {
    const auto& s = c.escape;
    common(s.arch, s.data);
    wrap("solver", [&] { s.solver.validate(); });
    check_solver_arch(s.solver, s.arch);
    check(s.init != exp::InitKind::zero_rank || s.arch.num_layers() >= 3, "training.init",
          "zero_rank needs at least 2 hidden layers");
    check(s.sigma > 0.0, "training.sigma", "must be > 0");
    check(s.eta >= 0.0, "training.eta", "must be >= 0");
    check(s.max_steps >= 0, "training.max_steps", "must be >= 0");
    check(s.batch_size >= 1, "training.batch_size", "must be >= 1");
    check(s.escape_factor > 0.0 && s.escape_factor <= 1.0, "training.escape_factor", "must be in (0, 1]");
    check(s.stop_factor >= 0.0 && s.stop_factor < 1.0, "training.stop_factor", "must be in [0, 1)");
  } else if (e == "matcomp") {
    const auto& m = c.matcomp;
    wrap("data", [&] { m.data.validate(); });
    check(m.data.kind == data::DataKind::lowrank_matrix, "data.kind", "matcomp needs lowrank_matrix");
    check(m.width >= 1, "training.width", "must be >= 1");
    check(m.hidden >= 1, "training.hidden", "must be >= 1");
    check(m.sigma > 0.0, "training.sigma", "must be > 0");
    check(m.eta > 0.0, "training.eta", "must be > 0");
    check(m.bp_max_steps >= 1, "training.bp_max_steps", "must be >= 1");
    check(m.bp_stop_loss >= 0.0, "training.bp_stop_loss", "must be >= 0");
    check(m.pc_max_steps >= 0, "training.pc_max_steps", "must be >= 0");
    check(m.plateau_window >= 1, "training.plateau_window", "must be >= 1");
    check(m.plateau_rel_change > 0.0, "training.plateau_rel_change", "must be > 0");
    check(m.rank_tol > 0.0 && m.rank_tol < 1.0, "training.rank_tol", "must be in (0, 1)");
    check(m.checkpoint_every >= 1, "training.checkpoint_every", "must be >= 1");
    for (std::size_t i = 0; i < m.pc_ranks.size(); ++i)
      check(m.pc_ranks[i] >= 0, "training.pc_ranks[" + std::to_string(i) + "]", "must be >= 0");
  } else if (e == "spectra") {
    const auto& s = c.spectra;
    common(s.arch, s.data);
    check(s.arch.is_linear(), "arch.activation", "spectra needs a linear architecture");
    check(s.arch.param_count() <= 600, "arch.widths",
          "too many parameters for dense Hessians (" + std::to_string(s.arch.param_count()) + " > 600)");
    check_point(s.point, s.arch);
  } else if (e == "landscape") {
    const auto& l = c.landscape;
    common(l.arch, l.data);
    wrap("solver", [&] { l.solver.validate(); });
    check_solver_arch(l.solver, l.arch);
    check_point(l.point, l.arch);
    check(l.resolution >= 2, "training.resolution", "must be >= 2");
    check(l.half_range > 0.0, "training.half_range", "must be > 0");
  } else if (e == "chain-analysis") {
    const auto& ch = c.chain;
    check(ch.instances >= 1, "training.instances", "must be >= 1");
    check(ch.min_hidden >= 1, "training.min_hidden", "must be >= 1");
    check(ch.max_hidden >= ch.min_hidden, "training.max_hidden", "must be >= min_hidden");
    check(ch.minima_instances >= 0, "training.minima_instances", "must be >= 0");
    check(ch.minima_max_hidden >= 1, "training.minima_max_hidden", "must be >= 1");
  }
}

bool uses(const std::string& e, const std::string& section) {
  if (section == "training") return true;
  if (e == "chain-analysis") return false;
  if (e == "matcomp") return section == "data";
  if (e == "spectra") return section == "arch" || section == "data";
  return true;
}

// ---------------------------------------------------------------- output

std::vector<double> column(const exp::TrainLog& log, double exp::StepRecord::*field) {
  std::vector<double> out;
  out.reserve(log.steps.size());
  for (const auto& r : log.steps) out.push_back(r.*field);
  return out;
}

std::vector<double> step_axis(const exp::TrainLog& log) {
  std::vector<double> out;
  out.reserve(log.steps.size());
  for (const auto& r : log.steps) out.push_back(r.step);
  return out;
}

plot::Series series(const exp::TrainLog& log, double exp::StepRecord::*field, const std::string& label) {
  return {label, step_axis(log), column(log, field)};
}

struct Outputs {
  std::filesystem::path stem;
  std::vector<std::string> written;

  std::filesystem::path path(const std::string& suffix) const {
    std::filesystem::path p = stem;
    p += suffix;
    return p;
  }
  void text(const std::string& suffix, const std::string& content) {
    exp::write_atomic(path(suffix), content);
    written.push_back(path(suffix).string());
  }
  void curves(const std::string& suffix, const std::vector<plot::Series>& s, plot::PlotKind kind,
              const std::string& title, bool log_y) {
    plot::emit_svg_plot(s, kind, path(suffix), title, log_y);
    written.push_back(path(suffix).string());
  }
};

std::vector<plot::Series> curves(const std::vector<exp::TrainLog>& logs, double exp::StepRecord::*field) {
  std::vector<plot::Series> out;
  for (const auto& l : logs) out.push_back(series(l, field, l.trainer));
  return out;
}

json run_validate_energy(const RunConfig& c, Outputs& o) {
  exp::TheoryConfig cfg = c.theory;
  cfg.seed = c.seed;
  const exp::TheoryResult res = exp::run_theory_validation(cfg);
  o.text(".csv", res.log.to_csv());
  o.curves("_energy.svg",
           {series(res.log, &exp::StepRecord::energy, "numeric equilibrium"),
            series(res.log, &exp::StepRecord::energy_theory, "closed form")},
           plot::PlotKind::loss_curve, "equilibrated energy during PC training", true);
  o.curves("_gap.svg", {series(res.log, &exp::StepRecord::rel_gap, "relative gap")}, plot::PlotKind::loss_curve,
           "relative energy gap", true);
  return json{{"steps", res.log.steps.size()},
              {"max_rel_gap", res.max_rel_gap},
              {"max_final_grad", res.max_final_grad},
              {"final_loss", res.log.steps.back().train_loss}};
}

json run_escape(const RunConfig& c, Outputs& o) {
  std::vector<exp::TrainLog> logs;
  json reports = json::object();
  for (exp::Trainer t : c.trainers) {
    exp::EscapeConfig cfg = c.escape;
    cfg.trainer = t;
    cfg.seed = c.seed;
    exp::EscapeResult res = exp::run_escape(cfg);
    reports[exp::to_string(t)] = exp::to_json(res.report);
    logs.push_back(std::move(res.log));
  }
  o.text(".csv", exp::logs_to_csv(logs));
  o.curves("_loss.svg", curves(logs, &exp::StepRecord::train_loss), plot::PlotKind::loss_curve, "training loss", true);
  o.curves("_grad.svg", curves(logs, &exp::StepRecord::grad_norm), plot::PlotKind::grad_norm,
           "weight gradient norm", true);
  return json{{"reports", reports}};
}

json run_matcomp(const RunConfig& c, Outputs& o) {
  exp::MatrixCompletionConfig cfg = c.matcomp;
  cfg.seed = c.seed;
  const exp::MatrixCompletionResult res = exp::run_matrix_completion(cfg);
  std::vector<exp::TrainLog> logs{res.bp_log};
  logs.insert(logs.end(), res.pc_logs.begin(), res.pc_logs.end());
  o.text(".csv", exp::logs_to_csv(logs));
  o.curves("_loss.svg", curves(logs, &exp::StepRecord::train_loss), plot::PlotKind::loss_curve, "masked loss", true);
  o.curves("_grad.svg", curves(logs, &exp::StepRecord::grad_norm), plot::PlotKind::grad_norm,
           "weight gradient norm", true);
  json plateaus = json::array();
  for (const auto& p : res.plateaus) plateaus.push_back(exp::to_json(p));
  return json{{"bp_steps", res.bp_log.steps.size()},
              {"rank_sequence", res.rank_sequence},
              {"rank_monotone", res.rank_monotone},
              {"plateaus", plateaus}};
}

json run_spectra(const RunConfig& c, Outputs& o) {
  exp::SpectraConfig cfg = c.spectra;
  cfg.seed = c.seed;
  const exp::SpectraResult res = exp::run_spectra(cfg);
  std::ostringstream csv;
  csv.precision(17);
  csv << "quantity,index,theory,numeric\n";
  auto rows = [&](const char* q, const Vector& th, const Vector& nu) {
    for (Eigen::Index i = 0; i < th.size(); ++i) csv << q << ',' << i << ',' << th(i) << ',' << nu(i) << '\n';
  };
  rows("energy", res.theory_eigs_energy, res.numeric_eigs_energy);
  rows("loss", res.theory_eigs_loss, res.numeric_eigs_loss);
  o.text(".csv", csv.str());
  const std::vector<plot::Spectrum> spectra{{"energy (theory)", res.theory_eigs_energy},
                                            {"energy (numeric)", res.numeric_eigs_energy},
                                            {"loss (theory)", res.theory_eigs_loss},
                                            {"loss (numeric)", res.numeric_eigs_loss}};
  plot::emit_svg_plot(spectra, o.path("_spectrum.svg"), "Hessian eigenvalues at the " + exp::to_string(cfg.point));
  o.written.push_back(o.path("_spectrum.svg").string());
  return json{{"theory_eigs_energy", exp::to_json(res.theory_eigs_energy)},
              {"numeric_eigs_energy", exp::to_json(res.numeric_eigs_energy)},
              {"theory_eigs_loss", exp::to_json(res.theory_eigs_loss)},
              {"numeric_eigs_loss", exp::to_json(res.numeric_eigs_loss)},
              {"max_entry_gap_energy", res.max_entry_gap_energy},
              {"max_entry_gap_loss", res.max_entry_gap_loss},
              {"energy_report", exp::to_json(res.energy_report)},
              {"loss_report", exp::to_json(res.loss_report)}};
}

json run_landscape(const RunConfig& c, Outputs& o) {
  exp::LandscapeConfig cfg = c.landscape;
  cfg.seed = c.seed;
  const landscape::LandscapeGrid g = exp::run_landscape(cfg);
  o.text(".csv", exp::grid_to_csv(g));
  const std::string what = cfg.surface == exp::Surface::energy ? "equilibrated energy" : "loss";
  plot::emit_svg_plot(g, o.path("_heatmap.svg"), what + " around the " + exp::to_string(cfg.point));
  o.written.push_back(o.path("_heatmap.svg").string());
  const Eigen::Index mid = g.alphas.size() / 2;
  return json{{"min", g.values.minCoeff()},
              {"max", g.values.maxCoeff()},
              {"value_near_center", g.values(mid, mid)},
              {"dir_a", exp::to_json(g.dir_a)},
              {"dir_b", exp::to_json(g.dir_b)},
              {"center", exp::to_json(g.center)}};
}

json run_chain(const RunConfig& c, Outputs& o) {
  exp::ChainAnalysisConfig cfg = c.chain;
  cfg.seed = c.seed;
  const exp::ChainAnalysisResult res = exp::run_chain_analysis(cfg);
  std::ostringstream csv;
  csv.precision(17);
  csv << "hidden,index,eigenvalue\n";
  std::vector<plot::Spectrum> spectra;
  json js = json::array();
  for (std::size_t k = 0; k < res.origin_spectra.size(); ++k) {
    const int h = cfg.min_hidden + static_cast<int>(k);
    const Vector& ev = res.origin_spectra[k];
    for (Eigen::Index i = 0; i < ev.size(); ++i) csv << h << ',' << i << ',' << ev(i) << '\n';
    spectra.push_back({"H=" + std::to_string(h), ev});
    js.push_back(json{{"hidden", h}, {"eigenvalues", exp::to_json(ev)}});
  }
  o.text(".csv", csv.str());
  plot::emit_svg_plot(spectra, o.path("_spectrum.svg"), "chain energy Hessian at the origin (x = 1, y = -1)");
  o.written.push_back(o.path("_spectrum.svg").string());
  return json{{"max_gap_loss_hessian", res.max_gap_loss_hessian},
              {"max_gap_energy_hessian", res.max_gap_energy_hessian},
              {"max_gap_energy", res.max_gap_energy},
              {"max_gap_minima", res.max_gap_minima},
              {"origin_spectra", js}};
}

}  // namespace

RunConfig parse_config(const std::string& experiment, const json& j, const Overrides& ov) {
  if (std::find(kExperiments.begin(), kExperiments.end(), experiment) == kExperiments.end())
    throw ConfigError("experiment", "unknown experiment '" + experiment + "'");
  RunConfig c;
  c.experiment = experiment;
  set_defaults(c);

  Node root(j, "");
  std::string named;
  if (root.get("experiment", named))
    check(named == experiment, "experiment", "config is for '" + named + "', not '" + experiment + "'");
  root.get("seed", c.seed);
  std::string out;
  if (root.get("out", out)) c.out = out;

  ArchSpec* arch = nullptr;
  data::DataConfig* data = nullptr;
  pc::SolverConfig* solver = nullptr;
  if (experiment == "validate-energy") {
    arch = &c.theory.arch, data = &c.theory.data, solver = &c.theory.solver;
  } else if (experiment == "escape") {
    arch = &c.escape.arch, data = &c.escape.data, solver = &c.escape.solver;
  } else if (experiment == "matcomp") {
    data = &c.matcomp.data;
  } else if (experiment == "spectra") {
    arch = &c.spectra.arch, data = &c.spectra.data;
  } else if (experiment == "landscape") {
    arch = &c.landscape.arch, data = &c.landscape.data, solver = &c.landscape.solver;
  }

  bool data_seed_given = false;
  for (const char* section : {"arch", "data", "solver", "training"}) {
    const json* v = root.find(section);
    if (!v) continue;
    if (!uses(experiment, section)) throw ConfigError(section, "unknown key for " + experiment);
    Node n(*v, section);
    if (std::string(section) == "arch") read_arch(n, *arch);
    else if (std::string(section) == "data") read_data(n, *data, data_seed_given);
    else if (std::string(section) == "solver") read_solver(n, *solver);
    else read_training(n, c);
  }
  root.finish();

  apply_overrides(c, ov);
  if (data && !data_seed_given) data->seed = c.seed;
  validate(c);
  return c;
}

json echo(const RunConfig& c) {
  json j{{"experiment", c.experiment}, {"seed", c.seed}, {"out", c.out.string()}};
  const std::string& e = c.experiment;
  if (e == "validate-energy") {
    j["arch"] = exp::to_json(c.theory.arch);
    j["data"] = exp::to_json(c.theory.data);
    j["solver"] = exp::to_json(c.theory.solver);
    j["training"] = json{{"steps", c.theory.steps}, {"eta", c.theory.eta}, {"init_gain", c.theory.init_gain}};
  } else if (e == "escape") {
    const auto& s = c.escape;
    json trainers = json::array();
    for (auto t : c.trainers) trainers.push_back(exp::to_string(t));
    j["arch"] = exp::to_json(s.arch);
    j["data"] = exp::to_json(s.data);
    j["solver"] = exp::to_json(s.solver);
    j["training"] = json{{"init", exp::to_string(s.init)}, {"trainers", trainers},
                         {"sigma", s.sigma},                {"eta", s.eta},
                         {"max_steps", s.max_steps},        {"batch_size", s.batch_size},
                         {"escape_factor", s.escape_factor}, {"stop_factor", s.stop_factor}};
  } else if (e == "matcomp") {
    const auto& m = c.matcomp;
    j["data"] = exp::to_json(m.data);
    j["training"] = json{{"width", m.width},
                         {"hidden", m.hidden},
                         {"sigma", m.sigma},
                         {"eta", m.eta},
                         {"bp_max_steps", m.bp_max_steps},
                         {"bp_stop_loss", m.bp_stop_loss},
                         {"pc_max_steps", m.pc_max_steps},
                         {"plateau_window", m.plateau_window},
                         {"plateau_rel_change", m.plateau_rel_change},
                         {"rank_tol", m.rank_tol},
                         {"checkpoint_every", m.checkpoint_every},
                         {"pc_ranks", m.pc_ranks}};
  } else if (e == "spectra") {
    j["arch"] = exp::to_json(c.spectra.arch);
    j["data"] = exp::to_json(c.spectra.data);
    j["training"] = json{{"point", exp::to_string(c.spectra.point)}};
  } else if (e == "landscape") {
    const auto& l = c.landscape;
    j["arch"] = exp::to_json(l.arch);
    j["data"] = exp::to_json(l.data);
    j["solver"] = exp::to_json(l.solver);
    j["training"] = json{{"point", exp::to_string(l.point)},
                         {"surface", l.surface == exp::Surface::energy ? "energy" : "loss"},
                         {"resolution", l.resolution},
                         {"half_range", l.half_range}};
  } else if (e == "chain-analysis") {
    const auto& ch = c.chain;
    j["training"] = json{{"instances", ch.instances},
                         {"min_hidden", ch.min_hidden},
                         {"max_hidden", ch.max_hidden},
                         {"minima_instances", ch.minima_instances},
                         {"minima_max_hidden", ch.minima_max_hidden}};
  }
  return j;
}

json run(const RunConfig& c) {
  Outputs o;
  o.stem = c.out / (c.experiment + "_" + std::to_string(c.seed));
  json summary;
  const std::string& e = c.experiment;
  if (e == "validate-energy") summary = run_validate_energy(c, o);
  else if (e == "escape") summary = run_escape(c, o);
  else if (e == "matcomp") summary = run_matcomp(c, o);
  else if (e == "spectra") summary = run_spectra(c, o);
  else if (e == "landscape") summary = run_landscape(c, o);
  else summary = run_chain(c, o);

  json doc{{"experiment", e}, {"seed", c.seed}, {"config", echo(c)}, {"summary", summary}};
  // The summary goes last, so its presence means the run finished.
  o.text(".json", doc.dump(2) + "\n");
  for (const auto& w : o.written) std::cout << "wrote " << w << '\n';
  return doc;
}

int parse_and_dispatch(int argc, const char* const* argv) {
  CLI::App app{"Predictive-coding saddle experiments", "pcsaddle"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "./runs";
  std::uint64_t seed = 0;
  int steps = 0;
  double eta = 0.0;
  double sigma = 0.0;
  std::vector<CLI::App*> subs;
  for (const auto& name : kExperiments) {
    CLI::App* s = app.add_subcommand(name, "run the " + name + " experiment");
    s->add_option("--config", config_path, "JSON config file")->required();
    s->add_option("--seed", seed, "run seed");
    s->add_option("--out", out_dir, "output directory")->capture_default_str();
    s->add_option("--steps", steps, "training step budget");
    s->add_option("--eta", eta, "learning rate");
    s->add_option("--sigma", sigma, "initialisation scale");
    subs.push_back(s);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  CLI::App* sub = *std::find_if(subs.begin(), subs.end(), [](CLI::App* s) { return s->parsed(); });
  const std::string experiment = sub->get_name();

  Overrides ov;
  if (sub->count("--seed")) ov.seed = seed;
  if (sub->count("--steps")) ov.steps = steps;
  if (sub->count("--eta")) ov.eta = eta;
  if (sub->count("--sigma")) ov.sigma = sigma;

  RunConfig cfg;
  try {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("--config", "cannot read '" + config_path + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("--config", std::string("malformed JSON: ") + e.what());
    }
    cfg = parse_config(experiment, j, ov);
    if (sub->count("--out") || !j.contains("out")) cfg.out = out_dir;
  } catch (const ConfigError& e) {
    std::cerr << "pcsaddle: invalid config: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    run(cfg);
  } catch (const std::exception& e) {
    std::cerr << "pcsaddle: " << experiment << " failed: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int parse_and_dispatch(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"pcsaddle"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return parse_and_dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace pcs::cli
