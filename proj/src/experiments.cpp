#include "pcs/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include "pcs/dln.hpp"
#include "pcs/rng.hpp"

namespace pcs::exp {

namespace {

// Stream ids keep the draws of different concerns independent of each other.
constexpr std::uint64_t kBatchStream = 1001;
constexpr std::uint64_t kChainStream = 2001;

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(int v) { return v < 0 ? "" : std::to_string(v); }

Params initial_point(const ArchSpec& arch, InitKind kind, std::uint64_t seed) {
  return kind == InitKind::origin ? landscape::make_origin(arch) : landscape::make_zero_rank_saddle(arch, seed);
}

void require_linear(const ArchSpec& arch, const char* who) {
  if (!arch.is_linear()) throw ContractError(std::string(who) + ": requires a linear architecture");
}

double relative_gap(double numeric, double theory) {
  return std::abs(numeric - theory) / std::max(std::abs(theory), 1e-12);
}

// Energy at the exact inference equilibrium; the numerical stand-in for F*.
landscape::Objective equilibrium_energy_objective(const ArchSpec& arch, const Batch& batch,
                                                  const pc::SolverConfig& solver) {
  return [arch, batch, solver](const Vector& theta) {
    const Params p = unflatten(arch, theta);
    return pc::energy(p, arch, pc::infer(p, arch, batch, solver));
  };
}

landscape::Objective loss_objective(const ArchSpec& arch, const Batch& batch) {
  return [arch, batch](const Vector& theta) { return mse_loss(unflatten(arch, theta), arch, batch); };
}

}  // namespace

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out << "step,train_loss,energy,energy_theory,rel_gap,grad_norm,product_rank,inference_steps\n";
  for (const auto& r : steps) {
    out << r.step << ',' << fmt(r.train_loss) << ',' << fmt(r.energy) << ',' << fmt(r.energy_theory) << ','
        << fmt(r.rel_gap) << ',' << fmt(r.grad_norm) << ',' << fmt(r.product_rank) << ',' << fmt(r.inference_steps)
        << '\n';
  }
  return out.str();
}

std::string to_string(Trainer t) { return t == Trainer::bp ? "bp" : "pc"; }
std::string to_string(InitKind k) { return k == InitKind::origin ? "origin" : "zero_rank"; }

Trainer trainer_from_string(const std::string& s) {
  if (s == "bp") return Trainer::bp;
  if (s == "pc") return Trainer::pc;
  throw std::invalid_argument("unknown trainer '" + s + "'");
}

InitKind init_kind_from_string(const std::string& s) {
  if (s == "origin") return InitKind::origin;
  if (s == "zero_rank") return InitKind::zero_rank;
  throw std::invalid_argument("unknown init kind '" + s + "'");
}

std::optional<int> escape_step(const TrainLog& log, double plateau_loss, double factor) {
  if (!(factor > 0.0 && factor <= 1.0)) throw ContractError("escape_step: factor must be in (0, 1]");
  for (const auto& r : log.steps) {
    if (r.train_loss <= factor * plateau_loss) return r.step;
  }
  return std::nullopt;
}

TheoryResult run_theory_validation(const TheoryConfig& cfg) {
  cfg.arch.validate();
  require_linear(cfg.arch, "run_theory_validation");
  if (cfg.steps < 0) throw ContractError("run_theory_validation: steps must be >= 0");
  const Batch batch = data::generate(cfg.data);
  Params params = init_fan_in(cfg.arch, cfg.init_gain, cfg.seed);

  TheoryResult res;
  res.log.experiment = "validate-energy";
  res.log.trainer = "pc";
  res.log.seed = cfg.seed;
  for (int t = 0;; ++t) {
    pc::InferenceStats stats;
    const pc::Activities acts = pc::infer(params, cfg.arch, batch, cfg.solver, &stats);
    const Params grad = pc::pc_weight_gradient(params, cfg.arch, acts);
    StepRecord r;
    r.step = t;
    r.train_loss = mse_loss(params, cfg.arch, batch);
    r.energy = pc::energy(params, cfg.arch, acts);
    r.energy_theory = dln::equilibrated_energy(params, batch);
    r.rel_gap = relative_gap(r.energy, r.energy_theory);
    r.grad_norm = l2_norm(grad);
    r.inference_steps = stats.steps;
    res.max_rel_gap = std::max(res.max_rel_gap, r.rel_gap);
    res.max_final_grad = std::max(res.max_final_grad, stats.final_grad);
    res.log.steps.push_back(r);
    if (t == cfg.steps) break;
    params = sgd_step(params, grad, cfg.eta);
  }
  return res;
}

EscapeResult run_escape(const EscapeConfig& cfg) {
  cfg.arch.validate();
  if (!(cfg.sigma > 0.0)) throw ContractError("run_escape: sigma must be > 0");
  if (!(cfg.eta >= 0.0)) throw ContractError("run_escape: eta must be >= 0");
  const Batch full = data::generate(cfg.data);
  const Params center = initial_point(cfg.arch, cfg.init, cfg.seed);
  Params params = init_near_point(cfg.arch, center, cfg.sigma, cfg.seed);
  Rng batches(cfg.seed, kBatchStream);
  const int bs = std::min(cfg.batch_size, full.size());

  EscapeResult res;
  res.log.experiment = "escape";
  res.log.trainer = to_string(cfg.trainer);
  res.log.seed = cfg.seed;
  res.report.criterion = "first step with train_loss <= " + fmt(cfg.escape_factor) + " * loss at step 0";
  res.report.min_grad_norm = std::numeric_limits<double>::infinity();

  for (int t = 0; t < cfg.max_steps; ++t) {
    const Batch mb = bs == full.size() ? full : data::sample_batch(full, bs, batches);
    StepRecord r;
    r.step = t;
    r.train_loss = mse_loss(params, cfg.arch, mb);
    if (cfg.trainer == Trainer::bp) {
      const Params g = bp_gradient(params, cfg.arch, mb);
      r.grad_norm = l2_norm(g);
      params = sgd_step(params, g, cfg.eta);
    } else {
      const pc::TrainStep s = pc::pc_train_step(params, cfg.arch, mb, cfg.solver, cfg.eta);
      r.energy = s.energy_at_equilibrium;
      r.grad_norm = s.grad_norm;
      r.inference_steps = s.inference_steps;
      params = s.params;
    }
    if (!std::isfinite(r.train_loss)) throw pc::DivergenceError("run_escape: loss became non-finite at step " + std::to_string(t));
    if (t == 0) res.report.plateau_loss = r.train_loss;
    const double plateau = res.report.plateau_loss;
    res.report.max_rel_loss_change =
        std::max(res.report.max_rel_loss_change, std::abs(r.train_loss - plateau) / std::max(plateau, 1e-300));
    res.report.max_grad_norm = std::max(res.report.max_grad_norm, r.grad_norm);
    res.report.min_grad_norm = std::min(res.report.min_grad_norm, r.grad_norm);
    res.log.steps.push_back(r);
    if (cfg.stop_factor > 0.0 && r.train_loss <= cfg.stop_factor * plateau) break;
  }
  if (res.log.steps.empty()) res.report.min_grad_norm = 0.0;
  res.report.escape_step = escape_step(res.log, res.report.plateau_loss, cfg.escape_factor);
  return res;
}

MatrixCompletionResult run_matrix_completion(const MatrixCompletionConfig& cfg) {
  if (cfg.width < 1 || cfg.hidden < 1) throw ContractError("run_matrix_completion: width and hidden must be >= 1");
  if (cfg.plateau_window < 2 || cfg.checkpoint_every < 1) throw ContractError("run_matrix_completion: bad window");
  data::DataConfig dcfg = cfg.data;
  dcfg.kind = data::DataKind::lowrank_matrix;
  const data::LowRankProblem problem = data::gen_lowrank_matrix(dcfg);
  const Batch batch = problem.batch();
  const double ref_scale = singular_values(problem.target)(0);

  ArchSpec arch;
  arch.widths.push_back(static_cast<int>(problem.target.cols()));
  for (int h = 0; h < cfg.hidden; ++h) arch.widths.push_back(cfg.width);
  arch.widths.push_back(static_cast<int>(problem.target.rows()));

  auto bp_record = [&](const Params& p, int t, Params* grad) {
    const Matrix map = forward(p, arch, batch.x);  // x = I, so this is W_{L:1}
    StepRecord r;
    r.step = t;
    r.train_loss = 0.5 * (batch.y - map).cwiseProduct(batch.mask).squaredNorm() / batch.size();
    r.product_rank = numerical_rank(map, cfg.rank_tol, ref_scale);
    *grad = bp_gradient(p, arch, batch);
    r.grad_norm = l2_norm(*grad);
    return r;
  };

  MatrixCompletionResult res;
  res.bp_log.experiment = "matcomp";
  res.bp_log.trainer = "bp";
  res.bp_log.seed = cfg.seed;

  const Params init = init_near_point(arch, Params::zeros(arch), cfg.sigma, cfg.seed);
  std::map<int, Params> checkpoints;
  Params params = init;
  for (int t = 0; t <= cfg.bp_max_steps; ++t) {
    if (t % cfg.checkpoint_every == 0) checkpoints.emplace(t, params);
    Params grad;
    const StepRecord r = bp_record(params, t, &grad);
    res.bp_log.steps.push_back(r);
    if (!std::isfinite(r.train_loss)) throw pc::DivergenceError("matrix completion: BP loss became non-finite");
    if (r.train_loss < cfg.bp_stop_loss || t == cfg.bp_max_steps) break;
    params = sgd_step(params, grad, cfg.eta);
  }

  const auto& log = res.bp_log.steps;
  int max_rank = -1;
  for (const auto& r : log) {
    if (r.product_rank < max_rank) res.rank_monotone = false;
    if (res.rank_sequence.empty() || res.rank_sequence.back() != r.product_rank) {
      res.rank_sequence.push_back(r.product_rank);
    }
    max_rank = std::max(max_rank, r.product_rank);
  }

  // Plateau = run of ≥ window steps with stable rank and relative loss change
  // below the threshold; keep the longest run for each rank.
  std::map<int, Plateau> best;
  std::size_t run_start = 0;
  auto close_run = [&](std::size_t start, std::size_t end) {
    if (end < start || static_cast<int>(end - start + 1) < cfg.plateau_window) return;
    const int rank = log[start].product_rank;
    auto it = best.find(rank);
    if (it != best.end() && it->second.end - it->second.start >= static_cast<int>(end - start)) return;
    Plateau p;
    p.rank = rank;
    p.start = log[start].step;
    p.end = log[end].step;
    best[rank] = p;
  };
  bool in_run = false;
  for (std::size_t k = 1; k < log.size(); ++k) {
    const bool flat = log[k].product_rank == log[k - 1].product_rank &&
                      std::abs(log[k].train_loss - log[k - 1].train_loss) <
                          cfg.plateau_rel_change * std::abs(log[k - 1].train_loss);
    if (flat && !in_run) {
      run_start = k - 1;
      in_run = true;
    } else if (!flat && in_run) {
      close_run(run_start, k - 1);
      in_run = false;
    }
  }
  if (in_run) close_run(run_start, log.size() - 1);

  for (int rank : cfg.pc_ranks) {
    auto it = best.find(rank);
    if (it == best.end()) continue;
    Plateau p = it->second;
    p.snapshot_step = (p.start + p.end) / 2;
    const StepRecord& snap = log[static_cast<std::size_t>(p.snapshot_step)];
    p.snapshot_loss = snap.train_loss;
    p.bp_grad_at_snapshot = snap.grad_norm;
    for (std::size_t k = static_cast<std::size_t>(p.snapshot_step) + 1; k < log.size(); ++k) {
      if (log[k].train_loss <= 0.5 * p.snapshot_loss) {
        p.bp_steps_to_half = log[k].step - p.snapshot_step;
        break;
      }
    }

    // Deterministic replay from the nearest earlier checkpoint.
    auto cp = std::prev(checkpoints.upper_bound(p.snapshot_step));
    Params start = cp->second;
    for (int t = cp->first; t < p.snapshot_step; ++t) start = sgd_step(start, bp_gradient(start, arch, batch), cfg.eta);

    pc::SolverConfig solver;
    solver.mode = pc::SolverMode::exact_linear;
    TrainLog pc_log;
    pc_log.experiment = "matcomp";
    pc_log.trainer = "pc_rank" + std::to_string(rank);
    pc_log.seed = cfg.seed;
    Params q = start;
    p.pc_min_grad = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= cfg.pc_max_steps; ++k) {
      const Matrix map = forward(q, arch, batch.x);
      StepRecord r;
      r.step = k;
      r.train_loss = 0.5 * (batch.y - map).cwiseProduct(batch.mask).squaredNorm() / batch.size();
      r.product_rank = numerical_rank(map, cfg.rank_tol, ref_scale);
      const pc::TrainStep s = pc::pc_train_step(q, arch, batch, solver, cfg.eta);
      r.energy = s.energy_at_equilibrium;
      r.grad_norm = s.grad_norm;
      r.inference_steps = 0;
      pc_log.steps.push_back(r);
      if (!std::isfinite(r.train_loss)) throw pc::DivergenceError("matrix completion: PC loss became non-finite");
      if (k > 0 && r.train_loss <= 0.5 * p.snapshot_loss) {
        p.pc_steps_to_half = k;
        break;
      }
      p.pc_min_grad = std::min(p.pc_min_grad, r.grad_norm);
      q = s.params;
    }
    res.plateaus.push_back(p);
    res.pc_logs.push_back(std::move(pc_log));
  }
  return res;
}

SpectraResult run_spectra(const SpectraConfig& cfg) {
  cfg.arch.validate();
  require_linear(cfg.arch, "run_spectra");
  const Batch batch = data::generate(cfg.data);
  const dln::Covariances cov = dln::covariances(batch);
  const Params point = initial_point(cfg.arch, cfg.point, cfg.seed);
  const Vector theta = flatten(point);

  Matrix theory_energy;
  Matrix theory_loss;
  if (cfg.point == InitKind::origin) {
    theory_energy = dln::origin_hessian_energy(cov, cfg.arch);
    theory_loss = dln::origin_hessian_loss(cov, cfg.arch);
  } else {
    theory_energy = dln::equilibrated_energy_hessian_ad(point, batch);
    theory_loss = dln::loss_hessian(point, cov, cfg.arch);
  }

  pc::SolverConfig exact;
  exact.mode = pc::SolverMode::exact_linear;
  const ArchSpec arch = cfg.arch;
  const auto f_energy = equilibrium_energy_objective(arch, batch, exact);
  const auto f_loss = loss_objective(arch, batch);
  const Matrix num_energy = landscape::numerical_hessian(f_energy, theta);
  const Matrix num_loss = landscape::numerical_hessian(f_loss, theta);

  SpectraResult res;
  res.theory_eigs_energy = sym_eig(theory_energy).eigenvalues;
  res.theory_eigs_loss = sym_eig(theory_loss).eigenvalues;
  res.numeric_eigs_energy = sym_eig(num_energy).eigenvalues;
  res.numeric_eigs_loss = sym_eig(num_loss).eigenvalues;
  res.max_entry_gap_energy = (theory_energy - num_energy).cwiseAbs().maxCoeff();
  res.max_entry_gap_loss = (theory_loss - num_loss).cwiseAbs().maxCoeff();

  res.energy_report = landscape::classify_point(
      f_energy, [&](const Vector& t) { return flatten(dln::equilibrated_energy_gradient(unflatten(arch, t), batch)); },
      theta);
  res.loss_report = landscape::classify_point(
      f_loss, [&](const Vector& t) { return flatten(bp_gradient(unflatten(arch, t), arch, batch)); }, theta);
  return res;
}

landscape::LandscapeGrid run_landscape(const LandscapeConfig& cfg) {
  cfg.arch.validate();
  const Batch batch = data::generate(cfg.data);
  const Vector center = flatten(initial_point(cfg.arch, cfg.point, cfg.seed));
  const auto f = cfg.surface == Surface::loss ? loss_objective(cfg.arch, batch)
                                              : equilibrium_energy_objective(cfg.arch, batch, cfg.solver);
  return landscape::landscape_grid(f, center, cfg.resolution, cfg.half_range);
}

ChainAnalysisResult run_chain_analysis(const ChainAnalysisConfig& cfg) {
  if (cfg.min_hidden < 1 || cfg.max_hidden < cfg.min_hidden || cfg.minima_max_hidden < 1) {
    throw ContractError("run_chain_analysis: bad hidden-layer range");
  }
  ChainAnalysisResult res;
  Rng rng(cfg.seed, kChainStream);
  auto random_batch = [&](int n) {
    Batch b;
    b.x = Matrix(1, n);
    b.y = Matrix(1, n);
    for (int i = 0; i < n; ++i) {
      b.x(0, i) = rng.normal(1.0, 0.5);
      b.y(0, i) = rng.normal();
    }
    return b;
  };
  auto to_params = [](const std::vector<double>& w) {
    Params p = Params::zeros(ArchSpec::chain(static_cast<int>(w.size()) - 1));
    for (std::size_t l = 0; l < w.size(); ++l) p.weights[l](0, 0) = w[l];
    return p;
  };

  for (int k = 0; k < cfg.instances; ++k) {
    const int hidden = cfg.min_hidden + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_hidden - cfg.min_hidden + 1)));
    std::vector<double> w(static_cast<std::size_t>(hidden + 1));
    for (double& v : w) v = rng.normal(0.0, 0.8);
    const Batch b = random_batch(8);
    const ArchSpec arch = ArchSpec::chain(hidden);
    const Params p = to_params(w);
    const dln::ChainQuantities q = dln::chain_quantities(w, b);
    res.max_gap_loss_hessian = std::max(
        res.max_gap_loss_hessian, (q.loss_hessian - dln::loss_hessian(p, dln::covariances(b), arch)).cwiseAbs().maxCoeff());
    res.max_gap_energy_hessian = std::max(res.max_gap_energy_hessian,
                                          (q.energy_hessian - dln::equilibrated_energy_hessian_ad(p, b)).cwiseAbs().maxCoeff());
    res.max_gap_energy = std::max(res.max_gap_energy, std::abs(q.energy - dln::equilibrated_energy(p, b)));
  }

  for (int k = 0; k < cfg.minima_instances; ++k) {
    const int hidden = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.minima_max_hidden)));
    std::vector<double> w(static_cast<std::size_t>(hidden + 1));
    double prod = 1.0;
    for (double& v : w) {
      v = rng.normal(0.0, 0.8);
      prod *= v;
    }
    Batch b = random_batch(8);
    b.y = prod * b.x;
    const dln::ChainMinima m = dln::chain_minima_relation(w, b);
    res.max_gap_minima = std::max(res.max_gap_minima, (m.h_energy - m.h_loss / m.s).cwiseAbs().maxCoeff());
  }

  Batch unit;
  unit.x = Matrix::Constant(1, 1, 1.0);
  unit.y = Matrix::Constant(1, 1, -1.0);
  for (int hidden = 1; hidden <= cfg.max_hidden; ++hidden) {
    const std::vector<double> zero(static_cast<std::size_t>(hidden + 1), 0.0);
    res.origin_spectra.push_back(sym_eig(dln::chain_quantities(zero, unit).energy_hessian).eigenvalues);
  }
  return res;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

json to_json(const ArchSpec& arch) {
  return json{{"widths", arch.widths}, {"activation", std::string(to_string(arch.activation))}, {"bias", arch.bias}};
}

json to_json(const data::DataConfig& c) {
  json j{{"kind", data::to_string(c.kind)}, {"seed", c.seed}};
  switch (c.kind) {
    case data::DataKind::gauss_regression:
      j.update(json{{"d_x", c.d_x}, {"d_y", c.d_y}, {"n_samples", c.n_samples}, {"mean", c.mean},
                    {"stddev", c.stddev}, {"flip_dims", c.flip_dims}});
      break;
    case data::DataKind::blob_classification:
      j.update(json{{"d_x", c.d_x}, {"d_y", c.d_y}, {"n_samples", c.n_samples}, {"n_classes", c.n_classes},
                    {"class_scale", c.class_scale}, {"noise", c.noise}});
      break;
    case data::DataKind::lowrank_matrix:
      j.update(json{{"rows", c.rows}, {"cols", c.cols}, {"rank", c.rank}, {"mask_fraction", c.mask_fraction}});
      break;
  }
  return j;
}

json to_json(const pc::SolverConfig& c) {
  return json{{"mode", pc::to_string(c.mode)}, {"dt", c.dt},          {"max_steps", c.max_steps},
              {"abs_tol", c.abs_tol},         {"rel_tol", c.rel_tol}, {"grad_tol", c.grad_tol},
              {"t_max", c.t_max}};
}

json to_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

json to_json(const EscapeReport& r) {
  return json{{"plateau_loss", r.plateau_loss},
              {"escape_step", r.escape_step ? json(*r.escape_step) : json(nullptr)},
              {"criterion", r.criterion},
              {"max_rel_loss_change", r.max_rel_loss_change},
              {"max_grad_norm", r.max_grad_norm},
              {"min_grad_norm", r.min_grad_norm}};
}

json to_json(const Plateau& p) {
  auto opt = [](const std::optional<int>& v) { return v ? json(*v) : json(nullptr); };
  return json{{"rank", p.rank},
              {"start", p.start},
              {"end", p.end},
              {"snapshot_step", p.snapshot_step},
              {"snapshot_loss", p.snapshot_loss},
              {"bp_steps_to_half", opt(p.bp_steps_to_half)},
              {"pc_steps_to_half", opt(p.pc_steps_to_half)},
              {"bp_grad_at_snapshot", p.bp_grad_at_snapshot},
              {"pc_min_grad", p.pc_min_grad}};
}

json to_json(const landscape::SaddleReport& r) {
  return json{{"value", r.value},
              {"grad_norm", r.grad_norm},
              {"grad_threshold", r.grad_threshold},
              {"lambda_min", r.lambda_min},
              {"lambda_max", r.lambda_max},
              {"strict_tol", r.strict_tol},
              {"classification", std::string(landscape::to_string(r.classification))},
              {"eigenvalues", to_json(r.eigenvalues)}};
}

std::string logs_to_csv(const std::vector<TrainLog>& logs) {
  std::ostringstream out;
  out << "run,step,train_loss,energy,energy_theory,rel_gap,grad_norm,product_rank,inference_steps\n";
  for (const auto& log : logs) {
    const std::string body = log.to_csv();
    std::istringstream in(body);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) out << log.trainer << ',' << line << '\n';
  }
  return out.str();
}

std::string grid_to_csv(const landscape::LandscapeGrid& g) {
  std::ostringstream out;
  out << "alpha,beta,value\n";
  for (Eigen::Index i = 0; i < g.alphas.size(); ++i)
    for (Eigen::Index j = 0; j < g.betas.size(); ++j)
      out << fmt(g.alphas(i)) << ',' << fmt(g.betas(j)) << ',' << fmt(g.values(i, j)) << '\n';
  return out.str();
}

}  // namespace pcs::exp
