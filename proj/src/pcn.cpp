#include "pcs/pcn.hpp"

#include <algorithm>
#include <cmath>

namespace pcs::pc {

namespace {

constexpr double kDivergenceEnergy = 1e12;
constexpr double kMinStep = 1e-12;
constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 5.0;
// PI exponents for an order-1 error estimate (k = 2).
constexpr double kAlpha = 0.7 / 2.0;
constexpr double kBeta = 0.4 / 2.0;

Matrix presynaptic(const ArchSpec& arch, const Activities& acts, int layer) {
  // Input to layer ℓ: raw x for ℓ = 1, φ(z_{ℓ−1}) otherwise.
  return layer == 1 ? acts.z[0] : activate(arch.activation, acts.z[static_cast<std::size_t>(layer - 1)]);
}

void check_activities(const Params& params, const ArchSpec& arch, const Activities& acts) {
  check_shapes(params, arch);
  if (acts.num_layers() != arch.num_layers()) throw ShapeError("activities: layer count differs from arch");
  const Eigen::Index n = acts.z.front().cols();
  for (int l = 0; l <= arch.num_layers(); ++l) {
    const Matrix& z = acts.z[static_cast<std::size_t>(l)];
    if (z.rows() != arch.widths[l] || z.cols() != n) {
      throw ShapeError("activities: z_" + std::to_string(l) + " has the wrong shape");
    }
  }
}

// ε_ℓ − φ′(z_ℓ) ⊙ W_{ℓ+1}ᵀ ε_{ℓ+1}, i.e. the gradient of one sample's energy.
std::vector<Matrix> per_sample_gradient(const Params& params, const ArchSpec& arch, const Activities& acts,
                                        const std::vector<Matrix>& eps) {
  const int L = arch.num_layers();
  std::vector<Matrix> g(static_cast<std::size_t>(L + 1));
  for (int l = 1; l < L; ++l) {
    Matrix back = params.w(l + 1).transpose() * eps[static_cast<std::size_t>(l + 1)];
    if (!arch.is_linear()) {
      back = back.cwiseProduct(activate_derivative(arch.activation, acts.z[static_cast<std::size_t>(l)]));
    }
    g[static_cast<std::size_t>(l)] = eps[static_cast<std::size_t>(l)] - back;
  }
  return g;
}

double energy_from_errors(const std::vector<Matrix>& eps, int n) {
  double total = 0.0;
  for (std::size_t l = 1; l < eps.size(); ++l) total += eps[l].squaredNorm();
  return 0.5 * total / n;
}

double inf_norm(const std::vector<Matrix>& g) {
  double m = 0.0;
  for (std::size_t l = 1; l + 1 < g.size(); ++l) {
    if (g[l].size() > 0) m = std::max(m, g[l].cwiseAbs().maxCoeff());
  }
  return m;
}

void check_divergence(double f, int step) {
  if (!std::isfinite(f) || f > kDivergenceEnergy) {
    throw DivergenceError("inference diverged at step " + std::to_string(step) + " (energy " + std::to_string(f) + ")");
  }
}

}  // namespace

std::string to_string(SolverMode m) {
  switch (m) {
    case SolverMode::euler: return "euler";
    case SolverMode::heun_adaptive: return "heun_adaptive";
    case SolverMode::exact_linear: return "exact_linear";
  }
  return "euler";
}

SolverMode solver_mode_from_string(const std::string& name) {
  if (name == "euler") return SolverMode::euler;
  if (name == "heun_adaptive") return SolverMode::heun_adaptive;
  if (name == "exact_linear") return SolverMode::exact_linear;
  throw std::invalid_argument("unknown solver mode '" + name + "'");
}

void SolverConfig::validate() const {
  if (!(dt > 0.0)) throw ContractError("solver: dt must be > 0");
  if (max_steps < 0) throw ContractError("solver: max_steps must be >= 0");
  if (!(abs_tol > 0.0) || !(rel_tol > 0.0) || !(grad_tol > 0.0)) {
    throw ContractError("solver: tolerances must be > 0");
  }
  if (!(t_max > 0.0)) throw ContractError("solver: t_max must be > 0");
}

Activities feedforward_activities(const Params& params, const ArchSpec& arch, const Batch& batch) {
  batch.validate();
  if (batch.y.rows() != arch.out_dim()) throw ShapeError("batch: output dimension differs from arch");
  Activities acts;
  acts.z = feedforward(params, arch, batch.x);
  acts.z.back() = batch.y;
  acts.mask = batch.mask;
  return acts;
}

std::vector<Matrix> prediction_errors(const Params& params, const ArchSpec& arch, const Activities& acts) {
  check_activities(params, arch, acts);
  const int L = arch.num_layers();
  std::vector<Matrix> eps(static_cast<std::size_t>(L + 1));
  for (int l = 1; l <= L; ++l) {
    Matrix mu = params.w(l) * presynaptic(arch, acts, l);
    if (arch.bias) mu.colwise() += params.biases[static_cast<std::size_t>(l - 1)];
    eps[static_cast<std::size_t>(l)] = acts.z[static_cast<std::size_t>(l)] - mu;
  }
  if (acts.mask.size() != 0) eps.back() = eps.back().cwiseProduct(acts.mask);
  return eps;
}

double energy(const Params& params, const ArchSpec& arch, const Activities& acts) {
  return energy_from_errors(prediction_errors(params, arch, acts), acts.size());
}

std::vector<Matrix> activity_gradient(const Params& params, const ArchSpec& arch, const Activities& acts) {
  auto g = per_sample_gradient(params, arch, acts, prediction_errors(params, arch, acts));
  const double inv_n = 1.0 / acts.size();
  for (auto& gl : g) gl *= inv_n;
  return g;
}

Activities infer_euler(const Params& params, const ArchSpec& arch, const Batch& batch, const SolverConfig& cfg,
                       InferenceStats* stats) {
  cfg.validate();
  Activities acts = feedforward_activities(params, arch, batch);
  const int L = arch.num_layers();
  int step = 0;
  double gnorm = 0.0;
  for (;; ++step) {
    const auto eps = prediction_errors(params, arch, acts);
    check_divergence(energy_from_errors(eps, acts.size()), step);
    const auto g = per_sample_gradient(params, arch, acts, eps);
    gnorm = inf_norm(g);
    if (step >= cfg.max_steps || gnorm < cfg.grad_tol) break;
    for (int l = 1; l < L; ++l) acts.z[static_cast<std::size_t>(l)] -= cfg.dt * g[static_cast<std::size_t>(l)];
  }
  if (stats != nullptr) *stats = InferenceStats{step, 0, step * cfg.dt, gnorm};
  return acts;
}

Activities infer_adaptive(const Params& params, const ArchSpec& arch, const Batch& batch, const SolverConfig& cfg,
                          InferenceStats* stats) {
  cfg.validate();
  Activities acts = feedforward_activities(params, arch, batch);
  const int L = arch.num_layers();
  const std::size_t last = static_cast<std::size_t>(L);

  auto gradient = [&](const Activities& a, double* f) {
    const auto eps = prediction_errors(params, arch, a);
    if (f != nullptr) *f = energy_from_errors(eps, a.size());
    return per_sample_gradient(params, arch, a, eps);
  };

  double t = 0.0;
  double h = cfg.dt;
  double prev_err = 1.0;
  int accepted = 0;
  int rejected = 0;
  double f = 0.0;
  auto k1 = gradient(acts, &f);
  double gnorm = inf_norm(k1);
  const double t_end = cfg.t_max * (1.0 - 1e-12);

  while (t < t_end && gnorm >= cfg.grad_tol) {
    check_divergence(f, accepted);
    h = std::min(h, cfg.t_max - t);
    Activities trial = acts;
    for (std::size_t l = 1; l < last; ++l) trial.z[l] -= h * k1[l];
    const auto k2 = gradient(trial, nullptr);

    double err = 0.0;
    Activities next = acts;
    for (std::size_t l = 1; l < last; ++l) {
      next.z[l] -= 0.5 * h * (k1[l] + k2[l]);
      const Eigen::ArrayXXd e = (0.5 * h * (k1[l] - k2[l])).array().abs();
      const Eigen::ArrayXXd scale = cfg.abs_tol + cfg.rel_tol * acts.z[l].array().abs().max(next.z[l].array().abs());
      if (e.size() > 0) err = std::max(err, (e / scale).maxCoeff());
    }

    if (err <= 1.0) {
      t += h;
      acts = std::move(next);
      ++accepted;
      k1 = gradient(acts, &f);
      gnorm = inf_norm(k1);
      const double e = std::max(err, 1e-10);
      const double factor = kSafety * std::pow(e, -kAlpha) * std::pow(prev_err, kBeta);
      h *= std::clamp(factor, kMinFactor, kMaxFactor);
      prev_err = e;
    } else {
      ++rejected;
      h *= std::clamp(kSafety * std::pow(err, -kAlpha), kMinFactor, 1.0);
      if (h < kMinStep) {
        throw StiffnessError("adaptive inference: step size fell below 1e-12 at t = " + std::to_string(t));
      }
    }
  }
  check_divergence(f, accepted);
  if (stats != nullptr) *stats = InferenceStats{accepted, rejected, t, gnorm};
  return acts;
}

Activities infer_exact_linear(const Params& params, const ArchSpec& arch, const Batch& batch, InferenceStats* stats) {
  if (!arch.is_linear()) throw ContractError("infer_exact_linear: requires a linear architecture");
  Activities acts = feedforward_activities(params, arch, batch);
  const int L = arch.num_layers();
  const int hidden = L - 1;
  if (hidden >= 1) {
    const int n = batch.size();
    // Unknowns z_1…z_H. Row ℓ of the stationarity system:
    //   (I + W_{ℓ+1}ᵀ D W_{ℓ+1}) z_ℓ − W_ℓ z_{ℓ−1} − W_{ℓ+1}ᵀ D z_{ℓ+1} = b_ℓ − W_{ℓ+1}ᵀ D b_{ℓ+1}
    // with D the output mask for ℓ + 1 = L and the identity otherwise.
    auto bias = [&](int l) -> Vector {
      return arch.bias ? params.biases[static_cast<std::size_t>(l - 1)] : Vector::Zero(arch.widths[l]);
    };
    std::vector<Matrix> rhs(static_cast<std::size_t>(hidden + 1));
    for (int l = 1; l <= hidden; ++l) {
      Matrix r = Matrix::Zero(arch.widths[l], n);
      r.colwise() += bias(l);
      if (l + 1 < L) r.colwise() -= params.w(l + 1).transpose() * bias(l + 1);
      rhs[static_cast<std::size_t>(l)] = r;
    }
    rhs[1] += params.w(1) * batch.x;
    Matrix top = batch.y;
    top.colwise() -= bias(L);
    if (batch.masked()) top = top.cwiseProduct(batch.mask);
    rhs[static_cast<std::size_t>(hidden)] += params.w(L).transpose() * top;

    // Block-Cholesky forward sweep over the layers shared by all samples.
    // Off-diagonal block (ℓ, ℓ+1) is −W_{ℓ+1}ᵀ; its transpose sits below.
    std::vector<Eigen::LLT<Eigen::MatrixXd>> fac(static_cast<std::size_t>(hidden + 1));
    std::vector<Matrix> r_tilde = rhs;
    Eigen::MatrixXd carry;  // C_{ℓ−1}ᵀ S_{ℓ−1}⁻¹ C_{ℓ−1}
    for (int l = 1; l < hidden; ++l) {
      const Eigen::MatrixXd wn = params.w(l + 1);
      Eigen::MatrixXd s = Eigen::MatrixXd::Identity(arch.widths[l], arch.widths[l]) + wn.transpose() * wn;
      if (l > 1) s -= carry;
      fac[static_cast<std::size_t>(l)].compute(s);
      if (fac[static_cast<std::size_t>(l)].info() != Eigen::Success) throw SingularError("exact inference: Schur block");
      // C_ℓ = −W_{ℓ+1}ᵀ, so C_ℓᵀ S_ℓ⁻¹ C_ℓ = W_{ℓ+1} S_ℓ⁻¹ W_{ℓ+1}ᵀ.
      carry = wn * fac[static_cast<std::size_t>(l)].solve(Eigen::MatrixXd(wn.transpose()));
      r_tilde[static_cast<std::size_t>(l + 1)] +=
          wn * fac[static_cast<std::size_t>(l)].solve(Eigen::MatrixXd(r_tilde[static_cast<std::size_t>(l)]));
    }

    // Last hidden block: I + W_Lᵀ D W_L minus the carried Schur term. Per
    // column when a mask makes D sample-dependent.
    const Eigen::MatrixXd wl = params.w(L);
    const int nh = arch.widths[hidden];
    const Eigen::MatrixXd base = Eigen::MatrixXd::Identity(nh, nh) - (hidden > 1 ? carry : Eigen::MatrixXd::Zero(nh, nh));
    Matrix& zh = acts.z[static_cast<std::size_t>(hidden)];
    const Matrix& rh = r_tilde[static_cast<std::size_t>(hidden)];
    if (!batch.masked()) {
      Eigen::LLT<Eigen::MatrixXd> llt(base + wl.transpose() * wl);
      if (llt.info() != Eigen::Success) throw SingularError("exact inference: last block");
      zh = llt.solve(Eigen::MatrixXd(rh));
    } else {
      for (int c = 0; c < n; ++c) {
        const Eigen::VectorXd d = batch.mask.col(c);
        Eigen::LLT<Eigen::MatrixXd> llt(base + wl.transpose() * d.asDiagonal() * wl);
        if (llt.info() != Eigen::Success) throw SingularError("exact inference: last block");
        zh.col(c) = llt.solve(Eigen::VectorXd(rh.col(c)));
      }
    }
    // Back substitution: z_ℓ = S_ℓ⁻¹ (r̃_ℓ + W_{ℓ+1}ᵀ z_{ℓ+1}).
    for (int l = hidden - 1; l >= 1; --l) {
      const Matrix rhs_l = r_tilde[static_cast<std::size_t>(l)] +
                           params.w(l + 1).transpose() * acts.z[static_cast<std::size_t>(l + 1)];
      acts.z[static_cast<std::size_t>(l)] = fac[static_cast<std::size_t>(l)].solve(Eigen::MatrixXd(rhs_l));
    }
  }
  if (stats != nullptr) {
    const auto g = per_sample_gradient(params, arch, acts, prediction_errors(params, arch, acts));
    *stats = InferenceStats{0, 0, 0.0, inf_norm(g)};
  }
  return acts;
}

Activities infer(const Params& params, const ArchSpec& arch, const Batch& batch, const SolverConfig& cfg,
                 InferenceStats* stats) {
  switch (cfg.mode) {
    case SolverMode::euler: return infer_euler(params, arch, batch, cfg, stats);
    case SolverMode::heun_adaptive: return infer_adaptive(params, arch, batch, cfg, stats);
    case SolverMode::exact_linear: return infer_exact_linear(params, arch, batch, stats);
  }
  throw std::logic_error("unreachable solver mode");
}

Params pc_weight_gradient(const Params& params, const ArchSpec& arch, const Activities& acts) {
  const auto eps = prediction_errors(params, arch, acts);
  const double inv_n = 1.0 / acts.size();
  Params g = Params::zeros(arch);
  for (int l = 1; l <= arch.num_layers(); ++l) {
    const Matrix& e = eps[static_cast<std::size_t>(l)];
    g.w(l) = -inv_n * e * presynaptic(arch, acts, l).transpose();
    if (arch.bias) g.biases[static_cast<std::size_t>(l - 1)] = -inv_n * e.rowwise().sum();
  }
  return g;
}

TrainStep pc_train_step(const Params& params, const ArchSpec& arch, const Batch& batch, const SolverConfig& cfg,
                        double eta) {
  if (!(eta >= 0.0)) throw ContractError("pc_train_step: eta must be >= 0");
  InferenceStats stats;
  const Activities acts = infer(params, arch, batch, cfg, &stats);
  const Params grad = pc_weight_gradient(params, arch, acts);
  TrainStep out;
  out.params = sgd_step(params, grad, eta);
  out.energy_at_equilibrium = energy(params, arch, acts);
  out.inference_steps = stats.steps;
  out.grad_norm = l2_norm(grad);
  return out;
}

}  // namespace pcs::pc
