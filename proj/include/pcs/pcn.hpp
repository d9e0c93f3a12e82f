#pragma once

// Predictive-coding energy, inference dynamics and equilibrium weight
// gradients for fully connected networks.

#include <stdexcept>
#include <string>
#include <vector>

#include "pcs/linalg.hpp"
#include "pcs/network.hpp"

namespace pcs::pc {

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StiffnessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// z[0] = x and z[L] = y are clamped; z[1..L−1] are the inference variables.
/// `mask` mirrors Batch::mask and hides output errors.
struct Activities {
  std::vector<Matrix> z;
  Matrix mask;

  [[nodiscard]] int num_layers() const { return static_cast<int>(z.size()) - 1; }
  [[nodiscard]] int size() const { return static_cast<int>(z.front().cols()); }
};

enum class SolverMode { euler, heun_adaptive, exact_linear };

std::string to_string(SolverMode m);
SolverMode solver_mode_from_string(const std::string& name);

struct SolverConfig {
  SolverMode mode = SolverMode::euler;
  double dt = 0.1;
  int max_steps = 20;  // Euler iterations
  double abs_tol = 1e-3;
  double rel_tol = 1e-3;
  /// Equilibrium when the per-sample activity gradient has ‖·‖∞ below this.
  double grad_tol = 1e-8;
  /// Upper integration limit for the adaptive solver.
  double t_max = 300.0;

  void validate() const;
};

struct InferenceStats {
  int steps = 0;     // accepted steps
  int rejected = 0;  // adaptive only
  double time = 0.0;
  double final_grad = 0.0;
};

/// Hidden layers set by the feedforward pass, ends clamped to the batch.
Activities feedforward_activities(const Params& params, const ArchSpec& arch, const Batch& batch);

/// Prediction errors ε_ℓ = z_ℓ − W_ℓ φ(z_{ℓ−1}) − b_ℓ for ℓ = 1…L, masked at
/// the output. φ is the identity on the input layer. errors[0] is empty.
std::vector<Matrix> prediction_errors(const Params& params, const ArchSpec& arch, const Activities& acts);

/// F = (1/2N) Σᵢ Σ_ℓ ‖ε_ℓ,ᵢ‖²
double energy(const Params& params, const ArchSpec& arch, const Activities& acts);

/// ∂F/∂z_ℓ for ℓ = 1…L−1 (entries 0 and L are empty). Includes the 1/N of F;
/// the dynamics below run on N times this, the per-sample gradient.
std::vector<Matrix> activity_gradient(const Params& params, const ArchSpec& arch, const Activities& acts);

Activities infer_euler(const Params& params, const ArchSpec& arch, const Batch& batch, const SolverConfig& cfg,
                       InferenceStats* stats = nullptr);

/// Heun with an embedded Euler error estimate and a PI step controller.
Activities infer_adaptive(const Params& params, const ArchSpec& arch, const Batch& batch, const SolverConfig& cfg,
                          InferenceStats* stats = nullptr);

/// Direct solve of the block-tridiagonal stationarity system. Linear only.
Activities infer_exact_linear(const Params& params, const ArchSpec& arch, const Batch& batch,
                              InferenceStats* stats = nullptr);

/// Dispatch on cfg.mode.
Activities infer(const Params& params, const ArchSpec& arch, const Batch& batch, const SolverConfig& cfg,
                 InferenceStats* stats = nullptr);

/// ∂F/∂W_ℓ = −(1/N) ε_ℓ φ(z_{ℓ−1})ᵀ (and −(1/N) Σ ε_ℓ for biases) at fixed z.
Params pc_weight_gradient(const Params& params, const ArchSpec& arch, const Activities& acts);

struct TrainStep {
  Params params;
  double energy_at_equilibrium = 0.0;
  int inference_steps = 0;
  double grad_norm = 0.0;
};

TrainStep pc_train_step(const Params& params, const ArchSpec& arch, const Batch& batch, const SolverConfig& cfg,
                        double eta);

}  // namespace pcs::pc
