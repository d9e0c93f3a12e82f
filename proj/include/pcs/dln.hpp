#pragma once

// Closed-form quantities for deep linear networks: loss and equilibrated
// energy, their gradients, Hessians at the origin, and the linear-chain
// specializations.
//
// Hessian layout: each W_ℓ is row-vectorized (entry (a, b) at a·n_{ℓ−1} + b)
// and layers are concatenated W₁…W_L, i.e. the order of `flatten`.

#include <span>
#include <vector>

#include "pcs/linalg.hpp"
#include "pcs/network.hpp"

namespace pcs::dln {

/// Empirical second moments with 1/N normalization. syx is exactly sxyᵀ.
struct Covariances {
  Matrix sxx;  // d_x × d_x
  Matrix sxy;  // d_x × d_y
  Matrix syx;  // d_y × d_x
  Matrix syy;  // d_y × d_y
};

/// S = I + Σ_{ℓ=2}^{L} W_{L:ℓ} W_{L:ℓ}ᵀ
struct Rescaling {
  Matrix s;
};

Covariances covariances(const Batch& batch);

/// ∂L/∂W_ℓ = W_{L:ℓ+1}ᵀ (W_{L:1} Σxx − Σyx) W_{ℓ−1:1}ᵀ
Params loss_gradient_analytic(const Params& params, const Covariances& cov);

/// Full p × p Hessian of the MSE loss at `params`.
Matrix loss_hessian(const Params& params, const Covariances& cov, const ArchSpec& arch);

Rescaling rescaling(const Params& params);

/// F* = (1/2N) Σᵢ rᵢᵀ S⁻¹ rᵢ with rᵢ = yᵢ − W_{L:1} xᵢ.
double equilibrated_energy(const Params& params, const Batch& batch);

/// Product-rule gradient of F*: a rescaled loss gradient plus the term coming
/// from ∂S/∂W_ℓ (absent for W₁).
Params equilibrated_energy_gradient(const Params& params, const Batch& batch);

/// Exact Hessian of F* at an arbitrary point, by second-order forward-mode
/// differentiation (hyper-dual numbers) of the closed form. O(p²) closed-form
/// evaluations, so only meant for small networks.
Matrix equilibrated_energy_hessian_ad(const Params& params, const Batch& batch);

/// Loss Hessian at θ = 0: off-diagonal blocks −Σxy ⊗ I for one hidden layer,
/// zero for deeper networks. Requires H ≥ 1.
Matrix origin_hessian_loss(const Covariances& cov, const ArchSpec& arch);

/// Energy Hessian at θ = 0: the loss blocks plus −Σyy ⊗ I_{n_{L−1}} in the
/// W_L diagonal block. Requires H ≥ 1.
Matrix origin_hessian_energy(const Covariances& cov, const ArchSpec& arch);

struct ChainQuantities {
  double s = 1.0;
  double loss = 0.0;
  double energy = 0.0;  // F* = loss / s
  Matrix loss_hessian;
  Matrix energy_hessian;
};

/// Scalar-chain closed forms. `weights` = (w₁, …, w_L); batch must be 1-D in
/// and out. Throws ContractError otherwise.
ChainQuantities chain_quantities(std::span<const double> weights, const Batch& batch);

struct ChainMinima {
  Matrix h_loss;
  Matrix h_energy;
  double s = 1.0;
};

/// Both Hessians at a perfect-fit chain (|w_{L:1} xᵢ − yᵢ| ≤ 1e-10 for all i),
/// where h_energy = h_loss / s. Throws ContractError away from perfect fit.
ChainMinima chain_minima_relation(std::span<const double> weights, const Batch& batch);

/// c = Σᵢ yᵢᵀ Î A Îᵀ yᵢ with A = I + Σ_{ℓ=2}^{L−1} W_{L−1:ℓ} W_{L−1:ℓ}ᵀ. Along
/// the direction W_L = δÎ from a zero-rank critical point, F* drops by
/// c δ² / (2N) to second order. Requires L ≥ 2.
double zero_rank_curvature_constant(const Params& params, const Batch& batch);

/// Direction θ̂ with W_L = Î (ones on the main diagonal of the d_y × n_{L−1}
/// block) and all other layers zero.
Params zero_rank_direction(const ArchSpec& arch);

/// Offsets of each layer in the flattened layout (size L + 1, last = p).
std::vector<Eigen::Index> layer_offsets(const ArchSpec& arch);

}  // namespace pcs::dln
