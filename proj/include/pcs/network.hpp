#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pcs/linalg.hpp"

namespace pcs {

enum class Activation { linear, tanh, relu };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

/// Layer widths [n₀, …, n_L]; n₀ = d_x, n_L = d_y. The activation applies to
/// hidden layers only, the output layer is always linear.
struct ArchSpec {
  std::vector<int> widths;
  Activation activation = Activation::linear;
  bool bias = false;

  /// Throws ContractError unless there are ≥ 2 widths, all ≥ 1.
  void validate() const;

  [[nodiscard]] int num_layers() const { return static_cast<int>(widths.size()) - 1; }
  [[nodiscard]] int hidden_layers() const { return num_layers() - 1; }
  [[nodiscard]] int in_dim() const { return widths.front(); }
  [[nodiscard]] int out_dim() const { return widths.back(); }
  [[nodiscard]] bool is_linear() const { return activation == Activation::linear; }
  [[nodiscard]] bool is_chain() const;
  /// p = Σ n_ℓ n_{ℓ−1} (+ Σ n_ℓ with biases).
  [[nodiscard]] int param_count() const;

  /// Width-1 network with `hidden` hidden units.
  static ArchSpec chain(int hidden);
  /// d_in → hidden × width → d_out.
  static ArchSpec uniform(int d_in, int width, int hidden, int d_out,
                          Activation act = Activation::linear);
};

/// θ = (W₁, …, W_L); weights[ℓ−1] has shape n_ℓ × n_{ℓ−1}. `biases` is empty
/// unless the architecture enables them.
struct Params {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  [[nodiscard]] int num_layers() const { return static_cast<int>(weights.size()); }
  /// Layer ℓ in 1-based notation (W_ℓ).
  [[nodiscard]] const Matrix& w(int layer) const { return weights.at(static_cast<std::size_t>(layer - 1)); }
  Matrix& w(int layer) { return weights.at(static_cast<std::size_t>(layer - 1)); }

  static Params zeros(const ArchSpec& arch);
};

/// Throws ShapeError if `params` does not match `arch`.
void check_shapes(const Params& params, const ArchSpec& arch);

/// Row-vectorized layers W₁…W_L concatenated (then biases, if any).
Vector flatten(const Params& params);
Params unflatten(const ArchSpec& arch, const Vector& flat);

/// Column i of x/y is sample i. `mask`, when non-empty, has the shape of y
/// and holds 1 for observed and 0 for hidden entries.
struct Batch {
  Matrix x;
  Matrix y;
  Matrix mask;

  [[nodiscard]] int size() const { return static_cast<int>(x.cols()); }
  [[nodiscard]] bool masked() const { return mask.size() != 0; }
  void validate() const;
};

/// W_k ⋯ W_l (1-based). The empty product k = l − 1 is the identity of size n_k.
Matrix weight_product(const Params& params, int k, int l);

// Elementwise activation and its derivative. relu'(0) = 0.
Matrix activate(Activation act, const Matrix& a);
Matrix activate_derivative(Activation act, const Matrix& a);

/// center + N(0, σ²) per weight entry, one RNG stream per layer.
Params init_near_point(const ArchSpec& arch, const Params& center, double sigma, std::uint64_t seed);

/// N(0, gain²/n_{ℓ−1}) weights; a conventional non-degenerate starting point.
Params init_fan_in(const ArchSpec& arch, double gain, std::uint64_t seed);

/// Pre-activations z₀ = x, z₁ = W₁x, z_ℓ = W_ℓ φ(z_{ℓ−1}); the last entry is
/// the network output.
std::vector<Matrix> feedforward(const Params& params, const ArchSpec& arch, const Matrix& x);

Matrix forward(const Params& params, const ArchSpec& arch, const Matrix& x);

/// (1/2N) Σᵢ ‖yᵢ − ŷᵢ‖² (masked entries excluded from the sum, N unchanged).
double mse_loss(const Params& params, const ArchSpec& arch, const Batch& batch);

/// Reverse-mode gradient of mse_loss.
Params bp_gradient(const Params& params, const ArchSpec& arch, const Batch& batch);

Params sgd_step(const Params& params, const Params& grads, double eta);

// Small helpers over Params viewed as one vector.
double l2_norm(const Params& p);
double max_abs(const Params& p);
Params axpy(double alpha, const Params& x, const Params& y);  // alpha·x + y

}  // namespace pcs
