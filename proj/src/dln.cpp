#include "pcs/dln.hpp"

#include <cmath>
#include <string>

#include "pcs/hyperdual.hpp"

namespace pcs::dln {

namespace {

void require_unmasked(const Batch& batch, const char* who) {
  batch.validate();
  if (batch.masked()) {
    throw ContractError(std::string(who) + ": closed forms need a fully observed batch");
  }
}

void require_linear(const ArchSpec& arch, const char* who) {
  arch.validate();
  if (!arch.is_linear() || arch.bias) {
    throw ContractError(std::string(who) + ": requires a bias-free linear architecture");
  }
}

ArchSpec arch_of(const Params& params) {
  ArchSpec a;
  a.widths.push_back(static_cast<int>(params.w(1).cols()));
  for (const auto& w : params.weights) a.widths.push_back(static_cast<int>(w.rows()));
  return a;
}

Matrix cholesky_solve(const Matrix& spd, const Matrix& rhs) {
  Eigen::LLT<Eigen::MatrixXd> llt(spd);
  if (llt.info() != Eigen::Success) throw SingularError("rescaling is not positive definite");
  return llt.solve(Eigen::MatrixXd(rhs));
}

// Row-major dense matrix over an arbitrary scalar, just enough for the
// closed-form energy under forward-mode differentiation.
template <typename T>
struct Dense {
  int rows = 0;
  int cols = 0;
  std::vector<T> a;
  Dense(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r * c), T(0.0)) {}
  T& operator()(int i, int j) { return a[static_cast<std::size_t>(i * cols + j)]; }
  const T& operator()(int i, int j) const { return a[static_cast<std::size_t>(i * cols + j)]; }
};

template <typename T>
Dense<T> mul(const Dense<T>& x, const Dense<T>& y) {
  Dense<T> out(x.rows, y.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int k = 0; k < x.cols; ++k) {
      const T xik = x(i, k);
      for (int j = 0; j < y.cols; ++j) out(i, j) += xik * y(k, j);
    }
  return out;
}

template <typename T>
Dense<T> identity(int n) {
  Dense<T> out(n, n);
  for (int i = 0; i < n; ++i) out(i, i) = T(1.0);
  return out;
}

// F* for weights given as Dense<T>; Gaussian elimination without pivoting is
// safe because S is symmetric with eigenvalues ≥ 1.
template <typename T>
T closed_form_energy(const std::vector<Dense<T>>& w, const Batch& batch) {
  const int L = static_cast<int>(w.size());
  const int dy = w.back().rows;
  const int n = batch.size();
  Dense<T> s = identity<T>(dy);
  // W_{L:ℓ} accumulated from the top; S collects ℓ = 2…L.
  Dense<T> top = identity<T>(dy);
  for (int l = L; l >= 2; --l) {
    top = mul(top, w[static_cast<std::size_t>(l - 1)]);
    for (int i = 0; i < dy; ++i)
      for (int j = 0; j < dy; ++j) {
        T acc(0.0);
        for (int k = 0; k < top.cols; ++k) acc += top(i, k) * top(j, k);
        s(i, j) += acc;
      }
  }
  Dense<T> prod = mul(top, w[0]);
  Dense<T> r(dy, n);
  for (int i = 0; i < dy; ++i)
    for (int c = 0; c < n; ++c) {
      T acc(batch.y(i, c));
      for (int k = 0; k < prod.cols; ++k) acc -= prod(i, k) * T(batch.x(k, c));
      r(i, c) = acc;
    }
  Dense<T> z = r;
  for (int p = 0; p < dy; ++p) {
    const T inv = inverse(s(p, p));
    for (int i = p + 1; i < dy; ++i) {
      const T f = s(i, p) * inv;
      for (int j = p; j < dy; ++j) s(i, j) -= f * s(p, j);
      for (int c = 0; c < n; ++c) z(i, c) -= f * z(p, c);
    }
  }
  for (int p = dy - 1; p >= 0; --p) {
    const T inv = inverse(s(p, p));
    for (int c = 0; c < n; ++c) {
      T acc = z(p, c);
      for (int j = p + 1; j < dy; ++j) acc -= s(p, j) * z(j, c);
      z(p, c) = acc * inv;
    }
  }
  T total(0.0);
  for (int i = 0; i < dy; ++i)
    for (int c = 0; c < n; ++c) total += r(i, c) * z(i, c);
  return total * T(0.5 / n);
}

}  // namespace

std::vector<Eigen::Index> layer_offsets(const ArchSpec& arch) {
  std::vector<Eigen::Index> off{0};
  for (int l = 1; l <= arch.num_layers(); ++l) {
    off.push_back(off.back() + static_cast<Eigen::Index>(arch.widths[l]) * arch.widths[l - 1]);
  }
  return off;
}

Covariances covariances(const Batch& batch) {
  require_unmasked(batch, "covariances");
  const double inv_n = 1.0 / batch.size();
  Covariances c;
  c.sxx = inv_n * batch.x * batch.x.transpose();
  c.sxy = inv_n * batch.x * batch.y.transpose();
  c.syx = c.sxy.transpose();
  c.syy = inv_n * batch.y * batch.y.transpose();
  return c;
}

Params loss_gradient_analytic(const Params& params, const Covariances& cov) {
  const int L = params.num_layers();
  const Matrix err = weight_product(params, L, 1) * cov.sxx - cov.syx;
  Params g = params;
  for (int l = 1; l <= L; ++l) {
    g.w(l) = weight_product(params, L, l + 1).transpose() * err * weight_product(params, l - 1, 1).transpose();
  }
  return g;
}

Matrix loss_hessian(const Params& params, const Covariances& cov, const ArchSpec& arch) {
  require_linear(arch, "loss_hessian");
  check_shapes(params, arch);
  const int L = arch.num_layers();
  const auto off = layer_offsets(arch);
  const Matrix err = weight_product(params, L, 1) * cov.sxx - cov.syx;

  std::vector<Matrix> above(static_cast<std::size_t>(L + 1));  // above[ℓ] = W_{L:ℓ+1}
  std::vector<Matrix> below(static_cast<std::size_t>(L + 1));  // below[ℓ] = W_{ℓ−1:1}
  for (int l = 1; l <= L; ++l) {
    above[l] = weight_product(params, L, l + 1);
    below[l] = weight_product(params, l - 1, 1);
  }

  Matrix h = Matrix::Zero(off.back(), off.back());
  for (int l = 1; l <= L; ++l) {
    const int nl_out = arch.widths[l];
    const int nl_in = arch.widths[l - 1];
    for (int k = 1; k <= L; ++k) {
      const int nk_out = arch.widths[k];
      const int nk_in = arch.widths[k - 1];
      // Residual-independent part: (W_{L:ℓ+1}ᵀ W_{L:k+1}) ⊗ (W_{ℓ−1:1} Σxx W_{k−1:1}ᵀ).
      const Matrix left = above[l].transpose() * above[k];
      const Matrix right = below[k] * cov.sxx * below[l].transpose();  // n_{k−1} × n_{ℓ−1}
      auto block = h.block(off[l - 1], off[k - 1], nl_out * nl_in, nk_out * nk_in);
      for (int a = 0; a < nl_out; ++a)
        for (int b = 0; b < nl_in; ++b)
          for (int c = 0; c < nk_out; ++c)
            for (int d = 0; d < nk_in; ++d) block(a * nl_in + b, c * nk_in + d) = left(a, c) * right(d, b);

      if (k > l) {
        // W_k sits inside W_{L:ℓ+1}.
        const Matrix mid = weight_product(params, k - 1, l + 1);  // n_{k−1} × n_ℓ
        const Matrix outer = above[k].transpose() * err * below[l].transpose();  // n_k × n_{ℓ−1}
        for (int a = 0; a < nl_out; ++a)
          for (int b = 0; b < nl_in; ++b)
            for (int c = 0; c < nk_out; ++c)
              for (int d = 0; d < nk_in; ++d) block(a * nl_in + b, c * nk_in + d) += mid(d, a) * outer(c, b);
      } else if (k < l) {
        // W_k sits inside W_{ℓ−1:1}.
        const Matrix mid = weight_product(params, l - 1, k + 1);  // n_{ℓ−1} × n_k
        const Matrix outer = above[l].transpose() * err * below[k].transpose();  // n_ℓ × n_{k−1}
        for (int a = 0; a < nl_out; ++a)
          for (int b = 0; b < nl_in; ++b)
            for (int c = 0; c < nk_out; ++c)
              for (int d = 0; d < nk_in; ++d) block(a * nl_in + b, c * nk_in + d) += outer(a, d) * mid(b, c);
      }
    }
  }
  return h;
}

Rescaling rescaling(const Params& params) {
  const int L = params.num_layers();
  const Eigen::Index dy = params.w(L).rows();
  Matrix s = Matrix::Identity(dy, dy);
  Matrix top = Matrix::Identity(dy, dy);
  for (int l = L; l >= 2; --l) {
    top = top * params.w(l);
    s += top * top.transpose();
  }
  return Rescaling{s};
}

double equilibrated_energy(const Params& params, const Batch& batch) {
  require_unmasked(batch, "equilibrated_energy");
  const int L = params.num_layers();
  const Matrix r = batch.y - weight_product(params, L, 1) * batch.x;
  const Matrix z = cholesky_solve(rescaling(params).s, r);
  return 0.5 * r.cwiseProduct(z).sum() / batch.size();
}

Params equilibrated_energy_gradient(const Params& params, const Batch& batch) {
  require_unmasked(batch, "equilibrated_energy_gradient");
  const int L = params.num_layers();
  const Covariances cov = covariances(batch);
  const Matrix prod = weight_product(params, L, 1);
  const Matrix s = rescaling(params).s;
  const Matrix r = batch.y - prod * batch.x;
  const Matrix psi = r * r.transpose() / static_cast<double>(batch.size());
  const Matrix s_inv_err = cholesky_solve(s, prod * cov.sxx - cov.syx);
  const Matrix s_inv_psi = cholesky_solve(s, psi);
  const Matrix q = cholesky_solve(s, Matrix(s_inv_psi.transpose()));  // S⁻¹ Ψ S⁻¹

  Params g = params;
  for (int l = 1; l <= L; ++l) {
    const Matrix above = weight_product(params, L, l + 1);
    Matrix grad = above.transpose() * s_inv_err * weight_product(params, l - 1, 1).transpose();
    if (l >= 2) {
      // Σ_{m=2}^{ℓ} W_{ℓ−1:m} W_{ℓ−1:m}ᵀ, including the identity at m = ℓ.
      const Eigen::Index n_in = params.w(l).cols();
      Matrix gram = Matrix::Identity(n_in, n_in);
      Matrix chain = Matrix::Identity(n_in, n_in);
      for (int m = l - 1; m >= 2; --m) {
        chain = chain * params.w(m);
        gram += chain * chain.transpose();
      }
      grad -= above.transpose() * q * above * params.w(l) * gram;
    }
    g.w(l) = grad;
  }
  return g;
}

Matrix equilibrated_energy_hessian_ad(const Params& params, const Batch& batch) {
  require_unmasked(batch, "equilibrated_energy_hessian_ad");
  const ArchSpec arch = arch_of(params);
  const auto off = layer_offsets(arch);
  const Eigen::Index p = off.back();

  std::vector<Dense<HyperDual>> base;
  for (int l = 1; l <= arch.num_layers(); ++l) {
    Dense<HyperDual> w(arch.widths[l], arch.widths[l - 1]);
    for (int i = 0; i < w.rows; ++i)
      for (int j = 0; j < w.cols; ++j) w(i, j) = HyperDual(params.w(l)(i, j));
    base.push_back(std::move(w));
  }
  auto locate = [&](Eigen::Index idx) {
    int l = 0;
    while (off[static_cast<std::size_t>(l + 1)] <= idx) ++l;
    return std::pair<int, Eigen::Index>{l, idx - off[static_cast<std::size_t>(l)]};
  };

  Matrix h(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i; j < p; ++j) {
      auto w = base;
      const auto [li, ii] = locate(i);
      const auto [lj, jj] = locate(j);
      w[static_cast<std::size_t>(li)].a[static_cast<std::size_t>(ii)].e1 = 1.0;
      w[static_cast<std::size_t>(lj)].a[static_cast<std::size_t>(jj)].e2 = 1.0;
      const HyperDual f = closed_form_energy(w, batch);
      h(i, j) = f.e12;
      h(j, i) = f.e12;
    }
  }
  return h;
}

Matrix origin_hessian_loss(const Covariances& cov, const ArchSpec& arch) {
  require_linear(arch, "origin_hessian_loss");
  if (arch.hidden_layers() < 1) throw ContractError("origin_hessian_loss: needs at least one hidden layer");
  const auto off = layer_offsets(arch);
  Matrix h = Matrix::Zero(off.back(), off.back());
  if (arch.hidden_layers() == 1) {
    const int dx = arch.widths[0];
    const int n1 = arch.widths[1];
    const int dy = arch.widths[2];
    // ∂²L/∂W₁[a,b]∂W₂[c,d] = −δ_ad Σxy[b,c]
    for (int a = 0; a < n1; ++a)
      for (int b = 0; b < dx; ++b)
        for (int c = 0; c < dy; ++c) {
          const Eigen::Index row = a * dx + b;
          const Eigen::Index col = off[1] + c * n1 + a;
          h(row, col) = -cov.sxy(b, c);
          h(col, row) = -cov.sxy(b, c);
        }
  }
  return h;
}

Matrix origin_hessian_energy(const Covariances& cov, const ArchSpec& arch) {
  Matrix h = origin_hessian_loss(cov, arch);
  const auto off = layer_offsets(arch);
  const int L = arch.num_layers();
  const int dy = arch.widths[L];
  const int n = arch.widths[L - 1];
  // −Σyy ⊗ I_{n_{L−1}} on the W_L diagonal block.
  for (int c = 0; c < dy; ++c)
    for (int c2 = 0; c2 < dy; ++c2)
      for (int d = 0; d < n; ++d) h(off[L - 1] + c * n + d, off[L - 1] + c2 * n + d) -= cov.syy(c, c2);
  return h;
}

namespace {

struct ChainMoments {
  double sxx = 0.0;
  double sxy = 0.0;
  double loss = 0.0;
};

ChainMoments chain_moments(std::span<const double> w, const Batch& batch) {
  batch.validate();
  if (batch.x.rows() != 1 || batch.y.rows() != 1 || batch.masked()) {
    throw ContractError("chain: batch must be scalar in and out and fully observed");
  }
  if (w.empty()) throw ContractError("chain: need at least one weight");
  double prod = 1.0;
  for (double v : w) prod *= v;
  ChainMoments m;
  const int n = batch.size();
  for (int i = 0; i < n; ++i) {
    const double x = batch.x(0, i);
    const double y = batch.y(0, i);
    m.sxx += x * x / n;
    m.sxy += x * y / n;
    m.loss += 0.5 * (y - prod * x) * (y - prod * x) / n;
  }
  return m;
}

// Π_{k ∉ skip} w_k over k ∈ [from, L] (1-based), optionally squared.
double partial_product(std::span<const double> w, int from, int skip_a, int skip_b, bool squared) {
  double p = 1.0;
  for (int k = from; k <= static_cast<int>(w.size()); ++k) {
    if (k == skip_a || k == skip_b) continue;
    const double v = w[static_cast<std::size_t>(k - 1)];
    p *= squared ? v * v : v;
  }
  return p;
}

}  // namespace

ChainQuantities chain_quantities(std::span<const double> w, const Batch& batch) {
  const ChainMoments m = chain_moments(w, batch);
  const int L = static_cast<int>(w.size());
  const double prod = partial_product(w, 1, 0, 0, false);

  ChainQuantities q;
  q.s = 1.0;
  for (int l = 2; l <= L; ++l) q.s += partial_product(w, l, 0, 0, true);
  q.loss = m.loss;
  q.energy = m.loss / q.s;

  // Loss derivatives (1-based i, j).
  std::vector<double> dl(static_cast<std::size_t>(L + 1), 0.0);
  std::vector<double> ds(static_cast<std::size_t>(L + 1), 0.0);
  for (int i = 1; i <= L; ++i) {
    dl[i] = -partial_product(w, 1, i, 0, false) * (m.sxy - prod * m.sxx);
    for (int mm = 2; mm <= i; ++mm) ds[i] += 2.0 * w[i - 1] * partial_product(w, mm, i, 0, true);
  }
  q.loss_hessian = Matrix::Zero(L, L);
  q.energy_hessian = Matrix::Zero(L, L);
  for (int i = 1; i <= L; ++i) {
    for (int j = 1; j <= L; ++j) {
      double lij = 0.0;
      double sij = 0.0;
      if (i == j) {
        const double pi = partial_product(w, 1, i, 0, false);
        lij = pi * pi * m.sxx;
        for (int mm = 2; mm <= i; ++mm) sij += 2.0 * partial_product(w, mm, i, 0, true);
      } else {
        lij = partial_product(w, 1, i, j, false) * (2.0 * prod * m.sxx - m.sxy);
        for (int mm = 2; mm <= std::min(i, j); ++mm) {
          sij += 4.0 * w[i - 1] * w[j - 1] * partial_product(w, mm, i, j, true);
        }
      }
      const double s = q.s;
      q.loss_hessian(i - 1, j - 1) = lij;
      // ∂²(L/s)/∂wᵢ∂wⱼ, with ∂s/∂w₁ = 0.
      q.energy_hessian(i - 1, j - 1) = lij / s - (dl[i] * ds[j] + dl[j] * ds[i]) / (s * s) -
                                       m.loss * sij / (s * s) + 2.0 * m.loss * ds[i] * ds[j] / (s * s * s);
    }
  }
  return q;
}

ChainMinima chain_minima_relation(std::span<const double> w, const Batch& batch) {
  chain_moments(w, batch);
  double prod = 1.0;
  for (double v : w) prod *= v;
  for (int i = 0; i < batch.size(); ++i) {
    if (std::abs(prod * batch.x(0, i) - batch.y(0, i)) > 1e-10) {
      throw ContractError("chain_minima_relation: chain does not fit sample " + std::to_string(i));
    }
  }
  const ChainQuantities q = chain_quantities(w, batch);
  return ChainMinima{q.loss_hessian, q.energy_hessian, q.s};
}

double zero_rank_curvature_constant(const Params& params, const Batch& batch) {
  require_unmasked(batch, "zero_rank_curvature_constant");
  const int L = params.num_layers();
  if (L < 2) throw ContractError("zero_rank_curvature_constant: needs L >= 2");
  const Eigen::Index n = params.w(L - 1).rows();
  Matrix a = Matrix::Identity(n, n);
  Matrix chain = Matrix::Identity(n, n);
  for (int l = L - 1; l >= 2; --l) {
    chain = chain * params.w(l);
    a += chain * chain.transpose();
  }
  const Eigen::Index dy = params.w(L).rows();
  const Matrix ihat = Matrix::Identity(dy, n);
  const Matrix proj = ihat * a * ihat.transpose();
  return (batch.y.transpose() * proj * batch.y).trace();
}

Params zero_rank_direction(const ArchSpec& arch) {
  Params d = Params::zeros(arch);
  const int L = arch.num_layers();
  d.w(L) = Matrix::Identity(arch.widths[L], arch.widths[L - 1]);
  return d;
}

}  // namespace pcs::dln
