#include "pcs/network.hpp"

#include <cmath>
#include <stdexcept>

#include "pcs/rng.hpp"

namespace pcs {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "linear";
}

Activation activation_from_string(std::string_view name) {
  if (name == "linear") return Activation::linear;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

void ArchSpec::validate() const {
  if (widths.size() < 2) {
    throw ContractError("ArchSpec: need at least input and output widths");
  }
  for (int w : widths) {
    if (w < 1) throw ContractError("ArchSpec: widths must be >= 1");
  }
}

bool ArchSpec::is_chain() const {
  for (int w : widths) {
    if (w != 1) return false;
  }
  return true;
}

int ArchSpec::param_count() const {
  int p = 0;
  for (int l = 1; l <= num_layers(); ++l) {
    p += widths[l] * widths[l - 1] + (bias ? widths[l] : 0);
  }
  return p;
}

ArchSpec ArchSpec::chain(int hidden) {
  return ArchSpec{std::vector<int>(static_cast<std::size_t>(hidden + 2), 1)};
}

ArchSpec ArchSpec::uniform(int d_in, int width, int hidden, int d_out, Activation act) {
  ArchSpec a;
  a.widths.push_back(d_in);
  for (int h = 0; h < hidden; ++h) a.widths.push_back(width);
  a.widths.push_back(d_out);
  a.activation = act;
  return a;
}

Params Params::zeros(const ArchSpec& arch) {
  arch.validate();
  Params p;
  for (int l = 1; l <= arch.num_layers(); ++l) {
    p.weights.push_back(Matrix::Zero(arch.widths[l], arch.widths[l - 1]));
    if (arch.bias) p.biases.push_back(Vector::Zero(arch.widths[l]));
  }
  return p;
}

void check_shapes(const Params& params, const ArchSpec& arch) {
  arch.validate();
  if (params.num_layers() != arch.num_layers()) {
    throw ShapeError("params have " + std::to_string(params.num_layers()) + " layers, arch has " +
                     std::to_string(arch.num_layers()));
  }
  for (int l = 1; l <= arch.num_layers(); ++l) {
    const Matrix& w = params.w(l);
    if (w.rows() != arch.widths[l] || w.cols() != arch.widths[l - 1]) {
      throw ShapeError("W_" + std::to_string(l) + " has shape " + std::to_string(w.rows()) + "x" +
                       std::to_string(w.cols()));
    }
  }
  if (arch.bias) {
    if (static_cast<int>(params.biases.size()) != arch.num_layers()) {
      throw ShapeError("bias count does not match layer count");
    }
    for (int l = 1; l <= arch.num_layers(); ++l) {
      if (params.biases[l - 1].size() != arch.widths[l]) throw ShapeError("bias length mismatch");
    }
  } else if (!params.biases.empty()) {
    throw ShapeError("biases given for a bias-free architecture");
  }
}

Vector flatten(const Params& params) {
  Eigen::Index p = 0;
  for (const auto& w : params.weights) p += w.size();
  for (const auto& b : params.biases) p += b.size();
  Vector flat(p);
  Eigen::Index at = 0;
  for (const auto& w : params.weights) {
    flat.segment(at, w.size()) = Eigen::Map<const Vector>(w.data(), w.size());
    at += w.size();
  }
  for (const auto& b : params.biases) {
    flat.segment(at, b.size()) = b;
    at += b.size();
  }
  return flat;
}

Params unflatten(const ArchSpec& arch, const Vector& flat) {
  if (flat.size() != arch.param_count()) {
    throw ShapeError("unflatten: expected " + std::to_string(arch.param_count()) + " values, got " +
                     std::to_string(flat.size()));
  }
  Params p = Params::zeros(arch);
  Eigen::Index at = 0;
  for (auto& w : p.weights) {
    Eigen::Map<Vector>(w.data(), w.size()) = flat.segment(at, w.size());
    at += w.size();
  }
  for (auto& b : p.biases) {
    b = flat.segment(at, b.size());
    at += b.size();
  }
  return p;
}

void Batch::validate() const {
  if (x.cols() < 1) throw ShapeError("Batch: need at least one sample");
  if (x.cols() != y.cols()) throw ShapeError("Batch: x and y column counts differ");
  if (masked() && (mask.rows() != y.rows() || mask.cols() != y.cols())) {
    throw ShapeError("Batch: mask shape differs from y");
  }
}

Matrix weight_product(const Params& params, int k, int l) {
  const int L = params.num_layers();
  if (l < 1 || l > L + 1 || k < l - 1 || k > L) {
    throw std::out_of_range("weight_product: bad range W_" + std::to_string(k) + ":" +
                            std::to_string(l));
  }
  if (k == l - 1) {
    const Eigen::Index n = (k == 0) ? params.w(1).cols() : params.w(k).rows();
    return Matrix::Identity(n, n);
  }
  Matrix prod = params.w(l);
  for (int m = l + 1; m <= k; ++m) prod = params.w(m) * prod;
  return prod;
}

Matrix activate(Activation act, const Matrix& a) {
  switch (act) {
    case Activation::linear: return a;
    case Activation::tanh: return a.array().tanh().matrix();
    case Activation::relu: return a.cwiseMax(0.0);
  }
  return a;
}

Matrix activate_derivative(Activation act, const Matrix& a) {
  switch (act) {
    case Activation::linear: return Matrix::Ones(a.rows(), a.cols());
    case Activation::tanh: return (1.0 - a.array().tanh().square()).matrix();
    case Activation::relu: return (a.array() > 0.0).cast<double>().matrix();
  }
  return Matrix::Ones(a.rows(), a.cols());
}

Params init_near_point(const ArchSpec& arch, const Params& center, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("init_near_point: sigma must be >= 0");
  check_shapes(center, arch);
  Params p = center;
  if (sigma == 0.0) return p;
  for (int l = 1; l <= arch.num_layers(); ++l) {
    Rng rng(seed, static_cast<std::uint64_t>(2 * l));
    Matrix& w = p.w(l);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] += rng.normal(0.0, sigma);
    if (arch.bias) {
      Rng brng(seed, static_cast<std::uint64_t>(2 * l + 1));
      for (Eigen::Index i = 0; i < p.biases[l - 1].size(); ++i) p.biases[l - 1](i) += brng.normal(0.0, sigma);
    }
  }
  return p;
}

Params init_fan_in(const ArchSpec& arch, double gain, std::uint64_t seed) {
  Params p = Params::zeros(arch);
  for (int l = 1; l <= arch.num_layers(); ++l) {
    Rng rng(seed, static_cast<std::uint64_t>(2 * l));
    const double sd = gain / std::sqrt(static_cast<double>(arch.widths[l - 1]));
    Matrix& w = p.w(l);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal(0.0, sd);
  }
  return p;
}

namespace {

Matrix affine(const Params& params, int layer, const Matrix& input) {
  Matrix out = params.w(layer) * input;
  if (!params.biases.empty()) out.colwise() += params.biases[layer - 1];
  return out;
}

Matrix masked_residual(const Batch& batch, const Matrix& yhat) {
  Matrix r = batch.y - yhat;
  if (batch.masked()) r = r.cwiseProduct(batch.mask);
  return r;
}

}  // namespace

std::vector<Matrix> feedforward(const Params& params, const ArchSpec& arch, const Matrix& x) {
  check_shapes(params, arch);
  if (x.rows() != arch.in_dim()) throw ShapeError("feedforward: input dimension mismatch");
  const int L = arch.num_layers();
  std::vector<Matrix> z;
  z.reserve(static_cast<std::size_t>(L + 1));
  z.push_back(x);
  z.push_back(affine(params, 1, x));
  for (int l = 2; l <= L; ++l) z.push_back(affine(params, l, activate(arch.activation, z.back())));
  return z;
}

Matrix forward(const Params& params, const ArchSpec& arch, const Matrix& x) {
  return feedforward(params, arch, x).back();
}

double mse_loss(const Params& params, const ArchSpec& arch, const Batch& batch) {
  batch.validate();
  const Matrix r = masked_residual(batch, forward(params, arch, batch.x));
  return 0.5 * r.squaredNorm() / batch.size();
}

Params bp_gradient(const Params& params, const ArchSpec& arch, const Batch& batch) {
  batch.validate();
  const auto z = feedforward(params, arch, batch.x);
  const int L = arch.num_layers();
  Params g = Params::zeros(arch);
  Matrix delta = -masked_residual(batch, z.back()) / static_cast<double>(batch.size());
  for (int l = L; l >= 1; --l) {
    const Matrix input = (l == 1) ? z[0] : activate(arch.activation, z[l - 1]);
    g.w(l) = delta * input.transpose();
    if (arch.bias) g.biases[l - 1] = delta.rowwise().sum();
    if (l > 1) {
      delta = (params.w(l).transpose() * delta).cwiseProduct(activate_derivative(arch.activation, z[l - 1]));
    }
  }
  return g;
}

Params sgd_step(const Params& params, const Params& grads, double eta) {
  if (params.weights.size() != grads.weights.size() || params.biases.size() != grads.biases.size()) {
    throw ShapeError("sgd_step: gradient layout differs from params");
  }
  Params out = params;
  for (std::size_t l = 0; l < out.weights.size(); ++l) {
    if (grads.weights[l].rows() != out.weights[l].rows() || grads.weights[l].cols() != out.weights[l].cols()) {
      throw ShapeError("sgd_step: shape mismatch at layer " + std::to_string(l + 1));
    }
    out.weights[l] -= eta * grads.weights[l];
  }
  for (std::size_t l = 0; l < out.biases.size(); ++l) out.biases[l] -= eta * grads.biases[l];
  return out;
}

double l2_norm(const Params& p) {
  double s = 0.0;
  for (const auto& w : p.weights) s += w.squaredNorm();
  for (const auto& b : p.biases) s += b.squaredNorm();
  return std::sqrt(s);
}

double max_abs(const Params& p) {
  double m = 0.0;
  for (const auto& w : p.weights) m = std::max(m, w.cwiseAbs().maxCoeff());
  for (const auto& b : p.biases) m = std::max(m, b.cwiseAbs().maxCoeff());
  return m;
}

Params axpy(double alpha, const Params& x, const Params& y) {
  Params out = y;
  for (std::size_t l = 0; l < out.weights.size(); ++l) out.weights[l] += alpha * x.weights[l];
  for (std::size_t l = 0; l < out.biases.size(); ++l) out.biases[l] += alpha * x.biases[l];
  return out;
}

}  // namespace pcs
