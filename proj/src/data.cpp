#include "pcs/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace pcs::data {

namespace {

void set_one_hot(Matrix& y, int col, long label, int n_classes, std::size_t where) {
  if (label < 0 || label >= n_classes) {
    throw FormatError("label " + std::to_string(label) + " outside [0, " + std::to_string(n_classes) + ")", where);
  }
  y(label, col) = 1.0;
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t at) {
  return (static_cast<std::uint32_t>(buf[at]) << 24) | (static_cast<std::uint32_t>(buf[at + 1]) << 16) |
         (static_cast<std::uint32_t>(buf[at + 2]) << 8) | static_cast<std::uint32_t>(buf[at + 3]);
}

std::size_t idx_width(std::uint8_t type, std::size_t where) {
  switch (type) {
    case 0x08:
    case 0x09: return 1;
    case 0x0B: return 2;
    case 0x0C:
    case 0x0D: return 4;
    case 0x0E: return 8;
    default: throw FormatError("unknown IDX element type 0x" + std::to_string(type), where);
  }
}

double idx_value(const unsigned char* p, std::uint8_t type) {
  std::uint64_t raw = 0;
  const std::size_t w = idx_width(type, 0);
  for (std::size_t k = 0; k < w; ++k) raw = (raw << 8) | p[k];
  switch (type) {
    case 0x08: return static_cast<double>(raw);
    case 0x09: return static_cast<double>(static_cast<std::int8_t>(raw));
    case 0x0B: return static_cast<double>(static_cast<std::int16_t>(raw));
    case 0x0C: return static_cast<double>(static_cast<std::int32_t>(raw));
    case 0x0D: {
      const auto bits = static_cast<std::uint32_t>(raw);
      float f = 0.0F;
      std::memcpy(&f, &bits, sizeof f);
      return f;
    }
    default: {
      double d = 0.0;
      std::memcpy(&d, &raw, sizeof d);
      return d;
    }
  }
}

}  // namespace

std::string to_string(DataKind k) {
  switch (k) {
    case DataKind::gauss_regression: return "gauss_regression";
    case DataKind::blob_classification: return "blob_classification";
    case DataKind::lowrank_matrix: return "lowrank_matrix";
  }
  return "gauss_regression";
}

DataKind data_kind_from_string(const std::string& name) {
  if (name == "gauss_regression") return DataKind::gauss_regression;
  if (name == "blob_classification") return DataKind::blob_classification;
  if (name == "lowrank_matrix") return DataKind::lowrank_matrix;
  throw std::invalid_argument("unknown data kind '" + name + "'");
}

void DataConfig::validate() const {
  if (d_x < 1 || d_y < 1) throw ContractError("data: dims must be >= 1");
  if (n_samples < 1) throw ContractError("data: n_samples must be >= 1");
  if (!(stddev >= 0.0) || !(noise >= 0.0)) throw ContractError("data: noise scales must be >= 0");
  if (!(mask_fraction >= 0.0 && mask_fraction < 1.0)) throw ContractError("data: mask_fraction must be in [0, 1)");
  switch (kind) {
    case DataKind::gauss_regression:
      if (d_x != d_y) throw ContractError("data: gauss_regression needs d_x == d_y");
      for (int d : flip_dims) {
        if (d < 0 || d >= d_y) throw ContractError("data: flip dimension " + std::to_string(d) + " out of range");
      }
      break;
    case DataKind::blob_classification:
      if (n_classes < 1 || n_classes > d_y) throw ContractError("data: need 1 <= n_classes <= d_y");
      if (n_classes > d_x) throw ContractError("data: class means need n_classes <= d_x");
      break;
    case DataKind::lowrank_matrix:
      if (rows < 1 || cols < 1 || rank < 1) throw ContractError("data: matrix dims and rank must be >= 1");
      break;
  }
}

Batch gen_gauss_regression(const DataConfig& cfg) {
  cfg.validate();
  if (cfg.kind != DataKind::gauss_regression) throw ContractError("gen_gauss_regression: wrong kind");
  Rng rng(cfg.seed, 0);
  Batch b;
  b.x = Matrix(cfg.d_x, cfg.n_samples);
  for (int i = 0; i < cfg.n_samples; ++i)
    for (int d = 0; d < cfg.d_x; ++d) b.x(d, i) = rng.normal(cfg.mean, cfg.stddev);
  b.y = -b.x;
  for (int d : cfg.flip_dims) b.y.row(d) = b.x.row(d);
  return b;
}

Batch gen_blob_classification(const DataConfig& cfg) {
  cfg.validate();
  if (cfg.kind != DataKind::blob_classification) throw ContractError("gen_blob_classification: wrong kind");
  Rng rng(cfg.seed, 1);
  Batch b;
  b.x = Matrix::Zero(cfg.d_x, cfg.n_samples);
  b.y = Matrix::Zero(cfg.d_y, cfg.n_samples);
  for (int i = 0; i < cfg.n_samples; ++i) {
    const int c = i % cfg.n_classes;
    for (int d = 0; d < cfg.d_x; ++d) b.x(d, i) = cfg.noise > 0.0 ? rng.normal(0.0, cfg.noise) : 0.0;
    b.x(c, i) += cfg.class_scale;
    b.y(c, i) = 1.0;
  }
  return b;
}

Batch LowRankProblem::batch() const {
  Batch b;
  b.x = Matrix::Identity(target.cols(), target.cols());
  b.y = target;
  b.mask = observed;
  return b;
}

LowRankProblem gen_lowrank_matrix(const DataConfig& cfg) {
  cfg.validate();
  if (cfg.kind != DataKind::lowrank_matrix) throw ContractError("gen_lowrank_matrix: wrong kind");
  Rng factors(cfg.seed, 2);
  Matrix u(cfg.rows, cfg.rank);
  Matrix v(cfg.cols, cfg.rank);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = factors.normal();
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = factors.normal();

  LowRankProblem out;
  out.target = u * v.transpose();
  out.observed = Matrix::Ones(cfg.rows, cfg.cols);
  const int total = cfg.rows * cfg.cols;
  out.hidden = static_cast<int>(std::floor(cfg.mask_fraction * total + 1e-9));
  std::vector<int> cells(static_cast<std::size_t>(total));
  std::iota(cells.begin(), cells.end(), 0);
  Rng picker(cfg.seed, 3);
  for (int k = 0; k < out.hidden; ++k) {
    const auto j = static_cast<std::size_t>(k) + picker.below(static_cast<std::uint64_t>(total - k));
    std::swap(cells[static_cast<std::size_t>(k)], cells[j]);
    out.observed(cells[static_cast<std::size_t>(k)] / cfg.cols, cells[static_cast<std::size_t>(k)] % cfg.cols) = 0.0;
  }
  return out;
}

Batch generate(const DataConfig& cfg) {
  switch (cfg.kind) {
    case DataKind::gauss_regression: return gen_gauss_regression(cfg);
    case DataKind::blob_classification: return gen_blob_classification(cfg);
    case DataKind::lowrank_matrix: return gen_lowrank_matrix(cfg).batch();
  }
  throw std::logic_error("unreachable data kind");
}

IdxArray read_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 4) throw FormatError("truncated IDX magic", buf.size());
  if (buf[0] != 0 || buf[1] != 0) throw FormatError("bad IDX magic: leading bytes must be zero", 0);
  IdxArray a;
  a.type = buf[2];
  const std::size_t width = idx_width(a.type, 2);
  const std::size_t ndims = buf[3];
  if (ndims == 0) throw FormatError("IDX file declares zero dimensions", 3);
  std::size_t at = 4;
  std::size_t count = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    if (at + 4 > buf.size()) throw FormatError("truncated IDX dimension header", buf.size());
    a.dims.push_back(read_be32(buf, at));
    count *= a.dims.back();
    at += 4;
  }
  if (buf.size() < at + count * width) {
    throw FormatError("truncated IDX payload: need " + std::to_string(count * width) + " bytes", buf.size());
  }
  if (buf.size() > at + count * width) throw FormatError("trailing bytes after IDX payload", at + count * width);
  a.values.resize(count);
  for (std::size_t k = 0; k < count; ++k) a.values[k] = idx_value(&buf[at + k * width], a.type);
  return a;
}

Batch load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, int n_classes) {
  const IdxArray img = read_idx(images);
  const IdxArray lab = read_idx(labels);
  if (img.dims.size() < 2) throw FormatError("image file needs at least 2 dimensions", 3);
  if (lab.dims.size() != 1) throw FormatError("label file must be 1-dimensional", 3);
  const std::size_t n = img.dims[0];
  if (lab.dims[0] != n) throw FormatError("image and label counts differ", 4);
  const std::size_t per = n == 0 ? 0 : img.values.size() / n;
  const double scale = img.type == 0x08 ? 1.0 / 255.0 : 1.0;

  Batch b;
  b.x = Matrix(static_cast<Eigen::Index>(per), static_cast<Eigen::Index>(n));
  b.y = Matrix::Zero(n_classes, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < per; ++k) b.x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = img.values[i * per + k] * scale;
    set_one_hot(b.y, static_cast<int>(i), std::lround(lab.values[i]), n_classes, 8 + i);
  }
  return b;
}

Batch load_csv(const std::filesystem::path& path, int dims, int n_classes, double scale) {
  if (dims < 1) throw ContractError("load_csv: dims must be >= 1");
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw FormatError("non-numeric CSV field '" + cell + "'", line_no);
      }
    }
    if (static_cast<int>(values.size()) != dims + 1) {
      throw FormatError("expected " + std::to_string(dims + 1) + " fields, got " + std::to_string(values.size()),
                        line_no);
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw FormatError("CSV file has no rows", 0);
  Batch b;
  const auto n = static_cast<Eigen::Index>(rows.size());
  b.x = Matrix(dims, n);
  b.y = Matrix::Zero(n_classes, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    set_one_hot(b.y, static_cast<int>(i), std::lround(r[0]), n_classes, static_cast<std::size_t>(i) + 1);
    for (int k = 0; k < dims; ++k) b.x(k, i) = r[static_cast<std::size_t>(k) + 1] * scale;
  }
  return b;
}

Batch sample_batch(const Batch& full, int size, Rng& rng) {
  full.validate();
  const int n = full.size();
  if (size < 1 || size > n) throw ContractError("sample_batch: size must be in [1, N]");
  if (size == n) return full;
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int k = 0; k < size; ++k) {
    const auto j = static_cast<std::size_t>(k) + rng.below(static_cast<std::uint64_t>(n - k));
    std::swap(idx[static_cast<std::size_t>(k)], idx[j]);
  }
  Batch b;
  b.x = Matrix(full.x.rows(), size);
  b.y = Matrix(full.y.rows(), size);
  if (full.masked()) b.mask = Matrix(full.mask.rows(), size);
  for (int k = 0; k < size; ++k) {
    const int c = idx[static_cast<std::size_t>(k)];
    b.x.col(k) = full.x.col(c);
    b.y.col(k) = full.y.col(c);
    if (full.masked()) b.mask.col(k) = full.mask.col(c);
  }
  return b;
}

}  // namespace pcs::data
