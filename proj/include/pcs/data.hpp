#pragma once

// Synthetic datasets for the toy setups and optional IDX / CSV loaders.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcs/network.hpp"
#include "pcs/rng.hpp"

namespace pcs::data {

/// Malformed input file; `offset` is the byte (IDX) or line (CSV) position.
struct FormatError : std::runtime_error {
  FormatError(const std::string& what, std::size_t where)
      : std::runtime_error(what + " (at offset " + std::to_string(where) + ")"), offset(where) {}
  std::size_t offset;
};

enum class DataKind { gauss_regression, blob_classification, lowrank_matrix };

std::string to_string(DataKind k);
DataKind data_kind_from_string(const std::string& name);

struct DataConfig {
  DataKind kind = DataKind::gauss_regression;
  int d_x = 3;
  int d_y = 3;
  int n_samples = 64;
  // gauss_regression: x ~ N(mean, stddev²) entrywise, y = −x except on flip_dims where y = x.
  double mean = 1.0;
  double stddev = 0.1;
  std::vector<int> flip_dims;
  // blob_classification: class c centred at class_scale·e_c with isotropic noise.
  int n_classes = 10;
  double class_scale = 1.0;
  double noise = 0.1;
  // lowrank_matrix
  int rows = 10;
  int cols = 10;
  int rank = 3;
  double mask_fraction = 0.2;
  std::uint64_t seed = 0;

  /// Throws ContractError on an inconsistent config.
  void validate() const;
};

Batch gen_gauss_regression(const DataConfig& cfg);

/// Labels cycle through the classes (sample i has class i mod K), so class
/// frequencies are as even as N allows.
Batch gen_blob_classification(const DataConfig& cfg);

struct LowRankProblem {
  Matrix target;    // rows × cols, U Vᵀ
  Matrix observed;  // 1 where visible, 0 where hidden
  int hidden = 0;

  /// x = I_cols, y = target, mask = observed: column j of the network map
  /// should reproduce column j of the target.
  [[nodiscard]] Batch batch() const;
};

/// Exactly ⌊mask_fraction·rows·cols⌋ entries hidden, uniformly without
/// replacement.
LowRankProblem gen_lowrank_matrix(const DataConfig& cfg);

Batch generate(const DataConfig& cfg);

/// A decoded IDX file: big-endian header, dims, then the payload as doubles.
struct IdxArray {
  std::uint8_t type = 0x08;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
};

IdxArray read_idx(const std::filesystem::path& path);

/// MNIST-style pair: images flattened to columns and scaled by 1/255 (unsigned
/// bytes) into [0, 1], labels one-hot over n_classes.
Batch load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, int n_classes = 10);

/// Header-less numeric rows, label first, then `dims` feature values each
/// multiplied by `scale`.
Batch load_csv(const std::filesystem::path& path, int dims, int n_classes = 10, double scale = 1.0 / 255.0);

/// Mini-batch of `size` distinct columns drawn without replacement.
Batch sample_batch(const Batch& full, int size, Rng& rng);

}  // namespace pcs::data
