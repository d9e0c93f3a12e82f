#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "pcs/data.hpp"
#include "pcs/dln.hpp"

using namespace pcs;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "pcsaddle_data_tests";
  fs::create_directories(dir);
  return dir / name;
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::vector<std::uint8_t> idx_bytes(std::uint8_t type, const std::vector<std::uint32_t>& dims,
                                    const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> out{0, 0, type, static_cast<std::uint8_t>(dims.size())};
  for (auto d : dims) put_be32(out, d);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

data::DataConfig gauss(int d, int n) {
  data::DataConfig c;
  c.d_x = c.d_y = d;
  c.n_samples = n;
  return c;
}

}  // namespace

TEST(GaussRegression, MomentsAndTargets) {
  const Batch b = data::gen_gauss_regression(gauss(1, 10'000));
  EXPECT_NEAR(b.x.mean(), 1.0, 3 * 0.1 / std::sqrt(10'000.0));
  EXPECT_EQ((b.y + b.x).cwiseAbs().maxCoeff(), 0.0);
}

TEST(GaussRegression, FlippedDimension) {
  auto c = gauss(3, 50);
  c.flip_dims = {1};
  const Batch b = data::gen_gauss_regression(c);
  EXPECT_EQ((b.y.row(1) - b.x.row(1)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((b.y.row(0) + b.x.row(0)).cwiseAbs().maxCoeff(), 0.0);
  c.flip_dims = {3};
  EXPECT_THROW(data::gen_gauss_regression(c), ContractError);
}

TEST(GaussRegression, DeterministicPerSeed) {
  auto c = gauss(4, 20);
  c.seed = 5;
  EXPECT_EQ(data::generate(c).x, data::generate(c).x);
  auto d = c;
  d.seed = 6;
  EXPECT_NE(data::generate(c).x, data::generate(d).x);
}

TEST(BlobClassification, Examples) {
  data::DataConfig c;
  c.kind = data::DataKind::blob_classification;
  c.d_x = 12;
  c.d_y = 10;
  c.n_classes = 10;
  c.n_samples = 10;
  c.noise = 0.0;
  c.class_scale = 2.0;
  Batch b = data::gen_blob_classification(c);
  for (int i = 0; i < 10; ++i) {
    Vector mean = Vector::Zero(12);
    mean(i) = 2.0;
    EXPECT_EQ(Vector(b.x.col(i)), mean);
  }
  c.n_samples = 37;
  c.noise = 0.1;
  b = data::gen_blob_classification(c);
  EXPECT_LT((b.y.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-15);
  const Matrix syy = dln::covariances(b).syy;
  for (int k = 0; k < 10; ++k) {
    const double freq = (37 / 10 + (k < 37 % 10 ? 1 : 0)) / 37.0;
    EXPECT_NEAR(syy(k, k), freq, 1e-15);
    for (int j = 0; j < 10; ++j)
      if (j != k) {
        EXPECT_EQ(syy(k, j), 0.0);
      }
  }
  c.n_classes = 11;
  EXPECT_THROW(data::gen_blob_classification(c), ContractError);
}

TEST(LowRankMatrix, RankMaskAndBatch) {
  data::DataConfig c;
  c.kind = data::DataKind::lowrank_matrix;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    c.seed = seed;
    const auto lr = data::gen_lowrank_matrix(c);
    EXPECT_EQ(numerical_rank(lr.target, 1e-3), 3);
    const Vector s = singular_values(lr.target);
    EXPECT_GT(s(2), 1e-6);
    EXPECT_LT(s(3), 1e-10);
    EXPECT_EQ(lr.hidden, 20);
    EXPECT_EQ(static_cast<int>((lr.observed.array() == 0.0).count()), 20);
    const Batch b = lr.batch();
    EXPECT_EQ(b.x, Matrix(Matrix::Identity(10, 10)));
    EXPECT_EQ(b.y.cwiseProduct(b.mask), lr.target.cwiseProduct(lr.observed));
  }
  c.mask_fraction = 0.0;
  EXPECT_EQ(data::gen_lowrank_matrix(c).hidden, 0);
  c.mask_fraction = 1.0;
  EXPECT_THROW(data::gen_lowrank_matrix(c), ContractError);
}

TEST(ReadIdx, RoundTripTwoImages) {
  const fs::path img = scratch("img.idx");
  const fs::path lab = scratch("lab.idx");
  std::vector<std::uint8_t> pix(2 * 28 * 28);
  for (std::size_t i = 0; i < pix.size(); ++i) pix[i] = static_cast<std::uint8_t>(i % 256);
  write_bytes(img, idx_bytes(0x08, {2, 28, 28}, pix));
  write_bytes(lab, idx_bytes(0x08, {2}, {3, 7}));

  const auto arr = data::read_idx(img);
  EXPECT_EQ(arr.dims, (std::vector<std::uint32_t>{2, 28, 28}));
  EXPECT_EQ(arr.values.size(), pix.size());
  EXPECT_EQ(arr.values[300], 300 % 256);

  const Batch b = data::load_idx(img, lab, 10);
  EXPECT_EQ(b.x.rows(), 784);
  EXPECT_EQ(b.x.cols(), 2);
  EXPECT_DOUBLE_EQ(b.x(5, 1), ((784 + 5) % 256) / 255.0);
  EXPECT_GE(b.x.minCoeff(), 0.0);
  EXPECT_LE(b.x.maxCoeff(), 1.0);
  EXPECT_EQ(b.y(3, 0), 1.0);
  EXPECT_EQ(b.y(7, 1), 1.0);
  EXPECT_EQ(b.y.sum(), 2.0);
}

TEST(ReadIdx, WiderElementTypesAreBigEndian) {
  const fs::path p = scratch("i32.idx");
  std::vector<std::uint8_t> payload;
  put_be32(payload, 0x01020304u);
  put_be32(payload, static_cast<std::uint32_t>(-5));
  write_bytes(p, idx_bytes(0x0C, {2}, payload));
  const auto arr = data::read_idx(p);
  EXPECT_EQ(arr.values[0], 0x01020304);
  EXPECT_EQ(arr.values[1], -5);
}

TEST(ReadIdx, FormatErrorsCarryOffsets) {
  const fs::path p = scratch("bad.idx");
  write_bytes(p, {0, 1, 8, 1, 0, 0, 0, 1, 9});
  try {
    data::read_idx(p);
    FAIL() << "wrong magic accepted";
  } catch (const data::FormatError& e) {
    EXPECT_EQ(e.offset, 0u);
  }
  write_bytes(p, idx_bytes(0x08, {4}, {1, 2}));
  try {
    data::read_idx(p);
    FAIL() << "truncated payload accepted";
  } catch (const data::FormatError& e) {
    EXPECT_EQ(e.offset, 10u);
  }
  write_bytes(p, idx_bytes(0x08, {1}, {1, 2}));
  EXPECT_THROW(data::read_idx(p), data::FormatError);
  write_bytes(p, idx_bytes(0x07, {1}, {1}));
  EXPECT_THROW(data::read_idx(p), data::FormatError);
  write_bytes(p, {0, 0});
  EXPECT_THROW(data::read_idx(p), data::FormatError);
  EXPECT_THROW(data::read_idx(scratch("missing.idx")), data::FormatError);
}

TEST(LoadIdx, CountMismatchRejected) {
  write_bytes(scratch("i3.idx"), idx_bytes(0x08, {3, 2}, {0, 1, 2, 3, 4, 5}));
  write_bytes(scratch("l2.idx"), idx_bytes(0x08, {2}, {0, 1}));
  EXPECT_THROW(data::load_idx(scratch("i3.idx"), scratch("l2.idx")), data::FormatError);
  write_bytes(scratch("l3.idx"), idx_bytes(0x08, {3}, {0, 1, 12}));
  EXPECT_THROW(data::load_idx(scratch("i3.idx"), scratch("l3.idx")), data::FormatError);
}

TEST(LoadCsv, LabelFirstNoHeader) {
  const fs::path p = scratch("d.csv");
  {
    std::ofstream out(p);
    out << "2,0,255,51\n0,255,0,0\n";
  }
  const Batch b = data::load_csv(p, 3, 4);
  EXPECT_EQ(b.x.cols(), 2);
  EXPECT_DOUBLE_EQ(b.x(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(b.x(2, 0), 0.2);
  EXPECT_EQ(b.y(2, 0), 1.0);
  EXPECT_EQ(b.y(0, 1), 1.0);

  {
    std::ofstream out(p);
    out << "1,2,3\n1,2\n";
  }
  EXPECT_THROW(data::load_csv(p, 2, 4), data::FormatError);
  {
    std::ofstream out(p);
    out << "label,a,b\n";
  }
  EXPECT_THROW(data::load_csv(p, 2, 4), data::FormatError);
}

TEST(SampleBatch, DistinctColumnsDeterministic) {
  const Batch full = data::gen_gauss_regression(gauss(2, 30));
  Rng r1(3), r2(3);
  const Batch a = data::sample_batch(full, 10, r1);
  const Batch b = data::sample_batch(full, 10, r2);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.size(), 10);
  std::set<double> firsts;
  for (int i = 0; i < 10; ++i) firsts.insert(a.x(0, i));
  EXPECT_EQ(firsts.size(), 10u);
  Rng r3(1);
  EXPECT_EQ(data::sample_batch(full, 30, r3).x, full.x);
}

TEST(DataConfig, KindStrings) {
  for (auto k : {data::DataKind::gauss_regression, data::DataKind::blob_classification, data::DataKind::lowrank_matrix})
    EXPECT_EQ(data::data_kind_from_string(data::to_string(k)), k);
  EXPECT_THROW(data::data_kind_from_string("mnist"), std::invalid_argument);
}
