#pragma once

// Desk-scale training runs and spectral checks, with CSV step logs and JSON
// summaries. Every run is a pure function of its config and seed.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcs/data.hpp"
#include "pcs/landscape.hpp"
#include "pcs/network.hpp"
#include "pcs/pcn.hpp"

namespace pcs::exp {

using json = nlohmann::ordered_json;

inline constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();

struct StepRecord {
  int step = 0;
  double train_loss = 0.0;
  double energy = kAbsent;         // PC energy at the numerical equilibrium
  double energy_theory = kAbsent;  // closed-form F* at the same parameters
  double rel_gap = kAbsent;
  double grad_norm = 0.0;
  int product_rank = -1;  // −1 when not tracked
  int inference_steps = -1;
};

struct TrainLog {
  std::string experiment;
  std::string trainer;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;

  /// One header line plus one row per record; doubles at 17 significant
  /// digits, absent values as empty fields.
  [[nodiscard]] std::string to_csv() const;
};

enum class Trainer { bp, pc };
enum class InitKind { origin, zero_rank };

std::string to_string(Trainer t);
std::string to_string(InitKind k);
Trainer trainer_from_string(const std::string& s);
InitKind init_kind_from_string(const std::string& s);

/// First step whose train_loss ≤ factor·plateau_loss, or none.
std::optional<int> escape_step(const TrainLog& log, double plateau_loss, double factor = 0.5);

// ---------------------------------------------------------------- validation

struct TheoryConfig {
  ArchSpec arch;
  data::DataConfig data;
  pc::SolverConfig solver;
  int steps = 200;
  double eta = 1e-3;
  double init_gain = 1.0;
  std::uint64_t seed = 0;
};

struct TheoryResult {
  TrainLog log;
  double max_rel_gap = 0.0;
  double max_final_grad = 0.0;
};

/// PC training where each step compares the energy at the solver's
/// equilibrium with the closed-form F*.
TheoryResult run_theory_validation(const TheoryConfig& cfg);

// -------------------------------------------------------------------- escape

struct EscapeConfig {
  ArchSpec arch;
  data::DataConfig data;
  pc::SolverConfig solver;
  InitKind init = InitKind::origin;
  Trainer trainer = Trainer::bp;
  double sigma = 5e-2;
  double eta = 0.4;
  int max_steps = 10'000;
  int batch_size = 64;
  double escape_factor = 0.5;
  /// Stop once the loss falls below this fraction of the plateau (0 = never).
  double stop_factor = 0.0;
  std::uint64_t seed = 0;
};

struct EscapeReport {
  double plateau_loss = 0.0;
  std::optional<int> escape_step;
  std::string criterion;
  double max_rel_loss_change = 0.0;  // max |L_t − L_0| / L_0 over the run
  double max_grad_norm = 0.0;
  double min_grad_norm = 0.0;
};

struct EscapeResult {
  TrainLog log;
  EscapeReport report;
};

/// SGD from a point near the origin (or a zero-rank saddle). Mini-batches and
/// the initial draw depend only on the seed, so BP and PC see the same data.
EscapeResult run_escape(const EscapeConfig& cfg);

// --------------------------------------------------------- matrix completion

struct MatrixCompletionConfig {
  data::DataConfig data;  // lowrank_matrix
  int width = 100;
  int hidden = 3;
  double sigma = 5e-3;
  double eta = 1e-2;
  int bp_max_steps = 150'000;
  double bp_stop_loss = 1e-10;
  int pc_max_steps = 50'000;
  int plateau_window = 50;
  double plateau_rel_change = 1e-4;
  double rank_tol = 1e-3;  // relative to σ_max(target)
  int checkpoint_every = 1000;
  std::vector<int> pc_ranks{0, 1, 2};
  std::uint64_t seed = 0;
};

struct Plateau {
  int rank = 0;
  int start = 0;
  int end = 0;  // inclusive
  int snapshot_step = 0;
  double snapshot_loss = 0.0;
  std::optional<int> bp_steps_to_half;
  std::optional<int> pc_steps_to_half;
  double bp_grad_at_snapshot = 0.0;
  double pc_min_grad = 0.0;
};

struct MatrixCompletionResult {
  TrainLog bp_log;
  std::vector<TrainLog> pc_logs;
  std::vector<Plateau> plateaus;
  std::vector<int> rank_sequence;  // distinct ranks in the order visited
  bool rank_monotone = true;
};

MatrixCompletionResult run_matrix_completion(const MatrixCompletionConfig& cfg);

// ------------------------------------------------------------------- spectra

struct SpectraConfig {
  ArchSpec arch;
  data::DataConfig data;
  InitKind point = InitKind::origin;
  std::uint64_t seed = 0;
};

struct SpectraResult {
  Vector theory_eigs_energy;
  Vector theory_eigs_loss;
  Vector numeric_eigs_energy;
  Vector numeric_eigs_loss;
  landscape::SaddleReport energy_report;
  landscape::SaddleReport loss_report;
  double max_entry_gap_energy = 0.0;  // max |H_theory − H_numeric|
  double max_entry_gap_loss = 0.0;
};

/// Theory: origin_hessian_* at the origin, exact Hessians elsewhere. Numeric:
/// finite differences of the loss and of the energy at exact equilibrium.
SpectraResult run_spectra(const SpectraConfig& cfg);

// ----------------------------------------------------------------- landscape

enum class Surface { loss, energy };

struct LandscapeConfig {
  ArchSpec arch;
  data::DataConfig data;
  pc::SolverConfig solver;  // energy: inference re-run from feedforward per point
  InitKind point = InitKind::origin;
  Surface surface = Surface::energy;
  int resolution = 30;
  double half_range = 1.0;
  std::uint64_t seed = 0;
};

landscape::LandscapeGrid run_landscape(const LandscapeConfig& cfg);

// ------------------------------------------------------------ chain analysis

struct ChainAnalysisConfig {
  int instances = 100;
  int min_hidden = 1;
  int max_hidden = 6;
  int minima_instances = 50;
  int minima_max_hidden = 4;
  std::uint64_t seed = 0;
};

struct ChainAnalysisResult {
  double max_gap_loss_hessian = 0.0;    // chain formulas vs width-1 matrix code
  double max_gap_energy_hessian = 0.0;
  double max_gap_energy = 0.0;
  double max_gap_minima = 0.0;          // |H_F* − H_L/s| at perfect fit
  std::vector<Vector> origin_spectra;   // energy Hessian at θ = 0, x = 1, y = −1, per H
};

ChainAnalysisResult run_chain_analysis(const ChainAnalysisConfig& cfg);

// ------------------------------------------------------------------- output

/// Writes `content` to a sibling temp file, then renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

json to_json(const ArchSpec& arch);
json to_json(const data::DataConfig& cfg);
json to_json(const pc::SolverConfig& cfg);
json to_json(const Vector& v);
json to_json(const EscapeReport& r);
json to_json(const Plateau& p);
json to_json(const landscape::SaddleReport& r);

/// Several logs in one table, with a leading `run` column holding each
/// log's trainer tag.
std::string logs_to_csv(const std::vector<TrainLog>& logs);

std::string grid_to_csv(const landscape::LandscapeGrid& g);

}  // namespace pcs::exp
