#pragma once

// Command-line front end: one experiment per invocation, configured by a JSON
// file plus a handful of flag overrides.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcs/experiments.hpp"

namespace pcs::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Invalid configuration. `path` is the dotted location of the bad field
/// ("training.eta", "arch.widths[2]").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path(path) {}
  std::string path;
};

inline const std::vector<std::string> kExperiments{"validate-energy", "spectra",  "escape",
                                                   "landscape",       "matcomp", "chain-analysis"};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<double> eta;
  std::optional<double> sigma;
};

struct RunConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  std::filesystem::path out = "runs";

  exp::TheoryConfig theory;
  exp::EscapeConfig escape;
  std::vector<exp::Trainer> trainers{exp::Trainer::bp, exp::Trainer::pc};
  exp::MatrixCompletionConfig matcomp;
  exp::SpectraConfig spectra;
  exp::LandscapeConfig landscape;
  exp::ChainAnalysisConfig chain;
};

/// Builds and validates the config for `experiment`. Sections absent from `j`
/// take per-experiment defaults; any key the experiment does not read is an
/// error. Throws ConfigError.
RunConfig parse_config(const std::string& experiment, const exp::json& j, const Overrides& ov = {});

/// The resolved config in the same schema parse_config reads, so that
/// parse_config(x, echo(c)) reproduces c.
exp::json echo(const RunConfig& cfg);

/// Runs the experiment and writes `{experiment}_{seed}.csv`, `.json` and SVG
/// plots under cfg.out. Returns the JSON summary.
exp::json run(const RunConfig& cfg);

/// Exit codes: 0 success, 1 runtime failure, 2 invalid config or usage.
int parse_and_dispatch(int argc, const char* const* argv);
int parse_and_dispatch(const std::vector<std::string>& args);

}  // namespace pcs::cli
