#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pcs/cli.hpp"

using namespace pcs;
using namespace pcs::cli;
namespace fs = std::filesystem;

namespace {

fs::path dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "pcsaddle_cli_tests" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write_config(const fs::path& d, const std::string& body) {
  const fs::path p = d / "config.json";
  std::ofstream(p) << body;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

const char* kSmallEnergy = R"({
  "arch": {"widths": [3, 4, 4, 3]},
  "data": {"d_x": 3, "d_y": 3, "n_samples": 8},
  "solver": {"mode": "exact_linear"},
  "training": {"steps": 5, "eta": 0.01}
})";

}  // namespace

TEST(Cli, ValidateEnergyProducesCsvJsonAndPlots) {
  const fs::path d = dir("ve");
  const fs::path cfg = write_config(d, kSmallEnergy);
  const fs::path out = d / "runs";
  ASSERT_EQ(parse_and_dispatch({"validate-energy", "--config", cfg.string(), "--out", out.string()}), kExitOk);
  EXPECT_TRUE(fs::exists(out / "validate-energy_0.csv"));
  EXPECT_TRUE(fs::exists(out / "validate-energy_0.json"));
  EXPECT_TRUE(fs::exists(out / "validate-energy_0_energy.svg"));

  const std::string csv = slurp(out / "validate-energy_0.csv");
  EXPECT_EQ(lines(csv), 1 + 6);
  const auto summary = exp::json::parse(slurp(out / "validate-energy_0.json"));
  EXPECT_EQ(summary.at("summary").at("steps").get<int>(), 6);
  EXPECT_LT(summary.at("summary").at("max_rel_gap").get<double>(), 1e-8);

  // The config echo re-parses into the same config.
  const exp::json echoed = summary.at("config");
  EXPECT_EQ(echo(parse_config("validate-energy", echoed)), echoed);
  for (const auto& e : fs::directory_iterator(out)) EXPECT_EQ(e.path().string().find(".tmp."), std::string::npos);
}

TEST(Cli, SameSeedTwiceGivesIdenticalOutputs) {
  const fs::path d = dir("det");
  const fs::path cfg = write_config(d, R"({"training": {"max_steps": 40}})");
  std::string first_csv, first_json;
  for (int run = 0; run < 2; ++run) {
    ASSERT_EQ(parse_and_dispatch({"escape", "--config", cfg.string(), "--seed", "7", "--out", (d / "o").string()}),
              kExitOk);
    const std::string csv = slurp(d / "o" / "escape_7.csv");
    const std::string js = slurp(d / "o" / "escape_7.json");
    if (run == 0) {
      first_csv = csv;
      first_json = js;
    } else {
      EXPECT_EQ(csv, first_csv);
      EXPECT_EQ(js, first_json);
    }
  }
  EXPECT_EQ(lines(first_csv), 1 + 2 * 40);
}

TEST(Cli, OverridesApply) {
  const fs::path d = dir("ov");
  const fs::path cfg = write_config(d, kSmallEnergy);
  ASSERT_EQ(parse_and_dispatch({"validate-energy", "--config", cfg.string(), "--steps", "2", "--eta", "0.5", "--seed",
                                "3", "--out", d.string()}),
            kExitOk);
  const auto j = exp::json::parse(slurp(d / "validate-energy_3.json"));
  EXPECT_EQ(j.at("config").at("training").at("steps").get<int>(), 2);
  EXPECT_EQ(j.at("config").at("training").at("eta").get<double>(), 0.5);
  EXPECT_EQ(j.at("config").at("data").at("seed").get<int>(), 3);
}

TEST(Cli, MissingConfigFileIsConfigError) {
  const fs::path d = dir("missing");
  EXPECT_EQ(parse_and_dispatch({"spectra", "--config", (d / "nope.json").string(), "--out", d.string()}), kExitConfig);
  EXPECT_EQ(parse_and_dispatch({"spectra", "--out", d.string()}), kExitConfig);
  EXPECT_EQ(parse_and_dispatch({"warp-drive", "--config", "x"}), kExitConfig);
}

TEST(Cli, InvalidConfigsNameTheField) {
  auto path_of = [](const std::string& experiment, const std::string& body) {
    try {
      parse_config(experiment, exp::json::parse(body));
    } catch (const ConfigError& e) {
      return e.path;
    }
    return std::string("<accepted>");
  };
  EXPECT_EQ(path_of("escape", R"({"training": {"etaa": 1}})"), "training.etaa");
  EXPECT_EQ(path_of("escape", R"({"bogus": 1})"), "bogus");
  EXPECT_EQ(path_of("escape", R"({"arch": {"widths": [1, 0, 1]}})"), "arch.widths[1]");
  EXPECT_EQ(path_of("escape", R"({"arch": {"widths": [2, 3, 1]}})"), "arch.widths[0]");
  EXPECT_EQ(path_of("escape", R"({"training": {"sigma": 0}})"), "training.sigma");
  EXPECT_EQ(path_of("escape", R"({"training": {"trainers": ["bp", "sgd"]}})"), "training.trainers[1]");
  EXPECT_EQ(path_of("spectra", R"({"solver": {}})"), "solver");
  EXPECT_EQ(path_of("validate-energy", R"({"arch": {"widths": [16,16,16], "activation": "tanh"}})"),
            "arch.activation");
  EXPECT_EQ(path_of("validate-energy", R"({"solver": {"mode": "rk4"}})"), "solver.mode");
  EXPECT_EQ(path_of("validate-energy", R"({"solver": {"dt": -1}})"), "solver");
  EXPECT_EQ(path_of("matcomp", R"({"data": {"kind": "gauss_regression"}})"), "data.kind");
  EXPECT_EQ(path_of("landscape", R"({"training": {"resolution": "30"}})"), "training.resolution");
  EXPECT_EQ(path_of("escape", R"({"experiment": "spectra"})"), "experiment");
  EXPECT_EQ(path_of("escape", R"([1, 2])"), "<root>");
  EXPECT_EQ(path_of("escape", "{}"), "<accepted>");

  const fs::path d = dir("invalid");
  const fs::path cfg = write_config(d, R"({"training": {"etaa": 1}})");
  EXPECT_EQ(parse_and_dispatch({"escape", "--config", cfg.string(), "--out", d.string()}), kExitConfig);
  EXPECT_EQ(parse_and_dispatch({"spectra", "--config", write_config(d, "{}").string(), "--steps", "3"}), kExitConfig);
  EXPECT_EQ(parse_and_dispatch({"escape", "--config", write_config(d, "{not json").string()}), kExitConfig);
}

TEST(Cli, RuntimeFailureExitsOneWithoutPartialFiles) {
  const fs::path d = dir("fail");
  const fs::path cfg = write_config(d, R"({"training": {"eta": 1e300, "sigma": 1000, "max_steps": 50}})");
  const fs::path out = d / "o";
  EXPECT_EQ(parse_and_dispatch({"escape", "--config", cfg.string(), "--out", out.string()}), kExitRuntime);
  EXPECT_FALSE(fs::exists(out / "escape_0.csv"));
  EXPECT_FALSE(fs::exists(out / "escape_0.json"));
}

TEST(Cli, EveryExperimentEchoRoundTrips) {
  for (const auto& e : kExperiments) {
    const RunConfig c = parse_config(e, exp::json::object());
    const exp::json j = echo(c);
    EXPECT_EQ(echo(parse_config(e, j)), j) << e;
  }
}

TEST(Cli, SpectraLandscapeAndChainRun) {
  const fs::path d = dir("misc");
  const fs::path cfg = write_config(d, "{}");
  EXPECT_EQ(parse_and_dispatch({"spectra", "--config", cfg.string(), "--out", d.string()}), kExitOk);
  EXPECT_TRUE(fs::exists(d / "spectra_0_spectrum.svg"));
  const fs::path lc = write_config(d, R"({"training": {"resolution": 6}})");
  EXPECT_EQ(parse_and_dispatch({"landscape", "--config", lc.string(), "--out", d.string()}), kExitOk);
  EXPECT_EQ(lines(slurp(d / "landscape_0.csv")), 1 + 36);
  const fs::path cc = write_config(d, R"({"training": {"instances": 3, "max_hidden": 2, "minima_instances": 2}})");
  EXPECT_EQ(parse_and_dispatch({"chain-analysis", "--config", cc.string(), "--out", d.string()}), kExitOk);
  EXPECT_TRUE(fs::exists(d / "chain-analysis_0.json"));
}

TEST(Cli, ShippedConfigsParse) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(PCS_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    const exp::json j = exp::json::parse(slurp(e.path()));
    EXPECT_NO_THROW(parse_config(j.at("experiment").get<std::string>(), j)) << e.path();
    ++n;
  }
  EXPECT_GE(n, 6);
}
