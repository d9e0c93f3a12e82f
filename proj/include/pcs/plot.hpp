#pragma once

// Standalone SVG renderings of training curves, eigenspectra and landscape
// grids. Output is a deterministic function of the input.

#include <filesystem>
#include <string>
#include <vector>

#include "pcs/landscape.hpp"
#include "pcs/linalg.hpp"

namespace pcs::plot {

enum class PlotKind { loss_curve, grad_norm, eigenspectrum, landscape_heatmap };

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Spectrum {
  std::string label;
  Vector eigenvalues;
};

/// One <polyline> per series. With log_y, non-positive values are dropped.
std::string line_chart(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                       const std::string& y_label, bool log_y);

/// One row per spectrum, one tick per eigenvalue, and a vertical rule at 0.
std::string eigenspectrum_chart(const std::vector<Spectrum>& spectra, const std::string& title);

/// One <rect class="cell"> per grid value, colour-mapped between min and max.
std::string heatmap(const landscape::LandscapeGrid& grid, const std::string& title);

// Render and write atomically. Throw ContractError on empty input.
void emit_svg_plot(const std::vector<Series>& series, PlotKind kind, const std::filesystem::path& path,
                   const std::string& title, bool log_y = false);
void emit_svg_plot(const std::vector<Spectrum>& spectra, const std::filesystem::path& path, const std::string& title);
void emit_svg_plot(const landscape::LandscapeGrid& grid, const std::filesystem::path& path, const std::string& title);

}  // namespace pcs::plot
