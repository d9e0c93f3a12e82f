#include "pcs/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "pcs/experiments.hpp"

namespace pcs::plot {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  [[nodiscard]] bool empty() const { return !(lo <= hi); }
  void pad() {
    if (hi - lo < 1e-300) {
      const double d = std::max(std::abs(lo), 1.0) * 0.05;
      lo -= d;
      hi += d;
    }
  }
};

void open_svg(std::ostringstream& o, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
    << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
    << "</text>\n";
}

void axes(std::ostringstream& o, const Range& xr, const Range& yr, const std::string& xl, const std::string& yl,
          bool log_y) {
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  o << "<g class=\"axes\" stroke=\"black\" fill=\"none\">\n";
  o << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x1) << "\" y2=\"" << num(y0) << "\"/>\n";
  o << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x0) << "\" y2=\"" << num(y1) << "\"/>\n";
  o << "</g>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = k / 4.0;
    const double xv = xr.lo + fx * (xr.hi - xr.lo);
    const double px = x0 + fx * (x1 - x0);
    o << "<text x=\"" << num(px) << "\" y=\"" << num(y0 + 16) << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
    const double yv = yr.lo + fx * (yr.hi - yr.lo);
    const double py = y0 - fx * (y0 - y1);
    o << "<text x=\"" << num(x0 - 6) << "\" y=\"" << num(py + 4) << "\" text-anchor=\"end\">"
      << num(log_y ? std::pow(10.0, yv) : yv) << "</text>\n";
  }
  o << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(kHeight - 12) << "\" text-anchor=\"middle\">"
    << escape(xl) << "</text>\n";
  o << "<text x=\"16\" y=\"" << num((y0 + y1) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << num((y0 + y1) / 2) << ")\">" << escape(yl) << (log_y ? " (log)" : "") << "</text>\n";
}

}  // namespace

std::string line_chart(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                       const std::string& y_label, bool log_y) {
  Range xr;
  Range yr;
  std::vector<std::vector<std::pair<double, double>>> pts(series.size());
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& sr = series[s];
    if (sr.x.size() != sr.y.size()) throw ShapeError("line_chart: x and y lengths differ in '" + sr.label + "'");
    for (std::size_t k = 0; k < sr.x.size(); ++k) {
      double y = sr.y[k];
      if (!std::isfinite(y) || !std::isfinite(sr.x[k])) continue;
      if (log_y) {
        if (y <= 0.0) continue;
        y = std::log10(y);
      }
      pts[s].emplace_back(sr.x[k], y);
      xr.add(sr.x[k]);
      yr.add(y);
    }
  }
  if (xr.empty()) throw ContractError("line_chart: no plottable points");
  xr.pad();
  yr.pad();

  std::ostringstream o;
  open_svg(o, title);
  axes(o, xr, yr, x_label, y_label, log_y);
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  for (std::size_t s = 0; s < series.size(); ++s) {
    if (pts[s].empty()) continue;
    const char* colour = kPalette[s % std::size(kPalette)];
    o << "<polyline class=\"series\" fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < pts[s].size(); ++k) {
      const double px = x0 + (pts[s][k].first - xr.lo) / (xr.hi - xr.lo) * (x1 - x0);
      const double py = y0 - (pts[s][k].second - yr.lo) / (yr.hi - yr.lo) * (y0 - y1);
      o << (k ? " " : "") << num(px) << ',' << num(py);
    }
    o << "\"/>\n";
    o << "<text x=\"" << num(x1 - 4) << "\" y=\"" << num(y1 + 14 + 14.0 * static_cast<double>(s))
      << "\" text-anchor=\"end\" fill=\"" << colour << "\">" << escape(series[s].label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string eigenspectrum_chart(const std::vector<Spectrum>& spectra, const std::string& title) {
  Range xr;
  for (const auto& sp : spectra)
    for (Eigen::Index i = 0; i < sp.eigenvalues.size(); ++i) xr.add(sp.eigenvalues(i));
  if (xr.empty()) throw ContractError("eigenspectrum_chart: no eigenvalues");
  xr.add(0.0);
  xr.pad();
  const double span = xr.hi - xr.lo;
  xr.lo -= 0.05 * span;
  xr.hi += 0.05 * span;

  std::ostringstream o;
  open_svg(o, title);
  const double x0 = kLeft + 60;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  auto px = [&](double v) { return x0 + (v - xr.lo) / (xr.hi - xr.lo) * (x1 - x0); };
  o << "<line class=\"zero\" x1=\"" << num(px(0.0)) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(px(0.0))
    << "\" y2=\"" << num(y0) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  o << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x1) << "\" y2=\"" << num(y0)
    << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = xr.lo + k / 4.0 * (xr.hi - xr.lo);
    o << "<text x=\"" << num(px(v)) << "\" y=\"" << num(y0 + 16) << "\" text-anchor=\"middle\">" << num(v)
      << "</text>\n";
  }
  o << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(kHeight - 12) << "\" text-anchor=\"middle\">eigenvalue</text>\n";
  const double row_h = (y0 - y1) / static_cast<double>(std::max<std::size_t>(spectra.size(), 1));
  for (std::size_t s = 0; s < spectra.size(); ++s) {
    const double cy = y1 + (static_cast<double>(s) + 0.5) * row_h;
    const char* colour = kPalette[s % std::size(kPalette)];
    o << "<text x=\"" << num(x0 - 8) << "\" y=\"" << num(cy + 4) << "\" text-anchor=\"end\">" << escape(spectra[s].label)
      << "</text>\n";
    for (Eigen::Index i = 0; i < spectra[s].eigenvalues.size(); ++i) {
      const double x = px(spectra[s].eigenvalues(i));
      o << "<line class=\"tick\" x1=\"" << num(x) << "\" y1=\"" << num(cy - 0.3 * row_h) << "\" x2=\"" << num(x)
        << "\" y2=\"" << num(cy + 0.3 * row_h) << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

std::string heatmap(const landscape::LandscapeGrid& grid, const std::string& title) {
  const Eigen::Index n = grid.values.rows();
  const Eigen::Index m = grid.values.cols();
  if (n == 0 || m == 0) throw ContractError("heatmap: empty grid");
  const double lo = grid.values.minCoeff();
  const double hi = grid.values.maxCoeff();
  const double span = hi - lo > 0.0 ? hi - lo : 1.0;

  std::ostringstream o;
  open_svg(o, title);
  const double x0 = kLeft;
  const double y1 = kTop;
  const double side = std::min(kWidth - kLeft - kRight - 80, kHeight - kTop - kBottom);
  const double cw = side / static_cast<double>(n);
  const double ch = side / static_cast<double>(m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double t = (grid.values(i, j) - lo) / span;
      // Blue (low) to yellow (high).
      const int r = static_cast<int>(std::lround(40 + 215 * t));
      const int g = static_cast<int>(std::lround(60 + 170 * t));
      const int b = static_cast<int>(std::lround(160 - 120 * t));
      // α runs along x, β along y (upwards).
      o << "<rect class=\"cell\" x=\"" << num(x0 + static_cast<double>(i) * cw) << "\" y=\""
        << num(y1 + static_cast<double>(m - 1 - j) * ch) << "\" width=\"" << num(cw) << "\" height=\"" << num(ch)
        << "\" fill=\"rgb(" << r << ',' << g << ',' << b << ")\"/>\n";
    }
  }
  const double y0 = y1 + side;
  o << "<text x=\"" << num(x0 + side / 2) << "\" y=\"" << num(y0 + 30) << "\" text-anchor=\"middle\">alpha (v_min) in ["
    << num(grid.alphas(0)) << ", " << num(grid.alphas(n - 1)) << "]</text>\n";
  o << "<text x=\"" << num(x0 - 10) << "\" y=\"" << num(y1 + side / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 "
    << num(x0 - 10) << ' ' << num(y1 + side / 2) << ")\">beta (v_max)</text>\n";
  o << "<text x=\"" << num(x0 + side + 10) << "\" y=\"" << num(y1 + 10) << "\">max " << num(hi) << "</text>\n";
  o << "<text x=\"" << num(x0 + side + 10) << "\" y=\"" << num(y0) << "\">min " << num(lo) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

void emit_svg_plot(const std::vector<Series>& series, PlotKind kind, const std::filesystem::path& path,
                   const std::string& title, bool log_y) {
  if (series.empty()) throw ContractError("emit_svg_plot: no series");
  std::string y_label;
  switch (kind) {
    case PlotKind::loss_curve: y_label = "loss"; break;
    case PlotKind::grad_norm: y_label = "gradient norm"; break;
    default: throw ContractError("emit_svg_plot: series data needs loss-curve or grad-norm");
  }
  exp::write_atomic(path, line_chart(series, title, "step", y_label, log_y));
}

void emit_svg_plot(const std::vector<Spectrum>& spectra, const std::filesystem::path& path, const std::string& title) {
  if (spectra.empty()) throw ContractError("emit_svg_plot: no spectra");
  exp::write_atomic(path, eigenspectrum_chart(spectra, title));
}

void emit_svg_plot(const landscape::LandscapeGrid& grid, const std::filesystem::path& path, const std::string& title) {
  exp::write_atomic(path, heatmap(grid, title));
}

}  // namespace pcs::plot
