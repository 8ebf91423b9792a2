#include "ntk_geom/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ntk_geom {

namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string svg_panel(const std::string& title, const std::vector<Series>& series, bool log_y, double width,
                      double height, double x_offset, double y_offset) {
  const double left = 70, right = 20, top = 30, bottom = 35;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (log_y && !(s.y[i] > 0.0)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return x_offset + left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return y_offset + top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream os;
  os.precision(6);
  os << "<rect x='" << x_offset + left << "' y='" << y_offset + top << "' width='" << pw << "' height='" << ph
     << "' fill='none' stroke='#444'/>\n";
  os << "<text x='" << x_offset + left << "' y='" << y_offset + 20 << "' font-size='14'>" << escape(title)
     << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = y0 + (y1 - y0) * i / 4.0;
    const double xv = x0 + (x1 - x0) * i / 4.0;
    os << "<text x='" << x_offset + 5 << "' y='" << py(yv) + 4 << "' font-size='10'>"
       << (log_y ? "1e" : "") << yv << "</text>\n";
    os << "<text x='" << px(xv) - 10 << "' y='" << y_offset + height - 12 << "' font-size='10'>" << xv << "</text>\n";
  }
  std::size_t c = 0;
  for (const auto& s : series) {
    const char* color = kColors[c % (sizeof kColors / sizeof kColors[0])];
    os << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (log_y && !(s.y[i] > 0.0)) continue;
      os << px(s.x[i]) << ',' << py(ty(s.y[i])) << ' ';
    }
    os << "'/>\n";
    os << "<text x='" << x_offset + width - right - 120 << "' y='" << y_offset + top + 15 + 14 * static_cast<double>(c)
       << "' font-size='11' fill='" << color << "'>" << escape(s.label) << "</text>\n";
    ++c;
  }
  return os.str();
}

std::string trajectory_svg(const Trajectory& traj) {
  const double w = 720, h = 300;
  Series loss{"loss", traj.times, traj.losses};
  std::vector<Series> drift;
  const std::size_t nd = traj.deltas.empty() ? 0 : traj.deltas.front().size();
  for (std::size_t i = 0; i < nd; ++i) {
    Series s{"|delta_" + std::to_string(i + 1) + "(t) - delta_" + std::to_string(i + 1) + "(0)|", traj.times, {}};
    for (const auto& d : traj.deltas) s.y.push_back(std::abs(d[i] - traj.deltas.front()[i]));
    drift.push_back(std::move(s));
  }
  std::ostringstream os;
  os << "<?xml version='1.0' encoding='UTF-8'?>\n";
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << 2 * h << "' font-family='sans-serif'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << svg_panel(traj.space + " flow: loss (log10)", {loss}, true, w, h, 0, 0);
  os << svg_panel("invariant drift (log10)", drift, true, w, h, 0, h);
  os << "</svg>\n";
  return os.str();
}

}  // namespace ntk_geom
