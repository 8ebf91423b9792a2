#pragma once

#include "ntk_geom/flow.hpp"

#include <string>
#include <vector>

namespace ntk_geom {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// One panel of line plots; `log_y` plots log10 of positive values.
std::string svg_panel(const std::string& title, const std::vector<Series>& series, bool log_y, double width,
                      double height, double x_offset, double y_offset);

/// Loss curve and |delta_i(t) - delta_i(0)| curves, stacked.
std::string trajectory_svg(const Trajectory& traj);

}  // namespace ntk_geom
