#pragma once

#include <string>

#include "dissip/box.hpp"
#include "dissip/graph.hpp"

namespace dissip {

struct AreaConfig {
  int grid = 200;
  double x1_lo = -3, x1_hi = 3;
  double x2_lo = -9, x2_hi = 9;
  int descent_steps = 50;
  int starts = 5;  // start 0 is the controller-state origin
};

struct AreaResult {
  double area = 0;
  int inside_cells = 0;
  int grid = 0;
  double rho = 0;
};

// x' p x as a graph over slot "x", built on its own store
ComputeGraph quadratic_level_graph(const Mat& p);

// Area of the plant-plane projection {x_p : min over controller states of
// V(x_p, x_k) <= rho}, measured by counting grid cells whose projected
// minimum (projected gradient descent, multistart) clears the level. With
// `boundary_csv` set, cells bordering the in/out transition are listed as
// x1,x2 centers.
AreaResult project_area(const ComputeGraph& v, const ParamStore& store,
                        const IntervalBox& xk_box, double rho,
                        const AreaConfig& cfg, int workers,
                        const std::string& boundary_csv = "");

}  // namespace dissip
