#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dissip/certificate.hpp"
#include "dissip/system.hpp"

namespace dissip {

// Affine semidefinite feasibility data: block(theta) = base + sum theta_i g[i]
// must be PSD, scalar(theta) = base + coef' theta must be nonnegative, all
// over theta >= 0. Multipliers are shared across blocks only through the
// common theta vector.
struct LmiBlock {
  std::string name;
  Mat base;
  std::vector<Mat> g;  // aligned with theta, empty matrices mean zero
};

struct LmiScalar {
  std::string name;
  double base = 0;
  Vec coef;
};

struct LmiProblem {
  int n_theta = 0;
  std::vector<LmiBlock> blocks;
  std::vector<LmiScalar> scalars;
};

struct AscentConfig {
  int iters = 2000;
  int starts = 8;
  double init_step = 0.25;
  double stop_at = 1e-8;  // early exit once the scaled objective clears this
  std::uint64_t seed = 0;
};

struct AscentResult {
  Vec theta;
  double objective = 0;  // min over blocks of lambda_min / (1 + |base|_F)
};

// Projected supergradient ascent on the concave objective
//   min_j lambda_min(block_j(theta)) / scale_j  ^  scalar_j(theta) / scale_j
// over theta >= 0. Multistart; `warm` replaces the first start.
AscentResult multiplier_ascent(const LmiProblem& p, const AscentConfig& cfg,
                               const Vec* warm = nullptr);

// unscaled min eigenvalue per block followed by the scalar values
Vec block_values(const LmiProblem& p, const Vec& theta);

// exact eigenvalue re-check at theta; the ascent path never enters soundness
bool lmi_feasible(const LmiProblem& p, const Vec& theta, double tol = 1e-9);

// Lyapunov matrix of the nominal closed loop (sin and sat at slope 1, inner
// kinks and the uncertainty port closed at zero): A' P A - P = -I. Throws
// when the nominal loop is not Schur stable.
Mat initial_quadratic_P(const ClosedLoopModel& m);

// Quadratic-certificate feasibility problem for V(x) = x' p x at level rho:
// one invariance block, one dissipation block and one containment block per
// locally valid sector (the sine inside |x1| <= x_bar, the saturation inside
// |u| <= v_bar * u_bar), each with its own multiplier set. ReLU and
// uncertainty quadratic constraints hold globally.
LmiProblem build_pendulum_lmi(const ClosedLoopModel& m, const SupplyRate& s,
                              const Mat& p, double rho, double d_bar,
                              double x_bar, double v_bar);

struct LmiGrid {
  double x_lo = 0.1, x_hi = 3.1, x_step = 0.1;   // sine validity radius
  double v_lo = 1.0, v_hi = 5.0, v_step = 0.1;   // saturation range factor
  double rho_tol = 0.005;                        // relative bisection width
  AscentConfig ascent;
};

struct LmiResult {
  bool feasible = false;
  double rho_star = 0;
  double x_bar = 0, v_bar = 0;
  Mat p;
  Vec theta;
  int grid_points = 0;
  double wall_seconds = 0;
};

// Largest feasible level over the (x_bar, v_bar) grid with a per-point
// bisection on rho, warm-starting multipliers between candidates. `p_opt`
// overrides the Lyapunov matrix.
LmiResult max_rho_lmi(const ClosedLoopModel& m, const SupplyRate& s,
                      double d_bar, const LmiGrid& grid, int workers,
                      std::uint64_t seed, const Mat* p_opt = nullptr,
                      bool deterministic = false);

}  // namespace dissip
