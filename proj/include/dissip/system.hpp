#pragma once

#include <optional>
#include <random>
#include <string>

#include "dissip/graph.hpp"

namespace dissip {

// Inverted pendulum, Euler-discretized:
//   x1+ = x1 + dt*x2
//   x2+ = x2 + dt*(-(mu/(m l^2))*x2 + (g/l)*sin(x1) + tau/(m l^2))
// where tau collects saturated control, uncertainty output and disturbance.
struct PendulumParams {
  double m = 0.15;
  double l = 0.5;
  double mu = 0.1;
  double g = 9.81;
  double dt = 0.01;
  double u_bar = 0.75;
};

enum class UncertaintyKind { kNone, kSector, kGainBound };

struct UncertaintyChannel {
  UncertaintyKind kind = UncertaintyKind::kNone;
  double alpha = 0.25;        // sector: w = alpha * wt * v, wt in [-1,1]
  double gamma_delta = 0.5;   // gain bound: ||w|| <= gamma_delta * ||v||
  int n_w = 1;                // channel output dimension
  int wt_dim() const;         // free-parameter dimension
};

struct RinnDims {
  int n_k = 2;
  int n_kw = 8;
};

// controller parameter names in the store, all under the "ctrl." prefix
extern const char* const kCtrlNames[9];

double sat(double u, double u_bar);
// saturation assembled from the ReLU min/max encodings:
// sat(u) = u - relu(u - u_bar) + relu(-u - u_bar) = min{u_bar, max{-u_bar, u}}
int sat_node(GraphBuilder& b, int u, double u_bar);

Vec pendulum_step(const PendulumParams& p, const Vec& x_p, double tau);

// Recurrent implicit NN controller step. w_K solves
//   w_K = relu(C_Kv x_K + D_Kvw w_K + D_Kvy y)
// by back-substitution, valid because D_Kvw is strictly upper triangular.
struct RinnOutput {
  Vec x_k_next;
  double u = 0;
  Vec v_k;
  Vec w_k;
};
RinnOutput rinn_forward(const ParamStore& store, const RinnDims& dims,
                        const PendulumParams& p, const Vec& x_k, const Vec& y);

// declare ctrl.* parameters with zero blocks and a discrete LQR gain on the
// sin -> x_P1 slope linearization (Q = I, R = 1) as D_Kuy; A_K = -I so the
// controller state contracts at rate (1 - dt) per step
void rinn_init_lqr(ParamStore& store, const RinnDims& dims,
                   const PendulumParams& p);

// verify shapes and strict upper triangularity of D_Kvw; throws on violation
void rinn_validate(const ParamStore& store, const RinnDims& dims);

// Euler-discretized pendulum linearization (sin -> x1 slope g/l, sat -> id)
void pendulum_linear(const PendulumParams& p, Mat& a, Mat& b);

// exact-coverage uncertainty parameterizations
double param_w_sector(double alpha, double wt, double v);
Vec param_w_gain(double gamma_delta, double wt1, const Vec& wt2, const Vec& v);

struct ClosedLoopModel {
  PendulumParams plant;
  RinnDims rinn;
  UncertaintyChannel unc;
  int n_d = 0;        // disturbance dimension (0 or 1)
  int n = 0;          // total state dim, 2 + n_k
  int n_wt = 0;       // channel free-parameter dim

  std::shared_ptr<ParamStore> store;
  ComputeGraph f;     // slots x[, wt][, d] -> next state
  ComputeGraph ch_v;  // channel input v = sat(u), slots x
  ComputeGraph err;   // performance output e = x_P, slots x
  std::optional<ComputeGraph> ch_w;  // channel output value, slots x[, wt]
};

ClosedLoopModel build_closed_loop(std::shared_ptr<ParamStore> store,
                                  const PendulumParams& p, const RinnDims& dims,
                                  const UncertaintyChannel& unc, int n_d);

// rows 0..steps of the state trajectory; wt/d have one row per step (or zero
// columns when the corresponding slot is absent)
Mat simulate(const ClosedLoopModel& m, const Vec& x0, const Mat& wt_seq,
             const Mat& d_seq, int steps);

struct LinearizedLoop {
  Mat a;              // sin and sat absorbed at slope 1, relu/delta ports open
  Mat b_w, b_d;
  Mat c_v, d_vw, d_vd;
  Mat c_e, d_ew, d_ed;
  int n_relu = 0, n_delta = 0;
};

LinearizedLoop linearize(const ClosedLoopModel& m);

}  // namespace dissip
