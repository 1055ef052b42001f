#pragma once

#include <cstdint>

#include "dissip/attack.hpp"
#include "dissip/box.hpp"
#include "dissip/certificate.hpp"
#include "dissip/conditions.hpp"

namespace dissip {

// Per-node interval enclosures plus scratch space for the backward passes.
struct BoundWorkspace {
  std::vector<Vec> lo, hi;
  EvalWorkspace center;
  std::vector<Vec> coef;
  std::vector<Vec> acoef;  // Lipschitz-weighted magnitudes for importance
  Vec in_coef;
  Vec importance;
  std::vector<char> deep;  // subtree applies a nonlinearity to the input
  std::vector<Mat> mco;    // row-wise backsub scratch, sized per target
  Mat min_co;
  Vec moff;
  std::uint64_t stamp = 0;
};

// Forward interval propagation over the box. Affine steps are exact
// (sign-split); nonlinear steps use monotone images, the sign-split square
// rule, four-corner products and the stationary-point rule for sin.
// Parameter and constant subgraphs collapse to point intervals.
void interval_propagate(const ComputeGraph& g, const IntervalBox& box,
                        const ParamStore& store, BoundWorkspace& ws);

struct RelaxOptions {
  int alpha_refine_steps = 0;  // coordinate ascent on ReLU lower slopes
  double refine_step = 0.25;
  // Re-derive intermediate affine-node ranges by backward substitution to
  // the inputs instead of trusting the forward intervals. Plain intervals
  // lose all cross-element correlation at every layer, which makes the
  // relaxations of deep compositions (a storage net evaluated on the image
  // of the closed-loop map) uselessly wide.
  bool backsub_intermediates = true;
};

// Certified lower bound of a scalar graph over the box: one backward
// substitution of per-node linear relaxations yields an affine lower form,
// minimized over the box in closed form. `importance` (optional, input_dim)
// receives accumulated absolute relaxation coefficients per input dimension,
// used by the branching heuristic.
double lower_bound(const ComputeGraph& g, const IntervalBox& box,
                   const ParamStore& store, BoundWorkspace& ws,
                   Vec* importance = nullptr,
                   const RelaxOptions& opt = RelaxOptions{});

enum class VerdictKind { kVerified, kCounterexample, kUnknown };

const char* verdict_name(VerdictKind k);

struct Verdict {
  VerdictKind kind = VerdictKind::kUnknown;
  double lower_bound = 0;  // min certified bound over closed leaves, or the
                           // best known bound when the budget ran out
  Vec counterexample;      // point with value <= 0 when falsified
  double ce_value = 0;
  long subdomains = 0;     // processed (popped) subdomains
  double wall_seconds = 0;
};

struct BabConfig {
  long max_subdomains = 200000;
  double time_limit = 300.0;
  double delta_sound = 1e-7;
  int workers = 1;
  int pgd_steps = 25;
  int pgd_restarts = 2;
  std::uint64_t seed = 0;
  RelaxOptions relax;
  bool deterministic = false;  // zero wall-clock in the verdict
};

// Branch and bound proof that g > 0 on the box. Best-first on the lower
// bound; every pop first tries PGD falsification, then the certified bound;
// closed when the bound exceeds delta_sound, otherwise split along the
// dimension with the largest width times accumulated coefficient magnitude.
Verdict verify_positive(const ComputeGraph& g, const IntervalBox& box,
                        const ParamStore& store, const BabConfig& cfg);

// Axis-aligned bounding box of {V <= rho} inside B: uniform samples plus
// penalty-form PGD pushes along each coordinate, inflated by `margin` and
// intersected with B.
IntervalBox sublevel_bbox(const StorageCertificate& cert, double rho,
                          const IntervalBox& b, double margin = 0.05,
                          int samples = 100000, std::uint64_t seed = 0,
                          int workers = 1);

struct BisectConfig {
  double beta = 0.95;  // first candidate as a fraction of rho_max
  double mu = 1.5;     // bracket expansion / shrink factor
  double tol = 0.01;   // bracket width tolerance relative to rho_max
  int max_candidates = 40;
  double bbox_margin = 0.05;
  int bbox_samples = 100000;
  BabConfig bab;
  AttackConfig attack;  // pre-screen and boundary_level settings
  std::uint64_t seed = 0;
};

struct CandidateRecord {
  double rho = 0;
  bool prescreen_failed = false;
  VerdictKind rfi = VerdictKind::kUnknown;
  VerdictKind perf = VerdictKind::kUnknown;
  bool verified = false;
  long subdomains = 0;
};

struct BisectResult {
  double rho_star = 0;
  bool verified = false;
  double rho_max = 0;
  IntervalBox domain;  // verification domain at rho_star
  std::vector<CandidateRecord> candidates;
  long total_subdomains = 0;
  double wall_seconds = 0;
};

// Largest certified level: start at beta*rho_max (rho_max from the boundary
// of B), expand or shrink the bracket by mu after the first test, then
// bisect. Every candidate re-tightens the domain with sublevel_bbox, runs the
// PGD pre-screen and only then the two branch-and-bound proofs.
BisectResult bisect_rho(const ClosedLoopModel& m, const StorageCertificate& cert,
                        const SupplyRate& supply, const IntervalBox& x_box,
                        double d_bar, const BisectConfig& cfg);

}  // namespace dissip
