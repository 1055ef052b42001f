#pragma once

#include "dissip/box.hpp"
#include "dissip/certificate.hpp"
#include "dissip/logic.hpp"
#include "dissip/system.hpp"

namespace dissip {

// Pointwise sufficient conditions for robust forward invariance and the
// dissipation inequality over the sublevel set {V <= rho}: each graph is a
// single scalar implication that must be strictly positive on the domain.
// The level enters through the non-trainable parameter "rho" so the same
// graphs serve every bisection candidate. A ball of radius eps_origin around
// the combined (x, w, d) origin is excluded from the antecedent, otherwise
// equality at the equilibrium would block strict positivity.
struct VerificationProblem {
  ComputeGraph phi_rfi;   // level preservation: V(x)<=rho etc  =>  rho - V(F) > 0
  ComputeGraph phi_perf;  // dissipation: antecedent  =>  alpha_s s(d,e) - V(F) + V(x) > 0
  IntervalBox domain;     // flattened (x [, wt] [, d]) bounds
  int n_x = 0, n_wt = 0, n_d = 0;
  double d_bar = 0;
  double eps_origin = 0;
};

VerificationProblem build_conditions(const ClosedLoopModel& m,
                                     const StorageCertificate& cert,
                                     const SupplyRate& supply,
                                     const IntervalBox& x_box, double d_bar,
                                     double eps_origin = 1e-3);

// flattened domain from a state box, the [-1,1] channel parameter cube and
// the disturbance bound
IntervalBox assemble_domain(const ClosedLoopModel& m, const IntervalBox& x_box,
                            double d_bar);

// Containment side condition for a locally valid quadratic constraint on the
// channel input: antecedent  =>  v_bar^2 - v^2 > 0.
ComputeGraph build_containment(const ClosedLoopModel& m,
                               const StorageCertificate& cert,
                               const SupplyRate& supply, double d_bar,
                               double v_bar, double eps_origin = 1e-3);

void set_rho(ParamStore& store, double rho);
double get_rho(const ParamStore& store);

struct SemanticCheck {
  double min_phi_rfi = 0;       // over random domain samples
  double min_phi_perf = 0;
  double max_level_excess = 0;  // max over trajectories of V(x_k) - rho
  double max_dissipation_gap = 0;  // max of V(x_k)-V(x_0)-sum alpha_s s
  int trajectories = 0;
};

// Monte-Carlo consistency check of the certified claim at level rho:
// trajectories start inside {V <= rho} and use admissible channel/disturbance
// sequences drawn uniformly.
SemanticCheck semantic_check(const ClosedLoopModel& m,
                             const StorageCertificate& cert,
                             const SupplyRate& supply, const IntervalBox& x_box,
                             double d_bar, double rho, int n_samples,
                             int n_traj, int steps, std::uint64_t seed,
                             int workers = 1);

}  // namespace dissip
