#include "dissip/conditions.hpp"

#include <cmath>

#include "dissip/parallel.hpp"

namespace dissip {

IntervalBox box_concat(const IntervalBox& a, const IntervalBox& b) {
  Vec lo(a.dim() + b.dim()), hi(a.dim() + b.dim());
  lo << a.lo, b.lo;
  hi << a.hi, b.hi;
  return IntervalBox(std::move(lo), std::move(hi));
}

IntervalBox symmetric_box(const Vec& half_widths) {
  for (int i = 0; i < half_widths.size(); ++i)
    if (half_widths[i] < 0) throw std::invalid_argument("negative half width");
  return IntervalBox(-half_widths, half_widths);
}

IntervalBox assemble_domain(const ClosedLoopModel& m, const IntervalBox& x_box,
                            double d_bar) {
  if (x_box.dim() != m.n) throw std::invalid_argument("state box dim mismatch");
  IntervalBox dom = x_box;
  if (m.n_wt > 0)
    dom = box_concat(dom, symmetric_box(Vec::Ones(m.n_wt)));
  if (m.n_d > 0) {
    if (d_bar < 0) throw std::invalid_argument("d_bar must be nonnegative");
    dom = box_concat(dom, symmetric_box(Vec::Constant(m.n_d, d_bar)));
  }
  return dom;
}

void set_rho(ParamStore& store, double rho) {
  store.ensure("rho", {1}, Vec::Constant(1, rho), /*trainable=*/false);
  store.value("rho")[0] = rho;
}

double get_rho(const ParamStore& store) { return store.value("rho")[0]; }

namespace {

struct ConditionParts {
  GraphBuilder b;
  int x = -1, wt = -1, d = -1;
  int f = -1, v_x = -1, v_f = -1, e = -1, rho = -1;
  int antecedent = -1;
};

ConditionParts condition_parts(const ClosedLoopModel& m,
                               const StorageCertificate& cert, double d_bar,
                               double eps_origin) {
  if (cert.store != m.store)
    throw std::invalid_argument("model and certificate share one store");
  if (cert.cfg.n != m.n) throw std::invalid_argument("certificate dim mismatch");
  int ridx = m.store->find("rho");
  set_rho(*m.store, ridx < 0 ? 1.0 : m.store->value(ridx)[0]);
  ConditionParts p{GraphBuilder(m.store)};
  GraphBuilder& b = p.b;
  p.x = b.input("x", m.n);
  if (m.n_wt > 0) p.wt = b.input("wt", m.n_wt);
  if (m.n_d > 0) p.d = b.input("d", m.n_d);

  std::map<std::string, int> bind{{"x", p.x}};
  if (p.wt >= 0) bind["wt"] = p.wt;
  if (p.d >= 0) bind["d"] = p.d;

  p.f = b.inline_graph(m.f, bind);
  p.v_x = b.inline_graph(cert.v, {{"x", p.x}});
  p.v_f = b.inline_graph(cert.v, {{"x", p.f}});
  p.e = b.inline_graph(m.err, {{"x", p.x}});
  p.rho = b.param("rho");

  std::vector<int> ants;
  ants.push_back(b.sub(p.rho, p.v_x));  // x inside the sublevel set
  if (p.d >= 0)
    ants.push_back(b.sub(b.constant(d_bar * d_bar), b.dot(p.d, p.d)));
  // excluded ball over the realized channel output, not the free parameter:
  // the channel output vanishes with the control at the origin, so the whole
  // (0, wt, 0) line is excluded as required
  std::vector<int> xi{p.x};
  if (m.ch_w) xi.push_back(b.inline_graph(*m.ch_w, bind));
  if (p.d >= 0) xi.push_back(p.d);
  ants.push_back(ball_exclusion(b, xi, eps_origin));

  p.antecedent = enc_and(b, ants);
  return p;
}

}  // namespace

VerificationProblem build_conditions(const ClosedLoopModel& m,
                                     const StorageCertificate& cert,
                                     const SupplyRate& supply,
                                     const IntervalBox& x_box, double d_bar,
                                     double eps_origin) {
  VerificationProblem vp;
  vp.n_x = m.n;
  vp.n_wt = m.n_wt;
  vp.n_d = m.n_d;
  vp.d_bar = d_bar;
  vp.eps_origin = eps_origin;
  vp.domain = assemble_domain(m, x_box, d_bar);

  {
    ConditionParts p = condition_parts(m, cert, d_bar, eps_origin);
    int cons = p.b.sub(p.rho, p.v_f);
    vp.phi_rfi = p.b.freeze(enc_implies(p.b, p.antecedent, cons));
  }
  {
    ConditionParts p = condition_parts(m, cert, d_bar, eps_origin);
    int s = supply_node(p.b, supply, p.d, p.e);
    int cons = p.b.sub(p.b.add(s, p.v_x), p.v_f);
    vp.phi_perf = p.b.freeze(enc_implies(p.b, p.antecedent, cons));
  }
  return vp;
}

ComputeGraph build_containment(const ClosedLoopModel& m,
                               const StorageCertificate& cert,
                               const SupplyRate& supply, double d_bar,
                               double v_bar, double eps_origin) {
  (void)supply;
  if (v_bar <= 0) throw std::invalid_argument("v_bar must be positive");
  ConditionParts p = condition_parts(m, cert, d_bar, eps_origin);
  std::map<std::string, int> bind{{"x", p.x}};
  if (p.wt >= 0) bind["wt"] = p.wt;
  if (p.d >= 0) bind["d"] = p.d;
  int v = p.b.inline_graph(m.ch_v, bind);
  int cons = p.b.sub(p.b.constant(v_bar * v_bar), p.b.dot(v, v));
  return p.b.freeze(enc_implies(p.b, p.antecedent, cons));
}

SemanticCheck semantic_check(const ClosedLoopModel& m,
                             const StorageCertificate& cert,
                             const SupplyRate& supply, const IntervalBox& x_box,
                             double d_bar, double rho, int n_samples,
                             int n_traj, int steps, std::uint64_t seed,
                             int workers) {
  set_rho(*m.store, rho);
  VerificationProblem vp = build_conditions(m, cert, supply, x_box, d_bar);
  double alpha_s = supply_scale_value(*m.store);

  SemanticCheck out;
  out.trajectories = n_traj;

  std::vector<double> rfi_vals(n_samples), perf_vals(n_samples);
  parallel_for(n_samples, workers, [&](int i, int) {
    thread_local EvalWorkspace ws_rfi, ws_perf;
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * (i + 1)));
    Vec pt = vp.domain.sample(rng);
    rfi_vals[i] = eval_scalar(vp.phi_rfi, pt.data(), *m.store, ws_rfi);
    perf_vals[i] = eval_scalar(vp.phi_perf, pt.data(), *m.store, ws_perf);
  });
  out.min_phi_rfi = *std::min_element(rfi_vals.begin(), rfi_vals.end());
  out.min_phi_perf = *std::min_element(perf_vals.begin(), perf_vals.end());

  std::vector<double> level_excess(n_traj, 0.0), diss_gap(n_traj, 0.0);
  parallel_for(n_traj, workers, [&](int t, int) {
    thread_local EvalWorkspace ws;
    std::mt19937_64 rng(seed ^ 0x7f4a7c15u ^ (0x2545f4914f6cdd1dull * (t + 1)));
    std::uniform_real_distribution<double> u(-1.0, 1.0);

    // rejection sample a start inside the sublevel set
    Vec x0;
    for (int tries = 0; tries < 20000; ++tries) {
      Vec cand = x_box.sample(rng);
      if (storage_value(cert, cand) <= rho) {
        x0 = cand;
        break;
      }
    }
    if (x0.size() == 0) {
      level_excess[t] = 0;  // empty sublevel sample, nothing to refute
      return;
    }

    Mat wt_seq(steps, std::max(1, m.n_wt));
    Mat d_seq(steps, std::max(1, m.n_d));
    for (int k = 0; k < steps; ++k) {
      for (int j = 0; j < m.n_wt; ++j) wt_seq(k, j) = u(rng);
      for (int j = 0; j < m.n_d; ++j) d_seq(k, j) = d_bar * u(rng);
    }
    Mat traj = simulate(m, x0, wt_seq, d_seq, steps);

    double v0 = storage_value(cert, traj.row(0).transpose());
    double supply_sum = 0;
    double worst_level = -1e300, worst_gap = -1e300;
    for (int k = 1; k <= steps; ++k) {
      Vec e = traj.row(k - 1).head(2).transpose();
      Vec d = m.n_d > 0 ? Vec(d_seq.row(k - 1).transpose()) : Vec(Vec::Zero(0));
      supply_sum += alpha_s * supply_value(supply, d, e);
      double vk = storage_value(cert, traj.row(k).transpose());
      worst_level = std::max(worst_level, vk - rho);
      worst_gap = std::max(worst_gap, vk - v0 - supply_sum);
    }
    level_excess[t] = worst_level;
    diss_gap[t] = worst_gap;
  });
  out.max_level_excess =
      *std::max_element(level_excess.begin(), level_excess.end());
  out.max_dissipation_gap = *std::max_element(diss_gap.begin(), diss_gap.end());
  return out;
}

}  // namespace dissip
