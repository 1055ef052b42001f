#include "dissip/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"

#include "dissip/checkpoint.hpp"
#include "dissip/parallel.hpp"
#include "dissip/system.hpp"

namespace dissip {

namespace {

using nlohmann::json;

bool starts_with(const std::string& s, const char* p) {
  return s.rfind(p, 0) == 0;
}

std::vector<int> trainable_ids(const ParamStore& st, bool with_ctrl) {
  std::vector<int> ids;
  for (int i = 0; i < st.size(); ++i) {
    const auto& e = st.entry(i);
    if (!e.trainable || starts_with(e.name, "adam.")) continue;
    if (!with_ctrl && starts_with(e.name, "ctrl.")) continue;
    ids.push_back(i);
  }
  return ids;
}

void adam_init(ParamStore& st, const std::vector<int>& ids) {
  st.ensure("adam.t", {1}, Vec::Zero(1), false);
  std::vector<std::string> names;
  names.reserve(ids.size());
  for (int id : ids) names.push_back(st.entry(id).name);
  for (const auto& nm : names) {
    int sz = static_cast<int>(st.value(nm).size());
    st.ensure("adam.m." + nm, {sz}, Vec::Zero(sz), false);
    st.ensure("adam.v." + nm, {sz}, Vec::Zero(sz), false);
  }
}

void adam_step(ParamStore& st, const std::vector<int>& ids,
               const ParamGrads& pg, const TrainConfig& cfg) {
  double& t = st.value("adam.t")[0];
  t += 1;
  double c1 = 1 - std::pow(cfg.adam_b1, t);
  double c2 = 1 - std::pow(cfg.adam_b2, t);
  for (int id : ids) {
    auto& e = st.entry(id);
    Vec g = (id < static_cast<int>(pg.g.size()) && pg.g[id].size())
                ? pg.g[id]
                : Vec(Vec::Zero(e.value.size()));
    Vec& m = st.value("adam.m." + e.name);
    Vec& v = st.value("adam.v." + e.name);
    m = cfg.adam_b1 * m + (1 - cfg.adam_b1) * g;
    v = cfg.adam_b2 * v + (1 - cfg.adam_b2) * g.cwiseProduct(g);
    double lr = (starts_with(e.name, "supply.") || starts_with(e.name, "qc."))
                    ? cfg.lr_scale
                    : cfg.lr_net;
    e.value.array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_eps);
  }
}

// the implicit controller layer stays explicit only while D_Kvw is strictly
// upper triangular
void mask_dkvw(ParamStore& st, int nw) {
  int id = st.find("ctrl.D_Kvw");
  if (id < 0) return;
  Vec& v = st.value(id);
  for (int r = 0; r < nw; ++r)
    for (int c = 0; c <= r; ++c) v[r * nw + c] = 0;
}

// mean relu(-phi) over the batch; accumulates the hinge gradient, weighted
// -lweight/N at each violating point, into the per-worker grads
double hinge_batch(const ComputeGraph& g, const std::vector<Vec>& pts,
                   const ParamStore& st, double lweight, int workers,
                   std::vector<ParamGrads>& wpg) {
  if (pts.empty()) return 0;
  std::vector<double> vals(pts.size());
  double wn = lweight / static_cast<double>(pts.size());
  parallel_for(static_cast<int>(pts.size()), workers, [&](int i, int w) {
    thread_local EvalWorkspace ews;
    thread_local GradWorkspace gws;
    vals[i] = eval_scalar(g, pts[i].data(), st, ews);
    if (vals[i] < 0)
      grad_flat(g, pts[i].data(), st, gws, nullptr, &wpg[w], -wn);
  });
  double s = 0;
  for (double v : vals) s += std::max(0.0, -v);
  return s / static_cast<double>(pts.size());
}

// mean relu(V/rho - 1) over the anchors, rho treated as a constant
double anchor_batch(const ComputeGraph& vg, const std::vector<Vec>& pts,
                    const ParamStore& st, double rho, double lweight,
                    int workers, std::vector<ParamGrads>& wpg) {
  if (pts.empty() || rho <= 0) return 0;
  std::vector<double> vals(pts.size());
  double wn = lweight / (static_cast<double>(pts.size()) * rho);
  parallel_for(static_cast<int>(pts.size()), workers, [&](int i, int w) {
    thread_local EvalWorkspace ews;
    thread_local GradWorkspace gws;
    vals[i] = eval_scalar(vg, pts[i].data(), st, ews);
    if (vals[i] > rho)
      grad_flat(vg, pts[i].data(), st, gws, nullptr, &wpg[w], wn);
  });
  double s = 0;
  for (double v : vals) s += std::max(0.0, v / rho - 1.0);
  return s / static_cast<double>(pts.size());
}

// anchor at a level drawn inside the band: walk t along a random direction
// until V(t u) crosses the target
std::vector<Vec> make_anchors(const StorageCertificate& cert,
                              const IntervalBox& box, double rho0, double band_lo,
                              double band_hi, int count, std::uint64_t seed,
                              int workers) {
  std::vector<Vec> anchors(count);
  parallel_for(count, workers, [&](int i, int) {
    thread_local EvalWorkspace ews;
    std::mt19937_64 rng(mix_seed(seed, 0xA17C + static_cast<std::uint64_t>(i)));
    Vec dir = box.sample(rng);
    if (dir.norm() < 1e-12) dir.setConstant(1.0);
    dir.normalize();
    std::uniform_real_distribution<double> u(band_lo, band_hi);
    double target = u(rng) * rho0;
    double t_hi = 1e18;
    for (int d = 0; d < box.dim(); ++d) {
      if (dir[d] > 1e-15) t_hi = std::min(t_hi, box.hi[d] / dir[d]);
      if (dir[d] < -1e-15) t_hi = std::min(t_hi, box.lo[d] / dir[d]);
    }
    Vec x(box.dim());
    double lo = 0, hi = t_hi;
    for (int it = 0; it < 50; ++it) {
      double mid = 0.5 * (lo + hi);
      x = mid * dir;
      double v = eval_scalar(cert.v, x.data(), *cert.store, ews);
      if (v < target)
        lo = mid;
      else
        hi = mid;
    }
    x = 0.5 * (lo + hi) * dir;
    anchors[i] = x;
  });
  return anchors;
}

struct ProbeOutcome {
  IntervalBox box;
  bool grew = false;
};

// simulate the undisturbed loop from ICs inside the inflated box and absorb
// every converging trajectory into the envelope
ProbeOutcome expansion_probe(const ClosedLoopModel& m, const IntervalBox& b,
                             const TrainConfig& cfg, std::uint64_t seed) {
  IntervalBox probe(cfg.probe_factor * b.lo, cfg.probe_factor * b.hi);
  Mat wt0(cfg.probe_steps, m.n_wt);
  wt0.setZero();
  Mat d0(cfg.probe_steps, m.n_d);
  d0.setZero();

  int n = b.dim();
  std::vector<Vec> tlo(cfg.probe_ics), thi(cfg.probe_ics);
  std::vector<char> conv(cfg.probe_ics, 0);
  parallel_for(cfg.probe_ics, cfg.workers, [&](int i, int) {
    std::mt19937_64 rng(mix_seed(seed, 0xB0C + static_cast<std::uint64_t>(i)));
    Vec x0 = probe.sample(rng);
    Mat traj = simulate(m, x0, wt0, d0, cfg.probe_steps);
    Vec last = traj.row(traj.rows() - 1).transpose();
    if (!last.allFinite() || last.lpNorm<Eigen::Infinity>() > cfg.conv_tol)
      return;
    conv[i] = 1;
    tlo[i] = traj.colwise().minCoeff().transpose();
    thi[i] = traj.colwise().maxCoeff().transpose();
  });

  Vec lo = b.lo, hi = b.hi;
  for (int i = 0; i < cfg.probe_ics; ++i) {
    if (!conv[i]) continue;
    lo = lo.cwiseMin(tlo[i]);
    hi = hi.cwiseMax(thi[i]);
  }
  lo = lo.cwiseMax(cfg.expand_cap * b.lo);
  hi = hi.cwiseMin(cfg.expand_cap * b.hi);

  ProbeOutcome out{IntervalBox(lo, hi), false};
  for (int d = 0; d < n; ++d) {
    double w = b.width(d);
    if (b.lo[d] - lo[d] > 1e-9 * w || hi[d] - b.hi[d] > 1e-9 * w)
      out.grew = true;
  }
  return out;
}

json box_json(const IntervalBox& b) {
  json j;
  j["lo"] = std::vector<double>(b.lo.data(), b.lo.data() + b.lo.size());
  j["hi"] = std::vector<double>(b.hi.data(), b.hi.data() + b.hi.size());
  return j;
}

IntervalBox box_from_json(const json& j) {
  std::vector<double> lo = j.at("lo").get<std::vector<double>>();
  std::vector<double> hi = j.at("hi").get<std::vector<double>>();
  return IntervalBox(Eigen::Map<const Vec>(lo.data(), lo.size()),
                     Eigen::Map<const Vec>(hi.data(), hi.size()));
}

json buffer_json(const ReplayBuffer& b) {
  json arr = json::array();
  for (size_t i = 0; i < b.size(); ++i) {
    const auto& e = b.entry(i);
    json r;
    r["p"] = std::vector<double>(e.point.data(), e.point.data() + e.point.size());
    r["v"] = e.value;
    arr.push_back(std::move(r));
  }
  return arr;
}

void buffer_from_json(const json& arr, ReplayBuffer& b) {
  for (const auto& r : arr) {
    std::vector<double> p = r.at("p").get<std::vector<double>>();
    b.push(Eigen::Map<const Vec>(p.data(), p.size()), r.at("v").get<double>());
  }
}

}  // namespace

TrainResult run_training(const ClosedLoopModel& m,
                         const StorageCertificate& cert,
                         const SupplyRate& supply, const IntervalBox& b0,
                         double d_bar, const TrainConfig& cfg, bool resume) {
  ParamStore& st = *cert.store;
  VerificationProblem prob = build_conditions(m, cert, supply, b0, d_bar);

  std::vector<int> ids = trainable_ids(st, cfg.train_controller);
  adam_init(st, ids);

  TrainResult res;
  res.x_box = b0;
  int start_epoch = 0;
  int clean = 0;
  bool terminated = false;
  std::vector<Vec> anchors;
  ReplayBuffer buf_rfi(cfg.buffer_capacity), buf_perf(cfg.buffer_capacity);

  namespace fs = std::filesystem;
  std::string ckpt_path, state_path, hist_path;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    ckpt_path = cfg.out_dir + "/checkpoint.bin";
    state_path = cfg.out_dir + "/train_state.json";
    hist_path = cfg.out_dir + "/history.csv";
  }

  if (resume) {
    if (state_path.empty() || !fs::exists(state_path) || !fs::exists(ckpt_path))
      throw std::runtime_error("resume requested without saved state");
    load_checkpoint(st, ckpt_path);
    std::ifstream in(state_path);
    json j = json::parse(in);
    start_epoch = j.at("epoch").get<int>() + 1;
    clean = j.at("clean").get<int>();
    terminated = j.at("terminated").get<bool>();
    res.x_box = box_from_json(j.at("box"));
    res.rho0 = j.at("rho0").get<double>();
    set_rho(st, res.rho0);
    for (const auto& a : j.at("anchors")) {
      std::vector<double> p = a.get<std::vector<double>>();
      anchors.push_back(Eigen::Map<const Vec>(p.data(), p.size()));
    }
    buffer_from_json(j.at("buffer_rfi"), buf_rfi);
    buffer_from_json(j.at("buffer_perf"), buf_perf);
  }

  AttackConfig atk = cfg.attack;
  atk.workers = cfg.workers;

  auto save_state = [&](int epoch) {
    if (state_path.empty()) return;
    save_checkpoint(st, ckpt_path);
    json j;
    j["epoch"] = epoch;
    j["clean"] = clean;
    j["terminated"] = terminated;
    j["box"] = box_json(res.x_box);
    j["rho0"] = res.rho0;
    json an = json::array();
    for (const auto& a : anchors)
      an.push_back(std::vector<double>(a.data(), a.data() + a.size()));
    j["anchors"] = std::move(an);
    j["buffer_rfi"] = buffer_json(buf_rfi);
    j["buffer_perf"] = buffer_json(buf_perf);
    std::ofstream out(state_path);
    out << j.dump(1) << "\n";
  };

  std::ofstream hist;
  if (!hist_path.empty()) {
    bool fresh = !resume || !fs::exists(hist_path);
    hist.open(hist_path, fresh ? std::ios::trunc : std::ios::app);
    if (fresh)
      hist << "epoch,rho0,loss,loss_sample,loss_adv,loss_anchor,adv_min_rfi,"
              "adv_min_perf,clean,expanded\n";
  }

  if (terminated) {
    res.terminated = true;
    res.epochs_run = 0;
    return res;
  }

  std::vector<ParamGrads> wpg(std::max(1, cfg.workers));
  for (auto& w : wpg) w.ensure(st);

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::uint64_t es = mix_seed(cfg.seed, 10000 + epoch);
    IntervalBox domain = assemble_domain(m, res.x_box, d_bar);

    double rho_max = boundary_level(cert.v, res.x_box, st, atk, mix_seed(es, 1));
    res.rho0 = cfg.rho_factor * rho_max;
    set_rho(st, res.rho0);

    if (anchors.empty())
      anchors = make_anchors(cert, res.x_box, res.rho0, cfg.anchor_lo,
                             cfg.anchor_hi, cfg.n_anchors, mix_seed(es, 2),
                             cfg.workers);

    // fresh adversarial population, all restart bests retained
    auto pop_rfi = pgd_population(prob.phi_rfi, domain, st, atk, mix_seed(es, 3));
    auto pop_perf =
        pgd_population(prob.phi_perf, domain, st, atk, mix_seed(es, 4));

    EpochStats stats;
    stats.epoch = epoch;
    stats.rho0 = res.rho0;
    stats.adv_min_rfi = pop_rfi.front().value;
    stats.adv_min_perf = pop_perf.front().value;
    for (const auto& r : pop_rfi)
      stats.adv_min_rfi = std::min(stats.adv_min_rfi, r.value);
    for (const auto& r : pop_perf)
      stats.adv_min_perf = std::min(stats.adv_min_perf, r.value);

    // adversarial batch: this epoch's endpoints first, replay fills the rest
    std::vector<Vec> adv_rfi, adv_perf;
    for (const auto& r : pop_rfi) adv_rfi.push_back(r.point);
    for (const auto& r : pop_perf) adv_perf.push_back(r.point);
    {
      std::mt19937_64 rng(mix_seed(es, 5));
      while (static_cast<int>(adv_rfi.size()) < cfg.batch_adv && !buf_rfi.empty())
        adv_rfi.push_back(buf_rfi.sample(rng).point);
      while (static_cast<int>(adv_perf.size()) < cfg.batch_adv &&
             !buf_perf.empty())
        adv_perf.push_back(buf_perf.sample(rng).point);
    }
    for (const auto& r : pop_rfi) buf_rfi.push(r.point, r.value);
    for (const auto& r : pop_perf) buf_perf.push(r.point, r.value);

    double sum_loss = 0, sum_s = 0, sum_a = 0, sum_anc = 0;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      std::vector<Vec> unif(cfg.batch_uniform);
      std::uint64_t ss = mix_seed(es, 100 + step);
      parallel_for(cfg.batch_uniform, cfg.workers, [&](int i, int) {
        std::mt19937_64 rng(mix_seed(ss, i));
        unif[i] = domain.sample(rng);
      });

      for (auto& w : wpg) w.set_zero();
      double ls = hinge_batch(prob.phi_rfi, unif, st, cfg.lambda_sample,
                              cfg.workers, wpg) +
                  hinge_batch(prob.phi_perf, unif, st, cfg.lambda_sample,
                              cfg.workers, wpg);
      double la = hinge_batch(prob.phi_rfi, adv_rfi, st, cfg.lambda_adv,
                              cfg.workers, wpg) +
                  hinge_batch(prob.phi_perf, adv_perf, st, cfg.lambda_adv,
                              cfg.workers, wpg);
      double lanc = anchor_batch(cert.v, anchors, st, res.rho0,
                                 cfg.lambda_anchor, cfg.workers, wpg);

      ParamGrads total;
      total.ensure(st);
      for (auto& w : wpg) total.axpy(1.0, w);
      adam_step(st, ids, total, cfg);
      if (cfg.train_controller) mask_dkvw(st, m.rinn.n_kw);

      sum_s += cfg.lambda_sample * ls;
      sum_a += cfg.lambda_adv * la;
      sum_anc += cfg.lambda_anchor * lanc;
      sum_loss += cfg.lambda_sample * ls + cfg.lambda_adv * la +
                  cfg.lambda_anchor * lanc;
    }
    double inv = 1.0 / std::max(1, cfg.steps_per_epoch);
    stats.loss = sum_loss * inv;
    stats.loss_sample = sum_s * inv;
    stats.loss_adv = sum_a * inv;
    stats.loss_anchor = sum_anc * inv;

    bool epoch_clean = stats.adv_min_rfi > 0 && stats.adv_min_perf > 0;
    clean = epoch_clean ? clean + 1 : 0;

    if (epoch_clean && clean >= cfg.clean_needed) {
      ProbeOutcome probe = expansion_probe(m, res.x_box, cfg, mix_seed(es, 6));
      clean = 0;
      if (probe.grew) {
        res.x_box = probe.box;
        stats.expanded = true;
        anchors.clear();  // re-anchored on the new box next epoch
        if (!ckpt_path.empty())
          save_checkpoint(st, cfg.out_dir + "/checkpoint_expand_" +
                                  std::to_string(epoch) + ".bin");
      } else {
        terminated = true;
      }
    }

    stats.clean_epochs = clean;
    res.history.push_back(stats);
    res.epochs_run = epoch - start_epoch + 1;
    if (hist.is_open()) {
      hist << stats.epoch << ',' << stats.rho0 << ',' << stats.loss << ','
           << stats.loss_sample << ',' << stats.loss_adv << ','
           << stats.loss_anchor << ',' << stats.adv_min_rfi << ','
           << stats.adv_min_perf << ',' << stats.clean_epochs << ','
           << (stats.expanded ? 1 : 0) << "\n";
      hist.flush();
    }
    save_state(epoch);
    if (terminated) break;
  }

  res.terminated = terminated;
  if (!ckpt_path.empty()) save_checkpoint(st, ckpt_path);
  return res;
}

}  // namespace dissip
