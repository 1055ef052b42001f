#include "dissip/lmi.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include "dissip/attack.hpp"
#include "dissip/parallel.hpp"

namespace dissip {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Mat mat_of(const ParamStore& s, const std::string& name, int r, int c) {
  const Vec& v = s.value(name);
  if (v.size() != r * c)
    throw std::invalid_argument("parameter shape mismatch: " + name);
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>(v.data(), r, c);
}

struct BlockEval {
  double objective = -kInf;  // scaled min over blocks and scalars
  int active_block = -1;     // -1 when a scalar is active
  int active_scalar = -1;
  Vec eigvec;
};

Mat assemble(const LmiBlock& b, const Vec& theta) {
  Mat m = b.base;
  for (int i = 0; i < theta.size(); ++i)
    if (b.g[i].size() && theta[i] != 0) m += theta[i] * b.g[i];
  return m;
}

BlockEval evaluate(const LmiProblem& p, const Vec& theta,
                   const std::vector<double>& scales) {
  BlockEval e;
  e.objective = kInf;
  int si = 0;
  for (int j = 0; j < static_cast<int>(p.blocks.size()); ++j, ++si) {
    Eigen::SelfAdjointEigenSolver<Mat> es(assemble(p.blocks[j], theta));
    double v = es.eigenvalues()[0] / scales[si];
    if (v < e.objective) {
      e.objective = v;
      e.active_block = j;
      e.active_scalar = -1;
      e.eigvec = es.eigenvectors().col(0);
    }
  }
  for (int j = 0; j < static_cast<int>(p.scalars.size()); ++j, ++si) {
    double v = (p.scalars[j].base + p.scalars[j].coef.dot(theta)) / scales[si];
    if (v < e.objective) {
      e.objective = v;
      e.active_block = -1;
      e.active_scalar = j;
    }
  }
  return e;
}

void project_theta(const LmiProblem& p, Vec& theta) {
  theta = theta.cwiseMax(0.0);
  for (int round = 0; round < 3; ++round) {
    bool moved = false;
    for (const auto& s : p.scalars) {
      double v = s.base + s.coef.dot(theta);
      double nrm = s.coef.squaredNorm();
      if (v < 0 && nrm > 0) {
        theta -= (v / nrm) * s.coef;
        theta = theta.cwiseMax(0.0);
        moved = true;
      }
    }
    if (!moved) break;
  }
}

}  // namespace

Vec block_values(const LmiProblem& p, const Vec& theta) {
  Vec out(p.blocks.size() + p.scalars.size());
  int si = 0;
  for (const auto& b : p.blocks) {
    Eigen::SelfAdjointEigenSolver<Mat> es(assemble(b, theta),
                                          Eigen::EigenvaluesOnly);
    out[si++] = es.eigenvalues()[0];
  }
  for (const auto& s : p.scalars) out[si++] = s.base + s.coef.dot(theta);
  return out;
}

bool lmi_feasible(const LmiProblem& p, const Vec& theta, double tol) {
  if (theta.size() != p.n_theta) return false;
  if (theta.size() > 0 && theta.minCoeff() < 0) return false;
  for (const auto& b : p.blocks) {
    Eigen::SelfAdjointEigenSolver<Mat> es(assemble(b, theta),
                                          Eigen::EigenvaluesOnly);
    if (es.eigenvalues()[0] < -tol * (1 + b.base.norm())) return false;
  }
  for (const auto& s : p.scalars)
    if (s.base + s.coef.dot(theta) < -tol * (1 + std::abs(s.base)))
      return false;
  return true;
}

AscentResult multiplier_ascent(const LmiProblem& p, const AscentConfig& cfg,
                               const Vec* warm) {
  std::vector<double> scales;
  scales.reserve(p.blocks.size() + p.scalars.size());
  for (const auto& b : p.blocks) scales.push_back(1 + b.base.norm());
  for (const auto& s : p.scalars) scales.push_back(1 + std::abs(s.base));

  AscentResult best;
  best.theta = Vec::Zero(p.n_theta);
  best.objective = -kInf;

  for (int start = 0; start < std::max(1, cfg.starts); ++start) {
    Vec theta(p.n_theta);
    if (start == 0 && warm && warm->size() == p.n_theta) {
      theta = *warm;
    } else if (start == 0) {
      theta.setConstant(0.5);
    } else {
      std::mt19937_64 rng(mix_seed(cfg.seed, start));
      std::uniform_real_distribution<double> u(-2.0, 1.0);
      for (int i = 0; i < p.n_theta; ++i) theta[i] = std::pow(10.0, u(rng));
    }
    project_theta(p, theta);

    BlockEval cur = evaluate(p, theta, scales);
    double step = cfg.init_step;
    for (int it = 0; it < cfg.iters && cur.objective < cfg.stop_at; ++it) {
      Vec grad = Vec::Zero(p.n_theta);
      if (cur.active_block >= 0) {
        const LmiBlock& b = p.blocks[cur.active_block];
        for (int i = 0; i < p.n_theta; ++i)
          if (b.g[i].size())
            grad[i] = cur.eigvec.dot(b.g[i] * cur.eigvec) /
                      scales[cur.active_block];
      } else {
        grad = p.scalars[cur.active_scalar].coef /
               scales[p.blocks.size() + cur.active_scalar];
      }
      double gn = grad.norm();
      if (gn < 1e-14) break;
      Vec cand = theta + (step / gn) * grad;
      project_theta(p, cand);
      BlockEval ce = evaluate(p, cand, scales);
      if (ce.objective > cur.objective) {
        theta = cand;
        cur = ce;
        step = std::min(step * 1.3, 10.0);
      } else {
        step *= 0.5;
        if (step < 1e-12) break;
      }
    }
    if (cur.objective > best.objective) {
      best.objective = cur.objective;
      best.theta = theta;
      if (best.objective >= cfg.stop_at) break;
    }
  }
  return best;
}

Mat initial_quadratic_P(const ClosedLoopModel& m) {
  Mat a = linearize(m).a;
  int n = static_cast<int>(a.rows());

  Eigen::VectorXcd ev = a.eigenvalues();
  for (int i = 0; i < ev.size(); ++i)
    if (std::abs(ev[i]) >= 1 - 1e-9)
      throw std::runtime_error("nominal closed loop is not Schur stable");

  // vec form of A'PA - P = -I, column-major indexing
  int nn = n * n;
  Mat k(nn, nn);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
          k(i + n * j, r + n * c) = a(r, i) * a(c, j);
  Mat sys = Mat::Identity(nn, nn) - k;
  Vec rhs(nn);
  Mat eye = Mat::Identity(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) rhs[i + n * j] = eye(i, j);
  Vec sol = sys.fullPivLu().solve(rhs);
  Mat p(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) p(i, j) = sol[i + n * j];
  p = 0.5 * (p + p.transpose());

  Eigen::LLT<Mat> llt(p);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("Lyapunov solution is not positive definite");
  return p;
}

LmiProblem build_pendulum_lmi(const ClosedLoopModel& m, const SupplyRate& s,
                              const Mat& p, double rho, double d_bar,
                              double x_bar, double v_bar) {
  if (x_bar <= 0 || x_bar > 4.49)
    throw std::invalid_argument("sine sector radius outside (0, 4.49]");
  if (v_bar < 1)
    throw std::invalid_argument("saturation range factor below 1");
  bool has_unc = m.unc.kind != UncertaintyKind::kNone;
  if (has_unc && m.unc.n_w != 1)
    throw std::invalid_argument("scalar torque admits one channel output");

  const ParamStore& st = *m.store;
  int nk = m.rinn.n_k, nw = m.rinn.n_kw;
  int n = 2 + nk;
  Mat ak = mat_of(st, "ctrl.A_K", nk, nk);
  Mat bkw = mat_of(st, "ctrl.B_Kw", nk, nw);
  Mat bky = mat_of(st, "ctrl.B_Ky", nk, 2);
  Mat ckv = mat_of(st, "ctrl.C_Kv", nw, nk);
  Mat dkvw = mat_of(st, "ctrl.D_Kvw", nw, nw);
  Mat dkvy = mat_of(st, "ctrl.D_Kvy", nw, 2);
  Mat cku = mat_of(st, "ctrl.C_Ku", 1, nk);
  Mat dkuw = mat_of(st, "ctrl.D_Kuw", 1, nw);
  Mat dkuy = mat_of(st, "ctrl.D_Kuy", 1, 2);

  const PendulumParams& pp = m.plant;
  double ml2 = pp.m * pp.l * pp.l;

  int n_wch = has_unc ? 1 : 0;
  int n_wtot = 2 + nw + n_wch;       // sin, sat, relu block, channel
  int n_v = 2 + nw + n_wch;
  int nd = m.n_d;
  int nxi = n + n_wtot + nd;
  int wcol = n;        // first w column in xi
  int dcol = n + n_wtot;

  // w stacking offsets
  int w_sin = 0, w_sat = 1, w_relu = 2, w_ch = 2 + nw;
  int v_sin = 0, v_sat = 1, v_relu = 2, v_ch = 2 + nw;

  Mat x_mat = Mat::Zero(n, nxi);
  x_mat(0, 0) = 1;
  x_mat(0, 1) = pp.dt;
  x_mat(1, 1) = 1 - pp.dt * pp.mu / ml2;
  x_mat.block(2, 0, nk, 2) = pp.dt * bky;
  x_mat.block(2, 2, nk, nk) = Mat::Identity(nk, nk) + pp.dt * ak;
  x_mat(1, wcol + w_sin) = pp.dt * pp.g / pp.l;
  x_mat(1, wcol + w_sat) = pp.dt / ml2;
  x_mat.block(2, wcol + w_relu, nk, nw) = pp.dt * bkw;
  if (has_unc) x_mat(1, wcol + w_ch) = pp.dt / ml2;
  if (nd > 0) x_mat(1, dcol) = pp.dt / ml2;

  Mat zv = Mat::Zero(n_v, nxi);
  zv(v_sin, 0) = 1;
  zv.block(v_sat, 0, 1, 2) = dkuy;
  zv.block(v_sat, 2, 1, nk) = cku;
  zv.block(v_sat, wcol + w_relu, 1, nw) = dkuw;
  zv.block(v_relu, 0, nw, 2) = dkvy;
  zv.block(v_relu, 2, nw, nk) = ckv;
  zv.block(v_relu, wcol + w_relu, nw, nw) = dkvw;
  if (has_unc) zv(v_ch, wcol + w_sat) = 1;

  Mat z(n_v + n_wtot, nxi);
  z.topRows(n_v) = zv;
  z.bottomRows(n_wtot).setZero();
  z.block(n_v, wcol, n_wtot, n_wtot).setIdentity();

  Mat d_map = Mat::Zero(nd + 2, nxi);
  for (int i = 0; i < nd; ++i) d_map(i, dcol + i) = 1;
  d_map(nd, 0) = 1;
  d_map(nd + 1, 1) = 1;

  Mat s_mat = Mat::Zero(nd + 2, nd + 2);
  switch (s.kind) {
    case SupplyKind::kL2Gain:
      for (int i = 0; i < nd; ++i) s_mat(i, i) = s.gamma * s.gamma;
      s_mat(nd, nd) = -1;
      s_mat(nd + 1, nd + 1) = -1;
      break;
    case SupplyKind::kPassivity:
      for (int i = 0; i < std::min(nd, 2); ++i)
        s_mat(i, nd + i) = s_mat(nd + i, i) = 0.5;
      break;
    case SupplyKind::kZero:
      break;
  }

  // one multiplier per scalar sector plus one for the uncertainty block
  int n_ch = 2 + nw + (has_unc ? 1 : 0);
  // channel QC with unit multiplier, as a matrix on (v; w)
  auto channel_qc = [&](int ch) {
    Mat qc = Mat::Zero(n_v + n_wtot, n_v + n_wtot);
    auto sector = [&](int vi, int wi, double a, double b) {
      qc(vi, vi) += -a * b;
      qc(vi, n_v + wi) += 0.5 * (a + b);
      qc(n_v + wi, vi) += 0.5 * (a + b);
      qc(n_v + wi, n_v + wi) += -1;
    };
    if (ch == 0) {
      sector(v_sin, w_sin, std::sin(x_bar) / x_bar, 1.0);
    } else if (ch == 1) {
      sector(v_sat, w_sat, 1.0 / v_bar, 1.0);
    } else if (ch < 2 + nw) {
      sector(v_relu + (ch - 2), w_relu + (ch - 2), 0.0, 1.0);
    } else {
      double gd = m.unc.kind == UncertaintyKind::kSector ? m.unc.alpha
                                                         : m.unc.gamma_delta;
      qc(v_ch, v_ch) += gd * gd;
      qc(n_v + w_ch, n_v + w_ch) += -1;
    }
    return qc;
  };

  std::vector<Mat> neg_zqz(n_ch);
  for (int ch = 0; ch < n_ch; ++ch)
    neg_zqz[ch] = -(z.transpose() * channel_qc(ch) * z);

  Mat p_lift = Mat::Zero(nxi, nxi);
  p_lift.topLeftCorner(n, n) = p;
  Mat d_lift = Mat::Zero(nxi, nxi);
  for (int i = 0; i < nd; ++i) d_lift(dcol + i, dcol + i) = 1;

  Mat xpx = x_mat.transpose() * p * x_mat;

  LmiProblem prob;
  // theta layout: per block its channel multipliers then its scalars
  int idx = 0;
  auto lam_block = [&](int& first) {
    first = idx;
    idx += n_ch;
  };
  int rfi0, perf0, cs0, cv0;
  lam_block(rfi0);
  int rfi_srho = idx++;
  int rfi_sd = nd > 0 ? idx++ : -1;
  lam_block(perf0);
  int perf_as = idx++;
  lam_block(cs0);
  int cs_srho = idx++;
  int cs_sd = nd > 0 ? idx++ : -1;
  lam_block(cv0);
  int cv_srho = idx++;
  int cv_sd = nd > 0 ? idx++ : -1;
  prob.n_theta = idx;

  auto empty_g = [&] { return std::vector<Mat>(prob.n_theta); };

  {
    LmiBlock b;
    b.name = "invariance";
    b.base = -xpx;
    b.g = empty_g();
    for (int ch = 0; ch < n_ch; ++ch) b.g[rfi0 + ch] = neg_zqz[ch];
    b.g[rfi_srho] = p_lift;
    if (nd > 0) b.g[rfi_sd] = d_lift;
    prob.blocks.push_back(std::move(b));
  }
  {
    LmiScalar sc;
    sc.name = "invariance margin";
    sc.base = rho;
    sc.coef = Vec::Zero(prob.n_theta);
    sc.coef[rfi_srho] = -rho;
    if (nd > 0) sc.coef[rfi_sd] = -d_bar * d_bar;
    prob.scalars.push_back(std::move(sc));
  }
  {
    LmiBlock b;
    b.name = "dissipation";
    b.base = -xpx + p_lift;
    b.g = empty_g();
    for (int ch = 0; ch < n_ch; ++ch) b.g[perf0 + ch] = neg_zqz[ch];
    b.g[perf_as] = d_map.transpose() * s_mat * d_map;
    prob.blocks.push_back(std::move(b));
  }
  auto containment = [&](const std::string& name, int row, double level,
                         int lam0, int i_srho, int i_sd) {
    LmiBlock b;
    b.name = name;
    Mat vrow = zv.row(row);
    b.base = -(vrow.transpose() * vrow);
    b.g = empty_g();
    for (int ch = 0; ch < n_ch; ++ch) b.g[lam0 + ch] = neg_zqz[ch];
    b.g[i_srho] = p_lift;
    if (i_sd >= 0) b.g[i_sd] = d_lift;
    prob.blocks.push_back(std::move(b));

    LmiScalar sc;
    sc.name = name + " level";
    sc.base = level * level;
    sc.coef = Vec::Zero(prob.n_theta);
    sc.coef[i_srho] = -rho;
    if (i_sd >= 0) sc.coef[i_sd] = -d_bar * d_bar;
    prob.scalars.push_back(std::move(sc));
  };
  containment("sine range", v_sin, x_bar, cs0, cs_srho, cs_sd);
  containment("sat range", v_sat, v_bar * pp.u_bar, cv0, cv_srho, cv_sd);

  return prob;
}

LmiResult max_rho_lmi(const ClosedLoopModel& m, const SupplyRate& s,
                      double d_bar, const LmiGrid& grid, int workers,
                      std::uint64_t seed, const Mat* p_opt,
                      bool deterministic) {
  auto t0 = std::chrono::steady_clock::now();
  Mat p = p_opt ? *p_opt : initial_quadratic_P(m);
  Mat pinv = p.inverse();

  std::vector<std::pair<double, double>> pts;
  for (double xb = grid.x_lo; xb <= grid.x_hi + 1e-9; xb += grid.x_step)
    for (double vb = grid.v_lo; vb <= grid.v_hi + 1e-9; vb += grid.v_step)
      pts.emplace_back(xb, vb);

  struct PtRes {
    double rho = -1;
    Vec theta;
  };
  std::vector<PtRes> out(pts.size());
  std::atomic<double> best{0.0};

  parallel_for(static_cast<int>(pts.size()), std::max(1, workers),
               [&](int i, int) {
    double xb = pts[i].first, vb = pts[i].second;
    // the ellipse at this level already touches |x1| = x_bar
    double cap = xb * xb / pinv(0, 0);
    if (cap < best.load()) return;

    AscentConfig cold = grid.ascent;
    cold.seed = mix_seed(seed, 7000 + i);
    AscentConfig warm_cfg = cold;
    warm_cfg.starts = 1;
    warm_cfg.iters = std::max(200, cold.iters / 4);

    Vec warm;
    bool have_warm = false;
    auto try_rho = [&](double r) {
      LmiProblem prob = build_pendulum_lmi(m, s, p, r, d_bar, xb, vb);
      AscentResult a = multiplier_ascent(prob, have_warm ? warm_cfg : cold,
                                         have_warm ? &warm : nullptr);
      warm = a.theta;
      have_warm = true;
      return lmi_feasible(prob, a.theta) ? std::optional<Vec>(a.theta)
                                         : std::nullopt;
    };

    double lo = -1, hi_inf = -1;
    Vec lo_theta;
    double r = cap;
    for (int k = 0; k < 15; ++k) {
      auto th = try_rho(r);
      if (th) {
        lo = r;
        lo_theta = *th;
        break;
      }
      hi_inf = r;
      r *= 0.5;
      if (r < 1e-12 * cap) break;
    }
    if (lo < 0) return;
    if (hi_inf > 0) {
      while (hi_inf - lo > grid.rho_tol * hi_inf) {
        double mid = 0.5 * (lo + hi_inf);
        auto th = try_rho(mid);
        if (th) {
          lo = mid;
          lo_theta = *th;
        } else {
          hi_inf = mid;
        }
      }
    }
    out[i].rho = lo;
    out[i].theta = lo_theta;
    double cur = best.load();
    while (lo > cur && !best.compare_exchange_weak(cur, lo)) {
    }
  });

  LmiResult res;
  res.p = p;
  res.grid_points = static_cast<int>(pts.size());
  int arg = -1;
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
    if (out[i].rho > (arg < 0 ? 0 : out[arg].rho)) arg = i;
  }
  if (arg >= 0) {
    res.feasible = true;
    res.rho_star = out[arg].rho;
    res.x_bar = pts[arg].first;
    res.v_bar = pts[arg].second;
    res.theta = out[arg].theta;
  }
  res.wall_seconds =
      deterministic
          ? 0.0
          : std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
  return res;
}

}  // namespace dissip
