#include "dissip/system.hpp"

#include <cmath>

namespace dissip {

const char* const kCtrlNames[9] = {"ctrl.A_K",   "ctrl.B_Kw",  "ctrl.B_Ky",
                                   "ctrl.C_Kv",  "ctrl.D_Kvw", "ctrl.D_Kvy",
                                   "ctrl.C_Ku",  "ctrl.D_Kuw", "ctrl.D_Kuy"};

int UncertaintyChannel::wt_dim() const {
  switch (kind) {
    case UncertaintyKind::kNone: return 0;
    case UncertaintyKind::kSector: return 1;
    case UncertaintyKind::kGainBound: return 1 + n_w;
  }
  return 0;
}

double sat(double u, double u_bar) {
  return std::min(u_bar, std::max(-u_bar, u));
}

int sat_node(GraphBuilder& b, int u, double u_bar) {
  if (u_bar <= 0) throw std::invalid_argument("u_bar must be positive");
  int ub = b.constant(u_bar);
  int over = b.relu(b.sub(u, ub));
  int under = b.relu(b.sub(b.neg(u), ub));
  return b.add(b.sub(u, over), under);
}

Vec pendulum_step(const PendulumParams& p, const Vec& x_p, double tau) {
  if (x_p.size() != 2) throw std::invalid_argument("pendulum state is 2-dim");
  double ml2 = p.m * p.l * p.l;
  Vec next(2);
  next[0] = x_p[0] + p.dt * x_p[1];
  next[1] = x_p[1] + p.dt * (-(p.mu / ml2) * x_p[1] +
                             (p.g / p.l) * std::sin(x_p[0]) + tau / ml2);
  return next;
}

namespace {

Eigen::Map<const Mat> ctrl_mat(const ParamStore& store, const std::string& name,
                               int rows, int cols) {
  const auto& e = store.entry(store.index(name));
  if (e.dims != std::vector<int>{rows, cols})
    throw std::invalid_argument(name + " has wrong shape");
  // row-major flat storage viewed as a column-major map of the transpose
  return Eigen::Map<const Mat>(e.value.data(), cols, rows);
}

Mat read_ctrl(const ParamStore& store, const std::string& name, int rows,
              int cols) {
  return ctrl_mat(store, name, rows, cols).transpose();
}

}  // namespace

void rinn_validate(const ParamStore& store, const RinnDims& dims) {
  int nk = dims.n_k, nw = dims.n_kw;
  read_ctrl(store, "ctrl.A_K", nk, nk);
  read_ctrl(store, "ctrl.B_Kw", nk, nw);
  read_ctrl(store, "ctrl.B_Ky", nk, 2);
  read_ctrl(store, "ctrl.C_Kv", nw, nk);
  Mat dvw = read_ctrl(store, "ctrl.D_Kvw", nw, nw);
  read_ctrl(store, "ctrl.D_Kvy", nw, 2);
  read_ctrl(store, "ctrl.C_Ku", 1, nk);
  read_ctrl(store, "ctrl.D_Kuw", 1, nw);
  read_ctrl(store, "ctrl.D_Kuy", 1, 2);
  for (int i = 0; i < nw; ++i)
    for (int j = 0; j <= i; ++j)
      if (dvw(i, j) != 0.0)
        throw std::invalid_argument("D_Kvw must be strictly upper triangular");
}

RinnOutput rinn_forward(const ParamStore& store, const RinnDims& dims,
                        const PendulumParams& p, const Vec& x_k, const Vec& y) {
  rinn_validate(store, dims);
  int nk = dims.n_k, nw = dims.n_kw;
  if (x_k.size() != nk || y.size() != 2)
    throw std::invalid_argument("rinn_forward input dims");
  Mat ak = read_ctrl(store, "ctrl.A_K", nk, nk);
  Mat bkw = read_ctrl(store, "ctrl.B_Kw", nk, nw);
  Mat bky = read_ctrl(store, "ctrl.B_Ky", nk, 2);
  Mat ckv = read_ctrl(store, "ctrl.C_Kv", nw, nk);
  Mat dkvw = read_ctrl(store, "ctrl.D_Kvw", nw, nw);
  Mat dkvy = read_ctrl(store, "ctrl.D_Kvy", nw, 2);
  Mat cku = read_ctrl(store, "ctrl.C_Ku", 1, nk);
  Mat dkuw = read_ctrl(store, "ctrl.D_Kuw", 1, nw);
  Mat dkuy = read_ctrl(store, "ctrl.D_Kuy", 1, 2);

  RinnOutput out;
  out.v_k.resize(nw);
  out.w_k.resize(nw);
  // entry i depends only on entries j > i, so fill from the last index down
  for (int i = nw - 1; i >= 0; --i) {
    double v = ckv.row(i).dot(x_k) + dkvy.row(i).dot(y);
    for (int j = i + 1; j < nw; ++j) v += dkvw(i, j) * out.w_k[j];
    out.v_k[i] = v;
    out.w_k[i] = std::max(0.0, v);
  }
  out.u = (cku * x_k)(0) + (dkuy * y)(0);
  if (nw > 0) out.u += (dkuw * out.w_k)(0);
  out.x_k_next = x_k + p.dt * (ak * x_k + bky * y +
                               (nw > 0 ? Vec(bkw * out.w_k) : Vec::Zero(nk)));
  return out;
}

void pendulum_linear(const PendulumParams& p, Mat& a, Mat& b) {
  double ml2 = p.m * p.l * p.l;
  a = Mat::Identity(2, 2);
  a(0, 1) += p.dt;
  a(1, 0) += p.dt * p.g / p.l;
  a(1, 1) += -p.dt * p.mu / ml2;
  b = Mat::Zero(2, 1);
  b(1, 0) = p.dt / ml2;
}

void rinn_init_lqr(ParamStore& store, const RinnDims& dims,
                   const PendulumParams& p) {
  int nk = dims.n_k, nw = dims.n_kw;
  auto zeros = [&](const std::string& name, int r, int c) {
    store.ensure(name, {r, c}, Vec::Zero(r * c));
    store.value(name).setZero();
  };
  zeros("ctrl.A_K", nk, nk);
  zeros("ctrl.B_Kw", nk, nw);
  zeros("ctrl.B_Ky", nk, 2);
  zeros("ctrl.C_Kv", nw, nk);
  zeros("ctrl.D_Kvw", nw, nw);
  zeros("ctrl.D_Kvy", nw, 2);
  zeros("ctrl.C_Ku", 1, nk);
  zeros("ctrl.D_Kuw", 1, nw);
  zeros("ctrl.D_Kuy", 1, 2);

  Mat a, b;
  pendulum_linear(p, a, b);
  // Riccati value iteration, Q = I, R = 1
  Mat q = Mat::Identity(2, 2);
  Mat pp = q;
  for (int it = 0; it < 100000; ++it) {
    double r = 1.0 + (b.transpose() * pp * b)(0);
    Mat k = (b.transpose() * pp * a) / r;
    Mat next = q + a.transpose() * pp * a - a.transpose() * pp * b * k;
    next = 0.5 * (next + next.transpose());
    double delta = (next - pp).norm();
    pp = next;
    if (delta < 1e-13 * (1.0 + pp.norm())) break;
  }
  double r = 1.0 + (b.transpose() * pp * b)(0);
  Mat k = (b.transpose() * pp * a) / r;  // 1 x 2

  Vec& dkuy = store.value("ctrl.D_Kuy");
  dkuy[0] = -k(0, 0);
  dkuy[1] = -k(0, 1);
  Vec& ak = store.value("ctrl.A_K");
  for (int i = 0; i < nk; ++i) ak[i * nk + i] = -1.0;
}

double param_w_sector(double alpha, double wt, double v) {
  if (std::abs(wt) > 1 + 1e-12)
    throw std::invalid_argument("sector free parameter outside [-1,1]");
  return alpha * wt * v;
}

Vec param_w_gain(double gamma_delta, double wt1, const Vec& wt2, const Vec& v) {
  if (std::abs(wt1) > 1 + 1e-12 || wt2.lpNorm<Eigen::Infinity>() > 1 + 1e-12)
    throw std::invalid_argument("gain free parameters outside [-1,1]");
  double denom = std::max(wt2.norm(), 1e-6);
  return (wt1 * gamma_delta * v.norm() / denom) * wt2;
}

ClosedLoopModel build_closed_loop(std::shared_ptr<ParamStore> store,
                                  const PendulumParams& p, const RinnDims& dims,
                                  const UncertaintyChannel& unc, int n_d) {
  if (n_d < 0 || n_d > 1) throw std::invalid_argument("n_d must be 0 or 1");
  rinn_validate(*store, dims);

  ClosedLoopModel m;
  m.plant = p;
  m.rinn = dims;
  m.unc = unc;
  m.n_d = n_d;
  m.n = 2 + dims.n_k;
  m.n_wt = unc.wt_dim();
  m.store = store;

  int nk = dims.n_k, nw = dims.n_kw;
  double ml2 = p.m * p.l * p.l;

  GraphBuilder b(store);
  int x = b.input("x", m.n);
  int wt = m.n_wt > 0 ? b.input("wt", m.n_wt) : -1;
  int d = n_d > 0 ? b.input("d", n_d) : -1;

  int xp = b.slice(x, 0, 2);
  int xk = b.slice(x, 2, nk);
  int y = xp;

  int ckv = b.param("ctrl.C_Kv");
  int dkvw = b.param("ctrl.D_Kvw");
  int dkvy = b.param("ctrl.D_Kvy");

  // w_K back-substitution; index i uses only w_j with j > i
  std::vector<int> w_nodes(nw, -1);
  for (int i = nw - 1; i >= 0; --i) {
    int pre = b.dot(b.slice(ckv, i * nk, nk), xk);
    pre = b.add(pre, b.dot(b.slice(dkvy, i * 2, 2), y));
    for (int j = i + 1; j < nw; ++j)
      pre = b.add(pre, b.mul(b.slice(dkvw, i * nw + j, 1), w_nodes[j]));
    w_nodes[i] = b.relu(pre);
  }
  int wk = nw > 0 ? b.concat(w_nodes) : -1;

  int u = b.add(b.matvec(b.param("ctrl.C_Ku"), xk, 1, nk),
                b.matvec(b.param("ctrl.D_Kuy"), y, 1, 2));
  if (nw > 0) u = b.add(u, b.matvec(b.param("ctrl.D_Kuw"), wk, 1, nw));
  int usat = sat_node(b, u, p.u_bar);

  int tau = usat;
  int w_ch = -1;
  if (unc.kind == UncertaintyKind::kSector) {
    w_ch = b.mul(b.constant(unc.alpha), b.mul(wt, usat));
    tau = b.add(tau, w_ch);
  } else if (unc.kind == UncertaintyKind::kGainBound) {
    if (unc.n_w != 1)
      throw std::invalid_argument("plant input takes a scalar channel");
    int wt1 = b.slice(wt, 0, 1);
    int wt2 = b.slice(wt, 1, unc.n_w);
    int norm_v = b.sqrt_(b.dot(usat, usat));
    int norm_w2 = b.sqrt_(b.dot(wt2, wt2));
    int guard = b.add(b.constant(1e-6),
                      b.relu(b.sub(norm_w2, b.constant(1e-6))));
    int coeff = b.mul(b.mul(wt1, b.constant(unc.gamma_delta)),
                      b.mul(norm_v, b.recip(guard)));
    w_ch = b.mul(coeff, wt2);
    tau = b.add(tau, w_ch);
  }
  if (n_d > 0) tau = b.add(tau, d);

  int x1 = b.slice(x, 0, 1);
  int x2 = b.slice(x, 1, 1);
  int x1p = b.add(x1, b.mul(b.constant(p.dt), x2));
  int acc = b.add(b.add(b.mul(b.constant(-p.mu / ml2), x2),
                        b.mul(b.constant(p.g / p.l), b.sin_(x1))),
                  b.mul(b.constant(1.0 / ml2), tau));
  int x2p = b.add(x2, b.mul(b.constant(p.dt), acc));

  int xk_drift = b.add(b.matvec(b.param("ctrl.A_K"), xk, nk, nk),
                       b.matvec(b.param("ctrl.B_Ky"), y, nk, 2));
  if (nw > 0)
    xk_drift = b.add(xk_drift, b.matvec(b.param("ctrl.B_Kw"), wk, nk, nw));
  int xkp = b.add(xk, b.mul(b.constant(p.dt), xk_drift));

  int f = b.concat({x1p, x2p, xkp});
  m.f = b.freeze(f);
  m.ch_v = b.freeze(usat);
  m.err = b.freeze(xp);
  if (w_ch >= 0) m.ch_w = b.freeze(w_ch);
  return m;
}

Mat simulate(const ClosedLoopModel& m, const Vec& x0, const Mat& wt_seq,
             const Mat& d_seq, int steps) {
  if (x0.size() != m.n) throw std::invalid_argument("x0 dim mismatch");
  if (m.n_wt > 0 && (wt_seq.rows() < steps || wt_seq.cols() != m.n_wt))
    throw std::invalid_argument("wt sequence shape mismatch");
  if (m.n_d > 0 && (d_seq.rows() < steps || d_seq.cols() != m.n_d))
    throw std::invalid_argument("d sequence shape mismatch");

  Mat traj(steps + 1, m.n);
  traj.row(0) = x0.transpose();
  EvalWorkspace ws;
  Vec in(m.f.input_dim()), out;
  int wt_off = m.n_wt > 0 ? m.f.inputs()[m.f.slot_index("wt")].offset : 0;
  int d_off = m.n_d > 0 ? m.f.inputs()[m.f.slot_index("d")].offset : 0;
  for (int k = 0; k < steps; ++k) {
    in.segment(0, m.n) = traj.row(k).transpose();
    if (m.n_wt > 0) in.segment(wt_off, m.n_wt) = wt_seq.row(k).transpose();
    if (m.n_d > 0) in.segment(d_off, m.n_d) = d_seq.row(k).transpose();
    eval_vec(m.f, in.data(), *m.store, ws, out);
    traj.row(k + 1) = out.transpose();
  }
  return traj;
}

LinearizedLoop linearize(const ClosedLoopModel& m) {
  const ParamStore& store = *m.store;
  const PendulumParams& p = m.plant;
  int nk = m.rinn.n_k, nw = m.rinn.n_kw, n = m.n;
  double ml2 = p.m * p.l * p.l;
  int nd = m.n_d;
  int ndelta = m.unc.kind == UncertaintyKind::kNone ? 0 : m.unc.n_w;

  Mat ak = read_ctrl(store, "ctrl.A_K", nk, nk);
  Mat bkw = read_ctrl(store, "ctrl.B_Kw", nk, nw);
  Mat bky = read_ctrl(store, "ctrl.B_Ky", nk, 2);
  Mat ckv = read_ctrl(store, "ctrl.C_Kv", nw, nk);
  Mat dkvw = read_ctrl(store, "ctrl.D_Kvw", nw, nw);
  Mat dkvy = read_ctrl(store, "ctrl.D_Kvy", nw, 2);
  Mat cku = read_ctrl(store, "ctrl.C_Ku", 1, nk);
  Mat dkuw = read_ctrl(store, "ctrl.D_Kuw", 1, nw);
  Mat dkuy = read_ctrl(store, "ctrl.D_Kuy", 1, 2);

  LinearizedLoop lin;
  lin.n_relu = nw;
  lin.n_delta = ndelta;
  int nw_tot = nw + ndelta;

  // u = [dkuy, cku] x + dkuw w_relu, with sat at slope 1
  Mat u_x(1, n);
  u_x << dkuy, cku;

  lin.a = Mat::Zero(n, n);
  lin.a(0, 0) = 1.0;
  lin.a(0, 1) = p.dt;
  lin.a(1, 0) = p.dt * p.g / p.l;  // sin at slope 1
  lin.a(1, 1) = 1.0 - p.dt * p.mu / ml2;
  lin.a.row(1) += (p.dt / ml2) * u_x;
  lin.a.block(2, 0, nk, 2) = p.dt * bky;
  lin.a.block(2, 2, nk, nk) = Mat::Identity(nk, nk) + p.dt * ak;

  lin.b_w = Mat::Zero(n, nw_tot);
  if (nw > 0) {
    lin.b_w.block(1, 0, 1, nw) = (p.dt / ml2) * dkuw;
    lin.b_w.block(2, 0, nk, nw) = p.dt * bkw;
  }
  if (ndelta > 0) lin.b_w(1, nw) = p.dt / ml2;

  lin.b_d = Mat::Zero(n, nd);
  if (nd > 0) lin.b_d(1, 0) = p.dt / ml2;

  lin.c_v = Mat::Zero(nw_tot, n);
  lin.d_vw = Mat::Zero(nw_tot, nw_tot);
  lin.d_vd = Mat::Zero(nw_tot, nd);
  if (nw > 0) {
    lin.c_v.block(0, 0, nw, 2) = dkvy;
    lin.c_v.block(0, 2, nw, nk) = ckv;
    lin.d_vw.block(0, 0, nw, nw) = dkvw;
  }
  if (ndelta > 0) {
    lin.c_v.row(nw) = u_x;
    if (nw > 0) lin.d_vw.block(nw, 0, 1, nw) = dkuw;
  }

  lin.c_e = Mat::Zero(2, n);
  lin.c_e(0, 0) = 1.0;
  lin.c_e(1, 1) = 1.0;
  lin.d_ew = Mat::Zero(2, nw_tot);
  lin.d_ed = Mat::Zero(2, nd);
  return lin;
}

}  // namespace dissip
