#include "dissip/certificate.hpp"

#include <cmath>
#include <random>

namespace dissip {

double supply_value(const SupplyRate& s, const Vec& d, const Vec& e) {
  switch (s.kind) {
    case SupplyKind::kL2Gain:
      return s.gamma * s.gamma * d.squaredNorm() - e.squaredNorm();
    case SupplyKind::kPassivity: {
      int k = static_cast<int>(std::min(d.size(), e.size()));
      if (k == 0) return 0.0;
      return d.head(k).dot(e.head(k));
    }
    case SupplyKind::kZero:
      return 0.0;
  }
  return 0.0;
}

void storage_init(ParamStore& store, const StorageConfig& cfg, const Mat& p_init,
                  std::uint64_t seed) {
  int n = cfg.n;
  if (p_init.rows() != n || p_init.cols() != n)
    throw std::invalid_argument("p_init must be n x n");
  double fro = p_init.norm();
  if (!(fro > 0)) throw std::invalid_argument("p_init must be nonzero");
  Mat pn = p_init / fro;
  pn = 0.5 * (pn + pn.transpose());

  // R'R = P_n - eps_pd I keeps the full quadratic part equal to P_n exactly
  Mat core = pn - cfg.eps_pd * Mat::Identity(n, n);
  Eigen::LLT<Mat> llt(core);
  if (llt.info() != Eigen::Success) llt.compute(pn);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("storage seed matrix is not positive definite");
  Mat r = llt.matrixU();

  Vec r_flat(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) r_flat[i * n + j] = r(i, j);
  store.ensure("storage.R", {n, n}, r_flat);
  store.value("storage.R") = r_flat;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1e-2, 1e-2);
  int prev = n;
  for (size_t li = 0; li < cfg.hidden.size(); ++li) {
    int h = cfg.hidden[li];
    Vec w(h * prev);
    for (int i = 0; i < w.size(); ++i) w[i] = unif(rng);
    std::string base = "storage.psi.W" + std::to_string(li);
    store.ensure(base, {h, prev}, w);
    store.value(base) = w;
    std::string bias = "storage.psi.b" + std::to_string(li);
    store.ensure(bias, {h}, Vec::Zero(h));
    store.value(bias).setZero();
    prev = h;
  }
  size_t last = cfg.hidden.size();
  std::string wl = "storage.psi.W" + std::to_string(last);
  std::string bl = "storage.psi.b" + std::to_string(last);
  // zero output layer: the initial storage function is purely quadratic
  store.ensure(wl, {1, prev}, Vec::Zero(prev));
  store.value(wl).setZero();
  store.ensure(bl, {1}, Vec::Zero(1));
  store.value(bl).setZero();

  // half the quadratic decrease rate stays in reserve: with alpha_s equal to
  // 1/frobenius the supply demand exactly cancels the Lyapunov decrease on
  // the controller-origin slice and the conditions start with zero margin
  store.ensure("supply.beta_s", {1}, Vec::Constant(1, -std::log(2.0 * fro)));
  store.value("supply.beta_s")[0] = -std::log(2.0 * fro);
}

namespace {

int psi_stack(GraphBuilder& b, const StorageConfig& cfg, int in) {
  int h = in;
  int prev = cfg.n;
  for (size_t li = 0; li < cfg.hidden.size(); ++li) {
    int width = cfg.hidden[li];
    int lin = b.add(b.matvec(b.param("storage.psi.W" + std::to_string(li)), h,
                             width, prev),
                    b.param("storage.psi.b" + std::to_string(li)));
    h = b.leaky_relu(lin, cfg.leaky_slope);
    prev = width;
  }
  size_t last = cfg.hidden.size();
  return b.add(b.matvec(b.param("storage.psi.W" + std::to_string(last)), h, 1,
                        prev),
               b.param("storage.psi.b" + std::to_string(last)));
}

}  // namespace

StorageCertificate build_storage(std::shared_ptr<ParamStore> store,
                                 const StorageConfig& cfg) {
  if (cfg.alpha_nn < 0 || cfg.alpha_nn >= 1)
    throw std::invalid_argument("alpha_nn must lie in [0,1)");
  StorageCertificate cert;
  cert.cfg = cfg;
  cert.store = store;

  GraphBuilder b(store);
  int x = b.input("x", cfg.n);
  int delta = x;
  if (cfg.x_star.size() > 0) {
    if (cfg.x_star.size() != cfg.n)
      throw std::invalid_argument("x_star dim mismatch");
    if (cfg.x_star.cwiseAbs().maxCoeff() > 0)
      delta = b.sub(x, b.constant(cfg.x_star));
  }

  int rx = b.matvec(b.param("storage.R"), delta, cfg.n, cfg.n);
  int quad = b.add(b.mul(b.constant(cfg.eps_pd), b.dot(delta, delta)),
                   b.dot(rx, rx));

  int psi_x = psi_stack(b, cfg, delta);
  int psi_0 = psi_stack(b, cfg, b.constant(Vec::Zero(cfg.n)));
  int mod = b.add(b.constant(1.0),
                  b.mul(b.constant(cfg.alpha_nn), b.tanh_(b.sub(psi_x, psi_0))));
  cert.v = b.freeze(b.mul(quad, mod));
  return cert;
}

double storage_value(const StorageCertificate& c, const Vec& x) {
  EvalWorkspace ws;
  if (x.size() != c.cfg.n) throw std::invalid_argument("state dim mismatch");
  return eval_scalar(c.v, x.data(), *c.store, ws);
}

void qc_multiplier_init(ParamStore& store, int count) {
  for (int i = 0; i < count; ++i) {
    std::string name = "qc.lambda_tilde." + std::to_string(i);
    store.ensure(name, {1}, Vec::Constant(1, 1.0));
  }
}

int qc_lambda_node(GraphBuilder& b, int channel) {
  return b.square(b.param("qc.lambda_tilde." + std::to_string(channel)));
}

double qc_lambda_value(const ParamStore& store, int channel) {
  double lt = store.value("qc.lambda_tilde." + std::to_string(channel))[0];
  return lt * lt;
}

int supply_scale_node(GraphBuilder& b) {
  return b.exp_(b.param("supply.beta_s"));
}

double supply_scale_value(const ParamStore& store) {
  return std::exp(store.value("supply.beta_s")[0]);
}

int supply_node(GraphBuilder& b, const SupplyRate& s, int d, int e) {
  int alpha = supply_scale_node(b);
  switch (s.kind) {
    case SupplyKind::kL2Gain: {
      if (d < 0) throw std::invalid_argument("l2 gain supply needs d");
      int gain2 = b.constant(s.gamma * s.gamma);
      int val = b.sub(b.mul(gain2, b.dot(d, d)), b.dot(e, e));
      return b.mul(alpha, val);
    }
    case SupplyKind::kPassivity: {
      if (d < 0) throw std::invalid_argument("passivity supply needs d");
      int k = std::min(b.dim_of(d), b.dim_of(e));
      int val = b.dot(b.slice(d, 0, k), b.slice(e, 0, k));
      return b.mul(alpha, val);
    }
    case SupplyKind::kZero:
      return b.mul(alpha, b.constant(0.0));
  }
  throw std::invalid_argument("unknown supply kind");
}

}  // namespace dissip
