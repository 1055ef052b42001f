#include "dissip/area.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "dissip/attack.hpp"
#include "dissip/parallel.hpp"

namespace dissip {

ComputeGraph quadratic_level_graph(const Mat& p) {
  if (p.rows() != p.cols())
    throw std::invalid_argument("quadratic_level_graph: square matrix required");
  GraphBuilder b(std::make_shared<ParamStore>());
  int n = static_cast<int>(p.rows());
  int x = b.input("x", n);
  int px = b.affine(p, Vec::Zero(n), x);
  return b.freeze(b.dot(x, px));
}

namespace {

// min over x_k of V(x1, x2, x_k), projected gradient descent with an
// adaptive step; stops once the value drops to `stop_at`, which cannot
// change the cell's in/out classification
double cell_min(const ComputeGraph& v, const ParamStore& store,
                const IntervalBox& xk_box, double x1, double x2,
                const AreaConfig& cfg, double stop_at, std::uint64_t seed,
                GradWorkspace& gws) {
  int nk = xk_box.dim();
  int n = 2 + nk;
  Vec x(n), g(n);
  double best = std::numeric_limits<double>::infinity();
  for (int s = 0; s < std::max(1, cfg.starts); ++s) {
    Vec xk;
    if (s == 0) {
      xk = Vec::Zero(nk);
      xk_box.clamp(xk);
    } else {
      std::mt19937_64 rng(mix_seed(seed, s));
      xk = xk_box.sample(rng);
    }
    x[0] = x1;
    x[1] = x2;
    x.tail(nk) = xk;
    double cur = grad_flat(v, x.data(), store, gws, &g, nullptr);
    best = std::min(best, cur);
    if (best <= stop_at) return best;
    double step = 0.25;
    Vec gc(n);
    for (int it = 0; it < cfg.descent_steps; ++it) {
      double gn = 1e-12 + g.tail(nk).norm();
      Vec cand = x;
      for (int d = 0; d < nk; ++d) {
        double w = std::max(xk_box.width(d), 1e-9);
        cand[2 + d] = std::min(
            xk_box.hi[d],
            std::max(xk_box.lo[d], cand[2 + d] - step * w * g[2 + d] / gn));
      }
      double cv = grad_flat(v, cand.data(), store, gws, &gc, nullptr);
      if (cv < cur) {
        x = cand;
        cur = cv;
        g = gc;
        best = std::min(best, cur);
        if (best <= stop_at) return best;
        step = std::min(0.5, step * 1.3);
      } else {
        step *= 0.5;
        if (step < 1e-10) break;
      }
    }
  }
  return best;
}

}  // namespace

AreaResult project_area(const ComputeGraph& v, const ParamStore& store,
                        const IntervalBox& xk_box, double rho,
                        const AreaConfig& cfg, int workers,
                        const std::string& boundary_csv) {
  int n = cfg.grid;
  double dx1 = (cfg.x1_hi - cfg.x1_lo) / n;
  double dx2 = (cfg.x2_hi - cfg.x2_lo) / n;

  std::vector<char> inside(static_cast<size_t>(n) * n, 0);
  parallel_for(n * n, std::max(1, workers), [&](int idx, int) {
    thread_local GradWorkspace gws;
    int i = idx / n, j = idx % n;
    double x1 = cfg.x1_lo + (i + 0.5) * dx1;
    double x2 = cfg.x2_lo + (j + 0.5) * dx2;
    double m = cell_min(v, store, xk_box, x1, x2, cfg, rho,
                        mix_seed(0xA5EA, idx), gws);
    inside[idx] = m <= rho ? 1 : 0;
  });

  AreaResult res;
  res.grid = n;
  res.rho = rho;
  for (char c : inside) res.inside_cells += c;
  res.area = res.inside_cells * dx1 * dx2;

  if (!boundary_csv.empty()) {
    std::ofstream out(boundary_csv);
    out << "x1,x2\n";
    auto at = [&](int i, int j) -> char {
      if (i < 0 || j < 0 || i >= n || j >= n) return 0;
      return inside[static_cast<size_t>(i) * n + j];
    };
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (!at(i, j)) continue;
        if (at(i - 1, j) && at(i + 1, j) && at(i, j - 1) && at(i, j + 1))
          continue;
        out << cfg.x1_lo + (i + 0.5) * dx1 << ','
            << cfg.x2_lo + (j + 0.5) * dx2 << "\n";
      }
    }
  }
  return res;
}

}  // namespace dissip
