#include "dissip/verifier.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <limits>
#include <mutex>
#include <queue>
#include <thread>
#include <unordered_map>
#include <vector>

#include "dissip/parallel.hpp"

namespace dissip {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kInf = std::numeric_limits<double>::infinity();

int bcast(int k, int dim) { return dim == 1 ? 0 : k; }

// true when base + k*period falls in [l, u] for some integer k; fuzz widens
// the interval so borderline tangencies count as contained
bool grid_point_in(double l, double u, double base, double period, double fuzz) {
  double k = std::ceil((l - fuzz - base) / period);
  return base + k * period <= u + fuzz;
}

void resize_ws(const ComputeGraph& g, BoundWorkspace& ws) {
  if (ws.stamp == g.uid() &&
      static_cast<int>(ws.lo.size()) == g.num_nodes())
    return;
  int n = g.num_nodes();
  ws.lo.assign(n, Vec());
  ws.hi.assign(n, Vec());
  ws.coef.assign(n, Vec());
  ws.acoef.assign(n, Vec());
  ws.mco.assign(n, Mat());
  ws.deep.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    const Node& nd = g.node(i);
    ws.lo[i].resize(nd.dim);
    ws.hi[i].resize(nd.dim);
    ws.coef[i].resize(nd.dim);
    ws.acoef[i].resize(nd.dim);
    char d = 0;
    for (int a : nd.args) d |= ws.deep[a];
    if (!d && g.input_dependent(i)) {
      switch (nd.kind) {
        case OpKind::kRelu:
        case OpKind::kLeakyRelu:
        case OpKind::kTanh:
        case OpKind::kSin:
        case OpKind::kExp:
        case OpKind::kSqrt:
        case OpKind::kRecip:
        case OpKind::kSquare:
          d = 1;
          break;
        case OpKind::kMul:
        case OpKind::kDot:
          // bilinear only when both factors move with the input
          d = g.input_dependent(nd.args[0]) && g.input_dependent(nd.args[1]);
          break;
        default:
          break;
      }
    }
    ws.deep[i] = d;
  }
  ws.in_coef.resize(g.input_dim());
  ws.importance.resize(g.input_dim());
  ws.stamp = g.uid();
}

void interval_node(const ComputeGraph& g, const IntervalBox& box,
                   const ParamStore& store, BoundWorkspace& ws, int id) {
  const Node& n = g.node(id);
  Vec& lo = ws.lo[id];
  Vec& hi = ws.hi[id];
  if (!g.input_dependent(id)) {
    lo = ws.center.vals[id];
    hi = lo;
    return;
  }
  switch (n.kind) {
    case OpKind::kInput: {
      int off = g.inputs()[n.slot].offset;
      lo = box.lo.segment(off, n.dim);
      hi = box.hi.segment(off, n.dim);
      break;
    }
    case OpKind::kAffine: {
      const Vec& al = ws.lo[n.args[0]];
      const Vec& ah = ws.hi[n.args[0]];
      for (int r = 0; r < n.dim; ++r) {
        double s_lo = n.offset[r], s_hi = n.offset[r];
        for (int q = 0; q < n.matrix.cols(); ++q) {
          double m = n.matrix(r, q);
          if (m >= 0) {
            s_lo += m * al[q];
            s_hi += m * ah[q];
          } else {
            s_lo += m * ah[q];
            s_hi += m * al[q];
          }
        }
        lo[r] = s_lo;
        hi[r] = s_hi;
      }
      break;
    }
    case OpKind::kMatVec: {
      if (g.input_dependent(n.args[0]))
        throw std::runtime_error(
            "bound propagation requires a constant matrix operand");
      const Vec& mv = ws.center.vals[n.args[0]];
      const Vec& al = ws.lo[n.args[1]];
      const Vec& ah = ws.hi[n.args[1]];
      for (int r = 0; r < n.rows; ++r) {
        double s_lo = 0, s_hi = 0;
        for (int q = 0; q < n.cols; ++q) {
          double m = mv[r * n.cols + q];
          if (m >= 0) {
            s_lo += m * al[q];
            s_hi += m * ah[q];
          } else {
            s_lo += m * ah[q];
            s_hi += m * al[q];
          }
        }
        lo[r] = s_lo;
        hi[r] = s_hi;
      }
      break;
    }
    case OpKind::kAdd: {
      const Node& na = g.node(n.args[0]);
      const Node& nb = g.node(n.args[1]);
      for (int k = 0; k < n.dim; ++k) {
        int ka = bcast(k, na.dim), kb = bcast(k, nb.dim);
        lo[k] = ws.lo[n.args[0]][ka] + ws.lo[n.args[1]][kb];
        hi[k] = ws.hi[n.args[0]][ka] + ws.hi[n.args[1]][kb];
      }
      break;
    }
    case OpKind::kSub: {
      const Node& na = g.node(n.args[0]);
      const Node& nb = g.node(n.args[1]);
      for (int k = 0; k < n.dim; ++k) {
        int ka = bcast(k, na.dim), kb = bcast(k, nb.dim);
        lo[k] = ws.lo[n.args[0]][ka] - ws.hi[n.args[1]][kb];
        hi[k] = ws.hi[n.args[0]][ka] - ws.lo[n.args[1]][kb];
      }
      break;
    }
    case OpKind::kMul: {
      const Node& na = g.node(n.args[0]);
      const Node& nb = g.node(n.args[1]);
      bool same = n.args[0] == n.args[1];
      for (int k = 0; k < n.dim; ++k) {
        int ka = bcast(k, na.dim), kb = bcast(k, nb.dim);
        double lx = ws.lo[n.args[0]][ka], ux = ws.hi[n.args[0]][ka];
        double ly = ws.lo[n.args[1]][kb], uy = ws.hi[n.args[1]][kb];
        if (same && ka == kb) {
          double m = std::max(lx * lx, ux * ux);
          lo[k] = (lx <= 0 && ux >= 0) ? 0 : std::min(lx * lx, ux * ux);
          hi[k] = m;
        } else {
          double c1 = lx * ly, c2 = lx * uy, c3 = ux * ly, c4 = ux * uy;
          lo[k] = std::min(std::min(c1, c2), std::min(c3, c4));
          hi[k] = std::max(std::max(c1, c2), std::max(c3, c4));
        }
      }
      break;
    }
    case OpKind::kDot: {
      bool same = n.args[0] == n.args[1];
      double s_lo = 0, s_hi = 0;
      int ad = g.node(n.args[0]).dim;
      for (int k = 0; k < ad; ++k) {
        double lx = ws.lo[n.args[0]][k], ux = ws.hi[n.args[0]][k];
        double ly = ws.lo[n.args[1]][k], uy = ws.hi[n.args[1]][k];
        if (same) {
          s_lo += (lx <= 0 && ux >= 0) ? 0 : std::min(lx * lx, ux * ux);
          s_hi += std::max(lx * lx, ux * ux);
        } else {
          double c1 = lx * ly, c2 = lx * uy, c3 = ux * ly, c4 = ux * uy;
          s_lo += std::min(std::min(c1, c2), std::min(c3, c4));
          s_hi += std::max(std::max(c1, c2), std::max(c3, c4));
        }
      }
      lo[0] = s_lo;
      hi[0] = s_hi;
      break;
    }
    case OpKind::kSquare: {
      for (int k = 0; k < n.dim; ++k) {
        double l = ws.lo[n.args[0]][k], u = ws.hi[n.args[0]][k];
        lo[k] = (l <= 0 && u >= 0) ? 0 : std::min(l * l, u * u);
        hi[k] = std::max(l * l, u * u);
      }
      break;
    }
    case OpKind::kSum: {
      lo[0] = ws.lo[n.args[0]].sum();
      hi[0] = ws.hi[n.args[0]].sum();
      break;
    }
    case OpKind::kRelu: {
      lo = ws.lo[n.args[0]].cwiseMax(0.0);
      hi = ws.hi[n.args[0]].cwiseMax(0.0);
      break;
    }
    case OpKind::kLeakyRelu: {
      double s = n.slope;
      for (int k = 0; k < n.dim; ++k) {
        double l = ws.lo[n.args[0]][k], u = ws.hi[n.args[0]][k];
        lo[k] = l > 0 ? l : s * l;
        hi[k] = u > 0 ? u : s * u;
      }
      break;
    }
    case OpKind::kTanh: {
      lo = ws.lo[n.args[0]].array().tanh();
      hi = ws.hi[n.args[0]].array().tanh();
      break;
    }
    case OpKind::kSin: {
      for (int k = 0; k < n.dim; ++k) {
        double l = ws.lo[n.args[0]][k], u = ws.hi[n.args[0]][k];
        if (u - l >= 2 * kPi) {
          lo[k] = -1;
          hi[k] = 1;
          continue;
        }
        hi[k] = grid_point_in(l, u, kPi / 2, 2 * kPi, 1e-9)
                    ? 1.0
                    : std::max(std::sin(l), std::sin(u));
        lo[k] = grid_point_in(l, u, -kPi / 2, 2 * kPi, 1e-9)
                    ? -1.0
                    : std::min(std::sin(l), std::sin(u));
      }
      break;
    }
    case OpKind::kNeg: {
      lo = -ws.hi[n.args[0]];
      hi = -ws.lo[n.args[0]];
      break;
    }
    case OpKind::kExp: {
      lo = ws.lo[n.args[0]].array().exp();
      hi = ws.hi[n.args[0]].array().exp();
      break;
    }
    case OpKind::kSqrt: {
      for (int k = 0; k < n.dim; ++k) {
        double l = ws.lo[n.args[0]][k], u = ws.hi[n.args[0]][k];
        if (u < -1e-12)
          throw std::runtime_error("sqrt bound over a negative interval");
        lo[k] = std::sqrt(std::max(0.0, l));
        hi[k] = std::sqrt(std::max(0.0, u));
      }
      break;
    }
    case OpKind::kRecip: {
      for (int k = 0; k < n.dim; ++k) {
        double l = ws.lo[n.args[0]][k], u = ws.hi[n.args[0]][k];
        if (l <= 0)
          throw std::runtime_error(
              "reciprocal bound needs a positive lower bound");
        lo[k] = 1.0 / u;
        hi[k] = 1.0 / l;
      }
      break;
    }
    case OpKind::kScaleByParam: {
      double p = store.value(n.slot)[0];
      if (p >= 0) {
        lo = p * ws.lo[n.args[0]];
        hi = p * ws.hi[n.args[0]];
      } else {
        lo = p * ws.hi[n.args[0]];
        hi = p * ws.lo[n.args[0]];
      }
      break;
    }
    case OpKind::kSlice: {
      lo = ws.lo[n.args[0]].segment(n.begin, n.dim);
      hi = ws.hi[n.args[0]].segment(n.begin, n.dim);
      break;
    }
    case OpKind::kConcat: {
      int off = 0;
      for (int a : n.args) {
        int d = g.node(a).dim;
        lo.segment(off, d) = ws.lo[a];
        hi.segment(off, d) = ws.hi[a];
        off += d;
      }
      break;
    }
    case OpKind::kParam:
    case OpKind::kConstant:
      lo = ws.center.vals[id];
      hi = lo;
      break;
  }
}

}  // namespace

void interval_propagate(const ComputeGraph& g, const IntervalBox& box,
                        const ParamStore& store, BoundWorkspace& ws) {
  if (box.dim() != g.input_dim())
    throw std::invalid_argument("interval_propagate: box dimension mismatch");
  resize_ws(g, ws);

  Vec c = box.center();
  Vec out_tmp;
  eval_vec(g, c.data(), store, ws.center, out_tmp);

  for (int id = 0; id < g.num_nodes(); ++id)
    interval_node(g, box, store, ws, id);
}

namespace {

struct Lines {
  double al = 0, bl = 0;  // lower: al*x + bl <= f(x)
  double au = 0, bu = 0;  // upper: au*x + bu >= f(x)
};

// Linear enclosure of a scalar primitive on [l, u], l < u strictly.
// lo_img / hi_img are the forward interval images, used as constant
// fallbacks. lower_slope < 0 means no override.
Lines relax_elem(OpKind kind, double slope, double l, double u, double lo_img,
                 double hi_img, double lower_slope) {
  Lines r;
  double m = 0.5 * (l + u);
  switch (kind) {
    case OpKind::kRelu: {
      if (l >= 0) {
        r.al = r.au = 1;
      } else if (u <= 0) {
        // all zero
      } else {
        double k = u / (u - l);
        r.au = k;
        r.bu = -k * l;
        r.al = std::abs(u) >= std::abs(l) ? k : 0.0;
        if (lower_slope >= 0) r.al = std::min(1.0, std::max(0.0, lower_slope));
      }
      break;
    }
    case OpKind::kLeakyRelu: {
      if (l >= 0) {
        r.al = r.au = 1;
      } else if (u <= 0) {
        r.al = r.au = slope;
      } else {
        double k = (u - slope * l) / (u - l);
        r.au = k;
        r.bu = slope * l - k * l;
        r.al = std::abs(u) >= std::abs(l) ? k : slope;
        if (lower_slope >= 0)
          r.al = std::min(1.0, std::max(slope, lower_slope));
      }
      break;
    }
    case OpKind::kTanh: {
      double fl = std::tanh(l), fu = std::tanh(u);
      double sec = (fu - fl) / (u - l);
      if (l >= 0) {  // concave
        r.al = sec;
        r.bl = fl - sec * l;
        double t = 1 - std::tanh(m) * std::tanh(m);
        r.au = t;
        r.bu = std::tanh(m) - t * m;
      } else if (u <= 0) {  // convex
        double t = 1 - std::tanh(m) * std::tanh(m);
        r.al = t;
        r.bl = std::tanh(m) - t * m;
        r.au = sec;
        r.bu = fl - sec * l;
      } else {
        // parallel lines; tanh' is smallest at the endpoints on [l, u]
        double k = std::min(1 - fl * fl, 1 - fu * fu);
        r.al = k;
        r.bl = fl - k * l;
        r.au = k;
        r.bu = fu - k * u;
      }
      break;
    }
    case OpKind::kSin: {
      bool piece = false, concave = false;
      if (std::abs(l) < 1e6) {
        double fm = std::floor(l / kPi);
        if (u <= (fm + 1) * kPi) {
          piece = true;
          concave = std::fmod(fm, 2.0) == 0.0;
        }
      }
      if (!piece) {
        r.bl = lo_img;
        r.bu = hi_img;
        break;
      }
      double fl = std::sin(l), fu = std::sin(u);
      double sec = (fu - fl) / (u - l);
      double t = std::cos(m);
      if (concave) {
        r.al = sec;
        r.bl = fl - sec * l;
        r.au = t;
        r.bu = std::sin(m) - t * m;
      } else {
        r.al = t;
        r.bl = std::sin(m) - t * m;
        r.au = sec;
        r.bu = fl - sec * l;
      }
      break;
    }
    case OpKind::kSquare: {
      r.al = 2 * m;
      r.bl = -m * m;
      r.au = l + u;
      r.bu = -l * u;
      break;
    }
    case OpKind::kExp: {
      double em = std::exp(m);
      r.al = em;
      r.bl = em * (1 - m);
      double sec = (std::exp(u) - std::exp(l)) / (u - l);
      r.au = sec;
      r.bu = std::exp(l) - sec * l;
      break;
    }
    case OpKind::kSqrt: {
      l = std::max(0.0, l);
      m = 0.5 * (l + u);
      double fl = std::sqrt(l), fu = std::sqrt(u);
      double sec = (fu - fl) / (u - l);
      r.al = sec;
      r.bl = fl - sec * l;
      double t = 0.5 / std::sqrt(m);
      r.au = t;
      r.bu = std::sqrt(m) - t * m;
      break;
    }
    case OpKind::kRecip: {
      r.al = -1.0 / (m * m);
      r.bl = 2.0 / m;
      r.au = -1.0 / (l * u);
      r.bu = (l + u) / (l * u);
      break;
    }
    default:
      throw std::logic_error("relax_elem: not an elementwise primitive");
  }
  return r;
}

// Backward substitution range for one vector node. Rows r < dim carry e_r
// (lower bounds), rows dim + r carry -e_r (negated uppers); one traversal
// serves both because every relaxation choice keys on the sign of the
// accumulated coefficient. Consumes only finalized ranges of earlier nodes,
// so the caller must visit nodes in topological order.
void backsub_refine(const ComputeGraph& g, const IntervalBox& box,
                    const ParamStore& store, BoundWorkspace& ws, int target) {
  const int m = g.node(target).dim;
  const int rows = 2 * m;
  std::vector<char> act(target + 1, 0);
  auto touch = [&](int a) {
    if (act[a]) return;
    act[a] = 1;
    if (ws.mco[a].rows() != rows || ws.mco[a].cols() != g.node(a).dim)
      ws.mco[a].resize(rows, g.node(a).dim);
    ws.mco[a].setZero();
  };
  touch(target);
  ws.mco[target].topRows(m) = Mat::Identity(m, m);
  ws.mco[target].bottomRows(m) = -Mat::Identity(m, m);
  ws.moff = Vec::Zero(rows);
  ws.min_co = Mat::Zero(rows, g.input_dim());

  auto push_sq = [&](int a, int ka, const Vec& q) {
    double l = ws.lo[a][ka], u = ws.hi[a][ka];
    if (l == u) {
      ws.moff += q * (l * l);
      return;
    }
    touch(a);
    Vec cp = q.cwiseMax(0.0), cn = q.cwiseMin(0.0);
    double mid = 0.5 * (l + u);
    ws.mco[a].col(ka) += cp * (2.0 * mid) + cn * (l + u);
    ws.moff += cp * (-mid * mid) + cn * (-l * u);
  };
  auto push_bil = [&](int a, int ka, int b, int kb, const Vec& q) {
    double lx = ws.lo[a][ka], ux = ws.hi[a][ka];
    double ly = ws.lo[b][kb], uy = ws.hi[b][kb];
    if (lx == ux && ly == uy) {
      ws.moff += q * (lx * ly);
      return;
    }
    if (lx == ux) {
      touch(b);
      ws.mco[b].col(kb) += q * lx;
      return;
    }
    if (ly == uy) {
      touch(a);
      ws.mco[a].col(ka) += q * ly;
      return;
    }
    double mx = 0.5 * (lx + ux), my = 0.5 * (ly + uy);
    double axL, ayL, c0L;
    {
      double v1 = ly * mx + lx * my - lx * ly;
      double v2 = uy * mx + ux * my - ux * uy;
      if (v1 >= v2) {
        axL = ly, ayL = lx, c0L = -lx * ly;
      } else {
        axL = uy, ayL = ux, c0L = -ux * uy;
      }
    }
    double axU, ayU, c0U;
    {
      double v1 = ly * mx + ux * my - ux * ly;
      double v2 = uy * mx + lx * my - lx * uy;
      if (v1 <= v2) {
        axU = ly, ayU = ux, c0U = -ux * ly;
      } else {
        axU = uy, ayU = lx, c0U = -lx * uy;
      }
    }
    touch(a);
    touch(b);
    Vec cp = q.cwiseMax(0.0), cn = q.cwiseMin(0.0);
    ws.mco[a].col(ka) += cp * axL + cn * axU;
    ws.mco[b].col(kb) += cp * ayL + cn * ayU;
    ws.moff += cp * c0L + cn * c0U;
  };

  for (int id = target; id >= 0; --id) {
    if (!act[id]) continue;
    const Node& n = g.node(id);
    const Mat& C = ws.mco[id];
    if (!g.input_dependent(id)) {
      ws.moff += C * ws.center.vals[id];
      continue;
    }
    switch (n.kind) {
      case OpKind::kInput: {
        int so = g.inputs()[n.slot].offset;
        ws.min_co.middleCols(so, n.dim) += C;
        break;
      }
      case OpKind::kAffine: {
        int a = n.args[0];
        touch(a);
        ws.mco[a] += C * n.matrix;
        ws.moff += C * n.offset;
        break;
      }
      case OpKind::kMatVec: {
        const Vec& mv = ws.center.vals[n.args[0]];
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                       Eigen::RowMajor>>
            M(mv.data(), n.rows, n.cols);
        int a = n.args[1];
        touch(a);
        ws.mco[a] += C * M;
        break;
      }
      case OpKind::kAdd: {
        for (int side = 0; side < 2; ++side) {
          int a = n.args[side];
          touch(a);
          if (g.node(a).dim == n.dim)
            ws.mco[a] += C;
          else
            ws.mco[a].col(0) += C.rowwise().sum();
        }
        break;
      }
      case OpKind::kSub: {
        int a = n.args[0], b = n.args[1];
        touch(a);
        touch(b);
        if (g.node(a).dim == n.dim)
          ws.mco[a] += C;
        else
          ws.mco[a].col(0) += C.rowwise().sum();
        if (g.node(b).dim == n.dim)
          ws.mco[b] -= C;
        else
          ws.mco[b].col(0) -= C.rowwise().sum();
        break;
      }
      case OpKind::kMul: {
        int a = n.args[0], b = n.args[1];
        int ad = g.node(a).dim, bd = g.node(b).dim;
        bool same = a == b;
        for (int k = 0; k < n.dim; ++k) {
          int ka = bcast(k, ad), kb = bcast(k, bd);
          Vec q = C.col(k);
          if (same && ka == kb)
            push_sq(a, ka, q);
          else
            push_bil(a, ka, b, kb, q);
        }
        break;
      }
      case OpKind::kDot: {
        int a = n.args[0], b = n.args[1];
        int ad = g.node(a).dim;
        bool same = a == b;
        Vec q = C.col(0);
        for (int k = 0; k < ad; ++k) {
          if (same)
            push_sq(a, k, q);
          else
            push_bil(a, k, b, k, q);
        }
        break;
      }
      case OpKind::kSquare: {
        int a = n.args[0];
        for (int k = 0; k < n.dim; ++k) push_sq(a, k, C.col(k));
        break;
      }
      case OpKind::kSum: {
        int a = n.args[0];
        touch(a);
        ws.mco[a].colwise() += C.col(0);
        break;
      }
      case OpKind::kNeg: {
        int a = n.args[0];
        touch(a);
        ws.mco[a] -= C;
        break;
      }
      case OpKind::kScaleByParam: {
        int a = n.args[0];
        touch(a);
        ws.mco[a] += store.value(n.slot)[0] * C;
        break;
      }
      case OpKind::kSlice: {
        int a = n.args[0];
        touch(a);
        ws.mco[a].middleCols(n.begin, n.dim) += C;
        break;
      }
      case OpKind::kConcat: {
        int o = 0;
        for (int a : n.args) {
          int d = g.node(a).dim;
          touch(a);
          ws.mco[a] += C.middleCols(o, d);
          o += d;
        }
        break;
      }
      case OpKind::kRelu:
      case OpKind::kLeakyRelu:
      case OpKind::kTanh:
      case OpKind::kSin:
      case OpKind::kExp:
      case OpKind::kSqrt:
      case OpKind::kRecip: {
        int a = n.args[0];
        touch(a);
        for (int k = 0; k < n.dim; ++k) {
          double l = ws.lo[a][k], u = ws.hi[a][k];
          if (l == u) {
            ws.moff += C.col(k) * ws.lo[id][k];
            continue;
          }
          Lines ln = relax_elem(n.kind, n.slope, l, u, ws.lo[id][k],
                                ws.hi[id][k], -1);
          Vec cp = C.col(k).cwiseMax(0.0), cn = C.col(k).cwiseMin(0.0);
          ws.mco[a].col(k) += cp * ln.al + cn * ln.au;
          ws.moff += cp * ln.bl + cn * ln.bu;
        }
        break;
      }
      case OpKind::kParam:
      case OpKind::kConstant:
        break;
    }
  }

  Vec lb = ws.moff;
  for (int k = 0; k < g.input_dim(); ++k)
    for (int r = 0; r < rows; ++r) {
      double cf = ws.min_co(r, k);
      lb[r] += cf >= 0 ? cf * box.lo[k] : cf * box.hi[k];
    }
  for (int k = 0; k < m; ++k) {
    double nl = lb[k] - 1e-12 * (1 + std::abs(lb[k]));
    double nh = -lb[m + k] + 1e-12 * (1 + std::abs(lb[m + k]));
    if (nl > ws.lo[target][k]) ws.lo[target][k] = nl;
    if (nh < ws.hi[target][k]) ws.hi[target][k] = nh;
    if (ws.lo[target][k] > ws.hi[target][k]) {
      double mid = 0.5 * (ws.lo[target][k] + ws.hi[target][k]);
      ws.lo[target][k] = ws.hi[target][k] = mid;
    }
  }
}

// Forward sweep with per-node refinement: affine images of values that
// already passed through a nonlinearity get their ranges re-derived by
// backward substitution before anything downstream consumes them. Plain
// affine-of-input ranges are exact already and are left alone.
void propagate_refined(const ComputeGraph& g, const IntervalBox& box,
                       const ParamStore& store, BoundWorkspace& ws) {
  if (box.dim() != g.input_dim())
    throw std::invalid_argument("interval_propagate: box dimension mismatch");
  resize_ws(g, ws);

  Vec c = box.center();
  Vec out_tmp;
  eval_vec(g, c.data(), store, ws.center, out_tmp);

  for (int id = 0; id < g.num_nodes(); ++id) {
    interval_node(g, box, store, ws, id);
    const Node& n = g.node(id);
    if (!g.input_dependent(id)) continue;
    if ((n.kind == OpKind::kAffine && ws.deep[n.args[0]]) ||
        (n.kind == OpKind::kMatVec && ws.deep[n.args[1]]))
      backsub_refine(g, box, store, ws, id);
  }
}

using SlopeMap = std::unordered_map<std::uint64_t, double>;

std::uint64_t slope_key(int id, int k) {
  return (static_cast<std::uint64_t>(id) << 32) | static_cast<std::uint32_t>(k);
}

// One backward substitution. Returns the raw affine lower bound minimized
// over the box. Adds |coefficient| into ws.importance at input leaves.
double backward_pass(const ComputeGraph& g, const IntervalBox& box,
                     const ParamStore& store, BoundWorkspace& ws,
                     const SlopeMap* slopes) {
  for (int i = 0; i < g.num_nodes(); ++i) {
    ws.coef[i].setZero();
    ws.acoef[i].setZero();
  }
  ws.in_coef.setZero();
  ws.importance.setZero();
  std::vector<char> active(g.num_nodes(), 0);

  int out = g.output();
  ws.coef[out][0] = 1;
  ws.acoef[out][0] = 1;
  active[out] = 1;
  double off = 0;

  // bilinear term q * (x_a[ka] * x_b[kb]) with both factors boxed:
  // McCormick plane, picked by its value at the interval midpoint. aq carries
  // the magnitude pass; its weights are the partial-derivative bounds, so
  // importance survives symmetric intervals where the plane slope is zero.
  auto push_bilinear = [&](int a, int ka, int b, int kb, double q, double aq) {
    double lx = ws.lo[a][ka], ux = ws.hi[a][ka];
    double ly = ws.lo[b][kb], uy = ws.hi[b][kb];
    if (lx == ux && ly == uy) {
      off += q * lx * ly;
      return;
    }
    if (lx == ux) {
      ws.coef[b][kb] += q * lx;
      ws.acoef[b][kb] += aq * std::abs(lx);
      active[b] = 1;
      return;
    }
    if (ly == uy) {
      ws.coef[a][ka] += q * ly;
      ws.acoef[a][ka] += aq * std::abs(ly);
      active[a] = 1;
      return;
    }
    double mx = 0.5 * (lx + ux), my = 0.5 * (ly + uy);
    double ax, ay, c0;
    if (q >= 0) {
      double v1 = ly * mx + lx * my - lx * ly;
      double v2 = uy * mx + ux * my - ux * uy;
      if (v1 >= v2) {
        ax = ly;
        ay = lx;
        c0 = -lx * ly;
      } else {
        ax = uy;
        ay = ux;
        c0 = -ux * uy;
      }
    } else {
      double v1 = ly * mx + ux * my - ux * ly;
      double v2 = uy * mx + lx * my - lx * uy;
      if (v1 <= v2) {
        ax = ly;
        ay = ux;
        c0 = -ux * ly;
      } else {
        ax = uy;
        ay = lx;
        c0 = -lx * uy;
      }
    }
    ws.coef[a][ka] += q * ax;
    ws.coef[b][kb] += q * ay;
    ws.acoef[a][ka] += aq * std::max(std::abs(ly), std::abs(uy));
    ws.acoef[b][kb] += aq * std::max(std::abs(lx), std::abs(ux));
    off += q * c0;
    active[a] = 1;
    active[b] = 1;
  };

  // square term q * x_a[ka]^2: tangent / secant enclosure
  auto push_square = [&](int a, int ka, double q, double aq) {
    double l = ws.lo[a][ka], u = ws.hi[a][ka];
    if (l == u) {
      off += q * l * l;
      return;
    }
    if (q != 0) {
      Lines ln = relax_elem(OpKind::kSquare, 0, l, u, 0, 0, -1);
      if (q >= 0) {
        ws.coef[a][ka] += q * ln.al;
        off += q * ln.bl;
      } else {
        ws.coef[a][ka] += q * ln.au;
        off += q * ln.bu;
      }
    }
    ws.acoef[a][ka] += aq * 2.0 * std::max(std::abs(l), std::abs(u));
    active[a] = 1;
  };

  // largest derivative magnitude of an elementwise op over [l, u]
  auto lip_elem = [](OpKind k, double slope, double l, double u) {
    switch (k) {
      case OpKind::kLeakyRelu: return std::max(1.0, std::abs(slope));
      case OpKind::kTanh: {
        if (l <= 0 && 0 <= u) return 1.0;
        double t = std::tanh(std::min(std::abs(l), std::abs(u)));
        return 1.0 - t * t;
      }
      case OpKind::kExp: return std::exp(std::min(u, 700.0));
      case OpKind::kSqrt: return l > 1e-12 ? 0.5 / std::sqrt(l) : 1e6;
      case OpKind::kRecip: {
        double m = std::max(std::min(std::abs(l), std::abs(u)), 1e-9);
        return 1.0 / (m * m);
      }
      default: return 1.0;  // relu, sin
    }
  };

  for (int id = out; id >= 0; --id) {
    if (!active[id]) continue;
    const Node& n = g.node(id);
    const Vec& c = ws.coef[id];
    const Vec& ac = ws.acoef[id];
    if (!g.input_dependent(id)) {
      off += c.dot(ws.center.vals[id]);
      continue;
    }
    switch (n.kind) {
      case OpKind::kInput: {
        int so = g.inputs()[n.slot].offset;
        for (int k = 0; k < n.dim; ++k) {
          ws.in_coef[so + k] += c[k];
          ws.importance[so + k] += ac[k];
        }
        break;
      }
      case OpKind::kAffine: {
        int a = n.args[0];
        ws.coef[a] += n.matrix.transpose() * c;
        ws.acoef[a] += n.matrix.cwiseAbs().transpose() * ac;
        off += c.dot(n.offset);
        active[a] = 1;
        break;
      }
      case OpKind::kMatVec: {
        const Vec& mv = ws.center.vals[n.args[0]];
        int a = n.args[1];
        for (int r = 0; r < n.rows; ++r)
          for (int q = 0; q < n.cols; ++q) {
            ws.coef[a][q] += mv[r * n.cols + q] * c[r];
            ws.acoef[a][q] += std::abs(mv[r * n.cols + q]) * ac[r];
          }
        active[a] = 1;
        break;
      }
      case OpKind::kAdd: {
        for (int side = 0; side < 2; ++side) {
          int a = n.args[side];
          int ad = g.node(a).dim;
          if (ad == n.dim) {
            ws.coef[a] += c;
            ws.acoef[a] += ac;
          } else {
            ws.coef[a][0] += c.sum();
            ws.acoef[a][0] += ac.sum();
          }
          active[a] = 1;
        }
        break;
      }
      case OpKind::kSub: {
        int a = n.args[0], b = n.args[1];
        if (g.node(a).dim == n.dim) {
          ws.coef[a] += c;
          ws.acoef[a] += ac;
        } else {
          ws.coef[a][0] += c.sum();
          ws.acoef[a][0] += ac.sum();
        }
        if (g.node(b).dim == n.dim) {
          ws.coef[b] -= c;
          ws.acoef[b] += ac;
        } else {
          ws.coef[b][0] -= c.sum();
          ws.acoef[b][0] += ac.sum();
        }
        active[a] = 1;
        active[b] = 1;
        break;
      }
      case OpKind::kMul: {
        int a = n.args[0], b = n.args[1];
        int ad = g.node(a).dim, bd = g.node(b).dim;
        bool same = a == b;
        for (int k = 0; k < n.dim; ++k) {
          if (c[k] == 0 && ac[k] == 0) continue;
          int ka = bcast(k, ad), kb = bcast(k, bd);
          if (same && ka == kb)
            push_square(a, ka, c[k], ac[k]);
          else
            push_bilinear(a, ka, b, kb, c[k], ac[k]);
        }
        break;
      }
      case OpKind::kDot: {
        int a = n.args[0], b = n.args[1];
        int ad = g.node(a).dim;
        bool same = a == b;
        if (c[0] != 0 || ac[0] != 0) {
          for (int k = 0; k < ad; ++k) {
            if (same)
              push_square(a, k, c[0], ac[0]);
            else
              push_bilinear(a, k, b, k, c[0], ac[0]);
          }
        }
        break;
      }
      case OpKind::kSquare: {
        int a = n.args[0];
        for (int k = 0; k < n.dim; ++k)
          if (c[k] != 0 || ac[k] != 0) push_square(a, k, c[k], ac[k]);
        break;
      }
      case OpKind::kSum: {
        int a = n.args[0];
        ws.coef[a].array() += c[0];
        ws.acoef[a].array() += ac[0];
        active[a] = 1;
        break;
      }
      case OpKind::kNeg: {
        int a = n.args[0];
        ws.coef[a] -= c;
        ws.acoef[a] += ac;
        active[a] = 1;
        break;
      }
      case OpKind::kScaleByParam: {
        int a = n.args[0];
        double s = store.value(n.slot)[0];
        ws.coef[a] += s * c;
        ws.acoef[a] += std::abs(s) * ac;
        active[a] = 1;
        break;
      }
      case OpKind::kSlice: {
        int a = n.args[0];
        ws.coef[a].segment(n.begin, n.dim) += c;
        ws.acoef[a].segment(n.begin, n.dim) += ac;
        active[a] = 1;
        break;
      }
      case OpKind::kConcat: {
        int o = 0;
        for (int a : n.args) {
          int d = g.node(a).dim;
          ws.coef[a] += c.segment(o, d);
          ws.acoef[a] += ac.segment(o, d);
          active[a] = 1;
          o += d;
        }
        break;
      }
      case OpKind::kRelu:
      case OpKind::kLeakyRelu:
      case OpKind::kTanh:
      case OpKind::kSin:
      case OpKind::kExp:
      case OpKind::kSqrt:
      case OpKind::kRecip: {
        int a = n.args[0];
        for (int k = 0; k < n.dim; ++k) {
          double l = ws.lo[a][k], u = ws.hi[a][k];
          if (c[k] != 0) {
            if (l == u) {
              off += c[k] * ws.lo[id][k];
            } else {
              double ov = -1;
              if (slopes &&
                  (n.kind == OpKind::kRelu || n.kind == OpKind::kLeakyRelu)) {
                auto it = slopes->find(slope_key(id, k));
                if (it != slopes->end()) ov = it->second;
              }
              Lines ln = relax_elem(n.kind, n.slope, l, u, ws.lo[id][k],
                                    ws.hi[id][k], ov);
              if (c[k] >= 0) {
                ws.coef[a][k] += c[k] * ln.al;
                off += c[k] * ln.bl;
              } else {
                ws.coef[a][k] += c[k] * ln.au;
                off += c[k] * ln.bu;
              }
            }
          }
          if (ac[k] != 0 && l != u)
            ws.acoef[a][k] += ac[k] * lip_elem(n.kind, n.slope, l, u);
        }
        active[a] = 1;
        break;
      }
      case OpKind::kParam:
      case OpKind::kConstant:
        // input-independent, handled above
        break;
    }
  }

  double bound = off;
  for (int k = 0; k < g.input_dim(); ++k)
    bound += ws.in_coef[k] >= 0 ? ws.in_coef[k] * box.lo[k]
                                : ws.in_coef[k] * box.hi[k];
  return bound;
}

}  // namespace

double lower_bound(const ComputeGraph& g, const IntervalBox& box,
                   const ParamStore& store, BoundWorkspace& ws,
                   Vec* importance, const RelaxOptions& opt) {
  if (g.output_dim() != 1)
    throw std::invalid_argument("lower_bound: scalar graph required");
  if (opt.backsub_intermediates)
    propagate_refined(g, box, store, ws);
  else
    interval_propagate(g, box, store, ws);
  double raw = backward_pass(g, box, store, ws, nullptr);

  if (opt.alpha_refine_steps > 0) {
    // coordinate ascent over the unstable kink lower slopes
    SlopeMap slopes;
    for (int id = 0; id < g.num_nodes(); ++id) {
      const Node& n = g.node(id);
      if (n.kind != OpKind::kRelu && n.kind != OpKind::kLeakyRelu) continue;
      if (!g.input_dependent(id)) continue;
      int a = n.args[0];
      for (int k = 0; k < n.dim; ++k) {
        double l = ws.lo[a][k], u = ws.hi[a][k];
        if (l < 0 && u > 0) {
          double init = std::abs(u) >= std::abs(l)
                            ? (n.kind == OpKind::kRelu
                                   ? u / (u - l)
                                   : (u - n.slope * l) / (u - l))
                            : (n.kind == OpKind::kRelu ? 0.0 : n.slope);
          slopes[slope_key(id, k)] = init;
        }
      }
    }
    double step = opt.refine_step;
    for (int it = 0; it < opt.alpha_refine_steps && !slopes.empty(); ++it) {
      for (auto& kv : slopes) {
        double base = kv.second;
        for (double cand : {base + step, base - step}) {
          cand = std::min(1.0, std::max(0.0, cand));
          if (cand == kv.second) continue;
          double keep = kv.second;
          kv.second = cand;
          double b = backward_pass(g, box, store, ws, &slopes);
          if (b > raw)
            raw = b;
          else
            kv.second = keep;
        }
      }
      step *= 0.5;
    }
    raw = backward_pass(g, box, store, ws, &slopes);
  }

  if (importance) *importance = ws.importance;
  return raw - 1e-12 * (1 + std::abs(raw));
}

const char* verdict_name(VerdictKind k) {
  switch (k) {
    case VerdictKind::kVerified:
      return "verified";
    case VerdictKind::kCounterexample:
      return "counterexample";
    case VerdictKind::kUnknown:
      return "unknown";
  }
  return "?";
}

namespace {

struct HeapEntry {
  double key = 0;
  long order = 0;
  IntervalBox box;
};

struct HeapCmp {
  bool operator()(const HeapEntry& a, const HeapEntry& b) const {
    if (a.key != b.key) return a.key > b.key;  // smallest bound first
    return a.order > b.order;                  // then oldest first
  }
};

int pick_split_dim(const IntervalBox& box, const Vec& importance) {
  int best = 0;
  double best_score = -1;
  for (int k = 0; k < box.dim(); ++k) {
    double s = box.width(k) * importance[k];
    if (s > best_score) {
      best_score = s;
      best = k;
    }
  }
  if (best_score <= 0) {
    for (int k = 0; k < box.dim(); ++k)
      if (box.width(k) > box.width(best)) best = k;
  }
  return best;
}

}  // namespace

Verdict verify_positive(const ComputeGraph& g, const IntervalBox& box,
                        const ParamStore& store, const BabConfig& cfg) {
  if (g.output_dim() != 1)
    throw std::invalid_argument("verify_positive: scalar graph required");
  auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  AttackConfig pa;
  pa.steps = cfg.pgd_steps;
  pa.restarts = cfg.pgd_restarts;
  pa.workers = 1;

  std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapCmp> heap;
  heap.push({-kInf, 0, box});

  std::mutex mu;
  std::condition_variable cv;
  long pops = 0, pushed = 0, in_flight = 0;
  bool stop = false, budget_hit = false;
  double min_closed = kInf;
  bool ce_found = false;
  Vec ce_point;
  double ce_value = 0;

  auto work = [&](int) {
    BoundWorkspace bws;
    Vec importance;
    std::unique_lock<std::mutex> lk(mu);
    while (true) {
      cv.wait(lk, [&] { return stop || !heap.empty() || in_flight == 0; });
      if (stop) return;
      if (heap.empty()) {
        if (in_flight == 0) return;
        continue;
      }
      if (pops >= cfg.max_subdomains || elapsed() > cfg.time_limit) {
        budget_hit = true;
        stop = true;
        cv.notify_all();
        return;
      }
      HeapEntry e = heap.top();
      heap.pop();
      ++pops;
      long my = pops;
      ++in_flight;
      lk.unlock();

      Vec warm = e.box.center();
      AttackResult atk = pgd_minimize(
          g, e.box, store, pa,
          mix_seed(cfg.seed, static_cast<std::uint64_t>(my)), &warm);
      bool is_ce = atk.value <= 0;
      double bnd = 0;
      int dim = 0;
      if (!is_ce) {
        bnd = lower_bound(g, e.box, store, bws, &importance, cfg.relax);
        dim = pick_split_dim(e.box, importance);
      }

      lk.lock();
      --in_flight;
      if (is_ce) {
        if (!ce_found) {
          ce_found = true;
          ce_point = atk.point;
          ce_value = atk.value;
        }
        stop = true;
        cv.notify_all();
        return;
      }
      if (bnd > cfg.delta_sound) {
        min_closed = std::min(min_closed, bnd);
      } else {
        double mid = 0.5 * (e.box.lo[dim] + e.box.hi[dim]);
        IntervalBox left = e.box, right = e.box;
        left.hi[dim] = mid;
        right.lo[dim] = mid;
        heap.push({bnd, ++pushed, std::move(left)});
        heap.push({bnd, ++pushed, std::move(right)});
      }
      cv.notify_all();
    }
  };

  int workers = std::max(1, cfg.workers);
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> ts;
    ts.reserve(workers);
    for (int i = 0; i < workers; ++i) ts.emplace_back(work, i);
    for (auto& t : ts) t.join();
  }

  Verdict v;
  v.subdomains = pops;
  v.wall_seconds = cfg.deterministic ? 0.0 : elapsed();
  if (ce_found) {
    v.kind = VerdictKind::kCounterexample;
    v.counterexample = ce_point;
    v.ce_value = ce_value;
    v.lower_bound = ce_value;
    return v;
  }
  double open_min = kInf;
  while (!heap.empty()) {
    open_min = std::min(open_min, heap.top().key);
    heap.pop();
  }
  if (budget_hit || open_min < kInf) {
    v.kind = VerdictKind::kUnknown;
    v.lower_bound = std::min(min_closed, open_min);
    if (!std::isfinite(v.lower_bound)) v.lower_bound = 0;
    return v;
  }
  v.kind = VerdictKind::kVerified;
  v.lower_bound = min_closed;
  return v;
}

IntervalBox sublevel_bbox(const StorageCertificate& cert, double rho,
                          const IntervalBox& b, double margin, int samples,
                          std::uint64_t seed, int workers) {
  int n = b.dim();
  if (rho <= 0) return b;
  Vec xs = cert.cfg.x_star.size() ? cert.cfg.x_star : Vec(Vec::Zero(n));

  Vec lo = xs, hi = xs;
  auto absorb = [&](const Vec& x) {
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  };

  // per-face best feasible start (largest coordinate toward the face)
  std::vector<Vec> face_start(2 * n, xs);

  int nw = std::max(1, workers);
  std::vector<Vec> wlo(nw, lo), whi(nw, hi);
  std::vector<std::vector<Vec>> wface(nw, face_start);
  parallel_for(nw, nw, [&](long wi, int) {
    EvalWorkspace ews;
    Vec x(n), out;
    long begin = wi * samples / nw, end = (wi + 1) * samples / nw;
    for (long i = begin; i < end; ++i) {
      std::mt19937_64 rng(mix_seed(seed, 0x5151 + static_cast<std::uint64_t>(i)));
      x = b.sample(rng);
      eval_vec(cert.v, x.data(), *cert.store, ews, out);
      if (out[0] > rho) continue;
      wlo[wi] = wlo[wi].cwiseMin(x);
      whi[wi] = whi[wi].cwiseMax(x);
      for (int d = 0; d < n; ++d) {
        if (x[d] > wface[wi][2 * d][d]) wface[wi][2 * d] = x;
        if (x[d] < wface[wi][2 * d + 1][d]) wface[wi][2 * d + 1] = x;
      }
    }
  });
  for (int wi = 0; wi < nw; ++wi) {
    absorb(wlo[wi]);
    absorb(whi[wi]);
    for (int f = 0; f < 2 * n; ++f) {
      int d = f / 2;
      bool pos = (f % 2) == 0;
      if ((pos && wface[wi][f][d] > face_start[f][d]) ||
          (!pos && wface[wi][f][d] < face_start[f][d]))
        face_start[f] = wface[wi][f];
    }
  }

  // axis pushes with backtracking keep iterates inside {V <= rho}
  EvalWorkspace ews;
  Vec out;
  auto level = [&](const Vec& x) {
    eval_vec(cert.v, x.data(), *cert.store, ews, out);
    return out[0];
  };
  for (int d = 0; d < n; ++d) {
    for (int sgn = 0; sgn < 2; ++sgn) {
      double dir = sgn == 0 ? 1.0 : -1.0;
      Vec cur = face_start[2 * d + sgn];
      double step = 0.1 * b.width(d);
      for (int it = 0; it < 60 && step > 1e-12 * (1 + b.width(d)); ++it) {
        Vec cand = cur;
        cand[d] = std::min(b.hi[d], std::max(b.lo[d], cand[d] + dir * step));
        if (level(cand) <= rho) {
          cur = cand;
          absorb(cur);
        } else {
          step *= 0.5;
        }
      }
    }
  }

  for (int d = 0; d < n; ++d) {
    double pad = margin * (hi[d] - lo[d]) + 1e-9 * b.width(d);
    lo[d] = std::max(b.lo[d], lo[d] - pad);
    hi[d] = std::min(b.hi[d], hi[d] + pad);
  }
  return IntervalBox(lo, hi);
}

BisectResult bisect_rho(const ClosedLoopModel& m, const StorageCertificate& cert,
                        const SupplyRate& supply, const IntervalBox& x_box,
                        double d_bar, const BisectConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  BisectResult res;

  VerificationProblem prob = build_conditions(m, cert, supply, x_box, d_bar);
  const ParamStore& store = *prob.phi_rfi.store();
  ParamStore& mstore = *cert.store;

  res.rho_max = boundary_level(cert.v, x_box, store, cfg.attack,
                               mix_seed(cfg.seed, 1));
  if (!(res.rho_max > 0)) return res;

  IntervalBox best_domain = prob.domain;
  int cand_idx = 0;

  auto test = [&](double r) {
    CandidateRecord rec;
    rec.rho = r;
    ++cand_idx;
    set_rho(mstore, r);
    IntervalBox bbox =
        sublevel_bbox(cert, r, x_box, cfg.bbox_margin, cfg.bbox_samples,
                      mix_seed(cfg.seed, 1000 + cand_idx), cfg.bab.workers);
    IntervalBox dom = assemble_domain(m, bbox, d_bar);

    AttackResult a1 = pgd_minimize(prob.phi_rfi, dom, store, cfg.attack,
                                   mix_seed(cfg.seed, 2000 + cand_idx));
    AttackResult a2 = pgd_minimize(prob.phi_perf, dom, store, cfg.attack,
                                   mix_seed(cfg.seed, 3000 + cand_idx));
    if (a1.value <= 0 || a2.value <= 0) {
      rec.prescreen_failed = true;
      rec.rfi = a1.value <= 0 ? VerdictKind::kCounterexample
                              : VerdictKind::kUnknown;
      rec.perf = a2.value <= 0 ? VerdictKind::kCounterexample
                               : VerdictKind::kUnknown;
      res.candidates.push_back(rec);
      return false;
    }

    BabConfig bc = cfg.bab;
    bc.seed = mix_seed(cfg.seed, 4000 + cand_idx);
    Verdict v1 = verify_positive(prob.phi_rfi, dom, store, bc);
    rec.rfi = v1.kind;
    rec.subdomains += v1.subdomains;
    if (v1.kind == VerdictKind::kVerified) {
      bc.seed = mix_seed(cfg.seed, 5000 + cand_idx);
      Verdict v2 = verify_positive(prob.phi_perf, dom, store, bc);
      rec.perf = v2.kind;
      rec.subdomains += v2.subdomains;
      rec.verified = v2.kind == VerdictKind::kVerified;
    }
    res.total_subdomains += rec.subdomains;
    res.candidates.push_back(rec);
    if (rec.verified) best_domain = dom;
    return rec.verified;
  };

  double rho0 = cfg.beta * res.rho_max;
  double lo = 0.0, hi;
  bool lo_ok = false;
  if (test(rho0)) {
    lo = rho0;
    hi = cfg.mu * res.rho_max;
    lo_ok = true;
  } else {
    // bisection needs a verified lower edge; until one exists, descend
    // geometrically so the budget is spent covering levels, not narrowing
    // a bracket that might contain nothing
    hi = rho0;
    double r = rho0 / cfg.mu;
    while (r > 1e-9 * res.rho_max &&
           static_cast<int>(res.candidates.size()) < cfg.max_candidates) {
      if (test(r)) {
        lo = r;
        lo_ok = true;
        break;
      }
      hi = r;
      r /= cfg.mu;
    }
  }

  double tol = cfg.tol * res.rho_max;
  while (lo_ok && hi - lo > tol &&
         static_cast<int>(res.candidates.size()) < cfg.max_candidates) {
    double r = 0.5 * (lo + hi);
    if (test(r)) {
      lo = r;
    } else {
      hi = r;
    }
  }

  res.verified = lo_ok;
  res.rho_star = lo_ok ? lo : 0.0;
  set_rho(mstore, res.rho_star);
  res.domain = best_domain;
  res.wall_seconds =
      cfg.bab.deterministic
          ? 0.0
          : std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
  return res;
}

}  // namespace dissip
