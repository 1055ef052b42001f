#include "dissip/graph.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>

namespace dissip {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> as_matrix(const Vec& flat, int rows, int cols) {
  return Eigen::Map<const RowMat>(flat.data(), rows, cols);
}

std::uint64_t fnv_mix(std::uint64_t h, std::uint64_t v) {
  h ^= v;
  h *= 0x100000001b3ull;
  return h;
}

std::uint64_t hash_doubles(std::uint64_t h, const double* p, std::ptrdiff_t n) {
  for (std::ptrdiff_t i = 0; i < n; ++i)
    h = fnv_mix(h, std::bit_cast<std::uint64_t>(p[i]));
  return h;
}

std::uint64_t node_hash(const Node& n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = fnv_mix(h, static_cast<std::uint64_t>(n.kind));
  h = fnv_mix(h, static_cast<std::uint64_t>(n.dim));
  for (int a : n.args) h = fnv_mix(h, static_cast<std::uint64_t>(a));
  h = fnv_mix(h, static_cast<std::uint64_t>(n.slot + 1));
  h = fnv_mix(h, static_cast<std::uint64_t>(n.begin));
  h = fnv_mix(h, static_cast<std::uint64_t>(n.rows));
  h = fnv_mix(h, static_cast<std::uint64_t>(n.cols));
  h = fnv_mix(h, std::bit_cast<std::uint64_t>(n.slope));
  if (n.matrix.size() > 0) h = hash_doubles(h, n.matrix.data(), n.matrix.size());
  if (n.offset.size() > 0) h = hash_doubles(h, n.offset.data(), n.offset.size());
  return h;
}

bool node_equal(const Node& a, const Node& b) {
  if (a.kind != b.kind || a.dim != b.dim || a.args != b.args ||
      a.slot != b.slot || a.begin != b.begin || a.rows != b.rows ||
      a.cols != b.cols || a.slope != b.slope)
    return false;
  if (a.matrix.rows() != b.matrix.rows() || a.matrix.cols() != b.matrix.cols())
    return false;
  if (a.matrix.size() > 0 &&
      std::memcmp(a.matrix.data(), b.matrix.data(),
                  sizeof(double) * a.matrix.size()) != 0)
    return false;
  if (a.offset.size() != b.offset.size()) return false;
  if (a.offset.size() > 0 &&
      std::memcmp(a.offset.data(), b.offset.data(),
                  sizeof(double) * a.offset.size()) != 0)
    return false;
  return true;
}

}  // namespace

int ParamStore::flat_size(const std::vector<int>& dims) {
  int n = 1;
  for (int d : dims) {
    if (d <= 0) throw std::invalid_argument("param dims must be positive");
    n *= d;
  }
  return n;
}

int ParamStore::add(const std::string& name, std::vector<int> dims, Vec init,
                    bool trainable) {
  if (index_.count(name)) throw std::invalid_argument("duplicate param " + name);
  if (init.size() != flat_size(dims))
    throw std::invalid_argument("param " + name + " init size mismatch");
  entries_.push_back(Entry{name, std::move(dims), std::move(init), trainable});
  int id = static_cast<int>(entries_.size()) - 1;
  index_[name] = id;
  return id;
}

int ParamStore::ensure(const std::string& name, std::vector<int> dims, Vec init,
                       bool trainable) {
  auto it = index_.find(name);
  if (it == index_.end()) return add(name, std::move(dims), std::move(init), trainable);
  if (entries_[it->second].dims != dims)
    throw std::invalid_argument("param " + name + " shape mismatch");
  return it->second;
}

int ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

int ParamStore::index(const std::string& name) const {
  int i = find(name);
  if (i < 0) throw std::invalid_argument("unknown param " + name);
  return i;
}

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kInput: return "input";
    case OpKind::kParam: return "param";
    case OpKind::kConstant: return "constant";
    case OpKind::kAffine: return "affine";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kMatVec: return "matvec";
    case OpKind::kDot: return "dot";
    case OpKind::kSquare: return "square";
    case OpKind::kSum: return "sum";
    case OpKind::kRelu: return "relu";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSin: return "sin";
    case OpKind::kNeg: return "neg";
    case OpKind::kExp: return "exp";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kRecip: return "recip";
    case OpKind::kScaleByParam: return "scale_by_param";
    case OpKind::kSlice: return "slice";
    case OpKind::kConcat: return "concat";
  }
  return "?";
}

int ComputeGraph::slot_index(const std::string& name) const {
  for (size_t i = 0; i < slots_.size(); ++i)
    if (slots_[i].name == name) return static_cast<int>(i);
  return -1;
}

GraphBuilder::GraphBuilder(std::shared_ptr<ParamStore> params)
    : params_(std::move(params)) {
  if (!params_) throw std::invalid_argument("null param store");
}

int GraphBuilder::push(Node n) {
  for (int a : n.args)
    if (a < 0 || a >= static_cast<int>(nodes_.size()))
      throw std::invalid_argument("operand id out of range");
  std::uint64_t h = node_hash(n);
  auto [lo, hi] = dedup_.equal_range(h);
  for (auto it = lo; it != hi; ++it)
    if (node_equal(nodes_[it->second], n)) return it->second;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  dedup_.emplace(h, id);
  return id;
}

int GraphBuilder::input(const std::string& name, int dim) {
  if (dim <= 0) throw std::invalid_argument("input dim must be positive");
  auto it = slot_by_name_.find(name);
  int slot;
  if (it != slot_by_name_.end()) {
    slot = it->second;
    if (slots_[slot].dim != dim)
      throw std::invalid_argument("input " + name + " dim mismatch");
  } else {
    slot = static_cast<int>(slots_.size());
    slots_.push_back(SlotInfo{name, dim, 0});
    slot_by_name_[name] = slot;
  }
  Node n;
  n.kind = OpKind::kInput;
  n.dim = dim;
  n.slot = slot;
  return push(std::move(n));
}

int GraphBuilder::param(const std::string& name) {
  int idx = params_->index(name);
  Node n;
  n.kind = OpKind::kParam;
  n.dim = static_cast<int>(params_->value(idx).size());
  n.slot = idx;
  return push(std::move(n));
}

int GraphBuilder::constant(Vec v) {
  if (v.size() == 0) throw std::invalid_argument("empty constant");
  Node n;
  n.kind = OpKind::kConstant;
  n.dim = static_cast<int>(v.size());
  n.offset = std::move(v);
  return push(std::move(n));
}

int GraphBuilder::constant(double s) { return constant(Vec::Constant(1, s)); }

int GraphBuilder::affine(const Mat& a, const Vec& b, int v) {
  if (a.cols() != dim_of(v)) throw std::invalid_argument("affine shape mismatch");
  if (b.size() != a.rows()) throw std::invalid_argument("affine bias mismatch");
  Node n;
  n.kind = OpKind::kAffine;
  n.dim = static_cast<int>(a.rows());
  n.args = {v};
  n.matrix = a;
  n.offset = b;
  return push(std::move(n));
}

int GraphBuilder::binary_elementwise(OpKind k, int a, int b) {
  int da = dim_of(a), db = dim_of(b);
  if (da != db && da != 1 && db != 1)
    throw std::invalid_argument("incompatible elementwise dims");
  Node n;
  n.kind = k;
  n.dim = std::max(da, db);
  n.args = {a, b};
  return push(std::move(n));
}

int GraphBuilder::add(int a, int b) { return binary_elementwise(OpKind::kAdd, a, b); }
int GraphBuilder::sub(int a, int b) { return binary_elementwise(OpKind::kSub, a, b); }
int GraphBuilder::mul(int a, int b) { return binary_elementwise(OpKind::kMul, a, b); }

int GraphBuilder::matvec(int m, int v, int rows, int cols) {
  if (dim_of(m) != rows * cols || dim_of(v) != cols)
    throw std::invalid_argument("matvec shape mismatch");
  Node n;
  n.kind = OpKind::kMatVec;
  n.dim = rows;
  n.args = {m, v};
  n.rows = rows;
  n.cols = cols;
  return push(std::move(n));
}

int GraphBuilder::dot(int a, int b) {
  if (dim_of(a) != dim_of(b)) throw std::invalid_argument("dot dim mismatch");
  Node n;
  n.kind = OpKind::kDot;
  n.dim = 1;
  n.args = {a, b};
  return push(std::move(n));
}

int GraphBuilder::unary(OpKind k, int a) {
  Node n;
  n.kind = k;
  n.dim = dim_of(a);
  n.args = {a};
  return push(std::move(n));
}

int GraphBuilder::square(int a) { return unary(OpKind::kSquare, a); }

int GraphBuilder::sum(int a) {
  Node n;
  n.kind = OpKind::kSum;
  n.dim = 1;
  n.args = {a};
  return push(std::move(n));
}

int GraphBuilder::relu(int a) { return unary(OpKind::kRelu, a); }

int GraphBuilder::leaky_relu(int a, double slope) {
  if (slope < 0 || slope >= 1)
    throw std::invalid_argument("leaky_relu slope must lie in [0,1)");
  Node n;
  n.kind = OpKind::kLeakyRelu;
  n.dim = dim_of(a);
  n.args = {a};
  n.slope = slope;
  return push(std::move(n));
}

int GraphBuilder::tanh_(int a) { return unary(OpKind::kTanh, a); }
int GraphBuilder::sin_(int a) { return unary(OpKind::kSin, a); }
int GraphBuilder::neg(int a) { return unary(OpKind::kNeg, a); }
int GraphBuilder::exp_(int a) { return unary(OpKind::kExp, a); }
int GraphBuilder::sqrt_(int a) { return unary(OpKind::kSqrt, a); }
int GraphBuilder::recip(int a) { return unary(OpKind::kRecip, a); }

int GraphBuilder::scale_by_param(const std::string& name, int a) {
  int idx = params_->index(name);
  if (params_->value(idx).size() != 1)
    throw std::invalid_argument("scale_by_param needs a scalar param");
  Node n;
  n.kind = OpKind::kScaleByParam;
  n.dim = dim_of(a);
  n.args = {a};
  n.slot = idx;
  return push(std::move(n));
}

int GraphBuilder::slice(int a, int begin, int len) {
  if (begin < 0 || len <= 0 || begin + len > dim_of(a))
    throw std::invalid_argument("slice out of range");
  Node n;
  n.kind = OpKind::kSlice;
  n.dim = len;
  n.args = {a};
  n.begin = begin;
  return push(std::move(n));
}

int GraphBuilder::concat(const std::vector<int>& parts) {
  if (parts.empty()) throw std::invalid_argument("empty concat");
  if (parts.size() == 1) return parts[0];
  Node n;
  n.kind = OpKind::kConcat;
  n.args = parts;
  n.dim = 0;
  for (int p : parts) n.dim += dim_of(p);
  return push(std::move(n));
}

int GraphBuilder::inline_graph(const ComputeGraph& g,
                               const std::map<std::string, int>& bind) {
  std::vector<int> remap(g.num_nodes(), -1);
  for (int i = 0; i < g.num_nodes(); ++i) {
    const Node& n = g.node(i);
    if (n.kind == OpKind::kInput) {
      const SlotInfo& s = g.inputs()[n.slot];
      auto it = bind.find(s.name);
      if (it != bind.end()) {
        if (dim_of(it->second) != s.dim)
          throw std::invalid_argument("bind dim mismatch for slot " + s.name);
        remap[i] = it->second;
      } else {
        remap[i] = input(s.name, s.dim);
      }
      continue;
    }
    Node c = n;
    for (int& a : c.args) a = remap[a];
    remap[i] = push(std::move(c));
  }
  return remap[g.output()];
}

ComputeGraph GraphBuilder::freeze(int output) const {
  if (output < 0 || output >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("bad output id");
  std::vector<std::uint8_t> keep(nodes_.size(), 0);
  keep[output] = 1;
  for (int i = output; i >= 0; --i) {
    if (!keep[i]) continue;
    for (int a : nodes_[i].args) keep[a] = 1;
  }
  // all declared input slots survive pruning so that condition graphs built
  // over the same domain share one flattened layout
  ComputeGraph g;
  g.slots_ = slots_;
  int off = 0;
  for (auto& s : g.slots_) {
    s.offset = off;
    off += s.dim;
  }
  g.input_dim_ = off;

  std::vector<int> remap(nodes_.size(), -1);
  std::vector<std::uint8_t> param_seen(params_->size(), 0);
  g.slot_used_.assign(g.slots_.size(), 0);
  for (int i = 0; i <= output; ++i) {
    if (!keep[i]) continue;
    Node c = nodes_[i];
    for (int& a : c.args) a = remap[a];
    if (c.kind == OpKind::kParam || c.kind == OpKind::kScaleByParam)
      param_seen[c.slot] = 1;
    if (c.kind == OpKind::kInput) g.slot_used_[c.slot] = 1;
    g.nodes_.push_back(std::move(c));
    remap[i] = static_cast<int>(g.nodes_.size()) - 1;
  }
  g.output_ = remap[output];
  g.store_ = params_;
  for (int i = 0; i < params_->size(); ++i)
    if (param_seen[i]) g.param_ids_.push_back(i);

  g.dep_.assign(g.nodes_.size(), 0);
  for (size_t i = 0; i < g.nodes_.size(); ++i) {
    const Node& n = g.nodes_[i];
    if (n.kind == OpKind::kInput) {
      g.dep_[i] = 1;
      continue;
    }
    for (int a : n.args)
      if (g.dep_[a]) g.dep_[i] = 1;
  }
  static std::atomic<std::uint64_t> next_uid{1};
  g.uid_ = next_uid.fetch_add(1, std::memory_order_relaxed);
  return g;
}

ComputeGraph compose(const ComputeGraph& g1, const ComputeGraph& g2,
                     const std::string& slot) {
  if (g2.slot_index(slot) < 0)
    throw std::invalid_argument("compose: outer graph has no slot " + slot);
  if (g1.store() != g2.store())
    throw std::invalid_argument("compose: graphs use different param stores");
  GraphBuilder b(g1.store());
  int inner = b.inline_graph(g1, {});
  int out = b.inline_graph(g2, {{slot, inner}});
  return b.freeze(out);
}

namespace {

void ensure_eval_ws(const ComputeGraph& g, EvalWorkspace& ws) {
  if (ws.stamp == g.uid() &&
      ws.vals.size() == static_cast<size_t>(g.num_nodes()))
    return;
  ws.vals.assign(g.num_nodes(), Vec());
  for (int i = 0; i < g.num_nodes(); ++i) ws.vals[i].resize(g.node(i).dim);
  ws.stamp = g.uid();
}

inline double bval(const Vec& v, int i) { return v.size() == 1 ? v[0] : v[i]; }

}  // namespace

void eval_vec(const ComputeGraph& g, const double* x, const ParamStore& store,
              EvalWorkspace& ws, Vec& out) {
  ensure_eval_ws(g, ws);
  for (int i = 0; i < g.num_nodes(); ++i) {
    const Node& n = g.node(i);
    Vec& v = ws.vals[i];
    switch (n.kind) {
      case OpKind::kInput: {
        const SlotInfo& s = g.inputs()[n.slot];
        v = Eigen::Map<const Vec>(x + s.offset, s.dim);
        break;
      }
      case OpKind::kParam:
        v = store.value(n.slot);
        break;
      case OpKind::kConstant:
        v = n.offset;
        break;
      case OpKind::kAffine:
        v.noalias() = n.matrix * ws.vals[n.args[0]];
        v += n.offset;
        break;
      case OpKind::kAdd: {
        const Vec& a = ws.vals[n.args[0]];
        const Vec& b = ws.vals[n.args[1]];
        for (int k = 0; k < n.dim; ++k) v[k] = bval(a, k) + bval(b, k);
        break;
      }
      case OpKind::kSub: {
        const Vec& a = ws.vals[n.args[0]];
        const Vec& b = ws.vals[n.args[1]];
        for (int k = 0; k < n.dim; ++k) v[k] = bval(a, k) - bval(b, k);
        break;
      }
      case OpKind::kMul: {
        const Vec& a = ws.vals[n.args[0]];
        const Vec& b = ws.vals[n.args[1]];
        for (int k = 0; k < n.dim; ++k) v[k] = bval(a, k) * bval(b, k);
        break;
      }
      case OpKind::kMatVec:
        v.noalias() =
            as_matrix(ws.vals[n.args[0]], n.rows, n.cols) * ws.vals[n.args[1]];
        break;
      case OpKind::kDot:
        v[0] = ws.vals[n.args[0]].dot(ws.vals[n.args[1]]);
        break;
      case OpKind::kSquare:
        v = ws.vals[n.args[0]].array().square();
        break;
      case OpKind::kSum:
        v[0] = ws.vals[n.args[0]].sum();
        break;
      case OpKind::kRelu:
        v = ws.vals[n.args[0]].cwiseMax(0.0);
        break;
      case OpKind::kLeakyRelu: {
        const Vec& a = ws.vals[n.args[0]];
        for (int k = 0; k < n.dim; ++k) v[k] = a[k] > 0 ? a[k] : n.slope * a[k];
        break;
      }
      case OpKind::kTanh:
        v = ws.vals[n.args[0]].array().tanh();
        break;
      case OpKind::kSin:
        v = ws.vals[n.args[0]].array().sin();
        break;
      case OpKind::kNeg:
        v = -ws.vals[n.args[0]];
        break;
      case OpKind::kExp:
        v = ws.vals[n.args[0]].array().exp();
        break;
      case OpKind::kSqrt: {
        const Vec& a = ws.vals[n.args[0]];
        for (int k = 0; k < n.dim; ++k) {
          if (a[k] < 0) throw std::runtime_error("sqrt of negative value");
          v[k] = std::sqrt(a[k]);
        }
        break;
      }
      case OpKind::kRecip: {
        const Vec& a = ws.vals[n.args[0]];
        for (int k = 0; k < n.dim; ++k) {
          if (a[k] == 0) throw std::runtime_error("recip of zero");
          v[k] = 1.0 / a[k];
        }
        break;
      }
      case OpKind::kScaleByParam:
        v = store.value(n.slot)[0] * ws.vals[n.args[0]];
        break;
      case OpKind::kSlice:
        v = ws.vals[n.args[0]].segment(n.begin, n.dim);
        break;
      case OpKind::kConcat: {
        int off = 0;
        for (int a : n.args) {
          const Vec& p = ws.vals[a];
          v.segment(off, p.size()) = p;
          off += static_cast<int>(p.size());
        }
        break;
      }
    }
  }
  out = ws.vals[g.output()];
}

double eval_scalar(const ComputeGraph& g, const double* x,
                   const ParamStore& store, EvalWorkspace& ws) {
  if (g.output_dim() != 1)
    throw std::invalid_argument("eval_scalar on non-scalar graph");
  Vec out;
  eval_vec(g, x, store, ws, out);
  return out[0];
}

Vec eval(const ComputeGraph& g, const std::map<std::string, Vec>& inputs,
         const ParamStore& store) {
  Vec x = Vec::Zero(g.input_dim());
  int k = 0;
  for (const auto& s : g.inputs()) {
    auto it = inputs.find(s.name);
    if (it == inputs.end()) {
      // unused slots exist only for layout sharing; zeros are fine there
      if (g.slot_used(k++)) throw std::invalid_argument("missing input " + s.name);
      continue;
    }
    ++k;
    if (it->second.size() != s.dim)
      throw std::invalid_argument("input " + s.name + " dim mismatch");
    x.segment(s.offset, s.dim) = it->second;
  }
  EvalWorkspace ws;
  Vec out;
  eval_vec(g, x.data(), store, ws, out);
  return out;
}

void ParamGrads::ensure(const ParamStore& store) {
  g.resize(store.size());
  for (int i = 0; i < store.size(); ++i) {
    if (g[i].size() != store.value(i).size())
      g[i] = Vec::Zero(store.value(i).size());
  }
}

void ParamGrads::set_zero() {
  for (auto& v : g)
    if (v.size()) v.setZero();
}

void ParamGrads::axpy(double a, const ParamGrads& other) {
  g.resize(std::max(g.size(), other.g.size()));
  for (size_t i = 0; i < other.g.size(); ++i) {
    if (!other.g[i].size()) continue;
    if (!g[i].size())
      g[i] = a * other.g[i];
    else
      g[i] += a * other.g[i];
  }
}

double grad_flat(const ComputeGraph& g, const double* x, const ParamStore& store,
                 GradWorkspace& ws, Vec* x_grad, ParamGrads* pgrad,
                 double weight) {
  if (g.output_dim() != 1)
    throw std::invalid_argument("grad on non-scalar graph");
  ensure_eval_ws(g, ws.fwd);
  Vec out;
  eval_vec(g, x, store, ws.fwd, out);

  if (ws.stamp != g.uid() ||
      ws.adj.size() != static_cast<size_t>(g.num_nodes())) {
    ws.adj.assign(g.num_nodes(), Vec());
    for (int i = 0; i < g.num_nodes(); ++i) ws.adj[i].resize(g.node(i).dim);
    ws.stamp = g.uid();
  }
  for (auto& a : ws.adj) a.setZero();
  if (x_grad) {
    x_grad->resize(g.input_dim());
    x_grad->setZero();
  }
  ws.adj[g.output()][0] = 1.0;

  for (int i = g.num_nodes() - 1; i >= 0; --i) {
    const Node& n = g.node(i);
    const Vec& a = ws.adj[i];
    bool zero = true;
    for (int k = 0; k < n.dim && zero; ++k) zero = a[k] == 0;
    if (zero) continue;
    switch (n.kind) {
      case OpKind::kInput:
        if (x_grad) {
          const SlotInfo& s = g.inputs()[n.slot];
          x_grad->segment(s.offset, s.dim) += a;
        }
        break;
      case OpKind::kParam:
        if (pgrad) {
          pgrad->ensure(store);
          pgrad->g[n.slot] += weight * a;
        }
        break;
      case OpKind::kConstant:
        break;
      case OpKind::kAffine:
        ws.adj[n.args[0]].noalias() += n.matrix.transpose() * a;
        break;
      case OpKind::kAdd: {
        Vec& ga = ws.adj[n.args[0]];
        Vec& gb = ws.adj[n.args[1]];
        for (int k = 0; k < n.dim; ++k) {
          ga[ga.size() == 1 ? 0 : k] += a[k];
          gb[gb.size() == 1 ? 0 : k] += a[k];
        }
        break;
      }
      case OpKind::kSub: {
        Vec& ga = ws.adj[n.args[0]];
        Vec& gb = ws.adj[n.args[1]];
        for (int k = 0; k < n.dim; ++k) {
          ga[ga.size() == 1 ? 0 : k] += a[k];
          gb[gb.size() == 1 ? 0 : k] -= a[k];
        }
        break;
      }
      case OpKind::kMul: {
        const Vec& va = ws.fwd.vals[n.args[0]];
        const Vec& vb = ws.fwd.vals[n.args[1]];
        Vec& ga = ws.adj[n.args[0]];
        Vec& gb = ws.adj[n.args[1]];
        for (int k = 0; k < n.dim; ++k) {
          ga[ga.size() == 1 ? 0 : k] += a[k] * bval(vb, k);
          gb[gb.size() == 1 ? 0 : k] += a[k] * bval(va, k);
        }
        break;
      }
      case OpKind::kMatVec: {
        const Vec& mflat = ws.fwd.vals[n.args[0]];
        const Vec& v = ws.fwd.vals[n.args[1]];
        auto m = as_matrix(mflat, n.rows, n.cols);
        ws.adj[n.args[1]].noalias() += m.transpose() * a;
        Vec& gm = ws.adj[n.args[0]];
        for (int r = 0; r < n.rows; ++r)
          for (int c = 0; c < n.cols; ++c) gm[r * n.cols + c] += a[r] * v[c];
        break;
      }
      case OpKind::kDot:
        ws.adj[n.args[0]] += a[0] * ws.fwd.vals[n.args[1]];
        ws.adj[n.args[1]] += a[0] * ws.fwd.vals[n.args[0]];
        break;
      case OpKind::kSquare:
        ws.adj[n.args[0]].array() +=
            2.0 * a.array() * ws.fwd.vals[n.args[0]].array();
        break;
      case OpKind::kSum:
        ws.adj[n.args[0]].array() += a[0];
        break;
      case OpKind::kRelu: {
        const Vec& v = ws.fwd.vals[n.args[0]];
        Vec& gv = ws.adj[n.args[0]];
        for (int k = 0; k < n.dim; ++k)
          if (v[k] > 0) gv[k] += a[k];
        break;
      }
      case OpKind::kLeakyRelu: {
        const Vec& v = ws.fwd.vals[n.args[0]];
        Vec& gv = ws.adj[n.args[0]];
        for (int k = 0; k < n.dim; ++k) gv[k] += a[k] * (v[k] > 0 ? 1.0 : n.slope);
        break;
      }
      case OpKind::kTanh: {
        const Vec& y = ws.fwd.vals[i];
        ws.adj[n.args[0]].array() += a.array() * (1.0 - y.array().square());
        break;
      }
      case OpKind::kSin:
        ws.adj[n.args[0]].array() +=
            a.array() * ws.fwd.vals[n.args[0]].array().cos();
        break;
      case OpKind::kNeg:
        ws.adj[n.args[0]] -= a;
        break;
      case OpKind::kExp:
        ws.adj[n.args[0]].array() += a.array() * ws.fwd.vals[i].array();
        break;
      case OpKind::kSqrt: {
        const Vec& y = ws.fwd.vals[i];
        Vec& gv = ws.adj[n.args[0]];
        for (int k = 0; k < n.dim; ++k) {
          if (y[k] == 0) throw std::runtime_error("sqrt grad at zero");
          gv[k] += a[k] * 0.5 / y[k];
        }
        break;
      }
      case OpKind::kRecip: {
        const Vec& y = ws.fwd.vals[i];
        ws.adj[n.args[0]].array() -= a.array() * y.array().square();
        break;
      }
      case OpKind::kScaleByParam: {
        double p = store.value(n.slot)[0];
        ws.adj[n.args[0]] += p * a;
        if (pgrad) {
          pgrad->ensure(store);
          pgrad->g[n.slot][0] += weight * a.dot(ws.fwd.vals[n.args[0]]);
        }
        break;
      }
      case OpKind::kSlice:
        ws.adj[n.args[0]].segment(n.begin, n.dim) += a;
        break;
      case OpKind::kConcat: {
        int off = 0;
        for (int arg : n.args) {
          int d = g.node(arg).dim;
          ws.adj[arg] += a.segment(off, d);
          off += d;
        }
        break;
      }
    }
  }
  return out[0];
}

GradResult grad(const ComputeGraph& g, const std::map<std::string, Vec>& inputs,
                const ParamStore& store) {
  Vec x = Vec::Zero(g.input_dim());
  int k = 0;
  for (const auto& s : g.inputs()) {
    auto it = inputs.find(s.name);
    if (it == inputs.end()) {
      if (g.slot_used(k++)) throw std::invalid_argument("missing input " + s.name);
      continue;
    }
    ++k;
    x.segment(s.offset, s.dim) = it->second;
  }
  GradWorkspace ws;
  Vec xg;
  ParamGrads pg;
  GradResult r;
  r.value = grad_flat(g, x.data(), store, ws, &xg, &pg);
  for (const auto& s : g.inputs()) r.input_grads[s.name] = xg.segment(s.offset, s.dim);
  for (int pid : g.param_ids()) {
    const auto& e = store.entry(pid);
    r.param_grads[e.name] =
        (pid < static_cast<int>(pg.g.size()) && pg.g[pid].size())
            ? pg.g[pid]
            : Vec::Zero(e.value.size());
  }
  return r;
}

}  // namespace dissip
