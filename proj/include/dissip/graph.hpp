#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dissip {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Named trainable arrays shared by every graph built against the same store.
// Values are stored flat, row-major for rank-2 shapes.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    std::vector<int> dims;
    Vec value;
    bool trainable = true;
  };

  int add(const std::string& name, std::vector<int> dims, Vec init,
          bool trainable = true);
  // add, or verify shape if the name already exists
  int ensure(const std::string& name, std::vector<int> dims, Vec init,
             bool trainable = true);
  int find(const std::string& name) const;  // -1 when absent
  int index(const std::string& name) const;  // throws when absent

  int size() const { return static_cast<int>(entries_.size()); }
  const Entry& entry(int i) const { return entries_.at(i); }
  Entry& entry(int i) { return entries_.at(i); }
  const Vec& value(int i) const { return entries_.at(i).value; }
  Vec& value(int i) { return entries_.at(i).value; }
  const Vec& value(const std::string& name) const { return value(index(name)); }
  Vec& value(const std::string& name) { return value(index(name)); }

  static int flat_size(const std::vector<int>& dims);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, int> index_;
};

enum class OpKind : std::uint8_t {
  kInput,
  kParam,
  kConstant,
  kAffine,        // A * arg + b, constant A and b
  kAdd,
  kSub,
  kMul,           // elementwise, scalar operands broadcast
  kMatVec,        // reshape(arg0, rows x cols) * arg1
  kDot,
  kSquare,
  kSum,
  kRelu,
  kLeakyRelu,
  kTanh,
  kSin,
  kNeg,
  kExp,
  kSqrt,
  kRecip,
  kScaleByParam,  // scalar parameter times arg
  kSlice,
  kConcat,
};

const char* op_name(OpKind k);

struct Node {
  OpKind kind;
  int dim = 0;
  std::vector<int> args;
  int slot = -1;     // kInput: slot index; kParam/kScaleByParam: store index
  Mat matrix;        // kAffine
  Vec offset;        // kAffine bias, kConstant value
  double slope = 0;  // kLeakyRelu
  int begin = 0;     // kSlice
  int rows = 0, cols = 0;  // kMatVec
};

struct SlotInfo {
  std::string name;
  int dim = 0;
  int offset = 0;  // position in the flattened input vector
};

// Immutable DAG with a single output node. Node ids are a topological order.
class ComputeGraph {
 public:
  int output() const { return output_; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int i) const { return nodes_[i]; }
  int output_dim() const { return nodes_[output_].dim; }

  const std::vector<SlotInfo>& inputs() const { return slots_; }
  int input_dim() const { return input_dim_; }
  int slot_index(const std::string& name) const;  // -1 when absent

  // whether any node reads the slot; pruned graphs keep unused slots in the
  // table so graphs over the same domain share one flattened layout
  bool slot_used(int k) const {
    return k >= 0 && k < static_cast<int>(slot_used_.size()) && slot_used_[k];
  }

  // store indices of every parameter the output depends on
  const std::vector<int>& param_ids() const { return param_ids_; }
  bool input_dependent(int id) const { return dep_[id] != 0; }

  // the store the graph was built against
  const std::shared_ptr<ParamStore>& store() const { return store_; }

  // workspace cache key; copies share it (identical structure), each freeze
  // mints a fresh one so recycled addresses can never alias a stale cache
  std::uint64_t uid() const { return uid_; }

 private:
  friend class GraphBuilder;
  std::vector<Node> nodes_;
  std::vector<SlotInfo> slots_;
  std::vector<std::uint8_t> slot_used_;
  std::vector<int> param_ids_;
  std::vector<std::uint8_t> dep_;
  std::shared_ptr<ParamStore> store_;
  int output_ = -1;
  int input_dim_ = 0;
  std::uint64_t uid_ = 0;
};

// Builder with structural deduplication: creating the same node twice
// (same kind, operands and payload) returns the original id.
class GraphBuilder {
 public:
  explicit GraphBuilder(std::shared_ptr<ParamStore> params);

  int input(const std::string& name, int dim);
  int param(const std::string& name);
  int constant(Vec v);
  int constant(double s);
  int affine(const Mat& a, const Vec& b, int v);
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int matvec(int m, int v, int rows, int cols);
  int dot(int a, int b);
  int square(int a);
  int sum(int a);
  int relu(int a);
  int leaky_relu(int a, double slope);
  int tanh_(int a);
  int sin_(int a);
  int neg(int a);
  int exp_(int a);
  int sqrt_(int a);
  int recip(int a);
  int scale_by_param(const std::string& name, int a);
  int slice(int a, int begin, int len);
  int concat(const std::vector<int>& parts);

  // Inline another graph. Slots in `bind` map to existing node ids; unbound
  // slots become (or join) this builder's inputs of the same name.
  int inline_graph(const ComputeGraph& g, const std::map<std::string, int>& bind);

  int dim_of(int id) const { return nodes_.at(id).dim; }

  // Prunes nodes unreachable from `output`; declared inputs are all kept.
  ComputeGraph freeze(int output) const;

  const std::shared_ptr<ParamStore>& params() const { return params_; }

 private:
  int push(Node n);
  int binary_elementwise(OpKind k, int a, int b);
  int unary(OpKind k, int a);

  std::shared_ptr<ParamStore> params_;
  std::vector<Node> nodes_;
  std::vector<SlotInfo> slots_;
  std::map<std::string, int> slot_by_name_;
  std::multimap<std::uint64_t, int> dedup_;
};

// g2's slot `slot` is fed by g1's output; remaining slots merge by name.
ComputeGraph compose(const ComputeGraph& g1, const ComputeGraph& g2,
                     const std::string& slot);

struct EvalWorkspace {
  std::vector<Vec> vals;
  std::uint64_t stamp = 0;
};

struct ParamGrads {
  std::vector<Vec> g;  // aligned with store indices; empty entries mean zero
  void ensure(const ParamStore& store);
  void set_zero();
  void axpy(double a, const ParamGrads& other);
};

struct GradWorkspace {
  EvalWorkspace fwd;
  std::vector<Vec> adj;
  std::uint64_t stamp = 0;
};

void eval_vec(const ComputeGraph& g, const double* x, const ParamStore& store,
              EvalWorkspace& ws, Vec& out);
double eval_scalar(const ComputeGraph& g, const double* x,
                   const ParamStore& store, EvalWorkspace& ws);
Vec eval(const ComputeGraph& g, const std::map<std::string, Vec>& inputs,
         const ParamStore& store);

// Reverse-mode gradient of a scalar graph. Writes d(out)/dx into x_grad when
// non-null and accumulates weight * d(out)/dparam into pgrad when non-null.
// Kinked ops (ReLU, LeakyReLU) use their left derivative at the kink.
double grad_flat(const ComputeGraph& g, const double* x, const ParamStore& store,
                 GradWorkspace& ws, Vec* x_grad, ParamGrads* pgrad,
                 double weight = 1.0);

struct GradResult {
  double value = 0;
  std::map<std::string, Vec> input_grads;
  std::map<std::string, Vec> param_grads;
};

GradResult grad(const ComputeGraph& g, const std::map<std::string, Vec>& inputs,
                const ParamStore& store);

}  // namespace dissip
