#include "dissip/logic.hpp"

namespace dissip {

int enc_max(GraphBuilder& b, int x, int y) {
  if (b.dim_of(x) != 1 || b.dim_of(y) != 1)
    throw std::invalid_argument("predicate nodes must be scalar");
  int s = b.add(x, y);
  int r1 = b.relu(b.sub(x, y));
  int r2 = b.relu(b.sub(y, x));
  int t = b.add(b.add(s, r1), r2);
  return b.mul(b.constant(0.5), t);
}

int enc_min(GraphBuilder& b, int x, int y) {
  return b.neg(enc_max(b, b.neg(x), b.neg(y)));
}

int enc_and(GraphBuilder& b, int x, int y) { return enc_min(b, x, y); }
int enc_or(GraphBuilder& b, int x, int y) { return enc_max(b, x, y); }

namespace {

int fold_balanced(GraphBuilder& b, std::vector<int> xs,
                  int (*op)(GraphBuilder&, int, int)) {
  if (xs.empty()) throw std::invalid_argument("empty predicate list");
  while (xs.size() > 1) {
    std::vector<int> next;
    next.reserve((xs.size() + 1) / 2);
    for (size_t i = 0; i + 1 < xs.size(); i += 2) next.push_back(op(b, xs[i], xs[i + 1]));
    if (xs.size() % 2) next.push_back(xs.back());
    xs = std::move(next);
  }
  return xs[0];
}

}  // namespace

int enc_and(GraphBuilder& b, std::vector<int> xs) {
  return fold_balanced(b, std::move(xs), &enc_and);
}

int enc_or(GraphBuilder& b, std::vector<int> xs) {
  return fold_balanced(b, std::move(xs), &enc_or);
}

int enc_not(GraphBuilder& b, int x) {
  if (b.dim_of(x) != 1)
    throw std::invalid_argument("predicate nodes must be scalar");
  return b.neg(x);
}

int enc_implies(GraphBuilder& b, int a, int b_node) {
  return enc_max(b, b.neg(a), b_node);
}

int ball_exclusion(GraphBuilder& b, const std::vector<int>& xi, double eps) {
  if (xi.empty()) throw std::invalid_argument("empty exclusion vector");
  if (eps <= 0) throw std::invalid_argument("exclusion radius must be positive");
  int v = b.concat(xi);
  return b.sub(b.dot(v, v), b.constant(eps));
}

}  // namespace dissip
