#pragma once

#include <vector>

#include "dissip/graph.hpp"

namespace dissip {

// Predicate encodings over scalar graph nodes. A node encodes a predicate
// that holds iff its value is strictly positive; values equal to zero are
// treated as "does not hold", which errs on the conservative side for the
// verified conditions built from these.

// max{x,y} = (x + y + relu(x-y) + relu(y-x)) / 2, exact
int enc_max(GraphBuilder& b, int x, int y);
// min{x,y} = -max{-x,-y}
int enc_min(GraphBuilder& b, int x, int y);

// conjunction = min, disjunction = max; n-ary forms build a balanced tree
int enc_and(GraphBuilder& b, int x, int y);
int enc_or(GraphBuilder& b, int x, int y);
int enc_and(GraphBuilder& b, std::vector<int> xs);
int enc_or(GraphBuilder& b, std::vector<int> xs);

// negation of (x > 0) is (-x >= 0)
int enc_not(GraphBuilder& b, int x);

// implication a => b as max{-a, b}
int enc_implies(GraphBuilder& b, int a, int b_node);

// xi' * xi - eps, positive outside the excluded origin ball
int ball_exclusion(GraphBuilder& b, const std::vector<int>& xi, double eps);

}  // namespace dissip
