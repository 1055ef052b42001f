#include <algorithm>
#include <memory>
#include <random>

#include "doctest.h"

#include "dissip/logic.hpp"

using namespace dissip;

namespace {

struct TwoScalars {
  std::shared_ptr<ParamStore> st = std::make_shared<ParamStore>();
  GraphBuilder b{st};
  int x = b.input("x", 1);
  int y = b.input("y", 1);

  double run(int out, double vx, double vy) {
    ComputeGraph g = b.freeze(out);
    Vec in(2);
    in << vx, vy;
    EvalWorkspace ws;
    return eval_scalar(g, in.data(), *st, ws);
  }
};

}  // namespace

TEST_SUITE("logic") {

TEST_CASE("max and min encodings are exact") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int t = 0; t < 50; ++t) {
    TwoScalars s;
    double a = u(rng), b = u(rng);
    CHECK(s.run(enc_max(s.b, s.x, s.y), a, b) ==
          doctest::Approx(std::max(a, b)).epsilon(1e-12));
    TwoScalars s2;
    CHECK(s2.run(enc_min(s2.b, s2.x, s2.y), a, b) ==
          doctest::Approx(std::min(a, b)).epsilon(1e-12));
  }
  TwoScalars tie;
  CHECK(tie.run(enc_max(tie.b, tie.x, tie.y), 1.5, 1.5) ==
        doctest::Approx(1.5));
}

TEST_CASE("n-ary conjunction equals the minimum") {
  auto st = std::make_shared<ParamStore>();
  GraphBuilder b(st);
  int x = b.input("x", 5);
  std::vector<int> parts;
  for (int i = 0; i < 5; ++i) parts.push_back(b.slice(x, i, 1));
  ComputeGraph g = b.freeze(enc_and(b, parts));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int t = 0; t < 30; ++t) {
    Vec in(5);
    for (int i = 0; i < 5; ++i) in[i] = u(rng);
    EvalWorkspace ws;
    CHECK(eval_scalar(g, in.data(), *st, ws) ==
          doctest::Approx(in.minCoeff()).epsilon(1e-12));
  }
}

TEST_CASE("n-ary disjunction equals the maximum") {
  auto st = std::make_shared<ParamStore>();
  GraphBuilder b(st);
  int x = b.input("x", 4);
  std::vector<int> parts;
  for (int i = 0; i < 4; ++i) parts.push_back(b.slice(x, i, 1));
  ComputeGraph g = b.freeze(enc_or(b, parts));
  Vec in(4);
  in << -2, 0.5, -0.1, 0.4;
  EvalWorkspace ws;
  CHECK(eval_scalar(g, in.data(), *st, ws) == doctest::Approx(0.5));
}

TEST_CASE("implication holds unless antecedent true and consequent false") {
  // a => b encoded as max{-a, b}; positive means the predicate holds
  auto eval_impl = [](double a, double b) {
    TwoScalars s;
    return s.run(enc_implies(s.b, s.x, s.y), a, b);
  };
  CHECK(eval_impl(1.0, 2.0) > 0);    // T => T
  CHECK(eval_impl(1.0, -2.0) < 0);   // T => F
  CHECK(eval_impl(-1.0, 2.0) > 0);   // F => T
  CHECK(eval_impl(-1.0, -2.0) > 0);  // F => F
}

TEST_CASE("negation flips the predicate") {
  TwoScalars s;
  CHECK(s.run(enc_not(s.b, s.x), 0.7, 0) == doctest::Approx(-0.7));
}

TEST_CASE("ball exclusion is positive outside the ball only") {
  auto st = std::make_shared<ParamStore>();
  GraphBuilder b(st);
  int x = b.input("x", 2);
  int y = b.input("y", 1);
  ComputeGraph g = b.freeze(ball_exclusion(b, {x, y}, 1e-2));
  EvalWorkspace ws;
  Vec at_origin = Vec::Zero(3);
  CHECK(eval_scalar(g, at_origin.data(), *st, ws) < 0);
  Vec outside(3);
  outside << 0.2, 0, 0;
  CHECK(eval_scalar(g, outside.data(), *st, ws) ==
        doctest::Approx(0.04 - 1e-2));
}

}  // TEST_SUITE
