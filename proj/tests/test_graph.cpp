#include <cmath>
#include <memory>
#include <random>

#include "doctest.h"

#include "dissip/graph.hpp"

using namespace dissip;

namespace {

std::shared_ptr<ParamStore> new_store() {
  return std::make_shared<ParamStore>();
}

double fd_input(const ComputeGraph& g, const ParamStore& st, const Vec& x,
                int i, double h = 1e-6) {
  EvalWorkspace ws;
  Vec xp = x, xm = x;
  xp[i] += h;
  xm[i] -= h;
  return (eval_scalar(g, xp.data(), st, ws) -
          eval_scalar(g, xm.data(), st, ws)) /
         (2 * h);
}

double fd_param(const ComputeGraph& g, ParamStore& st, const Vec& x, int pid,
                int coord, double h = 1e-6) {
  EvalWorkspace ws;
  double saved = st.value(pid)[coord];
  st.value(pid)[coord] = saved + h;
  double up = eval_scalar(g, x.data(), st, ws);
  st.value(pid)[coord] = saved - h;
  double dn = eval_scalar(g, x.data(), st, ws);
  st.value(pid)[coord] = saved;
  return (up - dn) / (2 * h);
}

}  // namespace

TEST_SUITE("graph") {

TEST_CASE("eval matches a hand-computed composite") {
  auto st = new_store();
  GraphBuilder b(st);
  int x = b.input("x", 2);
  Mat a(1, 2);
  a << 2, -1;
  int lin = b.affine(a, Vec::Zero(1), x);
  int x0 = b.slice(x, 0, 1);
  int x1 = b.slice(x, 1, 1);
  int out = b.add(b.add(b.relu(lin), b.mul(b.tanh_(x0), x1)),
                  b.square(b.sin_(x1)));
  ComputeGraph g = b.freeze(out);

  Vec in(2);
  in << 0.3, -0.7;
  EvalWorkspace ws;
  // relu(2*0.3+0.7) + tanh(0.3)*(-0.7) + sin(-0.7)^2
  CHECK(eval_scalar(g, in.data(), *st, ws) ==
        doctest::Approx(1.5110975998337657).epsilon(1e-13));
}

TEST_CASE("scalar operands broadcast in add and mul") {
  auto st = new_store();
  GraphBuilder b(st);
  int x = b.input("x", 3);
  int s = b.constant(2.0);
  ComputeGraph g = b.freeze(b.add(b.mul(s, x), s));
  Vec in(3);
  in << 1, -2, 0.5;
  EvalWorkspace ws;
  Vec out;
  eval_vec(g, in.data(), *st, ws, out);
  REQUIRE(out.size() == 3);
  CHECK(out[0] == doctest::Approx(4.0));
  CHECK(out[1] == doctest::Approx(-2.0));
  CHECK(out[2] == doctest::Approx(3.0));
}

TEST_CASE("matvec reshapes a parameter row-major") {
  auto st = new_store();
  Vec w(6);
  w << 1, 2, 3, 4, 5, 6;  // [[1,2,3],[4,5,6]]
  st->add("w", {2, 3}, w);
  GraphBuilder b(st);
  int x = b.input("x", 3);
  ComputeGraph g = b.freeze(b.matvec(b.param("w"), x, 2, 3));
  Vec in(3);
  in << 1, 0, -1;
  EvalWorkspace ws;
  Vec out;
  eval_vec(g, in.data(), *st, ws, out);
  REQUIRE(out.size() == 2);
  CHECK(out[0] == doctest::Approx(-2.0));
  CHECK(out[1] == doctest::Approx(-2.0));
}

TEST_CASE("slice and concat round-trip") {
  auto st = new_store();
  GraphBuilder b(st);
  int x = b.input("x", 4);
  int head = b.slice(x, 0, 2);
  int tail = b.slice(x, 2, 2);
  ComputeGraph g = b.freeze(b.sub(b.concat({head, tail}), x));
  Vec in(4);
  in << 3, -1, 2, 7;
  EvalWorkspace ws;
  Vec out;
  eval_vec(g, in.data(), *st, ws, out);
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("monotone unaries match the standard library") {
  auto st = new_store();
  GraphBuilder b(st);
  int x = b.input("x", 1);
  int shifted = b.add(x, b.constant(3.0));  // keep sqrt/recip arguments positive
  int out = b.add(b.add(b.exp_(b.neg(x)), b.sqrt_(shifted)),
                  b.add(b.recip(shifted), b.leaky_relu(x, 0.01)));
  ComputeGraph g = b.freeze(out);
  for (double v : {-1.5, -0.3, 0.0, 0.7, 2.0}) {
    Vec in(1);
    in << v;
    EvalWorkspace ws;
    double expect = std::exp(-v) + std::sqrt(v + 3) + 1 / (v + 3) +
                    (v >= 0 ? v : 0.01 * v);
    CHECK(eval_scalar(g, in.data(), *st, ws) ==
          doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("sum and dot agree") {
  auto st = new_store();
  GraphBuilder b(st);
  int x = b.input("x", 3);
  ComputeGraph g = b.freeze(b.sub(b.dot(x, x), b.sum(b.mul(x, x))));
  Vec in(3);
  in << 0.5, -2, 1.25;
  EvalWorkspace ws;
  CHECK(eval_scalar(g, in.data(), *st, ws) == doctest::Approx(0.0));
}

TEST_CASE("structural deduplication returns the same id") {
  auto st = new_store();
  GraphBuilder b(st);
  int x = b.input("x", 2);
  int a1 = b.relu(x);
  int a2 = b.relu(x);
  CHECK(a1 == a2);
  int c1 = b.constant(1.5);
  int c2 = b.constant(1.5);
  CHECK(c1 == c2);
  CHECK(b.add(x, c1) == b.add(x, c2));
}

TEST_CASE("node ids are a topological order") {
  auto st = new_store();
  GraphBuilder b(st);
  int x = b.input("x", 2);
  int y = b.input("y", 2);
  int out = b.dot(b.add(b.relu(x), y), b.tanh_(b.sub(x, y)));
  ComputeGraph g = b.freeze(out);
  for (int i = 0; i < g.num_nodes(); ++i)
    for (int a : g.node(i).args) CHECK(a < i);
  CHECK(g.output() == g.num_nodes() - 1);
}

TEST_CASE("freeze keeps every declared slot") {
  auto st = new_store();
  GraphBuilder b(st);
  b.input("x", 2);
  int y = b.input("y", 1);
  ComputeGraph g = b.freeze(b.square(y));  // x unused
  CHECK(g.inputs().size() == 2);
  CHECK(g.input_dim() == 3);
  CHECK(g.slot_index("x") == 0);
  CHECK(g.slot_index("y") == 1);
}

TEST_CASE("eval by name binds slots in declaration layout") {
  auto st = new_store();
  GraphBuilder b(st);
  int x = b.input("x", 2);
  int y = b.input("y", 1);
  ComputeGraph g = b.freeze(b.mul(b.dot(x, x), y));
  Vec vy(1);
  vy << 2.0;
  Vec vx(2);
  vx << 1.0, 2.0;
  Vec out = eval(g, {{"x", vx}, {"y", vy}}, *st);
  REQUIRE(out.size() == 1);
  CHECK(out[0] == doctest::Approx(10.0));
}

TEST_CASE("inline_graph splices a graph at a node") {
  auto st = new_store();
  ComputeGraph inner;
  {
    GraphBuilder b(st);
    int z = b.input("z", 2);
    inner = b.freeze(b.dot(z, z));
  }
  GraphBuilder b(st);
  int x = b.input("x", 2);
  int nested = b.inline_graph(inner, {{"z", b.relu(x)}});
  ComputeGraph g = b.freeze(nested);
  Vec in(2);
  in << -1, 2;
  EvalWorkspace ws;
  CHECK(eval_scalar(g, in.data(), *st, ws) == doctest::Approx(4.0));
}

TEST_CASE("compose feeds one output into a named slot") {
  auto st = new_store();
  ComputeGraph f1, f2;
  {
    GraphBuilder b(st);
    int x = b.input("x", 2);
    f1 = b.freeze(b.add(x, x));
  }
  {
    GraphBuilder b(st);
    int u = b.input("u", 2);
    f2 = b.freeze(b.dot(u, u));
  }
  ComputeGraph g = compose(f1, f2, "u");
  Vec in(2);
  in << 1, 3;
  EvalWorkspace ws;
  CHECK(eval_scalar(g, in.data(), *st, ws) == doctest::Approx(40.0));
}

TEST_CASE("input gradients match finite differences") {
  auto st = new_store();
  Vec w(4);
  w << 0.5, -1, 2, 0.25;
  st->add("w", {2, 2}, w);
  GraphBuilder b(st);
  int x = b.input("x", 2);
  int lin = b.matvec(b.param("w"), x, 2, 2);
  int out = b.add(b.dot(b.tanh_(lin), b.sin_(x)),
                  b.add(b.square(b.sum(x)), b.exp_(b.slice(x, 0, 1))));
  ComputeGraph g = b.freeze(out);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  GradWorkspace gws;
  for (int t = 0; t < 20; ++t) {
    Vec in(2);
    in << u(rng), u(rng);
    Vec grad_x(2);
    grad_flat(g, in.data(), *st, gws, &grad_x, nullptr);
    for (int i = 0; i < 2; ++i) {
      double fd = fd_input(g, *st, in, i);
      CHECK(grad_x[i] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("parameter gradients match finite differences") {
  auto st = new_store();
  Vec w(4);
  w << 0.5, -1, 2, 0.25;
  int wid = st->add("w", {2, 2}, w);
  int bid = st->add("b", {2}, Vec::Ones(2));
  int sid = st->add("s", {1}, Vec::Constant(1, 0.7));
  GraphBuilder b(st);
  int x = b.input("x", 2);
  int lin = b.add(b.matvec(b.param("w"), x, 2, 2), b.param("b"));
  ComputeGraph g =
      b.freeze(b.scale_by_param("s", b.dot(b.tanh_(lin), lin)));

  Vec in(2);
  in << 0.4, -0.9;
  GradWorkspace gws;
  ParamGrads pg;
  pg.ensure(*st);
  pg.set_zero();
  grad_flat(g, in.data(), *st, gws, nullptr, &pg);
  for (int pid : {wid, bid, sid}) {
    REQUIRE(pg.g[pid].size() == st->value(pid).size());
    for (int c = 0; c < st->value(pid).size(); ++c) {
      double fd = fd_param(g, *st, in, pid, c);
      CHECK(pg.g[pid][c] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("gradient weight scales parameter accumulation") {
  auto st = new_store();
  st->add("a", {1}, Vec::Constant(1, 2.0));
  GraphBuilder b(st);
  int x = b.input("x", 1);
  ComputeGraph g = b.freeze(b.scale_by_param("a", b.square(x)));
  Vec in(1);
  in << 3.0;
  GradWorkspace gws;
  ParamGrads pg;
  pg.ensure(*st);
  pg.set_zero();
  grad_flat(g, in.data(), *st, gws, nullptr, &pg, 0.5);
  grad_flat(g, in.data(), *st, gws, nullptr, &pg, 0.25);
  CHECK(pg.g[st->index("a")][0] == doctest::Approx(9.0 * 0.75));
}

TEST_CASE("kinked ops use the left derivative at the kink") {
  auto st = new_store();
  GraphBuilder b(st);
  int x = b.input("x", 1);
  ComputeGraph g = b.freeze(b.sum(b.relu(x)));
  Vec in(1);
  in << 0.0;
  GradWorkspace gws;
  Vec gx(1);
  grad_flat(g, in.data(), *st, gws, &gx, nullptr);
  CHECK(gx[0] == 0.0);

  GraphBuilder b2(st);
  int y = b2.input("x", 1);
  ComputeGraph g2 = b2.freeze(b2.sum(b2.leaky_relu(y, 0.05)));
  grad_flat(g2, in.data(), *st, gws, &gx, nullptr);
  CHECK(gx[0] == doctest::Approx(0.05));
}

TEST_CASE("grad map API reports value and both gradient kinds") {
  auto st = new_store();
  st->add("p", {2}, (Vec(2) << 1.0, -2.0).finished());
  GraphBuilder b(st);
  int x = b.input("x", 2);
  ComputeGraph g = b.freeze(b.dot(x, b.param("p")));
  GradResult r = grad(g, {{"x", (Vec(2) << 3.0, 4.0).finished()}}, *st);
  CHECK(r.value == doctest::Approx(-5.0));
  REQUIRE(r.input_grads.count("x"));
  CHECK(r.input_grads["x"][0] == doctest::Approx(1.0));
  CHECK(r.input_grads["x"][1] == doctest::Approx(-2.0));
  REQUIRE(r.param_grads.count("p"));
  CHECK(r.param_grads["p"][0] == doctest::Approx(3.0));
  CHECK(r.param_grads["p"][1] == doctest::Approx(4.0));
}

TEST_CASE("input_dependent separates parameter-only subgraphs") {
  auto st = new_store();
  st->add("p", {1}, Vec::Constant(1, 1.5));
  GraphBuilder b(st);
  int x = b.input("x", 1);
  int p = b.param("p");
  int pp = b.square(p);
  int out = b.add(x, pp);
  ComputeGraph g = b.freeze(out);
  int square_id = -1, add_id = -1;
  for (int i = 0; i < g.num_nodes(); ++i) {
    if (g.node(i).kind == OpKind::kSquare) square_id = i;
    if (g.node(i).kind == OpKind::kAdd) add_id = i;
  }
  REQUIRE(square_id >= 0);
  REQUIRE(add_id >= 0);
  CHECK_FALSE(g.input_dependent(square_id));
  CHECK(g.input_dependent(add_id));
}

TEST_CASE("store ensure verifies shapes") {
  ParamStore st;
  st.add("a", {2, 2}, Vec::Zero(4));
  CHECK(st.ensure("a", {2, 2}, Vec::Ones(4)) == st.index("a"));
  CHECK_THROWS_AS(st.ensure("a", {4}, Vec::Zero(4)), std::invalid_argument);
  CHECK(st.find("missing") == -1);
  CHECK_THROWS_AS(st.index("missing"), std::invalid_argument);
}

}  // TEST_SUITE
