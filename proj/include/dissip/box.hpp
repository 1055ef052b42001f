#pragma once

#include <random>

#include "dissip/graph.hpp"

namespace dissip {

struct IntervalBox {
  Vec lo, hi;

  IntervalBox() = default;
  IntervalBox(Vec l, Vec h) : lo(std::move(l)), hi(std::move(h)) {
    if (lo.size() != hi.size())
      throw std::invalid_argument("box bound sizes differ");
    for (int i = 0; i < lo.size(); ++i)
      if (lo[i] > hi[i]) throw std::invalid_argument("box has lo > hi");
  }

  int dim() const { return static_cast<int>(lo.size()); }
  double width(int i) const { return hi[i] - lo[i]; }
  Vec widths() const { return hi - lo; }
  Vec center() const { return 0.5 * (lo + hi); }

  bool contains(const Vec& x, double tol = 0.0) const {
    for (int i = 0; i < lo.size(); ++i)
      if (x[i] < lo[i] - tol || x[i] > hi[i] + tol) return false;
    return true;
  }

  void clamp(Vec& x) const {
    for (int i = 0; i < lo.size(); ++i)
      x[i] = std::min(hi[i], std::max(lo[i], x[i]));
  }

  Vec sample(std::mt19937_64& rng) const {
    Vec x(lo.size());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < lo.size(); ++i) x[i] = lo[i] + u(rng) * (hi[i] - lo[i]);
    return x;
  }
};

// concatenation in argument order
IntervalBox box_concat(const IntervalBox& a, const IntervalBox& b);
IntervalBox symmetric_box(const Vec& half_widths);

}  // namespace dissip
