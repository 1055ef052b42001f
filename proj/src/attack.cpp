#include "dissip/attack.hpp"

#include <algorithm>

#include "dissip/parallel.hpp"

namespace dissip {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

namespace {

AttackResult pgd_single(const ComputeGraph& g, const IntervalBox& box,
                        const ParamStore& store, const AttackConfig& cfg,
                        std::uint64_t seed, const Vec* start,
                        GradWorkspace& ws) {
  std::mt19937_64 rng(seed);
  Vec x;
  if (start) {
    x = *start;
    box.clamp(x);
  } else {
    x = box.sample(rng);
  }
  Vec widths = box.widths();
  Vec grad(box.dim());

  AttackResult best;
  best.point = x;
  best.value = grad_flat(g, x.data(), store, ws, &grad, nullptr);

  double step = cfg.step_frac;
  for (int t = 0; t < cfg.steps; ++t) {
    for (int i = 0; i < x.size(); ++i) {
      double dir = grad[i] > 0 ? 1.0 : (grad[i] < 0 ? -1.0 : 0.0);
      x[i] -= step * widths[i] * dir;
    }
    box.clamp(x);
    double v = grad_flat(g, x.data(), store, ws, &grad, nullptr);
    if (v < best.value) {
      best.value = v;
      best.point = x;
    }
    step *= cfg.decay;
  }
  return best;
}

}  // namespace

std::vector<AttackResult> pgd_population(const ComputeGraph& g,
                                         const IntervalBox& box,
                                         const ParamStore& store,
                                         const AttackConfig& cfg,
                                         std::uint64_t seed, const Vec* warm) {
  if (box.dim() != g.input_dim())
    throw std::invalid_argument("box dim does not match graph input dim");
  if (cfg.restarts <= 0) throw std::invalid_argument("restarts must be positive");
  std::vector<AttackResult> results(cfg.restarts);
  parallel_for(cfg.restarts, cfg.workers, [&](int r, int) {
    thread_local GradWorkspace ws;
    const Vec* start = (r == 0 && warm) ? warm : nullptr;
    results[r] = pgd_single(g, box, store, cfg, mix_seed(seed, r), start, ws);
  });
  return results;
}

AttackResult pgd_minimize(const ComputeGraph& g, const IntervalBox& box,
                          const ParamStore& store, const AttackConfig& cfg,
                          std::uint64_t seed, const Vec* warm) {
  auto pop = pgd_population(g, box, store, cfg, seed, warm);
  int best = 0;
  for (size_t i = 1; i < pop.size(); ++i)
    if (pop[i].value < pop[best].value) best = static_cast<int>(i);
  return pop[best];
}

double boundary_level(const ComputeGraph& g, const IntervalBox& box,
                      const ParamStore& store, const AttackConfig& cfg,
                      std::uint64_t seed) {
  if (box.dim() != g.input_dim())
    throw std::invalid_argument("box dim does not match graph input dim");
  double level = std::numeric_limits<double>::infinity();
  for (int i = 0; i < box.dim(); ++i) {
    for (int side = 0; side < 2; ++side) {
      IntervalBox face = box;
      double pin = side == 0 ? box.lo[i] : box.hi[i];
      face.lo[i] = face.hi[i] = pin;
      AttackResult r =
          pgd_minimize(g, face, store, cfg, mix_seed(seed, 11 + 2 * i + side));
      level = std::min(level, r.value);
    }
  }
  return level;
}

void ReplayBuffer::push(Vec point, double value) {
  AttackResult e{std::move(point), value};
  auto it = std::lower_bound(
      entries_.begin(), entries_.end(), value,
      [](const AttackResult& a, double v) { return a.value < v; });
  entries_.insert(it, std::move(e));
  if (entries_.size() > capacity_) entries_.pop_back();
}

const AttackResult& ReplayBuffer::sample(std::mt19937_64& rng) const {
  if (entries_.empty()) throw std::runtime_error("empty replay buffer");
  std::uniform_int_distribution<size_t> d(0, entries_.size() - 1);
  return entries_[d(rng)];
}

}  // namespace dissip
