#pragma once

#include <optional>

#include "dissip/box.hpp"

namespace dissip {

struct AttackConfig {
  int steps = 100;
  int restarts = 32;
  double step_frac = 0.1;  // of per-dimension box width
  double decay = 0.97;     // per-step step size decay
  int workers = 1;
};

struct AttackResult {
  Vec point;
  double value = 0;
};

// splitmix64 combiner for derived substream seeds
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Sign-based projected gradient descent minimizing a scalar graph over a box.
// The reported value is the exact evaluation at the reported point. Restart 0
// starts from `warm` when given, the rest start uniformly inside the box.
AttackResult pgd_minimize(const ComputeGraph& g, const IntervalBox& box,
                          const ParamStore& store, const AttackConfig& cfg,
                          std::uint64_t seed, const Vec* warm = nullptr);

// one result per restart, in restart order (deterministic for fixed seed)
std::vector<AttackResult> pgd_population(const ComputeGraph& g,
                                         const IntervalBox& box,
                                         const ParamStore& store,
                                         const AttackConfig& cfg,
                                         std::uint64_t seed,
                                         const Vec* warm = nullptr);

// min over the 2n box faces, each minimized with one PGD run over the face
double boundary_level(const ComputeGraph& g, const IntervalBox& box,
                      const ParamStore& store, const AttackConfig& cfg,
                      std::uint64_t seed);

// Fixed-capacity pool of the lowest-value points seen, kept sorted ascending
// by value so index 0 is the strongest violation candidate.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {}

  void push(Vec point, double value);
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const AttackResult& entry(size_t i) const { return entries_.at(i); }
  const AttackResult& worst() const { return entries_.at(0); }
  const AttackResult& sample(std::mt19937_64& rng) const;

 private:
  size_t capacity_;
  std::vector<AttackResult> entries_;
};

}  // namespace dissip
