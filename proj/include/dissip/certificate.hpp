#pragma once

#include <cstdint>
#include <vector>

#include "dissip/graph.hpp"

namespace dissip {

enum class SupplyKind { kL2Gain, kPassivity, kZero };

struct SupplyRate {
  SupplyKind kind = SupplyKind::kL2Gain;
  double gamma = 100.0;  // L2 gain level
};

double supply_value(const SupplyRate& s, const Vec& d, const Vec& e);

struct StorageConfig {
  int n = 4;
  std::vector<int> hidden = {128, 128};
  double alpha_nn = 0.5;
  double eps_pd = 1e-4;
  double leaky_slope = 0.01;
  Vec x_star;  // empty means the origin
};

// Storage function
//   V(x) = q(x) * (1 + alpha_nn * tanh(psi(x - x*) - psi(0)))
//   q(x) = (x - x*)' (eps_pd I + R'R) (x - x*)
// with R and the psi stack trainable. The tanh keeps the modulation inside
// (1 - alpha_nn, 1 + alpha_nn), so alpha_nn < 1 keeps V positive definite.
struct StorageCertificate {
  StorageConfig cfg;
  std::shared_ptr<ParamStore> store;
  ComputeGraph v;  // slot "x" -> scalar
};

// Declares storage.R and storage.psi.* (psi output layer zeroed so the initial
// V is exactly quadratic), plus supply.beta_s = -log(frobenius(p_init)).
// p_init is normalized by its Frobenius norm before the Cholesky split.
void storage_init(ParamStore& store, const StorageConfig& cfg, const Mat& p_init,
                  std::uint64_t seed);

StorageCertificate build_storage(std::shared_ptr<ParamStore> store,
                                 const StorageConfig& cfg);

double storage_value(const StorageCertificate& c, const Vec& x);

// lambda = lambda_tilde^2 >= 0, one scalar per quadratic-constraint channel
void qc_multiplier_init(ParamStore& store, int count);
int qc_lambda_node(GraphBuilder& b, int channel);
double qc_lambda_value(const ParamStore& store, int channel);

// alpha_s = exp(supply.beta_s) > 0
int supply_scale_node(GraphBuilder& b);
double supply_scale_value(const ParamStore& store);

// alpha_s * s(d, e) as a graph node; pass d = -1 when there is no disturbance
int supply_node(GraphBuilder& b, const SupplyRate& s, int d, int e);

}  // namespace dissip
