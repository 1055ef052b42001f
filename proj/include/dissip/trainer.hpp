#pragma once

#include <string>
#include <vector>

#include "dissip/attack.hpp"
#include "dissip/box.hpp"
#include "dissip/certificate.hpp"
#include "dissip/conditions.hpp"

namespace dissip {

struct TrainConfig {
  int epochs = 40;
  int steps_per_epoch = 50;
  int batch_uniform = 4096;
  int batch_adv = 512;
  int n_anchors = 1024;
  double lambda_sample = 1.0;
  double lambda_adv = 1.0;
  double lambda_anchor = 0.1;
  double lr_net = 1e-3;    // storage network and controller
  double lr_scale = 1e-2;  // multiplier-style scalars (supply., qc.)
  double adam_b1 = 0.9, adam_b2 = 0.999, adam_eps = 1e-8;
  double rho_factor = 0.95;  // training level as a fraction of the boundary level
  double anchor_lo = 0.75;   // anchor band over rho0, lower edge
  double anchor_hi = 1.3;    // upper edge; controls how hard the set is pushed
  int clean_needed = 5;      // violation-free epochs before an expansion probe
  double probe_factor = 1.2;
  int probe_ics = 512;
  int probe_steps = 2000;
  double conv_tol = 1e-2;    // terminal infinity-norm for a converging probe
  double expand_cap = 1.5;   // per-side growth cap per expansion
  bool train_controller = true;
  AttackConfig attack{60, 16, 0.1, 0.97, 1};
  int buffer_capacity = 4096;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out_dir;  // empty disables checkpoints/state/history files
};

struct EpochStats {
  int epoch = 0;
  double rho0 = 0;
  double loss = 0, loss_sample = 0, loss_adv = 0, loss_anchor = 0;
  double adv_min_rfi = 0, adv_min_perf = 0;
  int clean_epochs = 0;
  bool expanded = false;
};

struct TrainResult {
  int epochs_run = 0;
  bool terminated = false;  // an expansion probe found no further growth
  IntervalBox x_box;
  double rho0 = 0;
  std::vector<EpochStats> history;
};

// Counterexample-guided training of the storage function (and optionally the
// controller): hinge losses on both verification conditions over uniform and
// adversarial batches, an anchor loss that pulls chosen points into the
// certified sublevel set, and a domain expansion step after a streak of
// violation-free epochs. Adam state lives in the parameter store under
// "adam.", so a checkpoint restores the optimizer too. With out_dir set the
// run saves per-epoch state and can be resumed exactly.
TrainResult run_training(const ClosedLoopModel& m,
                         const StorageCertificate& cert,
                         const SupplyRate& supply, const IntervalBox& b0,
                         double d_bar, const TrainConfig& cfg,
                         bool resume = false);

}  // namespace dissip
