#pragma once

#include <cstdint>
#include <string>

#include "dissip/area.hpp"
#include "dissip/certificate.hpp"
#include "dissip/lmi.hpp"
#include "dissip/system.hpp"
#include "dissip/trainer.hpp"
#include "dissip/verifier.hpp"

namespace dissip {

// Everything a run needs, assembled from a preset and optional INI overrides.
struct RunConfig {
  std::string preset = "l2gain";

  PendulumParams plant;
  RinnDims rinn;
  UncertaintyChannel unc;
  int n_d = 1;
  double d_bar = 0.075;
  SupplyRate supply;
  StorageConfig storage;
  Vec x_lo, x_hi;  // initial region B0

  TrainConfig train;
  double anchor_hi_joint = 1.3;  // anchor target band top, joint training
  double anchor_hi_fixed = 1.2;  // same with the controller frozen

  BisectConfig verify;
  LmiGrid lmi;
  AreaConfig area;

  std::uint64_t seed = 0;
  bool deterministic = false;
  int workers = 0;  // 0 = hardware concurrency
};

// "l2gain": disturbance attenuation for the nominal plant.
// "robust_stability": sector-bounded model uncertainty, zero supply rate.
RunConfig preset_config(const std::string& name);

// INI-style file: [section] headers, key = value lines, # or ; comments.
// A "preset" key (any section) selects the base configuration first; every
// other key overrides one field. Unknown keys throw.
RunConfig load_config(const std::string& path);

}  // namespace dissip
