#pragma once

#include <string>

#include "json.hpp"

#include "dissip/area.hpp"
#include "dissip/attack.hpp"
#include "dissip/conditions.hpp"
#include "dissip/config.hpp"
#include "dissip/lmi.hpp"
#include "dissip/trainer.hpp"
#include "dissip/verifier.hpp"

namespace dissip {

using Json = nlohmann::ordered_json;

Json json_vec(const Vec& v);
Json json_mat(const Mat& m);
Json json_box(const IntervalBox& b);

// Common document envelope; every report carries the schema tag plus the
// run identity (command, preset, seed, determinism, worker count).
Json base_report(const std::string& command, const RunConfig& cfg);

// Timing fields are zeroed when `deterministic` so documents byte-match
// across runs.
Json json_verdict(const Verdict& v, bool deterministic);
Json json_bisect(const BisectResult& r, bool deterministic);
Json json_lmi(const LmiResult& r, bool deterministic);
Json json_area(const AreaResult& r);
Json json_semantic(const SemanticCheck& s);
Json json_train(const TrainResult& r);
Json json_attack(const AttackResult& r);

// Two-space indent, trailing newline, '.' decimal point regardless of locale.
void write_json(const std::string& path, const Json& j);

}  // namespace dissip
