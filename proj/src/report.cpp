#include "dissip/report.hpp"

#include <fstream>
#include <stdexcept>

namespace dissip {

Json json_vec(const Vec& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json json_mat(const Mat& m) {
  Json rows = Json::array();
  for (int r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Json json_box(const IntervalBox& b) {
  Json j;
  j["lo"] = json_vec(b.lo);
  j["hi"] = json_vec(b.hi);
  return j;
}

Json base_report(const std::string& command, const RunConfig& cfg) {
  Json j;
  j["schema"] = "dissipcert/1";
  j["command"] = command;
  j["preset"] = cfg.preset;
  j["seed"] = cfg.seed;
  j["deterministic"] = cfg.deterministic;
  j["workers"] = cfg.workers;
  return j;
}

Json json_verdict(const Verdict& v, bool deterministic) {
  Json j;
  j["verdict"] = verdict_name(v.kind);
  j["lower_bound"] = v.lower_bound;
  j["subdomains"] = v.subdomains;
  j["wall_seconds"] = deterministic ? 0.0 : v.wall_seconds;
  if (v.kind == VerdictKind::kCounterexample) {
    j["counterexample"] = json_vec(v.counterexample);
    j["ce_value"] = v.ce_value;
  }
  return j;
}

Json json_bisect(const BisectResult& r, bool deterministic) {
  Json j;
  j["rho_star"] = r.rho_star;
  j["verified"] = r.verified;
  j["rho_max"] = r.rho_max;
  j["domain"] = json_box(r.domain);
  j["total_subdomains"] = r.total_subdomains;
  j["wall_seconds"] = deterministic ? 0.0 : r.wall_seconds;
  Json cands = Json::array();
  for (const auto& c : r.candidates) {
    Json jc;
    jc["rho"] = c.rho;
    jc["prescreen_failed"] = c.prescreen_failed;
    jc["rfi"] = verdict_name(c.rfi);
    jc["perf"] = verdict_name(c.perf);
    jc["verified"] = c.verified;
    jc["subdomains"] = c.subdomains;
    cands.push_back(jc);
  }
  j["candidates"] = cands;
  return j;
}

Json json_lmi(const LmiResult& r, bool deterministic) {
  Json j;
  j["feasible"] = r.feasible;
  j["rho_star"] = r.rho_star;
  j["x_bar"] = r.x_bar;
  j["v_bar"] = r.v_bar;
  j["p"] = json_mat(r.p);
  j["theta"] = json_vec(r.theta);
  j["grid_points"] = r.grid_points;
  j["wall_seconds"] = deterministic ? 0.0 : r.wall_seconds;
  return j;
}

Json json_area(const AreaResult& r) {
  Json j;
  j["area"] = r.area;
  j["inside_cells"] = r.inside_cells;
  j["grid"] = r.grid;
  j["rho"] = r.rho;
  return j;
}

Json json_semantic(const SemanticCheck& s) {
  Json j;
  j["min_phi_rfi"] = s.min_phi_rfi;
  j["min_phi_perf"] = s.min_phi_perf;
  j["max_level_excess"] = s.max_level_excess;
  j["max_dissipation_gap"] = s.max_dissipation_gap;
  j["trajectories"] = s.trajectories;
  return j;
}

Json json_train(const TrainResult& r) {
  Json j;
  j["epochs_run"] = r.epochs_run;
  j["terminated"] = r.terminated;
  j["x_box"] = json_box(r.x_box);
  j["rho0"] = r.rho0;
  Json hist = Json::array();
  for (const auto& e : r.history) {
    Json je;
    je["epoch"] = e.epoch;
    je["rho0"] = e.rho0;
    je["loss"] = e.loss;
    je["loss_sample"] = e.loss_sample;
    je["loss_adv"] = e.loss_adv;
    je["loss_anchor"] = e.loss_anchor;
    je["adv_min_rfi"] = e.adv_min_rfi;
    je["adv_min_perf"] = e.adv_min_perf;
    je["clean_epochs"] = e.clean_epochs;
    je["expanded"] = e.expanded;
    hist.push_back(je);
  }
  j["history"] = hist;
  return j;
}

Json json_attack(const AttackResult& r) {
  Json j;
  j["point"] = json_vec(r.point);
  j["value"] = r.value;
  return j;
}

void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace dissip
