// dissipcert: train, verify and benchmark dissipativity certificates for the
// uncertain inverted pendulum under RINN feedback.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "dissip/checkpoint.hpp"
#include "dissip/config.hpp"
#include "dissip/parallel.hpp"
#include "dissip/report.hpp"

namespace fs = std::filesystem;
using namespace dissip;

namespace {

struct Setup {
  RunConfig cfg;
  std::shared_ptr<ParamStore> store;
  ClosedLoopModel model;
  StorageCertificate cert;
  IntervalBox b0;
};

Setup make_setup(const RunConfig& cfg, const std::string& checkpoint) {
  auto store = std::make_shared<ParamStore>();
  rinn_init_lqr(*store, cfg.rinn, cfg.plant);
  ClosedLoopModel model =
      build_closed_loop(store, cfg.plant, cfg.rinn, cfg.unc, cfg.n_d);
  Mat p = initial_quadratic_P(model);
  storage_init(*store, cfg.storage, p, cfg.seed);
  StorageCertificate cert = build_storage(store, cfg.storage);
  if (!checkpoint.empty()) load_checkpoint(*store, checkpoint);
  return Setup{cfg, store, std::move(model), std::move(cert),
               IntervalBox(cfg.x_lo, cfg.x_hi)};
}

// Propagate the run-level seed/worker/determinism knobs into the nested
// configurations. Deterministic runs are single-worker so that results do
// not depend on the machine's core count.
void finalize(RunConfig& cfg) {
  if (cfg.workers <= 0) cfg.workers = default_workers();
  if (cfg.deterministic) cfg.workers = 1;
  cfg.train.seed = cfg.seed;
  cfg.train.workers = cfg.workers;
  cfg.train.attack.workers = cfg.workers;
  cfg.verify.seed = cfg.seed;
  cfg.verify.attack.workers = cfg.workers;
  cfg.verify.bab.seed = cfg.seed;
  cfg.verify.bab.workers = cfg.workers;
  cfg.verify.bab.deterministic = cfg.deterministic;
  cfg.lmi.ascent.seed = cfg.seed;
}

double stored_rho(const ParamStore& store, double cli_rho) {
  if (cli_rho > 0) return cli_rho;
  if (store.find("rho") < 0)
    throw std::invalid_argument(
        "no level in the checkpoint; pass --rho explicitly");
  return get_rho(store);
}

void write_trajectory_csv(const std::string& path, const Mat& traj) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "x1,x2";
  for (int c = 2; c < traj.cols(); ++c) out << ",xk" << (c - 1);
  out << "\n";
  char buf[32];
  for (int r = 0; r < traj.rows(); ++r) {
    for (int c = 0; c < traj.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.12g", traj(r, c));
      out << (c ? "," : "") << buf;
    }
    out << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dissipativity certificates for the RINN-controlled pendulum"};
  app.require_subcommand(1);

  std::string config_path, preset = "l2gain", out_dir = "out", checkpoint;
  std::uint64_t seed = 0;
  bool deterministic = false;
  int workers = 0;

  auto* opt_config = app.add_option("--config", config_path, "INI config file");
  auto* opt_preset =
      app.add_option("--preset", preset, "base configuration")
          ->check(CLI::IsMember({"l2gain", "robust_stability"}));
  auto* opt_seed = app.add_option("--seed", seed, "run seed");
  app.add_flag("--deterministic", deterministic,
               "single worker, zeroed timing fields");
  auto* opt_workers = app.add_option("--workers", workers, "worker threads");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--checkpoint", checkpoint, "parameter checkpoint to load");

  // train
  auto* cmd_train = app.add_subcommand("train", "counterexample-guided training");
  cmd_train->fallthrough();
  bool resume = false, fixed_controller = false;
  int epochs_override = -1;
  cmd_train->add_flag("--resume", resume, "continue from saved state in --out");
  cmd_train->add_flag("--fixed-controller", fixed_controller,
                      "train the certificate only");
  cmd_train->add_option("--epochs", epochs_override, "override epoch count");

  // verify
  auto* cmd_verify = app.add_subcommand("verify", "certified level search");
  cmd_verify->fallthrough();
  double verify_rho = 0;
  int semantic_traj = 0, semantic_samples = 10000, semantic_steps = 500;
  cmd_verify->add_option("--rho", verify_rho,
                         "verify this level instead of bisecting");
  cmd_verify->add_option("--semantic-traj", semantic_traj,
                         "Monte-Carlo trajectories after verification");
  cmd_verify->add_option("--semantic-samples", semantic_samples,
                         "Monte-Carlo condition samples");
  cmd_verify->add_option("--semantic-steps", semantic_steps,
                         "steps per Monte-Carlo trajectory");

  // lmi
  auto* cmd_lmi = app.add_subcommand("lmi", "quadratic storage baseline");
  cmd_lmi->fallthrough();

  // area
  auto* cmd_area = app.add_subcommand("area", "projected sublevel-set area");
  cmd_area->fallthrough();
  double area_rho = 0, xk_scale = 1.0;
  std::string from_lmi, boundary_csv;
  cmd_area->add_option("--rho", area_rho, "level (default: checkpoint value)");
  cmd_area->add_option("--from-lmi", from_lmi,
                       "measure the ellipsoid from an lmi report instead");
  cmd_area->add_option("--boundary-csv", boundary_csv,
                       "write boundary cell centers here");
  cmd_area->add_option("--xk-scale", xk_scale,
                       "controller-state search box scale");

  // simulate
  auto* cmd_sim = app.add_subcommand("simulate", "closed-loop rollout");
  cmd_sim->fallthrough();
  int sim_steps = 2000;
  bool excite = false;
  std::string x0_str = "0.3,0";
  cmd_sim->add_option("--steps", sim_steps, "rollout length");
  cmd_sim->add_option("--x0", x0_str, "initial state, comma separated");
  cmd_sim->add_flag("--excite", excite,
                    "worst-box random uncertainty and disturbance inputs");

  // attack
  auto* cmd_attack = app.add_subcommand("attack", "PGD falsification");
  cmd_attack->fallthrough();
  double attack_rho = 0;
  cmd_attack->add_option("--rho", attack_rho, "level (default: checkpoint value)");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg =
        (*opt_config) ? load_config(config_path) : preset_config(preset);
    if (*opt_preset && *opt_config)
      throw std::invalid_argument("--preset and --config are exclusive");
    if (*opt_seed) cfg.seed = seed;
    if (*opt_workers) cfg.workers = workers;
    if (deterministic) cfg.deterministic = true;
    finalize(cfg);
    fs::create_directories(out_dir);

    if (*cmd_train) {
      cfg.train.out_dir = out_dir;
      if (fixed_controller) {
        cfg.train.train_controller = false;
        cfg.train.anchor_hi = cfg.anchor_hi_fixed;
      }
      if (epochs_override >= 0) cfg.train.epochs = epochs_override;
      Setup s = make_setup(cfg, checkpoint);
      TrainResult r = run_training(s.model, s.cert, cfg.supply, s.b0, cfg.d_bar,
                                   cfg.train, resume);
      Json j = base_report("train", cfg);
      j["result"] = json_train(r);
      write_json(out_dir + "/train.json", j);
      std::printf("train: %d epochs, rho0 %.6g, %s\n", r.epochs_run, r.rho0,
                  r.terminated ? "region converged" : "epoch budget reached");
    } else if (*cmd_verify) {
      Setup s = make_setup(cfg, checkpoint);
      Json j = base_report("verify", cfg);
      if (verify_rho > 0) {
        set_rho(*s.store, verify_rho);
        VerificationProblem vp = build_conditions(s.model, s.cert, cfg.supply,
                                                  s.b0, cfg.d_bar);
        IntervalBox tight = sublevel_bbox(
            s.cert, verify_rho, s.b0, cfg.verify.bbox_margin,
            cfg.verify.bbox_samples, mix_seed(cfg.seed, 1), cfg.workers);
        IntervalBox dom = assemble_domain(s.model, tight, cfg.d_bar);
        BabConfig bab = cfg.verify.bab;
        bab.seed = mix_seed(cfg.seed, 2);
        Verdict rfi = verify_positive(vp.phi_rfi, dom, *s.store, bab);
        bab.seed = mix_seed(cfg.seed, 3);
        Verdict perf = verify_positive(vp.phi_perf, dom, *s.store, bab);
        j["rho"] = verify_rho;
        j["rfi"] = json_verdict(rfi, cfg.deterministic);
        j["perf"] = json_verdict(perf, cfg.deterministic);
        bool ok = rfi.kind == VerdictKind::kVerified &&
                  perf.kind == VerdictKind::kVerified;
        j["verified"] = ok;
        std::printf("verify at rho %.6g: rfi %s, perf %s\n", verify_rho,
                    verdict_name(rfi.kind), verdict_name(perf.kind));
      } else {
        BisectResult r =
            bisect_rho(s.model, s.cert, cfg.supply, s.b0, cfg.d_bar, cfg.verify);
        j["result"] = json_bisect(r, cfg.deterministic);
        if (r.verified && semantic_traj > 0) {
          SemanticCheck sc = semantic_check(
              s.model, s.cert, cfg.supply, s.b0, cfg.d_bar, r.rho_star,
              semantic_samples, semantic_traj, semantic_steps,
              mix_seed(cfg.seed, 99), cfg.workers);
          j["semantic"] = json_semantic(sc);
        }
        save_checkpoint(*s.store, out_dir + "/verified.bin");
        std::printf("verify: rho_star %.6g (%s), rho_max %.6g\n", r.rho_star,
                    r.verified ? "verified" : "not verified", r.rho_max);
      }
      write_json(out_dir + "/verify.json", j);
    } else if (*cmd_lmi) {
      Setup s = make_setup(cfg, checkpoint);
      LmiResult r = max_rho_lmi(s.model, cfg.supply, cfg.d_bar, cfg.lmi,
                                cfg.workers, cfg.seed, nullptr,
                                cfg.deterministic);
      Json j = base_report("lmi", cfg);
      j["result"] = json_lmi(r, cfg.deterministic);
      write_json(out_dir + "/lmi.json", j);
      std::printf("lmi: %s, rho_star %.6g at x_bar %.2f v_bar %.2f\n",
                  r.feasible ? "feasible" : "infeasible", r.rho_star, r.x_bar,
                  r.v_bar);
    } else if (*cmd_area) {
      Json j = base_report("area", cfg);
      AreaResult r;
      int nk = cfg.rinn.n_k;
      IntervalBox xk_box(cfg.x_lo.tail(nk) * xk_scale,
                         cfg.x_hi.tail(nk) * xk_scale);
      if (!from_lmi.empty()) {
        std::ifstream in(from_lmi);
        if (!in) throw std::invalid_argument("cannot open " + from_lmi);
        Json lj = Json::parse(in);
        auto rows = lj.at("result").at("p");
        Mat p(rows.size(), rows.size());
        for (std::size_t a = 0; a < rows.size(); ++a)
          for (std::size_t b = 0; b < rows[a].size(); ++b)
            p(static_cast<int>(a), static_cast<int>(b)) = rows[a][b].get<double>();
        double rho = lj.at("result").at("rho_star").get<double>();
        ComputeGraph g = quadratic_level_graph(p);
        r = project_area(g, *g.store(), xk_box, rho, cfg.area, cfg.workers,
                         boundary_csv);
        j["source"] = "lmi";
      } else {
        Setup s = make_setup(cfg, checkpoint);
        double rho = stored_rho(*s.store, area_rho);
        r = project_area(s.cert.v, *s.store, xk_box, rho, cfg.area,
                         cfg.workers, boundary_csv);
        j["source"] = "certificate";
      }
      j["result"] = json_area(r);
      write_json(out_dir + "/area.json", j);
      std::printf("area: %.6g over %d cells at rho %.6g\n", r.area,
                  r.inside_cells, r.rho);
    } else if (*cmd_sim) {
      Setup s = make_setup(cfg, checkpoint);
      Vec x0 = Vec::Zero(s.model.n);
      {
        std::stringstream ss(x0_str);
        std::string item;
        int i = 0;
        while (std::getline(ss, item, ',') && i < s.model.n)
          x0[i++] = std::stod(item);
      }
      Mat wt = Mat::Zero(sim_steps, s.model.n_wt);
      Mat d = Mat::Zero(sim_steps, s.model.n_d);
      if (excite) {
        std::mt19937_64 rng(mix_seed(cfg.seed, 7));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int r = 0; r < sim_steps; ++r) {
          for (int c = 0; c < wt.cols(); ++c) wt(r, c) = u(rng);
          for (int c = 0; c < d.cols(); ++c) d(r, c) = cfg.d_bar * u(rng);
        }
      }
      Mat traj = simulate(s.model, x0, wt, d, sim_steps);
      write_trajectory_csv(out_dir + "/sim.csv", traj);
      Json j = base_report("simulate", cfg);
      j["steps"] = sim_steps;
      j["x0"] = json_vec(x0);
      j["excite"] = excite;
      j["final"] = json_vec(traj.row(traj.rows() - 1));
      j["final_norm"] = traj.row(traj.rows() - 1).norm();
      write_json(out_dir + "/sim.json", j);
      std::printf("simulate: %d steps, final norm %.6g\n", sim_steps,
                  traj.row(traj.rows() - 1).norm());
    } else if (*cmd_attack) {
      Setup s = make_setup(cfg, checkpoint);
      if (attack_rho > 0) set_rho(*s.store, attack_rho);
      VerificationProblem vp =
          build_conditions(s.model, s.cert, cfg.supply, s.b0, cfg.d_bar);
      double rho = get_rho(*s.store);
      AttackResult rfi = pgd_minimize(vp.phi_rfi, vp.domain, *s.store,
                                      cfg.verify.attack, mix_seed(cfg.seed, 11));
      AttackResult perf = pgd_minimize(vp.phi_perf, vp.domain, *s.store,
                                       cfg.verify.attack, mix_seed(cfg.seed, 12));
      Json j = base_report("attack", cfg);
      j["rho"] = rho;
      j["rfi"] = json_attack(rfi);
      j["rfi"]["violated"] = rfi.value <= 0;
      j["perf"] = json_attack(perf);
      j["perf"]["violated"] = perf.value <= 0;
      write_json(out_dir + "/attack.json", j);
      std::printf("attack at rho %.6g: rfi min %.6g, perf min %.6g\n", rho,
                  rfi.value, perf.value);
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
