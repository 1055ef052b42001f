#include "dissip/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace dissip {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw std::invalid_argument("config: " + where + ": " + what);
}

double to_double(const std::string& where, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) bad(where, "trailing characters in '" + v + "'");
    return d;
  } catch (const std::invalid_argument&) {
    bad(where, "expected a number, got '" + v + "'");
  }
}

long to_long(const std::string& where, const std::string& v) {
  try {
    std::size_t pos = 0;
    long n = std::stol(v, &pos);
    if (pos != v.size()) bad(where, "trailing characters in '" + v + "'");
    return n;
  } catch (const std::invalid_argument&) {
    bad(where, "expected an integer, got '" + v + "'");
  }
}

int to_int(const std::string& where, const std::string& v) {
  return static_cast<int>(to_long(where, v));
}

bool to_bool(const std::string& where, const std::string& v) {
  std::string s = lower(v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad(where, "expected a boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> to_int_list(const std::string& where, const std::string& v) {
  std::vector<int> out;
  for (const auto& s : split_list(v)) out.push_back(to_int(where, s));
  return out;
}

Vec to_vec(const std::string& where, const std::string& v) {
  auto parts = split_list(v);
  Vec out(static_cast<int>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i)
    out[static_cast<int>(i)] = to_double(where, parts[i]);
  return out;
}

void apply_key(RunConfig& c, const std::string& sec, const std::string& key,
               const std::string& val) {
  const std::string where = "[" + sec + "] " + key;
  auto d = [&] { return to_double(where, val); };
  auto i = [&] { return to_int(where, val); };
  auto l = [&] { return to_long(where, val); };
  auto b = [&] { return to_bool(where, val); };

  if (sec == "plant") {
    if (key == "m") c.plant.m = d();
    else if (key == "l") c.plant.l = d();
    else if (key == "mu") c.plant.mu = d();
    else if (key == "g") c.plant.g = d();
    else if (key == "dt") c.plant.dt = d();
    else if (key == "u_bar") c.plant.u_bar = d();
    else bad(where, "unknown key");
  } else if (sec == "controller") {
    if (key == "n_k") c.rinn.n_k = i();
    else if (key == "n_kw") c.rinn.n_kw = i();
    else bad(where, "unknown key");
  } else if (sec == "uncertainty") {
    if (key == "kind") {
      std::string v = lower(val);
      if (v == "none") c.unc.kind = UncertaintyKind::kNone;
      else if (v == "sector") c.unc.kind = UncertaintyKind::kSector;
      else if (v == "gain") c.unc.kind = UncertaintyKind::kGainBound;
      else bad(where, "expected none|sector|gain");
    } else if (key == "alpha") c.unc.alpha = d();
    else if (key == "gamma_delta") c.unc.gamma_delta = d();
    else if (key == "n_w") c.unc.n_w = i();
    else bad(where, "unknown key");
  } else if (sec == "disturbance") {
    if (key == "n_d") c.n_d = i();
    else if (key == "d_bar") c.d_bar = d();
    else bad(where, "unknown key");
  } else if (sec == "supply") {
    if (key == "kind") {
      std::string v = lower(val);
      if (v == "l2gain") c.supply.kind = SupplyKind::kL2Gain;
      else if (v == "passivity") c.supply.kind = SupplyKind::kPassivity;
      else if (v == "zero") c.supply.kind = SupplyKind::kZero;
      else bad(where, "expected l2gain|passivity|zero");
    } else if (key == "gamma") c.supply.gamma = d();
    else bad(where, "unknown key");
  } else if (sec == "storage") {
    if (key == "hidden") c.storage.hidden = to_int_list(where, val);
    else if (key == "alpha_nn") c.storage.alpha_nn = d();
    else if (key == "eps_pd") c.storage.eps_pd = d();
    else if (key == "leaky_slope") c.storage.leaky_slope = d();
    else bad(where, "unknown key");
  } else if (sec == "domain") {
    if (key == "x_lo") c.x_lo = to_vec(where, val);
    else if (key == "x_hi") c.x_hi = to_vec(where, val);
    else bad(where, "unknown key");
  } else if (sec == "train") {
    if (key == "epochs") c.train.epochs = i();
    else if (key == "steps_per_epoch") c.train.steps_per_epoch = i();
    else if (key == "batch_uniform") c.train.batch_uniform = i();
    else if (key == "batch_adv") c.train.batch_adv = i();
    else if (key == "n_anchors") c.train.n_anchors = i();
    else if (key == "lambda_sample") c.train.lambda_sample = d();
    else if (key == "lambda_adv") c.train.lambda_adv = d();
    else if (key == "lambda_anchor") c.train.lambda_anchor = d();
    else if (key == "lr_net") c.train.lr_net = d();
    else if (key == "lr_scale") c.train.lr_scale = d();
    else if (key == "rho_factor") c.train.rho_factor = d();
    else if (key == "anchor_lo") c.train.anchor_lo = d();
    else if (key == "anchor_hi_joint") c.anchor_hi_joint = d();
    else if (key == "anchor_hi_fixed") c.anchor_hi_fixed = d();
    else if (key == "clean_needed") c.train.clean_needed = i();
    else if (key == "probe_factor") c.train.probe_factor = d();
    else if (key == "probe_ics") c.train.probe_ics = i();
    else if (key == "probe_steps") c.train.probe_steps = i();
    else if (key == "conv_tol") c.train.conv_tol = d();
    else if (key == "expand_cap") c.train.expand_cap = d();
    else if (key == "buffer_capacity") c.train.buffer_capacity = i();
    else if (key == "attack_steps") c.train.attack.steps = i();
    else if (key == "attack_restarts") c.train.attack.restarts = i();
    else bad(where, "unknown key");
  } else if (sec == "attack") {
    if (key == "steps") c.verify.attack.steps = i();
    else if (key == "restarts") c.verify.attack.restarts = i();
    else if (key == "step_frac") c.verify.attack.step_frac = d();
    else if (key == "decay") c.verify.attack.decay = d();
    else bad(where, "unknown key");
  } else if (sec == "verify") {
    if (key == "beta") c.verify.beta = d();
    else if (key == "mu") c.verify.mu = d();
    else if (key == "tol") c.verify.tol = d();
    else if (key == "max_candidates") c.verify.max_candidates = i();
    else if (key == "bbox_margin") c.verify.bbox_margin = d();
    else if (key == "bbox_samples") c.verify.bbox_samples = i();
    else if (key == "max_subdomains") c.verify.bab.max_subdomains = l();
    else if (key == "time_limit") c.verify.bab.time_limit = d();
    else if (key == "delta_sound") c.verify.bab.delta_sound = d();
    else if (key == "pgd_steps") c.verify.bab.pgd_steps = i();
    else if (key == "pgd_restarts") c.verify.bab.pgd_restarts = i();
    else if (key == "alpha_refine_steps") c.verify.bab.relax.alpha_refine_steps = i();
    else if (key == "refine_step") c.verify.bab.relax.refine_step = d();
    else bad(where, "unknown key");
  } else if (sec == "lmi") {
    if (key == "x_lo") c.lmi.x_lo = d();
    else if (key == "x_hi") c.lmi.x_hi = d();
    else if (key == "x_step") c.lmi.x_step = d();
    else if (key == "v_lo") c.lmi.v_lo = d();
    else if (key == "v_hi") c.lmi.v_hi = d();
    else if (key == "v_step") c.lmi.v_step = d();
    else if (key == "rho_tol") c.lmi.rho_tol = d();
    else if (key == "ascent_iters") c.lmi.ascent.iters = i();
    else if (key == "ascent_starts") c.lmi.ascent.starts = i();
    else if (key == "ascent_step") c.lmi.ascent.init_step = d();
    else if (key == "stop_at") c.lmi.ascent.stop_at = d();
    else bad(where, "unknown key");
  } else if (sec == "area") {
    if (key == "grid") c.area.grid = i();
    else if (key == "x1_lo") c.area.x1_lo = d();
    else if (key == "x1_hi") c.area.x1_hi = d();
    else if (key == "x2_lo") c.area.x2_lo = d();
    else if (key == "x2_hi") c.area.x2_hi = d();
    else if (key == "descent_steps") c.area.descent_steps = i();
    else if (key == "starts") c.area.starts = i();
    else bad(where, "unknown key");
  } else if (sec == "run") {
    if (key == "preset") return;  // consumed before the field pass
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_long(where, val));
    else if (key == "deterministic") c.deterministic = b();
    else if (key == "workers") c.workers = i();
    else bad(where, "unknown key");
  } else {
    bad("[" + sec + "]", "unknown section");
  }
}

}  // namespace

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  c.x_lo = Vec(4);
  c.x_lo << -3, -9, -4, -4;
  c.x_hi = Vec(4);
  c.x_hi << 3, 9, 4, 4;
  if (name == "l2gain") {
    c.unc.kind = UncertaintyKind::kNone;
    c.n_d = 1;
    c.d_bar = 0.075;
    c.supply.kind = SupplyKind::kL2Gain;
    c.supply.gamma = 100.0;
    c.storage.hidden = {128, 128};
    c.storage.alpha_nn = 0.5;
    c.anchor_hi_fixed = 1.2;
  } else if (name == "robust_stability") {
    c.unc.kind = UncertaintyKind::kSector;
    c.unc.alpha = 0.25;
    c.unc.n_w = 1;
    c.n_d = 0;
    c.d_bar = 0.0;
    c.supply.kind = SupplyKind::kZero;
    c.storage.hidden = {32, 32};
    c.storage.alpha_nn = 0.25;
    c.anchor_hi_fixed = 1.1;
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  c.storage.n = 2 + c.rinn.n_k;
  c.train.anchor_hi = c.anchor_hi_joint;
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);

  struct Item {
    std::string sec, key, val;
  };
  std::vector<Item> items;
  std::string preset = "l2gain";
  std::string sec, line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto cut = line.find_first_of("#;");
    if (cut != std::string::npos) line = line.substr(0, cut);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config: " + path + ":" +
                                    std::to_string(lineno) + ": bad section header");
      sec = lower(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: " + path + ":" +
                                  std::to_string(lineno) + ": expected key = value");
    std::string key = lower(trim(line.substr(0, eq)));
    std::string val = trim(line.substr(eq + 1));
    if (key == "preset") {
      preset = val;
      continue;
    }
    items.push_back({sec, key, val});
  }

  RunConfig c = preset_config(preset);
  for (const auto& it : items) apply_key(c, it.sec, it.key, it.val);
  c.storage.n = 2 + c.rinn.n_k;
  c.train.anchor_hi = c.anchor_hi_joint;
  return c;
}

}  // namespace dissip
