#include "qrbd/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace qrbd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// A JSON object view that knows its dotted path and rejects unknown keys.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }
  Section sub(const std::string& key) const {
    seen_.insert(key);
    return Section(j_.at(key), field(key));
  }

  template <class T>
  void get(const std::string& key, T& out) const {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key), "has the wrong type");
    }
  }

  double number(const std::string& key, double fallback) const {
    double v = fallback;
    get(key, v);
    return v;
  }

  Eigen::VectorXd vector(const std::string& key, int n, double fallback) const {
    Eigen::VectorXd v = Eigen::VectorXd::Constant(n, fallback);
    if (!has(key)) return v;
    const json& x = j_.at(key);
    if (x.is_number()) return Eigen::VectorXd::Constant(n, x.get<double>());
    if (!x.is_array() || static_cast<int>(x.size()) != n) {
      throw ConfigError(field(key), "expected a number or an array of " + std::to_string(n) + " numbers");
    }
    for (int i = 0; i < n; ++i) {
      if (!x[static_cast<std::size_t>(i)].is_number()) throw ConfigError(field(key), "expected numbers");
      v(i) = x[static_cast<std::size_t>(i)].get<double>();
    }
    return v;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  mutable std::set<std::string> seen_;
};

template <class F>
void guarded(const std::string& field, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(field, e.what());
  }
}

FxpFormat read_format(const Section& s) {
  FxpFormat f;
  if (!s.has("n_int") || !s.has("n_frac")) throw ConfigError(s.field("n_int"), "format needs n_int and n_frac");
  s.get("n_int", f.int_bits);
  s.get("n_frac", f.frac_bits);
  s.finish();
  if (f.int_bits < 1 || f.frac_bits < 0 || f.width() > 62) {
    throw ConfigError(s.field("n_int"), "format " + f.to_string() + " is outside the supported range");
  }
  return f;
}

ControllerConfig read_controller(const Section& s, int n, double dt) {
  std::string kind = "pid";
  s.get("kind", kind);
  ControllerConfig c;
  guarded(s.field("kind"), [&] { c = ControllerConfig::defaults(parse_controller_kind(kind), n, dt); });
  if (s.has("pid")) {
    const Section p = s.sub("pid");
    c.pid.kp = p.vector("kp", n, c.pid.kp(0));
    c.pid.ki = p.vector("ki", n, c.pid.ki(0));
    c.pid.kd = p.vector("kd", n, c.pid.kd(0));
    p.get("integral_clamp", c.pid.integral_clamp);
    p.finish();
  }
  if (s.has("lqr")) {
    const Section p = s.sub("lqr");
    const double wq = p.number("q_weight", 100.0), wqd = p.number("qd_weight", 1.0), r = p.number("r_weight", 1e-3);
    guarded(p.field("q_weight"), [&] { c.lqr = LqrConfig::diagonal(n, wq, wqd, r, dt); });
    p.get("max_iterations", c.lqr.max_iterations);
    p.get("tolerance", c.lqr.tolerance);
    p.finish();
  }
  if (s.has("mpc")) {
    const Section p = s.sub("mpc");
    p.get("horizon", c.mpc.horizon);
    p.get("dt", c.mpc.dt);
    p.get("q_weight", c.mpc.q_weight);
    p.get("qd_weight", c.mpc.qd_weight);
    p.get("u_weight", c.mpc.u_weight);
    p.get("terminal_scale", c.mpc.terminal_scale);
    p.get("iterations", c.mpc.iterations);
    p.get("converge_tol", c.mpc.converge_tol);
    p.get("line_search_steps", c.mpc.line_search_steps);
    p.finish();
  }
  s.get("replan_every", c.mpc_replan_every);
  s.finish();
  guarded(s.field("kind"), [&] { c.validate(n); });
  return c;
}

SearchConstraints read_search(const Section& s) {
  SearchConstraints c;
  std::string mode = "dsp58-24";
  s.get("mode", mode);
  guarded(s.field("mode"), [&] { c.mode = parse_hw_mode(mode); });
  s.get("widths", c.widths);
  if (s.has("tolerance_m")) {
    json t;
    s.get("tolerance_m", t);
    if (t.is_string() && t.get<std::string>() == "inf") {
      c.tolerance.ee = std::numeric_limits<double>::infinity();
    } else if (t.is_number()) {
      c.tolerance.ee = t.get<double>();
    } else {
      throw ConfigError(s.field("tolerance_m"), "expected a number or \"inf\"");
    }
  }
  if (s.has("posture_tolerance_rad")) {
    double p = 0.0;
    s.get("posture_tolerance_rad", p);
    c.tolerance.posture = p;
  }
  if (s.has("n_int")) {
    int v = 0;
    s.get("n_int", v);
    c.n_int = v;
  }
  s.get("range_samples", c.range_samples);
  s.get("evaluations", c.evaluations);
  s.get("budget_per_candidate", c.budget_per_candidate);
  s.get("total_budget", c.total_budget);
  s.get("prune_factor", c.prune_factor);
  s.get("prune_fraction", c.prune_fraction);
  s.get("audit_fraction", c.audit_fraction);
  s.get("frac_min", c.frac_min);
  s.get("frac_max", c.frac_max);
  s.get("int_span", c.int_span);
  s.get("compensation_samples", c.compensation_samples);
  s.get("full_matrix_compensation", c.full_matrix_compensation);
  s.finish();
  guarded(s.field("mode"), [&] { c.validate(); });
  return c;
}

SimConfig read_sim(const Section& s, int n, const std::string& base) {
  SimConfig c;
  s.get("dt", c.dt);
  s.get("steps", c.steps);
  s.get("tolerance_m", c.tolerance);
  s.get("state_bound", c.state_bound);
  s.get("init_spread", c.init_spread);
  s.get("init_speed", c.init_speed);
  if (s.has("target")) c.target = s.vector("target", n, 0.0);
  if (s.has("dataset")) {
    s.get("dataset", c.dataset_path);
    const fs::path p = fs::path(base) / c.dataset_path;
    if (!fs::exists(p)) throw ConfigError(s.field("dataset"), "file '" + p.string() + "' does not exist");
    c.dataset_path = p.string();
  }
  s.finish();
  guarded(s.field("dt"), [&] { c.validate(); });
  return c;
}

PlanOptions read_plan(const Section& s) {
  PlanOptions p;
  HwConfig& hw = p.hw;
  if (s.has("family")) {
    std::string f;
    s.get("family", f);
    guarded(s.field("family"), [&] { hw.family = parse_dsp_family(f); });
  }
  s.get("dsp_budget", hw.dsp_budget);
  s.get("unit_dsp_cap", hw.unit_dsp_cap);
  s.get("stage_depth", hw.stage_depth);
  s.get("divider_depth", hw.divider_depth);
  s.get("fifo_depth", hw.fifo_depth);
  s.get("clock_hz", hw.clock_hz);
  if (s.has("minv_method")) {
    std::string m;
    s.get("minv_method", m);
    if (m == "deferred") {
      hw.minv_method = MinvMethod::Deferred;
    } else if (m == "original") {
      hw.minv_method = MinvMethod::Original;
    } else {
      throw ConfigError(s.field("minv_method"), "expected \"deferred\" or \"original\"");
    }
  }
  if (s.has("cost_table")) {
    const Section t = s.sub("cost_table");
    for (const char* fam : {"dsp48", "dsp58"}) {
      if (!t.has(fam)) continue;
      std::map<std::string, int> widths;
      t.get(fam, widths);
      auto& dst = hw.table.cost[parse_dsp_family(fam)];
      dst.clear();
      for (const auto& [w, cost] : widths) {
        try {
          dst[std::stoi(w)] = cost;
        } catch (const std::exception&) {
          throw ConfigError(t.field(fam), "width key '" + w + "' is not an integer");
        }
      }
    }
    t.finish();
    guarded(s.field("cost_table"), [&] { hw.table.validate(); });
  }
  if (s.has("format")) p.format = read_format(s.sub("format"));
  s.get("horizons", p.horizons);
  s.get("iterations", p.iterations);
  s.finish();
  if (hw.dsp_budget < 0) throw ConfigError(s.field("dsp_budget"), "must be nonnegative");
  if (hw.unit_dsp_cap < 1) throw ConfigError(s.field("unit_dsp_cap"), "must be at least 1");
  if (hw.stage_depth < 1 || hw.divider_depth < 0 || hw.fifo_depth < 0) {
    throw ConfigError(s.field("stage_depth"), "depths must be nonnegative (stage depth at least 1)");
  }
  if (!(hw.clock_hz > 0.0)) throw ConfigError(s.field("clock_hz"), "must be positive");
  if (p.horizons.empty()) throw ConfigError(s.field("horizons"), "needs at least one horizon");
  for (int h : p.horizons) {
    if (h < 1) throw ConfigError(s.field("horizons"), "horizons must be at least 1");
  }
  if (p.iterations < 1) throw ConfigError(s.field("iterations"), "must be at least 1");
  return p;
}

VerifyConfig read_verify(const Section& s) {
  VerifyConfig v;
  s.get("samples", v.samples);
  s.get("gradient_samples", v.gradient_samples);
  s.get("fd_step", v.fd_step);
  s.finish();
  guarded(s.field("samples"), [&] { v.validate(); });
  return v;
}

}  // namespace

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), fs::path(path).parent_path().string());
}

RunConfig RunConfig::parse(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  const std::string base = base_dir.empty() ? "." : base_dir;
  const Section root(j, "");
  RunConfig c;
  if (!root.has("robot")) throw ConfigError("robot", "missing URDF path");
  root.get("robot", c.robot_path);
  {
    const fs::path p = fs::path(c.robot_path).is_absolute() ? fs::path(c.robot_path) : fs::path(base) / c.robot_path;
    if (!fs::exists(p)) throw ConfigError("robot", "file '" + p.string() + "' does not exist");
    c.robot_path = p.string();
  }
  root.get("end_effector", c.end_effector);
  const auto model = c.load_robot();
  const int n = model->size();

  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  if (root.has("sim")) c.sim = read_sim(root.sub("sim"), n, base);
  if (root.has("controller")) {
    c.controller = read_controller(root.sub("controller"), n, c.sim.dt);
  } else {
    c.controller = ControllerConfig::defaults(ControllerKind::Pid, n, c.sim.dt);
  }
  if (root.has("format")) c.format = read_format(root.sub("format"));
  if (root.has("search")) c.search = read_search(root.sub("search"));
  if (c.format && c.search) throw ConfigError("search", "give either a fixed format or search constraints, not both");
  if (root.has("compensation")) {
    const Section s = root.sub("compensation");
    CompensationRequest r;
    s.get("samples", r.samples);
    s.get("full_matrix", r.full_matrix);
    s.finish();
    if (r.samples < 100) throw ConfigError("compensation.samples", "needs at least 100 samples");
    c.compensation = r;
  }
  if (root.has("plan")) c.plan = read_plan(root.sub("plan"));
  if (root.has("verify")) c.verify = read_verify(root.sub("verify"));
  root.finish();
  c.apply_seed(c.seed);
  return c;
}

std::shared_ptr<const RobotModel> RunConfig::load_robot() const {
  RobotModel m = load_urdf(robot_path);
  if (!end_effector.empty()) {
    try {
      m.set_end_effector(end_effector);
    } catch (const std::exception& e) {
      throw ConfigError("end_effector", e.what());
    }
  }
  return std::make_shared<const RobotModel>(std::move(m));
}

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  sim.seed = s;
  verify.seed = s;
}

}  // namespace qrbd
