#include "qrbd/icms.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace qrbd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::Pid:
      return "pid";
    case ControllerKind::Lqr:
      return "lqr";
    case ControllerKind::Mpc:
      return "mpc";
  }
  return "?";
}

ControllerKind parse_controller_kind(const std::string& s) {
  if (s == "pid" || s == "PID") return ControllerKind::Pid;
  if (s == "lqr" || s == "LQR") return ControllerKind::Lqr;
  if (s == "mpc" || s == "MPC") return ControllerKind::Mpc;
  throw std::invalid_argument("unknown controller '" + s + "'");
}

ControllerConfig ControllerConfig::defaults(ControllerKind kind, int n, double dt) {
  ControllerConfig c;
  c.kind = kind;
  c.pid = PidConfig::uniform(n, 100.0, 20.0, 20.0, dt);
  c.lqr = LqrConfig::diagonal(n, 100.0, 1.0, 1e-3, dt);
  c.mpc = MpcConfig{};
  c.mpc.u_weight = 1e-4;
  c.mpc.iterations = 3;
  c.mpc.converge_tol = 0.0;
  c.mpc_replan_every = 10;
  return c;
}

void ControllerConfig::validate(int n) const {
  switch (kind) {
    case ControllerKind::Pid:
      pid.validate(n);
      break;
    case ControllerKind::Lqr:
      lqr.validate(n);
      break;
    case ControllerKind::Mpc:
      mpc.validate();
      if (mpc_replan_every < 1) throw std::invalid_argument("MPC replan interval must be at least 1");
      break;
  }
}

void SimConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("simulation dt must be positive");
  if (steps < 1) throw std::invalid_argument("simulation needs at least one step");
  if (!(tolerance > 0.0)) throw std::invalid_argument("trajectory tolerance must be positive");
  if (!(state_bound > 0.0)) throw std::invalid_argument("state bound must be positive");
}

VectorXd default_target(const RobotModel& model) {
  VectorXd t(model.size());
  for (int i = 0; i < model.size(); ++i) {
    const Joint& j = model.link(i).joint;
    t(i) = std::clamp(i % 2 == 0 ? 0.5 : -0.5, j.lower, j.upper);
  }
  return t;
}

namespace {

double velocity_bound(const Joint& j) { return j.velocity_limit > 0.0 ? j.velocity_limit : 2.0; }

std::vector<InitialState> load_dataset(const std::string& path, int n) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open state dataset '" + path + "'");
  std::vector<InitialState> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::vector<double> v;
    double x;
    while (ss >> x) v.push_back(x);
    if (v.empty()) continue;
    if (static_cast<int>(v.size()) != 2 * n) {
      throw std::invalid_argument("dataset row has " + std::to_string(v.size()) + " values, expected " +
                                  std::to_string(2 * n));
    }
    InitialState s;
    s.q = Eigen::Map<VectorXd>(v.data(), n);
    s.qd = Eigen::Map<VectorXd>(v.data() + n, n);
    out.push_back(std::move(s));
  }
  if (out.empty()) throw std::invalid_argument("state dataset '" + path + "' is empty");
  return out;
}

}  // namespace

std::vector<InitialState> sample_initial_states(const RobotModel& model, const SimConfig& sim, int count,
                                                std::uint64_t seed) {
  const int n = model.size();
  if (!sim.dataset_path.empty()) {
    auto all = load_dataset(sim.dataset_path, n);
    std::vector<InitialState> out;
    for (int k = 0; k < count; ++k) out.push_back(all[(seed + static_cast<std::uint64_t>(k)) % all.size()]);
    return out;
  }
  const VectorXd target = sim.target.size() == n ? sim.target : default_target(model);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<InitialState> out;
  for (int k = 0; k < count; ++k) {
    InitialState s{VectorXd(n), VectorXd(n)};
    for (int i = 0; i < n; ++i) {
      const Joint& j = model.link(i).joint;
      s.q(i) = std::clamp(target(i) + sim.init_spread * u(rng), j.lower, j.upper);
      s.qd(i) = sim.init_speed * velocity_bound(j) * u(rng);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<InitialState> sample_random_states(const RobotModel& model, int count, std::uint64_t seed) {
  const int n = model.size();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<InitialState> out;
  for (int k = 0; k < count; ++k) {
    InitialState s{VectorXd(n), VectorXd(n)};
    for (int i = 0; i < n; ++i) {
      const Joint& j = model.link(i).joint;
      s.q(i) = j.lower + (j.upper - j.lower) * u(rng);
      const double v = velocity_bound(j);
      s.qd(i) = -v + 2.0 * v * u(rng);
    }
    out.push_back(std::move(s));
  }
  return out;
}

void step_plant(const RobotModel& model, VectorXd& q, VectorXd& qd, const VectorXd& tau, double dt, double state_bound,
                int step_index) {
  if (!(dt > 0.0)) throw std::invalid_argument("plant dt must be positive");
  const VectorXd qdd = forward_dynamics(model, q, qd, tau);
  qd += dt * qdd;
  q += dt * qd;
  if (!q.allFinite() || !qd.allFinite() || q.cwiseAbs().maxCoeff() > state_bound ||
      qd.cwiseAbs().maxCoeff() > state_bound) {
    throw PlantError("plant state left the bound of " + std::to_string(state_bound) + " at step " +
                         std::to_string(step_index),
                     step_index);
  }
}

RbdBinding controller_binding(std::shared_ptr<const RobotModel> model, const std::optional<FxpFormat>& fmt,
                              const CompensationParams* comp) {
  RbdBinding b = fmt ? RbdBinding::fixed(model, *fmt) : RbdBinding::real(model);
  if (comp && comp->offset.size() > 0) b.set_minv_offset(comp->offset);
  return b;
}

Run simulate(const RobotModel& model, const ControllerConfig& ctrl, RbdBinding rbd, const SimConfig& sim,
             const InitialState& init) {
  sim.validate();
  const int n = model.size();
  ctrl.validate(n);
  const VectorXd target = sim.target.size() == n ? sim.target : default_target(model);
  const JointRef ref = JointRef::hold(target);
  VectorXd q = init.q, qd = init.qd;

  Run run;
  run.q.reserve(static_cast<std::size_t>(sim.steps + 1));
  run.qd.reserve(static_cast<std::size_t>(sim.steps + 1));
  run.tau.reserve(static_cast<std::size_t>(sim.steps + 1));
  run.ee.reserve(static_cast<std::size_t>(sim.steps + 1));

  PidState pid_state;
  std::optional<LqrGain> lqr;
  MpcState mpc_state;
  std::vector<JointRef> mpc_ref;
  VectorXd u_ref, mpc_u0, mpc_x0, mpc_x1;
  MatrixXd mpc_k;
  if (ctrl.kind == ControllerKind::Lqr) {
    LqrConfig cfg = ctrl.lqr;
    lqr = lqr_gain(rbd, target, VectorXd::Zero(n), cfg);
  } else if (ctrl.kind == ControllerKind::Mpc) {
    mpc_ref.assign(static_cast<std::size_t>(ctrl.mpc.horizon), ref);
    u_ref = rbd.gravity_torque(target);
  }

  auto control = [&](int step) -> VectorXd {
    switch (ctrl.kind) {
      case ControllerKind::Pid: {
        PidConfig cfg = ctrl.pid;
        cfg.dt = sim.dt;
        return pid_computed_torque(rbd, q, qd, ref, cfg, pid_state).tau;
      }
      case ControllerKind::Lqr:
        return lqr_control(model, *lqr, q, qd).tau;
      case ControllerKind::Mpc: {
        const int phase = step % ctrl.mpc_replan_every;
        if (phase == 0) {
          const MpcResult r = mpc_step(rbd, q, qd, mpc_ref, u_ref, ctrl.mpc, mpc_state);
          mpc_u0 = r.out.tau;
          mpc_k = r.feedback;
          mpc_x0 = r.x_nominal;
          mpc_x1 = r.x_next;
        }
        const double s = static_cast<double>(phase) / ctrl.mpc_replan_every;
        VectorXd x(2 * n);
        x << q, qd;
        const VectorXd x_nom = (1.0 - s) * mpc_x0 + s * mpc_x1;
        return clamp_torque(model, mpc_u0 + mpc_k * (x - x_nom));
      }
    }
    return VectorXd::Zero(n);
  };

  for (int k = 0; k <= sim.steps; ++k) {
    const VectorXd tau = control(k);
    run.q.push_back(q);
    run.qd.push_back(qd);
    run.tau.push_back(tau);
    run.ee.push_back(end_effector_position(model, q));
    if (k == sim.steps) break;
    step_plant(model, q, qd, tau, sim.dt, sim.state_bound, k);
  }
  run.saturations = rbd.saturations();
  return run;
}

TrajectoryPair rollout_pair(std::shared_ptr<const RobotModel> model, const ControllerConfig& ctrl,
                            const std::optional<FxpFormat>& fmt, const CompensationParams* comp, const SimConfig& sim,
                            const InitialState& init) {
  TrajectoryPair p;
  p.dt = sim.dt;
  p.reference = simulate(*model, ctrl, RbdBinding::real(model), sim, init);
  p.quantized = simulate(*model, ctrl, controller_binding(model, fmt, comp), sim, init);
  return p;
}

TrajectoryPair rollout_pair(std::shared_ptr<const RobotModel> model, const ControllerConfig& ctrl,
                            const std::optional<FxpFormat>& fmt, const CompensationParams* comp, const SimConfig& sim) {
  const auto init = sample_initial_states(*model, sim, 1, sim.seed).front();
  return rollout_pair(std::move(model), ctrl, fmt, comp, sim, init);
}

TrajectoryMetrics trajectory_metrics(const Run& a, const Run& b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired runs differ in length");
  TrajectoryMetrics m;
  double sq = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double e = (a.ee[k] - b.ee[k]).norm();
    m.max_ee_error = std::max(m.max_ee_error, e);
    sq += e * e;
    m.max_posture_error = std::max(m.max_posture_error, (a.q[k] - b.q[k]).cwiseAbs().maxCoeff());
    m.torque_diff.push_back((a.tau[k] - b.tau[k]).norm());
  }
  m.rms_ee_error = a.size() ? std::sqrt(sq / static_cast<double>(a.size())) : 0.0;
  return m;
}

MinvErrorStats minv_error_stats(std::shared_ptr<const RobotModel> model, const FxpFormat& fmt,
                                const std::vector<InitialState>& samples, const CompensationParams* comp) {
  if (samples.empty()) throw std::invalid_argument("minv_error_stats needs samples");
  const int n = model->size();
  RbdBinding real = RbdBinding::real(model);
  RbdBinding quant = controller_binding(model, fmt, comp);
  MinvErrorStats s;
  s.mae = MatrixXd::Zero(n, n);
  for (const auto& x : samples) {
    const MatrixXd d = (quant.minv(x.q) - real.minv(x.q)).cwiseAbs();
    s.mae += d;
    s.mean_sample_frobenius += d.norm();
  }
  const double count = static_cast<double>(samples.size());
  s.mae /= count;
  s.mean_sample_frobenius /= count;
  s.frobenius = s.mae.norm();
  s.diag_mae = s.mae.diagonal().mean();
  s.offdiag_mae = n > 1 ? (s.mae.sum() - s.mae.diagonal().sum()) / (n * n - n) : 0.0;
  return s;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman needs two equal-length series");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

VelocityDepthStats velocity_error_by_depth(std::shared_ptr<const RobotModel> model, const FxpFormat& fmt,
                                           const std::vector<InitialState>& samples) {
  if (samples.empty()) throw std::invalid_argument("velocity_error_by_depth needs samples");
  const int n = model->size();
  RbdBinding real = RbdBinding::real(model);
  RbdBinding quant = RbdBinding::fixed(model, fmt);
  VelocityDepthStats s;
  s.mean_error.assign(static_cast<std::size_t>(n), 0.0);
  for (const auto& x : samples) {
    const auto vr = real.link_velocities(x.q, x.qd);
    const auto vq = quant.link_velocities(x.q, x.qd);
    for (int i = 0; i < n; ++i) s.mean_error[static_cast<std::size_t>(i)] += (vq[i] - vr[i]).norm();
  }
  std::vector<double> depth;
  for (int i = 0; i < n; ++i) {
    s.mean_error[static_cast<std::size_t>(i)] /= static_cast<double>(samples.size());
    s.depth.push_back(model->depth(i));
    depth.push_back(model->depth(i));
  }
  s.rank_correlation = n >= 2 ? spearman(depth, s.mean_error) : 0.0;
  return s;
}

ErrorStats analyze_errors(const std::vector<TrajectoryPair>& pairs, std::shared_ptr<const RobotModel> model,
                          const FxpFormat& fmt, int state_samples, std::uint64_t seed) {
  if (pairs.empty()) throw std::invalid_argument("analyze_errors needs at least one trajectory pair");
  ErrorStats st;
  double sq = 0.0;
  std::size_t count = 0;
  for (const auto& p : pairs) {
    auto m = trajectory_metrics(p.reference, p.quantized);
    st.max_ee_error = std::max(st.max_ee_error, m.max_ee_error);
    st.max_posture_error = std::max(st.max_posture_error, m.max_posture_error);
    sq += m.rms_ee_error * m.rms_ee_error * static_cast<double>(p.reference.size());
    count += p.reference.size();
    st.pairs.push_back(std::move(m));
  }
  st.rms_ee_error = count ? std::sqrt(sq / static_cast<double>(count)) : 0.0;
  const auto samples = sample_random_states(*model, state_samples, seed);
  st.velocity = velocity_error_by_depth(model, fmt, samples);
  st.minv = minv_error_stats(model, fmt, samples);
  return st;
}

CompensationParams fit_compensation(std::shared_ptr<const RobotModel> model, const std::optional<FxpFormat>& fmt,
                                    int sample_count, std::uint64_t seed, bool full_matrix) {
  if (sample_count < 100) throw std::invalid_argument("compensation fitting needs at least 100 samples");
  const int n = model->size();
  CompensationParams c;
  c.samples = sample_count;
  c.full_matrix = full_matrix;
  c.offset = MatrixXd::Zero(n, n);
  if (!fmt) return c;
  RbdBinding real = RbdBinding::real(model);
  RbdBinding quant = RbdBinding::fixed(model, *fmt);
  const auto samples = sample_random_states(*model, sample_count, seed);
  std::vector<MatrixXd> diffs;
  diffs.reserve(samples.size());
  for (const auto& x : samples) {
    diffs.push_back(real.minv(x.q) - quant.minv(x.q));
    c.offset += diffs.back();
  }
  c.offset /= static_cast<double>(samples.size());
  if (!full_matrix) c.offset = MatrixXd(c.offset.diagonal().asDiagonal());
  c.offset = 0.5 * (c.offset + c.offset.transpose());
  MatrixXd before = MatrixXd::Zero(n, n), after = MatrixXd::Zero(n, n);
  for (const auto& d : diffs) {
    before += d.cwiseAbs();
    after += (d - c.offset).cwiseAbs();
  }
  c.fit_frobenius_before = before.norm() / static_cast<double>(diffs.size());
  c.fit_frobenius_after = after.norm() / static_cast<double>(diffs.size());
  return c;
}

std::vector<int> joint_priority(const RobotModel& model) {
  const int n = model.size();
  std::vector<double> subtree_mass(static_cast<std::size_t>(n), 0.0);
  for (int i = n - 1; i >= 0; --i) {
    subtree_mass[static_cast<std::size_t>(i)] += model.link(i).mass;
    const int p = model.parent(i);
    if (p >= 0) subtree_mass[static_cast<std::size_t>(p)] += subtree_mass[static_cast<std::size_t>(i)];
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (model.depth(a) != model.depth(b)) return model.depth(a) > model.depth(b);
    return subtree_mass[static_cast<std::size_t>(a)] > subtree_mass[static_cast<std::size_t>(b)];
  });
  return order;
}

std::vector<InitialState> heuristic_sample_order(const std::vector<InitialState>& samples, const RobotModel& model) {
  const int n = model.size();
  const auto prio = joint_priority(model);
  VectorXd w = VectorXd::Ones(n);
  for (int r = 0; r < n; ++r) w(prio[static_cast<std::size_t>(r)]) = 1.0 + static_cast<double>(n - r) / n;
  std::vector<double> score;
  score.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.qd.size() != n) throw std::invalid_argument("sample dimension does not match the model");
    score.push_back(s.qd.cwiseAbs().cwiseProduct(w).norm());
  }
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  std::vector<InitialState> out;
  out.reserve(samples.size());
  for (auto i : idx) out.push_back(samples[i]);
  return out;
}

void write_trajectory_csv(std::ostream& out, const TrajectoryPair& pair) {
  const int n = pair.reference.size() ? static_cast<int>(pair.reference.q.front().size()) : 0;
  out << "step,t";
  for (const char* group : {"q", "qd", "tau"}) {
    for (int i = 0; i < n; ++i) out << ',' << group << i;
  }
  out << ",ee_x,ee_y,ee_z,run_id\n";
  out << std::setprecision(17);
  auto emit = [&](const Run& r, const char* id) {
    for (std::size_t k = 0; k < r.size(); ++k) {
      out << k << ',' << static_cast<double>(k) * pair.dt;
      for (int i = 0; i < n; ++i) out << ',' << r.q[k](i);
      for (int i = 0; i < n; ++i) out << ',' << r.qd[k](i);
      for (int i = 0; i < n; ++i) out << ',' << r.tau[k](i);
      out << ',' << r.ee[k].x() << ',' << r.ee[k].y() << ',' << r.ee[k].z() << ',' << id << '\n';
    }
  };
  emit(pair.reference, "float");
  emit(pair.quantized, "quantized");
}

namespace {

nlohmann::json matrix_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

std::string error_stats_json(const ErrorStats& s) {
  nlohmann::json j;
  j["max_ee_error_m"] = s.max_ee_error;
  j["rms_ee_error_m"] = s.rms_ee_error;
  j["max_posture_error_rad"] = s.max_posture_error;
  j["velocity_error_by_joint"] = s.velocity.mean_error;
  j["joint_depth"] = s.velocity.depth;
  j["depth_rank_correlation"] = s.velocity.rank_correlation;
  j["minv_mae"] = matrix_json(s.minv.mae);
  j["minv_frobenius"] = s.minv.frobenius;
  j["minv_diag_mae"] = s.minv.diag_mae;
  j["minv_offdiag_mae"] = s.minv.offdiag_mae;
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : s.pairs) {
    pairs.push_back({{"max_ee_error_m", p.max_ee_error},
                     {"rms_ee_error_m", p.rms_ee_error},
                     {"max_posture_error_rad", p.max_posture_error},
                     {"max_torque_diff", p.torque_diff.empty() ? 0.0
                                                               : *std::max_element(p.torque_diff.begin(),
                                                                                   p.torque_diff.end())}});
  }
  j["pairs"] = pairs;
  return j.dump(2);
}

std::string compensation_json(const CompensationParams& c) {
  nlohmann::json j;
  j["offset"] = matrix_json(c.offset);
  j["samples"] = c.samples;
  j["full_matrix"] = c.full_matrix;
  j["fit_frobenius_before"] = c.fit_frobenius_before;
  j["fit_frobenius_after"] = c.fit_frobenius_after;
  return j.dump(2);
}

}  // namespace qrbd
