#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrbd/binding.hpp"
#include "qrbd/controllers.hpp"

namespace qrbd {

class PlantError : public std::runtime_error {
 public:
  PlantError(const std::string& what, int step) : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

enum class ControllerKind { Pid, Lqr, Mpc };
std::string to_string(ControllerKind k);
ControllerKind parse_controller_kind(const std::string& s);

struct ControllerConfig {
  ControllerKind kind = ControllerKind::Pid;
  PidConfig pid;
  LqrConfig lqr;
  MpcConfig mpc;
  int mpc_replan_every = 10;  ///< plant steps between receding-horizon solves

  /// Mild, conventional defaults for an n-joint arm at plant period dt.
  static ControllerConfig defaults(ControllerKind kind, int n, double dt = 1e-3);
  void validate(int n) const;
};

struct SimConfig {
  double dt = 1e-3;
  int steps = 2000;
  std::uint64_t seed = 1;
  double tolerance = 5e-4;  ///< end-effector trajectory tolerance, m
  double state_bound = 1e4;
  Eigen::VectorXd target;     ///< regulation posture; empty selects default_target()
  double init_spread = 0.4;   ///< rad (or m) around the target
  double init_speed = 0.5;    ///< fraction of each velocity limit
  std::string dataset_path;   ///< optional CSV of initial states (q..., qd...) instead of random ones

  void validate() const;
};

/// Alternating +-0.5 posture, clipped into the joint limits.
Eigen::VectorXd default_target(const RobotModel& model);

struct InitialState {
  Eigen::VectorXd q;
  Eigen::VectorXd qd;
};

/// Regulation-task initial conditions around the target (or from sim.dataset_path).
std::vector<InitialState> sample_initial_states(const RobotModel& model, const SimConfig& sim, int count,
                                                std::uint64_t seed);

/// Uniform q within joint limits and qd within velocity limits (2 rad/s when absent).
std::vector<InitialState> sample_random_states(const RobotModel& model, int count, std::uint64_t seed);

struct CompensationParams {
  Eigen::MatrixXd offset;
  int samples = 0;
  bool full_matrix = false;
  double fit_frobenius_before = 0.0;
  double fit_frobenius_after = 0.0;
};

struct Run {
  std::vector<Eigen::VectorXd> q, qd, tau;
  std::vector<Vector3> ee;
  std::uint64_t saturations = 0;
  std::size_t size() const { return q.size(); }
};

struct TrajectoryPair {
  Run reference;  ///< controller on double-precision dynamics
  Run quantized;  ///< controller on fixed-point dynamics
  double dt = 1e-3;
};

void step_plant(const RobotModel& model, Eigen::VectorXd& q, Eigen::VectorXd& qd, const Eigen::VectorXd& tau, double dt,
                double state_bound = 1e4, int step_index = 0);

/// One closed-loop run; the plant is always double precision, `rbd` is what the controller sees.
Run simulate(const RobotModel& model, const ControllerConfig& ctrl, RbdBinding rbd, const SimConfig& sim,
             const InitialState& init);

RbdBinding controller_binding(std::shared_ptr<const RobotModel> model, const std::optional<FxpFormat>& fmt,
                              const CompensationParams* comp);

TrajectoryPair rollout_pair(std::shared_ptr<const RobotModel> model, const ControllerConfig& ctrl,
                            const std::optional<FxpFormat>& fmt, const CompensationParams* comp, const SimConfig& sim,
                            const InitialState& init);
TrajectoryPair rollout_pair(std::shared_ptr<const RobotModel> model, const ControllerConfig& ctrl,
                            const std::optional<FxpFormat>& fmt, const CompensationParams* comp, const SimConfig& sim);

struct TrajectoryMetrics {
  double max_ee_error = 0.0;   ///< m
  double rms_ee_error = 0.0;   ///< m
  double max_posture_error = 0.0;  ///< joint space, rad
  std::vector<double> torque_diff;  ///< |tau_q - tau_ref| per step
};

TrajectoryMetrics trajectory_metrics(const Run& a, const Run& b);

struct MinvErrorStats {
  Eigen::MatrixXd mae;  ///< elementwise mean absolute error
  double frobenius = 0.0;  ///< of the MAE matrix
  double mean_sample_frobenius = 0.0;
  double diag_mae = 0.0;
  double offdiag_mae = 0.0;
};

MinvErrorStats minv_error_stats(std::shared_ptr<const RobotModel> model, const FxpFormat& fmt,
                                const std::vector<InitialState>& samples, const CompensationParams* comp = nullptr);

struct VelocityDepthStats {
  std::vector<double> mean_error;  ///< per joint, mean |dv_i| over samples
  std::vector<int> depth;
  double rank_correlation = 0.0;
};

VelocityDepthStats velocity_error_by_depth(std::shared_ptr<const RobotModel> model, const FxpFormat& fmt,
                                           const std::vector<InitialState>& samples);

struct ErrorStats {
  VelocityDepthStats velocity;
  MinvErrorStats minv;
  std::vector<TrajectoryMetrics> pairs;
  double max_ee_error = 0.0;
  double rms_ee_error = 0.0;
  double max_posture_error = 0.0;
};

ErrorStats analyze_errors(const std::vector<TrajectoryPair>& pairs, std::shared_ptr<const RobotModel> model,
                          const FxpFormat& fmt, int state_samples = 200, std::uint64_t seed = 7);

CompensationParams fit_compensation(std::shared_ptr<const RobotModel> model, const std::optional<FxpFormat>& fmt,
                                    int sample_count, std::uint64_t seed, bool full_matrix = false);

/// Joints ordered deepest first, heavier subtrees first among equal depth.
std::vector<int> joint_priority(const RobotModel& model);

/// Stable reordering: fast states first, speed weighted by joint priority.
std::vector<InitialState> heuristic_sample_order(const std::vector<InitialState>& samples, const RobotModel& model);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

void write_trajectory_csv(std::ostream& out, const TrajectoryPair& pair);
std::string error_stats_json(const ErrorStats& stats);
std::string compensation_json(const CompensationParams& comp);

}  // namespace qrbd
