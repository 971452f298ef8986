#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrbd/binding.hpp"

namespace qrbd {

class ControlError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct JointRef {
  Eigen::VectorXd q;
  Eigen::VectorXd qd;
  Eigen::VectorXd qdd;
  static JointRef hold(const Eigen::VectorXd& q);
};

struct ControlOutput {
  Eigen::VectorXd tau;
  double tracking_error = 0.0;  ///< |q_ref - q|
  double cost = 0.0;
};

/// Clamps to the model's effort limits where they are positive.
Eigen::VectorXd clamp_torque(const RobotModel& model, Eigen::VectorXd tau);

// ---- PID with computed-torque compensation ----

struct PidConfig {
  Eigen::VectorXd kp, ki, kd;
  double integral_clamp = 0.5;  ///< per-joint bound on the integrated error, rad s
  double dt = 1e-3;

  static PidConfig uniform(int n, double kp, double ki, double kd, double dt = 1e-3);
  void validate(int n) const;
};

struct PidState {
  Eigen::VectorXd integral;
};

/// tau = RNEA(q, qd, qdd_ref + Kp e + Kd de + Ki int e) with e = q_ref - q.
ControlOutput pid_computed_torque(RbdBinding& rbd, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                                  const JointRef& ref, const PidConfig& cfg, PidState& state);

// ---- LQR ----

struct LqrConfig {
  Eigen::MatrixXd Q;  ///< 2n x 2n
  Eigen::MatrixXd R;  ///< n x n
  double dt = 1e-3;
  int max_iterations = 200000;
  double tolerance = 1e-10;

  static LqrConfig diagonal(int n, double q_weight, double qd_weight, double r_weight, double dt = 1e-3);
  void validate(int n) const;
};

struct LqrGain {
  Eigen::MatrixXd K;  ///< n x 2n, u = u0 - K (x - x0)
  Eigen::MatrixXd P;
  Eigen::MatrixXd A, B;
  Eigen::VectorXd u0;  ///< torque holding the operating point
  Eigen::VectorXd x0;
  int iterations = 0;
  double spectral_radius = 0.0;  ///< of A - B K
};

/// Infinite-horizon discrete LQR by fixed-point iteration of the Riccati
/// recursion. Throws ControlError when it does not converge.
Eigen::MatrixXd solve_dlqr(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                           const Eigen::MatrixXd& R, int max_iterations, double tolerance, Eigen::MatrixXd* P = nullptr,
                           int* iterations = nullptr);

/// Explicit-Euler linearization of the dynamics at (q0, qd0, tau0) from dFD.
void linearize_euler(RbdBinding& rbd, const Eigen::VectorXd& q0, const Eigen::VectorXd& qd0,
                     const Eigen::VectorXd& tau0, double dt, Eigen::MatrixXd& A, Eigen::MatrixXd& B);

LqrGain lqr_gain(RbdBinding& rbd, const Eigen::VectorXd& q0, const Eigen::VectorXd& qd0, const LqrConfig& cfg);

ControlOutput lqr_control(const RobotModel& model, const LqrGain& gain, const Eigen::VectorXd& q,
                          const Eigen::VectorXd& qd);

// ---- MPC by iterative LQR ----

struct MpcConfig {
  int horizon = 10;
  double dt = 0.01;
  double q_weight = 100.0;
  double qd_weight = 1.0;
  double u_weight = 1e-3;
  double terminal_scale = 10.0;
  int iterations = 10;
  double converge_tol = 1e-6;  ///< stop once an accepted step improves the cost by less than this fraction
  double reg_floor = 1e-6;
  double reg_init = 1e-4;
  int line_search_steps = 6;
  double divergence_bound = 1e6;

  void validate() const;
};

struct MpcState {
  std::vector<Eigen::VectorXd> warm_u;
};

struct MpcResult {
  ControlOutput out;
  Eigen::MatrixXd feedback;        ///< n x 2n gain of the first step
  Eigen::VectorXd x_nominal;       ///< state the first control was planned for
  Eigen::VectorXd x_next;          ///< planned state one MPC step later
  std::vector<double> cost_history;  ///< initial cost, then each accepted iteration
  int accepted = 0;
};

/// One receding-horizon solve. `ref` supplies at least `horizon` targets; the
/// last one is also the terminal target. `u_ref` is the nominal holding torque.
MpcResult mpc_step(RbdBinding& rbd, const Eigen::VectorXd& q, const Eigen::VectorXd& qd, const std::vector<JointRef>& ref,
                   const Eigen::VectorXd& u_ref, const MpcConfig& cfg, MpcState& state);

}  // namespace qrbd
