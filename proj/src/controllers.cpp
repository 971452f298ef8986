#include "qrbd/controllers.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <cmath>
#include <limits>

namespace qrbd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

JointRef JointRef::hold(const VectorXd& q) {
  return {q, VectorXd::Zero(q.size()), VectorXd::Zero(q.size())};
}

VectorXd clamp_torque(const RobotModel& model, VectorXd tau) {
  for (int i = 0; i < model.size(); ++i) {
    const double lim = model.link(i).joint.effort_limit;
    if (lim > 0.0) tau(i) = std::clamp(tau(i), -lim, lim);
  }
  return tau;
}

namespace {

void require_size(const VectorXd& v, int n, const char* what) {
  if (v.size() != n) throw std::invalid_argument(std::string(what) + " has the wrong dimension");
}

bool all_finite(const VectorXd& v) { return v.allFinite(); }

}  // namespace

// ---- PID ----

PidConfig PidConfig::uniform(int n, double kp, double ki, double kd, double dt) {
  PidConfig c;
  c.kp = VectorXd::Constant(n, kp);
  c.ki = VectorXd::Constant(n, ki);
  c.kd = VectorXd::Constant(n, kd);
  c.dt = dt;
  return c;
}

void PidConfig::validate(int n) const {
  if (kp.size() != n || ki.size() != n || kd.size() != n) throw std::invalid_argument("PID gain vectors must have n entries");
  if (!kp.allFinite() || !ki.allFinite() || !kd.allFinite()) throw std::invalid_argument("PID gains must be finite");
  if (!(dt > 0.0)) throw std::invalid_argument("PID dt must be positive");
  if (!(integral_clamp >= 0.0)) throw std::invalid_argument("PID integral clamp must be nonnegative");
}

ControlOutput pid_computed_torque(RbdBinding& rbd, const VectorXd& q, const VectorXd& qd, const JointRef& ref,
                                  const PidConfig& cfg, PidState& state) {
  const int n = rbd.size();
  require_size(q, n, "q");
  require_size(qd, n, "qd");
  require_size(ref.q, n, "reference q");
  require_size(ref.qd, n, "reference qd");
  require_size(ref.qdd, n, "reference qdd");
  if (state.integral.size() != n) state.integral = VectorXd::Zero(n);
  const VectorXd e = ref.q - q;
  const VectorXd de = ref.qd - qd;
  state.integral = (state.integral + cfg.dt * e).cwiseMax(-cfg.integral_clamp).cwiseMin(cfg.integral_clamp);
  const VectorXd qdd = ref.qdd + cfg.kp.cwiseProduct(e) + cfg.kd.cwiseProduct(de) + cfg.ki.cwiseProduct(state.integral);
  ControlOutput out;
  out.tau = clamp_torque(rbd.model(), rbd.rnea(q, qd, qdd));
  out.tracking_error = e.norm();
  return out;
}

// ---- LQR ----

LqrConfig LqrConfig::diagonal(int n, double q_weight, double qd_weight, double r_weight, double dt) {
  LqrConfig c;
  c.Q = MatrixXd::Zero(2 * n, 2 * n);
  c.Q.diagonal().head(n).setConstant(q_weight);
  c.Q.diagonal().tail(n).setConstant(qd_weight);
  c.R = MatrixXd::Identity(n, n) * r_weight;
  c.dt = dt;
  return c;
}

void LqrConfig::validate(int n) const {
  if (Q.rows() != 2 * n || Q.cols() != 2 * n) throw std::invalid_argument("LQR Q must be 2n x 2n");
  if (R.rows() != n || R.cols() != n) throw std::invalid_argument("LQR R must be n x n");
  if (!(dt > 0.0)) throw std::invalid_argument("LQR dt must be positive");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 || (R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument("LQR Q and R must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eq(Q), er(R);
  if (eq.eigenvalues().minCoeff() < -1e-12) throw std::invalid_argument("LQR Q must be positive semidefinite");
  if (er.eigenvalues().minCoeff() <= 0.0) throw std::invalid_argument("LQR R must be positive definite");
}

MatrixXd solve_dlqr(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R, int max_iterations,
                    double tolerance, MatrixXd* P_out, int* iterations) {
  MatrixXd P = Q;
  for (int it = 1; it <= max_iterations; ++it) {
    const MatrixXd BtP = B.transpose() * P;
    const MatrixXd K = (R + BtP * B).ldlt().solve(BtP * A);
    MatrixXd next = Q + A.transpose() * P * (A - B * K);
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite()) throw ControlError("Riccati iteration diverged");
    const double change = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (change <= tolerance * std::max(1.0, P.cwiseAbs().maxCoeff())) {
      if (P_out) *P_out = P;
      if (iterations) *iterations = it;
      const MatrixXd BtPf = B.transpose() * P;
      return (R + BtPf * B).ldlt().solve(BtPf * A);
    }
  }
  throw ControlError("Riccati iteration did not converge in " + std::to_string(max_iterations) + " iterations");
}

void linearize_euler(RbdBinding& rbd, const VectorXd& q0, const VectorXd& qd0, const VectorXd& tau0, double dt,
                     MatrixXd& A, MatrixXd& B) {
  const int n = rbd.size();
  const auto d = rbd.fd_derivatives(q0, qd0, tau0);
  A = MatrixXd::Identity(2 * n, 2 * n);
  A.topRightCorner(n, n) = dt * MatrixXd::Identity(n, n);
  A.bottomLeftCorner(n, n) = dt * d.dq;
  A.bottomRightCorner(n, n) += dt * d.dqd;
  B = MatrixXd::Zero(2 * n, n);
  B.bottomRows(n) = dt * d.minv;
}

LqrGain lqr_gain(RbdBinding& rbd, const VectorXd& q0, const VectorXd& qd0, const LqrConfig& cfg) {
  const int n = rbd.size();
  require_size(q0, n, "operating q");
  require_size(qd0, n, "operating qd");
  cfg.validate(n);
  LqrGain g;
  g.u0 = rbd.rnea(q0, qd0, VectorXd::Zero(n));
  g.x0.resize(2 * n);
  g.x0 << q0, qd0;
  linearize_euler(rbd, q0, qd0, g.u0, cfg.dt, g.A, g.B);
  g.K = solve_dlqr(g.A, g.B, cfg.Q, cfg.R, cfg.max_iterations, cfg.tolerance, &g.P, &g.iterations);
  const MatrixXd closed = g.A - g.B * g.K;
  g.spectral_radius = closed.eigenvalues().cwiseAbs().maxCoeff();
  return g;
}

ControlOutput lqr_control(const RobotModel& model, const LqrGain& gain, const VectorXd& q, const VectorXd& qd) {
  const int n = model.size();
  require_size(q, n, "q");
  require_size(qd, n, "qd");
  VectorXd x(2 * n);
  x << q, qd;
  const VectorXd dx = x - gain.x0;
  ControlOutput out;
  out.tau = clamp_torque(model, gain.u0 - gain.K * dx);
  out.tracking_error = dx.head(n).norm();
  out.cost = 0.5 * dx.dot(gain.P * dx);
  return out;
}

// ---- MPC ----

void MpcConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("MPC horizon must be at least 1");
  if (iterations < 1) throw std::invalid_argument("MPC iterations must be at least 1");
  if (!(dt > 0.0)) throw std::invalid_argument("MPC dt must be positive");
  if (converge_tol < 0.0) throw std::invalid_argument("MPC convergence tolerance must be nonnegative");
  if (q_weight < 0 || qd_weight < 0 || !(u_weight > 0) || terminal_scale < 0) {
    throw std::invalid_argument("MPC weights must be nonnegative (input weight positive)");
  }
}

namespace {

struct Trajectory {
  std::vector<VectorXd> x;  // horizon + 1
  std::vector<VectorXd> u;  // horizon
  double cost = 0.0;
  bool diverged = false;
};

struct Problem {
  RbdBinding& rbd;
  const MpcConfig& cfg;
  const std::vector<JointRef>& ref;
  const VectorXd& u_ref;
  int n;

  VectorXd target(int k) const {
    const JointRef& r = ref[static_cast<std::size_t>(std::min<int>(k, static_cast<int>(ref.size()) - 1))];
    VectorXd x(2 * n);
    x << r.q, r.qd;
    return x;
  }
  VectorXd weights(double scale) const {
    VectorXd w(2 * n);
    w.head(n).setConstant(cfg.q_weight * scale);
    w.tail(n).setConstant(cfg.qd_weight * scale);
    return w;
  }
  double stage_cost(int k, const VectorXd& x, const VectorXd& u) const {
    const VectorXd dx = x - target(k);
    const VectorXd du = u - u_ref;
    return 0.5 * dx.dot(weights(1.0).cwiseProduct(dx)) + 0.5 * cfg.u_weight * du.squaredNorm();
  }
  double terminal_cost(const VectorXd& x) const {
    const VectorXd dx = x - target(cfg.horizon - 1);
    return 0.5 * dx.dot(weights(cfg.terminal_scale).cwiseProduct(dx));
  }
  VectorXd step(const VectorXd& x, const VectorXd& u) const {
    const VectorXd qdd = rbd.forward_dynamics(x.head(n), x.tail(n), u);
    VectorXd next(2 * n);
    next.tail(n) = x.tail(n) + cfg.dt * qdd;
    next.head(n) = x.head(n) + cfg.dt * next.tail(n);
    return next;
  }
};

Trajectory rollout(const Problem& p, const VectorXd& x0, const Trajectory* nominal, const std::vector<VectorXd>* kff,
                   const std::vector<MatrixXd>* kfb, double alpha, const std::vector<VectorXd>* open_loop) {
  Trajectory t;
  const int N = p.cfg.horizon;
  t.x.reserve(static_cast<std::size_t>(N + 1));
  t.x.push_back(x0);
  for (int k = 0; k < N; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    VectorXd u;
    if (open_loop) {
      u = (*open_loop)[uk];
    } else {
      u = nominal->u[uk] + alpha * (*kff)[uk] + (*kfb)[uk] * (t.x.back() - nominal->x[uk]);
    }
    u = clamp_torque(p.rbd.model(), u);
    t.cost += p.stage_cost(k, t.x.back(), u);
    VectorXd next;
    try {
      next = p.step(t.x.back(), u);
    } catch (const KernelError&) {
      t.diverged = true;
      return t;
    }
    t.u.push_back(u);
    if (!all_finite(next) || next.cwiseAbs().maxCoeff() > p.cfg.divergence_bound) {
      t.diverged = true;
      return t;
    }
    t.x.push_back(next);
  }
  t.cost += p.terminal_cost(t.x.back());
  return t;
}

}  // namespace

MpcResult mpc_step(RbdBinding& rbd, const VectorXd& q, const VectorXd& qd, const std::vector<JointRef>& ref,
                   const VectorXd& u_ref, const MpcConfig& cfg, MpcState& state) {
  cfg.validate();
  const int n = rbd.size();
  require_size(q, n, "q");
  require_size(qd, n, "qd");
  require_size(u_ref, n, "u_ref");
  if (static_cast<int>(ref.size()) < cfg.horizon) throw std::invalid_argument("MPC reference is shorter than the horizon");
  const int N = cfg.horizon;
  const Problem p{rbd, cfg, ref, u_ref, n};

  std::vector<VectorXd> init(static_cast<std::size_t>(N), u_ref);
  if (static_cast<int>(state.warm_u.size()) == N) {
    for (int k = 0; k + 1 < N; ++k) init[static_cast<std::size_t>(k)] = state.warm_u[static_cast<std::size_t>(k + 1)];
    init.back() = state.warm_u.back();
  }
  VectorXd x0(2 * n);
  x0 << q, qd;
  Trajectory nom = rollout(p, x0, nullptr, nullptr, nullptr, 0.0, &init);
  if (nom.diverged) {
    throw ControlError("MPC initial rollout diverged at step " + std::to_string(nom.u.size()) +
                       " (state norm above " + std::to_string(cfg.divergence_bound) + ")");
  }

  MpcResult res;
  res.cost_history.push_back(nom.cost);
  double mu = cfg.reg_init;
  std::vector<VectorXd> kff(static_cast<std::size_t>(N));
  std::vector<MatrixXd> kfb(static_cast<std::size_t>(N), MatrixXd::Zero(n, 2 * n));
  std::vector<MatrixXd> As(static_cast<std::size_t>(N)), Bs(static_cast<std::size_t>(N));
  const double dt = cfg.dt;

  for (int it = 0; it < cfg.iterations; ++it) {
    for (int k = 0; k < N; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      const VectorXd& x = nom.x[uk];
      const auto d = rbd.fd_derivatives(x.head(n), x.tail(n), nom.u[uk]);
      MatrixXd& A = As[uk];
      MatrixXd& B = Bs[uk];
      A.resize(2 * n, 2 * n);
      A.bottomLeftCorner(n, n) = dt * d.dq;
      A.bottomRightCorner(n, n) = MatrixXd::Identity(n, n) + dt * d.dqd;
      A.topLeftCorner(n, n) = MatrixXd::Identity(n, n) + dt * A.bottomLeftCorner(n, n);
      A.topRightCorner(n, n) = dt * A.bottomRightCorner(n, n);
      B.resize(2 * n, n);
      B.bottomRows(n) = dt * d.minv;
      B.topRows(n) = dt * B.bottomRows(n);
    }
    bool solved = false;
    for (int attempt = 0; attempt < 8 && !solved; ++attempt) {
      const VectorXd wf = p.weights(cfg.terminal_scale);
      VectorXd Vx = wf.cwiseProduct(nom.x.back() - p.target(N - 1));
      MatrixXd Vxx = wf.asDiagonal();
      solved = true;
      for (int k = N - 1; k >= 0; --k) {
        const auto uk = static_cast<std::size_t>(k);
        const MatrixXd& A = As[uk];
        const MatrixXd& B = Bs[uk];
        const VectorXd w = p.weights(1.0);
        const VectorXd lx = w.cwiseProduct(nom.x[uk] - p.target(k));
        const VectorXd lu = cfg.u_weight * (nom.u[uk] - u_ref);
        const VectorXd Qx = lx + A.transpose() * Vx;
        const VectorXd Qu = lu + B.transpose() * Vx;
        const MatrixXd VxxA = Vxx * A;
        const MatrixXd Qxx = MatrixXd(w.asDiagonal()) + A.transpose() * VxxA;
        const MatrixXd Qux = B.transpose() * VxxA;
        MatrixXd Quu = B.transpose() * Vxx * B;
        Quu.diagonal().array() += cfg.u_weight + mu;
        Eigen::LLT<MatrixXd> llt(Quu);
        if (llt.info() != Eigen::Success) {
          solved = false;
          mu = std::max(mu * 10.0, cfg.reg_floor);
          break;
        }
        kff[uk] = -llt.solve(Qu);
        kfb[uk] = -llt.solve(Qux);
        Quu.diagonal().array() -= mu;
        Vx = Qx + kfb[uk].transpose() * Quu * kff[uk] + kfb[uk].transpose() * Qu + Qux.transpose() * kff[uk];
        Vxx = Qxx + kfb[uk].transpose() * Quu * kfb[uk] + kfb[uk].transpose() * Qux + Qux.transpose() * kfb[uk];
        Vxx = 0.5 * (Vxx + Vxx.transpose());
      }
    }
    if (!solved) break;

    bool accepted = false;
    double alpha = 1.0;
    for (int ls = 0; ls < cfg.line_search_steps; ++ls, alpha *= 0.5) {
      Trajectory cand = rollout(p, x0, &nom, &kff, &kfb, alpha, nullptr);
      if (!cand.diverged && cand.cost <= nom.cost) {
        nom = std::move(cand);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      mu = std::max(mu * 10.0, cfg.reg_floor);
      continue;
    }
    ++res.accepted;
    const double previous = res.cost_history.back();
    res.cost_history.push_back(nom.cost);
    mu = std::max(mu * 0.5, cfg.reg_floor);
    if (previous - nom.cost <= cfg.converge_tol * std::abs(previous)) break;
  }

  state.warm_u = nom.u;
  res.out.tau = nom.u.front();
  res.out.cost = nom.cost;
  res.out.tracking_error = (ref.front().q - q).norm();
  res.feedback = kfb.front();
  res.x_nominal = x0;
  res.x_next = nom.x[1];
  return res;
}

}  // namespace qrbd
