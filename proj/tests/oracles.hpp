#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls the recursive kernels: kinematics are rebuilt with Eigen
// homogeneous transforms and dynamics come from the Lagrangian form
// tau = M(q) qdd + C(q, qd) qd + g(q).

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "qrbd/robot_model.hpp"

namespace oracle {

inline std::string robot_path(const std::string& name) { return std::string(QRBD_SOURCE_DIR) + "/robots/" + name; }

inline std::shared_ptr<const qrbd::RobotModel> load(const std::string& name) {
  return std::make_shared<const qrbd::RobotModel>(qrbd::load_urdf(robot_path(name)));
}

struct State {
  Eigen::VectorXd q, qd, qdd;
};

inline State random_state(const qrbd::RobotModel& m, std::mt19937_64& rng, double qdd_scale = 5.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  State s;
  const int n = m.size();
  s.q.resize(n);
  s.qd.resize(n);
  s.qdd.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& j = m.link(i).joint;
    const double mid = 0.5 * (j.lower + j.upper), half = 0.5 * (j.upper - j.lower);
    s.q(i) = mid + half * u(rng);
    s.qd(i) = (j.velocity_limit > 0 ? j.velocity_limit : 2.0) * u(rng);
    s.qdd(i) = qdd_scale * u(rng);
  }
  return s;
}

/// World transforms of each link frame, built from placement and joint data.
inline std::vector<Eigen::Isometry3d> world_frames(const qrbd::RobotModel& m, const Eigen::VectorXd& q) {
  std::vector<Eigen::Isometry3d> t(static_cast<std::size_t>(m.size()));
  for (int i = 0; i < m.size(); ++i) {
    const auto& j = m.link(i).joint;
    Eigen::Isometry3d place = Eigen::Isometry3d::Identity();
    place.linear() = j.placement.rotation.transpose();
    place.translation() = j.placement.translation;
    Eigen::Isometry3d motion = Eigen::Isometry3d::Identity();
    if (j.kind == qrbd::JointKind::Revolute) {
      motion.linear() = Eigen::AngleAxisd(q(i), Eigen::Vector3d::UnitZ()).toRotationMatrix();
    } else {
      motion.translation() = Eigen::Vector3d(0, 0, q(i));
    }
    const int p = m.parent(i);
    const Eigen::Isometry3d base = p < 0 ? Eigen::Isometry3d::Identity() : t[static_cast<std::size_t>(p)];
    t[static_cast<std::size_t>(i)] = base * place * motion;
  }
  return t;
}

struct Jacobians {
  Eigen::MatrixXd linear;   // 3 x n, of the COM
  Eigen::MatrixXd angular;  // 3 x n
};

inline std::vector<Jacobians> com_jacobians(const qrbd::RobotModel& m, const Eigen::VectorXd& q) {
  const int n = m.size();
  const auto t = world_frames(m, q);
  std::vector<Jacobians> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& ti = t[static_cast<std::size_t>(i)];
    const Eigen::Vector3d c = ti * m.link(i).com;
    Jacobians jac{Eigen::MatrixXd::Zero(3, n), Eigen::MatrixXd::Zero(3, n)};
    for (int j = i; j >= 0; j = m.parent(j)) {
      const auto& tj = t[static_cast<std::size_t>(j)];
      const Eigen::Vector3d z = tj.linear().col(2);
      if (m.link(j).joint.kind == qrbd::JointKind::Revolute) {
        jac.linear.col(j) = z.cross(c - tj.translation());
        jac.angular.col(j) = z;
      } else {
        jac.linear.col(j) = z;
      }
    }
    out[static_cast<std::size_t>(i)] = jac;
  }
  return out;
}

inline Eigen::MatrixXd mass_matrix(const qrbd::RobotModel& m, const Eigen::VectorXd& q) {
  const int n = m.size();
  const auto t = world_frames(m, q);
  const auto jac = com_jacobians(m, q);
  Eigen::MatrixXd mm = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const auto& l = m.link(i);
    const Eigen::Matrix3d r = t[static_cast<std::size_t>(i)].linear();
    const Eigen::Matrix3d iw = r * l.inertia_com * r.transpose();
    const auto& j = jac[static_cast<std::size_t>(i)];
    mm += l.mass * j.linear.transpose() * j.linear + j.angular.transpose() * iw * j.angular;
  }
  return mm;
}

inline Eigen::VectorXd gravity(const qrbd::RobotModel& m, const Eigen::VectorXd& q) {
  const auto jac = com_jacobians(m, q);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m.size());
  for (int i = 0; i < m.size(); ++i) g -= m.link(i).mass * jac[static_cast<std::size_t>(i)].linear.transpose() * m.gravity();
  return g;
}

/// C(q, qd) qd from Christoffel symbols of central-differenced M.
inline Eigen::VectorXd coriolis(const qrbd::RobotModel& m, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                                double h = 1e-5) {
  const int n = m.size();
  std::vector<Eigen::MatrixXd> dm(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd qp = q, qm = q;
    qp(k) += h;
    qm(k) -= h;
    dm[static_cast<std::size_t>(k)] = (mass_matrix(m, qp) - mass_matrix(m, qm)) / (2 * h);
  }
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const double gamma = 0.5 * (dm[static_cast<std::size_t>(k)](i, j) + dm[static_cast<std::size_t>(j)](i, k) -
                                    dm[static_cast<std::size_t>(i)](j, k));
        c(i) += gamma * qd(j) * qd(k);
      }
  return c;
}

inline Eigen::VectorXd inverse_dynamics(const qrbd::RobotModel& m, const State& s) {
  return mass_matrix(m, s.q) * s.qdd + coriolis(m, s.q, s.qd) + gravity(m, s.q);
}

/// max|a - b| / max(max|b|, 1).
inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), 1.0);
}

/// Central-difference Jacobian of f at x.
inline Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd jac(f0.size(), x.size());
  for (int k = 0; k < x.size(); ++k) {
    Eigen::VectorXd xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    jac.col(k) = (f(xp) - f(xm)) / (2 * h);
  }
  return jac;
}

/// Textbook discrete LQR by value iteration on dense matrices.
inline Eigen::MatrixXd dlqr(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& q,
                            const Eigen::MatrixXd& r) {
  Eigen::MatrixXd p = q;
  for (int it = 0; it < 100000; ++it) {
    const Eigen::MatrixXd k = (r + b.transpose() * p * b).ldlt().solve(b.transpose() * p * a);
    const Eigen::MatrixXd next = q + a.transpose() * p * (a - b * k);
    if ((next - p).cwiseAbs().maxCoeff() < 1e-14 * std::max(1.0, p.cwiseAbs().maxCoeff())) {
      p = next;
      break;
    }
    p = next;
  }
  return (r + b.transpose() * p * b).ldlt().solve(b.transpose() * p * a);
}

}  // namespace oracle
