#include "qrbd/verify.hpp"

#include <chrono>
#include <memory>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "qrbd/binding.hpp"
#include "qrbd/hw_model.hpp"
#include "qrbd/icms.hpp"

namespace qrbd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void VerifyConfig::validate() const {
  if (samples < 1) throw std::invalid_argument("verify samples must be at least 1");
  if (gradient_samples < 1) throw std::invalid_argument("verify gradient_samples must be at least 1");
  if (!(fd_step > 0.0)) throw std::invalid_argument("verify fd_step must be positive");
}

bool VerifyReport::all_pass() const {
  for (const auto& c : checks) {
    if (!c.pass) return false;
  }
  return true;
}

const CheckResult& VerifyReport::at(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return c;
  }
  throw std::out_of_range("no check named " + name);
}

double max_relative_error(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("shape mismatch");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a(i) - b(i)) / std::max(1.0, std::abs(b(i))));
  }
  return worst;
}

namespace {

// Fourth-order central difference of k -> f(x + k e) at k = 0.
template <class F>
VectorXd stencil(F f, double h) {
  return (8.0 * (f(1.0) - f(-1.0)) - (f(2.0) - f(-2.0))) / (12.0 * h);
}

}  // namespace

VerifyReport run_verification(const RobotModel& model, const VerifyConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const int n = model.size();
  VerifyReport rep;
  rep.robot = model.name();

  std::mt19937_64 rng(cfg.seed + 17);
  std::uniform_real_distribution<double> acc(-2.0, 2.0);
  const auto states = sample_random_states(model, cfg.samples, cfg.seed);

  double roundtrip = 0.0, symmetry = 0.0, identity = 0.0, equivalence = 0.0;
  for (const auto& s : states) {
    VectorXd qdd(n);
    for (int i = 0; i < n; ++i) qdd(i) = acc(rng);
    const VectorXd tau = inverse_dynamics(model, s.q, s.qd, qdd);
    roundtrip = std::max(roundtrip, (forward_dynamics(model, s.q, s.qd, tau) - qdd).cwiseAbs().maxCoeff());
    const MatrixXd m = mass_matrix(model, s.q);
    symmetry = std::max(symmetry, (m - m.transpose()).cwiseAbs().maxCoeff());
    const MatrixXd mo = minv_original(model, s.q);
    identity = std::max(identity, (mo * m - MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff());
    equivalence = std::max(equivalence, (minv_deferred(model, s.q) - mo).cwiseAbs().maxCoeff());
  }
  rep.checks.push_back({"id_fd_roundtrip", roundtrip <= cfg.roundtrip_tol, roundtrip, cfg.roundtrip_tol, {}});
  rep.checks.push_back({"mass_symmetry", symmetry <= cfg.symmetry_tol, symmetry, cfg.symmetry_tol, {}});
  rep.checks.push_back({"minv_identity", identity <= cfg.identity_tol, identity, cfg.identity_tol, {}});
  rep.checks.push_back({"minv_equivalence", equivalence <= cfg.equivalence_tol, equivalence, cfg.equivalence_tol, {}});

  std::int64_t backward = 0, total = 0;
  for (const auto& u : count_macs(model, RbdFunction::Minv, MinvMethod::Deferred)) {
    if (u.module != Module::Minv) continue;
    total += u.divisions;
    if (u.pass == Pass::Backward) backward += u.divisions;
  }
  rep.checks.push_back({"deferred_divisions", backward == 0 && total == n, static_cast<double>(backward), 0.0,
                        "backward divisions " + std::to_string(backward) + ", reciprocals " + std::to_string(total) +
                            " of " + std::to_string(n)});

  auto shared = std::make_shared<const RobotModel>(model);
  RbdBinding rbd = RbdBinding::real(shared);
  const double h = cfg.fd_step;
  double id_err = 0.0, fd_err = 0.0;
  const auto gstates = sample_random_states(model, cfg.gradient_samples, cfg.seed + 1);
  for (const auto& s : gstates) {
    VectorXd qdd(n);
    for (int i = 0; i < n; ++i) qdd(i) = acc(rng);
    const VectorXd tau = inverse_dynamics(model, s.q, s.qd, qdd);
    const auto id = rbd.id_derivatives(s.q, s.qd, qdd);
    const auto fd = rbd.fd_derivatives(s.q, s.qd, tau);
    MatrixXd nid_q(n, n), nid_qd(n, n), nfd_q(n, n), nfd_qd(n, n);
    for (int j = 0; j < n; ++j) {
      VectorXd e = VectorXd::Zero(n);
      e(j) = h;
      nid_q.col(j) = stencil([&](double k) { return inverse_dynamics(model, s.q + k * e, s.qd, qdd); }, h);
      nid_qd.col(j) = stencil([&](double k) { return inverse_dynamics(model, s.q, s.qd + k * e, qdd); }, h);
      nfd_q.col(j) = stencil([&](double k) { return forward_dynamics(model, s.q + k * e, s.qd, tau); }, h);
      nfd_qd.col(j) = stencil([&](double k) { return forward_dynamics(model, s.q, s.qd + k * e, tau); }, h);
    }
    id_err = std::max({id_err, max_relative_error(id.dq, nid_q), max_relative_error(id.dqd, nid_qd)});
    fd_err = std::max({fd_err, max_relative_error(fd.dq, nfd_q), max_relative_error(fd.dqd, nfd_qd)});
  }
  rep.checks.push_back({"id_gradients", id_err <= cfg.gradient_tol, id_err, cfg.gradient_tol, {}});
  rep.checks.push_back({"fd_gradients", fd_err <= cfg.gradient_tol, fd_err, cfg.gradient_tol, {}});
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

std::string verify_json(const VerifyReport& r) {
  nlohmann::json j;
  j["robot"] = r.robot;
  j["all_pass"] = r.all_pass();
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : r.checks) {
    nlohmann::json cj{{"name", c.name}, {"pass", c.pass}, {"value", c.value}, {"threshold", c.threshold}};
    if (!c.detail.empty()) cj["detail"] = c.detail;
    checks.push_back(cj);
  }
  j["checks"] = checks;
  return j.dump(2);
}

}  // namespace qrbd
