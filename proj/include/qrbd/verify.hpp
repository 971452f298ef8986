#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qrbd/robot_model.hpp"

namespace qrbd {

struct VerifyConfig {
  int samples = 1000;
  int gradient_samples = 100;
  std::uint64_t seed = 1;
  double fd_step = 1e-3;
  double roundtrip_tol = 1e-7;
  double symmetry_tol = 1e-9;
  double identity_tol = 1e-7;
  double equivalence_tol = 1e-10;
  double gradient_tol = 1e-5;

  void validate() const;
};

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;  ///< worst residual, or a count
  double threshold = 0.0;
  std::string detail;
};

struct VerifyReport {
  std::string robot;
  std::vector<CheckResult> checks;
  double seconds = 0.0;  ///< not serialized
  bool all_pass() const;
  const CheckResult& at(const std::string& name) const;
};

/// Kernel property suite on double-precision kernels:
/// id_fd_roundtrip, mass_symmetry, minv_identity, minv_equivalence,
/// deferred_divisions, id_gradients, fd_gradients.
VerifyReport run_verification(const RobotModel& model, const VerifyConfig& cfg);

/// Elementwise max |a - b| / max(1, |b|).
double max_relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

std::string verify_json(const VerifyReport& r);

}  // namespace qrbd
