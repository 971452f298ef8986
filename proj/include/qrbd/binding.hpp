#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <vector>

#include "qrbd/arith.hpp"
#include "qrbd/kernels.hpp"
#include "qrbd/robot_model.hpp"

namespace qrbd {

/// Runtime choice of arithmetic for the dynamics used by a controller:
/// double precision, or fixed point at a given format. Inputs are quantized on
/// entry and results converted back to double on exit.
///
/// Not thread-safe (the fixed-point binding counts saturations); copy per thread.
class RbdBinding {
 public:
  static RbdBinding real(std::shared_ptr<const RobotModel> model, MinvMethod method = MinvMethod::Deferred);
  static RbdBinding fixed(std::shared_ptr<const RobotModel> model, FxpFormat fmt,
                          Rounding rounding = Rounding::PerChain, MinvMethod method = MinvMethod::Deferred);

  bool quantized() const { return fixed_.has_value(); }
  std::optional<FxpFormat> format() const;
  const RobotModel& model() const { return *model_; }
  std::shared_ptr<const RobotModel> model_ptr() const { return model_; }
  int size() const { return model_->size(); }
  MinvMethod minv_method() const { return method_; }

  /// Offset added to every M^-1 this binding produces (compensation).
  void set_minv_offset(const Eigen::MatrixXd& offset);
  void clear_minv_offset() { offset_.reset(); }
  const std::optional<Eigen::MatrixXd>& minv_offset() const { return offset_; }

  Eigen::VectorXd rnea(const Eigen::VectorXd& q, const Eigen::VectorXd& qd, const Eigen::VectorXd& qdd,
                       const std::vector<SpatialVector>* fext = nullptr, bool gravity = true);
  Eigen::VectorXd gravity_torque(const Eigen::VectorXd& q);
  Eigen::MatrixXd mass_matrix(const Eigen::VectorXd& q);
  Eigen::MatrixXd minv(const Eigen::VectorXd& q);
  Eigen::VectorXd forward_dynamics(const Eigen::VectorXd& q, const Eigen::VectorXd& qd, const Eigen::VectorXd& tau);

  struct IdJacobians {
    Eigen::MatrixXd dq;
    Eigen::MatrixXd dqd;
  };
  IdJacobians id_derivatives(const Eigen::VectorXd& q, const Eigen::VectorXd& qd, const Eigen::VectorXd& qdd);

  struct FdJacobians {
    Eigen::VectorXd qdd;
    Eigen::MatrixXd minv;  ///< d qdd / d tau
    Eigen::MatrixXd dq;
    Eigen::MatrixXd dqd;
  };
  FdJacobians fd_derivatives(const Eigen::VectorXd& q, const Eigen::VectorXd& qd, const Eigen::VectorXd& tau);

  /// Link spatial velocities from the RNEA forward pass (link coordinates).
  std::vector<SpatialVector> link_velocities(const Eigen::VectorXd& q, const Eigen::VectorXd& qd);

  std::uint64_t saturations() const { return fixed_ ? fixed_->saturations() : 0; }

 private:
  RbdBinding(std::shared_ptr<const RobotModel> model, MinvMethod method);

  template <class A>
  Eigen::MatrixXd minv_impl(A& ar, const KernelModel<A>& km, const Eigen::VectorXd& q);
  template <class A>
  FdJacobians fd_impl(A& ar, const KernelModel<A>& km, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                      const Eigen::VectorXd& tau, bool with_derivatives);

  std::shared_ptr<const RobotModel> model_;
  MinvMethod method_;
  RealArith real_;
  KernelModel<RealArith> kreal_;
  std::optional<FixedArith> fixed_;
  KernelModel<FixedArith> kfixed_;
  std::optional<Eigen::MatrixXd> offset_;
};

// Double-precision conveniences over a model.
Eigen::VectorXd inverse_dynamics(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                                 const Eigen::VectorXd& qdd, const std::vector<SpatialVector>* fext = nullptr);
Eigen::MatrixXd mass_matrix(const RobotModel& model, const Eigen::VectorXd& q);
Eigen::MatrixXd minv_original(const RobotModel& model, const Eigen::VectorXd& q);
Eigen::MatrixXd minv_deferred(const RobotModel& model, const Eigen::VectorXd& q);
Eigen::VectorXd forward_dynamics(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                                 const Eigen::VectorXd& tau, const std::vector<SpatialVector>* fext = nullptr);

}  // namespace qrbd
