#include "qrbd/binding.hpp"

namespace qrbd {

namespace {

template <class A, class S = typename A::Scalar>
std::vector<S> to_scalars(A& ar, const Eigen::VectorXd& x, int n, const char* what) {
  if (x.size() != n) {
    throw std::invalid_argument(std::string(what) + " has " + std::to_string(x.size()) + " entries, model has " +
                                std::to_string(n) + " joints");
  }
  std::vector<S> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = ar.input(x(i));
  return out;
}

template <class A, class S = typename A::Scalar>
Eigen::VectorXd to_vector(A& ar, const std::vector<S>& x) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) out(static_cast<Eigen::Index>(i)) = ar.to_real(x[i]);
  return out;
}

template <class A, class S = typename A::Scalar>
Eigen::MatrixXd row_major(A& ar, const std::vector<S>& x, int n) {
  Eigen::MatrixXd out(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out(i, j) = ar.to_real(x[static_cast<std::size_t>(i * n + j)]);
  return out;
}

template <class A, class S = typename A::Scalar>
Eigen::MatrixXd col_major(A& ar, const std::vector<S>& x, int n) {
  Eigen::MatrixXd out(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) out(i, j) = ar.to_real(x[static_cast<std::size_t>(j * n + i)]);
  return out;
}

template <class A, class S = typename A::Scalar>
std::vector<Vec6<S>> to_forces(A& ar, const std::vector<SpatialVector>& f, int n) {
  if (static_cast<int>(f.size()) != n) throw std::invalid_argument("external force list does not match the model");
  std::vector<Vec6<S>> out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i)
    for (int c = 0; c < 6; ++c) out[i][static_cast<std::size_t>(c)] = ar.input(f[i](c));
  return out;
}

template <class A, class S = typename A::Scalar>
Eigen::VectorXd rnea_impl(A& ar, const KernelModel<A>& km, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                          const Eigen::VectorXd& qdd, const std::vector<SpatialVector>* fext, bool gravity) {
  const auto sq = to_scalars(ar, q, km.n, "q");
  const auto sqd = to_scalars(ar, qd, km.n, "qd");
  const auto sqdd = to_scalars(ar, qdd, km.n, "qdd");
  std::vector<Vec6<S>> f;
  if (fext) f = to_forces(ar, *fext, km.n);
  return to_vector(ar, rnea(ar, km, sq, sqd, sqdd, fext ? &f : nullptr, gravity));
}

}  // namespace

RbdBinding::RbdBinding(std::shared_ptr<const RobotModel> model, MinvMethod method)
    : model_(std::move(model)), method_(method) {
  if (!model_) throw std::invalid_argument("binding needs a robot model");
  kreal_ = make_kernel_model(real_, *model_);
}

RbdBinding RbdBinding::real(std::shared_ptr<const RobotModel> model, MinvMethod method) {
  return RbdBinding(std::move(model), method);
}

RbdBinding RbdBinding::fixed(std::shared_ptr<const RobotModel> model, FxpFormat fmt, Rounding rounding,
                             MinvMethod method) {
  RbdBinding b(std::move(model), method);
  b.fixed_.emplace(fmt, rounding);
  b.kfixed_ = make_kernel_model(*b.fixed_, *b.model_);
  b.fixed_->reset_saturations();
  return b;
}

std::optional<FxpFormat> RbdBinding::format() const {
  if (fixed_) return fixed_->format();
  return std::nullopt;
}

void RbdBinding::set_minv_offset(const Eigen::MatrixXd& offset) {
  if (offset.rows() != size() || offset.cols() != size()) {
    throw std::invalid_argument("compensation offset must be " + std::to_string(size()) + "x" + std::to_string(size()));
  }
  offset_ = offset;
}

Eigen::VectorXd RbdBinding::rnea(const Eigen::VectorXd& q, const Eigen::VectorXd& qd, const Eigen::VectorXd& qdd,
                                 const std::vector<SpatialVector>* fext, bool gravity) {
  if (fixed_) return rnea_impl(*fixed_, kfixed_, q, qd, qdd, fext, gravity);
  return rnea_impl(real_, kreal_, q, qd, qdd, fext, gravity);
}

Eigen::VectorXd RbdBinding::gravity_torque(const Eigen::VectorXd& q) {
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(size());
  return rnea(q, z, z);
}

Eigen::MatrixXd RbdBinding::mass_matrix(const Eigen::VectorXd& q) {
  if (fixed_) return row_major(*fixed_, qrbd::mass_matrix(*fixed_, kfixed_, to_scalars(*fixed_, q, size(), "q")), size());
  return row_major(real_, qrbd::mass_matrix(real_, kreal_, to_scalars(real_, q, size(), "q")), size());
}

template <class A>
Eigen::MatrixXd RbdBinding::minv_impl(A& ar, const KernelModel<A>& km, const Eigen::VectorXd& q) {
  auto m = qrbd::minv(ar, km, to_scalars(ar, q, km.n, "q"), method_);
  if (offset_) {
    for (int i = 0; i < km.n; ++i)
      for (int j = 0; j < km.n; ++j) {
        auto& x = m[static_cast<std::size_t>(i * km.n + j)];
        x = ar.add(x, ar.input((*offset_)(i, j)));
      }
  }
  return row_major(ar, m, km.n);
}

Eigen::MatrixXd RbdBinding::minv(const Eigen::VectorXd& q) {
  if (fixed_) return minv_impl(*fixed_, kfixed_, q);
  return minv_impl(real_, kreal_, q);
}

template <class A>
RbdBinding::FdJacobians RbdBinding::fd_impl(A& ar, const KernelModel<A>& km, const Eigen::VectorXd& q,
                                            const Eigen::VectorXd& qd, const Eigen::VectorXd& tau,
                                            bool with_derivatives) {
  using S = typename A::Scalar;
  const int n = km.n;
  const auto un = static_cast<std::size_t>(n);
  const auto sq = to_scalars(ar, q, n, "q");
  const auto sqd = to_scalars(ar, qd, n, "qd");
  const auto stau = to_scalars(ar, tau, n, "tau");
  const auto bias = qrbd::rnea(ar, km, sq, sqd, zeros(ar, n), nullptr, true);
  auto m = qrbd::minv(ar, km, sq, method_);
  if (offset_) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        auto& x = m[static_cast<std::size_t>(i * n + j)];
        x = ar.add(x, ar.input((*offset_)(i, j)));
      }
  }
  std::vector<S> rhs(un);
  for (std::size_t i = 0; i < un; ++i) rhs[i] = ar.sub(stau[i], bias[i]);
  const auto qdd = minv_apply(ar, m, rhs);
  FdJacobians out;
  out.qdd = to_vector(ar, qdd);
  out.minv = row_major(ar, m, n);
  if (!with_derivatives) return out;
  const auto id = qrbd::id_derivatives(ar, km, sq, sqd, qdd);
  std::vector<S> dq(un * un), dqd(un * un);
  for (std::size_t i = 0; i < un; ++i) {
    const std::span<const S> row(m.data() + i * un, un);
    for (std::size_t c = 0; c < un; ++c) {
      dq[c * un + i] = ar.neg(ar.dot(row, std::span<const S>(id.dq.data() + c * un, un)));
      dqd[c * un + i] = ar.neg(ar.dot(row, std::span<const S>(id.dqd.data() + c * un, un)));
    }
  }
  out.dq = col_major(ar, dq, n);
  out.dqd = col_major(ar, dqd, n);
  return out;
}

Eigen::VectorXd RbdBinding::forward_dynamics(const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                                             const Eigen::VectorXd& tau) {
  if (fixed_) return fd_impl(*fixed_, kfixed_, q, qd, tau, false).qdd;
  return fd_impl(real_, kreal_, q, qd, tau, false).qdd;
}

RbdBinding::FdJacobians RbdBinding::fd_derivatives(const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                                                   const Eigen::VectorXd& tau) {
  if (fixed_) return fd_impl(*fixed_, kfixed_, q, qd, tau, true);
  return fd_impl(real_, kreal_, q, qd, tau, true);
}

RbdBinding::IdJacobians RbdBinding::id_derivatives(const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                                                   const Eigen::VectorXd& qdd) {
  auto run = [&](auto& ar, const auto& km) {
    const auto d = qrbd::id_derivatives(ar, km, to_scalars(ar, q, km.n, "q"), to_scalars(ar, qd, km.n, "qd"),
                                        to_scalars(ar, qdd, km.n, "qdd"));
    return IdJacobians{col_major(ar, d.dq, km.n), col_major(ar, d.dqd, km.n)};
  };
  if (fixed_) return run(*fixed_, kfixed_);
  return run(real_, kreal_);
}

std::vector<SpatialVector> RbdBinding::link_velocities(const Eigen::VectorXd& q, const Eigen::VectorXd& qd) {
  auto run = [&](auto& ar, const auto& km) {
    using S = typename std::decay_t<decltype(ar)>::Scalar;
    RneaTrace<S> trace;
    qrbd::rnea(ar, km, to_scalars(ar, q, km.n, "q"), to_scalars(ar, qd, km.n, "qd"), zeros(ar, km.n), nullptr, true,
               &trace);
    std::vector<SpatialVector> out(trace.v.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      for (int c = 0; c < 6; ++c) out[i](c) = ar.to_real(trace.v[i][static_cast<std::size_t>(c)]);
    return out;
  };
  if (fixed_) return run(*fixed_, kfixed_);
  return run(real_, kreal_);
}

Eigen::VectorXd inverse_dynamics(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                                 const Eigen::VectorXd& qdd, const std::vector<SpatialVector>* fext) {
  RealArith ar;
  const auto km = make_kernel_model(ar, model);
  return rnea_impl(ar, km, q, qd, qdd, fext, true);
}

Eigen::MatrixXd mass_matrix(const RobotModel& model, const Eigen::VectorXd& q) {
  RealArith ar;
  const auto km = make_kernel_model(ar, model);
  return row_major(ar, mass_matrix(ar, km, to_scalars(ar, q, km.n, "q")), km.n);
}

Eigen::MatrixXd minv_original(const RobotModel& model, const Eigen::VectorXd& q) {
  RealArith ar;
  const auto km = make_kernel_model(ar, model);
  return row_major(ar, minv_original(ar, km, to_scalars(ar, q, km.n, "q")), km.n);
}

Eigen::MatrixXd minv_deferred(const RobotModel& model, const Eigen::VectorXd& q) {
  RealArith ar;
  const auto km = make_kernel_model(ar, model);
  return row_major(ar, minv_deferred(ar, km, to_scalars(ar, q, km.n, "q")), km.n);
}

Eigen::VectorXd forward_dynamics(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                                 const Eigen::VectorXd& tau, const std::vector<SpatialVector>* fext) {
  RealArith ar;
  const auto km = make_kernel_model(ar, model);
  std::vector<Vec6<double>> f;
  if (fext) f = to_forces(ar, *fext, km.n);
  const auto res = forward_dynamics(ar, km, to_scalars(ar, q, km.n, "q"), to_scalars(ar, qd, km.n, "qd"),
                                    to_scalars(ar, tau, km.n, "tau"), fext ? &f : nullptr);
  return to_vector(ar, res.qdd);
}

}  // namespace qrbd
