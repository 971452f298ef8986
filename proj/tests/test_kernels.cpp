#include <Eigen/Dense>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "qrbd/binding.hpp"
#include "qrbd/kernels.hpp"
#include "qrbd/verify.hpp"

using namespace qrbd;

namespace {

constexpr double kG = 9.81;

Eigen::VectorXd zeros(int n) { return Eigen::VectorXd::Zero(n); }

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("rnea statics") {
    auto iiwa = oracle::load("iiwa14.urdf");
    RobotModel nog = *iiwa;
    nog.set_gravity(Vector3::Zero());
    CHECK(inverse_dynamics(nog, zeros(7), zeros(7), zeros(7)).norm() == 0.0);

    const auto p = oracle::load("pendulum.urdf");
    for (double q : {0.0, 0.3, -1.2, 2.5}) {
      const Eigen::VectorXd qv = Eigen::VectorXd::Constant(1, q);
      CHECK(inverse_dynamics(*p, qv, zeros(1), zeros(1))(0) == doctest::Approx(kG * std::sin(q)).epsilon(1e-12));
    }
  }

  TEST_CASE("rnea matches the Lagrangian oracle") {
    std::mt19937_64 rng(21);
    for (const char* name : {"iiwa14.urdf", "hyq.urdf", "slider.urdf"}) {
      const auto m = oracle::load(name);
      double worst = 0.0;
      for (int t = 0; t < 20; ++t) {
        const auto s = oracle::random_state(*m, rng);
        const Eigen::VectorXd tau = inverse_dynamics(*m, s.q, s.qd, s.qdd);
        worst = std::max(worst, (tau - oracle::inverse_dynamics(*m, s)).cwiseAbs().maxCoeff());
        CHECK((mass_matrix(*m, s.q) - oracle::mass_matrix(*m, s.q)).cwiseAbs().maxCoeff() < 1e-12);
      }
      MESSAGE(std::string(name) << ": worst |tau - oracle| = " << worst);
      CHECK(worst < 1e-8);
    }
  }

  TEST_CASE("external forces enter as link-frame wrenches") {
    const auto p = oracle::load("pendulum.urdf");
    std::vector<SpatialVector> f(1, SpatialVector::Zero());
    f[0] << 0.1, -0.4, 0.7, 1.0, 2.0, -3.0;
    const Eigen::VectorXd q = Eigen::VectorXd::Constant(1, 0.3);
    const double with = inverse_dynamics(*p, q, zeros(1), zeros(1), &f)(0);
    CHECK(with - inverse_dynamics(*p, q, zeros(1), zeros(1))(0) == doctest::Approx(-0.7));

    const auto m = oracle::load("iiwa14.urdf");
    std::vector<SpatialVector> g(7, SpatialVector::Zero());
    g[3] << 0.5, 0.5, -1.0, 3.0, 1.0, 2.0;
    std::mt19937_64 rng(1);
    const auto s = oracle::random_state(*m, rng);
    const Eigen::VectorXd d = inverse_dynamics(*m, s.q, s.qd, s.qdd, &g) - inverse_dynamics(*m, s.q, s.qd, s.qdd);
    CHECK(d.tail(3).norm() == 0.0);
    CHECK(d(3) == doctest::Approx(1.0));
  }

  TEST_CASE("mass matrix and analytical inverse") {
    const auto p = oracle::load("pendulum.urdf");
    const Eigen::VectorXd q1 = Eigen::VectorXd::Constant(1, 0.4);
    CHECK(mass_matrix(*p, q1)(0, 0) == doctest::Approx(1.0));
    CHECK(minv_original(*p, q1)(0, 0) == doctest::Approx(1.0));
    CHECK(minv_deferred(*p, q1)(0, 0) == doctest::Approx(1.0));

    std::mt19937_64 rng(5);
    for (const char* name : {"iiwa14.urdf", "hyq.urdf", "atlas.urdf"}) {
      const auto m = oracle::load(name);
      const int n = m->size();
      double sym = 0.0, inv = 0.0, eq = 0.0, dense = 0.0, min_eig = 1e300;
      for (int t = 0; t < 100; ++t) {
        const auto s = oracle::random_state(*m, rng);
        const Eigen::MatrixXd mm = mass_matrix(*m, s.q);
        const Eigen::MatrixXd mi = minv_original(*m, s.q);
        const Eigen::MatrixXd md = minv_deferred(*m, s.q);
        sym = std::max({sym, (mm - mm.transpose()).cwiseAbs().maxCoeff(), (mi - mi.transpose()).cwiseAbs().maxCoeff()});
        inv = std::max(inv, (mi * mm - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff());
        eq = std::max(eq, (md - mi).cwiseAbs().maxCoeff());
        dense = std::max(dense, (mm.inverse() - mi).cwiseAbs().maxCoeff() / mi.cwiseAbs().maxCoeff());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e(mi);
        min_eig = std::min(min_eig, e.eigenvalues().minCoeff());
      }
      MESSAGE(std::string(name) << ": sym " << sym << " inv " << inv << " deferred " << eq);
      CHECK(sym < 1e-9);
      CHECK(inv < 1e-7);
      CHECK(eq < 1e-10);
      CHECK(dense < 1e-9);
      CHECK(min_eig > 0.0);
    }
  }

  TEST_CASE("division placement") {
    const auto m = oracle::load("iiwa14.urdf");
    CountingArith ar;
    const auto km = make_kernel_model(ar, *m);
    std::vector<CountingArith::Sym> qs(7, CountingArith::Sym::General);
    MinvWorkspace<CountingArith::Sym> ws;
    minv_deferred(ar, km, qs, &ws);
    CHECK(ar.total(Module::Minv, Pass::Backward).divisions == 0);
    CHECK(ar.total(Module::Minv, Pass::Divider).divisions == 7);
    CHECK(ar.total(Module::Minv).divisions == 7);
    CHECK(ws.backward_divisions == 0);
    ar.clear();
    minv_original(ar, km, qs, &ws);
    CHECK(ar.total(Module::Minv, Pass::Backward).divisions == 7);
    CHECK(ws.backward_divisions == 7);
    for (int i = 0; i < 7; ++i) CHECK(ar.counts().at({Module::Minv, Pass::Backward, i}).divisions == 1);
  }

  TEST_CASE("forward dynamics") {
    const auto p = oracle::load("pendulum.urdf");
    const Eigen::VectorXd q = Eigen::VectorXd::Constant(1, M_PI / 2);
    CHECK(forward_dynamics(*p, q, zeros(1), zeros(1))(0) == doctest::Approx(-kG));

    std::mt19937_64 rng(8);
    for (const char* name : {"iiwa14.urdf", "atlas.urdf"}) {
      const auto m = oracle::load(name);
      double round_trip = 0.0, dense = 0.0;
      for (int t = 0; t < 50; ++t) {
        const auto s = oracle::random_state(*m, rng);
        const Eigen::VectorXd tau = inverse_dynamics(*m, s.q, s.qd, s.qdd);
        const Eigen::VectorXd qdd = forward_dynamics(*m, s.q, s.qd, tau);
        round_trip = std::max(round_trip, (qdd - s.qdd).cwiseAbs().maxCoeff());
        const Eigen::VectorXd c = inverse_dynamics(*m, s.q, s.qd, zeros(m->size()));
        const Eigen::VectorXd solved = mass_matrix(*m, s.q).ldlt().solve(tau - c);
        dense = std::max(dense, (solved - qdd).cwiseAbs().maxCoeff());
      }
      CHECK(round_trip < 1e-8);
      CHECK(dense < 1e-8);
    }
  }

  TEST_CASE("inverse dynamics derivatives") {
    const auto p = oracle::load("pendulum.urdf");
    auto bp = RbdBinding::real(p);
    for (double q : {0.0, 0.7, -2.0}) {
      const Eigen::VectorXd qv = Eigen::VectorXd::Constant(1, q);
      const auto d = bp.id_derivatives(qv, zeros(1), zeros(1));
      CHECK(d.dq(0, 0) == doctest::Approx(kG * std::cos(q)));
      CHECK(d.dqd(0, 0) == 0.0);
    }

    const auto m = oracle::load("iiwa14.urdf");
    auto b = RbdBinding::real(m);
    std::mt19937_64 rng(13);
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
      const auto s = oracle::random_state(*m, rng);
      const auto d = b.id_derivatives(s.q, s.qd, s.qdd);
      const auto fq = oracle::fd_jacobian([&](const Eigen::VectorXd& x) { return inverse_dynamics(*m, x, s.qd, s.qdd); }, s.q);
      const auto fv = oracle::fd_jacobian([&](const Eigen::VectorXd& x) { return inverse_dynamics(*m, s.q, x, s.qdd); }, s.qd);
      worst = std::max({worst, oracle::rel_err(d.dq, fq), oracle::rel_err(d.dqd, fv)});
      const auto z = b.id_derivatives(s.q, zeros(7), s.qdd);
      CHECK(z.dqd.cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK(worst < 1e-5);
  }

  TEST_CASE("forward dynamics derivatives") {
    const auto p = oracle::load("pendulum.urdf");
    auto bp = RbdBinding::real(p);
    const Eigen::VectorXd q = Eigen::VectorXd::Constant(1, 0.5);
    const auto dp = bp.fd_derivatives(q, zeros(1), zeros(1));
    CHECK(dp.dq(0, 0) == doctest::Approx(-kG * std::cos(0.5)));

    const auto m = oracle::load("iiwa14.urdf");
    auto b = RbdBinding::real(m);
    std::mt19937_64 rng(17);
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
      const auto s = oracle::random_state(*m, rng);
      const Eigen::VectorXd tau = inverse_dynamics(*m, s.q, s.qd, s.qdd);
      const auto d = b.fd_derivatives(s.q, s.qd, tau);
      const auto fq = oracle::fd_jacobian([&](const Eigen::VectorXd& x) { return forward_dynamics(*m, x, s.qd, tau); }, s.q);
      const auto fv = oracle::fd_jacobian([&](const Eigen::VectorXd& x) { return forward_dynamics(*m, s.q, x, tau); }, s.qd);
      const auto ft = oracle::fd_jacobian([&](const Eigen::VectorXd& x) { return forward_dynamics(*m, s.q, s.qd, x); }, tau);
      worst = std::max({worst, oracle::rel_err(d.dq, fq), oracle::rel_err(d.dqd, fv)});
      CHECK((d.minv - minv_original(*m, s.q)).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(oracle::rel_err(d.minv, ft) < 1e-5);
    }
    CHECK(worst < 1e-5);
  }

  TEST_CASE("fixed-point kernels stay close to double and the two inverses agree") {
    const auto m = oracle::load("iiwa14.urdf");
    auto real = RbdBinding::real(m);
    auto fx = RbdBinding::fixed(m, FxpFormat{12, 16}, Rounding::PerChain, MinvMethod::Original);
    auto fd = RbdBinding::fixed(m, FxpFormat{12, 16}, Rounding::PerChain, MinvMethod::Deferred);
    std::mt19937_64 rng(3);
    double err_tau = 0.0, err_orig = 0.0, err_def = 0.0;
    for (int t = 0; t < 50; ++t) {
      const auto s = oracle::random_state(*m, rng);
      err_tau = std::max(err_tau, (fx.rnea(s.q, s.qd, s.qdd) - real.rnea(s.q, s.qd, s.qdd)).cwiseAbs().maxCoeff());
      const Eigen::MatrixXd mr = real.minv(s.q);
      const double scale = mr.cwiseAbs().maxCoeff();
      err_orig = std::max(err_orig, (fx.minv(s.q) - mr).cwiseAbs().maxCoeff() / scale);
      err_def = std::max(err_def, (fd.minv(s.q) - mr).cwiseAbs().maxCoeff() / scale);
    }
    MESSAGE("Q12.16 max errors: tau " << err_tau << ", relative minv original " << err_orig << ", deferred " << err_def);
    CHECK(err_tau < 0.01);
    // Quantizing the small distal inertias dominates; both inverses see the same input error.
    CHECK(err_orig < 0.02);
    CHECK(err_def < 0.02);
    CHECK(err_def < 1.5 * err_orig);
    CHECK(fx.saturations() == 0);
  }

  TEST_CASE("property suite on the tree robots") {
    VerifyConfig vc;
    vc.samples = 200;
    vc.gradient_samples = 100;
    for (const char* name : {"iiwa14.urdf", "hyq.urdf", "atlas.urdf"}) {
      const auto r = run_verification(*oracle::load(name), vc);
      INFO(std::string(name));
      for (const auto& c : r.checks) {
        INFO(c.name << " " << c.value);
        CHECK(c.pass);
      }
    }
  }
}
