#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "qrbd/batch.hpp"

using namespace qrbd;

namespace {

StateBatch make_batch(const RobotModel& m, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  StateBatch b;
  for (int i = 0; i < count; ++i) {
    const auto s = oracle::random_state(m, rng);
    b.q.push_back(s.q);
    b.qd.push_back(s.qd);
    b.u.push_back(s.qdd);
  }
  return b;
}

bool identical(const BatchResult& a, const BatchResult& b) {
  if (a.out.size() != b.out.size() || a.saturations != b.saturations) return false;
  for (std::size_t i = 0; i < a.out.size(); ++i) {
    if (a.out[i] != b.out[i]) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("batch") {
  TEST_CASE("serial and parallel batches are bitwise identical") {
    const auto m = oracle::load("iiwa14.urdf");
    const auto states = make_batch(*m, 64, 9);
    for (const auto& binding :
         {RbdBinding::real(m), RbdBinding::fixed(m, FxpFormat{12, 12}), RbdBinding::fixed(m, FxpFormat{16, 16})}) {
      const auto id_s = batch_inverse_dynamics(binding, states, Execution::Serial);
      const auto id_p = batch_inverse_dynamics(binding, states, Execution::Parallel);
      CHECK(identical(id_s, id_p));
      const auto fd_s = batch_forward_dynamics(binding, states, Execution::Serial);
      const auto fd_p = batch_forward_dynamics(binding, states, Execution::Parallel);
      CHECK(identical(fd_s, fd_p));
      const auto mi_s = batch_minv(binding, states.q, Execution::Serial);
      const auto mi_p = batch_minv(binding, states.q, Execution::Parallel);
      CHECK(identical(mi_s, mi_p));
    }
    const auto narrow = batch_inverse_dynamics(RbdBinding::fixed(m, FxpFormat{6, 8}), states, Execution::Parallel);
    CHECK(narrow.saturations > 0);
    CHECK(identical(narrow, batch_inverse_dynamics(RbdBinding::fixed(m, FxpFormat{6, 8}), states, Execution::Serial)));
    const auto wide = batch_inverse_dynamics(RbdBinding::fixed(m, FxpFormat{16, 16}), states, Execution::Parallel);
    CHECK(wide.saturations == 0);
  }

  TEST_CASE("batch results agree with single calls and the oracle") {
    const auto m = oracle::load("hyq.urdf");
    const auto states = make_batch(*m, 16, 4);
    const auto id = batch_inverse_dynamics(RbdBinding::real(m), states, Execution::Parallel);
    const auto fd = batch_forward_dynamics(RbdBinding::real(m), states, Execution::Parallel);
    for (std::size_t i = 0; i < states.size(); ++i) {
      const Eigen::VectorXd ref = oracle::inverse_dynamics(*m, oracle::State{states.q[i], states.qd[i], states.u[i]});
      CHECK(oracle::rel_err(id.out[i], ref) < 1e-9);
      auto b = RbdBinding::real(m);
      CHECK(fd.out[i] == b.forward_dynamics(states.q[i], states.qd[i], states.u[i]));
    }
  }

  TEST_CASE("batch input validation") {
    const auto m = oracle::load("iiwa14.urdf");
    auto states = make_batch(*m, 4, 1);
    states.u.pop_back();
    CHECK_THROWS_AS(batch_inverse_dynamics(RbdBinding::real(m), states, Execution::Serial), std::invalid_argument);
    states = make_batch(*m, 4, 1);
    states.q[2] = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(batch_forward_dynamics(RbdBinding::real(m), states, Execution::Parallel), std::invalid_argument);
    CHECK_THROWS_AS(batch_minv(RbdBinding::real(m), states.q, Execution::Serial), std::invalid_argument);
    CHECK(batch_minv(RbdBinding::real(m), {}, Execution::Parallel).out.empty());
    CHECK(max_threads() >= 1);
  }
}
