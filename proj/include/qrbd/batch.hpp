#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

#include "qrbd/binding.hpp"

namespace qrbd {

enum class Execution { Serial, Parallel };

/// Runs f(i) for i in [0, n). Parallel execution uses OpenMP with a static
/// schedule; callers write results by index so output order never depends on
/// the thread count.
template <class F>
void for_each_index(std::size_t n, Execution exec, F&& f) {
  const auto count = static_cast<long long>(n);
  if (exec == Execution::Serial) {
    for (long long i = 0; i < count; ++i) f(static_cast<std::size_t>(i));
    return;
  }
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < count; ++i) f(static_cast<std::size_t>(i));
}

int max_threads();

struct StateBatch {
  std::vector<Eigen::VectorXd> q;
  std::vector<Eigen::VectorXd> qd;
  std::vector<Eigen::VectorXd> u;  ///< qdd for inverse dynamics, tau for forward dynamics
  std::size_t size() const { return q.size(); }
  void validate(int n) const;
};

struct BatchResult {
  std::vector<Eigen::MatrixXd> out;  ///< one column vector or matrix per state
  std::uint64_t saturations = 0;
};

BatchResult batch_inverse_dynamics(const RbdBinding& binding, const StateBatch& states, Execution exec);
BatchResult batch_forward_dynamics(const RbdBinding& binding, const StateBatch& states, Execution exec);
BatchResult batch_minv(const RbdBinding& binding, const std::vector<Eigen::VectorXd>& q, Execution exec);

}  // namespace qrbd
