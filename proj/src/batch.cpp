#include "qrbd/batch.hpp"

#include <omp.h>

#include <stdexcept>
#include <string>

namespace qrbd {

int max_threads() { return omp_get_max_threads(); }

void StateBatch::validate(int n) const {
  if (qd.size() != q.size() || u.size() != q.size()) throw std::invalid_argument("batch arrays differ in length");
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i].size() != n || qd[i].size() != n || u[i].size() != n) {
      throw std::invalid_argument("batch state " + std::to_string(i) + " does not match the model dimension");
    }
  }
}

namespace {

template <class F>
BatchResult run(const RbdBinding& proto, std::size_t n, Execution exec, F&& eval) {
  BatchResult r;
  r.out.resize(n);
  std::vector<std::uint64_t> sats(n, 0);
  for_each_index(n, exec, [&](std::size_t i) {
    RbdBinding b = proto;
    const std::uint64_t before = b.saturations();
    r.out[i] = eval(b, i);
    sats[i] = b.saturations() - before;
  });
  for (auto s : sats) r.saturations += s;
  return r;
}

}  // namespace

BatchResult batch_inverse_dynamics(const RbdBinding& binding, const StateBatch& s, Execution exec) {
  s.validate(binding.size());
  return run(binding, s.size(), exec, [&](RbdBinding& b, std::size_t i) -> Eigen::MatrixXd {
    return b.rnea(s.q[i], s.qd[i], s.u[i]);
  });
}

BatchResult batch_forward_dynamics(const RbdBinding& binding, const StateBatch& s, Execution exec) {
  s.validate(binding.size());
  return run(binding, s.size(), exec, [&](RbdBinding& b, std::size_t i) -> Eigen::MatrixXd {
    return b.forward_dynamics(s.q[i], s.qd[i], s.u[i]);
  });
}

BatchResult batch_minv(const RbdBinding& binding, const std::vector<Eigen::VectorXd>& q, Execution exec) {
  for (const auto& x : q) {
    if (x.size() != binding.size()) throw std::invalid_argument("batch configuration does not match the model");
  }
  return run(binding, q.size(), exec, [&](RbdBinding& b, std::size_t i) -> Eigen::MatrixXd { return b.minv(q[i]); });
}

}  // namespace qrbd
