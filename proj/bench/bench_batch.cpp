#include <benchmark/benchmark.h>

#include <random>

#include "qrbd/batch.hpp"
#include "qrbd/icms.hpp"

using namespace qrbd;

namespace {

std::shared_ptr<const RobotModel> robot(const std::string& name) {
  return std::make_shared<const RobotModel>(load_urdf(std::string(QRBD_SOURCE_DIR) + "/robots/" + name));
}

StateBatch batch(const RobotModel& m, int count) {
  StateBatch b;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (const auto& s : sample_random_states(m, count, 1)) {
    b.q.push_back(s.q);
    b.qd.push_back(s.qd);
    Eigen::VectorXd x(m.size());
    for (int i = 0; i < m.size(); ++i) x(i) = u(rng);
    b.u.push_back(x);
  }
  return b;
}

template <class Fn>
void run(benchmark::State& st, const char* name, bool fixed, Fn fn) {
  const auto m = robot(name);
  const auto b = batch(*m, static_cast<int>(st.range(0)));
  const auto binding = fixed ? RbdBinding::fixed(m, FxpFormat{12, 12}) : RbdBinding::real(m);
  const Execution exec = st.range(1) ? Execution::Parallel : Execution::Serial;
  for (auto _ : st) benchmark::DoNotOptimize(fn(binding, b, exec));
  st.SetItemsProcessed(st.iterations() * st.range(0));
  st.SetLabel(exec == Execution::Parallel ? "omp x" + std::to_string(max_threads()) : "serial");
}

void BM_IdIiwa(benchmark::State& st) { run(st, "iiwa14.urdf", false, batch_inverse_dynamics); }
void BM_FdIiwa(benchmark::State& st) { run(st, "iiwa14.urdf", false, batch_forward_dynamics); }
void BM_FdIiwaFixed(benchmark::State& st) { run(st, "iiwa14.urdf", true, batch_forward_dynamics); }
void BM_FdAtlas(benchmark::State& st) { run(st, "atlas.urdf", false, batch_forward_dynamics); }
void BM_MinvAtlas(benchmark::State& st) {
  run(st, "atlas.urdf", false,
      [](const RbdBinding& b, const StateBatch& s, Execution e) { return batch_minv(b, s.q, e); });
}

}  // namespace

BENCHMARK(BM_IdIiwa)->ArgsProduct({{1024}, {0, 1}});
BENCHMARK(BM_FdIiwa)->ArgsProduct({{1024}, {0, 1}});
BENCHMARK(BM_FdIiwaFixed)->ArgsProduct({{1024}, {0, 1}});
BENCHMARK(BM_FdAtlas)->ArgsProduct({{256}, {0, 1}});
BENCHMARK(BM_MinvAtlas)->ArgsProduct({{256}, {0, 1}});

BENCHMARK_MAIN();
