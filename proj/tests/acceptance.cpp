// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "qrbd/batch.hpp"
#include "qrbd/fixed_point.hpp"
#include "qrbd/hw_model.hpp"
#include "qrbd/icms.hpp"
#include "qrbd/quant_search.hpp"
#include "qrbd/verify.hpp"

namespace fs = std::filesystem;
using namespace qrbd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x, int prec = 3) {
  std::ostringstream s;
  s << std::setprecision(prec) << x;
  return s.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

const std::vector<std::string> kRobots{"pendulum.urdf", "iiwa14.urdf", "hyq.urdf", "atlas.urdf"};

// Max end-effector error of one paired run; a kernel or plant failure counts as infinite.
double pair_error(const std::shared_ptr<const RobotModel>& m, const ControllerConfig& ctrl, const FxpFormat& f,
                  SimConfig sim, std::uint64_t seed) {
  sim.seed = seed;
  try {
    const auto p = rollout_pair(m, ctrl, f, nullptr, sim);
    return trajectory_metrics(p.reference, p.quantized).max_ee_error;
  } catch (const std::exception&) {
    return std::numeric_limits<double>::infinity();
  }
}

Outcome kernel_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  VerifyConfig vc;
  vc.samples = 1000;
  vc.gradient_samples = 1;
  bool ok = true;
  std::ostringstream d;
  for (const auto& name : kRobots) {
    const auto m = oracle::load(name);
    const auto r = run_verification(*m, vc);
    const bool pass = r.at("id_fd_roundtrip").pass && r.at("mass_symmetry").pass && r.at("minv_identity").pass;

    std::mt19937_64 rng(23);
    double rnea_err = 0.0, mass_err = 0.0;
    for (int i = 0; i < 100; ++i) {
      const auto s = oracle::random_state(*m, rng);
      rnea_err = std::max(rnea_err, oracle::rel_err(inverse_dynamics(*m, s.q, s.qd, s.qdd),
                                                    oracle::inverse_dynamics(*m, s)));
      mass_err = std::max(mass_err, oracle::rel_err(mass_matrix(*m, s.q), oracle::mass_matrix(*m, s.q)));
    }
    const bool oracle_ok = rnea_err <= 1e-8 && mass_err <= 1e-8;
    ok = ok && pass && oracle_ok;
    d << m->name() << " roundtrip " << fmt(r.at("id_fd_roundtrip").value) << " symmetry "
      << fmt(r.at("mass_symmetry").value) << " identity " << fmt(r.at("minv_identity").value) << " oracle "
      << fmt(std::max(rnea_err, mass_err)) << "; ";
  }
  const double t = seconds_since(t0);
  d << "time " << fmt(t) << " s";
  return {ok && t < 60.0, d.str()};
}

Outcome division_deferring() {
  VerifyConfig vc;
  vc.samples = 1000;
  vc.gradient_samples = 1;
  bool ok = true;
  std::ostringstream d;
  for (const auto& name : kRobots) {
    const auto m = oracle::load(name);
    const auto r = run_verification(*m, vc);
    ok = ok && r.at("minv_equivalence").pass && r.at("deferred_divisions").pass;

    HwConfig o, df;
    o.minv_method = MinvMethod::Original;
    const FxpFormat f{12, 12};
    const auto lo = module_loads(*m, f, o), ld = module_loads(*m, f, df);
    const auto a = minv_latency_cycles(plan_pipeline(lo, f, o, false), lo.at(Module::Minv), *m, o,
                                       MinvMethod::Original);
    const auto b = minv_latency_cycles(plan_pipeline(ld, f, df, false), ld.at(Module::Minv), *m, df,
                                       MinvMethod::Deferred);
    const double ratio = static_cast<double>(a) / static_cast<double>(b);
    if (name == "iiwa14.urdf") ok = ok && ratio >= 2.0;
    d << m->name() << " equivalence " << fmt(r.at("minv_equivalence").value) << " ("
      << r.at("deferred_divisions").detail << ") latency " << a << "/" << b << " = " << fmt(ratio) << "x; ";
  }
  return {ok, d.str()};
}

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  VerifyConfig vc;
  vc.samples = 1;
  vc.gradient_samples = 100;
  const auto r = run_verification(*oracle::load("iiwa14.urdf"), vc);
  const double t = seconds_since(t0);
  const bool ok = r.at("id_gradients").pass && r.at("fd_gradients").pass && t < 30.0;
  return {ok, "id " + fmt(r.at("id_gradients").value) + ", fd " + fmt(r.at("fd_gradients").value) + ", time " +
                  fmt(t) + " s"};
}

Outcome quantization_bound() {
  std::mt19937_64 rng(4);
  long violations = 0, samples = 0;
  std::ostringstream d;
  for (const FxpFormat f : {FxpFormat{12, 12}, FxpFormat{10, 8}, FxpFormat{16, 16}}) {
    std::uniform_real_distribution<double> u(f.min_real(), f.max_real());
    const double bound = std::ldexp(1.0, -f.frac_bits - 1);
    long bad = 0;
    const long count = f == FxpFormat{16, 16} ? 333334 : 333333;
    for (long i = 0; i < count; ++i) {
      const double x = u(rng);
      if (std::abs(quantize(x, f).to_real() - x) > bound) ++bad;
    }
    violations += bad;
    samples += count;
    d << f.to_string() << " " << bad << "; ";
  }
  d << samples << " samples";
  return {violations == 0 && samples == 1000000, d.str()};
}

Outcome velocity_depth() {
  const auto m = oracle::load("iiwa14.urdf");
  const auto states = sample_random_states(*m, 500, 5);
  const auto v = velocity_error_by_depth(m, FxpFormat{12, 12}, states);
  return {v.rank_correlation >= 0.8, "spearman " + fmt(v.rank_correlation)};
}

Outcome compensation(const QuantReport& searched) {
  const auto m = oracle::load("iiwa14.urdf");
  if (!searched.chosen || searched.best_effort) return {false, "search found no format"};
  const FxpFormat f = *searched.chosen;
  const auto comp = fit_compensation(m, f, 500, 101);
  const auto held_out = sample_random_states(*m, 500, 202);
  const auto before = minv_error_stats(m, f, held_out);
  const auto after = minv_error_stats(m, f, held_out, &comp);
  const double ratio = after.frobenius / before.frobenius;
  return {ratio <= 0.5, f.to_string() + " frobenius " + fmt(before.frobenius) + " -> " + fmt(after.frobenius) +
                            " (x" + fmt(ratio) + "), off-diagonal " + fmt(before.offdiag_mae) + " -> " +
                            fmt(after.offdiag_mae)};
}

Outcome closed_loop_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = oracle::load("iiwa14.urdf");
  const auto ctrl = ControllerConfig::defaults(ControllerKind::Pid, m->size());
  SimConfig sim;
  std::vector<double> med;
  std::ostringstream d;
  for (int nf : {8, 12, 16}) {
    std::vector<double> e(20);
    for_each_index(e.size(), Execution::Parallel,
                   [&](std::size_t s) { e[s] = pair_error(m, ctrl, FxpFormat{12, nf}, sim, s + 1); });
    med.push_back(median(e));
    d << "n_frac " << nf << " median " << fmt(med.back() * 1e3) << " mm; ";
  }
  const double t = seconds_since(t0);
  d << "time " << fmt(t) << " s";
  const bool ok = med[0] > 5e-4 && med[1] < 5e-4 && med[0] >= med[1] && med[1] >= med[2] && t < 600.0;
  return {ok, d.str()};
}

// Smallest n_frac (ascending) whose every seed stays within tolerance; seeds
// are tried in order and a level stops at its first violation.
int minimal_passing(const std::shared_ptr<const RobotModel>& m, ControllerKind kind, int seeds, std::string* log) {
  const auto ctrl = ControllerConfig::defaults(kind, m->size());
  SimConfig sim;
  for (int nf = 6; nf <= 16; ++nf) {
    bool all = true;
    for (int s = 1; s <= seeds && all; ++s) all = pair_error(m, ctrl, FxpFormat{12, nf}, sim, s) <= sim.tolerance;
    if (all) {
      *log += to_string(kind) + " " + std::to_string(nf) + "; ";
      return nf;
    }
  }
  *log += to_string(kind) + " none; ";
  return 99;
}

Outcome controller_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = oracle::load("iiwa14.urdf");
  std::string log;
  const int pid = minimal_passing(m, ControllerKind::Pid, 10, &log);
  const int lqr = minimal_passing(m, ControllerKind::Lqr, 10, &log);
  const int mpc = minimal_passing(m, ControllerKind::Mpc, 10, &log);
  log += "time " + fmt(seconds_since(t0)) + " s";
  return {mpc <= lqr && lqr <= pid && pid < 99, log};
}

Outcome search_soundness(const QuantReport& r, const SearchConstraints& c) {
  if (!r.chosen || r.best_effort) return {false, "search found no format"};
  const auto m = oracle::load("iiwa14.urdf");
  const auto ctrl = ControllerConfig::defaults(ControllerKind::Pid, m->size());
  SimConfig base;
  int passed = 0;
  for (int k = 0; k < 20; ++k) {
    SimConfig sim = base;
    sim.seed = 1000 + static_cast<std::uint64_t>(k) * 37;
    const auto states = sample_initial_states(*m, sim, c.evaluations, sim.seed);
    const auto e = evaluate_format(m, ctrl, *r.chosen, nullptr, sim, states, c, false, false, c.evaluations);
    passed += e.pass;
  }
  bool audits_ok = !r.audits.empty();
  for (const auto& a : r.audits) audits_ok = audits_ok && a.violates;
  return {passed >= 19 && audits_ok, r.chosen->to_string() + " passes " + std::to_string(passed) +
                                         "/20 fresh evaluation sets; " + std::to_string(r.audits.size()) +
                                         " audited rejections, all violate: " + (audits_ok ? "yes" : "no")};
}

Outcome reuse_planner() {
  std::ostringstream d;
  bool ok = true;
  std::vector<double> savings;
  for (const char* name : {"iiwa14.urdf", "atlas.urdf"}) {
    const auto m = oracle::load(name);
    const auto off = plan_pipeline(*m, FxpFormat{12, 12}, HwConfig{}, false);
    const auto on = plan_pipeline(*m, FxpFormat{12, 12}, HwConfig{}, true);
    ok = ok && on.total_dsps <= off.total_dsps;
    for (auto f : kAllFunctions) ok = ok && on.modes.at(f).ii <= off.modes.at(f).ii;
    savings.push_back(1.0 - static_cast<double>(on.total_dsps) / static_cast<double>(off.total_dsps));
    d << m->name() << " " << off.total_dsps << " -> " << on.total_dsps << " DSPs (" << fmt(100 * savings.back())
      << "%); ";
  }
  const int div = divider_count(3, 3);
  d << "divider_count(3,3) = " << div;
  return {ok && savings[1] > savings[0] && div == 1, d.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path tmp = fs::temp_directory_path() / ("qrbd_accept_" + std::to_string(::getpid()));
  fs::remove_all(tmp);
  const fs::path configs = fs::path(QRBD_SOURCE_DIR) / "configs";
  const std::vector<std::pair<std::string, std::string>> runs{{"verify", "iiwa_verify.json"},
                                                              {"plan", "iiwa_plan.json"},
                                                              {"plan", "atlas_plan.json"},
                                                              {"rollout", "iiwa_rollout.json"},
                                                              {"quantize-search", "iiwa_search.json"}};
  bool ok = true;
  int files = 0;
  std::ostringstream d;
  for (const auto& [cmd, cfg] : runs) {
    std::vector<fs::path> outs;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path out = tmp / (cfg + std::to_string(rep));
      const std::string line = std::string(QRBD_CLI_PATH) + " " + cmd + " --config " + (configs / cfg).string() +
                               " --seed 3 --out " + out.string() + " > /dev/null 2>&1";
      const int st = std::system(line.c_str());
      if (!WIFEXITED(st) || WEXITSTATUS(st) != 0) {
        ok = false;
        d << cmd << " " << cfg << " exited " << (WIFEXITED(st) ? WEXITSTATUS(st) : -1) << "; ";
      }
      outs.push_back(out);
    }
    if (!fs::exists(outs[0])) continue;
    for (const auto& e : fs::directory_iterator(outs[0])) {
      ++files;
      if (slurp(e.path()) != slurp(outs[1] / e.path().filename())) {
        ok = false;
        d << cfg << ":" << e.path().filename().string() << " differs; ";
      }
    }
  }
  fs::remove_all(tmp);
  d << files << " files compared across " << runs.size() << " commands";
  return {ok && files > 0, d.str()};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << std::setw(2) << id << " " << name << ": " << o.detail << " ["
              << fmt(seconds_since(t0)) << " s]" << std::endl;
  };

  // The iiwa search feeds criteria 6 and 9.
  const auto iiwa = oracle::load("iiwa14.urdf");
  SearchConstraints sc;
  sc.mode = HwMode::Unconstrained;
  sc.frac_min = 6;
  sc.frac_max = 16;
  const QuantReport searched = search(iiwa, ControllerConfig::defaults(ControllerKind::Pid, iiwa->size()), sc,
                                      SimConfig{});
  std::cout << "search: " << to_string(searched.status) << " "
            << (searched.chosen ? searched.chosen->to_string() : std::string("none")) << " after "
            << searched.total_rollouts << " rollouts" << std::endl;

  report(1, "kernel correctness", kernel_correctness);
  report(2, "division deferring", division_deferring);
  report(3, "gradient checks", gradients);
  report(4, "quantization bound", quantization_bound);
  report(5, "velocity error vs depth", velocity_depth);
  report(6, "compensation", [&] { return compensation(searched); });
  report(7, "closed-loop trend", closed_loop_trend);
  report(8, "controller ordering", controller_ordering);
  report(9, "search soundness", [&] { return search_soundness(searched, sc); });
  report(10, "reuse planner", reuse_planner);
  report(11, "determinism", determinism);
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
