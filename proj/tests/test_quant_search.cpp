#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <regex>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "qrbd/quant_search.hpp"

using namespace qrbd;

namespace {

SimConfig short_sim() {
  SimConfig s;
  s.steps = 300;
  return s;
}

SearchConstraints pendulum_grid(double tol) {
  SearchConstraints c;
  c.mode = HwMode::Unconstrained;
  c.n_int = 5;
  c.frac_min = 2;
  c.frac_max = 14;
  c.evaluations = 10;
  c.budget_per_candidate = 10;
  c.tolerance.ee = tol;
  c.compensation_samples = 100;
  return c;
}

}  // namespace

TEST_SUITE("quant_search") {
  TEST_CASE("range analysis on the pendulum") {
    const auto m = oracle::load("pendulum.urdf");
    const auto r = range_analysis(*m, 1000, 3);
    CHECK(r.n_int == 5);
    CHECK(r.by_stage.at("torque command") == 9.81);
    CHECK(r.samples == 1000);
    CHECK(std::ldexp(1.0, r.n_int) >= 2.0 * r.max_abs);
    CHECK(std::ldexp(1.0, r.n_int - 1) < 2.0 * r.max_abs);

    std::mt19937_64 rng(3);
    double g_max = 0.0;
    for (int i = 0; i < 300; ++i) {
      const auto s = oracle::random_state(*m, rng);
      g_max = std::max(g_max, oracle::gravity(*m, s.q).cwiseAbs().maxCoeff());
    }
    CHECK(r.max_abs >= 0.9 * g_max);
    double stages = 0.0;
    for (const auto& [name, v] : r.by_stage) stages = std::max(stages, v);
    CHECK(stages == r.max_abs);
  }

  TEST_CASE("range analysis on iiwa and its monotonicity") {
    const auto m = oracle::load("iiwa14.urdf");
    const auto r = range_analysis(*m, 500, 1);
    CHECK(r.n_int <= 12);
    CHECK(r.n_int >= 10);
    const auto wide = range_analysis(*m, 500, 1, 8.0);
    CHECK(wide.max_abs == doctest::Approx(r.max_abs));
    CHECK(wide.n_int == r.n_int + 2);
    const auto more = range_analysis(*m, 1000, 1);
    CHECK(more.max_abs >= r.max_abs);
    CHECK(more.n_int >= r.n_int);
    CHECK_THROWS_AS(range_analysis(*m, 50, 1), std::invalid_argument);
  }

  TEST_CASE("doubling velocity limits never lowers n_int") {
    for (const char* name : {"iiwa14.urdf", "hyq.urdf", "pendulum.urdf"}) {
      std::ifstream in(oracle::robot_path(name));
      std::stringstream ss;
      ss << in.rdbuf();
      std::string text = ss.str(), doubled;
      const std::regex vel(R"re(velocity="([0-9.eE+-]+)")re");
      std::sregex_iterator it(text.begin(), text.end(), vel), end;
      std::size_t last = 0;
      for (; it != end; ++it) {
        doubled += text.substr(last, static_cast<std::size_t>(it->position()) - last);
        doubled += "velocity=\"" + std::to_string(2.0 * std::stod((*it)[1])) + "\"";
        last = static_cast<std::size_t>(it->position() + it->length());
      }
      doubled += text.substr(last);
      const auto base = range_analysis(*oracle::load(name), 300, 2);
      const auto fast = range_analysis(parse_urdf(doubled), 300, 2);
      INFO(std::string(name));
      CHECK(fast.n_int >= base.n_int);
      CHECK(fast.max_abs >= base.max_abs);
    }
  }

  TEST_CASE("candidate enumeration") {
    SearchConstraints c;
    c.mode = HwMode::Dsp48_18;
    auto f = enumerate_candidates(c, 10);
    CHECK(f.front() == FxpFormat{10, 8});
    CHECK(f[1] == FxpFormat{11, 7});
    CHECK(f.size() == 8 + 14 + 22);
    for (const auto& x : f) CHECK(x.int_bits >= 10);

    c.mode = HwMode::Dsp58_24;
    f = enumerate_candidates(c, 12);
    CHECK(f.front() == FxpFormat{12, 12});
    CHECK(f.size() == 12 + 20);

    c.mode = HwMode::Dsp48_18;
    f = enumerate_candidates(c, 20);
    CHECK(f.front() == FxpFormat{20, 4});
    c.widths = {18};
    CHECK_THROWS_AS(enumerate_candidates(c, 20), std::invalid_argument);
    c.widths = {24, 18};
    CHECK_THROWS_AS(enumerate_candidates(c, 10), std::invalid_argument);

    c = SearchConstraints{};
    c.mode = HwMode::Unconstrained;
    c.frac_min = 6;
    c.frac_max = 8;
    c.int_span = 1;
    f = enumerate_candidates(c, 12);
    const std::vector<FxpFormat> expected{{12, 6}, {12, 7}, {13, 6}, {12, 8}, {13, 7}, {13, 8}};
    CHECK(f == expected);

    CHECK(parse_hw_mode("dsp58-24") == HwMode::Dsp58_24);
    CHECK(to_string(HwMode::Dsp48_18) == "dsp48-18");
    CHECK_THROWS(parse_hw_mode("dsp99"));
  }

  TEST_CASE("infinite tolerance accepts the cheapest candidate") {
    const auto m = oracle::load("pendulum.urdf");
    const auto ctrl = ControllerConfig::defaults(ControllerKind::Pid, 1);
    auto c = pendulum_grid(std::numeric_limits<double>::infinity());
    const auto r = search(m, ctrl, c, short_sim());
    REQUIRE(r.status == SearchStatus::Found);
    CHECK(*r.chosen == FxpFormat{5, 2});
    CHECK(r.candidates.size() == 1);
    CHECK(r.pruning_log.empty());
    CHECK(r.audits.empty());
    CHECK_FALSE(r.best_effort);

    c = SearchConstraints{};
    c.mode = HwMode::Dsp58_24;
    c.n_int = 7;
    c.evaluations = 4;
    c.budget_per_candidate = 4;
    c.compensation_samples = 100;
    c.tolerance.ee = std::numeric_limits<double>::infinity();
    const auto r2 = search(m, ctrl, c, short_sim());
    CHECK(*r2.chosen == FxpFormat{7, 17});
  }

  TEST_CASE("search order, pruning log and audits are consistent") {
    const auto m = oracle::load("pendulum.urdf");
    const auto ctrl = ControllerConfig::defaults(ControllerKind::Pid, 1);
    const auto c = pendulum_grid(1e-4);
    const auto r = search(m, ctrl, c, short_sim());
    REQUIRE(r.status == SearchStatus::Found);
    REQUIRE(r.candidates.size() >= 2);
    const auto all = enumerate_candidates(c, 5);
    for (std::size_t i = 0; i < r.candidates.size(); ++i) CHECK(r.candidates[i].format == all[i]);
    CHECK(r.candidates.back().status == CandidateStatus::Pass);
    CHECK(r.candidates.back().format == *r.chosen);
    CHECK(r.candidates.back().worst_ee <= c.tolerance.ee);
    CHECK(r.candidates.back().rollouts == c.evaluations);

    std::size_t rejected = 0;
    for (std::size_t i = 0; i + 1 < r.candidates.size(); ++i) {
      const auto& cand = r.candidates[i];
      CHECK((cand.status == CandidateStatus::Fail || cand.status == CandidateStatus::Pruned));
      REQUIRE(cand.violation);
      CHECK(cand.violation->value > cand.violation->threshold);
      ++rejected;
    }
    CHECK(r.pruning_log.size() == rejected);
    for (const auto& p : r.pruning_log) {
      CHECK(p.sample_fraction > 0.0);
      CHECK(p.sample_fraction <= 1.0);
      CHECK((p.heuristic == "first-decile" || p.heuristic == "early-termination"));
      CHECK(p.violation.value > p.violation.threshold);
      if (p.heuristic == "first-decile") {
        CHECK(p.violation.threshold == doctest::Approx(c.prune_factor * c.tolerance.ee));
        CHECK(p.sample_fraction <= c.prune_fraction);
      }
    }
    CHECK(r.audits.size() == static_cast<std::size_t>(std::ceil(c.audit_fraction * static_cast<double>(rejected))));
    for (const auto& a : r.audits) {
      CHECK(a.violates);
      CHECK(a.rollouts == c.evaluations);
      CHECK(a.worst_ee > c.tolerance.ee);
    }

    // Full, unpruned evaluation agrees with the verdict.
    const auto states = heuristic_sample_order(sample_initial_states(*m, short_sim(), c.evaluations, 1), *m);
    const auto full = evaluate_format(m, ctrl, *r.chosen, nullptr, short_sim(), states, c, false, false, 100);
    CHECK(full.pass);
    CHECK(full.worst_ee == doctest::Approx(r.candidates.back().worst_ee));
    const auto& first = r.candidates.front();
    const auto bad = evaluate_format(m, ctrl, first.format, nullptr, short_sim(), states, c, false, false, 100);
    CHECK_FALSE(bad.pass);
    CHECK(bad.worst_ee >= first.worst_ee);
  }

  TEST_CASE("budget exhaustion and no-pass report a best effort") {
    const auto m = oracle::load("pendulum.urdf");
    const auto ctrl = ControllerConfig::defaults(ControllerKind::Pid, 1);
    auto c = pendulum_grid(1e-12);
    c.frac_max = 5;
    auto r = search(m, ctrl, c, short_sim());
    CHECK(r.status == SearchStatus::NoPass);
    CHECK(r.best_effort);
    REQUIRE(r.chosen);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& cand : r.candidates) best = std::min(best, cand.worst_ee);
    for (const auto& cand : r.candidates) {
      if (cand.format == *r.chosen) CHECK(cand.worst_ee == best);
    }
    CHECK_FALSE(r.compensation);

    c = pendulum_grid(1e-12);
    c.total_budget = 3;
    r = search(m, ctrl, c, short_sim());
    CHECK(r.status == SearchStatus::BudgetExhausted);
    CHECK(r.total_rollouts <= 3);
    CHECK(r.candidates.back().status == CandidateStatus::Skipped);
  }

  TEST_CASE("compensation is fitted and validated for the winner") {
    const auto m = oracle::load("pendulum.urdf");
    const auto ctrl = ControllerConfig::defaults(ControllerKind::Pid, 1);
    const auto r = search(m, ctrl, pendulum_grid(1e-4), short_sim());
    REQUIRE(r.compensation);
    REQUIRE(r.compensation_validated);
    CHECK(r.compensation->fit_frobenius_after <= r.compensation->fit_frobenius_before);
  }

  TEST_CASE("report json and pruning csv") {
    const auto m = oracle::load("pendulum.urdf");
    const auto ctrl = ControllerConfig::defaults(ControllerKind::Pid, 1);
    const auto c = pendulum_grid(1e-4);
    const auto r = search(m, ctrl, c, short_sim());
    const auto text = report_json(r);
    const auto j = nlohmann::json::parse(text);
    CHECK(j["status"] == "found");
    CHECK(j["chosen"]["name"] == r.chosen->to_string());
    CHECK(j["candidates"].size() == r.candidates.size());
    CHECK(j["pruning_log"].size() == r.pruning_log.size());
    CHECK(text.find("wall") == std::string::npos);
    CHECK(report_json(search(m, ctrl, c, short_sim())) == text);

    std::ostringstream csv;
    write_pruning_csv(csv, r);
    std::istringstream in(csv.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "format,n_int,n_frac,heuristic,sample_fraction,metric,value,threshold,sample");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == r.pruning_log.size());
  }

  TEST_CASE("constraint validation") {
    SearchConstraints c;
    c.evaluations = 30;
    c.budget_per_candidate = 20;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = SearchConstraints{};
    c.tolerance.ee = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = SearchConstraints{};
    c.prune_factor = 0.5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = SearchConstraints{};
    c.audit_fraction = 1.5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  }
}
