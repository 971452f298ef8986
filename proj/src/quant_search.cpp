#include "qrbd/quant_search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>

#include "json.hpp"
#include "qrbd/arith.hpp"
#include "qrbd/batch.hpp"
#include "qrbd/binding.hpp"
#include "qrbd/kernels.hpp"

namespace qrbd {

using Eigen::VectorXd;

namespace {

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

RangeResult range_analysis(const RobotModel& model, int samples, std::uint64_t seed, double safety) {
  if (samples < 100) throw std::invalid_argument("range analysis needs at least 100 samples");
  if (!(safety >= 1.0)) throw std::invalid_argument("range safety factor must be at least 1");
  RangeArith ar;
  const auto km = make_kernel_model(ar, model);
  const auto states = sample_random_states(model, samples, seed);
  const int n = model.size();
  for (const auto& s : states) {
    const VectorXd tau = inverse_dynamics(model, s.q, VectorXd::Zero(n), VectorXd::Zero(n));
    const VectorXd qdd = forward_dynamics(model, s.q, s.qd, VectorXd::Zero(n));
    std::vector<double> q = to_std(s.q), qd = to_std(s.qd);
    for (auto& x : q) x = ar.input(x);
    for (auto& x : qd) x = ar.input(x);
    std::vector<double> t = to_std(tau), a = to_std(qdd);
    for (auto& x : t) x = ar.input(x);
    for (auto& x : a) x = ar.input(x);
    rnea(ar, km, q, qd, a, nullptr, true);
    forward_dynamics(ar, km, q, qd, t, nullptr, MinvMethod::Deferred);
  }
  RangeResult r;
  r.samples = samples;
  for (const auto& [key, v] : ar.max_abs()) {
    r.by_stage[std::string(to_string(key.first)) + " " + to_string(key.second)] = v;
    r.max_abs = std::max(r.max_abs, v);
  }
  double effort = 0.0;
  for (int i = 0; i < n; ++i) effort = std::max(effort, model.link(i).joint.effort_limit);
  if (effort > 0.0) {
    r.by_stage["torque command"] = effort;
    r.max_abs = std::max(r.max_abs, effort);
  }
  r.n_int = std::max(1, static_cast<int>(std::ceil(std::log2(std::max(safety * r.max_abs, 1.0)))));
  return r;
}

std::string to_string(HwMode m) {
  switch (m) {
    case HwMode::Dsp48_18:
      return "dsp48-18";
    case HwMode::Dsp58_24:
      return "dsp58-24";
    case HwMode::Unconstrained:
      return "unconstrained";
  }
  return "?";
}

HwMode parse_hw_mode(const std::string& s) {
  if (s == "dsp48-18" || s == "DSP48-18") return HwMode::Dsp48_18;
  if (s == "dsp58-24" || s == "DSP58-24") return HwMode::Dsp58_24;
  if (s == "unconstrained") return HwMode::Unconstrained;
  throw std::invalid_argument("unknown hardware mode '" + s + "' (dsp48-18, dsp58-24, unconstrained)");
}

std::string to_string(CandidateStatus s) {
  switch (s) {
    case CandidateStatus::Pass:
      return "pass";
    case CandidateStatus::Fail:
      return "fail";
    case CandidateStatus::Pruned:
      return "pruned";
    case CandidateStatus::Skipped:
      return "skipped";
  }
  return "?";
}

std::string to_string(SearchStatus s) {
  switch (s) {
    case SearchStatus::Found:
      return "found";
    case SearchStatus::NoPass:
      return "no-pass";
    case SearchStatus::BudgetExhausted:
      return "budget-exhausted";
  }
  return "?";
}

void SearchConstraints::validate() const {
  if (!std::is_sorted(widths.begin(), widths.end())) throw std::invalid_argument("widths must be sorted ascending");
  for (int w : widths) {
    if (w < 2 || w > 62) throw std::invalid_argument("width " + std::to_string(w) + " is outside [2, 62]");
  }
  if (!(tolerance.ee > 0.0)) throw std::invalid_argument("ee tolerance must be positive");
  if (tolerance.posture && !(*tolerance.posture > 0.0)) throw std::invalid_argument("posture tolerance must be positive");
  if (n_int && (*n_int < 1 || *n_int > 40)) throw std::invalid_argument("n_int override must be in [1, 40]");
  if (range_samples < 100) throw std::invalid_argument("range analysis needs at least 100 samples");
  if (evaluations < 1) throw std::invalid_argument("evaluations must be at least 1");
  if (budget_per_candidate < evaluations) {
    throw std::invalid_argument("budget_per_candidate must cover the evaluation set");
  }
  if (total_budget < 0) throw std::invalid_argument("total_budget must be nonnegative");
  if (!(prune_factor >= 1.0)) throw std::invalid_argument("prune_factor must be at least 1");
  if (!(prune_fraction > 0.0 && prune_fraction <= 1.0)) throw std::invalid_argument("prune_fraction must be in (0, 1]");
  if (!(audit_fraction >= 0.0 && audit_fraction <= 1.0)) throw std::invalid_argument("audit_fraction must be in [0, 1]");
  if (frac_min < 0 || frac_max < frac_min) throw std::invalid_argument("bad n_frac bounds");
  if (int_span < 0) throw std::invalid_argument("int_span must be nonnegative");
  if (compensation_samples < 100) throw std::invalid_argument("compensation needs at least 100 samples");
}

std::vector<FxpFormat> enumerate_candidates(const SearchConstraints& c, int floor) {
  c.validate();
  std::vector<FxpFormat> out;
  if (c.mode == HwMode::Unconstrained) {
    for (int ni = floor; ni <= floor + c.int_span; ++ni) {
      for (int nf = c.frac_min; nf <= c.frac_max; ++nf) {
        if (ni + nf <= 62) out.push_back({ni, nf});
      }
    }
    std::stable_sort(out.begin(), out.end(), [](const FxpFormat& a, const FxpFormat& b) {
      if (a.width() != b.width()) return a.width() < b.width();
      return a.frac_bits > b.frac_bits;
    });
  } else {
    std::vector<int> widths = c.widths;
    if (widths.empty()) widths = c.mode == HwMode::Dsp48_18 ? std::vector<int>{18, 24, 32} : std::vector<int>{24, 32};
    for (int w : widths) {
      for (int ni = floor; ni < w; ++ni) out.push_back({ni, w - ni});
    }
  }
  if (out.empty()) throw std::invalid_argument("no candidate format fits n_int >= " + std::to_string(floor));
  return out;
}

namespace {

struct Sample {
  bool ok = true;
  double ee = 0.0;
  double posture = 0.0;
  std::string error;
};

using RefCache = std::vector<std::optional<Run>>;

Sample run_one(const std::shared_ptr<const RobotModel>& model, const ControllerConfig& ctrl,
               const std::optional<FxpFormat>& fmt, const CompensationParams* comp, const SimConfig& sim,
               const InitialState& init, std::optional<Run>* cached) {
  Sample s;
  try {
    Run ref = cached && *cached ? **cached : simulate(*model, ctrl, RbdBinding::real(model), sim, init);
    if (cached && !*cached) *cached = ref;
    const Run q = simulate(*model, ctrl, controller_binding(model, fmt, comp), sim, init);
    const auto m = trajectory_metrics(ref, q);
    s.ee = m.max_ee_error;
    s.posture = m.max_posture_error;
  } catch (const std::exception& e) {
    s.ok = false;
    s.ee = std::numeric_limits<double>::infinity();
    s.posture = std::numeric_limits<double>::infinity();
    s.error = e.what();
  }
  return s;
}

std::optional<Violation> check(const Sample& s, const Tolerances& tol, double factor, int index) {
  if (!s.ok) return Violation{"kernel", s.ee, tol.ee * factor, index, s.error};
  if (s.ee > tol.ee * factor) return Violation{"ee", s.ee, tol.ee * factor, index, {}};
  if (tol.posture && s.posture > *tol.posture * factor) {
    return Violation{"posture", s.posture, *tol.posture * factor, index, {}};
  }
  return std::nullopt;
}

EvalOutcome evaluate_impl(const std::shared_ptr<const RobotModel>& model, const ControllerConfig& ctrl,
                          const std::optional<FxpFormat>& fmt, const CompensationParams* comp, const SimConfig& sim,
                          const std::vector<InitialState>& states, const SearchConstraints& c, bool early_stop,
                          bool prune, int max_rollouts, RefCache* cache) {
  EvalOutcome out;
  const int total = static_cast<int>(states.size());
  const int decile = std::max(1, static_cast<int>(std::ceil(c.prune_fraction * total)));
  const int limit = std::min(total, max_rollouts);
  int next = 0;
  while (next < limit) {
    const int end = std::min(limit, next + decile);
    std::vector<Sample> chunk(static_cast<std::size_t>(end - next));
    for_each_index(end - next, Execution::Parallel, [&](int k) {
      const auto idx = static_cast<std::size_t>(next + k);
      chunk[static_cast<std::size_t>(k)] =
          run_one(model, ctrl, fmt, comp, sim, states[idx], cache ? &(*cache)[idx] : nullptr);
    });
    const bool first_chunk = next == 0;
    for (int k = 0; k < end - next; ++k) {
      const Sample& s = chunk[static_cast<std::size_t>(k)];
      ++out.rollouts;
      out.worst_ee = std::max(out.worst_ee, s.ee);
      out.worst_posture = std::max(out.worst_posture, s.posture);
      if (out.pass) {
        if (auto v = check(s, c.tolerance, 1.0, next + k)) {
          out.pass = false;
          out.violation = v;
        }
      }
    }
    if (prune && first_chunk && !out.pass) {
      for (int k = 0; k < end - next; ++k) {
        if (auto v = check(chunk[static_cast<std::size_t>(k)], c.tolerance, c.prune_factor, k)) {
          out.pruned = v;
          break;
        }
      }
    }
    next = end;
    if (!out.pass && early_stop) break;
  }
  if (out.pass && out.rollouts < total) {
    out.pass = false;
    out.violation = Violation{"budget", static_cast<double>(out.rollouts), static_cast<double>(total), out.rollouts,
                              "rollout budget ran out before the evaluation set was complete"};
  }
  return out;
}

}  // namespace

EvalOutcome evaluate_format(std::shared_ptr<const RobotModel> model, const ControllerConfig& ctrl,
                            const std::optional<FxpFormat>& fmt, const CompensationParams* comp, const SimConfig& sim,
                            const std::vector<InitialState>& states, const SearchConstraints& c, bool early_stop,
                            bool prune, int max_rollouts) {
  return evaluate_impl(model, ctrl, fmt, comp, sim, states, c, early_stop, prune, max_rollouts, nullptr);
}

QuantReport search(std::shared_ptr<const RobotModel> model, const ControllerConfig& ctrl, const SearchConstraints& c,
                   const SimConfig& sim) {
  const auto t0 = std::chrono::steady_clock::now();
  c.validate();
  sim.validate();
  ctrl.validate(model->size());

  QuantReport r;
  if (c.n_int) {
    r.range.n_int = *c.n_int;
  } else {
    r.range = range_analysis(*model, c.range_samples, sim.seed);
  }
  const auto formats = enumerate_candidates(c, r.range.n_int);
  const auto states =
      heuristic_sample_order(sample_initial_states(*model, sim, c.evaluations, sim.seed), *model);
  RefCache cache(states.size());

  bool exhausted = false;
  for (const auto& fmt : formats) {
    CandidateResult cand;
    cand.format = fmt;
    int allowed = c.budget_per_candidate;
    if (c.total_budget > 0) allowed = std::min(allowed, c.total_budget - r.total_rollouts);
    if (exhausted || allowed <= 0) {
      exhausted = true;
      r.candidates.push_back(cand);
      continue;
    }
    const auto e = evaluate_impl(model, ctrl, fmt, nullptr, sim, states, c, true, true, allowed, &cache);
    r.total_rollouts += e.rollouts;
    cand.rollouts = e.rollouts;
    cand.worst_ee = e.worst_ee;
    cand.worst_posture = e.worst_posture;
    cand.violation = e.violation;
    if (e.pass) {
      cand.status = CandidateStatus::Pass;
      r.candidates.push_back(cand);
      r.chosen = fmt;
      break;
    }
    if (e.violation && e.violation->metric == "budget") {
      exhausted = true;
      cand.status = CandidateStatus::Skipped;
      r.candidates.push_back(cand);
      continue;
    }
    const double frac = static_cast<double>(e.violation->sample + 1) / static_cast<double>(states.size());
    if (e.pruned) {
      cand.status = CandidateStatus::Pruned;
      r.pruning_log.push_back({fmt, "first-decile", frac, *e.pruned});
    } else {
      cand.status = CandidateStatus::Fail;
      r.pruning_log.push_back({fmt, "early-termination", frac, *e.violation});
    }
    r.candidates.push_back(cand);
  }

  std::vector<std::size_t> rejected;
  for (std::size_t i = 0; i < r.candidates.size(); ++i) {
    const auto st = r.candidates[i].status;
    if (st == CandidateStatus::Fail || st == CandidateStatus::Pruned) rejected.push_back(i);
  }
  if (!rejected.empty() && c.audit_fraction > 0.0) {
    const auto k = static_cast<std::size_t>(std::ceil(c.audit_fraction * static_cast<double>(rejected.size())));
    for (std::size_t j = 0; j < k; ++j) {
      const auto& cand = r.candidates[rejected[j * rejected.size() / k]];
      const auto e = evaluate_impl(model, ctrl, cand.format, nullptr, sim, states, c, false, false,
                                   static_cast<int>(states.size()), &cache);
      r.audits.push_back({cand.format, !e.pass, e.worst_ee, e.rollouts});
    }
  }

  if (r.chosen) {
    r.status = SearchStatus::Found;
    r.compensation = fit_compensation(model, r.chosen, c.compensation_samples, sim.seed + 7919,
                                      c.full_matrix_compensation);
    const auto e = evaluate_impl(model, ctrl, r.chosen, &*r.compensation, sim, states, c, false, false,
                                 static_cast<int>(states.size()), &cache);
    r.compensation_validated = e.pass;
    r.compensated_worst_ee = e.worst_ee;
  } else {
    r.status = exhausted ? SearchStatus::BudgetExhausted : SearchStatus::NoPass;
    const CandidateResult* best = nullptr;
    for (const auto& cand : r.candidates) {
      if (cand.rollouts == 0) continue;
      if (!best || cand.worst_ee < best->worst_ee) best = &cand;
    }
    if (best) {
      r.chosen = best->format;
      r.best_effort = true;
    }
  }
  r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

namespace {

nlohmann::json violation_json(const Violation& v) {
  nlohmann::json j{{"metric", v.metric}, {"threshold", v.threshold}, {"sample", v.sample}};
  if (std::isfinite(v.value)) {
    j["value"] = v.value;
  } else {
    j["value"] = nullptr;
  }
  if (!v.detail.empty()) j["detail"] = v.detail;
  return j;
}

nlohmann::json finite_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

nlohmann::json format_json(const FxpFormat& f) {
  return {{"n_int", f.int_bits}, {"n_frac", f.frac_bits}, {"width", f.width()}, {"name", f.to_string()}};
}

}  // namespace

std::string report_json(const QuantReport& r) {
  nlohmann::json j;
  j["status"] = to_string(r.status);
  j["chosen"] = r.chosen ? format_json(*r.chosen) : nlohmann::json(nullptr);
  j["best_effort"] = r.best_effort;
  j["range"] = {{"n_int", r.range.n_int}, {"max_abs", r.range.max_abs}, {"samples", r.range.samples},
                {"by_stage", r.range.by_stage}};
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : r.candidates) {
    nlohmann::json cj{{"format", format_json(c.format)},
                      {"status", to_string(c.status)},
                      {"rollouts", c.rollouts},
                      {"worst_ee_m", finite_or_null(c.worst_ee)},
                      {"worst_posture_rad", finite_or_null(c.worst_posture)}};
    if (c.violation) cj["violation"] = violation_json(*c.violation);
    cands.push_back(cj);
  }
  j["candidates"] = cands;
  nlohmann::json log = nlohmann::json::array();
  for (const auto& p : r.pruning_log) {
    log.push_back({{"format", p.format.to_string()},
                   {"heuristic", p.heuristic},
                   {"sample_fraction", p.sample_fraction},
                   {"violation", violation_json(p.violation)}});
  }
  j["pruning_log"] = log;
  nlohmann::json audits = nlohmann::json::array();
  for (const auto& a : r.audits) {
    audits.push_back({{"format", a.format.to_string()},
                      {"violates", a.violates},
                      {"worst_ee_m", finite_or_null(a.worst_ee)},
                      {"rollouts", a.rollouts}});
  }
  j["audits"] = audits;
  if (r.compensation) {
    j["compensation"] = nlohmann::json::parse(compensation_json(*r.compensation));
    j["compensation_validated"] = *r.compensation_validated;
    j["compensated_worst_ee_m"] = finite_or_null(r.compensated_worst_ee);
  } else {
    j["compensation"] = nullptr;
  }
  j["total_rollouts"] = r.total_rollouts;
  return j.dump(2);
}

void write_pruning_csv(std::ostream& out, const QuantReport& r) {
  out << "format,n_int,n_frac,heuristic,sample_fraction,metric,value,threshold,sample\n";
  out << std::setprecision(17);
  for (const auto& p : r.pruning_log) {
    out << p.format.to_string() << ',' << p.format.int_bits << ',' << p.format.frac_bits << ',' << p.heuristic << ','
        << p.sample_fraction << ',' << p.violation.metric << ',';
    if (std::isfinite(p.violation.value)) out << p.violation.value;
    out << ',' << p.violation.threshold << ',' << p.violation.sample << '\n';
  }
}

void print_summary(std::ostream& out, const QuantReport& r) {
  out << "range analysis: n_int = " << r.range.n_int;
  if (r.range.samples > 0) out << " (max |x| = " << r.range.max_abs << " over " << r.range.samples << " states)";
  out << "\n\n";
  out << std::left << std::setw(10) << "format" << std::setw(10) << "status" << std::setw(10) << "rollouts"
      << "worst ee (mm)\n";
  for (const auto& c : r.candidates) {
    out << std::setw(10) << c.format.to_string() << std::setw(10) << to_string(c.status) << std::setw(10)
        << c.rollouts;
    if (c.rollouts == 0) {
      out << "-";
    } else if (std::isfinite(c.worst_ee)) {
      out << std::fixed << std::setprecision(4) << c.worst_ee * 1e3 << std::defaultfloat;
    } else {
      out << "kernel failure";
    }
    out << '\n';
  }
  out << "\nstatus: " << to_string(r.status);
  if (r.chosen) out << ", format " << r.chosen->to_string() << (r.best_effort ? " (best effort)" : "");
  out << ", " << r.total_rollouts << " rollouts, " << std::fixed << std::setprecision(2) << r.wall_time_s << " s\n"
      << std::defaultfloat;
  if (r.compensation) {
    out << "compensation: Minv error " << r.compensation->fit_frobenius_before << " -> "
        << r.compensation->fit_frobenius_after << (*r.compensation_validated ? ", re-validated" : ", FAILED re-validation")
        << '\n';
  }
}

}  // namespace qrbd
