#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qrbd/fixed_point.hpp"
#include "qrbd/icms.hpp"
#include "qrbd/robot_model.hpp"

namespace qrbd {

struct RangeResult {
  int n_int = 1;
  double max_abs = 0.0;
  std::map<std::string, double> by_stage;  ///< "RNEA forward" etc.
  int samples = 0;
};

/// Smallest n_int (sign included) with 2^n_int >= safety * max|value| over every
/// kernel intermediate seen on `samples` random states. Throws RangeError.
RangeResult range_analysis(const RobotModel& model, int samples, std::uint64_t seed, double safety = 2.0);

enum class HwMode { Dsp48_18, Dsp58_24, Unconstrained };
std::string to_string(HwMode m);
HwMode parse_hw_mode(const std::string& s);

struct Tolerances {
  double ee = 5e-4;                  ///< max end-effector trajectory error, m
  std::optional<double> posture;     ///< max joint-space deviation, rad
};

struct SearchConstraints {
  HwMode mode = HwMode::Dsp58_24;
  std::vector<int> widths;  ///< empty selects the mode's native widths
  Tolerances tolerance;
  std::optional<int> n_int;  ///< overrides range analysis
  int range_samples = 1000;
  int evaluations = 20;           ///< rollouts in the full evaluation set
  int budget_per_candidate = 200;
  int total_budget = 0;           ///< 0 is unlimited
  double prune_factor = 1.2;
  double prune_fraction = 0.1;
  double audit_fraction = 0.1;
  int frac_min = 4;   ///< unconstrained grid
  int frac_max = 24;
  int int_span = 0;   ///< unconstrained grid: n_int in [floor, floor + int_span]
  int compensation_samples = 500;
  bool full_matrix_compensation = false;

  void validate() const;
};

/// Cheapest first: smallest width, then largest n_frac. Throws when empty.
std::vector<FxpFormat> enumerate_candidates(const SearchConstraints& c, int n_int_floor);

enum class CandidateStatus { Pass, Fail, Pruned, Skipped };
std::string to_string(CandidateStatus s);

struct Violation {
  std::string metric;  ///< "ee", "posture" or "kernel"
  double value = 0.0;
  double threshold = 0.0;
  int sample = -1;  ///< position in the evaluation order
  std::string detail;
};

struct CandidateResult {
  FxpFormat format;
  CandidateStatus status = CandidateStatus::Skipped;
  int rollouts = 0;
  double worst_ee = 0.0;
  double worst_posture = 0.0;
  std::optional<Violation> violation;
};

struct PruneEntry {
  FxpFormat format;
  std::string heuristic;  ///< "first-decile" or "early-termination"
  double sample_fraction = 0.0;
  Violation violation;
};

struct AuditEntry {
  FxpFormat format;
  bool violates = false;
  double worst_ee = 0.0;
  int rollouts = 0;
};

enum class SearchStatus { Found, NoPass, BudgetExhausted };
std::string to_string(SearchStatus s);

struct QuantReport {
  SearchStatus status = SearchStatus::NoPass;
  std::optional<FxpFormat> chosen;
  bool best_effort = false;
  RangeResult range;
  std::vector<CandidateResult> candidates;
  std::vector<PruneEntry> pruning_log;
  std::vector<AuditEntry> audits;
  std::optional<CompensationParams> compensation;
  std::optional<bool> compensation_validated;
  double compensated_worst_ee = 0.0;
  int total_rollouts = 0;
  double wall_time_s = 0.0;  ///< not serialized, keeps reports byte-stable
};

struct EvalOutcome {
  bool pass = true;
  int rollouts = 0;
  double worst_ee = 0.0;
  double worst_posture = 0.0;
  std::optional<Violation> violation;
  std::optional<Violation> pruned;  ///< set when the first-decile check fired
};

/// Evaluates `states` in order, in parallel chunks, stopping at the first
/// violation. With `prune` the first `prune_fraction` of the set is checked
/// against `prune_factor` times the tolerance first.
EvalOutcome evaluate_format(std::shared_ptr<const RobotModel> model, const ControllerConfig& ctrl,
                            const std::optional<FxpFormat>& fmt, const CompensationParams* comp, const SimConfig& sim,
                            const std::vector<InitialState>& states, const SearchConstraints& c, bool early_stop,
                            bool prune, int max_rollouts);

QuantReport search(std::shared_ptr<const RobotModel> model, const ControllerConfig& ctrl, const SearchConstraints& c,
                   const SimConfig& sim);

std::string report_json(const QuantReport& r);
void write_pruning_csv(std::ostream& out, const QuantReport& r);
void print_summary(std::ostream& out, const QuantReport& r);

}  // namespace qrbd
