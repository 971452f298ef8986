#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrbd/arith.hpp"
#include "qrbd/fixed_point.hpp"
#include "qrbd/kernels.hpp"
#include "qrbd/robot_model.hpp"

namespace qrbd {

enum class DspFamily { Dsp48, Dsp58 };
enum class RbdFunction { Id, Minv, Fd, DeltaId, DeltaFd };

inline constexpr std::array<RbdFunction, 5> kAllFunctions{RbdFunction::Id, RbdFunction::Minv, RbdFunction::Fd,
                                                           RbdFunction::DeltaId, RbdFunction::DeltaFd};
inline constexpr std::array<Module, 3> kAllModules{Module::Rnea, Module::Minv, Module::DeltaRnea};

std::string to_string(DspFamily f);
std::string to_string(RbdFunction f);
DspFamily parse_dsp_family(const std::string& s);
RbdFunction parse_rbd_function(const std::string& s);

class PlanError : public std::runtime_error {
 public:
  PlanError(const std::string& what, std::int64_t minimum_budget)
      : std::runtime_error(what), minimum_budget_(minimum_budget) {}
  std::int64_t minimum_budget() const { return minimum_budget_; }

 private:
  std::int64_t minimum_budget_;
};

/// DSP primitives consumed by one MAC, per operand width and family.
struct DspCostTable {
  std::map<DspFamily, std::map<int, int>> cost;

  static DspCostTable defaults();
  /// Smallest tabulated width that holds `width` bits, or -1.
  int width_class(DspFamily family, int width) const;
  void validate() const;
};

int mac_dsp_cost(int width, DspFamily family, const DspCostTable& table = DspCostTable::defaults());

struct UnitProfile {
  Module module = Module::Rnea;
  Pass pass = Pass::Forward;
  int joint = 0;
  std::int64_t macs = 0;
  std::int64_t divisions = 0;
};

std::vector<UnitProfile> count_macs(const RobotModel& model, RbdFunction function,
                                    MinvMethod method = MinvMethod::Deferred);

int divider_count(int n_backward_units, int ii_mb);

/// Modules active for each function; shared-group owners per mode.
std::vector<Module> active_modules(RbdFunction f);
struct SharedOwners {
  Module dr;  ///< owner of the group shared between RNEA and dRNEA
  Module mr;  ///< owner of the group shared between RNEA and Minv
};
SharedOwners shared_owners(RbdFunction f);

struct HwConfig {
  DspFamily family = DspFamily::Dsp58;
  DspCostTable table = DspCostTable::defaults();
  std::int64_t dsp_budget = 10848;
  int unit_dsp_cap = 128;  ///< most DSPs a single pipeline unit may own
  int stage_depth = 4;  ///< fixed pipeline depth of one unit, cycles
  int divider_depth = 20;
  int fifo_depth = 2;
  double clock_hz = 228e6;
  MinvMethod minv_method = MinvMethod::Deferred;
};

struct UnitLoad {
  Pass pass = Pass::Forward;
  int joint = 0;
  std::int64_t work = 0;  ///< DSP-cycles per task (MACs times cost per MAC)
};

struct ModuleLoad {
  Module module = Module::Rnea;
  std::vector<UnitLoad> units;
  /// Fewest DSPs such that every unit finishes within `ii` cycles.
  std::int64_t dsps_for(std::int64_t ii) const;
  /// Smallest II reachable with `dsps` (dsps >= number of units).
  std::int64_t ii_with(std::int64_t dsps) const;
  std::int64_t max_work() const;
};

/// Per-module unit loads, each unit provisioned for its heaviest mode.
std::map<Module, ModuleLoad> module_loads(const RobotModel& model, const FxpFormat& fmt, const HwConfig& cfg);

struct ModeSchedule {
  RbdFunction function = RbdFunction::Id;
  std::int64_t ii = 0;
  std::map<Module, std::int64_t> module_ii;
  std::map<Module, std::int64_t> module_dsps;
  SharedOwners owners{Module::Rnea, Module::Rnea};
};

struct PipelinePlan {
  bool reuse = false;
  FxpFormat format{12, 12};
  DspFamily family = DspFamily::Dsp58;
  int cost_per_mac = 1;
  int effective_cap = 0;
  std::map<Module, std::int64_t> own_dsps;
  std::int64_t shared_dr = 0;
  std::int64_t shared_mr = 0;
  std::map<Module, std::int64_t> target_ii;
  std::map<RbdFunction, ModeSchedule> modes;
  int dividers = 0;
  int minv_backward_units = 0;
  std::int64_t total_dsps = 0;
};

struct ReuseSizing {
  std::int64_t own_rnea = 0;
  std::int64_t own_minv = 0;
  std::int64_t own_drnea = 0;
  std::int64_t shared_dr = 0;
  std::int64_t shared_mr = 0;
  std::int64_t total() const { return own_rnea + own_minv + own_drnea + shared_dr + shared_mr; }
};

/// Minimal shared-group sizing. `r_alone` is what RNEA needs when it runs by
/// itself, `r_combined` what it needs next to the slower modules, and `m`,
/// `d` the full Minv and dRNEA requirements.
ReuseSizing size_reuse(std::int64_t r_alone, std::int64_t r_combined, std::int64_t m, std::int64_t d);

PipelinePlan plan_pipeline(const std::map<Module, ModuleLoad>& loads, const FxpFormat& fmt, const HwConfig& cfg,
                           bool reuse);
PipelinePlan plan_pipeline(const RobotModel& model, const FxpFormat& fmt, const HwConfig& cfg, bool reuse);

/// Fewest DSPs any plan for these loads can use (one per unit).
std::int64_t minimum_budget(const std::map<Module, ModuleLoad>& loads);

struct FunctionPerf {
  std::int64_t ii_cycles = 0;
  std::int64_t latency_cycles = 0;
  double latency_s = 0.0;
  double throughput = 0.0;  ///< tasks per second
};

std::map<RbdFunction, FunctionPerf> estimate_perf(const PipelinePlan& plan, const std::map<Module, ModuleLoad>& loads,
                                                  const RobotModel& model, const HwConfig& cfg);

/// Latency in cycles of the Minv module alone for the given division scheme.
std::int64_t minv_latency_cycles(const PipelinePlan& plan, const ModuleLoad& minv, const RobotModel& model,
                                 const HwConfig& cfg, MinvMethod method);

struct ControlRateEstimate {
  int horizon = 1;
  int iterations = 10;
  double rate_hz = 0.0;
};

ControlRateEstimate control_rate(const FunctionPerf& delta_fd, int horizon, int iterations);

}  // namespace qrbd
