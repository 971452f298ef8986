#include "qrbd/hw_model.hpp"

#include <algorithm>
#include <set>

namespace qrbd {

std::string to_string(DspFamily f) { return f == DspFamily::Dsp48 ? "DSP48" : "DSP58"; }

std::string to_string(RbdFunction f) {
  switch (f) {
    case RbdFunction::Id:
      return "ID";
    case RbdFunction::Minv:
      return "Minv";
    case RbdFunction::Fd:
      return "FD";
    case RbdFunction::DeltaId:
      return "dID";
    case RbdFunction::DeltaFd:
      return "dFD";
  }
  return "?";
}

DspFamily parse_dsp_family(const std::string& s) {
  if (s == "DSP48" || s == "dsp48") return DspFamily::Dsp48;
  if (s == "DSP58" || s == "dsp58") return DspFamily::Dsp58;
  throw std::invalid_argument("unknown DSP family '" + s + "'");
}

RbdFunction parse_rbd_function(const std::string& s) {
  for (auto f : kAllFunctions) {
    if (to_string(f) == s) return f;
  }
  throw std::invalid_argument("unknown RBD function '" + s + "'");
}

DspCostTable DspCostTable::defaults() {
  DspCostTable t;
  t.cost[DspFamily::Dsp48] = {{16, 1}, {18, 1}, {24, 2}, {32, 4}};
  t.cost[DspFamily::Dsp58] = {{16, 1}, {24, 1}, {32, 2}};
  return t;
}

int DspCostTable::width_class(DspFamily family, int width) const {
  auto it = cost.find(family);
  if (it == cost.end()) return -1;
  auto w = it->second.lower_bound(width);
  return w == it->second.end() ? -1 : w->first;
}

void DspCostTable::validate() const {
  for (const auto& [family, widths] : cost) {
    int prev = 0;
    for (const auto& [w, c] : widths) {
      if (w <= 0 || c < 1) throw std::invalid_argument("DSP cost table entries must be positive");
      if (c < prev) throw std::invalid_argument("DSP cost must not decrease with width (" + to_string(family) + ")");
      prev = c;
    }
  }
}

int mac_dsp_cost(int width, DspFamily family, const DspCostTable& table) {
  auto it = table.cost.find(family);
  if (it == table.cost.end()) throw std::out_of_range("no cost table for " + to_string(family));
  auto w = it->second.find(width);
  if (w == it->second.end()) {
    throw std::out_of_range("width " + std::to_string(width) + " not in the " + to_string(family) + " cost table");
  }
  return w->second;
}

std::vector<UnitProfile> count_macs(const RobotModel& model, RbdFunction function, MinvMethod method) {
  CountingArith ar;
  const auto km = make_kernel_model(ar, model);
  const int n = model.size();
  std::vector<CountingArith::Scalar> q(static_cast<std::size_t>(n), ar.input(0.0));
  const auto qd = q, x = q;
  switch (function) {
    case RbdFunction::Id:
      rnea(ar, km, q, qd, x, nullptr, true);
      break;
    case RbdFunction::Minv:
      minv(ar, km, q, method);
      break;
    case RbdFunction::Fd:
      forward_dynamics(ar, km, q, qd, x, nullptr, method);
      break;
    case RbdFunction::DeltaId:
      id_derivatives(ar, km, q, qd, x);
      break;
    case RbdFunction::DeltaFd:
      fd_derivatives(ar, km, q, qd, x, nullptr, method);
      break;
  }
  std::vector<UnitProfile> out;
  for (const auto& [key, c] : ar.counts()) {
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), c.macs, c.divisions});
  }
  return out;
}

int divider_count(int n_backward_units, int ii_mb) {
  if (n_backward_units < 1 || ii_mb < 1) throw std::invalid_argument("divider_count needs n >= 1 and II >= 1");
  return (n_backward_units + ii_mb - 1) / ii_mb;
}

std::vector<Module> active_modules(RbdFunction f) {
  switch (f) {
    case RbdFunction::Id:
      return {Module::Rnea};
    case RbdFunction::Minv:
      return {Module::Minv};
    case RbdFunction::Fd:
      return {Module::Rnea, Module::Minv};
    case RbdFunction::DeltaId:
      return {Module::Rnea, Module::DeltaRnea};
    case RbdFunction::DeltaFd:
      return {Module::Rnea, Module::Minv, Module::DeltaRnea};
  }
  return {};
}

SharedOwners shared_owners(RbdFunction f) {
  switch (f) {
    case RbdFunction::Id:
      return {Module::Rnea, Module::Rnea};
    case RbdFunction::Minv:
    case RbdFunction::Fd:
      return {Module::DeltaRnea, Module::Minv};
    case RbdFunction::DeltaId:
    case RbdFunction::DeltaFd:
      return {Module::DeltaRnea, Module::Minv};
  }
  return {Module::Rnea, Module::Rnea};
}

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

std::int64_t units_with_work(const ModuleLoad& m) {
  return std::count_if(m.units.begin(), m.units.end(), [](const UnitLoad& u) { return u.work > 0; });
}

}  // namespace

std::int64_t ModuleLoad::dsps_for(std::int64_t ii) const {
  if (ii < 1) throw std::invalid_argument("II must be at least 1");
  std::int64_t total = 0;
  for (const auto& u : units) total += u.work > 0 ? ceil_div(u.work, ii) : 0;
  return total;
}

std::int64_t ModuleLoad::max_work() const {
  std::int64_t w = 0;
  for (const auto& u : units) w = std::max(w, u.work);
  return w;
}

std::int64_t ModuleLoad::ii_with(std::int64_t dsps) const {
  const std::int64_t hi_ii = std::max<std::int64_t>(1, max_work());
  if (dsps < dsps_for(hi_ii)) throw std::invalid_argument("too few DSPs for one per unit");
  std::int64_t lo = 1, hi = hi_ii;
  while (lo < hi) {
    const std::int64_t mid = (lo + hi) / 2;
    if (dsps_for(mid) <= dsps) hi = mid;
    else lo = mid + 1;
  }
  return lo;
}

std::map<Module, ModuleLoad> module_loads(const RobotModel& model, const FxpFormat& fmt, const HwConfig& cfg) {
  const int wclass = cfg.table.width_class(cfg.family, fmt.width());
  if (wclass < 0) {
    throw std::invalid_argument("format " + fmt.to_string() + " is wider than every " + to_string(cfg.family) +
                                " table entry");
  }
  const int cost = mac_dsp_cost(wclass, cfg.family, cfg.table);
  std::map<Module, std::map<std::pair<Pass, int>, std::int64_t>> worst;
  for (auto f : kAllFunctions) {
    const auto active = active_modules(f);
    std::map<Module, std::map<std::pair<Pass, int>, std::int64_t>> here;
    for (const auto& p : count_macs(model, f, cfg.minv_method)) {
      if (std::find(active.begin(), active.end(), p.module) == active.end()) continue;
      const Pass pass = p.pass == Pass::Divider ? Pass::Forward : p.pass;
      here[p.module][{pass, p.joint}] += p.macs;
    }
    for (const auto& [m, units] : here) {
      for (const auto& [k, macs] : units) worst[m][k] = std::max(worst[m][k], macs);
    }
  }
  std::map<Module, ModuleLoad> out;
  for (auto m : kAllModules) {
    ModuleLoad ml;
    ml.module = m;
    for (const auto& [k, macs] : worst[m]) ml.units.push_back({k.first, k.second, macs * cost});
    out[m] = std::move(ml);
  }
  return out;
}

ReuseSizing size_reuse(std::int64_t r_alone, std::int64_t r_combined, std::int64_t m, std::int64_t d) {
  ReuseSizing s;
  s.own_rnea = std::max(r_combined, r_alone - m - d);
  std::int64_t deficit = std::max<std::int64_t>(0, r_alone - s.own_rnea);
  s.shared_mr = std::min(m, deficit);
  deficit -= s.shared_mr;
  s.shared_dr = std::min(d, deficit);
  s.own_minv = m - s.shared_mr;
  s.own_drnea = d - s.shared_dr;
  return s;
}

std::int64_t minimum_budget(const std::map<Module, ModuleLoad>& loads) {
  std::int64_t total = 0;
  for (const auto& [m, l] : loads) total += units_with_work(l);
  return total;
}

namespace {

std::map<Module, std::int64_t> targets_for_cap(const std::map<Module, ModuleLoad>& loads, int cap) {
  std::map<Module, std::int64_t> t;
  for (const auto& [m, l] : loads) {
    std::int64_t ii = 1;
    for (const auto& u : l.units) {
      if (u.work > 0) ii = std::max(ii, ceil_div(u.work, std::min<std::int64_t>(cap, u.work)));
    }
    t[m] = ii;
  }
  return t;
}

std::int64_t off_total(const std::map<Module, ModuleLoad>& loads, const std::map<Module, std::int64_t>& t) {
  std::int64_t total = 0;
  for (const auto& [m, l] : loads) total += l.dsps_for(t.at(m));
  return total;
}

std::int64_t mode_ii(RbdFunction f, const std::map<Module, std::int64_t>& module_ii) {
  std::int64_t ii = 0;
  for (auto m : active_modules(f)) ii = std::max(ii, module_ii.at(m));
  return ii;
}

}  // namespace

PipelinePlan plan_pipeline(const std::map<Module, ModuleLoad>& loads, const FxpFormat& fmt, const HwConfig& cfg,
                           bool reuse) {
  cfg.table.validate();
  const std::int64_t min_budget = minimum_budget(loads);
  if (cfg.dsp_budget < min_budget) {
    throw PlanError("DSP budget " + std::to_string(cfg.dsp_budget) + " is infeasible; at least " +
                        std::to_string(min_budget) + " DSPs are needed",
                    min_budget);
  }
  PipelinePlan plan;
  plan.reuse = reuse;
  plan.format = fmt;
  plan.family = cfg.family;
  plan.cost_per_mac = mac_dsp_cost(cfg.table.width_class(cfg.family, fmt.width()), cfg.family, cfg.table);

  int cap = std::max(1, cfg.unit_dsp_cap);
  while (cap > 1 && off_total(loads, targets_for_cap(loads, cap)) > cfg.dsp_budget) --cap;
  plan.effective_cap = cap;
  plan.target_ii = targets_for_cap(loads, cap);

  std::map<Module, std::int64_t> full;
  for (const auto& [m, l] : loads) full[m] = l.dsps_for(plan.target_ii.at(m));

  std::map<RbdFunction, std::int64_t> off_ii;
  for (auto f : kAllFunctions) off_ii[f] = mode_ii(f, plan.target_ii);

  if (!reuse) {
    plan.own_dsps = full;
  } else {
    std::int64_t r_combined = 1;
    for (auto f : kAllFunctions) {
      const auto act = active_modules(f);
      if (act.size() < 2 || std::find(act.begin(), act.end(), Module::Rnea) == act.end()) continue;
      r_combined = std::max(r_combined, loads.at(Module::Rnea).dsps_for(off_ii[f]));
    }
    const auto s = size_reuse(full[Module::Rnea], r_combined, full[Module::Minv], full[Module::DeltaRnea]);
    plan.own_dsps = {{Module::Rnea, s.own_rnea}, {Module::Minv, s.own_minv}, {Module::DeltaRnea, s.own_drnea}};
    plan.shared_dr = s.shared_dr;
    plan.shared_mr = s.shared_mr;
  }
  plan.total_dsps = plan.shared_dr + plan.shared_mr;
  for (const auto& [m, d] : plan.own_dsps) plan.total_dsps += d;

  for (auto f : kAllFunctions) {
    ModeSchedule ms;
    ms.function = f;
    ms.owners = shared_owners(f);
    for (auto m : active_modules(f)) {
      std::int64_t avail = plan.own_dsps.at(m);
      if (ms.owners.dr == m) avail += plan.shared_dr;
      if (ms.owners.mr == m) avail += plan.shared_mr;
      ms.module_dsps[m] = avail;
      ms.module_ii[m] = loads.at(m).ii_with(avail);
    }
    ms.ii = mode_ii(f, ms.module_ii);
    plan.modes[f] = ms;
  }

  int mb_units = 0;
  for (const auto& u : loads.at(Module::Minv).units) {
    if (u.pass == Pass::Backward && u.work > 0) ++mb_units;
  }
  plan.minv_backward_units = std::max(1, mb_units);
  plan.dividers = cfg.minv_method == MinvMethod::Deferred
                      ? divider_count(plan.minv_backward_units, static_cast<int>(plan.target_ii.at(Module::Minv)))
                      : plan.minv_backward_units;
  return plan;
}

PipelinePlan plan_pipeline(const RobotModel& model, const FxpFormat& fmt, const HwConfig& cfg, bool reuse) {
  return plan_pipeline(module_loads(model, fmt, cfg), fmt, cfg, reuse);
}

namespace {

// Per-unit latency of a module given the DSPs it holds in some mode.
std::map<std::pair<Pass, int>, std::int64_t> unit_latencies(const ModuleLoad& load, std::int64_t dsps,
                                                            const HwConfig& cfg) {
  const std::int64_t ii = load.ii_with(dsps);
  std::map<std::pair<Pass, int>, std::int64_t> out;
  for (const auto& u : load.units) {
    const std::int64_t unit_ii = u.work > 0 ? ceil_div(u.work, ceil_div(u.work, ii)) : 0;
    out[{u.pass, u.joint}] = cfg.stage_depth + std::max<std::int64_t>(0, unit_ii - 1);
  }
  return out;
}

// Longest root-to-leaf path of forward stages followed by the same path backward,
// with `per_backward` extra cycles in every backward stage.
std::int64_t path_latency(const RobotModel& model, const std::map<std::pair<Pass, int>, std::int64_t>& lat,
                          std::int64_t per_backward) {
  auto get = [&](Pass p, int j) {
    auto it = lat.find({p, j});
    return it == lat.end() ? std::int64_t{0} : it->second;
  };
  std::int64_t best = 0;
  for (int leaf = 0; leaf < model.size(); ++leaf) {
    if (!model.children(leaf).empty()) continue;
    std::int64_t sum = 0;
    for (int j = leaf; j >= 0; j = model.parent(j)) {
      sum += get(Pass::Forward, j) + get(Pass::Backward, j) + per_backward;
    }
    best = std::max(best, sum);
  }
  return best;
}

}  // namespace

std::int64_t minv_latency_cycles(const PipelinePlan& plan, const ModuleLoad& minv, const RobotModel& model,
                                 const HwConfig& cfg, MinvMethod method) {
  const auto lat = unit_latencies(minv, plan.modes.at(RbdFunction::Minv).module_dsps.at(Module::Minv), cfg);
  if (method == MinvMethod::Original) return path_latency(model, lat, cfg.divider_depth);
  return path_latency(model, lat, 0) + cfg.fifo_depth + cfg.divider_depth;
}

std::map<RbdFunction, FunctionPerf> estimate_perf(const PipelinePlan& plan, const std::map<Module, ModuleLoad>& loads,
                                                  const RobotModel& model, const HwConfig& cfg) {
  std::map<RbdFunction, FunctionPerf> out;
  for (auto f : kAllFunctions) {
    const ModeSchedule& ms = plan.modes.at(f);
    std::map<Module, std::int64_t> lat;
    for (const auto& [m, dsps] : ms.module_dsps) {
      const auto units = unit_latencies(loads.at(m), dsps, cfg);
      if (m == Module::Minv) {
        lat[m] = cfg.minv_method == MinvMethod::Original
                     ? path_latency(model, units, cfg.divider_depth)
                     : path_latency(model, units, 0) + cfg.fifo_depth + cfg.divider_depth;
      } else {
        lat[m] = path_latency(model, units, 0);
      }
    }
    std::int64_t cycles = 0;
    switch (f) {
      case RbdFunction::Id:
        cycles = lat[Module::Rnea];
        break;
      case RbdFunction::Minv:
        cycles = lat[Module::Minv];
        break;
      case RbdFunction::Fd:
        cycles = std::max(lat[Module::Rnea], lat[Module::Minv]);
        break;
      case RbdFunction::DeltaId:
        cycles = lat[Module::Rnea] + lat[Module::DeltaRnea];
        break;
      case RbdFunction::DeltaFd:
        cycles = std::max(lat[Module::Rnea], lat[Module::Minv]) + lat[Module::Rnea] + lat[Module::DeltaRnea];
        break;
    }
    FunctionPerf p;
    p.ii_cycles = ms.ii;
    p.latency_cycles = cycles;
    p.latency_s = static_cast<double>(cycles) / cfg.clock_hz;
    p.throughput = cfg.clock_hz / static_cast<double>(ms.ii);
    out[f] = p;
  }
  return out;
}

ControlRateEstimate control_rate(const FunctionPerf& delta_fd, int horizon, int iterations) {
  if (horizon < 1 || iterations < 1) throw std::invalid_argument("control_rate needs horizon >= 1 and iterations >= 1");
  ControlRateEstimate e;
  e.horizon = horizon;
  e.iterations = iterations;
  e.rate_hz = 1.0 / (iterations * (delta_fd.latency_s + (horizon - 1) / delta_fd.throughput));
  return e;
}

}  // namespace qrbd
