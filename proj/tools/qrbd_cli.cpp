#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "json.hpp"
#include "qrbd/config.hpp"
#include "qrbd/hw_model.hpp"
#include "qrbd/icms.hpp"
#include "qrbd/quant_search.hpp"
#include "qrbd/verify.hpp"

namespace fs = std::filesystem;
using namespace qrbd;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kDomainError = 2;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig load(const Options& o) {
  RunConfig c = RunConfig::load(o.config);
  if (o.seed) c.apply_seed(*o.seed);
  if (!o.out.empty()) c.output_dir = o.out;
  fs::create_directories(c.output_dir);
  return c;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
  if (!text.empty() && text.back() != '\n') f << '\n';
}

int cmd_search(const Options& o) {
  const RunConfig c = load(o);
  if (!c.search) throw ConfigError("search", "quantize-search needs a search section");
  const auto model = c.load_robot();
  const QuantReport r = search(model, c.controller, *c.search, c.sim);
  const fs::path out(c.output_dir);
  write_file(out / "report.json", report_json(r));
  std::ofstream csv(out / "pruning_log.csv", std::ios::binary);
  write_pruning_csv(csv, r);
  if (r.compensation) write_file(out / "compensation.json", compensation_json(*r.compensation));
  print_summary(std::cout, r);
  return r.status == SearchStatus::Found ? kOk : kDomainError;
}

int cmd_verify(const Options& o) {
  const RunConfig c = load(o);
  const auto model = c.load_robot();
  const VerifyReport r = run_verification(*model, c.verify);
  write_file(fs::path(c.output_dir) / "verify.json", verify_json(r));
  for (const auto& k : r.checks) {
    std::cout << std::left << std::setw(22) << k.name << (k.pass ? "pass  " : "FAIL  ") << k.value;
    if (!k.detail.empty()) std::cout << "  (" << k.detail << ")";
    std::cout << '\n';
  }
  return r.all_pass() ? kOk : kDomainError;
}

nlohmann::json perf_json(const std::map<RbdFunction, FunctionPerf>& perf) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [f, p] : perf) {
    j[to_string(f)] = {{"ii_cycles", p.ii_cycles},
                       {"latency_cycles", p.latency_cycles},
                       {"latency_s", p.latency_s},
                       {"throughput_per_s", p.throughput}};
  }
  return j;
}

nlohmann::json plan_json(const PipelinePlan& p) {
  nlohmann::json own = nlohmann::json::object(), ii = nlohmann::json::object(), modes = nlohmann::json::object();
  for (const auto& [m, d] : p.own_dsps) own[to_string(m)] = d;
  for (const auto& [m, t] : p.target_ii) ii[to_string(m)] = t;
  for (const auto& [f, s] : p.modes) {
    nlohmann::json mii = nlohmann::json::object(), md = nlohmann::json::object();
    for (const auto& [m, t] : s.module_ii) mii[to_string(m)] = t;
    for (const auto& [m, d] : s.module_dsps) md[to_string(m)] = d;
    modes[to_string(f)] = {{"ii", s.ii},
                           {"module_ii", mii},
                           {"module_dsps", md},
                           {"dr_owner", to_string(s.owners.dr)},
                           {"mr_owner", to_string(s.owners.mr)}};
  }
  return {{"reuse", p.reuse},
          {"format", p.format.to_string()},
          {"family", to_string(p.family)},
          {"dsps_per_mac", p.cost_per_mac},
          {"unit_dsp_cap", p.effective_cap},
          {"own_dsps", own},
          {"shared_dr", p.shared_dr},
          {"shared_mr", p.shared_mr},
          {"target_ii", ii},
          {"modes", modes},
          {"dividers", p.dividers},
          {"minv_backward_units", p.minv_backward_units},
          {"total_dsps", p.total_dsps}};
}

int cmd_plan(const Options& o) {
  const RunConfig c = load(o);
  const auto model = c.load_robot();
  const FxpFormat fmt = c.plan.format ? *c.plan.format : c.format ? *c.format : FxpFormat{12, 12};
  const HwConfig& hw = c.plan.hw;
  try {
    const auto loads = module_loads(*model, fmt, hw);
    const PipelinePlan off = plan_pipeline(loads, fmt, hw, false);
    const PipelinePlan on = plan_pipeline(loads, fmt, hw, true);
    HwConfig orig_cfg = hw;
    orig_cfg.minv_method = MinvMethod::Original;
    HwConfig def_cfg = hw;
    def_cfg.minv_method = MinvMethod::Deferred;
    const auto orig_loads = module_loads(*model, fmt, orig_cfg);
    const auto def_loads = module_loads(*model, fmt, def_cfg);

    nlohmann::json j;
    j["robot"] = model->name();
    j["format"] = fmt.to_string();
    j["dsp_budget"] = hw.dsp_budget;
    j["reuse_off"] = plan_json(off);
    j["reuse_off"]["perf"] = perf_json(estimate_perf(off, loads, *model, hw));
    j["reuse_on"] = plan_json(on);
    j["reuse_on"]["perf"] = perf_json(estimate_perf(on, loads, *model, hw));
    j["reuse_savings_fraction"] = 1.0 - static_cast<double>(on.total_dsps) / static_cast<double>(off.total_dsps);
    const PipelinePlan orig_plan = plan_pipeline(orig_loads, fmt, orig_cfg, false);
    const PipelinePlan def_plan = plan_pipeline(def_loads, fmt, def_cfg, false);
    const auto lo = minv_latency_cycles(orig_plan, orig_loads.at(Module::Minv), *model, orig_cfg, MinvMethod::Original);
    const auto ld = minv_latency_cycles(def_plan, def_loads.at(Module::Minv), *model, def_cfg, MinvMethod::Deferred);
    j["minv_latency_cycles"] = {{"original", lo}, {"deferred", ld}, {"speedup", static_cast<double>(lo) / ld}};
    write_file(fs::path(c.output_dir) / "plan.json", j.dump(2));

    std::ofstream sweep(fs::path(c.output_dir) / "sweep.csv", std::ios::binary);
    sweep << "horizon,reuse,minv_method,iterations,rate_hz\n" << std::setprecision(17);
    for (const auto& [name, cfg, ld_] :
         {std::tuple{"deferred", def_cfg, &def_loads}, std::tuple{"original", orig_cfg, &orig_loads}}) {
      for (bool reuse : {false, true}) {
        const PipelinePlan p = plan_pipeline(*ld_, fmt, cfg, reuse);
        const auto perf = estimate_perf(p, *ld_, *model, cfg);
        for (int h : c.plan.horizons) {
          const auto rate = control_rate(perf.at(RbdFunction::DeltaFd), h, c.plan.iterations);
          sweep << h << ',' << (reuse ? "on" : "off") << ',' << name << ',' << c.plan.iterations << ','
                << rate.rate_hz << '\n';
        }
      }
    }
    std::cout << "reuse off: " << off.total_dsps << " DSPs, reuse on: " << on.total_dsps << " DSPs ("
              << std::setprecision(3) << 100.0 * j["reuse_savings_fraction"].get<double>() << "% saved)\n"
              << "Minv latency: original " << lo << " cycles, deferred " << ld << " cycles\n";
  } catch (const PlanError& e) {
    std::cerr << "infeasible plan: " << e.what() << "\nminimum feasible budget: " << e.minimum_budget() << " DSPs\n";
    return kDomainError;
  }
  return kOk;
}

int cmd_rollout(const Options& o) {
  const RunConfig c = load(o);
  const auto model = c.load_robot();
  std::optional<CompensationParams> comp;
  if (c.compensation && c.format) {
    comp = fit_compensation(model, c.format, c.compensation->samples, c.seed + 7919, c.compensation->full_matrix);
  }
  const TrajectoryPair pair = rollout_pair(model, c.controller, c.format, comp ? &*comp : nullptr, c.sim);
  const fs::path out(c.output_dir);
  std::ofstream csv(out / "trajectory.csv", std::ios::binary);
  write_trajectory_csv(csv, pair);
  if (c.format) {
    const ErrorStats st = analyze_errors({pair}, model, *c.format, 200, c.seed);
    write_file(out / "error_stats.json", error_stats_json(st));
    std::cout << "max end-effector error " << st.max_ee_error * 1e3 << " mm, rms " << st.rms_ee_error * 1e3
              << " mm\n";
  } else {
    std::cout << "no format given: both runs use double precision\n";
  }
  if (comp) write_file(out / "compensation.json", compensation_json(*comp));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qrbd: fixed-point rigid body dynamics toolkit"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "run configuration (JSON)")->required();
    sub->add_option("--seed", opt.seed, "overrides the config seed");
    sub->add_option("--out", opt.out, "output directory (overrides the config)");
  };
  auto* s_search = app.add_subcommand("quantize-search", "search for the cheapest passing fixed-point format");
  auto* s_verify = app.add_subcommand("verify", "run the kernel property suite");
  auto* s_plan = app.add_subcommand("plan", "size the accelerator pipeline and sweep control rates");
  auto* s_rollout = app.add_subcommand("rollout", "export one float/quantized trajectory pair");
  for (auto* s : {s_search, s_verify, s_plan, s_rollout}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (*s_search) return cmd_search(opt);
    if (*s_verify) return cmd_verify(opt);
    if (*s_plan) return cmd_plan(opt);
    if (*s_rollout) return cmd_rollout(opt);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ModelError& e) {
    std::cerr << "error: robot model: " << e.what() << '\n';
    return kConfigError;
  } catch (const FxpFormatMismatch& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return kDomainError;
  }
  return kOk;
}
