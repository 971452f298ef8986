#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct Sandbox {
  fs::path dir;
  Sandbox() {
    dir = fs::temp_directory_path() / ("qrbd_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }

  fs::path write(const std::string& name, const std::string& text) const {
    const auto p = dir / name;
    std::ofstream(p) << text;
    return p;
  }
};

struct Result {
  int code = -1;
  std::string err;
};

Result run(const Sandbox& box, const std::string& args) {
  const auto err = box.dir / "stderr.txt";
  const std::string cmd = std::string(QRBD_CLI_PATH) + " " + args + " > " + (box.dir / "stdout.txt").string() +
                          " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream f(err);
  std::stringstream ss;
  ss << f.rdbuf();
  r.err = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string pendulum_search(const std::string& tolerance) {
  return R"({
  "robot": ")" + oracle::robot_path("pendulum.urdf") + R"(",
  "controller": { "kind": "pid" },
  "sim": { "steps": 200 },
  "search": { "mode": "unconstrained", "n_int": 5, "frac_min": 4, "frac_max": 10,
              "tolerance_m": )" + tolerance + R"(, "evaluations": 4, "budget_per_candidate": 4,
              "compensation_samples": 100 }
})";
}

std::string plan_config(const std::string& robot, long budget) {
  return R"({ "robot": ")" + robot + R"(", "plan": { "dsp_budget": )" + std::to_string(budget) + " } }";
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("missing robot file is an input error") {
    Sandbox box;
    const auto cfg = box.write("c.json", plan_config((box.dir / "nope.urdf").string(), 10848));
    const auto r = run(box, "plan --config " + cfg.string() + " --out " + (box.dir / "out").string());
    CHECK(r.code == 1);
    CHECK(r.err.find("nope.urdf") != std::string::npos);
  }

  TEST_CASE("negative mass is an input error") {
    Sandbox box;
    std::string urdf = slurp(oracle::robot_path("pendulum.urdf"));
    const auto at = urdf.find("<mass value=\"1.0\"/>");
    REQUIRE(at != std::string::npos);
    urdf.replace(at, 20, "<mass value=\"-1.0\"/>");
    const auto robot = box.write("bad.urdf", urdf);
    const auto cfg = box.write("c.json", plan_config(robot.string(), 10848));
    const auto r = run(box, "verify --config " + cfg.string() + " --out " + (box.dir / "out").string());
    CHECK(r.code == 1);
    CHECK(r.err.find("mass") != std::string::npos);
  }

  TEST_CASE("infeasible budget reports the minimum") {
    Sandbox box;
    const auto cfg = box.write("c.json", plan_config(oracle::robot_path("iiwa14.urdf"), 0));
    const auto r = run(box, "plan --config " + cfg.string() + " --out " + (box.dir / "out").string());
    CHECK(r.code == 2);
    CHECK(r.err.find("minimum feasible budget") != std::string::npos);
  }

  TEST_CASE("unknown and conflicting fields are named") {
    Sandbox box;
    auto cfg = box.write("c.json", R"({ "robot": ")" + oracle::robot_path("iiwa14.urdf") +
                                       R"(", "sim": { "stpes": 10 } })");
    auto r = run(box, "verify --config " + cfg.string());
    CHECK(r.code == 1);
    CHECK(r.err.find("stpes") != std::string::npos);

    cfg = box.write("d.json", R"({ "robot": ")" + oracle::robot_path("iiwa14.urdf") +
                                  R"(", "sim": { "dt": -1 } })");
    r = run(box, "rollout --config " + cfg.string());
    CHECK(r.code == 1);
    CHECK(r.err.find("dt") != std::string::npos);

    r = run(box, "plan");
    CHECK(r.code == 1);
    r = run(box, "verify --config " + (box.dir / "absent.json").string());
    CHECK(r.code == 1);
  }

  TEST_CASE("infinite tolerance search succeeds and writes its artifacts") {
    Sandbox box;
    const auto cfg = box.write("c.json", pendulum_search("\"inf\""));
    const auto out = box.dir / "out";
    const auto r = run(box, "quantize-search --config " + cfg.string() + " --out " + out.string());
    CHECK(r.code == 0);
    const auto report = nlohmann::json::parse(slurp(out / "report.json"));
    CHECK(report["status"] == "found");
    CHECK(report["chosen"]["name"] == "Q5.4");
    CHECK(fs::exists(out / "pruning_log.csv"));
    CHECK(fs::exists(out / "compensation.json"));
  }

  TEST_CASE("no passing format exits with a domain failure") {
    Sandbox box;
    const auto cfg = box.write("c.json", pendulum_search("1e-12"));
    const auto r = run(box, "quantize-search --config " + cfg.string() + " --out " + (box.dir / "out").string());
    CHECK(r.code == 2);
    const auto report = nlohmann::json::parse(slurp(box.dir / "out" / "report.json"));
    CHECK(report["status"] == "no-pass");
    CHECK(report["best_effort"] == true);
  }

  TEST_CASE("reruns with the same seed are byte identical") {
    Sandbox box;
    const auto search_cfg = box.write("s.json", pendulum_search("2e-4"));
    const auto plan_cfg = box.write("p.json", plan_config(oracle::robot_path("iiwa14.urdf"), 10848));
    const auto roll_cfg = box.write("r.json", R"({ "robot": ")" + oracle::robot_path("iiwa14.urdf") +
                                                  R"(", "format": { "n_int": 12, "n_frac": 12 },
      "compensation": { "samples": 100 }, "sim": { "steps": 200 } })");
    for (const auto& [cmd, cfg, files] :
         {std::tuple{"quantize-search", search_cfg, std::vector<std::string>{"report.json", "pruning_log.csv",
                                                                              "compensation.json"}},
          std::tuple{"plan", plan_cfg, std::vector<std::string>{"plan.json", "sweep.csv"}},
          std::tuple{"rollout", roll_cfg,
                     std::vector<std::string>{"trajectory.csv", "error_stats.json", "compensation.json"}}}) {
      const auto a = box.dir / (std::string(cmd) + "_a"), b = box.dir / (std::string(cmd) + "_b");
      REQUIRE(run(box, std::string(cmd) + " --config " + cfg.string() + " --seed 5 --out " + a.string()).code == 0);
      REQUIRE(run(box, std::string(cmd) + " --config " + cfg.string() + " --seed 5 --out " + b.string()).code == 0);
      for (const auto& f : files) {
        INFO(std::string(cmd) << " " << f);
        REQUIRE(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
      }
    }
    const auto c = box.dir / "rollout_c";
    REQUIRE(run(box, "rollout --config " + roll_cfg.string() + " --seed 6 --out " + c.string()).code == 0);
    CHECK(slurp(c / "trajectory.csv") != slurp(box.dir / "rollout_a" / "trajectory.csv"));
  }
}
