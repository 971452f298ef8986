#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrbd/hw_model.hpp"
#include "qrbd/icms.hpp"
#include "qrbd/quant_search.hpp"
#include "qrbd/verify.hpp"

namespace qrbd {

/// Input error; the message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error("config field '" + field + "': " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct CompensationRequest {
  int samples = 500;
  bool full_matrix = false;
};

struct PlanOptions {
  HwConfig hw;
  std::optional<FxpFormat> format;  ///< defaults to the run format, else Q12.12
  std::vector<int> horizons{1, 2, 5, 10, 20, 50, 100};
  int iterations = 10;
};

struct RunConfig {
  std::string robot_path;  ///< resolved against the config file's directory
  std::string end_effector;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  ControllerConfig controller;
  std::optional<FxpFormat> format;
  std::optional<SearchConstraints> search;
  std::optional<CompensationRequest> compensation;
  SimConfig sim;
  PlanOptions plan;
  VerifyConfig verify;

  /// Loads and validates; throws ConfigError or ModelError.
  static RunConfig load(const std::string& path);
  static RunConfig parse(const std::string& text, const std::string& base_dir = ".");

  std::shared_ptr<const RobotModel> load_robot() const;
  void apply_seed(std::uint64_t s);
};

}  // namespace qrbd
