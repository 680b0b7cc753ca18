#pragma once

// One structured configuration with a section per module. Files may be
// partial: missing keys keep their defaults, unknown keys are rejected.

#include <filesystem>
#include <string>

#include "cmfplan/io.hpp"

namespace cmf {

struct AppConfig {
  PhantomSpec phantom;
  std::size_t train_cases = 200;
  std::size_t test_cases = 20;
  bool augment = true;
  AcmtConfig bp;
  AcmtConfig fs;
  DefnetConfig baseline;
  TrainHyper train;
  int fs_epochs = -1;  // negative: train.epochs
  std::uint64_t model_seed = 1;
  SearchOptions search;
  PlannerOptions planner;
  MaeMetric mae_metric = MaeMetric::Corresponded;
  std::size_t exact_max_n = 12;
};

/// Full-size defaults (4096 / 1024-point clouds, full-width towers, 500 epochs).
AppConfig default_config();
/// Desk scale: 256-point clouds, width / 8.
AppConfig desk_config();
AppConfig preset(const std::string& name);  // "default" or "desk"

/// Training hyperparameters for the bone-to-face model.
TrainHyper fs_train_hyper(const AppConfig& c);

Json to_json(const AppConfig& c);
/// Overlays `j` on `base`.
AppConfig config_from_json(const Json& j, const AppConfig& base = default_config());
AppConfig load_config(const std::filesystem::path& p);

}  // namespace cmf
