#pragma once

#include "nilmgp/features.hpp"
#include "nilmgp/sparse_gp.hpp"

#include <filesystem>
#include <string>

namespace nilmgp {

/// A fitted model together with the feature pipeline that feeds it.
struct TrainedModel {
  ModelVariant variant = ModelVariant::Point;
  WindowConfig window;
  std::string target;
  TrainConfig train_config;  // the grid cell that was selected
  SparseGPModel gp;
};

/// JSON text; doubles are written with round-trip precision so a reloaded
/// model predicts bit-for-bit what the original did.
std::string model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const std::string& text);

void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace nilmgp
