#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "diunet/dataset.hpp"
#include "diunet/model.hpp"
#include "diunet/train.hpp"

namespace diunet {

/// Settings for a CLI run, loadable from an INI file:
///
///   [model]  depth, base_filters, variant (dilated|baseline), dilations (1,2,3)
///   [train]  epochs, batch, lr, gamma, decay_period, seed, k, threshold
///   [data]   container, count, size, noise, target
///   [output] dir
///
/// Every key is optional; unknown sections and keys are errors so typos do
/// not silently fall back to defaults.
struct RunConfig {
  int depth = 3;
  int base_filters = 8;
  Variant variant = Variant::Dilated;
  std::vector<int> dilations{1, 2, 3};

  TrainConfig train = desk_train_defaults();

  std::filesystem::path container;
  PhantomSpec phantoms;
  std::size_t target = 64;  // preprocessing resize target

  std::filesystem::path output_dir = "diunet-out";

  /// 60 epochs, batch 16, lr 1e-3; see README for why the desk-scale lr
  /// differs from the paper's.
  static TrainConfig desk_train_defaults();

  ModelConfig model_config(std::size_t height, std::size_t width, std::size_t channels) const;
  void validate() const;
};

RunConfig parse_run_config(const std::string& ini_text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace diunet
