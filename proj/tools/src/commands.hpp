#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "diunet/run_config.hpp"

namespace diunet::cli {

/// Flags shared by the commands that build or train a model. Unset flags
/// leave the config-file (or default) value alone.
struct Overrides {
  std::optional<int> depth;
  std::optional<int> base_filters;
  std::optional<std::string> variant;
  std::optional<int> epochs;
  std::optional<int> batch;
  std::optional<double> lr;
  std::optional<double> gamma;
  std::optional<std::uint64_t> seed;
  std::optional<int> folds;

  void apply(RunConfig& cfg) const;
};

RunConfig load_config(const std::string& path, const Overrides& overrides);

struct GenerateArgs {
  std::size_t count = 200;
  std::size_t size = 64;
  std::uint64_t seed = 42;
  double noise = 0.05;
  std::filesystem::path out;
};
int cmd_generate(const GenerateArgs& args);

struct PreprocessArgs {
  std::filesystem::path data;
  std::filesystem::path out;
  std::size_t target = 64;
};
int cmd_preprocess(const PreprocessArgs& args);

struct TrainArgs {
  std::string config;
  Overrides overrides;
  std::filesystem::path data;
  std::filesystem::path out_model;
  std::filesystem::path history_csv;
  int fold = -1;  // -1: train on every sample
};
int cmd_train(const TrainArgs& args);

struct EvaluateArgs {
  std::filesystem::path model;
  std::filesystem::path data;
  std::filesystem::path report_csv;
  double threshold = 0.5;
};
int cmd_evaluate(const EvaluateArgs& args);

struct SegmentArgs {
  std::filesystem::path model;
  std::filesystem::path data;
  std::filesystem::path out_dir;
  double threshold = 0.5;
};
int cmd_segment(const SegmentArgs& args);

struct StatsArgs {
  std::filesystem::path reports_a;
  std::filesystem::path reports_b;
  std::filesystem::path out;
  double alpha = 0.05;
};
int cmd_stats(const StatsArgs& args);

struct GradcheckArgs {
  int depth = 2;
  int base_filters = 2;
  int size = 16;
  int batch = 2;
  std::size_t coordinates = 100;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
  std::string variant = "dilated";
};
int cmd_gradcheck(const GradcheckArgs& args);

struct ParamcountArgs {
  std::string config;
  Overrides overrides;
  std::string preset;  // "", "desk" or "paper"
  int size = 0;        // 0: preset or config default
};
int cmd_paramcount(const ParamcountArgs& args);

struct ReproArgs {
  std::string config;
  Overrides overrides;
  std::filesystem::path out_dir;
  std::optional<std::size_t> count;
  bool quiet = false;
};
int cmd_repro(const ReproArgs& args);

}  // namespace diunet::cli
