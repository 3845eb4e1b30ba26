#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "diunet/dataset.hpp"
#include "diunet/metrics.hpp"
#include "diunet/model.hpp"
#include "diunet/stats.hpp"

namespace diunet {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct OptimizerState {
  AdamHyper hyper;
  std::map<std::string, Tensor<T>> m;
  std::map<std::string, Tensor<T>> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every parameter. Parameters without a
/// gradient entry are treated as having a zero gradient. A non-finite
/// gradient aborts before anything is modified; the error names the
/// parameter.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, const Gradients<T>& grads,
               OptimizerState<T>& state, double lr);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double base_lr = 1e-4;
  double gamma = 0.9;     // multiplicative decay applied every `decay_period` epochs
  int decay_period = 10;
  std::uint64_t seed = 42;
  int folds = 10;
  double threshold = kDefaultThreshold;
  /// Record validation Dice in the history every epoch (costs one
  /// inference pass over the validation split).
  bool track_validation = true;

  void validate() const;
};

/// base_lr * gamma^floor(epoch / decay_period)
double lr_at_epoch(int epoch, const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  // Mean validation Dice per network output channel; NaN without a
  // validation split.
  double dice_label1 = 0.0;
  double dice_label2 = 0.0;
  double dice_label4 = 0.0;
  double lr = 0.0;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Sets the model's input normalisation from the training split, then runs
/// `config.epochs` epochs of mini-batch Adam on the Dice loss. Each epoch
/// visits the training ids in a fresh seeded order; the last batch may be
/// short.
std::vector<EpochRecord> train_model(Model<float>& model, const Dataset& data,
                                     const Fold& split, const TrainConfig& config,
                                     const ProgressFn& progress = {});

/// Network input batch of the listed samples, raw (un-normalised).
Tensor<float> gather_images(const Dataset& data, std::span<const std::size_t> ids);
/// (B, N, M, 3) targets in the network's channel order.
Tensor<float> gather_targets(const Dataset& data, std::span<const std::size_t> ids);

/// Inference over the listed samples in batches.
Tensor<float> predict_batched(Model<float>& model, const Dataset& data,
                              std::span<const std::size_t> ids, std::size_t batch = 16);

/// Per-image WT/TC/ET Dice of thresholded predictions.
std::vector<SubRegionDice> evaluate_model(Model<float>& model, const Dataset& data,
                                          std::span<const std::size_t> ids,
                                          double threshold = kDefaultThreshold);

struct FoldResult {
  FoldReport report;
  std::vector<std::size_t> validation_ids;
  std::vector<SubRegionDice> per_image;
  std::vector<EpochRecord> history;
};

/// k-fold protocol: one fresh model per fold (model and training seeds are
/// config.seed + fold), each evaluated on its own validation subset. Folds
/// run on up to `threads` workers; results do not depend on scheduling.
std::vector<FoldResult> cross_validate(const Dataset& data, const ModelConfig& model_config,
                                       const TrainConfig& config, unsigned threads,
                                       const ProgressFn& progress = {});

extern template void adam_step(std::span<Parameter<float>* const>, const Gradients<float>&,
                               OptimizerState<float>&, double);
extern template void adam_step(std::span<Parameter<double>* const>, const Gradients<double>&,
                               OptimizerState<double>&, double);

}  // namespace diunet
