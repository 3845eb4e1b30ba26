#include "diunet/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "diunet/io_util.hpp"
#include "diunet/layers.hpp"
#include "diunet/preprocess.hpp"

namespace diunet {

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, const Gradients<T>& grads,
               OptimizerState<T>& state, double lr) {
  for (const Parameter<T>* p : params) {
    auto it = grads.find(p->name);
    if (it == grads.end()) continue;
    if (it->second.shape() != p->value.shape()) {
      throw DimensionError("gradient for " + p->name + " has shape " +
                           shape_string(it->second.shape()) + ", parameter is " +
                           shape_string(p->value.shape()));
    }
    for (T g : it->second.data()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw std::runtime_error("non-finite gradient in parameter " + p->name);
      }
    }
  }

  ++state.step;
  const AdamHyper& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(h.beta1, t);
  const double correct2 = 1.0 - std::pow(h.beta2, t);
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  const T step_size = static_cast<T>(lr / correct1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(correct2));
  const T eps = static_cast<T>(h.epsilon);

  for (Parameter<T>* p : params) {
    auto [mit, fresh] = state.m.try_emplace(p->name, p->value.shape());
    Tensor<T>& m = mit->second;
    Tensor<T>& v = state.v.try_emplace(p->name, p->value.shape()).first->second;
    auto git = grads.find(p->name);
    const T* g = git == grads.end() ? nullptr : git->second.raw();
    T* w = p->value.raw();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const T gi = g ? g[i] : T{0};
      m[i] = b1 * m[i] + (T{1} - b1) * gi;
      v[i] = b2 * v[i] + (T{1} - b2) * gi * gi;
      w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
    }
  }
}

template void adam_step(std::span<Parameter<float>* const>, const Gradients<float>&,
                        OptimizerState<float>&, double);
template void adam_step(std::span<Parameter<double>* const>, const Gradients<double>&,
                        OptimizerState<double>&, double);

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) {
    throw std::invalid_argument("learning rate must be finite and non-negative");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("lr decay must lie in (0, 1]");
  if (decay_period < 1) throw std::invalid_argument("lr decay period must be at least 1 epoch");
  if (folds < 2) throw std::invalid_argument("cross-validation needs at least 2 folds");
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("threshold must lie in (0, 1)");
  }
}

double lr_at_epoch(int epoch, const TrainConfig& config) {
  if (epoch < 0) throw std::invalid_argument("epoch must be non-negative");
  return config.base_lr * std::pow(config.gamma, epoch / config.decay_period);
}

Tensor<float> gather_images(const Dataset& data, std::span<const std::size_t> ids) {
  const std::size_t per = data.height * data.width * data.channels;
  Tensor<float> out(Shape{ids.size(), data.height, data.width, data.channels});
  for (std::size_t b = 0; b < ids.size(); ++b) {
    const auto& img = data.samples.at(ids[b]).image;
    std::copy(img.raw(), img.raw() + per, out.raw() + b * per);
  }
  return out;
}

Tensor<float> gather_targets(const Dataset& data, std::span<const std::size_t> ids) {
  const std::size_t per = data.height * data.width * 3;
  Tensor<float> out(Shape{ids.size(), data.height, data.width, 3});
  for (std::size_t b = 0; b < ids.size(); ++b) {
    const Tensor<float> t = structure_targets<float>(data.samples.at(ids[b]).labels);
    std::copy(t.raw(), t.raw() + per, out.raw() + b * per);
  }
  return out;
}

Tensor<float> predict_batched(Model<float>& model, const Dataset& data,
                              std::span<const std::size_t> ids, std::size_t batch) {
  const auto& c = model.config();
  if (data.height != static_cast<std::size_t>(c.height) ||
      data.width != static_cast<std::size_t>(c.width) ||
      data.channels != static_cast<std::size_t>(c.channels)) {
    throw DimensionError("data is " + std::to_string(data.height) + "x" +
                         std::to_string(data.width) + "x" + std::to_string(data.channels) +
                         " but the model expects " + std::to_string(c.height) + "x" +
                         std::to_string(c.width) + "x" + std::to_string(c.channels));
  }
  const auto k = static_cast<std::size_t>(c.classes);
  const std::size_t per = data.height * data.width * k;
  Tensor<float> out(Shape{ids.size(), data.height, data.width, k});
  for (std::size_t begin = 0; begin < ids.size(); begin += batch) {
    const std::size_t end = std::min(ids.size(), begin + batch);
    const Tensor<float> probs = model.predict(gather_images(data, ids.subspan(begin, end - begin)));
    std::copy(probs.raw(), probs.raw() + probs.size(), out.raw() + begin * per);
  }
  return out;
}

std::vector<SubRegionDice> evaluate_model(Model<float>& model, const Dataset& data,
                                          std::span<const std::size_t> ids, double threshold) {
  if (model.config().classes != 3) {
    throw DimensionError("sub-region evaluation needs a 3-channel model");
  }
  const Tensor<float> probs = predict_batched(model, data, ids);
  const Mask masks = binarize(probs, threshold);
  const std::size_t per = data.height * data.width * 3;
  std::vector<SubRegionDice> out;
  out.reserve(ids.size());
  for (std::size_t b = 0; b < ids.size(); ++b) {
    Mask one(Shape{data.height, data.width, 3});
    std::copy(masks.raw() + b * per, masks.raw() + (b + 1) * per, one.raw());
    out.push_back(subregion_dice(compose_from_channels(one),
                                 compose_subregions(data.samples[ids[b]].labels)));
  }
  return out;
}

namespace {

// Mean per-channel Dice of thresholded predictions over the listed images.
std::array<double, 3> structure_dice(Model<float>& model, const Dataset& data,
                                     std::span<const std::size_t> ids, double threshold) {
  const Tensor<float> probs = predict_batched(model, data, ids);
  const Mask masks = binarize(probs, threshold);
  const std::size_t pixels = data.height * data.width;
  std::array<double, 3> sum{0, 0, 0};
  Mask pred(Shape{data.height, data.width});
  Mask truth(Shape{data.height, data.width});
  for (std::size_t b = 0; b < ids.size(); ++b) {
    const LabelMap& labels = data.samples[ids[b]].labels;
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t p = 0; p < pixels; ++p) {
        pred[p] = masks[(b * pixels + p) * 3 + k];
        truth[p] = labels[p] == kStructureLabels[k];
      }
      sum[k] += dice_score(pred, truth);
    }
  }
  for (double& s : sum) s /= static_cast<double>(ids.size());
  return sum;
}

void check_split(const Dataset& data, const Fold& split) {
  if (split.train.empty()) throw std::invalid_argument("training split is empty");
  std::vector<std::uint8_t> seen(data.samples.size(), 0);
  for (std::size_t id : split.train) {
    if (id >= seen.size()) throw std::out_of_range("training id " + std::to_string(id) + " out of range");
    seen[id] = 1;
  }
  for (std::size_t id : split.validation) {
    if (id >= seen.size()) {
      throw std::out_of_range("validation id " + std::to_string(id) + " out of range");
    }
    if (seen[id]) {
      throw std::invalid_argument("sample " + std::to_string(id) +
                                  " is in both the training and validation split");
    }
  }
}

}  // namespace

std::vector<EpochRecord> train_model(Model<float>& model, const Dataset& data,
                                     const Fold& split, const TrainConfig& config,
                                     const ProgressFn& progress) {
  config.validate();
  data.validate();
  check_split(data, split);
  if (model.config().classes != 3) {
    throw DimensionError("training targets have 3 structure channels; model has " +
                         std::to_string(model.config().classes));
  }

  const ChannelStats stats = channel_stats(data, split.train);
  for (std::size_t c = 0; c < data.channels; ++c) {
    model.input_mean()[c] = static_cast<float>(stats.mean[c]);
    model.input_std()[c] = static_cast<float>(stats.std[c]);
  }

  const std::vector<Parameter<float>*> params = model.parameters();
  OptimizerState<float> optimizer;
  std::vector<std::size_t> order = split.train;
  std::vector<EpochRecord> history;
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    order = split.train;
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = lr_at_epoch(epoch, config);

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::span<const std::size_t> ids =
          std::span(order).subspan(begin, std::min(batch_size, order.size() - begin));
      Tape<float> tape;
      const Var input = tape.constant(model.normalize_input(gather_images(data, ids)));
      const Var probs = model.forward(tape, input, {Phase::Train, true});
      const Var loss = ad::dice_loss(tape, probs, gather_targets(data, ids), kLossSmoothing);
      loss_sum += static_cast<double>(tape.value(loss)[0]) * static_cast<double>(ids.size());
      const Gradients<float> grads = tape.backward(loss);
      try {
        adam_step<float>(params, grads, optimizer, lr);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("epoch " + std::to_string(epoch) + ": " + e.what());
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.dice_label1 = rec.dice_label2 = rec.dice_label4 = std::numeric_limits<double>::quiet_NaN();
    if (config.track_validation && !split.validation.empty()) {
      const auto d = structure_dice(model, data, split.validation, config.threshold);
      rec.dice_label1 = d[0];
      rec.dice_label2 = d[1];
      rec.dice_label4 = d[2];
    }
    history.push_back(rec);
    if (progress) {
      progress("epoch " + std::to_string(epoch + 1) + "/" + std::to_string(config.epochs) +
               " loss " + format_double(rec.train_loss));
    }
  }
  return history;
}

std::vector<FoldResult> cross_validate(const Dataset& data, const ModelConfig& model_config,
                                       const TrainConfig& config, unsigned threads,
                                       const ProgressFn& progress) {
  config.validate();
  model_config.validate();
  const auto k = static_cast<std::size_t>(config.folds);
  const std::vector<Fold> folds = kfold_split(data.samples.size(), k, config.seed);
  std::vector<FoldResult> results(k);
  parallel_for(k, threads, [&](std::size_t f) {
    try {
      TrainConfig fold_config = config;
      fold_config.seed = config.seed + f;
      Model<float> model(model_config, fold_config.seed);
      ProgressFn fold_progress;
      if (progress) {
        fold_progress = [&, f](const std::string& msg) {
          progress(to_string(model_config.variant) + " fold " + std::to_string(f) + ": " + msg);
        };
      }
      FoldResult& r = results[f];
      r.history = train_model(model, data, folds[f], fold_config, fold_progress);
      r.validation_ids = folds[f].validation;
      r.per_image = evaluate_model(model, data, r.validation_ids, config.threshold);
      std::vector<double> wt, tc, et;
      for (const auto& d : r.per_image) {
        wt.push_back(d.wt);
        tc.push_back(d.tc);
        et.push_back(d.et);
      }
      r.report = FoldReport{f, r.per_image.size(), median(wt), median(tc), median(et)};
    } catch (const std::exception& e) {
      throw std::runtime_error("fold " + std::to_string(f) + ": " + e.what());
    }
  });
  return results;
}

}  // namespace diunet
