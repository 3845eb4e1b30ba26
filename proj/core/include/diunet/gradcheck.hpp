#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "diunet/autodiff.hpp"
#include "diunet/model.hpp"

namespace diunet {

struct GradcheckOptions {
  std::size_t coordinates = 100;  // per parameter tensor; all of them if the tensor is smaller
  double step = 1e-5;             // central-difference half width
  double tolerance = 1e-4;        // max relative error
  double floor = 1e-8;            // skip when |analytic| and |numeric| are both below this
  std::uint64_t seed = 1;
  int max_resamples = 16;         // per coordinate: replacements, then 10x smaller steps
};

struct TensorCheck {
  std::string name;
  std::size_t compared = 0;  // coordinates whose relative error was measured
  std::size_t below_floor = 0;
  std::size_t kink_resamples = 0;
  std::size_t dropped = 0;   // gave up after max_resamples kink crossings
  double max_rel_error = 0.0;
};

struct LayerCheck {
  std::string layer;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  bool pass = true;
};

struct GradcheckReport {
  std::vector<TensorCheck> tensors;
  std::vector<LayerCheck> layers;  // tensors grouped by owning layer, first-seen order
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = true;
};

/// Builds the forward graph on a fresh tape and returns the scalar loss.
using LossBuilder = std::function<Var(Tape<double>&)>;

/// Compares tape gradients with central differences on sampled coordinates
/// of each parameter. Coordinates whose +/- perturbation changes any ReLU
/// mask or max-pool choice are replaced by another coordinate.
GradcheckReport gradcheck(const std::vector<Parameter<double>*>& params, const LossBuilder& loss,
                          const GradcheckOptions& options = {});

/// Dice loss of the model (train-phase batch norm, running statistics
/// frozen) on already-normalised images against (B, N, M, K) targets.
GradcheckReport gradcheck_model(Model<double>& model, const Tensor<double>& images,
                                const Tensor<double>& targets,
                                const GradcheckOptions& options = {});

}  // namespace diunet
