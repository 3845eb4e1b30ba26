#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "diunet/conv.hpp"
#include "diunet/tensor.hpp"

namespace diunet {

/// Trainable tensor with a stable, model-unique name.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
};

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Parameter name -> gradient of the loss with respect to that parameter.
template <typename T>
using Gradients = std::map<std::string, Tensor<T>>;

/// Reverse-mode record of primitive applications. Nodes are appended in
/// execution order, so every node's inputs precede it.
///
/// backward() does not modify the tape; calling it twice yields the same
/// gradients. Within one node, contributions from its consumers are summed
/// in reverse recording order.
template <typename T>
class Tape {
 public:
  /// One entry per node input; null when that input needs no gradient.
  using GradRefs = std::vector<Tensor<T>*>;
  using BackwardFn =
      std::function<void(const Tape& tape, const Tensor<T>& grad_out, const GradRefs& grads)>;

  Var constant(Tensor<T> value);
  /// Registers `param` as a leaf. Registering the same parameter again
  /// returns the existing node.
  Var parameter(const Parameter<T>& param);
  Var record(Tensor<T> value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradients for every registered parameter; parameters the loss does not
  /// depend on get zero tensors. Throws if `loss` is not a single element.
  Gradients<T> backward(Var loss) const;

  /// When enabled, ReLU and max-pool nodes fold their active sets into a
  /// hash so callers can detect that a perturbation crossed a kink.
  void set_track_kinks(bool on) noexcept { track_kinks_ = on; }
  bool tracks_kinks() const noexcept { return track_kinks_; }
  void mix_kinks(std::span<const std::uint8_t> bytes);
  std::uint64_t kink_signature() const noexcept { return kink_signature_; }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<Var> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    const Parameter<T>* param = nullptr;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
  bool track_kinks_ = false;
  std::uint64_t kink_signature_ = 0xcbf29ce484222325ULL;
};

enum class Phase { Train, Infer };

struct ForwardOptions {
  Phase phase = Phase::Train;
  /// Train phase only: fold batch statistics into the running estimates.
  bool update_running_stats = true;
};

template <typename T>
struct RunningStats {
  Tensor<T> mean;
  Tensor<T> var;
};

struct BatchNormHyper {
  double momentum = 0.9;
  double epsilon = 1e-5;
};

namespace ad {

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var weights, Var bias, const DilatedConvSpec& spec);

/// Per-channel normalisation over (B, H, W). Train phase uses batch
/// statistics; running variance is tracked with the unbiased estimate.
template <typename T>
Var batch_norm(Tape<T>& tape, Var x, Var gamma, Var beta, RunningStats<T>& stats,
               const BatchNormHyper& hyper, const ForwardOptions& opts);

/// relu(batch_norm(x)) as a single node.
template <typename T>
Var batch_norm_relu(Tape<T>& tape, Var x, Var gamma, Var beta, RunningStats<T>& stats,
                    const BatchNormHyper& hyper, const ForwardOptions& opts);

/// Subgradient at zero is zero.
template <typename T>
Var relu(Tape<T>& tape, Var x);

template <typename T>
Var sigmoid(Tape<T>& tape, Var x);

template <typename T>
Var maxpool2(Tape<T>& tape, Var x);

template <typename T>
Var upsample2(Tape<T>& tape, Var x);

template <typename T>
Var concat(Tape<T>& tape, const std::vector<Var>& parts);

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b);

template <typename T>
Var sum(Tape<T>& tape, Var x);

/// sum((x - target)^2)
template <typename T>
Var squared_error(Tape<T>& tape, Var x, const Tensor<T>& target);

/// Batch mean of -log(mean_k soft-Dice_k); see metrics.hpp.
template <typename T>
Var dice_loss(Tape<T>& tape, Var probs, const Tensor<T>& target, double smoothing);

}  // namespace ad

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace diunet
