#include "diunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "diunet/metrics.hpp"

namespace diunet {

namespace {

struct Evaluation {
  double loss;
  std::uint64_t kinks;
};

Evaluation evaluate(const LossBuilder& build) {
  Tape<double> tape;
  tape.set_track_kinks(true);
  const Var loss = build(tape);
  return {tape.value(loss)[0], tape.kink_signature()};
}

std::string layer_of(const std::string& param_name) {
  const auto dot = param_name.rfind('.');
  return dot == std::string::npos ? param_name : param_name.substr(0, dot);
}

}  // namespace

GradcheckReport gradcheck(const std::vector<Parameter<double>*>& params, const LossBuilder& loss,
                          const GradcheckOptions& options) {
  Gradients<double> analytic;
  std::uint64_t base_kinks;
  {
    Tape<double> tape;
    tape.set_track_kinks(true);
    const Var l = loss(tape);
    base_kinks = tape.kink_signature();
    analytic = tape.backward(l);
  }

  std::mt19937_64 rng(options.seed);
  GradcheckReport report;
  report.tolerance = options.tolerance;
  for (Parameter<double>* p : params) {
    TensorCheck check;
    check.name = p->name;
    const Tensor<double>& grad = analytic.at(p->name);
    const std::size_t n = p->value.size();

    // Visit coordinates in a random order; the first `coordinates` clean
    // ones are compared, later ones stand by as kink replacements.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t want = std::min(options.coordinates, n);
    std::size_t next = 0;
    for (std::size_t slot = 0; slot < want; ++slot) {
      bool done = false;
      std::size_t i = order[next++];
      double step = options.step;
      for (int attempt = 0; attempt <= options.max_resamples; ++attempt) {
        double& w = p->value[i];
        const double saved = w;
        w = saved + step;
        const Evaluation plus = evaluate(loss);
        w = saved - step;
        const Evaluation minus = evaluate(loss);
        w = saved;
        if (plus.kinks != base_kinks || minus.kinks != base_kinks) {
          // Prefer a spare coordinate; once the spares are used up, shrink
          // the step so the perturbation stays on one side of the kink.
          ++check.kink_resamples;
          if (n - next > want - slot - 1) {
            i = order[next++];
            step = options.step;
          } else {
            step /= 10.0;
          }
          continue;
        }
        const double numeric = (plus.loss - minus.loss) / (2.0 * step);
        const double a = grad[i];
        ++check.compared;
        done = true;
        if (std::abs(a) < options.floor && std::abs(numeric) < options.floor) {
          ++check.below_floor;
          break;
        }
        const double rel = std::abs(a - numeric) / std::max(std::abs(a), std::abs(numeric));
        check.max_rel_error = std::max(check.max_rel_error, std::isfinite(rel) ? rel : HUGE_VAL);
        break;
      }
      if (!done) ++check.dropped;
    }

    const std::string layer = layer_of(p->name);
    auto it = std::find_if(report.layers.begin(), report.layers.end(),
                           [&](const LayerCheck& l) { return l.layer == layer; });
    if (it == report.layers.end()) {
      report.layers.push_back(LayerCheck{layer, 0, 0.0, true});
      it = report.layers.end() - 1;
    }
    it->coordinates += check.compared;
    it->max_rel_error = std::max(it->max_rel_error, check.max_rel_error);
    it->pass = it->max_rel_error <= options.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.tensors.push_back(std::move(check));
  }
  report.pass = report.max_rel_error <= options.tolerance;
  for (const auto& t : report.tensors) {
    if (t.dropped > 0) report.pass = false;
  }
  return report;
}

GradcheckReport gradcheck_model(Model<double>& model, const Tensor<double>& images,
                                const Tensor<double>& targets, const GradcheckOptions& options) {
  const LossBuilder loss = [&](Tape<double>& tape) {
    const Var probs = model.forward(tape, tape.constant(images), {Phase::Train, false});
    return ad::dice_loss(tape, probs, targets, kLossSmoothing);
  };
  return gradcheck(model.parameters(), loss, options);
}

}  // namespace diunet
