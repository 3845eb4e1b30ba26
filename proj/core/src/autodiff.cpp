#include "diunet/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "diunet/metrics.hpp"

namespace diunet {

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, nullptr});
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::parameter(const Parameter<T>& param) {
  if (auto it = param_nodes_.find(&param); it != param_nodes_.end()) return Var{it->second};
  nodes_.push_back(Node{param.value, {}, {}, true, &param});
  param_nodes_.emplace(&param, nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, std::vector<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (Var v : inputs) {
    if (v.id >= nodes_.size()) throw std::out_of_range("tape input refers to a later node");
    needs = needs || nodes_[v.id].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward), needs, nullptr});
  return Var{nodes_.size() - 1};
}

template <typename T>
Gradients<T> Tape<T>::backward(Var loss) const {
  if (loss.id >= nodes_.size()) throw std::out_of_range("loss is not on this tape");
  if (nodes_[loss.id].value.size() != 1) {
    throw DimensionError("backward needs a scalar loss, got shape " +
                         shape_string(nodes_[loss.id].value.shape()));
  }
  std::vector<Tensor<T>> grads(loss.id + 1);
  grads[loss.id] = Tensor<T>(nodes_[loss.id].value.shape(), T{1});

  Gradients<T> out;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (grads[i].shape().empty()) continue;
    if (node.param) {
      out[node.param->name] = std::move(grads[i]);
      continue;
    }
    if (node.backward && node.requires_grad) {
      GradRefs refs(node.inputs.size(), nullptr);
      for (std::size_t j = 0; j < node.inputs.size(); ++j) {
        const std::size_t in = node.inputs[j].id;
        if (!nodes_[in].requires_grad) continue;
        refs[j] = &grads[in];
      }
      node.backward(*this, grads[i], refs);
    }
    grads[i] = Tensor<T>();
  }
  for (const auto& [param, id] : param_nodes_) {
    if (!out.contains(param->name)) out[param->name] = Tensor<T>(param->value.shape());
  }
  return out;
}

template <typename T>
void Tape<T>::mix_kinks(std::span<const std::uint8_t> bytes) {
  for (std::uint8_t b : bytes) {
    kink_signature_ ^= b;
    kink_signature_ *= 0x100000001b3ULL;
  }
}

template class Tape<float>;
template class Tape<double>;

namespace ad {

namespace {

// Gradient slots start unallocated; the first contribution is moved in and
// later ones are summed.
template <typename T>
void add_into(Tensor<T>& dst, Tensor<T>&& src) {
  if (dst.shape().empty()) {
    dst = std::move(src);
    return;
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
Tensor<T>& slot(Tensor<T>* ref, const Shape& shape) {
  if (ref->shape().empty()) *ref = Tensor<T>(shape);
  return *ref;
}

}  // namespace

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var weights, Var bias, const DilatedConvSpec& spec) {
  Tensor<T> out = dilated_conv2d(tape.value(x), tape.value(weights), tape.value(bias), spec);
  return tape.record(std::move(out), {x, weights, bias},
                     [x, weights, spec](const Tape<T>& t, const Tensor<T>& g,
                                        const typename Tape<T>::GradRefs& refs) {
                       ConvGrads<T> cg = dilated_conv2d_backward(
                           t.value(x), t.value(weights), spec, g, refs[0] != nullptr);
                       if (refs[0]) add_into(*refs[0], std::move(cg.input));
                       if (refs[1]) add_into(*refs[1], std::move(cg.weights));
                       if (refs[2]) add_into(*refs[2], std::move(cg.bias));
                     });
}

namespace {

template <typename T>
Var batch_norm_impl(Tape<T>& tape, Var x, Var gamma, Var beta, RunningStats<T>& stats,
                    const BatchNormHyper& hyper, const ForwardOptions& opts, bool fuse_relu) {
  const Tensor<T>& in = tape.value(x);
  const ImageDims d = image_dims(in.shape(), "batch_norm input");
  const std::size_t c = d.channels;
  const std::size_t n = d.pixels();
  const Tensor<T>& g = tape.value(gamma);
  const Tensor<T>& b = tape.value(beta);
  if (g.size() != c || b.size() != c || stats.mean.size() != c || stats.var.size() != c) {
    throw DimensionError("batch_norm has " + std::to_string(g.size()) +
                         " channels but input " + shape_string(in.shape()) + " has " +
                         std::to_string(c));
  }

  std::vector<T> mean(c, T{0});
  std::vector<T> invstd(c);
  const bool train = opts.phase == Phase::Train;
  if (train) {
    if (n < 2) {
      throw std::invalid_argument(
          "batch_norm in train phase needs at least two values per channel");
    }
    std::vector<double> acc(c, 0.0);
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += static_cast<double>(in[p * c + ch]);
    for (std::size_t ch = 0; ch < c; ++ch) mean[ch] = static_cast<T>(acc[ch] / n);
    std::vector<double> sq(c, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double dv = static_cast<double>(in[p * c + ch]) - static_cast<double>(mean[ch]);
        sq[ch] += dv * dv;
      }
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double var = sq[ch] / static_cast<double>(n);
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(var + hyper.epsilon));
      if (opts.update_running_stats) {
        const double unbiased = sq[ch] / static_cast<double>(n - 1);
        stats.mean[ch] = static_cast<T>(hyper.momentum * stats.mean[ch] +
                                        (1.0 - hyper.momentum) * mean[ch]);
        stats.var[ch] = static_cast<T>(hyper.momentum * stats.var[ch] +
                                       (1.0 - hyper.momentum) * unbiased);
      }
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = stats.mean[ch];
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(stats.var[ch]) +
                                                  hyper.epsilon));
    }
  }

  Tensor<T> out(in.shape());
  std::vector<T> scale(c), shift(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    scale[ch] = invstd[ch] * g[ch];
    shift[ch] = b[ch];
  }
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = p * c + ch;
      out[i] = (in[i] - mean[ch]) * scale[ch] + shift[ch];
    }
  }
  if (fuse_relu) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > T{0} ? out[i] : T{0};
    if (tape.tracks_kinks()) {
      std::vector<std::uint8_t> mask(out.size());
      for (std::size_t i = 0; i < out.size(); ++i) mask[i] = out[i] > T{0};
      tape.mix_kinks(mask);
    }
  }

  const std::size_t self = tape.size();
  return tape.record(
      std::move(out), {x, gamma, beta},
      [x, gamma, self, mean = std::move(mean), invstd = std::move(invstd), train, fuse_relu](
          const Tape<T>& t, const Tensor<T>& grad_in, const typename Tape<T>::GradRefs& refs) {
        const Tensor<T>& in = t.value(x);
        const Tensor<T>& g = t.value(gamma);
        const std::size_t c = mean.size();
        const std::size_t n = in.size() / c;
        // ReLU subgradient at zero is zero, so mask on the strictly positive output.
        Tensor<T> masked;
        if (fuse_relu) {
          const Tensor<T>& y = t.value(Var{self});
          masked = Tensor<T>(grad_in.shape());
          for (std::size_t i = 0; i < y.size(); ++i) masked[i] = y[i] > T{0} ? grad_in[i] : T{0};
        }
        const Tensor<T>& grad = fuse_relu ? masked : grad_in;
        const Shape channel_shape{c};
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        for (std::size_t p = 0; p < n; ++p) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t i = p * c + ch;
            const T xhat = (in[i] - mean[ch]) * invstd[ch];
            sum_dy[ch] += static_cast<double>(grad[i]);
            sum_dy_xhat[ch] += static_cast<double>(grad[i] * xhat);
          }
        }
        if (refs[1]) {
          for (std::size_t ch = 0; ch < c; ++ch) slot(refs[1], channel_shape)[ch] += static_cast<T>(sum_dy_xhat[ch]);
        }
        if (refs[2]) {
          for (std::size_t ch = 0; ch < c; ++ch) slot(refs[2], channel_shape)[ch] += static_cast<T>(sum_dy[ch]);
        }
        if (!refs[0]) return;
        Tensor<T>& gx = slot(refs[0], in.shape());
        if (!train) {
          for (std::size_t p = 0; p < n; ++p)
            for (std::size_t ch = 0; ch < c; ++ch)
              gx[p * c + ch] += grad[p * c + ch] * g[ch] * invstd[ch];
          return;
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        std::vector<T> k_scale(c), k_mean_dy(c), k_mean_dyx(c);
        for (std::size_t ch = 0; ch < c; ++ch) {
          k_scale[ch] = g[ch] * invstd[ch];
          k_mean_dy[ch] = static_cast<T>(inv_n * sum_dy[ch]);
          k_mean_dyx[ch] = static_cast<T>(inv_n * sum_dy_xhat[ch]);
        }
        for (std::size_t p = 0; p < n; ++p) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t i = p * c + ch;
            const T xhat = (in[i] - mean[ch]) * invstd[ch];
            gx[i] += k_scale[ch] * (grad[i] - k_mean_dy[ch] - xhat * k_mean_dyx[ch]);
          }
        }
      });
}

}  // namespace

template <typename T>
Var batch_norm(Tape<T>& tape, Var x, Var gamma, Var beta, RunningStats<T>& stats,
               const BatchNormHyper& hyper, const ForwardOptions& opts) {
  return batch_norm_impl(tape, x, gamma, beta, stats, hyper, opts, false);
}

template <typename T>
Var batch_norm_relu(Tape<T>& tape, Var x, Var gamma, Var beta, RunningStats<T>& stats,
                    const BatchNormHyper& hyper, const ForwardOptions& opts) {
  return batch_norm_impl(tape, x, gamma, beta, stats, hyper, opts, true);
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  const Tensor<T>& in = tape.value(x);
  Tensor<T> out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T{0} ? in[i] : T{0};
  if (tape.tracks_kinks()) {
    std::vector<std::uint8_t> mask(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) mask[i] = in[i] > T{0};
    tape.mix_kinks(mask);
  }
  return tape.record(std::move(out), {x},
                     [x](const Tape<T>& t, const Tensor<T>& g,
                         const typename Tape<T>::GradRefs& refs) {
                       const Tensor<T>& in = t.value(x);
                       Tensor<T>& gx = slot(refs[0], in.shape());
                       for (std::size_t i = 0; i < in.size(); ++i)
                         gx[i] += in[i] > T{0} ? g[i] : T{0};
                     });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
  const Tensor<T>& in = tape.value(x);
  Tensor<T> out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const T v = in[i];
    if (v >= T{0}) {
      out[i] = T{1} / (T{1} + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T{1} + e);
    }
  }
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {x},
                     [self](const Tape<T>& t, const Tensor<T>& g,
                            const typename Tape<T>::GradRefs& refs) {
                       const Tensor<T>& y = t.value(Var{self});
                       Tensor<T>& gx = slot(refs[0], y.shape());
                       for (std::size_t i = 0; i < y.size(); ++i)
                         gx[i] += g[i] * y[i] * (T{1} - y[i]);
                     });
}

template <typename T>
Var maxpool2(Tape<T>& tape, Var x) {
  PoolResult<T> pooled = diunet::maxpool2(tape.value(x));
  if (tape.tracks_kinks()) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(pooled.argmax.data());
    tape.mix_kinks({bytes, pooled.argmax.size() * sizeof(std::size_t)});
  }
  return tape.record(std::move(pooled.output), {x},
                     [x, argmax = std::move(pooled.argmax)](
                         const Tape<T>& t, const Tensor<T>& g,
                         const typename Tape<T>::GradRefs& refs) {
                       Tensor<T>& gx = slot(refs[0], t.value(x).shape());
                       for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += g[i];
                     });
}

template <typename T>
Var upsample2(Tape<T>& tape, Var x) {
  return tape.record(diunet::upsample2(tape.value(x)), {x},
                     [](const Tape<T>&, const Tensor<T>& g,
                        const typename Tape<T>::GradRefs& refs) {
                       add_into(*refs[0], upsample2_backward(g));
                     });
}

template <typename T>
Var concat(Tape<T>& tape, const std::vector<Var>& parts) {
  std::vector<const Tensor<T>*> values;
  std::vector<std::size_t> widths;
  for (Var v : parts) {
    values.push_back(&tape.value(v));
    widths.push_back(image_dims(tape.value(v).shape()).channels);
  }
  Tensor<T> out = concat_channels(values);
  return tape.record(std::move(out), parts,
                     [widths](const Tape<T>&, const Tensor<T>& g,
                              const typename Tape<T>::GradRefs& refs) {
                       std::size_t begin = 0;
                       for (std::size_t j = 0; j < widths.size(); ++j) {
                         const std::size_t end = begin + widths[j];
                         if (refs[j]) add_into(*refs[j], slice_channels(g, begin, end));
                         begin = end;
                       }
                     });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& va = tape.value(a);
  const Tensor<T>& vb = tape.value(b);
  if (va.shape() != vb.shape()) {
    throw DimensionError("mul operands differ: " + shape_string(va.shape()) + " vs " +
                         shape_string(vb.shape()));
  }
  Tensor<T> out(va.shape());
  for (std::size_t i = 0; i < va.size(); ++i) out[i] = va[i] * vb[i];
  return tape.record(std::move(out), {a, b},
                     [a, b](const Tape<T>& t, const Tensor<T>& g,
                            const typename Tape<T>::GradRefs& refs) {
                       const Tensor<T>& va = t.value(a);
                       const Tensor<T>& vb = t.value(b);
                       if (refs[0]) slot(refs[0], va.shape());
                       if (refs[1]) slot(refs[1], vb.shape());
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (refs[0]) (*refs[0])[i] += g[i] * vb[i];
                         if (refs[1]) (*refs[1])[i] += g[i] * va[i];
                       }
                     });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  const Tensor<T>& in = tape.value(x);
  T total{0};
  for (std::size_t i = 0; i < in.size(); ++i) total += in[i];
  return tape.record(Tensor<T>(Shape{1}, total), {x},
                     [x](const Tape<T>& t, const Tensor<T>& g,
                         const typename Tape<T>::GradRefs& refs) {
                       Tensor<T>& gx = slot(refs[0], t.value(x).shape());
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
                     });
}

template <typename T>
Var squared_error(Tape<T>& tape, Var x, const Tensor<T>& target) {
  const Tensor<T>& in = tape.value(x);
  if (in.shape() != target.shape()) {
    throw DimensionError("squared_error target shape " + shape_string(target.shape()) +
                         " does not match " + shape_string(in.shape()));
  }
  T total{0};
  for (std::size_t i = 0; i < in.size(); ++i) total += (in[i] - target[i]) * (in[i] - target[i]);
  return tape.record(Tensor<T>(Shape{1}, total), {x},
                     [x, target](const Tape<T>& t, const Tensor<T>& g,
                                 const typename Tape<T>::GradRefs& refs) {
                       const Tensor<T>& in = t.value(x);
                       Tensor<T>& gx = slot(refs[0], in.shape());
                       for (std::size_t i = 0; i < in.size(); ++i)
                         gx[i] += g[0] * T{2} * (in[i] - target[i]);
                     });
}

template <typename T>
Var dice_loss(Tape<T>& tape, Var probs, const Tensor<T>& target, double smoothing) {
  Tensor<T> grad;
  const double loss = diunet::dice_loss(tape.value(probs), target, smoothing, &grad);
  return tape.record(Tensor<T>(Shape{1}, static_cast<T>(loss)), {probs},
                     [grad = std::move(grad)](const Tape<T>&, const Tensor<T>& g,
                                              const typename Tape<T>::GradRefs& refs) {
                       Tensor<T>& gx = slot(refs[0], grad.shape());
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * grad[i];
                     });
}

#define DIUNET_INSTANTIATE(T)                                                               \
  template Var conv2d(Tape<T>&, Var, Var, Var, const DilatedConvSpec&);                      \
  template Var batch_norm(Tape<T>&, Var, Var, Var, RunningStats<T>&, const BatchNormHyper&, \
                          const ForwardOptions&);                                            \
  template Var batch_norm_relu(Tape<T>&, Var, Var, Var, RunningStats<T>&,                    \
                               const BatchNormHyper&, const ForwardOptions&);                \
  template Var relu(Tape<T>&, Var);                                                          \
  template Var sigmoid(Tape<T>&, Var);                                                       \
  template Var maxpool2(Tape<T>&, Var);                                                      \
  template Var upsample2(Tape<T>&, Var);                                                     \
  template Var concat(Tape<T>&, const std::vector<Var>&);                                    \
  template Var mul(Tape<T>&, Var, Var);                                                      \
  template Var sum(Tape<T>&, Var);                                                           \
  template Var squared_error(Tape<T>&, Var, const Tensor<T>&);                               \
  template Var dice_loss(Tape<T>&, Var, const Tensor<T>&, double);

DIUNET_INSTANTIATE(float)
DIUNET_INSTANTIATE(double)

#undef DIUNET_INSTANTIATE

}  // namespace ad
}  // namespace diunet
