#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "lgeq/learn/augment.hpp"
#include "lgeq/learn/net.hpp"

namespace lgeq::learn {

/// Labeled samples of one shape, stored in single precision.
struct Dataset {
  Shape3 shape;
  std::vector<std::vector<float>> samples;
  std::vector<int> labels;

  std::size_t size() const { return samples.size(); }
  void add(std::vector<float> x, int label) {
    if (x.size() != shape.count()) throw ShapeError("dataset: sample size mismatch");
    samples.push_back(std::move(x));
    labels.push_back(label);
  }
  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset d{shape, {}, {}};
    d.samples.reserve(idx.size());
    d.labels.reserve(idx.size());
    for (auto i : idx) {
      d.samples.push_back(samples[i]);
      d.labels.push_back(labels[i]);
    }
    return d;
  }
};

struct TrainConfig {
  double learning_rate = 1e-2;
  double momentum = 0.75;
  int batch_size = 256;
  double l2 = 1e-4;
  int epochs = 50;
  double dropout = 0.5;
  bool augment = false;  // random geometric augmentation per sample and epoch
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate >= 0)) throw ConfigError("train: learning rate must be >= 0");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("train: momentum must be in [0, 1)");
    if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    if (epochs < 0 || l2 < 0 || dropout < 0 || dropout >= 1) throw ConfigError("train: invalid hyperparameters");
  }

  /// Scar-segmentation row of the training table.
  static TrainConfig refinement_defaults() { return {1e-2, 0.75, 256, 1e-4, 50, 0.5, true, 0}; }
  /// Disease-detection row of the training table.
  static TrainConfig detection_defaults() { return {1e-4, 0.9, 16, 1e-4, 20, 0.5, true, 0}; }
};

struct TrainResult {
  Net model;
  std::vector<double> loss_trace;  // mean training loss per epoch
};

/// v <- m v - lr (g + l2 w) on weights (biases without the L2 term);
/// w <- w + v.
inline void sgdm_step(std::span<double> params, std::span<double> velocity, std::span<const double> grad,
                      std::span<const std::uint8_t> is_weight, double lr, double momentum, double l2) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i] + (is_weight[i] ? l2 * params[i] : 0.0);
    velocity[i] = momentum * velocity[i] - lr * g;
    params[i] += velocity[i];
  }
}

/// Cross-entropy of one sample; leaves d(loss)/d(logits) in the workspace
/// and accumulates parameter gradients into `grads` when non-empty.
inline double sample_loss_and_grad(const Net& net, std::span<const double> x, int label, Workspace& ws,
                                   std::span<double> grads, Rng* dropout_rng) {
  if (!net.ends_in_softmax()) throw ShapeError("classifier networks must end in softmax");
  net.forward(x, ws, dropout_rng);
  const auto& prob = ws.act.back();
  if (label < 0 || static_cast<std::size_t>(label) >= prob.size()) throw ShapeError("label out of range");
  const double loss = -std::log(std::max(prob[static_cast<std::size_t>(label)], std::numeric_limits<double>::min()));
  if (!grads.empty()) {
    auto& dlogits = ws.grad[ws.grad.size() - 2];
    for (std::size_t j = 0; j < prob.size(); ++j) dlogits[j] = prob[j] - (static_cast<int>(j) == label ? 1.0 : 0.0);
    net.backward(ws, grads);
  }
  return loss;
}

namespace detail {
inline std::vector<double> to_double(std::span<const float> x) { return {x.begin(), x.end()}; }
}  // namespace detail

/// Mini-batch SGD with momentum on the mean cross-entropy. Samples are
/// reshuffled every epoch from a seeded stream; dropout (and augmentation
/// when enabled) are active during training only.
inline TrainResult net_train(const Dataset& data, Net init, const TrainConfig& cfg,
                             const std::function<void(int, double)>& on_epoch = {}) {
  cfg.validate();
  if (data.size() == 0) throw EmptyClassError("net_train: empty dataset");
  if (!(init.input_shape() == data.shape)) throw ShapeError("net_train: dataset shape differs from network input");
  TrainResult res{std::move(init), {}};
  Net& net = res.model;
  net.set_dropout_rate(cfg.dropout);
  Rng shuffle_rng(derive_seed(cfg.seed, 1));
  Rng dropout_rng(derive_seed(cfg.seed, 2));
  Rng aug_rng(derive_seed(cfg.seed, 3));
  const bool can_augment = cfg.augment && data.shape.c == 1 && data.shape.h == data.shape.w;

  Doubles velocity(net.params().size(), 0.0);
  Doubles grads(net.params().size(), 0.0);
  std::vector<std::size_t> order(data.size());
  Workspace ws;
  std::vector<double> x(data.shape.count());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::fill(grads.begin(), grads.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto& sample = data.samples[order[k]];
        if (can_augment) {
          const auto aug = augment<float>(sample, data.shape.w, AugmentParams::random(aug_rng));
          std::copy(aug.begin(), aug.end(), x.begin());
        } else {
          std::copy(sample.begin(), sample.end(), x.begin());
        }
        epoch_loss += sample_loss_and_grad(net, x, data.labels[order[k]], ws, grads, &dropout_rng);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads) g *= inv;
      sgdm_step(net.params(), velocity, grads, net.weight_mask(), cfg.learning_rate, cfg.momentum, cfg.l2);
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss) ||
        !std::all_of(net.params().begin(), net.params().end(), [](double v) { return std::isfinite(v); }))
      throw DivergenceError("net_train: loss became non-finite at epoch " + std::to_string(epoch));
    res.loss_trace.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return res;
}

/// Class probabilities for a batch of samples (inference mode).
inline std::vector<std::vector<double>> net_forward(const Net& net, const std::vector<std::vector<double>>& batch) {
  Workspace ws;
  std::vector<std::vector<double>> out;
  out.reserve(batch.size());
  for (const auto& x : batch) {
    if (x.size() != net.input_shape().count()) throw ShapeError("net_forward: sample shape mismatch");
    out.push_back(net.predict(x, ws));
  }
  return out;
}

/// Activation of the feature layer (last relu) in inference mode.
inline std::vector<double> net_features(const Net& net, std::span<const double> x, Workspace& ws) {
  const std::size_t idx = net.feature_activation_index();
  net.forward(x, ws, nullptr, idx);
  return {ws.act[idx].begin(), ws.act[idx].end()};
}

/// Maximum relative error between backpropagated and central-difference
/// gradients of the cross-entropy over every parameter (dropout off).
/// Relative error is |a - n| / max(|a|, |n|, floor).
inline double grad_check(const Net& model, std::span<const double> x, int label, double epsilon = 1e-5,
                         double floor = 1e-6) {
  if (!(epsilon > 0)) throw ConfigError("grad_check: epsilon must be > 0");
  Net net = model;
  Workspace ws;
  Doubles analytic(net.params().size(), 0.0);
  sample_loss_and_grad(net, x, label, ws, analytic, nullptr);
  double worst = 0.0;
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    const double keep = net.params()[i];
    net.params()[i] = keep + epsilon;
    const double lp = sample_loss_and_grad(net, x, label, ws, {}, nullptr);
    net.params()[i] = keep - epsilon;
    const double lm = sample_loss_and_grad(net, x, label, ws, {}, nullptr);
    net.params()[i] = keep;
    const double numeric = (lp - lm) / (2.0 * epsilon);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace lgeq::learn
