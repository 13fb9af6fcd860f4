#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "lgeq/core/error.hpp"
#include "lgeq/core/rng.hpp"

namespace lgeq::learn {

/// Linear maximum-margin classifier; score = w . x + b.
struct MarginModel {
  Eigen::VectorXd w;
  double b = 0.0;
  double lambda = 1e-2;
  std::vector<double> objective_trace;  // best objective after each epoch
};

/// lambda/2 |w|^2 + mean(max(0, 1 - y (w . x + b))).
inline double margin_objective(const Eigen::MatrixXd& X, const std::vector<int>& y, const Eigen::VectorXd& w, double b,
                               double lambda) {
  double hinge = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    hinge += std::max(0.0, 1.0 - y[static_cast<std::size_t>(i)] * (X.row(i).dot(w) + b));
  return 0.5 * lambda * w.squaredNorm() + hinge / static_cast<double>(X.rows());
}

inline double margin_decide(const MarginModel& m, const Eigen::VectorXd& x) {
  if (x.size() != m.w.size()) throw ShapeError("margin_decide: dimension mismatch");
  return m.w.dot(x) + m.b;
}

/// Stochastic subgradient descent on the regularised hinge loss (labels in
/// {-1, +1}). Steps are eta0 / (1 + eta0 * lambda * t); each epoch's
/// averaged iterate replaces the current solution only when it lowers the
/// objective, so the recorded trace never increases.
inline MarginModel margin_train(const Eigen::MatrixXd& X, const std::vector<int>& y, double lambda, int epochs,
                                std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(X.rows());
  if (y.size() != n) throw LengthMismatch("margin_train: label count differs from rows");
  if (!(lambda > 0)) throw ConfigError("margin_train: lambda must be > 0");
  bool pos = false, neg = false;
  for (int v : y) {
    if (v == 1)
      pos = true;
    else if (v == -1)
      neg = true;
    else
      throw ConfigError("margin_train: labels must be -1 or +1");
  }
  if (!pos || !neg) throw SingleClassError("margin_train: both classes required");

  double max_norm2 = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) max_norm2 = std::max(max_norm2, X.row(i).squaredNorm());
  const double eta0 = 1.0 / (max_norm2 + 1.0);

  const Eigen::Index d = X.cols();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  double b = 0.0;
  MarginModel best{w, b, lambda, {}};
  double best_obj = margin_objective(X, y, w, b, lambda);

  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  double t = 0.0;
  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    Eigen::VectorXd w_sum = Eigen::VectorXd::Zero(d);
    double b_sum = 0.0;
    for (auto i : order) {
      const double eta = eta0 / (1.0 + eta0 * lambda * t);
      const double yi = y[i];
      const bool active = yi * (X.row(static_cast<Eigen::Index>(i)).dot(w) + b) < 1.0;
      w *= (1.0 - eta * lambda);
      if (active) {
        w += (eta * yi) * X.row(static_cast<Eigen::Index>(i)).transpose();
        b += eta * yi;
      }
      w_sum += w;
      b_sum += b;
      t += 1.0;
    }
    const Eigen::VectorXd w_avg = w_sum / static_cast<double>(n);
    const double b_avg = b_sum / static_cast<double>(n);
    const double obj_avg = margin_objective(X, y, w_avg, b_avg, lambda);
    const double obj_cur = margin_objective(X, y, w, b, lambda);
    if (obj_avg <= best_obj && obj_avg <= obj_cur) {
      best_obj = obj_avg;
      best.w = w_avg;
      best.b = b_avg;
    } else if (obj_cur < best_obj) {
      best_obj = obj_cur;
      best.w = w;
      best.b = b;
    }
    best.objective_trace.push_back(best_obj);
  }
  return best;
}

}  // namespace lgeq::learn
