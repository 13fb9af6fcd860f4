#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lgeq/core/error.hpp"

namespace lgeq::learn {

/// Principal axes of a sample covariance, truncated to the smallest K whose
/// cumulative variance fraction reaches `var_frac`.
struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd axes;       // D x K, orthonormal columns
  Eigen::VectorXd variances;  // K, non-increasing
  double total_variance = 0;  // trace of the full covariance
  int k() const { return static_cast<int>(axes.cols()); }
  int dim() const { return static_cast<int>(mean.size()); }
};

/// Rows of X are observations.
inline PcaModel pca_fit(const Eigen::MatrixXd& X, double var_frac = 0.95) {
  if (X.rows() < 2) throw DegenerateData("pca: need at least two observations");
  if (!(var_frac > 0 && var_frac <= 1)) throw ConfigError("pca: var_frac must be in (0, 1]");
  PcaModel m;
  m.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd centred = X.rowwise() - m.mean.transpose();
  const Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(X.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw DegenerateData("pca: eigendecomposition failed");
  const Eigen::Index d = cov.rows();
  // Eigen returns ascending eigenvalues; clamp round-off negatives.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::reverse(order.begin(), order.end());
  std::vector<double> vals;
  for (auto i : order) vals.push_back(std::max(0.0, eig.eigenvalues()(i)));
  const double total = std::accumulate(vals.begin(), vals.end(), 0.0);
  if (!(total > 0)) throw DegenerateData("pca: all observations identical");
  m.total_variance = total;
  int k = 0;
  double cum = 0;
  while (k < d) {
    cum += vals[static_cast<std::size_t>(k)];
    ++k;
    if (cum >= var_frac * total * (1 - 1e-12)) break;
  }
  m.axes.resize(d, k);
  m.variances.resize(k);
  for (int j = 0; j < k; ++j) {
    Eigen::VectorXd v = eig.eigenvectors().col(order[static_cast<std::size_t>(j)]);
    // Deterministic sign: largest-magnitude component positive.
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    m.axes.col(j) = v;
    m.variances(j) = vals[static_cast<std::size_t>(j)];
  }
  return m;
}

/// axes^T (x - mean).
inline Eigen::VectorXd pca_project(const PcaModel& m, const Eigen::VectorXd& x) {
  if (x.size() != m.mean.size()) throw ShapeError("pca_project: dimension mismatch");
  return m.axes.transpose() * (x - m.mean);
}

inline Eigen::MatrixXd pca_project_rows(const PcaModel& m, const Eigen::MatrixXd& X) {
  if (X.cols() != m.mean.size()) throw ShapeError("pca_project: dimension mismatch");
  return (X.rowwise() - m.mean.transpose()) * m.axes;
}

}  // namespace lgeq::learn
