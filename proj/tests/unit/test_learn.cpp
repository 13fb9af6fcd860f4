#include <gtest/gtest.h>

#include "lgeq/learn/margin.hpp"
#include "lgeq/learn/pca.hpp"
#include "lgeq/learn/train.hpp"

using namespace lgeq;
using namespace lgeq::learn;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0, sd);
  return v;
}

/// Direct nested-loop evaluation of an architecture from its flat parameter
/// vector. Conv weights are laid out [out][in][ky][kx] followed by the
/// biases; dense weights are [out][in] followed by the biases.
std::vector<double> naive_forward(const Architecture& arch, const Doubles& p, std::vector<double> x) {
  int c = arch.input.c, h = arch.input.h, w = arch.input.w;
  std::size_t off = 0;
  for (const auto& l : arch.layers) {
    switch (l.kind) {
      case LayerSpec::Kind::conv: {
        const int k = l.kernel, oh = h - k + 1, ow = w - k + 1;
        const std::size_t boff = off + static_cast<std::size_t>(l.units * c * k * k);
        std::vector<double> y(static_cast<std::size_t>(l.units * oh * ow));
        for (int o = 0; o < l.units; ++o)
          for (int yy = 0; yy < oh; ++yy)
            for (int xx = 0; xx < ow; ++xx) {
              double acc = p[boff + static_cast<std::size_t>(o)];
              for (int ci = 0; ci < c; ++ci)
                for (int ky = 0; ky < k; ++ky)
                  for (int kx = 0; kx < k; ++kx)
                    acc += p[off + static_cast<std::size_t>(((o * c + ci) * k + ky) * k + kx)] *
                           x[static_cast<std::size_t>((ci * h + yy + ky) * w + xx + kx)];
              y[static_cast<std::size_t>((o * oh + yy) * ow + xx)] = acc;
            }
        off = boff + static_cast<std::size_t>(l.units);
        c = l.units;
        h = oh;
        w = ow;
        x = std::move(y);
        break;
      }
      case LayerSpec::Kind::relu:
        for (auto& v : x) v = std::max(v, 0.0);
        break;
      case LayerSpec::Kind::maxpool: {
        std::vector<double> y(static_cast<std::size_t>(c * (h / 2) * (w / 2)));
        for (int ci = 0; ci < c; ++ci)
          for (int yy = 0; yy < h / 2; ++yy)
            for (int xx = 0; xx < w / 2; ++xx) {
              double m = -1e300;
              for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                  m = std::max(m, x[static_cast<std::size_t>((ci * h + 2 * yy + dy) * w + 2 * xx + dx)]);
              y[static_cast<std::size_t>((ci * (h / 2) + yy) * (w / 2) + xx)] = m;
            }
        h /= 2;
        w /= 2;
        x = std::move(y);
        break;
      }
      case LayerSpec::Kind::dense: {
        const std::size_t in = x.size(), boff = off + static_cast<std::size_t>(l.units) * in;
        std::vector<double> y(static_cast<std::size_t>(l.units));
        for (int o = 0; o < l.units; ++o) {
          double acc = p[boff + static_cast<std::size_t>(o)];
          for (std::size_t j = 0; j < in; ++j) acc += p[off + static_cast<std::size_t>(o) * in + j] * x[j];
          y[static_cast<std::size_t>(o)] = acc;
        }
        off = boff + static_cast<std::size_t>(l.units);
        c = l.units;
        h = w = 1;
        x = std::move(y);
        break;
      }
      case LayerSpec::Kind::dropout:
        break;
      case LayerSpec::Kind::softmax: {
        double s = 0;
        for (double v : x) s += std::exp(v);
        for (auto& v : x) v = std::exp(v) / s;
        break;
      }
    }
  }
  return x;
}

Architecture fc_net(int in, int hidden) {
  Architecture a;
  a.input = {1, 1, in};
  a.layers = {dense(hidden), relu(), dense(2), softmax()};
  return a;
}

}  // namespace

TEST(Net, ZeroWeightsGiveUniformSoftmax) {
  Net net(conv_classifier(13, {{4, 5}}, 8));
  Workspace ws;
  const auto p = net.predict(random_vec(169, 1), ws);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Net, IdentityKernelCopiesInput) {
  Architecture a;
  a.input = {1, 6, 6};
  a.layers = {conv(1, 3)};
  Net net(a);
  net.params()[4] = 1.0;  // centre tap
  const auto x = random_vec(36, 2);
  Workspace ws;
  net.forward(x, ws);
  for (int y = 0; y < 4; ++y)
    for (int xx = 0; xx < 4; ++xx)
      EXPECT_EQ(ws.act[1][static_cast<std::size_t>(y * 4 + xx)], x[static_cast<std::size_t>((y + 1) * 6 + xx + 1)]);
}

TEST(Net, MatchesNaiveReference) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto arch = conv_classifier(17, {{3, 3}, {5, 3}}, 7);
    Net net(arch);
    net.init_he(seed);
    for (std::size_t i = 0; i < net.params().size(); ++i)
      if (!net.weight_mask()[i]) net.params()[i] = 0.1 * std::sin(static_cast<double>(i));
    const auto x = random_vec(289, 100 + seed);
    Workspace ws;
    const auto got = net.predict(x, ws);
    const auto want = naive_forward(arch, net.params(), x);
    ASSERT_EQ(got.size(), want.size());
    double sum = 0;
    for (std::size_t j = 0; j < got.size(); ++j) {
      EXPECT_NEAR(got[j], want[j], 1e-10);
      sum += got[j];
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Net, ShapeErrors) {
  EXPECT_THROW(Net(conv_classifier(4, {{2, 5}}, 4)), ShapeError);
  Net net(conv_classifier(13, {{2, 3}}, 4));
  Workspace ws;
  EXPECT_THROW(net.predict(std::vector<double>(10), ws), ShapeError);
  Architecture bad;
  bad.input = {1, 1, 3};
  bad.layers = {softmax(), dense(2)};
  EXPECT_THROW(Net{bad}, ShapeError);
}

TEST(GradCheck, FullyConnectedNet) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Net net(fc_net(5 + static_cast<int>(seed % 3), 6 + static_cast<int>(seed % 4)));
    net.init_he(seed);
    const auto x = random_vec(net.input_shape().count(), 50 + seed);
    EXPECT_LT(grad_check(net, x, static_cast<int>(seed % 2), 1e-5), 1e-6) << "seed " << seed;
  }
}

TEST(GradCheck, ConvPoolNets) {
  // Two-stage trunks on 13x13 inputs and the full three-stage trunk on 29x29.
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Net net(conv_classifier(13, {{4, 5}, {8, 3}}, 16, 2, 0.0));
    net.init_he(seed);
    const auto x = random_vec(169, 200 + seed);
    EXPECT_LT(grad_check(net, x, static_cast<int>(seed % 2), 1e-5), 1e-4) << "13x13 seed " << seed;
    ++checked;
  }
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Net net(conv_classifier(29, {{3, 5}, {4, 3}, {4, 3}}, 8, 2, 0.0));
    net.init_he(seed);
    const auto x = random_vec(841, 300 + seed);
    EXPECT_LT(grad_check(net, x, static_cast<int>(seed % 2), 1e-5), 1e-4) << "29x29 seed " << seed;
    ++checked;
  }
  EXPECT_GE(checked, 12);
}

TEST(GradCheck, ZeroInputGivesZeroFirstLayerWeightGradients) {
  Net net(conv_classifier(13, {{4, 5}}, 8));
  net.init_he(3);
  for (std::size_t i = 0; i < net.params().size(); ++i)
    if (!net.weight_mask()[i]) net.params()[i] = 0.05;
  const std::vector<double> x(169, 0.0);
  Workspace ws;
  std::vector<double> g(net.params().size(), 0.0);
  sample_loss_and_grad(net, x, 1, ws, g, nullptr);
  const auto& first = std::get<ConvLayer>(net.layers()[0]);
  for (std::size_t i = first.w_off; i < first.b_off; ++i) EXPECT_EQ(g[i], 0.0);
  EXPECT_LT(grad_check(net, x, 1), 1e-4);
}

TEST(Sgdm, OneStepMatchesHandComputation) {
  std::vector<double> w{1.0, -2.0}, v{0.5, 0.25};
  const std::vector<double> g{0.2, -0.4};
  const std::vector<std::uint8_t> is_w{1, 0};
  sgdm_step(w, v, g, is_w, 0.1, 0.9, 0.01);
  // v0 = 0.9*0.5 - 0.1*(0.2 + 0.01*1) = 0.429 ; v1 = 0.9*0.25 - 0.1*(-0.4) = 0.265
  EXPECT_NEAR(v[0], 0.429, 1e-15);
  EXPECT_NEAR(v[1], 0.265, 1e-15);
  EXPECT_NEAR(w[0], 1.429, 1e-15);
  EXPECT_NEAR(w[1], -1.735, 1e-15);
}

TEST(Sgdm, WeightDecayShrinksNormWithoutDataGradient) {
  std::vector<double> w = random_vec(10, 4), v(10, 0.0);
  const std::vector<double> g(10, 0.0);
  const std::vector<std::uint8_t> is_w(10, 1);
  double prev = 0;
  for (double x : w) prev += x * x;
  for (int step = 0; step < 20; ++step) {
    sgdm_step(w, v, g, is_w, 0.1, 0.0, 1e-2);
    double now = 0;
    for (double x : w) now += x * x;
    EXPECT_LT(now, prev);
    prev = now;
  }
}

namespace {

Dataset separable_toy(std::uint64_t seed) {
  Dataset d;
  d.shape = {1, 1, 2};
  Rng rng(seed);
  while (d.size() < 40) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
    const double m = a + 2 * b;
    if (std::abs(m) < 0.2) continue;
    d.add({static_cast<float>(a), static_cast<float>(b)}, m > 0 ? 1 : 0);
  }
  return d;
}

}  // namespace

TEST(Train, ZeroLearningRateLeavesWeightsUnchanged) {
  Net net(fc_net(2, 4));
  net.init_he(1);
  TrainConfig cfg{0.0, 0.9, 4, 1e-4, 3, 0.0, false, 7};
  const auto r = net_train(separable_toy(1), net, cfg);
  EXPECT_EQ(r.model.params(), net.params());
}

TEST(Train, SeparableToyReachesFullAccuracy) {
  Net net(fc_net(2, 8));
  net.init_he(2);
  TrainConfig cfg{0.1, 0.5, 4, 0.0, 50, 0.0, false, 3};
  const auto data = separable_toy(5);
  const auto r = net_train(data, net, cfg);
  Workspace ws;
  int correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::vector<double> x(data.samples[i].begin(), data.samples[i].end());
    const auto p = r.model.predict(x, ws);
    correct += (p[1] > p[0]) == (data.labels[i] == 1);
  }
  EXPECT_EQ(correct, static_cast<int>(data.size()));
  EXPECT_LT(r.loss_trace.back(), r.loss_trace.front());
}

TEST(Train, SeededRunsAreBitIdentical) {
  Net net(conv_classifier(9, {{2, 3}}, 4));
  net.init_he(9);
  Dataset d;
  d.shape = {1, 9, 9};
  for (int i = 0; i < 12; ++i) {
    const auto v = random_vec(81, 500 + static_cast<std::uint64_t>(i));
    d.add(std::vector<float>(v.begin(), v.end()), i % 2);
  }
  TrainConfig cfg{1e-2, 0.75, 4, 1e-4, 3, 0.5, true, 11};
  const auto a = net_train(d, net, cfg), b = net_train(d, net, cfg);
  EXPECT_EQ(a.model.params(), b.model.params());
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  cfg.seed = 12;
  EXPECT_NE(net_train(d, net, cfg).model.params(), a.model.params());
}

TEST(Train, DivergenceIsReported) {
  Net net(fc_net(2, 4));
  net.init_he(1);
  TrainConfig cfg{1e300, 0.0, 1, 0.0, 5, 0.0, false, 0};
  EXPECT_THROW(net_train(separable_toy(2), net, cfg), DivergenceError);
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Pca, LineInThreeDimensions) {
  Eigen::MatrixXd X(10, 3);
  for (int i = 0; i < 10; ++i) X.row(i) << 1 + 2.0 * i, -1 + 1.0 * i, 3 - 0.5 * i;
  const auto m = pca_fit(X);
  ASSERT_EQ(m.k(), 1);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd x = X.row(i).transpose();
    const Eigen::VectorXd back = m.mean + m.axes * pca_project(m, x);
    EXPECT_LT((back - x).norm(), 1e-9);
  }
}

TEST(Pca, IsotropicSampleKeepsBothAxes) {
  Rng rng(3);
  Eigen::MatrixXd X(2000, 2);
  for (int i = 0; i < 2000; ++i) X.row(i) << rng.normal(), rng.normal();
  EXPECT_EQ(pca_fit(X).k(), 2);
}

TEST(Pca, InvariantsOnRandomData) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const int n = 40, d = 6;
    Eigen::MatrixXd X(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) X(i, j) = rng.normal() * (j + 1) + (j == 2 ? X(i, 0) : 0.0);
    const auto m = pca_fit(X, 0.95);
    const Eigen::MatrixXd gram = m.axes.transpose() * m.axes;
    EXPECT_LT((gram - Eigen::MatrixXd::Identity(m.k(), m.k())).cwiseAbs().maxCoeff(), 1e-8);
    for (int j = 1; j < m.k(); ++j) EXPECT_GE(m.variances(j - 1), m.variances(j));
    // minimal K reaching the fraction
    EXPECT_GE(m.variances.sum(), 0.95 * m.total_variance * (1 - 1e-12));
    EXPECT_LT(m.variances.head(m.k() - 1).sum(), 0.95 * m.total_variance);
    // projections are decorrelated
    const Eigen::MatrixXd P = pca_project_rows(m, X);
    const Eigen::MatrixXd c = P.rowwise() - P.colwise().mean();
    const Eigen::MatrixXd cov = c.transpose() * c / (n - 1);
    for (int a = 0; a < m.k(); ++a)
      for (int b = 0; b < m.k(); ++b) {
        if (a != b) EXPECT_NEAR(cov(a, b), 0.0, 1e-8);
      }
  }
}

TEST(Pca, IdenticalRowsAreDegenerate) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(5, 3);
  EXPECT_THROW(pca_fit(X), DegenerateData);
  EXPECT_THROW(pca_fit(Eigen::MatrixXd::Ones(1, 3)), DegenerateData);
}

TEST(Margin, SeparatesOneDimensionalPair) {
  Eigen::MatrixXd X(2, 1);
  X << -2, 2;
  const auto m = margin_train(X, {-1, 1}, 1e-2, 100, 1);
  EXPECT_LT(margin_decide(m, Eigen::VectorXd::Constant(1, -2.0)), 0);
  EXPECT_GT(margin_decide(m, Eigen::VectorXd::Constant(1, 2.0)), 0);
}

TEST(Margin, ObjectiveTraceNeverIncreases) {
  Rng rng(5);
  Eigen::MatrixXd X(60, 4);
  std::vector<int> y(60);
  for (int i = 0; i < 60; ++i) {
    y[static_cast<std::size_t>(i)] = i % 2 ? 1 : -1;
    for (int j = 0; j < 4; ++j) X(i, j) = rng.normal() + 0.7 * y[static_cast<std::size_t>(i)] * (j == 0);
  }
  const auto m = margin_train(X, y, 1e-2, 100, 3);
  ASSERT_EQ(m.objective_trace.size(), 100u);
  for (std::size_t e = 1; e < m.objective_trace.size(); ++e)
    EXPECT_LE(m.objective_trace[e], m.objective_trace[e - 1]);
  EXPECT_DOUBLE_EQ(m.objective_trace.back(), margin_objective(X, y, m.w, m.b, 1e-2));
}

TEST(Margin, NearGridSearchOptimumInTwoDimensions) {
  const double lambda = 0.1;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    Eigen::MatrixXd X(30, 2);
    std::vector<int> y(30);
    for (int i = 0; i < 30; ++i) {
      y[static_cast<std::size_t>(i)] = i % 2 ? 1 : -1;
      X(i, 0) = rng.normal() + 0.8 * y[static_cast<std::size_t>(i)];
      X(i, 1) = rng.normal() - 0.4 * y[static_cast<std::size_t>(i)];
    }
    double grid = 1e300;
    for (double w0 = -4; w0 <= 4; w0 += 0.05)
      for (double w1 = -4; w1 <= 4; w1 += 0.05)
        for (double b = -3; b <= 3; b += 0.05) grid = std::min(grid, margin_objective(X, y, Eigen::Vector2d(w0, w1), b, lambda));
    const auto m = margin_train(X, y, lambda, 300, seed);
    EXPECT_LE(m.objective_trace.back(), 1.05 * grid) << "seed " << seed;
  }
}

TEST(Margin, Errors) {
  Eigen::MatrixXd X(2, 1);
  X << 1, 2;
  EXPECT_THROW(margin_train(X, {1, 1}, 1e-2, 5, 0), SingleClassError);
  EXPECT_THROW(margin_train(X, {1}, 1e-2, 5, 0), LengthMismatch);
}

TEST(Augment, IdentityAndDoubleFlip) {
  const auto p = random_vec(49, 8);
  EXPECT_EQ(augment<double>(p, 7, AugmentParams{}), p);
  AugmentParams f;
  f.flip_h = true;
  const auto once = augment<double>(p, 7, f);
  EXPECT_NE(once, p);
  EXPECT_EQ(augment<double>(once, 7, f), p);
}

TEST(Augment, QuarterTurnMovesMarker) {
  // asymmetric L-shaped marker on a 5x5 patch
  std::vector<double> p(25, 0.0);
  p[0 * 5 + 1] = 1;
  p[0 * 5 + 2] = 2;
  p[1 * 5 + 1] = 3;
  AugmentParams r;
  r.rotation_deg = 90;
  const auto out = augment<double>(p, 5, r);
  // a quarter turn sends (x, y) to (4 - y, x) about the centre
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x)
      EXPECT_NEAR(out[static_cast<std::size_t>(x * 5 + 4 - y)], p[static_cast<std::size_t>(y * 5 + x)], 1e-9);
}

TEST(Augment, RandomDrawsStayInRange) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto a = AugmentParams::random(rng);
    EXPECT_LE(std::abs(a.rotation_deg), 20.0);
    EXPECT_LE(std::abs(a.shear), 0.1);
    EXPECT_GE(a.scale, 0.9);
    EXPECT_LE(a.scale, 1.1);
  }
  EXPECT_EQ(augment<double>(random_vec(49, 1), 7, std::uint64_t{4}).size(), 49u);
  EXPECT_THROW(augment<double>(random_vec(48, 1), 7, AugmentParams{}), ShapeError);
}

TEST(Balance, Contract) {
  std::vector<int> even(20);
  for (int i = 0; i < 20; ++i) even[static_cast<std::size_t>(i)] = i % 2;
  EXPECT_EQ(balance_classes(even, 1).size(), 20u);

  std::vector<int> skew(110, 0);
  for (int i = 0; i < 10; ++i) skew[static_cast<std::size_t>(100 + i)] = 1;
  const auto b = balance_classes(skew, 2);
  ASSERT_EQ(b.size(), 20u);
  for (int i = 100; i < 110; ++i) EXPECT_NE(std::find(b.begin(), b.end(), static_cast<std::size_t>(i)), b.end());
  EXPECT_EQ(balance_classes(skew, 2), b);

  std::vector<int> near(21, 0);
  for (int i = 0; i < 10; ++i) near[static_cast<std::size_t>(i)] = 1;
  EXPECT_EQ(balance_classes(near, 3).size(), 20u);
  EXPECT_EQ(balance_classes(near, 4).size(), 20u);
  EXPECT_THROW(balance_classes(std::vector<int>(5, 1), 0), EmptyClassError);
}
