#include <gtest/gtest.h>

#include "lgeq/core/rng.hpp"
#include "lgeq/metrics/metrics.hpp"
#include "oracles.hpp"

using namespace lgeq;
using namespace lgeq::metrics;

namespace {

int uniform_int(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

Mask random_mask(Rng& rng, Dims3 d, Spacing3 s, double p) {
  Mask m(d, s, 0);
  for (auto& v : m.raw()) v = rng.bernoulli(p);
  if (count_nonzero(m) == 0) m[uniform_int(rng, 0, static_cast<int>(m.size()) - 1)] = 1;
  return m;
}

std::vector<double> tied_sample(Rng& rng, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = uniform_int(rng, 0, 9);
  return v;
}

}  // namespace

TEST(Dice, Examples) {
  Mask a({4, 4, 1}, {1, 1, 1}, 0), b = a;
  a[0] = a[1] = a[2] = a[3] = 1;
  EXPECT_EQ(dice(a, a), 1.0);
  b[8] = b[9] = 1;
  EXPECT_EQ(dice(a, b), 0.0);
  b[8] = b[9] = 0;
  b[2] = b[3] = b[4] = b[5] = 1;
  EXPECT_EQ(dice(a, b), 0.5);
  EXPECT_EQ(dice(Mask({2, 2, 1}, {1, 1, 1}, 0), Mask({2, 2, 1}, {1, 1, 1}, 0)), 1.0);
  EXPECT_THROW(dice(a, Mask({3, 3, 1}, {1, 1, 1}, 0)), AlignmentError);
}

TEST(Dice, SymmetricAndBounded) {
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_mask(rng, {6, 5, 2}, {1, 1, 1}, 0.3), b = random_mask(rng, {6, 5, 2}, {1, 1, 1}, 0.3);
    const double d = dice(a, b);
    EXPECT_EQ(d, dice(b, a));
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
    EXPECT_EQ(d, 2.0 * static_cast<double>(count_nonzero(mask_and(a, b))) /
                     static_cast<double>(count_nonzero(a) + count_nonzero(b)));
  }
}

TEST(Hausdorff, Examples) {
  Mask a({3, 3, 3}, {1.25, 1.25, 8}, 0), b = a;
  a(1, 1, 0) = 1;
  EXPECT_EQ(hausdorff3d(a, a), 0.0);
  b(1, 1, 2) = 1;
  EXPECT_EQ(hausdorff3d(a, b), 16.0);
  EXPECT_THROW(hausdorff3d(a, Mask({3, 3, 3}, {1.25, 1.25, 8}, 0)), EmptyMask);
  EXPECT_THROW(hausdorff3d(a, Mask({3, 3, 2}, {1.25, 1.25, 8}, 1)), AlignmentError);
}

TEST(Hausdorff, MatchesAllPairsOracle) {
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    const Dims3 d{uniform_int(rng, 3, 10), uniform_int(rng, 3, 10), uniform_int(rng, 1, 4)};
    const Spacing3 s{1.25, 1.25, 8};
    auto a = random_mask(rng, d, s, rng.uniform(0.02, 0.4));
    auto b = random_mask(rng, d, s, rng.uniform(0.02, 0.4));
    ASSERT_LE(count_nonzero(a), 200u);
    const double h = hausdorff3d(a, b);
    EXPECT_NEAR(h, oracle::hausdorff(a, b), 1e-12);
    EXPECT_EQ(h, hausdorff3d(b, a));
  }
}

TEST(Hausdorff, DistanceTransformAgreesWithBruteForce) {
  Rng rng(3);
  for (int i = 0; i < 40; ++i) {
    const Dims3 d{uniform_int(rng, 4, 14), uniform_int(rng, 4, 14), uniform_int(rng, 1, 5)};
    const Spacing3 s{rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(1.0, 9.0)};
    const auto a = random_mask(rng, d, s, 0.1), b = random_mask(rng, d, s, 0.1);
    EXPECT_NEAR(hausdorff3d_edt(a, b), oracle::hausdorff(a, b), 1e-9);
  }
}

TEST(Hausdorff, ZeroIffIdenticalAndTriangle) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const Dims3 d{6, 6, 2};
    const Spacing3 s{1.25, 1.25, 8};
    const auto a = random_mask(rng, d, s, 0.2), b = random_mask(rng, d, s, 0.2), c = random_mask(rng, d, s, 0.2);
    EXPECT_EQ(hausdorff3d(a, b) == 0.0, a == b);
    EXPECT_LE(hausdorff3d(a, c), hausdorff3d(a, b) + hausdorff3d(b, c) + 1e-12);
  }
}

TEST(Volume, Examples) {
  const Spacing3 s{1.25, 1.25, 8};
  EXPECT_DOUBLE_EQ(scar_volume_cm3(1, s), 0.0125);
  EXPECT_DOUBLE_EQ(scar_volume_cm3(200, s), 2.5);
  Mask myo({4, 4, 2}, s, 0);
  myo[3] = myo[4] = myo[20] = 1;
  EXPECT_DOUBLE_EQ(percent_infarct(myo, myo), 100.0);
  const Mask empty({4, 4, 2}, s, 0);
  EXPECT_EQ(scar_volume_cm3(empty), 0.0);
  EXPECT_EQ(percent_infarct(empty, myo), 0.0);
  EXPECT_THROW(percent_infarct(myo, empty), DivisionByZero);
}

TEST(Volume, LinearInSliceDuplication) {
  const Spacing3 s{1.25, 1.25, 8};
  Mask one({5, 5, 1}, s, 0);
  one(1, 2, 0) = one(3, 3, 0) = 1;
  Mask three({5, 5, 3}, s, 0);
  for (int z = 0; z < 3; ++z) three.set_slice(z, one.slice(0));
  EXPECT_DOUBLE_EQ(scar_volume_cm3(three), 3 * scar_volume_cm3(one));
}

TEST(BlandAltman, Examples) {
  const std::vector<double> x{1, 2, 3, 4};
  EXPECT_EQ(bland_altman(x, x), std::make_pair(0.0, 0.0));
  const std::vector<double> y{4, 5, 6, 7};
  EXPECT_EQ(bland_altman(x, y), std::make_pair(3.0, 0.0));
  const auto [m, sd] = bland_altman(std::vector<double>{0, 0}, std::vector<double>{-1, 1});
  EXPECT_EQ(m, 0.0);
  EXPECT_DOUBLE_EQ(sd, std::sqrt(2.0));
  EXPECT_THROW(bland_altman(x, std::vector<double>{1}), LengthMismatch);
}

TEST(Spearman, MonotoneExamples) {
  const std::vector<double> x{1, 2, 3, 4, 5}, up{2, 3, 10, 11, 40}, down{9, 7, 5, 3, 1};
  EXPECT_DOUBLE_EQ(spearman(x, up), 1.0);
  EXPECT_DOUBLE_EQ(spearman(x, down), -1.0);
  EXPECT_THROW(spearman(x, std::vector<double>(5, 1.0)), ZeroVariance);
  EXPECT_THROW(spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2}), Error);
}

TEST(Spearman, MatchesRankThenPearsonOracle) {
  Rng rng(5);
  int done = 0;
  while (done < 500) {
    const auto x = tied_sample(rng, 15), y = tied_sample(rng, 15);
    const auto rx = oracle::ranks(x), ry = oracle::ranks(y);
    if (std::adjacent_find(rx.begin(), rx.end(), std::not_equal_to<>()) == rx.end() ||
        std::adjacent_find(ry.begin(), ry.end(), std::not_equal_to<>()) == ry.end())
      continue;
    EXPECT_NEAR(spearman(x, y), oracle::pearson(rx, ry), 1e-12);
    // invariant under a strictly monotone transform
    std::vector<double> ex(x.size());
    std::transform(x.begin(), x.end(), ex.begin(), [](double v) { return std::exp(v) - 3; });
    EXPECT_NEAR(spearman(ex, y), spearman(x, y), 1e-12);
    ++done;
  }
}

TEST(MannWhitney, Examples) {
  const std::vector<double> a{1, 2, 3}, b{10, 11, 12};
  EXPECT_EQ(mann_whitney_u(a, b).statistic, 0.0);
  const auto same = mann_whitney_u(a, a);
  EXPECT_EQ(same.statistic, 4.5);
  EXPECT_EQ(same.p_value, 1.0);
  // reference values from an independent statistics package
  const std::vector<double> x{1.5, 2, 2, 3.7, 4, 5, 5, 9}, y{2, 3, 3.7, 6, 7, 7, 8, 10, 11};
  const auto r = mann_whitney_u(x, y);
  EXPECT_EQ(r.statistic, 19.5);
  EXPECT_NEAR(r.p_value, 0.1220448805888066, 1e-12);
}

TEST(MannWhitney, UMatchesPairCount) {
  Rng rng(6);
  for (int i = 0; i < 500; ++i) {
    const auto x = tied_sample(rng, uniform_int(rng, 2, 20)), y = tied_sample(rng, uniform_int(rng, 2, 20));
    const auto r = mann_whitney_u(x, y);
    EXPECT_EQ(r.statistic, oracle::u_pair_count(x, y));
    EXPECT_GE(r.p_value, 0.0);
    EXPECT_LE(r.p_value, 1.0);
  }
}

TEST(PairedT, ZeroVariance) {
  const std::vector<double> x{1, 2, 3, 4};
  EXPECT_THROW(paired_t(x, x), ZeroVariance);
  EXPECT_THROW(paired_t(x, std::vector<double>{2, 3, 4, 5}), ZeroVariance);
}

TEST(PairedT, HighPrecisionReference) {
  // d = {2, -1, 3, 0, 1}: mean 1, SD sqrt(2.5), t = sqrt(2); the reference
  // p was evaluated at 40 significant digits.
  const auto r = paired_t(std::vector<double>(5, 0.0), std::vector<double>{2, -1, 3, 0, 1});
  EXPECT_NEAR(r.statistic, std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(r.p_value, 0.2301996410804989806544682926640567258032, 1e-13);
}

TEST(StudentT, TailValues) {
  EXPECT_NEAR(student_t_two_tailed(2.5, 7), 0.040992218585752874, 1e-13);
  EXPECT_NEAR(student_t_two_tailed(0.3, 1), 0.8144528418445154, 1e-13);
  EXPECT_NEAR(student_t_two_tailed(10, 30) / 4.5752514082296097e-11, 1.0, 1e-9);
  EXPECT_EQ(student_t_two_tailed(0, 5), 1.0);
}

TEST(Rates, Examples) {
  const auto p = sens_spec_acc({5, 0, 7, 0});
  EXPECT_EQ(p.sensitivity, 1.0);
  EXPECT_EQ(p.specificity, 1.0);
  EXPECT_EQ(p.accuracy, 1.0);
  const auto q = sens_spec_acc({3, 1, 2, 1});
  EXPECT_DOUBLE_EQ(q.sensitivity, 0.75);
  EXPECT_DOUBLE_EQ(q.specificity, 2.0 / 3);
  EXPECT_DOUBLE_EQ(q.accuracy, 5.0 / 7);
  EXPECT_THROW(sens_spec_acc({0, 1, 1, 0}), EmptyDenominator);
}

TEST(Rates, MvoSensitivity) {
  Mask gt({4, 4, 1}, {1, 1, 1}, 0), pred = gt;
  gt[5] = gt[6] = 1;
  pred = gt;
  pred[0] = 1;
  EXPECT_EQ(mvo_sensitivity(pred, gt), 1.0);
  EXPECT_EQ(mvo_sensitivity(Mask({4, 4, 1}, {1, 1, 1}, 0), gt), 0.0);
  pred[6] = 0;
  EXPECT_EQ(mvo_sensitivity(pred, gt), 0.5);
  EXPECT_THROW(mvo_sensitivity(pred, Mask({4, 4, 1}, {1, 1, 1}, 0)), EmptyDenominator);
}

TEST(Roc, AucMatchesPairCount) {
  Rng rng(7);
  for (int i = 0; i < 500; ++i) {
    const int n = uniform_int(rng, 2, 30);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> l(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      l[static_cast<std::size_t>(k)] = k == 0 ? 1 : k == 1 ? 0 : rng.bernoulli(0.5);
      s[static_cast<std::size_t>(k)] = uniform_int(rng, 0, 6) + 0.5 * l[static_cast<std::size_t>(k)];
    }
    EXPECT_NEAR(auc(s, l), oracle::auc_pair_count(s, l), 1e-12);
  }
}

TEST(Roc, CurveShape) {
  const std::vector<double> s{0.9, 0.8, 0.8, 0.1};
  const std::vector<int> l{1, 0, 1, 0};
  const auto roc = roc_curve(s, l);
  ASSERT_EQ(roc.size(), 4u);
  EXPECT_TRUE(std::isinf(roc[0].threshold));
  EXPECT_EQ(roc[1].tpr, 0.5);
  EXPECT_EQ(roc[2].fpr, 0.5);
  EXPECT_EQ(roc[2].tpr, 1.0);
  EXPECT_EQ(roc.back().fpr, 1.0);
  EXPECT_DOUBLE_EQ(auc(roc), 0.875);
  EXPECT_THROW(roc_curve(s, std::vector<int>(4, 1)), SingleClassError);
}
