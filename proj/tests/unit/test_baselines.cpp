#include <gtest/gtest.h>

#include "lgeq/baselines/baselines.hpp"
#include "lgeq/phantom/phantom.hpp"
#include "lgeq/preprocess/preprocess.hpp"
#include "oracles.hpp"

using namespace lgeq;
using namespace lgeq::baselines;

namespace {

const std::vector<LabeledCase>& corpus() {
  static const std::vector<LabeledCase> cases = [] {
    std::vector<LabeledCase> v;
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      phantom::PhantomSpec spec;
      spec.diseased = spec.scar = true;
      spec.dims = {64, 64, 4};
      v.push_back(preprocess::preprocess_case(phantom::generate_case(spec, 40 + seed), {}));
    }
    return v;
  }();
  return cases;
}

bool subset(const MaskSlice& a, const MaskSlice& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] && !b[i]) return false;
  return true;
}

MaskSlice ring_myo(int n) {
  MaskSlice m(n, n, 0);
  const double c = 0.5 * (n - 1);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double r = std::hypot(x - c, y - c);
      if (r >= 0.25 * n && r <= 0.45 * n) m(x, y) = 1;
    }
  return m;
}

}  // namespace

TEST(NSd, ThresholdFormula) {
  RemoteRegion r{MaskSlice(1, 1, 1), RemoteRegion::Source::provided, 50, 10};
  EXPECT_EQ(nsd_threshold(r, 2), 70.0);
  Slice s(3, 1, std::vector<float>{69, 70, 71});
  const MaskSlice myo(3, 1, 1);
  const auto m = nsd_segment(s, myo, r, 2);
  EXPECT_EQ(m[0], 0);
  EXPECT_EQ(m[1], 0);
  EXPECT_EQ(m[2], 1);
  EXPECT_THROW(nsd_segment(s, myo, r, 0), ConfigError);
  EXPECT_THROW(nsd_segment(s, myo, RemoteRegion{MaskSlice(3, 1, 0)}, 1), EmptyRegion);
}

TEST(NSd, NestedAndVolumeDecreasingOnPhantoms) {
  std::array<double, 6> volume{};
  for (const auto& c : corpus()) {
    const auto out = run_all(c);
    for (int n = 0; n < 6; ++n) volume[static_cast<std::size_t>(n)] += static_cast<double>(count_nonzero(out.masks[static_cast<std::size_t>(n)]));
    for (int z = 0; z < c.nz(); ++z)
      for (int n = 1; n < 6; ++n)
        EXPECT_TRUE(subset(out.masks[static_cast<std::size_t>(n)].slice(z), out.masks[static_cast<std::size_t>(n - 1)].slice(z)));
    for (const auto& m : out.masks) EXPECT_TRUE(subset(m.slice(0), c.myocardium.slice(0)));
    EXPECT_TRUE(out.remote_auto);
  }
  for (int n = 1; n < 6; ++n) EXPECT_LT(volume[static_cast<std::size_t>(n)], volume[static_cast<std::size_t>(n - 1)]);
}

TEST(Fwhm, Examples) {
  Slice s(4, 1, std::vector<float>{200, 100, 99.9f, 10});
  const MaskSlice myo(4, 1, 1);
  const auto m = fwhm_segment(s, myo);
  EXPECT_EQ(m, MaskSlice(4, 1, std::vector<std::uint8_t>{1, 1, 0, 0}));
  EXPECT_EQ(fwhm_segment(Slice(4, 1, 7.0f), myo), myo);
  EXPECT_THROW(fwhm_segment(s, MaskSlice(4, 1, 0)), EmptyMask);
}

TEST(Fwhm, SmallerThanTwoSdOnPhantoms) {
  double fwhm = 0, two_sd = 0;
  for (const auto& c : corpus()) {
    const auto out = run_all(c);
    two_sd += static_cast<double>(count_nonzero(out.masks[1]));
    fwhm += static_cast<double>(count_nonzero(out.masks[7]));
  }
  EXPECT_LT(fwhm, two_sd);
}

TEST(Remote, UniformMyocardiumPicksSectorZero) {
  const auto myo = ring_myo(40);
  const auto r = auto_remote_region(Slice(40, 40, 80.0f), myo);
  const double c = 0.5 * 39;
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x)
      if (r.mask(x, y)) ASSERT_EQ(sector_of(x, y, c, c), 0);
  EXPECT_GT(count_nonzero(r.mask), 0u);
  EXPECT_EQ(r.source, RemoteRegion::Source::automatic);
  EXPECT_THROW(auto_remote_region(Slice(40, 40), MaskSlice(40, 40, 0)), EmptyMask);
}

TEST(Remote, SectorsPartitionMyocardium) {
  const auto myo = ring_myo(30);
  std::array<std::size_t, 6> count{};
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 30; ++x)
      if (myo(x, y)) {
        const int k = sector_of(x, y, 14.5, 14.5);
        ASSERT_GE(k, 0);
        ASSERT_LT(k, 6);
        ++count[static_cast<std::size_t>(k)];
      }
  std::size_t total = 0;
  for (auto n : count) {
    EXPECT_GT(n, 0u);
    total += n;
  }
  EXPECT_EQ(total, count_nonzero(myo));
}

TEST(Remote, AvoidsScarOnPhantoms) {
  for (const auto& c : corpus())
    for (int z = 0; z < c.nz(); ++z) {
      const auto endo = c.endocardium.slice(z);
      const auto r = auto_remote_region(c.image.slice(z), c.myocardium.slice(z), &endo);
      EXPECT_EQ(count_nonzero(mask_and(r.mask, c.gt_scar->slice(z))), 0u) << c.case_id << " slice " << z;
    }
}

TEST(Remote, ProvidedMaskStatistics) {
  Slice s(4, 1, std::vector<float>{10, 20, 30, 40});
  const auto r = remote_from_mask(s, MaskSlice(4, 1, std::vector<std::uint8_t>{1, 1, 0, 0}));
  EXPECT_EQ(r.mean, 15.0);
  EXPECT_NEAR(r.sd, std::sqrt(50.0), 1e-12);
  EXPECT_EQ(r.source, RemoteRegion::Source::provided);
}

TEST(Gmm, SeparatedClustersRecovered) {
  Rng rng(1);
  std::vector<double> x;
  for (int i = 0; i < 300; ++i) x.push_back(40 + rng.normal(0, 0.5));
  for (int i = 0; i < 100; ++i) x.push_back(190 + rng.normal(0, 0.5));
  const auto g = gmm_fit(x);
  EXPECT_NEAR(g.mean[0], 40, 0.4);
  EXPECT_NEAR(g.mean[1], 190, 1.9);
  EXPECT_NEAR(g.weight[0], 0.75, 1e-6);
  EXPECT_TRUE(g.converged);
}

TEST(Gmm, LogLikelihoodNeverDecreases) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    std::vector<double> x;
    const int n = 20 + static_cast<int>(rng.below(200));
    for (int i = 0; i < n; ++i)
      x.push_back(rng.bernoulli(0.3) ? rng.normal(150, 30) : rng.rayleigh(40));
    const auto g = gmm_fit(x);
    for (std::size_t i = 1; i < g.log_likelihood.size(); ++i)
      EXPECT_GE(g.log_likelihood[i], g.log_likelihood[i - 1] - 1e-9 * std::abs(g.log_likelihood[i - 1]));
    EXPECT_NEAR(g.weight[0] + g.weight[1], 1.0, 1e-12);
    EXPECT_LE(g.mean[0], g.mean[1]);
  }
}

TEST(Gmm, SingleClusterGivesNearEmptyMask) {
  Rng rng(2);
  Slice s(40, 40);
  for (auto& v : s.raw()) v = static_cast<float>(rng.normal(100, 10));
  const MaskSlice myo(40, 40, 1);
  const auto g = gmm_fit(values_in(s, myo));
  EXPECT_LT(std::abs(g.mean[1] - g.mean[0]), 3 * std::max(g.sd[0], g.sd[1]));
  EXPECT_LT(static_cast<double>(count_nonzero(gmm_segment(s, myo, g))), 0.1 * 1600);
}

TEST(Gmm, Errors) {
  EXPECT_THROW(gmm_fit(std::vector<double>(5, 1.0)), DegenerateData);
  EXPECT_THROW(gmm_fit(std::vector<double>(20, 1.0)), DegenerateData);
}

TEST(Otsu, MatchesSweepOnPhantomMyocardium) {
  for (const auto& c : corpus())
    for (int z = 0; z < c.nz(); ++z) {
      const auto s = c.image.slice(z);
      const auto myo = c.myocardium.slice(z);
      std::array<std::uint64_t, 256> h{};
      for (std::size_t i = 0; i < s.size(); ++i)
        if (myo[i]) ++h[static_cast<std::size_t>(std::clamp(std::lround(s[i]), 0L, 255L))];
      const int t = oracle::otsu_sweep(h);
      const auto m = otsu_segment(s, myo);
      for (std::size_t i = 0; i < s.size(); ++i)
        ASSERT_EQ(m[i] != 0, myo[i] && std::clamp(std::lround(s[i]), 0L, 255L) > t);
    }
  EXPECT_THROW(otsu_segment(Slice(4, 4), MaskSlice(4, 4, 0)), EmptyMask);
}

TEST(RunAll, NamesAndProvidedRemote) {
  EXPECT_EQ(method_names().size(), 9u);
  auto c = corpus()[0];
  c.remote = Mask(c.myocardium.dims(), c.myocardium.spacing(), 0);
  for (int z = 0; z < c.nz(); ++z) {
    const auto endo = c.endocardium.slice(z);
    c.remote->set_slice(z, auto_remote_region(c.image.slice(z), c.myocardium.slice(z), &endo).mask);
  }
  const auto with = run_all(c);
  EXPECT_FALSE(with.remote_auto);
  EXPECT_EQ(with.masks[0], run_all(corpus()[0]).masks[0]);
}
