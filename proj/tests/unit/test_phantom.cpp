#include <gtest/gtest.h>

#include "lgeq/core/morphology.hpp"
#include "lgeq/core/regions.hpp"
#include "lgeq/phantom/phantom.hpp"

using namespace lgeq;
using phantom::PhantomSpec;

namespace {

PhantomSpec diseased(bool mvo = false) {
  PhantomSpec s;
  s.diseased = s.scar = true;
  s.mvo = mvo;
  return s;
}

double mean_over(const Volume& v, const Mask& m) {
  double s = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (m[i]) {
      s += v[i];
      ++n;
    }
  return n ? s / static_cast<double>(n) : 0.0;
}

}  // namespace

TEST(Phantom, HealthySpecHasNoScar) {
  const auto c = phantom::generate_case(PhantomSpec{}, 1);
  ASSERT_TRUE(c.gt_scar.has_value());
  EXPECT_EQ(count_nonzero(*c.gt_scar), 0u);
  for (auto l : c.slice_labels) EXPECT_EQ(l, SliceLabel::healthy);
  EXPECT_GT(count_nonzero(c.myocardium), 0u);
}

TEST(Phantom, FullExtentTransmuralScarCoversMyocardium) {
  auto s = diseased();
  s.scar_extent_deg = 360;
  s.transmural_fraction = 1.0;
  const auto c = phantom::generate_case(s, 2);
  EXPECT_EQ(*c.gt_scar, c.myocardium);
}

TEST(Phantom, ScarBrighterThanHealthyMyocardium) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = phantom::generate_case(diseased(), seed);
    const Mask healthy = mask_minus(c.myocardium, *c.gt_scar);
    EXPECT_GT(mean_over(c.image, *c.gt_scar), mean_over(c.image, healthy)) << "seed " << seed;
  }
}

TEST(Phantom, GeometryIsConsistent) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto c = phantom::generate_case(diseased(true), seed);
    for (std::size_t i = 0; i < c.myocardium.size(); ++i) {
      if (c.endocardium[i]) ASSERT_TRUE(c.epicardium[i]);
      ASSERT_EQ(c.myocardium[i] != 0, c.epicardium[i] && !c.endocardium[i]);
      if ((*c.gt_scar)[i]) ASSERT_TRUE(c.myocardium[i]);
      if ((*c.gt_mvo)[i]) ASSERT_TRUE(c.myocardium[i] && !(*c.gt_scar)[i]);
    }
  }
}

TEST(Phantom, ScarTouchesTheBloodPool) {
  const auto c = phantom::generate_case(diseased(), 4);
  for (int z = 0; z < c.nz(); ++z) {
    const MaskSlice grown = binary_dilate(c.endocardium.slice(z), StructuringElement::disk(1));
    EXPECT_GT(count_nonzero(mask_and(grown, c.gt_scar->slice(z))), 0u) << "slice " << z;
  }
}

TEST(Phantom, MvoIsEnclosedAndHypointense) {
  std::size_t total = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto c = phantom::generate_case(diseased(true), seed);
    for (int z = 0; z < c.nz(); ++z) {
      const MaskSlice m = c.gt_mvo->slice(z);
      const MaskSlice u = mask_or(c.gt_scar->slice(z), c.endocardium.slice(z));
      const MaskSlice enclosed = fill_holes_2d(u, Connectivity::four);
      for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i]) ASSERT_TRUE(enclosed[i] && !u[i]);
      total += count_nonzero(m);
    }
    EXPECT_LT(mean_over(c.image, *c.gt_mvo), mean_over(c.image, *c.gt_scar));
  }
  EXPECT_GT(total, 0u);
}

TEST(Phantom, LabelsFollowScarPresence) {
  auto s = diseased();
  s.scar_first_slice = 2;
  s.scar_last_slice = 3;
  const auto c = phantom::generate_case(s, 9);
  for (int z = 0; z < c.nz(); ++z) {
    const bool any = count_nonzero(c.gt_scar->slice(z)) > 0;
    EXPECT_EQ(any, z == 2 || z == 3);
    EXPECT_EQ(c.slice_labels[static_cast<std::size_t>(z)], any ? SliceLabel::diseased : SliceLabel::healthy);
  }
}

TEST(Phantom, DeterministicInSpecAndSeed) {
  const auto a = phantom::generate_case(diseased(true), 21);
  const auto b = phantom::generate_case(diseased(true), 21);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(*a.gt_scar, *b.gt_scar);
  EXPECT_EQ(*a.gt_mvo, *b.gt_mvo);
  EXPECT_NE(phantom::generate_case(diseased(true), 22).image, a.image);
}

TEST(Phantom, InvalidSpecsThrow) {
  PhantomSpec s;
  s.scar = true;
  EXPECT_THROW(phantom::generate_case(s, 0), SpecError);
  s = diseased();
  s.inner_radius_mm = 40;
  EXPECT_THROW(phantom::generate_case(s, 0), SpecError);
  s = PhantomSpec{};
  s.mvo = true;
  EXPECT_THROW(phantom::generate_case(s, 0), SpecError);
  s = diseased();
  s.transmural_fraction = 0;
  EXPECT_THROW(phantom::generate_case(s, 0), SpecError);
  s = diseased();
  s.intensity.scar_mean = 10;
  EXPECT_THROW(phantom::generate_case(s, 0), SpecError);
}
