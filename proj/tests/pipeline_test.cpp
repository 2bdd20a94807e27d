#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "trex/tactile_processor.hpp"

namespace trex {
namespace {

DiffImage diff_from(const std::vector<double>& v, int h, int w) {
  DiffImage d{FloatImage(h, w)};
  for (int i = 0; i < h * w; ++i) d.values.pixels()[i] = static_cast<float>(v[i]);
  return d;
}

ContactMask full_mask(int h, int w) {
  ContactMask m{MaskImage(h, w, 1), h * w, true};
  return m;
}

TEST(Diff, IdenticalFramesGiveZero) {
  std::mt19937_64 rng(1);
  const GrayImage a = oracle::random_gray(rng, 48, 64);
  const DiffImage d = compute_diff(a, a);
  for (float v : d.values.pixels()) EXPECT_EQ(v, 0.0f);
}

TEST(Diff, SinglePixelChange) {
  GrayImage ref(10, 10, 100);
  GrayImage cur = ref;
  cur(3, 4) = 120;
  const DiffImage d = compute_diff(cur, ref);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) EXPECT_EQ(d.values(y, x), (y == 3 && x == 4) ? 20.0f : 0.0f);
}

TEST(Diff, ShapeMismatchThrows) {
  EXPECT_THROW(compute_diff(GrayImage(4, 4), GrayImage(4, 5)), StructuralError);
}

TEST(ContactMask, EmptyDiff) {
  const ContactMask m = compute_contact_mask(DiffImage{FloatImage(20, 20)}, 5.0, 50);
  EXPECT_EQ(m.support_count, 0);
  EXPECT_FALSE(m.valid);
}

TEST(ContactMask, IsolatedPixelIsOpenedAway) {
  DiffImage d{FloatImage(20, 20)};
  d.values(10, 10) = 200.0f;
  EXPECT_EQ(compute_contact_mask(d, 5.0, 1).support_count, 0);
}

TEST(ContactMask, SolidBlockSurvives) {
  DiffImage d{FloatImage(40, 40)};
  for (int y = 10; y < 20; ++y)
    for (int x = 15; x < 25; ++x) d.values(y, x) = 50.0f;
  const ContactMask m = compute_contact_mask(d, 5.0, 20);
  EXPECT_EQ(m.support_count, 100);
  EXPECT_TRUE(m.valid);
}

TEST(ContactMask, ValidityFollowsNmin) {
  DiffImage d{FloatImage(40, 40)};
  for (int y = 10; y < 20; ++y)
    for (int x = 15; x < 25; ++x) d.values(y, x) = 50.0f;
  EXPECT_TRUE(compute_contact_mask(d, 5.0, 100).valid);
  EXPECT_FALSE(compute_contact_mask(d, 5.0, 101).valid);
}

TEST(ContactMask, ThresholdIsStrict) {
  DiffImage d{FloatImage(12, 12, 5.0f)};
  EXPECT_EQ(compute_contact_mask(d, 5.0, 1).support_count, 0);
  d = DiffImage{FloatImage(12, 12, 5.5f)};
  EXPECT_EQ(compute_contact_mask(d, 5.0, 1).support_count, 144);
}

TEST(ContactMask, MatchesBruteForceOpening) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    std::uniform_int_distribution<int> dim(1, 30);
    const int h = dim(rng), w = dim(rng);
    auto [cur, ref] = oracle::blocky_pair(rng, h, w);
    const auto d = oracle::diff(cur, ref);
    const auto expected = oracle::opened_mask(d, h, w, 5.0);
    const ContactMask m = compute_contact_mask(compute_diff(cur, ref), 5.0, 1);
    int count = 0;
    for (int i = 0; i < h * w; ++i) {
      ASSERT_EQ(m.mask.pixels()[i], expected[i]) << "case " << t << " pixel " << i;
      count += expected[i];
    }
    EXPECT_EQ(m.support_count, count);
  }
}

TEST(ContactMask, RejectsBadParameters) {
  DiffImage d{FloatImage(4, 4)};
  EXPECT_THROW(compute_contact_mask(d, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(compute_contact_mask(d, 5.0, 0), std::invalid_argument);
}

TEST(Weights, PowerInsideMaskOnly) {
  DiffImage d{FloatImage(3, 3, 4.0f)};
  ContactMask m{MaskImage(3, 3), 1, true};
  m.mask(1, 1) = 1;
  const WeightMap w = compute_weights(d, m, 1.5);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) EXPECT_DOUBLE_EQ(w.weights(y, x), (y == 1 && x == 1) ? 8.0 : 0.0);
}

TEST(Weights, EmptyMaskGivesZero) {
  DiffImage d{FloatImage(5, 5, 30.0f)};
  const WeightMap w = compute_weights(d, ContactMask{MaskImage(5, 5), 0, false}, 1.5);
  for (double v : w.weights.pixels()) EXPECT_EQ(v, 0.0);
}

TEST(NormalForce, ZeroAndUniform) {
  EXPECT_EQ(compute_fn(WeightMap{DoubleImage(8, 8)}), 0.0);
  EXPECT_DOUBLE_EQ(compute_fn(WeightMap{DoubleImage(8, 8, 3.25)}), 3.25);
}

TEST(NormalForce, BoundedByMaxWeight) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    auto [cur, ref] = oracle::blocky_pair(rng, 24, 32);
    const DiffImage d = compute_diff(cur, ref);
    const WeightMap w = compute_weights(d, compute_contact_mask(d, 5.0, 1), 1.5);
    const double f = compute_fn(w);
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, std::pow(255.0, 1.5));
  }
}

TEST(CenterOfPressure, SymmetricBlob) {
  DoubleImage w(kSensorHeight, kSensorWidth);
  for (int y = 230; y <= 250; ++y)
    for (int x = 310; x <= 330; ++x) w(y, x) = 1.0 + std::abs(y - 240) + std::abs(x - 320);
  const auto c = compute_cop(WeightMap{w});
  ASSERT_TRUE(c);
  EXPECT_NEAR(c->x, 320.0, 1e-9);
  EXPECT_NEAR(c->y, 240.0, 1e-9);
}

TEST(CenterOfPressure, Midpoint) {
  DoubleImage w(200, 400);
  w(100, 100) = 2.0;
  w(100, 300) = 2.0;
  const auto c = compute_cop(WeightMap{w});
  ASSERT_TRUE(c);
  EXPECT_DOUBLE_EQ(c->x, 200.0);
  EXPECT_DOUBLE_EQ(c->y, 100.0);
}

TEST(CenterOfPressure, AbsentForZeroWeight) { EXPECT_FALSE(compute_cop(WeightMap{DoubleImage(5, 5)})); }

TEST(CenterOfPressure, InsideImage) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    auto [cur, ref] = oracle::blocky_pair(rng, 30, 40);
    const DiffImage d = compute_diff(cur, ref);
    const auto c = compute_cop(compute_weights(d, compute_contact_mask(d, 5.0, 1), 1.5));
    if (!c) continue;
    EXPECT_GE(c->x, 0.0);
    EXPECT_LE(c->x, 39.0);
    EXPECT_GE(c->y, 0.0);
    EXPECT_LE(c->y, 29.0);
  }
}

TEST(MeanVerticalCop, Examples) {
  EXPECT_EQ(mean_vertical_cop(Point2{0, 100}, Point2{0, 120}, true, true), 110.0);
  EXPECT_FALSE(mean_vertical_cop(Point2{0, 100}, Point2{0, 120}, true, false));
  EXPECT_FALSE(mean_vertical_cop(Point2{0, 100}, std::nullopt, true, true));
  EXPECT_EQ(mean_vertical_cop(Point2{5, 77}, Point2{9, 77}, true, true), 77.0);
}

TEST(Shear, ConstantField) {
  FlowField f{FloatImage(10, 10), FloatImage(10, 10, -0.5f)};
  EXPECT_DOUBLE_EQ(compute_sy(f, full_mask(10, 10)), 0.5);
}

TEST(Shear, OddMedian) {
  FlowField f{FloatImage(1, 3), FloatImage(1, 3)};
  f.vy(0, 0) = 0.1f;
  f.vy(0, 1) = -0.9f;
  f.vy(0, 2) = 0.2f;
  EXPECT_NEAR(compute_sy(f, full_mask(1, 3)), 0.2, 1e-7);
}

TEST(Shear, InvalidMaskGivesZero) {
  FlowField f{FloatImage(4, 4), FloatImage(4, 4, 2.0f)};
  ContactMask m = full_mask(4, 4);
  m.valid = false;
  EXPECT_EQ(compute_sy(f, m), 0.0);
}

TEST(Shear, InvariantToSupportDuplication) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-3.0f, 3.0f);
  for (int t = 0; t < 30; ++t) {
    const int n = 7 + t;
    FlowField small{FloatImage(1, n), FloatImage(1, n)};
    FlowField big{FloatImage(2, n), FloatImage(2, n)};
    for (int x = 0; x < n; ++x) {
      const float v = u(rng);
      small.vy(0, x) = v;
      big.vy(0, x) = v;
      big.vy(1, x) = v;
    }
    EXPECT_DOUBLE_EQ(compute_sy(small, full_mask(1, n)), compute_sy(big, full_mask(2, n)));
  }
}

TEST(Ema, Examples) {
  EXPECT_DOUBLE_EQ(ema_update(0.0, 1.0, 0.3), 0.3);
  EXPECT_DOUBLE_EQ(ema_update(2.5, 2.5, 0.3), 2.5);
}

TEST(Ema, Contraction) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> v(-100, 100), a(1e-3, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const double p = v(rng), r = v(rng), al = a(rng);
    EXPECT_NEAR(std::abs(ema_update(p, r, al) - r), (1 - al) * std::abs(p - r), 1e-9 * (1 + std::abs(p - r)));
  }
}

SideInputs side(double fn, double sy, std::optional<Point2> cop) {
  SideInputs s;
  s.fn_raw = fn;
  s.sy_raw = sy;
  s.cop = cop;
  s.contact_valid = cop.has_value();
  s.support_count = cop ? 100 : 0;
  return s;
}

TEST(ProxyAssembly, FirstCycleSeedsEmas) {
  const ProxySample s = assemble_proxy_sample(side(2.0, 0.1, Point2{1, 100}), side(3.0, 0.3, Point2{1, 120}), nullptr, 0.3);
  EXPECT_EQ(s[Side::Left].fn_ema, 2.0);
  EXPECT_EQ(s[Side::Right].sy_ema, 0.3);
  EXPECT_EQ(s.sy_max_ema, 0.3);
  EXPECT_EQ(s.fn_max_ema, 3.0);
  ASSERT_TRUE(s.mean_cop_y);
  EXPECT_EQ(*s.mean_cop_y, 110.0);
}

TEST(ProxyAssembly, TwoCycleChain) {
  const ProxySample a = assemble_proxy_sample(side(1.0, 0.2, Point2{}), side(1.0, 0.1, std::nullopt), nullptr, 0.3);
  const ProxySample b = assemble_proxy_sample(side(2.0, 0.5, Point2{}), side(4.0, 0.0, std::nullopt), &a, 0.3);
  EXPECT_DOUBLE_EQ(b[Side::Left].fn_ema, oracle::ema(1.0, 2.0, 0.3));
  EXPECT_DOUBLE_EQ(b[Side::Right].fn_ema, oracle::ema(1.0, 4.0, 0.3));
  EXPECT_DOUBLE_EQ(b[Side::Left].sy_ema, oracle::ema(0.2, 0.5, 0.3));
  EXPECT_DOUBLE_EQ(b.fn_max_ema, std::max(b[Side::Left].fn_ema, b[Side::Right].fn_ema));
  EXPECT_DOUBLE_EQ(b.sy_max_ema, std::max(b[Side::Left].sy_ema, b[Side::Right].sy_ema));
  EXPECT_EQ(b[Side::Left].sy_raw, 0.5);
  EXPECT_FALSE(b.mean_cop_y);
  EXPECT_FALSE(b[Side::Right].cop);
}

TEST(Processor, DeterministicOnIdenticalInput) {
  oracle::Speckle tex(9, 96, 128, 300);
  std::vector<GrayImage> frames;
  for (int i = 0; i < 6; ++i) frames.push_back(tex.render(0.4 * i));
  auto run = [&] {
    PipelineParams p;
    p.n_min = 10;
    TactileProcessor proc(p);
    proc.set_reference(Side::Left, ReferenceFrame{GrayImage(96, 128, 50), 0});
    proc.set_reference(Side::Right, ReferenceFrame{GrayImage(96, 128, 50), 0});
    std::vector<ProxySample> out;
    for (int i = 0; i < 6; ++i) {
      out.push_back(proc.process({frames[i], i * 1000, Side::Left}, {frames[5 - i], i * 1000, Side::Right}));
    }
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Processor, RejectsSwappedSides) {
  TactileProcessor proc;
  const TactileFrame f{GrayImage(8, 8), 0, Side::Left};
  EXPECT_THROW(proc.process(f, f), std::invalid_argument);
}

TEST(Processor, FirstFrameBecomesReference) {
  TactileProcessor proc;
  GrayImage img(32, 32, 90);
  const ProxySample s = proc.process({img, 0, Side::Left}, {img, 0, Side::Right});
  EXPECT_FALSE(s[Side::Left].contact_valid);
  EXPECT_EQ(s[Side::Left].fn_raw, 0.0);
  ASSERT_TRUE(proc.reference(Side::Right));
  EXPECT_EQ(proc.reference(Side::Right)->pixels, img);
}

TEST(Processor, ReferenceRefreshOnlyWhenAllowed) {
  PipelineParams p;
  p.reference_refresh_frames = 3;
  TactileProcessor proc(p);
  GrayImage a(32, 32, 90), b(32, 32, 92);  // below tau: no contact
  proc.process({a, 0, Side::Left}, {a, 0, Side::Right});
  for (int i = 1; i <= 5; ++i) proc.process({b, i, Side::Left}, {b, i, Side::Right}, false);
  EXPECT_EQ(proc.reference(Side::Left)->pixels, a);
  for (int i = 6; i <= 8; ++i) proc.process({b, i, Side::Left}, {b, i, Side::Right}, true);
  EXPECT_EQ(proc.reference(Side::Left)->pixels, b);
}

TEST(PipelineOracle, RandomizedAgreement) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> gam(0.5, 2.5), tau(1.0, 40.0);
  for (int t = 0; t < 200; ++t) {
    std::uniform_int_distribution<int> dim(3, 24);
    const int h = dim(rng), w = dim(rng);
    auto [cur, ref] = oracle::blocky_pair(rng, h, w);
    const double g = gam(rng), th = tau(rng);
    const DiffImage d = compute_diff(cur, ref);
    const auto od = oracle::diff(cur, ref);
    const WeightMap wm = compute_weights(d, compute_contact_mask(d, th, 1), g);
    const auto ow = oracle::weights(od, oracle::opened_mask(od, h, w, th), g);
    for (int i = 0; i < h * w; ++i) ASSERT_TRUE(oracle::close_rel(wm.weights.pixels()[i], ow[i]));
    EXPECT_TRUE(oracle::close_rel(compute_fn(wm), oracle::fn(ow)));
    const auto c = compute_cop(wm);
    const auto oc = oracle::cop(ow, h, w);
    ASSERT_EQ(c.has_value(), oc.has_value());
    if (c) {
      EXPECT_TRUE(oracle::close_rel(c->x, oc->x));
      EXPECT_TRUE(oracle::close_rel(c->y, oc->y));
    }
  }
}

}  // namespace
}  // namespace trex
