#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "temp_dir.hpp"
#include "trex/calibration.hpp"

namespace trex {
namespace {

TEST(Percentile, UniformGrid) {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  EXPECT_EQ(percentile(v, 95), 95.0);
  EXPECT_EQ(percentile(v, 0), 1.0);
  EXPECT_EQ(percentile(v, 100), 100.0);
}

TEST(Percentile, SingleSample) {
  const std::vector<double> v{4.25};
  for (double p : {0.0, 12.5, 50.0, 99.9, 100.0}) EXPECT_EQ(percentile(v, p), 4.25);
}

TEST(Percentile, Errors) {
  EXPECT_THROW(percentile(std::vector<double>{}, 50), CalibrationError);
  EXPECT_THROW(percentile(std::vector<double>{1.0}, 101), CalibrationError);
  EXPECT_THROW(percentile(std::vector<double>{1.0}, -1), CalibrationError);
}

TEST(Percentile, MatchesCountingOracle) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> n(1, 60), small(0, 9);
  std::uniform_real_distribution<double> p(0.0, 100.0);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> v(static_cast<std::size_t>(n(rng)));
    for (auto& x : v) x = small(rng) * 0.5;  // ties on purpose
    const double q = t % 10 == 0 ? 99.9 : p(rng);
    ASSERT_EQ(percentile(v, q), oracle::percentile(v, q)) << "p=" << q << " n=" << v.size();
  }
}

TEST(Percentile, LargeSampleMatchesSortIndex) {
  std::mt19937_64 rng(32);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(1'000'000);
  for (auto& x : v) x = g(rng);
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (double p : {1.0, 50.0, 95.0, 98.0, 99.9}) {
    const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size()) - 1e-9));
    EXPECT_EQ(percentile(v, p), sorted[rank - 1]);
  }
}

TEST(Derive, ConstantStreams) {
  const std::vector<double> c(500, 3.5), z(500, 0.0);
  EXPECT_EQ(derive_noise_floor(c), 3.5);
  EXPECT_EQ(derive_quiet_threshold(z), 0.0);
  EXPECT_EQ(derive_force_limit(c), 3.5);
}

TEST(Derive, PercentileChoices) {
  std::mt19937_64 rng(33);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> v(5000);
  for (auto& x : v) x = e(rng) * e(rng);
  EXPECT_EQ(derive_noise_floor(v), oracle::percentile(v, 98));
  EXPECT_EQ(derive_quiet_threshold(v), oracle::percentile(v, 95));
  EXPECT_EQ(derive_force_limit(v), oracle::percentile(v, 99.9));
}

TEST(Derive, ForceLimitMonotone) {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> u(0, 10);
  std::vector<double> v(2000);
  for (auto& x : v) x = u(rng);
  double prev = derive_force_limit(v);
  for (int i = 0; i < 50; ++i) {
    v.push_back(10.0 + i);
    const double now = derive_force_limit(v);
    EXPECT_GE(now, prev);
    prev = now;
  }
}

TEST(SlipThreshold, RoundsMinimumPeakDown) {
  std::vector<double> noise(1000, 0.05);
  noise.back() = 0.15;
  noise[0] = 0.15;
  EXPECT_DOUBLE_EQ(derive_slip_threshold(noise, std::vector<double>{0.31, 0.2006, 0.9}), 0.20);
}

TEST(SlipThreshold, InvertedIntervalIsInfeasible) {
  const std::vector<double> noise(1000, 0.30);
  try {
    derive_slip_threshold(noise, std::vector<double>{0.25, 0.4});
    FAIL();
  } catch (const CalibrationInfeasible& e) {
    EXPECT_DOUBLE_EQ(e.noise_p999, 0.30);
    EXPECT_DOUBLE_EQ(e.min_slip_peak, 0.25);
  }
}

TEST(SlipThreshold, NeverBelowNoiseCeiling) {
  // Rounding down would cross the noise P99.9; the ceiling wins.
  const std::vector<double> noise(1000, 0.2003);
  EXPECT_DOUBLE_EQ(derive_slip_threshold(noise, std::vector<double>{0.2006}), 0.2003);
}

TEST(SlipThreshold, SeparatesEveryEventFromNoise) {
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> nz(0.0, 0.12), pk(0.2, 1.5);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> noise(400), peaks(20);
    for (auto& x : noise) x = nz(rng);
    for (auto& x : peaks) x = pk(rng);
    const double th = derive_slip_threshold(noise, peaks);
    EXPECT_GE(th, oracle::percentile(noise, 99.9));
    for (double p : peaks) EXPECT_GE(p, th);
  }
}

TEST(CopThreshold, Examples) {
  EXPECT_DOUBLE_EQ(derive_cop_threshold(std::vector<double>{-3.0, -3.3, -3.6}), -3.0);
  EXPECT_DOUBLE_EQ(derive_cop_threshold(std::vector<double>{-3.1, -3.3, -3.6}), -3.0);
  EXPECT_DOUBLE_EQ(derive_cop_threshold(std::vector<double>{-3.6, -3.55, -3.9}), -3.5);
  EXPECT_DOUBLE_EQ(derive_cop_threshold(std::vector<double>{-29.0, -12.0, -10.0}), -10.0);
}

TEST(CopThreshold, EveryEventRetriggers) {
  std::mt19937_64 rng(36);
  std::uniform_real_distribution<double> u(-30.0, -0.6);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> ev(3 + t % 5);
    for (auto& x : ev) x = u(rng);
    const double th = derive_cop_threshold(ev);
    // Grid oracle: most negative multiple of 0.5 that is still >= the least-negative event.
    const double least = *std::max_element(ev.begin(), ev.end());
    double expected = 0.0;
    for (double g = -0.5; g >= -40.0; g -= 0.5)
      if (g >= least) expected = g;
    if (expected == 0.0) expected = -0.5;
    EXPECT_DOUBLE_EQ(th, expected) << least;
    for (double x : ev) EXPECT_LE(x, th + 0.5);
  }
}

TEST(CopThreshold, NeedsThreeEvents) {
  EXPECT_THROW(derive_cop_threshold(std::vector<double>{-5.0, -6.0}), CalibrationError);
}

// Synthetic recording built directly from proxy samples.
ProxySample static_sample(double sy_l, double sy_r, double fn, double cop) {
  ProxySample s;
  for (Side side : {Side::Left, Side::Right}) {
    s[side].contact_valid = true;
    s[side].fn_raw = fn;
    s[side].fn_ema = fn;
    s[side].cop = Point2{100, cop};
  }
  s[Side::Left].sy_raw = sy_l;
  s[Side::Right].sy_raw = sy_r;
  s.fn_max_ema = fn;
  s.mean_cop_y = cop;
  return s;
}

CalibrationRecording synthetic_recording(std::uint64_t seed, bool with_liftoff = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> nz(0.0, 0.1), fn(1.0, 3.0);
  CalibrationRecording rec;
  CalibrationSegment st{SegmentLabel::StaticHold, 0, 1000, {}, {}};
  for (int i = 0; i < 1200; ++i) st.samples.push_back(static_sample(nz(rng), nz(rng), fn(rng), 200.0));
  for (int i = 0; i < 3000; ++i) st.diff_pixel_samples.push_back(nz(rng) * 40);
  rec.segments.push_back(st);
  if (with_liftoff) {
    for (int e = 0; e < 4; ++e) {
      CalibrationSegment lf{SegmentLabel::Liftoff, 2000 + e * 100, 2050 + e * 100, {}, {}};
      for (int i = 0; i < 6; ++i) lf.samples.push_back(static_sample(i == 3 ? 0.4 + 0.1 * e : 0.05, 0.05, 2.0, 200.0));
      rec.segments.push_back(lf);
    }
  }
  for (int e = 0; e < 3; ++e) {
    CalibrationSegment pr{SegmentLabel::PressRelease, 5000 + e * 100, 5090 + e * 100, {}, {}};
    for (int i = 0; i < 10; ++i) pr.samples.push_back(static_sample(0.02, 0.02, 4.0 - 0.2 * i, 200.0 - (i < 5 ? 3.0 * i * (e + 1) : 0.0)));
    rec.segments.push_back(pr);
  }
  return rec;
}

TEST(RunCalibration, SyntheticRecording) {
  const CalibrationRecording rec = synthetic_recording(37);
  FixedParameters fx;
  fx.f_stop = 0.9;
  const CalibrationProfile p = run_calibration(rec, fx, "synthetic");
  EXPECT_NO_THROW(validate_profile(p));
  EXPECT_EQ(p.material_label, "synthetic");
  EXPECT_EQ(p.f_stop, 0.9);
  EXPECT_EQ(p.gamma, 1.5);
  EXPECT_EQ(p.alpha, 0.3);
  EXPECT_DOUBLE_EQ(p.theta_s, 0.40);
  EXPECT_EQ(p.tau, oracle::percentile(rec.segments[0].diff_pixel_samples, 98));
  EXPECT_EQ(p.provenance.at("tau").percentile, 98.0);
  EXPECT_EQ(p.provenance.at("theta_q").sample_count, 2400u);
  EXPECT_EQ(p.provenance.at("theta_s").sample_count, 4u);
  EXPECT_EQ(p.provenance.at("f_stop").method, "manual");
  EXPECT_LT(p.theta_c, 0.0);
  const SlipRuleCheck chk = check_slip_rule(rec, p.theta_s);
  EXPECT_EQ(chk.tpr, 1.0);
  EXPECT_EQ(chk.fpr, 0.0);
  EXPECT_EQ(chk.events, 4u);
  EXPECT_EQ(chk.static_frames, 1200u);
}

TEST(RunCalibration, Deterministic) {
  EXPECT_EQ(run_calibration(synthetic_recording(38), {}, "x"), run_calibration(synthetic_recording(38), {}, "x"));
}

TEST(RunCalibration, MissingSegmentsAreErrors) {
  EXPECT_THROW(run_calibration(synthetic_recording(39, false), {}, "x"), CalibrationError);
  CalibrationRecording rec = synthetic_recording(39);
  rec.segments.erase(rec.segments.begin());
  EXPECT_THROW(run_calibration(rec, {}, "x"), CalibrationError);
}

TEST(SlipRule, CountsMisclassifications) {
  CalibrationRecording rec = synthetic_recording(40);
  const SlipRuleCheck hi = check_slip_rule(rec, 0.45);
  EXPECT_DOUBLE_EQ(hi.tpr, 0.75);
  const SlipRuleCheck lo = check_slip_rule(rec, 0.05);
  EXPECT_GT(lo.fpr, 0.0);
}

TEST(Manifest, RoundTrip) {
  testing::TempDir dir("manifest");
  const std::vector<ManifestEntry> m{{SegmentLabel::StaticHold, 0, 250'000'000},
                                     {SegmentLabel::Liftoff, 260'000'000, 262'000'000},
                                     {SegmentLabel::Push, 300'000'000, 301'500'000},
                                     {SegmentLabel::PressRelease, 400'000'000, 404'000'000}};
  write_manifest(dir / "m.manifest", m);
  EXPECT_EQ(read_manifest(dir / "m.manifest"), m);
}

TEST(Manifest, MalformedLinesAreReported) {
  testing::TempDir dir("manifest");
  std::ofstream(dir / "bad.manifest") << "StaticHold 0 100\nLiftoff 50\n";
  try {
    read_manifest(dir / "bad.manifest");
    FAIL();
  } catch (const CalibrationError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  std::ofstream(dir / "label.manifest") << "Wiggle 0 100\n";
  EXPECT_THROW(read_manifest(dir / "label.manifest"), CalibrationError);
  std::ofstream(dir / "order.manifest") << "Push 100 0\n";
  EXPECT_THROW(read_manifest(dir / "order.manifest"), CalibrationError);
  EXPECT_THROW(read_manifest(dir / "missing.manifest"), CalibrationError);
}

TEST(ProfileDocument, RoundTripAndStableBytes) {
  testing::TempDir dir("profile");
  const CalibrationProfile p = run_calibration(synthetic_recording(41), {}, "soft_cup");
  save_profile(dir / "a.json", p);
  save_profile(dir / "b.json", load_profile(dir / "a.json"));
  EXPECT_EQ(load_profile(dir / "a.json"), p);
  std::ifstream a(dir / "a.json"), b(dir / "b.json");
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {}));
}

TEST(ProfileDocument, RejectsGarbage) {
  EXPECT_THROW(profile_from_json("{not json"), CalibrationError);
  EXPECT_THROW(profile_from_json(R"({"version": 99})"), CalibrationError);
}

TEST(ProfileValidation, Invariants) {
  CalibrationProfile p = run_calibration(synthetic_recording(42), {}, "x");
  CalibrationProfile bad = p;
  bad.theta_c = 0.5;
  EXPECT_THROW(validate_profile(bad), CalibrationError);
  bad = p;
  bad.f_lim = bad.f_stop;
  EXPECT_THROW(validate_profile(bad), CalibrationError);
  bad = p;
  bad.tau = std::nan("");
  EXPECT_THROW(validate_profile(bad), CalibrationError);
}

}  // namespace
}  // namespace trex
