#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "oracles.hpp"
#include "temp_dir.hpp"
#include "trex/plant.hpp"
#include "trex/tactile_processor.hpp"

namespace trex {
namespace {

GripperCommand squeeze(const PlantParams& p, double effort) {
  GripperCommand c;
  c.effort = effort;
  c.position = p.contact_position - p.squeeze_saturation;  // full grip
  return c;
}

ScenarioScript lifted(double jerk = 0.0, std::int64_t length = 200) {
  return ScenarioScript{{{EventKind::SupportRemove, 1, jerk, 0, 0, 0}}, length};
}

PlantState run(PlantState s, const GripperCommand& c, const ScenarioScript& script, const PlantParams& p, int n) {
  for (int i = 0; i < n; ++i) s = plant_step(s, c, script, p);
  return s;
}

TEST(PlantPresets, BuiltInPresetsAreSelfConsistent) {
  EXPECT_NO_THROW(validate_plant(soft_cup_preset(), 1200.0));
  EXPECT_NO_THROW(validate_plant(hard_cup_preset(), 1200.0));
  EXPECT_EQ(preset_by_name("soft"), soft_cup_preset());
  EXPECT_EQ(preset_by_name("hard_cup"), hard_cup_preset());
  EXPECT_THROW(preset_by_name("glass"), std::invalid_argument);
}

TEST(PlantPresets, ShippedFilesMatchBuiltIns) {
  const std::filesystem::path dir = std::filesystem::path(TREX_SOURCE_DIR) / "presets";
  EXPECT_EQ(load_plant(dir / "soft_cup.json"), soft_cup_preset());
  EXPECT_EQ(load_plant(dir / "hard_cup.json"), hard_cup_preset());
}

TEST(PlantPresets, JsonRoundTrip) {
  testing::TempDir tmp("plant_json");
  PlantParams p = hard_cup_preset();
  p.asymmetry = 8.0;
  p.rng_seed = 77;
  save_plant(tmp / "p.json", p);
  EXPECT_EQ(load_plant(tmp / "p.json"), p);
  EXPECT_THROW(plant_from_json("{\"asymmetry\": \"x\"}"), std::invalid_argument);
  EXPECT_THROW(plant_from_json("not json"), std::invalid_argument);
}

TEST(PlantPresets, ValidationRejectsInconsistentParameters) {
  PlantParams p = soft_cup_preset();
  p.asymmetry = 0.9;
  EXPECT_THROW(validate_plant(p, 1200.0), std::invalid_argument);

  p = soft_cup_preset();
  EXPECT_THROW(validate_plant(p, crush_effort(p, 0.0) + 100.0), std::invalid_argument);  // crushes at e_init
  p.payload_mass = 1.0;
  EXPECT_THROW(validate_plant(p, 1200.0), std::invalid_argument);  // cannot carry the weight
}

TEST(PlantStatics, HoldingAtInitialEffortNeitherSlipsNorDeforms) {
  for (const PlantParams& p : {soft_cup_preset(), hard_cup_preset()}) {
    const ScenarioScript script = lifted();
    PlantState s = initial_plant_state(p, script);
    for (int i = 0; i < 150; ++i) {
      s = plant_step(s, squeeze(p, 1200.0), script, p);
      ASSERT_EQ(s.slip_velocity, 0.0) << p.name << " cycle " << s.cycle;
    }
    EXPECT_EQ(s.slip_offset, 0.0);
    EXPECT_EQ(s.creep_offset, 0.0);
    EXPECT_FALSE(s.deformed);
    EXPECT_FALSE(s.dropped);
  }
}

TEST(PlantStatics, SupportedCupCarriesNoLoad) {
  const PlantParams p = soft_cup_preset();
  const ScenarioScript script{{}, 50};
  const PlantState s = run(initial_plant_state(p, script), squeeze(p, 50.0), script, p, 20);
  EXPECT_EQ(s.load, 0.0);
  EXPECT_EQ(s.slip_offset, 0.0);
  EXPECT_FALSE(s.dropped);
}

TEST(PlantStatics, SlipVelocityMatchesFrictionModel) {
  const PlantParams p = soft_cup_preset();
  const ScenarioScript script = lifted();
  for (double effort : {25.0, 30.0, 40.0, 44.0}) {
    const PlantState s = plant_step(initial_plant_state(p, script), squeeze(p, effort), script, p);
    const double weight = 9.81 * p.cup_mass;
    const double capacity = 2.0 * p.friction_mu * p.effort_to_normal * effort;
    ASSERT_NEAR(s.capacity, capacity, 1e-15);
    ASSERT_FALSE(s.dropped);
    const double expected = std::min(p.slip_v0 + p.slip_gain * (weight / capacity - 1.0), p.slip_vmax);
    EXPECT_NEAR(s.slip_velocity, expected, 1e-12) << "effort " << effort;
    EXPECT_NEAR(s.slip_offset, expected, 1e-12);
    EXPECT_NEAR(s.pose_drift, p.drift_per_px * expected, 1e-12);
  }
}

TEST(PlantStatics, HalfGripHalvesCapacity) {
  const PlantParams p = soft_cup_preset();
  const ScenarioScript script = lifted();
  GripperCommand c = squeeze(p, 1000.0);
  c.position = p.contact_position - 0.5 * p.squeeze_saturation;
  const PlantState s = plant_step(initial_plant_state(p, script), c, script, p);
  EXPECT_NEAR(s.capacity, 0.5, 1e-12);
  c.position = p.contact_position + 5.0;  // not touching
  const PlantState open = plant_step(initial_plant_state(p, script), c, script, p);
  EXPECT_TRUE(open.dropped);
  EXPECT_EQ(open.pressure[0], 0.0);
}

TEST(PlantStatics, LiftoffJerkDecays) {
  const PlantParams p = soft_cup_preset();
  const ScenarioScript script = lifted(1.8);
  const ExternalLoads at_lift = loads_at(script, 1, p);
  const ExternalLoads later = loads_at(script, 1 + 3, p);
  EXPECT_DOUBLE_EQ(at_lift.jerk, 1.8);
  EXPECT_NEAR(later.jerk, 1.8 * std::exp(-3.0 / p.jerk_tau), 1e-12);
  EXPECT_FALSE(at_lift.supported);
  EXPECT_TRUE(loads_at(script, 0, p).supported);
}

TEST(PlantStatics, DropLatches) {
  const PlantParams p = soft_cup_preset();
  const ScenarioScript script = lifted();
  PlantState s = plant_step(initial_plant_state(p, script), squeeze(p, 10.0), script, p);
  ASSERT_TRUE(s.dropped);
  s = run(s, squeeze(p, 5000.0), script, p, 10);
  EXPECT_TRUE(s.dropped);
  EXPECT_EQ(s.capacity, 0.0);
  EXPECT_EQ(s.pressure[0], 0.0);
  EXPECT_EQ(s.pressure[1], 0.0);
}

TEST(PlantStatics, CrushNeedsDwellAndLatches) {
  const PlantParams p = soft_cup_preset();
  const ScenarioScript script{{}, 400};
  const double over = crush_effort(p, 0.0) + 100.0;
  PlantState s = initial_plant_state(p, script);
  s = run(s, squeeze(p, over), script, p, p.crush_dwell - 1);
  EXPECT_FALSE(s.deformed);
  EXPECT_EQ(s.over_crush_cycles, p.crush_dwell - 1);
  s = plant_step(s, squeeze(p, over), script, p);
  EXPECT_TRUE(s.deformed);
  EXPECT_EQ(s.creep_offset, 0.0);
  s = run(s, squeeze(p, 1000.0), script, p, 20);
  EXPECT_TRUE(s.deformed);
  EXPECT_EQ(s.over_crush_cycles, 0);
}

TEST(PlantStatics, BriefOverloadResetsDwell) {
  const PlantParams p = soft_cup_preset();
  const ScenarioScript script{{}, 400};
  PlantState s = initial_plant_state(p, script);
  for (int round = 0; round < 4; ++round) {
    s = run(s, squeeze(p, crush_effort(p, 0.0) + 100.0), script, p, p.crush_dwell - 2);
    s = plant_step(s, squeeze(p, 1200.0), script, p);
  }
  EXPECT_FALSE(s.deformed);
}

TEST(PlantStatics, CreepAboveCreepEffort) {
  const PlantParams p = soft_cup_preset();
  const ScenarioScript script{{}, 100};
  const double e = creep_effort(p, 0.0) + 100.0;
  const PlantState s = run(initial_plant_state(p, script), squeeze(p, e), script, p, 10);
  EXPECT_NEAR(s.creep_offset, 10 * p.creep_rate, 1e-12);
}

TEST(PlantStatics, WaterRaisesCrushEffort) {
  const PlantParams p = soft_cup_preset();
  EXPECT_DOUBLE_EQ(crush_effort(p, 0.0), p.wall_crush_effort);
  EXPECT_DOUBLE_EQ(crush_effort(p, 0.045), p.wall_crush_effort + p.liquid_support * 0.045);
  EXPECT_DOUBLE_EQ(creep_effort(p, 0.045) - crush_effort(p, 0.045), p.creep_margin);
}

TEST(PlantStatics, PressureSplitFollowsAsymmetry) {
  PlantParams p = soft_cup_preset();
  p.asymmetry = 8.0;
  const ScenarioScript script{{}, 100};
  const PlantState s = run(initial_plant_state(p, script), squeeze(p, 1200.0), script, p, 5);
  EXPECT_NEAR(s.pressure[0] / s.pressure[1], 8.0, 1e-12);
  EXPECT_NEAR(s.pressure[0] + s.pressure[1], 2400.0, 1e-9);
}

TEST(PlantStatics, PressureRelaxesAtBoundedRate) {
  const PlantParams p = soft_cup_preset();
  const ScenarioScript script{{}, 100};
  PlantState s = run(initial_plant_state(p, script), squeeze(p, 1200.0), script, p, 3);
  const double before = s.pressure[0];
  s = plant_step(s, squeeze(p, 3000.0), script, p);
  EXPECT_NEAR(s.pressure[0], before * (1.0 + p.contact_rate), 1e-9);
  s = run(s, squeeze(p, 3000.0), script, p, 60);
  const double share = p.asymmetry / (1.0 + p.asymmetry);
  EXPECT_NEAR(s.pressure[0], 2.0 * share * 3000.0, 1e-9);
}

TEST(PlantStatics, PoseDriftSaturates) {
  const PlantParams p = soft_cup_preset();
  const ScenarioScript script = lifted(0.0, 400);
  const PlantState s = run(initial_plant_state(p, script), squeeze(p, 20.0), script, p, 300);
  ASSERT_FALSE(s.dropped);
  EXPECT_GT(s.slip_offset, 100.0);
  EXPECT_DOUBLE_EQ(s.pose_drift, std::numbers::pi / 2.0);
}

TEST(PlantPour, PoursOnlyWhenTiltedAndAligned) {
  const PlantParams p = soft_cup_preset();
  const ScenarioScript script{{{EventKind::SupportRemove, 1, 0.0, 0, 0, 0},
                               {EventKind::PourVolume, 1, kPourLow, 0, 0, 0},
                               {EventKind::TiltTrajectory, 2, 1.658, 1, 200, 0}},
                              300};
  PlantState s = initial_plant_state(p, script);
  EXPECT_DOUBLE_EQ(s.water_remaining, kPourLow);
  s = run(s, squeeze(p, 3000.0), script, p, 12);
  ASSERT_FALSE(s.dropped);
  ASSERT_EQ(s.slip_offset, 0.0);
  EXPECT_LT(s.water_remaining, kPourLow);
  const double poured_per_cycle = p.pour_rate * kCycleSeconds;
  const double before = s.water_remaining;
  s = plant_step(s, squeeze(p, 3000.0), script, p);
  EXPECT_NEAR(before - s.water_remaining, poured_per_cycle, 1e-15);

  PlantState twisted = s;
  twisted.pose_drift = p.alignment_tolerance + 0.01;
  const PlantState after = plant_step(twisted, squeeze(p, 3000.0), script, p);
  EXPECT_EQ(after.water_remaining, twisted.water_remaining);
}

TEST(PlantScript, Validation) {
  ScenarioScript ok = lifted();
  EXPECT_NO_THROW(validate_script(ok));

  ScenarioScript unordered{{{EventKind::ManualPush, 10, 1.0, 1, 1, 1}, {EventKind::ManualPush, 5, 1.0, 1, 1, 1}}, 50};
  EXPECT_THROW(validate_script(unordered), std::invalid_argument);
  ScenarioScript negative{{{EventKind::ManualPush, 10, -1.0, 1, 1, 1}}, 50};
  EXPECT_THROW(validate_script(negative), std::invalid_argument);
  ScenarioScript two_tilts{{{EventKind::TiltTrajectory, 1, 1.0, 1, 1, 1}, {EventKind::TiltTrajectory, 9, 1.0, 1, 1, 1}},
                           50};
  EXPECT_THROW(validate_script(two_tilts), std::invalid_argument);
  ScenarioScript empty{{}, 0};
  EXPECT_THROW(validate_script(empty), std::invalid_argument);
  ScenarioScript bad_ramp{{{EventKind::PressRelease, 1, 1.0, -1, 1, 1}}, 50};
  EXPECT_THROW(validate_script(bad_ramp), std::invalid_argument);
}

TEST(PlantScript, TrapezoidEnvelope) {
  const ScenarioEvent e{EventKind::ManualPush, 10, 2.0, 2, 1, 2};
  const std::vector<double> expected{0.0, 0.5, 1.0, 1.0, 0.5, 0.0, 0.0};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_DOUBLE_EQ(event_envelope(e, 9 + static_cast<std::int64_t>(i)), expected[i]) << "cycle " << 9 + i;
  }
  const ScenarioScript script{{e}, 50};
  EXPECT_DOUBLE_EQ(loads_at(script, 10, soft_cup_preset()).push, 1.0);
}

// Rendering.

PlantState contact_state(const PlantParams& p, std::int64_t cycle, double offset) {
  PlantState s;
  s.cycle = cycle;
  const double share = p.asymmetry / (1.0 + p.asymmetry);
  s.pressure = {2.0 * share * 1200.0, 2.0 * (1.0 - share) * 1200.0};
  s.slip_offset = offset;
  return s;
}

TEST(PlantRender, Deterministic) {
  const PlantParams p = soft_cup_preset();
  const TactileRenderer r(p);
  const PlantState s = contact_state(p, 17, 3.25);
  const TactileFrame a = r.render(s, Side::Left);
  const TactileFrame b = TactileRenderer(p).render(s, Side::Left);
  EXPECT_EQ(a.pixels, b.pixels);
  EXPECT_EQ(a.timestamp_us, 17 * kCycleMicros);
  EXPECT_EQ(a.pixels.height(), kSensorHeight);
  EXPECT_EQ(a.pixels.width(), kSensorWidth);
  PlantState next = s;
  next.cycle = 18;
  EXPECT_NE(r.render(next, Side::Left).pixels, a.pixels);
  EXPECT_NE(r.render(s, Side::Right).pixels, a.pixels);
}

TEST(PlantRender, ZeroPressureGivesNoContact) {
  const PlantParams p = soft_cup_preset();
  const TactileRenderer r(p);
  TactileProcessor proc;
  PlantState idle;
  for (int c = 0; c < 5; ++c) {
    idle.cycle = c;
    const ProxySample s = proc.process(r.render(idle, Side::Left), r.render(idle, Side::Right));
    EXPECT_FALSE(s[Side::Left].contact_valid);
    EXPECT_FALSE(s[Side::Right].contact_valid);
  }
  const ProxySample touch = proc.process(r.render(contact_state(p, 5, 0.0), Side::Left),
                                         r.render(contact_state(p, 5, 0.0), Side::Right));
  EXPECT_TRUE(touch[Side::Left].contact_valid);
  EXPECT_TRUE(touch[Side::Right].contact_valid);
  EXPECT_GT(touch[Side::Left].fn_raw, touch[Side::Right].fn_raw);
}

TEST(PlantRender, KnownSlideIsMeasured) {
  for (const PlantParams& p : {soft_cup_preset(), hard_cup_preset()}) {
    const TactileRenderer r(p);
    TactileProcessor proc;
    const PlantState idle{};
    proc.process(r.render(idle, Side::Left), r.render(idle, Side::Right));
    proc.process(r.render(contact_state(p, 1, 0.0), Side::Left), r.render(contact_state(p, 1, 0.0), Side::Right));
    const PlantState moved = contact_state(p, 2, 1.5);
    const ProxySample s = proc.process(r.render(moved, Side::Left), r.render(moved, Side::Right));
    for (Side side : {Side::Left, Side::Right}) {
      ASSERT_TRUE(s[side].contact_valid);
      EXPECT_GE(s[side].sy_raw, 1.35) << p.name;
      EXPECT_LE(s[side].sy_raw, 1.65) << p.name;
    }
  }
}

// Static-hold shear noise stays near the preset's target level.
TEST(PlantRender, StaticShearNoiseNearTarget) {
  const PlantParams p = soft_cup_preset();
  const TactileRenderer r(p);
  TactileProcessor proc;
  const PlantState idle{};
  proc.process(r.render(idle, Side::Left), r.render(idle, Side::Right));
  std::vector<double> sy;
  for (int c = 1; c <= 150; ++c) {
    const PlantState s = contact_state(p, c, 0.0);
    const ProxySample out = proc.process(r.render(s, Side::Left), r.render(s, Side::Right));
    if (c < 3) continue;
    for (Side side : {Side::Left, Side::Right}) sy.push_back(out[side].sy_raw);
  }
  const double p95 = oracle::percentile(sy, 95.0);
  EXPECT_GT(p95, 0.5 * p.target_sy_noise_p95);
  EXPECT_LT(p95, 1.5 * p.target_sy_noise_p95);
}

}  // namespace
}  // namespace trex
