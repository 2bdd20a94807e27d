#include "trex/plant.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "trex/stream_io.hpp"

namespace trex {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    PlantParams, name, cup_mass, water_mass, payload_mass, wall_crush_effort, liquid_support, crush_dwell,
    creep_margin, creep_rate, friction_mu, effort_to_normal, contact_position, squeeze_saturation, asymmetry,
    slip_v0, slip_gain, slip_vmax, drift_per_px, drop_ratio, torque_gain, jerk_tau, cop_center_y, tilt_gain,
    tilt_rate, tilt_max, press_coupling, contact_rate, effort_ref, contact_area_ref, contact_aspect, area_exponent, depth_exponent, contact_amplitude, texture_floor,
    background_level, speckle_density, pixel_noise_sigma, jitter_sigma, target_sy_noise_p95, pour_angle,
    pour_rate, alignment_tolerance, f_stop, height, width, rng_seed)

namespace {

constexpr int kTileSize = 256;
constexpr std::size_t kNoiseTableBits = 20;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

}  // namespace

PlantParams soft_cup_preset() { return PlantParams{}; }

PlantParams hard_cup_preset() {
  PlantParams p;
  p.name = "hard_cup";
  p.cup_mass = 0.060;
  p.wall_crush_effort = 20000.0;
  p.liquid_support = 0.0;
  p.creep_margin = 1000.0;
  p.tilt_gain = 0.2;
  p.contact_amplitude = 50.0;
  p.texture_floor = 0.5;
  p.asymmetry = 1.2;
  p.pixel_noise_sigma = 1.2;
  p.jitter_sigma = 0.02;
  p.target_sy_noise_p95 = 0.06;
  p.press_coupling = 150.0;
  p.f_stop = 5.5;
  return p;
}

PlantParams preset_by_name(const std::string& name) {
  if (name == "soft" || name == "soft_cup") return soft_cup_preset();
  if (name == "hard" || name == "hard_cup") return hard_cup_preset();
  throw std::invalid_argument("unknown plant preset '" + name + "'");
}

double crush_effort(const PlantParams& p, double water) { return p.wall_crush_effort + p.liquid_support * water; }
double creep_effort(const PlantParams& p, double water) { return crush_effort(p, water) + p.creep_margin; }

void validate_plant(const PlantParams& p, double e_init) {
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument("plant '" + p.name + "': " + msg);
  };
  require(p.cup_mass > 0 && p.water_mass >= 0 && p.payload_mass >= 0, "masses must be positive");
  require(p.wall_crush_effort > 0 && p.crush_dwell > 0, "crush parameters must be positive");
  require(p.friction_mu > 0 && p.effort_to_normal > 0, "friction parameters must be positive");
  require(p.asymmetry >= 1.0, "asymmetry must be >= 1");
  require(p.speckle_density > 0 && p.pixel_noise_sigma > 0 && p.jitter_sigma >= 0, "noise parameters invalid");
  require(p.slip_v0 > 0 && p.slip_vmax >= p.slip_v0 && p.slip_gain >= 0, "slip parameters invalid");
  require(p.drop_ratio > 1 && p.squeeze_saturation > 0 && p.contact_position > 0, "grip geometry invalid");
  require(p.contact_area_ref > 0 && p.contact_amplitude > 0 && p.effort_ref > 0, "imprint parameters invalid");
  require(p.tilt_rate > 0 && p.tilt_max > 0 && p.contact_rate > 0, "imprint rate limits must be positive");
  require(p.texture_floor > 0 && p.texture_floor < 1, "texture_floor must be in (0, 1)");
  require(p.height >= 16 && p.width >= 16, "frame too small");
  require(p.pour_rate > 0 && p.alignment_tolerance > 0 && p.f_stop > 0, "pour/stop parameters invalid");
  const double capacity = 2.0 * p.friction_mu * p.effort_to_normal * e_init;
  const double weight = kGravity * (p.cup_mass + p.water_mass + p.payload_mass);
  require(capacity > weight, "holding at e_init cannot carry the cup weight");
  require(e_init < crush_effort(p, 0.0), "holding at e_init crushes the empty cup");
}

std::string plant_to_json(const PlantParams& p) {
  nlohmann::json j = p;
  return j.dump(2) + "\n";
}

PlantParams plant_from_json(const std::string& text) {
  try {
    return nlohmann::json::parse(text).get<PlantParams>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed plant document: ") + e.what());
  }
}

void save_plant(const std::filesystem::path& path, const PlantParams& p) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << plant_to_json(p);
}

PlantParams load_plant(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return plant_from_json(ss.str());
}

const char* to_string(EventKind kind) noexcept {
  switch (kind) {
    case EventKind::SupportRemove: return "SupportRemove";
    case EventKind::SupportPlace: return "SupportPlace";
    case EventKind::ManualPush: return "ManualPush";
    case EventKind::PressRelease: return "PressRelease";
    case EventKind::TiltTrajectory: return "TiltTrajectory";
    case EventKind::PourVolume: return "PourVolume";
  }
  return "?";
}

void validate_script(const ScenarioScript& s) {
  int tilts = 0;
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const auto& e = s.events[i];
    const std::string where = std::string("script event ") + std::to_string(i) + " (" + to_string(e.kind) + ")";
    if (i > 0 && e.start < s.events[i - 1].start) throw std::invalid_argument(where + ": events not time-ordered");
    if (e.start < 0) throw std::invalid_argument(where + ": negative start");
    if (e.ramp < 0 || e.hold < 0 || e.release < 0) throw std::invalid_argument(where + ": negative duration");
    if (!std::isfinite(e.magnitude) || e.magnitude < 0) throw std::invalid_argument(where + ": bad magnitude");
    if (e.kind == EventKind::TiltTrajectory && ++tilts > 1) {
      throw std::invalid_argument(where + ": more than one tilt trajectory");
    }
  }
  if (s.length <= 0) throw std::invalid_argument("script length must be positive");
}

double event_envelope(const ScenarioEvent& e, std::int64_t cycle) {
  const std::int64_t t = cycle - e.start;
  if (t < 0) return 0.0;
  if (t < e.ramp) return static_cast<double>(t + 1) / e.ramp;
  if (t < e.ramp + e.hold) return 1.0;
  const std::int64_t r = t - e.ramp - e.hold;
  if (r < e.release) return 1.0 - static_cast<double>(r + 1) / e.release;
  return 0.0;
}

ExternalLoads loads_at(const ScenarioScript& script, std::int64_t cycle, const PlantParams& params) {
  ExternalLoads l;
  const ScenarioEvent* lift = nullptr;
  for (const auto& e : script.events) {
    if (e.start > cycle) break;
    switch (e.kind) {
      case EventKind::SupportRemove:
        l.supported = false;
        lift = &e;
        break;
      case EventKind::SupportPlace:
        l.supported = true;
        lift = nullptr;
        break;
      case EventKind::ManualPush: l.push += e.magnitude * event_envelope(e, cycle); break;
      case EventKind::PressRelease: l.press += e.magnitude * event_envelope(e, cycle); break;
      case EventKind::TiltTrajectory: l.tilt = e.magnitude * event_envelope(e, cycle); break;
      case EventKind::PourVolume: break;
    }
  }
  if (lift) l.jerk = lift->magnitude * std::exp(-static_cast<double>(cycle - lift->start) / params.jerk_tau);
  return l;
}

PlantState initial_plant_state(const PlantParams& params, const ScenarioScript& script) {
  PlantState s;
  s.water_remaining = params.water_mass;
  for (const auto& e : script.events) {
    if (e.kind == EventKind::PourVolume) s.water_remaining = e.magnitude;
  }
  const ExternalLoads l = loads_at(script, 0, params);
  s.supported = l.supported;
  s.tilt = l.tilt;
  return s;
}

PlantState plant_step(const PlantState& state, const GripperCommand& command, const ScenarioScript& script,
                      const PlantParams& p) {
  PlantState n = state;
  n.cycle = state.cycle + 1;
  const ExternalLoads l = loads_at(script, n.cycle, p);
  n.supported = l.supported;
  n.tilt = l.tilt;
  n.slip_velocity = 0.0;

  const double water = state.water_remaining;
  const double weight = kGravity * (p.cup_mass + p.payload_mass + water);
  const double moment = p.torque_gain * kGravity * water * std::max(0.0, std::sin(l.tilt));
  const double squeeze = p.contact_position - command.position;
  const double grip = state.dropped ? 0.0 : std::clamp(squeeze / p.squeeze_saturation, 0.0, 1.0);
  const double effort = std::max(0.0, command.effort);
  n.capacity = 2.0 * p.friction_mu * p.effort_to_normal * effort * grip;

  const double carried = l.supported ? 0.0 : weight + l.push + l.press;
  const double translational = l.supported ? 0.0 : carried + weight * l.jerk;
  n.load = l.supported ? 0.0 : translational + moment;

  if (!state.dropped && !l.supported) {
    if (n.capacity <= 0.0 || translational > p.drop_ratio * n.capacity) {
      n.dropped = true;
    } else if (n.load > n.capacity) {
      n.slip_velocity = std::min(p.slip_v0 + p.slip_gain * (n.load / n.capacity - 1.0), p.slip_vmax);
    }
  }
  n.slip_offset += n.slip_velocity;
  // The cup turns in the grip until it hangs from the fingertips.
  n.pose_drift = std::min(n.pose_drift + p.drift_per_px * n.slip_velocity, std::numbers::pi / 2.0);

  const bool gripping = grip > 0.0 && !n.dropped;
  if (gripping && effort > creep_effort(p, water)) n.creep_offset += p.creep_rate;
  if (gripping && effort > crush_effort(p, water)) {
    ++n.over_crush_cycles;
  } else {
    n.over_crush_cycles = 0;
  }
  if (n.over_crush_cycles >= p.crush_dwell) n.deformed = true;

  if (!n.dropped && !l.supported && l.tilt > p.pour_angle && state.pose_drift < p.alignment_tolerance) {
    n.water_remaining = std::max(0.0, water - p.pour_rate * kCycleSeconds);
  }

  const double squeeze_equiv = gripping ? effort * grip + p.press_coupling * l.press * grip : 0.0;
  const double share_left = p.asymmetry / (1.0 + p.asymmetry);
  const std::array<double, 2> target = {2.0 * share_left * squeeze_equiv, 2.0 * (1.0 - share_left) * squeeze_equiv};
  for (std::size_t s = 0; s < 2; ++s) {
    // The gel imprint relaxes toward the new squeeze instead of jumping. Fresh
    // contact and loss of contact are immediate.
    const double prev = state.pressure[s];
    n.pressure[s] = prev > 0.0 && target[s] > 0.0
                        ? std::clamp(target[s], prev / (1.0 + p.contact_rate), prev * (1.0 + p.contact_rate))
                        : target[s];
  }
  const double tilt = std::clamp(p.tilt_gain * (carried + moment), -p.tilt_max, p.tilt_max);
  n.imprint_tilt = std::clamp(tilt, state.imprint_tilt - p.tilt_rate, state.imprint_tilt + p.tilt_rate);
  return n;
}

TactileRenderer::TactileRenderer(const PlantParams& params) : params_(params) {
  const int h = params.height, w = params.width;
  for (int s = 0; s < 2; ++s) {
    FloatImage bg(h, w);
    const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
    const double r2max = cx * cx + cy * cy;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double r2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / r2max;
        bg(y, x) = static_cast<float>(params.background_level * (1.0 - 0.18 * r2) + 4.0 * s * x / w);
      }
    }
    background_[s] = std::move(bg);
  }

  std::mt19937_64 rng(hash_key(params.rng_seed, 0x7E47, 1));
  tile_ = FloatImage(kTileSize, kTileSize, 0.0f);
  const double dots = params.speckle_density * kTileSize * kTileSize / (static_cast<double>(h) * w);
  std::uniform_real_distribution<double> pos(0.0, kTileSize);
  for (int d = 0; d < static_cast<int>(std::lround(dots)); ++d) {
    const double dx = pos(rng), dy = pos(rng);
    for (int oy = -4; oy <= 4; ++oy) {
      for (int ox = -4; ox <= 4; ++ox) {
        const int px = static_cast<int>(std::floor(dx)) + ox, py = static_cast<int>(std::floor(dy)) + oy;
        const double r = std::hypot(px + 0.5 - dx, py + 0.5 - dy);
        const double v = std::clamp(3.5 - r, 0.0, 1.0);
        if (v <= 0) continue;
        float& t = tile_((py + kTileSize) % kTileSize, (px + kTileSize) % kTileSize);
        t = std::min(1.0f, t + static_cast<float>(v));
      }
    }
  }
  for (float& t : tile_.pixels()) t = static_cast<float>(params.texture_floor + (1.0 - params.texture_floor) * t);

  noise_.resize(std::size_t{1} << kNoiseTableBits);
  std::normal_distribution<float> gauss(0.0f, static_cast<float>(params.pixel_noise_sigma));
  for (float& v : noise_) v = gauss(rng);
}

double TactileRenderer::jitter(Side side, std::int64_t cycle) const {
  std::mt19937_64 rng(hash_key(params_.rng_seed, 0x1177 + index_of(side), static_cast<std::uint64_t>(cycle)));
  std::normal_distribution<double> gauss(0.0, params_.jitter_sigma);
  return gauss(rng);
}

TactileFrame TactileRenderer::render(const PlantState& state, Side side) const {
  const int h = params_.height, w = params_.width;
  const std::size_t s = index_of(side);
  TactileFrame frame;
  frame.side = side;
  frame.timestamp_us = state.cycle * kCycleMicros;
  frame.pixels = GrayImage(h, w);

  const std::uint64_t key = hash_key(params_.rng_seed, 0xA015E + s, static_cast<std::uint64_t>(state.cycle));
  const std::size_t mask = noise_.size() - 1;
  const std::size_t base = key & mask;
  const std::size_t stride = (splitmix(key) & mask) | 1;

  const FloatImage& bg = background_[s];
  for (int y = 0; y < h; ++y) {
    const float* b = bg.row(y);
    std::uint8_t* out = frame.pixels.row(y);
    std::size_t idx = (base + static_cast<std::size_t>(y) * w * stride) & mask;
    for (int x = 0; x < w; ++x) {
      const float v = b[x] + noise_[idx];
      out[x] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      idx = (idx + stride) & mask;
    }
  }

  const double pressure = state.pressure[s];
  if (pressure <= 0.0) return frame;
  const double rel = pressure / params_.effort_ref;
  const double area = params_.contact_area_ref * std::pow(rel, params_.area_exponent);
  const double amplitude = params_.contact_amplitude * std::pow(rel, params_.depth_exponent);
  const double ax = std::sqrt(area / (std::numbers::pi * params_.contact_aspect));
  const double ay = params_.contact_aspect * ax;
  const double cx = 0.5 * (w - 1);
  const double cy = params_.cop_center_y;
  const double tilt = state.imprint_tilt;
  const double offset = state.slip_offset + state.creep_offset + jitter(side, state.cycle);
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - ay)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + ay)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - ax)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + ax)));
  const int x_shift = 97 * static_cast<int>(s);

  // Load tilts the pressure distribution along y. The profile is normalized so the
  // mean of depth^1.5 over the windowed ellipse does not depend on the tilt.
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 64; ++i) {
    const double u = -1.0 + (i + 0.5) / 32.0;
    for (int j = 0; j < 64; ++j) {
      const double v = -1.0 + (j + 0.5) / 32.0;
      const double rho = std::sqrt(u * u + v * v);
      if (rho >= 1.0) continue;
      const double win = std::pow(rho <= 0.8 ? 1.0 : (1.0 - rho) / 0.2, 1.5);
      num += win * std::exp(1.5 * tilt * u);
      den += win;
    }
  }
  const double norm = std::pow(num / den, 1.0 / 1.5);
  std::vector<double> gradient(static_cast<std::size_t>(std::max(0, y1 - y0 + 1)));
  for (int y = y0; y <= y1; ++y) gradient[static_cast<std::size_t>(y - y0)] = std::exp(tilt * (y - cy) / ay) / norm;

  for (int y = y0; y <= y1; ++y) {
    const double dy = (y - cy) / ay;
    if (dy * dy >= 1.0) continue;
    const double ty = y - offset;
    const double fy = std::floor(ty);
    const float frac = static_cast<float>(ty - fy);
    const int r0 = static_cast<int>(((static_cast<std::int64_t>(fy) % kTileSize) + kTileSize) % kTileSize);
    const int r1 = (r0 + 1) % kTileSize;
    const float* t0 = tile_.row(r0);
    const float* t1 = tile_.row(r1);
    const float* b = bg.row(y);
    std::uint8_t* out = frame.pixels.row(y);
    std::size_t idx_row = (base + static_cast<std::size_t>(y) * w * stride) & mask;
    for (int x = x0; x <= x1; ++x) {
      const double dx = (x - cx) / ax;
      const double rho = std::sqrt(dx * dx + dy * dy);
      if (rho >= 1.0) continue;
      const double win = rho <= 0.8 ? 1.0 : (1.0 - rho) / 0.2;
      const int tx = (x + x_shift) % kTileSize;
      const float tex = t0[tx] + frac * (t1[tx] - t0[tx]);
      const std::size_t idx = (idx_row + static_cast<std::size_t>(x) * stride) & mask;
      const double v = b[x] + amplitude * gradient[static_cast<std::size_t>(y - y0)] * win * tex + noise_[idx];
      out[x] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return frame;
}

TactileFrame render_tactile(const PlantState& state, Side side, const PlantParams& params) {
  return TactileRenderer(params).render(state, side);
}

TrialRecord run_scenario(const ScenarioScript& script, const ControllerConfig& config, const PlantParams& params,
                         const PipelineParams& pipeline, const DriveOptions& drive, const ScenarioHooks& hooks) {
  validate_script(script);
  validate_config(config);
  if (drive.mode == DriveMode::OpenLoop && !drive.command_schedule) {
    throw std::invalid_argument("open-loop drive needs a command schedule");
  }
  if (drive.mode == DriveMode::Frozen && drive.freeze_cycle < 0) {
    throw std::invalid_argument("frozen drive needs a freeze cycle");
  }

  const TactileRenderer renderer(params);
  TactileProcessor processor(pipeline);
  PlantState plant = initial_plant_state(params, script);
  ControllerState ctrl = initial_state(config);
  std::optional<GripperCommand> locked;

  TrialRecord rec;
  rec.initial_water = plant.water_remaining;
  rec.cycles.reserve(static_cast<std::size_t>(script.length));

  for (std::int64_t c = 0; c < script.length; ++c) {
    if (c == drive.grasp_start && ctrl.phase == Phase::Idle) ctrl = begin_grasp(ctrl, config);

    const TactileFrame left = renderer.render(plant, Side::Left);
    const TactileFrame right = renderer.render(plant, Side::Right);
    if (hooks.stream) hooks.stream->write(static_cast<std::uint64_t>(left.timestamp_us), {&left.pixels, &right.pixels});
    if (hooks.on_frames) hooks.on_frames(plant, left, right);

    const ProxySample sample = processor.process(left, right, ctrl.phase == Phase::Idle);

    GripperCommand cmd;
    const bool frozen = drive.mode == DriveMode::Frozen && c >= drive.freeze_cycle;
    const bool scheduled = drive.mode == DriveMode::OpenLoop;
    if (frozen) {
      if (!locked) {
        locked = GripperCommand{};
        locked->effort = ctrl.effort;
        locked->position = ctrl.position;
        locked->phase = ctrl.phase;
      }
      cmd = *locked;
      cmd.cycle = ctrl.cycle_index++;
    } else if (scheduled) {
      cmd.cycle = ctrl.cycle_index++;
      std::tie(cmd.position, cmd.effort) = drive.command_schedule(c);
      ctrl.effort = cmd.effort;
      ctrl.position = cmd.position;
      cmd.phase = ctrl.phase = plant.pressure[0] > 0 ? Phase::Holding : Phase::Closing;
    } else {
      std::tie(cmd, ctrl) = step(ctrl, sample, config);
    }
    if (ctrl.phase == Phase::Holding && !rec.hold_cycle) rec.hold_cycle = c;
    if (hooks.log) hooks.log->append(sample, cmd, ctrl);

    rec.cycles.push_back({sample, cmd, ctrl, plant});
    plant = plant_step(plant, cmd, script, params);
  }

  rec.outcome.grasped = rec.hold_cycle.has_value();
  rec.outcome.dropped = plant.dropped;
  rec.outcome.deformed = plant.deformed;
  rec.outcome.water_poured = rec.initial_water - plant.water_remaining;
  rec.outcome.pour_success = rec.initial_water > 0 && rec.outcome.water_poured >= 0.5 * rec.initial_water &&
                             !plant.dropped && !plant.deformed;
  return rec;
}

}  // namespace trex
