#include "trex/controller.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace trex {

ChannelMask ablation_mask(char config) {
  switch (config) {
    case 'A': return {true, false, false};
    case 'B': return {true, false, true};
    case 'C': return {true, true, false};
    case 'D': return {true, true, true};
    default: throw std::invalid_argument(std::string("unknown ablation config '") + config + "'");
  }
}

void validate_config(const ControllerConfig& c) {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  require(c.de_slip > 0 && c.de_prot > 0 && c.de_rel > 0, "effort increments must be positive");
  require(c.dp_slip > 0 && c.dp_prot > 0 && c.dp_rel > 0 && c.dp_max > 0, "stroke increments must be positive");
  require(c.closing_step > 0, "closing step must be positive");
  require(c.de_prot > c.de_slip, "de_prot must exceed de_slip");
  require(c.e_max > c.e_init && c.e_init > 0, "need 0 < e_init < e_max");
  require(c.p_open > c.p_min, "p_open must exceed p_min");
  require(c.alpha_bg > 0 && c.alpha_bg < c.alpha_rel && c.alpha_rel <= 1, "need 0 < alpha_bg < alpha_rel <= 1");
}

const char* to_string(Phase phase) noexcept {
  switch (phase) {
    case Phase::Idle: return "Idle";
    case Phase::Closing: return "Closing";
    case Phase::Holding: return "Holding";
  }
  return "?";
}

std::string to_string(FiredSet fired) {
  std::string out;
  auto add = [&](Channel c, const char* name) {
    if (!fired.has(c)) return;
    if (!out.empty()) out += '|';
    out += name;
  };
  add(Channel::Slip, "Slip");
  add(Channel::Release, "Release");
  add(Channel::Protect, "Protect");
  return out;
}

ControllerState initial_state(const ControllerConfig& config) {
  ControllerState s;
  s.position = config.p_open;
  s.effort = config.e_init;
  return s;
}

ControllerState begin_grasp(ControllerState s, const ControllerConfig& config) {
  s.phase = Phase::Closing;
  s.effort = config.e_init;
  s.position = config.p_open;
  s.p_hold.reset();
  s.cop_ref.reset();
  s.cumulative_dp_slip = 0.0;
  return s;
}

std::pair<bool, bool> detect_slip(const ProxySample& sample, double theta_s) {
  const auto& l = sample[Side::Left];
  const auto& r = sample[Side::Right];
  return {l.contact_valid && l.sy_raw >= theta_s, r.contact_valid && r.sy_raw >= theta_s};
}

ControllerState apply_antislip(ControllerState s, const ControllerConfig& c) {
  s.effort = std::min(s.effort + c.de_slip, c.e_max);
  const double budget = std::max(0.0, c.dp_max - s.cumulative_dp_slip);
  const double dp = std::clamp(std::min(c.dp_slip, budget), 0.0, std::max(0.0, s.position - c.p_min));
  s.position -= dp;
  s.cumulative_dp_slip += dp;
  return s;
}

bool release_preconditions(const ControllerState& s, const ProxySample& sample, const ControllerConfig& c) {
  if (!sample[Side::Left].contact_valid || !sample[Side::Right].contact_valid) return false;
  if (!s.cop_ref || !sample.mean_cop_y) return false;
  if (!(sample.sy_max_ema < c.profile.theta_q)) return false;
  return *sample.mean_cop_y - *s.cop_ref < c.profile.theta_c;
}

ControllerState apply_release(ControllerState s, const ProxySample& sample, const ControllerConfig& c) {
  s.effort = std::max(s.effort - c.de_rel, c.e_init);
  s.position = std::min(s.position + c.dp_rel, s.p_hold.value_or(s.position));
  if (s.cop_ref && sample.mean_cop_y) s.cop_ref = ema_update(*s.cop_ref, *sample.mean_cop_y, c.alpha_rel);
  return s;
}

ControllerState apply_protect(ControllerState s, const ControllerConfig& c) {
  s.effort = std::max(s.effort - c.de_prot, c.e_init);
  s.position = std::min(s.position + c.dp_prot, s.p_hold.value_or(s.position));
  return s;
}

ControllerState update_cop_reference_background(ControllerState s, const ProxySample& sample,
                                                const ControllerConfig& c) {
  if (!sample.mean_cop_y) return s;
  if (!s.cop_ref) {
    s.cop_ref = sample.mean_cop_y;
    return s;
  }
  s.cop_ref = ema_update(*s.cop_ref, *sample.mean_cop_y, c.alpha_bg);
  return s;
}

ClosingResult step_closing(ControllerState s, const ProxySample& sample, const ControllerConfig& c) {
  s.effort = c.e_init;
  const double fn_min = std::min(sample[Side::Left].fn_raw, sample[Side::Right].fn_raw);
  if (fn_min >= c.profile.f_stop) {
    s.phase = Phase::Holding;
    s.p_hold = s.position;
    s.cop_ref = sample.mean_cop_y;
    s.cumulative_dp_slip = 0.0;
    return {s, false};
  }
  if (s.position <= c.p_min) {
    s.phase = Phase::Idle;
    s.position = c.p_open;
    s.p_hold.reset();
    s.cop_ref.reset();
    return {s, true};
  }
  s.position = std::max(s.position - c.closing_step, c.p_min);
  return {s, false};
}

std::pair<GripperCommand, ControllerState> step(ControllerState s, const ProxySample& sample,
                                                const ControllerConfig& c) {
  GripperCommand cmd;
  cmd.cycle = s.cycle_index;
  switch (s.phase) {
    case Phase::Idle:
      break;
    case Phase::Closing: {
      auto r = step_closing(s, sample, c);
      s = r.state;
      cmd.grasp_failure = r.grasp_failure;
      break;
    }
    case Phase::Holding: {
      s = update_cop_reference_background(s, sample, c);
      const auto [slip_l, slip_r] = detect_slip(sample, c.profile.theta_s);
      if (c.channels.slip && (slip_l || slip_r)) {
        s = apply_antislip(s, c);
        cmd.fired.add(Channel::Slip);
      } else if (c.channels.release && release_preconditions(s, sample, c)) {
        s = apply_release(s, sample, c);
        cmd.fired.add(Channel::Release);
      }
      if (c.channels.protect && sample.fn_max_ema > c.profile.f_lim) {
        s = apply_protect(s, c);
        cmd.fired.add(Channel::Protect);
      }
      break;
    }
  }
  cmd.position = s.position;
  cmd.effort = s.effort;
  cmd.phase = s.phase;
  ++s.cycle_index;
  return {cmd, s};
}

namespace {

void put_number(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

CommandLog::CommandLog(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open command log " + path.string());
  out_ << header() << '\n';
}

const char* CommandLog::header() {
  return "cycle,timestamp_us,phase,effort,position,fired_channels,sy_raw_L,sy_raw_R,fn_ema_max,mean_cop_y,cop_ref";
}

std::string CommandLog::format_row(const ProxySample& sample, const GripperCommand& cmd,
                                   const ControllerState& state) {
  std::string row = std::to_string(cmd.cycle) + ',' + std::to_string(sample.timestamp_us) + ',' +
                    to_string(cmd.phase) + ',';
  put_number(row, cmd.effort);
  row += ',';
  put_number(row, cmd.position);
  row += ',' + to_string(cmd.fired) + ',';
  put_number(row, sample[Side::Left].sy_raw);
  row += ',';
  put_number(row, sample[Side::Right].sy_raw);
  row += ',';
  put_number(row, sample.fn_max_ema);
  row += ',';
  if (sample.mean_cop_y) put_number(row, *sample.mean_cop_y);
  row += ',';
  if (state.cop_ref) put_number(row, *state.cop_ref);
  return row;
}

void CommandLog::append(const ProxySample& sample, const GripperCommand& cmd, const ControllerState& state) {
  out_ << format_row(sample, cmd, state) << '\n';
}

void save_controller_config(const std::filesystem::path& path, const ControllerConfig& c,
                            const std::filesystem::path& profile_path) {
  nlohmann::json j;
  j["version"] = 1;
  j["profile"] = profile_path.string();
  j["e_init"] = c.e_init;
  j["e_max"] = c.e_max;
  j["p_min"] = c.p_min;
  j["p_open"] = c.p_open;
  j["closing_step"] = c.closing_step;
  j["de_slip"] = c.de_slip;
  j["de_prot"] = c.de_prot;
  j["de_rel"] = c.de_rel;
  j["dp_slip"] = c.dp_slip;
  j["dp_prot"] = c.dp_prot;
  j["dp_rel"] = c.dp_rel;
  j["dp_max"] = c.dp_max;
  j["alpha_bg"] = c.alpha_bg;
  j["alpha_rel"] = c.alpha_rel;
  j["channel_mask"] = {{"slip", c.channels.slip}, {"release", c.channels.release}, {"protect", c.channels.protect}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write controller config " + path.string());
  out << j.dump(2) << '\n';
}

ControllerConfig load_controller_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open controller config " + path.string());
  ControllerConfig c;
  std::filesystem::path profile_path;
  try {
    const auto j = nlohmann::json::parse(in);
    profile_path = j.at("profile").get<std::string>();
    auto num = [&](const char* key, double& dst) {
      if (j.contains(key)) dst = j.at(key).get<double>();
    };
    num("e_init", c.e_init);
    num("e_max", c.e_max);
    num("p_min", c.p_min);
    num("p_open", c.p_open);
    num("closing_step", c.closing_step);
    num("de_slip", c.de_slip);
    num("de_prot", c.de_prot);
    num("de_rel", c.de_rel);
    num("dp_slip", c.dp_slip);
    num("dp_prot", c.dp_prot);
    num("dp_rel", c.dp_rel);
    num("dp_max", c.dp_max);
    num("alpha_bg", c.alpha_bg);
    num("alpha_rel", c.alpha_rel);
    if (j.contains("channel_mask")) {
      const auto& m = j.at("channel_mask");
      c.channels.slip = m.value("slip", true);
      c.channels.release = m.value("release", true);
      c.channels.protect = m.value("protect", true);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed controller config " + path.string() + ": " + e.what());
  }
  if (profile_path.is_relative()) profile_path = path.parent_path() / profile_path;
  c.profile = load_profile(profile_path);
  validate_config(c);
  return c;
}

}  // namespace trex
