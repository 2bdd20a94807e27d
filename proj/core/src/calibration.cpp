#include "trex/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace trex {
namespace {

constexpr int kProfileVersion = 1;

// Absorbs representation error in p*n/100 and x*100 before ceil/floor.
constexpr double kRankEps = 1e-9;

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

void require_finite(const char* name, double v) {
  if (!std::isfinite(v)) throw CalibrationError(std::string(name) + " is not finite");
}

}  // namespace

CalibrationInfeasible::CalibrationInfeasible(double p999, double min_peak)
    : CalibrationError("calibration infeasible: no-motion S_y P99.9 = " + fmt(p999) +
                       " exceeds minimum slip peak = " + fmt(min_peak)),
      noise_p999(p999),
      min_slip_peak(min_peak) {}

const char* to_string(SegmentLabel label) noexcept {
  switch (label) {
    case SegmentLabel::StaticHold: return "StaticHold";
    case SegmentLabel::Liftoff: return "Liftoff";
    case SegmentLabel::Push: return "Push";
    case SegmentLabel::PressRelease: return "PressRelease";
  }
  return "?";
}

SegmentLabel parse_segment_label(const std::string& text) {
  for (auto l : {SegmentLabel::StaticHold, SegmentLabel::Liftoff, SegmentLabel::Push, SegmentLabel::PressRelease}) {
    if (text == to_string(l)) return l;
  }
  throw CalibrationError("unknown segment label '" + text + "'");
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CalibrationError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string label;
    if (!(ls >> label)) continue;
    ManifestEntry e;
    std::string extra;
    if (!(ls >> e.start_us >> e.end_us) || (ls >> extra)) {
      throw CalibrationError(path.string() + ":" + std::to_string(lineno) + ": expected 'label start_us end_us'");
    }
    e.label = parse_segment_label(label);
    if (e.end_us < e.start_us) {
      throw CalibrationError(path.string() + ":" + std::to_string(lineno) + ": segment ends before it starts");
    }
    out.push_back(e);
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw CalibrationError("cannot write manifest " + path.string());
  for (const auto& e : entries) out << to_string(e.label) << ' ' << e.start_us << ' ' << e.end_us << '\n';
}

void validate_profile(const CalibrationProfile& p) {
  require_finite("tau", p.tau);
  require_finite("theta_s", p.theta_s);
  require_finite("theta_q", p.theta_q);
  require_finite("theta_c", p.theta_c);
  require_finite("f_lim", p.f_lim);
  require_finite("f_stop", p.f_stop);
  require_finite("gamma", p.gamma);
  require_finite("alpha", p.alpha);
  if (p.tau <= 0) throw CalibrationError("tau must be positive");
  if (p.theta_s <= 0) throw CalibrationError("theta_s must be positive");
  if (p.theta_q <= 0) throw CalibrationError("theta_q must be positive");
  if (p.theta_c >= 0) throw CalibrationError("theta_c must be negative");
  if (p.f_stop <= 0) throw CalibrationError("f_stop must be positive");
  if (p.f_lim <= p.f_stop) throw CalibrationError("f_lim must exceed f_stop");
  if (p.gamma <= 0) throw CalibrationError("gamma must be positive");
  if (p.alpha <= 0 || p.alpha > 1) throw CalibrationError("alpha must be in (0, 1]");
}

double percentile(std::span<const double> samples, double p) {
  if (samples.empty()) throw CalibrationError("percentile of an empty sample set");
  if (!(p >= 0.0 && p <= 100.0)) throw CalibrationError("percentile rank out of [0, 100]");
  const auto n = samples.size();
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) / 100.0 - kRankEps));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::vector<double> work(samples.begin(), samples.end());
  auto nth = work.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(work.begin(), nth, work.end());
  return *nth;
}

double derive_noise_floor(std::span<const double> diff_pixels) { return percentile(diff_pixels, 98.0); }

double derive_quiet_threshold(std::span<const double> sy_noise) { return percentile(sy_noise, 95.0); }

double derive_force_limit(std::span<const double> fn_samples) { return percentile(fn_samples, 99.9); }

double derive_slip_threshold(std::span<const double> sy_noise, std::span<const double> peaks) {
  if (peaks.empty()) throw CalibrationError("no labeled slip events");
  const double min_peak = *std::min_element(peaks.begin(), peaks.end());
  const double ceiling = percentile(sy_noise, 99.9);
  if (ceiling > min_peak) throw CalibrationInfeasible(ceiling, min_peak);
  const double rounded = std::floor(min_peak * 100.0 + kRankEps) / 100.0;
  // Rounding may step below the noise ceiling when the interval is narrower than 0.01.
  return rounded >= ceiling ? rounded : ceiling;
}

double derive_cop_threshold(std::span<const double> events) {
  if (events.size() < 3) {
    throw CalibrationError("CoP threshold needs at least 3 load-decrease events, got " +
                           std::to_string(events.size()));
  }
  const double least_negative = *std::max_element(events.begin(), events.end());
  if (!(least_negative < 0.0)) {
    throw CalibrationError("load-decrease event with non-negative CoP change " + fmt(least_negative));
  }
  const double toward_zero = std::ceil(least_negative * 2.0 - kRankEps) / 2.0;
  // An extremum in (-0.5, 0) would round to zero, which is not a usable threshold.
  return toward_zero < 0.0 ? toward_zero : -0.5;
}

std::vector<double> static_sy_noise(const CalibrationRecording& rec) {
  std::vector<double> out;
  for (const auto& seg : rec.segments) {
    if (seg.label != SegmentLabel::StaticHold) continue;
    for (const auto& s : seg.samples) {
      for (const auto& side : s.sides) {
        if (side.contact_valid) out.push_back(side.sy_raw);
      }
    }
  }
  return out;
}

std::vector<double> force_samples(const CalibrationRecording& rec) {
  std::vector<double> out;
  for (const auto& seg : rec.segments) {
    if (seg.label != SegmentLabel::StaticHold && seg.label != SegmentLabel::PressRelease) continue;
    for (const auto& s : seg.samples) out.push_back(std::max(s.sides[0].fn_raw, s.sides[1].fn_raw));
  }
  return out;
}

static double gated_sy_max(const ProxySample& s) {
  double m = 0.0;
  for (const auto& side : s.sides) {
    if (side.contact_valid) m = std::max(m, side.sy_raw);
  }
  return m;
}

std::vector<double> slip_peaks(const CalibrationRecording& rec) {
  std::vector<double> out;
  for (const auto& seg : rec.segments) {
    if (seg.label != SegmentLabel::Liftoff && seg.label != SegmentLabel::Push) continue;
    double peak = 0.0;
    for (const auto& s : seg.samples) peak = std::max(peak, gated_sy_max(s));
    out.push_back(peak);
  }
  return out;
}

std::vector<double> release_extrema(const CalibrationRecording& rec, double alpha_bg) {
  std::vector<double> out;
  std::optional<double> ref;
  for (const auto& seg : rec.segments) {
    double extremum = std::numeric_limits<double>::infinity();
    for (const auto& s : seg.samples) {
      if (!s.mean_cop_y) continue;
      if (!ref) ref = *s.mean_cop_y;
      if (seg.label == SegmentLabel::PressRelease) extremum = std::min(extremum, *s.mean_cop_y - *ref);
      *ref = ema_update(*ref, *s.mean_cop_y, alpha_bg);
    }
    if (seg.label == SegmentLabel::PressRelease && std::isfinite(extremum)) out.push_back(extremum);
  }
  return out;
}

SlipRuleCheck check_slip_rule(const CalibrationRecording& rec, double theta_s) {
  SlipRuleCheck r;
  std::size_t hits = 0, false_alarms = 0;
  for (const auto& seg : rec.segments) {
    if (seg.label == SegmentLabel::Liftoff || seg.label == SegmentLabel::Push) {
      double peak = 0.0;
      for (const auto& s : seg.samples) peak = std::max(peak, gated_sy_max(s));
      ++r.events;
      if (peak >= theta_s) ++hits;
    } else if (seg.label == SegmentLabel::StaticHold) {
      for (const auto& s : seg.samples) {
        ++r.static_frames;
        bool fired = false;
        for (const auto& side : s.sides) fired = fired || (side.contact_valid && side.sy_raw >= theta_s);
        if (fired) ++false_alarms;
      }
    }
  }
  r.tpr = r.events ? static_cast<double>(hits) / static_cast<double>(r.events) : 0.0;
  r.fpr = r.static_frames ? static_cast<double>(false_alarms) / static_cast<double>(r.static_frames) : 0.0;
  return r;
}

CalibrationProfile run_calibration(const CalibrationRecording& rec, const FixedParameters& fixed,
                                   const std::string& material_label) {
  bool has_static = false, has_liftoff = false;
  std::int64_t last_ts = 0;
  std::vector<double> diff_pixels;
  for (const auto& seg : rec.segments) {
    has_static = has_static || seg.label == SegmentLabel::StaticHold;
    has_liftoff = has_liftoff || seg.label == SegmentLabel::Liftoff;
    if (seg.label == SegmentLabel::StaticHold) {
      diff_pixels.insert(diff_pixels.end(), seg.diff_pixel_samples.begin(), seg.diff_pixel_samples.end());
    }
    for (const auto& s : seg.samples) last_ts = std::max(last_ts, s.timestamp_us);
  }
  if (!has_static) throw CalibrationError("recording has no StaticHold segment");
  if (!has_liftoff) throw CalibrationError("recording has no Liftoff segment");

  auto with_context = [](const char* what, auto&& fn) {
    try {
      return fn();
    } catch (const CalibrationInfeasible&) {
      throw;
    } catch (const CalibrationError& e) {
      throw CalibrationError(std::string(what) + ": " + e.what());
    }
  };

  const auto sy_noise = static_sy_noise(rec);
  const auto fn = force_samples(rec);
  const auto peaks = slip_peaks(rec);
  const auto extrema = release_extrema(rec, fixed.alpha_bg);

  CalibrationProfile p;
  p.material_label = material_label;
  p.gamma = fixed.gamma;
  p.alpha = fixed.alpha;
  p.f_stop = fixed.f_stop;
  p.created_at = last_ts;

  p.tau = with_context("StaticHold diff pixels", [&] { return derive_noise_floor(diff_pixels); });
  p.theta_q = with_context("StaticHold S_y", [&] { return derive_quiet_threshold(sy_noise); });
  p.f_lim = with_context("StaticHold/PressRelease F_n", [&] { return derive_force_limit(fn); });
  p.theta_s = with_context("Liftoff/Push peaks", [&] { return derive_slip_threshold(sy_noise, peaks); });
  p.theta_c = with_context("PressRelease CoP", [&] { return derive_cop_threshold(extrema); });

  p.provenance["tau"] = {"percentile", 98.0, diff_pixels.size()};
  p.provenance["theta_q"] = {"percentile", 95.0, sy_noise.size()};
  p.provenance["f_lim"] = {"percentile", 99.9, fn.size()};
  p.provenance["theta_s"] = {"interval-rule", std::nullopt, peaks.size()};
  p.provenance["theta_c"] = {"event-rounding", std::nullopt, extrema.size()};
  p.provenance["f_stop"] = {"manual", std::nullopt, 0};
  p.provenance["gamma"] = {"fixed", std::nullopt, 0};
  p.provenance["alpha"] = {"fixed", std::nullopt, 0};

  validate_profile(p);
  return p;
}

std::string profile_to_json(const CalibrationProfile& p) {
  nlohmann::json j;
  j["version"] = kProfileVersion;
  j["created_at"] = p.created_at;
  j["tau"] = p.tau;
  j["theta_s"] = p.theta_s;
  j["theta_q"] = p.theta_q;
  j["theta_c"] = p.theta_c;
  j["f_lim"] = p.f_lim;
  j["f_stop"] = p.f_stop;
  j["gamma"] = p.gamma;
  j["alpha"] = p.alpha;
  j["material_label"] = p.material_label;
  auto& prov = j["provenance"] = nlohmann::json::object();
  for (const auto& [name, pr] : p.provenance) {
    nlohmann::json e;
    e["method"] = pr.method;
    e["percentile"] = pr.percentile ? nlohmann::json(*pr.percentile) : nlohmann::json(nullptr);
    e["sample_count"] = pr.sample_count;
    prov[name] = e;
  }
  return j.dump(2) + "\n";
}

CalibrationProfile profile_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CalibrationError(std::string("profile is not valid JSON: ") + e.what());
  }
  CalibrationProfile p;
  try {
    const int version = j.at("version").get<int>();
    if (version != kProfileVersion) throw CalibrationError("unsupported profile version " + std::to_string(version));
    p.created_at = j.at("created_at").get<std::int64_t>();
    p.tau = j.at("tau").get<double>();
    p.theta_s = j.at("theta_s").get<double>();
    p.theta_q = j.at("theta_q").get<double>();
    p.theta_c = j.at("theta_c").get<double>();
    p.f_lim = j.at("f_lim").get<double>();
    p.f_stop = j.at("f_stop").get<double>();
    p.gamma = j.at("gamma").get<double>();
    p.alpha = j.at("alpha").get<double>();
    p.material_label = j.at("material_label").get<std::string>();
    for (const auto& [name, e] : j.at("provenance").items()) {
      Provenance pr;
      pr.method = e.at("method").get<std::string>();
      if (!e.at("percentile").is_null()) pr.percentile = e.at("percentile").get<double>();
      pr.sample_count = e.at("sample_count").get<std::size_t>();
      p.provenance[name] = pr;
    }
  } catch (const nlohmann::json::exception& e) {
    throw CalibrationError(std::string("malformed profile: ") + e.what());
  }
  validate_profile(p);
  return p;
}

void save_profile(const std::filesystem::path& path, const CalibrationProfile& profile) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CalibrationError("cannot write profile " + path.string());
  out << profile_to_json(profile);
}

CalibrationProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CalibrationError("cannot open profile " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return profile_from_json(ss.str());
}

}  // namespace trex
