#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <string>
#include <vector>

#include "seal/canonical.hpp"
#include "seal/errors.hpp"
#include "seal/rng.hpp"

namespace seal::datagen {

using num::RngStream;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr const char* kGeneratorVersion = "seal-datagen-1";

// ---------------------------------------------------------------------------
// Simulation parameters
// ---------------------------------------------------------------------------

struct Harmonic {
  double alpha = 0.0;  // amplitude, packets/s
  double freq_hz = 0.0;
  double phase_rad = 0.0;
};

struct TrafficParams {
  double lambda0 = 5.0;  // packets/s
  std::vector<Harmonic> harmonics;
};

struct MobilityParams {
  double v_min_mps = 1.0;
  double v_max_mps = 10.0;
  double pause_s = 0.0;
};

struct ChannelParams {
  double freq_hz = 28e9;
  double pathloss_exponent = 2.5;
  double shadowing_sigma_db = 2.0;  // the "channel variance" FL refines
  double ref_distance_m = 1.0;
  // Link budget folded into one constant (tx power + gains - noise floor).
  double tx_budget_db = 90.0;
  // Serving-link distance is drawn uniformly in [ref, max_link]; it is
  // independent of the user's map position so the channel carries no
  // geographic group signal of its own.
  double max_link_distance_m = 200.0;
};

struct AnomalySpec {
  double surge_fraction = 0.2;
  double surge_multiplier = 1.2;
};

struct LabelRuleParams {
  double snr_threshold_db = -15.0;
  // Provisioning penalty subtracted from urban SNR before the threshold
  // test; > 0 plants a group -> snr -> label path the bias audit can
  // detect, 0 leaves the label group-blind.
  double confound_coeff_db = 0.0;
};

struct SimulationParams {
  TrafficParams traffic;
  MobilityParams mobility;
  ChannelParams channel;
  double anomaly_sigma = 0.5;
  AnomalySpec surge;
  std::size_t n_users = 100;
  double area_side_m = 1000.0;
  double duration_s = 100.0;
  LabelRuleParams label_rule;
  double urban_radius_m = 300.0;  // central disc classified as "urban"
};

inline double abs_harmonic_sum(const TrafficParams& t) {
  double s = 0.0;
  for (const auto& h : t.harmonics) s += std::abs(h.alpha);
  return s;
}

inline void validate(const SimulationParams& p) {
  auto fin = [](double v) { return std::isfinite(v); };
  if (!fin(p.traffic.lambda0) || p.traffic.lambda0 < 0.0)
    throw InvalidParams("lambda0 must be finite and >= 0");
  for (const auto& h : p.traffic.harmonics)
    if (!fin(h.alpha) || !fin(h.freq_hz) || !fin(h.phase_rad))
      throw InvalidParams("harmonic fields must be finite");
  if (p.traffic.lambda0 < abs_harmonic_sum(p.traffic) - 1e-12)
    throw InvalidParams("lambda0 < sum |alpha_k|: rate can go negative");
  if (!(p.mobility.v_min_mps > 0.0) ||
      p.mobility.v_min_mps > p.mobility.v_max_mps)
    throw InvalidParams("require 0 < v_min <= v_max");
  if (p.mobility.pause_s < 0.0) throw InvalidParams("pause_s < 0");
  if (!(p.channel.freq_hz > 0.0)) throw InvalidParams("freq_hz <= 0");
  if (!(p.channel.ref_distance_m > 0.0)) throw InvalidParams("ref_distance <= 0");
  if (p.channel.shadowing_sigma_db < 0.0)
    throw InvalidParams("shadowing_sigma_db < 0");
  if (p.channel.max_link_distance_m < p.channel.ref_distance_m)
    throw InvalidParams("max_link_distance < ref_distance");
  if (p.anomaly_sigma < 0.0) throw InvalidParams("anomaly_sigma < 0");
  if (p.surge.surge_fraction < 0.0 || p.surge.surge_fraction > 1.0)
    throw InvalidParams("surge_fraction outside [0,1]");
  if (p.surge.surge_multiplier < 1.0) throw InvalidParams("surge_multiplier < 1");
  if (p.n_users < 1) throw InvalidParams("n_users < 1");
  if (!(p.area_side_m > 0.0)) throw InvalidParams("area_side_m <= 0");
  if (!(p.duration_s > 0.0)) throw InvalidParams("duration_s <= 0");
}

// ---------------------------------------------------------------------------
// Flat real-vector view of theta (the coordinates FL differentiates).
// Order: [lambda0, alpha_1..K, f_1..K, phi_1..K, v_min, v_max,
//         pathloss_exponent, shadowing_sigma_db, anomaly_sigma,
//         surge_multiplier].  Version: 1.
// ---------------------------------------------------------------------------

inline std::size_t theta_dim(const SimulationParams& p) {
  return 1 + 3 * p.traffic.harmonics.size() + 6;
}

inline std::vector<double> theta_flat(const SimulationParams& p) {
  std::vector<double> v;
  v.reserve(theta_dim(p));
  v.push_back(p.traffic.lambda0);
  for (const auto& h : p.traffic.harmonics) v.push_back(h.alpha);
  for (const auto& h : p.traffic.harmonics) v.push_back(h.freq_hz);
  for (const auto& h : p.traffic.harmonics) v.push_back(h.phase_rad);
  v.push_back(p.mobility.v_min_mps);
  v.push_back(p.mobility.v_max_mps);
  v.push_back(p.channel.pathloss_exponent);
  v.push_back(p.channel.shadowing_sigma_db);
  v.push_back(p.anomaly_sigma);
  v.push_back(p.surge.surge_multiplier);
  return v;
}

inline std::vector<std::string> theta_names(const SimulationParams& p) {
  std::vector<std::string> n{"lambda0"};
  const std::size_t k = p.traffic.harmonics.size();
  for (std::size_t i = 0; i < k; ++i) n.push_back("alpha_" + std::to_string(i + 1));
  for (std::size_t i = 0; i < k; ++i) n.push_back("freq_" + std::to_string(i + 1));
  for (std::size_t i = 0; i < k; ++i) n.push_back("phase_" + std::to_string(i + 1));
  n.insert(n.end(), {"v_min", "v_max", "pathloss_exponent",
                     "shadowing_sigma_db", "anomaly_sigma", "surge_multiplier"});
  return n;
}

struct ThetaBounds {
  std::vector<double> lo, hi;
};

// Admissible intervals per coordinate; also used to normalize FL gradient
// steps so every coordinate moves on a comparable scale.
inline ThetaBounds theta_bounds(const SimulationParams& p) {
  ThetaBounds b;
  const std::size_t k = p.traffic.harmonics.size();
  auto push = [&](double lo, double hi) {
    b.lo.push_back(lo);
    b.hi.push_back(hi);
  };
  push(0.0, 50.0);                                  // lambda0
  for (std::size_t i = 0; i < k; ++i) push(-10.0, 10.0);  // alpha
  for (std::size_t i = 0; i < k; ++i) push(1e-4, 10.0);   // freq
  for (std::size_t i = 0; i < k; ++i) push(-kPi, kPi);    // phase
  push(0.1, 20.0);   // v_min
  push(0.1, 20.0);   // v_max
  push(1.5, 6.0);    // pathloss exponent
  push(0.0, 12.0);   // shadowing sigma
  push(0.0, 10.0);   // anomaly sigma
  push(1.0, 5.0);    // surge multiplier
  return b;
}

// Rebuild params from a flat vector, clamping into the admissible region
// (the FL update step can leave it).
inline SimulationParams theta_from_flat(const SimulationParams& tmpl,
                                        const std::vector<double>& v,
                                        bool project = true) {
  if (v.size() != theta_dim(tmpl))
    throw DimensionMismatch("theta_from_flat: wrong length");
  SimulationParams p = tmpl;
  const ThetaBounds b = theta_bounds(tmpl);
  std::vector<double> w = v;
  if (project) {
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = std::clamp(w[i], b.lo[i], b.hi[i]);
  }
  std::size_t i = 0;
  const std::size_t k = tmpl.traffic.harmonics.size();
  p.traffic.lambda0 = w[i++];
  for (std::size_t j = 0; j < k; ++j) p.traffic.harmonics[j].alpha = w[i++];
  for (std::size_t j = 0; j < k; ++j) p.traffic.harmonics[j].freq_hz = w[i++];
  for (std::size_t j = 0; j < k; ++j) p.traffic.harmonics[j].phase_rad = w[i++];
  p.mobility.v_min_mps = w[i++];
  p.mobility.v_max_mps = w[i++];
  p.channel.pathloss_exponent = w[i++];
  p.channel.shadowing_sigma_db = w[i++];
  p.anomaly_sigma = w[i++];
  p.surge.surge_multiplier = w[i++];
  if (project) {
    if (p.mobility.v_min_mps > p.mobility.v_max_mps)
      p.mobility.v_min_mps = p.mobility.v_max_mps;
    // lambda0 must dominate the harmonic amplitudes for lambda(t) >= 0.
    p.traffic.lambda0 =
        std::max(p.traffic.lambda0, abs_harmonic_sum(p.traffic));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Samples and datasets
// ---------------------------------------------------------------------------

enum class Group : std::uint8_t { urban = 0, rural = 1 };

inline const char* to_string(Group g) {
  return g == Group::urban ? "urban" : "rural";
}

struct Provenance {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string generator_version = kGeneratorVersion;
  std::string note;  // e.g. "fairness_resample", "real_emulation"
};

struct Sample {
  double timestamp_s = 0.0;
  std::uint64_t user_id = 0;
  double pos_x_m = 0.0;
  double pos_y_m = 0.0;
  double speed_mps = 0.0;
  double traffic_load_pps = 0.0;
  double snr_db = 0.0;
  Group group = Group::rural;
  int label = 0;
  bool is_anomalous = false;
  Provenance provenance;
};

// Measurement features; the block anomaly injection perturbs and the block
// FID compares. Position/timestamp are identity fields, not measurements.
inline const std::vector<std::string>& numeric_feature_names() {
  static const std::vector<std::string> names{"speed_mps", "traffic_load_pps",
                                              "snr_db"};
  return names;
}

inline double numeric_feature(const Sample& s, const std::string& name) {
  if (name == "speed_mps") return s.speed_mps;
  if (name == "traffic_load_pps") return s.traffic_load_pps;
  if (name == "snr_db") return s.snr_db;
  throw UnknownFeature(name);
}

inline void set_numeric_feature(Sample& s, const std::string& name, double v) {
  if (name == "speed_mps") s.speed_mps = v;
  else if (name == "traffic_load_pps") s.traffic_load_pps = v;
  else if (name == "snr_db") s.snr_db = v;
  else throw UnknownFeature(name);
}

struct DatasetMetadata {
  SimulationParams theta;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  std::size_t n_samples = 0;
  std::string created_at;
  std::string schema_version = "1";
  std::string note;
};

struct Dataset {
  std::vector<std::string> schema;
  std::vector<Sample> samples;
  DatasetMetadata metadata;
};

inline std::vector<std::string> default_schema() {
  return {"timestamp_s", "user_id",  "pos_x_m", "pos_y_m",
          "speed_mps",   "traffic_load_pps", "snr_db",  "group",
          "label",       "is_anomalous"};
}

inline double center_distance_m(const Sample& s, const SimulationParams& p) {
  const double c = p.area_side_m / 2.0;
  return std::hypot(s.pos_x_m - c, s.pos_y_m - c);
}

inline Group group_of_position(double x, double y, const SimulationParams& p) {
  const double c = p.area_side_m / 2.0;
  return std::hypot(x - c, y - c) <= p.urban_radius_m ? Group::urban
                                                      : Group::rural;
}

// ---------------------------------------------------------------------------
// JSON conversion
// ---------------------------------------------------------------------------

inline Json to_json(const SimulationParams& p) {
  Json harm = Json::array();
  for (const auto& h : p.traffic.harmonics)
    harm.push_back({{"alpha", h.alpha},
                    {"freq_hz", h.freq_hz},
                    {"phase_rad", h.phase_rad}});
  return Json{
      {"traffic", {{"lambda0", p.traffic.lambda0}, {"harmonics", harm}}},
      {"mobility",
       {{"v_min_mps", p.mobility.v_min_mps},
        {"v_max_mps", p.mobility.v_max_mps},
        {"pause_s", p.mobility.pause_s}}},
      {"channel",
       {{"freq_hz", p.channel.freq_hz},
        {"pathloss_exponent", p.channel.pathloss_exponent},
        {"shadowing_sigma_db", p.channel.shadowing_sigma_db},
        {"ref_distance_m", p.channel.ref_distance_m},
        {"tx_budget_db", p.channel.tx_budget_db},
        {"max_link_distance_m", p.channel.max_link_distance_m}}},
      {"anomaly_sigma", p.anomaly_sigma},
      {"surge",
       {{"surge_fraction", p.surge.surge_fraction},
        {"surge_multiplier", p.surge.surge_multiplier}}},
      {"n_users", p.n_users},
      {"area_side_m", p.area_side_m},
      {"duration_s", p.duration_s},
      {"label_rule",
       {{"snr_threshold_db", p.label_rule.snr_threshold_db},
        {"confound_coeff_db", p.label_rule.confound_coeff_db}}},
      {"urban_radius_m", p.urban_radius_m}};
}

inline SimulationParams params_from_json(const Json& j) {
  SimulationParams p;
  const auto& t = j.at("traffic");
  p.traffic.lambda0 = t.at("lambda0").get<double>();
  p.traffic.harmonics.clear();
  for (const auto& h : t.at("harmonics"))
    p.traffic.harmonics.push_back({h.at("alpha").get<double>(),
                                   h.at("freq_hz").get<double>(),
                                   h.at("phase_rad").get<double>()});
  const auto& m = j.at("mobility");
  p.mobility = {m.at("v_min_mps").get<double>(), m.at("v_max_mps").get<double>(),
                m.at("pause_s").get<double>()};
  const auto& c = j.at("channel");
  p.channel = {c.at("freq_hz").get<double>(),
               c.at("pathloss_exponent").get<double>(),
               c.at("shadowing_sigma_db").get<double>(),
               c.at("ref_distance_m").get<double>(),
               c.at("tx_budget_db").get<double>(),
               c.at("max_link_distance_m").get<double>()};
  p.anomaly_sigma = j.at("anomaly_sigma").get<double>();
  const auto& s = j.at("surge");
  p.surge = {s.at("surge_fraction").get<double>(),
             s.at("surge_multiplier").get<double>()};
  p.n_users = j.at("n_users").get<std::size_t>();
  p.area_side_m = j.at("area_side_m").get<double>();
  p.duration_s = j.at("duration_s").get<double>();
  const auto& l = j.at("label_rule");
  p.label_rule = {l.at("snr_threshold_db").get<double>(),
                  l.at("confound_coeff_db").get<double>()};
  p.urban_radius_m = j.at("urban_radius_m").get<double>();
  return p;
}

inline Json to_json(const Sample& s) {
  return Json{{"timestamp_s", s.timestamp_s},
              {"user_id", s.user_id},
              {"pos_x_m", s.pos_x_m},
              {"pos_y_m", s.pos_y_m},
              {"speed_mps", s.speed_mps},
              {"traffic_load_pps", s.traffic_load_pps},
              {"snr_db", s.snr_db},
              {"group", to_string(s.group)},
              {"label", s.label},
              {"is_anomalous", s.is_anomalous},
              {"provenance",
               {{"run_id", s.provenance.run_id},
                {"seed", s.provenance.seed},
                {"generator_version", s.provenance.generator_version},
                {"note", s.provenance.note}}}};
}

inline Sample sample_from_json(const Json& j) {
  Sample s;
  s.timestamp_s = j.at("timestamp_s").get<double>();
  s.user_id = j.at("user_id").get<std::uint64_t>();
  s.pos_x_m = j.at("pos_x_m").get<double>();
  s.pos_y_m = j.at("pos_y_m").get<double>();
  s.speed_mps = j.at("speed_mps").get<double>();
  s.traffic_load_pps = j.at("traffic_load_pps").get<double>();
  s.snr_db = j.at("snr_db").get<double>();
  s.group = j.at("group").get<std::string>() == "urban" ? Group::urban
                                                        : Group::rural;
  s.label = j.at("label").get<int>();
  s.is_anomalous = j.at("is_anomalous").get<bool>();
  const auto& pr = j.at("provenance");
  s.provenance = {pr.at("run_id").get<std::string>(),
                  pr.at("seed").get<std::uint64_t>(),
                  pr.at("generator_version").get<std::string>(),
                  pr.at("note").get<std::string>()};
  return s;
}

// Content digest of a dataset: canonical sample lines plus the theta
// snapshot and seed. Creation time is deliberately excluded.
inline std::string dataset_digest(const Dataset& d) {
  std::string buf;
  buf.reserve(d.samples.size() * 220 + 1024);
  for (const auto& s : d.samples) canonical_dump(to_json(s), buf);
  canonical_dump(to_json(d.metadata.theta), buf);
  buf += std::to_string(d.metadata.seed);
  buf += '/';
  buf += std::to_string(d.metadata.stream_id);
  return crypto::sha256_hex(buf);
}

inline std::string now_iso8601() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline double rate_at(const TrafficParams& t, double time_s) {
  double r = t.lambda0;
  for (const auto& h : t.harmonics)
    r += h.alpha * std::sin(2.0 * kPi * h.freq_hz * time_s + h.phase_rad);
  return r;
}

inline double lambda_max(const TrafficParams& t) {
  return t.lambda0 + abs_harmonic_sum(t);
}

// Exact inhomogeneous Poisson sampling by Lewis-Shedler thinning at the
// majorant rate lambda0 + sum |alpha_k|.
inline std::vector<double> sample_arrivals(const TrafficParams& traffic,
                                           double duration_s, RngStream& rng) {
  std::vector<double> out;
  const double lmax = lambda_max(traffic);
  if (lmax <= 0.0) return out;
  double t = 0.0;
  while (true) {
    t += -std::log(rng.next_double_open()) / lmax;
    if (t > duration_s) break;
    if (rng.next_double() * lmax < rate_at(traffic, t)) out.push_back(t);
  }
  return out;
}

struct TrajectoryPoint {
  double t_s = 0.0;
  double x_m = 0.0;
  double y_m = 0.0;
  double speed_mps = 0.0;  // 0 while paused
};

// Random waypoint over [0, area]^2 sampled every dt_s.
inline std::vector<TrajectoryPoint> random_waypoint(const MobilityParams& mob,
                                                    double area_side_m,
                                                    double duration_s,
                                                    double dt_s,
                                                    RngStream& rng) {
  if (!(dt_s > 0.0)) throw InvalidParams("random_waypoint: dt_s <= 0");
  std::vector<TrajectoryPoint> traj;
  const std::size_t steps =
      static_cast<std::size_t>(std::floor(duration_s / dt_s + 0.5));
  traj.reserve(steps);

  double x = rng.uniform(0.0, area_side_m);
  double y = rng.uniform(0.0, area_side_m);
  double dest_x = rng.uniform(0.0, area_side_m);
  double dest_y = rng.uniform(0.0, area_side_m);
  double speed = rng.uniform(mob.v_min_mps, mob.v_max_mps);
  double pause_left = 0.0;

  for (std::size_t i = 0; i < steps; ++i) {
    traj.push_back({static_cast<double>(i) * dt_s, x, y,
                    pause_left > 0.0 ? 0.0 : speed});
    // advance one dt of continuous motion
    double remaining = dt_s;
    while (remaining > 1e-12) {
      if (pause_left > 0.0) {
        const double p = std::min(pause_left, remaining);
        pause_left -= p;
        remaining -= p;
        continue;
      }
      const double dist = std::hypot(dest_x - x, dest_y - y);
      const double travel_t = dist / speed;
      if (travel_t <= remaining) {
        x = dest_x;
        y = dest_y;
        remaining -= travel_t;
        pause_left = mob.pause_s;
        dest_x = rng.uniform(0.0, area_side_m);
        dest_y = rng.uniform(0.0, area_side_m);
        speed = rng.uniform(mob.v_min_mps, mob.v_max_mps);
      } else {
        const double frac = remaining / travel_t;
        x += (dest_x - x) * frac;
        y += (dest_y - y) * frac;
        remaining = 0.0;
      }
    }
  }
  return traj;
}

// Log-distance path loss with log-normal shadowing: one shadowing draw is
// consumed per call regardless of sigma, which keeps draws aligned when
// only sigma changes between evaluations.
inline double channel_snr(const ChannelParams& chan, double distance_m,
                          RngStream& rng) {
  if (distance_m < chan.ref_distance_m)
    throw DistanceBelowReference("channel_snr: d < ref_distance");
  const double fspl_ref =
      20.0 * std::log10(4.0 * kPi * chan.ref_distance_m * chan.freq_hz /
                        kSpeedOfLight);
  const double pathloss =
      fspl_ref + 10.0 * chan.pathloss_exponent *
                     std::log10(distance_m / chan.ref_distance_m);
  const double shadow = rng.next_gaussian();
  return chan.tx_budget_db - pathloss - chan.shadowing_sigma_db * shadow;
}

// d_hat = d + eps, eps ~ N(0, sigma^2) on the measurement features only.
inline Sample inject_anomaly(const Sample& d, double sigma, RngStream& rng) {
  if (sigma < 0.0) throw NegativeSigma("inject_anomaly");
  Sample out = d;
  for (const auto& f : numeric_feature_names()) {
    const double eps = sigma * rng.next_gaussian();
    set_numeric_feature(out, f, numeric_feature(out, f) + eps);
  }
  out.is_anomalous = true;
  return out;
}

// Evenly interleaved surge flag: window i of k is a surge window iff the
// cumulative fraction crosses an integer, yielding floor(k*f) +- 1 windows
// spread across the duration.
inline bool is_surge_window(std::size_t i, double fraction) {
  return std::floor((static_cast<double>(i) + 1.0) * fraction) >
         std::floor(static_cast<double>(i) * fraction);
}

// Full generation: one sample per (user, time window). Substreams are
// keyed by (user_id, purpose) so output is independent of evaluation
// order, and window keys do not depend on theta - regeneration under a
// different theta stays sample-aligned.
inline Dataset generate(const SimulationParams& theta, std::size_t n_samples,
                        const RngStream& rng, std::uint64_t seed_for_meta = 0,
                        std::uint64_t stream_for_meta = 0) {
  validate(theta);
  if (n_samples < 1) throw InvalidParams("generate: n_samples < 1");

  Dataset d;
  d.schema = default_schema();
  d.metadata.theta = theta;
  d.metadata.seed = seed_for_meta;
  d.metadata.stream_id = stream_for_meta;
  d.metadata.n_samples = n_samples;
  d.metadata.created_at = now_iso8601();

  char run_id[32];
  std::snprintf(run_id, sizeof(run_id), "run-%016llx",
                static_cast<unsigned long long>(seed_for_meta));

  const std::size_t users = std::min<std::size_t>(theta.n_users, n_samples);
  d.samples.reserve(n_samples);

  for (std::size_t u = 0; u < users; ++u) {
    const std::size_t windows =
        n_samples / users + (u < n_samples % users ? 1 : 0);
    if (windows == 0) continue;
    const double w = theta.duration_s / static_cast<double>(windows);

    RngStream arr_rng = rng.substream(u, 1);
    RngStream mob_rng = rng.substream(u, 2);
    RngStream link_rng = rng.substream(u, 3);
    RngStream shadow_rng = rng.substream(u, 4);
    RngStream anomaly_rng = rng.substream(u, 5);

    // Arrivals under the surged rate: thinning against a majorant covering
    // lambda_max * surge_multiplier. The majorant is rounded up to a power
    // of two so that nearby theta values share the same proposal times and
    // regeneration differences stay local (common random numbers).
    const double lmax_raw =
        lambda_max(theta.traffic) * theta.surge.surge_multiplier;
    const double lmax =
        lmax_raw > 0.0 ? std::exp2(std::ceil(std::log2(lmax_raw))) : 0.0;
    std::vector<std::size_t> counts(windows, 0);
    if (lmax > 0.0) {
      double t = 0.0;
      while (true) {
        t += -std::log(arr_rng.next_double_open()) / lmax;
        if (t >= theta.duration_s) break;
        auto win = std::min<std::size_t>(static_cast<std::size_t>(t / w),
                                         windows - 1);
        const double mult = is_surge_window(win, theta.surge.surge_fraction)
                                ? theta.surge.surge_multiplier
                                : 1.0;
        if (arr_rng.next_double() * lmax < rate_at(theta.traffic, t) * mult)
          ++counts[win];
      }
    }

    const auto traj = random_waypoint(theta.mobility, theta.area_side_m,
                                      theta.duration_s, w, mob_rng);

    for (std::size_t i = 0; i < windows; ++i) {
      Sample s;
      s.timestamp_s = static_cast<double>(i) * w;
      s.user_id = u;
      const auto& tp = traj[std::min(i, traj.size() - 1)];
      s.pos_x_m = tp.x_m;
      s.pos_y_m = tp.y_m;
      s.speed_mps = tp.speed_mps;
      s.traffic_load_pps = static_cast<double>(counts[i]) / w;
      const double dist = link_rng.uniform(theta.channel.ref_distance_m,
                                           theta.channel.max_link_distance_m);
      s.snr_db = channel_snr(theta.channel, dist, shadow_rng);
      s.group = group_of_position(s.pos_x_m, s.pos_y_m, theta);
      if (s.group == Group::urban) {
        s.snr_db -= theta.label_rule.confound_coeff_db;
      }
      const bool surge = is_surge_window(i, theta.surge.surge_fraction);
      s.label =
          (s.snr_db < theta.label_rule.snr_threshold_db || surge) ? 1 : 0;
      s.provenance = {run_id, seed_for_meta, kGeneratorVersion, ""};
      if (surge && theta.anomaly_sigma > 0.0) {
        s = inject_anomaly(s, theta.anomaly_sigma, anomaly_rng);
      } else if (surge) {
        s.is_anomalous = true;
      }
      d.samples.push_back(std::move(s));
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Persistence: JSON-Lines samples plus a sidecar metadata document.
// ---------------------------------------------------------------------------

inline Json metadata_to_json(const Dataset& d) {
  return Json{{"schema_version", d.metadata.schema_version},
              {"theta", to_json(d.metadata.theta)},
              {"seed", d.metadata.seed},
              {"stream_id", d.metadata.stream_id},
              {"n_samples", d.metadata.n_samples},
              {"created_at", d.metadata.created_at},
              {"note", d.metadata.note},
              {"schema", d.schema},
              {"content_digest", dataset_digest(d)}};
}

inline void write_dataset(const Dataset& d, const std::string& path_prefix) {
  std::ofstream out(path_prefix + ".jsonl");
  if (!out) throw IoError("cannot open " + path_prefix + ".jsonl");
  for (const auto& s : d.samples) out << canonical_dump(to_json(s)) << '\n';
  std::ofstream meta(path_prefix + ".meta.json");
  if (!meta) throw IoError("cannot open " + path_prefix + ".meta.json");
  meta << canonical_dump(metadata_to_json(d)) << '\n';
}

inline Dataset read_dataset(const std::string& path_prefix) {
  std::ifstream meta(path_prefix + ".meta.json");
  if (!meta) throw IoError("cannot open " + path_prefix + ".meta.json");
  Json mj = Json::parse(meta);
  Dataset d;
  d.metadata.schema_version = mj.at("schema_version").get<std::string>();
  d.metadata.theta = params_from_json(mj.at("theta"));
  d.metadata.seed = mj.at("seed").get<std::uint64_t>();
  d.metadata.stream_id = mj.at("stream_id").get<std::uint64_t>();
  d.metadata.n_samples = mj.at("n_samples").get<std::size_t>();
  d.metadata.created_at = mj.at("created_at").get<std::string>();
  d.metadata.note = mj.at("note").get<std::string>();
  d.schema = mj.at("schema").get<std::vector<std::string>>();
  std::ifstream in(path_prefix + ".jsonl");
  if (!in) throw IoError("cannot open " + path_prefix + ".jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    d.samples.push_back(sample_from_json(Json::parse(line)));
  }
  const std::string expect = mj.at("content_digest").get<std::string>();
  if (dataset_digest(d) != expect)
    throw DigestMismatch("dataset content does not match sidecar digest");
  return d;
}

}  // namespace seal::datagen
