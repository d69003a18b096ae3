#pragma once

// Closed-loop feedback layer: virtual clients hold emulated real-world
// observations, score candidate generator parameters by regenerating their
// samples under common random numbers, and push DP-noised finite-difference
// gradients through FedAvg to update theta.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "seal/canonical.hpp"
#include "seal/datagen.hpp"
#include "seal/errors.hpp"
#include "seal/rng.hpp"

namespace seal::fedcal {

using datagen::Dataset;
using num::RngStream;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// A virtual client holding local observations. The shard's metadata keeps
// describing the generation run it was cut from (seed, stream, total sample
// count), which is what regeneration needs; the shard size is n_cl.
struct ClientState {
  int client_id = 0;
  Dataset real_samples;
  std::size_t n_cl = 0;
  RngStream rng{0, 0};
};

struct FLConfig {
  std::size_t n_clients = 5;
  std::size_t n_rounds = 10;
  double learning_rate = 0.05;
  double dp_sigma = 1.0;
  double clip_norm = 1.0;
  double fd_step = 1e-3;  // per normalized coordinate
};

inline void validate(const FLConfig& c) {
  if (c.n_clients < 1) throw InvalidParams("fl_config: n_clients < 1");
  if (!(c.learning_rate > 0.0))
    throw InvalidParams("fl_config: learning_rate <= 0");
  if (!(c.dp_sigma >= 0.0)) throw InvalidParams("fl_config: dp_sigma < 0");
  if (!(c.clip_norm > 0.0)) throw InvalidParams("fl_config: clip_norm <= 0");
  if (!(c.fd_step > 0.0)) throw InvalidParams("fl_config: fd_step <= 0");
}

struct ClientRound {
  int client_id = 0;
  double delta = 0.0;
  std::vector<double> gradient;
  std::vector<double> noised_gradient;
};

struct FLRoundState {
  std::size_t round = 0;
  std::vector<double> theta;
  std::vector<ClientRound> per_client;
  std::vector<double> aggregated_g;
  std::vector<double> theta_next;  // theta - lr * aggregated_g, pre-projection
  std::vector<double> theta_projected;
  double mean_delta = 0.0;
};

struct PrivacyLedger {
  double dp_sigma = 0.0;
  double clip_norm = 0.0;
  std::size_t rounds_applied = 0;
  std::string note = "(epsilon,delta)-DP accounting out of scope";
};

struct CalibrationResult {
  std::vector<double> theta_final;
  std::vector<FLRoundState> history;
  PrivacyLedger ledger;
};

// ---------------------------------------------------------------------------
// Real-world emulation and client partitioning
// ---------------------------------------------------------------------------

// Copy of base with snr_db degraded (additive negative offset, uniform on
// [0, 2*mean] so the mean loss is interference_mean_db) on exactly
// round(fraction * n) samples. Only snr_db changes on altered samples; the
// emulation is recorded in dataset-level metadata.
inline Dataset emulate_real(const Dataset& base, double interference_fraction,
                            RngStream& rng,
                            double interference_mean_db = 3.0) {
  if (!(interference_fraction >= 0.0 && interference_fraction <= 1.0))
    throw InvalidParams("emulate_real: fraction outside [0,1]");
  Dataset out = base;
  const std::size_t n = out.samples.size();
  const auto k = static_cast<std::size_t>(
      std::llround(interference_fraction * static_cast<double>(n)));
  // partial Fisher-Yates: first k entries of a shuffled index vector
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k && n > 0; ++i) {
    std::swap(idx[i], idx[i + rng.next_u64() % (n - i)]);
  }
  for (std::size_t i = 0; i < k; ++i) {
    out.samples[idx[i]].snr_db -=
        rng.uniform(0.0, 2.0 * interference_mean_db);
  }
  out.metadata.note = "emulated_real";
  out.metadata.created_at = datagen::now_iso8601();
  return out;
}

// Round-robin shards by user_id. Shard metadata is inherited from the source
// so regeneration stays keyed to the original run.
inline std::vector<ClientState> partition_clients(const Dataset& real,
                                                  std::size_t n_clients,
                                                  std::uint64_t seed) {
  if (n_clients < 1) throw InvalidParams("partition_clients: n_clients < 1");
  std::vector<ClientState> clients(n_clients);
  for (std::size_t c = 0; c < n_clients; ++c) {
    clients[c].client_id = static_cast<int>(c);
    clients[c].real_samples.schema = real.schema;
    clients[c].real_samples.metadata = real.metadata;
    clients[c].rng = RngStream(seed, 0x666c00 + c);  // per-client noise stream
  }
  for (const auto& s : real.samples) {
    clients[s.user_id % n_clients].real_samples.samples.push_back(s);
  }
  for (auto& c : clients) c.n_cl = c.real_samples.samples.size();
  clients.erase(std::remove_if(clients.begin(), clients.end(),
                               [](const ClientState& c) { return c.n_cl == 0; }),
                clients.end());
  return clients;
}

// ---------------------------------------------------------------------------
// Discrepancy (Eq. 4): delta = (1/m) sum ||f_theta(x_i) - y_i||^2
// ---------------------------------------------------------------------------

// Window width used by generation for a given user; needed to key samples by
// (user_id, window index), which is invariant under theta.
inline std::size_t window_index(const datagen::Sample& s, double duration_s,
                                std::size_t n_samples, std::size_t n_users) {
  const std::size_t users = std::min<std::size_t>(n_users, n_samples);
  const std::size_t u = s.user_id % users;
  const std::size_t windows =
      n_samples / users + (u < n_samples % users ? 1 : 0);
  const double w = duration_s / static_cast<double>(windows);
  return static_cast<std::size_t>(std::llround(s.timestamp_s / w));
}

inline double discrepancy(const std::vector<double>& theta,
                          const ClientState& client) {
  if (client.n_cl < 1) throw InvalidParams("discrepancy: empty client");
  const auto& meta = client.real_samples.metadata;
  const datagen::SimulationParams params =
      datagen::theta_from_flat(meta.theta, theta);
  RngStream gen_rng(meta.seed, meta.stream_id);
  const Dataset sim = datagen::generate(params, meta.n_samples, gen_rng,
                                        meta.seed, meta.stream_id);

  std::map<std::pair<std::size_t, std::size_t>, const datagen::Sample*> key;
  for (const auto& s : sim.samples) {
    key[{s.user_id, window_index(s, params.duration_s, meta.n_samples,
                                 params.n_users)}] = &s;
  }

  double acc = 0.0;
  for (const auto& obs : client.real_samples.samples) {
    const auto it = key.find({obs.user_id,
                              window_index(obs, params.duration_s,
                                           meta.n_samples, params.n_users)});
    if (it == key.end())
      throw SchemaMismatch("discrepancy: observation has no simulated twin");
    const auto* pred = it->second;
    const double ds = pred->speed_mps - obs.speed_mps;
    const double dt = pred->traffic_load_pps - obs.traffic_load_pps;
    const double dn = pred->snr_db - obs.snr_db;
    acc += ds * ds + dt * dt + dn * dn;
  }
  return acc / static_cast<double>(client.n_cl);
}

// ---------------------------------------------------------------------------
// Gradients, DP noise, FedAvg
// ---------------------------------------------------------------------------

// Central finite differences with a per-coordinate step of fd_step times the
// coordinate's admissible range (normalized step, raw-space gradient). The
// loss is any callable over the flat theta vector; evaluations at theta +/- h
// reuse whatever common random numbers the loss itself fixes.
template <typename Loss>
std::vector<double> fd_gradient(const Loss& loss, std::vector<double> theta,
                                const std::vector<double>& scale,
                                double fd_step) {
  if (!(fd_step > 0.0)) throw InvalidParams("fd_gradient: fd_step <= 0");
  if (scale.size() != theta.size())
    throw DimensionMismatch("fd_gradient: scale/theta length mismatch");
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double h = fd_step * scale[i];
    const double orig = theta[i];
    theta[i] = orig + h;
    const double up = loss(theta);
    theta[i] = orig - h;
    const double down = loss(theta);
    theta[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NonFiniteLoss("fd_gradient: loss not finite at probe point");
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline std::vector<double> theta_scales(
    const datagen::SimulationParams& base) {
  const auto b = datagen::theta_bounds(base);
  std::vector<double> s(b.lo.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = b.hi[i] - b.lo[i];
  return s;
}

inline std::vector<double> local_gradient(const std::vector<double>& theta,
                                          const ClientState& client,
                                          double fd_step) {
  return fd_gradient(
      [&client](const std::vector<double>& t) {
        return discrepancy(t, client);
      },
      theta, theta_scales(client.real_samples.metadata.theta), fd_step);
}

// Clip to L2 norm <= clip_norm, then add iid N(0, sigma^2) per coordinate.
inline std::vector<double> dp_noise(std::vector<double> g, double clip_norm,
                                    double sigma, RngStream& rng) {
  if (!(clip_norm > 0.0)) throw InvalidParams("dp_noise: clip_norm <= 0");
  if (!(sigma >= 0.0)) throw NegativeSigma("dp_noise: sigma < 0");
  double norm = 0.0;
  for (double v : g) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > clip_norm) {
    const double f = clip_norm / norm;
    for (double& v : g) v *= f;
  }
  if (sigma > 0.0) {
    for (double& v : g) v += sigma * rng.next_gaussian();
  }
  return g;
}

// g = sum (n_cl / N) * g_cl
inline std::vector<double> fedavg(
    const std::vector<std::pair<std::size_t, std::vector<double>>>&
        contributions,
    std::size_t n_total) {
  if (contributions.empty()) throw InvalidParams("fedavg: no contributions");
  std::size_t sum = 0;
  for (const auto& [n_cl, g] : contributions) {
    sum += n_cl;
    if (g.size() != contributions.front().second.size())
      throw DimensionMismatch("fedavg: gradient dimensions differ");
  }
  if (sum != n_total)
    throw WeightSumMismatch("fedavg: client sizes do not sum to N");
  std::vector<double> out(contributions.front().second.size(), 0.0);
  for (const auto& [n_cl, g] : contributions) {
    const double w = static_cast<double>(n_cl) / static_cast<double>(n_total);
    for (std::size_t i = 0; i < g.size(); ++i) out[i] += w * g[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rounds and calibration
// ---------------------------------------------------------------------------

// One FedAvg round over an arbitrary per-client loss (the production loss is
// the regeneration discrepancy; tests plug analytic doubles).
template <typename LossOfClient>
FLRoundState run_round_with(const std::vector<double>& theta,
                            std::vector<ClientState>& clients,
                            const FLConfig& cfg, PrivacyLedger& ledger,
                            const LossOfClient& loss_of,
                            const std::vector<double>& scale) {
  validate(cfg);
  if (clients.empty()) throw InvalidParams("run_round: no clients");
  FLRoundState st;
  st.theta = theta;

  std::size_t n_total = 0;
  std::vector<std::pair<std::size_t, std::vector<double>>> contributions;
  for (auto& c : clients) {
    ClientRound cr;
    cr.client_id = c.client_id;
    cr.delta = loss_of(theta, c);
    cr.gradient = fd_gradient(
        [&loss_of, &c](const std::vector<double>& t) { return loss_of(t, c); },
        theta, scale, cfg.fd_step);
    cr.noised_gradient =
        dp_noise(cr.gradient, cfg.clip_norm, cfg.dp_sigma, c.rng);
    st.mean_delta += cr.delta;
    n_total += c.n_cl;
    contributions.emplace_back(c.n_cl, cr.noised_gradient);
    st.per_client.push_back(std::move(cr));
  }
  st.mean_delta /= static_cast<double>(clients.size());

  st.aggregated_g = fedavg(contributions, n_total);
  st.theta_next.resize(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    st.theta_next[i] = theta[i] - cfg.learning_rate * st.aggregated_g[i];
  }
  ledger.dp_sigma = cfg.dp_sigma;
  ledger.clip_norm = cfg.clip_norm;
  ledger.rounds_applied += 1;
  return st;
}

inline FLRoundState run_round(const std::vector<double>& theta,
                              std::vector<ClientState>& clients,
                              const FLConfig& cfg, PrivacyLedger& ledger) {
  FLRoundState st = run_round_with(
      theta, clients, cfg, ledger,
      [](const std::vector<double>& t, const ClientState& c) {
        return discrepancy(t, c);
      },
      theta_scales(clients.front().real_samples.metadata.theta));
  // keep theta inside the admissible region (clamp + coupled invariants)
  if (!clients.empty()) {
    const auto& base = clients.front().real_samples.metadata.theta;
    st.theta_projected =
        datagen::theta_flat(datagen::theta_from_flat(base, st.theta_next));
  }
  return st;
}

inline CalibrationResult calibrate(const std::vector<double>& theta0,
                                   std::vector<ClientState>& clients,
                                   const FLConfig& cfg) {
  validate(cfg);
  CalibrationResult res;
  res.theta_final = theta0;
  res.ledger.dp_sigma = cfg.dp_sigma;
  res.ledger.clip_norm = cfg.clip_norm;
  for (std::size_t r = 0; r < cfg.n_rounds; ++r) {
    FLRoundState st = run_round(res.theta_final, clients, cfg, res.ledger);
    st.round = r;
    res.theta_final = st.theta_projected;
    res.history.push_back(std::move(st));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Export: JSONL round history, CSV theta trace
// ---------------------------------------------------------------------------

inline Json to_json(const FLRoundState& st) {
  Json per = Json::array();
  for (const auto& c : st.per_client) {
    per.push_back(Json{{"client_id", c.client_id}, {"delta", c.delta}});
  }
  return Json{{"round", st.round},
              {"mean_delta", st.mean_delta},
              {"theta", st.theta},
              {"aggregated_g", st.aggregated_g},
              {"theta_next", st.theta_next},
              {"theta_projected", st.theta_projected},
              {"per_client", per}};
}

inline void write_history(const std::vector<FLRoundState>& history,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_history: cannot open " + path);
  for (const auto& st : history) out << to_json(st).dump() << "\n";
}

inline void write_theta_trace(const std::vector<FLRoundState>& history,
                              const std::vector<std::string>& names,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_theta_trace: cannot open " + path);
  out << "round";
  for (const auto& name : names) out << "," << name;
  out << "\n";
  char buf[32];
  for (const auto& st : history) {
    out << st.round;
    for (double v : st.theta_projected) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << "," << buf;
    }
    out << "\n";
  }
}

}  // namespace seal::fedcal
