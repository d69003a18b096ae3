#pragma once

// Closed-loop orchestration: generate -> augment -> calibrate -> validate ->
// govern, looping on recalibrate verdicts, repeated over seeds, with all
// artifacts written under an output directory together with content digests.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "seal/auditval.hpp"
#include "seal/canonical.hpp"
#include "seal/datagen.hpp"
#include "seal/ercd.hpp"
#include "seal/errors.hpp"
#include "seal/fedcal.hpp"
#include "seal/governance.hpp"
#include "seal/taskmodel.hpp"

namespace seal::pipeline {

using num::RngStream;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct InterferenceSpec {
  double fraction = 0.5;  // share of real samples degraded
  double mean_db = 3.0;   // mean SNR loss on degraded samples
};

struct RunConfig {
  datagen::SimulationParams theta;       // generator start point
  datagen::SimulationParams real_theta;  // ground truth for emulated real data
  std::size_t n_samples = 10000;
  ercd::ErcdConfig ercd;
  fedcal::FLConfig fl;
  task::TrainConfig train;
  audit::Thresholds thresholds;
  InterferenceSpec interference;
  std::size_t max_loop_iterations = 1;
  std::size_t n_seeds = 5;
  std::uint64_t master_seed = 0;
  std::string output_dir = "out";
};

// Reference configuration: the generator starts with an understated channel
// variance that calibration against the emulated real data must recover.
inline RunConfig default_config() {
  RunConfig cfg;
  cfg.theta.channel.shadowing_sigma_db = 2.0;
  cfg.real_theta = cfg.theta;
  cfg.real_theta.channel.shadowing_sigma_db = 6.0;
  cfg.train.max_epochs = 15;
  cfg.train.patience = 2;
  return cfg;
}

inline void validate(const RunConfig& cfg) {
  datagen::validate(cfg.theta);
  datagen::validate(cfg.real_theta);
  fedcal::validate(cfg.fl);
  if (cfg.n_samples < 1) throw ConfigError("run: n_samples < 1");
  if (cfg.max_loop_iterations < 1)
    throw ConfigError("run: max_loop_iterations < 1");
  if (cfg.n_seeds < 1) throw ConfigError("run: n_seeds < 1");
  if (!(cfg.interference.fraction >= 0.0 && cfg.interference.fraction <= 1.0))
    throw ConfigError("run: interference fraction outside [0,1]");
  if (!(cfg.interference.mean_db >= 0.0))
    throw ConfigError("run: interference mean_db < 0");
  if (!(cfg.thresholds.fid_max >= 0.0) || !(cfg.thresholds.eo_gap_max >= 0.0))
    throw ConfigError("run: thresholds must be >= 0");
  if (cfg.output_dir.empty()) throw ConfigError("run: output_dir empty");
}

// ---------------------------------------------------------------------------
// Config file format (strict: unknown keys are errors)
// ---------------------------------------------------------------------------

inline constexpr int kConfigSchemaVersion = 1;

namespace detail {

inline void require_keys(const Json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : allowed) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

inline void check_theta_keys(const Json& j, const std::string& where) {
  require_keys(j,
               {"traffic", "mobility", "channel", "anomaly_sigma", "surge",
                "n_users", "area_side_m", "duration_s", "label_rule",
                "urban_radius_m"},
               where);
  require_keys(j.at("traffic"), {"lambda0", "harmonics"}, where + ".traffic");
  for (const auto& h : j.at("traffic").at("harmonics"))
    require_keys(h, {"alpha", "freq_hz", "phase_rad"},
                 where + ".traffic.harmonics[]");
  require_keys(j.at("mobility"), {"v_min_mps", "v_max_mps", "pause_s"},
               where + ".mobility");
  require_keys(j.at("channel"),
               {"freq_hz", "pathloss_exponent", "shadowing_sigma_db",
                "ref_distance_m", "tx_budget_db", "max_link_distance_m"},
               where + ".channel");
  require_keys(j.at("surge"), {"surge_fraction", "surge_multiplier"},
               where + ".surge");
  require_keys(j.at("label_rule"), {"snr_threshold_db", "confound_coeff_db"},
               where + ".label_rule");
}

}  // namespace detail

inline Json config_to_json(const RunConfig& cfg) {
  // The perturbation spec shared by the generated suites; suites always come
  // in the fairness+robustness pair, so only the scalar knobs are exposed.
  ercd::PerturbationSpec spec;
  if (!cfg.ercd.suites.empty()) spec = cfg.ercd.suites.front().second;
  return Json{
      {"schema_version", kConfigSchemaVersion},
      {"theta", datagen::to_json(cfg.theta)},
      {"real_theta", datagen::to_json(cfg.real_theta)},
      {"n_samples", cfg.n_samples},
      {"ercd",
       {{"fairness_resample_enabled", cfg.ercd.fairness_resample_enabled},
        {"bias_enabled", cfg.ercd.bias_enabled},
        {"n_bins", cfg.ercd.n_bins},
        {"graph_alpha", cfg.ercd.graph_alpha},
        {"bootstrap_resamples", cfg.ercd.bootstrap_resamples},
        {"bootstrap_quantile", cfg.ercd.bootstrap_quantile},
        {"suite_eta", spec.eta},
        {"suite_fraction", spec.sample_fraction}}},
      {"fl",
       {{"n_clients", cfg.fl.n_clients},
        {"n_rounds", cfg.fl.n_rounds},
        {"learning_rate", cfg.fl.learning_rate},
        {"dp_sigma", cfg.fl.dp_sigma},
        {"clip_norm", cfg.fl.clip_norm},
        {"fd_step", cfg.fl.fd_step}}},
      {"train",
       {{"max_epochs", cfg.train.max_epochs},
        {"patience", cfg.train.patience},
        {"hidden", cfg.train.hidden},
        {"val_fraction", cfg.train.val_fraction}}},
      {"thresholds",
       {{"fid_max", cfg.thresholds.fid_max},
        {"eo_gap_max", cfg.thresholds.eo_gap_max}}},
      {"interference",
       {{"fraction", cfg.interference.fraction},
        {"mean_db", cfg.interference.mean_db}}},
      {"max_loop_iterations", cfg.max_loop_iterations},
      {"n_seeds", cfg.n_seeds},
      {"master_seed", cfg.master_seed},
      {"output_dir", cfg.output_dir}};
}

inline RunConfig config_from_json(const Json& j) {
  detail::require_keys(
      j,
      {"schema_version", "theta", "real_theta", "n_samples", "ercd", "fl",
       "train", "thresholds", "interference", "max_loop_iterations", "n_seeds",
       "master_seed", "output_dir"},
      "config");
  if (!j.contains("schema_version") ||
      j.at("schema_version").get<int>() != kConfigSchemaVersion)
    throw ConfigError("config: missing or unsupported schema_version");

  RunConfig cfg = default_config();
  if (j.contains("theta")) {
    detail::check_theta_keys(j.at("theta"), "config.theta");
    cfg.theta = datagen::params_from_json(j.at("theta"));
  }
  if (j.contains("real_theta")) {
    detail::check_theta_keys(j.at("real_theta"), "config.real_theta");
    cfg.real_theta = datagen::params_from_json(j.at("real_theta"));
  }
  if (j.contains("n_samples"))
    cfg.n_samples = j.at("n_samples").get<std::size_t>();
  if (j.contains("ercd")) {
    const Json& e = j.at("ercd");
    detail::require_keys(e,
                         {"fairness_resample_enabled", "bias_enabled", "n_bins",
                          "graph_alpha", "bootstrap_resamples",
                          "bootstrap_quantile", "suite_eta", "suite_fraction"},
                         "config.ercd");
    if (e.contains("fairness_resample_enabled"))
      cfg.ercd.fairness_resample_enabled =
          e.at("fairness_resample_enabled").get<bool>();
    if (e.contains("bias_enabled"))
      cfg.ercd.bias_enabled = e.at("bias_enabled").get<bool>();
    if (e.contains("n_bins")) cfg.ercd.n_bins = e.at("n_bins").get<int>();
    if (e.contains("graph_alpha"))
      cfg.ercd.graph_alpha = e.at("graph_alpha").get<double>();
    if (e.contains("bootstrap_resamples"))
      cfg.ercd.bootstrap_resamples =
          e.at("bootstrap_resamples").get<std::size_t>();
    if (e.contains("bootstrap_quantile"))
      cfg.ercd.bootstrap_quantile = e.at("bootstrap_quantile").get<double>();
    for (auto& [target, spec] : cfg.ercd.suites) {
      (void)target;
      if (e.contains("suite_eta")) spec.eta = e.at("suite_eta").get<double>();
      if (e.contains("suite_fraction"))
        spec.sample_fraction = e.at("suite_fraction").get<double>();
    }
  }
  if (j.contains("fl")) {
    const Json& f = j.at("fl");
    detail::require_keys(f,
                         {"n_clients", "n_rounds", "learning_rate", "dp_sigma",
                          "clip_norm", "fd_step"},
                         "config.fl");
    if (f.contains("n_clients"))
      cfg.fl.n_clients = f.at("n_clients").get<std::size_t>();
    if (f.contains("n_rounds"))
      cfg.fl.n_rounds = f.at("n_rounds").get<std::size_t>();
    if (f.contains("learning_rate"))
      cfg.fl.learning_rate = f.at("learning_rate").get<double>();
    if (f.contains("dp_sigma"))
      cfg.fl.dp_sigma = f.at("dp_sigma").get<double>();
    if (f.contains("clip_norm"))
      cfg.fl.clip_norm = f.at("clip_norm").get<double>();
    if (f.contains("fd_step")) cfg.fl.fd_step = f.at("fd_step").get<double>();
  }
  if (j.contains("train")) {
    const Json& t = j.at("train");
    detail::require_keys(t, {"max_epochs", "patience", "hidden", "val_fraction"},
                         "config.train");
    if (t.contains("max_epochs"))
      cfg.train.max_epochs = t.at("max_epochs").get<std::size_t>();
    if (t.contains("patience"))
      cfg.train.patience = t.at("patience").get<std::size_t>();
    if (t.contains("hidden"))
      cfg.train.hidden = t.at("hidden").get<std::size_t>();
    if (t.contains("val_fraction"))
      cfg.train.val_fraction = t.at("val_fraction").get<double>();
  }
  if (j.contains("thresholds")) {
    const Json& t = j.at("thresholds");
    detail::require_keys(t, {"fid_max", "eo_gap_max"}, "config.thresholds");
    if (t.contains("fid_max"))
      cfg.thresholds.fid_max = t.at("fid_max").get<double>();
    if (t.contains("eo_gap_max"))
      cfg.thresholds.eo_gap_max = t.at("eo_gap_max").get<double>();
  }
  if (j.contains("interference")) {
    const Json& t = j.at("interference");
    detail::require_keys(t, {"fraction", "mean_db"}, "config.interference");
    if (t.contains("fraction"))
      cfg.interference.fraction = t.at("fraction").get<double>();
    if (t.contains("mean_db"))
      cfg.interference.mean_db = t.at("mean_db").get<double>();
  }
  if (j.contains("max_loop_iterations"))
    cfg.max_loop_iterations = j.at("max_loop_iterations").get<std::size_t>();
  if (j.contains("n_seeds")) cfg.n_seeds = j.at("n_seeds").get<std::size_t>();
  if (j.contains("master_seed"))
    cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
  if (j.contains("output_dir"))
    cfg.output_dir = j.at("output_dir").get<std::string>();
  validate(cfg);
  return cfg;
}

inline RunConfig read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_config: cannot open " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("read_config: invalid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline void write_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_config: cannot open " + path);
  out << config_to_json(cfg).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Task-model grid search
// ---------------------------------------------------------------------------

inline constexpr double kGridLearningRates[] = {1e-3, 1e-2};
inline constexpr std::size_t kGridBatchSizes[] = {32, 128};

struct GridChoice {
  double learning_rate = 0.0;
  std::size_t batch_size = 0;
  double val_loss = 0.0;
};

// Train one model per (lr, batch) cell and keep the one with the lowest
// validation loss; the winning model itself is returned (no retrain).
inline task::MlpModel train_grid(const datagen::Dataset& d,
                                 task::TrainConfig base, GridChoice* choice) {
  std::optional<task::MlpModel> best;
  GridChoice best_choice;
  for (double lr : kGridLearningRates) {
    for (std::size_t batch : kGridBatchSizes) {
      task::TrainConfig cfg = base;
      cfg.learning_rate = lr;
      cfg.batch_size = batch;
      task::TrainStats stats;
      task::MlpModel m = task::train(d, cfg, &stats);
      if (!best || stats.best_val_loss < best_choice.val_loss) {
        best = std::move(m);
        best_choice = {lr, batch, stats.best_val_loss};
      }
    }
  }
  if (choice) *choice = best_choice;
  return *best;
}

// ---------------------------------------------------------------------------
// Per-seed loop
// ---------------------------------------------------------------------------

struct SeedResult {
  std::uint64_t seed = 0;
  audit::ValidationReport report;
  double fid_pre = 0.0;  // real vs the uncalibrated initial dataset
  std::size_t loop_iterations = 0;
  gov::State final_state = gov::State::Generated;
  GridChoice grid;
  std::vector<double> theta_final;
  std::string initial_digest;
  std::string calibrated_digest;
  std::string real_digest;
  std::string model_digest;
  std::string lifecycle_digest;  // last entry hash of the chain
};

namespace detail {

// Deterministic logical timestamps keep lifecycle hashes reproducible; wall
// clock time lives only in dataset metadata, which digests exclude.
struct Clock {
  std::size_t tick = 0;
  std::string next() { return "t" + std::to_string(tick++); }
};

// Stream-id layout within a seed (datagen reserves per-user substreams of
// whatever stream it is given, so top-level ids just need to be distinct).
inline constexpr std::uint64_t kStreamReal = 1;
inline constexpr std::uint64_t kStreamInterference = 2;
inline constexpr std::uint64_t kStreamInitial = 3;
inline constexpr std::uint64_t kStreamInitialAugment = 4;
inline constexpr std::uint64_t kStreamRegenBase = 0x100;    // + iteration
inline constexpr std::uint64_t kStreamAugmentBase = 0x200;  // + iteration

}  // namespace detail

// With bias scoring disabled, trail clauses that resolve to bias metrics
// cannot be filled in; drop them instead of failing the augmentation.
inline ercd::ErcdConfig effective_ercd(ercd::ErcdConfig e) {
  if (!e.bias_enabled) {
    std::erase_if(e.trail_mappings, [](const auto& m) {
      return m.second.rfind("causal_score", 0) == 0 ||
             m.second == "bias_threshold";
    });
  }
  return e;
}

inline SeedResult run_seed(const RunConfig& cfg, std::uint64_t seed,
                           const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (!out_dir.empty()) fs::create_directories(out_dir);
  const ercd::ErcdConfig ecfg = effective_ercd(cfg.ercd);

  // Emulated real side: ground-truth generator plus interference.
  datagen::Dataset real_base =
      datagen::generate(cfg.real_theta, cfg.n_samples,
                        RngStream(seed, detail::kStreamReal), seed,
                        detail::kStreamReal);
  RngStream irng(seed, detail::kStreamInterference);
  datagen::Dataset real = fedcal::emulate_real(
      real_base, cfg.interference.fraction, irng, cfg.interference.mean_db);

  // Synthetic side at the starting theta.
  datagen::Dataset d0 =
      datagen::generate(cfg.theta, cfg.n_samples,
                        RngStream(seed, detail::kStreamInitial), seed,
                        detail::kStreamInitial);

  detail::Clock clock;
  const std::string actor = "pipeline";
  gov::LifecycleRecord rec;

  ercd::AugmentedDataset dprime0 = ercd::augment(
      d0, ecfg, RngStream(seed, detail::kStreamInitialAugment));
  rec = gov::transition(rec, "ercd_complete", actor, clock.next());

  std::vector<fedcal::ClientState> clients =
      fedcal::partition_clients(real, cfg.fl.n_clients, seed);

  std::vector<double> theta_cur = datagen::theta_flat(cfg.theta);
  std::vector<fedcal::FLRoundState> full_history;

  SeedResult res;
  res.seed = seed;
  ercd::AugmentedDataset dprime;  // of the latest calibrated dataset
  task::MlpModel model;

  for (std::size_t it = 0; it < cfg.max_loop_iterations; ++it) {
    res.loop_iterations = it + 1;

    fedcal::CalibrationResult cal =
        fedcal::calibrate(theta_cur, clients, cfg.fl);
    theta_cur = cal.theta_final;
    for (auto& st : cal.history) {
      st.round = full_history.size();
      full_history.push_back(std::move(st));
    }
    rec = gov::transition(rec, "fl_round_complete", actor, clock.next());

    const datagen::SimulationParams theta_params =
        datagen::theta_from_flat(cfg.theta, theta_cur);
    const std::uint64_t gen_stream = detail::kStreamRegenBase + it;
    datagen::Dataset d_cal = datagen::generate(
        theta_params, cfg.n_samples, RngStream(seed, gen_stream), seed,
        gen_stream);
    dprime = ercd::augment(
        d_cal, ecfg,
        RngStream(seed, detail::kStreamAugmentBase + it));

    task::TrainConfig tc = cfg.train;
    tc.seed = seed;
    const datagen::Dataset& train_d =
        dprime.resampled ? *dprime.resampled : dprime.base;
    model = train_grid(train_d, tc, &res.grid);

    res.report = audit::validate(dprime, real, model, cfg.thresholds, seed);
    res.fid_pre = audit::fid(audit::standardized_features(real, model),
                             audit::standardized_features(d0, model));
    rec = gov::transition(rec, "metrics_computed", actor, clock.next());

    if (res.report.verdict == audit::GateVerdict::pass) {
      rec = gov::transition(rec, "audit_pass", actor, clock.next());
      break;
    }
    rec = gov::transition(rec, "audit_fail", actor, clock.next());
    if (it + 1 < cfg.max_loop_iterations)
      rec = gov::transition(rec, "recalibrate", actor, clock.next());
  }

  res.final_state = rec.state;
  res.theta_final = theta_cur;
  res.initial_digest = datagen::dataset_digest(d0);
  res.calibrated_digest = dprime.base_digest;
  res.real_digest = datagen::dataset_digest(real);
  res.model_digest = task::to_json(model).at("digest").get<std::string>();
  res.lifecycle_digest =
      rec.history.empty() ? gov::kGenesisHash : rec.history.back().entry_hash;

  if (!out_dir.empty()) {
    const fs::path dir(out_dir);
    datagen::write_dataset(d0, (dir / "dataset_initial").string());
    datagen::write_dataset(dprime.base, (dir / "dataset_calibrated").string());
    datagen::write_dataset(real, (dir / "real_emulated").string());
    if (dprime.resampled)
      datagen::write_dataset(*dprime.resampled,
                             (dir / "dataset_resampled").string());
    task::save_model(model, (dir / "model.json").string());
    fedcal::write_history(full_history,
                          (dir / "calibration_history.jsonl").string());
    fedcal::write_theta_trace(full_history, datagen::theta_names(cfg.theta),
                              (dir / "theta_trace.csv").string());
    gov::write_lifecycle_log(rec, (dir / "lifecycle.jsonl").string());
    {
      std::ofstream out(dir / "audit_trail.json");
      if (!out) throw IoError("run_seed: cannot write audit_trail.json");
      out << canonical_dump(ercd::to_json(dprime.trail)) << "\n";
    }
    {
      std::ofstream out(dir / "validation_report.json");
      if (!out) throw IoError("run_seed: cannot write validation_report.json");
      out << canonical_dump(audit::to_json(res.report)) << "\n";
    }
    Json names = Json::array();
    for (const auto& n : datagen::theta_names(cfg.theta)) names.push_back(n);
    Json summary{{"seed", seed},
                 {"loop_iterations", res.loop_iterations},
                 {"final_state", gov::to_string(res.final_state)},
                 {"fid_pre", res.fid_pre},
                 {"grid",
                  {{"learning_rate", res.grid.learning_rate},
                   {"batch_size", res.grid.batch_size},
                   {"val_loss", res.grid.val_loss}}},
                 {"theta_names", names},
                 {"theta_final", res.theta_final},
                 {"digests",
                  {{"dataset_initial", res.initial_digest},
                   {"dataset_calibrated", res.calibrated_digest},
                   {"real_emulated", res.real_digest},
                   {"model", res.model_digest},
                   {"lifecycle", res.lifecycle_digest},
                   {"validation_report",
                    canonical_digest(audit::to_json(res.report))}}}};
    std::ofstream out(dir / "seed_summary.json");
    if (!out) throw IoError("run_seed: cannot write seed_summary.json");
    out << canonical_dump(summary) << "\n";
  }
  return res;
}

// ---------------------------------------------------------------------------
// Aggregation over seeds
// ---------------------------------------------------------------------------

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n-1); 0 when n < 2
};

inline Aggregate aggregate(const std::vector<double>& xs) {
  Aggregate a;
  if (xs.empty()) return a;
  for (double x : xs) a.mean += x;
  a.mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return a;
  double ss = 0.0;
  for (double x : xs) ss += (x - a.mean) * (x - a.mean);
  a.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return a;
}

struct RunSummary {
  std::vector<SeedResult> seeds;
  Aggregate fid, fid_pre, eo_score, task_acc, adv_acc;
  double fid_rel_reduction_mean = 0.0;  // mean of (pre - post) / pre
  std::size_t n_certified = 0;
  std::size_t n_rejected = 0;
};

inline RunSummary summarize(std::vector<SeedResult> seeds) {
  RunSummary s;
  std::vector<double> fid, fid_pre, eo, acc, adv, red;
  for (const auto& r : seeds) {
    fid.push_back(r.report.fid);
    fid_pre.push_back(r.fid_pre);
    eo.push_back(r.report.fairness.eo_score);
    acc.push_back(r.report.task_acc);
    adv.push_back(r.report.adv_acc);
    if (r.fid_pre > 0.0) red.push_back((r.fid_pre - r.report.fid) / r.fid_pre);
    s.n_certified += r.final_state == gov::State::Certified;
    s.n_rejected += r.final_state == gov::State::Rejected;
  }
  s.fid = aggregate(fid);
  s.fid_pre = aggregate(fid_pre);
  s.eo_score = aggregate(eo);
  s.task_acc = aggregate(acc);
  s.adv_acc = aggregate(adv);
  s.fid_rel_reduction_mean = aggregate(red).mean;
  s.seeds = std::move(seeds);
  return s;
}

inline Json to_json(const RunSummary& s) {
  Json rows = Json::array();
  for (const auto& r : s.seeds) {
    rows.push_back(Json{
        {"seed", r.seed},
        {"fid", r.report.fid},
        {"fid_pre", r.fid_pre},
        {"eo_gap", r.report.fairness.eo_gap},
        {"eo_score", r.report.fairness.eo_score},
        {"task_acc", r.report.task_acc},
        {"adv_acc", r.report.adv_acc},
        {"verdict",
         r.report.verdict == audit::GateVerdict::pass ? "pass" : "recalibrate"},
        {"final_state", gov::to_string(r.final_state)},
        {"loop_iterations", r.loop_iterations},
        {"digests",
         {{"dataset_initial", r.initial_digest},
          {"dataset_calibrated", r.calibrated_digest},
          {"real_emulated", r.real_digest},
          {"model", r.model_digest},
          {"lifecycle", r.lifecycle_digest}}}});
  }
  auto agg = [](const Aggregate& a) {
    return Json{{"mean", a.mean}, {"std", a.std}};
  };
  return Json{{"schema_version", 1},
              {"seeds", rows},
              {"aggregate",
               {{"fid", agg(s.fid)},
                {"fid_pre", agg(s.fid_pre)},
                {"eo_score", agg(s.eo_score)},
                {"task_acc", agg(s.task_acc)},
                {"adv_acc", agg(s.adv_acc)},
                {"fid_rel_reduction_mean", s.fid_rel_reduction_mean}}},
              {"n_certified", s.n_certified},
              {"n_rejected", s.n_rejected}};
}

// ---------------------------------------------------------------------------
// Full run
// ---------------------------------------------------------------------------

inline RunSummary run_loop(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  validate(cfg);
  fs::create_directories(cfg.output_dir);
  write_config(cfg, (fs::path(cfg.output_dir) / "config.json").string());

  std::vector<SeedResult> results;
  for (std::size_t i = 0; i < cfg.n_seeds; ++i) {
    const std::uint64_t seed = cfg.master_seed + i;
    const std::string dir =
        (fs::path(cfg.output_dir) / ("seed_" + std::to_string(seed))).string();
    SeedResult r = run_seed(cfg, seed, dir);
    audit::append_ledger_row(
        r.report, (fs::path(cfg.output_dir) / "ledger.csv").string());
    results.push_back(std::move(r));
  }

  RunSummary summary = summarize(std::move(results));
  std::ofstream out(fs::path(cfg.output_dir) / "summary.json");
  if (!out) throw IoError("run_loop: cannot write summary.json");
  out << canonical_dump(to_json(summary)) << "\n";
  return summary;
}

// ---------------------------------------------------------------------------
// Ledger aggregation (the `report` stage)
// ---------------------------------------------------------------------------

// Reads a ledger CSV (header + one row per seed) and renders one
// "metric  mean ± std" line per numeric column.
inline std::string report_from_ledger(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("report: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("report: empty ledger " + path);
  std::vector<std::string> cols;
  {
    std::size_t start = 0;
    while (start <= line.size()) {
      const std::size_t comma = line.find(',', start);
      cols.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  std::vector<std::vector<double>> values(cols.size());
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t start = 0;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const std::size_t comma = line.find(',', start);
      const std::string cell = line.substr(start, comma - start);
      try {
        values[c].push_back(std::stod(cell));
      } catch (const std::exception&) {
        // non-numeric column (e.g. verdict): skipped in the table
      }
      start = comma == std::string::npos ? line.size() + 1 : comma + 1;
    }
    ++rows;
  }
  std::string out = "rows: " + std::to_string(rows) + "\n";
  char buf[128];
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (values[c].size() != rows) continue;  // not numeric in every row
    const Aggregate a = aggregate(values[c]);
    std::snprintf(buf, sizeof(buf), "%-10s %.4f +/- %.4f\n", cols[c].c_str(),
                  a.mean, a.std);
    out += buf;
  }
  return out;
}

}  // namespace seal::pipeline
