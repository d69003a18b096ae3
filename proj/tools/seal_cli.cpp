// Command-line front end: runs the full closed loop or one stage at a time.
//
// Subcommands: generate | augment | calibrate | validate | govern |
//              run-loop | report
//
// Stages chained in order over the same seed directory reproduce exactly the
// artifacts of a single-iteration `run-loop` seed: each stage records content
// digests in stage.json and later stages refuse to run on stale inputs.
//
// Exit codes: 0 = success / Certified, 2 = Rejected (gate failed), 1 = error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "seal/pipeline.hpp"

namespace fs = std::filesystem;
using namespace seal;

namespace {

bool verbose() {
  const char* v = std::getenv("SEAL_LOG");
  return v != nullptr && std::string(v) != "" && std::string(v) != "off";
}

void log(const std::string& msg) {
  if (verbose()) std::cerr << "[seal] " << msg << "\n";
}

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string output;
  bool dry_run = false;
};

void add_common(CLI::App* sub, CommonArgs& a) {
  sub->add_option("--config", a.config_path, "JSON run configuration");
  sub->add_option("--seed", a.seed, "seed for this run/stage")
      ->each([&a](const std::string&) { a.seed_set = true; });
  sub->add_option("--output", a.output, "output directory");
  sub->add_flag("--dry-run", a.dry_run,
                "validate configuration and inputs, write nothing");
}

pipeline::RunConfig load_config(const CommonArgs& a) {
  pipeline::RunConfig cfg = a.config_path.empty()
                                ? pipeline::default_config()
                                : pipeline::read_config(a.config_path);
  if (!a.output.empty()) cfg.output_dir = a.output;
  if (a.seed_set) cfg.master_seed = a.seed;
  pipeline::validate(cfg);
  return cfg;
}

// Per-seed stage directory: where chained stages accumulate artifacts.
fs::path stage_dir(const pipeline::RunConfig& cfg, std::uint64_t seed) {
  return fs::path(cfg.output_dir) / ("seed_" + std::to_string(seed));
}

// ---------------------------------------------------------------------------
// stage.json bookkeeping: digests recorded by earlier stages, checked later
// ---------------------------------------------------------------------------

Json read_stage(const fs::path& dir) {
  std::ifstream in(dir / "stage.json");
  if (!in) throw IoError("missing stage.json in " + dir.string() +
                         " (run earlier stages first)");
  Json j;
  in >> j;
  return j;
}

void write_stage(const fs::path& dir, const Json& j) {
  std::ofstream out(dir / "stage.json");
  if (!out) throw IoError("cannot write stage.json in " + dir.string());
  out << canonical_dump(j) << "\n";
}

datagen::Dataset load_checked(const fs::path& dir, const Json& stage,
                              const std::string& name) {
  datagen::Dataset d = datagen::read_dataset((dir / name).string());
  const std::string want = stage.at("digests").at(name).get<std::string>();
  const std::string got = datagen::dataset_digest(d);
  if (got != want)
    throw DigestMismatch(name + ": artifact digest " + got.substr(0, 12) +
                         "... does not match recorded " + want.substr(0, 12) +
                         "... (stale or edited input)");
  return d;
}

void check_config_unchanged(const pipeline::RunConfig& cfg, const Json& stage) {
  const std::string want = stage.at("config_digest").get<std::string>();
  const std::string got = canonical_digest(pipeline::config_to_json(cfg));
  if (got != want)
    throw DigestMismatch(
        "configuration differs from the one earlier stages ran with");
}

// ---------------------------------------------------------------------------
// Stages (mirror pipeline::run_seed, single loop iteration)
// ---------------------------------------------------------------------------

int cmd_generate(const CommonArgs& a) {
  pipeline::RunConfig cfg = load_config(a);
  const std::uint64_t seed = cfg.master_seed;
  if (a.dry_run) {
    std::cout << "config ok; would generate " << cfg.n_samples
              << " synthetic + emulated-real samples for seed " << seed
              << "\n";
    return 0;
  }
  const fs::path dir = stage_dir(cfg, seed);
  fs::create_directories(dir);

  log("generating synthetic dataset under theta0");
  datagen::Dataset d0 = datagen::generate(
      cfg.theta, cfg.n_samples,
      num::RngStream(seed, pipeline::detail::kStreamInitial), seed,
      pipeline::detail::kStreamInitial);
  log("generating emulated real dataset under theta*");
  datagen::Dataset real_base = datagen::generate(
      cfg.real_theta, cfg.n_samples,
      num::RngStream(seed, pipeline::detail::kStreamReal), seed,
      pipeline::detail::kStreamReal);
  num::RngStream irng(seed, pipeline::detail::kStreamInterference);
  datagen::Dataset real = fedcal::emulate_real(
      real_base, cfg.interference.fraction, irng, cfg.interference.mean_db);

  datagen::write_dataset(d0, (dir / "dataset_initial").string());
  datagen::write_dataset(real, (dir / "real_emulated").string());
  write_stage(dir,
              Json{{"seed", seed},
                   {"config_digest",
                    canonical_digest(pipeline::config_to_json(cfg))},
                   {"digests",
                    {{"dataset_initial", datagen::dataset_digest(d0)},
                     {"real_emulated", datagen::dataset_digest(real)}}}});
  std::cout << "generated " << d0.samples.size() << " samples -> "
            << dir.string() << "\n";
  return 0;
}

int cmd_augment(const CommonArgs& a) {
  pipeline::RunConfig cfg = load_config(a);
  const std::uint64_t seed = cfg.master_seed;
  const fs::path dir = stage_dir(cfg, seed);
  Json stage = read_stage(dir);
  check_config_unchanged(cfg, stage);
  datagen::Dataset d0 = load_checked(dir, stage, "dataset_initial");
  if (a.dry_run) {
    std::cout << "inputs ok; would augment " << d0.samples.size()
              << " samples\n";
    return 0;
  }
  log("running regulatory augmentation on the initial dataset");
  ercd::AugmentedDataset dprime = ercd::augment(
      d0, pipeline::effective_ercd(cfg.ercd),
      num::RngStream(seed, pipeline::detail::kStreamInitialAugment));
  {
    std::ofstream out(dir / "audit_trail_initial.json");
    if (!out) throw IoError("cannot write audit_trail_initial.json");
    out << canonical_dump(ercd::to_json(dprime.trail)) << "\n";
  }
  stage["digests"]["audit_trail_initial"] =
      canonical_digest(ercd::to_json(dprime.trail));
  stage["augmented"] = true;
  write_stage(dir, stage);
  std::cout << "augmented: " << dprime.suites.size() << " suites, trail with "
            << dprime.trail.entries.size() << " entries\n";
  return 0;
}

int cmd_calibrate(const CommonArgs& a) {
  pipeline::RunConfig cfg = load_config(a);
  const std::uint64_t seed = cfg.master_seed;
  const fs::path dir = stage_dir(cfg, seed);
  Json stage = read_stage(dir);
  check_config_unchanged(cfg, stage);
  datagen::Dataset real = load_checked(dir, stage, "real_emulated");
  if (a.dry_run) {
    std::cout << "inputs ok; would run " << cfg.fl.n_rounds
              << " FL rounds over " << cfg.fl.n_clients << " clients\n";
    return 0;
  }
  log("calibrating theta against emulated real data");
  std::vector<fedcal::ClientState> clients =
      fedcal::partition_clients(real, cfg.fl.n_clients, seed);
  fedcal::CalibrationResult cal =
      fedcal::calibrate(datagen::theta_flat(cfg.theta), clients, cfg.fl);

  fedcal::write_history(cal.history,
                        (dir / "calibration_history.jsonl").string());
  fedcal::write_theta_trace(cal.history, datagen::theta_names(cfg.theta),
                            (dir / "theta_trace.csv").string());
  Json tf{{"theta_names", datagen::theta_names(cfg.theta)},
          {"theta_final", cal.theta_final}};
  tf["digest"] = canonical_digest(tf);
  {
    std::ofstream out(dir / "theta_final.json");
    if (!out) throw IoError("cannot write theta_final.json");
    out << canonical_dump(tf) << "\n";
  }
  stage["digests"]["theta_final"] = tf["digest"];
  write_stage(dir, stage);
  std::cout << "calibrated over " << cal.history.size() << " rounds\n";
  return 0;
}

int cmd_validate(const CommonArgs& a) {
  pipeline::RunConfig cfg = load_config(a);
  const std::uint64_t seed = cfg.master_seed;
  const fs::path dir = stage_dir(cfg, seed);
  Json stage = read_stage(dir);
  check_config_unchanged(cfg, stage);
  datagen::Dataset d0 = load_checked(dir, stage, "dataset_initial");
  datagen::Dataset real = load_checked(dir, stage, "real_emulated");

  Json tf;
  {
    std::ifstream in(dir / "theta_final.json");
    if (!in) throw IoError("missing theta_final.json (run calibrate first)");
    in >> tf;
  }
  {
    Json body = tf;
    body.erase("digest");
    body["digest"] = canonical_digest(body);
    if (body["digest"] != tf.at("digest") ||
        tf.at("digest") != stage.at("digests").at("theta_final"))
      throw DigestMismatch("theta_final.json is stale or edited");
  }
  if (a.dry_run) {
    std::cout << "inputs ok; would regenerate, train, and validate\n";
    return 0;
  }

  log("regenerating under calibrated theta and validating");
  const std::vector<double> theta_cur =
      tf.at("theta_final").get<std::vector<double>>();
  const datagen::SimulationParams theta_params =
      datagen::theta_from_flat(cfg.theta, theta_cur);
  datagen::Dataset d_cal = datagen::generate(
      theta_params, cfg.n_samples,
      num::RngStream(seed, pipeline::detail::kStreamRegenBase), seed,
      pipeline::detail::kStreamRegenBase);
  ercd::AugmentedDataset dprime = ercd::augment(
      d_cal, pipeline::effective_ercd(cfg.ercd),
      num::RngStream(seed, pipeline::detail::kStreamAugmentBase));

  task::TrainConfig tc = cfg.train;
  tc.seed = seed;
  pipeline::GridChoice grid;
  const datagen::Dataset& train_d =
      dprime.resampled ? *dprime.resampled : dprime.base;
  task::MlpModel model = pipeline::train_grid(train_d, tc, &grid);

  audit::ValidationReport rep =
      audit::validate(dprime, real, model, cfg.thresholds, seed);
  const double fid_pre =
      audit::fid(audit::standardized_features(real, model),
                 audit::standardized_features(d0, model));

  datagen::write_dataset(dprime.base, (dir / "dataset_calibrated").string());
  if (dprime.resampled)
    datagen::write_dataset(*dprime.resampled,
                           (dir / "dataset_resampled").string());
  task::save_model(model, (dir / "model.json").string());
  {
    std::ofstream out(dir / "audit_trail.json");
    if (!out) throw IoError("cannot write audit_trail.json");
    out << canonical_dump(ercd::to_json(dprime.trail)) << "\n";
  }
  Json rj = audit::to_json(rep);
  rj["fid_pre"] = fid_pre;
  rj["grid"] = Json{{"learning_rate", grid.learning_rate},
                    {"batch_size", grid.batch_size},
                    {"val_loss", grid.val_loss}};
  {
    std::ofstream out(dir / "validation_report.json");
    if (!out) throw IoError("cannot write validation_report.json");
    out << canonical_dump(rj) << "\n";
  }
  stage["digests"]["dataset_calibrated"] = dprime.base_digest;
  stage["digests"]["model"] =
      task::to_json(model).at("digest").get<std::string>();
  stage["digests"]["validation_report"] = canonical_digest(rj);
  write_stage(dir, stage);

  const bool pass = rep.verdict == audit::GateVerdict::pass;
  std::cout << "fid=" << rep.fid << " (pre " << fid_pre
            << ") eo_gap=" << rep.fairness.eo_gap
            << " task_acc=" << rep.task_acc
            << " verdict=" << (pass ? "pass" : "recalibrate") << "\n";
  return pass ? 0 : 2;
}

int cmd_govern(const CommonArgs& a) {
  pipeline::RunConfig cfg = load_config(a);
  const std::uint64_t seed = cfg.master_seed;
  const fs::path dir = stage_dir(cfg, seed);
  Json stage = read_stage(dir);
  check_config_unchanged(cfg, stage);

  Json rj;
  {
    std::ifstream in(dir / "validation_report.json");
    if (!in) throw IoError("missing validation_report.json (run validate)");
    in >> rj;
  }
  if (canonical_digest(rj) !=
      stage.at("digests").at("validation_report").get<std::string>())
    throw DigestMismatch("validation_report.json is stale or edited");
  if (a.dry_run) {
    std::cout << "inputs ok; would record the lifecycle\n";
    return 0;
  }

  // Same deterministic event sequence as one monolithic loop iteration.
  const std::string actor = "pipeline";
  gov::LifecycleRecord rec;
  std::size_t tick = 0;
  auto ts = [&tick] { return "t" + std::to_string(tick++); };
  rec = gov::transition(rec, "ercd_complete", actor, ts());
  rec = gov::transition(rec, "fl_round_complete", actor, ts());
  rec = gov::transition(rec, "metrics_computed", actor, ts());
  const bool pass = rj.at("verdict").get<std::string>() == "pass";
  rec = gov::transition(rec, pass ? "audit_pass" : "audit_fail", actor, ts());
  gov::write_lifecycle_log(rec, (dir / "lifecycle.jsonl").string());

  stage["digests"]["lifecycle"] = rec.history.back().entry_hash;
  write_stage(dir, stage);
  std::cout << "lifecycle final state: " << gov::to_string(rec.state) << "\n";
  return rec.state == gov::State::Certified ? 0 : 2;
}

int cmd_run_loop(const CommonArgs& a) {
  pipeline::RunConfig cfg = load_config(a);
  if (a.dry_run) {
    std::cout << "config ok: " << cfg.n_seeds << " seeds, "
              << cfg.n_samples << " samples, " << cfg.fl.n_rounds
              << " FL rounds, output " << cfg.output_dir << "\n";
    return 0;
  }
  log("running the closed loop");
  pipeline::RunSummary s = pipeline::run_loop(cfg);
  std::cout << "seeds: " << s.seeds.size() << "  certified: " << s.n_certified
            << "  rejected: " << s.n_rejected << "\n";
  std::printf("fid        %.4f +/- %.4f (pre %.4f, mean reduction %.1f%%)\n",
              s.fid.mean, s.fid.std, s.fid_pre.mean,
              100.0 * s.fid_rel_reduction_mean);
  std::printf("eo_score   %.4f +/- %.4f\n", s.eo_score.mean, s.eo_score.std);
  std::printf("task_acc   %.4f +/- %.4f\n", s.task_acc.mean, s.task_acc.std);
  std::printf("adv_acc    %.4f +/- %.4f\n", s.adv_acc.mean, s.adv_acc.std);
  return s.n_rejected == 0 ? 0 : 2;
}

int cmd_report(const CommonArgs& a) {
  pipeline::RunConfig cfg = load_config(a);
  const fs::path ledger = fs::path(cfg.output_dir) / "ledger.csv";
  std::cout << pipeline::report_from_ledger(ledger.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SEAL: synthetic 6G slice data with ethical alignment and "
               "federated calibration"};
  app.require_subcommand(1);

  CommonArgs args;
  auto* c_gen = app.add_subcommand("generate",
                                   "generate synthetic + emulated real data");
  auto* c_aug = app.add_subcommand("augment", "regulatory augmentation");
  auto* c_cal = app.add_subcommand("calibrate", "federated calibration");
  auto* c_val = app.add_subcommand("validate", "train and gate the dataset");
  auto* c_gov = app.add_subcommand("govern", "record the lifecycle verdict");
  auto* c_run = app.add_subcommand("run-loop", "full closed loop over seeds");
  auto* c_rep = app.add_subcommand("report", "aggregate the run ledger");
  for (auto* sub : {c_gen, c_aug, c_cal, c_val, c_gov, c_run, c_rep})
    add_common(sub, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) != 0 ? 1 : 0;
  }

  try {
    if (c_gen->parsed()) return cmd_generate(args);
    if (c_aug->parsed()) return cmd_augment(args);
    if (c_cal->parsed()) return cmd_calibrate(args);
    if (c_val->parsed()) return cmd_validate(args);
    if (c_gov->parsed()) return cmd_govern(args);
    if (c_run->parsed()) return cmd_run_loop(args);
    if (c_rep->parsed()) return cmd_report(args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
