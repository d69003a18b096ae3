#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "seal/ercd.hpp"

using namespace seal;
using namespace seal::ercd;
using datagen::Dataset;
using datagen::Group;
using datagen::Sample;
using num::RngStream;

namespace {

Dataset make_dataset(std::size_t n, std::uint64_t seed) {
  datagen::SimulationParams p;
  p.n_users = 20;
  p.duration_s = 50.0;
  RngStream rng(seed, 0);
  return datagen::generate(p, n, rng, seed, 0);
}

// Reference SCM: Z ~ Bern(.5), X = Z w.p. .9 else 1-Z, Y = Z w.p. .8 else
// 1-Z.  Exact enumeration over the 8-cell binary joint gives
// P(Y=1|X=1) = 0.74, P(Y=1|do(X=1)) = P(Y=1) = 0.5, score = 0.24.
struct ScmOracle {
  double p_y1_given_x1;
  double p_y1_do_x1;
};

ScmOracle enumerate_scm() {
  double p_x1 = 0.0, p_x1y1 = 0.0, p_y1 = 0.0;
  for (int z = 0; z <= 1; ++z)
    for (int x = 0; x <= 1; ++x)
      for (int y = 0; y <= 1; ++y) {
        const double pz = 0.5;
        const double px = (x == z) ? 0.9 : 0.1;
        const double py = (y == z) ? 0.8 : 0.2;
        const double p = pz * px * py;
        if (x == 1) p_x1 += p;
        if (x == 1 && y == 1) p_x1y1 += p;
        if (y == 1) p_y1 += p;
      }
  return {p_x1y1 / p_x1, p_y1};
}

ColumnTable sample_scm(std::size_t n, std::uint64_t seed) {
  RngStream rng(seed, 0);
  ColumnTable t;
  t.names = {"X", "Y", "Z"};
  t.cols.resize(3);
  t.levels = {2, 2, 2};
  t.n = n;
  for (std::size_t i = 0; i < n; ++i) {
    const int z = rng.next_double() < 0.5 ? 1 : 0;
    const int x = rng.next_double() < 0.9 ? z : 1 - z;
    const int y = rng.next_double() < 0.8 ? z : 1 - z;
    t.cols[0].push_back(x);
    t.cols[1].push_back(y);
    t.cols[2].push_back(z);
  }
  return t;
}

}  // namespace

TEST_CASE("chi2_sf sanity") {
  // chi2 with 1 dof: P(X >= 3.841) ~ 0.05
  CHECK(chi2_sf(3.841, 1.0) == doctest::Approx(0.05).epsilon(0.01));
  CHECK(chi2_sf(0.0, 4.0) == doctest::Approx(1.0));
  CHECK(chi2_sf(100.0, 1.0) < 1e-10);
}

TEST_CASE("build_suite size and targeting") {
  Dataset d = make_dataset(1000, 1);
  PerturbationSpec spec;
  spec.sample_fraction = 0.2;
  spec.eta = 2.0;
  spec.target_features = {"traffic_load_pps"};
  RngStream rng(2, 0);
  TestSuite s = build_suite(d, RegulatoryTarget::robustness, spec, rng);
  CHECK(s.originals.size() == 200);
  CHECK(s.perturbed.size() == 200);
  for (std::size_t i = 0; i < s.originals.size(); ++i) {
    const Sample& orig = d.samples[s.originals[i]];
    const Sample& pert = s.perturbed[i];
    CHECK(pert.snr_db == orig.snr_db);
    CHECK(pert.speed_mps == orig.speed_mps);
    CHECK(pert.pos_x_m == orig.pos_x_m);
    CHECK(pert.group == orig.group);
  }
}

TEST_CASE("build_suite eta=0 is the identity on features") {
  Dataset d = make_dataset(300, 3);
  PerturbationSpec spec;
  spec.eta = 0.0;
  RngStream rng(4, 0);
  TestSuite s = build_suite(d, RegulatoryTarget::shift, spec, rng);
  for (std::size_t i = 0; i < s.originals.size(); ++i) {
    const Sample& orig = d.samples[s.originals[i]];
    CHECK(s.perturbed[i].traffic_load_pps == orig.traffic_load_pps);
    CHECK(s.perturbed[i].snr_db == orig.snr_db);
  }
}

TEST_CASE("build_suite errors") {
  Dataset d = make_dataset(300, 5);
  PerturbationSpec bad;
  bad.target_features = {"no_such_feature"};
  RngStream rng(6, 0);
  CHECK_THROWS_AS(build_suite(d, RegulatoryTarget::fairness, bad, rng),
                  UnknownFeature);
  Dataset empty;
  PerturbationSpec ok;
  CHECK_THROWS_AS(build_suite(empty, RegulatoryTarget::fairness, ok, rng),
                  EmptyDataset);
}

TEST_CASE("fairness_resample balances groups") {
  Dataset d = make_dataset(2000, 7);
  std::size_t urban0 = 0;
  for (const auto& s : d.samples) urban0 += s.group == Group::urban;
  REQUIRE(urban0 > 0);
  REQUIRE(urban0 < d.samples.size());

  RngStream rng(8, 0);
  Dataset r = fairness_resample(d, rng);
  CHECK(r.samples.size() == d.samples.size());
  std::size_t urban = 0;
  for (const auto& s : r.samples) urban += s.group == Group::urban;
  CHECK(urban == (d.samples.size() + 1) / 2);
  CHECK(r.metadata.note == "fairness_resample");

  // every resampled tuple exists in the source group pool
  auto key = [](const Sample& s) {
    return std::make_tuple(s.user_id, s.timestamp_s, s.snr_db);
  };
  std::set<std::tuple<std::uint64_t, double, double>> pool;
  for (const auto& s : d.samples) pool.insert(key(s));
  for (const auto& s : r.samples) CHECK(pool.count(key(s)) == 1);
}

TEST_CASE("fairness_resample single-group error") {
  Dataset d = make_dataset(300, 9);
  for (auto& s : d.samples) s.group = Group::rural;
  RngStream rng(10, 0);
  CHECK_THROWS_AS(fairness_resample(d, rng), SingleGroupDataset);
}

TEST_CASE("fairness_resample preserves within-group marginals (KS)") {
  // two-sample KS on snr within each group, 20 seeds
  int fails = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Dataset d = make_dataset(1500, 100 + seed);
    RngStream rng(200 + seed, 0);
    Dataset r = fairness_resample(d, rng);
    for (Group g : {Group::urban, Group::rural}) {
      std::vector<double> a, b;
      for (const auto& s : d.samples)
        if (s.group == g) a.push_back(s.snr_db);
      for (const auto& s : r.samples)
        if (s.group == g) b.push_back(s.snr_db);
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      double ks = 0.0;
      std::size_t i = 0, j = 0;
      while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j]) ++i;
        else ++j;
        ks = std::max(ks, std::abs(static_cast<double>(i) / a.size() -
                                   static_cast<double>(j) / b.size()));
      }
      const double crit = 1.628 * std::sqrt(
          (a.size() + b.size()) / (static_cast<double>(a.size()) * b.size()));
      if (ks > crit) ++fails;  // alpha = 0.01 per comparison
    }
  }
  CHECK(fails <= 3);
}

TEST_CASE("discover_graph calibration on independent features") {
  // two independent uniforms: edge in < 5% of runs at alpha = 0.01
  int edges = 0;
  const int runs = 100;
  for (int run = 0; run < runs; ++run) {
    ColumnTable t;
    t.names = {"A", "B"};
    t.cols.resize(2);
    t.levels = {4, 4};
    t.n = 10000;
    RngStream rng(run, 77);
    for (std::size_t i = 0; i < t.n; ++i) {
      t.cols[0].push_back(static_cast<int>(rng.next_u64() % 4));
      t.cols[1].push_back(static_cast<int>(rng.next_u64() % 4));
    }
    GTestResult r = g_test(t.cols[0], 4, t.cols[1], 4);
    edges += r.p_value < 0.01;
  }
  CHECK(edges <= 5);
}

TEST_CASE("discover_graph finds deterministic dependence") {
  Dataset d = make_dataset(2000, 11);
  // label is a function of snr (plus surge); the edge must be present
  CausalGraph g = discover_graph(d, 0.01);
  CHECK(g.has_edge("snr_db", "label"));
  CHECK(g.has_edge("center_dist_m", "group"));
}

TEST_CASE("discover_graph drops chain shortcut X->Z->Y") {
  // synthetic chain: X -> Z -> Y, conditioning on Z separates X and Y
  Dataset d = make_dataset(5000, 12);
  RngStream rng(13, 0);
  for (auto& s : d.samples) {
    // Z takes four level values aligned with the table's quartile bins, so
    // conditioning on binned Z recovers Z exactly and kills the shortcut.
    const double x = rng.next_gaussian();
    const double zc = x + 1.2 * rng.next_gaussian();
    const double z = (zc < -1.054) ? 0.0 : (zc < 0.0) ? 1.0
                     : (zc < 1.054) ? 2.0 : 3.0;
    const double y = z + 1.2 * rng.next_gaussian();
    s.speed_mps = x;
    s.traffic_load_pps = z;
    s.snr_db = y;
  }
  CausalGraph g = discover_graph(
      d, {"speed_mps", "traffic_load_pps", "snr_db"}, 0.01);
  CHECK(g.has_edge("speed_mps", "traffic_load_pps"));
  CHECK(g.has_edge("traffic_load_pps", "snr_db"));
  CHECK_FALSE(g.has_edge("speed_mps", "snr_db"));
}

TEST_CASE("discover_graph precondition errors") {
  Dataset d = make_dataset(100, 14);
  CHECK_THROWS_AS(discover_graph(d, 0.01), TooFewSamples);
  Dataset ok = make_dataset(300, 15);
  CHECK_THROWS_AS(discover_graph(ok, 1.5), InvalidParams);
}

TEST_CASE("causal_score matches SCM enumeration") {
  const ScmOracle oracle = enumerate_scm();
  CHECK(oracle.p_y1_given_x1 == doctest::Approx(0.74));
  CHECK(oracle.p_y1_do_x1 == doctest::Approx(0.5));
  const double exact = std::abs(oracle.p_y1_given_x1 - oracle.p_y1_do_x1);
  CHECK(exact == doctest::Approx(0.24));

  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    ColumnTable t = sample_scm(100000, seed);
    const double est = causal_score_table(t, "X", "Y", {"Z"});
    CHECK(std::abs(est - exact) < 0.02);
  }
}

TEST_CASE("causal_score null cases") {
  // X, Y independent, empty Z -> score ~ 0
  RngStream rng(16, 0);
  ColumnTable t;
  t.names = {"X", "Y"};
  t.cols.resize(2);
  t.levels = {2, 2};
  t.n = 50000;
  for (std::size_t i = 0; i < t.n; ++i) {
    t.cols[0].push_back(rng.next_double() < 0.5);
    t.cols[1].push_back(rng.next_double() < 0.3);
  }
  CHECK(causal_score_table(t, "X", "Y", {}) < 0.01);

  // Y independent of both X and Z -> score ~ 0 with adjustment
  ColumnTable t2 = sample_scm(50000, 17);
  RngStream rng2(18, 0);
  for (auto& y : t2.cols[1]) y = rng2.next_double() < 0.4;
  CHECK(causal_score_table(t2, "X", "Y", {"Z"}) < 0.02);
}

TEST_CASE("causal_score empty stratum error") {
  ColumnTable t;
  t.names = {"X", "Y", "Z"};
  t.cols = {{0, 0, 1, 1}, {0, 1, 0, 1}, {0, 0, 1, 1}};
  t.levels = {2, 2, 2};
  t.n = 4;
  // stratum Z=0 has no X=1 rows
  CHECK_THROWS_AS(causal_score_table(t, "X", "Y", {"Z"}), EmptyStratum);
}

TEST_CASE("bootstrap_threshold calibration and stability") {
  ColumnTable t = sample_scm(5000, 19);
  // null data: permute X by construction before testing
  RngStream perm(20, 0);
  auto& col = t.cols[0];
  for (std::size_t i = col.size(); i > 1; --i)
    std::swap(col[i - 1], col[perm.next_u64() % i]);

  RngStream boot(21, 0);
  const double thr =
      bootstrap_threshold_table(t, "X", "Y", {"Z"}, 200, 0.95, boot);

  int exceed = 0;
  const int draws = 200;
  for (int k = 0; k < draws; ++k) {
    ColumnTable u = t;
    RngStream perm2(300 + k, 0);
    auto& c = u.cols[0];
    for (std::size_t i = c.size(); i > 1; --i)
      std::swap(c[i - 1], c[perm2.next_u64() % i]);
    exceed += causal_score_table(u, "X", "Y", {"Z"}) > thr;
  }
  // ~5% of fresh null draws should exceed a 95% null quantile
  CHECK(exceed >= 1);
  CHECK(exceed <= 25);

  // stability: 100 vs 1000 resamples agree within 0.02
  RngStream b1(22, 0), b2(23, 0);
  ColumnTable t2 = sample_scm(5000, 24);
  const double thr100 =
      bootstrap_threshold_table(t2, "X", "Y", {"Z"}, 100, 0.95, b1);
  const double thr1000 =
      bootstrap_threshold_table(t2, "X", "Y", {"Z"}, 1000, 0.95, b2);
  CHECK(std::abs(thr100 - thr1000) < 0.02);

  // quantile 1.0 is the max of the resampled scores
  RngStream b3(25, 0), b4(25, 0);
  ColumnTable t3 = sample_scm(2000, 26);
  const double thr_max =
      bootstrap_threshold_table(t3, "X", "Y", {"Z"}, 100, 1.0, b3);
  ColumnTable t4 = t3;
  std::vector<double> all;
  for (int r = 0; r < 100; ++r) {
    auto& c = t4.cols[0];
    for (std::size_t i = c.size(); i > 1; --i)
      std::swap(c[i - 1], c[b4.next_u64() % i]);
    all.push_back(causal_score_table(t4, "X", "Y", {"Z"}));
  }
  CHECK(thr_max == *std::max_element(all.begin(), all.end()));
}

TEST_CASE("build_trail verdicts and canonical determinism") {
  std::map<std::string, MetricValue> metrics;
  metrics["causal_score_group_label"] = {0.24, Verdict::fail};
  metrics["suite_size_fairness"] = {2000.0, Verdict::info};

  AuditTrail t = build_trail({{"EU-AI-Act-Art-10", "causal_score_group_label"},
                              {"clause-b", "suite_size_fairness"}},
                             metrics, "digest123");
  CHECK(t.entries.size() == 2);
  CHECK(t.entries[0].clause_id == "EU-AI-Act-Art-10");
  CHECK(t.entries[0].verdict == Verdict::fail);
  CHECK(t.entries[0].metric_value == 0.24);

  const std::string a = canonical_dump(to_json(t));
  AuditTrail t2 = build_trail({{"clause-b", "suite_size_fairness"},
                               {"EU-AI-Act-Art-10", "causal_score_group_label"}},
                              metrics, "digest123");
  t2.created_at = t.created_at;
  CHECK(canonical_dump(to_json(t2)) == a);

  CHECK_THROWS_AS(build_trail({{"c", "missing_metric"}}, metrics, "d"),
                  UnresolvableMetric);

  AuditTrail empty = build_trail({}, metrics, "d");
  CHECK(empty.entries.empty());
  CHECK(!canonical_digest(to_json(empty)).empty());
}

TEST_CASE("augment produces the paper-shaped augmented dataset") {
  Dataset d = make_dataset(2000, 30);
  ErcdConfig cfg;
  cfg.bootstrap_resamples = 100;
  RngStream rng(31, 0);
  AugmentedDataset a = augment(d, cfg, rng);
  CHECK(a.suites.size() == 2);
  CHECK(a.suites[0].perturbed.size() == 400);  // 20% of 2000
  CHECK(a.bias.scores.size() == 1);
  CHECK(a.resampled.has_value());
  CHECK(!a.trail.entries.empty());
  CHECK(a.base_digest == datagen::dataset_digest(d));
  CHECK(a.trail.dataset_digest == a.base_digest);
  for (const auto& s : a.bias.scores) CHECK(s.flagged == (s.score > s.threshold));
}

TEST_CASE("augment with everything disabled") {
  Dataset d = make_dataset(500, 32);
  ErcdConfig cfg;
  cfg.suites.clear();
  cfg.fairness_resample_enabled = false;
  cfg.bias_enabled = false;
  cfg.trail_mappings = {{"info-count", "sample_count"}};
  RngStream rng(33, 0);
  AugmentedDataset a = augment(d, cfg, rng);
  CHECK(a.suites.empty());
  CHECK(!a.resampled.has_value());
  CHECK(a.bias.scores.empty());
  REQUIRE(a.trail.entries.size() == 1);
  CHECK(a.trail.entries[0].verdict == Verdict::info);
}

TEST_CASE("planted confound is flagged, absent confound is not") {
  // ground truth planted by the datagen label rule
  int flagged_with = 0, flagged_without = 0;
  const int seeds = 6;
  for (int seed = 0; seed < seeds; ++seed) {
    datagen::SimulationParams p;
    p.n_users = 50;
    p.duration_s = 50.0;
    p.label_rule.confound_coeff_db = 6.0;
    RngStream g1(700 + seed, 0);
    Dataset biased = datagen::generate(p, 4000, g1, 700 + seed, 0);

    p.label_rule.confound_coeff_db = 0.0;
    RngStream g2(800 + seed, 0);
    Dataset clean = datagen::generate(p, 4000, g2, 800 + seed, 0);

    ErcdConfig cfg;
    cfg.suites.clear();
    cfg.fairness_resample_enabled = false;
    cfg.trail_mappings = {{"EU-AI-Act-Art-10", "causal_score_group_label"}};
    cfg.bootstrap_resamples = 100;
    RngStream a1(900 + seed, 0), a2(901 + seed, 0);
    flagged_with += augment(biased, cfg, a1).bias.scores[0].flagged;
    flagged_without += augment(clean, cfg, a2).bias.scores[0].flagged;
  }
  CHECK(flagged_with == seeds);
  CHECK(flagged_without <= 1);
}
