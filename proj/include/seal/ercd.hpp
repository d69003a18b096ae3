#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "seal/canonical.hpp"
#include "seal/datagen.hpp"
#include "seal/errors.hpp"
#include "seal/rng.hpp"

namespace seal::ercd {

using datagen::Dataset;
using datagen::Group;
using datagen::Sample;
using num::RngStream;

// ---------------------------------------------------------------------------
// Chi-square tail probability (regularized upper incomplete gamma).
// ---------------------------------------------------------------------------

namespace detail {

inline double gammln(double x) { return std::lgamma(x); }

inline double gamma_p_series(double a, double x) {
  double sum = 1.0 / a, term = sum, ap = a;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - gammln(a));
}

inline double gamma_q_contfrac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - gammln(a)) * h;
}

}  // namespace detail

// P(Chi2_df >= x)
inline double chi2_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  const double a = df / 2.0, hx = x / 2.0;
  if (hx < a + 1.0) return 1.0 - detail::gamma_p_series(a, hx);
  return detail::gamma_q_contfrac(a, hx);
}

// ---------------------------------------------------------------------------
// Discretized column view of a dataset
// ---------------------------------------------------------------------------

struct ColumnTable {
  std::vector<std::string> names;
  std::vector<std::vector<int>> cols;  // values in [0, levels)
  std::vector<int> levels;
  std::size_t n = 0;

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw UnknownFeature(name);
  }
};

// Equal-frequency binning into at most n_bins levels; duplicate edges
// collapse so a constant column maps to one level.
inline std::vector<int> equal_frequency_bin(const std::vector<double>& v,
                                            int n_bins, int* out_levels) {
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges;
  for (int b = 1; b < n_bins; ++b) {
    const double q =
        sorted[std::min(sorted.size() - 1,
                        static_cast<std::size_t>(sorted.size() *
                                                 (static_cast<double>(b) /
                                                  n_bins)))];
    if (edges.empty() || q > edges.back()) edges.push_back(q);
  }
  std::vector<int> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<int>(
        std::upper_bound(edges.begin(), edges.end(), v[i]) - edges.begin());
  }
  *out_levels = static_cast<int>(edges.size()) + 1;
  return out;
}

// Features ERCD can reference by name: measurement features, position
// derivatives, and the categorical group/label/anomaly columns.
inline std::vector<double> raw_feature_column(const Dataset& d,
                                              const std::string& name) {
  std::vector<double> v;
  v.reserve(d.samples.size());
  for (const auto& s : d.samples) {
    if (name == "speed_mps") v.push_back(s.speed_mps);
    else if (name == "traffic_load_pps") v.push_back(s.traffic_load_pps);
    else if (name == "snr_db") v.push_back(s.snr_db);
    else if (name == "pos_x_m") v.push_back(s.pos_x_m);
    else if (name == "pos_y_m") v.push_back(s.pos_y_m);
    else if (name == "timestamp_s") v.push_back(s.timestamp_s);
    else if (name == "center_dist_m")
      v.push_back(datagen::center_distance_m(s, d.metadata.theta));
    else throw UnknownFeature(name);
  }
  return v;
}

inline bool is_categorical_feature(const std::string& name) {
  return name == "group" || name == "label" || name == "is_anomalous";
}

inline ColumnTable build_table(const Dataset& d,
                               const std::vector<std::string>& features,
                               int n_bins = 4) {
  ColumnTable t;
  t.n = d.samples.size();
  for (const auto& name : features) {
    t.names.push_back(name);
    if (is_categorical_feature(name)) {
      std::vector<int> col;
      col.reserve(t.n);
      for (const auto& s : d.samples) {
        if (name == "group") col.push_back(s.group == Group::urban ? 1 : 0);
        else if (name == "label") col.push_back(s.label);
        else col.push_back(s.is_anomalous ? 1 : 0);
      }
      t.cols.push_back(std::move(col));
      t.levels.push_back(2);
    } else {
      int levels = 0;
      t.cols.push_back(
          equal_frequency_bin(raw_feature_column(d, name), n_bins, &levels));
      t.levels.push_back(levels);
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Independence tests (G-test on contingency tables)
// ---------------------------------------------------------------------------

struct GTestResult {
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

// Likelihood-ratio chi-square, optionally stratified by a conditioning
// column. Empty rows/columns inside a stratum drop out of the df count.
inline GTestResult g_test(const std::vector<int>& x, int lx,
                          const std::vector<int>& y, int ly,
                          const std::vector<int>* z = nullptr, int lz = 1) {
  const std::size_t n = x.size();
  GTestResult r;
  for (int s = 0; s < lz; ++s) {
    std::vector<double> joint(lx * ly, 0.0), rx(lx, 0.0), ry(ly, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (z && (*z)[i] != s) continue;
      joint[x[i] * ly + y[i]] += 1.0;
      rx[x[i]] += 1.0;
      ry[y[i]] += 1.0;
      total += 1.0;
    }
    if (total == 0.0) continue;
    int nz_rows = 0, nz_cols = 0;
    for (int a = 0; a < lx; ++a) nz_rows += rx[a] > 0.0;
    for (int b = 0; b < ly; ++b) nz_cols += ry[b] > 0.0;
    for (int a = 0; a < lx; ++a)
      for (int b = 0; b < ly; ++b) {
        const double o = joint[a * ly + b];
        if (o <= 0.0) continue;
        const double e = rx[a] * ry[b] / total;
        r.statistic += 2.0 * o * std::log(o / e);
      }
    r.df += std::max(0, (nz_rows - 1)) * std::max(0, (nz_cols - 1));
  }
  r.p_value = r.df > 0.0 ? chi2_sf(r.statistic, r.df) : 1.0;
  return r;
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

enum class PerturbationKind { gaussian, uniform };
enum class RegulatoryTarget { fairness, robustness, shift };

inline const char* to_string(RegulatoryTarget t) {
  switch (t) {
    case RegulatoryTarget::fairness: return "fairness";
    case RegulatoryTarget::robustness: return "robustness";
    default: return "shift";
  }
}

struct PerturbationSpec {
  PerturbationKind distribution = PerturbationKind::gaussian;
  double eta = 1.0;  // sigma for gaussian, half-width for uniform
  std::vector<std::string> target_features = {"traffic_load_pps", "snr_db"};
  double sample_fraction = 0.2;  // in (0, 1]
};

struct TestSuite {
  RegulatoryTarget regulatory_target = RegulatoryTarget::robustness;
  std::vector<std::size_t> originals;  // indices into the base dataset
  std::vector<Sample> perturbed;       // same order as originals
};

struct CausalEdge {
  std::string u, v;
  double statistic = 0.0;
  double p_value = 1.0;
};

struct CausalGraph {
  std::vector<std::string> vertices;
  std::vector<CausalEdge> edges;

  bool has_edge(const std::string& a, const std::string& b) const {
    for (const auto& e : edges)
      if ((e.u == a && e.v == b) || (e.u == b && e.v == a)) return true;
    return false;
  }
};

struct BiasScore {
  std::string x, y;
  std::vector<std::string> z;
  double score = 0.0;
  double threshold = 0.0;
  bool flagged = false;
};

struct BiasReport {
  std::vector<BiasScore> scores;
  CausalGraph graph;
  std::size_t bootstrap_resamples = 0;
  double bootstrap_quantile = 0.0;
};

enum class Verdict { pass, fail, info };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    default: return "info";
  }
}

struct AuditEntry {
  std::string clause_id;
  std::string metric_name;
  double metric_value = 0.0;
  Verdict verdict = Verdict::info;
};

struct AuditTrail {
  std::vector<AuditEntry> entries;  // sorted by clause_id
  std::string created_at;
  std::string dataset_digest;
};

struct AugmentedDataset {
  Dataset base;
  std::vector<TestSuite> suites;
  BiasReport bias;
  AuditTrail trail;
  std::optional<Dataset> resampled;  // present when fairness resampling ran
  std::string base_digest;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline TestSuite build_suite(const Dataset& d, RegulatoryTarget target,
                             const PerturbationSpec& spec, RngStream& rng) {
  if (d.samples.empty()) throw EmptyDataset("build_suite");
  if (spec.eta < 0.0) throw InvalidParams("build_suite: eta < 0");
  if (!(spec.sample_fraction > 0.0 && spec.sample_fraction <= 1.0))
    throw InvalidParams("build_suite: sample_fraction outside (0,1]");
  for (const auto& f : spec.target_features)
    (void)datagen::numeric_feature(d.samples[0], f);  // UnknownFeature check

  const std::size_t n = d.samples.size();
  const std::size_t k = std::min<std::size_t>(
      n, static_cast<std::size_t>(
             std::ceil(spec.sample_fraction * static_cast<double>(n))));

  // partial Fisher-Yates for k ids without replacement
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.next_u64() % (n - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());

  TestSuite suite;
  suite.regulatory_target = target;
  suite.originals = ids;
  suite.perturbed.reserve(k);
  for (std::size_t id : ids) {
    Sample p = d.samples[id];
    for (const auto& f : spec.target_features) {
      const double eps = spec.distribution == PerturbationKind::gaussian
                             ? spec.eta * rng.next_gaussian()
                             : rng.uniform(-spec.eta, spec.eta);
      datagen::set_numeric_feature(p, f,
                                   datagen::numeric_feature(p, f) + eps);
    }
    suite.perturbed.push_back(std::move(p));
  }
  return suite;
}

// Stratified resampling with replacement to ceil(n/2)/floor(n/2) per group.
inline Dataset fairness_resample(const Dataset& d, RngStream& rng) {
  std::vector<std::size_t> urban, rural;
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    (d.samples[i].group == Group::urban ? urban : rural).push_back(i);
  }
  if (urban.empty() || rural.empty())
    throw SingleGroupDataset("fairness_resample: both groups required");

  const std::size_t n = d.samples.size();
  const std::size_t n_urban = (n + 1) / 2, n_rural = n / 2;

  Dataset out;
  out.schema = d.schema;
  out.metadata = d.metadata;
  out.metadata.note = "fairness_resample";
  out.metadata.n_samples = n;
  out.samples.reserve(n);
  auto draw = [&](const std::vector<std::size_t>& pool, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      Sample s = d.samples[pool[rng.next_u64() % pool.size()]];
      s.provenance.note = "fairness_resample";
      out.samples.push_back(std::move(s));
    }
  };
  draw(urban, n_urban);
  draw(rural, n_rural);
  return out;
}

// Depth-limited PC skeleton: edge iff marginal dependence at alpha and no
// single conditioning variable separates the pair at alpha.
inline CausalGraph discover_graph(const Dataset& d,
                                  const std::vector<std::string>& features,
                                  double alpha, int n_bins = 4) {
  if (d.samples.size() < 200)
    throw TooFewSamples("discover_graph: need >= 200 samples");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw InvalidParams("discover_graph: alpha outside (0,1)");
  const ColumnTable t = build_table(d, features, n_bins);
  CausalGraph g;
  g.vertices = t.names;
  const std::size_t k = t.names.size();
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      GTestResult marginal = g_test(t.cols[a], t.levels[a], t.cols[b],
                                    t.levels[b]);
      if (marginal.p_value >= alpha) continue;
      bool separated = false;
      double worst_p = marginal.p_value;
      double worst_stat = marginal.statistic;
      for (std::size_t c = 0; c < k && !separated; ++c) {
        if (c == a || c == b) continue;
        GTestResult cond = g_test(t.cols[a], t.levels[a], t.cols[b],
                                  t.levels[b], &t.cols[c], t.levels[c]);
        if (cond.p_value >= alpha) separated = true;
        if (cond.p_value > worst_p) {
          worst_p = cond.p_value;
          worst_stat = cond.statistic;
        }
      }
      if (!separated)
        g.edges.push_back({t.names[a], t.names[b], worst_stat, worst_p});
    }
  }
  return g;
}

inline CausalGraph discover_graph(const Dataset& d, double alpha) {
  return discover_graph(d,
                        {"traffic_load_pps", "snr_db", "speed_mps",
                         "center_dist_m", "group", "label"},
                        alpha);
}

// |P(Y=1|X=1) - P(Y=1|do(X=1))| with the interventional term by backdoor
// adjustment over the (composite) stratum Z.
inline double causal_score_table(const ColumnTable& t, const std::string& x,
                                 const std::string& y,
                                 const std::vector<std::string>& z) {
  const auto xi = t.index_of(x);
  const auto yi = t.index_of(y);
  if (t.levels[xi] > 2 || t.levels[yi] > 2)
    throw InvalidParams("causal_score: x and y must be binary");
  std::vector<std::size_t> zi;
  std::size_t n_strata = 1;
  for (const auto& name : z) {
    zi.push_back(t.index_of(name));
    n_strata *= static_cast<std::size_t>(t.levels[zi.back()]);
  }
  auto stratum = [&](std::size_t row) {
    std::size_t s = 0;
    for (std::size_t j = 0; j < zi.size(); ++j)
      s = s * static_cast<std::size_t>(t.levels[zi[j]]) +
          static_cast<std::size_t>(t.cols[zi[j]][row]);
    return s;
  };

  std::vector<double> nz(n_strata, 0.0), nx1z(n_strata, 0.0),
      ny1x1z(n_strata, 0.0);
  double nx1 = 0.0, ny1x1 = 0.0;
  for (std::size_t i = 0; i < t.n; ++i) {
    const std::size_t s = stratum(i);
    nz[s] += 1.0;
    const bool x1 = t.cols[xi][i] == 1;
    const bool y1 = t.cols[yi][i] == 1;
    if (x1) {
      nx1 += 1.0;
      nx1z[s] += 1.0;
      if (y1) {
        ny1x1 += 1.0;
        ny1x1z[s] += 1.0;
      }
    }
  }
  if (nx1 == 0.0) throw EmptyStratum("causal_score: no X=1 samples");
  const double observational = ny1x1 / nx1;
  double interventional = 0.0;
  for (std::size_t s = 0; s < n_strata; ++s) {
    if (nz[s] == 0.0) continue;
    if (nx1z[s] == 0.0)
      throw EmptyStratum("causal_score: stratum with no X=1 samples");
    interventional += (ny1x1z[s] / nx1z[s]) * (nz[s] / t.n);
  }
  return std::clamp(std::abs(observational - interventional), 0.0, 1.0);
}

inline double causal_score(const Dataset& d, const std::string& x,
                           const std::string& y,
                           const std::vector<std::string>& z,
                           int n_bins = 4) {
  std::vector<std::string> features{x, y};
  features.insert(features.end(), z.begin(), z.end());
  return causal_score_table(build_table(d, features, n_bins), x, y, z);
}

// Permutation null: shuffle the X column, recompute the score, take the
// requested empirical quantile.
inline double bootstrap_threshold_table(ColumnTable t, const std::string& x,
                                        const std::string& y,
                                        const std::vector<std::string>& z,
                                        std::size_t n_resamples,
                                        double quantile, RngStream& rng) {
  if (n_resamples < 100)
    throw InvalidParams("bootstrap_threshold: n_resamples < 100");
  if (!(quantile > 0.0 && quantile <= 1.0))
    throw InvalidParams("bootstrap_threshold: quantile outside (0,1]");
  const std::size_t xi = t.index_of(x);
  std::vector<double> scores;
  scores.reserve(n_resamples);
  for (std::size_t r = 0; r < n_resamples; ++r) {
    auto& col = t.cols[xi];
    for (std::size_t i = col.size(); i > 1; --i) {
      std::swap(col[i - 1], col[rng.next_u64() % i]);
    }
    scores.push_back(causal_score_table(t, x, y, z));
  }
  std::sort(scores.begin(), scores.end());
  const std::size_t idx = std::min(
      scores.size() - 1,
      static_cast<std::size_t>(std::ceil(quantile * scores.size())) - 1);
  return scores[idx];
}

inline double bootstrap_threshold(const Dataset& d, const std::string& x,
                                  const std::string& y,
                                  const std::vector<std::string>& z,
                                  std::size_t n_resamples, double quantile,
                                  RngStream& rng, int n_bins = 4) {
  std::vector<std::string> features{x, y};
  features.insert(features.end(), z.begin(), z.end());
  return bootstrap_threshold_table(build_table(d, features, n_bins), x, y, z,
                                   n_resamples, quantile, rng);
}

// ---------------------------------------------------------------------------
// Audit trail
// ---------------------------------------------------------------------------

struct MetricValue {
  double value = 0.0;
  Verdict verdict = Verdict::info;
};

inline AuditTrail build_trail(
    const std::vector<std::pair<std::string, std::string>>& mappings,
    const std::map<std::string, MetricValue>& metrics,
    const std::string& dataset_digest) {
  AuditTrail trail;
  trail.created_at = datagen::now_iso8601();
  trail.dataset_digest = dataset_digest;
  std::set<std::string> seen;
  for (const auto& [clause, metric] : mappings) {
    if (!seen.insert(clause).second)
      throw InvalidParams("build_trail: duplicate clause_id " + clause);
    auto it = metrics.find(metric);
    if (it == metrics.end())
      throw UnresolvableMetric(metric);
    trail.entries.push_back({clause, metric, it->second.value,
                             it->second.verdict});
  }
  std::sort(trail.entries.begin(), trail.entries.end(),
            [](const AuditEntry& a, const AuditEntry& b) {
              return a.clause_id < b.clause_id;
            });
  return trail;
}

inline Json to_json(const AuditTrail& t) {
  Json entries = Json::array();
  for (const auto& e : t.entries)
    entries.push_back({{"clause_id", e.clause_id},
                       {"metric_name", e.metric_name},
                       {"metric_value", e.metric_value},
                       {"verdict", to_string(e.verdict)}});
  return Json{{"entries", entries},
              {"created_at", t.created_at},
              {"dataset_digest", t.dataset_digest}};
}

inline Json to_json(const BiasReport& b) {
  Json scores = Json::array();
  for (const auto& s : b.scores)
    scores.push_back({{"x", s.x},
                      {"y", s.y},
                      {"z", s.z},
                      {"score", s.score},
                      {"threshold", s.threshold},
                      {"flagged", s.flagged}});
  Json edges = Json::array();
  for (const auto& e : b.graph.edges)
    edges.push_back({{"u", e.u},
                     {"v", e.v},
                     {"statistic", e.statistic},
                     {"p_value", e.p_value}});
  return Json{{"scores", scores},
              {"graph", {{"vertices", b.graph.vertices}, {"edges", edges}}},
              {"bootstrap",
               {{"n_resamples", b.bootstrap_resamples},
                {"quantile", b.bootstrap_quantile}}}};
}

// ---------------------------------------------------------------------------
// Whole-module driver
// ---------------------------------------------------------------------------

struct ErcdConfig {
  std::vector<std::pair<RegulatoryTarget, PerturbationSpec>> suites = {
      {RegulatoryTarget::fairness, {}},
      {RegulatoryTarget::robustness, {}}};
  bool fairness_resample_enabled = true;
  bool bias_enabled = true;
  std::string bias_x = "group";
  std::string bias_y = "label";
  std::vector<std::string> bias_z = {"snr_db"};
  int n_bins = 4;
  double graph_alpha = 0.01;
  std::size_t bootstrap_resamples = 200;
  double bootstrap_quantile = 0.95;
  std::vector<std::pair<std::string, std::string>> trail_mappings = {
      {"EU-AI-Act-Art-10", "causal_score_group_label"},
      {"EU-AI-Act-Art-10-threshold", "bias_threshold"},
      {"NIST-RMF-robustness", "suite_size_robustness"}};
};

inline AugmentedDataset augment(const Dataset& d, const ErcdConfig& cfg,
                                const RngStream& rng) {
  AugmentedDataset out;
  out.base = d;
  out.base_digest = datagen::dataset_digest(d);

  std::map<std::string, MetricValue> metrics;
  metrics["sample_count"] = {static_cast<double>(d.samples.size()),
                             Verdict::info};

  std::uint64_t sub = 0;
  for (const auto& [target, spec] : cfg.suites) {
    RngStream suite_rng = rng.substream(1, sub++);
    out.suites.push_back(build_suite(d, target, spec, suite_rng));
    metrics[std::string("suite_size_") + to_string(target)] = {
        static_cast<double>(out.suites.back().perturbed.size()),
        Verdict::info};
  }

  if (cfg.fairness_resample_enabled) {
    RngStream rs_rng = rng.substream(2, 0);
    out.resampled = fairness_resample(d, rs_rng);
    metrics["fairness_resampled"] = {1.0, Verdict::info};
  }

  if (cfg.bias_enabled) {
    out.bias.graph = discover_graph(d, cfg.graph_alpha);
    const double score =
        causal_score(d, cfg.bias_x, cfg.bias_y, cfg.bias_z, cfg.n_bins);
    RngStream boot_rng = rng.substream(3, 0);
    const double thr =
        bootstrap_threshold(d, cfg.bias_x, cfg.bias_y, cfg.bias_z,
                            cfg.bootstrap_resamples, cfg.bootstrap_quantile,
                            boot_rng, cfg.n_bins);
    BiasScore bs{cfg.bias_x, cfg.bias_y, cfg.bias_z, score, thr,
                 score > thr};
    out.bias.scores.push_back(bs);
    out.bias.bootstrap_resamples = cfg.bootstrap_resamples;
    out.bias.bootstrap_quantile = cfg.bootstrap_quantile;
    metrics["causal_score_group_label"] = {
        score, bs.flagged ? Verdict::fail : Verdict::pass};
    metrics["bias_threshold"] = {thr, Verdict::info};
  }

  out.trail = build_trail(cfg.trail_mappings, metrics, out.base_digest);
  return out;
}

}  // namespace seal::ercd
