#pragma once

// Audit and validation layer: Frechet distance between feature
// distributions, equalized-odds fairness, adversarial accuracy under the
// robustness suite, and the pass/recalibrate gate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

#include "seal/canonical.hpp"
#include "seal/datagen.hpp"
#include "seal/ercd.hpp"
#include "seal/errors.hpp"
#include "seal/numerics.hpp"
#include "seal/taskmodel.hpp"

namespace seal::audit {

using num::Matrix;

// ---------------------------------------------------------------------------
// FID
// ---------------------------------------------------------------------------

// ||mu_r - mu_s||^2 + Tr(S_r + S_s - 2 (S_r S_s)^{1/2}), with the cross term
// computed through the symmetrized product sqrt(sqrt(S_r) S_s sqrt(S_r)).
inline double fid_from_moments(const std::vector<double>& mu_r,
                               const Matrix& sigma_r,
                               const std::vector<double>& mu_s,
                               const Matrix& sigma_s) {
  if (mu_r.size() != mu_s.size() || sigma_r.rows() != sigma_s.rows())
    throw ShapeMismatch("fid: moment dimensions differ");
  double mean_term = 0.0;
  for (std::size_t i = 0; i < mu_r.size(); ++i) {
    const double d = mu_r[i] - mu_s[i];
    mean_term += d * d;
  }
  double cross_trace = 0.0;
  try {
    const Matrix root_r = num::sqrtm_psd(sigma_r);
    const Matrix inner = root_r * sigma_s * root_r;
    // enforce exact symmetry against rounding before the second sqrt
    Matrix sym(inner.rows(), inner.cols());
    for (std::size_t i = 0; i < inner.rows(); ++i)
      for (std::size_t j = 0; j < inner.cols(); ++j)
        sym(i, j) = 0.5 * (inner(i, j) + inner(j, i));
    cross_trace = num::sqrtm_psd(sym).trace();
  } catch (const Error& e) {
    throw CovarianceFailure(std::string("fid: ") + e.what());
  }
  const double v =
      mean_term + sigma_r.trace() + sigma_s.trace() - 2.0 * cross_trace;
  if (v < -1e-8) throw CovarianceFailure("fid: negative beyond tolerance");
  return std::max(0.0, v);
}

inline double fid(const Matrix& real_features, const Matrix& sim_features) {
  if (real_features.cols() != sim_features.cols())
    throw ShapeMismatch("fid: feature dimensions differ");
  const std::size_t k = real_features.cols();
  if (real_features.rows() < k + 1 || sim_features.rows() < k + 1)
    throw TooFewSamples("fid: need at least dim+1 samples per side");
  const auto [mu_r, sig_r] = num::mean_cov(real_features);
  const auto [mu_s, sig_s] = num::mean_cov(sim_features);
  return fid_from_moments(mu_r, sig_r, mu_s, sig_s);
}

// ---------------------------------------------------------------------------
// Equalized odds
// ---------------------------------------------------------------------------

struct FairnessResult {
  double eo_gap = 0.0;    // |TPR0-TPR1| + |FPR0-FPR1|
  double eo_score = 1.0;  // 1 - eo_gap
  double tpr[2] = {0.0, 0.0};
  double fpr[2] = {0.0, 0.0};
  std::size_t cell_counts[2][2] = {{0, 0}, {0, 0}};  // [label][group]
};

inline FairnessResult equalized_odds(const std::vector<int>& preds,
                                     const std::vector<int>& labels,
                                     const std::vector<int>& groups) {
  if (preds.size() != labels.size() || labels.size() != groups.size())
    throw ShapeMismatch("equalized_odds: length mismatch");
  FairnessResult r;
  std::size_t pos[2][2] = {{0, 0}, {0, 0}};  // predicted-1 counts per cell
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int y = labels[i] != 0;
    const int a = groups[i] != 0;
    r.cell_counts[y][a] += 1;
    pos[y][a] += preds[i] != 0;
  }
  for (int y = 0; y < 2; ++y) {
    for (int a = 0; a < 2; ++a) {
      if (r.cell_counts[y][a] == 0)
        throw EmptyCell("equalized_odds: empty cell (Y=" + std::to_string(y) +
                        ", A=" + std::to_string(a) + ")");
    }
  }
  for (int a = 0; a < 2; ++a) {
    r.tpr[a] = static_cast<double>(pos[1][a]) /
               static_cast<double>(r.cell_counts[1][a]);
    r.fpr[a] = static_cast<double>(pos[0][a]) /
               static_cast<double>(r.cell_counts[0][a]);
  }
  r.eo_gap = std::abs(r.tpr[0] - r.tpr[1]) + std::abs(r.fpr[0] - r.fpr[1]);
  r.eo_score = 1.0 - r.eo_gap;
  return r;
}

// ---------------------------------------------------------------------------
// Adversarial accuracy
// ---------------------------------------------------------------------------

inline std::vector<double> sample_features(const datagen::Sample& s) {
  return {s.speed_mps, s.traffic_load_pps, s.snr_db};
}

// Fraction of (original, perturbed) pairs whose argmax class is unchanged.
inline double adversarial_accuracy(const task::MlpModel& model,
                                   const ercd::TestSuite& suite,
                                   const datagen::Dataset& originals) {
  if (suite.originals.size() != suite.perturbed.size())
    throw BrokenLinkage("adversarial_accuracy: suite arrays differ in size");
  if (suite.originals.empty())
    throw BrokenLinkage("adversarial_accuracy: empty suite");
  std::size_t stable = 0;
  for (std::size_t i = 0; i < suite.originals.size(); ++i) {
    const std::size_t idx = suite.originals[i];
    if (idx >= originals.samples.size())
      throw BrokenLinkage("adversarial_accuracy: index out of range");
    const int base =
        task::predict(model, sample_features(originals.samples[idx]));
    const int pert =
        task::predict(model, sample_features(suite.perturbed[i]));
    stable += base == pert;
  }
  return static_cast<double>(stable) /
         static_cast<double>(suite.originals.size());
}

// ---------------------------------------------------------------------------
// Validation gate
// ---------------------------------------------------------------------------

struct Thresholds {
  double fid_max = 0.1;
  double eo_gap_max = 0.05;
};

enum class GateVerdict { pass, recalibrate };

struct ValidationReport {
  double fid = 0.0;
  FairnessResult fairness;
  double adv_acc = 0.0;
  double task_acc = 0.0;
  Thresholds thresholds;
  GateVerdict verdict = GateVerdict::recalibrate;
  std::string dprime_digest;
  std::string real_digest;
  std::uint64_t seed = 0;
};

// Standardize with the model's stored transform so the FID block matches
// what the task model consumes.
inline Matrix standardized_features(const datagen::Dataset& d,
                                    const task::MlpModel& model) {
  const std::size_t k = model.input_dim();
  Matrix m(d.samples.size(), k);
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const auto f = sample_features(d.samples[i]);
    if (f.size() != k) throw ShapeMismatch("standardized_features: dim");
    for (std::size_t j = 0; j < k; ++j)
      m(i, j) = (f[j] - model.feat_mean[j]) / model.feat_std[j];
  }
  return m;
}

inline ValidationReport validate(const ercd::AugmentedDataset& dprime,
                                 const datagen::Dataset& real_emulated,
                                 const task::MlpModel& model,
                                 const Thresholds& thresholds,
                                 std::uint64_t seed = 0) {
  ValidationReport rep;
  rep.thresholds = thresholds;
  rep.seed = seed;
  rep.dprime_digest = dprime.base_digest;
  rep.real_digest = datagen::dataset_digest(real_emulated);

  rep.fid = fid(standardized_features(real_emulated, model),
                standardized_features(dprime.base, model));

  std::vector<int> preds, labels, groups;
  preds.reserve(real_emulated.samples.size());
  for (const auto& s : real_emulated.samples) {
    preds.push_back(task::predict(model, sample_features(s)));
    labels.push_back(s.label);
    groups.push_back(s.group == datagen::Group::urban ? 1 : 0);
  }
  rep.fairness = equalized_odds(preds, labels, groups);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    hit += preds[i] == labels[i];
  rep.task_acc =
      static_cast<double>(hit) / static_cast<double>(preds.size());

  const auto suite = std::find_if(
      dprime.suites.begin(), dprime.suites.end(), [](const ercd::TestSuite& s) {
        return s.regulatory_target == ercd::RegulatoryTarget::robustness;
      });
  if (suite == dprime.suites.end())
    throw BrokenLinkage("validate: no robustness suite in augmented dataset");
  rep.adv_acc = adversarial_accuracy(model, *suite, dprime.base);

  rep.verdict = (rep.fid < thresholds.fid_max &&
                 rep.fairness.eo_gap < thresholds.eo_gap_max)
                    ? GateVerdict::pass
                    : GateVerdict::recalibrate;
  return rep;
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

inline Json to_json(const ValidationReport& r) {
  return Json{
      {"fid", r.fid},
      {"eo_gap", r.fairness.eo_gap},
      {"eo_score", r.fairness.eo_score},
      {"tpr", {r.fairness.tpr[0], r.fairness.tpr[1]}},
      {"fpr", {r.fairness.fpr[0], r.fairness.fpr[1]}},
      {"adv_acc", r.adv_acc},
      {"task_acc", r.task_acc},
      {"thresholds",
       {{"fid_max", r.thresholds.fid_max},
        {"eo_gap_max", r.thresholds.eo_gap_max}}},
      {"verdict",
       r.verdict == GateVerdict::pass ? "pass" : "recalibrate"},
      {"dprime_digest", r.dprime_digest},
      {"real_digest", r.real_digest},
      {"seed", r.seed}};
}

inline std::string csv_row(const ValidationReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f,%s", r.fid,
                r.fairness.eo_gap, r.fairness.eo_score, r.adv_acc, r.task_acc,
                r.verdict == GateVerdict::pass ? "pass" : "recalibrate");
  return buf;
}

inline void append_ledger_row(const ValidationReport& r,
                              const std::string& path) {
  const bool fresh = !std::ifstream(path).good();
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("append_ledger_row: cannot open " + path);
  if (fresh) out << "fid,eo_gap,eo_score,adv_acc,task_acc,verdict\n";
  out << csv_row(r) << "\n";
}

}  // namespace seal::audit
