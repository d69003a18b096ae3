#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "seal/auditval.hpp"

using namespace seal;
using namespace seal::audit;
using num::Matrix;
using num::RngStream;

namespace {

Matrix random_block(std::size_t n, std::size_t k, std::uint64_t seed,
                    double shift = 0.0) {
  RngStream rng(seed, 0);
  Matrix m(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j)
      m(i, j) = rng.next_gaussian() + shift;
  return m;
}

// model whose decision is sign(snr_db): logit1 - logit0 = snr
task::MlpModel snr_sign_model() {
  RngStream rng(1, 0);
  task::MlpModel m = task::make_mlp(3, 2, 2, rng);
  m.layers[0].w = {0, 0, 1, 0, 0, -1};  // h0 = relu(snr), h1 = relu(-snr)
  m.layers[0].b = {0, 0};
  m.layers[1].w = {1, 0, 0, 1};
  m.layers[1].b = {0, 0};
  m.layers[2].w = {0, 0, 1, -1};  // z0 = 0, z1 = h0 - h1 = snr
  m.layers[2].b = {0, 0};
  return m;
}

}  // namespace

TEST_CASE("fid closed forms") {
  // 1-D gaussians (0,1) vs (1,1): (0-1)^2 + (1-1)^2 = 1 exactly
  Matrix s1(1, 1), s2(1, 1);
  s1(0, 0) = 1.0;
  s2(0, 0) = 1.0;
  CHECK(fid_from_moments({0.0}, s1, {1.0}, s2) == doctest::Approx(1.0).epsilon(1e-9));

  // 2-D equal means, diag(1,4) vs diag(4,1): trace term = 2
  Matrix a(2, 2), b(2, 2);
  a(0, 0) = 1.0;
  a(1, 1) = 4.0;
  b(0, 0) = 4.0;
  b(1, 1) = 1.0;
  CHECK(fid_from_moments({0.0, 0.0}, a, {0.0, 0.0}, b) ==
        doctest::Approx(2.0).epsilon(1e-9));

  // identical moments -> 0
  CHECK(fid_from_moments({0.5, -1.0}, a, {0.5, -1.0}, a) ==
        doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("fid on samples: zero, symmetry, preconditions") {
  Matrix x = random_block(300, 3, 7);
  CHECK(fid(x, x) == doctest::Approx(0.0).epsilon(1e-9));

  Matrix y = random_block(300, 3, 8, 0.7);
  const double ab = fid(x, y);
  const double ba = fid(y, x);
  CHECK(ab > 0.0);
  CHECK(std::abs(ab - ba) < 1e-8);

  CHECK_THROWS_AS(fid(Matrix(3, 3), Matrix(300, 3)), TooFewSamples);
  CHECK_THROWS_AS(fid(random_block(10, 2, 9), random_block(10, 3, 10)),
                  ShapeMismatch);

  Matrix indef(1, 1);
  indef(0, 0) = -1.0;
  CHECK_THROWS_AS(fid_from_moments({0.0}, indef, {0.0}, indef),
                  CovarianceFailure);
}

TEST_CASE("equalized odds hand-built tables") {
  // 40 rows, rates identical across groups -> gap 0
  std::vector<int> preds, labels, groups;
  for (int a = 0; a < 2; ++a) {
    for (int i = 0; i < 10; ++i) {  // Y=1 cell: TPR 0.8 both groups
      preds.push_back(i < 8);
      labels.push_back(1);
      groups.push_back(a);
    }
    for (int i = 0; i < 10; ++i) {  // Y=0 cell: FPR 0.2 both groups
      preds.push_back(i < 2);
      labels.push_back(0);
      groups.push_back(a);
    }
  }
  CHECK(equalized_odds(preds, labels, groups).eo_gap ==
        doctest::Approx(0.0));

  // 80 rows: group0 TPR .9 FPR .2, group1 TPR .7 FPR .1 -> gap 0.3
  preds.clear();
  labels.clear();
  groups.clear();
  auto fill = [&](int group, int label, int n_pos, int n_total) {
    for (int i = 0; i < n_total; ++i) {
      preds.push_back(i < n_pos);
      labels.push_back(label);
      groups.push_back(group);
    }
  };
  fill(0, 1, 18, 20);  // TPR0 = 0.9
  fill(0, 0, 4, 20);   // FPR0 = 0.2
  fill(1, 1, 14, 20);  // TPR1 = 0.7
  fill(1, 0, 2, 20);   // FPR1 = 0.1
  auto r = equalized_odds(preds, labels, groups);
  CHECK(r.eo_gap == doctest::Approx(0.3));
  CHECK(r.eo_score == doctest::Approx(0.7));
  CHECK(r.tpr[0] == doctest::Approx(0.9));
  CHECK(r.fpr[1] == doctest::Approx(0.1));

  // relabeling the group coding leaves the gap unchanged
  std::vector<int> flipped;
  for (int g : groups) flipped.push_back(1 - g);
  CHECK(equalized_odds(preds, labels, flipped).eo_gap ==
        doctest::Approx(r.eo_gap));

  // perfect classifier -> gap 0
  CHECK(equalized_odds(labels, labels, groups).eo_gap == doctest::Approx(0.0));

  // empty cell reported by name
  std::vector<int> p2{1, 0}, l2{1, 0}, g2{0, 0};
  CHECK_THROWS_WITH_AS(equalized_odds(p2, l2, g2),
                       doctest::Contains("A=1"), EmptyCell);
}

TEST_CASE("adversarial accuracy") {
  datagen::SimulationParams p;
  p.n_users = 10;
  p.duration_s = 20.0;
  RngStream g(30, 0);
  datagen::Dataset d = datagen::generate(p, 200, g, 30, 0);

  task::MlpModel model = snr_sign_model();

  // eta = 0: perturbation is the identity -> accuracy 1
  ercd::PerturbationSpec zero;
  zero.eta = 0.0;
  RngStream r1(31, 0);
  auto suite0 =
      ercd::build_suite(d, ercd::RegulatoryTarget::robustness, zero, r1);
  CHECK(adversarial_accuracy(model, suite0, d) == doctest::Approx(1.0));

  // constant classifier is robust by construction
  RngStream r2(32, 0);
  task::MlpModel constant = task::make_mlp(3, 4, 2, r2);
  for (auto& l : constant.layers)
    for (auto& w : l.w) w = 0.0;
  ercd::PerturbationSpec big;
  big.eta = 50.0;
  RngStream r3(33, 0);
  auto suiteb =
      ercd::build_suite(d, ercd::RegulatoryTarget::robustness, big, r3);
  CHECK(adversarial_accuracy(constant, suiteb, d) == doctest::Approx(1.0));

  // hand-built 4 pairs, exactly one decision flip -> 0.75
  ercd::TestSuite hand;
  hand.originals = {0, 1, 2, 3};
  for (int i = 0; i < 4; ++i) {
    datagen::Sample s = d.samples[i];
    s.snr_db = 5.0;
    d.samples[i].snr_db = 5.0;
    if (i == 2) s.snr_db = -5.0;  // the one flip
    hand.perturbed.push_back(s);
  }
  CHECK(adversarial_accuracy(model, hand, d) == doctest::Approx(0.75));

  // rescaling logits by a positive constant changes nothing
  task::MlpModel scaled = model;
  for (auto& w : scaled.layers.back().w) w *= 37.0;
  CHECK(adversarial_accuracy(scaled, hand, d) == doctest::Approx(0.75));

  ercd::TestSuite broken;
  broken.originals = {9999};
  broken.perturbed.push_back(d.samples[0]);
  CHECK_THROWS_AS(adversarial_accuracy(model, broken, d), BrokenLinkage);
}

TEST_CASE("validate wires the gate") {
  datagen::SimulationParams p;
  p.n_users = 20;
  p.duration_s = 50.0;
  RngStream g(40, 0);
  datagen::Dataset d = datagen::generate(p, 800, g, 40, 0);

  ercd::ErcdConfig cfg;
  cfg.bias_enabled = false;  // keep this test focused and fast
  cfg.fairness_resample_enabled = false;
  cfg.trail_mappings = {{"NIST-RMF-robustness", "suite_size_robustness"}};
  RngStream ar(41, 0);
  auto dprime = ercd::augment(d, cfg, ar);

  task::TrainConfig tc;
  tc.seed = 42;
  tc.max_epochs = 8;
  task::MlpModel model = task::train(d, tc);

  // real side = the same dataset -> FID 0, fid gate passes
  auto rep = validate(dprime, d, model, Thresholds{}, 40);
  CHECK(rep.fid == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(rep.task_acc > 0.8);
  CHECK(rep.adv_acc >= 0.0);
  CHECK(rep.adv_acc <= 1.0);
  const bool should_pass =
      rep.fid < rep.thresholds.fid_max &&
      rep.fairness.eo_gap < rep.thresholds.eo_gap_max;
  CHECK((rep.verdict == GateVerdict::pass) == should_pass);

  // tight fid threshold forces recalibrate regardless of fairness
  Thresholds tight;
  tight.fid_max = 0.0;
  auto rep2 = validate(dprime, d, model, tight, 40);
  CHECK(rep2.verdict == GateVerdict::recalibrate);

  // report serialization
  const Json j = to_json(rep);
  CHECK(j.at("verdict").is_string());
  CHECK(j.at("fid").get<double>() == rep.fid);
  const std::string row = csv_row(rep);
  CHECK(row.find(rep.verdict == GateVerdict::pass ? "pass" : "recalibrate") !=
        std::string::npos);
}
