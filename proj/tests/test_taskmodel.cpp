#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "seal/taskmodel.hpp"

using namespace seal;
using namespace seal::task;
using num::RngStream;

namespace {

// 2-D gaussian blobs centered at (-2,-2) and (2,2)
void make_blobs(std::size_t n, std::uint64_t seed,
                std::vector<std::vector<double>>& x, std::vector<int>& y) {
  RngStream rng(seed, 0);
  x.clear();
  y.clear();
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 2);
    const double cx = c == 0 ? -2.0 : 2.0;
    x.push_back({cx + rng.next_gaussian(), cx + rng.next_gaussian()});
    y.push_back(c);
  }
}

void make_xor(std::vector<std::vector<double>>& x, std::vector<int>& y) {
  x.clear();
  y.clear();
  const double pts[4][3] = {
      {0, 0, 0}, {0, 1, 1}, {1, 0, 1}, {1, 1, 0}};
  for (int rep = 0; rep < 250; ++rep) {
    for (const auto& p : pts) {
      x.push_back({p[0], p[1]});
      y.push_back(static_cast<int>(p[2]));
    }
  }
}

double grad_norm(const Gradients& g) {
  double s = 0.0;
  for (const auto& v : g.w)
    for (double e : v) s += e * e;
  for (const auto& v : g.b)
    for (double e : v) s += e * e;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("forward softmax properties") {
  RngStream rng(1, 0);
  MlpModel zero = make_mlp(3, 8, 2, rng);
  for (auto& l : zero.layers)
    for (auto& w : l.w) w = 0.0;
  auto p = forward(zero, {0.3, -1.0, 2.0});
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));

  RngStream r2(2, 0);
  MlpModel m = make_mlp(3, 8, 2, r2);
  RngStream in(3, 0);
  for (int k = 0; k < 1000; ++k) {
    auto q = forward(m, {in.next_gaussian(), in.next_gaussian(),
                         in.next_gaussian()});
    CHECK(q[0] >= 0.0);
    CHECK(q[1] >= 0.0);
    CHECK(std::abs(q[0] + q[1] - 1.0) < 1e-12);
  }

  // shifting both output logits by +c leaves probabilities unchanged
  auto before = forward(m, {1.0, 2.0, 3.0});
  MlpModel shifted = m;
  for (auto& b : shifted.layers.back().b) b += 7.5;
  auto after = forward(shifted, {1.0, 2.0, 3.0});
  CHECK(after[0] == doctest::Approx(before[0]).epsilon(1e-12));

  CHECK_THROWS_AS(forward(m, {1.0, 2.0}), ShapeMismatch);
}

TEST_CASE("backward matches central finite differences") {
  RngStream rng(11, 0);
  MlpModel m = make_mlp(3, 8, 2, rng);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  RngStream in(12, 0);
  for (int s = 0; s < 10; ++s) {
    x.push_back({in.next_gaussian(), in.next_gaussian(), in.next_gaussian()});
    y.push_back(s % 2);
  }
  const Gradients g = backward(m, x, y);
  const double eps = 1e-5;
  int checked = 0;
  auto fd_check = [&](std::vector<double>& params,
                      const std::vector<double>& grad) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double orig = params[i];
      params[i] = orig + eps;
      const double up = mean_ce_loss(m, x, y);
      params[i] = orig - eps;
      const double down = mean_ce_loss(m, x, y);
      params[i] = orig;
      const double fd = (up - down) / (2.0 * eps);
      CHECK(std::abs(grad[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
      ++checked;
    }
  };
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    fd_check(m.layers[li].w, g.w[li]);
    fd_check(m.layers[li].b, g.b[li]);
  }
  CHECK(checked > 100);  // every parameter of every layer
}

TEST_CASE("backward batch-mean invariance and saturation") {
  RngStream rng(21, 0);
  MlpModel m = make_mlp(2, 8, 2, rng);
  std::vector<std::vector<double>> x{{1.0, -1.0}, {0.5, 2.0}};
  std::vector<int> y{0, 1};
  auto g1 = backward(m, x, y);
  // duplicated batch -> identical mean gradient
  std::vector<std::vector<double>> xx{x[0], x[1], x[0], x[1]};
  std::vector<int> yy{0, 1, 0, 1};
  auto g2 = backward(m, xx, yy);
  for (std::size_t li = 0; li < g1.w.size(); ++li)
    for (std::size_t i = 0; i < g1.w[li].size(); ++i)
      CHECK(g1.w[li][i] == doctest::Approx(g2.w[li][i]).epsilon(1e-12));

  // saturated, perfectly classified batch: CE gradient vanishes
  MlpModel sat = make_mlp(1, 2, 2, rng);
  for (auto& l : sat.layers)
    for (auto& w : l.w) w = 0.0;
  sat.layers[0].w = {1.0, 1.0};  // both hidden units pass x through
  sat.layers[1].w = {1.0, 0.0, 0.0, 1.0};
  sat.layers[2].w = {-50.0, -50.0, 50.0, 50.0};  // class 1 for large x
  auto gs = backward(sat, {{5.0}}, {1});
  CHECK(grad_norm(gs) < 1e-6);

  CHECK_THROWS_AS(backward(m, {}, {}), ShapeMismatch);
  CHECK_THROWS_AS(backward(m, x, {0, 5}), ShapeMismatch);
}

TEST_CASE("early stopper counts non-improving epochs") {
  EarlyStopper st{3};
  CHECK_FALSE(st.step(1.0));  // improvement
  CHECK_FALSE(st.step(1.1));  // bad 1
  CHECK_FALSE(st.step(1.2));  // bad 2
  CHECK(st.step(1.3));        // bad 3 -> stop after exactly patience epochs
  EarlyStopper st2{3};
  CHECK_FALSE(st2.step(1.0));
  CHECK_FALSE(st2.step(1.1));
  CHECK_FALSE(st2.step(0.9));  // improvement resets the counter
  CHECK_FALSE(st2.step(1.0));
  CHECK_FALSE(st2.step(1.0));
  CHECK(st2.step(1.0));
}

TEST_CASE("XOR is learned to >= 0.99 training accuracy") {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  make_xor(x, y);
  TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.max_epochs = 200;
  cfg.seed = 5;
  MlpModel m = train_xy(x, y, cfg);
  CHECK(accuracy(m, x, y) >= 0.99);
}

TEST_CASE("separable blobs reach >= 0.98 validation accuracy") {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  make_blobs(1000, 31, x, y);
  TrainConfig cfg;
  cfg.seed = 32;
  cfg.max_epochs = 50;
  MlpModel m = train_xy(x, y, cfg);
  // score the same held-out split the trainer used (last 20% of its shuffle)
  std::vector<std::vector<double>> vx(x.end() - 200, x.end());
  std::vector<int> vy(y.end() - 200, y.end());
  CHECK(accuracy(m, vx, vy) >= 0.98);
}

TEST_CASE("full-batch loss is non-increasing early in training") {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    make_blobs(100, 100 + seed, x, y);
    RngStream rng(200 + seed, 0);
    MlpModel m = make_mlp(2, 128, 2, rng);
    AdamState adam(m);
    bool monotone = true;
    double prev = mean_ce_loss(m, x, y);
    for (int step = 0; step < 5; ++step) {
      adam.update(m, backward(m, x, y), 1e-3);
      const double cur = mean_ce_loss(m, x, y);
      monotone = monotone && cur <= prev + 1e-12;
      prev = cur;
    }
    ok += monotone;
  }
  CHECK(ok >= 19);
}

TEST_CASE("training is deterministic and rejects degenerate labels") {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  make_blobs(300, 41, x, y);
  TrainConfig cfg;
  cfg.seed = 42;
  cfg.max_epochs = 10;
  MlpModel a = train_xy(x, y, cfg);
  MlpModel b = train_xy(x, y, cfg);
  for (std::size_t li = 0; li < a.layers.size(); ++li) {
    CHECK(a.layers[li].w == b.layers[li].w);
    CHECK(a.layers[li].b == b.layers[li].b);
  }

  std::vector<int> ones(y.size(), 1);
  CHECK_THROWS_AS(train_xy(x, ones, cfg), DegenerateLabels);
}

TEST_CASE("model JSON round trip and digest guard") {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  make_blobs(200, 51, x, y);
  TrainConfig cfg;
  cfg.seed = 52;
  cfg.max_epochs = 3;
  MlpModel m = train_xy(x, y, cfg);
  m.feature_names = {"a", "b"};

  const std::string path = "/tmp/seal_test_model.json";
  save_model(m, path);
  MlpModel r = load_model(path);
  for (std::size_t li = 0; li < m.layers.size(); ++li)
    CHECK(r.layers[li].w == m.layers[li].w);
  CHECK(r.feat_mean == m.feat_mean);
  CHECK(r.feature_names == m.feature_names);
  // identical behavior
  CHECK(forward(r, {0.1, 0.2}) == forward(m, {0.1, 0.2}));

  Json j = to_json(m);
  j["feat_mean"][0] = j["feat_mean"][0].get<double>() + 1.0;
  CHECK_THROWS_AS(model_from_json(j), DigestMismatch);
  std::remove(path.c_str());
}
