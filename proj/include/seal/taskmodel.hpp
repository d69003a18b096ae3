#pragma once

// Downstream task model: a from-scratch MLP (in -> 128 -> 128 -> 2, ReLU
// hidden, softmax output) trained with Adam on cross-entropy, with seeded
// shuffling, a held-out validation split, and patience-based early stopping.
// Feature standardization is part of the model so inference sees the same
// transform as training.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "seal/canonical.hpp"
#include "seal/datagen.hpp"
#include "seal/errors.hpp"
#include "seal/rng.hpp"

namespace seal::task {

using num::RngStream;

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> w;  // row-major, out x in
  std::vector<double> b;  // out
};

struct MlpModel {
  std::vector<Layer> layers;
  std::vector<double> feat_mean;
  std::vector<double> feat_std;
  std::vector<std::string> feature_names;

  std::size_t input_dim() const {
    return layers.empty() ? 0 : layers.front().in;
  }
  std::size_t output_dim() const {
    return layers.empty() ? 0 : layers.back().out;
  }
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  std::size_t patience = 3;
  std::uint64_t seed = 0;
  std::size_t hidden = 128;
  double val_fraction = 0.2;
};

struct TrainStats {
  std::size_t epochs_run = 0;
  double best_val_loss = 0.0;
  std::vector<double> val_loss_per_epoch;
};

inline MlpModel make_mlp(std::size_t in_dim, std::size_t hidden,
                         std::size_t out_dim, RngStream& rng) {
  MlpModel m;
  auto add = [&](std::size_t in, std::size_t out) {
    Layer l;
    l.in = in;
    l.out = out;
    l.w.resize(in * out);
    l.b.assign(out, 0.0);
    const double s = std::sqrt(2.0 / static_cast<double>(in));  // He init
    for (auto& v : l.w) v = s * rng.next_gaussian();
    m.layers.push_back(std::move(l));
  };
  add(in_dim, hidden);
  add(hidden, hidden);
  add(hidden, out_dim);
  m.feat_mean.assign(in_dim, 0.0);
  m.feat_std.assign(in_dim, 1.0);
  return m;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

inline std::vector<double> softmax(std::vector<double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return z;
}

// Activations per layer input; index 0 is the standardized feature vector.
inline std::vector<std::vector<double>> forward_pass(const MlpModel& m,
                                                     const std::vector<double>&
                                                         features) {
  if (features.size() != m.input_dim())
    throw ShapeMismatch("forward: feature length mismatch");
  std::vector<std::vector<double>> acts;
  std::vector<double> x(features.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = (features[i] - m.feat_mean[i]) / m.feat_std[i];
  }
  acts.push_back(x);
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const Layer& l = m.layers[li];
    std::vector<double> y(l.out);
    for (std::size_t o = 0; o < l.out; ++o) {
      double s = l.b[o];
      const double* row = &l.w[o * l.in];
      for (std::size_t i = 0; i < l.in; ++i) s += row[i] * x[i];
      y[o] = (li + 1 < m.layers.size()) ? std::max(0.0, s) : s;  // ReLU hidden
    }
    acts.push_back(y);
    x = acts.back();
  }
  acts.back() = softmax(acts.back());
  return acts;
}

inline std::vector<double> forward(const MlpModel& m,
                                   const std::vector<double>& features) {
  return forward_pass(m, features).back();
}

// argmax with ties broken toward class 0
inline int predict(const MlpModel& m, const std::vector<double>& features) {
  const auto p = forward(m, features);
  int best = 0;
  for (std::size_t c = 1; c < p.size(); ++c)
    if (p[c] > p[best]) best = static_cast<int>(c);
  return best;
}

struct Gradients {
  std::vector<std::vector<double>> w;  // per layer, same shape as Layer::w
  std::vector<std::vector<double>> b;
};

inline Gradients zero_gradients(const MlpModel& m) {
  Gradients g;
  for (const auto& l : m.layers) {
    g.w.emplace_back(l.w.size(), 0.0);
    g.b.emplace_back(l.b.size(), 0.0);
  }
  return g;
}

// Gradient of mean cross-entropy over the batch w.r.t. every parameter.
inline Gradients backward(const MlpModel& m,
                          const std::vector<std::vector<double>>& features,
                          const std::vector<int>& labels,
                          double* out_loss = nullptr) {
  if (features.empty() || features.size() != labels.size())
    throw ShapeMismatch("backward: empty batch or feature/label mismatch");
  Gradients g = zero_gradients(m);
  const double inv_n = 1.0 / static_cast<double>(features.size());
  double loss = 0.0;

  for (std::size_t s = 0; s < features.size(); ++s) {
    const int y = labels[s];
    if (y < 0 || static_cast<std::size_t>(y) >= m.output_dim())
      throw ShapeMismatch("backward: label out of range");
    const auto acts = forward_pass(m, features[s]);
    const auto& probs = acts.back();
    loss -= std::log(std::max(probs[y], 1e-300));

    // delta at the output: softmax + CE
    std::vector<double> delta = probs;
    delta[y] -= 1.0;
    for (std::size_t li = m.layers.size(); li-- > 0;) {
      const Layer& l = m.layers[li];
      const auto& input = acts[li];
      for (std::size_t o = 0; o < l.out; ++o) {
        const double d = delta[o] * inv_n;
        g.b[li][o] += d;
        double* grow = &g.w[li][o * l.in];
        for (std::size_t i = 0; i < l.in; ++i) grow[i] += d * input[i];
      }
      if (li == 0) break;
      // propagate through weights and the previous ReLU
      std::vector<double> prev(l.in, 0.0);
      for (std::size_t o = 0; o < l.out; ++o) {
        const double d = delta[o];
        const double* row = &l.w[o * l.in];
        for (std::size_t i = 0; i < l.in; ++i) prev[i] += d * row[i];
      }
      for (std::size_t i = 0; i < l.in; ++i)
        if (acts[li][i] <= 0.0) prev[i] = 0.0;  // ReLU mask
      delta = std::move(prev);
    }
  }
  if (out_loss) *out_loss = loss * inv_n;
  return g;
}

inline double mean_ce_loss(const MlpModel& m,
                           const std::vector<std::vector<double>>& features,
                           const std::vector<int>& labels) {
  double loss = 0.0;
  for (std::size_t s = 0; s < features.size(); ++s) {
    const auto p = forward(m, features[s]);
    loss -= std::log(std::max(p[labels[s]], 1e-300));
  }
  return loss / static_cast<double>(features.size());
}

inline double accuracy(const MlpModel& m,
                       const std::vector<std::vector<double>>& features,
                       const std::vector<int>& labels) {
  std::size_t hit = 0;
  for (std::size_t s = 0; s < features.size(); ++s)
    hit += predict(m, features[s]) == labels[s];
  return static_cast<double>(hit) / static_cast<double>(features.size());
}

// ---------------------------------------------------------------------------
// Early stopping and Adam
// ---------------------------------------------------------------------------

struct EarlyStopper {
  std::size_t patience = 3;
  double best = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;

  // returns true when training should stop
  bool step(double val_loss) {
    if (val_loss < best) {
      best = val_loss;
      bad_epochs = 0;
      return false;
    }
    return ++bad_epochs >= patience;
  }
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t t = 0;
  Gradients m, v;

  explicit AdamState(const MlpModel& model)
      : m(zero_gradients(model)), v(zero_gradients(model)) {}

  void update(MlpModel& model, const Gradients& g, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
      auto step = [&](std::vector<double>& p, std::vector<double>& mm,
                      std::vector<double>& vv, const std::vector<double>& gg) {
        for (std::size_t i = 0; i < p.size(); ++i) {
          mm[i] = beta1 * mm[i] + (1.0 - beta1) * gg[i];
          vv[i] = beta2 * vv[i] + (1.0 - beta2) * gg[i] * gg[i];
          p[i] -= lr * (mm[i] / c1) / (std::sqrt(vv[i] / c2) + eps);
        }
      };
      step(model.layers[li].w, m.w[li], v.w[li], g.w[li]);
      step(model.layers[li].b, m.b[li], v.b[li], g.b[li]);
    }
  }
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

inline MlpModel train_xy(const std::vector<std::vector<double>>& features,
                         const std::vector<int>& labels,
                         const TrainConfig& cfg, TrainStats* stats = nullptr) {
  if (features.empty() || features.size() != labels.size())
    throw ShapeMismatch("train: empty data or feature/label mismatch");
  if (cfg.patience < 1) throw InvalidParams("train: patience < 1");

  // seeded shuffle; last val_fraction is the held-out validation split
  const std::size_t n = features.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RngStream split_rng(cfg.seed, 1);
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[split_rng.next_u64() % i]);
  const auto n_val = static_cast<std::size_t>(
      std::floor(cfg.val_fraction * static_cast<double>(n)));
  const std::size_t n_train = n - n_val;
  if (n_train < 1) throw InvalidParams("train: empty training split");

  std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
  std::vector<std::size_t> val_idx(order.begin() + n_train, order.end());

  bool seen[2] = {false, false};
  for (std::size_t i : train_idx) seen[labels[i] != 0] = true;
  if (!seen[0] || !seen[1])
    throw DegenerateLabels("train: single class in training split");

  const std::size_t dim = features.front().size();
  RngStream init_rng(cfg.seed, 2);
  MlpModel model = make_mlp(dim, cfg.hidden, 2, init_rng);

  // standardization from the training split only
  for (std::size_t i : train_idx) {
    for (std::size_t j = 0; j < dim; ++j) model.feat_mean[j] += features[i][j];
  }
  for (double& v : model.feat_mean) v /= static_cast<double>(n_train);
  std::vector<double> var(dim, 0.0);
  for (std::size_t i : train_idx) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = features[i][j] - model.feat_mean[j];
      var[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < dim; ++j) {
    model.feat_std[j] =
        std::max(1e-12, std::sqrt(var[j] / static_cast<double>(n_train)));
  }

  std::vector<std::vector<double>> val_x;
  std::vector<int> val_y;
  for (std::size_t i : val_idx) {
    val_x.push_back(features[i]);
    val_y.push_back(labels[i]);
  }

  AdamState adam(model);
  EarlyStopper stopper{cfg.patience};
  RngStream epoch_rng(cfg.seed, 3);
  MlpModel best = model;
  if (stats) *stats = TrainStats{};

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (std::size_t i = n_train; i > 1; --i)
      std::swap(train_idx[i - 1], train_idx[epoch_rng.next_u64() % i]);
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::size_t end = std::min(n_train, start + cfg.batch_size);
      std::vector<std::vector<double>> bx;
      std::vector<int> by;
      for (std::size_t k = start; k < end; ++k) {
        bx.push_back(features[train_idx[k]]);
        by.push_back(labels[train_idx[k]]);
      }
      adam.update(model, backward(model, bx, by), cfg.learning_rate);
    }
    const double val_loss = val_x.empty()
                                ? mean_ce_loss(model, features, labels)
                                : mean_ce_loss(model, val_x, val_y);
    if (stats) {
      stats->epochs_run = epoch + 1;
      stats->val_loss_per_epoch.push_back(val_loss);
    }
    if (val_loss < stopper.best) best = model;
    if (stopper.step(val_loss)) break;
  }
  if (stats) stats->best_val_loss = stopper.best;
  return best;
}

inline std::vector<std::vector<double>> feature_matrix(
    const datagen::Dataset& d) {
  std::vector<std::vector<double>> x;
  x.reserve(d.samples.size());
  for (const auto& s : d.samples)
    x.push_back({s.speed_mps, s.traffic_load_pps, s.snr_db});
  return x;
}

inline std::vector<int> label_vector(const datagen::Dataset& d) {
  std::vector<int> y;
  y.reserve(d.samples.size());
  for (const auto& s : d.samples) y.push_back(s.label);
  return y;
}

inline MlpModel train(const datagen::Dataset& d, const TrainConfig& cfg,
                      TrainStats* stats = nullptr) {
  MlpModel m = train_xy(feature_matrix(d), label_vector(d), cfg, stats);
  m.feature_names = datagen::numeric_feature_names();
  return m;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline Json to_json(const MlpModel& m) {
  Json layers = Json::array();
  for (const auto& l : m.layers) {
    layers.push_back(Json{
        {"in", l.in}, {"out", l.out}, {"w", l.w}, {"b", l.b}});
  }
  Json j{{"schema_version", 1},
         {"layers", layers},
         {"feat_mean", m.feat_mean},
         {"feat_std", m.feat_std},
         {"feature_names", m.feature_names}};
  j["digest"] = canonical_digest(j);
  return j;
}

inline MlpModel model_from_json(const Json& j) {
  Json check = j;
  check.erase("digest");
  if (j.contains("digest") &&
      j.at("digest").get<std::string>() != canonical_digest(check))
    throw DigestMismatch("model_from_json: digest mismatch");
  MlpModel m;
  for (const auto& lj : j.at("layers")) {
    Layer l;
    l.in = lj.at("in").get<std::size_t>();
    l.out = lj.at("out").get<std::size_t>();
    l.w = lj.at("w").get<std::vector<double>>();
    l.b = lj.at("b").get<std::vector<double>>();
    if (l.w.size() != l.in * l.out || l.b.size() != l.out)
      throw ShapeMismatch("model_from_json: inconsistent layer arrays");
    m.layers.push_back(std::move(l));
  }
  m.feat_mean = j.at("feat_mean").get<std::vector<double>>();
  m.feat_std = j.at("feat_std").get<std::vector<double>>();
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  if (m.feat_mean.size() != m.input_dim())
    throw ShapeMismatch("model_from_json: standardization length mismatch");
  return m;
}

inline void save_model(const MlpModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_model: cannot open " + path);
  out << canonical_dump(to_json(m)) << "\n";
}

inline MlpModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_model: cannot open " + path);
  Json j;
  in >> j;
  return model_from_json(j);
}

}  // namespace seal::task
