#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "nettack/dataset_io.hpp"
#include "nettack/graph.hpp"
#include "nettack/normalized_adjacency.hpp"
#include "nettack/parallel.hpp"
#include "nettack/rng.hpp"
#include "nettack/surrogate.hpp"

namespace nettack {

struct GcnConfig {
  std::size_t hidden = 16;
  double learning_rate = 0.01;
  int max_epochs = 200;
  int patience = 30;
  double dropout = 0.0;       // on hidden activations, training only
  double weight_decay = 0.0;  // L2 on the first layer
};

// softmax(Â relu(Â X W1) W2)
struct GcnModel {
  Matrix w1;  // D x H
  Matrix w2;  // H x K
  std::uint64_t seed = 0;
  int epochs_trained = 0;
};

inline GcnModel init_gcn(std::size_t n_features, std::size_t hidden, std::size_t n_classes, std::uint64_t seed) {
  if (hidden < 1) throw std::invalid_argument("gcn: hidden size must be >= 1");
  Rng rng(seed);
  auto glorot = [&](std::size_t rows, std::size_t cols) {
    const double r = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (2.0 * uniform_real(rng) - 1.0) * r;
    return m;
  };
  GcnModel m;
  m.w1 = glorot(n_features, hidden);
  m.w2 = glorot(hidden, n_classes);
  m.seed = seed;
  return m;
}

namespace detail {

inline Matrix propagate(const NormalizedAdjacency& na, const Matrix& h) {
  Matrix out = Matrix::Zero(h.rows(), h.cols());
  for (NodeId u = 0; u < static_cast<NodeId>(h.rows()); ++u)
    for (const auto& [v, a] : na.ahat_row(u)) out.row(u) += a * h.row(v);
  return out;
}

struct GcnPass {
  Matrix pre;     // Â X W1
  Matrix hidden;  // relu(pre), dropout applied when training
  Matrix mask;    // dropout scaling, empty when unused
  Matrix probs;   // softmax output
};

inline GcnPass gcn_pass(const GcnModel& m, const AttributedGraph& g, const NormalizedAdjacency& na,
                        double dropout = 0.0, Rng* rng = nullptr) {
  GcnPass p;
  p.pre = propagate(na, feature_projection(g, m.w1));
  p.hidden = p.pre.cwiseMax(0.0);
  if (dropout > 0.0 && rng) {
    p.mask.resize(p.hidden.rows(), p.hidden.cols());
    const double keep = 1.0 - dropout;
    for (Eigen::Index i = 0; i < p.mask.size(); ++i) p.mask.data()[i] = uniform_real(*rng) < keep ? 1.0 / keep : 0.0;
    p.hidden = p.hidden.cwiseProduct(p.mask);
  }
  p.probs = propagate(na, p.hidden * m.w2);
  softmax_rows(p.probs);
  return p;
}

}  // namespace detail

inline Matrix gcn_predict(const GcnModel& m, const AttributedGraph& g, const NormalizedAdjacency& na) {
  return detail::gcn_pass(m, g, na).probs;
}

inline Matrix gcn_predict(const GcnModel& m, const AttributedGraph& g) {
  return gcn_predict(m, g, NormalizedAdjacency(g));
}

struct GcnGradients {
  double loss = 0.0;
  Matrix w1;
  Matrix w2;
};

// Mean cross-entropy over `ids` (plus weight decay) and its exact gradient.
inline GcnGradients gcn_loss_and_gradients(const GcnModel& m, const AttributedGraph& g, const NormalizedAdjacency& na,
                                           const std::vector<NodeId>& ids, const GcnConfig& cfg = {},
                                           Rng* dropout_rng = nullptr) {
  const auto pass = detail::gcn_pass(m, g, na, cfg.dropout, dropout_rng);
  GcnGradients out;
  Matrix dz = Matrix::Zero(pass.probs.rows(), pass.probs.cols());
  const double scale = 1.0 / static_cast<double>(ids.size());
  for (NodeId v : ids) {
    const auto c = static_cast<Eigen::Index>(g.label(v));
    out.loss -= std::log(std::max(pass.probs(v, c), 1e-300)) * scale;
    dz.row(v) = pass.probs.row(v) * scale;
    dz(v, c) -= scale;
  }
  out.loss += 0.5 * cfg.weight_decay * m.w1.squaredNorm();

  const Matrix d_hw2 = detail::propagate(na, dz);  // Â symmetric
  out.w2 = pass.hidden.transpose() * d_hw2;
  Matrix d_hidden = d_hw2 * m.w2.transpose();
  if (pass.mask.size() > 0) d_hidden = d_hidden.cwiseProduct(pass.mask);
  for (Eigen::Index i = 0; i < d_hidden.size(); ++i)
    if (pass.pre.data()[i] <= 0.0) d_hidden.data()[i] = 0.0;
  const Matrix d_xw1 = detail::propagate(na, d_hidden);
  out.w1 = Matrix::Zero(m.w1.rows(), m.w1.cols());
  for (NodeId u = 0; u < g.num_nodes(); ++u)
    for (FeatureId i : g.features(u)) out.w1.row(i) += d_xw1.row(u);
  out.w1 += cfg.weight_decay * m.w1;
  return out;
}

inline double gcn_loss(const GcnModel& m, const AttributedGraph& g, const NormalizedAdjacency& na,
                       const std::vector<NodeId>& ids) {
  const Matrix probs = gcn_predict(m, g, na);
  double loss = 0.0;
  for (NodeId v : ids) loss -= std::log(std::max(probs(v, static_cast<Eigen::Index>(g.label(v))), 1e-300));
  return ids.empty() ? 0.0 : loss / static_cast<double>(ids.size());
}

// Full-batch Adam on the mean cross-entropy of the training nodes, early
// stopping on validation loss (best weights restored).
inline GcnModel train_gcn(const AttributedGraph& g, const DataSplit& split, std::uint64_t seed,
                          const GcnConfig& cfg = {}) {
  if (split.train.empty()) throw std::invalid_argument("train_gcn: empty training set");
  if (g.num_classes() < 2) throw std::invalid_argument("train_gcn: need at least two classes");
  const NormalizedAdjacency na(g);
  GcnModel m = init_gcn(g.num_features(), cfg.hidden, g.num_classes(), seed);
  Rng dropout_rng(derive_seed(seed, 0xd5));

  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Matrix m1 = Matrix::Zero(m.w1.rows(), m.w1.cols()), v1 = m1;
  Matrix m2 = Matrix::Zero(m.w2.rows(), m.w2.cols()), v2 = m2;
  auto adam = [&](Matrix& w, const Matrix& grad, Matrix& mom, Matrix& var, int t) {
    mom = beta1 * mom + (1.0 - beta1) * grad;
    var = beta2 * var + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1, t), c2 = 1.0 - std::pow(beta2, t);
    w.array() -= cfg.learning_rate * (mom.array() / c1) / ((var.array() / c2).sqrt() + eps);
  };

  GcnModel best = m;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  int epoch = 0;
  for (; epoch < cfg.max_epochs; ++epoch) {
    const auto grads = gcn_loss_and_gradients(m, g, na, split.train, cfg, &dropout_rng);
    if (!std::isfinite(grads.loss))
      throw TrainingDiverged("train_gcn: non-finite loss at epoch " + std::to_string(epoch));
    adam(m.w1, grads.w1, m1, v1, epoch + 1);
    adam(m.w2, grads.w2, m2, v2, epoch + 1);
    const double vloss = split.validation.empty() ? grads.loss : gcn_loss(m, g, na, split.validation);
    if (vloss < best_val) {
      best_val = vloss;
      best = m;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      ++epoch;
      break;
    }
  }
  best.epochs_trained = epoch;
  return best;
}

// Z[c_old] - max_{c != c_old} Z[c] on a probability row.
inline double margin(const RowVector& probs, std::size_t c_old) { return -surrogate_loss(probs, c_old); }

struct TargetMargin {
  NodeId node = 0;
  double margin = 0.0;        // mean over runs
  double correct_rate = 0.0;  // fraction of runs with margin > 0
};

struct MarginReport {
  std::vector<TargetMargin> targets;
  double fraction_correct = 0.0;
  double mean_margin = 0.0;

  void finalize() {
    fraction_correct = mean_margin = 0.0;
    for (const auto& t : targets) {
      fraction_correct += t.correct_rate;
      mean_margin += t.margin;
    }
    if (!targets.empty()) {
      fraction_correct /= static_cast<double>(targets.size());
      mean_margin /= static_cast<double>(targets.size());
    }
  }
};

// Margins of the targets on `attacked` under weights trained on the clean
// graph.
inline MarginReport evasion_eval(const GcnModel& clean_model, const AttributedGraph& attacked,
                                 const std::vector<NodeId>& targets) {
  const Matrix probs = gcn_predict(clean_model, attacked);
  MarginReport r;
  for (NodeId v : targets) {
    const double mg = margin(probs.row(v), static_cast<std::size_t>(attacked.label(v)));
    r.targets.push_back({v, mg, mg > 0.0 ? 1.0 : 0.0});
  }
  r.finalize();
  return r;
}

// Retrains `runs` models (seeds derived from base_seed) on `attacked` and
// averages margins and per-run correctness of the targets.
inline MarginReport poisoning_eval(const AttributedGraph& attacked, const DataSplit& split,
                                   const std::vector<NodeId>& targets, std::size_t runs = 10,
                                   std::uint64_t base_seed = 0, const GcnConfig& cfg = {},
                                   std::size_t workers = 1) {
  std::vector<std::vector<double>> margins(runs, std::vector<double>(targets.size()));
  parallel_for(runs, workers, [&](std::size_t r) {
    const GcnModel m = train_gcn(attacked, split, derive_seed(base_seed, r), cfg);
    const Matrix probs = gcn_predict(m, attacked);
    for (std::size_t t = 0; t < targets.size(); ++t)
      margins[r][t] = margin(probs.row(targets[t]), static_cast<std::size_t>(attacked.label(targets[t])));
  });
  MarginReport rep;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    TargetMargin tm{targets[t], 0.0, 0.0};
    for (std::size_t r = 0; r < runs; ++r) {
      tm.margin += margins[r][t];
      tm.correct_rate += margins[r][t] > 0.0 ? 1.0 : 0.0;
    }
    tm.margin /= static_cast<double>(runs);
    tm.correct_rate /= static_cast<double>(runs);
    rep.targets.push_back(tm);
  }
  rep.finalize();
  return rep;
}

inline nlohmann::ordered_json to_json(const MarginReport& r) {
  nlohmann::ordered_json j;
  j["fraction_correct"] = r.fraction_correct;
  j["mean_margin"] = r.mean_margin;
  auto& t = j["targets"] = nlohmann::ordered_json::array();
  for (const auto& x : r.targets) t.push_back({{"node", x.node}, {"margin", x.margin}, {"correct_rate", x.correct_rate}});
  return j;
}

}  // namespace nettack
