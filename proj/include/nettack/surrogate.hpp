#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "nettack/dataset_io.hpp"
#include "nettack/graph.hpp"
#include "nettack/normalized_adjacency.hpp"

namespace nettack {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Linearized two-layer GCN: logits = Â² X W.
struct SurrogateModel {
  Matrix weights;  // D x K
  std::size_t num_classes() const { return static_cast<std::size_t>(weights.cols()); }
  int epochs_trained = 0;
  double best_validation_loss = 0.0;
};

// Full-batch gradient descent with early stopping on validation loss. The
// objective is convex in W, so W starts at zero and no seed is needed.
struct SurrogateTrainConfig {
  double learning_rate = 0.1;
  int max_epochs = 500;
  int patience = 20;
};

inline void softmax_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

inline std::size_t argmax(const RowVector& z) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < z.size(); ++c)
    if (z[c] > z[best]) best = c;
  return static_cast<std::size_t>(best);
}

// X W, one row per node.
inline Matrix feature_projection(const AttributedGraph& g, const Matrix& w) {
  Matrix c = Matrix::Zero(static_cast<Eigen::Index>(g.num_nodes()), w.cols());
  for (NodeId u = 0; u < g.num_nodes(); ++u)
    for (FeatureId i : g.features(u)) c.row(u) += w.row(i);
  return c;
}

// [Â² X] row v as a dense D-vector.
inline RowVector propagated_features(const AttributedGraph& g, const NormalizedAdjacency& na, NodeId v) {
  RowVector f = RowVector::Zero(static_cast<Eigen::Index>(g.num_features()));
  for (const auto& [u, a] : na.ahat2_row(v))
    for (FeatureId i : g.features(u)) f[i] += a;
  return f;
}

inline RowVector logits_row(const SparseRow& ahat2_row, const Matrix& xw) {
  RowVector z = RowVector::Zero(xw.cols());
  for (const auto& [u, a] : ahat2_row) z += a * xw.row(u);
  return z;
}

inline Matrix surrogate_logits(const AttributedGraph& g, const NormalizedAdjacency& na, const SurrogateModel& model) {
  const Matrix xw = feature_projection(g, model.weights);
  Matrix z(static_cast<Eigen::Index>(g.num_nodes()), xw.cols());
  for (NodeId v = 0; v < g.num_nodes(); ++v) z.row(v) = logits_row(na.ahat2_row(v), xw);
  return z;
}

// max_{c != c_old} z_c - z_{c_old}; positive iff the argmax is not c_old.
inline double surrogate_loss(const RowVector& logits, std::size_t c_old) {
  if (logits.size() < 2) throw std::invalid_argument("surrogate_loss: need at least two classes");
  if (c_old >= static_cast<std::size_t>(logits.size())) throw std::out_of_range("surrogate_loss: c_old out of range");
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < logits.size(); ++c)
    if (static_cast<std::size_t>(c) != c_old) best = std::max(best, logits[c]);
  return best - logits[static_cast<Eigen::Index>(c_old)];
}

// Wrong class with the largest logit; smallest index on ties.
inline std::size_t best_wrong_class(const RowVector& logits, std::size_t c_old) {
  std::size_t best = c_old == 0 ? 1 : 0;
  for (Eigen::Index c = 0; c < logits.size(); ++c)
    if (static_cast<std::size_t>(c) != c_old && logits[c] > logits[static_cast<Eigen::Index>(best)])
      best = static_cast<std::size_t>(c);
  return best;
}

inline double surrogate_loss(const AttributedGraph& g, const NormalizedAdjacency& na, const SurrogateModel& model,
                             NodeId v0, std::size_t c_old) {
  g.check_node(v0);
  const Matrix xw = feature_projection(g, model.weights);
  return surrogate_loss(logits_row(na.ahat2_row(v0), xw), c_old);
}

namespace detail {

struct Batch {
  Matrix features;  // rows: Â²X for the batch nodes
  std::vector<std::size_t> labels;
};

inline Batch make_batch(const AttributedGraph& g, const NormalizedAdjacency& na, const std::vector<NodeId>& ids) {
  Batch b{Matrix(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(g.num_features())), {}};
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (!g.is_labeled(ids[r])) throw std::invalid_argument("train: node " + std::to_string(ids[r]) + " is unlabeled");
    b.features.row(static_cast<Eigen::Index>(r)) = propagated_features(g, na, ids[r]);
    b.labels.push_back(static_cast<std::size_t>(g.label(ids[r])));
  }
  return b;
}

// Mean cross-entropy; fills `probs` with the softmax output.
inline double cross_entropy(const Matrix& logits, const std::vector<std::size_t>& labels, Matrix& probs) {
  probs = logits;
  softmax_rows(probs);
  double loss = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r)
    loss -= std::log(std::max(probs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(labels[r])), 1e-300));
  return labels.empty() ? 0.0 : loss / static_cast<double>(labels.size());
}

}  // namespace detail

inline SurrogateModel train_surrogate(const AttributedGraph& g, const NormalizedAdjacency& na, const DataSplit& split,
                                      const SurrogateTrainConfig& cfg = {}) {
  if (split.train.empty()) throw std::invalid_argument("train_surrogate: empty training set");
  const auto k = static_cast<Eigen::Index>(g.num_classes());
  if (k < 2) throw std::invalid_argument("train_surrogate: need at least two classes");

  const auto train = detail::make_batch(g, na, split.train);
  const auto val = detail::make_batch(g, na, split.validation);
  auto one_hot = [&](const detail::Batch& b) {
    Matrix y = Matrix::Zero(static_cast<Eigen::Index>(b.labels.size()), k);
    for (std::size_t r = 0; r < b.labels.size(); ++r) y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(b.labels[r])) = 1.0;
    return y;
  };
  const Matrix y_train = one_hot(train);

  SurrogateModel model{Matrix::Zero(static_cast<Eigen::Index>(g.num_features()), k)};
  Matrix best = model.weights;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  Matrix probs;
  int epoch = 0;
  for (; epoch < cfg.max_epochs; ++epoch) {
    const double loss = detail::cross_entropy(train.features * model.weights, train.labels, probs);
    if (!std::isfinite(loss))
      throw TrainingDiverged("train_surrogate: non-finite training loss at epoch " + std::to_string(epoch) +
                             " (learning rate " + std::to_string(cfg.learning_rate) + ")");
    const Matrix grad = train.features.transpose() * (probs - y_train) / static_cast<double>(train.labels.size());
    model.weights -= cfg.learning_rate * grad;

    const double vloss = val.labels.empty() ? loss : detail::cross_entropy(val.features * model.weights, val.labels, probs);
    if (!std::isfinite(vloss))
      throw TrainingDiverged("train_surrogate: non-finite validation loss at epoch " + std::to_string(epoch));
    if (vloss < best_val) {
      best_val = vloss;
      best = model.weights;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      ++epoch;
      break;
    }
  }
  model.weights = std::move(best);
  model.epochs_trained = epoch;
  model.best_validation_loss = best_val;
  return model;
}

// Class c_old for a target: its label when known, else the surrogate's
// clean-graph prediction.
inline std::size_t reference_class(const AttributedGraph& g, const NormalizedAdjacency& na, const SurrogateModel& model,
                                   NodeId v0) {
  if (g.is_labeled(v0)) return static_cast<std::size_t>(g.label(v0));
  return argmax(logits_row(na.ahat2_row(v0), feature_projection(g, model.weights)));
}

inline nlohmann::ordered_json to_json(const SurrogateModel& m) {
  nlohmann::ordered_json j;
  j["rows"] = m.weights.rows();
  j["cols"] = m.weights.cols();
  j["epochs_trained"] = m.epochs_trained;
  j["best_validation_loss"] = m.best_validation_loss;
  std::vector<double> flat(m.weights.data(), m.weights.data() + m.weights.size());
  j["weights"] = flat;
  return j;
}

inline SurrogateModel surrogate_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("weights").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) throw std::invalid_argument("surrogate json: shape mismatch");
  SurrogateModel m{Eigen::Map<const Matrix>(flat.data(), rows, cols)};
  m.epochs_trained = j.value("epochs_trained", 0);
  m.best_validation_loss = j.value("best_validation_loss", 0.0);
  return m;
}

}  // namespace nettack
