#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nettack {

using NodeId = std::uint32_t;
using FeatureId = std::uint32_t;
using ClassId = std::int32_t;

inline constexpr ClassId kUnlabeled = -1;

// Undirected, unweighted graph with binary node features and optional labels.
//
// Adjacency and feature rows are kept sorted so membership is a binary search
// and row iteration is linear in the degree. Degrees are cached.
class AttributedGraph {
 public:
  AttributedGraph() = default;

  AttributedGraph(std::size_t n_nodes, std::size_t n_features, std::size_t n_classes = 0)
      : n_features_(n_features),
        n_classes_(n_classes),
        adj_(n_nodes),
        feat_(n_nodes),
        labels_(n_nodes, kUnlabeled) {}

  std::size_t num_nodes() const noexcept { return adj_.size(); }
  std::size_t num_features() const noexcept { return n_features_; }
  std::size_t num_classes() const noexcept { return n_classes_; }
  std::size_t num_edges() const noexcept { return n_edges_; }

  void set_num_classes(std::size_t k) { n_classes_ = k; }

  const std::vector<NodeId>& neighbors(NodeId u) const {
    check_node(u);
    return adj_[u];
  }

  const std::vector<FeatureId>& features(NodeId u) const {
    check_node(u);
    return feat_[u];
  }

  std::size_t degree(NodeId u) const {
    check_node(u);
    return adj_[u].size();
  }

  bool has_edge(NodeId u, NodeId v) const {
    check_node(u);
    check_node(v);
    return std::binary_search(adj_[u].begin(), adj_[u].end(), v);
  }

  bool has_feature(NodeId u, FeatureId i) const {
    check_node(u);
    check_feature(i);
    return std::binary_search(feat_[u].begin(), feat_[u].end(), i);
  }

  // Toggles a_uv and a_vu. Returns true if the edge exists afterwards.
  bool flip_edge(NodeId u, NodeId v) {
    check_node(u);
    check_node(v);
    if (u == v) throw std::invalid_argument("flip_edge: self-loop (" + std::to_string(u) + ")");
    const bool inserted = toggle(adj_[u], v);
    toggle(adj_[v], u);
    if (inserted) {
      ++n_edges_;
    } else {
      --n_edges_;
    }
    return inserted;
  }

  // Toggles x_ui. Returns true if the feature is set afterwards.
  bool flip_feature(NodeId u, FeatureId i) {
    check_node(u);
    check_feature(i);
    return toggle(feat_[u], i);
  }

  // Idempotent setters used by loaders; they never create self-loops.
  void add_edge(NodeId u, NodeId v) {
    if (u == v) throw std::invalid_argument("add_edge: self-loop (" + std::to_string(u) + ")");
    if (!has_edge(u, v)) flip_edge(u, v);
  }

  void set_feature(NodeId u, FeatureId i) {
    if (!has_feature(u, i)) flip_feature(u, i);
  }

  ClassId label(NodeId u) const {
    check_node(u);
    return labels_[u];
  }

  bool is_labeled(NodeId u) const { return label(u) != kUnlabeled; }

  void set_label(NodeId u, ClassId c) {
    check_node(u);
    if (c != kUnlabeled && (c < 0 || (n_classes_ > 0 && static_cast<std::size_t>(c) >= n_classes_)))
      throw std::out_of_range("set_label: class " + std::to_string(c) + " outside [0, " +
                              std::to_string(n_classes_) + ")");
    labels_[u] = c;
  }

  const std::vector<ClassId>& labels() const noexcept { return labels_; }

  // Nodes reachable in at most two hops, including u itself. Sorted.
  std::vector<NodeId> two_hop_neighborhood(NodeId u) const {
    check_node(u);
    std::vector<NodeId> out{u};
    for (NodeId k : adj_[u]) {
      out.push_back(k);
      out.insert(out.end(), adj_[k].begin(), adj_[k].end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  std::vector<std::pair<NodeId, NodeId>> edge_list() const {
    std::vector<std::pair<NodeId, NodeId>> out;
    out.reserve(n_edges_);
    for (NodeId u = 0; u < adj_.size(); ++u)
      for (NodeId v : adj_[u])
        if (u < v) out.emplace_back(u, v);
    return out;
  }

  std::size_t num_feature_entries() const {
    std::size_t n = 0;
    for (const auto& row : feat_) n += row.size();
    return n;
  }

  friend bool operator==(const AttributedGraph& a, const AttributedGraph& b) {
    return a.n_features_ == b.n_features_ && a.n_classes_ == b.n_classes_ && a.adj_ == b.adj_ &&
           a.feat_ == b.feat_ && a.labels_ == b.labels_;
  }

  void check_node(NodeId u) const {
    if (u >= adj_.size())
      throw std::out_of_range("node id " + std::to_string(u) + " >= N=" + std::to_string(adj_.size()));
  }

  void check_feature(FeatureId i) const {
    if (i >= n_features_)
      throw std::out_of_range("feature id " + std::to_string(i) + " >= D=" + std::to_string(n_features_));
  }

 private:
  template <typename T>
  static bool toggle(std::vector<T>& row, T x) {
    auto it = std::lower_bound(row.begin(), row.end(), x);
    if (it != row.end() && *it == x) {
      row.erase(it);
      return false;
    }
    row.insert(it, x);
    return true;
  }

  std::size_t n_features_ = 0;
  std::size_t n_classes_ = 0;
  std::size_t n_edges_ = 0;
  std::vector<std::vector<NodeId>> adj_;
  std::vector<std::vector<FeatureId>> feat_;
  std::vector<ClassId> labels_;
};

enum class PerturbationKind { Edge, Feature };
enum class Direction { Insert, Remove };

// A single applied flip. For edges `second` is the other endpoint, for
// features it is the feature id.
struct Perturbation {
  PerturbationKind kind = PerturbationKind::Edge;
  NodeId node = 0;
  std::uint32_t second = 0;
  Direction direction = Direction::Insert;
  double score = 0.0;

  static Perturbation edge(NodeId u, NodeId v, Direction d, double score = 0.0) {
    return {PerturbationKind::Edge, std::min(u, v), std::max(u, v), d, score};
  }
  static Perturbation feature(NodeId u, FeatureId i, Direction d, double score = 0.0) {
    return {PerturbationKind::Feature, u, i, d, score};
  }

  friend bool operator==(const Perturbation&, const Perturbation&) = default;
};

// Applies p to g. Throws if the direction does not match the current state.
inline void apply(AttributedGraph& g, const Perturbation& p) {
  if (p.kind == PerturbationKind::Edge) {
    const bool present = g.has_edge(p.node, p.second);
    if (present != (p.direction == Direction::Remove))
      throw std::logic_error("apply: edge direction does not match graph state");
    g.flip_edge(p.node, p.second);
  } else {
    const bool present = g.has_feature(p.node, p.second);
    if (present != (p.direction == Direction::Remove))
      throw std::logic_error("apply: feature direction does not match graph state");
    g.flip_feature(p.node, p.second);
  }
}

inline const char* to_string(PerturbationKind k) { return k == PerturbationKind::Edge ? "edge" : "feature"; }
inline const char* to_string(Direction d) { return d == Direction::Insert ? "insert" : "remove"; }

}  // namespace nettack
