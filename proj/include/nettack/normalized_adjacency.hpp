#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "nettack/graph.hpp"

namespace nettack {

struct SparseEntry {
  NodeId col;
  double value;
  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

// Sorted by column.
using SparseRow = std::vector<SparseEntry>;

inline double lookup(const SparseRow& row, NodeId col) {
  auto it = std::lower_bound(row.begin(), row.end(), col,
                             [](const SparseEntry& e, NodeId c) { return e.col < c; });
  return (it != row.end() && it->col == col) ? it->value : 0.0;
}

// Â = D̃^{-1/2}(A + I)D̃^{-1/2} and its square, kept in sparse row form.
//
// Entries of Â² whose magnitude falls below kPruneThreshold after an
// incremental update are dropped, so the cached support tracks the true
// two-hop structure instead of accumulating cancellation residue.
class NormalizedAdjacency {
 public:
  static constexpr double kPruneThreshold = 1e-12;

  NormalizedAdjacency() = default;

  explicit NormalizedAdjacency(const AttributedGraph& g)
      : dtilde_(g.num_nodes()), ahat_(g.num_nodes()), ahat2_(g.num_nodes()) {
    for (NodeId u = 0; u < g.num_nodes(); ++u) dtilde_[u] = static_cast<double>(g.degree(u) + 1);
    for (NodeId u = 0; u < g.num_nodes(); ++u) ahat_[u] = build_ahat_row(g, u);
    std::vector<double> acc(g.num_nodes(), 0.0);
    std::vector<NodeId> touched;
    for (NodeId u = 0; u < g.num_nodes(); ++u) {
      touched.clear();
      for (const auto& [k, a_uk] : ahat_[u])
        for (const auto& [v, a_kv] : ahat_[k]) {
          if (acc[v] == 0.0) touched.push_back(v);
          acc[v] += a_uk * a_kv;
        }
      std::sort(touched.begin(), touched.end());
      auto& row = ahat2_[u];
      row.reserve(touched.size());
      for (NodeId v : touched) {
        row.push_back({v, acc[v]});
        acc[v] = 0.0;
      }
    }
  }

  std::size_t size() const noexcept { return dtilde_.size(); }
  double dtilde(NodeId u) const { return dtilde_.at(u); }
  const SparseRow& ahat_row(NodeId u) const { return ahat_.at(u); }
  const SparseRow& ahat2_row(NodeId u) const { return ahat2_.at(u); }
  double ahat(NodeId u, NodeId v) const { return lookup(ahat_.at(u), v); }
  double ahat2(NodeId u, NodeId v) const { return lookup(ahat2_.at(u), v); }

  // Visits every entry of row u of Â'² (the square after flipping edge (m,n)
  // of g) that can be nonzero, via the constant-time per-entry update. `g`
  // and this cache must describe the graph before the flip.
  template <typename Fn>
  void visit_row_after_flip(const AttributedGraph& g, NodeId u, NodeId m, NodeId n, Fn&& fn) const {
    if (m == n) throw std::invalid_argument("flip (m, m) is a self-loop");
    const double a_mn = g.has_edge(m, n) ? 1.0 : 0.0;
    const double x = 1.0 - 2.0 * a_mn;
    const double dm = dtilde_[m], dn = dtilde_[n];
    const double dm_new = dm + x, dn_new = dn + x;
    auto dnew = [&](NodeId k) { return (k == m || k == n) ? dtilde_[k] + x : dtilde_[k]; };

    const double du = dtilde_[u], du_new = dnew(u);
    const double a_um = (u != m && g.has_edge(u, m)) ? 1.0 : 0.0;
    const double a_un = (u != n && g.has_edge(u, n)) ? 1.0 : 0.0;
    auto flipped = [&](NodeId k, NodeId l) { return (k == m && l == n) || (k == n && l == m); };
    const double a_um_new = flipped(u, m) ? 1.0 - a_um : a_um;
    const double a_un_new = flipped(u, n) ? 1.0 - a_un : a_un;

    auto entry = [&](NodeId v, double old) {
      const double dv = dtilde_[v], dv_new = dnew(v);
      const double a_uv = (u != v && g.has_edge(u, v)) ? 1.0 : 0.0;
      const double at_uv = a_uv + (u == v ? 1.0 : 0.0);
      const bool f = flipped(u, v);
      const double a_uv_new = f ? 1.0 - a_uv : a_uv;
      const double at_uv_new = f ? 1.0 - at_uv : at_uv;

      const double a_mv = (a_um != 0.0 || a_um_new != 0.0) && v != m && g.has_edge(m, v) ? 1.0 : 0.0;
      const double a_nv = (a_un != 0.0 || a_un_new != 0.0) && v != n && g.has_edge(n, v) ? 1.0 : 0.0;
      const double a_mv_new = flipped(m, v) ? 1.0 - a_mv : a_mv;
      const double a_nv_new = flipped(n, v) ? 1.0 - a_nv : a_nv;

      const double inner = std::sqrt(du * dv) * old - at_uv / du - a_uv / dv + a_uv_new / dv_new +
                           at_uv_new / du_new - a_um * a_mv / dm + a_um_new * a_mv_new / dm_new -
                           a_un * a_nv / dn + a_un_new * a_nv_new / dn_new;
      fn(v, inner / std::sqrt(du_new * dv_new));
    };

    const SparseRow& row = ahat2_[u];
    for (const auto& [v, old] : row) entry(v, old);

    auto visit_extra = [&](NodeId v) {
      if (lookup(row, v) == 0.0) entry(v, 0.0);
    };
    // New support can only appear at m, n, or (when u is an endpoint) at the
    // other endpoint's neighbors.
    if (m < n) {
      visit_extra(m);
      visit_extra(n);
    } else {
      visit_extra(n);
      visit_extra(m);
    }
    if (u == m || u == n) {
      const NodeId other = u == m ? n : m;
      for (NodeId w : g.neighbors(other))
        if (w != m && w != n) visit_extra(w);
    }
  }

  SparseRow row_after_flip(const AttributedGraph& g, NodeId u, NodeId m, NodeId n) const {
    SparseRow out;
    visit_row_after_flip(g, u, m, n, [&](NodeId v, double value) { out.push_back({v, value}); });
    std::sort(out.begin(), out.end(), [](const SparseEntry& a, const SparseEntry& b) { return a.col < b.col; });
    return out;
  }

  // Flips edge (m,n) in g and updates Â, Â² and D̃ for every affected row.
  void apply_edge_flip(AttributedGraph& g, NodeId m, NodeId n) {
    check_consistent(g);
    std::vector<NodeId> rows = g.two_hop_neighborhood(m);
    {
      // The post-flip two-hop balls of m and n add only each other's
      // neighbors, which this union already covers.
      auto more = g.two_hop_neighborhood(n);
      rows.insert(rows.end(), more.begin(), more.end());
      std::sort(rows.begin(), rows.end());
      rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    }
    std::vector<SparseRow> updated;
    updated.reserve(rows.size());
    for (NodeId u : rows) {
      SparseRow r = row_after_flip(g, u, m, n);
      std::erase_if(r, [](const SparseEntry& e) { return std::abs(e.value) < kPruneThreshold; });
      updated.push_back(std::move(r));
    }

    g.flip_edge(m, n);
    dtilde_[m] = static_cast<double>(g.degree(m) + 1);
    dtilde_[n] = static_cast<double>(g.degree(n) + 1);
    // Rows m and n plus every row holding an entry for m or n; a removed
    // (m,n) entry disappears with the rebuild of rows m and n themselves.
    for (NodeId k : {m, n}) {
      ahat_[k] = build_ahat_row(g, k);
      for (NodeId w : g.neighbors(k)) ahat_[w] = build_ahat_row(g, w);
    }
    for (std::size_t i = 0; i < rows.size(); ++i) ahat2_[rows[i]] = std::move(updated[i]);
  }

 private:
  SparseRow build_ahat_row(const AttributedGraph& g, NodeId u) const {
    SparseRow row;
    const auto& nb = g.neighbors(u);
    row.reserve(nb.size() + 1);
    bool self_done = false;
    for (NodeId v : nb) {
      if (!self_done && u < v) {
        row.push_back({u, 1.0 / dtilde_[u]});
        self_done = true;
      }
      row.push_back({v, 1.0 / std::sqrt(dtilde_[u] * dtilde_[v])});
    }
    if (!self_done) row.push_back({u, 1.0 / dtilde_[u]});
    return row;
  }

  void check_consistent(const AttributedGraph& g) const {
    if (g.num_nodes() != dtilde_.size())
      throw std::logic_error("NormalizedAdjacency: cache built for a graph of different size");
#ifndef NDEBUG
    for (NodeId u = 0; u < g.num_nodes(); ++u)
      if (dtilde_[u] != static_cast<double>(g.degree(u) + 1))
        throw std::logic_error("NormalizedAdjacency: degree cache out of sync at node " + std::to_string(u));
#endif
  }

  std::vector<double> dtilde_;
  std::vector<SparseRow> ahat_;
  std::vector<SparseRow> ahat2_;
};

}  // namespace nettack
