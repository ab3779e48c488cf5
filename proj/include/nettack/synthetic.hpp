#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nettack/graph.hpp"
#include "nettack/rng.hpp"

namespace nettack {

// Degree-corrected planted partition with class-correlated binary features.
struct PlantedPartitionConfig {
  std::size_t n_nodes = 500;
  std::size_t n_classes = 4;
  std::size_t n_features = 120;
  double mean_degree = 6.0;
  double homophily = 0.85;        // expected fraction of intra-class edges
  double degree_exponent = 2.5;   // tail exponent of the node propensities
  double feature_on = 0.2;        // P(x_ui = 1) for features of the node's class
  double feature_noise = 0.02;    // P(x_ui = 1) otherwise
  std::uint64_t seed = 1;
};

inline AttributedGraph planted_partition(const PlantedPartitionConfig& cfg) {
  const std::size_t n = cfg.n_nodes, k = cfg.n_classes, d = cfg.n_features;
  if (n < 2 || k < 2 || d < k) throw std::invalid_argument("planted_partition: degenerate configuration");
  Rng rng(cfg.seed);
  AttributedGraph g(n, d, k);

  for (NodeId u = 0; u < n; ++u) g.set_label(u, static_cast<ClassId>(u % k));
  // Shuffle class assignment so ids carry no class information.
  {
    std::vector<ClassId> labels(g.labels());
    shuffle(labels, rng);
    for (NodeId u = 0; u < n; ++u) g.set_label(u, labels[u]);
  }

  std::vector<double> theta(n);
  const double cap = std::sqrt(static_cast<double>(n));
  for (auto& t : theta) t = std::min(cap, std::pow(1.0 - uniform_real(rng), -1.0 / (cfg.degree_exponent - 1.0)));
  // Rescale to mean 1 so the expected degree averages to mean_degree.
  double total = 0.0;
  for (double t : theta) total += t;
  for (auto& t : theta) t *= static_cast<double>(n) / total;
  total = static_cast<double>(n);

  const double kk = static_cast<double>(k);
  const double w_in = cfg.homophily * kk, w_out = (1.0 - cfg.homophily) * kk / (kk - 1.0);
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v) {
      const double w = g.label(u) == g.label(v) ? w_in : w_out;
      const double p = std::min(1.0, cfg.mean_degree * theta[u] * theta[v] / total * w);
      if (uniform_real(rng) < p) g.flip_edge(u, v);
    }

  const std::size_t per_class = d / k;
  for (NodeId u = 0; u < n; ++u) {
    const auto c = static_cast<std::size_t>(g.label(u));
    for (FeatureId i = 0; i < d; ++i) {
      const bool own = i / per_class == c && i < per_class * k;
      if (uniform_real(rng) < (own ? cfg.feature_on : cfg.feature_noise)) g.flip_feature(u, i);
    }
    if (g.features(u).empty()) g.flip_feature(u, static_cast<FeatureId>(c * per_class + uniform_index(rng, per_class)));
  }
  return g;
}

// Erdos-Renyi G(n, p) without features or labels.
inline AttributedGraph erdos_renyi(std::size_t n, double p, std::uint64_t seed, std::size_t n_features = 0) {
  Rng rng(seed);
  AttributedGraph g(n, n_features);
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (uniform_real(rng) < p) g.flip_edge(u, v);
  return g;
}

}  // namespace nettack
