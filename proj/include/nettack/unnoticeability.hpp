#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nettack/graph.hpp"
#include "nettack/log.hpp"

namespace nettack {

// ---------------------------------------------------------------------------
// Power-law degree test

enum class LogLikelihoodForm {
  // n log a + n a log d_min - (a + 1) R
  Corrected,
  // n log a + n a log d_min + (a + 1) R
  AsPrinted,
};

// Sufficient statistics of the filtered degree multiset {d >= d_min}:
// its size and the sum of log degrees.
struct DegreeSummary {
  double count = 0.0;
  double log_sum = 0.0;

  friend DegreeSummary operator+(DegreeSummary a, DegreeSummary b) {
    return {a.count + b.count, a.log_sum + b.log_sum};
  }
};

template <typename Int>
DegreeSummary summarize_degrees(std::span<const Int> degrees, double d_min) {
  DegreeSummary s;
  for (Int d : degrees) {
    if (static_cast<double>(d) >= d_min) {
      s.count += 1.0;
      s.log_sum += std::log(static_cast<double>(d));
    }
  }
  return s;
}

inline DegreeSummary summarize_degrees(const AttributedGraph& g, double d_min) {
  DegreeSummary s;
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    const auto d = static_cast<double>(g.degree(u));
    if (d >= d_min) {
      s.count += 1.0;
      s.log_sum += std::log(d);
    }
  }
  return s;
}

// Approximate discrete power-law MLE: 1 + n / sum log(d / (d_min - 1/2)).
inline double estimate_alpha(const DegreeSummary& s, double d_min) {
  if (s.count <= 0.0) throw std::invalid_argument("estimate_alpha: no degree >= d_min");
  return 1.0 + s.count / (s.log_sum - s.count * std::log(d_min - 0.5));
}

template <typename Int>
double estimate_alpha(std::span<const Int> degrees, double d_min) {
  return estimate_alpha(summarize_degrees(degrees, d_min), d_min);
}

inline double powerlaw_loglikelihood(const DegreeSummary& s, double alpha, double d_min,
                                     LogLikelihoodForm form = LogLikelihoodForm::Corrected) {
  if (!(alpha > 0.0)) throw std::invalid_argument("powerlaw_loglikelihood: alpha must be positive");
  const double base = s.count * std::log(alpha) + s.count * alpha * std::log(d_min);
  const double tail = (alpha + 1.0) * s.log_sum;
  return form == LogLikelihoodForm::Corrected ? base - tail : base + tail;
}

template <typename Int>
double powerlaw_loglikelihood(std::span<const Int> degrees, double alpha, double d_min,
                              LogLikelihoodForm form = LogLikelihoodForm::Corrected) {
  return powerlaw_loglikelihood(summarize_degrees(degrees, d_min), alpha, d_min, form);
}

// Likelihood-ratio statistic: -2 l(H0) + 2 l(H1), where H0 fits one power
// law to the pooled samples and H1 fits each sample separately.
inline double lambda_statistic(const DegreeSummary& s0, const DegreeSummary& s1, double d_min,
                               LogLikelihoodForm form = LogLikelihoodForm::Corrected) {
  const DegreeSummary comb = s0 + s1;
  const double l_h0 = powerlaw_loglikelihood(comb, estimate_alpha(comb, d_min), d_min, form);
  const double l_h1 = powerlaw_loglikelihood(s0, estimate_alpha(s0, d_min), d_min, form) +
                      powerlaw_loglikelihood(s1, estimate_alpha(s1, d_min), d_min, form);
  return -2.0 * l_h0 + 2.0 * l_h1;
}

template <typename Int>
double lambda_statistic(std::span<const Int> deg0, std::span<const Int> deg1, double d_min,
                        LogLikelihoodForm form = LogLikelihoodForm::Corrected) {
  return lambda_statistic(summarize_degrees(deg0, d_min), summarize_degrees(deg1, d_min), d_min, form);
}

struct DegreeTestConfig {
  double d_min = 2.0;
  double tau = 0.004;
  LogLikelihoodForm form = LogLikelihoodForm::Corrected;
};

// Running sufficient statistics of the clean and the current graph, so the
// effect of a single edge flip on the test statistic is O(1) to evaluate.
class DegreeTestState {
 public:
  struct Evaluation {
    double count = 0.0;     // |D_G'|
    double log_sum = 0.0;   // R^{G'}
    double alpha = 0.0;     // alpha_{G'}
    double loglik = 0.0;    // l(D_G')
    double lambda = 0.0;    // Lambda(G0, G')
  };

  DegreeTestState() = default;

  DegreeTestState(const AttributedGraph& clean, DegreeTestConfig cfg)
      : cfg_(cfg), clean_(summarize_degrees(clean, cfg.d_min)), current_(clean_) {
    if (clean_.count <= 0.0) throw std::invalid_argument("DegreeTestState: no node has degree >= d_min");
    clean_loglik_ = powerlaw_loglikelihood(clean_, estimate_alpha(clean_, cfg_.d_min), cfg_.d_min, cfg_.form);
  }

  const DegreeTestConfig& config() const noexcept { return cfg_; }
  const DegreeSummary& clean() const noexcept { return clean_; }
  const DegreeSummary& current() const noexcept { return current_; }
  double current_alpha() const { return estimate_alpha(current_, cfg_.d_min); }
  double current_lambda() const { return lambda_for(current_); }

  // Effect of flipping (m,n) given the current plain degrees and a_mn.
  Evaluation evaluate_flip(std::size_t d_m, std::size_t d_n, bool a_mn) const {
    const double x = a_mn ? -1.0 : 1.0;
    const auto dm = static_cast<double>(d_m), dn = static_cast<double>(d_n);
    const double edge = a_mn ? 1.0 : 0.0;
    Evaluation e;
    e.count = current_.count + ((dm + 1.0 - edge == cfg_.d_min ? 1.0 : 0.0) +
                                (dn + 1.0 - edge == cfg_.d_min ? 1.0 : 0.0)) * x;
    e.log_sum = current_.log_sum - log_if(dm) + log_if(dm + x) - log_if(dn) + log_if(dn + x);
    if (e.count <= 0.0) {
      e.alpha = std::numeric_limits<double>::quiet_NaN();
      e.loglik = std::numeric_limits<double>::quiet_NaN();
      e.lambda = std::numeric_limits<double>::infinity();
      return e;
    }
    const DegreeSummary next{e.count, e.log_sum};
    e.alpha = estimate_alpha(next, cfg_.d_min);
    e.loglik = powerlaw_loglikelihood(next, e.alpha, cfg_.d_min, cfg_.form);
    const DegreeSummary comb = clean_ + next;
    const double l_comb = powerlaw_loglikelihood(comb, estimate_alpha(comb, cfg_.d_min), cfg_.d_min, cfg_.form);
    e.lambda = -2.0 * l_comb + 2.0 * (clean_loglik_ + e.loglik);
    return e;
  }

  bool accepts(const Evaluation& e) const { return e.lambda < cfg_.tau; }

  void commit(const Evaluation& e) { current_ = {e.count, e.log_sum}; }

 private:
  double log_if(double d) const { return d >= cfg_.d_min ? std::log(d) : 0.0; }

  double lambda_for(const DegreeSummary& s) const {
    return lambda_statistic(clean_, s, cfg_.d_min, cfg_.form);
  }

  DegreeTestConfig cfg_;
  DegreeSummary clean_;
  DegreeSummary current_;
  double clean_loglik_ = 0.0;
};

// ---------------------------------------------------------------------------
// Feature co-occurrence test

// Co-occurrence graph of the clean features plus each node's original
// feature set. Built once and never updated during an attack.
class CooccurrenceIndex {
 public:
  CooccurrenceIndex() = default;

  explicit CooccurrenceIndex(const AttributedGraph& clean)
      : n_features_(clean.num_features()), adj_(clean.num_features()), original_(clean.num_nodes()) {
    for (NodeId u = 0; u < clean.num_nodes(); ++u) {
      const auto& f = clean.features(u);
      original_[u] = f;
      for (std::size_t a = 0; a < f.size(); ++a)
        for (std::size_t b = a + 1; b < f.size(); ++b) {
          adj_[f[a]].push_back(f[b]);
          adj_[f[b]].push_back(f[a]);
        }
    }
    for (auto& row : adj_) {
      std::sort(row.begin(), row.end());
      row.erase(std::unique(row.begin(), row.end()), row.end());
    }
  }

  std::size_t num_features() const noexcept { return n_features_; }
  std::size_t feature_degree(FeatureId j) const { return adj_.at(j).size(); }
  const std::vector<FeatureId>& cooccurring(FeatureId j) const { return adj_.at(j); }
  const std::vector<FeatureId>& original_features(NodeId u) const { return original_.at(u); }

  bool cooccur(FeatureId i, FeatureId j) const {
    const auto& row = adj_.at(i);
    return std::binary_search(row.begin(), row.end(), j);
  }

  std::size_t num_edges() const {
    std::size_t n = 0;
    for (const auto& row : adj_) n += row.size();
    return n / 2;
  }

  // One-step random-walk probability of reaching every feature from S_u,
  // and the half-maximum threshold sigma. Features of S_u with no
  // co-occurrence edge cannot take a step and are left out of both.
  struct WalkProbabilities {
    std::vector<double> p;
    double sigma = 0.0;
  };

  WalkProbabilities walk_probabilities(NodeId u) const {
    WalkProbabilities w{std::vector<double>(n_features_, 0.0), 0.0};
    const auto& s = original_.at(u);
    if (s.empty()) return w;
    const double inv = 1.0 / static_cast<double>(s.size());
    for (FeatureId j : s) {
      if (adj_[j].empty()) continue;
      const double step = inv / static_cast<double>(adj_[j].size());
      w.sigma += step;
      for (FeatureId i : adj_[j]) w.p[i] += step;
    }
    w.sigma *= 0.5;
    return w;
  }

  // Same summation order as walk_probabilities, so both agree bit for bit.
  double probability(NodeId u, FeatureId i) const {
    const auto& s = original_.at(u);
    if (s.empty()) return 0.0;
    const double inv = 1.0 / static_cast<double>(s.size());
    double p = 0.0;
    for (FeatureId j : s)
      if (!adj_[j].empty() && cooccur(i, j)) p += inv / static_cast<double>(adj_[j].size());
    return p;
  }

  double sigma(NodeId u) const {
    const auto& s = original_.at(u);
    if (s.empty()) return 0.0;
    const double inv = 1.0 / static_cast<double>(s.size());
    double acc = 0.0;
    for (FeatureId j : s)
      if (!adj_[j].empty()) acc += inv / static_cast<double>(adj_[j].size());
    return 0.5 * acc;
  }

  // Whether setting x_ui = 1 is unnoticeable. Removals are always allowed and
  // are not checked here.
  bool addition_allowed(NodeId u, FeatureId i) const {
    const auto& s = original_.at(u);
    if (std::binary_search(s.begin(), s.end(), i)) return true;
    if (s.empty()) {
      warn("feature test: node " + std::to_string(u) + " has no original features; addition of " +
           std::to_string(i) + " rejected");
      return false;
    }
    return probability(u, i) > sigma(u);
  }

  // Every feature whose addition to u passes the test (including S_u).
  std::vector<FeatureId> allowed_additions(NodeId u) const {
    std::vector<FeatureId> out;
    const auto& s = original_.at(u);
    if (s.empty()) return out;
    const auto w = walk_probabilities(u);
    for (FeatureId i = 0; i < n_features_; ++i)
      if (w.p[i] > w.sigma || std::binary_search(s.begin(), s.end(), i)) out.push_back(i);
    return out;
  }

 private:
  std::size_t n_features_ = 0;
  std::vector<std::vector<FeatureId>> adj_;
  std::vector<std::vector<FeatureId>> original_;
};

}  // namespace nettack
