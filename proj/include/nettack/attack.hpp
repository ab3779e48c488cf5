#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nettack/graph.hpp"
#include "nettack/normalized_adjacency.hpp"
#include "nettack/rng.hpp"
#include "nettack/surrogate.hpp"
#include "nettack/unnoticeability.hpp"

namespace nettack {

enum class AttackMode { Direct, Influencer };

inline const char* to_string(AttackMode m) { return m == AttackMode::Direct ? "direct" : "influencer"; }

struct AttackConfig {
  NodeId target = 0;
  std::vector<NodeId> attackers;  // {target} for direct attacks
  std::size_t budget = 1;
  AttackMode mode = AttackMode::Direct;
  bool perturb_structure = true;
  bool perturb_features = true;
  bool constrained = true;
  DegreeTestConfig degree_test;
  std::uint64_t seed = 0;

  static AttackConfig direct(NodeId target, std::size_t budget) {
    AttackConfig c;
    c.target = target;
    c.attackers = {target};
    c.budget = budget;
    return c;
  }

  void validate(const AttributedGraph& g) const {
    g.check_node(target);
    if (budget < 1) throw std::invalid_argument("attack: budget must be >= 1");
    if (attackers.empty()) throw std::invalid_argument("attack: no attacker nodes");
    for (NodeId a : attackers) g.check_node(a);
    const bool has_target = std::find(attackers.begin(), attackers.end(), target) != attackers.end();
    if (mode == AttackMode::Direct && !(attackers.size() == 1 && has_target))
      throw std::invalid_argument("attack: a direct attack has exactly the target as attacker");
    if (mode == AttackMode::Influencer && has_target)
      throw std::invalid_argument("attack: the target cannot be an influencer");
    if (!perturb_structure && !perturb_features)
      throw std::invalid_argument("attack: both structure and feature perturbations disabled");
  }
};

struct FeatureAudit {
  NodeId node = 0;
  FeatureId feature = 0;
  double probability = 0.0;
  double sigma = 0.0;
  bool allowed = false;
};

struct AttackResult {
  std::string method = "nettack";
  NodeId target = 0;
  std::size_t reference_class = 0;
  std::size_t budget = 0;
  std::vector<Perturbation> log;
  std::vector<double> loss_trace;    // loss before the first step, then after every step
  std::vector<double> lambda_trace;  // Lambda(G0, G_t) after every step
  std::vector<FeatureAudit> feature_audit;  // one entry per feature addition
  bool starved = false;

  double final_loss() const { return loss_trace.empty() ? 0.0 : loss_trace.back(); }
};

// Influencers: random neighbors of v0, topped up from the exact two-hop ring
// when v0 has fewer than `count` neighbors.
inline std::vector<NodeId> pick_influencers(const AttributedGraph& g, NodeId v0, std::size_t count, Rng& rng) {
  std::vector<NodeId> nb = g.neighbors(v0);
  shuffle(nb, rng);
  std::vector<NodeId> out(nb.begin(), nb.begin() + static_cast<std::ptrdiff_t>(std::min(count, nb.size())));
  if (out.size() < count) {
    std::vector<NodeId> ring;
    for (NodeId u : g.two_hop_neighborhood(v0))
      if (u != v0 && !g.has_edge(u, v0)) ring.push_back(u);
    shuffle(ring, rng);
    for (std::size_t i = 0; i < ring.size() && out.size() < count; ++i) out.push_back(ring[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct EdgeCandidate {
  NodeId m = 0;
  NodeId n = 0;
  bool present = false;
  DegreeTestState::Evaluation test;
};

struct FeatureCandidate {
  NodeId node = 0;
  FeatureId feature = 0;
  bool present = false;
};

// Node pairs with an endpoint in the attacker set whose flip passes the degree
// test (unless unconstrained). Removals that would isolate the target are
// never candidates; in influencer mode edges incident to the target are
// excluded. Pairs are canonical (m < n) and sorted.
inline std::vector<EdgeCandidate> candidate_edges(const AttributedGraph& g, const AttackConfig& cfg,
                                                  const DegreeTestState& degree_state) {
  std::vector<char> is_attacker(g.num_nodes(), 0);
  for (NodeId a : cfg.attackers) is_attacker[a] = 1;
  std::vector<EdgeCandidate> out;
  std::vector<NodeId> attackers = cfg.attackers;
  std::sort(attackers.begin(), attackers.end());
  attackers.erase(std::unique(attackers.begin(), attackers.end()), attackers.end());
  for (NodeId a : attackers) {
    for (NodeId u = 0; u < g.num_nodes(); ++u) {
      if (u == a) continue;
      if (is_attacker[u] && u < a) continue;
      if (cfg.mode == AttackMode::Influencer && u == cfg.target) continue;
      const bool present = g.has_edge(a, u);
      if (present && (a == cfg.target || u == cfg.target) && g.degree(cfg.target) == 1) continue;
      EdgeCandidate c{std::min(a, u), std::max(a, u), present, {}};
      c.test = degree_state.evaluate_flip(g.degree(c.m), g.degree(c.n), present);
      if (cfg.constrained && !degree_state.accepts(c.test)) continue;
      out.push_back(c);
    }
  }
  std::sort(out.begin(), out.end(), [](const EdgeCandidate& x, const EdgeCandidate& y) {
    return std::pair(x.m, x.n) < std::pair(y.m, y.n);
  });
  return out;
}

// Feature flips on attacker nodes: every removal, and additions that pass
// the co-occurrence test (all additions when unconstrained).
inline std::vector<FeatureCandidate> candidate_features(const AttributedGraph& g, const AttackConfig& cfg,
                                                        const CooccurrenceIndex& index) {
  std::vector<NodeId> attackers = cfg.attackers;
  std::sort(attackers.begin(), attackers.end());
  attackers.erase(std::unique(attackers.begin(), attackers.end()), attackers.end());
  std::vector<FeatureCandidate> out;
  for (NodeId u : attackers) {
    std::vector<char> allowed(g.num_features(), cfg.constrained ? 0 : 1);
    if (cfg.constrained)
      for (FeatureId i : index.allowed_additions(u)) allowed[i] = 1;
    for (FeatureId i = 0; i < g.num_features(); ++i) {
      const bool present = g.has_feature(u, i);
      if (present || allowed[i]) out.push_back({u, i, present});
    }
  }
  return out;
}

// Exact surrogate loss after flipping (m,n), from the incrementally updated
// row of Â² for the target.
inline double score_structure(NodeId m, NodeId n, const AttributedGraph& g, const NormalizedAdjacency& na,
                              const Matrix& xw, NodeId v0, std::size_t c_old) {
  RowVector z = RowVector::Zero(xw.cols());
  na.visit_row_after_flip(g, v0, m, n, [&](NodeId v, double a) { z += a * xw.row(v); });
  return surrogate_loss(z, c_old);
}

// Linearized feature scores with the wrong class frozen to the current best:
// current loss + |gradient| when the gradient points in the flippable
// direction, the current loss otherwise.
struct FeatureScore {
  double score = 0.0;
  double gradient = 0.0;
  bool improving = false;
};

inline std::vector<FeatureScore> score_features(const AttributedGraph& g, const NormalizedAdjacency& na,
                                                const Matrix& weights, NodeId v0, std::size_t c_old,
                                                const RowVector& logits,
                                                const std::vector<FeatureCandidate>& candidates) {
  const double loss = surrogate_loss(logits, c_old);
  const auto c = static_cast<Eigen::Index>(best_wrong_class(logits, c_old));
  const auto co = static_cast<Eigen::Index>(c_old);
  const SparseRow& row = na.ahat2_row(v0);
  std::vector<FeatureScore> out;
  out.reserve(candidates.size());
  NodeId cached_node = std::numeric_limits<NodeId>::max();
  double coef = 0.0;
  for (const auto& fc : candidates) {
    if (fc.node != cached_node) {
      cached_node = fc.node;
      coef = lookup(row, fc.node);
    }
    const double grad = coef * (weights(fc.feature, c) - weights(fc.feature, co));
    const double x = g.has_feature(fc.node, fc.feature) ? 1.0 : 0.0;
    const bool improving = (2.0 * x - 1.0) * grad < 0.0;
    out.push_back({improving ? loss + std::abs(grad) : loss, grad, improving});
  }
  return out;
}

// Surrogate loss after a single feature flip, evaluated exactly. Agrees with
// the linearized score whenever the best wrong class does not change.
inline double exact_feature_loss(const NormalizedAdjacency& na, const Matrix& weights, NodeId v0, std::size_t c_old,
                                 const RowVector& logits, const FeatureCandidate& fc) {
  const double coef = na.ahat2(v0, fc.node);
  if (coef == 0.0) return surrogate_loss(logits, c_old);
  const double sign = fc.present ? -1.0 : 1.0;
  return surrogate_loss(logits + sign * coef * weights.row(fc.feature), c_old);
}

namespace detail {

// Mutable attack state shared by the greedy attack and FGSM.
struct AttackState {
  AttributedGraph graph;
  NormalizedAdjacency na;
  Matrix xw;
  const Matrix* weights = nullptr;
  NodeId target = 0;
  std::size_t c_old = 0;
  RowVector logits;
  DegreeTestState degree_state;
  std::set<std::pair<NodeId, NodeId>> touched_edges;
  std::set<std::pair<NodeId, FeatureId>> touched_features;

  AttackState(const AttributedGraph& g0, const SurrogateModel& model, NodeId v0, const DegreeTestConfig& dcfg)
      : graph(g0), na(g0), xw(feature_projection(g0, model.weights)), weights(&model.weights), target(v0) {
    c_old = reference_class(graph, na, model, v0);
    logits = logits_row(na.ahat2_row(v0), xw);
    degree_state = DegreeTestState(g0, dcfg);
  }

  double loss() const { return surrogate_loss(logits, c_old); }

  void apply_edge(NodeId m, NodeId n, const DegreeTestState::Evaluation& eval) {
    na.apply_edge_flip(graph, m, n);
    degree_state.commit(eval);
    touched_edges.emplace(std::min(m, n), std::max(m, n));
    logits = logits_row(na.ahat2_row(target), xw);
  }

  void apply_feature(NodeId u, FeatureId i) {
    const bool now = graph.flip_feature(u, i);
    if (now) {
      xw.row(u) += weights->row(i);
    } else {
      xw.row(u) -= weights->row(i);
    }
    touched_features.emplace(u, i);
    logits = logits_row(na.ahat2_row(target), xw);
  }
};

inline void begin_result(AttackResult& r, const AttackState& s, const AttackConfig& cfg, std::string method) {
  r.method = std::move(method);
  r.target = cfg.target;
  r.reference_class = s.c_old;
  r.budget = cfg.budget;
  r.loss_trace.push_back(s.loss());
}

inline void record_feature_audit(AttackResult& r, const CooccurrenceIndex& index, NodeId u, FeatureId i) {
  r.feature_audit.push_back({u, i, index.probability(u, i), index.sigma(u), index.addition_allowed(u, i)});
}

}  // namespace detail

// Greedy attack: at each step score every legal structure and feature flip
// against the surrogate and apply the best one.
inline AttackResult run_nettack(const AttributedGraph& g0, const SurrogateModel& model, const AttackConfig& cfg) {
  cfg.validate(g0);
  detail::AttackState s(g0, model, cfg.target, cfg.degree_test);
  const CooccurrenceIndex index(g0);
  AttackResult result;
  detail::begin_result(result, s, cfg, cfg.mode == AttackMode::Direct ? "nettack" : "nettack-in");

  while (result.log.size() < cfg.budget) {
    std::optional<EdgeCandidate> best_edge;
    double best_edge_score = -std::numeric_limits<double>::infinity();
    if (cfg.perturb_structure) {
      for (const auto& c : candidate_edges(s.graph, cfg, s.degree_state)) {
        if (s.touched_edges.count({c.m, c.n})) continue;
        const double sc = score_structure(c.m, c.n, s.graph, s.na, s.xw, cfg.target, s.c_old);
        if (sc > best_edge_score) {
          best_edge_score = sc;
          best_edge = c;
        }
      }
    }

    std::optional<FeatureCandidate> best_feat;
    double best_feat_score = -std::numeric_limits<double>::infinity();
    if (cfg.perturb_features) {
      auto cands = candidate_features(s.graph, cfg, index);
      std::erase_if(cands, [&](const FeatureCandidate& c) { return s.touched_features.count({c.node, c.feature}) > 0; });
      for (const auto& fc : cands) {
        const double sc = exact_feature_loss(s.na, model.weights, cfg.target, s.c_old, s.logits, fc);
        if (sc > best_feat_score) {
          best_feat_score = sc;
          best_feat = fc;
        }
      }
    }

    if (!best_edge && !best_feat) {
      result.starved = true;
      break;
    }
    if (best_edge && (!best_feat || best_edge_score >= best_feat_score)) {
      const auto& e = *best_edge;
      result.log.push_back(Perturbation::edge(e.m, e.n, e.present ? Direction::Remove : Direction::Insert, best_edge_score));
      s.apply_edge(e.m, e.n, e.test);
    } else {
      const auto& f = *best_feat;
      result.log.push_back(
          Perturbation::feature(f.node, f.feature, f.present ? Direction::Remove : Direction::Insert, best_feat_score));
      if (!f.present) detail::record_feature_audit(result, index, f.node, f.feature);
      s.apply_feature(f.node, f.feature);
    }
    result.loss_trace.push_back(s.loss());
    result.lambda_trace.push_back(s.degree_state.current_lambda());
  }
  return result;
}

// Random baseline: insert edges from the target to nodes of a different
// ground-truth class. Unconstrained. The model, when given, only fills the
// loss trace.
inline AttackResult rnd_baseline(const AttributedGraph& g0, const AttackConfig& cfg,
                                 const SurrogateModel* model = nullptr) {
  g0.check_node(cfg.target);
  if (!g0.is_labeled(cfg.target)) throw std::invalid_argument("rnd: target has no label");
  const NodeId v0 = cfg.target;
  std::vector<NodeId> pool;
  for (NodeId u = 0; u < g0.num_nodes(); ++u)
    if (u != v0 && g0.is_labeled(u) && g0.label(u) != g0.label(v0) && !g0.has_edge(u, v0)) pool.push_back(u);
  Rng rng(cfg.seed);
  shuffle(pool, rng);

  AttackResult result;
  result.method = "rnd";
  result.target = v0;
  result.reference_class = static_cast<std::size_t>(g0.label(v0));
  result.budget = cfg.budget;

  std::optional<detail::AttackState> s;
  if (model) {
    s.emplace(g0, *model, v0, cfg.degree_test);
    result.loss_trace.push_back(s->loss());
  }
  DegreeTestState degree_state(g0, cfg.degree_test);
  AttributedGraph g = g0;
  for (std::size_t k = 0; k < pool.size() && result.log.size() < cfg.budget; ++k) {
    const NodeId u = pool[k];
    const auto eval = degree_state.evaluate_flip(g.degree(v0), g.degree(u), false);
    result.log.push_back(Perturbation::edge(v0, u, Direction::Insert));
    g.flip_edge(v0, u);
    degree_state.commit(eval);
    if (s) {
      s->apply_edge(v0, u, eval);
      result.log.back().score = s->loss();
      result.loss_trace.push_back(s->loss());
    }
    result.lambda_trace.push_back(degree_state.current_lambda());
  }
  result.starved = result.log.size() < cfg.budget;
  return result;
}

struct FgsmOptions {
  bool structure = true;
  bool features = true;
};

// Gradient of the surrogate loss (wrong class frozen at the current best)
// with respect to the symmetric adjacency pair (v0, q), treating a_{v0 q} as
// continuous and accounting for the induced change of D̃.
inline std::vector<double> structure_gradient(const AttributedGraph& g, const NormalizedAdjacency& na,
                                              const Matrix& xw, NodeId v0, std::size_t c_old,
                                              const RowVector& logits) {
  const auto c = static_cast<Eigen::Index>(best_wrong_class(logits, c_old));
  const auto co = static_cast<Eigen::Index>(c_old);
  const std::size_t n = g.num_nodes();
  std::vector<double> y(n), r(n, 0.0);
  for (NodeId v = 0; v < n; ++v) y[v] = xw(v, c) - xw(v, co);
  for (NodeId v = 0; v < n; ++v)
    for (const auto& [k, a] : na.ahat_row(v)) r[v] += a * y[k];
  const double loss = logits[c] - logits[co];
  const double d0 = na.dtilde(v0);
  const double a00_sq = na.ahat2(v0, v0);
  const double shared = -r[v0] / (d0 * d0) - 0.5 * (loss + y[v0] * a00_sq) / d0;

  std::vector<double> grad(n, 0.0);
  for (NodeId q = 0; q < n; ++q) {
    if (q == v0) continue;
    const double dq = na.dtilde(q);
    const double a_q0 = na.ahat(q, v0);
    const double direct = (y[q] / d0 + r[q] + a_q0 * y[v0]) / std::sqrt(d0 * dq);
    grad[q] = direct + shared - r[q] * a_q0 / dq - 0.5 * y[q] * na.ahat2(q, v0) / dq;
  }
  return grad;
}

// FGSM baseline on the target's own adjacency row and feature row: flip the
// entry whose gradient has the largest magnitude in a flippable direction.
inline AttackResult fgsm_baseline(const AttributedGraph& g0, const SurrogateModel& model, const AttackConfig& cfg,
                                  FgsmOptions opts = {}) {
  g0.check_node(cfg.target);
  if (cfg.mode != AttackMode::Direct) throw std::invalid_argument("fgsm: direct attacks only");
  const NodeId v0 = cfg.target;
  detail::AttackState s(g0, model, v0, cfg.degree_test);
  AttackResult result;
  detail::begin_result(result, s, cfg, "fgsm");
  const auto& w = model.weights;

  while (result.log.size() < cfg.budget) {
    double best_mag = 0.0;
    std::optional<Perturbation> best;
    if (opts.structure) {
      const auto grad = structure_gradient(s.graph, s.na, s.xw, v0, s.c_old, s.logits);
      for (NodeId q = 0; q < s.graph.num_nodes(); ++q) {
        if (q == v0 || s.touched_edges.count({std::min(q, v0), std::max(q, v0)})) continue;
        const bool present = s.graph.has_edge(v0, q);
        if (present && s.graph.degree(v0) == 1) continue;
        if (present ? grad[q] >= 0.0 : grad[q] <= 0.0) continue;
        if (std::abs(grad[q]) > best_mag) {
          best_mag = std::abs(grad[q]);
          best = Perturbation::edge(v0, q, present ? Direction::Remove : Direction::Insert);
        }
      }
    }
    if (opts.features) {
      const auto c = static_cast<Eigen::Index>(best_wrong_class(s.logits, s.c_old));
      const auto co = static_cast<Eigen::Index>(s.c_old);
      const double coef = s.na.ahat2(v0, v0);
      for (FeatureId i = 0; i < s.graph.num_features(); ++i) {
        if (s.touched_features.count({v0, i})) continue;
        const double grad = coef * (w(i, c) - w(i, co));
        const bool present = s.graph.has_feature(v0, i);
        if (present ? grad >= 0.0 : grad <= 0.0) continue;
        if (std::abs(grad) > best_mag) {
          best_mag = std::abs(grad);
          best = Perturbation::feature(v0, i, present ? Direction::Remove : Direction::Insert);
        }
      }
    }
    if (!best) {
      result.starved = true;
      break;
    }
    if (best->kind == PerturbationKind::Edge) {
      const NodeId q = best->node == v0 ? best->second : best->node;
      const auto eval = s.degree_state.evaluate_flip(s.graph.degree(v0), s.graph.degree(q), s.graph.has_edge(v0, q));
      s.apply_edge(v0, q, eval);
    } else {
      s.apply_feature(v0, best->second);
    }
    best->score = s.loss();
    result.log.push_back(*best);
    result.loss_trace.push_back(s.loss());
    result.lambda_trace.push_back(s.degree_state.current_lambda());
  }
  return result;
}

inline AttributedGraph apply_log(const AttributedGraph& g0, const std::vector<Perturbation>& log) {
  AttributedGraph g = g0;
  for (const auto& p : log) apply(g, p);
  return g;
}

// From-scratch re-check of every step of a perturbation log against the
// degree test and the co-occurrence test.
struct ConstraintReplay {
  bool all_passed = true;
  std::vector<double> lambda_trace;
  std::vector<bool> step_passed;
};

inline ConstraintReplay replay_constraints(const AttributedGraph& g0, const std::vector<Perturbation>& log,
                                           const DegreeTestConfig& dcfg) {
  ConstraintReplay out;
  const CooccurrenceIndex index(g0);
  const auto clean = summarize_degrees(g0, dcfg.d_min);
  AttributedGraph g = g0;
  for (const auto& p : log) {
    apply(g, p);
    const double lambda = lambda_statistic(clean, summarize_degrees(g, dcfg.d_min), dcfg.d_min, dcfg.form);
    bool ok = lambda < dcfg.tau;
    if (p.kind == PerturbationKind::Feature && p.direction == Direction::Insert)
      ok = ok && index.addition_allowed(p.node, p.second);
    out.lambda_trace.push_back(lambda);
    out.step_passed.push_back(ok);
    out.all_passed = out.all_passed && ok;
  }
  return out;
}

// Surrogate loss of the target after each prefix of a log.
inline std::vector<double> replay_loss_trace(const AttributedGraph& g0, const SurrogateModel& model, NodeId v0,
                                             const std::vector<Perturbation>& log) {
  detail::AttackState s(g0, model, v0, DegreeTestConfig{});
  std::vector<double> trace{s.loss()};
  for (const auto& p : log) {
    if (p.kind == PerturbationKind::Edge) {
      s.na.apply_edge_flip(s.graph, p.node, p.second);
      s.logits = logits_row(s.na.ahat2_row(v0), s.xw);
    } else {
      s.apply_feature(p.node, p.second);
    }
    trace.push_back(s.loss());
  }
  return trace;
}

inline nlohmann::ordered_json to_json(const Perturbation& p) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(p.kind);
  j["direction"] = to_string(p.direction);
  j["u"] = p.node;
  j[p.kind == PerturbationKind::Edge ? "v" : "feature"] = p.second;
  j["score"] = p.score;
  return j;
}

inline Perturbation perturbation_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  const auto dir = j.at("direction").get<std::string>() == "insert" ? Direction::Insert : Direction::Remove;
  const auto u = j.at("u").get<NodeId>();
  const double score = j.value("score", 0.0);
  if (kind == "edge") return Perturbation::edge(u, j.at("v").get<NodeId>(), dir, score);
  if (kind == "feature") return Perturbation::feature(u, j.at("feature").get<FeatureId>(), dir, score);
  throw std::invalid_argument("perturbation: unknown kind " + kind);
}

inline nlohmann::ordered_json to_json(const AttackResult& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["target"] = r.target;
  j["reference_class"] = r.reference_class;
  j["budget"] = r.budget;
  j["starved"] = r.starved;
  auto& log = j["perturbations"] = nlohmann::ordered_json::array();
  for (const auto& p : r.log) log.push_back(to_json(p));
  j["loss_trace"] = r.loss_trace;
  j["final_loss"] = r.final_loss();
  auto& audit = j["constraint_audit"];
  audit["lambda_trace"] = r.lambda_trace;
  auto& feats = audit["feature_additions"] = nlohmann::ordered_json::array();
  for (const auto& f : r.feature_audit)
    feats.push_back({{"u", f.node}, {"feature", f.feature}, {"probability", f.probability}, {"sigma", f.sigma},
                     {"allowed", f.allowed}});
  return j;
}

inline std::vector<Perturbation> perturbations_from_json(const nlohmann::json& j) {
  std::vector<Perturbation> out;
  for (const auto& p : j.at("perturbations")) out.push_back(perturbation_from_json(p));
  return out;
}

}  // namespace nettack
