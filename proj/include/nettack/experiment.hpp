#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"
#include "nettack/attack.hpp"
#include "nettack/dataset_io.hpp"
#include "nettack/gcn.hpp"
#include "nettack/log.hpp"
#include "nettack/parallel.hpp"
#include "nettack/surrogate.hpp"
#include "nettack/synthetic.hpp"

namespace nettack {

// ---------------------------------------------------------------------------
// Hashing and formatting helpers

inline std::string sha1_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw std::runtime_error("sha1: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

// Same digest git assigns to a blob with these contents.
inline std::string git_blob_hash(const std::string& contents) {
  std::string blob = "blob " + std::to_string(contents.size());
  blob.push_back('\0');
  return sha1_hex(blob + contents);
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Shortest representation that round-trips, fixed across runs.
inline std::string fmt_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// ---------------------------------------------------------------------------
// Target selection

struct TargetCounts {
  std::size_t high = 10;
  std::size_t low = 10;
  std::size_t random = 20;
  std::size_t total() const { return high + low + random; }
};

struct TargetSelection {
  std::vector<NodeId> high;    // largest surrogate margin first
  std::vector<NodeId> low;     // smallest surrogate margin first
  std::vector<NodeId> random;  // sorted

  std::vector<NodeId> all() const {
    std::vector<NodeId> out = high;
    out.insert(out.end(), low.begin(), low.end());
    out.insert(out.end(), random.begin(), random.end());
    return out;
  }

  std::string group_of(NodeId v) const {
    if (std::find(high.begin(), high.end(), v) != high.end()) return "high";
    if (std::find(low.begin(), low.end(), v) != low.end()) return "low";
    return "random";
  }
};

// Among the correctly classified unlabeled nodes (surrogate prediction equals
// the ground truth): the highest-margin, the lowest-margin, and a uniform
// sample of the rest. Margins are taken on the surrogate's softmax output;
// ties go to the smaller id.
inline TargetSelection select_targets(const AttributedGraph& g, const NormalizedAdjacency& na,
                                      const SurrogateModel& model, const DataSplit& split, std::uint64_t seed,
                                      const TargetCounts& counts = {}) {
  Matrix probs = surrogate_logits(g, na, model);
  softmax_rows(probs);
  struct Scored {
    NodeId node;
    double margin;
  };
  std::vector<Scored> correct;
  for (NodeId v : split.unlabeled) {
    if (!g.is_labeled(v)) continue;
    const auto c = static_cast<std::size_t>(g.label(v));
    const double mg = margin(probs.row(v), c);
    if (argmax(probs.row(v)) == c && mg > 0.0) correct.push_back({v, mg});
  }
  if (correct.size() < counts.total())
    warn("select_targets: only " + std::to_string(correct.size()) + " correctly classified test nodes, wanted " +
         std::to_string(counts.total()));

  std::vector<Scored> by_high = correct;
  std::sort(by_high.begin(), by_high.end(), [](const Scored& a, const Scored& b) {
    return a.margin != b.margin ? a.margin > b.margin : a.node < b.node;
  });
  TargetSelection sel;
  std::vector<char> used(g.num_nodes(), 0);
  for (std::size_t k = 0; k < by_high.size() && sel.high.size() < counts.high; ++k) {
    sel.high.push_back(by_high[k].node);
    used[by_high[k].node] = 1;
  }
  std::vector<Scored> by_low = correct;
  std::sort(by_low.begin(), by_low.end(), [](const Scored& a, const Scored& b) {
    return a.margin != b.margin ? a.margin < b.margin : a.node < b.node;
  });
  for (std::size_t k = 0; k < by_low.size() && sel.low.size() < counts.low; ++k) {
    if (used[by_low[k].node]) continue;
    sel.low.push_back(by_low[k].node);
    used[by_low[k].node] = 1;
  }
  std::vector<NodeId> rest;
  for (const auto& s : correct)
    if (!used[s.node]) rest.push_back(s.node);
  Rng rng(derive_seed(seed, 0x7a7));
  shuffle(rest, rng);
  rest.resize(std::min(rest.size(), counts.random));
  std::sort(rest.begin(), rest.end());
  sel.random = std::move(rest);
  return sel;
}

// ---------------------------------------------------------------------------
// Limited knowledge

// The ceil(fraction * N) nodes closest to v0 by BFS distance; the last,
// partially taken ring contributes its smallest ids. Unreachable nodes count
// as farthest and are taken by id.
inline SubgraphResult limited_knowledge_subgraph(const AttributedGraph& g, NodeId v0, double fraction) {
  g.check_node(v0);
  if (!(fraction > 0.0) || fraction > 1.0)
    throw std::invalid_argument("limited_knowledge_subgraph: fraction must lie in (0, 1]");
  const std::size_t n = g.num_nodes();
  const auto want = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  std::vector<long> dist(n, -1);
  std::vector<NodeId> frontier{v0};
  dist[v0] = 0;
  std::vector<NodeId> chosen;
  long depth = 0;
  while (!frontier.empty() && chosen.size() < want) {
    std::sort(frontier.begin(), frontier.end());
    for (NodeId u : frontier) {
      if (chosen.size() == want) break;
      chosen.push_back(u);
    }
    std::vector<NodeId> next;
    for (NodeId u : frontier)
      for (NodeId w : g.neighbors(u))
        if (dist[w] < 0) {
          dist[w] = depth + 1;
          next.push_back(w);
        }
    frontier = std::move(next);
    ++depth;
  }
  for (NodeId u = 0; u < n && chosen.size() < want; ++u)
    if (dist[u] < 0) chosen.push_back(u);
  return induced_subgraph(g, std::move(chosen));
}

// Perturbations of a subgraph attack expressed in full-graph ids.
inline std::vector<Perturbation> lift_perturbations(const std::vector<Perturbation>& log,
                                                    const std::vector<NodeId>& mapping) {
  std::vector<Perturbation> out;
  for (const auto& p : log) {
    if (p.kind == PerturbationKind::Edge)
      out.push_back(Perturbation::edge(mapping.at(p.node), mapping.at(p.second), p.direction, p.score));
    else
      out.push_back(Perturbation::feature(mapping.at(p.node), p.second, p.direction, p.score));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plans and run records

struct ExperimentPlan {
  std::optional<std::string> bundle;  // dataset directory; synthetic graph otherwise
  bool use_lcc = true;
  PlantedPartitionConfig synthetic;
  std::vector<std::uint64_t> split_seeds{1, 2, 3, 4, 5};
  std::vector<std::string> attacks{"nettack", "nettack-in", "rnd", "fgsm", "nettack-u"};
  TargetCounts targets;
  std::size_t influencers = 5;
  std::size_t budget_offset = 2;  // budget = clean degree + offset
  GcnConfig victim;
  SurrogateTrainConfig surrogate;
  bool evasion = true;
  bool poisoning = true;
  std::size_t poisoning_runs = 10;
  DegreeTestConfig degree_test;
  FgsmOptions fgsm;
  bool limited_knowledge = false;
  std::vector<double> limited_fractions{0.1, 0.25, 0.5, 0.75, 1.0};
  std::size_t workers = 0;  // 0: NETTACK_WORKERS or hardware concurrency
};

inline const std::vector<std::string>& known_attacks() {
  static const std::vector<std::string> names{"nettack", "nettack-in", "rnd", "fgsm", "nettack-u"};
  return names;
}

inline nlohmann::ordered_json to_json(const ExperimentPlan& p) {
  nlohmann::ordered_json j;
  auto& ds = j["dataset"];
  if (p.bundle) {
    ds["bundle"] = *p.bundle;
    ds["lcc"] = p.use_lcc;
  } else {
    const auto& s = p.synthetic;
    ds["synthetic"] = {{"n_nodes", s.n_nodes},       {"n_classes", s.n_classes},
                       {"n_features", s.n_features}, {"mean_degree", s.mean_degree},
                       {"homophily", s.homophily},   {"degree_exponent", s.degree_exponent},
                       {"feature_on", s.feature_on}, {"feature_noise", s.feature_noise},
                       {"seed", s.seed}};
  }
  j["split_seeds"] = p.split_seeds;
  j["attacks"] = p.attacks;
  j["targets"] = {{"high", p.targets.high}, {"low", p.targets.low}, {"random", p.targets.random}};
  j["influencers"] = p.influencers;
  j["budget_offset"] = p.budget_offset;
  j["victim"] = {{"hidden", p.victim.hidden},         {"learning_rate", p.victim.learning_rate},
                 {"max_epochs", p.victim.max_epochs}, {"patience", p.victim.patience},
                 {"dropout", p.victim.dropout},       {"weight_decay", p.victim.weight_decay}};
  j["surrogate"] = {{"learning_rate", p.surrogate.learning_rate},
                    {"max_epochs", p.surrogate.max_epochs},
                    {"patience", p.surrogate.patience}};
  j["evaluate"] = {{"evasion", p.evasion}, {"poisoning", p.poisoning}, {"poisoning_runs", p.poisoning_runs}};
  j["degree_test"] = {{"d_min", p.degree_test.d_min},
                      {"tau", p.degree_test.tau},
                      {"eq7_as_printed", p.degree_test.form == LogLikelihoodForm::AsPrinted}};
  j["fgsm"] = {{"structure", p.fgsm.structure}, {"features", p.fgsm.features}};
  j["limited_knowledge"] = {{"enabled", p.limited_knowledge}, {"fractions", p.limited_fractions}};
  j["workers"] = p.workers;
  return j;
}

inline ExperimentPlan plan_from_json(const nlohmann::json& j) {
  ExperimentPlan p;
  if (j.contains("dataset")) {
    const auto& ds = j.at("dataset");
    if (ds.contains("bundle")) {
      p.bundle = ds.at("bundle").get<std::string>();
      p.use_lcc = ds.value("lcc", true);
    } else if (ds.contains("synthetic")) {
      const auto& s = ds.at("synthetic");
      auto& c = p.synthetic;
      c.n_nodes = s.value("n_nodes", c.n_nodes);
      c.n_classes = s.value("n_classes", c.n_classes);
      c.n_features = s.value("n_features", c.n_features);
      c.mean_degree = s.value("mean_degree", c.mean_degree);
      c.homophily = s.value("homophily", c.homophily);
      c.degree_exponent = s.value("degree_exponent", c.degree_exponent);
      c.feature_on = s.value("feature_on", c.feature_on);
      c.feature_noise = s.value("feature_noise", c.feature_noise);
      c.seed = s.value("seed", c.seed);
    } else {
      throw std::invalid_argument("plan: dataset needs \"bundle\" or \"synthetic\"");
    }
  }
  if (j.contains("split_seeds")) {
    p.split_seeds = j.at("split_seeds").get<std::vector<std::uint64_t>>();
  } else if (j.contains("n_splits")) {
    p.split_seeds.clear();
    for (std::uint64_t s = 1; s <= j.at("n_splits").get<std::uint64_t>(); ++s) p.split_seeds.push_back(s);
  }
  if (j.contains("attacks")) p.attacks = j.at("attacks").get<std::vector<std::string>>();
  for (const auto& a : p.attacks)
    if (std::find(known_attacks().begin(), known_attacks().end(), a) == known_attacks().end())
      throw std::invalid_argument("plan: unknown attack \"" + a + "\"");
  if (j.contains("targets")) {
    const auto& t = j.at("targets");
    p.targets.high = t.value("high", p.targets.high);
    p.targets.low = t.value("low", p.targets.low);
    p.targets.random = t.value("random", p.targets.random);
  }
  p.influencers = j.value("influencers", p.influencers);
  p.budget_offset = j.value("budget_offset", p.budget_offset);
  if (j.contains("victim")) {
    const auto& v = j.at("victim");
    p.victim.hidden = v.value("hidden", p.victim.hidden);
    p.victim.learning_rate = v.value("learning_rate", p.victim.learning_rate);
    p.victim.max_epochs = v.value("max_epochs", p.victim.max_epochs);
    p.victim.patience = v.value("patience", p.victim.patience);
    p.victim.dropout = v.value("dropout", p.victim.dropout);
    p.victim.weight_decay = v.value("weight_decay", p.victim.weight_decay);
  }
  if (j.contains("surrogate")) {
    const auto& s = j.at("surrogate");
    p.surrogate.learning_rate = s.value("learning_rate", p.surrogate.learning_rate);
    p.surrogate.max_epochs = s.value("max_epochs", p.surrogate.max_epochs);
    p.surrogate.patience = s.value("patience", p.surrogate.patience);
  }
  if (j.contains("evaluate")) {
    const auto& e = j.at("evaluate");
    p.evasion = e.value("evasion", p.evasion);
    p.poisoning = e.value("poisoning", p.poisoning);
    p.poisoning_runs = e.value("poisoning_runs", p.poisoning_runs);
  }
  if (j.contains("degree_test")) {
    const auto& d = j.at("degree_test");
    p.degree_test.d_min = d.value("d_min", p.degree_test.d_min);
    p.degree_test.tau = d.value("tau", p.degree_test.tau);
    if (d.value("eq7_as_printed", false)) p.degree_test.form = LogLikelihoodForm::AsPrinted;
  }
  if (j.contains("fgsm")) {
    p.fgsm.structure = j.at("fgsm").value("structure", true);
    p.fgsm.features = j.at("fgsm").value("features", true);
  }
  if (j.contains("limited_knowledge")) {
    const auto& l = j.at("limited_knowledge");
    p.limited_knowledge = l.value("enabled", true);
    if (l.contains("fractions")) p.limited_fractions = l.at("fractions").get<std::vector<double>>();
  }
  p.workers = j.value("workers", p.workers);
  if (p.split_seeds.empty()) throw std::invalid_argument("plan: no split seeds");
  if (p.poisoning && p.poisoning_runs < 1) throw std::invalid_argument("plan: poisoning_runs must be >= 1");
  return p;
}

// One (split, attack, target) job.
struct RunRecord {
  std::uint64_t split_seed = 0;
  std::string attack;  // "clean" for the unattacked baseline
  NodeId target = 0;
  std::string group;
  std::size_t degree = 0;
  std::size_t budget = 0;
  std::size_t perturbations = 0;
  bool starved = false;
  double surrogate_loss = 0.0;  // after the attack
  double final_lambda = 0.0;    // from-scratch, on the attacked graph
  bool constraints_ok = true;   // from-scratch replay of every step
  double evasion_margin = std::numeric_limits<double>::quiet_NaN();
  double evasion_correct = std::numeric_limits<double>::quiet_NaN();
  double poisoning_margin = std::numeric_limits<double>::quiet_NaN();
  double poisoning_correct = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> loss_trace;
  std::string error;

  std::string run_id() const {
    return "s" + std::to_string(split_seed) + "-" + attack + "-v" + std::to_string(target);
  }
};

inline nlohmann::ordered_json to_json(const RunRecord& r) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::ordered_json(x) : nlohmann::ordered_json(); };
  nlohmann::ordered_json j;
  j["run_id"] = r.run_id();
  j["split_seed"] = r.split_seed;
  j["attack"] = r.attack;
  j["target"] = r.target;
  j["group"] = r.group;
  j["degree"] = r.degree;
  j["budget"] = r.budget;
  j["perturbations"] = r.perturbations;
  j["starved"] = r.starved;
  j["surrogate_loss"] = num(r.surrogate_loss);
  j["final_lambda"] = num(r.final_lambda);
  j["constraints_ok"] = r.constraints_ok;
  j["evasion_margin"] = num(r.evasion_margin);
  j["evasion_correct"] = num(r.evasion_correct);
  j["poisoning_margin"] = num(r.poisoning_margin);
  j["poisoning_correct"] = num(r.poisoning_correct);
  j["loss_trace"] = r.loss_trace;
  j["error"] = r.error;
  return j;
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
  auto num = [&](const char* k) {
    return j.contains(k) && j.at(k).is_number() ? j.at(k).get<double>() : std::numeric_limits<double>::quiet_NaN();
  };
  RunRecord r;
  r.split_seed = j.at("split_seed").get<std::uint64_t>();
  r.attack = j.at("attack").get<std::string>();
  r.target = j.at("target").get<NodeId>();
  r.group = j.value("group", "");
  r.degree = j.value("degree", std::size_t{0});
  r.budget = j.value("budget", std::size_t{0});
  r.perturbations = j.value("perturbations", std::size_t{0});
  r.starved = j.value("starved", false);
  r.surrogate_loss = num("surrogate_loss");
  r.final_lambda = num("final_lambda");
  r.constraints_ok = j.value("constraints_ok", true);
  r.evasion_margin = num("evasion_margin");
  r.evasion_correct = num("evasion_correct");
  r.poisoning_margin = num("poisoning_margin");
  r.poisoning_correct = num("poisoning_correct");
  if (j.contains("loss_trace")) r.loss_trace = j.at("loss_trace").get<std::vector<double>>();
  r.error = j.value("error", "");
  return r;
}

// ---------------------------------------------------------------------------
// Aggregation

struct SummaryRow {
  std::string attack;
  std::size_t runs = 0;
  std::size_t failed = 0;
  double evasion_fraction_correct = std::numeric_limits<double>::quiet_NaN();
  double evasion_mean_margin = std::numeric_limits<double>::quiet_NaN();
  double poisoning_fraction_correct = std::numeric_limits<double>::quiet_NaN();
  double poisoning_mean_margin = std::numeric_limits<double>::quiet_NaN();
  double mean_perturbations = 0.0;
};

namespace detail {

struct Mean {
  double sum = 0.0;
  std::size_t n = 0;
  void add(double x) {
    if (std::isfinite(x)) {
      sum += x;
      ++n;
    }
  }
  double value() const { return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN(); }
};

// Attack names in roster order with "clean" first, then anything else seen.
inline std::vector<std::string> attack_order(const std::vector<RunRecord>& records) {
  std::vector<std::string> order{"clean"};
  for (const auto& a : known_attacks()) order.push_back(a);
  for (const auto& r : records)
    if (std::find(order.begin(), order.end(), r.attack) == order.end()) order.push_back(r.attack);
  std::vector<std::string> present;
  for (const auto& a : order)
    if (std::any_of(records.begin(), records.end(), [&](const RunRecord& r) { return r.attack == a; }))
      present.push_back(a);
  return present;
}

}  // namespace detail

inline std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records) {
  std::vector<SummaryRow> rows;
  for (const auto& a : detail::attack_order(records)) {
    SummaryRow row;
    row.attack = a;
    detail::Mean ec, em, pc, pm, np;
    for (const auto& r : records) {
      if (r.attack != a) continue;
      ++row.runs;
      if (!r.error.empty()) {
        ++row.failed;
        continue;
      }
      ec.add(r.evasion_correct);
      em.add(r.evasion_margin);
      pc.add(r.poisoning_correct);
      pm.add(r.poisoning_margin);
      np.add(static_cast<double>(r.perturbations));
    }
    row.evasion_fraction_correct = ec.value();
    row.evasion_mean_margin = em.value();
    row.poisoning_fraction_correct = pc.value();
    row.poisoning_mean_margin = pm.value();
    row.mean_perturbations = np.n ? np.value() : 0.0;
    rows.push_back(row);
  }
  return rows;
}

struct DegreeBucket {
  std::size_t lo;
  std::size_t hi;  // inclusive; SIZE_MAX for unbounded
  std::string label;
};

inline const std::vector<DegreeBucket>& degree_buckets() {
  static const std::vector<DegreeBucket> b{{1, 5, "[1;5]"},
                                           {6, 10, "[6;10]"},
                                           {11, 20, "[11;20]"},
                                           {21, 100, "[21;100]"},
                                           {101, SIZE_MAX, "[100;inf)"}};
  return b;
}

struct BucketRow {
  std::string bucket;
  std::string attack;
  std::size_t targets = 0;
  double fraction_correct = 0.0;  // poisoning when available, else evasion
};

// Fraction correct per (degree bucket, attack); empty buckets are omitted.
inline std::vector<BucketRow> degree_bucket_report(const std::vector<RunRecord>& records) {
  std::vector<BucketRow> out;
  for (const auto& b : degree_buckets())
    for (const auto& a : detail::attack_order(records)) {
      detail::Mean m;
      for (const auto& r : records) {
        if (r.attack != a || !r.error.empty() || r.degree < b.lo || r.degree > b.hi) continue;
        m.add(std::isfinite(r.poisoning_correct) ? r.poisoning_correct : r.evasion_correct);
      }
      if (m.n == 0) continue;
      out.push_back({b.label, a, m.n, m.value()});
    }
  return out;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string s =
      "attack,runs,failed,evasion_fraction_correct,evasion_mean_margin,poisoning_fraction_correct,"
      "poisoning_mean_margin,mean_perturbations\n";
  for (const auto& r : rows)
    s += csv_escape(r.attack) + "," + std::to_string(r.runs) + "," + std::to_string(r.failed) + "," +
         fmt_double(r.evasion_fraction_correct) + "," + fmt_double(r.evasion_mean_margin) + "," +
         fmt_double(r.poisoning_fraction_correct) + "," + fmt_double(r.poisoning_mean_margin) + "," +
         fmt_double(r.mean_perturbations) + "\n";
  return s;
}

inline std::string runs_csv(const std::vector<RunRecord>& records) {
  std::string s =
      "run_id,split_seed,attack,target,group,degree,budget,perturbations,starved,surrogate_loss,final_lambda,"
      "constraints_ok,evasion_margin,evasion_correct,poisoning_margin,poisoning_correct,error\n";
  for (const auto& r : records)
    s += r.run_id() + "," + std::to_string(r.split_seed) + "," + csv_escape(r.attack) + "," +
         std::to_string(r.target) + "," + r.group + "," + std::to_string(r.degree) + "," +
         std::to_string(r.budget) + "," + std::to_string(r.perturbations) + "," + (r.starved ? "1" : "0") + "," +
         fmt_double(r.surrogate_loss) + "," + fmt_double(r.final_lambda) + "," + (r.constraints_ok ? "1" : "0") +
         "," + fmt_double(r.evasion_margin) + "," + fmt_double(r.evasion_correct) + "," +
         fmt_double(r.poisoning_margin) + "," + fmt_double(r.poisoning_correct) + "," + csv_escape(r.error) + "\n";
  return s;
}

inline std::string buckets_csv(const std::vector<BucketRow>& rows) {
  std::string s = "bucket,attack,targets,fraction_correct\n";
  for (const auto& r : rows)
    s += r.bucket + "," + csv_escape(r.attack) + "," + std::to_string(r.targets) + "," + fmt_double(r.fraction_correct) +
         "\n";
  return s;
}

// Surrogate loss against the number of applied perturbations.
inline std::string loss_trace_csv(const std::vector<RunRecord>& records) {
  std::string s = "run_id,attack,target,step,surrogate_loss\n";
  for (const auto& r : records)
    for (std::size_t k = 0; k < r.loss_trace.size(); ++k)
      s += r.run_id() + "," + csv_escape(r.attack) + "," + std::to_string(r.target) + "," + std::to_string(k) + "," +
           fmt_double(r.loss_trace[k]) + "\n";
  return s;
}

// Table-3 shape: one row per attack with GCN fractions correct.
inline std::string table3_csv(const std::vector<RunRecord>& records) {
  std::string s = "attack,poisoning_fraction_correct,evasion_fraction_correct,targets\n";
  for (const auto& r : summarize(records))
    s += csv_escape(r.attack) + "," + fmt_double(r.poisoning_fraction_correct) + "," +
         fmt_double(r.evasion_fraction_correct) + "," + std::to_string(r.runs - r.failed) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Running a plan

struct ExperimentResult {
  std::vector<RunRecord> records;
  nlohmann::ordered_json manifest;
};

struct LoadedDataset {
  AttributedGraph graph;
  std::string content_hash;  // over the input files, or the synthetic config
};

inline LoadedDataset load_plan_dataset(const ExperimentPlan& plan) {
  if (plan.bundle) {
    const fs::path dir(*plan.bundle);
    std::string combined;
    for (const char* f : {"meta.json", "edges.tsv", "features.tsv", "labels.tsv"})
      if (fs::exists(dir / f)) combined += std::string(f) + " " + git_blob_hash(read_file(dir / f)) + "\n";
    auto g = load_bundle(dir).graph;
    if (plan.use_lcc) g = extract_lcc(g).graph;
    return {std::move(g), git_blob_hash(combined)};
  }
  auto j = to_json(plan).at("dataset");
  return {planted_partition(plan.synthetic), git_blob_hash(j.dump())};
}

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ull;
  return h;
}

struct SplitContext {
  std::uint64_t seed = 0;
  DataSplit split;
  SurrogateModel surrogate;
  TargetSelection targets;
  GcnModel clean_victim;
  MarginReport clean_poisoning;
};

inline void evaluate_into(RunRecord& rec, const ExperimentPlan& plan, const SplitContext& ctx,
                          const AttributedGraph& attacked) {
  const std::vector<NodeId> one{rec.target};
  if (plan.evasion) {
    const auto ev = evasion_eval(ctx.clean_victim, attacked, one);
    rec.evasion_margin = ev.mean_margin;
    rec.evasion_correct = ev.fraction_correct;
  }
  if (plan.poisoning) {
    const auto po = poisoning_eval(attacked, ctx.split, one, plan.poisoning_runs,
                                   derive_seed(ctx.seed, 0x9015), plan.victim, 1);
    rec.poisoning_margin = po.mean_margin;
    rec.poisoning_correct = po.fraction_correct;
  }
}

inline AttackResult run_named_attack(const std::string& name, const AttributedGraph& g, const SurrogateModel& model,
                                     NodeId v0, std::size_t budget, const ExperimentPlan& plan,
                                     std::uint64_t seed) {
  AttackConfig cfg = AttackConfig::direct(v0, budget);
  cfg.degree_test = plan.degree_test;
  cfg.seed = seed;
  if (name == "nettack") return run_nettack(g, model, cfg);
  if (name == "nettack-u") {
    cfg.constrained = false;
    auto r = run_nettack(g, model, cfg);
    r.method = "nettack-u";
    return r;
  }
  if (name == "nettack-in") {
    Rng rng(seed);
    cfg.mode = AttackMode::Influencer;
    cfg.attackers = pick_influencers(g, v0, plan.influencers, rng);
    if (cfg.attackers.empty()) throw std::runtime_error("no influencer candidates around the target");
    return run_nettack(g, model, cfg);
  }
  if (name == "rnd") return rnd_baseline(g, cfg, &model);
  if (name == "fgsm") return fgsm_baseline(g, model, cfg, plan.fgsm);
  throw std::invalid_argument("unknown attack " + name);
}

}  // namespace detail

// Runs every (split, attack, target) job of the plan. Failures are recorded
// in the run's error field and do not stop the remaining jobs.
inline ExperimentResult run_experiment(const ExperimentPlan& plan, const AttributedGraph& g,
                                       const std::string& input_hash = "") {
  const std::size_t workers = plan.workers ? plan.workers : default_workers();
  std::vector<detail::SplitContext> contexts(plan.split_seeds.size());
  std::vector<std::string> split_errors(plan.split_seeds.size());
  parallel_for(contexts.size(), workers, [&](std::size_t s) {
    auto& ctx = contexts[s];
    ctx.seed = plan.split_seeds[s];
    try {
      ctx.split = make_split(g, ctx.seed);
      const NormalizedAdjacency na(g);
      ctx.surrogate = train_surrogate(g, na, ctx.split, plan.surrogate);
      ctx.targets = select_targets(g, na, ctx.surrogate, ctx.split, ctx.seed, plan.targets);
      if (plan.evasion) ctx.clean_victim = train_gcn(g, ctx.split, derive_seed(ctx.seed, 0xc1ea), plan.victim);
      if (plan.poisoning)
        ctx.clean_poisoning = poisoning_eval(g, ctx.split, ctx.targets.all(), plan.poisoning_runs,
                                             derive_seed(ctx.seed, 0x9015), plan.victim, 1);
    } catch (const std::exception& e) {
      split_errors[s] = e.what();
    }
  });

  struct Job {
    std::size_t split;
    std::string attack;
    NodeId target;
    double fraction;  // limited knowledge; 0 when unused
  };
  std::vector<Job> jobs;
  std::vector<RunRecord> records;
  for (std::size_t s = 0; s < contexts.size(); ++s) {
    if (!split_errors[s].empty()) {
      RunRecord r;
      r.split_seed = plan.split_seeds[s];
      r.attack = "clean";
      r.error = "split setup failed: " + split_errors[s];
      records.push_back(r);
      continue;
    }
    const auto& ctx = contexts[s];
    const auto all = ctx.targets.all();
    const NormalizedAdjacency na(g);
    for (std::size_t t = 0; t < all.size(); ++t) {
      RunRecord r;
      r.split_seed = ctx.seed;
      r.attack = "clean";
      r.target = all[t];
      r.group = ctx.targets.group_of(all[t]);
      r.degree = g.degree(all[t]);
      r.budget = 0;
      r.final_lambda = 0.0;
      r.surrogate_loss = surrogate_loss(g, na, ctx.surrogate, all[t], static_cast<std::size_t>(g.label(all[t])));
      if (plan.evasion) {
        const auto ev = evasion_eval(ctx.clean_victim, g, {all[t]});
        r.evasion_margin = ev.mean_margin;
        r.evasion_correct = ev.fraction_correct;
      }
      if (plan.poisoning) {
        r.poisoning_margin = ctx.clean_poisoning.targets[t].margin;
        r.poisoning_correct = ctx.clean_poisoning.targets[t].correct_rate;
      }
      records.push_back(r);
    }
    for (const auto& a : plan.attacks)
      for (NodeId v : all) jobs.push_back({s, a, v, 0.0});
    if (plan.limited_knowledge)
      for (double f : plan.limited_fractions)
        for (NodeId v : all) jobs.push_back({s, "nettack@" + fmt_double(f), v, f});
  }

  std::vector<RunRecord> job_records(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t k) {
    const auto& job = jobs[k];
    const auto& ctx = contexts[job.split];
    RunRecord& rec = job_records[k];
    rec.split_seed = ctx.seed;
    rec.attack = job.attack;
    rec.target = job.target;
    rec.group = ctx.targets.group_of(job.target);
    rec.degree = g.degree(job.target);
    rec.budget = rec.degree + plan.budget_offset;
    try {
      const std::uint64_t seed = derive_seed(ctx.seed, job.target, detail::fnv1a(job.attack));
      std::vector<Perturbation> log;
      if (job.fraction > 0.0) {
        const auto sub = limited_knowledge_subgraph(g, job.target, job.fraction);
        const auto sub_split = restrict_split(ctx.split, sub.mapping, g.num_nodes());
        if (sub_split.train.empty()) throw std::runtime_error("observed subgraph holds no training node");
        const NormalizedAdjacency sub_na(sub.graph);
        const auto sub_model = train_surrogate(sub.graph, sub_na, sub_split, plan.surrogate);
        const auto local = static_cast<NodeId>(std::lower_bound(sub.mapping.begin(), sub.mapping.end(), job.target) -
                                               sub.mapping.begin());
        AttackConfig cfg = AttackConfig::direct(local, rec.budget);
        cfg.degree_test = plan.degree_test;
        const auto res = run_nettack(sub.graph, sub_model, cfg);
        log = lift_perturbations(res.log, sub.mapping);
        rec.starved = res.starved;
      } else {
        const auto res = detail::run_named_attack(job.attack, g, ctx.surrogate, job.target, rec.budget, plan, seed);
        log = res.log;
        rec.starved = res.starved;
      }
      rec.perturbations = log.size();
      rec.loss_trace = replay_loss_trace(g, ctx.surrogate, job.target, log);
      rec.surrogate_loss = rec.loss_trace.back();
      const auto replay = replay_constraints(g, log, plan.degree_test);
      rec.constraints_ok = replay.all_passed;
      rec.final_lambda = replay.lambda_trace.empty() ? 0.0 : replay.lambda_trace.back();
      detail::evaluate_into(rec, plan, ctx, apply_log(g, log));
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
  });
  records.insert(records.end(), job_records.begin(), job_records.end());

  ExperimentResult out;
  out.records = std::move(records);
  const auto plan_json = to_json(plan);
  out.manifest["plan"] = plan_json;
  out.manifest["config_hash"] = sha1_hex(plan_json.dump());
  out.manifest["input_hash"] = input_hash;
  out.manifest["graph"] = {{"n_nodes", g.num_nodes()}, {"n_edges", g.num_edges()},
                           {"n_features", g.num_features()}, {"n_classes", g.num_classes()}};
  out.manifest["split_seeds"] = plan.split_seeds;
  auto& errs = out.manifest["split_errors"] = nlohmann::ordered_json::object();
  for (std::size_t s = 0; s < split_errors.size(); ++s)
    if (!split_errors[s].empty()) errs[std::to_string(plan.split_seeds[s])] = split_errors[s];
  auto& tg = out.manifest["targets"] = nlohmann::ordered_json::object();
  for (const auto& ctx : contexts)
    tg[std::to_string(ctx.seed)] = {{"high", ctx.targets.high}, {"low", ctx.targets.low}, {"random", ctx.targets.random}};
  std::size_t failed = 0;
  for (const auto& r : out.records) failed += !r.error.empty();
  out.manifest["runs"] = out.records.size();
  out.manifest["failed_runs"] = failed;
  return out;
}

inline ExperimentResult run_experiment(const ExperimentPlan& plan) {
  const auto data = load_plan_dataset(plan);
  return run_experiment(plan, data.graph, data.content_hash);
}

inline void write_report(const ExperimentResult& res, const fs::path& dir) {
  fs::create_directories(dir);
  auto put = [&](const char* name, const std::string& text) { std::ofstream(dir / name, std::ios::binary) << text; };
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (const auto& r : res.records) runs.push_back(to_json(r));
  put("runs.json", runs.dump(2) + "\n");
  put("runs.csv", runs_csv(res.records));
  put("summary.csv", summary_csv(summarize(res.records)));
  put("degree_buckets.csv", buckets_csv(degree_bucket_report(res.records)));
  put("loss_traces.csv", loss_trace_csv(res.records));
  put("manifest.json", res.manifest.dump(2) + "\n");
}

inline std::vector<RunRecord> read_runs(const fs::path& dir) {
  const auto j = nlohmann::json::parse(read_file(dir / "runs.json"));
  std::vector<RunRecord> out;
  for (const auto& r : j) out.push_back(run_record_from_json(r));
  return out;
}

}  // namespace nettack
