#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "nettack/graph.hpp"
#include "nettack/log.hpp"
#include "nettack/rng.hpp"

namespace nettack {

namespace fs = std::filesystem;

class BundleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadReport {
  AttributedGraph graph;
  std::size_t self_loops_dropped = 0;
  std::size_t duplicate_edges = 0;
};

// Subgraph plus the original id of every new node (new id -> old id).
struct SubgraphResult {
  AttributedGraph graph;
  std::vector<NodeId> mapping;
};

struct DataSplit {
  std::vector<NodeId> train;
  std::vector<NodeId> validation;
  std::vector<NodeId> unlabeled;
  std::uint64_t seed = 0;

  friend bool operator==(const DataSplit&, const DataSplit&) = default;
};

namespace detail {

inline std::ifstream open_input(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw BundleError("cannot open " + p.string());
  return in;
}

// Calls fn(line_no, fields) for each non-empty, non-comment line.
template <typename Fn>
void for_each_record(const fs::path& p, Fn&& fn) {
  auto in = open_input(p);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::vector<long long> fields;
    long long x;
    while (ss >> x) fields.push_back(x);
    if (!ss.eof()) throw BundleError(p.filename().string() + ":" + std::to_string(line_no) + ": not an integer record");
    fn(line_no, fields);
  }
}

inline void check_id(long long id, std::size_t bound, const char* what, const fs::path& p, std::size_t line) {
  if (id < 0 || static_cast<unsigned long long>(id) >= bound)
    throw BundleError(p.filename().string() + ":" + std::to_string(line) + ": " + what + " " + std::to_string(id) +
                      " out of range [0, " + std::to_string(bound) + ")");
}

}  // namespace detail

// Reads edges.tsv, features.tsv, labels.tsv (optional) and meta.json from dir.
inline LoadReport load_bundle(const fs::path& dir) {
  nlohmann::json meta;
  {
    auto in = detail::open_input(dir / "meta.json");
    try {
      in >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw BundleError("meta.json: " + std::string(e.what()));
    }
  }
  for (const char* key : {"n_nodes", "n_features"})
    if (!meta.contains(key)) throw BundleError(std::string("meta.json: missing ") + key);
  const auto n = meta.at("n_nodes").get<std::size_t>();
  const auto d = meta.at("n_features").get<std::size_t>();
  const auto k = meta.value("n_classes", std::size_t{0});

  LoadReport report{AttributedGraph(n, d, k)};
  auto& g = report.graph;

  const auto edges_path = dir / "edges.tsv";
  detail::for_each_record(edges_path, [&](std::size_t line, const std::vector<long long>& f) {
    if (f.size() != 2) throw BundleError("edges.tsv:" + std::to_string(line) + ": expected 2 columns");
    detail::check_id(f[0], n, "node", edges_path, line);
    detail::check_id(f[1], n, "node", edges_path, line);
    const auto u = static_cast<NodeId>(f[0]);
    const auto v = static_cast<NodeId>(f[1]);
    if (u == v) {
      ++report.self_loops_dropped;
      warn(edges_path.string() + ":" + std::to_string(line) + ": self-loop on node " + std::to_string(u) + " dropped");
    } else if (g.has_edge(u, v)) {
      ++report.duplicate_edges;
    } else {
      g.flip_edge(u, v);
    }
  });

  const auto feat_path = dir / "features.tsv";
  detail::for_each_record(feat_path, [&](std::size_t line, const std::vector<long long>& f) {
    if (f.size() != 2 && f.size() != 3)
      throw BundleError("features.tsv:" + std::to_string(line) + ": expected 2 or 3 columns");
    detail::check_id(f[0], n, "node", feat_path, line);
    detail::check_id(f[1], d, "feature", feat_path, line);
    const long long value = f.size() == 3 ? f[2] : 1;
    if (value != 0 && value != 1)
      throw BundleError("features.tsv:" + std::to_string(line) + ": non-binary value " + std::to_string(value));
    if (value == 1) g.set_feature(static_cast<NodeId>(f[0]), static_cast<FeatureId>(f[1]));
  });

  const auto label_path = dir / "labels.tsv";
  if (fs::exists(label_path)) {
    detail::for_each_record(label_path, [&](std::size_t line, const std::vector<long long>& f) {
      if (f.size() != 2) throw BundleError("labels.tsv:" + std::to_string(line) + ": expected 2 columns");
      detail::check_id(f[0], n, "node", label_path, line);
      if (f[1] < 0 || (k > 0 && static_cast<std::size_t>(f[1]) >= k))
        throw BundleError("labels.tsv:" + std::to_string(line) + ": class " + std::to_string(f[1]) +
                          " out of range");
      g.set_label(static_cast<NodeId>(f[0]), static_cast<ClassId>(f[1]));
    });
    if (k == 0) {
      ClassId mx = -1;
      for (ClassId c : g.labels()) mx = std::max(mx, c);
      g.set_num_classes(static_cast<std::size_t>(mx + 1));
    }
  }
  return report;
}

inline void save_bundle(const AttributedGraph& g, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "edges.tsv");
    for (auto [u, v] : g.edge_list()) out << u << '\t' << v << '\n';
  }
  {
    std::ofstream out(dir / "features.tsv");
    for (NodeId u = 0; u < g.num_nodes(); ++u)
      for (FeatureId i : g.features(u)) out << u << '\t' << i << '\n';
  }
  {
    std::ofstream out(dir / "labels.tsv");
    for (NodeId u = 0; u < g.num_nodes(); ++u)
      if (g.is_labeled(u)) out << u << '\t' << g.label(u) << '\n';
  }
  nlohmann::ordered_json meta;
  meta["n_nodes"] = g.num_nodes();
  meta["n_features"] = g.num_features();
  meta["n_classes"] = g.num_classes();
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
}

// Induced subgraph on `nodes` (any order; duplicates are an error). New ids
// follow ascending original id.
inline SubgraphResult induced_subgraph(const AttributedGraph& g, std::vector<NodeId> nodes) {
  std::sort(nodes.begin(), nodes.end());
  if (std::adjacent_find(nodes.begin(), nodes.end()) != nodes.end())
    throw std::invalid_argument("induced_subgraph: duplicate node ids");
  std::vector<std::int64_t> remap(g.num_nodes(), -1);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    g.check_node(nodes[i]);
    remap[nodes[i]] = static_cast<std::int64_t>(i);
  }
  SubgraphResult r{AttributedGraph(nodes.size(), g.num_features(), g.num_classes()), nodes};
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const NodeId old = nodes[i];
    const auto u = static_cast<NodeId>(i);
    for (NodeId w : g.neighbors(old))
      if (remap[w] > static_cast<std::int64_t>(i)) r.graph.flip_edge(u, static_cast<NodeId>(remap[w]));
    for (FeatureId f : g.features(old)) r.graph.flip_feature(u, f);
    r.graph.set_label(u, g.label(old));
  }
  return r;
}

// Connected components in order of their smallest node id.
inline std::vector<std::vector<NodeId>> connected_components(const AttributedGraph& g) {
  std::vector<std::vector<NodeId>> comps;
  std::vector<char> seen(g.num_nodes(), 0);
  for (NodeId s = 0; s < g.num_nodes(); ++s) {
    if (seen[s]) continue;
    std::vector<NodeId> comp{s};
    seen[s] = 1;
    for (std::size_t head = 0; head < comp.size(); ++head)
      for (NodeId w : g.neighbors(comp[head]))
        if (!seen[w]) {
          seen[w] = 1;
          comp.push_back(w);
        }
    comps.push_back(std::move(comp));
  }
  return comps;
}

// Largest connected component. Ties go to the component containing the
// smallest original id.
inline SubgraphResult extract_lcc(const AttributedGraph& g) {
  if (g.num_nodes() == 0) throw std::invalid_argument("extract_lcc: empty graph");
  auto comps = connected_components(g);
  std::size_t best = 0;
  for (std::size_t i = 1; i < comps.size(); ++i)
    if (comps[i].size() > comps[best].size()) best = i;
  return induced_subgraph(g, std::move(comps[best]));
}

// 10% train, 10% validation, 80% unlabeled, uniformly at random.
inline DataSplit make_split(const AttributedGraph& g, std::uint64_t seed) {
  const std::size_t n = g.num_nodes();
  if (n < 10) throw std::invalid_argument("make_split: need at least 10 nodes, got " + std::to_string(n));
  for (NodeId u = 0; u < n; ++u)
    if (!g.is_labeled(u)) throw std::invalid_argument("make_split: node " + std::to_string(u) + " has no label");

  std::vector<NodeId> ids(n);
  for (NodeId u = 0; u < n; ++u) ids[u] = u;
  Rng rng(seed);
  shuffle(ids, rng);

  const auto n_labeled = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
  const std::size_t n_train = (n_labeled + 1) / 2;
  DataSplit s;
  s.seed = seed;
  s.train.assign(ids.begin(), ids.begin() + n_train);
  s.validation.assign(ids.begin() + n_train, ids.begin() + n_labeled);
  s.unlabeled.assign(ids.begin() + n_labeled, ids.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.unlabeled.begin(), s.unlabeled.end());
  return s;
}

inline nlohmann::ordered_json to_json(const DataSplit& s) {
  nlohmann::ordered_json j;
  j["seed"] = s.seed;
  j["train"] = s.train;
  j["validation"] = s.validation;
  j["unlabeled"] = s.unlabeled;
  return j;
}

inline DataSplit split_from_json(const nlohmann::json& j) {
  DataSplit s;
  s.seed = j.value("seed", std::uint64_t{0});
  s.train = j.at("train").get<std::vector<NodeId>>();
  s.validation = j.at("validation").get<std::vector<NodeId>>();
  s.unlabeled = j.at("unlabeled").get<std::vector<NodeId>>();
  return s;
}

// Restricts a split to the nodes of a subgraph, translating ids.
inline DataSplit restrict_split(const DataSplit& s, const std::vector<NodeId>& mapping, std::size_t n_full) {
  std::vector<std::int64_t> remap(n_full, -1);
  for (std::size_t i = 0; i < mapping.size(); ++i) remap[mapping[i]] = static_cast<std::int64_t>(i);
  auto conv = [&](const std::vector<NodeId>& in) {
    std::vector<NodeId> out;
    for (NodeId u : in)
      if (remap[u] >= 0) out.push_back(static_cast<NodeId>(remap[u]));
    std::sort(out.begin(), out.end());
    return out;
  };
  return DataSplit{conv(s.train), conv(s.validation), conv(s.unlabeled), s.seed};
}

}  // namespace nettack
