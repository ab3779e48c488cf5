// nettack command-line front end. Graphs are TSV bundles (see README).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nettack/experiment.hpp"

using namespace nettack;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

void write_json(const fs::path& p, const nlohmann::ordered_json& j) { write_text(p, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& p) {
  try {
    return nlohmann::json::parse(read_file(p));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(p.string() + ": " + e.what());
  }
}

// Either a trained model file or a split to train one on the spot.
SurrogateModel obtain_surrogate(const AttributedGraph& g, const std::string& model_path,
                                const std::string& split_path) {
  if (!model_path.empty()) {
    auto m = surrogate_from_json(read_json(model_path));
    if (static_cast<std::size_t>(m.weights.rows()) != g.num_features())
      throw std::runtime_error("model has " + std::to_string(m.weights.rows()) + " feature rows, graph has " +
                               std::to_string(g.num_features()));
    return m;
  }
  if (split_path.empty()) throw std::runtime_error("need --model or --split");
  const NormalizedAdjacency na(g);
  return train_surrogate(g, na, split_from_json(read_json(split_path)));
}

struct AttackArgs {
  std::string graph, model, split, out, out_graph, method = "nettack", mode = "direct";
  NodeId target = 0;
  std::size_t budget = 0;
  std::size_t influencers = 5;
  bool structure_only = false, features_only = false, unconstrained = false, eq7_as_printed = false;
  std::uint64_t seed = 0;
  double d_min = 2.0, tau = 0.004;
};

int run_attack(const AttackArgs& a) {
  const auto g = load_bundle(a.graph).graph;
  const auto model = obtain_surrogate(g, a.model, a.split);
  AttackConfig cfg = AttackConfig::direct(a.target, a.budget ? a.budget : g.degree(a.target) + 2);
  cfg.seed = a.seed;
  cfg.constrained = !a.unconstrained;
  cfg.degree_test.d_min = a.d_min;
  cfg.degree_test.tau = a.tau;
  if (a.eq7_as_printed) cfg.degree_test.form = LogLikelihoodForm::AsPrinted;
  cfg.perturb_structure = !a.features_only;
  cfg.perturb_features = !a.structure_only;
  if (a.mode == "influencer") {
    Rng rng(derive_seed(a.seed, 0x1f1));
    cfg.mode = AttackMode::Influencer;
    cfg.attackers = pick_influencers(g, a.target, a.influencers, rng);
  }
  AttackResult res;
  if (a.method == "nettack") {
    res = run_nettack(g, model, cfg);
    if (a.unconstrained) res.method = "nettack-u";
  } else if (a.method == "rnd") {
    res = rnd_baseline(g, cfg, &model);
  } else {
    res = fgsm_baseline(g, model, cfg, FgsmOptions{cfg.perturb_structure, cfg.perturb_features});
  }
  auto j = to_json(res);
  const auto replay = replay_constraints(g, res.log, cfg.degree_test);
  j["constraint_audit"]["replay_passed"] = replay.all_passed;
  j["mode"] = to_string(cfg.mode);
  j["attackers"] = cfg.attackers;
  j["seed"] = a.seed;
  if (a.out.empty())
    std::cout << j.dump(2) << "\n";
  else
    write_json(a.out, j);
  if (!a.out_graph.empty()) save_bundle(apply_log(g, res.log), a.out_graph);
  if (res.starved) std::fprintf(stderr, "warning: candidate set exhausted after %zu of %zu perturbations\n",
                                res.log.size(), res.budget);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Targeted adversarial perturbations against graph convolutional node classifiers"};
  app.require_subcommand(1);

  std::string in, out;

  auto* convert = app.add_subcommand("convert", "Canonicalize a TSV bundle (drops self-loops and duplicates)");
  convert->add_option("--in", in, "input bundle directory")->required();
  convert->add_option("--out", out, "output bundle directory")->required();

  std::string mapping_out;
  auto* lcc = app.add_subcommand("lcc", "Restrict a bundle to its largest connected component");
  lcc->add_option("--in", in, "input bundle directory")->required();
  lcc->add_option("--out", out, "output bundle directory")->required();
  lcc->add_option("--mapping", mapping_out, "write new-id -> old-id mapping as JSON");

  std::string graph;
  std::uint64_t seed = 0;
  auto* split = app.add_subcommand("split", "Draw the 10/10/80 train/validation/unlabeled split");
  split->add_option("--graph", graph, "bundle directory")->required();
  split->add_option("--seed", seed, "split seed")->required();
  split->add_option("--out", out, "split JSON")->required();

  std::string split_path;
  auto* train = app.add_subcommand("train-surrogate", "Fit the linearized surrogate on a split");
  train->add_option("--graph", graph, "bundle directory")->required();
  train->add_option("--split", split_path, "split JSON")->required();
  train->add_option("--out", out, "model JSON")->required();

  PlantedPartitionConfig synth_cfg;
  auto* synth = app.add_subcommand("synth", "Write a planted-partition graph as a bundle");
  synth->add_option("--out", out, "output bundle directory")->required();
  synth->add_option("--nodes", synth_cfg.n_nodes)->capture_default_str();
  synth->add_option("--classes", synth_cfg.n_classes)->capture_default_str();
  synth->add_option("--features", synth_cfg.n_features)->capture_default_str();
  synth->add_option("--mean-degree", synth_cfg.mean_degree)->capture_default_str();
  synth->add_option("--homophily", synth_cfg.homophily)->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed)->capture_default_str();

  AttackArgs aa;
  auto* attack = app.add_subcommand("attack", "Attack one target node");
  attack->add_option("--graph", aa.graph, "bundle directory")->required();
  attack->add_option("--model", aa.model, "surrogate model JSON");
  attack->add_option("--split", aa.split, "split JSON (trains the surrogate when --model is absent)");
  attack->add_option("--target", aa.target, "target node id")->required();
  attack->add_option("--budget", aa.budget, "perturbation budget (default: degree + 2)");
  attack->add_option("--mode", aa.mode, "direct or influencer")
      ->check(CLI::IsMember({"direct", "influencer"}))
      ->capture_default_str();
  attack->add_option("--influencers", aa.influencers, "attacker count in influencer mode")->capture_default_str();
  attack->add_option("--method", aa.method, "nettack, rnd or fgsm")
      ->check(CLI::IsMember({"nettack", "rnd", "fgsm"}))
      ->capture_default_str();
  auto* so = attack->add_flag("--structure-only", aa.structure_only, "only edge perturbations");
  attack->add_flag("--features-only", aa.features_only, "only feature perturbations")->excludes(so);
  attack->add_flag("--unconstrained", aa.unconstrained, "disable both unnoticeability tests");
  attack->add_option("--d-min", aa.d_min, "power-law cutoff")->capture_default_str();
  attack->add_option("--tau", aa.tau, "likelihood-ratio threshold")->capture_default_str();
  attack->add_flag("--eq7-as-printed", aa.eq7_as_printed, "use the literal sign convention for the log-likelihood");
  attack->add_option("--seed", aa.seed, "seed for influencer choice and baselines")->capture_default_str();
  attack->add_option("--out", aa.out, "result JSON (stdout if absent)");
  attack->add_option("--out-graph", aa.out_graph, "write the perturbed graph as a bundle");

  std::string clean_graph, eval_mode = "poisoning";
  std::vector<NodeId> targets;
  std::size_t runs = 10;
  auto* evaluate = app.add_subcommand("evaluate", "Score targets with the GCN victim");
  evaluate->add_option("--graph", graph, "attacked bundle directory")->required();
  evaluate->add_option("--clean-graph", clean_graph, "clean bundle for evasion training (default: --graph)");
  evaluate->add_option("--split", split_path, "split JSON")->required();
  evaluate->add_option("--targets", targets, "comma-separated node ids")->delimiter(',')->required();
  evaluate->add_option("--mode", eval_mode, "evasion or poisoning")
      ->check(CLI::IsMember({"evasion", "poisoning"}))
      ->capture_default_str();
  evaluate->add_option("--runs", runs, "poisoning retrains")->capture_default_str();
  evaluate->add_option("--seed", seed, "base training seed")->capture_default_str();
  evaluate->add_option("--out", out, "report JSON (stdout if absent)");

  std::string plan_path;
  std::size_t workers = 0;
  auto* experiment = app.add_subcommand("experiment", "Run a full experiment plan");
  experiment->add_option("--plan", plan_path, "plan JSON")->required();
  experiment->add_option("--out", out, "output directory")->required();
  experiment->add_option("--workers", workers, "worker threads (overrides plan and NETTACK_WORKERS)");

  int table = 3;
  auto* report = app.add_subcommand("report", "Re-aggregate an experiment directory");
  report->add_option("--in", in, "experiment output directory")->required();
  report->add_option("--table", table, "table shape")->check(CLI::IsMember({3}))->capture_default_str();
  report->add_option("--out", out, "CSV path (default: <in>/table3.csv)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*convert) {
      const auto rep = load_bundle(in);
      save_bundle(rep.graph, out);
      std::fprintf(stderr, "%zu nodes, %zu edges; dropped %zu self-loops, %zu duplicate edges\n",
                   rep.graph.num_nodes(), rep.graph.num_edges(), rep.self_loops_dropped, rep.duplicate_edges);
    } else if (*lcc) {
      const auto sub = extract_lcc(load_bundle(in).graph);
      save_bundle(sub.graph, out);
      if (!mapping_out.empty()) write_json(mapping_out, nlohmann::ordered_json(sub.mapping));
      std::fprintf(stderr, "kept %zu nodes, %zu edges\n", sub.graph.num_nodes(), sub.graph.num_edges());
    } else if (*split) {
      write_json(out, to_json(make_split(load_bundle(graph).graph, seed)));
    } else if (*train) {
      const auto g = load_bundle(graph).graph;
      const NormalizedAdjacency na(g);
      const auto m = train_surrogate(g, na, split_from_json(read_json(split_path)));
      write_json(out, to_json(m));
      std::fprintf(stderr, "trained %d epochs, validation loss %.6f\n", m.epochs_trained, m.best_validation_loss);
    } else if (*synth) {
      save_bundle(planted_partition(synth_cfg), out);
    } else if (*attack) {
      return run_attack(aa);
    } else if (*evaluate) {
      const auto g = load_bundle(graph).graph;
      const auto s = split_from_json(read_json(split_path));
      for (NodeId v : targets) g.check_node(v);
      MarginReport rep;
      if (eval_mode == "evasion") {
        const auto clean = clean_graph.empty() ? g : load_bundle(clean_graph).graph;
        rep = evasion_eval(train_gcn(clean, s, seed), g, targets);
      } else {
        rep = poisoning_eval(g, s, targets, runs, seed, {}, default_workers());
      }
      auto j = to_json(rep);
      j["mode"] = eval_mode;
      if (out.empty())
        std::cout << j.dump(2) << "\n";
      else
        write_json(out, j);
    } else if (*experiment) {
      auto plan = plan_from_json(read_json(plan_path));
      if (workers) plan.workers = workers;
      const auto res = run_experiment(plan);
      write_report(res, out);
      const std::size_t failed = res.manifest["failed_runs"].get<std::size_t>();
      std::fprintf(stderr, "%zu runs, %zu failed; reports in %s\n", res.records.size(), failed, out.c_str());
    } else if (*report) {
      const fs::path dest = out.empty() ? fs::path(in) / "table3.csv" : fs::path(out);
      const auto csv = table3_csv(read_runs(in));
      write_text(dest, csv);
      std::cout << csv;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
