// ctp: generate graphs, pretrain prompt models, evaluate, sweep, ablate, plot.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctp/plot.hpp"
#include "ctp/rng.hpp"
#include "ctp/train_eval.hpp"

namespace fs = std::filesystem;
using namespace ctp;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t env_seed(std::uint64_t fallback) {
  const char* s = std::getenv("CTP_SEED");
  if (s == nullptr || *s == '\0') return fallback;
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw UsageError(std::string("CTP_SEED is not an integer: ") + s);
  }
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      if constexpr (std::is_floating_point_v<T>) out.push_back(std::stod(tok));
      else out.push_back(static_cast<T>(std::stoull(tok)));
    } catch (const std::exception&) {
      throw UsageError(std::string("bad ") + what + " entry '" + tok + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string("empty ") + what);
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path dir_of(const fs::path& file) { return file.has_parent_path() ? file.parent_path() : fs::path("."); }

struct TrainArgs {
  std::string config;
  std::string ablation;
  std::optional<std::size_t> epochs;
  std::optional<double> lambda;
  std::optional<double> p;
  std::optional<std::uint64_t> seed;
  std::string task;
};

void add_train_flags(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--config", a.config, "TrainConfig JSON (missing keys take defaults)");
  cmd->add_option("--ablation", a.ablation, "enabled components, e.g. O1,O3 (none = baseline)");
  cmd->add_option("--epochs", a.epochs, "override epochs");
  cmd->add_option("--lambda", a.lambda, "override orthogonal-loss weight");
  cmd->add_option("--p", a.p, "override protection fraction");
  cmd->add_option("--seed", a.seed, "derive all three seed streams from this value");
  cmd->add_option("--task", a.task, "node|link")->check(CLI::IsMember({"node", "link"}));
}

TrainConfig resolve_train_config(const TrainArgs& a, CLI::App* cmd) {
  nlohmann::json j = nlohmann::json::object();
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw UsageError("cannot read config " + a.config);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw UsageError(a.config + ": " + e.what());
    }
  }
  TrainConfig cfg;
  try {
    cfg = j.get<TrainConfig>();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(a.config + ": " + e.what());
  }
  std::optional<std::uint64_t> seed = a.seed;
  if (!seed && !j.contains("seeds") && std::getenv("CTP_SEED") != nullptr) seed = env_seed(0);
  if (seed) cfg.seeds = {derive_seed(*seed, {1}), derive_seed(*seed, {2}), derive_seed(*seed, {3})};
  if (cmd->count("--ablation") > 0) cfg.ablation = Ablation::parse(a.ablation);
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.lambda) cfg.lambda = *a.lambda;
  if (a.p) cfg.p = *a.p;
  if (!a.task.empty()) cfg.task = task_kind_from_string(a.task);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

struct EvalArgs {
  std::size_t ways = 3;
  std::size_t shots = 3;
  std::size_t queries = 4;
  std::size_t episodes = 100;
  std::optional<std::uint64_t> seed;
  std::string task;
  std::size_t h = 2;
  std::size_t fanout = 20;
  std::size_t threads = 1;
  bool zero_shot = false;
};

void add_eval_flags(CLI::App* cmd, EvalArgs& a, const std::string& seed_flag, bool task_flag = true) {
  cmd->add_option("--ways", a.ways, "classes per episode")->check(CLI::PositiveNumber);
  cmd->add_option("--shots", a.shots, "support examples per class");
  cmd->add_option("--queries", a.queries, "queries per class")->check(CLI::PositiveNumber);
  cmd->add_option("--episodes", a.episodes, "episode count")->check(CLI::PositiveNumber);
  cmd->add_option(seed_flag, a.seed, "episode seed (default CTP_SEED, else 1)");
  if (task_flag) {
    cmd->add_option("--task", a.task, "node|link (default: the checkpoint's task)")
        ->check(CLI::IsMember({"node", "link"}));
  }
  cmd->add_option("--hops", a.h, "context hops");
  cmd->add_option("--fanout", a.fanout, "per-node neighbor cap in contexts");
  cmd->add_option("--threads", a.threads, "evaluation worker threads");
  cmd->add_flag("--zero-shot-fallback", a.zero_shot,
                "with --shots 0, score query clusters against classes (label-free, non-default)");
}

EvalConfig resolve_eval_config(const EvalArgs& a) {
  EvalConfig e;
  e.m = a.ways;
  e.k_shots = a.shots;
  e.n = a.queries;
  e.episodes = a.episodes;
  e.seed = a.seed ? *a.seed : env_seed(1);
  if (!a.task.empty()) e.task = task_kind_from_string(a.task);
  e.h = a.h;
  e.fanout_cap = a.fanout;
  e.threads = a.threads;
  e.zero_shot_fallback = a.zero_shot;
  return e;
}

Graph load_graph_or_usage(const std::string& dir) {
  if (!fs::is_directory(dir)) throw UsageError("graph directory not found: " + dir);
  return load_graph(dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctp: self-supervised graph prompting with tuning-free evaluation"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "write a synthetic graph as nodes.tsv/edges.tsv/labels.tsv");
  std::string gen_kind = "sbm", gen_out;
  std::size_t communities = 4, per = 50, dim = 8, entities = 300, relations = 4, edge_count = 1500;
  double p_in = 0.1, p_out = 0.01, shift = 1.0, group_shift = 1.5, preference = 0.8;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--kind", gen_kind, "sbm|relational")->check(CLI::IsMember({"sbm", "relational"}));
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--communities", communities, "sbm: community count");
  gen->add_option("--per", per, "sbm: nodes per community");
  gen->add_option("--p-in", p_in, "sbm: intra-community edge probability");
  gen->add_option("--p-out", p_out, "sbm: inter-community edge probability");
  gen->add_option("--shift", shift, "sbm: feature mean separation");
  gen->add_option("--dim", dim, "feature width");
  gen->add_option("--entities", entities, "relational: entity count");
  gen->add_option("--relations", relations, "relational: relation types");
  gen->add_option("--edges", edge_count, "relational: edge count");
  gen->add_option("--group-shift", group_shift, "relational: entity-group feature shift");
  gen->add_option("--preference", preference, "relational: probability a relation uses its group pair");
  gen->add_option("--seed", gen_seed, "generator seed (default CTP_SEED, else 1)");

  // train
  auto* trn = app.add_subcommand("train", "pretrain on a source graph and write a checkpoint");
  TrainArgs targs;
  std::string train_graph, train_out, train_log;
  trn->add_option("--graph", train_graph, "source graph directory")->required();
  trn->add_option("--out", train_out, "checkpoint path")->required();
  trn->add_option("--log", train_log, "loss CSV (default: train.csv next to the checkpoint)");
  add_train_flags(trn, targs);

  // eval
  auto* evl = app.add_subcommand("eval", "tuning-free evaluation of a checkpoint on a target graph");
  EvalArgs eargs;
  std::string eval_ckpt, eval_graph, eval_out = ".";
  evl->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  evl->add_option("--graph", eval_graph, "target graph directory")->required();
  evl->add_option("--out", eval_out, "output directory for eval.csv");
  add_eval_flags(evl, eargs, "--seed");

  // sweep
  auto* swp = app.add_subcommand("sweep", "grid over lambda x p (retrains) or shots / ways (eval only)");
  std::string sweep_kind = "lambda-p", sweep_source, sweep_target, sweep_ckpt, sweep_out = "sweep.csv";
  std::string lambdas = "0.1,0.3,0.5", ps = "0.1,0.3,0.5", grid = "3,5,7";
  std::size_t jobs = 1;
  TrainArgs sargs;
  EvalArgs seargs;
  swp->add_option("--kind", sweep_kind, "lambda-p|shots|ways")->check(CLI::IsMember({"lambda-p", "shots", "ways"}));
  swp->add_option("--source", sweep_source, "lambda-p: source graph directory");
  swp->add_option("--target", sweep_target, "target graph directory")->required();
  swp->add_option("--ckpt", sweep_ckpt, "shots/ways: checkpoint path");
  swp->add_option("--lambdas", lambdas, "lambda-p: comma list");
  swp->add_option("--ps", ps, "lambda-p: comma list");
  swp->add_option("--grid", grid, "shots/ways: comma list");
  swp->add_option("--jobs", jobs, "lambda-p: cells trained concurrently");
  swp->add_option("--out", sweep_out, "CSV path");
  add_train_flags(swp, sargs);
  add_eval_flags(swp, seargs, "--eval-seed", false);

  // ablate
  auto* abl = app.add_subcommand("ablate", "baseline, O1, O1+O2, O1+O3, O1+O2+O3 on shared seeds");
  std::string abl_source, abl_target, abl_out = "ablate.csv";
  std::size_t abl_seeds = 3;
  TrainArgs aargs;
  EvalArgs aeargs;
  abl->add_option("--source", abl_source, "source graph directory")->required();
  abl->add_option("--target", abl_target, "target graph directory")->required();
  abl->add_option("--seeds", abl_seeds, "seed triples")->check(CLI::PositiveNumber);
  abl->add_option("--out", abl_out, "CSV path");
  add_train_flags(abl, aargs);
  add_eval_flags(abl, aeargs, "--eval-seed", false);

  // plot
  auto* plt = app.add_subcommand("plot", "render sweep CSVs to SVG");
  std::string plot_kind = "heatmap", plot_out, plot_title, plot_x, plot_y, plot_value = "mean";
  std::vector<std::string> plot_in, plot_labels;
  plt->add_option("--kind", plot_kind, "heatmap|line")->check(CLI::IsMember({"heatmap", "line"}));
  plt->add_option("--in", plot_in, "input CSV (line charts accept several)")->required();
  plt->add_option("--labels", plot_labels, "series labels for line charts");
  plt->add_option("--out", plot_out, "SVG path")->required();
  plt->add_option("--title", plot_title, "chart title");
  plt->add_option("-x", plot_x, "x column (default: first column)");
  plt->add_option("-y", plot_y, "heatmap y column (default: second column)");
  plt->add_option("--value", plot_value, "value column");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      const std::uint64_t seed = gen_seed ? *gen_seed : env_seed(1);
      Graph g = [&] {
        try {
          return gen_kind == "sbm"
                     ? gen_planted_partition(communities, per, p_in, p_out, dim, shift, seed)
                     : gen_relational(entities, relations, edge_count, dim, seed, group_shift, preference);
        } catch (const std::invalid_argument& e) {
          throw UsageError(e.what());
        }
      }();
      save_graph(g, gen_out);
      std::cout << "wrote " << g.node_count() << " nodes, " << g.edges().size() << " edges to " << gen_out << '\n';
    } else if (*trn) {
      const TrainConfig cfg = resolve_train_config(targs, trn);
      const Graph g = load_graph_or_usage(train_graph);
      const TrainResult r = train(g, cfg);
      const fs::path out(train_out);
      fs::create_directories(dir_of(out));
      save_checkpoint(out, r.checkpoint);
      write_loss_csv(train_log.empty() ? dir_of(out) / "train.csv" : fs::path(train_log), r.log);
      write_json(dir_of(out) / "config.json", r.checkpoint.config);
      for (const std::string& w : r.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "steps=" << r.log.size() << " final_total=" << (r.log.empty() ? 0.0 : r.log.back().total)
                << " params=" << params_hash(r.checkpoint.params) << '\n';
    } else if (*evl) {
      const EvalConfig ecfg = resolve_eval_config(eargs);
      const Checkpoint ckpt = load_checkpoint(eval_ckpt);
      const Graph g = load_graph_or_usage(eval_graph);
      const EvalReport rep = evaluate(ckpt, g, ecfg);
      fs::create_directories(eval_out);
      write_eval_csv(fs::path(eval_out) / "eval.csv", rep);
      nlohmann::json echo = rep.config;
      echo["checkpoint"] = eval_ckpt;
      echo["graph"] = eval_graph;
      echo["hash_before"] = rep.hash_before;
      echo["hash_after"] = rep.hash_after;
      write_json(fs::path(eval_out) / "eval_config.json", echo);
      std::cout << "mean=" << rep.mean << ", std=" << rep.std << ", episodes=" << rep.episodes << '\n';
    } else if (*swp) {
      const EvalConfig ecfg = resolve_eval_config(seargs);
      const Graph target = load_graph_or_usage(sweep_target);
      std::vector<SweepRow> rows;
      nlohmann::json echo{{"kind", sweep_kind}, {"eval", ecfg}};
      if (sweep_kind == "lambda-p") {
        if (sweep_source.empty()) throw UsageError("sweep --kind lambda-p needs --source");
        const TrainConfig cfg = resolve_train_config(sargs, swp);
        const auto ls = parse_list<double>(lambdas, "lambda list");
        const auto pv = parse_list<double>(ps, "p list");
        rows = sweep_lambda_p(load_graph_or_usage(sweep_source), target, cfg, ls, pv, ecfg, jobs);
        echo["train"] = cfg;
        echo["lambdas"] = ls;
        echo["ps"] = pv;
      } else {
        if (sweep_ckpt.empty()) throw UsageError("sweep --kind " + sweep_kind + " needs --ckpt");
        const Checkpoint ckpt = load_checkpoint(sweep_ckpt);
        const auto g = parse_list<std::size_t>(grid, "grid");
        rows = sweep_kind == "shots" ? sweep_shots(ckpt, target, g, ecfg) : sweep_ways(ckpt, target, g, ecfg);
        echo["grid"] = g;
        echo["checkpoint"] = sweep_ckpt;
      }
      write_sweep_csv(sweep_out, rows);
      write_json(dir_of(sweep_out) / "sweep_config.json", echo);
      for (const SweepRow& r : rows) {
        for (const auto& [k, v] : r.coords) std::cout << k << '=' << v << ' ';
        std::cout << "mean=" << r.mean << " std=" << r.std << '\n';
      }
    } else if (*abl) {
      const TrainConfig cfg = resolve_train_config(aargs, abl);
      const EvalConfig ecfg = resolve_eval_config(aeargs);
      std::vector<Seeds> seeds;
      for (std::uint64_t i = 0; i < abl_seeds; ++i) {
        seeds.push_back({derive_seed(cfg.seeds.sampling, {i}), derive_seed(cfg.seeds.augmentation, {i}),
                         derive_seed(cfg.seeds.init, {i})});
      }
      const auto grid_flags = ablation_grid();
      const auto rows = ablate(load_graph_or_usage(abl_source), load_graph_or_usage(abl_target), cfg, seeds, ecfg,
                               grid_flags);
      write_ablation_csv(abl_out, rows);
      write_json(dir_of(abl_out) / "ablate_config.json", {{"train", cfg}, {"eval", ecfg}, {"seed_triples", abl_seeds}});
      for (const AblationRow& r : rows) {
        std::cout << r.name << ": mean=" << r.mean << " std=" << r.std << " seed_std=" << r.seed_std << '\n';
      }
    } else if (*plt) {
      std::string svg;
      if (plot_kind == "heatmap") {
        const CsvTable t = read_numeric_csv(plot_in.front());
        if (t.header.size() < 3) throw std::runtime_error(plot_in.front() + ": heatmap needs two coordinate columns");
        svg = render_heatmap(t, plot_x.empty() ? t.header[0] : plot_x, plot_y.empty() ? t.header[1] : plot_y,
                             plot_value, plot_title);
      } else {
        std::vector<Series> series;
        for (std::size_t i = 0; i < plot_in.size(); ++i) {
          const CsvTable t = read_numeric_csv(plot_in[i]);
          const std::size_t xi = t.column(plot_x.empty() ? t.header[0] : plot_x);
          const std::size_t yi = t.column(plot_value);
          const bool has_std = std::find(t.header.begin(), t.header.end(), "std") != t.header.end();
          Series s;
          s.label = i < plot_labels.size() ? plot_labels[i] : fs::path(plot_in[i]).stem().string();
          for (const auto& row : t.rows) {
            s.x.push_back(row[xi]);
            s.y.push_back(row[yi]);
            if (has_std) s.err.push_back(row[t.column("std")]);
          }
          series.push_back(std::move(s));
        }
        svg = render_line_chart(series, plot_x.empty() ? "x" : plot_x, plot_value, plot_title);
      }
      const fs::path out(plot_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      std::ofstream(out, std::ios::binary) << svg;
      std::cout << "wrote " << plot_out << '\n';
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
