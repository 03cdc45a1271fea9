#include "ctp/train_eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "ctp/adam.hpp"
#include "ctp/format.hpp"
#include "ctp/rng.hpp"

namespace ctp {

namespace {

void reject_unknown(const nlohmann::json& j, const nlohmann::json& known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument(where + ": unknown key '" + key + "'");
  }
}

std::string precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision precision_from_string(const std::string& s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  throw std::invalid_argument("unknown precision '" + s + "' (expected f32|f64)");
}

void check_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string("train config: ") + name + " must be in [0,1]");
}

void check_positive(std::size_t v, const char* name) {
  if (v == 0) throw std::invalid_argument(std::string("train config: ") + name + " must be >= 1");
}

/// Runs fn(i) for i in [0, count) on up to `threads` workers and rethrows
/// the first failure.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<ContextGraph> plain_contexts(const Graph& g, std::span<const Labeled> items, std::size_t h,
                                         std::size_t cap, std::uint64_t seed, std::size_t offset) {
  std::vector<ContextGraph> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i)
    out.push_back(build_context(g, items[i].input, h, cap, derive_seed(seed, {offset + i})));
  return out;
}

ModelShape checkpoint_shape(const Checkpoint& ckpt) {
  if (!ckpt.config.contains("train") || !ckpt.config["train"].contains("model")) {
    throw FormatError("checkpoint config has no train.model section");
  }
  return ckpt.config["train"]["model"].get<ModelShape>();
}

TaskKind checkpoint_task(const Checkpoint& ckpt) {
  return task_kind_from_string(ckpt.config["train"].value("task", std::string("node")));
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

Ablation Ablation::parse(const std::string& flags) {
  Ablation a = all_off();
  std::string upper;
  for (char c : flags) upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (upper.empty() || upper == "NONE" || upper == "BASELINE") return a;
  if (upper == "ALL") return {};
  std::stringstream ss(upper);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(std::remove_if(tok.begin(), tok.end(), [](unsigned char c) { return std::isspace(c); }), tok.end());
    if (tok == "O1") a.o1_centroid_clustering = true;
    else if (tok == "O2") a.o2_balanced_augmentation = true;
    else if (tok == "O3") a.o3_orth_and_attr = true;
    else throw std::invalid_argument("unknown ablation component '" + tok + "' (expected O1, O2, O3)");
  }
  return a;
}

std::string Ablation::name() const {
  std::string out;
  auto add = [&](bool on, const char* n) {
    if (!on) return;
    if (!out.empty()) out += "+";
    out += n;
  };
  add(o1_centroid_clustering, "O1");
  add(o2_balanced_augmentation, "O2");
  add(o3_orth_and_attr, "O3");
  return out.empty() ? "baseline" : out;
}

void TrainConfig::validate() const {
  check_positive(m, "m");
  check_positive(s, "s");
  check_positive(n, "n");
  check_positive(pool, "pool");
  check_positive(batches, "batches");
  check_positive(h, "h");
  check_positive(fanout_cap, "fanout_cap");
  check_positive(model.d, "model.d");
  if (pool < m) throw std::invalid_argument("train config: pool must be >= m");
  if (lambda < 0.0) throw std::invalid_argument("train config: lambda must be >= 0");
  if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be > 0");
  if (weight_decay < 0.0) throw std::invalid_argument("train config: weight_decay must be >= 0");
  check_unit(p, "p");
  check_unit(alpha, "alpha");
  check_unit(drop_rate, "drop_rate");
  check_unit(mask_rate, "mask_rate");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("train config: dropout must be in [0,1)");
  if (centroid_count() < batches * pool) {
    throw std::invalid_argument("train config: centroids (" + std::to_string(centroid_count()) +
                                ") must cover batches * pool = " + std::to_string(batches * pool));
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"m", c.m},
                     {"s", c.s},
                     {"n", c.n},
                     {"pool", c.pool},
                     {"batches", c.batches},
                     {"epochs", c.epochs},
                     {"lr", c.lr},
                     {"weight_decay", c.weight_decay},
                     {"dropout", c.dropout},
                     {"lambda", c.lambda},
                     {"p", c.p},
                     {"drop_rate", c.drop_rate},
                     {"mask_rate", c.mask_rate},
                     {"h", c.h},
                     {"fanout_cap", c.fanout_cap},
                     {"alpha", c.alpha},
                     {"centroids", c.centroids},
                     {"model", c.model},
                     {"seeds",
                      {{"sampling", c.seeds.sampling},
                       {"augmentation", c.seeds.augmentation},
                       {"init", c.seeds.init}}},
                     {"task", to_string(c.task)},
                     {"ablation",
                      {{"O1", c.ablation.o1_centroid_clustering},
                       {"O2", c.ablation.o2_balanced_augmentation},
                       {"O3", c.ablation.o3_orth_and_attr}}},
                     {"pretrain", c.pretrain},
                     {"kmeans",
                      {{"restarts", c.kmeans.restarts}, {"max_iter", c.kmeans.max_iter}, {"tol", c.kmeans.tol}}},
                     {"precision", precision_name(c.precision)},
                     {"embedding_cache", c.embedding_cache}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  nlohmann::json known;
  to_json(known, d);
  reject_unknown(j, known, "train config");
  c.m = j.value("m", d.m);
  c.s = j.value("s", d.s);
  c.n = j.value("n", d.n);
  c.pool = j.value("pool", d.pool);
  c.batches = j.value("batches", d.batches);
  c.epochs = j.value("epochs", d.epochs);
  c.lr = j.value("lr", d.lr);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.dropout = j.value("dropout", d.dropout);
  c.lambda = j.value("lambda", d.lambda);
  c.p = j.value("p", d.p);
  c.drop_rate = j.value("drop_rate", d.drop_rate);
  c.mask_rate = j.value("mask_rate", d.mask_rate);
  c.h = j.value("h", d.h);
  c.fanout_cap = j.value("fanout_cap", d.fanout_cap);
  c.alpha = j.value("alpha", d.alpha);
  c.centroids = j.value("centroids", d.centroids);
  c.model = d.model;
  if (j.contains("model")) {
    reject_unknown(j["model"], known["model"], "train config model");
    c.model = j["model"].get<ModelShape>();
  }
  c.seeds = d.seeds;
  if (j.contains("seeds")) {
    const auto& s = j["seeds"];
    reject_unknown(s, known["seeds"], "train config seeds");
    c.seeds.sampling = s.value("sampling", d.seeds.sampling);
    c.seeds.augmentation = s.value("augmentation", d.seeds.augmentation);
    c.seeds.init = s.value("init", d.seeds.init);
  }
  c.task = task_kind_from_string(j.value("task", to_string(d.task)));
  c.ablation = d.ablation;
  if (j.contains("ablation")) {
    const auto& a = j["ablation"];
    reject_unknown(a, known["ablation"], "train config ablation");
    c.ablation.o1_centroid_clustering = a.value("O1", true);
    c.ablation.o2_balanced_augmentation = a.value("O2", true);
    c.ablation.o3_orth_and_attr = a.value("O3", true);
  }
  c.pretrain = j.contains("pretrain") ? j["pretrain"].get<PretrainConfig>() : d.pretrain;
  c.kmeans = d.kmeans;
  if (j.contains("kmeans")) {
    const auto& k = j["kmeans"];
    reject_unknown(k, known["kmeans"], "train config kmeans");
    c.kmeans.restarts = k.value("restarts", d.kmeans.restarts);
    c.kmeans.max_iter = k.value("max_iter", d.kmeans.max_iter);
    c.kmeans.tol = k.value("tol", d.kmeans.tol);
  }
  c.precision = precision_from_string(j.value("precision", precision_name(d.precision)));
  c.embedding_cache = j.value("embedding_cache", d.embedding_cache);
}

// ---------------------------------------------------------------------------
// Training

ProtectionPlan way_protection(const Episode& ep, std::size_t way, bool balanced, double p,
                              std::uint64_t seed) {
  if (!balanced) return {};
  if (way >= ep.groups.size()) throw std::invalid_argument("way_protection: episode has no centroid group " + std::to_string(way));
  std::set<NodeId> examples, queries;
  auto collect = [way](const std::vector<Labeled>& items, std::set<NodeId>& into) {
    for (const Labeled& l : items) {
      if (l.cls != way) continue;
      into.insert(l.input.first);
      if (l.input.is_pair()) into.insert(l.input.second);
    }
  };
  collect(ep.support, examples);
  collect(ep.queries, queries);
  return build_protection_plan(ep.groups[way].subgraph, examples, queries, p, seed);
}

TrainResult train(const Graph& source, const TrainConfig& cfg_in) {
  TrainConfig cfg = cfg_in;
  cfg.validate();
  if (cfg.model.d_in == 0) {
    cfg.model.d_in = source.feature_dim();
  } else if (cfg.model.d_in != source.feature_dim()) {
    throw DimensionError("config d_in=" + std::to_string(cfg.model.d_in) + " but source graph has " +
                         std::to_string(source.feature_dim()) + " features");
  }
  const std::size_t total = cfg.centroid_count();
  if (total > source.node_count()) {
    throw std::invalid_argument("train: " + std::to_string(total) + " centroids requested from a graph with " +
                                std::to_string(source.node_count()) + " nodes");
  }

  TrainResult result;
  ParamSet params = init_model_params(cfg.model, cfg.seeds.init, cfg.precision);

  CentroidSet centroids;
  if (cfg.ablation.o1_centroid_clustering) {
    const EmbeddingTable emb = cfg.embedding_cache.empty()
                                   ? pretrain(source, cfg.pretrain).embeddings
                                   : pretrain_cached(source, cfg.pretrain, cfg.embedding_cache);
    centroids = collect_centroids(emb, total, cfg.alpha, cfg.kmeans, cfg.seeds.sampling);
  } else {
    centroids = random_centroids(source.node_count(), total, cfg.seeds.sampling);
  }

  PretrainEpisodeSpec spec;
  spec.m = cfg.m;
  spec.s = cfg.s;
  spec.n = cfg.n;
  spec.pool = cfg.pool;
  spec.h = cfg.h;
  spec.fanout_cap = cfg.fanout_cap;
  spec.kind = cfg.task;

  AdamState adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;
  const double lambda = cfg.ablation.o3_orth_and_attr ? cfg.lambda : 0.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const CentroidSet order = centroids.shuffled(derive_seed(cfg.seeds.sampling, {0xe0, epoch}));
    for (std::size_t batch = 0; batch < cfg.batches; ++batch) {
      const std::size_t step = epoch * cfg.batches + batch;
      const Episode ep = sample_pretrain_episode(source, order, batch, spec,
                                                 derive_seed(cfg.seeds.sampling, {0xe1, epoch, batch}));
      if (ep.support.size() + ep.queries.size() != cfg.m * (cfg.s + cfg.n)) {
        throw std::logic_error("train: episode consumed " + std::to_string(ep.support.size() + ep.queries.size()) +
                               " inputs, expected " + std::to_string(cfg.m * (cfg.s + cfg.n)));
      }
      for (const std::string& w : ep.warnings) result.warnings.push_back("step " + std::to_string(step) + ": " + w);

      std::vector<ProtectionPlan> plans;
      for (std::size_t way = 0; way < cfg.m; ++way) {
        plans.push_back(way_protection(ep, way, cfg.ablation.o2_balanced_augmentation, cfg.p,
                                       derive_seed(cfg.seeds.augmentation, {0xa0, epoch, batch, way})));
      }
      std::size_t index = 0;
      auto contexts = [&](const std::vector<Labeled>& items) {
        std::vector<ContextGraph> out;
        for (const Labeled& l : items) {
          const ContextGraph ctx = build_context(source, l.input, cfg.h, cfg.fanout_cap,
                                                 derive_seed(cfg.seeds.sampling, {0xe2, epoch, batch, index}));
          out.push_back(augment(ctx, plans[l.cls], cfg.drop_rate, cfg.mask_rate,
                                derive_seed(cfg.seeds.augmentation, {0xa1, epoch, batch, index})));
          ++index;
        }
        return out;
      };
      const std::vector<ContextGraph> support_ctx = contexts(ep.support);
      const std::vector<ContextGraph> query_ctx = contexts(ep.queries);

      try {
        Tape tape(cfg.precision);
        ParamBinding bind(tape, params);
        EncodeOptions opts{cfg.dropout, true, derive_seed(cfg.seeds.augmentation, {0xd0, epoch, batch})};
        const EpisodeForward fw = forward_episode(bind, ep, support_ctx, query_ctx, cfg.model, opts);
        Var ce = ce_loss(fw.scores.logits, fw.truth);
        Var orth = orth_loss(fw.scores.labels);
        Var attr = cfg.ablation.o3_orth_and_attr ? attr_loss(tape, fw.encoded) : tape.constant(Tensor(1, 1));
        LossBreakdown row;
        Var loss = total_loss(ce, orth, attr, lambda, &row);
        tape.backward(loss);
        adam_step(params, bind.grads(), adam);
        result.log.push_back(row);
      } catch (const NumericError& e) {
        throw TrainError(step, e.what());
      }
      if (!params.all_finite()) throw TrainError(step, "non-finite parameter after update");
    }
  }

  nlohmann::json resolved;
  to_json(resolved, cfg);
  result.checkpoint.config = {{"train", resolved}, {"source_graph", source.content_hash()}};
  result.checkpoint.params = std::move(params);
  return result;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const LossBreakdown> log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,ce,orth,attr,total\n";
  for (std::size_t i = 0; i < log.size(); ++i) {
    out << i << ',' << format_real(log[i].ce) << ',' << format_real(log[i].orth) << ','
        << format_real(log[i].attr) << ',' << format_real(log[i].total) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Evaluation

void to_json(nlohmann::json& j, const EvalConfig& c) {
  j = nlohmann::json{{"ways", c.m},
                     {"shots", c.k_shots},
                     {"queries", c.n},
                     {"episodes", c.episodes},
                     {"seed", c.seed},
                     {"h", c.h},
                     {"fanout_cap", c.fanout_cap},
                     {"threads", c.threads},
                     {"zero_shot_fallback", c.zero_shot_fallback}};
  if (c.task) j["task"] = to_string(*c.task);
}

MeanStd mean_std(std::span<const double> xs) {
  if (xs.empty()) return {};
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

namespace {

/// Fraction of queries whose cluster maps to their class under the best
/// one-to-one cluster/class assignment.
double best_matching_accuracy(std::span<const std::size_t> cluster, std::span<const std::size_t> truth,
                              std::size_t m) {
  if (m > 8) throw std::invalid_argument("zero-shot fallback supports at most 8 ways");
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hit += perm[cluster[i]] == truth[i];
    best = std::max(best, hit);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(truth.size());
}

double run_eval_episode(const Checkpoint& ckpt, const ModelShape& shape, const Graph& target, TaskKind kind,
                        const EvalConfig& cfg, std::size_t e) {
  const std::uint64_t ep_seed = derive_seed(cfg.seed, {0xee, e});
  const bool zero_shot = cfg.k_shots == 0 && cfg.zero_shot_fallback;
  // The fallback draws one support example per class and ignores it.
  const Episode ep = sample_downstream_episode(target, cfg.m, zero_shot ? 1 : cfg.k_shots, cfg.n, kind, ep_seed);
  const auto support_ctx = plain_contexts(target, ep.support, cfg.h, cfg.fanout_cap, ep_seed, 0);
  const auto query_ctx = plain_contexts(target, ep.queries, cfg.h, cfg.fanout_cap, ep_seed, ep.support.size());

  Tape tape(ckpt.params.precision(), /*grad_enabled=*/false);
  ParamBinding bind(tape, ckpt.params);
  std::vector<std::size_t> truth;
  for (const Labeled& l : ep.queries) truth.push_back(l.cls);

  if (zero_shot) {
    Tensor points(query_ctx.size(), shape.d);
    for (std::size_t i = 0; i < query_ctx.size(); ++i) {
      const Tensor& row = encode_context(bind, query_ctx[i]).pooled.value();
      std::copy(row.data.begin(), row.data.end(), points.row_span(i).begin());
    }
    const KMeansResult km = kmeans(points, cfg.m, 5, 100, 1e-6, derive_seed(ep_seed, {0x6b}));
    return best_matching_accuracy(km.assignments, truth, cfg.m);
  }

  const EpisodeForward fw = forward_episode(bind, ep, support_ctx, query_ctx, shape);
  const std::vector<std::size_t> pred = predict(fw.scores.logits.value());
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace

EvalReport evaluate(const Checkpoint& ckpt, const Graph& target, const EvalConfig& cfg) {
  if (cfg.episodes == 0) throw std::invalid_argument("evaluate: episodes must be >= 1");
  const ModelShape shape = checkpoint_shape(ckpt);
  if (shape.d_in != target.feature_dim()) {
    throw DimensionError("checkpoint expects d_in=" + std::to_string(shape.d_in) + " but target graph has " +
                         std::to_string(target.feature_dim()) +
                         " features; feature-projection adapters are not supported");
  }
  const TaskKind kind = cfg.task.value_or(checkpoint_task(ckpt));

  EvalReport report;
  report.hash_before = params_hash(ckpt.params);
  report.accuracies.assign(cfg.episodes, 0.0);
  parallel_for(cfg.episodes, cfg.threads,
               [&](std::size_t e) { report.accuracies[e] = run_eval_episode(ckpt, shape, target, kind, cfg, e); });
  report.hash_after = params_hash(ckpt.params);
  if (report.hash_after != report.hash_before) {
    throw std::logic_error("evaluate: parameters changed during evaluation");
  }
  const MeanStd ms = mean_std(report.accuracies);
  report.mean = ms.mean;
  report.std = ms.std;
  report.episodes = cfg.episodes;
  EvalConfig echo = cfg;
  echo.task = kind;
  to_json(report.config, echo);
  return report;
}

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "episode,accuracy\n";
  for (std::size_t i = 0; i < report.accuracies.size(); ++i) out << i << ',' << format_real(report.accuracies[i]) << '\n';
}

// ---------------------------------------------------------------------------
// Sweeps and ablations

std::vector<SweepRow> sweep_lambda_p(const Graph& source, const Graph& target, const TrainConfig& base,
                                     std::span<const double> lambdas, std::span<const double> ps,
                                     const EvalConfig& eval, std::size_t jobs) {
  if (lambdas.empty() || ps.empty()) throw std::invalid_argument("sweep: empty grid");
  std::vector<SweepRow> rows(lambdas.size() * ps.size());
  parallel_for(rows.size(), jobs, [&](std::size_t cell) {
    TrainConfig cfg = base;
    cfg.lambda = lambdas[cell / ps.size()];
    cfg.p = ps[cell % ps.size()];
    const EvalReport r = evaluate(train(source, cfg).checkpoint, target, eval);
    rows[cell] = {{{"lambda", cfg.lambda}, {"p", cfg.p}}, r.mean, r.std};
  });
  return rows;
}

std::vector<SweepRow> sweep_shots(const Checkpoint& ckpt, const Graph& target,
                                  std::span<const std::size_t> shots, const EvalConfig& eval) {
  if (shots.empty()) throw std::invalid_argument("sweep: empty grid");
  std::vector<SweepRow> rows;
  for (std::size_t k : shots) {
    EvalConfig cfg = eval;
    cfg.k_shots = k;
    const EvalReport r = evaluate(ckpt, target, cfg);
    rows.push_back({{{"shots", static_cast<double>(k)}}, r.mean, r.std});
  }
  return rows;
}

std::vector<SweepRow> sweep_ways(const Checkpoint& ckpt, const Graph& target,
                                 std::span<const std::size_t> ways, const EvalConfig& eval) {
  if (ways.empty()) throw std::invalid_argument("sweep: empty grid");
  std::vector<SweepRow> rows;
  for (std::size_t m : ways) {
    EvalConfig cfg = eval;
    cfg.m = m;
    const EvalReport r = evaluate(ckpt, target, cfg);
    rows.push_back({{{"ways", static_cast<double>(m)}}, r.mean, r.std});
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (rows.empty()) return;
  for (const auto& [name, _] : rows.front().coords) out << name << ',';
  out << "mean,std\n";
  for (const SweepRow& r : rows) {
    for (const auto& [_, v] : r.coords) out << format_real(v) << ',';
    out << format_real(r.mean) << ',' << format_real(r.std) << '\n';
  }
}

std::vector<Ablation> ablation_grid() {
  return {Ablation::all_off(), Ablation{true, false, false}, Ablation{true, true, false},
          Ablation{true, false, true}, Ablation{true, true, true}};
}

std::vector<AblationRow> ablate(const Graph& source, const Graph& target, const TrainConfig& base,
                                std::span<const Seeds> seeds, const EvalConfig& eval,
                                std::span<const Ablation> grid) {
  if (seeds.empty() || grid.empty()) throw std::invalid_argument("ablate: empty seed list or grid");
  std::vector<AblationRow> rows;
  for (const Ablation& a : grid) {
    AblationRow row;
    row.name = a.name();
    row.flags = a;
    std::vector<double> all;
    for (const Seeds& s : seeds) {
      TrainConfig cfg = base;
      cfg.ablation = a;
      cfg.seeds = s;
      const EvalReport r = evaluate(train(source, cfg).checkpoint, target, eval);
      row.seed_means.push_back(r.mean);
      all.insert(all.end(), r.accuracies.begin(), r.accuracies.end());
    }
    const MeanStd ms = mean_std(all);
    row.mean = ms.mean;
    row.std = ms.std;
    row.seed_std = mean_std(row.seed_means).std;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "config,O1,O2,O3,mean,std,seed_std\n";
  for (const AblationRow& r : rows) {
    out << r.name << ',' << r.flags.o1_centroid_clustering << ',' << r.flags.o2_balanced_augmentation << ','
        << r.flags.o3_orth_and_attr << ',' << format_real(r.mean) << ',' << format_real(r.std) << ','
        << format_real(r.seed_std) << '\n';
  }
}

}  // namespace ctp
