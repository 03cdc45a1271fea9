#include "ctp/pretrain.hpp"

#include <cmath>
#include <stdexcept>

#include "ctp/adam.hpp"
#include "ctp/checkpoint.hpp"
#include "ctp/rng.hpp"

namespace ctp {

void to_json(nlohmann::json& j, const PretrainConfig& c) {
  j = nlohmann::json{{"d", c.d},
                     {"epochs", c.epochs},
                     {"walks_per_node", c.walks_per_node},
                     {"walk_length", c.walk_length},
                     {"window", c.window},
                     {"negatives", c.negatives},
                     {"pn_power", c.pn_power},
                     {"lr", c.lr},
                     {"weight_decay", c.weight_decay},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PretrainConfig& c) {
  const PretrainConfig defaults;
  nlohmann::json known;
  to_json(known, defaults);
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("pretrain config: unknown key '" + key + "'");
  }
  c.d = j.value("d", defaults.d);
  c.epochs = j.value("epochs", defaults.epochs);
  c.walks_per_node = j.value("walks_per_node", defaults.walks_per_node);
  c.walk_length = j.value("walk_length", defaults.walk_length);
  c.window = j.value("window", defaults.window);
  c.negatives = j.value("negatives", defaults.negatives);
  c.pn_power = j.value("pn_power", defaults.pn_power);
  c.lr = j.value("lr", defaults.lr);
  c.weight_decay = j.value("weight_decay", defaults.weight_decay);
  c.batch_size = j.value("batch_size", defaults.batch_size);
  c.seed = j.value("seed", defaults.seed);
}

std::vector<PairBatch> build_pair_batches(std::span<const RandomWalk> walks, std::size_t window,
                                          std::size_t negatives, double pn_power,
                                          std::span<const std::size_t> degrees, std::uint64_t seed,
                                          std::size_t batch_size) {
  if (walks.empty()) throw std::invalid_argument("build_pair_batches: empty walk list");
  if (window < 1 || negatives < 1) throw std::invalid_argument("build_pair_batches: window and Q must be >= 1");
  std::vector<double> weights(degrees.size());
  for (std::size_t v = 0; v < degrees.size(); ++v) {
    weights[v] = pn_power == 0.0 ? 1.0 : std::pow(static_cast<double>(degrees[v]), pn_power);
  }
  Rng rng(seed);
  std::discrete_distribution<std::size_t> noise(weights.begin(), weights.end());

  std::vector<PairEntry> entries;
  for (const RandomWalk& walk : walks) {
    const auto& w = walk.nodes;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const std::size_t lo = i >= window ? i - window : 0;
      const std::size_t hi = std::min(w.size() - 1, i + window);
      for (std::size_t j = lo; j <= hi; ++j) {
        if (j == i) continue;
        PairEntry e{w[i], w[j], {}};
        e.negatives.reserve(negatives);
        for (std::size_t q = 0; q < negatives; ++q) e.negatives.push_back(static_cast<NodeId>(noise(rng)));
        entries.push_back(std::move(e));
      }
    }
  }
  std::shuffle(entries.begin(), entries.end(), rng);
  const std::size_t per = batch_size == 0 ? entries.size() : batch_size;
  std::vector<PairBatch> batches;
  for (std::size_t start = 0; start < entries.size(); start += per) {
    const std::size_t end = std::min(entries.size(), start + per);
    batches.push_back({{std::make_move_iterator(entries.begin() + static_cast<std::ptrdiff_t>(start)),
                        std::make_move_iterator(entries.begin() + static_cast<std::ptrdiff_t>(end))}});
  }
  return batches;
}

Var skipgram_loss(Var emb, const PairBatch& batch) {
  if (batch.entries.empty()) throw std::invalid_argument("skipgram_loss: empty batch");
  std::vector<std::size_t> us, vs, neg_u, neg_v;
  for (const PairEntry& e : batch.entries) {
    us.push_back(e.u);
    vs.push_back(e.positive);
    for (NodeId n : e.negatives) {
      neg_u.push_back(e.u);
      neg_v.push_back(n);
    }
  }
  Var pos = sum_all(log_sigmoid(rows_dot(gather_rows(emb, us), gather_rows(emb, vs))));
  Var total = pos;
  if (!neg_u.empty()) {
    Var neg = sum_all(log_sigmoid(scale(rows_dot(gather_rows(emb, neg_u), gather_rows(emb, neg_v)), -1.0)));
    total = add(pos, neg);
  }
  return scale(total, -1.0 / static_cast<double>(batch.entries.size()));
}

double skipgram_loss(const EmbeddingTable& emb, const PairBatch& batch) {
  Tape tape(Precision::f64, false);
  return skipgram_loss(tape.constant(emb.table), batch).value().data[0];
}

ParamSet init_pretrain_params(std::size_t d_in, std::size_t d, std::uint64_t seed, Precision precision) {
  ParamSet p(precision);
  p.add_glorot("pre.l1.w_self", d, d_in, derive_seed(seed, {1}));
  p.add_glorot("pre.l1.w_neigh", d, d_in, derive_seed(seed, {2}));
  p.add_glorot("pre.l2.w_self", d, d, derive_seed(seed, {3}));
  p.add_glorot("pre.l2.w_neigh", d, d, derive_seed(seed, {4}));
  return p;
}

MessageIndex graph_message_index(const Graph& g) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(g.edges().size());
  for (const Edge& e : g.edges()) pairs.emplace_back(e.src, e.dst);
  return MessageIndex::undirected(g.node_count(), pairs);
}

Var pretrain_forward(ParamBinding& params, Var feats, const MessageIndex& adj) {
  Var h = sage_layer(feats, adj, params["pre.l1.w_self"], params["pre.l1.w_neigh"], true);
  return sage_layer(h, adj, params["pre.l2.w_self"], params["pre.l2.w_neigh"], false);
}

namespace {

bool losses_fail_to_decrease(const std::vector<double>& losses) {
  constexpr std::size_t kBlock = 10;
  constexpr std::size_t kSteps = 50;
  if (losses.size() < kSteps) return false;
  double prev = 0.0;
  for (std::size_t b = 0; b < kSteps / kBlock; ++b) {
    double mean = 0.0;
    for (std::size_t i = 0; i < kBlock; ++i) mean += losses[b * kBlock + i];
    mean /= kBlock;
    if (b > 0 && mean > prev) return true;
    prev = mean;
  }
  return false;
}

}  // namespace

PretrainResult pretrain(const Graph& g, const PretrainConfig& cfg) {
  if (g.node_count() == 0) throw std::invalid_argument("pretrain: empty graph");
  ParamSet params = init_pretrain_params(g.feature_dim(), cfg.d, derive_seed(cfg.seed, {0x1417}));
  const MessageIndex adj = graph_message_index(g);
  AdamState adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;

  std::vector<std::size_t> degrees(g.node_count());
  for (NodeId v = 0; v < g.node_count(); ++v) degrees[v] = g.degree(v);

  PretrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto walks = sample_walks(g, cfg.walks_per_node, cfg.walk_length, derive_seed(cfg.seed, {0x3a1c, epoch}));
    if (walks.empty()) break;  // edgeless graph: nothing to optimize
    const auto batches = build_pair_batches(walks, cfg.window, cfg.negatives, cfg.pn_power, degrees,
                                            derive_seed(cfg.seed, {0x5b2d, epoch}), cfg.batch_size);
    for (const PairBatch& batch : batches) {
      Tape tape(params.precision());
      ParamBinding bind(tape, params);
      Var emb = pretrain_forward(bind, tape.constant(g.features()), adj);
      Var loss = skipgram_loss(emb, batch);
      tape.backward(loss);
      result.step_losses.push_back(loss.value().data[0]);
      adam_step(params, bind.grads(), adam);
    }
  }

  Tape tape(params.precision(), false);
  ParamBinding bind(tape, params);
  Tensor table = pretrain_forward(bind, tape.constant(g.features()), adj).value();
  if (!table.all_finite()) throw NumericError("pretrain: non-finite embeddings");
  nlohmann::json cj = cfg;
  result.embeddings = {std::move(table), g.content_hash(), sha256_hex(cj.dump())};
  result.loss_flagged = losses_fail_to_decrease(result.step_losses);
  return result;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& emb) {
  nlohmann::json meta{{"graph_hash", emb.graph_hash}, {"config_hash", emb.config_hash}};
  write_bytes(path, encode_tensor_file(kEmbeddingMagic, meta, {{"embeddings", emb.table}}));
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  TensorFile f = decode_tensor_file(kEmbeddingMagic, read_bytes(path));
  auto it = f.tensors.find("embeddings");
  if (it == f.tensors.end()) throw FormatError("embedding file without 'embeddings' tensor");
  return {std::move(it->second), f.config.value("graph_hash", ""), f.config.value("config_hash", "")};
}

EmbeddingTable pretrain_cached(const Graph& g, const PretrainConfig& cfg,
                               const std::filesystem::path& cache_dir) {
  nlohmann::json cj = cfg;
  const std::string gh = g.content_hash();
  const std::string ch = sha256_hex(cj.dump());
  const auto path = cache_dir / (gh.substr(0, 16) + "-" + ch.substr(0, 16) + ".ctpe");
  if (std::filesystem::exists(path)) {
    EmbeddingTable cached = load_embeddings(path);
    if (cached.graph_hash == gh && cached.config_hash == ch && cached.table.rows == g.node_count()) {
      return cached;
    }
  }
  EmbeddingTable emb = pretrain(g, cfg).embeddings;
  std::filesystem::create_directories(cache_dir);
  save_embeddings(path, emb);
  // Reload so cached and fresh runs see the same f32-rounded values.
  return load_embeddings(path);
}

}  // namespace ctp
