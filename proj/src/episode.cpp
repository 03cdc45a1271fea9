#include "ctp/episode.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ctp/rng.hpp"

namespace ctp {

std::string to_string(TaskKind k) { return k == TaskKind::node ? "node" : "link"; }

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "node") return TaskKind::node;
  if (s == "link") return TaskKind::link;
  throw std::invalid_argument("unknown task kind '" + s + "' (expected node|link)");
}

CentroidSet CentroidSet::shuffled(std::uint64_t seed) const {
  std::vector<std::size_t> order(nodes.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  CentroidSet out{{}, {}, alpha, k};
  for (std::size_t i : order) {
    out.nodes.push_back(nodes[i]);
    out.from_cluster.push_back(from_cluster[i]);
  }
  return out;
}

CentroidSet collect_centroids(const EmbeddingTable& emb, std::size_t total, double alpha,
                              const KMeansConfig& kmeans_cfg, std::uint64_t seed) {
  const std::size_t n = emb.table.rows;
  if (total > n) {
    throw std::invalid_argument("collect_centroids: " + std::to_string(total) + " centroids from " +
                                std::to_string(n) + " nodes");
  }
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("collect_centroids: alpha must be in [0,1]");
  const auto k = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(total)));

  CentroidSet out;
  out.alpha = alpha;
  out.k = k;
  std::vector<bool> taken(n, false);
  if (k > 0) {
    const KMeansResult km = kmeans(emb.table, k, kmeans_cfg.restarts, kmeans_cfg.max_iter,
                                   kmeans_cfg.tol, derive_seed(seed, {0x6b6d}));
    std::vector<std::pair<double, NodeId>> by_dist(n);
    for (std::size_t c = 0; c < k; ++c) {
      for (NodeId v = 0; v < n; ++v) {
        double d = 0.0;
        for (std::size_t j = 0; j < emb.table.cols; ++j) {
          const double x = emb.table.at(v, j) - km.means.at(c, j);
          d += x * x;
        }
        by_dist[v] = {d, v};
      }
      std::sort(by_dist.begin(), by_dist.end());
      for (const auto& [_, v] : by_dist) {
        if (!taken[v]) {
          taken[v] = true;
          out.nodes.push_back(v);
          out.from_cluster.push_back(true);
          break;
        }
      }
    }
  }
  std::vector<NodeId> rest;
  for (NodeId v = 0; v < n; ++v)
    if (!taken[v]) rest.push_back(v);
  Rng rng(derive_seed(seed, {0x7261}));
  for (NodeId v : sample_without_replacement(std::move(rest), total - out.nodes.size(), rng)) {
    out.nodes.push_back(v);
    out.from_cluster.push_back(false);
  }
  return out;
}

CentroidSet random_centroids(std::size_t node_count, std::size_t total, std::uint64_t seed) {
  if (total > node_count) throw std::invalid_argument("random_centroids: total exceeds node count");
  std::vector<NodeId> all(node_count);
  std::iota(all.begin(), all.end(), 0);
  Rng rng(seed);
  CentroidSet out;
  out.nodes = sample_without_replacement(std::move(all), total, rng);
  out.from_cluster.assign(out.nodes.size(), false);
  return out;
}

nlohmann::json episode_to_json(const Episode& ep) {
  auto inputs = [](const std::vector<Labeled>& xs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Labeled& l : xs) {
      nlohmann::json x = l.input.is_pair() ? nlohmann::json::array({l.input.first, l.input.second})
                                           : nlohmann::json(l.input.first);
      arr.push_back({{"input", x}, {"class", l.cls}});
    }
    return arr;
  };
  nlohmann::json j{{"task", to_string(ep.kind)},
                   {"label_mode", ep.mode == LabelMode::pseudo ? "pseudo" : "true"},
                   {"classes", ep.classes},
                   {"support", inputs(ep.support)},
                   {"queries", inputs(ep.queries)},
                   {"seed", ep.seed},
                   {"with_replacement", ep.with_replacement}};
  if (!ep.groups.empty()) {
    nlohmann::json cs = nlohmann::json::array();
    for (const CentroidGroup& g : ep.groups) cs.push_back(g.centroid);
    j["centroids"] = cs;
  }
  if (!ep.warnings.empty()) j["warnings"] = ep.warnings;
  return j;
}

namespace {

std::vector<TaskInput> candidate_inputs(const Graph& g, const Subgraph& sub, TaskKind kind) {
  std::vector<TaskInput> out;
  if (kind == TaskKind::node) {
    for (NodeId v : sub.nodes) out.push_back({v, kNoNode});
  } else {
    for (std::uint32_t e : sub.edges) out.push_back({g.edges()[e].src, g.edges()[e].dst});
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }
  return out;
}

}  // namespace

Episode sample_pretrain_episode(const Graph& g, const CentroidSet& centroids,
                                std::size_t batch_index, const PretrainEpisodeSpec& spec,
                                std::uint64_t seed) {
  const std::size_t per_class = spec.s + spec.n;
  if (spec.m == 0 || spec.s == 0 || spec.n == 0) throw std::invalid_argument("sample_pretrain_episode: m, s, n must be >= 1");
  if (spec.pool < spec.m) throw std::invalid_argument("sample_pretrain_episode: centroid pool smaller than m");
  const std::size_t start = batch_index * spec.pool;
  if (start + spec.pool > centroids.size()) {
    throw std::invalid_argument("sample_pretrain_episode: batch " + std::to_string(batch_index) +
                                " needs centroids [" + std::to_string(start) + ", " +
                                std::to_string(start + spec.pool) + ") but only " +
                                std::to_string(centroids.size()) + " exist");
  }
  Rng rng(seed);
  std::vector<NodeId> order(centroids.nodes.begin() + static_cast<std::ptrdiff_t>(start),
                            centroids.nodes.begin() + static_cast<std::ptrdiff_t>(start + spec.pool));
  std::shuffle(order.begin(), order.end(), rng);

  Episode ep;
  ep.kind = spec.kind;
  ep.mode = LabelMode::pseudo;
  ep.seed = seed;
  std::set<TaskInput> used;
  std::size_t next = 0;

  for (std::size_t way = 0; way < spec.m; ++way) {
    std::vector<TaskInput> chosen;
    std::optional<CentroidGroup> group;
    std::optional<CentroidGroup> largest;
    std::size_t largest_size = 0;
    for (std::size_t attempt = 0; attempt <= spec.retries && next < order.size(); ++attempt) {
      const NodeId o = order[next++];
      Subgraph sub = khop_subgraph(g, o, spec.h, spec.fanout_cap, derive_seed(seed, {0x5a, o}));
      std::vector<TaskInput> pool;
      for (const TaskInput& x : candidate_inputs(g, sub, spec.kind))
        if (used.count(x) == 0) pool.push_back(x);
      if (pool.size() >= per_class) {
        chosen = sample_without_replacement(std::move(pool), per_class, rng);
        group = CentroidGroup{o, std::move(sub)};
        break;
      }
      if (!largest || pool.size() > largest_size) {
        largest_size = pool.size();
        largest = CentroidGroup{o, std::move(sub)};
      }
    }
    if (!group) {
      if (!largest) throw std::runtime_error("sample_pretrain_episode: centroid pool exhausted");
      auto all = candidate_inputs(g, largest->subgraph, spec.kind);
      if (all.empty()) {
        throw std::runtime_error("sample_pretrain_episode: centroid " + std::to_string(largest->centroid) +
                                 " has no " + (spec.kind == TaskKind::node ? "nodes" : "edges"));
      }
      for (std::size_t i = 0; i < per_class; ++i) chosen.push_back(all[uniform_index(rng, all.size())]);
      ep.with_replacement = true;
      ep.warnings.push_back("centroid " + std::to_string(largest->centroid) + ": " +
                            std::to_string(all.size()) + " inputs for " + std::to_string(per_class) +
                            " draws, sampled with replacement");
      group = std::move(largest);
    }
    for (std::size_t i = 0; i < per_class; ++i) {
      used.insert(chosen[i]);
      (i < spec.s ? ep.support : ep.queries).push_back({chosen[i], way});
    }
    ep.classes.push_back(static_cast<ClassId>(way));
    ep.groups.push_back(std::move(*group));
  }
  return ep;
}

Episode sample_downstream_episode(const Graph& g, std::size_t m, std::size_t k_shots, std::size_t n,
                                  TaskKind kind, std::uint64_t seed) {
  if (m == 0 || n == 0) throw std::invalid_argument("sample_downstream_episode: m and n must be >= 1");
  if (k_shots == 0) {
    throw std::invalid_argument("at least one support example per class required");
  }
  std::map<ClassId, std::vector<TaskInput>> by_class;
  if (kind == TaskKind::node) {
    for (const auto& [v, c] : g.node_labels()) by_class[c].push_back({v, kNoNode});
  } else {
    for (const Edge& e : g.edges()) by_class[static_cast<ClassId>(e.rel)].push_back({e.src, e.dst});
  }
  const std::size_t per_class = k_shots + n;
  std::vector<ClassId> eligible;
  std::ostringstream deficient;
  for (const auto& [c, items] : by_class) {
    if (items.size() >= per_class) {
      eligible.push_back(c);
    } else {
      deficient << " class " << c << " has " << items.size() << ";";
    }
  }
  if (eligible.size() < m) {
    throw std::invalid_argument("sample_downstream_episode: need " + std::to_string(m) +
                                " classes with >= " + std::to_string(per_class) + " " +
                                (kind == TaskKind::node ? "labeled nodes" : "edges") + ", found " +
                                std::to_string(eligible.size()) + "." + deficient.str());
  }
  Rng rng(seed);
  Episode ep;
  ep.kind = kind;
  ep.mode = LabelMode::truth;
  ep.seed = seed;
  ep.classes = sample_without_replacement(std::move(eligible), m, rng);
  for (std::size_t ci = 0; ci < m; ++ci) {
    const auto chosen = sample_without_replacement(by_class.at(ep.classes[ci]), per_class, rng);
    for (std::size_t i = 0; i < per_class; ++i) {
      (i < k_shots ? ep.support : ep.queries).push_back({chosen[i], ci});
    }
  }
  return ep;
}

}  // namespace ctp
