#include "ctp/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ctp/checkpoint.hpp"
#include "ctp/format.hpp"
#include "ctp/rng.hpp"

namespace ctp {

Graph::Graph(Tensor features, std::vector<Edge> edges, std::size_t relation_count,
             std::map<NodeId, ClassId> node_labels)
    : features_(std::move(features)),
      edges_(std::move(edges)),
      relation_count_(relation_count),
      node_labels_(std::move(node_labels)) {
  const std::size_t n = features_.rows;
  if (!features_.all_finite()) throw GraphError("feature matrix contains non-finite values");
  std::vector<std::size_t> deg(n, 0);
  for (const Edge& e : edges_) {
    if (e.src >= n || e.dst >= n) {
      throw GraphError("edge endpoint out of range (" + std::to_string(e.src) + ", " +
                       std::to_string(e.dst) + ") for " + std::to_string(n) + " nodes");
    }
    if (e.rel >= relation_count_) throw GraphError("relation id " + std::to_string(e.rel) + " out of range");
    if (e.src == e.dst) throw GraphError("self-loop on node " + std::to_string(e.src));
    ++deg[e.src];
    ++deg[e.dst];
  }
  for (const auto& [v, _] : node_labels_) {
    if (v >= n) throw GraphError("label for unknown node " + std::to_string(v));
  }
  offsets_.assign(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) offsets_[v + 1] = offsets_[v] + deg[v];
  incidence_.resize(offsets_[n]);
  std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (std::uint32_t i = 0; i < edges_.size(); ++i) {
    const Edge& e = edges_[i];
    incidence_[fill[e.src]++] = {e.dst, e.rel, i};
    incidence_[fill[e.dst]++] = {e.src, e.rel, i};
  }
  node_names.resize(n);
  for (std::size_t v = 0; v < n; ++v) node_names[v] = std::to_string(v);
  relation_names.resize(relation_count_);
  for (std::size_t r = 0; r < relation_count_; ++r) relation_names[r] = std::to_string(r);
}

std::string Graph::content_hash() const {
  std::vector<std::uint8_t> buf;
  auto put = [&buf](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  };
  const std::uint64_t dims[] = {features_.rows, features_.cols, relation_count_, edges_.size()};
  put(dims, sizeof(dims));
  put(features_.data.data(), features_.data.size() * sizeof(double));
  for (const Edge& e : edges_) put(&e, sizeof(Edge));
  for (const auto& [v, c] : node_labels_) {
    put(&v, sizeof(v));
    put(&c, sizeof(c));
  }
  return sha256_hex(buf);
}

bool Subgraph::contains(NodeId v) const { return std::find(nodes.begin(), nodes.end(), v) != nodes.end(); }

// ---------------------------------------------------------------------------
// TSV ingestion

namespace {

struct TsvFile {
  std::string name;
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;  // (line number, fields)
};

[[noreturn]] void row_error(const TsvFile& f, std::size_t line, const std::string& what) {
  throw GraphError(f.name + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

TsvFile read_tsv(const std::filesystem::path& path, const std::vector<std::string>& header) {
  TsvFile f{path.filename().string(), {}};
  std::ifstream in(path);
  if (!in) throw GraphError("missing " + f.name);
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') row_error(f, lineno, "CRLF line endings not accepted");
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (!have_header) {
      if (fields != header) row_error(f, lineno, "unexpected header");
      have_header = true;
      continue;
    }
    if (fields.size() != header.size()) {
      row_error(f, lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                               std::to_string(fields.size()));
    }
    f.rows.emplace_back(lineno, std::move(fields));
  }
  if (!have_header) throw GraphError(f.name + ": empty file (header required)");
  return f;
}

std::optional<double> parse_real(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

}  // namespace

Graph load_graph(const std::filesystem::path& dir) {
  const TsvFile nodes = read_tsv(dir / "nodes.tsv", {"node_id", "features"});
  if (!std::filesystem::exists(dir / "edges.tsv")) throw GraphError("missing edges.tsv");
  const TsvFile edges = read_tsv(dir / "edges.tsv", {"src", "rel", "dst"});

  std::unordered_map<std::string, NodeId> node_index;
  std::vector<std::string> node_names;
  std::vector<std::vector<double>> rows;
  for (const auto& [line, fields] : nodes.rows) {
    if (fields[0].empty()) row_error(nodes, line, "empty node id");
    if (!node_index.emplace(fields[0], static_cast<NodeId>(node_names.size())).second) {
      row_error(nodes, line, "duplicate node id '" + fields[0] + "'");
    }
    node_names.push_back(fields[0]);
    std::vector<double> feat;
    for (const std::string& tok : split(fields[1], ',')) {
      auto v = parse_real(tok);
      if (!v) row_error(nodes, line, "malformed feature value '" + tok + "'");
      feat.push_back(*v);
    }
    if (!rows.empty() && feat.size() != rows.front().size()) {
      row_error(nodes, line, "feature width " + std::to_string(feat.size()) + " differs from " +
                                 std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(feat));
  }
  const std::size_t width = rows.empty() ? 0 : rows.front().size();
  Tensor features(rows.size(), width);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].begin(), rows[i].end(), features.data.begin() + static_cast<std::ptrdiff_t>(i * width));

  // Relation ids: numeric order when every name is an integer, else first appearance.
  std::vector<std::string> rel_order;
  std::set<std::string> seen;
  bool all_numeric = true;
  for (const auto& [line, fields] : edges.rows) {
    if (seen.insert(fields[1]).second) {
      rel_order.push_back(fields[1]);
      all_numeric = all_numeric && parse_int(fields[1]).has_value();
    }
  }
  if (all_numeric) {
    std::sort(rel_order.begin(), rel_order.end(),
              [](const std::string& a, const std::string& b) { return *parse_int(a) < *parse_int(b); });
  }
  std::unordered_map<std::string, RelId> rel_index;
  for (std::size_t i = 0; i < rel_order.size(); ++i) rel_index[rel_order[i]] = static_cast<RelId>(i);

  auto lookup = [&](const TsvFile& f, std::size_t line, const std::string& id) {
    auto it = node_index.find(id);
    if (it == node_index.end()) row_error(f, line, "dangling node id '" + id + "'");
    return it->second;
  };

  std::vector<Edge> edge_list;
  edge_list.reserve(edges.rows.size());
  for (const auto& [line, fields] : edges.rows) {
    const NodeId s = lookup(edges, line, fields[0]);
    const NodeId d = lookup(edges, line, fields[2]);
    if (s == d) row_error(edges, line, "self-loop on '" + fields[0] + "'");
    edge_list.push_back({s, rel_index.at(fields[1]), d});
  }

  std::map<NodeId, ClassId> labels;
  if (std::filesystem::exists(dir / "labels.tsv")) {
    const TsvFile lf = read_tsv(dir / "labels.tsv", {"node_id", "class"});
    for (const auto& [line, fields] : lf.rows) {
      const NodeId v = lookup(lf, line, fields[0]);
      auto c = parse_int(fields[1]);
      if (!c || *c < 0 || *c > std::numeric_limits<ClassId>::max()) {
        row_error(lf, line, "class must be a non-negative integer, got '" + fields[1] + "'");
      }
      if (!labels.emplace(v, static_cast<ClassId>(*c)).second) row_error(lf, line, "duplicate label");
    }
  }

  Graph g(std::move(features), std::move(edge_list), rel_order.size(), std::move(labels));
  g.node_names = std::move(node_names);
  g.relation_names = std::move(rel_order);
  return g;
}

void save_graph(const Graph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&dir](const char* name) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw GraphError(std::string("cannot write ") + name);
    return out;
  };
  {
    auto out = open("nodes.tsv");
    out << "node_id\tfeatures\n";
    for (std::size_t v = 0; v < g.node_count(); ++v) {
      out << g.node_names[v] << '\t';
      const auto row = g.features().row_span(v);
      for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << format_real(row[j]);
      out << '\n';
    }
  }
  {
    auto out = open("edges.tsv");
    out << "src\trel\tdst\n";
    for (const Edge& e : g.edges())
      out << g.node_names[e.src] << '\t' << g.relation_names[e.rel] << '\t' << g.node_names[e.dst] << '\n';
  }
  if (!g.node_labels().empty()) {
    auto out = open("labels.tsv");
    out << "node_id\tclass\n";
    for (const auto& [v, c] : g.node_labels()) out << g.node_names[v] << '\t' << c << '\n';
  }
}

// ---------------------------------------------------------------------------
// Generators

namespace {

std::vector<std::vector<double>> random_unit_means(std::size_t count, std::size_t d, double scale,
                                                   Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> means(count, std::vector<double>(d));
  for (auto& m : means) {
    double norm = 0.0;
    for (double& x : m) {
      x = normal(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : m) x = norm > 0 ? scale * x / norm : 0.0;
  }
  return means;
}

}  // namespace

Graph gen_planted_partition(std::size_t communities, std::size_t nodes_per_community, double p_in,
                            double p_out, std::size_t d_in, double feature_shift,
                            std::uint64_t seed) {
  if (communities < 2) throw std::invalid_argument("gen_planted_partition: need >= 2 communities");
  if (!(p_out >= 0.0 && p_out < p_in && p_in <= 1.0)) {
    throw std::invalid_argument("gen_planted_partition: require 0 <= p_out < p_in <= 1");
  }
  if (d_in == 0 || nodes_per_community == 0) {
    throw std::invalid_argument("gen_planted_partition: empty feature dimension or community");
  }
  Rng rng(seed);
  const std::size_t n = communities * nodes_per_community;
  const auto means = random_unit_means(communities, d_in, feature_shift, rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  Tensor features(n, d_in);
  std::map<NodeId, ClassId> labels;
  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t c = v / nodes_per_community;
    labels.emplace(static_cast<NodeId>(v), static_cast<ClassId>(c));
    for (std::size_t j = 0; j < d_in; ++j) features.at(v, j) = means[c][j] + noise(rng);
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const bool same = u / nodes_per_community == v / nodes_per_community;
      if (unit(rng) < (same ? p_in : p_out)) {
        edges.push_back({static_cast<NodeId>(u), 0, static_cast<NodeId>(v)});
      }
    }
  }
  return Graph(std::move(features), std::move(edges), 1, std::move(labels));
}

Graph gen_relational(std::size_t entities, std::size_t relation_count, std::size_t edge_count,
                     std::size_t d_in, std::uint64_t seed, double group_shift, double preference) {
  if (relation_count < 2) throw std::invalid_argument("gen_relational: need >= 2 relations");
  if (entities < 2 || d_in == 0) throw std::invalid_argument("gen_relational: too few entities or zero d_in");
  const std::size_t capacity = relation_count * entities * (entities - 1);
  if (edge_count > capacity) {
    throw std::invalid_argument("gen_relational: " + std::to_string(edge_count) +
                                " edges exceed simple-graph capacity " + std::to_string(capacity));
  }
  std::size_t groups = 2;
  while (groups * (groups - 1) < relation_count) ++groups;
  groups = std::min(groups, entities);

  Rng rng(seed);
  std::vector<std::size_t> group_of(entities);
  for (std::size_t v = 0; v < entities; ++v) group_of[v] = v % groups;
  std::shuffle(group_of.begin(), group_of.end(), rng);
  std::vector<std::vector<NodeId>> members(groups);
  for (std::size_t v = 0; v < entities; ++v) members[group_of[v]].push_back(static_cast<NodeId>(v));

  // Relation r -> ordered group pair (a, b), a != b, enumerated in a seeded order.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < groups; ++a)
    for (std::size_t b = 0; b < groups; ++b)
      if (a != b) pairs.emplace_back(a, b);
  std::shuffle(pairs.begin(), pairs.end(), rng);

  const auto means = random_unit_means(groups, d_in, group_shift, rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  Tensor features(entities, d_in);
  std::map<NodeId, ClassId> labels;
  for (std::size_t v = 0; v < entities; ++v) {
    labels.emplace(static_cast<NodeId>(v), static_cast<ClassId>(group_of[v]));
    for (std::size_t j = 0; j < d_in; ++j) features.at(v, j) = means[group_of[v]][j] + noise(rng);
  }

  std::set<std::tuple<NodeId, RelId, NodeId>> used;
  std::vector<Edge> edges;
  edges.reserve(edge_count);
  std::bernoulli_distribution prefer(preference);
  for (std::size_t i = 0; i < edge_count; ++i) {
    const RelId r = static_cast<RelId>(i % relation_count);
    const auto [ga, gb] = pairs[r % pairs.size()];
    bool placed = false;
    for (int attempt = 0; attempt < 256 && !placed; ++attempt) {
      NodeId s, d;
      if (prefer(rng)) {
        s = members[ga][uniform_index(rng, members[ga].size())];
        d = members[gb][uniform_index(rng, members[gb].size())];
      } else {
        s = static_cast<NodeId>(uniform_index(rng, entities));
        d = static_cast<NodeId>(uniform_index(rng, entities));
      }
      if (s == d || !used.emplace(s, r, d).second) continue;
      edges.push_back({s, r, d});
      placed = true;
    }
    if (!placed) {
      // Saturated region: take a uniformly random free triple for this relation.
      std::vector<std::pair<NodeId, NodeId>> free;
      for (NodeId s = 0; s < entities; ++s)
        for (NodeId d = 0; d < entities; ++d)
          if (s != d && used.count({s, r, d}) == 0) free.emplace_back(s, d);
      if (free.empty()) {
        throw std::invalid_argument("gen_relational: relation " + std::to_string(r) + " is saturated");
      }
      const auto [s, d] = free[uniform_index(rng, free.size())];
      used.emplace(s, r, d);
      edges.push_back({s, r, d});
    }
  }
  return Graph(std::move(features), std::move(edges), relation_count, std::move(labels));
}

// ---------------------------------------------------------------------------
// Sampling

Subgraph khop_subgraph(const Graph& g, NodeId anchor, std::size_t h, std::size_t fanout_cap,
                       std::uint64_t seed) {
  if (anchor >= g.node_count()) throw std::out_of_range("khop_subgraph: anchor out of range");
  if (h < 1) throw std::invalid_argument("khop_subgraph: h must be >= 1");
  Rng rng(seed);
  Subgraph sub;
  sub.anchor = anchor;
  std::unordered_map<NodeId, std::uint32_t> hop_of;
  hop_of.emplace(anchor, 0);
  sub.nodes.push_back(anchor);
  sub.hops.push_back(0);
  std::size_t frontier_begin = 0;
  for (std::uint32_t depth = 0; depth < h; ++depth) {
    const std::size_t frontier_end = sub.nodes.size();
    for (std::size_t i = frontier_begin; i < frontier_end; ++i) {
      std::vector<NodeId> fresh;
      for (const Incidence& inc : g.neighbors(sub.nodes[i])) {
        if (hop_of.count(inc.neighbor) == 0 &&
            std::find(fresh.begin(), fresh.end(), inc.neighbor) == fresh.end()) {
          fresh.push_back(inc.neighbor);
        }
      }
      if (fresh.size() > fanout_cap) {
        partial_shuffle(fresh, fanout_cap, rng);
        fresh.resize(fanout_cap);
      }
      for (NodeId v : fresh) {
        hop_of.emplace(v, depth + 1);
        sub.nodes.push_back(v);
        sub.hops.push_back(depth + 1);
      }
    }
    frontier_begin = frontier_end;
  }
  std::set<std::uint32_t> induced;
  for (NodeId v : sub.nodes)
    for (const Incidence& inc : g.neighbors(v))
      if (hop_of.count(inc.neighbor) != 0) induced.insert(inc.edge);
  sub.edges.assign(induced.begin(), induced.end());
  return sub;
}

std::vector<RandomWalk> sample_walks(const Graph& g, std::size_t walks_per_node,
                                     std::size_t walk_length, std::uint64_t seed) {
  if (walk_length < 2) throw std::invalid_argument("sample_walks: walk_length must be >= 2");
  Rng rng(seed);
  std::vector<RandomWalk> walks;
  for (NodeId v = 0; v < g.node_count(); ++v) {
    if (g.degree(v) == 0) continue;
    for (std::size_t w = 0; w < walks_per_node; ++w) {
      RandomWalk walk{v, {v}};
      walk.nodes.reserve(walk_length);
      NodeId cur = v;
      while (walk.nodes.size() < walk_length) {
        const auto nbrs = g.neighbors(cur);
        cur = nbrs[uniform_index(rng, nbrs.size())].neighbor;
        walk.nodes.push_back(cur);
      }
      walks.push_back(std::move(walk));
    }
  }
  return walks;
}

}  // namespace ctp
