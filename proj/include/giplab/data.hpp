#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "giplab/error.hpp"
#include "giplab/graph.hpp"
#include "giplab/rng.hpp"

namespace giplab {

// One-hot node degree; degrees >= cap share the last of cap + 1 buckets.
inline Matrix degree_onehot_features(std::size_t num_nodes, const std::vector<Edge>& edges,
                                     std::size_t cap) {
  std::vector<std::size_t> deg(num_nodes, 0);
  for (const Edge& e : edges) {
    ++deg[e.u];
    ++deg[e.v];
  }
  Matrix f(num_nodes, cap + 1);
  for (std::size_t i = 0; i < num_nodes; ++i) f(i, std::min(deg[i], cap)) = 1.0;
  return f;
}

enum class FeatureMode { DegreeOneHot, Constant };
enum class GraphFamily { ErdosRenyi, Planted2Community };

struct ManifoldSpec {
  GraphFamily family = GraphFamily::ErdosRenyi;
  double rho = 0.1;      // ER edge probability
  double rho_in = 0.5;   // planted: within-community probability
  double rho_out = 0.05; // planted: cross-community probability
  std::size_t n_min = 12;
  std::size_t n_max = 24;
};

struct SynthSpec {
  std::vector<ManifoldSpec> manifolds;
  std::size_t graphs_per_manifold = 150;
  FeatureMode feature_mode = FeatureMode::DegreeOneHot;
  std::size_t degree_cap = 16;

  void validate() const {
    if (manifolds.size() < 2) throw ConfigError("synthetic spec needs at least 2 manifolds");
    for (const ManifoldSpec& m : manifolds) {
      if (m.n_min < 3 || m.n_max < m.n_min) throw ConfigError("synthetic node range invalid");
      for (double p : {m.rho, m.rho_in, m.rho_out})
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synthetic density outside [0,1]");
    }
    if (graphs_per_manifold == 0) throw ConfigError("graphs_per_manifold must be positive");
  }
};

// Default two-manifold benchmark: sparse ER against a planted two-community
// model, so classes differ only in topology.
inline SynthSpec synth_2m_spec() {
  SynthSpec s;
  ManifoldSpec er;
  er.family = GraphFamily::ErdosRenyi;
  er.rho = 0.15;
  ManifoldSpec planted;
  planted.family = GraphFamily::Planted2Community;
  planted.rho_in = 0.5;
  planted.rho_out = 0.05;
  s.manifolds = {er, planted};
  return s;
}

inline constexpr std::uint64_t kSynthDataSeed = 20241017;

// Graph i of manifold k comes from substream (k, i); label = k.
inline std::vector<Graph> generate(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  const SeededRng root(seed);
  std::vector<Graph> out;
  out.reserve(spec.manifolds.size() * spec.graphs_per_manifold);
  for (std::size_t k = 0; k < spec.manifolds.size(); ++k) {
    const ManifoldSpec& m = spec.manifolds[k];
    for (std::size_t i = 0; i < spec.graphs_per_manifold; ++i) {
      SeededRng rng = root.substream({k, i});
      const std::size_t n = m.n_min + rng.below(m.n_max - m.n_min + 1);
      const std::size_t half = n / 2;
      Graph g;
      g.num_nodes = n;
      g.label = k;
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
          double p = m.rho;
          if (m.family == GraphFamily::Planted2Community)
            p = ((a < half) == (b < half)) ? m.rho_in : m.rho_out;
          if (rng.bernoulli(p)) g.edges.emplace_back(static_cast<NodeId>(a), static_cast<NodeId>(b));
        }
      g.features = spec.feature_mode == FeatureMode::DegreeOneHot
                       ? degree_onehot_features(n, g.edges, spec.degree_cap)
                       : Matrix(n, 1, 1.0);
      out.push_back(std::move(g));
    }
  }
  return out;
}

struct TuDataset {
  std::vector<Graph> graphs;
  CleanupCounters cleanup;
  std::size_t num_classes = 0;
};

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& path, bool required) {
  std::ifstream in(path);
  if (!in) {
    if (required) throw IngestError("missing file: " + path.string());
    return {};
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().find_first_not_of(" \t") == std::string::npos) lines.pop_back();
  return lines;
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string() : cur.substr(b, e - b + 1));
  }
  return out;
}

inline long long parse_int(const std::string& s, const std::string& file, std::size_t line) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0')
    throw IngestError(file + ":" + std::to_string(line) + ": expected integer, got '" + s + "'");
  return v;
}

inline double parse_double(const std::string& s, const std::string& file, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0')
    throw IngestError(file + ":" + std::to_string(line) + ": expected number, got '" + s + "'");
  return v;
}

}  // namespace detail

// Reads the TU text format from `directory`. Edge pairs are 1-indexed and
// directed in the files; they are merged into undirected edges here.
inline TuDataset tud_parse(const std::filesystem::path& directory, const std::string& name,
                           std::size_t degree_cap = 16) {
  const auto file = [&](const char* suffix) { return directory / (name + suffix); };
  const auto a_lines = detail::read_lines(file("_A.txt"), true);
  const auto ind_lines = detail::read_lines(file("_graph_indicator.txt"), true);
  const auto label_lines = detail::read_lines(file("_graph_labels.txt"), true);
  const auto node_label_lines = detail::read_lines(file("_node_labels.txt"), false);
  const auto attr_lines = detail::read_lines(file("_node_attributes.txt"), false);
  const std::string ind_name = name + "_graph_indicator.txt";
  const std::string a_name = name + "_A.txt";
  if (label_lines.empty()) throw IngestError(name + "_graph_labels.txt is empty");
  if (ind_lines.empty()) throw IngestError(ind_name + " is empty");

  std::vector<long long> raw_labels;
  for (std::size_t i = 0; i < label_lines.size(); ++i)
    raw_labels.push_back(detail::parse_int(detail::split_fields(label_lines[i]).at(0),
                                           name + "_graph_labels.txt", i + 1));
  const std::size_t num_graphs_declared = raw_labels.size();

  // node -> (graph id, local index)
  const std::size_t total_nodes = ind_lines.size();
  std::vector<std::size_t> node_graph(total_nodes), node_local(total_nodes);
  std::vector<std::size_t> nodes_in(num_graphs_declared, 0);
  for (std::size_t i = 0; i < total_nodes; ++i) {
    const long long g = detail::parse_int(detail::split_fields(ind_lines[i]).at(0), ind_name, i + 1);
    if (g < 1 || static_cast<std::size_t>(g) > num_graphs_declared)
      throw IngestError(ind_name + ":" + std::to_string(i + 1) + ": node references absent graph id " +
                        std::to_string(g));
    node_graph[i] = static_cast<std::size_t>(g - 1);
    node_local[i] = nodes_in[node_graph[i]]++;
  }

  std::vector<std::vector<std::pair<NodeId, NodeId>>> pairs(num_graphs_declared);
  for (std::size_t i = 0; i < a_lines.size(); ++i) {
    if (a_lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    const auto f = detail::split_fields(a_lines[i]);
    if (f.size() != 2) throw IngestError(a_name + ":" + std::to_string(i + 1) + ": expected 'i, j'");
    const long long a = detail::parse_int(f[0], a_name, i + 1);
    const long long b = detail::parse_int(f[1], a_name, i + 1);
    if (a < 1 || b < 1 || static_cast<std::size_t>(a) > total_nodes ||
        static_cast<std::size_t>(b) > total_nodes)
      throw IngestError(a_name + ":" + std::to_string(i + 1) + ": node id out of range");
    const std::size_t ua = static_cast<std::size_t>(a - 1), ub = static_cast<std::size_t>(b - 1);
    if (node_graph[ua] != node_graph[ub])
      throw IngestError(a_name + ":" + std::to_string(i + 1) + ": edge joins two graphs");
    pairs[node_graph[ua]].emplace_back(static_cast<NodeId>(node_local[ua]),
                                       static_cast<NodeId>(node_local[ub]));
  }

  // optional node features
  std::vector<std::vector<double>> attrs;
  if (!attr_lines.empty()) {
    if (attr_lines.size() != total_nodes)
      throw IngestError(name + "_node_attributes.txt: expected " + std::to_string(total_nodes) + " lines");
    for (std::size_t i = 0; i < attr_lines.size(); ++i) {
      std::vector<double> row;
      for (const auto& f : detail::split_fields(attr_lines[i]))
        row.push_back(detail::parse_double(f, name + "_node_attributes.txt", i + 1));
      if (!attrs.empty() && row.size() != attrs.front().size())
        throw IngestError(name + "_node_attributes.txt:" + std::to_string(i + 1) + ": ragged row");
      attrs.push_back(std::move(row));
    }
  }
  std::vector<std::size_t> node_label_index;
  std::size_t node_label_count = 0;
  if (attrs.empty() && !node_label_lines.empty()) {
    if (node_label_lines.size() != total_nodes)
      throw IngestError(name + "_node_labels.txt: expected " + std::to_string(total_nodes) + " lines");
    std::vector<long long> raw;
    for (std::size_t i = 0; i < node_label_lines.size(); ++i)
      raw.push_back(detail::parse_int(detail::split_fields(node_label_lines[i]).at(0),
                                      name + "_node_labels.txt", i + 1));
    std::map<long long, std::size_t> remap;
    for (long long v : raw) remap.emplace(v, 0);
    for (auto& [v, idx] : remap) idx = node_label_count++;
    for (long long v : raw) node_label_index.push_back(remap[v]);
  }

  std::map<long long, std::size_t> label_remap;
  for (long long v : raw_labels) label_remap.emplace(v, 0);
  std::size_t next_label = 0;
  for (auto& [v, idx] : label_remap) idx = next_label++;

  TuDataset out;
  out.num_classes = label_remap.size();
  std::vector<std::size_t> first_node(num_graphs_declared, total_nodes);
  for (std::size_t i = total_nodes; i-- > 0;) first_node[node_graph[i]] = i;
  for (std::size_t g = 0; g < num_graphs_declared; ++g) {
    if (nodes_in[g] == 0) continue;  // label without nodes
    const std::size_t n = nodes_in[g];
    std::vector<std::size_t> members;
    members.reserve(n);
    for (std::size_t i = first_node[g]; i < total_nodes && members.size() < n; ++i)
      if (node_graph[i] == g) members.push_back(i);
    Matrix features;
    if (!attrs.empty()) {
      features = Matrix(n, attrs.front().size());
      for (std::size_t k = 0; k < n; ++k)
        std::copy(attrs[members[k]].begin(), attrs[members[k]].end(), features.row(k).begin());
    } else if (!node_label_index.empty()) {
      features = Matrix(n, node_label_count);
      for (std::size_t k = 0; k < n; ++k) features(k, node_label_index[members[k]]) = 1.0;
    }
    // A lists each undirected edge in both directions; only repeated
    // ordered pairs count as duplicates.
    auto& gp = pairs[g];
    std::sort(gp.begin(), gp.end());
    const auto last = std::unique(gp.begin(), gp.end());
    out.cleanup.duplicates += static_cast<std::size_t>(gp.end() - last);
    gp.erase(last, gp.end());
    const bool derive = features.empty();
    if (derive) features = Matrix(n, 1);  // placeholder until edges are cleaned
    CleanupCounters local;
    Graph graph = Graph::from_pairs(n, gp, std::move(features), label_remap[raw_labels[g]], &local);
    out.cleanup.self_loops += local.self_loops;
    if (derive) graph.features = degree_onehot_features(n, graph.edges, degree_cap);
    out.graphs.push_back(std::move(graph));
  }
  return out;
}

// Writes graphs in the TU text format, features as node attributes with 17
// significant digits so a re-read reproduces them exactly.
inline void write_tu_dataset(const std::filesystem::path& directory, const std::string& name,
                             const std::vector<Graph>& graphs) {
  std::filesystem::create_directories(directory);
  auto open = [&](const char* suffix) {
    std::ofstream f(directory / (name + suffix));
    if (!f) throw IoError("cannot write " + (directory / (name + suffix)).string());
    return f;
  };
  auto a = open("_A.txt");
  auto ind = open("_graph_indicator.txt");
  auto lab = open("_graph_labels.txt");
  auto attr = open("_node_attributes.txt");
  std::size_t offset = 1;
  char buf[32];
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    const Graph& gr = graphs[g];
    for (const Edge& e : gr.edges) {
      a << offset + e.u << ", " << offset + e.v << '\n';
      a << offset + e.v << ", " << offset + e.u << '\n';
    }
    for (std::size_t i = 0; i < gr.num_nodes; ++i) {
      ind << g + 1 << '\n';
      for (std::size_t c = 0; c < gr.feature_dim(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", gr.features(i, c));
        attr << (c ? ", " : "") << buf;
      }
      attr << '\n';
    }
    lab << gr.label << '\n';
    offset += gr.num_nodes;
  }
}

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// k disjoint test folds covering every id; each class is shuffled and dealt
// round-robin, so per-class counts across folds differ by at most one.
inline std::vector<Fold> stratified_folds(const std::vector<std::size_t>& labels, std::size_t k,
                                          std::uint64_t seed) {
  if (k < 2) throw StratificationError("need at least 2 folds");
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [c, ids] : by_class)
    if (ids.size() < k)
      throw StratificationError("class " + std::to_string(c) + " has " + std::to_string(ids.size()) +
                                " members, fewer than " + std::to_string(k) + " folds");
  SeededRng rng(seed);
  std::vector<std::vector<std::size_t>> test(k);
  std::size_t deal = 0;
  for (auto& [c, ids] : by_class) {
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t id : ids) test[deal++ % k].push_back(id);
  }
  std::vector<Fold> folds(k);
  std::vector<std::size_t> fold_of(labels.size());
  for (std::size_t f = 0; f < k; ++f)
    for (std::size_t id : test[f]) fold_of[id] = f;
  for (std::size_t f = 0; f < k; ++f) {
    folds[f].test = test[f];
    std::sort(folds[f].test.begin(), folds[f].test.end());
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (fold_of[i] != f) folds[f].train.push_back(i);
  }
  return folds;
}

struct Dataset {
  std::string name;
  std::vector<Graph> graphs;

  std::size_t feature_dim() const { return graphs.empty() ? 0 : graphs.front().feature_dim(); }
  std::vector<std::size_t> labels() const {
    std::vector<std::size_t> out;
    for (const Graph& g : graphs) out.push_back(g.label);
    return out;
  }
};

// "synth-2M", "synth-2M@SEED" or "tud:PATH:NAME".
inline Dataset load_dataset(const std::string& source) {
  if (source == "synth-2M" || source.rfind("synth-2M@", 0) == 0) {
    std::uint64_t seed = kSynthDataSeed;
    if (source.size() > 8) seed = std::stoull(source.substr(9));
    return Dataset{source, generate(synth_2m_spec(), seed)};
  }
  if (source.rfind("tud:", 0) == 0) {
    const auto rest = source.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw ConfigError("dataset must be tud:PATH:NAME, got " + source);
    return Dataset{source, tud_parse(rest.substr(0, colon), rest.substr(colon + 1)).graphs};
  }
  throw ConfigError("unknown dataset: " + source);
}

}  // namespace giplab
