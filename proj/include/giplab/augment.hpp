#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "giplab/error.hpp"
#include "giplab/graph.hpp"
#include "giplab/rng.hpp"

namespace giplab {

enum class AugKind { None, Gip, DropEdge, AddEdge };

inline std::string to_string(AugKind k) {
  switch (k) {
    case AugKind::None: return "NONE";
    case AugKind::Gip: return "GIP";
    case AugKind::DropEdge: return "DROP_EDGE";
    case AugKind::AddEdge: return "ADD_EDGE";
  }
  return "?";
}

inline AugKind parse_aug_kind(const std::string& s) {
  if (s == "NONE") return AugKind::None;
  if (s == "GIP") return AugKind::Gip;
  if (s == "DROP_EDGE") return AugKind::DropEdge;
  if (s == "ADD_EDGE") return AugKind::AddEdge;
  throw ConfigError("unknown augmentation: " + s);
}

struct AugSpec {
  AugKind kind = AugKind::None;
  double p = 0.0;

  AugSpec() = default;
  AugSpec(AugKind k, double prob) : kind(k), p(prob) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augmentation probability outside [0,1]");
  }
  friend bool operator==(const AugSpec&, const AugSpec&) = default;
};

// A view is a pipeline of augmentations applied left to right. The usual
// case is a single stage.
using ViewSpec = std::vector<AugSpec>;

namespace detail {

// k distinct values from [0, m), sorted. Floyd's algorithm on the smaller of
// the chosen set and its complement.
inline std::vector<std::uint64_t> sample_without_replacement(std::uint64_t m, std::uint64_t k,
                                                             SeededRng& rng) {
  std::vector<std::uint64_t> out;
  if (k == 0) return out;
  if (k >= m) {
    out.resize(m);
    std::iota(out.begin(), out.end(), std::uint64_t{0});
    return out;
  }
  const bool complement = 2 * k > m;
  const std::uint64_t pick = complement ? m - k : k;
  out.reserve(k);
  if (m <= (std::uint64_t{1} << 24)) {
    std::vector<char> chosen(m, 0);
    for (std::uint64_t j = m - pick; j < m; ++j) {
      const std::uint64_t t = rng.below(j + 1);
      chosen[chosen[t] ? j : t] = 1;
    }
    for (std::uint64_t v = 0; v < m; ++v)
      if ((chosen[v] != 0) != complement) out.push_back(v);
    return out;
  }
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(pick * 2);
  std::vector<std::uint64_t> picked;
  picked.reserve(pick);
  for (std::uint64_t j = m - pick; j < m; ++j) {
    std::uint64_t t = rng.below(j + 1);
    if (!chosen.insert(t).second) {
      chosen.insert(j);
      t = j;
    }
    picked.push_back(t);
  }
  std::sort(picked.begin(), picked.end());
  if (!complement) return picked;
  std::size_t next = 0;
  for (std::uint64_t v = 0; v < m; ++v) {
    if (next < picked.size() && picked[next] == v) {
      ++next;
      continue;
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace detail

// Adds each cross-graph node pair independently with probability p. For each
// graph pair (i, j) a Binomial(|V_i||V_j|, p) count is drawn and that many
// distinct pairs are chosen uniformly, which has the same law as per-pair
// Bernoulli draws without enumerating candidates when p is small.
inline GraphBatch gip_edges(const GraphBatch& batch, double p, SeededRng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("gip_edges: p outside [0,1]");
  if (!batch.inter_edges.empty())
    throw ConfigError("gip_edges: batch already carries inter-graph edges");
  GraphBatch out = batch;
  if (p == 0.0) return out;
  const std::size_t n = batch.num_graphs();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::uint64_t ni = batch.graph_sizes[i];
      const std::uint64_t nj = batch.graph_sizes[j];
      const std::uint64_t m = ni * nj;
      const std::uint64_t k = rng.binomial(m, p);
      for (std::uint64_t idx : detail::sample_without_replacement(m, k, rng)) {
        const auto a = static_cast<NodeId>(batch.node_offset[i] + idx / nj);
        const auto b = static_cast<NodeId>(batch.node_offset[j] + idx % nj);
        out.inter_edges.emplace_back(a, b);
      }
    }
  }
  return out;
}

// Removes each intra-graph edge independently with probability p.
inline GraphBatch drop_edge(const GraphBatch& batch, double p, SeededRng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("drop_edge: p outside [0,1]");
  GraphBatch out = batch;
  out.intra_edges.clear();
  for (const Edge& e : batch.intra_edges)
    if (!rng.bernoulli(p)) out.intra_edges.push_back(e);
  return out;
}

// Adds each absent non-loop pair inside a single graph independently with
// probability p.
inline GraphBatch add_edge_intra(const GraphBatch& batch, double p, SeededRng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("add_edge_intra: p outside [0,1]");
  GraphBatch out = batch;
  if (p == 0.0) return out;
  // intra_edges grouped per graph, then present-pair bitmap per graph
  std::vector<std::vector<Edge>> per_graph(batch.num_graphs());
  for (const Edge& e : batch.intra_edges) per_graph[batch.membership[e.u]].push_back(e);
  for (std::size_t g = 0; g < batch.num_graphs(); ++g) {
    const std::size_t n = batch.graph_sizes[g];
    const std::size_t off = batch.node_offset[g];
    std::vector<char> present(n * n, 0);
    for (const Edge& e : per_graph[g]) present[(e.u - off) * n + (e.v - off)] = 1;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b)
        if (!present[a * n + b] && rng.bernoulli(p))
          out.intra_edges.emplace_back(static_cast<NodeId>(off + a), static_cast<NodeId>(off + b));
  }
  std::sort(out.intra_edges.begin(), out.intra_edges.end());
  return out;
}

inline GraphBatch apply_augmentation(const GraphBatch& batch, const AugSpec& spec, SeededRng& rng) {
  switch (spec.kind) {
    case AugKind::None: return batch;
    case AugKind::Gip: return gip_edges(batch, spec.p, rng);
    case AugKind::DropEdge: return drop_edge(batch, spec.p, rng);
    case AugKind::AddEdge: return add_edge_intra(batch, spec.p, rng);
  }
  return batch;
}

inline GraphBatch apply_view(const GraphBatch& batch, const ViewSpec& view, const SeededRng& rng,
                             std::uint64_t view_index) {
  GraphBatch cur = batch;
  for (std::size_t stage = 0; stage < view.size(); ++stage) {
    SeededRng sub = rng.substream({view_index, stage});
    cur = apply_augmentation(cur, view[stage], sub);
  }
  return cur;
}

// Two independently augmented copies of `batch`; view k draws from the
// substream (seed, k) of `rng`.
inline std::pair<GraphBatch, GraphBatch> make_views(const GraphBatch& batch, const ViewSpec& first,
                                                    const ViewSpec& second, const SeededRng& rng) {
  return {apply_view(batch, first, rng, 0), apply_view(batch, second, rng, 1)};
}

inline std::pair<GraphBatch, GraphBatch> make_views(const GraphBatch& batch, const AugSpec& first,
                                                    const AugSpec& second, const SeededRng& rng) {
  return make_views(batch, ViewSpec{first}, ViewSpec{second}, rng);
}

}  // namespace giplab
