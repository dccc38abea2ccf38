#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "giplab/error.hpp"
#include "giplab/matrix.hpp"

namespace giplab {

using NodeId = std::uint32_t;

// Unordered node pair, stored with u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;

  Edge() = default;
  Edge(NodeId a, NodeId b) : u(std::min(a, b)), v(std::max(a, b)) {}

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Counts of malformed entries dropped while building graphs from raw data.
struct CleanupCounters {
  std::size_t self_loops = 0;
  std::size_t duplicates = 0;
};

struct Graph {
  std::size_t num_nodes = 0;
  std::vector<Edge> edges;
  Matrix features;  // num_nodes x d_in
  std::size_t label = 0;

  std::size_t feature_dim() const noexcept { return features.cols(); }

  // Throws ConfigError when an invariant is broken.
  void validate() const {
    if (num_nodes == 0) throw ConfigError("graph has no nodes");
    if (features.rows() != num_nodes)
      throw ConfigError("graph feature rows " + std::to_string(features.rows()) +
                        " != num_nodes " + std::to_string(num_nodes));
    std::vector<Edge> sorted = edges;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const Edge& e = sorted[i];
      if (e.u == e.v) throw ConfigError("graph has a self-loop");
      if (e.v >= num_nodes) throw ConfigError("edge endpoint out of range");
      if (i > 0 && sorted[i - 1] == e) throw ConfigError("graph has a duplicate edge");
    }
  }

  // Builds a graph from possibly dirty pairs: self-loops are dropped and
  // duplicates (in either orientation) collapsed, both tallied in `counters`.
  static Graph from_pairs(std::size_t num_nodes,
                          const std::vector<std::pair<NodeId, NodeId>>& pairs,
                          Matrix features, std::size_t label,
                          CleanupCounters* counters = nullptr) {
    Graph g;
    g.num_nodes = num_nodes;
    g.features = std::move(features);
    g.label = label;
    g.edges.reserve(pairs.size());
    for (auto [a, b] : pairs) {
      if (a >= num_nodes || b >= num_nodes) throw ConfigError("edge endpoint out of range");
      if (a == b) {
        if (counters) ++counters->self_loops;
        continue;
      }
      g.edges.emplace_back(a, b);
    }
    std::sort(g.edges.begin(), g.edges.end());
    auto last = std::unique(g.edges.begin(), g.edges.end());
    if (counters) counters->duplicates += static_cast<std::size_t>(g.edges.end() - last);
    g.edges.erase(last, g.edges.end());
    g.validate();
    return g;
  }
};

// Disjoint union of graphs sharing one node index space. Inter-graph edges
// are kept apart from the offset-shifted intra-graph edges.
struct GraphBatch {
  std::vector<std::size_t> node_offset;  // one entry per graph
  std::vector<std::size_t> graph_sizes;
  std::vector<std::size_t> membership;   // one entry per node
  std::vector<std::size_t> labels;       // one entry per graph
  Matrix features;                       // total_nodes x d_in
  std::vector<Edge> intra_edges;
  std::vector<Edge> inter_edges;

  std::size_t num_graphs() const noexcept { return node_offset.size(); }
  std::size_t total_nodes() const noexcept { return membership.size(); }
  std::size_t feature_dim() const noexcept { return features.cols(); }

  friend bool operator==(const GraphBatch&, const GraphBatch&) = default;

  void validate() const {
    const std::size_t n = num_graphs();
    if (graph_sizes.size() != n || labels.size() != n)
      throw ConfigError("batch bookkeeping arrays disagree");
    std::size_t expect = 0;
    for (std::size_t g = 0; g < n; ++g) {
      if (node_offset[g] != expect) throw ConfigError("batch node offsets inconsistent");
      if (graph_sizes[g] == 0) throw ConfigError("batch contains an empty graph");
      for (std::size_t k = 0; k < graph_sizes[g]; ++k)
        if (membership[expect + k] != g) throw ConfigError("batch membership inconsistent");
      expect += graph_sizes[g];
    }
    if (expect != total_nodes() || features.rows() != expect)
      throw ConfigError("batch node count inconsistent");
    std::vector<Edge> all = intra_edges;
    for (const Edge& e : intra_edges)
      if (e.u == e.v || e.v >= expect || membership[e.u] != membership[e.v])
        throw ConfigError("invalid intra-graph edge");
    for (const Edge& e : inter_edges) {
      if (e.v >= expect || membership[e.u] == membership[e.v])
        throw ConfigError("inter-graph edge joins nodes of the same graph");
      all.push_back(e);
    }
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end())
      throw ConfigError("batch has duplicate edges");
  }
};

inline GraphBatch disjoint_union(const std::vector<const Graph*>& graphs) {
  if (graphs.empty()) throw ConfigError("disjoint_union: empty graph list");
  const std::size_t d_in = graphs.front()->feature_dim();
  GraphBatch b;
  std::size_t total = 0;
  std::size_t edge_total = 0;
  for (const Graph* g : graphs) {
    if (g->feature_dim() != d_in)
      throw ConfigError("disjoint_union: feature dimension " + std::to_string(g->feature_dim()) +
                        " differs from " + std::to_string(d_in));
    total += g->num_nodes;
    edge_total += g->edges.size();
  }
  b.features = Matrix(total, d_in);
  b.membership.reserve(total);
  b.intra_edges.reserve(edge_total);
  std::size_t offset = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const Graph& g = *graphs[gi];
    b.node_offset.push_back(offset);
    b.graph_sizes.push_back(g.num_nodes);
    b.labels.push_back(g.label);
    b.membership.insert(b.membership.end(), g.num_nodes, gi);
    std::copy(g.features.data().begin(), g.features.data().end(),
              b.features.data().begin() + static_cast<std::ptrdiff_t>(offset * d_in));
    const auto off = static_cast<NodeId>(offset);
    for (const Edge& e : g.edges) b.intra_edges.emplace_back(e.u + off, e.v + off);
    offset += g.num_nodes;
  }
  return b;
}

inline GraphBatch disjoint_union(const std::vector<Graph>& graphs) {
  std::vector<const Graph*> ptrs;
  ptrs.reserve(graphs.size());
  for (const Graph& g : graphs) ptrs.push_back(&g);
  return disjoint_union(ptrs);
}

// Inverse of disjoint_union on the intra-graph part. Inter-graph edges have
// no home graph and are not returned.
inline std::vector<Graph> split_batch(const GraphBatch& b) {
  std::vector<Graph> out(b.num_graphs());
  const std::size_t d = b.feature_dim();
  for (std::size_t g = 0; g < b.num_graphs(); ++g) {
    out[g].num_nodes = b.graph_sizes[g];
    out[g].label = b.labels[g];
    out[g].features = Matrix(b.graph_sizes[g], d);
    for (std::size_t k = 0; k < b.graph_sizes[g]; ++k) {
      auto src = b.features.row(b.node_offset[g] + k);
      std::copy(src.begin(), src.end(), out[g].features.row(k).begin());
    }
  }
  for (const Edge& e : b.intra_edges) {
    const std::size_t g = b.membership[e.u];
    const auto off = static_cast<NodeId>(b.node_offset[g]);
    out[g].edges.emplace_back(e.u - off, e.v - off);
  }
  return out;
}

namespace detail {
inline bool has_avx2() {
#if defined(__x86_64__) && defined(__GNUC__)
  static const bool ok = __builtin_cpu_supports("avx2");
  return ok;
#else
  return false;
#endif
}
}  // namespace detail

// Compressed sparse row matrix over the batch node space, optionally plus a
// dense cross-graph term: entry (r, c) gains scale[r] * scale[c] whenever r
// and c belong to different graphs. Dense GIP views are stored as that term
// with the absent cross pairs subtracted in the sparse part.
class SparseAdjacency {
 public:
  SparseAdjacency() = default;
  SparseAdjacency(std::size_t n, std::vector<std::size_t> row_start, std::vector<NodeId> cols,
                  std::vector<double> values)
      : n_(n), row_start_(std::move(row_start)), cols_(std::move(cols)), values_(std::move(values)) {}

  SparseAdjacency& with_cross_term(std::vector<double> scale, std::vector<std::size_t> group,
                                   std::size_t num_groups) {
    if (scale.size() != n_ || group.size() != n_) throw ShapeError("cross term size mismatch");
    cross_scale_ = std::move(scale);
    cross_group_ = std::move(group);
    num_groups_ = num_groups;
    return *this;
  }

  std::size_t dim() const noexcept { return n_; }
  std::size_t nnz() const noexcept { return cols_.size(); }
  bool has_cross_term() const noexcept { return !cross_scale_.empty(); }
  const std::vector<std::size_t>& row_start() const noexcept { return row_start_; }
  const std::vector<NodeId>& cols() const noexcept { return cols_; }
  const std::vector<double>& values() const noexcept { return values_; }

  double at(std::size_t r, std::size_t c) const {
    double v = 0.0;
    for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k)
      if (cols_[k] == c) v = values_[k];
    if (has_cross_term() && cross_group_[r] != cross_group_[c]) v += cross_scale_[r] * cross_scale_[c];
    return v;
  }

  // y = A x
  Matrix multiply(const Matrix& x) const {
    if (x.rows() != n_)
      throw ShapeError("spmm: adjacency is " + std::to_string(n_) + "x" + std::to_string(n_) +
                       " but operand has " + std::to_string(x.rows()) + " rows");
    Matrix y(n_, x.cols());
    if (detail::has_avx2())
      csr_kernel_avx2(x, y);
    else
      csr_kernel(x, y);
    if (has_cross_term()) add_cross_term(x, y);
    return y;
  }

  Matrix to_dense() const {
    Matrix m(n_, n_);
    for (std::size_t r = 0; r < n_; ++r)
      for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k) m(r, cols_[k]) += values_[k];
    if (has_cross_term())
      for (std::size_t r = 0; r < n_; ++r)
        for (std::size_t c = 0; c < n_; ++c)
          if (cross_group_[r] != cross_group_[c]) m(r, c) += cross_scale_[r] * cross_scale_[c];
    return m;
  }

 private:
  // Both kernels perform the same scalar operations in the same order per
  // output entry (no FMA contraction), so results are bit-identical.
  void csr_kernel(const Matrix& x, Matrix& y) const { csr_accumulate(x, y); }
  __attribute__((target("avx2"))) void csr_kernel_avx2(const Matrix& x, Matrix& y) const { csr_accumulate(x, y); }

  __attribute__((always_inline)) void csr_accumulate(const Matrix& x, Matrix& y) const {
    const std::size_t d = x.cols();
    const double* xd = x.data().data();
    double* yd = y.data().data();
    for (std::size_t r = 0; r < n_; ++r) {
      double* yr = yd + r * d;
      const std::size_t end = row_start_[r + 1];
      std::size_t k = row_start_[r];
      for (; k + 4 <= end; k += 4) {
        const double w0 = values_[k], w1 = values_[k + 1], w2 = values_[k + 2], w3 = values_[k + 3];
        const double* x0 = xd + static_cast<std::size_t>(cols_[k]) * d;
        const double* x1 = xd + static_cast<std::size_t>(cols_[k + 1]) * d;
        const double* x2 = xd + static_cast<std::size_t>(cols_[k + 2]) * d;
        const double* x3 = xd + static_cast<std::size_t>(cols_[k + 3]) * d;
        for (std::size_t j = 0; j < d; ++j) yr[j] += (w0 * x0[j] + w1 * x1[j]) + (w2 * x2[j] + w3 * x3[j]);
      }
      for (; k < end; ++k) {
        const double w = values_[k];
        const double* xr = xd + static_cast<std::size_t>(cols_[k]) * d;
        for (std::size_t j = 0; j < d; ++j) yr[j] += w * xr[j];
      }
    }
  }

  // y_r += s_r * (sum over all c of s_c x_c - sum over c in group(r) of s_c x_c)
  void add_cross_term(const Matrix& x, Matrix& y) const {
    const std::size_t d = x.cols();
    std::vector<double> total(d, 0.0);
    Matrix per_group(num_groups_, d);
    for (std::size_t r = 0; r < n_; ++r) {
      const double s = cross_scale_[r];
      auto xr = x.row(r);
      auto gr = per_group.row(cross_group_[r]);
      for (std::size_t j = 0; j < d; ++j) gr[j] += s * xr[j];
    }
    for (std::size_t g = 0; g < num_groups_; ++g) {
      auto gr = per_group.row(g);
      for (std::size_t j = 0; j < d; ++j) total[j] += gr[j];
    }
    for (std::size_t r = 0; r < n_; ++r) {
      const double s = cross_scale_[r];
      auto gr = per_group.row(cross_group_[r]);
      auto yr = y.row(r);
      for (std::size_t j = 0; j < d; ++j) yr[j] += s * (total[j] - gr[j]);
    }
  }

  std::size_t n_ = 0;
  std::vector<std::size_t> row_start_{0};
  std::vector<NodeId> cols_;
  std::vector<double> values_;
  std::vector<double> cross_scale_;
  std::vector<std::size_t> cross_group_;
  std::size_t num_groups_ = 0;
};

namespace detail {

// Cross-graph node pairs (u < v) absent from `inter`, which must hold
// cross-graph pairs only. Nodes of one graph are contiguous.
inline std::vector<Edge> absent_cross_pairs(const GraphBatch& batch, const std::vector<Edge>& inter) {
  const std::size_t n = batch.total_nodes();
  std::vector<std::size_t> start(n + 1, 0);
  for (const Edge& e : inter) ++start[e.u + 1];
  for (std::size_t i = 0; i < n; ++i) start[i + 1] += start[i];
  std::vector<NodeId> partner(inter.size());
  std::vector<std::size_t> fill(start.begin(), start.end() - 1);
  for (const Edge& e : inter) partner[fill[e.u]++] = e.v;
  std::vector<Edge> out;
  for (std::size_t u = 0; u < n; ++u) {
    const auto first = partner.begin() + static_cast<std::ptrdiff_t>(start[u]);
    const auto last = partner.begin() + static_cast<std::ptrdiff_t>(start[u + 1]);
    std::sort(first, last);
    const std::size_t g = batch.membership[u];
    auto it = first;
    for (std::size_t v = batch.node_offset[g] + batch.graph_sizes[g]; v < n; ++v) {
      if (it != last && *it == v) {
        ++it;
        continue;
      }
      out.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    }
  }
  return out;
}

}  // namespace detail

// D^{-1/2} (A + I) D^{-1/2} over the intra edges, plus the inter edges when
// `use_inter` is set. D is the degree matrix of A + I.
inline SparseAdjacency normalized_adjacency(const GraphBatch& batch, bool use_inter) {
  const std::size_t n = batch.total_nodes();
  std::vector<std::size_t> count(n, 1);  // self-loop
  auto tally = [&](const std::vector<Edge>& edges) {
    for (const Edge& e : edges) {
      ++count[e.u];
      ++count[e.v];
    }
  };
  tally(batch.intra_edges);
  if (use_inter) tally(batch.inter_edges);

  std::size_t cross_pairs = 0;
  for (std::size_t g = 0; g < batch.num_graphs(); ++g)
    cross_pairs += batch.graph_sizes[g] * (n - batch.node_offset[g] - batch.graph_sizes[g]);
  const bool dense_cross = use_inter && 2 * batch.inter_edges.size() > cross_pairs;
  const std::vector<Edge> absent = dense_cross ? detail::absent_cross_pairs(batch, batch.inter_edges)
                                               : std::vector<Edge>{};
  const std::vector<Edge>& listed = dense_cross ? absent : batch.inter_edges;

  std::vector<std::size_t> slots(count);
  if (dense_cross) {
    for (std::size_t i = 0; i < n; ++i) slots[i] = 1;
    for (const Edge& e : batch.intra_edges) {
      ++slots[e.u];
      ++slots[e.v];
    }
    for (const Edge& e : absent) {
      ++slots[e.u];
      ++slots[e.v];
    }
  }
  std::vector<std::size_t> row_start(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) row_start[i + 1] = row_start[i] + slots[i];
  std::vector<NodeId> cols(row_start[n]);
  std::vector<std::size_t> fill(row_start.begin(), row_start.end() - 1);
  for (std::size_t i = 0; i < n; ++i) cols[fill[i]++] = static_cast<NodeId>(i);
  auto place = [&](const std::vector<Edge>& edges) {
    for (const Edge& e : edges) {
      cols[fill[e.u]++] = e.v;
      cols[fill[e.v]++] = e.u;
    }
  };
  place(batch.intra_edges);
  if (use_inter) place(listed);

  std::vector<double> scale(n);
  for (std::size_t i = 0; i < n; ++i) scale[i] = 1.0 / std::sqrt(static_cast<double>(count[i]));
  std::vector<double> values(cols.size());
  for (std::size_t r = 0; r < n; ++r) {
    std::sort(cols.begin() + static_cast<std::ptrdiff_t>(row_start[r]),
              cols.begin() + static_cast<std::ptrdiff_t>(row_start[r + 1]));
    for (std::size_t k = row_start[r]; k < row_start[r + 1]; ++k) {
      const NodeId c = cols[k];
      if (dense_cross && batch.membership[r] != batch.membership[c])
        values[k] = -scale[r] * scale[c];
      else
        values[k] = 1.0 / std::sqrt(static_cast<double>(count[r] * count[c]));
    }
  }
  SparseAdjacency adj(n, std::move(row_start), std::move(cols), std::move(values));
  if (dense_cross) adj.with_cross_term(std::move(scale), batch.membership, batch.num_graphs());
  return adj;
}

}  // namespace giplab
