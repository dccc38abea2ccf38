#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "giplab/augment.hpp"
#include "giplab/config.hpp"
#include "giplab/data.hpp"
#include "giplab/encoder.hpp"
#include "giplab/error.hpp"
#include "giplab/graph.hpp"

namespace giplab {

struct EmbeddingTable {
  Matrix embeddings;  // num_graphs x d
  std::vector<std::size_t> labels;

  std::size_t num_classes() const {
    return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  }
};

// Frozen-encoder features: clean batches, intra-graph propagation only.
// Rows do not depend on `batch_size` because the adjacency is block diagonal.
inline EmbeddingTable embed_dataset(const std::vector<Graph>& graphs, const EncoderParams& params,
                                    const EncoderConfig& config, std::size_t batch_size = 64) {
  params.check(config);
  if (batch_size == 0) throw ConfigError("embed_dataset: batch_size must be positive");
  EmbeddingTable t;
  t.embeddings = Matrix(graphs.size(), config.hidden_dim);
  for (std::size_t start = 0; start < graphs.size(); start += batch_size) {
    const std::size_t end = std::min(graphs.size(), start + batch_size);
    std::vector<const Graph*> chunk;
    for (std::size_t i = start; i < end; ++i) chunk.push_back(&graphs[i]);
    const Matrix z = encode_view(disjoint_union(chunk), params, config);
    std::copy(z.data().begin(), z.data().end(),
              t.embeddings.data().begin() + static_cast<std::ptrdiff_t>(start * config.hidden_dim));
  }
  for (const Graph& g : graphs) t.labels.push_back(g.label);
  return t;
}

inline void write_embedding_csv(const EmbeddingTable& t, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f << "graph_id,label";
  for (std::size_t c = 0; c < t.embeddings.cols(); ++c) f << ",e" << c;
  f << '\n';
  for (std::size_t r = 0; r < t.embeddings.rows(); ++r) {
    f << r << ',' << t.labels[r];
    for (double v : t.embeddings.row(r)) f << ',' << fmt17(v);
    f << '\n';
  }
}

inline double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

struct CmspResult {
  double value = 0.0;
  double separation = 0.0;      // mean centroid distance over class pairs
  double mean_dispersion = 0.0; // mean of per-class dispersions
  bool degenerate = false;      // mean dispersion hit the floor
};

inline constexpr double kCmspFloor = 1e-12;

// Class-based manifold separation proxy: inter-centroid separation divided
// by the average intra-class dispersion D_k = (1/n_k^2) sum_{i!=j} ||x_i - x_j||.
inline CmspResult cmsp(const EmbeddingTable& t) {
  std::map<std::size_t, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < t.labels.size(); ++i) classes[t.labels[i]].push_back(i);
  if (classes.size() < 2) throw ConfigError("cmsp needs at least 2 classes");
  const std::size_t d = t.embeddings.cols();
  std::vector<std::vector<double>> centroids;
  double dispersion_sum = 0.0;
  for (const auto& [label, ids] : classes) {
    std::vector<double> mu(d, 0.0);
    for (std::size_t i : ids)
      for (std::size_t c = 0; c < d; ++c) mu[c] += t.embeddings(i, c);
    for (double& v : mu) v /= static_cast<double>(ids.size());
    centroids.push_back(std::move(mu));
    double pair_sum = 0.0;
    for (std::size_t a = 0; a < ids.size(); ++a)
      for (std::size_t b = a + 1; b < ids.size(); ++b)
        pair_sum += 2.0 * euclidean(t.embeddings.row(ids[a]), t.embeddings.row(ids[b]));
    const double n = static_cast<double>(ids.size());
    dispersion_sum += pair_sum / (n * n);
  }
  const double k = static_cast<double>(classes.size());
  CmspResult r;
  r.mean_dispersion = dispersion_sum / k;
  double sep = 0.0;
  for (std::size_t a = 0; a < centroids.size(); ++a)
    for (std::size_t b = a + 1; b < centroids.size(); ++b) sep += euclidean(centroids[a], centroids[b]);
  r.separation = 2.0 * sep / (k * (k - 1.0));
  r.degenerate = r.mean_dispersion < kCmspFloor;
  r.value = r.separation / std::max(r.mean_dispersion, kCmspFloor);
  return r;
}

struct ProbeResult {
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  std::vector<double> fold_accuracy;
};

struct ProbeSettings {
  double l2 = 1e-4;
  std::size_t steps = 500;
  double lr = 0.1;
};

// Multinomial logistic regression on standardized features, full-batch
// gradient descent from zero weights. Returns test-row predictions.
inline std::vector<std::size_t> fit_predict_logistic(const Matrix& x, const std::vector<std::size_t>& labels,
                                                     const std::vector<std::size_t>& train,
                                                     const std::vector<std::size_t>& test,
                                                     std::size_t num_classes, const ProbeSettings& s) {
  const std::size_t d = x.cols(), n = train.size();
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (std::size_t i : train)
    for (std::size_t c = 0; c < d; ++c) mu[c] += x(i, c);
  for (double& v : mu) v /= static_cast<double>(n);
  for (std::size_t i : train)
    for (std::size_t c = 0; c < d; ++c) sd[c] += (x(i, c) - mu[c]) * (x(i, c) - mu[c]);
  for (double& v : sd) v = std::max(std::sqrt(v / static_cast<double>(n)), 1e-8);
  auto standardized = [&](const std::vector<std::size_t>& ids) {
    Matrix out(ids.size(), d);
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t c = 0; c < d; ++c) out(r, c) = (x(ids[r], c) - mu[c]) / sd[c];
    return out;
  };
  const Matrix xtr = standardized(train);
  Matrix w(d, num_classes), b(1, num_classes);
  Matrix prob(n, num_classes);
  for (std::size_t step = 0; step < s.steps; ++step) {
    prob = dense::matmul(xtr, w);
    for (std::size_t r = 0; r < n; ++r) {
      auto row = prob.row(r);
      double m = -1e300;
      for (std::size_t c = 0; c < num_classes; ++c) m = std::max(m, row[c] += b(0, c));
      double z = 0.0;
      for (double& v : row) z += (v = std::exp(v - m));
      for (double& v : row) v /= z;
      row[labels[train[r]]] -= 1.0;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    Matrix gw = dense::matmul_tn(xtr, prob);
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] -= s.lr * (gw.data()[i] * inv_n + s.l2 * w.data()[i]);
    for (std::size_t c = 0; c < num_classes; ++c) {
      double gb = 0.0;
      for (std::size_t r = 0; r < n; ++r) gb += prob(r, c);
      b(0, c) -= s.lr * gb * inv_n;
    }
  }
  const Matrix logits = dense::matmul(standardized(test), w);
  std::vector<std::size_t> pred(test.size());
  for (std::size_t r = 0; r < test.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < num_classes; ++c)
      if (logits(r, c) + b(0, c) > logits(r, best) + b(0, best)) best = c;
    pred[r] = best;
  }
  return pred;
}

// Stratified k-fold accuracy of a linear classifier on frozen embeddings.
inline ProbeResult linear_probe(const EmbeddingTable& t, std::size_t k_folds, std::uint64_t seed,
                                const ProbeSettings& settings = {}) {
  if (!t.embeddings.all_finite()) throw NumericError("linear_probe: non-finite embeddings");
  const auto folds = stratified_folds(t.labels, k_folds, seed);
  const std::size_t classes = t.num_classes();
  ProbeResult r;
  for (const Fold& f : folds) {
    const auto pred = fit_predict_logistic(t.embeddings, t.labels, f.train, f.test, classes, settings);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < f.test.size(); ++i) hit += pred[i] == t.labels[f.test[i]];
    r.fold_accuracy.push_back(static_cast<double>(hit) / static_cast<double>(f.test.size()));
  }
  for (double a : r.fold_accuracy) r.mean_accuracy += a;
  r.mean_accuracy /= static_cast<double>(r.fold_accuracy.size());
  for (double a : r.fold_accuracy) r.std_accuracy += (a - r.mean_accuracy) * (a - r.mean_accuracy);
  r.std_accuracy = std::sqrt(r.std_accuracy / static_cast<double>(r.fold_accuracy.size()));
  return r;
}

struct Lemma1Report {
  std::size_t depth = 0;
  double p = 0.0;
  std::size_t inter_edges = 0;
  bool residual_defined = false;
  std::vector<double> residuals;  // per graph
  double max_residual = 0.0;
  double max_relative_residual = 0.0;
  std::optional<Matrix> alpha;    // N x N, zero diagonal; only for hidden dim 1
  std::optional<double> reconstruction_error;
  std::string note;
};

namespace detail {

// Pre-activations W^T sum_u x_u / sqrt(d_v d_u) + b of a single GCN layer,
// accumulated edge by edge from explicit neighbor lists.
inline Matrix layer_preactivation(const GraphBatch& batch, bool use_inter, const Matrix& w, const Matrix& b) {
  const std::size_t n = batch.total_nodes();
  std::vector<std::vector<std::size_t>> nbr(n);
  for (std::size_t v = 0; v < n; ++v) nbr[v].push_back(v);
  auto link = [&](const std::vector<Edge>& edges) {
    for (const Edge& e : edges) {
      nbr[e.u].push_back(e.v);
      nbr[e.v].push_back(e.u);
    }
  };
  link(batch.intra_edges);
  if (use_inter) link(batch.inter_edges);
  const std::size_t d_in = batch.feature_dim();
  Matrix agg(n, d_in);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t u : nbr[v]) {
      const double c = 1.0 / std::sqrt(static_cast<double>(nbr[v].size() * nbr[u].size()));
      for (std::size_t k = 0; k < d_in; ++k) agg(v, k) += c * batch.features(u, k);
    }
  Matrix pre = dense::matmul(agg, w);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t c = 0; c < pre.cols(); ++c) pre(v, c) += b(0, c);
  return pre;
}

inline double norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

}  // namespace detail

// Checks f_g(G_i) = f(G_i) + Delta_i, where f_g encodes the GIP-augmented
// batch (inter edges from layer 0), f the clean batch, and Delta_i is the
// pooled ReLU difference sum_v [ReLU(y_v + z_v) - ReLU(y_v)] rebuilt edge by
// edge for a single layer: y_v is the clean pre-activation and z_v the shift
// caused by the inter-graph edges (cross-graph messages plus the degree
// renormalization they induce). Deeper encoders only get the p = 0 check.
inline Lemma1Report lemma1_verify(const GraphBatch& batch, const EncoderParams& params,
                                  EncoderConfig config, double p, SeededRng& rng) {
  config.gip_start_layer = 0;
  params.check(config);
  const GraphBatch augmented = gip_edges(batch, p, rng);
  const Matrix fg = encode_view(augmented, params, config);
  const Matrix f = encode_view(batch, params, config);
  const std::size_t n = batch.num_graphs(), d = config.hidden_dim;

  Lemma1Report r;
  r.depth = config.num_layers;
  r.p = p;
  r.inter_edges = augmented.inter_edges.size();

  Matrix delta(n, d);
  if (config.num_layers == 1) {
    const Matrix y = detail::layer_preactivation(batch, false, params.weights[0], params.biases[0]);
    const Matrix ext = detail::layer_preactivation(augmented, true, params.weights[0], params.biases[0]);
    for (std::size_t v = 0; v < batch.total_nodes(); ++v)
      for (std::size_t c = 0; c < d; ++c) {
        const double yv = y(v, c);
        const double zv = ext(v, c) - yv;
        delta(batch.membership[v], c) += std::max(yv + zv, 0.0) - std::max(yv, 0.0);
      }
    r.residual_defined = true;
  } else if (augmented.inter_edges.empty()) {
    r.residual_defined = true;  // no inter edges: Delta = 0 at any depth
  } else {
    r.note = "depth > 1 with inter-graph edges: residual identity checked only at depth 1 or p = 0";
  }

  if (r.residual_defined) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> diff(d);
      for (std::size_t c = 0; c < d; ++c) diff[c] = fg(i, c) - f(i, c) - delta(i, c);
      const double res = detail::norm(diff);
      const double scale = std::max({detail::norm(fg.row(i)), detail::norm(f.row(i)), 1e-12});
      r.residuals.push_back(res);
      r.max_residual = std::max(r.max_residual, res);
      r.max_relative_residual = std::max(r.max_relative_residual, res / scale);
    }
  }

  // Scalar interaction coefficients: Delta_i spread evenly over the N - 1
  // partner graphs, alpha_ij = Delta_i / ((N - 1) f(G_j)).
  if (d != 1) {
    if (r.note.empty()) r.note = "alpha undefined for hidden dim > 1 (vector ratio)";
    return r;
  }
  if (!r.residual_defined || n < 2) {
    if (r.note.empty()) r.note = "alpha undefined for a single-graph batch";
    return r;
  }
  Matrix alpha(n, n);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double rebuilt = f(i, 0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || delta(i, 0) == 0.0) continue;
      if (f(j, 0) == 0.0) {
        r.note = "alpha undefined: f(G_" + std::to_string(j) + ") == 0";
        return r;
      }
      alpha(i, j) = delta(i, 0) / (static_cast<double>(n - 1) * f(j, 0));
      rebuilt += alpha(i, j) * f(j, 0);
    }
    worst = std::max(worst, std::abs(fg(i, 0) - rebuilt));
  }
  r.alpha = std::move(alpha);
  r.reconstruction_error = worst;
  return r;
}

}  // namespace giplab
