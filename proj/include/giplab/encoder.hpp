#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "giplab/autodiff.hpp"
#include "giplab/error.hpp"
#include "giplab/graph.hpp"
#include "giplab/rng.hpp"

namespace giplab {

struct EncoderConfig {
  std::size_t num_layers = 3;
  std::size_t hidden_dim = 64;
  std::size_t input_dim = 0;
  // Layers with index < gip_start_layer propagate over intra-graph edges
  // only; the rest use intra + inter edges.
  std::size_t gip_start_layer = 0;

  void validate() const {
    if (num_layers < 1 || num_layers > 8) throw ConfigError("encoder.layers must be in [1, 8]");
    if (hidden_dim == 0) throw ConfigError("encoder.hidden must be positive");
    if (input_dim == 0) throw ConfigError("encoder.input_dim must be positive");
    if (gip_start_layer > num_layers)
      throw ConfigError("encoder.gip_start_layer must be in [0, encoder.layers]");
  }

  std::size_t layer_in(std::size_t l) const { return l == 0 ? input_dim : hidden_dim; }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct EncoderParams {
  std::vector<Matrix> weights;  // layer l: layer_in(l) x hidden_dim
  std::vector<Matrix> biases;   // layer l: 1 x hidden_dim

  std::size_t num_layers() const noexcept { return weights.size(); }

  void check(const EncoderConfig& config) const {
    if (weights.size() != config.num_layers || biases.size() != config.num_layers)
      throw ShapeError("encoder params have " + std::to_string(weights.size()) + " layers, config " +
                       std::to_string(config.num_layers));
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != config.layer_in(l) || weights[l].cols() != config.hidden_dim)
        throw ShapeError("layer " + std::to_string(l) + " weight is " + weights[l].shape_str());
      if (biases[l].rows() != 1 || biases[l].cols() != config.hidden_dim)
        throw ShapeError("layer " + std::to_string(l) + " bias is " + biases[l].shape_str());
    }
  }

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

// Glorot-uniform weights, zero biases.
inline EncoderParams init_params(const EncoderConfig& config, SeededRng& rng) {
  config.validate();
  EncoderParams p;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::size_t fan_in = config.layer_in(l), fan_out = config.hidden_dim;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (double& v : w.data()) v = (2.0 * rng.uniform() - 1.0) * bound;
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(1, fan_out);
  }
  return p;
}

// Parameters registered on a tape for one forward pass.
struct EncoderVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

inline EncoderVars bind(Tape& tape, const EncoderParams& params, bool requires_grad) {
  EncoderVars v;
  for (const Matrix& w : params.weights) v.weights.push_back(tape.leaf(w, requires_grad));
  for (const Matrix& b : params.biases) v.biases.push_back(tape.leaf(b, requires_grad));
  return v;
}

// Normalized adjacencies used by the encoder layers of one view.
struct ViewAdjacency {
  std::shared_ptr<const SparseAdjacency> intra;
  std::shared_ptr<const SparseAdjacency> extended;

  ViewAdjacency(const GraphBatch& batch, const EncoderConfig& config) {
    intra = std::make_shared<const SparseAdjacency>(normalized_adjacency(batch, false));
    const bool any_extended = config.gip_start_layer < config.num_layers;
    extended = (any_extended && !batch.inter_edges.empty())
                   ? std::make_shared<const SparseAdjacency>(normalized_adjacency(batch, true))
                   : intra;
  }

  const std::shared_ptr<const SparseAdjacency>& for_layer(std::size_t l, const EncoderConfig& c) const {
    return l < c.gip_start_layer ? intra : extended;
  }
};

// H(l+1) = ReLU(A_l H(l) W(l) + b(l)); ReLU on every layer, the last one
// included.
inline Var encode_nodes(Tape& tape, const GraphBatch& batch, const EncoderVars& vars,
                        const EncoderConfig& config) {
  if (batch.feature_dim() != config.input_dim)
    throw ShapeError("batch feature dim " + std::to_string(batch.feature_dim()) +
                     " != encoder.input_dim " + std::to_string(config.input_dim));
  if (vars.weights.size() != config.num_layers) throw ShapeError("encoder vars do not match config");
  const ViewAdjacency adj(batch, config);
  Var h = tape.constant(batch.features);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const auto& a = adj.for_layer(l, config);
    const Var w = vars.weights[l];
    // propagate over the narrower side
    const Var z = w.rows() < w.cols() ? matmul(spmm(a, h), w) : spmm(a, matmul(h, w));
    h = relu(add_bias_row(z, vars.biases[l]));
  }
  return h;
}

// Additive readout grouped by original graph membership.
inline Var pool_graphs(Var node_reps, const GraphBatch& batch) {
  if (node_reps.rows() != batch.total_nodes())
    throw ShapeError("pool_graphs: " + std::to_string(node_reps.rows()) + " rows for " +
                     std::to_string(batch.total_nodes()) + " nodes");
  return segment_sum(node_reps, batch.membership, batch.num_graphs());
}

inline Var encode_view(Tape& tape, const GraphBatch& view, const EncoderVars& vars,
                       const EncoderConfig& config) {
  return pool_graphs(encode_nodes(tape, view, vars, config), view);
}

// Inference-only forward pass on a private tape.
inline Matrix encode_view(const GraphBatch& view, const EncoderParams& params,
                          const EncoderConfig& config) {
  params.check(config);
  Tape tape;
  const EncoderVars vars = bind(tape, params, false);
  return encode_view(tape, view, vars, config).value();
}

inline Matrix encode_nodes(const GraphBatch& batch, const EncoderParams& params,
                           const EncoderConfig& config) {
  params.check(config);
  Tape tape;
  const EncoderVars vars = bind(tape, params, false);
  return encode_nodes(tape, batch, vars, config).value();
}

}  // namespace giplab
