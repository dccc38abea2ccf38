#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "giplab/augment.hpp"
#include "giplab/autodiff.hpp"
#include "giplab/config.hpp"
#include "giplab/encoder.hpp"
#include "giplab/error.hpp"
#include "giplab/graph.hpp"
#include "giplab/objectives.hpp"
#include "giplab/optim.hpp"
#include "giplab/rng.hpp"

namespace giplab {

// Everything a pretraining run learns: the online encoder plus whatever the
// objective owns (MVGRL discriminator, BGRL target encoder).
struct Model {
  EncoderParams online;
  std::optional<Matrix> discriminator;
  std::optional<EncoderParams> target;

  friend bool operator==(const Model&, const Model&) = default;

  std::vector<std::pair<std::string, const Matrix*>> named_tensors() const {
    std::vector<std::pair<std::string, const Matrix*>> out;
    auto encoder = [&out](const std::string& prefix, const EncoderParams& p) {
      for (std::size_t l = 0; l < p.num_layers(); ++l) {
        out.emplace_back(prefix + ".W" + std::to_string(l), &p.weights[l]);
        out.emplace_back(prefix + ".b" + std::to_string(l), &p.biases[l]);
      }
    };
    encoder("encoder", online);
    if (discriminator) out.emplace_back("objective.discriminator", &*discriminator);
    if (target) encoder("target", *target);
    return out;
  }
};

struct LossRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

struct PretrainResult {
  Model model;
  std::vector<LossRecord> trace;
};

namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kViews = 3;
}  // namespace streams

inline Model init_model(const TrainConfig& config) {
  config.validate();
  const SeededRng root(config.seed);
  SeededRng enc_rng = root.substream({streams::kInit, 0});
  Model m;
  m.online = init_params(config.encoder, enc_rng);
  if (config.objective.kind == ObjectiveKind::Mvgrl) {
    SeededRng rng = root.substream({streams::kInit, 1});
    const std::size_t d = config.encoder.hidden_dim;
    const double bound = std::sqrt(6.0 / static_cast<double>(2 * d));
    Matrix w(d, d);
    for (double& v : w.data()) v = (2.0 * rng.uniform() - 1.0) * bound;
    m.discriminator = std::move(w);
  }
  if (config.objective.kind == ObjectiveKind::Bgrl) m.target = m.online;
  return m;
}

// Shuffle order of one epoch; depends only on (seed, epoch).
inline std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  SeededRng rng = SeededRng(seed).substream({streams::kShuffle, epoch});
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

// Consecutive chunks of `order`; a trailing chunk of one graph is dropped.
inline std::vector<std::vector<std::size_t>> partition_batches(const std::vector<std::size_t>& order,
                                                               std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    if (end - i < 2) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

inline GraphBatch gather_batch(const std::vector<Graph>& dataset, const std::vector<std::size_t>& ids) {
  std::vector<const Graph*> ptrs;
  ptrs.reserve(ids.size());
  for (std::size_t id : ids) ptrs.push_back(&dataset[id]);
  return disjoint_union(ptrs);
}

// Loss for one pair of views on a fresh tape, followed by backward. Returns
// the loss value and fills `grads` in the order of trainable_tensors().
inline double objective_step(const Model& model, const TrainConfig& config, const GraphBatch& view1,
                             const GraphBatch& view2, std::vector<Matrix>& grads) {
  Tape tape;
  const EncoderVars online = bind(tape, model.online, true);
  const Var z1 = encode_view(tape, view1, online, config.encoder);
  std::optional<Var> disc;
  Var loss;
  switch (config.objective.kind) {
    case ObjectiveKind::Grace: {
      const Var z2 = encode_view(tape, view2, online, config.encoder);
      loss = grace_loss(z1, z2, config.objective.tau, config.objective.symmetric);
      break;
    }
    case ObjectiveKind::Mvgrl: {
      const Var z2 = encode_view(tape, view2, online, config.encoder);
      disc = tape.leaf(*model.discriminator, true);
      loss = mvgrl_loss(z1, z2, *disc);
      break;
    }
    case ObjectiveKind::Bgrl: {
      const EncoderVars target = bind(tape, *model.target, false);
      const Var z2 = encode_view(tape, view2, target, config.encoder);
      loss = bgrl_loss(z1, z2);
      break;
    }
    case ObjectiveKind::Gbt: {
      const Var z2 = encode_view(tape, view2, online, config.encoder);
      loss = gbt_loss(z1, z2, config.objective.lambda_for(config.encoder.hidden_dim));
      break;
    }
  }
  const double value = loss.scalar();
  Gradients g = tape.backward(loss);
  grads.clear();
  for (std::size_t l = 0; l < online.weights.size(); ++l) {
    grads.push_back(g[online.weights[l]]);
    grads.push_back(g[online.biases[l]]);
  }
  if (disc) grads.push_back(g[*disc]);
  return value;
}

inline std::vector<Matrix*> trainable_tensors(Model& model) {
  std::vector<Matrix*> out;
  for (std::size_t l = 0; l < model.online.num_layers(); ++l) {
    out.push_back(&model.online.weights[l]);
    out.push_back(&model.online.biases[l]);
  }
  if (model.discriminator) out.push_back(&*model.discriminator);
  return out;
}

// Self-supervised pretraining: per epoch shuffle, batch, augment twice,
// encode both views, score the objective, backprop, Adam (+ EMA for BGRL).
inline PretrainResult pretrain(const std::vector<Graph>& dataset, const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw ConfigError("pretrain: empty dataset");
  if (dataset.front().feature_dim() != config.encoder.input_dim)
    throw CompatibilityError("dataset feature dim " + std::to_string(dataset.front().feature_dim()) +
                             " != encoder.input_dim " + std::to_string(config.encoder.input_dim));
  PretrainResult result;
  result.model = init_model(config);
  AdamState adam;
  adam.lr = config.lr;
  const SeededRng root(config.seed);
  std::vector<Matrix> grads;
  std::vector<std::vector<std::size_t>> frozen_batches;
  std::map<std::size_t, std::pair<GraphBatch, GraphBatch>> frozen_views;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::vector<std::size_t>> batches;
    if (config.freeze_views) {
      if (frozen_batches.empty())
        frozen_batches = partition_batches(epoch_permutation(dataset.size(), config.seed, 0),
                                           config.batch_size);
      batches = frozen_batches;
    } else {
      batches = partition_batches(epoch_permutation(dataset.size(), config.seed, epoch), config.batch_size);
    }
    for (std::size_t b = 0; b < batches.size(); ++b, ++step) {
      std::pair<GraphBatch, GraphBatch> views;
      if (config.freeze_views) {
        auto it = frozen_views.find(b);
        if (it == frozen_views.end()) {
          const GraphBatch batch = gather_batch(dataset, batches[b]);
          it = frozen_views
                   .emplace(b, make_views(batch, config.view1, config.view2,
                                          root.substream({streams::kViews, 0, b})))
                   .first;
        }
        views = it->second;
      } else {
        const GraphBatch batch = gather_batch(dataset, batches[b]);
        views = make_views(batch, config.view1, config.view2, root.substream({streams::kViews, epoch, b}));
      }
      double loss = 0.0;
      try {
        loss = objective_step(result.model, config, views.first, views.second, grads);
      } catch (const NumericError& e) {
        std::string ids;
        for (std::size_t id : batches[b]) ids += (ids.empty() ? "" : ",") + std::to_string(id);
        throw NumericError("step " + std::to_string(step) + " (epoch " + std::to_string(epoch) +
                           ", graphs " + ids + "): " + e.what());
      }
      std::vector<const Matrix*> gptr;
      for (const Matrix& g : grads) gptr.push_back(&g);
      adam_step(trainable_tensors(result.model), gptr, adam);
      if (result.model.target) ema_update(*result.model.target, result.model.online, config.objective.ema_decay);
      result.trace.push_back({step, epoch, loss});
    }
  }
  return result;
}

inline constexpr const char* kCheckpointMagic = "GIPLAB-CKPT";
inline constexpr int kCheckpointVersion = 1;

inline std::string serialize_checkpoint(const Model& model, const TrainConfig& config) {
  std::string out = std::string(kCheckpointMagic) + " v" + std::to_string(kCheckpointVersion) + "\n";
  out += config_echo(config) + "\n";
  for (const auto& [name, m] : model.named_tensors()) {
    out += name + " " + std::to_string(m->rows()) + " " + std::to_string(m->cols()) + "\n";
    for (std::size_t r = 0; r < m->rows(); ++r) {
      for (std::size_t c = 0; c < m->cols(); ++c) out += (c ? " " : "") + fmt17((*m)(r, c));
      out += "\n";
    }
  }
  return out;
}

inline void save_checkpoint(const Model& model, const TrainConfig& config, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path);
  const std::string text = serialize_checkpoint(model, config);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw IoError("failed writing checkpoint " + path);
}

struct Checkpoint {
  Model model;
  TrainConfig config;
};

inline Checkpoint parse_checkpoint(const std::string& text) {
  if (!text.empty() && text.back() != '\n')
    throw ParseError("truncated checkpoint (no trailing newline)",
                     static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) + 1);
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto next = [&](const char* what) {
    if (!std::getline(in, line)) throw ParseError(std::string("unexpected end of file, expected ") + what, lineno + 1);
    ++lineno;
  };
  next("header");
  {
    std::istringstream hs(line);
    std::string magic, version;
    hs >> magic >> version;
    if (magic != kCheckpointMagic) throw ParseError("not a checkpoint (bad magic)", lineno);
    if (version != "v" + std::to_string(kCheckpointVersion))
      throw VersionError("unsupported checkpoint version '" + version + "'");
  }
  next("config echo");
  Checkpoint ck;
  try {
    ck.config = parse_config_echo(line);
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), lineno);
  }
  std::map<std::string, Matrix> tensors;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream hs(line);
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(hs >> name >> rows >> cols)) throw ParseError("expected 'name rows cols'", lineno);
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      next("tensor row");
      std::istringstream rs(line);
      std::string tok;
      std::size_t c = 0;
      while (rs >> tok) {
        if (c >= cols) throw ParseError("too many values in row", lineno);
        char* end = nullptr;
        m(r, c++) = std::strtod(tok.c_str(), &end);
        if (*end != '\0') throw ParseError("bad number '" + tok + "'", lineno);
      }
      if (c != cols) throw ParseError("expected " + std::to_string(cols) + " values", lineno);
    }
    if (!tensors.emplace(name, std::move(m)).second) throw ParseError("duplicate tensor " + name, lineno);
  }
  auto take = [&](const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ParseError("missing tensor " + name, lineno);
    Matrix m = std::move(it->second);
    tensors.erase(it);
    return m;
  };
  auto encoder = [&](const std::string& prefix) {
    EncoderParams p;
    for (std::size_t l = 0; l < ck.config.encoder.num_layers; ++l) {
      p.weights.push_back(take(prefix + ".W" + std::to_string(l)));
      p.biases.push_back(take(prefix + ".b" + std::to_string(l)));
    }
    try {
      p.check(ck.config.encoder);
    } catch (const ShapeError& e) {
      throw ParseError(e.what(), lineno);
    }
    return p;
  };
  ck.model.online = encoder("encoder");
  if (ck.config.objective.kind == ObjectiveKind::Mvgrl) ck.model.discriminator = take("objective.discriminator");
  if (ck.config.objective.kind == ObjectiveKind::Bgrl) ck.model.target = encoder("target");
  if (!tensors.empty()) throw ParseError("unexpected tensor " + tensors.begin()->first, lineno);
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace giplab
