#pragma once

#include <optional>
#include <string>

#include "giplab/autodiff.hpp"
#include "giplab/encoder.hpp"
#include "giplab/error.hpp"

namespace giplab {

enum class ObjectiveKind { Grace, Mvgrl, Bgrl, Gbt };

inline std::string to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::Grace: return "GRACE";
    case ObjectiveKind::Mvgrl: return "MVGRL";
    case ObjectiveKind::Bgrl: return "BGRL";
    case ObjectiveKind::Gbt: return "GBT";
  }
  return "?";
}

inline ObjectiveKind parse_objective_kind(const std::string& s) {
  if (s == "GRACE") return ObjectiveKind::Grace;
  if (s == "MVGRL") return ObjectiveKind::Mvgrl;
  if (s == "BGRL") return ObjectiveKind::Bgrl;
  if (s == "GBT") return ObjectiveKind::Gbt;
  throw ConfigError("unknown objective: " + s);
}

struct ObjectiveConfig {
  ObjectiveKind kind = ObjectiveKind::Grace;
  double tau = 0.5;
  // Barlow-Twins off-diagonal weight; unset means 1 / embedding dim.
  std::optional<double> lambda;
  double ema_decay = 0.99;
  // GRACE: average both anchor directions instead of view-1 anchors only.
  bool symmetric = false;

  void validate() const {
    if (!(tau > 0.0)) throw ConfigError("objective.tau must be > 0");
    if (lambda && !(*lambda >= 0.0)) throw ConfigError("objective.lambda must be >= 0");
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ConfigError("objective.ema_decay must be in (0, 1)");
  }

  double lambda_for(std::size_t dim) const { return lambda ? *lambda : 1.0 / static_cast<double>(dim); }

  friend bool operator==(const ObjectiveConfig&, const ObjectiveConfig&) = default;
};

namespace detail {
inline void check_views(Var z1, Var z2, std::string_view name, std::size_t min_rows) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols())
    throw ShapeError(std::string(name) + ": view shapes " + z1.value().shape_str() + " vs " +
                     z2.value().shape_str());
  if (z1.rows() < min_rows)
    throw ConfigError(std::string(name) + ": needs at least " + std::to_string(min_rows) + " graphs");
}

// mean_i [logsumexp_j S_ij - S_ii]
inline Var info_nce(Var sim) { return mean(sub(logsumexp_rows(sim), diag(sim))); }
}  // namespace detail

// InfoNCE over cosine similarities; view-1 rows are anchors, view-2 rows
// the candidates.
inline Var grace_loss(Var z1, Var z2, double tau, bool symmetric = false) {
  detail::check_views(z1, z2, "grace_loss", 2);
  if (!(tau > 0.0)) throw ConfigError("grace_loss: tau must be > 0");
  const Var n1 = row_l2_normalize(z1);
  const Var n2 = row_l2_normalize(z2);
  const Var sim = scale(matmul(n1, transpose(n2)), 1.0 / tau);
  const Var forward = detail::info_nce(sim);
  if (!symmetric) return forward;
  return scale(add(forward, detail::info_nce(transpose(sim))), 0.5);
}

// Negated Jensen-Shannon estimate with a bilinear discriminator
// sigma(z1_i^T W z2_j). Matched rows are positives, all N(N-1) mismatched
// pairs are negatives.
inline Var mvgrl_loss(Var z1, Var z2, Var discriminator) {
  detail::check_views(z1, z2, "mvgrl_loss", 2);
  const std::size_t n = z1.rows(), d = z1.cols();
  if (discriminator.rows() != d || discriminator.cols() != d)
    throw ShapeError("mvgrl_loss: discriminator must be " + std::to_string(d) + "x" + std::to_string(d));
  const Var logits = matmul(matmul(z1, discriminator), transpose(z2));
  Matrix pos_w(n, n), neg_w(n, n);
  const double inv_pos = 1.0 / static_cast<double>(n);
  const double inv_neg = 1.0 / static_cast<double>(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j)
        pos_w(i, j) = inv_pos;
      else
        neg_w(i, j) = inv_neg;
    }
  // log(1 - sigma(x)) = log sigma(-x)
  const Var pos = weighted_sum(log_sigmoid(logits), std::move(pos_w));
  const Var neg = weighted_sum(log_sigmoid(scale(logits, -1.0)), std::move(neg_w));
  return scale(add(pos, neg), -1.0);
}

// (1/N) sum_i ||sg(target_i) - online_i||^2
inline Var bgrl_loss(Var online, Var target) {
  detail::check_views(online, target, "bgrl_loss", 1);
  const Var diff = sub(online, stop_gradient(target));
  return scale(sum(hadamard(diff, diff)), 1.0 / static_cast<double>(online.rows()));
}

// Barlow-Twins redundancy reduction on C = (1/N) std(z1)^T std(z2).
inline Var gbt_loss(Var z1, Var z2, double lambda) {
  detail::check_views(z1, z2, "gbt_loss", 2);
  const std::size_t n = z1.rows(), d = z1.cols();
  const Var c = scale(matmul(transpose(batch_standardize(z1)), batch_standardize(z2)),
                      1.0 / static_cast<double>(n));
  const Var off = sub(c, z1.tape()->constant(Matrix::identity(d)));
  Matrix w(d, d, lambda);
  for (std::size_t i = 0; i < d; ++i) w(i, i) = 1.0;
  return weighted_sum(hadamard(off, off), std::move(w));
}

// target <- decay * target + (1 - decay) * online, outside any tape.
inline void ema_update(EncoderParams& target, const EncoderParams& online, double decay) {
  if (target.weights.size() != online.weights.size() || target.biases.size() != online.biases.size())
    throw ShapeError("ema_update: layer count mismatch");
  auto blend = [decay](Matrix& t, const Matrix& o) {
    if (t.rows() != o.rows() || t.cols() != o.cols())
      throw ShapeError("ema_update: " + t.shape_str() + " vs " + o.shape_str());
    for (std::size_t i = 0; i < t.size(); ++i)
      t.data()[i] = decay * t.data()[i] + (1.0 - decay) * o.data()[i];
  };
  for (std::size_t l = 0; l < target.weights.size(); ++l) {
    blend(target.weights[l], online.weights[l]);
    blend(target.biases[l], online.biases[l]);
  }
}

}  // namespace giplab
