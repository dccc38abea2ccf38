#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "giplab/augment.hpp"
#include "giplab/encoder.hpp"
#include "giplab/error.hpp"
#include "giplab/objectives.hpp"

namespace giplab {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double lr = 5e-4;
  ObjectiveConfig objective;
  ViewSpec view1{AugSpec(AugKind::Gip, 0.5)};
  ViewSpec view2{AugSpec(AugKind::Gip, 0.5)};
  EncoderConfig encoder;
  // Sample each batch's views once and reuse them (batches then also keep
  // their epoch-0 composition).
  bool freeze_views = false;

  void validate() const {
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    objective.validate();
    encoder.validate();
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct RunConfig {
  std::string dataset = "synth-2M";
  TrainConfig train;
  std::size_t folds = 10;
};

inline std::string view_kinds(const ViewSpec& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "+" : "") + to_string(v[i].kind);
  return v.empty() ? "NONE" : s;
}

inline std::string view_probs(const ViewSpec& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "+" : "") + fmt17(v[i].p);
  return v.empty() ? "0" : s;
}

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || v.front() == '-')
    throw ConfigError("bad value for " + key + ": '" + v + "'");
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("bad value for " + key + ": '" + v + "'");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad value for " + key + ": '" + v + "'");
}

// Kinds and probabilities are '+'-separated stage lists.
inline void set_view_kinds(ViewSpec& view, const std::string& v) {
  std::vector<double> probs;
  for (const AugSpec& s : view) probs.push_back(s.p);
  view.clear();
  const auto kinds = split(v, '+');
  for (std::size_t i = 0; i < kinds.size(); ++i)
    view.emplace_back(parse_aug_kind(trim(kinds[i])), i < probs.size() ? probs[i] : 0.0);
}

inline void set_view_probs(ViewSpec& view, const std::string& key, const std::string& v) {
  const auto parts = split(v, '+');
  if (parts.size() != view.size())
    throw ConfigError("bad value for " + key + ": expected " + std::to_string(view.size()) +
                      " probabilities");
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const double p = to_double(key, trim(parts[i]));
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("bad value for " + key + ": outside [0,1]");
    view[i].p = p;
  }
}

}  // namespace detail

inline void set_train_key(TrainConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  if (key == "epochs") c.epochs = to_u64(key, v);
  else if (key == "batch_size") c.batch_size = to_u64(key, v);
  else if (key == "seed") c.seed = to_u64(key, v);
  else if (key == "lr") c.lr = to_double(key, v);
  else if (key == "freeze_views") c.freeze_views = to_bool(key, v);
  else if (key == "objective.kind") c.objective.kind = parse_objective_kind(v);
  else if (key == "objective.tau") c.objective.tau = to_double(key, v);
  else if (key == "objective.lambda")
    c.objective.lambda = (v == "auto") ? std::optional<double>{} : std::optional<double>{to_double(key, v)};
  else if (key == "objective.ema_decay") c.objective.ema_decay = to_double(key, v);
  else if (key == "objective.symmetric") c.objective.symmetric = to_bool(key, v);
  else if (key == "view1.kind") set_view_kinds(c.view1, v);
  else if (key == "view2.kind") set_view_kinds(c.view2, v);
  else if (key == "view1.p") set_view_probs(c.view1, key, v);
  else if (key == "view2.p") set_view_probs(c.view2, key, v);
  else if (key == "encoder.layers") c.encoder.num_layers = to_u64(key, v);
  else if (key == "encoder.hidden") c.encoder.hidden_dim = to_u64(key, v);
  else if (key == "encoder.input_dim") c.encoder.input_dim = to_u64(key, v);
  else if (key == "encoder.gip_start_layer") c.encoder.gip_start_layer = to_u64(key, v);
  else throw ConfigError("unknown config key: " + key);
}

inline void set_run_key(RunConfig& c, const std::string& key, const std::string& v) {
  if (key == "dataset") c.dataset = v;
  else if (key == "folds") c.folds = detail::to_u64(key, v);
  else set_train_key(c.train, key, v);
}

// One line, fixed key order, 17-digit floats; parse_config_echo inverts it
// exactly.
inline std::string config_echo(const TrainConfig& c) {
  std::vector<std::pair<std::string, std::string>> kv = {
      {"epochs", std::to_string(c.epochs)},
      {"batch_size", std::to_string(c.batch_size)},
      {"seed", std::to_string(c.seed)},
      {"lr", fmt17(c.lr)},
      {"freeze_views", c.freeze_views ? "true" : "false"},
      {"objective.kind", to_string(c.objective.kind)},
      {"objective.tau", fmt17(c.objective.tau)},
      {"objective.lambda", c.objective.lambda ? fmt17(*c.objective.lambda) : "auto"},
      {"objective.ema_decay", fmt17(c.objective.ema_decay)},
      {"objective.symmetric", c.objective.symmetric ? "true" : "false"},
      {"view1.kind", view_kinds(c.view1)},
      {"view1.p", view_probs(c.view1)},
      {"view2.kind", view_kinds(c.view2)},
      {"view2.p", view_probs(c.view2)},
      {"encoder.layers", std::to_string(c.encoder.num_layers)},
      {"encoder.hidden", std::to_string(c.encoder.hidden_dim)},
      {"encoder.input_dim", std::to_string(c.encoder.input_dim)},
      {"encoder.gip_start_layer", std::to_string(c.encoder.gip_start_layer)},
  };
  std::string out;
  for (std::size_t i = 0; i < kv.size(); ++i) out += (i ? ";" : "") + kv[i].first + "=" + kv[i].second;
  return out;
}

inline TrainConfig parse_config_echo(const std::string& line) {
  TrainConfig c;
  for (const auto& item : detail::split(line, ';')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed config echo item: " + item);
    set_train_key(c, item.substr(0, eq), item.substr(eq + 1));
  }
  return c;
}

// `key = value` lines, '#' starts a comment.
inline RunConfig parse_run_config(std::istream& in) {
  RunConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("empty key", lineno);
    set_run_key(c, key, value);
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  return parse_run_config(in);
}

}  // namespace giplab
