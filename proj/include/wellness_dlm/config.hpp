#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "wellness_dlm/data_model.hpp"

namespace wdlm {

/// Fitting configuration beyond the model itself.
struct RunSettings {
  int chains = 1;
  long progress_every = 0;
};

/// Flat `key = value` settings. Blank lines and lines starting with # are
/// ignored; a later duplicate key wins.
using ConfigMap = std::map<std::string, std::string>;

inline ConfigMap parse_config(std::istream& in) {
  ConfigMap out;
  std::string line;
  long line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ParseError("config line " + std::to_string(line_no) + ": empty key");
    out[key] = trim(t.substr(eq + 1));
  }
  return out;
}

namespace detail {

template <typename T>
T parse_value(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  if constexpr (std::is_same_v<T, bool>) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ParseError("config key '" + key + "': expected true or false, got '" + v + "'");
  } else {
    in >> out;
    if (in.fail() || !in.eof()) throw ParseError("config key '" + key + "': bad value '" + v + "'");
  }
  return out;
}

using Setter = std::function<void(ModelSpec&, RunSettings&, const std::string&)>;
using Getter = std::function<std::string(const ModelSpec&, const RunSettings&)>;

template <typename T>
std::string show(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
  }
}

// One entry per configurable field.
#define WDLM_FIELD(key, expr)                                                                  \
  {key,                                                                                        \
   {[](ModelSpec& s, RunSettings& r, const std::string& v) {                                   \
      (void)s;                                                                                 \
      (void)r;                                                                                 \
      expr = parse_value<std::decay_t<decltype(expr)>>(key, v);                                \
    },                                                                                         \
    [](const ModelSpec& s, const RunSettings& r) {                                             \
      (void)s;                                                                                 \
      (void)r;                                                                                 \
      return show(expr);                                                                       \
    }}}

inline const std::map<std::string, std::pair<Setter, Getter>>& config_fields() {
  static const std::map<std::string, std::pair<Setter, Getter>> fields = {
      {"factor_form",
       {[](ModelSpec& s, RunSettings&, const std::string& v) { s.form = factor_form_from_string(v); },
        [](const ModelSpec& s, const RunSettings&) { return to_string(s.form); }}},
      WDLM_FIELD("lag_depth", s.lag_depth),
      WDLM_FIELD("categories", s.categories),
      WDLM_FIELD("constrained_lags", s.constrained_lags),
      WDLM_FIELD("alpha_variance", s.priors.alpha_variance),
      WDLM_FIELD("loading_variance", s.priors.loading_variance),
      WDLM_FIELD("ig_shape", s.priors.ig_shape),
      WDLM_FIELD("ig_rate", s.priors.ig_rate),
      WDLM_FIELD("simplex_concentration", s.priors.simplex_concentration),
      WDLM_FIELD("threshold_variance", s.priors.threshold_variance),
      WDLM_FIELD("lag_weight_concentration", s.priors.lag_weight_concentration),
      WDLM_FIELD("iterations", s.mcmc.iterations),
      WDLM_FIELD("burn_in", s.mcmc.burn_in),
      WDLM_FIELD("thin", s.mcmc.thin),
      WDLM_FIELD("threshold_step", s.mcmc.threshold_step),
      WDLM_FIELD("simplex_scale", s.mcmc.simplex_scale),
      WDLM_FIELD("lag_weight_scale", s.mcmc.lag_weight_scale),
      WDLM_FIELD("target_acceptance", s.mcmc.target_acceptance),
      WDLM_FIELD("adapt", s.mcmc.adapt),
      WDLM_FIELD("seed", s.mcmc.seed),
      WDLM_FIELD("chains", r.chains),
  };
  return fields;
}

#undef WDLM_FIELD

}  // namespace detail

/// Apply every entry of `config`; unknown keys are an error.
inline void apply_config(const ConfigMap& config, ModelSpec& spec, RunSettings& run) {
  const auto& fields = detail::config_fields();
  for (const auto& [key, value] : config) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw ParseError("unknown config key '" + key + "'");
    try {
      it->second.first(spec, run, value);
    } catch (const std::invalid_argument& e) {
      throw ParseError("config key '" + key + "': " + e.what());
    }
  }
}

/// Effective configuration, every key present, in key order.
inline ConfigMap effective_config(const ModelSpec& spec, const RunSettings& run) {
  ConfigMap out;
  for (const auto& [key, field] : detail::config_fields()) out[key] = field.second(spec, run);
  return out;
}

inline std::string format_config(const ConfigMap& config) {
  std::string out;
  for (const auto& [k, v] : config) out += k + " = " + v + "\n";
  return out;
}

inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace wdlm
