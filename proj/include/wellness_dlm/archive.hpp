#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "wellness_dlm/data_model.hpp"
#include "wellness_dlm/preprocess.hpp"

namespace wdlm {

using json = nlohmann::json;

inline constexpr const char* kArchiveFormat = "wellness-dlm-archive";
inline constexpr int kArchiveVersion = 1;

// ---------------------------------------------------------------------------
// Eigen matrices as arrays of rows. NaN is written as null.

namespace io {

template <typename Derived>
json matrix_to_json(const Eigen::MatrixBase<Derived>& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const auto v = m(r, c);
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>) {
        if (std::isnan(v)) {
          row.push_back(nullptr);
          continue;
        }
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (std::isnan(v[k])) a.push_back(nullptr);
    else a.push_back(v[k]);
  }
  return a;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j.at(r);
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ParseError("archive: ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(c).is_null() ? kNaN : row.at(c).get<double>();
  }
  return m;
}

inline Eigen::MatrixXi int_matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXi m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j.at(r).size()) != cols) throw ParseError("archive: ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<int>();
  }
  return m;
}

inline Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v[static_cast<Eigen::Index>(k)] = j[k].is_null() ? kNaN : j[k].get<double>();
  return v;
}

template <typename M>
json matrices_to_json(const std::vector<M>& ms) {
  json a = json::array();
  for (const auto& m : ms) a.push_back(matrix_to_json(m));
  return a;
}

inline std::vector<Eigen::MatrixXd> matrices_from_json(const json& j) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& m : j) out.push_back(matrix_from_json(m));
  return out;
}

}  // namespace io

// ---------------------------------------------------------------------------
// Model specification

inline json to_json(const ModelSpec& s) {
  const auto& p = s.priors;
  const auto& c = s.mcmc;
  return {{"factor_form", to_string(s.form)},
          {"lag_depth", s.lag_depth},
          {"categories", s.categories},
          {"constrained_lags", s.constrained_lags},
          {"priors",
           {{"alpha_variance", p.alpha_variance},
            {"loading_variance", p.loading_variance},
            {"ig_shape", p.ig_shape},
            {"ig_rate", p.ig_rate},
            {"simplex_concentration", p.simplex_concentration},
            {"threshold_variance", p.threshold_variance},
            {"lag_weight_concentration", p.lag_weight_concentration}}},
          {"mcmc",
           {{"iterations", c.iterations},
            {"burn_in", c.burn_in},
            {"thin", c.thin},
            {"threshold_step", c.threshold_step},
            {"simplex_scale", c.simplex_scale},
            {"lag_weight_scale", c.lag_weight_scale},
            {"target_acceptance", c.target_acceptance},
            {"adapt", c.adapt},
            {"seed", c.seed}}}};
}

inline ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.form = factor_form_from_string(j.at("factor_form").get<std::string>());
  s.lag_depth = j.at("lag_depth").get<int>();
  s.categories = j.at("categories").get<int>();
  s.constrained_lags = j.at("constrained_lags").get<bool>();
  const auto& p = j.at("priors");
  s.priors.alpha_variance = p.at("alpha_variance").get<double>();
  s.priors.loading_variance = p.at("loading_variance").get<double>();
  s.priors.ig_shape = p.at("ig_shape").get<double>();
  s.priors.ig_rate = p.at("ig_rate").get<double>();
  s.priors.simplex_concentration = p.at("simplex_concentration").get<double>();
  s.priors.threshold_variance = p.at("threshold_variance").get<double>();
  s.priors.lag_weight_concentration = p.at("lag_weight_concentration").get<double>();
  const auto& c = j.at("mcmc");
  s.mcmc.iterations = c.at("iterations").get<long>();
  s.mcmc.burn_in = c.at("burn_in").get<long>();
  s.mcmc.thin = c.at("thin").get<long>();
  s.mcmc.threshold_step = c.at("threshold_step").get<double>();
  s.mcmc.simplex_scale = c.at("simplex_scale").get<double>();
  s.mcmc.lag_weight_scale = c.at("lag_weight_scale").get<double>();
  s.mcmc.target_acceptance = c.at("target_acceptance").get<double>();
  s.mcmc.adapt = c.at("adapt").get<bool>();
  s.mcmc.seed = c.at("seed").get<std::uint64_t>();
  return s;
}

// ---------------------------------------------------------------------------
// Model data

inline json to_json(const ModelData& d) {
  json design = json::array();
  for (const auto& f : d.design) design.push_back(io::matrices_to_json(f));
  return {{"factor_form", to_string(d.form)},
          {"categories", d.categories},
          {"lag_depth", d.lag_depth},
          {"covariates", d.covariates},
          {"metric_names", d.metric_names},
          {"individual_ids", d.individual_ids},
          {"days", d.days},
          {"z", io::matrices_to_json(d.z)},
          {"design", design},
          {"match_days", d.match_days}};
}

inline ModelData data_from_json(const json& j) {
  ModelData d;
  d.form = factor_form_from_string(j.at("factor_form").get<std::string>());
  d.categories = j.at("categories").get<int>();
  d.lag_depth = j.at("lag_depth").get<int>();
  d.covariates = j.at("covariates").get<int>();
  d.metric_names = j.at("metric_names").get<std::vector<std::string>>();
  d.individual_ids = j.at("individual_ids").get<std::vector<std::string>>();
  d.days = j.at("days").get<std::vector<std::vector<int>>>();
  for (const auto& z : j.at("z")) d.z.push_back(io::int_matrix_from_json(z));
  for (const auto& f : j.at("design")) d.design.push_back(io::matrices_from_json(f));
  d.match_days = j.at("match_days").get<std::vector<std::vector<int>>>();
  return d;
}

// ---------------------------------------------------------------------------
// Preprocessing artifacts

inline json to_json(const PreprocessArtifacts& a) {
  json ind = json::array();
  for (std::size_t i = 0; i < a.recoding.size(); ++i) {
    const auto& r = a.recovery[i];
    const auto& cv = a.covariates[i];
    ind.push_back({{"centers", a.recoding[i].centers},
                   {"cut_points", a.recoding[i].cut_points},
                   {"kmeans_objective", a.recoding[i].objective},
                   {"recovery_loading", r.loading},
                   {"recovery_variance_explained", r.variance_explained},
                   {"recovery_sign_convention", to_string(r.convention)},
                   {"sleep_mean", r.mean},
                   {"sleep_sd", r.sd},
                   {"workload_mean", cv[0].mean},
                   {"workload_sd", cv[0].sd},
                   {"recovery_mean", cv[1].mean},
                   {"recovery_sd", cv[1].sd}});
  }
  return {{"categories", a.categories}, {"individuals", ind}};
}

inline PreprocessArtifacts artifacts_from_json(const json& j) {
  PreprocessArtifacts a;
  a.categories = j.at("categories").get<int>();
  for (const auto& e : j.at("individuals")) {
    RecodingMap map;
    map.centers = e.at("centers").get<std::vector<double>>();
    map.cut_points = e.at("cut_points").get<std::vector<double>>();
    map.objective = e.at("kmeans_objective").get<double>();
    a.recoding.push_back(std::move(map));
    RecoveryLoading r;
    r.loading = e.at("recovery_loading").get<std::array<double, 2>>();
    r.variance_explained = e.at("recovery_variance_explained").get<double>();
    r.convention = sign_convention_from_string(e.at("recovery_sign_convention").get<std::string>());
    r.mean = e.at("sleep_mean").get<std::array<double, 2>>();
    r.sd = e.at("sleep_sd").get<std::array<double, 2>>();
    a.recovery.push_back(r);
    a.covariates.push_back({Standardization{e.at("workload_mean").get<double>(), e.at("workload_sd").get<double>()},
                            Standardization{e.at("recovery_mean").get<double>(), e.at("recovery_sd").get<double>()}});
  }
  return a;
}

// ---------------------------------------------------------------------------
// Chain states and draws

inline json to_json(const ChainState& s) {
  return {{"ztilde", io::matrices_to_json(s.ztilde)},
          {"y", io::matrices_to_json(s.y)},
          {"beta0", io::matrix_to_json(s.beta0)},
          {"beta", io::matrices_to_json(s.beta)},
          {"alpha_ind", io::matrices_to_json(s.alpha_ind)},
          {"alpha_global", io::matrix_to_json(s.alpha_global)},
          {"psi", io::matrix_to_json(s.psi)},
          {"theta", io::matrix_to_json(s.theta)},
          {"var_simplex", io::vector_to_json(s.var_simplex)}};
}

inline ChainState state_from_json(const json& j) {
  ChainState s;
  s.ztilde = io::matrices_from_json(j.at("ztilde"));
  s.y = io::matrices_from_json(j.at("y"));
  s.beta0 = io::matrix_from_json(j.at("beta0"));
  s.beta = io::matrices_from_json(j.at("beta"));
  s.alpha_ind = io::matrices_from_json(j.at("alpha_ind"));
  s.alpha_global = io::matrix_from_json(j.at("alpha_global"));
  s.psi = io::matrix_from_json(j.at("psi"));
  s.theta = io::matrix_from_json(j.at("theta"));
  s.var_simplex = io::vector_from_json(j.at("var_simplex"));
  return s;
}

inline json to_json(const AcceptanceCounter& c) { return {{"attempts", c.attempts}, {"accepts", c.accepts}}; }

inline AcceptanceCounter counter_from_json(const json& j) {
  return {j.at("attempts").get<long>(), j.at("accepts").get<long>()};
}

inline json to_json(const AcceptanceReport& r) {
  json th = json::array();
  for (const auto& c : r.thresholds) th.push_back(to_json(c));
  return {{"thresholds", th},
          {"simplex", to_json(r.simplex)},
          {"simplex_collapsed", to_json(r.simplex_collapsed)},
          {"lag_weights", to_json(r.lag_weights)},
          {"threshold_steps", r.threshold_steps},
          {"simplex_scale", r.simplex_scale},
          {"collapsed_scale", r.collapsed_scale},
          {"lag_weight_scale", r.lag_weight_scale}};
}

inline AcceptanceReport acceptance_from_json(const json& j) {
  AcceptanceReport r;
  for (const auto& c : j.at("thresholds")) r.thresholds.push_back(counter_from_json(c));
  r.simplex = counter_from_json(j.at("simplex"));
  r.simplex_collapsed = counter_from_json(j.at("simplex_collapsed"));
  r.lag_weights = counter_from_json(j.at("lag_weights"));
  r.threshold_steps = j.at("threshold_steps").get<std::vector<double>>();
  r.simplex_scale = j.at("simplex_scale").get<double>();
  r.collapsed_scale = j.at("collapsed_scale").get<double>();
  r.lag_weight_scale = j.at("lag_weight_scale").get<double>();
  return r;
}

// ---------------------------------------------------------------------------
// Fitted-model archive: one JSON document holding everything needed to
// summarize or refit.

struct Archive {
  ModelSpec spec;
  ModelData data;
  std::optional<PreprocessArtifacts> artifacts;
  PosteriorDraws draws;
  int chains = 1;
  std::string version;
};

inline json to_json(const Archive& a) {
  json acc = json::array();
  for (const auto& r : a.draws.acceptance) acc.push_back(to_json(r));
  json draws = json::array();
  for (std::size_t d = 0; d < a.draws.size(); ++d) {
    json s = to_json(a.draws.states[d]);
    s["chain"] = a.draws.chain[d];
    s["iteration"] = a.draws.iteration[d];
    draws.push_back(std::move(s));
  }
  return {{"format", kArchiveFormat},
          {"format_version", kArchiveVersion},
          {"provenance",
           {{"software_version", a.version},
            {"spec_hash", a.draws.spec_hash},
            {"seed", a.draws.seed},
            {"chains", a.chains}}},
          {"spec", to_json(a.spec)},
          {"data", to_json(a.data)},
          {"preprocessing", a.artifacts ? to_json(*a.artifacts) : json(nullptr)},
          {"acceptance", acc},
          {"draws", draws}};
}

inline Archive archive_from_json(const json& j) {
  if (j.value("format", "") != kArchiveFormat) throw ParseError("not a model archive");
  if (j.at("format_version").get<int>() != kArchiveVersion)
    throw ParseError("unsupported archive version " + j.at("format_version").dump());
  Archive a;
  const auto& prov = j.at("provenance");
  a.version = prov.at("software_version").get<std::string>();
  a.chains = prov.at("chains").get<int>();
  a.draws.spec_hash = prov.at("spec_hash").get<std::string>();
  a.draws.seed = prov.at("seed").get<std::uint64_t>();
  a.spec = spec_from_json(j.at("spec"));
  a.data = data_from_json(j.at("data"));
  if (!j.at("preprocessing").is_null()) a.artifacts = artifacts_from_json(j.at("preprocessing"));
  for (const auto& r : j.at("acceptance")) a.draws.acceptance.push_back(acceptance_from_json(r));
  for (const auto& s : j.at("draws")) {
    a.draws.states.push_back(state_from_json(s));
    a.draws.chain.push_back(s.at("chain").get<int>());
    a.draws.iteration.push_back(s.at("iteration").get<long>());
  }
  return a;
}

inline void write_archive(std::ostream& out, const Archive& a) { out << to_json(a).dump() << '\n'; }

inline Archive read_archive(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(std::string("archive: ") + e.what());
  }
  try {
    return archive_from_json(j);
  } catch (const json::exception& e) {
    throw ParseError(std::string("archive: ") + e.what());
  }
}

}  // namespace wdlm
