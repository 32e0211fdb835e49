#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "wellness_dlm/archive.hpp"
#include "wellness_dlm/config.hpp"
#include "wellness_dlm/data_model.hpp"
#include "wellness_dlm/inference.hpp"
#include "wellness_dlm/panel_io.hpp"
#include "wellness_dlm/preprocess.hpp"
#include "wellness_dlm/sampler.hpp"
#include "wellness_dlm/synth.hpp"
#include "wellness_dlm/validation.hpp"

#ifndef WDLM_VERSION
#define WDLM_VERSION "0.0.0"
#endif

namespace wdlm {

inline constexpr const char* kVersion = WDLM_VERSION;

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitParse = 4,
  kExitValidation = 5,
  kExitInvariant = 6,
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// File helpers

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open input file '" + path + "'");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open output file '" + path + "'");
  return out;
}

inline void close_output(std::ofstream& out, const std::string& path) {
  out.close();
  if (!out) throw IoError("failed writing '" + path + "'");
}

template <typename Writer>
void write_file(const std::string& path, Writer&& writer) {
  auto out = open_output(path);
  writer(out);
  close_output(out, path);
}

// ---------------------------------------------------------------------------
// Manifest written next to every set of outputs

struct Manifest {
  std::string subcommand;
  std::uint64_t seed = 0;
  ConfigMap config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  json extra = json::object();

  std::string config_hash() const { return fnv1a_hex(format_config(config)); }

  json to_json() const {
    return {{"subcommand", subcommand},
            {"software_version", kVersion},
            {"seed", seed},
            {"config_hash", config_hash()},
            {"config", config},
            {"inputs", inputs},
            {"outputs", outputs},
            {"details", extra}};
  }
};

inline void write_manifest(const std::string& path, const Manifest& m) {
  write_file(path, [&](std::ostream& out) { out << m.to_json().dump(2) << '\n'; });
}

// ---------------------------------------------------------------------------
// Truth configuration files for `simulate` (JSON). Every key is optional and
// overrides the standard benchmark.

inline json to_json(const TruthConfig& t) {
  json beta = json::array();
  for (const auto& b : t.beta) beta.push_back(io::matrix_to_json(b));
  return {{"individuals", t.individuals},
          {"metrics", t.metrics},
          {"categories", t.categories},
          {"days", t.days},
          {"lag_depth", t.lag_depth},
          {"factor_form", to_string(t.form)},
          {"constrained_lags", t.constrained_lags},
          {"alpha_global", io::matrix_to_json(t.alpha_global)},
          {"psi", io::matrix_to_json(t.psi)},
          {"beta0", io::matrix_to_json(t.beta0)},
          {"beta", beta},
          {"theta", io::matrix_to_json(t.theta)},
          {"var_simplex", io::vector_to_json(t.var_simplex)},
          {"workload",
           {{"rest_probability", t.workload.rest_probability},
            {"shape", t.workload.shape},
            {"scale", t.workload.scale}}},
          {"missing_probability", t.missing_probability},
          {"match_every", t.match_every},
          {"start_day", t.start_day},
          {"seed", t.seed}};
}

inline TruthConfig truth_from_json(const json& j) {
  TruthConfig t = standard_benchmark();
  try {
    if (j.contains("individuals")) t.individuals = j["individuals"].get<int>();
    if (j.contains("metrics")) t.metrics = j["metrics"].get<int>();
    if (j.contains("categories")) t.categories = j["categories"].get<int>();
    if (j.contains("days")) t.days = j["days"].get<int>();
    if (j.contains("lag_depth")) t.lag_depth = j["lag_depth"].get<int>();
    if (j.contains("factor_form")) t.form = factor_form_from_string(j["factor_form"].get<std::string>());
    if (j.contains("constrained_lags")) t.constrained_lags = j["constrained_lags"].get<bool>();
    if (j.contains("alpha_global")) t.alpha_global = io::matrix_from_json(j["alpha_global"]);
    if (j.contains("psi")) t.psi = io::matrix_from_json(j["psi"]);
    if (j.contains("beta0")) t.beta0 = io::matrix_from_json(j["beta0"]);
    if (j.contains("beta")) t.beta = io::matrices_from_json(j["beta"]);
    if (j.contains("theta")) t.theta = io::matrix_from_json(j["theta"]);
    if (j.contains("var_simplex")) t.var_simplex = io::vector_from_json(j["var_simplex"]);
    if (j.contains("workload")) {
      const auto& w = j["workload"];
      t.workload.rest_probability = w.value("rest_probability", t.workload.rest_probability);
      t.workload.shape = w.value("shape", t.workload.shape);
      t.workload.scale = w.value("scale", t.workload.scale);
    }
    t.missing_probability = j.value("missing_probability", t.missing_probability);
    t.match_every = j.value("match_every", t.match_every);
    t.start_day = j.value("start_day", t.start_day);
    t.seed = j.value("seed", t.seed);
  } catch (const json::exception& e) {
    throw ParseError(std::string("truth config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("truth config: ") + e.what());
  }
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationFailed(e.what());
  }
  return t;
}

// ---------------------------------------------------------------------------
// Summary tables

inline std::string covariate_name(int m) { return m == 0 ? "workload" : "recovery"; }

inline std::string factor_name(const ModelData& data, int f) {
  return data.form == FactorForm::univariate ? "wellness" : covariate_name(f);
}

struct SummaryReport {
  std::vector<std::string> files;
  long correlation_undefined = 0;
  long importance_undefined = 0;
  long matches_skipped = 0;
  double importance_max_sum_error = 0.0;  // max over draws of |sum_j R_j - 1|
};

inline void write_interval_columns(std::ostream& out, const IntervalSummary& s) {
  out << ',' << csv::format_number(s.mean) << ',' << csv::format_number(s.lower) << ','
      << csv::format_number(s.median) << ',' << csv::format_number(s.upper);
}

/// Write the five summary CSV tables of a fitted archive into `dir`.
inline SummaryReport write_summaries(const Archive& a, const std::string& dir, double level, int window) {
  SummaryReport rep;
  const auto& data = a.data;
  const auto path = [&](const char* name) {
    const auto p = (std::filesystem::path(dir) / name).string();
    rep.files.push_back(p);
    return p;
  };
  const std::string interval_header = "mean,lower,median,upper";

  const auto lags = lag_effect_summary(a.draws, level);
  write_file(path("global_lags.csv"), [&](std::ostream& out) {
    out << "covariate,lag," << interval_header << ",significant,draws\n";
    for (const auto& e : lags.global) {
      out << covariate_name(e.covariate) << ',' << e.lag;
      write_interval_columns(out, e.summary);
      out << ',' << (e.summary.significant ? 1 : 0) << ',' << e.summary.draws << '\n';
    }
  });
  write_file(path("individual_lags.csv"), [&](std::ostream& out) {
    out << "athlete_id,covariate,lag," << interval_header << ",significant,draws\n";
    for (const auto& e : lags.individual) {
      out << csv::quote(data.individual_ids[e.individual]) << ',' << covariate_name(e.covariate) << ','
          << e.lag;
      write_interval_columns(out, e.summary);
      out << ',' << (e.summary.significant ? 1 : 0) << ',' << e.summary.draws << '\n';
    }
  });

  const auto corr = metric_factor_correlation(a.draws, data);
  const auto imp = relative_importance(corr);
  const int n = data.individuals(), J = data.metrics(), F = data.factors();
  auto cell_table = [&](const CellDraws& cells, long& undefined, bool importance) {
    return [&, importance](std::ostream& out) {
      out << "athlete_id,metric,factor," << interval_header << ",draws,undefined_draws"
          << (importance ? ",equal_weight" : "") << '\n';
      for (int i = 0; i < n; ++i)
        for (int f = 0; f < F; ++f)
          for (int j = 0; j < J; ++j) {
            const auto s = summarize(cells.cell(i, j, f), level);
            undefined += s.excluded;
            out << csv::quote(data.individual_ids[i]) << ',' << csv::quote(data.metric_names[j]) << ','
                << factor_name(data, f);
            write_interval_columns(out, s);
            out << ',' << s.draws << ',' << s.excluded;
            if (importance) out << ',' << csv::format_number(1.0 / J);
            out << '\n';
          }
    };
  };
  write_file(path("correlations.csv"), cell_table(corr, rep.correlation_undefined, false));
  write_file(path("relative_importance.csv"), cell_table(imp, rep.importance_undefined, true));
  for (int i = 0; i < n; ++i)
    for (int f = 0; f < F; ++f)
      for (std::size_t d = 0; d < a.draws.size(); ++d) {
        double sum = 0.0;
        bool defined = true;
        for (int j = 0; j < J; ++j) {
          const double r = imp.cell(i, j, f)[d];
          if (std::isnan(r)) defined = false;
          sum += r;
        }
        if (defined) rep.importance_max_sum_error = std::max(rep.importance_max_sum_error, std::abs(sum - 1.0));
      }

  const auto profile = matchday_profile(a.draws, data, window);
  rep.matches_skipped = profile.skipped;
  write_file(path("matchday_profile.csv"), [&](std::ostream& out) {
    out << "athlete_id,factor,offset,label,matches,mean,q25,median,q75\n";
    for (const auto& r : profile.rows)
      out << csv::quote(data.individual_ids[r.individual]) << ',' << factor_name(data, r.factor) << ','
          << r.offset << ',' << offset_label(r.offset) << ',' << r.matches << ','
          << csv::format_number(r.mean) << ',' << csv::format_number(r.q25) << ','
          << csv::format_number(r.median) << ',' << csv::format_number(r.q75) << '\n';
  });
  return rep;
}

// ---------------------------------------------------------------------------
// Subcommands

struct SpecFlags {
  std::string config_path;
  std::optional<std::string> form;
  std::optional<int> lag_depth, categories, chains;
  std::optional<long> iterations, burn_in, thin;
  std::optional<std::uint64_t> seed;
  bool constrained = false;

  void add_to(CLI::App* app, bool mcmc) {
    app->add_option("--config", config_path, "flat key = value configuration file");
    app->add_option("--form", form, "latent factor form: univariate or bivariate")
        ->check(CLI::IsMember({"univariate", "bivariate"}));
    app->add_option("--lag-depth", lag_depth, "lag depth L (days)");
    app->add_option("--categories", categories, "ordinal category count K");
    app->add_flag("--constrained-lags", constrained, "nonnegative lag weights summing to 1");
    if (!mcmc) return;
    app->add_option("--iterations", iterations, "total sweeps per chain");
    app->add_option("--burn-in", burn_in, "discarded initial sweeps");
    app->add_option("--thin", thin, "keep every thin-th post burn-in sweep");
    app->add_option("--seed", seed, "root random seed");
    app->add_option("--chains,--threads", chains, "independent chains, one thread each");
  }

  /// Defaults, then the config file, then explicit flags.
  void resolve(ModelSpec& spec, RunSettings& run, std::vector<std::string>& inputs) const {
    if (!config_path.empty()) {
      auto in = open_input(config_path);
      apply_config(parse_config(in), spec, run);
      inputs.push_back(config_path);
    }
    if (form) spec.form = factor_form_from_string(*form);
    if (lag_depth) spec.lag_depth = *lag_depth;
    if (categories) spec.categories = *categories;
    if (constrained) spec.constrained_lags = true;
    if (iterations) spec.mcmc.iterations = *iterations;
    if (burn_in) spec.mcmc.burn_in = *burn_in;
    if (thin) spec.mcmc.thin = *thin;
    if (seed) spec.mcmc.seed = *seed;
    if (chains) run.chains = *chains;
    if (run.chains < 1) throw ValidationFailed("chains must be >= 1");
  }
};

inline Panel load_panel(const std::string& path, int categories) {
  auto in = open_input(path);
  try {
    return read_panel_csv(in, categories);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline ValidationReport check_panel(const Panel& panel, const ModelSpec& spec) {
  return validate_panel(panel.ordinal, panel.covariates, spec);
}

inline int run_preprocess(const std::string& input, const std::string& output, std::string artifacts_path,
                          int categories, int restarts, std::ostream& log) {
  if (artifacts_path.empty()) artifacts_path = output + ".artifacts.json";
  RawPanel raw;
  {
    auto in = open_input(input);
    try {
      raw = read_raw_csv(in);
    } catch (const ParseError& e) {
      throw ParseError(input + ": " + e.what());
    }
  }
  const auto result = preprocess(raw, categories, restarts);
  write_file(output, [&](std::ostream& out) { write_panel_csv(out, result.panel); });
  write_file(artifacts_path, [&](std::ostream& out) { out << to_json(result.artifacts).dump(2) << '\n'; });
  Manifest m{"preprocess", 0, {{"categories", std::to_string(categories)}, {"restarts", std::to_string(restarts)}},
             {input}, {output, artifacts_path}};
  write_manifest(output + ".manifest.json", m);
  log << "preprocessed " << raw.individual_ids.size() << " individuals into " << output << "\n";
  return kExitOk;
}

inline int run_simulate(const std::string& truth_path, std::optional<std::uint64_t> seed, const std::string& output,
                        std::string truth_out, std::ostream& log) {
  if (truth_out.empty()) truth_out = output + ".truth.json";
  TruthConfig truth = standard_benchmark();
  std::vector<std::string> inputs;
  if (!truth_path.empty()) {
    auto in = open_input(truth_path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ParseError(truth_path + ": " + e.what());
    }
    truth = truth_from_json(j);
    inputs.push_back(truth_path);
  }
  if (seed) truth.seed = *seed;
  const auto syn = generate_panel(truth);
  write_file(output, [&](std::ostream& out) { write_panel_csv(out, syn.panel); });
  write_file(truth_out, [&](std::ostream& out) {
    out << json{{"truth_config", to_json(truth)}, {"latent", to_json(syn.truth)}}.dump() << '\n';
  });
  Manifest m{"simulate", truth.seed, {{"truth_config_hash", fnv1a_hex(to_json(truth).dump())}}, inputs,
             {output, truth_out}};
  write_manifest(output + ".manifest.json", m);
  log << "simulated " << truth.individuals << " individuals x " << truth.days << " days into " << output << "\n";
  return kExitOk;
}

inline int run_fit(const std::string& input, const std::string& output, const std::string& artifacts_path,
                   const SpecFlags& flags, long progress, std::ostream& log) {
  ModelSpec spec;
  RunSettings run;
  std::vector<std::string> inputs{input};
  flags.resolve(spec, run, inputs);
  const Panel panel = load_panel(input, spec.categories);
  const auto report = check_panel(panel, spec);
  if (!report.ok()) throw ValidationFailed("panel '" + input + "' failed validation:\n" + report.to_string());
  Archive a;
  a.spec = spec;
  a.chains = run.chains;
  a.version = kVersion;
  a.data = make_model_data(panel, spec);
  if (!artifacts_path.empty()) {
    auto in = open_input(artifacts_path);
    try {
      a.artifacts = artifacts_from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw ParseError(artifacts_path + ": " + e.what());
    }
    inputs.push_back(artifacts_path);
  }
  SamplerOptions options;
  options.progress_every = progress;
  a.draws = run_chain(a.data, spec, run.chains, options);
  write_file(output, [&](std::ostream& out) { write_archive(out, a); });

  json acceptance = json::array();
  for (std::size_t c = 0; c < a.draws.acceptance.size(); ++c) {
    const auto& r = a.draws.acceptance[c];
    json th = json::array();
    for (const auto& t : r.thresholds) th.push_back(t.rate());
    acceptance.push_back({{"chain", c},
                          {"thresholds", th},
                          {"simplex", r.simplex.rate()},
                          {"simplex_collapsed", r.simplex_collapsed.rate()},
                          {"lag_weights", r.lag_weights.rate()}});
    log << "chain " << c << " acceptance: simplex " << r.simplex.rate() << ", thresholds";
    for (const auto& t : r.thresholds) log << ' ' << t.rate();
    log << "\n";
  }
  Manifest m{"fit", spec.mcmc.seed, effective_config(spec, run), inputs, {output}};
  m.extra = {{"draws", a.draws.size()}, {"spec_hash", a.draws.spec_hash}, {"acceptance", acceptance}};
  write_manifest(output + ".manifest.json", m);
  log << "kept " << a.draws.size() << " draws in " << output << "\n";
  return kExitOk;
}

inline int run_summarize(const std::string& archive_path, const std::string& dir, double level, int window,
                         std::ostream& log) {
  if (!(level > 0.0 && level < 1.0)) throw ValidationFailed("--level must lie in (0, 1)");
  if (window < 0) throw ValidationFailed("--window must be >= 0");
  Archive a;
  {
    auto in = open_input(archive_path);
    try {
      a = read_archive(in);
    } catch (const ParseError& e) {
      throw ParseError(archive_path + ": " + e.what());
    }
  }
  const auto rep = write_summaries(a, dir, level, window);
  std::ostringstream lv;
  lv << level;
  Manifest m{"summarize", a.draws.seed, {{"level", lv.str()}, {"window", std::to_string(window)}},
             {archive_path}, rep.files};
  m.extra = {{"draws", a.draws.size()},
             {"correlation_undefined_draws", rep.correlation_undefined},
             {"importance_undefined_draws", rep.importance_undefined},
             {"importance_max_sum_error", rep.importance_max_sum_error},
             {"matches_skipped", rep.matches_skipped}};
  write_manifest((std::filesystem::path(dir) / "manifest.json").string(), m);
  log << "wrote " << rep.files.size() << " tables to " << dir << "\n";
  return kExitOk;
}

inline int run_validate(const std::string& input, const SpecFlags& flags, const std::string& report_path,
                        std::ostream& out) {
  ModelSpec spec;
  RunSettings run;
  std::vector<std::string> inputs{input};
  flags.resolve(spec, run, inputs);
  const Panel panel = load_panel(input, spec.categories);
  const auto report = check_panel(panel, spec);
  out << report.to_string();
  if (!report_path.empty()) {
    write_file(report_path, [&](std::ostream& o) { o << report.to_string(); });
    Manifest m{"validate", spec.mcmc.seed, effective_config(spec, run), inputs, {report_path}};
    m.extra = {{"violations", report.violations.size()}};
    write_manifest(report_path + ".manifest.json", m);
  }
  if (!report.ok()) throw ValidationFailed(std::to_string(report.violations.size()) + " violation(s) in '" + input + "'");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Entry point

inline int report_error(std::ostream& err, const char* kind, const std::string& what, int code) {
  err << "wellness-dlm: error [" << kind << "]: " << what << "\n";
  return code;
}

/// Parse `args` (without the program name) and run the chosen subcommand.
inline int dispatch(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Joint ordinal latent-factor distributed-lag model for wellness panels", "wellness-dlm"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string input, output, artifacts, truth, truth_out, archive, dir, report;
  int categories = 5, restarts = 1000, window = 3;
  long progress = 0;
  double level = 0.95;
  std::optional<std::uint64_t> sim_seed;
  SpecFlags fit_flags, validate_flags;

  auto* pre = app.add_subcommand("preprocess", "recode a raw survey CSV into a model panel CSV");
  pre->add_option("--input,-i", input, "raw CSV")->required();
  pre->add_option("--output,-o", output, "model panel CSV")->required();
  pre->add_option("--artifacts", artifacts, "artifact JSON (default: <output>.artifacts.json)");
  pre->add_option("--categories", categories, "ordinal categories K")->check(CLI::Range(2, 100));
  pre->add_option("--restarts", restarts, "k-means restarts")->check(CLI::Range(1, 100000));

  auto* sim = app.add_subcommand("simulate", "generate a synthetic panel from a truth configuration");
  sim->add_option("--truth", truth, "truth configuration JSON (default: standard benchmark)");
  sim->add_option("--seed", sim_seed, "override the truth seed");
  sim->add_option("--output,-o", output, "model panel CSV")->required();
  sim->add_option("--truth-out", truth_out, "hidden record JSON (default: <output>.truth.json)");

  auto* fit = app.add_subcommand("fit", "sample the posterior and write a model archive");
  fit->add_option("--input,-i", input, "model panel CSV")->required();
  fit->add_option("--output,-o", output, "model archive (JSON)")->required();
  fit->add_option("--artifacts", artifacts, "preprocessing artifact JSON to embed");
  fit->add_option("--progress", progress, "log progress every N sweeps to stderr");
  fit_flags.add_to(fit, true);

  auto* sum = app.add_subcommand("summarize", "write posterior summary tables from a model archive");
  sum->add_option("--archive,-a", archive, "model archive")->required();
  sum->add_option("--output-dir,-o", dir, "directory for the CSV tables")->required();
  sum->add_option("--level", level, "central credible interval level");
  sum->add_option("--window", window, "match-day window half-width (days)");

  auto* val = app.add_subcommand("validate", "check a model panel CSV against the model specification");
  val->add_option("--input,-i", input, "model panel CSV")->required();
  val->add_option("--report", report, "also write the report to this file");
  validate_flags.add_to(val, false);

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::Success& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return report_error(err, "usage", e.what(), kExitUsage);
  }

  try {
    if (pre->parsed()) return run_preprocess(input, output, artifacts, categories, restarts, err);
    if (sim->parsed()) return run_simulate(truth, sim_seed, output, truth_out, err);
    if (fit->parsed()) return run_fit(input, output, artifacts, fit_flags, progress, err);
    if (sum->parsed()) return run_summarize(archive, dir, level, window, err);
    if (val->parsed()) return run_validate(input, validate_flags, report, out);
  } catch (const IoError& e) {
    return report_error(err, "io", e.what(), kExitIo);
  } catch (const ParseError& e) {
    return report_error(err, "parse", e.what(), kExitParse);
  } catch (const ValidationFailed& e) {
    return report_error(err, "validation", e.what(), kExitValidation);
  } catch (const DegenerateInput& e) {
    return report_error(err, "validation", e.what(), kExitValidation);
  } catch (const InvariantViolation& e) {
    return report_error(err, "invariant", e.what(), kExitInvariant);
  } catch (const std::exception& e) {
    return report_error(err, "failure", e.what(), kExitFailure);
  }
  return report_error(err, "usage", "no subcommand", kExitUsage);
}

inline int dispatch(int argc, char** argv) {
  return dispatch(std::vector<std::string>(argv + 1, argv + argc));
}

}  // namespace wdlm
