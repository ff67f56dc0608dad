// Command-line front end: fit, search, lqr and simulate.

#include <lqmix/bootstrap.hpp>
#include <lqmix/em.hpp>
#include <lqmix/report.hpp>
#include <lqmix/search.hpp>
#include <lqmix/simulate.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace lqmix;

namespace {

enum Exit : int { ok = 0, internal = 1, usage = 2, data_error = 3, model_error = 4, estimation = 5, io = 6 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int exit_code(const Error& e) {
  const std::string c = e.category();
  if (c == "parse" || c == "structure" || c == "type") return data_error;
  if (c == "specification" || c == "name" || c == "domain" || c == "plan" || c == "validation")
    return model_error;
  return estimation;
}

struct DataOptions {
  std::string path;
  std::string response = "y";
  std::string group = "id";
  std::string time = "time";
  std::vector<std::string> fixed, random_tc, random_tv;
  bool no_intercept = false;
};

struct ControlOptions {
  double qtl = 0.5;
  double eps = 1e-5;
  int maxit = 1000;
  bool se = true;
  int R = 50;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
  int workers = 1;
  bool bic_obs = false;
};

void add_data_options(CLI::App* cmd, DataOptions& d) {
  cmd->add_option("--data", d.path, "Long-format CSV file")->required();
  cmd->add_option("--response", d.response, "Response column")->capture_default_str();
  cmd->add_option("--group", d.group, "Unit identifier column")->capture_default_str();
  cmd->add_option("--time", d.time, "Occasion column")->capture_default_str();
  cmd->add_option("--fixed", d.fixed, "Fixed-coefficient columns (a:b for products)")->delimiter(',');
  cmd->add_option("--random-tc", d.random_tc, "Time-constant random columns (intercept allowed)")
      ->delimiter(',');
  cmd->add_option("--random-tv", d.random_tv, "Time-varying random columns (intercept allowed)")
      ->delimiter(',');
  cmd->add_flag("--no-intercept", d.no_intercept, "Drop the fixed intercept");
}

void add_control_options(CLI::App* cmd, ControlOptions& c, bool em) {
  cmd->add_option("--qtl", c.qtl, "Quantile level")->capture_default_str();
  if (em) {
    cmd->add_option("--eps", c.eps, "Relative log-likelihood tolerance")->capture_default_str();
    cmd->add_option("--maxit", c.maxit, "Maximum EM iterations")->capture_default_str();
    cmd->add_flag("--bic-observations", c.bic_obs, "BIC penalty uses log(N) rather than log(n)");
  }
  cmd->add_option("--se", c.se, "Bootstrap standard errors (true/false)")->capture_default_str();
  cmd->add_option("--R", c.R, "Bootstrap replicates")->capture_default_str();
  cmd->add_option("--seed", c.seed, "Master seed");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_flag("--quiet", c.quiet, "Suppress trace and summary on stdout");
  cmd->add_option("--workers", c.workers, "Worker threads")->capture_default_str();
}

std::vector<std::string> unique_covariates(const DataOptions& d) {
  std::vector<std::string> out;
  for (const auto* list : {&d.fixed, &d.random_tc, &d.random_tv})
    for (const auto& name : *list)
      if (!is_intercept_token(name) && std::find(out.begin(), out.end(), name) == out.end())
        out.push_back(name);
  return out;
}

std::pair<PanelDataset, DesignSet> load(const DataOptions& d) {
  ColumnSpec cols{d.group, d.time, d.response, unique_covariates(d)};
  if (!fs::is_regular_file(d.path)) throw IoError("cannot read " + d.path);
  PanelDataset data = load_csv(d.path, cols);
  DesignRoles roles{d.fixed, d.random_tc, d.random_tv, !d.no_intercept};
  DesignSet design = build_design(data, roles);
  return {std::move(data), std::move(design)};
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

fs::path prepare_out(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
  return dir;
}

nlohmann::json call_echo(int argc, char** argv) {
  nlohmann::json call = nlohmann::json::array();
  for (int i = 1; i < argc; ++i) call.push_back(argv[i]);
  return call;
}

std::uint64_t resolve_seed(const ControlOptions& c) {
  return c.seed ? *c.seed : static_cast<std::uint64_t>(std::random_device{}());
}

void emit_fit(const FitResult& result, const PanelDataset& data, const ControlOptions& c,
              const nlohmann::json& call) {
  const std::string summary = format_summary(result, result.se.has_value());
  if (!c.quiet) std::cout << "\n" << summary;
  if (!c.out.empty()) {
    const fs::path dir = prepare_out(c.out);
    write_file(dir / "summary.txt", summary);
    write_file(dir / "result.json", to_json(result, call).dump(2) + "\n");
    write_file(dir / "posteriors.csv", posterior_csv(result, data));
  }
}

int run_fit(const DataOptions& d, const ControlOptions& c, std::optional<Index> G,
            std::optional<Index> m, int start, const std::string& par_init, const nlohmann::json& call,
            bool homogeneous_only) {
  auto [data, design] = load(d);
  ModelSpec spec;
  spec.q = QuantileLevel(c.qtl);
  spec.G = G.value_or(1);
  spec.m = m.value_or(1);
  spec.eps = c.eps;
  spec.maxit = c.maxit;
  spec.bic_uses_observations = c.bic_obs;
  if (homogeneous_only) {
    spec.variant = Variant::homogeneous;
  } else if (G && m) {
    spec.variant = Variant::tctv;
  } else if (G && design.r() > 0) {
    spec.variant = Variant::tc;
  } else if (m && design.l() > 0) {
    spec.variant = Variant::tv;
  } else {
    spec.variant = variant_for(spec.G, spec.m);
  }
  if (spec.variant != Variant::homogeneous) {
    if ((spec.variant == Variant::tc || spec.variant == Variant::tctv) && design.r() == 0)
      throw SpecificationError("--G needs at least one --random-tc column");
    if ((spec.variant == Variant::tv || spec.variant == Variant::tctv) && design.l() == 0)
      throw SpecificationError("--m needs at least one --random-tv column");
  }
  if (start < 0 || start > 2) throw UsageError("--start must be 0, 1 or 2");
  spec.start = static_cast<StartRule>(start);
  const std::uint64_t seed = resolve_seed(c);
  spec.seed = seed;

  std::optional<MixtureParams> supplied;
  if (spec.start == StartRule::supplied) {
    if (par_init.empty()) throw UsageError("--start 2 requires --par-init");
    std::ifstream f(par_init);
    if (!f) throw IoError("cannot read " + par_init);
    try {
      supplied = params_from_json(nlohmann::json::parse(f));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid --par-init document: ") + e.what());
    }
  } else if (!par_init.empty()) {
    throw UsageError("--par-init is only used with --start 2");
  }

  FitOptions options;
  if (!c.quiet) options.trace = &std::cout;
  FitResult result = fit(design, spec, supplied ? &*supplied : nullptr, options);
  if (!result.converged)
    std::cerr << "warning: EM stopped at maxit = " << spec.maxit << " without converging\n";
  if (c.se) {
    BootstrapConfig config;
    config.R = c.R;
    config.seed = seed;
    config.workers = c.workers;
    if (!c.quiet) config.progress = &std::cout;
    auto boot = bootstrap_se(result, design, spec, config);
    result.se = boot.se;
    result.se_failures = boot.failures;
    if (boot.failures > 0)
      std::cerr << "warning: " << boot.failures << " of " << c.R << " bootstrap replicates failed\n";
  }
  emit_fit(result, data, c, call);
  return ok;
}

int run_search(const DataOptions& d, const ControlOptions& c, const std::vector<Index>& Gv,
               const std::vector<Index>& mv, const std::string& method, int nran) {
  auto [data, design] = load(d);
  SearchPlan plan;
  if (!Gv.empty()) plan.Gv = Gv;
  if (!mv.empty()) plan.mv = mv;
  plan.method = criterion_from_string(method);
  plan.nran = nran;
  plan.q = QuantileLevel(c.qtl);
  plan.eps = c.eps;
  plan.maxit = c.maxit;
  plan.se_for_best = c.se;
  plan.R = c.R;
  plan.seed = resolve_seed(c);
  plan.workers = c.workers;
  plan.bic_uses_observations = c.bic_obs;
  if (plan.Gv && design.r() == 0 &&
      std::any_of(plan.Gv->begin(), plan.Gv->end(), [](Index g) { return g > 1; }))
    throw SpecificationError("--Gv values above 1 need at least one --random-tc column");
  if (plan.mv && design.l() == 0 &&
      std::any_of(plan.mv->begin(), plan.mv->end(), [](Index h) { return h > 1; }))
    throw SpecificationError("--mv values above 1 need at least one --random-tv column");

  const SearchResult result = search(design, plan, c.quiet ? nullptr : &std::cout);
  const std::string summary = format_search_summary(result, c.se);
  if (!c.quiet) std::cout << "\n" << summary;
  if (!c.out.empty()) {
    const fs::path dir = prepare_out(c.out);
    write_file(dir / "criteria.csv", criterion_csv(result));
    write_file(dir / "summary.txt", summary);
    write_file(dir / "result.json", to_json(result.best_fit()).dump(2) + "\n");
    write_file(dir / "posteriors.csv", posterior_csv(result.best_fit(), data));
  }
  return ok;
}

struct SimulateOptions {
  std::string params;
  Index n = 100;
  Index T = 5;
  std::vector<std::string> covariates;
  std::vector<std::string> fixed, random_tc, random_tv;
  bool no_intercept = false;
  double qtl = 0.5;
  std::string error_law = "ald";
  std::optional<double> error_scale;
  double df = 3.0;
  double dropout = 0.0;
  double gap = 0.0;
  std::uint64_t seed = 1;
  std::string out;
  std::string truth;
};

int run_simulate(const SimulateOptions& s) {
  GeneratorSpec gen;
  std::ifstream f(s.params);
  if (!f) throw IoError("cannot read " + s.params);
  try {
    gen.true_params = params_from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid --params document: ") + e.what());
  }
  const Index G = gen.true_params.G(), m = gen.true_params.m();
  gen.variant = variant_for(G, m);
  if (gen.variant == Variant::homogeneous && (gen.true_params.r() > 0 || gen.true_params.l() > 0))
    gen.variant = gen.true_params.r() > 0 ? Variant::tc : Variant::tv;
  gen.q = QuantileLevel(s.qtl);
  gen.n = s.n;
  gen.T = s.T;
  for (const auto& item : s.covariates) {
    const auto eq = item.find('=');
    const std::string name = item.substr(0, eq);
    const std::string law = eq == std::string::npos ? "uniform" : item.substr(eq + 1);
    CovariateSpec cov{name, CovariateLaw::uniform};
    if (law == "uniform") cov.law = CovariateLaw::uniform;
    else if (law == "normal") cov.law = CovariateLaw::normal;
    else if (law == "binary") cov.law = CovariateLaw::binary_unit;
    else if (law == "time") cov.law = CovariateLaw::time;
    else throw UsageError("unknown covariate law '" + law + "' (uniform, normal, binary, time)");
    gen.covariates.push_back(cov);
  }
  gen.roles = DesignRoles{s.fixed, s.random_tc, s.random_tv, !s.no_intercept};
  if (s.error_law == "ald") gen.error_law = ErrorLaw::ald;
  else if (s.error_law == "gaussian") gen.error_law = ErrorLaw::gaussian;
  else if (s.error_law == "chi-square") gen.error_law = ErrorLaw::chi_square;
  else throw UsageError("unknown error law '" + s.error_law + "' (ald, gaussian, chi-square)");
  gen.error_scale = s.error_scale.value_or(gen.true_params.scale);
  gen.chi_square_df = s.df;
  gen.dropout_hazard = s.dropout;
  gen.gap_probability = s.gap;
  gen.seed = s.seed;

  const auto [data, truth] = simulate(gen);
  if (s.out.empty()) {
    std::cout << to_csv(data);
  } else {
    write_file(s.out, to_csv(data));
  }
  if (!s.truth.empty()) {
    std::string text = "id,time,component,state,location\n";
    for (std::size_t i = 0; i < truth.component.size(); ++i)
      for (std::size_t t = 0; t < truth.states[i].size(); ++t)
        text += fmt::format("{},{},{},{},{}\n", i + 1, t + 1, truth.component[i] + 1, truth.states[i][t] + 1,
                            truth.location[i](static_cast<Index>(t)));
    write_file(s.truth, text);
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear quantile mixtures for longitudinal data"};
  app.require_subcommand(1);

  DataOptions data;
  ControlOptions control;
  const auto call = call_echo(argc, argv);

  auto* fit_cmd = app.add_subcommand("fit", "Fit a TC, TV or TCTV quantile mixture");
  add_data_options(fit_cmd, data);
  add_control_options(fit_cmd, control, true);
  std::optional<Index> G, m;
  int start = 0;
  std::string par_init;
  std::vector<Index> fit_Gv, fit_mv;
  auto* optG = fit_cmd->add_option("--G", G, "Mixture components");
  auto* optm = fit_cmd->add_option("--m", m, "Hidden states");
  fit_cmd->add_option("--start", start, "0 deterministic, 1 random, 2 supplied")->capture_default_str();
  fit_cmd->add_option("--par-init", par_init, "JSON starting values for --start 2");
  fit_cmd->add_option("--Gv", fit_Gv, "Search grid (search subcommand only)")->delimiter(',')->excludes(optG);
  fit_cmd->add_option("--mv", fit_mv, "Search grid (search subcommand only)")->delimiter(',')->excludes(optm);

  auto* search_cmd = app.add_subcommand("search", "Select G and m by AIC, BIC or log-likelihood");
  DataOptions sdata;
  ControlOptions scontrol;
  add_data_options(search_cmd, sdata);
  add_control_options(search_cmd, scontrol, true);
  std::vector<Index> Gv, mv;
  std::string method = "bic";
  int nran = 0;
  std::optional<Index> sG, sm;
  auto* optGv = search_cmd->add_option("--Gv", Gv, "Component counts, e.g. 1,2,3")->delimiter(',');
  auto* optmv = search_cmd->add_option("--mv", mv, "State counts, e.g. 1,2,3")->delimiter(',');
  search_cmd->add_option("--G", sG, "Single-model option (fit subcommand only)")->excludes(optGv);
  search_cmd->add_option("--m", sm, "Single-model option (fit subcommand only)")->excludes(optmv);
  search_cmd->add_option("--method", method, "bic, aic or lk")->capture_default_str();
  search_cmd->add_option("--nran", nran, "Random starts per extra component/state")->capture_default_str();

  auto* lqr_cmd = app.add_subcommand("lqr", "Homogeneous linear quantile regression");
  DataOptions ldata;
  ControlOptions lcontrol;
  add_data_options(lqr_cmd, ldata);
  add_control_options(lqr_cmd, lcontrol, false);

  auto* sim_cmd = app.add_subcommand("simulate", "Draw a panel from a quantile mixture");
  SimulateOptions sim;
  sim_cmd->add_option("--params", sim.params, "JSON parameter document")->required();
  sim_cmd->add_option("--n", sim.n, "Units")->capture_default_str();
  sim_cmd->add_option("--T", sim.T, "Occasions")->capture_default_str();
  sim_cmd->add_option("--covariates", sim.covariates, "name=law list (uniform, normal, binary, time)")
      ->delimiter(',');
  sim_cmd->add_option("--fixed", sim.fixed)->delimiter(',');
  sim_cmd->add_option("--random-tc", sim.random_tc)->delimiter(',');
  sim_cmd->add_option("--random-tv", sim.random_tv)->delimiter(',');
  sim_cmd->add_flag("--no-intercept", sim.no_intercept);
  sim_cmd->add_option("--qtl", sim.qtl)->capture_default_str();
  sim_cmd->add_option("--error-law", sim.error_law, "ald, gaussian or chi-square")->capture_default_str();
  sim_cmd->add_option("--error-scale", sim.error_scale, "Error scale (default: the document's scale)");
  sim_cmd->add_option("--df", sim.df, "Chi-square degrees of freedom")->capture_default_str();
  sim_cmd->add_option("--dropout", sim.dropout, "Per-occasion dropout hazard")->capture_default_str();
  sim_cmd->add_option("--gap", sim.gap, "Per-occasion gap probability")->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed)->capture_default_str();
  sim_cmd->add_option("--out", sim.out, "CSV path (stdout when absent)");
  sim_cmd->add_option("--truth", sim.truth, "CSV path for the latent draws");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage;
  }

  try {
    if (*fit_cmd) {
      if (!fit_Gv.empty() || !fit_mv.empty()) throw UsageError("--Gv/--mv belong to the search subcommand");
      return run_fit(data, control, G, m, start, par_init, call, false);
    }
    if (*search_cmd) {
      if (sG || sm) throw UsageError("--G/--m belong to the fit subcommand; use --Gv/--mv");
      return run_search(sdata, scontrol, Gv, mv, method, nran);
    }
    if (*lqr_cmd) {
      lcontrol.bic_obs = false;
      return run_fit(ldata, lcontrol, std::nullopt, std::nullopt, 0, "", call, true);
    }
    if (*sim_cmd) return run_simulate(sim);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return usage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return io;
  } catch (const Error& e) {
    std::cerr << e.category() << " error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return internal;
  }
  return internal;
}
