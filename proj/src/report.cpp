#include <lqmix/report.hpp>

#include <lqmix/stats.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lqmix {

namespace {

using Json = nlohmann::json;

std::string display_name(std::string name) {
  std::replace(name.begin(), name.end(), ':', '.');
  return name;
}

std::string fixed4(double x) {
  if (std::isnan(x)) return "NaN";
  if (std::isinf(x)) return x > 0 ? "Inf" : "-Inf";
  std::string s = fmt::format("{:.4f}", x);
  if (s == "-0.0000") s = "0.0000";
  return s;
}

std::string pad_left(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

/// Rounded to 3 decimals with trailing zeros dropped.
std::string compact3(double x) {
  std::string s = fmt::format("{:.3f}", x);
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

/// Named vector laid out horizontally: all cells share one width.
std::string named_row(const std::vector<std::string>& names, const std::vector<double>& values) {
  std::vector<std::string> cells;
  std::size_t w = 0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    cells.push_back(fixed4(values[k]));
    w = std::max({w, cells.back().size(), names[k].size()});
  }
  std::string top, bottom;
  for (std::size_t k = 0; k < values.size(); ++k) {
    top += pad_left(names[k], w) + " ";
    bottom += pad_left(cells[k], w) + " ";
  }
  return top + "\n" + bottom + "\n";
}

/// Row-labelled table; columns right-aligned, row labels left-aligned.
std::string table(const std::vector<std::string>& header, const std::vector<std::string>& row_names,
                  const std::vector<std::vector<std::string>>& rows,
                  const std::vector<bool>& left_align = {}) {
  std::size_t label_w = 0;
  for (const auto& r : row_names) label_w = std::max(label_w, r.size());
  std::vector<std::size_t> w(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    w[c] = header[c].size();
    for (const auto& row : rows) w[c] = std::max(w[c], row[c].size());
  }
  auto left = [&](std::size_t c) { return c < left_align.size() && left_align[c]; };
  std::string out = std::string(label_w, ' ');
  for (std::size_t c = 0; c < header.size(); ++c)
    out += " " + (left(c) ? pad_right(header[c], w[c]) : pad_left(header[c], w[c]));
  out += "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += pad_right(row_names[r], label_w);
    for (std::size_t c = 0; c < header.size(); ++c)
      out += " " + (left(c) ? pad_right(rows[r][c], w[c]) : pad_left(rows[r][c], w[c]));
    out += "\n";
  }
  return out;
}

std::string stars(double p) {
  if (std::isnan(p)) return "";
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  if (p < 0.1) return ".";
  return "";
}

std::string format_p(double p) {
  if (std::isnan(p)) return "NA";
  if (p < 2e-16) return "<2e-16";
  if (p < 1e-4) return fmt::format("{:.1e}", p);
  return fmt::format("{:.4f}", p);
}

struct Coefficient {
  std::string name;
  double estimate;
  double se;
};

std::string inference_table(const std::vector<Coefficient>& coefs) {
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : coefs) {
    const double z = c.estimate / c.se;
    const double p = std::isnan(z) ? std::nan("") : normal_two_sided_p(z);
    names.push_back(c.name);
    rows.push_back({fixed4(c.estimate), fixed4(c.se), fixed4(z), format_p(p), stars(p)});
  }
  return table({"Estimate", "St.Error", "z.value", "P(>|z|)", "   "}, names, rows,
               {false, false, false, false, true});
}

std::string probability_table(const std::vector<std::string>& names, const std::vector<double>& est,
                              const std::vector<double>& se) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t k = 0; k < est.size(); ++k) rows.push_back({fixed4(est[k]), fixed4(se[k])});
  return table({"Estimate", "St.Err"}, names, rows);
}

std::vector<std::string> labels(const std::string& stem, Index count) {
  std::vector<std::string> out;
  for (Index k = 1; k <= count; ++k) out.push_back(stem + std::to_string(k));
  return out;
}

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

/// Coefficient block laid out as a matrix: rows are components or states.
std::string coefficient_matrix(const MatrixXd& beta, const std::vector<std::string>& cols,
                               const std::string& stem) {
  std::vector<std::vector<std::string>> rows;
  for (Index g = 0; g < beta.rows(); ++g) {
    rows.emplace_back();
    for (Index c = 0; c < beta.cols(); ++c) rows.back().push_back(fixed4(beta(g, c)));
  }
  std::vector<std::string> header;
  for (const auto& c : cols) header.push_back(display_name(c));
  return table(header, labels(stem, beta.rows()), rows);
}

std::vector<Coefficient> coefficient_list(const MatrixXd& beta, const MatrixXd& se,
                                          const std::vector<std::string>& cols, const std::string& stem) {
  std::vector<Coefficient> out;
  for (Index c = 0; c < beta.cols(); ++c)
    for (Index g = 0; g < beta.rows(); ++g)
      out.push_back({display_name(cols[static_cast<std::size_t>(c)]) + "_" + stem + std::to_string(g + 1),
                     beta(g, c), se(g, c)});
  return out;
}

}  // namespace

std::string model_title(const FitResult& fit) {
  const std::string q = fmt::format("{}", fit.q);
  switch (fit.variant) {
    case Variant::homogeneous:
      return "Model: Homogeneous linear quantile regression at qtl=" + q;
    case Variant::tc:
      return fmt::format("Model: TC random coefficients with G={} at qtl={}", fit.G, q);
    case Variant::tv:
      return fmt::format("Model: TV random coefficients with m={} at qtl={}", fit.m, q);
    case Variant::tctv:
      return fmt::format("Model: TC and TV random coefficients with m={} and G={} at qtl={}", fit.m,
                         fit.G, q);
  }
  return "Model:";
}

std::string format_summary(const FitResult& fit, bool with_se) {
  if (with_se && !fit.se) throw SpecificationError("summary with standard errors requires se");
  const MixtureParams& est = fit.params;
  std::ostringstream os;
  const std::string title = model_title(fit);
  os << title << "\n" << std::string(title.size() + 5, '*') << " \n\n";
  os << "---- Observed process ----\n\n";

  // The homogeneous fit reports every coefficient as fixed.
  std::vector<std::string> fixed_names = fit.fixed_names;
  VectorXd betaf = est.betaf;
  VectorXd betaf_se = with_se ? fit.se->betaf : VectorXd();
  const bool homogeneous = fit.variant == Variant::homogeneous;
  if (homogeneous) {
    fixed_names.insert(fixed_names.end(), fit.tc_names.begin(), fit.tc_names.end());
    fixed_names.insert(fixed_names.end(), fit.tv_names.begin(), fit.tv_names.end());
    auto stack = [&](const MixtureParams& p) {
      VectorXd out(p.p() + p.r() + p.l());
      out << p.betaf, p.betarTC.row(0).transpose(), p.betarTV.row(0).transpose();
      return out;
    };
    betaf = stack(est);
    if (with_se) betaf_se = stack(*fit.se);
  }

  bool any_inference = false;
  if (betaf.size() > 0) {
    os << "Fixed Coefficients:\n";
    if (with_se) {
      std::vector<Coefficient> coefs;
      for (Index j = 0; j < betaf.size(); ++j)
        coefs.push_back({display_name(fixed_names[static_cast<std::size_t>(j)]), betaf(j), betaf_se(j)});
      os << inference_table(coefs);
      any_inference = true;
    } else {
      std::vector<std::string> names;
      for (const auto& n : fixed_names) names.push_back(display_name(n));
      os << named_row(names, to_std(betaf));
    }
    os << "\n";
  }
  if (!homogeneous && est.r() > 0) {
    os << "Time-Constant Random Coefficients:\n";
    os << (with_se ? inference_table(coefficient_list(est.betarTC, fit.se->betarTC, fit.tc_names, "Comp"))
                   : coefficient_matrix(est.betarTC, fit.tc_names, "Comp"));
    any_inference = any_inference || with_se;
    os << "\n";
  }
  if (!homogeneous && est.l() > 0) {
    os << "Time-Varying Random Coefficients:\n";
    os << (with_se ? inference_table(coefficient_list(est.betarTV, fit.se->betarTV, fit.tv_names, "St"))
                   : coefficient_matrix(est.betarTV, fit.tv_names, "St"));
    any_inference = any_inference || with_se;
    os << "\n";
  }
  if (any_inference) {
    // Replace the blank line after the last block with the legend.
    std::string text = os.str();
    text.pop_back();
    os.str(text);
    os.seekp(0, std::ios_base::end);
    os << "---\nSignif. codes:  0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1\n\n";
  }
  os << "Residual scale parameter: " << fixed4(est.scale)
     << " - Residual standard deviation: " << fixed4(fit.sigma_e) << " \n\n";

  const bool has_mixture = fit.variant == Variant::tc || fit.variant == Variant::tctv;
  const bool has_chain = fit.variant == Variant::tv || fit.variant == Variant::tctv;
  if (has_mixture || has_chain) {
    os << "---- Latent process ----\n\n";
    if (has_mixture) {
      os << "Mixture probabilities:\n";
      os << (with_se ? probability_table(labels("Comp", est.G()), to_std(est.pg), to_std(fit.se->pg))
                     : named_row(labels("Comp", est.G()), to_std(est.pg)));
      os << "\n";
    }
    if (has_chain) {
      os << "Initial probabilities:\n";
      os << (with_se ? probability_table(labels("St", est.m()), to_std(est.delta), to_std(fit.se->delta))
                     : named_row(labels("St", est.m()), to_std(est.delta)));
      os << "\n";
      os << "Transition probabilities:\n";
      if (with_se) {
        std::vector<std::string> names;
        std::vector<double> e, s;
        for (Index h = 0; h < est.m(); ++h)
          for (Index k = 0; k < est.m(); ++k) {
            names.push_back(fmt::format("fromSt{}toSt{}", h + 1, k + 1));
            e.push_back(est.Gamma(h, k));
            s.push_back(fit.se->Gamma(h, k));
          }
        os << probability_table(names, e, s);
      } else {
        std::vector<std::vector<std::string>> rows;
        for (Index h = 0; h < est.m(); ++h) {
          rows.emplace_back();
          for (Index k = 0; k < est.m(); ++k) rows.back().push_back(fixed4(est.Gamma(h, k)));
        }
        os << table(labels("toSt", est.m()), labels("fromSt", est.m()), rows);
      }
      os << "\n";
    }
  }
  os << "Log-likelihood at convergence: " << compact3(fit.loglik) << "\n";
  os << "Number of observations: " << fit.N << " - Number of subjects: " << fit.n << "\n";
  return os.str();
}

std::string format_search_summary(const SearchResult& result, bool with_se) {
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> rows;
  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    const auto& cell = result.cells[c];
    names.push_back(fmt::format("G={} m={}", cell.G, cell.m));
    if (cell.fit && !cell.failed) {
      rows.push_back({to_string(cell.variant), compact3(cell.fit->loglik), std::to_string(cell.fit->npar),
                      compact3(cell.fit->aic), compact3(cell.fit->bic), c == result.best ? "*" : ""});
    } else {
      rows.push_back({to_string(cell.variant), "NA", "NA", "NA", "NA", "failed"});
    }
  }
  std::ostringstream os;
  os << "Model selection by " << to_string(result.method) << ":\n";
  os << table({"model", "lk", "npar", "aic", "bic", ""}, names, rows,
              {true, false, false, false, false, true});
  os << "\n" << format_summary(result.best_fit(), with_se && result.best_fit().se.has_value());
  return os.str();
}

namespace {

Json matrix_json(const MatrixXd& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_json(const VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

MatrixXd matrix_from(const Json& doc, const char* key, Index cols_if_empty) {
  const Json& rows = doc.at(key);
  const auto R = static_cast<Index>(rows.size());
  const Index C = R > 0 ? static_cast<Index>(rows[0].size()) : cols_if_empty;
  MatrixXd out(R, C);
  for (Index i = 0; i < R; ++i) {
    if (static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) != C)
      throw ParseError(fmt::format("'{}' is not a rectangular matrix", key));
    for (Index j = 0; j < C; ++j) out(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
  }
  return out;
}

VectorXd vector_from(const Json& doc, const char* key) {
  const auto values = doc.at(key).get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(values.data(), static_cast<Index>(values.size()));
}

}  // namespace

Json params_to_json(const MixtureParams& params) {
  return Json{{"betaf", vector_json(params.betaf)},   {"betarTC", matrix_json(params.betarTC)},
              {"betarTV", matrix_json(params.betarTV)}, {"pg", vector_json(params.pg)},
              {"delta", vector_json(params.delta)},   {"Gamma", matrix_json(params.Gamma)},
              {"scale", params.scale}};
}

MixtureParams params_from_json(const Json& doc) {
  try {
    MixtureParams p;
    p.betaf = vector_from(doc, "betaf");
    p.betarTC = matrix_from(doc, "betarTC", 0);
    p.betarTV = matrix_from(doc, "betarTV", 0);
    p.pg = vector_from(doc, "pg");
    p.delta = vector_from(doc, "delta");
    p.Gamma = matrix_from(doc, "Gamma", 0);
    p.scale = doc.at("scale").get<double>();
    // Empty coefficient blocks still carry one row per component / state.
    if (p.betarTC.rows() == 0) p.betarTC.resize(p.pg.size(), 0);
    if (p.betarTV.rows() == 0) p.betarTV.resize(p.delta.size(), 0);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed parameter document: ") + e.what());
  }
}

Json to_json(const FitResult& fit, const Json& call) {
  Json doc{{"model", to_string(fit.variant)},
           {"qtl", fit.q},
           {"G", fit.G},
           {"m", fit.m},
           {"eps", fit.eps},
           {"params", params_to_json(fit.params)},
           {"sigma_e", fit.sigma_e},
           {"lk", fit.loglik},
           {"npar", fit.npar},
           {"aic", fit.aic},
           {"bic", fit.bic},
           {"iterations", fit.iterations},
           {"converged", fit.converged},
           {"miss", to_string(fit.miss)},
           {"nsbjs", fit.n},
           {"nobs", fit.N},
           {"names", {{"fixed", fit.fixed_names}, {"tc", fit.tc_names}, {"tv", fit.tv_names}}},
           {"diagnostics", fit.diagnostics},
           {"call", call}};
  if (fit.se) {
    doc["se"] = params_to_json(*fit.se);
    doc["se_failures"] = fit.se_failures;
  } else {
    doc["se"] = nullptr;
  }
  return doc;
}

FitResult fit_from_json(const Json& doc) {
  try {
    FitResult fit;
    fit.variant = variant_from_string(doc.at("model").get<std::string>());
    fit.q = doc.at("qtl").get<double>();
    fit.G = doc.at("G").get<Index>();
    fit.m = doc.at("m").get<Index>();
    fit.eps = doc.at("eps").get<double>();
    fit.params = params_from_json(doc.at("params"));
    fit.sigma_e = doc.at("sigma_e").get<double>();
    fit.loglik = doc.at("lk").get<double>();
    fit.npar = doc.at("npar").get<Index>();
    fit.aic = doc.at("aic").get<double>();
    fit.bic = doc.at("bic").get<double>();
    fit.iterations = doc.at("iterations").get<int>();
    fit.converged = doc.at("converged").get<bool>();
    const auto miss = doc.at("miss").get<std::string>();
    fit.miss = miss == "none" ? MissingPattern::none
               : miss == "monotone" ? MissingPattern::monotone
                                    : MissingPattern::non_monotone;
    fit.n = doc.at("nsbjs").get<Index>();
    fit.N = doc.at("nobs").get<Index>();
    fit.fixed_names = doc.at("names").at("fixed").get<std::vector<std::string>>();
    fit.tc_names = doc.at("names").at("tc").get<std::vector<std::string>>();
    fit.tv_names = doc.at("names").at("tv").get<std::vector<std::string>>();
    fit.diagnostics = doc.value("diagnostics", std::vector<std::string>{});
    if (doc.contains("se") && !doc.at("se").is_null()) {
      fit.se = params_from_json(doc.at("se"));
      fit.se_failures = doc.value("se_failures", 0);
    }
    return fit;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed result document: ") + e.what());
  }
}

std::string posterior_csv(const FitResult& fit, const PanelDataset& data) {
  const auto& units = fit.posteriors.units;
  if (units.size() != data.units.size())
    throw SpecificationError("posteriors and dataset disagree on the number of units");
  const Index G = fit.params.G(), m = fit.params.m();
  std::string out = "unit,time,observed";
  for (Index g = 1; g <= G; ++g) out += fmt::format(",u_Comp{}", g);
  for (Index h = 1; h <= m; ++h) out += fmt::format(",v_St{}", h);
  out += "\n";
  for (std::size_t i = 0; i < units.size(); ++i) {
    const UnitPosterior& up = units[i];
    const UnitRecord& rec = data.units[i];
    const int first = rec.times.front();
    for (Index s = 0; s < up.v.rows(); ++s) {
      const bool observed = std::find(up.obs.begin(), up.obs.end(), static_cast<int>(s)) != up.obs.end();
      out += fmt::format("{},{},{}", rec.unit_id, data.time_grid[static_cast<std::size_t>(first + s)],
                         observed ? 1 : 0);
      for (Index g = 0; g < G; ++g) out += fmt::format(",{}", up.u(g));
      for (Index h = 0; h < m; ++h) {
        double mass = 0.0;
        for (Index g = 0; g < G; ++g) mass += up.v(s, g * m + h);
        out += fmt::format(",{}", mass);
      }
      out += "\n";
    }
  }
  return out;
}

std::string criterion_csv(const SearchResult& result) {
  std::string out = "G,m,model,lk,npar,aic,bic,converged,status,selected\n";
  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    const auto& cell = result.cells[c];
    if (cell.fit) {
      const auto& f = *cell.fit;
      out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", cell.G, cell.m, to_string(cell.variant), f.loglik,
                         f.npar, f.aic, f.bic, f.converged ? 1 : 0, cell.failed ? "failed" : "ok",
                         c == result.best ? 1 : 0);
    } else {
      out += fmt::format("{},{},{},NA,NA,NA,NA,0,failed,0\n", cell.G, cell.m, to_string(cell.variant));
    }
  }
  return out;
}

}  // namespace lqmix
