#pragma once

// Human-readable summaries and machine-readable exports of fitted models.

#include <lqmix/model.hpp>
#include <lqmix/panel.hpp>
#include <lqmix/search.hpp>

#include <json.hpp>

#include <string>

namespace lqmix {

/// Print layout (with_se = false) or summary layout with St.Error, z.value,
/// P(>|z|) and significance stars. with_se requires fit.se.
std::string format_summary(const FitResult& fit, bool with_se);

/// Header line of the summary, e.g. "Model: TC random coefficients with G=2 at qtl=0.5".
std::string model_title(const FitResult& fit);

/// Table of the search grid followed by the summary of the selected model.
std::string format_search_summary(const SearchResult& result, bool with_se);

nlohmann::json params_to_json(const MixtureParams& params);
MixtureParams params_from_json(const nlohmann::json& doc);

/// Everything the summary needs plus npar, aic, bic, miss, model tag and the
/// call echo. Posteriors and the trace are not included.
nlohmann::json to_json(const FitResult& fit, const nlohmann::json& call = nlohmann::json::object());
FitResult fit_from_json(const nlohmann::json& doc);

/// One row per unit and occasion of the unit's span: component posteriors
/// u_Comp* and state posteriors v_St* (marginal over components).
std::string posterior_csv(const FitResult& fit, const PanelDataset& data);

/// G,m,model,lk,npar,aic,bic,converged,status,selected
std::string criterion_csv(const SearchResult& result);

}  // namespace lqmix
