#pragma once

// Long-format longitudinal data: ingestion, missingness classification and
// per-unit design matrices for the fixed / time-constant / time-varying roles.

#include <lqmix/types.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace lqmix {

/// Token naming the intercept column in role lists ("1" is accepted too).
inline constexpr const char* kIntercept = "intercept";

bool is_intercept_token(const std::string& name);

struct UnitRecord {
  std::string unit_id;
  std::vector<int> times;  // indices into PanelDataset::time_grid, strictly increasing
  VectorXd y;
  MatrixXd covariates;     // rows aligned with times, columns per PanelDataset::covariate_names

  Index size() const { return y.size(); }
};

struct PanelDataset {
  std::vector<UnitRecord> units;
  std::vector<double> time_grid;  // distinct time values, ascending
  std::vector<std::string> covariate_names;

  Index n() const { return static_cast<Index>(units.size()); }
  Index N() const;

  /// Throws StructuralError when an invariant is broken.
  void validate() const;
};

/// Column-role mapping for CSV ingestion. Covariate names of the form "a:b"
/// are materialized as the elementwise product of columns a and b.
struct ColumnSpec {
  std::string unit;
  std::string time;
  std::string response;
  std::vector<std::string> covariates;
};

PanelDataset load_csv(const std::filesystem::path& path, const ColumnSpec& colspec);
PanelDataset parse_csv(const std::string& text, const ColumnSpec& colspec);

/// Writes columns unit,time,response,covariates... (interaction columns
/// included as plain columns). The output reloads to an identical dataset.
void write_csv(const PanelDataset& data, const std::filesystem::path& path,
               const std::string& unit = "id", const std::string& time = "time",
               const std::string& response = "y");
std::string to_csv(const PanelDataset& data, const std::string& unit = "id",
                   const std::string& time = "time", const std::string& response = "y");

enum class MissingPattern { none, monotone, non_monotone };

const char* to_string(MissingPattern kind);
MissingPattern classify_missingness(const PanelDataset& data);

/// Variable roles. The intercept is placed in the random role that requests
/// it, else in the fixed part when fixed_intercept is set.
struct DesignRoles {
  std::vector<std::string> fixed;
  std::vector<std::string> random_tc;
  std::vector<std::string> random_tv;
  bool fixed_intercept = true;
};

struct UnitDesign {
  VectorXd y;
  std::vector<int> times;
  MatrixXd X;  // T_i x p
  MatrixXd Z;  // T_i x r
  MatrixXd W;  // T_i x l

  Index size() const { return y.size(); }
  int span() const { return times.empty() ? 0 : times.back() - times.front() + 1; }
};

struct DesignSet {
  std::vector<UnitDesign> units;
  std::vector<std::string> fixed_names;
  std::vector<std::string> tc_names;
  std::vector<std::string> tv_names;
  int grid_size = 0;

  Index p() const { return static_cast<Index>(fixed_names.size()); }
  Index r() const { return static_cast<Index>(tc_names.size()); }
  Index l() const { return static_cast<Index>(tv_names.size()); }
  Index n() const { return static_cast<Index>(units.size()); }
  Index N() const;
};

DesignSet build_design(const PanelDataset& data, const DesignRoles& roles);

/// Same classification computed from the unit time indices of a design.
MissingPattern classify_missingness(const DesignSet& design);

}  // namespace lqmix
