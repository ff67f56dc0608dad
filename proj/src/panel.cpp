#include <lqmix/panel.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>

namespace lqmix {

namespace {

using Row = std::vector<std::string>;

// RFC 4180 style splitter. Returns rows paired with their 1-based line number.
std::vector<std::pair<std::size_t, Row>> split_csv(const std::string& text) {
  std::vector<std::pair<std::size_t, Row>> rows;
  std::size_t pos = 0;
  std::size_t line = 1;
  if (text.rfind("\xEF\xBB\xBF", 0) == 0) pos = 3;

  while (pos < text.size()) {
    Row row;
    std::string field;
    bool quoted = false;
    const std::size_t start_line = line;
    bool row_done = false;
    while (!row_done) {
      if (pos >= text.size()) {
        if (quoted) throw ParseError(fmt::format("row {}: unterminated quoted field", start_line));
        row.push_back(std::move(field));
        break;
      }
      const char c = text[pos++];
      if (quoted) {
        if (c == '"') {
          if (pos < text.size() && text[pos] == '"') {
            field.push_back('"');
            ++pos;
          } else {
            quoted = false;
          }
        } else {
          if (c == '\n') ++line;
          field.push_back(c);
        }
        continue;
      }
      switch (c) {
        case '"':
          if (!field.empty())
            throw ParseError(fmt::format("row {}: stray quote inside unquoted field", start_line));
          quoted = true;
          break;
        case ',':
          row.push_back(std::move(field));
          field.clear();
          break;
        case '\r':
          break;
        case '\n':
          ++line;
          row.push_back(std::move(field));
          row_done = true;
          break;
        default:
          field.push_back(c);
      }
    }
    const bool blank = row.size() == 1 && row[0].empty();
    if (!blank) rows.emplace_back(start_line, std::move(row));
  }
  return rows;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_number(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  if (s == "NA" || s == "NaN" || s == "nan") return std::nullopt;
  double value = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument(s);
  return value;
}

bool is_missing(const std::string& raw) {
  const std::string s = trim(raw);
  return s.empty() || s == "NA";
}

// Numeric ids compare numerically, everything else lexicographically.
bool unit_less(const std::string& a, const std::string& b) {
  double x = 0, y = 0;
  const auto ra = std::from_chars(a.data(), a.data() + a.size(), x);
  const auto rb = std::from_chars(b.data(), b.data() + b.size(), y);
  const bool na = ra.ec == std::errc() && ra.ptr == a.data() + a.size();
  const bool nb = rb.ec == std::errc() && rb.ptr == b.data() + b.size();
  if (na && nb && x != y) return x < y;
  if (na != nb) return na;
  return a < b;
}

std::string fmt_double(double v) { return fmt::format("{}", v); }

}  // namespace

bool is_intercept_token(const std::string& name) {
  return name == kIntercept || name == "1" || name == "(Intercept)";
}

Index PanelDataset::N() const {
  Index total = 0;
  for (const auto& u : units) total += u.size();
  return total;
}

void PanelDataset::validate() const {
  std::set<std::string> ids;
  for (const auto& u : units) {
    if (!ids.insert(u.unit_id).second)
      throw StructuralError("duplicate unit id '" + u.unit_id + "'");
    const auto T = static_cast<std::size_t>(u.size());
    if (T == 0) throw StructuralError("unit '" + u.unit_id + "' has no observed rows");
    if (u.times.size() != T || static_cast<std::size_t>(u.covariates.rows()) != T)
      throw StructuralError("unit '" + u.unit_id + "' has misaligned times/response/covariates");
    if (u.covariates.cols() != static_cast<Index>(covariate_names.size()))
      throw StructuralError("unit '" + u.unit_id + "' covariate width mismatch");
    for (std::size_t t = 0; t < T; ++t) {
      if (u.times[t] < 0 || u.times[t] >= static_cast<int>(time_grid.size()))
        throw StructuralError("unit '" + u.unit_id + "' time index outside grid");
      if (t > 0 && u.times[t] <= u.times[t - 1])
        throw StructuralError("unit '" + u.unit_id + "' times are not strictly increasing");
    }
  }
}

PanelDataset parse_csv(const std::string& text, const ColumnSpec& colspec) {
  const auto rows = split_csv(text);
  if (rows.empty()) throw ParseError("row 1: empty input, header row required");

  const Row& header = rows.front().second;
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t j = 0; j < header.size(); ++j) column.emplace(trim(header[j]), j);

  auto find_column = [&](const std::string& name) -> std::size_t {
    const auto it = column.find(name);
    if (it == column.end()) throw NameError("column '" + name + "' not found in CSV header");
    return it->second;
  };

  const std::size_t unit_col = find_column(colspec.unit);
  const std::size_t time_col = find_column(colspec.time);
  const std::size_t resp_col = find_column(colspec.response);

  // Each covariate is a product of one or more source columns.
  std::vector<std::vector<std::size_t>> factors;
  for (const auto& name : colspec.covariates) {
    if (column.count(name)) {
      factors.push_back({column.at(name)});
      continue;
    }
    std::vector<std::size_t> parts;
    std::stringstream ss(name);
    std::string piece;
    while (std::getline(ss, piece, ':')) parts.push_back(find_column(trim(piece)));
    if (parts.empty()) throw NameError("empty covariate name");
    factors.push_back(std::move(parts));
  }

  struct Parsed {
    std::string unit;
    double time;
    std::optional<double> y;
    std::vector<double> x;
    std::size_t line;
  };
  std::vector<Parsed> parsed;
  parsed.reserve(rows.size() - 1);

  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto& [line, row] = rows[k];
    if (row.size() != header.size())
      throw ParseError(fmt::format("row {}: expected {} fields, found {}", line, header.size(),
                                   row.size()));
    Parsed p;
    p.line = line;
    p.unit = trim(row[unit_col]);
    if (p.unit.empty()) throw TypeError(fmt::format("row {}: empty unit identifier", line));
    try {
      const auto t = parse_number(row[time_col]);
      if (!t) throw TypeError(fmt::format("row {}: missing time value", line));
      p.time = *t;
    } catch (const std::invalid_argument&) {
      throw TypeError(fmt::format("row {}: non-numeric time '{}'", line, row[time_col]));
    }
    try {
      p.y = is_missing(row[resp_col]) ? std::nullopt : parse_number(row[resp_col]);
    } catch (const std::invalid_argument&) {
      throw TypeError(fmt::format("row {}: non-numeric response '{}'", line, row[resp_col]));
    }
    for (std::size_t c = 0; c < factors.size(); ++c) {
      double value = 1.0;
      for (const std::size_t j : factors[c]) {
        std::optional<double> v;
        try {
          v = parse_number(row[j]);
        } catch (const std::invalid_argument&) {
          throw TypeError(
              fmt::format("row {}: non-numeric covariate '{}' = '{}'", line, header[j], row[j]));
        }
        if (!v)
          throw TypeError(fmt::format("row {}: missing covariate '{}'", line, header[j]));
        value *= *v;
      }
      p.x.push_back(value);
    }
    parsed.push_back(std::move(p));
  }

  PanelDataset data;
  data.covariate_names = colspec.covariates;

  std::set<double> grid_values;
  for (const auto& p : parsed) grid_values.insert(p.time);
  data.time_grid.assign(grid_values.begin(), grid_values.end());

  // Duplicate detection covers dropped rows too: (unit, time) is a key.
  std::map<std::pair<std::string, double>, std::size_t> seen;
  for (const auto& p : parsed) {
    const auto [it, fresh] = seen.emplace(std::make_pair(p.unit, p.time), p.line);
    if (!fresh)
      throw StructuralError(fmt::format("row {}: duplicate (unit, time) = ({}, {}) first seen at row {}",
                                        p.line, p.unit, fmt_double(p.time), it->second));
  }

  std::vector<const Parsed*> kept;
  for (const auto& p : parsed)
    if (p.y) kept.push_back(&p);
  std::stable_sort(kept.begin(), kept.end(), [](const Parsed* a, const Parsed* b) {
    if (a->unit != b->unit) return unit_less(a->unit, b->unit);
    return a->time < b->time;
  });

  const Index width = static_cast<Index>(factors.size());
  for (std::size_t k = 0; k < kept.size();) {
    std::size_t e = k;
    while (e < kept.size() && kept[e]->unit == kept[k]->unit) ++e;
    UnitRecord u;
    u.unit_id = kept[k]->unit;
    const Index T = static_cast<Index>(e - k);
    u.y.resize(T);
    u.covariates.resize(T, width);
    for (Index t = 0; t < T; ++t) {
      const Parsed& p = *kept[k + static_cast<std::size_t>(t)];
      u.y(t) = *p.y;
      const auto grid_it = std::lower_bound(data.time_grid.begin(), data.time_grid.end(), p.time);
      u.times.push_back(static_cast<int>(grid_it - data.time_grid.begin()));
      for (Index c = 0; c < width; ++c) u.covariates(t, c) = p.x[static_cast<std::size_t>(c)];
    }
    data.units.push_back(std::move(u));
    k = e;
  }
  if (data.units.empty()) throw ParseError("no rows with an observed response");
  data.validate();
  return data;
}

PanelDataset load_csv(const std::filesystem::path& path, const ColumnSpec& colspec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), colspec);
}

std::string to_csv(const PanelDataset& data, const std::string& unit, const std::string& time,
                   const std::string& response) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
      if (c == '"') out.push_back('"');
      out.push_back(c);
    }
    return out + "\"";
  };
  std::string out = quote(unit) + "," + quote(time) + "," + quote(response);
  for (const auto& name : data.covariate_names) out += "," + quote(name);
  out += "\n";
  for (const auto& u : data.units) {
    for (Index t = 0; t < u.size(); ++t) {
      out += quote(u.unit_id) + "," +
             fmt_double(data.time_grid[static_cast<std::size_t>(u.times[static_cast<std::size_t>(t)])]) +
             "," + fmt_double(u.y(t));
      for (Index c = 0; c < u.covariates.cols(); ++c) out += "," + fmt_double(u.covariates(t, c));
      out += "\n";
    }
  }
  return out;
}

void write_csv(const PanelDataset& data, const std::filesystem::path& path,
               const std::string& unit, const std::string& time, const std::string& response) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path.string() + "'");
  out << to_csv(data, unit, time, response);
}

const char* to_string(MissingPattern kind) {
  switch (kind) {
    case MissingPattern::none: return "none";
    case MissingPattern::monotone: return "monotone";
    case MissingPattern::non_monotone: return "non-monotone";
  }
  return "?";
}

namespace {

template <typename Units>
MissingPattern classify_times(const Units& units, int K) {
  bool complete = true;
  bool prefixes = true;
  for (const auto& u : units) {
    const int T = static_cast<int>(u.times.size());
    if (T != K) complete = false;
    // Strictly increasing grid indices form a prefix iff the last is T-1.
    if (u.times.front() != 0 || u.times.back() != T - 1) prefixes = false;
  }
  if (complete) return MissingPattern::none;
  return prefixes ? MissingPattern::monotone : MissingPattern::non_monotone;
}

}  // namespace

MissingPattern classify_missingness(const PanelDataset& data) {
  return classify_times(data.units, static_cast<int>(data.time_grid.size()));
}

MissingPattern classify_missingness(const DesignSet& design) {
  return classify_times(design.units, design.grid_size);
}

Index DesignSet::N() const {
  Index total = 0;
  for (const auto& u : units) total += u.size();
  return total;
}

DesignSet build_design(const PanelDataset& data, const DesignRoles& roles) {
  auto canonical = [](const std::vector<std::string>& names, const char* role) {
    std::vector<std::string> out;
    bool intercept = false;
    for (const auto& name : names) {
      if (is_intercept_token(name)) {
        if (intercept) throw SpecificationError(std::string("intercept repeated in ") + role);
        intercept = true;
        continue;
      }
      if (std::find(out.begin(), out.end(), name) != out.end())
        throw SpecificationError("variable '" + name + "' repeated in " + role);
      out.push_back(name);
    }
    return std::make_pair(intercept, out);
  };

  auto [fixed_int, fixed] = canonical(roles.fixed, "fixed formula");
  auto [tc_int, tc] = canonical(roles.random_tc, "TC random formula");
  auto [tv_int, tv] = canonical(roles.random_tv, "TV random formula");

  if (tc_int && tv_int)
    throw SpecificationError("intercept requested as both TC and TV random coefficient");
  for (const auto& name : tc)
    if (std::find(tv.begin(), tv.end(), name) != tv.end())
      throw SpecificationError("variable '" + name + "' appears in both TC and TV random formulas");

  auto column_of = [&](const std::string& name) {
    const auto it = std::find(data.covariate_names.begin(), data.covariate_names.end(), name);
    if (it == data.covariate_names.end()) throw NameError("unknown variable '" + name + "'");
    return static_cast<Index>(it - data.covariate_names.begin());
  };

  // Random roles win over the fixed role.
  std::erase_if(fixed, [&](const std::string& name) {
    return std::find(tc.begin(), tc.end(), name) != tc.end() ||
           std::find(tv.begin(), tv.end(), name) != tv.end();
  });
  const bool x_int = (fixed_int || roles.fixed_intercept) && !tc_int && !tv_int;

  DesignSet design;
  design.grid_size = static_cast<int>(data.time_grid.size());
  auto assemble = [&](bool intercept, const std::vector<std::string>& names,
                      std::vector<std::string>& out_names) {
    std::vector<Index> cols;
    if (intercept) {
      out_names.push_back("(Intercept)");
      cols.push_back(-1);
    }
    for (const auto& name : names) {
      out_names.push_back(name);
      cols.push_back(column_of(name));
    }
    return cols;
  };
  const auto xcols = assemble(x_int, fixed, design.fixed_names);
  const auto zcols = assemble(tc_int, tc, design.tc_names);
  const auto wcols = assemble(tv_int, tv, design.tv_names);

  auto fill = [](const UnitRecord& u, const std::vector<Index>& cols) {
    MatrixXd M(u.size(), static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (cols[c] < 0)
        M.col(static_cast<Index>(c)).setOnes();
      else
        M.col(static_cast<Index>(c)) = u.covariates.col(cols[c]);
    }
    return M;
  };

  design.units.reserve(data.units.size());
  for (const auto& u : data.units) {
    UnitDesign d;
    d.y = u.y;
    d.times = u.times;
    d.X = fill(u, xcols);
    d.Z = fill(u, zcols);
    d.W = fill(u, wcols);
    design.units.push_back(std::move(d));
  }
  return design;
}

}  // namespace lqmix
