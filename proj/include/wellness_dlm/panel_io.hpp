#pragma once

#include <charconv>
#include <cstdio>
#include <chrono>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "wellness_dlm/data_model.hpp"
#include "wellness_dlm/preprocess.hpp"

namespace wdlm {

// ---------------------------------------------------------------------------
// Dates: calendar days since 1970-01-01

inline int parse_date(std::string_view s) {
  int y = 0;
  unsigned m = 0, d = 0;
  auto bad = [&] { return ParseError("bad date '" + std::string(s) + "' (want YYYY-MM-DD)"); };
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw bad();
  const char* p = s.data();
  if (std::from_chars(p, p + 4, y).ptr != p + 4 || std::from_chars(p + 5, p + 7, m).ptr != p + 7 ||
      std::from_chars(p + 8, p + 10, d).ptr != p + 10)
    throw bad();
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw bad();
  return static_cast<int>(std::chrono::sys_days(ymd).time_since_epoch().count());
}

inline std::string format_date(int days) {
  const std::chrono::year_month_day ymd{std::chrono::sys_days(std::chrono::days(days))};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

// ---------------------------------------------------------------------------
// CSV primitives

namespace csv {

/// Shortest text that reads back to exactly the same double; empty for NaN.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

/// Split one CSV record. Double quotes protect commas; "" is a literal quote.
inline std::vector<std::string> split(std::string_view line, long line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        fields.back() += '"';
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw ParseError("line " + std::to_string(line_no) + ": unterminated quote");
  return fields;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// NaN for an empty cell.
inline double parse_number(std::string_view cell, long line_no, const std::string& column) {
  cell = trim(cell);
  if (cell.empty()) return kNaN;
  double v = 0.0;
  const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (r.ec != std::errc() || r.ptr != cell.data() + cell.size())
    throw ParseError("line " + std::to_string(line_no) + ": column '" + column + "': '" +
                     std::string(cell) + "' is not a number");
  return v;
}

/// Header plus data records, skipping blank lines.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<long> line_numbers;

  int column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return static_cast<int>(c);
    return -1;
  }
};

inline Table read_table(std::istream& in) {
  Table t;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split(line, line_no);
    for (auto& f : fields) f = std::string(trim(f));
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                       " fields, found " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(line_no);
  }
  if (t.header.empty()) throw ParseError("empty CSV input");
  return t;
}

}  // namespace csv

// ---------------------------------------------------------------------------
// Shared row grouping: rows are grouped per athlete in order of first
// appearance; row order within an athlete is kept as read.

namespace detail {

struct Grouped {
  std::vector<std::string> ids;
  std::vector<std::vector<std::size_t>> rows;  // [i] table row indices
};

inline Grouped group_by_id(const csv::Table& t) {
  Grouped g;
  std::map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& id = t.rows[r][0];
    if (id.empty()) throw ParseError("line " + std::to_string(t.line_numbers[r]) + ": empty athlete_id");
    auto [it, fresh] = index.emplace(id, g.ids.size());
    if (fresh) {
      g.ids.push_back(id);
      g.rows.emplace_back();
    }
    g.rows[it->second].push_back(r);
  }
  return g;
}

inline bool parse_flag(std::string_view cell, long line_no) {
  cell = csv::trim(cell);
  if (cell.empty() || cell == "0") return false;
  if (cell == "1") return true;
  throw ParseError("line " + std::to_string(line_no) + ": match flag must be 0, 1 or empty");
}

/// Metric columns sit between `date` and the first fixed trailing column.
inline std::vector<std::string> metric_columns(const csv::Table& t, const std::vector<std::string>& trailing,
                                               bool& has_match) {
  const auto& h = t.header;
  const std::size_t fixed = trailing.size();
  if (h.size() < 2 || h[0] != "athlete_id" || h[1] != "date")
    throw ParseError("header must start with athlete_id,date");
  has_match = h.back() == "match";
  const std::size_t end = h.size() - (has_match ? 1 : 0);
  if (end < 2 + fixed + 1) throw ParseError("header needs at least one metric column");
  for (std::size_t k = 0; k < fixed; ++k)
    if (h[end - fixed + k] != trailing[k])
      throw ParseError("header column " + std::to_string(end - fixed + k + 1) + " must be '" + trailing[k] +
                       "', found '" + h[end - fixed + k] + "'");
  return {h.begin() + 2, h.begin() + static_cast<long>(end - fixed)};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Raw survey panel:
//   athlete_id,date,<metric_1..metric_J>,rpe,duration_hours,sleep_hours,sleep_quality[,match]

inline RawPanel read_raw_csv(std::istream& in) {
  const auto t = csv::read_table(in);
  bool has_match = false;
  const std::vector<std::string> trailing{"rpe", "duration_hours", "sleep_hours", "sleep_quality"};
  RawPanel raw;
  raw.metric_names = detail::metric_columns(t, trailing, has_match);
  const int J = static_cast<int>(raw.metric_names.size());
  const auto g = detail::group_by_id(t);
  raw.individual_ids = g.ids;
  for (const auto& rows : g.rows) {
    const int T = static_cast<int>(rows.size());
    std::vector<int> days(T);
    Eigen::MatrixXd metrics(J, T);
    Eigen::VectorXd rpe(T), dur(T), hours(T), quality(T);
    std::vector<int> matches;
    for (int k = 0; k < T; ++k) {
      const auto& row = t.rows[rows[k]];
      const long ln = t.line_numbers[rows[k]];
      try {
        days[k] = parse_date(row[1]);
      } catch (const ParseError& e) {
        throw ParseError("line " + std::to_string(ln) + ": " + e.what());
      }
      for (int j = 0; j < J; ++j) metrics(j, k) = csv::parse_number(row[2 + j], ln, raw.metric_names[j]);
      rpe[k] = csv::parse_number(row[2 + J], ln, "rpe");
      dur[k] = csv::parse_number(row[3 + J], ln, "duration_hours");
      hours[k] = csv::parse_number(row[4 + J], ln, "sleep_hours");
      quality[k] = csv::parse_number(row[5 + J], ln, "sleep_quality");
      if (has_match && detail::parse_flag(row[6 + J], ln)) matches.push_back(days[k]);
    }
    raw.day_index.push_back(std::move(days));
    raw.metrics.push_back(std::move(metrics));
    raw.rpe.push_back(std::move(rpe));
    raw.duration_hours.push_back(std::move(dur));
    raw.sleep_hours.push_back(std::move(hours));
    raw.sleep_quality.push_back(std::move(quality));
    raw.match_days.push_back(std::move(matches));
  }
  return raw;
}

inline bool contains_day(const std::vector<std::vector<int>>& match_days, std::size_t i, int day) {
  if (i >= match_days.size()) return false;
  for (int d : match_days[i])
    if (d == day) return true;
  return false;
}

inline void write_raw_csv(std::ostream& out, const RawPanel& raw) {
  const bool has_match = !raw.match_days.empty();
  out << "athlete_id,date";
  for (const auto& m : raw.metric_names) out << ',' << csv::quote(m);
  out << ",rpe,duration_hours,sleep_hours,sleep_quality" << (has_match ? ",match" : "") << '\n';
  for (std::size_t i = 0; i < raw.individual_ids.size(); ++i)
    for (std::size_t t = 0; t < raw.day_index[i].size(); ++t) {
      const auto k = static_cast<int>(t);
      out << csv::quote(raw.individual_ids[i]) << ',' << format_date(raw.day_index[i][t]);
      for (int j = 0; j < raw.metrics[i].rows(); ++j) out << ',' << csv::format_number(raw.metrics[i](j, k));
      out << ',' << csv::format_number(raw.rpe[i][k]) << ',' << csv::format_number(raw.duration_hours[i][k])
          << ',' << csv::format_number(raw.sleep_hours[i][k]) << ','
          << csv::format_number(raw.sleep_quality[i][k]);
      if (has_match) out << ',' << (contains_day(raw.match_days, i, raw.day_index[i][t]) ? 1 : 0);
      out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Model panel (recoded categories plus derived covariates):
//   athlete_id,date,<metric_1..metric_J>,workload,recovery[,match]

inline Panel read_panel_csv(std::istream& in, int categories = 5) {
  const auto t = csv::read_table(in);
  bool has_match = false;
  Panel p;
  p.ordinal.categories = categories;
  p.ordinal.metric_names = detail::metric_columns(t, {"workload", "recovery"}, has_match);
  const int J = p.ordinal.metrics();
  p.covariates.names = {"workload", "recovery"};
  p.covariates.series.assign(2, {});
  const auto g = detail::group_by_id(t);
  p.ordinal.individual_ids = g.ids;
  for (const auto& rows : g.rows) {
    const int T = static_cast<int>(rows.size());
    std::vector<int> days(T);
    Eigen::MatrixXi z(J, T);
    Eigen::VectorXd work(T), rec(T);
    std::vector<int> matches;
    for (int k = 0; k < T; ++k) {
      const auto& row = t.rows[rows[k]];
      const long ln = t.line_numbers[rows[k]];
      try {
        days[k] = parse_date(row[1]);
      } catch (const ParseError& e) {
        throw ParseError("line " + std::to_string(ln) + ": " + e.what());
      }
      for (int j = 0; j < J; ++j) {
        const double v = csv::parse_number(row[2 + j], ln, p.ordinal.metric_names[j]);
        if (std::isnan(v)) {
          z(j, k) = kMissing;
        } else if (v != std::floor(v) || std::abs(v) > 1e6) {
          throw ParseError("line " + std::to_string(ln) + ": column '" + p.ordinal.metric_names[j] +
                           "': category must be an integer");
        } else {
          z(j, k) = static_cast<int>(v);
        }
      }
      work[k] = csv::parse_number(row[2 + J], ln, "workload");
      rec[k] = csv::parse_number(row[3 + J], ln, "recovery");
      if (has_match && detail::parse_flag(row[4 + J], ln)) matches.push_back(days[k]);
    }
    p.ordinal.day_index.push_back(std::move(days));
    p.ordinal.values.push_back(std::move(z));
    p.covariates.series[0].push_back(std::move(work));
    p.covariates.series[1].push_back(std::move(rec));
    p.match_days.push_back(std::move(matches));
  }
  return p;
}

inline void write_panel_csv(std::ostream& out, const Panel& p) {
  const auto& o = p.ordinal;
  const bool has_match = !p.match_days.empty();
  out << "athlete_id,date";
  for (const auto& m : o.metric_names) out << ',' << csv::quote(m);
  out << ",workload,recovery" << (has_match ? ",match" : "") << '\n';
  for (int i = 0; i < o.individuals(); ++i)
    for (int t = 0; t < o.days(i); ++t) {
      out << csv::quote(o.individual_ids[i]) << ',' << format_date(o.day_index[i][t]);
      for (int j = 0; j < o.metrics(); ++j) {
        out << ',';
        if (o.values[i](j, t) != kMissing) out << o.values[i](j, t);
      }
      out << ',' << csv::format_number(p.covariates.series[0][i][t]) << ','
          << csv::format_number(p.covariates.series[1][i][t]);
      if (has_match) out << ',' << (contains_day(p.match_days, i, o.day_index[i][t]) ? 1 : 0);
      out << '\n';
    }
}

}  // namespace wdlm
