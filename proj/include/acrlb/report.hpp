#ifndef ACRLB_REPORT_HPP
#define ACRLB_REPORT_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "acrlb/error.hpp"
#include "acrlb/linalg.hpp"

namespace acrlb {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// One table entry. Vectors (and flattened matrices) render as ';'-separated lists in CSV
/// and as arrays in JSON.
using Cell = std::variant<std::string, double, std::int64_t, bool, Vector>;

struct TrialRecord {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::string estimator;
  double alpha = 0.0;
  double epsilon = 0.0;
  int n = 0;
  Vector theta_hat;
  bool converged = false;
};

struct Report {
  std::string kind;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  std::vector<TrialRecord> records;
  std::string tool_version{kToolVersion};
  /// Measured but never serialized, so identical inputs give identical files.
  double wall_clock_seconds = 0.0;
};

enum class ReportFormat { Csv, Json };

inline ReportFormat parse_report_format(std::string_view name) {
  if (name == "csv") return ReportFormat::Csv;
  if (name == "json") return ReportFormat::Json;
  throw Error(ErrorKind::InvalidArgument,
              "unsupported report format '" + std::string(name) + "' (expected csv or json)");
}

/// %.17g, with nan / inf / -inf spelled out.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// A k x k matrix as a cell: a scalar when k = 1, otherwise row-major entries.
inline Cell matrix_cell(const Matrix& m) {
  if (m.size() == 1) return m(0, 0);
  Vector flat(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) flat[i * m.cols() + j] = m(i, j);
  }
  return flat;
}

/// A parameter-like vector as a cell: a scalar when it has one entry.
inline Cell vector_cell(const Vector& v) {
  if (v.size() == 1) return v[0];
  return v;
}

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string cell_text(const Cell& cell) {
  struct Visitor {
    std::string operator()(const std::string& s) const { return csv_escape(s); }
    std::string operator()(double d) const { return format_double(d); }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(const Vector& v) const {
      std::string out;
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) out += ';';
        out += format_double(v[i]);
      }
      return out;
    }
  };
  return std::visit(Visitor{}, cell);
}

inline nlohmann::ordered_json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

inline nlohmann::ordered_json cell_json(const Cell& cell) {
  struct Visitor {
    nlohmann::ordered_json operator()(const std::string& s) const { return s; }
    nlohmann::ordered_json operator()(double d) const { return json_number(d); }
    nlohmann::ordered_json operator()(std::int64_t i) const { return i; }
    nlohmann::ordered_json operator()(bool b) const { return b; }
    nlohmann::ordered_json operator()(const Vector& v) const {
      auto arr = nlohmann::ordered_json::array();
      for (double x : v) arr.push_back(json_number(x));
      return arr;
    }
  };
  return std::visit(Visitor{}, cell);
}

}  // namespace detail

inline void write_csv(const Report& report, std::ostream& out) {
  for (std::size_t c = 0; c < report.columns.size(); ++c) {
    out << (c ? "," : "") << detail::csv_escape(report.columns[c]);
  }
  out << '\n';
  for (const auto& row : report.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << detail::cell_text(row[c]);
    out << '\n';
  }
}

inline nlohmann::ordered_json report_json(const Report& report) {
  nlohmann::ordered_json j;
  j["kind"] = report.kind;
  j["tool_version"] = report.tool_version;
  j["config"] = report.config;
  j["columns"] = report.columns;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < row.size() && c < report.columns.size(); ++c) {
      obj[report.columns[c]] = detail::cell_json(row[c]);
    }
    rows.push_back(std::move(obj));
  }
  j["rows"] = std::move(rows);
  auto records = nlohmann::ordered_json::array();
  for (const auto& r : report.records) {
    nlohmann::ordered_json rec;
    rec["trial"] = r.trial;
    rec["seed"] = r.seed;
    rec["estimator"] = r.estimator;
    rec["alpha"] = detail::json_number(r.alpha);
    rec["epsilon"] = detail::json_number(r.epsilon);
    rec["n"] = r.n;
    rec["theta_hat"] = detail::cell_json(Cell(r.theta_hat));
    rec["converged"] = r.converged;
    records.push_back(std::move(rec));
  }
  j["records"] = std::move(records);
  return j;
}

inline void write_report(const Report& report, std::ostream& out, ReportFormat format) {
  if (format == ReportFormat::Csv) {
    write_csv(report, out);
  } else {
    out << report_json(report).dump(2) << '\n';
  }
}

inline std::string render_report(const Report& report, ReportFormat format) {
  std::ostringstream out;
  write_report(report, out, format);
  return out.str();
}

/// Writes the report to `path` in `format` ("csv" or "json").
inline void emit_report(const Report& report, const std::filesystem::path& path,
                        std::string_view format) {
  const ReportFormat fmt = parse_report_format(format);
  const std::string text = render_report(report, fmt);
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  file << text;
  file.flush();
  if (!file) throw Error(ErrorKind::IoError, "failed writing " + path.string());
}

}  // namespace acrlb

#endif  // ACRLB_REPORT_HPP
