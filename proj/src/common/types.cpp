#include "neurq/common/types.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "neurq/common/error.hpp"

namespace neurq {

std::string_view to_string(ColumnType t) {
  switch (t) {
    case ColumnType::Int64: return "int64";
    case ColumnType::Float64: return "float64";
    case ColumnType::Text: return "text";
    case ColumnType::Bool: return "bool";
    case ColumnType::Vector: return "vector";
  }
  return "?";
}

std::optional<ColumnType> parse_column_type(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "int64" || lower == "int" || lower == "integer" || lower == "bigint") return ColumnType::Int64;
  if (lower == "float64" || lower == "float" || lower == "double" || lower == "real") return ColumnType::Float64;
  if (lower == "text" || lower == "varchar" || lower == "string") return ColumnType::Text;
  if (lower == "bool" || lower == "boolean") return ColumnType::Bool;
  return std::nullopt;
}

bool is_null(const Value& v) { return std::holds_alternative<Null>(v); }

bool is_numeric(const Value& v) {
  return std::holds_alternative<int64_t>(v) || std::holds_alternative<double>(v) || std::holds_alternative<bool>(v);
}

double as_double(const Value& v) {
  if (auto* i = std::get_if<int64_t>(&v)) return static_cast<double>(*i);
  if (auto* d = std::get_if<double>(&v)) return *d;
  if (auto* b = std::get_if<bool>(&v)) return *b ? 1.0 : 0.0;
  fail(ErrorCode::TypeMismatch, "value is not numeric: " + value_to_string(v));
}

std::optional<ColumnType> type_of(const Value& v) {
  switch (v.index()) {
    case 1: return ColumnType::Int64;
    case 2: return ColumnType::Float64;
    case 3: return ColumnType::Text;
    case 4: return ColumnType::Bool;
    case 5: return ColumnType::Vector;
    default: return std::nullopt;
  }
}

int compare_values(const Value& a, const Value& b) {
  const bool an = is_null(a), bn = is_null(b);
  if (an || bn) return an == bn ? 0 : (an ? -1 : 1);
  const bool anum = std::holds_alternative<int64_t>(a) || std::holds_alternative<double>(a);
  const bool bnum = std::holds_alternative<int64_t>(b) || std::holds_alternative<double>(b);
  if (anum && bnum) {
    if (std::holds_alternative<int64_t>(a) && std::holds_alternative<int64_t>(b)) {
      auto x = std::get<int64_t>(a), y = std::get<int64_t>(b);
      return x < y ? -1 : (x > y ? 1 : 0);
    }
    double x = as_double(a), y = as_double(b);
    return x < y ? -1 : (x > y ? 1 : 0);
  }
  if (a.index() != b.index()) return a.index() < b.index() ? -1 : 1;
  if (auto* s = std::get_if<std::string>(&a)) {
    int c = s->compare(std::get<std::string>(b));
    return c < 0 ? -1 : (c > 0 ? 1 : 0);
  }
  if (auto* x = std::get_if<bool>(&a)) {
    bool y = std::get<bool>(b);
    return *x == y ? 0 : (*x ? 1 : -1);
  }
  const auto& va = std::get<Vector>(a);
  const auto& vb = std::get<Vector>(b);
  if (va < vb) return -1;
  if (vb < va) return 1;
  return 0;
}

bool values_equal(const Value& a, const Value& b) { return compare_values(a, b) == 0; }

namespace {
std::string format_double(double d) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  std::string s(buf);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec < 17; ++prec) {
    char shorter[64];
    std::snprintf(shorter, sizeof shorter, "%.*g", prec, d);
    if (std::strtod(shorter, nullptr) == d) {
      s = shorter;
      break;
    }
  }
  return s;
}
}  // namespace

std::string value_to_string(const Value& v) {
  switch (v.index()) {
    case 0: return "NULL";
    case 1: return std::to_string(std::get<int64_t>(v));
    case 2: return format_double(std::get<double>(v));
    case 3: return std::get<std::string>(v);
    case 4: return std::get<bool>(v) ? "true" : "false";
    case 5: {
      const auto& vec = std::get<Vector>(v);
      std::ostringstream os;
      os << "[";
      for (size_t i = 0; i < vec.size(); ++i) {
        if (i) os << ",";
        if (i == 4 && vec.size() > 6) {
          os << "...(" << vec.size() << ")";
          break;
        }
        os << format_double(vec[i]);
      }
      os << "]";
      return os.str();
    }
  }
  return "?";
}

std::string value_to_sql(const Value& v) {
  switch (v.index()) {
    case 0: return "NULL";
    case 2: {
      std::string s = format_double(std::get<double>(v));
      if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
      return s;
    }
    case 3: {
      std::string out = "'";
      for (char c : std::get<std::string>(v)) {
        if (c == '\'') out += "''";
        else out += c;
      }
      return out + "'";
    }
    case 4: return std::get<bool>(v) ? "TRUE" : "FALSE";
    default: return value_to_string(v);
  }
}

int find_column(const Schema& schema, std::string_view qualifier, std::string_view name) {
  int found = -1;
  for (size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].name != name) continue;
    if (!qualifier.empty() && schema[i].qualifier != qualifier) continue;
    if (found >= 0) return -2;
    found = static_cast<int>(i);
  }
  return found;
}

RowSet reorder_columns(const RowSet& rs, const Schema& target) {
  std::vector<int> perm;
  perm.reserve(target.size());
  bool identity = target.size() == rs.schema.size();
  for (size_t i = 0; i < target.size(); ++i) {
    int idx = find_column(rs.schema, target[i].qualifier, target[i].name);
    if (idx < 0) fail(ErrorCode::UnknownColumn, "cannot map column " + target[i].qualified());
    if (idx != static_cast<int>(i)) identity = false;
    perm.push_back(idx);
  }
  if (identity) return rs;
  RowSet out;
  out.schema = target;
  out.rows.reserve(rs.rows.size());
  for (const auto& row : rs.rows) {
    Row r;
    r.reserve(perm.size());
    for (int p : perm) r.push_back(row[p]);
    out.rows.push_back(std::move(r));
  }
  out.versions = rs.versions;
  return out;
}

namespace {
bool rows_close(const Row& a, const Row& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (std::holds_alternative<double>(a[i]) && std::holds_alternative<double>(b[i])) {
      double x = std::get<double>(a[i]), y = std::get<double>(b[i]);
      if (std::fabs(x - y) > 1e-9 * std::max({1.0, std::fabs(x), std::fabs(y)})) return false;
    } else if (!values_equal(a[i], b[i])) {
      return false;
    }
  }
  return true;
}

bool row_less(const Row& a, const Row& b) {
  for (size_t i = 0; i < a.size() && i < b.size(); ++i) {
    int c = compare_values(a[i], b[i]);
    if (c) return c < 0;
  }
  return a.size() < b.size();
}
}  // namespace

bool multiset_equal(const RowSet& a, const RowSet& b) {
  if (a.schema.size() != b.schema.size() || a.rows.size() != b.rows.size()) return false;
  RowSet bb;
  try {
    bb = reorder_columns(b, a.schema);
  } catch (const Error&) {
    return false;
  }
  auto ra = a.rows;
  auto rb = bb.rows;
  std::sort(ra.begin(), ra.end(), row_less);
  std::sort(rb.begin(), rb.end(), row_less);
  for (size_t i = 0; i < ra.size(); ++i)
    if (!rows_close(ra[i], rb[i])) return false;
  return true;
}

double rowset_size_mb(const RowSet& rs) {
  double bytes = 0;
  for (const auto& row : rs.rows) {
    for (const auto& v : row) {
      if (auto* s = std::get_if<std::string>(&v)) bytes += 16 + s->size();
      else if (auto* vec = std::get_if<Vector>(&v)) bytes += 16 + 8.0 * vec->size();
      else bytes += 8;
    }
  }
  return std::max(bytes / (1024.0 * 1024.0), 1e-3);
}

std::ostream& operator<<(std::ostream& os, const RowSet& rs) {
  for (size_t i = 0; i < rs.schema.size(); ++i) os << (i ? " | " : "") << rs.schema[i].qualified();
  os << "\n";
  for (const auto& row : rs.rows) {
    for (size_t i = 0; i < row.size(); ++i) os << (i ? " | " : "") << value_to_string(row[i]);
    os << "\n";
  }
  os << "(" << rs.rows.size() << (rs.rows.size() == 1 ? " row)" : " rows)") << "\n";
  return os;
}

}  // namespace neurq
