#pragma once

#include <cstdint>
#include <compare>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace neurq {

/// Column types a table may declare. `Vector` only appears in derived
/// result sets (embedding outputs); it is never part of a TableDef.
enum class ColumnType { Int64, Float64, Text, Bool, Vector };

std::string_view to_string(ColumnType t);
std::optional<ColumnType> parse_column_type(std::string_view s);

struct Null {
  friend bool operator==(Null, Null) { return true; }
};

using Vector = std::vector<double>;
using Value = std::variant<Null, int64_t, double, std::string, bool, Vector>;

bool is_null(const Value& v);
bool is_numeric(const Value& v);
double as_double(const Value& v);
std::optional<ColumnType> type_of(const Value& v);

/// Total order used by Sort, MergeJoin and multiset comparison. Numbers
/// compare across int64/float64; Null sorts first.
int compare_values(const Value& a, const Value& b);
bool values_equal(const Value& a, const Value& b);

std::string value_to_string(const Value& v);
/// SQL literal rendering (strings quoted, floats round-trippable).
std::string value_to_sql(const Value& v);

using Row = std::vector<Value>;

/// Monotone data version shared by every table of a database instance.
struct SnapshotVersion {
  uint64_t value = 0;
  auto operator<=>(const SnapshotVersion&) const = default;
};

struct TableId {
  uint32_t value = 0;
  auto operator<=>(const TableId&) const = default;
};

/// (name, version) of a registered model.
struct ModelRef {
  std::string name;
  uint64_t version = 0;
  auto operator<=>(const ModelRef&) const = default;
  std::string to_string() const { return name + "@v" + std::to_string(version); }
};

struct ColumnInfo {
  std::string qualifier;  // table alias or derived-relation alias; may be empty
  std::string name;
  ColumnType type = ColumnType::Int64;

  std::string qualified() const { return qualifier.empty() ? name : qualifier + "." + name; }
  bool operator==(const ColumnInfo&) const = default;
};

using Schema = std::vector<ColumnInfo>;

/// Finds a column by (qualifier, name). An empty qualifier matches any
/// qualifier but must be unambiguous. Returns -1 when absent, -2 when ambiguous.
int find_column(const Schema& schema, std::string_view qualifier, std::string_view name);

/// Rows plus the commit version of the newest base row each result row
/// was derived from. Versions travel with rows so snapshot consistency can
/// be audited after the fact.
struct RowSet {
  Schema schema;
  std::vector<Row> rows;
  std::vector<uint64_t> versions;

  size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
  void push(Row row, uint64_t version) {
    rows.push_back(std::move(row));
    versions.push_back(version);
  }
};

/// Reorders `rs` so its columns follow `target` (matched by qualified name).
RowSet reorder_columns(const RowSet& rs, const Schema& target);

/// Multiset equality over rows, ignoring row order. Columns are matched by
/// qualified name so column order does not matter either.
bool multiset_equal(const RowSet& a, const RowSet& b);

/// Approximate in-memory footprint in simulated MB.
double rowset_size_mb(const RowSet& rs);

std::ostream& operator<<(std::ostream& os, const RowSet& rs);

}  // namespace neurq
