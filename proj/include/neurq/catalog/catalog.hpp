#pragma once

#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "neurq/common/expr.hpp"
#include "neurq/common/profile.hpp"
#include "neurq/common/types.hpp"

namespace neurq {

struct ColumnDef {
  std::string name;
  ColumnType type = ColumnType::Int64;
  bool operator==(const ColumnDef&) const = default;
};

struct TableDef {
  std::string name;
  std::vector<ColumnDef> columns;
  std::string primary_key;

  int ordinal(std::string_view column) const;
};

/// (table, column) pair naming a base-table column.
struct TableColumn {
  std::string table;
  std::string column;
  auto operator<=>(const TableColumn&) const = default;
  std::string to_string() const { return table + "." + column; }
};

/// Feature mask keys and quality profile keys are built from this.
std::string mask_key(const std::vector<std::string>& columns);

struct ModelRecord {
  std::string name;
  uint64_t version = 0;  // assigned by register_model
  ModelKind kind = ModelKind::RidgeRegressor;
  std::vector<TableColumn> feature_columns;
  std::optional<TableColumn> target_column;
  std::string weights;  // opaque payload, interpreted by the model runtime
  CostProfile cost_profile;
  /// Base-model selection, relation modeling and fusion stage costs.
  std::vector<CostProfile> staged_profiles;
  /// Quality estimates keyed by "<variant>:<mask>" (see quality_key).
  std::map<std::string, double> quality_profile;

  ModelRef ref() const { return {name, version}; }
  std::vector<std::string> feature_names() const;
};

std::string quality_key(std::string_view variant, const std::vector<std::string>& mask);

struct TenantPolicy {
  std::string tenant;
  std::set<TableColumn> allowed_columns;
  std::set<std::string> allowed_models;
};

using AccessObject = std::variant<TableColumn, std::string>;

struct ColumnStats {
  std::string name;
  size_t distinct = 0;
  double avg_tokens = 0;  // whitespace token count for text columns, 1 otherwise
};

struct TableStats {
  size_t row_count = 0;
  std::vector<ColumnStats> columns;
  const ColumnStats* column(std::string_view name) const;
};

struct CatalogEvent {
  enum class Kind { DataAppended, ModelRegistered, ModelDropped };
  Kind kind;
  SnapshotVersion snapshot;
  std::optional<ModelRef> model;
};

/// In-memory append-only row store with per-row commit versions, the
/// model catalog and tenant policies. Writers serialize through one commit
/// point; readers of any snapshot never block each other.
class Catalog {
 public:
  using Listener = std::function<void(const CatalogEvent&)>;

  Catalog() = default;
  Catalog(const Catalog&) = delete;
  Catalog& operator=(const Catalog&) = delete;

  TableId create_table(const TableDef& def);
  std::optional<TableId> find_table(std::string_view name) const;
  const TableDef& table_def(TableId id) const;
  std::vector<TableId> tables() const;

  SnapshotVersion append_rows(TableId table, std::vector<Row> rows);
  /// CSV with a header row; types come from the TableDef.
  SnapshotVersion load_csv(TableId table, std::istream& in);

  SnapshotVersion current_version() const;

  /// Rows committed at versions <= snapshot, filtered by `predicate` and
  /// projected to `projection` (all columns when empty), in insertion
  /// order. Output columns are qualified with `qualifier` (table name when
  /// empty); the predicate is resolved against that qualification.
  RowSet scan(TableId table, SnapshotVersion snapshot, const std::vector<std::string>& projection = {},
              const ExprPtr& predicate = nullptr, const std::string& qualifier = {}) const;

  TableStats stats(TableId table, SnapshotVersion snapshot) const;

  void register_tenant(TenantPolicy policy);
  bool has_tenant(std::string_view tenant) const;
  bool check_access(std::string_view tenant, const AccessObject& object) const;
  TenantPolicy policy(std::string_view tenant) const;

  ModelRef register_model(ModelRecord record);
  void drop_model(std::string_view name);
  std::shared_ptr<const ModelRecord> latest_model(std::string_view name) const;
  std::shared_ptr<const ModelRecord> model(const ModelRef& ref) const;
  /// Profiled quality, including estimates recorded after registration.
  std::optional<double> model_quality(const ModelRef& ref, const std::string& key) const;
  void record_quality(const ModelRef& ref, const std::string& key, double quality);

  void subscribe(Listener listener);

 private:
  struct Table {
    TableDef def;
    TableId id;
    std::vector<Row> rows;
    std::vector<uint64_t> versions;
  };

  void validate_row(const TableDef& def, const Row& row) const;
  void notify(const CatalogEvent& event);

  mutable std::shared_mutex mu_;
  std::vector<std::unique_ptr<Table>> tables_;
  std::unordered_map<std::string, TableId> table_names_;
  uint64_t version_ = 0;

  std::map<std::string, std::map<uint64_t, std::shared_ptr<const ModelRecord>>> models_;
  std::set<std::string> dropped_models_;
  std::map<std::pair<ModelRef, std::string>, double> recorded_quality_;

  std::map<std::string, TenantPolicy, std::less<>> tenants_;

  mutable std::mutex stats_mu_;
  mutable std::map<std::pair<uint32_t, uint64_t>, TableStats> stats_cache_;

  std::mutex listeners_mu_;
  std::vector<Listener> listeners_;
};

}  // namespace neurq
