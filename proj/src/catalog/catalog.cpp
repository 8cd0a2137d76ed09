#include "neurq/catalog/catalog.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "neurq/common/error.hpp"

namespace neurq {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::RidgeRegressor: return "ridge_regressor";
    case ModelKind::HashEmbedder: return "hash_embedder";
    case ModelKind::GenerativeMock: return "generative_mock";
  }
  return "?";
}

std::optional<ModelKind> parse_model_kind(std::string_view s) {
  if (s == "ridge_regressor") return ModelKind::RidgeRegressor;
  if (s == "hash_embedder") return ModelKind::HashEmbedder;
  if (s == "generative_mock") return ModelKind::GenerativeMock;
  return std::nullopt;
}

int TableDef::ordinal(std::string_view column) const {
  for (size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == column) return static_cast<int>(i);
  return -1;
}

std::string mask_key(const std::vector<std::string>& columns) {
  std::vector<std::string> sorted = columns;
  std::sort(sorted.begin(), sorted.end());
  std::string out = "{";
  for (size_t i = 0; i < sorted.size(); ++i) out += (i ? "," : "") + sorted[i];
  return out + "}";
}

std::string quality_key(std::string_view variant, const std::vector<std::string>& mask) {
  return std::string(variant) + ":" + mask_key(mask);
}

std::vector<std::string> ModelRecord::feature_names() const {
  std::vector<std::string> out;
  for (const auto& c : feature_columns) out.push_back(c.column);
  return out;
}

const ColumnStats* TableStats::column(std::string_view name) const {
  for (const auto& c : columns)
    if (c.name == name) return &c;
  return nullptr;
}

TableId Catalog::create_table(const TableDef& def) {
  std::set<std::string> names;
  for (const auto& c : def.columns) {
    if (c.type == ColumnType::Vector) fail(ErrorCode::SchemaMismatch, "vector columns cannot be stored");
    if (!names.insert(c.name).second) fail(ErrorCode::SchemaMismatch, "duplicate column " + c.name + " in " + def.name);
  }
  if (def.columns.empty()) fail(ErrorCode::SchemaMismatch, "table " + def.name + " has no columns");
  if (def.ordinal(def.primary_key) < 0)
    fail(ErrorCode::SchemaMismatch, "primary key " + def.primary_key + " is not a column of " + def.name);
  {
    std::unique_lock lock(mu_);
    if (table_names_.count(def.name)) fail(ErrorCode::DuplicateTable, def.name);
    TableId id{static_cast<uint32_t>(tables_.size() + 1)};
    auto t = std::make_unique<Table>();
    t->def = def;
    t->id = id;
    tables_.push_back(std::move(t));
    table_names_.emplace(def.name, id);
    return id;
  }
}

std::optional<TableId> Catalog::find_table(std::string_view name) const {
  std::shared_lock lock(mu_);
  auto it = table_names_.find(std::string(name));
  if (it == table_names_.end()) return std::nullopt;
  return it->second;
}

const TableDef& Catalog::table_def(TableId id) const {
  std::shared_lock lock(mu_);
  if (id.value == 0 || id.value > tables_.size()) fail(ErrorCode::UnknownTable, "table id " + std::to_string(id.value));
  return tables_[id.value - 1]->def;
}

std::vector<TableId> Catalog::tables() const {
  std::shared_lock lock(mu_);
  std::vector<TableId> out;
  for (const auto& t : tables_) out.push_back(t->id);
  return out;
}

void Catalog::validate_row(const TableDef& def, const Row& row) const {
  if (row.size() != def.columns.size())
    fail(ErrorCode::SchemaMismatch, def.name + " expects " + std::to_string(def.columns.size()) + " values, got " +
                                        std::to_string(row.size()));
  for (size_t i = 0; i < row.size(); ++i) {
    auto t = type_of(row[i]);
    if (!t) continue;  // NULL
    if (*t != def.columns[i].type)
      fail(ErrorCode::SchemaMismatch, def.name + "." + def.columns[i].name + " expects " +
                                          std::string(to_string(def.columns[i].type)) + ", got " +
                                          std::string(to_string(*t)));
  }
}

SnapshotVersion Catalog::append_rows(TableId table, std::vector<Row> rows) {
  SnapshotVersion committed;
  {
    std::unique_lock lock(mu_);
    if (table.value == 0 || table.value > tables_.size())
      fail(ErrorCode::UnknownTable, "table id " + std::to_string(table.value));
    Table& t = *tables_[table.value - 1];
    for (const auto& r : rows) validate_row(t.def, r);
    committed = SnapshotVersion{++version_};
    t.rows.reserve(t.rows.size() + rows.size());
    for (auto& r : rows) {
      t.rows.push_back(std::move(r));
      t.versions.push_back(committed.value);
    }
  }
  notify({CatalogEvent::Kind::DataAppended, committed, std::nullopt});
  return committed;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

Value convert_field(const std::string& text, ColumnType type, const std::string& column) {
  try {
    switch (type) {
      case ColumnType::Int64: {
        size_t pos = 0;
        int64_t v = std::stoll(text, &pos);
        if (pos != text.size()) break;
        return v;
      }
      case ColumnType::Float64: {
        size_t pos = 0;
        double v = std::stod(text, &pos);
        if (pos != text.size()) break;
        return v;
      }
      case ColumnType::Bool:
        if (text == "true" || text == "TRUE" || text == "1") return true;
        if (text == "false" || text == "FALSE" || text == "0") return false;
        break;
      case ColumnType::Text: return text;
      case ColumnType::Vector: break;
    }
  } catch (const std::exception&) {
  }
  fail(ErrorCode::SchemaMismatch, "cannot read '" + text + "' as " + std::string(to_string(type)) + " for " + column);
}

}  // namespace

SnapshotVersion Catalog::load_csv(TableId table, std::istream& in) {
  const TableDef def = table_def(table);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::SchemaMismatch, "CSV is missing its header row");
  auto header = split_csv_line(line);
  if (header.size() != def.columns.size())
    fail(ErrorCode::SchemaMismatch, "CSV header has " + std::to_string(header.size()) + " columns, " + def.name +
                                        " has " + std::to_string(def.columns.size()));
  std::vector<int> ordinal_of_field;
  for (const auto& h : header) {
    int o = def.ordinal(h);
    if (o < 0) fail(ErrorCode::UnknownColumn, "CSV column " + h + " is not in " + def.name);
    ordinal_of_field.push_back(o);
  }
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      fail(ErrorCode::SchemaMismatch, "CSV row " + std::to_string(rows.size() + 2) + " has wrong arity");
    Row row(def.columns.size());
    for (size_t i = 0; i < fields.size(); ++i) {
      const auto& col = def.columns[ordinal_of_field[i]];
      row[ordinal_of_field[i]] = convert_field(fields[i], col.type, col.name);
    }
    rows.push_back(std::move(row));
  }
  return append_rows(table, std::move(rows));
}

SnapshotVersion Catalog::current_version() const {
  std::shared_lock lock(mu_);
  return SnapshotVersion{version_};
}

RowSet Catalog::scan(TableId table, SnapshotVersion snapshot, const std::vector<std::string>& projection,
                     const ExprPtr& predicate, const std::string& qualifier) const {
  std::shared_lock lock(mu_);
  if (table.value == 0 || table.value > tables_.size())
    fail(ErrorCode::UnknownTable, "table id " + std::to_string(table.value));
  if (snapshot.value > version_)
    fail(ErrorCode::FutureSnapshot, "snapshot " + std::to_string(snapshot.value) + " > current " +
                                        std::to_string(version_));
  const Table& t = *tables_[table.value - 1];
  const std::string q = qualifier.empty() ? t.def.name : qualifier;

  Schema full;
  for (const auto& c : t.def.columns) full.push_back({q, c.name, c.type});
  std::vector<int> cols;
  RowSet out;
  if (projection.empty()) {
    for (size_t i = 0; i < full.size(); ++i) cols.push_back(static_cast<int>(i));
  } else {
    for (const auto& p : projection) {
      int o = t.def.ordinal(p);
      if (o < 0) fail(ErrorCode::UnknownColumn, t.def.name + "." + p);
      cols.push_back(o);
    }
  }
  for (int c : cols) out.schema.push_back(full[c]);
  CompiledExpr pred(predicate, full);

  const size_t visible = static_cast<size_t>(
      std::upper_bound(t.versions.begin(), t.versions.end(), snapshot.value) - t.versions.begin());
  for (size_t i = 0; i < visible; ++i) {
    const Row& row = t.rows[i];
    if (!pred.test(row)) continue;
    Row r;
    r.reserve(cols.size());
    for (int c : cols) r.push_back(row[c]);
    out.push(std::move(r), t.versions[i]);
  }
  return out;
}

namespace {
size_t whitespace_tokens(const std::string& s) {
  size_t n = 0;
  bool in = false;
  for (char c : s) {
    bool space = std::isspace(static_cast<unsigned char>(c));
    if (!space && !in) ++n;
    in = !space;
  }
  return n;
}
}  // namespace

TableStats Catalog::stats(TableId table, SnapshotVersion snapshot) const {
  {
    std::lock_guard lock(stats_mu_);
    auto it = stats_cache_.find({table.value, snapshot.value});
    if (it != stats_cache_.end()) return it->second;
  }
  RowSet rs = scan(table, snapshot);
  TableStats st;
  st.row_count = rs.size();
  for (size_t c = 0; c < rs.schema.size(); ++c) {
    std::unordered_set<std::string> distinct;
    double tokens = 0;
    for (const auto& row : rs.rows) {
      distinct.insert(value_to_sql(row[c]));
      if (auto* s = std::get_if<std::string>(&row[c])) tokens += static_cast<double>(whitespace_tokens(*s));
      else tokens += 1;
    }
    st.columns.push_back({rs.schema[c].name, distinct.size(), rs.empty() ? 0.0 : tokens / rs.size()});
  }
  std::lock_guard lock(stats_mu_);
  stats_cache_[{table.value, snapshot.value}] = st;
  return st;
}

void Catalog::register_tenant(TenantPolicy policy) {
  std::unique_lock lock(mu_);
  std::string name = policy.tenant;
  tenants_[name] = std::move(policy);
}

bool Catalog::has_tenant(std::string_view tenant) const {
  std::shared_lock lock(mu_);
  return tenants_.find(tenant) != tenants_.end();
}

bool Catalog::check_access(std::string_view tenant, const AccessObject& object) const {
  std::shared_lock lock(mu_);
  auto it = tenants_.find(tenant);
  if (it == tenants_.end()) fail(ErrorCode::UnknownTenant, std::string(tenant));
  if (auto* col = std::get_if<TableColumn>(&object)) return it->second.allowed_columns.count(*col) > 0;
  return it->second.allowed_models.count(std::get<std::string>(object)) > 0;
}

TenantPolicy Catalog::policy(std::string_view tenant) const {
  std::shared_lock lock(mu_);
  auto it = tenants_.find(tenant);
  if (it == tenants_.end()) fail(ErrorCode::UnknownTenant, std::string(tenant));
  return it->second;
}

ModelRef Catalog::register_model(ModelRecord record) {
  ModelRef ref;
  {
    std::unique_lock lock(mu_);
    auto& versions = models_[record.name];
    record.version = versions.empty() ? 1 : versions.rbegin()->first + 1;
    ref = record.ref();
    dropped_models_.erase(record.name);
    versions.emplace(record.version, std::make_shared<const ModelRecord>(std::move(record)));
  }
  notify({CatalogEvent::Kind::ModelRegistered, current_version(), ref});
  return ref;
}

void Catalog::drop_model(std::string_view name) {
  ModelRef ref;
  {
    std::unique_lock lock(mu_);
    auto it = models_.find(std::string(name));
    if (it == models_.end() || dropped_models_.count(it->first)) fail(ErrorCode::UnknownModel, std::string(name));
    dropped_models_.insert(it->first);
    ref = it->second.rbegin()->second->ref();
  }
  notify({CatalogEvent::Kind::ModelDropped, current_version(), ref});
}

std::shared_ptr<const ModelRecord> Catalog::latest_model(std::string_view name) const {
  std::shared_lock lock(mu_);
  auto it = models_.find(std::string(name));
  if (it == models_.end() || it->second.empty() || dropped_models_.count(it->first)) return nullptr;
  return it->second.rbegin()->second;
}

std::shared_ptr<const ModelRecord> Catalog::model(const ModelRef& ref) const {
  std::shared_lock lock(mu_);
  auto it = models_.find(ref.name);
  if (it == models_.end()) return nullptr;
  auto v = it->second.find(ref.version);
  return v == it->second.end() ? nullptr : v->second;
}

std::optional<double> Catalog::model_quality(const ModelRef& ref, const std::string& key) const {
  std::shared_lock lock(mu_);
  auto rec = recorded_quality_.find({ref, key});
  if (rec != recorded_quality_.end()) return rec->second;
  auto it = models_.find(ref.name);
  if (it == models_.end()) return std::nullopt;
  auto v = it->second.find(ref.version);
  if (v == it->second.end()) return std::nullopt;
  auto q = v->second->quality_profile.find(key);
  if (q == v->second->quality_profile.end()) return std::nullopt;
  return q->second;
}

void Catalog::record_quality(const ModelRef& ref, const std::string& key, double quality) {
  std::unique_lock lock(mu_);
  recorded_quality_[{ref, key}] = quality;
}

void Catalog::subscribe(Listener listener) {
  std::lock_guard lock(listeners_mu_);
  listeners_.push_back(std::move(listener));
}

void Catalog::notify(const CatalogEvent& event) {
  std::vector<Listener> copy;
  {
    std::lock_guard lock(listeners_mu_);
    copy = listeners_;
  }
  for (const auto& l : copy) l(event);
}

}  // namespace neurq
