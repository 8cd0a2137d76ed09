#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "neurq/catalog/catalog.hpp"
#include "neurq/sql/ast.hpp"

namespace neurq::sql {

/// Resolution of one PREDICT block.
struct BoundPredict {
  ModelKind kind = ModelKind::RidgeRegressor;
  std::optional<ModelRef> model;  // USING MODEL: latest version at bind time
  std::vector<ColumnKey> features;
  std::vector<ColumnType> feature_types;
  std::vector<std::string> feature_names;  // model feature names, in model order
  ColumnKey pk;
  ColumnType pk_type = ColumnType::Int64;
  std::optional<ColumnKey> target;  // training label (TRAIN ON only)
  std::string alias;
  std::string output_name;
  ColumnType output_type = ColumnType::Float64;
  /// Feature names the tenant may read; narrower than feature_names when
  /// the model must be sliced.
  std::vector<std::string> mask;
};

/// A statement whose column references are all qualified, whose
/// parameters are substituted by literals and whose `*` items are
/// expanded.
struct BoundStatement {
  Statement stmt;
  std::map<std::string, TableDef> tables;
  std::map<std::string, TableId> table_ids;
  std::map<const PredictBlock*, BoundPredict> predicts;
  /// Every base column reference resolved to (table, ordinal).
  std::map<TableColumn, std::pair<TableId, int>> base_columns;
  std::optional<std::string> tenant;
};

struct BindOptions {
  std::optional<std::string> tenant;
  /// Values for free identifiers such as `UID`.
  std::map<std::string, Value> parameters;
};

BoundStatement bind(const Statement& stmt, const Catalog& catalog, const BindOptions& options = {});

}  // namespace neurq::sql
