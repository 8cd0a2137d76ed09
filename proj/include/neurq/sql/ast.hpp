#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "neurq/catalog/catalog.hpp"
#include "neurq/common/expr.hpp"

namespace neurq::sql {

struct SelectStmt;
struct PredictBlock;

struct TableRef {
  enum class Kind { Base, Subquery, Predict };
  Kind kind = Kind::Base;
  std::string table;  // Base: table or CTE name
  std::string alias;  // empty when not given (Base only)
  std::shared_ptr<SelectStmt> subquery;
  std::shared_ptr<PredictBlock> predict;
  int line = 0;
  int column = 0;

  /// Name the relation's columns are qualified with.
  const std::string& qualifier() const { return alias.empty() ? table : alias; }
};

struct JoinClause {
  enum class Kind { Inner, Cross };
  Kind kind = Kind::Inner;
  TableRef right;
  ExprPtr on;  // Inner only
};

/// `first [JOIN ... ON ... | CROSS JOIN ... | , ...]*`. Comma joins are
/// stored as cross joins.
struct FromClause {
  TableRef first;
  std::vector<JoinClause> joins;
};

struct SelectItem {
  ExprPtr expr;
  std::string alias;
};

struct OrderItem {
  ExprPtr expr;
  bool desc = false;
};

struct CteDef {
  std::string name;
  std::shared_ptr<SelectStmt> query;
};

struct SelectStmt {
  std::vector<CteDef> ctes;
  std::vector<SelectItem> items;
  std::optional<FromClause> from;
  ExprPtr where;
  std::vector<ExprPtr> group_by;
  std::vector<OrderItem> order_by;
  std::optional<int64_t> limit;
};

/// PREDICT VALUE OF <target> WITH PRIMARY KEY <pk> FROM <from> [WHERE <expr>]
///   ( TRAIN ON <cols> | USING MODEL <name> )
struct PredictBlock {
  ExprPtr target;
  ExprPtr primary_key;
  FromClause from;
  ExprPtr where;
  std::vector<ExprPtr> train_on;  // empty for USING MODEL
  std::string model;              // empty for TRAIN ON

  bool uses_model() const { return !model.empty(); }
};

struct CreateModelStmt {
  std::string name;
  std::string kind;
  std::string table;
  std::vector<std::string> features;
  std::optional<std::string> target;
};

struct CreateTableStmt {
  TableDef def;
};

struct Statement {
  enum class Kind { Select, PredictSelect, CreateModel, DropModel, CreateTable };
  Kind kind = Kind::Select;
  std::shared_ptr<SelectStmt> select;
  CreateModelStmt create_model;
  std::string drop_model;
  CreateTableStmt create_table;
};

bool operator==(const TableRef& a, const TableRef& b);
bool operator==(const FromClause& a, const FromClause& b);
bool operator==(const SelectStmt& a, const SelectStmt& b);
bool operator==(const PredictBlock& a, const PredictBlock& b);
bool operator==(const CreateModelStmt& a, const CreateModelStmt& b);
/// Structural equality; source positions are ignored.
bool operator==(const Statement& a, const Statement& b);

bool contains_predict(const SelectStmt& s);

}  // namespace neurq::sql
