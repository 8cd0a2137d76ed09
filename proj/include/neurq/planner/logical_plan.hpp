#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "neurq/catalog/catalog.hpp"
#include "neurq/common/expr.hpp"
#include "neurq/common/hash.hpp"
#include "neurq/sql/binder.hpp"

namespace neurq {

enum class LogicalOp { Scan, Select, Project, Join, Aggregate, Sort, Limit, AITrain, AIInfer };
std::string_view to_string(LogicalOp op);

struct SortKey {
  ExprPtr expr;
  bool desc = false;
};

/// Model binding of an AI node.
struct AISpec {
  std::optional<ModelRef> model;  // registered model; nullopt for in-query training
  ModelKind kind = ModelKind::RidgeRegressor;
  std::vector<ColumnKey> features;  // resolved against the child schema
  std::vector<ColumnType> feature_types;
  std::vector<std::string> feature_names;  // names the model knows them by
  ColumnKey pk;
  std::optional<ColumnKey> target;  // label column (AITrain)
  std::string alias;                // qualifier of the AIInfer output
  std::string output_name;
  ColumnType output_type = ColumnType::Float64;
  std::vector<std::string> mask;  // permitted features; narrower ⇒ sliced model
  std::vector<ColumnKey> passthrough;  // extra child columns AIInfer forwards

  bool sliced() const { return mask.size() != feature_names.size(); }
};

struct LogicalNode;
using LogicalPtr = std::shared_ptr<const LogicalNode>;

/// One immutable plan node. Plans are DAGs of shared nodes; rewrites build
/// new nodes and reuse untouched subtrees.
struct LogicalNode {
  LogicalOp op = LogicalOp::Scan;
  std::vector<LogicalPtr> children;
  Schema schema;  // output columns

  // Scan
  TableId table;
  std::string table_name;
  std::string alias;
  std::vector<std::string> columns;  // base columns produced, in order

  ExprPtr predicate;            // Scan filter, Select predicate, Join condition (nullptr = cross)
  std::vector<ExprPtr> exprs;   // Project expressions, Aggregate group keys
  std::vector<ExprPtr> aggregates;  // Aggregate calls
  std::vector<SortKey> sort_keys;
  int64_t limit = 0;
  std::optional<AISpec> ai;
  std::optional<SnapshotVersion> snapshot;  // pin; set on every node by pin_snapshot
};

// Constructors compute the output schema.
LogicalPtr make_scan(TableId table, const TableDef& def, std::string alias, std::vector<std::string> columns,
                     ExprPtr predicate = nullptr);
LogicalPtr make_select(LogicalPtr child, ExprPtr predicate);
/// `names[i]` is the (qualifier, name) of output i; types are inferred.
LogicalPtr make_project(LogicalPtr child, std::vector<ExprPtr> exprs, std::vector<ColumnKey> names);
LogicalPtr make_join(LogicalPtr left, LogicalPtr right, ExprPtr condition);
LogicalPtr make_aggregate(LogicalPtr child, std::vector<ExprPtr> group_keys, std::vector<ExprPtr> aggregates);
LogicalPtr make_sort(LogicalPtr child, std::vector<SortKey> keys);
LogicalPtr make_limit(LogicalPtr child, int64_t limit);
LogicalPtr make_ai_train(LogicalPtr child, AISpec spec);
LogicalPtr make_ai_infer(LogicalPtr child, AISpec spec);

/// Copy of `node` with new children; the schema is recomputed.
LogicalPtr with_children(const LogicalPtr& node, std::vector<LogicalPtr> children);

/// Name of aggregate output i.
std::string aggregate_column(size_t i);

/// Applies `fn` to every node once, children first.
void visit(const LogicalPtr& plan, const std::function<void(const LogicalPtr&)>& fn);
size_t node_count(const LogicalPtr& plan);

/// The AITrain an AIInfer reads its model from: the first AITrain down
/// its single-input chain, or nullptr for registered models.
LogicalPtr training_source(const LogicalPtr& infer);

/// Lowers a bound SELECT. The plan is unpinned.
LogicalPtr lower(const sql::BoundStatement& bound);

/// Sets the snapshot pin on every node.
LogicalPtr pin_snapshot(const LogicalPtr& plan, SnapshotVersion snapshot);

/// 128-bit canonical content hash. Throws UnpinnedPlan when any node of
/// the subtree lacks a snapshot pin.
Hash128 fingerprint(const LogicalPtr& node);
/// Canonical text the fingerprint hashes (without pins when `with_pins` is false).
std::string canonical_form(const LogicalPtr& node, bool with_pins = true);

/// One operator per line, children indented two spaces, with fingerprint
/// prefix and pins when the plan is pinned.
std::string explain(const LogicalPtr& plan);

/// Structural equality (pointer equality not required).
bool plan_equal(const LogicalPtr& a, const LogicalPtr& b);

}  // namespace neurq
