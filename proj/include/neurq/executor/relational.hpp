#pragma once

#include "neurq/optimizer/optimizer.hpp"

namespace neurq {

// Relational operator kernels used by the executor's coordinator. Every
// output row carries the newest commit version of the rows it came from.

RowSet exec_filter(const RowSet& in, const ExprPtr& predicate);
/// Evaluates `node.exprs` into `node.schema`.
RowSet exec_project(const RowSet& in, const LogicalNode& node);
/// `algo` is HashJoin, MergeJoin or NestedLoopJoin; the hash and merge
/// variants need at least one equi-key conjunct. Output schema is left ++ right.
RowSet exec_join(const RowSet& left, const RowSet& right, const ExprPtr& condition, PhysOp algo);
RowSet exec_aggregate(const RowSet& in, const LogicalNode& node);
RowSet exec_sort(const RowSet& in, const std::vector<SortKey>& keys);
RowSet exec_limit(const RowSet& in, int64_t limit);

}  // namespace neurq
