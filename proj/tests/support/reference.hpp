#pragma once

#include "neurq/catalog/catalog.hpp"
#include "neurq/optimizer/optimizer.hpp"
#include "neurq/planner/logical_plan.hpp"
#include "neurq/runtime/model_runtime.hpp"

namespace neurq::testing {

/// Naive interpreter for logical plans, written separately from the
/// executor: scans read whole tables and filter afterwards, every join is
/// a nested loop, grouping is a linear search and AI nodes run one
/// unbatched inference call. Plans must be pinned.
class Reference {
 public:
  Reference(const Catalog& catalog, const ModelRuntime& runtime, InlineModelCosts costs = {},
            PipelineVariant variant = PipelineVariant::Direct)
      : catalog_(catalog), runtime_(runtime), costs_(std::move(costs)), variant_(variant) {}

  RowSet eval(const LogicalPtr& plan);

 private:
  RowSet scan(const LogicalNode& n);
  RowSet join(const LogicalNode& n, const RowSet& l, const RowSet& r);
  RowSet aggregate(const LogicalNode& n, const RowSet& in);
  RowSet train(const LogicalNode& n, const RowSet& in);
  RowSet infer(const LogicalNode& n, const RowSet& in);

  const Catalog& catalog_;
  const ModelRuntime& runtime_;
  InlineModelCosts costs_;
  PipelineVariant variant_;
  std::map<const LogicalNode*, std::shared_ptr<const LoadedModel>> trained_;
};

/// Multiset equality with a relative tolerance on floating values.
bool same_rows(const RowSet& a, const RowSet& b, double tol = 0.0);

}  // namespace neurq::testing
