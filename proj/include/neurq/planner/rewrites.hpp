#pragma once

#include <functional>
#include <string>
#include <vector>

#include "neurq/planner/logical_plan.hpp"

namespace neurq {

/// Output-cardinality estimate of a subplan; used by AI pull-up over joins.
using CardinalityFn = std::function<double(const LogicalPtr&)>;

struct RewriteContext {
  CardinalityFn cardinality;  // pull-up over joins is skipped when empty
};

/// A rule returns nullptr when it does not apply at `node`.
struct RewriteRule {
  std::string name;
  std::function<LogicalPtr(const LogicalPtr& node, const RewriteContext& ctx)> apply;
};

struct RewriteStep {
  std::string rule;
  std::string before;  // operator summary of the rewritten node
  int pass = 0;
};

struct RewriteResult {
  LogicalPtr plan;
  std::vector<RewriteStep> trace;
};

RewriteRule predicate_pushdown_rule();
RewriteRule projection_pushdown_rule();
RewriteRule ai_pullup_rule();
RewriteRule constant_folding_rule();

/// Pushdowns, then pull-up, then folding.
std::vector<RewriteRule> default_rules();

/// Each rule runs to fixpoint in list order; the whole sequence repeats
/// until nothing fires, at most `max_passes` times. Returns the input
/// pointer unchanged when no rule fires.
RewriteResult apply_rewrites(const LogicalPtr& plan, const std::vector<RewriteRule>& rules,
                             const RewriteContext& ctx = {}, int max_passes = 10);

}  // namespace neurq
