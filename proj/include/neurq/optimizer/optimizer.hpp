#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "neurq/cache/cache_manager.hpp"
#include "neurq/catalog/catalog.hpp"
#include "neurq/common/error.hpp"
#include "neurq/planner/logical_plan.hpp"
#include "neurq/planner/rewrites.hpp"
#include "neurq/runtime/model_runtime.hpp"

namespace neurq {

struct CostQuality {
  double latency = 0;  // simulated ms
  double quality = 1;  // [0, 1]
  bool operator==(const CostQuality&) const = default;
};

struct Objective {
  enum class Mode { MinLatencyGivenQuality, MaxQualityGivenLatency };
  Mode mode = Mode::MinLatencyGivenQuality;
  double bound = 0;  // q_min or l_max

  static Objective min_latency(double q_min);
  static Objective max_quality(double l_max_ms);
  /// `quality>=0.9` or `latency<=100ms`.
  static Objective parse(std::string_view text);
  std::string to_string() const;
};

enum class PhysOp {
  FullScan,
  FilteredScan,
  Filter,
  Project,
  HashJoin,
  MergeJoin,
  NestedLoopJoin,
  HashAggregate,
  Sort,
  Limit,
  AITrain,
  AIInfer,
  CacheRead,
};
std::string_view to_string(PhysOp op);

struct PhysicalNode;
using PhysicalPtr = std::shared_ptr<const PhysicalNode>;

struct PhysicalNode {
  PhysOp op = PhysOp::FullScan;
  LogicalPtr logical;  // the logical node this implements
  std::vector<PhysicalPtr> children;

  // AI choices
  PipelineVariant variant = PipelineVariant::Direct;
  std::optional<int> engine;  // placement; nullopt = any engine
  size_t batch_hint = 0;

  double rows = 0;  // estimated output cardinality
  CostQuality self;
  CostQuality total;  // subtree
  size_t nodes = 1;   // physical nodes in the subtree

  // CacheRead
  std::optional<CacheKey> cache_key;
  Tier tier = Tier::T1_host;
  double size_mb = 0;
  PhysicalPtr fallback;  // recompute path when the entry is gone at run time

  std::string text;  // canonical text of the subtree, including choices
  Hash128 id;        // hash of `text`
};

/// Shared DB operator constants: latency = setup + per_row × work.
struct DbCosts {
  double setup_ms = 0.05;
  double per_row_ms = 0.0002;
  double hash_build_factor = 2.0;  // per build row, relative to per_row
  double merge_factor = 1.0;       // per n·log2(n) sort step
  double nlj_pair_ms = 0.00005;    // per pair compared
  double hash_memory_mb = 64;      // hash join build-side budget
  double row_bytes = 64;           // footprint of one row for the budget check
};

/// Latency of one DB operator: setup + per_row × work, with the work term
/// chosen by algorithm. `left`/`right` are input cardinalities (for scans,
/// `left` is the number of rows read).
double db_op_latency(PhysOp op, const DbCosts& costs, double left, double right = 0, int64_t limit = 0);

struct EngineInfo {
  int id = 0;
  std::set<std::string> resident;  // weight keys already loaded (see weights_key)
};

/// Constants for in-query (AI-Train) models, which have no catalog record.
/// Defaults: training is a closed-form solve; the staged pipeline runs
/// three stages at a higher total cost than the direct one.
struct InlineModelCosts {
  CostProfile train{.batch_setup = 1.0, .per_item = 0.004, .weight_size_mb = 8};
  std::vector<CostProfile> staged_train{{.batch_setup = 1.0, .per_item = 0.004, .weight_size_mb = 8},
                                        {.batch_setup = 0.5, .per_item = 0.003, .weight_size_mb = 4},
                                        {.batch_setup = 0.2, .per_item = 0.001, .weight_size_mb = 1}};
  CostProfile infer{.load_cost = 2.0, .batch_setup = 0.3, .per_item = 0.02, .weight_size_mb = 8};
  std::vector<CostProfile> staged_infer{{.load_cost = 2.0, .batch_setup = 0.3, .per_item = 0.02, .weight_size_mb = 8},
                                        {.load_cost = 1.0, .batch_setup = 0.2, .per_item = 0.015, .weight_size_mb = 4},
                                        {.load_cost = 0.5, .batch_setup = 0.1, .per_item = 0.005, .weight_size_mb = 1}};
  double quality_direct = 0.80;
  double quality_staged = 0.90;
};

using StatsFn = std::function<std::optional<TableStats>(TableId, SnapshotVersion)>;

struct OptimizerContext {
  DbCosts db;
  InlineModelCosts inline_model;
  std::vector<EngineInfo> engines;
  size_t batch_items = 8;
  double generative_expansion = 1.0;
  StatsFn stats;
  const Catalog* catalog = nullptr;  // registered models and their profiles
  size_t frontier_cap = 32;
};

StatsFn catalog_stats(const Catalog& catalog);

/// Weight key of a registered model under a feature mask.
std::string weights_key(const ModelRef& model, const std::vector<std::string>& mask);

/// Estimated output rows of a logical subplan. Throws MissingStats.
double estimate_rows(const LogicalPtr& plan, const OptimizerContext& ctx);
/// Adapter for rewrite rules that want cardinalities.
CardinalityFn cardinality_fn(const OptimizerContext& ctx);

/// Latency of `items` inference items totalling `tokens` tokens, split
/// into batches of `batch_items` and placed greedily (earliest finish)
/// over `engines` engines. `cold[e]` adds `load_cost` on first use.
double ai_batch_latency(const std::vector<CostProfile>& stages, size_t items, double tokens, size_t batch_items,
                        const std::vector<bool>& cold, double load_cost);

/// Per-node alternatives combined bottom-up with Pareto pruning.
std::vector<PhysicalPtr> enumerate_physical(const LogicalPtr& plan, const OptimizerContext& ctx);
/// Every complete physical plan, without pruning. Exponential; for tests.
std::vector<PhysicalPtr> enumerate_all(const LogicalPtr& plan, const OptimizerContext& ctx);

/// Re-estimates a physical plan bottom-up. Throws MissingStats and MissingProfile.
CostQuality estimate(const PhysicalPtr& plan, const OptimizerContext& ctx);

/// Strict total order used by choose(): true when `a` ranks before `b`.
bool ranks_before(const PhysicalPtr& a, const PhysicalPtr& b, const Objective& objective);

/// Throws InfeasibleError when no candidate meets the bound.
PhysicalPtr choose(const std::vector<PhysicalPtr>& candidates, const Objective& objective);

class InfeasibleError : public Error {
 public:
  InfeasibleError(CostQuality best, const std::string& message)
      : Error(ErrorCode::Infeasible, message), best_(best) {}
  CostQuality best() const { return best_; }

 private:
  CostQuality best_;
};

/// Cache key under which the executor materializes the result of `node`,
/// or nullopt when the node is never materialized. AI results are keyed
/// by pipeline variant as well.
std::optional<CacheKey> materialization_key(const PhysicalNode& node);
std::optional<CacheKey> materialization_key(const LogicalPtr& node);

/// Replaces maximal subplans found in `index` with CacheRead leaves when
/// that does not raise the estimate.
PhysicalPtr cache_aware_substitute(const PhysicalPtr& plan, const CacheIndex& index, const TierConfig& tiers);

/// Operator tree with per-node (latency, quality) and plan total.
std::string explain_physical(const PhysicalPtr& plan);

/// Walks the physical plan children first.
void visit_physical(const PhysicalPtr& plan, const std::function<void(const PhysicalPtr&)>& fn);

}  // namespace neurq
