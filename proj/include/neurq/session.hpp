#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "neurq/cache/cache_manager.hpp"
#include "neurq/catalog/catalog.hpp"
#include "neurq/executor/executor.hpp"
#include "neurq/optimizer/optimizer.hpp"
#include "neurq/planner/logical_plan.hpp"
#include "neurq/planner/rewrites.hpp"
#include "neurq/runtime/model_runtime.hpp"
#include "neurq/sql/binder.hpp"

namespace neurq {

struct SessionConfig {
  ExecutorConfig exec;
  ProfileConfig profile;
  TierConfig cache;
  Objective objective = Objective::min_latency(0.0);
  bool rewrite = true;
  bool use_cache = true;
  /// Cost profiles given to CREATE MODEL, per kind.
  std::map<ModelKind, CostProfile> model_costs;
  std::map<ModelKind, std::vector<CostProfile>> staged_costs;

  SessionConfig();
};

/// Drops cache entries keyed to versions the catalog just superseded:
/// older snapshots after an append, older or dropped model versions after
/// a model change.
void connect_cache_invalidation(Catalog& catalog, CacheManager& cache);

struct PreparedQuery {
  LogicalPtr logical;   // lowered, pinned
  RewriteResult rewritten;
  std::vector<PhysicalPtr> candidates;
  PhysicalPtr physical;  // chosen, after cache substitution
  SnapshotVersion pin;
};

struct StatementResult {
  std::string message;  // DDL outcome
  std::optional<RowSet> rows;
  std::optional<Metrics> metrics;
};

/// One database: catalog, cache, model runtime and the query pipeline
/// parse → bind → lower → pin → rewrite → optimize → execute.
class Session {
 public:
  explicit Session(SessionConfig config = {});

  Catalog& catalog() { return *catalog_; }
  CacheManager& cache() { return *cache_; }
  const ModelRuntime& runtime() const { return *runtime_; }
  SessionConfig& config() { return config_; }

  OptimizerContext optimizer_context(const std::vector<EngineInfo>& engines = {}) const;

  PreparedQuery prepare(const std::string& sql, const sql::BindOptions& options = {},
                        std::optional<SnapshotVersion> pin = std::nullopt) const;

  /// Runs DDL directly; queries run alone on a fresh executor.
  StatementResult execute(const std::string& sql, const sql::BindOptions& options = {});

  std::string explain(const std::string& sql, const sql::BindOptions& options = {}) const;
  std::string explain_physical(const std::string& sql, const sql::BindOptions& options = {}) const;

 private:
  StatementResult create_model(const sql::Statement& stmt);

  SessionConfig config_;
  std::unique_ptr<Catalog> catalog_;
  std::unique_ptr<CacheManager> cache_;
  std::unique_ptr<ModelRuntime> runtime_;
};

}  // namespace neurq
