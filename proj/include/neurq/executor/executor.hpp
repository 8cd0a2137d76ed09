#pragma once

#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "neurq/cache/cache_manager.hpp"
#include "neurq/catalog/catalog.hpp"
#include "neurq/executor/batching.hpp"
#include "neurq/executor/engine.hpp"
#include "neurq/optimizer/optimizer.hpp"
#include "neurq/runtime/model_runtime.hpp"

namespace neurq {

enum class RunMode { VirtualTime, RealTime };

struct ExecutorConfig {
  size_t engines = 1;
  double token_budget = 4096;       // per engine
  double memory_budget_mb = 16384;  // per engine
  BatchPolicy policy = BatchPolicy::fixed(8, 10);
  double overload_threshold = 0.8;
  double rebalance_gap = 0.2;
  double transfer_ms_per_mb = 0.2;
  size_t max_pending_queries = 100000;  // admission queue depth cap

  bool cse = true;            // share identical subplans across queries
  bool shared_model = true;   // false: every query gets its own model instance
  bool sequential = false;    // admit the next query only after the previous one finished
  double export_latency_ms = 0;  // coordinator time charged per AI dispatch (export-execute-import)
  bool materialize = false;   // put join/AI results into the cache

  // Fault injection for stress runs.
  double overload_rate = 0;   // chance a dispatch is refused as overloaded
  double fault_rate = 0;      // chance a finished batch faults and is re-queued
  double migrate_rate = 0;    // chance of a forced rebalance probe after a dispatch round
  uint64_t seed = 1;

  DbCosts db;
  InlineModelCosts inline_model;
  double real_time_scale = 0.01;  // wall ms per simulated ms in real-time mode

  void validate() const;
};

/// `key = value` lines; `#` starts a comment. Unknown keys are errors.
ExecutorConfig parse_executor_config(const std::string& text, ExecutorConfig base = {});
ExecutorConfig load_executor_config(const std::string& path, ExecutorConfig base = {});
/// Documented key list with current values, in the same format.
std::string describe_executor_config(const ExecutorConfig& config);

struct SnapshotAudit {
  SnapshotVersion pin;
  uint64_t max_train_version = 0;
  uint64_t max_infer_version = 0;
  size_t train_rows = 0;
  size_t infer_rows = 0;
  uint64_t max_result_version = 0;
};

struct QueryResult {
  uint64_t query = 0;
  std::string tenant;
  RowSet rows;
  double arrival_ms = 0;
  double completed_ms = 0;
  double transfer_ms = 0;  // state-block migration charged to this query
  SnapshotAudit audit;
  double latency() const { return completed_ms - arrival_ms; }
};

/// Per-query result slot, safe to await from any thread.
class QueryHandle {
 public:
  QueryHandle() = default;
  uint64_t id() const;
  bool ready() const;
  /// Blocks until the query finished; rethrows its error.
  const QueryResult& wait() const;

 private:
  friend class Executor;
  struct State {
    mutable std::mutex mu;
    mutable std::condition_variable cv;
    bool done = false;
    std::exception_ptr error;
    QueryResult result;
    uint64_t id = 0;
  };
  std::shared_ptr<State> state_;
};

struct LatencySummary {
  size_t queries = 0;
  double throughput_qpm = 0;
  double p50 = 0, p95 = 0, p99 = 0;
};

struct Metrics {
  std::string config_id;
  double makespan_ms = 0;
  size_t completed = 0;
  size_t failed = 0;
  LatencySummary overall;
  std::map<std::string, LatencySummary> tenants;

  size_t batches = 0;
  size_t items = 0;
  double tokens = 0;
  double padding = 0;  // Σ padding slots over all batches
  size_t exec_nodes = 0;     // distinct nodes executed
  size_t cse_hits = 0;       // node requests served by an existing shared node
  size_t cache_hits = 0;     // CacheRead nodes served from the cache
  size_t cache_fallbacks = 0;
  std::vector<double> peak_memory_mb;  // per engine
  size_t overloads = 0;
  size_t faults = 0;
  size_t migrations = 0;
  bool no_capacity = false;
  size_t budget_violations = 0;
  bool deadlock = false;
  std::string diagnostic;
  CacheStats cache;

  std::string to_json() const;
  /// `config_id,tenant,metric,value` rows (no header).
  std::string to_csv() const;
  static std::string csv_header() { return "config_id,tenant,metric,value\n"; }
};

/// Introspection of one shared exec-graph node.
struct SharedNodeInfo {
  uint64_t id = 0;
  PhysOp op;
  Hash128 key;
  Hash128 plan_id;  // physical subplan id; equal across queries sharing it
  size_t executions = 0;
  std::vector<uint64_t> consumers;  // queries that read this node
};

/// Runs physical plans over simulated engines. One coordinator owns the
/// exec graph, runs DB operators sequentially and dispatches AI work as
/// micro-batches; engines run in parallel.
class Executor {
 public:
  Executor(Catalog& catalog, const ModelRuntime& runtime, CacheManager* cache, ExecutorConfig config);
  ~Executor();

  /// Admits a plan; its snapshot pin is taken from the plan. `arrival_ms`
  /// is the virtual arrival time. Throws AdmissionRejected and UnpinnedPlan.
  QueryHandle submit(const PhysicalPtr& plan, const std::string& tenant, double arrival_ms = 0);

  Metrics run(RunMode mode = RunMode::VirtualTime);

  const ExecutorConfig& config() const { return config_; }
  /// Engine residency for optimizer admission.
  std::vector<EngineInfo> engine_info() const;
  std::vector<SharedNodeInfo> nodes() const;
  /// Execution counter of the node with subplan key `key` (0 when absent).
  size_t executions(const Hash128& key) const;
  /// Items dispatched per (query, node, row), for conservation audits.
  const std::map<std::tuple<uint64_t, uint64_t, size_t>, size_t>& item_dispatches() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ExecutorConfig config_;
};

}  // namespace neurq
