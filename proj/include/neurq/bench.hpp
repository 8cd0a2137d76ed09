#pragma once

#include <string>
#include <vector>

#include "neurq/session.hpp"

namespace neurq {

enum class SharingMode { PerTaskModel, SharedModel, Full, Baseline };
std::string_view to_string(SharingMode mode);
std::optional<SharingMode> parse_sharing_mode(std::string_view text);

struct BenchConfig {
  enum class Workload { R, T };
  Workload workload = Workload::R;
  size_t tenants = 1;
  size_t engines = 1;
  BatchPolicy policy = BatchPolicy::fixed(8, 10);
  SharingMode sharing = SharingMode::Full;
  bool sequential = false;  // admit one query at a time
  size_t rows = 20000;      // R: table rows; T: rows per tenant
  size_t queries = 32;      // R: total queries, spread over tenants; T: queries per tenant
  uint64_t seed = 7;
  Objective objective = Objective::min_latency(0.0);
  double export_latency_ms = 0.1;  // Baseline only, per AI dispatch
  double arrival_gap_ms = 0;       // spacing between query arrivals
  ExecutorConfig exec;             // budgets and other executor knobs

  static BenchConfig desk_r();
  static BenchConfig desk_t();
  /// Row counts at the published scales.
  static constexpr size_t kFullRowsR = 288600;
  static constexpr size_t kFullRowsT = 50000;

  void validate() const;
  std::string id() const;
};

struct BenchQuery {
  std::string tenant;
  std::string sql;
};

struct Workload {
  std::vector<BenchQuery> queries;
  std::vector<std::string> tables;
};

/// Creates users(1/20 of rows) and ratings(rows) with ten features (eight
/// context floats, user age and gender) and a rating that is linear in
/// them plus noise. Queries train on the viewer's demographic slice and
/// rank products, each with its own viewer id.
Workload gen_workload_r(Session& session, size_t rows, uint64_t seed, size_t queries = 32, size_t tenants = 1);

/// Creates one docs table per tenant with bimodal sentence lengths and a
/// shared hash embedder; every tenant issues the same embedding query over
/// its own table.
Workload gen_workload_t(Session& session, size_t rows_per_tenant, size_t tenants, uint64_t seed,
                        size_t queries_per_tenant = 1);

/// Order-sensitive digest of a table's rows at the current version.
std::string table_digest(const Catalog& catalog, const std::string& table);

struct BenchReport {
  BenchConfig config;
  Metrics metrics;
  double peak_memory_mb = 0;  // max over engines
  std::string to_json() const;
  std::string to_csv() const;  // header included
};

/// Builds the data, submits the queries and runs the virtual-time executor.
BenchReport run_bench(const BenchConfig& config);

}  // namespace neurq
