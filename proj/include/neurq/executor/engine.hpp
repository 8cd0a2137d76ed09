#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace neurq {

/// A dispatched unit of engine work: an inference micro-batch or an
/// in-query training task.
struct EngineTask {
  uint64_t id = 0;
  double tokens = 0;    // counted against the token budget while assigned
  double cost = 0;      // execution time, excluding weight loading
  double state_mb = 0;  // activation state held while assigned
  std::string model;    // weight key; empty when no weights are needed
  double weight_mb = 0;
  double load_cost = 0;
  bool needs_load = false;  // set at assignment when weights were not resident
};

/// Per-query state held on an engine between batches (KV-style blocks).
struct StateBlock {
  uint64_t query = 0;
  double mb = 0;
};

struct EngineState {
  int id = 0;
  double token_budget = 4096;
  double memory_budget_mb = 16384;

  std::map<std::string, double> resident;  // weight key → MB
  std::optional<EngineTask> running;
  double running_end = 0;
  std::deque<EngineTask> queue;
  std::vector<StateBlock> blocks;

  double load() const;  // tokens of running and queued tasks
  double memory() const;
  double load_fraction() const { return token_budget > 0 ? load() / token_budget : 0; }
  double memory_fraction() const { return memory_budget_mb > 0 ? memory() / memory_budget_mb : 0; }
  /// Pressure used by rebalancing: the larger of the two fractions.
  double pressure() const;
  bool idle() const { return !running && queue.empty(); }
  /// Time the engine finishes everything assigned, given `now`.
  double free_at(double now) const;
  bool is_resident(const std::string& model) const { return model.empty() || resident.count(model) > 0; }
  /// Whether `task` fits the token and memory budgets.
  bool fits(const EngineTask& task) const;
  /// Assigns `task` to the local queue, loading weights if needed.
  void assign(EngineTask task);
};

struct Migration {
  enum class Kind { QueuedBatch, StateBlock };
  Kind kind;
  int from = 0;
  int to = 0;
  uint64_t id = 0;  // task id or query id
  double transfer_ms = 0;
};

struct RebalanceReport {
  std::vector<Migration> moves;
  bool no_capacity = false;  // some engine is overloaded and no engine can take work
};

/// Moves queued tasks, then state blocks, from engines above `threshold`
/// pressure to the least-loaded engine below `threshold − gap`. Moves that
/// would lift the target above the threshold are skipped.
RebalanceReport rebalance(std::vector<EngineState>& engines, double threshold, double gap,
                          double transfer_ms_per_mb);

}  // namespace neurq
