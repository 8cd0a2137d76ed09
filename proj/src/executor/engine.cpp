#include "neurq/executor/engine.hpp"

#include <algorithm>

namespace neurq {

double EngineState::load() const {
  double l = running ? running->tokens : 0;
  for (const auto& t : queue) l += t.tokens;
  return l;
}

double EngineState::memory() const {
  double m = 0;
  for (const auto& [k, mb] : resident) m += mb;
  for (const auto& b : blocks) m += b.mb;
  if (running) m += running->state_mb;
  for (const auto& t : queue) m += t.state_mb;
  return m;
}

double EngineState::pressure() const { return std::max(load_fraction(), memory_fraction()); }

double EngineState::free_at(double now) const {
  double t = running ? std::max(now, running_end) : now;
  for (const auto& q : queue) t += q.cost + (q.needs_load ? q.load_cost : 0);
  return t;
}

bool EngineState::fits(const EngineTask& task) const {
  if (load() + task.tokens > token_budget) return false;
  const double weights = is_resident(task.model) ? 0 : task.weight_mb;
  return memory() + weights + task.state_mb <= memory_budget_mb;
}

void EngineState::assign(EngineTask task) {
  task.needs_load = !is_resident(task.model);
  if (task.needs_load) resident[task.model] = task.weight_mb;
  queue.push_back(std::move(task));
}

RebalanceReport rebalance(std::vector<EngineState>& engines, double threshold, double gap,
                          double transfer_ms_per_mb) {
  RebalanceReport report;
  if (engines.size() < 2) {
    for (const auto& e : engines)
      if (e.pressure() > threshold) report.no_capacity = true;
    return report;
  }
  for (int guard = 0; guard < 100000; ++guard) {
    EngineState* hot = nullptr;
    for (auto& e : engines)
      if (e.pressure() > threshold && (!hot || e.pressure() > hot->pressure())) hot = &e;
    if (!hot) break;
    EngineState* cold = nullptr;
    for (auto& e : engines)
      if (&e != hot && e.pressure() < threshold - gap && (!cold || e.pressure() < cold->pressure())) cold = &e;
    if (!cold) {
      report.no_capacity = true;
      break;
    }

    bool moved = false;
    // Queued tasks first, most recently assigned first.
    for (size_t i = hot->queue.size(); i-- > 0 && !moved;) {
      EngineTask task = hot->queue[i];
      task.needs_load = false;
      if (!cold->fits(task)) continue;
      EngineState probe = *cold;
      probe.assign(task);
      if (probe.pressure() >= threshold) continue;
      hot->queue.erase(hot->queue.begin() + static_cast<long>(i));
      cold->assign(task);
      report.moves.push_back({Migration::Kind::QueuedBatch, hot->id, cold->id, task.id, 0});
      moved = true;
    }
    // Then held state blocks, largest first.
    if (!moved && !hot->blocks.empty()) {
      std::vector<size_t> order(hot->blocks.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(),
                       [&](size_t a, size_t b) { return hot->blocks[a].mb > hot->blocks[b].mb; });
      for (size_t i : order) {
        const StateBlock blk = hot->blocks[i];
        if (cold->memory() + blk.mb > cold->memory_budget_mb) continue;
        if ((cold->memory() + blk.mb) / cold->memory_budget_mb >= threshold) continue;
        hot->blocks.erase(hot->blocks.begin() + static_cast<long>(i));
        cold->blocks.push_back(blk);
        report.moves.push_back({Migration::Kind::StateBlock, hot->id, cold->id, blk.query, blk.mb * transfer_ms_per_mb});
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  return report;
}

}  // namespace neurq
