#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "neurq/common/types.hpp"

namespace neurq {

struct BatchPolicy {
  enum class Kind { Fixed, Bucket };
  Kind kind = Kind::Fixed;
  size_t max_items = 8;    // B
  double window_ms = 10;   // W
  /// Bucket only: item lengths < boundaries[0] fall in bucket 0, and so on.
  std::vector<size_t> boundaries{32};
  double merge_period_ms = 200;
  /// Boundaries are re-derived from the observed lengths as this many quantile buckets.
  size_t target_buckets = 4;

  static BatchPolicy fixed(size_t b, double w);
  static BatchPolicy bucket(std::vector<size_t> boundaries, size_t b, double w, double merge_period);
  /// Throws InvalidConfig.
  void validate() const;
};

/// One AI item waiting for a micro-batch.
struct PendingItem {
  uint64_t query = 0;   // admission sequence of the owning query
  uint64_t node = 0;    // exec node the item belongs to
  size_t row = 0;       // input row index within the node
  size_t length = 1;    // tokens (text kinds) or feature count
  double enqueued_ms = 0;
  uint64_t seq = 0;     // global arrival order
  std::string tenant;
  SnapshotVersion pin;
};

struct MicroBatch {
  uint64_t id = 0;
  std::string tenant;  // empty when items come from several tenants
  std::vector<PendingItem> items;
  std::string model;  // model instance key
  SnapshotVersion pin;
  std::optional<int> engine;  // placement constraint

  size_t tokens() const;
  /// Σ(max_len − len_i)
  size_t padding() const;
};

/// Length-aware or FIFO batch formation for one queue (one model, one pin,
/// one placement).
class Batcher {
 public:
  explicit Batcher(BatchPolicy policy = {});

  void add(PendingItem item);
  /// Batches ready at `now`. `drain` flushes partial batches at once
  /// because no producer can add more items. `max_tokens` caps Σ lengths.
  std::vector<std::vector<PendingItem>> take(double now, bool drain, size_t max_tokens = SIZE_MAX);
  /// Earliest time a partial batch expires, if any item is pending.
  std::optional<double> next_deadline() const;
  size_t pending() const;
  const std::vector<size_t>& boundaries() const { return policy_.boundaries; }
  const BatchPolicy& policy() const { return policy_; }

 private:
  size_t bucket_of(size_t length) const;
  void rebucket(double now);
  std::vector<PendingItem> pull(size_t bucket, size_t max_tokens);

  BatchPolicy policy_;
  std::vector<std::deque<PendingItem>> buckets_;
  std::vector<size_t> observed_;
  double last_merge_ = 0;
};

/// Stateless convenience over Batcher: every item is added at its
/// `enqueued_ms`, then ready batches at `now` are returned.
std::vector<std::vector<PendingItem>> form_batches(const std::vector<PendingItem>& queue, const BatchPolicy& policy,
                                                   double now, bool drain = false);

size_t padding_waste(const std::vector<PendingItem>& batch);

}  // namespace neurq
