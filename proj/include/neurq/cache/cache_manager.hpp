#pragma once

#include <any>
#include <array>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "neurq/common/hash.hpp"
#include "neurq/common/types.hpp"

namespace neurq {

enum class ArtifactKind { RelationalIntermediate, Embedding, ModelWeights, KVBlock, OptimizerState };
inline constexpr size_t kArtifactKinds = 5;
std::string_view to_string(ArtifactKind kind);

enum class Tier { T0_accelerator = 0, T1_host = 1, T2_disk = 2 };
inline constexpr size_t kTiers = 3;
std::string_view to_string(Tier tier);

struct CacheKey {
  ArtifactKind kind = ArtifactKind::RelationalIntermediate;
  Hash128 fingerprint;
  SnapshotVersion snapshot;
  std::optional<ModelRef> model;

  auto operator<=>(const CacheKey&) const = default;
  std::string to_string() const;
};

struct CacheEntry {
  CacheKey key;
  double size_mb = 0;
  Tier tier = Tier::T1_host;
  uint64_t access_count = 0;
  double last_access = 0;  // virtual ms
  bool pinned = false;
  uint64_t sequence = 0;  // insertion order, breaks score ties
  std::any payload;
};

struct TierConfig {
  std::array<double, kTiers> capacity_mb{4096, 16384, 65536};
  std::array<double, kTiers> read_cost_ms_per_mb{0.01, 0.1, 1.0};
  double transfer_cost_ms_per_mb = 0.2;
  double decay_per_ms = 0.99;
};

/// Plug-in seam for eviction scoring: higher score = keep.
class EvictionPolicy {
 public:
  virtual ~EvictionPolicy() = default;
  virtual double score(const CacheEntry& entry, double now) const = 0;
};

/// (access_count × decay^(now − last_access)) / size
class BenefitDensityPolicy final : public EvictionPolicy {
 public:
  explicit BenefitDensityPolicy(double decay_per_ms) : decay_(decay_per_ms) {}
  double score(const CacheEntry& entry, double now) const override;

 private:
  double decay_;
};

struct PlacementReport {
  std::optional<Tier> tier;  // nullopt: nothing could make room, entry not cached
  struct Move {
    CacheKey key;
    Tier from;
    std::optional<Tier> to;  // nullopt = evicted from the cache
    double score = 0;
  };
  std::vector<Move> moves;  // in the order they happened

  size_t evictions() const;
  size_t demotions() const;
};

struct CacheHit {
  Tier tier;
  double latency_ms = 0;
  double size_mb = 0;
  std::any payload;
};

struct PutOptions {
  bool pinned = false;
  uint64_t initial_hits = 1;
  std::any payload;
};

struct CacheStats {
  std::array<double, kTiers> occupancy_mb{};
  std::array<uint64_t, kArtifactKinds> hits{};
  std::array<uint64_t, kArtifactKinds> misses{};
  uint64_t evictions = 0;
  uint64_t demotions = 0;
  uint64_t promotions = 0;
  uint64_t invalidations = 0;
};

/// Immutable point-in-time view of the cache contents.
class CacheIndex {
 public:
  CacheIndex() = default;
  explicit CacheIndex(std::map<CacheKey, CacheEntry> entries) : entries_(std::move(entries)) {}

  const CacheEntry* find(const CacheKey& key) const;
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::map<CacheKey, CacheEntry>& entries() const { return entries_; }

 private:
  std::map<CacheKey, CacheEntry> entries_;
};

/// Unified multi-tier cache for relational intermediates and AI artifacts.
/// Keys are exact-match; validity is carried by the snapshot/model fields
/// and enforced through invalidate().
class CacheManager {
 public:
  explicit CacheManager(TierConfig config = {}, std::shared_ptr<const EvictionPolicy> policy = nullptr);

  PlacementReport put(const CacheKey& key, double size_mb, Tier preferred, PutOptions options = {});
  std::optional<CacheHit> get(const CacheKey& key);
  /// Presence check that does not count as an access.
  bool contains(const CacheKey& key) const;
  size_t invalidate(const std::function<bool(const CacheKey&)>& predicate);
  bool set_pinned(const CacheKey& key, bool pinned);

  double score(const CacheEntry& entry, double now) const { return policy_->score(entry, now); }

  std::shared_ptr<const CacheIndex> snapshot_index() const;

  void set_time(double now_ms);
  double now() const;

  CacheStats stats() const;
  const TierConfig& config() const { return config_; }
  double read_latency(Tier tier, double size_mb) const { return config_.read_cost_ms_per_mb[static_cast<size_t>(tier)] * size_mb; }

 private:
  bool place(CacheEntry entry, size_t start_tier, PlacementReport& report);
  void publish();

  TierConfig config_;
  std::shared_ptr<const EvictionPolicy> policy_;

  mutable std::mutex mu_;
  std::map<CacheKey, CacheEntry> entries_;
  std::array<double, kTiers> used_{};
  double now_ = 0;
  uint64_t next_sequence_ = 0;
  CacheStats stats_;

  mutable std::mutex index_mu_;
  std::shared_ptr<const CacheIndex> index_;
};

}  // namespace neurq
