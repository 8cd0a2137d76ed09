#include "neurq/cache/cache_manager.hpp"

#include <algorithm>
#include <cmath>

#include "neurq/common/error.hpp"

namespace neurq {

std::string_view to_string(ArtifactKind kind) {
  switch (kind) {
    case ArtifactKind::RelationalIntermediate: return "relational";
    case ArtifactKind::Embedding: return "embedding";
    case ArtifactKind::ModelWeights: return "model_weights";
    case ArtifactKind::KVBlock: return "kv_block";
    case ArtifactKind::OptimizerState: return "optimizer_state";
  }
  return "?";
}

std::string_view to_string(Tier tier) {
  switch (tier) {
    case Tier::T0_accelerator: return "T0";
    case Tier::T1_host: return "T1";
    case Tier::T2_disk: return "T2";
  }
  return "?";
}

std::string CacheKey::to_string() const {
  std::string out = std::string(neurq::to_string(kind)) + ":" + fingerprint.hex().substr(0, 8) + "@s" +
                    std::to_string(snapshot.value);
  if (model) out += "/" + model->to_string();
  return out;
}

double BenefitDensityPolicy::score(const CacheEntry& entry, double now) const {
  const double idle = std::max(0.0, now - entry.last_access);
  return static_cast<double>(entry.access_count) * std::pow(decay_, idle) / entry.size_mb;
}

size_t PlacementReport::evictions() const {
  return static_cast<size_t>(std::count_if(moves.begin(), moves.end(), [](const Move& m) { return !m.to; }));
}

size_t PlacementReport::demotions() const { return moves.size() - evictions(); }

const CacheEntry* CacheIndex::find(const CacheKey& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

CacheManager::CacheManager(TierConfig config, std::shared_ptr<const EvictionPolicy> policy)
    : config_(config),
      policy_(policy ? std::move(policy) : std::make_shared<BenefitDensityPolicy>(config.decay_per_ms)),
      index_(std::make_shared<const CacheIndex>()) {
  for (size_t t = 0; t < kTiers; ++t)
    if (config_.capacity_mb[t] <= 0) fail(ErrorCode::InvalidConfig, "tier capacity must be positive");
}

bool CacheManager::place(CacheEntry entry, size_t start_tier, PlacementReport& report) {
  const double new_score = policy_->score(entry, now_);
  for (size_t t = start_tier; t < kTiers; ++t) {
    const double cap = config_.capacity_mb[t];
    if (entry.size_mb > cap) continue;
    double free = cap - used_[t];
    if (free + 1e-12 < entry.size_mb) {
      std::vector<std::pair<double, const CacheEntry*>> candidates;
      for (const auto& [k, e] : entries_) {
        if (static_cast<size_t>(e.tier) != t || e.pinned) continue;
        double s = policy_->score(e, now_);
        if (s < new_score) candidates.push_back({s, &e});
      }
      std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second->sequence < b.second->sequence;
      });
      double reclaimable = free;
      size_t take = 0;
      while (take < candidates.size() && reclaimable + 1e-12 < entry.size_mb) reclaimable += candidates[take++].second->size_mb;
      if (reclaimable + 1e-12 < entry.size_mb) continue;  // try the next tier down

      std::vector<std::pair<double, CacheEntry>> victims;
      for (size_t i = 0; i < take; ++i) victims.push_back({candidates[i].first, *candidates[i].second});
      for (auto& [s, v] : victims) {
        entries_.erase(v.key);
        used_[t] -= v.size_mb;
        const size_t moves_before = report.moves.size();
        report.moves.push_back({v.key, static_cast<Tier>(t), std::nullopt, s});
        if (t + 1 < kTiers) {
          if (place(v, t + 1, report)) {
            report.moves[moves_before].to = entries_.at(report.moves[moves_before].key).tier;
            ++stats_.demotions;
            continue;
          }
        }
        ++stats_.evictions;
      }
    }
    entry.tier = static_cast<Tier>(t);
    used_[t] += entry.size_mb;
    entries_[entry.key] = std::move(entry);
    return true;
  }
  return false;
}

PlacementReport CacheManager::put(const CacheKey& key, double size_mb, Tier preferred, PutOptions options) {
  if (size_mb <= 0) fail(ErrorCode::InvalidArgument, "cache entry size must be positive");
  const double largest = *std::max_element(config_.capacity_mb.begin(), config_.capacity_mb.end());
  if (size_mb > largest) fail(ErrorCode::TooLarge, key.to_string() + " needs " + std::to_string(size_mb) + "MB");

  PlacementReport report;
  {
    std::lock_guard lock(mu_);
    if (auto it = entries_.find(key); it != entries_.end()) {
      used_[static_cast<size_t>(it->second.tier)] -= it->second.size_mb;
      entries_.erase(it);
    }
    CacheEntry e;
    e.key = key;
    e.size_mb = size_mb;
    e.access_count = options.initial_hits;
    e.last_access = now_;
    e.pinned = options.pinned;
    e.sequence = next_sequence_++;
    e.payload = std::move(options.payload);
    if (place(std::move(e), static_cast<size_t>(preferred), report)) report.tier = entries_.at(key).tier;
  }
  publish();
  return report;
}

std::optional<CacheHit> CacheManager::get(const CacheKey& key) {
  bool promoted = false;
  std::optional<CacheHit> hit;
  {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      ++stats_.misses[static_cast<size_t>(key.kind)];
      return std::nullopt;
    }
    ++stats_.hits[static_cast<size_t>(key.kind)];
    CacheEntry& e = it->second;
    ++e.access_count;
    e.last_access = now_;
    hit = CacheHit{e.tier, read_latency(e.tier, e.size_mb), e.size_mb, e.payload};
    if (e.tier == Tier::T2_disk) {
      // Simple promotion: a disk hit moves to host memory if room can be made.
      CacheEntry copy = e;
      used_[2] -= e.size_mb;
      entries_.erase(it);
      PlacementReport report;
      if (!place(copy, 1, report)) {
        // place() always succeeds for T2 when it previously fit; keep the entry.
        copy.tier = Tier::T2_disk;
        used_[2] += copy.size_mb;
        entries_[copy.key] = copy;
      } else if (entries_.at(key).tier == Tier::T1_host) {
        ++stats_.promotions;
      }
      promoted = true;
    }
  }
  if (promoted) publish();
  return hit;
}

bool CacheManager::contains(const CacheKey& key) const {
  std::lock_guard lock(mu_);
  return entries_.count(key) > 0;
}

size_t CacheManager::invalidate(const std::function<bool(const CacheKey&)>& predicate) {
  size_t removed = 0;
  {
    std::lock_guard lock(mu_);
    for (auto it = entries_.begin(); it != entries_.end();) {
      if (predicate(it->first)) {
        used_[static_cast<size_t>(it->second.tier)] -= it->second.size_mb;
        it = entries_.erase(it);
        ++removed;
      } else {
        ++it;
      }
    }
    stats_.invalidations += removed;
  }
  if (removed) publish();
  return removed;
}

bool CacheManager::set_pinned(const CacheKey& key, bool pinned) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return false;
  it->second.pinned = pinned;
  return true;
}

void CacheManager::publish() {
  std::map<CacheKey, CacheEntry> copy;
  {
    std::lock_guard lock(mu_);
    copy = entries_;
  }
  auto index = std::make_shared<const CacheIndex>(std::move(copy));
  std::lock_guard lock(index_mu_);
  index_ = std::move(index);
}

std::shared_ptr<const CacheIndex> CacheManager::snapshot_index() const {
  std::lock_guard lock(index_mu_);
  return index_;
}

void CacheManager::set_time(double now_ms) {
  std::lock_guard lock(mu_);
  now_ = std::max(now_, now_ms);
}

double CacheManager::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

CacheStats CacheManager::stats() const {
  std::lock_guard lock(mu_);
  CacheStats s = stats_;
  s.occupancy_mb = used_;
  return s;
}

}  // namespace neurq
