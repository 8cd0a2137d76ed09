#include <gtest/gtest.h>

#include <cmath>

#include "neurq/cache/cache_manager.hpp"
#include "neurq/common/error.hpp"

using namespace neurq;

namespace {

CacheKey key(const std::string& name, uint64_t snapshot = 1, std::optional<ModelRef> model = std::nullopt) {
  return {ArtifactKind::RelationalIntermediate, fnv1a_128(name), SnapshotVersion{snapshot}, std::move(model)};
}

TierConfig small_tiers() {
  TierConfig t;
  t.capacity_mb = {100, 400, 400};
  return t;
}

}  // namespace

TEST(Cache, PutIntoEmptyTopTier) {
  CacheManager cache(small_tiers());
  const PlacementReport r = cache.put(key("a"), 10, Tier::T0_accelerator);
  ASSERT_TRUE(r.tier.has_value());
  EXPECT_EQ(*r.tier, Tier::T0_accelerator);
  EXPECT_TRUE(r.moves.empty());
}

TEST(Cache, HighScoreEntryDemotesLowestScores) {
  CacheManager cache(small_tiers());
  // Ten 10MB entries with hit counts 1..10 fill T0.
  for (int i = 0; i < 10; ++i) cache.put(key("e" + std::to_string(i)), 10, Tier::T0_accelerator, {.initial_hits = uint64_t(i + 1), .payload = {}});
  const PlacementReport r = cache.put(key("big"), 30, Tier::T0_accelerator, {.initial_hits = 1000, .payload = {}});
  ASSERT_TRUE(r.tier.has_value());
  EXPECT_EQ(*r.tier, Tier::T0_accelerator);
  ASSERT_EQ(r.moves.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.moves[i].key, key("e" + std::to_string(i)));
    EXPECT_EQ(r.moves[i].from, Tier::T0_accelerator);
    ASSERT_TRUE(r.moves[i].to.has_value());
    EXPECT_EQ(*r.moves[i].to, Tier::T1_host);
  }
  EXPECT_EQ(r.demotions(), 3u);
  EXPECT_EQ(r.evictions(), 0u);
}

TEST(Cache, LargerThanEveryTierIsTooLarge) {
  CacheManager cache(small_tiers());
  try {
    cache.put(key("huge"), 500, Tier::T0_accelerator);
    FAIL() << "expected TooLarge";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooLarge);
  }
}

TEST(Cache, GetHitsMissesAndSnapshotKeys) {
  CacheManager cache(small_tiers());
  EXPECT_FALSE(cache.get(key("a")).has_value());
  cache.put(key("a"), 10, Tier::T1_host);
  const auto hit = cache.get(key("a"));
  ASSERT_TRUE(hit.has_value());
  EXPECT_EQ(hit->tier, Tier::T1_host);
  EXPECT_DOUBLE_EQ(hit->latency_ms, cache.read_latency(Tier::T1_host, 10));
  EXPECT_FALSE(cache.get(key("a", 2)).has_value());
}

TEST(Cache, InvalidateByModelAndSnapshot) {
  CacheManager cache(small_tiers());
  cache.put(key("a", 1, ModelRef{"m", 1}), 1, Tier::T0_accelerator);
  cache.put(key("b", 1, ModelRef{"m", 1}), 1, Tier::T0_accelerator);
  cache.put(key("c", 1, ModelRef{"m", 2}), 1, Tier::T0_accelerator);
  EXPECT_EQ(cache.invalidate([](const CacheKey& k) { return k.model == ModelRef{"m", 1}; }), 2u);
  EXPECT_TRUE(cache.contains(key("c", 1, ModelRef{"m", 2})));

  for (uint64_t s = 1; s <= 6; ++s) cache.put(key("s", s), 1, Tier::T1_host);
  // Entries at snapshots 1..4 (including "c") are older than 5.
  EXPECT_EQ(cache.invalidate([](const CacheKey& k) { return k.snapshot < SnapshotVersion{5}; }), 5u);
  EXPECT_EQ(cache.invalidate([](const CacheKey&) { return false; }), 0u);
  EXPECT_EQ(cache.snapshot_index()->size(), 2u);
}

TEST(Cache, ScoreFormula) {
  const BenefitDensityPolicy policy(0.99);
  CacheEntry a;
  a.access_count = 10;
  a.size_mb = 10;
  CacheEntry b = a;
  b.size_mb = 20;
  EXPECT_DOUBLE_EQ(policy.score(a, 0), 2 * policy.score(b, 0));

  CacheEntry zero = a;
  zero.access_count = 0;
  EXPECT_EQ(policy.score(zero, 0), 0.0);

  CacheEntry idle = a;
  idle.last_access = 0;
  CacheEntry fresh = a;
  fresh.last_access = 100;
  const double ratio = policy.score(idle, 100) / policy.score(fresh, 100);
  EXPECT_NEAR(ratio, std::pow(0.99, 100), 1e-12);
  EXPECT_NEAR(ratio, 0.366, 1e-3);
}

TEST(Cache, PinnedEntriesAreNeverEvicted) {
  TierConfig t;
  t.capacity_mb = {20, 1e-9, 1e-9};
  CacheManager cache(t);
  cache.put(key("pinned"), 20, Tier::T0_accelerator, {.pinned = true, .initial_hits = 1, .payload = {}});
  const PlacementReport r = cache.put(key("other"), 10, Tier::T0_accelerator, {.initial_hits = 1000, .payload = {}});
  EXPECT_FALSE(r.tier.has_value());
  EXPECT_TRUE(cache.contains(key("pinned")));
}

TEST(Cache, SnapshotIndexIsImmutable) {
  CacheManager cache(small_tiers());
  EXPECT_TRUE(cache.snapshot_index()->empty());
  cache.put(key("a"), 10, Tier::T0_accelerator);
  const auto view = cache.snapshot_index();
  cache.invalidate([](const CacheKey&) { return true; });
  EXPECT_NE(view->find(key("a")), nullptr);
  EXPECT_TRUE(cache.snapshot_index()->empty());
  EXPECT_FALSE(cache.get(key("a")).has_value());
}
