#include <gtest/gtest.h>

#include <set>

#include "neurq/optimizer/optimizer.hpp"
#include "neurq/sql/parser.hpp"
#include "support/fixtures.hpp"

using namespace neurq;
namespace nt = neurq::testing;

namespace {

PhysicalPtr candidate(double latency, double quality, const std::string& text) {
  auto n = std::make_shared<PhysicalNode>();
  n->op = PhysOp::AIInfer;
  n->total = {latency, quality};
  n->self = n->total;
  n->text = text;
  n->id = fnv1a_128(text);
  return n;
}

class OptimizerTest : public ::testing::Test {
 protected:
  void SetUp() override { nt::load_rec_schema(session, 30, 400, 4); }

  LogicalPtr plan(const std::string& sql, sql::BindOptions opts = {}) {
    return pin_snapshot(lower(sql::bind(sql::parse(sql), session.catalog(), opts)), session.catalog().current_version());
  }

  Session session;
};

size_t count_op(const PhysicalPtr& p, PhysOp op) {
  size_t n = 0;
  visit_physical(p, [&](const PhysicalPtr& x) { n += x->op == op; });
  return n;
}

}  // namespace

TEST(Optimizer, ObjectiveParsing) {
  const Objective q = Objective::parse("quality>=0.9");
  EXPECT_EQ(q.mode, Objective::Mode::MinLatencyGivenQuality);
  EXPECT_DOUBLE_EQ(q.bound, 0.9);
  const Objective l = Objective::parse("latency<=100ms");
  EXPECT_EQ(l.mode, Objective::Mode::MaxQualityGivenLatency);
  EXPECT_DOUBLE_EQ(l.bound, 100);
  EXPECT_THROW(Objective::parse("speed>=1"), Error);
}

TEST(Optimizer, FullScanArithmetic) {
  DbCosts c;
  c.setup_ms = 1;
  c.per_row_ms = 0.01;
  EXPECT_DOUBLE_EQ(db_op_latency(PhysOp::FullScan, c, 1000), 11.0);
}

TEST(Optimizer, ResidencyAndTokenTerms) {
  CostProfile gen;
  gen.per_token = 0.1;
  // Eight items of lengths 10..80 sum to 360 tokens.
  EXPECT_NEAR(ai_batch_latency({gen}, 8, 360, 8, {false}, 50), 36.0, 1e-9);
  EXPECT_NEAR(ai_batch_latency({gen}, 8, 360, 8, {true}, 50) - ai_batch_latency({gen}, 8, 360, 8, {false}, 50), 50.0,
              1e-9);
}

TEST(Optimizer, ChooseExamples) {
  const std::vector<PhysicalPtr> c{candidate(10, 0.80, "direct"), candidate(30, 0.90, "staged")};
  EXPECT_EQ(choose(c, Objective::min_latency(0.85))->text, "staged");
  EXPECT_EQ(choose(c, Objective::max_quality(15))->text, "direct");
  try {
    choose(c, Objective::min_latency(0.95));
    FAIL();
  } catch (const InfeasibleError& e) {
    EXPECT_EQ(e.best(), (CostQuality{30, 0.90}));
  }
}

TEST(Optimizer, ChooseTieBreaksDeterministically) {
  const std::vector<PhysicalPtr> c{candidate(10, 0.9, "b"), candidate(10, 0.9, "a")};
  const PhysicalPtr first = choose(c, Objective::min_latency(0));
  const PhysicalPtr second = choose({c[1], c[0]}, Objective::min_latency(0));
  EXPECT_EQ(first, second);
}

TEST_F(OptimizerTest, JoinAlgorithmsAreEnumerated) {
  const LogicalPtr p = plan("SELECT u.user_id, r.rating FROM users u JOIN ratings r ON u.user_id = r.user_id");
  OptimizerContext ctx = session.optimizer_context({{0, {}}, {1, {}}});
  std::set<PhysOp> algos;
  for (const PhysicalPtr& c : enumerate_all(p, ctx))
    visit_physical(c, [&](const PhysicalPtr& n) {
      if (n->op == PhysOp::HashJoin || n->op == PhysOp::MergeJoin || n->op == PhysOp::NestedLoopJoin) algos.insert(n->op);
    });
  EXPECT_GE(algos.size(), 3u);
  // Hash inputs fit the memory model here, so the pruned frontier drops NLJ.
  for (const PhysicalPtr& c : enumerate_physical(p, ctx)) {
    EXPECT_EQ(count_op(c, PhysOp::NestedLoopJoin), 0u);
    EXPECT_DOUBLE_EQ(c->total.quality, 1.0);
  }
}

TEST_F(OptimizerTest, DirectAndStagedBothSurvive) {
  const LogicalPtr p = plan(nt::kRecQuery, {.tenant = {}, .parameters = {{"UID", int64_t{3}}}});
  const OptimizerContext ctx = session.optimizer_context();
  std::set<PipelineVariant> variants;
  for (const PhysicalPtr& c : enumerate_physical(p, ctx))
    visit_physical(c, [&](const PhysicalPtr& n) {
      if (n->op == PhysOp::AIInfer) variants.insert(n->variant);
    });
  EXPECT_EQ(variants.size(), 2u);
  const PhysicalPtr staged = choose(enumerate_physical(p, ctx), Objective::min_latency(0.9));
  EXPECT_GE(staged->total.quality, 0.9);
}

TEST_F(OptimizerTest, EstimateAgreesWithEnumeration) {
  const LogicalPtr p = plan("SELECT u.user_id, r.rating FROM users u JOIN ratings r ON u.user_id = r.user_id");
  const OptimizerContext ctx = session.optimizer_context();
  for (const PhysicalPtr& c : enumerate_physical(p, ctx)) {
    const CostQuality e = estimate(c, ctx);
    EXPECT_NEAR(e.latency, c->total.latency, 1e-9);
    EXPECT_DOUBLE_EQ(e.quality, c->total.quality);
  }
}

TEST_F(OptimizerTest, CacheSubstitution) {
  const LogicalPtr p = plan("SELECT u.user_id, r.rating FROM users u JOIN ratings r ON u.user_id = r.user_id");
  const OptimizerContext ctx = session.optimizer_context();
  const PhysicalPtr best = choose(enumerate_physical(p, ctx), Objective::min_latency(0));

  CacheManager cache;
  EXPECT_EQ(cache_aware_substitute(best, *cache.snapshot_index(), cache.config())->id, best->id);

  PhysicalPtr join;
  visit_physical(best, [&](const PhysicalPtr& n) {
    if (n->op == PhysOp::HashJoin || n->op == PhysOp::MergeJoin) join = n;
  });
  ASSERT_NE(join, nullptr);
  const auto key = materialization_key(*join);
  ASSERT_TRUE(key.has_value());

  CacheKey stale = *key;
  stale.snapshot = SnapshotVersion{key->snapshot.value - 1};
  cache.put(stale, 0.01, Tier::T0_accelerator);
  EXPECT_EQ(cache_aware_substitute(best, *cache.snapshot_index(), cache.config())->id, best->id);

  cache.put(*key, 0.01, Tier::T0_accelerator);
  const PhysicalPtr sub = cache_aware_substitute(best, *cache.snapshot_index(), cache.config());
  EXPECT_EQ(count_op(sub, PhysOp::CacheRead), 1u);
  EXPECT_LT(sub->total.latency, best->total.latency);
}

TEST_F(OptimizerTest, MissingStatsIsReported) {
  const LogicalPtr p = plan("SELECT user_age FROM users");
  OptimizerContext ctx = session.optimizer_context();
  ctx.stats = [](TableId, SnapshotVersion) -> std::optional<TableStats> { return std::nullopt; };
  try {
    enumerate_physical(p, ctx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingStats);
  }
}
