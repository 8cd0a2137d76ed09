#include <gtest/gtest.h>

#include <thread>

#include "neurq/executor/executor.hpp"
#include "neurq/sql/parser.hpp"
#include "support/fixtures.hpp"
#include "support/reference.hpp"

using namespace neurq;
namespace nt = neurq::testing;

namespace {

std::vector<PendingItem> items(const std::vector<size_t>& lengths, double at = 0) {
  std::vector<PendingItem> out;
  for (size_t i = 0; i < lengths.size(); ++i) {
    PendingItem it;
    it.row = i;
    it.length = lengths[i];
    it.enqueued_ms = at;
    it.seq = i;
    out.push_back(it);
  }
  return out;
}

std::vector<std::vector<size_t>> lengths_of(const std::vector<std::vector<PendingItem>>& batches) {
  std::vector<std::vector<size_t>> out;
  for (const auto& b : batches) {
    out.emplace_back();
    for (const PendingItem& it : b) out.back().push_back(it.length);
  }
  return out;
}

size_t total_padding(const std::vector<std::vector<PendingItem>>& batches) {
  size_t p = 0;
  for (const auto& b : batches) p += padding_waste(b);
  return p;
}

EngineTask task(uint64_t id, double tokens, std::string model = {}) {
  EngineTask t;
  t.id = id;
  t.tokens = tokens;
  t.cost = 1;
  t.model = std::move(model);
  return t;
}

}  // namespace

TEST(Batching, EmptyQueue) {
  EXPECT_TRUE(form_batches({}, BatchPolicy::fixed(2, 10), 100, true).empty());
}

TEST(Batching, FixedVersusBucketPadding) {
  const auto queue = items({10, 100, 10, 100});
  const auto fixed = form_batches(queue, BatchPolicy::fixed(2, 10), 0, true);
  EXPECT_EQ(lengths_of(fixed), (std::vector<std::vector<size_t>>{{10, 100}, {10, 100}}));
  EXPECT_EQ(total_padding(fixed), 180u);

  const auto bucket = form_batches(queue, BatchPolicy::bucket({50}, 2, 10, 1e9), 0, true);
  EXPECT_EQ(lengths_of(bucket), (std::vector<std::vector<size_t>>{{10, 10}, {100, 100}}));
  EXPECT_EQ(total_padding(bucket), 0u);
}

TEST(Batching, ExpiredWindowFillsFromAdjacentBucket) {
  const auto out = form_batches(items({10, 60}), BatchPolicy::bucket({50}, 2, 10, 1e9), 20, false);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(lengths_of(out)[0], (std::vector<size_t>{10, 60}));
  EXPECT_EQ(padding_waste(out[0]), 50u);
}

TEST(Batching, PartialBatchWaitsForWindow) {
  Batcher b(BatchPolicy::fixed(4, 10));
  for (const PendingItem& it : items({5, 5})) b.add(it);
  EXPECT_TRUE(b.take(5, false).empty());
  ASSERT_TRUE(b.next_deadline().has_value());
  EXPECT_DOUBLE_EQ(*b.next_deadline(), 10);
  EXPECT_EQ(b.take(10, false).size(), 1u);
  EXPECT_EQ(b.pending(), 0u);
}

TEST(Batching, InvalidPolicies) {
  EXPECT_THROW(BatchPolicy::fixed(0, 10).validate(), Error);
  EXPECT_THROW(BatchPolicy::bucket({50, 20}, 2, 10, 100).validate(), Error);
}

TEST(Engine, BudgetArithmeticAndResidency) {
  EngineState e;
  e.token_budget = 1000;
  EngineTask t = task(1, 100, "w");
  t.weight_mb = 10;
  ASSERT_TRUE(e.fits(t));
  e.assign(t);
  EXPECT_DOUBLE_EQ(e.load(), 100);
  EXPECT_TRUE(e.queue.back().needs_load);
  e.assign(task(2, 100, "w"));
  EXPECT_FALSE(e.queue.back().needs_load);
  EXPECT_FALSE(e.fits(task(3, 900)));
}

TEST(Engine, RebalanceRelievesHotEngine) {
  std::vector<EngineState> engines(2);
  for (int i = 0; i < 2; ++i) {
    engines[size_t(i)].id = i;
    engines[size_t(i)].token_budget = 1000;
  }
  engines[0].assign(task(1, 450));
  engines[0].assign(task(2, 500));
  engines[1].assign(task(3, 100));
  const RebalanceReport r = rebalance(engines, 0.8, 0.2, 0.2);
  EXPECT_FALSE(r.moves.empty());
  EXPECT_FALSE(r.no_capacity);
  for (const EngineState& e : engines) EXPECT_LT(e.pressure(), 0.8);
}

TEST(Engine, RebalanceNoOpAndNoCapacity) {
  std::vector<EngineState> even(2);
  even[0].token_budget = even[1].token_budget = 1000;
  even[0].assign(task(1, 500));
  even[1].assign(task(2, 500));
  const RebalanceReport calm = rebalance(even, 0.8, 0.2, 0.2);
  EXPECT_TRUE(calm.moves.empty());
  EXPECT_FALSE(calm.no_capacity);

  std::vector<EngineState> one(1);
  one[0].token_budget = 1000;
  one[0].assign(task(1, 950));
  const RebalanceReport r = rebalance(one, 0.8, 0.2, 0.2);
  EXPECT_TRUE(r.moves.empty());
  EXPECT_TRUE(r.no_capacity);
}

TEST(ExecutorConfig, ParseAndDescribe) {
  const ExecutorConfig c = parse_executor_config("engines = 4  # four\ncse = false\n\npolicy = bucket\n");
  EXPECT_EQ(c.engines, 4u);
  EXPECT_FALSE(c.cse);
  EXPECT_EQ(c.policy.kind, BatchPolicy::Kind::Bucket);
  EXPECT_THROW(parse_executor_config("bogus = 1"), Error);
  const ExecutorConfig again = parse_executor_config(describe_executor_config(c));
  EXPECT_EQ(again.engines, 4u);
  EXPECT_FALSE(again.cse);
}

class ExecutorTest : public ::testing::Test {
 protected:
  void SetUp() override { nt::load_rec_schema(session, 30, 600, 8); }

  PreparedQuery prepare(int64_t uid) { return session.prepare(nt::kRecQuery, {.tenant = {}, .parameters = {{"UID", uid}}}); }

  Session session;
};

TEST_F(ExecutorTest, SingleQueryMatchesReference) {
  const PreparedQuery q = prepare(4);
  Executor exec(session.catalog(), session.runtime(), nullptr, session.config().exec);
  QueryHandle h = exec.submit(q.physical, "t");
  const Metrics m = exec.run();
  EXPECT_EQ(m.completed, 1u);
  PipelineVariant variant = PipelineVariant::Direct;
  visit_physical(q.physical, [&](const PhysicalPtr& n) {
    if (n->op == PhysOp::AIInfer) variant = n->variant;
  });
  nt::Reference ref(session.catalog(), session.runtime(), session.config().exec.inline_model, variant);
  EXPECT_TRUE(nt::same_rows(h.wait().rows, ref.eval(q.rewritten.plan), 1e-9));
}

TEST_F(ExecutorTest, DifferentSnapshotsShareNothing) {
  const PreparedQuery a = prepare(4);
  session.catalog().append_rows(*session.catalog().find_table("ratings"), {{int64_t{1}, int64_t{100000}, 3.0}});
  const PreparedQuery b = prepare(4);
  ASSERT_NE(a.pin, b.pin);
  Executor exec(session.catalog(), session.runtime(), nullptr, session.config().exec);
  exec.submit(a.physical, "t");
  exec.submit(b.physical, "t");
  const Metrics m = exec.run();
  EXPECT_EQ(m.completed, 2u);
  EXPECT_EQ(m.cse_hits, 0u);
  for (const SharedNodeInfo& n : exec.nodes()) EXPECT_EQ(n.consumers.size(), 1u);
}

TEST_F(ExecutorTest, SameSeedSameMetrics) {
  const auto run_once = [&] {
    ExecutorConfig cfg = session.config().exec;
    cfg.engines = 2;
    cfg.overload_rate = 0.2;
    cfg.seed = 99;
    Executor exec(session.catalog(), session.runtime(), nullptr, cfg);
    for (int64_t uid : {1, 2, 3}) exec.submit(prepare(uid).physical, "t" + std::to_string(uid));
    return exec.run().to_json();
  };
  EXPECT_EQ(run_once(), run_once());
}

TEST_F(ExecutorTest, AdmissionQueueCap) {
  ExecutorConfig cfg = session.config().exec;
  cfg.max_pending_queries = 1;
  Executor exec(session.catalog(), session.runtime(), nullptr, cfg);
  const PreparedQuery q = prepare(2);
  exec.submit(q.physical, "t");
  try {
    exec.submit(q.physical, "t");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AdmissionRejected);
  }
}

TEST_F(ExecutorTest, UnpinnedPlanIsRejected) {
  const PreparedQuery q = prepare(2);
  auto unpinned = std::make_shared<PhysicalNode>(*q.physical);
  unpinned->logical = lower(sql::bind(sql::parse(nt::kRecQuery), session.catalog(),
                                      {.tenant = {}, .parameters = {{"UID", int64_t{2}}}}));
  Executor exec(session.catalog(), session.runtime(), nullptr, session.config().exec);
  EXPECT_THROW(exec.submit(unpinned, "t"), Error);
}

TEST_F(ExecutorTest, RealTimeModeCompletes) {
  ExecutorConfig cfg = session.config().exec;
  cfg.real_time_scale = 0.0001;
  Executor exec(session.catalog(), session.runtime(), nullptr, cfg);
  QueryHandle h = exec.submit(prepare(5).physical, "t");
  std::thread runner([&] { exec.run(RunMode::RealTime); });
  const QueryResult& r = h.wait();
  runner.join();
  EXPECT_LE(r.audit.max_result_version, r.audit.pin.value);
}
