#include <gtest/gtest.h>

#include "json.hpp"

#include "neurq/bench.hpp"

using namespace neurq;

TEST(Bench, SharingModeNames) {
  for (SharingMode m : {SharingMode::PerTaskModel, SharingMode::SharedModel, SharingMode::Full, SharingMode::Baseline})
    EXPECT_EQ(parse_sharing_mode(to_string(m)), m);
  EXPECT_FALSE(parse_sharing_mode("nope").has_value());
}

TEST(Bench, ConfigValidation) {
  BenchConfig c = BenchConfig::desk_r();
  EXPECT_NO_THROW(c.validate());
  c.engines = 0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(BenchConfig::kFullRowsR, 288600u);
  EXPECT_NE(BenchConfig::desk_r().id(), BenchConfig::desk_t().id());
}

TEST(Bench, WorkloadRIsDeterministic) {
  Session a, b, c;
  gen_workload_r(a, 1000, 1);
  gen_workload_r(b, 1000, 1);
  gen_workload_r(c, 1000, 2);
  EXPECT_EQ(table_digest(a.catalog(), "ratings"), table_digest(b.catalog(), "ratings"));
  EXPECT_NE(table_digest(a.catalog(), "ratings"), table_digest(c.catalog(), "ratings"));
  const TableId r = *a.catalog().find_table("ratings");
  EXPECT_EQ(a.catalog().scan(r, a.catalog().current_version()).size(), 1000u);
  // Ten features besides keys and label.
  EXPECT_GE(a.catalog().table_def(r).columns.size(), 10u);
}

TEST(Bench, WorkloadTShape) {
  Session s;
  const Workload w = gen_workload_t(s, 200, 8, 3);
  EXPECT_EQ(w.tables.size(), 8u);
  EXPECT_EQ(w.queries.size(), 8u);
  for (const std::string& t : w.tables) {
    const TableId id = *s.catalog().find_table(t);
    EXPECT_EQ(s.catalog().scan(id, s.catalog().current_version()).size(), 200u);
  }
}

TEST(Bench, SmallRunReportsMetrics) {
  BenchConfig c = BenchConfig::desk_t();
  c.rows = 100;
  c.tenants = 2;
  c.engines = 2;
  const BenchReport r = run_bench(c);
  EXPECT_EQ(r.metrics.completed, 2u);
  EXPECT_GT(r.metrics.overall.throughput_qpm, 0);
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_GT(j["metrics"]["overall"]["throughput_qpm"].get<double>(), 0);
  EXPECT_TRUE(j.contains("peak_memory_mb"));
  EXPECT_EQ(r.to_csv().rfind(Metrics::csv_header(), 0), 0u);
}

TEST(Bench, MoreEnginesNeverSlower) {
  double last = 0;
  for (size_t engines : {1, 2, 4}) {
    BenchConfig c = BenchConfig::desk_r();
    c.rows = 4000;
    c.queries = 8;
    c.engines = engines;
    const double qpm = run_bench(c).metrics.overall.throughput_qpm;
    EXPECT_GE(qpm, last * 0.999) << engines;
    last = qpm;
  }
}
