#include <gtest/gtest.h>

#include <sstream>

#include "neurq/cache/cache_manager.hpp"
#include "neurq/catalog/catalog.hpp"
#include "neurq/common/error.hpp"
#include "neurq/session.hpp"

using namespace neurq;

namespace {

TableDef users_def() {
  return {"users", {{"user_id", ColumnType::Int64}, {"user_age", ColumnType::Int64}, {"user_gender", ColumnType::Text}},
          "user_id"};
}

TableDef ratings_def() {
  return {"ratings", {{"user_id", ColumnType::Int64}, {"product_id", ColumnType::Int64}, {"rating", ColumnType::Float64}},
          "product_id"};
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Catalog, FirstTableGetsIdOne) {
  Catalog c;
  EXPECT_EQ(c.create_table(users_def()).value, 1u);
  EXPECT_EQ(code_of([&] { c.create_table(users_def()); }), ErrorCode::DuplicateTable);
}

TEST(Catalog, EmptyTableScansToZeroRows) {
  Catalog c;
  const TableId r = c.create_table(ratings_def());
  EXPECT_EQ(c.scan(r, c.current_version()).size(), 0u);
}

TEST(Catalog, AppendBumpsVersionAndHidesFromOlderSnapshots) {
  Catalog c;
  const TableId u = c.create_table(users_def());
  // Walk the version to 7 first.
  for (int i = 0; i < 7; ++i) c.append_rows(u, {{int64_t{100 + i}, int64_t{30}, std::string("f")}});
  ASSERT_EQ(c.current_version().value, 7u);
  const TableId r = c.create_table(ratings_def());
  const SnapshotVersion v = c.append_rows(r, {{int64_t{1}, int64_t{1}, 1.0}, {int64_t{1}, int64_t{2}, 2.0},
                                              {int64_t{2}, int64_t{3}, 3.0}});
  EXPECT_EQ(v.value, 8u);
  EXPECT_EQ(c.scan(r, SnapshotVersion{7}).size(), 0u);
  EXPECT_EQ(c.scan(r, SnapshotVersion{8}).size(), 3u);
}

TEST(Catalog, ScanAfterTwoAppends) {
  Catalog c;
  const TableId r = c.create_table(ratings_def());
  c.append_rows(r, {{int64_t{1}, int64_t{1}, 1.0}, {int64_t{1}, int64_t{2}, 2.0}});
  const SnapshotVersion v = c.append_rows(r, {{int64_t{1}, int64_t{3}, 1.0}, {int64_t{1}, int64_t{4}, 2.0},
                                              {int64_t{2}, int64_t{5}, 3.0}});
  const RowSet rs = c.scan(r, v);
  ASSERT_EQ(rs.size(), 5u);
  // Per-row version tags agree with visibility at v-1.
  size_t older = 0;
  for (uint64_t tag : rs.versions) older += tag <= v.value - 1;
  EXPECT_EQ(c.scan(r, SnapshotVersion{v.value - 1}).size(), older);
}

TEST(Catalog, WrongArityIsSchemaMismatch) {
  Catalog c;
  const TableId u = c.create_table(users_def());
  EXPECT_EQ(code_of([&] { c.append_rows(u, {{int64_t{1}, int64_t{2}}}); }), ErrorCode::SchemaMismatch);
  EXPECT_EQ(code_of([&] { c.append_rows(u, {{std::string("x"), int64_t{2}, std::string("f")}}); }),
            ErrorCode::SchemaMismatch);
  EXPECT_EQ(c.current_version().value, 0u);
}

TEST(Catalog, BetweenPredicateMatchesBruteForceFilter) {
  Catalog c;
  const TableId u = c.create_table(users_def());
  std::vector<Row> rows;
  for (int64_t i = 0; i < 500; ++i) rows.push_back({i, (i * 37) % 71, std::string(i % 2 ? "m" : "f")});
  const SnapshotVersion v = c.append_rows(u, rows);
  size_t expected = 0;
  for (const Row& row : rows) {
    const int64_t age = std::get<int64_t>(row[1]);
    expected += age >= 20 && age <= 40;
  }
  const ExprPtr pred = make_between(make_column("users", "user_age"), make_literal(int64_t{20}), make_literal(int64_t{40}));
  const RowSet rs = c.scan(u, v, {"user_id"}, pred);
  EXPECT_EQ(rs.size(), expected);
  EXPECT_EQ(rs.schema.size(), 1u);
}

TEST(Catalog, CsvLoadUsesDeclaredTypes) {
  Catalog c;
  const TableId r = c.create_table(ratings_def());
  std::istringstream in("user_id,product_id,rating\n1,10,4.5\n2,11,3\n");
  const SnapshotVersion v = c.load_csv(r, in);
  const RowSet rs = c.scan(r, v);
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_DOUBLE_EQ(std::get<double>(rs.rows[1][2]), 3.0);
}

TEST(Catalog, AccessChecks) {
  Catalog c;
  c.create_table(users_def());
  c.create_table(ratings_def());
  c.register_tenant({"empty", {}, {}});
  c.register_tenant({"t", {{"ratings", "rating"}}, {"m"}});
  EXPECT_FALSE(c.check_access("empty", TableColumn{"ratings", "rating"}));
  EXPECT_FALSE(c.check_access("empty", std::string("m")));
  EXPECT_TRUE(c.check_access("t", TableColumn{"ratings", "rating"}));
  EXPECT_FALSE(c.check_access("t", TableColumn{"users", "user_age"}));
  EXPECT_TRUE(c.check_access("t", std::string("m")));
}

TEST(Catalog, PolicyOverTenFeaturesMinusTwo) {
  Catalog c;
  TableDef def{"frappe", {{"id", ColumnType::Int64}}, "id"};
  for (int i = 0; i < 10; ++i) def.columns.push_back({"f" + std::to_string(i), ColumnType::Float64});
  c.create_table(def);
  TenantPolicy p{"t", {}, {}};
  for (int i = 0; i < 10; ++i)
    if (i != 3 && i != 7) p.allowed_columns.insert({"frappe", "f" + std::to_string(i)});
  c.register_tenant(p);
  size_t pass = 0;
  for (int i = 0; i < 10; ++i) pass += c.check_access("t", TableColumn{"frappe", "f" + std::to_string(i)});
  EXPECT_EQ(pass, 8u);
}

TEST(Catalog, ModelVersionsAreMonotone) {
  Catalog c;
  ModelRecord rec;
  rec.name = "rec_model";
  rec.weights = "one";
  EXPECT_EQ(c.register_model(rec).version, 1u);
  rec.weights = "two";
  EXPECT_EQ(c.register_model(rec).version, 2u);
  ASSERT_NE(c.model({"rec_model", 1}), nullptr);
  EXPECT_EQ(c.model({"rec_model", 1})->weights, "one");
  EXPECT_EQ(c.latest_model("rec_model")->version, 2u);
}

TEST(Catalog, ModelRegistrationInvalidatesOlderCacheEntries) {
  Catalog c;
  CacheManager cache;
  connect_cache_invalidation(c, cache);
  ModelRecord rec;
  rec.name = "m";
  const ModelRef v1 = c.register_model(rec);
  const CacheKey key{ArtifactKind::Embedding, fnv1a_128("x"), c.current_version(), v1};
  cache.put(key, 1, Tier::T0_accelerator);
  ASSERT_TRUE(cache.get(key).has_value());
  c.register_model(rec);
  EXPECT_FALSE(cache.get(key).has_value());
}

TEST(Catalog, StatsCountRowsAndTokens) {
  Catalog c;
  const TableId u = c.create_table(users_def());
  const SnapshotVersion v =
      c.append_rows(u, {{int64_t{1}, int64_t{20}, std::string("a b")}, {int64_t{2}, int64_t{20}, std::string("c d e f")}});
  const TableStats s = c.stats(u, v);
  EXPECT_EQ(s.row_count, 2u);
  ASSERT_NE(s.column("user_age"), nullptr);
  EXPECT_EQ(s.column("user_age")->distinct, 1u);
  EXPECT_DOUBLE_EQ(s.column("user_gender")->avg_tokens, 3.0);
}
