#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "neurq/runtime/model_runtime.hpp"
#include "support/fixtures.hpp"

using namespace neurq;
namespace nt = neurq::testing;

namespace {

DenseMatrix column(std::vector<double> values) {
  DenseMatrix m(values.size(), 1);
  m.data = std::move(values);
  return m;
}

}  // namespace

TEST(Runtime, RidgeExactLineAndLargeLambda) {
  const auto w = train_ridge(column({0, 1}), {0, 1}, 1e-9);
  EXPECT_NEAR(w[0], 1.0, 1e-6);
  EXPECT_NEAR(w[1], 0.0, 1e-6);

  const std::vector<double> y{3, 5, 10, 2};
  const auto flat = train_ridge(column({1, 2, 3, 4}), y, 1e9);
  EXPECT_NEAR(flat[0], 0.0, 1e-3);
  EXPECT_NEAR(flat[1], 5.0, 1e-3);
}

TEST(Runtime, RidgeMatchesNormalEquations) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  DenseMatrix x(50, 3);
  std::vector<std::vector<double>> rows(50, std::vector<double>(3));
  std::vector<double> y(50);
  for (size_t i = 0; i < 50; ++i) {
    for (size_t j = 0; j < 3; ++j) x.at(i, j) = rows[i][j] = n01(rng);
    y[i] = 2 * rows[i][0] - rows[i][2] + 0.5 + 0.1 * n01(rng);
  }
  const auto got = train_ridge(x, y, 0.7);
  const auto want = nt::normal_equation_ridge(rows, y, 0.7);
  ASSERT_EQ(got.size(), 4u);
  for (size_t i = 0; i < 4; ++i) EXPECT_NEAR(got[i], want[i], 1e-8);
}

TEST(Runtime, DegenerateRidgeInputs) {
  EXPECT_THROW(train_ridge(DenseMatrix(0, 1), {}, 1.0), Error);
  EXPECT_THROW(train_ridge(column({1, 2}), {1, 2}, 0.0), Error);
}

TEST(Runtime, RidgeInferenceArithmetic) {
  Catalog catalog;
  ModelRuntime rt(catalog, nullptr);
  LoadedModel m;
  m.kind = ModelKind::RidgeRegressor;
  m.feature_names = {"x"};
  RidgeModel r;
  r.encoder = FeatureEncoder({"x"}, {ColumnType::Float64});
  r.weights = {2};
  r.intercept = 1;
  r.mask = {"x"};
  r.active_dims = {0};
  m.ridge = r;
  const InferResult out = rt.infer(m, {{{3.0}, int64_t{1}, 1}});
  ASSERT_EQ(out.predictions.size(), 1u);
  EXPECT_DOUBLE_EQ(std::get<double>(out.predictions[0]), 7.0);
}

TEST(Runtime, EmbeddingsAreDeterministicAndUnitNorm) {
  const auto v = embed({"a b", "a b", "the quick brown fox"});
  EXPECT_EQ(v[0], v[1]);
  for (const Vector& e : v) {
    double norm = 0;
    for (double d : e) norm += d * d;
    EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-9);
  }
  EXPECT_EQ(whitespace_token_count("  the quick\tbrown  "), 3u);
  const Vector empty = embed_text("", 16);
  for (double d : empty) EXPECT_EQ(d, 0.0);
}

TEST(Runtime, GenerativeMockIsDeterministic) {
  Catalog catalog;
  ModelRuntime rt(catalog, nullptr);
  LoadedModel m;
  m.kind = ModelKind::GenerativeMock;
  m.feature_names = {"text"};
  m.cost.per_token = 0.1;
  m.seed = 9;
  std::vector<InferenceInput> batch;
  for (size_t len : {10, 20, 30}) batch.push_back({{std::string(len, 'a')}, int64_t(len), len});
  const InferResult a = rt.infer(m, batch);
  const InferResult b = rt.infer(m, batch);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.cost_ms, b.cost_ms);
  ASSERT_EQ(a.predictions.size(), 3u);
  for (size_t i = 0; i < 3; ++i) EXPECT_TRUE(values_equal(a.predictions[i], b.predictions[i]));
}

TEST(Runtime, PaddingOfBatch) {
  EXPECT_EQ(padding_of({10, 100}), 90.0);
  EXPECT_EQ(padding_of({10, 10, 10}), 0.0);
}

TEST(Runtime, ProfileQualityBounds) {
  Catalog catalog;
  ModelRuntime rt(catalog, nullptr);
  std::vector<Row> features;
  std::vector<double> y;
  std::vector<InferenceInput> holdout;
  for (int i = 0; i < 20; ++i) {
    features.push_back({double(i)});
    y.push_back(3.0 * i + 1);
    holdout.push_back({{double(i)}, int64_t{i}, 1});
  }
  LoadedModel fit;
  fit.kind = ModelKind::RidgeRegressor;
  fit.feature_names = {"x"};
  fit.ridge = RidgeModel::fit(FeatureEncoder({"x"}, {ColumnType::Float64}), features, y, 1e-9);
  EXPECT_NEAR(rt.profile(fit, holdout, y), 1.0, 1e-6);

  LoadedModel constant = fit;
  constant.ridge->weights = {0};
  double mean = 0;
  for (double t : y) mean += t / double(y.size());
  constant.ridge->intercept = mean;
  EXPECT_NEAR(rt.profile(constant, holdout, y), 0.0, 1e-9);
}

TEST(Runtime, SerializeRoundTrip) {
  std::vector<Row> features;
  std::vector<double> y;
  for (int i = 0; i < 10; ++i) {
    features.push_back({double(i), double(i % 3)});
    y.push_back(i + 0.5 * (i % 3));
  }
  LoadedModel m;
  m.kind = ModelKind::RidgeRegressor;
  m.feature_names = {"a", "b"};
  m.ridge = RidgeModel::fit(FeatureEncoder({"a", "b"}, {ColumnType::Float64, ColumnType::Float64}), features, y, 0.5);
  const LoadedModel back = deserialize_model(serialize_model(m));
  for (const Row& f : features) EXPECT_DOUBLE_EQ(back.ridge->predict(f), m.ridge->predict(f));
}

TEST(Runtime, SliceIdentityMatchesScratchAndCaches) {
  Session session;
  session.execute("CREATE TABLE f (id INT64 PRIMARY KEY, f0 FLOAT64, f1 FLOAT64, f2 FLOAT64, y FLOAT64)");
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  std::vector<Row> rows;
  std::vector<std::vector<double>> masked;
  std::vector<double> ys;
  for (int64_t i = 0; i < 120; ++i) {
    const double a = n01(rng), b = n01(rng), c = n01(rng);
    const double y = a - 2 * b + 0.5 * c + 0.1 * n01(rng);
    rows.push_back({i, a, b, c, y});
  }
  session.catalog().append_rows(*session.catalog().find_table("f"), rows);
  session.execute("CREATE MODEL sm KIND ridge_regressor ON f FEATURES (f0, f1, f2) TARGET y");
  const auto record = session.catalog().latest_model("sm");
  ASSERT_NE(record, nullptr);
  const ModelRuntime& rt = session.runtime();

  const SliceResult all = rt.slice_for_mask(*record, {"f0", "f1", "f2"});
  const auto full = rt.load(*record);
  for (size_t d = 0; d < full->ridge->weights.size(); ++d)
    EXPECT_NEAR(all.model->ridge->weights[d], full->ridge->weights[d], 1e-9);

  const SliceResult first = rt.slice_for_mask(*record, {"f0", "f2"});
  const SliceResult second = rt.slice_for_mask(*record, {"f0", "f2"});
  EXPECT_FALSE(first.cache_hit);
  EXPECT_TRUE(second.cache_hit);
  EXPECT_EQ(second.cost_ms, 0.0);

  // Scratch oracle over the permitted columns of every training row.
  const RidgeModel& sliced = *first.model->ridge;
  ASSERT_EQ(sliced.n, rows.size());
  for (const Row& r : rows) {
    masked.push_back({std::get<double>(r[1]), std::get<double>(r[3])});
    ys.push_back(std::get<double>(r[4]));
  }
  const auto w = nt::normal_equation_ridge(masked, ys, sliced.lambda);
  for (const Row& r : rows) {
    const double want = w[0] * std::get<double>(r[1]) + w[1] * std::get<double>(r[3]) + w[2];
    EXPECT_NEAR(sliced.predict({r[1], r[2], r[3]}), want, 1e-8);
  }
}
