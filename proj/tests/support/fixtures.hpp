#pragma once

#include <random>
#include <string>
#include <vector>

#include "neurq/bench.hpp"
#include "neurq/session.hpp"

namespace neurq::testing {

/// The motivating recommendation query, with the viewer id as parameter UID.
extern const char* const kRecQuery;
/// explain() of the unpinned plan kRecQuery lowers to with UID = 7.
extern const char* const kRecQueryPlan;

/// users(user_id PK, user_age, user_gender) and ratings(user_id,
/// product_id PK, rating), seeded.
void load_rec_schema(Session& session, size_t users, size_t ratings, uint64_t seed);

struct RandomDbOptions {
  size_t tables = 3;
  size_t max_rows = 200;
  double null_rate = 0.05;  // NULLs in column b
};

/// Tables t0..t{n-1}(id PK, a, b, x, y, s) with small value domains so
/// joins and filters are selective but not empty, plus ridge model `m`
/// over t0 with features (a, b, x) and target y.
void build_random_db(Session& session, std::mt19937_64& rng, const RandomDbOptions& options = {});

struct RandomQueryOptions {
  size_t max_sources = 3;
  size_t max_conjuncts = 3;
  bool allow_predict = true;
  bool allow_aggregate = true;
  bool allow_order_limit = true;
  bool allow_cross = true;
};

/// A random SELECT over build_random_db tables: joins, filters (some
/// spanning sources, some over predictions), projections, grouping and
/// ORDER BY every output column followed by LIMIT.
std::string random_query(std::mt19937_64& rng, size_t tables, const RandomQueryOptions& options = {});

/// Slopes then intercept of argmin ||Xw + b − y||² + λ||w||², from the
/// (d+1)×(d+1) normal equations solved by Gaussian elimination with
/// partial pivoting in long double.
std::vector<double> normal_equation_ridge(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                                          double lambda);

}  // namespace neurq::testing
