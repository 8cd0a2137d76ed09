#include "support/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "neurq/common/error.hpp"

namespace neurq::testing {

const char* const kRecQuery = R"(WITH ud AS (SELECT user_age, user_gender FROM users WHERE user_id = UID)
SELECT pr.product_id, pr.rating
FROM (
  PREDICT VALUE OF r.rating WITH PRIMARY KEY r.product_id
  FROM ratings r JOIN users u ON r.user_id = u.user_id CROSS JOIN ud
  WHERE u.user_gender = ud.user_gender
     AND u.user_age BETWEEN ud.user_age - 10 AND ud.user_age + 10
  TRAIN ON r.product_id) pr
ORDER BY pr.rating DESC LIMIT 100)";

const char* const kRecQueryPlan =
    R"(Limit 100
  Sort pr.rating DESC
    AIInfer ridge_regressor inline features [r.product_id] pk r.product_id -> pr(product_id, rating)
      AITrain ridge_regressor inline features [r.product_id] target r.rating pk r.product_id
        Select ((u.user_gender = ud.user_gender) AND (u.user_age BETWEEN (ud.user_age - 10) AND (ud.user_age + 10)))
          Join CROSS
            Join ON (r.user_id = u.user_id)
              Scan ratings AS r [user_id, product_id, rating]
              Scan users AS u [user_id, user_age, user_gender]
            Project [users.user_age AS ud.user_age, users.user_gender AS ud.user_gender]
              Select (users.user_id = 7)
                Scan users [user_id, user_age, user_gender]
)";

void load_rec_schema(Session& session, size_t users, size_t ratings, uint64_t seed) {
  session.execute("CREATE TABLE users (user_id INT64 PRIMARY KEY, user_age INT64, user_gender TEXT)");
  session.execute("CREATE TABLE ratings (user_id INT64, product_id INT64 PRIMARY KEY, rating FLOAT64)");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::vector<Row> u, r;
  std::vector<int64_t> ages;
  for (size_t i = 0; i < users; ++i) {
    ages.push_back(18 + static_cast<int64_t>(rng() % 50));
    u.push_back({static_cast<int64_t>(i), ages.back(), std::string(rng() % 2 ? "M" : "F")});
  }
  for (size_t i = 0; i < ratings; ++i) {
    const size_t uid = rng() % users;
    const auto pid = static_cast<int64_t>(i);
    r.push_back({static_cast<int64_t>(uid), pid, 2.5 + 0.004 * static_cast<double>(pid % 250) + noise(rng)});
  }
  Catalog& cat = session.catalog();
  cat.append_rows(*cat.find_table("users"), std::move(u));
  cat.append_rows(*cat.find_table("ratings"), std::move(r));
}

void build_random_db(Session& session, std::mt19937_64& rng, const RandomDbOptions& options) {
  Catalog& cat = session.catalog();
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const char* texts[] = {"p", "q", "r", "s"};
  for (size_t t = 0; t < options.tables; ++t) {
    const std::string name = "t" + std::to_string(t);
    session.execute("CREATE TABLE " + name +
                    " (id INT64 PRIMARY KEY, a INT64, b INT64, x FLOAT64, y FLOAT64, s TEXT)");
    // t0 trains the registered model, so it is never tiny.
    size_t rows = t == 0 ? 20 + rng() % (options.max_rows - 19) : rng() % (options.max_rows + 1);
    if (t != 0 && rng() % 20 == 0) rows = 0;
    std::vector<Row> data;
    for (size_t i = 0; i < rows; ++i) {
      const auto a = static_cast<int64_t>(rng() % 10);
      const double x = std::round(unit(rng) * 1000) / 1000;
      Value b = static_cast<int64_t>(rng() % 8);
      if (unit(rng) * 0.5 + 0.5 < options.null_rate) b = Value{};
      const double y = 0.5 * static_cast<double>(a) - 0.3 * x + (is_null(b) ? 0.0 : 0.1 * as_double(b)) + 0.1 * unit(rng);
      data.push_back({static_cast<int64_t>(i), a, b, x, y, std::string(texts[rng() % 4])});
    }
    if (!data.empty()) cat.append_rows(*cat.find_table(name), std::move(data));
  }
  session.execute("CREATE MODEL m KIND ridge_regressor ON t0 FEATURES (a, b, x) TARGET y");
}

namespace {

struct Col {
  std::string ref;  // qualified reference
  char type;        // 'i' int, 'f' float, 't' text
};

struct Source {
  std::string sql;
  std::string alias;
  std::vector<Col> cols;
  bool predict = false;
};

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return v[rng() % v.size()];
}

std::vector<Col> base_cols(const std::string& q) {
  return {{q + ".id", 'i'}, {q + ".a", 'i'}, {q + ".b", 'i'}, {q + ".x", 'f'}, {q + ".y", 'f'}, {q + ".s", 't'}};
}

std::string literal_for(std::mt19937_64& rng, char type) {
  switch (type) {
    case 'i': return std::to_string(rng() % 10);
    case 'f': return std::to_string(static_cast<int>(rng() % 9) - 4) + ".25";
    default: return std::string("'") + "pqrs"[rng() % 4] + "'";
  }
}

std::string comparison(std::mt19937_64& rng, const Col& c) {
  static const std::vector<std::string> ops{"=", "<>", "<", "<=", ">", ">="};
  if (c.type == 't') return c.ref + (rng() % 2 ? " = " : " <> ") + literal_for(rng, 't');
  if (rng() % 5 == 0) {
    const std::string lo = literal_for(rng, c.type);
    return c.ref + " BETWEEN " + lo + " AND " + lo + " + 4";
  }
  return c.ref + " " + pick(rng, ops) + " " + literal_for(rng, c.type);
}

/// One filter term over the columns in scope.
std::string term(std::mt19937_64& rng, const std::vector<Col>& cols) {
  std::vector<Col> numeric;
  for (const auto& c : cols)
    if (c.type != 't') numeric.push_back(c);
  switch (rng() % 6) {
    case 0: {  // column vs column, possibly across sources
      const Col& a = pick(rng, numeric);
      const Col& b = pick(rng, numeric);
      return a.ref + (rng() % 2 ? " = " : " < ") + b.ref;
    }
    case 1: return "(" + comparison(rng, pick(rng, cols)) + " OR " + comparison(rng, pick(rng, cols)) + ")";
    case 2: return "NOT (" + comparison(rng, pick(rng, cols)) + ")";
    case 3: {
      const Col& a = pick(rng, numeric);
      const Col& b = pick(rng, numeric);
      return a.ref + " + " + b.ref + " > " + literal_for(rng, 'i');
    }
    default: return comparison(rng, pick(rng, cols));
  }
}

Source source(std::mt19937_64& rng, size_t tables, size_t k, const RandomQueryOptions& o) {
  const std::string t = "t" + std::to_string(rng() % tables);
  const std::string r = "r" + std::to_string(k);
  if (!o.allow_predict || rng() % 3 != 0) return {t + " " + r, r, base_cols(r), false};
  const std::string p = "p" + std::to_string(k);
  std::string where;
  if (rng() % 2) where = " WHERE " + comparison(rng, pick(rng, base_cols(r)));
  if (rng() % 2) {
    return {"(PREDICT VALUE OF score WITH PRIMARY KEY " + r + ".id FROM " + t + " " + r + where +
                " USING MODEL m) " + p,
            p, {{p + ".id", 'i'}, {p + ".score", 'f'}}, true};
  }
  return {"(PREDICT VALUE OF " + r + ".y WITH PRIMARY KEY " + r + ".id FROM " + t + " " + r + where + " TRAIN ON " +
              r + ".a, " + r + ".x) " + p,
          p, {{p + ".id", 'i'}, {p + ".y", 'f'}}, true};
}

}  // namespace

std::string random_query(std::mt19937_64& rng, size_t tables, const RandomQueryOptions& o) {
  const size_t n = 1 + rng() % o.max_sources;
  std::vector<Source> srcs;
  for (size_t k = 0; k < n; ++k) srcs.push_back(source(rng, tables, k, o));

  std::ostringstream from;
  std::vector<Col> scope = srcs[0].cols;
  from << srcs[0].sql;
  for (size_t k = 1; k < n; ++k) {
    const bool cross = o.allow_cross && n == 2 && rng() % 4 == 0;
    if (cross) {
      from << " CROSS JOIN " << srcs[k].sql;
    } else {
      std::vector<Col> li, ri;
      for (const auto& c : scope)
        if (c.type == 'i') li.push_back(c);
      for (const auto& c : srcs[k].cols)
        if (c.type == 'i') ri.push_back(c);
      from << " JOIN " << srcs[k].sql << " ON " << pick(rng, li).ref << " = " << pick(rng, ri).ref;
      if (rng() % 3 == 0) from << " AND " << comparison(rng, pick(rng, srcs[k].cols));
    }
    scope.insert(scope.end(), srcs[k].cols.begin(), srcs[k].cols.end());
  }

  std::vector<std::string> conj;
  const size_t nc = rng() % (o.max_conjuncts + 1);
  for (size_t i = 0; i < nc; ++i) conj.push_back(term(rng, scope));

  std::vector<std::string> items;
  std::string group;
  if (o.allow_aggregate && rng() % 4 == 0) {
    std::vector<std::string> keys;
    const size_t nk = rng() % 3;
    for (size_t i = 0; i < nk; ++i) {
      const Col& c = pick(rng, scope);
      if (std::find(keys.begin(), keys.end(), c.ref) == keys.end()) keys.push_back(c.ref);
    }
    for (const auto& k : keys) items.push_back(k);
    items.push_back("COUNT(*)");
    std::vector<Col> numeric;
    for (const auto& c : scope)
      if (c.type != 't') numeric.push_back(c);
    const Col& v = pick(rng, numeric);
    static const std::vector<std::string> fns{"SUM", "MIN", "MAX", "AVG", "COUNT"};
    items.push_back(pick(rng, fns) + "(" + v.ref + ")");
    if (!keys.empty()) {
      group = " GROUP BY ";
      for (size_t i = 0; i < keys.size(); ++i) group += (i ? ", " : "") + keys[i];
    }
  } else {
    const size_t ni = 1 + rng() % 4;
    for (size_t i = 0; i < ni; ++i) {
      if (rng() % 6 == 0) {
        std::vector<Col> numeric;
        for (const auto& c : scope)
          if (c.type != 't') numeric.push_back(c);
        items.push_back(pick(rng, numeric).ref + " * 2 + " + pick(rng, numeric).ref);
      } else {
        items.push_back(pick(rng, scope).ref);
      }
    }
  }

  std::ostringstream inner;
  inner << "SELECT ";
  for (size_t i = 0; i < items.size(); ++i) inner << (i ? ", " : "") << items[i] << " AS c" << i;
  inner << " FROM " << from.str();
  for (size_t i = 0; i < conj.size(); ++i) inner << (i ? " AND " : " WHERE ") << conj[i];
  inner << group;

  if (!o.allow_order_limit || rng() % 3 != 0) return inner.str();
  std::ostringstream outer;
  outer << "SELECT ";
  for (size_t i = 0; i < items.size(); ++i) outer << (i ? ", " : "") << "q.c" << i;
  outer << " FROM (" << inner.str() << ") q ORDER BY ";
  for (size_t i = 0; i < items.size(); ++i) outer << (i ? ", " : "") << "q.c" << i << (rng() % 2 ? " DESC" : "");
  outer << " LIMIT " << 1 + rng() % 20;
  return outer.str();
}

std::vector<double> normal_equation_ridge(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                                          double lambda) {
  const size_t n = x.size();
  if (n == 0) fail(ErrorCode::DegenerateInput, "no rows");
  const size_t d = x[0].size();
  const size_t m = d + 1;
  // Augmented [A | rhs] for A = Z'Z + diag(λ..λ, 0), Z = [X 1].
  std::vector<std::vector<long double>> a(m, std::vector<long double>(m + 1, 0.0L));
  for (size_t r = 0; r < n; ++r) {
    for (size_t i = 0; i < m; ++i) {
      const long double zi = i < d ? x[r][i] : 1.0L;
      for (size_t j = 0; j < m; ++j) a[i][j] += zi * (j < d ? x[r][j] : 1.0L);
      a[i][m] += zi * y[r];
    }
  }
  for (size_t i = 0; i < d; ++i) a[i][i] += lambda;
  for (size_t c = 0; c < m; ++c) {
    size_t piv = c;
    for (size_t r = c + 1; r < m; ++r)
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    if (a[c][c] == 0.0L) fail(ErrorCode::DegenerateInput, "singular system");
    for (size_t r = 0; r < m; ++r) {
      if (r == c) continue;
      const long double f = a[r][c] / a[c][c];
      for (size_t j = c; j <= m; ++j) a[r][j] -= f * a[c][j];
    }
  }
  std::vector<double> w(m);
  for (size_t i = 0; i < m; ++i) w[i] = static_cast<double>(a[i][m] / a[i][i]);
  return w;
}

}  // namespace neurq::testing
