#include "neurq/bench.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "json.hpp"
#include "neurq/common/error.hpp"
#include "neurq/common/hash.hpp"

namespace neurq {

std::string_view to_string(SharingMode mode) {
  switch (mode) {
    case SharingMode::PerTaskModel: return "per_task_model";
    case SharingMode::SharedModel: return "shared_model";
    case SharingMode::Full: return "full";
    case SharingMode::Baseline: return "baseline";
  }
  return "?";
}

std::optional<SharingMode> parse_sharing_mode(std::string_view text) {
  for (auto m : {SharingMode::PerTaskModel, SharingMode::SharedModel, SharingMode::Full, SharingMode::Baseline})
    if (text == to_string(m)) return m;
  return std::nullopt;
}

BenchConfig BenchConfig::desk_r() { return BenchConfig{}; }

BenchConfig BenchConfig::desk_t() {
  BenchConfig c;
  c.workload = Workload::T;
  c.tenants = 8;
  c.engines = 4;
  c.rows = 2000;
  c.queries = 1;
  return c;
}

void BenchConfig::validate() const {
  if (tenants == 0) fail(ErrorCode::InvalidConfig, "tenants must be >= 1");
  if (engines == 0) fail(ErrorCode::InvalidConfig, "engines must be >= 1");
  if (rows == 0) fail(ErrorCode::InvalidConfig, "scale must be > 0");
  if (workload == Workload::R && rows < 100) fail(ErrorCode::InvalidConfig, "workload R needs at least 100 rows");
  if (queries == 0) fail(ErrorCode::InvalidConfig, "queries must be >= 1");
  if (export_latency_ms < 0 || arrival_gap_ms < 0) fail(ErrorCode::InvalidConfig, "latencies must be >= 0");
  policy.validate();
}

std::string BenchConfig::id() const {
  std::ostringstream os;
  os << (workload == Workload::R ? "R" : "T") << "-e" << engines << "-t" << tenants << "-"
     << (policy.kind == BatchPolicy::Kind::Fixed ? "fixed" : "bucket") << "-" << to_string(sharing)
     << (sequential ? "-seq" : "") << "-s" << seed;
  return os.str();
}

namespace {

constexpr std::array<double, 8> kPlanted{0.9, -0.7, 0.6, 0.5, -0.4, 0.8, 0.3, -0.6};

std::string r_query(int64_t uid) {
  std::ostringstream os;
  os << "WITH ud AS (SELECT user_age, user_gender FROM users WHERE user_id = " << uid << ")\n"
     << "SELECT pr.row_id, pr.rating FROM (\n"
     << "  PREDICT VALUE OF r.rating WITH PRIMARY KEY r.row_id\n"
     << "  FROM ratings r JOIN users u ON r.user_id = u.user_id CROSS JOIN ud\n"
     << "  WHERE u.user_gender = ud.user_gender\n"
     << "    AND u.user_age BETWEEN ud.user_age - 10 AND ud.user_age + 10\n"
     << "  TRAIN ON r.c0, r.c1, r.c2, r.c3, r.c4, r.c5, r.c6, r.c7, u.user_age, u.user_gender) pr\n"
     << "ORDER BY pr.rating DESC LIMIT 100";
  return os.str();
}

}  // namespace

Workload gen_workload_r(Session& session, size_t rows, uint64_t seed, size_t queries, size_t tenants) {
  if (rows < 100) fail(ErrorCode::InvalidArgument, "workload R needs at least 100 rows");
  Catalog& cat = session.catalog();
  session.execute("CREATE TABLE users (user_id INT64 PRIMARY KEY, user_age INT64, user_gender TEXT)");
  session.execute(
      "CREATE TABLE ratings (row_id INT64 PRIMARY KEY, user_id INT64, product_id INT64, c0 FLOAT64, c1 FLOAT64, "
      "c2 FLOAT64, c3 FLOAT64, c4 FLOAT64, c5 FLOAT64, c6 FLOAT64, c7 FLOAT64, rating FLOAT64)");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const size_t n_users = std::max<size_t>(20, rows / 20);
  std::vector<Row> users;
  std::vector<int64_t> ages(n_users);
  std::vector<std::string> genders(n_users);
  for (size_t u = 0; u < n_users; ++u) {
    ages[u] = 18 + static_cast<int64_t>(rng() % 50);
    genders[u] = rng() % 2 ? "M" : "F";
    users.push_back({static_cast<int64_t>(u), ages[u], genders[u]});
  }
  std::vector<Row> ratings;
  ratings.reserve(rows);
  for (size_t i = 0; i < rows; ++i) {
    const size_t u = rng() % n_users;
    Row r{static_cast<int64_t>(i), static_cast<int64_t>(u), static_cast<int64_t>(rng() % 500)};
    double y = 3.0 + 0.02 * static_cast<double>(ages[u] - 40) + (genders[u] == "M" ? 0.3 : -0.3);
    for (double w : kPlanted) {
      const double x = normal(rng);
      r.push_back(x);
      y += w * x;
    }
    y += 0.25 * normal(rng);
    r.push_back(y);
    ratings.push_back(std::move(r));
  }
  cat.append_rows(*cat.find_table("users"), std::move(users));
  cat.append_rows(*cat.find_table("ratings"), std::move(ratings));

  Workload w;
  w.tables = {"users", "ratings"};
  // Distinct viewers, drawn without replacement.
  std::vector<int64_t> uids(n_users);
  for (size_t u = 0; u < n_users; ++u) uids[u] = static_cast<int64_t>(u);
  std::shuffle(uids.begin(), uids.end(), rng);
  for (size_t q = 0; q < queries; ++q)
    w.queries.push_back({"tenant" + std::to_string(q % tenants), r_query(uids[q % uids.size()])});
  return w;
}

Workload gen_workload_t(Session& session, size_t rows_per_tenant, size_t tenants, uint64_t seed,
                        size_t queries_per_tenant) {
  if (tenants == 0) fail(ErrorCode::InvalidArgument, "tenants must be >= 1");
  Catalog& cat = session.catalog();
  std::mt19937_64 rng(seed);
  Workload w;
  auto sentence = [&] {
    // 60% short (3-8 tokens), 40% long (48-96 tokens).
    const bool long_one = rng() % 10 < 4;
    const size_t len = long_one ? 48 + rng() % 49 : 3 + rng() % 6;
    std::string s;
    for (size_t i = 0; i < len; ++i) s += (i ? " w" : "w") + std::to_string(rng() % 2000);
    return s;
  };
  for (size_t t = 0; t < tenants; ++t) {
    const std::string name = "docs_" + std::to_string(t);
    session.execute("CREATE TABLE " + name + " (id INT64 PRIMARY KEY, body TEXT)");
    std::vector<Row> rows;
    rows.reserve(rows_per_tenant);
    for (size_t i = 0; i < rows_per_tenant; ++i) rows.push_back({static_cast<int64_t>(i), sentence()});
    cat.append_rows(*cat.find_table(name), std::move(rows));
    w.tables.push_back(name);
  }
  session.execute("CREATE MODEL embedder KIND hash_embedder ON docs_0 FEATURES (body)");
  for (size_t q = 0; q < queries_per_tenant; ++q)
    for (size_t t = 0; t < tenants; ++t)
      w.queries.push_back({"tenant" + std::to_string(t),
                           "SELECT p.id, p.embedding FROM (PREDICT VALUE OF embedding WITH PRIMARY KEY d.id FROM docs_" +
                               std::to_string(t) + " d USING MODEL embedder) p"});
  return w;
}

std::string table_digest(const Catalog& catalog, const std::string& table) {
  const auto id = catalog.find_table(table);
  if (!id) fail(ErrorCode::UnknownTable, table);
  const RowSet rs = catalog.scan(*id, catalog.current_version());
  std::string text;
  for (const auto& r : rs.rows) {
    for (const auto& v : r) text += value_to_string(v) + '\x1f';
    text += '\n';
  }
  return fnv1a_128(text).hex();
}

BenchReport run_bench(const BenchConfig& config) {
  config.validate();
  SessionConfig sc;
  sc.exec = config.exec;
  sc.exec.engines = config.engines;
  sc.exec.policy = config.policy;
  sc.exec.sequential = config.sequential;
  sc.exec.seed = config.seed;
  sc.exec.cse = config.sharing == SharingMode::Full;
  sc.exec.shared_model = config.sharing != SharingMode::PerTaskModel;
  sc.exec.export_latency_ms = config.sharing == SharingMode::Baseline ? config.export_latency_ms : 0.0;
  sc.objective = config.objective;
  sc.use_cache = false;
  Session session(sc);

  const Workload w = config.workload == BenchConfig::Workload::R
                         ? gen_workload_r(session, config.rows, config.seed, config.queries, config.tenants)
                         : gen_workload_t(session, config.rows, config.tenants, config.seed, config.queries);

  const SnapshotVersion pin = session.catalog().current_version();
  Executor exec(session.catalog(), session.runtime(), nullptr, session.config().exec);
  std::vector<QueryHandle> handles;
  for (size_t i = 0; i < w.queries.size(); ++i) {
    const PreparedQuery p = session.prepare(w.queries[i].sql, {}, pin);
    handles.push_back(exec.submit(p.physical, w.queries[i].tenant, static_cast<double>(i) * config.arrival_gap_ms));
  }
  BenchReport report;
  report.config = config;
  report.metrics = exec.run();
  report.metrics.config_id = config.id();
  for (double m : report.metrics.peak_memory_mb) report.peak_memory_mb = std::max(report.peak_memory_mb, m);
  return report;
}

std::string BenchReport::to_json() const {
  nlohmann::json j;
  j["config"] = {{"id", config.id()},
                 {"workload", config.workload == BenchConfig::Workload::R ? "R" : "T"},
                 {"tenants", config.tenants},
                 {"engines", config.engines},
                 {"batch_policy", config.policy.kind == BatchPolicy::Kind::Fixed ? "fixed" : "bucket"},
                 {"batch_items", config.policy.max_items},
                 {"sharing_mode", std::string(to_string(config.sharing))},
                 {"sequential", config.sequential},
                 {"rows", config.rows},
                 {"queries", config.queries},
                 {"seed", config.seed},
                 {"objective", config.objective.to_string()}};
  j["metrics"] = nlohmann::json::parse(metrics.to_json());
  j["peak_memory_mb"] = peak_memory_mb;
  j["padding_waste"] = metrics.tokens + metrics.padding > 0 ? metrics.padding / (metrics.tokens + metrics.padding) : 0.0;
  return j.dump(2);
}

std::string BenchReport::to_csv() const {
  std::ostringstream os;
  os << Metrics::csv_header() << metrics.to_csv() << config.id() << ",all,peak_memory_mb," << peak_memory_mb << '\n';
  return os.str();
}

}  // namespace neurq
