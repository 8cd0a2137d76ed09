#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "neurq/common/error.hpp"
#include "neurq/executor/executor.hpp"

namespace neurq {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_num(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(ErrorCode::InvalidConfig, key + ": not a number: '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  fail(ErrorCode::InvalidConfig, key + ": not a boolean: '" + v + "'");
}

std::string fmt(double d) {
  std::ostringstream os;
  os << d;
  return os.str();
}

struct Key {
  const char* name;
  const char* doc;
  std::function<void(ExecutorConfig&, const std::string&)> set;
  std::function<std::string(const ExecutorConfig&)> get;
};

#define NUM(field, doc)                                                                                   \
  Key {                                                                                                   \
    #field, doc, [](ExecutorConfig& c, const std::string& v) { c.field = decltype(c.field)(to_num(#field, v)); }, \
        [](const ExecutorConfig& c) { return fmt(static_cast<double>(c.field)); }                         \
  }
#define FLAG(field, doc)                                                                       \
  Key {                                                                                        \
    #field, doc, [](ExecutorConfig& c, const std::string& v) { c.field = to_bool(#field, v); }, \
        [](const ExecutorConfig& c) { return std::string(c.field ? "true" : "false"); }        \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      NUM(engines, "number of AI engines"),
      NUM(token_budget, "per-engine token budget of in-flight batches"),
      NUM(memory_budget_mb, "per-engine memory budget (weights + batch state + state blocks)"),
      Key{"policy", "fixed | bucket",
          [](ExecutorConfig& c, const std::string& v) {
            if (v == "fixed")
              c.policy.kind = BatchPolicy::Kind::Fixed;
            else if (v == "bucket")
              c.policy.kind = BatchPolicy::Kind::Bucket;
            else
              fail(ErrorCode::InvalidConfig, "policy: expected fixed or bucket, got '" + v + "'");
          },
          [](const ExecutorConfig& c) {
            return std::string(c.policy.kind == BatchPolicy::Kind::Fixed ? "fixed" : "bucket");
          }},
      Key{"batch_items", "max items per micro-batch",
          [](ExecutorConfig& c, const std::string& v) { c.policy.max_items = static_cast<size_t>(to_num("batch_items", v)); },
          [](const ExecutorConfig& c) { return fmt(static_cast<double>(c.policy.max_items)); }},
      Key{"window_ms", "max wait before a partial batch flushes",
          [](ExecutorConfig& c, const std::string& v) { c.policy.window_ms = to_num("window_ms", v); },
          [](const ExecutorConfig& c) { return fmt(c.policy.window_ms); }},
      Key{"bucket_boundaries", "comma-separated initial length boundaries",
          [](ExecutorConfig& c, const std::string& v) {
            c.policy.boundaries.clear();
            std::stringstream ss(v);
            std::string part;
            while (std::getline(ss, part, ','))
              c.policy.boundaries.push_back(static_cast<size_t>(to_num("bucket_boundaries", trim(part))));
          },
          [](const ExecutorConfig& c) {
            std::string s;
            for (size_t b : c.policy.boundaries) s += (s.empty() ? "" : ",") + std::to_string(b);
            return s;
          }},
      Key{"merge_period_ms", "bucket re-derivation period",
          [](ExecutorConfig& c, const std::string& v) { c.policy.merge_period_ms = to_num("merge_period_ms", v); },
          [](const ExecutorConfig& c) { return fmt(c.policy.merge_period_ms); }},
      Key{"target_buckets", "bucket count after re-derivation",
          [](ExecutorConfig& c, const std::string& v) {
            c.policy.target_buckets = static_cast<size_t>(to_num("target_buckets", v));
          },
          [](const ExecutorConfig& c) { return fmt(static_cast<double>(c.policy.target_buckets)); }},
      NUM(overload_threshold, "pressure above which an engine sheds work"),
      NUM(rebalance_gap, "a migration target must sit this far below the threshold"),
      NUM(transfer_ms_per_mb, "state-block migration cost"),
      NUM(max_pending_queries, "admission queue cap"),
      FLAG(cse, "share identical subplans across queries"),
      FLAG(shared_model, "share one model instance across queries"),
      FLAG(sequential, "admit one query at a time"),
      NUM(export_latency_ms, "coordinator time per AI dispatch (export baseline)"),
      FLAG(materialize, "cache join, aggregate and AI results"),
      NUM(overload_rate, "injected dispatch refusals"),
      NUM(fault_rate, "injected batch faults"),
      NUM(migrate_rate, "injected forced migrations"),
      NUM(seed, "injection RNG seed"),
      NUM(real_time_scale, "wall ms per simulated ms in real-time mode"),
      Key{"db.setup_ms", "per DB operator",
          [](ExecutorConfig& c, const std::string& v) { c.db.setup_ms = to_num("db.setup_ms", v); },
          [](const ExecutorConfig& c) { return fmt(c.db.setup_ms); }},
      Key{"db.per_row_ms", "per row processed",
          [](ExecutorConfig& c, const std::string& v) { c.db.per_row_ms = to_num("db.per_row_ms", v); },
          [](const ExecutorConfig& c) { return fmt(c.db.per_row_ms); }},
      Key{"db.nlj_pair_ms", "per nested-loop pair",
          [](ExecutorConfig& c, const std::string& v) { c.db.nlj_pair_ms = to_num("db.nlj_pair_ms", v); },
          [](const ExecutorConfig& c) { return fmt(c.db.nlj_pair_ms); }},
      Key{"db.hash_memory_mb", "hash join build budget",
          [](ExecutorConfig& c, const std::string& v) { c.db.hash_memory_mb = to_num("db.hash_memory_mb", v); },
          [](const ExecutorConfig& c) { return fmt(c.db.hash_memory_mb); }},
  };
  return k;
}

#undef NUM
#undef FLAG

}  // namespace

void ExecutorConfig::validate() const {
  if (engines == 0) fail(ErrorCode::InvalidConfig, "engines must be >= 1");
  if (token_budget <= 0) fail(ErrorCode::InvalidConfig, "token_budget must be > 0");
  if (memory_budget_mb <= 0) fail(ErrorCode::InvalidConfig, "memory_budget_mb must be > 0");
  if (overload_threshold <= 0 || overload_threshold > 1) fail(ErrorCode::InvalidConfig, "overload_threshold must be in (0, 1]");
  if (rebalance_gap < 0 || rebalance_gap >= overload_threshold)
    fail(ErrorCode::InvalidConfig, "rebalance_gap must be in [0, overload_threshold)");
  if (transfer_ms_per_mb < 0) fail(ErrorCode::InvalidConfig, "transfer_ms_per_mb must be >= 0");
  if (max_pending_queries == 0) fail(ErrorCode::InvalidConfig, "max_pending_queries must be >= 1");
  if (export_latency_ms < 0) fail(ErrorCode::InvalidConfig, "export_latency_ms must be >= 0");
  for (double r : {overload_rate, fault_rate, migrate_rate})
    if (r < 0 || r >= 1) fail(ErrorCode::InvalidConfig, "injection rates must be in [0, 1)");
  if (real_time_scale <= 0) fail(ErrorCode::InvalidConfig, "real_time_scale must be > 0");
  policy.validate();
}

ExecutorConfig parse_executor_config(const std::string& text, ExecutorConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::InvalidConfig, "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool found = false;
    for (const auto& k : keys())
      if (key == k.name) {
        k.set(base, value);
        found = true;
      }
    if (!found) fail(ErrorCode::InvalidConfig, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  base.validate();
  return base;
}

ExecutorConfig load_executor_config(const std::string& path, ExecutorConfig base) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::InvalidConfig, "cannot read config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_executor_config(ss.str(), std::move(base));
}

std::string describe_executor_config(const ExecutorConfig& config) {
  std::ostringstream os;
  for (const auto& k : keys()) os << "# " << k.doc << "\n" << k.name << " = " << k.get(config) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Metrics serialization

namespace {
nlohmann::json summary_json(const LatencySummary& s) {
  return {{"queries", s.queries}, {"throughput_qpm", s.throughput_qpm}, {"p50_ms", s.p50}, {"p95_ms", s.p95}, {"p99_ms", s.p99}};
}
}  // namespace

std::string Metrics::to_json() const {
  nlohmann::json j;
  j["config_id"] = config_id;
  j["makespan_ms"] = makespan_ms;
  j["completed"] = completed;
  j["failed"] = failed;
  j["overall"] = summary_json(overall);
  j["tenants"] = nlohmann::json::object();
  for (const auto& [t, s] : tenants) j["tenants"][t] = summary_json(s);
  j["batches"] = batches;
  j["items"] = items;
  j["tokens"] = tokens;
  j["padding"] = padding;
  j["exec_nodes"] = exec_nodes;
  j["cse_hits"] = cse_hits;
  j["cache_hits"] = cache_hits;
  j["cache_fallbacks"] = cache_fallbacks;
  j["peak_memory_mb"] = peak_memory_mb;
  j["overloads"] = overloads;
  j["faults"] = faults;
  j["migrations"] = migrations;
  j["no_capacity"] = no_capacity;
  j["budget_violations"] = budget_violations;
  j["deadlock"] = deadlock;
  if (!diagnostic.empty()) j["diagnostic"] = diagnostic;
  nlohmann::json c;
  for (size_t t = 0; t < kTiers; ++t) c["occupancy_mb"][std::string(to_string(static_cast<Tier>(t)))] = cache.occupancy_mb[t];
  for (size_t k = 0; k < kArtifactKinds; ++k) {
    const std::string name(to_string(static_cast<ArtifactKind>(k)));
    c["hits"][name] = cache.hits[k];
    c["misses"][name] = cache.misses[k];
  }
  c["evictions"] = cache.evictions;
  c["demotions"] = cache.demotions;
  c["promotions"] = cache.promotions;
  c["invalidations"] = cache.invalidations;
  j["cache"] = c;
  return j.dump(2);
}

std::string Metrics::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(10);
  auto row = [&](const std::string& tenant, const std::string& metric, double v) {
    os << config_id << ',' << tenant << ',' << metric << ',' << v << '\n';
  };
  auto lat = [&](const std::string& tenant, const LatencySummary& s) {
    row(tenant, "queries", static_cast<double>(s.queries));
    row(tenant, "throughput_qpm", s.throughput_qpm);
    row(tenant, "p50_ms", s.p50);
    row(tenant, "p95_ms", s.p95);
    row(tenant, "p99_ms", s.p99);
  };
  lat("all", overall);
  for (const auto& [t, s] : tenants) lat(t, s);
  row("all", "makespan_ms", makespan_ms);
  row("all", "batches", static_cast<double>(batches));
  row("all", "items", static_cast<double>(items));
  row("all", "tokens", tokens);
  row("all", "padding", padding);
  row("all", "exec_nodes", static_cast<double>(exec_nodes));
  row("all", "cse_hits", static_cast<double>(cse_hits));
  row("all", "cache_hits", static_cast<double>(cache_hits));
  for (size_t e = 0; e < peak_memory_mb.size(); ++e) row("all", "peak_memory_mb_engine" + std::to_string(e), peak_memory_mb[e]);
  row("all", "overloads", static_cast<double>(overloads));
  row("all", "faults", static_cast<double>(faults));
  row("all", "migrations", static_cast<double>(migrations));
  row("all", "budget_violations", static_cast<double>(budget_violations));
  return os.str();
}

}  // namespace neurq
