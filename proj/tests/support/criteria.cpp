#include "support/criteria.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "neurq/bench.hpp"
#include "neurq/common/error.hpp"
#include "neurq/session.hpp"
#include "neurq/sql/parser.hpp"
#include "support/fixtures.hpp"
#include "support/reference.hpp"

namespace neurq::testing {

namespace {

Outcome timed(double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (limit_s > 0 && o.seconds >= limit_s) {
    o.pass = false;
    o.detail += " (over the " + std::to_string(limit_s) + "s limit)";
  }
  return o;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

PipelineVariant infer_variant(const PhysicalPtr& plan) {
  PipelineVariant v = PipelineVariant::Direct;
  visit_physical(plan, [&](const PhysicalPtr& n) {
    if (n->op == PhysOp::AIInfer || n->op == PhysOp::AITrain) v = n->variant;
  });
  return v;
}

bool close_to(double a, double b, double tol) { return std::fabs(a - b) <= tol * std::max(1.0, std::fabs(b)); }

}  // namespace

// ---- 1 -------------------------------------------------------------------

Outcome parser_fidelity() {
  return timed(1.0, [] {
    Outcome o;
    Session s;
    load_rec_schema(s, 60, 600, 3);
    const sql::Statement stmt = sql::parse(kRecQuery);
    if (sql::parse(sql::unparse(stmt)) != stmt) return Outcome{false, "round trip changed the AST"};
    sql::BindOptions opts;
    opts.parameters["UID"] = int64_t{7};
    const LogicalPtr plan = lower(sql::bind(stmt, s.catalog(), opts));
    if (explain(plan) != kRecQueryPlan) return Outcome{false, "lowered plan differs from golden:\n" + explain(plan)};

    struct Bad {
      const char* sql;
      int line, column;
    };
    const Bad bad[] = {
        {"SELECT p.a FROM (PREDICT VALUE OF r.rating FROM ratings r TRAIN ON r.x) p", 1, 44},
        {"SELECT p.a FROM (PREDICT VALUE r.rating WITH PRIMARY KEY r.id FROM ratings r TRAIN ON r.x) p", 1, 32},
        {"SELECT p.a FROM (PREDICT VALUE OF r.rating WITH PRIMARY KEY r.id FROM ratings r) p", 1, 80},
        {"SELECT p.a FROM (PREDICT VALUE OF r.rating WITH PRIMARY KEY r.id FROM ratings r TRAIN ON) p", 1, 89},
        {"SELECT p.a FROM (PREDICT VALUE OF r.rating WITH PRIMARY KEY r.id FROM ratings r\n  TRAIN ON r.x USING MODEL m) p",
         2, 16},
        {"SELECT p.a FROM (PREDICT VALUE OF r.rating WITH KEY r.id FROM ratings r TRAIN ON r.x) p", 1, 49},
        {"SELECT p.a FROM (PREDICT VALUE OF r.rating WITH PRIMARY KEY r.id\n  FROM ratings r\n  TRAIN ON r.x p", 3, 16},
        {"SELECT p.a FROM (PREDICT VALUE OF WITH PRIMARY KEY r.id FROM ratings r TRAIN ON r.x) p", 1, 35},
    };
    for (const auto& b : bad) {
      try {
        sql::parse(b.sql);
        return Outcome{false, std::string("accepted malformed: ") + b.sql};
      } catch (const SyntaxError& e) {
        if (e.line() != b.line || e.column() != b.column)
          return Outcome{false, "error at " + e.rendered() + ", expected " + std::to_string(b.line) + ":" +
                                    std::to_string(b.column)};
      }
    }
    // The plan also runs end to end.
    const auto r = s.execute(kRecQuery, opts);
    if (!r.rows || r.rows->empty()) return Outcome{false, "recommendation query returned no rows"};
    o.pass = true;
    o.detail = "golden plan, round trip, 8 positioned errors, " + std::to_string(r.rows->size()) + " rows";
    return o;
  });
}

// ---- 2 -------------------------------------------------------------------

Outcome rewrite_soundness(size_t cases, uint64_t seed) {
  return timed(30.0, [=] {
    std::mt19937_64 rng(seed);
    size_t ok = 0, fired = 0, nonempty = 0;
    std::string first_failure;
    std::unique_ptr<Session> s;
    for (size_t c = 0; c < cases; ++c) {
      // A fresh database every 20 plans.
      if (c % 20 == 0) {
        s = std::make_unique<Session>();
        build_random_db(*s, rng);
      }
      const std::string q = random_query(rng, 3);
      try {
        const PreparedQuery p = s->prepare(q);
        if (!p.rewritten.trace.empty()) ++fired;
        Reference ref(s->catalog(), s->runtime(), s->config().exec.inline_model);
        const RowSet before = ref.eval(p.logical);
        Reference ref2(s->catalog(), s->runtime(), s->config().exec.inline_model);
        const RowSet after = ref2.eval(p.rewritten.plan);
        if (!before.empty()) ++nonempty;
        if (same_rows(before, after, 1e-9))
          ++ok;
        else if (first_failure.empty())
          first_failure = q + " (" + std::to_string(before.size()) + " vs " + std::to_string(after.size()) + " rows)";
      } catch (const std::exception& e) {
        if (first_failure.empty()) first_failure = q + ": " + e.what();
      }
    }
    Outcome o;
    o.pass = ok == cases;
    o.detail = std::to_string(ok) + "/" + std::to_string(cases) + " equal, rewrites fired on " + std::to_string(fired) +
               ", non-empty " + std::to_string(nonempty);
    if (!first_failure.empty()) o.detail += "; first failure: " + first_failure;
    return o;
  });
}

// ---- 3 -------------------------------------------------------------------

Outcome optimizer_oracle(size_t cases, uint64_t seed) {
  return timed(60.0, [=] {
    std::mt19937_64 rng(seed);
    RandomQueryOptions qo;
    qo.max_sources = 2;
    qo.max_conjuncts = 1;
    qo.allow_aggregate = false;
    qo.allow_order_limit = false;
    size_t ok = 0, infeasible = 0, ai_plans = 0, tried = 0;
    std::string first_failure;
    std::unique_ptr<Session> s;
    ModelRef model;
    size_t c = 0;
    while (c < cases) {
      if (tried++ % 50 == 0) {
        s = std::make_unique<Session>();
        build_random_db(*s, rng);
        model = s->catalog().latest_model("m")->ref();
      }
      const PreparedQuery p = s->prepare(random_query(rng, 3, qo));
      const LogicalPtr plan = p.rewritten.plan;
      if (node_count(plan) > 6) continue;
      ++c;
      std::vector<EngineInfo> engines{{0, {}}, {1, {}}};
      for (auto& e : engines)
        if (rng() % 3 == 0) e.resident.insert(weights_key(model, {"a", "b", "x"}));
      const OptimizerContext ctx = s->optimizer_context(engines);
      const auto frontier = enumerate_physical(plan, ctx);
      const auto all = enumerate_all(plan, ctx);
      bool has_ai = false;
      visit(plan, [&](const LogicalPtr& n) { has_ai |= n->op == LogicalOp::AIInfer; });
      ai_plans += has_ai;

      const bool min_lat = rng() % 2 == 0;
      Objective obj;
      {
        std::vector<double> vals;
        for (const auto& a : all) vals.push_back(min_lat ? a->total.quality : a->total.latency);
        double bound = vals[rng() % vals.size()];
        switch (rng() % 4) {
          case 0: {  // usually infeasible
            double top = 0, low = vals[0];
            for (double v : vals) top = std::max(top, v), low = std::min(low, v);
            bound = min_lat ? std::min(1.0, top + 0.01) : low * 0.5;
            break;
          }
          case 1: bound = min_lat ? std::max(0.0, bound - 0.001) : bound * 1.01; break;
          default: break;
        }
        obj = min_lat ? Objective::min_latency(bound) : Objective::max_quality(bound);
      }

      // Oracle: scan every complete plan.
      const CostQuality* best = nullptr;
      const CostQuality* closest = nullptr;
      for (const auto& a : all) {
        const CostQuality& t = a->total;
        const bool feasible = min_lat ? t.quality >= obj.bound : t.latency <= obj.bound;
        auto better = [&](const CostQuality& x, const CostQuality& y, bool by_latency) {
          if (by_latency) return x.latency < y.latency || (x.latency == y.latency && x.quality > y.quality);
          return x.quality > y.quality || (x.quality == y.quality && x.latency < y.latency);
        };
        if (feasible && (!best || better(t, *best, min_lat))) best = &t;
        if (!closest || better(t, *closest, !min_lat)) closest = &t;
      }

      std::string why;
      try {
        const PhysicalPtr chosen = choose(frontier, obj);
        if (!best)
          why = "oracle infeasible, choose() returned a plan";
        else if (!close_to(chosen->total.latency, best->latency, 1e-9) ||
                 !close_to(chosen->total.quality, best->quality, 1e-9))
          why = "chose (" + fmt(chosen->total.latency) + "ms, q" + fmt(chosen->total.quality) + ") but optimum is (" +
                fmt(best->latency) + "ms, q" + fmt(best->quality) + ")";
      } catch (const InfeasibleError& e) {
        ++infeasible;
        if (best)
          why = "choose() flagged infeasible, oracle found a plan";
        else if (!close_to(e.best().latency, closest->latency, 1e-9) || !close_to(e.best().quality, closest->quality, 1e-9))
          why = "closest plan differs";
      }
      if (why.empty())
        ++ok;
      else if (first_failure.empty())
        first_failure = obj.to_string() + " over\n" + explain(plan) + why;
    }
    Outcome o;
    o.pass = ok == cases;
    o.detail = std::to_string(ok) + "/" + std::to_string(cases) + " match (" + std::to_string(infeasible) +
               " infeasible, " + std::to_string(ai_plans) + " with AI operators)";
    if (!first_failure.empty()) o.detail += "; first failure: " + first_failure;
    return o;
  });
}

// ---- 4 -------------------------------------------------------------------

Outcome cse_sharing(const std::vector<size_t>& ks, size_t rows) {
  return timed(0, [=] {
    SessionConfig sc;
    sc.use_cache = false;
    Session s(sc);
    const Workload w = gen_workload_r(s, rows, 7, 1);
    const PreparedQuery p = s.prepare(w.queries[0].sql);
    Reference ref(s.catalog(), s.runtime(), s.config().exec.inline_model, infer_variant(p.physical));
    const RowSet expected = ref.eval(p.rewritten.plan);

    std::ostringstream detail;
    for (size_t k : ks) {
      for (bool cse : {true, false}) {
        ExecutorConfig cfg = s.config().exec;
        cfg.engines = 4;
        cfg.cse = cse;
        Executor exec(s.catalog(), s.runtime(), nullptr, cfg);
        std::vector<QueryHandle> hs;
        for (size_t i = 0; i < k; ++i) hs.push_back(exec.submit(p.physical, "tenant0"));
        const Metrics m = exec.run();
        if (m.completed != k) return Outcome{false, "K=" + std::to_string(k) + ": " + std::to_string(m.completed) + " completed"};
        // The shared subplan is the join + train pipeline under AIInfer.
        std::optional<Hash128> train_id;
        for (const auto& n : exec.nodes())
          if (n.op == PhysOp::AITrain) train_id = n.plan_id;
        if (!train_id) return Outcome{false, "no AITrain node"};
        size_t counter = 0, max_exec = 0;
        for (const auto& n : exec.nodes()) {
          if (n.plan_id == *train_id) counter += n.executions;
          max_exec = std::max(max_exec, n.executions);
        }
        const size_t want = cse ? 1 : k;
        if (counter != want)
          return Outcome{false, "K=" + std::to_string(k) + (cse ? " CSE" : " no CSE") + ": counter " +
                                    std::to_string(counter) + ", expected " + std::to_string(want)};
        if (cse && max_exec != 1) return Outcome{false, "a node executed more than once with CSE"};
        for (size_t i = 0; i < k; ++i) {
          const RowSet& got = hs[i].wait().rows;
          if (!same_rows(got, hs[0].wait().rows)) return Outcome{false, "results differ between queries"};
          if (!same_rows(got, expected, 1e-9)) return Outcome{false, "result differs from the reference interpreter"};
        }
        if (cse) detail << "K=" << k << " counter 1 (" << m.cse_hits << " reuses); ";
      }
    }
    detail << "without CSE counter = K; " << expected.size() << " rows match the reference";
    return Outcome{true, detail.str()};
  });
}

// ---- 5 -------------------------------------------------------------------

Outcome scalability(size_t rows, size_t queries) {
  return timed(120.0, [=] {
    std::map<SharingMode, std::map<size_t, double>> thr;
    for (auto mode : {SharingMode::Full, SharingMode::Baseline}) {
      for (size_t e : {1, 2, 4, 8, 16}) {
        BenchConfig c = BenchConfig::desk_r();
        c.rows = rows;
        c.queries = queries;
        c.engines = e;
        c.sharing = mode;
        const BenchReport r = run_bench(c);
        if (r.metrics.failed || r.metrics.completed != queries)
          return Outcome{false, c.id() + ": " + std::to_string(r.metrics.failed) + " failed"};
        thr[mode][e] = r.metrics.overall.throughput_qpm;
      }
    }
    const double full = thr[SharingMode::Full][16] / thr[SharingMode::Full][1];
    const double base = thr[SharingMode::Baseline][16] / thr[SharingMode::Baseline][1];
    Outcome o;
    o.pass = full >= 12.8 && base <= 0.6 * full;
    std::ostringstream d;
    d << "full thr(e) qpm:";
    for (auto [e, t] : thr[SharingMode::Full]) d << " " << e << "=" << fmt(t, 5);
    d << "; ratio " << fmt(full) << " (>= 12.8); baseline ratio " << fmt(base) << " (<= " << fmt(0.6 * full) << ")";
    o.detail = d.str();
    return o;
  });
}

// ---- 6 -------------------------------------------------------------------

Outcome tenant_ordering(const std::vector<uint64_t>& seeds, size_t rows) {
  return timed(120.0, [=] {
    size_t ok = 0;
    std::ostringstream d;
    for (uint64_t seed : seeds) {
      BenchConfig c = BenchConfig::desk_t();
      c.rows = rows;
      c.seed = seed;
      BenchConfig bucket = c, fixed = c, seq = c;
      bucket.policy = BatchPolicy::bucket({32}, 8, 10, 200);
      seq.sequential = true;
      const BenchReport rb = run_bench(bucket), rf = run_bench(fixed), rs = run_bench(seq);
      const double tb = rb.metrics.overall.throughput_qpm, tf = rf.metrics.overall.throughput_qpm,
                   ts = rs.metrics.overall.throughput_qpm;
      const bool good = tb > tf && tf > ts && rb.metrics.padding <= 0.5 * rf.metrics.padding && !rb.metrics.failed &&
                        !rf.metrics.failed && !rs.metrics.failed;
      ok += good;
      d << "seed " << seed << ": " << fmt(tb, 5) << " > " << fmt(tf, 5) << " > " << fmt(ts, 5) << " qpm, padding "
        << fmt(rb.metrics.padding / rf.metrics.padding, 3) << "x" << (good ? "" : " FAIL") << "; ";
    }
    return Outcome{ok == seeds.size(), std::to_string(ok) + "/" + std::to_string(seeds.size()) + " seeds; " + d.str()};
  });
}

// ---- 7 -------------------------------------------------------------------

Outcome memory_ordering(const std::vector<uint64_t>& seeds, size_t rows) {
  return timed(120.0, [=] {
    const SessionConfig defaults;
    const CostProfile& emb = defaults.model_costs.at(ModelKind::HashEmbedder);
    const double weight = emb.weight_size_mb;
    const double state_allowance = defaults.exec.token_budget * emb.state_mb_per_token;
    size_t ok = 0;
    std::ostringstream d;
    for (uint64_t seed : seeds) {
      BenchConfig c = BenchConfig::desk_t();
      c.rows = rows;
      c.seed = seed;
      BenchConfig per = c, shared = c;
      per.sharing = SharingMode::PerTaskModel;
      shared.sharing = SharingMode::SharedModel;
      const double mp = run_bench(per).peak_memory_mb, ms = run_bench(shared).peak_memory_mb;
      const double tenants = static_cast<double>(c.tenants);
      const bool good = mp >= tenants * weight && ms <= 2 * weight + state_allowance && ms < mp;
      ok += good;
      d << "seed " << seed << ": per_task " << fmt(mp, 6) << " >= " << tenants * weight << ", shared " << fmt(ms, 6)
        << " <= " << 2 * weight + state_allowance << (good ? "" : " FAIL") << "; ";
    }
    return Outcome{ok == seeds.size(), std::to_string(ok) + "/" + std::to_string(seeds.size()) + " seeds; " + d.str()};
  });
}

// ---- 8 -------------------------------------------------------------------

namespace {

bool superseded(const CacheKey& k, const Catalog& cat) {
  if (k.snapshot < cat.current_version()) return true;
  if (k.model) {
    const auto latest = cat.latest_model(k.model->name);
    if (!latest || k.model->version < latest->version) return true;
  }
  return false;
}

/// Sort-based eviction oracle for a single tier.
struct EvictionOracle {
  struct E {
    double size;
    uint64_t count;
    double last;
    uint64_t seq;
    bool pinned;
  };
  double capacity;
  double decay;
  double now = 0;
  uint64_t next_seq = 0;
  std::map<CacheKey, E> entries;

  double score(const E& e) const { return static_cast<double>(e.count) * std::pow(decay, std::max(0.0, now - e.last)) / e.size; }
  double used() const {
    double u = 0;
    for (const auto& [k, e] : entries) u += e.size;
    return u;
  }

  /// Returns evicted keys in order, or nullopt when the entry is refused.
  std::optional<std::vector<CacheKey>> put(const CacheKey& key, double size, bool pinned) {
    entries.erase(key);
    const E fresh{size, 1, now, next_seq++, pinned};
    const double fresh_score = score(fresh);
    const double free = capacity - used();
    std::vector<CacheKey> victims;
    if (free < size) {
      std::vector<std::tuple<double, uint64_t, CacheKey>> cand;
      for (const auto& [k, e] : entries)
        if (!e.pinned && score(e) < fresh_score) cand.emplace_back(score(e), e.seq, k);
      std::sort(cand.begin(), cand.end());
      double reclaim = free;
      for (const auto& [sc, seq, k] : cand) {
        if (reclaim >= size) break;
        reclaim += entries.at(k).size;
        victims.push_back(k);
      }
      if (reclaim < size) return std::nullopt;
      for (const auto& k : victims) entries.erase(k);
    }
    entries[key] = fresh;
    return victims;
  }
  void get(const CacheKey& key) {
    auto it = entries.find(key);
    if (it == entries.end()) return;
    ++it->second.count;
    it->second.last = now;
  }
};

}  // namespace

Outcome cache_validity(size_t ops, size_t sequences, uint64_t seed) {
  return timed(0, [=] {
    std::mt19937_64 rng(seed);
    // Part 1: invalidation on append and model registration.
    Catalog cat;
    CacheManager cache;
    connect_cache_invalidation(cat, cache);
    const TableId t = cat.create_table({"t", {{"id", ColumnType::Int64}}, "id"});
    int64_t next_id = 0;
    auto append = [&] { cat.append_rows(t, {{Value{next_id++}}}); };
    auto register_model = [&](const std::string& name) {
      ModelRecord rec;
      rec.name = name;
      return cat.register_model(rec);
    };
    append();
    register_model("m0");
    register_model("m1");
    std::vector<CacheKey> keys;
    size_t stale_hits = 0, valid_hits = 0, stale_gets = 0, appends = 0, registrations = 0;
    const ArtifactKind kinds[] = {ArtifactKind::RelationalIntermediate, ArtifactKind::Embedding,
                                  ArtifactKind::ModelWeights, ArtifactKind::KVBlock, ArtifactKind::OptimizerState};
    for (size_t i = 0; i < ops; ++i) {
      cache.set_time(static_cast<double>(i));
      const auto r = rng() % 100;
      if (r < 15) {
        append();
        ++appends;
      } else if (r < 25) {
        register_model(rng() % 2 ? "m0" : "m1");
        ++registrations;
      } else if (r < 60) {
        CacheKey k;
        k.kind = kinds[rng() % 5];
        k.fingerprint = fnv1a_128("fp" + std::to_string(rng() % 6));
        k.snapshot = cat.current_version();
        if (k.kind != ArtifactKind::RelationalIntermediate) k.model = cat.latest_model(rng() % 2 ? "m0" : "m1")->ref();
        cache.put(k, 1.0 + static_cast<double>(rng() % 8), Tier::T1_host);
        keys.push_back(k);
      } else if (!keys.empty()) {
        const CacheKey& k = keys[rng() % keys.size()];
        const bool stale = superseded(k, cat);
        stale_gets += stale;
        if (cache.get(k)) (stale ? stale_hits : valid_hits)++;
      }
    }
    if (stale_hits) return Outcome{false, std::to_string(stale_hits) + " hits on superseded keys"};
    if (!valid_hits || !stale_gets) return Outcome{false, "sequence exercised no hits or no stale lookups"};

    // Part 2: eviction order against the oracle.
    size_t matched = 0, evictions = 0;
    std::string first_failure;
    for (size_t sq = 0; sq < sequences; ++sq) {
      TierConfig tc;
      tc.capacity_mb = {64, 1e-9, 1e-9};  // lower tiers hold nothing, so victims leave the cache
      tc.decay_per_ms = 0.97;
      CacheManager c(tc);
      EvictionOracle oracle{64, 0.97, 0, 0, {}};
      std::vector<CacheKey> seen;
      bool good = true;
      for (size_t op = 0; op < 60 && good; ++op) {
        oracle.now += static_cast<double>(rng() % 15);
        c.set_time(oracle.now);
        if (seen.empty() || rng() % 5 < 3) {
          CacheKey k;
          k.fingerprint = fnv1a_128("k" + std::to_string(rng() % 40));
          const double size = 1.0 + static_cast<double>(rng() % 24);
          const bool pinned = rng() % 12 == 0;
          PutOptions po;
          po.pinned = pinned;
          const PlacementReport rep = c.put(k, size, Tier::T0_accelerator, po);
          const auto want = oracle.put(k, size, pinned);
          std::vector<CacheKey> got;
          for (const auto& m : rep.moves) got.push_back(m.key);
          evictions += got.size();
          if (rep.tier.has_value() != want.has_value() || (want && *want != got)) good = false;
          seen.push_back(k);
        } else {
          const CacheKey& k = seen[rng() % seen.size()];
          c.get(k);
          oracle.get(k);
        }
      }
      std::set<CacheKey> resident;
      for (const auto& [k, e] : c.snapshot_index()->entries()) resident.insert(k);
      std::set<CacheKey> expect;
      for (const auto& [k, e] : oracle.entries) expect.insert(k);
      if (good && resident == expect)
        ++matched;
      else if (first_failure.empty())
        first_failure = "sequence " + std::to_string(sq);
    }
    Outcome o;
    o.pass = matched == sequences;
    o.detail = "0 stale hits over " + std::to_string(ops) + " ops (" + std::to_string(appends) + " appends, " +
               std::to_string(registrations) + " registrations, " + std::to_string(stale_gets) + " stale lookups, " +
               std::to_string(valid_hits) + " valid hits); eviction order " + std::to_string(matched) + "/" +
               std::to_string(sequences) + " (" + std::to_string(evictions) + " evictions)";
    if (!first_failure.empty()) o.detail += "; first mismatch: " + first_failure;
    return o;
  });
}

// ---- 9 -------------------------------------------------------------------

Outcome snapshot_consistency(size_t queries, size_t rows) {
  return timed(0, [=] {
    SessionConfig sc;
    sc.use_cache = false;
    Session s(sc);
    const Workload w = gen_workload_r(s, rows, 31, queries);
    Catalog& cat = s.catalog();
    const TableId users = *cat.find_table("users"), ratings = *cat.find_table("ratings");
    std::mt19937_64 rng(31);
    std::normal_distribution<double> normal(0.0, 1.0);
    int64_t next_row = static_cast<int64_t>(rows);
    const auto n_users = static_cast<int64_t>(std::max<size_t>(20, rows / 20));
    int64_t next_user = n_users;
    auto append_batch = [&] {
      // New viewers plus ratings that land in existing viewers' slices.
      std::vector<Row> u{{next_user++, static_cast<int64_t>(18 + rng() % 50), std::string(rng() % 2 ? "M" : "F")}};
      cat.append_rows(users, std::move(u));
      std::vector<Row> r;
      for (int i = 0; i < 40; ++i) {
        Row row{next_row++, static_cast<int64_t>(rng() % static_cast<uint64_t>(n_users)), static_cast<int64_t>(rng() % 500)};
        for (int c = 0; c < 8; ++c) row.push_back(normal(rng));
        row.push_back(3.0 + normal(rng));
        r.push_back(std::move(row));
      }
      cat.append_rows(ratings, std::move(r));
    };

    ExecutorConfig cfg = s.config().exec;
    cfg.engines = 4;
    cfg.real_time_scale = 0.002;
    Executor exec(cat, s.runtime(), nullptr, cfg);
    std::vector<PreparedQuery> prepared;
    std::vector<QueryHandle> handles;
    for (size_t i = 0; i < queries; ++i) {
      if (i % 5 == 0) append_batch();
      prepared.push_back(s.prepare(w.queries[i].sql));
      handles.push_back(exec.submit(prepared.back().physical, w.queries[i].tenant, static_cast<double>(i) * 2.0));
    }
    // Keep appending while the executor runs.
    std::thread runner([&] { exec.run(RunMode::RealTime); });
    size_t concurrent_appends = 0;
    while (std::any_of(handles.begin(), handles.end(), [](const QueryHandle& h) { return !h.ready(); })) {
      append_batch();
      ++concurrent_appends;
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    runner.join();

    size_t ok = 0;
    std::set<uint64_t> pins;
    std::string first_failure;
    for (size_t i = 0; i < queries; ++i) {
      const QueryResult& r = handles[i].wait();
      const uint64_t pin = prepared[i].pin.value;
      pins.insert(pin);
      bool good = r.audit.pin.value == pin && r.audit.train_rows > 0 && r.audit.infer_rows > 0 &&
                  r.audit.max_train_version <= pin && r.audit.max_infer_version <= pin;
      for (uint64_t v : r.rows.versions) good = good && v <= pin;
      Reference ref(cat, s.runtime(), cfg.inline_model, infer_variant(prepared[i].physical));
      good = good && same_rows(r.rows, ref.eval(prepared[i].rewritten.plan), 1e-8);
      if (good)
        ++ok;
      else if (first_failure.empty())
        first_failure = "query " + std::to_string(i) + " pin " + std::to_string(pin) + " train<=" +
                        std::to_string(r.audit.max_train_version) + " infer<=" + std::to_string(r.audit.max_infer_version);
    }
    Outcome o;
    o.pass = ok == queries && concurrent_appends > 0;
    o.detail = std::to_string(ok) + "/" + std::to_string(queries) + " queries within their pin over " +
               std::to_string(pins.size()) + " distinct pins, " + std::to_string(concurrent_appends) +
               " appends during execution, results equal the pinned reference";
    if (!first_failure.empty()) o.detail += "; first failure: " + first_failure;
    return o;
  });
}

// ---- 10 ------------------------------------------------------------------

Outcome ridge_correctness(size_t instances, uint64_t seed) {
  return timed(0, [=] {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst_diff = 0, worst_grad = 0;
    size_t ok = 0;
    for (size_t i = 0; i < instances; ++i) {
      const size_t n = 5 + rng() % 196, d = 1 + rng() % 8;
      const double lambda = std::pow(10.0, -2.0 + 3.0 * static_cast<double>(rng() % 1000) / 1000.0);
      DenseMatrix x(n, d);
      std::vector<std::vector<double>> rows(n, std::vector<double>(d));
      std::vector<double> y(n), truth(d);
      for (auto& t : truth) t = normal(rng);
      for (size_t r = 0; r < n; ++r) {
        double acc = 0.5;
        for (size_t c = 0; c < d; ++c) {
          rows[r][c] = x.at(r, c) = normal(rng);
          acc += truth[c] * rows[r][c];
        }
        y[r] = acc + 0.1 * normal(rng);
      }
      const std::vector<double> w = train_ridge(x, y, lambda);
      const std::vector<double> ref = normal_equation_ridge(rows, y, lambda);
      double diff = 0;
      for (size_t k = 0; k <= d; ++k) diff = std::max(diff, std::fabs(w[k] - ref[k]) / std::max(1.0, std::fabs(ref[k])));

      // f(w, b) = ½||Xw + b − y||² + ½λ||w||², central differences.
      auto f = [&](const std::vector<long double>& p) {
        long double loss = 0;
        for (size_t r = 0; r < n; ++r) {
          long double e = p[d] - y[r];
          for (size_t c = 0; c < d; ++c) e += p[c] * rows[r][c];
          loss += e * e;
        }
        long double pen = 0;
        for (size_t c = 0; c < d; ++c) pen += p[c] * p[c];
        return 0.5L * loss + 0.5L * lambda * pen;
      };
      std::vector<long double> p(w.begin(), w.end());
      long double g2 = 0;
      const long double h = 1e-6L;
      for (size_t k = 0; k <= d; ++k) {
        auto hi = p, lo = p;
        hi[k] += h;
        lo[k] -= h;
        const long double g = (f(hi) - f(lo)) / (2 * h);
        g2 += g * g;
      }
      const double grad = static_cast<double>(std::sqrt(g2));
      worst_diff = std::max(worst_diff, diff);
      worst_grad = std::max(worst_grad, grad);
      ok += diff <= 1e-8 && grad < 1e-6;
    }
    std::ostringstream d;
    d << ok << "/" << instances << "; max weight diff " << worst_diff << ", max gradient norm " << worst_grad;
    return Outcome{ok == instances, d.str()};
  });
}

// ---- 11 ------------------------------------------------------------------

Outcome slicing_compliance(size_t perturbations, uint64_t seed) {
  return timed(0, [=] {
    Session s;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const char* cols = "(id INT64 PRIMARY KEY, f0 FLOAT64, f1 FLOAT64, f2 FLOAT64, f3 FLOAT64, f4 FLOAT64, y FLOAT64)";
    s.execute(std::string("CREATE TABLE f ") + cols);
    s.execute(std::string("CREATE TABLE g ") + cols);
    std::vector<Row> train, f_rows, g_rows;
    const double wt[] = {0.7, -1.2, 0.4, 0.9, -0.5};
    for (int64_t i = 0; i < 300; ++i) {
      Row r{i};
      double y = 1.5;
      for (double w : wt) {
        r.push_back(normal(rng));
        y += w * as_double(r.back());
      }
      r.push_back(y + 0.2 * normal(rng));
      train.push_back(r);
      // g differs from f only in the unauthorized columns f1 and f3.
      Row g = r;
      g[2] = 50.0 * normal(rng);
      g[4] = -30.0 * normal(rng);
      f_rows.push_back(r);
      g_rows.push_back(std::move(g));
    }
    s.catalog().append_rows(*s.catalog().find_table("f"), f_rows);
    s.execute("CREATE MODEL sm KIND ridge_regressor ON f FEATURES (f0, f1, f2, f3, f4) TARGET y");
    s.catalog().append_rows(*s.catalog().find_table("g"), g_rows);
    TenantPolicy pol;
    pol.tenant = "alice";
    for (const char* t : {"f", "g"})
      for (const char* c : {"id", "f0", "f2", "f4"}) pol.allowed_columns.insert({t, c});
    pol.allowed_models.insert("sm");
    s.catalog().register_tenant(pol);
    const std::vector<std::string> permitted{"f0", "f2", "f4"};

    // Scratch-trained oracle on the permitted columns.
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (const auto& r : train) {
      x.push_back({as_double(r[1]), as_double(r[3]), as_double(r[5])});
      y.push_back(as_double(r[6]));
    }
    const std::vector<double> w = normal_equation_ridge(x, y, s.runtime().config().lambda);
    auto oracle = [&](const Row& r) { return w[0] * as_double(r[1]) + w[1] * as_double(r[3]) + w[2] * as_double(r[5]) + w[3]; };

    const auto rec = s.catalog().latest_model("sm");
    const auto sliced = s.runtime().slice_for_mask(*rec, permitted).model;
    std::vector<InferenceInput> base;
    for (size_t i = 0; i < 64; ++i) {
      InferenceInput in;
      in.features = {f_rows[i][1], f_rows[i][2], f_rows[i][3], f_rows[i][4], f_rows[i][5]};
      in.key = f_rows[i][0];
      in.length = 5;
      base.push_back(in);
    }
    const InferResult ref = s.runtime().infer(*sliced, base);
    double worst = 0;
    for (size_t i = 0; i < base.size(); ++i)
      worst = std::max(worst, std::fabs(as_double(ref.predictions[i]) - oracle(f_rows[i])) /
                                  std::max(1.0, std::fabs(oracle(f_rows[i]))));
    if (worst > 1e-8) return Outcome{false, "sliced model differs from the oracle by " + fmt(worst)};

    size_t unchanged = 0;
    for (size_t t = 0; t < perturbations; ++t) {
      auto batch = base;
      for (auto& in : batch) {
        for (size_t c : {1, 3}) {
          switch (rng() % 3) {
            case 0: in.features[c] = 1e6 * normal(rng); break;
            case 1: in.features[c] = Value{}; break;
            default: in.features[c] = normal(rng); break;
          }
        }
      }
      const InferResult got = s.runtime().infer(*sliced, batch);
      bool same = true;
      for (size_t i = 0; i < batch.size(); ++i) same = same && values_equal(got.predictions[i], ref.predictions[i]);
      unchanged += same;
    }
    if (unchanged != perturbations)
      return Outcome{false, std::to_string(unchanged) + "/" + std::to_string(perturbations) + " perturbations unchanged"};

    // Through SQL as the restricted tenant, over f and over g.
    sql::BindOptions opts;
    opts.tenant = "alice";
    std::vector<RowSet> outs;
    for (const char* t : {"f", "g"}) {
      const auto r = s.execute(std::string("SELECT p.id, p.yhat FROM (PREDICT VALUE OF yhat WITH PRIMARY KEY d.id FROM ") +
                                   t + " d USING MODEL sm) p",
                               opts);
      outs.push_back(*r.rows);
    }
    if (!same_rows(outs[0], outs[1])) return Outcome{false, "SQL predictions depend on unauthorized columns"};
    for (const auto& row : outs[0].rows) {
      const auto id = std::get<int64_t>(row[0]);
      if (!close_to(as_double(row[1]), oracle(f_rows[static_cast<size_t>(id)]), 1e-8))
        return Outcome{false, "SQL prediction differs from the oracle for id " + std::to_string(id)};
    }
    return Outcome{true, std::to_string(perturbations) + "/" + std::to_string(perturbations) +
                             " perturbations unchanged; max oracle diff " + fmt(worst) + "; SQL path over " +
                             std::to_string(outs[0].size()) + " rows agrees"};
  });
}

// ---- 12 ------------------------------------------------------------------

Outcome batch_conservation(size_t items, uint64_t seed) {
  return timed(0, [=] {
    SessionConfig sc;
    sc.use_cache = false;
    sc.exec.engines = 4;
    sc.exec.overload_rate = 0.3;
    sc.exec.migrate_rate = 0.5;
    sc.exec.seed = seed;
    sc.exec.policy = BatchPolicy::bucket({32}, 8, 10, 200);
    Session s(sc);
    const size_t tenants = 4;
    const Workload w = gen_workload_t(s, items / tenants, tenants, seed);
    s.execute("CREATE MODEL gen KIND generative_mock ON docs_0 FEATURES (body)");
    Executor exec(s.catalog(), s.runtime(), nullptr, s.config().exec);
    std::mt19937_64 rng(seed);
    for (size_t t = 0; t < tenants; ++t) {
      // Half the tenants embed, half generate.
      const std::string sql =
          t % 2 ? "SELECT p.id, p.reply FROM (PREDICT VALUE OF reply WITH PRIMARY KEY d.id FROM docs_" +
                      std::to_string(t) + " d USING MODEL gen) p"
                : w.queries[t].sql;
      exec.submit(s.prepare(sql).physical, w.queries[t].tenant, static_cast<double>(rng() % 50));
    }
    const Metrics m = exec.run();
    const auto& disp = exec.item_dispatches();
    size_t once = 0;
    for (const auto& [k, n] : disp) once += n == 1;
    Outcome o;
    o.pass = m.completed == tenants && m.failed == 0 && disp.size() == items && once == items &&
             m.budget_violations == 0 && m.overloads > 0 && m.migrations > 0;
    o.detail = std::to_string(once) + "/" + std::to_string(items) + " items dispatched exactly once (" +
               std::to_string(disp.size()) + " tracked), " + std::to_string(m.budget_violations) +
               " budget violations, " + std::to_string(m.overloads) + " overloads, " + std::to_string(m.migrations) +
               " migrations, " + std::to_string(m.batches) + " batches";
    if (!m.diagnostic.empty()) o.detail += "; " + m.diagnostic;
    return o;
  });
}

}  // namespace neurq::testing
