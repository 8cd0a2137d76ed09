#include "neurq/executor/executor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "neurq/common/error.hpp"
#include "neurq/executor/relational.hpp"

namespace neurq {

// ---------------------------------------------------------------------------
// QueryHandle

uint64_t QueryHandle::id() const { return state_ ? state_->id : 0; }

bool QueryHandle::ready() const {
  if (!state_) return false;
  std::lock_guard lock(state_->mu);
  return state_->done;
}

const QueryResult& QueryHandle::wait() const {
  if (!state_) fail(ErrorCode::InvalidArgument, "empty query handle");
  std::unique_lock lock(state_->mu);
  state_->cv.wait(lock, [&] { return state_->done; });
  if (state_->error) std::rethrow_exception(state_->error);
  return state_->result;
}

// ---------------------------------------------------------------------------
// Executor internals

namespace {

enum class NodeState { Waiting, Ready, Running, Done, Failed };

bool is_db_op(PhysOp op) {
  switch (op) {
    case PhysOp::AITrain:
    case PhysOp::AIInfer:
    case PhysOp::CacheRead: return false;
    default: return true;
  }
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const double rank = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(rank));
  const auto hi = static_cast<size_t>(std::ceil(rank));
  return v[lo] + (v[hi] - v[lo]) * (rank - static_cast<double>(lo));
}

}  // namespace

struct Executor::Impl {
  Catalog& catalog;
  const ModelRuntime& runtime;
  CacheManager* cache;
  ExecutorConfig cfg;
  std::mt19937_64 rng;
  RunMode mode = RunMode::VirtualTime;

  // ---- exec graph ----------------------------------------------------------
  struct Node {
    uint64_t id = 0;
    PhysicalPtr phys;
    Hash128 key;
    std::vector<uint64_t> children;
    std::vector<uint64_t> parents;
    std::vector<uint64_t> consumers;
    uint64_t first_query = 0;
    NodeState state = NodeState::Waiting;
    size_t executions = 0;
    std::shared_ptr<const RowSet> result;
    std::shared_ptr<const LoadedModel> model;  // AITrain output / AIInfer model
    std::exception_ptr error;

    // AIInfer
    std::string queue_key;
    uint64_t train_node = 0;
    std::vector<InferenceInput> inputs;
    std::vector<Value> preds;
    size_t remaining = 0;
    std::string model_key;
    double weight_mb = 0;
    double load_cost = 0;
    double state_per_token = 0;

    // CacheRead miss path
    bool expanded = false;
    // DB result staged until the coordinator finishes the operator
    std::shared_ptr<const RowSet> pending;
  };
  std::map<uint64_t, Node> nodes;
  uint64_t next_node = 1;
  std::unordered_map<Hash128, uint64_t, Hash128Hasher> shared;

  struct Query {
    uint64_t id = 0;
    std::string tenant;
    PhysicalPtr plan;
    double arrival = 0;
    uint64_t root = 0;
    bool admitted = false;
    bool finished = false;
    SnapshotVersion pin;
    double transfer = 0;
    SnapshotAudit audit;
    std::shared_ptr<QueryHandle::State> handle;
  };
  std::map<uint64_t, Query> queries;
  uint64_t next_query = 1;
  std::deque<uint64_t> waitlist;  // arrived, not yet admitted (sequential mode)
  size_t active = 0;

  // ---- AI queues -----------------------------------------------------------
  struct Queue {
    explicit Queue(const BatchPolicy& p) : batcher(p) {}
    Batcher batcher;
    std::shared_ptr<const LoadedModel> model;
    PipelineVariant variant = PipelineVariant::Direct;
    std::optional<int> engine;
    std::string model_key;
    double weight_mb = 0, load_cost = 0, state_per_token = 0;
  };
  std::map<std::string, Queue> ai_queues;
  std::map<std::string, size_t> waiting_producers;

  struct Task {
    enum class Kind { Batch, Train } kind = Kind::Batch;
    EngineTask et;
    std::vector<PendingItem> items;
    std::vector<Value> preds;
    std::string queue;
    uint64_t train_node = 0;
    std::shared_ptr<const LoadedModel> trained;
    std::optional<int> engine;  // placement
    double padding = 0;
    bool refused = false;  // counted once as an overload
  };
  std::map<uint64_t, Task> tasks;
  // Formed tasks waiting for an engine, FIFO per placement (-1 = any).
  std::map<int, std::deque<uint64_t>> dispatchable;
  size_t undispatched = 0;

  void enqueue_dispatch(uint64_t id) {
    const auto& t = tasks.at(id);
    dispatchable[t.engine.value_or(-1)].push_back(id);
    ++undispatched;
  }
  uint64_t next_task = 1;
  uint64_t next_item_seq = 0;

  std::vector<EngineState> engines;
  std::map<int, uint64_t> running_task;  // engine → task

  // ---- coordinator ---------------------------------------------------------
  struct CoordTask {
    uint64_t query;
    uint64_t node;
    uint64_t seq;
    bool is_export = false;
    uint64_t task = 0;
    auto key() const { return std::tuple(query, node, seq); }
  };
  struct CoordOrder {
    bool operator()(const CoordTask& a, const CoordTask& b) const { return a.key() < b.key(); }
  };
  std::set<CoordTask, CoordOrder> coord_queue;
  std::optional<CoordTask> coord_running;
  uint64_t coord_seq = 0;

  // ---- events --------------------------------------------------------------
  enum class EvKind { Arrival, CoordDone, EngineDone, Wake };
  struct Event {
    double time;
    uint64_t query;
    uint64_t node;
    uint64_t seq;
    EvKind kind;
    int engine = -1;
    bool operator>(const Event& o) const {
      return std::tie(time, query, node, seq) > std::tie(o.time, o.query, o.node, o.seq);
    }
  };
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
  uint64_t event_seq = 0;
  std::set<double> wakes;
  double now = 0;

  // real-time plumbing
  std::chrono::steady_clock::time_point wall_start;
  std::mutex done_mu;
  std::condition_variable done_cv;
  std::vector<int> done_engines;
  std::vector<std::future<void>> workers;

  // ---- metrics -------------------------------------------------------------
  Metrics metrics;
  std::map<std::tuple<uint64_t, uint64_t, size_t>, size_t> dispatched;
  std::mutex submit_mu;

  Impl(Catalog& c, const ModelRuntime& r, CacheManager* cm, ExecutorConfig config)
      : catalog(c), runtime(r), cache(cm), cfg(std::move(config)), rng(cfg.seed) {
    for (size_t i = 0; i < cfg.engines; ++i) {
      EngineState e;
      e.id = static_cast<int>(i);
      e.token_budget = cfg.token_budget;
      e.memory_budget_mb = cfg.memory_budget_mb;
      engines.push_back(e);
    }
    metrics.peak_memory_mb.assign(cfg.engines, 0.0);
  }

  void push_event(double t, uint64_t q, uint64_t n, EvKind k, int engine = -1) {
    events.push({t, q, n, event_seq++, k, engine});
  }

  double chance() { return std::uniform_real_distribution<double>(0, 1)(rng); }

  double wall_now() const {
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - wall_start).count();
    return ms / cfg.real_time_scale;
  }

  // ---- graph construction --------------------------------------------------

  uint64_t build(const PhysicalPtr& p, Query& q, std::map<const PhysicalNode*, uint64_t>& local) {
    std::vector<uint64_t> kids;
    for (const auto& c : p->children) kids.push_back(build(c, q, local));

    std::string k = p->id.hex();
    if (!cfg.cse) k += "#q" + std::to_string(q.id);
    if (!cfg.shared_model && (p->op == PhysOp::AIInfer || p->op == PhysOp::AITrain)) k += "#t" + q.tenant;
    const Hash128 key = fnv1a_128(k);
    if (auto it = shared.find(key); it != shared.end()) {
      ++metrics.cse_hits;
      Node& n = nodes.at(it->second);
      add_consumer(n.id, q.id);
      local[p.get()] = n.id;
      return n.id;
    }
    const uint64_t id = next_node++;
    Node& n = nodes[id];
    n.id = id;
    n.phys = p;
    n.key = key;
    n.children = kids;
    n.first_query = q.id;
    for (uint64_t c : kids) nodes.at(c).parents.push_back(id);
    shared[key] = id;
    local[p.get()] = id;
    if (p->op == PhysOp::AIInfer) prepare_infer(n, q, local);
    add_consumer(id, q.id);
    return id;
  }

  void add_consumer(uint64_t node, uint64_t query) {
    std::vector<uint64_t> stack{node};
    while (!stack.empty()) {
      Node& n = nodes.at(stack.back());
      stack.pop_back();
      if (std::find(n.consumers.begin(), n.consumers.end(), query) != n.consumers.end()) continue;
      n.consumers.push_back(query);
      for (uint64_t c : n.children) stack.push_back(c);
    }
  }

  void prepare_infer(Node& n, const Query& q, const std::map<const PhysicalNode*, uint64_t>& local) {
    const LogicalNode& L = *n.phys->logical;
    const AISpec& ai = *L.ai;
    std::string variant(to_string(n.phys->variant));
    if (ai.model) {
      n.model_key = weights_key(*ai.model, ai.mask);
      auto rec = catalog.model(*ai.model);
      if (!rec) fail(ErrorCode::UnknownModel, ai.model->to_string());
      const auto stages = n.phys->variant == PipelineVariant::Direct || rec->staged_profiles.empty()
                              ? std::vector<CostProfile>{rec->cost_profile}
                              : rec->staged_profiles;
      for (const auto& s : stages) {
        n.weight_mb += s.weight_size_mb;
        n.load_cost += s.load_cost;
        n.state_per_token += s.state_mb_per_token;
      }
    } else {
      const PhysicalNode* cur = n.phys->children.at(0).get();
      while (cur && cur->op != PhysOp::AITrain && !(cur->op == PhysOp::CacheRead && cur->logical->op == LogicalOp::AITrain)) {
        cur = cur->children.size() == 1 ? cur->children[0].get() : nullptr;
      }
      if (!cur) fail(ErrorCode::InvalidArgument, "inline AIInfer without an AITrain below it");
      n.train_node = local.at(cur);
      n.model_key = "inline#" + std::to_string(n.train_node);
      const auto stages = n.phys->variant == PipelineVariant::Direct
                              ? std::vector<CostProfile>{cfg.inline_model.infer}
                              : cfg.inline_model.staged_infer;
      for (const auto& s : stages) {
        n.weight_mb += s.weight_size_mb;
        n.load_cost += s.load_cost;
        n.state_per_token += s.state_mb_per_token;
      }
    }
    if (!cfg.shared_model) n.model_key += "#t" + q.tenant;
    n.queue_key = n.model_key + "|" + variant + "|" +
                  (n.phys->engine ? std::to_string(*n.phys->engine) : std::string("any")) + "|s" +
                  std::to_string(q.pin.value);
    ++waiting_producers[n.queue_key];
  }

  // ---- admission -----------------------------------------------------------

  void arrive(uint64_t qid) {
    if (cfg.sequential && active > 0) {
      waitlist.push_back(qid);
      return;
    }
    admit(qid);
  }

  void admit(uint64_t qid) {
    Query& q = queries.at(qid);
    q.admitted = true;
    ++active;
    std::map<const PhysicalNode*, uint64_t> local;
    try {
      q.root = build(q.plan, q, local);
    } catch (...) {
      finish_query(q, std::current_exception());
      return;
    }
    // Leaves and nodes whose inputs are already complete become ready.
    std::vector<uint64_t> order;
    collect(q.root, order);
    for (uint64_t id : order) {
      Node& n = nodes.at(id);
      if (n.state == NodeState::Waiting && children_done(n)) make_ready(n);
    }
    Node& root = nodes.at(q.root);
    if (root.state == NodeState::Done) finish_query(q, nullptr);
    if (root.state == NodeState::Failed) finish_query(q, root.error);
  }

  void collect(uint64_t id, std::vector<uint64_t>& out) {
    std::set<uint64_t> seen;
    std::function<void(uint64_t)> go = [&](uint64_t n) {
      if (!seen.insert(n).second) return;
      for (uint64_t c : nodes.at(n).children) go(c);
      out.push_back(n);
    };
    go(id);
  }

  bool children_done(const Node& n) const {
    for (uint64_t c : n.children)
      if (nodes.at(c).state != NodeState::Done) return false;
    return true;
  }

  // ---- node lifecycle ------------------------------------------------------

  void make_ready(Node& n) {
    n.state = NodeState::Ready;
    const PhysOp op = n.phys->op;
    if (is_db_op(op) || op == PhysOp::CacheRead) {
      coord_queue.insert({n.first_query, n.id, coord_seq++});
      return;
    }
    try {
      if (op == PhysOp::AITrain)
        start_train(n);
      else
        start_infer(n);
    } catch (...) {
      fail_node(n, std::current_exception());
    }
  }

  void complete(Node& n) {
    n.state = NodeState::Done;
    ++n.executions;
    materialize(n);
    for (uint64_t qid : n.consumers) {
      Query& q = queries.at(qid);
      if (q.finished) continue;
      if (n.phys->op == PhysOp::AITrain) {
        const RowSet& in = *nodes.at(n.children[0]).result;
        for (uint64_t v : in.versions) q.audit.max_train_version = std::max(q.audit.max_train_version, v);
        q.audit.train_rows += in.size();
      } else if (n.phys->op == PhysOp::AIInfer) {
        for (uint64_t v : n.result->versions) q.audit.max_infer_version = std::max(q.audit.max_infer_version, v);
        q.audit.infer_rows += n.result->size();
      }
    }
    for (uint64_t pid : n.parents) {
      Node& p = nodes.at(pid);
      if (p.state == NodeState::Waiting && children_done(p)) {
        if (p.phys->op == PhysOp::AIInfer) --waiting_producers[p.queue_key];
        make_ready(p);
      }
    }
    for (uint64_t qid : std::vector<uint64_t>(n.consumers)) {
      Query& q = queries.at(qid);
      if (!q.finished && q.root == n.id) finish_query(q, nullptr);
    }
  }

  void fail_node(Node& n, std::exception_ptr err) {
    if (n.state == NodeState::Failed) return;
    if (n.state == NodeState::Waiting && n.phys->op == PhysOp::AIInfer) --waiting_producers[n.queue_key];
    n.state = NodeState::Failed;
    n.error = err;
    for (uint64_t pid : n.parents) fail_node(nodes.at(pid), err);
    for (uint64_t qid : std::vector<uint64_t>(n.consumers)) {
      Query& q = queries.at(qid);
      if (!q.finished && q.root == n.id) finish_query(q, err);
    }
  }

  void finish_query(Query& q, std::exception_ptr err) {
    q.finished = true;
    --active;
    for (auto& e : engines)
      e.blocks.erase(std::remove_if(e.blocks.begin(), e.blocks.end(), [&](const StateBlock& b) { return b.query == q.id; }),
                     e.blocks.end());
    {
      std::lock_guard lock(q.handle->mu);
      if (err) {
        q.handle->error = err;
        ++metrics.failed;
      } else {
        QueryResult& r = q.handle->result;
        r.query = q.id;
        r.tenant = q.tenant;
        r.rows = *nodes.at(q.root).result;
        r.arrival_ms = q.arrival;
        r.transfer_ms = q.transfer;
        r.completed_ms = now + q.transfer;
        r.audit = q.audit;
        r.audit.pin = q.pin;
        for (uint64_t v : r.rows.versions) r.audit.max_result_version = std::max(r.audit.max_result_version, v);
        ++metrics.completed;
      }
      q.handle->done = true;
    }
    q.handle->cv.notify_all();
    if (cfg.sequential && !waitlist.empty()) {
      const uint64_t next = waitlist.front();
      waitlist.pop_front();
      admit(next);
    }
  }

  void materialize(const Node& n) {
    if (!cfg.materialize || !cache || n.phys->op == PhysOp::CacheRead) return;
    auto key = materialization_key(*n.phys);
    if (!key || cache->contains(*key)) return;
    PutOptions opts;
    double size = 0;
    if (n.phys->op == PhysOp::AITrain) {
      opts.payload = n.model;
      size = std::max(1e-3, cfg.inline_model.train.weight_size_mb);
    } else {
      opts.payload = n.result;
      size = rowset_size_mb(*n.result);
    }
    cache->set_time(now);
    const auto& tc = cache->config();
    if (size <= *std::max_element(tc.capacity_mb.begin(), tc.capacity_mb.end())) cache->put(*key, size, Tier::T1_host, opts);
  }

  // ---- coordinator ---------------------------------------------------------

  const RowSet& input(const Node& n, size_t i) const { return *nodes.at(n.children.at(i)).result; }

  /// Runs a DB operator; returns its simulated latency.
  double run_db(Node& n) {
    const PhysicalNode& p = *n.phys;
    const LogicalNode& L = *p.logical;
    const SnapshotVersion pin = L.snapshot.value_or(SnapshotVersion{});
    std::shared_ptr<RowSet> out;
    double left = 0, right = 0;
    switch (p.op) {
      case PhysOp::FullScan:
      case PhysOp::FilteredScan:
        out = std::make_shared<RowSet>(catalog.scan(L.table, pin, L.columns, L.predicate, L.alias));
        out->schema = L.schema;
        left = static_cast<double>(catalog.stats(L.table, pin).row_count);
        break;
      case PhysOp::Filter:
        out = std::make_shared<RowSet>(exec_filter(input(n, 0), L.predicate));
        left = static_cast<double>(input(n, 0).size());
        break;
      case PhysOp::Project:
        out = std::make_shared<RowSet>(exec_project(input(n, 0), L));
        left = static_cast<double>(input(n, 0).size());
        break;
      case PhysOp::HashJoin:
      case PhysOp::MergeJoin:
      case PhysOp::NestedLoopJoin:
        out = std::make_shared<RowSet>(exec_join(input(n, 0), input(n, 1), L.predicate, p.op));
        left = static_cast<double>(input(n, 0).size());
        right = static_cast<double>(input(n, 1).size());
        break;
      case PhysOp::HashAggregate:
        out = std::make_shared<RowSet>(exec_aggregate(input(n, 0), L));
        left = static_cast<double>(input(n, 0).size());
        break;
      case PhysOp::Sort:
        out = std::make_shared<RowSet>(exec_sort(input(n, 0), L.sort_keys));
        left = static_cast<double>(input(n, 0).size());
        break;
      case PhysOp::Limit:
        out = std::make_shared<RowSet>(exec_limit(input(n, 0), L.limit));
        left = static_cast<double>(input(n, 0).size());
        break;
      default: fail(ErrorCode::InvalidArgument, "not a DB operator");
    }
    n.pending = std::move(out);
    return db_op_latency(p.op, cfg.db, left, right, L.limit);
  }

  /// CacheRead: returns latency, or nullopt when the entry is gone and the
  /// fallback subtree was spliced in.
  std::optional<double> run_cache_read(Node& n) {
    if (n.expanded) {
      const Node& fb = nodes.at(n.children.at(0));
      n.pending = fb.result;
      n.model = fb.model;
      return 0.0;
    }
    std::optional<CacheHit> hit;
    if (cache) {
      cache->set_time(now);
      hit = cache->get(*n.phys->cache_key);
    }
    if (hit) {
      if (auto* rs = std::any_cast<std::shared_ptr<const RowSet>>(&hit->payload)) {
        n.pending = *rs;
      } else if (auto* m = std::any_cast<std::shared_ptr<const LoadedModel>>(&hit->payload)) {
        n.model = *m;
        n.pending = std::make_shared<RowSet>();
      } else {
        hit.reset();
      }
    }
    if (hit) {
      ++metrics.cache_hits;
      return hit->latency_ms;
    }
    // Miss: recompute through the fallback plan.
    ++metrics.cache_fallbacks;
    n.expanded = true;
    Query& q = queries.at(n.first_query);
    std::map<const PhysicalNode*, uint64_t> local;
    const uint64_t fb = build(n.phys->fallback, q, local);
    for (uint64_t c : n.consumers) add_consumer(fb, c);
    n.children = {fb};
    nodes.at(fb).parents.push_back(n.id);
    n.state = NodeState::Waiting;
    std::vector<uint64_t> order;
    collect(fb, order);
    for (uint64_t id : order) {
      Node& x = nodes.at(id);
      if (x.state == NodeState::Waiting && children_done(x)) make_ready(x);
    }
    if (nodes.at(fb).state == NodeState::Done && n.state == NodeState::Waiting) make_ready(n);
    return std::nullopt;
  }

  void coordinator_step() {
    while (!coord_running && !coord_queue.empty()) {
      CoordTask t = *coord_queue.begin();
      coord_queue.erase(coord_queue.begin());
      double cost = 0;
      if (t.is_export) {
        cost = cfg.export_latency_ms;
      } else {
        Node& n = nodes.at(t.node);
        if (n.state == NodeState::Failed) continue;
        try {
          if (n.phys->op == PhysOp::CacheRead) {
            auto c = run_cache_read(n);
            if (!c) continue;
            cost = *c;
          } else {
            cost = run_db(n);
          }
        } catch (...) {
          fail_node(n, std::current_exception());
          continue;
        }
        n.state = NodeState::Running;
      }
      coord_running = t;
      push_event(now + cost, t.query, t.node, EvKind::CoordDone);
    }
  }

  void coordinator_done() {
    CoordTask t = *coord_running;
    coord_running.reset();
    if (t.is_export) {
      enqueue_dispatch(t.task);
      return;
    }
    Node& n = nodes.at(t.node);
    n.result = std::move(n.pending);
    complete(n);
  }

  // ---- AI work -------------------------------------------------------------

  void start_train(Node& n) {
    const LogicalNode& L = *n.phys->logical;
    const AISpec& ai = *L.ai;
    const RowSet& in = input(n, 0);
    std::vector<int> cols;
    for (const auto& f : ai.features) cols.push_back(find_column(in.schema, f.qualifier, f.name));
    cols.push_back(find_column(in.schema, ai.target->qualifier, ai.target->name));
    cols.push_back(find_column(in.schema, ai.pk.qualifier, ai.pk.name));
    for (int c : cols)
      if (c < 0) fail(ErrorCode::UnknownColumn, "training input lacks a feature, target or key column");
    RowSet rows;
    for (const auto& r : in.rows) {
      Row x;
      for (int c : cols) x.push_back(r[c]);
      rows.rows.push_back(std::move(x));
    }
    const auto stages = n.phys->variant == PipelineVariant::Direct ? std::vector<CostProfile>{cfg.inline_model.train}
                                                                   : cfg.inline_model.staged_train;
    Task t;
    t.kind = Task::Kind::Train;
    t.train_node = n.id;
    // Nothing to learn from an empty input; the paired AIInfer sees no rows either.
    if (!rows.rows.empty())
      t.trained = runtime.train_inline(ai.feature_names, ai.feature_types, rows, n.phys->variant,
                                       cfg.inline_model.infer, cfg.inline_model.staged_infer);
    for (const auto& s : stages) t.et.cost += batch_cost(s, in.size(), 0, 0);
    t.et.id = next_task++;
    n.state = NodeState::Running;
    tasks[t.et.id] = std::move(t);
    enqueue_dispatch(t.et.id);
  }

  void start_infer(Node& n) {
    const LogicalNode& L = *n.phys->logical;
    const AISpec& ai = *L.ai;
    const RowSet& in = input(n, 0);
    n.state = NodeState::Running;
    if (in.rows.empty()) {
      n.inputs.clear();
      n.preds.clear();
      finish_infer(n);
      return;
    }
    std::shared_ptr<const LoadedModel> model;
    if (ai.model) {
      auto rec = catalog.model(*ai.model);
      if (!rec) fail(ErrorCode::UnknownModel, ai.model->to_string());
      model = ai.sliced() ? runtime.slice_for_mask(*rec, ai.mask).model : runtime.load(*rec);
    } else {
      model = nodes.at(n.train_node).model;
      if (!model) fail(ErrorCode::InvalidArgument, "training node produced no model");
    }
    n.model = model;
    std::vector<int> feat;
    for (const auto& f : ai.features) feat.push_back(find_column(in.schema, f.qualifier, f.name));
    const int pk = find_column(in.schema, ai.pk.qualifier, ai.pk.name);
    for (int c : feat)
      if (c < 0) fail(ErrorCode::UnknownColumn, "inference input lacks a feature column");
    if (pk < 0) fail(ErrorCode::UnknownColumn, "inference input lacks the key column");
    n.inputs.clear();
    for (const auto& r : in.rows) {
      InferenceInput x;
      for (int c : feat) x.features.push_back(r[c]);
      x.key = r[pk];
      if (model->kind == ModelKind::RidgeRegressor) {
        x.length = x.features.size();
      } else {
        const auto* s = std::get_if<std::string>(&x.features[0]);
        x.length = std::max<size_t>(1, s ? whitespace_token_count(*s) : 0);
      }
      n.inputs.push_back(std::move(x));
    }
    n.preds.assign(n.inputs.size(), Value{});
    n.remaining = n.inputs.size();
    n.state = NodeState::Running;
    if (n.inputs.empty()) {
      finish_infer(n);
      return;
    }
    auto [it, fresh] = ai_queues.try_emplace(n.queue_key, cfg.policy);
    Queue& q = it->second;
    if (fresh) {
      q.model = model;
      q.variant = n.phys->variant;
      q.engine = n.phys->engine;
      q.model_key = n.model_key;
      q.weight_mb = n.weight_mb;
      q.load_cost = n.load_cost;
      q.state_per_token = n.state_per_token;
    }
    const Query& owner = queries.at(n.first_query);
    for (size_t i = 0; i < n.inputs.size(); ++i) {
      PendingItem item;
      item.query = n.first_query;
      item.node = n.id;
      item.row = i;
      item.length = n.inputs[i].length;
      item.enqueued_ms = now;
      item.seq = next_item_seq++;
      item.tenant = owner.tenant;
      item.pin = owner.pin;
      q.batcher.add(std::move(item));
    }
  }

  void finish_infer(Node& n) {
    const LogicalNode& L = *n.phys->logical;
    const AISpec& ai = *L.ai;
    const RowSet& in = input(n, 0);
    auto out = std::make_shared<RowSet>();
    out->schema = L.schema;
    std::vector<int> pass;
    for (const auto& p : ai.passthrough) pass.push_back(find_column(in.schema, p.qualifier, p.name));
    for (size_t i = 0; i < in.rows.size(); ++i) {
      Row r{n.inputs[i].key, n.preds[i]};
      for (int c : pass) r.push_back(c >= 0 ? in.rows[i][c] : Value{});
      out->push(std::move(r), in.versions[i]);
    }
    n.result = out;
    n.inputs.clear();
    n.preds.clear();
    complete(n);
  }

  size_t max_batch_tokens(const Queue& q) const {
    double cap = 0;
    for (const auto& e : engines)
      if (!q.engine || e.id == *q.engine) cap = std::max(cap, e.token_budget);
    return static_cast<size_t>(cap);
  }

  void form_batches_now() {
    for (auto& [key, q] : ai_queues) {
      if (q.batcher.pending() == 0) continue;
      const bool drain = waiting_producers[key] == 0;
      for (auto& items : q.batcher.take(now, drain, max_batch_tokens(q))) {
        Task t;
        t.kind = Task::Kind::Batch;
        t.queue = key;
        t.engine = q.engine;
        std::vector<InferenceInput> inputs;
        for (const auto& it : items) inputs.push_back(nodes.at(it.node).inputs.at(it.row));
        const InferResult res = runtime.infer(*q.model, inputs, q.variant);
        t.preds = res.predictions;
        t.padding = res.padding;
        t.et.id = next_task++;
        t.et.cost = res.cost_ms;
        double tokens = 0;
        for (const auto& it : items) tokens += static_cast<double>(it.length);
        t.et.tokens = tokens;
        t.et.state_mb = q.state_per_token * (tokens + res.padding);
        t.et.model = q.model_key;
        t.et.weight_mb = q.weight_mb;
        t.et.load_cost = q.load_cost;
        t.items = std::move(items);
        ++metrics.batches;
        metrics.items += t.items.size();
        metrics.tokens += tokens;
        metrics.padding += res.padding;
        const uint64_t id = t.et.id;
        const uint64_t owner = t.items.front().query;
        tasks[id] = std::move(t);
        if (cfg.export_latency_ms > 0)
          coord_queue.insert({owner, 0, coord_seq++, true, id});
        else
          enqueue_dispatch(id);
      }
    }
  }

  /// Each placement queue dispatches in order and stops at its first
  /// refusal, so a blocked head holds back later batches of that queue.
  void dispatch_ready() {
    bool busy = false;
    for (const auto& e : engines) busy |= e.running.has_value() || !e.queue.empty();
    for (auto& [placement, queue] : dispatchable) {
      while (!queue.empty()) {
        Task& t = tasks.at(queue.front());
        int best = -1;
        double best_end = 0;
        for (auto& e : engines) {
          if (t.engine && e.id != *t.engine) continue;
          if (!e.fits(t.et)) continue;
          const double end = e.free_at(now) + (e.is_resident(t.et.model) ? 0 : t.et.load_cost) + t.et.cost;
          if (best < 0 || end < best_end) {
            best = e.id;
            best_end = end;
          }
        }
        // Injected refusals only while some engine is busy, so a later
        // completion always retries them.
        if (best >= 0 && busy && cfg.overload_rate > 0 && chance() < cfg.overload_rate) best = -1;
        if (best < 0) {
          // EngineOverloaded: stays queued, never dropped.
          if (!t.refused) ++metrics.overloads;
          t.refused = true;
          break;
        }
        t.refused = false;
        engines[static_cast<size_t>(best)].assign(t.et);
        busy = true;
        queue.pop_front();
        --undispatched;
      }
    }
  }

  void start_engines() {
    for (auto& e : engines) {
      if (e.running || e.queue.empty()) continue;
      EngineTask et = e.queue.front();
      e.queue.pop_front();
      const double dur = (et.needs_load ? et.load_cost : 0) + et.cost;
      e.running = et;
      e.running_end = now + dur;
      running_task[e.id] = et.id;
      if (mode == RunMode::VirtualTime) {
        push_event(e.running_end, 0, et.id, EvKind::EngineDone, e.id);
      } else {
        const int eid = e.id;
        const auto sleep = std::chrono::duration<double, std::milli>(dur * cfg.real_time_scale);
        workers.push_back(std::async(std::launch::async, [this, eid, sleep] {
          std::this_thread::sleep_for(sleep);
          {
            std::lock_guard lock(done_mu);
            done_engines.push_back(eid);
          }
          done_cv.notify_all();
        }));
      }
    }
  }

  void engine_done(int eid) {
    EngineState& e = engines.at(static_cast<size_t>(eid));
    const uint64_t id = running_task.at(eid);
    running_task.erase(eid);
    e.running.reset();
    Task& t = tasks.at(id);
    if (cfg.fault_rate > 0 && chance() < cfg.fault_rate) {
      ++metrics.faults;  // EngineFault: the whole task runs again elsewhere
      enqueue_dispatch(id);
      return;
    }
    if (t.kind == Task::Kind::Train) {
      Node& n = nodes.at(t.train_node);
      n.model = t.trained;
      n.result = nodes.at(n.children.at(0)).result;
      tasks.erase(id);
      complete(n);
      return;
    }
    const Queue& q = ai_queues.at(t.queue);
    std::map<uint64_t, double> per_query_tokens;
    std::vector<uint64_t> finished;
    for (size_t i = 0; i < t.items.size(); ++i) {
      const PendingItem& it = t.items[i];
      ++dispatched[{it.query, it.node, it.row}];
      Node& n = nodes.at(it.node);
      n.preds[it.row] = t.preds[i];
      if (--n.remaining == 0) finished.push_back(n.id);
      per_query_tokens[it.query] += static_cast<double>(it.length);
    }
    // Generative models keep per-query state for follow-on work.
    if (q.model->kind == ModelKind::GenerativeMock && q.state_per_token > 0) {
      for (const auto& [qid, tok] : per_query_tokens) {
        const double mb = tok * q.state_per_token;
        if (!queries.at(qid).finished && e.memory() + mb <= e.memory_budget_mb) e.blocks.push_back({qid, mb});
      }
    }
    tasks.erase(id);
    for (uint64_t nid : finished) finish_infer(nodes.at(nid));
  }

  void do_rebalance() {
    if (engines.size() < 2) {
      for (const auto& e : engines)
        if (e.pressure() > cfg.overload_threshold) metrics.no_capacity = true;
      return;
    }
    auto report = rebalance(engines, cfg.overload_threshold, cfg.rebalance_gap, cfg.transfer_ms_per_mb);
    metrics.no_capacity |= report.no_capacity;
    for (const auto& m : report.moves) {
      ++metrics.migrations;
      if (m.kind == Migration::Kind::StateBlock) queries.at(m.id).transfer += m.transfer_ms;
    }
    if (cfg.migrate_rate > 0 && chance() < cfg.migrate_rate) {
      // Forced move of one queued task, exercising migration paths.
      std::vector<size_t> busy;
      for (size_t i = 0; i < engines.size(); ++i)
        if (!engines[i].queue.empty()) busy.push_back(i);
      if (!busy.empty()) {
        EngineState& from = engines[busy[rng() % busy.size()]];
        EngineTask et = from.queue.back();
        const Task& t = tasks.at(et.id);
        for (size_t k = 1; k < engines.size(); ++k) {
          EngineState& to = engines[(static_cast<size_t>(from.id) + k) % engines.size()];
          if (t.engine && to.id != *t.engine) continue;
          et.needs_load = false;
          if (!to.fits(et)) continue;
          from.queue.pop_back();
          to.assign(et);
          ++metrics.migrations;
          break;
        }
      }
    }
  }

  void audit_engines() {
    for (size_t i = 0; i < engines.size(); ++i) {
      const auto& e = engines[i];
      metrics.peak_memory_mb[i] = std::max(metrics.peak_memory_mb[i], e.memory());
      if (e.load() > e.token_budget + 1e-9 || e.memory() > e.memory_budget_mb + 1e-9) ++metrics.budget_violations;
    }
  }

  void schedule_wake() {
    std::optional<double> next;
    for (const auto& [key, q] : ai_queues)
      if (auto d = q.batcher.next_deadline()) next = next ? std::min(*next, *d) : *d;
    if (next && *next > now && !wakes.count(*next)) {
      wakes.insert(*next);
      push_event(*next, 0, 0, EvKind::Wake);
    }
  }

  void pump() {
    for (int round = 0; round < 1000; ++round) {
      const size_t before = metrics.batches + coord_queue.size() + undispatched;
      coordinator_step();
      form_batches_now();
      dispatch_ready();
      do_rebalance();
      start_engines();
      audit_engines();
      coordinator_step();
      const size_t after = metrics.batches + coord_queue.size() + undispatched;
      if (after == before) break;
    }
    schedule_wake();
  }

  void handle(const Event& ev) {
    switch (ev.kind) {
      case EvKind::Arrival: arrive(ev.query); break;
      case EvKind::CoordDone: coordinator_done(); break;
      case EvKind::EngineDone: engine_done(ev.engine); break;
      case EvKind::Wake: wakes.erase(ev.time); break;
    }
  }

  bool pending_work() const {
    for (const auto& [id, q] : queries)
      if (!q.finished) return true;
    return false;
  }

  void deadlock() {
    metrics.deadlock = true;
    std::ostringstream os;
    os << "deadlock at t=" << now << "ms: ";
    for (const auto& [id, n] : nodes)
      if (n.state != NodeState::Done && n.state != NodeState::Failed)
        os << "node " << id << " " << to_string(n.phys->op) << " state=" << static_cast<int>(n.state) << "; ";
    os << undispatched << " batches undispatchable; ";
    for (const auto& e : engines) os << "engine " << e.id << " load=" << e.load() << " mem=" << e.memory() << "; ";
    metrics.diagnostic = os.str();
    auto err = std::make_exception_ptr(Error(ErrorCode::Deadlock, metrics.diagnostic));
    for (auto& [id, q] : queries)
      if (!q.finished) {
        if (!q.admitted) ++active;
        finish_query(q, err);
      }
  }

  void run_virtual() {
    pump();
    while (!events.empty()) {
      const Event ev = events.top();
      events.pop();
      now = ev.time;
      handle(ev);
      // Process everything at the same instant before scheduling.
      while (!events.empty() && events.top().time == now) {
        const Event e2 = events.top();
        events.pop();
        handle(e2);
      }
      pump();
    }
    if (pending_work()) deadlock();
  }

  void run_real() {
    wall_start = std::chrono::steady_clock::now();
    pump();
    while (true) {
      std::vector<int> done;
      {
        std::unique_lock lock(done_mu);
        if (done_engines.empty()) {
          if (!events.empty()) {
            const double wait_ms = std::max(0.0, (events.top().time - wall_now()) * cfg.real_time_scale);
            done_cv.wait_for(lock, std::chrono::duration<double, std::milli>(wait_ms));
          } else if (!running_task.empty()) {
            done_cv.wait(lock, [&] { return !done_engines.empty(); });
          }
        }
        done.swap(done_engines);
      }
      now = wall_now();
      bool progressed = false;
      for (int e : done) {
        engine_done(e);
        progressed = true;
      }
      while (!events.empty() && events.top().time <= now) {
        const Event ev = events.top();
        events.pop();
        handle(ev);
        progressed = true;
      }
      if (progressed) pump();
      if (events.empty() && running_task.empty()) {
        std::lock_guard lock(done_mu);
        if (done_engines.empty()) break;
      }
    }
    for (auto& w : workers) w.wait();
    workers.clear();
    if (pending_work()) deadlock();
  }

  Metrics finalize() {
    std::map<std::string, std::vector<double>> lat;
    std::map<std::string, std::pair<double, double>> span;
    std::vector<double> all;
    double first = 0, last = 0;
    bool any = false;
    for (const auto& [id, q] : queries) {
      std::lock_guard lock(q.handle->mu);
      if (!q.handle->done || q.handle->error) continue;
      const QueryResult& r = q.handle->result;
      lat[q.tenant].push_back(r.latency());
      all.push_back(r.latency());
      auto& s = span.try_emplace(q.tenant, r.arrival_ms, r.completed_ms).first->second;
      s.first = std::min(s.first, r.arrival_ms);
      s.second = std::max(s.second, r.completed_ms);
      first = any ? std::min(first, r.arrival_ms) : r.arrival_ms;
      last = any ? std::max(last, r.completed_ms) : r.completed_ms;
      any = true;
    }
    auto summary = [](const std::vector<double>& v, double dur) {
      LatencySummary s;
      s.queries = v.size();
      s.throughput_qpm = dur > 0 ? static_cast<double>(v.size()) / dur * 60000.0 : 0;
      s.p50 = percentile(v, 0.50);
      s.p95 = percentile(v, 0.95);
      s.p99 = percentile(v, 0.99);
      return s;
    };
    metrics.makespan_ms = any ? last - first : 0;
    metrics.overall = summary(all, metrics.makespan_ms);
    metrics.tenants.clear();
    for (const auto& [t, v] : lat) metrics.tenants[t] = summary(v, span[t].second - span[t].first);
    size_t executed = 0;
    for (const auto& [id, n] : nodes)
      if (n.executions > 0) ++executed;
    metrics.exec_nodes = executed;
    if (cache) metrics.cache = cache->stats();
    return metrics;
  }
};

// ---------------------------------------------------------------------------
// Executor

Executor::Executor(Catalog& catalog, const ModelRuntime& runtime, CacheManager* cache, ExecutorConfig config)
    : config_(std::move(config)) {
  config_.validate();
  impl_ = std::make_unique<Impl>(catalog, runtime, cache, config_);
}

Executor::~Executor() = default;

QueryHandle Executor::submit(const PhysicalPtr& plan, const std::string& tenant, double arrival_ms) {
  if (!plan) fail(ErrorCode::InvalidArgument, "null plan");
  if (!plan->logical->snapshot) fail(ErrorCode::UnpinnedPlan, "plan has no snapshot pin");
  visit_physical(plan, [&](const PhysicalPtr& p) {
    if (p->engine && (*p->engine < 0 || static_cast<size_t>(*p->engine) >= config_.engines))
      fail(ErrorCode::InvalidArgument, "placement on unknown engine " + std::to_string(*p->engine));
  });
  std::lock_guard lock(impl_->submit_mu);
  size_t pending = 0;
  for (const auto& [id, q] : impl_->queries)
    if (!q.finished) ++pending;
  if (pending >= config_.max_pending_queries)
    fail(ErrorCode::AdmissionRejected, "admission queue full (" + std::to_string(pending) + " pending)");
  Impl::Query q;
  q.id = impl_->next_query++;
  q.tenant = tenant;
  q.plan = plan;
  q.arrival = arrival_ms;
  q.pin = *plan->logical->snapshot;
  q.handle = std::make_shared<QueryHandle::State>();
  q.handle->id = q.id;
  QueryHandle h;
  h.state_ = q.handle;
  impl_->push_event(arrival_ms, q.id, 0, Impl::EvKind::Arrival);
  impl_->queries.emplace(q.id, std::move(q));
  return h;
}

Metrics Executor::run(RunMode mode) {
  std::lock_guard lock(impl_->submit_mu);
  impl_->mode = mode;
  if (mode == RunMode::VirtualTime)
    impl_->run_virtual();
  else
    impl_->run_real();
  return impl_->finalize();
}

std::vector<EngineInfo> Executor::engine_info() const {
  std::vector<EngineInfo> out;
  for (const auto& e : impl_->engines) {
    EngineInfo info;
    info.id = e.id;
    for (const auto& [k, mb] : e.resident) info.resident.insert(k);
    out.push_back(std::move(info));
  }
  return out;
}

std::vector<SharedNodeInfo> Executor::nodes() const {
  std::vector<SharedNodeInfo> out;
  for (const auto& [id, n] : impl_->nodes) out.push_back({id, n.phys->op, n.key, n.phys->id, n.executions, n.consumers});
  return out;
}

size_t Executor::executions(const Hash128& key) const {
  auto it = impl_->shared.find(key);
  return it == impl_->shared.end() ? 0 : impl_->nodes.at(it->second).executions;
}

const std::map<std::tuple<uint64_t, uint64_t, size_t>, size_t>& Executor::item_dispatches() const {
  return impl_->dispatched;
}

}  // namespace neurq
