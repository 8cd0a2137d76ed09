#include "neurq/session.hpp"

#include <sstream>

#include "neurq/common/error.hpp"
#include "neurq/sql/parser.hpp"

namespace neurq {

namespace {

CostProfile make_profile(double load, double setup, double item, double token, double pad, double weight, double state) {
  CostProfile p;
  p.load_cost = load;
  p.batch_setup = setup;
  p.per_item = item;
  p.per_token = token;
  p.per_pad_token = pad;
  p.weight_size_mb = weight;
  p.state_mb_per_token = state;
  return p;
}

}  // namespace

SessionConfig::SessionConfig() {
  model_costs[ModelKind::RidgeRegressor] = InlineModelCosts{}.infer;
  staged_costs[ModelKind::RidgeRegressor] = InlineModelCosts{}.staged_infer;
  model_costs[ModelKind::HashEmbedder] = make_profile(40.0, 2.0, 0.05, 0.02, 0.02, 1200, 0.05);
  model_costs[ModelKind::GenerativeMock] = make_profile(80.0, 4.0, 0.1, 0.05, 0.05, 2400, 0.2);
}

void connect_cache_invalidation(Catalog& catalog, CacheManager& cache) {
  catalog.subscribe([&cache](const CatalogEvent& ev) {
    switch (ev.kind) {
      case CatalogEvent::Kind::DataAppended:
        cache.invalidate([&](const CacheKey& k) { return k.snapshot < ev.snapshot; });
        break;
      case CatalogEvent::Kind::ModelRegistered:
        cache.invalidate([&](const CacheKey& k) {
          return k.model && ev.model && k.model->name == ev.model->name && k.model->version < ev.model->version;
        });
        break;
      case CatalogEvent::Kind::ModelDropped:
        cache.invalidate([&](const CacheKey& k) { return k.model && ev.model && k.model->name == ev.model->name; });
        break;
    }
  });
}

Session::Session(SessionConfig config)
    : config_(std::move(config)),
      catalog_(std::make_unique<Catalog>()),
      cache_(std::make_unique<CacheManager>(config_.cache)),
      runtime_(std::make_unique<ModelRuntime>(*catalog_, cache_.get(), config_.profile)) {
  config_.exec.validate();
  connect_cache_invalidation(*catalog_, *cache_);
}

OptimizerContext Session::optimizer_context(const std::vector<EngineInfo>& engines) const {
  OptimizerContext ctx;
  ctx.db = config_.exec.db;
  ctx.inline_model = config_.exec.inline_model;
  ctx.engines = engines;
  if (ctx.engines.empty())
    for (size_t i = 0; i < config_.exec.engines; ++i) ctx.engines.push_back({static_cast<int>(i), {}});
  ctx.batch_items = config_.exec.policy.max_items;
  ctx.generative_expansion = config_.profile.generative_expansion;
  ctx.stats = catalog_stats(*catalog_);
  ctx.catalog = catalog_.get();
  return ctx;
}

PreparedQuery Session::prepare(const std::string& sql, const sql::BindOptions& options,
                               std::optional<SnapshotVersion> pin) const {
  const sql::Statement stmt = sql::parse(sql);
  if (stmt.kind != sql::Statement::Kind::Select && stmt.kind != sql::Statement::Kind::PredictSelect)
    fail(ErrorCode::InvalidArgument, "only queries can be planned");
  const auto bound = sql::bind(stmt, *catalog_, options);
  PreparedQuery p;
  p.pin = pin.value_or(catalog_->current_version());
  p.logical = pin_snapshot(lower(bound), p.pin);
  const OptimizerContext ctx = optimizer_context();
  if (config_.rewrite) {
    RewriteContext rctx;
    rctx.cardinality = cardinality_fn(ctx);
    p.rewritten = apply_rewrites(p.logical, default_rules(), rctx);
  } else {
    p.rewritten.plan = p.logical;
  }
  // Tenant masks are only known at bind time; profile them on first use.
  visit(p.rewritten.plan, [&](const LogicalPtr& n) {
    if (n->op != LogicalOp::AIInfer || !n->ai->model || !n->ai->sliced()) return;
    if (catalog_->model_quality(*n->ai->model, quality_key("direct", n->ai->mask))) return;
    if (auto rec = catalog_->model(*n->ai->model)) runtime_->profile_mask(*rec, n->ai->mask);
  });
  p.candidates = enumerate_physical(p.rewritten.plan, ctx);
  p.physical = choose(p.candidates, config_.objective);
  if (config_.use_cache) p.physical = cache_aware_substitute(p.physical, *cache_->snapshot_index(), cache_->config());
  return p;
}

StatementResult Session::create_model(const sql::Statement& stmt) {
  const auto& cm = stmt.create_model;
  const auto kind = parse_model_kind(cm.kind);
  if (!kind) fail(ErrorCode::InvalidArgument, "unknown model kind '" + cm.kind + "'");
  const auto tid = catalog_->find_table(cm.table);
  if (!tid) fail(ErrorCode::UnknownTable, cm.table);
  const TableDef& def = catalog_->table_def(*tid);
  std::vector<TableColumn> features;
  std::vector<std::string> cols;
  for (const auto& f : cm.features) {
    if (def.ordinal(f) < 0) fail(ErrorCode::UnknownColumn, cm.table + "." + f);
    features.push_back({def.name, f});
    cols.push_back(f);
  }
  std::optional<TableColumn> target;
  if (cm.target) {
    if (def.ordinal(*cm.target) < 0) fail(ErrorCode::UnknownColumn, cm.table + "." + *cm.target);
    target = TableColumn{def.name, *cm.target};
    cols.push_back(*cm.target);
  }
  const RowSet training = catalog_->scan(*tid, catalog_->current_version(), cols);
  const auto staged = config_.staged_costs.count(*kind) ? config_.staged_costs.at(*kind) : std::vector<CostProfile>{};
  ModelRecord rec = runtime_->fit_record(cm.name, *kind, features, target, training, config_.model_costs.at(*kind), staged);
  const ModelRef ref = catalog_->register_model(std::move(rec));
  return {"CREATE MODEL " + ref.to_string(), std::nullopt, std::nullopt};
}

StatementResult Session::execute(const std::string& sql, const sql::BindOptions& options) {
  const sql::Statement stmt = sql::parse(sql);
  switch (stmt.kind) {
    case sql::Statement::Kind::CreateTable: {
      catalog_->create_table(stmt.create_table.def);
      return {"CREATE TABLE " + stmt.create_table.def.name, std::nullopt, std::nullopt};
    }
    case sql::Statement::Kind::CreateModel: return create_model(stmt);
    case sql::Statement::Kind::DropModel:
      catalog_->drop_model(stmt.drop_model);
      return {"DROP MODEL " + stmt.drop_model, std::nullopt, std::nullopt};
    default: break;
  }
  if (stmt.select && !stmt.select->from) {
    // Constant SELECT: evaluated once, no plan.
    RowSet rs;
    Row row;
    for (const auto& item : stmt.select->items) {
      rs.schema.push_back({"", item.alias.empty() ? to_sql(item.expr) : item.alias});
      row.push_back(CompiledExpr(item.expr, {}).eval({}));
    }
    rs.push(std::move(row), 0);
    return {"", rs, std::nullopt};
  }
  const PreparedQuery p = prepare(sql, options);
  Executor exec(*catalog_, *runtime_, config_.use_cache ? cache_.get() : nullptr, config_.exec);
  auto handle = exec.submit(p.physical, options.tenant.value_or("default"));
  Metrics m = exec.run();
  StatementResult r;
  r.rows = handle.wait().rows;
  r.metrics = std::move(m);
  return r;
}

std::string Session::explain(const std::string& sql, const sql::BindOptions& options) const {
  const sql::Statement stmt = sql::parse(sql);
  const auto bound = sql::bind(stmt, *catalog_, options);
  LogicalPtr plan = pin_snapshot(lower(bound), catalog_->current_version());
  if (config_.rewrite) {
    RewriteContext rctx;
    rctx.cardinality = cardinality_fn(optimizer_context());
    plan = apply_rewrites(plan, default_rules(), rctx).plan;
  }
  return neurq::explain(plan);
}

std::string Session::explain_physical(const std::string& sql, const sql::BindOptions& options) const {
  const PreparedQuery p = prepare(sql, options);
  std::ostringstream os;
  os << "objective: " << config_.objective.to_string() << "\n";
  os << "candidates: " << p.candidates.size() << "\n";
  os << neurq::explain_physical(p.physical);
  return os.str();
}

}  // namespace neurq
