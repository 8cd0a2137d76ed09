#include "neurq/optimizer/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>

#include "neurq/common/error.hpp"
#include "neurq/planner/rewrites.hpp"

namespace neurq {

// ---------------------------------------------------------------------------
// Objective

Objective Objective::min_latency(double q_min) {
  if (!(q_min >= 0 && q_min <= 1)) fail(ErrorCode::InvalidArgument, "quality bound must be in [0,1]");
  return {Mode::MinLatencyGivenQuality, q_min};
}

Objective Objective::max_quality(double l_max_ms) {
  if (!(l_max_ms > 0)) fail(ErrorCode::InvalidArgument, "latency bound must be positive");
  return {Mode::MaxQualityGivenLatency, l_max_ms};
}

Objective Objective::parse(std::string_view text) {
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  auto number = [&](std::string_view body, double scale) {
    try {
      size_t used = 0;
      double v = std::stod(std::string(body), &used);
      if (used != body.size()) throw std::invalid_argument("trailing");
      return v * scale;
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, "bad objective '" + std::string(text) + "'");
    }
  };
  if (s.rfind("quality>=", 0) == 0) return min_latency(number(std::string_view(s).substr(9), 1));
  if (s.rfind("latency<=", 0) == 0) {
    std::string_view v = std::string_view(s).substr(9);
    double scale = 1;
    if (v.size() > 2 && v.substr(v.size() - 2) == "ms") {
      v.remove_suffix(2);
    } else if (v.size() > 1 && v.back() == 's') {
      v.remove_suffix(1);
      scale = 1000;
    }
    return max_quality(number(v, scale));
  }
  fail(ErrorCode::InvalidArgument, "bad objective '" + std::string(text) + "' (want quality>=Q or latency<=Lms)");
}

std::string Objective::to_string() const {
  std::ostringstream os;
  if (mode == Mode::MinLatencyGivenQuality)
    os << "quality>=" << bound;
  else
    os << "latency<=" << bound << "ms";
  return os.str();
}

std::string_view to_string(PhysOp op) {
  switch (op) {
    case PhysOp::FullScan: return "FullScan";
    case PhysOp::FilteredScan: return "FilteredScan";
    case PhysOp::Filter: return "Filter";
    case PhysOp::Project: return "Project";
    case PhysOp::HashJoin: return "HashJoin";
    case PhysOp::MergeJoin: return "MergeJoin";
    case PhysOp::NestedLoopJoin: return "NestedLoopJoin";
    case PhysOp::HashAggregate: return "HashAggregate";
    case PhysOp::Sort: return "Sort";
    case PhysOp::Limit: return "Limit";
    case PhysOp::AITrain: return "AITrain";
    case PhysOp::AIInfer: return "AIInfer";
    case PhysOp::CacheRead: return "CacheRead";
  }
  return "?";
}

StatsFn catalog_stats(const Catalog& catalog) {
  return [&catalog](TableId t, SnapshotVersion v) -> std::optional<TableStats> { return catalog.stats(t, v); };
}

std::string weights_key(const ModelRef& model, const std::vector<std::string>& mask) {
  return model.to_string() + "|" + mask_key(mask);
}

// ---------------------------------------------------------------------------
// Cardinality

namespace {

struct RelEst {
  double rows = 0;
  double table_rows = 0;  // Scan only: rows read
  std::map<std::string, double> distinct;  // by qualified column name
  std::map<std::string, double> tokens;    // average whitespace tokens
};

using EstMemo = std::unordered_map<const LogicalNode*, RelEst>;

double lookup(const std::map<std::string, double>& m, const Schema& schema, const Expr& col, double fallback) {
  const int i = find_column(schema, col.qualifier, col.name);
  if (i < 0) return fallback;
  auto it = m.find(schema[i].qualified());
  return it == m.end() ? fallback : it->second;
}

double selectivity(const ExprPtr& e, const Schema& schema, const RelEst& in) {
  if (!e) return 1;
  auto distinct = [&](const ExprPtr& x) -> std::optional<double> {
    if (x->kind != Expr::Kind::Column) return std::nullopt;
    return std::max(1.0, lookup(in.distinct, schema, *x, std::max(1.0, in.rows)));
  };
  switch (e->kind) {
    case Expr::Kind::Literal:
      if (auto* b = std::get_if<bool>(&e->literal)) return *b ? 1.0 : 0.0;
      return 1.0 / 3.0;
    case Expr::Kind::Unary:
      if (e->unary_op == UnaryOp::Not) return 1.0 - selectivity(e->args[0], schema, in);
      return 1.0 / 3.0;
    case Expr::Kind::Between: return 1.0 / 3.0;
    case Expr::Kind::Binary: {
      const auto op = e->binary_op;
      if (op == BinaryOp::And) return selectivity(e->args[0], schema, in) * selectivity(e->args[1], schema, in);
      if (op == BinaryOp::Or) {
        const double a = selectivity(e->args[0], schema, in), b = selectivity(e->args[1], schema, in);
        return a + b - a * b;
      }
      if (op == BinaryOp::Eq || op == BinaryOp::Ne) {
        auto dl = distinct(e->args[0]), dr = distinct(e->args[1]);
        double eq = 1;
        if (dl && dr)
          eq = 1.0 / std::max(*dl, *dr);
        else if (dl)
          eq = 1.0 / *dl;
        else if (dr)
          eq = 1.0 / *dr;
        return op == BinaryOp::Eq ? eq : 1.0 - eq;
      }
      if (is_comparison(op)) return 1.0 / 3.0;
      return 1.0 / 3.0;
    }
    default: return 1.0 / 3.0;
  }
}

void cap_distinct(RelEst& e) {
  for (auto& [k, d] : e.distinct) d = std::max(1.0, std::min(d, std::max(1.0, e.rows)));
}

const RelEst& est_node(const LogicalPtr& node, const OptimizerContext& ctx, EstMemo& memo) {
  if (auto it = memo.find(node.get()); it != memo.end()) return it->second;
  const LogicalNode& n = *node;
  RelEst out;
  switch (n.op) {
    case LogicalOp::Scan: {
      if (!ctx.stats) fail(ErrorCode::MissingStats, "no statistics source for table " + n.table_name);
      auto st = ctx.stats(n.table, n.snapshot.value_or(SnapshotVersion{}));
      if (!st) fail(ErrorCode::MissingStats, "no statistics for table " + n.table_name);
      RelEst full;
      full.rows = static_cast<double>(st->row_count);
      const std::string q = n.alias.empty() ? n.table_name : n.alias;
      Schema all;
      for (const auto& c : st->columns) {
        full.distinct[q + "." + c.name] = std::max<double>(1.0, static_cast<double>(c.distinct));
        full.tokens[q + "." + c.name] = c.avg_tokens;
        all.push_back({q, c.name, ColumnType::Int64});
      }
      out = full;
      out.table_rows = full.rows;
      out.rows = full.rows * selectivity(n.predicate, all, full);
      break;
    }
    case LogicalOp::Select: {
      const RelEst& in = est_node(n.children[0], ctx, memo);
      out = in;
      out.table_rows = 0;
      out.rows = in.rows * selectivity(n.predicate, n.children[0]->schema, in);
      break;
    }
    case LogicalOp::Project: {
      const RelEst& in = est_node(n.children[0], ctx, memo);
      out.rows = in.rows;
      const Schema& cs = n.children[0]->schema;
      for (size_t i = 0; i < n.exprs.size(); ++i) {
        const std::string key = n.schema[i].qualified();
        if (n.exprs[i]->kind == Expr::Kind::Column) {
          out.distinct[key] = lookup(in.distinct, cs, *n.exprs[i], in.rows);
          out.tokens[key] = lookup(in.tokens, cs, *n.exprs[i], 1);
        } else {
          out.distinct[key] = std::max(1.0, in.rows);
          out.tokens[key] = 1;
        }
      }
      break;
    }
    case LogicalOp::Join: {
      const RelEst& l = est_node(n.children[0], ctx, memo);
      const RelEst& r = est_node(n.children[1], ctx, memo);
      RelEst both;
      both.rows = l.rows * r.rows;
      both.distinct = l.distinct;
      both.distinct.insert(r.distinct.begin(), r.distinct.end());
      both.tokens = l.tokens;
      both.tokens.insert(r.tokens.begin(), r.tokens.end());
      out = both;
      out.rows = both.rows * selectivity(n.predicate, n.schema, both);
      break;
    }
    case LogicalOp::Aggregate: {
      const RelEst& in = est_node(n.children[0], ctx, memo);
      double groups = n.exprs.empty() ? 1.0 : 1.0;
      const Schema& cs = n.children[0]->schema;
      for (const auto& k : n.exprs)
        groups *= k->kind == Expr::Kind::Column ? lookup(in.distinct, cs, *k, in.rows) : std::max(1.0, in.rows);
      out.rows = n.exprs.empty() ? 1.0 : std::min(groups, in.rows);
      for (size_t i = 0; i < n.schema.size(); ++i) {
        const std::string key = n.schema[i].qualified();
        out.distinct[key] = in.distinct.count(key) ? in.distinct.at(key) : out.rows;
        out.tokens[key] = 1;
      }
      break;
    }
    case LogicalOp::Sort:
    case LogicalOp::AITrain: {
      out = est_node(n.children[0], ctx, memo);
      out.table_rows = 0;
      break;
    }
    case LogicalOp::Limit: {
      out = est_node(n.children[0], ctx, memo);
      out.table_rows = 0;
      out.rows = std::min(out.rows, static_cast<double>(n.limit));
      break;
    }
    case LogicalOp::AIInfer: {
      const RelEst& in = est_node(n.children[0], ctx, memo);
      out.rows = in.rows;
      const Schema& cs = n.children[0]->schema;
      auto copy = [&](const ColumnKey& from, const std::string& to) {
        Expr c;
        c.kind = Expr::Kind::Column;
        c.qualifier = from.qualifier;
        c.name = from.name;
        out.distinct[to] = lookup(in.distinct, cs, c, in.rows);
        out.tokens[to] = lookup(in.tokens, cs, c, 1);
      };
      copy(n.ai->pk, n.schema[0].qualified());
      out.distinct[n.schema[1].qualified()] = std::max(1.0, in.rows);
      out.tokens[n.schema[1].qualified()] = 1;
      for (size_t i = 0; i < n.ai->passthrough.size(); ++i) copy(n.ai->passthrough[i], n.schema[2 + i].qualified());
      break;
    }
  }
  cap_distinct(out);
  return memo.emplace(node.get(), std::move(out)).first->second;
}

}  // namespace

double estimate_rows(const LogicalPtr& plan, const OptimizerContext& ctx) {
  EstMemo memo;
  return est_node(plan, ctx, memo).rows;
}

CardinalityFn cardinality_fn(const OptimizerContext& ctx) {
  return [ctx](const LogicalPtr& p) { return estimate_rows(p, ctx); };
}

// ---------------------------------------------------------------------------
// AI latency

double ai_batch_latency(const std::vector<CostProfile>& stages, size_t items, double tokens, size_t batch_items,
                        const std::vector<bool>& cold, double load_cost) {
  if (items == 0 || cold.empty()) return 0;
  const size_t b = std::max<size_t>(1, batch_items);
  std::vector<double> finish(cold.size(), 0.0);
  std::vector<bool> loaded(cold.size(), false);
  for (size_t start = 0; start < items; start += b) {
    const size_t k = std::min(b, items - start);
    const double tok = tokens * static_cast<double>(k) / static_cast<double>(items);
    double cost = 0;
    for (const auto& p : stages) cost += batch_cost(p, k, tok, 0);
    size_t best = 0;
    double best_end = 0;
    for (size_t e = 0; e < cold.size(); ++e) {
      const double end = finish[e] + (cold[e] && !loaded[e] ? load_cost : 0) + cost;
      if (e == 0 || end < best_end) {
        best = e;
        best_end = end;
      }
    }
    finish[best] = best_end;
    loaded[best] = true;
  }
  return *std::max_element(finish.begin(), finish.end());
}

// ---------------------------------------------------------------------------
// Alternatives

double db_op_latency(PhysOp op, const DbCosts& c, double left, double right, int64_t limit) {
  auto lin = [&](double work) { return c.setup_ms + c.per_row_ms * work; };
  auto nlogn = [](double n) { return n > 1 ? n * std::log2(n) : 0.0; };
  switch (op) {
    case PhysOp::FullScan:
    case PhysOp::FilteredScan:
    case PhysOp::Filter:
    case PhysOp::Project:
    case PhysOp::HashAggregate: return lin(left);
    case PhysOp::Sort: return lin(nlogn(left));
    case PhysOp::Limit: return lin(std::min(left, static_cast<double>(limit)));
    case PhysOp::HashJoin: return lin(left + c.hash_build_factor * right);
    case PhysOp::MergeJoin: return lin(c.merge_factor * (nlogn(left) + nlogn(right)) + left + right);
    case PhysOp::NestedLoopJoin: return c.setup_ms + c.nlj_pair_ms * left * right;
    default: return 0;
  }
}

namespace {

struct Alt {
  PhysOp op;
  PipelineVariant variant = PipelineVariant::Direct;
  std::optional<int> engine;
  CostQuality self;
};

std::vector<CostProfile> stages_of(const CostProfile& direct, const std::vector<CostProfile>& staged,
                                   PipelineVariant v) {
  if (v == PipelineVariant::Direct) return {direct};
  return staged;
}

double load_of(const std::vector<CostProfile>& stages) {
  double l = 0;
  for (const auto& p : stages) l += p.load_cost;
  return l;
}

bool has_equi_key(const LogicalNode& join) {
  if (!join.predicate) return false;
  const Schema& l = join.children[0]->schema;
  const Schema& r = join.children[1]->schema;
  for (const auto& c : split_conjuncts(join.predicate)) {
    if (c->kind != Expr::Kind::Binary || c->binary_op != BinaryOp::Eq) continue;
    const auto& a = c->args[0];
    const auto& b = c->args[1];
    if (a->kind != Expr::Kind::Column || b->kind != Expr::Kind::Column) continue;
    const bool al = find_column(l, a->qualifier, a->name) >= 0, ar = find_column(r, a->qualifier, a->name) >= 0;
    const bool bl = find_column(l, b->qualifier, b->name) >= 0, br = find_column(r, b->qualifier, b->name) >= 0;
    if ((al && br) || (ar && bl)) return true;
  }
  return false;
}

struct ModelCosts {
  std::vector<CostProfile> stages;
  double load = 0;
  std::optional<double> quality;
  std::string weights;  // empty for inline models
};

std::optional<ModelCosts> infer_costs(const LogicalNode& n, PipelineVariant v, const OptimizerContext& ctx) {
  ModelCosts mc;
  const AISpec& ai = *n.ai;
  if (!ai.model) {
    mc.stages = stages_of(ctx.inline_model.infer, ctx.inline_model.staged_infer, v);
    mc.quality = v == PipelineVariant::Direct ? ctx.inline_model.quality_direct : ctx.inline_model.quality_staged;
  } else {
    if (!ctx.catalog) fail(ErrorCode::MissingProfile, "no catalog for model " + ai.model->to_string());
    auto rec = ctx.catalog->model(*ai.model);
    if (!rec) fail(ErrorCode::MissingProfile, "unknown model " + ai.model->to_string());
    mc.stages = stages_of(rec->cost_profile, rec->staged_profiles, v);
    mc.quality = ctx.catalog->model_quality(*ai.model, quality_key(to_string(v), ai.mask));
    mc.weights = weights_key(*ai.model, ai.mask);
  }
  if (mc.stages.empty()) return std::nullopt;
  mc.load = load_of(mc.stages);
  return mc;
}

std::vector<Alt> alternatives(const LogicalPtr& node, const OptimizerContext& ctx, EstMemo& memo) {
  const LogicalNode& n = *node;
  const DbCosts& db = ctx.db;
  const RelEst& self = est_node(node, ctx, memo);
  auto in_rows = [&](size_t i) { return est_node(n.children[i], ctx, memo).rows; };
  auto db_alt = [&](PhysOp op, double l, double r = 0) {
    return Alt{op, PipelineVariant::Direct, std::nullopt, {db_op_latency(op, db, l, r, n.limit), 1.0}};
  };
  std::vector<Alt> alts;
  switch (n.op) {
    case LogicalOp::Scan:
      alts.push_back(db_alt(n.predicate ? PhysOp::FilteredScan : PhysOp::FullScan, self.table_rows));
      break;
    case LogicalOp::Select: alts.push_back(db_alt(PhysOp::Filter, in_rows(0))); break;
    case LogicalOp::Project: alts.push_back(db_alt(PhysOp::Project, in_rows(0))); break;
    case LogicalOp::Aggregate: alts.push_back(db_alt(PhysOp::HashAggregate, in_rows(0))); break;
    case LogicalOp::Sort: alts.push_back(db_alt(PhysOp::Sort, in_rows(0))); break;
    case LogicalOp::Limit: alts.push_back(db_alt(PhysOp::Limit, in_rows(0))); break;
    case LogicalOp::Join: {
      const double l = in_rows(0), r = in_rows(1);
      if (has_equi_key(n)) {
        if (r * db.row_bytes <= db.hash_memory_mb * 1024.0 * 1024.0) alts.push_back(db_alt(PhysOp::HashJoin, l, r));
        alts.push_back(db_alt(PhysOp::MergeJoin, l, r));
      }
      alts.push_back(db_alt(PhysOp::NestedLoopJoin, l, r));
      break;
    }
    case LogicalOp::AITrain: {
      const double k = in_rows(0);
      for (auto v : {PipelineVariant::Direct, PipelineVariant::Staged}) {
        auto stages = stages_of(ctx.inline_model.train, ctx.inline_model.staged_train, v);
        if (stages.empty()) continue;
        double c = 0;
        for (const auto& p : stages) c += batch_cost(p, static_cast<size_t>(std::llround(k)), 0, 0);
        const double q = v == PipelineVariant::Direct ? ctx.inline_model.quality_direct : ctx.inline_model.quality_staged;
        alts.push_back({PhysOp::AITrain, v, {}, {c, q}});
      }
      break;
    }
    case LogicalOp::AIInfer: {
      const double k = in_rows(0);
      const size_t items = static_cast<size_t>(std::llround(k));
      const RelEst& in = est_node(n.children[0], ctx, memo);
      double tokens = 0;
      if (n.ai->kind != ModelKind::RidgeRegressor && !n.ai->features.empty()) {
        Expr c;
        c.kind = Expr::Kind::Column;
        c.qualifier = n.ai->features[0].qualifier;
        c.name = n.ai->features[0].name;
        tokens = k * lookup(in.tokens, n.children[0]->schema, c, 1);
        if (n.ai->kind == ModelKind::GenerativeMock) tokens *= ctx.generative_expansion;
      }
      const std::vector<PipelineVariant> variants =
          n.ai->kind == ModelKind::RidgeRegressor
              ? std::vector<PipelineVariant>{PipelineVariant::Direct, PipelineVariant::Staged}
              : std::vector<PipelineVariant>{PipelineVariant::Direct};
      bool missing = false;
      for (auto v : variants) {
        auto mc = infer_costs(n, v, ctx);
        if (!mc) continue;
        if (!mc->quality) {
          missing = true;
          continue;
        }
        auto cold = [&](const EngineInfo& e) { return mc->weights.empty() || !e.resident.count(mc->weights); };
        for (size_t e = 0; e < ctx.engines.size(); ++e) {
          const double lat = ai_batch_latency(mc->stages, items, tokens, ctx.batch_items, {cold(ctx.engines[e])}, mc->load);
          alts.push_back({PhysOp::AIInfer, v, ctx.engines[e].id, {lat, *mc->quality}});
        }
        std::vector<bool> colds;
        for (const auto& e : ctx.engines) colds.push_back(cold(e));
        alts.push_back({PhysOp::AIInfer, v, std::nullopt,
                        {ai_batch_latency(mc->stages, items, tokens, ctx.batch_items, colds, mc->load), *mc->quality}});
      }
      if (alts.empty() && missing)
        fail(ErrorCode::MissingProfile, "no quality profile for model " + (n.ai->model ? n.ai->model->to_string() : "") +
                                            " mask " + mask_key(n.ai->mask));
      if (alts.empty()) fail(ErrorCode::MissingProfile, "no cost profile for AI node");
      break;
    }
  }
  return alts;
}

std::string logical_id(const LogicalPtr& n) {
  if (n->snapshot) return fingerprint(n).hex();
  return fnv1a_128(canonical_form(n, false)).hex();
}

std::string choice_text(PhysOp op, PipelineVariant v, const std::optional<int>& engine) {
  std::string s(to_string(op));
  if (op == PhysOp::AITrain || op == PhysOp::AIInfer) s += ":" + std::string(to_string(v));
  if (op == PhysOp::AIInfer) s += "@" + (engine ? std::to_string(*engine) : std::string("any"));
  return s;
}

PhysicalPtr build(const LogicalPtr& logical, const Alt& alt, std::vector<PhysicalPtr> kids, double rows,
                  size_t batch_items) {
  auto p = std::make_shared<PhysicalNode>();
  p->op = alt.op;
  p->logical = logical;
  p->variant = alt.variant;
  p->engine = alt.engine;
  if (alt.op == PhysOp::AIInfer) p->batch_hint = batch_items;
  p->rows = rows;
  p->self = alt.self;
  p->total = alt.self;
  p->nodes = 1;
  p->text = choice_text(alt.op, alt.variant, alt.engine) + "|" + logical_id(logical) + "(";
  for (size_t i = 0; i < kids.size(); ++i) {
    p->total.latency += kids[i]->total.latency;
    p->total.quality = std::min(p->total.quality, kids[i]->total.quality);
    p->nodes += kids[i]->nodes;
    p->text += (i ? "," : "") + kids[i]->id.hex();
  }
  p->text += ")";
  p->id = fnv1a_128(p->text);
  p->children = std::move(kids);
  return p;
}

/// Variant of the AITrain this candidate still exposes to an AIInfer above.
std::optional<PipelineVariant> open_training(const PhysicalPtr& p) {
  const PhysicalNode* cur = p.get();
  while (cur) {
    if (cur->op == PhysOp::AITrain) return cur->variant;
    if (cur->op == PhysOp::AIInfer || cur->children.size() != 1) return std::nullopt;
    if (cur->op == PhysOp::CacheRead) return std::nullopt;
    cur = cur->children[0].get();
  }
  return std::nullopt;
}

bool compatible(const LogicalNode& n, const Alt& alt, const std::vector<PhysicalPtr>& kids) {
  if (n.op != LogicalOp::AIInfer || n.ai->model) return true;
  auto v = open_training(kids[0]);
  return !v || *v == alt.variant;
}

bool dominates(const CostQuality& b, const CostQuality& a) {
  return b.latency <= a.latency && b.quality >= a.quality && (b.latency < a.latency || b.quality > a.quality);
}

bool frontier_order(const PhysicalPtr& a, const PhysicalPtr& b) {
  if (a->total.latency != b->total.latency) return a->total.latency < b->total.latency;
  if (a->total.quality != b->total.quality) return a->total.quality > b->total.quality;
  if (a->nodes != b->nodes) return a->nodes < b->nodes;
  return a->id.hex() < b->id.hex();
}

std::vector<PhysicalPtr> prune(std::vector<PhysicalPtr> cands, size_t cap) {
  // Candidates only compete with others exposing the same training variant.
  std::map<int, std::vector<PhysicalPtr>> groups;
  for (auto& c : cands) {
    auto v = open_training(c);
    groups[v ? static_cast<int>(*v) : -1].push_back(std::move(c));
  }
  std::vector<PhysicalPtr> out;
  for (auto& [g, list] : groups) {
    std::vector<PhysicalPtr> kept;
    for (size_t i = 0; i < list.size(); ++i) {
      bool dominated = false;
      for (size_t j = 0; j < list.size() && !dominated; ++j)
        if (i != j && dominates(list[j]->total, list[i]->total)) dominated = true;
      if (!dominated) kept.push_back(list[i]);
    }
    std::sort(kept.begin(), kept.end(), frontier_order);
    if (kept.size() > cap) kept.resize(cap);
    out.insert(out.end(), kept.begin(), kept.end());
  }
  std::sort(out.begin(), out.end(), frontier_order);
  return out;
}

using PhysMemo = std::unordered_map<const LogicalNode*, std::vector<PhysicalPtr>>;

const std::vector<PhysicalPtr>& enumerate_node(const LogicalPtr& node, const OptimizerContext& ctx, EstMemo& est,
                                               PhysMemo& memo, bool pruned) {
  if (auto it = memo.find(node.get()); it != memo.end()) return it->second;
  std::vector<std::vector<PhysicalPtr>> kid_sets;
  for (const auto& c : node->children) kid_sets.push_back(enumerate_node(c, ctx, est, memo, pruned));
  const auto alts = alternatives(node, ctx, est);
  const double rows = est_node(node, ctx, est).rows;

  std::vector<PhysicalPtr> out;
  std::vector<size_t> idx(kid_sets.size(), 0);
  bool any_empty = false;
  for (const auto& s : kid_sets) any_empty |= s.empty();
  if (!any_empty) {
    while (true) {
      std::vector<PhysicalPtr> kids;
      for (size_t i = 0; i < kid_sets.size(); ++i) kids.push_back(kid_sets[i][idx[i]]);
      for (const auto& a : alts)
        if (compatible(*node, a, kids)) out.push_back(build(node, a, kids, rows, ctx.batch_items));
      size_t k = 0;
      while (k < idx.size() && ++idx[k] == kid_sets[k].size()) idx[k++] = 0;
      if (k == idx.size()) break;
    }
  }
  if (pruned) out = prune(std::move(out), ctx.frontier_cap);
  return memo.emplace(node.get(), std::move(out)).first->second;
}

}  // namespace

std::vector<PhysicalPtr> enumerate_physical(const LogicalPtr& plan, const OptimizerContext& ctx) {
  if (ctx.engines.empty()) fail(ErrorCode::InvalidArgument, "no engines configured");
  EstMemo est;
  PhysMemo memo;
  return enumerate_node(plan, ctx, est, memo, true);
}

std::vector<PhysicalPtr> enumerate_all(const LogicalPtr& plan, const OptimizerContext& ctx) {
  if (ctx.engines.empty()) fail(ErrorCode::InvalidArgument, "no engines configured");
  EstMemo est;
  PhysMemo memo;
  return enumerate_node(plan, ctx, est, memo, false);
}

CostQuality estimate(const PhysicalPtr& plan, const OptimizerContext& ctx) {
  EstMemo est;
  std::function<CostQuality(const PhysicalPtr&)> go = [&](const PhysicalPtr& p) -> CostQuality {
    if (p->op == PhysOp::CacheRead) return p->self;
    CostQuality self{0, 1};
    bool found = false;
    for (const auto& a : alternatives(p->logical, ctx, est))
      if (a.op == p->op && a.variant == p->variant && a.engine == p->engine) {
        self = a.self;
        found = true;
        break;
      }
    if (!found) fail(ErrorCode::InvalidArgument, "physical choice not available: " + choice_text(p->op, p->variant, p->engine));
    for (const auto& c : p->children) {
      const CostQuality k = go(c);
      self.latency += k.latency;
      self.quality = std::min(self.quality, k.quality);
    }
    return self;
  };
  return go(plan);
}

bool ranks_before(const PhysicalPtr& a, const PhysicalPtr& b, const Objective& objective) {
  const CostQuality& x = a->total;
  const CostQuality& y = b->total;
  if (objective.mode == Objective::Mode::MinLatencyGivenQuality) {
    if (x.latency != y.latency) return x.latency < y.latency;
    if (x.quality != y.quality) return x.quality > y.quality;
  } else {
    if (x.quality != y.quality) return x.quality > y.quality;
    if (x.latency != y.latency) return x.latency < y.latency;
  }
  if (a->nodes != b->nodes) return a->nodes < b->nodes;
  return a->id.hex() < b->id.hex();
}

PhysicalPtr choose(const std::vector<PhysicalPtr>& candidates, const Objective& objective) {
  if (candidates.empty()) fail(ErrorCode::InvalidArgument, "no candidates");
  const bool min_lat = objective.mode == Objective::Mode::MinLatencyGivenQuality;
  auto feasible = [&](const PhysicalPtr& p) {
    return min_lat ? p->total.quality >= objective.bound : p->total.latency <= objective.bound;
  };
  PhysicalPtr best;
  for (const auto& c : candidates)
    if (feasible(c) && (!best || ranks_before(c, best, objective))) best = c;
  if (best) return best;

  // Closest to the bound: best quality for a quality bound, least latency
  // for a latency budget.
  const Objective flip = min_lat ? Objective{Objective::Mode::MaxQualityGivenLatency, 0}
                                 : Objective{Objective::Mode::MinLatencyGivenQuality, 0};
  PhysicalPtr closest;
  for (const auto& c : candidates)
    if (!closest || ranks_before(c, closest, flip)) closest = c;
  std::ostringstream os;
  os << "no plan satisfies " << objective.to_string() << "; best available latency=" << closest->total.latency
     << "ms quality=" << closest->total.quality;
  throw InfeasibleError(closest->total, os.str());
}

// ---------------------------------------------------------------------------
// Cache substitution

namespace {
std::optional<CacheKey> key_for(const LogicalPtr& node, PipelineVariant variant) {
  if (!node->snapshot) return std::nullopt;
  CacheKey k;
  k.snapshot = *node->snapshot;
  switch (node->op) {
    case LogicalOp::Join:
    case LogicalOp::Aggregate:
      k.kind = ArtifactKind::RelationalIntermediate;
      k.fingerprint = fingerprint(node);
      return k;
    case LogicalOp::AITrain:
      k.kind = ArtifactKind::OptimizerState;
      k.fingerprint = fnv1a_128(fingerprint(node).hex() + ":" + std::string(to_string(variant)));
      return k;
    case LogicalOp::AIInfer:
      k.kind = node->ai->kind == ModelKind::HashEmbedder ? ArtifactKind::Embedding : ArtifactKind::RelationalIntermediate;
      k.fingerprint = fnv1a_128(fingerprint(node).hex() + ":" + std::string(to_string(variant)));
      k.model = node->ai->model;
      return k;
    default: return std::nullopt;
  }
}
}  // namespace

std::optional<CacheKey> materialization_key(const LogicalPtr& node) { return key_for(node, PipelineVariant::Direct); }

std::optional<CacheKey> materialization_key(const PhysicalNode& node) { return key_for(node.logical, node.variant); }

PhysicalPtr cache_aware_substitute(const PhysicalPtr& plan, const CacheIndex& index, const TierConfig& tiers) {
  if (index.empty() || plan->op == PhysOp::CacheRead) return plan;
  if (auto key = materialization_key(*plan)) {
    if (const CacheEntry* e = index.find(*key)) {
      const double read = tiers.read_cost_ms_per_mb[static_cast<size_t>(e->tier)] * e->size_mb;
      if (read <= plan->total.latency) {
        auto p = std::make_shared<PhysicalNode>();
        p->op = PhysOp::CacheRead;
        p->logical = plan->logical;
        p->variant = plan->variant;
        p->rows = plan->rows;
        p->self = {read, plan->total.quality};
        p->total = p->self;
        p->nodes = 1;
        p->cache_key = key;
        p->tier = e->tier;
        p->size_mb = e->size_mb;
        p->fallback = plan;
        p->text = "CacheRead|" + key->to_string();
        p->id = fnv1a_128(p->text);
        return p;
      }
    }
  }
  bool changed = false;
  std::vector<PhysicalPtr> kids;
  for (const auto& c : plan->children) {
    kids.push_back(cache_aware_substitute(c, index, tiers));
    changed |= kids.back() != c;
  }
  if (!changed) return plan;
  auto p = std::make_shared<PhysicalNode>(*plan);
  p->total = p->self;
  p->nodes = 1;
  p->text = choice_text(p->op, p->variant, p->engine) + "|" + logical_id(p->logical) + "(";
  for (size_t i = 0; i < kids.size(); ++i) {
    p->total.latency += kids[i]->total.latency;
    p->total.quality = std::min(p->total.quality, kids[i]->total.quality);
    p->nodes += kids[i]->nodes;
    p->text += (i ? "," : "") + kids[i]->id.hex();
  }
  p->text += ")";
  p->id = fnv1a_128(p->text);
  p->children = std::move(kids);
  return p;
}

// ---------------------------------------------------------------------------
// Explain

void visit_physical(const PhysicalPtr& plan, const std::function<void(const PhysicalPtr&)>& fn) {
  for (const auto& c : plan->children) visit_physical(c, fn);
  fn(plan);
}

namespace {
std::string fmt(double v, int prec) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

void explain_node(const PhysicalPtr& p, int depth, std::string& out) {
  out += std::string(depth * 2, ' ');
  out += to_string(p->op);
  const LogicalNode& n = *p->logical;
  switch (p->op) {
    case PhysOp::FullScan:
    case PhysOp::FilteredScan:
      out += " " + n.table_name;
      if (!n.alias.empty() && n.alias != n.table_name) out += " AS " + n.alias;
      if (n.predicate) out += " filter " + to_sql(n.predicate);
      break;
    case PhysOp::Filter: out += " " + to_sql(n.predicate); break;
    case PhysOp::HashJoin:
    case PhysOp::MergeJoin:
    case PhysOp::NestedLoopJoin: out += n.predicate ? " ON " + to_sql(n.predicate) : std::string(" CROSS"); break;
    case PhysOp::Limit: out += " " + std::to_string(n.limit); break;
    case PhysOp::AITrain: out += " variant=" + std::string(to_string(p->variant)); break;
    case PhysOp::AIInfer:
      out += " " + (n.ai->model ? n.ai->model->to_string() : std::string("inline")) +
             " variant=" + std::string(to_string(p->variant)) +
             " engine=" + (p->engine ? std::to_string(*p->engine) : std::string("any")) +
             " batch=" + std::to_string(p->batch_hint);
      if (n.ai->sliced()) out += " mask=" + mask_key(n.ai->mask);
      break;
    case PhysOp::CacheRead:
      out += " " + std::string(to_string(p->cache_key->kind)) + " tier=" + std::string(to_string(p->tier));
      break;
    default: break;
  }
  out += "  (" + fmt(p->self.latency, 3) + "ms, q=" + fmt(p->self.quality, 3) + ", rows=" + fmt(p->rows, 0) + ")\n";
  for (const auto& c : p->children) explain_node(c, depth + 1, out);
}
}  // namespace

std::string explain_physical(const PhysicalPtr& plan) {
  std::string out;
  explain_node(plan, 0, out);
  out += "total: latency=" + fmt(plan->total.latency, 3) + "ms quality=" + fmt(plan->total.quality, 3) + "\n";
  return out;
}

}  // namespace neurq
