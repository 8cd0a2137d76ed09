#include "neurq/planner/logical_plan.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "neurq/common/error.hpp"

namespace neurq {

std::string_view to_string(LogicalOp op) {
  switch (op) {
    case LogicalOp::Scan: return "Scan";
    case LogicalOp::Select: return "Select";
    case LogicalOp::Project: return "Project";
    case LogicalOp::Join: return "Join";
    case LogicalOp::Aggregate: return "Aggregate";
    case LogicalOp::Sort: return "Sort";
    case LogicalOp::Limit: return "Limit";
    case LogicalOp::AITrain: return "AITrain";
    case LogicalOp::AIInfer: return "AIInfer";
  }
  return "?";
}

std::string aggregate_column(size_t i) { return "agg" + std::to_string(i); }

namespace {

const ColumnInfo& column_in(const Schema& schema, const ColumnKey& key) {
  const int idx = find_column(schema, key.qualifier, key.name);
  if (idx == -2) fail(ErrorCode::AmbiguousColumn, "ambiguous column " + key.qualified());
  if (idx < 0) fail(ErrorCode::UnknownColumn, "unknown column " + key.qualified());
  return schema[static_cast<size_t>(idx)];
}

Schema compute_schema(const LogicalNode& n) {
  Schema s;
  switch (n.op) {
    case LogicalOp::Scan: {
      // Filled by make_scan; kept as is.
      return n.schema;
    }
    case LogicalOp::Select:
    case LogicalOp::Sort:
    case LogicalOp::Limit:
    case LogicalOp::AITrain: return n.children.at(0)->schema;
    case LogicalOp::Project: {
      // Names were fixed at construction; refresh types only.
      const Schema& in = n.children.at(0)->schema;
      s = n.schema;
      for (size_t i = 0; i < n.exprs.size(); ++i) {
        const ExprPtr& e = n.exprs[i];
        if (e->kind == Expr::Kind::Literal && is_null(e->literal)) continue;
        s[i].type = infer_type(e, in);
      }
      return s;
    }
    case LogicalOp::Join: {
      s = n.children.at(0)->schema;
      const Schema& r = n.children.at(1)->schema;
      s.insert(s.end(), r.begin(), r.end());
      return s;
    }
    case LogicalOp::Aggregate: {
      const Schema& in = n.children.at(0)->schema;
      for (size_t i = 0; i < n.exprs.size(); ++i) {
        const ExprPtr& k = n.exprs[i];
        if (k->kind == Expr::Kind::Column)
          s.push_back(column_in(in, {k->qualifier, k->name}));
        else
          s.push_back({"", "g" + std::to_string(i), infer_type(k, in)});
      }
      for (size_t i = 0; i < n.aggregates.size(); ++i)
        s.push_back({"", aggregate_column(i), infer_type(n.aggregates[i], in)});
      return s;
    }
    case LogicalOp::AIInfer: {
      const Schema& in = n.children.at(0)->schema;
      const AISpec& a = *n.ai;
      s.push_back({a.alias, a.pk.name, column_in(in, a.pk).type});
      s.push_back({a.alias, a.output_name, a.output_type});
      for (const auto& p : a.passthrough) s.push_back(column_in(in, p));
      return s;
    }
  }
  return s;
}

LogicalPtr finish(LogicalNode n) {
  n.schema = compute_schema(n);
  return std::make_shared<const LogicalNode>(std::move(n));
}

}  // namespace

LogicalPtr make_scan(TableId table, const TableDef& def, std::string alias, std::vector<std::string> columns,
                     ExprPtr predicate) {
  LogicalNode n;
  n.op = LogicalOp::Scan;
  n.table = table;
  n.table_name = def.name;
  n.alias = alias.empty() ? def.name : std::move(alias);
  n.columns = std::move(columns);
  n.predicate = std::move(predicate);
  for (const auto& c : n.columns) {
    const int ord = def.ordinal(c);
    if (ord < 0) fail(ErrorCode::UnknownColumn, "unknown column " + def.name + "." + c);
    n.schema.push_back({n.alias, c, def.columns[static_cast<size_t>(ord)].type});
  }
  if (n.predicate) {
    Schema full;
    for (const auto& c : def.columns) full.push_back({n.alias, c.name, c.type});
    if (!resolves_in(n.predicate, full)) fail(ErrorCode::UnknownColumn, "scan filter references unknown columns");
  }
  return std::make_shared<const LogicalNode>(std::move(n));
}

LogicalPtr make_select(LogicalPtr child, ExprPtr predicate) {
  LogicalNode n;
  n.op = LogicalOp::Select;
  n.children = {std::move(child)};
  n.predicate = std::move(predicate);
  return finish(std::move(n));
}

LogicalPtr make_project(LogicalPtr child, std::vector<ExprPtr> exprs, std::vector<ColumnKey> names) {
  if (exprs.size() != names.size()) fail(ErrorCode::ArityMismatch, "project names and expressions differ");
  LogicalNode n;
  n.op = LogicalOp::Project;
  n.children = {std::move(child)};
  n.exprs = std::move(exprs);
  for (const auto& k : names) n.schema.push_back({k.qualifier, k.name, ColumnType::Int64});
  return finish(std::move(n));
}

LogicalPtr make_join(LogicalPtr left, LogicalPtr right, ExprPtr condition) {
  LogicalNode n;
  n.op = LogicalOp::Join;
  n.children = {std::move(left), std::move(right)};
  n.predicate = std::move(condition);
  return finish(std::move(n));
}

LogicalPtr make_aggregate(LogicalPtr child, std::vector<ExprPtr> group_keys, std::vector<ExprPtr> aggregates) {
  LogicalNode n;
  n.op = LogicalOp::Aggregate;
  n.children = {std::move(child)};
  n.exprs = std::move(group_keys);
  n.aggregates = std::move(aggregates);
  return finish(std::move(n));
}

LogicalPtr make_sort(LogicalPtr child, std::vector<SortKey> keys) {
  LogicalNode n;
  n.op = LogicalOp::Sort;
  n.children = {std::move(child)};
  n.sort_keys = std::move(keys);
  return finish(std::move(n));
}

LogicalPtr make_limit(LogicalPtr child, int64_t limit) {
  LogicalNode n;
  n.op = LogicalOp::Limit;
  n.children = {std::move(child)};
  n.limit = limit;
  return finish(std::move(n));
}

LogicalPtr make_ai_train(LogicalPtr child, AISpec spec) {
  LogicalNode n;
  n.op = LogicalOp::AITrain;
  n.children = {std::move(child)};
  n.ai = std::move(spec);
  return finish(std::move(n));
}

LogicalPtr make_ai_infer(LogicalPtr child, AISpec spec) {
  LogicalNode n;
  n.op = LogicalOp::AIInfer;
  n.children = {std::move(child)};
  n.ai = std::move(spec);
  return finish(std::move(n));
}

LogicalPtr with_children(const LogicalPtr& node, std::vector<LogicalPtr> children) {
  LogicalNode n = *node;
  n.children = std::move(children);
  return finish(std::move(n));
}

void visit(const LogicalPtr& plan, const std::function<void(const LogicalPtr&)>& fn) {
  std::set<const LogicalNode*> seen;
  std::function<void(const LogicalPtr&)> go = [&](const LogicalPtr& n) {
    if (!seen.insert(n.get()).second) return;
    for (const auto& c : n->children) go(c);
    fn(n);
  };
  go(plan);
}

size_t node_count(const LogicalPtr& plan) {
  size_t n = 0;
  visit(plan, [&](const LogicalPtr&) { ++n; });
  return n;
}

LogicalPtr training_source(const LogicalPtr& infer) {
  if (!infer || infer->op != LogicalOp::AIInfer || infer->ai->model) return nullptr;
  LogicalPtr n = infer->children.at(0);
  while (n) {
    if (n->op == LogicalOp::AITrain) return n;
    if ((n->op == LogicalOp::Select || n->op == LogicalOp::Project) && n->children.size() == 1) {
      n = n->children[0];
      continue;
    }
    return nullptr;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Lowering

namespace {

using sql::BoundPredict;
using sql::BoundStatement;
using sql::FromClause;
using sql::JoinClause;
using sql::SelectStmt;
using sql::TableRef;

bool is_identity_project(const LogicalPtr& child, const std::vector<ExprPtr>& exprs, const std::vector<ColumnKey>& names) {
  const Schema& in = child->schema;
  if (exprs.size() != in.size()) return false;
  for (size_t i = 0; i < exprs.size(); ++i) {
    const auto& e = exprs[i];
    if (e->kind != Expr::Kind::Column || e->qualifier != in[i].qualifier || e->name != in[i].name) return false;
    if (names[i].qualifier != in[i].qualifier || names[i].name != in[i].name) return false;
  }
  return true;
}

LogicalPtr requalify(const LogicalPtr& plan, const std::string& qualifier) {
  std::vector<ColumnKey> names;
  for (const auto& c : plan->schema) names.push_back({qualifier, c.name});
  if (plan->op == LogicalOp::Project) return make_project(plan->children[0], plan->exprs, names);
  std::vector<ExprPtr> exprs;
  for (const auto& c : plan->schema) exprs.push_back(make_column(c.qualifier, c.name));
  return make_project(plan, exprs, names);
}

class Lowerer {
 public:
  explicit Lowerer(const BoundStatement& b) : b_(b) {}

  LogicalPtr select(const SelectStmt& s) {
    auto saved = ctes_;
    for (const auto& cte : s.ctes) ctes_[cte.name] = requalify(select(*cte.query), cte.name);

    LogicalPtr plan;
    if (s.from) {
      plan = from(*s.from);
    } else {
      plan = nullptr;
    }
    if (!plan) {
      ctes_ = std::move(saved);
      return constant_select(s);
    }
    if (s.where) plan = make_select(plan, s.where);

    std::vector<ExprPtr> items;
    for (const auto& i : s.items) items.push_back(i.expr);
    std::vector<SortKey> order;
    for (const auto& o : s.order_by) order.push_back({o.expr, o.desc});

    const bool grouped = !s.group_by.empty() || std::any_of(items.begin(), items.end(), contains_aggregate);
    if (grouped) {
      std::vector<ExprPtr> aggs;
      auto collect = [&](const ExprPtr& e) {
        return substitute_calls(e, [&](const ExprPtr& call) {
          for (size_t i = 0; i < aggs.size(); ++i)
            if (expr_equal(aggs[i], call)) return make_column("", aggregate_column(i));
          aggs.push_back(call);
          return make_column("", aggregate_column(aggs.size() - 1));
        });
      };
      for (auto& e : items) e = collect(e);
      for (auto& o : order) o.expr = collect(o.expr);
      plan = make_aggregate(plan, s.group_by, aggs);
    }
    if (!order.empty()) plan = make_sort(plan, order);
    if (s.limit) plan = make_limit(plan, *s.limit);

    std::vector<ColumnKey> names;
    for (size_t i = 0; i < s.items.size(); ++i) {
      const auto& item = s.items[i];
      if (item.alias.empty() && item.expr->kind == Expr::Kind::Column)
        names.push_back({item.expr->qualifier, item.expr->name});
      else
        names.push_back({"", item.alias.empty() ? to_sql(item.expr) : item.alias});
    }
    if (!is_identity_project(plan, items, names)) plan = make_project(plan, items, names);
    ctes_ = std::move(saved);
    return plan;
  }

 private:
  static ExprPtr substitute_calls(const ExprPtr& e, const std::function<ExprPtr(const ExprPtr&)>& fn) {
    if (!e) return e;
    if (e->kind == Expr::Kind::Call && is_aggregate_call(*e)) return fn(e);
    if (e->args.empty()) return e;
    auto copy = std::make_shared<Expr>(*e);
    for (auto& a : copy->args) a = substitute_calls(a, fn);
    return copy;
  }

  LogicalPtr constant_select(const SelectStmt&) {
    fail(ErrorCode::InvalidArgument, "SELECT without FROM is evaluated directly, not planned");
  }

  LogicalPtr from(const FromClause& f) {
    LogicalPtr plan = table_ref(f.first);
    for (const auto& j : f.joins)
      plan = make_join(plan, table_ref(j.right), j.kind == JoinClause::Kind::Inner ? j.on : nullptr);
    return plan;
  }

  LogicalPtr table_ref(const TableRef& ref) {
    switch (ref.kind) {
      case TableRef::Kind::Base: {
        if (auto it = ctes_.find(ref.table); it != ctes_.end())
          return ref.qualifier() == ref.table ? it->second : requalify(it->second, ref.qualifier());
        const TableDef& def = b_.tables.at(ref.table);
        std::vector<std::string> cols;
        for (const auto& c : def.columns) cols.push_back(c.name);
        return make_scan(b_.table_ids.at(ref.table), def, ref.qualifier(), cols);
      }
      case TableRef::Kind::Subquery: return requalify(select(*ref.subquery), ref.alias);
      case TableRef::Kind::Predict: return predict(*ref.predict);
    }
    return nullptr;
  }

  LogicalPtr predict(const sql::PredictBlock& p) {
    const BoundPredict& bp = b_.predicts.at(&p);
    LogicalPtr input = from(p.from);
    if (p.where) input = make_select(input, p.where);
    AISpec spec;
    spec.model = bp.model;
    spec.kind = bp.kind;
    spec.features = bp.features;
    spec.feature_types = bp.feature_types;
    spec.feature_names = bp.feature_names;
    spec.pk = bp.pk;
    spec.target = bp.target;
    spec.alias = bp.alias;
    spec.output_name = bp.output_name;
    spec.output_type = bp.output_type;
    spec.mask = bp.mask;
    if (!p.uses_model()) {
      LogicalPtr train = make_ai_train(input, spec);
      return make_ai_infer(train, spec);
    }
    // Project the key and features; features outside the tenant's mask are
    // replaced by NULL so nothing unauthorized reaches the model.
    std::vector<ExprPtr> exprs{make_column(bp.pk.qualifier, bp.pk.name)};
    std::vector<ColumnKey> names{bp.pk};
    for (size_t i = 0; i < bp.features.size(); ++i) {
      const ColumnKey& f = bp.features[i];
      if (std::find(names.begin(), names.end(), f) != names.end()) continue;
      const bool allowed = std::find(bp.mask.begin(), bp.mask.end(), bp.feature_names[i]) != bp.mask.end();
      exprs.push_back(allowed ? make_column(f.qualifier, f.name) : make_literal(Null{}));
      names.push_back(f);
    }
    return make_ai_infer(make_project(input, exprs, names), spec);
  }

  const BoundStatement& b_;
  std::map<std::string, LogicalPtr> ctes_;
};

}  // namespace

LogicalPtr lower(const sql::BoundStatement& bound) {
  if (!bound.stmt.select) fail(ErrorCode::InvalidArgument, "only SELECT statements are planned");
  Lowerer l(bound);
  return l.select(*bound.stmt.select);
}

LogicalPtr pin_snapshot(const LogicalPtr& plan, SnapshotVersion snapshot) {
  std::unordered_map<const LogicalNode*, LogicalPtr> memo;
  std::function<LogicalPtr(const LogicalPtr&)> go = [&](const LogicalPtr& n) -> LogicalPtr {
    if (auto it = memo.find(n.get()); it != memo.end()) return it->second;
    LogicalNode copy = *n;
    for (auto& c : copy.children) c = go(c);
    copy.snapshot = snapshot;
    auto out = std::make_shared<const LogicalNode>(std::move(copy));
    memo[n.get()] = out;
    return out;
  };
  return go(plan);
}

// ---------------------------------------------------------------------------
// Canonical form and fingerprints

namespace {

std::string keys_text(const std::vector<ColumnKey>& keys, bool sorted) {
  std::vector<std::string> parts;
  for (const auto& k : keys) parts.push_back(k.qualified());
  if (sorted) std::sort(parts.begin(), parts.end());
  std::string out = "[";
  for (size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out + "]";
}

std::string ai_text(const AISpec& a, LogicalOp op) {
  std::string out = "kind=" + std::string(to_string(a.kind));
  out += a.model ? " model=" + a.model->to_string() : std::string(" model=inline");
  out += " features=" + keys_text(a.features, false);
  out += " pk=" + a.pk.qualified();
  if (a.target) out += " target=" + a.target->qualified();
  if (op == LogicalOp::AIInfer) {
    out += " out=" + a.alias + "." + a.output_name;
    std::vector<std::string> mask = a.mask;
    out += " mask=" + mask_key(mask);
    out += " pass=" + keys_text(a.passthrough, true);
  }
  return out;
}

std::string node_text(const LogicalNode& n) {
  std::string out(to_string(n.op));
  switch (n.op) {
    case LogicalOp::Scan: {
      auto cols = n.columns;
      std::sort(cols.begin(), cols.end());
      out += "(" + n.table_name + " as " + n.alias + " cols=";
      for (size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
      if (n.predicate) out += " filter=" + canonical_text(n.predicate);
      out += ")";
      break;
    }
    case LogicalOp::Select: out += "(" + canonical_text(n.predicate) + ")"; break;
    case LogicalOp::Join: out += "(" + (n.predicate ? canonical_text(n.predicate) : std::string("cross")) + ")"; break;
    case LogicalOp::Project: {
      std::vector<std::string> parts;
      for (size_t i = 0; i < n.exprs.size(); ++i) parts.push_back(n.schema[i].qualified() + ":=" + canonical_text(n.exprs[i]));
      std::sort(parts.begin(), parts.end());
      out += "(";
      for (size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
      out += ")";
      break;
    }
    case LogicalOp::Aggregate: {
      std::vector<std::string> keys, aggs;
      for (const auto& k : n.exprs) keys.push_back(canonical_text(k));
      std::sort(keys.begin(), keys.end());
      for (size_t i = 0; i < n.aggregates.size(); ++i)
        aggs.push_back(aggregate_column(i) + ":=" + canonical_text(n.aggregates[i]));
      std::sort(aggs.begin(), aggs.end());
      out += "(keys=";
      for (size_t i = 0; i < keys.size(); ++i) out += (i ? "," : "") + keys[i];
      out += " aggs=";
      for (size_t i = 0; i < aggs.size(); ++i) out += (i ? "," : "") + aggs[i];
      out += ")";
      break;
    }
    case LogicalOp::Sort:
      out += "(";
      for (size_t i = 0; i < n.sort_keys.size(); ++i)
        out += (i ? "," : "") + canonical_text(n.sort_keys[i].expr) + (n.sort_keys[i].desc ? " desc" : " asc");
      out += ")";
      break;
    case LogicalOp::Limit: out += "(" + std::to_string(n.limit) + ")"; break;
    case LogicalOp::AITrain:
    case LogicalOp::AIInfer: out += "(" + ai_text(*n.ai, n.op) + ")"; break;
  }
  return out;
}

std::string canon(const LogicalPtr& n, bool with_pins) {
  std::string out = node_text(*n);
  if (with_pins) {
    if (!n->snapshot) fail(ErrorCode::UnpinnedPlan, std::string(to_string(n->op)) + " node has no snapshot pin");
    out += "@s" + std::to_string(n->snapshot->value);
  }
  std::vector<std::string> kids;
  for (const auto& c : n->children) kids.push_back(canon(c, with_pins));
  if (n->op == LogicalOp::Join) std::sort(kids.begin(), kids.end());
  if (!kids.empty()) {
    out += "{";
    for (size_t i = 0; i < kids.size(); ++i) out += (i ? ";" : "") + kids[i];
    out += "}";
  }
  return out;
}

}  // namespace

std::string canonical_form(const LogicalPtr& node, bool with_pins) { return canon(node, with_pins); }

Hash128 fingerprint(const LogicalPtr& node) { return fnv1a_128(canon(node, true)); }

bool plan_equal(const LogicalPtr& a, const LogicalPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return a->schema == b->schema && canon(a, false) == canon(b, false) && a->snapshot == b->snapshot;
}

// ---------------------------------------------------------------------------
// Explain

namespace {

std::string describe(const LogicalNode& n) {
  std::string out(to_string(n.op));
  switch (n.op) {
    case LogicalOp::Scan: {
      out += " " + n.table_name;
      if (n.alias != n.table_name) out += " AS " + n.alias;
      out += " [";
      for (size_t i = 0; i < n.columns.size(); ++i) out += (i ? ", " : "") + n.columns[i];
      out += "]";
      if (n.predicate) out += " filter " + to_sql(n.predicate);
      break;
    }
    case LogicalOp::Select: out += " " + to_sql(n.predicate); break;
    case LogicalOp::Join: out += n.predicate ? " ON " + to_sql(n.predicate) : std::string(" CROSS"); break;
    case LogicalOp::Project: {
      out += " [";
      for (size_t i = 0; i < n.exprs.size(); ++i) {
        const std::string e = to_sql(n.exprs[i]);
        const std::string name = n.schema[i].qualified();
        out += (i ? ", " : "") + (e == name ? e : e + " AS " + name);
      }
      out += "]";
      break;
    }
    case LogicalOp::Aggregate: {
      out += " keys [";
      for (size_t i = 0; i < n.exprs.size(); ++i) out += (i ? ", " : "") + to_sql(n.exprs[i]);
      out += "] aggs [";
      for (size_t i = 0; i < n.aggregates.size(); ++i) out += (i ? ", " : "") + to_sql(n.aggregates[i]);
      out += "]";
      break;
    }
    case LogicalOp::Sort:
      out += " ";
      for (size_t i = 0; i < n.sort_keys.size(); ++i)
        out += (i ? ", " : "") + to_sql(n.sort_keys[i].expr) + (n.sort_keys[i].desc ? " DESC" : " ASC");
      break;
    case LogicalOp::Limit: out += " " + std::to_string(n.limit); break;
    case LogicalOp::AITrain:
    case LogicalOp::AIInfer: {
      const AISpec& a = *n.ai;
      out += " " + std::string(to_string(a.kind));
      out += a.model ? " model " + a.model->to_string() : std::string(" inline");
      out += " features " + keys_text(a.features, false);
      if (n.op == LogicalOp::AITrain && a.target) out += " target " + a.target->qualified();
      out += " pk " + a.pk.qualified();
      if (n.op == LogicalOp::AIInfer) {
        out += " -> " + a.alias + "(" + a.pk.name + ", " + a.output_name + ")";
        if (a.sliced()) out += " mask " + mask_key(a.mask);
        if (!a.passthrough.empty()) out += " pass " + keys_text(a.passthrough, false);
      }
      break;
    }
  }
  return out;
}

void explain_into(const LogicalPtr& n, int depth, std::ostringstream& os) {
  os << std::string(static_cast<size_t>(depth) * 2, ' ') << describe(*n);
  if (n->snapshot) os << "  [" << fingerprint(n).hex().substr(0, 8) << " @s" << n->snapshot->value << "]";
  os << "\n";
  for (const auto& c : n->children) explain_into(c, depth + 1, os);
}

}  // namespace

std::string explain(const LogicalPtr& plan) {
  std::ostringstream os;
  explain_into(plan, 0, os);
  return os.str();
}

}  // namespace neurq
