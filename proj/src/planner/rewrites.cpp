#include "neurq/planner/rewrites.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "neurq/common/error.hpp"

namespace neurq {

namespace {

std::string summary(const LogicalPtr& n) {
  std::string s(to_string(n->op));
  if (n->predicate) s += " " + to_sql(n->predicate);
  return s;
}

bool refs_subset(const ExprPtr& e, const Schema& schema) { return resolves_in(e, schema); }

LogicalPtr select_if(const LogicalPtr& child, const std::vector<ExprPtr>& terms) {
  if (terms.empty()) return child;
  return make_select(child, conjoin(terms));
}

// ---- predicate pushdown ----------------------------------------------------

LogicalPtr push_predicate(const LogicalPtr& node, const RewriteContext&) {
  if (node->op == LogicalOp::Join && node->predicate) {
    // One-sided join conjuncts move into that side.
    const auto& l = node->children[0];
    const auto& r = node->children[1];
    std::vector<ExprPtr> left, right, keep;
    for (const auto& t : split_conjuncts(node->predicate)) {
      const auto cols = referenced_columns(t);
      if (cols.empty()) {
        keep.push_back(t);
      } else if (refs_subset(t, l->schema)) {
        left.push_back(t);
      } else if (refs_subset(t, r->schema)) {
        right.push_back(t);
      } else {
        keep.push_back(t);
      }
    }
    if (left.empty() && right.empty()) return nullptr;
    return make_join(select_if(l, left), select_if(r, right), conjoin(keep));
  }
  if (node->op != LogicalOp::Select) return nullptr;
  const LogicalPtr& c = node->children[0];
  const auto terms = split_conjuncts(node->predicate);
  switch (c->op) {
    case LogicalOp::Select: return make_select(c->children[0], conjoin({c->predicate, node->predicate}));
    case LogicalOp::Scan: {
      LogicalNode copy = *c;
      copy.predicate = c->predicate ? conjoin({c->predicate, node->predicate}) : node->predicate;
      return std::make_shared<const LogicalNode>(std::move(copy));
    }
    case LogicalOp::Join: {
      const auto& l = c->children[0];
      const auto& r = c->children[1];
      std::vector<ExprPtr> left, right, join;
      for (const auto& t : terms) {
        const auto cols = referenced_columns(t);
        if (!cols.empty() && refs_subset(t, l->schema))
          left.push_back(t);
        else if (!cols.empty() && refs_subset(t, r->schema))
          right.push_back(t);
        else
          join.push_back(t);
      }
      std::vector<ExprPtr> cond;
      if (c->predicate) cond.push_back(c->predicate);
      cond.insert(cond.end(), join.begin(), join.end());
      return make_join(select_if(l, left), select_if(r, right), conjoin(cond));
    }
    case LogicalOp::Project: {
      // Push conjuncts that only read pass-through columns.
      std::map<ColumnKey, ExprPtr> mapping;
      for (size_t i = 0; i < c->exprs.size(); ++i)
        if (c->exprs[i]->kind == Expr::Kind::Column)
          mapping[{c->schema[i].qualifier, c->schema[i].name}] = c->exprs[i];
      std::vector<ExprPtr> below, above;
      for (const auto& t : terms) {
        bool ok = true;
        for (const auto& k : referenced_columns(t)) {
          const int idx = find_column(c->schema, k.qualifier, k.name);
          if (idx < 0) {
            ok = false;
            break;
          }
          const auto& info = c->schema[static_cast<size_t>(idx)];
          if (!mapping.count({info.qualifier, info.name})) ok = false;
        }
        if (!ok) {
          above.push_back(t);
          continue;
        }
        below.push_back(substitute_columns(t, [&](const Expr& col) -> ExprPtr {
          const int idx = find_column(c->schema, col.qualifier, col.name);
          const auto& info = c->schema[static_cast<size_t>(idx)];
          return mapping.at({info.qualifier, info.name});
        }));
      }
      if (below.empty()) return nullptr;
      LogicalPtr pushed = with_children(c, {make_select(c->children[0], conjoin(below))});
      return select_if(pushed, above);
    }
    case LogicalOp::Sort: return with_children(c, {make_select(c->children[0], node->predicate)});
    case LogicalOp::Aggregate: {
      std::set<ColumnKey> keys;
      for (const auto& k : c->exprs)
        if (k->kind == Expr::Kind::Column) keys.insert({k->qualifier, k->name});
      std::vector<ExprPtr> below, above;
      for (const auto& t : terms) {
        bool ok = !referenced_columns(t).empty();
        for (const auto& ref : referenced_columns(t)) {
          const int idx = find_column(c->schema, ref.qualifier, ref.name);
          if (idx < 0 || static_cast<size_t>(idx) >= c->exprs.size()) {
            ok = false;
            break;
          }
          const auto& info = c->schema[static_cast<size_t>(idx)];
          if (!keys.count({info.qualifier, info.name})) ok = false;
        }
        (ok ? below : above).push_back(t);
      }
      if (below.empty()) return nullptr;
      return select_if(with_children(c, {make_select(c->children[0], conjoin(below))}), above);
    }
    default: return nullptr;
  }
}

// ---- AI pull-up ------------------------------------------------------------

ExprPtr key_to_input(const ExprPtr& e, const AISpec& a) {
  return substitute_columns(e, [&](const Expr& col) -> ExprPtr {
    if (col.qualifier == a.alias && col.name == a.pk.name) return make_column(a.pk.qualifier, a.pk.name);
    return nullptr;
  });
}

bool reads_prediction(const ExprPtr& e, const AISpec& a) {
  for (const auto& k : referenced_columns(e))
    if (k.name == a.output_name && (k.qualifier == a.alias || k.qualifier.empty())) return true;
  return false;
}

LogicalPtr pull_up_ai(const LogicalPtr& node, const RewriteContext& ctx) {
  if (node->op == LogicalOp::Select && node->children[0]->op == LogicalOp::AIInfer) {
    const LogicalPtr& infer = node->children[0];
    const AISpec& a = *infer->ai;
    std::vector<ExprPtr> below, above;
    for (const auto& t : split_conjuncts(node->predicate)) {
      const auto refs = referenced_columns(t);
      const bool unqualified =
          std::any_of(refs.begin(), refs.end(), [](const ColumnKey& k) { return k.qualifier.empty(); });
      if (reads_prediction(t, a) || refs.empty() || unqualified) {
        above.push_back(t);
        continue;
      }
      ExprPtr moved = key_to_input(t, a);
      if (resolves_in(moved, infer->children[0]->schema))
        below.push_back(moved);
      else
        above.push_back(t);
    }
    if (below.empty()) return nullptr;
    LogicalPtr pulled = with_children(infer, {make_select(infer->children[0], conjoin(below))});
    return select_if(pulled, above);
  }
  if (node->op == LogicalOp::Join && ctx.cardinality && node->children[0]->op == LogicalOp::AIInfer) {
    const LogicalPtr& infer = node->children[0];
    const LogicalPtr& right = node->children[1];
    const AISpec& a = *infer->ai;
    if (!a.model) return nullptr;  // in-query training stays below its joins
    if (node->predicate && reads_prediction(node->predicate, a)) return nullptr;
    const LogicalPtr& input = infer->children[0];
    for (const auto& c : right->schema) {
      if (find_column(input->schema, c.qualifier, c.name) != -1) return nullptr;
      if (c.qualifier == a.alias) return nullptr;
    }
    if (!(ctx.cardinality(node) < ctx.cardinality(infer))) return nullptr;
    ExprPtr cond = node->predicate ? key_to_input(node->predicate, a) : nullptr;
    LogicalPtr join = make_join(input, right, cond);
    if (cond && !resolves_in(cond, join->schema)) return nullptr;
    AISpec spec = a;
    for (const auto& c : right->schema) spec.passthrough.push_back({c.qualifier, c.name});
    return make_ai_infer(join, spec);
  }
  return nullptr;
}

// ---- constant folding ------------------------------------------------------

bool is_true(const ExprPtr& e) {
  return e && e->kind == Expr::Kind::Literal && std::holds_alternative<bool>(e->literal) && std::get<bool>(e->literal);
}

LogicalPtr fold(const LogicalPtr& node, const RewriteContext&) {
  switch (node->op) {
    case LogicalOp::Select: {
      ExprPtr f = fold_constants(node->predicate);
      if (is_true(f)) return node->children[0];
      if (expr_equal(f, node->predicate)) return nullptr;
      return make_select(node->children[0], f);
    }
    case LogicalOp::Join:
    case LogicalOp::Scan: {
      if (!node->predicate) return nullptr;
      ExprPtr f = fold_constants(node->predicate);
      if (is_true(f)) f = nullptr;
      if (f && expr_equal(f, node->predicate)) return nullptr;
      LogicalNode copy = *node;
      copy.predicate = f;
      return std::make_shared<const LogicalNode>(std::move(copy));
    }
    case LogicalOp::Project: {
      bool changed = false;
      std::vector<ExprPtr> exprs;
      for (const auto& e : node->exprs) {
        exprs.push_back(fold_constants(e));
        if (!expr_equal(exprs.back(), e)) changed = true;
      }
      if (!changed) return nullptr;
      std::vector<ColumnKey> names;
      for (const auto& c : node->schema) names.push_back({c.qualifier, c.name});
      return make_project(node->children[0], exprs, names);
    }
    default: return nullptr;
  }
}

// ---- projection pushdown ---------------------------------------------------

using KeySet = std::set<ColumnKey>;

void add_refs(KeySet& s, const ExprPtr& e) {
  for (const auto& k : referenced_columns(e)) s.insert(k);
}

/// Resolves references to the exact output columns they name.
KeySet resolve_keys(const KeySet& refs, const Schema& schema) {
  KeySet out;
  for (const auto& k : refs) {
    const int idx = find_column(schema, k.qualifier, k.name);
    if (idx >= 0) out.insert({schema[static_cast<size_t>(idx)].qualifier, schema[static_cast<size_t>(idx)].name});
  }
  return out;
}

LogicalPtr prune(const LogicalPtr& n, const KeySet& required_refs);

LogicalPtr narrow_below_ai(const LogicalPtr& child, const KeySet& need) {
  LogicalPtr pruned = prune(child, need);
  const KeySet keys = resolve_keys(need, pruned->schema);
  if (pruned->schema.size() <= keys.size() || pruned->op == LogicalOp::Project || pruned->op == LogicalOp::AITrain)
    return pruned;
  std::vector<ExprPtr> exprs;
  std::vector<ColumnKey> names;
  for (const auto& c : pruned->schema) {
    if (!keys.count({c.qualifier, c.name})) continue;
    exprs.push_back(make_column(c.qualifier, c.name));
    names.push_back({c.qualifier, c.name});
  }
  return make_project(pruned, exprs, names);
}

LogicalPtr prune(const LogicalPtr& n, const KeySet& required_refs) {
  const KeySet req = resolve_keys(required_refs, n->schema);
  auto rebuild = [&](std::vector<LogicalPtr> kids) {
    for (size_t i = 0; i < kids.size(); ++i)
      if (kids[i] != n->children[i]) return with_children(n, std::move(kids));
    return n;
  };
  switch (n->op) {
    case LogicalOp::Scan: {
      std::vector<std::string> cols;
      for (const auto& c : n->columns)
        if (req.count({n->alias, c})) cols.push_back(c);
      if (cols.empty() && !n->columns.empty()) cols.push_back(n->columns.front());
      if (cols == n->columns) return n;
      LogicalNode copy = *n;
      copy.columns = cols;
      copy.schema.clear();
      for (const auto& c : n->schema)
        if (std::find(cols.begin(), cols.end(), c.name) != cols.end()) copy.schema.push_back(c);
      return std::make_shared<const LogicalNode>(std::move(copy));
    }
    case LogicalOp::Select:
    case LogicalOp::Sort:
    case LogicalOp::Limit: {
      KeySet need = req;
      if (n->predicate) add_refs(need, n->predicate);
      for (const auto& k : n->sort_keys) add_refs(need, k.expr);
      return rebuild({prune(n->children[0], need)});
    }
    case LogicalOp::Project: {
      std::vector<ExprPtr> exprs;
      std::vector<ColumnKey> names;
      for (size_t i = 0; i < n->exprs.size(); ++i) {
        if (!req.count({n->schema[i].qualifier, n->schema[i].name})) continue;
        exprs.push_back(n->exprs[i]);
        names.push_back({n->schema[i].qualifier, n->schema[i].name});
      }
      if (exprs.empty()) {
        exprs.push_back(n->exprs.front());
        names.push_back({n->schema.front().qualifier, n->schema.front().name});
      }
      KeySet need;
      for (const auto& e : exprs) add_refs(need, e);
      LogicalPtr child = prune(n->children[0], need);
      if (exprs.size() == n->exprs.size() && child == n->children[0]) return n;
      return make_project(child, exprs, names);
    }
    case LogicalOp::Join: {
      KeySet need = req;
      if (n->predicate) add_refs(need, n->predicate);
      return rebuild({prune(n->children[0], need), prune(n->children[1], need)});
    }
    case LogicalOp::Aggregate: {
      KeySet need;
      for (const auto& k : n->exprs) add_refs(need, k);
      for (const auto& a : n->aggregates) add_refs(need, a);
      return rebuild({prune(n->children[0], need)});
    }
    case LogicalOp::AITrain: {
      const AISpec& a = *n->ai;
      KeySet need = req;
      for (const auto& f : a.features) need.insert(f);
      need.insert(a.pk);
      if (a.target) need.insert(*a.target);
      return rebuild({narrow_below_ai(n->children[0], need)});
    }
    case LogicalOp::AIInfer: {
      const AISpec& a = *n->ai;
      KeySet need;
      for (const auto& f : a.features) need.insert(f);
      need.insert(a.pk);
      for (const auto& p : a.passthrough) need.insert(p);
      return rebuild({narrow_below_ai(n->children[0], need)});
    }
  }
  return n;
}

LogicalPtr push_projections(const LogicalPtr& root, const RewriteContext&) {
  KeySet all;
  for (const auto& c : root->schema) all.insert({c.qualifier, c.name});
  LogicalPtr out = prune(root, all);
  if (out == root) return nullptr;
  if (plan_equal(out, root)) return nullptr;
  return out;
}

// ---- driver ----------------------------------------------------------------

/// Nodes built by a rule inherit the snapshot pin of the node they replace.
LogicalPtr inherit_pin(const LogicalPtr& n, const std::optional<SnapshotVersion>& pin) {
  if (!pin) return n;
  bool changed = !n->snapshot;
  std::vector<LogicalPtr> kids;
  for (const auto& c : n->children) {
    kids.push_back(inherit_pin(c, pin));
    if (kids.back() != c) changed = true;
  }
  if (!changed) return n;
  LogicalNode copy = *n;
  copy.children = std::move(kids);
  if (!copy.snapshot) copy.snapshot = pin;
  return std::make_shared<const LogicalNode>(std::move(copy));
}

struct Driver {
  const RewriteRule& rule;
  const RewriteContext& ctx;
  std::vector<RewriteStep>& trace;
  int pass;
  bool fired = false;

  LogicalPtr run(const LogicalPtr& n) {
    LogicalPtr cur = n;
    if (LogicalPtr r = rule.apply(cur, ctx)) {
      trace.push_back({rule.name, summary(cur), pass});
      fired = true;
      cur = inherit_pin(r, cur->snapshot);
    }
    std::vector<LogicalPtr> kids;
    bool changed = false;
    for (const auto& c : cur->children) {
      kids.push_back(run(c));
      if (kids.back() != c) changed = true;
    }
    if (!changed) return cur;
    return with_children(cur, std::move(kids));
  }
};

}  // namespace

RewriteRule predicate_pushdown_rule() { return {"predicate_pushdown", push_predicate}; }
RewriteRule projection_pushdown_rule() { return {"projection_pushdown", push_projections}; }
RewriteRule ai_pullup_rule() { return {"ai_pullup", pull_up_ai}; }
RewriteRule constant_folding_rule() { return {"constant_folding", fold}; }

std::vector<RewriteRule> default_rules() {
  return {predicate_pushdown_rule(), projection_pushdown_rule(), ai_pullup_rule(), constant_folding_rule()};
}

RewriteResult apply_rewrites(const LogicalPtr& plan, const std::vector<RewriteRule>& rules, const RewriteContext& ctx,
                             int max_passes) {
  RewriteResult res{plan, {}};
  constexpr int kPerRuleCap = 64;
  for (int pass = 1; pass <= max_passes; ++pass) {
    bool any = false;
    for (const auto& rule : rules) {
      const bool whole_plan = rule.name == "projection_pushdown";
      for (int i = 0; i < kPerRuleCap; ++i) {
        bool fired = false;
        if (whole_plan) {
          if (LogicalPtr r = rule.apply(res.plan, ctx)) {
            res.trace.push_back({rule.name, summary(res.plan), pass});
            res.plan = inherit_pin(r, res.plan->snapshot);
            fired = true;
          }
        } else {
          Driver d{rule, ctx, res.trace, pass};
          res.plan = d.run(res.plan);
          fired = d.fired;
        }
        if (!fired) break;
        any = true;
      }
    }
    if (!any) break;
  }
  return res;
}

}  // namespace neurq
