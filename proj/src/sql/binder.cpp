#include "neurq/sql/binder.hpp"

#include <algorithm>

#include "neurq/common/error.hpp"

namespace neurq::sql {

namespace {

struct Scope {
  Schema schema;
  std::map<std::string, std::string> base_of;  // qualifier → base table
};

std::string where_(const Expr& e) {
  return e.line > 0 ? " at " + std::to_string(e.line) + ":" + std::to_string(e.column) : std::string();
}

Schema requalify(Schema s, const std::string& qualifier) {
  for (auto& c : s) c.qualifier = qualifier;
  return s;
}

bool is_numeric_type(ColumnType t) {
  return t == ColumnType::Int64 || t == ColumnType::Float64 || t == ColumnType::Bool;
}

class Binder {
 public:
  Binder(const Catalog& catalog, const BindOptions& options, BoundStatement& out)
      : catalog_(catalog), options_(options), out_(out) {}

  std::pair<std::shared_ptr<SelectStmt>, Schema> select(const SelectStmt& s) {
    auto saved = ctes_;
    auto b = std::make_shared<SelectStmt>();
    for (const auto& cte : s.ctes) {
      auto [q, schema] = select(*cte.query);
      if (ctes_.count(cte.name) && !saved.count(cte.name))
        fail(ErrorCode::InvalidArgument, "duplicate CTE name " + cte.name);
      ctes_[cte.name] = requalify(schema, cte.name);
      b->ctes.push_back({cte.name, q});
    }
    Scope scope;
    if (s.from) b->from = from(*s.from, scope);
    if (s.where) b->where = predicate(s.where, scope);

    for (const auto& item : s.items) {
      if (item.expr->kind == Expr::Kind::Star) {
        if (!item.alias.empty()) fail(ErrorCode::InvalidArgument, "* cannot take an alias");
        for (const auto& c : scope.schema) {
          check_base_access(scope, c.qualifier, c.name);
          b->items.push_back({make_column(c.qualifier, c.name), ""});
        }
        continue;
      }
      b->items.push_back({resolve(item.expr, scope), item.alias});
    }
    for (const auto& g : s.group_by) b->group_by.push_back(resolve(g, scope));
    for (const auto& o : s.order_by) b->order_by.push_back({order_key(o.expr, scope, *b), o.desc});
    b->limit = s.limit;

    const bool grouped =
        !b->group_by.empty() ||
        std::any_of(b->items.begin(), b->items.end(), [](const SelectItem& i) { return contains_aggregate(i.expr); });
    if (grouped) {
      std::set<ColumnKey> keys;
      for (const auto& g : b->group_by) {
        if (contains_aggregate(g)) fail(ErrorCode::InvalidArgument, "aggregate in GROUP BY");
        if (g->kind != Expr::Kind::Column) fail(ErrorCode::InvalidArgument, "GROUP BY supports column references only");
        keys.insert({g->qualifier, g->name});
      }
      auto check = [&](const ExprPtr& e) {
        if (contains_aggregate(e)) return;
        for (const auto& c : referenced_columns(e))
          if (!keys.count(c)) fail(ErrorCode::InvalidArgument, "column " + c.qualified() + " must appear in GROUP BY");
      };
      for (const auto& i : b->items) check(i.expr);
      for (const auto& o : b->order_by) check(o.expr);
    } else {
      for (const auto& o : b->order_by)
        if (contains_aggregate(o.expr)) fail(ErrorCode::InvalidArgument, "aggregate in ORDER BY without grouping");
    }
    if (b->where && contains_aggregate(b->where)) fail(ErrorCode::InvalidArgument, "aggregate in WHERE");

    Schema out;
    for (size_t i = 0; i < b->items.size(); ++i) {
      const auto& item = b->items[i];
      ColumnInfo c;
      c.type = infer_type(item.expr, scope.schema);
      if (item.alias.empty() && item.expr->kind == Expr::Kind::Column) {
        c.qualifier = item.expr->qualifier;
        c.name = item.expr->name;
      } else {
        c.name = item.alias.empty() ? to_sql(item.expr) : item.alias;
      }
      out.push_back(c);
    }
    ctes_ = std::move(saved);
    return {b, out};
  }

 private:
  FromClause from(const FromClause& f, Scope& scope) {
    FromClause b;
    b.first = table_ref(f.first, scope);
    for (const auto& j : f.joins) {
      JoinClause bj;
      bj.kind = j.kind;
      bj.right = table_ref(j.right, scope);
      if (j.kind == JoinClause::Kind::Inner) bj.on = predicate(j.on, scope);
      b.joins.push_back(std::move(bj));
    }
    return b;
  }

  void add_relation(Scope& scope, const std::string& qualifier, const Schema& schema, const TableRef& at) {
    for (const auto& c : scope.schema)
      if (c.qualifier == qualifier)
        fail(ErrorCode::InvalidArgument, "duplicate relation alias " + qualifier + " at " + std::to_string(at.line) +
                                             ":" + std::to_string(at.column));
    scope.schema.insert(scope.schema.end(), schema.begin(), schema.end());
  }

  TableRef table_ref(const TableRef& ref, Scope& scope) {
    TableRef b = ref;
    switch (ref.kind) {
      case TableRef::Kind::Base: {
        if (auto it = ctes_.find(ref.table); it != ctes_.end()) {
          add_relation(scope, ref.qualifier(), requalify(it->second, ref.qualifier()), ref);
          return b;
        }
        auto id = catalog_.find_table(ref.table);
        if (!id)
          fail(ErrorCode::UnknownTable, "unknown table " + ref.table + " at " + std::to_string(ref.line) + ":" +
                                            std::to_string(ref.column));
        const TableDef& def = catalog_.table_def(*id);
        out_.tables[def.name] = def;
        out_.table_ids[def.name] = *id;
        Schema s;
        for (const auto& c : def.columns) s.push_back({ref.qualifier(), c.name, c.type});
        add_relation(scope, ref.qualifier(), s, ref);
        scope.base_of[ref.qualifier()] = def.name;
        return b;
      }
      case TableRef::Kind::Subquery: {
        auto [q, schema] = select(*ref.subquery);
        b.subquery = q;
        add_relation(scope, ref.alias, requalify(schema, ref.alias), ref);
        return b;
      }
      case TableRef::Kind::Predict: {
        auto [p, schema] = predict(*ref.predict, ref.alias);
        b.predict = p;
        add_relation(scope, ref.alias, schema, ref);
        return b;
      }
    }
    return b;
  }

  std::pair<std::shared_ptr<PredictBlock>, Schema> predict(const PredictBlock& p, const std::string& alias) {
    auto b = std::make_shared<PredictBlock>();
    Scope inner;
    b->from = from(p.from, inner);
    if (p.where) b->where = predicate(p.where, inner);
    b->model = p.model;

    BoundPredict bp;
    bp.alias = alias;
    b->primary_key = resolve(p.primary_key, inner);
    if (b->primary_key->kind != Expr::Kind::Column) fail(ErrorCode::InvalidArgument, "primary key must be a column");
    bp.pk = {b->primary_key->qualifier, b->primary_key->name};
    bp.pk_type = infer_type(b->primary_key, inner.schema);

    if (!p.uses_model()) {
      b->target = resolve(p.target, inner);
      if (b->target->kind != Expr::Kind::Column) fail(ErrorCode::InvalidArgument, "target must be a column");
      const ColumnType tt = infer_type(b->target, inner.schema);
      if (!is_numeric_type(tt))
        fail(ErrorCode::TypeMismatch, "training target " + to_sql(b->target) + " is " + std::string(to_string(tt)));
      bp.target = ColumnKey{b->target->qualifier, b->target->name};
      bp.output_name = b->target->name;
      for (const auto& f : p.train_on) {
        auto r = resolve(f, inner);
        if (r->kind != Expr::Kind::Column) fail(ErrorCode::InvalidArgument, "TRAIN ON takes column references");
        const ColumnType ft = infer_type(r, inner.schema);
        if (ft == ColumnType::Vector) fail(ErrorCode::TypeMismatch, "cannot train on vector column " + to_sql(r));
        b->train_on.push_back(r);
        bp.features.push_back({r->qualifier, r->name});
        bp.feature_types.push_back(ft);
        bp.feature_names.push_back(r->name);
      }
      bp.mask = bp.feature_names;
    } else {
      auto rec = catalog_.latest_model(p.model);
      if (!rec) fail(ErrorCode::UnknownModel, "unknown model " + p.model);
      if (options_.tenant && !catalog_.check_access(*options_.tenant, AccessObject{p.model}))
        fail(ErrorCode::AccessDenied, "tenant " + *options_.tenant + " may not use model " + p.model);
      bp.model = rec->ref();
      bp.kind = rec->kind;
      for (const auto& fc : rec->feature_columns) {
        std::vector<size_t> hits;
        for (size_t i = 0; i < inner.schema.size(); ++i)
          if (inner.schema[i].name == fc.column) hits.push_back(i);
        if (hits.size() > 1) {
          std::vector<size_t> narrowed;
          for (size_t i : hits) {
            auto it = inner.base_of.find(inner.schema[i].qualifier);
            if (it != inner.base_of.end() && it->second == fc.table) narrowed.push_back(i);
          }
          hits = narrowed;
        }
        if (hits.empty()) fail(ErrorCode::UnknownColumn, "model feature " + fc.to_string() + " is not in the PREDICT input");
        if (hits.size() > 1) fail(ErrorCode::AmbiguousColumn, "model feature " + fc.to_string() + " is ambiguous");
        const ColumnInfo& c = inner.schema[hits[0]];
        bp.features.push_back({c.qualifier, c.name});
        bp.feature_types.push_back(c.type);
        bp.feature_names.push_back(fc.column);
        if (!options_.tenant || catalog_.check_access(*options_.tenant, AccessObject{fc})) bp.mask.push_back(fc.column);
      }
      if (bp.mask.empty())
        fail(ErrorCode::AccessDenied, "tenant " + *options_.tenant + " may read none of the features of " + p.model);
      if (p.target->kind != Expr::Kind::Column) fail(ErrorCode::InvalidArgument, "target must be a column");
      if (!p.target->qualifier.empty() && p.target->qualifier != alias &&
          std::none_of(inner.schema.begin(), inner.schema.end(),
                       [&](const ColumnInfo& c) { return c.qualifier == p.target->qualifier; }))
        fail(ErrorCode::UnknownColumn, "unknown qualifier " + p.target->qualifier + where_(*p.target));
      b->target = make_column(p.target->qualifier, p.target->name);
      bp.output_name = p.target->name;
      switch (bp.kind) {
        case ModelKind::RidgeRegressor: bp.output_type = ColumnType::Float64; break;
        case ModelKind::HashEmbedder: bp.output_type = ColumnType::Vector; break;
        case ModelKind::GenerativeMock: bp.output_type = ColumnType::Text; break;
      }
    }
    if (bp.output_name == bp.pk.name)
      fail(ErrorCode::InvalidArgument, "PREDICT target and primary key must have different names");
    out_.predicts[b.get()] = bp;
    Schema schema{{alias, bp.pk.name, bp.pk_type}, {alias, bp.output_name, bp.output_type}};
    return {b, schema};
  }

  void check_base_access(const Scope& scope, const std::string& qualifier, const std::string& name) {
    auto it = scope.base_of.find(qualifier);
    if (it == scope.base_of.end()) return;
    const TableColumn tc{it->second, name};
    const auto& def = out_.tables.at(it->second);
    out_.base_columns[tc] = {out_.table_ids.at(it->second), def.ordinal(name)};
    if (options_.tenant && !catalog_.check_access(*options_.tenant, AccessObject{tc}))
      fail(ErrorCode::AccessDenied, "tenant " + *options_.tenant + " may not read " + tc.to_string());
  }

  ExprPtr resolve(const ExprPtr& e, const Scope& scope) {
    return substitute_columns(e, [&](const Expr& c) -> ExprPtr {
      const int idx = find_column(scope.schema, c.qualifier, c.name);
      if (idx == -2) fail(ErrorCode::AmbiguousColumn, "ambiguous column " + c.name + where_(c));
      if (idx < 0) {
        if (c.qualifier.empty()) {
          if (auto it = options_.parameters.find(c.name); it != options_.parameters.end())
            return make_literal(it->second);
        }
        fail(ErrorCode::UnknownColumn,
             "unknown column " + (c.qualifier.empty() ? c.name : c.qualifier + "." + c.name) + where_(c));
      }
      const ColumnInfo& info = scope.schema[static_cast<size_t>(idx)];
      check_base_access(scope, info.qualifier, info.name);
      return make_column(info.qualifier, info.name);
    });
  }

  ExprPtr predicate(const ExprPtr& e, const Scope& scope) {
    ExprPtr r = resolve(e, scope);
    const ColumnType t = infer_type(r, scope.schema);
    if (t != ColumnType::Bool)
      fail(ErrorCode::TypeMismatch, "condition " + to_sql(r) + " is " + std::string(to_string(t)) + ", not bool");
    return r;
  }

  ExprPtr order_key(const ExprPtr& e, const Scope& scope, const SelectStmt& bound) {
    try {
      return resolve(e, scope);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::UnknownColumn || e->kind != Expr::Kind::Column || !e->qualifier.empty()) throw;
      for (const auto& item : bound.items)
        if (item.alias == e->name) return item.expr;
      throw;
    }
  }

  const Catalog& catalog_;
  const BindOptions& options_;
  BoundStatement& out_;
  std::map<std::string, Schema> ctes_;
};

}  // namespace

BoundStatement bind(const Statement& stmt, const Catalog& catalog, const BindOptions& options) {
  BoundStatement out;
  out.tenant = options.tenant;
  out.stmt = stmt;
  if (options.tenant && !catalog.has_tenant(*options.tenant))
    fail(ErrorCode::UnknownTenant, "unknown tenant " + *options.tenant);
  switch (stmt.kind) {
    case Statement::Kind::Select:
    case Statement::Kind::PredictSelect: {
      Binder b(catalog, options, out);
      out.stmt.select = b.select(*stmt.select).first;
      break;
    }
    case Statement::Kind::CreateModel: {
      const auto& c = stmt.create_model;
      auto kind = parse_model_kind(c.kind);
      if (!kind) fail(ErrorCode::InvalidArgument, "unknown model kind " + c.kind);
      auto id = catalog.find_table(c.table);
      if (!id) fail(ErrorCode::UnknownTable, "unknown table " + c.table);
      const TableDef& def = catalog.table_def(*id);
      out.tables[def.name] = def;
      out.table_ids[def.name] = *id;
      auto check = [&](const std::string& col) {
        const int ord = def.ordinal(col);
        if (ord < 0) fail(ErrorCode::UnknownColumn, "unknown column " + c.table + "." + col);
        out.base_columns[{def.name, col}] = {*id, ord};
        if (options.tenant && !catalog.check_access(*options.tenant, AccessObject{TableColumn{def.name, col}}))
          fail(ErrorCode::AccessDenied, "tenant " + *options.tenant + " may not read " + c.table + "." + col);
        return def.columns[static_cast<size_t>(ord)].type;
      };
      if (c.features.empty()) fail(ErrorCode::InvalidArgument, "model needs feature columns");
      for (const auto& f : c.features) check(f);
      if (*kind == ModelKind::RidgeRegressor) {
        if (!c.target) fail(ErrorCode::InvalidArgument, "ridge_regressor needs a TARGET column");
        const ColumnType t = check(*c.target);
        if (!is_numeric_type(t)) fail(ErrorCode::TypeMismatch, "target " + *c.target + " is not numeric");
      } else {
        if (c.features.size() != 1) fail(ErrorCode::InvalidArgument, c.kind + " takes exactly one text feature");
        if (check(c.features[0]) != ColumnType::Text) fail(ErrorCode::TypeMismatch, c.kind + " needs a text feature");
        if (c.target) check(*c.target);
      }
      break;
    }
    case Statement::Kind::DropModel:
      if (!catalog.latest_model(stmt.drop_model)) fail(ErrorCode::UnknownModel, "unknown model " + stmt.drop_model);
      break;
    case Statement::Kind::CreateTable: break;
  }
  return out;
}

}  // namespace neurq::sql
