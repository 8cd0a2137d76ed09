#include "neurq/executor/relational.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "neurq/common/error.hpp"

namespace neurq {

namespace {

std::string key_part(const Value& v) {
  if (is_null(v)) return "\x01N";
  if (is_numeric(v)) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", as_double(v));
    return std::string("\x01n") + buf;
  }
  if (auto* b = std::get_if<bool>(&v)) return *b ? "\x01t" : "\x01f";
  if (auto* s = std::get_if<std::string>(&v)) return "\x01s" + *s;
  return "\x01v" + value_to_string(v);
}

std::string row_key(const Row& row, const std::vector<int>& cols) {
  std::string k;
  for (int c : cols) k += key_part(row[c]);
  return k;
}

struct EquiKeys {
  std::vector<int> left, right;
};

EquiKeys equi_keys(const Schema& l, const Schema& r, const ExprPtr& cond) {
  EquiKeys k;
  for (const auto& c : split_conjuncts(cond)) {
    if (!c || c->kind != Expr::Kind::Binary || c->binary_op != BinaryOp::Eq) continue;
    const auto& a = c->args[0];
    const auto& b = c->args[1];
    if (a->kind != Expr::Kind::Column || b->kind != Expr::Kind::Column) continue;
    const int al = find_column(l, a->qualifier, a->name), ar = find_column(r, a->qualifier, a->name);
    const int bl = find_column(l, b->qualifier, b->name), br = find_column(r, b->qualifier, b->name);
    if (al >= 0 && br >= 0) {
      k.left.push_back(al);
      k.right.push_back(br);
    } else if (ar >= 0 && bl >= 0) {
      k.left.push_back(bl);
      k.right.push_back(ar);
    }
  }
  return k;
}

Row concat(const Row& a, const Row& b) {
  Row r;
  r.reserve(a.size() + b.size());
  r.insert(r.end(), a.begin(), a.end());
  r.insert(r.end(), b.begin(), b.end());
  return r;
}

int compare_keys(const Row& a, const std::vector<int>& ka, const Row& b, const std::vector<int>& kb) {
  for (size_t i = 0; i < ka.size(); ++i)
    if (int c = compare_values(a[ka[i]], b[kb[i]]); c != 0) return c;
  return 0;
}

}  // namespace

RowSet exec_filter(const RowSet& in, const ExprPtr& predicate) {
  RowSet out;
  out.schema = in.schema;
  CompiledExpr pred(predicate, in.schema);
  for (size_t i = 0; i < in.rows.size(); ++i)
    if (!predicate || pred.test(in.rows[i])) out.push(in.rows[i], in.versions[i]);
  return out;
}

RowSet exec_project(const RowSet& in, const LogicalNode& node) {
  RowSet out;
  out.schema = node.schema;
  std::vector<CompiledExpr> exprs;
  for (const auto& e : node.exprs) exprs.emplace_back(e, in.schema);
  for (size_t i = 0; i < in.rows.size(); ++i) {
    Row r;
    r.reserve(exprs.size());
    for (const auto& e : exprs) r.push_back(e.eval(in.rows[i]));
    out.push(std::move(r), in.versions[i]);
  }
  return out;
}

RowSet exec_join(const RowSet& left, const RowSet& right, const ExprPtr& condition, PhysOp algo) {
  RowSet out;
  out.schema = left.schema;
  out.schema.insert(out.schema.end(), right.schema.begin(), right.schema.end());
  CompiledExpr cond(condition, out.schema);
  auto emit = [&](size_t i, size_t j) {
    Row row = concat(left.rows[i], right.rows[j]);
    if (condition && !cond.test(row)) return;
    out.push(std::move(row), std::max(left.versions[i], right.versions[j]));
  };
  const EquiKeys keys = condition ? equi_keys(left.schema, right.schema, condition) : EquiKeys{};
  if (algo != PhysOp::NestedLoopJoin && keys.left.empty())
    fail(ErrorCode::InvalidArgument, std::string(to_string(algo)) + " needs an equi-join key");

  if (algo == PhysOp::HashJoin) {
    std::unordered_map<std::string, std::vector<size_t>> table;
    for (size_t j = 0; j < right.rows.size(); ++j) table[row_key(right.rows[j], keys.right)].push_back(j);
    for (size_t i = 0; i < left.rows.size(); ++i) {
      auto it = table.find(row_key(left.rows[i], keys.left));
      if (it == table.end()) continue;
      for (size_t j : it->second) emit(i, j);
    }
  } else if (algo == PhysOp::MergeJoin) {
    std::vector<size_t> li(left.rows.size()), ri(right.rows.size());
    for (size_t i = 0; i < li.size(); ++i) li[i] = i;
    for (size_t j = 0; j < ri.size(); ++j) ri[j] = j;
    std::stable_sort(li.begin(), li.end(), [&](size_t a, size_t b) {
      return compare_keys(left.rows[a], keys.left, left.rows[b], keys.left) < 0;
    });
    std::stable_sort(ri.begin(), ri.end(), [&](size_t a, size_t b) {
      return compare_keys(right.rows[a], keys.right, right.rows[b], keys.right) < 0;
    });
    size_t a = 0, b = 0;
    while (a < li.size() && b < ri.size()) {
      const int c = compare_keys(left.rows[li[a]], keys.left, right.rows[ri[b]], keys.right);
      if (c < 0) {
        ++a;
      } else if (c > 0) {
        ++b;
      } else {
        size_t b_end = b;
        while (b_end < ri.size() && compare_keys(left.rows[li[a]], keys.left, right.rows[ri[b_end]], keys.right) == 0)
          ++b_end;
        size_t a_end = a;
        while (a_end < li.size() && compare_keys(left.rows[li[a_end]], keys.left, right.rows[ri[b]], keys.right) == 0)
          ++a_end;
        for (size_t x = a; x < a_end; ++x)
          for (size_t y = b; y < b_end; ++y) emit(li[x], ri[y]);
        a = a_end;
        b = b_end;
      }
    }
  } else {
    for (size_t i = 0; i < left.rows.size(); ++i)
      for (size_t j = 0; j < right.rows.size(); ++j) emit(i, j);
  }
  return out;
}

namespace {
struct AggState {
  int64_t count = 0;
  bool any = false;
  bool all_int = true;
  int64_t isum = 0;
  double dsum = 0;
  Value best;
};

Value finish(const Expr& call, const AggState& s) {
  if (call.name == "COUNT") return s.count;
  if (!s.any) return Value{};
  if (call.name == "SUM") return s.all_int ? Value{s.isum} : Value{s.dsum};
  if (call.name == "AVG") return s.dsum / static_cast<double>(s.count);
  return s.best;
}
}  // namespace

RowSet exec_aggregate(const RowSet& in, const LogicalNode& node) {
  RowSet out;
  out.schema = node.schema;
  std::vector<CompiledExpr> keys;
  for (const auto& k : node.exprs) keys.emplace_back(k, in.schema);
  std::vector<CompiledExpr> args;
  std::vector<bool> star;
  for (const auto& a : node.aggregates) {
    const bool s = a->args.empty() || a->args[0]->kind == Expr::Kind::Star;
    star.push_back(s);
    args.emplace_back(s ? nullptr : a->args[0], in.schema);
  }

  struct Group {
    Row key;
    std::vector<AggState> states;
    uint64_t version = 0;
  };
  std::vector<Group> groups;
  std::unordered_map<std::string, size_t> index;
  for (size_t r = 0; r < in.rows.size(); ++r) {
    Row key;
    std::string ks;
    for (const auto& k : keys) {
      key.push_back(k.eval(in.rows[r]));
      ks += key_part(key.back());
    }
    auto [it, fresh] = index.emplace(ks, groups.size());
    if (fresh) groups.push_back({std::move(key), std::vector<AggState>(node.aggregates.size()), 0});
    Group& g = groups[it->second];
    g.version = std::max(g.version, in.versions[r]);
    for (size_t a = 0; a < node.aggregates.size(); ++a) {
      AggState& s = g.states[a];
      if (star[a]) {
        ++s.count;
        continue;
      }
      const Value v = args[a].eval(in.rows[r]);
      if (is_null(v)) continue;
      ++s.count;
      if (!s.any) {
        s.any = true;
        s.best = v;
      } else {
        const int c = compare_values(v, s.best);
        if ((node.aggregates[a]->name == "MIN" && c < 0) || (node.aggregates[a]->name == "MAX" && c > 0)) s.best = v;
      }
      if (is_numeric(v)) {
        if (!std::holds_alternative<int64_t>(v)) s.all_int = false;
        if (auto* i = std::get_if<int64_t>(&v)) s.isum += *i;
        s.dsum += as_double(v);
      }
    }
  }
  if (groups.empty() && node.exprs.empty()) groups.push_back({{}, std::vector<AggState>(node.aggregates.size()), 0});
  for (const auto& g : groups) {
    Row row = g.key;
    for (size_t a = 0; a < node.aggregates.size(); ++a) row.push_back(finish(*node.aggregates[a], g.states[a]));
    out.push(std::move(row), g.version);
  }
  return out;
}

RowSet exec_sort(const RowSet& in, const std::vector<SortKey>& keys) {
  std::vector<CompiledExpr> exprs;
  for (const auto& k : keys) exprs.emplace_back(k.expr, in.schema);
  std::vector<std::vector<Value>> vals(in.rows.size());
  for (size_t i = 0; i < in.rows.size(); ++i)
    for (const auto& e : exprs) vals[i].push_back(e.eval(in.rows[i]));
  std::vector<size_t> order(in.rows.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    for (size_t k = 0; k < keys.size(); ++k) {
      int c = compare_values(vals[a][k], vals[b][k]);
      if (c != 0) return keys[k].desc ? c > 0 : c < 0;
    }
    return false;
  });
  RowSet out;
  out.schema = in.schema;
  for (size_t i : order) out.push(in.rows[i], in.versions[i]);
  return out;
}

RowSet exec_limit(const RowSet& in, int64_t limit) {
  RowSet out;
  out.schema = in.schema;
  const size_t n = std::min(in.rows.size(), static_cast<size_t>(std::max<int64_t>(0, limit)));
  for (size_t i = 0; i < n; ++i) out.push(in.rows[i], in.versions[i]);
  return out;
}

}  // namespace neurq
