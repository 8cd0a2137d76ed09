#include "neurq/common/expr.hpp"

#include <algorithm>
#include <cmath>

#include "neurq/common/error.hpp"

namespace neurq {

ExprPtr make_literal(Value v) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Literal;
  e->literal = std::move(v);
  return e;
}

ExprPtr make_column(std::string qualifier, std::string name) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Column;
  e->qualifier = std::move(qualifier);
  e->name = std::move(name);
  return e;
}

ExprPtr make_unary(UnaryOp op, ExprPtr operand) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Unary;
  e->unary_op = op;
  e->args = {std::move(operand)};
  return e;
}

ExprPtr make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Binary;
  e->binary_op = op;
  e->args = {std::move(lhs), std::move(rhs)};
  return e;
}

ExprPtr make_between(ExprPtr value, ExprPtr lo, ExprPtr hi) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Between;
  e->args = {std::move(value), std::move(lo), std::move(hi)};
  return e;
}

ExprPtr make_call(std::string fn, std::vector<ExprPtr> args) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Call;
  e->name = std::move(fn);
  e->args = std::move(args);
  return e;
}

ExprPtr make_star() {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Star;
  return e;
}

bool is_comparison(BinaryOp op) {
  switch (op) {
    case BinaryOp::Eq:
    case BinaryOp::Ne:
    case BinaryOp::Lt:
    case BinaryOp::Le:
    case BinaryOp::Gt:
    case BinaryOp::Ge: return true;
    default: return false;
  }
}

bool is_aggregate_call(const Expr& e) {
  if (e.kind != Expr::Kind::Call) return false;
  return e.name == "COUNT" || e.name == "SUM" || e.name == "AVG" || e.name == "MIN" || e.name == "MAX";
}

bool contains_aggregate(const ExprPtr& e) {
  if (!e) return false;
  if (is_aggregate_call(*e)) return true;
  return std::any_of(e->args.begin(), e->args.end(), [](const ExprPtr& a) { return contains_aggregate(a); });
}

const char* binary_op_sql(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Eq: return "=";
    case BinaryOp::Ne: return "<>";
    case BinaryOp::Lt: return "<";
    case BinaryOp::Le: return "<=";
    case BinaryOp::Gt: return ">";
    case BinaryOp::Ge: return ">=";
    case BinaryOp::And: return "AND";
    case BinaryOp::Or: return "OR";
  }
  return "?";
}

std::string to_sql(const ExprPtr& e) {
  if (!e) return "";
  switch (e->kind) {
    case Expr::Kind::Literal: return value_to_sql(e->literal);
    case Expr::Kind::Column: return e->qualifier.empty() ? e->name : e->qualifier + "." + e->name;
    case Expr::Kind::Star: return "*";
    case Expr::Kind::Unary:
      if (e->unary_op == UnaryOp::Not) return "(NOT " + to_sql(e->args[0]) + ")";
      return "(-" + to_sql(e->args[0]) + ")";
    case Expr::Kind::Binary:
      return "(" + to_sql(e->args[0]) + " " + binary_op_sql(e->binary_op) + " " + to_sql(e->args[1]) + ")";
    case Expr::Kind::Between:
      return "(" + to_sql(e->args[0]) + " BETWEEN " + to_sql(e->args[1]) + " AND " + to_sql(e->args[2]) + ")";
    case Expr::Kind::Call: {
      std::string out = e->name + "(";
      for (size_t i = 0; i < e->args.size(); ++i) out += (i ? ", " : "") + to_sql(e->args[i]);
      return out + ")";
    }
  }
  return "";
}

bool expr_equal(const ExprPtr& a, const ExprPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->kind != b->kind || a->args.size() != b->args.size()) return false;
  switch (a->kind) {
    case Expr::Kind::Literal:
      if (a->literal.index() != b->literal.index() || !values_equal(a->literal, b->literal)) return false;
      break;
    case Expr::Kind::Column:
      if (a->qualifier != b->qualifier || a->name != b->name) return false;
      break;
    case Expr::Kind::Unary:
      if (a->unary_op != b->unary_op) return false;
      break;
    case Expr::Kind::Binary:
      if (a->binary_op != b->binary_op) return false;
      break;
    case Expr::Kind::Call:
      if (a->name != b->name) return false;
      break;
    default: break;
  }
  for (size_t i = 0; i < a->args.size(); ++i)
    if (!expr_equal(a->args[i], b->args[i])) return false;
  return true;
}

namespace {

void flatten(const ExprPtr& e, BinaryOp op, std::vector<ExprPtr>& out) {
  if (e->kind == Expr::Kind::Binary && e->binary_op == op) {
    flatten(e->args[0], op, out);
    flatten(e->args[1], op, out);
  } else {
    out.push_back(e);
  }
}

BinaryOp mirror(BinaryOp op) {
  switch (op) {
    case BinaryOp::Lt: return BinaryOp::Gt;
    case BinaryOp::Gt: return BinaryOp::Lt;
    case BinaryOp::Le: return BinaryOp::Ge;
    case BinaryOp::Ge: return BinaryOp::Le;
    default: return op;
  }
}

}  // namespace

std::string canonical_text(const ExprPtr& e) {
  if (!e) return "";
  if (e->kind == Expr::Kind::Binary) {
    const BinaryOp op = e->binary_op;
    if (op == BinaryOp::And || op == BinaryOp::Or || op == BinaryOp::Add || op == BinaryOp::Mul) {
      std::vector<ExprPtr> terms;
      flatten(e, op, terms);
      std::vector<std::string> texts;
      for (const auto& t : terms) texts.push_back(canonical_text(t));
      std::sort(texts.begin(), texts.end());
      std::string out = "(";
      for (size_t i = 0; i < texts.size(); ++i) out += (i ? std::string(" ") + binary_op_sql(op) + " " : "") + texts[i];
      return out + ")";
    }
    if (is_comparison(op)) {
      std::string l = canonical_text(e->args[0]);
      std::string r = canonical_text(e->args[1]);
      BinaryOp cop = op;
      if (r < l) {
        std::swap(l, r);
        cop = mirror(op);
      }
      return "(" + l + " " + binary_op_sql(cop) + " " + r + ")";
    }
    return "(" + canonical_text(e->args[0]) + " " + binary_op_sql(op) + " " + canonical_text(e->args[1]) + ")";
  }
  if (e->kind == Expr::Kind::Unary) {
    return std::string(e->unary_op == UnaryOp::Not ? "(NOT " : "(-") + canonical_text(e->args[0]) + ")";
  }
  if (e->kind == Expr::Kind::Between) {
    return "(" + canonical_text(e->args[0]) + " BETWEEN " + canonical_text(e->args[1]) + " AND " +
           canonical_text(e->args[2]) + ")";
  }
  if (e->kind == Expr::Kind::Call) {
    std::string out = e->name + "(";
    for (size_t i = 0; i < e->args.size(); ++i) out += (i ? ", " : "") + canonical_text(e->args[i]);
    return out + ")";
  }
  if (e->kind == Expr::Kind::Literal) {
    // Type-tag literals so 1 and 1.0 stay distinct.
    return std::string(to_string(type_of(e->literal).value_or(ColumnType::Int64))) + ":" + value_to_sql(e->literal);
  }
  return to_sql(e);
}

std::set<ColumnKey> referenced_columns(const ExprPtr& e) {
  std::set<ColumnKey> out;
  std::function<void(const ExprPtr&)> walk = [&](const ExprPtr& x) {
    if (!x) return;
    if (x->kind == Expr::Kind::Column) out.insert({x->qualifier, x->name});
    for (const auto& a : x->args) walk(a);
  };
  walk(e);
  return out;
}

std::vector<ExprPtr> split_conjuncts(const ExprPtr& e) {
  std::vector<ExprPtr> out;
  if (e) flatten(e, BinaryOp::And, out);
  return out;
}

ExprPtr conjoin(const std::vector<ExprPtr>& terms) {
  ExprPtr out;
  for (const auto& t : terms) out = out ? make_binary(BinaryOp::And, out, t) : t;
  return out;
}

ExprPtr substitute_columns(const ExprPtr& e, const std::function<ExprPtr(const Expr&)>& fn) {
  if (!e) return e;
  if (e->kind == Expr::Kind::Column) {
    auto r = fn(*e);
    return r ? r : e;
  }
  if (e->args.empty()) return e;
  bool changed = false;
  std::vector<ExprPtr> args;
  args.reserve(e->args.size());
  for (const auto& a : e->args) {
    args.push_back(substitute_columns(a, fn));
    changed |= args.back() != a;
  }
  if (!changed) return e;
  auto copy = std::make_shared<Expr>(*e);
  copy->args = std::move(args);
  return copy;
}

bool truthy(const Value& v) {
  if (auto* b = std::get_if<bool>(&v)) return *b;
  if (is_null(v)) return false;
  if (is_numeric(v)) return as_double(v) != 0.0;
  return false;
}

Value apply_binary(BinaryOp op, const Value& a, const Value& b) {
  if (op == BinaryOp::And) return truthy(a) && truthy(b);
  if (op == BinaryOp::Or) return truthy(a) || truthy(b);
  if (is_null(a) || is_null(b)) return Null{};
  if (is_comparison(op)) {
    int c = compare_values(a, b);
    switch (op) {
      case BinaryOp::Eq: return c == 0;
      case BinaryOp::Ne: return c != 0;
      case BinaryOp::Lt: return c < 0;
      case BinaryOp::Le: return c <= 0;
      case BinaryOp::Gt: return c > 0;
      case BinaryOp::Ge: return c >= 0;
      default: break;
    }
  }
  if (!is_numeric(a) || !is_numeric(b)) fail(ErrorCode::TypeMismatch, "arithmetic on non-numeric values");
  const bool ints = std::holds_alternative<int64_t>(a) && std::holds_alternative<int64_t>(b);
  if (ints && op != BinaryOp::Div) {
    int64_t x = std::get<int64_t>(a), y = std::get<int64_t>(b);
    switch (op) {
      case BinaryOp::Add: return x + y;
      case BinaryOp::Sub: return x - y;
      case BinaryOp::Mul: return x * y;
      default: break;
    }
  }
  double x = as_double(a), y = as_double(b);
  switch (op) {
    case BinaryOp::Add: return x + y;
    case BinaryOp::Sub: return x - y;
    case BinaryOp::Mul: return x * y;
    case BinaryOp::Div:
      if (y == 0.0) return Null{};
      return x / y;
    default: break;
  }
  return Null{};
}

namespace {
bool is_bool_literal(const ExprPtr& e, bool value) {
  return e->kind == Expr::Kind::Literal && std::holds_alternative<bool>(e->literal) &&
         std::get<bool>(e->literal) == value;
}
}  // namespace

ExprPtr fold_constants(const ExprPtr& e) {
  if (!e || e->args.empty()) return e;
  std::vector<ExprPtr> args;
  bool changed = false;
  for (const auto& a : e->args) {
    args.push_back(fold_constants(a));
    changed |= args.back() != a;
  }
  const bool all_literal =
      std::all_of(args.begin(), args.end(), [](const ExprPtr& a) { return a->kind == Expr::Kind::Literal; });
  if (e->kind == Expr::Kind::Binary) {
    if (e->binary_op == BinaryOp::And) {
      if (is_bool_literal(args[0], false) || is_bool_literal(args[1], false)) return make_literal(false);
      if (is_bool_literal(args[0], true)) return args[1];
      if (is_bool_literal(args[1], true)) return args[0];
    } else if (e->binary_op == BinaryOp::Or) {
      if (is_bool_literal(args[0], true) || is_bool_literal(args[1], true)) return make_literal(true);
      if (is_bool_literal(args[0], false)) return args[1];
      if (is_bool_literal(args[1], false)) return args[0];
    }
    if (all_literal) {
      try {
        Value v = apply_binary(e->binary_op, args[0]->literal, args[1]->literal);
        if (!is_null(v)) return make_literal(std::move(v));
      } catch (const Error&) {
      }
    }
  } else if (e->kind == Expr::Kind::Unary && all_literal) {
    const Value& v = args[0]->literal;
    if (e->unary_op == UnaryOp::Not && std::holds_alternative<bool>(v)) return make_literal(!std::get<bool>(v));
    if (e->unary_op == UnaryOp::Neg) {
      if (auto* i = std::get_if<int64_t>(&v)) return make_literal(-*i);
      if (auto* d = std::get_if<double>(&v)) return make_literal(-*d);
    }
  } else if (e->kind == Expr::Kind::Between && all_literal) {
    const Value &v = args[0]->literal, &lo = args[1]->literal, &hi = args[2]->literal;
    if (!is_null(v) && !is_null(lo) && !is_null(hi) && !std::holds_alternative<Vector>(v))
      return make_literal(compare_values(v, lo) >= 0 && compare_values(v, hi) <= 0);
  }
  if (!changed) return e;
  auto copy = std::make_shared<Expr>(*e);
  copy->args = std::move(args);
  return copy;
}

bool resolves_in(const ExprPtr& e, const Schema& schema) {
  for (const auto& c : referenced_columns(e))
    if (find_column(schema, c.qualifier, c.name) < 0) return false;
  return true;
}

namespace {
bool numeric_type(ColumnType t) { return t == ColumnType::Int64 || t == ColumnType::Float64 || t == ColumnType::Bool; }

bool comparable(ColumnType a, ColumnType b) {
  if (numeric_type(a) && numeric_type(b)) return true;
  return a == b;
}
}  // namespace

ColumnType infer_type(const ExprPtr& e, const Schema& schema) {
  switch (e->kind) {
    case Expr::Kind::Literal: return type_of(e->literal).value_or(ColumnType::Int64);
    case Expr::Kind::Star: return ColumnType::Int64;
    case Expr::Kind::Column: {
      int idx = find_column(schema, e->qualifier, e->name);
      if (idx == -2) fail(ErrorCode::AmbiguousColumn, "ambiguous column " + to_sql(e));
      if (idx < 0) fail(ErrorCode::UnknownColumn, "unknown column " + to_sql(e));
      return schema[idx].type;
    }
    case Expr::Kind::Unary: {
      ColumnType t = infer_type(e->args[0], schema);
      if (e->unary_op == UnaryOp::Not) {
        if (t != ColumnType::Bool) fail(ErrorCode::TypeMismatch, "NOT applied to " + std::string(to_string(t)));
        return ColumnType::Bool;
      }
      if (!numeric_type(t)) fail(ErrorCode::TypeMismatch, "negation of " + std::string(to_string(t)));
      return t;
    }
    case Expr::Kind::Binary: {
      ColumnType l = infer_type(e->args[0], schema);
      ColumnType r = infer_type(e->args[1], schema);
      const BinaryOp op = e->binary_op;
      if (op == BinaryOp::And || op == BinaryOp::Or) {
        if (l != ColumnType::Bool || r != ColumnType::Bool)
          fail(ErrorCode::TypeMismatch, std::string(binary_op_sql(op)) + " needs boolean operands in " + to_sql(e));
        return ColumnType::Bool;
      }
      if (is_comparison(op)) {
        if (!comparable(l, r))
          fail(ErrorCode::TypeMismatch, "cannot compare " + std::string(to_string(l)) + " with " +
                                            std::string(to_string(r)) + " in " + to_sql(e));
        return ColumnType::Bool;
      }
      if (!numeric_type(l) || !numeric_type(r)) fail(ErrorCode::TypeMismatch, "arithmetic on non-numeric in " + to_sql(e));
      if (op == BinaryOp::Div || l == ColumnType::Float64 || r == ColumnType::Float64) return ColumnType::Float64;
      return ColumnType::Int64;
    }
    case Expr::Kind::Between: {
      ColumnType v = infer_type(e->args[0], schema);
      ColumnType lo = infer_type(e->args[1], schema);
      ColumnType hi = infer_type(e->args[2], schema);
      if (!comparable(v, lo) || !comparable(v, hi)) fail(ErrorCode::TypeMismatch, "BETWEEN bounds mismatch in " + to_sql(e));
      return ColumnType::Bool;
    }
    case Expr::Kind::Call: {
      if (e->name == "COUNT") return ColumnType::Int64;
      if (e->args.size() != 1) fail(ErrorCode::TypeMismatch, e->name + " takes one argument");
      ColumnType t = infer_type(e->args[0], schema);
      if (e->name == "AVG") {
        if (!numeric_type(t)) fail(ErrorCode::TypeMismatch, "AVG of non-numeric");
        return ColumnType::Float64;
      }
      if (e->name == "SUM") {
        if (!numeric_type(t)) fail(ErrorCode::TypeMismatch, "SUM of non-numeric");
        return t == ColumnType::Float64 ? ColumnType::Float64 : ColumnType::Int64;
      }
      if (e->name == "MIN" || e->name == "MAX") return t;
      fail(ErrorCode::TypeMismatch, "unknown function " + e->name);
    }
  }
  return ColumnType::Int64;
}

CompiledExpr::Node CompiledExpr::build(const Expr& e, const Schema& schema) {
  Node n;
  n.kind = e.kind;
  n.binary_op = e.binary_op;
  n.unary_op = e.unary_op;
  if (e.kind == Expr::Kind::Literal) n.literal = e.literal;
  if (e.kind == Expr::Kind::Column) {
    n.ordinal = find_column(schema, e.qualifier, e.name);
    if (n.ordinal == -2) fail(ErrorCode::AmbiguousColumn, "ambiguous column " + e.qualifier + "." + e.name);
    if (n.ordinal < 0) fail(ErrorCode::UnknownColumn, "unknown column " + (e.qualifier.empty() ? e.name : e.qualifier + "." + e.name));
  }
  if (e.kind == Expr::Kind::Call) fail(ErrorCode::InvalidArgument, "aggregate " + e.name + " outside Aggregate");
  for (const auto& a : e.args) n.args.push_back(build(*a, schema));
  return n;
}

CompiledExpr::CompiledExpr(const ExprPtr& e, const Schema& schema)
    : root_(e ? std::make_shared<const Node>(build(*e, schema)) : nullptr) {}

Value CompiledExpr::eval_node(const Node& n, const Row& row) {
  switch (n.kind) {
    case Expr::Kind::Literal: return n.literal;
    case Expr::Kind::Column: return row[n.ordinal];
    case Expr::Kind::Unary: {
      Value v = eval_node(n.args[0], row);
      if (n.unary_op == UnaryOp::Not) return is_null(v) ? Value{Null{}} : Value{!truthy(v)};
      if (auto* i = std::get_if<int64_t>(&v)) return -*i;
      if (is_null(v)) return v;
      return -as_double(v);
    }
    case Expr::Kind::Binary: {
      if (n.binary_op == BinaryOp::And) {
        if (!truthy(eval_node(n.args[0], row))) return false;
        return truthy(eval_node(n.args[1], row));
      }
      if (n.binary_op == BinaryOp::Or) {
        if (truthy(eval_node(n.args[0], row))) return true;
        return truthy(eval_node(n.args[1], row));
      }
      return apply_binary(n.binary_op, eval_node(n.args[0], row), eval_node(n.args[1], row));
    }
    case Expr::Kind::Between: {
      Value v = eval_node(n.args[0], row);
      Value lo = eval_node(n.args[1], row);
      Value hi = eval_node(n.args[2], row);
      if (is_null(v) || is_null(lo) || is_null(hi)) return Null{};
      return compare_values(v, lo) >= 0 && compare_values(v, hi) <= 0;
    }
    default: break;
  }
  return Null{};
}

Value CompiledExpr::eval(const Row& row) const { return root_ ? eval_node(*root_, row) : Value{true}; }

bool CompiledExpr::test(const Row& row) const { return !root_ || truthy(eval_node(*root_, row)); }

}  // namespace neurq
