#pragma once

#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "neurq/common/types.hpp"

namespace neurq {

enum class BinaryOp { Add, Sub, Mul, Div, Eq, Ne, Lt, Le, Gt, Ge, And, Or };
enum class UnaryOp { Not, Neg };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

/// Scalar expression tree shared by the parser, the planner and the
/// executor. Column references are by (qualifier, name); they are resolved
/// against a Schema when compiled.
struct Expr {
  enum class Kind { Literal, Column, Unary, Binary, Between, Call, Star };

  Kind kind = Kind::Literal;
  Value literal;
  std::string qualifier;  // Column
  std::string name;       // Column name or Call function name (upper-case)
  BinaryOp binary_op = BinaryOp::Add;
  UnaryOp unary_op = UnaryOp::Not;
  std::vector<ExprPtr> args;  // Unary: 1, Binary: 2, Between: 3 (value, lo, hi), Call: n
  int line = 0;
  int column = 0;
};

ExprPtr make_literal(Value v);
ExprPtr make_column(std::string qualifier, std::string name);
ExprPtr make_unary(UnaryOp op, ExprPtr operand);
ExprPtr make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs);
ExprPtr make_between(ExprPtr value, ExprPtr lo, ExprPtr hi);
ExprPtr make_call(std::string fn, std::vector<ExprPtr> args);
ExprPtr make_star();

bool is_comparison(BinaryOp op);
bool is_aggregate_call(const Expr& e);
bool contains_aggregate(const ExprPtr& e);
const char* binary_op_sql(BinaryOp op);

/// SQL text. Fully parenthesizes nested binaries so the text round-trips.
std::string to_sql(const ExprPtr& e);

/// Structural equality.
bool expr_equal(const ExprPtr& a, const ExprPtr& b);

/// Canonical text: conjunct lists are sorted, commutative comparisons put
/// the lexicographically smaller operand first. Equal canonical text means
/// equivalent predicates.
std::string canonical_text(const ExprPtr& e);

struct ColumnKey {
  std::string qualifier;
  std::string name;
  auto operator<=>(const ColumnKey&) const = default;
  std::string qualified() const { return qualifier.empty() ? name : qualifier + "." + name; }
};

std::set<ColumnKey> referenced_columns(const ExprPtr& e);

std::vector<ExprPtr> split_conjuncts(const ExprPtr& e);
/// AND-combines terms; returns nullptr for an empty list.
ExprPtr conjoin(const std::vector<ExprPtr>& terms);

/// Replaces column references via `fn`; references for which `fn` returns
/// nullptr are kept.
ExprPtr substitute_columns(const ExprPtr& e, const std::function<ExprPtr(const Expr&)>& fn);

/// Folds literal-only subtrees and boolean identities (x AND TRUE, ...).
ExprPtr fold_constants(const ExprPtr& e);

/// True when every column `e` references resolves in `schema`.
bool resolves_in(const ExprPtr& e, const Schema& schema);

/// Static result type against `schema`. Throws TypeMismatch for
/// ill-typed comparisons/arithmetic and UnknownColumn for unresolved refs.
ColumnType infer_type(const ExprPtr& e, const Schema& schema);

/// An expression with column references resolved to input ordinals.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  CompiledExpr(const ExprPtr& e, const Schema& schema);

  Value eval(const Row& row) const;
  bool test(const Row& row) const;
  bool valid() const { return root_ != nullptr; }

 private:
  struct Node {
    Expr::Kind kind;
    Value literal;
    int ordinal = -1;
    BinaryOp binary_op;
    UnaryOp unary_op;
    std::vector<Node> args;
  };
  static Node build(const Expr& e, const Schema& schema);
  static Value eval_node(const Node& n, const Row& row);
  std::shared_ptr<const Node> root_;
};

Value apply_binary(BinaryOp op, const Value& a, const Value& b);
bool truthy(const Value& v);

}  // namespace neurq
