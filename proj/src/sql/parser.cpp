#include "neurq/sql/parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

#include "neurq/common/error.hpp"

namespace neurq::sql {

namespace {

const std::set<std::string, std::less<>> kReserved = {
    "SELECT", "FROM",  "WHERE", "GROUP", "BY",   "ORDER", "LIMIT",   "WITH",  "AS",    "JOIN",
    "ON",     "CROSS", "INNER", "AND",   "OR",   "NOT",   "BETWEEN", "PREDICT", "TRAIN", "USING",
    "ASC",    "DESC",  "TRUE",  "FALSE", "NULL", "CREATE", "DROP"};

// Contextual words: keywords only where the grammar expects them.
const std::set<std::string, std::less<>> kContextual = {"VALUE", "OF",       "PRIMARY", "KEY",    "MODEL",
                                                        "KIND",  "FEATURES", "TARGET",  "TABLE"};

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

bool is_reserved(std::string_view u) { return kReserved.count(u) > 0; }

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  int line = 1, col = 1;
  int last_line = 1, last_col = 1;
  size_t i = 0;
  auto advance = [&](size_t n) {
    for (size_t k = 0; k < n && i < text.size(); ++k, ++i) {
      last_line = line;
      last_col = col;
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    if (c == '-' && i + 1 < text.size() && text[i + 1] == '-') {
      while (i < text.size() && text[i] != '\n') advance(1);
      continue;
    }
    Token t;
    t.line = line;
    t.column = col;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t j = i;
      while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_')) ++j;
      std::string word(text.substr(i, j - i));
      std::string u = upper(word);
      if (kReserved.count(u) || kContextual.count(u)) {
        t.kind = kReserved.count(u) ? TokenKind::Keyword : TokenKind::Identifier;
        t.text = kReserved.count(u) ? u : word;
      } else {
        t.kind = TokenKind::Identifier;
        t.text = word;
      }
      advance(j - i);
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '.' && i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
      size_t j = i;
      bool is_float = false;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      if (j < text.size() && text[j] == '.') {
        is_float = true;
        ++j;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      }
      if (j < text.size() && (text[j] == 'e' || text[j] == 'E')) {
        size_t k = j + 1;
        if (k < text.size() && (text[k] == '+' || text[k] == '-')) ++k;
        if (k < text.size() && std::isdigit(static_cast<unsigned char>(text[k]))) {
          is_float = true;
          j = k;
          while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        }
      }
      t.kind = is_float ? TokenKind::Float : TokenKind::Integer;
      t.text = std::string(text.substr(i, j - i));
      advance(j - i);
    } else if (c == '\'') {
      std::string s;
      size_t j = i + 1;
      bool closed = false;
      while (j < text.size()) {
        if (text[j] == '\'') {
          if (j + 1 < text.size() && text[j + 1] == '\'') {
            s += '\'';
            j += 2;
            continue;
          }
          closed = true;
          break;
        }
        s += text[j++];
      }
      if (!closed) throw SyntaxError(t.line, t.column, "unterminated string literal", {"'"});
      t.kind = TokenKind::String;
      t.text = std::move(s);
      advance(j + 1 - i);
    } else {
      static const char* two[] = {"<=", ">=", "<>", "!="};
      std::string sym;
      for (const char* s : two)
        if (text.substr(i, 2) == s) sym = s;
      if (sym.empty()) {
        if (std::string_view("(),.;*+-/=<>").find(c) == std::string_view::npos)
          throw SyntaxError(t.line, t.column, std::string("unexpected character '") + c + "'");
        sym = std::string(1, c);
      }
      t.kind = TokenKind::Symbol;
      t.text = sym;
      advance(sym.size());
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.kind = TokenKind::End;
  // End-of-input errors point at the last character of the text.
  end.line = last_line;
  end.column = last_col;
  out.push_back(end);
  return out;
}

namespace {

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  Statement statement() {
    Statement s;
    if (peek_kw("CREATE")) {
      next();
      if (peek_word("MODEL")) {
        next();
        s.kind = Statement::Kind::CreateModel;
        s.create_model = create_model();
      } else if (peek_word("TABLE")) {
        next();
        s.kind = Statement::Kind::CreateTable;
        s.create_table = create_table();
      } else {
        error("expected MODEL or TABLE after CREATE", {"MODEL", "TABLE"});
      }
    } else if (peek_kw("DROP")) {
      next();
      expect_word("MODEL");
      s.kind = Statement::Kind::DropModel;
      s.drop_model = identifier("model name");
    } else if (peek_kw("SELECT") || peek_kw("WITH")) {
      s.select = std::make_shared<SelectStmt>(select(true));
      s.kind = contains_predict(*s.select) ? Statement::Kind::PredictSelect : Statement::Kind::Select;
    } else {
      error("expected a statement", {"SELECT", "WITH", "CREATE", "DROP"});
    }
    return s;
  }

  bool at_end() const { return cur().kind == TokenKind::End; }
  bool accept_semicolon() { return accept_sym(";"); }
  void expect_end() {
    if (!at_end()) error("unexpected '" + cur().text + "' after end of statement", {";", "end of input"});
  }

 private:
  const Token& cur() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  [[noreturn]] void error(const std::string& msg, std::vector<std::string> expected = {}) const {
    throw SyntaxError(cur().line, cur().column, msg, std::move(expected));
  }

  bool peek_kw(std::string_view kw) const { return cur().kind == TokenKind::Keyword && cur().text == kw; }
  bool peek_word(std::string_view w) const {
    return (cur().kind == TokenKind::Identifier || cur().kind == TokenKind::Keyword) && upper(cur().text) == w;
  }
  bool peek_sym(std::string_view s) const { return cur().kind == TokenKind::Symbol && cur().text == s; }
  bool accept_kw(std::string_view kw) {
    if (!peek_kw(kw)) return false;
    next();
    return true;
  }
  bool accept_word(std::string_view w) {
    if (!peek_word(w)) return false;
    next();
    return true;
  }
  bool accept_sym(std::string_view s) {
    if (!peek_sym(s)) return false;
    next();
    return true;
  }
  void expect_kw(std::string_view kw) {
    if (!accept_kw(kw)) error("expected " + std::string(kw), {std::string(kw)});
  }
  void expect_word(std::string_view w) {
    if (!accept_word(w)) error("expected " + std::string(w), {std::string(w)});
  }
  void expect_sym(std::string_view s) {
    if (!accept_sym(s)) error("expected '" + std::string(s) + "'", {std::string(s)});
  }
  std::string identifier(const std::string& what) {
    if (cur().kind != TokenKind::Identifier) error("expected " + what, {what});
    return next().text;
  }

  SelectStmt select(bool allow_with) {
    SelectStmt s;
    if (allow_with && accept_kw("WITH")) {
      do {
        CteDef cte;
        cte.name = identifier("CTE name");
        expect_kw("AS");
        expect_sym("(");
        cte.query = std::make_shared<SelectStmt>(select(false));
        expect_sym(")");
        s.ctes.push_back(std::move(cte));
      } while (accept_sym(","));
    }
    expect_kw("SELECT");
    do {
      SelectItem item;
      if (peek_sym("*")) {
        const Token& t = next();
        auto star = std::make_shared<Expr>(*make_star());
        star->line = t.line;
        star->column = t.column;
        item.expr = star;
      } else {
        item.expr = expr();
      }
      if (accept_kw("AS"))
        item.alias = identifier("column alias");
      else if (cur().kind == TokenKind::Identifier)
        item.alias = next().text;
      s.items.push_back(std::move(item));
    } while (accept_sym(","));
    if (accept_kw("FROM")) s.from = from_clause();
    if (accept_kw("WHERE")) s.where = expr();
    if (accept_kw("GROUP")) {
      expect_kw("BY");
      do s.group_by.push_back(expr());
      while (accept_sym(","));
    }
    if (accept_kw("ORDER")) {
      expect_kw("BY");
      do {
        OrderItem o;
        o.expr = expr();
        if (accept_kw("DESC"))
          o.desc = true;
        else
          accept_kw("ASC");
        s.order_by.push_back(std::move(o));
      } while (accept_sym(","));
    }
    if (accept_kw("LIMIT")) {
      if (cur().kind != TokenKind::Integer) error("expected an integer LIMIT", {"integer"});
      s.limit = std::stoll(next().text);
    }
    return s;
  }

  FromClause from_clause() {
    FromClause f;
    f.first = table_ref();
    for (;;) {
      JoinClause j;
      if (accept_sym(",")) {
        j.kind = JoinClause::Kind::Cross;
        j.right = table_ref();
      } else if (accept_kw("CROSS")) {
        expect_kw("JOIN");
        j.kind = JoinClause::Kind::Cross;
        j.right = table_ref();
      } else if (peek_kw("JOIN") || peek_kw("INNER")) {
        if (accept_kw("INNER")) {
          expect_kw("JOIN");
        } else {
          next();
        }
        j.kind = JoinClause::Kind::Inner;
        j.right = table_ref();
        if (!accept_kw("ON")) error("JOIN requires an ON condition", {"ON"});
        j.on = expr();
      } else {
        break;
      }
      f.joins.push_back(std::move(j));
    }
    return f;
  }

  TableRef table_ref() {
    TableRef t;
    t.line = cur().line;
    t.column = cur().column;
    if (accept_sym("(")) {
      if (peek_kw("PREDICT")) {
        t.kind = TableRef::Kind::Predict;
        t.predict = std::make_shared<PredictBlock>(predict_block());
      } else {
        t.kind = TableRef::Kind::Subquery;
        t.subquery = std::make_shared<SelectStmt>(select(false));
      }
      expect_sym(")");
      accept_kw("AS");
      t.alias = identifier("alias for derived table");
      return t;
    }
    t.kind = TableRef::Kind::Base;
    t.table = identifier("table name");
    if (accept_kw("AS"))
      t.alias = identifier("table alias");
    else if (cur().kind == TokenKind::Identifier)
      t.alias = next().text;
    return t;
  }

  ExprPtr column_ref(const std::string& what) {
    const Token start = cur();
    if (cur().kind != TokenKind::Identifier) error("expected " + what, {what});
    std::string a = next().text;
    std::string qual, name = a;
    if (accept_sym(".")) {
      qual = a;
      name = identifier("column name");
    }
    return positioned(make_column(qual, name), start);
  }

  PredictBlock predict_block() {
    PredictBlock p;
    expect_kw("PREDICT");
    expect_word("VALUE");
    expect_word("OF");
    p.target = column_ref("target column");
    if (!peek_kw("WITH")) error("PREDICT block is missing WITH PRIMARY KEY", {"WITH PRIMARY KEY"});
    next();
    expect_word("PRIMARY");
    expect_word("KEY");
    p.primary_key = column_ref("primary key column");
    if (!accept_kw("FROM")) error("PREDICT block is missing FROM", {"FROM"});
    p.from = from_clause();
    if (accept_kw("WHERE")) p.where = expr();
    if (accept_kw("TRAIN")) {
      expect_kw("ON");
      do p.train_on.push_back(column_ref("feature column"));
      while (accept_sym(","));
    } else if (accept_kw("USING")) {
      expect_word("MODEL");
      p.model = identifier("model name");
    } else {
      error("PREDICT block needs TRAIN ON or USING MODEL", {"TRAIN ON", "USING MODEL"});
    }
    return p;
  }

  CreateModelStmt create_model() {
    CreateModelStmt c;
    c.name = identifier("model name");
    expect_word("KIND");
    c.kind = identifier("model kind");
    expect_kw("ON");
    c.table = identifier("table name");
    expect_word("FEATURES");
    expect_sym("(");
    do c.features.push_back(identifier("feature column"));
    while (accept_sym(","));
    expect_sym(")");
    if (accept_word("TARGET")) c.target = identifier("target column");
    return c;
  }

  CreateTableStmt create_table() {
    CreateTableStmt c;
    c.def.name = identifier("table name");
    expect_sym("(");
    do {
      ColumnDef col;
      col.name = identifier("column name");
      const Token& tt = cur();
      const std::string tname = identifier("column type");
      auto ty = parse_column_type(tname);
      if (!ty || *ty == ColumnType::Vector)
        throw SyntaxError(tt.line, tt.column, "unknown column type '" + tname + "'", {"int64", "float64", "text", "bool"});
      col.type = *ty;
      if (accept_word("PRIMARY")) {
        expect_word("KEY");
        if (!c.def.primary_key.empty()) error("only one PRIMARY KEY column is allowed");
        c.def.primary_key = col.name;
      }
      c.def.columns.push_back(col);
    } while (accept_sym(","));
    expect_sym(")");
    if (c.def.primary_key.empty()) error("CREATE TABLE needs a PRIMARY KEY column", {"PRIMARY KEY"});
    return c;
  }

  static ExprPtr positioned(ExprPtr e, const Token& t) {
    auto copy = std::make_shared<Expr>(*e);
    copy->line = t.line;
    copy->column = t.column;
    return copy;
  }

  ExprPtr expr() { return or_expr(); }

  ExprPtr or_expr() {
    ExprPtr l = and_expr();
    while (peek_kw("OR")) {
      const Token t = next();
      l = positioned(make_binary(BinaryOp::Or, l, and_expr()), t);
    }
    return l;
  }

  ExprPtr and_expr() {
    ExprPtr l = not_expr();
    while (peek_kw("AND")) {
      const Token t = next();
      l = positioned(make_binary(BinaryOp::And, l, not_expr()), t);
    }
    return l;
  }

  ExprPtr not_expr() {
    if (peek_kw("NOT")) {
      const Token t = next();
      return positioned(make_unary(UnaryOp::Not, not_expr()), t);
    }
    return comparison();
  }

  ExprPtr comparison() {
    ExprPtr l = additive();
    if (peek_kw("BETWEEN")) {
      const Token t = next();
      ExprPtr lo = additive();
      if (!accept_kw("AND")) error("BETWEEN requires AND", {"AND"});
      ExprPtr hi = additive();
      return positioned(make_between(l, lo, hi), t);
    }
    static const std::pair<const char*, BinaryOp> ops[] = {{"=", BinaryOp::Eq},  {"<>", BinaryOp::Ne},
                                                           {"!=", BinaryOp::Ne}, {"<=", BinaryOp::Le},
                                                           {">=", BinaryOp::Ge}, {"<", BinaryOp::Lt},
                                                           {">", BinaryOp::Gt}};
    for (const auto& [sym, op] : ops) {
      if (peek_sym(sym)) {
        const Token t = next();
        return positioned(make_binary(op, l, additive()), t);
      }
    }
    return l;
  }

  ExprPtr additive() {
    ExprPtr l = multiplicative();
    while (peek_sym("+") || peek_sym("-")) {
      const Token t = next();
      l = positioned(make_binary(t.text == "+" ? BinaryOp::Add : BinaryOp::Sub, l, multiplicative()), t);
    }
    return l;
  }

  ExprPtr multiplicative() {
    ExprPtr l = unary();
    while (peek_sym("*") || peek_sym("/")) {
      const Token t = next();
      l = positioned(make_binary(t.text == "*" ? BinaryOp::Mul : BinaryOp::Div, l, unary()), t);
    }
    return l;
  }

  ExprPtr unary() {
    if (peek_sym("-")) {
      const Token t = next();
      ExprPtr operand = unary();
      // Negative numeric literals are folded so they round-trip as literals.
      if (operand->kind == Expr::Kind::Literal) {
        if (const auto* i = std::get_if<int64_t>(&operand->literal)) return positioned(make_literal(-*i), t);
        if (const auto* d = std::get_if<double>(&operand->literal)) return positioned(make_literal(-*d), t);
      }
      return positioned(make_unary(UnaryOp::Neg, operand), t);
    }
    return primary();
  }

  ExprPtr primary() {
    const Token t = cur();
    switch (t.kind) {
      case TokenKind::Integer: {
        next();
        int64_t v = 0;
        auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        if (ec != std::errc()) return positioned(make_literal(std::stod(t.text)), t);
        return positioned(make_literal(v), t);
      }
      case TokenKind::Float: next(); return positioned(make_literal(std::stod(t.text)), t);
      case TokenKind::String: next(); return positioned(make_literal(t.text), t);
      case TokenKind::Keyword:
        if (t.text == "TRUE" || t.text == "FALSE") {
          next();
          return positioned(make_literal(t.text == "TRUE"), t);
        }
        if (t.text == "NULL") {
          next();
          return positioned(make_literal(Null{}), t);
        }
        break;
      case TokenKind::Symbol:
        if (t.text == "(") {
          next();
          ExprPtr e = expr();
          expect_sym(")");
          return e;
        }
        break;
      case TokenKind::Identifier: {
        next();
        if (accept_sym("(")) {
          std::vector<ExprPtr> args;
          const std::string fn = upper(t.text);
          if (peek_sym("*")) {
            next();
            args.push_back(make_star());
          } else if (!peek_sym(")")) {
            do args.push_back(expr());
            while (accept_sym(","));
          }
          expect_sym(")");
          return positioned(make_call(fn, std::move(args)), t);
        }
        std::string qual, name = t.text;
        if (accept_sym(".")) {
          qual = t.text;
          name = identifier("column name");
        }
        return positioned(make_column(qual, name), t);
      }
      default: break;
    }
    error(t.kind == TokenKind::End ? "unexpected end of input, expected an expression"
                                   : "unexpected '" + t.text + "', expected an expression",
          {"expression"});
  }

  std::vector<Token> toks_;
  size_t pos_ = 0;
};

}  // namespace

Statement parse(std::string_view text) {
  Parser p(tokenize(text));
  Statement s = p.statement();
  p.accept_semicolon();
  p.expect_end();
  return s;
}

std::vector<Statement> parse_script(std::string_view text) {
  Parser p(tokenize(text));
  std::vector<Statement> out;
  while (!p.at_end()) {
    if (p.accept_semicolon()) continue;
    out.push_back(p.statement());
    if (!p.at_end() && !p.accept_semicolon()) p.expect_end();
  }
  return out;
}

namespace {

std::string unparse_from(const FromClause& f);

std::string unparse_ref(const TableRef& t) {
  switch (t.kind) {
    case TableRef::Kind::Base: return t.alias.empty() ? t.table : t.table + " " + t.alias;
    case TableRef::Kind::Subquery: return "(" + unparse(*t.subquery) + ") " + t.alias;
    case TableRef::Kind::Predict: {
      const PredictBlock& p = *t.predict;
      std::string out = "(PREDICT VALUE OF " + to_sql(p.target) + " WITH PRIMARY KEY " + to_sql(p.primary_key) +
                        " FROM " + unparse_from(p.from);
      if (p.where) out += " WHERE " + to_sql(p.where);
      if (p.uses_model()) {
        out += " USING MODEL " + p.model;
      } else {
        out += " TRAIN ON ";
        for (size_t i = 0; i < p.train_on.size(); ++i) out += (i ? ", " : "") + to_sql(p.train_on[i]);
      }
      return out + ") " + t.alias;
    }
  }
  return {};
}

std::string unparse_from(const FromClause& f) {
  std::string out = unparse_ref(f.first);
  for (const auto& j : f.joins) {
    if (j.kind == JoinClause::Kind::Cross)
      out += " CROSS JOIN " + unparse_ref(j.right);
    else
      out += " JOIN " + unparse_ref(j.right) + " ON " + to_sql(j.on);
  }
  return out;
}

}  // namespace

std::string unparse(const SelectStmt& s) {
  std::string out;
  if (!s.ctes.empty()) {
    out += "WITH ";
    for (size_t i = 0; i < s.ctes.size(); ++i)
      out += (i ? ", " : "") + s.ctes[i].name + " AS (" + unparse(*s.ctes[i].query) + ")";
    out += " ";
  }
  out += "SELECT ";
  for (size_t i = 0; i < s.items.size(); ++i) {
    out += (i ? ", " : "") + to_sql(s.items[i].expr);
    if (!s.items[i].alias.empty()) out += " AS " + s.items[i].alias;
  }
  if (s.from) out += " FROM " + unparse_from(*s.from);
  if (s.where) out += " WHERE " + to_sql(s.where);
  if (!s.group_by.empty()) {
    out += " GROUP BY ";
    for (size_t i = 0; i < s.group_by.size(); ++i) out += (i ? ", " : "") + to_sql(s.group_by[i]);
  }
  if (!s.order_by.empty()) {
    out += " ORDER BY ";
    for (size_t i = 0; i < s.order_by.size(); ++i)
      out += (i ? ", " : "") + to_sql(s.order_by[i].expr) + (s.order_by[i].desc ? " DESC" : " ASC");
  }
  if (s.limit) out += " LIMIT " + std::to_string(*s.limit);
  return out;
}

std::string unparse(const Statement& stmt) {
  switch (stmt.kind) {
    case Statement::Kind::Select:
    case Statement::Kind::PredictSelect: return unparse(*stmt.select);
    case Statement::Kind::CreateModel: {
      const auto& c = stmt.create_model;
      std::string out = "CREATE MODEL " + c.name + " KIND " + c.kind + " ON " + c.table + " FEATURES (";
      for (size_t i = 0; i < c.features.size(); ++i) out += (i ? ", " : "") + c.features[i];
      out += ")";
      if (c.target) out += " TARGET " + *c.target;
      return out;
    }
    case Statement::Kind::DropModel: return "DROP MODEL " + stmt.drop_model;
    case Statement::Kind::CreateTable: {
      const auto& d = stmt.create_table.def;
      std::string out = "CREATE TABLE " + d.name + " (";
      for (size_t i = 0; i < d.columns.size(); ++i) {
        out += (i ? ", " : "") + d.columns[i].name + " " + std::string(to_string(d.columns[i].type));
        if (d.columns[i].name == d.primary_key) out += " PRIMARY KEY";
      }
      return out + ")";
    }
  }
  return {};
}

namespace {

bool exprs_equal(const std::vector<ExprPtr>& a, const std::vector<ExprPtr>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (!expr_equal(a[i], b[i])) return false;
  return true;
}

template <typename T>
bool ptr_equal(const std::shared_ptr<T>& a, const std::shared_ptr<T>& b) {
  if (!a || !b) return !a && !b;
  return *a == *b;
}

bool predict_in(const FromClause& f) {
  auto check = [](const TableRef& t) {
    return t.kind == TableRef::Kind::Predict || (t.kind == TableRef::Kind::Subquery && contains_predict(*t.subquery));
  };
  if (check(f.first)) return true;
  return std::any_of(f.joins.begin(), f.joins.end(), [&](const JoinClause& j) { return check(j.right); });
}

}  // namespace

bool operator==(const TableRef& a, const TableRef& b) {
  return a.kind == b.kind && a.table == b.table && a.alias == b.alias && ptr_equal(a.subquery, b.subquery) &&
         ptr_equal(a.predict, b.predict);
}

bool operator==(const FromClause& a, const FromClause& b) {
  if (!(a.first == b.first) || a.joins.size() != b.joins.size()) return false;
  for (size_t i = 0; i < a.joins.size(); ++i) {
    const auto& x = a.joins[i];
    const auto& y = b.joins[i];
    if (x.kind != y.kind || !(x.right == y.right) || !expr_equal(x.on, y.on)) return false;
  }
  return true;
}

bool operator==(const PredictBlock& a, const PredictBlock& b) {
  return expr_equal(a.target, b.target) && expr_equal(a.primary_key, b.primary_key) && a.from == b.from &&
         expr_equal(a.where, b.where) && exprs_equal(a.train_on, b.train_on) && a.model == b.model;
}

bool operator==(const SelectStmt& a, const SelectStmt& b) {
  if (a.ctes.size() != b.ctes.size() || a.items.size() != b.items.size() || a.order_by.size() != b.order_by.size())
    return false;
  for (size_t i = 0; i < a.ctes.size(); ++i)
    if (a.ctes[i].name != b.ctes[i].name || !ptr_equal(a.ctes[i].query, b.ctes[i].query)) return false;
  for (size_t i = 0; i < a.items.size(); ++i)
    if (a.items[i].alias != b.items[i].alias || !expr_equal(a.items[i].expr, b.items[i].expr)) return false;
  for (size_t i = 0; i < a.order_by.size(); ++i)
    if (a.order_by[i].desc != b.order_by[i].desc || !expr_equal(a.order_by[i].expr, b.order_by[i].expr)) return false;
  return a.from == b.from && expr_equal(a.where, b.where) && exprs_equal(a.group_by, b.group_by) && a.limit == b.limit;
}

bool operator==(const CreateModelStmt& a, const CreateModelStmt& b) {
  return a.name == b.name && a.kind == b.kind && a.table == b.table && a.features == b.features && a.target == b.target;
}

bool operator==(const Statement& a, const Statement& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Statement::Kind::Select:
    case Statement::Kind::PredictSelect: return ptr_equal(a.select, b.select);
    case Statement::Kind::CreateModel: return a.create_model == b.create_model;
    case Statement::Kind::DropModel: return a.drop_model == b.drop_model;
    case Statement::Kind::CreateTable:
      return a.create_table.def.name == b.create_table.def.name &&
             a.create_table.def.columns == b.create_table.def.columns &&
             a.create_table.def.primary_key == b.create_table.def.primary_key;
  }
  return false;
}

bool contains_predict(const SelectStmt& s) {
  for (const auto& c : s.ctes)
    if (contains_predict(*c.query)) return true;
  return s.from && predict_in(*s.from);
}

}  // namespace neurq::sql
