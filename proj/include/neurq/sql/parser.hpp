#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "neurq/sql/ast.hpp"

namespace neurq::sql {

enum class TokenKind { Identifier, Keyword, Integer, Float, String, Symbol, End };

struct Token {
  TokenKind kind = TokenKind::End;
  std::string text;  // keywords are upper-cased
  int line = 1;
  int column = 1;
};

/// Splits SQL text into tokens. `--` comments and whitespace are skipped.
std::vector<Token> tokenize(std::string_view text);

bool is_reserved(std::string_view upper);

/// Parses one statement; an optional trailing `;` is accepted.
Statement parse(std::string_view text);

/// Parses a `;`-separated script.
std::vector<Statement> parse_script(std::string_view text);

/// Renders a statement back to SQL such that parse(unparse(s)) == s.
std::string unparse(const Statement& stmt);
std::string unparse(const SelectStmt& stmt);

}  // namespace neurq::sql
