#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Token-level view of decompiled C. Whitespace and comments ride along as
// leading trivia so render(lex(s)) == s.
namespace scribe::csyn {

enum class TokKind { identifier, number, string, character, punct, annotation, directive, eof };

struct Token {
  TokKind kind = TokKind::eof;
  std::string text;
  std::string lead;
  size_t line = 1;
  size_t column = 1;

  bool is(std::string_view s) const { return kind != TokKind::eof && text == s; }
  bool ident() const { return kind == TokKind::identifier; }
};

using Tokens = std::vector<Token>;

// Always ends with an eof token holding trailing trivia.
Tokens lex(std::string_view src);
std::string render(const Tokens &toks);
std::string render_range(const Tokens &toks, size_t begin, size_t end, bool with_first_lead = false);

// Index of the matching closer for an opener at `i`, or npos.
size_t match_close(const Tokens &toks, size_t i);
constexpr size_t npos = size_t(-1);

// Names usable as type specifiers.
struct TypeNames {
  std::set<std::string> names;

  static TypeNames defaults();
  bool contains(const std::string &s) const { return names.count(s) > 0; }
  void add_typedefs_from(const Tokens &toks);
  void add_typedef_line(const std::string &line);
};

bool is_type_keyword(std::string_view s);
bool is_qualifier(std::string_view s);

struct Declarator {
  std::string name;
  size_t name_index = 0;
  size_t begin = 0; // first declarator token (pointer stars included)
  size_t end = 0;   // one past the last declarator token, before any '='
  std::optional<std::pair<size_t, size_t>> init; // tokens after '=' up to ',' or ';'
  std::string pointer;                           // "*", "**", "* const", ...
  std::vector<std::string> dims;                 // array dimension texts
};

struct Declaration {
  size_t begin = 0;     // first specifier token
  size_t spec_end = 0;  // one past the last specifier token
  size_t end = 0;       // index of the terminating ';' (or ',' / ')' for params)
  std::string specifiers;
  std::vector<Declarator> declarators;
};

// Tries to read a declaration starting at `i`. For params only one
// declarator is read and the name may be absent.
std::optional<Declaration> parse_declaration(const Tokens &toks, size_t i, const TypeNames &types,
                                             bool param = false);

// The type of `d` written as an abstract type (no name), arrays decayed.
std::string decayed_type(const Declaration &decl, const Declarator &d);

struct FunctionSig {
  std::string name;
  size_t name_index = 0;
  std::string return_type;
  std::vector<std::string> param_types;
  std::vector<std::pair<std::string, std::string>> params; // (name, type)
  bool variadic = false;
  bool unspecified = false; // "()" in a declaration
  size_t stmt_begin = 0;
  size_t body_open = npos;
  size_t body_close = npos;
};

// File-scope function declarations and definitions.
std::vector<FunctionSig> scan_functions(const Tokens &toks, const TypeNames &types);

// Local declarations inside [body_open, body_close].
std::vector<Declaration> scan_local_declarations(const Tokens &toks, size_t body_open, size_t body_close,
                                                 const TypeNames &types);

// File-scope object declarations.
std::vector<Declaration> scan_global_declarations(const Tokens &toks, const TypeNames &types);

} // namespace scribe::csyn
