#include "scribe/c_syntax.hpp"
#include "scribe/error.hpp"

#include <array>
#include <cctype>

namespace scribe::csyn {

namespace {

bool ident_start(char c) { return std::isalpha((unsigned char)c) || c == '_' || c == '$'; }
bool ident_char(char c) { return std::isalnum((unsigned char)c) || c == '_' || c == '$'; }

constexpr std::array<std::string_view, 23> PUNCT3 = {
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&",
    "||",  "*=",  "/=",  "%=", "+=", "-=", "&=", "^=", "|=", "##"};

class Lexer {
public:
  explicit Lexer(std::string_view s) : src_(s) {}

  Tokens run() {
    Tokens out;
    while (true) {
      std::string lead = trivia();
      Token t;
      t.lead = std::move(lead);
      t.line = line_;
      t.column = col_;
      if (pos_ >= src_.size()) {
        t.kind = TokKind::eof;
        out.push_back(std::move(t));
        return out;
      }
      size_t start = start_ = pos_;
      t.kind = scan();
      t.text = std::string(src_.substr(start, pos_ - start));
      out.push_back(std::move(t));
      at_line_start_ = false;
    }
  }

private:
  std::string_view src_;
  size_t pos_ = 0;
  size_t line_ = 1;
  size_t col_ = 1;
  size_t start_ = 0;
  bool at_line_start_ = true;

  char peek(size_t k = 0) const { return pos_ + k < src_.size() ? src_[pos_ + k] : '\0'; }

  void advance(size_t n = 1) {
    for (size_t i = 0; i < n && pos_ < src_.size(); i++) {
      if (src_[pos_] == '\n') {
        line_++;
        col_ = 1;
      } else {
        col_++;
      }
      pos_++;
    }
  }

  std::string trivia() {
    size_t start = pos_;
    while (pos_ < src_.size()) {
      char c = peek();
      if (c == '\n') {
        at_line_start_ = true;
        advance();
      } else if (std::isspace((unsigned char)c)) {
        advance();
      } else if (c == '/' && peek(1) == '/') {
        while (pos_ < src_.size() && peek() != '\n')
          advance();
      } else if (c == '/' && peek(1) == '*') {
        advance(2);
        while (pos_ < src_.size() && !(peek() == '*' && peek(1) == '/'))
          advance();
        if (pos_ >= src_.size())
          fail(ErrorKind::ParseFailure, "unterminated comment at line " + std::to_string(line_));
        advance(2);
      } else if (c == '\\' && peek(1) == '\n') {
        advance(2);
      } else {
        break;
      }
    }
    return std::string(src_.substr(start, pos_ - start));
  }

  void quoted(char q) {
    size_t line = line_;
    advance();
    while (pos_ < src_.size() && peek() != q) {
      if (peek() == '\\')
        advance();
      if (peek() == '\n' && src_[pos_ - 1] != '\\')
        fail(ErrorKind::ParseFailure, "newline in literal at line " + std::to_string(line));
      advance();
    }
    if (pos_ >= src_.size())
      fail(ErrorKind::ParseFailure, "unterminated literal at line " + std::to_string(line));
    advance();
  }

  TokKind scan() {
    char c = peek();
    if (c == '#' && at_line_start_) {
      while (pos_ < src_.size() && peek() != '\n') {
        if (peek() == '\\' && peek(1) == '\n')
          advance();
        advance();
      }
      return TokKind::directive;
    }
    if (c == '"') {
      quoted('"');
      return TokKind::string;
    }
    if (c == '\'') {
      quoted('\'');
      return TokKind::character;
    }
    if (c == '@' && peek(1) == '<') {
      while (pos_ < src_.size() && peek() != '>')
        advance();
      advance();
      return TokKind::annotation;
    }
    if (std::isdigit((unsigned char)c) || (c == '.' && std::isdigit((unsigned char)peek(1)))) {
      while (pos_ < src_.size()) {
        char d = peek();
        char prev = src_[pos_ - 1];
        bool exp = prev == 'p' || prev == 'P' || ((prev == 'e' || prev == 'E') && !is_hex_literal());
        if ((d == '+' || d == '-') && exp) {
          advance();
          continue;
        }
        if (!std::isalnum((unsigned char)d) && d != '.' && d != '_')
          break;
        advance();
      }
      return TokKind::number;
    }
    if (ident_start(c)) {
      while (pos_ < src_.size()) {
        char d = peek();
        if (ident_char(d)) {
          advance();
        } else if (d == '@' && ident_char(peek(1))) {
          advance();
        } else if (d == '.' && std::isdigit((unsigned char)peek(1))) {
          advance();
        } else {
          break;
        }
      }
      // String and character prefixes.
      std::string_view word = src_.substr(start_, pos_ - start_);
      if ((peek() == '"' || peek() == '\'') && (word == "L" || word == "u" || word == "U" || word == "u8")) {
        char q = peek();
        quoted(q);
        return q == '"' ? TokKind::string : TokKind::character;
      }
      return TokKind::identifier;
    }
    for (std::string_view p : PUNCT3) {
      if (src_.substr(pos_, p.size()) == p) {
        advance(p.size());
        return TokKind::punct;
      }
    }
    advance();
    return TokKind::punct;
  }

  bool is_hex_literal() const {
    return src_.size() > start_ + 1 && src_[start_] == '0' && (src_[start_ + 1] == 'x' || src_[start_ + 1] == 'X');
  }
};

const std::set<std::string> &type_keywords() {
  static const std::set<std::string> k = {
      "void",   "char",     "short",    "int",      "long",   "float",    "double", "signed",
      "unsigned", "_Bool",  "bool",     "__int8",   "__int16", "__int32", "__int64", "__int128",
      "_Complex", "struct", "union",    "enum",     "__m128", "__m128i",  "__m128d", "__m64"};
  return k;
}

const std::set<std::string> &qualifiers() {
  static const std::set<std::string> q = {"const",  "volatile", "static",  "extern",    "register",
                                          "inline", "__inline", "restrict", "__restrict", "auto",
                                          "_Thread_local", "__thread", "__unaligned", "__ptr64"};
  return q;
}

std::string join_tokens(const Tokens &t, size_t b, size_t e) {
  std::string out;
  for (size_t i = b; i < e; i++) {
    if (!out.empty() && !(t[i].is("[") || t[i].is("]") || t[i].is(")") || t[i].is(",")) &&
        !(out.back() == '(' || out.back() == '['))
      out += ' ';
    out += t[i].text;
  }
  return out;
}

// Skips __attribute__((...)) and __declspec(...) starting at i.
size_t skip_attributes(const Tokens &t, size_t i, size_t limit) {
  while (i < limit && (t[i].is("__attribute__") || t[i].is("__declspec") || t[i].is("__asm__") ||
                       t[i].is("asm") || t[i].is("__asm"))) {
    if (i + 1 < limit && t[i + 1].is("(")) {
      size_t c = match_close(t, i + 1);
      if (c == npos)
        return limit;
      i = c + 1;
    } else {
      i++;
    }
  }
  return i;
}

} // namespace

Tokens lex(std::string_view src) { return Lexer(src).run(); }

std::string render(const Tokens &toks) {
  std::string out;
  for (const Token &t : toks) {
    out += t.lead;
    out += t.text;
  }
  return out;
}

std::string render_range(const Tokens &toks, size_t begin, size_t end, bool with_first_lead) {
  std::string out;
  for (size_t i = begin; i < end && i < toks.size(); i++) {
    if (i != begin || with_first_lead)
      out += toks[i].lead;
    out += toks[i].text;
  }
  return out;
}

size_t match_close(const Tokens &toks, size_t i) {
  if (i >= toks.size())
    return npos;
  std::string open = toks[i].text;
  std::string close = open == "(" ? ")" : open == "[" ? "]" : open == "{" ? "}" : "";
  if (close.empty() || toks[i].kind != TokKind::punct)
    return npos;
  int depth = 0;
  for (size_t j = i; j < toks.size(); j++) {
    if (toks[j].kind != TokKind::punct)
      continue;
    if (toks[j].text == open)
      depth++;
    else if (toks[j].text == close && --depth == 0)
      return j;
  }
  return npos;
}

bool is_type_keyword(std::string_view s) { return type_keywords().count(std::string(s)) > 0; }
bool is_qualifier(std::string_view s) { return qualifiers().count(std::string(s)) > 0; }

TypeNames TypeNames::defaults() {
  TypeNames t;
  t.names = {"BYTE",     "WORD",      "DWORD",     "QWORD",      "_BYTE",       "_WORD",      "_DWORD",
             "_QWORD",   "_OWORD",    "_BOOL1",    "_BOOL2",     "_BOOL4",      "_BOOL8",     "_UNKNOWN",
             "scribe_bool", "size_t", "ssize_t",   "ptrdiff_t",  "intptr_t",    "uintptr_t",  "int8_t",
             "int16_t",  "int32_t",   "int64_t",   "uint8_t",    "uint16_t",    "uint32_t",   "uint64_t",
             "FILE",     "undefined", "undefined1", "undefined2", "undefined4", "undefined8", "byte",
             "uchar",    "ushort",    "uint",      "ulong",      "longlong",    "ulonglong",  "va_list",
             "__va_list_tag", "gcc_va_list", "__builtin_va_list", "wchar_t", "off_t", "time_t"};
  return t;
}

void TypeNames::add_typedefs_from(const Tokens &t) {
  int brace = 0;
  for (size_t i = 0; i < t.size(); i++) {
    if (t[i].is("{"))
      brace++;
    else if (t[i].is("}"))
      brace--;
    if (!t[i].is("typedef"))
      continue;
    // Find the end of this typedef at its own nesting level.
    size_t j = i + 1;
    int depth = 0;
    for (; j < t.size() && t[j].kind != TokKind::eof; j++) {
      if (t[j].is("{") || t[j].is("(") || t[j].is("["))
        depth++;
      else if (t[j].is("}") || t[j].is(")") || t[j].is("]"))
        depth--;
      else if (t[j].is(";") && depth == 0)
        break;
    }
    std::string name;
    // typedef R (*name)(...);
    for (size_t k = i + 1; k + 2 < j; k++)
      if (t[k].is("(") && t[k + 1].is("*") && t[k + 2].ident()) {
        name = t[k + 2].text;
        break;
      }
    if (name.empty()) {
      depth = 0;
      for (size_t k = i + 1; k < j; k++) {
        if (t[k].is("{") || t[k].is("(") || t[k].is("["))
          depth++;
        else if (t[k].is("}") || t[k].is(")") || t[k].is("]"))
          depth--;
        else if (depth == 0 && t[k].ident() && !is_qualifier(t[k].text) && !is_type_keyword(t[k].text))
          name = t[k].text;
      }
    }
    if (!name.empty())
      names.insert(name);
    i = j;
  }
}

void TypeNames::add_typedef_line(const std::string &line) { add_typedefs_from(lex(line)); }

std::optional<Declaration> parse_declaration(const Tokens &t, size_t i, const TypeNames &types, bool param) {
  Declaration d;
  d.begin = i;
  size_t n = t.size();
  bool saw_type = false;
  bool saw_base_name = false;
  std::string spec;

  while (i < n) {
    i = skip_attributes(t, i, n);
    if (i >= n)
      return std::nullopt;
    const Token &tk = t[i];
    if (!tk.ident())
      break;
    if (is_qualifier(tk.text)) {
      spec += (spec.empty() ? "" : " ") + tk.text;
      i++;
      continue;
    }
    if (tk.is("struct") || tk.is("union") || tk.is("enum")) {
      if (i + 1 >= n || !t[i + 1].ident())
        return std::nullopt;
      spec += (spec.empty() ? "" : " ") + tk.text + " " + t[i + 1].text;
      i += 2;
      if (i < n && t[i].is("{"))
        return std::nullopt;
      saw_type = saw_base_name = true;
      continue;
    }
    if (is_type_keyword(tk.text)) {
      spec += (spec.empty() ? "" : " ") + tk.text;
      saw_type = true;
      i++;
      continue;
    }
    if (!saw_base_name && !saw_type && types.contains(tk.text)) {
      spec += (spec.empty() ? "" : " ") + tk.text;
      saw_type = saw_base_name = true;
      i++;
      continue;
    }
    break;
  }
  if (!saw_type)
    return std::nullopt;
  d.spec_end = i;
  d.specifiers = spec;

  while (true) {
    Declarator dc;
    dc.begin = i;
    std::string ptr;
    while (i < n && (t[i].is("*") || t[i].is("const") || t[i].is("volatile") || t[i].is("restrict") ||
                     t[i].is("__restrict") || t[i].is("__ptr64"))) {
      ptr += (ptr.empty() || t[i].is("*") ? "" : " ") + t[i].text;
      i++;
    }
    dc.pointer = ptr;
    if (i < n && t[i].ident() && !is_type_keyword(t[i].text) && !is_qualifier(t[i].text)) {
      dc.name = t[i].text;
      dc.name_index = i;
      i++;
    } else if (!param) {
      return std::nullopt;
    }
    while (i < n && t[i].is("[")) {
      size_t c = match_close(t, i);
      if (c == npos)
        return std::nullopt;
      dc.dims.push_back(render_range(t, i + 1, c));
      i = c + 1;
    }
    i = skip_attributes(t, i, n);
    dc.end = i;
    if (i >= n)
      return std::nullopt;
    if (t[i].is("(")) // function declarator or call
      return std::nullopt;
    if (param) {
      if (!(t[i].is(",") || t[i].is(")")))
        return std::nullopt;
      d.declarators.push_back(dc);
      d.end = i;
      return d;
    }
    if (t[i].is("=")) {
      size_t b = ++i;
      int depth = 0;
      while (i < n && t[i].kind != TokKind::eof) {
        if (t[i].is("(") || t[i].is("[") || t[i].is("{"))
          depth++;
        else if (t[i].is(")") || t[i].is("]") || t[i].is("}"))
          depth--;
        else if (depth == 0 && (t[i].is(",") || t[i].is(";")))
          break;
        i++;
      }
      if (i >= n || t[i].kind == TokKind::eof || i == b)
        return std::nullopt;
      dc.init = std::make_pair(b, i);
    }
    d.declarators.push_back(dc);
    if (t[i].is(",")) {
      i++;
      continue;
    }
    if (t[i].is(";")) {
      d.end = i;
      return d;
    }
    return std::nullopt;
  }
}

std::string decayed_type(const Declaration &decl, const Declarator &d) {
  std::string spec;
  // Storage classes are not part of the type.
  size_t p = 0;
  std::string s = decl.specifiers;
  while (p < s.size()) {
    size_t q = s.find(' ', p);
    if (q == std::string::npos)
      q = s.size();
    std::string w = s.substr(p, q - p);
    if (w != "static" && w != "extern" && w != "register" && w != "inline" && w != "__inline" &&
        w != "auto" && w != "_Thread_local" && w != "__thread")
      spec += (spec.empty() ? "" : " ") + w;
    p = q + 1;
  }
  std::string ptr = d.pointer;
  if (d.dims.size() > 1) {
    std::string inner;
    for (size_t k = 1; k < d.dims.size(); k++)
      inner += "[" + d.dims[k] + "]";
    return spec + " " + ptr + "(*)" + inner;
  }
  if (d.dims.size() == 1)
    ptr += "*";
  return ptr.empty() ? spec : spec + " " + ptr;
}

namespace {

// Parses "( params )" at open; fills sig params.
void parse_params(const Tokens &t, size_t open, size_t close, const TypeNames &types, FunctionSig &sig) {
  if (close == open + 1) {
    sig.unspecified = true;
    return;
  }
  if (close == open + 2 && t[open + 1].is("void"))
    return;
  size_t i = open + 1;
  while (i < close) {
    if (t[i].is("...")) {
      sig.variadic = true;
      i++;
      if (i < close && t[i].is(","))
        i++;
      continue;
    }
    size_t end = i;
    int depth = 0;
    while (end < close) {
      if (t[end].is("(") || t[end].is("["))
        depth++;
      else if (t[end].is(")") || t[end].is("]"))
        depth--;
      else if (depth == 0 && t[end].is(","))
        break;
      end++;
    }
    auto d = parse_declaration(t, i, types, true);
    std::string type, name;
    if (d && d->end == end) {
      type = decayed_type(*d, d->declarators[0]);
      name = d->declarators[0].name;
    } else {
      // Function pointer parameters and other unusual forms.
      type = join_tokens(t, i, end);
      for (size_t k = i; k + 2 < end; k++)
        if (t[k].is("(") && t[k + 1].is("*") && t[k + 2].ident()) {
          name = t[k + 2].text;
          Tokens copy(t.begin() + i, t.begin() + end);
          copy.erase(copy.begin() + (k + 2 - i));
          type = join_tokens(copy, 0, copy.size());
          break;
        }
    }
    sig.param_types.push_back(type);
    sig.params.emplace_back(name, type);
    i = end < close ? end + 1 : end;
  }
}

// Reads "spec* name ( params )" in [b, e). Returns false if it is not a
// function declarator.
bool read_function_header(const Tokens &t, size_t b, size_t e, const TypeNames &types, FunctionSig &sig) {
  size_t name = npos;
  for (size_t i = b; i + 1 < e; i++) {
    if (t[i].is("(") || t[i].is("{") || t[i].is("=") || t[i].is("["))
      break;
    if (t[i].ident() && t[i + 1].is("(") && !is_type_keyword(t[i].text) && !is_qualifier(t[i].text) &&
        !t[i].is("__attribute__") && !t[i].is("__declspec")) {
      name = i;
      break;
    }
  }
  if (name == npos || name == b)
    return false;
  size_t close = match_close(t, name + 1);
  if (close == npos || close >= e)
    return false;
  size_t after = skip_attributes(t, close + 1, e);
  if (after != e)
    return false;

  std::string ret;
  size_t i = b;
  bool saw_type = false;
  while (i < name) {
    i = skip_attributes(t, i, name);
    if (i >= name)
      break;
    const Token &tk = t[i];
    if (tk.is("static") || tk.is("extern") || tk.is("inline") || tk.is("__inline") || tk.is("register")) {
      i++;
      continue;
    }
    if (tk.is("*")) {
      ret += tk.text;
      i++;
      continue;
    }
    if (!tk.ident())
      return false;
    if (is_type_keyword(tk.text) || is_qualifier(tk.text) || types.contains(tk.text)) {
      saw_type = true;
    } else if (i > b && (t[i - 1].is("struct") || t[i - 1].is("union") || t[i - 1].is("enum"))) {
      saw_type = true;
    } else {
      // Unknown leading identifiers are treated as types only when a proper
      // type word follows; otherwise this is an expression.
      bool later_type = false;
      for (size_t k = i + 1; k < name; k++)
        if (is_type_keyword(t[k].text) || types.contains(t[k].text))
          later_type = true;
      if (!later_type)
        saw_type = true; // an unknown typedef name such as "HANDLE"
    }
    if (!ret.empty() && ret.back() != '*')
      ret += ' ';
    else if (!ret.empty())
      ret += ' ';
    ret += tk.text;
    i++;
  }
  if (!saw_type)
    return false;
  sig.name = t[name].text;
  sig.name_index = name;
  sig.return_type = ret;
  parse_params(t, name + 1, close, types, sig);
  return true;
}

} // namespace

std::vector<FunctionSig> scan_functions(const Tokens &t, const TypeNames &types) {
  std::vector<FunctionSig> out;
  size_t start = 0;
  size_t i = 0;
  while (i < t.size() && t[i].kind != TokKind::eof) {
    const Token &tk = t[i];
    if (tk.kind == TokKind::directive) {
      start = ++i;
      continue;
    }
    if (tk.is("(") || tk.is("[")) {
      size_t c = match_close(t, i);
      if (c == npos)
        fail(ErrorKind::ParseFailure, "unbalanced '" + tk.text + "' at line " + std::to_string(tk.line));
      i = c + 1;
      continue;
    }
    if (tk.is("{")) {
      size_t c = match_close(t, i);
      if (c == npos)
        fail(ErrorKind::ParseFailure, "unbalanced '{' at line " + std::to_string(tk.line));
      FunctionSig sig;
      if (!t[start].is("typedef") && read_function_header(t, start, i, types, sig)) {
        sig.stmt_begin = start;
        sig.body_open = i;
        sig.body_close = c;
        out.push_back(sig);
        start = i = c + 1;
        continue;
      }
      i = c + 1; // struct body or initializer
      continue;
    }
    if (tk.is(";")) {
      FunctionSig sig;
      if (!t[start].is("typedef") && read_function_header(t, start, i, types, sig)) {
        sig.stmt_begin = start;
        out.push_back(sig);
      }
      start = ++i;
      continue;
    }
    if (tk.is("}") || tk.is(")") || tk.is("]"))
      fail(ErrorKind::ParseFailure, "unbalanced '" + tk.text + "' at line " + std::to_string(tk.line));
    i++;
  }
  return out;
}

std::vector<Declaration> scan_local_declarations(const Tokens &t, size_t open, size_t close,
                                                 const TypeNames &types) {
  std::vector<Declaration> out;
  for (size_t i = open + 1; i < close; i++) {
    bool boundary = t[i - 1].is("{") || t[i - 1].is(";") || t[i - 1].is("}") ||
                    (t[i - 1].is("(") && i >= 2 && t[i - 2].is("for"));
    if (!boundary || t[i].kind != TokKind::identifier)
      continue;
    if (auto d = parse_declaration(t, i, types)) {
      if (t[d->begin].is("typedef"))
        continue;
      out.push_back(*d);
      i = d->end;
    }
  }
  return out;
}

std::vector<Declaration> scan_global_declarations(const Tokens &t, const TypeNames &types) {
  std::vector<Declaration> out;
  size_t start = 0;
  for (size_t i = 0; i < t.size() && t[i].kind != TokKind::eof; i++) {
    if (t[i].kind == TokKind::directive) {
      start = i + 1;
      continue;
    }
    if (t[i].is("{") || t[i].is("(") || t[i].is("[")) {
      size_t c = match_close(t, i);
      if (c == npos)
        break;
      bool fn_body = t[i].is("{") && i > 0 && t[i - 1].is(")");
      i = c;
      if (fn_body)
        start = c + 1;
      continue;
    }
    if (t[i].is(";")) {
      if (start < i && !t[start].is("typedef"))
        if (auto d = parse_declaration(t, start, types))
          if (d->end == i)
            out.push_back(*d);
      start = i + 1;
    }
  }
  return out;
}

} // namespace scribe::csyn
