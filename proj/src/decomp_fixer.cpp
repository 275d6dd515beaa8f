#include "scribe/decomp_fixer.hpp"
#include "scribe/c_syntax.hpp"
#include "scribe/error.hpp"

#include <json.hpp>
#include <regex>
#include <set>
#include <sstream>

namespace scribe::fixer {

using namespace csyn;

namespace {

void note(DecompUnit &u, const std::string &rule, const Token &at, std::string msg) {
  u.diagnostics.push_back({rule, at.line, at.column, std::move(msg)});
}

void mark_applied(DecompUnit &u, const std::string &rule) {
  if (u.applied_rules.empty() || u.applied_rules.back() != rule)
    u.applied_rules.push_back(rule);
}

// Removes token k, folding its leading trivia into the next token.
void erase_token(Tokens &t, size_t k) {
  if (k + 1 < t.size()) {
    std::string lead = t[k].lead;
    std::string &next = t[k + 1].lead;
    bool lead_blank = lead.find_first_not_of(" \t") == std::string::npos;
    if (!(lead_blank && !next.empty()))
      next = lead + next;
  }
  t.erase(t.begin() + k);
}

bool needs_sanitizing(const std::string &s) {
  return s.find_first_of(".@$") != std::string::npos;
}

std::string sanitize(std::string s) {
  for (char &c : s)
    if (c == '.' || c == '@' || c == '$')
      c = '_';
  if (!s.empty() && std::isdigit((unsigned char)s[0]))
    s.insert(s.begin(), '_');
  return s;
}

} // namespace

std::string original_symbol_name(const std::map<std::string, std::string> &renames, const std::string &name) {
  auto it = renames.find(name);
  std::string orig = it == renames.end() ? name : it->second;
  size_t at = orig.find('@');
  if (at != std::string::npos && at > 0)
    orig.resize(at);
  return orig;
}

DecompUnit check_dialect(DecompUnit u) {
  static const std::regex odd(R"(^(u?int|undefined|__int)([0-9]+)$)");
  Tokens t = lex(u.source_text);
  for (const Token &tk : t) {
    std::smatch m;
    if (!tk.ident() || !std::regex_match(tk.text, m, odd))
      continue;
    int width = std::stoi(m[2]);
    bool bytes = m[1] != "__int";
    bool ok = bytes ? (width == 1 || width == 2 || width == 4 || width == 8 || width == 16)
                    : (width == 8 || width == 16 || width == 32 || width == 64 || width == 128);
    if (!ok) {
      note(u, "check_dialect", tk, "unsupported odd-width integer type '" + tk.text + "'");
      fail(ErrorKind::ParseFailure, "line " + std::to_string(tk.line) + ": unsupported odd-width type '" +
                                        tk.text + "'");
    }
  }
  return u;
}

DecompUnit normalize_names(DecompUnit u) {
  Tokens t = lex(u.source_text);

  // Glue "a.b" chains into one name when "a" is never used on its own.
  std::set<std::string> standalone;
  for (size_t i = 0; i < t.size(); i++) {
    if (!t[i].ident())
      continue;
    bool dotted = i + 2 < t.size() && t[i + 1].is(".") && t[i + 1].lead.empty() && t[i + 2].ident() &&
                  t[i + 2].lead.empty();
    bool member = i > 0 && (t[i - 1].is(".") || t[i - 1].is("->"));
    if (!dotted && !member)
      standalone.insert(t[i].text);
  }
  for (size_t i = 0; i + 2 < t.size(); i++) {
    if (!t[i].ident() || standalone.count(t[i].text))
      continue;
    if (i > 0 && (t[i - 1].is(".") || t[i - 1].is("->")))
      continue;
    while (i + 2 < t.size() && t[i + 1].is(".") && t[i + 1].lead.empty() && t[i + 2].ident() &&
           t[i + 2].lead.empty()) {
      t[i].text += "." + t[i + 2].text;
      t.erase(t.begin() + i + 1, t.begin() + i + 3);
    }
  }

  std::set<std::string> taken;
  for (const Token &tk : t)
    if (tk.ident() && !needs_sanitizing(tk.text))
      taken.insert(tk.text);
  for (const auto &[now, orig] : u.renames)
    taken.insert(now);

  std::map<std::string, std::string> chosen; // original -> new
  bool changed = false;
  for (Token &tk : t) {
    if (!tk.ident() || !needs_sanitizing(tk.text))
      continue;
    auto it = chosen.find(tk.text);
    if (it == chosen.end()) {
      std::string base = sanitize(tk.text);
      std::string name = base;
      for (int n = 1; taken.count(name); n++)
        name = base + "_" + std::to_string(n);
      taken.insert(name);
      it = chosen.emplace(tk.text, name).first;
      u.renames[name] = tk.text;
      note(u, "normalize_names", tk, "renamed '" + tk.text + "' to '" + name + "'");
    }
    tk.text = it->second;
    changed = true;
  }
  if (changed) {
    u.source_text = render(t);
    mark_applied(u, "normalize_names");
  }
  return u;
}

DecompUnit fix_declarations_and_keywords(DecompUnit u) {
  static const std::set<std::string> strip = {"__usercall", "__userpurge", "__thiscall", "__fastcall",
                                              "__stdcall",  "__cdecl",     "__pascal",   "__hidden",
                                              "__noreturn", "__golang",    "__swiftcall", "__spoils"};
  Tokens t = lex(u.source_text);
  TypeNames types = TypeNames::defaults();
  types.add_typedefs_from(t);
  bool changed = false;

  for (size_t i = 0; i < t.size();) {
    Token &tk = t[i];
    if (tk.kind == TokKind::annotation) {
      note(u, "strip_keywords", tk, "removed register annotation '" + tk.text + "'");
      erase_token(t, i);
      changed = true;
      continue;
    }
    if (tk.ident() && strip.count(tk.text)) {
      note(u, "strip_keywords", tk, "removed '" + tk.text + "'");
      if (tk.is("__spoils") && i + 1 < t.size() && t[i + 1].is("<")) {
        size_t j = i + 1;
        while (j < t.size() && !t[j].is(">") && t[j].kind != TokKind::eof)
          j++;
        for (size_t k = j; k > i; k--)
          erase_token(t, k);
      }
      erase_token(t, i);
      changed = true;
      continue;
    }
    i++;
  }

  // T[N]... name  ->  T name[N]...
  for (size_t i = 1; i < t.size(); i++) {
    if (!t[i].is("["))
      continue;
    const Token &prev = t[i - 1];
    bool type_before = prev.is("*") || (prev.ident() && (is_type_keyword(prev.text) || types.contains(prev.text)));
    if (!type_before)
      continue;
    size_t j = i;
    std::vector<std::pair<size_t, size_t>> groups;
    while (j < t.size() && t[j].is("[")) {
      size_t c = match_close(t, j);
      if (c == npos)
        break;
      groups.emplace_back(j, c);
      j = c + 1;
    }
    if (groups.empty() || j >= t.size() || !t[j].ident() || is_type_keyword(t[j].text) ||
        is_qualifier(t[j].text))
      continue;
    Tokens moved(t.begin() + i, t.begin() + j);
    Token name = t[j];
    name.lead = moved.front().lead.empty() ? " " : moved.front().lead;
    moved.front().lead.clear();
    t.erase(t.begin() + i, t.begin() + j + 1);
    t.insert(t.begin() + i, name);
    t.insert(t.begin() + i + 1, moved.begin(), moved.end());
    note(u, "fix_array_declarators", name, "moved array dimensions after '" + name.text + "'");
    changed = true;
    i += moved.size();
  }

  if (changed) {
    u.source_text = render(t);
    mark_applied(u, "fix_declarations_and_keywords");
  }
  return u;
}

DecompUnit rewrite_bool(DecompUnit u) {
  Tokens t = lex(u.source_text);
  bool changed = false;
  for (Token &tk : t)
    if (tk.ident() && tk.text == "bool") {
      tk.text = "scribe_bool";
      changed = true;
    }
  if (changed) {
    u.source_text = render(t);
    mark_applied(u, "rewrite_bool");
  }
  return u;
}

namespace {

bool is_control_word(const std::string &s) {
  static const std::set<std::string> w = {"if",     "while",  "for",    "switch",  "return",  "sizeof",
                                          "do",     "else",   "case",   "goto",    "_Alignof", "__alignof__",
                                          "typeof", "__typeof__", "_Generic", "__builtin_offsetof",
                                          "_Static_assert", "defined"};
  return w.count(s) > 0;
}

bool is_float_type(const std::string &s) {
  return s == "float" || s == "double" || s == "long double";
}

bool looks_float_literal(const std::string &s) {
  if (s.size() > 1 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X'))
    return s.find_first_of("pP") != std::string::npos;
  return s.find_first_of(".eE") != std::string::npos;
}

// Reads an abstract type name in [b, e) such as "unsigned int *".
std::optional<std::string> type_name_in(const Tokens &t, size_t b, size_t e, const TypeNames &types) {
  if (b >= e)
    return std::nullopt;
  std::string out;
  bool saw_type = false;
  for (size_t i = b; i < e; i++) {
    const Token &tk = t[i];
    if (tk.is("*")) {
      out += out.empty() || out.back() == '*' ? "*" : " *";
      continue;
    }
    if (!tk.ident())
      return std::nullopt;
    if (tk.is("struct") || tk.is("union") || tk.is("enum")) {
      if (i + 1 >= e || !t[i + 1].ident())
        return std::nullopt;
      out += (out.empty() ? "" : " ") + tk.text + " " + t[i + 1].text;
      i++;
      saw_type = true;
      continue;
    }
    if (is_type_keyword(tk.text) || types.contains(tk.text)) {
      saw_type = true;
    } else if (!(tk.is("const") || tk.is("volatile"))) {
      return std::nullopt;
    }
    out += (out.empty() ? "" : " ") + tk.text;
  }
  if (!saw_type)
    return std::nullopt;
  return out;
}

struct CallSite {
  size_t callee = 0;
  size_t open = 0;
  size_t close = 0;
  std::vector<std::pair<size_t, size_t>> args;
};

std::vector<std::pair<size_t, size_t>> split_args(const Tokens &t, size_t open, size_t close) {
  std::vector<std::pair<size_t, size_t>> out;
  if (close == open + 1)
    return out;
  size_t b = open + 1;
  int depth = 0;
  for (size_t i = open + 1; i < close; i++) {
    if (t[i].is("(") || t[i].is("[") || t[i].is("{"))
      depth++;
    else if (t[i].is(")") || t[i].is("]") || t[i].is("}"))
      depth--;
    else if (depth == 0 && t[i].is(",")) {
      out.emplace_back(b, i);
      b = i + 1;
    }
  }
  out.emplace_back(b, close);
  return out;
}

// True when the call's value is discarded.
bool result_unused(const Tokens &t, const CallSite &c) {
  if (c.close + 1 >= t.size() || !t[c.close + 1].is(";"))
    return false;
  if (c.callee == 0)
    return true;
  const Token &p = t[c.callee - 1];
  if (p.is(";") || p.is("{") || p.is("}") || p.is("else") || p.is(":") || p.is("do"))
    return true;
  if (p.is(")")) {
    // "(void)foo();" or "if (x) foo();"
    size_t open = npos;
    int depth = 0;
    for (size_t k = c.callee - 1; k != size_t(-1); k--) {
      if (t[k].is(")"))
        depth++;
      else if (t[k].is("(") && --depth == 0) {
        open = k;
        break;
      }
    }
    if (open == npos)
      return false;
    if (open + 2 == c.callee - 1 && t[open + 1].is("void"))
      return true;
    if (open > 0 && (t[open - 1].is("if") || t[open - 1].is("while") || t[open - 1].is("for")))
      return true;
  }
  return false;
}

} // namespace

DecompUnit reconcile_prototypes(DecompUnit u, const meta::SymbolMap &symbols,
                                const std::vector<std::string> &extra_prototypes,
                                const std::vector<std::string> &extra_typedefs) {
  Tokens t = lex(u.source_text);
  TypeNames types = TypeNames::defaults();
  for (const std::string &line : extra_typedefs)
    types.add_typedef_line(line);
  types.add_typedefs_from(t);

  std::map<std::string, FunctionSig> protos;
  for (const std::string &p : extra_prototypes)
    for (FunctionSig &s : scan_functions(lex(p), types))
      protos.emplace(s.name, s);
  std::vector<FunctionSig> sigs = scan_functions(t, types);
  for (const FunctionSig &s : sigs)
    protos.emplace(s.name, s);

  std::map<std::string, std::string> globals;
  for (const Declaration &d : scan_global_declarations(t, types))
    for (const Declarator &dc : d.declarators)
      globals[dc.name] = decayed_type(d, dc);

  struct Edit {
    size_t index;
    std::string text;
  };
  std::vector<Edit> edits;
  std::vector<std::string> undeclared;
  size_t declare_at = npos;

  for (const FunctionSig &fn : sigs) {
    if (fn.body_open == npos)
      continue;
    std::map<std::string, std::string> vars = globals;
    for (const auto &[name, type] : fn.params)
      if (!name.empty())
        vars[name] = type;
    for (const Declaration &d : scan_local_declarations(t, fn.body_open, fn.body_close, types))
      for (const Declarator &dc : d.declarators)
        vars[dc.name] = decayed_type(d, dc);

    for (size_t i = fn.body_open + 1; i < fn.body_close; i++) {
      if (!t[i].ident() || !t[i + 1].is("(") || is_control_word(t[i].text) || is_type_keyword(t[i].text))
        continue;
      if (t[i - 1].is(".") || t[i - 1].is("->"))
        continue;
      const std::string &name = t[i].text;
      if (vars.count(name) && !protos.count(name))
        continue;
      if (name.rfind("__builtin", 0) == 0)
        continue;

      CallSite c;
      c.callee = i;
      c.open = i + 1;
      c.close = match_close(t, c.open);
      if (c.close == npos)
        fail(ErrorKind::ParseFailure, "unbalanced call to '" + name + "' at line " + std::to_string(t[i].line));
      c.args = split_args(t, c.open, c.close);

      auto proto = protos.find(name);
      bool known_binary = symbols.lookup(name) || symbols.lookup(original_symbol_name(u.renames, name));
      bool used = !result_unused(t, c);
      std::string reason;
      if (proto == protos.end()) {
        if (!known_binary)
          continue;
        reason = "no prototype for binary function";
        if (std::find(undeclared.begin(), undeclared.end(), name) == undeclared.end())
          undeclared.push_back(name);
        declare_at = std::min(declare_at, fn.stmt_begin);
      } else {
        const FunctionSig &s = proto->second;
        bool void_ret = s.return_type == "void";
        size_t want = s.param_types.size();
        size_t got = c.args.size();
        if (void_ret && used)
          reason = "return value of void function is used";
        else if (!s.unspecified && got != want && !(s.variadic && got >= want))
          reason = "called with " + std::to_string(got) + " argument(s), declared with " + std::to_string(want);
        else
          continue;
      }

      std::string ret = "long long";
      bool declared_void = proto != protos.end() && proto->second.return_type == "void";
      if (proto != protos.end() && !declared_void && !proto->second.return_type.empty())
        ret = proto->second.return_type;
      if (declared_void && !used)
        ret = "void";
      if (used && (proto == protos.end() || declared_void) && i >= 2 && t[i - 1].is("=") && t[i - 2].ident()) {
        auto v = vars.find(t[i - 2].text);
        if (v != vars.end() && (v->second.find('*') != std::string::npos || is_float_type(v->second)))
          ret = v->second;
      }

      std::vector<std::string> ptypes;
      for (size_t a = 0; a < c.args.size(); a++) {
        auto [b, e] = c.args[a];
        if (proto != protos.end() && !proto->second.unspecified && a < proto->second.param_types.size()) {
          ptypes.push_back(proto->second.param_types[a]);
          continue;
        }
        std::optional<std::string> ty;
        if (e == b + 1) {
          const Token &at = t[b];
          if (at.ident() && vars.count(at.text))
            ty = vars[at.text];
          else if (at.ident() && protos.count(at.text))
            ty = "void *";
          else if (at.kind == TokKind::string)
            ty = "char *";
          else if (at.kind == TokKind::character)
            ty = "int";
          else if (at.kind == TokKind::number)
            ty = looks_float_literal(at.text) ? "double" : "long long";
        } else if (t[b].is("&")) {
          ty = "void *";
        } else if (t[b].is("(")) {
          size_t cl = match_close(t, b);
          if (cl != npos && cl + 1 < e)
            ty = type_name_in(t, b + 1, cl, types);
        }
        if (!ty) {
          ty = "long long";
          note(u, "reconcile_prototypes", t[b],
               "argument " + std::to_string(a + 1) + " of call to '" + name + "' has no known type; using long long");
        }
        ptypes.push_back(*ty);
      }
      std::string plist;
      for (size_t a = 0; a < ptypes.size(); a++)
        plist += (a ? ", " : "") + ptypes[a];
      if (plist.empty())
        plist = "void";
      std::string cast = "((" + ret + " (*)(" + plist + "))" + name + ")";
      note(u, "reconcile_prototypes", t[i], "call to '" + name + "': " + reason + "; cast to " + ret + " (*)(" +
                                                plist + ")");
      edits.push_back({i, cast});
      i = c.open;
    }
  }

  if (!edits.empty()) {
    for (const Edit &e : edits)
      t[e.index].text = e.text;
    if (declare_at != npos) {
      std::string decls;
      for (const std::string &n : undeclared)
        decls += "void " + n + "();\n";
      t[declare_at].text = decls + t[declare_at].text;
    }
    u.source_text = render(t);
    mark_applied(u, "reconcile_prototypes");
  }
  return u;
}

DecompUnit run_fixer(DecompUnit u, const meta::SymbolMap &symbols, const meta::DefinitionsBundle &defs) {
  u = check_dialect(std::move(u));
  u = normalize_names(std::move(u));
  u = fix_declarations_and_keywords(std::move(u));
  u = rewrite_bool(std::move(u));
  u = reconcile_prototypes(std::move(u), symbols, defs.extern_prototypes, defs.typedef_lines);
  return u;
}

CompatHeader emit_compat_header(const meta::DefinitionsBundle &defs, CanaryMode mode) {
  std::ostringstream h;
  h << "#ifndef SCRIBE_COMPAT_H\n"
       "#define SCRIBE_COMPAT_H\n"
       "\n"
       "#pragma GCC visibility push(hidden)\n"
       "\n"
       "typedef __SIZE_TYPE__ size_t;\n"
       "typedef long ssize_t;\n"
       "typedef __PTRDIFF_TYPE__ ptrdiff_t;\n"
       "typedef __INTPTR_TYPE__ intptr_t;\n"
       "typedef __UINTPTR_TYPE__ uintptr_t;\n"
       "typedef __INT8_TYPE__ int8_t;\n"
       "typedef __INT16_TYPE__ int16_t;\n"
       "typedef __INT32_TYPE__ int32_t;\n"
       "typedef __INT64_TYPE__ int64_t;\n"
       "typedef __UINT8_TYPE__ uint8_t;\n"
       "typedef __UINT16_TYPE__ uint16_t;\n"
       "typedef __UINT32_TYPE__ uint32_t;\n"
       "typedef __UINT64_TYPE__ uint64_t;\n"
       "#ifndef NULL\n"
       "#define NULL ((void *)0)\n"
       "#endif\n"
       "\n"
       "typedef _Bool scribe_bool;\n"
       "_Static_assert(sizeof(scribe_bool) == 1, \"scribe_bool must be one byte\");\n"
       "#ifndef true\n"
       "#define true 1\n"
       "#define false 0\n"
       "#endif\n"
       "\n"
       "#define __int8 char\n"
       "#define __int16 short\n"
       "#define __int32 int\n"
       "#define __int64 long long\n"
       "typedef unsigned char BYTE;\n"
       "typedef unsigned short WORD;\n"
       "typedef unsigned int DWORD;\n"
       "typedef unsigned long long QWORD;\n"
       "typedef unsigned char _BYTE;\n"
       "typedef unsigned short _WORD;\n"
       "typedef unsigned int _DWORD;\n"
       "typedef unsigned long long _QWORD;\n"
       "typedef unsigned __int128 _OWORD;\n"
       "typedef char _BOOL1;\n"
       "typedef short _BOOL2;\n"
       "typedef int _BOOL4;\n"
       "typedef long long _BOOL8;\n"
       "typedef void _UNKNOWN;\n"
       "typedef unsigned char undefined;\n"
       "typedef unsigned char undefined1;\n"
       "typedef unsigned short undefined2;\n"
       "typedef unsigned int undefined4;\n"
       "typedef unsigned long long undefined8;\n"
       "typedef unsigned char byte;\n"
       "typedef unsigned char uchar;\n"
       "typedef unsigned short ushort;\n"
       "typedef unsigned int uint;\n"
       "typedef unsigned long ulong;\n"
       "typedef long long longlong;\n"
       "typedef unsigned long long ulonglong;\n"
       "\n"
       "#define __fastcall\n"
       "#define __cdecl\n"
       "#define __stdcall\n"
       "#define __thiscall\n"
       "#define __usercall\n"
       "#define __userpurge\n"
       "#define __pascal\n"
       "#define __hidden\n"
       "#define __noreturn __attribute__((noreturn))\n"
       "#define __unaligned\n"
       "#define __ptr64\n"
       "\n"
       "#define SCRIBE_PART(x, T, n) (*((T *)&(x) + (n)))\n"
       "#define SCRIBE_LAST(x, T) (sizeof(x) / sizeof(T) - 1)\n"
       "#define BYTEn(x, n) SCRIBE_PART(x, _BYTE, n)\n"
       "#define WORDn(x, n) SCRIBE_PART(x, _WORD, n)\n"
       "#define DWORDn(x, n) SCRIBE_PART(x, _DWORD, n)\n"
       "#define LOBYTE(x) BYTEn(x, 0)\n"
       "#define LOWORD(x) WORDn(x, 0)\n"
       "#define LODWORD(x) DWORDn(x, 0)\n"
       "#define HIBYTE(x) BYTEn(x, SCRIBE_LAST(x, _BYTE))\n"
       "#define HIWORD(x) WORDn(x, SCRIBE_LAST(x, _WORD))\n"
       "#define HIDWORD(x) DWORDn(x, SCRIBE_LAST(x, _DWORD))\n"
       "#define BYTE1(x) BYTEn(x, 1)\n"
       "#define BYTE2(x) BYTEn(x, 2)\n"
       "#define BYTE3(x) BYTEn(x, 3)\n"
       "#define BYTE4(x) BYTEn(x, 4)\n"
       "#define WORD1(x) WORDn(x, 1)\n"
       "#define WORD2(x) WORDn(x, 2)\n"
       "#define SLOBYTE(x) SCRIBE_PART(x, signed char, 0)\n"
       "#define SLOWORD(x) SCRIBE_PART(x, short, 0)\n"
       "#define SLODWORD(x) SCRIBE_PART(x, int, 0)\n"
       "#define SHIBYTE(x) SCRIBE_PART(x, signed char, SCRIBE_LAST(x, char))\n"
       "#define SHIWORD(x) SCRIBE_PART(x, short, SCRIBE_LAST(x, short))\n"
       "#define SHIDWORD(x) SCRIBE_PART(x, int, SCRIBE_LAST(x, int))\n"
       "#define __PAIR64__(hi, lo) (((unsigned long long)(hi) << 32) | (unsigned int)(lo))\n"
       "#define __ROL4__(x, n) ((unsigned int)(((unsigned int)(x) << ((n) & 31)) | ((unsigned int)(x) >> ((32 - ((n) & 31)) & 31))))\n"
       "#define __ROR4__(x, n) __ROL4__(x, 32 - ((n) & 31))\n"
       "#define __ROL8__(x, n) ((unsigned long long)(((unsigned long long)(x) << ((n) & 63)) | ((unsigned long long)(x) >> ((64 - ((n) & 63)) & 63))))\n"
       "#define __ROR8__(x, n) __ROL8__(x, 64 - ((n) & 63))\n"
       "\n";

  if (mode == CanaryMode::preserve) {
    h << "static inline __attribute__((always_inline)) unsigned long long __readfsqword(unsigned long off) {\n"
         "  unsigned long long v;\n"
         "  __asm__ volatile(\"movq %%fs:(%1), %0\" : \"=r\"(v) : \"r\"(off));\n"
         "  return v;\n"
         "}\n"
         "static inline __attribute__((always_inline)) unsigned int __readfsdword(unsigned long off) {\n"
         "  unsigned int v;\n"
         "  __asm__ volatile(\"movl %%fs:(%1), %0\" : \"=r\"(v) : \"r\"(off));\n"
         "  return v;\n"
         "}\n"
         "void __stack_chk_fail(void) __attribute__((noreturn));\n"
         "#define SCRIBE_CANARY_CHECK(saved) \\\n"
         "  do { if ((unsigned long long)(saved) != __readfsqword(0x28)) __stack_chk_fail(); } while (0)\n";
  } else {
    h << "#define __readfsqword(off) ((unsigned long long)((void)(off), 0))\n"
         "#define __readfsdword(off) ((unsigned int)((void)(off), 0))\n"
         "#define SCRIBE_CANARY_CHECK(saved) ((void)(saved))\n";
  }

  if (!defs.typedef_lines.empty() || !defs.macro_lines.empty() || !defs.extern_prototypes.empty())
    h << "\n";
  for (const std::string &l : defs.typedef_lines)
    h << l << "\n";
  for (const std::string &l : defs.macro_lines)
    h << l << "\n";
  for (const std::string &l : defs.extern_prototypes)
    h << l << "\n";
  h << "\n#endif\n";
  return {h.str()};
}

std::string diagnostics_jsonl(const DecompUnit &u) {
  std::string out;
  for (const Diagnostic &d : u.diagnostics) {
    nlohmann::json j = {{"rule", d.rule}, {"line", d.line}, {"column", d.column}, {"message", d.message}};
    out += j.dump() + "\n";
  }
  return out;
}

} // namespace scribe::fixer
