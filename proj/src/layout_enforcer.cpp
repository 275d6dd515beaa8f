#include "scribe/layout_enforcer.hpp"
#include "scribe/c_syntax.hpp"
#include "scribe/error.hpp"

#include <algorithm>
#include <json.hpp>

namespace scribe::layout {

using namespace csyn;

std::map<std::string, i64> convert_sp_to_bp(const std::map<std::string, LayoutEntry> &layout) {
  std::vector<std::pair<std::string, LayoutEntry>> v(layout.begin(), layout.end());
  for (auto &[name, e] : v) {
    if (e.size == 0)
      fail(ErrorKind::ZeroSizeVar, "variable '" + name + "' has size 0");
    if (e.offset < 0)
      fail(ErrorKind::InvalidArgument, "sp offset of '" + name + "' is negative");
  }
  std::sort(v.begin(), v.end(), [](auto &a, auto &b) { return a.second.offset < b.second.offset; });
  for (size_t i = 1; i < v.size(); i++)
    if (v[i - 1].second.offset + i64(v[i - 1].second.size) > v[i].second.offset)
      fail(ErrorKind::OverlapError, "'" + v[i - 1].first + "' overlaps '" + v[i].first + "'");

  i64 max = 0;
  for (auto &[name, e] : v)
    max = std::max(max, e.offset + i64(e.size));
  std::map<std::string, i64> out;
  for (auto &[name, e] : v)
    out[name] = e.offset - max;
  return out;
}

PinnedFramePlan build_frame_plan(const meta::FunctionMetadata &fn) {
  PinnedFramePlan p;
  p.function_name = fn.name;
  std::map<std::string, u64> sizes;
  for (const meta::StackVar &v : fn.stack) {
    if (v.size == 0)
      fail(ErrorKind::ZeroSizeVar, fn.name + ": variable '" + v.name + "' has size 0");
    sizes[v.name] = v.size;
  }

  if (fn.frame_kind == meta::FrameKind::sp_based) {
    std::map<std::string, LayoutEntry> sp;
    for (const meta::StackVar &v : fn.stack)
      sp[v.name] = {v.offset, v.size};
    p.bp_layout = convert_sp_to_bp(sp);
  } else {
    for (const meta::StackVar &v : fn.stack)
      p.bp_layout[v.name] = v.offset;
  }
  if (p.bp_layout.empty())
    return p;

  std::vector<std::pair<std::string, i64>> order(p.bp_layout.begin(), p.bp_layout.end());
  std::sort(order.begin(), order.end(), [](auto &a, auto &b) { return a.second < b.second; });
  p.anchor_offset = order.front().second;
  u64 prev_end = 0;
  for (auto &[name, off] : order) {
    u64 fo = u64(off - p.anchor_offset);
    if (fo < prev_end)
      fail(ErrorKind::OverlapError, fn.name + ": '" + name + "' overlaps the previous slot");
    p.slots.push_back({name, fo, sizes[name], fo - prev_end});
    prev_end = fo + sizes[name];
  }
  p.frame_bytes = prev_end;
  return p;
}

std::string frame_struct_name(const std::string &fn) { return "scribe_frame_" + fn; }

namespace {

std::string storage_free(const std::string &spec) {
  std::string out;
  size_t p = 0;
  while (p <= spec.size()) {
    size_t q = spec.find(' ', p);
    if (q == std::string::npos)
      q = spec.size();
    std::string w = spec.substr(p, q - p);
    if (!w.empty() && w != "register" && w != "auto")
      out += (out.empty() ? "" : " ") + w;
    p = q + 1;
  }
  return out;
}

struct Local {
  const Declaration *decl;
  const Declarator *dc;
};

} // namespace

TransformedSource apply_pinning(const fixer::DecompUnit &unit, const PinnedFramePlan &plan,
                                const std::vector<std::string> &extra_typedefs) {
  TransformedSource out;
  out.plan = plan;
  if (plan.slots.empty()) {
    out.source_text = unit.source_text;
    return out;
  }

  Tokens t = lex(unit.source_text);
  TypeNames types = TypeNames::defaults();
  for (const std::string &l : extra_typedefs)
    types.add_typedef_line(l);
  types.add_typedefs_from(t);

  const std::string &fname = plan.function_name;
  std::vector<FunctionSig> sigs = scan_functions(t, types);
  auto fit = std::find_if(sigs.begin(), sigs.end(),
                          [&](const FunctionSig &s) { return s.name == fname && s.body_open != npos; });
  if (fit == sigs.end())
    fail(ErrorKind::ParseFailure, "no definition of '" + fname + "' in the decompiled unit");
  const FunctionSig &fn = *fit;

  std::vector<Declaration> decls = scan_local_declarations(t, fn.body_open, fn.body_close, types);
  std::map<std::string, std::vector<Local>> locals;
  for (const Declaration &d : decls)
    for (const Declarator &dc : d.declarators)
      locals[dc.name].push_back({&d, &dc});

  std::map<std::string, std::string> member_decl;
  std::map<std::string, std::string> abstract_type;
  for (const FrameSlot &s : plan.slots) {
    auto it = locals.find(s.var_name);
    if (it == locals.end()) {
      bool is_param = std::any_of(fn.params.begin(), fn.params.end(), [&](auto &p) { return p.first == s.var_name; });
      fail(ErrorKind::UndeclaredPinnedVar,
           fname + ": '" + s.var_name + "' " + (is_param ? "is a parameter and cannot be pinned" : "is not declared locally"));
    }
    if (it->second.size() > 1)
      fail(ErrorKind::RedeclaredPinnedVar, fname + ": '" + s.var_name + "' is declared more than once");
    const Declaration &d = *it->second[0].decl;
    const Declarator &dc = *it->second[0].dc;
    if (d.specifiers.find("static") != std::string::npos || d.specifiers.find("extern") != std::string::npos)
      fail(ErrorKind::InvalidArgument, fname + ": '" + s.var_name + "' is not an automatic variable");
    std::string spec = storage_free(d.specifiers);
    member_decl[s.var_name] = spec + " " + render_range(t, dc.begin, dc.end);
    std::string abs = spec + (dc.pointer.empty() ? "" : " " + dc.pointer);
    for (const std::string &dim : dc.dims)
      abs += "[" + dim + "]";
    abstract_type[s.var_name] = abs;
  }

  const std::string sname = frame_struct_name(fname);
  const std::string frame = "__scribe_frame";

  // Token replacements: index -> new text; ranges to drop.
  std::map<size_t, std::string> replace;
  std::vector<std::pair<size_t, size_t>> dropped; // inclusive

  for (const Declaration &d : decls) {
    bool any = std::any_of(d.declarators.begin(), d.declarators.end(),
                           [&](const Declarator &dc) { return member_decl.count(dc.name); });
    if (!any)
      continue;
    bool in_for = d.begin > 0 && t[d.begin - 1].is("(");
    std::string spec_text = render_range(t, d.begin, d.spec_end);
    std::vector<std::string> parts;
    for (const Declarator &dc : d.declarators) {
      std::string init = dc.init ? render_range(t, dc.init->first, dc.init->second) : "";
      if (!member_decl.count(dc.name)) {
        if (in_for)
          fail(ErrorKind::LayoutInfeasible, fname + ": cannot split the for-loop declaration of '" + dc.name + "'");
        parts.push_back(spec_text + " " + render_range(t, dc.begin, dc.end) + (dc.init ? " = " + init : "") + ";");
        continue;
      }
      if (!dc.init)
        continue;
      std::string lit = init.front() == '{' ? init : "{" + init + "}";
      std::string field = frame + "." + dc.name;
      parts.push_back("__builtin_memcpy(&" + field + ", &(" + abstract_type[dc.name] + ")" + lit + ", sizeof(" +
                      field + "))" + (in_for ? "" : ";"));
    }
    std::string text;
    for (size_t k = 0; k < parts.size(); k++)
      text += (k ? (in_for ? ", " : " ") : "") + parts[k];
    if (in_for && text.empty())
      text = "(void)0";
    // d.end is the ';'. In a for header the ';' stays.
    size_t last = in_for ? d.end - 1 : d.end;
    replace[d.begin] = text;
    if (last > d.begin)
      dropped.emplace_back(d.begin + 1, last);
  }

  auto in_dropped = [&](size_t i) {
    for (auto [b, e] : dropped)
      if (i >= b && i <= e)
        return true;
    return false;
  };

  // Rewrite uses outside the replaced declarations.
  for (size_t i = fn.body_open + 1; i < fn.body_close; i++) {
    if (replace.count(i) || in_dropped(i))
      continue;
    if (!t[i].ident() || !member_decl.count(t[i].text))
      continue;
    if (t[i - 1].is(".") || t[i - 1].is("->"))
      continue;
    if (t[i + 1].is(":") && (t[i - 1].is(";") || t[i - 1].is("{") || t[i - 1].is("}")))
      continue; // label
    replace[i] = frame + "." + t[i].text;
  }

  // Initializers that mention pinned names: rewrite inside the generated text.
  for (auto &[idx, text] : replace) {
    if (text.rfind(frame + ".", 0) == 0 && text.find(' ') == std::string::npos)
      continue;
    Tokens inner = lex(text);
    for (size_t k = 0; k < inner.size(); k++) {
      if (!inner[k].ident() || !member_decl.count(inner[k].text))
        continue;
      if (k > 0 && (inner[k - 1].is(".") || inner[k - 1].is("->")))
        continue;
      inner[k].text = frame + "." + inner[k].text;
    }
    text = render(inner);
  }

  std::string frame_struct = "struct __attribute__((packed)) " + sname + " {\n";
  int pad = 0;
  for (const FrameSlot &s : plan.slots) {
    if (s.pad_before)
      frame_struct += "  unsigned char __scribe_pad_" + std::to_string(pad++) + "[" + std::to_string(s.pad_before) + "];\n";
    frame_struct += "  " + member_decl[s.var_name] + ";\n";
  }
  frame_struct += "};\n\n";

  for (const FrameSlot &s : plan.slots) {
    out.assertions.push_back("_Static_assert(__builtin_offsetof(struct " + sname + ", " + s.var_name + ") == " +
                             std::to_string(s.frame_offset) + ", \"scribe-layout: " + fname + "." + s.var_name +
                             " must sit at frame offset " + std::to_string(s.frame_offset) + "\");");
    out.assertions.push_back("_Static_assert(sizeof(((struct " + sname + " *)0)->" + s.var_name + ") == " +
                             std::to_string(s.size) + ", \"scribe-layout: " + fname + "." + s.var_name +
                             " must be " + std::to_string(s.size) + " bytes\");");
  }
  out.assertions.push_back("_Static_assert(sizeof(struct " + sname + ") == " + std::to_string(plan.frame_bytes) +
                           ", \"scribe-layout: " + fname + " frame must be " + std::to_string(plan.frame_bytes) +
                           " bytes\");");

  std::string result;
  for (size_t i = 0; i < t.size(); i++) {
    const Token &tk = t[i];
    if (in_dropped(i))
      continue;
    if (i == fn.stmt_begin) {
      result += tk.lead;
      result += frame_struct;
      result += replace.count(i) ? replace[i] : tk.text;
      continue;
    }
    result += tk.lead;
    result += replace.count(i) ? replace[i] : tk.text;
    if (i == fn.body_open)
      result += "\n  struct " + sname + " " + frame + " __attribute__((aligned(16)));";
    if (i == fn.body_close) {
      result += "\n";
      for (const std::string &a : out.assertions)
        result += "\n" + a;
      result += "\n";
    }
  }
  out.source_text = result;
  return out;
}

std::string plan_report_json(const PinnedFramePlan &p) {
  nlohmann::json j;
  j["function"] = p.function_name;
  j["frame_bytes"] = p.frame_bytes;
  j["anchor_offset"] = p.anchor_offset;
  j["slots"] = nlohmann::json::array();
  for (const FrameSlot &s : p.slots)
    j["slots"].push_back({{"var", s.var_name},
                          {"frame_offset", s.frame_offset},
                          {"size", s.size},
                          {"pad_before", s.pad_before},
                          {"bp_offset", p.bp_layout.at(s.var_name)}});
  return j.dump(2) + "\n";
}

} // namespace scribe::layout
