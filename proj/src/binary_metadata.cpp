#include "scribe/binary_metadata.hpp"
#include "scribe/error.hpp"

#include <algorithm>
#include <elf.h>
#include <json.hpp>
#include <set>

namespace scribe::meta {

using nlohmann::json;

std::string to_string(SymbolKind kind) {
  switch (kind) {
  case SymbolKind::function: return "function";
  case SymbolKind::object: return "object";
  case SymbolKind::got_slot: return "got_slot";
  }
  return "?";
}

std::string to_string(FrameKind kind) {
  return kind == FrameKind::bp_based ? "bp" : "sp";
}

void SymbolMap::add(SymbolEntry e) {
  if (e.name.empty())
    fail(ErrorKind::SchemaError, "symbol with empty name");
  if (e.vaddr == 0)
    fail(ErrorKind::SchemaError, "symbol '" + e.name + "' bound to address 0");
  if (const SymbolEntry *old = find(e.name, e.kind)) {
    if (old->vaddr != e.vaddr)
      fail(ErrorKind::SchemaError, "symbol '" + e.name + "' (" + to_string(e.kind) +
                                       ") bound to both " + hex(old->vaddr) + " and " + hex(e.vaddr));
    return;
  }
  entries_.push_back(std::move(e));
}

const SymbolEntry *SymbolMap::find(const std::string &name, SymbolKind kind) const {
  for (const SymbolEntry &e : entries_)
    if (e.kind == kind && e.name == name)
      return &e;
  return nullptr;
}

const SymbolEntry *SymbolMap::lookup(const std::string &name) const {
  if (auto *e = find(name, SymbolKind::function))
    return e;
  if (auto *e = find(name, SymbolKind::object))
    return e;
  return find(name, SymbolKind::got_slot);
}

const FunctionMetadata &Sidecar::function(const std::string &name) const {
  for (const FunctionMetadata &f : functions)
    if (f.name == name)
      return f;
  fail(ErrorKind::SchemaError, "sidecar has no function '" + name + "'");
}

void validate_function(const FunctionMetadata &fn) {
  std::string where = "function '" + fn.name + "': ";
  if (fn.name.empty())
    fail(ErrorKind::SchemaError, "function with empty name");
  if (fn.size == 0)
    fail(ErrorKind::SchemaError, where + "size must be > 0");
  if (fn.entry_vaddr == 0)
    fail(ErrorKind::SchemaError, where + "entry must be nonzero");

  std::set<std::string> names;
  for (const StackVar &v : fn.stack) {
    if (v.size == 0)
      fail(ErrorKind::SchemaError, where + "variable '" + v.name + "' has unknown size");
    if (!names.insert(v.name).second)
      fail(ErrorKind::SchemaError, where + "duplicate stack variable '" + v.name + "'");
    if (fn.frame_kind == FrameKind::sp_based && v.offset < 0)
      fail(ErrorKind::SchemaError, where + "sp-based offsets must be nonnegative");
  }

  std::vector<StackVar> sorted = fn.stack;
  std::sort(sorted.begin(), sorted.end(), [](auto &a, auto &b) { return a.offset < b.offset; });
  for (size_t i = 1; i < sorted.size(); i++)
    if (sorted[i - 1].offset + i64(sorted[i - 1].size) > sorted[i].offset)
      fail(ErrorKind::SchemaError, where + "stack variables '" + sorted[i - 1].name + "' and '" +
                                       sorted[i].name + "' overlap");

  if (fn.frame_kind == FrameKind::sp_based && !sorted.empty()) {
    if (fn.pivot) {
      auto it = std::find_if(sorted.begin(), sorted.end(), [&](auto &v) { return v.name == *fn.pivot; });
      if (it == sorted.end() || it->offset != 0)
        fail(ErrorKind::SchemaError, where + "pivot '" + *fn.pivot + "' must be a listed variable at offset 0");
    } else if (sorted.front().offset != 0) {
      fail(ErrorKind::SchemaError, where + "sp-based layout without a variable at offset 0 needs an explicit pivot");
    }
  }
}

namespace {

template <typename T> T require(const json &j, const char *key, const std::string &ctx) {
  if (!j.is_object() || !j.contains(key))
    fail(ErrorKind::SchemaError, ctx + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception &e) {
    fail(ErrorKind::SchemaError, ctx + ": field '" + key + "' has wrong type");
  }
}

std::vector<std::string> string_list(const json &j, const char *key) {
  if (!j.contains(key))
    return {};
  try {
    return j.at(key).get<std::vector<std::string>>();
  } catch (const json::exception &) {
    fail(ErrorKind::SchemaError, std::string("definitions.") + key + " must be a list of strings");
  }
}

SymbolKind parse_kind(const std::string &s) {
  if (s == "function")
    return SymbolKind::function;
  if (s == "object")
    return SymbolKind::object;
  if (s == "got_slot")
    return SymbolKind::got_slot;
  fail(ErrorKind::SchemaError, "unknown symbol kind '" + s + "'");
}

} // namespace

Sidecar parse_sidecar(const std::string &text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error &e) {
    fail(ErrorKind::SchemaError, std::string("sidecar is not valid JSON: ") + e.what());
  }
  if (!doc.is_object())
    fail(ErrorKind::SchemaError, "sidecar root must be an object");

  Sidecar sc;
  sc.arch = require<std::string>(doc, "arch", "sidecar");
  if (sc.arch != "x86_64")
    fail(ErrorKind::SchemaError, "unsupported arch '" + sc.arch + "'");

  if (!doc.contains("functions") || !doc["functions"].is_array())
    fail(ErrorKind::SchemaError, "sidecar: missing 'functions' array");
  for (const json &jf : doc["functions"]) {
    FunctionMetadata fn;
    fn.name = require<std::string>(jf, "name", "function");
    std::string ctx = "function '" + fn.name + "'";
    fn.entry_vaddr = parse_hex(require<std::string>(jf, "entry", ctx));
    i64 size = require<i64>(jf, "size", ctx);
    if (size <= 0)
      fail(ErrorKind::SchemaError, ctx + ": size must be > 0");
    fn.size = u64(size);
    std::string frame = require<std::string>(jf, "frame", ctx);
    if (frame == "bp")
      fn.frame_kind = FrameKind::bp_based;
    else if (frame == "sp")
      fn.frame_kind = FrameKind::sp_based;
    else
      fail(ErrorKind::SchemaError, ctx + ": frame must be \"bp\" or \"sp\"");
    if (jf.contains("pivot"))
      fn.pivot = require<std::string>(jf, "pivot", ctx);

    if (!jf.contains("stack") || !jf["stack"].is_array())
      fail(ErrorKind::SchemaError, ctx + ": missing 'stack' array");
    for (const json &jv : jf["stack"]) {
      StackVar v;
      v.name = require<std::string>(jv, "name", ctx + " stack entry");
      v.offset = require<i64>(jv, "offset", ctx + " stack entry '" + v.name + "'");
      i64 vsize = require<i64>(jv, "size", ctx + " stack entry '" + v.name + "'");
      if (vsize <= 0)
        fail(ErrorKind::SchemaError, ctx + ": variable '" + v.name + "' has unknown size");
      v.size = u64(vsize);
      fn.stack.push_back(std::move(v));
    }
    validate_function(fn);
    sc.functions.push_back(std::move(fn));
  }
  if (sc.functions.empty())
    fail(ErrorKind::EmptyMetadata, "sidecar lists no functions");

  if (doc.contains("symbols")) {
    if (!doc["symbols"].is_array())
      fail(ErrorKind::SchemaError, "'symbols' must be an array");
    for (const json &js : doc["symbols"]) {
      SymbolEntry e;
      e.name = require<std::string>(js, "name", "symbol");
      e.vaddr = parse_hex(require<std::string>(js, "addr", "symbol '" + e.name + "'"));
      e.kind = parse_kind(require<std::string>(js, "kind", "symbol '" + e.name + "'"));
      sc.symbols.add(std::move(e));
    }
  }

  if (doc.contains("definitions")) {
    const json &jd = doc["definitions"];
    if (!jd.is_object())
      fail(ErrorKind::SchemaError, "'definitions' must be an object");
    sc.definitions.typedef_lines = string_list(jd, "typedefs");
    sc.definitions.macro_lines = string_list(jd, "macros");
    sc.definitions.extern_prototypes = string_list(jd, "prototypes");
  }
  return sc;
}

Sidecar load_sidecar(const std::string &path) {
  return parse_sidecar(read_text_file(path));
}

std::string serialize_sidecar(const Sidecar &sc) {
  json doc;
  doc["arch"] = sc.arch;
  doc["functions"] = json::array();
  for (const FunctionMetadata &fn : sc.functions) {
    json jf;
    jf["name"] = fn.name;
    jf["entry"] = hex(fn.entry_vaddr);
    jf["size"] = fn.size;
    jf["frame"] = to_string(fn.frame_kind);
    if (fn.pivot)
      jf["pivot"] = *fn.pivot;
    jf["stack"] = json::array();
    for (const StackVar &v : fn.stack)
      jf["stack"].push_back({{"name", v.name}, {"offset", v.offset}, {"size", v.size}});
    doc["functions"].push_back(jf);
  }
  doc["symbols"] = json::array();
  for (const SymbolEntry &e : sc.symbols.entries())
    doc["symbols"].push_back({{"name", e.name}, {"addr", hex(e.vaddr)}, {"kind", to_string(e.kind)}});
  doc["definitions"] = {{"typedefs", sc.definitions.typedef_lines},
                        {"macros", sc.definitions.macro_lines},
                        {"prototypes", sc.definitions.extern_prototypes}};
  return doc.dump(2) + "\n";
}

SymbolMap extract_symbols(const elf::BinaryImage &image) {
  SymbolMap out;
  auto take = [&](bool dynamic) {
    for (const elf::SymbolRecord &s : image.symbols) {
      if (s.from_dynsym != dynamic || !s.defined() || s.shndx == SHN_ABS || s.value == 0 || s.name.empty())
        continue;
      if (s.bind() != STB_GLOBAL && s.bind() != STB_WEAK)
        continue;
      SymbolKind kind;
      if (s.type() == STT_FUNC)
        kind = SymbolKind::function;
      else if (s.type() == STT_OBJECT)
        kind = SymbolKind::object;
      else
        continue;
      if (out.find(s.name, kind))
        continue;
      out.add({s.name, s.value, kind});
    }
  };
  take(false);
  take(true);
  for (const elf::GotSlot &g : image.got_slots)
    if (!out.find(g.symbol_name, SymbolKind::got_slot))
      out.add({g.symbol_name, g.slot_vaddr, SymbolKind::got_slot});
  return out;
}

SymbolMap merge(const SymbolMap &a, const SymbolMap &b) {
  SymbolMap out = a;
  for (const SymbolEntry &e : b.entries())
    out.add(e);
  return out;
}

} // namespace scribe::meta
