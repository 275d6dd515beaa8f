#pragma once

#include "scribe/bytes.hpp"
#include "scribe/elf_image.hpp"

#include <optional>
#include <string>
#include <vector>

namespace scribe::meta {

enum class FrameKind { bp_based, sp_based };

// offset is relative to the frame anchor: the frame pointer for bp-based
// functions, the pivot object for sp-based ones (nonnegative, upward).
struct StackVar {
  std::string name;
  i64 offset = 0;
  u64 size = 0;
};

struct FunctionMetadata {
  std::string name;
  u64 entry_vaddr = 0;
  u64 size = 0;
  FrameKind frame_kind = FrameKind::bp_based;
  std::vector<StackVar> stack;
  // sp-based only: names the listed variable at offset 0 that the other
  // offsets are measured from.
  std::optional<std::string> pivot;
};

enum class SymbolKind { function, object, got_slot };

struct SymbolEntry {
  std::string name;
  u64 vaddr = 0;
  SymbolKind kind = SymbolKind::function;
};

class SymbolMap {
public:
  // Throws SchemaError when (name, kind) is already bound to another address.
  void add(SymbolEntry e);
  const SymbolEntry *find(const std::string &name, SymbolKind kind) const;
  // Function/object binding first, then got_slot.
  const SymbolEntry *lookup(const std::string &name) const;

  const std::vector<SymbolEntry> &entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  size_t size() const { return entries_.size(); }

private:
  std::vector<SymbolEntry> entries_;
};

struct DefinitionsBundle {
  std::vector<std::string> typedef_lines;
  std::vector<std::string> macro_lines;
  std::vector<std::string> extern_prototypes;
};

struct Sidecar {
  std::string arch = "x86_64";
  std::vector<FunctionMetadata> functions;
  SymbolMap symbols;
  DefinitionsBundle definitions;

  const FunctionMetadata &function(const std::string &name) const;
};

Sidecar load_sidecar(const std::string &path);
Sidecar parse_sidecar(const std::string &json_text);
std::string serialize_sidecar(const Sidecar &sidecar);

// Checks one function's layout invariants; throws SchemaError.
void validate_function(const FunctionMetadata &fn);

SymbolMap extract_symbols(const elf::BinaryImage &image);

// Union of two maps. A name bound under the same kind in both must agree.
SymbolMap merge(const SymbolMap &a, const SymbolMap &b);

std::string to_string(SymbolKind kind);
std::string to_string(FrameKind kind);

} // namespace scribe::meta
