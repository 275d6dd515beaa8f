#pragma once

#include "scribe/binary_metadata.hpp"

#include <map>
#include <string>
#include <vector>

// Source-to-source repairs that make decompiler output compile as C.
namespace scribe::fixer {

struct Diagnostic {
  std::string rule;
  size_t line = 0;
  size_t column = 0;
  std::string message;
};

struct DecompUnit {
  std::string source_text;
  std::string function_name;
  std::vector<std::string> applied_rules;
  std::vector<Diagnostic> diagnostics;
  // sanitized name -> name as the decompiler wrote it
  std::map<std::string, std::string> renames;
};

enum class CanaryMode { preserve, noop };

struct CompatHeader {
  std::string header_text;
};

// Rejects constructs the fixer cannot express (odd-width integer types).
DecompUnit check_dialect(DecompUnit unit);

DecompUnit normalize_names(DecompUnit unit);

// Moves misplaced array dimensions behind the declarator and strips
// calling-convention / register annotations.
DecompUnit fix_declarations_and_keywords(DecompUnit unit);

// bool -> scribe_bool, a one-byte type declared in the compat header.
DecompUnit rewrite_bool(DecompUnit unit);

// Casts the callee of calls whose use conflicts with the visible prototype.
// extra_prototypes are declarations visible to the unit (from the
// definitions bundle).
DecompUnit reconcile_prototypes(DecompUnit unit, const meta::SymbolMap &symbols,
                                const std::vector<std::string> &extra_prototypes = {},
                                const std::vector<std::string> &extra_typedefs = {});

// All rules in order.
DecompUnit run_fixer(DecompUnit unit, const meta::SymbolMap &symbols,
                     const meta::DefinitionsBundle &defs);

CompatHeader emit_compat_header(const meta::DefinitionsBundle &defs, CanaryMode mode);

// One JSON object per line.
std::string diagnostics_jsonl(const DecompUnit &unit);

// Name the decompiler wrote for a possibly sanitized identifier, with
// @plt/@got style suffixes dropped.
std::string original_symbol_name(const std::map<std::string, std::string> &renames, const std::string &name);

} // namespace scribe::fixer
