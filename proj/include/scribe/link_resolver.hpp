#pragma once

#include "scribe/binary_metadata.hpp"
#include "scribe/bytes.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

// Links one relocatable object against addresses from the original binary.
namespace scribe::link {

enum class SectionKind { text, rodata, data, bss };

enum class RelocType { PC32, PLT32, ABS64, ABS32S };

struct InputSection {
  std::string name;
  SectionKind kind = SectionKind::text;
  u32 index = 0; // section header index in the object
  u64 flags = 0;
  u64 align = 1;
  u64 size = 0;
  Bytes bytes; // empty for bss
};

struct ObjSymbol {
  std::string name;
  u32 shndx = 0;
  u64 value = 0;
  u64 size = 0;
  u8 bind = 0;
  u8 type = 0;

  bool defined() const;
  bool weak() const;
};

struct RelocationRecord {
  u32 section = 0; // index of the patched section in the object
  u64 site_offset = 0;
  RelocType type = RelocType::PC32;
  u32 symbol = 0; // index into RelocatableObject::symbols
  i64 addend = 0;
};

struct RelocatableObject {
  std::vector<InputSection> sections; // only allocatable text/rodata/data/bss
  std::vector<ObjSymbol> symbols;     // full symbol table, index 0 is null
  std::vector<RelocationRecord> relocations;

  const InputSection *section(u32 index) const;
  std::vector<std::string> defined_globals() const;
  std::vector<std::string> undefined_symbols() const;
};

RelocatableObject parse_object(std::span<const u8> bytes);

std::string to_string(RelocType t);

// Patches one relocation site in place. `site` must have room for the field.
void apply_relocation(RelocType type, u8 *site, u64 S, i64 A, u64 P);

// Linker symbol script ("name = 0xADDR;" per line, sorted). got_slot
// entries are emitted under got_symbol_name().
std::string emit_symbol_script(const meta::SymbolMap &symbols);
std::string got_symbol_name(const std::string &name);

enum class ItemKind { jump_table, string_literal, constant, global };

struct BlobItem {
  std::string section;
  ItemKind kind = ItemKind::constant;
  bool in_code = false;
  u64 offset = 0;
  u64 size = 0;
};

struct LinkedBlob {
  u64 code_vaddr = 0;
  Bytes code;
  u64 data_vaddr = 0;
  Bytes data;
  std::map<std::string, u64> entry_offsets; // global function -> offset in code
  std::vector<BlobItem> items;
  std::map<std::string, u64> stubs; // external name -> stub offset in code
  size_t patched_sites = 0;
  size_t absolute_sites = 0; // ABS64 / 32S sites; these pin the blob to its link address
};

// emitted name -> name the decompiler used (for @plt style renames)
using RenameMap = std::map<std::string, std::string>;

enum class Backend { internal, external };

// Resolution target of one undefined symbol.
struct Binding {
  enum Kind { address, got_stub, weak_zero } kind = address;
  u64 vaddr = 0; // target address, or the GOT slot for got_stub
};

Binding bind_symbol(const std::string &name, bool weak, const meta::SymbolMap &symbols, const RenameMap &renames);

LinkedBlob resolve(const RelocatableObject &obj, const meta::SymbolMap &symbols, u64 code_vaddr,
                   u64 data_vaddr, const RenameMap &renames = {});

// Same contract, implemented by driving the system assembler and linker with
// a generated linker script.
LinkedBlob resolve_external(const std::string &object_path, const RelocatableObject &obj,
                            const meta::SymbolMap &symbols, u64 code_vaddr, u64 data_vaddr,
                            const RenameMap &renames, const std::string &work_dir);

std::string manifest_json(const LinkedBlob &blob);
void write_blob(const LinkedBlob &blob, const std::string &dir);
LinkedBlob read_blob(const std::string &dir);

std::string to_string(ItemKind k);

} // namespace scribe::link
