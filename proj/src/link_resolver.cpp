#include "scribe/link_resolver.hpp"
#include "scribe/elf_image.hpp"
#include "scribe/error.hpp"
#include "scribe/process.hpp"

#include <algorithm>
#include <elf.h>
#include <filesystem>
#include <json.hpp>
#include <limits>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace scribe::link {

bool ObjSymbol::defined() const { return shndx != SHN_UNDEF; }
bool ObjSymbol::weak() const { return bind == STB_WEAK; }

const InputSection *RelocatableObject::section(u32 index) const {
  for (const InputSection &s : sections)
    if (s.index == index)
      return &s;
  return nullptr;
}

std::vector<std::string> RelocatableObject::defined_globals() const {
  std::vector<std::string> out;
  for (const ObjSymbol &s : symbols)
    if (s.defined() && (s.bind == STB_GLOBAL || s.bind == STB_WEAK) && !s.name.empty())
      out.push_back(s.name);
  return out;
}

std::vector<std::string> RelocatableObject::undefined_symbols() const {
  std::set<std::string> out;
  for (const RelocationRecord &r : relocations) {
    const ObjSymbol &s = symbols.at(r.symbol);
    if (!s.defined() && !s.name.empty())
      out.insert(s.name);
  }
  return {out.begin(), out.end()};
}

std::string to_string(RelocType t) {
  switch (t) {
  case RelocType::PC32: return "R_X86_64_PC32";
  case RelocType::PLT32: return "R_X86_64_PLT32";
  case RelocType::ABS64: return "R_X86_64_64";
  case RelocType::ABS32S: return "R_X86_64_32S";
  }
  return "?";
}

std::string to_string(ItemKind k) {
  switch (k) {
  case ItemKind::jump_table: return "jump_table";
  case ItemKind::string_literal: return "string_literal";
  case ItemKind::constant: return "constant";
  case ItemKind::global: return "global";
  }
  return "?";
}

namespace {

std::string reloc_type_name(u32 type) {
  static const std::map<u32, std::string> names = {
      {R_X86_64_64, "R_X86_64_64"},           {R_X86_64_PC32, "R_X86_64_PC32"},
      {R_X86_64_GOT32, "R_X86_64_GOT32"},     {R_X86_64_PLT32, "R_X86_64_PLT32"},
      {R_X86_64_COPY, "R_X86_64_COPY"},       {R_X86_64_GLOB_DAT, "R_X86_64_GLOB_DAT"},
      {R_X86_64_JUMP_SLOT, "R_X86_64_JUMP_SLOT"}, {R_X86_64_RELATIVE, "R_X86_64_RELATIVE"},
      {R_X86_64_GOTPCREL, "R_X86_64_GOTPCREL"}, {R_X86_64_32, "R_X86_64_32"},
      {R_X86_64_32S, "R_X86_64_32S"},         {R_X86_64_16, "R_X86_64_16"},
      {R_X86_64_PC16, "R_X86_64_PC16"},       {R_X86_64_8, "R_X86_64_8"},
      {R_X86_64_PC8, "R_X86_64_PC8"},         {R_X86_64_DTPMOD64, "R_X86_64_DTPMOD64"},
      {R_X86_64_DTPOFF64, "R_X86_64_DTPOFF64"}, {R_X86_64_TPOFF64, "R_X86_64_TPOFF64"},
      {R_X86_64_TLSGD, "R_X86_64_TLSGD"},     {R_X86_64_TLSLD, "R_X86_64_TLSLD"},
      {R_X86_64_DTPOFF32, "R_X86_64_DTPOFF32"}, {R_X86_64_GOTTPOFF, "R_X86_64_GOTTPOFF"},
      {R_X86_64_TPOFF32, "R_X86_64_TPOFF32"}, {R_X86_64_PC64, "R_X86_64_PC64"},
      {R_X86_64_GOTOFF64, "R_X86_64_GOTOFF64"}, {R_X86_64_GOTPC32, "R_X86_64_GOTPC32"},
      {R_X86_64_SIZE32, "R_X86_64_SIZE32"},   {R_X86_64_SIZE64, "R_X86_64_SIZE64"},
      {R_X86_64_GOTPCRELX, "R_X86_64_GOTPCRELX"}, {R_X86_64_REX_GOTPCRELX, "R_X86_64_REX_GOTPCRELX"}};
  auto it = names.find(type);
  return it != names.end() ? it->second : "type " + std::to_string(type);
}

struct RawSection {
  Elf64_Shdr h;
  std::string name;
};

std::string cstr(std::span<const u8> b, u64 off, u64 limit) {
  u64 end = off;
  while (end < limit && end < b.size() && b[end])
    end++;
  if (off >= end)
    return {};
  return std::string(reinterpret_cast<const char *>(b.data() + off), end - off);
}

bool keep_section(const RawSection &s) {
  if (!(s.h.sh_flags & SHF_ALLOC))
    return false;
  if (s.h.sh_type == SHT_NOTE || s.h.sh_type == SHT_X86_64_UNWIND || s.h.sh_type == SHT_GROUP)
    return false;
  if (s.name == ".eh_frame" || s.name.rfind(".note", 0) == 0)
    return false;
  return s.h.sh_type == SHT_PROGBITS || s.h.sh_type == SHT_NOBITS || s.h.sh_type == SHT_INIT_ARRAY ||
         s.h.sh_type == SHT_FINI_ARRAY;
}

} // namespace

RelocatableObject parse_object(std::span<const u8> b) {
  if (b.size() < sizeof(Elf64_Ehdr) || std::memcmp(b.data(), ELFMAG, SELFMAG) != 0)
    fail(ErrorKind::MalformedElf, "object is not an ELF file");
  Elf64_Ehdr eh;
  std::memcpy(&eh, b.data(), sizeof(eh));
  if (eh.e_ident[EI_CLASS] != ELFCLASS64 || eh.e_ident[EI_DATA] != ELFDATA2LSB || eh.e_machine != EM_X86_64)
    fail(ErrorKind::UnsupportedTarget, "object is not ELF64 x86-64");
  if (eh.e_type != ET_REL)
    fail(ErrorKind::UnsupportedTarget, "object is not ET_REL");
  if (eh.e_shentsize != sizeof(Elf64_Shdr) || eh.e_shoff == 0 ||
      eh.e_shoff + u64(eh.e_shnum) * sizeof(Elf64_Shdr) > b.size())
    fail(ErrorKind::MalformedElf, "object section header table out of range");

  std::vector<RawSection> raw(eh.e_shnum);
  for (u32 i = 0; i < eh.e_shnum; i++) {
    std::memcpy(&raw[i].h, b.data() + eh.e_shoff + i * sizeof(Elf64_Shdr), sizeof(Elf64_Shdr));
    const Elf64_Shdr &h = raw[i].h;
    if (h.sh_type != SHT_NOBITS && h.sh_offset + h.sh_size > b.size())
      fail(ErrorKind::MalformedElf, "object section " + std::to_string(i) + " out of range");
  }
  if (eh.e_shstrndx < raw.size()) {
    const Elf64_Shdr &str = raw[eh.e_shstrndx].h;
    for (RawSection &s : raw)
      s.name = cstr(b, str.sh_offset + s.h.sh_name, str.sh_offset + str.sh_size);
  }

  RelocatableObject obj;
  for (u32 i = 0; i < raw.size(); i++) {
    const RawSection &s = raw[i];
    if (s.h.sh_flags & SHF_TLS)
      fail(ErrorKind::UnsupportedTarget, "thread-local section " + s.name + " is not supported");
    if (!keep_section(s))
      continue;
    InputSection in;
    in.name = s.name;
    in.index = i;
    in.flags = s.h.sh_flags;
    in.align = std::max<u64>(1, s.h.sh_addralign);
    in.size = s.h.sh_size;
    if (s.h.sh_type == SHT_NOBITS)
      in.kind = SectionKind::bss;
    else if (s.h.sh_flags & SHF_EXECINSTR)
      in.kind = SectionKind::text;
    else if (s.h.sh_flags & SHF_WRITE)
      in.kind = SectionKind::data;
    else
      in.kind = SectionKind::rodata;
    if (in.kind != SectionKind::bss)
      in.bytes.assign(b.begin() + s.h.sh_offset, b.begin() + s.h.sh_offset + s.h.sh_size);
    obj.sections.push_back(std::move(in));
  }

  u32 symtab_index = 0;
  for (u32 i = 0; i < raw.size(); i++) {
    if (raw[i].h.sh_type != SHT_SYMTAB)
      continue;
    symtab_index = i;
    const Elf64_Shdr &h = raw[i].h;
    if (h.sh_entsize != sizeof(Elf64_Sym) || h.sh_link >= raw.size())
      fail(ErrorKind::MalformedElf, "bad symbol table");
    const Elf64_Shdr &str = raw[h.sh_link].h;
    for (u64 off = 0; off + sizeof(Elf64_Sym) <= h.sh_size; off += sizeof(Elf64_Sym)) {
      Elf64_Sym es;
      std::memcpy(&es, b.data() + h.sh_offset + off, sizeof(es));
      ObjSymbol s;
      s.name = cstr(b, str.sh_offset + es.st_name, str.sh_offset + str.sh_size);
      s.shndx = es.st_shndx;
      s.value = es.st_value;
      s.size = es.st_size;
      s.bind = ELF64_ST_BIND(es.st_info);
      s.type = ELF64_ST_TYPE(es.st_info);
      if (s.type == STT_SECTION && s.shndx < raw.size())
        s.name = raw[s.shndx].name;
      if (s.shndx == SHN_COMMON)
        fail(ErrorKind::UnsupportedTarget, "common symbol '" + s.name + "' (compile with -fno-common)");
      if (s.type == STT_TLS)
        fail(ErrorKind::UnsupportedTarget, "thread-local symbol '" + s.name + "' is not supported");
      obj.symbols.push_back(std::move(s));
    }
    break;
  }

  for (u32 i = 0; i < raw.size(); i++) {
    const Elf64_Shdr &h = raw[i].h;
    if (h.sh_type == SHT_REL)
      fail(ErrorKind::UnsupportedRelocation, "SHT_REL section " + raw[i].name + " (only RELA is used on x86-64)");
    if (h.sh_type != SHT_RELA)
      continue;
    const InputSection *target = obj.section(h.sh_info);
    if (!target)
      continue; // relocations for dropped sections such as .eh_frame
    if (h.sh_link != symtab_index)
      fail(ErrorKind::MalformedElf, "relocation section " + raw[i].name + " does not use the symbol table");
    for (u64 off = 0; off + sizeof(Elf64_Rela) <= h.sh_size; off += sizeof(Elf64_Rela)) {
      Elf64_Rela er;
      std::memcpy(&er, b.data() + h.sh_offset + off, sizeof(er));
      u32 type = ELF64_R_TYPE(er.r_info);
      RelocationRecord r;
      switch (type) {
      case R_X86_64_NONE: continue;
      case R_X86_64_PC32: r.type = RelocType::PC32; break;
      case R_X86_64_PLT32: r.type = RelocType::PLT32; break;
      case R_X86_64_64: r.type = RelocType::ABS64; break;
      case R_X86_64_32S: r.type = RelocType::ABS32S; break;
      default:
        fail(ErrorKind::UnsupportedRelocation,
             reloc_type_name(type) + " at " + raw[h.sh_info].name + "+" + hex(er.r_offset));
      }
      r.section = h.sh_info;
      r.site_offset = er.r_offset;
      r.symbol = ELF64_R_SYM(er.r_info);
      r.addend = er.r_addend;
      if (r.symbol >= obj.symbols.size())
        fail(ErrorKind::MalformedElf, "relocation references symbol index out of range");
      u64 width = r.type == RelocType::ABS64 ? 8 : 4;
      if (r.site_offset + width > target->size)
        fail(ErrorKind::MalformedElf, "relocation site outside " + target->name);
      obj.relocations.push_back(r);
    }
  }
  return obj;
}

void apply_relocation(RelocType type, u8 *site, u64 S, i64 A, u64 P) {
  switch (type) {
  case RelocType::PC32:
  case RelocType::PLT32: {
    i64 v = i64(S + u64(A) - P);
    if (v < std::numeric_limits<i32>::min() || v > std::numeric_limits<i32>::max())
      fail(ErrorKind::RelocOverflow, to_string(type) + " at " + hex(P) + ": displacement to " + hex(S) +
                                         " does not fit in 32 bits");
    store_le<i32>(site, i32(v));
    return;
  }
  case RelocType::ABS64:
    store_le<u64>(site, S + u64(A));
    return;
  case RelocType::ABS32S: {
    i64 v = i64(S + u64(A));
    if (v < std::numeric_limits<i32>::min() || v > std::numeric_limits<i32>::max())
      fail(ErrorKind::RelocOverflow, to_string(type) + " at " + hex(P) + ": value " + hex(u64(v)) +
                                         " is not a sign-extended 32-bit quantity");
    store_le<i32>(site, i32(v));
    return;
  }
  }
}

std::string got_symbol_name(const std::string &name) { return "__scribe_got_" + name; }

std::string emit_symbol_script(const meta::SymbolMap &symbols) {
  if (symbols.empty())
    fail(ErrorKind::InvalidArgument, "symbol map is empty");
  std::vector<std::pair<std::string, u64>> lines;
  for (const meta::SymbolEntry &e : symbols.entries())
    lines.emplace_back(e.kind == meta::SymbolKind::got_slot ? got_symbol_name(e.name) : e.name, e.vaddr);
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (auto &[name, addr] : lines)
    out += name + " = " + hex(addr) + ";\n";
  return out;
}

namespace {

std::string strip_suffix(const std::string &name) {
  size_t at = name.find('@');
  return at != std::string::npos && at > 0 ? name.substr(0, at) : name;
}

const meta::SymbolEntry *direct(const meta::SymbolMap &m, const std::string &name) {
  if (auto *e = m.find(name, meta::SymbolKind::function))
    return e;
  return m.find(name, meta::SymbolKind::object);
}

} // namespace

Binding bind_symbol(const std::string &name, bool weak, const meta::SymbolMap &symbols, const RenameMap &renames) {
  if (auto *e = direct(symbols, name))
    return {Binding::address, e->vaddr};
  auto r = renames.find(name);
  std::string orig = strip_suffix(r != renames.end() ? r->second : name);
  if (auto *e = direct(symbols, orig))
    return {Binding::address, e->vaddr};
  if (auto *e = symbols.find(orig, meta::SymbolKind::got_slot))
    return {Binding::got_stub, e->vaddr};
  if (weak)
    return {Binding::weak_zero, 0};
  fail(ErrorKind::UnresolvedSymbol, "'" + name + "' is not defined in the object or the original binary");
}

namespace {

struct Placement {
  bool in_code = true;
  u64 offset = 0;
};

struct Layout {
  std::map<u32, Placement> where; // section index
  u64 code_size = 0;
  u64 data_size = 0;
  u64 stubs_offset = 0;
  std::vector<std::string> stub_names; // sorted
  std::map<std::string, Binding> bindings;
};

constexpr u64 STUB_SIZE = 6;
constexpr u8 CODE_FILL = 0xcc;

Layout compute_layout(const RelocatableObject &obj, const meta::SymbolMap &symbols, u64 code_vaddr,
                      u64 data_vaddr, const RenameMap &renames) {
  Layout L;
  u64 cur = 0;
  auto place = [&](SectionKind kind, bool code, u64 base, u64 &cursor) {
    for (const InputSection &s : obj.sections) {
      if (s.kind != kind)
        continue;
      u64 off = align_up(base + cursor, s.align) - base;
      L.where[s.index] = {code, off};
      cursor = off + s.size;
    }
  };
  place(SectionKind::text, true, code_vaddr, cur);
  place(SectionKind::rodata, true, code_vaddr, cur);

  for (const RelocationRecord &r : obj.relocations) {
    const ObjSymbol &s = obj.symbols[r.symbol];
    if (s.defined() || L.bindings.count(s.name))
      continue;
    L.bindings[s.name] = bind_symbol(s.name, s.weak(), symbols, renames);
  }
  for (auto &[name, b] : L.bindings)
    if (b.kind == Binding::got_stub)
      L.stub_names.push_back(name);
  if (!L.stub_names.empty()) {
    L.stubs_offset = align_up(code_vaddr + cur, 8) - code_vaddr;
    cur = L.stubs_offset + STUB_SIZE * L.stub_names.size();
  }
  L.code_size = cur;

  u64 dcur = 0;
  place(SectionKind::data, false, data_vaddr, dcur);
  place(SectionKind::bss, false, data_vaddr, dcur);
  L.data_size = dcur;
  return L;
}

bool targets_code(const RelocatableObject &obj, const RelocationRecord &r) {
  const ObjSymbol &s = obj.symbols[r.symbol];
  const InputSection *sec = s.defined() ? obj.section(s.shndx) : nullptr;
  return sec && sec->kind == SectionKind::text;
}

std::vector<BlobItem> classify_items(const RelocatableObject &obj, const std::map<u32, Placement> &where) {
  std::vector<BlobItem> out;
  for (const InputSection &s : obj.sections) {
    if (s.kind == SectionKind::text)
      continue;
    BlobItem it;
    it.section = s.name;
    it.in_code = where.at(s.index).in_code;
    it.offset = where.at(s.index).offset;
    it.size = s.size;
    if (s.kind == SectionKind::data || s.kind == SectionKind::bss) {
      it.kind = ItemKind::global;
    } else if ((s.flags & SHF_STRINGS) || s.name.rfind(".rodata.str", 0) == 0) {
      it.kind = ItemKind::string_literal;
    } else {
      bool table = std::any_of(obj.relocations.begin(), obj.relocations.end(), [&](const RelocationRecord &r) {
        return r.section == s.index && targets_code(obj, r);
      });
      it.kind = table ? ItemKind::jump_table : ItemKind::constant;
    }
    out.push_back(it);
  }
  return out;
}

size_t count_absolute(const RelocatableObject &obj) {
  return std::count_if(obj.relocations.begin(), obj.relocations.end(), [](const RelocationRecord &r) {
    return r.type == RelocType::ABS64 || r.type == RelocType::ABS32S;
  });
}

void check_ranges(u64 code_vaddr, u64 code_size, u64 data_vaddr, u64 data_size) {
  if (code_vaddr + code_size < code_vaddr || data_vaddr + data_size < data_vaddr)
    fail(ErrorKind::AddressSpaceExhausted, "blob wraps the address space");
  if (code_size && data_size && code_vaddr < data_vaddr + data_size && data_vaddr < code_vaddr + code_size)
    fail(ErrorKind::OverlapError, "code range " + hex(code_vaddr) + "+" + hex(code_size) + " overlaps data range " +
                                      hex(data_vaddr) + "+" + hex(data_size));
}

} // namespace

LinkedBlob resolve(const RelocatableObject &obj, const meta::SymbolMap &symbols, u64 code_vaddr, u64 data_vaddr,
                   const RenameMap &renames) {
  Layout L = compute_layout(obj, symbols, code_vaddr, data_vaddr, renames);
  check_ranges(code_vaddr, L.code_size, data_vaddr, L.data_size);

  LinkedBlob blob;
  blob.code_vaddr = code_vaddr;
  blob.data_vaddr = data_vaddr;
  blob.code.assign(L.code_size, CODE_FILL);
  blob.data.assign(L.data_size, 0);

  for (const InputSection &s : obj.sections) {
    const Placement &p = L.where.at(s.index);
    Bytes &dst = p.in_code ? blob.code : blob.data;
    if (s.kind != SectionKind::bss)
      std::copy(s.bytes.begin(), s.bytes.end(), dst.begin() + p.offset);
  }

  auto section_addr = [&](u32 idx) {
    const Placement &p = L.where.at(idx);
    return (p.in_code ? code_vaddr : data_vaddr) + p.offset;
  };

  for (size_t k = 0; k < L.stub_names.size(); k++) {
    u64 off = L.stubs_offset + k * STUB_SIZE;
    const std::string &name = L.stub_names[k];
    blob.stubs[name] = off;
    blob.code[off] = 0xff;
    blob.code[off + 1] = 0x25;
    apply_relocation(RelocType::PC32, blob.code.data() + off + 2, L.bindings[name].vaddr, -4,
                     code_vaddr + off + 2);
    blob.patched_sites++;
  }

  for (const RelocationRecord &r : obj.relocations) {
    const ObjSymbol &sym = obj.symbols[r.symbol];
    u64 S;
    if (sym.shndx == SHN_ABS) {
      S = sym.value;
    } else if (sym.defined()) {
      if (!L.where.count(sym.shndx))
        fail(ErrorKind::MalformedElf, "symbol '" + sym.name + "' lives in a discarded section");
      S = section_addr(sym.shndx) + (sym.type == STT_SECTION ? 0 : sym.value);
    } else {
      const Binding &b = L.bindings.at(sym.name);
      S = b.kind == Binding::got_stub ? code_vaddr + blob.stubs.at(sym.name) : b.vaddr;
    }
    const Placement &p = L.where.at(r.section);
    Bytes &dst = p.in_code ? blob.code : blob.data;
    apply_relocation(r.type, dst.data() + p.offset + r.site_offset, S, r.addend, section_addr(r.section) + r.site_offset);
    blob.patched_sites++;
  }

  for (const ObjSymbol &s : obj.symbols) {
    if (s.type != STT_FUNC || !s.defined() || !L.where.count(s.shndx) || !L.where.at(s.shndx).in_code)
      continue;
    u64 off = L.where.at(s.shndx).offset + s.value;
    auto it = blob.entry_offsets.find(s.name);
    if (it == blob.entry_offsets.end() || s.bind != STB_LOCAL)
      blob.entry_offsets[s.name] = off;
  }
  blob.items = classify_items(obj, L.where);
  blob.absolute_sites = count_absolute(obj);
  return blob;
}

LinkedBlob resolve_external(const std::string &object_path, const RelocatableObject &obj,
                            const meta::SymbolMap &symbols, u64 code_vaddr, u64 data_vaddr,
                            const RenameMap &renames, const std::string &work_dir) {
  Layout L = compute_layout(obj, symbols, code_vaddr, data_vaddr, renames);
  check_ranges(code_vaddr, L.code_size, data_vaddr, L.data_size);
  fs::create_directories(work_dir);
  fs::copy_file(object_path, fs::path(work_dir) / "obj.o", fs::copy_options::overwrite_existing);

  std::ostringstream script;
  script << "PHDRS { code PT_LOAD; data PT_LOAD; }\n";
  script << "SECTIONS\n{\n  .scribe.code " << hex(code_vaddr) << " : {\n";
  auto emit = [&](SectionKind kind) {
    for (const InputSection &s : obj.sections) {
      if (s.kind != kind)
        continue;
      script << "    . = ALIGN(" << s.align << ");\n";
      script << "    __scribe_sec_" << s.index << " = .;\n";
      script << "    \"obj.o\"(" << s.name << ")\n";
    }
  };
  emit(SectionKind::text);
  emit(SectionKind::rodata);
  if (!L.stub_names.empty())
    script << "    . = ALIGN(8);\n    \"stubs.o\"(.text.scribe_stubs)\n";
  script << "  } :code =0xcccccccc\n";
  script << "  .scribe.data " << hex(data_vaddr) << " : {\n";
  emit(SectionKind::data);
  emit(SectionKind::bss);
  script << "  } :data =0\n";
  script << "  /DISCARD/ : { *(*) }\n}\n";
  for (auto &[name, b] : L.bindings) {
    if (b.kind == Binding::address)
      script << name << " = " << hex(b.vaddr) << ";\n";
    else if (b.kind == Binding::weak_zero)
      script << name << " = 0;\n";
    else
      script << got_symbol_name(name) << " = " << hex(b.vaddr) << ";\n";
  }
  write_text_file((fs::path(work_dir) / "link.ld").string(), script.str());

  std::vector<std::string> ld = {"ld", "-static", "-nostdlib", "--no-relax", "--build-id=none",
                                 "-z", "noexecstack", "-e", hex(code_vaddr), "-T", "link.ld",
                                 "-o", "out.elf", "obj.o"};
  if (!L.stub_names.empty()) {
    std::ostringstream s;
    s << "\t.section .text.scribe_stubs,\"ax\",@progbits\n\t.p2align 3\n";
    for (const std::string &name : L.stub_names)
      s << "\t.globl " << name << "\n\t.type " << name << ",@function\n"
        << name << ":\n\tjmp *" << got_symbol_name(name) << "(%rip)\n";
    write_text_file((fs::path(work_dir) / "stubs.s").string(), s.str());
    ProcessResult as = run_process({"as", "--64", "-o", "stubs.o", "stubs.s"}, work_dir);
    if (!as.ok())
      fail(ErrorKind::ToolchainFailed, "as failed: " + as.err);
    ld.push_back("stubs.o");
  }
  ProcessResult r = run_process(ld, work_dir);
  if (!r.ok()) {
    if (r.err.find("relocation truncated") != std::string::npos)
      fail(ErrorKind::RelocOverflow, "ld: " + r.err);
    if (r.err.find("undefined reference") != std::string::npos)
      fail(ErrorKind::UnresolvedSymbol, "ld: " + r.err);
    fail(ErrorKind::ToolchainFailed, "ld failed (" + std::to_string(r.exit_code) + "): " + r.err);
  }

  elf::BinaryImage out = elf::parse(read_file((fs::path(work_dir) / "out.elf").string()));
  LinkedBlob blob;
  blob.code_vaddr = code_vaddr;
  blob.data_vaddr = data_vaddr;
  for (const elf::SectionHeader &s : *out.section_headers) {
    if (s.name != ".scribe.code" && s.name != ".scribe.data")
      continue;
    bool code = s.name == ".scribe.code";
    if (s.addr != (code ? code_vaddr : data_vaddr))
      fail(ErrorKind::ToolchainFailed, s.name + " linked at " + hex(s.addr));
    Bytes bytes = s.type == SHT_NOBITS ? Bytes(s.size, 0)
                                       : Bytes(out.raw_bytes.begin() + s.offset, out.raw_bytes.begin() + s.offset + s.size);
    (code ? blob.code : blob.data) = std::move(bytes);
  }

  std::map<u32, Placement> where;
  for (const elf::SymbolRecord &s : out.symbols) {
    if (s.name.rfind("__scribe_sec_", 0) == 0) {
      u32 idx = u32(std::stoul(s.name.substr(13)));
      const InputSection *in = obj.section(idx);
      bool code = in && (in->kind == SectionKind::text || in->kind == SectionKind::rodata);
      where[idx] = {code, s.value - (code ? code_vaddr : data_vaddr)};
      continue;
    }
    if (s.type() == STT_FUNC && s.value >= code_vaddr && s.value < code_vaddr + blob.code.size()) {
      if (std::binary_search(L.stub_names.begin(), L.stub_names.end(), s.name))
        blob.stubs[s.name] = s.value - code_vaddr;
      else if (!blob.entry_offsets.count(s.name) || s.bind() != STB_LOCAL)
        blob.entry_offsets[s.name] = s.value - code_vaddr;
    }
  }
  for (const InputSection &s : obj.sections)
    if (!where.count(s.index))
      fail(ErrorKind::ToolchainFailed, "ld dropped section " + s.name);
  blob.items = classify_items(obj, where);
  blob.patched_sites = obj.relocations.size() + L.stub_names.size();
  blob.absolute_sites = count_absolute(obj);
  return blob;
}

std::string manifest_json(const LinkedBlob &b) {
  nlohmann::json j;
  j["code_vaddr"] = hex(b.code_vaddr);
  j["code_size"] = b.code.size();
  j["data_vaddr"] = hex(b.data_vaddr);
  j["data_size"] = b.data.size();
  j["entry_offsets"] = nlohmann::json::object();
  for (auto &[n, o] : b.entry_offsets)
    j["entry_offsets"][n] = o;
  j["stubs"] = nlohmann::json::object();
  for (auto &[n, o] : b.stubs)
    j["stubs"][n] = o;
  j["items"] = nlohmann::json::array();
  for (const BlobItem &it : b.items)
    j["items"].push_back({{"section", it.section},
                          {"kind", to_string(it.kind)},
                          {"in_code", it.in_code},
                          {"offset", it.offset},
                          {"size", it.size}});
  j["patched_sites"] = b.patched_sites;
  j["absolute_sites"] = b.absolute_sites;
  return j.dump(2) + "\n";
}

void write_blob(const LinkedBlob &b, const std::string &dir) {
  fs::create_directories(dir);
  write_file((fs::path(dir) / "code.bin").string(), b.code);
  write_file((fs::path(dir) / "data.bin").string(), b.data);
  write_text_file((fs::path(dir) / "manifest.json").string(), manifest_json(b));
}

LinkedBlob read_blob(const std::string &dir) {
  LinkedBlob b;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file((fs::path(dir) / "manifest.json").string()));
    b.code_vaddr = parse_hex(j.at("code_vaddr").get<std::string>());
    b.data_vaddr = parse_hex(j.at("data_vaddr").get<std::string>());
    for (auto &[n, o] : j.at("entry_offsets").items())
      b.entry_offsets[n] = o.get<u64>();
    for (auto &[n, o] : j.at("stubs").items())
      b.stubs[n] = o.get<u64>();
    for (const auto &it : j.at("items")) {
      BlobItem item;
      item.section = it.at("section").get<std::string>();
      std::string k = it.at("kind").get<std::string>();
      item.kind = k == "jump_table" ? ItemKind::jump_table
                  : k == "string_literal" ? ItemKind::string_literal
                  : k == "global" ? ItemKind::global
                                  : ItemKind::constant;
      item.in_code = it.at("in_code").get<bool>();
      item.offset = it.at("offset").get<u64>();
      item.size = it.at("size").get<u64>();
      b.items.push_back(item);
    }
    b.patched_sites = j.value("patched_sites", size_t(0));
    b.absolute_sites = j.value("absolute_sites", size_t(0));
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorKind::SchemaError, std::string("blob manifest: ") + e.what());
  }
  b.code = read_file((fs::path(dir) / "code.bin").string());
  b.data = read_file((fs::path(dir) / "data.bin").string());
  if (b.code.size() != j.value("code_size", b.code.size()) || b.data.size() != j.value("data_size", b.data.size()))
    fail(ErrorKind::SchemaError, "blob sizes disagree with manifest");
  return b;
}

} // namespace scribe::link
