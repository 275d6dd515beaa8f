#include "scribe/elf_image.hpp"
#include "scribe/error.hpp"

#include <algorithm>
#include <elf.h>
#include <limits>

namespace scribe::elf {

namespace {

constexpr u64 EHDR_SIZE = sizeof(Elf64_Ehdr);
constexpr u64 PHDR_SIZE = sizeof(Elf64_Phdr);
constexpr u64 SHDR_SIZE = sizeof(Elf64_Shdr);
constexpr u64 PAGE_SIZE = 0x1000;
constexpr u64 MAX_USER_VADDR = u64(1) << 47;

bool range_ok(u64 off, u64 len, u64 size) {
  return off <= size && len <= size - off;
}

struct Interval {
  u64 begin;
  u64 end;
};

bool overlaps(Interval a, Interval b) { return a.begin < b.end && b.begin < a.end; }

ElfHeader decode_ehdr(const Bytes &b) {
  Elf64_Ehdr e;
  std::memcpy(&e, b.data(), sizeof(e));
  ElfHeader h;
  std::copy(std::begin(e.e_ident), std::end(e.e_ident), h.ident.begin());
  h.type = e.e_type;
  h.machine = e.e_machine;
  h.version = e.e_version;
  h.entry = e.e_entry;
  h.phoff = e.e_phoff;
  h.shoff = e.e_shoff;
  h.flags = e.e_flags;
  h.ehsize = e.e_ehsize;
  h.phentsize = e.e_phentsize;
  h.phnum = e.e_phnum;
  h.shentsize = e.e_shentsize;
  h.shnum = e.e_shnum;
  h.shstrndx = e.e_shstrndx;
  return h;
}

void encode_ehdr(const ElfHeader &h, u8 *out) {
  Elf64_Ehdr e;
  std::copy(h.ident.begin(), h.ident.end(), std::begin(e.e_ident));
  e.e_type = h.type;
  e.e_machine = h.machine;
  e.e_version = h.version;
  e.e_entry = h.entry;
  e.e_phoff = h.phoff;
  e.e_shoff = h.shoff;
  e.e_flags = h.flags;
  e.e_ehsize = h.ehsize;
  e.e_phentsize = h.phentsize;
  e.e_phnum = h.phnum;
  e.e_shentsize = h.shentsize;
  e.e_shnum = h.shnum;
  e.e_shstrndx = h.shstrndx;
  std::memcpy(out, &e, sizeof(e));
}

SegmentHeader decode_phdr(const u8 *p) {
  Elf64_Phdr ph;
  std::memcpy(&ph, p, sizeof(ph));
  return {ph.p_type, ph.p_flags, ph.p_offset, ph.p_vaddr,
          ph.p_paddr, ph.p_filesz, ph.p_memsz, ph.p_align};
}

void encode_phdr(const SegmentHeader &s, u8 *out) {
  Elf64_Phdr ph;
  ph.p_type = s.type;
  ph.p_flags = s.flags;
  ph.p_offset = s.offset;
  ph.p_vaddr = s.vaddr;
  ph.p_paddr = s.paddr;
  ph.p_filesz = s.filesz;
  ph.p_memsz = s.memsz;
  ph.p_align = s.align;
  std::memcpy(out, &ph, sizeof(ph));
}

SectionHeader decode_shdr(const u8 *p) {
  Elf64_Shdr sh;
  std::memcpy(&sh, p, sizeof(sh));
  SectionHeader s;
  s.name_offset = sh.sh_name;
  s.type = sh.sh_type;
  s.flags = sh.sh_flags;
  s.addr = sh.sh_addr;
  s.offset = sh.sh_offset;
  s.size = sh.sh_size;
  s.link = sh.sh_link;
  s.info = sh.sh_info;
  s.addralign = sh.sh_addralign;
  s.entsize = sh.sh_entsize;
  return s;
}

void encode_shdr(const SectionHeader &s, u8 *out) {
  Elf64_Shdr sh;
  sh.sh_name = s.name_offset;
  sh.sh_type = s.type;
  sh.sh_flags = s.flags;
  sh.sh_addr = s.addr;
  sh.sh_offset = s.offset;
  sh.sh_size = s.size;
  sh.sh_link = s.link;
  sh.sh_info = s.info;
  sh.sh_addralign = s.addralign;
  sh.sh_entsize = s.entsize;
  std::memcpy(out, &sh, sizeof(sh));
}

std::string read_cstr(const Bytes &b, u64 off, u64 limit) {
  if (off >= limit)
    return {};
  u64 end = off;
  while (end < limit && b[end] != 0)
    end++;
  return std::string(reinterpret_cast<const char *>(b.data() + off), end - off);
}

std::vector<SectionHeader> parse_sections(const Bytes &b, const ElfHeader &h) {
  std::vector<SectionHeader> out;
  if (h.shoff == 0)
    return out;
  if (h.shentsize != SHDR_SIZE)
    fail(ErrorKind::MalformedElf, "unexpected e_shentsize " + std::to_string(h.shentsize));
  if (!range_ok(h.shoff, SHDR_SIZE, b.size()))
    fail(ErrorKind::MalformedElf, "e_shoff beyond end of file");

  u64 count = h.shnum;
  if (count == 0)
    count = decode_shdr(b.data() + h.shoff).size;
  if (!range_ok(h.shoff, count * SHDR_SIZE, b.size()))
    fail(ErrorKind::MalformedElf, "section header table truncated");

  for (u64 i = 0; i < count; i++) {
    SectionHeader s = decode_shdr(b.data() + h.shoff + i * SHDR_SIZE);
    if (s.has_file_content() && !range_ok(s.offset, s.size, b.size()))
      fail(ErrorKind::MalformedElf, "section " + std::to_string(i) + " out of range");
    out.push_back(s);
  }

  u64 strndx = h.shstrndx == SHN_XINDEX && !out.empty() ? out[0].link : h.shstrndx;
  if (strndx != SHN_UNDEF && strndx < out.size()) {
    const SectionHeader &strtab = out[strndx];
    for (SectionHeader &s : out)
      s.name = read_cstr(b, strtab.offset + s.name_offset, strtab.offset + strtab.size);
  }
  return out;
}

std::string strip_version(std::string name) {
  size_t at = name.find('@');
  if (at != std::string::npos && at > 0)
    name.resize(at);
  return name;
}

void parse_symtab(const Bytes &b, const std::vector<SectionHeader> &secs, u32 type,
                  std::vector<SymbolRecord> &out) {
  for (const SectionHeader &s : secs) {
    if (s.type != type || s.entsize != sizeof(Elf64_Sym) || s.link >= secs.size())
      continue;
    const SectionHeader &str = secs[s.link];
    for (u64 off = sizeof(Elf64_Sym); off + sizeof(Elf64_Sym) <= s.size; off += sizeof(Elf64_Sym)) {
      Elf64_Sym sym;
      std::memcpy(&sym, b.data() + s.offset + off, sizeof(sym));
      SymbolRecord r;
      r.name = strip_version(read_cstr(b, str.offset + sym.st_name, str.offset + str.size));
      r.value = sym.st_value;
      r.size = sym.st_size;
      r.info = sym.st_info;
      r.other = sym.st_other;
      r.shndx = sym.st_shndx;
      r.from_dynsym = type == SHT_DYNSYM;
      out.push_back(std::move(r));
    }
  }
}

// GOT slots come from the dynamic segment, so they survive stripping.
std::vector<GotSlot> parse_got_slots(const BinaryImage &img) {
  std::vector<GotSlot> out;
  const SegmentHeader *dyn = nullptr;
  for (const SegmentHeader &s : img.program_headers)
    if (s.type == PT_DYNAMIC)
      dyn = &s;
  if (!dyn)
    return out;

  u64 strtab = 0, symtab = 0, jmprel = 0, pltrelsz = 0, rela = 0, relasz = 0;
  u64 strsz = 0;
  const Bytes &b = img.raw_bytes;
  for (u64 off = dyn->offset; off + 16 <= dyn->offset + dyn->filesz; off += 16) {
    i64 tag = load_le<i64>(b.data() + off);
    u64 val = load_le<u64>(b.data() + off + 8);
    if (tag == DT_NULL)
      break;
    switch (tag) {
    case DT_STRTAB: strtab = val; break;
    case DT_STRSZ: strsz = val; break;
    case DT_SYMTAB: symtab = val; break;
    case DT_JMPREL: jmprel = val; break;
    case DT_PLTRELSZ: pltrelsz = val; break;
    case DT_RELA: rela = val; break;
    case DT_RELASZ: relasz = val; break;
    }
  }
  if (!strtab || !symtab)
    return out;

  auto str_off = img.vaddr_to_offset(strtab, strsz ? strsz : 1);
  if (!str_off)
    return out;
  u64 str_end = *str_off + (strsz ? strsz : b.size() - *str_off);

  auto scan = [&](u64 table, u64 size) {
    if (!table || !size)
      return;
    auto base = img.vaddr_to_offset(table, size);
    if (!base)
      return;
    for (u64 off = 0; off + sizeof(Elf64_Rela) <= size; off += sizeof(Elf64_Rela)) {
      Elf64_Rela r;
      std::memcpy(&r, b.data() + *base + off, sizeof(r));
      u32 type = ELF64_R_TYPE(r.r_info);
      u32 symidx = ELF64_R_SYM(r.r_info);
      if ((type != R_X86_64_JUMP_SLOT && type != R_X86_64_GLOB_DAT) || symidx == 0)
        continue;
      auto sym_off = img.vaddr_to_offset(symtab + u64(symidx) * sizeof(Elf64_Sym), sizeof(Elf64_Sym));
      if (!sym_off)
        continue;
      Elf64_Sym sym;
      std::memcpy(&sym, b.data() + *sym_off, sizeof(sym));
      std::string name = read_cstr(b, *str_off + sym.st_name, str_end);
      if (name.empty() || r.r_offset % 8 != 0)
        continue;
      out.push_back({name, r.r_offset});
    }
  };
  scan(jmprel, pltrelsz);
  scan(rela, relasz);
  return out;
}

} // namespace

bool SegmentHeader::is_load() const { return type == PT_LOAD; }
bool SegmentHeader::executable() const { return flags & PF_X; }
bool SegmentHeader::writable() const { return flags & PF_W; }

bool SectionHeader::has_file_content() const {
  return type != SHT_NOBITS && type != SHT_NULL && size > 0;
}

std::optional<u64> BinaryImage::vaddr_to_offset(u64 vaddr, u64 len) const {
  for (const SegmentHeader &s : program_headers) {
    if (!s.is_load())
      continue;
    if (vaddr >= s.vaddr && vaddr - s.vaddr <= s.filesz && len <= s.filesz - (vaddr - s.vaddr))
      return s.offset + (vaddr - s.vaddr);
  }
  return std::nullopt;
}

std::span<const u8> BinaryImage::bytes_at(u64 vaddr, u64 len) const {
  auto off = vaddr_to_offset(vaddr, len);
  if (!off)
    fail(ErrorKind::InvalidArgument, "range " + hex(vaddr) + "+" + hex(len) + " is not file-backed");
  return {raw_bytes.data() + *off, len};
}

const SegmentHeader *BinaryImage::load_segment_for(u64 vaddr) const {
  for (const SegmentHeader &s : program_headers)
    if (s.is_load() && s.contains_vaddr(vaddr))
      return &s;
  return nullptr;
}

BinaryImage parse(Bytes bytes) {
  if (bytes.size() < EHDR_SIZE)
    fail(ErrorKind::MalformedElf, "file shorter than an ELF header");
  if (std::memcmp(bytes.data(), ELFMAG, SELFMAG) != 0)
    fail(ErrorKind::MalformedElf, "missing ELF magic");

  BinaryImage img;
  img.elf_header = decode_ehdr(bytes);
  const ElfHeader &h = img.elf_header;
  if (h.ident[EI_CLASS] != ELFCLASS64)
    fail(ErrorKind::UnsupportedTarget, "not ELFCLASS64");
  if (h.ident[EI_DATA] != ELFDATA2LSB)
    fail(ErrorKind::UnsupportedTarget, "not little-endian");
  if (h.machine != EM_X86_64)
    fail(ErrorKind::UnsupportedTarget, "machine is not x86-64");
  if (h.type != ET_EXEC && h.type != ET_DYN)
    fail(ErrorKind::UnsupportedTarget, "only ET_EXEC and ET_DYN are accepted");

  if (h.phnum > 0) {
    if (h.phentsize != PHDR_SIZE)
      fail(ErrorKind::MalformedElf, "unexpected e_phentsize " + std::to_string(h.phentsize));
    if (!range_ok(h.phoff, u64(h.phnum) * PHDR_SIZE, bytes.size()))
      fail(ErrorKind::MalformedElf, "program header table beyond end of file");
  }
  for (u64 i = 0; i < h.phnum; i++) {
    SegmentHeader s = decode_phdr(bytes.data() + h.phoff + i * PHDR_SIZE);
    if (!range_ok(s.offset, s.filesz, bytes.size()))
      fail(ErrorKind::MalformedElf, "segment " + std::to_string(i) + " file range out of bounds");
    if (s.is_load() && s.memsz < s.filesz)
      fail(ErrorKind::MalformedElf, "segment " + std::to_string(i) + " has p_memsz < p_filesz");
    if (!is_pow2_or_zero(s.align))
      fail(ErrorKind::MalformedElf, "segment " + std::to_string(i) + " alignment not a power of two");
    if (s.is_load() && s.align > 1 && s.vaddr % s.align != s.offset % s.align)
      fail(ErrorKind::MalformedElf, "segment " + std::to_string(i) + " breaks vaddr/offset congruence");
    img.program_headers.push_back(s);
  }

  img.raw_bytes = std::move(bytes);
  if (h.shoff != 0) {
    img.section_headers = parse_sections(img.raw_bytes, h);
    parse_symtab(img.raw_bytes, *img.section_headers, SHT_SYMTAB, img.symbols);
    parse_symtab(img.raw_bytes, *img.section_headers, SHT_DYNSYM, img.symbols);
  }
  img.got_slots = parse_got_slots(img);
  return img;
}

void sync_headers(BinaryImage &img) {
  Bytes &b = img.raw_bytes;
  if (b.size() < EHDR_SIZE)
    b.resize(EHDR_SIZE);
  encode_ehdr(img.elf_header, b.data());

  const ElfHeader &h = img.elf_header;
  if (!img.program_headers.empty()) {
    u64 end = h.phoff + img.program_headers.size() * PHDR_SIZE;
    if (b.size() < end)
      b.resize(end);
    for (size_t i = 0; i < img.program_headers.size(); i++)
      encode_phdr(img.program_headers[i], b.data() + h.phoff + i * PHDR_SIZE);
  }
  if (img.section_headers && h.shoff != 0) {
    const auto &secs = *img.section_headers;
    u64 end = h.shoff + secs.size() * SHDR_SIZE;
    if (b.size() < end)
      b.resize(end);
    for (size_t i = 0; i < secs.size(); i++)
      encode_shdr(secs[i], b.data() + h.shoff + i * SHDR_SIZE);
  }
}

Bytes serialize(const BinaryImage &image) {
  BinaryImage copy = image;
  sync_headers(copy);
  return std::move(copy.raw_bytes);
}

namespace {

// File ranges that must never be treated as free space.
std::vector<Interval> occupied_ranges(const BinaryImage &img, size_t host) {
  std::vector<Interval> out;
  const ElfHeader &h = img.elf_header;
  out.push_back({0, EHDR_SIZE});
  if (h.phnum)
    out.push_back({h.phoff, h.phoff + u64(h.phnum) * PHDR_SIZE});
  if (img.section_headers) {
    for (const SectionHeader &s : *img.section_headers)
      if (s.has_file_content())
        out.push_back({s.offset, s.offset + s.size});
    if (h.shoff)
      out.push_back({h.shoff, h.shoff + img.section_headers->size() * SHDR_SIZE});
  }
  for (size_t i = 0; i < img.program_headers.size(); i++) {
    const SegmentHeader &s = img.program_headers[i];
    if (i == host || s.filesz == 0)
      continue;
    if (s.type == PT_GNU_RELRO || s.type == PT_PHDR || s.type == PT_GNU_STACK)
      continue;
    out.push_back({s.offset, s.offset + s.filesz});
  }
  return out;
}

// Splits [begin,end) by the occupied set and yields free intervals.
std::vector<Interval> subtract(Interval range, std::vector<Interval> occ) {
  std::sort(occ.begin(), occ.end(), [](Interval a, Interval b) { return a.begin < b.begin; });
  std::vector<Interval> out;
  u64 cur = range.begin;
  for (Interval o : occ) {
    if (o.end <= cur || o.begin >= range.end)
      continue;
    if (o.begin > cur)
      out.push_back({cur, std::min(o.begin, range.end)});
    cur = std::max(cur, o.end);
    if (cur >= range.end)
      break;
  }
  if (cur < range.end)
    out.push_back({cur, range.end});
  return out;
}

std::optional<PaddingRegion> first_zero_run(const BinaryImage &img, Interval free_range,
                                            const SegmentHeader &seg, size_t seg_idx,
                                            u64 needed, bool tail) {
  const Bytes &b = img.raw_bytes;
  u64 i = free_range.begin;
  while (i < free_range.end) {
    while (i < free_range.end && b[i] != 0)
      i++;
    u64 start = i;
    while (i < free_range.end && b[i] == 0)
      i++;
    u64 end = i;
    if (end <= start)
      continue;
    u64 vstart = seg.vaddr + (start - seg.offset);
    u64 aligned = align_up(vstart, 16);
    u64 skip = aligned - vstart;
    if (end - start <= skip)
      continue;
    u64 len = end - start - skip;
    if (len >= needed)
      return PaddingRegion{aligned, start + skip, len, seg_idx, tail};
  }
  return std::nullopt;
}

} // namespace

std::optional<PaddingRegion> find_padding(const BinaryImage &img, u64 needed,
                                          bool exec_required, bool write_required) {
  if (needed == 0)
    fail(ErrorKind::InvalidArgument, "find_padding: needed must be > 0");

  const auto &phdrs = img.program_headers;
  std::vector<PaddingRegion> interior;
  std::vector<PaddingRegion> tails;

  for (size_t i = 0; i < phdrs.size(); i++) {
    const SegmentHeader &s = phdrs[i];
    if (!s.is_load() || s.filesz == 0)
      continue;
    if (exec_required && !s.executable())
      continue;
    if (write_required && !s.writable())
      continue;
    std::vector<Interval> occ = occupied_ranges(img, i);

    // Interior gaps are only trusted when section headers describe the
    // segment's content; without them a zero run may be live data.
    if (img.section_headers && !img.section_headers->empty()) {
      for (Interval f : subtract({s.offset, s.offset + s.filesz}, occ))
        if (auto r = first_zero_run(img, f, s, i, needed, false))
          interior.push_back(*r);
    }

    if (s.memsz != s.filesz)
      continue;
    u64 tail_begin = s.offset + s.filesz;
    u64 page_end_v = align_up(s.vaddr + s.memsz, PAGE_SIZE);
    u64 tail_end = std::min<u64>(tail_begin + (page_end_v - (s.vaddr + s.memsz)), img.raw_bytes.size());
    if (tail_end <= tail_begin)
      continue;
    Interval vrange{s.vaddr + s.memsz, page_end_v};
    bool clash = false;
    for (size_t j = 0; j < phdrs.size(); j++)
      if (j != i && phdrs[j].is_load() && overlaps(vrange, {phdrs[j].vaddr, phdrs[j].vaddr + phdrs[j].memsz}))
        clash = true;
    if (clash)
      continue;
    std::vector<Interval> free = subtract({tail_begin, tail_end}, occ);
    // Tail slack must be contiguous with the segment end.
    if (free.empty() || free.front().begin != tail_begin)
      continue;
    if (auto r = first_zero_run(img, free.front(), s, i, needed, true))
      tails.push_back(*r);
  }

  auto by_vaddr = [](const PaddingRegion &a, const PaddingRegion &b) { return a.vaddr < b.vaddr; };
  std::sort(interior.begin(), interior.end(), by_vaddr);
  std::sort(tails.begin(), tails.end(), by_vaddr);
  if (!interior.empty())
    return interior.front();
  if (!tails.empty())
    return tails.front();
  return std::nullopt;
}

void write_padding(BinaryImage &img, const PaddingRegion &region, std::span<const u8> bytes) {
  if (bytes.size() > region.length)
    fail(ErrorKind::InvalidArgument, "padding write larger than region");
  if (!range_ok(region.file_offset, bytes.size(), img.raw_bytes.size()))
    fail(ErrorKind::InvalidArgument, "padding region outside file");
  std::copy(bytes.begin(), bytes.end(), img.raw_bytes.begin() + region.file_offset);
  if (region.extends_segment) {
    SegmentHeader &s = img.program_headers.at(region.segment_index);
    u64 end = region.file_offset + bytes.size() - s.offset;
    if (end > s.filesz) {
      s.filesz = end;
      s.memsz = end;
    }
    sync_headers(img);
  }
}

void write_at_vaddr(BinaryImage &img, u64 vaddr, std::span<const u8> bytes) {
  auto off = img.vaddr_to_offset(vaddr, bytes.size());
  if (!off)
    fail(ErrorKind::InvalidArgument, "range " + hex(vaddr) + " is not file-backed");
  std::copy(bytes.begin(), bytes.end(), img.raw_bytes.begin() + *off);
}

namespace {

// True when the table can grow by one entry where it is.
bool table_has_slack(const BinaryImage &img) {
  const ElfHeader &h = img.elf_header;
  u64 grown_end = h.phoff + (u64(h.phnum) + 1) * PHDR_SIZE;
  Interval extra{h.phoff + u64(h.phnum) * PHDR_SIZE, grown_end};
  if (!range_ok(extra.begin, PHDR_SIZE, img.raw_bytes.size()))
    return false;
  for (u64 i = extra.begin; i < extra.end; i++)
    if (img.raw_bytes[i] != 0)
      return false;
  if (img.section_headers)
    for (const SectionHeader &s : *img.section_headers)
      if (s.has_file_content() && overlaps(extra, {s.offset, s.offset + s.size}))
        return false;
  if (img.section_headers && h.shoff &&
      overlaps(extra, {h.shoff, h.shoff + img.section_headers->size() * SHDR_SIZE}))
    return false;

  // The grown table must stay inside the loadable segment that maps it, and
  // must not collide with other segments' content.
  bool mapped = false;
  for (const SegmentHeader &s : img.program_headers) {
    if (s.type == PT_PHDR || s.type == PT_GNU_STACK || s.type == PT_GNU_RELRO || s.filesz == 0)
      continue;
    bool contains = s.offset <= h.phoff && grown_end <= s.offset + s.filesz;
    if (s.is_load() && contains) {
      mapped = true;
      continue;
    }
    if (overlaps(extra, {s.offset, s.offset + s.filesz}))
      return false;
  }
  bool has_phdr = std::any_of(img.program_headers.begin(), img.program_headers.end(),
                              [](const SegmentHeader &s) { return s.type == PT_PHDR; });
  return mapped || !has_phdr;
}

} // namespace

std::pair<BinaryImage, u64> add_load_segment(const BinaryImage &image, std::span<const u8> content,
                                             u32 flags, u64 align) {
  if (content.empty())
    fail(ErrorKind::InvalidArgument, "add_load_segment: empty content");
  if (align == 0 || !is_pow2_or_zero(align))
    fail(ErrorKind::InvalidArgument, "add_load_segment: align must be a power of two");

  BinaryImage img = image;
  ElfHeader &h = img.elf_header;
  if (h.phnum >= 0xfffe)
    fail(ErrorKind::NoHeaderRoom, "program header count at limit");

  u64 seg_align = std::max(align, PAGE_SIZE);
  u64 max_end = 0;
  for (const SegmentHeader &s : img.program_headers)
    if (s.is_load())
      max_end = std::max(max_end, s.vaddr + s.memsz);

  bool relocate = !table_has_slack(img);
  u64 table_bytes = (u64(h.phnum) + 1) * PHDR_SIZE;
  u64 prefix = relocate ? align_up(table_bytes, 64) : 0;
  u64 total = prefix + content.size();

  u64 seg_vaddr = align_up(max_end, seg_align);
  if (seg_vaddr < max_end || seg_vaddr + total < seg_vaddr || seg_vaddr + total > MAX_USER_VADDR)
    fail(ErrorKind::AddressSpaceExhausted, "no room above " + hex(max_end));
  u64 seg_off = align_up(img.raw_bytes.size(), seg_align);

  SegmentHeader seg;
  seg.type = PT_LOAD;
  seg.flags = relocate ? (flags | PF_R) : flags;
  seg.offset = seg_off;
  seg.vaddr = seg_vaddr;
  seg.paddr = seg_vaddr;
  seg.filesz = total;
  seg.memsz = total;
  seg.align = seg_align;

  img.raw_bytes.resize(seg_off + total, 0);
  std::copy(content.begin(), content.end(), img.raw_bytes.begin() + seg_off + prefix);

  // PT_LOAD entries stay sorted by vaddr: the new one goes after the last.
  size_t insert_at = 0;
  for (size_t i = 0; i < img.program_headers.size(); i++)
    if (img.program_headers[i].is_load())
      insert_at = i + 1;
  img.program_headers.insert(img.program_headers.begin() + insert_at, seg);

  if (relocate) {
    h.phoff = seg_off;
    for (SegmentHeader &s : img.program_headers) {
      if (s.type != PT_PHDR)
        continue;
      s.offset = seg_off;
      s.vaddr = seg_vaddr;
      s.paddr = seg_vaddr;
      s.filesz = table_bytes;
      s.memsz = table_bytes;
    }
  } else {
    for (SegmentHeader &s : img.program_headers) {
      if (s.type != PT_PHDR)
        continue;
      s.filesz = table_bytes;
      s.memsz = table_bytes;
    }
  }
  h.phnum = static_cast<u16>(img.program_headers.size());
  sync_headers(img);
  return {std::move(img), seg_vaddr + prefix};
}

std::vector<std::string> validate(const BinaryImage &img) {
  std::vector<std::string> issues;
  const ElfHeader &h = img.elf_header;
  u64 size = img.raw_bytes.size();
  if (h.phnum && !range_ok(h.phoff, u64(h.phnum) * PHDR_SIZE, size))
    issues.push_back("program header table out of bounds");

  const auto &ph = img.program_headers;
  for (size_t i = 0; i < ph.size(); i++) {
    const SegmentHeader &s = ph[i];
    std::string tag = "segment " + std::to_string(i) + ": ";
    if (!range_ok(s.offset, s.filesz, size))
      issues.push_back(tag + "file range out of bounds");
    if (!is_pow2_or_zero(s.align))
      issues.push_back(tag + "alignment not a power of two");
    if (!s.is_load())
      continue;
    if (s.memsz < s.filesz)
      issues.push_back(tag + "p_memsz < p_filesz");
    if (s.align > 1 && s.vaddr % s.align != s.offset % s.align)
      issues.push_back(tag + "vaddr/offset congruence broken");
    if (s.vaddr % PAGE_SIZE != s.offset % PAGE_SIZE)
      issues.push_back(tag + "vaddr/offset not page congruent");
    for (size_t j = i + 1; j < ph.size(); j++) {
      const SegmentHeader &t = ph[j];
      if (t.is_load() && s.memsz && t.memsz &&
          overlaps({s.vaddr, s.vaddr + s.memsz}, {t.vaddr, t.vaddr + t.memsz}))
        issues.push_back(tag + "overlaps segment " + std::to_string(j));
    }
  }

  for (const SegmentHeader &s : ph) {
    if (s.type != PT_PHDR)
      continue;
    if (s.offset != h.phoff || s.filesz != u64(h.phnum) * PHDR_SIZE)
      issues.push_back("PT_PHDR does not describe the program header table");
    bool covered = false;
    for (const SegmentHeader &l : ph)
      if (l.is_load() && s.vaddr >= l.vaddr && s.vaddr + s.memsz <= l.vaddr + l.memsz &&
          s.offset - l.offset == s.vaddr - l.vaddr)
        covered = true;
    if (!covered)
      issues.push_back("PT_PHDR is not covered by a PT_LOAD");
  }

  if (h.entry != 0) {
    const SegmentHeader *s = img.load_segment_for(h.entry);
    if (!s || !s->executable())
      issues.push_back("entry point is not inside an executable segment");
  }
  return issues;
}

std::string segment_type_name(u32 type) {
  switch (type) {
  case PT_NULL: return "NULL";
  case PT_LOAD: return "LOAD";
  case PT_DYNAMIC: return "DYNAMIC";
  case PT_INTERP: return "INTERP";
  case PT_NOTE: return "NOTE";
  case PT_PHDR: return "PHDR";
  case PT_TLS: return "TLS";
  case PT_GNU_EH_FRAME: return "GNU_EH_FRAME";
  case PT_GNU_STACK: return "GNU_STACK";
  case PT_GNU_RELRO: return "GNU_RELRO";
  case PT_GNU_PROPERTY: return "GNU_PROPERTY";
  }
  return hex(type);
}

} // namespace scribe::elf
