#pragma once

#include "scribe/bytes.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

// ELF64 little-endian x86-64 executables (ET_EXEC / ET_DYN): parsing,
// byte-exact re-serialization, and the structural edits used by the
// retrofitter.
namespace scribe::elf {

struct ElfHeader {
  std::array<u8, 16> ident{};
  u16 type = 0;
  u16 machine = 0;
  u32 version = 0;
  u64 entry = 0;
  u64 phoff = 0;
  u64 shoff = 0;
  u32 flags = 0;
  u16 ehsize = 0;
  u16 phentsize = 0;
  u16 phnum = 0;
  u16 shentsize = 0;
  u16 shnum = 0;
  u16 shstrndx = 0;
};

struct SegmentHeader {
  u32 type = 0;
  u32 flags = 0;
  u64 offset = 0;
  u64 vaddr = 0;
  u64 paddr = 0;
  u64 filesz = 0;
  u64 memsz = 0;
  u64 align = 0;

  bool is_load() const;
  bool executable() const;
  bool writable() const;
  bool contains_vaddr(u64 addr) const { return addr >= vaddr && addr < vaddr + memsz; }
};

struct SectionHeader {
  std::string name;
  u32 name_offset = 0;
  u32 type = 0;
  u64 flags = 0;
  u64 addr = 0;
  u64 offset = 0;
  u64 size = 0;
  u32 link = 0;
  u32 info = 0;
  u64 addralign = 0;
  u64 entsize = 0;

  // True if the section occupies bytes in the file.
  bool has_file_content() const;
};

struct SymbolRecord {
  std::string name;
  u64 value = 0;
  u64 size = 0;
  u8 info = 0;
  u8 other = 0;
  u16 shndx = 0;
  bool from_dynsym = false;

  u8 bind() const { return info >> 4; }
  u8 type() const { return info & 0xf; }
  bool defined() const { return shndx != 0; }
};

struct GotSlot {
  static constexpr u64 width = 8;
  std::string symbol_name;
  u64 slot_vaddr = 0;
};

struct BinaryImage {
  Bytes raw_bytes;
  ElfHeader elf_header;
  std::vector<SegmentHeader> program_headers;
  std::optional<std::vector<SectionHeader>> section_headers;
  std::vector<SymbolRecord> symbols;
  std::vector<GotSlot> got_slots;

  // Maps a virtual range onto the file through the PT_LOAD that backs it.
  // Returns nothing when the range is not fully file-backed by one segment.
  std::optional<u64> vaddr_to_offset(u64 vaddr, u64 len = 1) const;
  std::span<const u8> bytes_at(u64 vaddr, u64 len) const;
  const SegmentHeader *load_segment_for(u64 vaddr) const;
};

struct PaddingRegion {
  u64 vaddr = 0;
  u64 file_offset = 0;
  u64 length = 0;
  size_t segment_index = 0;
  // The region lies past the segment's p_filesz but inside its last page;
  // consuming it grows p_filesz/p_memsz.
  bool extends_segment = false;
};

BinaryImage parse(Bytes bytes);
Bytes serialize(const BinaryImage &image);

// Re-encodes the parsed headers into raw_bytes. Edits call this so that
// raw_bytes is always the serialized form.
void sync_headers(BinaryImage &image);

// A zero-filled, content-free region of at least `needed` bytes in a loadable
// segment. Start is 16-byte aligned.
std::optional<PaddingRegion> find_padding(const BinaryImage &image, u64 needed,
                                          bool exec_required,
                                          bool write_required = false);

// Appends a PT_LOAD carrying `content`. Returns the new image and the virtual
// address of content[0].
std::pair<BinaryImage, u64> add_load_segment(const BinaryImage &image,
                                             std::span<const u8> content,
                                             u32 flags, u64 align);

// Writes bytes at a file offset, growing p_filesz/p_memsz of the segment that
// owns `region` when it was tail slack.
void write_padding(BinaryImage &image, const PaddingRegion &region,
                   std::span<const u8> bytes);

void write_at_vaddr(BinaryImage &image, u64 vaddr, std::span<const u8> bytes);

// Structural loadability checks: segment non-overlap, alignment congruence,
// in-bounds file ranges. Empty result means the image is valid.
std::vector<std::string> validate(const BinaryImage &image);

std::string segment_type_name(u32 type);

} // namespace scribe::elf
