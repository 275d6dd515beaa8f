#include "scribe/retrofit.hpp"
#include "scribe/error.hpp"

#include <algorithm>
#include <elf.h>
#include <json.hpp>
#include <limits>

namespace scribe::retrofit {

namespace {

constexpr u8 TRAP = 0xcc;
constexpr u64 JMP_SIZE = 5;
constexpr u64 SEGMENT_ALIGN = 0x1000;

bool fits_rel32(u64 at, u64 target) {
  i64 rel = i64(target - (at + JMP_SIZE));
  return rel >= std::numeric_limits<i32>::min() && rel <= std::numeric_limits<i32>::max();
}

// Bodies we wrote end in trap fill: after a jump, or after in-place code
// that came out shorter.
bool looks_patched(std::span<const u8> body) {
  size_t n = body.size();
  size_t k = n;
  while (k > 0 && body[k - 1] == TRAP)
    k--;
  return n >= 7 && n - k >= 2 && k > 0;
}

DataKind data_kind(link::ItemKind k) {
  switch (k) {
  case link::ItemKind::jump_table: return DataKind::jump_table;
  case link::ItemKind::string_literal: return DataKind::string_literal;
  case link::ItemKind::constant: return DataKind::constant;
  case link::ItemKind::global: return DataKind::global;
  }
  return DataKind::constant;
}

std::string kind_name(DataKind k) {
  switch (k) {
  case DataKind::jump_table: return "jump_table";
  case DataKind::string_literal: return "string_literal";
  case DataKind::constant: return "constant";
  case DataKind::global: return "global";
  }
  return "?";
}

elf::PaddingRegion sub_region(const elf::PaddingRegion &r, u64 vaddr) {
  elf::PaddingRegion s = r;
  u64 skip = vaddr - r.vaddr;
  s.vaddr = vaddr;
  s.file_offset += skip;
  s.length -= skip;
  return s;
}

u64 max_load_end(const elf::BinaryImage &img) {
  u64 end = 0;
  for (const elf::SegmentHeader &s : img.program_headers)
    if (s.is_load())
      end = std::max(end, s.vaddr + s.memsz);
  return end;
}

} // namespace

std::array<u8, 5> encode_trampoline(u64 at, u64 target) {
  if (!fits_rel32(at, target))
    fail(ErrorKind::RelocOverflow, "jump from " + hex(at) + " to " + hex(target) + " is out of rel32 range");
  std::array<u8, 5> b{0xe9};
  store_le<i32>(b.data() + 1, i32(i64(target - (at + JMP_SIZE))));
  return b;
}

u64 decode_trampoline(u64 at, std::span<const u8> bytes) {
  if (bytes.size() < JMP_SIZE || bytes[0] != 0xe9)
    fail(ErrorKind::InvalidArgument, "not a rel32 jump at " + hex(at));
  return at + JMP_SIZE + u64(i64(load_le<i32>(bytes.data() + 1)));
}

// Far enough above the image that a first link never collides with a code
// placement, near enough for rel32 references from code.
u64 provisional_data_vaddr(const elf::BinaryImage &image) {
  return align_up(max_load_end(image), SEGMENT_ALIGN) + 0x10000000;
}

std::string to_string(Placement p) {
  switch (p) {
  case Placement::in_place: return "in_place";
  case Placement::padding: return "padding";
  case Placement::new_segment: return "new_segment";
  }
  return "?";
}

PatchPlan plan(const elf::BinaryImage &image, const meta::FunctionMetadata &fn, const link::LinkedBlob &blob,
               const Relinker &relink, const PlanOptions &opt) {
  const elf::SegmentHeader *seg = image.load_segment_for(fn.entry_vaddr);
  if (!seg || !seg->executable())
    fail(ErrorKind::InvalidArgument, fn.name + ": entry " + hex(fn.entry_vaddr) + " is not in an executable segment");
  if (fn.entry_vaddr + fn.size > seg->vaddr + seg->filesz)
    fail(ErrorKind::InvalidArgument, fn.name + ": body runs past its segment");
  std::span<const u8> body = image.bytes_at(fn.entry_vaddr, fn.size);
  if (looks_patched(body))
    fail(ErrorKind::AlreadyPatched, fn.name + " at " + hex(fn.entry_vaddr) + " already carries a patch");
  if (image.elf_header.type == ET_DYN && blob.absolute_sites)
    fail(ErrorKind::UnsupportedRelocation, fn.name + ": patch has " + std::to_string(blob.absolute_sites) +
                                               " absolute relocation(s); a position-independent executable would not rebase them");
  if (!blob.entry_offsets.count(fn.name))
    fail(ErrorKind::InvalidArgument, "linked blob does not define '" + fn.name + "'");
  if (blob.code.empty())
    fail(ErrorKind::InvalidArgument, "linked blob has no code");

  const u64 data_size = blob.data.size();
  const u64 d0 = blob.data_vaddr;
  bool mismatch = false;
  bool too_far = false;

  auto link_at = [&](u64 c, u64 d) -> std::optional<link::LinkedBlob> {
    if (blob.code_vaddr == c && (data_size == 0 || blob.data_vaddr == d))
      return blob;
    if (!relink) {
      mismatch = true;
      return std::nullopt;
    }
    return relink(c, d);
  };

  PatchPlan p;
  p.function = fn;
  p.original_body.assign(body.begin(), body.end());
  std::optional<link::LinkedBlob> chosen;
  u64 code_vaddr = 0;

  if (opt.allow_in_place) {
    if (auto b = link_at(fn.entry_vaddr, d0)) {
      if (b->code.size() <= fn.size && b->entry_offsets.at(fn.name) == 0) {
        p.placement = Placement::in_place;
        code_vaddr = fn.entry_vaddr;
        chosen = b;
      }
    }
  }

  bool can_jump = fn.size >= JMP_SIZE;
  if (!chosen && can_jump && opt.allow_padding) {
    u64 need = blob.code.size() + opt.code_align;
    if (auto region = elf::find_padding(image, need, true)) {
      u64 c = align_up(region->vaddr, opt.code_align);
      if (!relink && blob.code_vaddr >= region->vaddr && blob.code_vaddr + blob.code.size() <= region->vaddr + region->length)
        c = blob.code_vaddr;
      if (auto b = link_at(c, d0)) {
        u64 target = c + b->entry_offsets.at(fn.name);
        bool fits = c + b->code.size() <= region->vaddr + region->length;
        if (fits && fits_rel32(fn.entry_vaddr, target)) {
          p.placement = Placement::padding;
          p.region = sub_region(*region, c);
          code_vaddr = c;
          chosen = b;
        } else if (fits) {
          too_far = true;
        }
      }
    }
  }

  if (!chosen && can_jump && opt.allow_new_segment) {
    Bytes probe(blob.code.size(), 0);
    u64 c = elf::add_load_segment(image, probe, PF_R | PF_X, SEGMENT_ALIGN).second;
    if (auto b = link_at(c, d0)) {
      if (b->code.size() != probe.size()) {
        probe.assign(b->code.size(), 0);
        u64 again = elf::add_load_segment(image, probe, PF_R | PF_X, SEGMENT_ALIGN).second;
        if (again != c)
          fail(ErrorKind::PlacementMismatch, "segment prediction moved from " + hex(c) + " to " + hex(again));
      }
      u64 target = c + b->entry_offsets.at(fn.name);
      if (fits_rel32(fn.entry_vaddr, target)) {
        p.placement = Placement::new_segment;
        code_vaddr = c;
        chosen = b;
      } else {
        too_far = true;
      }
    }
  }

  if (!chosen) {
    if (!can_jump)
      fail(ErrorKind::FunctionTooSmall, fn.name + " is " + std::to_string(fn.size) +
                                           " bytes, too small for a jump, and the new code does not fit in place");
    if (mismatch)
      fail(ErrorKind::PlacementMismatch, "blob linked at " + hex(blob.code_vaddr) + " matches no feasible placement");
    if (too_far)
      fail(ErrorKind::RelocOverflow, "no placement within rel32 reach of " + hex(fn.entry_vaddr));
    fail(ErrorKind::InvalidArgument, "no placement allowed for " + fn.name);
  }

  // Data goes after code in the same order apply() uses.
  u64 data_vaddr = d0;
  if (data_size > 0) {
    elf::BinaryImage sim = image;
    if (p.placement == Placement::new_segment)
      sim = elf::add_load_segment(image, chosen->code, PF_R | PF_X, SEGMENT_ALIGN).first;
    else if (p.placement == Placement::padding)
      elf::write_padding(sim, *p.region, chosen->code);
    if (auto region = elf::find_padding(sim, data_size + 64, false, true)) {
      data_vaddr = align_up(region->vaddr, 64);
      if (!relink && data_size && blob.data_vaddr >= region->vaddr &&
          blob.data_vaddr + data_size <= region->vaddr + region->length)
        data_vaddr = blob.data_vaddr;
      p.data_placement = DataPlacement::padding;
      p.data_region = sub_region(*region, data_vaddr);
    } else {
      Bytes probe(data_size, 0);
      data_vaddr = elf::add_load_segment(sim, probe, PF_R | PF_W, SEGMENT_ALIGN).second;
      p.data_placement = DataPlacement::new_segment;
    }
    if (chosen->data_vaddr != data_vaddr) {
      if (!relink)
        fail(ErrorKind::PlacementMismatch,
             "blob data linked at " + hex(blob.data_vaddr) + ", placement needs " + hex(data_vaddr));
      u64 code_size = chosen->code.size();
      chosen = relink(code_vaddr, data_vaddr);
      if (chosen->code.size() != code_size || chosen->data.size() != data_size)
        fail(ErrorKind::PlacementMismatch, "relinking changed the blob size");
    }
  }

  p.blob = *chosen;
  if (p.placement != Placement::in_place) {
    TrampolineRecord t;
    t.at_vaddr = fn.entry_vaddr;
    t.target_vaddr = code_vaddr + p.blob.entry_offsets.at(fn.name);
    t.bytes = encode_trampoline(t.at_vaddr, t.target_vaddr);
    p.trampoline = t;
  }
  for (const link::BlobItem &it : p.blob.items) {
    if (it.size == 0)
      continue;
    InjectedData d;
    d.kind = data_kind(it.kind);
    d.section = it.section;
    d.vaddr = (it.in_code ? p.blob.code_vaddr : p.blob.data_vaddr) + it.offset;
    const Bytes &src = it.in_code ? p.blob.code : p.blob.data;
    d.bytes.assign(src.begin() + it.offset, src.begin() + it.offset + it.size);
    p.injected_data.push_back(std::move(d));
  }
  return p;
}

elf::BinaryImage apply(const elf::BinaryImage &image, const PatchPlan &p) {
  const meta::FunctionMetadata &fn = p.function;
  std::span<const u8> body = image.bytes_at(fn.entry_vaddr, fn.size);
  if (!std::equal(body.begin(), body.end(), p.original_body.begin(), p.original_body.end()))
    fail(ErrorKind::AlreadyPatched, fn.name + ": function bytes differ from the planned original");

  elf::BinaryImage img = image;
  Bytes fill(fn.size, TRAP);
  switch (p.placement) {
  case Placement::in_place:
    std::copy(p.blob.code.begin(), p.blob.code.end(), fill.begin());
    break;
  case Placement::padding:
    elf::write_padding(img, *p.region, p.blob.code);
    break;
  case Placement::new_segment: {
    auto [next, v] = elf::add_load_segment(img, p.blob.code, PF_R | PF_X, SEGMENT_ALIGN);
    if (v != p.blob.code_vaddr)
      fail(ErrorKind::PlacementMismatch, "code segment landed at " + hex(v) + ", plan says " + hex(p.blob.code_vaddr));
    img = std::move(next);
    break;
  }
  }
  if (p.trampoline)
    std::copy(p.trampoline->bytes.begin(), p.trampoline->bytes.end(), fill.begin());
  elf::write_at_vaddr(img, fn.entry_vaddr, fill);

  if (p.data_placement == DataPlacement::padding) {
    elf::write_padding(img, *p.data_region, p.blob.data);
  } else if (p.data_placement == DataPlacement::new_segment) {
    auto [next, v] = elf::add_load_segment(img, p.blob.data, PF_R | PF_W, SEGMENT_ALIGN);
    if (v != p.blob.data_vaddr)
      fail(ErrorKind::PlacementMismatch, "data segment landed at " + hex(v) + ", plan says " + hex(p.blob.data_vaddr));
    img = std::move(next);
  }

  elf::sync_headers(img);
  std::vector<std::string> issues = elf::validate(img);
  if (!issues.empty())
    fail(ErrorKind::MalformedElf, "patched image fails validation: " + issues.front());
  return img;
}

std::vector<ByteRange> declared_changes(const elf::BinaryImage &image, const PatchPlan &p) {
  std::vector<ByteRange> out;
  const elf::ElfHeader &h = image.elf_header;
  out.push_back({0, sizeof(Elf64_Ehdr)});
  out.push_back({h.phoff, h.phoff + (u64(h.phnum) + 2) * sizeof(Elf64_Phdr)});
  if (auto off = image.vaddr_to_offset(p.function.entry_vaddr, p.function.size))
    out.push_back({*off, *off + p.function.size});
  if (p.region)
    out.push_back({p.region->file_offset, p.region->file_offset + p.region->length});
  if (p.data_region)
    out.push_back({p.data_region->file_offset, p.data_region->file_offset + p.data_region->length});
  out.push_back({image.raw_bytes.size(), ~u64(0)});
  return out;
}

std::string report_json(const PatchPlan &p) {
  nlohmann::json j;
  j["function"] = p.function.name;
  j["entry"] = hex(p.function.entry_vaddr);
  j["size"] = p.function.size;
  j["placement"] = to_string(p.placement);
  j["code_vaddr"] = hex(p.blob.code_vaddr);
  j["code_size"] = p.blob.code.size();
  if (p.region)
    j["region"] = {{"vaddr", hex(p.region->vaddr)},
                   {"length", p.region->length},
                   {"extends_segment", p.region->extends_segment}};
  if (p.trampoline) {
    std::string bytes;
    for (u8 b : p.trampoline->bytes)
      bytes += (bytes.empty() ? "" : " ") + std::string(1, "0123456789abcdef"[b >> 4]) + "0123456789abcdef"[b & 15];
    j["trampoline"] = {{"at", hex(p.trampoline->at_vaddr)}, {"target", hex(p.trampoline->target_vaddr)}, {"bytes", bytes}};
  }
  j["data_placement"] = p.data_placement == DataPlacement::none      ? "none"
                        : p.data_placement == DataPlacement::padding ? "padding"
                                                                     : "new_segment";
  j["data_vaddr"] = hex(p.blob.data_vaddr);
  j["data_size"] = p.blob.data.size();
  j["injected_data"] = nlohmann::json::array();
  for (const InjectedData &d : p.injected_data)
    j["injected_data"].push_back(
        {{"kind", kind_name(d.kind)}, {"section", d.section}, {"vaddr", hex(d.vaddr)}, {"size", d.bytes.size()}});
  return j.dump(2) + "\n";
}

} // namespace scribe::retrofit
