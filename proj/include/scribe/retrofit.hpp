#pragma once

#include "scribe/binary_metadata.hpp"
#include "scribe/elf_image.hpp"
#include "scribe/link_resolver.hpp"

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

// Places a linked blob into the original binary and diverts the old entry.
namespace scribe::retrofit {

enum class Placement { in_place, padding, new_segment };

struct TrampolineRecord {
  u64 at_vaddr = 0;
  u64 target_vaddr = 0;
  std::array<u8, 5> bytes{};
};

enum class DataKind { jump_table, string_literal, constant, global };

struct InjectedData {
  DataKind kind = DataKind::constant;
  std::string section;
  u64 vaddr = 0;
  Bytes bytes;
};

enum class DataPlacement { none, padding, new_segment };

struct PatchPlan {
  meta::FunctionMetadata function;
  Placement placement = Placement::in_place;
  std::optional<elf::PaddingRegion> region;
  link::LinkedBlob blob;
  std::optional<TrampolineRecord> trampoline;
  std::vector<InjectedData> injected_data;
  DataPlacement data_placement = DataPlacement::none;
  std::optional<elf::PaddingRegion> data_region;
  Bytes original_body;
};

// Re-links the object for a given (code, data) address pair.
using Relinker = std::function<link::LinkedBlob(u64 code_vaddr, u64 data_vaddr)>;

struct PlanOptions {
  bool allow_in_place = true;
  bool allow_padding = true;
  bool allow_new_segment = true;
  u64 code_align = 64;
};

std::array<u8, 5> encode_trampoline(u64 at, u64 target);
u64 decode_trampoline(u64 at, std::span<const u8> bytes);

// Data address for a first link, before placement is known.
u64 provisional_data_vaddr(const elf::BinaryImage &image);

// Without a relinker the blob must already be linked at an address this
// function would choose; otherwise PlacementMismatch.
PatchPlan plan(const elf::BinaryImage &image, const meta::FunctionMetadata &fn, const link::LinkedBlob &blob,
               const Relinker &relink = {}, const PlanOptions &options = {});

elf::BinaryImage apply(const elf::BinaryImage &image, const PatchPlan &plan);

struct ByteRange {
  u64 begin = 0;
  u64 end = 0; // exclusive; ~0 for "to end of file"
};

// File ranges of `image` that apply() may change.
std::vector<ByteRange> declared_changes(const elf::BinaryImage &image, const PatchPlan &plan);

std::string to_string(Placement p);
std::string report_json(const PatchPlan &plan);

} // namespace scribe::retrofit
