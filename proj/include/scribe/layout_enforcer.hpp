#pragma once

#include "scribe/binary_metadata.hpp"
#include "scribe/decomp_fixer.hpp"

#include <map>
#include <string>
#include <vector>

// Reproduces a function's original stack layout in recompiled source by
// moving the listed locals into one packed frame object.
namespace scribe::layout {

struct LayoutEntry {
  i64 offset = 0;
  u64 size = 0;
};

// sp-relative (nonnegative, upward) to frame-pointer-relative (negative).
std::map<std::string, i64> convert_sp_to_bp(const std::map<std::string, LayoutEntry> &layout);

struct FrameSlot {
  std::string var_name;
  u64 frame_offset = 0;
  u64 size = 0;
  u64 pad_before = 0;
};

struct PinnedFramePlan {
  std::string function_name;
  u64 frame_bytes = 0;
  std::vector<FrameSlot> slots; // ascending frame_offset
  i64 anchor_offset = 0;        // bp offset of frame byte 0
  std::map<std::string, i64> bp_layout;
};

PinnedFramePlan build_frame_plan(const meta::FunctionMetadata &fn);

struct TransformedSource {
  std::string source_text;
  std::string compat_header;
  std::vector<std::string> assertions;
  PinnedFramePlan plan;
};

// extra_typedefs: typedef lines visible to the unit through the header.
TransformedSource apply_pinning(const fixer::DecompUnit &unit, const PinnedFramePlan &plan,
                                const std::vector<std::string> &extra_typedefs = {});

std::string frame_struct_name(const std::string &function_name);
std::string plan_report_json(const PinnedFramePlan &plan);

} // namespace scribe::layout
