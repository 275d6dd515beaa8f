#pragma once

#include "scribe/decomp_fixer.hpp"
#include "scribe/layout_enforcer.hpp"
#include "scribe/link_resolver.hpp"
#include "scribe/retrofit.hpp"

#include <optional>
#include <string>
#include <vector>

namespace scribe::pipeline {

struct PipelineConfig {
  std::string binary_path;
  std::string sidecar_path;
  std::string decompiled_source_path;
  std::string output_path;
  std::string function_name; // may be empty when the sidecar lists one function
  // argv template; {input} {output} {header} {opt} are substituted
  std::vector<std::string> compiler_command;
  std::string opt_level = "-O2";
  std::string work_dir; // default: <output>.scribe
  link::Backend backend = link::Backend::internal;
  fixer::CanaryMode canary = fixer::CanaryMode::preserve;
  bool pin_layout = true;
  // argv template; {binary} is substituted
  std::vector<std::string> verify_command;
  double verify_timeout = 60;
  retrofit::PlanOptions placement;
  std::string report_path;
};

std::vector<std::string> default_compiler_command();
// Flags always added after argv[0].
std::vector<std::string> forced_compiler_flags();

PipelineConfig parse_config(const std::string &json_text, const std::string &base_dir = "");
PipelineConfig load_config(const std::string &path);

struct TestOutcome {
  std::string name;
  bool passed = false;
};

struct VerifyReport {
  bool passed = false;
  int exit_code = -1;
  int term_signal = 0;
  bool timed_out = false;
  std::vector<TestOutcome> tests;
  std::string output;
};

VerifyReport verify(const std::vector<std::string> &command_template, const std::string &binary,
                    double timeout_seconds = 60);

struct StageRecord {
  std::string name;
  bool ok = false;
  std::string error_kind;
  std::string message;
  std::vector<std::pair<std::string, std::string>> artifacts;
};

struct PipelineResult {
  int exit_code = 0; // 0 ok, 2 stage failure, 3 verification failure
  std::vector<StageRecord> stages;
  std::optional<retrofit::PatchPlan> plan;
  std::optional<VerifyReport> verification;
  std::string report_json;
};

// Stops after the named stage ("fix", "pin", "build", "resolve", "inject",
// "verify"); empty runs everything.
PipelineResult run_pipeline(const PipelineConfig &config, const std::string &stop_after = "");

} // namespace scribe::pipeline
