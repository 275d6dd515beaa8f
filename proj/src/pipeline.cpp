#include "scribe/pipeline.hpp"
#include "scribe/error.hpp"
#include "scribe/process.hpp"

#include <filesystem>
#include <functional>
#include <json.hpp>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace scribe::pipeline {

std::vector<std::string> forced_compiler_flags() {
  return {"-fpie",
          "-mcmodel=small",
          "-fno-omit-frame-pointer",
          "-fno-stack-protector",
          "-fno-asynchronous-unwind-tables",
          "-fno-unwind-tables",
          "-fcf-protection=none",
          "-fno-common"};
}

std::vector<std::string> default_compiler_command() {
  return {"gcc", "{opt}", "-std=gnu11", "-w", "-include", "{header}", "-c", "{input}", "-o", "{output}"};
}

namespace {

std::string resolve_path(const std::string &p, const std::string &base) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute())
    return p;
  return (fs::path(base) / p).lexically_normal().string();
}

template <typename T> T field(const json &j, const char *key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception &) {
    fail(ErrorKind::ConfigError, std::string("config field '") + key + "' is missing or has the wrong type");
  }
}

} // namespace

PipelineConfig parse_config(const std::string &text, const std::string &base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error &e) {
    fail(ErrorKind::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object())
    fail(ErrorKind::ConfigError, "config root must be an object");
  static const std::set<std::string> known = {"binary", "sidecar", "source", "output", "function",
                                              "compiler_command", "opt_level", "work_dir", "backend", "canary",
                                              "pin_layout", "verify_command", "verify_timeout", "placement",
                                              "report"};
  for (auto &[k, v] : j.items())
    if (!known.count(k))
      fail(ErrorKind::ConfigError, "unknown config field '" + k + "'");

  PipelineConfig c;
  c.binary_path = resolve_path(field<std::string>(j, "binary"), base);
  c.sidecar_path = resolve_path(field<std::string>(j, "sidecar"), base);
  c.decompiled_source_path = resolve_path(field<std::string>(j, "source"), base);
  c.output_path = resolve_path(field<std::string>(j, "output"), base);
  if (j.contains("function"))
    c.function_name = field<std::string>(j, "function");
  c.compiler_command = j.contains("compiler_command") ? field<std::vector<std::string>>(j, "compiler_command")
                                                      : default_compiler_command();
  if (j.contains("opt_level"))
    c.opt_level = field<std::string>(j, "opt_level");
  if (j.contains("work_dir"))
    c.work_dir = resolve_path(field<std::string>(j, "work_dir"), base);
  if (j.contains("backend")) {
    std::string b = field<std::string>(j, "backend");
    if (b != "internal" && b != "external")
      fail(ErrorKind::ConfigError, "backend must be \"internal\" or \"external\"");
    c.backend = b == "internal" ? link::Backend::internal : link::Backend::external;
  }
  if (j.contains("canary")) {
    std::string m = field<std::string>(j, "canary");
    if (m != "preserve" && m != "noop")
      fail(ErrorKind::ConfigError, "canary must be \"preserve\" or \"noop\"");
    c.canary = m == "preserve" ? fixer::CanaryMode::preserve : fixer::CanaryMode::noop;
  }
  if (j.contains("pin_layout"))
    c.pin_layout = field<bool>(j, "pin_layout");
  if (j.contains("verify_command"))
    c.verify_command = field<std::vector<std::string>>(j, "verify_command");
  if (j.contains("verify_timeout"))
    c.verify_timeout = field<double>(j, "verify_timeout");
  if (j.contains("placement")) {
    const json &p = j["placement"];
    if (!p.is_object())
      fail(ErrorKind::ConfigError, "placement must be an object");
    for (auto &[k, v] : p.items()) {
      bool *dst = k == "in_place"      ? &c.placement.allow_in_place
                  : k == "padding"     ? &c.placement.allow_padding
                  : k == "new_segment" ? &c.placement.allow_new_segment
                                       : nullptr;
      if (!dst)
        fail(ErrorKind::ConfigError, "unknown placement field '" + k + "'");
      if (!v.is_boolean())
        fail(ErrorKind::ConfigError, "placement." + k + " must be a boolean");
      *dst = v.get<bool>();
    }
  }
  if (j.contains("report"))
    c.report_path = resolve_path(field<std::string>(j, "report"), base);

  auto has = [&](const std::string &ph) {
    for (const std::string &a : c.compiler_command)
      if (a.find(ph) != std::string::npos)
        return true;
    return false;
  };
  if (c.compiler_command.empty() || !has("{input}") || !has("{output}"))
    fail(ErrorKind::ConfigError, "compiler_command must mention {input} and {output}");
  return c;
}

PipelineConfig load_config(const std::string &path) {
  return parse_config(read_text_file(path), fs::path(path).parent_path().string());
}

namespace {

std::string substitute(std::string s, const std::vector<std::pair<std::string, std::string>> &vars) {
  for (auto &[k, v] : vars)
    for (size_t pos = s.find(k); pos != std::string::npos; pos = s.find(k, pos + v.size()))
      s.replace(pos, k.size(), v);
  return s;
}

} // namespace

VerifyReport verify(const std::vector<std::string> &tmpl, const std::string &binary, double timeout) {
  if (tmpl.empty())
    fail(ErrorKind::VerifyCommandMissing, "no verification command configured");
  std::vector<std::string> argv;
  for (const std::string &a : tmpl)
    argv.push_back(substitute(a, {{"{binary}", fs::absolute(binary).string()}}));
  ProcessResult r = run_process(argv, "", timeout);
  if (r.exit_code == 127 && r.out.empty())
    fail(ErrorKind::VerifyCommandMissing, "cannot run '" + argv[0] + "'");

  VerifyReport v;
  v.exit_code = r.exit_code;
  v.term_signal = r.term_signal;
  v.timed_out = r.timed_out;
  v.output = r.out + r.err;
  std::istringstream in(r.out);
  std::string line;
  bool any_fail = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string verdict, name;
    ls >> verdict >> name;
    if (verdict == "PASS" || verdict == "FAIL") {
      v.tests.push_back({name, verdict == "PASS"});
      any_fail |= verdict == "FAIL";
    }
  }
  v.passed = r.ok() && !any_fail;
  return v;
}

namespace {

json verify_json(const VerifyReport &v) {
  json j = {{"passed", v.passed}, {"exit_code", v.exit_code}, {"signal", v.term_signal}, {"timed_out", v.timed_out}};
  j["tests"] = json::array();
  for (const TestOutcome &t : v.tests)
    j["tests"].push_back({{"name", t.name}, {"passed", t.passed}});
  return j;
}

struct Run {
  PipelineResult result;
  json report = json::object();

  bool stage(const std::string &name, const std::function<void(StageRecord &)> &body) {
    StageRecord rec;
    rec.name = name;
    try {
      body(rec);
      rec.ok = true;
    } catch (const Error &e) {
      rec.error_kind = std::string(to_string(e.kind()));
      rec.message = e.what();
    } catch (const std::exception &e) {
      rec.error_kind = "IoError";
      rec.message = e.what();
    }
    result.stages.push_back(rec);
    return rec.ok;
  }
};

} // namespace

PipelineResult run_pipeline(const PipelineConfig &cfg, const std::string &stop_after) {
  Run run;
  std::string work = cfg.work_dir.empty() ? cfg.output_path + ".scribe" : cfg.work_dir;
  auto wpath = [&](const std::string &f) { return (fs::path(work) / f).string(); };

  elf::BinaryImage image;
  meta::Sidecar sidecar;
  meta::FunctionMetadata fn;
  meta::SymbolMap symbols;
  fixer::DecompUnit unit;
  fixer::CompatHeader header;
  std::string emitted_name;
  std::string source_for_build;
  link::RelocatableObject object;
  std::optional<link::LinkedBlob> blob;
  retrofit::Relinker relinker;

  auto finish = [&](int code) {
    run.result.exit_code = code;
    json stages = json::array();
    for (const StageRecord &s : run.result.stages) {
      json js = {{"name", s.name}, {"ok", s.ok}};
      if (!s.ok)
        js["error"] = {{"kind", s.error_kind}, {"message", s.message}};
      json arts = json::object();
      for (auto &[k, v] : s.artifacts)
        arts[k] = v;
      js["artifacts"] = arts;
      stages.push_back(js);
    }
    run.report["stages"] = stages;
    run.report["exit_code"] = code;
    run.result.report_json = run.report.dump(2) + "\n";
    try {
      fs::create_directories(work);
      write_text_file(wpath("report.json"), run.result.report_json);
      if (!cfg.report_path.empty())
        write_text_file(cfg.report_path, run.result.report_json);
    } catch (const std::exception &) {
    }
    return run.result;
  };

  bool ok = run.stage("load", [&](StageRecord &rec) {
    fs::create_directories(work);
    image = elf::parse(read_file(cfg.binary_path));
    sidecar = meta::load_sidecar(cfg.sidecar_path);
    if (cfg.function_name.empty()) {
      if (sidecar.functions.size() != 1)
        fail(ErrorKind::ConfigError, "sidecar lists several functions; set 'function'");
      fn = sidecar.functions.front();
    } else {
      fn = sidecar.function(cfg.function_name);
    }
    symbols = meta::merge(meta::extract_symbols(image), sidecar.symbols);
    rec.artifacts.push_back({"function", fn.name});
  });
  if (!ok)
    return finish(2);

  ok = run.stage("fix", [&](StageRecord &rec) {
    unit.source_text = read_text_file(cfg.decompiled_source_path);
    unit.function_name = fn.name;
    unit = fixer::run_fixer(std::move(unit), symbols, sidecar.definitions);
    header = fixer::emit_compat_header(sidecar.definitions, cfg.canary);
    emitted_name = fn.name;
    for (auto &[now, orig] : unit.renames)
      if (orig == fn.name)
        emitted_name = now;
    write_text_file(wpath("fixed.c"), unit.source_text);
    write_text_file(wpath("compat.h"), header.header_text);
    write_text_file(wpath("diagnostics.jsonl"), fixer::diagnostics_jsonl(unit));
    rec.artifacts = {{"source", wpath("fixed.c")}, {"header", wpath("compat.h")},
                     {"diagnostics", wpath("diagnostics.jsonl")}};
    run.report["applied_rules"] = unit.applied_rules;
  });
  if (!ok)
    return finish(2);
  if (stop_after == "fix")
    return finish(0);

  ok = run.stage("pin", [&](StageRecord &rec) {
    source_for_build = unit.source_text;
    if (!cfg.pin_layout || fn.stack.empty()) {
      rec.artifacts.push_back({"skipped", cfg.pin_layout ? "no stack layout" : "disabled"});
      return;
    }
    meta::FunctionMetadata named = fn;
    named.name = emitted_name;
    layout::PinnedFramePlan plan = layout::build_frame_plan(named);
    layout::TransformedSource ts = layout::apply_pinning(unit, plan, sidecar.definitions.typedef_lines);
    source_for_build = ts.source_text;
    write_text_file(wpath("pinned.c"), ts.source_text);
    write_text_file(wpath("frame_plan.json"), layout::plan_report_json(plan));
    rec.artifacts = {{"source", wpath("pinned.c")}, {"frame_plan", wpath("frame_plan.json")}};
    run.report["frame_plan"] = json::parse(layout::plan_report_json(plan));
  });
  if (!ok)
    return finish(2);
  if (stop_after == "pin")
    return finish(0);

  ok = run.stage("build", [&](StageRecord &rec) {
    std::string input = wpath("patch.c");
    std::string output = wpath("patch.o");
    write_text_file(input, source_for_build);
    std::vector<std::pair<std::string, std::string>> vars = {
        {"{input}", input}, {"{output}", output}, {"{header}", wpath("compat.h")}, {"{opt}", cfg.opt_level}};
    std::vector<std::string> argv;
    bool header_used = false;
    const std::vector<std::string> &tmpl =
        cfg.compiler_command.empty() ? default_compiler_command() : cfg.compiler_command;
    for (const std::string &a : tmpl) {
      header_used |= a.find("{header}") != std::string::npos;
      argv.push_back(substitute(a, vars));
    }
    std::vector<std::string> forced = forced_compiler_flags();
    argv.insert(argv.begin() + 1, forced.begin(), forced.end());
    if (!header_used) {
      argv.insert(argv.begin() + 1, wpath("compat.h"));
      argv.insert(argv.begin() + 1, "-include");
    }
    fs::remove(output);
    ProcessResult r = run_process(argv);
    write_text_file(wpath("compiler.log"), join_command(argv) + "\n" + r.out + r.err);
    rec.artifacts = {{"object", output}, {"log", wpath("compiler.log")}};
    if (!r.ok() || !fs::exists(output)) {
      if (r.err.find("scribe-layout") != std::string::npos)
        fail(ErrorKind::LayoutInfeasible, "the compiler cannot honour the pinned layout: " + r.err);
      fail(ErrorKind::CompilerInvocationFailed, join_command(argv) + ": " + r.err);
    }
    object = link::parse_object(read_file(output));
  });
  if (!ok)
    return finish(2);
  if (stop_after == "build")
    return finish(0);

  ok = run.stage("resolve", [&](StageRecord &rec) {
    write_text_file(wpath("symbols.ld"), link::emit_symbol_script(symbols));
    auto renames = unit.renames;
    int n = 0;
    relinker = [&, renames, n](u64 c, u64 d) mutable {
      if (cfg.backend == link::Backend::internal)
        return link::resolve(object, symbols, c, d, renames);
      return link::resolve_external(wpath("patch.o"), object, symbols, c, d, renames,
                                    wpath("ld." + std::to_string(n++)));
    };
    blob = relinker(fn.entry_vaddr, retrofit::provisional_data_vaddr(image));
    rec.artifacts = {{"symbol_script", wpath("symbols.ld")}};
  });
  if (!ok)
    return finish(2);
  if (stop_after == "resolve")
    return finish(0);

  ok = run.stage("inject", [&](StageRecord &rec) {
    meta::FunctionMetadata named = fn;
    named.name = emitted_name;
    retrofit::PatchPlan plan = retrofit::plan(image, named, *blob, relinker, cfg.placement);
    elf::BinaryImage patched = retrofit::apply(image, plan);
    link::write_blob(plan.blob, wpath("blob"));
    write_text_file(wpath("patch_plan.json"), retrofit::report_json(plan));
    write_file_atomic(cfg.output_path, elf::serialize(patched));
    rec.artifacts = {{"output", cfg.output_path}, {"blob", wpath("blob")}, {"plan", wpath("patch_plan.json")}};
    run.report["patch"] = json::parse(retrofit::report_json(plan));
    run.result.plan = plan;
  });
  if (!ok)
    return finish(2);
  if (stop_after == "inject" || cfg.verify_command.empty())
    return finish(0);

  bool passed = false;
  ok = run.stage("verify", [&](StageRecord &) {
    VerifyReport v = verify(cfg.verify_command, cfg.output_path, cfg.verify_timeout);
    run.report["verify"] = verify_json(v);
    run.result.verification = v;
    passed = v.passed;
  });
  if (!ok)
    return finish(2);
  if (!passed) {
    run.result.stages.back().ok = false;
    run.result.stages.back().error_kind = "VerifyFailed";
    run.result.stages.back().message = "verification command reported failures";
    return finish(3);
  }
  return finish(0);
}

} // namespace scribe::pipeline
