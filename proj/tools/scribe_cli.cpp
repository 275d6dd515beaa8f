#include "scribe/error.hpp"
#include "scribe/pipeline.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

using namespace scribe;
namespace fs = std::filesystem;

namespace {

u64 addr(const std::string &s) { return parse_hex(s); }

meta::SymbolMap symbols_for(const std::string &binary, const meta::Sidecar &sc) {
  return meta::merge(meta::extract_symbols(elf::parse(read_file(binary))), sc.symbols);
}

int print_stages(const pipeline::PipelineResult &r) {
  for (const pipeline::StageRecord &s : r.stages) {
    std::cerr << (s.ok ? "ok   " : "FAIL ") << s.name;
    if (!s.ok)
      std::cerr << ": " << s.message;
    std::cerr << "\n";
  }
  return r.exit_code;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"scribe: apply source-level patches to x86-64 ELF executables"};
  app.require_subcommand(1);

  std::string config, backend, canary, report, stop_after;
  bool no_pin = false;

  auto add_overrides = [&](CLI::App *c) {
    c->add_option("--config", config, "pipeline configuration (JSON)")->required();
    c->add_option("--backend", backend, "internal or external")->check(CLI::IsMember({"internal", "external"}));
    c->add_option("--canary", canary, "preserve or noop")->check(CLI::IsMember({"preserve", "noop"}));
    c->add_flag("--no-pin", no_pin, "skip stack layout pinning");
    c->add_option("--emit-report", report, "write the run report here");
  };

  CLI::App *run = app.add_subcommand("run", "full pipeline");
  add_overrides(run);
  run->add_option("--stop-after", stop_after, "fix, pin, build, resolve or inject");
  CLI::App *build = app.add_subcommand("build", "fix, pin and compile only");
  add_overrides(build);

  std::string source, sidecar_path, binary, out, function, object, blob_dir, code_addr, data_addr;
  CLI::App *fix = app.add_subcommand("fix", "repair decompiled C and emit the compat header");
  fix->add_option("--source", source)->required();
  fix->add_option("--sidecar", sidecar_path)->required();
  fix->add_option("--binary", binary, "binary whose symbols feed prototype reconciliation");
  fix->add_option("--out-dir", out)->required();
  fix->add_option("--canary", canary)->check(CLI::IsMember({"preserve", "noop"}));

  CLI::App *pin = app.add_subcommand("pin", "pin a function's stack layout");
  pin->add_option("--source", source)->required();
  pin->add_option("--sidecar", sidecar_path)->required();
  pin->add_option("--function", function)->required();
  pin->add_option("--out", out)->required();

  CLI::App *resolve = app.add_subcommand("resolve", "link an object against the original binary");
  resolve->add_option("--object", object)->required();
  resolve->add_option("--binary", binary)->required();
  resolve->add_option("--sidecar", sidecar_path)->required();
  resolve->add_option("--code", code_addr, "code address (hex)")->required();
  resolve->add_option("--data", data_addr, "data address (hex)")->required();
  resolve->add_option("--out", out, "blob directory")->required();
  resolve->add_option("--backend", backend)->check(CLI::IsMember({"internal", "external"}));

  bool no_in_place = false, no_padding = false, no_segment = false;
  CLI::App *inject = app.add_subcommand("inject", "place a linked blob and divert the function");
  inject->add_option("--binary", binary)->required();
  inject->add_option("--sidecar", sidecar_path)->required();
  inject->add_option("--function", function)->required();
  inject->add_option("--blob", blob_dir)->required();
  inject->add_option("--out", out)->required();
  inject->add_flag("--no-in-place", no_in_place);
  inject->add_flag("--no-padding", no_padding);
  inject->add_flag("--no-new-segment", no_segment);
  inject->add_option("--emit-report", report);

  std::vector<std::string> command;
  CLI::App *ver = app.add_subcommand("verify", "run a test command against a binary");
  ver->add_option("--binary", binary)->required();
  ver->add_option("command", command, "command template; {binary} is substituted")->required();

  CLI::App *val = app.add_subcommand("validate", "check an executable's segment structure");
  val->add_option("--binary", binary)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed() || build->parsed()) {
      pipeline::PipelineConfig cfg = pipeline::load_config(config);
      if (!backend.empty())
        cfg.backend = backend == "internal" ? link::Backend::internal : link::Backend::external;
      if (!canary.empty())
        cfg.canary = canary == "preserve" ? fixer::CanaryMode::preserve : fixer::CanaryMode::noop;
      if (no_pin)
        cfg.pin_layout = false;
      if (!report.empty())
        cfg.report_path = report;
      pipeline::PipelineResult r = pipeline::run_pipeline(cfg, build->parsed() ? "build" : stop_after);
      if (r.verification)
        for (const pipeline::TestOutcome &t : r.verification->tests)
          std::cout << (t.passed ? "PASS " : "FAIL ") << t.name << "\n";
      return print_stages(r);
    }

    if (fix->parsed()) {
      meta::Sidecar sc = meta::load_sidecar(sidecar_path);
      meta::SymbolMap syms = binary.empty() ? sc.symbols : symbols_for(binary, sc);
      fixer::DecompUnit u;
      u.source_text = read_text_file(source);
      u = fixer::run_fixer(std::move(u), syms, sc.definitions);
      auto mode = canary == "noop" ? fixer::CanaryMode::noop : fixer::CanaryMode::preserve;
      fs::create_directories(out);
      write_text_file((fs::path(out) / "fixed.c").string(), u.source_text);
      write_text_file((fs::path(out) / "compat.h").string(), fixer::emit_compat_header(sc.definitions, mode).header_text);
      write_text_file((fs::path(out) / "diagnostics.jsonl").string(), fixer::diagnostics_jsonl(u));
      for (const std::string &r : u.applied_rules)
        std::cout << r << "\n";
      return 0;
    }

    if (pin->parsed()) {
      meta::Sidecar sc = meta::load_sidecar(sidecar_path);
      fixer::DecompUnit u;
      u.source_text = read_text_file(source);
      layout::PinnedFramePlan plan = layout::build_frame_plan(sc.function(function));
      layout::TransformedSource ts = layout::apply_pinning(u, plan, sc.definitions.typedef_lines);
      write_text_file(out, ts.source_text);
      std::cout << layout::plan_report_json(plan);
      return 0;
    }

    if (resolve->parsed()) {
      meta::Sidecar sc = meta::load_sidecar(sidecar_path);
      meta::SymbolMap syms = symbols_for(binary, sc);
      link::RelocatableObject obj = link::parse_object(read_file(object));
      link::LinkedBlob b = backend == "external"
                               ? link::resolve_external(object, obj, syms, addr(code_addr), addr(data_addr), {},
                                                        (fs::path(out) / "ld").string())
                               : link::resolve(obj, syms, addr(code_addr), addr(data_addr));
      link::write_blob(b, out);
      std::cout << link::manifest_json(b);
      return 0;
    }

    if (inject->parsed()) {
      meta::Sidecar sc = meta::load_sidecar(sidecar_path);
      elf::BinaryImage img = elf::parse(read_file(binary));
      retrofit::PlanOptions opt;
      opt.allow_in_place = !no_in_place;
      opt.allow_padding = !no_padding;
      opt.allow_new_segment = !no_segment;
      retrofit::PatchPlan p = retrofit::plan(img, sc.function(function), link::read_blob(blob_dir), {}, opt);
      write_file_atomic(out, elf::serialize(retrofit::apply(img, p)));
      std::string rep = retrofit::report_json(p);
      if (!report.empty())
        write_text_file(report, rep);
      std::cout << rep;
      return 0;
    }

    if (ver->parsed()) {
      pipeline::VerifyReport v = pipeline::verify(command, binary);
      for (const pipeline::TestOutcome &t : v.tests)
        std::cout << (t.passed ? "PASS " : "FAIL ") << t.name << "\n";
      if (v.term_signal)
        std::cout << "terminated by signal " << v.term_signal << "\n";
      return v.passed ? 0 : 3;
    }

    if (val->parsed()) {
      elf::BinaryImage img = elf::parse(read_file(binary));
      for (const elf::SegmentHeader &s : img.program_headers)
        std::cout << elf::segment_type_name(s.type) << " off=" << hex(s.offset) << " vaddr=" << hex(s.vaddr)
                  << " filesz=" << hex(s.filesz) << " memsz=" << hex(s.memsz) << " flags=" << s.flags << "\n";
      std::vector<std::string> issues = elf::validate(img);
      for (const std::string &i : issues)
        std::cout << "issue: " << i << "\n";
      return issues.empty() ? 0 : 2;
    }
  } catch (const Error &e) {
    std::cerr << "scribe: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "scribe: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
