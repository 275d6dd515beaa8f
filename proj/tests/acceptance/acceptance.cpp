#include "fixture_corpus.hpp"
#include "reloc_corpus.hpp"

#include "scribe/decomp_fixer.hpp"
#include "scribe/error.hpp"
#include "scribe/layout_enforcer.hpp"
#include "scribe/pipeline.hpp"
#include "scribe/process.hpp"
#include "scribe/retrofit.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <map>
#include <random>
#include <set>

using namespace scribe;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

struct Check {
  Outcome &o;
  void operator()(bool cond, const std::string &what) {
    if (!cond && o.ok) {
      o.ok = false;
      o.detail = what;
    }
  }
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::map<std::string, fixtures::BuiltFixture> &corpus() {
  static std::map<std::string, fixtures::BuiltFixture> built;
  if (built.empty()) {
    std::string root = fixtures::scratch_dir("acceptance-fixtures");
    for (const fixtures::FixtureSpec &s : fixtures::load_corpus())
      built.emplace(s.name, fixtures::build_fixture(s, root));
  }
  return built;
}

const fixtures::BuiltFixture &fixture(const std::string &name) { return corpus().at(name); }

struct Patched {
  pipeline::PipelineResult result;
  std::string output;
  std::string failed_stage;
  double seconds = 0;
};

std::map<std::string, Patched> &patched_runs() {
  static std::map<std::string, Patched> runs;
  return runs;
}

const Patched &patch(const std::string &name, bool pin = true) {
  std::string key = name + (pin ? "" : "-nopin");
  auto it = patched_runs().find(key);
  if (it != patched_runs().end())
    return it->second;
  const fixtures::BuiltFixture &fx = fixture(name);
  Patched p;
  p.output = fixtures::scratch_dir("acceptance-out") + "/" + key + ".bin";
  pipeline::PipelineConfig c = fixtures::config_for(fx, fx.spec.patched_source(), p.output);
  c.pin_layout = pin;
  auto t0 = Clock::now();
  p.result = pipeline::run_pipeline(c);
  p.seconds = seconds_since(t0);
  for (const pipeline::StageRecord &s : p.result.stages)
    if (!s.ok)
      p.failed_stage = s.name + ": " + s.message;
  return patched_runs().emplace(key, std::move(p)).first->second;
}

std::vector<std::string> failing_tests(const pipeline::VerifyReport &v) {
  std::vector<std::string> out;
  for (const pipeline::TestOutcome &t : v.tests)
    if (!t.passed)
      out.push_back(t.name);
  return out;
}

std::string first_difference(const Bytes &a, const Bytes &b) {
  if (a.size() != b.size())
    return "sizes " + hex(a.size()) + " vs " + hex(b.size());
  for (size_t i = 0; i < a.size(); i++)
    if (a[i] != b[i])
      return "offset " + hex(i) + ": " + hex(a[i]) + " vs " + hex(b[i]);
  return "equal";
}

std::string join(const std::vector<std::string> &v) {
  std::string s;
  for (const std::string &x : v)
    s += (s.empty() ? "" : ",") + x;
  return s;
}

// ELF round-trip -----------------------------------------------------------

Bytes mutate(const Bytes &orig, std::mt19937_64 &rng, std::string &how) {
  elf::BinaryImage img = elf::parse(orig);
  auto pick = [&](u64 n) { return std::uniform_int_distribution<u64>(0, n - 1)(rng); };
  switch (pick(4)) {
  case 0: {
    // rewrite bytes inside a content-bearing section
    std::vector<const elf::SectionHeader *> secs;
    for (const elf::SectionHeader &s : *img.section_headers)
      if (s.type == 1 /* PROGBITS */ && s.size > 0)
        secs.push_back(&s);
    const elf::SectionHeader *s = secs[pick(secs.size())];
    Bytes b = orig;
    for (int i = 0, n = 1 + pick(16); i < n; i++)
      b[s->offset + pick(s->size)] = static_cast<u8>(pick(256));
    how = "section bytes " + s->name;
    return b;
  }
  case 1: {
    Bytes b = orig;
    for (u64 i = 0, n = 1 + pick(300); i < n; i++)
      b.push_back(static_cast<u8>(pick(256)));
    how = "trailing bytes";
    return b;
  }
  case 2: {
    Bytes content(1 + pick(0x3000));
    for (u8 &c : content)
      c = static_cast<u8>(pick(256));
    how = "new load segment";
    return elf::serialize(elf::add_load_segment(img, content, pick(2) ? 5 : 6, 0x1000).first);
  }
  default: {
    std::optional<elf::PaddingRegion> r = elf::find_padding(img, 16, true);
    if (!r) {
      how = "identity";
      return orig;
    }
    Bytes fill(1 + pick(r->length));
    for (u8 &c : fill)
      c = static_cast<u8>(pick(256));
    elf::write_padding(img, *r, fill);
    how = "padding write";
    return elf::serialize(img);
  }
  }
}

Outcome elf_round_trip() {
  Outcome o;
  Check check{o};
  std::vector<Bytes> inputs;
  for (auto &[name, fx] : corpus())
    for (const std::string &p : {fx.target_bin, fx.unstripped_bin, fx.reference_bin})
      inputs.push_back(read_file(p));
  std::mt19937_64 rng(20240611);
  std::vector<Bytes> variants;
  std::vector<std::string> hows;
  for (int i = 0; i < 20; i++) {
    std::string how;
    variants.push_back(mutate(inputs[i % inputs.size()], rng, how));
    hows.push_back(how);
    check(elf::validate(elf::parse(variants.back())).empty(), "variant " + std::to_string(i) + " (" + how + ") is not valid");
  }
  auto t0 = Clock::now();
  size_t n = 0;
  for (const Bytes &b : inputs)
    check(elf::serialize(elf::parse(b)) == b, "fixture binary " + std::to_string(n++) + " not reproduced");
  for (size_t i = 0; i < variants.size(); i++)
    check(elf::serialize(elf::parse(variants[i])) == variants[i], "variant " + std::to_string(i) + " (" + hows[i] + ") not reproduced");
  double dt = seconds_since(t0);
  check(dt < 1.0, "took " + std::to_string(dt) + " s");
  if (o.ok)
    o.detail = std::to_string(inputs.size()) + " fixture binaries + 20 variants in " + std::to_string(dt) + " s";
  return o;
}

// Edit locality -------------------------------------------------------------

Outcome edit_locality() {
  Outcome o;
  Check check{o};
  size_t total = 0;
  for (auto &[name, fx] : corpus()) {
    const Patched &p = patch(name);
    check(p.result.plan.has_value(), name + ": no plan (" + p.failed_stage + ")");
    if (!p.result.plan)
      continue;
    auto t0 = Clock::now();
    elf::BinaryImage orig = elf::parse(read_file(fx.target_bin));
    Bytes after = elf::serialize(retrofit::apply(orig, *p.result.plan));
    check(after == read_file(p.output), name + ": re-applied plan differs from the pipeline output");
    std::vector<retrofit::ByteRange> allowed = retrofit::declared_changes(orig, *p.result.plan);
    auto declared = [&](u64 off) {
      for (const retrofit::ByteRange &r : allowed)
        if (off >= r.begin && off < r.end)
          return true;
      return false;
    };
    const Bytes &before = orig.raw_bytes;
    for (u64 i = 0; i < after.size(); i++) {
      bool changed = i >= before.size() || before[i] != after[i];
      if (changed) {
        total++;
        if (!declared(i)) {
          check(false, name + ": byte " + hex(i) + " changed outside the declared set");
          break;
        }
      }
    }
    double dt = seconds_since(t0);
    check(dt < 1.0, name + ": took " + std::to_string(dt) + " s");
  }
  if (o.ok)
    o.detail = std::to_string(corpus().size()) + " injects, " + std::to_string(total) + " changed bytes all declared";
  return o;
}

// Trampolines ----------------------------------------------------------------

Outcome trampoline_algebra() {
  Outcome o;
  Check check{o};
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<u64> at_d(0x400000, 0x7fff00000000ull);
  std::uniform_int_distribution<i64> rel_d(INT32_MIN, INT32_MAX);
  for (int i = 0; i < 10000 && o.ok; i++) {
    u64 at = at_d(rng);
    i64 rel = rel_d(rng);
    u64 target = at + 5 + static_cast<u64>(rel);
    std::array<u8, 5> b = retrofit::encode_trampoline(at, target);
    check(b[0] == 0xe9, "opcode");
    i32 disp = static_cast<i32>(u32(b[1]) | u32(b[2]) << 8 | u32(b[3]) << 16 | u32(b[4]) << 24);
    check(disp == rel, "displacement for " + hex(at) + " -> " + hex(target));
    check(retrofit::decode_trampoline(at, b) == target, "decode for " + hex(at) + " -> " + hex(target));
  }
  if (o.ok)
    o.detail = "10000 pairs";
  return o;
}

// sp -> bp conversion ------------------------------------------------------------

Outcome sp_to_bp_conversion() {
  Outcome o;
  Check check{o};
  // hand-derived tables
  struct Table {
    std::map<std::string, layout::LayoutEntry> in;
    std::map<std::string, i64> out;
  };
  std::vector<Table> tables = {
      {{{"buf", {0, 16}}, {"len", {16, 8}}}, {{"buf", -24}, {"len", -8}}},
      {{{"a", {0, 4}}, {"b", {8, 8}}, {"c", {32, 1}}}, {{"a", -33}, {"b", -25}, {"c", -1}}},
      {{{"s", {0, 16}}, {"v4", {16, 8}}, {"v5", {24, 8}}, {"v6", {32, 8}}, {"v7", {40, 8}}, {"v8", {48, 8}}, {"v9", {56, 8}}},
       {{"s", -64}, {"v4", -48}, {"v5", -40}, {"v6", -32}, {"v7", -24}, {"v8", -16}, {"v9", -8}}},
  };
  for (const Table &t : tables)
    check(layout::convert_sp_to_bp(t.in) == t.out, "hand-derived table mismatch");

  std::mt19937_64 rng(4242);
  auto pick = [&](u64 lo, u64 hi) { return std::uniform_int_distribution<u64>(lo, hi)(rng); };
  for (int n = 0; n < 100 && o.ok; n++) {
    std::map<std::string, layout::LayoutEntry> in;
    std::vector<std::pair<std::string, layout::LayoutEntry>> order;
    u64 cursor = pick(0, 8) * 8;
    for (size_t i = 0, k = pick(1, 10); i < k; i++) {
      u64 size = std::vector<u64>{1, 2, 4, 8, 12, 16, 24, 64, 100}[pick(0, 8)];
      std::string name = "var" + std::to_string(i);
      in[name] = {static_cast<i64>(cursor), size};
      order.push_back({name, in[name]});
      cursor += size + pick(0, 3) * pick(0, 8);
    }
    // table derived by walking down from the frame top
    std::map<std::string, i64> expect;
    i64 top = 0;
    for (auto &[name, e] : order)
      top = std::max(top, e.offset + static_cast<i64>(e.size));
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      expect[it->first] = -(top - it->second.offset);
    std::map<std::string, i64> got = layout::convert_sp_to_bp(in);
    check(got == expect, "layout " + std::to_string(n) + " differs from the derived table");
    i64 hi = INT64_MIN;
    for (auto &[name, off] : got)
      hi = std::max(hi, off + static_cast<i64>(in[name].size));
    check(hi == 0, "layout " + std::to_string(n) + ": top is " + std::to_string(hi));
    for (auto &[a, ea] : in)
      for (auto &[b, eb] : in)
        check(got[a] - got[b] == ea.offset - eb.offset, "layout " + std::to_string(n) + ": difference " + a + "-" + b);
  }
  if (o.ok)
    o.detail = std::to_string(tables.size()) + " fixed tables + 100 random layouts";
  return o;
}

// Relocation oracle --------------------------------------------------------------

Outcome relocation_oracle() {
  Outcome o;
  Check check{o};
  std::string dir = fixtures::scratch_dir("acceptance-reloc");
  std::vector<fixtures::RelocCase> cases = fixtures::make_reloc_cases(30, 1337, dir);
  std::set<link::RelocType> seen;
  size_t sites = 0;
  for (const fixtures::RelocCase &c : cases) {
    link::RelocatableObject obj = link::parse_object(read_file(c.object_path));
    for (const link::RelocationRecord &r : obj.relocations)
      seen.insert(r.type);
    link::LinkedBlob a = link::resolve(obj, c.symbols, c.code_vaddr, c.data_vaddr);
    link::LinkedBlob b =
        link::resolve_external(c.object_path, obj, c.symbols, c.code_vaddr, c.data_vaddr, {}, dir + "/" + c.name + ".ld");
    sites += a.patched_sites;
    check(a.code == b.code, c.name + ": code differs at " + first_difference(a.code, b.code));
    check(a.data == b.data, c.name + ": data differs at " + first_difference(a.data, b.data));
    check(a.entry_offsets == b.entry_offsets, c.name + ": entry offsets differ");
    check(a.stubs == b.stubs, c.name + ": stubs differ");
  }
  check(seen.size() == 4, "only " + std::to_string(seen.size()) + " relocation types exercised");
  if (o.ok)
    o.detail = std::to_string(cases.size()) + " objects, " + std::to_string(sites) + " sites, 4 relocation types";
  return o;
}

// Fixture end-to-end --------------------------------------------------------------

Outcome struct_decomposition() {
  Outcome o;
  Check check{o};
  const Patched &off = patch("param_block", false);
  const Patched &on = patch("param_block", true);
  check(off.result.verification.has_value(), "unpinned build did not reach verification: " + off.failed_stage);
  check(on.result.verification.has_value(), "pinned build did not reach verification: " + on.failed_stage);
  if (!o.ok)
    return o;
  std::vector<std::string> broken = failing_tests(*off.result.verification);
  std::vector<std::string> fixed = failing_tests(*on.result.verification);
  check(!broken.empty(), "unpinned patch passed every test");
  check(fixed.empty(), "pinned patch failed: " + join(fixed));
  check(on.result.exit_code == 0 && off.result.exit_code == 3, "exit codes");
  double dt = off.seconds + on.seconds;
  check(dt < 10, "took " + std::to_string(dt) + " s");
  if (o.ok)
    o.detail = "unpinned fails {" + join(broken) + "}, pinned passes all (" + std::to_string(dt) + " s)";
  return o;
}

Outcome run_via_cli(const std::string &name, std::string &detail) {
  Outcome o;
  Check check{o};
  auto t0 = Clock::now();
  const fixtures::BuiltFixture &fx = fixture(name);
  std::string dir = fixtures::scratch_dir("acceptance-cli") + "/" + name;
  fs::create_directories(dir);
  nlohmann::json cfg = {{"binary", fx.target_bin},
                        {"sidecar", fx.sidecar_path},
                        {"source", fx.spec.patched_source()},
                        {"output", dir + "/patched.bin"},
                        {"function", fx.spec.function},
                        {"verify_command", fx.verify_command()}};
  write_text_file(dir + "/config.json", cfg.dump(2));
  ProcessResult r = run_process({SCRIBE_CLI, "run", "--config", dir + "/config.json", "--emit-report", dir + "/report.json"});
  check(r.exit_code == 0, name + ": scribe run exited " + std::to_string(r.exit_code) + ": " + r.err);
  check(r.out.find("FAIL") == std::string::npos, name + ": failing tests: " + r.out);
  check(fs::exists(dir + "/report.json"), name + ": no report");
  fixtures::RunResult before = fixtures::run_binary(fx.target_bin, *fx.spec.poc);
  fixtures::RunResult after = fixtures::run_binary(dir + "/patched.bin", *fx.spec.poc);
  check(before.term_signal != 0, name + ": PoC does not crash the original");
  check(after.term_signal == 0 && after.exit_code == 0, name + ": PoC still fails on the patched binary");
  double dt = seconds_since(t0);
  check(dt < 30, name + ": took " + std::to_string(dt) + " s");
  detail += name + " (PoC signal " + std::to_string(before.term_signal) + " -> clean) ";
  return o;
}

Outcome cve_analogues() {
  std::string detail;
  Outcome a = run_via_cli("double_free", detail);
  Outcome b = run_via_cli("null_link", detail);
  if (!a.ok)
    return a;
  if (!b.ok)
    return b;
  return {true, detail};
}

Outcome prototype_overestimation() {
  Outcome o;
  Check check{o};
  const Patched &p = patch("proto_mismatch");
  check(p.result.exit_code == 0, "pipeline: " + p.failed_stage);
  std::string fixed = read_text_file(p.output + ".scribe/fixed.c");
  check(fixed.find("((long long (*)(__int64, long long))scale)(a1, 3LL)") != std::string::npos,
        "call site not cast");
  const fixtures::BuiltFixture &fx = fixture("proto_mismatch");
  for (const char *arg : {"-12", "0", "40"}) {
    fixtures::RunResult a = fixtures::run_binary(p.output, {arg});
    fixtures::RunResult b = fixtures::run_binary(fx.reference_bin, {arg});
    check(a.out == b.out, std::string("adjust(") + arg + ") = " + a.out + " expected " + b.out);
  }
  // the source as written does not even compile
  std::string dir = fixtures::scratch_dir("acceptance-proto");
  pipeline::PipelineConfig c = fixtures::config_for(fx, fx.spec.patched_source(), dir + "/unused.bin");
  ProcessResult raw = run_process({"gcc", "-c", "-w", "-include", p.output + ".scribe/compat.h", "-x", "c",
                                   fx.spec.patched_source(), "-o", dir + "/raw.o"});
  check(!raw.ok(), "unfixed source compiled");
  if (o.ok)
    o.detail = "cast call returns the reference value; unfixed source rejected by the compiler";
  return o;
}

Outcome pointer_call() {
  Outcome o;
  Check check{o};
  const Patched &p = patch("ptr_dispatch");
  check(p.result.exit_code == 0, "pipeline: " + p.failed_stage);
  if (!p.result.plan)
    return o;
  const retrofit::PatchPlan &plan = *p.result.plan;
  check(plan.placement == retrofit::Placement::new_segment, "placement is " + retrofit::to_string(plan.placement));
  const fixtures::BuiltFixture &fx = fixture("ptr_dispatch");
  const meta::SymbolEntry *ops = fx.sidecar.symbols.find("ops", meta::SymbolKind::object);
  check(ops != nullptr, "ops table not in sidecar");
  if (!ops)
    return o;
  elf::BinaryImage out = elf::parse(read_file(p.output));
  std::span<const u8> slot = out.bytes_at(ops->vaddr + 16, 8);
  check(load_le<u64>(slot.data()) == plan.function.entry_vaddr, "stored pointer was rewritten");
  check(retrofit::decode_trampoline(plan.function.entry_vaddr, out.bytes_at(plan.function.entry_vaddr, 5)) ==
            plan.trampoline->target_vaddr,
        "entry does not jump to the new segment");
  fixtures::RunResult r = fixtures::run_binary(p.output, {"2", "5", "0"});
  check(r.term_signal == 0 && r.out == "0\n", "division through the table: " + r.out);
  fixtures::RunResult q = fixtures::run_binary(p.output, {"2", "100", "7"});
  check(q.out == "14\n", "division result " + q.out);
  if (o.ok)
    o.detail = "ops[2] still holds " + hex(plan.function.entry_vaddr) + ", new code at " +
               hex(plan.trampoline->target_vaddr);
  return o;
}

Outcome jump_table() {
  Outcome o;
  Check check{o};
  const Patched &p = patch("switch_table");
  check(p.result.exit_code == 0, "pipeline: " + p.failed_stage);
  if (!p.result.plan)
    return o;
  const retrofit::PatchPlan &plan = *p.result.plan;
  const link::BlobItem *table = nullptr;
  for (const link::BlobItem &it : plan.blob.items)
    if (it.kind == link::ItemKind::jump_table)
      table = &it;
  check(table != nullptr, "no jump table in the blob");
  if (!table)
    return o;
  elf::BinaryImage out = elf::parse(read_file(p.output));
  u64 base = table->in_code ? plan.blob.code_vaddr : plan.blob.data_vaddr;
  const Bytes &src = table->in_code ? plan.blob.code : plan.blob.data;
  std::span<const u8> in_file = out.bytes_at(base + table->offset, table->size);
  check(std::equal(in_file.begin(), in_file.end(), src.begin() + table->offset), "table bytes not at manifest offset");
  const fixtures::BuiltFixture &fx = fixture("switch_table");
  int arms = 0;
  for (int op = 0; op <= 9; op++)
    for (const char *x : {"5", "-9", "0", "123456"}) {
      if (op == 7 && std::string(x) == "0")
        continue;
      fixtures::RunResult a = fixtures::run_binary(p.output, {std::to_string(op), x});
      fixtures::RunResult b = fixtures::run_binary(fx.reference_bin, {std::to_string(op), x});
      check(a.out == b.out && a.term_signal == 0, "arm " + std::to_string(op) + " x=" + x);
      arms++;
    }
  fixtures::RunResult z = fixtures::run_binary(p.output, {"7", "0"});
  check(z.term_signal == 0 && z.out == "0\n", "patched arm 7 with x=0");
  if (o.ok)
    o.detail = std::to_string(table->size) + "-byte table at +" + hex(table->offset) + ", " + std::to_string(arms) +
               " dispatches over 8 arms + default";
  return o;
}

Outcome fixer_idempotence() {
  Outcome o;
  Check check{o};
  size_t n = 0;
  for (auto &[name, fx] : corpus())
    for (const std::string &src : {fx.spec.decompiled_source(), fx.spec.patched_source()}) {
      fixer::DecompUnit u;
      u.source_text = read_text_file(src);
      fixer::DecompUnit once = fixer::run_fixer(u, fx.sidecar.symbols, fx.sidecar.definitions);
      fixer::DecompUnit twice = fixer::run_fixer(once, fx.sidecar.symbols, fx.sidecar.definitions);
      check(once.source_text == twice.source_text, src + " is not a fixpoint");
      n++;
    }
  if (o.ok)
    o.detail = std::to_string(n) + " sources";
  return o;
}

} // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"elf_round_trip", elf_round_trip},
      {"edit_locality", edit_locality},
      {"trampoline_algebra", trampoline_algebra},
      {"sp_to_bp_conversion", sp_to_bp_conversion},
      {"relocation_oracle", relocation_oracle},
      {"struct_decomposition", struct_decomposition},
      {"cve_analogues", cve_analogues},
      {"prototype_overestimation", prototype_overestimation},
      {"pointer_call_transparency", pointer_call},
      {"jump_table_injection", jump_table},
      {"fixer_idempotence", fixer_idempotence},
  };
  int failures = 0;
  for (const auto &[name, fn] : criteria) {
    Outcome o;
    auto t0 = Clock::now();
    try {
      o = fn();
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    char took[32];
    std::snprintf(took, sizeof took, "%.2fs", seconds_since(t0));
    std::cout << (o.ok ? "PASS " : "FAIL ") << name << " [" << took << "] " << o.detail << std::endl;
    failures += !o.ok;
  }
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << criteria.size() - failures << "/" << criteria.size() << "\n";
  return failures ? 1 : 0;
}
