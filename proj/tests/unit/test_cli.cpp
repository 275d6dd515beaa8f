#include "scribe/pipeline.hpp"
#include "scribe/process.hpp"
#include "scribe/retrofit.hpp"

#include "fixture_corpus.hpp"
#include "mini_elf.hpp"

#include <doctest.h>
#include <filesystem>
#include <json.hpp>

using namespace scribe;
namespace fs = std::filesystem;

namespace {

ProcessResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), SCRIBE_CLI);
  return run_process(args);
}

const fixtures::BuiltFixture &fixture(const std::string &name) {
  static std::map<std::string, fixtures::BuiltFixture> cache;
  auto it = cache.find(name);
  if (it == cache.end())
    it = cache.emplace(name, fixtures::build_fixture(fixtures::load_fixture(fixtures::corpus_root() + "/" + name),
                                                     fixtures::scratch_dir("cli-fixtures")))
             .first;
  return it->second;
}

std::string write_config(const fixtures::BuiltFixture &fx, const std::string &tag, const std::string &source) {
  std::string dir = fixtures::scratch_dir("cli") + "/" + tag;
  fs::create_directories(dir);
  nlohmann::json j = {{"binary", fx.target_bin},
                      {"sidecar", fx.sidecar_path},
                      {"source", source},
                      {"output", "patched.bin"},
                      {"function", fx.spec.function},
                      {"verify_command", fx.verify_command()},
                      {"placement",
                       {{"in_place", fx.spec.placement.allow_in_place},
                        {"padding", fx.spec.placement.allow_padding},
                        {"new_segment", fx.spec.placement.allow_new_segment}}}};
  write_text_file(dir + "/config.json", j.dump(2));
  return dir + "/config.json";
}

} // namespace

TEST_CASE("usage errors") {
  CHECK(cli({}).exit_code != 0);
  CHECK(cli({"frobnicate"}).exit_code != 0);
  CHECK(cli({"run"}).exit_code != 0);
  ProcessResult r = cli({"--help"});
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("validate") != std::string::npos);
}

TEST_CASE("validate") {
  std::string path = fixtures::scratch_dir("cli") + "/mini";
  write_file(path, fixtures::build_mini_elf());
  ProcessResult r = cli({"validate", "--binary", path});
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("LOAD off=0x0 vaddr=0x400000 filesz=0x800") != std::string::npos);

  write_file(path + ".txt", Bytes{'h', 'i'});
  r = cli({"validate", "--binary", path + ".txt"});
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("MalformedElf") != std::string::npos);
}

TEST_CASE("run: success, verification failure, stage failure") {
  const fixtures::BuiltFixture &fx = fixture("param_block");
  std::string cfg = write_config(fx, "ok", fx.spec.patched_source());
  std::string report = fs::path(cfg).parent_path().string() + "/report.json";
  ProcessResult r = cli({"run", "--config", cfg, "--emit-report", report});
  INFO(r.err);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("PASS") != std::string::npos);
  CHECK(fs::exists(fs::path(cfg).parent_path() / "patched.bin"));
  CHECK(nlohmann::json::parse(read_text_file(report)).at("exit_code") == 0);

  r = cli({"run", "--config", cfg, "--no-pin"});
  CHECK(r.exit_code == 3);
  CHECK(r.out.find("FAIL") != std::string::npos);

  std::string bad = write_config(fx, "bad", fx.work_dir + "/no-such-source.c");
  r = cli({"run", "--config", bad});
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("FAIL fix") != std::string::npos);

  r = cli({"build", "--config", cfg});
  CHECK(r.exit_code == 0);
  CHECK(r.err.find("ok   build") != std::string::npos);
  CHECK(r.err.find("resolve") == std::string::npos);

  write_text_file(fs::path(cfg).parent_path().string() + "/broken.json", "{\"binary\": 1}");
  CHECK(cli({"run", "--config", fs::path(cfg).parent_path().string() + "/broken.json"}).exit_code == 2);
}

TEST_CASE("individual stages compose into a working patch") {
  const fixtures::BuiltFixture &fx = fixture("null_link");
  std::string dir = fixtures::scratch_dir("cli") + "/stages";
  fs::create_directories(dir);

  ProcessResult r = cli({"fix", "--source", fx.spec.patched_source(), "--sidecar", fx.sidecar_path, "--binary",
                         fx.target_bin, "--out-dir", dir});
  INFO(r.err);
  REQUIRE(r.exit_code == 0);
  for (const char *f : {"fixed.c", "compat.h", "diagnostics.jsonl"})
    CHECK(fs::exists(fs::path(dir) / f));

  std::vector<std::string> cc{"gcc"};
  for (const std::string &f : pipeline::forced_compiler_flags())
    cc.push_back(f);
  cc.insert(cc.end(), {"-O2", "-w", "-include", dir + "/compat.h", "-c", dir + "/fixed.c", "-o", dir + "/patch.o"});
  r = run_process(cc);
  REQUIRE(r.ok());

  elf::BinaryImage img = elf::parse(read_file(fx.target_bin));
  const meta::FunctionMetadata &fn = fx.sidecar.function(fx.spec.function);
  r = cli({"resolve", "--object", dir + "/patch.o", "--binary", fx.target_bin, "--sidecar", fx.sidecar_path, "--code",
           hex(fn.entry_vaddr), "--data", hex(0x10000000), "--out", dir + "/blob"});
  INFO(r.err);
  REQUIRE(r.exit_code == 0);
  CHECK(nlohmann::json::parse(r.out).at("entry_offsets").contains(fx.spec.function));

  // 40 bytes of code do not fit the 28-byte function, so the entry link matches no placement
  r = cli({"inject", "--binary", fx.target_bin, "--sidecar", fx.sidecar_path, "--function", fx.spec.function, "--blob",
           dir + "/blob", "--out", dir + "/out.bin"});
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("PlacementMismatch") != std::string::npos);

  // ask the planner where the code goes, then link there
  meta::SymbolMap syms = meta::merge(meta::extract_symbols(img), fx.sidecar.symbols);
  link::RelocatableObject obj = link::parse_object(read_file(dir + "/patch.o"));
  retrofit::Relinker relink = [&](u64 c, u64 d) { return link::resolve(obj, syms, c, d); };
  retrofit::PatchPlan p =
      retrofit::plan(img, fn, relink(fn.entry_vaddr, retrofit::provisional_data_vaddr(img)), relink);
  REQUIRE(p.placement != retrofit::Placement::in_place);
  r = cli({"resolve", "--object", dir + "/patch.o", "--binary", fx.target_bin, "--sidecar", fx.sidecar_path, "--code",
           hex(p.blob.code_vaddr), "--data", hex(p.blob.data_vaddr), "--out", dir + "/blob2"});
  REQUIRE(r.exit_code == 0);
  r = cli({"inject", "--binary", fx.target_bin, "--sidecar", fx.sidecar_path, "--function", fx.spec.function, "--blob",
           dir + "/blob2", "--out", dir + "/out.bin"});
  INFO(r.err);
  REQUIRE(r.exit_code == 0);
  CHECK(nlohmann::json::parse(r.out).at("placement") == retrofit::to_string(p.placement));
  fs::permissions(dir + "/out.bin", fs::perms::owner_all);
  std::vector<std::string> ok{"verify", "--binary", dir + "/out.bin", "--"};
  for (const std::string &a : fx.verify_command())
    ok.push_back(a);
  r = cli(ok);
  INFO(r.out);
  CHECK(r.exit_code == 0);

  std::vector<std::string> cmd{"verify", "--binary", fx.target_bin, "--"};
  for (const std::string &a : fx.verify_command())
    cmd.push_back(a);
  r = cli(cmd);
  CHECK(r.exit_code == 3);
}

TEST_CASE("pin prints the frame plan") {
  const fixtures::BuiltFixture &fx = fixture("param_block");
  std::string out = fixtures::scratch_dir("cli") + "/pinned.c";
  ProcessResult r = cli({"pin", "--source", fx.spec.patched_source(), "--sidecar", fx.sidecar_path, "--function",
                         fx.spec.function, "--out", out});
  INFO(r.err);
  REQUIRE(r.exit_code == 0);
  CHECK(nlohmann::json::parse(r.out).at("frame_bytes") == 64);
  CHECK(read_text_file(out).find("scribe_frame_" + fx.spec.function) != std::string::npos);

  r = cli({"pin", "--source", fx.spec.patched_source(), "--sidecar", fx.sidecar_path, "--function", "nope", "--out", out});
  CHECK(r.exit_code == 2);
}
