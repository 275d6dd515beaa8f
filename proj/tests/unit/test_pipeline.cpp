#include "fixture_corpus.hpp"

#include "scribe/error.hpp"
#include "scribe/pipeline.hpp"

#include <doctest.h>
#include <filesystem>
#include <json.hpp>

using namespace scribe;
namespace fs = std::filesystem;

namespace {

fixtures::BuiltFixture built(const std::string &name) {
  static std::map<std::string, fixtures::BuiltFixture> cache;
  auto it = cache.find(name);
  if (it == cache.end())
    it = cache.emplace(name, fixtures::build_fixture(fixtures::load_fixture(fixtures::corpus_root() + "/" + name),
                                                     fixtures::scratch_dir("pipeline-fixtures")))
             .first;
  return it->second;
}

std::string out_path(const std::string &tag) { return fixtures::scratch_dir("pipeline-out") + "/" + tag + ".bin"; }

} // namespace

TEST_CASE("every fixture patches and passes its tests") {
  for (const fixtures::FixtureSpec &spec : fixtures::load_corpus()) {
    CAPTURE(spec.name);
    fixtures::BuiltFixture fx = built(spec.name);
    pipeline::PipelineConfig c = fixtures::config_for(fx, spec.patched_source(), out_path(spec.name));
    pipeline::PipelineResult r = pipeline::run_pipeline(c);
    std::string failed;
    for (const pipeline::StageRecord &s : r.stages)
      if (!s.ok)
        failed = s.name + ": " + s.message;
    CAPTURE(failed);
    CHECK(r.exit_code == 0);
    if (spec.poc) {
      fixtures::RunResult before = fixtures::run_binary(fx.target_bin, *spec.poc);
      fixtures::RunResult after = fixtures::run_binary(c.output_path, *spec.poc);
      CHECK(before.term_signal != 0);
      CHECK(after.term_signal == 0);
      CHECK(after.exit_code == 0);
    }
  }
}

namespace {

ErrorKind config_error(const std::string &text) {
  try {
    pipeline::parse_config(text, "/base");
  } catch (const Error &e) {
    return e.kind();
  }
  FAIL("config accepted");
  return ErrorKind::InvalidArgument;
}

const pipeline::StageRecord *failed_stage(const pipeline::PipelineResult &r) {
  for (const pipeline::StageRecord &s : r.stages)
    if (!s.ok)
      return &s;
  return nullptr;
}

std::vector<std::string> stage_names(const pipeline::PipelineResult &r) {
  std::vector<std::string> out;
  for (const pipeline::StageRecord &s : r.stages)
    out.push_back(s.name);
  return out;
}

} // namespace

TEST_CASE("config parsing") {
  pipeline::PipelineConfig c = pipeline::parse_config(
      R"({"binary": "bin/t", "sidecar": "/abs/s.json", "source": "d.c", "output": "out/p",
          "placement": {"padding": false}, "backend": "external", "canary": "noop", "pin_layout": false,
          "verify_command": ["sh", "t.sh", "{binary}"], "verify_timeout": 5})",
      "/base");
  CHECK(c.binary_path == "/base/bin/t");
  CHECK(c.sidecar_path == "/abs/s.json");
  CHECK(c.output_path == "/base/out/p");
  CHECK(c.compiler_command == pipeline::default_compiler_command());
  CHECK(c.placement.allow_in_place);
  CHECK_FALSE(c.placement.allow_padding);
  CHECK(c.backend == link::Backend::external);
  CHECK(c.canary == fixer::CanaryMode::noop);
  CHECK_FALSE(c.pin_layout);
  CHECK(c.verify_timeout == 5);

  const std::string base = R"("binary": "b", "sidecar": "s", "source": "d.c", "output": "o")";
  CHECK(config_error("{" + base + R"(, "bogus": 1})") == ErrorKind::ConfigError);
  CHECK(config_error("{" + base + R"(, "placement": {"anywhere": true}})") == ErrorKind::ConfigError);
  CHECK(config_error("{" + base + R"(, "placement": {"padding": "no"}})") == ErrorKind::ConfigError);
  CHECK(config_error("{" + base + R"(, "backend": "gold"})") == ErrorKind::ConfigError);
  CHECK(config_error("{" + base + R"(, "canary": "drop"})") == ErrorKind::ConfigError);
  CHECK(config_error("{" + base + R"(, "compiler_command": ["gcc", "-c", "{input}"]})") == ErrorKind::ConfigError);
  CHECK(config_error(R"({"binary": "b", "sidecar": "s", "source": "d.c"})") == ErrorKind::ConfigError);
  CHECK(config_error("[1]") == ErrorKind::ConfigError);
  CHECK(config_error("{") == ErrorKind::ConfigError);
}

TEST_CASE("verification command handling") {
  CHECK_THROWS_AS(pipeline::verify({}, "/bin/true"), Error);
  try {
    pipeline::verify({"scribe-missing-verifier", "{binary}"}, "/bin/true");
    FAIL("ran a missing verifier");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::VerifyCommandMissing);
  }

  pipeline::VerifyReport v = pipeline::verify({"sh", "-c", "echo PASS one; echo FAIL two; echo noise"}, "x");
  REQUIRE(v.tests.size() == 2);
  CHECK(v.tests[0].passed);
  CHECK_FALSE(v.tests[1].passed);
  CHECK_FALSE(v.passed);

  v = pipeline::verify({"sh", "-c", "echo PASS a; exit 1"}, "x");
  CHECK_FALSE(v.passed);

  v = pipeline::verify({"sh", "-c", "echo \"$0\"", "{binary}"}, "rel/path");
  CHECK(v.passed);
  CHECK(v.output == (fs::current_path() / "rel/path").string() + "\n");

  v = pipeline::verify({"sleep", "5"}, "x", 0.3);
  CHECK(v.timed_out);
  CHECK_FALSE(v.passed);
}

TEST_CASE("stage failures stop the run and leave no output") {
  fixtures::BuiltFixture fx = built("null_link");

  pipeline::PipelineConfig c = fixtures::config_for(fx, fx.spec.patched_source(), out_path("no-sidecar"));
  c.sidecar_path = fx.work_dir + "/missing-sidecar.json";
  pipeline::PipelineResult r = pipeline::run_pipeline(c);
  CHECK(r.exit_code == 2);
  REQUIRE(failed_stage(r));
  CHECK(failed_stage(r)->name == "load");
  CHECK(failed_stage(r)->message.find("missing-sidecar.json") != std::string::npos);
  CHECK_FALSE(fs::exists(c.output_path));

  std::string broken = fixtures::scratch_dir("pipeline-src") + "/broken.c";
  write_text_file(broken, read_text_file(fx.spec.patched_source()) + "\nint oops(void) { return undefined_thing; }\n");
  c = fixtures::config_for(fx, broken, out_path("broken"));
  r = pipeline::run_pipeline(c);
  CHECK(r.exit_code == 2);
  REQUIRE(failed_stage(r));
  CHECK(failed_stage(r)->name == "build");
  CHECK(failed_stage(r)->error_kind == "CompilerInvocationFailed");
  CHECK_FALSE(fs::exists(c.output_path));
  CHECK(fs::exists(c.output_path + ".scribe/fixed.c"));
}

TEST_CASE("patching an already patched binary is refused") {
  fixtures::BuiltFixture fx = built("null_link");
  pipeline::PipelineConfig c = fixtures::config_for(fx, fx.spec.patched_source(), out_path("first"));
  REQUIRE(pipeline::run_pipeline(c).exit_code == 0);
  pipeline::PipelineConfig again = c;
  again.binary_path = c.output_path;
  again.output_path = out_path("second");
  pipeline::PipelineResult r = pipeline::run_pipeline(again);
  CHECK(r.exit_code == 2);
  REQUIRE(failed_stage(r));
  CHECK(failed_stage(r)->error_kind == "AlreadyPatched");
  CHECK_FALSE(fs::exists(again.output_path));
}

TEST_CASE("runs are deterministic") {
  fixtures::BuiltFixture fx = built("param_block");
  pipeline::PipelineConfig a = fixtures::config_for(fx, fx.spec.patched_source(), out_path("det-a"));
  pipeline::PipelineConfig b = fixtures::config_for(fx, fx.spec.patched_source(), out_path("det-b"));
  REQUIRE(pipeline::run_pipeline(a).exit_code == 0);
  REQUIRE(pipeline::run_pipeline(b).exit_code == 0);
  CHECK(read_file(a.output_path) == read_file(b.output_path));
  for (const char *f : {"fixed.c", "pinned.c", "compat.h", "blob/code.bin", "blob/data.bin"})
    CHECK(read_file(a.output_path + ".scribe/" + f) == read_file(b.output_path + ".scribe/" + f));
}

TEST_CASE("stop_after and the report") {
  fixtures::BuiltFixture fx = built("double_free");
  pipeline::PipelineConfig c = fixtures::config_for(fx, fx.spec.patched_source(), out_path("partial"));
  pipeline::PipelineResult r = pipeline::run_pipeline(c, "fix");
  CHECK(r.exit_code == 0);
  CHECK(stage_names(r) == std::vector<std::string>{"load", "fix"});
  CHECK_FALSE(fs::exists(c.output_path));

  c.report_path = out_path("report") + ".json";
  r = pipeline::run_pipeline(c);
  CHECK(r.exit_code == 0);
  CHECK(stage_names(r) == std::vector<std::string>{"load", "fix", "pin", "build", "resolve", "inject", "verify"});
  nlohmann::json j = nlohmann::json::parse(read_text_file(c.report_path));
  CHECK(j.at("exit_code") == 0);
  CHECK(j.at("stages").size() == 7);
  CHECK(j.at("verify").at("passed") == true);
  CHECK(j.contains("patch"));
}

TEST_CASE("both link backends produce the same binary") {
  fixtures::BuiltFixture fx = built("switch_table");
  pipeline::PipelineConfig a = fixtures::config_for(fx, fx.spec.patched_source(), out_path("be-internal"));
  pipeline::PipelineConfig b = fixtures::config_for(fx, fx.spec.patched_source(), out_path("be-external"));
  b.backend = link::Backend::external;
  REQUIRE(pipeline::run_pipeline(a).exit_code == 0);
  pipeline::PipelineResult r = pipeline::run_pipeline(b);
  CAPTURE(failed_stage(r) ? failed_stage(r)->message : "");
  REQUIRE(r.exit_code == 0);
  CHECK(read_file(a.output_path) == read_file(b.output_path));
}

TEST_CASE("no-op canary mode still patches correctly") {
  fixtures::BuiltFixture fx = built("param_block");
  pipeline::PipelineConfig c = fixtures::config_for(fx, fx.spec.patched_source(), out_path("noop"));
  c.canary = fixer::CanaryMode::noop;
  CHECK(pipeline::run_pipeline(c).exit_code == 0);
}

TEST_CASE("a layout the compiler cannot honour is reported as such") {
  fixtures::BuiltFixture fx = built("param_block");
  meta::Sidecar sc = fx.sidecar;
  for (meta::FunctionMetadata &f : sc.functions)
    if (f.name == fx.spec.function)
      for (meta::StackVar &v : f.stack)
        if (v.name == "v9")
          v.size = 4;
  std::string path = fixtures::scratch_dir("pipeline-src") + "/shrunk.json";
  write_text_file(path, meta::serialize_sidecar(sc));
  pipeline::PipelineConfig c = fixtures::config_for(fx, fx.spec.patched_source(), out_path("shrunk"));
  c.sidecar_path = path;
  pipeline::PipelineResult r = pipeline::run_pipeline(c);
  CHECK(r.exit_code == 2);
  REQUIRE(failed_stage(r));
  CHECK(failed_stage(r)->error_kind == "LayoutInfeasible");
}
