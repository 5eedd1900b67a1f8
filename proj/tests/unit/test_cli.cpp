#include "doctest.h"
#include "mfe/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace mfe;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("mfe_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::map<std::string, std::string> checksums(const RunManifest& m) {
  std::map<std::string, std::string> out;
  for (const ArtifactRecord& a : m.artifacts) out[a.file] = a.sha256;
  return out;
}

}  // namespace

TEST_CASE("sha256 and number formatting") {
  fs::path f = scratch("abc.txt");
  std::ofstream(f) << "abc";
  CHECK(sha256_file(f) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  for (double x : {0.1, 1.0 / 3.0, 8 * std::numbers::pi, 1e-300, -2.5})
    CHECK(std::strtod(format_double(x).c_str(), nullptr) == x);
  CHECK(format_double(0.1) == "0.1");
}

TEST_CASE("config resolution and diagnostics") {
  Json c = resolve_config("solve", Json::object());
  CHECK(c["sweep"]["lambda"].get<double>() == doctest::Approx(4 * std::numbers::pi));
  CHECK_THROWS_WITH_AS(resolve_config("solve", Json{{"solver", {{"tolerence", 1e-8}}}}), "solver.tolerence: unknown field",
                       ConfigError);
  CHECK_THROWS_AS(resolve_config("nope", Json::object()), ConfigError);
  CHECK_THROWS_AS(resolve_config("solve", Json{{"extra", 1}}), ConfigError);

  apply_override(c, "domain.h=0.03125");
  CHECK(c["domain"]["h"].get<double>() == 0.03125);
  CHECK_THROWS_AS(apply_override(c, "analysis"), ConfigError);
}

TEST_CASE("config errors carry field paths") {
  Json c = resolve_config("solve", Json::object());
  CHECK_THROWS_WITH_AS(apply_override(c, "sweep.lamda=1"), "sweep.lamda: unknown field", ConfigError);
  c["domain"]["radius"] = "big";
  CHECK_THROWS_WITH_AS(run("solve", c, scratch("bad")), "domain.radius: expected a number", ConfigError);
  c = resolve_config("solve", Json::object());
  c["measure"]["atoms"][0]["weight"] = 0.5;
  CHECK_THROWS_AS(run("solve", c, scratch("bad")), ConfigError);
}

TEST_CASE("solve at lambda = 0 writes a zero field") {
  Json domain{{"kind", "disk"}, {"center", {0, 0}}, {"radius", 1.0}, {"h", 1.0 / 32}};
  Json c = resolve_config("solve", Json{{"sweep", {{"lambda", 0.0}}}, {"domain", domain}});
  fs::path out = scratch("solve0");
  RunManifest m = run("solve", c, out);
  CHECK(m.passed());
  DiscreteDomain d(domain_from_json(c["domain"]));
  Field u = read_field_binary(d, out / "u.bin", out / "u.json");
  CHECK(u.sup_norm() == 0.0);
  int fields = 0;
  for (const ArtifactRecord& a : m.artifacts) {
    fields += a.file == "u.bin";
    CHECK(sha256_file(out / a.file) == a.sha256);
  }
  CHECK(fields == 1);
  Json saved = read_json(out / "manifest.json");
  CHECK(saved["passed"].get<bool>());
  CHECK(saved["config"] == c);
}

TEST_CASE("reruns reproduce artifacts byte for byte") {
  for (const char* cmd : {"degree", "solve", "mt-check"}) {
    Json c = resolve_config(cmd, Json::object());
    if (std::string(cmd) == "mt-check") {
      c["analysis"]["calibration_size"] = 20;
      c["analysis"]["corpus_size"] = 20;
      c["domain"]["h"] = 1.0 / 32;
    }
    if (std::string(cmd) == "degree") c["analysis"]["starts"] = 100;
    fs::path first = scratch(std::string(cmd) + "_a");
    RunManifest a = run(cmd, c, first);
    // Rerun from the saved manifest, as a user would.
    Json replay = resolve_config(cmd, read_json(first / "manifest.json"));
    // Slot-wise parallel loops make the thread count irrelevant to the output.
    replay["threads"] = 3;
    RunManifest b = run(cmd, replay, scratch(std::string(cmd) + "_b"));
    CHECK(a.passed());
    CHECK(!a.artifacts.empty());
    CHECK(checksums(a) == checksums(b));
  }
}

TEST_CASE("exit status follows the checks") {
  Json c = resolve_config("minmax", Json::object());
  c["analysis"]["radial"] = 4;
  c["analysis"]["angular"] = 4;
  CHECK(run("minmax", c, scratch("minmax")).passed());
  c["analysis"]["min_gap"] = 1e9;
  RunManifest m = run("minmax", c, scratch("minmax"));
  CHECK_FALSE(m.passed());
  CHECK(std::any_of(m.checks.begin(), m.checks.end(), [](const Check& k) { return !k.passed; }));

  // A numerical failure is recorded, not thrown.
  Json s = resolve_config("blowup", Json{{"sweep", {{"lambda_end", 1.0}}}});
  s["domain"]["h"] = 1.0 / 16;
  RunManifest f = run("blowup", s, scratch("blowup_flat"));
  CHECK_FALSE(f.passed());
}

TEST_CASE("blowup reads a saved branch") {
  Json c = resolve_config("continue", Json{{"sweep", {{"lambda_end", 7.5 * std::numbers::pi}}}});
  c["domain"]["h"] = 1.0 / 32;
  fs::path dir = scratch("branch");
  RunManifest m = run("continue", c, dir);
  REQUIRE(m.passed());
  Json b = resolve_config("blowup", Json{{"analysis", {{"branch", dir.string()}}}});
  fs::path out = scratch("blowup");
  RunManifest r = run("blowup", b, out);
  CHECK(r.errors.empty());
  Json rep = read_json(out / "blowup.json");
  Json branch = read_json(dir / "branch.json");
  CHECK(rep["lambda"] == branch["entries"].back()["lambda"]);
  CHECK(rep["u_max"].get<double>() == doctest::Approx(branch["entries"].back()["u_max"].get<double>()));
}
