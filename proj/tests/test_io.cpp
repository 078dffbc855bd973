#include <doctest.h>

#include <filesystem>

#include <json.hpp>

#include "greensim/io.hpp"
#include "greensim/simkernel.hpp"

using namespace greensim;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case.
struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("greensim-io-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

RunResult tiny_run() {
  Trace t;
  Request q;
  q.id = 0;
  q.arrival_ms = 0;
  q.prompt_tokens = 512;
  q.output_tokens = 4;
  t.requests.push_back(q);
  t.meta = {"tiny", 100, 0.0};
  return run(t, GpuProfile::default_profile(), GovernorPolicy::fixed(1410.0), 7, SloConfig{});
}

}  // namespace

TEST_CASE("slurp and spit round-trip bytes") {
  TempDir tmp;
  const std::string body = "line1\nline2\nno trailing newline";
  spit_file(tmp.file("f.txt"), body);
  CHECK(slurp_file(tmp.file("f.txt")) == body);
  spit_file(tmp.file("f.txt"), "overwritten");
  CHECK(slurp_file(tmp.file("f.txt")) == "overwritten");
  CHECK_THROWS_AS(slurp_file(tmp.file("absent.txt")), IoError);
  CHECK_THROWS_AS(spit_file((tmp.path / "no-such-dir" / "f").string(), "x"), IoError);
}

TEST_CASE("profile document: save/load round trip preserves every coefficient") {
  TempDir tmp;
  GpuProfile p = GpuProfile::default_profile();
  p.name = "round-trip";
  p.prefill = LatencyModel{3.25e-5, 0.117, 7.75, 1410.0};
  p.power = PowerModel{1.7e-7, -9.5e-5, 0.049, 220.25, 14.5};
  save_profile(p, tmp.file("p.json"));
  const GpuProfile q = load_profile(tmp.file("p.json"));
  CHECK(q.name == p.name);
  CHECK(q.grid.f_min_mhz == p.grid.f_min_mhz);
  CHECK(q.grid.f_max_mhz == p.grid.f_max_mhz);
  CHECK(q.grid.step_mhz == p.grid.step_mhz);
  CHECK(q.grid.f_ref_mhz == p.grid.f_ref_mhz);
  CHECK(q.prefill.a == p.prefill.a);
  CHECK(q.prefill.b == p.prefill.b);
  CHECK(q.prefill.c == p.prefill.c);
  CHECK(q.decode.alpha0_ms == p.decode.alpha0_ms);
  CHECK(q.decode.alpha1_ms == p.decode.alpha1_ms);
  CHECK(q.decode.beta0_ms == p.decode.beta0_ms);
  CHECK(q.decode.beta1_ms == p.decode.beta1_ms);
  CHECK(q.power.k3 == p.power.k3);
  CHECK(q.power.k2 == p.power.k2);
  CHECK(q.power.k1 == p.power.k1);
  CHECK(q.power.k0 == p.power.k0);
  CHECK(q.power.p_idle_w == p.power.p_idle_w);
}

TEST_CASE("profile document: loader rejects malformed input with typed errors") {
  TempDir tmp;
  CHECK_THROWS_AS(load_profile(tmp.file("missing.json")), IoError);

  spit_file(tmp.file("garbage.json"), "{ not json");
  CHECK_THROWS_AS(load_profile(tmp.file("garbage.json")), IoError);

  // Drop a whole section.
  nlohmann::json j = nlohmann::json::parse(profile_json(GpuProfile::default_profile()));
  j.erase("power");
  spit_file(tmp.file("nopower.json"), j.dump());
  CHECK_THROWS_AS(load_profile(tmp.file("nopower.json")), IoError);

  // Wrong leaf type.
  j = nlohmann::json::parse(profile_json(GpuProfile::default_profile()));
  j["power"]["k3"] = "very small";
  spit_file(tmp.file("stringy.json"), j.dump());
  CHECK_THROWS_AS(load_profile(tmp.file("stringy.json")), IoError);

  j = nlohmann::json::parse(profile_json(GpuProfile::default_profile()));
  j.erase("name");
  spit_file(tmp.file("anon.json"), j.dump());
  CHECK_THROWS_AS(load_profile(tmp.file("anon.json")), IoError);

  // Structurally fine but physically invalid: constant power curve.
  j = nlohmann::json::parse(profile_json(GpuProfile::default_profile()));
  j["power"] = {{"k3", 0.0}, {"k2", 0.0}, {"k1", 0.0}, {"k0", 100.0}, {"p_idle_w", 15.0}};
  spit_file(tmp.file("flat.json"), j.dump());
  CHECK_THROWS_AS(load_profile(tmp.file("flat.json")), ModelError);

  // save_profile validates before touching the filesystem.
  GpuProfile bad = GpuProfile::default_profile();
  bad.power.k3 = -1.0;
  CHECK_THROWS_AS(save_profile(bad, tmp.file("never.json")), ModelError);
  CHECK_FALSE(fs::exists(tmp.file("never.json")));
}

TEST_CASE("run document: schema, config echo, digests") {
  const RunResult r = tiny_run();
  const nlohmann::json j = nlohmann::json::parse(run_result_json(r));

  CHECK(j.at("schema") == "greensim.run.v1");
  CHECK(j.at("seed") == 7);
  CHECK(j.at("workload") == "tiny");
  CHECK(j.at("profile") == "synth-a100-40g");
  CHECK(j.at("policy").at("kind") == "fixed");
  CHECK(j.at("policy").at("fixed_freq_mhz") == 1410.0);
  CHECK(j.at("policy").contains("decode_ctl"));
  CHECK(j.at("policy").contains("prefill_opt"));
  CHECK(j.at("slo").at("ttft_sm_ms") == 400.0);
  CHECK(j.at("sim").at("n_prefill_workers") == 2);
  CHECK(j.at("sim").at("n_decode_workers") == 4);
  CHECK(j.at("trace").at("n_requests") == 1);

  CHECK(j.at("energy").at("total_j").get<double>() == doctest::Approx(r.total_j()));
  CHECK(j.at("energy").at("prefill_pool_j").get<double>() == doctest::Approx(r.prefill_pool_j()));
  CHECK(j.at("energy").at("prefill_workers").size() == 2);
  CHECK(j.at("energy").at("decode_workers").size() == 4);

  CHECK(j.at("pass").at("ttft_pct") == 100.0);
  CHECK(j.at("completed_requests") == 1);
  CHECK(j.at("saturated") == false);
  CHECK(j.at("artifacts").at("freq_timeline_csv") == "freq_timeline.csv");

  const auto& req = j.at("requests").at(0);
  CHECK(req.at("id") == 0);
  CHECK(req.at("class") == "SM");
  CHECK(req.at("completed") == true);
  CHECK(req.at("tbt").at("count") == 3);  // output_tokens - 1 gaps
  CHECK(req.at("tbt").at("p95").get<double>() == doctest::Approx(23.735));
  CHECK(req.at("ttft_ms").get<double>() == doctest::Approx(98.41788));
}

TEST_CASE("run summary: loads the slice the report needs") {
  TempDir tmp;
  const RunResult r = tiny_run();
  save_run_result(r, tmp.file("result.json"));
  const RunSummary s = load_run_summary(tmp.file("result.json"));
  CHECK(s.method == "fixed");
  CHECK(s.workload == "tiny");
  CHECK(s.prefill_j == doctest::Approx(r.prefill_pool_j()));
  CHECK(s.decode_j == doctest::Approx(r.decode_pool_j()));
  CHECK(s.total_j == doctest::Approx(r.total_j()));
  CHECK(s.ttft_pct == 100.0);

  spit_file(tmp.file("alien.json"), R"({"schema":"other.v9"})");
  CHECK_THROWS_AS(load_run_summary(tmp.file("alien.json")), IoError);
  spit_file(tmp.file("empty.json"), "{}");
  CHECK_THROWS_AS(load_run_summary(tmp.file("empty.json")), IoError);
  spit_file(tmp.file("hollow.json"), R"({"schema":"greensim.run.v1"})");
  CHECK_THROWS_AS(load_run_summary(tmp.file("hollow.json")), IoError);
  CHECK_THROWS_AS(load_run_summary(tmp.file("gone.json")), IoError);
}
