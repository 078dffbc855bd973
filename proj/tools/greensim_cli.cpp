// greensim — trace generation, simulation, sweeps, model fitting, reporting.
//
// Exit codes: 0 success, 1 config/input error, 2 assertion-flag failure,
// 3 internal error. Commands validate all inputs and finish the computation
// before creating the output directory, so a failing invocation leaves no
// partial outputs behind.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "greensim/io.hpp"
#include "greensim/metrics.hpp"
#include "greensim/simkernel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace greensim;

namespace {

// Thrown by --assert-convex; mapped to exit code 2.
struct AssertionFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Profile resolution: an existing path wins; otherwise bare names are looked
// up under $GREENSIM_PROFILE_DIR, then ./profiles, with and without ".json".
std::string resolve_profile(const std::string& name_in) {
  const std::string name = name_in.empty() ? "default.json" : name_in;
  auto is_file = [](const fs::path& p) {
    std::error_code ec;
    return fs::is_regular_file(p, ec);
  };
  if (is_file(name)) return name;
  if (name.find('/') == std::string::npos) {
    std::vector<fs::path> dirs;
    if (const char* env = std::getenv("GREENSIM_PROFILE_DIR")) dirs.emplace_back(env);
    dirs.emplace_back("profiles");
    for (const auto& dir : dirs)
      for (const auto& cand : {dir / name, dir / (name + ".json")})
        if (is_file(cand)) return cand.string();
  }
  throw IoError("profile not found: " + name +
                " (tried the path itself, $GREENSIM_PROFILE_DIR, ./profiles)");
}

// ---------------------------------------------------------------------------
// Trace source: either a CSV file or one of the synthetic generators.
struct TraceSpec {
  std::string file;
  std::string generator;  // poisson | constant | sinusoid | prefill-microbench | decode-microbench
  double qps = 5.0;
  double tps = 1000.0;
  double amplitude = 0.0;
  double period_ms = 120000.0;
  double long_fraction = 0.1;
  double prompt_mean_short = 512.0;
  double prompt_mean_long = 4096.0;
  double output_mean = 128.0;
  int prompt_min = 256, prompt_max = 2048;  // prefill microbench prompt range
  int gen_min = 64, gen_max = 192;          // decode microbench generation range
  std::int64_t duration_ms = 60000;

  void check() const {
    if (!file.empty() && !generator.empty())
      throw TraceError(TraceError::Kind::BadShape, "--trace and --gen are mutually exclusive");
    if (file.empty() && generator.empty())
      throw TraceError(TraceError::Kind::BadShape, "one of --trace or --gen is required");
  }

  Trace build(std::uint64_t seed, int class_threshold) const {
    check();
    if (!file.empty()) return load_trace(file, class_threshold);
    if (generator == "poisson") {
      LoadShape shape;
      shape.kind = LoadShapeKind::PoissonQps;
      shape.rate = qps;
      shape.long_fraction = long_fraction;
      shape.prompt_mean_short = prompt_mean_short;
      shape.prompt_mean_long = prompt_mean_long;
      shape.output_mean = output_mean;
      shape.seed = seed;
      return generate(shape, duration_ms);
    }
    if (generator == "constant") {
      LoadShape shape;
      shape.kind = LoadShapeKind::ConstantTps;
      shape.rate = tps;
      shape.seed = seed;
      return generate(shape, duration_ms);
    }
    if (generator == "sinusoid")
      return gen_sinusoid_decode_trace(tps, amplitude, period_ms, duration_ms, seed);
    if (generator == "prefill-microbench")
      return gen_prefill_microbench(tps, {prompt_min, prompt_max}, duration_ms, seed);
    if (generator == "decode-microbench")
      return gen_decode_microbench(tps, {gen_min, gen_max}, duration_ms, seed);
    throw TraceError(TraceError::Kind::BadShape, "unknown generator '" + generator + "'");
  }

  json echo() const {
    json j;
    if (!file.empty()) {
      j["file"] = file;
      return j;
    }
    j["generator"] = generator;
    j["duration_ms"] = duration_ms;
    if (generator == "poisson") {
      j["qps"] = qps;
      j["long_fraction"] = long_fraction;
      j["prompt_mean_short"] = prompt_mean_short;
      j["prompt_mean_long"] = prompt_mean_long;
      j["output_mean"] = output_mean;
    } else if (generator == "sinusoid") {
      j["tps"] = tps;
      j["amplitude"] = amplitude;
      j["period_ms"] = period_ms;
    } else if (generator == "constant") {
      j["tps"] = tps;
    } else if (generator == "prefill-microbench") {
      j["tps"] = tps;
      j["prompt_min"] = prompt_min;
      j["prompt_max"] = prompt_max;
    } else if (generator == "decode-microbench") {
      j["tps"] = tps;
      j["gen_min"] = gen_min;
      j["gen_max"] = gen_max;
    }
    return j;
  }
};

void add_trace_flags(CLI::App* cmd, TraceSpec& spec) {
  cmd->add_option("--trace", spec.file, "replay a CSV trace file");
  cmd->add_option("--gen", spec.generator,
                  "synthetic generator: poisson|constant|sinusoid|prefill-microbench|decode-microbench");
  cmd->add_option("--duration-ms", spec.duration_ms, "generated trace length");
  cmd->add_option("--qps", spec.qps, "poisson arrival rate");
  cmd->add_option("--tps", spec.tps, "target token rate (constant/sinusoid/microbench)");
  cmd->add_option("--amplitude", spec.amplitude, "sinusoid token-rate swing");
  cmd->add_option("--period-ms", spec.period_ms, "sinusoid period");
  cmd->add_option("--long-fraction", spec.long_fraction, "poisson: probability of a Long prompt");
  cmd->add_option("--prompt-mean-short", spec.prompt_mean_short);
  cmd->add_option("--prompt-mean-long", spec.prompt_mean_long);
  cmd->add_option("--output-mean", spec.output_mean);
  cmd->add_option("--prompt-min", spec.prompt_min, "prefill microbench prompt range low");
  cmd->add_option("--prompt-max", spec.prompt_max, "prefill microbench prompt range high");
  cmd->add_option("--gen-min", spec.gen_min, "decode microbench generation range low");
  cmd->add_option("--gen-max", spec.gen_max, "decode microbench generation range high");
}

// Values from an experiment-config file fill in every flag the command line
// left untouched; explicit flags always win.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  json j;
  try {
    j = json::parse(slurp_file(path));
  } catch (const json::parse_error& e) {
    throw IoError("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw IoError("config file " + path + ": top level must be an object");
  for (const auto& [key, value] : j.items()) {
    std::string flag = "--" + key;
    for (char& c : flag) c = c == '_' ? '-' : c;
    CLI::Option* opt = cmd->get_option_no_throw(flag);
    if (opt == nullptr) throw IoError("config file " + path + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;  // flag given explicitly; it wins
    const std::string text = value.is_string() ? value.get<std::string>() : value.dump();
    opt->add_result(text);
    opt->run_callback();
  }
}

std::vector<double> parse_freq_list(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string tok = text.substr(pos, comma - pos);
    if (!tok.empty()) out.push_back(std::stod(tok));
    pos = comma + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared experiment options for simulate/sweep/microbench.
struct CommonOpts {
  std::string config_file;
  std::string profile = "default.json";
  std::string out = "out";
  std::string workload;
  std::uint64_t seed = 0;
  int class_threshold = 1024;
  SloConfig slo;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "experiment config JSON; flags override its values");
    cmd->add_option("--profile", profile, "GPU profile (path or name under $GREENSIM_PROFILE_DIR)");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--workload", workload, "workload label for report rows");
    cmd->add_option("--seed", seed, "generator seed (required with --gen)");
    cmd->add_option("--class-threshold", class_threshold, "prompt-length routing threshold");
    cmd->add_option("--ttft-sm-ms", slo.ttft_sm_ms, "TTFT SLO, ShortMedium class");
    cmd->add_option("--ttft-l-ms", slo.ttft_l_ms, "TTFT SLO, Long class");
    cmd->add_option("--tbt-p95-ms", slo.tbt_p95_ms, "per-request P95 TBT SLO");
  }

  // Config-file values count: they are applied through the option's result list.
  void require_seed_for_generator(const CLI::App* cmd, const TraceSpec& spec) const {
    if (!spec.generator.empty() && cmd->count("--seed") == 0)
      throw TraceError(TraceError::Kind::BadShape, "--seed is required with --gen");
  }

  json slo_echo() const {
    return json{{"tbt_p95_ms", slo.tbt_p95_ms},
                {"ttft_l_ms", slo.ttft_l_ms},
                {"ttft_sm_ms", slo.ttft_sm_ms}};
  }
};

void write_outputs(const std::string& out_dir, const std::map<std::string, std::string>& files) {
  fs::create_directories(out_dir);
  for (const auto& [name, content] : files) spit_file((fs::path(out_dir) / name).string(), content);
}

json policy_echo(const GovernorPolicy& policy) {
  json j;
  j["kind"] = policy_kind_name(policy.kind);
  if (policy.kind == PolicyKind::FixedFreq) j["fixed_freq_mhz"] = policy.fixed_freq_mhz;
  j["margin_prefill"] = policy.prefill_opt.margin_prefill;
  j["margin_decode"] = policy.decode_ctl.margin_decode;
  j["class_threshold"] = policy.routing.thresholds.empty() ? 0 : policy.routing.thresholds[0];
  return j;
}

// ---------------------------------------------------------------------------
// simulate
struct SimulateOpts {
  CommonOpts common;
  TraceSpec trace;
  std::string policy_name = "greenllm";
  double fixed_freq = 0.0;
  double margin_prefill = -1.0;  // <0: keep the preset default
  double margin_decode = -1.0;
};

int cmd_simulate(const CLI::App* cmd, SimulateOpts& o) {
  o.common.require_seed_for_generator(cmd, o.trace);

  const auto kind = parse_policy_kind(o.policy_name);
  if (!kind) throw SimError("unknown policy '" + o.policy_name + "'");
  GovernorPolicy policy;
  switch (*kind) {
    case PolicyKind::DefaultNV: policy = GovernorPolicy::default_nv(); break;
    case PolicyKind::FixedFreq: policy = GovernorPolicy::fixed(o.fixed_freq); break;
    case PolicyKind::GreenLLM: policy = GovernorPolicy::greenllm(); break;
    case PolicyKind::PrefillSplit: policy = GovernorPolicy::prefill_split(); break;
  }
  if (o.margin_prefill > 0) policy.prefill_opt.margin_prefill = o.margin_prefill;
  if (o.margin_decode > 0) policy.decode_ctl.margin_decode = o.margin_decode;
  policy.routing.thresholds = {o.common.class_threshold};

  const std::string profile_path = resolve_profile(o.common.profile);
  const GpuProfile profile = load_profile(profile_path);
  o.common.slo.validate();
  Trace trace = o.trace.build(o.common.seed, o.common.class_threshold);
  if (!o.common.workload.empty()) trace.meta.name = o.common.workload;

  RunResult result = run(trace, profile, policy, o.common.seed, o.common.slo);

  const std::map<std::string, const RunResult*> runs{{policy_kind_name(policy.kind), &result}};
  const auto rows = energy_report(trace.meta.name, runs, policy_kind_name(policy.kind), o.common.slo);

  json cfg;
  cfg["command"] = "simulate";
  cfg["out"] = o.common.out;
  cfg["policy"] = policy_echo(policy);
  cfg["profile"] = profile_path;
  cfg["seed"] = o.common.seed;
  cfg["slo"] = o.common.slo_echo();
  cfg["trace"] = o.trace.echo();
  cfg["workload"] = trace.meta.name;

  write_outputs(o.common.out,
                {{"config.json", cfg.dump(2) + "\n"},
                 {"result.json", run_result_json(result)},
                 {"decisions.csv", decision_log_csv(result.decode_decisions)},
                 {"prefill_commands.csv", prefill_commands_csv(result.prefill_commands)},
                 {"freq_timeline.csv", freq_timeline_csv(result.freq_timeline)},
                 {"report.csv", report_csv(rows)}});

  const PassRates rates = slo_pass_rates(result, o.common.slo);
  std::printf("%s on %s: %lld/%zu completed, %.1f J, ttft %.2f%%, tbt %.2f%% -> %s\n",
              policy_kind_name(policy.kind), trace.meta.name.c_str(),
              static_cast<long long>(result.completed_requests()), result.requests.size(),
              result.total_j(), rates.ttft_pct, rates.tbt_pct, o.common.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// microbench
struct MicrobenchOpts {
  CommonOpts common;
  std::string kind = "decode";
  std::string tps_list;  // comma list; default depends on kind
  std::string policies = "defaultnv,greenllm";
  std::int64_t duration_ms = 60000;
  std::pair<int, int> prompt_range{256, 2048};
  std::pair<int, int> gen_range{64, 192};
};

int cmd_microbench(const CLI::App* cmd, MicrobenchOpts& o) {
  if (o.kind != "prefill" && o.kind != "decode")
    throw SimError("--kind must be prefill or decode");
  std::vector<double> levels = parse_freq_list(o.tps_list);
  if (levels.empty()) {
    const double lo = o.kind == "decode" ? 200 : 1000;
    const double hi = o.kind == "decode" ? 3000 : 8000;
    const double step = o.kind == "decode" ? 200 : 1000;
    for (double t = lo; t <= hi + 1e-9; t += step) levels.push_back(t);
  }
  std::vector<std::string> policy_names;
  for (std::size_t pos = 0; pos < o.policies.size();) {
    std::size_t comma = o.policies.find(',', pos);
    if (comma == std::string::npos) comma = o.policies.size();
    policy_names.push_back(o.policies.substr(pos, comma - pos));
    pos = comma + 1;
  }
  if (cmd->count("--seed") == 0)
    throw TraceError(TraceError::Kind::BadShape, "--seed is required (generated workload)");

  const std::string profile_path = resolve_profile(o.common.profile);
  const GpuProfile profile = load_profile(profile_path);
  o.common.slo.validate();

  struct Row {
    std::string policy;
    double tps = 0;
    std::size_t requests = 0;
    std::vector<double> lat;          // TTFT (prefill) or pooled TBT (decode)
    std::vector<double> lat_sm, lat_l;  // per-class TTFT, prefill only
    double energy_j = 0;
    bool saturated = false;
  };
  std::vector<Row> table;

  for (double tps : levels) {
    Trace trace = o.kind == "prefill"
                      ? gen_prefill_microbench(tps, o.prompt_range, o.duration_ms, o.common.seed)
                      : gen_decode_microbench(tps, o.gen_range, o.duration_ms, o.common.seed);
    for (const auto& name : policy_names) {
      const auto kind = parse_policy_kind(name);
      if (!kind) throw SimError("unknown policy '" + name + "'");
      GovernorPolicy policy = *kind == PolicyKind::GreenLLM     ? GovernorPolicy::greenllm()
                              : *kind == PolicyKind::PrefillSplit ? GovernorPolicy::prefill_split()
                              : *kind == PolicyKind::FixedFreq
                                  ? GovernorPolicy::fixed(profile.grid.f_max_mhz)
                                  : GovernorPolicy::default_nv();
      RunResult r = run(trace, profile, policy, o.common.seed, o.common.slo);
      Row row;
      row.policy = name;
      row.tps = tps;
      row.requests = r.requests.size();
      for (const auto& rec : r.requests) {
        if (!rec.completed) continue;
        if (o.kind == "prefill") {
          row.lat.push_back(rec.ttft_ms());
          (rec.cls == PromptClass::ShortMedium ? row.lat_sm : row.lat_l).push_back(rec.ttft_ms());
        } else {
          row.lat.insert(row.lat.end(), rec.tbt_ms.begin(), rec.tbt_ms.end());
        }
      }
      row.energy_j = r.total_j();
      row.saturated = r.saturated();
      table.push_back(std::move(row));
    }
  }

  const char* lat_name = o.kind == "prefill" ? "ttft" : "tbt";
  std::string csv = "kind,policy,tps,requests," + std::string(lat_name) + "_p50_ms," + lat_name +
                    "_p90_ms," + lat_name + "_p99_ms,ttft_p90_sm_ms,ttft_p90_l_ms,energy_j,"
                    "saving_pct,saturated\n";
  auto q_or_empty = [](const std::vector<double>& v, double q) {
    return v.empty() ? std::string() : fmt_g(quantile(v, q));
  };
  // Savings are relative to the defaultnv row at the same TPS level.
  std::map<double, double> baseline_j;
  for (const auto& row : table)
    if (row.policy == "defaultnv") baseline_j[row.tps] = row.energy_j;
  for (const auto& row : table) {
    std::string saving;
    if (auto it = baseline_j.find(row.tps); it != baseline_j.end() && it->second > 0)
      saving = fmt_g(100.0 * (1.0 - row.energy_j / it->second));
    csv += o.kind + "," + row.policy + ',' + fmt_g(row.tps) + ',' + std::to_string(row.requests) +
           ',' + q_or_empty(row.lat, 0.50) + ',' + q_or_empty(row.lat, 0.90) + ',' +
           q_or_empty(row.lat, 0.99) + ',' + q_or_empty(row.lat_sm, 0.90) + ',' +
           q_or_empty(row.lat_l, 0.90) + ',' + fmt_g(row.energy_j) + ',' + saving + ',' +
           (row.saturated ? "1" : "0") + '\n';
  }

  json cfg;
  cfg["command"] = "microbench";
  cfg["duration_ms"] = o.duration_ms;
  cfg["kind"] = o.kind;
  cfg["out"] = o.common.out;
  cfg["policies"] = policy_names;
  cfg["profile"] = profile_path;
  cfg["seed"] = o.common.seed;
  cfg["slo"] = o.common.slo_echo();
  cfg["tps_levels"] = levels;

  write_outputs(o.common.out, {{"config.json", cfg.dump(2) + "\n"}, {"microbench.csv", csv}});
  std::printf("%s microbench: %zu levels x %zu policies -> %s/microbench.csv\n", o.kind.c_str(),
              levels.size(), policy_names.size(), o.common.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// sweep
struct SweepOpts {
  CommonOpts common;
  TraceSpec trace;
  std::string freqs;  // comma list; empty string after an explicit flag is an error
  bool assert_convex = false;
};

int cmd_sweep(const CLI::App* cmd, SweepOpts& o) {
  o.common.require_seed_for_generator(cmd, o.trace);
  const std::string profile_path = resolve_profile(o.common.profile);
  const GpuProfile profile = load_profile(profile_path);
  o.common.slo.validate();

  std::vector<double> freqs;
  if (cmd->count("--freqs") > 0 || !o.freqs.empty()) {
    freqs = parse_freq_list(o.freqs);
    if (freqs.empty()) throw SimError("--freqs: empty frequency list");
  } else {
    freqs = profile.grid.frequencies();
  }

  Trace trace = o.trace.build(o.common.seed, o.common.class_threshold);
  if (!o.common.workload.empty()) trace.meta.name = o.common.workload;

  const auto points = fixed_frequency_sweep(trace, profile, freqs, o.common.slo);
  double min_j = points.front().total_j;
  for (const auto& p : points) min_j = std::min(min_j, p.total_j);

  std::string csv =
      "f_mhz,total_j,prefill_j,decode_j,ttft_pass_pct,tbt_pass_pct,e_over_emin,saturated\n";
  for (const auto& p : points)
    csv += fmt_g(p.f_mhz) + ',' + fmt_g(p.total_j) + ',' + fmt_g(p.prefill_j) + ',' +
           fmt_g(p.decode_j) + ',' + fmt_g(p.ttft_pass_pct) + ',' + fmt_g(p.tbt_pass_pct) + ',' +
           fmt_g(p.total_j / min_j) + ',' + (p.saturated ? "1" : "0") + '\n';

  json cfg;
  cfg["command"] = "sweep";
  cfg["freqs"] = freqs;
  cfg["out"] = o.common.out;
  cfg["profile"] = profile_path;
  cfg["seed"] = o.common.seed;
  cfg["slo"] = o.common.slo_echo();
  cfg["trace"] = o.trace.echo();
  cfg["workload"] = trace.meta.name;

  write_outputs(o.common.out, {{"config.json", cfg.dump(2) + "\n"}, {"sweep.csv", csv}});
  std::printf("sweep: %zu points, min %.1f J at %.0f MHz -> %s/sweep.csv\n", points.size(), min_j,
              std::min_element(points.begin(), points.end(),
                               [](const SweepPoint& a, const SweepPoint& b) {
                                 return a.total_j < b.total_j;
                               })
                  ->f_mhz,
              o.common.out.c_str());

  if (o.assert_convex && !(points.front().total_j > min_j && points.back().total_j > min_j))
    throw AssertionFailure("energy curve is not U-shaped: an endpoint attains the minimum");
  return 0;
}

// ---------------------------------------------------------------------------
// fit
struct FitOpts {
  std::string kind = "latency";
  std::string samples;
  std::string out = "fit.json";
  double f_ref = 1410.0;
  double p_idle = 0.0;
};

std::vector<std::pair<double, double>> load_samples_csv(const std::string& path) {
  const std::string text = slurp_file(path);
  std::vector<std::pair<double, double>> samples;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos) throw IoError(path + ": expected two comma-separated columns");
    try {
      samples.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      if (first) {
        first = false;  // header row
        continue;
      }
      throw IoError(path + ": non-numeric row '" + line + "'");
    }
    first = false;
  }
  if (samples.empty()) throw IoError(path + ": no samples");
  return samples;
}

int cmd_fit(const CLI::App*, FitOpts& o) {
  if (o.kind != "latency" && o.kind != "power") throw ModelError("--kind must be latency or power");
  const auto samples = load_samples_csv(o.samples);

  json out;
  json diag;
  std::vector<double> residuals;
  if (o.kind == "latency") {
    const LatencyFit fit = fit_latency(samples, o.f_ref);
    for (const auto& [L, y] : samples)
      residuals.push_back(prefill_latency_raw_ms(fit.model, L, o.f_ref) - y);
    out["kind"] = "latency";
    out["prefill_latency"] = {{"a", fit.model.a},
                              {"b", fit.model.b},
                              {"c", fit.model.c},
                              {"f_ref_mhz", fit.model.f_ref_mhz}};
    diag["r_squared"] = fit.r_squared;
    std::printf("latency fit: a=%s b=%s c=%s r2=%s\n", fmt9(fit.model.a).c_str(),
                fmt9(fit.model.b).c_str(), fmt9(fit.model.c).c_str(), fmt9(fit.r_squared).c_str());
  } else {
    FrequencyGrid grid;  // fits are judged against the standard grid
    const PowerFit fit = fit_power(samples, o.p_idle, grid);
    for (const auto& [f, y] : samples) residuals.push_back(fit.model.active_power_w(f) - y);
    out["kind"] = "power";
    out["power"] = {{"k0", fit.model.k0},
                    {"k1", fit.model.k1},
                    {"k2", fit.model.k2},
                    {"k3", fit.model.k3},
                    {"p_idle_w", fit.model.p_idle_w}};
    diag["monotone_on_grid"] = fit.monotone_on_grid;
    diag["r_squared"] = fit.r_squared;
    std::printf("power fit: k3=%s k2=%s k1=%s k0=%s r2=%s\n", fmt9(fit.model.k3).c_str(),
                fmt9(fit.model.k2).c_str(), fmt9(fit.model.k1).c_str(), fmt9(fit.model.k0).c_str(),
                fmt9(fit.r_squared).c_str());
  }
  double max_abs = 0;
  for (double r : residuals) max_abs = std::max(max_abs, std::abs(r));
  diag["max_abs_residual"] = max_abs;
  diag["n_samples"] = samples.size();
  diag["residuals"] = residuals;
  out["diagnostics"] = diag;
  spit_file(o.out, out.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// report
struct ReportOpts {
  std::vector<std::string> inputs;
  std::string baseline = "defaultnv";
  std::string out = ".";
  std::string series_from;  // result.json to derive plot series from
};

int cmd_report(const CLI::App*, ReportOpts& o) {
  std::vector<RunSummary> summaries;
  for (const auto& path : o.inputs) summaries.push_back(load_run_summary(path));

  const RunSummary* base = nullptr;
  for (const auto& s : summaries)
    if (s.method == o.baseline) base = &s;
  if (base == nullptr) throw IoError("baseline method '" + o.baseline + "' not among the inputs");
  if (base->total_j <= 0) throw IoError("baseline run has zero energy");

  std::vector<ReportRow> rows;
  auto emit = [&](const RunSummary& s) {
    ReportRow row;
    row.workload = s.workload;
    row.method = s.method;
    row.rel_decode = base->decode_j > 0 ? s.decode_j / base->decode_j : 1.0;
    row.rel_prefill = base->prefill_j > 0 ? s.prefill_j / base->prefill_j : 1.0;
    row.ttft_pct = s.ttft_pct;
    row.tbt_pct = s.tbt_pct;
    row.delta_en_pct = 100.0 * (1.0 - s.total_j / base->total_j);
    rows.push_back(std::move(row));
  };
  emit(*base);
  for (const auto& s : summaries)
    if (&s != base) emit(s);

  std::map<std::string, std::string> files{{"report.csv", report_csv(rows)},
                                           {"report.txt", report_text(rows)}};

  if (!o.series_from.empty()) {
    const json doc = json::parse(slurp_file(o.series_from));
    // Frequency-vs-time series comes from the sibling CSV the run wrote.
    const fs::path run_dir = fs::path(o.series_from).parent_path();
    const std::string timeline_name = doc.at("artifacts").at("freq_timeline_csv");
    files["freq_vs_time.csv"] = slurp_file((run_dir / timeline_name).string());
    // TTFT histogram, 25 ms bins over the completed requests.
    std::vector<double> ttfts;
    for (const auto& r : doc.at("requests"))
      if (r.at("completed").get<bool>())
        ttfts.push_back(r.at("first_token_ms").get<double>() - r.at("arrival_ms").get<double>());
    std::map<long, long> bins;
    for (double t : ttfts) ++bins[static_cast<long>(t / 25.0)];
    std::string hist = "ttft_bin_lo_ms,count\n";
    for (const auto& [bin, count] : bins)
      hist += std::to_string(bin * 25) + ',' + std::to_string(count) + '\n';
    files["ttft_hist.csv"] = hist;
  }

  write_outputs(o.out, files);
  std::fputs(report_text(rows).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GPU frequency-control simulator for disaggregated LLM serving"};
  app.require_subcommand(1);

  SimulateOpts sim_o;
  auto* sim_cmd = app.add_subcommand("simulate", "run one policy over a trace");
  sim_o.common.add_flags(sim_cmd);
  add_trace_flags(sim_cmd, sim_o.trace);
  sim_cmd->add_option("--policy", sim_o.policy_name, "defaultnv|fixed|greenllm|prefillsplit");
  sim_cmd->add_option("--fixed-freq", sim_o.fixed_freq, "clock for --policy fixed [MHz]");
  sim_cmd->add_option("--margin-prefill", sim_o.margin_prefill, "prefill window margin");
  sim_cmd->add_option("--margin-decode", sim_o.margin_decode, "decode TBT-target margin");

  MicrobenchOpts mb_o;
  auto* mb_cmd = app.add_subcommand("microbench", "latency/energy series across TPS levels");
  mb_o.common.add_flags(mb_cmd);
  mb_cmd->add_option("--kind", mb_o.kind, "prefill|decode");
  mb_cmd->add_option("--tps-levels", mb_o.tps_list, "comma list of token rates");
  mb_cmd->add_option("--policies", mb_o.policies, "comma list of policies");
  mb_cmd->add_option("--duration-ms", mb_o.duration_ms);
  mb_cmd->add_option("--prompt-min", mb_o.prompt_range.first);
  mb_cmd->add_option("--prompt-max", mb_o.prompt_range.second);
  mb_cmd->add_option("--gen-min", mb_o.gen_range.first);
  mb_cmd->add_option("--gen-max", mb_o.gen_range.second);

  SweepOpts sw_o;
  auto* sw_cmd = app.add_subcommand("sweep", "fixed-frequency energy curve");
  sw_o.common.add_flags(sw_cmd);
  add_trace_flags(sw_cmd, sw_o.trace);
  sw_cmd->add_option("--freqs", sw_o.freqs, "comma list of clocks [MHz]; default: full grid");
  sw_cmd->add_flag("--assert-convex", sw_o.assert_convex,
                   "fail (exit 2) unless both endpoints sit above the minimum");

  FitOpts fit_o;
  auto* fit_cmd = app.add_subcommand("fit", "least-squares model fit from a samples CSV");
  fit_cmd->add_option("--kind", fit_o.kind, "latency|power");
  fit_cmd->add_option("--samples", fit_o.samples, "CSV: prompt_tokens,latency_ms or f_mhz,power_w")
      ->required();
  fit_cmd->add_option("--out", fit_o.out, "profile-fragment output file");
  fit_cmd->add_option("--f-ref", fit_o.f_ref, "reference clock of the latency samples");
  fit_cmd->add_option("--p-idle", fit_o.p_idle, "idle power recorded into the power fragment");

  ReportOpts rep_o;
  auto* rep_cmd = app.add_subcommand("report", "relative-energy report from result.json files");
  rep_cmd->add_option("results", rep_o.inputs, "result.json files")->required();
  rep_cmd->add_option("--baseline", rep_o.baseline, "method energies are normalized to");
  rep_cmd->add_option("--out", rep_o.out, "output directory");
  rep_cmd->add_option("--series-from", rep_o.series_from,
                      "also emit freq_vs_time.csv and ttft_hist.csv for this run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    for (auto& [cmd, cfg] :
         {std::pair<CLI::App*, std::string*>{sim_cmd, &sim_o.common.config_file},
          {mb_cmd, &mb_o.common.config_file},
          {sw_cmd, &sw_o.common.config_file}})
      if (cmd->parsed() && !cfg->empty()) apply_config_file(cmd, *cfg);

    if (sim_cmd->parsed()) return cmd_simulate(sim_cmd, sim_o);
    if (mb_cmd->parsed()) return cmd_microbench(mb_cmd, mb_o);
    if (sw_cmd->parsed()) return cmd_sweep(sw_cmd, sw_o);
    if (fit_cmd->parsed()) return cmd_fit(fit_cmd, fit_o);
    if (rep_cmd->parsed()) return cmd_report(rep_cmd, rep_o);
    return 1;
  } catch (const AssertionFailure& e) {
    std::fprintf(stderr, "assertion failed: %s\n", e.what());
    return 2;
  } catch (const TraceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const ModelError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const RouterError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const SimError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 3;
  }
}
