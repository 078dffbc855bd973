#include "greensim/io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "greensim/metrics.hpp"

namespace greensim {

using nlohmann::json;

std::string slurp_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

namespace {

double num(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number())
    throw IoError(std::string("profile: missing numeric field '") + key + "'");
  return j[key].get<double>();
}

json grid_json(const FrequencyGrid& g) {
  return {{"f_min_mhz", g.f_min_mhz},
          {"f_max_mhz", g.f_max_mhz},
          {"step_mhz", g.step_mhz},
          {"f_ref_mhz", g.f_ref_mhz}};
}

}  // namespace

GpuProfile load_profile(const std::string& path) {
  json j;
  try {
    j = json::parse(slurp_file(path));
  } catch (const json::parse_error& e) {
    throw IoError("profile " + path + ": " + e.what());
  }
  GpuProfile p;
  if (!j.contains("name") || !j["name"].is_string())
    throw IoError("profile: missing string field 'name'");
  p.name = j["name"].get<std::string>();
  auto section = [&](const char* key) -> const json& {
    if (!j.contains(key) || !j[key].is_object())
      throw IoError(std::string("profile: missing object field '") + key + "'");
    return j[key];
  };
  const json& g = section("grid");
  p.grid = {num(g, "f_min_mhz"), num(g, "f_max_mhz"), num(g, "step_mhz"), num(g, "f_ref_mhz")};
  const json& l = section("prefill_latency");
  p.prefill = {num(l, "a"), num(l, "b"), num(l, "c"), num(l, "f_ref_mhz")};
  const json& d = section("decode_step");
  p.decode = {num(d, "alpha0_ms"), num(d, "alpha1_ms"), num(d, "beta0_ms"), num(d, "beta1_ms"),
              num(d, "f_ref_mhz")};
  const json& w = section("power");
  p.power = {num(w, "k3"), num(w, "k2"), num(w, "k1"), num(w, "k0"), num(w, "p_idle_w")};
  p.validate();
  return p;
}

std::string profile_json(const GpuProfile& p) {
  json j{{"name", p.name},
         {"grid", grid_json(p.grid)},
         {"prefill_latency",
          {{"a", p.prefill.a}, {"b", p.prefill.b}, {"c", p.prefill.c},
           {"f_ref_mhz", p.prefill.f_ref_mhz}}},
         {"decode_step",
          {{"alpha0_ms", p.decode.alpha0_ms},
           {"alpha1_ms", p.decode.alpha1_ms},
           {"beta0_ms", p.decode.beta0_ms},
           {"beta1_ms", p.decode.beta1_ms},
           {"f_ref_mhz", p.decode.f_ref_mhz}}},
         {"power",
          {{"k3", p.power.k3}, {"k2", p.power.k2}, {"k1", p.power.k1}, {"k0", p.power.k0},
           {"p_idle_w", p.power.p_idle_w}}}};
  return j.dump(2) + "\n";
}

void save_profile(const GpuProfile& profile, const std::string& path) {
  profile.validate();
  spit_file(path, profile_json(profile));
}

namespace {

json tbt_digest(const std::vector<double>& tbt) {
  json d{{"count", tbt.size()}};
  if (tbt.empty()) {
    d["p50"] = nullptr;
    d["p95"] = nullptr;
    d["p99"] = nullptr;
    d["max"] = nullptr;
  } else {
    d["p50"] = quantile(tbt, 0.50);
    d["p95"] = quantile(tbt, 0.95);
    d["p99"] = quantile(tbt, 0.99);
    d["max"] = quantile(tbt, 1.0);
  }
  return d;
}

json policy_json(const GovernorPolicy& p) {
  json j{{"kind", policy_kind_name(p.kind)}};
  if (p.kind == PolicyKind::FixedFreq) j["fixed_freq_mhz"] = p.fixed_freq_mhz;
  j["routing"] = {{"enabled", p.routing_enabled()},
                  {"thresholds", p.routing.thresholds},
                  {"worker_map", p.routing.worker_map}};
  j["prefill_opt"] = {{"resolve_period_ms", p.prefill_opt.resolve_period_ms},
                      {"margin_prefill", p.prefill_opt.margin_prefill},
                      {"min_budget_ms", p.prefill_opt.min_budget_ms},
                      {"first_token_allowance_ms", p.prefill_opt.first_token_allowance_ms}};
  j["decode_ctl"] = {{"tslo_ms", p.decode_ctl.tslo_ms},
                     {"margin_decode", p.decode_ctl.margin_decode},
                     {"fine_period_ms", p.decode_ctl.fine_period_ms},
                     {"coarse_period_ms", p.decode_ctl.coarse_period_ms},
                     {"adapt_period_s", p.decode_ctl.adapt_period_s},
                     {"step_mhz", p.decode_ctl.step_mhz},
                     {"max_step_mhz", p.decode_ctl.max_step_mhz},
                     {"hysteresis_count", p.decode_ctl.hysteresis_count},
                     {"bias_threshold", p.decode_ctl.bias_threshold},
                     {"tbt_window_tokens", p.decode_ctl.tbt_window_tokens},
                     {"tps_scale", p.decode_ctl.tps_scale},
                     {"upper_margin", p.decode_ctl.upper_margin},
                     {"lower_margin", p.decode_ctl.lower_margin}};
  return j;
}

json ledger_json(const WorkerLedger& l) {
  return {{"active_prefill_j", l.active_prefill_j},
          {"active_decode_j", l.active_decode_j},
          {"idle_j", l.idle_j},
          {"total_j", l.total_j()},
          {"intervals", l.intervals.size()}};
}

}  // namespace

std::string run_result_json(const RunResult& r) {
  const PassRates rates = slo_pass_rates(r, r.slo, false);
  const PassRates agg = slo_pass_rates(r, r.slo, true);
  json j;
  j["schema"] = "greensim.run.v1";
  j["seed"] = r.seed;
  j["workload"] = r.trace_meta.name;
  j["trace"] = {{"name", r.trace_meta.name},
                {"duration_ms", r.trace_meta.duration_ms},
                {"nominal_qps", r.trace_meta.nominal_qps},
                {"n_requests", r.requests.size()}};
  j["profile"] = r.profile_name;
  j["policy"] = policy_json(r.policy);
  j["slo"] = {{"ttft_sm_ms", r.slo.ttft_sm_ms},
              {"ttft_l_ms", r.slo.ttft_l_ms},
              {"tbt_p95_ms", r.slo.tbt_p95_ms}};
  j["sim"] = {{"n_prefill_workers", r.sim.n_prefill_workers},
              {"n_decode_workers", r.sim.n_decode_workers},
              {"gpus_per_prefill_worker", r.sim.gpus_per_prefill_worker},
              {"actuation_delay_ms", r.sim.actuation_delay_ms},
              {"handoff_delay_ms", r.sim.handoff_delay_ms},
              {"max_batch", r.sim.max_batch},
              {"max_queue", r.sim.max_queue},
              {"band_tps_lo", r.sim.band_tps_lo},
              {"band_tps_hi", r.sim.band_tps_hi},
              {"band_tps_step", r.sim.band_tps_step}};
  j["pass"] = {{"ttft_pct", rates.ttft_pct},
               {"tbt_pct", rates.tbt_pct},
               {"tbt_pct_aggregate", agg.tbt_pct}};
  j["energy"] = {{"prefill_pool_j", r.prefill_pool_j()},
                 {"decode_pool_j", r.decode_pool_j()},
                 {"total_j", r.total_j()}};
  json pw = json::array();
  for (const auto& l : r.prefill_ledgers) pw.push_back(ledger_json(l));
  json dw = json::array();
  for (const auto& l : r.decode_ledgers) dw.push_back(ledger_json(l));
  j["energy"]["prefill_workers"] = std::move(pw);
  j["energy"]["decode_workers"] = std::move(dw);
  j["overload"] = {{"rejected_requests", r.overload.rejected_requests},
                   {"rejected_ids", r.overload.rejected_ids}};
  j["sim_end_ms"] = r.sim_end_ms;
  j["last_arrival_ms"] = r.last_arrival_ms;
  j["saturated"] = r.saturated();
  j["completed_requests"] = r.completed_requests();
  j["artifacts"] = {{"decisions_csv", "decisions.csv"},
                    {"prefill_commands_csv", "prefill_commands.csv"},
                    {"freq_timeline_csv", "freq_timeline.csv"}};
  json reqs = json::array();
  for (const auto& rec : r.requests) {
    json q{{"id", rec.id},
           {"arrival_ms", rec.arrival_ms},
           {"prompt_tokens", rec.prompt_tokens},
           {"output_tokens", rec.output_tokens},
           {"class", prompt_class_name(rec.cls)},
           {"queue", rec.class_queue},
           {"prefill_worker", rec.prefill_worker},
           {"decode_worker", rec.decode_worker},
           {"completed", rec.completed},
           {"rejected", rec.rejected}};
    if (rec.completed) {
      q["prefill_start_ms"] = rec.prefill_start_ms;
      q["prefill_end_ms"] = rec.prefill_end_ms;
      q["first_token_ms"] = rec.first_token_ms;
      q["finish_ms"] = rec.finish_ms;
      q["ttft_ms"] = rec.ttft_ms();
      q["tbt"] = tbt_digest(rec.tbt_ms);
    }
    reqs.push_back(std::move(q));
  }
  j["requests"] = std::move(reqs);
  return j.dump(2) + "\n";
}

void save_run_result(const RunResult& result, const std::string& path) {
  spit_file(path, run_result_json(result));
}

RunSummary load_run_summary(const std::string& path) {
  json j;
  try {
    j = json::parse(slurp_file(path));
  } catch (const json::parse_error& e) {
    throw IoError("run document " + path + ": " + e.what());
  }
  if (!j.contains("schema") || j["schema"] != "greensim.run.v1")
    throw IoError("run document " + path + ": unknown schema");
  RunSummary s;
  try {
    s.method = j.at("policy").at("kind").get<std::string>();
    s.workload = j.at("workload").get<std::string>();
    s.prefill_j = j.at("energy").at("prefill_pool_j").get<double>();
    s.decode_j = j.at("energy").at("decode_pool_j").get<double>();
    s.total_j = j.at("energy").at("total_j").get<double>();
    s.ttft_pct = j.at("pass").at("ttft_pct").get<double>();
    s.tbt_pct = j.at("pass").at("tbt_pct").get<double>();
  } catch (const json::exception& e) {
    throw IoError("run document " + path + ": " + e.what());
  }
  return s;
}

}  // namespace greensim
