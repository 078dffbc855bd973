// Python bindings for the simulator's main operations: calibrated GPU model
// evaluation, the prefill window-energy optimizer, decode steady state and
// band tables, trace generators, the event-driven run itself, and the
// reporting/audit helpers.  Thin by design — all semantics live in the C++
// library; here we only translate types.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "greensim/decode_ctl.hpp"
#include "greensim/gpu_model.hpp"
#include "greensim/io.hpp"
#include "greensim/metrics.hpp"
#include "greensim/prefill_opt.hpp"
#include "greensim/simkernel.hpp"
#include "greensim/trace.hpp"

namespace py = pybind11;
using namespace greensim;

PYBIND11_MODULE(_greensim, m) {
  m.doc() = "Event-driven simulator for SLO-aware per-phase GPU frequency scaling";

  // ---- models -------------------------------------------------------------
  py::class_<LatencyModel>(m, "LatencyModel")
      .def(py::init<>())
      .def_readwrite("a", &LatencyModel::a)
      .def_readwrite("b", &LatencyModel::b)
      .def_readwrite("c", &LatencyModel::c)
      .def_readwrite("f_ref_mhz", &LatencyModel::f_ref_mhz);

  py::class_<GpuProfile>(m, "GpuProfile")
      .def_static("default_profile", &GpuProfile::default_profile)
      .def_readwrite("name", &GpuProfile::name)
      .def_readwrite("prefill", &GpuProfile::prefill)
      .def("validate", &GpuProfile::validate)
      .def("prefill_latency_ms", &GpuProfile::prefill_latency_ms, py::arg("prompt_tokens"),
           py::arg("f_mhz"))
      .def("decode_step_ms", &GpuProfile::decode_step_ms, py::arg("batch"), py::arg("f_mhz"))
      .def("active_power_w", py::overload_cast<double>(&GpuProfile::active_power_w, py::const_),
           py::arg("f_mhz"))
      .def("idle_power_w", &GpuProfile::idle_power_w)
      .def("grid_frequencies", [](const GpuProfile& p) { return p.grid.frequencies(); })
      .def_property_readonly("f_max_mhz", [](const GpuProfile& p) { return p.grid.f_max_mhz; })
      .def_property_readonly("f_ref_mhz", [](const GpuProfile& p) { return p.grid.f_ref_mhz; });

  m.def("load_profile", &load_profile, py::arg("path"));
  m.def("save_profile", &save_profile, py::arg("profile"), py::arg("path"));

  // ---- prefill window-energy optimizer --------------------------------------
  py::class_<PrefillJob>(m, "PrefillJob")
      .def(py::init([](std::int64_t id, int tokens, double deadline_ms, double work_fraction) {
             return PrefillJob{id, tokens, deadline_ms, work_fraction};
           }),
           py::arg("request_id"), py::arg("prompt_tokens"), py::arg("deadline_ms") = 0.0,
           py::arg("work_fraction") = 1.0)
      .def_readwrite("request_id", &PrefillJob::request_id)
      .def_readwrite("prompt_tokens", &PrefillJob::prompt_tokens)
      .def_readwrite("deadline_ms", &PrefillJob::deadline_ms)
      .def_readwrite("work_fraction", &PrefillJob::work_fraction);

  py::class_<PrefillBatch>(m, "PrefillBatch")
      .def(py::init<>())
      .def(py::init([](std::vector<PrefillJob> jobs) { return PrefillBatch{std::move(jobs)}; }),
           py::arg("jobs"))
      .def_readwrite("jobs", &PrefillBatch::jobs)
      .def("t_ref_total_ms", &PrefillBatch::t_ref_total_ms, py::arg("model"));

  py::class_<EnergyBreakdown>(m, "EnergyBreakdown")
      .def_readonly("total_j", &EnergyBreakdown::total_j)
      .def_readonly("active_j", &EnergyBreakdown::active_j)
      .def_readonly("idle_j", &EnergyBreakdown::idle_j)
      .def_readonly("feasible", &EnergyBreakdown::feasible);

  py::class_<FrequencyChoice>(m, "FrequencyChoice")
      .def_readonly("f_mhz", &FrequencyChoice::f_mhz)
      .def_readonly("energy_j", &FrequencyChoice::energy_j);

  m.def("busy_time_ms", &busy_time_ms, py::arg("batch"), py::arg("f_mhz"), py::arg("profile"));
  m.def("energy_total", &energy_total, py::arg("batch"), py::arg("f_mhz"), py::arg("window_ms"),
        py::arg("profile"));
  m.def("select_frequency", &select_frequency, py::arg("batch"), py::arg("window_ms"),
        py::arg("profile"), "Lowest-energy feasible grid clock, or None if none is feasible");

  // ---- decode steady state and band table ----------------------------------
  py::class_<DecodeSteadyState>(m, "DecodeSteadyState")
      .def_readonly("sustainable", &DecodeSteadyState::sustainable)
      .def_readonly("batch", &DecodeSteadyState::batch)
      .def_readonly("tbt_ms", &DecodeSteadyState::tbt_ms);

  py::class_<BandBucket>(m, "BandBucket")
      .def_readonly("tps_lo", &BandBucket::tps_lo)
      .def_readonly("tps_hi", &BandBucket::tps_hi)
      .def_readonly("f_opt_mhz", &BandBucket::f_opt_mhz)
      .def_readonly("feasible", &BandBucket::feasible);

  py::class_<FreqBandTable>(m, "FreqBandTable")
      .def_readonly("buckets", &FreqBandTable::buckets)
      .def("bucket_index", &FreqBandTable::bucket_index, py::arg("tps"));

  m.def("decode_steady_state", &decode_steady_state, py::arg("profile"), py::arg("per_worker_tps"),
        py::arg("f_mhz"), py::arg("max_batch") = 64);
  m.def(
      "build_band_table",
      [](const GpuProfile& p, const std::vector<double>& levels, double t_slo_ms, int n_workers,
         int max_batch) { return build_band_table(p, levels, t_slo_ms, n_workers, max_batch); },
      py::arg("profile"), py::arg("tps_levels"), py::arg("t_slo_ms"), py::arg("n_workers"),
      py::arg("max_batch") = 64);

  // ---- traces --------------------------------------------------------------
  py::class_<Request>(m, "Request")
      .def_readonly("id", &Request::id)
      .def_readonly("arrival_ms", &Request::arrival_ms)
      .def_readonly("prompt_tokens", &Request::prompt_tokens)
      .def_readonly("output_tokens", &Request::output_tokens);

  py::class_<TraceMeta>(m, "TraceMeta")
      .def_readonly("name", &TraceMeta::name)
      .def_readonly("duration_ms", &TraceMeta::duration_ms)
      .def_readonly("nominal_qps", &TraceMeta::nominal_qps);

  py::class_<Trace>(m, "Trace")
      .def_readonly("requests", &Trace::requests)
      .def_readonly("meta", &Trace::meta)
      .def("__len__", [](const Trace& t) { return t.requests.size(); });

  py::enum_<LoadShapeKind>(m, "LoadShapeKind")
      .value("PoissonQps", LoadShapeKind::PoissonQps)
      .value("SinusoidTps", LoadShapeKind::SinusoidTps)
      .value("ConstantTps", LoadShapeKind::ConstantTps)
      .value("BimodalLength", LoadShapeKind::BimodalLength);

  py::class_<LoadShape>(m, "LoadShape")
      .def(py::init<>())
      .def_readwrite("kind", &LoadShape::kind)
      .def_readwrite("rate", &LoadShape::rate)
      .def_readwrite("amplitude", &LoadShape::amplitude)
      .def_readwrite("period_ms", &LoadShape::period_ms)
      .def_readwrite("long_fraction", &LoadShape::long_fraction)
      .def_readwrite("output_mean", &LoadShape::output_mean)
      .def_readwrite("seed", &LoadShape::seed);

  m.def("generate", &generate, py::arg("shape"), py::arg("duration_ms"));
  m.def("gen_prefill_microbench", &gen_prefill_microbench, py::arg("target_tps"),
        py::arg("prompt_range"), py::arg("duration_ms"), py::arg("seed"));
  m.def("gen_decode_microbench", &gen_decode_microbench, py::arg("target_tps"),
        py::arg("gen_range"), py::arg("duration_ms"), py::arg("seed"));
  m.def("gen_sinusoid_decode_trace", &gen_sinusoid_decode_trace, py::arg("tps_mean"),
        py::arg("tps_amplitude"), py::arg("period_ms"), py::arg("duration_ms"), py::arg("seed"));
  m.def("load_trace", &load_trace, py::arg("path"), py::arg("class_threshold") = 1024);
  m.def("save_trace_csv", &save_trace_csv, py::arg("trace"), py::arg("path"));
  m.def("offered_token_rate", &offered_token_rate, py::arg("trace"), py::arg("t0_ms"),
        py::arg("t1_ms"), py::arg("prompt_tokens"), py::arg("output_tokens"));

  // ---- simulation ------------------------------------------------------------
  py::class_<SloConfig>(m, "SloConfig")
      .def(py::init<>())
      .def_readwrite("ttft_sm_ms", &SloConfig::ttft_sm_ms)
      .def_readwrite("ttft_l_ms", &SloConfig::ttft_l_ms)
      .def_readwrite("tbt_p95_ms", &SloConfig::tbt_p95_ms);

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def_readwrite("n_prefill_workers", &SimConfig::n_prefill_workers)
      .def_readwrite("n_decode_workers", &SimConfig::n_decode_workers)
      .def_readwrite("actuation_delay_ms", &SimConfig::actuation_delay_ms)
      .def_readwrite("handoff_delay_ms", &SimConfig::handoff_delay_ms)
      .def_readwrite("max_batch", &SimConfig::max_batch)
      .def_readwrite("max_queue", &SimConfig::max_queue);

  py::class_<QueueOptimizerConfig>(m, "QueueOptimizerConfig")
      .def_readwrite("margin_prefill", &QueueOptimizerConfig::margin_prefill)
      .def_readwrite("min_budget_ms", &QueueOptimizerConfig::min_budget_ms);

  py::class_<DecodeCtlConfig>(m, "DecodeCtlConfig")
      .def_readwrite("margin_decode", &DecodeCtlConfig::margin_decode)
      .def_readwrite("tslo_ms", &DecodeCtlConfig::tslo_ms);

  py::class_<GovernorPolicy>(m, "GovernorPolicy")
      .def_static("default_nv", &GovernorPolicy::default_nv)
      .def_static("fixed", &GovernorPolicy::fixed, py::arg("f_mhz"))
      .def_static("greenllm", &GovernorPolicy::greenllm)
      .def_static("prefill_split", &GovernorPolicy::prefill_split)
      .def_readwrite("prefill_opt", &GovernorPolicy::prefill_opt)
      .def_readwrite("decode_ctl", &GovernorPolicy::decode_ctl);

  py::class_<RequestRecord>(m, "RequestRecord")
      .def_readonly("id", &RequestRecord::id)
      .def_readonly("arrival_ms", &RequestRecord::arrival_ms)
      .def_readonly("prompt_tokens", &RequestRecord::prompt_tokens)
      .def_readonly("output_tokens", &RequestRecord::output_tokens)
      .def_readonly("first_token_ms", &RequestRecord::first_token_ms)
      .def_readonly("finish_ms", &RequestRecord::finish_ms)
      .def_readonly("tbt_ms", &RequestRecord::tbt_ms)
      .def_readonly("completed", &RequestRecord::completed)
      .def_readonly("rejected", &RequestRecord::rejected)
      .def("ttft_ms", &RequestRecord::ttft_ms);

  py::class_<RunResult>(m, "RunResult")
      .def_readonly("requests", &RunResult::requests)
      .def_readonly("sim_end_ms", &RunResult::sim_end_ms)
      .def_readonly("last_arrival_ms", &RunResult::last_arrival_ms)
      .def("prefill_pool_j", &RunResult::prefill_pool_j)
      .def("decode_pool_j", &RunResult::decode_pool_j)
      .def("total_j", &RunResult::total_j)
      .def("completed_requests", &RunResult::completed_requests)
      .def("saturated", &RunResult::saturated);

  m.def("run", &run, py::arg("trace"), py::arg("profile"), py::arg("policy"), py::arg("seed"),
        py::arg("slo"), py::arg("sim") = SimConfig{},
        py::call_guard<py::gil_scoped_release>());

  py::class_<SweepPoint>(m, "SweepPoint")
      .def_readonly("f_mhz", &SweepPoint::f_mhz)
      .def_readonly("total_j", &SweepPoint::total_j)
      .def_readonly("prefill_j", &SweepPoint::prefill_j)
      .def_readonly("decode_j", &SweepPoint::decode_j)
      .def_readonly("ttft_pass_pct", &SweepPoint::ttft_pass_pct)
      .def_readonly("tbt_pass_pct", &SweepPoint::tbt_pass_pct)
      .def_readonly("saturated", &SweepPoint::saturated);

  m.def(
      "fixed_frequency_sweep",
      [](const Trace& t, const GpuProfile& p, const std::vector<double>& freqs,
         const SloConfig& slo, const SimConfig& sim) {
        return fixed_frequency_sweep(t, p, freqs, slo, sim);
      },
      py::arg("trace"), py::arg("profile"), py::arg("freqs"), py::arg("slo"),
      py::arg("sim") = SimConfig{}, py::call_guard<py::gil_scoped_release>());

  // ---- metrics, reports, audit ----------------------------------------------
  py::class_<PassRates>(m, "PassRates")
      .def_readonly("ttft_pct", &PassRates::ttft_pct)
      .def_readonly("tbt_pct", &PassRates::tbt_pct);

  m.def(
      "quantile",
      [](const std::vector<double>& xs, double q) { return quantile(xs, q); },
      py::arg("samples"), py::arg("q"));
  m.def(
      "pearson",
      [](const std::vector<double>& x, const std::vector<double>& y) { return pearson(x, y); },
      py::arg("x"), py::arg("y"));
  m.def("slo_pass_rates", &slo_pass_rates, py::arg("result"), py::arg("slo"),
        py::arg("aggregate_tbt") = false);

  m.def("run_result_json", &run_result_json, py::arg("result"),
        "Full result document as a JSON string (stable across identical runs)");
  m.def(
      "decision_log_csv",
      [](const RunResult& r) { return decision_log_csv(r.decode_decisions); }, py::arg("result"));
  m.def(
      "freq_timeline_csv",
      [](const RunResult& r) { return freq_timeline_csv(r.freq_timeline); }, py::arg("result"));
  m.def(
      "audit_decisions",
      [](const RunResult& r) {
        const AuditResult a = audit_decision_log(r.decode_decisions, r.policy.decode_ctl);
        return py::make_tuple(a.violations, a.messages);
      },
      py::arg("result"), "Replay the controller safety auditor; returns (violations, messages)");
}
