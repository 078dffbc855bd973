#pragma once

#include <string>

#include "greensim/gpu_model.hpp"
#include "greensim/simkernel.hpp"

namespace greensim {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Profile document schema (JSON):
//   { "name": str,
//     "grid": {"f_min_mhz", "f_max_mhz", "step_mhz", "f_ref_mhz"},
//     "prefill_latency": {"a", "b", "c", "f_ref_mhz"},
//     "decode_step": {"alpha0_ms", "alpha1_ms", "beta0_ms", "beta1_ms", "f_ref_mhz"},
//     "power": {"k3", "k2", "k1", "k0", "p_idle_w"} }
GpuProfile load_profile(const std::string& path);
std::string profile_json(const GpuProfile& profile);
void save_profile(const GpuProfile& profile, const std::string& path);

// Run document, schema id "greensim.run.v1". Per-request TBT series are
// stored as digests (count/p50/p95/p99/max); raw samples stay in memory only.
std::string run_result_json(const RunResult& result);
void save_run_result(const RunResult& result, const std::string& path);

// The slice of a run document that `report` needs to rebuild ReportRows.
struct RunSummary {
  std::string method;
  std::string workload;
  double prefill_j = 0.0;
  double decode_j = 0.0;
  double total_j = 0.0;
  double ttft_pct = 0.0;
  double tbt_pct = 0.0;
};
RunSummary load_run_summary(const std::string& path);

std::string slurp_file(const std::string& path);
void spit_file(const std::string& path, const std::string& content);

}  // namespace greensim
