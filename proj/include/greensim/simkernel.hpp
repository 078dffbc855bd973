#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "greensim/decode_ctl.hpp"
#include "greensim/gpu_model.hpp"
#include "greensim/prefill_opt.hpp"
#include "greensim/router.hpp"
#include "greensim/trace.hpp"

namespace greensim {

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PolicyKind { DefaultNV, FixedFreq, GreenLLM, PrefillSplit };

const char* policy_kind_name(PolicyKind k);
std::optional<PolicyKind> parse_policy_kind(const std::string& name);

// A governor preset. DefaultNV pins every clock at f_max with a single shared
// prefill queue. FixedFreq pins every clock at `fixed_freq_mhz`. GreenLLM
// enables length-based routing plus both frequency controllers. PrefillSplit
// is GreenLLM's queue layout with DVFS disabled (clocks stay at f_max), which
// isolates the routing effect.
struct GovernorPolicy {
  PolicyKind kind = PolicyKind::DefaultNV;
  double fixed_freq_mhz = 0.0;  // FixedFreq only
  RoutingConfig routing;
  QueueOptimizerConfig prefill_opt;
  DecodeCtlConfig decode_ctl;

  bool routing_enabled() const {
    return (kind == PolicyKind::GreenLLM || kind == PolicyKind::PrefillSplit) && routing.enabled;
  }
  bool dvfs_enabled() const { return kind == PolicyKind::GreenLLM; }

  static GovernorPolicy default_nv();
  static GovernorPolicy fixed(double f_mhz);
  static GovernorPolicy greenllm();
  static GovernorPolicy prefill_split();

  void validate(const FrequencyGrid& grid, int n_prefill_workers) const;
};

// Raw-latency SLO targets. Controller margins live in the governor configs;
// pass rates are always judged against these unscaled numbers.
struct SloConfig {
  double ttft_sm_ms = 400.0;
  double ttft_l_ms = 2000.0;
  double tbt_p95_ms = 100.0;

  double ttft_for(PromptClass cls) const {
    return cls == PromptClass::ShortMedium ? ttft_sm_ms : ttft_l_ms;
  }
  void validate() const;
};

// Test seam: force a clock command at a given instant (it still goes through
// the normal actuation delay). Only meaningful under policies that do not
// drive the clock themselves.
struct ScriptedFreqEvent {
  double time_ms = 0.0;
  bool prefill_pool = false;
  int worker = 0;
  double f_mhz = 0.0;
};

struct SimConfig {
  int n_prefill_workers = 2;
  int n_decode_workers = 4;
  int gpus_per_prefill_worker = 2;  // prefill workers draw this multiple of the power model
  double actuation_delay_ms = 5.0;
  double handoff_delay_ms = 0.0;  // prefill -> decode KV transfer
  int max_batch = 64;
  int max_queue = 10000;  // per prefill class queue and per decode worker backlog
  // TPS levels of the coarse band table: lo..hi inclusive, fixed step.
  double band_tps_lo = 200.0;
  double band_tps_hi = 3000.0;
  double band_tps_step = 200.0;
  std::vector<ScriptedFreqEvent> scripted_freq;

  void validate() const;
};

struct RequestRecord {
  std::int64_t id = 0;
  double arrival_ms = 0.0;
  int prompt_tokens = 0;
  int output_tokens = 0;
  PromptClass cls = PromptClass::ShortMedium;
  int class_queue = 0;  // router queue index
  int prefill_worker = -1;
  int decode_worker = -1;
  double prefill_start_ms = -1.0;
  double prefill_end_ms = -1.0;
  double first_token_ms = -1.0;  // TTFT = first_token_ms - arrival_ms
  double finish_ms = -1.0;
  std::vector<double> tbt_ms;  // inter-token gaps (output_tokens - 1 samples)
  bool completed = false;
  bool rejected = false;  // dropped by an overload cap, never serviced

  double ttft_ms() const { return first_token_ms - arrival_ms; }
};

// Piecewise-constant power history of one worker. Intervals partition
// [0, sim_end] with no gaps; energy accumulators are exact sums over them.
struct LedgerInterval {
  double t0_ms = 0.0;
  double t1_ms = 0.0;
  double power_w = 0.0;
  int phase = 0;  // 0 active-prefill, 1 active-decode, 2 idle
};

struct WorkerLedger {
  std::vector<LedgerInterval> intervals;
  double active_prefill_j = 0.0;
  double active_decode_j = 0.0;
  double idle_j = 0.0;

  double total_j() const { return active_prefill_j + active_decode_j + idle_j; }
};

// A clock change as applied (post actuation delay). t = 0 rows record the
// initial clocks.
struct FreqChangeRecord {
  double applied_ms = 0.0;
  bool prefill_pool = false;
  int worker = 0;
  double f_mhz = 0.0;
};

// One prefill-optimizer command, annotated with the worker it was sent to.
struct PrefillCommandRecord {
  double tick_ms = 0.0;
  int class_id = 0;
  int worker = 0;
  double f_mhz = 0.0;
  double window_ms = 0.0;
  bool infeasible = false;
};

struct OverloadDiagnostics {
  std::int64_t rejected_requests = 0;
  std::vector<std::int64_t> rejected_ids;
};

struct RunResult {
  std::vector<RequestRecord> requests;  // indexed by request id
  std::vector<WorkerLedger> prefill_ledgers;
  std::vector<WorkerLedger> decode_ledgers;
  std::vector<DecisionRecord> decode_decisions;  // merged over workers, tick order
  std::vector<PrefillCommandRecord> prefill_commands;
  std::vector<FreqChangeRecord> freq_timeline;
  OverloadDiagnostics overload;
  double sim_end_ms = 0.0;
  double last_arrival_ms = 0.0;

  // Config echo — sufficient to re-run bit-identically.
  TraceMeta trace_meta;
  std::string profile_name;
  GovernorPolicy policy;
  SloConfig slo;
  SimConfig sim;
  std::uint64_t seed = 0;

  double prefill_pool_j() const;  // active + idle over prefill workers
  double decode_pool_j() const;
  double total_j() const { return prefill_pool_j() + decode_pool_j(); }
  std::int64_t completed_requests() const;
  // Heuristic: the run could not keep up with the offered load (drops, or a
  // drain tail much longer than the arrival span).
  bool saturated() const;
};

// Deterministic discrete-event simulation of the two-pool node. Identical
// inputs produce bit-identical results; `seed` is recorded in the result but
// the kernel itself draws no randomness.
RunResult run(const Trace& trace, const GpuProfile& profile, const GovernorPolicy& policy,
              std::uint64_t seed, const SloConfig& slo, const SimConfig& sim = {});

struct SweepPoint {
  double f_mhz = 0.0;
  double total_j = 0.0;
  double prefill_j = 0.0;
  double decode_j = 0.0;
  double ttft_pass_pct = 0.0;
  double tbt_pass_pct = 0.0;
  bool saturated = false;
};

// One FixedFreq run per frequency; the energy-frequency curve.
std::vector<SweepPoint> fixed_frequency_sweep(const Trace& trace, const GpuProfile& profile,
                                              std::span<const double> freqs, const SloConfig& slo,
                                              const SimConfig& sim = {});

std::string freq_timeline_csv(std::span<const FreqChangeRecord> records);
std::string prefill_commands_csv(std::span<const PrefillCommandRecord> records);

}  // namespace greensim
