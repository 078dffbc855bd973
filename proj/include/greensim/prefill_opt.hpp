#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "greensim/gpu_model.hpp"

namespace greensim {

// One prefill job as seen by the optimizer. `work_fraction` < 1 for a job
// whose prefill is already partially done (the running job at snapshot time).
struct PrefillJob {
  std::int64_t request_id = 0;
  int prompt_tokens = 0;
  double deadline_ms = 0.0;     // absolute sim time by which prefill must end
                                // (TTFT deadline minus the first-token allowance)
  double work_fraction = 1.0;   // share of reference work still outstanding
};

struct PrefillBatch {
  std::vector<PrefillJob> jobs;

  // Total outstanding reference work at f_ref [ms].
  double t_ref_total_ms(const LatencyModel& m) const;
};

// Total busy time of the batch at clock f: (f_ref / f) * T_ref. Equals the sum
// of per-job scaled latencies.
double busy_time_ms(const PrefillBatch& batch, double f, const GpuProfile& profile);

struct EnergyBreakdown {
  double active_j = 0.0;
  double idle_j = 0.0;
  double total_j = 0.0;
  bool feasible = true;  // busy time fits inside the window
};

// Component-wise energy of running the batch at clock f inside a window of
// window_ms: active power over the busy time plus idle power over the rest.
EnergyBreakdown energy_total(const PrefillBatch& batch, double f, double window_ms,
                             const GpuProfile& profile);

// Same quantity in closed form:
//   f_ref*T_ref*(k3 f^2 + k2 f + k1 + k0/f) + p_idle*(window - f_ref*T_ref/f)
// Kept separate so the two derivations can be cross-checked.
double energy_total_closed_form_j(const PrefillBatch& batch, double f, double window_ms,
                                  const GpuProfile& profile);

struct FrequencyChoice {
  double f_mhz = 0.0;
  double energy_j = 0.0;
};

// Exhaustive scan of the grid: minimum-energy frequency whose busy time fits
// in the window. Ties break toward the lower frequency. Returns nullopt iff
// even f_max cannot finish inside the window.
std::optional<FrequencyChoice> select_frequency(const PrefillBatch& batch, double window_ms,
                                                const GpuProfile& profile);

struct QueueOptimizerConfig {
  double resolve_period_ms = 100.0;
  double margin_prefill = 0.95;   // scales the available window
  double min_budget_ms = 100.0;   // floor for the window (one re-solve period)
  // Slice of the TTFT budget reserved for handoff plus the first decode step;
  // prefill deadlines are the TTFT deadline minus this.
  double first_token_allowance_ms = 100.0;
};

struct ClassQueueSnapshot {
  int class_id = 0;
  PrefillBatch batch;  // pending + running jobs of this class
};

struct PrefillFreqCommand {
  int class_id = 0;
  double f_mhz = 0.0;
  double window_ms = 0.0;  // the budget the command was solved against
  bool infeasible = false; // true when pinned to f_max because nothing fits
};

// One optimizer re-solve: per non-empty class, window = margin * min slack over
// jobs (clamped below at min_budget) and the resulting frequency command.
// Empty classes produce no command (frequency held).
std::vector<PrefillFreqCommand> queue_optimizer_tick(const std::vector<ClassQueueSnapshot>& queues,
                                                     double now_ms,
                                                     const QueueOptimizerConfig& cfg,
                                                     const GpuProfile& profile);

}  // namespace greensim
