#pragma once

#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "greensim/gpu_model.hpp"

namespace greensim {

struct DecodeCtlConfig {
  double tslo_ms = 100.0;        // decode P95 TBT target
  double margin_decode = 0.95;   // scales the target everywhere the controller uses it
  double fine_period_ms = 20.0;
  double coarse_period_ms = 200.0;
  double adapt_period_s = 6.0;
  double step_mhz = 15.0;        // fine-loop adjustment quantum
  double max_step_mhz = 30.0;    // hard ceiling on a fine-loop adjustment
  int hysteresis_count = 3;      // consecutive coarse observations before a band commit
  double bias_threshold = 0.8;   // share of fine ticks clamped at one edge that triggers adaptation
  int tbt_window_tokens = 256;
  double tps_scale = 4.0;        // worker TPS -> table (pool-aggregate) TPS
  double upper_margin = 1.0;     // fine loop raises the clock when margin > this
  double lower_margin = 0.65;    // ... lowers it when margin < this

  void validate() const;
};

// Steady-state decode behaviour of one worker at offered rate tau [tokens/s]
// and clock f, under continuous batching: the fluid batch solves
//   B = tau * step(B, f) / 1000.
struct DecodeSteadyState {
  bool sustainable = false;  // offered rate within capacity at the batch cap
  double batch = 0.0;        // fluid batch (>= 1 once any stream is live)
  double tbt_ms = 0.0;       // per-stream inter-token time = step time at that batch
};
DecodeSteadyState decode_steady_state(const GpuProfile& profile, double per_worker_tps, double f,
                                      int max_batch);

struct BandBucket {
  double tps_lo = 0.0;  // exclusive
  double tps_hi = 0.0;  // inclusive (+inf for the last bucket)
  double f_opt_mhz = 0.0;
  bool feasible = true;  // false: no grid clock meets the target; pinned to f_max
};

// TPS-bucketed frequency table. Buckets partition [0, +inf) with boundaries
// midway between consecutive levels; a TPS exactly on a boundary belongs to
// the lower bucket.
struct FreqBandTable {
  std::vector<BandBucket> buckets;

  int bucket_index(double tps) const;
  // Band around the bucket's set point: (f_opt - step, f_opt + step) clamped
  // to the grid.
  std::pair<double, double> band(int bucket, const FrequencyGrid& grid, double step_mhz) const;
  void validate() const;
};

// For each TPS level, the lowest-energy grid clock whose steady-state P95 TBT
// meets t_slo (energy per token = active power / TPS, so minimum energy and
// lowest feasible clock coincide for a monotone power curve). Infeasible
// levels pin to f_max and are flagged.
FreqBandTable build_band_table(const GpuProfile& profile, std::span<const double> tps_levels,
                               double t_slo_ms, int decode_workers, int max_batch);

// Sliding 200 ms token-rate window.
class TpsWindow {
 public:
  explicit TpsWindow(double window_ms = 200.0) : window_ms_(window_ms) {}
  void record(double t_ms, int tokens) { events_.emplace_back(t_ms, tokens); }
  double tps(double now_ms);

 private:
  double window_ms_;
  std::deque<std::pair<double, int>> events_;
};

// Ring of the last N inter-token intervals feeding the fine loop's P95.
class TbtWindow {
 public:
  explicit TbtWindow(int capacity = 256) : capacity_(capacity) {}
  void record(double interval_ms);
  bool empty() const { return samples_.empty(); }
  double p95() const;

 private:
  int capacity_;
  std::deque<double> samples_;
};

// One row of the controller decision log (also the decisions.csv schema).
struct DecisionRecord {
  double tick_ms = 0.0;
  int worker = 0;
  double tps = 0.0;       // last scaled TPS observation
  double p95_tbt_ms = 0.0;
  int bucket = 0;         // fine/adapt: current bucket; coarse: observed bucket
  double band_lo = 0.0;
  double band_hi = 0.0;
  double command_mhz = 0.0;
  std::string action;     // up|down|hold|coarse_hold|coarse_pending|coarse_commit|adapt_up|adapt_down
};

// Dual-loop per-worker controller. The coarse loop (200 ms) buckets the TPS
// window and commits a new band only after `hysteresis_count` consecutive
// observations; the fine loop (20 ms) nudges the set point by one step inside
// the band based on the P95 TBT margin; the 6 s adaptation loop shifts the
// current bucket's anchor when >80% of the window's fine ticks were clamped
// at one band edge (sustained pegging, not a handful of stray nudges).
class DecodeController {
 public:
  DecodeController(const DecodeCtlConfig& cfg, FreqBandTable table, const FrequencyGrid& grid,
                   int worker_id);

  // Returns the command (set point) after the tick. p95_tbt empty = no data,
  // hold. The command is always inside the active band.
  double on_fine_tick(double now_ms, std::optional<double> p95_tbt_ms);
  void on_coarse_tick(double now_ms, double worker_tps);
  void on_adapt_tick(double now_ms);

  double command() const { return set_point_; }
  const std::vector<DecisionRecord>& log() const { return log_; }
  const FreqBandTable& table() const { return table_; }
  int current_bucket() const { return current_bucket_; }

 private:
  void load_band(int bucket);

  DecodeCtlConfig cfg_;
  FreqBandTable table_;  // per-controller copy; adaptation mutates it
  FrequencyGrid grid_;
  int worker_id_;

  int current_bucket_ = 0;
  int pending_bucket_ = -1;
  int consecutive_ = 0;
  double band_lo_ = 0.0, band_hi_ = 0.0;
  double set_point_ = 0.0;
  double last_tps_ = 0.0;
  double last_p95_ = 0.0;

  struct Adjustment {
    int dir = 0;        // +1/-1/0
    bool hit_bound = false;
  };
  std::vector<Adjustment> adjustments_;  // since the last adaptation tick

  std::vector<DecisionRecord> log_;
};

std::string decision_log_csv(std::span<const DecisionRecord> records);

// Safety audit over a decision log (criterion material):
//  - every fine command inside its active band,
//  - fine-tick deltas within max_step while the band is unchanged,
//  - every band change justified by a 3-consecutive coarse commit or a
//    one-step adaptation shift.
struct AuditResult {
  int violations = 0;
  std::vector<std::string> messages;
};
AuditResult audit_decision_log(std::span<const DecisionRecord> records, const DecodeCtlConfig& cfg);

}  // namespace greensim
