#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace greensim {

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// SM frequency grid. Frequencies are MHz throughout.
struct FrequencyGrid {
  double f_min_mhz = 210.0;
  double f_max_mhz = 1410.0;
  double step_mhz = 15.0;
  double f_ref_mhz = 1410.0;

  void validate() const;
  bool on_grid(double f) const;
  std::size_t size() const;                 // number of grid points
  double at(std::size_t i) const;           // i-th grid frequency
  std::vector<double> frequencies() const;  // ascending
  double clamp_to_grid(double f) const;     // nearest grid point within bounds
};

// Prefill latency at the reference clock: t_ref(L) = a*L^2 + b*L + c  [ms].
// Latency at clock f scales as t_ref * f_ref / f.
struct LatencyModel {
  double a = 0.0;  // ms per token^2
  double b = 0.0;  // ms per token
  double c = 0.0;  // ms
  double f_ref_mhz = 1410.0;

  void validate() const;  // positive latency over L in [1, 65536], a >= 0
};

// Decode step time for a batch of concurrent streams:
//   step(batch, f) = (alpha0 + alpha1*batch) + (beta0 + beta1*batch) * f_ref / f  [ms]
// The alpha part is clock-independent (memory-bound floor), the beta part
// scales inversely with the clock.
struct DecodeStepModel {
  double alpha0_ms = 0.0;
  double alpha1_ms = 0.0;
  double beta0_ms = 0.0;
  double beta1_ms = 0.0;
  double f_ref_mhz = 1410.0;

  void validate() const;  // all coefficients >= 0, step positive for batch >= 1
};

// Active power draw P(f) = k3*f^3 + k2*f^2 + k1*f + k0 [W], plus a separate
// idle floor p_idle (the cubic's constant term is not the idle power).
struct PowerModel {
  double k3 = 0.0;
  double k2 = 0.0;
  double k1 = 0.0;
  double k0 = 0.0;
  double p_idle_w = 0.0;

  double active_power_w(double f) const { return ((k3 * f + k2) * f + k1) * f + k0; }
  // Checked against a grid: strictly increasing and above p_idle on every point.
  void validate(const FrequencyGrid& grid) const;
};

struct GpuProfile {
  std::string name = "default";
  FrequencyGrid grid;
  LatencyModel prefill;
  DecodeStepModel decode;
  PowerModel power;

  void validate() const;

  // Model evaluations; all throw ModelError if f is off-grid.
  double prefill_latency_ms(double prompt_tokens, double f) const;
  double decode_step_ms(double batch, double f) const;
  double active_power_w(double f) const;
  double idle_power_w() const { return power.p_idle_w; }

  // Calibrated synthetic device shipped with the project (see profiles/default.json
  // and scripts/calibrate_profile.py for the calibration checks).
  static GpuProfile default_profile();
};

// Raw model formulas without grid checking (used by fitters and tests).
double prefill_latency_raw_ms(const LatencyModel& m, double prompt_tokens, double f);
double decode_step_raw_ms(const DecodeStepModel& m, double batch, double f);

// Per-layer prefill FLOPs for a prompt of n tokens:
//   FLOPs(n) = A*n + C*n^2
//   A = 8*B*d_model^2 + 4*B*d_model*d_ff
//   C = 4*alpha*B*h_q*d_k
// alpha = 0.5 counts only the causal (triangular) half of attention, 1.0 the
// full square; 0.5 is the library default elsewhere.
struct FlopsParams {
  std::int64_t d_model = 0;
  std::int64_t d_ff = 0;
  std::int64_t h_q = 0;
  std::int64_t d_k = 0;
  std::int64_t batch = 1;
  double alpha_tri = 0.5;

  void validate() const;  // h_q*d_k == d_model, positive dims, alpha in {0.5, 1.0}
};

double flops_prefill_per_layer(const FlopsParams& p, double n_tokens);

// Least-squares fits over scaled inputs (L/1024 and f/1000) with coefficients
// reported unscaled. Throw ModelError on rank deficiency (fewer than 3 distinct
// L, resp. 4 distinct f) or a fit that predicts nonpositive latency in range.
struct LatencyFit {
  LatencyModel model;
  double r_squared = 0.0;
};
struct PowerFit {
  PowerModel model;
  double r_squared = 0.0;
  bool monotone_on_grid = true;  // diagnostic only, not an error
};

// samples: (prompt_tokens, latency_ms at f_ref)
LatencyFit fit_latency(std::span<const std::pair<double, double>> samples, double f_ref_mhz = 1410.0);
// samples: (f_mhz, active power W); p_idle is measured separately and passed through.
PowerFit fit_power(std::span<const std::pair<double, double>> samples, double p_idle_w,
                   const FrequencyGrid& grid);

}  // namespace greensim
