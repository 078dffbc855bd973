#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace greensim {

enum class PromptClass { ShortMedium = 0, Long = 1 };

const char* prompt_class_name(PromptClass c);

struct Request {
  std::int64_t id = 0;
  std::int64_t arrival_ms = 0;
  int prompt_tokens = 0;
  int output_tokens = 0;
  std::optional<PromptClass> cls;
};

struct TraceMeta {
  std::string name;
  std::int64_t duration_ms = 0;  // >= last arrival
  double nominal_qps = 0.0;
};

struct Trace {
  std::vector<Request> requests;
  TraceMeta meta;
};

// Validation failures raised by loaders/generators.
struct TraceError : std::runtime_error {
  enum class Kind { EmptyTrace, NonMonotoneArrivals, MalformedRow, BadHeader, ClassMismatch, BadShape };
  TraceError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
  Kind kind;
};

// Workload shape descriptor used by the CLI/config layer and as the length
// distribution for Poisson traces.
enum class LoadShapeKind { PoissonQps, SinusoidTps, ConstantTps, BimodalLength };

struct LoadShape {
  LoadShapeKind kind = LoadShapeKind::PoissonQps;
  double rate = 1.0;             // QPS (PoissonQps/BimodalLength) or token/s (ConstantTps/SinusoidTps)
  double amplitude = 0.0;        // token/s swing for SinusoidTps
  double period_ms = 0.0;        // sinusoid period
  double prompt_mean_short = 512.0;
  double prompt_mean_long = 4096.0;
  double long_fraction = 0.0;    // probability a request is Long
  double output_mean = 128.0;
  std::uint64_t seed = 0;

  void validate() const;  // throws TraceError{BadShape}
};

// Throws TraceError. `class_threshold` must match the router threshold that will
// be used at runtime; a class column in the file is checked against it.
Trace load_trace(const std::filesystem::path& path, int class_threshold = 1024);

void save_trace_csv(const Trace& trace, const std::filesystem::path& path);

// All generators are pure functions of their arguments: same inputs, same trace.
// Arrival timestamps are integer milliseconds, non-decreasing.

// Poisson arrivals at `qps`; prompt/output lengths drawn from `length_dist`
// (uniform over [mean/2, 3*mean/2] per mode; Long mode with prob long_fraction).
Trace gen_poisson_trace(double qps, std::int64_t duration_ms, const LoadShape& length_dist,
                        std::uint64_t seed);

// Prefill stressor: every request generates exactly one output token; prompts
// uniform over prompt_range; arrivals paced so the offered prompt-token rate
// equals target_tps.
Trace gen_prefill_microbench(double target_tps, std::pair<int, int> prompt_range,
                             std::int64_t duration_ms, std::uint64_t seed);

// Decode stressor: prompt fixed at 32 tokens, generation lengths uniform over
// gen_range; stream admissions paced so the offered decode-token rate equals
// target_tps (steady-state concurrency then adjusts itself in the simulator).
Trace gen_decode_microbench(double target_tps, std::pair<int, int> gen_range,
                            std::int64_t duration_ms, std::uint64_t seed);

// Decode-driving trace whose offered token rate follows
// tps_mean + tps_amplitude * sin(2*pi*t/period_ms); realized by admission
// modulation. tps_mean > tps_amplitude >= 0 required.
Trace gen_sinusoid_decode_trace(double tps_mean, double tps_amplitude, double period_ms,
                                std::int64_t duration_ms, std::uint64_t seed);

// Dispatch on shape.kind using the embedded parameters and seed.
Trace generate(const LoadShape& shape, std::int64_t duration_ms);

// Internal consistency check used by tests: non-decreasing arrivals, positive
// token counts, duration covering the last arrival.
void validate_trace(const Trace& trace);

// Offered token rate (prompt+output tokens attributed to the arrival instant)
// averaged over [t0_ms, t1_ms), tokens/s. Helper for load-accuracy checks.
double offered_token_rate(const Trace& trace, std::int64_t t0_ms, std::int64_t t1_ms,
                          bool prompt_tokens, bool output_tokens);

}  // namespace greensim
