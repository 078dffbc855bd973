#include "greensim/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "greensim/rng.hpp"

namespace greensim {

const char* prompt_class_name(PromptClass c) {
  return c == PromptClass::ShortMedium ? "SM" : "L";
}

void LoadShape::validate() const {
  auto fail = [](const std::string& m) { throw TraceError(TraceError::Kind::BadShape, m); };
  if (rate <= 0.0) fail("load shape: rate must be > 0");
  if (long_fraction < 0.0 || long_fraction > 1.0) fail("load shape: long_fraction outside [0,1]");
  if (kind == LoadShapeKind::SinusoidTps) {
    if (period_ms <= 0.0) fail("load shape: sinusoid period must be > 0");
    if (amplitude < 0.0 || amplitude >= rate) fail("load shape: need rate > amplitude >= 0");
  }
  if (prompt_mean_short <= 0.0 || prompt_mean_long <= 0.0 || output_mean <= 0.0)
    fail("load shape: mean lengths must be > 0");
}

namespace {

PromptClass classify_by_threshold(int prompt_tokens, int threshold) {
  return prompt_tokens <= threshold ? PromptClass::ShortMedium : PromptClass::Long;
}

void finalize_meta(Trace& t, std::string name, std::int64_t duration_ms) {
  t.meta.name = std::move(name);
  std::int64_t last = 0;
  for (const auto& r : t.requests) last = std::max(last, r.arrival_ms);
  t.meta.duration_ms = std::max(duration_ms, last);
  t.meta.nominal_qps =
      t.meta.duration_ms > 0
          ? 1000.0 * static_cast<double>(t.requests.size()) / static_cast<double>(t.meta.duration_ms)
          : 0.0;
}

// Uniform integer length with the requested mean: [mean/2, 3*mean/2], min 1.
int sample_length(Rng& rng, double mean) {
  const auto lo = std::max<std::int64_t>(1, llround(mean * 0.5));
  const auto hi = std::max<std::int64_t>(lo, llround(mean * 1.5));
  return static_cast<int>(rng.uniform_int(lo, hi));
}

}  // namespace

Trace load_trace(const std::filesystem::path& path, int class_threshold) {
  std::ifstream in(path);
  if (!in)
    throw TraceError(TraceError::Kind::MalformedRow, "cannot open trace file: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw TraceError(TraceError::Kind::EmptyTrace, "empty trace file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  bool has_class = false;
  if (line == "arrival_ms,prompt_tokens,output_tokens") {
    has_class = false;
  } else if (line == "arrival_ms,prompt_tokens,output_tokens,class") {
    has_class = true;
  } else {
    throw TraceError(TraceError::Kind::BadHeader, "unrecognized trace header: " + line);
  }

  Trace t;
  std::int64_t row = 1;
  std::int64_t prev_arrival = -1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    const size_t expect = has_class ? 4 : 3;
    if (cols.size() != expect)
      throw TraceError(TraceError::Kind::MalformedRow,
                       "row " + std::to_string(row) + ": expected " + std::to_string(expect) +
                           " columns, got " + std::to_string(cols.size()));

    auto parse_i64 = [&](const std::string& s, const char* what) {
      std::int64_t v{};
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        throw TraceError(TraceError::Kind::MalformedRow,
                         "row " + std::to_string(row) + ": bad " + std::string(what) + " '" + s + "'");
      return v;
    };

    Request r;
    r.id = static_cast<std::int64_t>(t.requests.size());
    r.arrival_ms = parse_i64(cols[0], "arrival_ms");
    r.prompt_tokens = static_cast<int>(parse_i64(cols[1], "prompt_tokens"));
    r.output_tokens = static_cast<int>(parse_i64(cols[2], "output_tokens"));
    if (r.arrival_ms < 0 || r.prompt_tokens < 1 || r.output_tokens < 1)
      throw TraceError(TraceError::Kind::MalformedRow,
                       "row " + std::to_string(row) + ": out-of-range field");
    if (r.arrival_ms < prev_arrival)
      throw TraceError(TraceError::Kind::NonMonotoneArrivals,
                       "row " + std::to_string(row) + ": arrivals must be non-decreasing");
    prev_arrival = r.arrival_ms;

    r.cls = classify_by_threshold(r.prompt_tokens, class_threshold);
    if (has_class) {
      PromptClass file_cls;
      if (cols[3] == "SM")
        file_cls = PromptClass::ShortMedium;
      else if (cols[3] == "L")
        file_cls = PromptClass::Long;
      else
        throw TraceError(TraceError::Kind::MalformedRow,
                         "row " + std::to_string(row) + ": class must be SM or L");
      if (file_cls != *r.cls)
        throw TraceError(TraceError::Kind::ClassMismatch,
                         "row " + std::to_string(row) + ": class column disagrees with threshold " +
                             std::to_string(class_threshold));
    }
    t.requests.push_back(r);
  }
  if (t.requests.empty()) throw TraceError(TraceError::Kind::EmptyTrace, "trace has no rows");

  finalize_meta(t, path.stem().string(), 0);
  return t;
}

void save_trace_csv(const Trace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path.string());
  const bool has_class =
      std::all_of(trace.requests.begin(), trace.requests.end(), [](const Request& r) {
        return r.cls.has_value();
      });
  out << "arrival_ms,prompt_tokens,output_tokens" << (has_class ? ",class" : "") << "\n";
  for (const auto& r : trace.requests) {
    out << r.arrival_ms << ',' << r.prompt_tokens << ',' << r.output_tokens;
    if (has_class) out << ',' << prompt_class_name(*r.cls);
    out << "\n";
  }
}

Trace gen_poisson_trace(double qps, std::int64_t duration_ms, const LoadShape& length_dist,
                        std::uint64_t seed) {
  if (qps <= 0.0) throw TraceError(TraceError::Kind::BadShape, "qps must be > 0");
  length_dist.validate();
  Rng rng(seed);
  Trace t;
  double now = 0.0;
  const double mean_gap = 1000.0 / qps;
  for (;;) {
    now += rng.exponential(mean_gap);
    if (now >= static_cast<double>(duration_ms)) break;
    Request r;
    r.id = static_cast<std::int64_t>(t.requests.size());
    r.arrival_ms = static_cast<std::int64_t>(now);
    const bool is_long = rng.bernoulli(length_dist.long_fraction);
    r.prompt_tokens =
        sample_length(rng, is_long ? length_dist.prompt_mean_long : length_dist.prompt_mean_short);
    r.output_tokens = sample_length(rng, length_dist.output_mean);
    r.cls = classify_by_threshold(r.prompt_tokens, 1024);
    t.requests.push_back(r);
  }
  finalize_meta(t, "poisson", duration_ms);
  return t;
}

namespace {

// Shared pacing core: emit requests so that the request carrying token budget
// G_i arrives once the cumulative offered-token curve reaches sum of the
// earlier budgets. For a constant rate the curve is linear.
Trace paced_token_trace(double target_tps, std::int64_t duration_ms, std::uint64_t seed,
                        int fixed_prompt, std::pair<int, int> var_range, bool tokens_are_prompt,
                        const char* name) {
  if (target_tps <= 0.0) throw TraceError(TraceError::Kind::BadShape, "target_tps must be > 0");
  if (var_range.first < 1 || var_range.second < var_range.first)
    throw TraceError(TraceError::Kind::BadShape, "bad length range");
  Rng rng(seed);
  Trace t;
  double cum_tokens = 0.0;
  for (;;) {
    const auto arrival =
        static_cast<std::int64_t>(llround(1000.0 * cum_tokens / target_tps));
    if (arrival >= duration_ms) break;
    Request r;
    r.id = static_cast<std::int64_t>(t.requests.size());
    r.arrival_ms = arrival;
    const int len = static_cast<int>(rng.uniform_int(var_range.first, var_range.second));
    if (tokens_are_prompt) {
      r.prompt_tokens = len;
      r.output_tokens = 1;
    } else {
      r.prompt_tokens = fixed_prompt;
      r.output_tokens = len;
    }
    r.cls = classify_by_threshold(r.prompt_tokens, 1024);
    t.requests.push_back(r);
    cum_tokens += len;
  }
  if (t.requests.empty() && duration_ms > 0) {
    // Degenerate: even one request exceeds the window; still emit one at t=0.
    Request r;
    r.id = 0;
    r.arrival_ms = 0;
    const int len = static_cast<int>(rng.uniform_int(var_range.first, var_range.second));
    r.prompt_tokens = tokens_are_prompt ? len : fixed_prompt;
    r.output_tokens = tokens_are_prompt ? 1 : len;
    r.cls = classify_by_threshold(r.prompt_tokens, 1024);
    t.requests.push_back(r);
  }
  finalize_meta(t, name, duration_ms);
  return t;
}

}  // namespace

Trace gen_prefill_microbench(double target_tps, std::pair<int, int> prompt_range,
                             std::int64_t duration_ms, std::uint64_t seed) {
  return paced_token_trace(target_tps, duration_ms, seed, 0, prompt_range, true,
                           "prefill_microbench");
}

Trace gen_decode_microbench(double target_tps, std::pair<int, int> gen_range,
                            std::int64_t duration_ms, std::uint64_t seed) {
  return paced_token_trace(target_tps, duration_ms, seed, 32, gen_range, false,
                           "decode_microbench");
}

Trace gen_sinusoid_decode_trace(double tps_mean, double tps_amplitude, double period_ms,
                                std::int64_t duration_ms, std::uint64_t seed) {
  if (tps_mean <= 0.0 || tps_amplitude < 0.0 || tps_mean <= tps_amplitude)
    throw TraceError(TraceError::Kind::BadShape, "need tps_mean > tps_amplitude >= 0");
  if (period_ms <= 0.0) throw TraceError(TraceError::Kind::BadShape, "period must be > 0");

  // Cumulative offered tokens by time t (ms):
  //   L(t) = mean*t/1000 + (amp/1000) * (P/2pi) * (1 - cos(2pi t/P))
  const double two_pi = 2.0 * 3.14159265358979323846;
  auto cum = [&](double t_ms) {
    return tps_mean * t_ms / 1000.0 +
           tps_amplitude / 1000.0 * (period_ms / two_pi) * (1.0 - std::cos(two_pi * t_ms / period_ms));
  };
  // Invert L(t) = target by bisection; L is strictly increasing (mean > amp).
  auto invert = [&](double target, double lo) {
    double hi = lo + 1000.0;
    while (cum(hi) < target) hi += 1000.0;
    for (int i = 0; i < 60 && hi - lo > 1e-6; ++i) {
      const double mid = 0.5 * (lo + hi);
      (cum(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };

  Rng rng(seed);
  Trace t;
  double cum_tokens = 0.0;
  double prev_t = 0.0;
  for (;;) {
    const double t_exact = cum_tokens == 0.0 ? 0.0 : invert(cum_tokens, prev_t);
    const auto arrival = static_cast<std::int64_t>(llround(t_exact));
    if (arrival >= duration_ms) break;
    prev_t = t_exact;
    Request r;
    r.id = static_cast<std::int64_t>(t.requests.size());
    r.arrival_ms = arrival;
    r.prompt_tokens = 32;
    // Streams are kept short relative to any plausible period so the pool's
    // emission rate can actually follow the admission wave.
    r.output_tokens = static_cast<int>(rng.uniform_int(64, 192));
    r.cls = PromptClass::ShortMedium;
    t.requests.push_back(r);
    cum_tokens += r.output_tokens;
  }
  finalize_meta(t, "sinusoid_decode", duration_ms);
  return t;
}

Trace generate(const LoadShape& shape, std::int64_t duration_ms) {
  shape.validate();
  switch (shape.kind) {
    case LoadShapeKind::PoissonQps:
    case LoadShapeKind::BimodalLength:
      return gen_poisson_trace(shape.rate, duration_ms, shape, shape.seed);
    case LoadShapeKind::ConstantTps:
      return gen_sinusoid_decode_trace(shape.rate, 0.0, 60000.0, duration_ms, shape.seed);
    case LoadShapeKind::SinusoidTps:
      return gen_sinusoid_decode_trace(shape.rate, shape.amplitude, shape.period_ms, duration_ms,
                                       shape.seed);
  }
  throw TraceError(TraceError::Kind::BadShape, "unknown load shape kind");
}

void validate_trace(const Trace& trace) {
  std::int64_t prev = 0;
  for (const auto& r : trace.requests) {
    if (r.arrival_ms < prev) throw TraceError(TraceError::Kind::NonMonotoneArrivals, "arrivals");
    prev = r.arrival_ms;
    if (r.prompt_tokens < 1 || r.output_tokens < 1)
      throw TraceError(TraceError::Kind::MalformedRow, "token counts must be >= 1");
  }
  if (trace.meta.duration_ms < prev)
    throw TraceError(TraceError::Kind::MalformedRow, "meta.duration_ms precedes last arrival");
}

double offered_token_rate(const Trace& trace, std::int64_t t0_ms, std::int64_t t1_ms,
                          bool prompt_tokens, bool output_tokens) {
  if (t1_ms <= t0_ms) return 0.0;
  double tokens = 0.0;
  for (const auto& r : trace.requests) {
    if (r.arrival_ms < t0_ms || r.arrival_ms >= t1_ms) continue;
    if (prompt_tokens) tokens += r.prompt_tokens;
    if (output_tokens) tokens += r.output_tokens;
  }
  return tokens * 1000.0 / static_cast<double>(t1_ms - t0_ms);
}

}  // namespace greensim
