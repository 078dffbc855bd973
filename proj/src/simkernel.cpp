#include "greensim/simkernel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <queue>

#include "greensim/metrics.hpp"

namespace greensim {

namespace {

constexpr int kPhaseActivePrefill = 0;
constexpr int kPhaseActiveDecode = 1;
constexpr int kPhaseIdle = 2;

// Event kinds double as tie-break priorities at equal timestamps: service
// events resolve before control events so controllers observe completed work.
enum EvKind : int {
  kArrival = 0,
  kPrefillDone = 1,
  kDecodeStepEnd = 2,
  kDecodeEnqueue = 3,
  kFreqApplied = 4,
  kCoarseTick = 5,
  kAdaptTick = 6,
  kFineTick = 7,
  kOptimizerTick = 8,
};

struct Ev {
  double t = 0.0;
  int kind = 0;
  std::uint64_t seq = 0;  // insertion order, final tie-break
  int worker = -1;
  std::int64_t req = -1;
  double f = 0.0;
  std::uint64_t gen = 0;  // generation guard for cancellable completions
  bool prefill_pool = false;
};

struct EvLater {
  bool operator()(const Ev& a, const Ev& b) const {
    if (a.t != b.t) return a.t > b.t;
    if (a.kind != b.kind) return a.kind > b.kind;
    return a.seq > b.seq;
  }
};

// Piecewise-constant power integrator for one worker.
struct PowerState {
  double last_ms = 0.0;
  double power_w = 0.0;
  int phase = kPhaseIdle;
};

void ledger_close(WorkerLedger& led, PowerState& ps, double now_ms) {
  if (now_ms > ps.last_ms) {
    led.intervals.push_back({ps.last_ms, now_ms, ps.power_w, ps.phase});
    const double joules = ps.power_w * (now_ms - ps.last_ms) / 1000.0;
    if (ps.phase == kPhaseActivePrefill)
      led.active_prefill_j += joules;
    else if (ps.phase == kPhaseActiveDecode)
      led.active_decode_j += joules;
    else
      led.idle_j += joules;
  }
  ps.last_ms = now_ms;
}

void ledger_set(WorkerLedger& led, PowerState& ps, double now_ms, int phase, double power_w) {
  if (phase == ps.phase && power_w == ps.power_w) return;
  ledger_close(led, ps, now_ms);
  ps.phase = phase;
  ps.power_w = power_w;
}

struct PrefillWorkerState {
  int id = 0;
  double freq = 0.0;    // applied clock
  double target = 0.0;  // last commanded clock (possibly pending actuation)
  bool busy = false;
  std::int64_t job = -1;
  double job_t_ref_ms = 0.0;      // full reference service time of the job
  double job_remaining_ref = 0.0; // reference-time work left, at f_ref
  double job_updated_ms = 0.0;    // sim time of the last residual update
  std::uint64_t gen = 0;          // invalidates stale PrefillDone events
  PowerState ps;
};

struct StreamState {
  std::int64_t req = -1;
  int emitted = 0;
  double last_emit_ms = 0.0;
};

struct DecodeWorkerState {
  int id = 0;
  double freq = 0.0;
  double target = 0.0;
  bool stepping = false;
  std::vector<StreamState> active;
  std::deque<std::int64_t> pending;
  PowerState ps;
  TpsWindow tps_win;
  TbtWindow tbt_win;

  int load() const { return static_cast<int>(active.size() + pending.size()); }
};

PromptClass request_class(const Request& r, int threshold) {
  if (r.cls.has_value()) return *r.cls;
  return r.prompt_tokens <= threshold ? PromptClass::ShortMedium : PromptClass::Long;
}

class Sim {
 public:
  Sim(const Trace& trace, const GpuProfile& profile, const GovernorPolicy& policy,
      std::uint64_t seed, const SloConfig& slo, const SimConfig& cfg)
      : trace_(trace),
        profile_(profile),
        policy_(policy),
        slo_(slo),
        cfg_(cfg),
        routing_(policy.routing_enabled() ? policy.routing
                                          : RoutingConfig{false, {}, {}}),
        dispatcher_(routing_) {
    profile_.validate();
    slo_.validate();
    cfg_.validate();
    policy_.validate(profile_.grid, cfg_.n_prefill_workers);
    if (trace_.requests.empty()) throw SimError("run: trace is empty");
    for (std::size_t i = 0; i < trace_.requests.size(); ++i)
      if (trace_.requests[i].id != static_cast<std::int64_t>(i))
        throw SimError("run: request ids must be dense and ordered (0..n-1)");
    for (const auto& s : cfg_.scripted_freq) {
      if (!profile_.grid.on_grid(s.f_mhz)) throw SimError("scripted frequency is off-grid");
      const int n = s.prefill_pool ? cfg_.n_prefill_workers : cfg_.n_decode_workers;
      if (s.worker < 0 || s.worker >= n) throw SimError("scripted frequency: bad worker index");
      if (s.time_ms < 0.0) throw SimError("scripted frequency: negative time");
    }
    result_.seed = seed;
    init();
  }

  RunResult take_result() && { return std::move(result_); }

  void run_loop() {
    while (!queue_.empty()) {
      Ev ev = queue_.top();
      queue_.pop();
      now_ = ev.t;
      switch (ev.kind) {
        case kArrival: on_arrival(ev); break;
        case kPrefillDone: on_prefill_done(ev); break;
        case kDecodeStepEnd: on_decode_step_end(ev); break;
        case kDecodeEnqueue: on_decode_enqueue(ev); break;
        case kFreqApplied: on_freq_applied(ev); break;
        case kCoarseTick: on_coarse_tick(); break;
        case kAdaptTick: on_adapt_tick(); break;
        case kFineTick: on_fine_tick(); break;
        case kOptimizerTick: on_optimizer_tick(); break;
        default: throw SimError("unknown event kind");
      }
    }
    finalize();
  }

 private:
  void schedule(double t, int kind, int worker = -1, std::int64_t req = -1, double f = 0.0,
                std::uint64_t gen = 0, bool prefill_pool = false) {
    queue_.push(Ev{t, kind, next_seq_++, worker, req, f, gen, prefill_pool});
  }

  double initial_decode_freq() const {
    if (policy_.kind == PolicyKind::FixedFreq) return policy_.fixed_freq_mhz;
    if (policy_.kind == PolicyKind::GreenLLM && !controllers_.empty())
      return controllers_.front().command();
    return profile_.grid.f_max_mhz;
  }

  double initial_prefill_freq() const {
    if (policy_.kind == PolicyKind::FixedFreq) return policy_.fixed_freq_mhz;
    return profile_.grid.f_max_mhz;
  }

  void init() {
    result_.trace_meta = trace_.meta;
    result_.profile_name = profile_.name;
    result_.policy = policy_;
    result_.slo = slo_;
    result_.sim = cfg_;

    result_.requests.resize(trace_.requests.size());
    outstanding_ = static_cast<std::int64_t>(trace_.requests.size());

    if (policy_.kind == PolicyKind::GreenLLM) {
      std::vector<double> levels;
      for (double l = cfg_.band_tps_lo; l <= cfg_.band_tps_hi + 1e-9; l += cfg_.band_tps_step)
        levels.push_back(l);
      const double t_slo_eff = policy_.decode_ctl.tslo_ms * policy_.decode_ctl.margin_decode;
      band_table_ = build_band_table(profile_, levels, t_slo_eff, cfg_.n_decode_workers,
                                     cfg_.max_batch);
      for (int w = 0; w < cfg_.n_decode_workers; ++w)
        controllers_.emplace_back(policy_.decode_ctl, band_table_, profile_.grid, w);
    }

    prefill_.resize(cfg_.n_prefill_workers);
    result_.prefill_ledgers.resize(cfg_.n_prefill_workers);
    const double f0p = initial_prefill_freq();
    for (int w = 0; w < cfg_.n_prefill_workers; ++w) {
      auto& pw = prefill_[w];
      pw.id = w;
      pw.freq = pw.target = f0p;
      pw.ps.power_w = idle_power_prefill();
      result_.freq_timeline.push_back({0.0, true, w, f0p});
    }

    decode_.resize(cfg_.n_decode_workers);
    result_.decode_ledgers.resize(cfg_.n_decode_workers);
    const double f0d = initial_decode_freq();
    for (int w = 0; w < cfg_.n_decode_workers; ++w) {
      auto& dw = decode_[w];
      dw.id = w;
      dw.freq = dw.target = f0d;
      dw.ps.power_w = profile_.idle_power_w();
      dw.tps_win = TpsWindow(policy_.decode_ctl.coarse_period_ms);
      dw.tbt_win = TbtWindow(policy_.decode_ctl.tbt_window_tokens);
      result_.freq_timeline.push_back({0.0, false, w, f0d});
    }

    for (const auto& r : trace_.requests) {
      schedule(static_cast<double>(r.arrival_ms), kArrival, -1, r.id);
      result_.last_arrival_ms =
          std::max(result_.last_arrival_ms, static_cast<double>(r.arrival_ms));
    }
    for (const auto& s : cfg_.scripted_freq)
      schedule(s.time_ms + cfg_.actuation_delay_ms, kFreqApplied, s.worker, -1, s.f_mhz, 0,
               s.prefill_pool);

    if (policy_.kind == PolicyKind::GreenLLM) {
      schedule(policy_.decode_ctl.fine_period_ms, kFineTick);
      schedule(policy_.decode_ctl.coarse_period_ms, kCoarseTick);
      schedule(policy_.decode_ctl.adapt_period_s * 1000.0, kAdaptTick);
      schedule(policy_.prefill_opt.resolve_period_ms, kOptimizerTick);
    }
  }

  double idle_power_prefill() const {
    return profile_.idle_power_w() * cfg_.gpus_per_prefill_worker;
  }
  double active_power_prefill(double f) const {
    return profile_.active_power_w(f) * cfg_.gpus_per_prefill_worker;
  }

  // SM/L is an SLO notion pinned at 1024 tokens regardless of how routing
  // slices the queue classes.
  static constexpr int kClassBoundaryTokens = 1024;

  // --- prefill pool -------------------------------------------------------

  int queue_of_worker(int w) const { return routing_.enabled ? routing_.worker_map[w] : 0; }

  void start_prefill(PrefillWorkerState& pw, std::int64_t id) {
    auto& rec = result_.requests[id];
    pw.busy = true;
    pw.job = id;
    pw.job_t_ref_ms = profile_.prefill_latency_ms(rec.prompt_tokens, profile_.grid.f_ref_mhz);
    pw.job_remaining_ref = pw.job_t_ref_ms;
    pw.job_updated_ms = now_;
    ++pw.gen;
    rec.prefill_start_ms = now_;
    rec.prefill_worker = pw.id;
    schedule(now_ + pw.job_remaining_ref * profile_.grid.f_ref_mhz / pw.freq, kPrefillDone, pw.id,
             id, 0.0, pw.gen, true);
    ledger_set(result_.prefill_ledgers[pw.id], pw.ps, now_, kPhaseActivePrefill,
               active_power_prefill(pw.freq));
  }

  void pull_next_prefill(PrefillWorkerState& pw) {
    const int q = queue_of_worker(pw.id);
    if (!dispatcher_.empty(q)) {
      start_prefill(pw, dispatcher_.pop(q));
    } else {
      ledger_set(result_.prefill_ledgers[pw.id], pw.ps, now_, kPhaseIdle, idle_power_prefill());
    }
  }

  void on_arrival(const Ev& ev) {
    const Request& r = trace_.requests[ev.req];
    auto& rec = result_.requests[ev.req];
    rec.id = r.id;
    rec.arrival_ms = static_cast<double>(r.arrival_ms);
    rec.prompt_tokens = r.prompt_tokens;
    rec.output_tokens = r.output_tokens;
    rec.cls = request_class(r, kClassBoundaryTokens);
    const int q = routing_.enabled ? classify(routing_, r.prompt_tokens) : 0;
    rec.class_queue = q;
    if (dispatcher_.size(q) >= static_cast<std::size_t>(cfg_.max_queue)) {
      rec.rejected = true;
      result_.overload.rejected_requests++;
      result_.overload.rejected_ids.push_back(r.id);
      --outstanding_;
      return;
    }
    dispatcher_.dispatch(r);
    for (auto& pw : prefill_) {
      if (!pw.busy && queue_of_worker(pw.id) == q) {
        pull_next_prefill(pw);
        break;
      }
    }
  }

  void on_prefill_done(const Ev& ev) {
    auto& pw = prefill_[ev.worker];
    if (ev.gen != pw.gen || pw.job != ev.req) return;  // superseded by a reschedule
    auto& rec = result_.requests[ev.req];
    rec.prefill_end_ms = now_;
    pw.busy = false;
    pw.job = -1;
    schedule(now_ + cfg_.handoff_delay_ms, kDecodeEnqueue, -1, ev.req);
    pull_next_prefill(pw);
  }

  // --- decode pool --------------------------------------------------------

  void start_decode_step(DecodeWorkerState& dw) {
    while (static_cast<int>(dw.active.size()) < cfg_.max_batch && !dw.pending.empty()) {
      dw.active.push_back({dw.pending.front(), 0, now_});
      dw.pending.pop_front();
    }
    if (dw.active.empty()) {
      ledger_set(result_.decode_ledgers[dw.id], dw.ps, now_, kPhaseIdle, profile_.idle_power_w());
      return;
    }
    dw.stepping = true;
    const double step =
        profile_.decode_step_ms(static_cast<double>(dw.active.size()), dw.freq);
    schedule(now_ + step, kDecodeStepEnd, dw.id);
    ledger_set(result_.decode_ledgers[dw.id], dw.ps, now_, kPhaseActiveDecode,
               profile_.active_power_w(dw.freq));
  }

  void on_decode_enqueue(const Ev& ev) {
    int best = 0;
    for (int w = 1; w < cfg_.n_decode_workers; ++w)
      if (decode_[w].load() < decode_[best].load()) best = w;
    auto& dw = decode_[best];
    auto& rec = result_.requests[ev.req];
    if (dw.load() >= cfg_.max_queue) {
      rec.rejected = true;
      result_.overload.rejected_requests++;
      result_.overload.rejected_ids.push_back(ev.req);
      --outstanding_;
      return;
    }
    rec.decode_worker = best;
    dw.pending.push_back(ev.req);
    if (!dw.stepping) start_decode_step(dw);
  }

  void on_decode_step_end(const Ev& ev) {
    auto& dw = decode_[ev.worker];
    dw.stepping = false;
    const int emitted_tokens = static_cast<int>(dw.active.size());
    std::vector<StreamState> still_active;
    still_active.reserve(dw.active.size());
    for (auto& s : dw.active) {
      auto& rec = result_.requests[s.req];
      if (s.emitted == 0) {
        rec.first_token_ms = now_;
      } else {
        const double gap = now_ - s.last_emit_ms;
        rec.tbt_ms.push_back(gap);
        dw.tbt_win.record(gap);
      }
      s.last_emit_ms = now_;
      ++s.emitted;
      if (s.emitted >= rec.output_tokens) {
        rec.finish_ms = now_;
        rec.completed = true;
        --outstanding_;
      } else {
        still_active.push_back(s);
      }
    }
    dw.active = std::move(still_active);
    dw.tps_win.record(now_, emitted_tokens);
    start_decode_step(dw);
  }

  // --- frequency actuation ------------------------------------------------

  // Commands pass through here; identical targets are dropped, everything
  // else lands after the actuation delay.
  void command_freq(bool prefill_pool, int worker, double f, const char* /*origin*/) {
    double& target = prefill_pool ? prefill_[worker].target : decode_[worker].target;
    if (f == target) return;
    target = f;
    schedule(now_ + cfg_.actuation_delay_ms, kFreqApplied, worker, -1, f, 0, prefill_pool);
  }

  void on_freq_applied(const Ev& ev) {
    if (ev.prefill_pool) {
      auto& pw = prefill_[ev.worker];
      if (ev.f == pw.freq) return;
      const double f_old = pw.freq;
      pw.freq = ev.f;
      if (pw.busy) {
        // Rescale the residual: work done so far at the old clock, remainder
        // rescheduled at the new clock.
        const double elapsed = now_ - pw.job_updated_ms;
        pw.job_remaining_ref -= elapsed * f_old / profile_.grid.f_ref_mhz;
        pw.job_remaining_ref = std::max(pw.job_remaining_ref, 0.0);
        pw.job_updated_ms = now_;
        ++pw.gen;
        schedule(now_ + pw.job_remaining_ref * profile_.grid.f_ref_mhz / pw.freq, kPrefillDone,
                 pw.id, pw.job, 0.0, pw.gen, true);
        ledger_set(result_.prefill_ledgers[pw.id], pw.ps, now_, kPhaseActivePrefill,
                   active_power_prefill(pw.freq));
      }
      result_.freq_timeline.push_back({now_, true, ev.worker, ev.f});
    } else {
      auto& dw = decode_[ev.worker];
      if (ev.f == dw.freq) return;
      dw.freq = ev.f;
      // A step in progress finishes at the old rate; only the ledger power
      // switches at the application instant.
      if (dw.stepping)
        ledger_set(result_.decode_ledgers[dw.id], dw.ps, now_, kPhaseActiveDecode,
                   profile_.active_power_w(dw.freq));
      result_.freq_timeline.push_back({now_, false, ev.worker, ev.f});
    }
  }

  // --- control ticks ------------------------------------------------------

  void on_fine_tick() {
    if (outstanding_ <= 0) return;
    for (int w = 0; w < cfg_.n_decode_workers; ++w) {
      auto& dw = decode_[w];
      std::optional<double> p95;
      if (!dw.tbt_win.empty()) p95 = dw.tbt_win.p95();
      const double cmd = controllers_[w].on_fine_tick(now_, p95);
      command_freq(false, w, cmd, "fine");
    }
    schedule(now_ + policy_.decode_ctl.fine_period_ms, kFineTick);
  }

  void on_coarse_tick() {
    if (outstanding_ <= 0) return;
    for (int w = 0; w < cfg_.n_decode_workers; ++w)
      controllers_[w].on_coarse_tick(now_, decode_[w].tps_win.tps(now_));
    schedule(now_ + policy_.decode_ctl.coarse_period_ms, kCoarseTick);
  }

  void on_adapt_tick() {
    if (outstanding_ <= 0) return;
    for (int w = 0; w < cfg_.n_decode_workers; ++w) controllers_[w].on_adapt_tick(now_);
    schedule(now_ + policy_.decode_ctl.adapt_period_s * 1000.0, kAdaptTick);
  }

  void on_optimizer_tick() {
    if (outstanding_ <= 0) return;
    std::vector<ClassQueueSnapshot> snaps;
    const int n_queues = dispatcher_.n_queues();
    for (int q = 0; q < n_queues; ++q) {
      ClassQueueSnapshot snap;
      snap.class_id = q;
      for (const auto& pw : prefill_) {
        if (!pw.busy || queue_of_worker(pw.id) != q) continue;
        const auto& rec = result_.requests[pw.job];
        const double done = (now_ - pw.job_updated_ms) * pw.freq / profile_.grid.f_ref_mhz;
        const double remaining = std::max(pw.job_remaining_ref - done, 0.0);
        snap.batch.jobs.push_back({pw.job, rec.prompt_tokens, prefill_deadline(rec),
                                   remaining / pw.job_t_ref_ms});
      }
      for (std::int64_t id : dispatcher_.queue(q)) {
        const auto& rec = result_.requests[id];
        snap.batch.jobs.push_back({id, rec.prompt_tokens, prefill_deadline(rec), 1.0});
      }
      snaps.push_back(std::move(snap));
    }
    const auto cmds = queue_optimizer_tick(snaps, now_, policy_.prefill_opt, profile_);
    for (const auto& cmd : cmds) {
      for (const auto& pw : prefill_) {
        if (queue_of_worker(pw.id) != cmd.class_id) continue;
        result_.prefill_commands.push_back(
            {now_, cmd.class_id, pw.id, cmd.f_mhz, cmd.window_ms, cmd.infeasible});
        command_freq(true, pw.id, cmd.f_mhz, "optimizer");
      }
    }
    schedule(now_ + policy_.prefill_opt.resolve_period_ms, kOptimizerTick);
  }

  double prefill_deadline(const RequestRecord& rec) const {
    return rec.arrival_ms + slo_.ttft_for(rec.cls) - policy_.prefill_opt.first_token_allowance_ms;
  }

  // --- teardown -----------------------------------------------------------

  void finalize() {
    double end = 0.0;
    for (const auto& rec : result_.requests) {
      end = std::max(end, rec.finish_ms);
      end = std::max(end, rec.prefill_end_ms);
      end = std::max(end, rec.arrival_ms);
    }
    for (const auto& fc : result_.freq_timeline) end = std::max(end, fc.applied_ms);
    result_.sim_end_ms = end;
    for (int w = 0; w < cfg_.n_prefill_workers; ++w)
      ledger_close(result_.prefill_ledgers[w], prefill_[w].ps, end);
    for (int w = 0; w < cfg_.n_decode_workers; ++w)
      ledger_close(result_.decode_ledgers[w], decode_[w].ps, end);
    for (auto& ctl : controllers_)
      result_.decode_decisions.insert(result_.decode_decisions.end(), ctl.log().begin(),
                                      ctl.log().end());
    std::stable_sort(result_.decode_decisions.begin(), result_.decode_decisions.end(),
                     [](const DecisionRecord& a, const DecisionRecord& b) {
                       if (a.tick_ms != b.tick_ms) return a.tick_ms < b.tick_ms;
                       return a.worker < b.worker;
                     });
    const std::int64_t n = static_cast<std::int64_t>(result_.requests.size());
    std::int64_t done = 0;
    for (const auto& rec : result_.requests) done += (rec.completed || rec.rejected) ? 1 : 0;
    if (done != n) throw SimError("work conservation violated: unfinished requests remain");
  }

  const Trace& trace_;
  GpuProfile profile_;
  GovernorPolicy policy_;
  SloConfig slo_;
  SimConfig cfg_;
  RoutingConfig routing_;
  Dispatcher dispatcher_;

  FreqBandTable band_table_;
  std::vector<DecodeController> controllers_;
  std::vector<PrefillWorkerState> prefill_;
  std::vector<DecodeWorkerState> decode_;

  std::priority_queue<Ev, std::vector<Ev>, EvLater> queue_;
  std::uint64_t next_seq_ = 0;
  double now_ = 0.0;
  std::int64_t outstanding_ = 0;

  RunResult result_;
};

}  // namespace

const char* policy_kind_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::DefaultNV: return "defaultnv";
    case PolicyKind::FixedFreq: return "fixed";
    case PolicyKind::GreenLLM: return "greenllm";
    case PolicyKind::PrefillSplit: return "prefillsplit";
  }
  return "unknown";
}

std::optional<PolicyKind> parse_policy_kind(const std::string& name) {
  if (name == "defaultnv") return PolicyKind::DefaultNV;
  if (name == "fixed") return PolicyKind::FixedFreq;
  if (name == "greenllm") return PolicyKind::GreenLLM;
  if (name == "prefillsplit") return PolicyKind::PrefillSplit;
  return std::nullopt;
}

GovernorPolicy GovernorPolicy::default_nv() {
  GovernorPolicy p;
  p.kind = PolicyKind::DefaultNV;
  p.routing.enabled = false;
  return p;
}

GovernorPolicy GovernorPolicy::fixed(double f_mhz) {
  GovernorPolicy p;
  p.kind = PolicyKind::FixedFreq;
  p.fixed_freq_mhz = f_mhz;
  p.routing.enabled = false;
  return p;
}

GovernorPolicy GovernorPolicy::greenllm() {
  GovernorPolicy p;
  p.kind = PolicyKind::GreenLLM;
  return p;
}

GovernorPolicy GovernorPolicy::prefill_split() {
  GovernorPolicy p;
  p.kind = PolicyKind::PrefillSplit;
  return p;
}

void GovernorPolicy::validate(const FrequencyGrid& grid, int n_prefill_workers) const {
  grid.validate();
  if (kind == PolicyKind::FixedFreq && !grid.on_grid(fixed_freq_mhz))
    throw SimError("policy: fixed frequency is off-grid");
  if (routing_enabled()) routing.validate(n_prefill_workers);
  if (kind == PolicyKind::GreenLLM) {
    decode_ctl.validate();
    if (prefill_opt.resolve_period_ms <= 0.0)
      throw SimError("policy: optimizer period must be > 0");
    if (prefill_opt.margin_prefill < 0.2 || prefill_opt.margin_prefill > 2.0)
      throw SimError("policy: prefill margin out of range [0.2, 2.0]");
    if (prefill_opt.min_budget_ms <= 0.0 || prefill_opt.first_token_allowance_ms < 0.0)
      throw SimError("policy: bad optimizer budget settings");
  }
}

void SloConfig::validate() const {
  if (ttft_sm_ms <= 0.0 || ttft_l_ms <= 0.0 || tbt_p95_ms <= 0.0)
    throw SimError("slo: targets must be positive");
}

void SimConfig::validate() const {
  if (n_prefill_workers <= 0 || n_decode_workers <= 0)
    throw SimError("sim: worker counts must be positive");
  if (gpus_per_prefill_worker <= 0) throw SimError("sim: gpus per prefill worker must be > 0");
  if (actuation_delay_ms < 0.0 || handoff_delay_ms < 0.0)
    throw SimError("sim: delays must be >= 0");
  if (max_batch <= 0 || max_queue <= 0) throw SimError("sim: caps must be positive");
  if (band_tps_lo <= 0.0 || band_tps_step <= 0.0 || band_tps_hi < band_tps_lo)
    throw SimError("sim: bad band table levels");
}

double RunResult::prefill_pool_j() const {
  double e = 0.0;
  for (const auto& l : prefill_ledgers) e += l.total_j();
  return e;
}

double RunResult::decode_pool_j() const {
  double e = 0.0;
  for (const auto& l : decode_ledgers) e += l.total_j();
  return e;
}

std::int64_t RunResult::completed_requests() const {
  std::int64_t n = 0;
  for (const auto& r : requests) n += r.completed ? 1 : 0;
  return n;
}

bool RunResult::saturated() const {
  if (overload.rejected_requests > 0) return true;
  const double drain = sim_end_ms - last_arrival_ms;
  return drain > std::max(10000.0, 0.5 * last_arrival_ms);
}

RunResult run(const Trace& trace, const GpuProfile& profile, const GovernorPolicy& policy,
              std::uint64_t seed, const SloConfig& slo, const SimConfig& sim) {
  Sim s(trace, profile, policy, seed, slo, sim);
  s.run_loop();
  return std::move(s).take_result();
}

std::vector<SweepPoint> fixed_frequency_sweep(const Trace& trace, const GpuProfile& profile,
                                              std::span<const double> freqs, const SloConfig& slo,
                                              const SimConfig& sim) {
  if (freqs.empty()) throw SimError("sweep: empty frequency list");
  std::vector<SweepPoint> points;
  points.reserve(freqs.size());
  for (double f : freqs) {
    RunResult r = run(trace, profile, GovernorPolicy::fixed(f), 0, slo, sim);
    const PassRates rates = slo_pass_rates(r, slo);
    points.push_back({f, r.total_j(), r.prefill_pool_j(), r.decode_pool_j(), rates.ttft_pct,
                      rates.tbt_pct, r.saturated()});
  }
  return points;
}

namespace {
std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}
}  // namespace

std::string freq_timeline_csv(std::span<const FreqChangeRecord> records) {
  std::string out = "applied_ms,pool,worker,f_mhz\n";
  for (const auto& r : records) {
    out += fmt_g(r.applied_ms);
    out += r.prefill_pool ? ",prefill," : ",decode,";
    out += std::to_string(r.worker);
    out += ',';
    out += fmt_g(r.f_mhz);
    out += '\n';
  }
  return out;
}

std::string prefill_commands_csv(std::span<const PrefillCommandRecord> records) {
  std::string out = "tick_ms,class,worker,f_mhz,window_ms,infeasible\n";
  for (const auto& r : records) {
    out += fmt_g(r.tick_ms);
    out += ',';
    out += std::to_string(r.class_id);
    out += ',';
    out += std::to_string(r.worker);
    out += ',';
    out += fmt_g(r.f_mhz);
    out += ',';
    out += fmt_g(r.window_ms);
    out += r.infeasible ? ",1\n" : ",0\n";
  }
  return out;
}

}  // namespace greensim
