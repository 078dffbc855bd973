#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "greensim/io.hpp"
#include "greensim/metrics.hpp"
#include "greensim/simkernel.hpp"

using namespace greensim;

namespace {

Trace make_trace(std::vector<std::tuple<std::int64_t, int, int>> rows) {
  Trace t;
  std::int64_t id = 0;
  for (const auto& [arr, prompt, output] : rows) {
    Request r;
    r.id = id++;
    r.arrival_ms = arr;
    r.prompt_tokens = prompt;
    r.output_tokens = output;
    t.requests.push_back(r);
    t.meta.duration_ms = std::max(t.meta.duration_ms, arr);
  }
  t.meta.name = "unit";
  return t;
}

void check_ledger_consistency(const RunResult& r) {
  auto check_worker = [&](const WorkerLedger& led) {
    REQUIRE_FALSE(led.intervals.empty());
    CHECK(led.intervals.front().t0_ms == 0.0);
    CHECK(led.intervals.back().t1_ms == doctest::Approx(r.sim_end_ms).epsilon(1e-12));
    double by_phase[3] = {0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < led.intervals.size(); ++i) {
      const auto& iv = led.intervals[i];
      CHECK(iv.t1_ms > iv.t0_ms);
      if (i > 0) CHECK(iv.t0_ms == doctest::Approx(led.intervals[i - 1].t1_ms).epsilon(1e-12));
      REQUIRE(iv.phase >= 0);
      REQUIRE(iv.phase <= 2);
      by_phase[iv.phase] += iv.power_w * (iv.t1_ms - iv.t0_ms) / 1000.0;
    }
    CHECK(led.active_prefill_j == doctest::Approx(by_phase[0]).epsilon(1e-9));
    CHECK(led.active_decode_j == doctest::Approx(by_phase[1]).epsilon(1e-9));
    CHECK(led.idle_j == doctest::Approx(by_phase[2]).epsilon(1e-9));
  };
  for (const auto& l : r.prefill_ledgers) check_worker(l);
  for (const auto& l : r.decode_ledgers) check_worker(l);
}

void check_request_invariants(const RunResult& r, const GpuProfile& p) {
  std::int64_t settled = 0;
  for (const auto& rec : r.requests) {
    CHECK((rec.completed || rec.rejected));
    CHECK_FALSE((rec.completed && rec.rejected));
    ++settled;
    if (!rec.completed) continue;
    CHECK(rec.prefill_start_ms >= rec.arrival_ms);
    CHECK(rec.prefill_end_ms > rec.prefill_start_ms);
    CHECK(rec.first_token_ms > rec.prefill_end_ms);
    CHECK(rec.finish_ms >= rec.first_token_ms);
    CHECK(static_cast<int>(rec.tbt_ms.size()) == rec.output_tokens - 1);
    for (double g : rec.tbt_ms) CHECK(g > 0.0);
    // Physics floor: no request beats a dedicated machine at the top clock.
    const double floor_ms = p.prefill_latency_ms(rec.prompt_tokens, p.grid.f_max_mhz) +
                            p.decode_step_ms(1.0, p.grid.f_max_mhz);
    CHECK(rec.ttft_ms() >= floor_ms - 1e-9);
  }
  CHECK(settled == static_cast<std::int64_t>(r.requests.size()));
  CHECK(r.completed_requests() + r.overload.rejected_requests ==
        static_cast<std::int64_t>(r.requests.size()));
}

}  // namespace

TEST_CASE("single request at the top clock: closed-form timeline and energy") {
  const GpuProfile p = GpuProfile::default_profile();
  const Trace tr = make_trace({{0, 512, 8}});
  const RunResult r = run(tr, p, GovernorPolicy::fixed(1410.0), 1, SloConfig{});

  // t_ref(512) = 2e-5*512^2 + 0.12*512 + 8 = 74.68288 ms; batch-1 step at the
  // reference clock = 14.5 + 0.1 + 9 + 0.135 = 23.735 ms.
  const auto& rec = r.requests[0];
  CHECK(rec.completed);
  CHECK(rec.prefill_start_ms == 0.0);
  CHECK(rec.prefill_end_ms == doctest::Approx(74.68288).epsilon(1e-12));
  CHECK(rec.first_token_ms == doctest::Approx(98.41788).epsilon(1e-12));
  CHECK(rec.ttft_ms() == doctest::Approx(98.41788).epsilon(1e-12));
  CHECK(rec.finish_ms == doctest::Approx(264.56288).epsilon(1e-12));
  REQUIRE(rec.tbt_ms.size() == 7);
  for (double g : rec.tbt_ms) CHECK(g == doctest::Approx(23.735).epsilon(1e-12));
  CHECK(rec.prefill_worker == 0);
  CHECK(rec.decode_worker == 0);
  CHECK(r.sim_end_ms == doctest::Approx(264.56288).epsilon(1e-12));

  // Energy by hand. Prefill workers hold two GPUs and draw twice the model
  // power in both states; the cubic at 1410 evaluates to 536.70536 W.
  const double Pa = p.active_power_w(1410.0);
  CHECK(Pa == doctest::Approx(536.70536).epsilon(1e-12));
  const double end = r.sim_end_ms, pf = rec.prefill_end_ms, idle = p.idle_power_w();
  const double w_pf0 = 2 * Pa * pf / 1000.0 + 2 * idle * (end - pf) / 1000.0;
  const double w_pf1 = 2 * idle * end / 1000.0;
  const double w_dc0 = idle * pf / 1000.0 + Pa * (end - pf) / 1000.0;
  const double w_dcx = idle * end / 1000.0;
  CHECK(r.prefill_ledgers[0].total_j() == doctest::Approx(w_pf0).epsilon(1e-9));
  CHECK(r.prefill_ledgers[1].total_j() == doctest::Approx(w_pf1).epsilon(1e-9));
  CHECK(r.decode_ledgers[0].total_j() == doctest::Approx(w_dc0).epsilon(1e-9));
  for (int w = 1; w < 4; ++w)
    CHECK(r.decode_ledgers[w].total_j() == doctest::Approx(w_dcx).epsilon(1e-9));
  CHECK(r.total_j() ==
        doctest::Approx(w_pf0 + w_pf1 + w_dc0 + 3 * w_dcx).epsilon(1e-9));
  CHECK(r.prefill_ledgers[0].active_prefill_j == doctest::Approx(2 * Pa * pf / 1000.0));
  CHECK(r.decode_ledgers[0].active_decode_j == doctest::Approx(Pa * (end - pf) / 1000.0));

  check_ledger_consistency(r);
  check_request_invariants(r, p);

  // A fixed-frequency run never re-commands clocks: the timeline holds only
  // the six initial rows.
  CHECK(r.freq_timeline.size() == 6);
  for (const auto& fc : r.freq_timeline) {
    CHECK(fc.applied_ms == 0.0);
    CHECK(fc.f_mhz == 1410.0);
  }
  CHECK_FALSE(r.saturated());
}

TEST_CASE("handoff delay shifts the first token, not the prefill") {
  const GpuProfile p = GpuProfile::default_profile();
  SimConfig cfg;
  cfg.handoff_delay_ms = 10.0;
  const Trace tr = make_trace({{0, 512, 2}});
  const RunResult r = run(tr, p, GovernorPolicy::fixed(1410.0), 1, SloConfig{}, cfg);
  CHECK(r.requests[0].prefill_end_ms == doctest::Approx(74.68288).epsilon(1e-12));
  CHECK(r.requests[0].first_token_ms == doctest::Approx(108.41788).epsilon(1e-12));
}

TEST_CASE("two streams on one decode worker: batch growth changes step time") {
  const GpuProfile p = GpuProfile::default_profile();
  SimConfig cfg;
  cfg.n_prefill_workers = 1;
  cfg.n_decode_workers = 1;
  const Trace tr = make_trace({{0, 512, 8}, {0, 512, 8}});
  const RunResult r = run(tr, p, GovernorPolicy::fixed(1410.0), 1, SloConfig{}, cfg);

  // Prefill is serial on the single worker: request 1 starts at 74.68288 and
  // lands on the decode worker at 149.36576, mid-step. It joins the batch when
  // that step ends (169.62288); steps then take 14.7 + 9.27 = 23.97 ms until
  // request 0 retires its 8th token, after which the batch drops back to 1.
  const auto& r0 = r.requests[0];
  const auto& r1 = r.requests[1];
  CHECK(r1.prefill_start_ms == doctest::Approx(74.68288).epsilon(1e-12));
  CHECK(r1.prefill_end_ms == doctest::Approx(149.36576).epsilon(1e-12));
  CHECK(r1.first_token_ms == doctest::Approx(193.59288).epsilon(1e-9));
  CHECK(r0.finish_ms == doctest::Approx(265.50288).epsilon(1e-9));
  CHECK(r1.finish_ms == doctest::Approx(360.44288).epsilon(1e-9));

  auto census = [](const std::vector<double>& gaps) {
    int solo = 0, paired = 0;
    for (double g : gaps) {
      if (std::abs(g - 23.735) < 1e-9) ++solo;
      if (std::abs(g - 23.97) < 1e-9) ++paired;
    }
    REQUIRE(solo + paired == static_cast<int>(gaps.size()));
    return std::pair<int, int>{solo, paired};
  };
  CHECK(census(r0.tbt_ms) == std::pair<int, int>{3, 4});
  CHECK(census(r1.tbt_ms) == std::pair<int, int>{4, 3});
  check_ledger_consistency(r);
  check_request_invariants(r, p);
}

TEST_CASE("scripted clock switch: residual work rescales at the applied instant") {
  const GpuProfile p = GpuProfile::default_profile();
  SimConfig cfg;
  cfg.scripted_freq.push_back({50.0, true, 0, 900.0});
  const Trace tr = make_trace({{0, 512, 8}});
  const RunResult r = run(tr, p, GovernorPolicy::default_nv(), 1, SloConfig{}, cfg);

  // Commanded at 50 ms, applied at 55 ms. Work done by then: 55 of 74.68288
  // reference-ms; the remaining 19.68288 stretch by 1410/900:
  //   prefill_end = 55 + 19.68288 * 1410/900 = 85.836512 ms.
  const auto& rec = r.requests[0];
  CHECK(rec.prefill_end_ms == doctest::Approx(85.836512).epsilon(1e-9));
  CHECK(rec.first_token_ms == doctest::Approx(109.571512).epsilon(1e-9));
  CHECK(rec.finish_ms == doctest::Approx(275.716512).epsilon(1e-9));

  // The power ledger splits exactly at the application instant.
  const auto& led = r.prefill_ledgers[0];
  REQUIRE(led.intervals.size() >= 3);
  CHECK(led.intervals[0].t0_ms == 0.0);
  CHECK(led.intervals[0].t1_ms == doctest::Approx(55.0).epsilon(1e-12));
  CHECK(led.intervals[0].power_w == doctest::Approx(2 * p.active_power_w(1410.0)).epsilon(1e-12));
  CHECK(led.intervals[1].t0_ms == doctest::Approx(55.0).epsilon(1e-12));
  CHECK(led.intervals[1].t1_ms == doctest::Approx(85.836512).epsilon(1e-9));
  CHECK(led.intervals[1].power_w == doctest::Approx(2 * p.active_power_w(900.0)).epsilon(1e-12));
  CHECK(p.active_power_w(900.0) == doctest::Approx(297.14).epsilon(1e-12));

  bool saw_switch = false;
  for (const auto& fc : r.freq_timeline)
    if (fc.applied_ms == 55.0 && fc.prefill_pool && fc.worker == 0 && fc.f_mhz == 900.0)
      saw_switch = true;
  CHECK(saw_switch);
  check_ledger_consistency(r);
}

TEST_CASE("scripted switch chains: completion matches the work integral") {
  const GpuProfile p = GpuProfile::default_profile();
  const double t_ref = p.prefill_latency_ms(8192, 1410.0);  // 2333.21728 ms
  std::mt19937 rng(57);
  std::uniform_real_distribution<double> gap(6.0, 40.0);
  std::uniform_int_distribution<int> fidx(33, 80);  // 705..1410 MHz

  for (int it = 0; it < 20; ++it) {
    SimConfig cfg;
    double t = 8.0 + gap(rng);
    std::vector<std::pair<double, double>> applied = {{0.0, 1410.0}};
    for (int k = 0; k < 5; ++k) {
      const double f = p.grid.at(static_cast<std::size_t>(fidx(rng)));
      cfg.scripted_freq.push_back({t, true, 0, f});
      applied.emplace_back(t + cfg.actuation_delay_ms, f);
      t += gap(rng);
    }
    const Trace tr = make_trace({{0, 8192, 2}});
    const RunResult r = run(tr, p, GovernorPolicy::default_nv(), 1, SloConfig{}, cfg);

    // Completion is when the accumulated MHz*ms equals t_ref * f_ref.
    double work = t_ref * 1410.0;
    double clock = 0.0, f_cur = 0.0;
    for (const auto& [ta, fa] : applied) {
      work -= (ta - clock) * f_cur;
      clock = ta;
      f_cur = fa;
    }
    REQUIRE(work > 0.0);  // job must outlive every switch for the oracle to apply
    const double expect_end = clock + work / f_cur;
    CHECK(r.requests[0].prefill_end_ms == doctest::Approx(expect_end).epsilon(1e-6));
    check_ledger_consistency(r);
  }
}

TEST_CASE("default policy and routing-only policy never move clocks") {
  const GpuProfile p = GpuProfile::default_profile();
  const Trace tr = make_trace({{0, 512, 4}, {40, 3000, 4}, {90, 256, 4}, {150, 512, 4}});
  for (const auto policy : {GovernorPolicy::default_nv(), GovernorPolicy::prefill_split()}) {
    const RunResult r = run(tr, p, policy, 1, SloConfig{});
    CHECK(r.freq_timeline.size() == 6);
    for (const auto& fc : r.freq_timeline) {
      CHECK(fc.applied_ms == 0.0);
      CHECK(fc.f_mhz == p.grid.f_max_mhz);
    }
    check_request_invariants(r, p);
  }

  // Routing sends the long prompt to the long-class worker.
  const RunResult split = run(tr, p, GovernorPolicy::prefill_split(), 1, SloConfig{});
  CHECK(split.requests[1].class_queue == 1);
  CHECK(split.requests[1].prefill_worker == 1);
  CHECK(split.requests[0].class_queue == 0);
  CHECK(split.requests[0].prefill_worker == 0);
}

TEST_CASE("governed run: audit-clean decisions, energy below the static baseline") {
  const GpuProfile p = GpuProfile::default_profile();
  LoadShape shape;
  shape.seed = 11;
  const Trace tr = gen_poisson_trace(5.0, 30000, shape, 11);
  const SloConfig slo;

  const RunResult base = run(tr, p, GovernorPolicy::default_nv(), 11, slo);
  const GovernorPolicy green = GovernorPolicy::greenllm();
  const RunResult gov = run(tr, p, green, 11, slo);

  CHECK_FALSE(gov.saturated());
  CHECK(gov.completed_requests() == static_cast<std::int64_t>(tr.requests.size()));
  CHECK(gov.total_j() < base.total_j());

  // Every logged decision respects band containment, rate limits, hysteresis.
  const AuditResult audit = audit_decision_log(gov.decode_decisions, green.decode_ctl);
  CHECK(audit.violations == 0);
  CHECK_FALSE(gov.decode_decisions.empty());

  // Merged decision log is ordered by (tick, worker); the applied-frequency
  // timeline is ordered by time.
  for (std::size_t i = 1; i < gov.decode_decisions.size(); ++i) {
    const auto& a = gov.decode_decisions[i - 1];
    const auto& b = gov.decode_decisions[i];
    CHECK((a.tick_ms < b.tick_ms || (a.tick_ms == b.tick_ms && a.worker <= b.worker)));
  }
  for (std::size_t i = 1; i < gov.freq_timeline.size(); ++i)
    CHECK(gov.freq_timeline[i - 1].applied_ms <= gov.freq_timeline[i].applied_ms);

  // Optimizer commands were recorded and every command is on the grid.
  CHECK_FALSE(gov.prefill_commands.empty());
  for (const auto& c : gov.prefill_commands) CHECK(p.grid.on_grid(c.f_mhz));

  check_ledger_consistency(gov);
  check_request_invariants(gov, p);
}

TEST_CASE("identical inputs produce byte-identical run documents") {
  const GpuProfile p = GpuProfile::default_profile();
  LoadShape shape;
  shape.seed = 3;
  const Trace tr = gen_poisson_trace(4.0, 8000, shape, 3);
  const auto once = run_result_json(run(tr, p, GovernorPolicy::greenllm(), 3, SloConfig{}));
  const auto twice = run_result_json(run(tr, p, GovernorPolicy::greenllm(), 3, SloConfig{}));
  CHECK(once.size() > 1000);
  CHECK(once == twice);
}

TEST_CASE("overload: the queue cap rejects, records, and keeps accounts") {
  const GpuProfile p = GpuProfile::default_profile();
  SimConfig cfg;
  cfg.max_queue = 1;
  const Trace tr = make_trace(
      {{0, 512, 4}, {0, 512, 4}, {0, 512, 4}, {0, 512, 4}, {0, 512, 4}, {0, 512, 4}});
  const RunResult r = run(tr, p, GovernorPolicy::default_nv(), 1, SloConfig{}, cfg);

  // Two workers take the first two, one waits in the capped queue, the rest
  // bounce.
  CHECK(r.overload.rejected_requests == 3);
  CHECK(r.overload.rejected_ids == std::vector<std::int64_t>{3, 4, 5});
  CHECK(r.completed_requests() == 3);
  CHECK(r.saturated());
  for (std::int64_t id : {3, 4, 5}) {
    CHECK(r.requests[static_cast<std::size_t>(id)].rejected);
    CHECK(r.requests[static_cast<std::size_t>(id)].prefill_worker == -1);
  }
  check_request_invariants(r, p);
}

TEST_CASE("frequency sweep: one run per point, consistent with a direct run") {
  const GpuProfile p = GpuProfile::default_profile();
  const Trace tr = make_trace({{0, 512, 6}, {100, 700, 6}, {220, 512, 6}});
  const SloConfig slo;

  const std::vector<double> single = {1410.0};
  const auto pts = fixed_frequency_sweep(tr, p, single, slo);
  REQUIRE(pts.size() == 1);
  const RunResult direct = run(tr, p, GovernorPolicy::fixed(1410.0), 0, slo);
  CHECK(pts[0].total_j == direct.total_j());
  CHECK(pts[0].prefill_j == direct.prefill_pool_j());
  CHECK(pts[0].decode_j == direct.decode_pool_j());
  const PassRates rates = slo_pass_rates(direct, slo);
  CHECK(pts[0].ttft_pass_pct == rates.ttft_pct);
  CHECK(pts[0].tbt_pass_pct == rates.tbt_pct);

  const std::vector<double> three = {210.0, 810.0, 1410.0};
  const auto curve = fixed_frequency_sweep(tr, p, three, slo);
  REQUIRE(curve.size() == 3);
  for (const auto& pt : curve) {
    CHECK(pt.total_j == doctest::Approx(pt.prefill_j + pt.decode_j));
    CHECK(pt.total_j > 0.0);
  }
  CHECK_THROWS_AS(fixed_frequency_sweep(tr, p, std::vector<double>{}, slo), SimError);
}

TEST_CASE("input validation at the run boundary") {
  const GpuProfile p = GpuProfile::default_profile();
  const SloConfig slo;
  CHECK_THROWS_AS(run(Trace{}, p, GovernorPolicy::default_nv(), 0, slo), SimError);

  Trace holes = make_trace({{0, 512, 4}, {10, 512, 4}});
  holes.requests[1].id = 7;  // ids must be dense 0..n-1
  CHECK_THROWS_AS(run(holes, p, GovernorPolicy::default_nv(), 0, slo), SimError);

  const Trace ok = make_trace({{0, 512, 4}});
  CHECK_THROWS_AS(run(ok, p, GovernorPolicy::fixed(1000.0), 0, slo), SimError);  // off-grid

  SimConfig bad;
  bad.scripted_freq.push_back({10.0, true, 5, 900.0});  // no such worker
  CHECK_THROWS_AS(run(ok, p, GovernorPolicy::default_nv(), 0, slo, bad), SimError);
  bad.scripted_freq = {{10.0, false, 0, 901.0}};  // off-grid scripted clock
  CHECK_THROWS_AS(run(ok, p, GovernorPolicy::default_nv(), 0, slo, bad), SimError);
  bad.scripted_freq = {{-1.0, false, 0, 900.0}};
  CHECK_THROWS_AS(run(ok, p, GovernorPolicy::default_nv(), 0, slo, bad), SimError);

  GovernorPolicy margin = GovernorPolicy::greenllm();
  margin.prefill_opt.margin_prefill = 5.0;
  CHECK_THROWS_AS(run(ok, p, margin, 0, slo), SimError);

  SloConfig bad_slo;
  bad_slo.tbt_p95_ms = 0.0;
  CHECK_THROWS_AS(run(ok, p, GovernorPolicy::default_nv(), 0, bad_slo), SimError);

  SimConfig zero_workers;
  zero_workers.n_decode_workers = 0;
  CHECK_THROWS_AS(run(ok, p, GovernorPolicy::default_nv(), 0, slo, zero_workers), SimError);
}

TEST_CASE("csv renderings of timelines") {
  std::vector<FreqChangeRecord> fc = {{0.0, true, 0, 1410.0}, {55.0, false, 2, 705.0}};
  const std::string csv = freq_timeline_csv(fc);
  CHECK(csv ==
        "applied_ms,pool,worker,f_mhz\n"
        "0,prefill,0,1410\n"
        "55,decode,2,705\n");

  std::vector<PrefillCommandRecord> pc = {{100.0, 0, 1, 735.0, 250.5, false}};
  CHECK(prefill_commands_csv(pc) ==
        "tick_ms,class,worker,f_mhz,window_ms,infeasible\n"
        "100,0,1,735,250.5,0\n");
}
