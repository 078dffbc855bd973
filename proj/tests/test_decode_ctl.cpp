#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "greensim/decode_ctl.hpp"

using namespace greensim;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Single bucket covering all of [0, inf): isolates the fine/adapt loops from
// coarse-loop effects.
FreqBandTable one_bucket(double f_opt) {
  FreqBandTable t;
  t.buckets.push_back({0.0, kInf, f_opt, true});
  return t;
}

FreqBandTable two_buckets(double split, double f_lo, double f_hi) {
  FreqBandTable t;
  t.buckets.push_back({0.0, split, f_lo, true});
  t.buckets.push_back({split, kInf, f_hi, true});
  return t;
}

DecodeCtlConfig base_cfg() {
  DecodeCtlConfig cfg;
  cfg.margin_decode = 1.0;  // fine-loop target = tslo itself; easier arithmetic
  cfg.tps_scale = 1.0;
  return cfg;
}

}  // namespace

TEST_CASE("steady state: fixed point, floor, and saturation") {
  const GpuProfile p = GpuProfile::default_profile();

  // Trickle load pins the fluid batch at 1; at f_ref the step time is the
  // bare sum of the four coefficients: 14.5 + 0.1 + 9 + 0.135 = 23.735 ms.
  const auto idle = decode_steady_state(p, 1.0, 1410.0, 64);
  CHECK(idle.sustainable);
  CHECK(idle.batch == doctest::Approx(1.0));
  CHECK(idle.tbt_ms == doctest::Approx(23.735).epsilon(1e-12));

  // Interior solutions satisfy B = tau * step(B) / 1000 exactly.
  for (double tau : {200.0, 800.0, 1400.0}) {
    for (double f : {705.0, 1005.0, 1410.0}) {
      const auto ss = decode_steady_state(p, tau, f, 64);
      if (!ss.sustainable || ss.batch <= 1.0 || ss.batch >= 64.0) continue;
      CHECK(tau * ss.tbt_ms / 1000.0 == doctest::Approx(ss.batch).epsilon(1e-12));
      CHECK(ss.tbt_ms == doctest::Approx(decode_step_raw_ms(p.decode, ss.batch, f)));
    }
  }

  // Demand above the batch-cap throughput is unsustainable and reports the
  // cap's step time.
  const double cap = 1000.0 * 64 / decode_step_raw_ms(p.decode, 64, 1410.0);
  const auto sat = decode_steady_state(p, cap * 1.05, 1410.0, 64);
  CHECK_FALSE(sat.sustainable);
  CHECK(sat.batch == 64.0);
  CHECK(sat.tbt_ms == doctest::Approx(decode_step_raw_ms(p.decode, 64, 1410.0)));

  // TBT grows with load and shrinks with clock.
  const auto lo = decode_steady_state(p, 400.0, 1005.0, 64);
  const auto hi = decode_steady_state(p, 900.0, 1005.0, 64);
  CHECK(hi.tbt_ms > lo.tbt_ms);
  const auto fast = decode_steady_state(p, 900.0, 1410.0, 64);
  CHECK(fast.tbt_ms < hi.tbt_ms);
}

TEST_CASE("band table: default profile frozen values") {
  const GpuProfile p = GpuProfile::default_profile();
  std::vector<double> levels;
  for (double l = 200.0; l <= 3000.0; l += 200.0) levels.push_back(l);
  const auto table = build_band_table(p, levels, 95.0, 4, 64);

  // Hand-solved per level: lowest clock whose fluid TBT at tau/4 per worker
  // stays within 95 ms (power is increasing in f, so lowest feasible = least
  // energy per token).
  const std::vector<double> expected = {210, 210, 210, 210, 225, 240, 255, 270,
                                        285, 300, 315, 315, 330, 360, 390};
  REQUIRE(table.buckets.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(table.buckets[i].f_opt_mhz == expected[i]);
    CHECK(table.buckets[i].feasible);
  }
  // Anchors never decrease with load.
  for (std::size_t i = 1; i < table.buckets.size(); ++i)
    CHECK(table.buckets[i].f_opt_mhz >= table.buckets[i - 1].f_opt_mhz);

  // Boundaries sit midway between levels; an exact boundary TPS belongs to
  // the lower bucket.
  CHECK(table.buckets[0].tps_lo == 0.0);
  CHECK(table.buckets[0].tps_hi == 300.0);
  CHECK(table.buckets[1].tps_lo == 300.0);
  CHECK(table.bucket_index(300.0) == 0);
  CHECK(table.bucket_index(300.0 + 1e-9) == 1);
  CHECK(table.bucket_index(0.0) == 0);
  CHECK(table.bucket_index(1e12) == static_cast<int>(table.buckets.size()) - 1);
}

TEST_CASE("band table: degenerate profiles and validation") {
  GpuProfile p = GpuProfile::default_profile();
  const std::vector<double> levels = {200.0, 600.0, 1200.0};

  // No frequency-dependent term: if a level is sustainable at all it is
  // sustainable at f_min, which then wins on energy per token.
  GpuProfile flat = p;
  flat.decode = DecodeStepModel{14.5, 0.1, 0.0, 0.0, 1410.0};
  const auto ft = build_band_table(flat, levels, 95.0, 4, 64);
  for (const auto& b : ft.buckets) {
    CHECK(b.feasible);
    CHECK(b.f_opt_mhz == flat.grid.f_min_mhz);
  }

  // Fixed cost above the target: nothing is feasible; every bucket pins to
  // f_max and carries the flag.
  GpuProfile slow = p;
  slow.decode = DecodeStepModel{120.0, 0.1, 9.0, 0.135, 1410.0};
  const auto st = build_band_table(slow, levels, 95.0, 4, 64);
  for (const auto& b : st.buckets) {
    CHECK_FALSE(b.feasible);
    CHECK(b.f_opt_mhz == slow.grid.f_max_mhz);
  }

  CHECK_THROWS_AS(build_band_table(p, std::vector<double>{}, 95.0, 4, 64), ModelError);
  CHECK_THROWS_AS(build_band_table(p, std::vector<double>{200.0, 200.0}, 95.0, 4, 64), ModelError);
  CHECK_THROWS_AS(build_band_table(p, std::vector<double>{400.0, 200.0}, 95.0, 4, 64), ModelError);
  CHECK_THROWS_AS(build_band_table(p, levels, 95.0, 0, 64), ModelError);

  FreqBandTable broken;
  broken.buckets.push_back({0.0, 100.0, 300.0, true});
  broken.buckets.push_back({150.0, kInf, 600.0, true});  // gap between buckets
  CHECK_THROWS_AS(broken.validate(), ModelError);
  FreqBandTable finite = one_bucket(300.0);
  finite.buckets[0].tps_hi = 500.0;  // must extend to +inf
  CHECK_THROWS_AS(finite.validate(), ModelError);
  CHECK_THROWS_AS(FreqBandTable{}.validate(), ModelError);

  // Bands clamp to the grid at both edges.
  const FrequencyGrid grid;
  const auto bottom = one_bucket(210.0).band(0, grid, 15.0);
  CHECK(bottom.first == 210.0);
  CHECK(bottom.second == 225.0);
  const auto top = one_bucket(1410.0).band(0, grid, 15.0);
  CHECK(top.first == 1395.0);
  CHECK(top.second == 1410.0);
}

TEST_CASE("sliding windows: token rate and p95 ring") {
  TpsWindow w(200.0);
  CHECK(w.tps(0.0) == 0.0);
  w.record(0.0, 10);
  w.record(100.0, 20);
  w.record(250.0, 30);
  // Window (100, 300]: the event at t=0 ages out, t=100 is exactly on the
  // trailing edge and stays.
  CHECK(w.tps(300.0) == doctest::Approx(50 * 1000.0 / 200.0));
  CHECK(w.tps(600.0) == 0.0);

  TbtWindow tbt(4);
  tbt.record(1.0);
  CHECK(tbt.p95() == 1.0);
  for (double v : {2.0, 3.0, 4.0, 5.0, 6.0}) tbt.record(v);
  // Capacity 4 keeps {3,4,5,6}; nearest-rank P95 of 4 samples is the max.
  CHECK(tbt.p95() == 6.0);
  CHECK_FALSE(tbt.empty());
}

TEST_CASE("fine loop: margin thresholds, band containment, bound marking") {
  auto cfg = base_cfg();  // target = 100 ms
  DecodeController ctl(cfg, one_bucket(705.0), FrequencyGrid{}, 0);
  CHECK(ctl.command() == 705.0);

  CHECK(ctl.on_fine_tick(20.0, std::nullopt) == 705.0);   // no data: hold
  CHECK(ctl.on_fine_tick(40.0, 120.0) == 720.0);          // margin 1.2 -> up
  CHECK(ctl.on_fine_tick(60.0, 120.0) == 720.0);          // pinned at band edge
  CHECK(ctl.on_fine_tick(80.0, 80.0) == 720.0);           // margin 0.8: dead zone
  CHECK(ctl.on_fine_tick(100.0, 50.0) == 705.0);          // margin 0.5 -> down
  CHECK(ctl.on_fine_tick(120.0, 50.0) == 690.0);
  CHECK(ctl.on_fine_tick(140.0, 50.0) == 690.0);          // pinned at band floor

  const auto& log = ctl.log();
  REQUIRE(log.size() == 7);
  const std::vector<std::string> want = {"hold", "up", "up", "hold", "down", "down", "down"};
  for (std::size_t i = 0; i < want.size(); ++i) {
    CHECK(log[i].action == want[i]);
    CHECK(log[i].command_mhz >= log[i].band_lo);
    CHECK(log[i].command_mhz <= log[i].band_hi);
  }
  CHECK(log[1].p95_tbt_ms == 120.0);
  CHECK(log[0].p95_tbt_ms == 0.0);  // no observation yet
}

TEST_CASE("fine loop: consecutive commands respect the rate limit") {
  auto cfg = base_cfg();
  DecodeController ctl(cfg, one_bucket(1005.0), FrequencyGrid{}, 2);
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> p95d(20.0, 180.0);
  double prev = ctl.command();
  for (int i = 0; i < 400; ++i) {
    const double cmd = ctl.on_fine_tick(20.0 * i, p95d(rng));
    CHECK(std::abs(cmd - prev) <= cfg.max_step_mhz + 1e-12);
    CHECK(cmd >= 990.0);
    CHECK(cmd <= 1020.0);
    prev = cmd;
  }
}

TEST_CASE("fine loop: pointwise-higher p95 never commands a lower clock") {
  auto cfg = base_cfg();
  DecodeController low(cfg, one_bucket(705.0), FrequencyGrid{}, 0);
  DecodeController high(cfg, one_bucket(705.0), FrequencyGrid{}, 0);
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> p95d(10.0, 150.0);
  for (int i = 0; i < 300; ++i) {
    const double p95 = p95d(rng);
    const double c_low = low.on_fine_tick(20.0 * i, p95);
    const double c_high = high.on_fine_tick(20.0 * i, p95 + 40.0);
    CHECK(c_high >= c_low);
  }
}

TEST_CASE("coarse loop: hysteresis requires three consecutive observations") {
  auto cfg = base_cfg();
  DecodeController ctl(cfg, two_buckets(500.0, 300.0, 600.0), FrequencyGrid{}, 0);
  // Starts in the top bucket.
  CHECK(ctl.current_bucket() == 1);
  CHECK(ctl.command() == 600.0);

  ctl.on_coarse_tick(200.0, 100.0);  // low-bucket observation #1
  ctl.on_coarse_tick(400.0, 100.0);  // #2
  ctl.on_coarse_tick(600.0, 560.0);  // back in the current bucket: streak resets
  CHECK(ctl.current_bucket() == 1);
  ctl.on_coarse_tick(800.0, 100.0);
  ctl.on_coarse_tick(1000.0, 100.0);
  CHECK(ctl.current_bucket() == 1);  // still pending after two
  ctl.on_coarse_tick(1200.0, 100.0);
  CHECK(ctl.current_bucket() == 0);  // third in a row commits
  // Set point clamps into the new band around 300.
  CHECK(ctl.command() == 315.0);

  std::vector<std::string> actions;
  for (const auto& r : ctl.log()) actions.push_back(r.action);
  const std::vector<std::string> want = {"coarse_pending", "coarse_pending", "coarse_hold",
                                         "coarse_pending", "coarse_pending", "coarse_commit"};
  CHECK(actions == want);

  // A fresh streak toward a different bucket restarts the count.
  DecodeController ctl2(cfg, two_buckets(500.0, 300.0, 600.0), FrequencyGrid{}, 0);
  ctl2.on_coarse_tick(200.0, 100.0);
  ctl2.on_coarse_tick(400.0, 100.0);
  ctl2.on_coarse_tick(600.0, 100.0);
  CHECK(ctl2.current_bucket() == 0);
  CHECK(ctl2.log().back().action == "coarse_commit");
}

TEST_CASE("coarse loop: observed TPS is scaled to pool-aggregate units") {
  auto cfg = base_cfg();
  cfg.tps_scale = 4.0;
  DecodeController ctl(cfg, two_buckets(500.0, 300.0, 600.0), FrequencyGrid{}, 0);
  // Worker TPS 100 scales to 400: still the lower bucket.
  for (int i = 0; i < 3; ++i) ctl.on_coarse_tick(200.0 * (i + 1), 100.0);
  CHECK(ctl.current_bucket() == 0);
  CHECK(ctl.log().back().tps == 400.0);
}

TEST_CASE("adaptation: sustained pegging shifts the anchor by one step") {
  auto cfg = base_cfg();
  DecodeController ctl(cfg, one_bucket(705.0), FrequencyGrid{}, 0);

  // Walk the set point onto the band ceiling, then start a clean window.
  ctl.on_fine_tick(0.0, 150.0);  // 705 -> 720, lands exactly on the bound
  ctl.on_adapt_tick(1.0);        // resets the window; single unclamped up, no shift
  CHECK(ctl.table().buckets[0].f_opt_mhz == 705.0);

  // Nine clamped ups and one hold: 90% of the window pegged high.
  for (int i = 0; i < 9; ++i) ctl.on_fine_tick(20.0 * i + 20.0, 150.0);
  ctl.on_fine_tick(220.0, std::nullopt);
  ctl.on_adapt_tick(240.0);
  CHECK(ctl.table().buckets[0].f_opt_mhz == 720.0);
  CHECK(ctl.log().back().action == "adapt_up");
  CHECK(ctl.log().back().band_lo == 705.0);
  CHECK(ctl.log().back().band_hi == 735.0);
  CHECK(ctl.command() == 720.0);  // still inside the shifted band

  // Mirror case: pegging the floor drags the anchor down.
  DecodeController dn(cfg, one_bucket(705.0), FrequencyGrid{}, 0);
  dn.on_fine_tick(0.0, 10.0);  // 705 -> 690 on the bound
  dn.on_adapt_tick(1.0);
  for (int i = 0; i < 10; ++i) dn.on_fine_tick(20.0 * i + 20.0, 10.0);
  dn.on_adapt_tick(240.0);
  CHECK(dn.table().buckets[0].f_opt_mhz == 690.0);
  CHECK(dn.log().back().action == "adapt_down");
}

TEST_CASE("adaptation: mixed or idle windows leave the table alone") {
  auto cfg = base_cfg();

  // Seven ups (mostly clamped) against three downs: no direction dominates.
  DecodeController mixed(cfg, one_bucket(705.0), FrequencyGrid{}, 0);
  for (int i = 0; i < 7; ++i) mixed.on_fine_tick(20.0 * i, 150.0);
  for (int i = 7; i < 10; ++i) mixed.on_fine_tick(20.0 * i, 10.0);
  mixed.on_adapt_tick(200.0);
  CHECK(mixed.table().buckets[0].f_opt_mhz == 705.0);
  for (const auto& r : mixed.log()) CHECK(r.action.rfind("adapt_", 0) != 0);

  // All holds: the controller was comfortable; nothing to adapt.
  DecodeController calm(cfg, one_bucket(705.0), FrequencyGrid{}, 0);
  for (int i = 0; i < 10; ++i) calm.on_fine_tick(20.0 * i, std::nullopt);
  calm.on_adapt_tick(200.0);
  CHECK(calm.table().buckets[0].f_opt_mhz == 705.0);
  for (const auto& r : calm.log()) CHECK(r.action == "hold");

  // An empty window (no fine ticks since the last adaptation) never fires.
  DecodeController idle(cfg, one_bucket(705.0), FrequencyGrid{}, 0);
  idle.on_adapt_tick(200.0);
  CHECK(idle.log().empty());
}

TEST_CASE("adaptation: coarse commit voids the previous band's evidence") {
  auto cfg = base_cfg();
  DecodeController ctl(cfg, two_buckets(500.0, 300.0, 600.0), FrequencyGrid{}, 0);
  // Peg the top band hard...
  for (int i = 0; i < 12; ++i) ctl.on_fine_tick(20.0 * i, 150.0);
  // ...then commit into the lower bucket before the adaptation tick.
  for (int i = 0; i < 3; ++i) ctl.on_coarse_tick(240.0 + 200.0 * i, 100.0);
  CHECK(ctl.current_bucket() == 0);
  ctl.on_adapt_tick(700.0);
  // Stale clamps from the old band must not shift the new one.
  CHECK(ctl.table().buckets[0].f_opt_mhz == 300.0);
  CHECK(ctl.table().buckets[1].f_opt_mhz == 600.0);
  for (const auto& r : ctl.log()) CHECK(r.action.rfind("adapt_", 0) != 0);
}

TEST_CASE("adaptation: anchor shifts clamp to the grid") {
  auto cfg = base_cfg();
  DecodeController ctl(cfg, one_bucket(1410.0), FrequencyGrid{}, 0);
  for (int i = 0; i < 10; ++i) ctl.on_fine_tick(20.0 * i, 200.0);  // all clamped at f_max
  ctl.on_adapt_tick(200.0);
  CHECK(ctl.table().buckets[0].f_opt_mhz == 1410.0);  // cannot move past the grid
  CHECK(ctl.command() == 1410.0);
}

TEST_CASE("controller: identical inputs give identical decision streams") {
  auto cfg = base_cfg();
  auto run = [&] {
    DecodeController ctl(cfg, two_buckets(500.0, 300.0, 600.0), FrequencyGrid{}, 1);
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> p95d(20.0, 160.0), tpsd(50.0, 900.0);
    for (int i = 0; i < 200; ++i) {
      ctl.on_fine_tick(20.0 * i, p95d(rng));
      if (i % 10 == 9) ctl.on_coarse_tick(20.0 * i + 1.0, tpsd(rng));
      if (i % 100 == 99) ctl.on_adapt_tick(20.0 * i + 2.0);
    }
    return decision_log_csv(ctl.log());
  };
  CHECK(run() == run());
}

TEST_CASE("decision log csv shape") {
  auto cfg = base_cfg();
  DecodeController ctl(cfg, one_bucket(705.0), FrequencyGrid{}, 3);
  ctl.on_fine_tick(20.0, 120.0);
  const std::string csv = decision_log_csv(ctl.log());
  CHECK(csv.rfind("tick_ms,worker,tps,p95_tbt_ms,bucket,band_lo,band_hi,command_mhz,action\n",
                  0) == 0);
  CHECK(csv.find("20,3,0,120,0,690,720,720,up\n") != std::string::npos);
}

TEST_CASE("audit: clean logs pass, tampered logs are caught") {
  auto cfg = base_cfg();
  DecodeController ctl(cfg, two_buckets(500.0, 300.0, 600.0), FrequencyGrid{}, 0);
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> p95d(20.0, 160.0);
  for (int i = 0; i < 100; ++i) {
    ctl.on_fine_tick(20.0 * i, p95d(rng));
    if (i % 10 == 9) ctl.on_coarse_tick(20.0 * i + 1.0, i < 50 ? 560.0 : 80.0);
    if (i % 60 == 59) ctl.on_adapt_tick(20.0 * i + 2.0);
  }
  const auto clean = audit_decision_log(ctl.log(), cfg);
  CHECK(clean.violations == 0);

  // Command forced outside the band.
  auto outside = ctl.log();
  outside[5].command_mhz = outside[5].band_hi + 120.0;
  CHECK(audit_decision_log(outside, cfg).violations >= 1);

  // Fine-tick jump beyond the rate limit inside an unchanged band.
  auto jump = ctl.log();
  for (auto& r : jump) {
    if (r.action == "up") {
      r.command_mhz = r.band_hi;
      break;
    }
  }
  // Make the previous fine command far away while keeping both inside band.
  bool tampered = false;
  for (std::size_t i = 1; i < jump.size() && !tampered; ++i) {
    const bool fine = jump[i].action == "up" || jump[i].action == "down" || jump[i].action == "hold";
    const bool prev_fine =
        jump[i - 1].action == "up" || jump[i - 1].action == "down" || jump[i - 1].action == "hold";
    if (fine && prev_fine && jump[i].band_lo == jump[i - 1].band_lo) {
      jump[i - 1].command_mhz = jump[i].band_lo;
      jump[i].command_mhz = jump[i].band_lo + cfg.max_step_mhz + 15.0;
      jump[i].band_hi = jump[i].command_mhz + 1.0;  // keep containment satisfied
      jump[i - 1].band_hi = jump[i].band_hi;
      tampered = true;
    }
  }
  REQUIRE(tampered);
  CHECK(audit_decision_log(jump, cfg).violations >= 1);

  // Band commit without the full hysteresis streak.
  std::vector<DecisionRecord> forged;
  forged.push_back({200.0, 0, 560.0, 0.0, 1, 585.0, 615.0, 600.0, "coarse_hold"});
  forged.push_back({400.0, 0, 80.0, 0.0, 0, 285.0, 315.0, 315.0, "coarse_commit"});
  CHECK(audit_decision_log(forged, cfg).violations >= 1);

  // Unknown action string.
  std::vector<DecisionRecord> junk;
  junk.push_back({0.0, 0, 0.0, 0.0, 0, 690.0, 720.0, 705.0, "emergency"});
  CHECK(audit_decision_log(junk, cfg).violations == 1);
}

TEST_CASE("audit: interleaved per-worker logs are grouped before checking") {
  auto cfg = base_cfg();
  DecodeController a(cfg, two_buckets(500.0, 300.0, 600.0), FrequencyGrid{}, 0);
  DecodeController b(cfg, two_buckets(500.0, 300.0, 600.0), FrequencyGrid{}, 1);
  // Drive the two workers to different operating points so a naive merged
  // audit would see impossible cross-worker jumps.
  for (int i = 0; i < 60; ++i) {
    a.on_fine_tick(20.0 * i, 150.0);
    b.on_fine_tick(20.0 * i, 10.0);
    if (i % 10 == 9) {
      a.on_coarse_tick(20.0 * i + 1.0, 560.0);
      b.on_coarse_tick(20.0 * i + 1.0, 80.0);
    }
  }
  std::vector<DecisionRecord> merged;
  const auto& la = a.log();
  const auto& lb = b.log();
  for (std::size_t i = 0; i < la.size(); ++i) {
    merged.push_back(la[i]);
    merged.push_back(lb[i]);
  }
  const auto res = audit_decision_log(merged, cfg);
  CHECK(res.violations == 0);
}

TEST_CASE("config validation rejects nonsense") {
  DecodeCtlConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto bad = cfg; bad.tslo_ms = 0.0;
  CHECK_THROWS_AS(bad.validate(), ModelError);
  bad = cfg; bad.margin_decode = 0.1;
  CHECK_THROWS_AS(bad.validate(), ModelError);
  bad = cfg; bad.margin_decode = 2.5;
  CHECK_THROWS_AS(bad.validate(), ModelError);
  bad = cfg; bad.max_step_mhz = bad.step_mhz - 1.0;
  CHECK_THROWS_AS(bad.validate(), ModelError);
  bad = cfg; bad.hysteresis_count = 0;
  CHECK_THROWS_AS(bad.validate(), ModelError);
  bad = cfg; bad.bias_threshold = 1.0;
  CHECK_THROWS_AS(bad.validate(), ModelError);
  bad = cfg; bad.lower_margin = bad.upper_margin;
  CHECK_THROWS_AS(bad.validate(), ModelError);
  bad = cfg; bad.tps_scale = 0.0;
  CHECK_THROWS_AS(bad.validate(), ModelError);
}
