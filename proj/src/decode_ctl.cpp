#include "greensim/decode_ctl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "greensim/metrics.hpp"

namespace greensim {

void DecodeCtlConfig::validate() const {
  if (tslo_ms <= 0) throw ModelError("decode ctl: tslo must be > 0");
  if (margin_decode < 0.2 || margin_decode > 2.0)
    throw ModelError("decode ctl: margin outside [0.2, 2.0]");
  if (fine_period_ms <= 0 || coarse_period_ms <= 0 || adapt_period_s <= 0)
    throw ModelError("decode ctl: periods must be > 0");
  if (step_mhz <= 0 || max_step_mhz < step_mhz)
    throw ModelError("decode ctl: need max_step >= step > 0");
  if (hysteresis_count < 1) throw ModelError("decode ctl: hysteresis_count must be >= 1");
  if (bias_threshold <= 0 || bias_threshold >= 1)
    throw ModelError("decode ctl: bias_threshold must be in (0,1)");
  if (tbt_window_tokens < 1) throw ModelError("decode ctl: tbt window must hold >= 1 sample");
  if (tps_scale <= 0) throw ModelError("decode ctl: tps_scale must be > 0");
  if (lower_margin >= upper_margin) throw ModelError("decode ctl: need lower < upper margin");
}

DecodeSteadyState decode_steady_state(const GpuProfile& profile, double per_worker_tps, double f,
                                      int max_batch) {
  DecodeSteadyState out;
  const auto& d = profile.decode;
  const double fr = d.f_ref_mhz / f;
  const double s0 = d.alpha0_ms + d.beta0_ms * fr;  // per-step fixed cost
  const double s1 = d.alpha1_ms + d.beta1_ms * fr;  // per-stream marginal cost
  // Throughput at the batch cap is the worker's capacity.
  const double cap_tps = 1000.0 * max_batch / (s0 + s1 * max_batch);
  if (per_worker_tps > cap_tps) {
    out.sustainable = false;
    out.batch = max_batch;
    out.tbt_ms = s0 + s1 * max_batch;
    return out;
  }
  out.sustainable = true;
  const double denom = 1000.0 - per_worker_tps * s1;
  double batch = denom > 0 ? per_worker_tps * s0 / denom : static_cast<double>(max_batch);
  batch = std::clamp(batch, 1.0, static_cast<double>(max_batch));
  out.batch = batch;
  out.tbt_ms = s0 + s1 * batch;
  return out;
}

int FreqBandTable::bucket_index(double tps) const {
  for (std::size_t i = 0; i < buckets.size(); ++i)
    if (tps <= buckets[i].tps_hi) return static_cast<int>(i);
  return static_cast<int>(buckets.size()) - 1;
}

std::pair<double, double> FreqBandTable::band(int bucket, const FrequencyGrid& grid,
                                              double step_mhz) const {
  const double f = buckets[static_cast<std::size_t>(bucket)].f_opt_mhz;
  return {std::max(grid.f_min_mhz, f - step_mhz), std::min(grid.f_max_mhz, f + step_mhz)};
}

void FreqBandTable::validate() const {
  if (buckets.empty()) throw ModelError("band table: empty");
  if (buckets.front().tps_lo != 0.0) throw ModelError("band table: must start at 0 TPS");
  for (std::size_t i = 0; i + 1 < buckets.size(); ++i) {
    if (buckets[i].tps_hi != buckets[i + 1].tps_lo)
      throw ModelError("band table: buckets must tile contiguously");
    if (buckets[i].tps_lo >= buckets[i].tps_hi) throw ModelError("band table: empty bucket");
  }
  if (buckets.back().tps_hi != std::numeric_limits<double>::infinity())
    throw ModelError("band table: last bucket must extend to +inf");
}

FreqBandTable build_band_table(const GpuProfile& profile, std::span<const double> tps_levels,
                               double t_slo_ms, int decode_workers, int max_batch) {
  if (tps_levels.empty()) throw ModelError("band table: need at least one TPS level");
  for (std::size_t i = 0; i + 1 < tps_levels.size(); ++i)
    if (tps_levels[i] >= tps_levels[i + 1])
      throw ModelError("band table: levels must be ascending");
  if (decode_workers < 1 || max_batch < 1) throw ModelError("band table: bad pool shape");

  FreqBandTable table;
  for (std::size_t i = 0; i < tps_levels.size(); ++i) {
    BandBucket b;
    b.tps_lo = i == 0 ? 0.0 : 0.5 * (tps_levels[i - 1] + tps_levels[i]);
    b.tps_hi = i + 1 < tps_levels.size() ? 0.5 * (tps_levels[i] + tps_levels[i + 1])
                                         : std::numeric_limits<double>::infinity();
    const double tau_w = tps_levels[i] / decode_workers;

    double best_f = 0.0, best_energy = 0.0;
    bool found = false;
    for (std::size_t k = 0; k < profile.grid.size(); ++k) {
      const double f = profile.grid.at(k);
      const auto ss = decode_steady_state(profile, tau_w, f, max_batch);
      if (!ss.sustainable || ss.tbt_ms > t_slo_ms) continue;
      const double energy_per_token = profile.active_power_w(f) / tps_levels[i];
      if (!found || energy_per_token < best_energy) {
        best_f = f;
        best_energy = energy_per_token;
        found = true;
      }
    }
    b.feasible = found;
    b.f_opt_mhz = found ? best_f : profile.grid.f_max_mhz;
    table.buckets.push_back(b);
  }
  table.validate();
  return table;
}

double TpsWindow::tps(double now_ms) {
  while (!events_.empty() && events_.front().first < now_ms - window_ms_) events_.pop_front();
  int tokens = 0;
  for (const auto& [t, n] : events_) tokens += n;
  return tokens * 1000.0 / window_ms_;
}

void TbtWindow::record(double interval_ms) {
  samples_.push_back(interval_ms);
  while (static_cast<int>(samples_.size()) > capacity_) samples_.pop_front();
}

double TbtWindow::p95() const {
  std::vector<double> copy(samples_.begin(), samples_.end());
  return quantile(copy, 0.95);
}

DecodeController::DecodeController(const DecodeCtlConfig& cfg, FreqBandTable table,
                                   const FrequencyGrid& grid, int worker_id)
    : cfg_(cfg), table_(std::move(table)), grid_(grid), worker_id_(worker_id) {
  cfg_.validate();
  table_.validate();
  // Start in the top bucket: safe (fast) until the first committed observation
  // walks the band down to the actual operating point.
  current_bucket_ = static_cast<int>(table_.buckets.size()) - 1;
  load_band(current_bucket_);
  set_point_ = table_.buckets[static_cast<std::size_t>(current_bucket_)].f_opt_mhz;
}

void DecodeController::load_band(int bucket) {
  const auto [lo, hi] = table_.band(bucket, grid_, cfg_.step_mhz);
  band_lo_ = lo;
  band_hi_ = hi;
}

double DecodeController::on_fine_tick(double now_ms, std::optional<double> p95_tbt_ms) {
  int dir = 0;
  if (p95_tbt_ms) {
    last_p95_ = *p95_tbt_ms;
    const double margin = *p95_tbt_ms / (cfg_.margin_decode * cfg_.tslo_ms);
    if (margin > cfg_.upper_margin)
      dir = +1;
    else if (margin < cfg_.lower_margin)
      dir = -1;
  }
  const double delta = std::min(cfg_.step_mhz, cfg_.max_step_mhz);
  const double raw = set_point_ + dir * delta;
  const double clamped = std::clamp(raw, band_lo_, band_hi_);
  const bool hit_bound = dir != 0 && clamped != raw;
  set_point_ = clamped;
  adjustments_.push_back({dir, hit_bound});
  log_.push_back({now_ms, worker_id_, last_tps_, last_p95_, current_bucket_, band_lo_, band_hi_,
                  set_point_, dir > 0 ? "up" : dir < 0 ? "down" : "hold"});
  return set_point_;
}

void DecodeController::on_coarse_tick(double now_ms, double worker_tps) {
  last_tps_ = worker_tps * cfg_.tps_scale;
  const int observed = table_.bucket_index(last_tps_);
  const char* action;
  if (observed == current_bucket_) {
    pending_bucket_ = -1;
    consecutive_ = 0;
    action = "coarse_hold";
  } else {
    if (observed == pending_bucket_) {
      ++consecutive_;
    } else {
      pending_bucket_ = observed;
      consecutive_ = 1;
    }
    if (consecutive_ >= cfg_.hysteresis_count) {
      current_bucket_ = observed;
      load_band(current_bucket_);
      set_point_ = std::clamp(set_point_, band_lo_, band_hi_);
      pending_bucket_ = -1;
      consecutive_ = 0;
      adjustments_.clear();  // a new band epoch; stale clamp evidence is void
      action = "coarse_commit";
    } else {
      action = "coarse_pending";
    }
  }
  log_.push_back({now_ms, worker_id_, last_tps_, last_p95_, observed, band_lo_, band_hi_,
                  set_point_, action});
}

void DecodeController::on_adapt_tick(double now_ms) {
  // The denominator is every fine tick in the window, holds included. A hold
  // means the set point was comfortable where it sat, which is evidence the
  // band is fine; only sustained pegging at one edge should move the anchor.
  const int total = static_cast<int>(adjustments_.size());
  int up_clamped = 0, down_clamped = 0;
  for (const auto& a : adjustments_) {
    if (!a.hit_bound) continue;
    if (a.dir > 0) ++up_clamped;
    if (a.dir < 0) ++down_clamped;
  }
  adjustments_.clear();
  if (total == 0) return;

  int shift = 0;
  if (up_clamped > cfg_.bias_threshold * total)
    shift = +1;
  else if (down_clamped > cfg_.bias_threshold * total)
    shift = -1;
  if (shift == 0) return;

  auto& bucket = table_.buckets[static_cast<std::size_t>(current_bucket_)];
  bucket.f_opt_mhz =
      std::clamp(bucket.f_opt_mhz + shift * cfg_.step_mhz, grid_.f_min_mhz, grid_.f_max_mhz);
  load_band(current_bucket_);
  set_point_ = std::clamp(set_point_, band_lo_, band_hi_);
  log_.push_back({now_ms, worker_id_, last_tps_, last_p95_, current_bucket_, band_lo_, band_hi_,
                  set_point_, shift > 0 ? "adapt_up" : "adapt_down"});
}

namespace {
std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}
}  // namespace

std::string decision_log_csv(std::span<const DecisionRecord> records) {
  std::ostringstream out;
  out << "tick_ms,worker,tps,p95_tbt_ms,bucket,band_lo,band_hi,command_mhz,action\n";
  for (const auto& r : records) {
    out << fmt_num(r.tick_ms) << ',' << r.worker << ',' << fmt_num(r.tps) << ','
        << fmt_num(r.p95_tbt_ms) << ',' << r.bucket << ',' << fmt_num(r.band_lo) << ','
        << fmt_num(r.band_hi) << ',' << fmt_num(r.command_mhz) << ',' << r.action << "\n";
  }
  return out.str();
}

AuditResult audit_decision_log(std::span<const DecisionRecord> records,
                               const DecodeCtlConfig& cfg) {
  AuditResult res;
  auto flag = [&](int worker, double t, const std::string& msg) {
    ++res.violations;
    if (res.messages.size() < 32)
      res.messages.push_back("worker " + std::to_string(worker) + " t=" + std::to_string(t) +
                             ": " + msg);
  };

  // Logs may be merged across workers; every check is per-worker.
  std::vector<int> workers;
  for (const auto& r : records)
    if (std::find(workers.begin(), workers.end(), r.worker) == workers.end())
      workers.push_back(r.worker);
  std::sort(workers.begin(), workers.end());

  for (int w : workers) {
    const DecisionRecord* prev_fine = nullptr;
    int pending_streak = 0;
    int streak_bucket = -1;
    for (const auto& r : records) {
      if (r.worker != w) continue;
      const bool is_fine = r.action == "up" || r.action == "down" || r.action == "hold";
      const bool is_coarse = r.action.rfind("coarse_", 0) == 0;
      const bool is_adapt = r.action.rfind("adapt_", 0) == 0;
      if (!is_fine && !is_coarse && !is_adapt) {
        flag(w, r.tick_ms, "unknown action " + r.action);
        continue;
      }
      // Containment: every command within its active band.
      if (r.command_mhz < r.band_lo - 1e-9 || r.command_mhz > r.band_hi + 1e-9)
        flag(w, r.tick_ms, "command outside band");

      if (is_coarse) {
        if (r.action == "coarse_hold") {
          pending_streak = 0;
          streak_bucket = -1;
        } else if (r.action == "coarse_pending") {
          pending_streak = (r.bucket == streak_bucket) ? pending_streak + 1 : 1;
          streak_bucket = r.bucket;
        } else {  // coarse_commit: this observation is the streak's last element
          const int streak = (r.bucket == streak_bucket) ? pending_streak + 1 : 1;
          if (streak < cfg.hysteresis_count)
            flag(w, r.tick_ms, "band commit without full hysteresis streak");
          pending_streak = 0;
          streak_bucket = -1;
        }
      }
      if (is_fine) {
        if (prev_fine && prev_fine->band_lo == r.band_lo && prev_fine->band_hi == r.band_hi) {
          if (std::abs(r.command_mhz - prev_fine->command_mhz) > cfg.max_step_mhz + 1e-9)
            flag(w, r.tick_ms, "fine-tick step exceeds rate limit");
        }
        prev_fine = &r;
      }
      if (is_adapt) {
        // An adaptation may move the band by at most one step.
        if (prev_fine && std::abs(r.band_lo - prev_fine->band_lo) > cfg.step_mhz + 1e-9)
          flag(w, r.tick_ms, "adaptation moved band by more than one step");
      }
    }
  }
  return res;
}

}  // namespace greensim
