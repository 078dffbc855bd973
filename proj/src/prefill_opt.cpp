#include "greensim/prefill_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace greensim {

double PrefillBatch::t_ref_total_ms(const LatencyModel& m) const {
  double total = 0.0;
  for (const auto& j : jobs)
    total += j.work_fraction * ((m.a * j.prompt_tokens + m.b) * j.prompt_tokens + m.c);
  return total;
}

double busy_time_ms(const PrefillBatch& batch, double f, const GpuProfile& profile) {
  if (batch.jobs.empty()) throw ModelError("busy_time: empty batch");
  if (!profile.grid.on_grid(f)) throw ModelError("busy_time: frequency off grid");
  return batch.t_ref_total_ms(profile.prefill) * profile.grid.f_ref_mhz / f;
}

EnergyBreakdown energy_total(const PrefillBatch& batch, double f, double window_ms,
                             const GpuProfile& profile) {
  const double busy = busy_time_ms(batch, f, profile);
  EnergyBreakdown e;
  e.feasible = busy <= window_ms;
  e.active_j = profile.active_power_w(f) * busy / 1000.0;
  e.idle_j = profile.idle_power_w() * (window_ms - busy) / 1000.0;
  e.total_j = e.active_j + e.idle_j;
  return e;
}

double energy_total_closed_form_j(const PrefillBatch& batch, double f, double window_ms,
                                  const GpuProfile& profile) {
  if (!profile.grid.on_grid(f)) throw ModelError("energy closed form: frequency off grid");
  const double t_ref = batch.t_ref_total_ms(profile.prefill);
  const double f_ref = profile.grid.f_ref_mhz;
  const auto& p = profile.power;
  const double active =
      f_ref * t_ref * (p.k3 * f * f + p.k2 * f + p.k1 + p.k0 / f) / 1000.0;
  const double idle = p.p_idle_w * (window_ms - f_ref * t_ref / f) / 1000.0;
  return active + idle;
}

std::optional<FrequencyChoice> select_frequency(const PrefillBatch& batch, double window_ms,
                                                const GpuProfile& profile) {
  std::optional<FrequencyChoice> best;
  for (std::size_t i = 0; i < profile.grid.size(); ++i) {
    const double f = profile.grid.at(i);
    const auto e = energy_total(batch, f, window_ms, profile);
    if (!e.feasible) continue;
    // Strict '<' keeps the lowest frequency on ties (ascending scan).
    if (!best || e.total_j < best->energy_j) best = FrequencyChoice{f, e.total_j};
  }
  return best;
}

std::vector<PrefillFreqCommand> queue_optimizer_tick(const std::vector<ClassQueueSnapshot>& queues,
                                                     double now_ms,
                                                     const QueueOptimizerConfig& cfg,
                                                     const GpuProfile& profile) {
  std::vector<PrefillFreqCommand> out;
  for (const auto& q : queues) {
    if (q.batch.jobs.empty()) continue;
    double min_slack = std::numeric_limits<double>::infinity();
    for (const auto& j : q.batch.jobs) min_slack = std::min(min_slack, j.deadline_ms - now_ms);
    const double window = std::max(cfg.margin_prefill * min_slack, cfg.min_budget_ms);

    PrefillFreqCommand cmd;
    cmd.class_id = q.class_id;
    cmd.window_ms = window;
    if (auto choice = select_frequency(q.batch, window, profile)) {
      cmd.f_mhz = choice->f_mhz;
      cmd.infeasible = false;
    } else {
      cmd.f_mhz = profile.grid.f_max_mhz;
      cmd.infeasible = true;
    }
    out.push_back(cmd);
  }
  return out;
}

}  // namespace greensim
