#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace greensim {

struct RunResult;
struct SloConfig;

// Nearest-rank quantile: sorted[ceil(q*N)] with 1-based indexing; q=0 returns
// the minimum, q=1 the maximum. Throws std::invalid_argument on empty input.
double quantile(std::span<const double> samples, double q);

// Pearson correlation; defined as 0 when either series has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

struct PassRates {
  double ttft_pct = 0.0;  // % of completed requests meeting their class TTFT SLO
  double tbt_pct = 0.0;   // % of requests whose per-request P95 TBT meets the SLO
};

// Pass rates against the raw SLO targets (margins are control-side knobs and
// do not move the goalposts here). With aggregate_tbt=true the TBT criterion
// is instead "the run-wide P95 TBT meets the SLO" (0 or 100).
PassRates slo_pass_rates(const RunResult& result, const SloConfig& slo, bool aggregate_tbt = false);

// One row of a relative-energy report. Energies are normalized to the
// baseline method; delta_en_pct = 100 * (1 - total/baseline_total).
struct ReportRow {
  std::string workload;
  std::string method;
  double rel_decode = 1.0;
  double rel_prefill = 1.0;
  double ttft_pct = 0.0;
  double tbt_pct = 0.0;
  double delta_en_pct = 0.0;
};

// Builds rows for every method in `runs`, normalized to runs[baseline].
// Throws if the baseline method is missing.
std::vector<ReportRow> energy_report(const std::string& workload,
                                     const std::map<std::string, const RunResult*>& runs,
                                     const std::string& baseline, const SloConfig& slo);

std::string report_csv(const std::vector<ReportRow>& rows);
std::string report_text(const std::vector<ReportRow>& rows);

}  // namespace greensim
