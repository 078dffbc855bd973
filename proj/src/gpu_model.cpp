#include "greensim/gpu_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace greensim {

void FrequencyGrid::validate() const {
  if (f_min_mhz <= 0.0 || f_max_mhz <= f_min_mhz) throw ModelError("grid: need 0 < f_min < f_max");
  if (step_mhz <= 0.0) throw ModelError("grid: step must be > 0");
  const double steps = (f_max_mhz - f_min_mhz) / step_mhz;
  if (std::abs(steps - std::round(steps)) > 1e-9)
    throw ModelError("grid: span must be an integer number of steps");
  if (!on_grid(f_ref_mhz)) throw ModelError("grid: f_ref must lie on the grid");
}

bool FrequencyGrid::on_grid(double f) const {
  if (f < f_min_mhz - 1e-9 || f > f_max_mhz + 1e-9) return false;
  const double k = (f - f_min_mhz) / step_mhz;
  return std::abs(k - std::round(k)) < 1e-9;
}

std::size_t FrequencyGrid::size() const {
  return static_cast<std::size_t>(std::round((f_max_mhz - f_min_mhz) / step_mhz)) + 1;
}

double FrequencyGrid::at(std::size_t i) const { return f_min_mhz + step_mhz * static_cast<double>(i); }

std::vector<double> FrequencyGrid::frequencies() const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i);
  return out;
}

double FrequencyGrid::clamp_to_grid(double f) const {
  const double clamped = std::clamp(f, f_min_mhz, f_max_mhz);
  const double k = std::round((clamped - f_min_mhz) / step_mhz);
  return f_min_mhz + k * step_mhz;
}

void LatencyModel::validate() const {
  if (a < 0.0) throw ModelError("latency model: a must be >= 0");
  if (f_ref_mhz <= 0.0) throw ModelError("latency model: f_ref must be > 0");
  for (double L : {1.0, 256.0, 1024.0, 8192.0, 65536.0}) {
    if (prefill_latency_raw_ms(*this, L, f_ref_mhz) <= 0.0)
      throw ModelError("latency model: nonpositive latency at L=" + std::to_string(L));
  }
  // With a >= 0 the quadratic can only dip between probe points via b < 0;
  // check the vertex as well.
  if (a > 0.0 && b < 0.0) {
    const double vertex = -b / (2.0 * a);
    if (vertex >= 1.0 && vertex <= 65536.0 && a * vertex * vertex + b * vertex + c <= 0.0)
      throw ModelError("latency model: nonpositive latency at vertex");
  }
}

void DecodeStepModel::validate() const {
  if (alpha0_ms < 0 || alpha1_ms < 0 || beta0_ms < 0 || beta1_ms < 0)
    throw ModelError("decode model: coefficients must be >= 0");
  if (f_ref_mhz <= 0.0) throw ModelError("decode model: f_ref must be > 0");
  if (alpha0_ms + alpha1_ms + beta0_ms + beta1_ms <= 0.0)
    throw ModelError("decode model: step time must be positive");
}

void PowerModel::validate(const FrequencyGrid& grid) const {
  if (p_idle_w <= 0.0) throw ModelError("power model: p_idle must be > 0");
  double prev = -1.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double f = grid.at(i);
    const double p = active_power_w(f);
    if (p <= p_idle_w)
      throw ModelError("power model: active power must exceed p_idle at f=" + std::to_string(f));
    if (p <= prev)
      throw ModelError("power model: active power must be strictly increasing on the grid");
    prev = p;
  }
}

void GpuProfile::validate() const {
  grid.validate();
  prefill.validate();
  decode.validate();
  power.validate(grid);
  if (prefill.f_ref_mhz != grid.f_ref_mhz || decode.f_ref_mhz != grid.f_ref_mhz)
    throw ModelError("profile: latency/decode f_ref must match grid f_ref");
}

namespace {
void require_on_grid(const FrequencyGrid& grid, double f) {
  if (!grid.on_grid(f))
    throw ModelError("frequency " + std::to_string(f) + " MHz is not on the grid");
}
}  // namespace

double prefill_latency_raw_ms(const LatencyModel& m, double prompt_tokens, double f) {
  const double t_ref = (m.a * prompt_tokens + m.b) * prompt_tokens + m.c;
  return t_ref * m.f_ref_mhz / f;
}

double decode_step_raw_ms(const DecodeStepModel& m, double batch, double f) {
  return (m.alpha0_ms + m.alpha1_ms * batch) + (m.beta0_ms + m.beta1_ms * batch) * m.f_ref_mhz / f;
}

double GpuProfile::prefill_latency_ms(double prompt_tokens, double f) const {
  require_on_grid(grid, f);
  return prefill_latency_raw_ms(prefill, prompt_tokens, f);
}

double GpuProfile::decode_step_ms(double batch, double f) const {
  require_on_grid(grid, f);
  if (batch < 1.0) throw ModelError("decode step: batch must be >= 1");
  return decode_step_raw_ms(decode, batch, f);
}

double GpuProfile::active_power_w(double f) const {
  require_on_grid(grid, f);
  return power.active_power_w(f);
}

GpuProfile GpuProfile::default_profile() {
  GpuProfile p;
  p.name = "synth-a100-40g";
  p.grid = FrequencyGrid{210.0, 1410.0, 15.0, 1410.0};
  p.prefill = LatencyModel{2.0e-5, 0.12, 8.0, 1410.0};
  p.decode = DecodeStepModel{14.5, 0.1, 9.0, 0.135, 1410.0};
  p.power = PowerModel{1.6e-7, -1.0e-4, 0.05, 216.5, 15.0};
  p.validate();
  return p;
}

void FlopsParams::validate() const {
  if (d_model <= 0 || d_ff <= 0 || h_q <= 0 || d_k <= 0 || batch <= 0)
    throw ModelError("flops params: dimensions must be positive");
  if (h_q * d_k != d_model) throw ModelError("flops params: need h_q * d_k == d_model");
  if (alpha_tri != 0.5 && alpha_tri != 1.0)
    throw ModelError("flops params: alpha must be 0.5 or 1.0");
}

double flops_prefill_per_layer(const FlopsParams& p, double n_tokens) {
  p.validate();
  const double B = static_cast<double>(p.batch);
  const double dm = static_cast<double>(p.d_model);
  const double A = 8.0 * B * dm * dm + 4.0 * B * dm * static_cast<double>(p.d_ff);
  const double C = 4.0 * p.alpha_tri * B * static_cast<double>(p.h_q) * static_cast<double>(p.d_k);
  return A * n_tokens + C * n_tokens * n_tokens;
}

namespace {

// Least squares for y ~ sum_j coef[j] * x^j via normal equations; x is assumed
// pre-scaled to O(1) by the caller. Gaussian elimination with partial pivoting.
std::vector<double> polyfit(std::span<const std::pair<double, double>> samples, int degree) {
  const int n = degree + 1;
  std::vector<double> ata(static_cast<size_t>(n) * n, 0.0), aty(n, 0.0);
  for (const auto& [x, y] : samples) {
    std::vector<double> pw(n);
    pw[0] = 1.0;
    for (int j = 1; j < n; ++j) pw[j] = pw[j - 1] * x;
    for (int i = 0; i < n; ++i) {
      aty[i] += pw[i] * y;
      for (int j = 0; j < n; ++j) ata[static_cast<size_t>(i) * n + j] += pw[i] * pw[j];
    }
  }
  // Solve ata * c = aty.
  std::vector<double> m = ata, rhs = aty;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(m[static_cast<size_t>(r) * n + col]) >
          std::abs(m[static_cast<size_t>(piv) * n + col]))
        piv = r;
    if (std::abs(m[static_cast<size_t>(piv) * n + col]) < 1e-300)
      throw ModelError("fit: singular normal equations");
    if (piv != col) {
      for (int j = 0; j < n; ++j)
        std::swap(m[static_cast<size_t>(piv) * n + j], m[static_cast<size_t>(col) * n + j]);
      std::swap(rhs[piv], rhs[col]);
    }
    for (int r = col + 1; r < n; ++r) {
      const double k = m[static_cast<size_t>(r) * n + col] / m[static_cast<size_t>(col) * n + col];
      for (int j = col; j < n; ++j)
        m[static_cast<size_t>(r) * n + j] -= k * m[static_cast<size_t>(col) * n + j];
      rhs[r] -= k * rhs[col];
    }
  }
  std::vector<double> coef(n);
  for (int r = n - 1; r >= 0; --r) {
    double s = rhs[r];
    for (int j = r + 1; j < n; ++j) s -= m[static_cast<size_t>(r) * n + j] * coef[j];
    coef[r] = s / m[static_cast<size_t>(r) * n + r];
  }
  return coef;
}

double r_squared(std::span<const std::pair<double, double>> samples,
                 const std::vector<double>& pred) {
  double mean = 0.0;
  for (const auto& s : samples) mean += s.second;
  mean /= static_cast<double>(samples.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ss_res += (samples[i].second - pred[i]) * (samples[i].second - pred[i]);
    ss_tot += (samples[i].second - mean) * (samples[i].second - mean);
  }
  return ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
}

std::size_t distinct_count(std::span<const std::pair<double, double>> samples) {
  std::set<double> xs;
  for (const auto& s : samples) xs.insert(s.first);
  return xs.size();
}

}  // namespace

LatencyFit fit_latency(std::span<const std::pair<double, double>> samples, double f_ref_mhz) {
  if (distinct_count(samples) < 3)
    throw ModelError("fit_latency: need at least 3 distinct prompt lengths");
  std::vector<std::pair<double, double>> scaled;
  scaled.reserve(samples.size());
  for (const auto& [L, y] : samples) scaled.emplace_back(L / 1024.0, y);
  const auto c = polyfit(scaled, 2);

  LatencyFit fit;
  fit.model.a = c[2] / (1024.0 * 1024.0);
  fit.model.b = c[1] / 1024.0;
  fit.model.c = c[0];
  fit.model.f_ref_mhz = f_ref_mhz;

  std::vector<double> pred;
  pred.reserve(samples.size());
  double L_min = samples[0].first, L_max = samples[0].first;
  for (const auto& [L, y] : samples) {
    pred.push_back((fit.model.a * L + fit.model.b) * L + fit.model.c);
    L_min = std::min(L_min, L);
    L_max = std::max(L_max, L);
  }
  fit.r_squared = r_squared(samples, pred);

  for (double L : {L_min, 0.5 * (L_min + L_max), L_max}) {
    if ((fit.model.a * L + fit.model.b) * L + fit.model.c <= 0.0)
      throw ModelError("fit_latency: fitted model predicts nonpositive latency in sample range");
  }
  return fit;
}

PowerFit fit_power(std::span<const std::pair<double, double>> samples, double p_idle_w,
                   const FrequencyGrid& grid) {
  if (distinct_count(samples) < 4)
    throw ModelError("fit_power: need at least 4 distinct frequencies");
  std::vector<std::pair<double, double>> scaled;
  scaled.reserve(samples.size());
  for (const auto& [f, y] : samples) scaled.emplace_back(f / 1000.0, y);
  const auto c = polyfit(scaled, 3);

  PowerFit fit;
  fit.model.k3 = c[3] / 1e9;
  fit.model.k2 = c[2] / 1e6;
  fit.model.k1 = c[1] / 1e3;
  fit.model.k0 = c[0];
  fit.model.p_idle_w = p_idle_w;

  std::vector<double> pred;
  pred.reserve(samples.size());
  for (const auto& [f, y] : samples) pred.push_back(fit.model.active_power_w(f));
  fit.r_squared = r_squared(samples, pred);

  fit.monotone_on_grid = true;
  double prev = fit.model.active_power_w(grid.at(0));
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double p = fit.model.active_power_w(grid.at(i));
    if (p <= prev) {
      fit.monotone_on_grid = false;
      break;
    }
    prev = p;
  }
  return fit;
}

}  // namespace greensim
