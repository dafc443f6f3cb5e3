#include "mpqkd/freqref.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>

namespace mpqkd {

namespace {

std::mutex g_fftw_plan_mutex;  // FFTW planning is not thread-safe

// r2c transform of the mean-subtracted, zero-padded bins.
std::vector<std::complex<double>> spectrum(std::span<const std::uint32_t> bins,
                                           int pad_factor) {
  if (bins.empty()) throw NumericError("estimate_beat: empty bin array");
  if (pad_factor < 1) throw NumericError("estimate_beat: pad_factor must be >= 1");
  const std::size_t n = bins.size();
  const std::size_t padded = n * static_cast<std::size_t>(pad_factor);

  std::vector<double> in(padded, 0.0);
  double mean = 0.0;
  for (auto c : bins) mean += c;
  mean /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) in[i] = bins[i] - mean;

  std::vector<std::complex<double>> out(padded / 2 + 1);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(padded), in.data(),
                                reinterpret_cast<fftw_complex*>(out.data()),
                                FFTW_ESTIMATE);
  }
  if (!plan) throw NumericError("estimate_beat: FFT planning failed");
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
    fftw_destroy_plan(plan);
  }
  return out;
}

}  // namespace

BeatEstimate estimate_beat(std::span<const std::uint32_t> bins, int pad_factor,
                           double bin_ns) {
  auto spec = spectrum(bins, pad_factor);
  const std::size_t padded = bins.size() * static_cast<std::size_t>(pad_factor);
  const double bin_s = bin_ns * 1e-9;
  const double resolution = 1.0 / (static_cast<double>(padded) * bin_s);

  // Peak search on (0, Nyquist): bin 0 (DC) and the Nyquist bin excluded.
  std::size_t best = 0;
  double best_mag = 0.0;
  const std::size_t nyquist = padded / 2;
  for (std::size_t k = 1; k < nyquist; ++k) {
    const double mag = std::abs(spec[k]);
    if (mag > best_mag) {
      best_mag = mag;
      best = k;
    }
  }
  if (best == 0 || best_mag <= 0.0)
    throw NumericError("estimate_beat: no signal above DC");

  BeatEstimate est;
  est.delta_f_hz = static_cast<double>(best) * resolution;
  est.resolution_hz = resolution;
  est.peak_magnitude = best_mag;
  return est;
}

std::vector<BeatEstimate> sliding_estimates(std::span<const std::uint32_t> bins,
                                            double window_us, int pad_factor,
                                            double bin_ns) {
  const double bins_per_window_d = window_us * 1000.0 / bin_ns;
  const auto bins_per_window = static_cast<std::size_t>(
      std::llround(bins_per_window_d));
  if (bins_per_window == 0 ||
      std::abs(bins_per_window_d - static_cast<double>(bins_per_window)) >
          1e-9 * bins_per_window_d)
    throw NumericError("sliding_estimates: bin width must divide the window");
  if (bins.size() < bins_per_window)
    throw NumericError("sliding_estimates: stream shorter than one window");

  const std::size_t n_windows = bins.size() / bins_per_window;
  std::vector<BeatEstimate> out;
  out.reserve(n_windows);
  for (std::size_t w = 0; w < n_windows; ++w) {
    BeatEstimate est = estimate_beat(
        bins.subspan(w * bins_per_window, bins_per_window), pad_factor, bin_ns);
    est.window_start_s = static_cast<double>(w) * window_us * 1e-6;
    out.push_back(est);
  }
  return out;
}

std::vector<double> power_spectrum(std::span<const std::uint32_t> bins,
                                   int pad_factor, double bin_ns) {
  (void)bin_ns;
  auto spec = spectrum(bins, pad_factor);
  std::vector<double> mag2(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) mag2[k] = std::norm(spec[k]);
  return mag2;
}

BeatTable::BeatTable(std::vector<BeatEstimate> estimates, double window_s,
                     double t0_s)
    : estimates_(std::move(estimates)), window_s_(window_s), t0_s_(t0_s) {}

double BeatTable::delta_f_at(double t_s) const {
  if (estimates_.empty())
    throw NumericError("BeatTable: no estimates available");
  // Window w covers [t0 + w*W, t0 + (w+1)*W); it is usable once it has ended.
  const double completed = std::floor((t_s - t0_s_) / window_s_);
  std::int64_t idx = static_cast<std::int64_t>(completed) - 1;
  idx = std::clamp<std::int64_t>(
      idx, 0, static_cast<std::int64_t>(estimates_.size()) - 1);
  return estimates_[static_cast<std::size_t>(idx)].delta_f_hz;
}

double residual_phase_error_rate(double delta_rad) {
  return (2.0 - std::cos(delta_rad)) / 4.0;
}

double phase_from_counts(std::uint64_t c0, std::uint64_t c1,
                         std::uint64_t min_total) {
  if (c0 + c1 < min_total)
    throw NumericError("phase_from_counts: insufficient counts (" +
                       std::to_string(c0 + c1) + " < " +
                       std::to_string(min_total) + ")");
  const double num = static_cast<double>(c0) - static_cast<double>(c1);
  const double den = static_cast<double>(c0 + c1);
  return std::acos(std::clamp(num / den, -1.0, 1.0));
}

double worst_case_residual_phase(std::uint32_t l_max, double clock_hz,
                                 double t_r_us, double jitter_hz,
                                 int pad_factor) {
  const double dt = static_cast<double>(l_max) / clock_hz;
  const double t_r = t_r_us * 1e-6;
  const double resolution = 1.0 / (pad_factor * t_r);
  const double freq_err = resolution / 2.0 + jitter_hz * dt / t_r;
  return kTwoPi * freq_err * dt;
}

}  // namespace mpqkd
