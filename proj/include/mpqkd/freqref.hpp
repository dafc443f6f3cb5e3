#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mpqkd/common.hpp"

namespace mpqkd {

struct BeatEstimate {
  double delta_f_hz = 0.0;
  double window_start_s = 0.0;
  double resolution_hz = 0.0;   // 1 / (pad_factor * window length)
  double peak_magnitude = 0.0;
};

// Beat frequency from binned reference counts: mean subtraction, zero padding
// to pad_factor times the length, real FFT, argmax over (0, Nyquist).
// No peak interpolation; the estimate is quantized to the grid resolution.
// Throws NumericError("no signal") when the spectrum is flat zero.
BeatEstimate estimate_beat(std::span<const std::uint32_t> bins,
                           int pad_factor, double bin_ns = 1.0);

// One estimate per contiguous window of window_us; partial trailing data is
// dropped. window_start is relative to the start of the stream.
std::vector<BeatEstimate> sliding_estimates(std::span<const std::uint32_t> bins,
                                            double window_us, int pad_factor,
                                            double bin_ns = 1.0);

// Magnitude-squared half spectrum of the mean-subtracted, padded bins
// (index k maps to frequency k / (padded * bin)); exposed for spectral
// diagnostics and the Parseval check.
std::vector<double> power_spectrum(std::span<const std::uint32_t> bins,
                                   int pad_factor, double bin_ns = 1.0);

// Estimate lookup for pairing: "latest window ending at or before t".
// Before the first window completes, the first estimate is used.
class BeatTable {
 public:
  BeatTable() = default;
  BeatTable(std::vector<BeatEstimate> estimates, double window_s,
            double t0_s = 0.0);
  double delta_f_at(double t_s) const;
  bool empty() const { return estimates_.empty(); }
  const std::vector<BeatEstimate>& estimates() const { return estimates_; }

 private:
  std::vector<BeatEstimate> estimates_;
  double window_s_ = 0.0;
  double t0_s_ = 0.0;
};

// X-basis error rate under a constant residual phase: (2 - cos(delta)) / 4.
double residual_phase_error_rate(double delta_rad);

// Phase angle in [0, pi] from two interferometer count rates,
// arccos((c0 - c1) / (c0 + c1)). Requires c0 + c1 >= min_total.
double phase_from_counts(std::uint64_t c0, std::uint64_t c1,
                         std::uint64_t min_total = 600);

// Worst-case residual phase for a pairing gap of l_max rounds: half a
// resolution bin of frequency error plus the jitter accrued since the window
// closed, integrated over the gap.
double worst_case_residual_phase(std::uint32_t l_max, double clock_hz,
                                 double t_r_us, double jitter_hz,
                                 int pad_factor = 2);

}  // namespace mpqkd
