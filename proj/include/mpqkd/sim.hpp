#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mpqkd/common.hpp"
#include "mpqkd/model.hpp"

namespace mpqkd {

// Latent photon numbers drawn at the sources; simulation-only ground truth,
// never visible to the protocol side.
struct GroundTruth {
  std::uint16_t photons_a = 0;
  std::uint16_t photons_b = 0;
};

// Channel/laser state held constant within one 100 us block. The beat note is
// the signed laser detuning delta_f = f_b - f_a: the relative phase at the
// beam splitter evolves as -2*pi*delta_f*t, which the announced-phase
// correction +(2*pi/F)*delta_f*(k-j) compensates.
struct ChannelState {
  double delta_f_hz = 0.0;
  double phase_offset_rad = 0.0;  // Gaussian random walk
  double beat_phase_rad = 0.0;    // accumulated -2*pi * integral of delta_f
};

inline constexpr double kChannelBlockSeconds = 100e-6;

struct ChannelTrace {
  double t0_s = 0.0;
  double dt_s = kChannelBlockSeconds;
  std::vector<ChannelState> states;

  const ChannelState& at_time(double t_s) const;
  // Beat + drift contribution to the relative phase at time t.
  double channel_phase(double t_s) const;
  double duration_s() const { return dt_s * static_cast<double>(states.size()); }
};

// Threshold-detector click probabilities for two interfering weak coherent
// pulses of detected mean photon numbers kappa_a, kappa_b at relative phase
// phi, with dark counts folded in multiplicatively:
//   p_L = 1 - (1 - d) exp(-(ka + kb + 2 sqrt(ka kb) cos phi)/2)
//   p_R = same with -cos phi.
std::pair<double, double> click_probabilities(double kappa_a, double kappa_b,
                                              double relative_phase,
                                              double dark_prob);

// One 100 us step of the channel random walk (generalized to dt):
// phase_offset += N(0, sigma*sqrt(dt/100us)), delta_f += N(0,
// jitter*sqrt(dt/T_r)); beat phase accumulates the outgoing block's detuning.
ChannelState evolve_channel(const ChannelState& s, double dt_s,
                            const SystemConfig& cfg, Rng& rng);

// Serial channel walk covering [t0, t0 + duration); the per-round hot path
// only reads it, so blocks of rounds can simulate in parallel.
ChannelTrace build_channel_trace(const SystemConfig& cfg, double duration_s,
                                 std::uint64_t seed, double t0_s = 0.0);

struct SimBlock {
  std::uint64_t first_round = 0;
  std::vector<RoundTag> tags;
  std::vector<DetectionRecord> detections;
  std::vector<GroundTruth> truth;
};

// Simulates rounds [first_round, first_round + count); round r fires at
// t = r / clock_hz on the trace's global clock. Deterministic in
// (cfg, trace, first_round, count, seed).
SimBlock simulate_rounds(const SystemConfig& cfg, const ChannelTrace& trace,
                         std::uint64_t first_round, std::uint64_t count,
                         std::uint64_t seed);

// Convenience: builds a trace for cfg.n_rounds rounds and simulates them.
// Sub-streams are derived from the one seed.
std::pair<SimBlock, ChannelTrace> simulate_block(const SystemConfig& cfg,
                                                 std::uint64_t seed);

// Reference-light detections binned at bin_ns over [t0, t0 + duration):
// inhomogeneous Poisson with intensity rate * (1 + visibility *
// cos(channel_phase)). t_r_us is the downstream analysis window; the bin
// width must divide it.
std::vector<std::uint32_t> generate_reference_counts(
    const ChannelTrace& trace, double mean_rate_hz, double t_r_us,
    double bin_ns, std::uint64_t seed, double visibility = 1.0,
    double t0_s = 0.0, double duration_s = -1.0);

// Which detector fired, conditioned on exactly one click (0 = L, 1 = R).
// Building block for X-basis error-law ensembles.
int conditional_click(double kappa_a, double kappa_b, double relative_phase,
                      Rng& rng);

// Analytic probability that a round is effective (exactly one click),
// averaging click_probabilities over intensity choices and the uniform
// relative phase. Independent yield oracle for the simulator.
double analytic_effective_probability(const SystemConfig& cfg,
                                      int phase_steps = 20000);

}  // namespace mpqkd
