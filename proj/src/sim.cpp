#include "mpqkd/sim.hpp"

#include <algorithm>
#include <cmath>

namespace mpqkd {

const ChannelState& ChannelTrace::at_time(double t_s) const {
  auto idx = static_cast<std::size_t>((t_s - t0_s) / dt_s);
  if (idx >= states.size()) idx = states.size() - 1;
  return states[idx];
}

double ChannelTrace::channel_phase(double t_s) const {
  auto idx = static_cast<std::size_t>((t_s - t0_s) / dt_s);
  if (idx >= states.size()) idx = states.size() - 1;
  const ChannelState& s = states[idx];
  const double block_start = t0_s + static_cast<double>(idx) * dt_s;
  return s.beat_phase_rad - kTwoPi * s.delta_f_hz * (t_s - block_start) +
         s.phase_offset_rad;
}

std::pair<double, double> click_probabilities(double kappa_a, double kappa_b,
                                              double relative_phase,
                                              double dark_prob) {
  if (kappa_a < 0.0 || kappa_b < 0.0)
    throw std::domain_error("click_probabilities: negative intensity");
  if (dark_prob < 0.0 || dark_prob >= 1.0)
    throw std::domain_error("click_probabilities: dark_prob outside [0,1)");
  const double cross = 2.0 * std::sqrt(kappa_a * kappa_b) *
                       std::cos(relative_phase);
  const double m_l = 0.5 * (kappa_a + kappa_b + cross);
  const double m_r = 0.5 * (kappa_a + kappa_b - cross);
  const double q = 1.0 - dark_prob;
  return {1.0 - q * std::exp(-m_l), 1.0 - q * std::exp(-m_r)};
}

ChannelState evolve_channel(const ChannelState& s, double dt_s,
                            const SystemConfig& cfg, Rng& rng) {
  if (!(dt_s > 0.0)) throw NumericError("evolve_channel: dt must be positive");
  ChannelState next;
  next.beat_phase_rad =
      s.beat_phase_rad - kTwoPi * s.delta_f_hz * dt_s;
  next.phase_offset_rad =
      s.phase_offset_rad +
      rng.normal(0.0, cfg.phase_drift_std_rad *
                          std::sqrt(dt_s / kChannelBlockSeconds));
  next.delta_f_hz =
      s.delta_f_hz + rng.normal(0.0, cfg.beat_jitter_std_hz *
                                         std::sqrt(dt_s / (cfg.t_r_us * 1e-6)));
  return next;
}

ChannelTrace build_channel_trace(const SystemConfig& cfg, double duration_s,
                                 std::uint64_t seed, double t0_s) {
  ChannelTrace trace;
  trace.t0_s = t0_s;
  trace.dt_s = kChannelBlockSeconds;
  const auto n_blocks = static_cast<std::size_t>(
      std::ceil(duration_s / trace.dt_s)) + 1;
  trace.states.reserve(n_blocks);
  Rng rng(seed);
  ChannelState s;
  s.delta_f_hz = cfg.beat_center_hz;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    trace.states.push_back(s);
    s = evolve_channel(s, trace.dt_s, cfg, rng);
  }
  return trace;
}

namespace {

struct ClassConstants {
  double kappa;          // detected mean photons
  double exp_lost;       // exp(-(tau - kappa)) for source-side loss draw
  double lost_lambda;    // tau - kappa
};

}  // namespace

SimBlock simulate_rounds(const SystemConfig& cfg, const ChannelTrace& trace,
                         std::uint64_t first_round, std::uint64_t count,
                         std::uint64_t seed) {
  SimBlock block;
  block.first_round = first_round;
  block.tags.resize(count);
  block.detections.resize(count);
  block.truth.resize(count);

  const double eta_a = cfg.alice.transmittance() * cfg.det_efficiency;
  const double eta_b = cfg.bob.transmittance() * cfg.det_efficiency;
  ClassConstants ca[3], cb[3];
  for (int i = 0; i < 3; ++i) {
    const auto cls = static_cast<IntensityClass>(i);
    const double tau_a = cfg.alice.mean_photons(cls);
    const double tau_b = cfg.bob.mean_photons(cls);
    ca[i] = {tau_a * eta_a, std::exp(-(tau_a - tau_a * eta_a)),
             tau_a - tau_a * eta_a};
    cb[i] = {tau_b * eta_b, std::exp(-(tau_b - tau_b * eta_b)),
             tau_b - tau_b * eta_b};
  }
  // Per class pair: half of the total detected intensity, the interference
  // amplitude, and exp(-total) for the second Poisson draw.
  double half_sum[3][3], amp[3][3], exp_sum[3][3], attr_a[3][3];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double s = ca[i].kappa + cb[j].kappa;
      half_sum[i][j] = 0.5 * s;
      amp[i][j] = std::sqrt(ca[i].kappa * cb[j].kappa);
      exp_sum[i][j] = std::exp(-s);
      attr_a[i][j] = s > 0.0 ? ca[i].kappa / s : 0.0;
    }
  }

  const double p_mu_a = cfg.alice.p_mu;
  const double p_munu_a = cfg.alice.p_mu + cfg.alice.p_nu;
  const double p_mu_b = cfg.bob.p_mu;
  const double p_munu_b = cfg.bob.p_mu + cfg.bob.p_nu;
  const double dark = cfg.dark_prob_per_gate();
  const double inv_clock = 1.0 / cfg.clock_hz;

  Rng rng(seed);
  for (std::uint64_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(first_round + i) * inv_clock;

    const double ua = rng.uniform();
    const int cls_a = ua < p_mu_a ? 0 : (ua < p_munu_a ? 1 : 2);
    const double ub = rng.uniform();
    const int cls_b = ub < p_mu_b ? 0 : (ub < p_munu_b ? 1 : 2);
    const double theta_a = rng.uniform() * kTwoPi;
    const double theta_b = rng.uniform() * kTwoPi;

    RoundTag& tag = block.tags[i];
    tag.intensity_a = static_cast<IntensityClass>(cls_a);
    tag.intensity_b = static_cast<IntensityClass>(cls_b);
    tag.phase_a = theta_a;
    tag.phase_b = theta_b;

    std::uint32_t n_l = 0, n_r = 0;
    std::uint16_t det_a = 0, det_b = 0;
    if (half_sum[cls_a][cls_b] > 0.0) {
      const double phi = theta_a - theta_b + trace.channel_phase(t);
      const double m_l = half_sum[cls_a][cls_b] +
                         amp[cls_a][cls_b] * std::cos(phi);
      const double exp_l = std::exp(-m_l);
      n_l = rng.poisson_from(m_l, exp_l);
      const double m_r = 2.0 * half_sum[cls_a][cls_b] - m_l;
      n_r = rng.poisson_from(m_r, exp_sum[cls_a][cls_b] / exp_l);
      // Detected photons attributed to the sources in proportion to their
      // detected intensities; preserves Poisson(tau) marginals per source.
      const std::uint32_t detected = n_l + n_r;
      for (std::uint32_t p = 0; p < detected; ++p) {
        if (rng.uniform() < attr_a[cls_a][cls_b])
          ++det_a;
        else
          ++det_b;
      }
    }
    DetectionRecord& det = block.detections[i];
    det.clicked_l = (n_l > 0) || rng.bernoulli(dark);
    det.clicked_r = (n_r > 0) || rng.bernoulli(dark);

    GroundTruth& gt = block.truth[i];
    gt.photons_a = static_cast<std::uint16_t>(
        det_a + rng.poisson_from(ca[cls_a].lost_lambda, ca[cls_a].exp_lost));
    gt.photons_b = static_cast<std::uint16_t>(
        det_b + rng.poisson_from(cb[cls_b].lost_lambda, cb[cls_b].exp_lost));
  }
  return block;
}

std::pair<SimBlock, ChannelTrace> simulate_block(const SystemConfig& cfg,
                                                 std::uint64_t seed) {
  const double duration =
      static_cast<double>(cfg.n_rounds) / cfg.clock_hz;
  ChannelTrace trace =
      build_channel_trace(cfg, duration, seed_stream(seed, 0xC0FFEEULL));
  SimBlock block =
      simulate_rounds(cfg, trace, 0, cfg.n_rounds, seed_stream(seed, 1));
  return {std::move(block), std::move(trace)};
}

std::vector<std::uint32_t> generate_reference_counts(
    const ChannelTrace& trace, double mean_rate_hz, double t_r_us,
    double bin_ns, std::uint64_t seed, double visibility, double t0_s,
    double duration_s) {
  if (mean_rate_hz < 0.0)
    throw NumericError("generate_reference_counts: negative rate");
  const double window_ns = t_r_us * 1000.0;
  const double ratio = window_ns / bin_ns;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio)
    throw NumericError(
        "generate_reference_counts: bin width must divide the window");
  if (duration_s < 0.0) duration_s = trace.duration_s() - (t0_s - trace.t0_s);
  const double bin_s = bin_ns * 1e-9;
  const auto n_bins = static_cast<std::size_t>(std::llround(duration_s / bin_s));
  std::vector<std::uint32_t> bins(n_bins, 0);
  if (mean_rate_hz == 0.0 || n_bins == 0) return bins;

  const double base = mean_rate_hz * bin_s;
  const double exp_base = std::exp(-base);
  const double vlam = visibility * base;
  Rng rng(seed);

  // Phasor rotation per trace block: cos(phi0 + k*w) without per-bin trig.
  std::size_t i = 0;
  while (i < n_bins) {
    const double t = t0_s + (static_cast<double>(i) + 0.5) * bin_s;
    const auto blk = static_cast<std::size_t>(
        std::min((t - trace.t0_s) / trace.dt_s,
                 static_cast<double>(trace.states.size() - 1)));
    const double block_end = trace.t0_s +
                             (static_cast<double>(blk) + 1.0) * trace.dt_s;
    auto last = static_cast<std::size_t>(
        std::ceil((block_end - t0_s) / bin_s - 0.5));
    last = std::min(last, n_bins);
    if (last <= i) last = i + 1;

    const ChannelState& s = trace.states[blk];
    const double block_start = trace.t0_s + static_cast<double>(blk) * trace.dt_s;
    const double phi0 = s.beat_phase_rad -
                        kTwoPi * s.delta_f_hz * (t - block_start) +
                        s.phase_offset_rad;
    const double w = -kTwoPi * s.delta_f_hz * bin_s;
    double c = std::cos(phi0), sn = std::sin(phi0);
    const double cw = std::cos(w), sw = std::sin(w);
    for (std::size_t k = i; k < last; ++k) {
      const double x = vlam * c;  // lambda = base + x, |x| <= vlam
      // exp(-(base + x)) = exp(-base) * exp(-x); |x| is tiny, so a short
      // Taylor product stays inside the Poisson sampler's tolerance.
      const double ex =
          exp_base *
          (1.0 - x * (1.0 - x * (0.5 - x * (1.0 / 6.0 - x / 24.0))));
      bins[k] = rng.poisson_from(base + x, ex);
      const double c2 = c * cw - sn * sw;
      sn = sn * cw + c * sw;
      c = c2;
      if (((k - i) & 1023u) == 1023u) {
        const double norm = 1.0 / std::sqrt(c * c + sn * sn);
        c *= norm;
        sn *= norm;
      }
    }
    i = last;
  }
  return bins;
}

int conditional_click(double kappa_a, double kappa_b, double relative_phase,
                      Rng& rng) {
  auto [p_l, p_r] = click_probabilities(kappa_a, kappa_b, relative_phase, 0.0);
  const double p_l_only = p_l * (1.0 - p_r);
  const double p_r_only = p_r * (1.0 - p_l);
  const double total = p_l_only + p_r_only;
  if (total <= 0.0)
    throw NumericError("conditional_click: zero single-click probability");
  return rng.uniform() * total < p_l_only ? 0 : 1;
}

double analytic_effective_probability(const SystemConfig& cfg,
                                      int phase_steps) {
  const double eta_a = cfg.alice.transmittance() * cfg.det_efficiency;
  const double eta_b = cfg.bob.transmittance() * cfg.det_efficiency;
  const double dark = cfg.dark_prob_per_gate();
  double total = 0.0;
  for (int ia = 0; ia < 3; ++ia) {
    for (int ib = 0; ib < 3; ++ib) {
      const auto cls_a = static_cast<IntensityClass>(ia);
      const auto cls_b = static_cast<IntensityClass>(ib);
      const double ka = cfg.alice.mean_photons(cls_a) * eta_a;
      const double kb = cfg.bob.mean_photons(cls_b) * eta_b;
      // midpoint rule on the uniform phase; integrand is smooth and periodic
      double acc = 0.0;
      for (int s = 0; s < phase_steps; ++s) {
        const double phi = (s + 0.5) * kTwoPi / phase_steps;
        auto [p_l, p_r] = click_probabilities(ka, kb, phi, dark);
        acc += p_l * (1.0 - p_r) + p_r * (1.0 - p_l);
      }
      total += cfg.alice.probability(cls_a) * cfg.bob.probability(cls_b) * acc /
               phase_steps;
    }
  }
  return total;
}

}  // namespace mpqkd
