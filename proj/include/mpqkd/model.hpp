#pragma once

#include <cstdint>
#include <string>

#include "mpqkd/common.hpp"

namespace mpqkd {

// Per-round source setting. Vacuum is exactly zero mean photons.
enum class IntensityClass : std::uint8_t { Signal = 0, Decoy = 1, Vacuum = 2 };

struct PartyParams {
  double mu = 0.5;   // signal mean photon number per pulse
  double nu = 0.05;  // decoy mean photon number
  double p_mu = 0.25;
  double p_nu = 0.25;
  double p_o = 0.5;
  double loss_to_charlie_db = 0.0;

  double mean_photons(IntensityClass c) const {
    switch (c) {
      case IntensityClass::Signal: return mu;
      case IntensityClass::Decoy: return nu;
      default: return 0.0;
    }
  }
  double probability(IntensityClass c) const {
    switch (c) {
      case IntensityClass::Signal: return p_mu;
      case IntensityClass::Decoy: return p_nu;
      default: return p_o;
    }
  }
  double transmittance() const {
    return std::pow(10.0, -loss_to_charlie_db / 10.0);
  }
};

struct Epsilons {
  double cor = 1e-10;    // correctness
  double prime = 1e-10;  // secrecy smoothing
  double hat = 1e-10;
  double pa = 1e-10;     // privacy amplification
  double upper = 1e-10;  // expected-value upper bound failure prob
  double lower = 1e-10;  // expected-value lower bound failure prob
  double e = 1e-10;      // phase-error sampling correction
};

struct SystemConfig {
  PartyParams alice;
  PartyParams bob;
  double clock_hz = 5e8;
  std::uint64_t n_rounds = 10'000'000;  // rounds per simulated block
  std::uint32_t l_max = 10000;          // maximum pairing interval, rounds
  std::uint32_t m_slices = 16;          // phase slices M
  double det_efficiency = 0.55;
  double dark_rate_hz = 30.0;
  double beat_center_hz = 34e6;        // laser beat note at calibration
  double beat_jitter_std_hz = 652.282; // per reference window T_r
  double phase_drift_std_rad = 0.0987; // per 100 us
  double t_r_us = 500.0;               // reference window length
  double ref_rate_hz = 1e6;            // reference-light counting rate
  double ref_visibility = 1.0;         // reference interference visibility
  Epsilons eps;
  double f_ec = 1.16;         // error-correction efficiency factor
  double ec_leak_scale = 0.5; // reconciliation leak relative to f*n*H2(e)

  double dark_prob_per_gate() const { return dark_rate_hz / clock_hz; }
  double total_loss_db() const {
    return alice.loss_to_charlie_db + bob.loss_to_charlie_db;
  }
};

// Returns cfg unchanged if every invariant holds; throws ConfigError naming
// the first violated field otherwise.
const SystemConfig& validate_config(const SystemConfig& cfg);

// Flat `key = value` text with `#` comments. Unknown keys are errors; missing
// keys keep defaults. serialize_config round-trips every double bit-exactly.
SystemConfig parse_config(const std::string& text);
SystemConfig load_config_file(const std::string& path);
std::string serialize_config(const SystemConfig& cfg);

// Convenience for symmetric-link setups: both parties share one parameter set.
SystemConfig symmetric_config(const PartyParams& shared);

struct RoundTag {
  IntensityClass intensity_a = IntensityClass::Vacuum;
  IntensityClass intensity_b = IntensityClass::Vacuum;
  double phase_a = 0.0;  // radians in [0, 2pi)
  double phase_b = 0.0;
};

struct DetectionRecord {
  bool clicked_l = false;
  bool clicked_r = false;
  // Valid for pairing: exactly one detector fired.
  bool effective() const { return clicked_l != clicked_r; }
};

struct PairRecord {
  std::uint64_t j = 0;  // first round index, j < k
  std::uint64_t k = 0;
  RoundTag tag_j, tag_k;
  DetectionRecord det_j, det_k;
};

// Pair counts keyed by the per-party pair-level intensity sums, plus the two
// error counters. Field names follow the serialized keys.
struct TallyTable {
  std::uint64_t n_mu_mu = 0;
  std::uint64_t n_mu_o = 0;
  std::uint64_t n_o_mu = 0;
  std::uint64_t n_nu_nu = 0;
  std::uint64_t n_nu_o = 0;
  std::uint64_t n_o_nu = 0;
  std::uint64_t n_o_o = 0;
  std::uint64_t n_2nu_2nu = 0;  // kept X pairs only
  std::uint64_t n_2nu_o = 0;
  std::uint64_t n_o_2nu = 0;
  std::uint64_t m_z = 0;  // errors among n_mu_mu
  std::uint64_t m_x = 0;  // errors among kept X pairs

  TallyTable& operator+=(const TallyTable& o);
  bool operator==(const TallyTable& o) const = default;
};

// JSON object with keys n_mu_mu ... m_2nu_2nu (m_z serializes as "m_mu_mu",
// m_x as "m_2nu_2nu"); optional "n_total" is carried alongside.
std::string tallies_to_json(const TallyTable& t, double n_total);
TallyTable tallies_from_json(const std::string& text, double* n_total_out);

}  // namespace mpqkd
