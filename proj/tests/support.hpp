#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mpqkd/common.hpp"
#include "mpqkd/model.hpp"
#include "mpqkd/sim.hpp"
#include "mpqkd/siftmap.hpp"

namespace mpqkd::test {

inline std::string data_path(const std::string& rel) {
  return std::string(MPQKD_DATA_DIR) + "/" + rel;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Published reference figures for the four deployments.
struct GoldenColumn {
  const char* config;
  const char* tallies;
  double n11z;
  double e11ph;
  double bpp;
  double bps;
  double plob;
  double ratio;
};

inline constexpr GoldenColumn kGolden[4] = {
    {"configs/fiber_202km.conf", "golden/tallies_202km.json", 39163294.0,
     0.0717, 1.7406e-5, 8695.34, 1.1673e-4, 0.1491},
    {"configs/fiber_303km.conf", "golden/tallies_303km.json", 29808789.0,
     0.1312, 1.1261e-6, 561.26, 1.0969e-6, 1.0267},
    {"configs/fiber_354km.conf", "golden/tallies_354km.json", 13689739.0,
     0.1124, 2.2914e-7, 113.59, 9.0819e-8, 2.5230},
    {"configs/fiber_404km.conf", "golden/tallies_404km.json", 5908436.0,
     0.1511, 2.0993e-8, 10.20, 9.9810e-9, 2.1033},
};

struct XLawSample {
  std::uint64_t kept = 0;
  std::uint64_t errors = 0;
  double error_rate() const {
    return kept ? static_cast<double>(errors) / static_cast<double>(kept) : 0.0;
  }
};

// X-basis pair ensemble with an exactly controlled residual phase: the two
// rounds interfere at phases theta and theta + delta while the announced
// differences cancel after the frequency correction, so every pair lands in
// the near-0 slice with zero window smear. Error statistics follow
// (2 - cos(delta)) / 4 through the real click model and sift rule.
inline XLawSample x_law_ensemble(double kappa, double delta, std::uint64_t n,
                                 std::uint64_t seed) {
  Rng rng(seed);
  XLawSample out;
  const double clock = 5e8;
  const double delta_f = delta * clock / kTwoPi;  // gap of one round
  for (std::uint64_t i = 0; i < n; ++i) {
    const double theta = rng.uniform() * kTwoPi;
    PairRecord p;
    p.j = 0;
    p.k = 1;
    p.tag_j.intensity_a = IntensityClass::Decoy;
    p.tag_j.intensity_b = IntensityClass::Decoy;
    p.tag_k = p.tag_j;
    p.tag_j.phase_a = wrap_two_pi(theta);
    p.tag_j.phase_b = 0.0;
    p.tag_k.phase_a = wrap_two_pi(theta + delta);
    p.tag_k.phase_b = 0.0;
    const int click_j = conditional_click(kappa, kappa, theta, rng);
    const int click_k = conditional_click(kappa, kappa, theta + delta, rng);
    p.det_j.clicked_l = click_j == 0;
    p.det_j.clicked_r = click_j == 1;
    p.det_k.clicked_l = click_k == 0;
    p.det_k.clicked_r = click_k == 1;
    const SiftResult r = sift_x_pair(p, delta_f, clock, 16);
    if (r.kept) {
      ++out.kept;
      if (r.is_error) ++out.errors;
    }
  }
  return out;
}

}  // namespace mpqkd::test
