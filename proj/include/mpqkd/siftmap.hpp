#pragma once

#include <cstdint>
#include <span>

#include "mpqkd/model.hpp"

namespace mpqkd {

// Per-party pair-level class from the multiset of the two intensity labels.
// MuO sums to mu (Z-eligible), NuNu to 2*nu (X-eligible), NuO to nu, OO to
// vacuum; every other combination is invalid for the tally.
enum class PairClass : std::uint8_t { MuO, NuNu, NuO, OO, Invalid };

struct BasisClass {
  PairClass a = PairClass::Invalid;
  PairClass b = PairClass::Invalid;
  bool is_z() const { return a == PairClass::MuO && b == PairClass::MuO; }
  bool is_x() const { return a == PairClass::NuNu && b == PairClass::NuNu; }
};

BasisClass assign_basis(const PairRecord& pair);

struct ZBits {
  int bit_a = 0;
  int bit_b = 0;
  bool is_error = false;
};

// Z key mapping: Alice's bit is 0 when her Signal sits in the first round of
// the pair, Bob's convention is the converse. Throws std::logic_error when
// the pair is not Z basis.
ZBits map_z_bits(const PairRecord& pair);

struct SiftResult {
  bool kept = false;
  bool is_error = false;
};

// Frequency-corrected X sifting. The corrected announced phase difference
//   Delta = delta_a - delta_b + (2*pi/F) * delta_f * (k - j)   (mod 2*pi)
// keeps the pair when it falls within half a slice (pi/M) of 0 or pi, so the
// acceptance fraction over uniform phases is 2/M. Near 0 the pair errs when
// the two rounds clicked different detectors (L_j = R_k); near pi when they
// clicked the same one (L_j = L_k). Throws std::logic_error on non-X pairs.
SiftResult sift_x_pair(const PairRecord& pair, double delta_f_hz,
                       double clock_hz, std::uint32_t m_slices);

// Tally accumulation over classified pairs; delta_f_per_pair supplies the
// frequency correction used for each pair's X sift.
TallyTable accumulate_tallies(std::span<const PairRecord> pairs,
                              std::span<const double> delta_f_per_pair,
                              double clock_hz, std::uint32_t m_slices);

// Constant-correction convenience overload.
TallyTable accumulate_tallies(std::span<const PairRecord> pairs,
                              double delta_f_hz, double clock_hz,
                              std::uint32_t m_slices);

// Streaming accumulator used by block processing; add() classifies one pair
// and updates the table.
void add_pair_to_tallies(TallyTable& t, const PairRecord& pair,
                         double delta_f_hz, double clock_hz,
                         std::uint32_t m_slices);

}  // namespace mpqkd
