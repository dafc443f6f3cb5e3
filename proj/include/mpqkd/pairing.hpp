#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mpqkd/model.hpp"

namespace mpqkd {

// Per-round pairing eligibility after the mixed-intensity filter.
struct FilterMask {
  std::vector<std::uint8_t> c_prime;
};

// c_prime[j] = 0 when the round used (Signal, Decoy) or (Decoy, Signal)
// across the two parties, else L XOR R. Throws std::invalid_argument on
// length mismatch.
FilterMask filter_rounds(std::span<const RoundTag> tags,
                         std::span<const DetectionRecord> detections);

// Greedy left-to-right pairing of effective rounds: the first unpaired
// effective round opens a pair; the next effective round closes it when the
// gap is within l_max, otherwise it replaces the opener. A trailing unmatched
// opener is dropped.
std::vector<std::pair<std::uint64_t, std::uint64_t>> pair_rounds(
    const FilterMask& mask, std::uint32_t l_max);

std::vector<PairRecord> make_pair_records(
    std::span<const RoundTag> tags, std::span<const DetectionRecord> detections,
    std::span<const std::pair<std::uint64_t, std::uint64_t>> index_pairs,
    std::uint64_t index_offset = 0);

}  // namespace mpqkd
