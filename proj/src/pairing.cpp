#include "mpqkd/pairing.hpp"

#include <stdexcept>

namespace mpqkd {

FilterMask filter_rounds(std::span<const RoundTag> tags,
                         std::span<const DetectionRecord> detections) {
  if (tags.size() != detections.size())
    throw std::invalid_argument("filter_rounds: tag/detection length mismatch");
  FilterMask mask;
  mask.c_prime.resize(tags.size());
  for (std::size_t j = 0; j < tags.size(); ++j) {
    const auto a = tags[j].intensity_a;
    const auto b = tags[j].intensity_b;
    const bool mixed =
        (a == IntensityClass::Signal && b == IntensityClass::Decoy) ||
        (a == IntensityClass::Decoy && b == IntensityClass::Signal);
    mask.c_prime[j] = (!mixed && detections[j].effective()) ? 1 : 0;
  }
  return mask;
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> pair_rounds(
    const FilterMask& mask, std::uint32_t l_max) {
  if (l_max < 1) throw std::invalid_argument("pair_rounds: l_max must be >= 1");
  std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs;
  bool open = false;
  std::uint64_t front = 0;
  for (std::uint64_t j = 0; j < mask.c_prime.size(); ++j) {
    if (!mask.c_prime[j]) continue;
    if (!open) {
      front = j;
      open = true;
    } else if (j - front <= l_max) {
      pairs.emplace_back(front, j);
      open = false;
    } else {
      front = j;  // stale opener is replaced, not paired
    }
  }
  return pairs;
}

std::vector<PairRecord> make_pair_records(
    std::span<const RoundTag> tags, std::span<const DetectionRecord> detections,
    std::span<const std::pair<std::uint64_t, std::uint64_t>> index_pairs,
    std::uint64_t index_offset) {
  std::vector<PairRecord> out;
  out.reserve(index_pairs.size());
  for (auto& [j, k] : index_pairs) {
    PairRecord p;
    p.j = index_offset + j;
    p.k = index_offset + k;
    p.tag_j = tags[j];
    p.tag_k = tags[k];
    p.det_j = detections[j];
    p.det_k = detections[k];
    out.push_back(p);
  }
  return out;
}

}  // namespace mpqkd
