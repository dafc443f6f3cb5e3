#include <deque>

#include "doctest.h"
#include "mpqkd/pairing.hpp"
#include "support.hpp"

using namespace mpqkd;

namespace {

RoundTag tag(IntensityClass a, IntensityClass b) {
  RoundTag t;
  t.intensity_a = a;
  t.intensity_b = b;
  return t;
}

DetectionRecord det(bool l, bool r) { return DetectionRecord{l, r}; }

// Independent filter re-evaluation via a class-pair lookup table.
std::vector<std::uint8_t> filter_oracle(
    const std::vector<RoundTag>& tags,
    const std::vector<DetectionRecord>& dets) {
  bool blocked[3][3] = {};
  blocked[0][1] = true;  // (Signal, Decoy)
  blocked[1][0] = true;  // (Decoy, Signal)
  std::vector<std::uint8_t> out(tags.size());
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const bool c = dets[i].clicked_l != dets[i].clicked_r;
    out[i] = (c && !blocked[static_cast<int>(tags[i].intensity_a)]
                           [static_cast<int>(tags[i].intensity_b)])
                 ? 1
                 : 0;
  }
  return out;
}

// Brute-force pairing reference: repeatedly take the two earliest effective
// rounds, pair them when close enough, else discard the earliest.
std::vector<std::pair<std::uint64_t, std::uint64_t>> pairing_oracle(
    const std::vector<std::uint8_t>& mask, std::uint32_t l_max) {
  std::deque<std::uint64_t> pending;
  for (std::uint64_t j = 0; j < mask.size(); ++j)
    if (mask[j]) pending.push_back(j);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
  while (pending.size() >= 2) {
    if (pending[1] - pending[0] <= l_max) {
      out.emplace_back(pending[0], pending[1]);
      pending.pop_front();
      pending.pop_front();
    } else {
      pending.pop_front();
    }
  }
  return out;
}

}  // namespace

TEST_CASE("mixed signal/decoy rounds are filtered even when clicked") {
  std::vector<RoundTag> tags = {
      tag(IntensityClass::Signal, IntensityClass::Decoy),
      tag(IntensityClass::Decoy, IntensityClass::Signal),
      tag(IntensityClass::Signal, IntensityClass::Signal),
      tag(IntensityClass::Signal, IntensityClass::Signal),
      tag(IntensityClass::Decoy, IntensityClass::Vacuum)};
  std::vector<DetectionRecord> dets = {det(true, false), det(false, true),
                                       det(true, true), det(false, false),
                                       det(true, false)};
  FilterMask m = filter_rounds(tags, dets);
  CHECK(m.c_prime == std::vector<std::uint8_t>{0, 0, 0, 0, 1});
}

TEST_CASE("filter rejects length mismatch") {
  std::vector<RoundTag> tags(3);
  std::vector<DetectionRecord> dets(2);
  CHECK_THROWS_AS(filter_rounds(tags, dets), std::invalid_argument);
}

TEST_CASE("adjacent effective rounds pair up greedily") {
  FilterMask m;
  m.c_prime = {0, 1, 1, 1, 1};
  auto pairs = pair_rounds(m, 1);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0] == std::pair<std::uint64_t, std::uint64_t>{1, 2});
  CHECK(pairs[1] == std::pair<std::uint64_t, std::uint64_t>{3, 4});
}

TEST_CASE("stale opener is replaced, not paired") {
  for (std::uint32_t l_max : {1u, 5u, 100u}) {
    FilterMask m;
    m.c_prime.assign(l_max + 3, 0);
    m.c_prime[1] = 1;
    m.c_prime[1 + l_max + 1] = 1;
    CHECK(pair_rounds(m, l_max).empty());
  }
}

TEST_CASE("all-zero mask yields no pairs") {
  FilterMask m;
  m.c_prime.assign(1000, 0);
  CHECK(pair_rounds(m, 16).empty());
}

TEST_CASE("filter matches an independent per-round oracle") {
  Rng rng(2024);
  std::vector<RoundTag> tags(10000);
  std::vector<DetectionRecord> dets(10000);
  for (std::size_t i = 0; i < tags.size(); ++i) {
    tags[i] = tag(static_cast<IntensityClass>(rng.next_u64() % 3),
                  static_cast<IntensityClass>(rng.next_u64() % 3));
    dets[i] = det(rng.bernoulli(0.3), rng.bernoulli(0.3));
  }
  FilterMask m = filter_rounds(tags, dets);
  CHECK(m.c_prime == filter_oracle(tags, dets));
}

TEST_CASE("pairing matches brute force on random instances") {
  Rng rng(7);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::uint32_t l_max = 1 + trial % 64;
    const std::size_t len = 32 + rng.next_u64() % 256;
    FilterMask m;
    m.c_prime.resize(len);
    const double density = rng.uniform(0.02, 0.6);
    for (auto& c : m.c_prime) c = rng.bernoulli(density) ? 1 : 0;
    CHECK(pair_rounds(m, l_max) == pairing_oracle(m.c_prime, l_max));
  }
}

TEST_CASE("pairing output structure: disjoint, ordered, within gap") {
  Rng rng(8);
  FilterMask m;
  m.c_prime.resize(5000);
  for (auto& c : m.c_prime) c = rng.bernoulli(0.1) ? 1 : 0;
  const std::uint32_t l_max = 13;
  auto pairs = pair_rounds(m, l_max);
  std::uint64_t prev = 0;
  bool first = true;
  for (auto& [j, k] : pairs) {
    CHECK(j < k);
    CHECK(k - j <= l_max);
    CHECK(m.c_prime[j] == 1);
    CHECK(m.c_prime[k] == 1);
    if (!first) CHECK(j > prev);
    prev = k;
    first = false;
  }
}

TEST_CASE("pair count is monotone in l_max") {
  Rng rng(9);
  FilterMask m;
  m.c_prime.resize(4000);
  for (auto& c : m.c_prime) c = rng.bernoulli(0.05) ? 1 : 0;
  std::size_t prev = 0;
  for (std::uint32_t l_max = 1; l_max <= 64; ++l_max) {
    const std::size_t n = pair_rounds(m, l_max).size();
    CHECK(n >= prev);
    prev = n;
  }
}

TEST_CASE("make_pair_records carries tags, clicks and the offset") {
  std::vector<RoundTag> tags = {
      tag(IntensityClass::Signal, IntensityClass::Vacuum),
      tag(IntensityClass::Vacuum, IntensityClass::Signal)};
  std::vector<DetectionRecord> dets = {det(true, false), det(false, true)};
  std::vector<std::pair<std::uint64_t, std::uint64_t>> idx = {{0, 1}};
  auto records = make_pair_records(tags, dets, idx, 1000);
  REQUIRE(records.size() == 1);
  CHECK(records[0].j == 1000);
  CHECK(records[0].k == 1001);
  CHECK(records[0].tag_j.intensity_a == IntensityClass::Signal);
  CHECK(records[0].det_k.clicked_r);
}
