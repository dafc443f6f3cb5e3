#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mpqkd/model.hpp"
#include "mpqkd/sim.hpp"

namespace mpqkd {

// Detection-record file, little-endian:
//   header: magic "MPQK", version u16, N u64, clock_hz u64
//   per round one byte: bits 0-1 Alice class, 2-3 Bob class, 4 L, 5 R
// Optional sidecars alongside <path>:
//   <path>.phases  - f64 pairs (phase_a, phase_b) per round
//   <path>.truth   - u16 pairs (photons_a, photons_b) per round
//   <path>.refbins - magic "MPQR", version u16, bin_ns u32, n_bins u64,
//                    then u16 counts per bin
inline constexpr std::uint16_t kRecordFormatVersion = 1;

struct RecordData {
  std::uint64_t clock_hz = 0;
  std::vector<RoundTag> tags;  // phases zero unless the sidecar was present
  std::vector<DetectionRecord> detections;
  std::vector<GroundTruth> truth;            // empty unless sidecar present
  bool has_phases = false;
};

class RecordWriter {
 public:
  RecordWriter(const std::string& path, std::uint64_t clock_hz,
               bool with_phases, bool with_truth);
  ~RecordWriter();
  RecordWriter(const RecordWriter&) = delete;
  RecordWriter& operator=(const RecordWriter&) = delete;

  void append(std::span<const RoundTag> tags,
              std::span<const DetectionRecord> detections,
              std::span<const GroundTruth> truth = {});
  // Rewrites the header with the final round count and closes the streams.
  void finish();

 private:
  struct Impl;
  Impl* impl_;
};

RecordData read_records(const std::string& path);

void write_records(const std::string& path, std::uint64_t clock_hz,
                   std::span<const RoundTag> tags,
                   std::span<const DetectionRecord> detections,
                   std::span<const GroundTruth> truth = {},
                   bool with_phases = true);

// Reference-bin sidecar (or standalone bin file).
void write_ref_bins(const std::string& path,
                    std::span<const std::uint32_t> bins, double bin_ns);
std::vector<std::uint32_t> read_ref_bins(const std::string& path,
                                         double* bin_ns_out);

// Plain-text export for small runs: one row per round.
void records_to_csv(std::ostream& out, std::span<const RoundTag> tags,
                    std::span<const DetectionRecord> detections);

}  // namespace mpqkd
