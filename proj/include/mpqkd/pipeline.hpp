#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "mpqkd/estimate.hpp"
#include "mpqkd/model.hpp"

namespace mpqkd {

// Per-pair frequency correction source: sliding FFT estimates from the
// simulated reference channel, or the configured beat center (no reference
// channel simulated; used where the frequency path is irrelevant).
enum class FreqMode { Estimated, FixedCenter };

struct RunOptions {
  std::uint64_t seed = 1;
  std::uint32_t n_blocks = 1;
  FreqMode freq_mode = FreqMode::Estimated;
  // 0 = auto: MPQKD_THREADS env var, else hardware concurrency.
  unsigned threads = 0;
  // When set, detection records (+ phase/truth sidecars, and reference bins
  // in Estimated mode) stream to this path; forces sequential blocks.
  std::optional<std::string> record_path;
};

struct RunReport {
  std::uint64_t n_total = 0;
  std::uint32_t n_blocks = 0;
  TallyTable tallies;
  std::uint64_t n_pairs = 0;

  EstimationResult est;
  bool estimation_failed = false;
  std::string estimation_error;
  SkrResult skr;

  // Point-estimate chain (no concentration corrections): a statistical
  // summary for desk-scale runs, not a security-grade bound.
  EstimationResult point;
  bool point_failed = false;
  SkrResult skr_point;

  double plob_bpp = 0.0;
  double skr_over_plob = 0.0;

  // frequency-reference diagnostics
  FreqMode freq_mode = FreqMode::FixedCenter;
  std::uint64_t n_windows = 0;
  double mean_estimated_delta_f_hz = 0.0;

  // simulation-only ground truth (absent on replay without a truth sidecar)
  bool truth_available = false;
  std::uint64_t true_n11_z = 0;

  bool phases_available = true;
};

struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::uint32_t n_blocks = 0;
  std::uint64_t n_total = 0;
  std::string engine = "mpqkd 1.0";
  std::string created_utc;  // excluded from reports to keep them reproducible
};

// Simulate -> frequency-reference -> pair -> sift -> tally -> estimate.
// Pairing restarts at block boundaries; tallies accumulate additively.
// Reports are byte-identical for equal (cfg, seed, n_blocks, freq_mode),
// regardless of worker count.
RunReport run_experiment(const SystemConfig& cfg, const RunOptions& options);

// Same chain applied to a recorded event file. Frequency corrections come
// from the <path>.refbins sidecar when present, else the configured beat
// center. Without a phase sidecar X pairs cannot be sifted and the X-basis
// tallies stay zero (flagged in the report).
RunReport replay_records(const std::string& path, const SystemConfig& cfg);

std::string report_to_json(const RunReport& report, const SystemConfig& cfg);
std::string manifest_to_json(const RunManifest& manifest);
RunManifest make_manifest(const SystemConfig& cfg, const RunOptions& options,
                          std::uint64_t n_total);

std::string config_hash(const SystemConfig& cfg);

}  // namespace mpqkd
