#include "mpqkd/pipeline.hpp"

#include <atomic>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mpqkd/freqref.hpp"
#include "mpqkd/pairing.hpp"
#include "mpqkd/records.hpp"
#include "mpqkd/sim.hpp"
#include "mpqkd/siftmap.hpp"

namespace mpqkd {

namespace {

constexpr double kRefBinNs = 1.0;
constexpr std::uint64_t kChannelStream = 0x6368616eULL;  // sub-stream tags
constexpr std::uint64_t kRoundStream = 0x726f756eULL;
constexpr std::uint64_t kRefStream = 0x72656662ULL;

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MPQKD_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

struct BlockStats {
  TallyTable tallies;
  std::uint64_t n_pairs = 0;
  std::uint64_t true_n11_z = 0;
  double sum_delta_f = 0.0;
  std::uint64_t n_windows = 0;
};

// Classify and tally pairs; counts ground-truth (1,1)-photon Z pairs when
// photon tags are available.
BlockStats process_pairs(const SystemConfig& cfg,
                         const std::vector<PairRecord>& pairs,
                         const std::vector<GroundTruth>& truth,
                         std::uint64_t first_round, const BeatTable* beats,
                         bool phases_available) {
  BlockStats res;
  res.n_pairs = pairs.size();
  for (const auto& pair : pairs) {
    const BasisClass basis = assign_basis(pair);
    if (basis.is_x() && !phases_available) continue;
    double delta_f = cfg.beat_center_hz;
    if (beats && basis.is_x())
      delta_f = beats->delta_f_at(static_cast<double>(pair.k) / cfg.clock_hz);
    add_pair_to_tallies(res.tallies, pair, delta_f, cfg.clock_hz, cfg.m_slices);
    if (basis.is_z() && !truth.empty()) {
      const auto& tj = truth[pair.j - first_round];
      const auto& tk = truth[pair.k - first_round];
      if (tj.photons_a + tk.photons_a == 1 && tj.photons_b + tk.photons_b == 1)
        ++res.true_n11_z;
    }
  }
  return res;
}

struct BlockOutput {
  BlockStats stats;
  SimBlock sim;                     // only filled when keep_raw
  std::vector<std::uint32_t> bins;  // only filled when keep_raw + Estimated
};

BlockOutput process_block(const SystemConfig& cfg, const ChannelTrace& trace,
                          std::uint32_t block_index, std::uint64_t seed,
                          FreqMode freq_mode, bool keep_raw) {
  BlockOutput out;
  const std::uint64_t first =
      static_cast<std::uint64_t>(block_index) * cfg.n_rounds;
  SimBlock block = simulate_rounds(
      cfg, trace, first, cfg.n_rounds,
      seed_stream(seed, kRoundStream, block_index));

  const double t0 = static_cast<double>(first) / cfg.clock_hz;
  const double duration = static_cast<double>(cfg.n_rounds) / cfg.clock_hz;
  BeatTable beats;
  if (freq_mode == FreqMode::Estimated && cfg.ref_rate_hz > 0.0 &&
      duration >= cfg.t_r_us * 1e-6) {
    auto bins = generate_reference_counts(
        trace, cfg.ref_rate_hz, cfg.t_r_us, kRefBinNs,
        seed_stream(seed, kRefStream, block_index), cfg.ref_visibility, t0,
        duration);
    auto estimates = sliding_estimates(bins, cfg.t_r_us, 2, kRefBinNs);
    out.stats.n_windows = estimates.size();
    for (const auto& e : estimates) out.stats.sum_delta_f += e.delta_f_hz;
    beats = BeatTable(std::move(estimates), cfg.t_r_us * 1e-6, t0);
    if (keep_raw) out.bins = std::move(bins);
  }
  // blocks shorter than one reference window fall back to the configured
  // beat center

  FilterMask mask = filter_rounds(block.tags, block.detections);
  auto index_pairs = pair_rounds(mask, cfg.l_max);
  auto pairs =
      make_pair_records(block.tags, block.detections, index_pairs, first);

  const BlockStats pair_stats = process_pairs(
      cfg, pairs, block.truth, first, beats.empty() ? nullptr : &beats, true);
  out.stats.tallies = pair_stats.tallies;
  out.stats.n_pairs = pair_stats.n_pairs;
  out.stats.true_n11_z = pair_stats.true_n11_z;
  if (keep_raw) out.sim = std::move(block);
  return out;
}

void fill_estimates(RunReport& report, const SystemConfig& cfg) {
  try {
    report.est = run_estimation(report.tallies, cfg, false);
    report.skr = secret_key_rate(report.est.n11_z_lower,
                                 report.est.e11_ph_upper, report.tallies, cfg,
                                 static_cast<double>(report.n_total));
  } catch (const EstimationError& e) {
    report.est = estimate_n11_z(report.tallies, cfg);
    report.estimation_failed = true;
    report.estimation_error = e.what();
    report.skr = SkrResult{};
  }
  try {
    report.point = run_estimation(report.tallies, cfg, true);
    report.skr_point = secret_key_rate(
        report.point.n11_z_lower, report.point.e11_ph_upper, report.tallies,
        cfg, static_cast<double>(report.n_total));
  } catch (const EstimationError&) {
    report.point_failed = true;
  }
  report.plob_bpp = plob_bound(cfg.total_loss_db());
  report.skr_over_plob =
      report.plob_bpp > 0.0 ? report.skr.bits_per_pulse / report.plob_bpp
                            : 0.0;
}

}  // namespace

RunReport run_experiment(const SystemConfig& cfg, const RunOptions& options) {
  validate_config(cfg);
  RunReport report;
  report.n_blocks = options.n_blocks;
  report.n_total = static_cast<std::uint64_t>(options.n_blocks) * cfg.n_rounds;
  report.freq_mode = options.freq_mode;
  report.truth_available = true;

  if (options.n_blocks > 0) {
    const double duration = static_cast<double>(report.n_total) / cfg.clock_hz;
    const ChannelTrace trace = build_channel_trace(
        cfg, duration, seed_stream(options.seed, kChannelStream));

    std::vector<BlockStats> results(options.n_blocks);
    if (options.record_path) {
      // sequential so record order matches round order
      RecordWriter writer(*options.record_path,
                          static_cast<std::uint64_t>(cfg.clock_hz),
                          /*with_phases=*/true, /*with_truth=*/true);
      std::vector<std::uint32_t> all_bins;
      for (std::uint32_t b = 0; b < options.n_blocks; ++b) {
        BlockOutput out = process_block(cfg, trace, b, options.seed,
                                        options.freq_mode, /*keep_raw=*/true);
        results[b] = out.stats;
        writer.append(out.sim.tags, out.sim.detections, out.sim.truth);
        all_bins.insert(all_bins.end(), out.bins.begin(), out.bins.end());
      }
      writer.finish();
      if (!all_bins.empty())
        write_ref_bins(*options.record_path + ".refbins", all_bins, kRefBinNs);
    } else {
      const unsigned n_threads = std::min<unsigned>(
          resolve_threads(options.threads), options.n_blocks);
      std::atomic<std::uint32_t> next{0};
      auto worker = [&]() {
        for (;;) {
          const std::uint32_t b = next.fetch_add(1);
          if (b >= options.n_blocks) break;
          results[b] = process_block(cfg, trace, b, options.seed,
                                     options.freq_mode, /*keep_raw=*/false)
                           .stats;
        }
      };
      if (n_threads <= 1) {
        worker();
      } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
      }
    }
    for (const auto& r : results) {  // ordered merge
      report.tallies += r.tallies;
      report.n_pairs += r.n_pairs;
      report.true_n11_z += r.true_n11_z;
      report.mean_estimated_delta_f_hz += r.sum_delta_f;
      report.n_windows += r.n_windows;
    }
    if (report.n_windows > 0)
      report.mean_estimated_delta_f_hz /= static_cast<double>(report.n_windows);
  }

  fill_estimates(report, cfg);
  return report;
}

RunReport replay_records(const std::string& path, const SystemConfig& cfg) {
  validate_config(cfg);
  RecordData data = read_records(path);
  RunReport report;
  report.n_blocks = 1;
  report.n_total = data.tags.size();
  report.phases_available = data.has_phases;
  report.truth_available = !data.truth.empty();

  SystemConfig replay_cfg = cfg;
  if (data.clock_hz > 0)
    replay_cfg.clock_hz = static_cast<double>(data.clock_hz);

  BeatTable beats;
  const std::string ref_path = path + ".refbins";
  if (std::filesystem::exists(ref_path)) {
    double bin_ns = kRefBinNs;
    auto bins = read_ref_bins(ref_path, &bin_ns);
    const double window_s = cfg.t_r_us * 1e-6;
    if (static_cast<double>(bins.size()) * bin_ns * 1e-9 >= window_s) {
      auto estimates = sliding_estimates(bins, cfg.t_r_us, 2, bin_ns);
      report.n_windows = estimates.size();
      for (const auto& e : estimates)
        report.mean_estimated_delta_f_hz += e.delta_f_hz;
      if (report.n_windows > 0)
        report.mean_estimated_delta_f_hz /=
            static_cast<double>(report.n_windows);
      beats = BeatTable(std::move(estimates), window_s, 0.0);
      report.freq_mode = FreqMode::Estimated;
    }
  }

  FilterMask mask = filter_rounds(data.tags, data.detections);
  auto index_pairs = pair_rounds(mask, cfg.l_max);
  auto pairs = make_pair_records(data.tags, data.detections, index_pairs, 0);
  const BlockStats res =
      process_pairs(replay_cfg, pairs, data.truth, 0,
                    beats.empty() ? nullptr : &beats, data.has_phases);
  report.tallies = res.tallies;
  report.n_pairs = res.n_pairs;
  report.true_n11_z = res.true_n11_z;

  fill_estimates(report, replay_cfg);
  return report;
}

namespace {

nlohmann::ordered_json tallies_json(const TallyTable& t) {
  nlohmann::ordered_json j;
  j["n_mu_mu"] = t.n_mu_mu;
  j["m_mu_mu"] = t.m_z;
  j["n_mu_o"] = t.n_mu_o;
  j["n_o_mu"] = t.n_o_mu;
  j["n_nu_nu"] = t.n_nu_nu;
  j["n_nu_o"] = t.n_nu_o;
  j["n_o_nu"] = t.n_o_nu;
  j["n_o_o"] = t.n_o_o;
  j["n_2nu_2nu"] = t.n_2nu_2nu;
  j["m_2nu_2nu"] = t.m_x;
  j["n_2nu_o"] = t.n_2nu_o;
  j["n_o_2nu"] = t.n_o_2nu;
  return j;
}

nlohmann::ordered_json estimation_json(const EstimationResult& e) {
  nlohmann::ordered_json j;
  j["n11_z_lower"] = e.n11_z_lower;
  j["e11_ph_upper"] = e.e11_ph_upper;
  j["n_mu"] = e.n_mu;
  j["n_nu"] = e.n_nu;
  j["alpha_11"] = e.alpha_11;
  j["m_2nu"] = e.m_2nu;
  j["m11_upper"] = e.m11_upper;
  j["n11_x_lower"] = e.n11_x_lower;
  j["e11_x_upper"] = e.e11_x_upper;
  j["s_a"] = e.s_a;
  j["s_b"] = e.s_b;
  j["n11_clamped"] = e.n11_clamped;
  j["e11_clamped"] = e.e11_clamped;
  return j;
}

nlohmann::ordered_json skr_json(const SkrResult& s) {
  nlohmann::ordered_json j;
  j["key_bits"] = s.key_bits;
  j["bits_per_pulse"] = s.bits_per_pulse;
  j["bits_per_second"] = s.bits_per_second;
  j["lambda_ec"] = s.lambda_ec;
  return j;
}

}  // namespace

std::string report_to_json(const RunReport& r, const SystemConfig& cfg) {
  nlohmann::ordered_json j;
  j["n_total"] = r.n_total;
  j["n_blocks"] = r.n_blocks;
  j["n_pairs"] = r.n_pairs;
  j["tallies"] = tallies_json(r.tallies);
  j["estimation"] = estimation_json(r.est);
  j["estimation_failed"] = r.estimation_failed;
  if (r.estimation_failed) j["estimation_error"] = r.estimation_error;
  j["skr"] = skr_json(r.skr);
  if (!r.point_failed) {
    // no concentration corrections; statistical summary only
    j["point_estimate"] = estimation_json(r.point);
    j["skr_point_estimate"] = skr_json(r.skr_point);
    j["skr_point_estimate"]["security_grade"] = false;
  }
  j["plob"]["total_loss_db"] = cfg.total_loss_db();
  j["plob"]["bits_per_pulse"] = r.plob_bpp;
  j["plob"]["skr_over_plob"] = r.skr_over_plob;
  j["frequency"]["mode"] =
      r.freq_mode == FreqMode::Estimated ? "estimated" : "fixed_center";
  j["frequency"]["n_windows"] = r.n_windows;
  j["frequency"]["mean_estimated_delta_f_hz"] = r.mean_estimated_delta_f_hz;
  j["ground_truth"]["available"] = r.truth_available;
  j["ground_truth"]["true_n11_z"] = r.true_n11_z;
  if (r.truth_available)
    j["ground_truth"]["n11_bound_holds"] =
        static_cast<double>(r.true_n11_z) >= r.est.n11_z_lower;
  j["phases_available"] = r.phases_available;
  j["assumptions"]["eps_cor"] = cfg.eps.cor;
  j["assumptions"]["eps_prime"] = cfg.eps.prime;
  j["assumptions"]["eps_hat"] = cfg.eps.hat;
  j["assumptions"]["eps_pa"] = cfg.eps.pa;
  j["assumptions"]["eps_upper"] = cfg.eps.upper;
  j["assumptions"]["eps_lower"] = cfg.eps.lower;
  j["assumptions"]["eps_e"] = cfg.eps.e;
  j["assumptions"]["f_ec"] = cfg.f_ec;
  j["assumptions"]["ec_leak_scale"] = cfg.ec_leak_scale;
  return j.dump(2) + "\n";
}

std::string config_hash(const SystemConfig& cfg) {
  const std::string text = serialize_config(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

RunManifest make_manifest(const SystemConfig& cfg, const RunOptions& options,
                          std::uint64_t n_total) {
  RunManifest m;
  m.config_hash = config_hash(cfg);
  m.seed = options.seed;
  m.n_blocks = options.n_blocks;
  m.n_total = n_total;
  char buf[64];
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  m.created_utc = buf;
  return m;
}

std::string manifest_to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["n_blocks"] = m.n_blocks;
  j["n_total"] = m.n_total;
  j["engine"] = m.engine;
  j["created_utc"] = m.created_utc;
  return j.dump(2) + "\n";
}

}  // namespace mpqkd
