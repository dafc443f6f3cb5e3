#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mpqkd/estimate.hpp"
#include "mpqkd/freqref.hpp"
#include "mpqkd/model.hpp"
#include "mpqkd/pairing.hpp"
#include "mpqkd/pipeline.hpp"
#include "mpqkd/records.hpp"

namespace fs = std::filesystem;
using namespace mpqkd;

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

void emit_report(const RunReport& report, const SystemConfig& cfg,
                 const RunOptions& options, const std::string& out_dir) {
  const std::string report_json = report_to_json(report, cfg);
  if (out_dir.empty()) {
    std::cout << report_json;
    return;
  }
  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "report.json", report_json);
  write_file(fs::path(out_dir) / "tallies.json",
             tallies_to_json(report.tallies,
                             static_cast<double>(report.n_total)));
  write_file(fs::path(out_dir) / "manifest.json",
             manifest_to_json(make_manifest(cfg, options, report.n_total)));
  std::cout << "report: " << (fs::path(out_dir) / "report.json").string()
            << "\n";
  std::cout << "skr_bps: " << report.skr.bits_per_second << "\n";
}

std::vector<std::uint32_t> load_bins_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open bin file: " + path);
  std::vector<std::uint32_t> bins;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    bins.push_back(static_cast<std::uint32_t>(std::stoul(line)));
  }
  return bins;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mode-pairing QKD simulator and finite-key estimator"};
  app.require_subcommand(1);

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "run the Monte-Carlo chain");
  std::string sim_config, sim_out, sim_records, sim_freq_mode = "estimated";
  std::uint64_t sim_seed = 1;
  std::uint32_t sim_blocks = 1;
  std::uint64_t sim_rounds_override = 0;
  bool sim_csv = false;
  sim_cmd->add_option("--config", sim_config, "config file")->required();
  sim_cmd->add_option("--seed", sim_seed, "master seed");
  sim_cmd->add_option("--blocks", sim_blocks, "number of blocks");
  sim_cmd->add_option("--rounds", sim_rounds_override,
                      "override rounds per block");
  sim_cmd->add_option("--out", sim_out, "output directory for report files");
  sim_cmd->add_option("--records", sim_records,
                      "write detection records (+sidecars) to this path");
  sim_cmd->add_option("--freq-mode", sim_freq_mode,
                      "frequency correction source: estimated|fixed")
      ->check(CLI::IsMember({"estimated", "fixed"}));
  sim_cmd->add_flag("--csv", sim_csv,
                    "also export records as CSV (requires --records)");

  // replay
  auto* replay_cmd = app.add_subcommand("replay", "re-process recorded events");
  std::string replay_records_path, replay_config, replay_out;
  replay_cmd->add_option("--records", replay_records_path, "record file")
      ->required();
  replay_cmd->add_option("--config", replay_config, "config file")->required();
  replay_cmd->add_option("--out", replay_out, "output directory");

  // estimate
  auto* est_cmd = app.add_subcommand("estimate", "finite-key chain on tallies");
  std::string est_config, est_tallies, est_out;
  double est_n_total = 0.0;
  est_cmd->add_option("--config", est_config, "config file")->required();
  est_cmd->add_option("--tallies", est_tallies, "tally json file")->required();
  est_cmd->add_option("--n-total", est_n_total,
                      "override total round count N");
  est_cmd->add_option("--out", est_out, "output directory");

  // plob
  auto* plob_cmd = app.add_subcommand("plob", "repeaterless rate-loss limit");
  double plob_loss = 0.0;
  plob_cmd->add_option("--loss-db", plob_loss, "total loss in dB")->required();

  // freqest
  auto* freq_cmd = app.add_subcommand("freqest", "beat estimates from bins");
  std::string freq_bins;
  double freq_bin_ns = 1.0, freq_window_us = 500.0;
  int freq_pad = 2;
  freq_cmd->add_option("--bins", freq_bins, "bin file (one count per line)")
      ->required();
  freq_cmd->add_option("--bin-ns", freq_bin_ns, "bin width in ns");
  freq_cmd->add_option("--window-us", freq_window_us, "window length in us");
  freq_cmd->add_option("--pad", freq_pad, "zero-padding factor");

  // pair
  auto* pair_cmd = app.add_subcommand("pair", "pairing stats for records");
  std::string pair_records_path;
  std::uint32_t pair_l_max = 0;
  pair_cmd->add_option("--records", pair_records_path, "record file")
      ->required();
  pair_cmd->add_option("--l-max", pair_l_max,
                       "maximum pairing interval (rounds)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim_cmd) {
      SystemConfig cfg = load_config_file(sim_config);
      if (sim_rounds_override > 0) cfg.n_rounds = sim_rounds_override;
      validate_config(cfg);
      RunOptions options;
      options.seed = sim_seed;
      options.n_blocks = sim_blocks;
      options.freq_mode = sim_freq_mode == "fixed" ? FreqMode::FixedCenter
                                                   : FreqMode::Estimated;
      if (!sim_records.empty()) options.record_path = sim_records;
      RunReport report = run_experiment(cfg, options);
      if (sim_csv && !sim_records.empty()) {
        RecordData data = read_records(sim_records);
        std::ofstream csv(sim_records + ".csv");
        records_to_csv(csv, data.tags, data.detections);
      }
      emit_report(report, cfg, options, sim_out);
    } else if (*replay_cmd) {
      SystemConfig cfg = load_config_file(replay_config);
      validate_config(cfg);
      RunReport report = replay_records(replay_records_path, cfg);
      RunOptions options;  // replay has no seed/blocks of its own
      options.n_blocks = 1;
      emit_report(report, cfg, options, replay_out);
    } else if (*est_cmd) {
      SystemConfig cfg = load_config_file(est_config);
      validate_config(cfg);
      std::ifstream in(est_tallies);
      if (!in) throw ParseError("cannot open tally file: " + est_tallies);
      std::string text((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
      double n_total = 0.0;
      TallyTable tallies = tallies_from_json(text, &n_total);
      if (est_n_total > 0.0) n_total = est_n_total;
      RunReport report;
      report.tallies = tallies;
      report.n_total = static_cast<std::uint64_t>(n_total);
      report.n_blocks = 0;
      report.truth_available = false;
      try {
        report.est = run_estimation(tallies, cfg, false);
        report.skr = secret_key_rate(report.est.n11_z_lower,
                                     report.est.e11_ph_upper, tallies, cfg,
                                     n_total);
      } catch (const EstimationError& e) {
        report.est = estimate_n11_z(tallies, cfg);
        report.estimation_failed = true;
        report.estimation_error = e.what();
      }
      try {
        report.point = run_estimation(tallies, cfg, true);
        report.skr_point =
            secret_key_rate(report.point.n11_z_lower,
                            report.point.e11_ph_upper, tallies, cfg, n_total);
      } catch (const EstimationError&) {
        report.point_failed = true;
      }
      report.plob_bpp = plob_bound(cfg.total_loss_db());
      report.skr_over_plob = report.plob_bpp > 0.0
                                 ? report.skr.bits_per_pulse / report.plob_bpp
                                 : 0.0;
      RunOptions options;
      options.n_blocks = 0;
      emit_report(report, cfg, options, est_out);
    } else if (*plob_cmd) {
      std::cout << plob_bound(plob_loss) << "\n";
    } else if (*freq_cmd) {
      auto bins = load_bins_csv(freq_bins);
      auto estimates = sliding_estimates(bins, freq_window_us, freq_pad,
                                         freq_bin_ns);
      std::cout << "window_start_s,delta_f_hz,peak_magnitude\n";
      for (const auto& e : estimates)
        std::cout << e.window_start_s << ',' << e.delta_f_hz << ','
                  << e.peak_magnitude << '\n';
    } else if (*pair_cmd) {
      RecordData data = read_records(pair_records_path);
      const std::uint32_t l_max = pair_l_max > 0 ? pair_l_max : 10000;
      FilterMask mask = filter_rounds(data.tags, data.detections);
      std::uint64_t effective = 0;
      for (auto c : mask.c_prime) effective += c;
      auto pairs = pair_rounds(mask, l_max);
      std::uint64_t max_gap = 0;
      for (auto& [j, k] : pairs) max_gap = std::max(max_gap, k - j);
      std::cout << "rounds: " << data.tags.size() << "\n"
                << "effective: " << effective << "\n"
                << "l_max: " << l_max << "\n"
                << "pairs: " << pairs.size() << "\n"
                << "max_gap: " << max_gap << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
