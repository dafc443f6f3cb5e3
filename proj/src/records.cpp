#include "mpqkd/records.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace mpqkd {

namespace {

constexpr char kMagic[4] = {'M', 'P', 'Q', 'K'};
constexpr char kRefMagic[4] = {'M', 'P', 'Q', 'R'};

template <typename T>
void put_le(std::ofstream& out, T value) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::ifstream& in, const std::string& what, std::uint64_t offset) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T)))
    throw ParseError("record file truncated while reading " + what +
                     " at byte offset " + std::to_string(offset));
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    value |= static_cast<T>(buf[i]) << (8 * i);
  return value;
}

std::uint8_t pack_round(const RoundTag& tag, const DetectionRecord& det) {
  return static_cast<std::uint8_t>(
      (static_cast<unsigned>(tag.intensity_a) & 0x3u) |
      ((static_cast<unsigned>(tag.intensity_b) & 0x3u) << 2) |
      (det.clicked_l ? 0x10u : 0u) | (det.clicked_r ? 0x20u : 0u));
}

double f64_from_bits(std::uint64_t bits) {
  double d;
  std::memcpy(&d, &bits, sizeof(d));
  return d;
}

std::uint64_t bits_from_f64(double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof(bits));
  return bits;
}

}  // namespace

struct RecordWriter::Impl {
  std::string path;
  std::ofstream main;
  std::ofstream phases;
  std::ofstream truth;
  std::uint64_t clock_hz = 0;
  std::uint64_t rounds = 0;
  bool with_phases = false;
  bool with_truth = false;
  bool finished = false;
};

RecordWriter::RecordWriter(const std::string& path, std::uint64_t clock_hz,
                           bool with_phases, bool with_truth)
    : impl_(new Impl) {
  impl_->path = path;
  impl_->clock_hz = clock_hz;
  impl_->with_phases = with_phases;
  impl_->with_truth = with_truth;
  impl_->main.open(path, std::ios::binary | std::ios::trunc);
  if (!impl_->main) throw ParseError("cannot open for writing: " + path);
  impl_->main.write(kMagic, 4);
  put_le<std::uint16_t>(impl_->main, kRecordFormatVersion);
  put_le<std::uint64_t>(impl_->main, 0);  // N patched by finish()
  put_le<std::uint64_t>(impl_->main, clock_hz);
  if (with_phases) {
    impl_->phases.open(path + ".phases", std::ios::binary | std::ios::trunc);
    if (!impl_->phases)
      throw ParseError("cannot open for writing: " + path + ".phases");
  }
  if (with_truth) {
    impl_->truth.open(path + ".truth", std::ios::binary | std::ios::trunc);
    if (!impl_->truth)
      throw ParseError("cannot open for writing: " + path + ".truth");
  }
}

RecordWriter::~RecordWriter() {
  try {
    if (!impl_->finished) finish();
  } catch (...) {
  }
  delete impl_;
}

void RecordWriter::append(std::span<const RoundTag> tags,
                          std::span<const DetectionRecord> detections,
                          std::span<const GroundTruth> truth) {
  if (tags.size() != detections.size())
    throw ParseError("RecordWriter::append: length mismatch");
  std::vector<std::uint8_t> packed(tags.size());
  for (std::size_t i = 0; i < tags.size(); ++i)
    packed[i] = pack_round(tags[i], detections[i]);
  impl_->main.write(reinterpret_cast<const char*>(packed.data()),
                    static_cast<std::streamsize>(packed.size()));
  if (impl_->with_phases) {
    for (const auto& tag : tags) {
      put_le<std::uint64_t>(impl_->phases, bits_from_f64(tag.phase_a));
      put_le<std::uint64_t>(impl_->phases, bits_from_f64(tag.phase_b));
    }
  }
  if (impl_->with_truth) {
    if (truth.size() != tags.size())
      throw ParseError("RecordWriter::append: truth length mismatch");
    for (const auto& gt : truth) {
      put_le<std::uint16_t>(impl_->truth, gt.photons_a);
      put_le<std::uint16_t>(impl_->truth, gt.photons_b);
    }
  }
  impl_->rounds += tags.size();
}

void RecordWriter::finish() {
  if (impl_->finished) return;
  impl_->finished = true;
  impl_->main.seekp(6);  // magic + version
  put_le<std::uint64_t>(impl_->main, impl_->rounds);
  impl_->main.close();
  if (impl_->with_phases) impl_->phases.close();
  if (impl_->with_truth) impl_->truth.close();
}

void write_records(const std::string& path, std::uint64_t clock_hz,
                   std::span<const RoundTag> tags,
                   std::span<const DetectionRecord> detections,
                   std::span<const GroundTruth> truth, bool with_phases) {
  RecordWriter w(path, clock_hz, with_phases, !truth.empty());
  w.append(tags, detections, truth);
  w.finish();
}

RecordData read_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open record file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError(path + ": not a detection-record file (bad magic)");
  const auto version = get_le<std::uint16_t>(in, "version", 4);
  if (version != kRecordFormatVersion)
    throw ParseError(path + ": unsupported record version " +
                     std::to_string(version));
  const auto n = get_le<std::uint64_t>(in, "round count", 6);
  RecordData data;
  data.clock_hz = get_le<std::uint64_t>(in, "clock", 14);

  data.tags.resize(n);
  data.detections.resize(n);
  std::vector<std::uint8_t> packed(n);
  in.read(reinterpret_cast<char*>(packed.data()),
          static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n))
    throw ParseError(path + ": truncated round data at byte offset " +
                     std::to_string(22 + in.gcount()) + " (expected " +
                     std::to_string(22 + n) + " bytes)");
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint8_t b = packed[i];
    const unsigned cls_a = b & 0x3u;
    const unsigned cls_b = (b >> 2) & 0x3u;
    if (cls_a > 2 || cls_b > 2)
      throw ParseError(path + ": invalid intensity class in round " +
                       std::to_string(i));
    data.tags[i].intensity_a = static_cast<IntensityClass>(cls_a);
    data.tags[i].intensity_b = static_cast<IntensityClass>(cls_b);
    data.detections[i].clicked_l = (b & 0x10u) != 0;
    data.detections[i].clicked_r = (b & 0x20u) != 0;
  }

  const std::string phase_path = path + ".phases";
  if (std::filesystem::exists(phase_path)) {
    std::ifstream ph(phase_path, std::ios::binary);
    if (!ph) throw ParseError("cannot open sidecar: " + phase_path);
    for (std::uint64_t i = 0; i < n; ++i) {
      data.tags[i].phase_a = f64_from_bits(
          get_le<std::uint64_t>(ph, "phase_a", i * 16));
      data.tags[i].phase_b = f64_from_bits(
          get_le<std::uint64_t>(ph, "phase_b", i * 16 + 8));
    }
    data.has_phases = true;
  }

  const std::string truth_path = path + ".truth";
  if (std::filesystem::exists(truth_path)) {
    std::ifstream tr(truth_path, std::ios::binary);
    if (!tr) throw ParseError("cannot open sidecar: " + truth_path);
    data.truth.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      data.truth[i].photons_a = get_le<std::uint16_t>(tr, "photons_a", i * 4);
      data.truth[i].photons_b =
          get_le<std::uint16_t>(tr, "photons_b", i * 4 + 2);
    }
  }
  return data;
}

void write_ref_bins(const std::string& path,
                    std::span<const std::uint32_t> bins, double bin_ns) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out.write(kRefMagic, 4);
  put_le<std::uint16_t>(out, kRecordFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(std::llround(bin_ns)));
  put_le<std::uint64_t>(out, bins.size());
  for (auto c : bins)
    put_le<std::uint16_t>(out,
                          static_cast<std::uint16_t>(std::min(c, 0xffffu)));
}

std::vector<std::uint32_t> read_ref_bins(const std::string& path,
                                         double* bin_ns_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open reference-bin file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kRefMagic, 4) != 0)
    throw ParseError(path + ": not a reference-bin file (bad magic)");
  const auto version = get_le<std::uint16_t>(in, "version", 4);
  if (version != kRecordFormatVersion)
    throw ParseError(path + ": unsupported reference-bin version " +
                     std::to_string(version));
  const auto bin_ns = get_le<std::uint32_t>(in, "bin width", 6);
  const auto n = get_le<std::uint64_t>(in, "bin count", 10);
  std::vector<std::uint32_t> bins(n);
  for (std::uint64_t i = 0; i < n; ++i)
    bins[i] = get_le<std::uint16_t>(in, "bin", 18 + i * 2);
  if (bin_ns_out) *bin_ns_out = bin_ns;
  return bins;
}

void records_to_csv(std::ostream& out, std::span<const RoundTag> tags,
                    std::span<const DetectionRecord> detections) {
  out << "round,class_a,class_b,phase_a,phase_b,clicked_l,clicked_r\n";
  static const char* names[3] = {"signal", "decoy", "vacuum"};
  char buf[64];
  for (std::size_t i = 0; i < tags.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g", tags[i].phase_a,
                  tags[i].phase_b);
    out << i << ',' << names[static_cast<int>(tags[i].intensity_a)] << ','
        << names[static_cast<int>(tags[i].intensity_b)] << ',' << buf << ','
        << (detections[i].clicked_l ? 1 : 0) << ','
        << (detections[i].clicked_r ? 1 : 0) << '\n';
  }
}

}  // namespace mpqkd
