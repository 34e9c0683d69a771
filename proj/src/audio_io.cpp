#include "sepdiff/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sepdiff/error.hpp"
#include "sepdiff/file_util.hpp"

namespace sepdiff {

namespace fs = std::filesystem;

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const unsigned char* p) {
  return std::uint16_t(p[0] | (p[1] << 8));
}
std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(v & 0xFF);
  out.push_back(v >> 8);
}
void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}
void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

struct WavHeader {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
  std::size_t data_offset = 0;
  std::size_t data_size = 0;
};

std::vector<unsigned char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

WavHeader parse_header(const std::vector<unsigned char>& bytes,
                       const fs::path& path) {
  const std::string where = path.string();
  if (bytes.size() < 12) fail(ErrorCode::CorruptFile, where + ": truncated RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail(ErrorCode::UnsupportedFormat, where + ": not a RIFF/WAVE file");
  }
  WavHeader h;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) {
        fail(ErrorCode::CorruptFile, where + ": truncated fmt chunk");
      }
      h.format = le16(bytes.data() + body);
      h.channels = le16(bytes.data() + body + 2);
      h.sample_rate = le32(bytes.data() + body + 4);
      h.bits = le16(bytes.data() + body + 14);
      if (h.format == kFormatExtensible) {
        if (size < 40) fail(ErrorCode::CorruptFile, where + ": short extensible fmt");
        h.format = le16(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) fail(ErrorCode::CorruptFile, where + ": data before fmt");
      if (body + size > bytes.size()) {
        fail(ErrorCode::CorruptFile, where + ": data chunk truncated");
      }
      h.data_offset = body;
      h.data_size = size;
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) fail(ErrorCode::CorruptFile, where + ": missing fmt chunk");
  if (h.data_offset == 0) fail(ErrorCode::CorruptFile, where + ": missing data chunk");

  const bool supported = (h.format == kFormatPcm && (h.bits == 16 || h.bits == 24)) ||
                         (h.format == kFormatFloat && h.bits == 32);
  if (!supported) {
    fail(ErrorCode::UnsupportedFormat,
         where + ": unsupported encoding (format " + std::to_string(h.format) +
             ", " + std::to_string(h.bits) + " bits)");
  }
  if (h.channels == 0 || h.sample_rate == 0) {
    fail(ErrorCode::CorruptFile, where + ": zero channels or sample rate");
  }
  const std::size_t frame = std::size_t(h.channels) * (h.bits / 8);
  if (h.data_size % frame != 0) {
    fail(ErrorCode::CorruptFile, where + ": partial sample frame in data chunk");
  }
  return h;
}

}  // namespace

AudioBuffer read_wav(const fs::path& path) {
  const auto bytes = slurp(path);
  const WavHeader h = parse_header(bytes, path);
  const std::size_t width = h.bits / 8;
  const std::size_t frames = h.data_size / (width * h.channels);
  if (frames == 0) fail(ErrorCode::CorruptFile, path.string() + ": no samples");

  AudioBuffer out(h.channels, frames, double(h.sample_rate));
  const unsigned char* p = bytes.data() + h.data_offset;
  for (std::size_t n = 0; n < frames; ++n) {
    for (std::size_t c = 0; c < h.channels; ++c, p += width) {
      float v = 0.0f;
      if (h.format == kFormatFloat) {
        const std::uint32_t bits = le32(p);
        std::memcpy(&v, &bits, sizeof v);
      } else if (h.bits == 16) {
        v = float(std::int16_t(le16(p))) * 0x1p-15f;
      } else {
        std::int32_t s = std::int32_t(p[0] | (p[1] << 8) | (p[2] << 16));
        if (s & 0x800000) s -= 0x1000000;
        v = float(s) * 0x1p-23f;
      }
      out.at(c, n) = v;
    }
  }
  return out;
}

void write_wav(const fs::path& path, const AudioBuffer& buffer,
               WavFormat format) {
  if (buffer.empty()) fail(ErrorCode::InvalidArgument, "refusing to write an empty WAV");
  const std::uint16_t bits = format == WavFormat::Pcm16 ? 16 : 32;
  const std::uint16_t channels = std::uint16_t(buffer.channels());
  const auto rate = std::uint32_t(std::lround(buffer.sample_rate()));
  const std::uint32_t data_size =
      std::uint32_t(buffer.length() * channels * (bits / 8));

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, format == WavFormat::Pcm16 ? kFormatPcm : kFormatFloat);
  put16(out, channels);
  put32(out, rate);
  put32(out, rate * channels * (bits / 8));
  put16(out, std::uint16_t(channels * (bits / 8)));
  put16(out, bits);
  put_tag(out, "data");
  put32(out, data_size);
  for (std::size_t n = 0; n < buffer.length(); ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const float v = buffer.at(c, n);
      if (format == WavFormat::Pcm16) {
        const double q = std::clamp(std::nearbyint(double(v) * 32768.0),
                                    -32768.0, 32767.0);
        put16(out, std::uint16_t(std::int16_t(q)));
      } else {
        std::uint32_t raw = 0;
        std::memcpy(&raw, &v, sizeof raw);
        put32(out, raw);
      }
    }
  }

  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(out.data()),
                                       out.size()));
}

ScanResult scan_dataset(const fs::path& root, DatasetLayout) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    fail(ErrorCode::IoError, "dataset directory not found: " + root.string());
  }
  std::vector<fs::path> tracks;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) tracks.push_back(entry.path());
  }
  std::sort(tracks.begin(), tracks.end());

  ScanResult result;
  for (const auto& dir : tracks) {
    const std::string name = dir.filename().string();
    const fs::path mix = dir / "mixture.wav";
    const fs::path voc = dir / "vocals.wav";
    if (!fs::exists(mix) || !fs::exists(voc)) {
      result.warnings.push_back(name + ": missing " +
                                (fs::exists(mix) ? "vocals.wav" : "mixture.wav"));
      continue;
    }
    try {
      const auto mb = slurp(mix);
      const auto vb = slurp(voc);
      const WavHeader mh = parse_header(mb, mix);
      const WavHeader vh = parse_header(vb, voc);
      if (mh.sample_rate != vh.sample_rate) {
        result.warnings.push_back(name + ": sample rates differ (" +
                                  std::to_string(mh.sample_rate) + " vs " +
                                  std::to_string(vh.sample_rate) + ")");
        continue;
      }
      if (mh.channels != vh.channels) {
        result.warnings.push_back(name + ": channel counts differ");
        continue;
      }
      const std::size_t mf = mh.data_size / (mh.channels * (mh.bits / 8));
      const std::size_t vf = vh.data_size / (vh.channels * (vh.bits / 8));
      if ((mf > vf ? mf - vf : vf - mf) > 1) {
        result.warnings.push_back(name + ": lengths differ by more than one sample");
        continue;
      }
      result.items.push_back({name, mix, voc, double(std::min(mf, vf)) / mh.sample_rate});
    } catch (const Error& e) {
      result.warnings.push_back(name + ": " + e.what());
    }
  }
  if (result.items.empty()) {
    fail(ErrorCode::EmptyDataset, "no usable tracks under " + root.string());
  }
  return result;
}

TrackPair load_pair(const DatasetItem& item, std::size_t channels) {
  AudioBuffer mix = read_wav(item.mixture_path);
  AudioBuffer voc = read_wav(item.target_path);
  if (mix.sample_rate() != voc.sample_rate() || mix.channels() != voc.channels()) {
    fail(ErrorCode::InvalidArgument, item.name + ": mixture and target disagree");
  }
  const std::size_t n = std::min(mix.length(), voc.length());
  if (mix.length() != n) mix = mix.slice(0, n);
  if (voc.length() != n) voc = voc.slice(0, n);
  if (channels != 0) {
    mix = match_channels(mix, channels);
    voc = match_channels(voc, channels);
  }
  return {item.name, std::move(mix), std::move(voc)};
}

}  // namespace sepdiff
