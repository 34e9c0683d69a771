#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sepdiff/audio_buffer.hpp"

namespace sepdiff {

enum class WavFormat { Pcm16, Float32 };

/// Reads RIFF/WAVE files holding 16- or 24-bit PCM or 32-bit IEEE float
/// samples (plain or WAVE_FORMAT_EXTENSIBLE). Integer samples are scaled by
/// 2^-(bits-1), so full-scale negative maps to exactly -1.
AudioBuffer read_wav(const std::filesystem::path& path);

/// Writes a canonical 44-byte-header WAV. Pcm16 rounds to nearest and clamps
/// to [-32768, 32767]; Float32 stores samples verbatim. The file is written
/// to a temporary sibling and renamed into place.
void write_wav(const std::filesystem::path& path, const AudioBuffer& buffer,
               WavFormat format);

struct DatasetItem {
  std::string name;
  std::filesystem::path mixture_path;
  std::filesystem::path target_path;
  double duration = 0.0;
};

struct ScanResult {
  std::vector<DatasetItem> items;
  std::vector<std::string> warnings;
};

enum class DatasetLayout { PairedSubdirs };

/// Collects `<root>/<track>/{mixture.wav, vocals.wav}` pairs in lexicographic
/// track order. Tracks that are incomplete, unreadable or mismatched are
/// skipped with a warning; pairs differing by one sample are accepted (the
/// excess is trimmed at load). Throws EmptyDataset if nothing is usable.
ScanResult scan_dataset(const std::filesystem::path& root,
                        DatasetLayout layout = DatasetLayout::PairedSubdirs);

/// Loaded and aligned pair. Both buffers are trimmed to the shorter length.
struct TrackPair {
  std::string name;
  AudioBuffer mixture;
  AudioBuffer target;
};

/// Loads a dataset item. When `channels` is nonzero, mono files are
/// duplicated to that channel count.
TrackPair load_pair(const DatasetItem& item, std::size_t channels = 0);

}  // namespace sepdiff
