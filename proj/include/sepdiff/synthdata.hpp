#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "sepdiff/audio_buffer.hpp"
#include "sepdiff/kv_config.hpp"

namespace sepdiff {

/// Synthetic vocal / accompaniment dataset description.
struct SynthSpec {
  int track_count = 64;
  int test_track_count = 16;
  double duration_s = 12.0;
  int sample_rate = 44100;
  int channels = 2;
  // Voice.
  double f0_min_hz = 120.0;
  double f0_max_hz = 480.0;
  int partials = 48;
  double vibrato_rate_hz = 5.5;
  double vibrato_depth_semitones = 0.3;
  double attack_s = 0.02;
  double release_s = 0.08;
  double min_silence_fraction = 0.12;
  // Accompaniment.
  double noise_gain = 0.3;
  double pad_gain = 1.0;
  double snr_db_min = -5.0;
  double snr_db_max = 5.0;
  std::uint64_t seed = 0;

  void validate() const;
  KeyValues to_kv() const;
  static SynthSpec from_kv(const KeyValues& kv);
};

struct SynthTrack {
  AudioBuffer vocals;
  AudioBuffer accompaniment;
  AudioBuffer mixture;
  /// Vocal-to-accompaniment energy ratio the track was scaled to.
  double snr_db = 0.0;
};

/// Track `index` of `split` ("train" or "test"); depends only on `spec`
/// and these two arguments.
SynthTrack synthesize_track(const SynthSpec& spec, const std::string& split, int index);

/// Writes `<out>/{train,test}/track_NNN/{mixture,vocals}.wav` as float32 and
/// the dataset description as `<out>/synth.cfg`.
void synthesize(const SynthSpec& spec, const std::filesystem::path& out);

}  // namespace sepdiff
