#include "sepdiff/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

#include "sepdiff/audio_io.hpp"
#include "sepdiff/error.hpp"
#include "sepdiff/file_util.hpp"
#include "sepdiff/rng.hpp"

namespace sepdiff {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double hz_to_midi(double hz) { return 69.0 + 12.0 * std::log2(hz / 440.0); }
double midi_to_hz(double m) { return 440.0 * std::exp2((m - 69.0) / 12.0); }

/// sum_{k=1..count} gain(k) sin(k x) by the Chebyshev recurrence.
template <class Gain>
double harmonic_sum(double x, int count, Gain gain) {
  const double c2 = 2.0 * std::cos(x);
  double prev = 0.0, cur = std::sin(x), acc = 0.0;
  for (int k = 1; k <= count; ++k) {
    acc += gain(k) * cur;
    const double next = c2 * cur - prev;
    prev = cur;
    cur = next;
  }
  return acc;
}

double uniform(NoiseStream& rng, double lo, double hi) {
  return lo + (hi - lo) * rng.uniform();
}

struct Voice {
  std::vector<double> envelope;
  std::vector<double> midi;
};

Voice plan_voice(const SynthSpec& s, std::size_t n, NoiseStream& rng) {
  const double fs = s.sample_rate;
  const double lo = hz_to_midi(s.f0_min_hz), hi = hz_to_midi(s.f0_max_hz);
  Voice v;
  v.envelope.assign(n, 0.0);
  v.midi.assign(n, 0.0);
  double pitch = uniform(rng, lo, hi);
  std::size_t pos = std::min(std::size_t(uniform(rng, 0.1, 0.4) * fs), n / 4);
  std::fill(v.midi.begin(), v.midi.begin() + std::min(pos, n), pitch);
  const auto attack = std::max<std::size_t>(1, std::size_t(s.attack_s * fs));
  const auto release = std::max<std::size_t>(1, std::size_t(s.release_s * fs));
  const auto glide = std::max<std::size_t>(1, std::size_t(0.03 * fs));
  bool first = true;
  while (pos < n) {
    if (rng.bernoulli(0.25) && !first) {
      const std::size_t len = std::size_t(uniform(rng, 0.15, 0.6) * fs);
      const std::size_t end = std::min(n, pos + len);
      std::fill(v.midi.begin() + pos, v.midi.begin() + end, pitch);
      pos = end;
      continue;
    }
    const std::size_t len = std::size_t(uniform(rng, 0.2, 0.7) * fs);
    const double target = std::clamp(pitch + uniform(rng, -4.0, 4.0), lo, hi);
    const double amp = uniform(rng, 0.5, 1.0);
    for (std::size_t i = 0; i < len && pos + i < n; ++i) {
      const double g = i < glide ? double(i) / double(glide) : 1.0;
      v.midi[pos + i] = pitch + (target - pitch) * g;
      double e = 1.0;
      if (i < attack) e = double(i) / double(attack);
      if (len - i <= release) e = std::min(e, double(len - i - 1) / double(release));
      v.envelope[pos + i] = amp * 0.5 * (1.0 - std::cos(std::numbers::pi * e));
    }
    pitch = target;
    pos += len;
    first = false;
  }
  // Guarantee the minimum amount of exact silence by muting the tail.
  const auto silent = [&] {
    return std::size_t(std::count(v.envelope.begin(), v.envelope.end(), 0.0));
  };
  const auto need = std::size_t(std::ceil(s.min_silence_fraction * double(n)));
  if (silent() < need) {
    std::size_t cut = n;
    while (cut > 0 && silent() < need) {
      const std::size_t step = std::min<std::size_t>(cut, std::max<std::size_t>(1, need / 8));
      std::fill(v.envelope.begin() + (cut - step), v.envelope.begin() + cut, 0.0);
      cut -= step;
    }
    for (std::size_t i = 0; i < release && i < cut; ++i) {
      v.envelope[cut - 1 - i] *= double(i) / double(release);
    }
  }
  return v;
}

}  // namespace

void SynthSpec::validate() const {
  require(track_count >= 0 && test_track_count >= 0, "track counts must be nonnegative");
  require(duration_s > 0.0, "duration_s must be positive");
  require(sample_rate >= 8000, "sample_rate must be at least 8000 Hz");
  require(channels >= 1, "channels must be positive");
  require(f0_min_hz > 50.0 && f0_max_hz < 1000.0 && f0_min_hz <= f0_max_hz,
          "fundamental range must lie within (50, 1000) Hz");
  require(partials >= 1, "partials must be positive");
  require(vibrato_rate_hz >= 0.0 && vibrato_depth_semitones >= 0.0,
          "vibrato parameters must be nonnegative");
  require(attack_s >= 0.0 && release_s >= 0.0, "envelope times must be nonnegative");
  require(min_silence_fraction >= 0.0 && min_silence_fraction < 1.0,
          "min_silence_fraction must lie in [0, 1)");
  require(noise_gain >= 0.0 && pad_gain >= 0.0 && noise_gain + pad_gain > 0.0,
          "accompaniment gains must be nonnegative and not both zero");
  require(std::isfinite(snr_db_min) && std::isfinite(snr_db_max) && snr_db_min <= snr_db_max,
          "snr range must be finite and ordered");
}

KeyValues SynthSpec::to_kv() const {
  KeyValues kv;
  kv.set("track_count", (long long)track_count);
  kv.set("test_track_count", (long long)test_track_count);
  kv.set("duration_s", duration_s);
  kv.set("sample_rate", (long long)sample_rate);
  kv.set("channels", (long long)channels);
  kv.set("f0_min_hz", f0_min_hz);
  kv.set("f0_max_hz", f0_max_hz);
  kv.set("partials", (long long)partials);
  kv.set("vibrato_rate_hz", vibrato_rate_hz);
  kv.set("vibrato_depth_semitones", vibrato_depth_semitones);
  kv.set("attack_s", attack_s);
  kv.set("release_s", release_s);
  kv.set("min_silence_fraction", min_silence_fraction);
  kv.set("noise_gain", noise_gain);
  kv.set("pad_gain", pad_gain);
  kv.set("snr_db_min", snr_db_min);
  kv.set("snr_db_max", snr_db_max);
  kv.set("seed", (long long)seed);
  return kv;
}

SynthSpec SynthSpec::from_kv(const KeyValues& kv) {
  kv.require_known({"track_count", "test_track_count", "duration_s", "sample_rate",
                    "channels", "f0_min_hz", "f0_max_hz", "partials", "vibrato_rate_hz",
                    "vibrato_depth_semitones", "attack_s", "release_s",
                    "min_silence_fraction", "noise_gain", "pad_gain", "snr_db_min",
                    "snr_db_max", "seed"});
  SynthSpec d, s;
  s.track_count = int(kv.get_int("track_count", d.track_count));
  s.test_track_count = int(kv.get_int("test_track_count", d.test_track_count));
  s.duration_s = kv.get_double("duration_s", d.duration_s);
  s.sample_rate = int(kv.get_int("sample_rate", d.sample_rate));
  s.channels = int(kv.get_int("channels", d.channels));
  s.f0_min_hz = kv.get_double("f0_min_hz", d.f0_min_hz);
  s.f0_max_hz = kv.get_double("f0_max_hz", d.f0_max_hz);
  s.partials = int(kv.get_int("partials", d.partials));
  s.vibrato_rate_hz = kv.get_double("vibrato_rate_hz", d.vibrato_rate_hz);
  s.vibrato_depth_semitones =
      kv.get_double("vibrato_depth_semitones", d.vibrato_depth_semitones);
  s.attack_s = kv.get_double("attack_s", d.attack_s);
  s.release_s = kv.get_double("release_s", d.release_s);
  s.min_silence_fraction = kv.get_double("min_silence_fraction", d.min_silence_fraction);
  s.noise_gain = kv.get_double("noise_gain", d.noise_gain);
  s.pad_gain = kv.get_double("pad_gain", d.pad_gain);
  s.snr_db_min = kv.get_double("snr_db_min", d.snr_db_min);
  s.snr_db_max = kv.get_double("snr_db_max", d.snr_db_max);
  s.seed = std::uint64_t(kv.get_int("seed", (long long)d.seed));
  s.validate();
  return s;
}

SynthTrack synthesize_track(const SynthSpec& spec, const std::string& split, int index) {
  spec.validate();
  const double fs = spec.sample_rate;
  const auto n = std::size_t(std::llround(spec.duration_s * fs));
  const auto channels = std::size_t(spec.channels);
  NoiseStream rng = NoiseStream(spec.seed).substream("synth." + split, std::uint64_t(index));

  // Voice: one fundamental phase shared by all channels, offset per channel.
  const Voice plan = plan_voice(spec, n, rng);
  std::vector<double> offsets(channels, 0.0);
  for (std::size_t c = 1; c < channels; ++c) offsets[c] = uniform(rng, 0.0, kTwoPi);
  const double vib_phase = uniform(rng, 0.0, kTwoPi);
  std::vector<double> voice(channels * n, 0.0);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double vib = spec.vibrato_depth_semitones *
                       std::sin(kTwoPi * spec.vibrato_rate_hz * double(i) / fs + vib_phase);
    const double f0 = midi_to_hz(plan.midi[i] + vib);
    if (plan.envelope[i] > 0.0) {
      const int count = std::min(spec.partials, int(0.45 * fs / f0));
      for (std::size_t c = 0; c < channels; ++c) {
        voice[c * n + i] =
            plan.envelope[i] *
            harmonic_sum(phase + offsets[c], count, [](int k) { return 1.0 / k; });
      }
    }
    phase = std::fmod(phase + kTwoPi * f0 / fs, kTwoPi);
  }

  // Accompaniment: low-passed noise plus a sustained triad pad.
  std::vector<double> noise(channels * n), pad(channels * n, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    const double a = 1.0 - std::exp(-kTwoPi * uniform(rng, 800.0, 3000.0) / fs);
    double y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y += a * (rng.gaussian() - y);
      noise[c * n + i] = y;
    }
  }
  const auto ramp = std::max<std::size_t>(1, std::size_t(0.05 * fs));
  for (std::size_t start = 0; start < n;) {
    const std::size_t len = std::size_t(uniform(rng, 1.0, 2.0) * fs);
    const double root = std::floor(uniform(rng, 48.0, 60.0));
    const bool minor = rng.bernoulli(0.5);
    const double notes[3] = {root, root + (minor ? 3.0 : 4.0), root + 7.0};
    for (double note : notes) {
      const double f = midi_to_hz(note);
      const int count = std::min(8, int(0.45 * fs / f));
      std::vector<double> gains(channels);
      for (auto& g : gains) g = uniform(rng, 0.4, 1.0);
      double ph = uniform(rng, 0.0, kTwoPi);
      for (std::size_t i = 0; i < len && start + i < n; ++i) {
        double e = 1.0;
        if (i < ramp) e = double(i) / double(ramp);
        if (len - i <= ramp) e = std::min(e, double(len - i - 1) / double(ramp));
        const double v =
            e * harmonic_sum(ph, count, [](int k) { return 1.0 / (double(k) * k); });
        for (std::size_t c = 0; c < channels; ++c) pad[c * n + start + i] += gains[c] * v;
        ph = std::fmod(ph + kTwoPi * f / fs, kTwoPi);
      }
    }
    start += len;
  }
  const auto rms = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s / double(x.size()));
  };
  const double noise_rms = rms(noise), pad_rms = rms(pad);
  std::vector<double> acc(channels * n);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    acc[i] = spec.noise_gain * noise[i] / noise_rms + spec.pad_gain * pad[i] / pad_rms;
  }

  SynthTrack t;
  t.snr_db = uniform(rng, spec.snr_db_min, spec.snr_db_max);
  double ev = 0.0, ea = 0.0;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    ev += voice[i] * voice[i];
    ea += acc[i] * acc[i];
  }
  if (!(ev > 0.0 && ea > 0.0)) {
    fail(ErrorCode::InvalidArgument, "duration too short to place a vocal phrase");
  }
  const double vscale = std::sqrt(ea / ev * std::pow(10.0, t.snr_db / 10.0));
  double peak = 0.0;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    voice[i] *= vscale;
    peak = std::max(peak, std::abs(voice[i] + acc[i]));
  }
  const double gain = std::pow(10.0, -1.0 / 20.0) / peak;

  t.vocals = AudioBuffer(channels, n, fs);
  t.accompaniment = AudioBuffer(channels, n, fs);
  t.mixture = AudioBuffer(channels, n, fs);
  auto v = t.vocals.samples();
  auto a = t.accompaniment.samples();
  auto m = t.mixture.samples();
  for (std::size_t i = 0; i < acc.size(); ++i) {
    v[i] = float(voice[i] * gain);
    a[i] = float(acc[i] * gain);
    m[i] = v[i] + a[i];
  }
  return t;
}

void synthesize(const SynthSpec& spec, const std::filesystem::path& out) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + out.string() + ": " + ec.message());
  write_file_atomic(out / "synth.cfg", spec.to_kv().to_text());
  for (const auto& [split, count] :
       {std::pair<std::string, int>{"train", spec.track_count}, {"test", spec.test_track_count}}) {
    for (int i = 0; i < count; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "track_%03d", i);
      const auto dir = out / split / name;
      std::filesystem::create_directories(dir, ec);
      if (ec) fail(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
      const SynthTrack t = synthesize_track(spec, split, i);
      write_wav(dir / "mixture.wav", t.mixture, WavFormat::Float32);
      write_wav(dir / "vocals.wav", t.vocals, WavFormat::Float32);
    }
  }
}

}  // namespace sepdiff
