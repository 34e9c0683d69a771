#include "sepdiff/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "sepdiff/error.hpp"

namespace sepdiff {

std::complex<double> Biquad::response(double omega) const {
  const std::complex<double> z1 = std::polar(1.0, -omega);
  const std::complex<double> z2 = z1 * z1;
  return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

bool Biquad::stable() const {
  // Roots of z^2 + a1 z + a2 inside the unit circle (Jury conditions).
  return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
}

std::complex<double> BiquadCascade::response(double freq_hz) const {
  const double omega = 2.0 * std::numbers::pi * freq_hz / sample_rate;
  std::complex<double> h = 1.0;
  for (const auto& s : sections) h *= s.response(omega);
  return h;
}

double BiquadCascade::magnitude_db(double freq_hz) const {
  return 20.0 * std::log10(std::abs(response(freq_hz)));
}

BiquadCascade design_butterworth_hp(double cutoff_hz, double sample_rate,
                                    int order) {
  require(sample_rate > 0.0, "sample rate must be positive");
  if (!(cutoff_hz > 0.0 && cutoff_hz < sample_rate / 2.0)) {
    fail(ErrorCode::InvalidArgument,
         "high-pass cutoff " + std::to_string(cutoff_hz) +
             " Hz must lie strictly between 0 and Nyquist (" +
             std::to_string(sample_rate / 2.0) + " Hz)");
  }
  if (order != 2 && order != 4) {
    fail(ErrorCode::InvalidArgument,
         "Butterworth order must be 2 or 4, got " + std::to_string(order));
  }

  const double k = std::tan(std::numbers::pi * cutoff_hz / sample_rate);
  const double k2 = k * k;
  BiquadCascade cascade;
  cascade.sample_rate = sample_rate;
  cascade.cutoff_hz = cutoff_hz;
  const int pairs = order / 2;
  for (int p = 1; p <= pairs; ++p) {
    // Analog pole pair at angle (2p - 1) pi / (2 order) from the negative
    // real axis; its quality factor is 1 / (2 cos angle).
    const double angle = (2.0 * p - 1.0) * std::numbers::pi / (2.0 * order);
    const double q = 1.0 / (2.0 * std::cos(angle));
    const double norm = 1.0 / (1.0 + k / q + k2);
    cascade.sections.push_back({norm, -2.0 * norm, norm,
                                2.0 * (k2 - 1.0) * norm,
                                (1.0 - k / q + k2) * norm});
  }
  return cascade;
}

namespace {

struct SectionState {
  double z1 = 0.0, z2 = 0.0;

  double step(const Biquad& s, double x) {
    // Transposed direct form II.
    const double y = s.b0 * x + z1;
    z1 = s.b1 * x - s.a1 * y + z2;
    z2 = s.b2 * x - s.a2 * y;
    return y;
  }
};

void filter_in_place(const BiquadCascade& filter, std::span<float> data) {
  std::vector<SectionState> state(filter.sections.size());
  for (float& sample : data) {
    double v = sample;
    for (std::size_t k = 0; k < state.size(); ++k) {
      v = state[k].step(filter.sections[k], v);
    }
    sample = float(v);
  }
}

}  // namespace

AudioBuffer apply_filter(const BiquadCascade& filter, const AudioBuffer& x) {
  if (x.sample_rate() != filter.sample_rate) {
    fail(ErrorCode::InvalidArgument,
         "filter designed for " + std::to_string(filter.sample_rate) +
             " Hz applied to " + std::to_string(x.sample_rate()) + " Hz audio");
  }
  AudioBuffer y = x;
  for (std::size_t c = 0; c < y.channels(); ++c) {
    filter_in_place(filter, y.channel(c));
  }
  return y;
}

NoiseGain noise_power_gain(const BiquadCascade& filter) {
  constexpr std::size_t kMaxTaps = 1'000'000;
  constexpr std::size_t kBlock = 256;
  std::vector<SectionState> state(filter.sections.size());
  double total = 0.0;
  double block_energy = 0.0;
  for (std::size_t n = 0; n < kMaxTaps; ++n) {
    double v = n == 0 ? 1.0 : 0.0;
    for (std::size_t k = 0; k < state.size(); ++k) {
      v = state[k].step(filter.sections[k], v);
    }
    total += v * v;
    block_energy += v * v;
    if ((n + 1) % kBlock == 0) {
      if (block_energy < 1e-9 * total) return {total, n + 1, true};
      block_energy = 0.0;
    }
  }
  return {total, kMaxTaps, false};
}

AudioBuffer gaussian_noise(std::size_t channels, std::size_t length,
                           double sample_rate, NoiseStream& rng) {
  AudioBuffer out(channels, length, sample_rate);
  for (float& v : out.samples()) v = float(rng.gaussian());
  return out;
}

AudioBuffer normalized_filtered_noise(const BiquadCascade* filter,
                                      std::size_t channels, std::size_t length,
                                      double sample_rate, NoiseStream& rng) {
  if (filter == nullptr) return gaussian_noise(channels, length, sample_rate, rng);
  if (filter->sample_rate != sample_rate) {
    fail(ErrorCode::InvalidArgument, "noise filter sample-rate mismatch");
  }
  // Filter in double so the normalization is not limited by float state.
  const double scale = 1.0 / std::sqrt(noise_power_gain(*filter).gain);
  AudioBuffer out(channels, length, sample_rate);
  for (std::size_t c = 0; c < channels; ++c) {
    std::vector<SectionState> state(filter->sections.size());
    for (float& sample : out.channel(c)) {
      double v = rng.gaussian();
      for (std::size_t k = 0; k < state.size(); ++k) {
        v = state[k].step(filter->sections[k], v);
      }
      sample = float(v * scale);
    }
  }
  return out;
}

ChunkPlan::ChunkPlan(std::size_t chunk_len, double overlap, std::size_t multiple)
    : chunk_len_(chunk_len), overlap_(overlap), multiple_(multiple) {
  require(chunk_len >= 1, "chunk length must be positive");
  require(multiple >= 1 && chunk_len % multiple == 0,
          "chunk length must be a positive multiple of the length multiple");
  require(overlap >= 0.0 && overlap < 0.5, "overlap must lie in [0, 0.5)");
  hop_ = chunk_len - std::size_t(std::floor(overlap * double(chunk_len)));
  require(hop_ >= 1, "chunk hop must be at least one sample");
}

ChunkPlan ChunkPlan::for_duration(double chunk_seconds, double overlap,
                                  double sample_rate, std::size_t multiple) {
  require(chunk_seconds > 0.0, "chunk duration must be positive");
  require(multiple >= 1, "chunk multiple must be positive");
  auto len = std::size_t(std::llround(chunk_seconds * sample_rate));
  len = std::max<std::size_t>(len, 1);
  len = (len + multiple - 1) / multiple * multiple;
  return ChunkPlan(len, overlap, multiple);
}

std::size_t ChunkPlan::chunk_count(std::size_t length) const {
  if (length <= chunk_len_) return 1;
  return 1 + (length - chunk_len_ + hop_ - 1) / hop_;
}

std::size_t ChunkPlan::chunk_length(std::size_t index, std::size_t count,
                                    std::size_t length) const {
  if (index + 1 < count) return chunk_len_;
  const std::size_t rest = length - std::min(length, index * hop_);
  return std::min(chunk_len_, std::max<std::size_t>(1, (rest + multiple_ - 1) / multiple_) * multiple_);
}

std::size_t ChunkPlan::padded_length(std::size_t length) const {
  return (chunk_count(length) - 1) * hop_ + chunk_len_;
}

double ChunkPlan::weight(std::size_t index, std::size_t count,
                         std::size_t i) const {
  const std::size_t ov = overlap_len();
  if (ov == 0) return 1.0;
  if (index > 0 && i < ov) return (double(i) + 0.5) / double(ov);
  if (index + 1 < count && i >= hop_) {
    return 1.0 - (double(i - hop_) + 0.5) / double(ov);
  }
  return 1.0;
}

AudioBuffer chunk_and_process(const AudioBuffer& x, const ChunkPlan& plan,
                              const ChunkFn& process) {
  const std::size_t count = plan.chunk_count(x.length());
  const std::size_t padded = plan.padded_length(x.length());
  std::vector<double> acc(x.channels() * padded, 0.0);

  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t offset = k * plan.hop();
    const std::size_t len = plan.chunk_length(k, count, x.length());
    const AudioBuffer chunk = x.slice(offset, len);
    const AudioBuffer out = process(chunk, k);
    if (!out.same_shape(chunk)) {
      fail(ErrorCode::ContractViolation,
           "chunk processor changed shape of chunk " + std::to_string(k));
    }
    for (std::size_t c = 0; c < x.channels(); ++c) {
      const auto src = out.channel(c);
      double* dst = acc.data() + c * padded + offset;
      for (std::size_t i = 0; i < len; ++i) {
        dst[i] += plan.weight(k, count, i) * double(src[i]);
      }
    }
  }

  AudioBuffer y(x.channels(), x.length(), x.sample_rate());
  for (std::size_t c = 0; c < x.channels(); ++c) {
    auto dst = y.channel(c);
    for (std::size_t i = 0; i < x.length(); ++i) {
      dst[i] = float(acc[c * padded + i]);
    }
  }
  return y;
}

}  // namespace sepdiff
