#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <vector>

#include "sepdiff/audio_buffer.hpp"
#include "sepdiff/rng.hpp"

namespace sepdiff {

/// Direct-form biquad: H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2).
struct Biquad {
  double b0, b1, b2;
  double a1, a2;

  std::complex<double> response(double omega) const;
  /// Both poles strictly inside the unit circle.
  bool stable() const;
};

struct BiquadCascade {
  std::vector<Biquad> sections;
  double sample_rate = 0.0;
  double cutoff_hz = 0.0;

  std::complex<double> response(double freq_hz) const;
  double magnitude_db(double freq_hz) const;
  int order() const { return int(sections.size()) * 2; }
};

/// Butterworth high-pass of even `order` (2 or 4) via the bilinear transform
/// with the cutoff prewarped, realized as a cascade of biquads.
BiquadCascade design_butterworth_hp(double cutoff_hz, double sample_rate,
                                    int order);

/// Causal per-channel filtering starting from zero state.
AudioBuffer apply_filter(const BiquadCascade& filter, const AudioBuffer& x);

struct NoiseGain {
  double gain;        // sum of h[n]^2
  std::size_t taps;   // impulse-response samples accumulated
  bool converged;     // tail criterion met before the tap limit
};

/// Noise power gain sum(h[n]^2). The impulse response is accumulated until
/// the energy of the latest 256-tap block falls below 1e-9 of the running
/// total, or 10^6 taps.
NoiseGain noise_power_gain(const BiquadCascade& filter);

/// Unit-variance Gaussian noise. With a filter, the noise is high-passed from
/// zero state and divided by sqrt(noise_power_gain), which restores unit
/// variance in steady state. Without one it is returned raw.
AudioBuffer normalized_filtered_noise(const BiquadCascade* filter,
                                      std::size_t channels, std::size_t length,
                                      double sample_rate, NoiseStream& rng);

/// Fills a buffer with i.i.d. standard normal samples.
AudioBuffer gaussian_noise(std::size_t channels, std::size_t length,
                           double sample_rate, NoiseStream& rng);

class ChunkPlan {
 public:
  /// overlap is a fraction in [0, 0.5). The final chunk is trimmed to the
  /// remaining input rounded up to `multiple`.
  ChunkPlan(std::size_t chunk_len, double overlap, std::size_t multiple = 1);

  /// chunk_seconds at `sample_rate`, rounded up to a multiple of `multiple`.
  static ChunkPlan for_duration(double chunk_seconds, double overlap,
                                double sample_rate, std::size_t multiple = 1);

  std::size_t chunk_len() const noexcept { return chunk_len_; }
  double overlap() const noexcept { return overlap_; }
  std::size_t hop() const noexcept { return hop_; }
  std::size_t overlap_len() const noexcept { return chunk_len_ - hop_; }

  std::size_t chunk_count(std::size_t length) const;
  /// Length of chunk `index` of `count` for an input of `length` samples.
  std::size_t chunk_length(std::size_t index, std::size_t count, std::size_t length) const;
  std::size_t padded_length(std::size_t length) const;

  /// Crossfade weight of sample `i` inside chunk `index` of `count` chunks.
  /// Fade-in over the leading overlap (not for the first chunk) and fade-out
  /// over the trailing overlap (not for the last).
  double weight(std::size_t index, std::size_t count, std::size_t i) const;

 private:
  std::size_t chunk_len_;
  double overlap_;
  std::size_t hop_;
  std::size_t multiple_;
};

using ChunkFn = std::function<AudioBuffer(const AudioBuffer& chunk,
                                          std::size_t chunk_index)>;

/// Splits `x` into overlapping chunks (zero-padding the last one up to the
/// plan's multiple), runs `process`
/// on each and recombines with a linear crossfade. The output is trimmed to
/// the input length.
AudioBuffer chunk_and_process(const AudioBuffer& x, const ChunkPlan& plan,
                              const ChunkFn& process);

}  // namespace sepdiff
