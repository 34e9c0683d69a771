#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "sepdiff/audio_buffer.hpp"
#include "sepdiff/denoiser.hpp"
#include "sepdiff/dsp.hpp"
#include "sepdiff/rng.hpp"

namespace sepdiff {

/// User-facing sampling knobs. Defaults are the best cell of the sampler
/// ablation: 50 steps, eta 0.4, refinement noise high-passed at 5 kHz.
struct SamplerConfig {
  int steps = 50;
  double eta = 0.4;
  std::optional<double> cutoff_hz = 5000.0;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument if the knobs are out of range for `sample_rate`.
  void validate(double sample_rate) const;
};

struct StepDiagnostics {
  int t = 0;
  double sigma = 0.0;
  double delta = 0.0;
  double beta_prime = 0.0;
  double x0_estimate_rms = 0.0;
};

struct RefinementScales {
  double delta;
  double beta_prime;
};

/// DDIM variance split for the step sigma_t -> sigma_prev:
///   delta = eta sqrt(beta_prev^2 / beta_t^2) sqrt(1 - alpha_t^2 / alpha_prev^2)
///   beta' = sqrt(beta_prev^2 - delta^2)
/// so that beta'^2 + delta^2 = beta_prev^2.
RefinementScales refinement_scales(double eta, double sigma_t, double sigma_prev);

struct StepResult {
  AudioBuffer x_prev;
  AudioBuffer x0_estimate;
  StepDiagnostics diag;
};

/// One reverse step. Predicts v, forms x0_hat = alpha x_t - beta v and
/// eps_hat = beta x_t + alpha v, then
///   x_prev = alpha_prev x0_hat + beta' eps_hat + delta HPF(eps_ref).
/// When sigma_prev = 0 the step returns x0_hat. `filter` may be null
/// (unfiltered refinement noise).
StepResult ddim_step(const AudioBuffer& x_t, int t, double sigma_t,
                     double sigma_prev, const Denoiser& denoiser,
                     const Conditioning& conditioning, double eta,
                     const BiquadCascade* filter, NoiseStream& rng);

/// Plain deterministic update x_prev = alpha_prev x0_hat + beta_prev eps_hat.
AudioBuffer ddim_deterministic_update(const AudioBuffer& x0_hat,
                                      const AudioBuffer& eps_hat,
                                      double sigma_prev);

struct SampleResult {
  AudioBuffer estimate;
  std::vector<StepDiagnostics> trace;
};

/// Draws x_T ~ N(0, 1) from the seeded "sampling" stream and iterates
/// ddim_step from t = T down to t = 1.
SampleResult sample(const AudioBuffer& mixture, const Denoiser& denoiser,
                    const SamplerConfig& cfg);

/// Reference deterministic sampler built only from plain deterministic updates, with
/// the same initial noise as `sample` for a given seed.
AudioBuffer sample_deterministic(const AudioBuffer& mixture,
                                 const Denoiser& denoiser, int steps,
                                 std::uint64_t seed);

/// Chunked separation: 3 s chunks with 20% crossfaded overlap by default.
struct SeparationOptions {
  SamplerConfig sampler;
  double chunk_seconds = 3.0;
  double overlap = 0.2;
};

/// Seed of chunk `index` for a run seeded with `seed`.
std::uint64_t chunk_seed(std::uint64_t seed, std::size_t index);

/// Samples every chunk of `mixture` independently (seeded per chunk) and
/// overlap-adds the estimates. Chunk lengths are rounded up to a multiple of
/// `multiple`. When `trace` is given it receives the first chunk's steps.
AudioBuffer separate(const AudioBuffer& mixture, const Denoiser& denoiser,
                     const SeparationOptions& options, std::size_t multiple = 1,
                     std::vector<StepDiagnostics>* trace = nullptr);

/// Columns: t, sigma, delta, beta_prime, x0_rms.
void write_trace_csv(const std::filesystem::path& path,
                     const std::vector<StepDiagnostics>& trace);

}  // namespace sepdiff
