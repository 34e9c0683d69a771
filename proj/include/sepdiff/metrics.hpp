#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sepdiff/audio_buffer.hpp"
#include "sepdiff/audio_io.hpp"
#include "sepdiff/sampler.hpp"

namespace sepdiff {

inline constexpr double kMetricCapDb = 100.0;

/// 10 log10(sum s^2 / sum (s - s_hat)^2) over all channels, clamped to
/// [-100, 100] dB. Throws UndefinedReference for an all-zero reference.
double sdr(const AudioBuffer& reference, const AudioBuffer& estimate);

/// Per-channel least-squares projection of the estimate onto
/// span{target, accompaniment}; the ratio of the energies of the two
/// projected components, clamped to [-100, 100] dB. NaN when both
/// components vanish.
double sir(const AudioBuffer& target, const AudioBuffer& accompaniment,
           const AudioBuffer& estimate);

/// Median of the finite entries; NaN if there are none.
double median(std::vector<double> values);

struct TrackScore {
  std::string track;
  double sdr_db = 0.0;
  double sir_db = 0.0;
  std::uint64_t seed = 0;
  int repeat = 0;
};

struct EvalResult {
  std::vector<TrackScore> scores;
  /// Median over tracks, one entry per repeat.
  std::vector<double> repeat_median_sdr;
  std::vector<double> repeat_median_sir;
  /// Mean over repeats of the per-repeat medians.
  double median_sdr_db = 0.0;
  double median_sir_db = 0.0;
  std::size_t track_count = 0;
  int steps = 0;
  double eta = 0.0;
  std::optional<double> cutoff_hz;
  std::uint64_t seed = 0;
};

/// Produces the vocal estimate of a track for one repeat.
using Estimator = std::function<AudioBuffer(const TrackPair& track, int repeat)>;

/// Seed used by repeat r. Deterministic runs (eta = 0) reuse the base seed.
std::uint64_t repeat_seed(std::uint64_t seed, int repeat, double eta);

EvalResult evaluate(const std::vector<TrackPair>& tracks, const Estimator& estimator,
                    int repeats, const SamplerConfig& meta);

/// Separates every track with the denoiser. `repeats` is forced to 1 when
/// eta = 0.
EvalResult evaluate_model(const std::vector<TrackPair>& tracks, const Denoiser& denoiser,
                          const SeparationOptions& options, int repeats,
                          std::size_t multiple);

/// Reads `<dir>/<track>/vocals.wav` (or `<dir>/<track>.wav`) for each track.
EvalResult evaluate_estimates(const std::vector<TrackPair>& tracks,
                              const std::filesystem::path& dir);

/// The mixture itself as the vocal estimate.
EvalResult evaluate_mixture_baseline(const std::vector<TrackPair>& tracks);

inline constexpr const char* kEvalCsvTag = "# sepdiff-eval v1";
inline constexpr const char* kEvalCsvHeader =
    "track,sdr_db,sir_db,T,eta,cutoff_hz,seed,repeat_index";

std::string format_cutoff(const std::optional<double>& cutoff_hz);

/// Per-track rows, then `median` rows per repeat and a `mean_of_medians`
/// row; a `mixture_baseline` row is added when a baseline is supplied.
std::string eval_csv(const EvalResult& result, const EvalResult* baseline = nullptr);

}  // namespace sepdiff
