#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "sepdiff/audio_buffer.hpp"
#include "sepdiff/audio_io.hpp"
#include "sepdiff/graph.hpp"
#include "sepdiff/kv_config.hpp"
#include "sepdiff/model.hpp"
#include "sepdiff/rng.hpp"

namespace sepdiff {

struct TrainingConfig {
  int batch_size = 32;
  double learning_rate = 1e-4;
  double weight_decay = 1e-3;
  int warmup_steps = 1000;
  int total_steps = 20000;
  bool cosine_annealing = true;
  double lambda_lat = 1.0;
  double lambda_rec = 1.0;
  double silence_rms_db = -60.0;
  double silence_keep_prob = 0.05;
  bool augment_polarity = true;
  bool augment_channel_flip = true;
  bool augment_remix = true;
  double chunk_seconds = 3.0;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;

  void validate() const;
  KeyValues to_kv() const;
  /// Unknown keys are rejected; missing keys keep their defaults.
  static TrainingConfig from_kv(const KeyValues& kv);
};

struct LossReport {
  double l_diff = 0.0;
  double l_lat = 0.0;
  double l_rec = 0.0;
  double total = 0.0;
};

/// Multipliers on the three loss terms. Setting `diff` to 0 masks the
/// diffusion loss while keeping the graph intact.
struct LossWeights {
  double diff = 1.0;
  double lat = 1.0;
  double rec = 1.0;
};

/// Noise levels and Gaussian noise for one diffusion training batch.
template <class T>
struct DiffusionDraw {
  std::vector<double> sigmas;
  BasicTensor<T> noise;
};

/// One sigma ~ U[0, 1) per batch item and unit Gaussian noise shaped like x0.
template <class T>
DiffusionDraw<T> draw_diffusion_inputs(const Shape& shape, NoiseStream& rng);

/// Forms x_sigma and the v target for every batch item.
template <class T>
void diffuse_batch(const BasicTensor<T>& x0, const DiffusionDraw<T>& draw,
                   BasicTensor<T>& x_t, BasicTensor<T>& v);

struct LossVars {
  Var total;
  Var diff;
  Var lat;
  Var rec;
};

/// Records the weighted objective l_diff + lat * l_lat + rec * l_rec on g.
/// The heads only see the auxiliary terms and the generator only sees
/// l_diff.
template <class T>
LossVars record_losses(Graph<T>& g, const BasicSeparationModel<T>& model,
                       const std::vector<Var>& params, const BasicTensor<T>& x0,
                       const BasicTensor<T>& condition, const DiffusionDraw<T>& draw,
                       const LossWeights& weights);

/// Gradients of the weighted objective for every parameter, in parameter
/// order; parameters not reached get zero tensors.
template <class T>
struct LossAndGrads {
  LossReport report;
  std::vector<BasicTensor<T>> grads;
};

template <class T>
LossAndGrads<T> loss_and_gradients(const BasicSeparationModel<T>& model,
                                   const BasicTensor<T>& x0,
                                   const BasicTensor<T>& condition,
                                   const DiffusionDraw<T>& draw,
                                   const LossWeights& weights);

/// Loss value only, without recording a tape.
template <class T>
LossReport evaluate_losses(const BasicSeparationModel<T>& model, const BasicTensor<T>& x0,
                           const BasicTensor<T>& condition, const DiffusionDraw<T>& draw,
                           const LossWeights& weights);

/// Aligned mixture / vocal excerpt.
struct ChunkPair {
  AudioBuffer mixture;
  AudioBuffer target;
};

/// Silence filtering followed by the enabled augmentations. Returns nullopt
/// when a silent chunk is discarded. `remix_source` supplies the
/// accompaniment (its mixture minus its target) for stem remixing; without it
/// remixing is skipped.
std::optional<ChunkPair> filter_and_augment(ChunkPair item, const TrainingConfig& config,
                                            NoiseStream& rng,
                                            const ChunkPair* remix_source = nullptr);

/// Warmup + cosine learning rate at a step index.
double learning_rate_at(const TrainingConfig& config, long long step);

/// Adam with decoupled weight decay over trainable parameters.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Applies one update at learning rate `lr`. Throws NumericFailure naming
  /// the parameter on a non-finite gradient.
  void step(std::vector<Parameter<float>>& params,
            const std::vector<BasicTensor<float>>& grads, double lr, double weight_decay);

  long long steps_taken() const noexcept { return t_; }

 private:
  double beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Stacks equally shaped buffers into a (B, C, L) tensor.
BasicTensor<float> stack(const std::vector<AudioBuffer>& items);

/// Length in samples of a training chunk: chunk_seconds at the model rate,
/// rounded down to a multiple of the model's total down factor.
std::size_t training_chunk_length(const ModelConfig& model, const TrainingConfig& config);

struct TrainOptions {
  std::optional<std::filesystem::path> loss_csv;
  std::optional<std::filesystem::path> checkpoint;
  std::ostream* log = nullptr;
  int log_every = 100;
};

struct TrainResult {
  std::vector<LossReport> curve;
  std::vector<double> learning_rates;
  std::size_t discarded_silent = 0;
};

/// Trains in place. Deterministic for a given config and model init.
TrainResult train(SeparationModel& model, const std::vector<TrackPair>& tracks,
                  const TrainingConfig& config, const TrainOptions& options = {});

void write_loss_csv(const std::filesystem::path& path, const TrainResult& result);

}  // namespace sepdiff
