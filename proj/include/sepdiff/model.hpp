#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "sepdiff/denoiser.hpp"
#include "sepdiff/graph.hpp"
#include "sepdiff/kv_config.hpp"
#include "sepdiff/rng.hpp"
#include "sepdiff/tensor.hpp"

namespace sepdiff {

/// Architecture of the generator U-Net and the conditioner autoencoder. Both
/// networks share `levels` and `down_factors`; at level i the time axis is
/// divided by down_factors[i] and channels double when that factor exceeds 1.
struct ModelConfig {
  int levels = 4;
  std::vector<int> down_factors{2, 4, 1, 4};
  int generator_base_channels = 8;
  int conditioner_base_channels = 8;
  std::vector<int> generator_blocks_per_level{1, 1, 1, 1};
  std::vector<int> attention_levels{3};
  std::vector<int> conditioning_levels{0, 1, 2, 3};
  int bottleneck_transformer_layers = 1;
  int fourier_embed_channels = 32;
  int embed_hidden_channels = 32;
  int attention_heads = 1;
  int transformer_heads = 1;
  int channel_count = 2;
  int sample_rate = 44100;

  static ModelConfig toy();
  /// At most 2k parameters; used for end-to-end gradient checks.
  static ModelConfig tiny();
  static ModelConfig full();
  static ModelConfig preset(const std::string& name);

  /// Throws InvalidArgument describing the first violated constraint.
  void validate() const;

  KeyValues to_kv() const;
  static ModelConfig from_kv(const KeyValues& kv);

  /// Product of all down factors; input lengths must be a multiple of it.
  std::size_t total_factor() const;
  /// Channels at level i of a network with the given base width.
  int level_channels(int base, int level) const;
  /// Time length at level i for an input of `length` samples.
  std::size_t level_length(std::size_t length, int level) const;
  bool has_attention(int level) const;
  bool has_conditioning(int level) const;

  bool operator==(const ModelConfig&) const = default;
};

/// Group count used by every group normalization layer.
inline std::size_t norm_groups(std::size_t channels) {
  return channels < 8 ? channels : 8;
}

template <class T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  bool trainable = true;
};

/// Per-level decoder embeddings plus the two auxiliary outputs.
struct ConditionerOutputs {
  std::map<int, Var> embeddings;
  Var latent;
  Var reconstruction;
};

/// Generator, conditioner, auxiliary heads and the frozen Fourier
/// frequencies, stored as a flat list of named parameters. Names start with
/// `gen.`, `cond.` or `head.`; forward passes record onto a Graph.
template <class T>
class BasicSeparationModel {
 public:
  /// Random initialization driven by `seed`.
  BasicSeparationModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  std::vector<Parameter<T>>& parameters() noexcept { return params_; }
  const std::vector<Parameter<T>>& parameters() const noexcept { return params_; }

  std::size_t index_of(const std::string& name) const;
  Parameter<T>& parameter(const std::string& name) { return params_[index_of(name)]; }
  const Parameter<T>& parameter(const std::string& name) const {
    return params_[index_of(name)];
  }

  /// Number of scalar weights; frozen buffers excluded unless asked.
  std::size_t parameter_count(bool include_frozen = false) const;
  std::size_t parameter_count(const std::string& prefix) const;

  /// Puts every parameter on the graph, trainable ones as variables.
  std::vector<Var> bind(Graph<T>& g) const;

  ConditionerOutputs conditioner_forward(Graph<T>& g, const std::vector<Var>& p,
                                         Var condition) const;
  Var generator_forward(Graph<T>& g, const std::vector<Var>& p, Var x_t,
                        const std::vector<double>& sigmas,
                        const ConditionerOutputs& cond) const;
  /// Step embedding (B, embed_hidden, 1) for one sigma per batch item.
  Var step_embedding(Graph<T>& g, const std::vector<Var>& p,
                     const std::vector<double>& sigmas) const;
  Var latent_head(Graph<T>& g, const std::vector<Var>& p, Var latent) const;
  Var reconstruction_head(Graph<T>& g, const std::vector<Var>& p, Var recon) const;

  /// Same architecture and weights in another precision.
  template <class U>
  BasicSeparationModel<U> cast() const;

 private:
  template <class U>
  friend class BasicSeparationModel;
  struct Uninitialized {};
  BasicSeparationModel(ModelConfig config, Uninitialized);

  void build_layout(std::uint64_t seed, bool initialize);
  void add(const std::string& name, Shape shape, int init, double fan_in,
           bool trainable, NoiseStream* rng);

  Var P(const std::vector<Var>& p, const std::string& name) const {
    return p[index_of(name)];
  }
  Var conv(Graph<T>& g, const std::vector<Var>& p, const std::string& name, Var x,
           std::size_t stride = 1, std::size_t padding = 0) const;
  Var norm(Graph<T>& g, const std::vector<Var>& p, const std::string& name,
           Var x) const;
  Var gen_block(Graph<T>& g, const std::vector<Var>& p, const std::string& name,
                Var x, Var embed, bool attention) const;
  Var cond_block(Graph<T>& g, const std::vector<Var>& p, const std::string& name,
                 Var x) const;
  Var self_attention(Graph<T>& g, const std::vector<Var>& p, const std::string& name,
                     Var x) const;
  Var transformer_layer(Graph<T>& g, const std::vector<Var>& p,
                        const std::string& name, Var x) const;
  Var inject(Graph<T>& g, const std::vector<Var>& p, const std::string& name, Var x,
             Var embedding) const;

  ModelConfig config_;
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

using SeparationModel = BasicSeparationModel<float>;

/// Shape-compatibility check between a model and audio it is about to
/// process; throws InvalidArgument.
void check_geometry(const ModelConfig& config, std::size_t channels,
                    std::size_t length);

BasicTensor<float> to_tensor(const AudioBuffer& audio);
AudioBuffer to_audio(const BasicTensor<float>& tensor, std::size_t item,
                     double sample_rate);

/// Adapts a trained model to the sampler's Denoiser interface. The
/// conditioner runs once per prepare(); predict_v only runs the generator.
class ModelDenoiser : public Denoiser {
 public:
  explicit ModelDenoiser(std::shared_ptr<const SeparationModel> model);

  std::unique_ptr<Conditioning> prepare(const AudioBuffer& condition) const override;
  AudioBuffer predict_v(const AudioBuffer& x_t, double sigma,
                        const Conditioning& conditioning) const override;
  std::size_t channels() const override;
  double sample_rate() const override;

 private:
  std::shared_ptr<const SeparationModel> model_;
};

inline constexpr std::uint32_t kModelFileVersion = 1;

/// Binary container: magic, version, config as key-value text, a manifest of
/// parameter names and shapes, then little-endian float32 blobs.
void save_model(const std::filesystem::path& path, const SeparationModel& model);
/// When `expected` is given, a file whose config differs is rejected with
/// ContractViolation.
SeparationModel load_model(const std::filesystem::path& path,
                           const ModelConfig* expected = nullptr);

}  // namespace sepdiff
