#include "sepdiff/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "sepdiff/error.hpp"
#include "sepdiff/file_util.hpp"

namespace sepdiff {

namespace {

enum Init { kFanIn, kOnes, kZeros, kPrelu, kFourier };

bool contains(const std::vector<int>& v, int x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

std::string join(const std::string& a, const std::string& b) { return a + "." + b; }

std::size_t up_kernel(int n) { return n % 2 == 0 ? std::size_t(2 * n) : std::size_t(n); }
std::size_t up_padding(int n) { return n % 2 == 0 ? std::size_t(n / 2) : 0; }

}  // namespace

ModelConfig ModelConfig::toy() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.levels = 3;
  c.down_factors = {1, 1, 2};
  c.generator_base_channels = 2;
  c.conditioner_base_channels = 2;
  c.generator_blocks_per_level = {1, 1, 1};
  c.attention_levels = {1};
  c.conditioning_levels = {1, 2};
  c.bottleneck_transformer_layers = 1;
  c.fourier_embed_channels = 4;
  c.embed_hidden_channels = 4;
  c.attention_heads = 1;
  c.transformer_heads = 1;
  c.channel_count = 2;
  c.sample_rate = 16000;
  return c;
}

ModelConfig ModelConfig::full() {
  ModelConfig c;
  c.levels = 7;
  c.down_factors = {1, 2, 4, 1, 4, 1, 4};
  c.generator_base_channels = 32;
  c.conditioner_base_channels = 128;
  c.generator_blocks_per_level = {1, 1, 1, 2, 2, 2, 2};
  c.attention_levels = {3, 4, 5, 6};
  c.conditioning_levels = {3, 4, 5, 6};
  c.bottleneck_transformer_layers = 6;
  c.fourier_embed_channels = 1024;
  c.embed_hidden_channels = 256;
  c.attention_heads = 8;
  c.transformer_heads = 8;
  c.channel_count = 2;
  c.sample_rate = 44100;
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "toy") return toy();
  if (name == "tiny") return tiny();
  if (name == "full") return full();
  fail(ErrorCode::InvalidArgument, "unknown model preset '" + name + "'");
}

std::size_t ModelConfig::total_factor() const {
  std::size_t f = 1;
  for (int n : down_factors) f *= std::size_t(n);
  return f;
}

int ModelConfig::level_channels(int base, int level) const {
  int c = base;
  for (int i = 0; i <= level && i < levels; ++i) {
    if (down_factors[std::size_t(i)] > 1) c *= 2;
  }
  return c;
}

std::size_t ModelConfig::level_length(std::size_t length, int level) const {
  for (int i = 0; i <= level && i < levels; ++i) length /= std::size_t(down_factors[std::size_t(i)]);
  return length;
}

bool ModelConfig::has_attention(int level) const { return contains(attention_levels, level); }
bool ModelConfig::has_conditioning(int level) const {
  return contains(conditioning_levels, level);
}

void ModelConfig::validate() const {
  require(levels >= 1, "levels must be at least 1");
  require(down_factors.size() == std::size_t(levels),
          "down_factors needs one entry per level");
  require(generator_blocks_per_level.size() == std::size_t(levels),
          "generator_blocks_per_level needs one entry per level");
  for (int n : down_factors) require(n >= 1, "down factors must be >= 1");
  for (int b : generator_blocks_per_level) require(b >= 1, "blocks per level must be >= 1");
  require(generator_base_channels >= 1 && conditioner_base_channels >= 1,
          "base channel counts must be positive");
  for (int l : attention_levels) require(l >= 0 && l < levels, "attention level out of range");
  for (int l : conditioning_levels) {
    require(l >= 0 && l < levels, "conditioning level out of range");
  }
  require(bottleneck_transformer_layers >= 0, "transformer layer count must be >= 0");
  require(fourier_embed_channels >= 2 && fourier_embed_channels % 2 == 0,
          "fourier_embed_channels must be even");
  require(embed_hidden_channels >= 1, "embed_hidden_channels must be positive");
  require(attention_heads >= 1 && transformer_heads >= 1, "head counts must be positive");
  require(channel_count >= 1, "channel_count must be positive");
  require(sample_rate > 0, "sample_rate must be positive");
  for (int base : {generator_base_channels, conditioner_base_channels}) {
    for (int l = -1; l < levels; ++l) {
      const int c = level_channels(base, l);
      require(c % int(norm_groups(std::size_t(c))) == 0,
              "group count does not divide " + std::to_string(c) + " channels");
    }
  }
  for (int l : attention_levels) {
    const int c = level_channels(generator_base_channels, l);
    require(c % attention_heads == 0, "attention heads must divide level channels");
  }
  if (bottleneck_transformer_layers > 0) {
    const int c = level_channels(conditioner_base_channels, levels - 1);
    require(c % transformer_heads == 0 && (c / transformer_heads) % 2 == 0,
            "transformer head width must be even and divide the bottleneck channels");
  }
}

KeyValues ModelConfig::to_kv() const {
  KeyValues kv;
  kv.set("levels", (long long)levels);
  kv.set("down_factors", down_factors);
  kv.set("generator_base_channels", (long long)generator_base_channels);
  kv.set("conditioner_base_channels", (long long)conditioner_base_channels);
  kv.set("generator_blocks_per_level", generator_blocks_per_level);
  kv.set("attention_levels", attention_levels);
  kv.set("conditioning_levels", conditioning_levels);
  kv.set("bottleneck_transformer_layers", (long long)bottleneck_transformer_layers);
  kv.set("fourier_embed_channels", (long long)fourier_embed_channels);
  kv.set("embed_hidden_channels", (long long)embed_hidden_channels);
  kv.set("attention_heads", (long long)attention_heads);
  kv.set("transformer_heads", (long long)transformer_heads);
  kv.set("channel_count", (long long)channel_count);
  kv.set("sample_rate", (long long)sample_rate);
  return kv;
}

ModelConfig ModelConfig::from_kv(const KeyValues& kv) {
  ModelConfig base = kv.has("preset") ? preset(kv.get_string("preset", "toy")) : ModelConfig{};
  kv.require_known({"preset", "levels", "down_factors", "generator_base_channels",
                    "conditioner_base_channels", "generator_blocks_per_level",
                    "attention_levels", "conditioning_levels",
                    "bottleneck_transformer_layers", "fourier_embed_channels",
                    "embed_hidden_channels", "attention_heads", "transformer_heads",
                    "channel_count", "sample_rate"});
  ModelConfig c = base;
  c.levels = int(kv.get_int("levels", base.levels));
  c.down_factors = kv.get_ints("down_factors", base.down_factors);
  c.generator_base_channels =
      int(kv.get_int("generator_base_channels", base.generator_base_channels));
  c.conditioner_base_channels =
      int(kv.get_int("conditioner_base_channels", base.conditioner_base_channels));
  c.generator_blocks_per_level =
      kv.get_ints("generator_blocks_per_level", base.generator_blocks_per_level);
  c.attention_levels = kv.get_ints("attention_levels", base.attention_levels);
  c.conditioning_levels = kv.get_ints("conditioning_levels", base.conditioning_levels);
  c.bottleneck_transformer_layers =
      int(kv.get_int("bottleneck_transformer_layers", base.bottleneck_transformer_layers));
  c.fourier_embed_channels =
      int(kv.get_int("fourier_embed_channels", base.fourier_embed_channels));
  c.embed_hidden_channels =
      int(kv.get_int("embed_hidden_channels", base.embed_hidden_channels));
  c.attention_heads = int(kv.get_int("attention_heads", base.attention_heads));
  c.transformer_heads = int(kv.get_int("transformer_heads", base.transformer_heads));
  c.channel_count = int(kv.get_int("channel_count", base.channel_count));
  c.sample_rate = int(kv.get_int("sample_rate", base.sample_rate));
  c.validate();
  return c;
}

void check_geometry(const ModelConfig& config, std::size_t channels,
                    std::size_t length) {
  if (channels != std::size_t(config.channel_count)) {
    fail(ErrorCode::InvalidArgument,
         "model expects " + std::to_string(config.channel_count) + " channels, got " +
             std::to_string(channels));
  }
  const std::size_t f = config.total_factor();
  if (length == 0 || length % f != 0) {
    fail(ErrorCode::InvalidArgument, "length " + std::to_string(length) +
                                         " is not a positive multiple of " +
                                         std::to_string(f));
  }
}

// ---------------------------------------------------------------------------
// Layout

template <class T>
BasicSeparationModel<T>::BasicSeparationModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  build_layout(seed, true);
}

template <class T>
BasicSeparationModel<T>::BasicSeparationModel(ModelConfig config, Uninitialized)
    : config_(std::move(config)) {
  config_.validate();
  build_layout(0, false);
}

template <class T>
void BasicSeparationModel<T>::add(const std::string& name, Shape shape, int init,
                                  double fan_in, bool trainable, NoiseStream* rng) {
  BasicTensor<T> t(shape);
  if (rng) {
    switch (init) {
      case kFanIn: {
        const double bound = 1.0 / std::sqrt(fan_in);
        for (auto& v : t.values()) v = T((2.0 * rng->uniform() - 1.0) * bound);
        break;
      }
      case kOnes: t.fill(T(1)); break;
      case kZeros: break;
      case kPrelu: t.fill(T(0.25)); break;
      case kFourier:
        for (auto& v : t.values()) v = T(16.0 * rng->gaussian());
        break;
    }
  }
  index_.emplace(name, params_.size());
  params_.push_back({name, std::move(t), trainable});
}

template <class T>
void BasicSeparationModel<T>::build_layout(std::uint64_t seed, bool initialize) {
  NoiseStream stream = NoiseStream(seed).substream("init");
  NoiseStream* rng = initialize ? &stream : nullptr;
  const ModelConfig& c = config_;
  const auto Z = [](int v) { return std::size_t(v); };

  auto conv = [&](const std::string& name, int out, int in, std::size_t k) {
    const double fan = double(in) * double(k);
    add(join(name, "weight"), {Z(out), Z(in), k}, kFanIn, fan, true, rng);
    add(join(name, "bias"), {1, Z(out), 1}, kFanIn, fan, true, rng);
  };
  auto convt = [&](const std::string& name, int in, int out, std::size_t k) {
    const double fan = double(in) * double(k);
    add(join(name, "weight"), {Z(in), Z(out), k}, kFanIn, fan, true, rng);
    add(join(name, "bias"), {1, Z(out), 1}, kFanIn, fan, true, rng);
  };
  auto norm = [&](const std::string& name, int ch) {
    add(join(name, "gamma"), {1, Z(ch), 1}, kOnes, 1, true, rng);
    add(join(name, "beta"), {1, Z(ch), 1}, kZeros, 1, true, rng);
  };
  auto attention = [&](const std::string& name, int ch) {
    for (const char* m : {"q", "k", "v", "o"}) conv(join(name, m), ch, ch, 1);
  };

  const int E = c.embed_hidden_channels;
  const int G = c.generator_base_channels;
  const int K = c.conditioner_base_channels;
  const int io = c.channel_count;

  // Generator.
  add("gen.embed.freq", {1, Z(c.fourier_embed_channels / 2), 1}, kFourier, 1, false, rng);
  conv("gen.embed.fc0", E, c.fourier_embed_channels, 1);
  conv("gen.embed.fc1", E, E, 1);
  conv("gen.embed.fc2", E, E, 1);
  conv("gen.in", G, io, 3);

  auto gen_block = [&](const std::string& name, int cin, int cout, bool attn) {
    norm(join(name, "norm1"), cin);
    conv(join(name, "conv1"), cout, cin, 3);
    norm(join(name, "norm2"), cout);
    conv(join(name, "conv2"), cout, cout, 3);
    add(join(name, "film.scale.weight"), {Z(cout), Z(E), 1}, kZeros, 1, true, rng);
    add(join(name, "film.scale.bias"), {1, Z(cout), 1}, kOnes, 1, true, rng);
    add(join(name, "film.shift.weight"), {Z(cout), Z(E), 1}, kZeros, 1, true, rng);
    add(join(name, "film.shift.bias"), {1, Z(cout), 1}, kZeros, 1, true, rng);
    if (cin != cout) conv(join(name, "skip"), cout, cin, 1);
    if (attn) {
      norm(join(name, "attn.norm"), cout);
      attention(join(name, "attn"), cout);
    }
  };

  for (int i = 0; i < c.levels; ++i) {
    const std::string lv = "gen.enc." + std::to_string(i);
    const int prev = c.level_channels(G, i - 1);
    const int ch = c.level_channels(G, i);
    const int n = c.down_factors[Z(i)];
    if (n > 1) conv(join(lv, "down"), ch, prev, Z(n));
    if (c.has_conditioning(i)) {
      conv(join(lv, "adapt"), ch, c.level_channels(K, i), 1);
      conv(join(lv, "merge"), ch, 2 * ch, 1);
    }
    for (int b = 0; b < c.generator_blocks_per_level[Z(i)]; ++b) {
      gen_block(lv + ".block." + std::to_string(b), ch, ch, c.has_attention(i));
    }
  }
  for (int i = c.levels - 1; i >= 0; --i) {
    const std::string lv = "gen.dec." + std::to_string(i);
    const int prev = c.level_channels(G, i - 1);
    const int ch = c.level_channels(G, i);
    const int n = c.down_factors[Z(i)];
    if (c.has_conditioning(i)) {
      conv(join(lv, "adapt"), ch, c.level_channels(K, i), 1);
      conv(join(lv, "merge"), ch, 2 * ch, 1);
    }
    for (int b = 0; b < c.generator_blocks_per_level[Z(i)]; ++b) {
      gen_block(lv + ".block." + std::to_string(b), b == 0 ? 2 * ch : ch, ch,
                c.has_attention(i));
    }
    if (n > 1) convt(join(lv, "up"), ch, prev, up_kernel(n));
  }
  norm("gen.out.norm", 2 * G);
  conv("gen.out.conv", io, 2 * G, 3);

  // Conditioner.
  const int bottleneck = c.level_channels(K, c.levels - 1);
  auto cond_block = [&](const std::string& name, int ch) {
    for (int j = 0; j < 3; ++j) {
      const std::string s = std::to_string(j);
      norm(join(name, "norm" + s), ch);
      add(join(name, "act" + s + ".slope"), {1, Z(ch), 1}, kPrelu, 1, true, rng);
      conv(join(name, "conv" + s), ch, ch, 3);
    }
  };
  conv("cond.in", K, io, 3);
  for (int i = 0; i < c.levels; ++i) {
    const std::string lv = "cond.enc." + std::to_string(i);
    const int prev = c.level_channels(K, i - 1);
    const int ch = c.level_channels(K, i);
    const int n = c.down_factors[Z(i)];
    if (n > 1) conv(join(lv, "down"), ch, prev, Z(n));
    cond_block(join(lv, "block"), ch);
    norm(join(lv, "aux.norm"), ch);
    conv(join(lv, "aux.conv"), bottleneck, ch, 1);
  }
  for (int l = 0; l < c.bottleneck_transformer_layers; ++l) {
    const std::string name = "cond.tf." + std::to_string(l);
    norm(join(name, "ln1"), bottleneck);
    attention(join(name, "attn"), bottleneck);
    norm(join(name, "ln2"), bottleneck);
    conv(join(name, "ff1"), 2 * bottleneck, bottleneck, 1);
    conv(join(name, "ff2"), bottleneck, 2 * bottleneck, 1);
  }
  for (int i = c.levels - 1; i >= 0; --i) {
    const std::string lv = "cond.dec." + std::to_string(i);
    const int prev = c.level_channels(K, i - 1);
    const int ch = c.level_channels(K, i);
    const int n = c.down_factors[Z(i)];
    cond_block(join(lv, "block"), ch);
    if (n > 1) convt(join(lv, "up"), ch, prev, up_kernel(n));
  }

  // Auxiliary heads.
  conv("head.lat", io, bottleneck, 1);
  conv("head.rec", io, K, 1);
}

template <class T>
std::size_t BasicSeparationModel<T>::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorCode::InvalidArgument, "no parameter named " + name);
  return it->second;
}

template <class T>
std::size_t BasicSeparationModel<T>::parameter_count(bool include_frozen) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable || include_frozen) n += p.value.size();
  }
  return n;
}

template <class T>
std::size_t BasicSeparationModel<T>::parameter_count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable && p.name.rfind(prefix, 0) == 0) n += p.value.size();
  }
  return n;
}

template <class T>
std::vector<Var> BasicSeparationModel<T>::bind(Graph<T>& g) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) {
    vars.push_back(p.trainable ? g.variable(p.value) : g.constant(p.value));
  }
  return vars;
}

// ---------------------------------------------------------------------------
// Forward passes

template <class T>
Var BasicSeparationModel<T>::conv(Graph<T>& g, const std::vector<Var>& p,
                                  const std::string& name, Var x, std::size_t stride,
                                  std::size_t padding) const {
  return ops::conv1d(g, x, P(p, join(name, "weight")), P(p, join(name, "bias")), stride,
                     padding);
}

template <class T>
Var BasicSeparationModel<T>::norm(Graph<T>& g, const std::vector<Var>& p,
                                  const std::string& name, Var x) const {
  return ops::group_norm(g, x, P(p, join(name, "gamma")), P(p, join(name, "beta")),
                         norm_groups(g.value(x).channels()));
}

template <class T>
Var BasicSeparationModel<T>::self_attention(Graph<T>& g, const std::vector<Var>& p,
                                            const std::string& name, Var x) const {
  Var h = norm(g, p, join(name, "norm"), x);
  Var q = conv(g, p, join(name, "q"), h);
  Var k = conv(g, p, join(name, "k"), h);
  Var v = conv(g, p, join(name, "v"), h);
  Var a = ops::attention(g, q, k, v, std::size_t(config_.attention_heads));
  return ops::add(g, x, conv(g, p, join(name, "o"), a));
}

template <class T>
Var BasicSeparationModel<T>::gen_block(Graph<T>& g, const std::vector<Var>& p,
                                       const std::string& name, Var x, Var embed,
                                       bool attention) const {
  Var h = ops::silu(g, norm(g, p, join(name, "norm1"), x));
  h = conv(g, p, join(name, "conv1"), h, 1, 1);
  h = ops::silu(g, norm(g, p, join(name, "norm2"), h));
  h = conv(g, p, join(name, "conv2"), h, 1, 1);
  Var scale = conv(g, p, join(name, "film.scale"), embed);
  Var shift = conv(g, p, join(name, "film.shift"), embed);
  h = ops::film(g, h, scale, shift);
  const std::string skip = join(name, "skip.weight");
  Var res = index_.count(skip) ? conv(g, p, join(name, "skip"), x) : x;
  h = ops::add(g, h, res);
  if (attention) h = self_attention(g, p, join(name, "attn"), h);
  return h;
}

template <class T>
Var BasicSeparationModel<T>::cond_block(Graph<T>& g, const std::vector<Var>& p,
                                        const std::string& name, Var x) const {
  Var h = x;
  for (int j = 0; j < 3; ++j) {
    const std::string s = std::to_string(j);
    h = norm(g, p, join(name, "norm" + s), h);
    h = ops::prelu(g, h, P(p, join(name, "act" + s + ".slope")));
    h = conv(g, p, join(name, "conv" + s), h, 1, 1);
  }
  return ops::add(g, x, h);
}

template <class T>
Var BasicSeparationModel<T>::transformer_layer(Graph<T>& g, const std::vector<Var>& p,
                                               const std::string& name, Var x) const {
  const std::size_t heads = std::size_t(config_.transformer_heads);
  Var h = ops::layer_norm(g, x, P(p, join(name, "ln1.gamma")), P(p, join(name, "ln1.beta")));
  Var q = ops::rotary(g, conv(g, p, join(name, "attn.q"), h), heads);
  Var k = ops::rotary(g, conv(g, p, join(name, "attn.k"), h), heads);
  Var v = conv(g, p, join(name, "attn.v"), h);
  Var a = ops::attention(g, q, k, v, heads);
  x = ops::add(g, x, conv(g, p, join(name, "attn.o"), a));
  h = ops::layer_norm(g, x, P(p, join(name, "ln2.gamma")), P(p, join(name, "ln2.beta")));
  h = ops::gelu(g, conv(g, p, join(name, "ff1"), h));
  return ops::add(g, x, conv(g, p, join(name, "ff2"), h));
}

template <class T>
Var BasicSeparationModel<T>::inject(Graph<T>& g, const std::vector<Var>& p,
                                    const std::string& name, Var x,
                                    Var embedding) const {
  Var e = conv(g, p, join(name, "adapt"), embedding);
  return conv(g, p, join(name, "merge"), ops::concat_channels(g, x, e));
}

template <class T>
ConditionerOutputs BasicSeparationModel<T>::conditioner_forward(
    Graph<T>& g, const std::vector<Var>& p, Var condition) const {
  const ModelConfig& c = config_;
  const auto& cv = g.value(condition);
  check_geometry(c, cv.channels(), cv.length());
  const std::size_t bottleneck_len = c.level_length(cv.length(), c.levels - 1);

  Var h = conv(g, p, "cond.in", condition, 1, 1);
  std::vector<Var> aux;
  for (int i = 0; i < c.levels; ++i) {
    const std::string lv = "cond.enc." + std::to_string(i);
    const int n = c.down_factors[std::size_t(i)];
    if (n > 1) h = conv(g, p, join(lv, "down"), h, std::size_t(n), 0);
    h = cond_block(g, p, join(lv, "block"), h);
    Var a = ops::relu(g, norm(g, p, join(lv, "aux.norm"), h));
    a = conv(g, p, join(lv, "aux.conv"), a);
    const std::size_t factor = g.value(a).length() / bottleneck_len;
    aux.push_back(factor > 1 ? ops::avg_pool(g, a, factor) : a);
  }
  Var z = h;
  for (Var a : aux) z = ops::add(g, z, a);
  for (int l = 0; l < c.bottleneck_transformer_layers; ++l) {
    z = transformer_layer(g, p, "cond.tf." + std::to_string(l), z);
  }

  ConditionerOutputs out;
  out.latent = z;
  h = z;
  for (int i = c.levels - 1; i >= 0; --i) {
    const std::string lv = "cond.dec." + std::to_string(i);
    const int n = c.down_factors[std::size_t(i)];
    h = cond_block(g, p, join(lv, "block"), h);
    if (c.has_conditioning(i)) out.embeddings[i] = h;
    if (n > 1) {
      h = ops::conv_transpose1d(g, h, P(p, join(lv, "up.weight")), P(p, join(lv, "up.bias")),
                                std::size_t(n), up_padding(n));
    }
  }
  out.reconstruction = h;
  return out;
}

template <class T>
Var BasicSeparationModel<T>::step_embedding(Graph<T>& g, const std::vector<Var>& p,
                                            const std::vector<double>& sigmas) const {
  const auto& freq = g.value(P(p, "gen.embed.freq"));
  const std::size_t half = freq.channels();
  BasicTensor<T> features(Shape{sigmas.size(), 2 * half, 1});
  for (std::size_t b = 0; b < sigmas.size(); ++b) {
    for (std::size_t i = 0; i < half; ++i) {
      const double angle = 2.0 * std::numbers::pi * double(freq(0, i, 0)) * sigmas[b];
      features(b, i, 0) = T(std::sin(angle));
      features(b, half + i, 0) = T(std::cos(angle));
    }
  }
  Var h = g.constant(std::move(features));
  h = ops::gelu(g, conv(g, p, "gen.embed.fc0", h));
  h = ops::gelu(g, conv(g, p, "gen.embed.fc1", h));
  return conv(g, p, "gen.embed.fc2", h);
}

template <class T>
Var BasicSeparationModel<T>::generator_forward(Graph<T>& g, const std::vector<Var>& p,
                                               Var x_t, const std::vector<double>& sigmas,
                                               const ConditionerOutputs& cond) const {
  const ModelConfig& c = config_;
  const auto& xv = g.value(x_t);
  check_geometry(c, xv.channels(), xv.length());
  require(sigmas.size() == xv.batch(), "generator needs one sigma per batch item");
  for (int l : c.conditioning_levels) {
    auto it = cond.embeddings.find(l);
    if (it == cond.embeddings.end()) {
      fail(ErrorCode::InvalidArgument, "missing conditioning embedding for level " +
                                           std::to_string(l));
    }
    const auto& ev = g.value(it->second);
    if (ev.length() != c.level_length(xv.length(), l) || ev.batch() != xv.batch()) {
      fail(ErrorCode::InvalidArgument, "conditioning embedding at level " +
                                           std::to_string(l) + " has shape " +
                                           ev.shape().str());
    }
  }

  Var embed = step_embedding(g, p, sigmas);
  Var h = conv(g, p, "gen.in", x_t, 1, 1);
  Var top = h;
  std::vector<Var> skips;
  for (int i = 0; i < c.levels; ++i) {
    const std::string lv = "gen.enc." + std::to_string(i);
    const int n = c.down_factors[std::size_t(i)];
    if (n > 1) h = conv(g, p, join(lv, "down"), h, std::size_t(n), 0);
    if (c.has_conditioning(i)) h = inject(g, p, lv, h, cond.embeddings.at(i));
    for (int b = 0; b < c.generator_blocks_per_level[std::size_t(i)]; ++b) {
      h = gen_block(g, p, lv + ".block." + std::to_string(b), h, embed, c.has_attention(i));
    }
    skips.push_back(h);
  }
  for (int i = c.levels - 1; i >= 0; --i) {
    const std::string lv = "gen.dec." + std::to_string(i);
    const int n = c.down_factors[std::size_t(i)];
    if (c.has_conditioning(i)) h = inject(g, p, lv, h, cond.embeddings.at(i));
    h = ops::concat_channels(g, h, skips[std::size_t(i)]);
    for (int b = 0; b < c.generator_blocks_per_level[std::size_t(i)]; ++b) {
      h = gen_block(g, p, lv + ".block." + std::to_string(b), h, embed, c.has_attention(i));
    }
    if (n > 1) {
      h = ops::conv_transpose1d(g, h, P(p, join(lv, "up.weight")), P(p, join(lv, "up.bias")),
                                std::size_t(n), up_padding(n));
    }
  }
  h = ops::concat_channels(g, h, top);
  h = ops::silu(g, norm(g, p, "gen.out.norm", h));
  return conv(g, p, "gen.out.conv", h, 1, 1);
}

template <class T>
Var BasicSeparationModel<T>::latent_head(Graph<T>& g, const std::vector<Var>& p,
                                         Var latent) const {
  return conv(g, p, "head.lat", latent);
}

template <class T>
Var BasicSeparationModel<T>::reconstruction_head(Graph<T>& g, const std::vector<Var>& p,
                                                 Var recon) const {
  return conv(g, p, "head.rec", recon);
}

template <class T>
template <class U>
BasicSeparationModel<U> BasicSeparationModel<T>::cast() const {
  BasicSeparationModel<U> out(config_, typename BasicSeparationModel<U>::Uninitialized{});
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.params_[i].value = params_[i].value.template cast<U>();
  }
  return out;
}

template class BasicSeparationModel<float>;
template class BasicSeparationModel<double>;
template BasicSeparationModel<double> BasicSeparationModel<float>::cast<double>() const;
template BasicSeparationModel<float> BasicSeparationModel<double>::cast<float>() const;
template BasicSeparationModel<float> BasicSeparationModel<float>::cast<float>() const;

// ---------------------------------------------------------------------------
// Audio adapters

BasicTensor<float> to_tensor(const AudioBuffer& audio) {
  BasicTensor<float> t(Shape{1, audio.channels(), audio.length()});
  std::copy(audio.samples().begin(), audio.samples().end(), t.data());
  return t;
}

AudioBuffer to_audio(const BasicTensor<float>& tensor, std::size_t item,
                     double sample_rate) {
  AudioBuffer out(tensor.channels(), tensor.length(), sample_rate);
  std::copy(tensor.item(item), tensor.item(item) + tensor.channels() * tensor.length(),
            out.samples().begin());
  return out;
}

namespace {

class ModelConditioning : public Conditioning {
 public:
  std::map<int, BasicTensor<float>> embeddings;
};

}  // namespace

ModelDenoiser::ModelDenoiser(std::shared_ptr<const SeparationModel> model)
    : model_(std::move(model)) {
  require(model_ != nullptr, "ModelDenoiser needs a model");
}

std::unique_ptr<Conditioning> ModelDenoiser::prepare(const AudioBuffer& condition) const {
  Graph<float> g(false);
  const auto p = model_->bind(g);
  const auto outs = model_->conditioner_forward(g, p, g.constant(to_tensor(condition)));
  auto cond = std::make_unique<ModelConditioning>();
  for (const auto& [level, var] : outs.embeddings) cond->embeddings[level] = g.value(var);
  return cond;
}

AudioBuffer ModelDenoiser::predict_v(const AudioBuffer& x_t, double sigma,
                                     const Conditioning& conditioning) const {
  const auto* cond = dynamic_cast<const ModelConditioning*>(&conditioning);
  if (!cond) fail(ErrorCode::ContractViolation, "conditioning was not prepared by this model");
  Graph<float> g(false);
  const auto p = model_->bind(g);
  ConditionerOutputs outs;
  for (const auto& [level, t] : cond->embeddings) outs.embeddings[level] = g.constant(t);
  Var v = model_->generator_forward(g, p, g.constant(to_tensor(x_t)), {sigma}, outs);
  return to_audio(g.value(v), 0, x_t.sample_rate());
}

std::size_t ModelDenoiser::channels() const {
  return std::size_t(model_->config().channel_count);
}

double ModelDenoiser::sample_rate() const { return double(model_->config().sample_rate); }

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[8] = {'S', 'E', 'P', 'D', 'I', 'F', 'F', '\0'};

static_assert(std::endian::native == std::endian::little,
              "model files are written in host byte order");

template <class V>
void put(std::string& out, V v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  template <class V>
  V get() {
    V v{};
    std::memcpy(&v, take(sizeof v), sizeof v);
    return v;
  }
  std::string get_string(std::size_t n) { return std::string(take(n), n); }
  const char* take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorCode::CorruptFile, "model file " + path_ + " is truncated");
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_model(const std::filesystem::path& path, const SeparationModel& model) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kModelFileVersion);
  const std::string config = model.config().to_kv().to_text();
  put<std::uint64_t>(out, config.size());
  out += config;
  const auto& params = model.parameters();
  put<std::uint64_t>(out, params.size());
  for (const auto& p : params) {
    put<std::uint64_t>(out, p.name.size());
    out += p.name;
    put<std::uint64_t>(out, p.value.batch());
    put<std::uint64_t>(out, p.value.channels());
    put<std::uint64_t>(out, p.value.length());
    put<std::uint8_t>(out, p.trainable ? 1 : 0);
  }
  for (const auto& p : params) {
    out.append(reinterpret_cast<const char*>(p.value.data()), p.value.size() * sizeof(float));
  }
  write_file_atomic(path, out);
}

SeparationModel load_model(const std::filesystem::path& path, const ModelConfig* expected) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::IoError, "model file not found: " + path.string());
  }
  const std::string bytes = read_file(path);
  Reader r(bytes, path.string());
  if (std::memcmp(r.take(sizeof kMagic), kMagic, sizeof kMagic) != 0) {
    fail(ErrorCode::CorruptFile, path.string() + " is not a model file");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kModelFileVersion) {
    fail(ErrorCode::VersionMismatch, "model file version " + std::to_string(version) +
                                         ", expected " +
                                         std::to_string(kModelFileVersion));
  }
  const auto config_len = r.get<std::uint64_t>();
  ModelConfig config;
  try {
    config = ModelConfig::from_kv(KeyValues::parse(r.get_string(config_len)));
  } catch (const Error& e) {
    fail(ErrorCode::CorruptFile, "bad config in " + path.string() + ": " + e.what());
  }
  if (expected && !(*expected == config)) {
    fail(ErrorCode::ContractViolation,
         "model config in " + path.string() + " does not match the expected config");
  }
  SeparationModel model(config, 0);
  auto& params = model.parameters();
  const auto count = r.get<std::uint64_t>();
  if (count != params.size()) {
    fail(ErrorCode::CorruptFile, "manifest lists " + std::to_string(count) +
                                     " tensors, config implies " +
                                     std::to_string(params.size()));
  }
  for (auto& p : params) {
    const std::string name = r.get_string(r.get<std::uint64_t>());
    Shape shape;
    shape.batch = r.get<std::uint64_t>();
    shape.channels = r.get<std::uint64_t>();
    shape.length = r.get<std::uint64_t>();
    const bool trainable = r.get<std::uint8_t>() != 0;
    if (name != p.name || !(shape == p.value.shape()) || trainable != p.trainable) {
      fail(ErrorCode::CorruptFile, "manifest entry " + name + " " + shape.str() +
                                       " does not match " + p.name + " " +
                                       p.value.shape().str());
    }
  }
  for (auto& p : params) {
    std::memcpy(p.value.data(), r.take(p.value.size() * sizeof(float)),
                p.value.size() * sizeof(float));
  }
  if (!r.at_end()) fail(ErrorCode::CorruptFile, path.string() + " has trailing bytes");
  return model;
}

}  // namespace sepdiff
