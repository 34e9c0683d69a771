#include "sepdiff/training.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "sepdiff/error.hpp"
#include "sepdiff/file_util.hpp"
#include "sepdiff/schedule.hpp"

namespace sepdiff {

// ---------------------------------------------------------------------------
// Config

void TrainingConfig::validate() const {
  require(batch_size >= 1, "batch_size must be at least 1");
  require(learning_rate > 0.0 && std::isfinite(learning_rate),
          "learning_rate must be positive");
  require(weight_decay >= 0.0, "weight_decay must be nonnegative");
  require(warmup_steps >= 0, "warmup_steps must be nonnegative");
  require(total_steps >= warmup_steps, "total_steps must be >= warmup_steps");
  require(lambda_lat >= 0.0 && lambda_rec >= 0.0, "loss weights must be nonnegative");
  require(std::isfinite(silence_rms_db), "silence_rms_db must be finite");
  require(silence_keep_prob >= 0.0 && silence_keep_prob <= 1.0,
          "silence_keep_prob must lie in [0, 1]");
  require(chunk_seconds > 0.0, "chunk_seconds must be positive");
  require(checkpoint_every >= 0, "checkpoint_every must be nonnegative");
}

KeyValues TrainingConfig::to_kv() const {
  KeyValues kv;
  kv.set("batch_size", (long long)batch_size);
  kv.set("learning_rate", learning_rate);
  kv.set("weight_decay", weight_decay);
  kv.set("warmup_steps", (long long)warmup_steps);
  kv.set("total_steps", (long long)total_steps);
  kv.set("cosine_annealing", cosine_annealing);
  kv.set("lambda_lat", lambda_lat);
  kv.set("lambda_rec", lambda_rec);
  kv.set("silence_rms_db", silence_rms_db);
  kv.set("silence_keep_prob", silence_keep_prob);
  kv.set("augment_polarity", augment_polarity);
  kv.set("augment_channel_flip", augment_channel_flip);
  kv.set("augment_remix", augment_remix);
  kv.set("chunk_seconds", chunk_seconds);
  kv.set("seed", (long long)seed);
  kv.set("checkpoint_every", (long long)checkpoint_every);
  return kv;
}

TrainingConfig TrainingConfig::from_kv(const KeyValues& kv) {
  kv.require_known({"batch_size", "learning_rate", "weight_decay", "warmup_steps",
                    "total_steps", "cosine_annealing", "lambda_lat", "lambda_rec",
                    "silence_rms_db", "silence_keep_prob", "augment_polarity",
                    "augment_channel_flip", "augment_remix", "chunk_seconds", "seed",
                    "checkpoint_every"});
  TrainingConfig d;
  TrainingConfig c;
  c.batch_size = int(kv.get_int("batch_size", d.batch_size));
  c.learning_rate = kv.get_double("learning_rate", d.learning_rate);
  c.weight_decay = kv.get_double("weight_decay", d.weight_decay);
  c.warmup_steps = int(kv.get_int("warmup_steps", d.warmup_steps));
  c.total_steps = int(kv.get_int("total_steps", d.total_steps));
  c.cosine_annealing = kv.get_bool("cosine_annealing", d.cosine_annealing);
  c.lambda_lat = kv.get_double("lambda_lat", d.lambda_lat);
  c.lambda_rec = kv.get_double("lambda_rec", d.lambda_rec);
  c.silence_rms_db = kv.get_double("silence_rms_db", d.silence_rms_db);
  c.silence_keep_prob = kv.get_double("silence_keep_prob", d.silence_keep_prob);
  c.augment_polarity = kv.get_bool("augment_polarity", d.augment_polarity);
  c.augment_channel_flip = kv.get_bool("augment_channel_flip", d.augment_channel_flip);
  c.augment_remix = kv.get_bool("augment_remix", d.augment_remix);
  c.chunk_seconds = kv.get_double("chunk_seconds", d.chunk_seconds);
  c.seed = std::uint64_t(kv.get_int("seed", (long long)d.seed));
  c.checkpoint_every = int(kv.get_int("checkpoint_every", d.checkpoint_every));
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Losses

template <class T>
DiffusionDraw<T> draw_diffusion_inputs(const Shape& shape, NoiseStream& rng) {
  DiffusionDraw<T> d;
  d.sigmas.resize(shape.batch);
  for (auto& s : d.sigmas) s = rng.uniform();
  d.noise = BasicTensor<T>(shape);
  for (auto& v : d.noise.values()) v = T(rng.gaussian());
  return d;
}

template <class T>
void diffuse_batch(const BasicTensor<T>& x0, const DiffusionDraw<T>& draw,
                   BasicTensor<T>& x_t, BasicTensor<T>& v) {
  require(x0.shape() == draw.noise.shape() && draw.sigmas.size() == x0.batch(),
          "diffusion draw does not match the batch");
  x_t = BasicTensor<T>(x0.shape());
  v = BasicTensor<T>(x0.shape());
  const std::size_t per_item = x0.channels() * x0.length();
  for (std::size_t b = 0; b < x0.batch(); ++b) {
    const auto k = coeffs(draw.sigmas[b]);
    const T* x = x0.item(b);
    const T* e = draw.noise.item(b);
    T* xt = x_t.item(b);
    T* vv = v.item(b);
    for (std::size_t i = 0; i < per_item; ++i) {
      xt[i] = T(k.alpha * double(x[i]) + k.beta * double(e[i]));
      vv[i] = T(k.alpha * double(e[i]) - k.beta * double(x[i]));
    }
  }
}

template <class T>
LossVars record_losses(Graph<T>& g, const BasicSeparationModel<T>& model,
                       const std::vector<Var>& params, const BasicTensor<T>& x0,
                       const BasicTensor<T>& condition, const DiffusionDraw<T>& draw,
                       const LossWeights& weights) {
  require(x0.shape() == condition.shape(), "target and condition shapes differ");
  BasicTensor<T> x_t, v;
  diffuse_batch(x0, draw, x_t, v);

  const auto cond = model.conditioner_forward(g, params, g.constant(condition));
  Var v_hat = model.generator_forward(g, params, g.constant(std::move(x_t)), draw.sigmas,
                                      cond);
  LossVars out;
  out.diff = ops::mse(g, v_hat, g.constant(std::move(v)));

  const std::size_t factor = model.config().total_factor();
  Var target = g.constant(x0);
  Var pooled = factor > 1 ? ops::avg_pool(g, target, factor) : target;
  out.lat = ops::mse(g, model.latent_head(g, params, cond.latent), pooled);
  out.rec = ops::mse(g, model.reconstruction_head(g, params, cond.reconstruction), target);

  Var total = ops::scale(g, out.diff, weights.diff);
  total = ops::add(g, total, ops::scale(g, out.lat, weights.lat));
  out.total = ops::add(g, total, ops::scale(g, out.rec, weights.rec));
  return out;
}

namespace {

template <class T>
LossReport report_of(const Graph<T>& g, const LossVars& vars) {
  LossReport r;
  r.l_diff = double(g.value(vars.diff).data()[0]);
  r.l_lat = double(g.value(vars.lat).data()[0]);
  r.l_rec = double(g.value(vars.rec).data()[0]);
  r.total = double(g.value(vars.total).data()[0]);
  if (!std::isfinite(r.total) || !std::isfinite(r.l_diff) || !std::isfinite(r.l_lat) ||
      !std::isfinite(r.l_rec)) {
    fail(ErrorCode::NumericFailure, "non-finite training loss");
  }
  return r;
}

}  // namespace

template <class T>
LossAndGrads<T> loss_and_gradients(const BasicSeparationModel<T>& model,
                                   const BasicTensor<T>& x0,
                                   const BasicTensor<T>& condition,
                                   const DiffusionDraw<T>& draw,
                                   const LossWeights& weights) {
  Graph<T> g(true);
  const auto params = model.bind(g);
  const auto vars = record_losses(g, model, params, x0, condition, draw, weights);
  LossAndGrads<T> out;
  out.report = report_of(g, vars);
  g.backward(vars.total);
  const auto& plist = model.parameters();
  out.grads.reserve(plist.size());
  for (std::size_t i = 0; i < plist.size(); ++i) {
    const auto& gr = g.grad(params[i]);
    out.grads.push_back(gr.empty() ? BasicTensor<T>(plist[i].value.shape()) : gr);
  }
  return out;
}

template <class T>
LossReport evaluate_losses(const BasicSeparationModel<T>& model, const BasicTensor<T>& x0,
                           const BasicTensor<T>& condition, const DiffusionDraw<T>& draw,
                           const LossWeights& weights) {
  Graph<T> g(false);
  const auto params = model.bind(g);
  return report_of(g, record_losses(g, model, params, x0, condition, draw, weights));
}

#define SEPDIFF_TRAINING(T)                                                         \
  template DiffusionDraw<T> draw_diffusion_inputs<T>(const Shape&, NoiseStream&);   \
  template void diffuse_batch(const BasicTensor<T>&, const DiffusionDraw<T>&,       \
                              BasicTensor<T>&, BasicTensor<T>&);                    \
  template LossVars record_losses(Graph<T>&, const BasicSeparationModel<T>&,        \
                                  const std::vector<Var>&, const BasicTensor<T>&,   \
                                  const BasicTensor<T>&, const DiffusionDraw<T>&,   \
                                  const LossWeights&);                              \
  template LossAndGrads<T> loss_and_gradients(                                      \
      const BasicSeparationModel<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
      const DiffusionDraw<T>&, const LossWeights&);                                 \
  template LossReport evaluate_losses(const BasicSeparationModel<T>&,               \
                                      const BasicTensor<T>&, const BasicTensor<T>&, \
                                      const DiffusionDraw<T>&, const LossWeights&);

SEPDIFF_TRAINING(float)
SEPDIFF_TRAINING(double)
#undef SEPDIFF_TRAINING

// ---------------------------------------------------------------------------
// Data pipeline

std::optional<ChunkPair> filter_and_augment(ChunkPair item, const TrainingConfig& config,
                                            NoiseStream& rng,
                                            const ChunkPair* remix_source) {
  require_compatible(item.mixture, item.target, "training chunk");
  const double rms = item.target.rms();
  const double db = rms > 0.0 ? 20.0 * std::log10(rms) : -INFINITY;
  if (db < config.silence_rms_db && !rng.bernoulli(config.silence_keep_prob)) {
    return std::nullopt;
  }

  const std::size_t channels = item.target.channels();
  const std::size_t len = item.target.length();
  // Work on the accompaniment so every branch keeps mixture = target + accompaniment.
  std::vector<double> acc(item.target.size());
  {
    const auto m = item.mixture.samples();
    const auto t = item.target.samples();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = double(m[i]) - double(t[i]);
  }
  const bool polarity = config.augment_polarity && rng.bernoulli(0.5);
  const bool flip = config.augment_channel_flip && rng.bernoulli(0.5);
  const bool remix = config.augment_remix && rng.bernoulli(0.5);

  if (remix && remix_source) {
    require_compatible(remix_source->mixture, remix_source->target, "remix chunk");
    require_compatible(remix_source->target, item.target, "remix chunk");
    const auto m = remix_source->mixture.samples();
    const auto t = remix_source->target.samples();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = double(m[i]) - double(t[i]);
  }
  if (polarity) {
    for (auto& v : item.target.samples()) v = -v;
  }
  if (flip && channels >= 2) {
    auto t = item.target.samples();
    for (std::size_t n = 0; n < len; ++n) {
      std::swap(t[n], t[(channels - 1) * len + n]);
      std::swap(acc[n], acc[(channels - 1) * len + n]);
    }
  }
  auto m = item.mixture.samples();
  const auto t = item.target.samples();
  for (std::size_t i = 0; i < acc.size(); ++i) m[i] = float(double(t[i]) + acc[i]);
  return item;
}

// ---------------------------------------------------------------------------
// Optimizer

double learning_rate_at(const TrainingConfig& config, long long step) {
  const double peak = config.learning_rate;
  const long long w = config.warmup_steps;
  const long long total = config.total_steps;
  if (step < w) return peak * double(step) / double(w);
  if (!config.cosine_annealing) return peak;
  if (total <= w) return step >= total ? 0.0 : peak;
  if (step >= total) return 0.0;
  const double progress = double(step - w) / double(total - w);
  return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * progress));
}

void AdamW::step(std::vector<Parameter<float>>& params,
                 const std::vector<BasicTensor<float>>& grads, double lr,
                 double weight_decay) {
  require(grads.size() == params.size(), "one gradient per parameter expected");
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].value.size(), 0.0);
      v_[i].assign(params[i].value.size(), 0.0);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].trainable && !grads[i].all_finite()) {
      fail(ErrorCode::NumericFailure, "non-finite gradient for " + params[i].name);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    float* w = params[i].value.data();
    const float* g = grads[i].data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double gj = double(g[j]);
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
      w[j] = float(double(w[j]) * (1.0 - lr * weight_decay) - lr * update);
    }
  }
}

// ---------------------------------------------------------------------------
// Loop

BasicTensor<float> stack(const std::vector<AudioBuffer>& items) {
  require(!items.empty(), "cannot stack an empty batch");
  const std::size_t c = items[0].channels(), l = items[0].length();
  BasicTensor<float> t(Shape{items.size(), c, l});
  for (std::size_t b = 0; b < items.size(); ++b) {
    require(items[b].channels() == c && items[b].length() == l, "ragged batch");
    std::copy(items[b].samples().begin(), items[b].samples().end(), t.item(b));
  }
  return t;
}

std::size_t training_chunk_length(const ModelConfig& model, const TrainingConfig& config) {
  const std::size_t f = model.total_factor();
  const auto raw = std::size_t(std::llround(config.chunk_seconds * model.sample_rate));
  const std::size_t len = raw / f * f;
  require(len > 0, "chunk_seconds is shorter than the model's down factor");
  return len;
}

namespace {

ChunkPair random_chunk(const std::vector<TrackPair>& tracks, std::size_t len,
                       NoiseStream& rng) {
  const auto& t = tracks[rng.below(tracks.size())];
  const std::size_t avail = t.target.length();
  const std::size_t offset = avail > len ? rng.below(avail - len + 1) : 0;
  return {t.mixture.slice(offset, len), t.target.slice(offset, len)};
}

}  // namespace

void write_loss_csv(const std::filesystem::path& path, const TrainResult& result) {
  std::ostringstream out;
  out.precision(9);
  out << "# sepdiff-loss v1\n";
  out << "step,l_diff,l_lat,l_rec,lr\n";
  for (std::size_t i = 0; i < result.curve.size(); ++i) {
    const auto& r = result.curve[i];
    out << i << ',' << r.l_diff << ',' << r.l_lat << ',' << r.l_rec << ','
        << result.learning_rates[i] << '\n';
  }
  write_file_atomic(path, out.str());
}

TrainResult train(SeparationModel& model, const std::vector<TrackPair>& tracks,
                  const TrainingConfig& config, const TrainOptions& options) {
  config.validate();
  if (tracks.empty()) fail(ErrorCode::EmptyDataset, "no training tracks");
  const ModelConfig& mc = model.config();
  for (const auto& t : tracks) {
    if (t.target.channels() != std::size_t(mc.channel_count) ||
        std::lround(t.target.sample_rate()) != mc.sample_rate) {
      fail(ErrorCode::InvalidArgument,
           "track " + t.name + " does not match the model's channels or sample rate");
    }
  }
  const std::size_t len = training_chunk_length(mc, config);
  const NoiseStream root(config.seed);
  NoiseStream train_rng = root.substream("training");
  NoiseStream data_rng = root.substream("augmentation");
  AdamW opt;
  TrainResult result;
  const LossWeights weights{1.0, config.lambda_lat, config.lambda_rec};
  const std::size_t max_draws = 1000 * std::size_t(config.batch_size);

  for (int step = 0; step < config.total_steps; ++step) {
    std::vector<AudioBuffer> targets, mixtures;
    std::size_t draws = 0;
    while (targets.size() < std::size_t(config.batch_size)) {
      if (++draws > max_draws) {
        fail(ErrorCode::EmptyDataset, "silence filter discarded every drawn chunk");
      }
      ChunkPair item = random_chunk(tracks, len, data_rng);
      ChunkPair other = random_chunk(tracks, len, data_rng);
      auto kept = filter_and_augment(std::move(item), config, data_rng, &other);
      if (!kept) {
        ++result.discarded_silent;
        continue;
      }
      targets.push_back(std::move(kept->target));
      mixtures.push_back(std::move(kept->mixture));
    }
    const auto x0 = stack(targets);
    const auto c = stack(mixtures);
    const auto draw = draw_diffusion_inputs<float>(x0.shape(), train_rng);
    auto lg = loss_and_gradients(model, x0, c, draw, weights);
    const double lr = learning_rate_at(config, step);
    opt.step(model.parameters(), lg.grads, lr, config.weight_decay);
    result.curve.push_back(lg.report);
    result.learning_rates.push_back(lr);

    if (options.log && options.log_every > 0 && step % options.log_every == 0) {
      *options.log << "step " << step << " l_diff " << lg.report.l_diff << " l_lat "
                   << lg.report.l_lat << " l_rec " << lg.report.l_rec << " lr " << lr
                   << '\n';
    }
    if (options.checkpoint && config.checkpoint_every > 0 &&
        (step + 1) % config.checkpoint_every == 0) {
      save_model(*options.checkpoint, model);
      if (options.loss_csv) write_loss_csv(*options.loss_csv, result);
    }
  }
  if (options.loss_csv) write_loss_csv(*options.loss_csv, result);
  return result;
}

}  // namespace sepdiff
