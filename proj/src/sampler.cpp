#include "sepdiff/sampler.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "sepdiff/error.hpp"
#include "sepdiff/file_util.hpp"
#include "sepdiff/schedule.hpp"

namespace sepdiff {

void SamplerConfig::validate(double sample_rate) const {
  require(steps >= 1, "sampler needs at least one step");
  require(eta >= 0.0 && std::isfinite(eta), "eta must be a finite value >= 0");
  if (cutoff_hz) {
    if (!(*cutoff_hz > 0.0 && *cutoff_hz < sample_rate / 2.0)) {
      fail(ErrorCode::InvalidArgument,
           "cutoff " + std::to_string(*cutoff_hz) + " Hz outside (0, " +
               std::to_string(sample_rate / 2.0) + ") Hz");
    }
  }
}

RefinementScales refinement_scales(double eta, double sigma_t,
                                   double sigma_prev) {
  if (!(sigma_prev >= 0.0 && sigma_prev < sigma_t && sigma_t <= 1.0)) {
    fail(ErrorCode::InvalidArgument,
         "refinement scales need 0 <= sigma_prev < sigma_t <= 1 (got " +
             std::to_string(sigma_prev) + ", " + std::to_string(sigma_t) + ")");
  }
  require(eta >= 0.0, "eta must be nonnegative");
  const auto now = coeffs(sigma_t);
  const auto prev = coeffs(sigma_prev);
  if (eta == 0.0 || prev.beta == 0.0) return {0.0, prev.beta};

  const double b_prev2 = prev.beta * prev.beta;
  const double ratio = b_prev2 / (now.beta * now.beta);
  const double shrink = 1.0 - (now.alpha * now.alpha) / (prev.alpha * prev.alpha);
  const double delta = eta * std::sqrt(ratio) * std::sqrt(std::max(shrink, 0.0));
  const double delta2 = delta * delta;
  if (delta2 > b_prev2 * (1.0 + 1e-12)) {
    fail(ErrorCode::InvalidArgument,
         "eta " + std::to_string(eta) + " too large for step sigma " +
             std::to_string(sigma_t) + " -> " + std::to_string(sigma_prev) +
             ": delta^2 exceeds beta_prev^2");
  }
  return {delta, std::sqrt(std::max(b_prev2 - delta2, 0.0))};
}

AudioBuffer ddim_deterministic_update(const AudioBuffer& x0_hat,
                                      const AudioBuffer& eps_hat,
                                      double sigma_prev) {
  require_compatible(x0_hat, eps_hat, "ddim_deterministic_update");
  const auto prev = coeffs(sigma_prev);
  AudioBuffer out(x0_hat.channels(), x0_hat.length(), x0_hat.sample_rate());
  const auto x0 = x0_hat.samples();
  const auto eps = eps_hat.samples();
  auto o = out.samples();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = float(prev.alpha * double(x0[i]) + prev.beta * double(eps[i]));
  }
  return out;
}

namespace {

void check_finite(const AudioBuffer& v, int t) {
  if (!v.all_finite()) {
    fail(ErrorCode::NumericFailure,
         "denoiser produced non-finite output at step t=" + std::to_string(t));
  }
}

struct Estimates {
  AudioBuffer x0;
  AudioBuffer eps;
};

Estimates estimate(const AudioBuffer& x_t, const AudioBuffer& v, double sigma) {
  return {recover_x0(x_t, v, sigma), recover_eps(x_t, v, sigma)};
}

AudioBuffer predict(const AudioBuffer& x_t, int t, double sigma,
                    const Denoiser& denoiser, const Conditioning& cond) {
  AudioBuffer v = denoiser.predict_v(x_t, sigma, cond);
  if (!v.same_shape(x_t)) {
    fail(ErrorCode::ContractViolation,
         "denoiser changed the sample shape at step t=" + std::to_string(t));
  }
  check_finite(v, t);
  return v;
}

void check_inputs(const AudioBuffer& mixture, const Denoiser& denoiser) {
  require(!mixture.empty(), "cannot sample for an empty mixture");
  if (denoiser.channels() != 0 && denoiser.channels() != mixture.channels()) {
    fail(ErrorCode::InvalidArgument,
         "mixture has " + std::to_string(mixture.channels()) +
             " channels, denoiser expects " + std::to_string(denoiser.channels()));
  }
  if (denoiser.sample_rate() != 0.0 &&
      denoiser.sample_rate() != mixture.sample_rate()) {
    fail(ErrorCode::InvalidArgument,
         "mixture sample rate " + std::to_string(mixture.sample_rate()) +
             " differs from the denoiser's " + std::to_string(denoiser.sample_rate()));
  }
}

}  // namespace

StepResult ddim_step(const AudioBuffer& x_t, int t, double sigma_t,
                     double sigma_prev, const Denoiser& denoiser,
                     const Conditioning& conditioning, double eta,
                     const BiquadCascade* filter, NoiseStream& rng) {
  require(sigma_prev < sigma_t, "ddim_step needs sigma_prev < sigma_t");
  if (!x_t.all_finite()) {
    fail(ErrorCode::NumericFailure, "non-finite sample entering step t=" + std::to_string(t));
  }
  const AudioBuffer v = predict(x_t, t, sigma_t, denoiser, conditioning);
  Estimates est = estimate(x_t, v, sigma_t);

  StepDiagnostics diag{t, sigma_t, 0.0, 0.0, est.x0.rms()};
  if (sigma_prev == 0.0) {
    AudioBuffer x0 = est.x0;
    return {std::move(x0), std::move(est.x0), diag};
  }

  RefinementScales scales{0.0, 0.0};
  try {
    scales = refinement_scales(eta, sigma_t, sigma_prev);
  } catch (const Error& e) {
    fail(e.code(), "step t=" + std::to_string(t) + ": " + e.what());
  }
  diag.delta = scales.delta;
  diag.beta_prime = scales.beta_prime;

  const auto prev = coeffs(sigma_prev);
  AudioBuffer x_prev(x_t.channels(), x_t.length(), x_t.sample_rate());
  const auto x0 = est.x0.samples();
  const auto eps = est.eps.samples();
  auto out = x_prev.samples();
  if (scales.delta == 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = float(prev.alpha * double(x0[i]) + scales.beta_prime * double(eps[i]));
    }
  } else {
    const AudioBuffer noise = normalized_filtered_noise(
        filter, x_t.channels(), x_t.length(), x_t.sample_rate(), rng);
    const auto n = noise.samples();
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = float(prev.alpha * double(x0[i]) + scales.beta_prime * double(eps[i]) +
                     scales.delta * double(n[i]));
    }
  }
  return {std::move(x_prev), std::move(est.x0), diag};
}

SampleResult sample(const AudioBuffer& mixture, const Denoiser& denoiser,
                    const SamplerConfig& cfg) {
  check_inputs(mixture, denoiser);
  cfg.validate(mixture.sample_rate());

  std::optional<BiquadCascade> filter;
  if (cfg.cutoff_hz && cfg.eta > 0.0) {
    filter = design_butterworth_hp(*cfg.cutoff_hz, mixture.sample_rate(), 4);
  }
  const auto schedule = NoiseSchedule::make(cfg.steps);
  const auto conditioning = denoiser.prepare(mixture);

  NoiseStream rng = NoiseStream(cfg.seed).substream("sampling");
  AudioBuffer x = gaussian_noise(mixture.channels(), mixture.length(),
                                 mixture.sample_rate(), rng);
  SampleResult result;
  result.trace.reserve(std::size_t(cfg.steps));
  for (int t = cfg.steps; t >= 1; --t) {
    StepResult step = ddim_step(x, t, schedule[t], schedule[t - 1], denoiser,
                                *conditioning, cfg.eta,
                                filter ? &*filter : nullptr, rng);
    result.trace.push_back(step.diag);
    x = std::move(step.x_prev);
  }
  result.estimate = std::move(x);
  return result;
}

AudioBuffer sample_deterministic(const AudioBuffer& mixture,
                                 const Denoiser& denoiser, int steps,
                                 std::uint64_t seed) {
  check_inputs(mixture, denoiser);
  const auto schedule = NoiseSchedule::make(steps);
  const auto conditioning = denoiser.prepare(mixture);
  NoiseStream rng = NoiseStream(seed).substream("sampling");
  AudioBuffer x = gaussian_noise(mixture.channels(), mixture.length(),
                                 mixture.sample_rate(), rng);
  for (int t = steps; t >= 1; --t) {
    const AudioBuffer v = predict(x, t, schedule[t], denoiser, *conditioning);
    Estimates est = estimate(x, v, schedule[t]);
    x = t == 1 ? std::move(est.x0)
               : ddim_deterministic_update(est.x0, est.eps, schedule[t - 1]);
  }
  return x;
}

void write_trace_csv(const std::filesystem::path& path,
                     const std::vector<StepDiagnostics>& trace) {
  std::ostringstream out;
  out.precision(10);
  out << "t,sigma,delta,beta_prime,x0_rms\n";
  for (const auto& d : trace) {
    out << d.t << ',' << d.sigma << ',' << d.delta << ',' << d.beta_prime << ','
        << d.x0_estimate_rms << '\n';
  }
  write_file_atomic(path, out.str());
}

std::uint64_t chunk_seed(std::uint64_t seed, std::size_t index) {
  return seed ^ stream_label("chunk", index);
}

AudioBuffer separate(const AudioBuffer& mixture, const Denoiser& denoiser,
                     const SeparationOptions& options, std::size_t multiple,
                     std::vector<StepDiagnostics>* trace) {
  options.sampler.validate(mixture.sample_rate());
  const auto plan = ChunkPlan::for_duration(options.chunk_seconds, options.overlap,
                                            mixture.sample_rate(), multiple);
  return chunk_and_process(mixture, plan, [&](const AudioBuffer& chunk, std::size_t k) {
    SamplerConfig cfg = options.sampler;
    cfg.seed = chunk_seed(options.sampler.seed, k);
    SampleResult r = sample(chunk, denoiser, cfg);
    if (trace && k == 0) *trace = std::move(r.trace);
    return std::move(r.estimate);
  });
}

}  // namespace sepdiff
