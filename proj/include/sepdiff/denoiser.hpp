#pragma once

#include <cstddef>
#include <memory>

#include "sepdiff/audio_buffer.hpp"

namespace sepdiff {

/// Whatever a denoiser precomputes from the conditioning signal. Opaque to
/// the sampler.
class Conditioning {
 public:
  virtual ~Conditioning() = default;
};

/// v-prediction network m(x_t, sigma, c). Implementations must be safe to
/// call concurrently: prediction may not mutate the denoiser.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  /// Called once per sampling run with the mixture.
  virtual std::unique_ptr<Conditioning> prepare(const AudioBuffer& condition) const;

  /// Predicted velocity, same shape as x_t.
  virtual AudioBuffer predict_v(const AudioBuffer& x_t, double sigma,
                                const Conditioning& conditioning) const = 0;

  /// Required channel count / sample rate of inputs; 0 accepts anything.
  virtual std::size_t channels() const { return 0; }
  virtual double sample_rate() const { return 0.0; }
};

/// Exact MMSE v-prediction when x0 ~ N(mean, std^2) independently per sample:
///   x0_hat = mean + alpha s^2 / (alpha^2 s^2 + beta^2) (x_t - alpha mean)
///   eps_hat = (x_t - alpha x0_hat) / beta, v = alpha eps_hat - beta x0_hat.
/// At sigma = 0 the posterior mean is x_t itself and v = 0.
double oracle_predict_v(double x_t, double sigma, double mean, double std);

/// Posterior mean used by the oracle, exposed for tests.
double oracle_posterior_mean(double x_t, double sigma, double mean, double std);

class GaussianOracleDenoiser : public Denoiser {
 public:
  /// Scalar prior mean shared by every sample.
  GaussianOracleDenoiser(double mean, double std);
  /// Per-sample prior mean; x_t must match its shape.
  GaussianOracleDenoiser(AudioBuffer mean, double std);

  AudioBuffer predict_v(const AudioBuffer& x_t, double sigma,
                        const Conditioning& conditioning) const override;

 private:
  double mean_ = 0.0;
  std::shared_ptr<const AudioBuffer> mean_buffer_;
  double std_;
};

}  // namespace sepdiff
