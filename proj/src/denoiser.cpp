#include "sepdiff/denoiser.hpp"

#include "sepdiff/error.hpp"
#include "sepdiff/schedule.hpp"

namespace sepdiff {

std::unique_ptr<Conditioning> Denoiser::prepare(const AudioBuffer&) const {
  return std::make_unique<Conditioning>();
}

double oracle_posterior_mean(double x_t, double sigma, double mean, double std) {
  const auto c = coeffs(sigma);
  const double s2 = std * std;
  const double denom = c.alpha * c.alpha * s2 + c.beta * c.beta;
  if (denom == 0.0) return x_t;  // sigma = 0 with a point-mass prior
  return mean + c.alpha * s2 / denom * (x_t - c.alpha * mean);
}

double oracle_predict_v(double x_t, double sigma, double mean, double std) {
  require(std >= 0.0, "oracle prior std must be nonnegative");
  const auto c = coeffs(sigma);
  if (c.beta == 0.0) return 0.0;
  const double x0 = oracle_posterior_mean(x_t, sigma, mean, std);
  const double eps = (x_t - c.alpha * x0) / c.beta;
  return c.alpha * eps - c.beta * x0;
}

GaussianOracleDenoiser::GaussianOracleDenoiser(double mean, double std)
    : mean_(mean), std_(std) {
  require(std >= 0.0, "oracle prior std must be nonnegative");
}

GaussianOracleDenoiser::GaussianOracleDenoiser(AudioBuffer mean, double std)
    : mean_buffer_(std::make_shared<const AudioBuffer>(std::move(mean))),
      std_(std) {
  require(std >= 0.0, "oracle prior std must be nonnegative");
}

AudioBuffer GaussianOracleDenoiser::predict_v(const AudioBuffer& x_t,
                                              double sigma,
                                              const Conditioning&) const {
  if (mean_buffer_ && !mean_buffer_->same_shape(x_t)) {
    fail(ErrorCode::InvalidArgument, "oracle mean shape differs from x_t");
  }
  AudioBuffer v(x_t.channels(), x_t.length(), x_t.sample_rate());
  const auto in = x_t.samples();
  auto out = v.samples();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double mu = mean_buffer_ ? double(mean_buffer_->samples()[i]) : mean_;
    out[i] = float(oracle_predict_v(in[i], sigma, mu, std_));
  }
  return v;
}

}  // namespace sepdiff
