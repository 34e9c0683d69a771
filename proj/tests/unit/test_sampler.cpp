#include <cmath>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "helpers.hpp"
#include "sepdiff/error.hpp"
#include "sepdiff/sampler.hpp"
#include "sepdiff/schedule.hpp"

using namespace sepdiff;

namespace {

/// Scalar re-implementation of the variance split, written from the formulas.
std::pair<double, double> scales_oracle(double eta, double st, double sp) {
  const double at = std::cos(std::numbers::pi / 2 * st), bt = std::sin(std::numbers::pi / 2 * st);
  const double ap = std::cos(std::numbers::pi / 2 * sp), bp = std::sin(std::numbers::pi / 2 * sp);
  const double d = eta * std::sqrt((bp * bp) / (bt * bt)) * std::sqrt(1.0 - (at * at) / (ap * ap));
  return {d, std::sqrt(bp * bp - d * d)};
}

/// Scalar Bayes posterior mean by quadrature over x0 ~ N(mu, s^2).
double bayes_mean(double x_t, double sigma, double mu, double s) {
  const double a = std::cos(std::numbers::pi / 2 * sigma), b = std::sin(std::numbers::pi / 2 * sigma);
  double num = 0.0, den = 0.0;
  for (int i = -4000; i <= 4000; ++i) {
    const double x0 = mu + s * 8.0 * i / 4000.0;
    const double prior = std::exp(-0.5 * (x0 - mu) * (x0 - mu) / (s * s));
    const double r = (x_t - a * x0) / b;
    const double like = std::exp(-0.5 * r * r);
    num += x0 * prior * like;
    den += prior * like;
  }
  return num / den;
}

class NanDenoiser : public Denoiser {
 public:
  AudioBuffer predict_v(const AudioBuffer& x, double, const Conditioning&) const override {
    AudioBuffer v = x;
    v.samples()[0] = std::nanf("");
    return v;
  }
};

class ShrinkDenoiser : public Denoiser {
 public:
  AudioBuffer predict_v(const AudioBuffer& x, double, const Conditioning&) const override {
    AudioBuffer v = x;
    for (auto& s : v.samples()) s *= 0.5f;
    return v;
  }
};

}  // namespace

TEST_CASE("refinement scales: examples") {
  auto r = refinement_scales(0.0, 0.6, 0.4);
  CHECK(r.delta == 0.0);
  CHECK(r.beta_prime == doctest::Approx(coeffs(0.4).beta).epsilon(1e-15));

  r = refinement_scales(1.0, 1.0, 0.5);
  CHECK(r.delta == doctest::Approx(0.70710678).epsilon(1e-8));
  CHECK(std::abs(r.beta_prime) < 1e-7);
  const auto o1 = scales_oracle(1.0, 1.0, 0.5);
  CHECK(std::abs(r.delta - o1.first) < 1e-9);

  r = refinement_scales(0.4, 0.5, 0.25);
  const auto o = scales_oracle(0.4, 0.5, 0.25);
  CHECK(std::abs(r.delta - o.first) < 1e-9);
  CHECK(std::abs(r.beta_prime - o.second) < 1e-9);
}

TEST_CASE("refinement scales: variance split over schedules") {
  for (int T : {10, 20, 50, 100}) {
    const auto s = NoiseSchedule::make(T);
    for (double eta : {0.0, 0.2, 0.4, 0.8, 1.0}) {
      for (int t = T; t >= 1; --t) {
        const auto r = refinement_scales(eta, s[t], s[t - 1]);
        const double bp = coeffs(s[t - 1]).beta;
        CHECK(r.delta >= 0.0);
        CHECK(r.beta_prime >= 0.0);
        CHECK(std::abs(r.beta_prime * r.beta_prime + r.delta * r.delta - bp * bp) < 1e-6);
      }
    }
  }
}

TEST_CASE("refinement scales: eta too large is rejected with the step") {
  try {
    refinement_scales(5.0, 0.5, 0.25);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidArgument);
  }
  CHECK_THROWS_AS(refinement_scales(0.2, 0.3, 0.4), Error);
}

TEST_CASE("oracle posterior mean matches scalar Bayes") {
  for (double sigma : {0.1, 0.5, 0.9}) {
    for (double x : {-1.0, 0.2, 0.7}) {
      CHECK(oracle_posterior_mean(x, sigma, 0.3, 0.5) ==
            doctest::Approx(bayes_mean(x, sigma, 0.3, 0.5)).epsilon(1e-6));
    }
  }
  // Point-mass prior.
  CHECK(oracle_posterior_mean(1.7, 0.4, 0.3, 0.0) == doctest::Approx(0.3));
  // sigma = 1 carries no information about x0: the posterior is the prior.
  CHECK(oracle_posterior_mean(1.7, 1.0, 0.0, 1.0) == doctest::Approx(0.0));
  // sigma = 0: x0 = x_t and v = 0.
  CHECK(oracle_posterior_mean(1.7, 0.0, 0.3, 0.05) == doctest::Approx(1.7));
  CHECK(oracle_predict_v(1.7, 0.0, 0.3, 0.05) == 0.0);
  for (double sigma : {0.2, 0.6, 1.0}) {
    AudioBuffer x(1, 1, 8000, 0.9f);
    AudioBuffer v(1, 1, 8000, float(oracle_predict_v(0.9, sigma, 0.3, 0.2)));
    CHECK(recover_x0(x, v, sigma).at(0, 0) ==
          doctest::Approx(oracle_posterior_mean(0.9, sigma, 0.3, 0.2)).epsilon(1e-6));
  }
}

TEST_CASE("eta = 0 reproduces the deterministic sampler bitwise") {
  const AudioBuffer mix(2, 256, 16000);
  GaussianOracleDenoiser d(0.3, 0.05);
  for (int T : {10, 20, 50, 100}) {
    SamplerConfig cfg;
    cfg.steps = T;
    cfg.eta = 0.0;
    cfg.seed = 17;
    const auto a = sample(mix, d, cfg);
    cfg.seed = 17;
    cfg.cutoff_hz.reset();
    const auto b = sample(mix, d, cfg);
    CHECK(a.estimate == b.estimate);
    CHECK(a.estimate == sample_deterministic(mix, d, T, 17));
    for (const auto& s : a.trace) CHECK(s.delta == 0.0);
  }
}

TEST_CASE("single step returns -v on pure noise") {
  const AudioBuffer mix(1, 64, 16000);
  ShrinkDenoiser d;
  SamplerConfig cfg;
  cfg.steps = 1;
  cfg.eta = 0.0;
  cfg.seed = 3;
  const auto out = sample(mix, d, cfg).estimate;
  NoiseStream rng = NoiseStream(3).substream("sampling");
  const auto xT = gaussian_noise(1, 64, 16000, rng);
  for (std::size_t i = 0; i < 64; ++i) CHECK(out.at(0, i) == -0.5f * xT.at(0, i));
}

TEST_CASE("true-velocity denoiser recovers x0 at every step") {
  const auto x0 = testing::random_audio(2, 128, 16000, 21, 0.3);
  GaussianOracleDenoiser exact(x0, 0.0);
  NoiseStream rng(5);
  const auto eps = gaussian_noise(2, 128, 16000, rng);
  const auto s = NoiseSchedule::make(20);
  AudioBuffer x = forward_diffuse(x0, eps, 1.0);
  const auto cond = exact.prepare(x0);
  for (int t = 20; t >= 1; --t) {
    auto step = ddim_step(x, t, s[t], s[t - 1], exact, *cond, 0.0, nullptr, rng);
    for (std::size_t i = 0; i < x0.size(); ++i) {
      CHECK(std::abs(step.x0_estimate.samples()[i] - x0.samples()[i]) < 1e-5);
    }
    x = std::move(step.x_prev);
  }
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(std::abs(x.samples()[i] - x0.samples()[i]) < 1e-5);
}

TEST_CASE("Gaussian oracle: Monte Carlo moments match linear propagation") {
  const double mu = 0.3, sd = 0.05;
  const int T = 50;
  const std::size_t n = 10000;
  GaussianOracleDenoiser d(mu, sd);
  SamplerConfig cfg;
  cfg.steps = T;
  cfg.eta = 0.0;
  cfg.seed = 2024;
  const auto r = sample(AudioBuffer(1, n, 16000), d, cfg);

  // Each step is affine in x_t; push mean and variance through it.
  const auto s = NoiseSchedule::make(T);
  double m = 0.0, var = 1.0;
  std::vector<double> oracle_means;
  for (int t = T; t >= 1; --t) {
    const auto step_of = [&](double x) {
      const double a = std::cos(std::numbers::pi / 2 * s[t]), b = std::sin(std::numbers::pi / 2 * s[t]);
      const double k = a * sd * sd / (a * a * sd * sd + b * b);
      const double x0 = mu + k * (x - a * mu);
      if (t == 1) return x0;
      const double e = (x - a * x0) / b;
      const double ap = std::cos(std::numbers::pi / 2 * s[t - 1]), bp = std::sin(std::numbers::pi / 2 * s[t - 1]);
      return ap * x0 + bp * e;
    };
    const double c0 = step_of(0.0), c1 = step_of(1.0) - c0;
    m = c1 * m + c0;
    var = c1 * c1 * var;
    oracle_means.push_back(m);
  }
  double sum = 0.0, sq = 0.0;
  for (float v : r.estimate.samples()) {
    sum += v;
    sq += double(v) * v;
  }
  const double mc_mean = sum / double(n);
  const double mc_std = std::sqrt(sq / double(n) - mc_mean * mc_mean);
  CHECK(std::abs(mc_mean - m) / std::abs(m) < 0.01);
  CHECK(std::abs(mc_std - std::sqrt(var)) / std::sqrt(var) < 0.01);
  CHECK(std::abs(mc_mean - m) < 3.0 * std::sqrt(var / double(n)));

  // The RMS of x0 estimates approaches that of the oracle distribution over
  // the last 80% of steps.
  const double target_rms = std::sqrt(mu * mu + sd * sd);
  const std::size_t first = std::size_t(0.2 * T);
  for (std::size_t i = first + 1; i < r.trace.size(); ++i) {
    const double prev = std::abs(r.trace[i - 1].x0_estimate_rms - target_rms);
    const double cur = std::abs(r.trace[i].x0_estimate_rms - target_rms);
    CHECK(cur <= prev + 1e-6);
  }
}

TEST_CASE("seed determinism and trace invariants with refinement noise") {
  const AudioBuffer mix(2, 512, 44100);
  GaussianOracleDenoiser d(0.0, 0.5);
  SamplerConfig cfg;
  cfg.steps = 20;
  cfg.eta = 0.4;
  cfg.cutoff_hz = 5000.0;
  cfg.seed = 1;
  const auto a = sample(mix, d, cfg);
  const auto b = sample(mix, d, cfg);
  CHECK(a.estimate == b.estimate);
  cfg.seed = 2;
  CHECK(!(sample(mix, d, cfg).estimate == a.estimate));
  REQUIRE(a.trace.size() == 20);
  CHECK(a.trace.front().t == 20);
  CHECK(a.trace.back().t == 1);
  for (const auto& s : a.trace) {
    const double bp = coeffs(s.sigma - 1.0 / 20).beta;
    CHECK(std::abs(s.beta_prime * s.beta_prime + s.delta * s.delta - bp * bp) < 1e-6);
  }
}

TEST_CASE("sampler errors") {
  const AudioBuffer mix(1, 32, 16000);
  NanDenoiser nan;
  SamplerConfig cfg;
  cfg.steps = 5;
  cfg.eta = 0.0;
  try {
    sample(mix, nan, cfg);
    FAIL("expected numeric failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NumericFailure);
    CHECK(std::string(e.what()).find("t=5") != std::string::npos);
  }
  cfg.cutoff_hz = 9000.0;
  cfg.eta = 0.4;
  CHECK_THROWS_AS(sample(mix, nan, cfg), Error);
  cfg.cutoff_hz = 1000.0;
  cfg.steps = 0;
  CHECK_THROWS_AS(sample(mix, nan, cfg), Error);
}

TEST_CASE("chunked separation: per-chunk seeds and determinism") {
  CHECK(chunk_seed(5, 0) != chunk_seed(5, 1));
  CHECK(chunk_seed(5, 2) == (5 ^ stream_label("chunk", 2)));
  const auto mix = testing::random_audio(2, 16000 * 2, 16000, 4);
  GaussianOracleDenoiser d(0.0, 0.3);
  SeparationOptions o;
  o.sampler.steps = 10;
  o.sampler.eta = 0.4;
  o.sampler.cutoff_hz = 2000.0;
  o.chunk_seconds = 0.5;
  std::vector<StepDiagnostics> trace;
  const auto a = separate(mix, d, o, 1, &trace);
  const auto b = separate(mix, d, o);
  CHECK(a == b);
  CHECK(a.same_shape(mix));
  CHECK(trace.size() == 10);
  o.sampler.eta = 0.0;
  o.sampler.steps = 20;
  CHECK(separate(mix, d, o) == separate(mix, d, o));
}

TEST_CASE("trace CSV columns") {
  testing::TempDir dir("trace");
  std::vector<StepDiagnostics> tr{{2, 1.0, 0.1, 0.2, 0.3}, {1, 0.5, 0.0, 0.0, 0.4}};
  write_trace_csv(dir / "t.csv", tr);
  std::ifstream in(dir / "t.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "t,sigma,delta,beta_prime,x0_rms");
  CHECK(row.rfind("2,1,0.1,0.2,0.3", 0) == 0);
}
