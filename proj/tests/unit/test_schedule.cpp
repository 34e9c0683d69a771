#include <cmath>
#include <numbers>

#include "doctest.h"
#include "helpers.hpp"
#include "sepdiff/error.hpp"
#include "sepdiff/schedule.hpp"

using namespace sepdiff;

TEST_CASE("linear schedule endpoints and spacing") {
  const auto s = NoiseSchedule::make(50);
  CHECK(s.steps() == 50);
  CHECK(s[0] == 0.0);
  CHECK(s[50] == 1.0);
  CHECK(s[25] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(NoiseSchedule::make(0), Error);
}

TEST_CASE("coefficients at reference points") {
  CHECK(coeffs(0.0).alpha == 1.0);
  CHECK(coeffs(0.0).beta == 0.0);
  CHECK(std::abs(coeffs(1.0).alpha) < 1e-15);
  CHECK(coeffs(1.0).beta == doctest::Approx(1.0));
  CHECK(coeffs(0.5).alpha == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK(coeffs(0.5).beta == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
}

TEST_CASE("alpha^2 + beta^2 = 1 and monotone across schedules") {
  for (int T : {1, 10, 20, 50, 100, 1000}) {
    const auto s = NoiseSchedule::make(T);
    for (int t = 0; t <= T; ++t) {
      const auto k = coeffs(s[std::size_t(t)]);
      CHECK(std::abs(k.alpha * k.alpha + k.beta * k.beta - 1.0) < 1e-6);
      if (t > 0) {
        const auto p = coeffs(s[std::size_t(t - 1)]);
        CHECK(k.alpha <= p.alpha);
        CHECK(k.beta >= p.beta);
      }
    }
  }
}

TEST_CASE("trivial algebra examples") {
  AudioBuffer ones(1, 8, 16000, 1.0f);
  AudioBuffer zeros(1, 8, 16000, 0.0f);
  CHECK(forward_diffuse(ones, zeros, 0.0) == ones);
  CHECK(recover_x0(ones, zeros, 0.0) == ones);
  const auto r = recover_x0(ones, ones, 0.5);
  for (float v : r.samples()) CHECK(std::abs(v) < 1e-7);
  const auto e1 = recover_eps(ones, zeros, 1.0);
  for (float v : e1.samples()) CHECK(v == doctest::Approx(1.0));
  const auto e0 = recover_eps(zeros, ones, 0.0);
  for (float v : e0.samples()) CHECK(v == 1.0f);
}

TEST_CASE("round trip recovers x0 and eps") {
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const auto x0 = testing::random_audio(2, 32, 16000, 100 + i);
    const auto eps = testing::random_audio(2, 32, 16000, 900 + i, 1.0);
    const double sigma = u(gen);
    const auto xt = forward_diffuse(x0, eps, sigma);
    const auto v = velocity_target(x0, eps, sigma);
    const auto x0r = recover_x0(xt, v, sigma);
    const auto er = recover_eps(xt, v, sigma);
    for (std::size_t j = 0; j < x0.size(); ++j) {
      CHECK(std::abs(x0r.samples()[j] - x0.samples()[j]) < 1e-5);
      CHECK(std::abs(er.samples()[j] - eps.samples()[j]) < 1e-5);
    }
  }
}

TEST_CASE("forward diffusion is linear in (x0, eps)") {
  const auto x0 = testing::random_audio(2, 64, 16000, 1);
  const auto eps = testing::random_audio(2, 64, 16000, 2, 1.0);
  const double a = -1.75;
  AudioBuffer ax0 = x0, aeps = eps;
  for (auto& v : ax0.samples()) v = float(a * v);
  for (auto& v : aeps.samples()) v = float(a * v);
  const auto lhs = forward_diffuse(ax0, aeps, 0.3);
  const auto rhs = forward_diffuse(x0, eps, 0.3);
  for (std::size_t j = 0; j < lhs.size(); ++j) {
    CHECK(lhs.samples()[j] == doctest::Approx(a * rhs.samples()[j]).epsilon(1e-5));
  }
}

TEST_CASE("shape mismatch and out-of-range sigma are rejected") {
  AudioBuffer a(1, 8, 16000), b(1, 9, 16000);
  CHECK_THROWS_AS(forward_diffuse(a, b, 0.5), Error);
  CHECK_THROWS_AS(coeffs(1.5), Error);
  CHECK_THROWS_AS(coeffs(-0.1), Error);
}
