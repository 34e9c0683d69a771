#include "sepdiff/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "sepdiff/error.hpp"

namespace sepdiff {

NoiseSchedule NoiseSchedule::make(int steps, Spacing spacing) {
  if (steps < 1) {
    fail(ErrorCode::InvalidArgument,
         "noise schedule needs at least one step, got " + std::to_string(steps));
  }
  std::vector<double> sigmas(std::size_t(steps) + 1);
  switch (spacing) {
    case Spacing::Linear:
      for (int t = 0; t <= steps; ++t) sigmas[t] = double(t) / double(steps);
      break;
  }
  return NoiseSchedule(std::move(sigmas));
}

DiffusionCoeffs coeffs(double sigma) {
  if (!(sigma >= 0.0 && sigma <= 1.0)) {
    fail(ErrorCode::InvalidArgument,
         "noise level must lie in [0, 1], got " + std::to_string(sigma));
  }
  // Pin the endpoints exactly; cos(pi/2) is not exactly zero in floating point.
  if (sigma == 0.0) return {1.0, 0.0, 0.0};
  if (sigma == 1.0) return {0.0, 1.0, std::numbers::pi / 2};
  const double phi = std::numbers::pi / 2 * sigma;
  return {std::cos(phi), std::sin(phi), phi};
}

namespace {

AudioBuffer combine(const AudioBuffer& a, const AudioBuffer& b, double wa,
                    double wb, const char* what) {
  require_compatible(a, b, what);
  AudioBuffer out(a.channels(), a.length(), a.sample_rate());
  const auto sa = a.samples();
  const auto sb = b.samples();
  auto so = out.samples();
  for (std::size_t i = 0; i < so.size(); ++i) {
    so[i] = float(wa * double(sa[i]) + wb * double(sb[i]));
  }
  return out;
}

}  // namespace

AudioBuffer forward_diffuse(const AudioBuffer& x0, const AudioBuffer& eps,
                            double sigma) {
  const auto c = coeffs(sigma);
  return combine(x0, eps, c.alpha, c.beta, "forward_diffuse");
}

AudioBuffer velocity_target(const AudioBuffer& x0, const AudioBuffer& eps,
                            double sigma) {
  const auto c = coeffs(sigma);
  return combine(eps, x0, c.alpha, -c.beta, "velocity_target");
}

AudioBuffer recover_x0(const AudioBuffer& x_t, const AudioBuffer& v,
                       double sigma) {
  const auto c = coeffs(sigma);
  return combine(x_t, v, c.alpha, -c.beta, "recover_x0");
}

AudioBuffer recover_eps(const AudioBuffer& x_t, const AudioBuffer& v,
                        double sigma) {
  const auto c = coeffs(sigma);
  return combine(x_t, v, c.beta, c.alpha, "recover_eps");
}

}  // namespace sepdiff
