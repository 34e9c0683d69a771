#pragma once

#include <cstddef>
#include <vector>

#include "sepdiff/audio_buffer.hpp"

namespace sepdiff {

enum class Spacing { Linear };

/// Ascending noise levels sigma_0 = 0 < ... < sigma_T = 1.
class NoiseSchedule {
 public:
  static NoiseSchedule make(int steps, Spacing spacing = Spacing::Linear);

  int steps() const noexcept { return int(sigmas_.size()) - 1; }
  double operator[](std::size_t t) const { return sigmas_[t]; }
  const std::vector<double>& sigmas() const noexcept { return sigmas_; }

 private:
  explicit NoiseSchedule(std::vector<double> sigmas) : sigmas_(std::move(sigmas)) {}
  std::vector<double> sigmas_;
};

/// alpha = cos(phi), beta = sin(phi), phi = (pi/2) sigma.
struct DiffusionCoeffs {
  double alpha;
  double beta;
  double phi;
};

DiffusionCoeffs coeffs(double sigma);

// Closed-form diffusion algebra. Arithmetic runs in double; results are
// stored as float.

/// alpha * x0 + beta * eps.
AudioBuffer forward_diffuse(const AudioBuffer& x0, const AudioBuffer& eps,
                            double sigma);
/// alpha * eps - beta * x0.
AudioBuffer velocity_target(const AudioBuffer& x0, const AudioBuffer& eps,
                            double sigma);
/// alpha * x_t - beta * v.
AudioBuffer recover_x0(const AudioBuffer& x_t, const AudioBuffer& v,
                       double sigma);
/// beta * x_t + alpha * v.
AudioBuffer recover_eps(const AudioBuffer& x_t, const AudioBuffer& v,
                        double sigma);

}  // namespace sepdiff
