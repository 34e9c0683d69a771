#include "sepdiff/rng.hpp"

#include <cmath>
#include <numbers>

namespace sepdiff {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                         std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t(kMul0) * ctr[0];
    const std::uint64_t p1 = std::uint64_t(kMul1) * ctr[2];
    const auto hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
    const auto hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

std::uint64_t stream_label(std::string_view name, std::uint64_t index) {
  std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001B3ull;
  }
  return splitmix64(h ^ splitmix64(index));
}

NoiseStream::NoiseStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {}

NoiseStream NoiseStream::substream(std::string_view name,
                                   std::uint64_t index) const {
  return NoiseStream(seed_, stream_id_ ^ stream_label(name, index));
}

std::uint32_t NoiseStream::next_u32() {
  if (used_ == 4) {
    buffer_ = philox4x32(
        {std::uint32_t(block_), std::uint32_t(block_ >> 32),
         std::uint32_t(stream_id_), std::uint32_t(stream_id_ >> 32)},
        {std::uint32_t(seed_), std::uint32_t(seed_ >> 32)});
    ++block_;
    used_ = 0;
  }
  return buffer_[used_++];
}

double NoiseStream::uniform() {
  return (double(next_u32()) + 0.5) * 0x1p-32;
}

double NoiseStream::gaussian() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

std::uint64_t NoiseStream::below(std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t wide =
      (std::uint64_t(next_u32()) << 32) | std::uint64_t(next_u32());
  return wide % n;
}

}  // namespace sepdiff
