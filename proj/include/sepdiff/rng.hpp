#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace sepdiff {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
/// easy as 1, 2, 3"). Pure: the same counter and key always produce the same
/// four words.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                         std::array<std::uint32_t, 2> key);

/// Counter-based noise stream. The 64-bit seed is the Philox key; the stream
/// id occupies the upper half of the counter and the block index the lower
/// half, so independent streams never overlap.
///
/// Uniforms are (u + 0.5) / 2^32 for a 32-bit word u, which lies strictly in
/// (0, 1). Gaussians use the Box-Muller transform on consecutive uniform
/// pairs; the second variate of each pair is cached.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  /// Independent stream named by a purpose label and an index, e.g.
  /// ("sampling", chunk).
  NoiseStream substream(std::string_view name, std::uint64_t index = 0) const;

  std::uint32_t next_u32();
  double uniform();
  double gaussian();
  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  std::optional<double> spare_;
};

/// Deterministic 64-bit mixing of a label, used to derive stream ids.
std::uint64_t stream_label(std::string_view name, std::uint64_t index);

}  // namespace sepdiff
