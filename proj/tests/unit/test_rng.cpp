#include <cmath>
#include <set>

#include "doctest.h"
#include "sepdiff/rng.hpp"

using namespace sepdiff;

TEST_CASE("philox4x32-10 known-answer vectors") {
  // Published Random123 test vectors.
  using C = std::array<std::uint32_t, 4>;
  using K = std::array<std::uint32_t, 2>;
  CHECK(philox4x32(C{0, 0, 0, 0}, K{0, 0}) ==
        C{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(philox4x32(C{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                   K{0xffffffffu, 0xffffffffu}) ==
        C{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(philox4x32(C{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                   K{0xa4093822u, 0x299f31d0u}) ==
        C{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("noise stream is a pure function of seed and stream") {
  NoiseStream a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u32();
    CHECK(x == b.next_u32());
    differs = differs || x != c.next_u32();
  }
  CHECK(differs);
}

TEST_CASE("substreams are independent and reproducible") {
  NoiseStream base(7);
  auto s1 = base.substream("sampling", 0);
  auto s2 = base.substream("sampling", 1);
  auto s3 = base.substream("training", 0);
  auto s1b = NoiseStream(7).substream("sampling", 0);
  std::set<std::uint32_t> firsts{s1.next_u32(), s2.next_u32(), s3.next_u32()};
  CHECK(firsts.size() == 3);
  auto s1c = NoiseStream(7).substream("sampling", 0);
  CHECK(s1b.next_u32() == s1c.next_u32());
  CHECK(stream_label("chunk", 3) == stream_label("chunk", 3));
  CHECK(stream_label("chunk", 3) != stream_label("chunk", 4));
}

TEST_CASE("uniforms lie strictly inside (0, 1) and gaussians are standard") {
  NoiseStream rng(1);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.01);
}

TEST_CASE("below stays in range") {
  NoiseStream rng(3);
  for (int i = 0; i < 1000; ++i) CHECK(rng.below(7) < 7);
}
