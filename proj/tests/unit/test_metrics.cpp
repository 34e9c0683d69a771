#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "sepdiff/error.hpp"
#include "sepdiff/metrics.hpp"

using namespace sepdiff;

namespace {

AudioBuffer scaled(const AudioBuffer& a, double k) {
  AudioBuffer o = a;
  for (auto& v : o.samples()) v = float(k * v);
  return o;
}

AudioBuffer sum(const AudioBuffer& a, const AudioBuffer& b, double kb = 1.0) {
  AudioBuffer o = a;
  for (std::size_t i = 0; i < o.size(); ++i) o.samples()[i] = float(a.samples()[i] + kb * b.samples()[i]);
  return o;
}

/// Gram-Schmidt: n made orthogonal to s per channel, scaled to energy ratio.
AudioBuffer orthogonal_to(const AudioBuffer& s, const AudioBuffer& n, double energy_ratio) {
  AudioBuffer o = n;
  double es = 0, eo = 0;
  for (std::size_t c = 0; c < s.channels(); ++c) {
    double ss = 0, sn = 0;
    for (std::size_t i = 0; i < s.length(); ++i) {
      ss += double(s.at(c, i)) * s.at(c, i);
      sn += double(s.at(c, i)) * n.at(c, i);
    }
    for (std::size_t i = 0; i < s.length(); ++i) o.at(c, i) = float(n.at(c, i) - sn / ss * s.at(c, i));
  }
  for (float v : s.samples()) es += double(v) * v;
  for (float v : o.samples()) eo += double(v) * v;
  return scaled(o, std::sqrt(energy_ratio * es / eo));
}

TrackPair track(const std::string& name, unsigned seed) {
  const auto v = testing::random_audio(2, 400, 8000, seed, 0.3);
  const auto a = testing::random_audio(2, 400, 8000, seed + 50, 0.3);
  return {name, sum(v, a), v};
}

}  // namespace

TEST_CASE("sdr examples") {
  const auto s = testing::random_audio(2, 1000, 8000, 1);
  CHECK(sdr(s, s) == kMetricCapDb);
  CHECK(sdr(s, scaled(s, 0.5)) == doctest::Approx(6.0206).epsilon(1e-4));
  for (double a : {0.5, 0.9}) {
    CHECK(sdr(s, scaled(s, a)) == doctest::Approx(-10 * std::log10((1 - a) * (1 - a))).epsilon(1e-5));
  }
  const auto noise = orthogonal_to(s, testing::random_audio(2, 1000, 8000, 2), 0.01);
  CHECK(std::abs(sdr(s, sum(s, noise)) - 20.0) < 1e-4);
  CHECK(sdr(s, AudioBuffer(2, 1000, 8000)) == doctest::Approx(0.0));
  try {
    sdr(AudioBuffer(2, 10, 8000), s.slice(0, 10));
    FAIL("expected undefined reference");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UndefinedReference);
  }
  CHECK_THROWS_AS(sdr(s, s.slice(0, 10)), Error);
}

TEST_CASE("sir examples") {
  const auto t = testing::random_audio(2, 2000, 8000, 3);
  auto a = orthogonal_to(t, testing::random_audio(2, 2000, 8000, 4), 1.0);
  CHECK(sir(t, a, t) == kMetricCapDb);
  CHECK(std::abs(sir(t, a, sum(t, a, 0.1)) - 20.0) < 1e-4);
  CHECK(sir(t, a, a) == -kMetricCapDb);
  // Invariant to positive rescaling of the estimate.
  const auto e = sum(t, a, 0.37);
  CHECK(sir(t, a, scaled(e, 3.0)) == doctest::Approx(sir(t, a, e)).epsilon(1e-5));
  CHECK(std::isnan(sir(t, a, AudioBuffer(2, 2000, 8000))));
  try {
    sir(t, scaled(t, 2.0), e);
    FAIL("expected undefined reference");
  } catch (const Error& ex) {
    CHECK(ex.code() == ErrorCode::UndefinedReference);
  }
}

TEST_CASE("median ignores non-finite entries") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(median({1.0, NAN, 3.0, INFINITY}) == 2.0);
  CHECK(std::isnan(median({NAN})));
  CHECK(std::isnan(median({})));
}

TEST_CASE("evaluation: oracle, baseline, permutation and repeats") {
  std::vector<TrackPair> tracks{track("a", 1), track("b", 2), track("c", 3)};
  SamplerConfig meta;
  meta.eta = 0.0;
  const auto oracle = evaluate(tracks, [](const TrackPair& t, int) { return t.target; }, 1, meta);
  CHECK(oracle.median_sdr_db == kMetricCapDb);
  CHECK(oracle.track_count == 3);

  const auto base = evaluate_mixture_baseline(tracks);
  std::vector<double> direct;
  for (const auto& t : tracks) direct.push_back(sdr(t.target, t.mixture));
  CHECK(base.median_sdr_db == doctest::Approx(median(direct)));

  std::vector<TrackPair> shuffled{tracks[2], tracks[0], tracks[1]};
  const auto base2 = evaluate_mixture_baseline(shuffled);
  CHECK(base2.median_sdr_db == base.median_sdr_db);
  CHECK(base2.median_sir_db == base.median_sir_db);

  meta.eta = 0.4;
  const auto rep = evaluate(
      tracks, [](const TrackPair& t, int r) { return scaled(t.target, 0.5 + 0.1 * r); }, 3, meta);
  REQUIRE(rep.repeat_median_sdr.size() == 3);
  CHECK(rep.median_sdr_db == doctest::Approx((rep.repeat_median_sdr[0] + rep.repeat_median_sdr[1] +
                                              rep.repeat_median_sdr[2]) / 3));
  CHECK(rep.scores[3].seed == repeat_seed(meta.seed, 1, 0.4));
  CHECK(repeat_seed(10, 3, 0.0) == 10);
  CHECK(repeat_seed(10, 3, 0.2) == 13);
  CHECK_THROWS_AS(evaluate({}, [](const TrackPair& t, int) { return t.target; }, 1, meta), Error);
}

TEST_CASE("deterministic model evaluation runs once and repeats identically") {
  std::vector<TrackPair> tracks{track("a", 5), track("b", 6)};
  GaussianOracleDenoiser d(0.0, 0.3);
  SeparationOptions o;
  o.sampler.steps = 5;
  o.sampler.eta = 0.0;
  o.sampler.cutoff_hz = std::nullopt;
  o.chunk_seconds = 0.02;
  const auto r = evaluate_model(tracks, d, o, 5, 1);
  CHECK(r.repeat_median_sdr.size() == 1);
  const auto r2 = evaluate_model(tracks, d, o, 5, 1);
  CHECK(r.median_sdr_db == r2.median_sdr_db);
  o.sampler.eta = 0.4;
  o.sampler.cutoff_hz = 1000.0;
  CHECK(evaluate_model(tracks, d, o, 2, 1).repeat_median_sdr.size() == 2);
}

TEST_CASE("estimates directory and CSV schema") {
  testing::TempDir dir("est");
  std::vector<TrackPair> tracks{track("a", 7), track("b", 8)};
  std::filesystem::create_directories(dir / "a");
  write_wav(dir / "a" / "vocals.wav", tracks[0].target, WavFormat::Float32);
  write_wav(dir / "b.wav", tracks[1].target, WavFormat::Float32);
  const auto r = evaluate_estimates(tracks, dir.path());
  CHECK(r.median_sdr_db == kMetricCapDb);
  const auto base = evaluate_mixture_baseline(tracks);
  std::istringstream csv(eval_csv(r, &base));
  std::string line;
  std::getline(csv, line);
  CHECK(line == kEvalCsvTag);
  std::getline(csv, line);
  CHECK(line == kEvalCsvHeader);
  std::vector<std::string> rows;
  while (std::getline(csv, line)) rows.push_back(line);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].rfind("a,100,", 0) == 0);
  CHECK(rows[0].ends_with(",0,0,none,0,0"));
  CHECK(rows[2].rfind("median,", 0) == 0);
  CHECK(rows[3].rfind("mean_of_medians,", 0) == 0);
  CHECK(rows[3].ends_with(",all"));
  CHECK(rows[4].rfind("mixture_baseline,", 0) == 0);
  CHECK(format_cutoff(std::nullopt) == "none");
  CHECK(format_cutoff(5000.0) == "5000");
}
