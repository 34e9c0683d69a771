#include "sepdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sepdiff/error.hpp"

namespace sepdiff {

namespace {

double to_db(double num, double den) {
  if (num == 0.0 && den == 0.0) return std::numeric_limits<double>::quiet_NaN();
  if (den == 0.0) return kMetricCapDb;
  if (num == 0.0) return -kMetricCapDb;
  return std::clamp(10.0 * std::log10(num / den), -kMetricCapDb, kMetricCapDb);
}

double mean_finite(const std::vector<double>& v) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      s += x;
      ++n;
    }
  }
  return n ? s / double(n) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

double sdr(const AudioBuffer& reference, const AudioBuffer& estimate) {
  require(reference.same_shape(estimate), "sdr: reference and estimate shapes differ");
  double num = 0.0, den = 0.0;
  const auto s = reference.samples();
  const auto e = estimate.samples();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double r = double(s[i]);
    const double d = r - double(e[i]);
    num += r * r;
    den += d * d;
  }
  if (num == 0.0) fail(ErrorCode::UndefinedReference, "sdr: reference is all zero");
  return to_db(num, den);
}

double sir(const AudioBuffer& target, const AudioBuffer& accompaniment,
           const AudioBuffer& estimate) {
  require(target.same_shape(accompaniment) && target.same_shape(estimate),
          "sir: input shapes differ");
  double e_target = 0.0, e_interf = 0.0;
  bool any_target = false, any_acc = false;
  for (std::size_t c = 0; c < target.channels(); ++c) {
    const auto t = target.channel(c);
    const auto a = accompaniment.channel(c);
    const auto e = estimate.channel(c);
    double tt = 0, aa = 0, ta = 0, te = 0, ae = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double ti = t[i], ai = a[i], ei = e[i];
      tt += ti * ti;
      aa += ai * ai;
      ta += ti * ai;
      te += ti * ei;
      ae += ai * ei;
    }
    any_target = any_target || tt > 0.0;
    any_acc = any_acc || aa > 0.0;
    double ct = 0.0, ca = 0.0;
    if (tt > 0.0 && aa > 0.0) {
      const double det = tt * aa - ta * ta;
      if (det <= 1e-12 * tt * aa) {
        fail(ErrorCode::UndefinedReference,
             "sir: target and accompaniment are collinear in channel " + std::to_string(c));
      }
      ct = (aa * te - ta * ae) / det;
      ca = (tt * ae - ta * te) / det;
    } else if (tt > 0.0) {
      ct = te / tt;
    } else if (aa > 0.0) {
      ca = ae / aa;
    }
    e_target += ct * ct * tt;
    e_interf += ca * ca * aa;
  }
  if (!any_target || !any_acc) {
    fail(ErrorCode::UndefinedReference, "sir: target or accompaniment is all zero");
  }
  return to_db(e_target, e_interf);
}

double median(std::vector<double> values) {
  std::erase_if(values, [](double v) { return !std::isfinite(v); });
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::uint64_t repeat_seed(std::uint64_t seed, int repeat, double eta) {
  return eta > 0.0 ? seed + std::uint64_t(repeat) : seed;
}

namespace {

AudioBuffer accompaniment_of(const TrackPair& t) {
  AudioBuffer acc = t.mixture;
  auto a = acc.samples();
  const auto v = t.target.samples();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = float(double(a[i]) - double(v[i]));
  return acc;
}

}  // namespace

EvalResult evaluate(const std::vector<TrackPair>& tracks, const Estimator& estimator,
                    int repeats, const SamplerConfig& meta) {
  if (tracks.empty()) fail(ErrorCode::EmptyDataset, "no tracks to evaluate");
  require(repeats >= 1, "repeats must be at least 1");
  EvalResult r;
  r.track_count = tracks.size();
  r.steps = meta.steps;
  r.eta = meta.eta;
  r.cutoff_hz = meta.cutoff_hz;
  r.seed = meta.seed;
  std::vector<AudioBuffer> accompaniments;
  accompaniments.reserve(tracks.size());
  for (const auto& t : tracks) accompaniments.push_back(accompaniment_of(t));

  for (int rep = 0; rep < repeats; ++rep) {
    std::vector<double> sdrs, sirs;
    for (std::size_t i = 0; i < tracks.size(); ++i) {
      const auto& t = tracks[i];
      const AudioBuffer est = estimator(t, rep);
      if (!est.same_shape(t.target)) {
        fail(ErrorCode::ContractViolation, "estimate for " + t.name + " has the wrong shape");
      }
      TrackScore s;
      s.track = t.name;
      s.sdr_db = sdr(t.target, est);
      s.sir_db = sir(t.target, accompaniments[i], est);
      s.seed = repeat_seed(meta.seed, rep, meta.eta);
      s.repeat = rep;
      sdrs.push_back(s.sdr_db);
      sirs.push_back(s.sir_db);
      r.scores.push_back(std::move(s));
    }
    r.repeat_median_sdr.push_back(median(sdrs));
    r.repeat_median_sir.push_back(median(sirs));
  }
  r.median_sdr_db = mean_finite(r.repeat_median_sdr);
  r.median_sir_db = mean_finite(r.repeat_median_sir);
  return r;
}

EvalResult evaluate_model(const std::vector<TrackPair>& tracks, const Denoiser& denoiser,
                          const SeparationOptions& options, int repeats,
                          std::size_t multiple) {
  const int n = options.sampler.eta > 0.0 ? repeats : 1;
  return evaluate(
      tracks,
      [&](const TrackPair& t, int rep) {
        SeparationOptions o = options;
        o.sampler.seed = repeat_seed(options.sampler.seed, rep, options.sampler.eta);
        return separate(t.mixture, denoiser, o, multiple);
      },
      n, options.sampler);
}

EvalResult evaluate_estimates(const std::vector<TrackPair>& tracks,
                              const std::filesystem::path& dir) {
  SamplerConfig meta;
  meta.steps = 0;
  meta.eta = 0.0;
  meta.cutoff_hz.reset();
  return evaluate(
      tracks,
      [&](const TrackPair& t, int) {
        auto path = dir / t.name / "vocals.wav";
        if (!std::filesystem::exists(path)) path = dir / (t.name + ".wav");
        AudioBuffer est = match_channels(read_wav(path), t.target.channels());
        if (est.length() != t.target.length()) {
          est = est.slice(0, t.target.length());
        }
        return est;
      },
      1, meta);
}

EvalResult evaluate_mixture_baseline(const std::vector<TrackPair>& tracks) {
  SamplerConfig meta;
  meta.steps = 0;
  meta.eta = 0.0;
  meta.cutoff_hz.reset();
  return evaluate(tracks, [](const TrackPair& t, int) { return t.mixture; }, 1, meta);
}

std::string format_cutoff(const std::optional<double>& cutoff_hz) {
  if (!cutoff_hz) return "none";
  std::ostringstream s;
  s << *cutoff_hz;
  return s.str();
}

std::string eval_csv(const EvalResult& result, const EvalResult* baseline) {
  std::ostringstream out;
  out.precision(8);
  out << kEvalCsvTag << '\n' << kEvalCsvHeader << '\n';
  std::ostringstream cell_text;
  cell_text << result.steps << ',' << result.eta << ',' << format_cutoff(result.cutoff_hz);
  const std::string cell = cell_text.str();
  for (const auto& s : result.scores) {
    out << s.track << ',' << s.sdr_db << ',' << s.sir_db << ',' << cell << ',' << s.seed
        << ',' << s.repeat << '\n';
  }
  for (std::size_t r = 0; r < result.repeat_median_sdr.size(); ++r) {
    out << "median," << result.repeat_median_sdr[r] << ',' << result.repeat_median_sir[r]
        << ',' << cell << ',' << repeat_seed(result.seed, int(r), result.eta) << ',' << r
        << '\n';
  }
  out << "mean_of_medians," << result.median_sdr_db << ',' << result.median_sir_db << ','
      << cell << ',' << result.seed << ",all\n";
  if (baseline) {
    out << "mixture_baseline," << baseline->median_sdr_db << ',' << baseline->median_sir_db
        << ",0,0,none," << result.seed << ",all\n";
  }
  return out.str();
}

}  // namespace sepdiff
