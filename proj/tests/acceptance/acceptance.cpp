// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "sepdiff/cli.hpp"
#include "sepdiff/denoiser.hpp"
#include "sepdiff/dsp.hpp"
#include "sepdiff/file_util.hpp"
#include "sepdiff/metrics.hpp"
#include "sepdiff/model.hpp"
#include "sepdiff/rng.hpp"
#include "sepdiff/sampler.hpp"
#include "sepdiff/schedule.hpp"
#include "sepdiff/training.hpp"

namespace fs = std::filesystem;
using namespace sepdiff;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Accumulates checks; the first failure message is kept.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && pass_) {
      pass_ = false;
      first_failure_ = what;
    }
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }
  Outcome done() const {
    return {pass_, pass_ ? notes_ : first_failure_ + (notes_.empty() ? "" : " | " + notes_)};
  }

 private:
  bool pass_ = true;
  std::string first_failure_;
  std::string notes_;
};

std::string num(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

AudioBuffer random_buffer(std::size_t ch, std::size_t len, double rate, NoiseStream& rng,
                          double scale = 1.0) {
  AudioBuffer b(ch, len, rate);
  for (auto& v : b.samples()) v = float(scale * rng.gaussian());
  return b;
}

struct Context {
  fs::path workdir;
};

// 1. Schedule algebra.
Outcome schedule_algebra(const Context&) {
  Checker c;
  NoiseStream rng(101);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double sigma = rng.uniform();
    const auto x0 = random_buffer(1, 64, 16000, rng, 0.5);
    const auto eps = random_buffer(1, 64, 16000, rng);
    const auto xt = forward_diffuse(x0, eps, sigma);
    const auto v = velocity_target(x0, eps, sigma);
    const auto x0r = recover_x0(xt, v, sigma);
    const auto epsr = recover_eps(xt, v, sigma);
    // Direct scalar forms as an independent reference.
    const double a = std::cos(std::numbers::pi / 2 * sigma), b = std::sin(std::numbers::pi / 2 * sigma);
    for (std::size_t k = 0; k < x0.size(); ++k) {
      const double x = x0.samples()[k], e = eps.samples()[k];
      worst = std::max({worst, std::abs(x0r.samples()[k] - x), std::abs(epsr.samples()[k] - e),
                        std::abs(xt.samples()[k] - (a * x + b * e)),
                        std::abs(v.samples()[k] - (a * e - b * x))});
    }
  }
  c.expect(worst < 1e-5, "round-trip error " + num(worst));
  double unit = 0.0;
  for (int T : {1, 10, 20, 50, 100, 1000}) {
    const auto s = NoiseSchedule::make(T);
    for (int t = 0; t <= T; ++t) {
      const auto k = coeffs(s[t]);
      unit = std::max(unit, std::abs(k.alpha * k.alpha + k.beta * k.beta - 1.0));
    }
  }
  c.expect(unit < 1e-6, "alpha^2+beta^2 deviation " + num(unit));
  c.note("max round-trip error " + num(worst, 3) + ", unit deviation " + num(unit, 3));
  return c.done();
}

class HalfDenoiser : public Denoiser {
 public:
  AudioBuffer predict_v(const AudioBuffer& x, double sigma, const Conditioning&) const override {
    AudioBuffer v = x;
    for (auto& s : v.samples()) s *= float(0.5 * sigma);
    return v;
  }
};

// 2. Refinement variance identity and eta = 0 determinism.
Outcome variance_identity(const Context&) {
  Checker c;
  double worst = 0.0;
  int checked = 0;
  for (int T : {10, 20, 50, 100}) {
    const auto s = NoiseSchedule::make(T);
    for (double eta : {0.2, 0.4, 0.8}) {
      for (int t = T; t >= 1; --t) {
        const auto r = refinement_scales(eta, s[t], s[t - 1]);
        const double bp = std::sin(std::numbers::pi / 2 * s[t - 1]);
        worst = std::max(worst, std::abs(r.beta_prime * r.beta_prime + r.delta * r.delta - bp * bp));
        ++checked;
      }
    }
  }
  c.expect(worst < 1e-6, "variance identity error " + num(worst));

  NoiseStream rng(7);
  const auto mix = random_buffer(2, 2000, 16000, rng, 0.3);
  HalfDenoiser d;
  for (int T : {10, 20, 50, 100}) {
    SamplerConfig cfg;
    cfg.steps = T;
    cfg.eta = 0.0;
    cfg.cutoff_hz = 2000.0;
    cfg.seed = 99;
    const auto a = sample(mix, d, cfg).estimate;
    const auto b = sample_deterministic(mix, d, T, 99);
    c.expect(a == b, "eta=0 differs from the deterministic path at T=" + std::to_string(T));
    c.expect(sample(mix, d, cfg).estimate == a, "eta=0 run not repeatable at T=" + std::to_string(T));
  }
  c.note(std::to_string(checked) + " steps, max error " + num(worst, 3));
  return c.done();
}

// 3. Gaussian oracle sampler moments.
Outcome gaussian_oracle(const Context&) {
  Checker c;
  const double mu = 0.3, sd = 0.05;
  const int T = 50;
  const std::size_t n = 10000;
  GaussianOracleDenoiser d(mu, sd);
  SamplerConfig cfg;
  cfg.steps = T;
  cfg.eta = 0.0;
  cfg.cutoff_hz.reset();
  cfg.seed = 31337;
  const auto r = sample(AudioBuffer(1, n, 16000), d, cfg);

  // Every step is affine in x_t; propagate mean and variance analytically.
  const auto s = NoiseSchedule::make(T);
  double m = 0.0, var = 1.0;
  for (int t = T; t >= 1; --t) {
    const double a = std::cos(std::numbers::pi / 2 * s[t]), b = std::sin(std::numbers::pi / 2 * s[t]);
    const double k = a * sd * sd / (a * a * sd * sd + b * b);
    const auto step = [&](double x) {
      const double x0 = mu + k * (x - a * mu);
      if (t == 1) return x0;
      const double e = (x - a * x0) / b;
      return std::cos(std::numbers::pi / 2 * s[t - 1]) * x0 +
             std::sin(std::numbers::pi / 2 * s[t - 1]) * e;
    };
    const double c0 = step(0.0), c1 = step(1.0) - c0;
    m = c1 * m + c0;
    var = c1 * c1 * var;
  }
  double sum = 0.0, sq = 0.0;
  for (float v : r.estimate.samples()) {
    sum += v;
    sq += double(v) * v;
  }
  const double mean = sum / double(n);
  const double std = std::sqrt(sq / double(n) - mean * mean);
  const double em = std::abs(mean - m) / std::abs(m);
  const double es = std::abs(std - std::sqrt(var)) / std::sqrt(var);
  c.expect(em < 0.01, "mean relative error " + num(em));
  c.expect(es < 0.01, "std relative error " + num(es));
  c.note("mean " + num(mean) + " vs " + num(m) + ", std " + num(std) + " vs " + num(std::sqrt(var)));
  return c.done();
}

/// |H| in dB at f, from the section coefficients.
double response_db(const BiquadCascade& f, double hz) {
  const std::complex<double> z = std::polar(1.0, 2.0 * std::numbers::pi * hz / f.sample_rate);
  const std::complex<double> zi = 1.0 / z, zi2 = zi * zi;
  std::complex<double> h = 1.0;
  for (const auto& s : f.sections) h *= (s.b0 + s.b1 * zi + s.b2 * zi2) / (1.0 + s.a1 * zi + s.a2 * zi2);
  return 20.0 * std::log10(std::abs(h));
}

// 4. High-pass filter design and normalized noise.
Outcome filter_correctness(const Context&) {
  Checker c;
  std::ostringstream notes;
  for (double fc : {600.0, 2000.0, 5000.0}) {
    const auto f = design_butterworth_hp(fc, 44100.0, 4);
    const double at = response_db(f, fc), stop = response_db(f, fc / 8.0);
    c.expect(std::abs(at + 3.01) <= 0.1, "gain at " + num(fc) + " Hz is " + num(at) + " dB");
    c.expect(stop <= -60.0, "gain at fc/8 for " + num(fc) + " Hz is " + num(stop) + " dB");
    NoiseStream rng = NoiseStream(17).substream("sampling", std::uint64_t(fc));
    const auto noise = normalized_filtered_noise(&f, 1, 1000000, 44100.0, rng);
    double s = 0.0, sq = 0.0;
    for (float v : noise.samples()) {
      s += v;
      sq += double(v) * v;
    }
    const double mean = s / 1e6, var = sq / 1e6 - mean * mean;
    c.expect(var >= 0.98 && var <= 1.02, "noise variance " + num(var) + " at " + num(fc) + " Hz");
    notes << "fc " << fc << ": " << num(at, 4) << " dB, fc/8 " << num(stop, 4) << " dB, var "
          << num(var, 4) << "; ";
  }
  c.note(notes.str());
  return c.done();
}

// 5. Finite-difference gradient checks.
Outcome gradient_fidelity(const Context&) {
  Checker c;
  double worst_kernel = 0.0;
  std::size_t kernels = 0;
  for (const auto& k : gradcheck::kernel_cases()) {
    for (double e : gradcheck::check(k.build, k.inputs)) {
      worst_kernel = std::max(worst_kernel, e);
      c.expect(e < 1e-4, "kernel " + k.name + " relative error " + num(e));
    }
    ++kernels;
  }
  const SeparationModel m32(ModelConfig::tiny(), 3);
  c.expect(m32.parameter_count() <= 2000, "tiny model has " + std::to_string(m32.parameter_count()));
  const auto m = m32.cast<double>();
  const std::size_t len = 16;
  const auto x0 = gradcheck::random({2, 2, len}, 41, -0.5, 0.5);
  const auto cond = gradcheck::random({2, 2, len}, 42, -0.8, 0.8);
  NoiseStream rng(43);
  const auto draw = draw_diffusion_inputs<double>({2, 2, len}, rng);
  double worst_model = 0.0;
  for (const auto& r : gradcheck::model_check(m, x0, cond, draw, LossWeights{})) {
    worst_model = std::max(worst_model, r.rel_error);
    c.expect(r.rel_error < 1e-3, "model parameter " + r.name + " relative error " + num(r.rel_error));
  }
  c.note(std::to_string(kernels) + " kernels, worst " + num(worst_kernel, 3) + "; tiny model (" +
         std::to_string(m32.parameter_count()) + " params) worst " + num(worst_model, 3));
  return c.done();
}

// 6. Gradient routing.
Outcome gradient_routing(const Context&) {
  Checker c;
  for (const auto& [label, config, len] :
       {std::tuple{"tiny", ModelConfig::tiny(), std::size_t(32)},
        std::tuple{"toy", ModelConfig::toy(), std::size_t(ModelConfig::toy().total_factor() * 2)}}) {
    const SeparationModel m(config, 5);
    NoiseStream rng(6);
    BasicTensor<float> x0({2, 2, len}), cond({2, 2, len});
    for (auto& v : x0.values()) v = float(0.3 * rng.gaussian());
    for (auto& v : cond.values()) v = float(0.5 * rng.gaussian());
    const auto draw = draw_diffusion_inputs<float>(x0.shape(), rng);
    const auto nonzero = [&](const LossAndGrads<float>& lg, const std::string& prefix) {
      std::size_t nz = 0;
      for (std::size_t k = 0; k < m.parameters().size(); ++k) {
        if (!m.parameters()[k].name.starts_with(prefix)) continue;
        for (float v : lg.grads[k].values()) nz += v != 0.0f;
      }
      return nz;
    };
    const auto aux_off = loss_and_gradients(m, x0, cond, draw, LossWeights{1.0, 0.0, 0.0});
    const auto diff_off = loss_and_gradients(m, x0, cond, draw, LossWeights{0.0, 1.0, 1.0});
    const std::string l = label;
    c.expect(nonzero(aux_off, "head.") == 0, l + ": head gradients with aux weights zeroed");
    c.expect(nonzero(diff_off, "gen.") == 0, l + ": generator gradients with diffusion masked");
    c.expect(nonzero(aux_off, "gen.") > 0 && nonzero(diff_off, "head.") > 0,
             l + ": active paths carry no gradient");
  }
  c.note("exact zeros on tiny and toy");
  return c.done();
}

// 9. Overlap-add transparency.
Outcome overlap_add(const Context&) {
  Checker c;
  NoiseStream rng(9);
  const auto identity = [](const AudioBuffer& x, std::size_t) { return x; };
  double worst = 0.0;
  struct Case {
    double chunk, overlap, rate, seconds;
  };
  for (const Case& k : {Case{3.0, 0.2, 44100, 10.0}, Case{3.0, 0.2, 44100, 1.0},
                        Case{3.0, 0.2, 16000, 7.3}, Case{0.5, 0.4, 8000, 4.1},
                        Case{1.0, 0.0, 8000, 3.0}, Case{0.25, 0.1, 16000, 2.0}}) {
    const auto x = random_buffer(2, std::size_t(k.seconds * k.rate), k.rate, rng, 0.5);
    const auto plan = ChunkPlan::for_duration(k.chunk, k.overlap, k.rate, 1);
    const auto y = chunk_and_process(x, plan, identity);
    c.expect(y.same_shape(x), "shape changed");
    for (std::size_t i = 0; i < x.size(); ++i) {
      worst = std::max(worst, double(std::abs(y.samples()[i] - x.samples()[i])));
    }
  }
  c.expect(worst < 1e-6, "reconstruction error " + num(worst));
  c.note("max error " + num(worst, 3));
  return c.done();
}

// 10. Metric sanity.
Outcome metric_sanity(const Context&) {
  Checker c;
  NoiseStream rng(10);
  const auto s = random_buffer(2, 4000, 8000, rng, 0.3);
  AudioBuffer half = s;
  for (auto& v : half.samples()) v *= 0.5f;
  const double d = sdr(s, half);
  c.expect(std::abs(d - 6.0206) <= 0.001, "sdr(s, s/2) = " + num(d));

  // Orthogonal, equal-energy target and interferer; estimate at 10:1 amplitude.
  auto a = random_buffer(2, 4000, 8000, rng, 0.3);
  for (std::size_t ch = 0; ch < 2; ++ch) {
    double ss = 0, sa = 0;
    for (std::size_t i = 0; i < 4000; ++i) {
      ss += double(s.at(ch, i)) * s.at(ch, i);
      sa += double(s.at(ch, i)) * a.at(ch, i);
    }
    for (std::size_t i = 0; i < 4000; ++i) a.at(ch, i) = float(a.at(ch, i) - sa / ss * s.at(ch, i));
  }
  double es = 0, ea = 0;
  for (float v : s.samples()) es += double(v) * v;
  for (float v : a.samples()) ea += double(v) * v;
  for (auto& v : a.samples()) v = float(v * std::sqrt(es / ea));
  AudioBuffer est = s;
  for (std::size_t i = 0; i < est.size(); ++i) est.samples()[i] += 0.1f * a.samples()[i];
  const double r = sir(s, a, est);
  c.expect(std::abs(r - 20.0) <= 0.001, "sir at 10:1 = " + num(r));

  // Deterministic sampling evaluated three times.
  std::vector<TrackPair> tracks;
  for (int i = 0; i < 3; ++i) {
    auto v = random_buffer(2, 600, 8000, rng, 0.3);
    auto m = v;
    const auto acc = random_buffer(2, 600, 8000, rng, 0.3);
    for (std::size_t k = 0; k < m.size(); ++k) m.samples()[k] += acc.samples()[k];
    tracks.push_back({"t" + std::to_string(i), m, v});
  }
  GaussianOracleDenoiser oracle(0.0, 0.3);
  SamplerConfig meta;
  meta.steps = 10;
  meta.eta = 0.0;
  meta.cutoff_hz.reset();
  meta.seed = 4;
  const auto estimator = [&](const TrackPair& t, int rep) {
    SamplerConfig cfg = meta;
    cfg.seed = repeat_seed(meta.seed, rep, meta.eta);
    return sample(t.mixture, oracle, cfg).estimate;
  };
  const auto ev = evaluate(tracks, estimator, 3, meta);
  bool identical = true;
  for (std::size_t i = 0; i < ev.scores.size(); ++i) {
    identical = identical && ev.scores[i].sdr_db == ev.scores[i % 3].sdr_db &&
                ev.scores[i].sir_db == ev.scores[i % 3].sir_db;
  }
  c.expect(identical, "eta=0 repeats differ");
  SeparationOptions o;
  o.sampler = meta;
  o.chunk_seconds = 0.05;
  const auto e1 = evaluate_model(tracks, oracle, o, 5, 1);
  const auto e2 = evaluate_model(tracks, oracle, o, 5, 1);
  c.expect(e1.median_sdr_db == e2.median_sdr_db && e1.repeat_median_sdr.size() == 1,
           "eta=0 model evaluation not repeat-identical");
  c.note("sdr " + num(d, 8) + " dB, sir " + num(r, 8) + " dB");
  return c.done();
}

// ----- end-to-end criteria on the synthetic toy task -----

constexpr int kRate = 16000;

int run(const std::vector<std::string>& args, std::string* output = nullptr) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (output) *output = out.str();
  if (code != 0) std::cerr << "command failed (" << code << "): " << err.str();
  return code;
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_file(p));
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    for (std::string col; std::getline(ls, col, ',');) cols.push_back(col);
    rows.push_back(std::move(cols));
  }
  return rows;
}

fs::path dataset_dir(const Context& ctx) { return ctx.workdir / "synth"; }
fs::path model_path(const Context& ctx) { return ctx.workdir / "toy.model"; }

bool make_dataset(const Context& ctx) {
  if (fs::exists(dataset_dir(ctx) / "synth.cfg")) return true;
  write_file_atomic(ctx.workdir / "synth_spec.cfg",
                    "track_count = 64\ntest_track_count = 16\nduration_s = 6\nsample_rate = " +
                        std::to_string(kRate) + "\nseed = 7\n");
  return run({"synth", "--spec", (ctx.workdir / "synth_spec.cfg").string(), "--out",
              dataset_dir(ctx).string()}) == 0;
}

bool train_toy(const Context& ctx) {
  write_file_atomic(ctx.workdir / "train.cfg",
                    "batch_size = 8\nlearning_rate = 0.001\nwarmup_steps = 200\n"
                    "total_steps = 3000\nchunk_seconds = 0.256\nseed = 1\n");
  std::string out;
  const int code = run({"train", "--dataset", dataset_dir(ctx).string(), "--config",
                        (ctx.workdir / "train.cfg").string(), "--preset", "toy", "--out",
                        model_path(ctx).string()},
                       &out);
  return code == 0;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 7. Toy separation beats the mixture baseline.
Outcome toy_separation(const Context& ctx) {
  Checker c;
  fs::create_directories(ctx.workdir);
  const auto t0 = std::chrono::steady_clock::now();
  c.expect(make_dataset(ctx), "synth failed");
  const SeparationModel probe(ModelConfig::toy(), 0);
  c.expect(probe.parameter_count() < 500000, "toy model too large");
  if (!c.done().pass) return c.done();
  c.expect(train_toy(ctx), "training failed");
  if (!c.done().pass) return c.done();
  const double train_s = seconds_since(t0);
  const auto csv = ctx.workdir / "eval.csv";
  c.expect(run({"eval", "--model", model_path(ctx).string(), "--dataset", dataset_dir(ctx).string(),
                "--out", csv.string(), "--steps", "50", "--eta", "0", "--cutoff-hz", "none"}) == 0,
           "evaluation failed");
  if (!c.done().pass) return c.done();
  double model = NAN, base = NAN;
  for (const auto& row : csv_rows(csv)) {
    if (row[0] == "mean_of_medians") model = std::stod(row[1]);
    if (row[0] == "mixture_baseline") base = std::stod(row[1]);
  }
  c.expect(model - base >= 6.0, "improvement " + num(model - base) + " dB");
  c.note("median SDR " + num(model, 4) + " dB vs baseline " + num(base, 4) + " dB (+" +
         num(model - base, 4) + "), 3000 steps, training " + num(train_s, 4) + " s");
  return c.done();
}

// 8. Ablation grid completeness and determinism.
Outcome ablation(const Context& ctx) {
  Checker c;
  fs::create_directories(ctx.workdir);
  c.expect(make_dataset(ctx), "synth failed");
  if (!fs::exists(model_path(ctx))) c.expect(train_toy(ctx), "training failed");
  if (!c.done().pass) return c.done();
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::string> common{"--model",      model_path(ctx).string(),
                                        "--dataset",    dataset_dir(ctx).string(),
                                        "--repeats",    "5",
                                        "--seed",       "11",
                                        "--max-tracks", "4",
                                        "--excerpt-seconds", "0.75"};
  const auto csv = ctx.workdir / "ablate.csv";
  fs::remove(csv);
  std::vector<std::string> args{"ablate", "--out", csv.string()};
  args.insert(args.end(), common.begin(), common.end());
  c.expect(run(args) == 0, "ablation failed");
  if (!c.done().pass) return c.done();
  const double grid_s = seconds_since(t0);

  const std::vector<int> steps{20, 50, 100};
  const std::vector<std::string> etas{"0", "0.2", "0.4", "0.8"};
  const std::vector<std::string> cutoffs{"none", "600", "2000", "5000"};
  std::map<std::string, std::vector<double>> medians;
  std::map<std::string, double> means;
  std::set<std::string> seeds_seen;
  for (const auto& row : csv_rows(csv)) {
    if (row.size() != 8) continue;
    const std::string key = row[3] + "," + row[4] + "," + row[5];
    if (row[0] == "median") medians[key].push_back(std::stod(row[1]));
    if (row[0] == "cell_mean") {
      c.expect(!means.count(key), "duplicate row for cell " + key);
      means[key] = std::stod(row[1]);
    }
  }
  for (int T : steps) {
    for (const auto& eta : etas) {
      for (const auto& fc : cutoffs) {
        const std::string key = std::to_string(T) + "," + eta + "," + fc;
        c.expect(means.count(key) == 1, "missing cell " + key);
        const std::size_t want = eta == "0" ? 1 : 5;
        c.expect(medians[key].size() == want, "cell " + key + " has " +
                                                  std::to_string(medians[key].size()) + " repeats");
        double avg = 0.0;
        for (double v : medians[key]) avg += v / double(medians[key].size());
        c.expect(std::abs(avg - means[key]) <= 1e-5 * std::max(1.0, std::abs(avg)),
                 "cell " + key + " mean is not the repeat average");
      }
    }
  }
  c.expect(means.size() == steps.size() * etas.size() * cutoffs.size(), "unexpected cell count");

  // Determinism: an independent run of one stochastic cell reproduces its rows.
  const auto again = ctx.workdir / "ablate_again.csv";
  fs::remove(again);
  std::vector<std::string> one{"ablate", "--out", again.string(), "--steps-grid", "20",
                               "--eta-grid", "0.4", "--cutoff-grid", "5000"};
  one.insert(one.end(), common.begin(), common.end());
  c.expect(run(one) == 0, "rerun failed");
  std::vector<std::vector<std::string>> a, b;
  for (const auto& row : csv_rows(csv)) {
    if (row.size() == 8 && row[3] == "20" && row[4] == "0.4" && row[5] == "5000") a.push_back(row);
  }
  for (const auto& row : csv_rows(again)) {
    if (row.size() == 8 && row[3] == "20") b.push_back(row);
  }
  c.expect(!a.empty() && a == b, "rerun of T=20 eta=0.4 fc=5000 differs");
  const double total_s = seconds_since(t0);
  c.expect(total_s < 1800.0, "ablation took " + num(total_s) + " s");

  std::ostringstream deltas;
  for (int T : steps) {
    const std::string k = std::to_string(T);
    deltas << "T=" << T << " delta(eta 0.4 fc 5k - eta 0) "
           << num(means[k + ",0.4,5000"] - means[k + ",0,none"], 4) << " dB; ";
  }
  c.note(deltas.str() + "grid " + num(grid_s, 4) + " s, with rerun " + num(total_s, 4) + " s");
  return c.done();
}

struct Criterion {
  int id;
  std::string name;
  double limit_s;
  std::function<Outcome(const Context&)> fn;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Acceptance criteria");
  std::vector<int> selected;
  std::string workdir = (fs::temp_directory_path() / "sepdiff_acceptance").string();
  app.add_option("--criteria", selected, "Criterion numbers to run")->delimiter(',');
  app.add_option("--workdir", workdir, "Scratch directory for the end-to-end criteria");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all{
      {1, "schedule algebra", 1.0, schedule_algebra},
      {2, "refinement variance identity", 1.0, variance_identity},
      {3, "gaussian oracle sampler", 60.0, gaussian_oracle},
      {4, "high-pass filter", 10.0, filter_correctness},
      {5, "gradient fidelity", 120.0, gradient_fidelity},
      {6, "gradient routing", 10.0, gradient_routing},
      {7, "toy separation", 5400.0, toy_separation},
      {8, "refinement ablation", 3600.0, ablation},
      {9, "overlap-add transparency", 5.0, overlap_add},
      {10, "metric sanity", 5.0, metric_sanity},
  };
  const Context ctx{workdir};
  bool ok = true;
  for (const auto& cr : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), cr.id) == selected.end()) {
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.fn(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed = seconds_since(t0);
    if (elapsed > cr.limit_s) {
      o.pass = false;
      o.detail += " | runtime " + num(elapsed) + " s over " + num(cr.limit_s) + " s";
    }
    ok = ok && o.pass;
    std::cout << "criterion " << cr.id << " " << (o.pass ? "PASS" : "FAIL") << " [" << cr.name
              << "] " << std::fixed << std::setprecision(2) << elapsed << " s: " << o.detail
              << std::defaultfloat << std::endl;
  }
  return ok ? 0 : 1;
}
