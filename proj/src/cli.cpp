#include "sepdiff/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "sepdiff/audio_io.hpp"
#include "sepdiff/dsp.hpp"
#include "sepdiff/error.hpp"
#include "sepdiff/file_util.hpp"
#include "sepdiff/metrics.hpp"
#include "sepdiff/model.hpp"
#include "sepdiff/sampler.hpp"
#include "sepdiff/schedule.hpp"
#include "sepdiff/synthdata.hpp"
#include "sepdiff/training.hpp"

namespace sepdiff {

namespace fs = std::filesystem;

namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::EmptyDataset:
      return kExitBadArguments;
    case ErrorCode::IoError:
    case ErrorCode::UnsupportedFormat:
    case ErrorCode::CorruptFile:
    case ErrorCode::VersionMismatch:
      return kExitIo;
    case ErrorCode::NumericFailure:
    case ErrorCode::UndefinedReference:
    case ErrorCode::ContractViolation:
      return kExitNumeric;
  }
  return kExitFailure;
}

std::optional<double> parse_cutoff(const std::string& text) {
  if (text == "none" || text == "off") return std::nullopt;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size()) {
    fail(ErrorCode::InvalidArgument, "cutoff '" + text + "' is neither a number nor 'none'");
  }
  return v;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

void print_config(std::ostream& out, const std::string& command, const KeyValues& kv) {
  out << "# " << command << " configuration\n";
  std::istringstream lines(kv.to_text());
  std::string line;
  while (std::getline(lines, line)) out << "# " << line << '\n';
}

KeyValues sampler_kv(const SeparationOptions& o) {
  KeyValues kv;
  kv.set("steps", (long long)o.sampler.steps);
  kv.set("eta", o.sampler.eta);
  kv.set("cutoff_hz", format_cutoff(o.sampler.cutoff_hz));
  kv.set("seed", (long long)o.sampler.seed);
  kv.set("chunk_seconds", o.chunk_seconds);
  kv.set("overlap", o.overlap);
  return kv;
}

/// `<root>/<split>` when present, else `root`.
fs::path split_dir(const fs::path& root, const std::string& split) {
  const fs::path sub = root / split;
  return fs::is_directory(sub) ? sub : root;
}

std::vector<TrackPair> load_tracks(const fs::path& root, std::size_t channels,
                                   std::size_t max_tracks, double excerpt_seconds,
                                   std::ostream& err) {
  if (!fs::is_directory(root)) {
    fail(ErrorCode::InvalidArgument, "dataset directory not found: " + root.string());
  }
  const ScanResult scan = scan_dataset(root);
  for (const auto& w : scan.warnings) err << "warning: " << w << '\n';
  std::vector<TrackPair> tracks;
  for (const auto& item : scan.items) {
    if (max_tracks && tracks.size() >= max_tracks) break;
    TrackPair t = load_pair(item, channels);
    if (excerpt_seconds > 0.0) {
      const auto n = std::size_t(std::llround(excerpt_seconds * t.target.sample_rate()));
      if (n < t.target.length()) {
        const std::size_t offset = (t.target.length() - n) / 2;
        t.mixture = t.mixture.slice(offset, n);
        t.target = t.target.slice(offset, n);
      }
    }
    tracks.push_back(std::move(t));
  }
  return tracks;
}

void require_rate(const std::vector<TrackPair>& tracks, const ModelConfig& mc) {
  for (const auto& t : tracks) {
    if (std::lround(t.target.sample_rate()) != mc.sample_rate) {
      fail(ErrorCode::InvalidArgument,
           "track " + t.name + " is at " + fmt(t.target.sample_rate()) +
               " Hz but the model expects " + std::to_string(mc.sample_rate) + " Hz");
    }
  }
}

struct SamplerFlags {
  int steps = 50;
  double eta = 0.4;
  std::string cutoff = "5000";
  std::uint64_t seed = 0;
  double chunk_seconds = 3.0;
  double overlap = 0.2;

  void add_to(CLI::App* app) {
    app->add_option("--steps", steps, "Sampling steps T")->capture_default_str();
    app->add_option("--eta", eta, "Refinement noise level")->capture_default_str();
    app->add_option("--cutoff-hz", cutoff, "High-pass cutoff for refinement noise, or 'none'")
        ->capture_default_str();
    app->add_option("--seed", seed, "Sampling seed")->capture_default_str();
    app->add_option("--chunk-seconds", chunk_seconds, "Chunk duration")->capture_default_str();
    app->add_option("--overlap", overlap, "Chunk overlap fraction")->capture_default_str();
  }

  SeparationOptions resolve() const {
    SeparationOptions o;
    o.sampler.steps = steps;
    o.sampler.eta = eta;
    o.sampler.cutoff_hz = parse_cutoff(cutoff);
    o.sampler.seed = seed;
    o.chunk_seconds = chunk_seconds;
    o.overlap = overlap;
    return o;
  }
};

template <class V>
std::vector<V> parse_list(const std::string& text, V (*convert)(const std::string&)) {
  std::vector<V> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(convert(item));
  }
  if (out.empty()) fail(ErrorCode::InvalidArgument, "empty grid '" + text + "'");
  return out;
}

int to_int(const std::string& s) {
  try {
    return std::stoi(s);
  } catch (const std::exception&) {
    fail(ErrorCode::InvalidArgument, "not an integer: " + s);
  }
}

double to_double(const std::string& s) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    fail(ErrorCode::InvalidArgument, "not a number: " + s);
  }
}

std::optional<double> to_cutoff(const std::string& s) { return parse_cutoff(s); }

// ---------------------------------------------------------------------------
// Commands

int cmd_schedule_dump(int steps, std::uint64_t seed, std::ostream& out) {
  const auto schedule = NoiseSchedule::make(steps);
  KeyValues kv;
  kv.set("steps", (long long)steps);
  kv.set("spacing", std::string("linear"));
  kv.set("seed", (long long)seed);
  print_config(out, "schedule dump", kv);
  out << std::setprecision(17) << "t,sigma,alpha,beta\n";
  for (int t = 0; t <= schedule.steps(); ++t) {
    const auto k = coeffs(schedule[std::size_t(t)]);
    out << t << ',' << schedule[std::size_t(t)] << ',' << k.alpha << ',' << k.beta << '\n';
  }
  return kExitOk;
}

int cmd_dsp_design(double cutoff, int order, double rate, std::uint64_t seed,
                   std::ostream& out) {
  const auto filter = design_butterworth_hp(cutoff, rate, order);
  KeyValues kv;
  kv.set("cutoff_hz", cutoff);
  kv.set("order", (long long)order);
  kv.set("rate", rate);
  kv.set("seed", (long long)seed);
  print_config(out, "dsp design", kv);
  const auto gain = noise_power_gain(filter);
  out << std::setprecision(17) << "section,b0,b1,b2,a1,a2\n";
  for (std::size_t i = 0; i < filter.sections.size(); ++i) {
    const auto& s = filter.sections[i];
    out << i << ',' << s.b0 << ',' << s.b1 << ',' << s.b2 << ',' << s.a1 << ',' << s.a2
        << '\n';
  }
  out << "# gain_at_cutoff_db=" << filter.magnitude_db(cutoff)
      << " noise_power_gain=" << gain.gain << " taps=" << gain.taps << '\n';
  return kExitOk;
}

int cmd_synth(const std::string& spec_path, const fs::path& out_dir,
              std::optional<std::uint64_t> seed, std::ostream& out) {
  SynthSpec spec = spec_path.empty() ? SynthSpec{} : SynthSpec::from_kv(KeyValues::load(spec_path));
  if (seed) spec.seed = *seed;
  spec.validate();
  print_config(out, "synth", spec.to_kv());
  synthesize(spec, out_dir);
  out << "wrote " << spec.track_count << " train and " << spec.test_track_count
      << " test tracks to " << out_dir.string() << '\n';
  return kExitOk;
}

struct TrainFlags {
  std::string dataset, config, model_config, preset = "toy", out, loss_csv, init;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainFlags& f, std::ostream& out, std::ostream& err) {
  TrainingConfig tc =
      f.config.empty() ? TrainingConfig{} : TrainingConfig::from_kv(KeyValues::load(f.config));
  if (f.seed) tc.seed = *f.seed;
  tc.validate();

  KeyValues model_kv;
  if (!f.model_config.empty()) model_kv = KeyValues::load(f.model_config);
  if (!model_kv.has("preset")) model_kv.set("preset", f.preset);
  ModelConfig mc = ModelConfig::from_kv(model_kv);

  const fs::path root = split_dir(f.dataset, "train");
  auto tracks = load_tracks(root, std::size_t(mc.channel_count), 0, 0.0, err);
  const int rate = int(std::lround(tracks.front().target.sample_rate()));
  if (!model_kv.has("sample_rate")) {
    mc.sample_rate = rate;
    mc.validate();
  }
  require_rate(tracks, mc);

  std::optional<SeparationModel> model;
  if (!f.init.empty()) {
    model.emplace(load_model(f.init));
    mc = model->config();
    require_rate(tracks, mc);
  } else {
    model.emplace(mc, tc.seed);
  }
  KeyValues resolved = tc.to_kv();
  const KeyValues model_resolved = mc.to_kv();
  for (const auto& [k, v] : model_resolved.entries()) resolved.set("model." + k, v);
  resolved.set("dataset", root.string());
  resolved.set("tracks", (long long)tracks.size());
  print_config(out, "train", resolved);
  out << "parameters " << model->parameter_count() << " (generator "
      << model->parameter_count(std::string("gen.")) << ", conditioner "
      << model->parameter_count(std::string("cond.")) << ")\n";

  TrainOptions opts;
  opts.loss_csv = f.loss_csv.empty() ? fs::path(f.out + ".loss.csv") : fs::path(f.loss_csv);
  opts.checkpoint = fs::path(f.out);
  opts.log = &out;
  const TrainResult r = train(*model, tracks, tc, opts);
  save_model(f.out, *model);
  out << "trained " << r.curve.size() << " steps; discarded " << r.discarded_silent
      << " silent chunks; model written to " << f.out << '\n';
  return kExitOk;
}

std::shared_ptr<SeparationModel> open_model(const std::string& path) {
  return std::make_shared<SeparationModel>(load_model(path));
}

int cmd_separate(const std::string& model_path, const std::string& input,
                 const std::string& output, const SamplerFlags& flags,
                 const std::string& trace_path, const std::string& format,
                 std::ostream& out) {
  const SeparationOptions options = flags.resolve();
  const auto model = open_model(model_path);
  const ModelConfig& mc = model->config();
  AudioBuffer mixture = match_channels(read_wav(input), std::size_t(mc.channel_count));
  if (std::lround(mixture.sample_rate()) != mc.sample_rate) {
    fail(ErrorCode::InvalidArgument, input + " is at " + fmt(mixture.sample_rate()) +
                                         " Hz but the model expects " +
                                         std::to_string(mc.sample_rate) + " Hz");
  }
  options.sampler.validate(mixture.sample_rate());
  KeyValues kv = sampler_kv(options);
  kv.set("model", model_path);
  kv.set("input", input);
  kv.set("output", output);
  print_config(out, "separate", kv);

  ModelDenoiser denoiser(model);
  std::vector<StepDiagnostics> trace;
  const AudioBuffer est = separate(mixture, denoiser, options, mc.total_factor(),
                                   trace_path.empty() ? nullptr : &trace);
  write_wav(output, est, format == "pcm16" ? WavFormat::Pcm16 : WavFormat::Float32);
  if (!trace_path.empty()) write_trace_csv(trace_path, trace);
  out << "wrote " << output << '\n';
  return kExitOk;
}

struct EvalFlags {
  std::string model, estimates, dataset, out;
  SamplerFlags sampler;
  int repeats = 5;
  std::size_t max_tracks = 0;
  double excerpt_seconds = 0.0;
};

int cmd_eval(const EvalFlags& f, std::ostream& out, std::ostream& err) {
  const fs::path root = split_dir(f.dataset, "test");
  if (!f.estimates.empty()) {
    KeyValues kv;
    kv.set("estimates", f.estimates);
    kv.set("dataset", root.string());
    print_config(out, "eval", kv);
    const auto tracks = load_tracks(root, 0, f.max_tracks, f.excerpt_seconds, err);
    const EvalResult base = evaluate_mixture_baseline(tracks);
    const EvalResult r = evaluate_estimates(tracks, f.estimates);
    write_file_atomic(f.out, eval_csv(r, &base));
    out << "median SDR " << r.median_sdr_db << " dB (mixture baseline " << base.median_sdr_db
        << " dB) over " << r.track_count << " tracks\n";
    return kExitOk;
  }
  const SeparationOptions options = f.sampler.resolve();
  const auto model = open_model(f.model);
  const ModelConfig& mc = model->config();
  const auto tracks =
      load_tracks(root, std::size_t(mc.channel_count), f.max_tracks, f.excerpt_seconds, err);
  require_rate(tracks, mc);
  options.sampler.validate(double(mc.sample_rate));
  KeyValues kv = sampler_kv(options);
  kv.set("model", f.model);
  kv.set("dataset", root.string());
  kv.set("repeats", (long long)(options.sampler.eta > 0.0 ? f.repeats : 1));
  kv.set("tracks", (long long)tracks.size());
  print_config(out, "eval", kv);
  if (options.sampler.eta == 0.0 && f.repeats > 1) {
    out << "note: eta = 0 is deterministic; evaluating once\n";
  }

  ModelDenoiser denoiser(model);
  const EvalResult base = evaluate_mixture_baseline(tracks);
  const EvalResult r = evaluate_model(tracks, denoiser, options, f.repeats, mc.total_factor());
  write_file_atomic(f.out, eval_csv(r, &base));
  out << "median SDR " << r.median_sdr_db << " dB, median SIR " << r.median_sir_db
      << " dB (mixture baseline SDR " << base.median_sdr_db << " dB) over " << r.track_count
      << " tracks\n";
  return kExitOk;
}

struct AblateFlags {
  std::string model, dataset, out;
  std::string steps_grid = "20,50,100";
  std::string eta_grid = "0,0.2,0.4,0.8";
  std::string cutoff_grid = "none,600,2000,5000";
  int repeats = 5;
  std::uint64_t seed = 0;
  double chunk_seconds = 3.0;
  double overlap = 0.2;
  std::size_t max_tracks = 0;
  double excerpt_seconds = 0.0;
};

std::string cell_key(int steps, double eta, const std::optional<double>& cutoff) {
  return std::to_string(steps) + ',' + fmt(eta) + ',' + format_cutoff(cutoff);
}

int cmd_ablate(const AblateFlags& f, std::ostream& out, std::ostream& err) {
  const auto steps_grid = parse_list<int>(f.steps_grid, to_int);
  const auto eta_grid = parse_list<double>(f.eta_grid, to_double);
  const auto cutoff_grid = parse_list<std::optional<double>>(f.cutoff_grid, to_cutoff);
  require(f.repeats >= 1, "repeats must be at least 1");

  const auto model = open_model(f.model);
  const ModelConfig& mc = model->config();
  const fs::path root = split_dir(f.dataset, "test");
  const auto tracks =
      load_tracks(root, std::size_t(mc.channel_count), f.max_tracks, f.excerpt_seconds, err);
  require_rate(tracks, mc);
  for (int t : steps_grid) require(t >= 1, "steps grid entries must be >= 1");
  for (double e : eta_grid) require(e >= 0.0, "eta grid entries must be >= 0");
  for (const auto& c : cutoff_grid) {
    if (c) require(*c > 0.0 && *c < mc.sample_rate / 2.0, "cutoff outside (0, Nyquist)");
  }

  KeyValues kv;
  kv.set("model", f.model);
  kv.set("dataset", root.string());
  kv.set("steps_grid", f.steps_grid);
  kv.set("eta_grid", f.eta_grid);
  kv.set("cutoff_grid", f.cutoff_grid);
  kv.set("repeats", (long long)f.repeats);
  kv.set("seed", (long long)f.seed);
  kv.set("chunk_seconds", f.chunk_seconds);
  kv.set("overlap", f.overlap);
  kv.set("tracks", (long long)tracks.size());
  print_config(out, "ablate", kv);

  // Resume: keep existing rows and skip cells that already have their mean row.
  std::string csv;
  std::set<std::string> done;
  if (fs::exists(f.out)) {
    std::istringstream in(read_file(f.out));
    std::string line;
    bool tagged = false;
    while (std::getline(in, line)) {
      if (line == kEvalCsvTag) tagged = true;
      csv += line + '\n';
      if (line.rfind("cell_mean,", 0) == 0) {
        std::vector<std::string> cols;
        std::stringstream ls(line);
        std::string col;
        while (std::getline(ls, col, ',')) cols.push_back(col);
        if (cols.size() == 8) done.insert(cols[3] + ',' + cols[4] + ',' + cols[5]);
      }
    }
    if (!tagged) fail(ErrorCode::IoError, f.out + " exists but is not an evaluation CSV");
    out << "resuming: " << done.size() << " cells already complete\n";
  } else {
    const EvalResult base = evaluate_mixture_baseline(tracks);
    std::ostringstream head;
    head.precision(8);
    head << kEvalCsvTag << '\n' << kEvalCsvHeader << '\n';
    head << "mixture_baseline," << base.median_sdr_db << ',' << base.median_sir_db
         << ",0,0,none," << f.seed << ",all\n";
    csv = head.str();
    write_file_atomic(f.out, csv);
  }

  ModelDenoiser denoiser(model);
  bool noted = false;
  for (int steps : steps_grid) {
    for (double eta : eta_grid) {
      for (const auto& cutoff : cutoff_grid) {
        const std::string key = cell_key(steps, eta, cutoff);
        if (done.count(key)) continue;
        if (eta == 0.0 && f.repeats > 1 && !noted) {
          out << "note: eta = 0 cells are deterministic; --repeats ignored for them\n";
          noted = true;
        }
        SeparationOptions o;
        o.sampler.steps = steps;
        o.sampler.eta = eta;
        o.sampler.cutoff_hz = cutoff;
        o.sampler.seed = f.seed;
        o.chunk_seconds = f.chunk_seconds;
        o.overlap = f.overlap;
        const EvalResult r = evaluate_model(tracks, denoiser, o, f.repeats, mc.total_factor());
        std::ostringstream rows;
        rows.precision(8);
        for (std::size_t i = 0; i < r.repeat_median_sdr.size(); ++i) {
          rows << "median," << r.repeat_median_sdr[i] << ',' << r.repeat_median_sir[i] << ','
               << key << ',' << repeat_seed(f.seed, int(i), eta) << ',' << i << '\n';
        }
        rows << "cell_mean," << r.median_sdr_db << ',' << r.median_sir_db << ',' << key << ','
             << f.seed << ",all\n";
        csv += rows.str();
        write_file_atomic(f.out, csv);
        done.insert(key);
        out << "cell T=" << steps << " eta=" << fmt(eta) << " fc=" << format_cutoff(cutoff)
            << ": median SDR " << r.median_sdr_db << " dB over " << r.repeat_median_sdr.size()
            << " repeat(s)\n";
      }
    }
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditioned diffusion vocal separation"};
  app.require_subcommand(1);

  auto* schedule = app.add_subcommand("schedule", "Noise schedule utilities");
  auto* schedule_dump = schedule->add_subcommand("dump", "Print sigma, alpha, beta per step");
  schedule->require_subcommand(1);
  int dump_steps = 50;
  std::string dump_format = "csv";
  schedule_dump->add_option("--steps", dump_steps, "Number of steps T")->capture_default_str();
  schedule_dump->add_option("--format", dump_format)->check(CLI::IsMember({"csv"}));
  std::uint64_t dump_seed = 0;
  schedule_dump->add_option("--seed", dump_seed, "Accepted for uniformity; unused");

  auto* dsp = app.add_subcommand("dsp", "Filter utilities");
  auto* dsp_design = dsp->add_subcommand("design", "Print Butterworth high-pass sections");
  dsp->require_subcommand(1);
  double design_cutoff = 5000.0, design_rate = 44100.0;
  int design_order = 4;
  std::string design_format = "csv";
  dsp_design->add_option("--cutoff-hz", design_cutoff)->capture_default_str();
  dsp_design->add_option("--order", design_order)->capture_default_str();
  dsp_design->add_option("--rate", design_rate)->capture_default_str();
  dsp_design->add_option("--format", design_format)->check(CLI::IsMember({"csv"}));
  std::uint64_t design_seed = 0;
  dsp_design->add_option("--seed", design_seed, "Accepted for uniformity; unused");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_spec, synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--spec", synth_spec, "Key-value dataset description");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Override the description seed");

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  TrainFlags tf;
  train_cmd->add_option("--dataset", tf.dataset, "Dataset root")->required();
  train_cmd->add_option("--config", tf.config, "Training key-value config");
  train_cmd->add_option("--model-config", tf.model_config, "Model key-value config");
  train_cmd->add_option("--preset", tf.preset, "Model preset")
      ->check(CLI::IsMember({"toy", "tiny", "full"}))
      ->capture_default_str();
  train_cmd->add_option("--out", tf.out, "Output model path")->required();
  train_cmd->add_option("--loss-csv", tf.loss_csv, "Loss curve CSV");
  train_cmd->add_option("--init", tf.init, "Continue from an existing model");
  train_cmd->add_option("--seed", tf.seed, "Override the training seed");

  auto* sep = app.add_subcommand("separate", "Separate vocals from a mixture");
  std::string sep_model, sep_input, sep_output, sep_trace, sep_format = "float32";
  SamplerFlags sep_flags;
  sep->add_option("--model", sep_model)->required();
  sep->add_option("--input", sep_input)->required();
  sep->add_option("--output", sep_output)->required();
  sep->add_option("--trace", sep_trace, "Per-step diagnostics CSV (first chunk)");
  sep->add_option("--format", sep_format)->check(CLI::IsMember({"float32", "pcm16"}));
  sep_flags.add_to(sep);

  auto* eval = app.add_subcommand("eval", "Evaluate SDR / SIR on a dataset");
  EvalFlags ef;
  auto* eval_model = eval->add_option("--model", ef.model);
  auto* eval_est = eval->add_option("--estimates", ef.estimates, "Directory of estimates");
  eval_model->excludes(eval_est);
  eval->add_option("--dataset", ef.dataset)->required();
  eval->add_option("--out", ef.out, "Output CSV")->required();
  eval->add_option("--repeats", ef.repeats, "Repeats when eta > 0")->capture_default_str();
  eval->add_option("--max-tracks", ef.max_tracks, "Evaluate only the first N tracks");
  eval->add_option("--excerpt-seconds", ef.excerpt_seconds, "Central excerpt per track");
  ef.sampler.add_to(eval);

  auto* ablate = app.add_subcommand("ablate", "Sweep steps x eta x cutoff");
  AblateFlags af;
  ablate->add_option("--model", af.model)->required();
  ablate->add_option("--dataset", af.dataset)->required();
  ablate->add_option("--out", af.out, "Output CSV (resumed if present)")->required();
  ablate->add_option("--steps-grid", af.steps_grid)->capture_default_str();
  ablate->add_option("--eta-grid", af.eta_grid)->capture_default_str();
  ablate->add_option("--cutoff-grid", af.cutoff_grid)->capture_default_str();
  ablate->add_option("--repeats", af.repeats)->capture_default_str();
  ablate->add_option("--seed", af.seed)->capture_default_str();
  ablate->add_option("--chunk-seconds", af.chunk_seconds)->capture_default_str();
  ablate->add_option("--overlap", af.overlap)->capture_default_str();
  ablate->add_option("--max-tracks", af.max_tracks, "Use only the first N tracks");
  ablate->add_option("--excerpt-seconds", af.excerpt_seconds, "Central excerpt per track");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitBadArguments;
  }

  try {
    if (schedule_dump->parsed()) return cmd_schedule_dump(dump_steps, dump_seed, out);
    if (dsp_design->parsed()) {
      return cmd_dsp_design(design_cutoff, design_order, design_rate, design_seed, out);
    }
    if (synth->parsed()) return cmd_synth(synth_spec, synth_out, synth_seed, out);
    if (train_cmd->parsed()) return cmd_train(tf, out, err);
    if (sep->parsed()) {
      return cmd_separate(sep_model, sep_input, sep_output, sep_flags, sep_trace, sep_format,
                          out);
    }
    if (eval->parsed()) {
      if (ef.model.empty() && ef.estimates.empty()) {
        err << "error: eval needs --model or --estimates\n";
        return kExitBadArguments;
      }
      return cmd_eval(ef, out, err);
    }
    if (ablate->parsed()) return cmd_ablate(af, out, err);
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitBadArguments;
}

}  // namespace sepdiff
