#include "lctem/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>

#include "lctem/cellgeom.hpp"
#include "lctem/checkpoint.hpp"
#include "lctem/error.hpp"
#include "lctem/manifest.hpp"
#include "lctem/parallel.hpp"
#include "lctem/pgm.hpp"
#include "lctem/stream.hpp"
#include "lctem/synth.hpp"
#include "lctem/text.hpp"
#include "lctem/train.hpp"

namespace fs = std::filesystem;

namespace lctem::cli {

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string config;
  std::string out = ".";
};

struct DataOptions {
  std::string manifest;
  int synthetic = 0;
  int size = 64;
  std::string degrade = "default";
};

std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void add_data_options(CLI::App* sub, DataOptions& d, bool with_size = true) {
  sub->add_option("--manifest", d.manifest, "Pair manifest CSV (id,noisy_path,truth_path,noisy_dose,truth_dose)");
  sub->add_option("--synthetic", d.synthetic, "Generate this many synthetic pairs instead of reading a manifest");
  if (with_size) sub->add_option("--size", d.size, "Images are area-resized to size x size (0 keeps stored size)");
  sub->add_option("--degrade", d.degrade, "Synthetic degradation: default or identity");
}

DegradeSpec degrade_spec(const std::string& name) {
  if (name == "default") return DegradeSpec{};
  if (name == "identity") return DegradeSpec::identity();
  throw InputError("unknown degradation '" + name + "' (expected default or identity)");
}

std::vector<PairedSample> load_data(const DataOptions& d, std::uint64_t seed) {
  if (d.manifest.empty() == (d.synthetic == 0))
    throw InputError("give exactly one of --manifest or --synthetic");
  if (d.synthetic < 0) throw InputError("--synthetic must be positive");
  std::vector<PairedSample> pairs =
      d.synthetic > 0 ? synth_dataset(d.synthetic, d.size, seed, degrade_spec(d.degrade))
                      : load_pairs(load_manifest(d.manifest), d.size);
  if (pairs.empty()) throw InputError("dataset has no pairs");
  return pairs;
}

std::vector<int> parse_int_list(const std::string& s, const char* what) {
  std::vector<int> v;
  for (const auto& part : split(s, ',')) v.push_back(static_cast<int>(parse_int(part, what)));
  if (v.empty()) throw InputError(std::string(what) + ": empty list");
  return v;
}

std::string histogram_rows(const Histogram& h) {
  std::string out;
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    out += g6(h.edges[i]) + "," + g6(h.edges[i + 1]) + "," + std::to_string(h.counts[i]) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

struct StatsOptions {
  DataOptions data;
  double dose_lo = 0.1, dose_hi = 1e5;
  int dose_bins = 12;
  int ssim_bins = 20;
};

int cmd_dataset_stats(const StatsOptions& o, const Globals& g, std::ostream& out) {
  const auto pairs = load_data(o.data, g.seed);
  std::vector<double> noisy, truth, scores;
  for (const auto& p : pairs) {
    noisy.push_back(p.noisy_dose);
    truth.push_back(p.truth_dose);
    scores.push_back(ssim(p.noisy, p.truth).mean);
  }
  const LogBins bins{o.dose_lo, o.dose_hi, o.dose_bins};
  const auto hn = dose_histogram(noisy, bins), ht = dose_histogram(truth, bins);
  std::string dose = "bin_lo,bin_hi,noisy_count,truth_count\n";
  for (std::size_t i = 0; i < hn.counts.size(); ++i)
    dose += g6(hn.edges[i]) + "," + g6(hn.edges[i + 1]) + "," + std::to_string(hn.counts[i]) + "," +
            std::to_string(ht.counts[i]) + "\n";
  if (o.ssim_bins < 1) throw InputError("--ssim-bins must be positive");
  std::vector<double> edges;
  for (int i = 0; i <= o.ssim_bins; ++i) edges.push_back(static_cast<double>(i) / o.ssim_bins);
  const auto hs = linear_histogram(scores, edges);
  const fs::path dir(g.out);
  write_text(dir / "dose_histogram.csv", dose);
  write_text(dir / "ssim_histogram.csv", "bin_lo,bin_hi,count\n" + histogram_rows(hs));
  double mean = 0.0;
  for (double s : scores) mean += s;
  out << "pairs " << pairs.size() << ", mean pair SSIM " << g6(mean / static_cast<double>(scores.size())) << "\n"
      << "wrote " << (dir / "dose_histogram.csv").string() << " and " << (dir / "ssim_histogram.csv").string()
      << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  DataOptions data;
  std::string blocks = "2,2,2,2";
  int width = 16;
  std::string stem = "conv3";
  std::string norm = "batch";
  std::string loss = "ssim";
  double lr = 1e-4;
  int epochs = 60;
  int batch = 4;
  double split = 0.9;
  double mosaic = 0.25;
  bool no_flips = false;
  int eval_every = 1;
  int ssim_window = 11;
};

ModelConfig model_config(const TrainOptions& o, int size) {
  ModelConfig c;
  c.encoder_blocks = parse_int_list(o.blocks, "--blocks");
  c.base_width = o.width;
  c.input_size = size;
  if (o.stem == "conv3") c.stem = StemKind::Conv3;
  else if (o.stem == "conv7") c.stem = StemKind::Conv7;
  else throw InputError("--stem must be conv3 or conv7");
  if (o.norm == "batch") c.norm = NormKind::Batch;
  else if (o.norm == "none") c.norm = NormKind::None;
  else throw InputError("--norm must be batch or none");
  c.validate();
  return c;
}

TrainConfig train_config(const TrainOptions& o, std::uint64_t seed) {
  TrainConfig t;
  t.loss = parse_loss_kind(o.loss);
  t.learning_rate = o.lr;
  t.epochs = o.epochs;
  t.batch_size = o.batch;
  t.split_fraction = o.split;
  t.seed = seed;
  t.flips = !o.no_flips;
  t.mosaic_probability = o.mosaic;
  t.ssim.window_size = o.ssim_window;
  t.validate();
  return t;
}

int cmd_train(const TrainOptions& o, const Globals& g, std::ostream& out) {
  const TrainConfig cfg = train_config(o, g.seed);
  auto pairs = load_data(o.data, g.seed);
  const int size = pairs.front().noisy.width();
  const ModelConfig mc = model_config(o, size);
  const auto data = split_dataset(std::move(pairs), cfg.split_fraction, g.seed);
  UNet<float> model(mc, g.seed);
  const fs::path dir(g.out);
  const auto base = evaluate_predictions(
      [&] {
        std::vector<NormalizedImage> s;
        for (const auto& p : data.validation) s.push_back(p.noisy);
        return s;
      }(),
      data.validation, cfg.ssim);
  out << "train " << data.train.size() << " / validation " << data.validation.size() << " pairs, "
      << model.store().parameter_count() << " parameters\n"
      << "baseline validation PSNR " << base.baseline_psnr.to_string() << " dB, SSIM " << g6(base.baseline_ssim)
      << "\n";
  std::vector<CurvePoint> curve;
  try {
    validation_curve(model, data, cfg, o.eval_every, [&](const CurvePoint& p) {
      curve.push_back(p);
      out << "epoch " << p.epoch << " train " << g6(p.train_loss) << " val " << g6(p.val_loss) << " psnr "
          << (p.val_psnr.is_unbounded() ? "inf" : g6(p.val_psnr.db())) << " ssim " << g6(p.val_ssim) << "\n";
    });
  } catch (const NonFiniteError&) {
    write_text(dir / "train_log.csv", curve_csv(curve));
    throw;
  }
  write_text(dir / "train_log.csv", curve_csv(curve));
  save_checkpoint(model, dir / "model.lctm");
  out << "wrote " << (dir / "model.lctm").string() << " and " << (dir / "train_log.csv").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string checkpoint;
  DataOptions data;
  std::string subset = "validation";
  double split = 0.9;
  std::string loss = "ssim";
  int ssim_window = 11;
};

UNet<float> require_checkpoint(const std::string& path) {
  if (path.empty()) throw InputError("--checkpoint is required");
  return load_checkpoint<float>(path);
}

int cmd_eval(EvalOptions o, const Globals& g, std::ostream& out) {
  auto model = require_checkpoint(o.checkpoint);
  if (o.data.size == 0 || o.data.synthetic > 0) o.data.size = model.config().input_size;
  auto pairs = load_data(o.data, g.seed);
  if (o.subset == "validation") pairs = split_dataset(std::move(pairs), o.split, g.seed).validation;
  else if (o.subset != "all") throw InputError("--subset must be validation or all");
  TrainConfig cfg;
  cfg.loss = parse_loss_kind(o.loss);
  cfg.ssim.window_size = o.ssim_window;
  const auto report = evaluate(model, pairs, cfg);
  std::string rows = "id,psnr,ssim,baseline_psnr,baseline_ssim\n";
  for (const auto& p : report.pairs)
    rows += p.id + "," + p.psnr.to_string() + "," + format_real(p.ssim) + "," + p.baseline_psnr.to_string() + "," +
            format_real(p.baseline_ssim) + "\n";
  const fs::path dir(g.out);
  write_text(dir / "eval_report.csv", report.to_csv());
  write_text(dir / "eval_pairs.csv", rows);
  out << report.to_csv() << "wrote " << (dir / "eval_report.csv").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct RefineOptions {
  std::string checkpoint;
  std::vector<std::string> images;
};

int cmd_refine(const RefineOptions& o, const Globals& g, std::ostream& out) {
  auto model = require_checkpoint(o.checkpoint);
  if (o.images.empty()) throw InputError("no input images");
  const int size = model.config().input_size;
  for (const auto& path : o.images) {
    const auto raw = load_pgm(path);
    const NormalizedImage input(
        rescale_intensity(area_resize(ImageArray(raw.counts().cast<double>()), size, size)));
    const auto p = predict_one(model, input);
    const fs::path dst = fs::path(g.out) / (fs::path(path).stem().string() + "_P.pgm");
    save_pgm(p, dst);
    out << dst.string() << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct BenchOptions {
  std::string checkpoint;
  std::string sizes = "256,512,1024";
  int repeats = 10;
  int warmup = 3;
};

int cmd_bench(const BenchOptions& o, const Globals& g, std::ostream& out) {
  UNet<float> model = o.checkpoint.empty() ? UNet<float>([] {
    ModelConfig c;
    c.input_size = 64;
    return c;
  }(), g.seed)
                                           : load_checkpoint<float>(o.checkpoint);
  const auto reports = bench_conversion(model, parse_int_list(o.sizes, "--sizes"), o.repeats, o.warmup);
  const fs::path dir(g.out);
  write_text(dir / "bench.csv", bench_csv(reports));
  out << bench_csv(reports) << "wrote " << (dir / "bench.csv").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct StreamOptions {
  std::string checkpoint;
  int scene_size = 256;
  double fps = 100.0;
  double duration = 1.0;
  std::string dose = "0:20,1:200";
  std::string mode = "per-frame";
  double consumer_hz = 10.0;
  int queue = 2;
  int ring = 10;
  int reference = -1;
  bool realtime = false;
  bool no_frames = false;
};

DoseSchedule parse_schedule(const std::string& s) {
  std::vector<std::pair<double, double>> knots;
  for (const auto& part : split(s, ',')) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw InputError("--dose: expected t:rate pairs, got '" + part + "'");
    knots.emplace_back(parse_double(part.substr(0, colon), "--dose time"),
                       parse_double(part.substr(colon + 1), "--dose rate"));
  }
  return DoseSchedule(std::move(knots));
}

int cmd_stream(const StreamOptions& o, const Globals& g, std::ostream& out) {
  auto model = require_checkpoint(o.checkpoint);
  SceneSpec scene;
  scene.size = o.scene_size;
  scene.scene_seed = g.seed;
  const auto source = simulate_source(scene, o.fps, o.duration, parse_schedule(o.dose), g.seed);
  StreamConfig cfg;
  if (o.mode == "per-frame") cfg.mode = StreamMode::PerFrame;
  else if (o.mode == "integrated") cfg.mode = StreamMode::Integrated;
  else throw InputError("--mode must be per-frame or integrated");
  if (o.queue < 1 || o.ring < 1) throw InputError("--queue and --ring must be positive");
  if (o.consumer_hz < 0) throw InputError("--consumer-hz must be non-negative");
  cfg.queue_capacity = static_cast<std::size_t>(o.queue);
  cfg.ring_capacity = static_cast<std::size_t>(o.ring);
  cfg.consumer_period_s = o.consumer_hz > 0 ? 1.0 / o.consumer_hz : 0.0;
  if (o.reference >= 0) cfg.reference_frame = o.reference;
  cfg.realtime = o.realtime;
  const auto result = run_stream(model, source, cfg);
  const fs::path dir(g.out);
  write_text(dir / "telemetry.csv", result.telemetry_values_csv());
  write_text(dir / "telemetry_timing.csv", result.telemetry_timing_csv());
  if (!o.no_frames) {
    fs::create_directories(dir / "frames");
    for (const auto& [index, image] : result.frames) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%06d.pgm", index);
      save_pgm(image, dir / "frames" / name);
    }
  }
  out << source.size() << " frames, " << result.rows.size() << " refined, " << result.dropped << " dropped\n"
      << "wrote " << (dir / "telemetry.csv").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ThicknessOptions {
  std::string tilt, profile, edges;
  double particle = 0.1;
  double wa = 0.0, spacer = 0.0, window = 0.0;
};

std::vector<cellgeom::EdgeObservation> load_edges(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  const std::vector<std::string> header{"w_um", "wa_um", "s_um", "side", "g_per_mm", "h_edge_um"};
  if (!std::getline(in, line) || split(line, ',') != header)
    throw InputError(path.string() + ": expected header 'w_um,wa_um,s_um,side,g_per_mm,h_edge_um'");
  std::vector<cellgeom::EdgeObservation> obs;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto c = split(line, ',');
    const std::string where = path.string() + " row " + std::to_string(row);
    if (c.size() != header.size()) throw InputError(where + ": wrong number of columns");
    cellgeom::Side side;
    if (c[3] == "upper") side = cellgeom::Side::Upper;
    else if (c[3] == "lower") side = cellgeom::Side::Lower;
    else throw InputError(where + ": side must be upper or lower");
    obs.push_back({{parse_double(c[4], where) / cellgeom::kPerUmToPerMm, parse_double(c[5], where), side},
                   {parse_double(c[0], where), parse_double(c[1], where), parse_double(c[2], where)}});
  }
  return obs;
}

int cmd_thickness(const ThicknessOptions& o, const Globals& g, std::ostream& out) {
  using namespace cellgeom;
  if (o.tilt.empty() && o.profile.empty() && o.edges.empty())
    throw InputError("give at least one of --tilt, --profile, --edges");
  const fs::path dir(g.out);
  if (!o.tilt.empty()) {
    const auto f = fit_separation(load_tilt_csv(o.tilt));
    const double h = liquid_thickness(f.h_prime_um, o.particle);
    write_text(dir / "tilt_fit.csv",
               "h_prime_um,residual_rms_um,std_error_um,particle_diameter_um,liquid_thickness_um\n" +
                   g6(f.h_prime_um) + "," + g6(f.residual_rms_um) + "," + g6(f.std_error_um) + "," +
                   g6(o.particle) + "," + g6(h) + "\n");
    out << "h' = " << g6(f.h_prime_um) << " um (residual rms " << g6(f.residual_rms_um) << " um), h = " << g6(h)
        << " um\n";
  }
  if (!o.profile.empty()) {
    const auto f = fit_profile(load_profile_csv(o.profile));
    std::string head = "a_per_mm,b_um,residual_rms_um", row = g6(f.a_per_mm()) + "," + g6(f.b_um) + "," +
                                                               g6(f.residual_rms_um);
    out << "a = " << g6(f.a_per_mm()) << " /mm, b = " << g6(f.b_um) << " um\n";
    if (o.wa > 0.0) {
      const CellSpec cell{o.window > 0.0 ? o.window : o.wa, o.wa, o.spacer};
      const double model = empirical_thickness(0.0, cell);
      head += ",wa_um,s_um,empirical_center_um,fit_minus_empirical_um";
      row += "," + g6(o.wa) + "," + g6(o.spacer) + "," + g6(model) + "," + g6(f.b_um - model);
      out << "empirical centre thickness " << g6(model) << " um, fitted b - empirical = " << g6(f.b_um - model)
          << " um\n";
    }
    write_text(dir / "profile_fit.csv", head + "\n" + row + "\n");
  }
  if (!o.edges.empty()) {
    const auto s = scaling_relations(load_edges(o.edges));
    const auto& p = s.params;
    write_text(dir / "scaling_fit.csv",
               "a_upper,a_lower,b_upper,b_lower,eta_um,eta_upper_um,eta_lower_um,residual_rms_um\n" +
                   g6(p.a_upper) + "," + g6(p.a_lower) + "," + g6(p.b_upper) + "," + g6(p.b_lower) + "," +
                   g6(p.eta_um) + "," + g6(s.eta_upper_um) + "," + g6(s.eta_lower_um) + "," +
                   g6(s.residual_rms_um) + "\n");
    out << "a~ upper " << g6(p.a_upper) << ", lower " << g6(p.a_lower) << "; b~ upper " << g6(p.b_upper)
        << ", lower " << g6(p.b_lower) << "; eta " << g6(p.eta_um) << " um\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SynthOptions {
  int count = 200;
  int size = 64;
  std::string degrade = "default";
};

int cmd_synth(const SynthOptions& o, const Globals& g, std::ostream& out) {
  if (o.count < 1) throw InputError("--count must be positive");
  save_pairs(synth_dataset(o.count, o.size, g.seed, degrade_spec(o.degrade)), g.out);
  out << "wrote " << o.count << " pairs and " << (fs::path(g.out) / "manifest.csv").string() << "\n";
  return kExitOk;
}

// Config overlay: keys are long option names of the chosen subcommand or the
// globals; command-line values win.
void apply_config(const std::string& path, CLI::App& app, CLI::App* sub) {
  for (const auto& kv : read_key_values(path)) {
    CLI::Option* opt = sub->get_option_no_throw("--" + kv.key);
    if (!opt) opt = app.get_option_no_throw("--" + kv.key);
    if (!opt || kv.key == "config")
      throw InputError(path + " line " + std::to_string(kv.line) + ": unknown key '" + kv.key + "'");
    if (opt->count() > 0) continue;
    opt->add_result(kv.value);
    opt->run_callback();
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-dose micrograph refinement toolkit", "lctem"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for data generation, splits, initialization and augmentation");
  app.add_option("--threads", g.threads, "Worker threads (0 = OpenMP default)")->check(CLI::NonNegativeNumber);
  app.add_option("--config", g.config, "Plain-text key = value file; command-line flags override it");
  app.add_option("--out", g.out, "Output directory");

  StatsOptions stats;
  auto* s_stats = app.add_subcommand("dataset-stats", "Dose and pair-SSIM histograms of a dataset");
  add_data_options(s_stats, stats.data);
  s_stats->add_option("--dose-lo", stats.dose_lo, "Lowest dose bin edge, e/nm^2");
  s_stats->add_option("--dose-hi", stats.dose_hi, "Highest dose bin edge, e/nm^2");
  s_stats->add_option("--dose-bins", stats.dose_bins, "Number of log-spaced dose bins");
  s_stats->add_option("--ssim-bins", stats.ssim_bins, "Number of SSIM bins on [0, 1]");

  TrainOptions tr;
  auto* s_train = app.add_subcommand("train", "Train a model; writes model.lctm and train_log.csv");
  add_data_options(s_train, tr.data);
  s_train->add_option("--blocks", tr.blocks, "Residual blocks per encoder stage, comma separated");
  s_train->add_option("--width", tr.width, "Channels of the first stage");
  s_train->add_option("--stem", tr.stem, "conv3 or conv7");
  s_train->add_option("--norm", tr.norm, "batch or none");
  s_train->add_option("--loss", tr.loss, "ssim, l1 or l2");
  s_train->add_option("--lr", tr.lr, "Adam learning rate");
  s_train->add_option("--epochs", tr.epochs, "Training epochs");
  s_train->add_option("--batch-size", tr.batch, "Pairs per optimizer step");
  s_train->add_option("--split", tr.split, "Training fraction of the dataset");
  s_train->add_option("--mosaic", tr.mosaic, "Probability of a four-pair mosaic sample");
  s_train->add_flag("--no-flips", tr.no_flips, "Disable random flips");
  s_train->add_option("--eval-every", tr.eval_every, "Validate every n epochs");
  s_train->add_option("--ssim-window", tr.ssim_window, "SSIM window for loss and metrics");

  EvalOptions ev;
  auto* s_eval = app.add_subcommand("eval", "PSNR/SSIM table of a checkpoint; writes eval_report.csv");
  s_eval->add_option("--checkpoint", ev.checkpoint, "Model checkpoint");
  add_data_options(s_eval, ev.data);
  s_eval->add_option("--subset", ev.subset, "validation (seeded split) or all");
  s_eval->add_option("--split", ev.split, "Training fraction used to find the validation split");
  s_eval->add_option("--loss", ev.loss, "Loss label for the report row");
  s_eval->add_option("--ssim-window", ev.ssim_window, "SSIM window");

  RefineOptions rf;
  auto* s_refine = app.add_subcommand("refine", "Refine PGM images; writes <name>_P.pgm");
  s_refine->add_option("--checkpoint", rf.checkpoint, "Model checkpoint");
  s_refine->add_option("images", rf.images, "Input PGM files");

  BenchOptions bn;
  auto* s_bench = app.add_subcommand("bench", "Conversion time per image size; writes bench.csv");
  s_bench->add_option("--checkpoint", bn.checkpoint, "Model checkpoint (default: freshly initialized desk model)");
  s_bench->add_option("--sizes", bn.sizes, "Image sizes, comma separated");
  s_bench->add_option("--repeats", bn.repeats, "Timed runs per size (>= 10)");
  s_bench->add_option("--warmup", bn.warmup, "Untimed runs per size (>= 3)");

  StreamOptions st;
  auto* s_stream = app.add_subcommand("stream", "Simulated live pipeline; writes telemetry.csv and frames/");
  s_stream->add_option("--checkpoint", st.checkpoint, "Model checkpoint");
  s_stream->add_option("--scene-size", st.scene_size, "Raw frame edge in pixels");
  s_stream->add_option("--fps", st.fps, "Camera frame rate");
  s_stream->add_option("--duration", st.duration, "Seconds of acquisition");
  s_stream->add_option("--dose", st.dose, "Dose-rate schedule t:rate,... in s and e/(nm^2 s)");
  s_stream->add_option("--mode", st.mode, "per-frame or integrated");
  s_stream->add_option("--consumer-hz", st.consumer_hz, "Refinement rate limit; 0 keeps up with the camera");
  s_stream->add_option("--queue", st.queue, "Frame queue capacity");
  s_stream->add_option("--ring", st.ring, "Frames combined in integrated mode");
  s_stream->add_option("--reference", st.reference, "PSNR reference frame (default last)");
  s_stream->add_flag("--realtime", st.realtime, "Wall-clock producer and consumer threads");
  s_stream->add_flag("--no-frames", st.no_frames, "Skip writing refined frames");

  ThicknessOptions th;
  auto* s_thick = app.add_subcommand("thickness", "Liquid-cell geometry fits");
  s_thick->add_option("--tilt", th.tilt, "CSV theta_deg,displacement_um");
  s_thick->add_option("--profile", th.profile, "CSV x_um,y_um,thickness_um");
  s_thick->add_option("--edges", th.edges, "CSV w_um,wa_um,s_um,side,g_per_mm,h_edge_um");
  s_thick->add_option("--particle-diameter", th.particle, "Particle diameter in um");
  s_thick->add_option("--wa", th.wa, "Actual window size in um, for the empirical centre thickness");
  s_thick->add_option("--spacer", th.spacer, "Spacer size in um");
  s_thick->add_option("--window", th.window, "Nominal window size in um (default: --wa)");

  SynthOptions sy;
  auto* s_synth = app.add_subcommand("synth", "Write a synthetic paired dataset with manifest");
  s_synth->add_option("--count", sy.count, "Number of pairs");
  s_synth->add_option("--size", sy.size, "Image edge in pixels");
  s_synth->add_option("--degrade", sy.degrade, "default or identity");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  std::vector<const char*> argv{"lctem"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitInput;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    if (!g.config.empty()) apply_config(g.config, app, sub);
    if (g.threads > 0) set_num_threads(g.threads);
    fs::create_directories(g.out);
    if (sub == s_stats) return cmd_dataset_stats(stats, g, out);
    if (sub == s_train) return cmd_train(tr, g, out);
    if (sub == s_eval) return cmd_eval(ev, g, out);
    if (sub == s_refine) return cmd_refine(rf, g, out);
    if (sub == s_bench) return cmd_bench(bn, g, out);
    if (sub == s_stream) return cmd_stream(st, g, out);
    if (sub == s_thick) return cmd_thickness(th, g, out);
    if (sub == s_synth) return cmd_synth(sy, g, out);
    return kExitInput;
  } catch (const NonFiniteError& e) {
    err << "lctem: aborted: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const CLI::ParseError& e) {
    err << "lctem: " << e.what() << "\n";
    return kExitInput;
  } catch (const Error& e) {
    err << "lctem: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "lctem: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace lctem::cli
