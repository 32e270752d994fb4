#include "lctem/stream.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <thread>

#include "lctem/error.hpp"
#include "lctem/random.hpp"
#include "lctem/synth.hpp"
#include "lctem/text.hpp"
#include "lctem/train.hpp"

namespace lctem {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

void SceneSpec::validate() const {
  if (size < 1) throw InputError("scene: size must be positive");
  if (!(pixel_size_nm > 0.0)) throw InputError("scene: pixel_size_nm must be positive");
  if (!(background >= 0.0) || !(contrast >= 0.0)) throw InputError("scene: background and contrast must be >= 0");
  if (!(dark_counts >= 0.0) || !(read_noise >= 0.0) || !(conversion_gain > 0.0))
    throw InputError("scene: detector parameters out of range");
}

DoseSchedule DoseSchedule::constant(double rate) { return DoseSchedule({{0.0, rate}}); }

DoseSchedule::DoseSchedule(std::vector<std::pair<double, double>> knots) : knots_(std::move(knots)) {
  if (knots_.empty()) throw InputError("dose schedule: no knots");
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    if (!(knots_[i].second >= 0.0)) throw InputError("dose schedule: rates must be non-negative");
    if (i && !(knots_[i].first > knots_[i - 1].first)) throw InputError("dose schedule: times must increase");
  }
}

double DoseSchedule::rate(double t) const {
  if (t <= knots_.front().first) return knots_.front().second;
  if (t >= knots_.back().first) return knots_.back().second;
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), t,
                                   [](double v, const std::pair<double, double>& k) { return v < k.first; });
  const auto& [t1, r1] = *it;
  const auto& [t0, r0] = *(it - 1);
  return r0 + (r1 - r0) * (t - t0) / (t1 - t0);
}

std::vector<FrameEvent> simulate_source(const SceneSpec& scene, double fps, double duration_s,
                                        const DoseSchedule& schedule, std::uint64_t seed) {
  scene.validate();
  if (!(fps > 0.0)) throw InputError("simulate_source: fps must be positive");
  if (!(duration_s >= 0.0)) throw InputError("simulate_source: duration must be non-negative");
  const ImageArray transmission =
      scene.flat ? ImageArray(ImageArray::Constant(scene.size, scene.size, scene.background + scene.contrast))
                 : ImageArray(scene.background + scene.contrast * particle_scene(scene.scene_seed, scene.size));
  const int count = static_cast<int>(std::floor(fps * duration_s + 1e-9));
  const double exposure = 1.0 / fps;
  const double area = scene.pixel_size_nm * scene.pixel_size_nm;
  std::vector<FrameEvent> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double t = i / fps;
    const double rate = schedule.rate(t);
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    CountArray counts(scene.size, scene.size);
    const double electrons_per_unit = rate * exposure * area;
    for (Eigen::Index k = 0; k < counts.size(); ++k) {
      double v = scene.dark_counts;
      if (electrons_per_unit > 0.0)
        v += scene.conversion_gain * static_cast<double>(rng.poisson(electrons_per_unit * transmission.data()[k]));
      if (scene.read_noise > 0.0) v += rng.normal(0.0, scene.read_noise);
      counts.data()[k] = static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, 65535.0));
    }
    MicrographMeta meta;
    meta.pixel_size_nm = scene.pixel_size_nm;
    meta.exposure_s = exposure;
    meta.dose_rate = rate;
    meta.conversion_gain = scene.conversion_gain;
    out.push_back(FrameEvent{i, t, Micrograph(std::move(counts), meta), rate});
  }
  return out;
}

ImageArray preprocess(const Micrograph& raw, int target) {
  return area_resize(ImageArray(raw.counts().cast<double>()), target, target);
}

RingBuffer::RingBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw InputError("ring buffer: capacity must be positive");
}

void RingBuffer::push(StoredFrame frame) {
  if (!frames_.empty() && (frame.resized.rows() != frames_.front().resized.rows() ||
                           frame.resized.cols() != frames_.front().resized.cols()))
    throw ShapeError("ring buffer: frame size differs from buffered frames");
  if (frames_.size() == capacity_) frames_.pop_front();
  frames_.push_back(std::move(frame));
}

double RingBuffer::represented_dose() const {
  double d = 0.0;
  for (const auto& f : frames_) d += f.dose;
  return d;
}

ImageArray RingBuffer::summed() const {
  if (frames_.empty()) throw InputError("ring buffer is empty");
  ImageArray acc = frames_.front().resized;
  for (std::size_t i = 1; i < frames_.size(); ++i) acc += frames_[i].resized;
  return acc;
}

NormalizedImage refine_image(UNet<float>& model, const ImageArray& resized) {
  const NormalizedImage input(rescale_intensity(resized));
  return predict_one(model, input);
}

Refined refine_frame(UNet<float>& model, const FrameEvent& frame, int target) {
  if (model.config().input_size != target)
    throw ShapeError("refine: model expects " + std::to_string(model.config().input_size) +
                     " but the pipeline target is " + std::to_string(target));
  const auto t0 = Clock::now();
  const NormalizedImage input(rescale_intensity(preprocess(frame.raw, target)));
  const double pre = ms_since(t0);
  const auto t1 = Clock::now();
  NormalizedImage out = predict_one(model, input);
  const double inf = ms_since(t1);
  return Refined{std::move(out), StageTimes{pre, inf, ms_since(t0)}, frame.dose()};
}

Refined integrate_refine(UNet<float>& model, const RingBuffer& ring) {
  if (ring.empty()) throw InputError("integrate_refine: ring buffer is empty");
  const auto t0 = Clock::now();
  const NormalizedImage input(rescale_intensity(ring.summed()));
  const double pre = ms_since(t0);
  const auto t1 = Clock::now();
  NormalizedImage out = predict_one(model, input);
  const double inf = ms_since(t1);
  return Refined{std::move(out), StageTimes{pre, inf, ms_since(t0)}, ring.represented_dose()};
}

std::string StreamResult::telemetry_csv() const {
  std::string out = "frame,timestamp_s,dose_e_nm2,preprocess_ms,inference_ms,total_ms,psnr_db,dropped_before\n";
  for (const auto& r : rows)
    out += std::to_string(r.frame) + "," + format_real(r.timestamp_s) + "," + format_real(r.dose_e_nm2) + "," +
           fixed3(r.times.preprocess_ms) + "," + fixed3(r.times.inference_ms) + "," + fixed3(r.times.total_ms) + "," +
           r.psnr.to_string() + "," + std::to_string(r.dropped_before) + "\n";
  return out;
}

std::string StreamResult::telemetry_values_csv() const {
  std::string out = "frame,timestamp_s,dose_e_nm2,psnr_db,dropped_before\n";
  for (const auto& r : rows)
    out += std::to_string(r.frame) + "," + format_real(r.timestamp_s) + "," + format_real(r.dose_e_nm2) + "," +
           r.psnr.to_string() + "," + std::to_string(r.dropped_before) + "\n";
  return out;
}

std::string StreamResult::telemetry_timing_csv() const {
  std::string out = "frame,preprocess_ms,inference_ms,total_ms\n";
  for (const auto& r : rows)
    out += std::to_string(r.frame) + "," + fixed3(r.times.preprocess_ms) + "," + fixed3(r.times.inference_ms) + "," +
           fixed3(r.times.total_ms) + "\n";
  return out;
}

StreamResult run_stream(UNet<float>& model, const std::vector<FrameEvent>& source, const StreamConfig& cfg) {
  StreamResult result;
  if (source.empty()) return result;
  if (cfg.ring_capacity == 0) throw InputError("stream: ring capacity must be positive");
  if (!(cfg.consumer_period_s >= 0.0)) throw InputError("stream: consumer period must be non-negative");
  for (std::size_t i = 0; i < source.size(); ++i)
    if (source[i].index != static_cast<int>(i) || (i && !(source[i].timestamp_s > source[i - 1].timestamp_s)))
      throw InputError("stream: frame indices must be contiguous and timestamps increasing");
  const int n = static_cast<int>(source.size());
  const int ref = cfg.reference_frame.value_or(n - 1);
  if (ref < 0 || ref >= n) throw InputError("stream: reference frame " + std::to_string(ref) + " out of range");
  const int target = model.config().input_size;

  std::vector<std::optional<ImageArray>> cache(source.size());
  auto resized = [&](int i) -> const ImageArray& {
    auto& c = cache[static_cast<std::size_t>(i)];
    if (!c) c = preprocess(source[static_cast<std::size_t>(i)].raw, target);
    return *c;
  };
  auto refine_at = [&](int i) -> Refined {
    if (cfg.mode == StreamMode::PerFrame) return refine_frame(model, source[static_cast<std::size_t>(i)], target);
    const auto t0 = Clock::now();
    RingBuffer ring(cfg.ring_capacity);
    const int first = std::max(0, i - static_cast<int>(cfg.ring_capacity) + 1);
    for (int j = first; j <= i; ++j) ring.push({j, source[static_cast<std::size_t>(j)].dose(), resized(j)});
    const double gather = ms_since(t0);
    Refined r = integrate_refine(model, ring);
    r.times.preprocess_ms += gather;
    r.times.total_ms += gather;
    return r;
  };

  const NormalizedImage reference = refine_at(ref).image;
  int drops = 0, drops_reported = 0;
  auto consume = [&](int i) {
    Refined r = refine_at(i);
    TelemetryRow row;
    row.frame = i;
    row.timestamp_s = source[static_cast<std::size_t>(i)].timestamp_s;
    row.dose_e_nm2 = r.dose;
    row.times = r.times;
    row.psnr = psnr(r.image, reference);
    row.dropped_before = drops - drops_reported;
    drops_reported = drops;
    result.rows.push_back(row);
    result.frames.emplace_back(i, std::move(r.image));
  };

  BoundedDropQueue<int> queue(cfg.queue_capacity);
  if (!cfg.realtime) {
    double free_at = 0.0;
    auto serve = [&](int i) {
      free_at = std::max(free_at, source[static_cast<std::size_t>(i)].timestamp_s) + cfg.consumer_period_s;
      consume(i);
    };
    for (int i = 0; i < n; ++i) {
      const double t = source[static_cast<std::size_t>(i)].timestamp_s;
      while (free_at <= t) {
        const auto j = queue.try_pop();
        if (!j) break;
        serve(*j);
      }
      drops += queue.push(i);
    }
    while (const auto j = queue.try_pop()) serve(*j);
  } else {
    std::atomic<int> dropped{0};
    const auto start = Clock::now();
    std::thread producer([&] {
      for (int i = 0; i < n; ++i) {
        std::this_thread::sleep_until(start + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(
                                                  source[static_cast<std::size_t>(i)].timestamp_s)));
        dropped += queue.push(i);
      }
      queue.close();
    });
    while (const auto j = queue.pop()) {
      const auto t0 = Clock::now();
      drops = dropped.load();
      consume(*j);
      std::this_thread::sleep_until(t0 + std::chrono::duration_cast<Clock::duration>(
                                             std::chrono::duration<double>(cfg.consumer_period_s)));
    }
    producer.join();
    drops = dropped.load();
  }
  result.dropped = drops;
  return result;
}

LatencyStats latency_stats(std::vector<double> samples) {
  if (samples.empty()) throw InputError("latency_stats: no samples");
  std::sort(samples.begin(), samples.end());
  const std::size_t m = samples.size() / 2;
  LatencyStats s;
  s.min_ms = samples.front();
  s.median_ms = samples.size() % 2 ? samples[m] : 0.5 * (samples[m - 1] + samples[m]);
  s.mean_ms = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  return s;
}

UNet<float> with_input_size(const UNet<float>& model, int size) {
  ModelConfig c = model.config();
  c.input_size = size;
  c.validate();
  UNet<float> out(c, 0);
  for (const auto& [name, p] : model.store().params()) out.store().param(name).value = p.value;
  for (const auto& [name, b] : model.store().buffers()) out.store().buffers().at(name).values() = b.values();
  return out;
}

std::vector<LatencyReport> bench_conversion(const UNet<float>& model, const std::vector<int>& sizes, int repeats,
                                            int warmup) {
  if (repeats < 10) throw InputError("bench: need at least 10 timed repeats");
  if (warmup < 3) throw InputError("bench: need at least 3 warm-up iterations");
  std::vector<LatencyReport> out;
  const std::string label = processor_label();
  for (int size : sizes) {
    UNet<float> m = with_input_size(model, size);
    SceneSpec scene;
    scene.size = size;
    const auto frames = simulate_source(scene, 100.0, 0.01, DoseSchedule::constant(100.0), 0);
    for (int i = 0; i < warmup; ++i) refine_frame(m, frames[0], size);
    std::vector<double> pre, inf, tot;
    for (int i = 0; i < repeats; ++i) {
      const auto r = refine_frame(m, frames[0], size);
      pre.push_back(r.times.preprocess_ms);
      inf.push_back(r.times.inference_ms);
      tot.push_back(r.times.total_ms);
    }
    out.push_back({size, label, latency_stats(pre), latency_stats(inf), latency_stats(tot)});
  }
  return out;
}

std::string bench_csv(const std::vector<LatencyReport>& reports) {
  std::string out = "size,processor,min_ms,median_ms,mean_ms\n";
  for (const auto& r : reports) {
    std::string proc = r.processor;
    std::replace(proc.begin(), proc.end(), ',', ' ');
    out += std::to_string(r.size) + "," + proc + "," + fixed3(r.total.min_ms) + "," + fixed3(r.total.median_ms) + "," +
           fixed3(r.total.mean_ms) + "\n";
  }
  return out;
}

std::string processor_label() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line))
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        const auto v = trim(std::string_view(line).substr(colon + 1));
        if (!v.empty()) return std::string(v);
      }
    }
  return "host";
}

double signal_to_noise(const ImageArray& img) {
  const double mean = img.mean();
  const double sd = std::sqrt((img - mean).square().mean());
  return sd > 0.0 ? mean / sd : std::numeric_limits<double>::infinity();
}

}  // namespace lctem
