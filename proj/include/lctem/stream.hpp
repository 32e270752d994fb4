#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "lctem/metrics.hpp"
#include "lctem/micrograph.hpp"
#include "lctem/unet.hpp"

namespace lctem {

/// Static particle scene seen by the simulated camera.
struct SceneSpec {
  int size = 2048;  ///< raw frame edge, pixels
  std::uint64_t scene_seed = 0;
  double pixel_size_nm = 0.5;
  double background = 0.3;  ///< transmitted fraction where there is no particle
  double contrast = 0.5;    ///< extra transmission at particle level 1
  double dark_counts = 100.0;
  double read_noise = 2.0;      ///< counts, Gaussian
  double conversion_gain = 1.0; ///< counts per electron
  bool flat = false;            ///< constant-signal frames (no particles)

  void validate() const;
};

/// Piecewise-linear dose rate in e/(nm^2 s) over time; constant past the ends.
class DoseSchedule {
 public:
  static DoseSchedule constant(double rate);
  /// Knots (t_s, rate) with strictly increasing t.
  explicit DoseSchedule(std::vector<std::pair<double, double>> knots);

  double rate(double t) const;
  const std::vector<std::pair<double, double>>& knots() const { return knots_; }

 private:
  std::vector<std::pair<double, double>> knots_;
};

struct FrameEvent {
  int index = 0;
  double timestamp_s = 0.0;
  Micrograph raw;
  double dose_rate = 0.0;

  /// Electrons per nm^2 delivered during this frame.
  double dose() const { return dose_rate * raw.meta().exposure_s; }
};

/// floor(fps * duration) frames at t = i / fps with exposure 1 / fps. Shot
/// noise for frame i is drawn from a stream derived from (seed, i).
std::vector<FrameEvent> simulate_source(const SceneSpec& scene, double fps, double duration_s,
                                        const DoseSchedule& schedule, std::uint64_t seed);

/// Area-resize of the raw counts to target x target (no rescale yet).
ImageArray preprocess(const Micrograph& raw, int target);

struct StoredFrame {
  int index = 0;
  double dose = 0.0;
  ImageArray resized;
};

/// Most recent `capacity` preprocessed frames, oldest first.
class RingBuffer {
 public:
  explicit RingBuffer(std::size_t capacity = 10);

  void push(StoredFrame frame);
  std::size_t size() const { return frames_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return frames_.empty(); }
  const std::deque<StoredFrame>& frames() const { return frames_; }
  double represented_dose() const;
  /// Pixelwise sum of the stored frames.
  ImageArray summed() const;

 private:
  std::size_t capacity_;
  std::deque<StoredFrame> frames_;
};

struct StageTimes {
  double preprocess_ms = 0.0;
  double inference_ms = 0.0;
  double total_ms = 0.0;
};

struct Refined {
  NormalizedImage image;
  StageTimes times;
  double dose = 0.0;  ///< represented dose, e/nm^2
};

/// Rescale to [0, 1] then one forward pass in evaluation mode.
NormalizedImage refine_image(UNet<float>& model, const ImageArray& resized);

/// area-resize -> rescale -> forward. The target size is the model's input size.
Refined refine_frame(UNet<float>& model, const FrameEvent& frame, int target);

/// Sum of the buffered frames, rescaled, then refined.
Refined integrate_refine(UNet<float>& model, const RingBuffer& ring);

/// Fixed-capacity FIFO that evicts the oldest entry when full. Thread-safe.
template <typename T>
class BoundedDropQueue {
 public:
  explicit BoundedDropQueue(std::size_t capacity) : capacity_(capacity ? capacity : 1) {}

  /// Returns the number of entries evicted to make room (0 or 1).
  int push(T value) {
    std::lock_guard lock(mu_);
    int dropped = 0;
    if (items_.size() == capacity_) {
      items_.pop_front();
      dropped = 1;
    }
    items_.push_back(std::move(value));
    cv_.notify_one();
    return dropped;
  }

  std::optional<T> try_pop() {
    std::lock_guard lock(mu_);
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }

  /// Blocks until an entry arrives or the queue is closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    cv_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
  bool closed_ = false;
};

enum class StreamMode { PerFrame, Integrated };

struct StreamConfig {
  StreamMode mode = StreamMode::PerFrame;
  std::size_t queue_capacity = 2;
  std::size_t ring_capacity = 10;
  /// Consumer service time per frame in seconds; 0 means it keeps up.
  double consumer_period_s = 0.0;
  /// Frame whose refined image is the PSNR reference; default is the last frame.
  std::optional<int> reference_frame;
  /// Real threads and sleeps instead of the simulated clock. Drops then depend
  /// on host speed, so outputs are no longer reproducible.
  bool realtime = false;
};

struct TelemetryRow {
  int frame = 0;
  double timestamp_s = 0.0;
  double dose_e_nm2 = 0.0;
  StageTimes times;
  Psnr psnr = Psnr::unbounded();
  int dropped_before = 0;
};

struct StreamResult {
  std::vector<TelemetryRow> rows;
  std::vector<std::pair<int, NormalizedImage>> frames;
  int dropped = 0;

  /// `frame,timestamp_s,dose_e_nm2,preprocess_ms,inference_ms,total_ms,psnr_db,dropped_before`
  std::string telemetry_csv() const;
  /// telemetry_csv() without the *_ms columns; byte-deterministic in virtual-clock runs.
  std::string telemetry_values_csv() const;
  /// `frame,preprocess_ms,inference_ms,total_ms`
  std::string telemetry_timing_csv() const;
};

/// Producer at the source timestamps, one consumer behind a drop-oldest queue.
/// Every source frame enters the integration ring; only consumed frames are
/// refined. Without `realtime` the clock is simulated: the consumer is busy for
/// consumer_period_s per frame, so drops are a function of the inputs only.
StreamResult run_stream(UNet<float>& model, const std::vector<FrameEvent>& source, const StreamConfig& cfg);

struct LatencyStats {
  double min_ms = 0.0;
  double median_ms = 0.0;
  double mean_ms = 0.0;
};

LatencyStats latency_stats(std::vector<double> samples_ms);

struct LatencyReport {
  int size = 0;
  std::string processor;
  LatencyStats preprocess;
  LatencyStats inference;
  LatencyStats total;
};

/// Copy of `model` whose configured input size is `size`.
UNet<float> with_input_size(const UNet<float>& model, int size);

/// Times refine_frame on a synthetic size x size frame, `warmup` untimed runs
/// followed by `repeats` timed ones per size.
std::vector<LatencyReport> bench_conversion(const UNet<float>& model, const std::vector<int>& sizes, int repeats = 10,
                                            int warmup = 3);

/// `size,processor,min_ms,median_ms,mean_ms` (end-to-end conversion time)
std::string bench_csv(const std::vector<LatencyReport>& reports);

/// CPU model name from /proc/cpuinfo, or "host".
std::string processor_label();

/// mean / standard deviation over all pixels.
double signal_to_noise(const ImageArray& img);

}  // namespace lctem
