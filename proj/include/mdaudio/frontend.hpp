#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdaudio/audio.hpp"
#include "mdaudio/fft.hpp"

namespace mdaudio {

// 32 ms window / 10 ms hop framing, 128 mel bands on 125..7500 Hz, 4-frame
// stacking and 3x subsampling: a 100 Hz logmel stream feeding a 33 Hz
// 512-dimensional input.
struct FrontendConfig {
  int window_ms = 32;
  int hop_ms = 10;
  int num_mel = 128;
  double fmin_hz = 125.0;
  double fmax_hz = 7500.0;
  int stack = 4;
  int subsample = 3;
  double log_floor = 1e-7;

  int window_samples(int rate_hz) const { return window_ms * rate_hz / 1000; }
  int hop_samples(int rate_hz) const { return hop_ms * rate_hz / 1000; }

  void validate(int rate_hz) const {
    if (!(fmin_hz < fmax_hz && fmax_hz <= rate_hz / 2.0)) {
      throw std::invalid_argument("frontend: need fmin < fmax <= rate/2");
    }
    if (stack < 1 || subsample < 1 || num_mel < 1 || log_floor <= 0.0 ||
        window_ms < 1 || hop_ms < 1) {
      throw std::invalid_argument("frontend: invalid configuration");
    }
  }
};

// Time-major feature matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;  // row-major
  double frame_rate_hz = 0.0;

  float& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

namespace frontend_detail {

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

struct MelFilter {
  std::size_t start_bin = 0;
  std::vector<double> weights;
};

// Unit-peak triangular filters with centers equally spaced on the mel scale.
inline std::vector<MelFilter> build_filterbank(const FrontendConfig& cfg, int rate_hz,
                                               std::size_t fft_size) {
  const std::size_t n_bins = fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(cfg.num_mel + 2);
  for (int k = 0; k < cfg.num_mel + 2; ++k) {
    edges[k] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * k / (cfg.num_mel + 1));
  }
  std::vector<MelFilter> bank(cfg.num_mel);
  for (int k = 0; k < cfg.num_mel; ++k) {
    const double f_left = edges[k], f_center = edges[k + 1], f_right = edges[k + 2];
    MelFilter filt;
    bool started = false;
    for (std::size_t b = 0; b < n_bins; ++b) {
      const double f = static_cast<double>(b) * rate_hz / fft_size;
      double w = 0.0;
      if (f > f_left && f < f_right) {
        w = f <= f_center ? (f - f_left) / (f_center - f_left)
                          : (f_right - f) / (f_right - f_center);
      }
      if (w > 0.0) {
        if (!started) {
          filt.start_bin = b;
          started = true;
        }
        filt.weights.push_back(w);
      } else if (started) {
        break;
      }
    }
    if (filt.weights.empty()) {
      // a filter narrower than the bin spacing can fall between bins; give
      // it the bin nearest its center so no dimension degenerates
      filt.start_bin = static_cast<std::size_t>(
          std::llround(f_center * fft_size / rate_hz));
      filt.weights.push_back(1.0);
    }
    bank[k] = std::move(filt);
  }
  return bank;
}

}  // namespace frontend_detail

// Center frequencies (Hz) of the mel filters, exposed so consumers can map
// bins back to frequencies.
inline std::vector<double> mel_center_frequencies(const FrontendConfig& cfg) {
  using namespace frontend_detail;
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> centers(cfg.num_mel);
  for (int k = 0; k < cfg.num_mel; ++k) {
    centers[k] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * (k + 1) / (cfg.num_mel + 1));
  }
  return centers;
}

inline std::size_t logmel_frame_count(std::size_t n_samples, int rate_hz,
                                      const FrontendConfig& cfg) {
  const std::size_t w = static_cast<std::size_t>(cfg.window_samples(rate_hz));
  const std::size_t h = static_cast<std::size_t>(cfg.hop_samples(rate_hz));
  if (n_samples < w) return 1;  // short input is padded to one window
  return 1 + (n_samples - w) / h;
}

// Hann-windowed 512-point STFT -> mel filterbank -> floored log.
inline FeatureMatrix logmel(const AudioBuffer& audio, const FrontendConfig& cfg) {
  if (audio.sample_rate_hz != 16000) {
    throw std::invalid_argument("logmel: input must be 16 kHz");
  }
  if (audio.samples.empty()) throw std::invalid_argument("logmel: empty audio");
  cfg.validate(audio.sample_rate_hz);

  const int rate = audio.sample_rate_hz;
  const std::size_t window = static_cast<std::size_t>(cfg.window_samples(rate));
  const std::size_t hop = static_cast<std::size_t>(cfg.hop_samples(rate));
  const std::size_t fft_size = next_pow2(window);

  static thread_local std::vector<frontend_detail::MelFilter> bank;
  static thread_local std::string bank_key;
  const std::string key = std::to_string(rate) + ":" + std::to_string(cfg.num_mel) +
                          ":" + std::to_string(cfg.fmin_hz) + ":" +
                          std::to_string(cfg.fmax_hz) + ":" + std::to_string(fft_size);
  if (bank_key != key) {
    bank = frontend_detail::build_filterbank(cfg, rate, fft_size);
    bank_key = key;
  }

  std::vector<double> hann(window);
  for (std::size_t n = 0; n < window; ++n) {
    hann[n] = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * n / window);
  }

  const std::size_t n_frames = logmel_frame_count(audio.samples.size(), rate, cfg);
  FeatureMatrix feats;
  feats.rows = n_frames;
  feats.cols = static_cast<std::size_t>(cfg.num_mel);
  feats.values.resize(feats.rows * feats.cols);
  feats.frame_rate_hz = static_cast<double>(rate) / hop;

  std::vector<double> frame(window);
  const double floor_log = std::log(cfg.log_floor);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const std::size_t start = t * hop;
    for (std::size_t n = 0; n < window; ++n) {
      const std::size_t idx = start + n;
      const double s = idx < audio.samples.size() ? audio.samples[idx] : 0.0;
      frame[n] = s * hann[n];
    }
    const std::vector<double> spec = power_spectrum(frame, fft_size);
    for (std::size_t k = 0; k < bank.size(); ++k) {
      double acc = 0.0;
      const auto& filt = bank[k];
      for (std::size_t i = 0; i < filt.weights.size(); ++i) {
        acc += filt.weights[i] * spec[filt.start_bin + i];
      }
      feats.at(t, k) = static_cast<float>(acc > cfg.log_floor ? std::log(acc) : floor_log);
    }
  }
  return feats;
}

// ---------------------------------------------------------------------------
// Global normalization statistics
// ---------------------------------------------------------------------------

// Streaming per-dimension mean/variance (Welford), mergeable across workers.
class NormStats {
 public:
  static constexpr double kStdFloor = 1e-6;

  NormStats() = default;
  explicit NormStats(std::size_t dims) : mean_(dims, 0.0), m2_(dims, 0.0) {}

  std::size_t dims() const { return mean_.size(); }
  std::uint64_t count() const { return count_; }

  void add(const FeatureMatrix& feats) {
    if (mean_.empty()) {
      mean_.assign(feats.cols, 0.0);
      m2_.assign(feats.cols, 0.0);
    }
    if (feats.cols != mean_.size()) {
      throw std::invalid_argument("NormStats: dimension mismatch");
    }
    for (std::size_t r = 0; r < feats.rows; ++r) {
      ++count_;
      for (std::size_t c = 0; c < mean_.size(); ++c) {
        const double x = feats.at(r, c);
        const double delta = x - mean_[c];
        mean_[c] += delta / static_cast<double>(count_);
        m2_[c] += delta * (x - mean_[c]);
      }
    }
  }

  // Exact pooled merge, so per-worker accumulators combine associatively.
  void merge(const NormStats& other) {
    if (other.count_ == 0) return;
    if (count_ == 0) {
      *this = other;
      return;
    }
    if (other.mean_.size() != mean_.size()) {
      throw std::invalid_argument("NormStats: dimension mismatch in merge");
    }
    const double na = static_cast<double>(count_);
    const double nb = static_cast<double>(other.count_);
    for (std::size_t c = 0; c < mean_.size(); ++c) {
      const double delta = other.mean_[c] - mean_[c];
      const double mean = mean_[c] + delta * nb / (na + nb);
      m2_[c] += other.m2_[c] + delta * delta * na * nb / (na + nb);
      mean_[c] = mean;
    }
    count_ += other.count_;
  }

  double mean(std::size_t c) const { return mean_[c]; }

  // Population standard deviation, floored away from zero.
  double stddev(std::size_t c) const {
    if (count_ == 0) throw std::logic_error("NormStats: no frames observed");
    const double var = m2_[c] / static_cast<double>(count_);
    const double sd = var > 0.0 ? std::sqrt(var) : 0.0;
    return sd < kStdFloor ? kStdFloor : sd;
  }

  void save_json(const std::string& path) const {
    if (count_ == 0) throw std::logic_error("NormStats: no frames observed");
    nlohmann::json j;
    j["count"] = count_;
    j["mean"] = mean_;
    std::vector<double> sd(mean_.size());
    for (std::size_t c = 0; c < sd.size(); ++c) sd[c] = stddev(c);
    j["std"] = sd;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("NormStats: cannot write " + path);
    out << j.dump(2) << '\n';
  }

  static NormStats load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("NormStats: cannot open " + path);
    nlohmann::json j;
    in >> j;
    NormStats stats;
    stats.count_ = j.at("count").get<std::uint64_t>();
    stats.mean_ = j.at("mean").get<std::vector<double>>();
    const auto sd = j.at("std").get<std::vector<double>>();
    if (sd.size() != stats.mean_.size() || stats.count_ == 0) {
      throw std::runtime_error("NormStats: malformed stats file " + path);
    }
    // store variance*count so stddev() reproduces the loaded values
    stats.m2_.resize(sd.size());
    for (std::size_t c = 0; c < sd.size(); ++c) {
      stats.m2_[c] = sd[c] * sd[c] * static_cast<double>(stats.count_);
    }
    return stats;
  }

 private:
  std::vector<double> mean_;
  std::vector<double> m2_;
  std::uint64_t count_ = 0;
};

// (x - mean) / std per dimension.
inline FeatureMatrix normalize(const FeatureMatrix& feats, const NormStats& stats) {
  if (feats.cols != stats.dims()) {
    throw std::invalid_argument("normalize: dimension mismatch");
  }
  FeatureMatrix out = feats;
  for (std::size_t c = 0; c < feats.cols; ++c) {
    const double mean = stats.mean(c);
    const double inv = 1.0 / stats.stddev(c);
    for (std::size_t r = 0; r < feats.rows; ++r) {
      out.at(r, c) = static_cast<float>((feats.at(r, c) - mean) * inv);
    }
  }
  return out;
}

// Stacks `stack` contiguous frames (left context, edges replicated) and keeps
// every `subsample`-th stacked frame: rows = ceil(F / subsample),
// cols = stack * input cols.
inline FeatureMatrix stack_and_subsample(const FeatureMatrix& feats,
                                         const FrontendConfig& cfg) {
  if (feats.rows == 0) throw std::invalid_argument("stack_and_subsample: empty input");
  const std::size_t stack = static_cast<std::size_t>(cfg.stack);
  const std::size_t sub = static_cast<std::size_t>(cfg.subsample);

  FeatureMatrix out;
  out.rows = (feats.rows + sub - 1) / sub;
  out.cols = feats.cols * stack;
  out.values.resize(out.rows * out.cols);
  out.frame_rate_hz = feats.frame_rate_hz / static_cast<double>(sub);

  for (std::size_t o = 0; o < out.rows; ++o) {
    const std::int64_t t = static_cast<std::int64_t>(o * sub);
    for (std::size_t s = 0; s < stack; ++s) {
      // concat(frames t-stack+1 .. t); negative indices replicate frame 0
      std::int64_t src = t - static_cast<std::int64_t>(stack - 1 - s);
      if (src < 0) src = 0;
      for (std::size_t c = 0; c < feats.cols; ++c) {
        out.at(o, s * feats.cols + c) = feats.at(static_cast<std::size_t>(src), c);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature file format: "LMFB", u32 version, u32 rows, u32 cols, then
// row-major little-endian f32.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kLmfbVersion = 1;

inline void write_lmfb(const std::string& path, const FeatureMatrix& feats) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("lmfb: cannot write " + path);
  auto put_u32 = [&out](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  out.write("LMFB", 4);
  put_u32(kLmfbVersion);
  put_u32(static_cast<std::uint32_t>(feats.rows));
  put_u32(static_cast<std::uint32_t>(feats.cols));
  for (float v : feats.values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(bits);
  }
  if (!out) throw std::runtime_error("lmfb: write failed: " + path);
}

inline FeatureMatrix read_lmfb(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("lmfb: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "LMFB", 4) != 0) {
    throw std::runtime_error("lmfb: bad magic in " + path);
  }
  auto get_u32 = [&in, &path]() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("lmfb: truncated file " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  };
  const std::uint32_t version = get_u32();
  if (version != kLmfbVersion) {
    throw std::runtime_error("lmfb: unsupported version in " + path);
  }
  FeatureMatrix feats;
  feats.rows = get_u32();
  feats.cols = get_u32();
  feats.values.resize(feats.rows * feats.cols);
  for (float& v : feats.values) {
    const std::uint32_t bits = get_u32();
    std::memcpy(&v, &bits, 4);
  }
  return feats;
}

}  // namespace mdaudio
