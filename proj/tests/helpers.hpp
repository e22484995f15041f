#pragma once

// Shared fixtures and independent oracles for the test suites. The oracles
// here deliberately avoid the library's implementation paths: spectral
// measurements use Goertzel (not the library FFT), decay estimation
// integrates the squared response directly, and the cluster metrics are
// recomputed from their definitions.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mdaudio/audio.hpp"
#include "mdaudio/frontend.hpp"

namespace testutil {

inline mdaudio::AudioBuffer make_tone(double freq_hz, double seconds, int rate_hz,
                                      double amplitude = 0.9) {
  mdaudio::AudioBuffer out;
  out.sample_rate_hz = rate_hz;
  const std::size_t n = static_cast<std::size_t>(seconds * rate_hz);
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.samples[i] = static_cast<float>(
        amplitude * std::sin(2.0 * M_PI * freq_hz * i / rate_hz));
  }
  return out;
}

inline mdaudio::AudioBuffer make_white_noise(double seconds, int rate_hz,
                                             std::uint32_t seed,
                                             double amplitude = 0.5) {
  mdaudio::AudioBuffer out;
  out.sample_rate_hz = rate_hz;
  const std::size_t n = static_cast<std::size_t>(seconds * rate_hz);
  out.samples.resize(n);
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (auto& s : out.samples) s = static_cast<float>(amplitude) * dist(gen);
  return out;
}

// Speech-like deterministic test signal: a few modulated tones plus a little
// wideband noise, so mixing and feature tests see nontrivial spectra.
inline mdaudio::AudioBuffer make_pseudo_speech(double seconds, int rate_hz,
                                               std::uint32_t seed) {
  mdaudio::AudioBuffer out;
  out.sample_rate_hz = rate_hz;
  const std::size_t n = static_cast<std::size_t>(seconds * rate_hz);
  out.samples.resize(n);
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate_hz;
    const double env = 0.55 + 0.45 * std::sin(2.0 * M_PI * 3.1 * t);
    double v = 0.35 * std::sin(2.0 * M_PI * 220.0 * t) +
               0.25 * std::sin(2.0 * M_PI * 680.0 * t + 1.3) +
               0.15 * std::sin(2.0 * M_PI * 1900.0 * t + 0.4) + 0.08 * dist(gen);
    out.samples[i] = static_cast<float>(0.8 * env * v);
  }
  return out;
}

// Goertzel amplitude of one frequency component (independent of any FFT).
inline double goertzel_amplitude(const mdaudio::AudioBuffer& audio, double freq_hz) {
  const std::size_t n = audio.samples.size();
  const double w = 2.0 * M_PI * freq_hz / audio.sample_rate_hz;
  const double coeff = 2.0 * std::cos(w);
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s0 = audio.samples[i] + coeff * s1 - s2;
    s2 = s1;
    s1 = s0;
  }
  const double real = s1 - s2 * std::cos(w);
  const double imag = s2 * std::sin(w);
  return 2.0 * std::sqrt(real * real + imag * imag) / n;
}

inline double energy(const mdaudio::AudioBuffer& audio) {
  double acc = 0.0;
  for (float v : audio.samples) acc += static_cast<double>(v) * v;
  return acc;
}

// Schroeder backward integration: L(t) = 10 log10(sum_{tau>=t} h^2), with the
// decay rate taken from a least-squares fit over the -5..-35 dB span and
// extrapolated to -60 dB.
inline double schroeder_t60(const std::vector<double>& taps, int rate_hz) {
  std::vector<double> curve(taps.size());
  double acc = 0.0;
  for (std::size_t i = taps.size(); i-- > 0;) {
    acc += taps[i] * taps[i];
    curve[i] = acc;
  }
  if (curve.empty() || curve[0] <= 0.0) return NAN;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t cnt = 0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double level = 10.0 * std::log10(curve[i] / curve[0] + 1e-300);
    if (level <= -5.0 && level >= -35.0) {
      const double t = static_cast<double>(i) / rate_hz;
      sx += t;
      sy += level;
      sxx += t * t;
      sxy += t * level;
      ++cnt;
    }
  }
  if (cnt < 3) return NAN;
  const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  if (slope >= 0.0) return NAN;
  return -60.0 / slope;
}

// O(n^2) silhouette straight from the definition.
struct BruteSilhouette {
  std::vector<double> s;
  double mean = 0.0;
};

inline BruteSilhouette brute_silhouette(const std::vector<std::vector<float>>& pts,
                                        const std::vector<int>& labels) {
  auto dist = [](const std::vector<float>& a, const std::vector<float>& b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = static_cast<double>(a[k]) - b[k];
      acc += d * d;
    }
    return std::sqrt(acc);
  };
  BruteSilhouette out;
  out.s.resize(pts.size(), 0.0);
  std::vector<int> uniq;
  for (int l : labels) {
    bool found = false;
    for (int u : uniq) found = found || u == l;
    if (!found) uniq.push_back(l);
  }
  std::sort(uniq.begin(), uniq.end());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::size_t own_count = 0;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (labels[j] == labels[i]) ++own_count;
    }
    if (own_count == 1) {
      out.s[i] = 0.0;
      continue;
    }
    double a = 0.0;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j != i && labels[j] == labels[i]) a += dist(pts[i], pts[j]);
    }
    a /= static_cast<double>(own_count - 1);
    double b = INFINITY;
    for (int l : uniq) {
      if (l == labels[i]) continue;
      double acc = 0.0;
      std::size_t cnt = 0;
      for (std::size_t j = 0; j < pts.size(); ++j) {
        if (labels[j] == l) {
          acc += dist(pts[i], pts[j]);
          ++cnt;
        }
      }
      if (cnt > 0 && acc / cnt < b) b = acc / cnt;
    }
    const double denom = std::max(a, b);
    out.s[i] = denom > 0.0 ? (b - a) / denom : 0.0;
    out.mean += out.s[i];
  }
  out.mean /= static_cast<double>(pts.size());
  return out;
}

// Davies-Bouldin-style pairwise similarity from the definition.
inline double brute_cluster_similarity(const std::vector<std::vector<float>>& ci,
                                       const std::vector<std::vector<float>>& cj) {
  const std::size_t d = ci.front().size();
  std::vector<double> mi(d, 0.0), mj(d, 0.0);
  for (const auto& p : ci) {
    for (std::size_t k = 0; k < d; ++k) mi[k] += p[k];
  }
  for (const auto& p : cj) {
    for (std::size_t k = 0; k < d; ++k) mj[k] += p[k];
  }
  for (std::size_t k = 0; k < d; ++k) {
    mi[k] /= static_cast<double>(ci.size());
    mj[k] /= static_cast<double>(cj.size());
  }
  auto dist_to = [d](const std::vector<float>& p, const std::vector<double>& c) {
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double delta = p[k] - c[k];
      acc += delta * delta;
    }
    return std::sqrt(acc);
  };
  double si = 0.0, sj = 0.0;
  for (const auto& p : ci) si += dist_to(p, mi);
  for (const auto& p : cj) sj += dist_to(p, mj);
  si /= static_cast<double>(ci.size());
  sj /= static_cast<double>(cj.size());
  double m = 0.0;
  for (std::size_t k = 0; k < d; ++k) m += (mi[k] - mj[k]) * (mi[k] - mj[k]);
  m = std::sqrt(m);
  return (si + sj) / m;
}

// Two-pass per-dimension mean/std oracle over a stream of matrices.
struct TwoPassStats {
  std::vector<double> mean, stddev;
};

inline TwoPassStats two_pass_stats(const std::vector<mdaudio::FeatureMatrix>& mats) {
  const std::size_t d = mats.front().cols;
  TwoPassStats out;
  out.mean.assign(d, 0.0);
  out.stddev.assign(d, 0.0);
  std::size_t n = 0;
  for (const auto& m : mats) {
    for (std::size_t r = 0; r < m.rows; ++r) {
      ++n;
      for (std::size_t c = 0; c < d; ++c) out.mean[c] += m.at(r, c);
    }
  }
  for (std::size_t c = 0; c < d; ++c) out.mean[c] /= static_cast<double>(n);
  for (const auto& m : mats) {
    for (std::size_t r = 0; r < m.rows; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        const double delta = m.at(r, c) - out.mean[c];
        out.stddev[c] += delta * delta;
      }
    }
  }
  for (std::size_t c = 0; c < d; ++c) {
    out.stddev[c] = std::sqrt(out.stddev[c] / static_cast<double>(n));
  }
  return out;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<std::uint64_t> counter{0};
    const auto base = std::filesystem::temp_directory_path();
    path_ = base / ("mdaudio_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
