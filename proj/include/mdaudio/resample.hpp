#pragma once

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mdaudio/audio.hpp"

namespace mdaudio {
namespace detail {

inline constexpr double kPi = 3.14159265358979323846;

// Zero-order modified Bessel function of the first kind, series form.
inline double bessel_i0(double x) {
  double term = 1.0, sum = 1.0, last;
  const double half = x / 2.0;
  int k = 1;
  do {
    const double y = half / k;
    ++k;
    last = sum;
    term *= y * y;
    sum += term;
  } while (sum != last);
  return sum;
}

inline double kaiser(double beta, double t) {
  if (t < -1.0 || t > 1.0) return 0.0;
  return bessel_i0(beta * std::sqrt(1.0 - t * t)) / bessel_i0(beta);
}

inline double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

// Kaiser-windowed sinc lowpass at the upsampled rate L*fs_in.
//
//   h[m] = L * 2 fc * sinc(2 fc (m - K)) * w((m - K)/K)
//
// fc is the normalized cutoff (cycles/sample at the high rate), centered in
// the transition band. The passband edge sits at 0.45*fs_low and the stopband
// edge at the target Nyquist, with >= 60 dB rejection.
inline std::vector<double> design_resample_filter(int up, int fs_in, int fs_out) {
  const double rejection_db = 70.0;
  const double fs_hi = static_cast<double>(up) * fs_in;
  const double fs_low = std::min(fs_in, fs_out);
  const double f_pass = 0.45 * fs_low;
  const double f_stop = 0.50 * fs_low;
  const double fc = 0.5 * (f_pass + f_stop) / fs_hi;
  const double df = (f_stop - f_pass) / fs_hi;

  int taps = static_cast<int>(
      std::ceil((rejection_db - 7.95) / (2.285 * 2.0 * kPi * df)));
  if (taps % 2 == 0) ++taps;
  const int half = taps / 2;
  const double beta = 0.1102 * (rejection_db - 8.7);

  std::vector<double> h(taps);
  for (int m = 0; m < taps; ++m) {
    const double x = static_cast<double>(m - half);
    h[m] = up * 2.0 * fc * sinc(2.0 * fc * x) *
           kaiser(beta, half > 0 ? x / half : 0.0);
  }
  return h;
}

}  // namespace detail

// Rational sample-rate conversion by windowed-sinc polyphase filtering.
// Same-rate input is returned bit-identically. Output length is
// round(n * target/source), so duration is preserved to well under 1 ms.
inline AudioBuffer resample(const AudioBuffer& audio, int target_rate_hz) {
  if (!is_supported_rate(target_rate_hz)) {
    throw std::invalid_argument("resample: unsupported target rate " +
                                std::to_string(target_rate_hz));
  }
  if (!is_supported_rate(audio.sample_rate_hz)) {
    throw std::invalid_argument("resample: unsupported source rate " +
                                std::to_string(audio.sample_rate_hz));
  }
  if (audio.sample_rate_hz == target_rate_hz) return audio;

  const int g = std::gcd(audio.sample_rate_hz, target_rate_hz);
  const int up = target_rate_hz / g;    // L
  const int down = audio.sample_rate_hz / g;  // M

  const std::vector<double> h =
      detail::design_resample_filter(up, audio.sample_rate_hz, target_rate_hz);
  const int half = static_cast<int>(h.size()) / 2;
  const std::int64_t n_in = static_cast<std::int64_t>(audio.samples.size());
  const std::int64_t n_out = std::llround(static_cast<double>(n_in) * up / down);

  AudioBuffer out;
  out.sample_rate_hz = target_rate_hz;
  out.samples.resize(static_cast<std::size_t>(n_out));

  // y[j] = sum_k h[jM + K - kL] x[k], the center offset K cancels the
  // filter group delay so output aligns with input.
  for (std::int64_t j = 0; j < n_out; ++j) {
    const std::int64_t t = j * down + half;
    std::int64_t k_lo = (t - static_cast<std::int64_t>(h.size()) + 1 + up - 1) / up;
    std::int64_t k_hi = t / up;
    if (k_lo < 0) k_lo = 0;
    if (k_hi >= n_in) k_hi = n_in - 1;
    double acc = 0.0;
    for (std::int64_t k = k_lo; k <= k_hi; ++k) {
      acc += h[static_cast<std::size_t>(t - k * up)] *
             static_cast<double>(audio.samples[static_cast<std::size_t>(k)]);
    }
    out.samples[static_cast<std::size_t>(j)] = static_cast<float>(acc);
  }
  clip_to_unit(out);
  return out;
}

}  // namespace mdaudio
