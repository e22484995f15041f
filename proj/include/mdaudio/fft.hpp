#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mdaudio {

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 FFT. Size must be a power of two. The inverse
// transform includes the 1/n scale.
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) {
    throw std::invalid_argument("fft: size must be a nonzero power of two");
  }
  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  // precomputed half-table of roots of unity
  static thread_local std::vector<std::complex<double>> roots;
  static thread_local std::size_t roots_n = 0;
  if (roots_n != n) {
    roots.assign(n / 2, {1.0, 0.0});
    const double step = 2.0 * 3.14159265358979323846 / static_cast<double>(n);
    for (std::size_t k = 0; k < n / 2; ++k) {
      roots[k] = {std::cos(step * k), -std::sin(step * k)};
    }
    roots_n = n;
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> w = roots[k * stride];
        if (inverse) w = std::conj(w);
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

// Power spectrum of a real frame zero-padded to fft_size: |X_k|^2 for
// k = 0..fft_size/2.
inline std::vector<double> power_spectrum(const std::vector<double>& frame,
                                          std::size_t fft_size) {
  std::vector<std::complex<double>> buf(fft_size);
  const std::size_t n = frame.size() < fft_size ? frame.size() : fft_size;
  for (std::size_t i = 0; i < n; ++i) buf[i] = {frame[i], 0.0};
  fft_inplace(buf, false);
  std::vector<double> out(fft_size / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::norm(buf[k]);
  return out;
}

// Full linear convolution of two real sequences via FFT,
// length = |a| + |b| - 1. Both operands share one transform (packed as
// a + ib); with Z the packed spectrum and W = Z^2, the product spectrum is
// C[k] = -i (W[k] - conj(W[n-k])) / 4.
inline std::vector<double> fft_convolve(const std::vector<double>& a,
                                        const std::vector<double>& b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_len = a.size() + b.size() - 1;
  const std::size_t n = next_pow2(out_len);
  std::vector<std::complex<double>> z(n);
  for (std::size_t i = 0; i < a.size(); ++i) z[i].real(a[i]);
  for (std::size_t i = 0; i < b.size(); ++i) z[i].imag(b[i]);
  fft_inplace(z, false);
  for (auto& v : z) v *= v;
  std::vector<std::complex<double>> c(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::complex<double> w = z[k];
    const std::complex<double> wr = std::conj(z[(n - k) & (n - 1)]);
    const std::complex<double> d = w - wr;
    c[k] = {d.imag() / 4.0, -d.real() / 4.0};  // -i * d / 4
  }
  fft_inplace(c, true);
  std::vector<double> out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = c[i].real();
  return out;
}

}  // namespace mdaudio
