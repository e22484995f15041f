#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdaudio/audio.hpp"
#include "mdaudio/fft.hpp"
#include "mdaudio/rng.hpp"

namespace mdaudio {

inline constexpr double kSpeedOfSound = 343.0;  // m/s

using Vec3 = std::array<double, 3>;

inline double distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// One pre-generated room/mixing condition: geometry, reverberation time,
// source positions and target SNR.
struct NoiseConfig {
  Vec3 room_dims{};                    // meters
  double rt60_s = 0.0;                 // [0, 0.9]
  Vec3 mic_pos{};
  Vec3 speech_pos{};                   // 1..10 m from the microphone
  std::vector<Vec3> noise_positions;   // 0..4 sources
  double snr_db = 0.0;                 // [0, 30]

  void validate() const {
    auto inside = [&](const Vec3& p) {
      return p[0] > 0 && p[0] < room_dims[0] && p[1] > 0 && p[1] < room_dims[1] &&
             p[2] > 0 && p[2] < room_dims[2];
    };
    if (!(room_dims[0] > 0 && room_dims[1] > 0 && room_dims[2] > 0)) {
      throw std::runtime_error("NoiseConfig: room dimensions must be positive");
    }
    if (rt60_s < 0.0 || rt60_s > 0.9) {
      throw std::runtime_error("NoiseConfig: rt60_s out of [0, 0.9]");
    }
    if (snr_db < 0.0 || snr_db > 30.0) {
      throw std::runtime_error("NoiseConfig: snr_db out of [0, 30]");
    }
    if (noise_positions.size() > 4) {
      throw std::runtime_error("NoiseConfig: more than 4 noise sources");
    }
    if (!inside(mic_pos) || !inside(speech_pos)) {
      throw std::runtime_error("NoiseConfig: mic/speech position outside room");
    }
    for (const Vec3& p : noise_positions) {
      if (!inside(p)) throw std::runtime_error("NoiseConfig: noise position outside room");
    }
    const double d = distance(speech_pos, mic_pos);
    if (d < 1.0 || d > 10.0) {
      throw std::runtime_error("NoiseConfig: speech-mic distance out of [1, 10] m");
    }
  }
};

struct ImpulseResponse {
  std::vector<double> taps;
  int sample_rate_hz = 16000;
};

// ---------------------------------------------------------------------------
// Config pool generation and JSONL persistence
// ---------------------------------------------------------------------------
namespace roomsim_detail {

inline constexpr double kRoomMinXY = 3.0, kRoomMaxXY = 10.0;
inline constexpr double kRoomMinZ = 2.4, kRoomMaxZ = 4.5;
inline constexpr double kWallMargin = 0.3;  // keeps positions strictly inside

inline Vec3 point_inside(Rng& rng, const Vec3& room) {
  return {rng.uniform(kWallMargin, room[0] - kWallMargin),
          rng.uniform(kWallMargin, room[1] - kWallMargin),
          rng.uniform(kWallMargin, room[2] - kWallMargin)};
}

}  // namespace roomsim_detail

inline NoiseConfig sample_noise_config(Rng& rng) {
  using namespace roomsim_detail;
  NoiseConfig cfg;
  cfg.room_dims = {rng.uniform(kRoomMinXY, kRoomMaxXY),
                   rng.uniform(kRoomMinXY, kRoomMaxXY),
                   rng.uniform(kRoomMinZ, kRoomMaxZ)};
  cfg.mic_pos = point_inside(rng, cfg.room_dims);
  for (;;) {
    cfg.speech_pos = point_inside(rng, cfg.room_dims);
    const double d = distance(cfg.speech_pos, cfg.mic_pos);
    if (d >= 1.0 && d <= 10.0) break;
  }
  const std::size_t n_sources = rng.uniform_index(5);  // 0..4
  cfg.noise_positions.clear();
  while (cfg.noise_positions.size() < n_sources) {
    Vec3 p = point_inside(rng, cfg.room_dims);
    if (distance(p, cfg.mic_pos) >= 0.05) cfg.noise_positions.push_back(p);
  }
  cfg.rt60_s = rng.uniform(0.0, 0.9);
  cfg.snr_db = rng.uniform(0.0, 30.0);
  return cfg;
}

// `count` configurations drawn from one seeded stream; the same seed always
// reproduces the same pool bit for bit.
inline std::vector<NoiseConfig> generate_config_pool(std::uint64_t seed,
                                                     std::size_t count) {
  if (count < 1) throw std::invalid_argument("generate_config_pool: count must be >= 1");
  Rng rng(seed);
  std::vector<NoiseConfig> pool;
  pool.reserve(count);
  for (std::size_t i = 0; i < count; ++i) pool.push_back(sample_noise_config(rng));
  return pool;
}

inline nlohmann::json noise_config_to_json(const NoiseConfig& cfg) {
  return nlohmann::json{{"room_dims", cfg.room_dims},
                        {"rt60_s", cfg.rt60_s},
                        {"mic_pos", cfg.mic_pos},
                        {"speech_pos", cfg.speech_pos},
                        {"noise_positions", cfg.noise_positions},
                        {"snr_db", cfg.snr_db}};
}

inline NoiseConfig noise_config_from_json(const nlohmann::json& j) {
  NoiseConfig cfg;
  cfg.room_dims = j.at("room_dims").get<Vec3>();
  cfg.rt60_s = j.at("rt60_s").get<double>();
  cfg.mic_pos = j.at("mic_pos").get<Vec3>();
  cfg.speech_pos = j.at("speech_pos").get<Vec3>();
  cfg.noise_positions = j.at("noise_positions").get<std::vector<Vec3>>();
  cfg.snr_db = j.at("snr_db").get<double>();
  return cfg;
}

inline void save_config_pool(const std::string& path,
                             const std::vector<NoiseConfig>& pool) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("config pool: cannot write " + path);
  for (const auto& cfg : pool) out << noise_config_to_json(cfg).dump() << '\n';
  if (!out) throw std::runtime_error("config pool: write failed: " + path);
}

inline std::vector<NoiseConfig> load_config_pool(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config pool: cannot open " + path);
  std::vector<NoiseConfig> pool;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      pool.push_back(noise_config_from_json(nlohmann::json::parse(line)));
      pool.back().validate();
    } catch (const std::exception& e) {
      throw std::runtime_error("config pool: " + path + ":" + std::to_string(line_no) +
                               ": " + e.what());
    }
  }
  return pool;
}

// ---------------------------------------------------------------------------
// Room impulse response (image-source model)
// ---------------------------------------------------------------------------
namespace roomsim_detail {

// Schroeder-style T60 of the direction-averaged energy envelope
//
//   e(t) = < exp(-lambda c t (|ux|/Lx + |uy|/Ly + |uz|/Lz)) >_directions
//
// evaluated with the same -5..-35 dB least-squares fit the decay contract
// is measured with. Used to solve for the wall absorption.
inline double envelope_t60(double lambda, const Vec3& room, double rt60) {
  constexpr int kDirs = 12;
  constexpr int kTimes = 160;
  constexpr double kHalfPi = 1.57079632679489661923;
  std::array<double, kDirs * kDirs> g{}, w{};
  for (int i = 0; i < kDirs; ++i) {
    const double th = (i + 0.5) / kDirs * kHalfPi;
    for (int j = 0; j < kDirs; ++j) {
      const double ph = (j + 0.5) / kDirs * kHalfPi;
      g[i * kDirs + j] = std::sin(th) * std::cos(ph) / room[0] +
                         std::sin(th) * std::sin(ph) / room[1] +
                         std::cos(th) / room[2];
      w[i * kDirs + j] = std::sin(th);
    }
  }
  std::array<double, kTimes> e{};
  for (int n = 0; n < kTimes; ++n) {
    const double t = rt60 * n / (kTimes - 1);
    double acc = 0.0;
    for (int k = 0; k < kDirs * kDirs; ++k) {
      acc += w[k] * std::exp(-lambda * kSpeedOfSound * t * g[k]);
    }
    e[n] = acc;
  }
  // backward-integrated decay curve, truncated at rt60
  std::array<double, kTimes> curve{};
  double tail = 0.0;
  for (int n = kTimes - 1; n >= 0; --n) {
    tail += e[n];
    curve[n] = tail;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (int n = 0; n < kTimes; ++n) {
    const double level = 10.0 * std::log10(curve[n] / curve[0] + 1e-300);
    if (level <= -5.0 && level >= -35.0) {
      const double t = rt60 * n / (kTimes - 1);
      sx += t;
      sy += level;
      sxx += t * t;
      sxy += t * level;
      ++cnt;
    }
  }
  if (cnt < 3) return std::numeric_limits<double>::quiet_NaN();
  const double denom = cnt * sxx - sx * sx;
  if (denom <= 0) return std::numeric_limits<double>::quiet_NaN();
  const double slope = (cnt * sxy - sx * sy) / denom;
  if (slope >= 0) return std::numeric_limits<double>::quiet_NaN();
  return -60.0 / slope;
}

// Absorption exponent lambda = -ln(1 - alpha) solved so that the envelope's
// measured decay equals the requested rt60. Sabine's alpha seeds the bracket.
inline double calibrated_absorption(const Vec3& room, double rt60) {
  const double volume = room[0] * room[1] * room[2];
  const double surface =
      2.0 * (room[0] * room[1] + room[1] * room[2] + room[0] * room[2]);
  const double sabine = 0.161 * volume / (surface * rt60);
  double lo = sabine * 0.2, hi = sabine * 10.0;
  for (int guard = 0; guard < 8; ++guard) {
    const double v = envelope_t60(lo, room, rt60);
    if (!std::isfinite(v) || v > rt60) break;
    lo *= 0.5;
  }
  for (int guard = 0; guard < 8; ++guard) {
    const double v = envelope_t60(hi, room, rt60);
    if (!std::isfinite(v) || v < rt60) break;
    hi *= 2.0;
  }
  for (int it = 0; it < 36; ++it) {
    const double mid = std::sqrt(lo * hi);
    const double v = envelope_t60(mid, room, rt60);
    if (!std::isfinite(v) || v > rt60) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::sqrt(lo * hi);
}

// Single-entry cache: a mix() call generates up to five RIRs for one room.
inline double cached_absorption(const Vec3& room, double rt60) {
  struct Entry {
    Vec3 room{};
    double rt60 = -1.0;
    double lambda = 0.0;
  };
  static thread_local Entry cache;
  if (cache.rt60 == rt60 && cache.room == room) return cache.lambda;
  cache = {room, rt60, calibrated_absorption(room, rt60)};
  return cache.lambda;
}

struct AxisImages {
  std::vector<double> delta;   // image coordinate minus mic coordinate
  std::vector<int> bounces;
};

inline AxisImages axis_images(double source, double mic, double wall, double max_dist) {
  AxisImages out;
  const int n_max = static_cast<int>(std::ceil(max_dist / (2.0 * wall))) + 1;
  for (int n = -n_max; n <= n_max; ++n) {
    for (int p = 0; p <= 1; ++p) {
      out.delta.push_back((1 - 2 * p) * source + 2.0 * n * wall - mic);
      out.bounces.push_back(std::abs(n - p) + std::abs(n));
    }
  }
  return out;
}

}  // namespace roomsim_detail

// Shoebox image-source RIR with nearest-sample tap placement and 1/r
// per-image attenuation. Reflections are kept while their delay is within
// rt60. Reflection tap signs are randomized (a pure function of the
// geometry), which keeps tap pileup energetically incoherent; the direct
// tap stays positive. rt60 = 0 degenerates to the direct path alone.
inline ImpulseResponse generate_rir(const NoiseConfig& config, const Vec3& source_pos,
                                    int sample_rate_hz) {
  using namespace roomsim_detail;
  if (!is_supported_rate(sample_rate_hz)) {
    throw std::invalid_argument("generate_rir: unsupported sample rate");
  }
  for (int a = 0; a < 3; ++a) {
    if (!(source_pos[a] > 0 && source_pos[a] < config.room_dims[a])) {
      throw std::invalid_argument("generate_rir: source outside room");
    }
  }
  const double direct_dist = distance(source_pos, config.mic_pos);
  if (direct_dist < 0.01) {
    throw std::invalid_argument("generate_rir: source coincident with microphone");
  }

  const double fs = static_cast<double>(sample_rate_hz);
  const std::size_t direct_tap =
      static_cast<std::size_t>(std::llround(direct_dist / kSpeedOfSound * fs));

  ImpulseResponse rir;
  rir.sample_rate_hz = sample_rate_hz;
  if (config.rt60_s <= 0.0) {
    rir.taps.assign(direct_tap + 1, 0.0);
    rir.taps[direct_tap] = 1.0 / direct_dist;
    return rir;
  }

  const std::size_t reverb_len =
      static_cast<std::size_t>(std::ceil(config.rt60_s * fs)) + 1;
  rir.taps.assign(std::max(direct_tap + 1, reverb_len), 0.0);

  const double lambda = cached_absorption(config.room_dims, config.rt60_s);
  const double beta = std::exp(-lambda / 2.0);
  const double max_dist = kSpeedOfSound * config.rt60_s;

  // sign stream derived from the geometry, so the RIR is a pure function
  // of (config, source, rate)
  std::uint64_t h = 0x6d646175ULL;
  auto feed = [&h](double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    h = mix64(h ^ bits);
  };
  for (double v : config.room_dims) feed(v);
  for (double v : config.mic_pos) feed(v);
  for (double v : source_pos) feed(v);
  feed(config.rt60_s);
  feed(static_cast<double>(sample_rate_hz));
  Rng sign_rng(h);

  const AxisImages xs = axis_images(source_pos[0], config.mic_pos[0],
                                    config.room_dims[0], max_dist);
  const AxisImages ys = axis_images(source_pos[1], config.mic_pos[1],
                                    config.room_dims[1], max_dist);
  const AxisImages zs = axis_images(source_pos[2], config.mic_pos[2],
                                    config.room_dims[2], max_dist);

  int max_bounce = 3;
  for (const AxisImages* ax : {&xs, &ys, &zs}) {
    int axis_max = 0;
    for (int b : ax->bounces) axis_max = std::max(axis_max, b);
    max_bounce += axis_max;
  }
  std::vector<double> beta_pow(static_cast<std::size_t>(max_bounce) + 1, 1.0);
  for (std::size_t b = 1; b < beta_pow.size(); ++b) beta_pow[b] = beta_pow[b - 1] * beta;

  const double max_dist2 = max_dist * max_dist;
  for (std::size_t ix = 0; ix < xs.delta.size(); ++ix) {
    const double dx2 = xs.delta[ix] * xs.delta[ix];
    if (dx2 > max_dist2) continue;
    for (std::size_t iy = 0; iy < ys.delta.size(); ++iy) {
      const double dxy2 = dx2 + ys.delta[iy] * ys.delta[iy];
      if (dxy2 > max_dist2) continue;
      const int bxy = xs.bounces[ix] + ys.bounces[iy];
      for (std::size_t iz = 0; iz < zs.delta.size(); ++iz) {
        const double d2 = dxy2 + zs.delta[iz] * zs.delta[iz];
        if (d2 > max_dist2) continue;
        const int bounces = bxy + zs.bounces[iz];
        const double dist = std::sqrt(d2);
        const std::size_t tap =
            static_cast<std::size_t>(std::llround(dist / kSpeedOfSound * fs));
        if (tap >= rir.taps.size()) continue;
        double amp = beta_pow[static_cast<std::size_t>(bounces)] / std::max(dist, 0.01);
        if (bounces > 0 && sign_rng.bernoulli(0.5)) amp = -amp;
        rir.taps[tap] += amp;
      }
    }
  }
  // rounding of the direct distance must win over nearby reflections
  if (rir.taps[direct_tap] == 0.0) rir.taps[direct_tap] = 1.0 / direct_dist;
  return rir;
}

// ---------------------------------------------------------------------------
// Mixing
// ---------------------------------------------------------------------------

// 10*log10(sum s^2 / sum n^2) over full buffers.
inline double measure_snr(const AudioBuffer& signal, const AudioBuffer& noise) {
  if (signal.samples.size() != noise.samples.size()) {
    throw std::invalid_argument("measure_snr: buffers must have equal length");
  }
  double ps = 0.0, pn = 0.0;
  for (float v : signal.samples) ps += static_cast<double>(v) * v;
  for (float v : noise.samples) pn += static_cast<double>(v) * v;
  if (pn <= 0.0) throw std::domain_error("measure_snr: noise has zero power");
  return 10.0 * std::log10(ps / pn);
}

struct MixParts {
  AudioBuffer output;
  AudioBuffer reverberant_speech;
  AudioBuffer scaled_noise;  // all-zero when the config has no noise sources
};

namespace roomsim_detail {

inline std::vector<double> convolve_trim(const std::vector<float>& x,
                                         const std::vector<double>& taps,
                                         std::size_t out_len) {
  std::vector<double> xd(x.begin(), x.end());
  std::vector<double> full = fft_convolve(xd, taps);
  full.resize(out_len, 0.0);
  return full;
}

// Circular extraction of `len` samples starting at `offset` (loops short
// snippets, crops long ones).
inline std::vector<float> loop_or_crop(const std::vector<float>& snippet,
                                       std::size_t offset, std::size_t len) {
  std::vector<float> out(len);
  const std::size_t n = snippet.size();
  for (std::size_t i = 0; i < len; ++i) out[i] = snippet[(offset + i) % n];
  return out;
}

}  // namespace roomsim_detail

// Reverberates speech and noise sources through their image-source RIRs and
// scales the summed noise so the speech-to-noise power ratio equals the
// config's SNR. The rng chooses each noise snippet's circular start offset.
inline MixParts mix_parts(const AudioBuffer& speech,
                          const std::vector<AudioBuffer>& noises,
                          const NoiseConfig& config, Rng& rng) {
  using namespace roomsim_detail;
  if (noises.size() != config.noise_positions.size()) {
    throw std::invalid_argument("mix: need one noise buffer per configured source");
  }
  for (const auto& n : noises) {
    if (n.samples.empty()) throw std::invalid_argument("mix: empty noise buffer");
    if (n.sample_rate_hz != speech.sample_rate_hz) {
      throw std::invalid_argument("mix: sample-rate mismatch between buffers");
    }
  }
  if (speech.samples.empty()) throw std::invalid_argument("mix: empty speech");
  double input_power = 0.0;
  for (float v : speech.samples) input_power += static_cast<double>(v) * v;
  if (input_power <= 0.0) {
    throw std::domain_error("mix: speech has zero power; SNR undefined");
  }

  const std::size_t n_out = speech.samples.size();
  const int rate = speech.sample_rate_hz;

  const ImpulseResponse speech_rir = generate_rir(config, config.speech_pos, rate);
  std::vector<double> wet = convolve_trim(speech.samples, speech_rir.taps, n_out);
  double speech_power = 0.0;
  for (double v : wet) speech_power += v * v;
  if (speech_power <= 0.0) {
    throw std::domain_error("mix: reverberant speech has zero power");
  }

  std::vector<double> noise_sum(n_out, 0.0);
  for (std::size_t i = 0; i < noises.size(); ++i) {
    const std::size_t offset = rng.uniform_index(noises[i].samples.size());
    const std::vector<float> snippet =
        loop_or_crop(noises[i].samples, offset, n_out);
    const ImpulseResponse rir = generate_rir(config, config.noise_positions[i], rate);
    const std::vector<double> wet_noise = convolve_trim(snippet, rir.taps, n_out);
    for (std::size_t k = 0; k < n_out; ++k) noise_sum[k] += wet_noise[k];
  }

  double gain = 0.0;
  if (!noises.empty()) {
    double noise_power = 0.0;
    for (double v : noise_sum) noise_power += v * v;
    if (noise_power <= 0.0) {
      throw std::domain_error("mix: noise has zero power; cannot reach target SNR");
    }
    gain = std::sqrt(speech_power / (noise_power * std::pow(10.0, config.snr_db / 10.0)));
  }

  std::vector<double> out(n_out);
  double peak = 0.0;
  for (std::size_t k = 0; k < n_out; ++k) {
    noise_sum[k] *= gain;
    out[k] = wet[k] + noise_sum[k];
    peak = std::max(peak, std::abs(out[k]));
  }
  // a common rescale keeps the SNR while restoring the [-1, 1] invariant
  const double scale = peak > 1.0 ? 1.0 / peak : 1.0;

  MixParts parts;
  parts.output.sample_rate_hz = rate;
  parts.reverberant_speech.sample_rate_hz = rate;
  parts.scaled_noise.sample_rate_hz = rate;
  parts.output.samples.resize(n_out);
  parts.reverberant_speech.samples.resize(n_out);
  parts.scaled_noise.samples.resize(n_out);
  for (std::size_t k = 0; k < n_out; ++k) {
    parts.output.samples[k] = static_cast<float>(out[k] * scale);
    parts.reverberant_speech.samples[k] = static_cast<float>(wet[k] * scale);
    parts.scaled_noise.samples[k] = static_cast<float>(noise_sum[k] * scale);
  }
  clip_to_unit(parts.output);
  return parts;
}

inline AudioBuffer mix(const AudioBuffer& speech, const std::vector<AudioBuffer>& noises,
                       const NoiseConfig& config, Rng& rng) {
  return mix_parts(speech, noises, config, rng).output;
}

}  // namespace mdaudio
