#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdaudio {

// Mono waveform with samples in [-1, 1]. The unit flowing through every
// perturbation stage.
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate_hz = 16000;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

inline bool is_supported_rate(int rate_hz) {
  return rate_hz == 8000 || rate_hz == 16000;
}

// Stage-exit clamp keeping the [-1, 1] sample invariant.
inline void clip_to_unit(AudioBuffer& audio) {
  for (float& s : audio.samples) s = std::clamp(s, -1.0f, 1.0f);
}

inline double signal_power(const AudioBuffer& audio) {
  double acc = 0.0;
  for (float s : audio.samples) acc += static_cast<double>(s) * s;
  return audio.samples.empty() ? 0.0 : acc / audio.samples.size();
}

inline std::int16_t to_pcm16(float x) {
  long v = std::lround(static_cast<double>(x) * 32768.0);
  return static_cast<std::int16_t>(std::clamp(v, -32768L, 32767L));
}

inline float from_pcm16(std::int16_t v) {
  return static_cast<float>(v) / 32768.0f;
}

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

// Reads a PCM 16-bit little-endian mono WAV file. Unknown chunks are skipped.
inline AudioBuffer read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw std::runtime_error("wav: not a RIFF/WAVE file: " + path);
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  AudioBuffer audio;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    std::uint32_t chunk_size = detail::read_u32le(hdr + 4);
    std::size_t body = pos + 8;
    if (body + chunk_size > bytes.size()) {
      chunk_size = static_cast<std::uint32_t>(bytes.size() - body);
    }
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw std::runtime_error("wav: short fmt chunk: " + path);
      const unsigned char* f = bytes.data() + body;
      format = detail::read_u16le(f);
      channels = detail::read_u16le(f + 2);
      rate = detail::read_u32le(f + 4);
      bits = detail::read_u16le(f + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) throw std::runtime_error("wav: data before fmt: " + path);
      if (format != 1 || bits != 16) {
        throw std::runtime_error("wav: only PCM16 supported: " + path);
      }
      if (channels != 1) {
        throw std::runtime_error("wav: only mono supported: " + path);
      }
      std::size_t n = chunk_size / 2;
      audio.samples.resize(n);
      const unsigned char* d = bytes.data() + body;
      for (std::size_t i = 0; i < n; ++i) {
        std::int16_t v = static_cast<std::int16_t>(detail::read_u16le(d + 2 * i));
        audio.samples[i] = from_pcm16(v);
      }
      audio.sample_rate_hz = static_cast<int>(rate);
      have_data = true;
    }
    pos = body + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }
  if (!have_data) throw std::runtime_error("wav: no data chunk: " + path);
  return audio;
}

inline void write_wav(const std::string& path, const AudioBuffer& audio) {
  std::string out;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put_u32le(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32le(out, 16);
  detail::put_u16le(out, 1);  // PCM
  detail::put_u16le(out, 1);  // mono
  detail::put_u32le(out, static_cast<std::uint32_t>(audio.sample_rate_hz));
  detail::put_u32le(out, static_cast<std::uint32_t>(audio.sample_rate_hz) * 2);
  detail::put_u16le(out, 2);
  detail::put_u16le(out, 16);
  out += "data";
  detail::put_u32le(out, data_bytes);
  for (float s : audio.samples) {
    detail::put_u16le(out, static_cast<std::uint16_t>(to_pcm16(s)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("wav: cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("wav: write failed: " + path);
}

}  // namespace mdaudio
