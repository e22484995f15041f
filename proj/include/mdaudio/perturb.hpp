#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mdaudio/audio.hpp"
#include "mdaudio/codec.hpp"
#include "mdaudio/fft.hpp"
#include "mdaudio/resample.hpp"
#include "mdaudio/rng.hpp"

namespace mdaudio {

// Pins a buffer to exactly n samples (truncate or zero-pad at the tail).
inline void fix_length(AudioBuffer& audio, std::size_t n) {
  audio.samples.resize(n, 0.0f);
}

// 16 kHz -> 8 kHz -> 16 kHz round trip with the sample count pinned to the
// input, the deterministic core of the mixed-bandwidth stage.
inline AudioBuffer bandwidth_roundtrip(const AudioBuffer& audio) {
  if (audio.sample_rate_hz != 16000) {
    throw std::invalid_argument("bandwidth_roundtrip: input must be 16 kHz");
  }
  AudioBuffer out = resample(resample(audio, 8000), 16000);
  fix_length(out, audio.samples.size());
  return out;
}

// With probability downsample_prob the utterance passes through an 8 kHz
// round trip; otherwise it is returned unmodified. Output is always 16 kHz.
inline AudioBuffer simulate_bandwidth(const AudioBuffer& audio,
                                      double downsample_prob, Rng& rng) {
  if (audio.sample_rate_hz != 16000) {
    throw std::invalid_argument("simulate_bandwidth: input must be 16 kHz");
  }
  if (downsample_prob < 0.0 || downsample_prob > 1.0) {
    throw std::invalid_argument("simulate_bandwidth: probability out of [0, 1]");
  }
  if (rng.bernoulli(downsample_prob)) return bandwidth_roundtrip(audio);
  return audio;
}

// Uniform draw over the 7 codec conditions (including "none").
inline CodecCondition sample_codec_condition(Rng& rng) {
  return kAllCodecConditions[rng.uniform_index(kAllCodecConditions.size())];
}

namespace detail {

// Lag maximizing cross-correlation; positive lag means sig is delayed
// relative to ref (sig[n + lag] lines up with ref[n]).
inline std::int64_t estimate_alignment_lag(const AudioBuffer& ref,
                                           const AudioBuffer& sig) {
  if (ref.samples.empty() || sig.samples.empty()) return 0;
  std::vector<double> a(sig.samples.begin(), sig.samples.end());
  std::vector<double> b(ref.samples.rbegin(), ref.samples.rend());
  const std::vector<double> xc = fft_convolve(a, b);
  std::size_t best = 0;
  for (std::size_t i = 1; i < xc.size(); ++i) {
    if (xc[i] > xc[best]) best = i;
  }
  return static_cast<std::int64_t>(best) -
         static_cast<std::int64_t>(ref.samples.size()) + 1;
}

}  // namespace detail

// Encode/decode round trip under one condition. "none" is bit-identity.
// Decoded audio is re-aligned (codec padding removed) and pinned to the
// input's exact sample count.
inline AudioBuffer apply_codec(const AudioBuffer& audio, CodecCondition condition,
                               const CodecBackend& backend) {
  if (condition == CodecCondition::kNone) return audio;
  if (audio.sample_rate_hz != 16000) {
    throw std::invalid_argument("apply_codec: input must be 16 kHz");
  }
  AudioBuffer decoded = backend.process(audio, condition);
  if (decoded.samples.empty()) {
    throw std::runtime_error("apply_codec: decoded stream is empty");
  }

  std::int64_t lag = 0;
  if (auto reported = backend.reported_delay(condition)) {
    lag = *reported;
  } else {
    lag = detail::estimate_alignment_lag(audio, decoded);
  }
  AudioBuffer out;
  out.sample_rate_hz = 16000;
  out.samples.assign(audio.samples.size(), 0.0f);
  for (std::size_t n = 0; n < out.samples.size(); ++n) {
    const std::int64_t src = static_cast<std::int64_t>(n) + lag;
    if (src >= 0 && src < static_cast<std::int64_t>(decoded.samples.size())) {
      out.samples[n] = decoded.samples[static_cast<std::size_t>(src)];
    }
  }
  clip_to_unit(out);
  return out;
}

}  // namespace mdaudio
