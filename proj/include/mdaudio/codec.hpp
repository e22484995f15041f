#pragma once

#include <array>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mdaudio/audio.hpp"

namespace mdaudio {

// The seven training conditions: MP3 at 128/32/23 kbps, AAC at 128/64/23 kbps,
// and no codec.
enum class CodecCondition : int {
  kMp3_128k = 0,
  kMp3_32k = 1,
  kMp3_23k = 2,
  kAac_128k = 3,
  kAac_64k = 4,
  kAac_23k = 5,
  kNone = 6,
};

inline constexpr std::array<CodecCondition, 7> kAllCodecConditions = {
    CodecCondition::kMp3_128k, CodecCondition::kMp3_32k, CodecCondition::kMp3_23k,
    CodecCondition::kAac_128k, CodecCondition::kAac_64k, CodecCondition::kAac_23k,
    CodecCondition::kNone,
};

inline const char* codec_family(CodecCondition c) {
  switch (c) {
    case CodecCondition::kMp3_128k:
    case CodecCondition::kMp3_32k:
    case CodecCondition::kMp3_23k:
      return "mp3";
    case CodecCondition::kAac_128k:
    case CodecCondition::kAac_64k:
    case CodecCondition::kAac_23k:
      return "aac";
    case CodecCondition::kNone:
      return "none";
  }
  return "none";
}

inline int codec_bitrate_kbps(CodecCondition c) {
  switch (c) {
    case CodecCondition::kMp3_128k: return 128;
    case CodecCondition::kMp3_32k: return 32;
    case CodecCondition::kMp3_23k: return 23;
    case CodecCondition::kAac_128k: return 128;
    case CodecCondition::kAac_64k: return 64;
    case CodecCondition::kAac_23k: return 23;
    case CodecCondition::kNone: return 0;
  }
  return 0;
}

inline std::string codec_condition_name(CodecCondition c) {
  if (c == CodecCondition::kNone) return "none";
  return std::string(codec_family(c)) + "@" +
         std::to_string(codec_bitrate_kbps(c)) + "k";
}

inline CodecCondition codec_condition_from_name(const std::string& name) {
  for (CodecCondition c : kAllCodecConditions) {
    if (codec_condition_name(c) == name) return c;
  }
  throw std::invalid_argument("unknown codec condition '" + name + "'");
}

// ---------------------------------------------------------------------------
// Built-in hermetic codecs (no external binary required).
// ---------------------------------------------------------------------------
namespace g711 {

// G.711 mu-law, 8-bit companding.
inline std::uint8_t mulaw_encode(std::int16_t pcm) {
  const int kBias = 0x84, kClip = 32635;
  int sample = pcm;
  int sign = 0;
  if (sample < 0) {
    sign = 0x80;
    sample = -sample;
  }
  if (sample > kClip) sample = kClip;
  sample += kBias;
  int exponent = 7;
  for (int mask = 0x4000; (sample & mask) == 0 && exponent > 0; mask >>= 1) {
    --exponent;
  }
  const int mantissa = (sample >> (exponent + 3)) & 0x0f;
  return static_cast<std::uint8_t>(~(sign | (exponent << 4) | mantissa));
}

inline std::int16_t mulaw_decode(std::uint8_t code) {
  code = static_cast<std::uint8_t>(~code);
  const int sign = code & 0x80;
  const int exponent = (code >> 4) & 0x07;
  const int mantissa = code & 0x0f;
  int sample = (((mantissa << 3) + 0x84) << exponent) - 0x84;
  return static_cast<std::int16_t>(sign ? -sample : sample);
}

}  // namespace g711

namespace ima_adpcm {

inline constexpr std::array<int, 16> kIndexTable = {
    -1, -1, -1, -1, 2, 4, 6, 8, -1, -1, -1, -1, 2, 4, 6, 8};

inline constexpr std::array<int, 89> kStepTable = {
    7,     8,     9,     10,    11,    12,    13,    14,    16,    17,
    19,    21,    23,    25,    28,    31,    34,    37,    41,    45,
    50,    55,    60,    66,    73,    80,    88,    97,    107,   118,
    130,   143,   157,   173,   190,   209,   230,   253,   279,   307,
    337,   371,   408,   449,   494,   544,   598,   658,   724,   796,
    876,   963,   1060,  1166,  1282,  1411,  1552,  1707,  1878,  2066,
    2272,  2499,  2749,  3024,  3327,  3660,  4026,  4428,  4871,  5358,
    5894,  6484,  7132,  7845,  8630,  9493,  10442, 11487, 12635, 13899,
    15289, 16818, 18500, 20350, 22385, 24623, 27086, 29794, 32767};

struct State {
  int predictor = 0;
  int index = 0;
};

inline int clamp_index(int i) { return i < 0 ? 0 : (i > 88 ? 88 : i); }

inline std::int16_t decode_nibble(State& st, std::uint8_t nibble) {
  const int step = kStepTable[static_cast<std::size_t>(st.index)];
  int diff = step >> 3;
  if (nibble & 4) diff += step;
  if (nibble & 2) diff += step >> 1;
  if (nibble & 1) diff += step >> 2;
  if (nibble & 8) {
    st.predictor -= diff;
  } else {
    st.predictor += diff;
  }
  if (st.predictor > 32767) st.predictor = 32767;
  if (st.predictor < -32768) st.predictor = -32768;
  st.index = clamp_index(st.index + kIndexTable[nibble]);
  return static_cast<std::int16_t>(st.predictor);
}

inline std::uint8_t encode_sample(State& st, std::int16_t sample) {
  int step = kStepTable[static_cast<std::size_t>(st.index)];
  int diff = sample - st.predictor;
  std::uint8_t nibble = 0;
  if (diff < 0) {
    nibble = 8;
    diff = -diff;
  }
  if (diff >= step) {
    nibble |= 4;
    diff -= step;
  }
  step >>= 1;
  if (diff >= step) {
    nibble |= 2;
    diff -= step;
  }
  step >>= 1;
  if (diff >= step) nibble |= 1;
  decode_nibble(st, nibble);  // keep encoder state in sync with the decoder
  return nibble;
}

}  // namespace ima_adpcm

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

// Encodes and decodes one buffer under a codec condition. Implementations are
// deterministic functions of (audio, condition); raw output may differ in
// length from the input (the caller aligns and trims).
class CodecBackend {
 public:
  virtual ~CodecBackend() = default;
  virtual AudioBuffer process(const AudioBuffer& audio, CodecCondition condition) const = 0;
  virtual std::string name() const = 0;
  // Label of what actually ran, e.g. the fallback backend maps MP3 conditions
  // onto mu-law and reports "mulaw" rather than claiming MP3.
  virtual std::string condition_label(CodecCondition condition) const = 0;
  // Leading decoder delay in samples, when the backend knows it. Unknown
  // delay is recovered by cross-correlation at the call site.
  virtual std::optional<std::int64_t> reported_delay(CodecCondition) const {
    return std::nullopt;
  }
};

// Hermetic fallback family: MP3 conditions run 8-bit mu-law companding, AAC
// conditions run 4-bit IMA ADPCM. Bit rates are fixed by the codecs
// themselves, so the requested rate only selects the family.
class FallbackCodecBackend final : public CodecBackend {
 public:
  AudioBuffer process(const AudioBuffer& audio, CodecCondition condition) const override {
    if (condition == CodecCondition::kNone) return audio;
    AudioBuffer out;
    out.sample_rate_hz = audio.sample_rate_hz;
    out.samples.resize(audio.samples.size());
    if (std::string(codec_family(condition)) == "mp3") {
      for (std::size_t i = 0; i < audio.samples.size(); ++i) {
        const std::uint8_t code = g711::mulaw_encode(to_pcm16(audio.samples[i]));
        out.samples[i] = from_pcm16(g711::mulaw_decode(code));
      }
    } else {
      ima_adpcm::State enc;
      for (std::size_t i = 0; i < audio.samples.size(); ++i) {
        ima_adpcm::encode_sample(enc, to_pcm16(audio.samples[i]));
        // encoder state tracks the decoder, so predictor is the decoded value
        out.samples[i] = from_pcm16(static_cast<std::int16_t>(enc.predictor));
      }
    }
    return out;
  }

  std::string name() const override { return "fallback"; }

  std::optional<std::int64_t> reported_delay(CodecCondition) const override {
    return 0;  // sample-synchronous codecs
  }

  std::string condition_label(CodecCondition condition) const override {
    if (condition == CodecCondition::kNone) return "none";
    return std::string(codec_family(condition)) == "mp3" ? "mulaw-8bit"
                                                         : "ima-adpcm-4bit";
  }
};

// Shells out to a user-supplied transcoder. The command template must contain
// {input} and {output} placeholders and may use {codec} and {bitrate};
// exchange format is WAV PCM16 mono. Selected via the MDAUDIO_TRANSCODER
// environment variable. max_concurrent bounds simultaneous subprocesses
// (0 = unbounded); MDAUDIO_TRANSCODER_JOBS sets it for the default backend.
class ExternalTranscoderBackend final : public CodecBackend {
 public:
  explicit ExternalTranscoderBackend(std::string command_template,
                                     unsigned max_concurrent = 0)
      : template_(std::move(command_template)), max_concurrent_(max_concurrent) {
    if (template_.find("{input}") == std::string::npos ||
        template_.find("{output}") == std::string::npos) {
      throw std::invalid_argument(
          "transcoder template must contain {input} and {output}");
    }
  }

  AudioBuffer process(const AudioBuffer& audio, CodecCondition condition) const override {
    if (condition == CodecCondition::kNone) return audio;
    const SubprocessSlot slot(max_concurrent_ > 0 ? this : nullptr);
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path();
    const std::string tag = unique_tag();
    const fs::path in_path = dir / ("mdaudio_tc_" + tag + "_in.wav");
    const fs::path out_path = dir / ("mdaudio_tc_" + tag + "_out.wav");
    write_wav(in_path.string(), audio);

    std::string cmd = template_;
    replace_all(cmd, "{input}", in_path.string());
    replace_all(cmd, "{output}", out_path.string());
    replace_all(cmd, "{codec}", codec_family(condition));
    replace_all(cmd, "{bitrate}", std::to_string(codec_bitrate_kbps(condition)));

    const int rc = std::system(cmd.c_str());
    AudioBuffer decoded;
    std::string error;
    if (rc != 0) {
      error = "transcoder exited with status " + std::to_string(rc) + ": " + cmd;
    } else {
      try {
        decoded = read_wav(out_path.string());
      } catch (const std::exception& e) {
        error = std::string("transcoder produced no readable output: ") + e.what();
      }
      if (error.empty() && decoded.samples.empty()) {
        error = "transcoder produced an empty stream: " + cmd;
      }
    }
    std::error_code ec;
    fs::remove(in_path, ec);
    fs::remove(out_path, ec);
    if (!error.empty()) throw std::runtime_error(error);
    return decoded;
  }

  std::string name() const override { return "external"; }

  std::string condition_label(CodecCondition condition) const override {
    return codec_condition_name(condition);
  }

 private:
  // RAII slot in the subprocess limiter.
  class SubprocessSlot {
   public:
    explicit SubprocessSlot(const ExternalTranscoderBackend* owner) : owner_(owner) {
      if (owner_ == nullptr) return;
      std::unique_lock<std::mutex> lock(owner_->jobs_mutex_);
      owner_->jobs_cv_.wait(lock, [this] {
        return owner_->running_jobs_ < owner_->max_concurrent_;
      });
      ++owner_->running_jobs_;
    }
    ~SubprocessSlot() {
      if (owner_ == nullptr) return;
      {
        std::lock_guard<std::mutex> lock(owner_->jobs_mutex_);
        --owner_->running_jobs_;
      }
      owner_->jobs_cv_.notify_one();
    }

   private:
    const ExternalTranscoderBackend* owner_;
  };

  static void replace_all(std::string& s, const std::string& from, const std::string& to) {
    for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos;
         pos += to.size()) {
      s.replace(pos, from.size(), to);
    }
  }

  static std::string unique_tag() {
    static std::atomic<std::uint64_t> counter{0};
    return std::to_string(static_cast<std::uint64_t>(
               std::hash<std::thread::id>{}(std::this_thread::get_id())) &
           0xffff) + "_" + std::to_string(counter.fetch_add(1));
  }

  std::string template_;
  unsigned max_concurrent_;
  mutable std::mutex jobs_mutex_;
  mutable std::condition_variable jobs_cv_;
  mutable unsigned running_jobs_ = 0;
};

// Backend selection per the external-interface contract: MDAUDIO_TRANSCODER
// holds a command template; unset means fallback codecs only.
inline std::unique_ptr<CodecBackend> make_default_codec_backend() {
  const char* env = std::getenv("MDAUDIO_TRANSCODER");
  if (env != nullptr && *env != '\0') {
    unsigned jobs = 0;
    if (const char* jobs_env = std::getenv("MDAUDIO_TRANSCODER_JOBS")) {
      jobs = static_cast<unsigned>(std::strtoul(jobs_env, nullptr, 10));
    }
    return std::make_unique<ExternalTranscoderBackend>(env, jobs);
  }
  return std::make_unique<FallbackCodecBackend>();
}

}  // namespace mdaudio
