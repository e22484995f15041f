#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "mdaudio/roomsim.hpp"

using namespace mdaudio;
using testutil::make_tone;
using testutil::make_white_noise;
using testutil::TempDir;

TEST_CASE("measure_snr arithmetic") {
  AudioBuffer s = make_tone(1000.0, 0.5, 16000, 0.8);
  CHECK_THAT(measure_snr(s, s), Catch::Matchers::WithinAbs(0.0, 1e-12));

  AudioBuffer tenth = s;
  for (auto& v : tenth.samples) v *= 0.1f;
  CHECK_THAT(measure_snr(s, tenth), Catch::Matchers::WithinAbs(20.0, 1e-4));

  // power 2 vs power 1: 10*log10(2)
  AudioBuffer a, b;
  a.samples.assign(100, std::sqrt(2.0f));
  b.samples.assign(100, 1.0f);
  CHECK_THAT(measure_snr(a, b), Catch::Matchers::WithinAbs(3.0103, 1e-3));

  AudioBuffer zero;
  zero.samples.assign(100, 0.0f);
  CHECK_THROWS_AS(measure_snr(a, zero), std::domain_error);
  AudioBuffer shorter;
  shorter.samples.assign(50, 1.0f);
  CHECK_THROWS_AS(measure_snr(a, shorter), std::invalid_argument);
}

TEST_CASE("config pools are seeded-deterministic") {
  const auto p1 = generate_config_pool(7, 1000);
  const auto p2 = generate_config_pool(7, 1000);
  REQUIRE(p1.size() == 1000);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].room_dims == p2[i].room_dims);
    CHECK(p1[i].rt60_s == p2[i].rt60_s);
    CHECK(p1[i].mic_pos == p2[i].mic_pos);
    CHECK(p1[i].speech_pos == p2[i].speech_pos);
    CHECK(p1[i].noise_positions == p2[i].noise_positions);
    CHECK(p1[i].snr_db == p2[i].snr_db);
  }
  const auto p3 = generate_config_pool(8, 10);
  CHECK(p3[0].room_dims != p1[0].room_dims);
}

TEST_CASE("every config in a 10^4 pool satisfies all invariants") {
  const auto pool = generate_config_pool(99, 10000);
  for (const auto& cfg : pool) {
    CHECK_NOTHROW(cfg.validate());
  }
}

TEST_CASE("snr_db sample mean over 10^5 configs is 15 +- 0.5 dB") {
  const auto pool = generate_config_pool(1234, 100000);
  double mean = 0.0;
  for (const auto& cfg : pool) mean += cfg.snr_db;
  mean /= static_cast<double>(pool.size());
  CHECK(std::abs(mean - 15.0) <= 0.5);
}

TEST_CASE("config pool JSONL round trip") {
  TempDir tmp("pool");
  const auto pool = generate_config_pool(5, 50);
  save_config_pool(tmp.file("p.jsonl"), pool);
  const auto loaded = load_config_pool(tmp.file("p.jsonl"));
  REQUIRE(loaded.size() == pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    CHECK(loaded[i].room_dims == pool[i].room_dims);
    CHECK(loaded[i].snr_db == pool[i].snr_db);
    CHECK(loaded[i].noise_positions == pool[i].noise_positions);
  }
}

namespace {

NoiseConfig anechoic_config(double dist) {
  NoiseConfig cfg;
  cfg.room_dims = {12.0, 9.0, 8.0};
  cfg.rt60_s = 0.0;
  cfg.mic_pos = {1.0, 1.0, 1.0};
  cfg.speech_pos = {1.0 + dist, 1.0, 1.0};
  cfg.snr_db = 10.0;
  return cfg;
}

}  // namespace

TEST_CASE("rt60 = 0 gives a single direct-path tap at the exact delay") {
  // 3.43 m at 16 kHz: delay = 3.43/343 s = 160 samples
  const NoiseConfig cfg = anechoic_config(3.43);
  const ImpulseResponse rir = generate_rir(cfg, cfg.speech_pos, 16000);
  REQUIRE(rir.taps.size() == 161);
  for (std::size_t i = 0; i < rir.taps.size(); ++i) {
    if (i == 160) {
      CHECK(rir.taps[i] != 0.0);
    } else {
      CHECK(rir.taps[i] == 0.0);
    }
  }
  CHECK_THAT(rir.taps[160], Catch::Matchers::WithinRel(1.0 / 3.43, 1e-12));
}

TEST_CASE("doubling the source distance halves the direct tap") {
  const NoiseConfig c1 = anechoic_config(2.0);
  const NoiseConfig c2 = anechoic_config(4.0);
  const auto r1 = generate_rir(c1, c1.speech_pos, 16000);
  const auto r2 = generate_rir(c2, c2.speech_pos, 16000);
  double a1 = 0, a2 = 0;
  for (double t : r1.taps) a1 = std::max(a1, std::abs(t));
  for (double t : r2.taps) a2 = std::max(a2, std::abs(t));
  CHECK_THAT(a1 / a2, Catch::Matchers::WithinRel(2.0, 1e-12));
}

TEST_CASE("first nonzero tap sits exactly at round(distance/c*fs)") {
  const auto pool = generate_config_pool(31, 40);
  for (const auto& cfg : pool) {
    for (int fs : {8000, 16000}) {
      const ImpulseResponse rir = generate_rir(cfg, cfg.speech_pos, fs);
      const double d = distance(cfg.speech_pos, cfg.mic_pos);
      const std::size_t expected =
          static_cast<std::size_t>(std::llround(d / kSpeedOfSound * fs));
      std::size_t first = rir.taps.size();
      for (std::size_t i = 0; i < rir.taps.size(); ++i) {
        if (rir.taps[i] != 0.0) {
          first = i;
          break;
        }
      }
      CHECK(first == expected);
      CHECK(rir.taps.size() >= static_cast<std::size_t>(cfg.rt60_s * fs));
    }
  }
}

TEST_CASE("generate_rir is a pure function of its inputs") {
  auto pool = generate_config_pool(77, 3);
  for (auto& cfg : pool) {
    cfg.rt60_s = std::max(cfg.rt60_s, 0.25);
    const auto r1 = generate_rir(cfg, cfg.speech_pos, 16000);
    const auto r2 = generate_rir(cfg, cfg.speech_pos, 16000);
    CHECK(r1.taps == r2.taps);
  }
}

TEST_CASE("generate_rir rejects degenerate sources") {
  NoiseConfig cfg = anechoic_config(2.0);
  CHECK_THROWS_AS(generate_rir(cfg, cfg.mic_pos, 16000), std::invalid_argument);
  CHECK_THROWS_AS(generate_rir(cfg, {100.0, 1.0, 1.0}, 16000), std::invalid_argument);
  CHECK_THROWS_AS(generate_rir(cfg, cfg.speech_pos, 44100), std::invalid_argument);
}

TEST_CASE("Schroeder T60 estimate tracks the target for rt60 = 0.5 s") {
  auto pool = generate_config_pool(55, 6);
  for (auto& cfg : pool) {
    cfg.rt60_s = 0.5;
    const ImpulseResponse rir = generate_rir(cfg, cfg.speech_pos, 16000);
    const double est = testutil::schroeder_t60(rir.taps, 16000);
    REQUIRE(std::isfinite(est));
    CHECK(std::abs(est - 0.5) / 0.5 <= 0.20);
  }
}

TEST_CASE("mix with zero noise sources returns the reverberant speech") {
  NoiseConfig cfg = anechoic_config(2.0);
  cfg.rt60_s = 0.3;
  const AudioBuffer speech = testutil::make_pseudo_speech(1.0, 16000, 42);
  Rng rng(1);
  const MixParts parts = mix_parts(speech, {}, cfg, rng);
  CHECK(parts.output.samples == parts.reverberant_speech.samples);
  CHECK(parts.output.samples.size() == speech.samples.size());
  for (float v : parts.scaled_noise.samples) CHECK(v == 0.0f);
}

TEST_CASE("mix reaches the target SNR for a sine in white noise") {
  auto pool = generate_config_pool(2024, 30);
  const AudioBuffer speech = make_tone(1000.0, 1.0, 16000, 0.6);
  const AudioBuffer noise = make_white_noise(1.3, 16000, 5, 0.4);
  for (auto& cfg : pool) {
    cfg.snr_db = 10.0;
    if (cfg.noise_positions.empty()) continue;
    std::vector<AudioBuffer> noises(cfg.noise_positions.size(), noise);
    Rng rng(9);
    const MixParts parts = mix_parts(speech, noises, cfg, rng);
    const double snr = measure_snr(parts.reverberant_speech, parts.scaled_noise);
    CHECK(std::abs(snr - 10.0) <= 0.5);
    CHECK(parts.output.samples.size() == speech.samples.size());
  }
}

TEST_CASE("two noise sources at 0 dB match speech power within 12%") {
  auto pool = generate_config_pool(11, 60);
  const AudioBuffer speech = testutil::make_pseudo_speech(1.0, 16000, 8);
  const AudioBuffer noise1 = make_white_noise(1.0, 16000, 6, 0.4);
  for (auto& cfg : pool) {
    if (cfg.noise_positions.size() != 2) continue;
    cfg.snr_db = 0.0;
    Rng rng(3);
    const MixParts parts = mix_parts(speech, {noise1, noise1}, cfg, rng);
    const double ps = testutil::energy(parts.reverberant_speech);
    const double pn = testutil::energy(parts.scaled_noise);
    CHECK(std::abs(pn / ps - 1.0) <= 0.12);
  }
}

TEST_CASE("mix validates its inputs") {
  auto pool = generate_config_pool(13, 20);
  NoiseConfig cfg;
  for (auto& c : pool) {
    if (!c.noise_positions.empty()) {
      cfg = c;
      break;
    }
  }
  REQUIRE(!cfg.noise_positions.empty());
  const AudioBuffer speech = make_tone(500.0, 0.5, 16000, 0.5);
  Rng rng(1);

  // wrong number of noise buffers
  CHECK_THROWS_AS(mix(speech, {}, cfg, rng), std::invalid_argument);

  // all-zero speech: SNR undefined
  AudioBuffer silence;
  silence.sample_rate_hz = 16000;
  silence.samples.assign(8000, 0.0f);
  std::vector<AudioBuffer> noises(cfg.noise_positions.size(),
                                  make_white_noise(0.6, 16000, 2, 0.3));
  CHECK_THROWS_AS(mix(silence, noises, cfg, rng), std::domain_error);

  // empty noise buffer
  std::vector<AudioBuffer> empties(cfg.noise_positions.size());
  for (auto& e : empties) e.sample_rate_hz = 16000;
  CHECK_THROWS_AS(mix(speech, empties, cfg, rng), std::invalid_argument);

  // sample-rate mismatch
  std::vector<AudioBuffer> wrong_rate(cfg.noise_positions.size(),
                                      make_white_noise(0.6, 8000, 2, 0.3));
  CHECK_THROWS_AS(mix(speech, wrong_rate, cfg, rng), std::invalid_argument);
}

TEST_CASE("mix output never leaves [-1, 1]") {
  auto pool = generate_config_pool(17, 10);
  const AudioBuffer speech = make_tone(300.0, 0.5, 16000, 0.99);
  for (auto& cfg : pool) {
    cfg.snr_db = 0.0;
    std::vector<AudioBuffer> noises(cfg.noise_positions.size(),
                                    make_tone(310.0, 0.7, 16000, 0.99));
    Rng rng(4);
    const AudioBuffer out = mix(speech, noises, cfg, rng);
    for (float v : out.samples) {
      CHECK(v <= 1.0f);
      CHECK(v >= -1.0f);
    }
  }
}

TEST_CASE("mix is deterministic given the rng seed") {
  auto pool = generate_config_pool(19, 10);
  const AudioBuffer speech = testutil::make_pseudo_speech(0.7, 16000, 12);
  const AudioBuffer noise = make_white_noise(0.9, 16000, 3, 0.4);
  for (auto& cfg : pool) {
    if (cfg.noise_positions.empty()) continue;
    std::vector<AudioBuffer> noises(cfg.noise_positions.size(), noise);
    Rng r1(88), r2(88);
    const AudioBuffer o1 = mix(speech, noises, cfg, r1);
    const AudioBuffer o2 = mix(speech, noises, cfg, r2);
    CHECK(o1.samples == o2.samples);
  }
}
