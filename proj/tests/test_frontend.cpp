#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "mdaudio/frontend.hpp"
#include "mdaudio/rng.hpp"

using namespace mdaudio;
using testutil::make_tone;
using testutil::TempDir;

namespace {

FeatureMatrix random_features(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  FeatureMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.frame_rate_hz = 100.0;
  m.values.resize(rows * cols);
  Rng rng(seed);
  for (auto& v : m.values) v = static_cast<float>(rng.uniform(-4.0, 4.0));
  return m;
}

}  // namespace

TEST_CASE("1 s at 16 kHz yields a 97 x 128 logmel matrix at 100 Hz") {
  const FrontendConfig cfg;
  const AudioBuffer x = testutil::make_pseudo_speech(1.0, 16000, 1);
  const FeatureMatrix feats = logmel(x, cfg);
  CHECK(feats.rows == 97);
  CHECK(feats.cols == 128);
  CHECK(feats.frame_rate_hz == 100.0);
}

TEST_CASE("frame count formula holds over random lengths") {
  const FrontendConfig cfg;
  Rng rng(6);
  for (int i = 0; i < 30; ++i) {
    const std::size_t n = 512 + rng.uniform_index(48000);
    AudioBuffer x;
    x.sample_rate_hz = 16000;
    x.samples.assign(n, 0.01f);
    CHECK(logmel(x, cfg).rows == 1 + (n - 512) / 160);
  }
  // shorter than one window: padded to exactly one frame
  AudioBuffer tiny;
  tiny.sample_rate_hz = 16000;
  tiny.samples.assign(100, 0.5f);
  CHECK(logmel(tiny, cfg).rows == 1);
}

TEST_CASE("all-zero audio produces the log floor everywhere") {
  const FrontendConfig cfg;
  AudioBuffer x;
  x.sample_rate_hz = 16000;
  x.samples.assign(16000, 0.0f);
  const FeatureMatrix feats = logmel(x, cfg);
  const float expected = static_cast<float>(std::log(cfg.log_floor));
  for (float v : feats.values) CHECK(v == expected);
}

TEST_CASE("a 1 kHz tone peaks in the filter nearest 1 kHz, in every frame") {
  const FrontendConfig cfg;
  const AudioBuffer x = make_tone(1000.0, 1.0, 16000, 0.9);
  const FeatureMatrix feats = logmel(x, cfg);

  const std::vector<double> centers = mel_center_frequencies(cfg);
  std::size_t nearest = 0;
  for (std::size_t k = 1; k < centers.size(); ++k) {
    if (std::abs(centers[k] - 1000.0) < std::abs(centers[nearest] - 1000.0)) nearest = k;
  }
  for (std::size_t r = 0; r < feats.rows; ++r) {
    std::size_t argmax = 0;
    for (std::size_t c = 1; c < feats.cols; ++c) {
      if (feats.at(r, c) > feats.at(r, argmax)) argmax = c;
    }
    CHECK(argmax == nearest);
  }
}

TEST_CASE("logmel rejects wrong rates and empty input") {
  const FrontendConfig cfg;
  AudioBuffer x;
  x.sample_rate_hz = 8000;
  x.samples.assign(8000, 0.1f);
  CHECK_THROWS_AS(logmel(x, cfg), std::invalid_argument);
  AudioBuffer empty;
  empty.sample_rate_hz = 16000;
  CHECK_THROWS_AS(logmel(empty, cfg), std::invalid_argument);
}

TEST_CASE("logmel is translation-covariant by one hop") {
  const FrontendConfig cfg;
  const AudioBuffer x = testutil::make_pseudo_speech(0.8, 16000, 33);
  AudioBuffer shifted;
  shifted.sample_rate_hz = 16000;
  shifted.samples.assign(x.samples.begin() + 160, x.samples.end());
  const FeatureMatrix a = logmel(x, cfg);
  const FeatureMatrix b = logmel(shifted, cfg);
  REQUIRE(b.rows == a.rows - 1);
  for (std::size_t r = 0; r < b.rows; ++r) {
    for (std::size_t c = 0; c < b.cols; ++c) {
      CHECK(b.at(r, c) == a.at(r + 1, c));
    }
  }
}

TEST_CASE("norm stats: degenerate cases") {
  NormStats stats;
  FeatureMatrix one;
  one.rows = 1;
  one.cols = 4;
  one.values = {1.0f, -2.0f, 3.5f, 0.0f};
  stats.add(one);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(stats.mean(c) == one.values[c]);
    CHECK(stats.stddev(c) == NormStats::kStdFloor);
  }

  NormStats two;
  FeatureMatrix pair;
  pair.rows = 2;
  pair.cols = 3;
  pair.values = {0.0f, 0.0f, 0.0f, 2.0f, 2.0f, 2.0f};
  two.add(pair);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK_THAT(two.mean(c), Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(two.stddev(c), Catch::Matchers::WithinAbs(1.0, 1e-12));
  }

  NormStats empty;
  CHECK_THROWS_AS(empty.stddev(0), std::logic_error);
}

TEST_CASE("streaming stats match a two-pass oracle over 10^4 frames") {
  std::vector<FeatureMatrix> mats;
  NormStats stats;
  for (int i = 0; i < 100; ++i) {
    mats.push_back(random_features(100, 16, 1000 + i));
    stats.add(mats.back());
  }
  const testutil::TwoPassStats oracle = testutil::two_pass_stats(mats);
  REQUIRE(stats.count() == 10000);
  for (std::size_t c = 0; c < 16; ++c) {
    CHECK_THAT(stats.mean(c), Catch::Matchers::WithinRel(oracle.mean[c], 1e-6));
    CHECK_THAT(stats.stddev(c), Catch::Matchers::WithinRel(oracle.stddev[c], 1e-6));
  }
}

TEST_CASE("per-worker accumulators merge exactly") {
  std::vector<FeatureMatrix> mats;
  for (int i = 0; i < 12; ++i) mats.push_back(random_features(37, 8, 50 + i));

  NormStats sequential;
  for (const auto& m : mats) sequential.add(m);

  NormStats a, b, c;
  for (int i = 0; i < 4; ++i) a.add(mats[i]);
  for (int i = 4; i < 9; ++i) b.add(mats[i]);
  for (int i = 9; i < 12; ++i) c.add(mats[i]);
  NormStats merged;
  merged.merge(a);
  merged.merge(b);
  merged.merge(c);

  REQUIRE(merged.count() == sequential.count());
  for (std::size_t k = 0; k < 8; ++k) {
    CHECK_THAT(merged.mean(k), Catch::Matchers::WithinRel(sequential.mean(k), 1e-9));
    CHECK_THAT(merged.stddev(k), Catch::Matchers::WithinRel(sequential.stddev(k), 1e-9));
  }
}

TEST_CASE("normalize: identity stats, simple arithmetic, self-normalization") {
  FeatureMatrix m = random_features(50, 8, 77);

  NormStats ident(8);
  FeatureMatrix unit;
  unit.rows = 2;
  unit.cols = 8;
  unit.values.assign(16, 0.0f);
  for (std::size_t c = 0; c < 8; ++c) {
    unit.values[c] = 1.0f;
    unit.values[8 + c] = -1.0f;
  }
  ident.add(unit);  // mean 0, std 1 per dimension
  const FeatureMatrix same = normalize(m, ident);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    CHECK_THAT(same.values[i], Catch::Matchers::WithinAbs(m.values[i], 1e-6));
  }

  // single value: (5 - 3) / 2 = 1
  NormStats s2(1);
  FeatureMatrix fit;
  fit.rows = 2;
  fit.cols = 1;
  fit.values = {1.0f, 5.0f};  // mean 3, std 2
  s2.add(fit);
  FeatureMatrix x;
  x.rows = 1;
  x.cols = 1;
  x.values = {5.0f};
  CHECK_THAT(normalize(x, s2).values[0], Catch::Matchers::WithinAbs(1.0, 1e-6));

  // normalizing the fitting corpus: mean ~0, std ~1
  NormStats own;
  own.add(m);
  const FeatureMatrix normed = normalize(m, own);
  std::vector<FeatureMatrix> single = {normed};
  const testutil::TwoPassStats after = testutil::two_pass_stats(single);
  for (std::size_t c = 0; c < 8; ++c) {
    CHECK(std::abs(after.mean[c]) <= 1e-6);
    CHECK(std::abs(after.stddev[c] - 1.0) <= 1e-6);
  }

  FeatureMatrix wrong = random_features(3, 5, 1);
  CHECK_THROWS_AS(normalize(wrong, own), std::invalid_argument);
}

TEST_CASE("stacking: 97 frames subsample to 33, dims go 128 -> 512") {
  const FrontendConfig cfg;
  const FeatureMatrix in = random_features(97, 128, 4);
  const FeatureMatrix out = stack_and_subsample(in, cfg);
  CHECK(out.rows == 33);
  CHECK(out.cols == 512);
  CHECK_THAT(out.frame_rate_hz, Catch::Matchers::WithinRel(100.0 / 3.0, 1e-12));
}

TEST_CASE("stacking a single frame replicates it four times") {
  const FrontendConfig cfg;
  const FeatureMatrix in = random_features(1, 128, 5);
  const FeatureMatrix out = stack_and_subsample(in, cfg);
  REQUIRE(out.rows == 1);
  REQUIRE(out.cols == 512);
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t c = 0; c < 128; ++c) {
      CHECK(out.at(0, s * 128 + c) == in.at(0, c));
    }
  }
}

TEST_CASE("stacked frames concatenate left context with edge replication") {
  FrontendConfig cfg;
  cfg.stack = 3;
  cfg.subsample = 2;
  const FeatureMatrix in = random_features(7, 2, 6);
  const FeatureMatrix out = stack_and_subsample(in, cfg);
  REQUIRE(out.rows == 4);  // ceil(7/2)
  REQUIRE(out.cols == 6);
  // output frame at t=2 stacks input frames [0, 1, 2]
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(out.at(1, 0 + c) == in.at(0, c));
    CHECK(out.at(1, 2 + c) == in.at(1, c));
    CHECK(out.at(1, 4 + c) == in.at(2, c));
  }
  // output frame at t=0 replicates frame 0 into the left context
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(out.at(0, 0 + c) == in.at(0, c));
    CHECK(out.at(0, 2 + c) == in.at(0, c));
    CHECK(out.at(0, 4 + c) == in.at(0, c));
  }
}

TEST_CASE("30 s of audio lands near the 33 Hz output rate") {
  const FrontendConfig cfg;
  const std::size_t n = 30 * 16000;
  const std::size_t frames = logmel_frame_count(n, 16000, cfg);
  CHECK(frames == 1 + (n - 512) / 160);  // 2997
  const std::size_t stacked = (frames + 2) / 3;
  CHECK(stacked == 999);
  CHECK(std::abs(static_cast<double>(stacked) - 30.0 * 100.0 / 3.0) <= 2.0);
}

TEST_CASE("full frontend composition stays finite") {
  const FrontendConfig cfg;
  Rng rng(10);
  NormStats stats;
  std::vector<FeatureMatrix> mels;
  for (int i = 0; i < 4; ++i) {
    const AudioBuffer x = testutil::make_pseudo_speech(0.3 + 0.2 * i, 16000, 100 + i);
    mels.push_back(logmel(x, cfg));
    stats.add(mels.back());
  }
  for (const auto& mel : mels) {
    const FeatureMatrix out = stack_and_subsample(normalize(mel, stats), cfg);
    CHECK(out.cols == 512);
    for (float v : out.values) CHECK(std::isfinite(v));
  }
}

TEST_CASE("LMFB file format round trips with the documented layout") {
  TempDir tmp("lmfb");
  const FeatureMatrix m = random_features(5, 3, 8);
  write_lmfb(tmp.file("a.lmfb"), m);

  // header bytes: magic, version, rows, cols, little-endian
  std::ifstream in(tmp.file("a.lmfb"), std::ios::binary);
  std::vector<unsigned char> head(16);
  in.read(reinterpret_cast<char*>(head.data()), 16);
  CHECK(std::string(head.begin(), head.begin() + 4) == "LMFB");
  auto u32 = [&head](std::size_t off) {
    return head[off] | (head[off + 1] << 8) | (head[off + 2] << 16) |
           (head[off + 3] << 24);
  };
  CHECK(u32(4) == 1u);
  CHECK(u32(8) == 5u);
  CHECK(u32(12) == 3u);

  const FeatureMatrix r = read_lmfb(tmp.file("a.lmfb"));
  CHECK(r.rows == m.rows);
  CHECK(r.cols == m.cols);
  CHECK(r.values == m.values);

  CHECK_THROWS(read_lmfb(tmp.file("missing.lmfb")));
  std::ofstream(tmp.file("bad.lmfb"), std::ios::binary) << "XXXX";
  CHECK_THROWS(read_lmfb(tmp.file("bad.lmfb")));
}

TEST_CASE("norm stats JSON round trip") {
  TempDir tmp("stats");
  NormStats stats;
  stats.add(random_features(64, 6, 3));
  stats.save_json(tmp.file("s.json"));
  const NormStats loaded = NormStats::load_json(tmp.file("s.json"));
  REQUIRE(loaded.dims() == 6);
  REQUIRE(loaded.count() == stats.count());
  for (std::size_t c = 0; c < 6; ++c) {
    CHECK_THAT(loaded.mean(c), Catch::Matchers::WithinRel(stats.mean(c), 1e-12));
    CHECK_THAT(loaded.stddev(c), Catch::Matchers::WithinRel(stats.stddev(c), 1e-9));
  }
  CHECK_THROWS(NormStats::load_json(tmp.file("missing.json")));
}
