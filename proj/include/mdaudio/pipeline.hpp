#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mdaudio/audio.hpp"
#include "mdaudio/bounded_queue.hpp"
#include "mdaudio/codec.hpp"
#include "mdaudio/frontend.hpp"
#include "mdaudio/manifest.hpp"
#include "mdaudio/perturb.hpp"
#include "mdaudio/resample.hpp"
#include "mdaudio/rng.hpp"
#include "mdaudio/roomsim.hpp"

namespace mdaudio {

// Per-domain perturbation probabilities. Each stage is applied independently
// with its own probability.
struct DomainPolicy {
  double noise_prob = 0.0;
  double bandwidth_prob = 0.0;
  double codec_prob = 0.0;

  void validate() const {
    for (double p : {noise_prob, bandwidth_prob, codec_prob}) {
      if (p < 0.0 || p > 1.0) {
        throw std::invalid_argument("policy: probability out of [0, 1]");
      }
    }
  }
};

struct PerturbationPolicy {
  std::map<std::string, DomainPolicy> domains;
  std::string config_pool_path;
  std::string noise_manifest_path;
  std::uint64_t master_seed = 0;
  bool codec_on_8k = false;   // native 8 kHz inputs skip codec simulation
  bool iid_sampling = false;  // i.i.d. draws instead of shuffled epochs

  const DomainPolicy& for_domain(const std::string& domain) const {
    auto it = domains.find(domain);
    if (it == domains.end()) {
      throw std::runtime_error("policy: unknown domain '" + domain + "'");
    }
    return it->second;
  }
};

inline PerturbationPolicy policy_from_json(const nlohmann::json& j) {
  PerturbationPolicy policy;
  for (const auto& [domain, probs] : j.at("domains").items()) {
    DomainPolicy p;
    p.noise_prob = probs.value("noise_prob", 0.0);
    p.bandwidth_prob = probs.value("bandwidth_prob", 0.0);
    p.codec_prob = probs.value("codec_prob", 0.0);
    p.validate();
    policy.domains[domain] = p;
  }
  policy.config_pool_path = j.value("config_pool_path", "");
  policy.noise_manifest_path = j.value("noise_manifest_path", "");
  policy.master_seed = j.value("master_seed", 0ULL);
  policy.codec_on_8k = j.value("codec_on_8k", false);
  policy.iid_sampling = j.value("iid_sampling", false);
  return policy;
}

inline nlohmann::json policy_to_json(const PerturbationPolicy& policy) {
  nlohmann::json domains = nlohmann::json::object();
  for (const auto& [domain, p] : policy.domains) {
    domains[domain] = {{"noise_prob", p.noise_prob},
                       {"bandwidth_prob", p.bandwidth_prob},
                       {"codec_prob", p.codec_prob}};
  }
  return nlohmann::json{{"domains", domains},
                        {"config_pool_path", policy.config_pool_path},
                        {"noise_manifest_path", policy.noise_manifest_path},
                        {"master_seed", policy.master_seed},
                        {"codec_on_8k", policy.codec_on_8k},
                        {"iid_sampling", policy.iid_sampling}};
}

inline PerturbationPolicy load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("policy: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("policy: " + path + ": " + e.what());
  }
  return policy_from_json(j);
}

inline void save_policy(const std::string& path, const PerturbationPolicy& policy) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("policy: cannot write " + path);
  out << policy_to_json(policy).dump(2) << '\n';
}

// The mixing condition drawn for one utterance. Together with the config
// pool, noise corpus and codec backend it fully determines the perturbed
// waveform; mix_seed pins the noise snippet choices and offsets.
struct PerturbationTrace {
  std::string utterance_id;
  std::optional<std::size_t> noise_config_index;
  bool bandwidth_applied = false;
  CodecCondition codec = CodecCondition::kNone;
  std::uint64_t mix_seed = 0;

  bool operator==(const PerturbationTrace&) const = default;

  bool is_identity() const {
    return !noise_config_index && !bandwidth_applied && codec == CodecCondition::kNone;
  }
};

inline nlohmann::json trace_to_json(const PerturbationTrace& t) {
  nlohmann::json j{{"id", t.utterance_id},
                   {"bandwidth", t.bandwidth_applied},
                   {"codec", codec_condition_name(t.codec)},
                   {"mix_seed", t.mix_seed}};
  if (t.noise_config_index) {
    j["noise_config"] = *t.noise_config_index;
  } else {
    j["noise_config"] = nullptr;
  }
  return j;
}

inline PerturbationTrace trace_from_json(const nlohmann::json& j) {
  PerturbationTrace t;
  t.utterance_id = j.at("id").get<std::string>();
  if (!j.at("noise_config").is_null()) {
    t.noise_config_index = j.at("noise_config").get<std::size_t>();
  }
  t.bandwidth_applied = j.at("bandwidth").get<bool>();
  t.codec = codec_condition_from_name(j.at("codec").get<std::string>());
  t.mix_seed = j.at("mix_seed").get<std::uint64_t>();
  return t;
}

inline void save_traces(const std::string& path,
                        const std::vector<PerturbationTrace>& traces) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("trace: cannot write " + path);
  for (const auto& t : traces) out << trace_to_json(t).dump() << '\n';
}

inline std::vector<PerturbationTrace> load_traces(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("trace: cannot open " + path);
  std::vector<PerturbationTrace> traces;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    traces.push_back(trace_from_json(nlohmann::json::parse(line)));
  }
  return traces;
}

// Loaded resources the perturbation stages draw from.
struct PerturbationPools {
  std::vector<NoiseConfig> configs;
  std::vector<AudioBuffer> noise_snippets;  // 16 kHz, in memory
  std::shared_ptr<const CodecBackend> backend;
};

inline std::string resolve_relative(const std::string& base_file,
                                    const std::string& path) {
  namespace fs = std::filesystem;
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_file).parent_path() / path).string();
}

// Loads the config pool and noise corpus named by the policy. Noise snippets
// are resampled to 16 kHz once, up front.
inline PerturbationPools load_pools(const PerturbationPolicy& policy) {
  PerturbationPools pools;
  if (!policy.config_pool_path.empty()) {
    pools.configs = load_config_pool(policy.config_pool_path);
  }
  if (!policy.noise_manifest_path.empty()) {
    for (const auto& rec : load_manifest(policy.noise_manifest_path)) {
      AudioBuffer noise =
          read_wav(resolve_relative(policy.noise_manifest_path, rec.audio_path));
      if (noise.sample_rate_hz != 16000) noise = resample(noise, 16000);
      pools.noise_snippets.push_back(std::move(noise));
    }
  }
  pools.backend = make_default_codec_backend();
  return pools;
}

// Draws one trace: each perturbation is included independently with its
// domain's probability, the noise config uniformly from the pool, and the
// codec condition uniformly over the 7 conditions when the codec stage runs.
inline PerturbationTrace sample_perturbation(const UtteranceRecord& record,
                                             const PerturbationPolicy& policy,
                                             std::size_t pool_size, Rng& rng) {
  const DomainPolicy& p = policy.for_domain(record.domain);
  PerturbationTrace trace;
  trace.utterance_id = record.id;
  const bool is_16k = record.sample_rate_hz == 16000;

  if (p.noise_prob > 0.0 && pool_size == 0) {
    throw std::runtime_error("sample_perturbation: noise enabled but config pool is empty");
  }
  if (p.noise_prob > 0.0 && rng.bernoulli(p.noise_prob)) {
    trace.noise_config_index = rng.uniform_index(pool_size);
    trace.mix_seed = rng.next_u64();
  }
  if (is_16k && p.bandwidth_prob > 0.0 && rng.bernoulli(p.bandwidth_prob)) {
    trace.bandwidth_applied = true;
  }
  if ((is_16k || policy.codec_on_8k) && p.codec_prob > 0.0 &&
      rng.bernoulli(p.codec_prob)) {
    trace.codec = sample_codec_condition(rng);
  }
  return trace;
}

// Count of distinct traces one utterance can receive under a domain policy.
// Stages with probability 0 contribute one state (off); a certain stage
// contributes only its on-states.
inline std::uint64_t condition_space_size(const DomainPolicy& p,
                                          std::uint64_t pool_size) {
  std::uint64_t noise = 1;
  if (p.noise_prob > 0.0 && pool_size > 0) {
    noise = p.noise_prob >= 1.0 ? pool_size : pool_size + 1;
  }
  const std::uint64_t bandwidth =
      p.bandwidth_prob <= 0.0 ? 1 : (p.bandwidth_prob >= 1.0 ? 1 : 2);
  const std::uint64_t codec =
      p.codec_prob <= 0.0 ? 1 : kAllCodecConditions.size();
  return noise * bandwidth * codec;
}

inline std::uint64_t condition_space_size(const PerturbationPolicy& policy,
                                          const std::string& domain,
                                          std::uint64_t pool_size) {
  return condition_space_size(policy.for_domain(domain), pool_size);
}

namespace pipeline_detail {

struct StageTimers {
  std::vector<double>* noise_ms = nullptr;
  std::vector<double>* bandwidth_ms = nullptr;
  std::vector<double>* codec_ms = nullptr;
};

template <typename F>
inline void timed(std::vector<double>* sink, F&& f) {
  if (sink == nullptr) {
    f();
    return;
  }
  const auto t0 = std::chrono::steady_clock::now();
  f();
  sink->push_back(std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count());
}

inline AudioBuffer apply_trace_impl(const AudioBuffer& audio,
                                    const PerturbationTrace& trace,
                                    const PerturbationPools& pools,
                                    const StageTimers& timers) {
  AudioBuffer out = audio;
  if (trace.noise_config_index) {
    timed(timers.noise_ms, [&] {
      const NoiseConfig& config = pools.configs.at(*trace.noise_config_index);
      Rng mix_rng(trace.mix_seed);
      std::vector<AudioBuffer> noises;
      if (!config.noise_positions.empty() && pools.noise_snippets.empty()) {
        throw std::runtime_error("apply_trace: config has noise sources but the noise corpus is empty");
      }
      for (std::size_t i = 0; i < config.noise_positions.size(); ++i) {
        AudioBuffer snippet = pools.noise_snippets[mix_rng.uniform_index(pools.noise_snippets.size())];
        if (snippet.sample_rate_hz != out.sample_rate_hz) {
          snippet = resample(snippet, out.sample_rate_hz);
        }
        noises.push_back(std::move(snippet));
      }
      out = mix(out, noises, config, mix_rng);
    });
  }
  if (trace.bandwidth_applied) {
    timed(timers.bandwidth_ms, [&] { out = bandwidth_roundtrip(out); });
  }
  if (trace.codec != CodecCondition::kNone) {
    timed(timers.codec_ms, [&] {
      if (pools.backend == nullptr) {
        throw std::runtime_error("apply_trace: no codec backend configured");
      }
      out = apply_codec(out, trace.codec, *pools.backend);
    });
  }
  return out;
}

}  // namespace pipeline_detail

// Replays a trace: noise, then sample rate, then codec.
inline AudioBuffer apply_trace(const AudioBuffer& audio, const PerturbationTrace& trace,
                               const PerturbationPools& pools) {
  return pipeline_detail::apply_trace_impl(audio, trace, pools, {});
}

// ---------------------------------------------------------------------------
// Asynchronous feature pipeline
// ---------------------------------------------------------------------------

struct PipelineItem {
  std::string utterance_id;
  std::uint64_t epoch = 0;
  PerturbationTrace trace;
  FeatureMatrix features;  // stacked rows x 512
};

using PipelineBatch = std::vector<PipelineItem>;
using FeatureQueue = BoundedQueue<PipelineBatch>;

struct PipelineOptions {
  int workers = 1;
  std::uint64_t epochs = 1;
  std::size_t queue_capacity = 64;  // batches
  std::size_t batch_size = 8;      // utterances per batch
  const NormStats* norm_stats = nullptr;  // optional global normalization
};

struct StageLatency {
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double p99_ms = 0.0;
  std::uint64_t count = 0;
};

struct RunReport {
  std::uint64_t utterances_consumed = 0;
  std::uint64_t frames_consumed = 0;
  std::uint64_t skipped = 0;
  std::uint64_t dropped = 0;
  double elapsed_s = 0.0;
  double utterances_per_s = 0.0;
  double frames_per_s = 0.0;
  double queue_full_fraction = 0.0;
  std::size_t queue_high_water = 0;
  std::size_t queue_capacity = 0;
  std::map<std::string, StageLatency> stage_latency;

  nlohmann::json to_json() const {
    nlohmann::json stages = nlohmann::json::object();
    for (const auto& [name, s] : stage_latency) {
      stages[name] = {{"p50_ms", s.p50_ms},
                      {"p95_ms", s.p95_ms},
                      {"p99_ms", s.p99_ms},
                      {"count", s.count}};
    }
    return nlohmann::json{{"utterances_consumed", utterances_consumed},
                          {"frames_consumed", frames_consumed},
                          {"skipped", skipped},
                          {"dropped", dropped},
                          {"elapsed_s", elapsed_s},
                          {"utterances_per_s", utterances_per_s},
                          {"frames_per_s", frames_per_s},
                          {"queue_full_fraction", queue_full_fraction},
                          {"queue_high_water", queue_high_water},
                          {"queue_capacity", queue_capacity},
                          {"stages", stages}};
  }
};

namespace pipeline_detail {

inline double percentile(std::vector<double>& values, double pct) {
  if (values.empty()) return 0.0;
  const double pos = pct / 100.0 * static_cast<double>(values.size() - 1);
  std::size_t idx = static_cast<std::size_t>(pos + 0.5);
  if (idx >= values.size()) idx = values.size() - 1;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(idx),
                   values.end());
  return values[idx];
}

struct WorkerTimings {
  std::vector<double> load_ms, noise_ms, bandwidth_ms, codec_ms, frontend_ms;
};

}  // namespace pipeline_detail

// Runs the full data pathway: seeded shuffled epochs, per-utterance
// perturbation, on-the-fly features, and a bounded queue between producer
// workers and the consumer. Item content depends only on
// (master_seed, utterance id, epoch), never on worker count or scheduling.
inline RunReport run_pipeline(const PooledDataset& dataset,
                              const PerturbationPolicy& policy,
                              const FrontendConfig& frontend,
                              const PerturbationPools& pools,
                              const PipelineOptions& options,
                              const std::function<void(const PipelineItem&)>& consume) {
  if (options.workers < 1) throw std::invalid_argument("run_pipeline: workers must be >= 1");
  if (options.queue_capacity < 1) {
    throw std::invalid_argument("run_pipeline: queue capacity must be >= 1");
  }
  if (options.batch_size < 1) {
    throw std::invalid_argument("run_pipeline: batch size must be >= 1");
  }
  for (const std::string& domain : dataset.domains) {
    policy.for_domain(domain);  // fail fast on uncovered domains
  }

  // (epoch, record index) work list; every utterance appears exactly once
  // per epoch in a seeded shuffled order.
  std::vector<std::pair<std::uint64_t, std::size_t>> work;
  work.reserve(dataset.records.size() * options.epochs);
  for (std::uint64_t epoch = 0; epoch < options.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(policy.master_seed, "__epoch_order__", epoch));
    std::vector<std::size_t> order(dataset.records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (policy.iid_sampling) {
      for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = shuffle_rng.uniform_index(order.size());
      }
    } else {
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
      }
    }
    for (std::size_t idx : order) work.emplace_back(epoch, idx);
  }

  FeatureQueue queue(options.queue_capacity);
  std::atomic<std::size_t> cursor{0};
  std::atomic<std::uint64_t> skipped{0};
  std::vector<pipeline_detail::WorkerTimings> timings(
      static_cast<std::size_t>(options.workers));

  const auto t_start = std::chrono::steady_clock::now();

  auto worker = [&](int worker_id) {
    auto& tm = timings[static_cast<std::size_t>(worker_id)];
    pipeline_detail::StageTimers timers{&tm.noise_ms, &tm.bandwidth_ms, &tm.codec_ms};
    PipelineBatch batch;
    for (;;) {
      const std::size_t slot = cursor.fetch_add(1);
      if (slot >= work.size()) break;
      const auto [epoch, rec_idx] = work[slot];
      const UtteranceRecord& rec = dataset.records[rec_idx];
      try {
        Rng rng(derive_seed(policy.master_seed, rec.id, epoch));
        PerturbationTrace trace =
            sample_perturbation(rec, policy, pools.configs.size(), rng);

        AudioBuffer audio;
        pipeline_detail::timed(&tm.load_ms, [&] {
          audio = read_wav(rec.audio_path);
          if (audio.sample_rate_hz == 8000) audio = resample(audio, 16000);
          if (audio.sample_rate_hz != 16000) {
            throw std::runtime_error("unsupported sample rate in " + rec.audio_path);
          }
        });
        AudioBuffer perturbed =
            pipeline_detail::apply_trace_impl(audio, trace, pools, timers);

        PipelineItem item;
        item.utterance_id = rec.id;
        item.epoch = epoch;
        item.trace = std::move(trace);
        pipeline_detail::timed(&tm.frontend_ms, [&] {
          FeatureMatrix mel = logmel(perturbed, frontend);
          if (options.norm_stats != nullptr) mel = normalize(mel, *options.norm_stats);
          item.features = stack_and_subsample(mel, frontend);
        });
        batch.push_back(std::move(item));
        if (batch.size() >= options.batch_size) {
          if (!queue.push(std::move(batch))) return;  // queue closed early
          batch = PipelineBatch();
        }
      } catch (const std::exception&) {
        skipped.fetch_add(1);
      }
    }
    if (!batch.empty()) queue.push(std::move(batch));
  };

  std::uint64_t consumed = 0, frames = 0;
  std::thread consumer([&] {
    while (auto batch = queue.pop()) {
      for (const PipelineItem& item : *batch) {
        ++consumed;
        frames += item.features.rows;
        if (consume) consume(item);
      }
    }
  });

  std::vector<std::thread> producers;
  producers.reserve(static_cast<std::size_t>(options.workers));
  for (int w = 0; w < options.workers; ++w) producers.emplace_back(worker, w);
  for (auto& t : producers) t.join();
  queue.close();
  consumer.join();
  const std::uint64_t dropped = queue.drain();

  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  RunReport report;
  report.utterances_consumed = consumed;
  report.frames_consumed = frames;
  report.skipped = skipped.load();
  report.dropped = dropped;
  report.elapsed_s = elapsed;
  report.utterances_per_s = elapsed > 0 ? consumed / elapsed : 0.0;
  report.frames_per_s = elapsed > 0 ? frames / elapsed : 0.0;
  report.queue_high_water = queue.high_water();
  report.queue_capacity = queue.capacity();
  report.queue_full_fraction =
      elapsed > 0 ? static_cast<double>(queue.blocked_push_ns()) /
                        (1e9 * elapsed * options.workers)
                  : 0.0;

  auto collect = [&](const char* name, auto member) {
    std::vector<double> all;
    for (auto& tm : timings) {
      auto& src = tm.*member;
      all.insert(all.end(), src.begin(), src.end());
    }
    StageLatency lat;
    lat.count = all.size();
    if (!all.empty()) {
      lat.p50_ms = pipeline_detail::percentile(all, 50.0);
      lat.p95_ms = pipeline_detail::percentile(all, 95.0);
      lat.p99_ms = pipeline_detail::percentile(all, 99.0);
    }
    report.stage_latency[name] = lat;
  };
  collect("load", &pipeline_detail::WorkerTimings::load_ms);
  collect("noise", &pipeline_detail::WorkerTimings::noise_ms);
  collect("bandwidth", &pipeline_detail::WorkerTimings::bandwidth_ms);
  collect("codec", &pipeline_detail::WorkerTimings::codec_ms);
  collect("frontend", &pipeline_detail::WorkerTimings::frontend_ms);
  return report;
}

}  // namespace mdaudio
