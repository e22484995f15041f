// Command-line surface for the multidomain training data pathway. Every
// randomized subcommand takes an explicit --seed (the pipeline's seed lives
// in the policy file) so each run is bytewise reproducible.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mdaudio/mdaudio.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<mdaudio::UtteranceRecord> load_manifest_resolved(const std::string& path) {
  std::vector<mdaudio::UtteranceRecord> records = mdaudio::load_manifest(path);
  for (auto& r : records) r.audio_path = mdaudio::resolve_relative(path, r.audio_path);
  return records;
}

mdaudio::PerturbationPolicy load_policy_resolved(const std::string& path) {
  mdaudio::PerturbationPolicy policy = mdaudio::load_policy(path);
  policy.config_pool_path = mdaudio::resolve_relative(path, policy.config_pool_path);
  policy.noise_manifest_path =
      mdaudio::resolve_relative(path, policy.noise_manifest_path);
  return policy;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

int run_gen_configs(std::uint64_t seed, std::size_t count, const std::string& out_path) {
  const auto pool = mdaudio::generate_config_pool(seed, count);
  mdaudio::save_config_pool(out_path, pool);
  std::cout << "wrote " << pool.size() << " configs to " << out_path
            << " (seed=" << seed << ")\n";
  return 0;
}

int run_stats(const std::vector<std::string>& manifests, const std::string& csv_path) {
  std::map<std::string, std::vector<mdaudio::UtteranceRecord>> by_domain;
  for (const auto& path : manifests) {
    for (auto& rec : load_manifest_resolved(path)) {
      by_domain[rec.domain].push_back(std::move(rec));
    }
  }
  const mdaudio::PooledDataset pooled = mdaudio::pool_domains(by_domain);
  const auto rows = mdaudio::domain_stats(pooled);
  std::cout << mdaudio::format_domain_stats(rows);
  if (!csv_path.empty()) {
    std::string csv = "domain,utterances,hours\n";
    for (const auto& r : rows) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%zu,%.6f", r.utterances, r.hours);
      csv += r.domain + "," + buf + "\n";
    }
    write_text_file(csv_path, csv);
  }
  return 0;
}

int run_augment(const std::string& manifest_path, const std::string& policy_path,
                const std::string& out_dir, std::uint64_t seed,
                std::string trace_path, const std::string& replay_path) {
  const auto records = load_manifest_resolved(manifest_path);
  mdaudio::PerturbationPolicy policy = load_policy_resolved(policy_path);
  policy.master_seed = seed;
  const mdaudio::PerturbationPools pools = mdaudio::load_pools(policy);

  fs::create_directories(out_dir);
  if (trace_path.empty()) trace_path = (fs::path(out_dir) / "traces.jsonl").string();

  std::map<std::string, mdaudio::PerturbationTrace> replay;
  if (!replay_path.empty()) {
    for (auto& t : mdaudio::load_traces(replay_path)) replay[t.utterance_id] = t;
  }

  std::vector<mdaudio::PerturbationTrace> traces;
  traces.reserve(records.size());
  for (const auto& rec : records) {
    mdaudio::PerturbationTrace trace;
    if (!replay_path.empty()) {
      auto it = replay.find(rec.id);
      if (it == replay.end()) {
        throw std::runtime_error("replay trace missing utterance '" + rec.id + "'");
      }
      trace = it->second;
    } else {
      mdaudio::Rng rng(mdaudio::derive_seed(seed, rec.id, 0));
      trace = mdaudio::sample_perturbation(rec, policy, pools.configs.size(), rng);
    }
    const mdaudio::AudioBuffer audio = mdaudio::read_wav(rec.audio_path);
    const mdaudio::AudioBuffer out = mdaudio::apply_trace(audio, trace, pools);
    mdaudio::write_wav((fs::path(out_dir) / (rec.id + ".wav")).string(), out);
    traces.push_back(std::move(trace));
  }
  mdaudio::save_traces(trace_path, traces);
  std::cout << "augmented " << records.size() << " utterances into " << out_dir
            << " (trace log: " << trace_path << ")\n";
  return 0;
}

int run_featurize(const std::string& manifest_path, const std::string& out_dir,
                  const mdaudio::FrontendConfig& frontend, bool raw,
                  const std::string& stats_path, const std::string& fit_stats_path) {
  const auto records = load_manifest_resolved(manifest_path);
  if (!stats_path.empty() && !fit_stats_path.empty()) {
    throw std::runtime_error("--stats and --fit-stats are mutually exclusive");
  }
  if (out_dir.empty() && fit_stats_path.empty()) {
    throw std::runtime_error("featurize: nothing to do; pass --out-dir and/or --fit-stats");
  }

  auto load_features = [&](const mdaudio::UtteranceRecord& rec) {
    mdaudio::AudioBuffer audio = mdaudio::read_wav(rec.audio_path);
    if (audio.sample_rate_hz != 16000) audio = mdaudio::resample(audio, 16000);
    return mdaudio::logmel(audio, frontend);
  };

  mdaudio::NormStats stats;
  bool normalize = false;
  if (!stats_path.empty()) {
    stats = mdaudio::NormStats::load_json(stats_path);  // errors if missing
    normalize = true;
  } else if (!fit_stats_path.empty()) {
    for (const auto& rec : records) stats.add(load_features(rec));
    stats.save_json(fit_stats_path);
    normalize = true;
    std::cout << "fit normalization stats over " << stats.count() << " frames -> "
              << fit_stats_path << "\n";
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    for (const auto& rec : records) {
      mdaudio::FeatureMatrix mel = load_features(rec);
      if (normalize) mel = mdaudio::normalize(mel, stats);
      const mdaudio::FeatureMatrix out =
          raw ? std::move(mel) : mdaudio::stack_and_subsample(mel, frontend);
      mdaudio::write_lmfb((fs::path(out_dir) / (rec.id + ".lmfb")).string(), out);
    }
    std::cout << "featurized " << records.size() << " utterances into " << out_dir
              << (raw ? " (raw logmel)" : " (stacked)") << "\n";
  }
  return 0;
}

int run_pipeline_cmd(const std::string& manifest_path, const std::string& policy_path,
                     const mdaudio::FrontendConfig& frontend, int workers,
                     std::uint64_t epochs, std::size_t capacity, std::size_t batch,
                     bool seed_given, std::uint64_t seed, const std::string& stats_path,
                     const std::string& report_path, const std::string& out_dir) {
  const auto records = load_manifest_resolved(manifest_path);
  mdaudio::PerturbationPolicy policy = load_policy_resolved(policy_path);
  if (seed_given) policy.master_seed = seed;
  const mdaudio::PerturbationPools pools = mdaudio::load_pools(policy);
  const mdaudio::PooledDataset dataset = mdaudio::pool_records(records);

  mdaudio::NormStats stats;
  mdaudio::PipelineOptions options;
  options.workers = workers;
  options.epochs = epochs;
  options.queue_capacity = capacity;
  options.batch_size = batch;
  if (!stats_path.empty()) {
    stats = mdaudio::NormStats::load_json(stats_path);
    options.norm_stats = &stats;
  }

  std::function<void(const mdaudio::PipelineItem&)> sink;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    sink = [&out_dir](const mdaudio::PipelineItem& item) {
      const std::string name =
          item.utterance_id + ".epoch" + std::to_string(item.epoch) + ".lmfb";
      mdaudio::write_lmfb((fs::path(out_dir) / name).string(), item.features);
    };
  }

  const mdaudio::RunReport report =
      mdaudio::run_pipeline(dataset, policy, frontend, pools, options, sink);
  nlohmann::json j = report.to_json();
  j["master_seed"] = policy.master_seed;
  j["workers"] = workers;
  j["epochs"] = epochs;
  if (!report_path.empty()) {
    write_text_file(report_path, j.dump(2) + "\n");
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_analyze(const std::string& manifest_path, const std::string& embeddings_path,
                const std::string& target, std::size_t n, std::uint64_t seed,
                const mdaudio::FrontendConfig& frontend, const std::string& out_path,
                const std::string& csv_path) {
  mdaudio::PairwiseReport report;
  if (!embeddings_path.empty()) {
    // external embedder: sample n per domain from a precomputed JSONL
    const auto all = mdaudio::load_embeddings(embeddings_path);
    std::map<std::string, std::vector<const mdaudio::Embedding*>> by_domain;
    for (const auto& e : all) by_domain[e.domain].push_back(&e);
    std::vector<mdaudio::Embedding> sampled;
    for (const auto& [domain, members] : by_domain) {
      if (members.size() < n) {
        throw std::runtime_error("analyze: domain '" + domain + "' has only " +
                                 std::to_string(members.size()) +
                                 " embeddings, need " + std::to_string(n));
      }
      std::vector<std::size_t> order(members.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      mdaudio::Rng rng(mdaudio::derive_seed(seed, domain, 0));
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.uniform_index(i)]);
      }
      for (std::size_t i = 0; i < n; ++i) sampled.push_back(*members[order[i]]);
    }
    report = mdaudio::pairwise_report_from_embeddings(sampled, target, n, seed);
  } else {
    const auto records = load_manifest_resolved(manifest_path);
    const mdaudio::PooledDataset dataset = mdaudio::pool_records(records);
    report = mdaudio::pairwise_report(dataset, target, n, seed, frontend);
  }
  const std::string text = report.to_text();
  if (!out_path.empty()) {
    write_text_file(out_path, text);
  } else {
    std::cout << text;
  }
  if (!csv_path.empty()) write_text_file(csv_path, report.to_csv());
  return 0;
}

void add_frontend_flags(CLI::App* cmd, mdaudio::FrontendConfig* cfg) {
  cmd->add_option("--window-ms", cfg->window_ms, "analysis window (ms)");
  cmd->add_option("--hop-ms", cfg->hop_ms, "frame shift (ms)");
  cmd->add_option("--num-mel", cfg->num_mel, "mel filterbank size");
  cmd->add_option("--fmin", cfg->fmin_hz, "lowest filterbank frequency (Hz)");
  cmd->add_option("--fmax", cfg->fmax_hz, "highest filterbank frequency (Hz)");
  cmd->add_option("--stack", cfg->stack, "frames stacked per output");
  cmd->add_option("--subsample", cfg->subsample, "frame subsampling factor");
  cmd->add_option("--log-floor", cfg->log_floor, "filterbank energy floor");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mdaudio: multidomain speech training data pathway"};
  app.require_subcommand(1);

  // gen-configs
  auto* gen = app.add_subcommand("gen-configs", "generate a noise config pool (JSONL)");
  std::uint64_t gen_seed = 0;
  std::size_t gen_count = 0;
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "RNG seed")->required();
  gen->add_option("--count", gen_count, "number of configs")
      ->required()
      ->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "output JSONL path")->required();

  // stats
  auto* stats = app.add_subcommand("stats", "per-domain corpus statistics");
  std::vector<std::string> stats_manifests;
  std::string stats_csv;
  stats->add_option("manifests", stats_manifests, "manifest JSONL files")
      ->required()
      ->expected(-1);
  stats->add_option("--csv", stats_csv, "also write CSV to this path");

  // augment
  auto* aug = app.add_subcommand("augment", "write perturbed WAVs plus a trace log");
  std::string aug_manifest, aug_policy, aug_out, aug_trace, aug_replay;
  std::uint64_t aug_seed = 0;
  aug->add_option("--manifest", aug_manifest, "utterance manifest")->required();
  aug->add_option("--policy", aug_policy, "perturbation policy JSON")->required();
  aug->add_option("--out-dir", aug_out, "output directory")->required();
  aug->add_option("--seed", aug_seed, "master seed")->required();
  aug->add_option("--trace", aug_trace, "trace log path (default <out-dir>/traces.jsonl)");
  aug->add_option("--replay", aug_replay, "replay an existing trace log instead of sampling");

  // featurize
  auto* feat = app.add_subcommand("featurize", "extract LMFB feature files");
  std::string feat_manifest, feat_out, feat_stats, feat_fit_stats;
  bool feat_raw = false;
  mdaudio::FrontendConfig feat_cfg;
  feat->add_option("--manifest", feat_manifest, "utterance manifest")->required();
  feat->add_option("--out-dir", feat_out, "output directory for .lmfb files");
  feat->add_flag("--raw", feat_raw, "write raw logmel (no stacking/subsampling)");
  feat->add_option("--stats", feat_stats, "normalization stats JSON (normalized mode)");
  feat->add_option("--fit-stats", feat_fit_stats, "fit normalization stats and write here");
  add_frontend_flags(feat, &feat_cfg);

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "run the asynchronous feature pipeline");
  std::string pipe_manifest, pipe_policy, pipe_stats, pipe_report, pipe_out;
  int pipe_workers = 1;
  std::uint64_t pipe_epochs = 1, pipe_seed = 0;
  std::size_t pipe_capacity = 64, pipe_batch = 8;
  mdaudio::FrontendConfig pipe_cfg;
  pipe->add_option("--manifest", pipe_manifest, "utterance manifest")->required();
  pipe->add_option("--policy", pipe_policy, "perturbation policy JSON")->required();
  pipe->add_option("--workers", pipe_workers, "producer worker threads")
      ->check(CLI::PositiveNumber);
  pipe->add_option("--epochs", pipe_epochs, "epochs over the dataset");
  pipe->add_option("--capacity", pipe_capacity, "queue capacity (batches)");
  pipe->add_option("--batch", pipe_batch, "utterances per batch");
  auto* pipe_seed_opt = pipe->add_option("--seed", pipe_seed, "override policy master seed");
  pipe->add_option("--stats", pipe_stats, "normalization stats JSON");
  pipe->add_option("--report", pipe_report, "write the run report JSON here");
  pipe->add_option("--out-dir", pipe_out, "write consumed features here (optional)");
  add_frontend_flags(pipe, &pipe_cfg);

  // analyze
  auto* ana = app.add_subcommand("analyze", "pairwise domain clustering report");
  std::string ana_manifest, ana_embeddings, ana_target, ana_out, ana_csv;
  std::size_t ana_n = 50;
  std::uint64_t ana_seed = 0;
  mdaudio::FrontendConfig ana_cfg;
  auto* ana_manifest_opt = ana->add_option("--manifest", ana_manifest, "utterance manifest");
  ana->add_option("--embeddings", ana_embeddings,
                  "precomputed embeddings JSONL (skips audio + projector)")
      ->excludes(ana_manifest_opt);
  ana->add_option("--target", ana_target, "target domain")->required();
  ana->add_option("--n", ana_n, "utterances sampled per domain")
      ->check(CLI::PositiveNumber);
  ana->add_option("--seed", ana_seed, "sampling seed")->required();
  ana->add_option("--out", ana_out, "write the text report here (default stdout)");
  ana->add_option("--csv", ana_csv, "also write CSV to this path");
  add_frontend_flags(ana, &ana_cfg);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_gen_configs(gen_seed, gen_count, gen_out);
    if (stats->parsed()) return run_stats(stats_manifests, stats_csv);
    if (aug->parsed()) {
      return run_augment(aug_manifest, aug_policy, aug_out, aug_seed, aug_trace,
                         aug_replay);
    }
    if (feat->parsed()) {
      return run_featurize(feat_manifest, feat_out, feat_cfg, feat_raw, feat_stats,
                           feat_fit_stats);
    }
    if (pipe->parsed()) {
      return run_pipeline_cmd(pipe_manifest, pipe_policy, pipe_cfg, pipe_workers,
                              pipe_epochs, pipe_capacity, pipe_batch,
                              pipe_seed_opt->count() > 0, pipe_seed, pipe_stats,
                              pipe_report, pipe_out);
    }
    if (ana->parsed()) {
      if (ana_manifest.empty() && ana_embeddings.empty()) {
        std::cerr << "error: analyze needs --manifest or --embeddings\n";
        return 1;
      }
      return run_analyze(ana_manifest, ana_embeddings, ana_target, ana_n, ana_seed,
                         ana_cfg, ana_out, ana_csv);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
