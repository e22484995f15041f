#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

namespace mdaudio {

struct UtteranceRecord {
  std::string id;
  std::string audio_path;
  std::string domain;
  int sample_rate_hz = 16000;
  double duration_s = 0.0;
  // Carried through for round trips; this library never consumes it.
  std::optional<std::string> transcript;

  bool operator==(const UtteranceRecord&) const = default;
};

struct PooledDataset {
  std::vector<UtteranceRecord> records;
  std::set<std::string> domains;
};

struct DomainStatsRow {
  std::string domain;
  std::size_t utterances = 0;
  double hours = 0.0;
};

namespace detail {

inline UtteranceRecord record_from_json(const nlohmann::json& j,
                                        const std::string& where) {
  UtteranceRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.audio_path = j.at("audio_path").get<std::string>();
    r.domain = j.at("domain").get<std::string>();
    r.sample_rate_hz = j.at("sample_rate_hz").get<int>();
    r.duration_s = j.at("duration_s").get<double>();
    if (j.contains("transcript")) r.transcript = j.at("transcript").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
  if (r.sample_rate_hz != 8000 && r.sample_rate_hz != 16000) {
    throw std::runtime_error(where + ": sample_rate_hz must be one of {8000, 16000}, got " +
                             std::to_string(r.sample_rate_hz));
  }
  if (!(r.duration_s > 0.0)) {
    throw std::runtime_error(where + ": duration_s must be > 0");
  }
  if (r.id.empty()) throw std::runtime_error(where + ": id must be non-empty");
  return r;
}

inline nlohmann::json record_to_json(const UtteranceRecord& r) {
  nlohmann::json j{{"id", r.id},
                   {"audio_path", r.audio_path},
                   {"domain", r.domain},
                   {"sample_rate_hz", r.sample_rate_hz},
                   {"duration_s", r.duration_s}};
  if (r.transcript) j["transcript"] = *r.transcript;
  return j;
}

}  // namespace detail

// Loads a JSONL manifest, one record per line, order preserved. Blank lines
// are ignored. Errors carry the 1-based line number.
inline std::vector<UtteranceRecord> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path);
  std::vector<UtteranceRecord> records;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(where + ": malformed JSON: " + e.what());
    }
    UtteranceRecord r = detail::record_from_json(j, where);
    if (!seen.insert(r.id).second) {
      throw std::runtime_error(where + ": duplicate id '" + r.id + "'");
    }
    records.push_back(std::move(r));
  }
  return records;
}

inline void save_manifest(const std::string& path,
                          const std::vector<UtteranceRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("manifest: cannot write " + path);
  for (const auto& r : records) out << detail::record_to_json(r).dump() << '\n';
  if (!out) throw std::runtime_error("manifest: write failed: " + path);
}

// Concatenates per-domain record sequences into one dataset. The map key is
// authoritative: every record is stamped with its domain label.
inline PooledDataset pool_domains(
    const std::map<std::string, std::vector<UtteranceRecord>>& manifests) {
  PooledDataset pooled;
  std::unordered_set<std::string> seen;
  for (const auto& [domain, records] : manifests) {
    pooled.domains.insert(domain);
    for (UtteranceRecord r : records) {
      r.domain = domain;
      if (!seen.insert(r.id).second) {
        throw std::runtime_error("pool_domains: id collision '" + r.id + "'");
      }
      pooled.records.push_back(std::move(r));
    }
  }
  return pooled;
}

// Builds a pooled dataset from records that already carry domain labels.
inline PooledDataset pool_records(std::vector<UtteranceRecord> records) {
  PooledDataset pooled;
  std::unordered_set<std::string> seen;
  for (UtteranceRecord& r : records) {
    if (!seen.insert(r.id).second) {
      throw std::runtime_error("pool_records: id collision '" + r.id + "'");
    }
    pooled.domains.insert(r.domain);
    pooled.records.push_back(std::move(r));
  }
  return pooled;
}

// Per-domain utterance counts and total hours, domains sorted alphabetically,
// followed by a Total row.
inline std::vector<DomainStatsRow> domain_stats(const PooledDataset& dataset) {
  std::map<std::string, DomainStatsRow> per_domain;
  for (const std::string& d : dataset.domains) per_domain[d].domain = d;
  DomainStatsRow total;
  total.domain = "Total";
  for (const auto& r : dataset.records) {
    auto& row = per_domain[r.domain];
    row.domain = r.domain;
    row.utterances += 1;
    row.hours += r.duration_s / 3600.0;
    total.utterances += 1;
    total.hours += r.duration_s / 3600.0;
  }
  std::vector<DomainStatsRow> rows;
  rows.reserve(per_domain.size() + 1);
  for (auto& [_, row] : per_domain) rows.push_back(row);
  rows.push_back(total);
  return rows;
}

inline std::string format_domain_stats(const std::vector<DomainStatsRow>& rows) {
  std::ostringstream os;
  os << "domain                utterances        hours\n";
  for (const auto& r : rows) {
    os << r.domain;
    for (std::size_t i = r.domain.size(); i < 20; ++i) os << ' ';
    std::string utt = std::to_string(r.utterances);
    for (std::size_t i = utt.size(); i < 12; ++i) os << ' ';
    os << utt;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%13.3f", r.hours);
    os << buf << '\n';
  }
  return os.str();
}

}  // namespace mdaudio
