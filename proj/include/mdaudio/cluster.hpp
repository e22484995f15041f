#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdaudio/audio.hpp"
#include "mdaudio/frontend.hpp"
#include "mdaudio/manifest.hpp"
#include "mdaudio/resample.hpp"
#include "mdaudio/rng.hpp"

namespace mdaudio {

// Fixed-dimension acoustic summary of one utterance.
struct Embedding {
  std::vector<float> vector;
  std::string utterance_id;
  std::string domain;
};

// Frame-wise mean and standard deviation of a feature matrix, concatenated:
// the 2*cols raw summary the projector reduces.
inline std::vector<double> feature_summary(const FeatureMatrix& feats) {
  if (feats.rows == 0) throw std::invalid_argument("feature_summary: empty features");
  std::vector<double> out(2 * feats.cols, 0.0);
  for (std::size_t r = 0; r < feats.rows; ++r) {
    for (std::size_t c = 0; c < feats.cols; ++c) out[c] += feats.at(r, c);
  }
  for (std::size_t c = 0; c < feats.cols; ++c) out[c] /= static_cast<double>(feats.rows);
  for (std::size_t r = 0; r < feats.rows; ++r) {
    for (std::size_t c = 0; c < feats.cols; ++c) {
      const double d = feats.at(r, c) - out[c];
      out[feats.cols + c] += d * d;
    }
  }
  for (std::size_t c = 0; c < feats.cols; ++c) {
    out[feats.cols + c] = std::sqrt(out[feats.cols + c] / static_cast<double>(feats.rows));
  }
  return out;
}

// Principal-component projection of raw summaries to a fixed dimension
// (default 32). Deterministic: components are eigenvectors of the sample
// covariance, ordered by decreasing eigenvalue, with a fixed sign convention.
class PcaProjector {
 public:
  explicit PcaProjector(int out_dims = 32) : out_dims_(out_dims) {}

  bool fitted() const { return fitted_; }
  int out_dims() const { return out_dims_; }
  std::size_t in_dims() const { return static_cast<std::size_t>(mean_.size()); }

  void fit(const std::vector<std::vector<double>>& summaries) {
    if (summaries.size() < static_cast<std::size_t>(out_dims_)) {
      throw std::invalid_argument("PcaProjector: need at least " +
                                  std::to_string(out_dims_) + " reference utterances");
    }
    const std::size_t n = summaries.size();
    const std::size_t d = summaries.front().size();
    Eigen::MatrixXd data(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      if (summaries[i].size() != d) {
        throw std::invalid_argument("PcaProjector: inconsistent summary dimensions");
      }
      for (std::size_t j = 0; j < d; ++j) data(i, j) = summaries[i][j];
    }
    mean_ = data.colwise().mean();
    data.rowwise() -= mean_.transpose();
    const Eigen::MatrixXd cov = data.transpose() * data / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
      throw std::runtime_error("PcaProjector: eigendecomposition failed");
    }
    // eigenvalues ascend; keep the trailing out_dims_, largest first
    components_.resize(out_dims_, d);
    eigenvalues_.resize(out_dims_);
    for (int k = 0; k < out_dims_; ++k) {
      const Eigen::Index src = static_cast<Eigen::Index>(d) - 1 - k;
      Eigen::VectorXd v = solver.eigenvectors().col(src);
      // sign convention: largest-magnitude coefficient is positive
      Eigen::Index arg = 0;
      v.cwiseAbs().maxCoeff(&arg);
      if (v(arg) < 0) v = -v;
      components_.row(k) = v.transpose();
      eigenvalues_(k) = solver.eigenvalues()(src);
    }
    fitted_ = true;
  }

  std::vector<float> project(const std::vector<double>& summary) const {
    require_fitted();
    if (summary.size() != in_dims()) {
      throw std::invalid_argument("PcaProjector: summary dimension mismatch");
    }
    Eigen::VectorXd x(summary.size());
    for (std::size_t i = 0; i < summary.size(); ++i) x(i) = summary[i];
    const Eigen::VectorXd y = components_ * (x - mean_);
    std::vector<float> out(static_cast<std::size_t>(out_dims_));
    for (int k = 0; k < out_dims_; ++k) out[static_cast<std::size_t>(k)] = static_cast<float>(y(k));
    return out;
  }

  // Mean squared reconstruction error using the leading n_components rows.
  double reconstruction_error(const std::vector<std::vector<double>>& summaries,
                              int n_components) const {
    require_fitted();
    if (n_components < 1 || n_components > out_dims_) {
      throw std::invalid_argument("PcaProjector: bad component count");
    }
    const auto head = components_.topRows(n_components);
    double acc = 0.0;
    for (const auto& s : summaries) {
      Eigen::VectorXd x(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) x(i) = s[i];
      const Eigen::VectorXd centered = x - mean_;
      const Eigen::VectorXd recon = head.transpose() * (head * centered);
      acc += (centered - recon).squaredNorm();
    }
    return acc / static_cast<double>(summaries.size());
  }

 private:
  void require_fitted() const {
    if (!fitted_) throw std::logic_error("PcaProjector: projector is not fitted");
  }

  int out_dims_;
  bool fitted_ = false;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd components_;  // out_dims x in_dims
  Eigen::VectorXd eigenvalues_;
};

// logmel features -> mean/std summary -> fitted projector -> embedding.
inline Embedding embed(const FeatureMatrix& features, const PcaProjector& projector,
                       std::string utterance_id = {}, std::string domain = {}) {
  Embedding e;
  e.vector = projector.project(feature_summary(features));
  e.utterance_id = std::move(utterance_id);
  e.domain = std::move(domain);
  return e;
}

// ---------------------------------------------------------------------------
// Cluster-validity metrics
// ---------------------------------------------------------------------------

struct SilhouettePoint {
  double a = 0.0;  // mean distance to own cluster (excluding self)
  double b = 0.0;  // min over other clusters of mean distance
  double s = 0.0;  // (b - a) / max(a, b); 0 for singleton clusters
};

struct SilhouetteResult {
  std::vector<SilhouettePoint> points;
  std::map<int, double> per_cluster_mean;
  double overall_mean = 0.0;
};

namespace cluster_detail {

inline double euclidean(const std::vector<float>& a, const std::vector<float>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace cluster_detail

// Silhouette coefficient per point: s = (b - a) / max(a, b), with the nearest
// neighboring cluster chosen by minimum mean distance (ties broken by lowest
// cluster label).
inline SilhouetteResult silhouette(const std::vector<std::vector<float>>& points,
                                   const std::vector<int>& labels) {
  if (points.size() != labels.size()) {
    throw std::invalid_argument("silhouette: points/labels size mismatch");
  }
  std::map<int, std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < labels.size(); ++i) clusters[labels[i]].push_back(i);
  if (clusters.size() < 2) {
    throw std::invalid_argument("silhouette: need at least 2 clusters");
  }
  for (const auto& [label, members] : clusters) {
    if (members.empty()) throw std::invalid_argument("silhouette: empty cluster");
  }

  SilhouetteResult result;
  result.points.resize(points.size());
  std::map<int, std::pair<double, std::size_t>> cluster_acc;

  for (std::size_t i = 0; i < points.size(); ++i) {
    SilhouettePoint sp;
    const int own = labels[i];
    const auto& own_members = clusters[own];
    if (own_members.size() == 1) {
      sp.a = 0.0;
      sp.b = 0.0;
      sp.s = 0.0;  // singleton convention
    } else {
      double acc = 0.0;
      for (std::size_t j : own_members) {
        if (j != i) acc += cluster_detail::euclidean(points[i], points[j]);
      }
      sp.a = acc / static_cast<double>(own_members.size() - 1);
      sp.b = std::numeric_limits<double>::infinity();
      for (const auto& [label, members] : clusters) {
        if (label == own) continue;
        double other = 0.0;
        for (std::size_t j : members) {
          other += cluster_detail::euclidean(points[i], points[j]);
        }
        other /= static_cast<double>(members.size());
        if (other < sp.b) sp.b = other;  // map order breaks ties by lowest label
      }
      const double denom = std::max(sp.a, sp.b);
      sp.s = denom > 0.0 ? (sp.b - sp.a) / denom : 0.0;
    }
    result.points[i] = sp;
    auto& [sum, count] = cluster_acc[own];
    sum += sp.s;
    ++count;
    result.overall_mean += sp.s;
  }
  result.overall_mean /= static_cast<double>(points.size());
  for (const auto& [label, acc] : cluster_acc) {
    result.per_cluster_mean[label] = acc.first / static_cast<double>(acc.second);
  }
  return result;
}

// Davies-Bouldin-style similarity between two clusters:
// R = (S_i + S_j) / M_ij with S the mean distance to the own centroid and M
// the centroid distance. Higher means more overlap.
struct ClusterSimilarity {
  double r = 0.0;
  double s_i = 0.0;
  double s_j = 0.0;
  double m_ij = 0.0;
};

inline ClusterSimilarity cluster_similarity(const std::vector<std::vector<float>>& cluster_i,
                                            const std::vector<std::vector<float>>& cluster_j) {
  if (cluster_i.empty() || cluster_j.empty()) {
    throw std::invalid_argument("cluster_similarity: clusters must be non-empty");
  }
  const std::size_t dims = cluster_i.front().size();
  auto centroid = [dims](const std::vector<std::vector<float>>& pts) {
    std::vector<double> c(dims, 0.0);
    for (const auto& p : pts) {
      for (std::size_t k = 0; k < dims; ++k) c[k] += p[k];
    }
    for (std::size_t k = 0; k < dims; ++k) c[k] /= static_cast<double>(pts.size());
    return c;
  };
  auto point_to_centroid = [dims](const std::vector<float>& p,
                                  const std::vector<double>& c) {
    double acc = 0.0;
    for (std::size_t k = 0; k < dims; ++k) {
      const double d = static_cast<double>(p[k]) - c[k];
      acc += d * d;
    }
    return std::sqrt(acc);
  };
  auto dispersion = [&point_to_centroid](const std::vector<std::vector<float>>& pts,
                                         const std::vector<double>& c) {
    double acc = 0.0;
    for (const auto& p : pts) acc += point_to_centroid(p, c);
    return acc / static_cast<double>(pts.size());
  };

  const std::vector<double> ci = centroid(cluster_i);
  const std::vector<double> cj = centroid(cluster_j);
  ClusterSimilarity out;
  {
    double acc = 0.0;
    for (std::size_t k = 0; k < dims; ++k) {
      const double d = ci[k] - cj[k];
      acc += d * d;
    }
    out.m_ij = std::sqrt(acc);
  }
  if (out.m_ij <= 0.0) {
    throw std::domain_error("cluster_similarity: coincident centroids");
  }
  out.s_i = dispersion(cluster_i, ci);
  out.s_j = dispersion(cluster_j, cj);
  out.r = (out.s_i + out.s_j) / out.m_ij;
  return out;
}

// ---------------------------------------------------------------------------
// Embedding persistence and the pairwise domain report
// ---------------------------------------------------------------------------

inline void save_embeddings(const std::string& path,
                            const std::vector<Embedding>& embeddings) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("embeddings: cannot write " + path);
  for (const auto& e : embeddings) {
    out << nlohmann::json{{"id", e.utterance_id},
                          {"domain", e.domain},
                          {"vector", e.vector}}
               .dump()
        << '\n';
  }
}

inline std::vector<Embedding> load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("embeddings: cannot open " + path);
  std::vector<Embedding> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    Embedding e;
    e.utterance_id = j.at("id").get<std::string>();
    e.domain = j.at("domain").get<std::string>();
    e.vector = j.at("vector").get<std::vector<float>>();
    out.push_back(std::move(e));
  }
  return out;
}

struct PairwiseRow {
  std::string domain;
  double avg_silhouette = 0.0;
  double cluster_similarity = 0.0;
};

struct PairwiseReport {
  std::string target_domain;
  std::size_t n_per_domain = 0;
  std::uint64_t seed = 0;
  std::vector<PairwiseRow> rows;

  // Aligned text table. The header states how to read the numbers: lower
  // silhouette and higher similarity mean the domain overlaps the target
  // more.
  std::string to_text() const {
    std::ostringstream os;
    os << "pairwise clustering vs target '" << target_domain << "' (n=" << n_per_domain
       << " per domain, seed=" << seed << ")\n";
    os << "average silhouette over both clusters; lower silhouette and higher\n"
       << "cluster similarity indicate more overlap with the target domain\n";
    os << "domain                avg_silhouette   cluster_similarity\n";
    for (const auto& row : rows) {
      os << row.domain;
      for (std::size_t i = row.domain.size(); i < 20; ++i) os << ' ';
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%16.4f %20.4f", row.avg_silhouette,
                    row.cluster_similarity);
      os << buf << '\n';
    }
    return os.str();
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "domain,avg_silhouette,cluster_similarity\n";
    for (const auto& row : rows) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f", row.avg_silhouette,
                    row.cluster_similarity);
      os << row.domain << ',' << buf << '\n';
    }
    return os.str();
  }
};

// Builds the pairwise (domain vs target) report from per-utterance
// embeddings: two-cluster mean silhouette plus the similarity measure.
inline PairwiseReport pairwise_report_from_embeddings(
    const std::vector<Embedding>& embeddings, const std::string& target_domain,
    std::size_t n_per_domain, std::uint64_t seed) {
  std::map<std::string, std::vector<const Embedding*>> by_domain;
  for (const auto& e : embeddings) by_domain[e.domain].push_back(&e);
  if (by_domain.find(target_domain) == by_domain.end()) {
    throw std::runtime_error("pairwise_report: target domain '" + target_domain +
                             "' not present");
  }
  PairwiseReport report;
  report.target_domain = target_domain;
  report.n_per_domain = n_per_domain;
  report.seed = seed;

  const auto& target = by_domain[target_domain];
  for (const auto& [domain, members] : by_domain) {
    if (domain == target_domain) continue;
    std::vector<std::vector<float>> pts;
    std::vector<int> labels;
    std::vector<std::vector<float>> ci, cj;
    for (const Embedding* e : members) {
      pts.push_back(e->vector);
      labels.push_back(0);
      ci.push_back(e->vector);
    }
    for (const Embedding* e : target) {
      pts.push_back(e->vector);
      labels.push_back(1);
      cj.push_back(e->vector);
    }
    PairwiseRow row;
    row.domain = domain;
    row.avg_silhouette = silhouette(pts, labels).overall_mean;
    row.cluster_similarity = cluster_similarity(ci, cj).r;
    report.rows.push_back(std::move(row));
  }
  return report;
}

// Samples n utterances per domain (seeded), embeds them, and reports the
// two-cluster metrics of every domain against the target. When no fitted
// projector is supplied, one is fitted on the sampled summaries; its output
// dimension is capped by the sample count so small corpora stay analyzable.
inline PairwiseReport pairwise_report(const PooledDataset& dataset,
                                      const std::string& target_domain,
                                      std::size_t n_per_domain, std::uint64_t seed,
                                      const FrontendConfig& frontend,
                                      const PcaProjector* projector = nullptr) {
  if (n_per_domain < 1) throw std::invalid_argument("pairwise_report: n must be >= 1");
  std::map<std::string, std::vector<const UtteranceRecord*>> by_domain;
  for (const auto& r : dataset.records) by_domain[r.domain].push_back(&r);
  if (by_domain.find(target_domain) == by_domain.end()) {
    throw std::runtime_error("pairwise_report: target domain '" + target_domain +
                             "' not present");
  }
  for (const auto& [domain, members] : by_domain) {
    if (members.size() < n_per_domain) {
      throw std::runtime_error("pairwise_report: domain '" + domain + "' has only " +
                               std::to_string(members.size()) + " utterances, need " +
                               std::to_string(n_per_domain));
    }
  }

  struct Sampled {
    std::string id, domain;
    std::vector<double> summary;
  };
  std::vector<Sampled> sampled;
  for (const auto& [domain, members] : by_domain) {
    std::vector<std::size_t> order(members.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, domain, 0));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.uniform_index(i)]);
    }
    for (std::size_t i = 0; i < n_per_domain; ++i) {
      const UtteranceRecord& rec = *members[order[i]];
      AudioBuffer audio = read_wav(rec.audio_path);
      if (audio.sample_rate_hz != 16000) audio = resample(audio, 16000);
      sampled.push_back({rec.id, domain, feature_summary(logmel(audio, frontend))});
    }
  }

  PcaProjector local(static_cast<int>(
      std::min<std::size_t>(32, sampled.size())));
  const PcaProjector* proj = projector;
  if (proj == nullptr || !proj->fitted()) {
    std::vector<std::vector<double>> summaries;
    summaries.reserve(sampled.size());
    for (const auto& s : sampled) summaries.push_back(s.summary);
    local.fit(summaries);
    proj = &local;
  }

  std::vector<Embedding> embeddings;
  embeddings.reserve(sampled.size());
  for (const auto& s : sampled) {
    Embedding e;
    e.vector = proj->project(s.summary);
    e.utterance_id = s.id;
    e.domain = s.domain;
    embeddings.push_back(std::move(e));
  }
  PairwiseReport report =
      pairwise_report_from_embeddings(embeddings, target_domain, n_per_domain, seed);
  return report;
}

}  // namespace mdaudio
