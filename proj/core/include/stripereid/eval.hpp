#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stripereid::eval {

/// Row-major n x d features with per-row identity and camera.
struct EmbeddingSet {
  std::int64_t dim = 0;
  std::vector<double> features;
  std::vector<std::int64_t> person_ids;
  std::vector<std::int64_t> camera_ids;

  std::int64_t size() const { return static_cast<std::int64_t>(person_ids.size()); }
  std::span<const double> row(std::int64_t i) const;
  void validate() const;
  void append(std::span<const double> feature, std::int64_t person_id, std::int64_t camera_id);

  bool operator==(const EmbeddingSet&) const = default;
};

struct DistanceMatrix {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> values;

  double at(std::int64_t i, std::int64_t j) const { return values[static_cast<std::size_t>(i * cols + j)]; }
  double& at(std::int64_t i, std::int64_t j) { return values[static_cast<std::size_t>(i * cols + j)]; }
};

DistanceMatrix pairwise_euclidean(const EmbeddingSet& query, const EmbeddingSet& gallery);

struct EvalResult {
  double mean_ap = 0.0;
  std::vector<double> cmc;  // cmc[k - 1] is the rank-k accuracy
  std::vector<double> per_query_ap;  // valid queries only, in query order
  std::vector<std::int64_t> valid_queries;
  std::int64_t num_valid_queries = 0;

  double rank(std::int64_t k) const { return cmc.at(static_cast<std::size_t>(k - 1)); }
  bool operator==(const EvalResult&) const = default;
};

/// Scores every query against the gallery.
///
/// Gallery entries sharing both person and camera with the query are junk and
/// are removed before ranking. Queries left without a positive are skipped.
/// Equal distances are ordered by gallery index.
EvalResult evaluate(const DistanceMatrix& dist, const EmbeddingSet& query, const EmbeddingSet& gallery,
                    std::int64_t max_rank);

struct RerankParams {
  std::int64_t k1 = 20;
  std::int64_t k2 = 6;
  double lambda = 0.3;

  void validate(std::int64_t total) const;
  /// Shrinks k1 to at most half the gallery, and k2 to at most k1.
  RerankParams scaled_for(std::int64_t gallery_size) const;
};

/// k-reciprocal re-ranking over the joint query and gallery set.
///
/// The original distance is the squared Euclidean distance divided by its row
/// maximum over all query and gallery samples; the result blends it with the
/// Jaccard distance of the k-reciprocal encodings. With lambda = 1 the result
/// is the normalized original distance, which ranks every query row exactly
/// like the Euclidean distance.
DistanceMatrix rerank(const EmbeddingSet& query, const EmbeddingSet& gallery, const RerankParams& params);

struct RunResult {
  EvalResult raw;
  std::optional<EvalResult> reranked;
};

RunResult evaluate_run(const EmbeddingSet& query, const EmbeddingSet& gallery, const std::optional<RerankParams>& rerank_params,
                       std::int64_t max_rank);

/// CSV `person_id,camera_id,f0,...,f{d-1}` with full double precision.
std::string format_embeddings(const EmbeddingSet& set);
EmbeddingSet parse_embeddings(const std::string& text);
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);
EmbeddingSet load_embeddings(const std::filesystem::path& path);

/// CSV `metric,value`: mAP, rank-1/5/10, valid query count, then the CMC curve.
/// Re-ranked metrics follow with a `rerank_` prefix.
std::string format_results(const RunResult& result);

}  // namespace stripereid::eval
