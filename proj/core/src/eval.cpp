#include "stripereid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace stripereid::eval {

namespace {

std::size_t idx(std::int64_t i) { return static_cast<std::size_t>(i); }

std::string fmt(double v, const char* spec) {
  char buf[40];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

std::span<const double> EmbeddingSet::row(std::int64_t i) const {
  return std::span<const double>(features).subspan(idx(i * dim), idx(dim));
}

void EmbeddingSet::validate() const {
  if (dim < 1) throw std::invalid_argument("embedding set: dimension must be >= 1");
  if (camera_ids.size() != person_ids.size() || features.size() != person_ids.size() * idx(dim)) {
    throw std::invalid_argument("embedding set: features, person ids and camera ids are not aligned");
  }
  for (const double v : features) {
    if (!std::isfinite(v)) throw std::domain_error("embedding set: non-finite feature");
  }
}

void EmbeddingSet::append(std::span<const double> feature, std::int64_t person_id, std::int64_t camera_id) {
  if (dim == 0 && person_ids.empty()) dim = static_cast<std::int64_t>(feature.size());
  if (static_cast<std::int64_t>(feature.size()) != dim) throw std::invalid_argument("embedding set: feature size mismatch");
  features.insert(features.end(), feature.begin(), feature.end());
  person_ids.push_back(person_id);
  camera_ids.push_back(camera_id);
}

DistanceMatrix pairwise_euclidean(const EmbeddingSet& query, const EmbeddingSet& gallery) {
  query.validate();
  gallery.validate();
  if (query.dim != gallery.dim) {
    throw std::invalid_argument("pairwise_euclidean: query dim " + std::to_string(query.dim) + " != gallery dim " +
                                std::to_string(gallery.dim));
  }
  DistanceMatrix d{query.size(), gallery.size(), std::vector<double>(idx(query.size() * gallery.size()))};
  for (std::int64_t i = 0; i < query.size(); ++i) {
    const auto a = query.row(i);
    for (std::int64_t j = 0; j < gallery.size(); ++j) {
      const auto b = gallery.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double t = a[k] - b[k];
        s += t * t;
      }
      d.at(i, j) = std::sqrt(s);
    }
  }
  return d;
}

EvalResult evaluate(const DistanceMatrix& dist, const EmbeddingSet& query, const EmbeddingSet& gallery,
                    std::int64_t max_rank) {
  if (max_rank < 1) throw std::invalid_argument("evaluate: max_rank must be >= 1");
  if (dist.rows != query.size() || dist.cols != gallery.size() || dist.values.size() != idx(dist.rows * dist.cols)) {
    throw std::invalid_argument("evaluate: distance matrix does not match query/gallery sizes");
  }
  EvalResult result;
  std::vector<std::int64_t> hits(idx(max_rank), 0);
  std::vector<std::int64_t> order(idx(gallery.size()));
  for (std::int64_t q = 0; q < query.size(); ++q) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) { return dist.at(q, a) < dist.at(q, b); });
    std::int64_t rank = 0;
    std::int64_t positives = 0;
    std::int64_t first_hit = -1;
    double precision_sum = 0.0;
    for (const auto g : order) {
      const bool same_person = gallery.person_ids[idx(g)] == query.person_ids[idx(q)];
      if (same_person && gallery.camera_ids[idx(g)] == query.camera_ids[idx(q)]) continue;
      ++rank;
      if (!same_person) continue;
      ++positives;
      if (first_hit < 0) first_hit = rank;
      precision_sum += static_cast<double>(positives) / static_cast<double>(rank);
    }
    if (positives == 0) continue;
    result.valid_queries.push_back(q);
    result.per_query_ap.push_back(precision_sum / static_cast<double>(positives));
    for (auto k = first_hit; k <= max_rank; ++k) ++hits[idx(k - 1)];
  }
  result.num_valid_queries = static_cast<std::int64_t>(result.valid_queries.size());
  if (result.num_valid_queries == 0) throw std::invalid_argument("evaluate: no query has a valid positive in the gallery");
  const double n = static_cast<double>(result.num_valid_queries);
  result.mean_ap = std::accumulate(result.per_query_ap.begin(), result.per_query_ap.end(), 0.0) / n;
  for (const auto h : hits) result.cmc.push_back(static_cast<double>(h) / n);
  return result;
}

RunResult evaluate_run(const EmbeddingSet& query, const EmbeddingSet& gallery, const std::optional<RerankParams>& rerank_params,
                       std::int64_t max_rank) {
  RunResult out;
  out.raw = evaluate(pairwise_euclidean(query, gallery), query, gallery, max_rank);
  if (rerank_params) out.reranked = evaluate(rerank(query, gallery, *rerank_params), query, gallery, max_rank);
  return out;
}

// ---------------------------------------------------------------------------
// Files

std::string format_embeddings(const EmbeddingSet& set) {
  set.validate();
  std::string out = "person_id,camera_id";
  for (std::int64_t k = 0; k < set.dim; ++k) out += ",f" + std::to_string(k);
  out += "\n";
  for (std::int64_t i = 0; i < set.size(); ++i) {
    out += std::to_string(set.person_ids[idx(i)]) + "," + std::to_string(set.camera_ids[idx(i)]);
    for (const double v : set.row(i)) out += "," + fmt(v, "%.17g");
    out += "\n";
  }
  return out;
}

EmbeddingSet parse_embeddings(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("person_id,camera_id,", 0) != 0) {
    throw std::runtime_error("embeddings: missing header 'person_id,camera_id,f0,...'");
  }
  EmbeddingSet set;
  set.dim = std::count(line.begin(), line.end(), ',') - 1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (static_cast<std::int64_t>(fields.size()) != set.dim + 2) {
      throw std::runtime_error("embeddings line " + std::to_string(line_no) + ": expected " + std::to_string(set.dim + 2) +
                               " fields");
    }
    std::vector<double> feature;
    try {
      for (std::size_t k = 2; k < fields.size(); ++k) feature.push_back(std::stod(fields[k]));
      set.append(feature, std::stoll(fields[0]), std::stoll(fields[1]));
    } catch (const std::logic_error&) {
      throw std::runtime_error("embeddings line " + std::to_string(line_no) + ": invalid number");
    }
  }
  set.validate();
  return set;
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << format_embeddings(set);
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_embeddings(ss.str());
}

std::string format_results(const RunResult& result) {
  std::string out = "metric,value\n";
  auto block = [&](const EvalResult& r, const std::string& prefix) {
    out += prefix + "mAP," + fmt(r.mean_ap, "%.10f") + "\n";
    for (const std::int64_t k : {1, 5, 10}) {
      if (k <= static_cast<std::int64_t>(r.cmc.size())) out += prefix + "rank" + std::to_string(k) + "," + fmt(r.rank(k), "%.10f") + "\n";
    }
    out += prefix + "num_valid_queries," + std::to_string(r.num_valid_queries) + "\n";
    for (std::size_t k = 0; k < r.cmc.size(); ++k) out += prefix + "cmc" + std::to_string(k + 1) + "," + fmt(r.cmc[k], "%.10f") + "\n";
  };
  block(result.raw, "");
  if (result.reranked) block(*result.reranked, "rerank_");
  return out;
}

}  // namespace stripereid::eval
