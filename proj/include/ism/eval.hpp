#pragma once

/// Retrieval metrics over a set of paired embeddings: Recall@K, R-Precision,
/// MAP@R, and clustering NMI (k-means with k-means++ seeding). Distances use
/// either the plain semantic metric or the uncertainty-weakened one, chosen
/// at index build time. All metrics are deterministic; neighbor ties break
/// to the lower index.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ism/metric.hpp"
#include "ism/vec.hpp"

namespace ism {

enum class DistanceMode { kEuclidean, kIsm };

DistanceMode distance_mode_from_string(const std::string& name);
std::string distance_mode_name(DistanceMode m);

/// Pairwise distances with +inf on the diagonal, plus per-query neighbor
/// orderings (ascending distance, ties by index).
struct RetrievalIndex {
  std::vector<std::vector<double>> dist;
  std::vector<std::vector<std::size_t>> order;

  std::size_t size() const { return dist.size(); }
};

RetrievalIndex build_index(std::span<const PairedEmbedding> embeddings,
                           DistanceMode mode, const MetricParams& p);

/// Fraction of queries whose k nearest neighbors contain a same-class hit.
double recall_at_k(const RetrievalIndex& index, std::span<const int> labels,
                   std::size_t k);

/// Precision within the first R neighbors, R being the number of same-class
/// gallery samples of the query. Queries with R = 0 are excluded.
double r_precision(const RetrievalIndex& index, std::span<const int> labels);

/// Mean average precision truncated at R. Queries with R = 0 are excluded.
double map_at_r(const RetrievalIndex& index, std::span<const int> labels);

struct KMeansResult {
  std::vector<int> assignment;
  std::vector<Vec> centers;
  double sse = 0.0;
};

/// Lloyd iterations with k-means++ seeding, `n_restarts` independent starts
/// (best SSE wins), at most `max_iters` sweeps each. An emptied cluster is
/// reseeded to the point farthest from its own center.
KMeansResult kmeans(std::span<const Vec> points, std::size_t k,
                    std::uint64_t seed, int n_restarts = 10,
                    int max_iters = 300);

/// Normalized mutual information of two partitions given as per-element
/// ids. Natural-log entropies, arithmetic-mean normalization.
double nmi(std::span<const int> a, std::span<const int> b);

/// k-means on the semantic embeddings with k = number of distinct labels,
/// then NMI of the clustering against the labels.
double cluster_nmi(std::span<const PairedEmbedding> embeddings,
                   std::span<const int> labels, std::uint64_t seed);

/// Distribution of uncertainty norms ||u||, split by mixed-sample provenance.
/// Histograms use 32 uniform bins on [0, 4) plus one overflow bin.
struct UncertaintyReport {
  struct Group {
    std::size_t count = 0;
    double mean = 0.0;
    double stddev = 0.0;  // population
    double min = 0.0;
    double max = 0.0;
    std::vector<std::size_t> hist;  // kHistBins + 1 entries
  };

  static constexpr std::size_t kHistBins = 32;
  static constexpr double kHistMax = 4.0;

  Group original;
  Group mixed;
};

UncertaintyReport uncertainty_report(std::span<const PairedEmbedding> embeddings,
                                     const std::vector<bool>& mixed);

}  // namespace ism
