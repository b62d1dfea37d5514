#include "ism/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "ism/rng.hpp"

namespace ism {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sq_dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::size_t relevant_count(std::span<const int> labels, std::size_t q) {
  std::size_t r = 0;
  for (std::size_t j = 0; j < labels.size(); ++j)
    if (j != q && labels[j] == labels[q]) ++r;
  return r;
}

}  // namespace

DistanceMode distance_mode_from_string(const std::string& name) {
  if (name == "euclidean") return DistanceMode::kEuclidean;
  if (name == "ism") return DistanceMode::kIsm;
  throw std::invalid_argument("unknown distance mode: " + name);
}

std::string distance_mode_name(DistanceMode m) {
  return m == DistanceMode::kEuclidean ? "euclidean" : "ism";
}

RetrievalIndex build_index(std::span<const PairedEmbedding> embeddings,
                           DistanceMode mode, const MetricParams& p) {
  p.validate();
  const std::size_t n = embeddings.size();
  RetrievalIndex index;
  index.dist.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    index.dist[i][i] = kInf;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = mode == DistanceMode::kEuclidean
                           ? semantic_distance(embeddings[i], embeddings[j])
                           : introspective_distance(embeddings[i],
                                                    embeddings[j], p);
      index.dist[i][j] = d;
      index.dist[j][i] = d;
    }
  }
  index.order.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = index.order[i];
    row.resize(n);
    std::iota(row.begin(), row.end(), std::size_t{0});
    std::sort(row.begin(), row.end(), [&](std::size_t a, std::size_t b) {
      if (index.dist[i][a] != index.dist[i][b])
        return index.dist[i][a] < index.dist[i][b];
      return a < b;
    });
    row.pop_back();  // last entry is the query itself at +inf
  }
  return index;
}

double recall_at_k(const RetrievalIndex& index, std::span<const int> labels,
                   std::size_t k) {
  const std::size_t n = index.size();
  if (labels.size() != n)
    throw std::invalid_argument("recall: labels size mismatch");
  if (k == 0) throw std::invalid_argument("recall: k must be >= 1");
  if (n < 2) return 0.0;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const std::size_t lim = std::min(k, index.order[q].size());
    for (std::size_t r = 0; r < lim; ++r) {
      if (labels[index.order[q][r]] == labels[q]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

double r_precision(const RetrievalIndex& index, std::span<const int> labels) {
  const std::size_t n = index.size();
  if (labels.size() != n)
    throw std::invalid_argument("r-precision: labels size mismatch");
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const std::size_t r = relevant_count(labels, q);
    if (r == 0) continue;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < r; ++i)
      if (labels[index.order[q][i]] == labels[q]) ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r);
    ++used;
  }
  return used == 0 ? 0.0 : sum / static_cast<double>(used);
}

double map_at_r(const RetrievalIndex& index, std::span<const int> labels) {
  const std::size_t n = index.size();
  if (labels.size() != n)
    throw std::invalid_argument("map@r: labels size mismatch");
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const std::size_t r = relevant_count(labels, q);
    if (r == 0) continue;
    std::size_t hits = 0;
    double ap = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      if (labels[index.order[q][i]] == labels[q]) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(i + 1);
      }
    }
    sum += ap / static_cast<double>(r);
    ++used;
  }
  return used == 0 ? 0.0 : sum / static_cast<double>(used);
}

// ---------------------------------------------------------------------------
// k-means and NMI
// ---------------------------------------------------------------------------

namespace {

KMeansResult kmeans_once(std::span<const Vec> points, std::size_t k,
                         std::uint64_t seed, int max_iters) {
  const std::size_t n = points.size();
  const std::size_t dim = points[0].size();
  auto rng = make_rng(seed);

  // k-means++ seeding: first center uniform, the rest D^2-weighted.
  std::vector<Vec> centers;
  centers.reserve(k);
  centers.push_back(points[next_index(rng, n)]);
  std::vector<double> d2(n);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = kInf;
      for (const auto& ctr : centers) best = std::min(best, sq_dist(points[i], ctr));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      centers.push_back(points[next_index(rng, n)]);
      continue;
    }
    double target = next_unit(rng) * total;
    std::size_t pick = n - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (target < acc) {
        pick = i;
        break;
      }
    }
    centers.push_back(points[pick]);
  }

  std::vector<int> assign(n, -1);
  std::vector<std::size_t> counts(k);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      double best = kInf;
      int best_c = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sq_dist(points[i], centers[c]);
        if (d < best) {
          best = d;
          best_c = static_cast<int>(c);
        }
      }
      if (assign[i] != best_c) {
        assign[i] = best_c;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    std::fill(counts.begin(), counts.end(), std::size_t{0});
    for (auto& c : centers) std::fill(c.begin(), c.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      counts[assign[i]] += 1;
      for (std::size_t d = 0; d < dim; ++d)
        centers[assign[i]][d] += points[i][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t d = 0; d < dim; ++d)
        centers[c][d] /= static_cast<double>(counts[c]);
    }
    // Reseed each emptied cluster to the point farthest from its center.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      double worst = -1.0;
      std::size_t pick = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = sq_dist(points[i], centers[assign[i]]);
        if (d > worst) {
          worst = d;
          pick = i;
        }
      }
      centers[c] = points[pick];
      assign[pick] = static_cast<int>(c);
      counts[c] = 1;
    }
  }

  KMeansResult res;
  res.assignment = std::move(assign);
  res.centers = std::move(centers);
  for (std::size_t i = 0; i < n; ++i)
    res.sse += sq_dist(points[i], res.centers[res.assignment[i]]);
  return res;
}

}  // namespace

KMeansResult kmeans(std::span<const Vec> points, std::size_t k,
                    std::uint64_t seed, int n_restarts, int max_iters) {
  if (points.empty()) throw std::invalid_argument("kmeans: no points");
  if (k == 0 || k > points.size())
    throw std::invalid_argument("kmeans: bad cluster count");
  KMeansResult best;
  best.sse = kInf;
  for (int r = 0; r < n_restarts; ++r) {
    KMeansResult run = kmeans_once(points, k, mix64(seed, r), max_iters);
    if (run.sse < best.sse) best = std::move(run);
  }
  return best;
}

double nmi(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("nmi: partitions must be same nonempty size");
  const double n = static_cast<double>(a.size());
  std::map<int, std::size_t> ca, cb;
  std::map<std::pair<int, int>, std::size_t> joint;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca[a[i]] += 1;
    cb[b[i]] += 1;
    joint[{a[i], b[i]}] += 1;
  }
  auto entropy = [n](const std::map<int, std::size_t>& counts) {
    double h = 0.0;
    for (const auto& [id, c] : counts) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
    return h;
  };
  const double ha = entropy(ca);
  const double hb = entropy(cb);
  if (ha == 0.0 && hb == 0.0) return 1.0;  // both partitions trivial
  double mi = 0.0;
  for (const auto& [ab, c] : joint) {
    const double pj = static_cast<double>(c) / n;
    const double pa = static_cast<double>(ca[ab.first]) / n;
    const double pb = static_cast<double>(cb[ab.second]) / n;
    mi += pj * std::log(pj / (pa * pb));
  }
  const double denom = 0.5 * (ha + hb);
  return denom > 0.0 ? mi / denom : 0.0;
}

double cluster_nmi(std::span<const PairedEmbedding> embeddings,
                   std::span<const int> labels, std::uint64_t seed) {
  if (embeddings.size() != labels.size())
    throw std::invalid_argument("cluster nmi: size mismatch");
  std::vector<Vec> points;
  points.reserve(embeddings.size());
  for (const auto& e : embeddings) points.push_back(e.semantic);
  std::map<int, std::size_t> distinct;
  for (int l : labels) distinct[l] += 1;
  const KMeansResult km = kmeans(points, distinct.size(), seed);
  return nmi(km.assignment, labels);
}

UncertaintyReport uncertainty_report(std::span<const PairedEmbedding> embeddings,
                                     const std::vector<bool>& mixed) {
  if (embeddings.size() != mixed.size())
    throw std::invalid_argument("uncertainty report: size mismatch");
  UncertaintyReport rep;
  rep.original.hist.assign(UncertaintyReport::kHistBins + 1, 0);
  rep.mixed.hist.assign(UncertaintyReport::kHistBins + 1, 0);
  std::vector<double> norms[2];
  constexpr double bin_w =
      UncertaintyReport::kHistMax / UncertaintyReport::kHistBins;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const double u = vec::norm(embeddings[i].uncertainty);
    auto& group = mixed[i] ? rep.mixed : rep.original;
    norms[mixed[i] ? 1 : 0].push_back(u);
    std::size_t bin = UncertaintyReport::kHistBins;  // overflow
    if (u < UncertaintyReport::kHistMax)
      bin = static_cast<std::size_t>(u / bin_w);
    group.hist[bin] += 1;
  }
  auto fill = [](UncertaintyReport::Group& g, const std::vector<double>& xs) {
    g.count = xs.size();
    if (xs.empty()) return;
    g.min = *std::min_element(xs.begin(), xs.end());
    g.max = *std::max_element(xs.begin(), xs.end());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    g.mean = mean;
    g.stddev = std::sqrt(var);
  };
  fill(rep.original, norms[0]);
  fill(rep.mixed, norms[1]);
  return rep;
}

}  // namespace ism
