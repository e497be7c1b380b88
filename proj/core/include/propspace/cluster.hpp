#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "propspace/embed.hpp"
#include "propspace/matrix.hpp"

namespace propspace {

struct KMeansConfig {
  std::size_t k = 2;
  std::size_t max_iters = 300;
  double tol = 1e-6;  // max centroid L2 shift between iterations
  std::uint64_t seed = 0;
  std::size_t restarts = 10;  // best inertia wins, ties to the lowest index
  std::size_t workers = 0;    // 0 = hardware concurrency; results are
                              // bit-identical for any worker count
};

struct Clustering {
  Matrix centroids;  // k x d, not normalized (inertia stays meaningful)
  std::vector<std::uint32_t> assignments;
  double inertia = 0.0;
  std::size_t iterations_run = 0;
  // Inertia measured after each assignment pass of the winning restart,
  // including the final consistency pass; non-increasing by construction.
  std::vector<double> inertia_history;
};

// Lloyd iterations with k-means++ seeding. Clusters are never left empty:
// when an assignment pass empties one, its centroid is reseeded to the point
// farthest from its assigned centroid and that point is moved over.
// Deterministic for a fixed (points, config) regardless of worker count.
Clustering kmeans_fit(const EmbeddingMatrix& points, const KMeansConfig& config);

// Index of the centroid with minimal Euclidean distance; ties break low.
std::size_t assign_nearest(const Matrix& centroids, std::span<const double> v);

// clamp(round(D / 7), 2, D): a seventh of the description count works well
// in practice, never fewer than two clusters, never more than D.
std::size_t choose_cluster_count(std::size_t description_count);

}  // namespace propspace
