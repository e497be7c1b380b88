#include "propspace/cluster.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "propspace/rng.hpp"

namespace propspace {

namespace {

// Fixed chunking makes every floating-point reduction independent of the
// worker count: partials are produced per chunk and combined in chunk order.
constexpr std::size_t kChunk = 256;

std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

template <typename Fn>
void run_chunked(std::size_t n, std::size_t workers, Fn&& fn) {
  const std::size_t chunks = chunk_count(n);
  if (workers == 0) {
    workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }
  workers = std::min(workers, chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      fn(c, c * kChunk, std::min(n, (c + 1) * kChunk));
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t c = next.fetch_add(1);
        if (c >= chunks) break;
        fn(c, c * kChunk, std::min(n, (c + 1) * kChunk));
      }
    });
  }
  for (auto& t : pool) t.join();
}

double sq_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return sum;
}

struct Workspace {
  const Matrix& points;
  std::size_t workers;

  std::size_t nearest(const Matrix& centroids, std::size_t point) const {
    const auto p = points.row(point);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows; ++c) {
      const double d = sq_distance(p, centroids.row(c));
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    return best;
  }

  // Assigns every point to its nearest centroid; whenever that leaves a
  // cluster empty, reseeds the cluster's centroid to the farthest point of
  // a multi-member cluster, pins the point there and re-assigns the rest.
  void assign_with_repair(Matrix& centroids,
                          std::vector<std::uint32_t>& assignment) const {
    const std::size_t n = points.rows;
    const std::size_t k = centroids.rows;
    std::vector<std::int64_t> pin(n, -1);

    while (true) {
      run_chunked(n, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          assignment[i] = pin[i] >= 0
                              ? static_cast<std::uint32_t>(pin[i])
                              : static_cast<std::uint32_t>(nearest(centroids, i));
        }
      });

      std::vector<std::size_t> counts(k, 0);
      for (std::uint32_t a : assignment) ++counts[a];

      bool any_empty = false;
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] != 0) continue;
        any_empty = true;
        // Farthest point among clusters that can spare one; ties break low.
        std::size_t donor = n;
        double worst = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (pin[i] >= 0 || counts[assignment[i]] < 2) continue;
          const double d = sq_distance(points.row(i), centroids.row(assignment[i]));
          if (d > worst) {
            worst = d;
            donor = i;
          }
        }
        // D >= k guarantees a donor exists while any cluster is empty.
        if (donor == n) fail(errc::precondition, "no donor for empty cluster");
        --counts[assignment[donor]];
        counts[c] = 1;
        auto dst = centroids.row(c);
        const auto src = points.row(donor);
        std::copy(src.begin(), src.end(), dst.begin());
        assignment[donor] = static_cast<std::uint32_t>(c);
        pin[donor] = static_cast<std::int64_t>(c);
      }
      if (!any_empty) return;
    }
  }

  double inertia(const Matrix& centroids,
                 const std::vector<std::uint32_t>& assignment) const {
    const std::size_t n = points.rows;
    std::vector<double> partial(chunk_count(n), 0.0);
    run_chunked(n, workers, [&](std::size_t c, std::size_t begin, std::size_t end) {
      double sum = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        sum += sq_distance(points.row(i), centroids.row(assignment[i]));
      }
      partial[c] = sum;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
  }

  Matrix means(std::size_t k, const std::vector<std::uint32_t>& assignment) const {
    const std::size_t n = points.rows;
    const std::size_t d = points.cols;
    const std::size_t chunks = chunk_count(n);
    std::vector<Matrix> sums(chunks);
    std::vector<std::vector<std::size_t>> counts(chunks);
    run_chunked(n, workers, [&](std::size_t c, std::size_t begin, std::size_t end) {
      sums[c] = Matrix(k, d);
      counts[c].assign(k, 0);
      for (std::size_t i = begin; i < end; ++i) {
        const std::uint32_t a = assignment[i];
        auto acc = sums[c].row(a);
        const auto p = points.row(i);
        for (std::size_t j = 0; j < d; ++j) acc[j] += p[j];
        ++counts[c][a];
      }
    });
    Matrix out(k, d);
    std::vector<std::size_t> total(k, 0);
    for (std::size_t c = 0; c < chunks; ++c) {
      for (std::size_t a = 0; a < k; ++a) {
        auto dst = out.row(a);
        const auto src = sums[c].row(a);
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        total[a] += counts[c][a];
      }
    }
    for (std::size_t a = 0; a < k; ++a) {
      auto dst = out.row(a);
      for (std::size_t j = 0; j < d; ++j) dst[j] /= static_cast<double>(total[a]);
    }
    return out;
  }

  Matrix kmeanspp_init(std::size_t k, std::mt19937_64& rng) const {
    const std::size_t n = points.rows;
    const std::size_t d = points.cols;
    Matrix centroids(k, d);

    const auto set_centroid = [&](std::size_t c, std::size_t point) {
      auto dst = centroids.row(c);
      const auto src = points.row(point);
      std::copy(src.begin(), src.end(), dst.begin());
    };

    set_centroid(0, static_cast<std::size_t>(uniform_index(rng, n)));

    std::vector<double> min_dist(n, 0.0);
    const auto refresh = [&](std::size_t latest) {
      run_chunked(n, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          const double dist = sq_distance(points.row(i), centroids.row(latest));
          if (latest == 0 || dist < min_dist[i]) min_dist[i] = dist;
        }
      });
    };
    refresh(0);

    for (std::size_t c = 1; c < k; ++c) {
      std::vector<double> partial(chunk_count(n), 0.0);
      run_chunked(n, workers, [&](std::size_t ci, std::size_t begin, std::size_t end) {
        double sum = 0.0;
        for (std::size_t i = begin; i < end; ++i) sum += min_dist[i];
        partial[ci] = sum;
      });
      double total = 0.0;
      for (double p : partial) total += p;

      std::size_t pick;
      if (total <= 0.0) {
        // All remaining points coincide with chosen centroids.
        pick = static_cast<std::size_t>(uniform_index(rng, n));
      } else {
        const double target = uniform_double(rng) * total;
        double cum = 0.0;
        std::size_t last_positive = n;
        pick = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (min_dist[i] <= 0.0) continue;
          last_positive = i;
          cum += min_dist[i];
          if (cum > target) {
            pick = i;
            break;
          }
        }
        if (pick == n) pick = last_positive;  // rounding pushed us past the end
      }
      set_centroid(c, pick);
      refresh(c);
    }
    return centroids;
  }
};

}  // namespace

Clustering kmeans_fit(const EmbeddingMatrix& points, const KMeansConfig& config) {
  const std::size_t n = points.count();
  const std::size_t k = config.k;
  if (k == 0) fail(errc::precondition, "k must be at least 1");
  if (config.max_iters == 0) fail(errc::precondition, "max_iters must be positive");
  if (config.restarts == 0) fail(errc::precondition, "restarts must be positive");
  if (config.tol < 0.0) fail(errc::precondition, "tol must be non-negative");
  if (n < k) {
    fail(errc::too_few_points, std::to_string(n) + " points for k = " +
                                   std::to_string(k));
  }
  if (!points.normalized) {
    fail(errc::precondition,
         "kmeans_fit expects L2-normalized embeddings (normalized flag)");
  }

  const Workspace ws{points.values, config.workers};

  Clustering best;
  bool have_best = false;

  for (std::size_t restart = 0; restart < config.restarts; ++restart) {
    std::mt19937_64 rng(mix_seed(config.seed, restart));
    Matrix centroids = ws.kmeanspp_init(k, rng);

    Clustering run;
    run.assignments.assign(n, 0);
    run.inertia_history.reserve(config.max_iters + 1);

    for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
      ws.assign_with_repair(centroids, run.assignments);
      run.inertia_history.push_back(ws.inertia(centroids, run.assignments));
      run.iterations_run = iter + 1;

      Matrix updated = ws.means(k, run.assignments);
      double shift = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        shift = std::max(shift,
                         std::sqrt(sq_distance(updated.row(c), centroids.row(c))));
      }
      centroids = std::move(updated);
      if (shift < config.tol) break;
    }

    // Final pass so assignments, centroids and inertia agree exactly.
    ws.assign_with_repair(centroids, run.assignments);
    run.inertia = ws.inertia(centroids, run.assignments);
    run.inertia_history.push_back(run.inertia);
    run.centroids = std::move(centroids);

    for (std::size_t i = 1; i < run.inertia_history.size(); ++i) {
      if (run.inertia_history[i] > run.inertia_history[i - 1] * (1.0 + 1e-12) +
                                       1e-12) {
        fail(errc::divergence, "inertia increased between Lloyd iterations");
      }
    }

    if (!have_best || run.inertia < best.inertia) {
      best = std::move(run);
      have_best = true;
    }
  }
  return best;
}

std::size_t assign_nearest(const Matrix& centroids, std::span<const double> v) {
  if (centroids.rows == 0) fail(errc::precondition, "no centroids");
  if (centroids.cols != v.size()) {
    fail(errc::dimension_mismatch, "vector has dim " + std::to_string(v.size()) +
                                       ", centroids have dim " +
                                       std::to_string(centroids.cols));
  }
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows; ++c) {
    const double d = sq_distance(v, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::size_t choose_cluster_count(std::size_t description_count) {
  if (description_count == 0) fail(errc::precondition, "no descriptions");
  const auto rounded = static_cast<std::size_t>(
      std::llround(static_cast<double>(description_count) / 7.0));
  return std::min(std::max<std::size_t>(rounded, 2), description_count);
}

}  // namespace propspace
