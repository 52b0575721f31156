#include "dspc/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dspc/errors.hpp"
#include "dspc/rng.hpp"

namespace dspc {

KmeansResult kmeans(const std::vector<double>& points, int n, int d, int k,
                    uint64_t seed, int restarts, int max_iter, double tol) {
  if (n < 1 || d < 1 || static_cast<size_t>(n) * d != points.size()) {
    throw ShapeError("kmeans: bad point buffer");
  }
  if (k < 1 || k > n) {
    throw ConfigError("kmeans: k " + std::to_string(k) + " for " +
                      std::to_string(n) + " points");
  }
  auto sq_dist = [d, &points](int i, const double* c) {
    const double* x = points.data() + static_cast<int64_t>(i) * d;
    double acc = 0.0;
    for (int t = 0; t < d; ++t) {
      double diff = x[t] - c[t];
      acc += diff * diff;
    }
    return acc;
  };

  Rng rng(seed);
  KmeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();

  for (int run = 0; run < restarts; ++run) {
    std::vector<double> centers(static_cast<size_t>(k) * d);
    // k-means++: first center uniform, then proportional to squared distance.
    std::vector<double> min_sq(static_cast<size_t>(n),
                               std::numeric_limits<double>::infinity());
    int first = static_cast<int>(rng.randint(n));
    std::copy(points.begin() + static_cast<int64_t>(first) * d,
              points.begin() + static_cast<int64_t>(first + 1) * d,
              centers.begin());
    for (int c = 1; c < k; ++c) {
      double total = 0.0;
      const double* prev = centers.data() + static_cast<int64_t>(c - 1) * d;
      for (int i = 0; i < n; ++i) {
        min_sq[static_cast<size_t>(i)] =
            std::min(min_sq[static_cast<size_t>(i)], sq_dist(i, prev));
        total += min_sq[static_cast<size_t>(i)];
      }
      int pick = n - 1;
      if (total <= 0.0) {
        pick = static_cast<int>(rng.randint(n));
      } else {
        double u = rng.uniform() * total;
        double run_sum = 0.0;
        for (int i = 0; i < n; ++i) {
          run_sum += min_sq[static_cast<size_t>(i)];
          if (run_sum >= u) {
            pick = i;
            break;
          }
        }
      }
      std::copy(points.begin() + static_cast<int64_t>(pick) * d,
                points.begin() + static_cast<int64_t>(pick + 1) * d,
                centers.begin() + static_cast<int64_t>(c) * d);
    }

    std::vector<int> labels(static_cast<size_t>(n), -1);
    std::vector<double> dist_to_own(static_cast<size_t>(n), 0.0);
    std::vector<int64_t> counts(static_cast<size_t>(k), 0);
    double prev_inertia = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < max_iter; ++iter) {
      bool changed = false;
      double inertia = 0.0;
      for (int i = 0; i < n; ++i) {
        int arg = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          double dd = sq_dist(i, centers.data() + static_cast<int64_t>(c) * d);
          if (dd < bd) {
            bd = dd;
            arg = c;
          }
        }
        if (labels[static_cast<size_t>(i)] != arg) {
          labels[static_cast<size_t>(i)] = arg;
          changed = true;
        }
        dist_to_own[static_cast<size_t>(i)] = bd;
        inertia += bd;
      }

      std::fill(counts.begin(), counts.end(), 0);
      for (int i = 0; i < n; ++i) ++counts[static_cast<size_t>(labels[static_cast<size_t>(i)])];
      // Empty clusters steal the globally farthest point (lowest index on
      // ties) so every restart stays at exactly k clusters.
      for (int c = 0; c < k; ++c) {
        if (counts[static_cast<size_t>(c)] != 0) continue;
        int far = -1;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          if (counts[static_cast<size_t>(labels[static_cast<size_t>(i)])] <= 1) continue;
          if (dist_to_own[static_cast<size_t>(i)] > far_d) {
            far_d = dist_to_own[static_cast<size_t>(i)];
            far = i;
          }
        }
        if (far < 0) continue;  // degenerate: fewer distinct points than k
        --counts[static_cast<size_t>(labels[static_cast<size_t>(far)])];
        labels[static_cast<size_t>(far)] = c;
        counts[static_cast<size_t>(c)] = 1;
        dist_to_own[static_cast<size_t>(far)] = 0.0;
        changed = true;
      }

      std::fill(centers.begin(), centers.end(), 0.0);
      for (int i = 0; i < n; ++i) {
        int c = labels[static_cast<size_t>(i)];
        const double* x = points.data() + static_cast<int64_t>(i) * d;
        double* ctr = centers.data() + static_cast<int64_t>(c) * d;
        for (int t = 0; t < d; ++t) ctr[t] += x[t];
      }
      for (int c = 0; c < k; ++c) {
        if (counts[static_cast<size_t>(c)] > 0) {
          double inv = 1.0 / static_cast<double>(counts[static_cast<size_t>(c)]);
          double* ctr = centers.data() + static_cast<int64_t>(c) * d;
          for (int t = 0; t < d; ++t) ctr[t] *= inv;
        }
      }

      bool converged_inertia =
          std::isfinite(prev_inertia) &&
          (prev_inertia - inertia) <= tol * std::max(prev_inertia, 1e-300);
      prev_inertia = inertia;
      if (!changed || converged_inertia) break;
    }

    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      inertia += sq_dist(i, centers.data() +
                                static_cast<int64_t>(
                                    labels[static_cast<size_t>(i)]) *
                                    d);
    }
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.labels = labels;
      best.centers = centers;
    }
  }
  return best;
}

}  // namespace dspc
