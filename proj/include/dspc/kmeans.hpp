#pragma once

#include <cstdint>
#include <vector>

namespace dspc {

struct KmeansResult {
  std::vector<int> labels;     // length n, values in [0, k)
  std::vector<double> centers; // k x d row-major
  double inertia = 0.0;        // sum of squared distances to assigned center
};

// Seeded k-means on row-major n x d points: k-means++ seeding, Lloyd updates,
// `restarts` independent runs keeping the lowest inertia. A run stops when
// assignments are stable or the relative inertia improvement falls below
// `tol`. Empty clusters steal the point farthest from its assigned center.
KmeansResult kmeans(const std::vector<double>& points, int n, int d, int k,
                    uint64_t seed, int restarts = 20, int max_iter = 300,
                    double tol = 1e-6);

}  // namespace dspc
