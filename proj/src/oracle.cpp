#include "dspc/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <string>

#include "dspc/errors.hpp"
#include "dspc/rng.hpp"

namespace dspc::oracle {

std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x, double step) {
  std::vector<double> g(x.size());
  std::vector<double> probe = x;
  for (size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    double up = f(probe);
    probe[i] = x[i] - step;
    double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double max_rel_grad_err(const std::vector<double>& analytic,
                        const std::vector<double>& fd, double gate) {
  if (analytic.size() != fd.size()) {
    throw ShapeError("max_rel_grad_err: length mismatch");
  }
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    if (std::abs(analytic[i]) <= gate && std::abs(fd[i]) <= gate) continue;
    double rel = std::abs(analytic[i] - fd[i]) /
                 std::max(std::abs(analytic[i]), std::abs(fd[i]));
    worst = std::max(worst, rel);
  }
  return worst;
}

namespace {

double off_diag_norm(const std::vector<double>& a, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) {
        double v = a[static_cast<size_t>(i) * n + j];
        acc += v * v;
      }
    }
  }
  return std::sqrt(acc);
}

}  // namespace

DenseEig symmetric_eig(const std::vector<double>& a, int n) {
  if (n < 1 || static_cast<size_t>(n) * n != a.size()) {
    throw ShapeError("symmetric_eig: " + std::to_string(a.size()) +
                     " values for order " + std::to_string(n));
  }
  for (double v : a) {
    if (!std::isfinite(v)) {
      throw NumericError("symmetric_eig: non-finite entry");
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (std::abs(a[static_cast<size_t>(i) * n + j] -
                   a[static_cast<size_t>(j) * n + i]) > 1e-10) {
        throw NumericError("symmetric_eig: input not symmetric at (" +
                           std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }

  std::vector<double> m = a;  // rotated in place
  std::vector<double> v(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;

  auto at = [&](std::vector<double>& buf, int i, int j) -> double& {
    return buf[static_cast<size_t>(i) * n + j];
  };

  const double target = 1e-12;
  const int max_sweeps = 200;
  int sweep = 0;
  while (off_diag_norm(m, n) > target) {
    if (++sweep > max_sweeps) {
      throw NumericError("symmetric_eig: no convergence after " +
                         std::to_string(max_sweeps) + " sweeps");
    }
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = at(m, p, q);
        if (apq == 0.0) continue;
        double tau = (at(m, q, q) - at(m, p, p)) / (2.0 * apq);
        double t = (tau >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = t * c;
        // Rows/columns p and q of the similarity transform.
        for (int i = 0; i < n; ++i) {
          double mip = at(m, i, p), miq = at(m, i, q);
          at(m, i, p) = c * mip - s * miq;
          at(m, i, q) = s * mip + c * miq;
        }
        for (int i = 0; i < n; ++i) {
          double mpi = at(m, p, i), mqi = at(m, q, i);
          at(m, p, i) = c * mpi - s * mqi;
          at(m, q, i) = s * mpi + c * mqi;
        }
        for (int i = 0; i < n; ++i) {
          double vip = at(v, i, p), viq = at(v, i, q);
          at(v, i, p) = c * vip - s * viq;
          at(v, i, q) = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return m[static_cast<size_t>(x) * n + x] < m[static_cast<size_t>(y) * n + y];
  });

  DenseEig out;
  out.n = n;
  out.eigenvalues.resize(static_cast<size_t>(n));
  out.eigenvectors.assign(static_cast<size_t>(n) * n, 0.0);
  for (int j = 0; j < n; ++j) {
    int src = order[static_cast<size_t>(j)];
    out.eigenvalues[static_cast<size_t>(j)] =
        m[static_cast<size_t>(src) * n + src];
    for (int i = 0; i < n; ++i) {
      out.eigenvectors[static_cast<size_t>(i) * n + j] =
          v[static_cast<size_t>(i) * n + src];
    }
  }
  return out;
}

std::vector<int> kmeans_reference(const std::vector<double>& points, int n,
                                  int d, int k, uint64_t seed, int restarts,
                                  int max_iter) {
  if (n < 1 || d < 1 || static_cast<size_t>(n) * d != points.size()) {
    throw ShapeError("kmeans_reference: bad point buffer");
  }
  if (k < 1 || k > n) {
    throw ConfigError("kmeans_reference: k " + std::to_string(k) + " for " +
                      std::to_string(n) + " points");
  }
  auto sq_dist = [&](const double* x, const double* y) {
    double acc = 0.0;
    for (int t = 0; t < d; ++t) {
      double diff = x[t] - y[t];
      acc += diff * diff;
    }
    return acc;
  };

  Rng rng(seed);
  std::vector<int> best_labels(static_cast<size_t>(n), 0);
  double best_inertia = std::numeric_limits<double>::infinity();

  for (int r = 0; r < restarts; ++r) {
    // k-means++ seeding.
    std::vector<double> centers(static_cast<size_t>(k) * d);
    std::vector<double> min_sq(static_cast<size_t>(n),
                               std::numeric_limits<double>::infinity());
    int first = static_cast<int>(rng.randint(n));
    std::copy(points.begin() + static_cast<int64_t>(first) * d,
              points.begin() + static_cast<int64_t>(first + 1) * d,
              centers.begin());
    for (int c = 1; c < k; ++c) {
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        double dd = sq_dist(points.data() + static_cast<int64_t>(i) * d,
                            centers.data() + static_cast<int64_t>(c - 1) * d);
        min_sq[static_cast<size_t>(i)] =
            std::min(min_sq[static_cast<size_t>(i)], dd);
        total += min_sq[static_cast<size_t>(i)];
      }
      int pick;
      if (total <= 0.0) {
        pick = static_cast<int>(rng.randint(n));
      } else {
        double u = rng.uniform() * total;
        double run = 0.0;
        pick = n - 1;
        for (int i = 0; i < n; ++i) {
          run += min_sq[static_cast<size_t>(i)];
          if (run >= u) {
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
    std::vector<int> counts(static_cast<size_t>(k));
    for (int iter = 0; iter < max_iter; ++iter) {
      bool changed = false;
      for (int i = 0; i < n; ++i) {
        int arg = 0;
        double best = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          double dd = sq_dist(points.data() + static_cast<int64_t>(i) * d,
                              centers.data() + static_cast<int64_t>(c) * d);
          if (dd < best) {
            best = dd;
            arg = c;
          }
        }
        if (labels[static_cast<size_t>(i)] != arg) {
          labels[static_cast<size_t>(i)] = arg;
          changed = true;
        }
      }
      if (!changed && iter > 0) break;
      std::fill(centers.begin(), centers.end(), 0.0);
      std::fill(counts.begin(), counts.end(), 0);
      for (int i = 0; i < n; ++i) {
        int c = labels[static_cast<size_t>(i)];
        ++counts[static_cast<size_t>(c)];
        for (int t = 0; t < d; ++t) {
          centers[static_cast<size_t>(c) * d + t] +=
              points[static_cast<size_t>(i) * d + t];
        }
      }
      for (int c = 0; c < k; ++c) {
        if (counts[static_cast<size_t>(c)] == 0) {
          // Re-seed an empty cluster on a random point.
          int pick = static_cast<int>(rng.randint(n));
          std::copy(points.begin() + static_cast<int64_t>(pick) * d,
                    points.begin() + static_cast<int64_t>(pick + 1) * d,
                    centers.begin() + static_cast<int64_t>(c) * d);
        } else {
          double inv = 1.0 / counts[static_cast<size_t>(c)];
          for (int t = 0; t < d; ++t) {
            centers[static_cast<size_t>(c) * d + t] *= inv;
          }
        }
      }
    }

    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      inertia += sq_dist(
          points.data() + static_cast<int64_t>(i) * d,
          centers.data() +
              static_cast<int64_t>(labels[static_cast<size_t>(i)]) * d);
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_labels = labels;
    }
  }
  return best_labels;
}

std::vector<int> exact_spectral_clustering(const std::vector<double>& w, int n,
                                           int k, uint64_t seed) {
  if (n < 1 || static_cast<size_t>(n) * n != w.size()) {
    throw ShapeError("exact_spectral_clustering: bad affinity buffer");
  }
  if (k < 1 || k > n) {
    throw ConfigError("exact_spectral_clustering: k " + std::to_string(k));
  }
  std::vector<double> deg(static_cast<size_t>(n), 0.0);
  int floored = 0;
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += w[static_cast<size_t>(i) * n + j];
    if (acc < 1e-12) {
      acc = 1e-12;
      ++floored;
    }
    deg[static_cast<size_t>(i)] = acc;
  }
  if (floored > 0) {
    std::fprintf(stderr,
                 "warning: %d isolated vertices, degree floored to 1e-12\n",
                 floored);
  }

  // L_sym = I - D^{-1/2} W D^{-1/2}
  std::vector<double> lap(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    double di = 1.0 / std::sqrt(deg[static_cast<size_t>(i)]);
    for (int j = 0; j < n; ++j) {
      double dj = 1.0 / std::sqrt(deg[static_cast<size_t>(j)]);
      double norm = w[static_cast<size_t>(i) * n + j] * di * dj;
      lap[static_cast<size_t>(i) * n + j] = (i == j ? 1.0 : 0.0) - norm;
    }
  }
  // Exact symmetry despite rounding: the eigensolver checks it.
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double mean = 0.5 * (lap[static_cast<size_t>(i) * n + j] +
                           lap[static_cast<size_t>(j) * n + i]);
      lap[static_cast<size_t>(i) * n + j] = mean;
      lap[static_cast<size_t>(j) * n + i] = mean;
    }
  }

  DenseEig eig = symmetric_eig(lap, n);

  // Embedding: K eigenvectors of smallest eigenvalues, rows normalized.
  std::vector<double> emb(static_cast<size_t>(n) * k);
  for (int i = 0; i < n; ++i) {
    double norm = 0.0;
    for (int j = 0; j < k; ++j) {
      double e = eig.eigenvectors[static_cast<size_t>(i) * n + j];
      emb[static_cast<size_t>(i) * k + j] = e;
      norm += e * e;
    }
    norm = std::sqrt(norm);
    if (norm > 1e-12) {
      for (int j = 0; j < k; ++j) emb[static_cast<size_t>(i) * k + j] /= norm;
    }
  }
  return kmeans_reference(emb, n, k, k, seed);
}

MonteCarloKl monte_carlo_kl(const std::vector<double>& mu,
                            const std::vector<double>& log_var,
                            int64_t n_samples, uint64_t seed) {
  if (mu.size() != log_var.size() || mu.empty()) {
    throw ShapeError("monte_carlo_kl: mu/log_var length mismatch");
  }
  if (n_samples < 10000) {
    throw ConfigError("monte_carlo_kl: need at least 1e4 samples, got " +
                      std::to_string(n_samples));
  }
  size_t d = mu.size();
  Rng rng(seed);
  double mean = 0.0, m2 = 0.0;
  for (int64_t s = 0; s < n_samples; ++s) {
    // One reparameterized draw; log p(z) - log q(z) with
    // p = N(mu, diag(exp(log_var))), q = N(0, I).
    double val = 0.0;
    for (size_t t = 0; t < d; ++t) {
      double eps = rng.normal();
      double z = mu[t] + std::exp(0.5 * log_var[t]) * eps;
      double log_p = -0.5 * log_var[t] - 0.5 * eps * eps;
      double log_q = -0.5 * z * z;  // shared -d/2 log(2*pi) cancels
      val += log_p - log_q;
    }
    double delta = val - mean;
    mean += delta / static_cast<double>(s + 1);
    m2 += delta * (val - mean);
  }
  MonteCarloKl out;
  out.estimate = mean;
  double var = m2 / static_cast<double>(n_samples - 1);
  out.std_error = std::sqrt(var / static_cast<double>(n_samples));
  return out;
}

}  // namespace dspc::oracle
