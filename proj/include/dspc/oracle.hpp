#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace dspc::oracle {

// Brute-force and closed-form reference implementations used by tests. These
// deliberately share no numerics with the library proper: distances, KL and
// eigen-structure are re-derived from scratch so a bug in the library cannot
// hide inside its own oracle.

// Central differences (f(x+h e_i) - f(x-h e_i)) / (2h), one call pair per
// coordinate of x.
std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x, double step = 1e-4);

// Worst relative disagreement between an analytic gradient and its
// finite-difference estimate, ignoring coordinates where |analytic| <= gate
// (central differences drown in cancellation noise there).
double max_rel_grad_err(const std::vector<double>& analytic,
                        const std::vector<double>& fd, double gate = 1e-6);

struct DenseEig {
  int n = 0;
  std::vector<double> eigenvalues;   // ascending
  std::vector<double> eigenvectors;  // row-major n x n; column j pairs with
                                     // eigenvalues[j]; columns orthonormal
};

// Cyclic Jacobi rotations on a symmetric matrix (row-major n x n), iterated
// until the off-diagonal Frobenius norm falls to 1e-12. Intended for n <= 512.
// Throws on asymmetric input (tolerance 1e-10) and on non-finite entries.
DenseEig symmetric_eig(const std::vector<double>& a, int n);

// Classical spectral clustering on a dense symmetric affinity matrix:
// L_sym = I - D^{-1/2} W D^{-1/2}, eigenvectors of the K smallest
// eigenvalues, row-normalized, then this module's own k-means. Zero-degree
// vertices get their degree floored to 1e-12 with a warning on stderr.
// Deterministic for a fixed seed.
std::vector<int> exact_spectral_clustering(const std::vector<double>& w, int n,
                                           int k, uint64_t seed);

// Reference k-means (k-means++ seeding, Lloyd iterations, restarts keep the
// lowest inertia). points is row-major n x d.
std::vector<int> kmeans_reference(const std::vector<double>& points, int n,
                                  int d, int k, uint64_t seed,
                                  int restarts = 10, int max_iter = 100);

struct MonteCarloKl {
  double estimate = 0.0;
  double std_error = 0.0;
};

// Sampling estimate of KL(N(mu, diag(exp(log_var))) || N(0, I)) by averaging
// log p(z) - log q(z) over reparameterized draws. Requires n_samples >= 1e4
// so the reported standard error is meaningful.
MonteCarloKl monte_carlo_kl(const std::vector<double>& mu,
                            const std::vector<double>& log_var,
                            int64_t n_samples, uint64_t seed);

}  // namespace dspc::oracle
