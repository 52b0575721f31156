#pragma once

#include <cstdint>
#include <vector>

#include "dspc/params.hpp"
#include "dspc/tensor.hpp"

namespace dspc {

// Dense symmetric affinity with zero diagonal; entries in [0,1]. Each row
// keeps at least its k out-edges; in-edges from other rows' neighbor lists
// are unbounded, so the global edge count is what is capped (≤ m·k).
struct AffinityGraph {
  int m = 0;
  int k = 0;
  double sigma = 0.0;
  std::vector<double> w;  // m*m row-major

  double at(int i, int j) const { return w[static_cast<size_t>(i) * m + j]; }
};

// W_ij = exp(−‖z_i−z_j‖² / 2σ²) on edges where j is among i's k nearest
// neighbors or vice versa. σ is the median retained neighbor distance,
// floored at 1e-8 so identical codes degrade to W=1 on retained edges.
AffinityGraph build_affinity(const Tensor& z, int k = 3);

// Four fully connected layers d→widths→K plus the orthogonalizing output
// step. `ortho_factor` holds the Cholesky factor of the last forward pass;
// `mu_y` the cluster means used by the joint-phase prior coupling.
struct ClusterHead {
  int d = 0;
  int k = 0;
  std::vector<int> widths;
  Tensor ortho_factor;        // [K,K] lower-triangular, empty before first use
  std::vector<double> mu_y;   // k*d row-major, empty until initialized
};

ClusterHead make_cluster_head(int d, int k,
                              std::vector<int> widths = {256, 128, 64});

// Registers the head's parameters ("y.fc0.w", ..., "y.fc3.b") on `p`.
void init_cluster_params(ParamSet& p, const ClusterHead& head, uint64_t seed);

// Runs the head on a batch of codes and rescales the output so that
// ‖(1/m)YᵀY − I‖_F ≤ 1e-6: factor (1/m)ỸᵀỸ + 1e-9·I = BBᵀ and map
// Y = Ỹ(B⁻¹)ᵀ, repeating on the result until within tolerance (one pass on
// well-conditioned batches). The composed lower-triangular factor is
// recorded in head.ortho_factor and constant under differentiation. Throws
// NumericError when the batch is rank deficient (the iteration cannot
// converge) and ShapeError when m < K.
Tensor forward_orthogonalized(const Tensor& z, const ParamSet& p,
                              ClusterHead& head);

// Same network but reusing head.ortho_factor from an earlier batch, for
// embedding new samples against a reference factor.
Tensor forward_with_factor(const Tensor& z, const ParamSet& p,
                           const ClusterHead& head);

// Folds the stored factor into the output layer (fc3 ← fc3·(B⁻¹)ᵀ) so the
// raw output of the next forward starts where the last orthogonalized output
// left off, with Gram ≈ I. One call after init conditions head training:
// it removes the huge initial penalty transient that otherwise wrecks the
// features. The stored factor is consumed. Throws ConfigError when no
// factor has been recorded.
void absorb_ortho_factor(ParamSet& p, ClusterHead& head);

// (1/m²)·Σ_ij W_ij‖y_i − y_j‖². W is constant; gradients flow through Y.
Tensor spectral_loss(const AffinityGraph& g, const Tensor& y);

// Training stabilizer: ‖(1/m)ỸᵀỸ − I‖²_F of the raw pre-orthogonalization
// output, reconstructed as Ỹ = Y·Bᵀ from the stored (constant) factor.
// Without it, gradient steps on the spectral loss keep shrinking the raw
// features' weak directions — the orthogonalization renormalizes the output
// but not the features, whose rank eventually decays below rescue. Added to
// the training objective it pins the raw Gram near I; evaluation still uses
// the exactly orthogonalized Y.
Tensor ortho_penalty(const Tensor& y, const ClusterHead& head);

// γ·(1/m)·Σ_i Σ_k softmax(y)_ik · KL(N(mu_i, diag exp(log_var_i)) ‖ N(mu_y[k], I)).
// mu_y is constant under differentiation.
Tensor cluster_prior_kl(const Tensor& mu, const Tensor& log_var,
                        const Tensor& y_soft, const std::vector<double>& mu_y,
                        double gamma);

struct Assignment {
  std::vector<int> labels;
  std::vector<double> y;  // n*k embedding rows the labels were read from
  int k = 0;
};

// Hard labels by seeded k-means on the rows of Y (20 restarts, 300
// iterations, relative tolerance 1e-6).
Assignment assign_clusters(const Tensor& y, int k, uint64_t seed);

// Per-cluster means of z rows; clusters with no members keep their row from
// `previous` (which must be k*d, e.g. the k-means initialization).
std::vector<double> update_cluster_means(const std::vector<double>& z, int n,
                                         int d, const std::vector<int>& labels,
                                         int k,
                                         const std::vector<double>& previous);

}  // namespace dspc
