#include "dspc/spectral.hpp"

#include <algorithm>
#include <cmath>

#include "dspc/errors.hpp"
#include "dspc/ops.hpp"
#include "dspc/kmeans.hpp"
#include "dspc/rng.hpp"

namespace dspc {

namespace {
constexpr double kSigmaFloor = 1e-8;
constexpr double kOrthoEps = 1e-9;
constexpr double kOrthoTarget = 1e-7;  // 10x inside the public 1e-6 bound
constexpr int kMaxOrthoPasses = 40;
}  // namespace

AffinityGraph build_affinity(const Tensor& z, int k) {
  if (z.shape().size() != 2) {
    throw ShapeError("affinity expects [m,d] codes, got " + shape_str(z.shape()));
  }
  int m = z.dim(0), d = z.dim(1);
  if (k < 1) throw ConfigError("affinity needs k >= 1");
  if (m <= k) {
    throw GraphError("affinity needs more than k=" + std::to_string(k) +
                     " rows, got " + std::to_string(m));
  }
  const auto& zv = z.data();
  std::vector<double> sq(static_cast<size_t>(m) * m, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      double acc = 0.0;
      const double* a = zv.data() + static_cast<int64_t>(i) * d;
      const double* b = zv.data() + static_cast<int64_t>(j) * d;
      for (int t = 0; t < d; ++t) {
        double diff = a[t] - b[t];
        acc += diff * diff;
      }
      sq[static_cast<size_t>(i) * m + j] = acc;
      sq[static_cast<size_t>(j) * m + i] = acc;
    }
  }

  // directed k-NN, ties resolved toward the lower index
  std::vector<char> edge(static_cast<size_t>(m) * m, 0);
  std::vector<double> retained;
  retained.reserve(static_cast<size_t>(m) * k);
  std::vector<std::pair<double, int>> cand(static_cast<size_t>(m - 1));
  for (int i = 0; i < m; ++i) {
    int c = 0;
    for (int j = 0; j < m; ++j) {
      if (j == i) continue;
      cand[static_cast<size_t>(c++)] = {sq[static_cast<size_t>(i) * m + j], j};
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (int t = 0; t < k; ++t) {
      edge[static_cast<size_t>(i) * m + cand[static_cast<size_t>(t)].second] = 1;
      retained.push_back(std::sqrt(cand[static_cast<size_t>(t)].first));
    }
  }

  std::sort(retained.begin(), retained.end());
  size_t half = retained.size() / 2;
  double median = retained.size() % 2 == 1
                      ? retained[half]
                      : 0.5 * (retained[half - 1] + retained[half]);
  double sigma = std::max(median, kSigmaFloor);

  AffinityGraph g;
  g.m = m;
  g.k = k;
  g.sigma = sigma;
  g.w.assign(static_cast<size_t>(m) * m, 0.0);
  double inv = 1.0 / (2.0 * sigma * sigma);
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      if (!edge[static_cast<size_t>(i) * m + j] &&
          !edge[static_cast<size_t>(j) * m + i]) {
        continue;
      }
      double val = std::exp(-sq[static_cast<size_t>(i) * m + j] * inv);
      g.w[static_cast<size_t>(i) * m + j] = val;
      g.w[static_cast<size_t>(j) * m + i] = val;
    }
  }
  return g;
}

ClusterHead make_cluster_head(int d, int k, std::vector<int> widths) {
  if (d < 1 || k < 1) throw ConfigError("cluster head needs d >= 1 and k >= 1");
  if (widths.size() != 3) {
    throw ConfigError("cluster head takes exactly three hidden widths");
  }
  for (int w : widths) {
    if (w < 1) throw ConfigError("cluster head widths must be positive");
  }
  ClusterHead h;
  h.d = d;
  h.k = k;
  h.widths = std::move(widths);
  return h;
}

void init_cluster_params(ParamSet& p, const ClusterHead& head, uint64_t seed) {
  Rng rng(seed);
  std::vector<int> dims = {head.d, head.widths[0], head.widths[1],
                           head.widths[2], head.k};
  for (int layer = 0; layer < 4; ++layer) {
    int fan_in = dims[static_cast<size_t>(layer)];
    int fan_out = dims[static_cast<size_t>(layer) + 1];
    std::vector<double> w(static_cast<size_t>(fan_in) * fan_out);
    double stddev = std::sqrt(2.0 / fan_in);
    for (double& v : w) v = stddev * rng.normal();
    std::string base = "y.fc" + std::to_string(layer);
    p.add(base + ".w", Tensor::from_data({fan_in, fan_out}, std::move(w), true));
    p.add(base + ".b", Tensor::zeros({fan_out}, true));
  }
}

namespace {

Tensor cluster_net(const Tensor& z, const ParamSet& p) {
  Tensor h = z;
  for (int layer = 0; layer < 4; ++layer) {
    std::string base = "y.fc" + std::to_string(layer);
    h = add_rowvec(matmul(h, p.get(base + ".w")), p.get(base + ".b"));
    if (layer < 3) h = relu(h);
  }
  return h;
}

// (1/m)·YᵀY into `gram`; returns ‖gram − I‖_F.
double gram_residual(const std::vector<double>& yv, int m, int k,
                     std::vector<double>& gram) {
  gram.assign(static_cast<size_t>(k) * k, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* row = yv.data() + static_cast<int64_t>(i) * k;
    for (int a = 0; a < k; ++a) {
      for (int b = a; b < k; ++b) {
        gram[static_cast<size_t>(a) * k + b] += row[a] * row[b];
      }
    }
  }
  double acc = 0.0;
  for (int a = 0; a < k; ++a) {
    for (int b = a; b < k; ++b) {
      double v = gram[static_cast<size_t>(a) * k + b] / m;
      gram[static_cast<size_t>(a) * k + b] = v;
      gram[static_cast<size_t>(b) * k + a] = v;
      double diff = v - (a == b ? 1.0 : 0.0);
      acc += diff * diff * (a == b ? 1.0 : 2.0);
    }
  }
  return std::sqrt(acc);
}

Tensor orthogonalize(const Tensor& y_tilde, ClusterHead& head) {
  int m = y_tilde.dim(0), k = y_tilde.dim(1);
  Tensor y = y_tilde;
  std::vector<double> total(static_cast<size_t>(k) * k, 0.0);
  for (int d = 0; d < k; ++d) total[static_cast<size_t>(d) * k + d] = 1.0;

  // One regularized factorization fixes a well-conditioned batch; repeating
  // it on the result drives ill-conditioned (but full-rank) batches to the
  // same tolerance. Rank-deficient batches never converge.
  bool converged = false;
  std::vector<double> gram;
  for (int pass = 0; pass <= kMaxOrthoPasses; ++pass) {
    if (gram_residual(y.data(), m, k, gram) <= kOrthoTarget) {
      converged = true;
      break;
    }
    for (int d = 0; d < k; ++d) {
      gram[static_cast<size_t>(d) * k + d] += kOrthoEps;
    }
    Tensor b;
    try {
      b = cholesky(Tensor::from_data({k, k}, gram));
    } catch (const NotPositiveDefiniteError&) {
      throw NumericError(
          "orthogonalization failed: batch features are rank deficient; "
          "use a larger batch");
    }
    y = transpose(triangular_solve(b, transpose(y)));
    // composed factor so that y = y_tilde·(total⁻¹)ᵀ; lower × lower stays lower
    const auto& bv = b.data();
    std::vector<double> next(static_cast<size_t>(k) * k, 0.0);
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j <= i; ++j) {
        double s = 0.0;
        for (int t = j; t <= i; ++t) {
          s += bv[static_cast<size_t>(i) * k + t] *
               total[static_cast<size_t>(t) * k + j];
        }
        next[static_cast<size_t>(i) * k + j] = s;
      }
    }
    total = std::move(next);
  }
  if (!converged) {
    throw NumericError(
        "orthogonalization failed: batch features are rank deficient; "
        "use a larger batch");
  }
  head.ortho_factor = Tensor::from_data({k, k}, std::move(total));
  return y;
}

}  // namespace

Tensor forward_orthogonalized(const Tensor& z, const ParamSet& p,
                              ClusterHead& head) {
  if (z.shape().size() != 2 || z.dim(1) != head.d) {
    throw ShapeError("cluster head expects [m," + std::to_string(head.d) +
                     "], got " + shape_str(z.shape()));
  }
  if (z.dim(0) < head.k) {
    throw ShapeError("orthogonalization needs batch >= " +
                     std::to_string(head.k) + " rows, got " +
                     std::to_string(z.dim(0)));
  }
  return orthogonalize(cluster_net(z, p), head);
}

Tensor forward_with_factor(const Tensor& z, const ParamSet& p,
                           const ClusterHead& head) {
  if (z.shape().size() != 2 || z.dim(1) != head.d) {
    throw ShapeError("cluster head expects [m," + std::to_string(head.d) +
                     "], got " + shape_str(z.shape()));
  }
  if (!head.ortho_factor.defined() || head.ortho_factor.numel() == 0) {
    throw ConfigError("no orthogonalization factor recorded yet");
  }
  return transpose(
      triangular_solve(head.ortho_factor, transpose(cluster_net(z, p))));
}

Tensor spectral_loss(const AffinityGraph& g, const Tensor& y) {
  if (y.shape().size() != 2 || y.dim(0) != g.m) {
    throw ShapeError("spectral loss expects y with " + std::to_string(g.m) +
                     " rows, got " + shape_str(y.shape()));
  }
  int m = g.m;
  // Σ_ij W_ij ‖y_i−y_j‖² = 2·tr(Yᵀ(D−W)Y) for symmetric W
  std::vector<double> lap(static_cast<size_t>(m) * m, 0.0);
  for (int i = 0; i < m; ++i) {
    double deg = 0.0;
    for (int j = 0; j < m; ++j) {
      double w = g.w[static_cast<size_t>(i) * m + j];
      deg += w;
      lap[static_cast<size_t>(i) * m + j] = -w;
    }
    lap[static_cast<size_t>(i) * m + i] += deg;
  }
  Tensor l = Tensor::from_data({m, m}, std::move(lap));
  return mul(sum(mul(y, matmul(l, y))), 2.0 / (static_cast<double>(m) * m));
}

void absorb_ortho_factor(ParamSet& p, ClusterHead& head) {
  if (!head.ortho_factor.defined() || head.ortho_factor.numel() == 0) {
    throw ConfigError("no orthogonalization factor recorded yet");
  }
  int k = head.k;
  const auto& b = head.ortho_factor.data();
  auto solve_row = [&](double* row) {
    // row ← row·(B⁻¹)ᵀ, i.e. solve B·x = row in place
    for (int i = 0; i < k; ++i) {
      double s = row[i];
      for (int t = 0; t < i; ++t) s -= b[static_cast<size_t>(i) * k + t] * row[t];
      row[i] = s / b[static_cast<size_t>(i) * k + i];
    }
  };
  auto& w = p.get("y.fc3.w").data();
  int fan_in = static_cast<int>(w.size()) / k;
  for (int r = 0; r < fan_in; ++r) solve_row(w.data() + static_cast<size_t>(r) * k);
  solve_row(p.get("y.fc3.b").data().data());
  head.ortho_factor = Tensor();
}

Tensor ortho_penalty(const Tensor& y, const ClusterHead& head) {
  if (!head.ortho_factor.defined() || head.ortho_factor.numel() == 0) {
    throw ConfigError("no orthogonalization factor recorded yet");
  }
  if (y.shape().size() != 2 || y.dim(1) != head.k) {
    throw ShapeError("penalty expects [m," + std::to_string(head.k) +
                     "] embedding, got " + shape_str(y.shape()));
  }
  int m = y.dim(0), k = head.k;
  Tensor raw = matmul(y, transpose(head.ortho_factor));
  Tensor gram = mul(matmul(transpose(raw), raw), 1.0 / m);
  std::vector<double> eyev(static_cast<size_t>(k) * k, 0.0);
  for (int d = 0; d < k; ++d) eyev[static_cast<size_t>(d) * k + d] = 1.0;
  return sum(square(sub(gram, Tensor::from_data({k, k}, std::move(eyev)))));
}

Tensor cluster_prior_kl(const Tensor& mu, const Tensor& log_var,
                        const Tensor& y_soft, const std::vector<double>& mu_y,
                        double gamma) {
  if (mu.shape().size() != 2 || mu.shape() != log_var.shape()) {
    throw ShapeError("prior coupling expects matching [m,d] mu and log_var");
  }
  if (y_soft.shape().size() != 2 || y_soft.dim(0) != mu.dim(0)) {
    throw ShapeError("soft assignments must have one row per sample");
  }
  int m = mu.dim(0), d = mu.dim(1), k = y_soft.dim(1);
  if (mu_y.size() != static_cast<size_t>(k) * d) {
    throw ShapeError("mu_y has " + std::to_string(mu_y.size()) +
                     " entries, expected " + std::to_string(k * d));
  }
  if (gamma < 0.0) throw ConfigError("gamma must be >= 0");

  // KL_ik = 0.5·(Σ_d(e^lv − 1 − lv) + ‖mu_i‖² − 2·mu_i·mu_y_k + ‖mu_y_k‖²)
  Tensor centers = Tensor::from_data({k, d}, mu_y);
  std::vector<double> center_sq(static_cast<size_t>(k), 0.0);
  for (int c = 0; c < k; ++c) {
    for (int t = 0; t < d; ++t) {
      double v = mu_y[static_cast<size_t>(c) * d + t];
      center_sq[static_cast<size_t>(c)] += v * v;
    }
  }
  Tensor per_sample = add(row_sum(sub(exp(log_var), add(log_var, 1.0))),
                          row_sum(square(mu)));
  Tensor cross = mul(matmul(mu, transpose(centers)), -2.0);
  Tensor kl_mat = mul(add_colvec(add_rowvec(cross, Tensor::from_data({k}, center_sq)),
                                 per_sample),
                      0.5);
  return mul(sum(mul(y_soft, kl_mat)), gamma / m);
}

Assignment assign_clusters(const Tensor& y, int k, uint64_t seed) {
  if (y.shape().size() != 2) {
    throw ShapeError("assignment expects [n,K] embedding, got " +
                     shape_str(y.shape()));
  }
  KmeansResult r = kmeans(y.data(), y.dim(0), y.dim(1), k, seed, 20, 300, 1e-6);
  return Assignment{std::move(r.labels), y.data(), k};
}

std::vector<double> update_cluster_means(const std::vector<double>& z, int n,
                                         int d, const std::vector<int>& labels,
                                         int k,
                                         const std::vector<double>& previous) {
  if (n < 1 || d < 1 || z.size() != static_cast<size_t>(n) * d) {
    throw ShapeError("cluster means: bad code buffer");
  }
  if (static_cast<int>(labels.size()) != n) {
    throw ShapeError("cluster means: label count mismatch");
  }
  if (previous.size() != static_cast<size_t>(k) * d) {
    throw ShapeError("cluster means: previous means must be k*d");
  }
  std::vector<double> out(static_cast<size_t>(k) * d, 0.0);
  std::vector<int64_t> counts(static_cast<size_t>(k), 0);
  for (int i = 0; i < n; ++i) {
    int c = labels[static_cast<size_t>(i)];
    if (c < 0 || c >= k) {
      throw ConfigError("cluster means: label " + std::to_string(c) +
                        " outside [0," + std::to_string(k) + ")");
    }
    ++counts[static_cast<size_t>(c)];
    const double* row = z.data() + static_cast<int64_t>(i) * d;
    double* acc = out.data() + static_cast<int64_t>(c) * d;
    for (int t = 0; t < d; ++t) acc[t] += row[t];
  }
  for (int c = 0; c < k; ++c) {
    double* row = out.data() + static_cast<int64_t>(c) * d;
    if (counts[static_cast<size_t>(c)] == 0) {
      const double* prev = previous.data() + static_cast<int64_t>(c) * d;
      std::copy(prev, prev + d, row);
    } else {
      double inv = 1.0 / static_cast<double>(counts[static_cast<size_t>(c)]);
      for (int t = 0; t < d; ++t) row[t] *= inv;
    }
  }
  return out;
}

}  // namespace dspc
