#include "dspc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "dspc/parallel.hpp"

namespace dspc {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_dim(const char* op, const Tensor& a, size_t rank) {
  if (a.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got shape " +
                     shape_str(a.shape()));
  }
}

// Grad buffer of parent i, or nullptr when that parent does not want one.
std::vector<double>* parent_grad(detail::Node* self, size_t i) {
  auto& p = self->parents[i];
  if (!p->requires_grad) return nullptr;
  p->ensure_grad();
  return &p->grad;
}

Tensor unary(const char* name, const Tensor& a, double (*f)(double),
             double (*df)(double x, double y)) {
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return make_op(name, a.shape(), std::move(out), {a},
                 [df](detail::Node* self) {
                   auto* g = parent_grad(self, 0);
                   if (!g) return;
                   const auto& x = self->parents[0]->value;
                   for (size_t i = 0; i < x.size(); ++i) {
                     (*g)[i] += self->grad[i] * df(x[i], self->value[i]);
                   }
                 });
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* A, const double* B, double* C, int64_t m, int64_t k,
             int64_t n) {
  parallel_for(m, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      double* crow = C + i * n;
      for (int64_t t = 0; t < k; ++t) {
        double a = A[i * k + t];
        if (a == 0.0) continue;
        const double* brow = B + t * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
      }
    }
  });
}

// C[m x k] += A[m x n] * B[k x n]^T
void gemm_nt(const double* A, const double* B, double* C, int64_t m, int64_t n,
             int64_t k) {
  parallel_for(m, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const double* arow = A + i * n;
      double* crow = C + i * k;
      for (int64_t t = 0; t < k; ++t) {
        const double* brow = B + t * n;
        double acc = 0.0;
        for (int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
        crow[t] += acc;
      }
    }
  });
}

// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* A, const double* B, double* C, int64_t m, int64_t k,
             int64_t n) {
  parallel_for(k, [&](int64_t lo, int64_t hi) {
    for (int64_t t = lo; t < hi; ++t) {
      double* crow = C + t * n;
      for (int64_t i = 0; i < m; ++i) {
        double a = A[i * k + t];
        if (a == 0.0) continue;
        const double* brow = B + i * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
      }
    }
  });
}

// Shared geometry for the three convolution kernels. "big" is the side with
// extent H x W and ci channels; "small" is the side with extent OH x OW and
// co channels; they are linked by iy = oy*stride - padding + ky.
struct ConvGeom {
  int nb, ci, H, W;
  int co, OH, OW;
  int kh, kw, stride, padding;
};

int64_t idx4(int64_t b, int64_t c, int64_t y, int64_t x, int64_t C, int64_t H,
             int64_t W) {
  return ((b * C + c) * H + y) * W + x;
}

// small[b,o,oy,ox] += sum_{c,ky,kx} big[b,c,iy,ix] * ker[o,c,ky,kx]
// Used as: conv2d forward, conv2d_transpose input gradient.
void conv_gather(const double* big, const double* ker, const ConvGeom& g,
                 double* small) {
  parallel_for(static_cast<int64_t>(g.nb) * g.co, [&](int64_t lo, int64_t hi) {
    for (int64_t bo = lo; bo < hi; ++bo) {
      int b = static_cast<int>(bo / g.co);
      int o = static_cast<int>(bo % g.co);
      for (int oy = 0; oy < g.OH; ++oy) {
        for (int ox = 0; ox < g.OW; ++ox) {
          double acc = 0.0;
          for (int c = 0; c < g.ci; ++c) {
            for (int ky = 0; ky < g.kh; ++ky) {
              int iy = oy * g.stride - g.padding + ky;
              if (iy < 0 || iy >= g.H) continue;
              for (int kx = 0; kx < g.kw; ++kx) {
                int ix = ox * g.stride - g.padding + kx;
                if (ix < 0 || ix >= g.W) continue;
                acc += big[idx4(b, c, iy, ix, g.ci, g.H, g.W)] *
                       ker[idx4(o, c, ky, kx, g.ci, g.kh, g.kw)];
              }
            }
          }
          small[idx4(b, o, oy, ox, g.co, g.OH, g.OW)] += acc;
        }
      }
    }
  });
}

// big[b,c,iy,ix] += sum_{o,ky,kx} small[b,o,oy,ox] * ker[o,c,ky,kx]
// Used as: conv2d input gradient, conv2d_transpose forward.
void conv_scatter(const double* small, const double* ker, const ConvGeom& g,
                  double* big) {
  parallel_for(g.nb, [&](int64_t lo, int64_t hi) {
    for (int64_t b = lo; b < hi; ++b) {
      for (int o = 0; o < g.co; ++o) {
        for (int oy = 0; oy < g.OH; ++oy) {
          for (int ox = 0; ox < g.OW; ++ox) {
            double v = small[idx4(b, o, oy, ox, g.co, g.OH, g.OW)];
            for (int c = 0; c < g.ci; ++c) {
              for (int ky = 0; ky < g.kh; ++ky) {
                int iy = oy * g.stride - g.padding + ky;
                if (iy < 0 || iy >= g.H) continue;
                for (int kx = 0; kx < g.kw; ++kx) {
                  int ix = ox * g.stride - g.padding + kx;
                  if (ix < 0 || ix >= g.W) continue;
                  big[idx4(b, c, iy, ix, g.ci, g.H, g.W)] +=
                      v * ker[idx4(o, c, ky, kx, g.ci, g.kh, g.kw)];
                }
              }
            }
          }
        }
      }
    }
  });
}

// gk[o,c,ky,kx] += sum_{b,oy,ox} small[b,o,oy,ox] * big[b,c,iy,ix]
// Kernel gradient for both convolution directions.
void conv_kernel_acc(const double* small, const double* big, const ConvGeom& g,
                     double* gk) {
  parallel_for(g.co, [&](int64_t lo, int64_t hi) {
    for (int64_t o = lo; o < hi; ++o) {
      for (int b = 0; b < g.nb; ++b) {
        for (int oy = 0; oy < g.OH; ++oy) {
          for (int ox = 0; ox < g.OW; ++ox) {
            double v = small[idx4(b, o, oy, ox, g.co, g.OH, g.OW)];
            if (v == 0.0) continue;
            for (int c = 0; c < g.ci; ++c) {
              for (int ky = 0; ky < g.kh; ++ky) {
                int iy = oy * g.stride - g.padding + ky;
                if (iy < 0 || iy >= g.H) continue;
                for (int kx = 0; kx < g.kw; ++kx) {
                  int ix = ox * g.stride - g.padding + kx;
                  if (ix < 0 || ix >= g.W) continue;
                  gk[idx4(o, c, ky, kx, g.ci, g.kh, g.kw)] +=
                      v * big[idx4(b, c, iy, ix, g.ci, g.H, g.W)];
                }
              }
            }
          }
        }
      }
    }
  });
}

}  // namespace

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return make_op("add", a.shape(), std::move(out), {a, b},
                 [](detail::Node* self) {
                   for (size_t p = 0; p < 2; ++p) {
                     auto* g = parent_grad(self, p);
                     if (!g) continue;
                     for (size_t i = 0; i < self->grad.size(); ++i) {
                       (*g)[i] += self->grad[i];
                     }
                   }
                 });
}

Tensor add(const Tensor& a, double b) {
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + b;
  return make_op("add_scalar", a.shape(), std::move(out), {a},
                 [](detail::Node* self) {
                   auto* g = parent_grad(self, 0);
                   if (!g) return;
                   for (size_t i = 0; i < self->grad.size(); ++i) {
                     (*g)[i] += self->grad[i];
                   }
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  return make_op("sub", a.shape(), std::move(out), {a, b},
                 [](detail::Node* self) {
                   if (auto* g = parent_grad(self, 0)) {
                     for (size_t i = 0; i < self->grad.size(); ++i) {
                       (*g)[i] += self->grad[i];
                     }
                   }
                   if (auto* g = parent_grad(self, 1)) {
                     for (size_t i = 0; i < self->grad.size(); ++i) {
                       (*g)[i] -= self->grad[i];
                     }
                   }
                 });
}

Tensor sub(double a, const Tensor& b) {
  const auto& bv = b.data();
  std::vector<double> out(bv.size());
  for (size_t i = 0; i < bv.size(); ++i) out[i] = a - bv[i];
  return make_op("rsub_scalar", b.shape(), std::move(out), {b},
                 [](detail::Node* self) {
                   auto* g = parent_grad(self, 0);
                   if (!g) return;
                   for (size_t i = 0; i < self->grad.size(); ++i) {
                     (*g)[i] -= self->grad[i];
                   }
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return make_op("mul", a.shape(), std::move(out), {a, b},
                 [](detail::Node* self) {
                   const auto& av = self->parents[0]->value;
                   const auto& bv = self->parents[1]->value;
                   if (auto* g = parent_grad(self, 0)) {
                     for (size_t i = 0; i < self->grad.size(); ++i) {
                       (*g)[i] += self->grad[i] * bv[i];
                     }
                   }
                   if (auto* g = parent_grad(self, 1)) {
                     for (size_t i = 0; i < self->grad.size(); ++i) {
                       (*g)[i] += self->grad[i] * av[i];
                     }
                   }
                 });
}

Tensor mul(const Tensor& a, double s) {
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * s;
  return make_op("mul_scalar", a.shape(), std::move(out), {a},
                 [s](detail::Node* self) {
                   auto* g = parent_grad(self, 0);
                   if (!g) return;
                   for (size_t i = 0; i < self->grad.size(); ++i) {
                     (*g)[i] += self->grad[i] * s;
                   }
                 });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  const auto& av = a.data();
  for (size_t i = 0; i < av.size(); ++i) {
    if (!(av[i] > 0.0)) {
      throw NumericError("log: non-positive input " + std::to_string(av[i]) +
                         " at flat index " + std::to_string(i));
    }
  }
  return unary(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor sigmoid(const Tensor& a) {
  // Evaluate through exp(-|x|) so neither branch overflows.
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) {
          double e = std::exp(-x);
          return 1.0 / (1.0 + e);
        }
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) {
    throw ConfigError("clamp: lo " + std::to_string(lo) + " exceeds hi " +
                      std::to_string(hi));
  }
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) {
    out[i] = std::min(std::max(av[i], lo), hi);
  }
  return make_op("clamp", a.shape(), std::move(out), {a},
                 [lo, hi](detail::Node* self) {
                   auto* g = parent_grad(self, 0);
                   if (!g) return;
                   const auto& x = self->parents[0]->value;
                   for (size_t i = 0; i < x.size(); ++i) {
                     if (x[i] > lo && x[i] < hi) (*g)[i] += self->grad[i];
                   }
                 });
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a) {
  const auto& av = a.data();
  double acc = 0.0;
  for (double v : av) acc += v;
  return make_op("sum", {}, {acc}, {a}, [](detail::Node* self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    double gv = self->grad[0];
    for (size_t i = 0; i < g->size(); ++i) (*g)[i] += gv;
  });
}

Tensor mean(const Tensor& a) {
  int64_t n = a.numel();
  if (n == 0) throw ShapeError("mean: empty tensor");
  const auto& av = a.data();
  double acc = 0.0;
  for (double v : av) acc += v;
  double inv = 1.0 / static_cast<double>(n);
  return make_op("mean", {}, {acc * inv}, {a}, [inv](detail::Node* self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    double gv = self->grad[0] * inv;
    for (size_t i = 0; i < g->size(); ++i) (*g)[i] += gv;
  });
}

Tensor frobenius_norm_sq(const Tensor& a) {
  const auto& av = a.data();
  double acc = 0.0;
  for (double v : av) acc += v * v;
  return make_op("frobenius_norm_sq", {}, {acc}, {a}, [](detail::Node* self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    double gv = self->grad[0];
    const auto& x = self->parents[0]->value;
    for (size_t i = 0; i < x.size(); ++i) (*g)[i] += gv * 2.0 * x[i];
  });
}

Tensor row_sum(const Tensor& a) {
  require_dim("row_sum", a, 2);
  int m = a.dim(0), n = a.dim(1);
  const auto& av = a.data();
  std::vector<double> out(static_cast<size_t>(m), 0.0);
  for (int i = 0; i < m; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += av[static_cast<size_t>(i) * n + j];
    out[static_cast<size_t>(i)] = acc;
  }
  return make_op("row_sum", {m}, std::move(out), {a},
                 [n](detail::Node* self) {
                   auto* g = parent_grad(self, 0);
                   if (!g) return;
                   for (size_t i = 0; i < self->grad.size(); ++i) {
                     double gv = self->grad[i];
                     for (int j = 0; j < n; ++j) (*g)[i * n + j] += gv;
                   }
                 });
}

// ---- structure -------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape s) {
  if (numel_of(s) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(s));
  }
  return make_op("reshape", std::move(s), a.data(), {a},
                 [](detail::Node* self) {
                   auto* g = parent_grad(self, 0);
                   if (!g) return;
                   for (size_t i = 0; i < self->grad.size(); ++i) {
                     (*g)[i] += self->grad[i];
                   }
                 });
}

Tensor transpose(const Tensor& a) {
  require_dim("transpose", a, 2);
  int m = a.dim(0), n = a.dim(1);
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      out[static_cast<size_t>(j) * m + i] = av[static_cast<size_t>(i) * n + j];
    }
  }
  return make_op("transpose", {n, m}, std::move(out), {a},
                 [m, n](detail::Node* self) {
                   auto* g = parent_grad(self, 0);
                   if (!g) return;
                   for (int i = 0; i < m; ++i) {
                     for (int j = 0; j < n; ++j) {
                       (*g)[static_cast<size_t>(i) * n + j] +=
                           self->grad[static_cast<size_t>(j) * m + i];
                     }
                   }
                 });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_dim("concat_cols", a, 2);
  require_dim("concat_cols", b, 2);
  if (a.dim(0) != b.dim(0)) {
    throw ShapeError("concat_cols: row counts differ, " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  int m = a.dim(0), p = a.dim(1), q = b.dim(1);
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(static_cast<size_t>(m) * (p + q));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < p; ++j) {
      out[static_cast<size_t>(i) * (p + q) + j] =
          av[static_cast<size_t>(i) * p + j];
    }
    for (int j = 0; j < q; ++j) {
      out[static_cast<size_t>(i) * (p + q) + p + j] =
          bv[static_cast<size_t>(i) * q + j];
    }
  }
  return make_op(
      "concat_cols", {m, p + q}, std::move(out), {a, b},
      [m, p, q](detail::Node* self) {
        if (auto* g = parent_grad(self, 0)) {
          for (int i = 0; i < m; ++i) {
            for (int j = 0; j < p; ++j) {
              (*g)[static_cast<size_t>(i) * p + j] +=
                  self->grad[static_cast<size_t>(i) * (p + q) + j];
            }
          }
        }
        if (auto* g = parent_grad(self, 1)) {
          for (int i = 0; i < m; ++i) {
            for (int j = 0; j < q; ++j) {
              (*g)[static_cast<size_t>(i) * q + j] +=
                  self->grad[static_cast<size_t>(i) * (p + q) + p + j];
            }
          }
        }
      });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_dim("concat_channels", a, 4);
  require_dim("concat_channels", b, 4);
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: incompatible " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  int nb = a.dim(0), c1 = a.dim(1), c2 = b.dim(1), h = a.dim(2), w = a.dim(3);
  int64_t plane = static_cast<int64_t>(h) * w;
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(static_cast<size_t>(nb) * (c1 + c2) * plane);
  for (int i = 0; i < nb; ++i) {
    std::copy(av.begin() + i * c1 * plane, av.begin() + (i + 1) * c1 * plane,
              out.begin() + static_cast<int64_t>(i) * (c1 + c2) * plane);
    std::copy(bv.begin() + i * c2 * plane, bv.begin() + (i + 1) * c2 * plane,
              out.begin() + static_cast<int64_t>(i) * (c1 + c2) * plane +
                  c1 * plane);
  }
  return make_op(
      "concat_channels", {nb, c1 + c2, h, w}, std::move(out), {a, b},
      [nb, c1, c2, plane](detail::Node* self) {
        if (auto* g = parent_grad(self, 0)) {
          for (int i = 0; i < nb; ++i) {
            const double* src =
                self->grad.data() + static_cast<int64_t>(i) * (c1 + c2) * plane;
            double* dst = g->data() + static_cast<int64_t>(i) * c1 * plane;
            for (int64_t t = 0; t < c1 * plane; ++t) dst[t] += src[t];
          }
        }
        if (auto* g = parent_grad(self, 1)) {
          for (int i = 0; i < nb; ++i) {
            const double* src = self->grad.data() +
                                static_cast<int64_t>(i) * (c1 + c2) * plane +
                                c1 * plane;
            double* dst = g->data() + static_cast<int64_t>(i) * c2 * plane;
            for (int64_t t = 0; t < c2 * plane; ++t) dst[t] += src[t];
          }
        }
      });
}

Tensor permute_rows(const Tensor& a, const std::vector<int>& perm) {
  if (a.shape().empty()) {
    throw ShapeError("permute_rows: scalar has no rows");
  }
  int m = a.dim(0);
  if (static_cast<int>(perm.size()) != m) {
    throw ConfigError("permute_rows: permutation length " +
                      std::to_string(perm.size()) + " for " +
                      std::to_string(m) + " rows");
  }
  std::vector<char> seen(static_cast<size_t>(m), 0);
  for (int v : perm) {
    if (v < 0 || v >= m || seen[static_cast<size_t>(v)]) {
      throw ConfigError("permute_rows: not a permutation of 0.." +
                        std::to_string(m - 1));
    }
    seen[static_cast<size_t>(v)] = 1;
  }
  int64_t row = a.numel() / m;
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (int i = 0; i < m; ++i) {
    std::copy(av.begin() + perm[static_cast<size_t>(i)] * row,
              av.begin() + (perm[static_cast<size_t>(i)] + 1) * row,
              out.begin() + static_cast<int64_t>(i) * row);
  }
  return make_op("permute_rows", a.shape(), std::move(out), {a},
                 [perm, row](detail::Node* self) {
                   auto* g = parent_grad(self, 0);
                   if (!g) return;
                   for (size_t i = 0; i < perm.size(); ++i) {
                     const double* src =
                         self->grad.data() + static_cast<int64_t>(i) * row;
                     double* dst = g->data() +
                                   static_cast<int64_t>(perm[i]) * row;
                     for (int64_t t = 0; t < row; ++t) dst[t] += src[t];
                   }
                 });
}

Tensor tile_spatial(const Tensor& a, int h, int w) {
  require_dim("tile_spatial", a, 2);
  if (h < 1 || w < 1) {
    throw ConfigError("tile_spatial: extent " + std::to_string(h) + "x" +
                      std::to_string(w));
  }
  int m = a.dim(0), d = a.dim(1);
  const auto& av = a.data();
  std::vector<double> out(static_cast<size_t>(m) * d * h * w);
  int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t bc = 0; bc < static_cast<int64_t>(m) * d; ++bc) {
    double v = av[static_cast<size_t>(bc)];
    for (int64_t t = 0; t < plane; ++t) out[bc * plane + t] = v;
  }
  return make_op("tile_spatial", {m, d, h, w}, std::move(out), {a},
                 [m, d, plane](detail::Node* self) {
                   auto* g = parent_grad(self, 0);
                   if (!g) return;
                   for (int64_t bc = 0; bc < static_cast<int64_t>(m) * d;
                        ++bc) {
                     double acc = 0.0;
                     for (int64_t t = 0; t < plane; ++t) {
                       acc += self->grad[bc * plane + t];
                     }
                     (*g)[static_cast<size_t>(bc)] += acc;
                   }
                 });
}

Tensor avg_pool_all(const Tensor& a) {
  require_dim("avg_pool_all", a, 4);
  int nb = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  int64_t plane = static_cast<int64_t>(h) * w;
  if (plane == 0) throw ShapeError("avg_pool_all: empty spatial extent");
  double inv = 1.0 / static_cast<double>(plane);
  const auto& av = a.data();
  std::vector<double> out(static_cast<size_t>(nb) * c);
  for (int64_t bc = 0; bc < static_cast<int64_t>(nb) * c; ++bc) {
    double acc = 0.0;
    for (int64_t t = 0; t < plane; ++t) acc += av[bc * plane + t];
    out[static_cast<size_t>(bc)] = acc * inv;
  }
  return make_op("avg_pool_all", {nb, c}, std::move(out), {a},
                 [plane, inv](detail::Node* self) {
                   auto* g = parent_grad(self, 0);
                   if (!g) return;
                   for (size_t bc = 0; bc < self->grad.size(); ++bc) {
                     double gv = self->grad[bc] * inv;
                     for (int64_t t = 0; t < plane; ++t) {
                       (*g)[bc * plane + t] += gv;
                     }
                   }
                 });
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  require_dim("add_rowvec", a, 2);
  require_dim("add_rowvec", v, 1);
  int m = a.dim(0), n = a.dim(1);
  if (v.dim(0) != n) {
    throw ShapeError("add_rowvec: " + shape_str(a.shape()) + " + " +
                     shape_str(v.shape()));
  }
  const auto& av = a.data();
  const auto& vv = v.data();
  std::vector<double> out(av.size());
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      out[static_cast<size_t>(i) * n + j] =
          av[static_cast<size_t>(i) * n + j] + vv[static_cast<size_t>(j)];
    }
  }
  return make_op("add_rowvec", a.shape(), std::move(out), {a, v},
                 [m, n](detail::Node* self) {
                   if (auto* g = parent_grad(self, 0)) {
                     for (size_t i = 0; i < self->grad.size(); ++i) {
                       (*g)[i] += self->grad[i];
                     }
                   }
                   if (auto* g = parent_grad(self, 1)) {
                     for (int i = 0; i < m; ++i) {
                       for (int j = 0; j < n; ++j) {
                         (*g)[static_cast<size_t>(j)] +=
                             self->grad[static_cast<size_t>(i) * n + j];
                       }
                     }
                   }
                 });
}

Tensor add_colvec(const Tensor& a, const Tensor& v) {
  require_dim("add_colvec", a, 2);
  require_dim("add_colvec", v, 1);
  int m = a.dim(0), n = a.dim(1);
  if (v.dim(0) != m) {
    throw ShapeError("add_colvec: " + shape_str(a.shape()) + " + " +
                     shape_str(v.shape()));
  }
  const auto& av = a.data();
  const auto& vv = v.data();
  std::vector<double> out(av.size());
  for (int i = 0; i < m; ++i) {
    double add = vv[static_cast<size_t>(i)];
    for (int j = 0; j < n; ++j) {
      out[static_cast<size_t>(i) * n + j] =
          av[static_cast<size_t>(i) * n + j] + add;
    }
  }
  return make_op("add_colvec", a.shape(), std::move(out), {a, v},
                 [m, n](detail::Node* self) {
                   if (auto* g = parent_grad(self, 0)) {
                     for (size_t i = 0; i < self->grad.size(); ++i) {
                       (*g)[i] += self->grad[i];
                     }
                   }
                   if (auto* g = parent_grad(self, 1)) {
                     for (int i = 0; i < m; ++i) {
                       double acc = 0.0;
                       for (int j = 0; j < n; ++j) {
                         acc += self->grad[static_cast<size_t>(i) * n + j];
                       }
                       (*g)[static_cast<size_t>(i)] += acc;
                     }
                   }
                 });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  require_dim("add_channel_bias", x, 4);
  require_dim("add_channel_bias", b, 1);
  int nb = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (b.dim(0) != c) {
    throw ShapeError("add_channel_bias: " + shape_str(x.shape()) + " + " +
                     shape_str(b.shape()));
  }
  int64_t plane = static_cast<int64_t>(h) * w;
  const auto& xv = x.data();
  const auto& bv = b.data();
  std::vector<double> out(xv.size());
  for (int i = 0; i < nb; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      double add = bv[static_cast<size_t>(ch)];
      int64_t base = (static_cast<int64_t>(i) * c + ch) * plane;
      for (int64_t t = 0; t < plane; ++t) out[base + t] = xv[base + t] + add;
    }
  }
  return make_op("add_channel_bias", x.shape(), std::move(out), {x, b},
                 [nb, c, plane](detail::Node* self) {
                   if (auto* g = parent_grad(self, 0)) {
                     for (size_t i = 0; i < self->grad.size(); ++i) {
                       (*g)[i] += self->grad[i];
                     }
                   }
                   if (auto* g = parent_grad(self, 1)) {
                     for (int i = 0; i < nb; ++i) {
                       for (int ch = 0; ch < c; ++ch) {
                         int64_t base = (static_cast<int64_t>(i) * c + ch) *
                                        plane;
                         double acc = 0.0;
                         for (int64_t t = 0; t < plane; ++t) {
                           acc += self->grad[base + t];
                         }
                         (*g)[static_cast<size_t>(ch)] += acc;
                       }
                     }
                   }
                 });
}

Tensor row_softmax(const Tensor& a) {
  require_dim("row_softmax", a, 2);
  int m = a.dim(0), n = a.dim(1);
  if (n < 1) throw ShapeError("row_softmax: empty rows");
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (int i = 0; i < m; ++i) {
    const double* row = av.data() + static_cast<int64_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    double* orow = out.data() + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    for (int j = 0; j < n; ++j) orow[j] /= z;
  }
  return make_op("row_softmax", a.shape(), std::move(out), {a},
                 [m, n](detail::Node* self) {
                   auto* g = parent_grad(self, 0);
                   if (!g) return;
                   for (int i = 0; i < m; ++i) {
                     const double* s =
                         self->value.data() + static_cast<int64_t>(i) * n;
                     const double* gy =
                         self->grad.data() + static_cast<int64_t>(i) * n;
                     double dot = 0.0;
                     for (int j = 0; j < n; ++j) dot += gy[j] * s[j];
                     double* gx = g->data() + static_cast<int64_t>(i) * n;
                     for (int j = 0; j < n; ++j) {
                       gx[j] += s[j] * (gy[j] - dot);
                     }
                   }
                 });
}

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_dim("matmul", a, 2);
  require_dim("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " * " +
                     shape_str(b.shape()));
  }
  int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op("matmul", {static_cast<int>(m), static_cast<int>(n)},
                 std::move(out), {a, b}, [m, k, n](detail::Node* self) {
                   const auto& av = self->parents[0]->value;
                   const auto& bv = self->parents[1]->value;
                   if (auto* g = parent_grad(self, 0)) {
                     gemm_nt(self->grad.data(), bv.data(), g->data(), m, n, k);
                   }
                   if (auto* g = parent_grad(self, 1)) {
                     gemm_tn(av.data(), self->grad.data(), g->data(), m, k, n);
                   }
                 });
}

Tensor cholesky(const Tensor& a) {
  require_dim("cholesky", a, 2);
  int n = a.dim(0);
  if (a.dim(1) != n) {
    throw ShapeError("cholesky: matrix not square, " + shape_str(a.shape()));
  }
  const auto& av = a.data();
  std::vector<double> L(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = av[static_cast<size_t>(i) * n + j];
      for (int t = 0; t < j; ++t) {
        s -= L[static_cast<size_t>(i) * n + t] *
             L[static_cast<size_t>(j) * n + t];
      }
      if (i == j) {
        if (!(s > 0.0)) {
          throw NotPositiveDefiniteError(
              "cholesky: pivot " + std::to_string(i) + " is " +
                  std::to_string(s),
              i);
        }
        L[static_cast<size_t>(i) * n + i] = std::sqrt(s);
      } else {
        L[static_cast<size_t>(i) * n + j] =
            s / L[static_cast<size_t>(j) * n + j];
      }
    }
  }
  // The factor is a plain value: differentiation treats it as a constant.
  return Tensor::from_data({n, n}, std::move(L));
}

Tensor triangular_solve(const Tensor& l, const Tensor& rhs) {
  require_dim("triangular_solve", l, 2);
  require_dim("triangular_solve", rhs, 2);
  int k = l.dim(0);
  if (l.dim(1) != k) {
    throw ShapeError("triangular_solve: factor not square, " +
                     shape_str(l.shape()));
  }
  if (rhs.dim(0) != k) {
    throw ShapeError("triangular_solve: " + shape_str(l.shape()) + " vs rhs " +
                     shape_str(rhs.shape()));
  }
  if (l.requires_grad()) {
    throw GraphError(
        "triangular_solve: factor must be constant under differentiation");
  }
  const auto& lv = l.data();
  for (int i = 0; i < k; ++i) {
    if (lv[static_cast<size_t>(i) * k + i] == 0.0) {
      throw SingularMatrixError("triangular_solve: zero diagonal at row " +
                                std::to_string(i));
    }
  }
  int n = rhs.dim(1);
  const auto& rv = rhs.data();
  // Forward substitution, column-block over the whole rhs at once.
  std::vector<double> x(rv.size());
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = rv[static_cast<size_t>(i) * n + j];
      for (int t = 0; t < i; ++t) {
        s -= lv[static_cast<size_t>(i) * k + t] *
             x[static_cast<size_t>(t) * n + j];
      }
      x[static_cast<size_t>(i) * n + j] =
          s / lv[static_cast<size_t>(i) * k + i];
    }
  }
  return make_op(
      "triangular_solve", rhs.shape(), std::move(x), {l, rhs},
      [k, n](detail::Node* self) {
        auto* g = parent_grad(self, 1);
        if (!g) return;
        // x = L^-1 rhs, so rhs gets L^-T g: one back substitution.
        const auto& lv = self->parents[0]->value;
        std::vector<double> u(self->grad);
        for (int i = k - 1; i >= 0; --i) {
          for (int j = 0; j < n; ++j) {
            double s = u[static_cast<size_t>(i) * n + j];
            for (int t = i + 1; t < k; ++t) {
              s -= lv[static_cast<size_t>(t) * k + i] *
                   u[static_cast<size_t>(t) * n + j];
            }
            u[static_cast<size_t>(i) * n + j] =
                s / lv[static_cast<size_t>(i) * k + i];
          }
        }
        for (size_t i = 0; i < u.size(); ++i) (*g)[i] += u[i];
      });
}

// ---- convolution -----------------------------------------------------------

namespace {

void check_conv_args(const char* op, int stride, int padding) {
  if (stride < 1) {
    throw ConfigError(std::string(op) + ": stride " + std::to_string(stride));
  }
  if (padding < 0) {
    throw ConfigError(std::string(op) + ": padding " +
                      std::to_string(padding));
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride, int padding) {
  check_conv_args("conv2d", stride, padding);
  require_dim("conv2d", x, 4);
  require_dim("conv2d", kernel, 4);
  if (x.dim(1) != kernel.dim(1)) {
    throw ShapeError("conv2d: input channels " + std::to_string(x.dim(1)) +
                     " vs kernel " + shape_str(kernel.shape()));
  }
  ConvGeom g;
  g.nb = x.dim(0);
  g.ci = x.dim(1);
  g.H = x.dim(2);
  g.W = x.dim(3);
  g.co = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = stride;
  g.padding = padding;
  g.OH = (g.H + 2 * padding - g.kh) / stride + 1;
  g.OW = (g.W + 2 * padding - g.kw) / stride + 1;
  if (g.H + 2 * padding < g.kh || g.W + 2 * padding < g.kw) {
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) +
                     " larger than padded input " + shape_str(x.shape()));
  }
  std::vector<double> out(
      static_cast<size_t>(g.nb) * g.co * g.OH * g.OW, 0.0);
  conv_gather(x.data().data(), kernel.data().data(), g, out.data());
  return make_op("conv2d", {g.nb, g.co, g.OH, g.OW}, std::move(out),
                 {x, kernel}, [g](detail::Node* self) {
                   const auto& xv = self->parents[0]->value;
                   const auto& kv = self->parents[1]->value;
                   if (auto* gx = parent_grad(self, 0)) {
                     conv_scatter(self->grad.data(), kv.data(), g, gx->data());
                   }
                   if (auto* gk = parent_grad(self, 1)) {
                     conv_kernel_acc(self->grad.data(), xv.data(), g,
                                     gk->data());
                   }
                 });
}

Tensor conv2d_transpose(const Tensor& x, const Tensor& kernel, int stride,
                        int padding, int output_padding) {
  check_conv_args("conv2d_transpose", stride, padding);
  if (output_padding < 0 || output_padding >= stride) {
    throw ConfigError("conv2d_transpose: output_padding " +
                      std::to_string(output_padding) + " for stride " +
                      std::to_string(stride));
  }
  require_dim("conv2d_transpose", x, 4);
  require_dim("conv2d_transpose", kernel, 4);
  if (x.dim(1) != kernel.dim(0)) {
    throw ShapeError("conv2d_transpose: input channels " +
                     std::to_string(x.dim(1)) + " vs kernel " +
                     shape_str(kernel.shape()));
  }
  ConvGeom g;
  g.co = x.dim(1);
  g.OH = x.dim(2);
  g.OW = x.dim(3);
  g.nb = x.dim(0);
  g.ci = kernel.dim(1);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = stride;
  g.padding = padding;
  g.H = (g.OH - 1) * stride - 2 * padding + g.kh + output_padding;
  g.W = (g.OW - 1) * stride - 2 * padding + g.kw + output_padding;
  if (g.H < 1 || g.W < 1) {
    throw ShapeError("conv2d_transpose: output extent " +
                     std::to_string(g.H) + "x" + std::to_string(g.W));
  }
  std::vector<double> out(static_cast<size_t>(g.nb) * g.ci * g.H * g.W, 0.0);
  conv_scatter(x.data().data(), kernel.data().data(), g, out.data());
  return make_op("conv2d_transpose", {g.nb, g.ci, g.H, g.W}, std::move(out),
                 {x, kernel}, [g](detail::Node* self) {
                   const auto& xv = self->parents[0]->value;
                   const auto& kv = self->parents[1]->value;
                   if (auto* gx = parent_grad(self, 0)) {
                     conv_gather(self->grad.data(), kv.data(), g, gx->data());
                   }
                   if (auto* gk = parent_grad(self, 1)) {
                     conv_kernel_acc(xv.data(), self->grad.data(), g,
                                     gk->data());
                   }
                 });
}

}  // namespace dspc
