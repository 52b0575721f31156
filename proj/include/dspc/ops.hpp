#pragma once

#include <vector>

#include "dspc/tensor.hpp"

namespace dspc {

// ---- elementwise -----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, double s);
Tensor exp(const Tensor& a);
// Throws NumericError on a non-positive entry.
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
// Pointwise clamp; gradient is passed through strictly inside [lo, hi] and
// zero where the bound is active.
Tensor clamp(const Tensor& a, double lo, double hi);

// ---- reductions ------------------------------------------------------------
Tensor sum(const Tensor& a);                // -> scalar
Tensor mean(const Tensor& a);               // -> scalar
Tensor frobenius_norm_sq(const Tensor& a);  // sum of squares -> scalar
Tensor row_sum(const Tensor& a);            // [m x n] -> [m]

// ---- structure -------------------------------------------------------------
Tensor reshape(const Tensor& a, Shape s);
Tensor transpose(const Tensor& a);  // 2-D
Tensor concat_cols(const Tensor& a, const Tensor& b);      // [m x p],[m x q]
Tensor concat_channels(const Tensor& a, const Tensor& b);  // NCHW, same b/h/w
Tensor permute_rows(const Tensor& a, const std::vector<int>& perm);
Tensor tile_spatial(const Tensor& a, int h, int w);  // [m x d] -> [m,d,h,w]
Tensor avg_pool_all(const Tensor& a);                // [b,c,h,w] -> [b,c]
Tensor add_rowvec(const Tensor& a, const Tensor& v);       // [m x n] + [n]
Tensor add_colvec(const Tensor& a, const Tensor& v);       // [m x n] + [m]
Tensor add_channel_bias(const Tensor& x, const Tensor& b);  // NCHW + [c]
Tensor row_softmax(const Tensor& a);  // [m x K], numerically stabilized

// ---- linear algebra --------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);  // [m x k]*[k x n]

// Lower-triangular B with B*B^T == a. The factor is recomputed from current
// values each call and is constant under differentiation: the result never
// carries a graph record. Throws NotPositiveDefiniteError on a bad pivot.
Tensor cholesky(const Tensor& a);

// Solves l*x = rhs by forward substitution, l lower-triangular [k x k],
// rhs [k x n]. Gradients flow to rhs only; l is treated as a constant and
// must not require gradients.
Tensor triangular_solve(const Tensor& l, const Tensor& rhs);

// ---- convolution -----------------------------------------------------------
// Cross-correlation, x [b,c,h,w] with kernel [o,c,kh,kw]; output extent
// floor((h + 2*padding - kh)/stride) + 1.
Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride, int padding);

// Adjoint of conv2d with the same kernel/stride/padding: maps o channels back
// to c channels, output extent (h-1)*stride - 2*padding + kh + output_padding.
// output_padding < stride selects among the input extents that conv2d folds
// onto the same output extent.
Tensor conv2d_transpose(const Tensor& x, const Tensor& kernel, int stride,
                        int padding, int output_padding = 0);

// ---- sugar ------------------------------------------------------------------
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return mul(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul(a, s); }

}  // namespace dspc
