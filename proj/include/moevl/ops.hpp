#pragma once

#include <vector>

#include "moevl/tensor.hpp"

namespace moevl::ops {

// Differentiable primitives. Each op validates shapes, computes its result in
// 64-bit, and records a backward rule on the active tape when at least one
// input is tracked. With no active tape the forward value is identical; no
// graph is built. There is no general broadcasting: the few broadcast cases
// the models need are explicit ops (add_rowvec, scale_rows).

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// scale * x + shift, elementwise with scalar coefficients.
Tensor affine(const Tensor& x, double scale, double shift);

// [n x d] + [d], the vector added to every row.
Tensor add_rowvec(const Tensor& m, const Tensor& v);

// [n x d] scaled per row by an [n x 1] column.
Tensor scale_rows(const Tensor& m, const Tensor& col);

// Sum of all elements, as a [1] tensor.
Tensor sum(const Tensor& x);

// Column means: [n x d] -> [1 x d].
Tensor mean_rows(const Tensor& x);

// Row-wise concatenation of two matrices with equal column counts.
Tensor concat_rows(const Tensor& a, const Tensor& b);

// Rows of `table` selected by index, in order; backward scatter-adds.
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

// Single column j of a matrix, as [n x 1].
Tensor select_col(const Tensor& x, int j);

// Concatenates each group of k consecutive rows into one row:
// [n x d] -> [ceil(n/k) x k*d]. When k does not divide n the last row is
// repeated until it does; gradients of the padded copies accumulate there.
Tensor merge_rows(const Tensor& x, int k);

Tensor relu(const Tensor& x);

// Exact Gaussian-CDF form: 0.5 * x * (1 + erf(x / sqrt(2))).
Tensor gelu(const Tensor& x);

Tensor logistic(const Tensor& x);

// Max-subtracted softmax along `axis`; every slice sums to 1.
Tensor softmax(const Tensor& x, int axis);

// Row-wise layer normalization of [n x d] with learnable gamma/beta of [d].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// Mean over rows of -log softmax(logits)[target], computed via a
// max-subtracted log-sum-exp. logits: [b x c], one target per row.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// Inverted dropout: each element is zeroed with probability p, survivors are
// scaled by 1/(1-p) so the mask has unit mean. Call only on training paths.
Tensor dropout(const Tensor& x, double p, Rng& rng);

// Single-head scaled dot-product self-attention over the rows of x:
// softmax((xWq)(xWk)^T / sqrt(d)) (xWv). Composed from the primitives above,
// so its backward needs no rule of its own.
Tensor self_attention(const Tensor& x, const Tensor& wq, const Tensor& wk,
                      const Tensor& wv);

// The same attention over projections computed by the caller, for paths that
// wrap the projection matmuls (adapters, merged weights).
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);

}  // namespace moevl::ops
