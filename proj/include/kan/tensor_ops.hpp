#pragma once

#include "kan/matrix.hpp"

namespace kan {

// --- mode-3 unfolding -------------------------------------------------------
//
// unfold_mode3 rearranges an h x w x c tensor into a c x (h*w) matrix whose
// i-th row is vec(X_::i)^T, where vec concatenates the columns of the i-th
// frontal slice. Column q of the result therefore holds the mode-3 fiber at
// spatial position (i, j) with q = j*h + i. fold_mode3 is the exact inverse.

Matrix unfold_mode3(const Tensor3& t);
Tensor3 fold_mode3(const Matrix& m, int h, int w);

// slice averages (horizontal H is w x c, lateral L is h x c)
Matrix horizontal_mean(const Tensor3& t);
Matrix lateral_mean(const Tensor3& t);

// C = [H^T, L^T], c x (h+w); first w columns from H, last h from L
Matrix juxtapose_context(const Tensor3& t);

// M[i][j] = u[i] + v[j]
Matrix outer_sum(const std::vector<double>& u, const std::vector<double>& v);

Matrix kronecker_product(const Matrix& a, const Matrix& b);

// omega (m x m) (+) psi (n x n) = omega (x) I_n + I_m (x) psi
Matrix kronecker_sum(const Matrix& omega, const Matrix& psi);

// --- dense kernels ----------------------------------------------------------
//
// matmul is a plain triple loop (no BLAS) parallelized over output rows;
// results are bitwise identical to the serial reference since each output
// element keeps its serial accumulation order. The blocked variant is a
// cache-tiled alternative selectable in benchmarks.

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_blocked(const Matrix& a, const Matrix& b, int block = 64);
Matrix transpose(const Matrix& m);
Matrix softmax_columns(const Matrix& m);
double trace(const Matrix& m);

Matrix add(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double s);

// serial reference kernels, kept for testing against the parallel paths
namespace ref {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix softmax_columns(const Matrix& m);
}  // namespace ref

}  // namespace kan
