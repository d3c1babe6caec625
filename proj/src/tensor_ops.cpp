#include "kan/tensor_ops.hpp"

#include <algorithm>
#include <cmath>

namespace kan {

Matrix unfold_mode3(const Tensor3& t) {
  Matrix out(t.c, t.h * t.w);
#pragma omp parallel for if (t.size() > 16384)
  for (int k = 0; k < t.c; ++k)
    for (int j = 0; j < t.w; ++j)
      for (int i = 0; i < t.h; ++i) out.at(k, j * t.h + i) = t.at(i, j, k);
  return out;
}

Tensor3 fold_mode3(const Matrix& m, int h, int w) {
  if (m.cols != h * w)
    throw shape_error("fold_mode3: cols (" + std::to_string(m.cols) + ") != h*w (" +
                      std::to_string(h) + "*" + std::to_string(w) + ")");
  Tensor3 t(h, w, m.rows);
#pragma omp parallel for if (m.size() > 16384)
  for (int k = 0; k < m.rows; ++k)
    for (int j = 0; j < w; ++j)
      for (int i = 0; i < h; ++i) t.at(i, j, k) = m.at(k, j * h + i);
  return t;
}

Matrix horizontal_mean(const Tensor3& t) {
  Matrix out(t.w, t.c);
  for (int k = 0; k < t.c; ++k)
    for (int j = 0; j < t.w; ++j) {
      double s = 0.0;
      for (int i = 0; i < t.h; ++i) s += t.at(i, j, k);
      out.at(j, k) = s / t.h;
    }
  return out;
}

Matrix lateral_mean(const Tensor3& t) {
  Matrix out(t.h, t.c);
  for (int k = 0; k < t.c; ++k)
    for (int i = 0; i < t.h; ++i) {
      double s = 0.0;
      for (int j = 0; j < t.w; ++j) s += t.at(i, j, k);
      out.at(i, k) = s / t.w;
    }
  return out;
}

Matrix juxtapose_context(const Tensor3& t) {
  Matrix hmean = horizontal_mean(t);  // w x c
  Matrix lmean = lateral_mean(t);     // h x c
  Matrix ctx(t.c, t.h + t.w);
  for (int k = 0; k < t.c; ++k) {
    for (int j = 0; j < t.w; ++j) ctx.at(k, j) = hmean.at(j, k);
    for (int i = 0; i < t.h; ++i) ctx.at(k, t.w + i) = lmean.at(i, k);
  }
  return ctx;
}

Matrix outer_sum(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.empty() || v.empty()) throw shape_error("outer_sum: vectors must be nonempty");
  Matrix m(int(u.size()), int(v.size()));
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) m.at(i, j) = u[i] + v[j];
  return m;
}

Matrix kronecker_product(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows * b.rows, a.cols * b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) {
      double aij = a.at(i, j);
      if (aij == 0.0) continue;
      for (int p = 0; p < b.rows; ++p)
        for (int q = 0; q < b.cols; ++q)
          out.at(i * b.rows + p, j * b.cols + q) = aij * b.at(p, q);
    }
  return out;
}

Matrix kronecker_sum(const Matrix& omega, const Matrix& psi) {
  if (omega.rows != omega.cols) throw shape_error("kronecker_sum: omega not square");
  if (psi.rows != psi.cols) throw shape_error("kronecker_sum: psi not square");
  const int m = omega.rows, n = psi.rows;
  Matrix out = kronecker_product(omega, Matrix::identity(n));
  Matrix right = kronecker_product(Matrix::identity(m), psi);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += right.data[i];
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw shape_error("matmul: inner dims mismatch (" + std::to_string(a.cols) + " vs " +
                      std::to_string(b.rows) + ")");
  Matrix out(a.rows, b.cols);
#pragma omp parallel for if (std::size_t(a.rows) * a.cols * b.cols > 65536)
  for (int i = 0; i < a.rows; ++i) {
    double* orow = &out.data[std::size_t(i) * out.cols];
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      const double* brow = &b.data[std::size_t(k) * b.cols];
      for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix matmul_blocked(const Matrix& a, const Matrix& b, int block) {
  if (a.cols != b.rows) throw shape_error("matmul_blocked: inner dims mismatch");
  Matrix out(a.rows, b.cols);
#pragma omp parallel for if (std::size_t(a.rows) * a.cols * b.cols > 65536)
  for (int i0 = 0; i0 < a.rows; i0 += block) {
    const int imax = std::min(i0 + block, a.rows);
    for (int k0 = 0; k0 < a.cols; k0 += block) {
      const int kmax = std::min(k0 + block, a.cols);
      for (int j0 = 0; j0 < b.cols; j0 += block) {
        const int jmax = std::min(j0 + block, b.cols);
        for (int i = i0; i < imax; ++i) {
          double* orow = &out.data[std::size_t(i) * out.cols];
          for (int k = k0; k < kmax; ++k) {
            const double aik = a.at(i, k);
            const double* brow = &b.data[std::size_t(k) * b.cols];
            for (int j = j0; j < jmax; ++j) orow[j] += aik * brow[j];
          }
        }
      }
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols, m.rows);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) out.at(j, i) = m.at(i, j);
  return out;
}

Matrix softmax_columns(const Matrix& m) {
  Matrix out(m.rows, m.cols);
#pragma omp parallel for if (m.size() > 16384)
  for (int j = 0; j < m.cols; ++j) {
    double mx = m.at(0, j);
    for (int i = 1; i < m.rows; ++i) mx = std::max(mx, m.at(i, j));
    double sum = 0.0;
    for (int i = 0; i < m.rows; ++i) {
      double e = std::exp(m.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (int i = 0; i < m.rows; ++i) out.at(i, j) /= sum;
  }
  return out;
}

double trace(const Matrix& m) {
  if (m.rows != m.cols) throw shape_error("trace: matrix not square");
  double s = 0.0;
  for (int i = 0; i < m.rows; ++i) s += m.at(i, i);
  return s;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw shape_error("add: shape mismatch");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Matrix scale(const Matrix& m, double s) {
  Matrix out = m;
  for (double& v : out.data) v *= s;
  return out;
}

namespace ref {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw shape_error("ref::matmul: inner dims mismatch");
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      for (int j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
    }
  return out;
}

Matrix softmax_columns(const Matrix& m) {
  Matrix out(m.rows, m.cols);
  for (int j = 0; j < m.cols; ++j) {
    double mx = m.at(0, j);
    for (int i = 1; i < m.rows; ++i) mx = std::max(mx, m.at(i, j));
    double sum = 0.0;
    for (int i = 0; i < m.rows; ++i) {
      double e = std::exp(m.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (int i = 0; i < m.rows; ++i) out.at(i, j) /= sum;
  }
  return out;
}

}  // namespace ref
}  // namespace kan
