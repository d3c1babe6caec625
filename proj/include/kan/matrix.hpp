#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace kan {

// Thrown on dimension or precondition violations.
class shape_error : public std::invalid_argument {
 public:
  explicit shape_error(const std::string& what) : std::invalid_argument(what) {}
};

// Dense row-major matrix of doubles: entry (r, c) lives at data[r * cols + c].
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(check_dims(r, c), fill) {}

  double& at(int r, int c) { return data[std::size_t(r) * cols + c]; }
  double at(int r, int c) const { return data[std::size_t(r) * cols + c]; }
  std::size_t size() const { return data.size(); }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rs) {
    int r = int(rs.size());
    int c = r > 0 ? int(rs.begin()->size()) : 0;
    Matrix m(r, c);
    int i = 0;
    for (const auto& row : rs) {
      if (int(row.size()) != c) throw shape_error("from_rows: ragged rows");
      int j = 0;
      for (double v : row) m.at(i, j++) = v;
      ++i;
    }
    return m;
  }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

 private:
  static std::size_t check_dims(int r, int c) {
    if (r < 1 || c < 1) throw shape_error("Matrix: rows and cols must be >= 1");
    return std::size_t(r) * std::size_t(c);
  }
};

// h x w x c tensor stored as c channel planes, each a row-major h x w block:
// entry (i, j, k) lives at data[(k * h + i) * w + j].
struct Tensor3 {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int h_, int w_, int c_, double fill = 0.0)
      : h(h_), w(w_), c(c_), data(check_dims(h_, w_, c_), fill) {}

  double& at(int i, int j, int k) { return data[(std::size_t(k) * h + i) * w + j]; }
  double at(int i, int j, int k) const { return data[(std::size_t(k) * h + i) * w + j]; }
  std::size_t size() const { return data.size(); }

  bool same_shape(const Tensor3& o) const { return h == o.h && w == o.w && c == o.c; }

  // i-th frontal slice X_::i as an h x w matrix.
  Matrix frontal_slice(int k) const {
    Matrix m(h, w);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) m.at(i, j) = at(i, j, k);
    return m;
  }

 private:
  static std::size_t check_dims(int h, int w, int c) {
    if (h < 1 || w < 1 || c < 1) throw shape_error("Tensor3: all dims must be >= 1");
    return std::size_t(h) * w * c;
  }
};

}  // namespace kan
