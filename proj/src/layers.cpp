#include "kan/layers.hpp"

#include <algorithm>
#include <cmath>

namespace kan {

namespace {

struct Pad {
  int out, before;
};

Pad same_pad(int in, int k, int stride) {
  const int out = (in + stride - 1) / stride;
  const int total = std::max((out - 1) * stride + k - in, 0);
  return {out, total / 2};
}

}  // namespace

Tensor3 conv2d_forward(const Tensor3& x, const Matrix& w, int ksize, int stride) {
  if (w.cols != x.c * ksize * ksize)
    throw shape_error("conv2d: weight cols != c_in*k*k");
  const auto [oh, pt] = same_pad(x.h, ksize, stride);
  const auto [ow, pl] = same_pad(x.w, ksize, stride);
  Tensor3 out(oh, ow, w.rows);
#pragma omp parallel for if (out.size() * std::size_t(w.cols) > 65536)
  for (int o = 0; o < w.rows; ++o)
    for (int a = 0; a < oh; ++a)
      for (int b = 0; b < ow; ++b) {
        double acc = 0;
        for (int c = 0; c < x.c; ++c)
          for (int ky = 0; ky < ksize; ++ky) {
            const int i = a * stride - pt + ky;
            if (i < 0 || i >= x.h) continue;
            for (int kx = 0; kx < ksize; ++kx) {
              const int j = b * stride - pl + kx;
              if (j < 0 || j >= x.w) continue;
              acc += x.at(i, j, c) * w.at(o, (c * ksize + ky) * ksize + kx);
            }
          }
        out.at(a, b, o) = acc;
      }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor3& x, const Matrix& w, int ksize, int stride,
                            const Tensor3& upstream) {
  const auto [oh, pt] = same_pad(x.h, ksize, stride);
  const auto [ow, pl] = same_pad(x.w, ksize, stride);
  if (upstream.h != oh || upstream.w != ow || upstream.c != w.rows)
    throw shape_error("conv2d_backward: upstream shape mismatch");
  Conv2dGrads g{Tensor3(x.h, x.w, x.c), Matrix(w.rows, w.cols)};
  for (int o = 0; o < w.rows; ++o)
    for (int a = 0; a < oh; ++a)
      for (int b = 0; b < ow; ++b) {
        const double up = upstream.at(a, b, o);
        if (up == 0.0) continue;
        for (int c = 0; c < x.c; ++c)
          for (int ky = 0; ky < ksize; ++ky) {
            const int i = a * stride - pt + ky;
            if (i < 0 || i >= x.h) continue;
            for (int kx = 0; kx < ksize; ++kx) {
              const int j = b * stride - pl + kx;
              if (j < 0 || j >= x.w) continue;
              const int widx = (c * ksize + ky) * ksize + kx;
              g.dw.at(o, widx) += up * x.at(i, j, c);
              g.dx.at(i, j, c) += up * w.at(o, widx);
            }
          }
      }
  return g;
}

Tensor3 dwconv3x3_forward(const Tensor3& x, const Matrix& w, int stride) {
  if (w.rows != x.c || w.cols != 9) throw shape_error("dwconv3x3: weight must be (c, 9)");
  const auto [oh, pt] = same_pad(x.h, 3, stride);
  const auto [ow, pl] = same_pad(x.w, 3, stride);
  Tensor3 out(oh, ow, x.c);
#pragma omp parallel for if (out.size() > 16384)
  for (int c = 0; c < x.c; ++c)
    for (int a = 0; a < oh; ++a)
      for (int b = 0; b < ow; ++b) {
        double acc = 0;
        for (int ky = 0; ky < 3; ++ky) {
          const int i = a * stride - pt + ky;
          if (i < 0 || i >= x.h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int j = b * stride - pl + kx;
            if (j < 0 || j >= x.w) continue;
            acc += x.at(i, j, c) * w.at(c, ky * 3 + kx);
          }
        }
        out.at(a, b, c) = acc;
      }
  return out;
}

Conv2dGrads dwconv3x3_backward(const Tensor3& x, const Matrix& w, int stride,
                               const Tensor3& upstream) {
  const auto [oh, pt] = same_pad(x.h, 3, stride);
  const auto [ow, pl] = same_pad(x.w, 3, stride);
  if (upstream.h != oh || upstream.w != ow || upstream.c != x.c)
    throw shape_error("dwconv3x3_backward: upstream shape mismatch");
  Conv2dGrads g{Tensor3(x.h, x.w, x.c), Matrix(w.rows, w.cols)};
  for (int c = 0; c < x.c; ++c)
    for (int a = 0; a < oh; ++a)
      for (int b = 0; b < ow; ++b) {
        const double up = upstream.at(a, b, c);
        if (up == 0.0) continue;
        for (int ky = 0; ky < 3; ++ky) {
          const int i = a * stride - pt + ky;
          if (i < 0 || i >= x.h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int j = b * stride - pl + kx;
            if (j < 0 || j >= x.w) continue;
            g.dw.at(c, ky * 3 + kx) += up * x.at(i, j, c);
            g.dx.at(i, j, c) += up * w.at(c, ky * 3 + kx);
          }
        }
      }
  return g;
}

Tensor3 batchnorm_infer(const Tensor3& x, const std::vector<double>& gamma,
                        const std::vector<double>& beta, const std::vector<double>& mean,
                        const std::vector<double>& var) {
  if (int(gamma.size()) != x.c) throw shape_error("batchnorm_infer: channel count mismatch");
  Tensor3 out(x.h, x.w, x.c);
  for (int c = 0; c < x.c; ++c) {
    const double inv = 1.0 / std::sqrt(var[std::size_t(c)] + kBnEps);
    for (int i = 0; i < x.h; ++i)
      for (int j = 0; j < x.w; ++j)
        out.at(i, j, c) =
            gamma[std::size_t(c)] * (x.at(i, j, c) - mean[std::size_t(c)]) * inv + beta[std::size_t(c)];
  }
  return out;
}

std::vector<Tensor3> batchnorm_train_forward(const std::vector<Tensor3>& xs,
                                             const std::vector<double>& gamma,
                                             const std::vector<double>& beta, BnCache& cache) {
  if (xs.empty()) throw shape_error("batchnorm_train_forward: empty batch");
  const int c = xs[0].c;
  const double n = double(xs.size()) * xs[0].h * xs[0].w;
  cache.mean.assign(std::size_t(c), 0.0);
  cache.var.assign(std::size_t(c), 0.0);
  cache.inv_sd.assign(std::size_t(c), 0.0);
  for (const Tensor3& x : xs)
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < x.h; ++i)
        for (int j = 0; j < x.w; ++j) cache.mean[std::size_t(ch)] += x.at(i, j, ch);
  for (double& m : cache.mean) m /= n;
  for (const Tensor3& x : xs)
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < x.h; ++i)
        for (int j = 0; j < x.w; ++j) {
          const double d = x.at(i, j, ch) - cache.mean[std::size_t(ch)];
          cache.var[std::size_t(ch)] += d * d;
        }
  for (int ch = 0; ch < c; ++ch) {
    cache.var[std::size_t(ch)] /= n;
    cache.inv_sd[std::size_t(ch)] = 1.0 / std::sqrt(cache.var[std::size_t(ch)] + kBnEps);
  }
  std::vector<Tensor3> out;
  out.reserve(xs.size());
  for (const Tensor3& x : xs) {
    Tensor3 y(x.h, x.w, x.c);
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < x.h; ++i)
        for (int j = 0; j < x.w; ++j)
          y.at(i, j, ch) = gamma[std::size_t(ch)] * (x.at(i, j, ch) - cache.mean[std::size_t(ch)]) *
                               cache.inv_sd[std::size_t(ch)] +
                           beta[std::size_t(ch)];
    out.push_back(std::move(y));
  }
  return out;
}

BnGrads batchnorm_train_backward(const std::vector<Tensor3>& xs, const std::vector<double>& gamma,
                                 const BnCache& cache, const std::vector<Tensor3>& upstream) {
  const int c = xs[0].c;
  const double n = double(xs.size()) * xs[0].h * xs[0].w;
  BnGrads g;
  g.dgamma.assign(std::size_t(c), 0.0);
  g.dbeta.assign(std::size_t(c), 0.0);
  std::vector<double> sum_dy(std::size_t(c), 0.0), sum_dy_xhat(std::size_t(c), 0.0);
  for (std::size_t s = 0; s < xs.size(); ++s)
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < xs[s].h; ++i)
        for (int j = 0; j < xs[s].w; ++j) {
          const double dy = upstream[s].at(i, j, ch);
          const double xhat = (xs[s].at(i, j, ch) - cache.mean[std::size_t(ch)]) *
                              cache.inv_sd[std::size_t(ch)];
          sum_dy[std::size_t(ch)] += dy;
          sum_dy_xhat[std::size_t(ch)] += dy * xhat;
        }
  g.dgamma = sum_dy_xhat;
  g.dbeta = sum_dy;
  for (std::size_t s = 0; s < xs.size(); ++s) {
    Tensor3 dx(xs[s].h, xs[s].w, c);
    for (int ch = 0; ch < c; ++ch) {
      const double k = gamma[std::size_t(ch)] * cache.inv_sd[std::size_t(ch)] / n;
      for (int i = 0; i < xs[s].h; ++i)
        for (int j = 0; j < xs[s].w; ++j) {
          const double dy = upstream[s].at(i, j, ch);
          const double xhat = (xs[s].at(i, j, ch) - cache.mean[std::size_t(ch)]) *
                              cache.inv_sd[std::size_t(ch)];
          dx.at(i, j, ch) =
              k * (n * dy - sum_dy[std::size_t(ch)] - xhat * sum_dy_xhat[std::size_t(ch)]);
        }
    }
    g.dx.push_back(std::move(dx));
  }
  return g;
}

BnGrads batchnorm_infer_backward(const Tensor3& x, const std::vector<double>& gamma,
                                 const std::vector<double>& mean, const std::vector<double>& var,
                                 const Tensor3& upstream) {
  const int c = x.c;
  BnGrads g;
  g.dgamma.assign(std::size_t(c), 0.0);
  g.dbeta.assign(std::size_t(c), 0.0);
  Tensor3 dx(x.h, x.w, c);
  for (int ch = 0; ch < c; ++ch) {
    const double inv = 1.0 / std::sqrt(var[std::size_t(ch)] + kBnEps);
    for (int i = 0; i < x.h; ++i)
      for (int j = 0; j < x.w; ++j) {
        const double dy = upstream.at(i, j, ch);
        g.dbeta[std::size_t(ch)] += dy;
        g.dgamma[std::size_t(ch)] += dy * (x.at(i, j, ch) - mean[std::size_t(ch)]) * inv;
        dx.at(i, j, ch) = dy * gamma[std::size_t(ch)] * inv;
      }
  }
  g.dx.push_back(std::move(dx));
  return g;
}

Tensor3 relu6_forward(const Tensor3& x) {
  Tensor3 out = x;
  for (double& v : out.data) v = std::min(std::max(v, 0.0), 6.0);
  return out;
}

Tensor3 relu6_backward(const Tensor3& x, const Tensor3& upstream) {
  Tensor3 dx = upstream;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x.data[i] <= 0.0 || x.data[i] >= 6.0) dx.data[i] = 0.0;
  return dx;
}

Tensor3 global_avgpool_forward(const Tensor3& x) {
  Tensor3 out(1, 1, x.c);
  for (int c = 0; c < x.c; ++c) {
    double s = 0;
    for (int i = 0; i < x.h; ++i)
      for (int j = 0; j < x.w; ++j) s += x.at(i, j, c);
    out.at(0, 0, c) = s / (x.h * x.w);
  }
  return out;
}

Tensor3 global_avgpool_backward(int h, int w, const Tensor3& upstream) {
  Tensor3 dx(h, w, upstream.c);
  for (int c = 0; c < upstream.c; ++c) {
    const double g = upstream.at(0, 0, c) / (h * w);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) dx.at(i, j, c) = g;
  }
  return dx;
}

Tensor3 fc_forward(const Tensor3& x, const Matrix& w, const std::vector<double>& bias) {
  if (x.h != 1 || x.w != 1) throw shape_error("fc: expects a 1x1xc input");
  if (w.cols != x.c || int(bias.size()) != w.rows) throw shape_error("fc: weight shape mismatch");
  Tensor3 out(1, 1, w.rows);
  for (int o = 0; o < w.rows; ++o) {
    double acc = bias[std::size_t(o)];
    for (int i = 0; i < x.c; ++i) acc += w.at(o, i) * x.at(0, 0, i);
    out.at(0, 0, o) = acc;
  }
  return out;
}

FcGrads fc_backward(const Tensor3& x, const Matrix& w, const Tensor3& upstream) {
  FcGrads g{Tensor3(1, 1, x.c), Matrix(w.rows, w.cols), std::vector<double>(std::size_t(w.rows), 0.0)};
  for (int o = 0; o < w.rows; ++o) {
    const double up = upstream.at(0, 0, o);
    g.dbias[std::size_t(o)] = up;
    for (int i = 0; i < x.c; ++i) {
      g.dw.at(o, i) = up * x.at(0, 0, i);
      g.dx.at(0, 0, i) += up * w.at(o, i);
    }
  }
  return g;
}

}  // namespace kan
