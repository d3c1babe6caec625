#pragma once

#include <vector>

#include "kan/matrix.hpp"

namespace kan {

// Functional conv/norm/pool kernels with hand-written backwards. Convolutions
// use TF-style same padding: out = ceil(in/stride), total pad =
// max((out-1)*stride + k - in, 0), split with the extra row/column at the
// bottom/right. Weights carry no bias (batch norm follows every conv).

// w laid out (c_out, c_in*k*k) with column index (ci*k + ky)*k + kx
Tensor3 conv2d_forward(const Tensor3& x, const Matrix& w, int ksize, int stride);
struct Conv2dGrads {
  Tensor3 dx;
  Matrix dw;
};
Conv2dGrads conv2d_backward(const Tensor3& x, const Matrix& w, int ksize, int stride,
                            const Tensor3& upstream);

// depthwise 3x3; w is (c, 9) with column index ky*3 + kx
Tensor3 dwconv3x3_forward(const Tensor3& x, const Matrix& w, int stride);
Conv2dGrads dwconv3x3_backward(const Tensor3& x, const Matrix& w, int stride,
                               const Tensor3& upstream);

constexpr double kBnEps = 1e-5;

// inference-mode batch norm: per-channel affine with stored statistics
Tensor3 batchnorm_infer(const Tensor3& x, const std::vector<double>& gamma,
                        const std::vector<double>& beta, const std::vector<double>& mean,
                        const std::vector<double>& var);

// training-mode batch norm over a batch (stats across batch and spatial dims)
struct BnCache {
  std::vector<double> mean, var, inv_sd;
};
std::vector<Tensor3> batchnorm_train_forward(const std::vector<Tensor3>& xs,
                                             const std::vector<double>& gamma,
                                             const std::vector<double>& beta, BnCache& cache);
struct BnGrads {
  std::vector<Tensor3> dx;
  std::vector<double> dgamma, dbeta;
};
BnGrads batchnorm_train_backward(const std::vector<Tensor3>& xs, const std::vector<double>& gamma,
                                 const BnCache& cache, const std::vector<Tensor3>& upstream);
BnGrads batchnorm_infer_backward(const Tensor3& x, const std::vector<double>& gamma,
                                 const std::vector<double>& mean, const std::vector<double>& var,
                                 const Tensor3& upstream);

// clipped linear activation min(max(x, 0), 6)
Tensor3 relu6_forward(const Tensor3& x);
Tensor3 relu6_backward(const Tensor3& x, const Tensor3& upstream);

Tensor3 global_avgpool_forward(const Tensor3& x);  // -> 1 x 1 x c
Tensor3 global_avgpool_backward(int h, int w, const Tensor3& upstream);

// fully connected over a 1x1xc tensor; the one layer with a bias
Tensor3 fc_forward(const Tensor3& x, const Matrix& w, const std::vector<double>& bias);
struct FcGrads {
  Tensor3 dx;
  Matrix dw;
  std::vector<double> dbias;
};
FcGrads fc_backward(const Tensor3& x, const Matrix& w, const Tensor3& upstream);

}  // namespace kan
