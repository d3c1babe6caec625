#pragma once

#include <optional>

#include "kan/matrix.hpp"

namespace kan {

enum class CoeffNorm { none, batch_norm_stats };

// Per-coefficient affine standardization with stored statistics, the inference
// form of batch norm on the coefficient matrix E. Applied to E before softmax
// when enabled; all four matrices must match E's shape.
struct CoeffStats {
  Matrix mean, var, gamma, beta;
  static constexpr double eps = 1e-5;
};

struct AttnConfig {
  std::optional<Matrix> wq;  // d' x d
  std::optional<Matrix> wk;  // d' x d
  std::optional<Matrix> wv;  // p' x p
  CoeffNorm coeff_norm = CoeffNorm::none;
  const CoeffStats* coeff_stats = nullptr;

  bool use_wq() const { return wq.has_value(); }
  bool use_wk() const { return wk.has_value(); }
  bool use_wv() const { return wv.has_value(); }
};

// Intermediates captured during a forward pass; doubles as the softmax
// instrumentation hook for tests and as the cache for backward passes.
struct AttnTrace {
  Matrix q, k, v;      // post-transform inputs
  Matrix coeff;        // E (post coeff-norm, pre softmax)
  Matrix coeff_softmax;
};

// O = V * Softmax(K^T Q); with transforms, O = WvV * Softmax((WkK)^T WqQ)
Matrix attn(const Matrix& q, const Matrix& k, const Matrix& v,
            const AttnConfig& cfg = {}, AttnTrace* trace = nullptr);

// 2x2 average pooling with ceil-mode (kernel 2, stride 2; partial windows
// averaged over their actual element count)
Tensor3 avg_pool_2x2_ceil(const Tensor3& t);

// self-attention on the mode-3 unfolding, folded back to the input shape
Tensor3 nonlocal_2d(const Tensor3& t, const AttnConfig& cfg = {}, AttnTrace* trace = nullptr);

// regular attention with 2x2 average-pooled keys and values
Tensor3 attn_pooled_2d(const Tensor3& t, const AttnConfig& cfg = {}, AttnTrace* trace = nullptr);

// query = mode-3 unfolding, key = value = juxtaposed context C
Tensor3 kao_kv(const Tensor3& t, const AttnConfig& cfg = {}, AttnTrace* trace = nullptr);

// query = key = value = C; output slices are outer sums of the attended
// context rows (first w output columns follow H, last h follow L)
Tensor3 kao_qkv(const Tensor3& t, const AttnConfig& cfg = {}, AttnTrace* trace = nullptr);

}  // namespace kan
