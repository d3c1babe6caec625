#pragma once

#include <cstddef>
#include <functional>
#include <optional>

#include "kan/attention.hpp"
#include "kan/matrix.hpp"

namespace kan {

// Hand-written backward passes for every forward op; no autodiff graph.
// All gradients are of the scalar <upstream, output>.

struct MatmulGrads {
  Matrix da, db;
};
MatmulGrads backward_matmul(const Matrix& a, const Matrix& b, const Matrix& upstream);

// de given s = softmax_columns(e) and ds; per column de = s (*) (ds - <s, ds>)
Matrix backward_softmax_columns(const Matrix& softmaxed, const Matrix& upstream);

struct AttnGrads {
  Matrix dq, dk, dv;                      // w.r.t. the original inputs
  std::optional<Matrix> dwq, dwk, dwv;    // present when the transform is configured
};
AttnGrads backward_attn(const Matrix& q, const Matrix& k, const Matrix& v,
                        const Matrix& upstream, const AttnConfig& cfg = {});

struct TensorAttnGrads {
  Tensor3 dt;
  std::optional<Matrix> dwq, dwk, dwv;
};
TensorAttnGrads backward_nonlocal_2d(const Tensor3& t, const Tensor3& upstream,
                                     const AttnConfig& cfg = {});
TensorAttnGrads backward_attn_pooled_2d(const Tensor3& t, const Tensor3& upstream,
                                        const AttnConfig& cfg = {});
TensorAttnGrads backward_kao_kv(const Tensor3& t, const Tensor3& upstream,
                                const AttnConfig& cfg = {});
TensorAttnGrads backward_kao_qkv(const Tensor3& t, const Tensor3& upstream,
                                 const AttnConfig& cfg = {});

// adjoint of avg_pool_2x2_ceil: distributes each pooled gradient uniformly
// over its (possibly partial) window
Tensor3 backward_avg_pool_2x2_ceil(int h, int w, const Tensor3& upstream);
Tensor3 backward_avg_pool_2x2_ceil(const Tensor3& input_like, const Tensor3& upstream);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double epsilon = 0.0;
  bool passed = false;
};

// Central-difference check of analytic against (f(x+eps e_i) - f(x-eps e_i)) / 2eps,
// relative error |a - n| / max(1, |a|, |n|) per coordinate.
GradCheckReport gradcheck(const std::function<double(const std::vector<double>&)>& f,
                          const std::vector<double>& x, const std::vector<double>& analytic,
                          double epsilon, double threshold);

}  // namespace kan
