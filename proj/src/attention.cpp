#include "kan/attention.hpp"

#include <cmath>

#include "kan/tensor_ops.hpp"

namespace kan {

namespace {

Matrix apply_coeff_norm(const Matrix& e, const AttnConfig& cfg) {
  if (cfg.coeff_norm == CoeffNorm::none) return e;
  const CoeffStats* st = cfg.coeff_stats;
  if (st == nullptr) return e;  // stats not supplied: identity
  if (!st->mean.same_shape(e) || !st->var.same_shape(e) || !st->gamma.same_shape(e) ||
      !st->beta.same_shape(e))
    throw shape_error("attn: coefficient stats shape must match coefficient matrix");
  Matrix out = e;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data[i] = st->gamma.data[i] * (e.data[i] - st->mean.data[i]) /
                      std::sqrt(st->var.data[i] + CoeffStats::eps) +
                  st->beta.data[i];
  return out;
}

}  // namespace

Matrix attn(const Matrix& q, const Matrix& k, const Matrix& v, const AttnConfig& cfg,
            AttnTrace* trace) {
  if (cfg.use_wq() && cfg.use_wk() && cfg.wq->rows != cfg.wk->rows)
    throw shape_error("attn: Wq and Wk output dims must match");
  Matrix qt = cfg.use_wq() ? matmul(*cfg.wq, q) : q;
  Matrix kt = cfg.use_wk() ? matmul(*cfg.wk, k) : k;
  Matrix vt = cfg.use_wv() ? matmul(*cfg.wv, v) : v;
  if (qt.rows != kt.rows)
    throw shape_error("attn: query and key dims must match (" + std::to_string(qt.rows) +
                      " vs " + std::to_string(kt.rows) + ")");
  if (kt.cols != vt.cols)
    throw shape_error("attn: key and value counts must match (" + std::to_string(kt.cols) +
                      " vs " + std::to_string(vt.cols) + ")");
  Matrix e = apply_coeff_norm(matmul(transpose(kt), qt), cfg);
  Matrix s = softmax_columns(e);
  Matrix o = matmul(vt, s);
  if (trace != nullptr) {
    trace->q = std::move(qt);
    trace->k = std::move(kt);
    trace->v = std::move(vt);
    trace->coeff = std::move(e);
    trace->coeff_softmax = std::move(s);
  }
  return o;
}

Tensor3 avg_pool_2x2_ceil(const Tensor3& t) {
  const int ph = (t.h + 1) / 2, pw = (t.w + 1) / 2;
  Tensor3 out(ph, pw, t.c);
  for (int k = 0; k < t.c; ++k)
    for (int a = 0; a < ph; ++a)
      for (int b = 0; b < pw; ++b) {
        double s = 0.0;
        int n = 0;
        for (int i = 2 * a; i < std::min(2 * a + 2, t.h); ++i)
          for (int j = 2 * b; j < std::min(2 * b + 2, t.w); ++j) {
            s += t.at(i, j, k);
            ++n;
          }
        out.at(a, b, k) = s / n;
      }
  return out;
}

Tensor3 nonlocal_2d(const Tensor3& t, const AttnConfig& cfg, AttnTrace* trace) {
  Matrix x = unfold_mode3(t);
  return fold_mode3(attn(x, x, x, cfg, trace), t.h, t.w);
}

Tensor3 attn_pooled_2d(const Tensor3& t, const AttnConfig& cfg, AttnTrace* trace) {
  Matrix q = unfold_mode3(t);
  Matrix kv = unfold_mode3(avg_pool_2x2_ceil(t));
  return fold_mode3(attn(q, kv, kv, cfg, trace), t.h, t.w);
}

Tensor3 kao_kv(const Tensor3& t, const AttnConfig& cfg, AttnTrace* trace) {
  Matrix ctx = juxtapose_context(t);
  return fold_mode3(attn(unfold_mode3(t), ctx, ctx, cfg, trace), t.h, t.w);
}

Tensor3 kao_qkv(const Tensor3& t, const AttnConfig& cfg, AttnTrace* trace) {
  Matrix ctx = juxtapose_context(t);
  Matrix o = attn(ctx, ctx, ctx, cfg, trace);  // c_out x (h+w)
  // first w columns attend like H (width axis), last h like L (height axis)
  Tensor3 out(t.h, t.w, o.rows);
  for (int k = 0; k < o.rows; ++k)
    for (int i = 0; i < t.h; ++i)
      for (int j = 0; j < t.w; ++j) out.at(i, j, k) = o.at(k, t.w + i) + o.at(k, j);
  return out;
}

}  // namespace kan
