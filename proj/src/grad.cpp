#include "kan/grad.hpp"

#include <cmath>

#include "kan/tensor_ops.hpp"

namespace kan {

namespace {

// adjoint of the H = horizontal_mean reduction: each dH entry feeds back 1/h
void add_horizontal_mean_adjoint(Tensor3& dt, const Matrix& dh) {
  for (int k = 0; k < dt.c; ++k)
    for (int j = 0; j < dt.w; ++j) {
      const double g = dh.at(j, k) / dt.h;
      for (int i = 0; i < dt.h; ++i) dt.at(i, j, k) += g;
    }
}

void add_lateral_mean_adjoint(Tensor3& dt, const Matrix& dl) {
  for (int k = 0; k < dt.c; ++k)
    for (int i = 0; i < dt.h; ++i) {
      const double g = dl.at(i, k) / dt.w;
      for (int j = 0; j < dt.w; ++j) dt.at(i, j, k) += g;
    }
}

// split dC back into (dH, dL) and push both through the mean adjoints
void add_context_adjoint(Tensor3& dt, const Matrix& dctx) {
  Matrix dh(dt.w, dt.c), dl(dt.h, dt.c);
  for (int k = 0; k < dt.c; ++k) {
    for (int j = 0; j < dt.w; ++j) dh.at(j, k) = dctx.at(k, j);
    for (int i = 0; i < dt.h; ++i) dl.at(i, k) = dctx.at(k, dt.w + i);
  }
  add_horizontal_mean_adjoint(dt, dh);
  add_lateral_mean_adjoint(dt, dl);
}

void add_matrix(Matrix& acc, const Matrix& m) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += m.data[i];
}

}  // namespace

MatmulGrads backward_matmul(const Matrix& a, const Matrix& b, const Matrix& upstream) {
  if (upstream.rows != a.rows || upstream.cols != b.cols)
    throw shape_error("backward_matmul: upstream shape mismatch");
  return {matmul(upstream, transpose(b)), matmul(transpose(a), upstream)};
}

Matrix backward_softmax_columns(const Matrix& s, const Matrix& upstream) {
  if (!s.same_shape(upstream)) throw shape_error("backward_softmax_columns: shape mismatch");
  Matrix de(s.rows, s.cols);
  for (int j = 0; j < s.cols; ++j) {
    double dot = 0.0;
    for (int i = 0; i < s.rows; ++i) dot += s.at(i, j) * upstream.at(i, j);
    for (int i = 0; i < s.rows; ++i) de.at(i, j) = s.at(i, j) * (upstream.at(i, j) - dot);
  }
  return de;
}

AttnGrads backward_attn(const Matrix& q, const Matrix& k, const Matrix& v,
                        const Matrix& upstream, const AttnConfig& cfg) {
  AttnTrace tr;
  (void)attn(q, k, v, cfg, &tr);
  if (upstream.rows != tr.v.rows || upstream.cols != tr.q.cols)
    throw shape_error("backward_attn: upstream shape mismatch");

  // O = V' S
  Matrix dvp = matmul(upstream, transpose(tr.coeff_softmax));
  Matrix ds = matmul(transpose(tr.v), upstream);
  Matrix de = backward_softmax_columns(tr.coeff_softmax, ds);

  if (cfg.coeff_norm == CoeffNorm::batch_norm_stats && cfg.coeff_stats != nullptr) {
    const CoeffStats& st = *cfg.coeff_stats;
    for (std::size_t i = 0; i < de.size(); ++i)
      de.data[i] *= st.gamma.data[i] / std::sqrt(st.var.data[i] + CoeffStats::eps);
  }

  // E = K'^T Q'
  Matrix dqp = matmul(tr.k, de);
  Matrix dkp = matmul(tr.q, transpose(de));

  AttnGrads g;
  if (cfg.use_wq()) {
    g.dq = matmul(transpose(*cfg.wq), dqp);
    g.dwq = matmul(dqp, transpose(q));
  } else {
    g.dq = std::move(dqp);
  }
  if (cfg.use_wk()) {
    g.dk = matmul(transpose(*cfg.wk), dkp);
    g.dwk = matmul(dkp, transpose(k));
  } else {
    g.dk = std::move(dkp);
  }
  if (cfg.use_wv()) {
    g.dv = matmul(transpose(*cfg.wv), dvp);
    g.dwv = matmul(dvp, transpose(v));
  } else {
    g.dv = std::move(dvp);
  }
  return g;
}

TensorAttnGrads backward_nonlocal_2d(const Tensor3& t, const Tensor3& upstream,
                                     const AttnConfig& cfg) {
  if (!t.same_shape(upstream)) throw shape_error("backward_nonlocal_2d: shape mismatch");
  Matrix x = unfold_mode3(t);
  AttnGrads ag = backward_attn(x, x, x, unfold_mode3(upstream), cfg);
  Matrix dx = ag.dq;
  add_matrix(dx, ag.dk);
  add_matrix(dx, ag.dv);
  return {fold_mode3(dx, t.h, t.w), std::move(ag.dwq), std::move(ag.dwk), std::move(ag.dwv)};
}

Tensor3 backward_avg_pool_2x2_ceil(const Tensor3& input_like, const Tensor3& upstream) {
  return backward_avg_pool_2x2_ceil(input_like.h, input_like.w, upstream);
}

Tensor3 backward_avg_pool_2x2_ceil(int h, int w, const Tensor3& upstream) {
  const int ph = (h + 1) / 2, pw = (w + 1) / 2;
  if (upstream.h != ph || upstream.w != pw)
    throw shape_error("backward_avg_pool_2x2_ceil: upstream shape mismatch");
  Tensor3 dt(h, w, upstream.c);
  for (int k = 0; k < dt.c; ++k)
    for (int a = 0; a < ph; ++a)
      for (int b = 0; b < pw; ++b) {
        const int i1 = std::min(2 * a + 2, dt.h), j1 = std::min(2 * b + 2, dt.w);
        const int n = (i1 - 2 * a) * (j1 - 2 * b);
        const double g = upstream.at(a, b, k) / n;
        for (int i = 2 * a; i < i1; ++i)
          for (int j = 2 * b; j < j1; ++j) dt.at(i, j, k) += g;
      }
  return dt;
}

TensorAttnGrads backward_attn_pooled_2d(const Tensor3& t, const Tensor3& upstream,
                                        const AttnConfig& cfg) {
  if (!t.same_shape(upstream)) throw shape_error("backward_attn_pooled_2d: shape mismatch");
  Tensor3 pooled = avg_pool_2x2_ceil(t);
  Matrix q = unfold_mode3(t);
  Matrix kv = unfold_mode3(pooled);
  AttnGrads ag = backward_attn(q, kv, kv, unfold_mode3(upstream), cfg);
  Matrix dkv = ag.dk;
  add_matrix(dkv, ag.dv);
  Tensor3 dt = fold_mode3(ag.dq, t.h, t.w);
  Tensor3 dpool_back = backward_avg_pool_2x2_ceil(t, fold_mode3(dkv, pooled.h, pooled.w));
  for (std::size_t i = 0; i < dt.size(); ++i) dt.data[i] += dpool_back.data[i];
  return {std::move(dt), std::move(ag.dwq), std::move(ag.dwk), std::move(ag.dwv)};
}

TensorAttnGrads backward_kao_kv(const Tensor3& t, const Tensor3& upstream,
                                const AttnConfig& cfg) {
  if (!t.same_shape(upstream)) throw shape_error("backward_kao_kv: shape mismatch");
  Matrix ctx = juxtapose_context(t);
  AttnGrads ag = backward_attn(unfold_mode3(t), ctx, ctx, unfold_mode3(upstream), cfg);
  Tensor3 dt = fold_mode3(ag.dq, t.h, t.w);
  Matrix dctx = ag.dk;
  add_matrix(dctx, ag.dv);
  add_context_adjoint(dt, dctx);
  return {std::move(dt), std::move(ag.dwq), std::move(ag.dwk), std::move(ag.dwv)};
}

TensorAttnGrads backward_kao_qkv(const Tensor3& t, const Tensor3& upstream,
                                 const AttnConfig& cfg) {
  if (upstream.h != t.h || upstream.w != t.w)
    throw shape_error("backward_kao_qkv: spatial shape mismatch");
  Matrix ctx = juxtapose_context(t);
  // Y(i,j,k) = O(k, w+i) + O(k, j)
  Matrix dout(upstream.c, t.h + t.w);
  for (int k = 0; k < upstream.c; ++k) {
    for (int j = 0; j < t.w; ++j) {
      double s = 0.0;
      for (int i = 0; i < t.h; ++i) s += upstream.at(i, j, k);
      dout.at(k, j) = s;
    }
    for (int i = 0; i < t.h; ++i) {
      double s = 0.0;
      for (int j = 0; j < t.w; ++j) s += upstream.at(i, j, k);
      dout.at(k, t.w + i) = s;
    }
  }
  AttnGrads ag = backward_attn(ctx, ctx, ctx, dout, cfg);
  Matrix dctx = ag.dq;
  add_matrix(dctx, ag.dk);
  add_matrix(dctx, ag.dv);
  Tensor3 dt(t.h, t.w, t.c);
  add_context_adjoint(dt, dctx);
  return {std::move(dt), std::move(ag.dwq), std::move(ag.dwk), std::move(ag.dwv)};
}

GradCheckReport gradcheck(const std::function<double(const std::vector<double>&)>& f,
                          const std::vector<double>& x, const std::vector<double>& analytic,
                          double epsilon, double threshold) {
  if (analytic.size() != x.size()) throw shape_error("gradcheck: gradient length mismatch");
  GradCheckReport rep;
  rep.epsilon = epsilon;
  const std::ptrdiff_t n = std::ptrdiff_t(x.size());
#pragma omp parallel for if (n > 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    std::vector<double> xp = x;
    xp[std::size_t(i)] = x[std::size_t(i)] + epsilon;
    const double fp = f(xp);
    xp[std::size_t(i)] = x[std::size_t(i)] - epsilon;
    const double fm = f(xp);
    const double num = (fp - fm) / (2.0 * epsilon);
    const double a = analytic[std::size_t(i)];
    const double rel = std::abs(a - num) / std::max({1.0, std::abs(a), std::abs(num)});
#pragma omp critical
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = std::size_t(i);
    }
  }
  rep.passed = rep.max_rel_error < threshold;
  return rep;
}

}  // namespace kan
