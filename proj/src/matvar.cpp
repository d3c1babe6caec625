#include "kan/matvar.hpp"

#include <cmath>
#include <numeric>

#include "kan/rng.hpp"
#include "kan/tensor_ops.hpp"

namespace kan {

namespace {

double vec_mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

Matrix diag_matrix(const std::vector<double>& d) {
  Matrix m(int(d.size()), int(d.size()));
  for (int i = 0; i < m.rows; ++i) m.at(i, i) = d[std::size_t(i)];
  return m;
}

}  // namespace

MatrixNormalKS::MatrixNormalKS(std::vector<double> mu_, std::vector<double> upsilon_,
                               std::vector<double> omega_, std::vector<double> psi_)
    : mu(std::move(mu_)), upsilon(std::move(upsilon_)),
      omega_diag(std::move(omega_)), psi_diag(std::move(psi_)) {
  if (mu.empty() || upsilon.empty())
    throw shape_error("MatrixNormalKS: mean components must be nonempty");
  if (omega_diag.size() != mu.size() || psi_diag.size() != upsilon.size())
    throw shape_error("MatrixNormalKS: covariance diagonal lengths must match h and w");
  for (double v : omega_diag)
    if (!(v > 0.0)) throw shape_error("MatrixNormalKS: Omega diagonal must be > 0");
  for (double v : psi_diag)
    if (!(v > 0.0)) throw shape_error("MatrixNormalKS: Psi diagonal must be > 0");
}

Matrix MatrixNormalKS::mean_matrix() const { return outer_sum(mu, upsilon); }

Matrix sample(const MatrixNormalKS& d, std::uint64_t seed) {
  const int h = d.h(), w = d.w();
  Matrix x(h, w);
  CounterRng rng(seed);
#pragma omp parallel for if (x.size() > 16384)
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double sd = std::sqrt(d.omega_diag[std::size_t(i)] + d.psi_diag[std::size_t(j)]);
      x.at(i, j) = d.mu[std::size_t(i)] + d.upsilon[std::size_t(j)] +
                   sd * rng.normal(std::uint64_t(i) * w + j);
    }
  return x;
}

MarginalSpec row_average_marginal(const MatrixNormalKS& d) {
  const double mu_bar = vec_mean(d.mu);
  const double omega_bar = vec_mean(d.omega_diag);
  MarginalSpec m;
  m.axis = MarginalAxis::row;
  m.mean.resize(d.upsilon.size());
  m.cov_diag.resize(d.psi_diag.size());
  for (std::size_t j = 0; j < d.upsilon.size(); ++j) {
    m.mean[j] = mu_bar + d.upsilon[j];
    m.cov_diag[j] = (omega_bar + d.psi_diag[j]) / double(d.h());
  }
  return m;
}

MarginalSpec col_average_marginal(const MatrixNormalKS& d) {
  const double ups_bar = vec_mean(d.upsilon);
  const double psi_bar = vec_mean(d.psi_diag);
  MarginalSpec m;
  m.axis = MarginalAxis::column;
  m.mean.resize(d.mu.size());
  m.cov_diag.resize(d.omega_diag.size());
  for (std::size_t i = 0; i < d.mu.size(); ++i) {
    m.mean[i] = ups_bar + d.mu[i];
    m.cov_diag[i] = (psi_bar + d.omega_diag[i]) / double(d.w());
  }
  return m;
}

std::vector<double> sample_marginal(const MarginalSpec& m, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<double> x(m.mean.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = m.mean[i] + std::sqrt(m.cov_diag[i]) * rng.normal(i);
  return x;
}

Matrix reconstruct(const std::vector<std::vector<double>>& rows,
                   const std::vector<std::vector<double>>& cols) {
  if (rows.empty() || cols.empty())
    throw shape_error("reconstruct: need at least one row and one column sample");
  const int h = int(rows.size());
  const int w = int(cols.size());
  for (const auto& r : rows)
    if (int(r.size()) != w) throw shape_error("reconstruct: row samples must have length w");
  for (const auto& c : cols)
    if (int(c.size()) != h) throw shape_error("reconstruct: column samples must have length h");
  Matrix x(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      x.at(i, j) = rows[std::size_t(i)][std::size_t(j)] + cols[std::size_t(j)][std::size_t(i)];
  return x;
}

TraceIdentity trace_identity_check(const MatrixNormalKS& d) {
  const int h = d.h(), w = d.w();
  if (h != w) throw shape_error("trace_identity_check: requires h == w");
  const double omega_bar = vec_mean(d.omega_diag);
  const double psi_bar = vec_mean(d.psi_diag);

  std::vector<double> left(d.omega_diag.size());   // (Psi_bar + Omega)/w
  std::vector<double> right(d.psi_diag.size());    // (Omega_bar + Psi)/h
  for (std::size_t i = 0; i < left.size(); ++i) left[i] = (psi_bar + d.omega_diag[i]) / w;
  for (std::size_t j = 0; j < right.size(); ++j) right[j] = (omega_bar + d.psi_diag[j]) / h;

  TraceIdentity out;
  out.lhs = trace(kronecker_sum(diag_matrix(left), diag_matrix(right)));
  out.rhs = (2.0 / h) * trace(kronecker_sum(diag_matrix(d.omega_diag), diag_matrix(d.psi_diag)));
  return out;
}

MatrixNormalKS normalize_mean(const MatrixNormalKS& d) {
  MatrixNormalKS out = d;
  const double mu_bar = vec_mean(d.mu);
  const double ups_bar = vec_mean(d.upsilon);
  for (double& v : out.mu) v -= mu_bar;
  for (double& v : out.upsilon) v -= ups_bar;
  return out;
}

}  // namespace kan
