#pragma once

#include <cstdint>
#include <vector>

#include "kan/matrix.hpp"

namespace kan {

// Matrix-variate normal with outer-sum mean mu (+) upsilon and diagonal
// Kronecker-sum covariance Omega (+) Psi. Only the diagonals of the
// covariance factors are stored; dense factors are rejected by construction.
// Under the row-major entry ordering vec(X^T), the diagonal of Omega (+) Psi
// at position (i*w + j) is Omega_ii + Psi_jj, so entries are independent with
// per-entry variance Omega_ii + Psi_jj (covered by a test against the
// materialized Kronecker sum).
struct MatrixNormalKS {
  std::vector<double> mu;          // length h
  std::vector<double> upsilon;     // length w
  std::vector<double> omega_diag;  // length h, entries > 0
  std::vector<double> psi_diag;    // length w, entries > 0

  MatrixNormalKS(std::vector<double> mu_, std::vector<double> upsilon_,
                 std::vector<double> omega_, std::vector<double> psi_);

  int h() const { return int(mu.size()); }
  int w() const { return int(upsilon.size()); }
  Matrix mean_matrix() const;  // outer_sum(mu, upsilon), h x w
};

enum class MarginalAxis { row, column };

// A multivariate normal with diagonal covariance, tagged by which averaged
// axis it describes.
struct MarginalSpec {
  std::vector<double> mean;
  std::vector<double> cov_diag;  // entries > 0
  MarginalAxis axis;
};

// One draw of X; entry (i,j) = mu[i] + upsilon[j] + N(0, Omega_ii + Psi_jj).
// Deterministic per seed (counter-based generator).
Matrix sample(const MatrixNormalKS& d, std::uint64_t seed);

// distribution of the row average (sum_i X_i:)/h, a length-w normal
MarginalSpec row_average_marginal(const MatrixNormalKS& d);
// distribution of the column average (sum_j X_:j)/w, a length-h normal
MarginalSpec col_average_marginal(const MatrixNormalKS& d);

// one draw from a diagonal-covariance normal, deterministic per seed
std::vector<double> sample_marginal(const MarginalSpec& m, std::uint64_t seed);

// X~ = [r_1,...,r_h]^T + [c_1,...,c_w]: rows stacked as matrix rows, cols as
// matrix columns. Each r_k must have length w and each c_k length h.
Matrix reconstruct(const std::vector<std::vector<double>>& rows,
                   const std::vector<std::vector<double>>& cols);

struct TraceIdentity {
  double lhs;  // tr((Psi_bar + Omega)/w (+) (Omega_bar + Psi)/h), materialized
  double rhs;  // (2/h) tr(Omega (+) Psi)
};

// requires h == w
TraceIdentity trace_identity_check(const MatrixNormalKS& d);

// shift mu and upsilon by their own means so mean(mu) + mean(upsilon) = 0;
// idempotent, changes outer_sum(mu, upsilon) by the global constant
// -(mu_bar + upsilon_bar)
MatrixNormalKS normalize_mean(const MatrixNormalKS& d);

}  // namespace kan
