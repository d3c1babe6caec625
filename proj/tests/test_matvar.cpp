#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "kan/matvar.hpp"
#include "kan/rng.hpp"
#include "kan/tensor_ops.hpp"

using namespace kan;

namespace {

struct Moments {
  Matrix mean, var;
};

// empirical per-entry mean/variance of a matrix-valued sampler
template <typename F>
Moments empirical_moments(int h, int w, int n, F&& draw) {
  Matrix sum(h, w), sumsq(h, w);
  for (int s = 0; s < n; ++s) {
    Matrix x = draw(s);
    for (std::size_t i = 0; i < x.size(); ++i) {
      sum.data[i] += x.data[i];
      sumsq.data[i] += x.data[i] * x.data[i];
    }
  }
  Moments m{Matrix(h, w), Matrix(h, w)};
  for (std::size_t i = 0; i < sum.size(); ++i) {
    m.mean.data[i] = sum.data[i] / n;
    m.var.data[i] = sumsq.data[i] / n - m.mean.data[i] * m.mean.data[i];
  }
  return m;
}

}  // namespace

TEST_CASE("construction validates positive variances") {
  CHECK_THROWS_AS(MatrixNormalKS({0.0}, {0.0}, {0.0}, {1.0}), shape_error);
  CHECK_THROWS_AS(MatrixNormalKS({0.0}, {0.0}, {1.0}, {-2.0}), shape_error);
  CHECK_THROWS_AS(MatrixNormalKS({0.0, 0.0}, {0.0}, {1.0}, {1.0}), shape_error);
  MatrixNormalKS ok({0.0, 1.0}, {0.0, 2.0}, {1.0, 1.0}, {1.0, 1.0});
  CHECK(ok.h() == 2);
  CHECK(ok.w() == 2);
}

TEST_CASE("per-entry sampling variance equals the Kronecker-sum diagonal") {
  MatrixNormalKS d({0, 0, 0}, {0, 0}, {0.7, 1.3, 2.1}, {0.4, 3.3});
  Matrix omega(3, 3), psi(2, 2);
  for (int i = 0; i < 3; ++i) omega.at(i, i) = d.omega_diag[std::size_t(i)];
  for (int j = 0; j < 2; ++j) psi.at(j, j) = d.psi_diag[std::size_t(j)];
  Matrix ks = kronecker_sum(omega, psi);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(ks.at(i * 2 + j, i * 2 + j) ==
            doctest::Approx(d.omega_diag[std::size_t(i)] + d.psi_diag[std::size_t(j)]).epsilon(1e-15));
}

TEST_CASE("sample: vanishing noise reduces to the outer-sum mean") {
  MatrixNormalKS d({1, -2, 0.5}, {0.25, 3}, {1e-12, 1e-12, 1e-12}, {1e-12, 1e-12});
  Matrix x = sample(d, 42);
  Matrix m = d.mean_matrix();
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(x.data[i] - m.data[i]) < 1e-4);
}

TEST_CASE("sample is deterministic per seed") {
  MatrixNormalKS d({0, 1}, {0, 2}, {1, 1}, {1, 1});
  CHECK(sample(d, 7).data == sample(d, 7).data);
  CHECK(sample(d, 7).data != sample(d, 8).data);
}

TEST_CASE("sample: Monte Carlo mean and variance match the model") {
  const int n = 100000;
  MatrixNormalKS d({0, 1}, {0, 2}, {1, 1}, {1, 1});
  Moments mo = empirical_moments(2, 2, n, [&](int s) { return sample(d, std::uint64_t(s) + 1000); });
  Matrix m = d.mean_matrix();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      double sd = std::sqrt(d.omega_diag[std::size_t(i)] + d.psi_diag[std::size_t(j)]);
      CHECK(std::abs(mo.mean.at(i, j) - m.at(i, j)) < 3.0 * sd / std::sqrt(double(n)));
      CHECK(mo.var.at(i, j) == doctest::Approx(sd * sd).epsilon(0.05));
    }
}

TEST_CASE("row_average_marginal spec values") {
  MatrixNormalKS d({0, 0}, {1, 2}, {1, 1}, {1, 1});
  MarginalSpec m = row_average_marginal(d);
  CHECK(m.axis == MarginalAxis::row);
  CHECK(m.mean == std::vector<double>{1, 2});
  CHECK(m.cov_diag == std::vector<double>{1, 1});

  // symmetric case: mu = ups = 0, Omega = Psi = s^2 I, h = w -> 2 s^2 / h
  const double s2 = 2.25;
  MatrixNormalKS sym({0, 0, 0}, {0, 0, 0}, {s2, s2, s2}, {s2, s2, s2});
  MarginalSpec ms = row_average_marginal(sym);
  for (double v : ms.cov_diag) CHECK(v == doctest::Approx(2 * s2 / 3).epsilon(1e-15));
}

TEST_CASE("col_average_marginal mirrors the row case") {
  MatrixNormalKS d({1, 2}, {0, 0}, {1, 1}, {1, 1});
  MarginalSpec m = col_average_marginal(d);
  CHECK(m.axis == MarginalAxis::column);
  CHECK(m.mean == std::vector<double>{1, 2});
  CHECK(m.cov_diag == std::vector<double>{1, 1});
}

TEST_CASE("row/column averages of sample() match their marginal laws") {
  const int n = 100000;
  MatrixNormalKS d({0.5, -0.5}, {1, 2}, {0.8, 1.2}, {1.5, 0.5});
  const int h = d.h(), w = d.w();

  MarginalSpec rowm = row_average_marginal(d);
  MarginalSpec colm = col_average_marginal(d);

  Moments rows = empirical_moments(1, w, n, [&](int s) {
    Matrix x = sample(d, std::uint64_t(s) + 5000);
    Matrix avg(1, w);
    for (int j = 0; j < w; ++j) {
      double acc = 0;
      for (int i = 0; i < h; ++i) acc += x.at(i, j);
      avg.at(0, j) = acc / h;
    }
    return avg;
  });
  for (int j = 0; j < w; ++j) {
    double sd = std::sqrt(rowm.cov_diag[std::size_t(j)]);
    CHECK(std::abs(rows.mean.at(0, j) - rowm.mean[std::size_t(j)]) < 3.0 * sd / std::sqrt(double(n)));
    CHECK(rows.var.at(0, j) == doctest::Approx(rowm.cov_diag[std::size_t(j)]).epsilon(0.05));
  }

  Moments cols = empirical_moments(h, 1, n, [&](int s) {
    Matrix x = sample(d, std::uint64_t(s) + 9000);
    Matrix avg(h, 1);
    for (int i = 0; i < h; ++i) {
      double acc = 0;
      for (int j = 0; j < w; ++j) acc += x.at(i, j);
      avg.at(i, 0) = acc / w;
    }
    return avg;
  });
  for (int i = 0; i < h; ++i) {
    double sd = std::sqrt(colm.cov_diag[std::size_t(i)]);
    CHECK(std::abs(cols.mean.at(i, 0) - colm.mean[std::size_t(i)]) < 3.0 * sd / std::sqrt(double(n)));
    CHECK(cols.var.at(i, 0) == doctest::Approx(colm.cov_diag[std::size_t(i)]).epsilon(0.05));
  }
}

TEST_CASE("reconstruct: degenerate constant inputs reduce to an outer sum") {
  std::vector<double> a{1, 2, 3};           // length w
  std::vector<double> b{10, 20};            // length h
  std::vector<std::vector<double>> rows(2, a), cols(3, b);
  Matrix x = reconstruct(rows, cols);
  Matrix expect = outer_sum(b, a);
  CHECK(x.data == expect.data);

  CHECK_THROWS_AS(reconstruct({{1, 2}}, {{1, 2}, {3, 4}}), shape_error);
}

TEST_CASE("reconstruct: Monte Carlo moments match the reconstruction law") {
  const int n = 100000;
  MatrixNormalKS d({0.5, -0.25}, {1, 0.5}, {0.8, 1.2}, {1.5, 0.5});
  const int h = d.h(), w = d.w();
  MarginalSpec rowm = row_average_marginal(d);
  MarginalSpec colm = col_average_marginal(d);

  Moments mo = empirical_moments(h, w, n, [&](int s) {
    std::vector<std::vector<double>> rows, cols;
    for (int i = 0; i < h; ++i)
      rows.push_back(sample_marginal(rowm, std::uint64_t(s) * 97 + 13 * std::uint64_t(i) + 1));
    for (int j = 0; j < w; ++j)
      cols.push_back(sample_marginal(colm, 7777777ULL + std::uint64_t(s) * 89 + 17 * std::uint64_t(j)));
    return reconstruct(rows, cols);
  });

  double mu_bar = std::accumulate(d.mu.begin(), d.mu.end(), 0.0) / h;
  double ups_bar = std::accumulate(d.upsilon.begin(), d.upsilon.end(), 0.0) / w;
  double omega_bar = std::accumulate(d.omega_diag.begin(), d.omega_diag.end(), 0.0) / h;
  double psi_bar = std::accumulate(d.psi_diag.begin(), d.psi_diag.end(), 0.0) / w;
  Matrix m = d.mean_matrix();
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double mean = m.at(i, j) + mu_bar + ups_bar;
      double var = (psi_bar + d.omega_diag[std::size_t(i)]) / w +
                   (omega_bar + d.psi_diag[std::size_t(j)]) / h;
      CHECK(std::abs(mo.mean.at(i, j) - mean) < 3.0 * std::sqrt(var) / std::sqrt(double(n)));
      CHECK(mo.var.at(i, j) == doctest::Approx(var).epsilon(0.05));
    }
}

TEST_CASE("trace_identity_check") {
  MatrixNormalKS d({0, 0, 0, 0}, {0, 0, 0, 0}, {1, 2, 3, 4}, {1, 1, 1, 1});
  TraceIdentity ti = trace_identity_check(d);
  CHECK(ti.rhs == doctest::Approx(28.0).epsilon(1e-15));
  CHECK(ti.lhs == doctest::Approx(28.0).epsilon(1e-15));

  for (int h : {2, 3, 5, 8}) {
    std::vector<double> ones(std::size_t(h), 1.0), zeros(std::size_t(h), 0.0);
    TraceIdentity id = trace_identity_check(MatrixNormalKS(zeros, zeros, ones, ones));
    CHECK(id.lhs == doctest::Approx(4.0 * h).epsilon(1e-14));
    CHECK(id.rhs == doctest::Approx(4.0 * h).epsilon(1e-14));
  }

  for (int h : {2, 3, 5, 8}) {
    CounterRng rng{std::uint64_t(h)};
    std::vector<double> zeros(std::size_t(h), 0.0), od(std::size_t(h), 0.0), pd(std::size_t(h), 0.0);
    for (int i = 0; i < h; ++i) {
      od[std::size_t(i)] = rng.uniform(std::uint64_t(i), 0.1, 4.0);
      pd[std::size_t(i)] = rng.uniform(std::uint64_t(100 + i), 0.1, 4.0);
    }
    TraceIdentity id = trace_identity_check(MatrixNormalKS(zeros, zeros, od, pd));
    CHECK(std::abs(id.lhs - id.rhs) < 1e-9);
  }

  MatrixNormalKS rect({0, 0, 0}, {0, 0}, {1, 1, 1}, {1, 1});
  CHECK_THROWS_AS(trace_identity_check(rect), shape_error);
}

TEST_CASE("normalize_mean") {
  MatrixNormalKS d({1, 1}, {1, 1}, {1, 1}, {1, 1});
  MatrixNormalKS nd = normalize_mean(d);
  double mu_bar = (nd.mu[0] + nd.mu[1]) / 2;
  double ups_bar = (nd.upsilon[0] + nd.upsilon[1]) / 2;
  CHECK(std::abs(mu_bar + ups_bar) < 1e-15);
  CHECK(nd.mu == std::vector<double>{0, 0});
  CHECK(nd.upsilon == std::vector<double>{0, 0});

  // idempotence
  MatrixNormalKS again = normalize_mean(nd);
  CHECK(again.mu == nd.mu);
  CHECK(again.upsilon == nd.upsilon);

  // mean matrix shifts by exactly the pre-normalization global constant
  MatrixNormalKS e({2, -1, 0.5}, {0.25, 1.5}, {1, 1, 1}, {1, 1});
  double shift = (2 - 1 + 0.5) / 3.0 + (0.25 + 1.5) / 2.0;
  Matrix before = e.mean_matrix();
  Matrix after = normalize_mean(e).mean_matrix();
  for (std::size_t i = 0; i < before.size(); ++i)
    CHECK(after.data[i] == doctest::Approx(before.data[i] - shift).epsilon(1e-14));
}

TEST_CASE("after normalization the reconstruction mean is the outer-sum mean") {
  const int n = 60000;
  MatrixNormalKS raw({2, -1}, {0.5, 1.5}, {0.8, 1.2}, {1.5, 0.5});
  MatrixNormalKS d = normalize_mean(raw);
  MarginalSpec rowm = row_average_marginal(d);
  MarginalSpec colm = col_average_marginal(d);
  const int h = d.h(), w = d.w();
  Moments mo = empirical_moments(h, w, n, [&](int s) {
    std::vector<std::vector<double>> rows, cols;
    for (int i = 0; i < h; ++i)
      rows.push_back(sample_marginal(rowm, std::uint64_t(s) * 31 + std::uint64_t(i) + 3));
    for (int j = 0; j < w; ++j)
      cols.push_back(sample_marginal(colm, 424242ULL + std::uint64_t(s) * 37 + std::uint64_t(j)));
    return reconstruct(rows, cols);
  });
  Matrix m = d.mean_matrix();
  double omega_bar = (d.omega_diag[0] + d.omega_diag[1]) / 2;
  double psi_bar = (d.psi_diag[0] + d.psi_diag[1]) / 2;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double var = (psi_bar + d.omega_diag[std::size_t(i)]) / w +
                   (omega_bar + d.psi_diag[std::size_t(j)]) / h;
      CHECK(std::abs(mo.mean.at(i, j) - m.at(i, j)) < 3.0 * std::sqrt(var / n));
    }
}
