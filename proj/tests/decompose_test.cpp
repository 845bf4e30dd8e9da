#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cptr/decompose.hpp"
#include "oracles.hpp"

#include <cmath>
#include <limits>

using namespace cptr;

namespace {

double max_orthonormality_err(const Matrix& f) {
  const Matrix gram = f.transpose() * f;
  return (gram - Matrix::Identity(f.cols(), f.cols())).cwiseAbs().maxCoeff();
}

double tucker_recon_error(const DenseTensor& t, const TuckerFactors& f) {
  return relative_error(t, tucker_reconstruct(f));
}

// Rank-1 tensor a (x) b (x) c built entrywise.
DenseTensor rank1(const Vector& a, const Vector& b, const Vector& c) {
  DenseTensor t({a.size(), b.size(), c.size()});
  for (Index i = 0; i < a.size(); ++i)
    for (Index j = 0; j < b.size(); ++j)
      for (Index k = 0; k < c.size(); ++k) t.at3(i, j, k) = a[i] * b[j] * c[k];
  return t;
}

Vector random_unit(Index n, std::uint64_t seed) {
  Matrix m = oracle::random_matrix(n, 1, seed);
  Vector v = m.col(0);
  return v / v.norm();
}

}  // namespace

TEST_CASE("svd_thin on identity and a diagonal matrix") {
  SvdThin s = svd_thin(Matrix::Identity(4, 4));
  for (Index i = 0; i < 4; ++i) CHECK(s.singulars[i] == doctest::Approx(1.0));

  Matrix d = Matrix::Zero(3, 3);
  d(0, 0) = 3.0;
  d(1, 1) = 2.0;
  d(2, 2) = 1.0;
  s = svd_thin(d);
  CHECK(s.singulars[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(s.singulars[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(s.singulars[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("svd_thin reconstruction, orthonormality and the Gram oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix m = oracle::random_matrix(5, 3, seed);
    const SvdThin s = svd_thin(m);
    REQUIRE(s.singulars.size() == 3);
    for (Index i = 0; i + 1 < s.singulars.size(); ++i) {
      CHECK(s.singulars[i] >= s.singulars[i + 1]);
      CHECK(s.singulars[i + 1] >= 0.0);
    }
    const Matrix recon = s.left * s.singulars.asDiagonal() * s.right.transpose();
    CHECK((recon - m).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(max_orthonormality_err(s.left) < 1e-12);
    CHECK(max_orthonormality_err(s.right) < 1e-12);

    // sigma_i == sqrt(eig_i(M^T M)) via a hand-rolled Jacobi eigensolver.
    const std::vector<double> want = oracle::gram_singular_values(m);
    for (Index i = 0; i < 3; ++i) {
      CHECK(std::abs(s.singulars[i] - want[static_cast<std::size_t>(i)]) < 1e-10);
    }
  }
}

TEST_CASE("svd_thin rejects non-finite input") {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(svd_thin(m), DomainError);
}

TEST_CASE("hosvd at full ranks reconstructs exactly") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DenseTensor t = oracle::random_tensor3(6, 5, 4, seed);
    const TuckerFactors f = hosvd(t, {6, 5, 4});
    CHECK(tucker_recon_error(t, f) < 1e-10);
    CHECK(max_orthonormality_err(f.factor_u) < 1e-10);
    CHECK(max_orthonormality_err(f.factor_v) < 1e-10);
    CHECK(max_orthonormality_err(f.factor_z) < 1e-10);
  }
}

TEST_CASE("hosvd recovers a planted rank-1 tensor at ranks (1,1,1)") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DenseTensor t =
        rank1(random_unit(6, seed * 3), random_unit(5, seed * 3 + 1),
              random_unit(4, seed * 3 + 2));
    const TuckerFactors f = hosvd(t, {1, 1, 1});
    CHECK(tucker_recon_error(t, f) < 1e-10);
  }
}

TEST_CASE("hosvd truncation error obeys the discarded-spectra bound") {
  // ||T - hosvd_r(T)||^2 <= sum_n sum_{i > r_n} sigma_{n,i}^2, with the
  // unfolding spectra computed by the independent Gram-Jacobi oracle.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const DenseTensor t = oracle::random_tensor3(6, 5, 4, seed + 100);
    const std::array<Index, 3> ranks = {3, 3, 3};
    const TuckerFactors f = hosvd(t, ranks);
    DenseTensor diff = t;
    diff -= tucker_reconstruct(f);
    const double err2 = std::pow(frobenius_norm(diff), 2);

    double bound = 0.0;
    for (int n = 1; n <= 3; ++n) {
      const std::vector<double> sv =
          oracle::gram_singular_values(oracle::unfold3(t, n));
      for (std::size_t i = static_cast<std::size_t>(ranks[static_cast<std::size_t>(n - 1)]);
           i < sv.size(); ++i) {
        bound += sv[i] * sv[i];
      }
    }
    CHECK(err2 <= bound + 1e-10);
  }
}

TEST_CASE("hosvd factor columns are sign-fixed") {
  const DenseTensor t = oracle::random_tensor3(4, 4, 4, 7);
  const TuckerFactors f = hosvd(t, {3, 3, 3});
  for (int mode = 1; mode <= 3; ++mode) {
    const Matrix& m = f.factor(mode);
    for (Index c = 0; c < m.cols(); ++c) {
      Index imax = 0;
      m.col(c).cwiseAbs().maxCoeff(&imax);
      CHECK(m(imax, c) >= 0.0);
    }
  }
}

TEST_CASE("hosvd rank validation") {
  const DenseTensor t = oracle::random_tensor3(3, 3, 3, 0);
  CHECK_THROWS_AS(hosvd(t, {4, 3, 3}), RankError);
  CHECK_THROWS_AS(hosvd(t, {0, 3, 3}), RankError);
  DenseTensor order2({3, 3});
  CHECK_THROWS_AS(hosvd(order2, {1, 1, 1}), ShapeError);
}

TEST_CASE("hooi with max_iters = 0 equals hosvd") {
  const DenseTensor t = oracle::random_tensor3(6, 5, 4, 11);
  const TuckerFactors a = hosvd(t, {3, 2, 2});
  const TuckerFactors b = hooi(t, {3, 2, 2}, 0, 1e-10);
  CHECK((a.factor_u - b.factor_u).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.factor_v - b.factor_v).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.factor_z - b.factor_z).cwiseAbs().maxCoeff() == 0.0);
  for (Index i = 0; i < a.core.size(); ++i) CHECK(a.core[i] == b.core[i]);
}

TEST_CASE("hooi error trace is monotone and never worse than hosvd") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DenseTensor t = oracle::random_tensor3(6, 5, 4, seed + 40);
    std::vector<double> trace;
    hooi(t, {2, 2, 2}, 8, 1e-14, &trace);
    REQUIRE(trace.size() >= 1);
    for (std::size_t i = 1; i < trace.size(); ++i) {
      CHECK(trace[i] <= trace[i - 1] + 1e-12);
    }
    CHECK(trace.back() <= trace.front() + 1e-12);  // trace.front() is hosvd
  }
}

TEST_CASE("hooi recovers a planted low-rank tensor") {
  // Orthonormal factors times a random (2,2,2) core: exactly rank (2,2,2).
  const Matrix u = svd_thin(oracle::random_matrix(6, 2, 1)).left;
  const Matrix v = svd_thin(oracle::random_matrix(5, 2, 2)).left;
  const Matrix z = svd_thin(oracle::random_matrix(4, 2, 3)).left;
  TuckerFactors planted{oracle::random_tensor3(2, 2, 2, 4), u, v, z};
  const DenseTensor t = tucker_reconstruct(planted);
  const TuckerFactors f = hooi(t, {2, 2, 2}, 10, 1e-12);
  CHECK(tucker_recon_error(t, f) < 1e-10);
}

TEST_CASE("tucker_reconstruct matches the quadruple-sum oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TuckerFactors f;
    f.core = oracle::random_tensor3(2, 3, 2, seed);
    f.factor_u = oracle::random_matrix(4, 2, seed + 10);
    f.factor_v = oracle::random_matrix(5, 3, seed + 20);
    f.factor_z = oracle::random_matrix(3, 2, seed + 30);
    const DenseTensor got = tucker_reconstruct(f);
    const DenseTensor want = oracle::tucker_reconstruct_sum(f);
    REQUIRE(got.same_shape(want));
    for (Index i = 0; i < got.size(); ++i) {
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("tucker_reconstruct shape validation") {
  TuckerFactors f;
  f.core = DenseTensor({2, 2, 2});
  f.factor_u = Matrix::Zero(4, 3);  // wrong column count
  f.factor_v = Matrix::Zero(5, 2);
  f.factor_z = Matrix::Zero(3, 2);
  CHECK_THROWS_AS(tucker_reconstruct(f), ShapeError);
}

TEST_CASE("cp_als on the zero tensor yields zero weights") {
  const DenseTensor t({3, 3, 3});
  const CPFactors f = cp_als(t, 2, 10, 1e-10);
  for (Index r = 0; r < f.rank(); ++r) CHECK(f.weights[r] == 0.0);
  const DenseTensor recon = cp_reconstruct(f);
  for (Index i = 0; i < recon.size(); ++i) CHECK(recon[i] == 0.0);
}

TEST_CASE("cp_als recovers a planted rank-1 tensor") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const DenseTensor t =
        rank1(random_unit(4, seed * 7), random_unit(5, seed * 7 + 1),
              random_unit(3, seed * 7 + 2));
    const CPFactors f = cp_als(t, 1, 50, 1e-14, seed);
    CHECK(relative_error(t, cp_reconstruct(f)) < 1e-8);
  }
}

TEST_CASE("cp_als recovers a planted rank-2 tensor with separated weights") {
  const Vector a1 = random_unit(6, 1), b1 = random_unit(5, 2), c1 = random_unit(4, 3);
  const Vector a2 = random_unit(6, 4), b2 = random_unit(5, 5), c2 = random_unit(4, 6);
  DenseTensor t = rank1(a1, b1, c1);
  t *= 10.0;
  DenseTensor t2 = rank1(a2, b2, c2);
  t += t2;
  const CPFactors f = cp_als(t, 2, 200, 1e-15, 3);
  CHECK(relative_error(t, cp_reconstruct(f)) < 1e-6);
}

TEST_CASE("cp_als objective trace is monotone and columns stay unit") {
  const DenseTensor t = oracle::random_tensor3(4, 4, 4, 17);
  std::vector<double> trace;
  const CPFactors f = cp_als(t, 3, 25, 1e-14, 5, &trace);
  REQUIRE(!trace.empty());
  for (std::size_t i = 1; i < trace.size(); ++i) {
    CHECK(trace[i] <= trace[i - 1] + 1e-12);
  }
  for (const Matrix* m : {&f.factor_a, &f.factor_b, &f.factor_c}) {
    for (Index c = 0; c < m->cols(); ++c) {
      CHECK(m->col(c).norm() == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("cp_als determinism for a fixed seed") {
  const DenseTensor t = oracle::random_tensor3(4, 3, 5, 23);
  const CPFactors f1 = cp_als(t, 2, 20, 1e-12, 9);
  const CPFactors f2 = cp_als(t, 2, 20, 1e-12, 9);
  CHECK((f1.weights - f2.weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK((f1.factor_a - f2.factor_a).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cp_als validation") {
  const DenseTensor t = oracle::random_tensor3(2, 2, 2, 0);
  CHECK_THROWS_AS(cp_als(t, 0, 5, 1e-10), RankError);
  CHECK_THROWS_AS(cp_als(t, 100, 5, 1e-10), RankError);
  CHECK_THROWS_AS(cp_als(t, 1, -1, 1e-10), RankError);
  CHECK_THROWS_AS(cp_als(t, 1, 5, 0.0), DomainError);
}

TEST_CASE("cp_reconstruct matches the triple-sum oracle") {
  CPFactors f;
  f.weights = Vector(3);
  f.weights << 2.0, 1.0, 0.5;
  f.factor_a = oracle::random_matrix(4, 3, 51);
  f.factor_b = oracle::random_matrix(3, 3, 52);
  f.factor_c = oracle::random_matrix(5, 3, 53);
  const DenseTensor got = cp_reconstruct(f);
  const DenseTensor want = oracle::cp_reconstruct_sum(f);
  REQUIRE(got.same_shape(want));
  for (Index i = 0; i < got.size(); ++i) {
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("cp_reconstruct single-component hand case") {
  CPFactors f;
  f.weights = Vector::Ones(1);
  f.factor_a = Matrix::Zero(2, 1);
  f.factor_b = Matrix::Zero(2, 1);
  f.factor_c = Matrix::Zero(2, 1);
  f.factor_a(1, 0) = 1.0;
  f.factor_b(0, 0) = 1.0;
  f.factor_c(1, 0) = 1.0;
  const DenseTensor t = cp_reconstruct(f);
  for (Index i = 0; i < t.size(); ++i) {
    CHECK(t[i] == (i == t.dim(1) * t.dim(2) + 1 ? 1.0 : 0.0));  // entry (1,0,1)
  }
}
