#include <catch2/catch_amalgamated.hpp>

#include "qbo/linalg.hpp"
#include "qbo/random.hpp"

using namespace qbo;

namespace {

Matrix random_spd(int n, Rng& rng, double ridge = 0.1) {
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
  return a * a.transpose() + ridge * Matrix::Identity(n, n);
}

Matrix random_symmetric(int n, Rng& rng) {
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
  return 0.5 * (a + a.transpose());
}

}  // namespace

TEST_CASE("cholesky of the identity needs no jitter", "[linalg]") {
  const auto res = cholesky(Matrix::Identity(2, 2));
  CHECK(res.jitter_used == 0.0);
  CHECK(res.L.isApprox(Matrix::Identity(2, 2), 1e-14));
}

TEST_CASE("cholesky matches the hand-computed 2x2 factor", "[linalg]") {
  Matrix sigma(2, 2);
  sigma << 4.0, 2.0, 2.0, 3.0;
  const auto res = cholesky(sigma);
  Matrix expected(2, 2);
  expected << 2.0, 0.0, 1.0, std::sqrt(2.0);
  CHECK((res.L - expected).cwiseAbs().maxCoeff() < 1e-12);
  // multiply back
  CHECK((res.L * res.L.transpose() - sigma).norm() / sigma.norm() < 1e-14);
}

TEST_CASE("rank-deficient sigma is rescued by jitter", "[linalg]") {
  Matrix sigma(2, 2);
  sigma << 1.0, 1.0, 1.0, 1.0;
  const auto res = cholesky(sigma);
  CHECK(res.jitter_used > 0.0);
  const Matrix rebuilt = res.L * res.L.transpose();
  const Matrix target = sigma + res.jitter_used * Matrix::Identity(2, 2);
  CHECK((rebuilt - target).norm() / sigma.norm() < 1e-8);
  for (int i = 0; i < 2; ++i) CHECK(res.L(i, i) > 0.0);
}

TEST_CASE("cholesky rejects what jitter cannot fix", "[linalg]") {
  Matrix sigma(2, 2);
  sigma << -1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(cholesky(sigma), NotPositiveDefinite);
}

TEST_CASE("reconstruction holds across a random SPD corpus", "[linalg]") {
  Rng rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(6));
    const Matrix sigma = random_spd(n, rng, trial % 5 == 0 ? 1e-12 : 0.1);
    const auto res = cholesky(sigma);
    const Matrix target = sigma + res.jitter_used * Matrix::Identity(n, n);
    CHECK((res.L * res.L.transpose() - target).norm() / sigma.norm() <= 1e-8);
  }
}

TEST_CASE("tri_solve_lower identity and substitution cases", "[linalg]") {
  Rng rng(7);
  Matrix b(2, 1);
  b << 0.3, -1.7;
  CHECK(tri_solve_lower(Matrix::Identity(2, 2), b).isApprox(b, 1e-15));

  Matrix L(2, 2);
  L << 2.0, 0.0, 1.0, std::sqrt(2.0);
  Matrix rhs(2, 1);
  rhs << 2.0, 1.0 + std::sqrt(2.0);
  const Matrix x = tri_solve_lower(L, rhs);
  CHECK(std::abs(x(0, 0) - 1.0) < 1e-12);
  CHECK(std::abs(x(1, 0) - 1.0) < 1e-12);
  // substitute back
  CHECK((L * x - rhs).norm() / rhs.norm() < 1e-14);
}

TEST_CASE("tri_solve_lower flags singular diagonals", "[linalg]") {
  Matrix L = Matrix::Identity(3, 3);
  L(1, 1) = 0.0;
  CHECK_THROWS_AS(tri_solve_lower(L, Matrix::Ones(3, 1)), SingularTriangular);
}

TEST_CASE("tri_solve round-trips on random systems", "[linalg]") {
  Rng rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(5));
    const Matrix L = cholesky(random_spd(n, rng)).L;
    Matrix b(n, 2);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 2; ++j) b(i, j) = rng.normal();
    const Matrix x = tri_solve_lower(L, b);
    CHECK((L * x - b).norm() / b.norm() <= 1e-10);
  }
}

TEST_CASE("cholesky pushforward base cases", "[linalg]") {
  // zero direction
  Rng rng(3);
  const Matrix L = cholesky(random_spd(3, rng)).L;
  CHECK(cholesky_pushforward(L, Matrix::Zero(3, 3)).norm() == 0.0);

  // 1x1 scalar chain rule on sqrt
  Matrix l1(1, 1), ds(1, 1);
  l1 << 1.7;
  ds << 0.4;
  const Matrix dl = cholesky_pushforward(l1, ds);
  CHECK(std::abs(dl(0, 0) - 0.4 / (2.0 * 1.7)) < 1e-15);
}

TEST_CASE("cholesky pushforward matches finite differences", "[linalg]") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix sigma = random_spd(3, rng);
    const Matrix dsigma = random_symmetric(3, rng);
    const Matrix L = cholesky(sigma).L;
    const Matrix dL = cholesky_pushforward(L, dsigma);

    const double h = 1e-6;
    const Matrix lp = cholesky(sigma + h * dsigma).L;
    const Matrix lm = cholesky(sigma - h * dsigma).L;
    const Matrix fd = (lp - lm) / (2.0 * h);
    const double rel = (dL - fd).norm() / std::max(fd.norm(), 1e-12);
    CHECK(rel < 1e-5);
  }
}

TEST_CASE("cholesky pushforward is linear in the direction", "[linalg]") {
  Rng rng(77);
  const Matrix sigma = random_spd(4, rng);
  const Matrix L = cholesky(sigma).L;
  const Matrix a = random_symmetric(4, rng);
  const Matrix b = random_symmetric(4, rng);
  const Matrix combo = cholesky_pushforward(L, 0.3 * a + 1.9 * b);
  const Matrix split =
      0.3 * cholesky_pushforward(L, a) + 1.9 * cholesky_pushforward(L, b);
  CHECK((combo - split).cwiseAbs().maxCoeff() < 1e-10);
}
