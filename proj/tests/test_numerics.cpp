#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "dtsa/matrix.hpp"
#include "dtsa/network.hpp"
#include "dtsa/rng.hpp"
#include "dtsa/spectral.hpp"
#include "oracles.hpp"

using namespace dtsa;
using Catch::Approx;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  SplitMix64 g(seed);
  DenseMatrix m(r, c);
  for (double& x : m.a) x = standard_normal(g);
  return m;
}

}  // namespace

TEST_CASE("dense types reject non-finite entries", "[matrix]") {
  CHECK_THROWS_AS(DenseVector::from({1.0, std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(DenseMatrix::from(1, 2, {1.0, std::numeric_limits<double>::infinity()}),
                  std::invalid_argument);
  CHECK_THROWS_AS(DenseMatrix::from(2, 2, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("frobenius norm basics", "[matrix]") {
  CHECK(frobenius_norm(DenseMatrix(3, 3)) == 0.0);
  CHECK(frobenius_norm(DenseMatrix::identity(4)) == Approx(2.0).margin(1e-15));
  CHECK(frobenius_norm(DenseMatrix::from(2, 2, {3, 0, 0, 4})) == Approx(5.0).margin(1e-15));
}

TEST_CASE("solve_linear on simple systems", "[matrix]") {
  const DenseVector a = solve_linear(DenseMatrix::identity(2), {3.0, 4.0});
  CHECK(a[0] == 3.0);
  CHECK(a[1] == 4.0);

  const DenseVector b = solve_linear(DenseMatrix::from(2, 2, {2, 0, 0, 4}), {2.0, 8.0});
  CHECK(b[0] == Approx(1.0).margin(1e-14));
  CHECK(b[1] == Approx(2.0).margin(1e-14));
}

TEST_CASE("solve_linear residual on well-conditioned random systems", "[matrix]") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    DenseMatrix a = random_matrix(5, 5, seed);
    for (std::size_t i = 0; i < 5; ++i) a(i, i) += 6.0;  // diagonally dominant-ish
    SplitMix64 g(seed ^ 0xabcdef);
    DenseVector b(5);
    for (std::size_t i = 0; i < 5; ++i) b[i] = standard_normal(g);
    const DenseVector x = solve_linear(a, b);
    CHECK(norm(a * x - b) <= 1e-10 * (1.0 + norm(b)));
  }
}

TEST_CASE("solve_linear reports the offending pivot", "[matrix]") {
  const DenseMatrix singular = DenseMatrix::from(2, 2, {1, 2, 2, 4});
  try {
    solve_linear(singular, {1.0, 1.0});
    FAIL("expected SingularMatrixError");
  } catch (const SingularMatrixError& e) {
    CHECK(e.pivot_index == 1);
  }
  CHECK_THROWS_AS(solve_linear(DenseMatrix(3, 3), {1.0, 1.0, 1.0}), SingularMatrixError);
}

TEST_CASE("solve then apply is the identity", "[matrix][property]") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DenseMatrix a = random_matrix(6, 6, 100 + seed);
    for (std::size_t i = 0; i < 6; ++i) a(i, i) += 8.0;
    SplitMix64 g(seed);
    DenseVector x_true(6);
    for (std::size_t i = 0; i < 6; ++i) x_true[i] = standard_normal(g);
    const DenseVector x = solve_linear(a, a * x_true);
    CHECK(norm(x - x_true) <= 1e-10 * (1.0 + norm(x_true)));
  }
}

TEST_CASE("second singular value on known mixing matrices", "[spectral]") {
  // complete-graph averaging is a rank-one projector
  const std::size_t n = 5;
  CHECK(second_singular_value(DenseMatrix::constant(n, n, 1.0 / n)) ==
        Approx(0.0).margin(1e-8));
  // the identity never mixes
  CHECK(second_singular_value(DenseMatrix::identity(4)) == Approx(1.0).margin(1e-10));
  // 4-ring Metropolis: eigenvalues {1, 1/3, -1/3, 1/3}
  const WeightMatrix ring = metropolis_weights(build_topology(TopologyKind::ring, 4));
  CHECK(second_singular_value(ring.m) == Approx(1.0 / 3.0).margin(1e-10));
  CHECK_THROWS_AS(second_singular_value(DenseMatrix(2, 3)), std::invalid_argument);
}

TEST_CASE("second singular value matches full decomposition on all families",
          "[spectral][oracle]") {
  for (std::size_t n = 2; n <= 8; ++n) {
    std::vector<Topology> tops = {build_topology(TopologyKind::ring, n),
                                  build_topology(TopologyKind::path, n),
                                  build_topology(TopologyKind::star, n),
                                  build_topology(TopologyKind::complete, n)};
    if (n >= 4) tops.push_back(build_topology(TopologyKind::erdos_renyi, n, 0.5, n));
    for (const auto& t : tops) {
      const WeightMatrix wm = metropolis_weights(t);
      CHECK(std::abs(second_singular_value(wm.m) - oracles::second_singular_value(wm.m)) <=
            1e-8);
      const WeightMatrix lazy = lazy_weights(t, 0.35);
      CHECK(std::abs(second_singular_value(lazy.m) - oracles::second_singular_value(lazy.m)) <=
            1e-8);
    }
  }
}

TEST_CASE("eigenvalues agree with the full decomposition", "[spectral][oracle]") {
  for (std::size_t n : {2u, 3u, 4u, 6u, 9u, 12u, 16u}) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const DenseMatrix m = random_matrix(n, n, 1000 * n + seed);
      const auto mine = eigenvalues(m);
      auto ref = oracles::eigenvalues(m);
      // greedy nearest matching; conjugate pairs make sort order fragile
      for (const auto& lam : mine) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < ref.size(); ++j)
          if (std::abs(lam - ref[j]) < std::abs(lam - ref[best])) best = j;
        CHECK(std::abs(lam - ref[best]) <= 1e-8 * std::max(1.0, std::abs(ref[best])));
        ref.erase(ref.begin() + static_cast<std::ptrdiff_t>(best));
      }
    }
  }
}

TEST_CASE("eigenvalues satisfy the characteristic polynomial at small sizes",
          "[spectral][oracle]") {
  for (std::size_t n : {2u, 3u, 4u}) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const DenseMatrix m = random_matrix(n, n, 77 * n + seed);
      const auto coeffs = oracles::char_poly_coefficients(m);
      for (const auto& lam : eigenvalues(m))
        CHECK(std::abs(oracles::char_poly_eval(coeffs, lam)) <= 1e-8);
    }
  }
}

TEST_CASE("positive stability checks", "[spectral]") {
  CHECK(is_positive_stable(DenseMatrix::identity(3)));
  // rotation generator: eigenvalues +-i, real parts zero
  CHECK_FALSE(is_positive_stable(DenseMatrix::from(2, 2, {0, 1, -1, 0})));
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const DenseMatrix m = random_matrix(4, 4, 500 + seed);
    DenseMatrix g = transpose(m) * m;
    for (std::size_t i = 0; i < 4; ++i) g(i, i) += 0.1;
    CHECK(is_positive_stable(g));
    CHECK(oracles::min_eigenvalue_real_part(g) > 0.0);
  }
}

TEST_CASE("positive stability is invariant under positive scaling", "[spectral][property]") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DenseMatrix m = random_matrix(5, 5, 900 + seed);
    const bool base = is_positive_stable(m);
    for (double c : {0.01, 0.5, 3.0, 250.0}) {
      CHECK(is_positive_stable(c * m) == base);
    }
  }
}

TEST_CASE("symmetric eigendecomposition reconstructs the input", "[spectral]") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const DenseMatrix m = random_matrix(6, 6, 42 + seed);
    const DenseMatrix s = transpose(m) * m;
    const SymmetricEigen se = symmetric_eigen(s);
    DenseMatrix recon(6, 6);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < 6; ++k)
          acc += se.vectors(i, k) * se.values[k] * se.vectors(j, k);
        recon(i, j) = acc;
      }
    CHECK(frobenius_norm(recon - s) <= 1e-10 * std::max(1.0, frobenius_norm(s)));
    for (std::size_t k = 0; k + 1 < 6; ++k) CHECK(se.values[k] <= se.values[k + 1]);
  }
  CHECK_THROWS_AS(symmetric_eigen(DenseMatrix::from(2, 2, {0, 1, 0, 0})),
                  std::invalid_argument);
}

TEST_CASE("mixing contraction bound check", "[spectral]") {
  const WeightMatrix ring = metropolis_weights(build_topology(TopologyKind::ring, 4));

  CHECK(spectral_norm_bound_check(ring.m, DenseMatrix(4, 2), 1.0 / 3.0));

  const DenseMatrix avg = DenseMatrix::constant(4, 4, 0.25);
  SplitMix64 g(7);
  DenseMatrix xhat(4, 3);
  for (double& x : xhat.a) x = standard_normal(g);
  DenseMatrix centered = center_rows(xhat);
  CHECK(spectral_norm_bound_check(avg, centered, 0.0));

  // precondition violation: columns that do not sum to zero
  CHECK_THROWS_AS(spectral_norm_bound_check(ring.m, DenseMatrix::constant(4, 2, 1.0), 0.5),
                  std::invalid_argument);
}

TEST_CASE("contraction holds for random centered matrices", "[spectral][property]") {
  const WeightMatrix ring = metropolis_weights(build_topology(TopologyKind::ring, 4));
  const double sigma = ring.sigma2;
  SplitMix64 g(123);
  for (int trial = 0; trial < 1000; ++trial) {
    DenseMatrix xhat(4, 3);
    for (double& x : xhat.a) x = standard_normal(g);
    xhat = center_rows(xhat);
    CHECK(frobenius_norm(ring.m * xhat) <= sigma * frobenius_norm(xhat) + 1e-9);
    CHECK(spectral_norm_bound_check(ring.m, xhat, sigma));
  }
}
