#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "dtsa/network.hpp"
#include "dtsa/rng.hpp"
#include "oracles.hpp"

using namespace dtsa;
using Catch::Approx;

TEST_CASE("topology families", "[network]") {
  const Topology ring4 = build_topology(TopologyKind::ring, 4);
  const std::set<std::pair<std::size_t, std::size_t>> expect = {{0, 1}, {1, 2}, {2, 3}, {0, 3}};
  CHECK(std::set<std::pair<std::size_t, std::size_t>>(ring4.edges.begin(), ring4.edges.end()) ==
        expect);

  CHECK(build_topology(TopologyKind::complete, 3).edges.size() == 3);
  CHECK(build_topology(TopologyKind::path, 5).edges.size() == 4);
  CHECK(build_topology(TopologyKind::star, 6).edges.size() == 5);
  CHECK(build_topology(TopologyKind::ring, 1).edges.empty());
  CHECK(build_topology(TopologyKind::ring, 2).edges.size() == 1);

  const Topology er = build_topology(TopologyKind::erdos_renyi, 8, 0.4, 7);
  CHECK(is_connected(er));
  CHECK_THROWS_AS(build_topology(TopologyKind::erdos_renyi, 8, 0.0, 7), std::invalid_argument);

  CHECK_THROWS_AS(make_topology(3, {{0, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(make_topology(4, {{0, 1}, {2, 3}}), std::invalid_argument);  // disconnected
}

TEST_CASE("erdos-renyi is deterministic per seed", "[network]") {
  const Topology a = build_topology(TopologyKind::erdos_renyi, 10, 0.3, 42);
  const Topology b = build_topology(TopologyKind::erdos_renyi, 10, 0.3, 42);
  CHECK(a.edges == b.edges);
}

TEST_CASE("metropolis weights on a ring", "[network]") {
  const WeightMatrix wm = metropolis_weights(build_topology(TopologyKind::ring, 4));
  for (std::size_t i = 0; i < 4; ++i) CHECK(wm.m(i, i) == Approx(1.0 / 3.0).margin(1e-15));
  CHECK(wm.m(0, 1) == Approx(1.0 / 3.0).margin(1e-15));
  CHECK(wm.m(0, 2) == 0.0);
  CHECK(wm.sigma2 == Approx(1.0 / 3.0).margin(1e-9));
}

TEST_CASE("metropolis weights on complete and star graphs", "[network]") {
  const WeightMatrix complete = metropolis_weights(build_topology(TopologyKind::complete, 4));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(complete.m(i, j) == Approx(0.25).margin(1e-15));
  CHECK(complete.sigma2 == Approx(0.0).margin(1e-8));

  const WeightMatrix star = metropolis_weights(build_topology(TopologyKind::star, 3));
  CHECK(star.m(0, 1) == Approx(1.0 / 3.0).margin(1e-15));
  CHECK(star.m(0, 2) == Approx(1.0 / 3.0).margin(1e-15));
  CHECK(star.m(0, 0) == Approx(1.0 / 3.0).margin(1e-15));
  CHECK(star.m(1, 1) == Approx(2.0 / 3.0).margin(1e-15));
  CHECK(star.m(2, 2) == Approx(2.0 / 3.0).margin(1e-15));
}

TEST_CASE("metropolis output is symmetric and passes the validator", "[network][property]") {
  for (std::size_t n : {2u, 3u, 5u, 8u}) {
    for (auto kind : {TopologyKind::ring, TopologyKind::path, TopologyKind::star,
                      TopologyKind::complete}) {
      const WeightMatrix wm = metropolis_weights(build_topology(kind, n));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) CHECK(wm.m(i, j) == wm.m(j, i));
      CHECK(validate_assumption3(wm).pass());
    }
  }
}

TEST_CASE("lazy weights", "[network]") {
  const Topology complete4 = build_topology(TopologyKind::complete, 4);
  const WeightMatrix base = metropolis_weights(complete4);
  const WeightMatrix zero = lazy_weights(complete4, 0.0);
  CHECK(frobenius_norm(zero.m - base.m) == 0.0);

  const WeightMatrix half = lazy_weights(complete4, 0.5);
  CHECK(half.m(0, 0) == Approx(0.625).margin(1e-15));  // 0.5 * 0.25 + 0.5
  CHECK(half.sigma2 == Approx(0.5).margin(1e-9));

  CHECK_THROWS_AS(lazy_weights(complete4, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(lazy_weights(complete4, -0.1), std::invalid_argument);
}

TEST_CASE("lazy sigma2 is nondecreasing in laziness", "[network][property]") {
  for (auto kind : {TopologyKind::ring, TopologyKind::star}) {
    const Topology t = build_topology(kind, 6);
    double last = -1.0;
    for (double lam : {0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9}) {
      const double s = lazy_weights(t, lam).sigma2;
      CHECK(s >= last - 1e-10);
      last = s;
    }
  }
}

TEST_CASE("assumption-3 validator flags broken matrices", "[network]") {
  const Topology ring4 = build_topology(TopologyKind::ring, 4);

  WeightMatrix identity_wm;
  identity_wm.m = DenseMatrix::identity(4);
  identity_wm.topology = ring4;
  const Assumption3Report rep = validate_assumption3(identity_wm);
  CHECK_FALSE(rep.pass());
  CHECK_FALSE(rep.pattern_matches_edges);
  CHECK_FALSE(rep.mixing_connected);
  CHECK(rep.sigma2 == Approx(1.0).margin(1e-9));
  CHECK(rep.row_sums_ok);

  WeightMatrix bad_rows = metropolis_weights(ring4);
  bad_rows.m(0, 0) += 0.01;
  const Assumption3Report rep2 = validate_assumption3(bad_rows);
  CHECK_FALSE(rep2.row_sums_ok);
  CHECK_FALSE(rep2.pass());
}

TEST_CASE("weight matrices preserve vector averages", "[network][property]") {
  SplitMix64 g(5);
  for (std::size_t n : {3u, 6u}) {
    const WeightMatrix wm = metropolis_weights(build_topology(TopologyKind::ring, n));
    for (int trial = 0; trial < 50; ++trial) {
      DenseVector v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = standard_normal(g);
      const DenseVector mixed = wm.m * v;
      double mean_before = 0.0, mean_after = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        mean_before += v[i];
        mean_after += mixed[i];
      }
      CHECK(std::abs(mean_after - mean_before) / n <= 1e-12);
    }
  }
}

TEST_CASE("sigma_pair picks the slower graph", "[network]") {
  const Topology ring4 = build_topology(TopologyKind::ring, 4);
  const WeightMatrix w = metropolis_weights(ring4);
  const WeightMatrix v = lazy_weights(build_topology(TopologyKind::complete, 4), 0.5);
  CHECK(sigma_pair(w, v) == Approx(0.5).margin(1e-9));
  CHECK(sigma_pair(w, w) == Approx(w.sigma2).margin(1e-12));

  WeightMatrix frozen;
  frozen.m = DenseMatrix::identity(4);
  frozen.topology = ring4;
  frozen.sigma2 = 1.0;
  CHECK_THROWS_AS(sigma_pair(w, frozen), std::domain_error);
}
