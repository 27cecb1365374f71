#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dtsa/matrix.hpp"
#include "dtsa/rng.hpp"
#include "dtsa/spectral.hpp"

namespace dtsa {

// An undirected communication graph. Edges are stored as (i, j) with i < j.
struct Topology {
  std::size_t node_count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
};

inline std::vector<std::size_t> degrees(const Topology& t) {
  std::vector<std::size_t> deg(t.node_count, 0);
  for (const auto& [i, j] : t.edges) {
    ++deg[i];
    ++deg[j];
  }
  return deg;
}

inline bool is_connected(const Topology& t) {
  if (t.node_count <= 1) return true;
  std::vector<std::vector<std::size_t>> adj(t.node_count);
  for (const auto& [i, j] : t.edges) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  std::vector<bool> seen(t.node_count, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    for (std::size_t v : adj[u])
      if (!seen[v]) {
        seen[v] = true;
        ++reached;
        stack.push_back(v);
      }
  }
  return reached == t.node_count;
}

inline Topology make_topology(std::size_t n,
                              std::vector<std::pair<std::size_t, std::size_t>> edges) {
  Topology t;
  t.node_count = n;
  std::set<std::pair<std::size_t, std::size_t>> dedup;
  for (auto [i, j] : edges) {
    require(i < n && j < n, "make_topology: edge endpoint out of range");
    require(i != j, "make_topology: self-loops are not allowed");
    dedup.emplace(std::min(i, j), std::max(i, j));
  }
  t.edges.assign(dedup.begin(), dedup.end());
  require(is_connected(t), "make_topology: graph must be connected");
  return t;
}

enum class TopologyKind { ring, path, star, complete, erdos_renyi };

inline TopologyKind topology_kind_from_string(const std::string& s) {
  if (s == "ring") return TopologyKind::ring;
  if (s == "path") return TopologyKind::path;
  if (s == "star") return TopologyKind::star;
  if (s == "complete") return TopologyKind::complete;
  if (s == "erdos_renyi") return TopologyKind::erdos_renyi;
  throw std::invalid_argument("unknown topology kind: " + s);
}

inline std::string to_string(TopologyKind k) {
  switch (k) {
    case TopologyKind::ring: return "ring";
    case TopologyKind::path: return "path";
    case TopologyKind::star: return "star";
    case TopologyKind::complete: return "complete";
    case TopologyKind::erdos_renyi: return "erdos_renyi";
  }
  return "?";
}

// Connected graphs from a handful of standard families. Erdos-Renyi draws
// are resampled until connected (capped at 1000 attempts).
inline Topology build_topology(TopologyKind kind, std::size_t n, double edge_prob = 0.0,
                               std::uint64_t seed = 0) {
  require(n >= 1, "build_topology: need at least one node");
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  switch (kind) {
    case TopologyKind::ring:
      for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
      if (n >= 3) edges.emplace_back(n - 1, 0);
      return make_topology(n, std::move(edges));
    case TopologyKind::path:
      for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
      return make_topology(n, std::move(edges));
    case TopologyKind::star:
      for (std::size_t i = 1; i < n; ++i) edges.emplace_back(0, i);
      return make_topology(n, std::move(edges));
    case TopologyKind::complete:
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
      return make_topology(n, std::move(edges));
    case TopologyKind::erdos_renyi: {
      require(edge_prob > 0.0 && edge_prob <= 1.0,
              "build_topology: erdos_renyi needs edge_prob in (0, 1]");
      SplitMix64 g(substream_seed(seed, 0x45524e59ULL));
      for (int attempt = 0; attempt < 1000; ++attempt) {
        edges.clear();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = i + 1; j < n; ++j)
            if (g.uniform01() < edge_prob) edges.emplace_back(i, j);
        Topology t;
        t.node_count = n;
        t.edges = edges;
        if (is_connected(t)) return make_topology(n, std::move(edges));
      }
      throw std::runtime_error(
          "build_topology: no connected Erdos-Renyi draw within 1000 attempts");
    }
  }
  throw std::invalid_argument("build_topology: unknown kind");
}

// A doubly stochastic mixing matrix tied to a topology, with its second
// singular value cached.
struct WeightMatrix {
  DenseMatrix m;
  Topology topology;
  double sigma2 = 0.0;
};

struct Assumption3Report {
  bool row_sums_ok = false;
  bool col_sums_ok = false;
  bool nonnegative = false;
  bool positive_diagonal = false;
  bool pattern_matches_edges = false;
  bool mixing_connected = false;
  double sigma2 = 1.0;
  std::vector<std::string> failures;

  bool pass() const {
    return row_sums_ok && col_sums_ok && nonnegative && positive_diagonal &&
           pattern_matches_edges && mixing_connected;
  }
};

inline Assumption3Report validate_assumption3(const WeightMatrix& wm) {
  Assumption3Report rep;
  const DenseMatrix& m = wm.m;
  const std::size_t n = m.rows;
  if (!m.square() || n != wm.topology.node_count) {
    rep.failures.push_back("matrix shape does not match topology");
    return rep;
  }
  constexpr double kStochTol = 1e-12;

  rep.row_sums_ok = rep.col_sums_ok = rep.nonnegative = true;
  for (std::size_t i = 0; i < n; ++i) {
    double rs = 0.0, cs = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      rs += m(i, j);
      cs += m(j, i);
      if (m(i, j) < -1e-15) rep.nonnegative = false;
    }
    if (std::abs(rs - 1.0) > kStochTol) rep.row_sums_ok = false;
    if (std::abs(cs - 1.0) > kStochTol) rep.col_sums_ok = false;
  }

  rep.positive_diagonal = true;
  for (std::size_t i = 0; i < n; ++i)
    if (!(m(i, i) > 0.0)) rep.positive_diagonal = false;

  std::set<std::pair<std::size_t, std::size_t>> edge_set(wm.topology.edges.begin(),
                                                         wm.topology.edges.end());
  rep.pattern_matches_edges = true;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool positive = m(i, j) > 1e-15 && m(j, i) > 1e-15;
      const bool edge = edge_set.count({i, j}) > 0;
      if (positive != edge) rep.pattern_matches_edges = false;
    }

  // connectivity of the support graph; this is what actually mixes
  Topology support;
  support.node_count = n;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (m(i, j) > 1e-15) support.edges.emplace_back(i, j);
  rep.mixing_connected = is_connected(support);

  try {
    rep.sigma2 = second_singular_value(m);
  } catch (const std::exception&) {
    rep.sigma2 = 1.0;
  }

  if (!rep.row_sums_ok) rep.failures.push_back("row sums differ from 1");
  if (!rep.col_sums_ok) rep.failures.push_back("column sums differ from 1");
  if (!rep.nonnegative) rep.failures.push_back("negative entries present");
  if (!rep.positive_diagonal) rep.failures.push_back("diagonal not strictly positive");
  if (!rep.pattern_matches_edges) rep.failures.push_back("support does not match edge set");
  if (!rep.mixing_connected) rep.failures.push_back("support graph is not connected");
  return rep;
}

inline WeightMatrix make_weight_matrix(DenseMatrix m, Topology t) {
  WeightMatrix wm;
  wm.m = std::move(m);
  wm.topology = std::move(t);
  const Assumption3Report rep = validate_assumption3(wm);
  if (!rep.pass()) {
    std::string msg = "make_weight_matrix: invalid mixing matrix:";
    for (const auto& f : rep.failures) msg += " " + f + ";";
    throw std::invalid_argument(msg);
  }
  wm.sigma2 = rep.sigma2;
  return wm;
}

// Metropolis-Hastings weights: w_ij = 1 / (1 + max(deg_i, deg_j)) on edges,
// diagonal fills the remainder. Symmetric, doubly stochastic, positive
// diagonal for any connected graph.
inline WeightMatrix metropolis_weights(const Topology& t) {
  require(is_connected(t), "metropolis_weights: topology must be connected");
  const std::size_t n = t.node_count;
  const auto deg = degrees(t);
  DenseMatrix m(n, n);
  for (const auto& [i, j] : t.edges) {
    const double w = 1.0 / (1.0 + static_cast<double>(std::max(deg[i], deg[j])));
    m(i, j) = w;
    m(j, i) = w;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double off = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) off += m(i, j);
    m(i, i) = 1.0 - off;
  }
  return make_weight_matrix(std::move(m), t);
}

// (1 - laziness) * Metropolis + laziness * I. A knob for producing a slower
// second matrix so the two communication graphs mix at different speeds.
inline WeightMatrix lazy_weights(const Topology& t, double laziness) {
  require(laziness >= 0.0 && laziness < 1.0, "lazy_weights: laziness must be in [0, 1)");
  WeightMatrix base = metropolis_weights(t);
  const std::size_t n = t.node_count;
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m(i, j) = (1.0 - laziness) * base.m(i, j) + (i == j ? laziness : 0.0);
  return make_weight_matrix(std::move(m), t);
}

// sigma = max(sigma_W, sigma_V), the slower of the two mixing speeds. Zero is
// accepted (complete-graph averaging); values at or above 1 mean the matrix
// does not mix and are rejected.
inline double sigma_pair(const WeightMatrix& w, const WeightMatrix& v) {
  const double sigma = std::max(w.sigma2, v.sigma2);
  if (!(sigma < 1.0 - 1e-9))
    throw std::domain_error("sigma_pair: mixing parameter must be below 1");
  return sigma;
}

}  // namespace dtsa
