#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dtsa/matrix.hpp"
#include "dtsa/rng.hpp"
#include "dtsa/spectral.hpp"

namespace dtsa {

// The block linear system the network solves. Each node holds the vectors
// (b1_i, b2_i); the blocks A11..A22 are shared in the homogeneous case and
// per-node in the heterogeneous variant. The collective target is the
// stacked system evaluated at the network-average data
//
//   A11 x + A12 y = mean_i b1_i,   A21 x + A22 y = mean_i b2_i,
//
// which is the fixed point the consensus iteration drives the nodes to.
struct BlockSystem {
  std::size_t d = 0;  // dimension of x and y
  std::size_t N = 0;  // node count
  DenseMatrix A11, A12, A21, A22;
  std::vector<DenseVector> b1, b2;  // one per node
  double R = 0.0;                   // bound on max_i max(||b1_i||, ||b2_i||)
  bool heterogeneous = false;

  struct NodeBlocks {
    DenseMatrix A11, A12, A21, A22;
  };
  std::vector<NodeBlocks> node_blocks;  // size N iff heterogeneous

  const DenseMatrix& block11(std::size_t i) const {
    return heterogeneous ? node_blocks[i].A11 : A11;
  }
  const DenseMatrix& block12(std::size_t i) const {
    return heterogeneous ? node_blocks[i].A12 : A12;
  }
  const DenseMatrix& block21(std::size_t i) const {
    return heterogeneous ? node_blocks[i].A21 : A21;
  }
  const DenseMatrix& block22(std::size_t i) const {
    return heterogeneous ? node_blocks[i].A22 : A22;
  }

  DenseVector mean_b1() const {
    DenseVector m(d);
    for (const auto& b : b1) m += b;
    for (std::size_t c = 0; c < d; ++c) m[c] /= static_cast<double>(N);
    return m;
  }
  DenseVector mean_b2() const {
    DenseVector m(d);
    for (const auto& b : b2) m += b;
    for (std::size_t c = 0; c < d; ++c) m[c] /= static_cast<double>(N);
    return m;
  }

  // Averaged blocks; equal to the shared blocks in the homogeneous case.
  DenseMatrix mean_block(int which) const {
    if (!heterogeneous) {
      switch (which) {
        case 11: return A11;
        case 12: return A12;
        case 21: return A21;
        default: return A22;
      }
    }
    DenseMatrix m(d, d);
    for (const auto& nb : node_blocks) {
      const DenseMatrix* src = which == 11   ? &nb.A11
                               : which == 12 ? &nb.A12
                               : which == 21 ? &nb.A21
                                             : &nb.A22;
      for (std::size_t i = 0; i < m.a.size(); ++i) m.a[i] += src->a[i];
    }
    for (double& x : m.a) x /= static_cast<double>(N);
    return m;
  }
};

struct Solution {
  DenseVector x_star, y_star;
};

// Schur complement of the (averaged) blocks: A22 - A21 A11^{-1} A12.
inline DenseMatrix schur_complement(const BlockSystem& sys) {
  const DenseMatrix a11 = sys.mean_block(11);
  const DenseMatrix a12 = sys.mean_block(12);
  const DenseMatrix a21 = sys.mean_block(21);
  const DenseMatrix a22 = sys.mean_block(22);
  return a22 - a21 * LuDecomposition(a11).solve(a12);
}

// Solves the stacked 2d x 2d system at the network-average data via the Schur
// complement: y* = Delta^{-1}(b2 - A21 A11^{-1} b1), x* = A11^{-1}(b1 - A12 y*).
inline Solution exact_solution(const BlockSystem& sys) {
  const DenseMatrix a11 = sys.mean_block(11);
  const DenseMatrix a12 = sys.mean_block(12);
  const DenseMatrix a21 = sys.mean_block(21);
  const DenseMatrix a22 = sys.mean_block(22);
  const DenseVector rb1 = sys.mean_b1();
  const DenseVector rb2 = sys.mean_b2();

  const LuDecomposition lu11(a11);
  const DenseMatrix delta = a22 - a21 * lu11.solve(a12);
  const LuDecomposition lud(delta);

  Solution sol;
  sol.y_star = lud.solve(rb2 - a21 * lu11.solve(rb1));
  sol.x_star = lu11.solve(rb1 - a12 * sol.y_star);
  return sol;
}

// Residual of the stacked system at a candidate solution, relative to the
// averaged right-hand side. Used by tests and validation reports.
inline double solution_residual(const BlockSystem& sys, const Solution& sol) {
  const DenseVector r1 = sys.mean_block(11) * sol.x_star + sys.mean_block(12) * sol.y_star;
  const DenseVector r2 = sys.mean_block(21) * sol.x_star + sys.mean_block(22) * sol.y_star;
  const DenseVector rb1 = sys.mean_b1();
  const DenseVector rb2 = sys.mean_b2();
  double s = 0.0;
  for (std::size_t i = 0; i < sys.d; ++i) {
    const double e1 = r1[i] - rb1[i];
    const double e2 = r2[i] - rb2[i];
    s += e1 * e1 + e2 * e2;
  }
  return std::sqrt(s);
}

// Rescales all blocks and node vectors by c = 1 / max(1, max_ij ||A_ij||_F).
// Uniform scaling keeps the solution and positive stability intact while
// pushing every block norm to at most 1. Stores the post-scaling R.
inline std::pair<BlockSystem, double> scale_to_assumption2(BlockSystem sys) {
  double max_norm = 0.0;
  const auto consider = [&](const DenseMatrix& m) {
    max_norm = std::max(max_norm, frobenius_norm(m));
  };
  if (sys.heterogeneous) {
    for (const auto& nb : sys.node_blocks) {
      consider(nb.A11);
      consider(nb.A12);
      consider(nb.A21);
      consider(nb.A22);
    }
  } else {
    consider(sys.A11);
    consider(sys.A12);
    consider(sys.A21);
    consider(sys.A22);
  }
  const double c = 1.0 / std::max(1.0, max_norm);

  const auto scale_matrix = [&](DenseMatrix& m) {
    for (double& x : m.a) x *= c;
  };
  scale_matrix(sys.A11);
  scale_matrix(sys.A12);
  scale_matrix(sys.A21);
  scale_matrix(sys.A22);
  for (auto& nb : sys.node_blocks) {
    scale_matrix(nb.A11);
    scale_matrix(nb.A12);
    scale_matrix(nb.A21);
    scale_matrix(nb.A22);
  }
  double r = 0.0;
  for (auto& b : sys.b1) {
    for (double& x : b.e) x *= c;
    r = std::max(r, norm(b));
  }
  for (auto& b : sys.b2) {
    for (double& x : b.e) x *= c;
    r = std::max(r, norm(b));
  }
  sys.R = r;
  return {std::move(sys), c};
}

struct AssumptionReport {
  bool assumption1 = false;
  bool assumption2 = false;
  double min_real_a11 = 0.0;
  double min_real_delta = 0.0;
  double max_block_norm = 0.0;
  double max_b_norm = 0.0;
  double stored_R = 0.0;
  std::vector<std::string> failures;

  bool pass() const { return assumption1 && assumption2; }
};

inline AssumptionReport validate_assumptions(const BlockSystem& sys) {
  AssumptionReport rep;
  rep.stored_R = sys.R;

  const DenseMatrix a11 = sys.mean_block(11);
  rep.min_real_a11 = min_eigenvalue_real_part(a11);
  bool delta_ok = false;
  try {
    rep.min_real_delta = min_eigenvalue_real_part(schur_complement(sys));
    delta_ok = rep.min_real_delta > 0.0;
  } catch (const SingularMatrixError&) {
    rep.min_real_delta = -std::numeric_limits<double>::infinity();
    rep.failures.push_back("A11 is singular; Schur complement undefined");
  }
  rep.assumption1 = rep.min_real_a11 > 0.0 && delta_ok;
  if (rep.min_real_a11 <= 0.0)
    rep.failures.push_back("A11 min eigenvalue real part " + std::to_string(rep.min_real_a11));
  if (!delta_ok && rep.min_real_delta > -std::numeric_limits<double>::infinity() &&
      rep.min_real_delta <= 0.0)
    rep.failures.push_back("Delta min eigenvalue real part " +
                           std::to_string(rep.min_real_delta));

  constexpr double kTol = 1e-12;
  rep.max_block_norm = 0.0;
  const auto consider = [&](const DenseMatrix& m) {
    rep.max_block_norm = std::max(rep.max_block_norm, frobenius_norm(m));
  };
  if (sys.heterogeneous) {
    for (const auto& nb : sys.node_blocks) {
      consider(nb.A11);
      consider(nb.A12);
      consider(nb.A21);
      consider(nb.A22);
    }
  } else {
    consider(sys.A11);
    consider(sys.A12);
    consider(sys.A21);
    consider(sys.A22);
  }
  for (const auto& b : sys.b1) rep.max_b_norm = std::max(rep.max_b_norm, norm(b));
  for (const auto& b : sys.b2) rep.max_b_norm = std::max(rep.max_b_norm, norm(b));
  const bool blocks_ok = rep.max_block_norm <= 1.0 + kTol;
  const bool b_ok = rep.max_b_norm <= sys.R + kTol;
  rep.assumption2 = blocks_ok && b_ok;
  if (!blocks_ok)
    rep.failures.push_back("block norm " + std::to_string(rep.max_block_norm) + " exceeds 1");
  if (!b_ok)
    rep.failures.push_back("node vector norm " + std::to_string(rep.max_b_norm) +
                           " exceeds stored R " + std::to_string(sys.R));
  return rep;
}

// Seeded random instance: A11 and the target Schur complement are Gram
// matrices plus a margin, A12/A21 are free Gaussian blocks, and A22 is chosen
// so the Schur complement hits the target. Scaled to satisfy the norm bounds.
inline BlockSystem random_instance(std::size_t d, std::size_t N, std::uint64_t seed,
                                   double delta_margin = 0.5) {
  require(d >= 1 && N >= 1, "random_instance: d and N must be at least 1");
  require(delta_margin > 0.0, "random_instance: delta_margin must be positive");

  const auto gaussian_matrix = [&](std::uint64_t tag) {
    SplitMix64 g(substream_seed(seed, tag, 0x6d617472ULL));
    DenseMatrix m(d, d);
    for (double& x : m.a) x = standard_normal(g);
    return m;
  };
  const auto gram_plus_margin = [&](std::uint64_t tag) {
    const DenseMatrix m = gaussian_matrix(tag);
    DenseMatrix out = transpose(m) * m;
    for (std::size_t i = 0; i < d; ++i) out(i, i) += delta_margin;
    return out;
  };

  BlockSystem sys;
  sys.d = d;
  sys.N = N;
  sys.A11 = gram_plus_margin(1);
  const DenseMatrix delta_target = gram_plus_margin(2);
  sys.A12 = gaussian_matrix(3);
  sys.A21 = gaussian_matrix(4);
  sys.A22 = delta_target + sys.A21 * LuDecomposition(sys.A11).solve(sys.A12);

  for (std::size_t i = 0; i < N; ++i) {
    SplitMix64 g(substream_seed(seed, 5, i));
    DenseVector v1(d), v2(d);
    for (std::size_t c = 0; c < d; ++c) v1[c] = standard_normal(g);
    for (std::size_t c = 0; c < d; ++c) v2[c] = standard_normal(g);
    sys.b1.push_back(v1);
    sys.b2.push_back(v2);
  }
  return scale_to_assumption2(std::move(sys)).first;
}

// Duplicate the shared blocks into per-node storage, marking the system
// heterogeneous. Useful as a base for per-node perturbations.
inline BlockSystem replicate_heterogeneous(BlockSystem sys) {
  require(!sys.heterogeneous, "replicate_heterogeneous: already heterogeneous");
  sys.node_blocks.clear();
  for (std::size_t i = 0; i < sys.N; ++i)
    sys.node_blocks.push_back({sys.A11, sys.A12, sys.A21, sys.A22});
  sys.heterogeneous = true;
  return sys;
}

// ---------------------------------------------------------------------------
// Policy-evaluation (GTD) instantiation from a small Markov chain.

struct Mdp {
  DenseMatrix transitions;          // S x S, row-stochastic, irreducible
  std::vector<DenseVector> rewards; // one per agent, length S
};

// Stationary distribution of a row-stochastic irreducible chain: direct
// linear solve of pi^T P = pi^T with the normalization row appended; power
// iteration fallback at 1e-12.
inline DenseVector stationary_distribution(const DenseMatrix& p) {
  require(p.square(), "stationary_distribution: P must be square");
  const std::size_t s = p.rows;
  for (std::size_t i = 0; i < s; ++i) {
    double rs = 0.0;
    for (std::size_t j = 0; j < s; ++j) {
      require(p(i, j) >= -1e-15, "stationary_distribution: negative transition probability");
      rs += p(i, j);
    }
    require(std::abs(rs - 1.0) <= 1e-9, "stationary_distribution: rows must sum to 1");
  }

  // irreducibility = strong connectivity of the support digraph
  const auto reach = [&](bool forward) {
    std::vector<bool> seen(s, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    std::size_t count = 1;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v = 0; v < s; ++v) {
        const double w = forward ? p(u, v) : p(v, u);
        if (w > 1e-15 && !seen[v]) {
          seen[v] = true;
          ++count;
          stack.push_back(v);
        }
      }
    }
    return count == s;
  };
  require(reach(true) && reach(false), "stationary_distribution: chain is reducible");

  DenseVector pi(s);
  bool solved = false;
  try {
    // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
    DenseMatrix a(s, s);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) a(i, j) = p(j, i) - (i == j ? 1.0 : 0.0);
    for (std::size_t j = 0; j < s; ++j) a(s - 1, j) = 1.0;
    DenseVector rhs(s);
    rhs[s - 1] = 1.0;
    pi = LuDecomposition(a).solve(rhs);
    solved = true;
  } catch (const SingularMatrixError&) {
  }
  if (!solved) {
    for (std::size_t i = 0; i < s; ++i) pi[i] = 1.0 / static_cast<double>(s);
    for (int it = 0; it < 1000000; ++it) {
      DenseVector next = tmatvec(p, pi);
      double diff = 0.0, total = 0.0;
      for (std::size_t i = 0; i < s; ++i) total += next[i];
      for (std::size_t i = 0; i < s; ++i) next[i] /= total;
      for (std::size_t i = 0; i < s; ++i) diff = std::max(diff, std::abs(next[i] - pi[i]));
      pi = next;
      if (diff <= 1e-12) break;
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < s; ++i) {
    if (pi[i] < 0.0 && pi[i] > -1e-12) pi[i] = 0.0;
    require(pi[i] >= 0.0, "stationary_distribution: negative mass in solution");
    total += pi[i];
  }
  for (std::size_t i = 0; i < s; ++i) pi[i] /= total;
  return pi;
}

// Everything needed both to assemble the expected-value system and to drive
// the sampled simulation mode, before and after the norm scaling.
struct GtdModel {
  Mdp mdp;
  DenseMatrix features;  // S x d
  double discount = 0.0;
  DenseVector stationary;
  DenseMatrix a11, a12, a21;        // unscaled expectation blocks (A22 = 0)
  std::vector<DenseVector> b1_raw;  // unscaled per-agent reward features
  double scale = 1.0;               // applied to the emitted BlockSystem
};

inline GtdModel gtd_model(const Mdp& mdp, const DenseMatrix& features, double discount) {
  require(discount >= 0.0 && discount < 1.0, "gtd_model: discount must be in [0, 1)");
  const std::size_t s = mdp.transitions.rows;
  require(features.rows == s, "gtd_model: features must have one row per state");
  require(!mdp.rewards.empty(), "gtd_model: need at least one agent");
  for (const auto& r : mdp.rewards)
    require(r.size() == s, "gtd_model: rewards must have one entry per state");
  const std::size_t d = features.cols;

  GtdModel model;
  model.mdp = mdp;
  model.features = features;
  model.discount = discount;
  model.stationary = stationary_distribution(mdp.transitions);

  const auto phi = [&](std::size_t state) { return features.row(state); };

  model.a11 = DenseMatrix(d, d);
  model.a12 = DenseMatrix(d, d);
  for (std::size_t st = 0; st < s; ++st) {
    const DenseVector f = phi(st);
    DenseVector expected_next(d);
    for (std::size_t nx = 0; nx < s; ++nx) {
      const double w = mdp.transitions(st, nx);
      if (w == 0.0) continue;
      const DenseVector fn = phi(nx);
      for (std::size_t c = 0; c < d; ++c) expected_next[c] += w * fn[c];
    }
    const double pw = model.stationary[st];
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) {
        model.a11(r, c) += pw * f[r] * f[c];
        model.a12(r, c) += pw * f[r] * (f[c] - discount * expected_next[c]);
      }
  }
  model.a21 = DenseMatrix(d, d);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) model.a21(r, c) = -model.a12(c, r);

  for (const auto& rewards : mdp.rewards) {
    DenseVector b(d);
    for (std::size_t st = 0; st < s; ++st) {
      const double w = model.stationary[st] * rewards[st];
      if (w == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) b[c] += w * features(st, c);
    }
    model.b1_raw.push_back(b);
  }

  const SymmetricEigen se = symmetric_eigen(model.a11);
  require(se.values.front() > 1e-10, "gtd_model: features are rank-deficient");
  try {
    LuDecomposition check(model.a12);
  } catch (const SingularMatrixError&) {
    throw std::invalid_argument("gtd_model: A12 is singular");
  }
  return model;
}

inline BlockSystem gtd_system(GtdModel& model) {
  const std::size_t d = model.features.cols;
  BlockSystem sys;
  sys.d = d;
  sys.N = model.mdp.rewards.size();
  sys.A11 = model.a11;
  sys.A12 = model.a12;
  sys.A21 = model.a21;
  sys.A22 = DenseMatrix(d, d);
  sys.b1 = model.b1_raw;
  for (std::size_t i = 0; i < sys.N; ++i) sys.b2.emplace_back(d);
  auto [scaled, c] = scale_to_assumption2(std::move(sys));
  model.scale = c;

  // Delta reduces to A12^T A11^{-1} A12 here; verify it is positive definite.
  const SymmetricEigen se = symmetric_eigen(schur_complement(scaled));
  require(se.values.front() > 0.0, "gtd_system: Schur complement is not positive definite");
  return scaled;
}

inline BlockSystem gtd_instance(const Mdp& mdp, const DenseMatrix& features,
                                double discount) {
  GtdModel model = gtd_model(mdp, features, discount);
  return gtd_system(model);
}

struct GtdConsistencyReport {
  DenseVector x_fixed_point, y_fixed_point;  // from the closed-form GTD formulas
  DenseVector x_exact, y_exact;              // from exact_solution
  double x_gap = 0.0, y_gap = 0.0;
  bool agrees = false;            // gaps within 1e-8
  double sum_reading_ratio = 1.0; // ||y|| when node data is summed vs averaged
};

// Compares the closed-form GTD fixed point (x = A11^{-1}(A21^T y + mean b1),
// y = A12^{-1} mean b1) against the stacked-system solution, and quantifies
// how far off a summed-data reading of the target would be.
inline GtdConsistencyReport gtd_consistency_check(const BlockSystem& sys) {
  GtdConsistencyReport rep;
  const DenseVector mb1 = sys.mean_b1();
  const LuDecomposition lu12(sys.A12);
  rep.y_fixed_point = lu12.solve(mb1);
  rep.x_fixed_point =
      LuDecomposition(sys.A11).solve(transpose(sys.A21) * rep.y_fixed_point + mb1);

  const Solution sol = exact_solution(sys);
  rep.x_exact = sol.x_star;
  rep.y_exact = sol.y_star;
  rep.x_gap = norm(rep.x_fixed_point - rep.x_exact);
  rep.y_gap = norm(rep.y_fixed_point - rep.y_exact);
  rep.agrees = std::max(rep.x_gap, rep.y_gap) <= 1e-8;

  DenseVector sum_b1(sys.d);
  for (const auto& b : sys.b1) sum_b1 += b;
  const DenseVector y_summed = lu12.solve(sum_b1);
  const double base = norm(rep.y_fixed_point);
  rep.sum_reading_ratio = base > 1e-30 ? norm(y_summed) / base : 1.0;
  return rep;
}

}  // namespace dtsa
