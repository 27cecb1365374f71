#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dtsa/matrix.hpp"
#include "dtsa/network.hpp"
#include "dtsa/noise.hpp"
#include "dtsa/problem.hpp"
#include "dtsa/rng.hpp"

namespace dtsa {

// Step sizes alpha_k = alpha0 / (k+1)^{2/3} (fast iterate) and
// beta_k = beta0 / (k+1) (slow iterate). With beta0 <= alpha0 the coupling
// ratio gamma_k = beta_k / alpha_k stays in (0, 1] and is nonincreasing.
struct StepSchedule {
  double alpha0 = 0.5;
  double beta0 = 0.1;

  double alpha(std::int64_t k) const {
    return alpha0 / std::pow(static_cast<double>(k) + 1.0, 2.0 / 3.0);
  }
  double beta(std::int64_t k) const { return beta0 / (static_cast<double>(k) + 1.0); }
  double gamma(std::int64_t k) const { return beta(k) / alpha(k); }
};

inline std::pair<double, double> step_sizes(const StepSchedule& s, std::int64_t k) {
  require(k >= 0, "step_sizes: iteration index must be nonnegative");
  return {s.alpha(k), s.beta(k)};
}

// Per-node iterates stacked as rows: X and Y are N x d.
struct IterateState {
  std::int64_t k = 0;
  DenseMatrix X, Y;
};

inline IterateState zero_state(std::size_t n_nodes, std::size_t d) {
  IterateState st;
  st.X = DenseMatrix(n_nodes, d);
  st.Y = DenseMatrix(n_nodes, d);
  return st;
}

namespace detail {

inline void check_step_dims(const IterateState& st, const BlockSystem& sys,
                            const WeightMatrix& w, const WeightMatrix& v) {
  require(st.X.rows == sys.N && st.X.cols == sys.d, "step: X shape mismatch");
  require(st.Y.rows == sys.N && st.Y.cols == sys.d, "step: Y shape mismatch");
  require(w.m.rows == sys.N && v.m.rows == sys.N, "step: mixing matrix size mismatch");
}

}  // namespace detail

// One synchronous update, node by node:
//   x_i <- sum_j w_ij x_j - alpha_k (A11 x_i + A12 y_i - b1_i + xi_i)
//   y_i <- sum_j v_ij y_j - beta_k  (A21 x_i + A22 y_i - b2_i + psi_i)
// Heterogeneous systems use their per-node blocks.
inline IterateState step(const IterateState& st, const BlockSystem& sys,
                         const WeightMatrix& w, const WeightMatrix& v,
                         const StepSchedule& sched, const std::vector<NoiseSample>& noise) {
  detail::check_step_dims(st, sys, w, v);
  require(noise.size() == sys.N, "step: need one noise pair per node");
  const auto [alpha, beta] = step_sizes(sched, st.k);
  const std::size_t n = sys.N, d = sys.d;

  IterateState out;
  out.k = st.k + 1;
  out.X = DenseMatrix(n, d);
  out.Y = DenseMatrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const DenseMatrix& a11 = sys.block11(i);
    const DenseMatrix& a12 = sys.block12(i);
    const DenseMatrix& a21 = sys.block21(i);
    const DenseMatrix& a22 = sys.block22(i);
    for (std::size_t c = 0; c < d; ++c) {
      double mix = 0.0;
      for (std::size_t j = 0; j < n; ++j) mix += w.m(i, j) * st.X(j, c);
      double drift = 0.0;
      for (std::size_t j = 0; j < d; ++j) drift += a11(c, j) * st.X(i, j);
      for (std::size_t j = 0; j < d; ++j) drift += a12(c, j) * st.Y(i, j);
      drift -= sys.b1[i][c];
      drift += noise[i].xi[c];
      out.X(i, c) = mix - alpha * drift;
    }
    for (std::size_t c = 0; c < d; ++c) {
      double mix = 0.0;
      for (std::size_t j = 0; j < n; ++j) mix += v.m(i, j) * st.Y(j, c);
      double drift = 0.0;
      for (std::size_t j = 0; j < d; ++j) drift += a21(c, j) * st.X(i, j);
      for (std::size_t j = 0; j < d; ++j) drift += a22(c, j) * st.Y(i, j);
      drift -= sys.b2[i][c];
      drift += noise[i].psi[c];
      out.Y(i, c) = mix - beta * drift;
    }
  }
  return out;
}

// Matrix form of the same update:
//   X <- W X - alpha_k (X A11^T + Y A12^T - B1 + Xi)
//   Y <- V Y - beta_k  (X A21^T + Y A22^T - B2 + Psi)
inline IterateState step_matrix(const IterateState& st, const BlockSystem& sys,
                                const WeightMatrix& w, const WeightMatrix& v,
                                const StepSchedule& sched, const DenseMatrix& xi,
                                const DenseMatrix& psi) {
  detail::check_step_dims(st, sys, w, v);
  require(!sys.heterogeneous, "step_matrix: heterogeneous systems need the per-node form");
  require(xi.rows == sys.N && xi.cols == sys.d, "step_matrix: Xi shape mismatch");
  require(psi.rows == sys.N && psi.cols == sys.d, "step_matrix: Psi shape mismatch");
  const auto [alpha, beta] = step_sizes(sched, st.k);
  const std::size_t n = sys.N, d = sys.d;

  IterateState out;
  out.k = st.k + 1;
  out.X = DenseMatrix(n, d);
  out.Y = DenseMatrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      double mix = 0.0;
      for (std::size_t j = 0; j < n; ++j) mix += w.m(i, j) * st.X(j, c);
      double drift = 0.0;
      for (std::size_t j = 0; j < d; ++j) drift += sys.A11(c, j) * st.X(i, j);
      for (std::size_t j = 0; j < d; ++j) drift += sys.A12(c, j) * st.Y(i, j);
      drift -= sys.b1[i][c];
      drift += xi(i, c);
      out.X(i, c) = mix - alpha * drift;
    }
    for (std::size_t c = 0; c < d; ++c) {
      double mix = 0.0;
      for (std::size_t j = 0; j < n; ++j) mix += v.m(i, j) * st.Y(j, c);
      double drift = 0.0;
      for (std::size_t j = 0; j < d; ++j) drift += sys.A21(c, j) * st.X(i, j);
      for (std::size_t j = 0; j < d; ++j) drift += sys.A22(c, j) * st.Y(i, j);
      drift -= sys.b2[i][c];
      drift += psi(i, c);
      out.Y(i, c) = mix - beta * drift;
    }
  }
  return out;
}

// The centralized recursion obeyed by the network averages. Because the
// mixing matrices are doubly stochastic, the node-mean of step() equals this
// update applied to node-means with node-mean noise, up to rounding.
inline std::pair<DenseVector, DenseVector> averaged_step(
    const DenseVector& xbar, const DenseVector& ybar, const BlockSystem& sys,
    const StepSchedule& sched, std::int64_t k, const DenseVector& xi_bar,
    const DenseVector& psi_bar) {
  require(!sys.heterogeneous, "averaged_step: defined for shared blocks");
  const auto [alpha, beta] = step_sizes(sched, k);
  const std::size_t d = sys.d;
  const DenseVector mb1 = sys.mean_b1();
  const DenseVector mb2 = sys.mean_b2();

  DenseVector xn(d), yn(d);
  for (std::size_t c = 0; c < d; ++c) {
    double drift = 0.0;
    for (std::size_t j = 0; j < d; ++j) drift += sys.A11(c, j) * xbar[j];
    for (std::size_t j = 0; j < d; ++j) drift += sys.A12(c, j) * ybar[j];
    drift -= mb1[c];
    drift += xi_bar[c];
    xn[c] = xbar[c] - alpha * drift;
  }
  for (std::size_t c = 0; c < d; ++c) {
    double drift = 0.0;
    for (std::size_t j = 0; j < d; ++j) drift += sys.A21(c, j) * xbar[j];
    for (std::size_t j = 0; j < d; ++j) drift += sys.A22(c, j) * ybar[j];
    drift -= mb2[c];
    drift += psi_bar[c];
    yn[c] = ybar[c] - beta * drift;
  }
  return {xn, yn};
}

// Heterogeneous update followed by a Euclidean projection of every row onto
// the origin-centered ball of the given radius. Pass +infinity to disable
// the projection; the set must contain the solution for convergence.
inline IterateState projected_step(const IterateState& st, const BlockSystem& sys,
                                   const WeightMatrix& w, const WeightMatrix& v,
                                   const StepSchedule& sched,
                                   const std::vector<NoiseSample>& noise, double radius) {
  require(radius > 0.0, "projected_step: radius must be positive");
  IterateState out = step(st, sys, w, v, sched, noise);
  if (!std::isfinite(radius)) return out;
  const auto project_rows = [&](DenseMatrix& m) {
    for (std::size_t i = 0; i < m.rows; ++i) {
      double sq = 0.0;
      for (std::size_t c = 0; c < m.cols; ++c) sq += m(i, c) * m(i, c);
      const double nrm = std::sqrt(sq);
      if (nrm > radius) {
        const double f = radius / nrm;
        for (std::size_t c = 0; c < m.cols; ++c) m(i, c) *= f;
      }
    }
  };
  project_rows(out.X);
  project_rows(out.Y);
  return out;
}

// ---------------------------------------------------------------------------
// Noise generators for run(). Each fills N x d matrices Xi and Psi for one
// iteration; substreams are keyed by (seed, iteration, node) so trajectories
// are reproducible independent of evaluation order.

struct ZeroNoise {
  void operator()(std::uint64_t, std::int64_t, const IterateState&, DenseMatrix& xi,
                  DenseMatrix& psi) const {
    std::fill(xi.a.begin(), xi.a.end(), 0.0);
    std::fill(psi.a.begin(), psi.a.end(), 0.0);
  }
};

struct ModelNoise {
  NoiseModel model;

  void operator()(std::uint64_t seed, std::int64_t k, const IterateState&, DenseMatrix& xi,
                  DenseMatrix& psi) const {
    for (std::size_t i = 0; i < xi.rows; ++i) {
      SplitMix64 stream(substream_seed(seed, static_cast<std::uint64_t>(k), i));
      const NoiseSample s = draw_noise(model, stream);
      for (std::size_t c = 0; c < xi.cols; ++c) {
        xi(i, c) = s.xi[c];
        psi(i, c) = s.psi[c];
      }
    }
  }
};

// Sampled policy-evaluation mode: one (state, next-state) pair per iteration
// drawn i.i.d. from the stationary distribution and shared by all nodes, the
// closest realizable match to the independence assumption. The injected noise
// is the gap between the sampled one-step operator and its expectation, so it
// depends on the current iterates.
struct GtdNoise {
  GtdModel model;

  void operator()(std::uint64_t seed, std::int64_t k, const IterateState& st,
                  DenseMatrix& xi, DenseMatrix& psi) const {
    const std::size_t n_states = model.mdp.transitions.rows;
    const std::size_t d = model.features.cols;
    SplitMix64 stream(substream_seed(seed, static_cast<std::uint64_t>(k), 0x67746453ULL));
    const std::size_t s =
        sample_discrete(stream, [&](std::size_t i) { return model.stationary[i]; }, n_states);
    const std::size_t s2 = sample_discrete(
        stream, [&](std::size_t i) { return model.mdp.transitions(s, i); }, n_states);

    const DenseVector phi = model.features.row(s);
    const DenseVector phi2 = model.features.row(s2);
    DenseVector td_dir(d);  // phi - discount * phi'
    for (std::size_t c = 0; c < d; ++c) td_dir[c] = phi[c] - model.discount * phi2[c];

    for (std::size_t i = 0; i < st.X.rows; ++i) {
      double phi_x = 0.0, td_y = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        phi_x += phi[c] * st.X(i, c);
        td_y += td_dir[c] * st.Y(i, c);
      }
      const double reward = model.mdp.rewards[i][s];
      for (std::size_t c = 0; c < d; ++c) {
        double a11x = 0.0, a12y = 0.0, a21x = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          a11x += model.a11(c, j) * st.X(i, j);
          a12y += model.a12(c, j) * st.Y(i, j);
          a21x += model.a21(c, j) * st.X(i, j);
        }
        const double sampled_x = phi[c] * phi_x + phi[c] * td_y - reward * phi[c];
        const double mean_x = a11x + a12y - model.b1_raw[i][c];
        xi(i, c) = model.scale * (sampled_x - mean_x);
        const double sampled_y = -td_dir[c] * phi_x;
        psi(i, c) = model.scale * (sampled_y - a21x);
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Trajectory recording.

struct TrajectoryRecord {
  std::int64_t k = 0;
  double alpha = 0.0, beta = 0.0;
  double consensus_residual = 0.0;  // ||Yhat||_F + gamma_k ||Xhat||_F
  double consensus_sq = 0.0;        // ||Yhat||_F^2 + gamma_k ||Xhat||_F^2
  double mse_weighted = 0.0;        // (1/N) sum_i (||y_i - y*||^2 + gamma_k ||x_i - x*||^2)
  double xbar_err = 0.0;            // ||xbar - x*||^2
  double ybar_err = 0.0;            // ||ybar - y*||^2
  double xhat_norm = 0.0, yhat_norm = 0.0;
  DenseVector xbar, ybar;
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;
};

struct DivergenceError : std::runtime_error {
  std::int64_t k;
  explicit DivergenceError(std::int64_t at)
      : std::runtime_error("iterates diverged at k = " + std::to_string(at)), k(at) {}
};

struct RunOptions {
  std::int64_t iterations = 0;  // K
  std::int64_t record_every = 1;
  std::uint64_t seed = 0;
  double projection_radius = std::numeric_limits<double>::infinity();
  double divergence_norm = 1e12;
};

namespace detail {

inline TrajectoryRecord make_record(const IterateState& st, const StepSchedule& sched,
                                    const Solution* sol) {
  TrajectoryRecord rec;
  rec.k = st.k;
  rec.alpha = sched.alpha(st.k);
  rec.beta = sched.beta(st.k);
  const double g = sched.gamma(st.k);

  rec.xbar = row_mean(st.X);
  rec.ybar = row_mean(st.Y);
  double xhat_sq = 0.0, yhat_sq = 0.0;
  for (std::size_t i = 0; i < st.X.rows; ++i)
    for (std::size_t c = 0; c < st.X.cols; ++c) {
      const double dx = st.X(i, c) - rec.xbar[c];
      const double dy = st.Y(i, c) - rec.ybar[c];
      xhat_sq += dx * dx;
      yhat_sq += dy * dy;
    }
  rec.xhat_norm = std::sqrt(xhat_sq);
  rec.yhat_norm = std::sqrt(yhat_sq);
  rec.consensus_residual = rec.yhat_norm + g * rec.xhat_norm;
  rec.consensus_sq = yhat_sq + g * xhat_sq;

  if (sol != nullptr) {
    double mse = 0.0;
    for (std::size_t i = 0; i < st.X.rows; ++i) {
      double ex = 0.0, ey = 0.0;
      for (std::size_t c = 0; c < st.X.cols; ++c) {
        const double dx = st.X(i, c) - sol->x_star[c];
        const double dy = st.Y(i, c) - sol->y_star[c];
        ex += dx * dx;
        ey += dy * dy;
      }
      mse += ey + g * ex;
    }
    rec.mse_weighted = mse / static_cast<double>(st.X.rows);
    double bx = 0.0, by = 0.0;
    for (std::size_t c = 0; c < st.X.cols; ++c) {
      const double dx = rec.xbar[c] - sol->x_star[c];
      const double dy = rec.ybar[c] - sol->y_star[c];
      bx += dx * dx;
      by += dy * dy;
    }
    rec.xbar_err = bx;
    rec.ybar_err = by;
  } else {
    rec.mse_weighted = rec.xbar_err = rec.ybar_err = std::numeric_limits<double>::quiet_NaN();
  }
  return rec;
}

}  // namespace detail

// Runs the iteration from the all-zeros start, drawing fresh noise every
// step, and records metrics at the configured cadence plus k = 0 and k = K.
// Deterministic given the seed. Throws DivergenceError when iterates blow up.
template <class NoiseGen>
Trajectory run(const BlockSystem& sys, const WeightMatrix& w, const WeightMatrix& v,
               const StepSchedule& sched, NoiseGen&& noise_gen, const RunOptions& opt,
               const Solution* sol = nullptr) {
  require(opt.iterations >= 0, "run: iteration count must be nonnegative");
  require(opt.record_every >= 1, "run: record_every must be at least 1");

  IterateState st = zero_state(sys.N, sys.d);
  Trajectory traj;
  traj.records.push_back(detail::make_record(st, sched, sol));

  DenseMatrix xi(sys.N, sys.d), psi(sys.N, sys.d);
  std::vector<NoiseSample> samples;
  const bool per_node = sys.heterogeneous || std::isfinite(opt.projection_radius);
  if (per_node) {
    samples.resize(sys.N);
    for (auto& s : samples) {
      s.xi = DenseVector(sys.d);
      s.psi = DenseVector(sys.d);
    }
  }

  for (std::int64_t k = 0; k < opt.iterations; ++k) {
    noise_gen(opt.seed, k, st, xi, psi);
    if (per_node) {
      for (std::size_t i = 0; i < sys.N; ++i)
        for (std::size_t c = 0; c < sys.d; ++c) {
          samples[i].xi[c] = xi(i, c);
          samples[i].psi[c] = psi(i, c);
        }
      st = projected_step(st, sys, w, v, sched, samples, opt.projection_radius);
    } else {
      st = step_matrix(st, sys, w, v, sched, xi, psi);
    }

    double worst = 0.0;
    for (double x : st.X.a) worst = std::max(worst, std::abs(x));
    for (double x : st.Y.a) worst = std::max(worst, std::abs(x));
    if (!std::isfinite(worst) || worst > opt.divergence_norm) throw DivergenceError(st.k);

    if (st.k % opt.record_every == 0 || st.k == opt.iterations)
      traj.records.push_back(detail::make_record(st, sched, sol));
  }
  return traj;
}

}  // namespace dtsa
