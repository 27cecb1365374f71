#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dtsa/matrix.hpp"
#include "dtsa/rng.hpp"

namespace dtsa {

// Second-largest singular value of a (doubly stochastic) mixing matrix.
//
// Power iteration on M^T M with the known top singular pair deflated: for a
// doubly stochastic matrix the leading right singular vector is 1/sqrt(n), so
// projecting iterates onto the complement of span{1} removes it exactly. Two
// deterministic pseudo-random starts guard against an unlucky initial vector.
inline double second_singular_value(const DenseMatrix& m, double tol = 1e-12) {
  require(m.square(), "second_singular_value: matrix must be square");
  const std::size_t n = m.rows;
  if (n <= 1) return 0.0;

  const auto project_out_ones = [n](DenseVector& v) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += v[i];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) v[i] -= mean;
  };

  constexpr int kMaxIters = 200000;
  const std::uint64_t starts[2] = {0x9e3779b97f4a7c15ULL, 0x5851f42d4c957f2dULL};
  double best = 0.0;

  for (std::uint64_t start_seed : starts) {
    SplitMix64 g(start_seed);
    DenseVector v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = g.uniform01() - 0.5;
    project_out_ones(v);
    double nv = norm(v);
    if (nv < 1e-300) continue;
    for (std::size_t i = 0; i < n; ++i) v[i] /= nv;

    double lambda = 0.0;
    bool converged = false;
    for (int it = 0; it < kMaxIters; ++it) {
      DenseVector w = tmatvec(m, m * v);
      project_out_ones(w);
      lambda = dot(v, w);
      double resid = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = w[i] - lambda * v[i];
        resid += r * r;
      }
      resid = std::sqrt(resid);
      const double wn = norm(w);
      if (wn < 1e-150) {  // complement annihilated: all remaining singular values ~ 0
        lambda = 0.0;
        converged = true;
        break;
      }
      for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / wn;
      if (resid <= tol * std::max(1.0, std::abs(lambda))) {
        converged = true;
        break;
      }
    }
    if (!converged)
      throw std::runtime_error("second_singular_value: power iteration did not converge");
    best = std::max(best, lambda);
  }
  return std::sqrt(std::max(0.0, best));
}

namespace detail {

// Householder reduction to upper Hessenberg form, in place.
inline void hessenberg_reduce(DenseMatrix& h) {
  const std::size_t n = h.rows;
  std::vector<double> v(n, 0.0);
  for (std::size_t k = 0; k + 2 < n; ++k) {
    double xnorm = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) xnorm += h(i, k) * h(i, k);
    xnorm = std::sqrt(xnorm);
    if (xnorm == 0.0) continue;
    const double alpha = h(k + 1, k) >= 0.0 ? -xnorm : xnorm;
    std::fill(v.begin(), v.end(), 0.0);
    v[k + 1] = h(k + 1, k) - alpha;
    for (std::size_t i = k + 2; i < n; ++i) v[i] = h(i, k);
    double vn = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) vn += v[i] * v[i];
    vn = std::sqrt(vn);
    if (vn < 1e-300) continue;
    for (std::size_t i = k + 1; i < n; ++i) v[i] /= vn;
    // H <- (I - 2 v v^T) H
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k + 1; i < n; ++i) s += v[i] * h(i, j);
      s *= 2.0;
      for (std::size_t i = k + 1; i < n; ++i) h(i, j) -= s * v[i];
    }
    // H <- H (I - 2 v v^T)
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = k + 1; j < n; ++j) s += h(i, j) * v[j];
      s *= 2.0;
      for (std::size_t j = k + 1; j < n; ++j) h(i, j) -= s * v[j];
    }
    for (std::size_t i = k + 2; i < n; ++i) h(i, k) = 0.0;
  }
}

}  // namespace detail

// Eigenvalues of a general real square matrix: Householder reduction to
// Hessenberg form followed by a shifted QR iteration in complex arithmetic
// (Givens based, Wilkinson shift, deflation from the bottom). Intended for
// the small matrices this library deals with (dimension <= a few dozen).
inline std::vector<std::complex<double>> eigenvalues(const DenseMatrix& m) {
  require(m.square(), "eigenvalues: matrix must be square");
  const std::size_t n = m.rows;
  using cd = std::complex<double>;
  std::vector<cd> eig(n);
  if (n == 0) return eig;
  if (n == 1) {
    eig[0] = m(0, 0);
    return eig;
  }

  DenseMatrix hr = m;
  detail::hessenberg_reduce(hr);

  std::vector<cd> h(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) h[i * n + j] = hr(i, j);
  auto H = [&](std::size_t i, std::size_t j) -> cd& { return h[i * n + j]; };

  double anorm = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) anorm += std::abs(hr(i, j));
  const double eps = std::numeric_limits<double>::epsilon();

  std::vector<cd> gc(n), gs(n);
  std::size_t hi = n - 1;
  int its = 0;
  while (true) {
    // deflate converged 1x1 blocks at the bottom
    std::size_t l = hi;
    while (l > 0) {
      double s = std::abs(H(l - 1, l - 1)) + std::abs(H(l, l));
      if (s == 0.0) s = anorm;
      if (std::abs(H(l, l - 1)) <= eps * s) {
        H(l, l - 1) = 0.0;
        break;
      }
      --l;
    }
    if (l == hi) {
      eig[hi] = H(hi, hi);
      if (hi == 0) break;
      --hi;
      its = 0;
      continue;
    }
    if (its >= 60)
      throw std::runtime_error("eigenvalues: QR iteration did not converge");

    // Wilkinson shift from the trailing 2x2 of the active block
    const cd a = H(hi - 1, hi - 1), b = H(hi - 1, hi);
    const cd c = H(hi, hi - 1), d = H(hi, hi);
    const cd tr = a + d;
    const cd disc = std::sqrt(tr * tr - 4.0 * (a * d - b * c));
    const cd mu1 = 0.5 * (tr + disc), mu2 = 0.5 * (tr - disc);
    cd mu = std::abs(mu1 - d) < std::abs(mu2 - d) ? mu1 : mu2;
    if (its > 0 && its % 12 == 0)
      mu = d + cd(std::abs(H(hi, hi - 1)), 0.0);  // exceptional shift breaks cycles
    ++its;

    for (std::size_t i = l; i <= hi; ++i) H(i, i) -= mu;
    // QR by complex Givens rotations down the subdiagonal, then RQ
    for (std::size_t k = l; k < hi; ++k) {
      const cd f = H(k, k), g2 = H(k + 1, k);
      const double r = std::sqrt(std::norm(f) + std::norm(g2));
      if (r < 1e-300) {
        gc[k] = 1.0;
        gs[k] = 0.0;
        continue;
      }
      if (std::abs(f) < 1e-300) {
        gc[k] = 0.0;
        gs[k] = g2 / std::abs(g2);  // any unit phase works when f == 0
        gs[k] = std::conj(gs[k]);
      } else {
        gc[k] = std::abs(f) / r;
        gs[k] = (f / std::abs(f)) * std::conj(g2) / r;
      }
      for (std::size_t j = k; j <= hi; ++j) {
        const cd t1 = H(k, j), t2 = H(k + 1, j);
        H(k, j) = gc[k] * t1 + gs[k] * t2;
        H(k + 1, j) = -std::conj(gs[k]) * t1 + gc[k] * t2;
      }
    }
    for (std::size_t k = l; k < hi; ++k) {
      for (std::size_t i = l; i <= k + 1; ++i) {
        const cd t1 = H(i, k), t2 = H(i, k + 1);
        H(i, k) = gc[k] * t1 + std::conj(gs[k]) * t2;
        H(i, k + 1) = -gs[k] * t1 + gc[k] * t2;
      }
    }
    for (std::size_t i = l; i <= hi; ++i) H(i, i) += mu;
  }
  return eig;
}

inline double min_eigenvalue_real_part(const DenseMatrix& m) {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& e : eigenvalues(m)) lo = std::min(lo, e.real());
  return lo;
}

// True iff every eigenvalue of m has real part strictly greater than tol.
inline bool is_positive_stable(const DenseMatrix& m, double tol = 0.0) {
  require(m.square(), "is_positive_stable: matrix must be square");
  return min_eigenvalue_real_part(m) > tol;
}

struct SymmetricEigen {
  std::vector<double> values;  // ascending
  DenseMatrix vectors;         // column i pairs with values[i]
};

// Cyclic Jacobi for symmetric matrices; plenty for the 2d x 2d covariance
// blocks and SPD checks this library needs.
inline SymmetricEigen symmetric_eigen(const DenseMatrix& m) {
  require(m.square(), "symmetric_eigen: matrix must be square");
  const std::size_t n = m.rows;
  const double scale = std::max(1.0, max_abs(m));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      require(std::abs(m(i, j) - m(j, i)) <= 1e-9 * scale,
              "symmetric_eigen: matrix is not symmetric");

  DenseMatrix a = m;
  DenseMatrix v = DenseMatrix::identity(n);
  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(off) <= 1e-14 * scale * n) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cs = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * cs;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = cs * akp - sn * akq;
          a(k, q) = sn * akp + cs * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = cs * apk - sn * aqk;
          a(q, k) = sn * apk + cs * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = cs * vkp - sn * vkq;
          v(k, q) = sn * vkp + cs * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors = DenseMatrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i] = a(order[i], order[i]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, i) = v(k, order[i]);
  }
  return out;
}

// Checks the mixing-contraction inequality ||W Xhat||_F <= sigma ||Xhat||_F
// (plus 1e-9 slack) for a row-centered iterate matrix. The zero-column-sum
// precondition is what makes the contraction valid, so it is enforced.
inline bool spectral_norm_bound_check(const DenseMatrix& w, const DenseMatrix& xhat,
                                      double sigma) {
  require(w.square(), "spectral_norm_bound_check: W must be square");
  require(w.cols == xhat.rows, "spectral_norm_bound_check: shape mismatch");
  for (std::size_t j = 0; j < xhat.cols; ++j) {
    double colsum = 0.0;
    for (std::size_t i = 0; i < xhat.rows; ++i) colsum += xhat(i, j);
    require(std::abs(colsum) <= 1e-8,
            "spectral_norm_bound_check: column sums of Xhat must vanish");
  }
  return frobenius_norm(w * xhat) <= sigma * frobenius_norm(xhat) + 1e-9;
}

}  // namespace dtsa
