#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dtsa {

// Dense row-major matrix/vector types. Everything in this library runs on
// small problems (communication matrices for a few dozen nodes, d x d system
// blocks), so the implementations favor clarity over blocking tricks.

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

struct DenseVector {
  std::vector<double> e;

  DenseVector() = default;
  explicit DenseVector(std::size_t dim, double fill = 0.0) : e(dim, fill) {}
  DenseVector(std::initializer_list<double> xs) : e(xs) { check_finite(); }

  static DenseVector from(std::vector<double> xs) {
    DenseVector v;
    v.e = std::move(xs);
    v.check_finite();
    return v;
  }

  std::size_t size() const { return e.size(); }
  double& operator[](std::size_t i) { return e[i]; }
  double operator[](std::size_t i) const { return e[i]; }

  void check_finite() const {
    for (double x : e) require(std::isfinite(x), "DenseVector: non-finite entry");
  }
};

inline double dot(const DenseVector& a, const DenseVector& b) {
  require(a.size() == b.size(), "dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const DenseVector& v) { return std::sqrt(dot(v, v)); }

inline DenseVector operator+(const DenseVector& a, const DenseVector& b) {
  require(a.size() == b.size(), "vector +: size mismatch");
  DenseVector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

inline DenseVector operator-(const DenseVector& a, const DenseVector& b) {
  require(a.size() == b.size(), "vector -: size mismatch");
  DenseVector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline DenseVector operator*(double s, const DenseVector& v) {
  DenseVector r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) r[i] = s * v[i];
  return r;
}

inline DenseVector& operator+=(DenseVector& a, const DenseVector& b) {
  require(a.size() == b.size(), "vector +=: size mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

struct DenseMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;  // row-major, rows * cols entries

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  static DenseMatrix from(std::size_t r, std::size_t c, std::vector<double> entries) {
    require(entries.size() == r * c, "DenseMatrix: entry count does not match shape");
    DenseMatrix m;
    m.rows = r;
    m.cols = c;
    m.a = std::move(entries);
    m.check_finite();
    return m;
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static DenseMatrix constant(std::size_t r, std::size_t c, double v) {
    DenseMatrix m(r, c);
    std::fill(m.a.begin(), m.a.end(), v);
    return m;
  }

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  bool square() const { return rows == cols; }

  DenseVector row(std::size_t i) const {
    DenseVector r(cols);
    for (std::size_t j = 0; j < cols; ++j) r[j] = (*this)(i, j);
    return r;
  }

  void set_row(std::size_t i, const DenseVector& v) {
    require(v.size() == cols, "set_row: size mismatch");
    for (std::size_t j = 0; j < cols; ++j) (*this)(i, j) = v[j];
  }

  void check_finite() const {
    for (double x : a) require(std::isfinite(x), "DenseMatrix: non-finite entry");
  }
};

inline DenseMatrix transpose(const DenseMatrix& m) {
  DenseMatrix t(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
  return t;
}

inline DenseMatrix operator*(const DenseMatrix& x, const DenseMatrix& y) {
  require(x.cols == y.rows, "matrix *: inner dimension mismatch");
  DenseMatrix r(x.rows, y.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t k = 0; k < x.cols; ++k) {
      const double xv = x(i, k);
      if (xv == 0.0) continue;
      for (std::size_t j = 0; j < y.cols; ++j) r(i, j) += xv * y(k, j);
    }
  return r;
}

inline DenseVector operator*(const DenseMatrix& m, const DenseVector& v) {
  require(m.cols == v.size(), "matvec: dimension mismatch");
  DenseVector r(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) s += m(i, j) * v[j];
    r[i] = s;
  }
  return r;
}

// m^T v without forming the transpose
inline DenseVector tmatvec(const DenseMatrix& m, const DenseVector& v) {
  require(m.rows == v.size(), "tmatvec: dimension mismatch");
  DenseVector r(m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double vi = v[i];
    for (std::size_t j = 0; j < m.cols; ++j) r[j] += m(i, j) * vi;
  }
  return r;
}

inline DenseMatrix operator+(const DenseMatrix& x, const DenseMatrix& y) {
  require(x.rows == y.rows && x.cols == y.cols, "matrix +: shape mismatch");
  DenseMatrix r(x.rows, x.cols);
  for (std::size_t i = 0; i < r.a.size(); ++i) r.a[i] = x.a[i] + y.a[i];
  return r;
}

inline DenseMatrix operator-(const DenseMatrix& x, const DenseMatrix& y) {
  require(x.rows == y.rows && x.cols == y.cols, "matrix -: shape mismatch");
  DenseMatrix r(x.rows, x.cols);
  for (std::size_t i = 0; i < r.a.size(); ++i) r.a[i] = x.a[i] - y.a[i];
  return r;
}

inline DenseMatrix operator*(double s, const DenseMatrix& m) {
  DenseMatrix r(m.rows, m.cols);
  for (std::size_t i = 0; i < r.a.size(); ++i) r.a[i] = s * m.a[i];
  return r;
}

inline double frobenius_norm(const DenseMatrix& m) {
  double s = 0.0;
  for (double x : m.a) s += x * x;
  return std::sqrt(s);
}

inline double max_abs(const DenseMatrix& m) {
  double s = 0.0;
  for (double x : m.a) s = std::max(s, std::abs(x));
  return s;
}

// Column means of an N x d iterate matrix: the network average of the rows.
inline DenseVector row_mean(const DenseMatrix& m) {
  DenseVector r(m.cols);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) r[j] += m(i, j);
  const double inv = m.rows > 0 ? 1.0 / static_cast<double>(m.rows) : 0.0;
  for (std::size_t j = 0; j < m.cols; ++j) r[j] *= inv;
  return r;
}

// X - 1 xbar^T: each row recentered around the network average.
inline DenseMatrix center_rows(const DenseMatrix& m) {
  const DenseVector mean = row_mean(m);
  DenseMatrix r(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) r(i, j) = m(i, j) - mean[j];
  return r;
}

struct SingularMatrixError : std::runtime_error {
  std::size_t pivot_index;
  double pivot_magnitude;
  SingularMatrixError(std::size_t idx, double mag)
      : std::runtime_error("singular matrix: pivot " + std::to_string(idx) +
                           " has magnitude " + std::to_string(mag)),
        pivot_index(idx),
        pivot_magnitude(mag) {}
};

// LU factorization with partial pivoting. A pivot counts as singular when its
// magnitude drops below 1e-12 times the largest entry of the input.
class LuDecomposition {
 public:
  explicit LuDecomposition(DenseMatrix m) : lu_(std::move(m)) {
    require(lu_.square(), "LuDecomposition: matrix must be square");
    const std::size_t n = lu_.rows;
    perm_.resize(n);
    for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
    const double threshold = 1e-12 * max_abs(lu_);

    for (std::size_t k = 0; k < n; ++k) {
      std::size_t p = k;
      for (std::size_t i = k + 1; i < n; ++i)
        if (std::abs(lu_(i, k)) > std::abs(lu_(p, k))) p = i;
      if (p != k) {
        for (std::size_t j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(p, j));
        std::swap(perm_[k], perm_[p]);
      }
      const double pivot = lu_(k, k);
      if (std::abs(pivot) <= threshold) throw SingularMatrixError(k, std::abs(pivot));
      for (std::size_t i = k + 1; i < n; ++i) {
        const double f = lu_(i, k) / pivot;
        lu_(i, k) = f;
        for (std::size_t j = k + 1; j < n; ++j) lu_(i, j) -= f * lu_(k, j);
      }
    }
  }

  DenseVector solve(const DenseVector& b) const {
    const std::size_t n = lu_.rows;
    require(b.size() == n, "LuDecomposition::solve: dimension mismatch");
    DenseVector x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[perm_[i]];
    for (std::size_t i = 1; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) x[i] -= lu_(i, j) * x[j];
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t j = i + 1; j < n; ++j) x[i] -= lu_(i, j) * x[j];
      x[i] /= lu_(i, i);
    }
    return x;
  }

  DenseMatrix solve(const DenseMatrix& b) const {
    require(b.rows == lu_.rows, "LuDecomposition::solve: dimension mismatch");
    DenseMatrix x(b.rows, b.cols);
    DenseVector col(b.rows);
    for (std::size_t j = 0; j < b.cols; ++j) {
      for (std::size_t i = 0; i < b.rows; ++i) col[i] = b(i, j);
      DenseVector s = solve(col);
      for (std::size_t i = 0; i < b.rows; ++i) x(i, j) = s[i];
    }
    return x;
  }

 private:
  DenseMatrix lu_;
  std::vector<std::size_t> perm_;
};

inline DenseVector solve_linear(const DenseMatrix& a, const DenseVector& b) {
  require(a.square(), "solve_linear: matrix must be square");
  require(a.rows == b.size(), "solve_linear: dimension mismatch");
  return LuDecomposition(a).solve(b);
}

inline DenseMatrix invert(const DenseMatrix& a) {
  require(a.square(), "invert: matrix must be square");
  return LuDecomposition(a).solve(DenseMatrix::identity(a.rows));
}

}  // namespace dtsa
