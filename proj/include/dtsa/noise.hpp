#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dtsa/matrix.hpp"
#include "dtsa/rng.hpp"
#include "dtsa/spectral.hpp"

namespace dtsa {

// Observation-noise model: the stacked pair z = (xi; psi) in R^{2d} has
// exact covariance Gamma, exact zero mean, and an almost-sure norm bound C.
// Samples are Gamma^{1/2} u with u a vector of independent fair signs; that
// construction meets all three requirements at once, which a Gaussian
// (unbounded) or truncated Gaussian (biased covariance) would not.
struct NoiseModel {
  std::size_t d = 0;  // xi and psi are d-vectors; gamma is 2d x 2d
  DenseMatrix gamma;
  DenseMatrix sqrt_gamma;
  double bound = 0.0;  // C: ||(xi; psi)|| <= C surely
};

inline NoiseModel make_noise_model(const DenseMatrix& gamma) {
  require(gamma.square(), "make_noise_model: Gamma must be square");
  require(gamma.rows >= 2 && gamma.rows % 2 == 0,
          "make_noise_model: Gamma must be 2d x 2d");
  const std::size_t n = gamma.rows;
  const double scale = std::max(1.0, max_abs(gamma));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      require(std::abs(gamma(i, j) - gamma(j, i)) <= 1e-9 * scale,
              "make_noise_model: Gamma must be symmetric");

  SymmetricEigen se = symmetric_eigen(gamma);
  require(se.values.front() >= -1e-10, "make_noise_model: Gamma is not positive semidefinite");
  for (double& v : se.values)
    if (v < 0.0) v = 0.0;

  NoiseModel model;
  model.d = n / 2;
  model.gamma = gamma;
  model.sqrt_gamma = DenseMatrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        s += se.vectors(i, k) * std::sqrt(se.values[k]) * se.vectors(j, k);
      model.sqrt_gamma(i, j) = s;
    }
  // symmetrize away rounding
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = 0.5 * (model.sqrt_gamma(i, j) + model.sqrt_gamma(j, i));
      model.sqrt_gamma(i, j) = s;
      model.sqrt_gamma(j, i) = s;
    }
  model.bound = std::sqrt(se.values.back()) * std::sqrt(static_cast<double>(n)) *
                (1.0 + 1e-12);
  return model;
}

struct NoiseSample {
  DenseVector xi, psi;
};

inline NoiseSample draw_noise(const NoiseModel& model, SplitMix64& stream) {
  const std::size_t n = 2 * model.d;
  DenseVector u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = stream.rademacher();
  const DenseVector z = model.sqrt_gamma * u;
  NoiseSample s;
  s.xi = DenseVector(model.d);
  s.psi = DenseVector(model.d);
  for (std::size_t i = 0; i < model.d; ++i) {
    s.xi[i] = z[i];
    s.psi[i] = z[model.d + i];
  }
  return s;
}

// One independent substream per sample index, so batches are reproducible
// regardless of evaluation order.
inline std::vector<NoiseSample> sample_noise(const NoiseModel& model, std::uint64_t seed,
                                             std::size_t count) {
  std::vector<NoiseSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SplitMix64 stream(substream_seed(seed, i, 0x6e6f6973ULL));
    out.push_back(draw_noise(model, stream));
  }
  return out;
}

// Second-moment matrix of the stacked samples. The mean is deliberately not
// subtracted: zero mean is part of the model contract, and any bias shows up
// directly in this estimate.
inline DenseMatrix empirical_covariance(const std::vector<NoiseSample>& samples) {
  if (samples.empty())
    throw std::invalid_argument("empirical_covariance: need at least one sample");
  const std::size_t d = samples.front().xi.size();
  const std::size_t n = 2 * d;
  DenseMatrix cov(n, n);
  DenseVector z(n);
  for (const auto& s : samples) {
    require(s.xi.size() == d && s.psi.size() == d, "empirical_covariance: ragged samples");
    for (std::size_t i = 0; i < d; ++i) {
      z[i] = s.xi[i];
      z[d + i] = s.psi[i];
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) cov(i, j) += z[i] * z[j];
  }
  for (double& v : cov.a) v /= static_cast<double>(samples.size());
  return cov;
}

}  // namespace dtsa
