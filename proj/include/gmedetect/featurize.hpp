// featurize.hpp
// Deterministic conversion of states into classifier input sequences.
//
// Dense mode packs Re(rho) row-major (H^2 values) followed by Im(rho)
// row-major with the H diagonal entries removed (H(H-1) values), for a total
// of (2H-1)*H. GHZ-diagonal mode emits the 2^n GHZ-basis eigenvalues ordered
// (lambda_0+mu_0, lambda_0-mu_0, lambda_1+mu_1, ...).

#pragma once

#include <vector>

#include "gmedetect/statekit.hpp"

namespace gme {

struct FeatureTensor {
  std::vector<double> values;  // single channel
  Eigen::Index length() const { return static_cast<Eigen::Index>(values.size()); }
};

inline Eigen::Index dense_feature_length(int n) {
  const Eigen::Index h = Eigen::Index{1} << n;
  return (2 * h - 1) * h;
}

inline Eigen::Index ghz_feature_length(int n) { return Eigen::Index{1} << n; }

inline FeatureTensor featurize_dense(const DensityMatrix& rho) {
  const Eigen::Index h = rho.dim();
  const auto& m = rho.matrix();
  FeatureTensor t;
  t.values.reserve(static_cast<std::size_t>((2 * h - 1) * h));
  for (Eigen::Index i = 0; i < h; ++i)
    for (Eigen::Index j = 0; j < h; ++j) t.values.push_back(m(i, j).real());
  for (Eigen::Index i = 0; i < h; ++i)
    for (Eigen::Index j = 0; j < h; ++j)
      if (i != j) t.values.push_back(m(i, j).imag());
  return t;
}

// Inverse of featurize_dense (the packing is injective on valid states:
// the imaginary diagonal is identically zero).
inline DensityMatrix dense_from_features(const FeatureTensor& t, int n) {
  const Eigen::Index h = Eigen::Index{1} << n;
  if (t.length() != dense_feature_length(n))
    throw DataError("dense_from_features: length mismatch");
  Eigen::MatrixXcd m(h, h);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < h; ++i)
    for (Eigen::Index j = 0; j < h; ++j) m(i, j) = t.values[k++];
  for (Eigen::Index i = 0; i < h; ++i)
    for (Eigen::Index j = 0; j < h; ++j)
      if (i != j) m(i, j) += Complex(0.0, t.values[k++]);
  return DensityMatrix(std::move(m));
}

inline FeatureTensor featurize_ghz_diagonal(const GhzDiagonalSpec& spec) {
  spec.check();
  FeatureTensor t;
  t.values.reserve(2 * spec.lambdas.size());
  for (std::size_t i = 0; i < spec.lambdas.size(); ++i) {
    const double mu = std::abs(spec.mus[i]);
    const double signed_mu = spec.complex_mode() ? mu : spec.mus[i].real();
    t.values.push_back(spec.lambdas[i] + signed_mu);
    t.values.push_back(spec.lambdas[i] - signed_mu);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Per-position standardization. Statistics must come from the training split
// only; the scale is floored so constant positions normalize to zero.

struct NormStats {
  std::vector<double> mean;
  std::vector<double> scale;
};

inline constexpr double kScaleFloor = 1e-12;

template <typename FeatureRange>
NormStats compute_norm_stats(const FeatureRange& features) {
  NormStats s;
  std::size_t count = 0;
  for (const auto& f : features) {
    if (s.mean.empty()) {
      s.mean.assign(f.size(), 0.0);
      s.scale.assign(f.size(), 0.0);
    }
    if (f.size() != s.mean.size())
      throw DataError("compute_norm_stats: inconsistent feature lengths");
    for (std::size_t j = 0; j < f.size(); ++j) s.mean[j] += f[j];
    ++count;
  }
  if (count == 0) throw DataError("compute_norm_stats: no features");
  for (auto& m : s.mean) m /= double(count);
  for (const auto& f : features)
    for (std::size_t j = 0; j < f.size(); ++j) {
      const double d = f[j] - s.mean[j];
      s.scale[j] += d * d;
    }
  for (auto& v : s.scale) v = std::max(std::sqrt(v / double(count)), kScaleFloor);
  return s;
}

inline FeatureTensor normalize_features(const FeatureTensor& t,
                                        const NormStats& stats) {
  if (t.values.size() != stats.mean.size() ||
      t.values.size() != stats.scale.size())
    throw DataError("normalize_features: stats length mismatch");
  FeatureTensor out;
  out.values.resize(t.values.size());
  for (std::size_t j = 0; j < t.values.size(); ++j)
    out.values[j] = (t.values[j] - stats.mean[j]) / stats.scale[j];
  return out;
}

}  // namespace gme
