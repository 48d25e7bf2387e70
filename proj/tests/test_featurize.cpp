#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "gmedetect/featurize.hpp"

using namespace gme;
using Catch::Approx;

TEST_CASE("dense feature lengths follow (2H-1)*H") {
  REQUIRE(dense_feature_length(4) == 31 * 16);
  REQUIRE(dense_feature_length(2) == 7 * 4);
  auto rho = random_density_matrix(2, 3, 5);
  REQUIRE(featurize_dense(rho).length() == 28);
}

TEST_CASE("real-valued states have an all-zero imaginary segment") {
  GhzDiagonalSpec spec = random_ghz_diagonal(2, +1, 11);
  auto rho = to_density_matrix(spec);
  auto t = featurize_dense(rho);
  const Eigen::Index h = 4;
  for (Eigen::Index i = h * h; i < t.length(); ++i)
    REQUIRE(t.values[static_cast<std::size_t>(i)] == 0.0);
}

TEST_CASE("dense featurization is invertible on valid states") {
  auto rho = random_density_matrix(3, 5, 321);
  auto t = featurize_dense(rho);
  auto back = dense_from_features(t, 3);
  REQUIRE((back.matrix() - rho.matrix()).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("ghz features are the ordered eigenvalue pairs") {
  REQUIRE(ghz_feature_length(5) == 32);
  REQUIRE(ghz_feature_length(20) == 1048576);

  GhzDiagonalSpec spec;
  spec.n = 3;
  spec.lambdas.assign(4, 0.0);
  spec.mus.assign(4, 0.0);
  spec.lambdas[0] = 0.5;
  spec.mus[0] = 0.5;
  auto t = featurize_ghz_diagonal(spec);
  REQUIRE(t.length() == 8);
  REQUIRE(t.values[0] == 1.0);
  for (std::size_t i = 1; i < t.values.size(); ++i) REQUIRE(t.values[i] == 0.0);
}

TEST_CASE("ghz features sum to one and match the spectrum") {
  auto spec = random_ghz_diagonal(5, -1, 2024);
  auto t = featurize_ghz_diagonal(spec);
  double total = 0.0;
  for (double v : t.values) total += v;
  REQUIRE(total == Approx(1.0).margin(1e-10));

  auto rho = to_density_matrix(spec);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho.matrix(),
                                                     Eigen::EigenvaluesOnly);
  std::vector<double> eigs(es.eigenvalues().data(),
                           es.eigenvalues().data() + rho.dim());
  std::vector<double> feats = t.values;
  std::sort(eigs.begin(), eigs.end());
  std::sort(feats.begin(), feats.end());
  for (std::size_t i = 0; i < feats.size(); ++i)
    REQUIRE(feats[i] == Approx(eigs[i]).margin(1e-10));
}

TEST_CASE("normalization standardizes with training statistics") {
  std::vector<std::vector<double>> train = {
      {1.0, 5.0, 2.0}, {3.0, 5.0, 4.0}, {5.0, 5.0, 9.0}};
  auto stats = compute_norm_stats(train);

  // Constant position has floored scale and normalizes to zero.
  FeatureTensor t{{2.0, 5.0, 4.0}};
  auto norm = normalize_features(t, stats);
  REQUIRE(norm.values[1] == 0.0);

  // Training set itself is standardized to mean zero per position.
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0;
    for (const auto& f : train)
      mean += normalize_features(FeatureTensor{f}, stats).values[j];
    REQUIRE(std::abs(mean / 3.0) < 1e-9);
  }

  // Shifted test data gets different statistics than the training split.
  std::vector<std::vector<double>> test = {{11.0, 5.0, 12.0}, {13.0, 5.0, 14.0}};
  auto test_stats = compute_norm_stats(test);
  FeatureTensor probe{{11.0, 5.0, 12.0}};
  auto with_train = normalize_features(probe, stats);
  auto with_test = normalize_features(probe, test_stats);
  REQUIRE(with_train.values[0] != with_test.values[0]);

  NormStats bad;
  bad.mean = {0.0};
  bad.scale = {1.0};
  REQUIRE_THROWS_AS(normalize_features(probe, bad), DataError);
}
