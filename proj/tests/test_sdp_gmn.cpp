#include <catch2/catch_amalgamated.hpp>

#include "gmedetect/sdp_gmn.hpp"

using namespace gme;
using Catch::Approx;

namespace {

DensityMatrix ghz_state(int n) {
  const Eigen::Index d = Eigen::Index{1} << n;
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(d);
  psi(0) = psi(d - 1) = 1.0 / std::sqrt(2.0);
  return DensityMatrix::pure(psi);
}

// Random mixture of pure product states across each bipartition: a
// biseparable state on which every valid witness must be nonnegative.
DensityMatrix random_biseparable(int n, uint64_t seed) {
  Rng rng(seed);
  const Eigen::Index d = Eigen::Index{1} << n;
  auto parts = enumerate_bipartitions(n);
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(d, d);
  std::vector<double> weights = rng.dirichlet(parts.size() * 20);
  std::size_t w = 0;
  for (const auto& alpha : parts) {
    const Eigen::Index da = Eigen::Index{1} << alpha.size();
    const Eigen::Index db = d / da;
    for (int k = 0; k < 20; ++k) {
      Eigen::VectorXcd a = random_pure_state(da, rng);
      Eigen::VectorXcd b = random_pure_state(db, rng);
      // Assemble |a> (x) |b> with alpha's qubits carrying the a-factor.
      Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(d);
      const uint64_t amask = alpha.index_bit_mask();
      for (Eigen::Index idx = 0; idx < d; ++idx) {
        uint64_t ai = 0, bi = 0;
        int abit = 0, bbit = 0;
        for (int bitpos = static_cast<int>(alpha.n()) - 1; bitpos >= 0; --bitpos) {
          const uint64_t bit = (static_cast<uint64_t>(idx) >> bitpos) & 1;
          if (amask & (uint64_t{1} << bitpos))
            ai |= bit << (alpha.size() - 1 - abit++);
          else
            bi |= bit << (alpha.n() - alpha.size() - 1 - bbit++);
        }
        psi(idx) = a(static_cast<Eigen::Index>(ai)) * b(static_cast<Eigen::Index>(bi));
      }
      rho += weights[w++] * (psi * psi.adjoint());
    }
  }
  rho = 0.5 * (rho + rho.adjoint());
  rho /= rho.trace().real();
  return DensityMatrix(std::move(rho));
}

}  // namespace

TEST_CASE("embed_complex block structure and spectrum") {
  Eigen::MatrixXcd real_sym = Eigen::MatrixXcd::Zero(2, 2);
  real_sym << 1.0, 2.0, 2.0, -1.0;
  auto e = embed_complex(real_sym);
  REQUIRE(e.rows() == 4);
  REQUIRE((e.topLeftCorner(2, 2) - real_sym.real()).norm() == 0.0);
  REQUIRE(e.topRightCorner(2, 2).norm() == 0.0);

  Eigen::MatrixXcd pauli_y(2, 2);
  pauli_y << 0.0, Complex(0, -1), Complex(0, 1), 0.0;
  auto ey = embed_complex(pauli_y);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ey, Eigen::EigenvaluesOnly);
  Eigen::VectorXd v = es.eigenvalues();
  REQUIRE(v(0) == Approx(-1.0).margin(1e-12));
  REQUIRE(v(1) == Approx(-1.0).margin(1e-12));
  REQUIRE(v(2) == Approx(1.0).margin(1e-12));
  REQUIRE(v(3) == Approx(1.0).margin(1e-12));

  auto rho = random_density_matrix(2, 4, 5);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(embed_complex(rho.matrix()),
                                                     Eigen::EigenvaluesOnly);
  REQUIRE(es2.eigenvalues().minCoeff() >= -1e-12);

  Eigen::MatrixXcd bad = Eigen::MatrixXcd::Random(2, 2);
  bad(0, 1) = 5.0;
  bad(1, 0) = -3.0;
  REQUIRE_THROWS_AS(embed_complex(bad), DataError);
}

TEST_CASE("assemble_problem block counts") {
  auto p2 = assemble_problem(random_density_matrix(2, 2, 1));
  REQUIRE(p2.bipartitions.size() == 1);
  REQUIRE(p2.lmi.blocks.size() == 3);
  REQUIRE(p2.lmi.num_vars == 16 * 2);  // W + one Q, d^2 = 16 dofs each

  auto p3 = assemble_problem(random_density_matrix(3, 2, 1));
  REQUIRE(p3.bipartitions.size() == 3);
  REQUIRE(p3.lmi.blocks.size() == 9);
  for (const auto& b : p3.lmi.blocks) REQUIRE(b.dim == 16);  // 2^{n+1}
}

TEST_CASE("gmn_sdp detects the Bell state at one half") {
  auto bell = ghz_state(2);
  auto sol = gmn_sdp(bell, 1e-7);
  REQUIRE(sol.gmn_value == Approx(0.5).margin(1e-5));
  REQUIRE(sol.label == -1);
}

TEST_CASE("gmn_sdp on the pure 3-qubit GHZ state") {
  auto sol = gmn_sdp(ghz_state(3), 1e-7);
  REQUIRE(sol.gmn_value == Approx(0.5).margin(1e-5));
  REQUIRE(sol.duality_gap <= 1e-7);

  // Witness feasibility certificates.
  for (const auto& pb : sol.per_bipartition) {
    const Eigen::MatrixXcd reassembled =
        pb.P + partial_transpose(pb.Q, 3, pb.alpha);
    REQUIRE((sol.W - reassembled).norm() <= 1e-7);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> ep(pb.P, Eigen::EigenvaluesOnly);
    REQUIRE(ep.eigenvalues().minCoeff() >= -1e-8);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eq(pb.Q, Eigen::EigenvaluesOnly);
    REQUIRE(eq.eigenvalues().minCoeff() >= -1e-8);
    REQUIRE(eq.eigenvalues().maxCoeff() <= 1.0 + 1e-8);
  }
}

TEST_CASE("gmn_sdp vanishes on product and maximally mixed states") {
  Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(8);
  zero(0) = 1.0;
  auto product = DensityMatrix::pure(zero);
  auto sol = gmn_sdp(product, 1e-7);
  REQUIRE(std::abs(sol.gmn_value) <= 1e-6);
  REQUIRE(sol.label == +1);

  auto mixed = gmn_sdp(DensityMatrix::maximally_mixed(3), 1e-7);
  REQUIRE(std::abs(mixed.gmn_value) <= 1e-6);
}

TEST_CASE("gmn_sdp agrees with the analytic oracle on GHZ-diagonal states") {
  for (int k = 0; k < 6; ++k) {
    auto spec = random_ghz_diagonal(3, k % 2 ? -1 : +1, derive_seed(555, k));
    auto truth = gmn_analytic(spec);
    auto sol = gmn_sdp(to_density_matrix(spec), 1e-7);
    REQUIRE(std::abs(sol.gmn_value - truth.value) <= 1e-5);
    REQUIRE(sol.gmn_value <= 0.5 + 1e-6);
    REQUIRE(sol.gmn_value >= -1e-8);
  }
}

TEST_CASE("returned witnesses are nonnegative on biseparable states") {
  auto spec = random_ghz_diagonal(3, -1, 99);
  auto sol = gmn_sdp(to_density_matrix(spec), 1e-7);
  for (int k = 0; k < 100; ++k) {
    auto sigma = random_biseparable(3, derive_seed(321, k));
    const double val = (sol.W * sigma.matrix()).trace().real();
    REQUIRE(val >= -1e-7);
  }
}

TEST_CASE("gmn_sdp enforces capacity and tolerance preconditions") {
  REQUIRE_THROWS_AS(gmn_sdp(random_density_matrix(5, 4, 1)), CapacityError);
  REQUIRE_THROWS_AS(gmn_sdp(random_density_matrix(2, 2, 1), 1e-10), DataError);
  Eigen::MatrixXcd not_state = 2.0 * Eigen::MatrixXcd::Identity(4, 4);
  REQUIRE_THROWS_AS(gmn_sdp(DensityMatrix(not_state)), DataError);
}

TEST_CASE("gmn_sdp is deterministic") {
  auto rho = random_density_matrix(2, 3, 7);
  auto a = gmn_sdp(rho, 1e-7);
  auto b = gmn_sdp(rho, 1e-7);
  REQUIRE(a.gmn_value == b.gmn_value);
  REQUIRE(a.iterations == b.iterations);
  REQUIRE((a.W - b.W).norm() == 0.0);
}
