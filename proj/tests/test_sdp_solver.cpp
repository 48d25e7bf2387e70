#include <catch2/catch_amalgamated.hpp>

#include "gmedetect/sdp_solver.hpp"

using namespace gme;
using Catch::Approx;

namespace {

// min x s.t. x >= 0 as an LMI: maximize -y with block [y].
sdp::LmiProblem scalar_problem() {
  sdp::LmiProblem p;
  p.num_vars = 1;
  p.objective = {-1.0};
  sdp::Block b;
  b.dim = 1;
  b.C = Eigen::MatrixXd::Zero(1, 1);
  b.vars = {0};
  b.coeff = {{{0, 0, 1.0}}};
  p.blocks.push_back(b);
  return p;
}

// min tr(X) s.t. X >= 0, X11 = 1 with X = [[1, y0], [y0, y1]]:
// maximize -(1 + y1).
sdp::LmiProblem pinned_trace_problem() {
  sdp::LmiProblem p;
  p.num_vars = 2;
  p.objective = {0.0, -1.0};
  p.offset = -1.0;
  sdp::Block b;
  b.dim = 2;
  b.C = Eigen::MatrixXd::Zero(2, 2);
  b.C(0, 0) = 1.0;
  b.vars = {0, 1};
  b.coeff = {{{0, 1, 1.0}, {1, 0, 1.0}}, {{1, 1, 1.0}}};
  p.blocks.push_back(b);
  return p;
}

// max y s.t. [[1, y], [y, 1]] >= 0; optimum 1.
sdp::LmiProblem correlation_problem() {
  sdp::LmiProblem p;
  p.num_vars = 1;
  p.objective = {1.0};
  sdp::Block b;
  b.dim = 2;
  b.C = Eigen::MatrixXd::Identity(2, 2);
  b.vars = {0};
  b.coeff = {{{0, 1, 1.0}, {1, 0, 1.0}}};
  p.blocks.push_back(b);
  return p;
}

}  // namespace

TEST_CASE("scalar nonnegativity problem solves to zero") {
  auto res = sdp::solve_interior_point(scalar_problem(), {.tol = 1e-8});
  REQUIRE(std::abs(-res.objective_value) <= 1e-7);  // min x = -max(-y)
  REQUIRE(res.duality_gap <= 1e-7);
}

TEST_CASE("pinned-trace problem solves to one") {
  auto res = sdp::solve_interior_point(pinned_trace_problem(), {.tol = 1e-8});
  REQUIRE(-res.objective_value == Approx(1.0).margin(1e-6));
  REQUIRE(std::abs(res.y[0]) < 1e-4);
}

TEST_CASE("correlation bound problem attains the boundary") {
  auto res = sdp::solve_interior_point(correlation_problem(), {.tol = 1e-9});
  REQUIRE(res.objective_value == Approx(1.0).margin(1e-7));
  // The block value at the optimum is PSD up to solver slack.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(res.block_values[0],
                                                    Eigen::EigenvaluesOnly);
  REQUIRE(es.eigenvalues().minCoeff() >= -1e-8);
}

TEST_CASE("solver is deterministic") {
  auto a = sdp::solve_interior_point(pinned_trace_problem(), {.tol = 1e-8});
  auto b = sdp::solve_interior_point(pinned_trace_problem(), {.tol = 1e-8});
  REQUIRE(a.iterations == b.iterations);
  REQUIRE(a.objective_value == b.objective_value);
  REQUIRE(a.y == b.y);
}

TEST_CASE("tightening the tolerance never loosens the certified gap") {
  double prev = 1e9;
  for (double tol : {1e-5, 1e-7, 1e-9}) {
    auto res = sdp::solve_interior_point(correlation_problem(), {.tol = tol});
    REQUIRE(res.duality_gap <= prev + 1e-15);
    prev = res.duality_gap;
  }
}

TEST_CASE("malformed problems are rejected") {
  sdp::LmiProblem empty;
  REQUIRE_THROWS_AS(sdp::solve_interior_point(empty, {}), DataError);

  auto p = scalar_problem();
  p.objective.clear();
  REQUIRE_THROWS_AS(sdp::solve_interior_point(p, {}), DataError);

  auto q = scalar_problem();
  REQUIRE_THROWS_AS(sdp::solve_interior_point(q, {.tol = -1.0}), DataError);
}

TEST_CASE("iteration cap raises a convergence error with the best iterate") {
  auto p = correlation_problem();
  try {
    sdp::solve_interior_point(p, {.tol = 1e-9, .max_iter = 2});
    FAIL("expected SdpConvergenceError");
  } catch (const sdp::SdpConvergenceError& e) {
    REQUIRE(e.iterations == 2);
    REQUIRE(std::isfinite(e.best_value));
    REQUIRE(std::isfinite(e.best_gap));
  }
}
