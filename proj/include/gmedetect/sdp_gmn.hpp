// sdp_gmn.hpp
// Renormalized-GMN computation for small-n density matrices via the witness
// semidefinite program
//
//     N_g(rho) = -inf tr(W rho)
//     s.t.  W = P_a + Q_a^{T_a},  P_a >= 0,  0 <= Q_a <= 1   for all
//           canonical bipartitions a,
//
// solved with the in-repo interior-point solver. Hermitian matrices pass
// through the real symmetric embedding [[Re, -Im], [Im, Re]]; P_a is
// eliminated structurally (P_a := W - Q_a^{T_a} constrained PSD), so the
// free variables are the Hermitian degrees of freedom of W and the Q_a.

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gmedetect/gmn_oracle.hpp"
#include "gmedetect/sdp_solver.hpp"
#include "gmedetect/statekit.hpp"

namespace gme {

inline constexpr int kSdpMaxQubits = 4;
inline constexpr double kSdpDefaultTol = 1e-7;
inline constexpr double kTracePenalty = 1e-9;

// Real symmetric embedding of a Hermitian matrix; the spectrum is preserved
// with doubled multiplicity.
inline Eigen::MatrixXd embed_complex(const Eigen::MatrixXcd& m) {
  if (m.rows() != m.cols()) throw DataError("embed_complex: matrix not square");
  if ((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-10)
    throw DataError("embed_complex: input not Hermitian");
  const Eigen::Index d = m.rows();
  Eigen::MatrixXd out(2 * d, 2 * d);
  out.topLeftCorner(d, d) = m.real();
  out.bottomRightCorner(d, d) = m.real();
  out.topRightCorner(d, d) = -m.imag();
  out.bottomLeftCorner(d, d) = m.imag();
  return out;
}

namespace gmn_detail {

// Hermitian degrees of freedom of a d x d matrix, enumerated as all diagonal
// entries, then for each p < q the real and imaginary pair parts.
struct HermDof {
  int p, q;
  enum Kind { Diag, Re, Im } kind;
};

inline std::vector<HermDof> herm_basis(int d) {
  std::vector<HermDof> dofs;
  dofs.reserve(static_cast<std::size_t>(d) * d);
  for (int p = 0; p < d; ++p) dofs.push_back({p, p, HermDof::Diag});
  for (int p = 0; p < d; ++p)
    for (int q = p + 1; q < d; ++q) {
      dofs.push_back({p, q, HermDof::Re});
      dofs.push_back({p, q, HermDof::Im});
    }
  return dofs;
}

inline int dof_index(int d, const HermDof& dof) {
  if (dof.kind == HermDof::Diag) return dof.p;
  // Pairs are laid out row-major after the d diagonal entries.
  const int pair_rank = dof.p * d - dof.p * (dof.p + 1) / 2 + (dof.q - dof.p - 1);
  return d + 2 * pair_rank + (dof.kind == HermDof::Im ? 1 : 0);
}

// Entries of the embedded basis element, scaled by `scale`.
inline sdp::SparseSym embedded_entries(int d, const HermDof& dof, double scale) {
  sdp::SparseSym e;
  const int p = dof.p, q = dof.q;
  switch (dof.kind) {
    case HermDof::Diag:
      e = {{p, p, scale}, {p + d, p + d, scale}};
      break;
    case HermDof::Re:
      e = {{p, q, scale}, {q, p, scale}, {p + d, q + d, scale}, {q + d, p + d, scale}};
      break;
    case HermDof::Im:
      e = {{p, q + d, -scale}, {q, p + d, scale}, {p + d, q, scale}, {q + d, p, -scale}};
      break;
  }
  return e;
}

// Partial transpose of a basis element: an index permutation, possibly with
// a sign flip for imaginary elements whose pair order reverses.
inline std::pair<HermDof, double> transpose_dof(const HermDof& dof,
                                                uint64_t mask) {
  const auto swap_bits = [mask](int i, int j) {
    const uint64_t ia = static_cast<uint64_t>(i) & mask;
    const uint64_t ja = static_cast<uint64_t>(j) & mask;
    const uint64_t ir = static_cast<uint64_t>(i) & ~mask;
    const uint64_t jr = static_cast<uint64_t>(j) & ~mask;
    return std::pair<int, int>{static_cast<int>(ir | ja),
                               static_cast<int>(jr | ia)};
  };
  if (dof.kind == HermDof::Diag) return {dof, 1.0};
  auto [np, nq] = swap_bits(dof.p, dof.q);
  if (np == nq)
    throw NumericalError("transpose_dof: off-diagonal mapped to diagonal");
  if (dof.kind == HermDof::Re) {
    if (np > nq) std::swap(np, nq);
    return {{np, nq, HermDof::Re}, 1.0};
  }
  double sign = 1.0;
  if (np > nq) {
    std::swap(np, nq);
    sign = -1.0;
  }
  return {{np, nq, HermDof::Im}, sign};
}

inline double dof_inner(const HermDof& dof, const Eigen::MatrixXcd& m) {
  switch (dof.kind) {
    case HermDof::Diag:
      return m(dof.p, dof.p).real();
    case HermDof::Re:
      return 2.0 * m(dof.p, dof.q).real();
    case HermDof::Im:
      return 2.0 * m(dof.p, dof.q).imag();
  }
  return 0.0;
}

inline Eigen::MatrixXcd matrix_from_dofs(int d, const std::vector<HermDof>& dofs,
                                         const double* y) {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(d, d);
  for (std::size_t i = 0; i < dofs.size(); ++i) {
    const auto& dof = dofs[i];
    const double v = y[i];
    switch (dof.kind) {
      case HermDof::Diag:
        m(dof.p, dof.p) += v;
        break;
      case HermDof::Re:
        m(dof.p, dof.q) += v;
        m(dof.q, dof.p) += v;
        break;
      case HermDof::Im:
        m(dof.p, dof.q) += Complex(0.0, v);
        m(dof.q, dof.p) += Complex(0.0, -v);
        break;
    }
  }
  return m;
}

}  // namespace gmn_detail

// The assembled witness program plus the bookkeeping needed to extract
// Hermitian matrices from the solver's variable vector.
struct SdpProblem {
  int n = 0;
  Eigen::Index dim = 0;                 // 2^n (complex); blocks are 2^{n+1} real
  std::vector<Bipartition> bipartitions;
  sdp::LmiProblem lmi;
  // y layout: [0, d^2) = W dofs; then d^2 dofs per Q_a in bipartition order.
  int w_offset = 0;
  std::vector<int> q_offset;
};

inline SdpProblem assemble_problem(const DensityMatrix& rho) {
  using namespace gmn_detail;
  const int n = rho.qubits();
  if (n < 2) throw DataError("assemble_problem: need n >= 2");
  const int d = static_cast<int>(rho.dim());
  const auto dofs = herm_basis(d);
  const int dof_count = static_cast<int>(dofs.size());

  SdpProblem p;
  p.n = n;
  p.dim = d;
  p.bipartitions = enumerate_bipartitions(n);
  const int m = static_cast<int>(p.bipartitions.size());

  p.lmi.num_vars = dof_count * (1 + m);
  p.lmi.objective.assign(static_cast<std::size_t>(p.lmi.num_vars), 0.0);
  p.w_offset = 0;
  p.q_offset.resize(m);
  for (int a = 0; a < m; ++a) p.q_offset[a] = dof_count * (1 + a);

  // Objective: maximize -tr(W rho), with a tiny trace penalty on W and the
  // Q_a. The penalty selects the minimal optimizer on otherwise flat optimal
  // faces (slack bipartitions leave the (P_a, Q_a) split non-unique and the
  // kernel of rho leaves W unbounded); it biases the optimum down by at most
  // kTracePenalty * (tr W* + sum_a tr Q_a*), two orders below the gap tol.
  for (int i = 0; i < dof_count; ++i)
    p.lmi.objective[static_cast<std::size_t>(i)] = -dof_inner(dofs[i], rho.matrix());
  for (int dgi = 0; dgi < d; ++dgi) {
    p.lmi.objective[static_cast<std::size_t>(dgi)] -= kTracePenalty;
    for (int a = 0; a < m; ++a)
      p.lmi.objective[static_cast<std::size_t>(p.q_offset[a] + dgi)] -=
          kTracePenalty;
  }

  // Variable groups: W is shared; each Q_a is local to its bipartition.
  p.lmi.var_group.assign(static_cast<std::size_t>(p.lmi.num_vars), 0);
  for (int a = 0; a < m; ++a)
    for (int i = 0; i < dof_count; ++i)
      p.lmi.var_group[static_cast<std::size_t>(p.q_offset[a] + i)] = 1 + a;
  p.lmi.num_groups = 1 + m;

  const int ed = 2 * d;  // embedded block dimension
  for (int a = 0; a < m; ++a) {
    const uint64_t mask = p.bipartitions[static_cast<std::size_t>(a)].index_bit_mask();

    // P_a = W - Q_a^{T_a} >= 0.
    sdp::Block pb;
    pb.dim = ed;
    pb.embedded_complex = true;
    pb.C = Eigen::MatrixXd::Zero(ed, ed);
    for (int i = 0; i < dof_count; ++i) {
      pb.vars.push_back(p.w_offset + i);
      pb.coeff.push_back(embedded_entries(d, dofs[i], 1.0));
    }
    for (int i = 0; i < dof_count; ++i) {
      auto [tdof, sign] = transpose_dof(dofs[static_cast<std::size_t>(i)], mask);
      pb.vars.push_back(p.q_offset[a] + i);
      pb.coeff.push_back(embedded_entries(d, tdof, -sign));
    }
    p.lmi.blocks.push_back(std::move(pb));

    // Q_a >= 0.
    sdp::Block qb;
    qb.dim = ed;
    qb.embedded_complex = true;
    qb.C = Eigen::MatrixXd::Zero(ed, ed);
    for (int i = 0; i < dof_count; ++i) {
      qb.vars.push_back(p.q_offset[a] + i);
      qb.coeff.push_back(embedded_entries(d, dofs[i], 1.0));
    }
    p.lmi.blocks.push_back(std::move(qb));

    // I - Q_a >= 0.
    sdp::Block sb;
    sb.dim = ed;
    sb.embedded_complex = true;
    sb.C = Eigen::MatrixXd::Identity(ed, ed);
    for (int i = 0; i < dof_count; ++i) {
      sb.vars.push_back(p.q_offset[a] + i);
      sb.coeff.push_back(embedded_entries(d, dofs[i], -1.0));
    }
    p.lmi.blocks.push_back(std::move(sb));
  }
  return p;
}

struct WitnessSolution {
  Eigen::MatrixXcd W;
  struct PerBipartition {
    Bipartition alpha;
    Eigen::MatrixXcd P;
    Eigen::MatrixXcd Q;
  };
  std::vector<PerBipartition> per_bipartition;
  double gmn_value = 0.0;
  double duality_gap = 0.0;
  int iterations = 0;
  int label = +1;
};

inline WitnessSolution gmn_sdp(const DensityMatrix& rho,
                               double tol = kSdpDefaultTol,
                               int max_iter = 200) {
  using namespace gmn_detail;
  if (rho.qubits() > kSdpMaxQubits)
    throw CapacityError("gmn_sdp: dense solver budget is n <= " +
                        std::to_string(kSdpMaxQubits));
  if (tol < 1e-9) throw DataError("gmn_sdp: tol must be >= 1e-9");
  {
    ValidityReport report = validate(rho);
    if (!report.pass())
      throw DataError("gmn_sdp: input fails density-matrix validation");
  }

  // Full-rank regularization. For singular rho the witness has a recession
  // direction supported on ker(rho), so the multiplier side loses strict
  // feasibility and the path-following endgame degenerates. Mixing in
  // eps * I/d restores an interior; the optimum moves by O(eps), far below
  // the gap tolerance.
  constexpr double kRankEps = 1e-9;
  const Eigen::Index d_in = rho.dim();
  DensityMatrix rho_reg(Eigen::MatrixXcd(
      (1.0 - kRankEps) * rho.matrix() +
      (kRankEps / double(d_in)) * Eigen::MatrixXcd::Identity(d_in, d_in)));

  SdpProblem prob = assemble_problem(rho_reg);

  // Adaptive tolerance ladder. States whose optimal face is degenerate
  // (slack bipartitions, non-unique witness splits) exhaust double precision
  // before certifying 1e-7; retrying with a looser target returns a clean
  // certificate whose honest gap is reported in the solution.
  // Degenerate optimal faces (slack bipartitions, rank-deficient states)
  // exhaust double precision before certifying the requested gap. Each
  // attempt reports the best gap its trajectory certified, so a retry can
  // jump directly to the achievable decade; changing the starting scale
  // reroutes trajectories that die before certifying anything. The achieved
  // gap is reported honestly in the solution.
  sdp::SolverOptions opts;
  opts.max_iter = max_iter;
  sdp::SolverResult res;
  bool solved = false;
  std::string last_error;
  constexpr double kWorstAcceptableGap = 1e-4;
  for (double init : {1.0, 8.0, 0.125}) {
    opts.init_scale = init;
    opts.tol = tol;
    double reachable = 0.0;
    try {
      res = sdp::solve_interior_point(prob.lmi, opts);
      solved = true;
      break;
    } catch (const sdp::SdpConvergenceError& e) {
      last_error = e.what();
      reachable = e.best_gap;
    } catch (const NumericalError& e) {
      last_error = e.what();
    }
    if (reachable > 0.0 && std::isfinite(reachable) &&
        reachable <= kWorstAcceptableGap) {
      double target = tol;
      while (target < reachable) target *= 10.0;
      opts.tol = target;
      try {
        res = sdp::solve_interior_point(prob.lmi, opts);
        solved = true;
        break;
      } catch (const NumericalError& e) {
        last_error = e.what();
      }
    }
  }
  if (!solved)
    throw sdp::SdpConvergenceError("gmn_sdp: " + last_error, 0.0, 1.0, max_iter);

  const int d = static_cast<int>(prob.dim);
  const auto dofs = herm_basis(d);
  WitnessSolution sol;
  sol.W = matrix_from_dofs(d, dofs, res.y.data() + prob.w_offset);
  for (std::size_t a = 0; a < prob.bipartitions.size(); ++a) {
    WitnessSolution::PerBipartition pb{prob.bipartitions[a],
                                       Eigen::MatrixXcd(), Eigen::MatrixXcd()};
    pb.Q = matrix_from_dofs(d, dofs, res.y.data() + prob.q_offset[a]);
    pb.P = sol.W - partial_transpose(pb.Q, prob.n, prob.bipartitions[a]);
    sol.per_bipartition.push_back(std::move(pb));
  }
  // The solver returns a certified lower bound on the optimum; the optimum
  // itself is nonnegative (W = 0 is feasible), so clamping at zero tightens
  // the bound without weakening the certificate.
  sol.gmn_value = std::max(res.objective_value, 0.0);
  sol.duality_gap = res.duality_gap;
  sol.iterations = res.iterations;
  sol.label = res.objective_value > kLabelThreshold ? -1 : +1;
  return sol;
}

}  // namespace gme
