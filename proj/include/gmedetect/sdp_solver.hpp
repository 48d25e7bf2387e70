// sdp_solver.hpp
// A small deterministic primal-dual interior-point solver for semidefinite
// programs given in linear-matrix-inequality form:
//
//     maximize   g.y + offset
//     subject to S_b(y) = C_b + sum_i y_i A_{b,i}  >= 0   for each block b,
//
// with real symmetric blocks and sparse coefficient matrices. The method is
// infeasible-start path following with Nesterov-Todd scaling and Mehrotra
// predictor-corrector steps. The multiplier iterate X provides the
// certifying upper bound sum_b <C_b, X_b> + offset, so the reported duality
// gap bounds the distance of g.y to the true optimum.
//
// Variables may be annotated with a group id. When every block touches only
// group 0 plus at most one other group, the Schur complement system is
// solved by block-arrow elimination instead of a dense factorization.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gmedetect/common.hpp"

namespace gme::sdp {

struct Entry {
  int row;
  int col;
  double value;
};
using SparseSym = std::vector<Entry>;  // both triangles listed explicitly

struct Block {
  int dim = 0;
  Eigen::MatrixXd C;                // constant term, dim x dim
  std::vector<int> vars;            // global y-indices touching this block
  std::vector<SparseSym> coeff;     // parallel to vars
  // True when the block is the real embedding [[A,-B],[B,A]] of a Hermitian
  // matrix. The multiplier iterate is then projected back onto that
  // subalgebra each step; without the projection the redundant subspace
  // makes the endgame degenerate.
  bool embedded_complex = false;
};

struct LmiProblem {
  int num_vars = 0;
  std::vector<double> objective;    // maximize objective . y + offset
  double offset = 0.0;
  std::vector<Block> blocks;
  std::vector<int> var_group;       // optional; empty = one group
  int num_groups = 1;
};

struct SolverOptions {
  double tol = 1e-7;      // absolute duality-gap certificate
  int max_iter = 200;
  double feas_tol = 0.0;  // 0 = derived from tol
  bool corrector = true;
  double step_fraction = 0.98;
  double init_scale = 1.0;  // scales the identity start of X and S
};

struct SolverResult {
  std::vector<double> y;
  double objective_value = 0.0;  // g.y + offset (feasible side)
  double upper_bound = 0.0;      // <C, X> + offset (certificate side)
  double duality_gap = 0.0;      // upper_bound - objective_value
  double primal_residual = 0.0;  // max block ||S - S(y)||_F (scaled)
  double dual_residual = 0.0;    // multiplier stationarity (scaled)
  int iterations = 0;
  std::vector<Eigen::MatrixXd> block_values;  // S_b(y), affine-exact
};

// Raised when the iteration cap or a singular Newton system is hit; carries
// the best iterate value and its certified gap.
struct SdpConvergenceError : NumericalError {
  SdpConvergenceError(const std::string& msg, double value, double gap, int iters)
      : NumericalError(msg + " (value=" + std::to_string(value) +
                       ", gap=" + std::to_string(gap) +
                       ", iterations=" + std::to_string(iters) + ")"),
        best_value(value),
        best_gap(gap),
        iterations(iters) {}
  double best_value;
  double best_gap;
  int iterations;
};

namespace detail {

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

// Projection onto the embedded-complex subalgebra {[[A,-B],[B,A]]}:
// averages the matrix with its conjugation by J = [[0,-I],[I,0]].
inline void project_embedded(Eigen::MatrixXd& m) {
  const Eigen::Index d = m.rows() / 2;
  Eigen::MatrixXd a = 0.5 * (m.topLeftCorner(d, d) + m.bottomRightCorner(d, d));
  Eigen::MatrixXd b = 0.5 * (m.bottomLeftCorner(d, d) - m.topRightCorner(d, d));
  m.topLeftCorner(d, d) = a;
  m.bottomRightCorner(d, d) = a;
  m.bottomLeftCorner(d, d) = b;
  m.topRightCorner(d, d) = -b;
}

// <A, T> = tr(A T) for sparse symmetric A (entries list both triangles).
inline double sparse_inner(const SparseSym& a, const Eigen::MatrixXd& t) {
  double acc = 0.0;
  for (const auto& e : a) acc += e.value * t(e.col, e.row);
  return acc;
}

inline void sparse_add(Eigen::MatrixXd& m, const SparseSym& a, double scale) {
  for (const auto& e : a) m(e.row, e.col) += scale * e.value;
}

// tr(A W B W) for sparse A, B and dense symmetric W.
inline double sparse_pair_inner(const SparseSym& a, const SparseSym& b,
                                const Eigen::MatrixXd& w) {
  double acc = 0.0;
  for (const auto& ea : a)
    for (const auto& eb : b)
      acc += ea.value * eb.value * w(ea.col, eb.row) * w(eb.col, ea.row);
  return acc;
}

// Largest step alpha with P + alpha*D >= 0 (P symmetric positive definite).
inline double max_psd_step(const Eigen::MatrixXd& p, const Eigen::MatrixXd& d) {
  Eigen::LLT<Eigen::MatrixXd> llt(p);
  Eigen::MatrixXd b;
  if (llt.info() == Eigen::Success) {
    Eigen::MatrixXd l = llt.matrixL();
    b = l.triangularView<Eigen::Lower>().solve(d);
    b = l.triangularView<Eigen::Lower>()
            .solve(b.transpose())
            .transpose();
  } else {
    Eigen::MatrixXd reg =
        p + 1e-14 * (1.0 + p.trace()) * Eigen::MatrixXd::Identity(p.rows(), p.cols());
    Eigen::LLT<Eigen::MatrixXd> llt2(reg);
    if (llt2.info() != Eigen::Success) return 0.0;
    Eigen::MatrixXd l = llt2.matrixL();
    b = l.triangularView<Eigen::Lower>().solve(d);
    b = l.triangularView<Eigen::Lower>()
            .solve(b.transpose())
            .transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(b),
                                                    Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  if (lmin >= 0.0) return std::numeric_limits<double>::infinity();
  return -1.0 / lmin;
}

// Nesterov-Todd scaling W with W S W = X, via eigendecompositions.
inline Eigen::MatrixXd nt_scaling(const Eigen::MatrixXd& x,
                                  const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_s(s);
  if (es_s.info() != Eigen::Success)
    throw NumericalError("sdp: eigendecomposition of S failed");
  const auto& vals = es_s.eigenvalues();
  const double floor_val = std::max(vals.maxCoeff(), 1.0) * 1e-300;
  Eigen::VectorXd sq = vals.cwiseMax(floor_val).cwiseSqrt();
  Eigen::MatrixXd s_half =
      es_s.eigenvectors() * sq.asDiagonal() * es_s.eigenvectors().transpose();
  Eigen::MatrixXd s_half_inv = es_s.eigenvectors() *
                               sq.cwiseInverse().asDiagonal() *
                               es_s.eigenvectors().transpose();
  Eigen::MatrixXd t = symmetrize(s_half * x * s_half);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_t(t);
  if (es_t.info() != Eigen::Success)
    throw NumericalError("sdp: eigendecomposition of S^1/2 X S^1/2 failed");
  Eigen::VectorXd tq = es_t.eigenvalues().cwiseMax(floor_val).cwiseSqrt();
  Eigen::MatrixXd t_half =
      es_t.eigenvectors() * tq.asDiagonal() * es_t.eigenvectors().transpose();
  return symmetrize(s_half_inv * t_half * s_half_inv);
}

struct GroupLayout {
  bool arrow = false;               // block-arrow structure usable
  int num_groups = 1;
  std::vector<int> var_group;       // group per variable
  std::vector<int> var_offset;      // offset within its group
  std::vector<int> group_size;
  std::vector<int> block_group;     // per block: the non-shared group (0 if none)
};

inline GroupLayout analyze_groups(const LmiProblem& p) {
  GroupLayout g;
  if (p.var_group.empty() || p.num_groups <= 1) {
    g.arrow = false;
    g.num_groups = 1;
    g.var_group.assign(p.num_vars, 0);
    g.var_offset.resize(p.num_vars);
    for (int i = 0; i < p.num_vars; ++i) g.var_offset[i] = i;
    g.group_size = {p.num_vars};
    g.block_group.assign(p.blocks.size(), 0);
    return g;
  }
  g.num_groups = p.num_groups;
  g.var_group = p.var_group;
  g.group_size.assign(p.num_groups, 0);
  g.var_offset.resize(p.num_vars);
  for (int i = 0; i < p.num_vars; ++i)
    g.var_offset[i] = g.group_size[g.var_group[i]]++;
  g.block_group.assign(p.blocks.size(), 0);
  g.arrow = true;
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    int other = 0;
    for (int v : p.blocks[b].vars) {
      const int gv = g.var_group[v];
      if (gv == 0) continue;
      if (other == 0)
        other = gv;
      else if (other != gv) {
        g.arrow = false;  // block couples two non-shared groups
        return g;
      }
    }
    g.block_group[b] = other;
  }
  return g;
}

// Schur-complement system in group-block form. When the arrow structure is
// present only M00, M0g and Mgg are stored and the solve eliminates each
// group against the shared head.
class SchurSystem {
 public:
  SchurSystem(const GroupLayout& layout) : layout_(layout) {
    const int k0 = layout_.group_size[0];
    m00_.setZero(k0, k0);
    if (layout_.arrow) {
      mgg_.resize(layout_.num_groups);
      m0g_.resize(layout_.num_groups);
      for (int g = 1; g < layout_.num_groups; ++g) {
        mgg_[g].setZero(layout_.group_size[g], layout_.group_size[g]);
        m0g_[g].setZero(k0, layout_.group_size[g]);
      }
    }
  }

  void reset() {
    m00_.setZero();
    for (int g = 1; g < layout_.num_groups; ++g) {
      if (layout_.arrow) {
        mgg_[g].setZero();
        m0g_[g].setZero();
      }
    }
    factored_ = false;
  }

  void add(int vi, int vj, double value) {
    const int gi = layout_.var_group[vi];
    const int gj = layout_.var_group[vj];
    const int oi = layout_.var_offset[vi];
    const int oj = layout_.var_offset[vj];
    if (gi == 0 && gj == 0) {
      m00_(oi, oj) += value;
      if (oi != oj) m00_(oj, oi) += value;
    } else if (gi == gj) {
      mgg_[gi](oi, oj) += value;
      if (oi != oj) mgg_[gi](oj, oi) += value;
    } else if (gi == 0) {
      m0g_[gj](oi, oj) += value;
    } else {
      m0g_[gi](oj, oi) += value;
    }
  }

  void factor() {
    if (layout_.arrow) {
      const int k0 = layout_.group_size[0];
      Eigen::MatrixXd sc = m00_;
      llt_g_.resize(layout_.num_groups);
      winv_.resize(layout_.num_groups);
      for (int g = 1; g < layout_.num_groups; ++g) {
        if (layout_.group_size[g] == 0) continue;
        llt_g_[g] = robust_llt(mgg_[g]);
        winv_[g] = llt_g_[g].solve(m0g_[g].transpose());  // kg x k0
        sc.noalias() -= m0g_[g] * winv_[g];
      }
      if (k0 > 0) llt_sc_ = robust_llt(sc);
    } else {
      llt_sc_ = robust_llt(m00_);
    }
    factored_ = true;
  }

  // M * v in the group-block representation.
  std::vector<double> matvec(const std::vector<double>& v) const {
    const int k0 = layout_.group_size[0];
    std::vector<Eigen::VectorXd> vg(layout_.num_groups);
    for (int g = 0; g < layout_.num_groups; ++g) vg[g].setZero(layout_.group_size[g]);
    for (std::size_t i = 0; i < v.size(); ++i)
      vg[layout_.var_group[i]](layout_.var_offset[i]) = v[i];
    std::vector<Eigen::VectorXd> out(layout_.num_groups);
    out[0] = m00_ * vg[0];
    for (int g = 1; g < layout_.num_groups; ++g) {
      if (layout_.group_size[g] == 0) continue;
      out[0].noalias() += m0g_[g] * vg[g];
      out[g] = mgg_[g] * vg[g] + m0g_[g].transpose() * vg[0];
    }
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      r[i] = out[layout_.var_group[i]](layout_.var_offset[i]);
    return r;
  }

  // Iterative refinement keeps the Newton directions usable when the scaling
  // matrices are ill-conditioned near the central-path endgame.
  std::vector<double> solve(const std::vector<double>& rhs) const {
    std::vector<double> x = solve_once(rhs);
    for (int pass = 0; pass < 3; ++pass) {
      std::vector<double> mx = matvec(x);
      std::vector<double> resid(rhs.size());
      double rnorm = 0.0, bnorm = 0.0;
      for (std::size_t i = 0; i < rhs.size(); ++i) {
        resid[i] = rhs[i] - mx[i];
        rnorm = std::max(rnorm, std::abs(resid[i]));
        bnorm = std::max(bnorm, std::abs(rhs[i]));
      }
      if (rnorm <= 1e-15 * std::max(1.0, bnorm)) break;
      std::vector<double> dx = solve_once(resid);
      for (std::size_t i = 0; i < rhs.size(); ++i) x[i] += dx[i];
    }
    return x;
  }

  std::vector<double> solve_once(const std::vector<double>& rhs) const {
    if (!factored_) throw NumericalError("sdp: Schur system not factored");
    const int k0 = layout_.group_size[0];
    if (!layout_.arrow) {
      Eigen::VectorXd r(k0);
      for (int i = 0; i < k0; ++i) r(i) = rhs[i];
      Eigen::VectorXd x = llt_sc_.solve(r);
      return std::vector<double>(x.data(), x.data() + k0);
    }
    // Gather per-group right-hand sides.
    std::vector<Eigen::VectorXd> rg(layout_.num_groups);
    for (int g = 0; g < layout_.num_groups; ++g)
      rg[g].setZero(layout_.group_size[g]);
    for (std::size_t v = 0; v < rhs.size(); ++v)
      rg[layout_.var_group[v]](layout_.var_offset[v]) = rhs[v];
    Eigen::VectorXd r0 = rg[0];
    for (int g = 1; g < layout_.num_groups; ++g) {
      if (layout_.group_size[g] == 0) continue;
      r0.noalias() -= m0g_[g] * llt_g_[g].solve(rg[g]);
    }
    Eigen::VectorXd y0 =
        k0 > 0 ? Eigen::VectorXd(llt_sc_.solve(r0)) : Eigen::VectorXd(0);
    std::vector<double> out(rhs.size());
    for (std::size_t v = 0; v < rhs.size(); ++v) {
      if (layout_.var_group[v] == 0) out[v] = y0(layout_.var_offset[v]);
    }
    for (int g = 1; g < layout_.num_groups; ++g) {
      if (layout_.group_size[g] == 0) continue;
      Eigen::VectorXd yg = llt_g_[g].solve(rg[g]) - winv_[g] * y0;
      for (std::size_t v = 0; v < rhs.size(); ++v)
        if (layout_.var_group[v] == g) out[v] = yg(layout_.var_offset[v]);
    }
    return out;
  }

 private:
  // Jacobi-scaled factorization: D^{-1/2} M D^{-1/2} has unit diagonal, which
  // removes the scale-spread part of the conditioning before LDLT.
  struct ScaledFactor {
    Eigen::LDLT<Eigen::MatrixXd> ldlt;
    Eigen::VectorXd dinv_sqrt;
    Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const {
      Eigen::MatrixXd scaled = dinv_sqrt.asDiagonal() * b;
      Eigen::MatrixXd x = ldlt.solve(scaled);
      return dinv_sqrt.asDiagonal() * x;
    }
  };

  static ScaledFactor robust_llt(const Eigen::MatrixXd& m) {
    ScaledFactor f;
    f.dinv_sqrt = m.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd scaled =
        f.dinv_sqrt.asDiagonal() * m * f.dinv_sqrt.asDiagonal();
    f.ldlt.compute(scaled);
    if (f.ldlt.info() == Eigen::Success && f.ldlt.isPositive()) return f;
    // Roundoff can push the scaled matrix marginally indefinite. A ridge at
    // the noise scale restores definiteness without distorting directions;
    // iterative refinement absorbs the perturbation.
    for (double ridge : {1e-14, 1e-12, 1e-10, 1e-8}) {
      Eigen::MatrixXd reg =
          scaled + ridge * Eigen::MatrixXd::Identity(m.rows(), m.cols());
      f.ldlt.compute(reg);
      if (f.ldlt.info() == Eigen::Success && f.ldlt.isPositive()) return f;
    }
    throw NumericalError("sdp: Newton system near-singular");
  }

  GroupLayout layout_;
  Eigen::MatrixXd m00_;
  std::vector<Eigen::MatrixXd> mgg_, m0g_, winv_;
  std::vector<ScaledFactor> llt_g_;
  ScaledFactor llt_sc_;
  bool factored_ = false;
};

}  // namespace detail

inline SolverResult solve_interior_point(const LmiProblem& prob,
                                         const SolverOptions& opts = {}) {
  using detail::symmetrize;
  if (prob.num_vars <= 0) throw DataError("sdp: problem has no variables");
  if (prob.blocks.empty()) throw DataError("sdp: problem has no blocks");
  if (static_cast<int>(prob.objective.size()) != prob.num_vars)
    throw DataError("sdp: objective length mismatch");
  for (const auto& b : prob.blocks) {
    if (b.dim <= 0 || b.C.rows() != b.dim || b.C.cols() != b.dim)
      throw DataError("sdp: malformed block");
    if (b.vars.size() != b.coeff.size())
      throw DataError("sdp: block vars/coeff mismatch");
    if (b.vars.empty()) throw DataError("sdp: block without variables");
  }
  if (opts.tol <= 0) throw DataError("sdp: tolerance must be positive");

  const int k = prob.num_vars;
  const std::size_t nb = prob.blocks.size();
  const double feas_tol =
      opts.feas_tol > 0 ? opts.feas_tol : std::max(1e-10, 0.3 * opts.tol);

  detail::GroupLayout layout = detail::analyze_groups(prob);
  detail::SchurSystem schur(layout);

  double total_dim = 0.0;
  for (const auto& b : prob.blocks) total_dim += b.dim;

  // Infeasible start: y = 0, S and X proportional to the identity with
  // data-scaled magnitudes.
  std::vector<double> y(k, 0.0);
  double gmax = 1.0;
  for (double v : prob.objective) gmax = std::max(gmax, std::abs(v));
  std::vector<Eigen::MatrixXd> S(nb), X(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const auto& blk = prob.blocks[b];
    const double s0 = 1.0 + blk.C.norm() / std::sqrt(double(blk.dim));
    S[b] = opts.init_scale * s0 * Eigen::MatrixXd::Identity(blk.dim, blk.dim);
    X[b] = opts.init_scale * gmax * Eigen::MatrixXd::Identity(blk.dim, blk.dim);
  }

  std::vector<Eigen::MatrixXd> Rd(nb), Wsc(nb), Rc(nb), dS(nb), dX(nb),
      dSa(nb), dXa(nb), Sinv(nb);
  std::vector<double> rp(k), h(k), dy(k), dya(k);

  auto eval_affine = [&](std::size_t b) {
    const auto& blk = prob.blocks[b];
    Eigen::MatrixXd m = blk.C;
    for (std::size_t t = 0; t < blk.vars.size(); ++t)
      detail::sparse_add(m, blk.coeff[t], y[blk.vars[t]]);
    return m;
  };

  // The iterate can pass through its best certified state and then hit the
  // numerical floor of the degenerate endgame, so the best snapshot is kept
  // and returned from whichever exit fires.
  struct Snapshot {
    bool valid = false;
    std::vector<double> y;
    double lower = 0.0, upper = 0.0, pres = 0.0, dres = 0.0, comp = 0.0;
    double cert = std::numeric_limits<double>::infinity();
    int iter = 0;
  } best;

  auto result_from = [&](const Snapshot& snap) {
    SolverResult res;
    res.y = snap.y;
    res.objective_value = snap.lower;
    res.upper_bound = snap.upper;
    res.duality_gap = snap.upper - snap.lower;
    res.iterations = snap.iter;
    res.primal_residual = snap.pres;
    res.dual_residual = snap.dres;
    res.block_values.resize(nb);
    std::vector<double> saved = y;
    y = snap.y;
    for (std::size_t b = 0; b < nb; ++b) res.block_values[b] = eval_affine(b);
    y = saved;
    return res;
  };

  const bool trace = std::getenv("GME_SDP_TRACE") != nullptr;
  int stall_count = 0;
  double last_ax = 0.0, last_as = 0.0;
  for (int iter = 0; iter <= opts.max_iter; ++iter) {
    // Residuals.
    double pres = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      Rd[b] = eval_affine(b) - S[b];
      pres = std::max(pres, Rd[b].norm() / (1.0 + prob.blocks[b].C.norm()));
    }
    for (int i = 0; i < k; ++i) rp[i] = -prob.objective[i];
    for (std::size_t b = 0; b < nb; ++b) {
      const auto& blk = prob.blocks[b];
      for (std::size_t t = 0; t < blk.vars.size(); ++t)
        rp[blk.vars[t]] -= detail::sparse_inner(blk.coeff[t], X[b]);
    }
    double dres = 0.0;
    for (int i = 0; i < k; ++i) dres = std::max(dres, std::abs(rp[i]));
    dres /= (1.0 + gmax);

    double comp = 0.0;
    for (std::size_t b = 0; b < nb; ++b)
      comp += (X[b].array() * S[b].array()).sum();
    const double mu = comp / total_dim;

    double lower = prob.offset, upper = prob.offset;
    for (int i = 0; i < k; ++i) lower += prob.objective[i] * y[i];
    for (std::size_t b = 0; b < nb; ++b)
      upper += (prob.blocks[b].C.array() * X[b].array()).sum();
    const double gap = upper - lower;

    if (trace)
      std::fprintf(stderr,
                   "sdp iter %3d: mu=%.3e pres=%.3e dres=%.3e gap=%+.3e "
                   "comp=%.3e ax=%.2f as=%.2f\n",
                   iter, mu, pres, dres, gap, comp, last_ax, last_as);

    if (pres <= feas_tol && dres <= feas_tol) {
      const double cert = std::max(std::abs(gap), comp);
      if (cert < best.cert) {
        best.valid = true;
        best.y = y;
        best.lower = lower;
        best.upper = upper;
        best.pres = pres;
        best.dres = dres;
        best.comp = comp;
        best.cert = cert;
        best.iter = iter;
      }
      if (cert <= opts.tol) return result_from(best);
    }

    const bool exhausted = iter == opts.max_iter || stall_count >= 8 ||
                           (best.valid && iter - best.iter > 30);
    if (exhausted) {
      if (best.valid && best.cert <= opts.tol) return result_from(best);
      throw SdpConvergenceError("sdp: no convergence within iteration budget",
                                best.valid ? best.lower : lower,
                                best.valid ? best.cert : gap, iter);
    }

    // NT scalings, S^{-1}, and the Schur factorization. A numerical failure
    // here means the endgame floor was hit; fall back to the best snapshot.
    try {
      for (std::size_t b = 0; b < nb; ++b) {
        Wsc[b] = detail::nt_scaling(X[b], S[b]);
        Eigen::LLT<Eigen::MatrixXd> llt(S[b]);
        if (llt.info() != Eigen::Success) {
          Eigen::MatrixXd reg =
              S[b] + 1e-14 * (1.0 + S[b].trace()) *
                         Eigen::MatrixXd::Identity(S[b].rows(), S[b].cols());
          llt.compute(reg);
          if (llt.info() != Eigen::Success)
            throw NumericalError("sdp: slack block lost definiteness");
        }
        Sinv[b] = llt.solve(Eigen::MatrixXd::Identity(S[b].rows(), S[b].cols()));
        Sinv[b] = symmetrize(Sinv[b]);
      }

      schur.reset();
      for (std::size_t b = 0; b < nb; ++b) {
        const auto& blk = prob.blocks[b];
        for (std::size_t t = 0; t < blk.vars.size(); ++t)
          for (std::size_t u = t; u < blk.vars.size(); ++u)
            schur.add(blk.vars[t], blk.vars[u],
                      detail::sparse_pair_inner(blk.coeff[t], blk.coeff[u],
                                                Wsc[b]));
      }
      schur.factor();
    } catch (const NumericalError&) {
      if (best.valid && best.cert <= opts.tol) return result_from(best);
      throw SdpConvergenceError("sdp: Newton system near-singular",
                                best.valid ? best.lower : lower,
                                best.valid ? best.cert : gap, iter);
    }

    auto newton = [&](double sigma_mu, const std::vector<Eigen::MatrixXd>* corr,
                      std::vector<double>& dy_out,
                      std::vector<Eigen::MatrixXd>& dS_out,
                      std::vector<Eigen::MatrixXd>& dX_out) {
      for (int i = 0; i < k; ++i) h[i] = -rp[i];
      for (std::size_t b = 0; b < nb; ++b) {
        Rc[b] = sigma_mu * Sinv[b] - X[b];
        if (corr) Rc[b] -= (*corr)[b];
        Eigen::MatrixXd t = Rc[b] - Wsc[b] * Rd[b] * Wsc[b];
        const auto& blk = prob.blocks[b];
        for (std::size_t u = 0; u < blk.vars.size(); ++u)
          h[blk.vars[u]] += detail::sparse_inner(blk.coeff[u], t);
      }
      dy_out = schur.solve(h);
      for (std::size_t b = 0; b < nb; ++b) {
        const auto& blk = prob.blocks[b];
        dS_out[b] = Rd[b];
        for (std::size_t t = 0; t < blk.vars.size(); ++t)
          detail::sparse_add(dS_out[b], blk.coeff[t], dy_out[blk.vars[t]]);
        dX_out[b] = symmetrize(Rc[b] - Wsc[b] * dS_out[b] * Wsc[b]);
      }
    };

    // Predictor.
    newton(0.0, nullptr, dya, dSa, dXa);
#ifdef GME_SDP_PROBE
    if (trace) {
      double einf = 0, e1 = 0;
      std::vector<double> err(k, 0.0);
      for (int i = 0; i < k; ++i) err[i] = -rp[i];
      for (std::size_t b = 0; b < nb; ++b) {
        const auto& blk = prob.blocks[b];
        for (std::size_t t = 0; t < blk.vars.size(); ++t)
          err[blk.vars[t]] += detail::sparse_inner(blk.coeff[t], dXa[b]);
      }
      for (int i = 0; i < k; ++i) { einf = std::max(einf, std::abs(err[i])); e1 += std::abs(err[i]); }
      std::fprintf(stderr, "   probe: newton err linf=%.2e l1=%.2e\n", einf, e1);
    }
#endif
    double ax_aff = 1.0, as_aff = 1.0;
    for (std::size_t b = 0; b < nb; ++b) {
      ax_aff = std::min(ax_aff, detail::max_psd_step(X[b], dXa[b]));
      as_aff = std::min(as_aff, detail::max_psd_step(S[b], dSa[b]));
    }
    double comp_aff = 0.0;
    for (std::size_t b = 0; b < nb; ++b)
      comp_aff += ((X[b] + ax_aff * dXa[b]).array() *
                   (S[b] + as_aff * dSa[b]).array())
                      .sum();
    const double mu_aff = std::max(comp_aff, 0.0) / total_dim;
    double sigma = std::pow(mu_aff / mu, 3.0);
    // Without the second-order corrector the pure cube rule is too greedy;
    // keep a centering floor so steps stay long.
    sigma = opts.corrector ? std::clamp(sigma, 1e-8, 1.0)
                           : std::clamp(sigma, 0.05, 0.8);

    // Corrector.
    if (opts.corrector) {
      std::vector<Eigen::MatrixXd> corr(nb);
      for (std::size_t b = 0; b < nb; ++b)
        corr[b] = symmetrize(dXa[b] * dSa[b] * Sinv[b]);
      newton(sigma * mu, &corr, dy, dS, dX);
    } else {
      newton(sigma * mu, nullptr, dy, dS, dX);
    }

    auto step_pair = [&](const std::vector<Eigen::MatrixXd>& dX_c,
                         const std::vector<Eigen::MatrixXd>& dS_c) {
      double a_x = std::numeric_limits<double>::infinity();
      double a_s = std::numeric_limits<double>::infinity();
      for (std::size_t b = 0; b < nb; ++b) {
        a_x = std::min(a_x, detail::max_psd_step(X[b], dX_c[b]));
        a_s = std::min(a_s, detail::max_psd_step(S[b], dS_c[b]));
      }
      a_x = std::min(1.0, opts.step_fraction * a_x);
      a_s = std::min(1.0, opts.step_fraction * a_s);
      return std::pair<double, double>{a_x, a_s};
    };

    auto [ax, as] = step_pair(dX, dS);
    if (ax < 1e-3 && as < 1e-3) {
      // Off-center iterate rejected the combined direction; fall back to a
      // pure centering step, which always admits progress toward mu I.
      newton(mu, nullptr, dy, dS, dX);
      std::tie(ax, as) = step_pair(dX, dS);
    }
    last_ax = ax;
    last_as = as;
    if (!(ax > 0) || !(as > 0) || (ax < 1e-8 && as < 1e-8)) {
      ++stall_count;
      continue;
    }
    if (std::min(ax, as) < 1e-3)
      ++stall_count;
    else
      stall_count = 0;

    for (int i = 0; i < k; ++i) y[i] += as * dy[i];
    for (std::size_t b = 0; b < nb; ++b) {
      S[b] = symmetrize(S[b] + as * dS[b]);
      X[b] = symmetrize(X[b] + ax * dX[b]);
      if (prob.blocks[b].embedded_complex) {
        detail::project_embedded(S[b]);
        detail::project_embedded(X[b]);
      }
    }

  }
  // Unreachable: the loop exits via return or throw.
  throw NumericalError("sdp: internal iteration error");
}

}  // namespace gme::sdp
