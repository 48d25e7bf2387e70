// statekit.hpp
// Quantum-state representation and generation: density matrices,
// GHZ-diagonal parameter vectors, bipartitions, validity checks, white-noise
// mixing, GHZ-basis fidelities and partial transposition.
//
// Qubit convention: qubits are numbered 1..n; qubit 1 is the first tensor
// factor and maps to the most significant bit of a computational-basis index.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "gmedetect/common.hpp"

namespace gme {

using Complex = std::complex<double>;

// Tolerances used by the validity checks.
inline constexpr double kAlgebraicTol = 1e-12;  // Hermiticity, trace
inline constexpr double kSpectralTol = 1e-10;   // PSD slack
inline constexpr int kMaxDenseQubits = 8;       // dense-representation cap

inline bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

inline int qubits_for_dim(Eigen::Index dim) {
  if (dim < 2 || !is_power_of_two(static_cast<std::size_t>(dim)))
    throw DataError("matrix dimension is not a power of two >= 2: " +
                    std::to_string(dim));
  int n = 0;
  while ((Eigen::Index{1} << n) < dim) ++n;
  return n;
}

// ---------------------------------------------------------------------------
// DensityMatrix: complex square matrix of dimension 2^n. Construction checks
// only the structural constraint (power-of-two dimension, dense cap); the
// numeric invariants are checked by validate().
class DensityMatrix {
 public:
  explicit DensityMatrix(Eigen::MatrixXcd m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols())
      throw DataError("density matrix must be square");
    n_ = qubits_for_dim(m_.rows());
    if (n_ > kMaxDenseQubits)
      throw CapacityError("dense representation capped at " +
                          std::to_string(kMaxDenseQubits) + " qubits, got " +
                          std::to_string(n_));
  }

  int qubits() const { return n_; }
  Eigen::Index dim() const { return m_.rows(); }
  const Eigen::MatrixXcd& matrix() const { return m_; }

  static DensityMatrix maximally_mixed(int n) {
    Eigen::Index d = Eigen::Index{1} << n;
    return DensityMatrix(Eigen::MatrixXcd::Identity(d, d) / double(d));
  }

  static DensityMatrix pure(const Eigen::VectorXcd& psi) {
    Eigen::VectorXcd v = psi / psi.norm();
    return DensityMatrix(v * v.adjoint());
  }

 private:
  Eigen::MatrixXcd m_;
  int n_;
};

struct ValidityReport {
  double hermiticity_residual = 0.0;  // max |rho_ij - conj(rho_ji)|
  double trace_residual = 0.0;        // |tr(rho) - 1|
  double min_eigenvalue = 0.0;        // of the Hermitian part
  bool hermitian() const { return hermiticity_residual <= kAlgebraicTol; }
  bool unit_trace() const { return trace_residual <= kAlgebraicTol; }
  bool psd() const { return min_eigenvalue >= -kSpectralTol; }
  bool pass() const { return hermitian() && unit_trace() && psd(); }
};

inline ValidityReport validate(const Eigen::MatrixXcd& m) {
  if (m.rows() != m.cols() || !is_power_of_two(static_cast<std::size_t>(m.rows())))
    throw DataError("validate: dimension must be a square power of two");
  ValidityReport r;
  r.hermiticity_residual = (m - m.adjoint()).cwiseAbs().maxCoeff();
  r.trace_residual = std::abs(m.trace() - Complex(1.0, 0.0));
  Eigen::MatrixXcd herm = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(herm,
                                                     Eigen::EigenvaluesOnly);
  r.min_eigenvalue = es.eigenvalues().minCoeff();
  return r;
}

inline ValidityReport validate(const DensityMatrix& rho) {
  return validate(rho.matrix());
}

// ---------------------------------------------------------------------------
// GhzDiagonalSpec: (lambda_i, mu_i) parameters of an n-qubit GHZ-diagonal
// state. lambda appears twice on the computational-basis diagonal; mu sits on
// the anti-diagonal. Complex mu is an extension flag; the default is real.
struct GhzDiagonalSpec {
  int n = 0;
  std::vector<double> lambdas;  // 2^{n-1}
  std::vector<Complex> mus;     // 2^{n-1}

  std::size_t half_dim() const { return std::size_t{1} << (n - 1); }
  bool complex_mode() const {
    for (const auto& m : mus)
      if (m.imag() != 0.0) return true;
    return false;
  }

  // Invariants: 2*sum(lambda) = 1 and lambda_i >= |mu_i| for all i.
  void check() const {
    if (n < 2) throw DataError("GhzDiagonalSpec: need n >= 2");
    if (lambdas.size() != half_dim() || mus.size() != half_dim())
      throw DataError("GhzDiagonalSpec: parameter vectors must have length 2^(n-1)");
    double total = 0.0;
    for (double l : lambdas) total += l;
    if (std::abs(2.0 * total - 1.0) > kAlgebraicTol)
      throw DataError("GhzDiagonalSpec: normalization 2*sum(lambda) != 1");
    for (std::size_t i = 0; i < lambdas.size(); ++i)
      if (lambdas[i] < std::abs(mus[i]) - kAlgebraicTol)
        throw DataError("GhzDiagonalSpec: PSD condition lambda_i >= |mu_i| violated");
  }
};

// ---------------------------------------------------------------------------
// Bipartition: a nonempty proper subset alpha of the qubits {1..n}. The
// canonical form excludes qubit n so each unordered split appears once.
class Bipartition {
 public:
  // Canonicalize: if alpha contains qubit n, replace it with its complement.
  static Bipartition canonical(int n, uint32_t qubit_mask) {
    check_mask(n, qubit_mask);
    uint32_t full = (n == 32) ? ~uint32_t{0} : ((uint32_t{1} << n) - 1);
    if (qubit_mask & (uint32_t{1} << (n - 1))) qubit_mask = full & ~qubit_mask;
    return Bipartition(n, qubit_mask);
  }

  // Diagnostic constructor: keeps alpha as given (may include qubit n or even
  // all qubits, in which case partial transposition is the full transpose).
  static Bipartition raw(int n, uint32_t qubit_mask) {
    if (n < 1 || n > 31) throw DataError("Bipartition: unsupported qubit count");
    uint32_t full = (uint32_t{1} << n) - 1;
    if (qubit_mask == 0 || (qubit_mask & ~full))
      throw DataError("Bipartition: alpha must be a nonempty subset of {1..n}");
    return Bipartition(n, qubit_mask);
  }

  int n() const { return n_; }
  // Bit q-1 set means qubit q is in alpha.
  uint32_t qubit_mask() const { return mask_; }
  int size() const { return std::popcount(mask_); }
  bool contains(int qubit) const { return mask_ & (uint32_t{1} << (qubit - 1)); }
  bool is_canonical() const { return !contains(n_); }

  std::vector<int> qubits() const {
    std::vector<int> out;
    for (int q = 1; q <= n_; ++q)
      if (contains(q)) out.push_back(q);
    return out;
  }

  // Mask over basis-index bits: qubit q maps to index bit (n - q).
  uint64_t index_bit_mask() const {
    uint64_t m = 0;
    for (int q = 1; q <= n_; ++q)
      if (contains(q)) m |= uint64_t{1} << (n_ - q);
    return m;
  }

  std::string to_string() const {
    std::string s;
    for (int q = 1; q <= n_; ++q)
      if (contains(q)) s += std::to_string(q);
    s += "|";
    for (int q = 1; q <= n_; ++q)
      if (!contains(q)) s += std::to_string(q);
    return s;
  }

  friend bool operator==(const Bipartition& a, const Bipartition& b) {
    return a.n_ == b.n_ && a.mask_ == b.mask_;
  }

 private:
  Bipartition(int n, uint32_t mask) : n_(n), mask_(mask) {}
  static void check_mask(int n, uint32_t mask) {
    if (n < 2 || n > 31) throw DataError("Bipartition: need 2 <= n <= 31");
    uint32_t full = (uint32_t{1} << n) - 1;
    if (mask == 0 || mask == full || (mask & ~full))
      throw DataError("Bipartition: alpha must be a nonempty proper subset");
  }
  int n_;
  uint32_t mask_;
};

// All 2^{n-1} - 1 canonical bipartitions of n qubits.
inline std::vector<Bipartition> enumerate_bipartitions(int n) {
  if (n < 2) throw DataError("enumerate_bipartitions: need n >= 2");
  if (n > 31) throw CapacityError("enumerate_bipartitions: n too large");
  std::vector<Bipartition> out;
  uint32_t limit = uint32_t{1} << (n - 1);
  out.reserve(limit - 1);
  for (uint32_t m = 1; m < limit; ++m)
    out.push_back(Bipartition::canonical(n, m));
  return out;
}

// ---------------------------------------------------------------------------
// GHZ-diagonal state assembly (lambda on the diagonal, mu on the
// anti-diagonal, mirrored around the center).
inline DensityMatrix to_density_matrix(const GhzDiagonalSpec& spec) {
  spec.check();
  const Eigen::Index d = Eigen::Index{1} << spec.n;
  const Eigen::Index h = d / 2;
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(d, d);
  for (Eigen::Index j = 0; j < h; ++j) {
    m(j, j) = spec.lambdas[static_cast<std::size_t>(j)];
    m(d - 1 - j, d - 1 - j) = spec.lambdas[static_cast<std::size_t>(j)];
    m(j, d - 1 - j) = spec.mus[static_cast<std::size_t>(j)];
    m(d - 1 - j, j) = std::conj(spec.mus[static_cast<std::size_t>(j)]);
  }
  return DensityMatrix(std::move(m));
}

// ---------------------------------------------------------------------------
// White noise: p*rho + (1-p)*I/2^n, in matrix space and in spec space.
inline DensityMatrix add_white_noise(const DensityMatrix& rho, double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw DataError("add_white_noise: p must be in [0,1]");
  const Eigen::Index d = rho.dim();
  Eigen::MatrixXcd out =
      p * rho.matrix() +
      ((1.0 - p) / double(d)) * Eigen::MatrixXcd::Identity(d, d);
  return DensityMatrix(std::move(out));
}

inline GhzDiagonalSpec add_white_noise(const GhzDiagonalSpec& spec, double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw DataError("add_white_noise: p must be in [0,1]");
  spec.check();
  GhzDiagonalSpec out = spec;
  const double floor = (1.0 - p) / double(std::size_t{1} << spec.n);
  for (auto& l : out.lambdas) l = p * l + floor;
  for (auto& m : out.mus) m *= p;
  return out;
}

// ---------------------------------------------------------------------------
// Fidelity with the GHZ-basis state (|i> + sign*|~i>)/sqrt(2), where ~i is
// the bitwise complement of i over n bits and 0 <= i < 2^{n-1}.
inline double ghz_fidelity(const DensityMatrix& rho, Eigen::Index basis_index,
                           int sign) {
  const Eigen::Index d = rho.dim();
  if (basis_index < 0 || basis_index >= d / 2)
    throw DataError("ghz_fidelity: basis index out of range");
  if (sign != 1 && sign != -1) throw DataError("ghz_fidelity: sign must be +-1");
  const Eigen::Index i = basis_index;
  const Eigen::Index j = d - 1 - i;  // bitwise complement
  const auto& m = rho.matrix();
  const double val =
      0.5 * (m(i, i).real() + m(j, j).real() + 2.0 * sign * m(i, j).real());
  return val;
}

// ---------------------------------------------------------------------------
// Partial transpose: swap the alpha-subsystem components of the row and
// column indices. Preserves Hermiticity and trace; involutive.
inline Eigen::MatrixXcd partial_transpose(const Eigen::MatrixXcd& m, int n,
                                          const Bipartition& alpha) {
  if (alpha.n() != n)
    throw DataError("partial_transpose: bipartition qubit count mismatch");
  if (m.rows() != (Eigen::Index{1} << n) || m.cols() != m.rows())
    throw DataError("partial_transpose: dimension mismatch");
  const uint64_t mask = alpha.index_bit_mask();
  Eigen::MatrixXcd out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const uint64_t ia = static_cast<uint64_t>(i) & mask;
    const uint64_t ir = static_cast<uint64_t>(i) & ~mask;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const uint64_t ja = static_cast<uint64_t>(j) & mask;
      const uint64_t jr = static_cast<uint64_t>(j) & ~mask;
      out(static_cast<Eigen::Index>(ir | ja), static_cast<Eigen::Index>(jr | ia)) =
          m(i, j);
    }
  }
  return out;
}

inline Eigen::MatrixXcd partial_transpose(const DensityMatrix& rho,
                                          const Bipartition& alpha) {
  return partial_transpose(rho.matrix(), rho.qubits(), alpha);
}

// ---------------------------------------------------------------------------
// Random generation.

// Rank-r Hilbert-Schmidt-induced mixed state: G G^dagger / tr with G a
// 2^n x r matrix of independent standard complex Gaussians.
inline DensityMatrix random_density_matrix(int n, int rank, uint64_t seed) {
  if (n < 1) throw DataError("random_density_matrix: need n >= 1");
  if (n > kMaxDenseQubits)
    throw CapacityError("random_density_matrix: dense cap is n <= " +
                        std::to_string(kMaxDenseQubits));
  const Eigen::Index d = Eigen::Index{1} << n;
  if (rank < 1 || rank > d)
    throw DataError("random_density_matrix: rank must be in [1, 2^n]");
  Rng rng(seed);
  Eigen::MatrixXcd g(d, rank);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index k = 0; k < rank; ++k) g(i, k) = rng.normal_complex();
  Eigen::MatrixXcd rho = g * g.adjoint();
  rho /= rho.trace().real();
  return DensityMatrix(std::move(rho));
}

// Haar-random pure state on dimension d (used by tests and the biseparable
// sampler): normalized vector of standard complex Gaussians.
inline Eigen::VectorXcd random_pure_state(Eigen::Index d, Rng& rng) {
  Eigen::VectorXcd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = rng.normal_complex();
  v /= v.norm();
  return v;
}

// Balanced GHZ-diagonal sampling. lambda ~ Dirichlet(1,..,1)/2 over 2^{n-1}
// components, mu_i ~ U[-lambda_i, lambda_i]; the target label is then
// enforced constructively:
//   -1: pick an index, move diagonal mass onto it until lambda_i > 1/4 and
//       resample |mu_i| in (w_i, lambda_i] so the margin clears the label
//       threshold;
//   +1: clamp every |mu_i| to at most w_i = 1/2 - lambda_i.
// The resulting analytic label always equals target_label.
inline GhzDiagonalSpec random_ghz_diagonal(int n, int target_label,
                                           uint64_t seed) {
  if (n < 2) throw DataError("random_ghz_diagonal: need n >= 2");
  if (target_label != -1 && target_label != 1)
    throw DataError("random_ghz_diagonal: target label must be -1 or +1");
  constexpr double kThreshold = 1e-6;  // shared label threshold

  Rng rng(seed);
  const std::size_t half = std::size_t{1} << (n - 1);
  GhzDiagonalSpec spec;
  spec.n = n;
  spec.lambdas = rng.dirichlet(half);
  for (auto& l : spec.lambdas) l *= 0.5;
  spec.mus.resize(half);
  for (std::size_t i = 0; i < half; ++i)
    spec.mus[i] = rng.uniform(-spec.lambdas[i], spec.lambdas[i]);

  if (target_label == +1) {
    for (std::size_t i = 0; i < half; ++i) {
      const double w = 0.5 - spec.lambdas[i];
      if (std::abs(spec.mus[i]) > w)
        spec.mus[i] = (spec.mus[i].real() < 0 ? -w : w);
    }
  } else {
    const std::size_t pick = rng.below(half);
    double li = spec.lambdas[pick];
    if (li <= 0.25 + 1e-3) {
      // Move diagonal mass onto the picked component.
      const double excess = rng.uniform(1e-3, 0.25);
      const double li_new = 0.25 + excess;
      const double scale = (0.5 - li_new) / (0.5 - li);
      for (std::size_t k = 0; k < half; ++k) {
        if (k == pick) continue;
        spec.lambdas[k] *= scale;
        spec.mus[k] *= scale;
      }
      spec.lambdas[pick] = li_new;
      li = li_new;
    }
    const double w = 0.5 - li;  // li > 1/4 so w < li
    double magnitude = 0.0;
    do {
      magnitude = w + rng.uniform_pos() * (li - w);
    } while (magnitude - w <= kThreshold);
    spec.mus[pick] = rng.pick_sign() * magnitude;
  }
  spec.check();
  return spec;
}

// ---------------------------------------------------------------------------
// Serialization. Dense matrices are little-endian float64 interleaved
// (re, im), row-major; GhzDiagonalSpec is (n, lambda-vector, mu-vector).

inline void write_spec(ByteWriter& w, const GhzDiagonalSpec& spec) {
  const bool cx = spec.complex_mode();
  w.u16(static_cast<uint16_t>(spec.n));
  w.u8(cx ? 1 : 0);
  for (double l : spec.lambdas) w.f64(l);
  for (const auto& m : spec.mus) {
    w.f64(m.real());
    if (cx) w.f64(m.imag());
  }
}

inline GhzDiagonalSpec read_spec(ByteReader& r) {
  GhzDiagonalSpec spec;
  spec.n = r.u16();
  if (spec.n < 2 || spec.n > 40) throw DataError("spec: bad qubit count");
  const bool cx = r.u8() != 0;
  const std::size_t half = std::size_t{1} << (spec.n - 1);
  spec.lambdas.resize(half);
  spec.mus.resize(half);
  for (auto& l : spec.lambdas) l = r.f64();
  for (auto& m : spec.mus) {
    const double re = r.f64();
    const double im = cx ? r.f64() : 0.0;
    m = Complex(re, im);
  }
  return spec;
}

inline void write_matrix(ByteWriter& w, const Eigen::MatrixXcd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      w.f64(m(i, j).real());
      w.f64(m(i, j).imag());
    }
}

inline Eigen::MatrixXcd read_matrix(ByteReader& r, Eigen::Index dim) {
  Eigen::MatrixXcd m(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) {
      const double re = r.f64();
      const double im = r.f64();
      m(i, j) = Complex(re, im);
    }
  return m;
}

// Spec container ("GSPC"): a list of GHZ-diagonal specs sharing one n.
inline std::string write_spec_container(const std::vector<GhzDiagonalSpec>& specs) {
  if (specs.empty()) throw DataError("spec container: empty");
  ByteWriter w;
  w.magic("GSPC");
  w.u32(1);
  w.u64(specs.size());
  for (const auto& s : specs) {
    if (s.n != specs.front().n)
      throw DataError("spec container: mixed qubit counts");
    write_spec(w, s);
  }
  return w.data();
}

inline std::vector<GhzDiagonalSpec> read_spec_container(const std::string& bytes) {
  ByteReader r(bytes);
  r.expect_magic("GSPC", "spec container");
  if (r.u32() != 1) throw DataError("spec container: unsupported version");
  const uint64_t count = r.u64();
  std::vector<GhzDiagonalSpec> out;
  out.reserve(count);
  for (uint64_t i = 0; i < count; ++i) out.push_back(read_spec(r));
  return out;
}

// Dense-state container ("GMDM"): a list of density matrices sharing one n.
inline std::string write_state_container(const std::vector<Eigen::MatrixXcd>& states,
                                         int n) {
  if (states.empty()) throw DataError("state container: empty");
  ByteWriter w;
  w.magic("GMDM");
  w.u32(1);
  w.u16(static_cast<uint16_t>(n));
  w.u64(states.size());
  const Eigen::Index d = Eigen::Index{1} << n;
  for (const auto& m : states) {
    if (m.rows() != d || m.cols() != d)
      throw DataError("state container: dimension mismatch");
    write_matrix(w, m);
  }
  return w.data();
}

struct StateContainer {
  int n = 0;
  std::vector<Eigen::MatrixXcd> states;
};

inline StateContainer read_state_container(const std::string& bytes) {
  ByteReader r(bytes);
  r.expect_magic("GMDM", "state container");
  if (r.u32() != 1) throw DataError("state container: unsupported version");
  StateContainer c;
  c.n = r.u16();
  if (c.n < 1 || c.n > kMaxDenseQubits) throw DataError("state container: bad n");
  const uint64_t count = r.u64();
  const Eigen::Index d = Eigen::Index{1} << c.n;
  c.states.reserve(count);
  for (uint64_t i = 0; i < count; ++i) c.states.push_back(read_matrix(r, d));
  return c;
}

}  // namespace gme
