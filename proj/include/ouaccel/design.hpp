#pragma once

// Construction and certification of Ornstein-Uhlenbeck samplers for a
// Gaussian target N(0, S^-1). A drift/diffusion pair (A, D) leaves the
// target invariant iff A = -(D + J) S with J antisymmetric and D positive
// semidefinite; the families below realize the classical rate hierarchy
//   min eig(S)  <=  N/Tr(S^-1)  <=  Tr(S)/N  <=  max eig(S)
// with the last value attained by a degenerate (hypoelliptic) diffusion.

#include <Eigen/Dense>

#include <ouaccel/matrixcore.hpp>
#include <ouaccel/tolerances.hpp>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ouaccel {

// Symmetric positive definite precision matrix with cached spectral data.
template <typename Scalar = double>
class PrecisionMatrix {
 public:
  explicit PrecisionMatrix(const MatrixX<Scalar>& m) {
    detail::require_square_finite(m, "PrecisionMatrix");
    asymmetry_ = (m - m.transpose()).norm();
    if (asymmetry_ > Scalar(tol::symmetry_rel) * m.norm()) {
      std::ostringstream os;
      os << "PrecisionMatrix: input is not symmetric, |M - M^T| = " << asymmetry_;
      throw std::invalid_argument(os.str());
    }
    const auto eig = symmetric_eig(Scalar(0.5) * (m + m.transpose()));
    if (eig.values(0) <= Scalar(0)) {
      std::ostringstream os;
      os << "PrecisionMatrix: not positive definite, smallest eigenvalue = " << eig.values(0);
      throw std::domain_error(os.str());
    }
    values_ = eig.values;
    vectors_ = eig.vectors;
    s_ = vectors_ * values_.asDiagonal() * vectors_.transpose();
    s_ = (Scalar(0.5) * (s_ + s_.transpose())).eval();
    const VectorX<Scalar> root = values_.array().sqrt();
    sqrt_ = vectors_ * root.asDiagonal() * vectors_.transpose();
    inv_sqrt_ = vectors_ * root.cwiseInverse().asDiagonal() * vectors_.transpose();
    inverse_ = vectors_ * values_.cwiseInverse().asDiagonal() * vectors_.transpose();
    sqrt_ = (Scalar(0.5) * (sqrt_ + sqrt_.transpose())).eval();
    inv_sqrt_ = (Scalar(0.5) * (inv_sqrt_ + inv_sqrt_.transpose())).eval();
    inverse_ = (Scalar(0.5) * (inverse_ + inverse_.transpose())).eval();
  }

  int n() const { return static_cast<int>(s_.rows()); }
  const MatrixX<Scalar>& matrix() const { return s_; }
  const MatrixX<Scalar>& sqrt_s() const { return sqrt_; }
  const MatrixX<Scalar>& inv_sqrt_s() const { return inv_sqrt_; }
  const MatrixX<Scalar>& inverse() const { return inverse_; }
  const VectorX<Scalar>& eigenvalues() const { return values_; }
  const MatrixX<Scalar>& eigenvectors() const { return vectors_; }
  Scalar min_eig() const { return values_(0); }
  Scalar max_eig() const { return values_(n() - 1); }
  Scalar log_det() const { return values_.array().log().sum(); }
  Scalar asymmetry_residual() const { return asymmetry_; }

 private:
  MatrixX<Scalar> s_, sqrt_, inv_sqrt_, inverse_, vectors_;
  VectorX<Scalar> values_;
  Scalar asymmetry_;
};

enum class Family {
  reversible_identity,
  reversible_optimal,
  elliptic_optimal,
  hypoelliptic_optimal,
  custom,
};

inline const char* family_name(Family f) {
  switch (f) {
    case Family::reversible_identity: return "reversible_identity";
    case Family::reversible_optimal: return "reversible_optimal";
    case Family::elliptic_optimal: return "elliptic_optimal";
    case Family::hypoelliptic_optimal: return "hypoelliptic_optimal";
    case Family::custom: return "custom";
  }
  return "unknown";
}

inline Family family_from_string(const std::string& name) {
  for (Family f : {Family::reversible_identity, Family::reversible_optimal,
                   Family::elliptic_optimal, Family::hypoelliptic_optimal, Family::custom})
    if (name == family_name(f)) return f;
  throw std::invalid_argument(
      "unknown family '" + name +
      "'; valid: reversible_identity, reversible_optimal, elliptic_optimal, "
      "hypoelliptic_optimal, custom");
}

template <typename Scalar = double>
struct SamplerDesign {
  int n = 0;
  Family family = Family::custom;
  MatrixX<Scalar> a;  // drift
  MatrixX<Scalar> d;  // diffusion, PSD with Tr D <= n
  MatrixX<Scalar> j;  // antisymmetric certificate, A = -(D + J) S
  Scalar rate = 0;    // closed-form spectral gap of the family
  Scalar invariance_residual = 0;  // ||A S^-1 + S^-1 A^T + 2 D||_F
  Scalar antisymmetry_residual = 0;  // ||J + J^T||_F
};

template <typename Scalar = double>
struct MembershipReport {
  bool member = false;
  MatrixX<Scalar> j;        // antisymmetric part of -A S^-1 - D
  Scalar residual = 0;      // ||A S^-1 + S^-1 A^T + 2 D||_F
  Scalar min_d_eigenvalue = 0;
  Scalar trace_d = 0;
};

// Does (A, D) leave N(0, S^-1) invariant with an admissible diffusion?
template <typename Scalar>
MembershipReport<Scalar> check_membership(const MatrixX<Scalar>& a, const MatrixX<Scalar>& d,
                                          const PrecisionMatrix<Scalar>& s) {
  detail::require_square_finite(a, "check_membership(A)");
  detail::require_square_finite(d, "check_membership(D)");
  const int n = s.n();
  if (a.rows() != n || d.rows() != n)
    throw std::invalid_argument("check_membership: dimension mismatch with S");
  MembershipReport<Scalar> out;
  const MatrixX<Scalar> asi = a * s.inverse();
  out.residual = (asi + asi.transpose() + Scalar(2) * d).norm();
  const MatrixX<Scalar> j_raw = -asi - d;
  out.j = Scalar(0.5) * (j_raw - j_raw.transpose());
  const auto d_eig = symmetric_eig(Scalar(0.5) * (d + d.transpose()));
  out.min_d_eigenvalue = d_eig.values(0);
  out.trace_d = d.trace();
  out.member = out.residual <= Scalar(tol::membership_rel) * s.matrix().norm() &&
               out.min_d_eigenvalue >= -Scalar(tol::psd_negative_rel) * d.norm() &&
               out.trace_d <= Scalar(n) + Scalar(tol::trace_budget_abs);
  return out;
}

template <typename Scalar = double>
struct HypoellipticityReport {
  bool hypoelliptic = false;
  int rank = 0;
};

// Kalman rank condition: span{F, A F, ..., A^{N-1} F} must be everything,
// equivalently Ker D contains no nontrivial A^T-invariant subspace.
// Computed by staircase deflation, which keeps every rank decision local;
// the flat Krylov block matrix loses rank in double precision once N grows
// past roughly 20 even for structurally controllable pairs.
template <typename Scalar>
HypoellipticityReport<Scalar> hypoellipticity_check(const MatrixX<Scalar>& a,
                                                    const MatrixX<Scalar>& d) {
  detail::require_square_finite(a, "hypoellipticity_check(A)");
  const int n = static_cast<int>(a.rows());
  if (d.rows() != n) throw std::invalid_argument("hypoellipticity_check: dimension mismatch");
  const MatrixX<Scalar> f = psd_factor(d);
  if (f.cols() == 0) return {n == 0, 0};
  MatrixX<Scalar> work = a;
  MatrixX<Scalar> cur = f;  // coupling into the not-yet-reached block
  // Rank cut per step: relative to the step's own leading singular value, with
  // an absolute floor above the rounding debris the similarity updates deposit
  // in blocks that are zero in exact arithmetic.
  const Scalar floor_abs = Scalar(64) * Scalar(n) * std::numeric_limits<Scalar>::epsilon() *
                           std::max(a.norm(), f.norm());
  int reached = 0;
  while (reached < n) {
    Eigen::JacobiSVD<MatrixX<Scalar>> svd(cur, Eigen::ComputeFullU);
    const auto& sv = svd.singularValues();
    const Scalar cut = std::max(Scalar(tol::kalman_rank_rel) * sv(0), floor_abs);
    int step = 0;
    for (int i = 0; i < sv.size(); ++i)
      if (sv(i) > cut) ++step;
    if (step == 0) break;
    const int tail = n - reached;
    MatrixX<Scalar> g = MatrixX<Scalar>::Identity(n, n);
    g.block(reached, reached, tail, tail) = svd.matrixU();
    work = g.transpose() * work * g;
    reached += step;
    if (reached >= n) break;
    cur = work.block(reached, reached - step, n - reached, step);
  }
  return {reached == n, reached};
}

template <typename Scalar = double>
struct EqualDiagonalBasis {
  MatrixX<Scalar> p;   // orthonormal, diag(P^T M P) all equal to Tr M / N
  Scalar residual = 0; // max deviation of the achieved diagonal from the mean
  int rotations = 0;   // plane rotations used (at most N-1)
};

// Orthonormal basis in which a symmetric matrix has constant diagonal
// (Schur-Horn construction: start from the eigenbasis, then one closed-form
// Givens rotation per coordinate pins its diagonal entry to the mean).
template <typename Scalar>
EqualDiagonalBasis<Scalar> equal_diagonal_basis(const MatrixX<Scalar>& m) {
  const auto eig = symmetric_eig(m);
  const int n = static_cast<int>(m.rows());
  const Scalar mean = m.trace() / Scalar(n);
  EqualDiagonalBasis<Scalar> out;
  out.p = eig.vectors;
  MatrixX<Scalar> b = MatrixX<Scalar>::Zero(n, n);
  b.diagonal() = eig.values;
  const Scalar stop = Scalar(1e-13) * (Scalar(1) + std::abs(mean));
  for (int iter = 0; iter < n - 1; ++iter) {
    int imax = 0, jmin = 0;
    for (int i = 1; i < n; ++i) {
      if (b(i, i) > b(imax, imax)) imax = i;
      if (b(i, i) < b(jmin, jmin)) jmin = i;
    }
    if (b(imax, imax) - mean <= stop && mean - b(jmin, jmin) <= stop) break;
    const int i = imax, j = jmin;
    const Scalar qa = b(j, j) - mean, qb = b(i, j), qc = b(i, i) - mean;
    const Scalar disc = std::max(qb * qb - qa * qc, Scalar(0));
    const Scalar sq = std::sqrt(disc);
    const Scalar qq = -(qb + std::copysign(sq, qb));
    const Scalar r1 = qq / qa, r2 = qc / qq;
    const Scalar t = (std::abs(r1) < std::abs(r2)) ? r1 : r2;
    const Scalar c = Scalar(1) / std::sqrt(Scalar(1) + t * t), sn = t * c;
    // P <- P G, B <- G^T B G with G the rotation in the (i, j) plane
    const VectorX<Scalar> pi = out.p.col(i), pj = out.p.col(j);
    out.p.col(i) = c * pi + sn * pj;
    out.p.col(j) = -sn * pi + c * pj;
    const VectorX<Scalar> bi = b.col(i), bj = b.col(j);
    b.col(i) = c * bi + sn * bj;
    b.col(j) = -sn * bi + c * bj;
    const VectorX<Scalar> ri = b.row(i), rj = b.row(j);
    b.row(i) = c * ri.transpose() + sn * rj.transpose();
    b.row(j) = -sn * ri.transpose() + c * rj.transpose();
    b(i, i) = mean;  // exact by construction of t
    ++out.rotations;
  }
  for (int jcol = 0; jcol < n; ++jcol) {
    VectorX<Scalar> col = out.p.col(jcol);
    if (col(detail::dominant_index<Scalar>(col)) < Scalar(0)) out.p.col(jcol) = -col;
  }
  const MatrixX<Scalar> achieved = out.p.transpose() * m * out.p;
  out.residual = (achieved.diagonal().array() - mean).abs().maxCoeff();
  return out;
}

// Antisymmetric matrix with entries (nu_k + nu_l)/(nu_k - nu_l), zero diagonal.
template <typename Scalar>
MatrixX<Scalar> jhat(const VectorX<Scalar>& nu) {
  const int n = static_cast<int>(nu.size());
  const Scalar nu_max = nu.maxCoeff();
  for (int k = 0; k < n; ++k) {
    if (!(nu(k) > Scalar(0))) throw std::invalid_argument("jhat: nu entries must be positive");
    for (int l = k + 1; l < n; ++l)
      if (std::abs(nu(k) - nu(l)) < Scalar(tol::nu_distinct_rel) * nu_max) {
        std::ostringstream os;
        os << "jhat: nu entries " << k << " and " << l << " are not distinct enough";
        throw std::invalid_argument(os.str());
      }
  }
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(n, n);
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l)
      if (k != l) out(k, l) = (nu(k) + nu(l)) / (nu(k) - nu(l));
  return out;
}

template <typename Scalar = double>
MatrixX<Scalar> jhat(int n) {
  VectorX<Scalar> nu(n);
  for (int k = 0; k < n; ++k) nu(k) = Scalar(n + k + 1);
  return jhat(nu);
}

// Defect of the commutator identity Q J - J Q = D Q + Q D - 2 Q that the
// nu-ratio construction satisfies (for D with unit diagonal and
// J = D o [(nu_k+nu_l)/(nu_k-nu_l)]).
template <typename Scalar>
Scalar commutator_identity_check(const MatrixX<Scalar>& q, const MatrixX<Scalar>& jtilde,
                                 const MatrixX<Scalar>& d) {
  detail::require_square_finite(q, "commutator_identity_check(Q)");
  return (q * jtilde - jtilde * q - (d * q + q * d - Scalar(2) * q)).norm();
}

template <typename Scalar = double>
struct DesignOptions {
  MatrixX<Scalar> d_override;       // for Family::custom
  bool degenerate_rank = false;     // spread D over the full top eigenspace
};

namespace detail {

// Jtilde with rho(-(Dtilde + Jtilde)) = Tr(Dtilde)/N: transform to the
// equal-diagonal basis, apply the nu-ratio weights entrywise, transform back.
template <typename Scalar>
MatrixX<Scalar> make_jtilde(const MatrixX<Scalar>& dtilde) {
  const int n = static_cast<int>(dtilde.rows());
  const Scalar tau = dtilde.trace() / Scalar(n);
  if (!(tau > Scalar(0)) || n == 1) return MatrixX<Scalar>::Zero(n, n);
  const MatrixX<Scalar> dbar = dtilde / tau;
  const auto basis = equal_diagonal_basis(dbar);
  MatrixX<Scalar> bbar = basis.p.transpose() * dbar * basis.p;
  bbar = (Scalar(0.5) * (bbar + bbar.transpose())).eval();
  const MatrixX<Scalar> ratios = jhat<Scalar>(n);
  MatrixX<Scalar> k = MatrixX<Scalar>::Zero(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      if (r != c) k(r, c) = bbar(r, c) * ratios(r, c);
  MatrixX<Scalar> jt = tau * (basis.p * k * basis.p.transpose());
  return Scalar(0.5) * (jt - jt.transpose());
}

}  // namespace detail

template <typename Scalar>
SamplerDesign<Scalar> build_design(const PrecisionMatrix<Scalar>& s, Family family,
                                   const DesignOptions<Scalar>& opts = {}) {
  const int n = s.n();
  SamplerDesign<Scalar> out;
  out.n = n;
  out.family = family;
  const MatrixX<Scalar> eye = MatrixX<Scalar>::Identity(n, n);
  MatrixX<Scalar> jt;
  switch (family) {
    case Family::reversible_identity: {
      out.d = eye;
      jt = MatrixX<Scalar>::Zero(n, n);
      out.a = -s.matrix();
      out.rate = s.min_eig();
      break;
    }
    case Family::reversible_optimal: {
      const Scalar c = Scalar(n) / s.inverse().trace();
      out.d = c * s.inverse();
      jt = MatrixX<Scalar>::Zero(n, n);
      out.a = -(out.d * s.matrix());
      out.rate = c;
      break;
    }
    case Family::elliptic_optimal: {
      out.d = eye;
      jt = detail::make_jtilde<Scalar>(s.matrix());  // Dtilde = S exactly for D = I
      out.a = -(out.d * s.matrix()) - s.inv_sqrt_s() * (jt * s.sqrt_s());
      out.rate = s.matrix().trace() / Scalar(n);
      break;
    }
    case Family::hypoelliptic_optimal: {
      int m = 1;
      if (opts.degenerate_rank) {
        m = 0;
        for (int i = 0; i < n; ++i)
          if (s.eigenvalues()(i) >= s.max_eig() * (Scalar(1) - Scalar(1e-10))) ++m;
      }
      out.d = MatrixX<Scalar>::Zero(n, n);
      for (int k = 0; k < m; ++k) {
        VectorX<Scalar> v = s.eigenvectors().col(n - 1 - k);
        v /= v.norm();
        out.d += (Scalar(n) / Scalar(m)) * (v * v.transpose());
      }
      out.d = (Scalar(0.5) * (out.d + out.d.transpose())).eval();
      const MatrixX<Scalar> dtilde = s.sqrt_s() * out.d * s.sqrt_s();
      jt = detail::make_jtilde<Scalar>(dtilde);
      out.a = -(out.d * s.matrix()) - s.inv_sqrt_s() * (jt * s.sqrt_s());
      out.rate = s.max_eig();
      break;
    }
    case Family::custom: {
      if (opts.d_override.rows() != n || opts.d_override.cols() != n)
        throw std::invalid_argument("build_design: custom family requires an n x n d_override");
      detail::require_square_finite(opts.d_override, "build_design(d_override)");
      const MatrixX<Scalar> d = Scalar(0.5) * (opts.d_override + opts.d_override.transpose());
      const auto d_eig = symmetric_eig(d);
      if (d_eig.values(0) < -Scalar(tol::psd_negative_rel) * d.norm())
        throw std::domain_error("build_design: d_override is not positive semidefinite");
      if (d.trace() > Scalar(n) + Scalar(tol::trace_budget_abs))
        throw std::domain_error("build_design: Tr(d_override) exceeds the budget N");
      out.d = d;
      const MatrixX<Scalar> dtilde = s.sqrt_s() * d * s.sqrt_s();
      jt = detail::make_jtilde<Scalar>(dtilde);
      out.a = -(out.d * s.matrix()) - s.inv_sqrt_s() * (jt * s.sqrt_s());
      out.rate = dtilde.trace() / Scalar(n);
      break;
    }
  }
  out.j = s.inv_sqrt_s() * (jt * s.inv_sqrt_s());
  const MatrixX<Scalar> asi = out.a * s.inverse();
  out.invariance_residual = (asi + asi.transpose() + Scalar(2) * out.d).norm();
  out.antisymmetry_residual = (out.j + out.j.transpose()).norm();
  return out;
}

// Packages an explicit drift/diffusion pair as a design: J is recovered from
// A = -(D + J) S, membership is enforced, and the rate comes from the spectrum
// of A rather than a closed form. Use this for hand-built samplers that do not
// come out of the rate-optimal construction above.
template <typename Scalar>
SamplerDesign<Scalar> assemble_design(const MatrixX<Scalar>& a, const MatrixX<Scalar>& d,
                                      const PrecisionMatrix<Scalar>& s) {
  const auto report = check_membership(a, d, s);
  if (!report.member)
    throw std::invalid_argument(
        "assemble_design: (A, D) does not leave the target invariant (residual " +
        std::to_string(report.residual) + ", min eig D " +
        std::to_string(report.min_d_eigenvalue) + ", Tr D " + std::to_string(report.trace_d) +
        ")");
  SamplerDesign<Scalar> out;
  out.n = s.n();
  out.family = Family::custom;
  out.a = a;
  out.d = Scalar(0.5) * (d + d.transpose());
  out.j = report.j;
  out.rate = general_eigenvalues(a).rho;
  out.invariance_residual = report.residual;
  out.antisymmetry_residual = (out.j + out.j.transpose()).norm();
  return out;
}

template <typename Scalar = double>
struct SpectrumCertificate {
  Scalar max_real_deviation = 0;      // max_k |Re lambda_k((Dt + Jt)/tau) - 1|
  Scalar commutator_residual_rel = 0; // ||Q Jb - Jb Q - (Db Q + Q Db - 2 Q)|| / ||Q||
};

// Certifies that the ratio construction flattened the spectrum: in the
// S^(1/2) similarity frame, (Dtilde + Jtilde)/tau must have all eigenvalue
// real parts equal to 1, which pins the convergence rate at tau exactly.
template <typename Scalar>
SpectrumCertificate<Scalar> certify_flat_spectrum(const SamplerDesign<Scalar>& design,
                                                  const PrecisionMatrix<Scalar>& s) {
  const int n = s.n();
  const MatrixX<Scalar> dtilde = s.sqrt_s() * design.d * s.sqrt_s();
  const Scalar tau = dtilde.trace() / Scalar(n);
  if (!(tau > Scalar(0)))
    throw std::domain_error("certify_flat_spectrum: diffusion has zero trace");
  const MatrixX<Scalar> dbar = dtilde / tau;
  const MatrixX<Scalar> jbar = detail::make_jtilde<Scalar>(dtilde) / tau;
  SpectrumCertificate<Scalar> out;
  const MatrixX<Scalar> flat = dbar + jbar;
  const auto spec = general_eigenvalues(flat);
  for (int k = 0; k < n; ++k)
    out.max_real_deviation =
        std::max(out.max_real_deviation, std::abs(spec.values(k).real() - Scalar(1)));
  const auto basis = equal_diagonal_basis(dbar);
  VectorX<Scalar> nu(n);
  for (int k = 0; k < n; ++k) nu(k) = Scalar(n + k + 1);
  const MatrixX<Scalar> q = basis.p * nu.asDiagonal() * basis.p.transpose();
  out.commutator_residual_rel = commutator_identity_check(q, jbar, dbar) / q.norm();
  return out;
}

template <typename Scalar = double>
struct RateChain {
  Scalar reversible_identity;   // min eig(S)
  Scalar reversible_optimal;    // N / Tr(S^-1), harmonic mean
  Scalar elliptic_optimal;      // Tr(S)/N, arithmetic mean
  Scalar hypoelliptic_optimal;  // max eig(S)
};

template <typename Scalar>
RateChain<Scalar> rate_chain(const PrecisionMatrix<Scalar>& s) {
  return {s.min_eig(), Scalar(s.n()) / s.inverse().trace(),
          s.matrix().trace() / Scalar(s.n()), s.max_eig()};
}

template <typename Scalar = double>
struct FrobeniusBoundReport {
  Scalar a_norm = 0;
  Scalar bound = 0;
  bool within = false;
};

// ||A||_F <= 4 N^2 sqrt(max^3/min) for the hypoelliptic construction.
template <typename Scalar>
FrobeniusBoundReport<Scalar> frobenius_bound_check(const SamplerDesign<Scalar>& design,
                                                   const PrecisionMatrix<Scalar>& s) {
  FrobeniusBoundReport<Scalar> out;
  out.a_norm = design.a.norm();
  const Scalar n2 = Scalar(design.n) * Scalar(design.n);
  out.bound = Scalar(4) * n2 *
              std::sqrt(s.max_eig() * s.max_eig() * s.max_eig() / s.min_eig());
  out.within = out.a_norm <= out.bound;
  return out;
}

// Drift of the time-reversed (adjoint) dynamics; shares D, J flips sign.
template <typename Scalar>
MatrixX<Scalar> adjoint_drift(const SamplerDesign<Scalar>& design,
                              const PrecisionMatrix<Scalar>& s) {
  return -Scalar(2) * (design.d * s.matrix()) - design.a;
}

}  // namespace ouaccel
