#pragma once

// Dense linear-algebra kernels shared by the sampler-construction and
// analysis layers: validated symmetric eigendecomposition, general (Schur)
// eigenvalues with balancing, matrix exponential, and semidefinite square
// factors. Thin, contract-checked wrappers over Eigen.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <ouaccel/tolerances.hpp>

#include <algorithm>
#include <complex>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <type_traits>

namespace ouaccel {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using ComplexVectorX = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

template <typename Scalar = double>
struct SymmetricEig {
  VectorX<Scalar> values;   // ascending
  MatrixX<Scalar> vectors;  // orthonormal columns, dominant component positive
};

template <typename Scalar = double>
struct Spectrum {
  ComplexVectorX<Scalar> values;  // sorted by (Re, Im), conjugation-closed for real input
  Scalar abscissa;                // max Re
  Scalar rho;                     // -abscissa: the exponential decay rate of e^{tA}
};

namespace detail {

template <typename Derived>
void require_square_finite(const Eigen::MatrixBase<Derived>& m, const char* who) {
  if (m.rows() != m.cols()) {
    std::ostringstream os;
    os << who << ": expected a square matrix, got " << m.rows() << "x" << m.cols();
    throw std::invalid_argument(os.str());
  }
  if (!m.allFinite()) throw std::invalid_argument(std::string(who) + ": non-finite entries");
}

// Parlett-Reinsch balancing: diagonal similarity with powers of two (exact in
// floating point) equalizing row/column norms before the QR iteration.
template <typename Scalar>
MatrixX<Scalar> balanced_form(MatrixX<Scalar> a) {
  const int n = static_cast<int>(a.rows());
  const Scalar radix = Scalar(2), sqrdx = radix * radix;
  bool converged = false;
  while (!converged) {
    converged = true;
    for (int i = 0; i < n; ++i) {
      Scalar c = 0, r = 0;
      for (int j = 0; j < n; ++j)
        if (j != i) {
          c += std::abs(a(j, i));
          r += std::abs(a(i, j));
        }
      if (c == Scalar(0) || r == Scalar(0)) continue;
      Scalar g = r / radix, f = Scalar(1);
      const Scalar s = c + r;
      while (c < g) {
        f *= radix;
        c *= sqrdx;
      }
      g = r * radix;
      while (c > g) {
        f /= radix;
        c /= sqrdx;
      }
      if ((c + r) / f < Scalar(0.95) * s) {
        converged = false;
        a.row(i) /= f;
        a.col(i) *= f;
      }
    }
  }
  return a;
}

// first index attaining the maximal absolute value (deterministic tie-break)
template <typename Scalar>
int dominant_index(const VectorX<Scalar>& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (std::abs(v(i)) > std::abs(v(best))) best = i;
  return best;
}

}  // namespace detail

// Eigendecomposition of a symmetric matrix. Input must be symmetric within
// a relative Frobenius tolerance; it is symmetrized before factoring.
template <typename Derived>
SymmetricEig<typename Derived::Scalar> symmetric_eig(const Eigen::MatrixBase<Derived>& m_in) {
  using Scalar = typename Derived::Scalar;
  detail::require_square_finite(m_in, "symmetric_eig");
  const MatrixX<Scalar> m = m_in;
  const Scalar scale = m.norm();
  const Scalar asym = (m - m.transpose()).norm();
  if (asym > Scalar(tol::symmetry_rel) * scale) {
    std::ostringstream os;
    os << "symmetric_eig: matrix is not symmetric, ||M - M^T||_F = " << asym
       << " exceeds " << tol::symmetry_rel << " * ||M||_F = " << Scalar(tol::symmetry_rel) * scale;
    throw std::invalid_argument(os.str());
  }
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(Scalar(0.5) * (m + m.transpose()));
  if (es.info() != Eigen::Success)
    throw std::runtime_error("symmetric_eig: eigensolver failed to converge");
  SymmetricEig<Scalar> out{es.eigenvalues(), es.eigenvectors()};
  for (int j = 0; j < out.vectors.cols(); ++j) {
    VectorX<Scalar> col = out.vectors.col(j);
    if (col(detail::dominant_index<Scalar>(col)) < Scalar(0)) out.vectors.col(j) = -col;
  }
  return out;
}

// Eigenvalues of a general square matrix via balancing + real Schur form.
template <typename Derived>
Spectrum<typename Derived::Scalar> general_eigenvalues(const Eigen::MatrixBase<Derived>& a_in) {
  using Scalar = typename Derived::Scalar;
  detail::require_square_finite(a_in, "general_eigenvalues");
  const MatrixX<Scalar> balanced = detail::balanced_form<Scalar>(a_in);
  Eigen::EigenSolver<MatrixX<Scalar>> es(balanced, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("general_eigenvalues: QR iteration failed to converge");
  Spectrum<Scalar> out;
  out.values = es.eigenvalues();
  std::sort(out.values.data(), out.values.data() + out.values.size(),
            [](const std::complex<Scalar>& x, const std::complex<Scalar>& y) {
              if (x.real() != y.real()) return x.real() < y.real();
              return x.imag() < y.imag();
            });
  out.abscissa = out.values.size() ? out.values(out.values.size() - 1).real()
                                   : Scalar(0);
  for (int i = 0; i < out.values.size(); ++i)
    out.abscissa = std::max(out.abscissa, out.values(i).real());
  out.rho = -out.abscissa;
  return out;
}

// e^{tA} by scaling-and-squaring with a Pade core.
template <typename Derived>
MatrixX<typename Derived::Scalar> matrix_exponential(const Eigen::MatrixBase<Derived>& a,
                                                     typename Derived::Scalar t) {
  using Scalar = typename Derived::Scalar;
  detail::require_square_finite(a, "matrix_exponential");
  if (!std::isfinite(static_cast<double>(t)))
    throw std::invalid_argument("matrix_exponential: non-finite time");
  const MatrixX<Scalar> ta = t * a;
  return ta.exp();
}

// Solves A X + X A^T + Q = 0 (Bartels-Stewart on the complex Schur form of A,
// plus one residual-refinement pass). Solvable iff no two eigenvalues of A sum
// to zero; for a stable A that holds automatically and X with Q = 2D is the
// stationary covariance of dX = AX dt + sqrt(2D) dW.
template <typename Derived>
MatrixX<typename Derived::Scalar> lyapunov_solve(const Eigen::MatrixBase<Derived>& a_in,
                                                 const Eigen::MatrixBase<Derived>& q_in) {
  using Scalar = typename Derived::Scalar;
  using Complex = std::complex<Scalar>;
  detail::require_square_finite(a_in, "lyapunov_solve");
  detail::require_square_finite(q_in, "lyapunov_solve");
  if (a_in.rows() != q_in.rows())
    throw std::invalid_argument("lyapunov_solve: dimension mismatch between A and Q");
  const int n = static_cast<int>(a_in.rows());
  const MatrixX<Scalar> a = a_in;
  const MatrixX<Scalar> q = q_in;
  if (n == 0) return MatrixX<Scalar>(0, 0);

  Eigen::ComplexSchur<MatrixX<Complex>> schur(a.template cast<Complex>());
  if (schur.info() != Eigen::Success)
    throw std::runtime_error("lyapunov_solve: Schur factorization failed to converge");
  const MatrixX<Complex>& tt = schur.matrixT();
  const MatrixX<Complex>& u = schur.matrixU();

  Scalar spectral_scale = Scalar(0);
  for (int i = 0; i < n; ++i) spectral_scale = std::max(spectral_scale, std::abs(tt(i, i)));
  const Scalar den_floor = Scalar(64) * Scalar(n) * std::numeric_limits<Scalar>::epsilon() *
                           spectral_scale;
  for (int i = 0; i < n; ++i)
    for (int k = i; k < n; ++k)
      if (std::abs(tt(i, i) + tt(k, k)) <= den_floor) {
        std::ostringstream os;
        os << "lyapunov_solve: eigenvalue pair sums to " << tt(i, i) + tt(k, k)
           << "; the equation is singular or nearly so";
        throw std::domain_error(os.str());
      }

  // In the Schur frame X = U Y U^T the equation reads T Y + Y T^T = C with
  // T upper triangular; columns of Y resolve by back-substitution from the
  // last one down, each against the diagonal shift T_kk.
  const auto triangular_solve = [&](const MatrixX<Complex>& c) {
    MatrixX<Complex> y = MatrixX<Complex>::Zero(n, n);
    for (int k = n - 1; k >= 0; --k) {
      ComplexVectorX<Scalar> rhs = c.col(k);
      for (int j = k + 1; j < n; ++j) rhs -= tt(k, j) * y.col(j);
      for (int i = n - 1; i >= 0; --i) {
        Complex acc = rhs(i);
        for (int m = i + 1; m < n; ++m) acc -= tt(i, m) * y(m, k);
        y(i, k) = acc / (tt(i, i) + tt(k, k));
      }
    }
    return y;
  };
  const auto solve_real = [&](const MatrixX<Scalar>& rhs) {
    const MatrixX<Complex> c = -(u.adjoint() * rhs.template cast<Complex>() * u.conjugate());
    const MatrixX<Complex> y = triangular_solve(c);
    return MatrixX<Scalar>((u * y * u.transpose()).real());
  };

  // The separation of A from -A^T can be tiny next to ||A|| (stiff stable
  // drifts), leaving a forward-error floor of order eps * ||A|| / sep. Two
  // refinement passes with the residual accumulated in wider arithmetic push
  // the floor down to the wide-precision level instead.
  using Wide = typename std::conditional<std::is_same<Scalar, double>::value, long double,
                                         Scalar>::type;
  const MatrixX<Wide> a_w = a.template cast<Wide>();
  const MatrixX<Wide> q_w = q.template cast<Wide>();
  MatrixX<Scalar> x = solve_real(q);
  for (int pass = 0; pass < 2; ++pass) {
    const MatrixX<Wide> x_w = x.template cast<Wide>();
    const MatrixX<Scalar> residual =
        (a_w * x_w + x_w * a_w.transpose() + q_w).template cast<Scalar>();
    x += solve_real(residual);
  }
  return x;
}

// F with F F^T = D for positive semidefinite D; columns span the range of D,
// ordered by descending eigenvalue. Eigenvalues below a relative threshold
// are treated as zero rank; a genuinely negative eigenvalue is an error.
// Rows of F matching exactly-zero rows of D are exact zeros, so kernel
// coordinates receive bitwise-zero noise downstream.
template <typename Derived>
MatrixX<typename Derived::Scalar> psd_factor(const Eigen::MatrixBase<Derived>& d_in) {
  using Scalar = typename Derived::Scalar;
  const MatrixX<Scalar> d = d_in;
  const auto eig = symmetric_eig(d);
  const int n = static_cast<int>(d.rows());
  const Scalar scale = d.norm();
  const Scalar lambda_max = (n > 0) ? std::max(eig.values(n - 1), Scalar(0)) : Scalar(0);
  for (int i = 0; i < n; ++i) {
    if (eig.values(i) < -Scalar(tol::psd_negative_rel) * scale) {
      std::ostringstream os;
      os << "psd_factor: matrix is indefinite, eigenvalue " << eig.values(i)
         << " below -" << tol::psd_negative_rel << " * ||D||_F";
      throw std::domain_error(os.str());
    }
  }
  const Scalar cut = Scalar(tol::psd_rank_rel) * lambda_max;
  int rank = 0;
  for (int i = 0; i < n; ++i)
    if (eig.values(i) > cut) ++rank;
  MatrixX<Scalar> f(n, rank);
  for (int k = 0; k < rank; ++k) {
    const int src = n - 1 - k;  // descending order
    f.col(k) = eig.vectors.col(src) * std::sqrt(eig.values(src));
  }
  for (int i = 0; i < n; ++i)
    if (d.row(i).isZero(Scalar(0))) f.row(i).setZero();
  return f;
}

}  // namespace ouaccel
