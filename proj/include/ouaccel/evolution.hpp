#pragma once

// Exact propagation of Gaussian laws under a linear SDE dX = AX dt + noise
// with stationary diffusion D: the mean follows e^{tA} m0 and the covariance
// follows the Lyapunov flow, both read off a single block matrix exponential
// so no time-stepping error enters. On top of that: Gaussian relative
// entropy, the two-phase warm-up schedule with its entropy envelope, decay
// rate fitting, and the closed-form operator-norm curve for 2x2 drifts with
// a complex eigenvalue pair.

#include <Eigen/Dense>

#include <ouaccel/design.hpp>
#include <ouaccel/matrixcore.hpp>
#include <ouaccel/tolerances.hpp>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ouaccel {

template <typename Scalar = double>
class GaussianLaw {
 public:
  GaussianLaw(const VectorX<Scalar>& mean, const MatrixX<Scalar>& cov) : mean_(mean) {
    detail::require_square_finite(cov, "GaussianLaw(cov)");
    if (mean.size() != cov.rows())
      throw std::invalid_argument("GaussianLaw: mean and covariance dimensions differ");
    if (!mean.allFinite()) throw std::invalid_argument("GaussianLaw: mean has non-finite entries");
    const Scalar asym = (cov - cov.transpose()).norm();
    if (asym > Scalar(tol::symmetry_rel) * cov.norm() + Scalar(1e-300)) {
      std::ostringstream os;
      os << "GaussianLaw: covariance is not symmetric, |C - C^T| = " << asym;
      throw std::invalid_argument(os.str());
    }
    cov_ = Scalar(0.5) * (cov + cov.transpose());
    const auto eig = symmetric_eig(cov_);
    const Scalar floor = -Scalar(1e-12) * cov_.norm();
    if (eig.values(0) < floor) {
      std::ostringstream os;
      os << "GaussianLaw: covariance is indefinite, smallest eigenvalue = " << eig.values(0);
      throw std::invalid_argument(os.str());
    }
    if (eig.values(0) < Scalar(0)) {  // tiny negative tail from rounding: clamp
      VectorX<Scalar> clamped = eig.values.cwiseMax(Scalar(0));
      cov_ = eig.vectors * clamped.asDiagonal() * eig.vectors.transpose();
      cov_ = (Scalar(0.5) * (cov_ + cov_.transpose())).eval();
    }
  }

  int n() const { return static_cast<int>(mean_.size()); }
  const VectorX<Scalar>& mean() const { return mean_; }
  const MatrixX<Scalar>& cov() const { return cov_; }

 private:
  VectorX<Scalar> mean_;
  MatrixX<Scalar> cov_;
};

template <typename Scalar>
GaussianLaw<Scalar> equilibrium_law(const PrecisionMatrix<Scalar>& s) {
  return GaussianLaw<Scalar>(VectorX<Scalar>::Zero(s.n()), s.inverse());
}

// Law at time t: mean e^{tA} m0, covariance e^{tA} S0 e^{tA^T} + V_t where
// dV/dt = AV + VA^T + 2D, V_0 = 0.
//
// When A is strictly stable V_t = V_inf - e^{tA} V_inf e^{tA^T} with V_inf the
// stationary covariance, so the law is V_inf plus a propagated deviation and
// any exponential error is damped quadratically; this stays accurate however
// stiff tA is. Otherwise both blocks come out of one exponential of
// [[A, 2D], [0, -A^T]]: the top-left block is e^{tA} and top-right times
// e^{tA^T} is V_t. That form holds for every A but the -A^T block grows like
// the inverse propagator, so it only serves the non-stable case.
template <typename Scalar>
GaussianLaw<Scalar> evolve_law(const GaussianLaw<Scalar>& law, const MatrixX<Scalar>& a,
                               const MatrixX<Scalar>& d, Scalar t) {
  if (!(t >= Scalar(0))) throw std::invalid_argument("evolve_law: time must be >= 0");
  detail::require_square_finite(a, "evolve_law(A)");
  const int n = law.n();
  if (a.rows() != n || d.rows() != n || d.cols() != n)
    throw std::invalid_argument("evolve_law: dimension mismatch");
  if (t == Scalar(0)) return law;

  const auto spectrum = general_eigenvalues(a);
  const Scalar stability_margin =
      Scalar(64) * Scalar(n) * std::numeric_limits<Scalar>::epsilon() * a.norm();
  if (spectrum.abscissa < -stability_margin) {
    MatrixX<Scalar> v_inf = lyapunov_solve(a, MatrixX<Scalar>(Scalar(2) * d));
    v_inf = (Scalar(0.5) * (v_inf + v_inf.transpose())).eval();
    const MatrixX<Scalar> phi = matrix_exponential(a, t);
    const VectorX<Scalar> mean = phi * law.mean();
    MatrixX<Scalar> cov = v_inf + phi * (law.cov() - v_inf) * phi.transpose();
    cov = (Scalar(0.5) * (cov + cov.transpose())).eval();
    return GaussianLaw<Scalar>(mean, cov);
  }

  MatrixX<Scalar> h = MatrixX<Scalar>::Zero(2 * n, 2 * n);
  h.topLeftCorner(n, n) = a;
  h.topRightCorner(n, n) = Scalar(2) * d;
  h.bottomRightCorner(n, n) = -a.transpose();
  const MatrixX<Scalar> e = matrix_exponential(h, t);
  const MatrixX<Scalar> e11 = e.topLeftCorner(n, n);
  const MatrixX<Scalar> e12 = e.topRightCorner(n, n);
  const VectorX<Scalar> mean = e11 * law.mean();
  MatrixX<Scalar> cov = e11 * law.cov() * e11.transpose() + e12 * e11.transpose();
  cov = (Scalar(0.5) * (cov + cov.transpose())).eval();
  return GaussianLaw<Scalar>(mean, cov);
}

template <typename Scalar>
GaussianLaw<Scalar> evolve_law(const GaussianLaw<Scalar>& law, const SamplerDesign<Scalar>& design,
                               Scalar t) {
  return evolve_law(law, design.a, design.d, t);
}

// KL(N(m, C) || N(0, S^-1)) = (Tr(SC) - N - ln det(SC) + m^T S m) / 2.
template <typename Scalar>
Scalar kl_to_equilibrium(const GaussianLaw<Scalar>& law, const PrecisionMatrix<Scalar>& s) {
  const int n = s.n();
  if (law.n() != n) throw std::invalid_argument("kl_to_equilibrium: dimension mismatch");
  const auto eig = symmetric_eig(law.cov());
  if (eig.values(0) <= Scalar(tol::law_singular_rel) * eig.values(n - 1)) {
    std::ostringstream os;
    os << "kl_to_equilibrium: covariance is singular (eigenvalue " << eig.values(0)
       << "), relative entropy is infinite";
    throw std::domain_error(os.str());
  }
  const Scalar trace_term = (s.matrix() * law.cov()).trace();
  const Scalar log_det_cov = eig.values.array().log().sum();
  const Scalar quadratic = law.mean().dot(s.matrix() * law.mean());
  const Scalar kl =
      Scalar(0.5) * (trace_term - Scalar(n) - (s.log_det() + log_det_cov) + quadratic);
  return std::max(kl, Scalar(0));
}

// TV(law, equilibrium) <= sqrt(KL/2), and always <= 1.
template <typename Scalar>
Scalar pinsker_tv_bound(Scalar kl) {
  if (!(kl >= Scalar(0))) throw std::invalid_argument("pinsker_tv_bound: kl must be >= 0");
  return std::min(Scalar(1), std::sqrt(kl / Scalar(2)));
}

template <typename Scalar = double>
struct Schedule {
  Scalar t0 = 0;                // warm-up duration under the reversible identity design
  Scalar t_end = 0;             // total horizon
  std::vector<Scalar> grid;     // strictly increasing evaluation times in [0, t_end]
};

template <typename Scalar = double>
struct ScheduleRow {
  Scalar t = 0;
  Scalar kl = 0;
  Scalar bound = 0;  // +inf before the warm-up ends
};

// Two-phase run: reversible identity design (A = -S, D = I) on [0, t0], the
// given design afterwards. The envelope
//   KL(t) <= (1 / (t0 min eig S)) exp(-2 max eig S (t - t0)) KL(0)
// is evaluated alongside and enforced; a violation throws, since it would
// falsify the envelope rather than merely miss a tolerance.
template <typename Scalar>
std::vector<ScheduleRow<Scalar>> run_schedule(const GaussianLaw<Scalar>& law0,
                                              const SamplerDesign<Scalar>& design,
                                              const PrecisionMatrix<Scalar>& s,
                                              const Schedule<Scalar>& schedule) {
  if (!(schedule.t0 > Scalar(0)) || !(schedule.t0 <= schedule.t_end))
    throw std::invalid_argument("run_schedule: need 0 < t0 <= t_end");
  for (std::size_t i = 0; i < schedule.grid.size(); ++i) {
    if (!(schedule.grid[i] >= Scalar(0)) || !(schedule.grid[i] <= schedule.t_end))
      throw std::invalid_argument("run_schedule: grid point outside [0, t_end]");
    if (i > 0 && !(schedule.grid[i] > schedule.grid[i - 1]))
      throw std::invalid_argument("run_schedule: grid must be strictly increasing");
  }
  const Scalar kl0 = kl_to_equilibrium(law0, s);
  const auto warmup = build_design(s, Family::reversible_identity);
  const GaussianLaw<Scalar> at_t0 = evolve_law(law0, warmup, schedule.t0);
  std::vector<ScheduleRow<Scalar>> out;
  out.reserve(schedule.grid.size());
  for (Scalar t : schedule.grid) {
    const GaussianLaw<Scalar> law_t = (t < schedule.t0)
                                          ? evolve_law(law0, warmup, t)
                                          : evolve_law(at_t0, design, t - schedule.t0);
    ScheduleRow<Scalar> row;
    row.t = t;
    row.kl = kl_to_equilibrium(law_t, s);
    row.bound = (t >= schedule.t0)
                    ? (Scalar(1) / (schedule.t0 * s.min_eig())) *
                          std::exp(-Scalar(2) * s.max_eig() * (t - schedule.t0)) * kl0
                    : std::numeric_limits<Scalar>::infinity();
    if (row.kl > row.bound * (Scalar(1) + Scalar(1e-12)) + Scalar(1e-12)) {
      std::ostringstream os;
      os << "run_schedule: entropy envelope violated at t = " << t << " (KL = " << row.kl
         << ", bound = " << row.bound << ")";
      throw std::runtime_error(os.str());
    }
    out.push_back(row);
  }
  return out;
}

enum class FitMode {
  entropy,  // value ~ exp(-2 rho t): returns -slope/2
  raw,      // returns the least-squares slope of ln(value) itself
};

template <typename Scalar = double>
struct RateFit {
  Scalar rate = 0;
  Scalar slope = 0;         // raw ln-slope
  Scalar residual_rms = 0;  // RMS of the ln-space fit residuals
  int n_used = 0;
};

template <typename Scalar>
RateFit<Scalar> fit_rate(const std::vector<std::pair<Scalar, Scalar>>& samples, Scalar t_lo,
                         Scalar t_hi, FitMode mode) {
  std::vector<Scalar> ts, ys;
  for (const auto& [t, v] : samples) {
    if (t < t_lo || t > t_hi) continue;
    if (!(v > Scalar(0)))
      throw std::invalid_argument("fit_rate: non-positive value inside the fit window");
    ts.push_back(t);
    ys.push_back(std::log(v));
  }
  const int m = static_cast<int>(ts.size());
  if (m < 3) throw std::invalid_argument("fit_rate: need at least 3 samples inside the window");
  Scalar st = 0, sy = 0, stt = 0, sty = 0;
  for (int i = 0; i < m; ++i) {
    st += ts[i];
    sy += ys[i];
    stt += ts[i] * ts[i];
    sty += ts[i] * ys[i];
  }
  const Scalar denom = Scalar(m) * stt - st * st;
  if (!(std::abs(denom) > Scalar(0)))
    throw std::invalid_argument("fit_rate: degenerate time grid");
  RateFit<Scalar> out;
  out.n_used = m;
  out.slope = (Scalar(m) * sty - st * sy) / denom;
  const Scalar intercept = (sy - out.slope * st) / Scalar(m);
  Scalar ss = 0;
  for (int i = 0; i < m; ++i) {
    const Scalar r = ys[i] - (intercept + out.slope * ts[i]);
    ss += r * r;
  }
  out.residual_rms = std::sqrt(ss / Scalar(m));
  out.rate = (mode == FitMode::entropy) ? -out.slope / Scalar(2) : out.slope;
  return out;
}

template <typename Scalar = double>
struct NormCurve2D {
  Scalar alpha = 0;        // 1/|v1^T v1| for a unit eigenvector; +inf when normal
  Scalar nu = 0;           // eigenvalue gap |lambda_1 - lambda_2|
  Scalar re_lambda = 0;    // common real part
  Scalar peak_factor = 0;  // sup_t ||e^{tA}||^2 e^{-2 Re(lambda) t} = 1 + 2/(alpha - 1)
  std::vector<std::pair<Scalar, Scalar>> samples;  // (t, ||e^{tA}||^2)
};

// Closed form for the squared operator norm of e^{tA} when the 2x2 drift has
// a strictly complex eigenvalue pair:
//   ||e^{tA}||^2 = e^{2 Re(lambda) t} (1 + 2/(sqrt(2(alpha^2-1)/(1-cos(nu t)) + 1) - 1)).
// alpha measures how far the eigenbasis is from orthogonal; the correction
// vanishes as alpha grows (normal matrix) and blows up as alpha approaches 1
// (defective limit).
template <typename Scalar>
NormCurve2D<Scalar> exp_norm_curve_2d(const MatrixX<Scalar>& a,
                                      const std::vector<Scalar>& times) {
  detail::require_square_finite(a, "exp_norm_curve_2d");
  if (a.rows() != 2) throw std::invalid_argument("exp_norm_curve_2d: matrix must be 2x2");
  const Scalar tr = a.trace();
  const Scalar det = a.determinant();
  const Scalar disc = tr * tr - Scalar(4) * det;
  // A discriminant at rounding distance from zero means a (near-)repeated
  // eigenvalue: the formula is out of domain there, so reject the band too.
  const Scalar disc_scale = tr * tr + Scalar(4) * std::abs(det);
  if (!(disc < -Scalar(1e-12) * disc_scale))
    throw std::domain_error(
        "exp_norm_curve_2d: eigenvalues are real or repeated within tolerance; the closed "
        "form requires a strictly complex conjugate pair");
  NormCurve2D<Scalar> out;
  out.re_lambda = tr / Scalar(2);
  out.nu = std::sqrt(-disc);
  const std::complex<Scalar> lambda(out.re_lambda, out.nu / Scalar(2));
  // Eigenvector from the larger off-diagonal entry for robustness.
  Eigen::Matrix<std::complex<Scalar>, 2, 1> v;
  if (std::abs(a(0, 1)) >= std::abs(a(1, 0)))
    v << std::complex<Scalar>(a(0, 1)), lambda - std::complex<Scalar>(a(0, 0));
  else
    v << lambda - std::complex<Scalar>(a(1, 1)), std::complex<Scalar>(a(1, 0));
  v /= std::sqrt(std::norm(v(0)) + std::norm(v(1)));
  const Scalar beta = std::abs(v(0) * v(0) + v(1) * v(1));  // bilinear, not Hermitian
  const bool normal = !(beta > Scalar(1e-150));
  out.alpha = normal ? std::numeric_limits<Scalar>::infinity() : Scalar(1) / beta;
  out.peak_factor =
      normal ? Scalar(1) : Scalar(1) + Scalar(2) / (out.alpha - Scalar(1));
  const Scalar alpha_sq_m1 =
      normal ? Scalar(0) : (Scalar(1) - beta * beta) / (beta * beta);
  out.samples.reserve(times.size());
  for (Scalar t : times) {
    if (!(t >= Scalar(0))) throw std::invalid_argument("exp_norm_curve_2d: negative time");
    Scalar factor = Scalar(1);
    const Scalar g = Scalar(1) - std::cos(out.nu * t);
    if (!normal && g > Scalar(0)) {
      const Scalar w = Scalar(2) * alpha_sq_m1 / g;
      const Scalar root = std::sqrt(Scalar(1) + w);
      factor = Scalar(1) + Scalar(2) * (root + Scalar(1)) / w;  // stable 2/(root - 1)
    }
    out.samples.emplace_back(t, std::exp(Scalar(2) * out.re_lambda * t) * factor);
  }
  return out;
}

}  // namespace ouaccel
