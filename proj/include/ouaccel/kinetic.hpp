#pragma once

// Position-velocity sampler for N(0, S^-1): the 2N-dimensional process
//
//   dX = Y dt,   dY = -nu S X dt - (1/nu) Y dt + sqrt(2) dB
//
// keeps the position marginal at N(0, S^-1) for every velocity scale nu > 0.
// Its spectrum factors through S: each eigenvalue lambda of S contributes the
// two roots of r^2 - r/nu + lambda nu = 0, so the convergence rate has a
// closed form and the best nu can be located exactly up to the branch kink.

#include <ouaccel/design.hpp>

#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ouaccel {

template <typename Scalar = double>
struct KineticSpec {
  KineticSpec(PrecisionMatrix<Scalar> s_in, Scalar nu_in) : s(std::move(s_in)), nu(nu_in) {
    if (!(nu > Scalar(0)) || !std::isfinite(static_cast<double>(nu)))
      throw std::invalid_argument("KineticSpec: velocity scale nu must be positive and finite");
  }
  PrecisionMatrix<Scalar> s;
  Scalar nu;
};

// [[0, I], [-nu S, -(1/nu) I]]
template <typename Scalar>
MatrixX<Scalar> kinetic_drift(const KineticSpec<Scalar>& spec) {
  const int n = spec.s.n();
  MatrixX<Scalar> a = MatrixX<Scalar>::Zero(2 * n, 2 * n);
  a.topRightCorner(n, n) = MatrixX<Scalar>::Identity(n, n);
  a.bottomLeftCorner(n, n) = -spec.nu * spec.s.matrix();
  a.bottomRightCorner(n, n) = -(Scalar(1) / spec.nu) * MatrixX<Scalar>::Identity(n, n);
  return a;
}

// Noise acts on the velocity block only: D = diag(0, I).
template <typename Scalar>
MatrixX<Scalar> kinetic_diffusion(const KineticSpec<Scalar>& spec) {
  const int n = spec.s.n();
  MatrixX<Scalar> d = MatrixX<Scalar>::Zero(2 * n, 2 * n);
  d.bottomRightCorner(n, n) = MatrixX<Scalar>::Identity(n, n);
  return d;
}

// Variant with the position equation dX = (1/nu) Y dt and velocity drift
// -S X - (1/nu) Y. Same position marginal N(0, S^-1), but Y is no longer
// dX/dt, so none of the rate analysis below applies to it.
template <typename Scalar>
MatrixX<Scalar> variant_drift(const KineticSpec<Scalar>& spec) {
  const int n = spec.s.n();
  MatrixX<Scalar> a = MatrixX<Scalar>::Zero(2 * n, 2 * n);
  a.topRightCorner(n, n) = (Scalar(1) / spec.nu) * MatrixX<Scalar>::Identity(n, n);
  a.bottomLeftCorner(n, n) = -spec.s.matrix();
  a.bottomRightCorner(n, n) = -(Scalar(1) / spec.nu) * MatrixX<Scalar>::Identity(n, n);
  return a;
}

// Roots of r^2 - r/nu + lambda nu = 0; the drift eigenvalues are -r. Slow is
// the root of smaller real part. Underdamped (4 lambda nu^3 > 1) pairs share
// the real part 1/(2 nu); the overdamped slow root is evaluated in the
// cancellation-free form 2 lambda nu^2 / (1 + sqrt(1 - 4 lambda nu^3)).
template <typename Scalar = double>
struct KineticRoots {
  std::complex<Scalar> slow;
  std::complex<Scalar> fast;
  bool underdamped;
};

template <typename Scalar>
KineticRoots<Scalar> kinetic_roots(Scalar lambda, Scalar nu) {
  if (!(lambda > Scalar(0)) || !(nu > Scalar(0)))
    throw std::invalid_argument("kinetic_roots: lambda and nu must be positive");
  const Scalar x = Scalar(4) * lambda * nu * nu * nu;
  const Scalar half = Scalar(1) / (Scalar(2) * nu);
  KineticRoots<Scalar> out;
  out.underdamped = x > Scalar(1);
  if (out.underdamped) {
    const Scalar im = half * std::sqrt(x - Scalar(1));
    out.slow = {half, -im};
    out.fast = {half, im};
  } else {
    const Scalar root = std::sqrt(Scalar(1) - x);
    out.slow = {Scalar(2) * lambda * nu * nu / (Scalar(1) + root), Scalar(0)};
    out.fast = {half * (Scalar(1) + root), Scalar(0)};
  }
  return out;
}

// Decay rate of the full 2N process: min over the spectrum of S of the slow
// root's real part. The slow root is nondecreasing in lambda (strictly below
// the branch, constant 1/(2 nu) above it), so the minimum sits at min sigma(S),
// but the scan is over every eigenvalue to keep the contract literal.
template <typename Scalar>
Scalar kinetic_rate(const PrecisionMatrix<Scalar>& s, Scalar nu) {
  if (!(nu > Scalar(0)) || !std::isfinite(static_cast<double>(nu)))
    throw std::invalid_argument("kinetic_rate: velocity scale nu must be positive and finite");
  Scalar rate = std::numeric_limits<Scalar>::infinity();
  for (int i = 0; i < s.n(); ++i)
    rate = std::min(rate, kinetic_roots(s.eigenvalues()(i), nu).slow.real());
  return rate;
}

template <typename Scalar>
Scalar kinetic_rate(const KineticSpec<Scalar>& spec) {
  return kinetic_rate(spec.s, spec.nu);
}

template <typename Scalar = double>
struct NuProbe {
  Scalar lo, hi;  // bracket at the time of the probe
  Scalar nu, rate;
};

template <typename Scalar = double>
struct NuOptimum {
  Scalar nu_star;
  Scalar rate_star;
  std::vector<NuProbe<Scalar>> history;  // every evaluation, brackets included
};

// Maximizes kinetic_rate over nu in [lo, hi] by golden-section search, then
// polishes against the branch-point candidates (4 lambda)^{-1/3}: the rate is
// continuous but kinked there, and for S = lambda I the maximum sits exactly
// on the kink, where a bracketing search alone stalls at its tolerance.
// A maximizer found on the bracket boundary means the bracket missed the
// peak (the rate is monotone across it) and is reported as an error.
template <typename Scalar>
NuOptimum<Scalar> optimize_nu(const PrecisionMatrix<Scalar>& s, Scalar lo, Scalar hi) {
  if (!(lo > Scalar(0)) || !(hi > lo) || !std::isfinite(static_cast<double>(hi)))
    throw std::invalid_argument("optimize_nu: bracket must satisfy 0 < lo < hi, finite");
  NuOptimum<Scalar> out;
  const auto rate = [&s](Scalar nu) { return kinetic_rate(s, nu); };
  const Scalar gr = (std::sqrt(Scalar(5)) - Scalar(1)) / Scalar(2);
  Scalar a = lo, b = hi;
  Scalar c = b - gr * (b - a), d = a + gr * (b - a);
  Scalar fc = rate(c), fd = rate(d);
  out.history.push_back({a, b, c, fc});
  out.history.push_back({a, b, d, fd});
  while (b - a > Scalar(tol::nu_search_rel) * (a + b)) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = rate(c);
      out.history.push_back({a, b, c, fc});
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = rate(d);
      out.history.push_back({a, b, d, fd});
    }
  }
  if (fc >= fd) {
    out.nu_star = c;
    out.rate_star = fc;
  } else {
    out.nu_star = d;
    out.rate_star = fd;
  }

  const Scalar margin = Scalar(1e-6) * (hi - lo);
  if (out.nu_star - lo <= margin || hi - out.nu_star <= margin) {
    std::ostringstream os;
    os << "optimize_nu: maximizer sits on the bracket boundary, the rate is monotone over "
       << "[" << lo << ", " << hi << "]: r(lo) = " << rate(lo) << ", r(hi) = " << rate(hi);
    throw std::domain_error(os.str());
  }

  for (int i = 0; i < s.n(); ++i) {
    const Scalar cand = std::pow(Scalar(4) * s.eigenvalues()(i), -Scalar(1) / Scalar(3));
    if (!(cand >= lo) || !(cand <= hi)) continue;
    const Scalar r = rate(cand);
    out.history.push_back({cand, cand, cand, r});
    if (r >= out.rate_star) {
      out.nu_star = cand;
      out.rate_star = r;
    }
  }
  return out;
}

// Default bracket: three decades either side of (4 max sigma(S))^{-1/3}.
template <typename Scalar>
NuOptimum<Scalar> optimize_nu(const PrecisionMatrix<Scalar>& s) {
  const Scalar pivot = std::pow(Scalar(4) * s.max_eig(), -Scalar(1) / Scalar(3));
  return optimize_nu(s, Scalar(1e-3) * pivot, Scalar(1e3) * pivot);
}

enum class FasterSampler { overdamped, kinetic, tie };

template <typename Scalar = double>
struct OverdampedComparison {
  Scalar lambda;
  Scalar overdamped_rate;  // rate of dX = -lambda X dt + sqrt(2) dB
  Scalar kinetic_rate;     // best kinetic rate (lambda/2)^{1/3} for S = lambda I
  FasterSampler faster;
};

// For the homothety target S = lambda I: the plain overdamped sampler decays
// at lambda, the best kinetic one at (lambda/2)^{1/3}; they cross at
// lambda = 1/sqrt(2).
template <typename Scalar>
OverdampedComparison<Scalar> overdamped_vs_kinetic(Scalar lambda) {
  if (!(lambda > Scalar(0)) || !std::isfinite(static_cast<double>(lambda)))
    throw std::invalid_argument("overdamped_vs_kinetic: lambda must be positive and finite");
  OverdampedComparison<Scalar> out;
  out.lambda = lambda;
  out.overdamped_rate = lambda;
  out.kinetic_rate = std::cbrt(lambda / Scalar(2));
  const Scalar gap = out.overdamped_rate - out.kinetic_rate;
  const Scalar scale = std::max(out.overdamped_rate, out.kinetic_rate);
  if (std::abs(gap) <= Scalar(tol::rate_tie_rel) * scale)
    out.faster = FasterSampler::tie;
  else
    out.faster = gap > Scalar(0) ? FasterSampler::overdamped : FasterSampler::kinetic;
  return out;
}

}  // namespace ouaccel
