#pragma once

// Independent reference computations used by the tests. Everything here is
// deliberately implemented with different algorithms than the library under
// test (closed forms, RK4 time stepping, quadrature, pivoted QR rank).

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// e^{tW} for W = [[0, w],[-w, 0]] is the rotation by angle w t.
inline MatrixXd rotation_exp(double w, double t) {
  MatrixXd r(2, 2);
  r << std::cos(w * t), std::sin(w * t), -std::sin(w * t), std::cos(w * t);
  return r;
}

// RK4 on the moment ODEs m' = A m, P' = A P + P A^T + 2 D.
inline void rk4_moments(const MatrixXd& a, const MatrixXd& d, double t, int steps,
                        VectorXd& m, MatrixXd& p) {
  const double h = t / steps;
  auto fm = [&](const VectorXd& x) { return (a * x).eval(); };
  auto fp = [&](const MatrixXd& x) { return (a * x + x * a.transpose() + 2.0 * d).eval(); };
  for (int k = 0; k < steps; ++k) {
    VectorXd k1 = fm(m), k2 = fm(m + 0.5 * h * k1), k3 = fm(m + 0.5 * h * k2),
             k4 = fm(m + h * k3);
    MatrixXd q1 = fp(p), q2 = fp(p + 0.5 * h * q1), q3 = fp(p + 0.5 * h * q2),
             q4 = fp(p + h * q3);
    m += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    p += (h / 6.0) * (q1 + 2.0 * q2 + 2.0 * q3 + q4);
  }
}

// KL(N(m, v) || N(0, 1/s)) for scalars by Simpson quadrature of p ln(p/q).
inline double kl_1d_quadrature(double m, double v, double s) {
  const double sig = std::sqrt(v), sig_q = std::sqrt(1.0 / s);
  const double lo = std::min(m - 14.0 * sig, -14.0 * sig_q);
  const double hi = std::max(m + 14.0 * sig, 14.0 * sig_q);
  const int n = 40000;  // even
  const double h = (hi - lo) / n;
  auto f = [&](double x) {
    const double lp = -0.5 * (x - m) * (x - m) / v - 0.5 * std::log(2.0 * M_PI * v);
    const double lq = -0.5 * x * x * s + 0.5 * std::log(s) - 0.5 * std::log(2.0 * M_PI);
    return std::exp(lp) * (lp - lq);
  };
  double acc = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) acc += f(lo + i * h) * ((i % 2) ? 4.0 : 2.0);
  return acc * h / 3.0;
}

// Rank by column-pivoted QR, independent of the SVD route in the library.
inline int qr_rank(const MatrixXd& m, double rel_tol) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(m);
  qr.setThreshold(rel_tol);
  return static_cast<int>(qr.rank());
}

// Deterministic (N, condition, seed) list for property-test corpora.
struct SpdSpec {
  int n;
  double condition;
  unsigned long long seed;
};

inline std::vector<SpdSpec> spd_corpus(int count) {
  std::vector<SpdSpec> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int n = 1 + (i % 20);
    double cond;
    switch ((i / 20) % 5) {
      case 0: cond = 1.0; break;  // homothety
      case 1: cond = 10.0; break;
      case 2: cond = 1e2; break;
      case 3: cond = 1e4; break;
      default: cond = 1e6; break;
    }
    out.push_back({n, cond, 1000ull + static_cast<unsigned long long>(i)});
  }
  return out;
}

}  // namespace oracle
