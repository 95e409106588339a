#pragma once

// Counter-based random numbers. Every value is a pure function of
// (seed, stream, counter), so parallel and serial runs produce identical
// output and a path can be regenerated without replaying the others.
// Uniforms come from the splitmix64 finalizer applied to an affine counter,
// normals from the Wichura AS241 inverse CDF. Algorithm id below is written
// into trajectory metadata.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace ouaccel {

inline constexpr const char* kRngAlgorithm = "splitmix64-icdf-v1";

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// AS241: inverse of the standard normal CDF, |relative error| ~ 1e-15.
inline double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("inverse_normal_cdf: p outside (0,1)");
  const double q = p - 0.5;
  double r, num, den;
  if (std::fabs(q) <= 0.425) {
    r = 0.180625 - q * q;
    num = (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
              1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
            1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
    den = (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
              5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
            4.2313330701600911252e+1) * r + 1.0);
    return q * num / den;
  }
  r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  if (r <= 5.0) {
    r -= 1.6;
    num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
              3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
            4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
    den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
            2.05319162663775882187e+0) * r + 1.0);
  } else {
    r -= 5.0;
    num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
            5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
    den = ((((((1.42151175831644588870e-15 * r + 1.84631831751005468180e-6) * r +
               7.86869131145613259100e-4) * r + 1.48753612908506148525e-2) * r +
             1.36929880922735805310e-1) * r + 5.99832206555887937690e-1) * r + 1.0);
  }
  const double val = num / den;
  return (q < 0.0) ? -val : val;
}

}  // namespace detail

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(detail::mix64(detail::mix64(seed + 0x9E3779B97F4A7C15ull) ^
                           detail::mix64(stream + 0xD1B54A32D192ED03ull))) {}

  std::uint64_t next_u64() {
    return detail::mix64(key_ + 0x9E3779B97F4A7C15ull * ++counter_);
  }

  // uniform on the open interval (0,1); never returns an endpoint
  double next_uniform() { return ((next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double next_normal() { return detail::inverse_normal_cdf(next_uniform()); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Seeded SPD matrix: Q from the (sign-fixed) QR of a Gaussian matrix,
// eigenvalues log-uniform in [1, condition] with the endpoints pinned.
inline Eigen::MatrixXd seeded_spd(int n, double condition, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("seeded_spd: n must be >= 1");
  if (!(condition >= 1.0)) throw std::invalid_argument("seeded_spd: condition must be >= 1");
  CounterRng rng(seed, /*stream=*/0);
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = rng.next_normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < n; ++i)
    if (r(i, i) < 0) q.col(i) = -q.col(i);

  Eigen::VectorXd lambda(n);
  const double span = std::log(condition);
  for (int i = 0; i < n; ++i) lambda(i) = std::exp(rng.next_uniform() * span);
  std::sort(lambda.data(), lambda.data() + n);
  lambda(0) = 1.0;
  if (n > 1) lambda(n - 1) = condition;

  Eigen::MatrixXd s = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

}  // namespace ouaccel
