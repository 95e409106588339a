#include <doctest.h>

#include <ouaccel/evolution.hpp>
#include <ouaccel/kinetic.hpp>
#include <ouaccel/rng.hpp>

#include <cmath>
#include <complex>

#include "oracles.hpp"

using namespace ouaccel;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd product_covariance(const PrecisionMatrix<double>& s, double velocity_var) {
  const int n = s.n();
  MatrixXd cov = MatrixXd::Zero(2 * n, 2 * n);
  cov.topLeftCorner(n, n) = s.inverse();
  cov.bottomRightCorner(n, n) = velocity_var * MatrixXd::Identity(n, n);
  return cov;
}

}  // namespace

TEST_CASE("kinetic drift blocks and the 1-d spectrum") {
  const PrecisionMatrix<double> s(MatrixXd::Identity(1, 1));
  const KineticSpec<double> spec(s, 1.0);
  const MatrixXd a = kinetic_drift(spec);
  MatrixXd expected(2, 2);
  expected << 0.0, 1.0, -1.0, -1.0;
  CHECK((a - expected).norm() == 0.0);

  // eigenvalues -r with r = (1 +- i sqrt(3)) / 2
  const auto sp = general_eigenvalues(a);
  const double half_sqrt3 = 0.5 * std::sqrt(3.0);
  CHECK(sp.values(0).real() == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(sp.values(1).real() == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(std::abs(sp.values(0).imag()) == doctest::Approx(half_sqrt3).epsilon(1e-12));
  CHECK(sp.rho == doctest::Approx(0.5).epsilon(1e-12));

  const MatrixXd d = kinetic_diffusion(spec);
  CHECK(d.topLeftCorner(1, 1).norm() == 0.0);
  CHECK(d(1, 1) == 1.0);

  CHECK_THROWS_AS(KineticSpec<double>(s, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(KineticSpec<double>(s, -1.0), std::invalid_argument);
}

TEST_CASE("per-eigenvalue roots: branches, identities, limits") {
  // underdamped at lambda = 1, nu = 1
  const auto u = kinetic_roots(1.0, 1.0);
  CHECK(u.underdamped);
  CHECK(u.slow.real() == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(u.fast.imag() == doctest::Approx(0.5 * std::sqrt(3.0)).epsilon(1e-14));
  CHECK(u.slow.imag() == doctest::Approx(-u.fast.imag()).epsilon(1e-14));

  // overdamped at lambda = 1, nu = 0.5: slow root 1 - 1/sqrt(2)
  const auto o = kinetic_roots(1.0, 0.5);
  CHECK(!o.underdamped);
  CHECK(o.slow.imag() == 0.0);
  CHECK(o.slow.real() == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-14));
  CHECK(o.fast.real() == doctest::Approx(1.0 + 1.0 / std::sqrt(2.0)).epsilon(1e-14));

  // root sum 1/nu and product lambda nu on both branches
  for (double lambda : {0.05, 0.7, 3.0}) {
    for (double nu : {0.2, 0.9, 2.5}) {
      const auto r = kinetic_roots(lambda, nu);
      CHECK(std::abs(r.slow + r.fast - 1.0 / nu) <= 1e-12 * (1.0 + 1.0 / nu));
      CHECK(std::abs(r.slow * r.fast - lambda * nu) <= 1e-12 * (1.0 + lambda * nu));
    }
  }

  // nu -> 0: the slow root approaches nu^2 lambda without cancellation
  const auto tiny = kinetic_roots(1.0, 1e-3);
  CHECK(std::abs(tiny.slow.real() - 1e-6) <= 0.01 * 1e-6);
  const auto tinier = kinetic_roots(2.0, 1e-7);
  CHECK(tinier.slow.real() == doctest::Approx(2e-14).epsilon(1e-9));

  // continuity across the branch point
  const double nu_hat = std::pow(4.0, -1.0 / 3.0);
  const double below = kinetic_roots(1.0, nu_hat * (1.0 - 1e-12)).slow.real();
  const double above = kinetic_roots(1.0, nu_hat * (1.0 + 1e-12)).slow.real();
  CHECK(std::abs(below - above) <= 1e-5 * above);

  CHECK_THROWS_AS(kinetic_roots(-1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(kinetic_roots(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("eigenvector correspondence (v, -r v) across a random target") {
  const PrecisionMatrix<double> s(seeded_spd(4, 50.0, 611));
  for (double nu : {0.3, 1.1}) {
    const KineticSpec<double> spec(s, nu);
    const Eigen::MatrixXcd a = kinetic_drift(spec).cast<std::complex<double>>();
    const double scale = 1.0 + a.norm();
    for (int i = 0; i < s.n(); ++i) {
      const VectorXd v = s.eigenvectors().col(i);
      const auto roots = kinetic_roots(s.eigenvalues()(i), nu);
      for (const std::complex<double>& r : {roots.slow, roots.fast}) {
        Eigen::VectorXcd z(2 * s.n());
        z.head(s.n()) = v.cast<std::complex<double>>();
        z.tail(s.n()) = -r * v.cast<std::complex<double>>();
        CHECK((a * z + r * z).norm() <= tol::kinetic_spectrum_rel * scale);
      }
    }
  }
}

TEST_CASE("closed-form rate matches the block spectrum") {
  // 2-d worked case: min over the two eigenvalue branches
  const PrecisionMatrix<double> s2(Eigen::Vector2d(0.05, 1.0).asDiagonal());
  const double r_expected = 2.0 * 0.05 * 0.25 / (1.0 + std::sqrt(1.0 - 4.0 * 0.05 * 0.125));
  CHECK(kinetic_rate(s2, 0.5) == doctest::Approx(r_expected).epsilon(1e-14));

  for (const auto& spec : {oracle::SpdSpec{1, 1.0, 701}, oracle::SpdSpec{3, 10.0, 702},
                           oracle::SpdSpec{5, 100.0, 703}, oracle::SpdSpec{8, 1e4, 704}}) {
    const PrecisionMatrix<double> s(seeded_spd(spec.n, spec.condition, spec.seed));
    for (double nu : {0.05, 0.3, 1.0, 3.0}) {
      const KineticSpec<double> kspec(s, nu);
      const MatrixXd a = kinetic_drift(kspec);
      const auto sp = general_eigenvalues(a);
      CHECK(std::abs(kinetic_rate(kspec) - sp.rho) <=
            tol::kinetic_spectrum_rel * (1.0 + a.norm()));
    }
  }

  // homothety above threshold: exactly 1/(2 nu)
  const PrecisionMatrix<double> sh(MatrixXd(2.0 * MatrixXd::Identity(3, 3)));
  for (double nu : {1.0, 2.0, 7.5}) CHECK(kinetic_rate(sh, nu) == 1.0 / (2.0 * nu));
}

TEST_CASE("homothety rate profile rises to the branch point and falls after") {
  const PrecisionMatrix<double> s(MatrixXd::Identity(3, 3));
  const double nu_star = std::pow(4.0, -1.0 / 3.0);
  double prev = 0.0;
  for (int k = 0; k < 50; ++k) {
    const double nu = nu_star * (0.1 + 0.89 * k / 49.0);  // strictly below the kink
    const double r = kinetic_rate(s, nu);
    CHECK(r > prev);
    prev = r;
  }
  prev = kinetic_rate(s, nu_star * 1.01);
  for (int k = 1; k < 50; ++k) {
    const double nu = nu_star * (1.01 + 9.0 * k / 49.0);
    const double r = kinetic_rate(s, nu);
    CHECK(r < prev);
    prev = r;
  }
}

TEST_CASE("optimize_nu recovers the homothety closed form") {
  for (double lambda : {0.1, 1.0 / std::sqrt(2.0), 1.0, 2.0, 0.05}) {
    const PrecisionMatrix<double> s(MatrixXd(lambda * MatrixXd::Identity(2, 2)));
    const auto opt = optimize_nu(s);
    CHECK(opt.nu_star ==
          doctest::Approx(std::pow(4.0 * lambda, -1.0 / 3.0)).epsilon(1e-12));
    CHECK(opt.rate_star == doctest::Approx(std::cbrt(lambda / 2.0)).epsilon(1e-6));
    CHECK(opt.history.size() > 30);
  }

  // frozen values
  const PrecisionMatrix<double> s1(MatrixXd::Identity(2, 2));
  const auto o1 = optimize_nu(s1);
  CHECK(o1.nu_star == doctest::Approx(0.6299605249474366).epsilon(1e-12));
  CHECK(o1.rate_star == doctest::Approx(0.7937005259840998).epsilon(1e-6));
  const PrecisionMatrix<double> s2(MatrixXd(2.0 * MatrixXd::Identity(2, 2)));
  const auto o2 = optimize_nu(s2);
  CHECK(o2.nu_star == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(o2.rate_star == doctest::Approx(1.0).epsilon(1e-6));

  // general target: the slow branch of min sigma(S) governs the optimum
  const PrecisionMatrix<double> sd(Eigen::Vector2d(0.05, 1.0).asDiagonal());
  const auto od = optimize_nu(sd);
  CHECK(od.nu_star == doctest::Approx(1.7099759466766968).epsilon(1e-10));
  CHECK(od.rate_star == doctest::Approx(std::cbrt(0.025)).epsilon(1e-6));
  CHECK(od.rate_star > 0.0);

  // bracket history shrinks monotonically until the polish probes
  double lo_prev = 0.0, hi_prev = std::numeric_limits<double>::infinity();
  for (const auto& step : od.history) {
    if (step.lo == step.hi) continue;  // polish entry
    CHECK(step.lo >= lo_prev);
    CHECK(step.hi <= hi_prev);
    lo_prev = step.lo;
    hi_prev = step.hi;
  }
}

TEST_CASE("optimize_nu rejects monotone brackets and bad input") {
  const PrecisionMatrix<double> s(MatrixXd::Identity(2, 2));
  const double nu_star = std::pow(4.0, -1.0 / 3.0);
  // decreasing branch only
  CHECK_THROWS_AS(optimize_nu(s, 10.0 * nu_star, 100.0 * nu_star), std::domain_error);
  // increasing branch only
  CHECK_THROWS_AS(optimize_nu(s, nu_star / 1000.0, nu_star / 100.0), std::domain_error);
  CHECK_THROWS_AS(optimize_nu(s, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(optimize_nu(s, 2.0, 1.0), std::invalid_argument);
}

TEST_CASE("overdamped against kinetic: crossover at 1/sqrt(2)") {
  const double cross = 1.0 / std::sqrt(2.0);
  const auto tie = overdamped_vs_kinetic(cross);
  CHECK(tie.faster == FasterSampler::tie);
  CHECK(tie.overdamped_rate == cross);
  CHECK(std::abs(tie.kinetic_rate - cross) <= 1e-12);

  CHECK(overdamped_vs_kinetic(cross * (1.0 + 1e-9)).faster == FasterSampler::overdamped);
  CHECK(overdamped_vs_kinetic(cross * (1.0 - 1e-9)).faster == FasterSampler::kinetic);

  const auto one = overdamped_vs_kinetic(1.0);
  CHECK(one.faster == FasterSampler::overdamped);
  CHECK(one.kinetic_rate == doctest::Approx(0.7937005259840998).epsilon(1e-14));
  const auto tenth = overdamped_vs_kinetic(0.1);
  CHECK(tenth.faster == FasterSampler::kinetic);
  CHECK(tenth.kinetic_rate == doctest::Approx(0.36840314986403866).epsilon(1e-14));
  CHECK(overdamped_vs_kinetic(2.0).faster == FasterSampler::overdamped);

  CHECK_THROWS_AS(overdamped_vs_kinetic(0.0), std::invalid_argument);
  CHECK_THROWS_AS(overdamped_vs_kinetic(-3.0), std::invalid_argument);
}

TEST_CASE("the product law with velocity variance nu is stationary") {
  const PrecisionMatrix<double> s(seeded_spd(3, 10.0, 721));
  for (double nu : {0.3, 1.0}) {
    const KineticSpec<double> spec(s, nu);
    const MatrixXd a = kinetic_drift(spec);
    const MatrixXd d = kinetic_diffusion(spec);
    const GaussianLaw<double> law(VectorXd::Zero(6), product_covariance(s, nu));
    for (double t : {0.4, 1.7}) {
      const auto moved = evolve_law(law, a, d, t);
      CHECK(moved.mean().norm() <= 1e-9);
      CHECK((moved.cov() - law.cov()).norm() <= 1e-9 * law.cov().norm());
    }
  }
  // nu^2 in the velocity block is NOT stationary once nu != 1
  const KineticSpec<double> spec(s, 0.3);
  const GaussianLaw<double> wrong(VectorXd::Zero(6), product_covariance(s, 0.09));
  const auto moved = evolve_law(wrong, kinetic_drift(spec), kinetic_diffusion(spec), 1.0);
  CHECK((moved.cov() - wrong.cov()).norm() > 1e-3 * wrong.cov().norm());
}

TEST_CASE("variant drift: same product law, position equation rescaled") {
  const PrecisionMatrix<double> s(seeded_spd(2, 4.0, 733));
  const KineticSpec<double> spec(s, 0.7);
  const MatrixXd a = variant_drift(spec);
  CHECK((a.topRightCorner(2, 2) - (1.0 / 0.7) * MatrixXd::Identity(2, 2)).norm() == 0.0);
  CHECK((a.bottomLeftCorner(2, 2) + s.matrix()).norm() == 0.0);
  CHECK(general_eigenvalues(a).abscissa < 0.0);

  const GaussianLaw<double> law(VectorXd::Zero(4), product_covariance(s, 0.7));
  const auto moved = evolve_law(law, a, kinetic_diffusion(spec), 1.3);
  CHECK(moved.mean().norm() <= 1e-9);
  CHECK((moved.cov() - law.cov()).norm() <= 1e-9 * law.cov().norm());
}

TEST_CASE("kinetic closed forms instantiate beyond double") {
  using Mat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const PrecisionMatrix<long double> s(Mat(Mat::Identity(2, 2)));
  CHECK(static_cast<double>(kinetic_rate(s, 1.0L)) == doctest::Approx(0.5));
  const auto roots = kinetic_roots(1.0L, 0.5L);
  CHECK(static_cast<double>(roots.slow.real()) ==
        doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)));
}
