#include <doctest.h>

#include <ouaccel/evolution.hpp>
#include <ouaccel/simulate.hpp>

#include <cstdlib>
#include <cmath>

#include "oracles.hpp"

using namespace ouaccel;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

PrecisionMatrix<double> worked_target() {
  return PrecisionMatrix<double>(Eigen::Vector2d(0.05, 1.0).asDiagonal());
}

// exact first and second moments of the Euler chain X_{k+1} = (I + pA) X_k + noise
void discrete_moments(const MatrixXd& a, const MatrixXd& d, const VectorXd& x0, double p,
                      long steps, VectorXd& mean, MatrixXd& cov) {
  const MatrixXd m = MatrixXd::Identity(a.rows(), a.cols()) + p * a;
  mean = x0;
  cov = MatrixXd::Zero(a.rows(), a.cols());
  for (long k = 0; k < steps; ++k) {
    mean = m * mean;
    cov = m * cov * m.transpose() + 2.0 * p * d;
  }
}

long stored_sign_changes(const MatrixXd& path) {
  long count = 0;
  for (int k = 0; k + 1 < path.cols(); ++k)
    if (path(0, k) * path(0, k + 1) < 0.0) ++count;
  return count;
}

}  // namespace

TEST_CASE("configuration and double-well validation") {
  TrajectoryConfig<double> cfg;
  cfg.step = 0.0;
  CHECK_THROWS_AS(validate_config(cfg), std::invalid_argument);
  cfg.step = 1e-2;
  cfg.horizon = 1e-3;
  CHECK_THROWS_AS(validate_config(cfg), std::invalid_argument);
  cfg.horizon = 1.0;
  cfg.n_paths = 0;
  CHECK_THROWS_AS(validate_config(cfg), std::invalid_argument);
  cfg.n_paths = 1;
  cfg.max_stored_points = 1;
  CHECK_THROWS_AS(validate_config(cfg), std::invalid_argument);

  const DoubleWell<double> well(1.0, 2.0);
  CHECK(well.minimum == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(well.barrier == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(well.value(well.minimum) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(std::abs(well.grad(well.minimum)) <= 1e-12);
  CHECK(std::abs(well.grad(-well.minimum)) <= 1e-12);

  const DoubleWell<double> single(0.7, 0.0);
  CHECK(single.minimum == 0.0);
  CHECK(single.barrier == 0.0);

  CHECK_THROWS_AS(DoubleWell<double>(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(DoubleWell<double>(1.0, -1.0), std::invalid_argument);
}

TEST_CASE("batches are bit-identical across reruns and thread counts") {
  const PrecisionMatrix<double> s(seeded_spd(3, 10.0, 801));
  const auto design = build_design(s, Family::elliptic_optimal);
  TrajectoryConfig<double> cfg;
  cfg.step = 1e-3;
  cfg.horizon = 0.5;
  cfg.seed = 42;
  cfg.n_paths = 16;

  const auto ref = simulate_ou(design, cfg);
  CHECK(ref.rng_algorithm == std::string(kRngAlgorithm));
  CHECK(!ref.stability_flag);
  const auto rerun = simulate_ou(design, cfg);
  for (int i = 0; i < cfg.n_paths; ++i)
    CHECK((ref.paths[i] - rerun.paths[i]).norm() == 0.0);

  setenv("OUACCEL_THREADS", "4", 1);
  const auto threaded = simulate_ou(design, cfg);
  setenv("OUACCEL_THREADS", "1", 1);
  const auto serial = simulate_ou(design, cfg);
  unsetenv("OUACCEL_THREADS");
  for (int i = 0; i < cfg.n_paths; ++i) {
    CHECK((ref.paths[i] - threaded.paths[i]).norm() == 0.0);
    CHECK((ref.paths[i] - serial.paths[i]).norm() == 0.0);
  }

  const DoubleWell<double> well(1.0, 2.0);
  TrajectoryConfig<double> wcfg;
  wcfg.step = 1e-2;
  wcfg.horizon = 1.0;
  wcfg.seed = 9;
  wcfg.n_paths = 8;
  setenv("OUACCEL_THREADS", "3", 1);
  const auto w1 = simulate_langevin_doublewell(well, wcfg, true);
  unsetenv("OUACCEL_THREADS");
  const auto w2 = simulate_langevin_doublewell(well, wcfg, true);
  for (int i = 0; i < wcfg.n_paths; ++i) {
    CHECK((w1.batch.paths[i] - w2.batch.paths[i]).norm() == 0.0);
    CHECK(w1.crossings[i] == w2.crossings[i]);
  }
}

TEST_CASE("1-d reference chain reaches the stationary variance") {
  const PrecisionMatrix<double> s(MatrixXd::Identity(1, 1));
  const auto design = build_design(s, Family::reversible_identity);  // A = -1, D = 1
  TrajectoryConfig<double> cfg;
  cfg.step = 1e-3;
  cfg.horizon = 10.0;
  cfg.seed = 2024;
  cfg.n_paths = 10000;
  const auto batch = simulate_ou(design, cfg);
  const auto law = empirical_law(batch, batch.times.back());
  CHECK(std::abs(law.cov()(0, 0) - 1.0) <= 0.05);
  CHECK(std::abs(law.mean()(0)) <= 4.0 / std::sqrt(double(cfg.n_paths)));
}

TEST_CASE("degenerate noise: kernel coordinate is exactly deterministic") {
  const auto s = worked_target();
  const auto design = build_design(s, Family::hypoelliptic_optimal);
  REQUIRE(design.d.row(0).norm() == 0.0);
  CHECK(psd_factor(MatrixXd(2.0 * design.d)).row(0).norm() == 0.0);

  TrajectoryConfig<double> cfg;
  cfg.step = 1e-3;
  cfg.horizon = 0.05;
  cfg.seed = 5;
  cfg.n_paths = 3;
  VectorXd x0(2);
  x0 << 1.0, 1.0;
  cfg.initial = x0;
  const auto batch = simulate_ou(design, cfg);
  const double p = cfg.step;
  for (const auto& path : batch.paths)
    for (int k = 0; k + 1 < path.cols(); ++k)
      CHECK(path(0, k + 1) == path(0, k) + p * (design.a(0, 1) * path(1, k)));
}

TEST_CASE("common-noise coupling and its marginals") {
  const auto s = worked_target();
  const auto elliptic = build_design(s, Family::elliptic_optimal);
  const auto hypo = build_design(s, Family::hypoelliptic_optimal);
  MatrixXd split_map(2, 2);  // one noise channel fed by both Brownian components
  split_map << 0.0, 0.0, std::sqrt(2.0), std::sqrt(2.0);

  TrajectoryConfig<double> cfg;
  cfg.step = 1e-3;
  cfg.horizon = 0.2;
  cfg.seed = 77;
  cfg.n_paths = 5;

  const auto same = simulate_coupled(elliptic, elliptic, cfg);
  for (int i = 0; i < cfg.n_paths; ++i)
    CHECK((same.first.paths[i] - same.second.paths[i]).norm() == 0.0);

  const auto pair = simulate_coupled(elliptic, hypo, cfg, MatrixXd(), split_map);
  const auto alone_e = simulate_ou(elliptic, cfg, MatrixXd(), 2);
  const auto alone_h = simulate_ou(hypo, cfg, split_map, 2);
  for (int i = 0; i < cfg.n_paths; ++i) {
    CHECK((pair.first.paths[i] - alone_e.paths[i]).norm() == 0.0);
    CHECK((pair.second.paths[i] - alone_h.paths[i]).norm() == 0.0);
  }
  // the default driving dimension for this map already equals the shared one
  const auto alone_h_default = simulate_ou(hypo, cfg, split_map);
  for (int i = 0; i < cfg.n_paths; ++i)
    CHECK((alone_h_default.paths[i] - alone_h.paths[i]).norm() == 0.0);

  // wrong Gram matrix and wrong dimensions are rejected
  CHECK_THROWS_AS(simulate_ou(hypo, cfg, MatrixXd(MatrixXd::Identity(2, 2))),
                  std::invalid_argument);
  const PrecisionMatrix<double> s3(seeded_spd(3, 2.0, 802));
  const auto other = build_design(s3, Family::elliptic_optimal);
  CHECK_THROWS_AS(simulate_coupled(elliptic, other, cfg), std::invalid_argument);
}

TEST_CASE("empirical moments match the exact chain law; weak error is first order") {
  const auto s = worked_target();
  const auto design = build_design(s, Family::hypoelliptic_optimal);
  VectorXd x0(2);
  x0 << 1.0, 1.0;

  TrajectoryConfig<double> cfg;
  cfg.step = 1e-3;
  cfg.horizon = 1.0;
  cfg.seed = 31;
  cfg.n_paths = 2000;
  cfg.initial = x0;
  const auto batch = simulate_ou(design, cfg);
  const auto law = empirical_law(batch, batch.times.back());

  VectorXd mean_d;
  MatrixXd cov_d;
  discrete_moments(design.a, design.d, x0, cfg.step, 1000, mean_d, cov_d);
  for (int i = 0; i < 2; ++i) {
    const double se = std::sqrt(cov_d(i, i) / cfg.n_paths);
    CHECK(std::abs(law.mean()(i) - mean_d(i)) <= 5.0 * se);
    for (int j = 0; j < 2; ++j) {
      const double se_c =
          std::sqrt((cov_d(i, i) * cov_d(j, j) + cov_d(i, j) * cov_d(i, j)) / cfg.n_paths);
      CHECK(std::abs(law.cov()(i, j) - cov_d(i, j)) <= 6.0 * se_c);
    }
  }

  // Richardson triplet on the chain's exact moments against the exact law
  const GaussianLaw<double> start(x0, MatrixXd::Zero(2, 2));
  const auto exact = evolve_law(start, design, 1.0);
  double err_prev = -1.0;
  for (double p : {4e-3, 2e-3, 1e-3}) {
    VectorXd m;
    MatrixXd c;
    discrete_moments(design.a, design.d, x0, p, std::lround(1.0 / p), m, c);
    const double err = (m - exact.mean()).norm() + (c - exact.cov()).norm();
    if (err_prev > 0.0) {
      CHECK(err_prev / err >= 1.6);
      CHECK(err_prev / err <= 2.6);
    }
    err_prev = err;
  }
}

TEST_CASE("double well: crossing counts survive decimation, energy is recorded") {
  const DoubleWell<double> well(1.0, 2.0);
  TrajectoryConfig<double> cfg;
  cfg.step = 2e-3;
  cfg.horizon = 5.0;
  cfg.seed = 12;
  cfg.n_paths = 12;
  VectorXd x0k(2);
  x0k << -well.minimum, 0.0;
  cfg.initial = x0k;

  const auto kin = simulate_langevin_doublewell(well, cfg, true);
  CHECK(kin.kinetic);
  CHECK(kin.batch.paths[0].rows() == 2);
  CHECK(kin.crossings.size() == 12);
  // full storage: stored sign changes are the undecimated count
  for (int i = 0; i < cfg.n_paths; ++i)
    CHECK(stored_sign_changes(kin.batch.paths[i]) == kin.crossings[i]);
  // energy column recomputes from the stored state
  for (int k = 0; k < 5; ++k) {
    const double x = kin.batch.paths[3](0, k), y = kin.batch.paths[3](1, k);
    CHECK(kin.energy[3](k) == doctest::Approx(well.value(x) + 0.5 * y * y).epsilon(1e-14));
  }

  auto decimated_cfg = cfg;
  decimated_cfg.max_stored_points = 100;
  const auto dec = simulate_langevin_doublewell(well, decimated_cfg, true);
  CHECK(dec.batch.times.size() <= 100);
  CHECK(dec.batch.times.front() == 0.0);
  CHECK(dec.batch.times.back() == kin.batch.times.back());
  for (int i = 0; i < cfg.n_paths; ++i) CHECK(dec.crossings[i] == kin.crossings[i]);

  VectorXd x0r(1);
  x0r << -well.minimum;
  auto rcfg = cfg;
  rcfg.initial = x0r;
  const auto rev = simulate_langevin_doublewell(well, rcfg, false);
  CHECK(rev.batch.paths[0].rows() == 1);
  for (int i = 0; i < cfg.n_paths; ++i)
    CHECK(stored_sign_changes(rev.batch.paths[i]) == rev.crossings[i]);
  // position-only energy is the potential alone
  CHECK(rev.energy[0](0) == doctest::Approx(well.value(-well.minimum)).epsilon(1e-14));

  const DoubleWell<double> single(1.0, 0.0);
  auto scfg = rcfg;
  scfg.horizon = 0.1;
  const auto sw = simulate_langevin_doublewell(single, scfg, false);
  CHECK(sw.batch.paths[0].allFinite());
}

TEST_CASE("stability flag reacts to coarse steps") {
  const PrecisionMatrix<double> s(MatrixXd::Identity(1, 1));
  const auto design = build_design(s, Family::reversible_identity);
  TrajectoryConfig<double> cfg;
  cfg.step = 3.0;  // |1 - 3| = 2 > 1
  cfg.horizon = 3.0;
  const auto coarse = simulate_ou(design, cfg);
  CHECK(coarse.stability_flag);
  cfg.step = 1e-2;
  cfg.horizon = 0.1;
  CHECK(!simulate_ou(design, cfg).stability_flag);
}

TEST_CASE("law-valued starts and empirical_law guards") {
  const PrecisionMatrix<double> s(MatrixXd::Identity(1, 1));
  const auto design = build_design(s, Family::reversible_identity);
  VectorXd m0(1);
  m0 << 2.0;
  MatrixXd c0(1, 1);
  c0 << 0.25;
  TrajectoryConfig<double> cfg;
  cfg.step = 1e-3;
  cfg.horizon = 1e-3;
  cfg.seed = 88;
  cfg.n_paths = 4000;
  cfg.initial = GaussianLaw<double>(m0, c0);
  const auto batch = simulate_ou(design, cfg);
  const auto at0 = empirical_law(batch, 0.0);
  CHECK(std::abs(at0.mean()(0) - 2.0) <= 5.0 * 0.5 / std::sqrt(double(cfg.n_paths)));
  CHECK(std::abs(at0.cov()(0, 0) - 0.25) <=
        5.0 * 0.25 * std::sqrt(2.0 / double(cfg.n_paths)));

  CHECK_THROWS_AS(empirical_law(batch, 0.37), std::invalid_argument);
  auto tiny = cfg;
  tiny.n_paths = 1;
  CHECK_THROWS_AS(empirical_law(simulate_ou(design, tiny), 0.0), std::invalid_argument);

  auto wrong = cfg;
  VectorXd bad(3);
  bad << 1.0, 2.0, 3.0;
  wrong.initial = bad;
  CHECK_THROWS_AS(simulate_ou(design, wrong), std::invalid_argument);
}

TEST_CASE("simulation instantiates beyond double") {
  using Mat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const PrecisionMatrix<long double> s(Mat(Mat::Identity(2, 2)));
  const auto design = build_design(s, Family::elliptic_optimal);
  TrajectoryConfig<long double> cfg;
  cfg.step = 1e-2L;
  cfg.horizon = 0.05L;
  cfg.n_paths = 2;
  const auto batch = simulate_ou(design, cfg);
  CHECK(batch.paths.size() == 2);
  CHECK(batch.paths[0].allFinite());
}
