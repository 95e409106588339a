#pragma once

// Euler-Maruyama simulation of the sampler SDEs: linear drifts from the
// design layer, the nonlinear double-well Langevin demo, and common-noise
// coupling of two schemes. Every path is a pure function of (seed, path
// index), so batches are bit-identical across serial and threaded runs and
// any path can be regenerated alone.

#include <ouaccel/design.hpp>
#include <ouaccel/evolution.hpp>
#include <ouaccel/rng.hpp>

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

namespace ouaccel {

template <typename Scalar = double>
struct TrajectoryConfig {
  Scalar step = Scalar(1e-3);
  Scalar horizon = Scalar(1);
  std::uint64_t seed = 0;
  int n_paths = 1;
  // empty vector = start at the origin; a GaussianLaw start draws one sample
  // per path before any step noise
  std::variant<VectorX<Scalar>, GaussianLaw<Scalar>> initial;
  int max_stored_points = 100000;  // per path; stepping is never decimated
};

template <typename Scalar>
void validate_config(const TrajectoryConfig<Scalar>& cfg) {
  if (!(cfg.step > Scalar(0)) || !std::isfinite(static_cast<double>(cfg.step)))
    throw std::invalid_argument("TrajectoryConfig: step must be positive and finite");
  if (!(cfg.horizon >= cfg.step) || !std::isfinite(static_cast<double>(cfg.horizon)))
    throw std::invalid_argument("TrajectoryConfig: horizon must be >= step and finite");
  if (cfg.n_paths < 1) throw std::invalid_argument("TrajectoryConfig: n_paths must be >= 1");
  if (cfg.max_stored_points < 2)
    throw std::invalid_argument("TrajectoryConfig: max_stored_points must be >= 2");
}

template <typename Scalar = double>
struct TrajectoryBatch {
  std::uint64_t seed = 0;
  Scalar step = Scalar(0);
  Scalar horizon = Scalar(0);
  int n_paths = 0;
  std::string rng_algorithm;
  bool stability_flag = false;  // spectral radius of I + step*A exceeded 1
  std::vector<Scalar> times;                // stored grid, shared by all paths
  std::vector<MatrixX<Scalar>> paths;       // one (dim x times.size()) block per path
};

namespace detail {

inline int simulation_threads() {
  if (const char* env = std::getenv("OUACCEL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<int>(std::min(v, 512L));
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

// Runs fn(path_index) over [0, n_paths) on the configured number of threads.
// Work items must be independent; the first exception is rethrown.
template <typename Fn>
void for_each_path(int n_paths, Fn&& fn) {
  const int threads = std::min(simulation_threads(), n_paths);
  if (threads <= 1) {
    for (int i = 0; i < n_paths; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const int chunk = (n_paths + threads - 1) / threads;
  for (int w = 0; w < threads; ++w) {
    const int lo = w * chunk, hi = std::min(n_paths, lo + chunk);
    pool.emplace_back([&, w, lo, hi] {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Indices kept when a path of count points is decimated to at most cap
// stored points; the first and last index always survive.
inline std::vector<long> stored_indices(long count, long cap) {
  std::vector<long> idx;
  const long stride = count <= cap ? 1 : (count + cap - 2) / (cap - 1);
  for (long k = 0; k < count; k += stride) idx.push_back(k);
  if (idx.back() != count - 1) idx.push_back(count - 1);
  return idx;
}

template <typename Scalar>
VectorX<Scalar> draw_normals(CounterRng& rng, int m) {
  VectorX<Scalar> z(m);
  for (int i = 0; i < m; ++i) z(i) = Scalar(rng.next_normal());
  return z;
}

}  // namespace detail

// Discrete paths of dX = A X dt + G dW with G G^T = 2D:
//   X_{k+1} = X_k + p A X_k + sqrt(p) G z_k.
// By default G = psd_factor(2D), so kernel coordinates of D get bitwise-zero
// noise. A custom noise_map with the same Gram matrix may widen the driving
// dimension (e.g. one noise channel split across two Brownian components for
// common-noise experiments). shared_noise_dim > cols(G) draws that many
// normals per step and uses only the leading cols(G): two schemes stepped
// with the same (seed, path) and the same shared_noise_dim then see the same
// Brownian increments.
template <typename Scalar>
TrajectoryBatch<Scalar> simulate_ou(const SamplerDesign<Scalar>& design,
                                    const TrajectoryConfig<Scalar>& cfg,
                                    const MatrixX<Scalar>& noise_map = MatrixX<Scalar>(),
                                    int shared_noise_dim = 0) {
  validate_config(cfg);
  const int n = design.n;
  MatrixX<Scalar> g;
  if (noise_map.size() == 0) {
    g = psd_factor(MatrixX<Scalar>(Scalar(2) * design.d));
  } else {
    if (noise_map.rows() != n)
      throw std::invalid_argument("simulate_ou: noise_map must have one row per coordinate");
    const Scalar mismatch = (noise_map * noise_map.transpose() - Scalar(2) * design.d).norm();
    if (mismatch > Scalar(1e-9) * std::max(Scalar(1), Scalar(2) * design.d.norm())) {
      std::ostringstream os;
      os << "simulate_ou: noise_map Gram matrix differs from 2D by " << mismatch;
      throw std::invalid_argument(os.str());
    }
    g = noise_map;
  }
  const int m = static_cast<int>(g.cols());
  const int draw = std::max(m, shared_noise_dim);

  const Scalar p = cfg.step;
  const long n_steps = std::lround(static_cast<double>(cfg.horizon / p));
  const auto kept = detail::stored_indices(n_steps + 1, cfg.max_stored_points);

  TrajectoryBatch<Scalar> out;
  out.seed = cfg.seed;
  out.step = p;
  out.horizon = cfg.horizon;
  out.n_paths = cfg.n_paths;
  out.rng_algorithm = kRngAlgorithm;
  {
    const auto sp = general_eigenvalues(design.a);
    Scalar radius = Scalar(0);
    for (int i = 0; i < sp.values.size(); ++i)
      radius = std::max(radius, std::abs(Scalar(1) + p * sp.values(i)));
    out.stability_flag = radius > Scalar(1);
  }
  out.times.reserve(kept.size());
  for (long k : kept) out.times.push_back(Scalar(k) * p);
  out.paths.assign(cfg.n_paths, MatrixX<Scalar>(n, kept.size()));

  const bool law_start = std::holds_alternative<GaussianLaw<Scalar>>(cfg.initial);
  VectorX<Scalar> point_start;
  MatrixX<Scalar> law_factor;
  VectorX<Scalar> law_mean;
  if (law_start) {
    const auto& law = std::get<GaussianLaw<Scalar>>(cfg.initial);
    if (law.n() != n) throw std::invalid_argument("simulate_ou: initial law dimension mismatch");
    law_factor = psd_factor(law.cov());
    law_mean = law.mean();
  } else {
    point_start = std::get<VectorX<Scalar>>(cfg.initial);
    if (point_start.size() == 0) point_start = VectorX<Scalar>::Zero(n);
    if (point_start.size() != n)
      throw std::invalid_argument("simulate_ou: initial point dimension mismatch");
  }

  const Scalar sqrt_p = std::sqrt(p);
  const MatrixX<Scalar> a = design.a;
  detail::for_each_path(cfg.n_paths, [&](int path) {
    CounterRng rng(cfg.seed, static_cast<std::uint64_t>(path));
    VectorX<Scalar> x =
        law_start
            ? VectorX<Scalar>(law_mean +
                              law_factor * detail::draw_normals<Scalar>(
                                               rng, static_cast<int>(law_factor.cols())))
            : point_start;
    MatrixX<Scalar>& slot = out.paths[static_cast<std::size_t>(path)];
    std::size_t cursor = 0;
    if (kept[cursor] == 0) slot.col(static_cast<int>(cursor++)) = x;
    for (long k = 1; k <= n_steps; ++k) {
      const VectorX<Scalar> z = detail::draw_normals<Scalar>(rng, draw);
      x += p * (a * x) + sqrt_p * (g * z.head(m));
      if (cursor < kept.size() && kept[cursor] == k)
        slot.col(static_cast<int>(cursor++)) = x;
    }
  });
  return out;
}

template <typename Scalar = double>
struct CoupledBatch {
  TrajectoryBatch<Scalar> first;
  TrajectoryBatch<Scalar> second;
};

// Two designs driven by one Brownian stream: per (seed, path, step) the same
// increments feed both schemes, each through its own noise map. Marginally
// each batch equals simulate_ou with shared_noise_dim = max of the two
// driving dimensions.
template <typename Scalar>
CoupledBatch<Scalar> simulate_coupled(const SamplerDesign<Scalar>& design_a,
                                      const SamplerDesign<Scalar>& design_b,
                                      const TrajectoryConfig<Scalar>& cfg,
                                      const MatrixX<Scalar>& noise_map_a = MatrixX<Scalar>(),
                                      const MatrixX<Scalar>& noise_map_b = MatrixX<Scalar>()) {
  if (design_a.n != design_b.n)
    throw std::invalid_argument("simulate_coupled: designs have different dimensions");
  const auto width = [](const SamplerDesign<Scalar>& d, const MatrixX<Scalar>& map) {
    return static_cast<int>(map.size() ? map.cols()
                                       : psd_factor(MatrixX<Scalar>(Scalar(2) * d.d)).cols());
  };
  const int shared = std::max(width(design_a, noise_map_a), width(design_b, noise_map_b));
  CoupledBatch<Scalar> out;
  out.first = simulate_ou(design_a, cfg, noise_map_a, shared);
  out.second = simulate_ou(design_b, cfg, noise_map_b, shared);
  return out;
}

// V(x) = a x^4 - b x^2: minima at +-sqrt(b/(2a)) of depth b^2/(4a), which is
// also the barrier height seen from either well. b = 0 degenerates to a
// single well at the origin.
template <typename Scalar = double>
struct DoubleWell {
  DoubleWell(Scalar a_in, Scalar b_in) : a(a_in), b(b_in) {
    if (!(a > Scalar(0)) || !std::isfinite(static_cast<double>(a)) || !(b >= Scalar(0)) ||
        !std::isfinite(static_cast<double>(b)))
      throw std::invalid_argument("DoubleWell: need a > 0 and b >= 0, finite");
    minimum = std::sqrt(b / (Scalar(2) * a));
    barrier = b * b / (Scalar(4) * a);
    const Scalar residual = std::abs(value(minimum) + barrier);
    if (residual > Scalar(1e-12) * (Scalar(1) + barrier))
      throw std::logic_error("DoubleWell: minima/barrier consistency check failed");
  }
  Scalar value(Scalar x) const { return a * x * x * x * x - b * x * x; }
  Scalar grad(Scalar x) const { return Scalar(4) * a * x * x * x - Scalar(2) * b * x; }
  Scalar a, b;
  Scalar minimum;  // wells at +-minimum
  Scalar barrier;  // = -V(minimum)
};

template <typename Scalar = double>
struct DoubleWellBatch {
  TrajectoryBatch<Scalar> batch;  // row 0: x; row 1 (kinetic only): y
  bool kinetic = false;
  std::vector<long> crossings;          // sign changes of x, counted before decimation
  std::vector<VectorX<Scalar>> energy;  // H = V(x) + y^2/2 on the stored grid
};

// Euler-Maruyama for the double-well Langevin dynamics: position-only
//   dX = -V'(X) dt + sqrt(2) dB
// or kinetic
//   dX = Y dt, dY = (-V'(X) - Y) dt + sqrt(2) dB.
// Both modes consume exactly one normal per step, so runs with the same
// (seed, config) and a point start see the same Brownian increments; that is
// the matched-noise comparison the crossing statistics are meant for.
template <typename Scalar>
DoubleWellBatch<Scalar> simulate_langevin_doublewell(const DoubleWell<Scalar>& well,
                                                     const TrajectoryConfig<Scalar>& cfg,
                                                     bool kinetic) {
  validate_config(cfg);
  const int dim = kinetic ? 2 : 1;
  const Scalar p = cfg.step;
  const long n_steps = std::lround(static_cast<double>(cfg.horizon / p));
  const auto kept = detail::stored_indices(n_steps + 1, cfg.max_stored_points);

  DoubleWellBatch<Scalar> out;
  out.kinetic = kinetic;
  auto& batch = out.batch;
  batch.seed = cfg.seed;
  batch.step = p;
  batch.horizon = cfg.horizon;
  batch.n_paths = cfg.n_paths;
  batch.rng_algorithm = kRngAlgorithm;
  batch.times.reserve(kept.size());
  for (long k : kept) batch.times.push_back(Scalar(k) * p);
  batch.paths.assign(cfg.n_paths, MatrixX<Scalar>(dim, kept.size()));
  out.crossings.assign(cfg.n_paths, 0);
  out.energy.assign(cfg.n_paths, VectorX<Scalar>(kept.size()));

  const bool law_start = std::holds_alternative<GaussianLaw<Scalar>>(cfg.initial);
  VectorX<Scalar> point_start;
  MatrixX<Scalar> law_factor;
  VectorX<Scalar> law_mean;
  if (law_start) {
    const auto& law = std::get<GaussianLaw<Scalar>>(cfg.initial);
    if (law.n() != dim)
      throw std::invalid_argument("simulate_langevin_doublewell: initial law dimension mismatch");
    law_factor = psd_factor(law.cov());
    law_mean = law.mean();
  } else {
    point_start = std::get<VectorX<Scalar>>(cfg.initial);
    if (point_start.size() == 0) point_start = VectorX<Scalar>::Zero(dim);
    if (point_start.size() != dim)
      throw std::invalid_argument("simulate_langevin_doublewell: initial point dimension mismatch");
  }

  const Scalar noise_scale = std::sqrt(Scalar(2)) * std::sqrt(p);
  detail::for_each_path(cfg.n_paths, [&](int path) {
    CounterRng rng(cfg.seed, static_cast<std::uint64_t>(path));
    VectorX<Scalar> state =
        law_start
            ? VectorX<Scalar>(law_mean +
                              law_factor * detail::draw_normals<Scalar>(
                                               rng, static_cast<int>(law_factor.cols())))
            : point_start;
    MatrixX<Scalar>& slot = batch.paths[static_cast<std::size_t>(path)];
    VectorX<Scalar>& h_slot = out.energy[static_cast<std::size_t>(path)];
    long& crossings = out.crossings[static_cast<std::size_t>(path)];
    const auto record = [&](std::size_t cursor) {
      slot.col(static_cast<int>(cursor)) = state;
      const Scalar y = kinetic ? state(1) : Scalar(0);
      h_slot(static_cast<int>(cursor)) = well.value(state(0)) + Scalar(0.5) * y * y;
    };
    std::size_t cursor = 0;
    if (kept[cursor] == 0) record(cursor++);
    for (long k = 1; k <= n_steps; ++k) {
      const Scalar z = Scalar(rng.next_normal());
      const Scalar x_old = state(0);
      if (kinetic) {
        const Scalar y_old = state(1);
        state(0) = x_old + p * y_old;
        state(1) = y_old + p * (-well.grad(x_old) - y_old) + noise_scale * z;
      } else {
        state(0) = x_old + p * (-well.grad(x_old)) + noise_scale * z;
      }
      if (x_old * state(0) < Scalar(0)) ++crossings;
      if (cursor < kept.size() && kept[cursor] == k) record(cursor++);
    }
  });
  return out;
}

// Sample mean and covariance across paths at a stored time.
template <typename Scalar>
GaussianLaw<Scalar> empirical_law(const TrajectoryBatch<Scalar>& batch, Scalar t) {
  if (batch.n_paths < 2)
    throw std::invalid_argument("empirical_law: need at least 2 paths for a covariance");
  long col = -1;
  for (std::size_t j = 0; j < batch.times.size(); ++j)
    if (std::abs(batch.times[j] - t) <= Scalar(1e-9) * std::max(Scalar(1), std::abs(t))) {
      col = static_cast<long>(j);
      break;
    }
  if (col < 0) {
    std::ostringstream os;
    os << "empirical_law: t = " << t << " is not on the stored grid";
    throw std::invalid_argument(os.str());
  }
  const int n = static_cast<int>(batch.paths.front().rows());
  VectorX<Scalar> mean = VectorX<Scalar>::Zero(n);
  for (const auto& path : batch.paths) mean += path.col(col);
  mean /= Scalar(batch.n_paths);
  MatrixX<Scalar> cov = MatrixX<Scalar>::Zero(n, n);
  for (const auto& path : batch.paths) {
    const VectorX<Scalar> d = path.col(col) - mean;
    cov += d * d.transpose();
  }
  cov /= Scalar(batch.n_paths - 1);
  return GaussianLaw<Scalar>(mean, cov);
}

}  // namespace ouaccel
