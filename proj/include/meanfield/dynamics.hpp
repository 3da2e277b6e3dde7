#pragma once

// Particle dynamics driven by a pairwise kernel:
//
//   dz_i/dt = sum_j w_j K(z_i, z_j)
//
// with w_j the probability weights (mean-field scaling) or raw vortex
// intensities. Fixed-step classical RK4 keeps every trajectory bitwise
// reproducible.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "meanfield/core.hpp"
#include "meanfield/kernels.hpp"

namespace meanfield {

struct IntegratorSettings {
  double dt = 1e-2;
  double substep_tolerance = 1e-10;  // target for step-halving validation
  std::size_t record_every = 1;      // store every k-th step (final state always stored)
  bool normalize = true;             // rescale weights to unit mass before use
  double collision_distance = 1e-6;  // vortex_point only
  unsigned threads = 1;
};

struct Trajectory {
  std::size_t dim = 0;
  std::vector<double> weights;             // as used by the flow
  std::vector<double> times;               // monotone in the direction of integration
  std::vector<std::vector<double>> states; // flat coords per recorded time
  double step = 0.0;                       // signed step actually used
  std::string method = "rk4";

  std::size_t particles() const { return weights.size(); }
  Configuration configuration(std::size_t k) const { return {dim, states[k], weights}; }
  const std::vector<double>& final_state() const { return states.back(); }
};

namespace detail {

// out_i = sum_{j != i} w_j K(z_i, z_j), j ascending. Parallel over i only, so
// the summation order per particle never depends on the thread count.
inline void accumulate_forces(const KernelSpec& kernel, std::size_t dim,
                              std::span<const double> coords, std::span<const double> w,
                              std::span<double> out, unsigned threads) {
  const std::size_t n = w.size();
  auto body = [&](std::size_t begin, std::size_t end) {
    std::vector<double> f(dim);
    for (std::size_t i = begin; i < end; ++i) {
      const auto zi = coords.subspan(i * dim, dim);
      double* oi = out.data() + i * dim;
      std::fill(oi, oi + dim, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        kernel(zi, coords.subspan(j * dim, dim), f);
        for (std::size_t k = 0; k < dim; ++k) oi[k] += w[j] * f[k];
      }
    }
  };
  if (threads <= 1 || n < 64) {
    body(0, n);
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t b = t * chunk, e = std::min(n, b + chunk);
    if (b < e) pool.emplace_back(body, b, e);
  }
}

inline double min_pair_distance(std::size_t dim, std::span<const double> coords) {
  const std::size_t n = coords.size() / dim;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      best = std::min(best, distance(coords.subspan(i * dim, dim), coords.subspan(j * dim, dim)));
  return best;
}

}  // namespace detail

inline Trajectory simulate_nbody(const KernelSpec& kernel, const Configuration& initial,
                                 double t_final, const IntegratorSettings& settings = {}) {
  if (initial.dim != kernel.dim)
    throw DimensionMismatch("initial configuration dimension does not match kernel");
  if (!(settings.dt > 0.0)) throw std::invalid_argument("integrator dt must be > 0");
  if (settings.record_every == 0) throw std::invalid_argument("record_every must be >= 1");

  Trajectory traj;
  traj.dim = initial.dim;
  traj.weights = initial.weights;
  if (settings.normalize) {
    const double s = initial.total_weight();
    if (!(s > 0.0)) throw std::invalid_argument("cannot normalize weights with non-positive mass");
    for (double& w : traj.weights) w /= s;
  }

  const std::size_t steps =
      t_final == 0.0 ? 0 : static_cast<std::size_t>(std::ceil(std::abs(t_final) / settings.dt - 1e-9));
  const double h = steps ? t_final / double(steps) : 0.0;
  traj.step = h;

  const std::size_t d = initial.dim;
  const std::size_t len = initial.coords.size();
  std::vector<double> z = initial.coords, k1(len), k2(len), k3(len), k4(len), tmp(len);
  const bool check_collisions = kernel.kind == KernelKind::vortex_point;

  auto rhs = [&](std::span<const double> state, std::span<double> out, double t) {
    if (check_collisions && detail::min_pair_distance(d, state) < settings.collision_distance)
      throw CollisionError("point vortices collided at t=" + std::to_string(t), t);
    try {
      detail::accumulate_forces(kernel, d, state, traj.weights, out, settings.threads);
    } catch (const DomainError&) {
      throw CollisionError("point vortices collided at t=" + std::to_string(t), t);
    }
  };

  traj.times.push_back(0.0);
  traj.states.push_back(z);
  for (std::size_t s = 0; s < steps; ++s) {
    const double t = double(s) * h;
    rhs(z, k1, t);
    for (std::size_t i = 0; i < len; ++i) tmp[i] = z[i] + 0.5 * h * k1[i];
    rhs(tmp, k2, t + 0.5 * h);
    for (std::size_t i = 0; i < len; ++i) tmp[i] = z[i] + 0.5 * h * k2[i];
    rhs(tmp, k3, t + 0.5 * h);
    for (std::size_t i = 0; i < len; ++i) tmp[i] = z[i] + h * k3[i];
    rhs(tmp, k4, t + h);
    for (std::size_t i = 0; i < len; ++i)
      z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    if (!std::all_of(z.begin(), z.end(), [](double x) { return std::isfinite(x); }))
      throw BlowUpError("non-finite state at t=" + std::to_string(t + h));
    if ((s + 1) % settings.record_every == 0 || s + 1 == steps) {
      traj.times.push_back(s + 1 == steps ? t_final : double(s + 1) * h);
      traj.states.push_back(z);
    }
  }
  if (check_collisions && detail::min_pair_distance(d, z) < settings.collision_distance)
    throw CollisionError("point vortices collided at t=" + std::to_string(t_final), t_final);
  return traj;
}

// ---------------------------------------------------------------------------
// Mean-field characteristic flow by Picard iteration
// ---------------------------------------------------------------------------

struct PicardResult {
  std::size_t dim = 0;
  double t_final = 0.0;
  std::vector<double> values;      // Z(t_final, zeta) per query point, flat
  std::vector<double> deviations;  // d_n = sup_{s, query} |Z_{n+1} - Z_n| / (1 + |zeta|)
  std::size_t iterations = 0;
  double first_moment = 0.0;       // C1 = int |z| mu_in(dz)

  std::span<const double> value(std::size_t q) const { return {values.data() + q * dim, dim}; }
};

struct PicardSettings {
  std::size_t max_iters = 100;
  double quadrature_dt = 1e-3;
  double tolerance = 1e-13;  // stop once d_n falls below this
};

// Iterates Z_{n+1}(t, zeta) = zeta + int_0^t int K(Z_n(s, zeta), Z_n(s, zeta')) mu_in(dzeta') ds
// starting from Z_0(t, zeta) = zeta. The time integral is the cumulative
// trapezoid rule on a uniform grid, so the fixed point carries an
// O(quadrature_dt^2) bias relative to the continuous flow.
inline PicardResult characteristic_flow_picard(const KernelSpec& kernel, const EmpiricalMeasure& mu_in,
                                               std::span<const double> query_points, double t_final,
                                               const PicardSettings& settings = {}) {
  if (!kernel.lipschitz()) throw UnsupportedKernel("Picard iteration needs a Lipschitz kernel");
  const std::size_t d = mu_in.dim();
  if (d != kernel.dim) throw DimensionMismatch("measure/kernel dimension mismatch");
  if (query_points.size() % d != 0) throw DimensionMismatch("query points dimension mismatch");
  if (!(settings.quadrature_dt > 0.0)) throw std::invalid_argument("quadrature_dt must be > 0");

  const std::size_t n_atoms = mu_in.size();
  const std::size_t n_query = query_points.size() / d;
  const std::size_t n_pts = n_atoms + n_query;  // atoms first, then queries

  PicardResult res;
  res.dim = d;
  res.t_final = t_final;
  res.first_moment = mu_in.integrate([](std::span<const double> z) { return norm(z); });

  std::vector<double> base(n_pts * d);
  std::copy(mu_in.atoms().begin(), mu_in.atoms().end(), base.begin());
  std::copy(query_points.begin(), query_points.end(), base.begin() + n_atoms * d);

  if (t_final == 0.0) {
    res.values.assign(query_points.begin(), query_points.end());
    return res;
  }

  const std::size_t m = static_cast<std::size_t>(std::ceil(std::abs(t_final) / settings.quadrature_dt - 1e-9));
  const double h = t_final / double(m);
  const std::size_t slab = n_pts * d;  // one time slice

  std::vector<double> cur((m + 1) * slab), next((m + 1) * slab), field((m + 1) * slab);
  for (std::size_t s = 0; s <= m; ++s) std::copy(base.begin(), base.end(), cur.begin() + s * slab);

  std::vector<double> weight_norm(n_query);
  for (std::size_t q = 0; q < n_query; ++q)
    weight_norm[q] = 1.0 + norm(query_points.subspan(q * d, d));

  std::vector<double> f(d);
  for (std::size_t it = 0; it < settings.max_iters; ++it) {
    // field(s, p) = sum_j w_j K(Z_n(s, p), Z_n(s, atom_j))
    for (std::size_t s = 0; s <= m; ++s) {
      const double* zs = cur.data() + s * slab;
      double* fs = field.data() + s * slab;
      for (std::size_t p = 0; p < n_pts; ++p) {
        double* fp = fs + p * d;
        std::fill(fp, fp + d, 0.0);
        for (std::size_t j = 0; j < n_atoms; ++j) {
          kernel(std::span<const double>(zs + p * d, d), std::span<const double>(zs + j * d, d), f);
          for (std::size_t k = 0; k < d; ++k) fp[k] += mu_in.weight(j) * f[k];
        }
      }
    }
    // cumulative trapezoid
    std::copy(base.begin(), base.end(), next.begin());
    for (std::size_t s = 1; s <= m; ++s) {
      const double* fa = field.data() + (s - 1) * slab;
      const double* fb = field.data() + s * slab;
      const double* prev = next.data() + (s - 1) * slab;
      double* out = next.data() + s * slab;
      for (std::size_t i = 0; i < slab; ++i) out[i] = prev[i] + 0.5 * h * (fa[i] + fb[i]);
    }
    double dev = 0.0;
    for (std::size_t s = 0; s <= m; ++s) {
      for (std::size_t q = 0; q < n_query; ++q) {
        const std::size_t off = s * slab + (n_atoms + q) * d;
        const double diff = distance(std::span<const double>(next.data() + off, d),
                                     std::span<const double>(cur.data() + off, d));
        dev = std::max(dev, diff / weight_norm[q]);
      }
    }
    res.deviations.push_back(dev);
    cur.swap(next);
    res.iterations = it + 1;
    if (dev <= settings.tolerance) {
      const double* last = cur.data() + m * slab + n_atoms * d;
      res.values.assign(last, last + n_query * d);
      return res;
    }
  }
  throw IterationLimitError("Picard iteration did not converge within " +
                                std::to_string(settings.max_iters) + " iterations",
                            res.deviations);
}

// Transports the atoms of mu_in along a flow evaluated at those same atoms.
inline EmpiricalMeasure pushforward(const PicardResult& flow, const EmpiricalMeasure& mu_in) {
  if (flow.dim != mu_in.dim() || flow.values.size() != mu_in.atoms().size())
    throw DimensionMismatch("flow must be evaluated at every atom of the measure");
  return EmpiricalMeasure(mu_in.dim(), flow.values, mu_in.weights());
}

inline EmpiricalMeasure pushforward(const Trajectory& traj, std::size_t index) {
  return EmpiricalMeasure(traj.dim, traj.states.at(index), traj.weights);
}

// ---------------------------------------------------------------------------
// Weak form of the mean-field equation along a particle trajectory
// ---------------------------------------------------------------------------

struct TestFunctionPair {
  std::function<double(std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;
};

// | d/dt <mu(t), phi> - <mu(t), (K mu(t)) . grad phi> | at a recorded interior
// time, with the time derivative by centered difference over neighbours.
inline double weak_solution_residual(const KernelSpec& kernel, const Trajectory& traj,
                                     const TestFunctionPair& phi, double t) {
  const auto& ts = traj.times;
  const auto it = std::min_element(ts.begin(), ts.end(), [t](double a, double b) {
    return std::abs(a - t) < std::abs(b - t);
  });
  const std::size_t idx = static_cast<std::size_t>(it - ts.begin());
  const double tol = 1e-9 * std::max(1.0, std::abs(t));
  if (ts.empty() || std::abs(ts[idx] - t) > tol)
    throw std::invalid_argument("t is not a recorded time of the trajectory");
  if (idx == 0 || idx + 1 >= ts.size())
    throw std::invalid_argument("weak residual needs an interior time point");

  const std::size_t d = traj.dim, n = traj.particles();
  auto pairing = [&](const std::vector<double>& st) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += traj.weights[i] * phi.value(std::span<const double>(st.data() + i * d, d));
    return s;
  };
  const double dphi = (pairing(traj.states[idx + 1]) - pairing(traj.states[idx - 1])) /
                      (ts[idx + 1] - ts[idx - 1]);

  const auto& st = traj.states[idx];
  std::vector<double> forces(st.size()), g(d);
  detail::accumulate_forces(kernel, d, st, traj.weights, forces, 1);
  double rhs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    phi.gradient(std::span<const double>(st.data() + i * d, d), g);
    double dot = 0.0;
    for (std::size_t k = 0; k < d; ++k) dot += forces[i * d + k] * g[k];
    rhs += traj.weights[i] * dot;
  }
  return std::abs(dphi - rhs);
}

}  // namespace meanfield
