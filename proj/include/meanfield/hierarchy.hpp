#pragma once

// Truncations of the linear hierarchy dy_k/dt = k y_{k+1}, whose factorized
// solution y_k = x^k is driven by the Riccati equation dx/dt = x^2, that is
// x(t) = x_in / (1 - t x_in).

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "meanfield/core.hpp"

namespace meanfield::hierarchy {

enum class Closure { zero, factorized };

inline std::string to_string(Closure c) { return c == Closure::zero ? "zero" : "factorized"; }

// y_k(t) = (x_in / (1 - t x_in))^k for k = 1..K.
inline std::vector<double> riccati_reference(double x_in, double t, std::size_t K) {
  if (t * x_in >= 1.0) throw DomainError("t * x_in >= 1: past the Riccati blow-up time");
  const double x = x_in / (1.0 - t * x_in);
  std::vector<double> y(K);
  double p = 1.0;
  for (std::size_t k = 0; k < K; ++k) y[k] = (p *= x);
  return y;
}

struct HierarchyTrajectory {
  std::size_t levels = 0;
  Closure closure = Closure::zero;
  std::vector<double> times;
  std::vector<std::vector<double>> states;  // y_1..y_K per recorded time
};

// RK4 on the K-level truncation. The last equation reads
// dy_K/dt = K * closure, with closure = 0 or y_1^{K+1}.
inline HierarchyTrajectory solve_truncated(double x_in, std::size_t K, Closure closure, double t_final,
                                           double dt, std::size_t record_every = 1) {
  if (K < 1) throw std::invalid_argument("truncation level K must be >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  if (record_every == 0) throw std::invalid_argument("record_every must be >= 1");

  HierarchyTrajectory tr;
  tr.levels = K;
  tr.closure = closure;
  std::vector<double> y(K), k1(K), k2(K), k3(K), k4(K), tmp(K);
  double p = 1.0;
  for (std::size_t k = 0; k < K; ++k) y[k] = (p *= x_in);

  auto rhs = [&](const std::vector<double>& s, std::vector<double>& out) {
    for (std::size_t k = 0; k + 1 < K; ++k) out[k] = double(k + 1) * s[k + 1];
    const double c = closure == Closure::zero ? 0.0 : std::pow(s[0], double(K + 1));
    out[K - 1] = double(K) * c;
  };

  const std::size_t steps =
      t_final == 0.0 ? 0 : static_cast<std::size_t>(std::ceil(std::abs(t_final) / dt - 1e-9));
  const double h = steps ? t_final / double(steps) : 0.0;
  tr.times.push_back(0.0);
  tr.states.push_back(y);
  for (std::size_t s = 0; s < steps; ++s) {
    rhs(y, k1);
    for (std::size_t k = 0; k < K; ++k) tmp[k] = y[k] + 0.5 * h * k1[k];
    rhs(tmp, k2);
    for (std::size_t k = 0; k < K; ++k) tmp[k] = y[k] + 0.5 * h * k2[k];
    rhs(tmp, k3);
    for (std::size_t k = 0; k < K; ++k) tmp[k] = y[k] + h * k3[k];
    rhs(tmp, k4);
    for (std::size_t k = 0; k < K; ++k) {
      y[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
      if (!std::isfinite(y[k]) || std::abs(y[k]) > 1e300)
        throw BlowUpError("hierarchy solution exceeded 1e300 at t=" + std::to_string(double(s + 1) * h));
    }
    if ((s + 1) % record_every == 0 || s + 1 == steps) {
      tr.times.push_back(s + 1 == steps ? t_final : double(s + 1) * h);
      tr.states.push_back(y);
    }
  }
  return tr;
}

struct GrowthProfile {
  std::vector<double> max_abs;  // max_t |y_k(t)|, k = 1..K
  double radius = 0.0;          // smallest R with max_t |y_k| <= R^k for all k
};

inline GrowthProfile growth_profile(const HierarchyTrajectory& tr) {
  if (tr.states.empty()) throw std::invalid_argument("growth_profile needs a nonempty trajectory");
  GrowthProfile g;
  g.max_abs.assign(tr.levels, 0.0);
  for (const auto& s : tr.states)
    for (std::size_t k = 0; k < tr.levels; ++k) g.max_abs[k] = std::max(g.max_abs[k], std::abs(s[k]));
  for (std::size_t k = 0; k < tr.levels; ++k)
    g.radius = std::max(g.radius, std::pow(g.max_abs[k], 1.0 / double(k + 1)));
  return g;
}

}  // namespace meanfield::hierarchy
