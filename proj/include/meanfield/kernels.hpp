#pragma once

// Pairwise interaction kernels K : R^d x R^d -> R^d.
//
// Every built-in kind is skew-symmetric, K(z, z') = -K(z', z), so the
// self-interaction K(z, z) vanishes. All kinds except the point vortex are
// globally Lipschitz with a closed-form bound stored in the spec.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "meanfield/core.hpp"
#include "meanfield/rng.hpp"

namespace meanfield {

enum class KernelKind { gaussian_odd, linear_rotation, vortex_point, vortex_blob, vlasov_mollified };

inline std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::gaussian_odd: return "gaussian_odd";
    case KernelKind::linear_rotation: return "linear_rotation";
    case KernelKind::vortex_point: return "vortex_point";
    case KernelKind::vortex_blob: return "vortex_blob";
    case KernelKind::vlasov_mollified: return "vlasov_mollified";
  }
  return "unknown";
}

struct KernelSpec {
  KernelKind kind = KernelKind::gaussian_odd;
  std::size_t dim = 2;
  double eps = 0.0;       // blob / mollifier length
  double coupling = 0.0;  // vlasov force strength
  double lipschitz_bound = 1.0;

  static KernelSpec gaussian_odd(std::size_t d) {
    return {KernelKind::gaussian_odd, d, 0.0, 0.0, 1.0};
  }
  static KernelSpec linear_rotation() { return {KernelKind::linear_rotation, 2, 0.0, 0.0, 1.0}; }
  static KernelSpec vortex_point() {
    return {KernelKind::vortex_point, 2, 0.0, 0.0, std::numeric_limits<double>::infinity()};
  }
  static KernelSpec vortex_blob(double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("vortex_blob needs eps > 0");
    return {KernelKind::vortex_blob, 2, eps, 0.0, 1.0 / (2.0 * std::numbers::pi * eps * eps)};
  }
  // Phase space (x, v) in R^m x R^m, so d = 2m.
  static KernelSpec vlasov_mollified(std::size_t d, double eps, double c) {
    if (d < 2 || d % 2 != 0) throw DimensionMismatch("vlasov_mollified needs even dimension");
    if (!(eps > 0.0)) throw std::invalid_argument("vlasov_mollified needs eps > 0");
    return {KernelKind::vlasov_mollified, d, eps, c, std::max(1.0, std::abs(c) / (eps * eps * eps))};
  }

  bool lipschitz() const { return kind != KernelKind::vortex_point; }
  bool is_vortex() const {
    return kind == KernelKind::vortex_point || kind == KernelKind::vortex_blob;
  }

  // out = K(z, zp). Hot path: no allocation, dimensions are the caller's job.
  void operator()(std::span<const double> z, std::span<const double> zp,
                  std::span<double> out) const {
    switch (kind) {
      case KernelKind::gaussian_odd: {
        double r2 = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
          const double u = z[k] - zp[k];
          out[k] = u;
          r2 += u * u;
        }
        const double g = std::exp(-r2);
        for (std::size_t k = 0; k < dim; ++k) out[k] *= g;
        return;
      }
      case KernelKind::linear_rotation: {
        const double ux = z[0] - zp[0], uy = z[1] - zp[1];
        out[0] = uy;
        out[1] = -ux;
        return;
      }
      case KernelKind::vortex_point:
      case KernelKind::vortex_blob: {
        const double ux = z[0] - zp[0], uy = z[1] - zp[1];
        const double r2 = ux * ux + uy * uy + eps * eps;
        if (r2 == 0.0) throw DomainError("point-vortex kernel evaluated at coincident points");
        const double c = -1.0 / (2.0 * std::numbers::pi * r2);
        out[0] = c * uy;
        out[1] = -c * ux;
        return;
      }
      case KernelKind::vlasov_mollified: {
        const std::size_t m = dim / 2;
        double r2 = eps * eps;
        for (std::size_t k = 0; k < m; ++k) {
          const double u = z[k] - zp[k];
          r2 += u * u;
        }
        const double s = coupling / (r2 * std::sqrt(r2));
        for (std::size_t k = 0; k < m; ++k) {
          out[k] = z[m + k] - zp[m + k];
          out[m + k] = s * (z[k] - zp[k]);
        }
        return;
      }
    }
  }

  std::vector<double> evaluate(std::span<const double> z, std::span<const double> zp) const {
    if (z.size() != dim || zp.size() != dim)
      throw DimensionMismatch("kernel expects points of dimension " + std::to_string(dim));
    std::vector<double> out(dim);
    (*this)(z, zp, out);
    return out;
  }
};

// Axis-aligned sampling region; the default is the cube [-5, 5]^d.
struct Box {
  std::vector<double> lo, hi;

  static Box cube(std::size_t d, double half_width) {
    return {std::vector<double>(d, -half_width), std::vector<double>(d, half_width)};
  }
  void sample(rng::SplitMix64& gen, std::span<double> out) const {
    for (std::size_t k = 0; k < lo.size(); ++k) out[k] = gen.uniform(lo[k], hi[k]);
  }
};

struct SkewReport {
  double max_violation = 0.0;
};

// Max over random pairs of |K(z,z') + K(z',z)|. Works for any callable with
// the (z, z', out) signature so that non-skew test kernels can be probed.
template <class Kernel>
SkewReport verify_skew(const Kernel& kernel, std::size_t dim, std::size_t n_samples,
                       std::uint64_t seed, const Box& box) {
  if (n_samples == 0) throw std::invalid_argument("verify_skew needs n_samples >= 1");
  rng::SplitMix64 gen(seed);
  std::vector<double> z(dim), zp(dim), a(dim), b(dim);
  SkewReport rep;
  for (std::size_t s = 0; s < n_samples; ++s) {
    box.sample(gen, z);
    box.sample(gen, zp);
    kernel(std::span<const double>(z), std::span<const double>(zp), std::span<double>(a));
    kernel(std::span<const double>(zp), std::span<const double>(z), std::span<double>(b));
    double v = 0.0;
    for (std::size_t k = 0; k < dim; ++k) v += (a[k] + b[k]) * (a[k] + b[k]);
    rep.max_violation = std::max(rep.max_violation, std::sqrt(v));
  }
  return rep;
}

inline SkewReport verify_skew(const KernelSpec& spec, std::size_t n_samples, std::uint64_t seed) {
  return verify_skew(spec, spec.dim, n_samples, seed, Box::cube(spec.dim, 5.0));
}

// Sampled Lipschitz constant. Half of the sample pairs are local (z2 a small
// perturbation of z1) so that the estimate sees the sup of the derivative, not
// only chord slopes; the second argument is probed the same way.
inline double estimate_lipschitz(const KernelSpec& spec, std::size_t n_samples,
                                 std::uint64_t seed, const Box& box) {
  if (!spec.lipschitz())
    throw UnsupportedKernel("vortex_point has no finite Lipschitz constant");
  if (box.lo.size() != spec.dim) throw DimensionMismatch("sampling box dimension mismatch");
  const std::size_t d = spec.dim;
  rng::SplitMix64 gen(seed);
  std::vector<double> z1(d), z2(d), zp(d), a(d), b(d);
  double best = 0.0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    box.sample(gen, z1);
    box.sample(gen, zp);
    if (s % 2 == 0) {
      box.sample(gen, z2);
    } else {
      // local probe around z1, scale 1e-4
      for (std::size_t k = 0; k < d; ++k) z2[k] = z1[k] + 1e-4 * (2.0 * gen.uniform() - 1.0);
    }
    const double dz = distance(z1, z2);
    if (dz == 0.0) continue;
    spec(z1, zp, a);
    spec(z2, zp, b);
    best = std::max(best, distance(a, b) / dz);
    spec(zp, z1, a);
    spec(zp, z2, b);
    best = std::max(best, distance(a, b) / dz);
  }
  return best;
}

inline double estimate_lipschitz(const KernelSpec& spec, std::size_t n_samples, std::uint64_t seed) {
  return estimate_lipschitz(spec, n_samples, seed, Box::cube(spec.dim, 5.0));
}

struct NamedValue {
  std::string name;
  double value;
};

// Diagnostics conserved by the flow. Always reports the weighted mean; vortex
// kinds add the Hamiltonian, center of vorticity and moment of inertia.
inline std::vector<NamedValue> conserved_quantities(const KernelSpec& spec,
                                                    const Configuration& cfg) {
  if (cfg.dim != spec.dim) throw DimensionMismatch("configuration/kernel dimension mismatch");
  std::vector<NamedValue> out;
  const double wsum = cfg.total_weight();
  for (std::size_t k = 0; k < cfg.dim; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < cfg.size(); ++i) s += cfg.weights[i] * cfg.point(i)[k];
    out.push_back({"mean_" + std::to_string(k), s / wsum});
  }
  if (!spec.is_vortex()) return out;

  const double eps2 = spec.eps * spec.eps;
  double h = 0.0;
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    for (std::size_t j = i + 1; j < cfg.size(); ++j) {
      const auto xi = cfg.point(i), xj = cfg.point(j);
      const double dx = xi[0] - xj[0], dy = xi[1] - xj[1];
      const double r2 = dx * dx + dy * dy + eps2;
      if (r2 == 0.0) throw DomainError("coincident point vortices in Hamiltonian");
      h += cfg.weights[i] * cfg.weights[j] * 0.5 * std::log(r2);
    }
  }
  h *= -1.0 / (4.0 * std::numbers::pi);
  double cx = 0.0, cy = 0.0, moment = 0.0;
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    const auto x = cfg.point(i);
    cx += cfg.weights[i] * x[0];
    cy += cfg.weights[i] * x[1];
    moment += cfg.weights[i] * (x[0] * x[0] + x[1] * x[1]);
  }
  out.push_back({"hamiltonian", h});
  out.push_back({"center_x", cx});
  out.push_back({"center_y", cy});
  out.push_back({"moment", moment});
  return out;
}

inline double lookup(const std::vector<NamedValue>& values, const std::string& name) {
  for (const auto& v : values)
    if (v.name == name) return v.value;
  throw std::out_of_range("no conserved quantity named " + name);
}

}  // namespace meanfield
