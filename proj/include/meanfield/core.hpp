#pragma once

// Shared value types and error hierarchy for the mean-field toolkit.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace meanfield {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct UnsupportedKernel : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Failures of a numerical procedure on otherwise valid input (collisions,
// blow-up, non-convergence). The harness maps these to exit status 3.
struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CollisionError : NumericalFailure {
  CollisionError(const std::string& what, double at_time)
      : NumericalFailure(what), time(at_time) {}
  double time;
};

struct BlowUpError : NumericalFailure {
  using NumericalFailure::NumericalFailure;
};

struct IterationLimitError : NumericalFailure {
  IterationLimitError(const std::string& what, std::vector<double> devs)
      : NumericalFailure(what), deviations(std::move(devs)) {}
  std::vector<double> deviations;
};

// ---------------------------------------------------------------------------
// Small vector helpers on flat coordinate storage
// ---------------------------------------------------------------------------

inline double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Configuration: N ordered phase points in R^d with per-particle weights.
// ---------------------------------------------------------------------------

// Weights are probability weights for mean-field runs; vortex runs reuse the
// same storage for (unnormalized, possibly signed) intensities.
struct Configuration {
  std::size_t dim = 0;
  std::vector<double> coords;   // row-major, size() * dim
  std::vector<double> weights;  // one per particle

  Configuration() = default;
  Configuration(std::size_t d, std::vector<double> xs, std::vector<double> ws)
      : dim(d), coords(std::move(xs)), weights(std::move(ws)) {
    if (dim == 0) throw DimensionMismatch("configuration dimension must be >= 1");
    if (coords.size() % dim != 0)
      throw DimensionMismatch("coordinate count is not a multiple of the dimension");
    if (weights.size() != coords.size() / dim)
      throw DimensionMismatch("weight count does not match particle count");
  }

  static Configuration uniform(std::size_t d, std::vector<double> xs) {
    if (d == 0 || xs.size() % d != 0)
      throw DimensionMismatch("coordinate count is not a multiple of the dimension");
    const std::size_t n = xs.size() / d;
    return {d, std::move(xs), std::vector<double>(n, n ? 1.0 / double(n) : 0.0)};
  }

  std::size_t size() const { return dim ? coords.size() / dim : 0; }
  bool empty() const { return size() == 0; }

  std::span<const double> point(std::size_t i) const {
    return {coords.data() + i * dim, dim};
  }
  std::span<double> point(std::size_t i) { return {coords.data() + i * dim, dim}; }

  double total_weight() const {
    return std::accumulate(weights.begin(), weights.end(), 0.0);
  }
};

// Discrete probability measure sum_i w_i delta_{z_i}; mass one is enforced.
class EmpiricalMeasure {
 public:
  static constexpr double kMassTolerance = 1e-12;

  EmpiricalMeasure() = default;
  EmpiricalMeasure(std::size_t d, std::vector<double> atoms, std::vector<double> weights)
      : cfg_(d, std::move(atoms), std::move(weights)) {
    if (cfg_.empty()) throw std::invalid_argument("empirical measure has no atoms");
    for (double w : cfg_.weights)
      if (!(w >= 0.0)) throw std::invalid_argument("negative or NaN weight in measure");
    if (std::abs(cfg_.total_weight() - 1.0) > kMassTolerance)
      throw std::invalid_argument("measure weights do not sum to 1");
  }
  explicit EmpiricalMeasure(const Configuration& c)
      : EmpiricalMeasure(c.dim, c.coords, c.weights) {}

  static EmpiricalMeasure uniform(std::size_t d, std::vector<double> atoms) {
    auto c = Configuration::uniform(d, std::move(atoms));
    return EmpiricalMeasure(c.dim, std::move(c.coords), std::move(c.weights));
  }

  std::size_t dim() const { return cfg_.dim; }
  std::size_t size() const { return cfg_.size(); }
  std::span<const double> atom(std::size_t i) const { return cfg_.point(i); }
  double weight(std::size_t i) const { return cfg_.weights[i]; }
  const std::vector<double>& atoms() const { return cfg_.coords; }
  const std::vector<double>& weights() const { return cfg_.weights; }
  const Configuration& configuration() const { return cfg_; }

  template <class Fn>
  double integrate(Fn&& phi) const {
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) s += weight(i) * phi(atom(i));
    return s;
  }

  bool uniform_weights() const {
    const double w0 = 1.0 / double(size());
    for (double w : cfg_.weights)
      if (std::abs(w - w0) > kMassTolerance) return false;
    return true;
  }

 private:
  Configuration cfg_;
};

}  // namespace meanfield
