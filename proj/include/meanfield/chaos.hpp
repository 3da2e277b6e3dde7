#pragma once

// Sampling, propagation-of-chaos statistics and the convergence-rate
// experiments built on top of the particle dynamics and exact transport.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "meanfield/core.hpp"
#include "meanfield/dynamics.hpp"
#include "meanfield/kernels.hpp"
#include "meanfield/parallel.hpp"
#include "meanfield/rng.hpp"
#include "meanfield/transport.hpp"

namespace meanfield {

// ---------------------------------------------------------------------------
// Densities
// ---------------------------------------------------------------------------

struct GaussianComponent {
  std::vector<double> mean;
  std::vector<double> variance;  // diagonal covariance
};

enum class DensityKind { gaussian, uniform_box, gaussian_mixture };

inline std::string to_string(DensityKind k) {
  switch (k) {
    case DensityKind::gaussian: return "gaussian";
    case DensityKind::uniform_box: return "uniform_box";
    case DensityKind::gaussian_mixture: return "gaussian_mixture";
  }
  return "unknown";
}

struct DensitySpec {
  DensityKind kind = DensityKind::gaussian;
  std::size_t dim = 1;
  std::vector<GaussianComponent> components;  // gaussian: exactly one
  std::vector<double> mixture_weights;
  std::vector<double> lo, hi;                 // uniform_box

  static DensitySpec gaussian(std::vector<double> mean, std::vector<double> variance) {
    if (mean.empty() || mean.size() != variance.size())
      throw DimensionMismatch("gaussian mean/variance sizes differ");
    for (double v : variance)
      if (!(v > 0.0)) throw std::invalid_argument("gaussian variances must be > 0");
    DensitySpec s;
    s.kind = DensityKind::gaussian;
    s.dim = mean.size();
    s.components.push_back({std::move(mean), std::move(variance)});
    s.mixture_weights = {1.0};
    return s;
  }
  static DensitySpec standard_gaussian(std::size_t d) {
    return gaussian(std::vector<double>(d, 0.0), std::vector<double>(d, 1.0));
  }
  static DensitySpec uniform_box(std::vector<double> lo, std::vector<double> hi) {
    if (lo.empty() || lo.size() != hi.size()) throw DimensionMismatch("box bounds sizes differ");
    for (std::size_t k = 0; k < lo.size(); ++k)
      if (!(hi[k] > lo[k])) throw std::invalid_argument("box needs hi > lo");
    DensitySpec s;
    s.kind = DensityKind::uniform_box;
    s.dim = lo.size();
    s.lo = std::move(lo);
    s.hi = std::move(hi);
    return s;
  }
  static DensitySpec mixture(std::vector<GaussianComponent> comps, std::vector<double> weights) {
    if (comps.empty() || comps.size() != weights.size())
      throw std::invalid_argument("mixture needs one weight per component");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw std::invalid_argument("mixture weights must be >= 0");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("mixture weights must sum to 1");
    DensitySpec s;
    s.kind = DensityKind::gaussian_mixture;
    s.dim = comps.front().mean.size();
    for (const auto& c : comps) {
      if (c.mean.size() != s.dim || c.variance.size() != s.dim)
        throw DimensionMismatch("mixture components differ in dimension");
      for (double v : c.variance)
        if (!(v > 0.0)) throw std::invalid_argument("gaussian variances must be > 0");
    }
    s.components = std::move(comps);
    s.mixture_weights = std::move(weights);
    return s;
  }
};

inline void draw_point(const DensitySpec& p, rng::SplitMix64& gen, std::span<double> out) {
  switch (p.kind) {
    case DensityKind::uniform_box:
      for (std::size_t k = 0; k < p.dim; ++k) out[k] = gen.uniform(p.lo[k], p.hi[k]);
      return;
    case DensityKind::gaussian:
    case DensityKind::gaussian_mixture: {
      std::size_t c = 0;
      if (p.kind == DensityKind::gaussian_mixture) {
        const double u = gen.uniform();
        double acc = 0.0;
        c = p.components.size() - 1;
        for (std::size_t q = 0; q < p.components.size(); ++q) {
          acc += p.mixture_weights[q];
          if (u < acc) {
            c = q;
            break;
          }
        }
      }
      const auto& comp = p.components[c];
      for (std::size_t k = 0; k < p.dim; ++k)
        out[k] = comp.mean[k] + std::sqrt(comp.variance[k]) * gen.normal();
      return;
    }
  }
}

inline Configuration sample_iid(const DensitySpec& p, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("sample_iid needs n >= 1");
  rng::SplitMix64 gen(seed);
  std::vector<double> xs(n * p.dim);
  for (std::size_t i = 0; i < n; ++i) draw_point(p, gen, std::span<double>(xs.data() + i * p.dim, p.dim));
  return Configuration::uniform(p.dim, std::move(xs));
}

// ---------------------------------------------------------------------------
// Built-in test functions with closed-form moments
// ---------------------------------------------------------------------------

enum class TestFunctionKind { constant, coordinate, coordinate_square, cosine };

struct TestFunction {
  TestFunctionKind kind = TestFunctionKind::coordinate;
  std::size_t axis = 0;
  double param = 1.0;  // constant value or cosine frequency

  static TestFunction constant(double c) { return {TestFunctionKind::constant, 0, c}; }
  static TestFunction coordinate(std::size_t k) { return {TestFunctionKind::coordinate, k, 0.0}; }
  static TestFunction coordinate_square(std::size_t k) {
    return {TestFunctionKind::coordinate_square, k, 0.0};
  }
  static TestFunction cosine(std::size_t k, double freq) { return {TestFunctionKind::cosine, k, freq}; }

  double operator()(std::span<const double> z) const {
    switch (kind) {
      case TestFunctionKind::constant: return param;
      case TestFunctionKind::coordinate: return z[axis];
      case TestFunctionKind::coordinate_square: return z[axis] * z[axis];
      case TestFunctionKind::cosine: return std::cos(param * z[axis]);
    }
    return 0.0;
  }

  double sup_norm() const {
    switch (kind) {
      case TestFunctionKind::constant: return std::abs(param);
      case TestFunctionKind::cosine: return 1.0;
      default: return std::numeric_limits<double>::infinity();
    }
  }
};

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

namespace detail {

// E phi and E phi^2 under one Gaussian coordinate N(m, s2)
inline std::pair<double, double> gaussian_raw(const TestFunction& f, double m, double s2) {
  switch (f.kind) {
    case TestFunctionKind::constant: return {f.param, f.param * f.param};
    case TestFunctionKind::coordinate: return {m, m * m + s2};
    case TestFunctionKind::coordinate_square:
      return {m * m + s2, m * m * m * m + 6.0 * m * m * s2 + 3.0 * s2 * s2};
    case TestFunctionKind::cosine: {
      const double w = f.param;
      return {std::exp(-0.5 * w * w * s2) * std::cos(w * m),
              0.5 * (1.0 + std::exp(-2.0 * w * w * s2) * std::cos(2.0 * w * m))};
    }
  }
  return {0.0, 0.0};
}

// E phi and E phi^2 under one uniform coordinate on [a, b]
inline std::pair<double, double> uniform_raw(const TestFunction& f, double a, double b) {
  auto power = [a, b](int k) {
    return (std::pow(b, k + 1) - std::pow(a, k + 1)) / (double(k + 1) * (b - a));
  };
  switch (f.kind) {
    case TestFunctionKind::constant: return {f.param, f.param * f.param};
    case TestFunctionKind::coordinate: return {power(1), power(2)};
    case TestFunctionKind::coordinate_square: return {power(2), power(4)};
    case TestFunctionKind::cosine: {
      const double w = f.param;
      if (w == 0.0) return {1.0, 1.0};
      const double e1 = (std::sin(w * b) - std::sin(w * a)) / (w * (b - a));
      const double e2 = (std::sin(2.0 * w * b) - std::sin(2.0 * w * a)) / (2.0 * w * (b - a));
      return {e1, 0.5 * (1.0 + e2)};
    }
  }
  return {0.0, 0.0};
}

}  // namespace detail

// Closed-form <p, phi> and Var_p(phi) for every built-in (phi, density) pair.
inline Moments analytic_moments(const DensitySpec& p, const TestFunction& f) {
  if (f.kind != TestFunctionKind::constant && f.axis >= p.dim)
    throw DimensionMismatch("test function axis outside the density dimension");
  double e1 = 0.0, e2 = 0.0;
  if (p.kind == DensityKind::uniform_box) {
    const std::size_t k = f.kind == TestFunctionKind::constant ? 0 : f.axis;
    std::tie(e1, e2) = detail::uniform_raw(f, p.lo[k], p.hi[k]);
  } else {
    for (std::size_t c = 0; c < p.components.size(); ++c) {
      const std::size_t k = f.kind == TestFunctionKind::constant ? 0 : f.axis;
      const auto [a, b] = detail::gaussian_raw(f, p.components[c].mean[k], p.components[c].variance[k]);
      e1 += p.mixture_weights[c] * a;
      e2 += p.mixture_weights[c] * b;
    }
  }
  return {e1, std::max(0.0, e2 - e1 * e1)};
}

// Monte-Carlo <p, phi> from a control sample, for pairs without closed forms.
inline double control_sample_mean(const DensitySpec& p, const ScalarField& phi, std::size_t size,
                                   std::uint64_t seed) {
  const auto cloud = sample_iid(p, size, seed);
  double s = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) s += phi(cloud.point(i));
  return s / double(size);
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

struct Ensemble {
  std::vector<Configuration> runs;
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> seeds;

  std::size_t particles() const { return runs.empty() ? 0 : runs.front().size(); }
};

inline Ensemble make_ensemble(const DensitySpec& p, std::size_t n, std::size_t n_runs,
                              std::uint64_t master_seed, unsigned threads = 1) {
  Ensemble e;
  e.master_seed = master_seed;
  for (std::size_t r = 0; r < n_runs; ++r) e.seeds.push_back(rng::derive_seed(master_seed, r));
  e.runs = parallel_map(n_runs, threads, [&](std::size_t r) { return sample_iid(p, n, e.seeds[r]); });
  return e;
}

namespace detail {
inline double pairing(const Configuration& c, const ScalarField& phi) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) s += c.weights[i] * phi(c.point(i));
  return s;
}
}  // namespace detail

struct ConcentrationResult {
  double fraction = 0.0;
  std::size_t runs = 0;
};

// Fraction of runs with |<mu_Z, phi> - <p, phi>| >= eps.
inline ConcentrationResult chaos_concentration(const Ensemble& ens, double reference,
                                               const ScalarField& phi, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
  std::size_t hits = 0;
  for (const auto& run : ens.runs)
    if (std::abs(detail::pairing(run, phi) - reference) >= eps) ++hits;
  return {ens.runs.empty() ? 0.0 : double(hits) / double(ens.runs.size()), ens.runs.size()};
}

// Bienayme-Chebyshev ceiling plus `sigmas` binomial standard errors.
inline double chebyshev_ceiling(double variance, std::size_t n, double eps, std::size_t runs,
                                double sigmas = 3.0) {
  const double bound = variance / (double(n) * eps * eps);
  const double p = std::min(1.0, bound);
  return bound + sigmas * std::sqrt(p * (1.0 - p) / double(runs));
}

struct SecondMomentResult {
  double lhs = 0.0;             // mean over runs of <mu_Z, phi>^2
  double rhs = 0.0;             // (1/N) <P_{N:1}, phi^2> + ((N-1)/N) <P_{N:2}, phi (x) phi>
  double max_run_defect = 0.0;  // per-run |lhs - rhs|
};

// The distinct-pair average is accumulated by an explicit double loop so the
// per-run identity checks the algebra rather than restating it.
inline SecondMomentResult second_moment_identity(const Ensemble& ens, const ScalarField& phi) {
  const std::size_t n = ens.particles();
  if (n < 2) throw std::invalid_argument("second_moment_identity needs N >= 2");
  SecondMomentResult res;
  std::vector<double> v(n);
  for (const auto& run : ens.runs) {
    for (std::size_t i = 0; i < n; ++i) v[i] = phi(run.point(i));
    double s1 = 0.0, s2 = 0.0, pair = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s1 += v[i];
      s2 += v[i] * v[i];
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) pair += v[i] * v[j];
    }
    const double nn = double(n);
    const double lhs = (s1 / nn) * (s1 / nn);
    const double rhs = (s2 / nn) / nn + (nn - 1.0) / nn * (pair / (nn * (nn - 1.0)));
    res.lhs += lhs;
    res.rhs += rhs;
    res.max_run_defect = std::max(res.max_run_defect, std::abs(lhs - rhs));
  }
  res.lhs /= double(ens.runs.size());
  res.rhs /= double(ens.runs.size());
  return res;
}

// N!/((N-j)! N^j): the fraction of index maps {1..j} -> {1..N} that are injective.
inline double injective_fraction(std::size_t n, std::size_t j) {
  if (j > n) throw std::invalid_argument("tensor order exceeds particle count");
  double c = 1.0;
  for (std::size_t k = 0; k < j; ++k) c *= 1.0 - double(k) / double(n);
  return c;
}

inline bool remainder_mass_bound_holds(std::size_t n, std::size_t j) {
  const double lhs = 1.0 - injective_fraction(n, j);
  return lhs <= double(j) * double(j - 1) / (2.0 * double(n)) * (1.0 + 1e-12);
}

struct TensorMarginalResult {
  double tensor = 0.0;               // E <mu_Z^{(x)j}, phi^{(x)j}>
  double coefficient = 0.0;          // N!/((N-j)! N^j)
  double marginal = 0.0;             // E <P_{N:j}, phi^{(x)j}> via the injective U-statistic
  double remainder_bound = 0.0;      // 2 (1 - coefficient) sup|phi|^j
  double max_decomposition_gap = 0;  // max_run |tensor - coefficient * marginal|
  double max_noninjective = 0.0;     // max_run |non-injective part| / sup|phi|^j
};

inline TensorMarginalResult empirical_tensor_vs_marginal(const Ensemble& ens, const ScalarField& phi,
                                                         std::size_t j) {
  const std::size_t n = ens.particles();
  if (j == 0 || j > n) throw std::invalid_argument("tensor order must satisfy 1 <= j <= N");
  if (n > 12 || j > 4) throw std::invalid_argument("exact enumeration limited to N <= 12, j <= 4");

  TensorMarginalResult res;
  res.coefficient = injective_fraction(n, j);
  double sup = 0.0;
  std::vector<double> v(n);
  std::vector<std::size_t> idx(j);
  double n_inj = 1.0;
  for (std::size_t k = 0; k < j; ++k) n_inj *= double(n - k);
  const double n_all = std::pow(double(n), double(j));

  for (const auto& run : ens.runs) {
    double run_sup = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = phi(run.point(i));
      run_sup = std::max(run_sup, std::abs(v[i]));
    }
    sup = std::max(sup, run_sup);
    double inj = 0.0, noninj = 0.0;
    std::fill(idx.begin(), idx.end(), 0);
    for (;;) {
      double prod = 1.0;
      bool injective = true;
      for (std::size_t a = 0; a < j; ++a) {
        prod *= v[idx[a]];
        for (std::size_t b = 0; b < a; ++b) injective = injective && idx[a] != idx[b];
      }
      (injective ? inj : noninj) += prod;
      std::size_t pos = 0;
      while (pos < j && ++idx[pos] == n) idx[pos++] = 0;
      if (pos == j) break;
    }
    const double tensor = (inj + noninj) / n_all;
    const double marginal = inj / n_inj;
    res.tensor += tensor;
    res.marginal += marginal;
    res.max_decomposition_gap =
        std::max(res.max_decomposition_gap, std::abs(tensor - res.coefficient * marginal));
    const double scale = std::pow(run_sup, double(j));
    if (scale > 0.0)
      res.max_noninjective = std::max(res.max_noninjective, std::abs(noninj / n_all) / scale);
  }
  res.tensor /= double(ens.runs.size());
  res.marginal /= double(ens.runs.size());
  res.remainder_bound = 2.0 * (1.0 - res.coefficient) * std::pow(sup, double(j));
  return res;
}

// ---------------------------------------------------------------------------
// Rate fits
// ---------------------------------------------------------------------------

struct RateFit {
  std::vector<double> sizes;
  std::vector<double> statistics;
  double slope = 0.0;
  double intercept = 0.0;
  double half_width = 0.0;  // 2 x standard error of the slope
};

// Ordinary least squares of ln(statistic) on ln(N).
inline RateFit fit_rate(std::vector<double> sizes, std::vector<double> stats) {
  const std::size_t k = sizes.size();
  if (k < 3 || stats.size() != k) throw std::invalid_argument("rate fit needs at least 3 sample sizes");
  for (std::size_t a = 0; a < k; ++a) {
    if (!(sizes[a] > 0.0) || !(stats[a] > 0.0))
      throw std::invalid_argument("rate fit needs positive sizes and statistics");
    for (std::size_t b = 0; b < a; ++b)
      if (sizes[a] == sizes[b]) throw std::invalid_argument("rate fit needs distinct sample sizes");
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    mx += std::log(sizes[a]);
    my += std::log(stats[a]);
  }
  mx /= double(k);
  my /= double(k);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    const double dx = std::log(sizes[a]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(stats[a]) - my);
  }
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    const double r = std::log(stats[a]) - (fit.intercept + fit.slope * std::log(sizes[a]));
    rss += r * r;
  }
  fit.half_width = 2.0 * std::sqrt(rss / double(k - 2) / sxx);
  fit.sizes = std::move(sizes);
  fit.statistics = std::move(stats);
  return fit;
}

struct SampleSummary {
  double mean = 0.0;
  double std_error = 0.0;
};

inline SampleSummary summarize(const std::vector<double>& xs) {
  SampleSummary s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= double(xs.size());
  if (xs.size() > 1) {
    double v = 0.0;
    for (double x : xs) v += (x - s.mean) * (x - s.mean);
    s.std_error = std::sqrt(v / double(xs.size() - 1) / double(xs.size()));
  }
  return s;
}

// Exact W_r between two point clouds: monotone coupling on the line, general
// solvers otherwise.
inline double exact_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b, int r) {
  return a.dim() == 1 ? monotone_distance_1d(a, b, r) : mk_distance(a, b, r).distance;
}

// ---------------------------------------------------------------------------
// Dobrushin stability
// ---------------------------------------------------------------------------

struct DobrushinRow {
  std::size_t pair = 0;
  double w1_in = 0.0;
  double w1_t = 0.0;
  double bound = 0.0;  // exp(2 L t) * w1_in
  bool pass = false;
};

struct DobrushinOptions {
  double relative_slack = 1e-4;
  double additive_slack = 1e-6;
  unsigned threads = 1;
};

// Pair p evolves sample_iid(density1, N, derive_seed(seed, 2p)) and
// sample_iid(density2, N, derive_seed(seed, 2p + 1)).
inline std::vector<DobrushinRow> dobrushin_experiment(const KernelSpec& kernel, const DensitySpec& d1,
                                                      const DensitySpec& d2, std::size_t n, double t_final,
                                                      std::size_t n_pairs, std::uint64_t master_seed,
                                                      const IntegratorSettings& settings = {},
                                                      const DobrushinOptions& opt = {}) {
  if (!kernel.lipschitz()) throw UnsupportedKernel("Dobrushin experiment needs a Lipschitz kernel");
  if (d1.dim != kernel.dim || d2.dim != kernel.dim) throw DimensionMismatch("density/kernel dimension mismatch");
  const double growth = std::exp(2.0 * kernel.lipschitz_bound * std::abs(t_final));
  return parallel_map(n_pairs, opt.threads, [&](std::size_t p) {
    const auto c1 = sample_iid(d1, n, rng::derive_seed(master_seed, 2 * p));
    const auto c2 = sample_iid(d2, n, rng::derive_seed(master_seed, 2 * p + 1));
    const auto t1 = simulate_nbody(kernel, c1, t_final, settings);
    const auto t2 = simulate_nbody(kernel, c2, t_final, settings);
    DobrushinRow row;
    row.pair = p;
    row.w1_in = mk_distance(EmpiricalMeasure(c1), EmpiricalMeasure(c2), 1).distance;
    row.w1_t = mk_distance(pushforward(t1, t1.states.size() - 1),
                           pushforward(t2, t2.states.size() - 1), 1).distance;
    row.bound = growth * row.w1_in;
    row.pass = row.w1_t <= row.bound * (1.0 + opt.relative_slack) + opt.additive_slack;
    return row;
  });
}

// ---------------------------------------------------------------------------
// Convergence-rate experiments
// ---------------------------------------------------------------------------

struct RateExperiment {
  RateFit fit;
  std::vector<std::size_t> sizes;
  std::vector<SampleSummary> summaries;  // one per size
  std::vector<std::vector<double>> samples;
};

// E W1(mu_{T_t Z_N}, mu_ref(t)) against N, where the reference is one
// reference_N-particle evolution. Seeds: reference cloud derive_seed(seed, 0);
// repetition r at size index a uses derive_seed(seed, 1 + a * n_reps + r).
inline RateExperiment meanfield_rate_experiment(const KernelSpec& kernel, const DensitySpec& density,
                                                const std::vector<std::size_t>& sizes, double t_final,
                                                std::size_t n_reps, std::size_t reference_n,
                                                std::uint64_t master_seed,
                                                const IntegratorSettings& settings = {},
                                                unsigned threads = 1) {
  if (sizes.size() < 3) throw std::invalid_argument("rate fit needs at least 3 sample sizes");
  if (n_reps == 0) throw std::invalid_argument("n_reps must be >= 1");
  const std::size_t nmax = *std::max_element(sizes.begin(), sizes.end());
  if (reference_n <= nmax) throw std::invalid_argument("reference_N must exceed every N in the list");
  if (density.dim != kernel.dim) throw DimensionMismatch("density/kernel dimension mismatch");

  auto evolve = [&](const Configuration& c) {
    if (t_final == 0.0) return EmpiricalMeasure(c);
    const auto tr = simulate_nbody(kernel, c, t_final, settings);
    return pushforward(tr, tr.states.size() - 1);
  };
  IntegratorSettings ref_settings = settings;
  ref_settings.threads = std::max(settings.threads, threads);
  const auto ref_cloud = sample_iid(density, reference_n, rng::derive_seed(master_seed, 0));
  const EmpiricalMeasure reference = [&] {
    if (t_final == 0.0) return EmpiricalMeasure(ref_cloud);
    const auto tr = simulate_nbody(kernel, ref_cloud, t_final, ref_settings);
    return pushforward(tr, tr.states.size() - 1);
  }();

  RateExperiment out;
  out.sizes = sizes;
  std::vector<double> means;
  for (std::size_t a = 0; a < sizes.size(); ++a) {
    auto vals = parallel_map(n_reps, threads, [&](std::size_t r) {
      const auto c = sample_iid(density, sizes[a], rng::derive_seed(master_seed, 1 + a * n_reps + r));
      return exact_distance(evolve(c), reference, 1);
    });
    out.summaries.push_back(summarize(vals));
    means.push_back(out.summaries.back().mean);
    out.samples.push_back(std::move(vals));
  }
  out.fit = fit_rate(std::vector<double>(sizes.begin(), sizes.end()), means);
  return out;
}

// E[W2(mu_{Z_N}, p)^2] against N with p represented by one control cloud of
// control_factor * max(N) points (seed derive_seed(seed, 0)); repetition seeds
// as in meanfield_rate_experiment.
inline RateExperiment hk_rate_experiment(const DensitySpec& density, const std::vector<std::size_t>& sizes,
                                         std::size_t n_reps, std::uint64_t master_seed,
                                         std::size_t control_factor = 16, unsigned threads = 1) {
  if (sizes.size() < 3) throw std::invalid_argument("rate fit needs at least 3 sample sizes");
  if (n_reps == 0) throw std::invalid_argument("n_reps must be >= 1");
  if (control_factor < 16) throw std::invalid_argument("control cloud must be >= 16x the largest N");
  const std::size_t nmax = *std::max_element(sizes.begin(), sizes.end());
  const EmpiricalMeasure control(sample_iid(density, control_factor * nmax, rng::derive_seed(master_seed, 0)));

  RateExperiment out;
  out.sizes = sizes;
  std::vector<double> means;
  for (std::size_t a = 0; a < sizes.size(); ++a) {
    auto vals = parallel_map(n_reps, threads, [&](std::size_t r) {
      const EmpiricalMeasure c(sample_iid(density, sizes[a], rng::derive_seed(master_seed, 1 + a * n_reps + r)));
      const double w2 = exact_distance(c, control, 2);
      return w2 * w2;
    });
    out.summaries.push_back(summarize(vals));
    means.push_back(out.summaries.back().mean);
    out.samples.push_back(std::move(vals));
  }
  out.fit = fit_rate(std::vector<double>(sizes.begin(), sizes.end()), means);
  return out;
}

}  // namespace meanfield
