#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "meanfield/quantum.hpp"
#include "meanfield/rng.hpp"

using namespace meanfield;
using namespace meanfield::quantum;

namespace {
constexpr double kPi = std::numbers::pi;

WaveFunction bump(const Grid1D& g, double a = 0.5) {
  return WaveFunction::from(g, [a](double x) { return cplx(1.0 + a * std::cos(x), 0.3 * std::sin(2 * x)); });
}

WaveFunction random_state(const Grid1D& g, std::uint64_t seed) {
  rng::SplitMix64 gen(seed);
  WaveFunction w{g, std::vector<cplx>(g.points)};
  for (auto& a : w.amps) a = {gen.normal(), gen.normal()};
  w.normalize();
  return w;
}
}  // namespace

TEST(Grid, Validation) {
  EXPECT_THROW(Grid1D(12, 1.0), std::invalid_argument);
  EXPECT_THROW(Grid1D(4, 1.0), std::invalid_argument);
  EXPECT_THROW(Grid1D(16, 0.0), std::invalid_argument);
  const Grid1D g(8, 2 * kPi);
  EXPECT_DOUBLE_EQ(g.wavenumber(5), -3.0);
}

TEST(Potential, TableIsEvenAndNormsMatch) {
  const Grid1D g(64, 2 * kPi);
  for (const auto& v : {PotentialSpec::cosine(0.5), PotentialSpec::gaussian_well(1.0, 0.4),
                        PotentialSpec::soft_coulomb(1.0, 0.3)}) {
    const auto t = v.table(g);
    for (std::size_t j = 1; j < 64; ++j) EXPECT_EQ(t[j], t[64 - j]);
  }
  const auto c = PotentialSpec::cosine(0.5).table(g);
  EXPECT_NEAR(lp_norm(g, c, 2.0), 0.5 * std::sqrt(kPi), 1e-12);
  EXPECT_NEAR(lp_norm(g, c, std::numeric_limits<double>::infinity()), 0.5, 1e-15);
}

TEST(Hartree, FreePlaneWavePicksUpPhase) {
  const Grid1D g(32, 2 * kPi);
  const int k = 3;
  const auto psi = WaveFunction::from(g, [k](double x) { return std::polar(1.0, k * x); });
  const auto tr = solve_hartree(psi, PotentialSpec::zero(), 0.5, 1e-3);
  const cplx phase = std::polar(1.0, -0.5 * k * k * 0.5);
  for (std::size_t j = 0; j < 32; ++j) EXPECT_LT(std::abs(tr.states.back().amps[j] - phase * psi.amps[j]), 1e-11);
}

TEST(Hartree, MassAndEnergy) {
  const Grid1D g(64, 2 * kPi);
  const auto v = PotentialSpec::cosine(0.5);
  const auto psi = bump(g);
  auto drift = [&](double dt) {
    const auto tr = solve_hartree(psi, v, 1.0, dt, 10);
    for (const auto& s : tr.states) EXPECT_NEAR(s.norm(), 1.0, 1e-12);
    const double e0 = hartree_energy(psi, v);
    double worst = 0.0;
    for (const auto& s : tr.states) worst = std::max(worst, std::abs(hartree_energy(s, v) - e0) / std::abs(e0));
    return worst;
  };
  const double d1 = drift(1e-3), d2 = drift(5e-4);
  EXPECT_LE(d1, 1e-6);
  EXPECT_GE(d1 / d2, 3.0);
  EXPECT_LE(d1 / d2, 6.0);
}

TEST(Hartree, Preconditions) {
  const Grid1D g(64, 2 * kPi);
  EXPECT_THROW(solve_hartree(bump(g), PotentialSpec::zero(), 1.0, 0.05), std::invalid_argument);
  auto bad = bump(g);
  bad.amps[0] *= 2.0;
  EXPECT_THROW(solve_hartree(bad, PotentialSpec::zero(), 1.0, 1e-3), std::invalid_argument);
}

TEST(NBody, FreeEvolutionStaysFactorized) {
  const Grid1D g(16, 2 * kPi);
  const auto psi = bump(g);
  const auto free1 = solve_hartree(psi, PotentialSpec::zero(), 0.5, 1e-3).states.back();
  const auto tr = solve_nbody_schrodinger(tensor_power(psi, 3), PotentialSpec::zero(), 0.5, 1e-3);
  EXPECT_NEAR(std::abs(tensor_power(free1, 3).inner(tr.states.back())), 1.0, 1e-10);
}

TEST(NBody, UnitarityAndSymmetry) {
  const Grid1D g(32, 2 * kPi);
  const auto tr = solve_nbody_schrodinger(tensor_power(bump(g), 2), PotentialSpec::cosine(0.5), 0.5, 1e-3, 50);
  for (const auto& s : tr.states) {
    EXPECT_NEAR(s.norm(), 1.0, 1e-12);
    EXPECT_LE(symmetry_defect(s), 1e-10);
  }
}

TEST(NBody, MemoryGuard) {
  const Grid1D g(64, 2 * kPi);
  EXPECT_THROW(tensor_power(bump(g), 5), std::length_error);
}

TEST(Density, ProductStateMarginal) {
  const Grid1D g(16, 2 * kPi);
  const auto psi = bump(g), phi = random_state(g, 3);
  const auto d = reduced_density(tensor_product({psi, phi}), 1);
  EXPECT_LE((d.op - projector(psi).op).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Density, InvariantsAndNesting) {
  const Grid1D g(16, 2 * kPi);
  const auto tr = solve_nbody_schrodinger(tensor_power(bump(g), 3), PotentialSpec::cosine(1.0), 0.3, 1e-3);
  const auto& psi = tr.states.back();
  const auto d1 = reduced_density(psi, 1), d2 = reduced_density(psi, 2);
  for (const auto* d : {&d1, &d2}) {
    EXPECT_LE(d->hermiticity_defect(), 1e-10);
    EXPECT_GE(d->min_eigenvalue(), -1e-10);
    EXPECT_NEAR(d->trace(), 1.0, 1e-8);
  }
  EXPECT_LE((partial_trace(d2).op - d1.op).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_THROW(reduced_density(psi, 3), std::invalid_argument);
}

TEST(TraceNorm, Examples) {
  const Grid1D g(16, 2 * kPi);
  const auto psi = random_state(g, 1), phi = random_state(g, 2);
  EXPECT_NEAR(trace_norm(projector(psi).op), 1.0, 1e-12);
  Matrix diag = Matrix::Zero(2, 2);
  diag(0, 0) = 0.5;
  diag(1, 1) = -0.5;
  EXPECT_NEAR(trace_norm(diag), 1.0, 1e-15);
  const double overlap = std::abs(psi.inner(phi));
  EXPECT_NEAR(trace_norm(projector(psi).op - projector(phi).op), 2 * std::sqrt(1 - overlap * overlap), 1e-10);
  Matrix skew = Matrix::Zero(2, 2);
  skew(0, 1) = 1.0;
  EXPECT_THROW(trace_norm(skew), std::invalid_argument);
}

TEST(Pickl, FunctionalExamples) {
  const Grid1D g(16, 2 * kPi);
  const auto psi = WaveFunction::from(g, [](double x) { return std::polar(1.0, x); });
  const auto phi = WaveFunction::from(g, [](double x) { return std::polar(1.0, 2 * x); });
  EXPECT_NEAR(pickl_functional(projector(psi), psi), 0.0, 1e-12);
  EXPECT_NEAR(pickl_functional(projector(phi), psi), 1.0, 1e-12);
  DensityMatrix mix{g, 1, 0.5 * projector(psi).op + 0.5 * projector(phi).op};
  EXPECT_NEAR(pickl_functional(mix, psi), 0.5, 1e-12);
  DensityMatrix twice{g, 1, 2.0 * projector(phi).op};
  EXPECT_THROW(pickl_functional(twice, psi), DomainError);
}

TEST(Pickl, BoundExamples) {
  const Grid1D g(64, 2 * kPi);
  const auto psi = bump(g);
  const auto zero = pickl_bound(solve_hartree(psi, PotentialSpec::zero(), 1.0, 1e-3, 100), PotentialSpec::zero(), 8, 2);
  for (double b : zero) EXPECT_EQ(b, 0.0);
  const auto v = PotentialSpec::cosine(0.5);
  const auto b = pickl_bound(solve_hartree(psi, v, 1.0, 1e-3, 100), v, 8, 2);
  EXPECT_EQ(b.front(), 0.0);
  EXPECT_TRUE(std::isfinite(b.back()));
}

TEST(HartreeLimit, FreeEvolutionHasNoDefect) {
  const Grid1D g(16, 2 * kPi);
  const auto res = hartree_limit_experiment(bump(g), PotentialSpec::zero(), {2}, 0.5, 1e-3, 100);
  for (const auto& r : res.rows) EXPECT_LE(r.e_n, 1e-10);
}

TEST(HartreeLimit, EnvelopeAndTrend) {
  const Grid1D g(32, 2 * kPi);
  const auto res = hartree_limit_experiment(bump(g), PotentialSpec::cosine(0.5), {2, 3}, 1.0, 1e-3, 100);
  EXPECT_TRUE(res.envelope_holds);
  EXPECT_TRUE(res.trace_distance_dominates);
  EXPECT_LE(res.rows.front().e_n, 1e-10);
  double e2 = 0, e3 = 0;
  for (const auto& r : res.rows)
    if (r.t == 1.0) (r.particles == 2 ? e2 : e3) = r.e_n;
  EXPECT_LT(e3, e2);
  for (double d : res.max_norm_defect) EXPECT_LE(d, 1e-12);
}

TEST(Bbgky, ResidualShrinksWithDt) {
  const Grid1D g(16, 2 * kPi);
  const auto v = PotentialSpec::cosine(0.5);
  auto residual = [&](double dt) {
    const auto tr = solve_nbody_schrodinger(tensor_power(bump(g), 2), v, 2 * dt, dt);
    return bbgky_first_residual(tr.states[0], tr.states[1], tr.states[2], dt, v);
  };
  const double r1 = residual(1e-3), r2 = residual(5e-4);
  EXPECT_LE(r1, 1e-3);
  EXPECT_LT(r2, r1);
}
