#pragma once

// Bosonic mean-field quantum dynamics on a periodic 1D grid.
//
// Single particle (Hartree):  i d_t psi = -1/2 psi'' + (V * |psi|^2) psi
// N particles:               i d_t Psi = -1/2 sum_k Lap_k Psi + (1/N) sum_{k<l} V(x_k - x_l) Psi
//
// Both are propagated by Strang splitting (half potential, full kinetic in
// Fourier space, half potential). Density matrices are stored as operator
// matrices: the integral kernel times h^k, so that traces, eigenvalues and
// trace norms are the continuum ones without further weighting.

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "meanfield/core.hpp"

namespace meanfield::quantum {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;

struct Grid1D {
  std::size_t points = 64;
  double length = 2.0 * std::numbers::pi;

  Grid1D() = default;
  Grid1D(std::size_t m, double len) : points(m), length(len) {
    if (m < 8 || (m & (m - 1)) != 0) throw std::invalid_argument("grid size must be a power of two >= 8");
    if (!(len > 0.0)) throw std::invalid_argument("grid length must be > 0");
  }

  double spacing() const { return length / double(points); }
  double x(std::size_t j) const { return double(j) * spacing(); }
  // standard DFT ordering: 0, 1, ..., M/2 - 1, -M/2, ..., -1
  double wavenumber(std::size_t j) const {
    const double kappa = 2.0 * std::numbers::pi / length;
    return kappa * (j < points / 2 ? double(j) : double(j) - double(points));
  }
  bool operator==(const Grid1D& o) const { return points == o.points && length == o.length; }
};

// ---------------------------------------------------------------------------
// FFTW wrapper: in-place transforms of a fixed-shape cube of side M.
// ---------------------------------------------------------------------------

class FourierTransform {
 public:
  FourierTransform(std::size_t rank, std::size_t side) : size_(1) {
    std::vector<int> dims(rank, static_cast<int>(side));
    for (std::size_t r = 0; r < rank; ++r) size_ *= side;
    buf_ = reinterpret_cast<cplx*>(fftw_malloc(sizeof(fftw_complex) * size_));
    if (!buf_) throw std::bad_alloc();
    auto* raw = reinterpret_cast<fftw_complex*>(buf_);
    fwd_ = fftw_plan_dft(int(rank), dims.data(), raw, raw, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft(int(rank), dims.data(), raw, raw, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  FourierTransform(const FourierTransform&) = delete;
  FourierTransform& operator=(const FourierTransform&) = delete;
  ~FourierTransform() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(buf_);
  }

  cplx* data() { return buf_; }
  std::size_t size() const { return size_; }
  void forward() { fftw_execute(fwd_); }
  // normalized inverse
  void backward() {
    fftw_execute(bwd_);
    const double s = 1.0 / double(size_);
    for (std::size_t i = 0; i < size_; ++i) buf_[i] *= s;
  }

 private:
  std::size_t size_;
  cplx* buf_ = nullptr;
  fftw_plan fwd_ = nullptr, bwd_ = nullptr;
};

// ---------------------------------------------------------------------------
// Potentials
// ---------------------------------------------------------------------------

enum class PotentialKind { zero, cosine, gaussian_well, soft_coulomb };

inline std::string to_string(PotentialKind k) {
  switch (k) {
    case PotentialKind::zero: return "zero";
    case PotentialKind::cosine: return "cosine";
    case PotentialKind::gaussian_well: return "gaussian_well";
    case PotentialKind::soft_coulomb: return "soft_coulomb";
  }
  return "unknown";
}

// Even, real, bounded pair potentials, periodized through the minimal image
// so that V(x_j) == V(x_{M-j}) holds bit-exactly on the grid.
struct PotentialSpec {
  PotentialKind kind = PotentialKind::zero;
  double strength = 0.0;  // amplitude / depth / coulomb strength
  double width = 1.0;     // gaussian width or soft-coulomb epsilon

  static PotentialSpec zero() { return {}; }
  static PotentialSpec cosine(double a) { return {PotentialKind::cosine, a, 1.0}; }
  static PotentialSpec gaussian_well(double depth, double width) {
    if (!(width > 0.0)) throw std::invalid_argument("gaussian_well width must be > 0");
    return {PotentialKind::gaussian_well, depth, width};
  }
  static PotentialSpec soft_coulomb(double strength, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("soft_coulomb eps must be > 0");
    return {PotentialKind::soft_coulomb, strength, eps};
  }

  // V at displacement j * h, j = 0..M-1
  std::vector<double> table(const Grid1D& g) const {
    const std::size_t m = g.points;
    std::vector<double> v(m);
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t jj = std::min(j, m - j);
      const double d = double(jj) * g.spacing();
      switch (kind) {
        case PotentialKind::zero: v[j] = 0.0; break;
        case PotentialKind::cosine: v[j] = strength * std::cos(2.0 * std::numbers::pi * d / g.length); break;
        case PotentialKind::gaussian_well: {
          double s = 0.0;
          for (int img = -3; img <= 3; ++img) {
            const double u = d + img * g.length;
            s += std::exp(-u * u / (2.0 * width * width));
          }
          v[j] = -strength * s;
          break;
        }
        case PotentialKind::soft_coulomb: v[j] = strength / std::sqrt(d * d + width * width); break;
      }
    }
    return v;
  }
};

inline double lp_norm(const Grid1D& g, const std::vector<double>& f, double p) {
  if (std::isinf(p)) {
    double m = 0.0;
    for (double x : f) m = std::max(m, std::abs(x));
    return m;
  }
  double s = 0.0;
  for (double x : f) s += std::pow(std::abs(x), p);
  return std::pow(g.spacing() * s, 1.0 / p);
}

// ---------------------------------------------------------------------------
// Wave functions
// ---------------------------------------------------------------------------

struct WaveFunction {
  Grid1D grid;
  std::vector<cplx> amps;

  static WaveFunction from(const Grid1D& g, const std::function<cplx(double)>& f, bool normalize = true) {
    WaveFunction w{g, std::vector<cplx>(g.points)};
    for (std::size_t j = 0; j < g.points; ++j) w.amps[j] = f(g.x(j));
    if (normalize) w.normalize();
    return w;
  }

  double norm() const {
    double s = 0.0;
    for (const auto& a : amps) s += std::norm(a);
    return std::sqrt(grid.spacing() * s);
  }
  void normalize() {
    const double n = norm();
    for (auto& a : amps) a /= n;
  }
  // h-weighted inner product <this, other>
  cplx inner(const WaveFunction& o) const {
    cplx s = 0.0;
    for (std::size_t j = 0; j < amps.size(); ++j) s += std::conj(amps[j]) * o.amps[j];
    return grid.spacing() * s;
  }
  std::vector<double> modulus() const {
    std::vector<double> m(amps.size());
    for (std::size_t j = 0; j < amps.size(); ++j) m[j] = std::abs(amps[j]);
    return m;
  }
};

struct TensorWaveFunction {
  Grid1D grid;
  std::size_t particles = 2;
  std::vector<cplx> amps;  // index = sum_k i_k M^{N-1-k}; x_1 varies slowest

  static constexpr std::size_t kMaxAmplitudes = std::size_t{1} << 24;

  double norm() const {
    double s = 0.0;
    for (const auto& a : amps) s += std::norm(a);
    return std::sqrt(std::pow(grid.spacing(), double(particles)) * s);
  }
  cplx inner(const TensorWaveFunction& o) const {
    cplx s = 0.0;
    for (std::size_t j = 0; j < amps.size(); ++j) s += std::conj(amps[j]) * o.amps[j];
    return std::pow(grid.spacing(), double(particles)) * s;
  }
};

inline std::size_t checked_power(std::size_t m, std::size_t n) {
  std::size_t total = 1;
  for (std::size_t k = 0; k < n; ++k) {
    total *= m;
    if (total > TensorWaveFunction::kMaxAmplitudes)
      throw std::length_error("tensor wave function exceeds the 2^24 amplitude memory guard");
  }
  return total;
}

inline TensorWaveFunction tensor_power(const WaveFunction& psi, std::size_t n) {
  const std::size_t m = psi.grid.points;
  TensorWaveFunction t{psi.grid, n, std::vector<cplx>(checked_power(m, n))};
  for (std::size_t idx = 0; idx < t.amps.size(); ++idx) {
    cplx v = 1.0;
    std::size_t rest = idx;
    for (std::size_t k = 0; k < n; ++k) {
      v *= psi.amps[rest % m];
      rest /= m;
    }
    t.amps[idx] = v;
  }
  return t;
}

// psi_1 (x) psi_2 (x) ... in the given order (not symmetrized).
inline TensorWaveFunction tensor_product(const std::vector<WaveFunction>& factors) {
  const auto& g = factors.front().grid;
  const std::size_t m = g.points, n = factors.size();
  TensorWaveFunction t{g, n, std::vector<cplx>(checked_power(m, n))};
  for (std::size_t idx = 0; idx < t.amps.size(); ++idx) {
    cplx v = 1.0;
    std::size_t rest = idx;
    for (std::size_t k = n; k-- > 0;) {
      v *= factors[k].amps[rest % m];
      rest /= m;
    }
    t.amps[idx] = v;
  }
  return t;
}

// max over transpositions (k l) of max |Psi - U_(kl) Psi|
inline double symmetry_defect(const TensorWaveFunction& psi) {
  const std::size_t m = psi.grid.points, n = psi.particles;
  std::vector<std::size_t> stride(n);
  for (std::size_t k = 0; k < n; ++k) stride[k] = static_cast<std::size_t>(std::pow(double(m), double(n - 1 - k)));
  double worst = 0.0;
  for (std::size_t idx = 0; idx < psi.amps.size(); ++idx) {
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t l = k + 1; l < n; ++l) {
        const std::size_t ik = (idx / stride[k]) % m, il = (idx / stride[l]) % m;
        const std::size_t swapped = idx - ik * stride[k] - il * stride[l] + il * stride[k] + ik * stride[l];
        worst = std::max(worst, std::abs(psi.amps[idx] - psi.amps[swapped]));
      }
  }
  return worst;
}

namespace detail {

inline void check_step(const Grid1D& g, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  const double h = g.spacing();
  if (dt > h * h) throw std::invalid_argument("time step must satisfy dt <= h^2");
}

inline std::size_t step_count(double t_final, double dt) {
  return t_final == 0.0 ? 0 : static_cast<std::size_t>(std::ceil(std::abs(t_final) / dt - 1e-9));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Hartree equation
// ---------------------------------------------------------------------------

struct HartreeTrajectory {
  std::vector<double> times;
  std::vector<WaveFunction> states;
  double step = 0.0;
};

class HartreeSolver {
 public:
  HartreeSolver(const Grid1D& g, const PotentialSpec& v) : grid_(g), fft_(1, g.points) {
    const std::size_t m = g.points;
    // Fourier symbol of the convolution x -> h sum_j V(x - x_j) f_j
    std::vector<double> vt = v.table(g);
    for (std::size_t j = 0; j < m; ++j) fft_.data()[j] = vt[j];
    fft_.forward();
    v_hat_.assign(fft_.data(), fft_.data() + m);
    k2_.resize(m);
    for (std::size_t j = 0; j < m; ++j) k2_[j] = g.wavenumber(j) * g.wavenumber(j);
  }

  // W = V * |psi|^2 on the grid
  std::vector<double> mean_field(const std::vector<cplx>& psi) {
    const std::size_t m = grid_.points;
    for (std::size_t j = 0; j < m; ++j) fft_.data()[j] = std::norm(psi[j]);
    fft_.forward();
    for (std::size_t j = 0; j < m; ++j) fft_.data()[j] *= v_hat_[j];
    fft_.backward();
    std::vector<double> w(m);
    for (std::size_t j = 0; j < m; ++j) w[j] = grid_.spacing() * fft_.data()[j].real();
    return w;
  }

  void potential_step(std::vector<cplx>& psi, double tau) {
    const auto w = mean_field(psi);
    for (std::size_t j = 0; j < psi.size(); ++j) psi[j] *= std::polar(1.0, -tau * w[j]);
  }

  void kinetic_step(std::vector<cplx>& psi, double tau) {
    const std::size_t m = grid_.points;
    std::copy(psi.begin(), psi.end(), fft_.data());
    fft_.forward();
    for (std::size_t j = 0; j < m; ++j) fft_.data()[j] *= std::polar(1.0, -0.5 * tau * k2_[j]);
    fft_.backward();
    std::copy(fft_.data(), fft_.data() + m, psi.begin());
  }

  void strang_step(std::vector<cplx>& psi, double tau) {
    potential_step(psi, 0.5 * tau);
    kinetic_step(psi, tau);
    potential_step(psi, 0.5 * tau);
  }

  // 1/2 ||psi'||^2 + 1/2 <|psi|^2, V * |psi|^2>
  double energy(const std::vector<cplx>& psi) {
    const std::size_t m = grid_.points;
    const double h = grid_.spacing();
    std::copy(psi.begin(), psi.end(), fft_.data());
    fft_.forward();
    double kin = 0.0;
    for (std::size_t j = 0; j < m; ++j) kin += k2_[j] * std::norm(fft_.data()[j]);
    kin *= 0.5 * h / double(m);
    const auto w = mean_field(psi);
    double pot = 0.0;
    for (std::size_t j = 0; j < m; ++j) pot += std::norm(psi[j]) * w[j];
    return kin + 0.5 * h * pot;
  }

 private:
  Grid1D grid_;
  FourierTransform fft_;
  std::vector<cplx> v_hat_;
  std::vector<double> k2_;
};

inline HartreeTrajectory solve_hartree(const WaveFunction& psi_in, const PotentialSpec& v, double t_final,
                                       double dt, std::size_t record_every = 1) {
  detail::check_step(psi_in.grid, dt);
  if (std::abs(psi_in.norm() - 1.0) > 1e-10) throw std::invalid_argument("initial wave function is not normalized");
  if (record_every == 0) throw std::invalid_argument("record_every must be >= 1");
  HartreeSolver solver(psi_in.grid, v);
  const std::size_t steps = detail::step_count(t_final, dt);
  const double tau = steps ? t_final / double(steps) : 0.0;
  HartreeTrajectory tr;
  tr.step = tau;
  tr.times.push_back(0.0);
  tr.states.push_back(psi_in);
  std::vector<cplx> psi = psi_in.amps;
  for (std::size_t s = 0; s < steps; ++s) {
    solver.strang_step(psi, tau);
    if ((s + 1) % record_every == 0 || s + 1 == steps) {
      tr.times.push_back(s + 1 == steps ? t_final : double(s + 1) * tau);
      tr.states.push_back({psi_in.grid, psi});
    }
  }
  return tr;
}

inline double hartree_energy(const WaveFunction& psi, const PotentialSpec& v) {
  HartreeSolver solver(psi.grid, v);
  return solver.energy(psi.amps);
}

// ---------------------------------------------------------------------------
// N-particle Schroedinger equation
// ---------------------------------------------------------------------------

struct TensorTrajectory {
  std::vector<double> times;
  std::vector<TensorWaveFunction> states;
  double step = 0.0;
};

class NBodySolver {
 public:
  NBodySolver(const Grid1D& g, std::size_t n, const PotentialSpec& v)
      : grid_(g), particles_(n), fft_(n, g.points) {
    const std::size_t m = g.points, total = checked_power(m, n);
    const auto vt = v.table(g);
    interaction_.assign(total, 0.0);
    kinetic_.assign(total, 0.0);
    std::vector<std::size_t> idx(n);
    for (std::size_t lin = 0; lin < total; ++lin) {
      std::size_t rest = lin;
      for (std::size_t k = n; k-- > 0;) {
        idx[k] = rest % m;
        rest /= m;
      }
      double u = 0.0, kin = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double kk = g.wavenumber(idx[k]);
        kin += 0.5 * kk * kk;
        for (std::size_t l = k + 1; l < n; ++l) u += vt[(idx[k] + m - idx[l]) % m];
      }
      interaction_[lin] = u / double(n);
      kinetic_[lin] = kin;
    }
  }

  void strang_step(std::vector<cplx>& psi, double tau) {
    const std::size_t total = psi.size();
    if (tau != tau_) {
      half_phase_.resize(total);
      kin_phase_.resize(total);
      for (std::size_t i = 0; i < total; ++i) {
        half_phase_[i] = std::polar(1.0, -0.5 * tau * interaction_[i]);
        kin_phase_[i] = std::polar(1.0, -tau * kinetic_[i]);
      }
      tau_ = tau;
    }
    cplx* buf = fft_.data();
    for (std::size_t i = 0; i < total; ++i) buf[i] = psi[i] * half_phase_[i];
    fft_.forward();
    for (std::size_t i = 0; i < total; ++i) buf[i] *= kin_phase_[i];
    fft_.backward();
    for (std::size_t i = 0; i < total; ++i) psi[i] = buf[i] * half_phase_[i];
  }

  const std::vector<double>& interaction() const { return interaction_; }

 private:
  Grid1D grid_;
  std::size_t particles_;
  FourierTransform fft_;
  std::vector<double> interaction_, kinetic_;
  std::vector<cplx> half_phase_, kin_phase_;
  double tau_ = std::numeric_limits<double>::quiet_NaN();
};

inline TensorTrajectory solve_nbody_schrodinger(const TensorWaveFunction& psi_in, const PotentialSpec& v,
                                                double t_final, double dt, std::size_t record_every = 1) {
  detail::check_step(psi_in.grid, dt);
  checked_power(psi_in.grid.points, psi_in.particles);
  if (std::abs(psi_in.norm() - 1.0) > 1e-10) throw std::invalid_argument("initial wave function is not normalized");
  if (record_every == 0) throw std::invalid_argument("record_every must be >= 1");
  NBodySolver solver(psi_in.grid, psi_in.particles, v);
  const std::size_t steps = detail::step_count(t_final, dt);
  const double tau = steps ? t_final / double(steps) : 0.0;
  TensorTrajectory tr;
  tr.step = tau;
  tr.times.push_back(0.0);
  tr.states.push_back(psi_in);
  std::vector<cplx> psi = psi_in.amps;
  for (std::size_t s = 0; s < steps; ++s) {
    solver.strang_step(psi, tau);
    if ((s + 1) % record_every == 0 || s + 1 == steps) {
      tr.times.push_back(s + 1 == steps ? t_final : double(s + 1) * tau);
      tr.states.push_back({psi_in.grid, psi_in.particles, psi});
    }
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Density matrices
// ---------------------------------------------------------------------------

struct DensityMatrix {
  Grid1D grid;
  std::size_t particles = 1;  // k of the k-particle space
  Matrix op;                  // operator matrix = h^k * integral kernel

  double trace() const { return op.trace().real(); }
  double hermiticity_defect() const { return (op - op.adjoint()).cwiseAbs().maxCoeff(); }
  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Matrix> es(op, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }
};

// Operator of the pure state |psi><psi|.
inline DensityMatrix projector(const WaveFunction& psi) {
  const std::size_t m = psi.grid.points;
  Eigen::Map<const Eigen::VectorXcd> v(psi.amps.data(), Eigen::Index(m));
  return {psi.grid, 1, psi.grid.spacing() * (v * v.adjoint())};
}

// D_{N:k}(X, Y) = h^{N-k} sum_Z Psi(X, Z) conj(Psi(Y, Z)), returned as h^k D.
inline DensityMatrix reduced_density(const TensorWaveFunction& psi, std::size_t k) {
  const std::size_t n = psi.particles, m = psi.grid.points;
  if (k < 1 || k >= n) throw std::invalid_argument("marginal order must satisfy 1 <= k < N");
  const std::size_t rows = checked_power(m, k), cols = psi.amps.size() / rows;
  if (rows * rows > TensorWaveFunction::kMaxAmplitudes)
    throw std::length_error("reduced density matrix exceeds the memory guard");
  // row-major (X slow, Z fast) == column-major cols x rows
  Eigen::Map<const Matrix> p(psi.amps.data(), Eigen::Index(cols), Eigen::Index(rows));
  const double w = std::pow(psi.grid.spacing(), double(n));
  Matrix op = w * (p.transpose() * p.conjugate());
  return {psi.grid, k, std::move(op)};
}

// Traces out the last particle: (A_k)_{:k-1}.
inline DensityMatrix partial_trace(const DensityMatrix& a) {
  if (a.particles < 2) throw std::invalid_argument("partial trace needs k >= 2");
  const std::size_t m = a.grid.points;
  const std::size_t outer = checked_power(m, a.particles - 1);
  Matrix r = Matrix::Zero(Eigen::Index(outer), Eigen::Index(outer));
  for (std::size_t x = 0; x < outer; ++x)
    for (std::size_t y = 0; y < outer; ++y) {
      cplx s = 0.0;
      for (std::size_t z = 0; z < m; ++z) s += a.op(Eigen::Index(x * m + z), Eigen::Index(y * m + z));
      r(Eigen::Index(x), Eigen::Index(y)) = s;
    }
  return {a.grid, a.particles - 1, std::move(r)};
}

// sum |lambda_i| of a Hermitian matrix.
inline double trace_norm(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionMismatch("trace norm needs a square matrix");
  if (a.size() > 0 && (a - a.adjoint()).cwiseAbs().maxCoeff() > 1e-8)
    throw std::invalid_argument("trace norm input is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().sum();
}

// E = trace(D (I - |psi><psi|)) = 1 - <psi, D psi>. Round-off within 1e-10 of
// [0, 1] is clamped; anything further out means D or psi is not normalized.
inline double pickl_functional(const DensityMatrix& d1, const WaveFunction& psi) {
  if (d1.particles != 1 || !(d1.grid == psi.grid) || d1.op.rows() != Eigen::Index(psi.grid.points))
    throw DimensionMismatch("pickl functional needs a one-particle density on the same grid");
  Eigen::Map<const Eigen::VectorXcd> v(psi.amps.data(), Eigen::Index(psi.grid.points));
  const double tr = d1.op.trace().real();
  if (std::abs(tr - 1.0) > 1e-8)
    throw DomainError("pickl functional needs a trace-one density, got trace " + std::to_string(tr));
  const Eigen::VectorXcd u = std::sqrt(psi.grid.spacing()) * v;
  const double e = 1.0 - (u.adjoint() * d1.op * u)(0, 0).real();
  if (e < -1e-10 || e > 1.0 + 1e-10)
    throw DomainError("pickl functional " + std::to_string(e) + " outside [0, 1]: density is not normalized");
  return std::clamp(e, 0.0, 1.0);
}

// (1/N)(exp|int_0^t 10 ||V||_{2r} ||psi(s)||_{2r'} ds| - 1) at every recorded
// time, with the time integral by the trapezoid rule on the trajectory grid.
inline std::vector<double> pickl_bound(const HartreeTrajectory& tr, const PotentialSpec& v, double r,
                                       std::size_t n) {
  if (!(r >= 1.0)) throw std::invalid_argument("Hoelder exponent r must be >= 1");
  if (tr.states.empty()) return {};
  const Grid1D& g = tr.states.front().grid;
  const double r_dual = r == 1.0 ? std::numeric_limits<double>::infinity() : r / (r - 1.0);
  const double v_norm = lp_norm(g, v.table(g), 2.0 * r);
  std::vector<double> integrand(tr.states.size());
  for (std::size_t s = 0; s < tr.states.size(); ++s)
    integrand[s] = 10.0 * v_norm * lp_norm(g, tr.states[s].modulus(), 2.0 * r_dual);
  std::vector<double> out(tr.states.size(), 0.0);
  double acc = 0.0;
  for (std::size_t s = 1; s < tr.states.size(); ++s) {
    acc += 0.5 * (tr.times[s] - tr.times[s - 1]) * (integrand[s] + integrand[s - 1]);
    out[s] = std::expm1(std::abs(acc)) / double(n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// First BBGKY equation on the grid
// ---------------------------------------------------------------------------

// Real symmetric matrix of -1/2 d^2/dx^2 with the spectral symbol k^2 / 2.
inline Eigen::MatrixXd kinetic_matrix(const Grid1D& g) {
  const std::size_t m = g.points;
  Eigen::MatrixXd t(m, m);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double k = g.wavenumber(j);
        s += 0.5 * k * k * std::cos(k * (double(a) - double(b)) * g.spacing());
      }
      t(Eigen::Index(a), Eigen::Index(b)) = s / double(m);
    }
  return t;
}

// Hilbert-Schmidt norm of
//   i dA1/dt - [T, A1] - (N-1)/N [V_12, A2]_{:1}
// with dA1/dt by centered difference between `before` and `after`, which are
// `spacing` apart in time on either side of `now`.
inline double bbgky_first_residual(const TensorWaveFunction& before, const TensorWaveFunction& now,
                                   const TensorWaveFunction& after, double spacing, const PotentialSpec& v) {
  const std::size_t n = now.particles, m = now.grid.points;
  if (n < 2) throw std::invalid_argument("BBGKY residual needs N >= 2");
  const Matrix a_minus = reduced_density(before, 1).op;
  const Matrix a_plus = reduced_density(after, 1).op;
  const Matrix a1 = reduced_density(now, 1).op;
  const Matrix a2 = n == 2 ? Matrix([&] {
    Eigen::Map<const Eigen::VectorXcd> p(now.amps.data(), Eigen::Index(now.amps.size()));
    return Matrix(std::pow(now.grid.spacing(), 2.0) * (p * p.adjoint()));
  }())
                           : reduced_density(now, 2).op;

  const Matrix t = kinetic_matrix(now.grid).cast<cplx>();
  const auto vt = v.table(now.grid);
  Matrix c = Matrix::Zero(Eigen::Index(m), Eigen::Index(m));
  for (std::size_t x = 0; x < m; ++x)
    for (std::size_t y = 0; y < m; ++y) {
      cplx s = 0.0;
      for (std::size_t z = 0; z < m; ++z)
        s += (vt[(x + m - z) % m] - vt[(y + m - z) % m]) * a2(Eigen::Index(x * m + z), Eigen::Index(y * m + z));
      c(Eigen::Index(x), Eigen::Index(y)) = s;
    }
  const cplx i(0.0, 1.0);
  const Matrix lhs = i * (a_plus - a_minus) / (2.0 * spacing);
  const Matrix rhs = t * a1 - a1 * t + (double(n) - 1.0) / double(n) * c;
  return (lhs - rhs).norm();
}

// ---------------------------------------------------------------------------
// Mean-field limit experiment
// ---------------------------------------------------------------------------

struct HartreeLimitRow {
  double t = 0.0;
  std::size_t particles = 0;
  double e_n = 0.0;
  double bound = 0.0;
  double trace_distance = 0.0;
};

struct HartreeLimitResult {
  std::vector<HartreeLimitRow> rows;
  bool envelope_holds = true;        // E_N(t) <= bound(t) everywhere
  bool trace_distance_dominates = true;  // ||D - P||_1 >= E_N everywhere
  double scaling_spread = 0.0;       // max/min of N E_N(t_final) over N
  std::vector<double> max_norm_defect;  // per N, max | ||Psi(t)|| - 1 |
};

inline HartreeLimitResult hartree_limit_experiment(const WaveFunction& psi_in, const PotentialSpec& v,
                                                   const std::vector<std::size_t>& sizes, double t_final,
                                                   double dt, std::size_t record_every = 1,
                                                   double holder_r = 8.0) {
  const auto hartree = solve_hartree(psi_in, v, t_final, dt, record_every);
  HartreeLimitResult res;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t n : sizes) {
    const auto bound = pickl_bound(hartree, v, holder_r, n);
    const auto tr = solve_nbody_schrodinger(tensor_power(psi_in, n), v, t_final, dt, record_every);
    double norm_defect = 0.0;
    for (std::size_t s = 0; s < tr.states.size(); ++s) {
      norm_defect = std::max(norm_defect, std::abs(tr.states[s].norm() - 1.0));
      const auto d1 = reduced_density(tr.states[s], 1);
      HartreeLimitRow row;
      row.t = tr.times[s];
      row.particles = n;
      row.e_n = pickl_functional(d1, hartree.states[s]);
      row.bound = bound[s];
      row.trace_distance = trace_norm(d1.op - projector(hartree.states[s]).op);
      // E_N(0) = 0 exactly in theory; allow round-off at t = 0 only.
      if (row.e_n > row.bound + (s == 0 ? 1e-10 : 0.0)) res.envelope_holds = false;
      if (row.trace_distance + 1e-12 < row.e_n) res.trace_distance_dominates = false;
      res.rows.push_back(row);
    }
    res.max_norm_defect.push_back(norm_defect);
    const double scaled = double(n) * res.rows.back().e_n;
    lo = std::min(lo, scaled);
    hi = std::max(hi, scaled);
  }
  res.scaling_spread = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  return res;
}

}  // namespace meanfield::quantum
