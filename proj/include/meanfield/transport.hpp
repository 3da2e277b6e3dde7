#pragma once

// Exact Monge-Kantorovich distances between finite discrete measures.
//
//   dist_r(mu, nu) = ( min_{pi in Pi(mu, nu)} sum_ij pi_ij |x_i - y_j|^r )^{1/r},  r in {1, 2}
//
// Equal-size uniform measures reduce to a linear assignment problem (shortest
// augmenting path with dual potentials, O(n^3)). Arbitrary weights go through
// successive-shortest-path min-cost flow on the complete bipartite graph.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "meanfield/core.hpp"

namespace meanfield {

struct TransportPlan {
  std::size_t n = 0, m = 0;
  std::vector<double> coupling;  // n x m, row-major
  double cost = 0.0;             // sum pi_ij |x_i - y_j|^r

  double at(std::size_t i, std::size_t j) const { return coupling[i * m + j]; }

  // max deviation of the marginals from the prescribed weights
  double marginal_error(std::span<const double> a, std::span<const double> b) const {
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += at(i, j);
      err = std::max(err, std::abs(s - a[i]));
    }
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += at(i, j);
      err = std::max(err, std::abs(s - b[j]));
    }
    return err;
  }
  double min_entry() const {
    return coupling.empty() ? 0.0 : *std::min_element(coupling.begin(), coupling.end());
  }
};

struct MKResult {
  double distance = 0.0;
  TransportPlan plan;
};

// Solution of a square assignment problem with the dual certificate
// row_potential[i] + col_potential[j] <= cost(i, j), tight on matched edges.
struct Assignment {
  std::vector<std::size_t> row_to_col;
  std::vector<double> row_potential;
  std::vector<double> col_potential;
  double cost = 0.0;
};

// Shortest augmenting path (Hungarian method with potentials). Rows are added
// one at a time; each addition runs a Dijkstra-like sweep over the columns on
// reduced costs, so the whole solve is O(n^3).
inline Assignment solve_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw DimensionMismatch("assignment cost matrix must be n x n");
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based working arrays; column 0 is the virtual start column
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  auto c = [&](std::size_t i, std::size_t j) { return cost[(i - 1) * n + (j - 1)]; };

  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment a;
  a.row_to_col.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) a.row_to_col[match[j] - 1] = j - 1;
  a.row_potential.assign(u.begin() + 1, u.end());
  a.col_potential.assign(v.begin() + 1, v.end());
  for (std::size_t i = 0; i < n; ++i) a.cost += cost[i * n + a.row_to_col[i]];
  return a;
}

// Min-cost transportation by successive shortest paths with node potentials.
// Capacities are real-valued; each augmentation pushes the bottleneck amount.
// Residuals below `zero` are treated as exhausted.
inline TransportPlan solve_transport(std::span<const double> cost, std::span<const double> a,
                                     std::span<const double> b, double zero = 1e-15) {
  const std::size_t n = a.size(), m = b.size();
  if (cost.size() != n * m) throw DimensionMismatch("transport cost matrix must be n x m");
  constexpr double inf = std::numeric_limits<double>::infinity();

  // nodes: 0 = source, 1..n rows, n+1..n+m cols, n+m+1 = sink
  const std::size_t S = 0, T = n + m + 1, V = n + m + 2;
  std::vector<double> flow(n * m, 0.0), out(n, 0.0), in(m, 0.0), pot(V, 0.0);
  auto row = [](std::size_t i) { return 1 + i; };
  auto col = [n](std::size_t j) { return 1 + n + j; };

  const double total = std::min(std::accumulate(a.begin(), a.end(), 0.0),
                                std::accumulate(b.begin(), b.end(), 0.0));
  double sent = 0.0;
  std::vector<double> dist(V);
  std::vector<std::size_t> prev(V);
  std::vector<char> done(V);

  while (sent < total - 1e-13) {
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(done.begin(), done.end(), 0);
    dist[S] = 0.0;
    for (;;) {
      std::size_t x = V;
      for (std::size_t k = 0; k < V; ++k)
        if (!done[k] && dist[k] < inf && (x == V || dist[k] < dist[x])) x = k;
      if (x == V) break;
      done[x] = 1;
      // settled nodes stay settled: round-off in reduced costs must not
      // rewire prev[] into a cycle
      auto relax = [&](std::size_t y, double c) {
        if (done[y]) return;
        const double nd = dist[x] + c + pot[x] - pot[y];
        if (nd < dist[y]) {
          dist[y] = nd;
          prev[y] = x;
        }
      };
      if (x == S) {
        for (std::size_t i = 0; i < n; ++i)
          if (a[i] - out[i] > zero) relax(row(i), 0.0);
      } else if (x <= n) {
        const std::size_t i = x - 1;
        if (out[i] > zero) relax(S, 0.0);
        for (std::size_t j = 0; j < m; ++j) relax(col(j), cost[i * m + j]);
      } else if (x < T) {
        const std::size_t j = x - 1 - n;
        for (std::size_t i = 0; i < n; ++i)
          if (flow[i * m + j] > zero) relax(row(i), -cost[i * m + j]);
        if (b[j] - in[j] > zero) relax(T, 0.0);
      } else {
        for (std::size_t j = 0; j < m; ++j)
          if (in[j] > zero) relax(col(j), 0.0);
      }
    }
    if (dist[T] == inf) break;
    for (std::size_t k = 0; k < V; ++k) pot[k] += dist[k] < inf ? dist[k] : dist[T];

    double push = inf;
    for (std::size_t y = T; y != S; y = prev[y]) {
      const std::size_t x = prev[y];
      if (x == S) push = std::min(push, a[y - 1] - out[y - 1]);
      else if (y == T) push = std::min(push, b[x - 1 - n] - in[x - 1 - n]);
      else if (x <= n && y > n) continue;  // row -> col, uncapacitated
      else if (x > n && y <= n) push = std::min(push, flow[(y - 1) * m + (x - 1 - n)]);
      else if (y == S) push = std::min(push, out[x - 1]);
      else if (x == T) push = std::min(push, in[y - 1 - n]);
    }
    for (std::size_t y = T; y != S; y = prev[y]) {
      const std::size_t x = prev[y];
      if (x == S) out[y - 1] += push;
      else if (y == T) in[x - 1 - n] += push;
      else if (x <= n && y > n && y < T) flow[(x - 1) * m + (y - 1 - n)] += push;
      else if (x > n && x < T && y <= n && y >= 1) flow[(y - 1) * m + (x - 1 - n)] -= push;
      else if (y == S) out[x - 1] -= push;
      else if (x == T) in[y - 1 - n] -= push;
    }
    sent += push;
  }

  TransportPlan plan{n, m, std::move(flow), 0.0};
  for (auto& f : plan.coupling)
    if (f < 0.0) f = 0.0;
  for (std::size_t k = 0; k < n * m; ++k) plan.cost += plan.coupling[k] * cost[k];
  return plan;
}

namespace detail {

inline void check_pair(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int r) {
  if (mu.size() == 0 || nu.size() == 0) throw std::invalid_argument("empty measure");
  if (mu.dim() != nu.dim()) throw DimensionMismatch("measures live in different dimensions");
  if (r != 1 && r != 2) throw std::invalid_argument("exponent r must be 1 or 2");
}

inline std::vector<double> cost_matrix(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int r) {
  std::vector<double> c(mu.size() * nu.size());
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (std::size_t j = 0; j < nu.size(); ++j) {
      const double dd = distance(mu.atom(i), nu.atom(j));
      c[i * nu.size() + j] = r == 1 ? dd : dd * dd;
    }
  return c;
}

}  // namespace detail

inline MKResult mk_distance(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int r) {
  detail::check_pair(mu, nu, r);
  const auto cost = detail::cost_matrix(mu, nu, r);
  MKResult res;
  if (mu.size() == nu.size() && mu.uniform_weights() && nu.uniform_weights()) {
    const std::size_t n = mu.size();
    const auto asg = solve_assignment(cost, n);
    res.plan = TransportPlan{n, n, std::vector<double>(n * n, 0.0), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      res.plan.coupling[i * n + asg.row_to_col[i]] = 1.0 / double(n);
      res.plan.cost += cost[i * n + asg.row_to_col[i]];
    }
    res.plan.cost /= double(n);
  } else if (mu.uniform_weights() && nu.uniform_weights() &&
             std::max(mu.size(), nu.size()) % std::min(mu.size(), nu.size()) == 0) {
    // uniform clouds whose sizes divide: split each atom of the smaller one
    // into equal copies and solve a square assignment, far cheaper than the flow
    const std::size_t n = mu.size(), m = nu.size(), big = std::max(n, m);
    const std::size_t rep_mu = big / n, rep_nu = big / m;
    std::vector<double> square(big * big);
    for (std::size_t i = 0; i < big; ++i)
      for (std::size_t j = 0; j < big; ++j) square[i * big + j] = cost[(i / rep_mu) * m + j / rep_nu];
    const auto asg = solve_assignment(square, big);
    res.plan = TransportPlan{n, m, std::vector<double>(n * m, 0.0), 0.0};
    for (std::size_t i = 0; i < big; ++i)
      res.plan.coupling[(i / rep_mu) * m + asg.row_to_col[i] / rep_nu] += 1.0 / double(big);
    for (std::size_t k = 0; k < n * m; ++k) res.plan.cost += res.plan.coupling[k] * cost[k];
  } else {
    res.plan = solve_transport(cost, mu.weights(), nu.weights());
  }
  res.distance = r == 1 ? res.plan.cost : std::sqrt(res.plan.cost);
  return res;
}

// Exact distance on the real line by the monotone (quantile) coupling, which
// is optimal for the convex costs |x - y| and |x - y|^2. O((n + m) log(n + m)).
inline double monotone_distance_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int r) {
  detail::check_pair(mu, nu, r);
  if (mu.dim() != 1) throw DimensionMismatch("monotone coupling needs one-dimensional measures");
  auto sorted = [](const EmpiricalMeasure& m) {
    std::vector<std::pair<double, double>> v(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) v[i] = {m.atom(i)[0], m.weight(i)};
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto xs = sorted(mu), ys = sorted(nu);
  std::size_t i = 0, j = 0;
  double ra = xs[0].second, rb = ys[0].second, cost = 0.0;
  while (i < xs.size() && j < ys.size()) {
    const double mass = std::min(ra, rb);
    const double dd = std::abs(xs[i].first - ys[j].first);
    cost += mass * (r == 1 ? dd : dd * dd);
    ra -= mass;
    rb -= mass;
    if (ra <= rb) {
      if (++i < xs.size()) ra += xs[i].second;
    } else {
      if (++j < ys.size()) rb += ys[j].second;
    }
  }
  return r == 1 ? cost : std::sqrt(cost);
}

// Exhaustive minimum over all permutations; the oracle for small instances.
inline double brute_force_w1(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  detail::check_pair(mu, nu, 1);
  const std::size_t n = mu.size();
  if (nu.size() != n || !mu.uniform_weights() || !nu.uniform_weights())
    throw std::invalid_argument("brute_force_w1 needs equal-size uniform measures");
  if (n > 8) throw std::invalid_argument("brute_force_w1 refuses more than 8 atoms");
  const auto cost = detail::cost_matrix(mu, nu, 1);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += cost[i * n + perm[i]];
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / double(n);
}

// ---------------------------------------------------------------------------
// Kantorovich-Rubinstein dual certificates
// ---------------------------------------------------------------------------

using ScalarField = std::function<double(std::span<const double>)>;

struct LipschitzCertificateError : std::invalid_argument {
  LipschitzCertificateError(const std::string& what, std::size_t cand, std::vector<double> p,
                            std::vector<double> q)
      : std::invalid_argument(what), candidate(cand), a(std::move(p)), b(std::move(q)) {}
  std::size_t candidate;
  std::vector<double> a, b;  // the violating pair
};

// Best lower bound max_k |<mu, phi_k> - <nu, phi_k>| over candidates that are
// certified 1-Lipschitz on the union of both supports.
inline double kr_dual_bound(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                            const std::vector<ScalarField>& candidates) {
  detail::check_pair(mu, nu, 1);
  const std::size_t d = mu.dim();
  std::vector<std::span<const double>> pts;
  for (std::size_t i = 0; i < mu.size(); ++i) pts.push_back(mu.atom(i));
  for (std::size_t j = 0; j < nu.size(); ++j) pts.push_back(nu.atom(j));

  double best = 0.0;
  std::vector<double> vals(pts.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto& phi = candidates[c];
    for (std::size_t p = 0; p < pts.size(); ++p) vals[p] = phi(pts[p]);
    for (std::size_t p = 0; p < pts.size(); ++p)
      for (std::size_t q = p + 1; q < pts.size(); ++q) {
        const double dd = distance(pts[p], pts[q]);
        // slack covers the rounding of phi itself near coincident points
        const double slack = 4 * std::numeric_limits<double>::epsilon() *
                             (std::abs(vals[p]) + std::abs(vals[q]));
        if (std::abs(vals[p] - vals[q]) > (1.0 + 1e-12) * dd + slack)
          throw LipschitzCertificateError(
              "candidate " + std::to_string(c) + " is not 1-Lipschitz on the supports", c,
              std::vector<double>(pts[p].begin(), pts[p].end()),
              std::vector<double>(pts[q].begin(), pts[q].end()));
      }
    double gap = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) gap += mu.weight(i) * vals[i];
    for (std::size_t j = 0; j < nu.size(); ++j) gap -= nu.weight(j) * vals[mu.size() + j];
    best = std::max(best, std::abs(gap));
  }
  (void)d;
  return best;
}

// Optimal 1-Lipschitz potential for equal-size uniform measures, built as the
// c-transform phi(z) = min_j (|z - y_j| - v_j) of the assignment column duals.
inline ScalarField kantorovich_potential(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  detail::check_pair(mu, nu, 1);
  if (mu.size() != nu.size() || !mu.uniform_weights() || !nu.uniform_weights())
    throw std::invalid_argument("kantorovich_potential needs equal-size uniform measures");
  const auto asg = solve_assignment(detail::cost_matrix(mu, nu, 1), mu.size());
  return [ys = nu.atoms(), v = asg.col_potential, d = nu.dim()](std::span<const double> z) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < v.size(); ++j)
      best = std::min(best, distance(z, std::span<const double>(ys.data() + j * d, d)) - v[j]);
    return best;
  };
}

}  // namespace meanfield
