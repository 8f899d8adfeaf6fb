// Euler-Lagrange and Hamiltonian flows with an embedded adaptive
// Runge-Kutta pair, chart rebasing along trajectories, the reachable-set
// speed estimate R(A), and the a-priori certification of solution records.
#pragma once

#include <tonelli/checks.hpp>
#include <tonelli/modification.hpp>
#include <tonelli/pathspace.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace tonelli {

struct FlowState {
  double t = 0.0;
  ChartPoint x{0, Vec()};
  Vec v;  // velocity (Lagrangian flavor) or momentum (Hamiltonian flavor)
};

struct TrajectorySample {
  double t;
  ChartPoint x;
  Vec v;
  double invariant;  // energy along EL orbits, H along Hamiltonian orbits
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  int accepted = 0;
  int rejected = 0;
  double max_fiber_norm = 0.0;  // metric norm of v (resp. p) over the run

  const TrajectorySample& back() const { return samples.back(); }
  FlowState final_state() const {
    return {samples.back().t, samples.back().x, samples.back().v};
  }
};

namespace detail {

// Dormand-Prince 5(4) coefficients.
struct Dopri5 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5,
                          c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                          a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113,
                          b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                          b6 = 11.0 / 84;
  static constexpr double e1 = 35.0 / 384 - 5179.0 / 57600,
                          e3 = 500.0 / 1113 - 7571.0 / 16695,
                          e4 = 125.0 / 192 - 393.0 / 640,
                          e5 = -2187.0 / 6784 + 92097.0 / 339200,
                          e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;
};

// One adaptive integration in fixed chart coordinates between rebase events.
// rhs(t, y) -> dy/dt; stops at t1 or throws on step-size underflow.
template <typename Rhs, typename Observer>
void dopri5(const Rhs& rhs, double t0, Vec y, double t1, double tol,
            double h_max, int& accepted, int& rejected,
            const Observer& observe) {
  using D = Dopri5;
  double span = t1 - t0;
  if (span == 0.0) return;
  double dir = (span > 0.0) ? 1.0 : -1.0;
  double h = dir * std::min(h_max, std::abs(span) / 4.0);
  double t = t0;
  Vec k1 = rhs(t, y);
  const double h_min = 1e-14 * (1.0 + std::abs(span));
  while (dir * (t1 - t) > 0.0) {
    bool last = false;
    if (dir * (t + h - t1) >= 0.0) {
      h = t1 - t;
      last = true;
    }
    Vec k2 = rhs(t + D::c2 * h, y + h * (D::a21 * k1));
    Vec k3 = rhs(t + D::c3 * h, y + h * (D::a31 * k1 + D::a32 * k2));
    Vec k4 = rhs(t + D::c4 * h,
                 y + h * (D::a41 * k1 + D::a42 * k2 + D::a43 * k3));
    Vec k5 = rhs(t + D::c5 * h, y + h * (D::a51 * k1 + D::a52 * k2 +
                                         D::a53 * k3 + D::a54 * k4));
    Vec k6 = rhs(t + h, y + h * (D::a61 * k1 + D::a62 * k2 + D::a63 * k3 +
                                 D::a64 * k4 + D::a65 * k5));
    Vec ynew = y + h * (D::b1 * k1 + D::b3 * k3 + D::b4 * k4 + D::b5 * k5 +
                        D::b6 * k6);
    Vec k7 = rhs(t + h, ynew);
    Vec err = h * (D::e1 * k1 + D::e3 * k3 + D::e4 * k4 + D::e5 * k5 +
                   D::e6 * k6 + D::e7 * k7);
    double scale = tol * (1.0 + std::max(y.norm(), ynew.norm()));
    double ratio = err.norm() / scale;
    if (!std::isfinite(ratio)) ratio = 1e10;
    if (ratio <= 1.0) {
      t = last ? t1 : t + h;
      y = std::move(ynew);
      k1 = std::move(k7);
      ++accepted;
      if (!observe(t, y)) return;  // observer may rebase and restart
    } else {
      ++rejected;
    }
    double grow = 0.9 * std::pow(std::max(ratio, 1e-10), -0.2);
    h *= std::clamp(grow, 0.2, 5.0);
    if (std::abs(h) > h_max) h = dir * h_max;
    if (std::abs(h) < h_min)
      throw std::runtime_error(
          "flow integration step size underflow: near-blowup in finite time, "
          "evidence against the completeness assumption");
  }
}

}  // namespace detail

// Solved-form Euler-Lagrange right-hand side:
// q' = v,  (d_vvL) v' = d_qL - d_tvL - d_qvL^T v.
inline Vec euler_lagrange_rhs(const Lagrangian& L, double t, int chart,
                              const Vec& y) {
  int n = int(y.size()) / 2;
  ChartPoint x{chart, y.head(n)};
  Vec v = y.tail(n);
  Mat A = L.d_vv(t, x, v);
  Vec rhs = L.d_q(t, x, v) - L.d_qv(t, x, v).transpose() * v;
  if (!L.autonomous()) rhs -= L.d_tv(t, x, v);
  Eigen::LDLT<Mat> ldlt(A);
  Vec vdot = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success || !vdot.allFinite()) {
    Eigen::FullPivLU<Mat> lu(A);
    require(lu.isInvertible(), "singular fiber Hessian along trajectory");
    vdot = lu.solve(rhs);
  }
  Vec dy(2 * n);
  dy << v, vdot;
  return dy;
}

inline Vec hamiltonian_rhs(const Hamiltonian& H, double t, int chart,
                           const Vec& y) {
  int n = int(y.size()) / 2;
  ChartPoint x{chart, y.head(n)};
  Vec p = y.tail(n);
  Vec dy(2 * n);
  dy << H.d_p(t, x, p), -H.d_q(t, x, p);
  return dy;
}

namespace detail {

enum class FlowFlavor { Lagrangian, Hamiltonian };

template <typename Model>
Trajectory integrate_flow(const Model& model, FlowFlavor flavor,
                          FlowState s0, double t1, double tol, double h_max) {
  const Manifold& m = model.manifold();
  int n = m.dim();
  require(int(s0.v.size()) == n, "flow state has wrong fiber dimension");

  Trajectory traj;
  auto invariant = [&](double t, const ChartPoint& x, const Vec& v) {
    if constexpr (std::is_base_of_v<Lagrangian, Model>) {
      return model.d_v(t, x, v).dot(v) - model.eval(t, x, v);
    } else {
      return model.eval(t, x, v);
    }
  };
  auto fiber_norm = [&](const ChartPoint& x, const Vec& v) {
    Mat g = m.metric(x);
    if (flavor == FlowFlavor::Lagrangian) return std::sqrt(v.dot(g * v));
    return std::sqrt(v.dot(g.ldlt().solve(v)));
  };

  ChartPoint x = m.rebase(s0.x);
  Vec v = s0.v;
  double t = s0.t;
  traj.samples.push_back({t, x, v, invariant(t, x, v)});
  traj.max_fiber_norm = fiber_norm(x, v);

  auto record = [&](double tt, const ChartPoint& xx, const Vec& vv) {
    traj.samples.push_back({tt, xx, vv, invariant(tt, xx, vv)});
    traj.max_fiber_norm = std::max(traj.max_fiber_norm, fiber_norm(xx, vv));
  };

  // Integrate in the current chart; rebase (and transform the fiber vector)
  // whenever the coordinates drift, then resume.
  while (t != t1) {
    Vec y(2 * n);
    y << x.q, v;
    bool rebased = false;
    auto rhs = [&](double tt, const Vec& yy) {
      if constexpr (std::is_base_of_v<Lagrangian, Model>)
        return euler_lagrange_rhs(model, tt, x.chart, yy);
      else
        return hamiltonian_rhs(model, tt, x.chart, yy);
    };
    auto observer = [&](double tt, const Vec& yy) {
      ChartPoint here{x.chart, yy.head(n)};
      Vec fib = yy.tail(n);
      ChartPoint reb = m.rebase(here);
      if (reb.chart != here.chart || (reb.q - here.q).norm() > 1e-12) {
        SegmentFrame f = m.segment_frame(reb, here);
        if (!f.identity) {
          if (flavor == FlowFlavor::Lagrangian)
            fib = f.jac * fib;
          else
            fib = f.jac.transpose().fullPivLu().solve(fib).eval();
        }
        here = reb;
        rebased = true;
      }
      t = tt;
      x = here;
      v = fib;
      record(tt, here, fib);
      return !rebased;  // false stops the inner loop so we restart in the
                        // new chart
    };
    detail::dopri5(rhs, t, y, t1, tol, h_max, traj.accepted, traj.rejected,
                   observer);
    if (!rebased) break;
  }
  return traj;
}

}  // namespace detail

inline Trajectory integrate_lagrangian(
    const Lagrangian& L, FlowState s0, double t1, double tol = 1e-9,
    double h_max = std::numeric_limits<double>::infinity()) {
  return detail::integrate_flow(L, detail::FlowFlavor::Lagrangian,
                                std::move(s0), t1, tol, h_max);
}

inline Trajectory integrate_hamiltonian(
    const Hamiltonian& H, FlowState s0, double t1, double tol = 1e-9,
    double h_max = std::numeric_limits<double>::infinity()) {
  return detail::integrate_flow(H, detail::FlowFlavor::Hamiltonian,
                                std::move(s0), t1, tol, h_max);
}

inline nlohmann::json trajectory_to_json(const Trajectory& traj) {
  nlohmann::json j;
  j["accepted_steps"] = traj.accepted;
  j["rejected_steps"] = traj.rejected;
  j["max_fiber_norm"] = traj.max_fiber_norm;
  j["samples"] = nlohmann::json::array();
  for (const auto& s : traj.samples) {
    std::vector<double> q(s.x.q.data(), s.x.q.data() + s.x.q.size());
    std::vector<double> v(s.v.data(), s.v.data() + s.v.size());
    j["samples"].push_back({{"t", s.t},
                            {"chart", s.x.chart},
                            {"q", q},
                            {"v", v},
                            {"invariant", s.invariant}});
  }
  return j;
}

// ---------------------------------------------------------------------------
// Reachable-set speed estimate R(A)

struct FlowGridSpec {
  int per_dim = 9;        // base-point and magnitude grid density
  int extra_dirs = 4;     // seeded directions beyond the coordinate axes
  int st_count = 11;      // (s, t) grid for time-dependent systems
  double margin = 1.2;
  double tol = 1e-6;
  double h_max = 0.05;    // speed is monitored at accepted steps
  std::uint64_t seed = 2026;
};

struct ReachableSetEstimate {
  double A = 0.0;
  double C1 = 0.0;
  double R_A = 0.0;
  double margin = 1.2;
  double max_observed = 0.0;
  double seed_radius = 0.0;
  int seed_count = 0;
  std::string grid_description;
};

namespace detail {

struct FlowSeed {
  ChartPoint x;
  Vec v;
};

inline std::vector<FlowSeed> flow_seeds(const Manifold& m, double radius,
                                        const FlowGridSpec& spec,
                                        bool momentum) {
  auto bases = sample_base_points(m, spec.per_dim);
  auto dirs = sample_directions(m.dim(), spec.extra_dirs, spec.seed);
  std::vector<FlowSeed> seeds;
  for (const auto& x : bases) {
    Mat g = m.metric(x);
    Mat norm_with = momentum ? Mat(g.inverse()) : g;
    for (const auto& d : dirs) {
      double dn = std::sqrt(d.dot(norm_with * d));
      Vec u = d / dn;
      for (int k = 0; k < spec.per_dim; ++k) {
        double mag = radius * (k + 1) / spec.per_dim;
        seeds.push_back({x, mag * u});
      }
    }
    seeds.push_back({x, Vec::Zero(m.dim())});
  }
  return seeds;
}

template <typename Model>
double propagated_max_norm(const Model& model, detail::FlowFlavor flavor,
                           const std::vector<FlowSeed>& seeds,
                           const FlowGridSpec& spec, bool autonomous) {
  double worst = 0.0;
  auto run = [&](const FlowSeed& s, double t_start, double t_end) {
    Trajectory traj =
        integrate_flow(model, flavor, {t_start, s.x, s.v}, t_end, spec.tol,
                       spec.h_max);
    worst = std::max(worst, traj.max_fiber_norm);
  };
  for (const auto& s : seeds) {
    if (autonomous) {
      // The leftover flow phi_t o phi_s^{-1} only depends on t - s in [-1,1].
      run(s, 0.0, 1.0);
      run(s, 0.0, -1.0);
    } else {
      for (int i = 0; i < spec.st_count; ++i) {
        double start = double(i) / (spec.st_count - 1);
        if (start > 0.0) run(s, start, 0.0);
        if (start < 1.0) run(s, start, 1.0);
      }
    }
  }
  return worst;
}

}  // namespace detail

inline ReachableSetEstimate estimate_R_A(const Lagrangian& L, double A,
                                         double C1,
                                         const FlowGridSpec& spec = {}) {
  require(A >= 0.0 && C1 >= 0.0, "estimate_R_A: A and C1 must be nonnegative");
  const Manifold& m = L.manifold();
  double radius = A + C1;
  auto seeds = detail::flow_seeds(m, radius, spec, false);
  double worst = detail::propagated_max_norm(
      L, detail::FlowFlavor::Lagrangian, seeds, spec, L.autonomous());

  ReachableSetEstimate est;
  est.A = A;
  est.C1 = C1;
  est.margin = spec.margin;
  est.max_observed = worst;
  est.seed_radius = radius;
  est.seed_count = int(seeds.size());
  est.R_A = spec.margin * std::max(worst, radius);
  est.grid_description =
      std::to_string(spec.per_dim) + " pts/dim, " +
      std::to_string(seeds.size()) + " seeds, |v| <= " + std::to_string(radius);
  require(est.R_A >= radius, "reachable-set estimate lost the initial ball");
  return est;
}

// Hamiltonian analogue: seeds are momenta with a(|p|) <= A, where a is the
// integrand lower-bound witness of the modification.
inline ReachableSetEstimate estimate_R_A(const Hamiltonian& H, double A,
                                         const ScalarWitness& a,
                                         const FlowGridSpec& spec = {}) {
  // Largest radius with a(r) <= A, found by doubling plus bisection.
  double lo = 0.0, hi = 1.0;
  int guard = 0;
  while (a.fn(hi) <= A && guard++ < 200) hi *= 2.0;
  require(guard < 200, "integrand witness never exceeds the action bound");
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    (a.fn(mid) <= A ? lo : hi) = mid;
  }
  double radius = lo;

  auto seeds = detail::flow_seeds(H.manifold(), radius, spec, true);
  double worst = detail::propagated_max_norm(
      H, detail::FlowFlavor::Hamiltonian, seeds, spec, H.autonomous());

  ReachableSetEstimate est;
  est.A = A;
  est.C1 = 0.0;
  est.margin = spec.margin;
  est.max_observed = worst;
  est.seed_radius = radius;
  est.seed_count = int(seeds.size());
  est.R_A = spec.margin * std::max(worst, radius);
  est.grid_description = std::to_string(spec.per_dim) + " pts/dim, " +
                         std::to_string(seeds.size()) +
                         " seeds, a(|p|) <= " + std::to_string(A);
  return est;
}

// ---------------------------------------------------------------------------
// A-priori certification: a refined critical point of the modified action
// whose speed stays at or below R_A < R is an orbit of the original system,
// and the two action values must agree.

struct Certificate {
  bool certified = false;
  double max_speed = 0.0;
  double R_A = 0.0;
  double R = 0.0;
  double action_original = 0.0;
  double action_modified = 0.0;
  double action_gap = 0.0;
  std::string witness;
};

inline Certificate certify_solution(const Lagrangian& L,
                                    const LagrangianModification& mod,
                                    const DiscretePath& path, double R_A) {
  Certificate cert;
  cert.R_A = R_A;
  cert.R = mod.R;

  auto segs = precompute_segments(path);
  const Manifold& m = *path.manifold;
  int worst_seg = 0;
  for (int i = 0; i < int(segs.size()); ++i) {
    const auto& s = segs[i];
    double speed = std::sqrt(s.v.dot(m.metric(s.mid) * s.v));
    if (speed > cert.max_speed) {
      cert.max_speed = speed;
      worst_seg = i;
    }
  }
  cert.action_original = action(L, path);
  cert.action_modified = action(*mod.model, path);
  cert.action_gap = std::abs(cert.action_original - cert.action_modified);

  if (cert.max_speed > R_A) {
    cert.witness = "segment " + std::to_string(worst_seg) + " speed " +
                   std::to_string(cert.max_speed) + " exceeds R_A";
    return cert;
  }
  if (!(R_A < mod.R)) {
    cert.witness = "R_A does not leave room below the modification radius";
    return cert;
  }
  if (!(cert.action_gap < 1e-9)) {
    cert.witness = "modified and original actions disagree by " +
                   std::to_string(cert.action_gap);
    return cert;
  }
  cert.certified = true;
  return cert;
}

}  // namespace tonelli
