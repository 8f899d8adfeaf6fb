// Sample-based verification of Tonelli conditions, the time-dependence
// completeness criterion dH/dt <= c(1+H), and the growth bounds used by the
// action estimates. All checks are necessary-condition tests on a finite
// sample; a PASS certifies the condition on the sampled set only.
#pragma once

#include <tonelli/core.hpp>
#include <tonelli/models.hpp>

#include <algorithm>
#include <functional>
#include <limits>
#include <sstream>
#include <vector>

namespace tonelli {

struct SampleSpec {
  double v_max = 10.0;  // largest fiber magnitude sampled
  int mag_count = 41;   // magnitudes, linspace over [0, v_max]
  int q_per_dim = 7;    // base-point grid resolution per dimension
  int extra_dirs = 8;   // random unit directions beyond the coordinate axes
  int t_count = 9;      // time samples when the model is time-dependent
  int k_max = 5;        // superlinearity slopes K = 1..k_max
  std::uint64_t seed = 2026;
};

inline std::vector<double> sample_magnitudes(const SampleSpec& s) {
  std::vector<double> out(s.mag_count);
  for (int i = 0; i < s.mag_count; ++i)
    out[i] = s.v_max * double(i) / double(s.mag_count - 1);
  return out;
}

inline std::vector<double> sample_times(const SampleSpec& s, bool autonomous) {
  if (autonomous) return {0.0};
  std::vector<double> out(s.t_count);
  for (int i = 0; i < s.t_count; ++i)
    out[i] = double(i) / double(s.t_count);
  return out;
}

inline std::vector<ChartPoint> sample_base_points(const Manifold& m,
                                                  int per_dim) {
  std::vector<ChartPoint> pts;
  int n = m.dim();
  std::vector<int> idx(n, 0);
  if (m.num_charts() == 1) {
    // Torus charts: grid over [0,1)^n, includes the origin exactly.
    for (;;) {
      Vec q(n);
      for (int d = 0; d < n; ++d) q[d] = double(idx[d]) / per_dim;
      pts.push_back({0, q});
      int d = 0;
      while (d < n && ++idx[d] == per_dim) idx[d++] = 0;
      if (d == n) break;
    }
  } else {
    // Chart-0 grid over [-1.25, 1.25]^n (covers past the equator), the same
    // grid in the opposite chart, plus both chart origins.
    for (int chart = 0; chart < m.num_charts(); ++chart) {
      std::fill(idx.begin(), idx.end(), 0);
      for (;;) {
        Vec q(n);
        for (int d = 0; d < n; ++d)
          q[d] = -1.25 + 2.5 * double(idx[d]) / (per_dim - 1);
        pts.push_back({chart, q});
        int d = 0;
        while (d < n && ++idx[d] == per_dim) idx[d++] = 0;
        if (d == n) break;
      }
    }
  }
  return pts;
}

inline std::vector<Vec> sample_directions(int n, int extra,
                                          std::uint64_t seed) {
  std::vector<Vec> dirs;
  for (int i = 0; i < n; ++i) {
    Vec e = Vec::Zero(n);
    e[i] = 1.0;
    dirs.push_back(e);
    dirs.push_back(-e);
  }
  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < extra; ++k) {
    Vec d(n);
    for (int i = 0; i < n; ++i) d[i] = gauss(rng);
    if (d.norm() < 1e-12) d[0] = 1.0;
    dirs.push_back(d / d.norm());
  }
  return dirs;
}

// ---------------------------------------------------------------------------
// Tonelli report.

struct TonelliReport {
  double ell0 = 0.0;           // smallest d_vvL eigenvalue seen
  double ell0_away = 0.0;      // same, restricted to |v|_q >= 0.1
  bool l1_pass = false;
  bool l1_fail_at_zero_only = false;
  std::vector<double> c_of_k;  // C(K) = max(K|v|_q - L), K = 1..k_max
  bool l2_pass = false;
  bool l3_pass = false;        // completeness verdict (compact base)
  double max_asymmetry = 0.0;
  std::string sample_description;
  std::string verdict;

  std::string l1_verdict() const {
    if (l1_pass) return "PASS";
    return l1_fail_at_zero_only ? "FAIL-at-zero" : "FAIL";
  }
};

inline TonelliReport check_tonelli(const Lagrangian& L,
                                   const SampleSpec& spec = {}) {
  require(spec.v_max >= 10.0, "check_tonelli: v_max must be at least 10");
  const Manifold& m = L.manifold();
  const int n = m.dim();

  auto points = sample_base_points(m, spec.q_per_dim);
  auto dirs = sample_directions(n, spec.extra_dirs, spec.seed);
  auto mags = sample_magnitudes(spec);
  auto ts = sample_times(spec, L.autonomous());

  TonelliReport rep;
  rep.ell0 = std::numeric_limits<double>::infinity();
  rep.ell0_away = rep.ell0;
  rep.c_of_k.assign(spec.k_max, -std::numeric_limits<double>::infinity());
  // Track where each C(K) deficit peaks, to flag saturation at the sample
  // boundary (the sign that superlinearity is failing).
  std::vector<double> peak_mag(spec.k_max, 0.0);
  std::vector<double> deficit_at_last(spec.k_max,
                                      -std::numeric_limits<double>::infinity());
  std::vector<double> deficit_at_prev(spec.k_max,
                                      -std::numeric_limits<double>::infinity());

  for (double t : ts)
    for (const auto& x : points) {
      Mat g = m.metric(x);
      for (const auto& d : dirs) {
        double dn = std::sqrt(d.dot(g * d));
        Vec u = d / dn;
        for (double mag : mags) {
          Vec v = mag * u;
          Mat A = L.d_vv(t, x, v);
          double asym = (A - A.transpose()).cwiseAbs().maxCoeff();
          rep.max_asymmetry = std::max(rep.max_asymmetry, asym);
          if (asym > 1e-8 * (1.0 + A.cwiseAbs().maxCoeff()))
            throw std::runtime_error(
                "check_tonelli: d_vv is not symmetric within tolerance");
          Mat As = 0.5 * (A + A.transpose());
          double lam =
              Eigen::SelfAdjointEigenSolver<Mat>(As).eigenvalues().minCoeff();
          rep.ell0 = std::min(rep.ell0, lam);
          if (mag >= 0.1) rep.ell0_away = std::min(rep.ell0_away, lam);
          double Lval = L.eval(t, x, v);
          for (int k = 1; k <= spec.k_max; ++k) {
            double deficit = k * mag - Lval;
            if (deficit > rep.c_of_k[k - 1]) {
              rep.c_of_k[k - 1] = deficit;
              peak_mag[k - 1] = mag;
            }
            if (mag == mags.back())
              deficit_at_last[k - 1] =
                  std::max(deficit_at_last[k - 1], deficit);
            if (mags.size() >= 2 && mag == mags[mags.size() - 2])
              deficit_at_prev[k - 1] =
                  std::max(deficit_at_prev[k - 1], deficit);
          }
        }
      }
    }

  const double eig_tol = 1e-10;
  rep.l1_pass = rep.ell0 > eig_tol;
  rep.l1_fail_at_zero_only = !rep.l1_pass && rep.ell0 >= -eig_tol &&
                             rep.ell0_away > eig_tol;

  rep.l2_pass = true;
  for (int k = 0; k < spec.k_max; ++k) {
    bool at_boundary = peak_mag[k] >= mags.back() - 1e-12;
    bool still_growing =
        deficit_at_last[k] > deficit_at_prev[k] + 1e-10 * (1.0 + spec.v_max);
    if (at_boundary && still_growing) rep.l2_pass = false;
  }

  // Compact configuration manifolds: flows stay complete when the fiberwise
  // convexity and superlinear growth hold on the sample (degeneracy at the
  // zero section alone does not obstruct).
  rep.l3_pass = rep.l2_pass && (rep.l1_pass || rep.l1_fail_at_zero_only);

  std::ostringstream desc;
  desc << m.name() << ": " << points.size() << " base points x " << dirs.size()
       << " directions x " << mags.size() << " magnitudes in [0," << spec.v_max
       << "], " << ts.size() << " time sample" << (ts.size() == 1 ? "" : "s");
  rep.sample_description = desc.str();

  std::ostringstream verdict;
  verdict << "L1 verdict " << rep.l1_verdict() << ", L2 verdict "
          << (rep.l2_pass ? "PASS" : "FAIL");
  rep.verdict = verdict.str();
  return rep;
}

// ---------------------------------------------------------------------------
// Completeness criterion dH/dt <= c (1 + H) for time-dependent Hamiltonians.

struct CompletenessReport {
  bool pass = false;
  bool autonomous = false;
  double c = 0.0;  // smallest c satisfying the bound on the sample
  std::string detail;
};

inline CompletenessReport check_completeness_criterion(
    const Hamiltonian& H, const SampleSpec& spec = {}) {
  CompletenessReport rep;
  if (H.autonomous()) {
    rep.pass = true;
    rep.autonomous = true;
    rep.c = 0.0;
    rep.detail = "time-independent Hamiltonian: dH/dt = 0, c = 0";
    return rep;
  }

  const Manifold& m = H.manifold();
  auto points = sample_base_points(m, spec.q_per_dim);
  auto dirs = sample_directions(m.dim(), spec.extra_dirs, spec.seed);
  auto mags = sample_magnitudes(spec);
  auto ts = sample_times(spec, false);

  const double tiny = 1e-8;
  double c_inner = 0.0, c_full = 0.0;
  for (double t : ts)
    for (const auto& x : points) {
      Mat ginv = m.metric(x).inverse();
      for (const auto& d : dirs) {
        double dn = std::sqrt(d.dot(ginv * d));
        Vec u = d / dn;
        for (double mag : mags) {
          Vec p = mag * u;
          double dtH = H.d_t(t, x, p);
          double denom = 1.0 + H.eval(t, x, p);
          double needed;
          if (denom > tiny) {
            needed = std::max(dtH, 0.0) / denom;
          } else if (dtH <= tiny) {
            needed = 0.0;
          } else {
            rep.pass = false;
            rep.c = std::numeric_limits<double>::infinity();
            rep.detail = "FAIL: dH/dt > 0 at a sampled point with 1+H <= 0";
            return rep;
          }
          c_full = std::max(c_full, needed);
          if (mag <= 0.5 * spec.v_max) c_inner = std::max(c_inner, needed);
        }
      }
    }

  rep.c = c_full;
  // The bound must not keep growing as the sampled momentum radius doubles;
  // if it does, no finite c works on the fiber.
  bool stable = c_full <= std::max(1.25 * c_inner, c_inner + 0.5);
  rep.pass = stable;
  std::ostringstream d;
  if (stable)
    d << "smallest sampled c = " << c_full;
  else
    d << "FAIL: required c grows with |p| (" << c_inner << " -> " << c_full
      << " as the sample radius doubles)";
  rep.detail = d.str();
  return rep;
}

// ---------------------------------------------------------------------------
// Growth bounds: DH[Y] - H >= a(|p|) with a eventually increasing (H1) and
// H >= h(|p|) with h superlinear-type (H2). When no witness is supplied the
// defaults a(s) = s - c0 and h(s) = s log(1+s) - c1 are fitted on the inner
// half of the sample and verified on all of it.

struct ScalarWitness {
  std::function<double(double)> fn;
  std::string description;
};

struct GrowthReport {
  bool h1_pass = false;
  bool h2_pass = false;
  double c0 = 0.0;  // constant in the fitted a(s) = s - c0
  double c1 = 0.0;  // constant in the fitted h(s) = s log(1+s) - c1
  std::string detail;
};

inline GrowthReport check_h1_h2(const Hamiltonian& H,
                                const SampleSpec& spec = {},
                                const ScalarWitness* a_given = nullptr,
                                const ScalarWitness* h_given = nullptr) {
  const Manifold& m = H.manifold();
  auto points = sample_base_points(m, spec.q_per_dim);
  auto dirs = sample_directions(m.dim(), spec.extra_dirs, spec.seed);
  auto mags = sample_magnitudes(spec);
  auto ts = sample_times(spec, H.autonomous());

  struct Row {
    double s, integrand, value;
  };
  std::vector<Row> rows;
  rows.reserve(points.size() * dirs.size() * mags.size() * ts.size());
  for (double t : ts)
    for (const auto& x : points) {
      Mat ginv = m.metric(x).inverse();
      for (const auto& d : dirs) {
        double dn = std::sqrt(d.dot(ginv * d));
        Vec u = d / dn;
        for (double mag : mags) {
          Vec p = mag * u;
          rows.push_back(
              {mag, action_integrand(H, t, x, p), H.eval(t, x, p)});
        }
      }
    }

  GrowthReport rep;
  const double half = 0.5 * spec.v_max;
  const double slack = 1e-9 * (1.0 + spec.v_max);

  std::function<double(double)> a_fn, h_fn;
  if (a_given) {
    a_fn = a_given->fn;
  } else {
    double c0 = -std::numeric_limits<double>::infinity();
    for (const auto& r : rows)
      if (r.s <= half) c0 = std::max(c0, r.s - r.integrand);
    rep.c0 = c0;
    a_fn = [c0](double s) { return s - c0; };
  }
  if (h_given) {
    h_fn = h_given->fn;
  } else {
    double c1 = -std::numeric_limits<double>::infinity();
    for (const auto& r : rows)
      if (r.s <= half) c1 = std::max(c1, r.s * std::log1p(r.s) - r.value);
    rep.c1 = c1;
    h_fn = [c1](double s) { return s * std::log1p(s) - c1; };
  }

  rep.h1_pass = true;
  rep.h2_pass = true;
  double worst_h1 = 0.0, worst_h2 = 0.0;
  for (const auto& r : rows) {
    double g1 = r.integrand - a_fn(r.s);
    double g2 = r.value - h_fn(r.s);
    if (g1 < -slack) {
      rep.h1_pass = false;
      worst_h1 = std::min(worst_h1, g1);
    }
    if (g2 < -slack) {
      rep.h2_pass = false;
      worst_h2 = std::min(worst_h2, g2);
    }
  }

  std::ostringstream d;
  d << "H1 " << (rep.h1_pass ? "PASS" : "FAIL") << " with "
    << (a_given ? a_given->description : "fitted a(s) = s - c0") << "; H2 "
    << (rep.h2_pass ? "PASS" : "FAIL") << " with "
    << (h_given ? h_given->description : "fitted h(s) = s log(1+s) - c1");
  if (!rep.h1_pass) d << "; worst H1 gap " << worst_h1;
  if (!rep.h2_pass) d << "; worst H2 gap " << worst_h2;
  rep.detail = d.str();
  return rep;
}

// ---------------------------------------------------------------------------
// Consistency of analytic derivatives against central differences on a
// randomized sample. Returns the largest relative error seen.

inline double derivative_consistency(const Lagrangian& L, int samples = 100,
                                     std::uint64_t seed = 7) {
  const Manifold& m = L.manifold();
  int n = m.dim();
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> uq(-0.9, 0.9);
  std::uniform_real_distribution<double> uv(-3.0, 3.0);
  std::uniform_real_distribution<double> ut(0.0, 1.0);

  double worst = 0.0;
  auto rel = [](double err, double scale) { return err / (1.0 + scale); };
  for (int k = 0; k < samples; ++k) {
    ChartPoint x{0, Vec(n)};
    if (m.num_charts() == 1)
      for (int i = 0; i < n; ++i) x.q[i] = ut(rng);
    else {
      x.chart = k % m.num_charts();
      for (int i = 0; i < n; ++i) x.q[i] = uq(rng);
    }
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = uv(rng);
    double t = ut(rng);

    const Lagrangian& base = L;  // FD fallbacks from the interface
    struct Probe final : Lagrangian {
      const Lagrangian* inner;
      explicit Probe(const Lagrangian& l)
          : Lagrangian(l.manifold_ptr()), inner(&l) {}
      std::string name() const override { return "probe"; }
      bool autonomous() const override { return inner->autonomous(); }
      double eval(double t, const ChartPoint& x, const Vec& v) const override {
        return inner->eval(t, x, v);
      }
    } probe(base);

    worst = std::max(worst, rel((L.d_v(t, x, v) - probe.d_v(t, x, v)).norm(),
                                probe.d_v(t, x, v).norm()));
    worst = std::max(worst, rel((L.d_q(t, x, v) - probe.d_q(t, x, v)).norm(),
                                probe.d_q(t, x, v).norm()));
    worst = std::max(worst, rel((L.d_vv(t, x, v) - probe.d_vv(t, x, v)).norm(),
                                probe.d_vv(t, x, v).norm()));
    worst = std::max(worst, rel((L.d_qv(t, x, v) - probe.d_qv(t, x, v)).norm(),
                                probe.d_qv(t, x, v).norm()));
    worst = std::max(worst, rel((L.d_qq(t, x, v) - probe.d_qq(t, x, v)).norm(),
                                probe.d_qq(t, x, v).norm()));
  }
  return worst;
}

}  // namespace tonelli
