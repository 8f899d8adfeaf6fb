// Velocity/momentum cutoff modifications: outside a controlled ball the
// Lagrangian is bent into an exact quadratic in |v|_q (and the Hamiltonian
// into C|p|_q^2) without touching anything inside the ball. Both
// constructions are assembled from closed-form C^2 cutoffs so that every
// derivative is analytic, and both are re-verified by sampling after
// assembly.
#pragma once

#include <tonelli/checks.hpp>
#include <tonelli/core.hpp>
#include <tonelli/models.hpp>

#include <iomanip>
#include <sstream>

namespace tonelli {

// ---------------------------------------------------------------------------
// phi: identity on s <= 1, constant 1.5 on s >= 2, C^2, nondecreasing.
// phi' = 1 - S5(s-1) on [1,2]; the quintic smoothstep integrates to 1/2,
// which pins phi(2) = 1.5 exactly.

struct PhiClamp {
  static double eval(double s) {
    if (s <= 1.0) return s;
    if (s >= 2.0) return 1.5;
    return s - smoothstep5_int(s - 1.0);
  }
  static double d1(double s) {
    if (s <= 1.0) return 1.0;
    if (s >= 2.0) return 0.0;
    return 1.0 - smoothstep5(s - 1.0);
  }
  static double d2(double s) {
    if (s <= 1.0 || s >= 2.0) return 0.0;
    return -smoothstep5_d1(s - 1.0);
  }
};

// ---------------------------------------------------------------------------
// psi on s = |v|_q^2: zero up to R^2, affine mu*s - 2*mu*R^2 from 3R^2 on.
// psi'' is a symmetric bump of total mass mu supported on [R^2, 3R^2]; its
// centroid sits at 2R^2, which makes the affine tail hit the required value
// 2*mu*R^2 at s = 4R^2 exactly. Virtual so tests can corrupt it.

class PsiRamp {
 public:
  PsiRamp(double mu, double R) : mu_(mu), r2_(R * R) {}
  virtual ~PsiRamp() = default;

  virtual double eval(double s) const {
    if (s <= r2_) return 0.0;
    if (s >= 3.0 * r2_) return mu_ * s - 2.0 * mu_ * r2_;
    return 2.0 * mu_ * r2_ * smoothstep5_int((s - r2_) / (2.0 * r2_));
  }
  virtual double d1(double s) const {
    if (s <= r2_) return 0.0;
    if (s >= 3.0 * r2_) return mu_;
    return mu_ * smoothstep5((s - r2_) / (2.0 * r2_));
  }
  virtual double d2(double s) const {
    if (s <= r2_ || s >= 3.0 * r2_) return 0.0;
    return mu_ * smoothstep5_d1((s - r2_) / (2.0 * r2_)) / (2.0 * r2_);
  }

  double mu() const { return mu_; }
  double r_squared() const { return r2_; }

 private:
  double mu_, r2_;
};

using PsiPtr = std::shared_ptr<const PsiRamp>;

// ---------------------------------------------------------------------------
// L0 = lambda * phi(L / lambda) + psi(|v|_q^2), with every derivative chained
// analytically through the base model's derivatives and the metric.

class ModifiedLagrangian final : public Lagrangian {
 public:
  ModifiedLagrangian(LagrangianPtr base, double lambda, PsiPtr psi)
      : Lagrangian(base->manifold_ptr()),
        base_(std::move(base)),
        lambda_(lambda),
        psi_(std::move(psi)) {
    require(lambda_ > 0.0, "modification: lambda must be positive");
  }

  std::string name() const override { return "modified(" + base_->name() + ")"; }
  bool autonomous() const override { return base_->autonomous(); }
  bool analytic_derivatives() const override { return true; }

  double eval(double t, const ChartPoint& x, const Vec& v) const override {
    double L = base_->eval(t, x, v);
    // Exact identity branch: no roundtrip through lambda when phi is the
    // identity, so the modification is bit-exact below the cutoff.
    double L1 = (L <= lambda_) ? L : lambda_ * PhiClamp::eval(L / lambda_);
    double S = v.dot(manifold_->metric(x) * v);
    return L1 + psi_->eval(S);
  }

  Vec d_v(double t, const ChartPoint& x, const Vec& v) const override {
    auto [p1, p2] = phi_derivs(t, x, v);
    (void)p2;
    Mat g = manifold_->metric(x);
    double S = v.dot(g * v);
    return p1 * base_->d_v(t, x, v) + 2.0 * psi_->d1(S) * (g * v);
  }

  Vec d_q(double t, const ChartPoint& x, const Vec& v) const override {
    auto [p1, p2] = phi_derivs(t, x, v);
    (void)p2;
    Tensor3 dg = manifold_->dmetric(x);
    double S = v.dot(manifold_->metric(x) * v);
    Vec out = p1 * base_->d_q(t, x, v);
    double ps1 = psi_->d1(S);
    for (int a = 0; a < dim(); ++a) out[a] += ps1 * v.dot(dg[a] * v);
    return out;
  }

  double d_t(double t, const ChartPoint& x, const Vec& v) const override {
    if (autonomous()) return 0.0;
    auto [p1, p2] = phi_derivs(t, x, v);
    (void)p2;
    return p1 * base_->d_t(t, x, v);
  }

  Mat d_vv(double t, const ChartPoint& x, const Vec& v) const override {
    auto [p1, p2] = phi_derivs(t, x, v);
    Mat g = manifold_->metric(x);
    double S = v.dot(g * v);
    Vec dv = base_->d_v(t, x, v);
    Vec gv = g * v;
    Mat out = p1 * base_->d_vv(t, x, v);
    if (p2 != 0.0) out += (p2 / lambda_) * (dv * dv.transpose());
    out += 2.0 * psi_->d1(S) * g;
    double ps2 = psi_->d2(S);
    if (ps2 != 0.0) out += 4.0 * ps2 * (gv * gv.transpose());
    return out;
  }

  Mat d_qv(double t, const ChartPoint& x, const Vec& v) const override {
    auto [p1, p2] = phi_derivs(t, x, v);
    Mat g = manifold_->metric(x);
    Tensor3 dg = manifold_->dmetric(x);
    double S = v.dot(g * v);
    Vec gv = g * v;
    Vec dvL = base_->d_v(t, x, v);
    Vec dqL = base_->d_q(t, x, v);
    double ps1 = psi_->d1(S), ps2 = psi_->d2(S);
    Mat out = p1 * base_->d_qv(t, x, v);
    for (int a = 0; a < dim(); ++a) {
      double Sa = v.dot(dg[a] * v);
      for (int b = 0; b < dim(); ++b) {
        if (p2 != 0.0) out(a, b) += (p2 / lambda_) * dqL[a] * dvL[b];
        out(a, b) += 2.0 * ps2 * Sa * gv[b] + 2.0 * ps1 * (dg[a] * v)[b];
      }
    }
    return out;
  }

  Mat d_qq(double t, const ChartPoint& x, const Vec& v) const override {
    auto [p1, p2] = phi_derivs(t, x, v);
    Mat g = manifold_->metric(x);
    Tensor3 dg = manifold_->dmetric(x);
    Tensor4 d2g = manifold_->d2metric(x);
    double S = v.dot(g * v);
    Vec dqL = base_->d_q(t, x, v);
    double ps1 = psi_->d1(S), ps2 = psi_->d2(S);
    Mat out = p1 * base_->d_qq(t, x, v);
    if (p2 != 0.0) out += (p2 / lambda_) * (dqL * dqL.transpose());
    for (int a = 0; a < dim(); ++a) {
      double Sa = v.dot(dg[a] * v);
      for (int b = 0; b < dim(); ++b) {
        double Sb = v.dot(dg[b] * v);
        out(a, b) += ps2 * Sa * Sb + ps1 * v.dot(d2g[a][b] * v);
      }
    }
    return out;
  }

  Vec d_tv(double t, const ChartPoint& x, const Vec& v) const override {
    if (autonomous()) return Vec::Zero(dim());
    auto [p1, p2] = phi_derivs(t, x, v);
    Vec out = p1 * base_->d_tv(t, x, v);
    if (p2 != 0.0)
      out += (p2 / lambda_) * base_->d_t(t, x, v) * base_->d_v(t, x, v);
    return out;
  }

  const Lagrangian& base() const { return *base_; }
  double lambda() const { return lambda_; }
  const PsiRamp& psi() const { return *psi_; }

 private:
  std::pair<double, double> phi_derivs(double t, const ChartPoint& x,
                                       const Vec& v) const {
    double r = base_->eval(t, x, v) / lambda_;
    if (r <= 1.0) return {1.0, 0.0};
    return {PhiClamp::d1(r), PhiClamp::d2(r)};
  }

  LagrangianPtr base_;
  double lambda_;
  PsiPtr psi_;
};

// ---------------------------------------------------------------------------
// Verification report shared by both modifications.

struct ClauseResult {
  std::string clause;
  bool pass = false;
  double margin = 0.0;  // worst sampled margin; >= 0 means the clause holds
  std::string witness;  // where the worst margin occurred
};

struct ModificationReport {
  std::vector<ClauseResult> clauses;
  bool all_pass = false;
  std::map<std::string, double> constants;

  const ClauseResult& clause(const std::string& name) const {
    for (const auto& c : clauses)
      if (c.clause == name) return c;
    throw std::out_of_range("no clause named " + name);
  }

  std::string to_string() const {
    std::ostringstream os;
    os << std::setprecision(6);
    for (const auto& c : clauses)
      os << (c.pass ? "PASS " : "FAIL ") << c.clause
         << " margin=" << c.margin
         << (c.witness.empty() ? "" : " at " + c.witness) << "\n";
    return os.str();
  }
};

struct LagrangianModification {
  LagrangianPtr base;
  std::shared_ptr<const ModifiedLagrangian> model;
  double R = 0.0;
  double C1 = 0.0;      // superlinearity constant C(1) of the base
  double lambda = 0.0;
  double mu = 0.0;
  double safety = 1.5;  // factor actually used (1.5, escalated to 2.0)
  double ell0 = 0.0;    // smallest sampled metric-weighted d_vv eigenvalue
  double ell1 = 0.0;    // derivative-bound constant fitted during verification
};

namespace detail {

struct ModSample {
  double t;
  ChartPoint x;
  Vec v;        // fiber vector with |.|_q == mag
  double mag;
};

inline std::vector<ModSample> fiber_samples(const Manifold& m, bool velocity,
                                            bool autonomous, double vmax,
                                            int mag_count, int q_per_dim,
                                            int extra_dirs, int t_count,
                                            std::uint64_t seed) {
  std::vector<ModSample> out;
  auto points = sample_base_points(m, q_per_dim);
  auto dirs = sample_directions(m.dim(), extra_dirs, seed);
  SampleSpec mag_spec;
  mag_spec.v_max = vmax;
  mag_spec.mag_count = mag_count;
  auto mags = sample_magnitudes(mag_spec);
  SampleSpec t_spec;
  t_spec.t_count = t_count;
  auto ts = sample_times(t_spec, autonomous);
  for (double t : ts)
    for (const auto& x : points) {
      Mat g = m.metric(x);
      Mat norm_form = velocity ? g : Mat(g.inverse());
      for (const auto& d : dirs) {
        Vec u = d / std::sqrt(d.dot(norm_form * d));
        for (double mag : mags) out.push_back({t, x, mag * u, mag});
      }
    }
  return out;
}

inline std::string describe(const ModSample& s) {
  std::ostringstream os;
  os << std::setprecision(4) << "t=" << s.t << " chart=" << s.x.chart
     << " q=[" << s.x.q.transpose() << "] |v|=" << s.mag;
  return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Clause-by-clause verification of Definition-1 behaviour on samples.
// spec.v_max controls the sampled fiber radius (worth taking ~6R).

inline ModificationReport verify_modification(const LagrangianModification& mod,
                                              const SampleSpec& spec) {
  const Lagrangian& L0 = *mod.model;
  const Lagrangian& L = *mod.base;
  const Manifold& m = L.manifold();
  const double R = mod.R;

  auto samples = detail::fiber_samples(
      m, true, L.autonomous(), spec.v_max, spec.mag_count, spec.q_per_dim,
      spec.extra_dirs, spec.t_count, spec.seed);

  ModificationReport rep;
  ClauseResult equal{"equal-below-R", true, 0.0, ""};
  ClauseResult convex{"fiber-convexity", true,
                      std::numeric_limits<double>::infinity(), ""};
  ClauseResult bounds{"derivative-bounds", true,
                      std::numeric_limits<double>::infinity(), ""};
  ClauseResult linear{"linear-lower-bound", true,
                      std::numeric_limits<double>::infinity(), ""};

  // Fit the derivative-bound constant on the inner half, verify on all.
  double ell1_fit = 0.0;
  double ell0 = std::numeric_limits<double>::infinity();
  double zero_fiber_min = std::numeric_limits<double>::infinity();

  struct Ratios {
    double vv, qv, qq;
  };
  auto ratios_of = [&](const detail::ModSample& s) -> Ratios {
    double mag = s.mag;
    return {L0.d_vv(s.t, s.x, s.v).norm(),
            L0.d_qv(s.t, s.x, s.v).norm() / (1.0 + mag),
            L0.d_qq(s.t, s.x, s.v).norm() / (1.0 + mag * mag)};
  };

  for (const auto& s : samples) {
    Mat g = m.metric(s.x);
    if (s.mag <= R * (1.0 - 1e-12)) {
      double gap = std::abs(L0.eval(s.t, s.x, s.v) - L.eval(s.t, s.x, s.v));
      if (gap > equal.margin) {
        equal.margin = gap;
        equal.witness = detail::describe(s);
      }
    }

    Mat A = L0.d_vv(s.t, s.x, s.v);
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(
        0.5 * (A + A.transpose()), g);
    double lam = ges.eigenvalues().minCoeff();
    if (s.mag == 0.0) {
      // The model below R is the base itself, whose Hessian may be merely
      // positive semidefinite on the zero fiber; strictness is required off it.
      zero_fiber_min = std::min(zero_fiber_min, lam);
    } else {
      ell0 = std::min(ell0, lam);
      if (lam < convex.margin) {
        convex.margin = lam;
        convex.witness = detail::describe(s);
      }
    }

    // Fit region: two thirds of the sampled range, which contains every
    // transition band of the construction (phi flattens out by ~3.5R for
    // superlinear bases, psi by sqrt(3) R).
    if (s.mag <= (2.0 / 3.0) * spec.v_max) {
      Ratios r = ratios_of(s);
      ell1_fit = std::max({ell1_fit, r.vv, r.qv, r.qq});
    }

    double lin = L0.eval(s.t, s.x, s.v) - (s.mag - mod.C1);
    if (lin < linear.margin) {
      linear.margin = lin;
      linear.witness = detail::describe(s);
    }
  }

  double ell1 = 1.25 * ell1_fit;  // sampled maxima under-estimate suprema
  for (const auto& s : samples) {
    Ratios r = ratios_of(s);
    double gap = ell1 - std::max({r.vv, r.qv, r.qq});
    if (gap < bounds.margin) {
      bounds.margin = gap;
      bounds.witness = detail::describe(s);
    }
  }

  equal.pass = equal.margin == 0.0;
  convex.pass = convex.margin > 0.0 && zero_fiber_min >= -1e-10;
  bounds.pass = bounds.margin >= 0.0;
  linear.pass = linear.margin >= -1e-9 * (1.0 + std::abs(mod.C1));

  rep.clauses = {equal, convex, bounds, linear};
  rep.all_pass = equal.pass && convex.pass && bounds.pass && linear.pass;
  rep.constants["lambda"] = mod.lambda;
  rep.constants["mu"] = mod.mu;
  rep.constants["ell0"] = ell0;
  rep.constants["ell1"] = ell1;
  rep.constants["R"] = R;
  rep.constants["C1"] = mod.C1;
  return rep;
}

// ---------------------------------------------------------------------------
// Construction. C1 is the superlinearity constant C(1) of the base model
// (from its Tonelli report); the caller vouches that the base passes
// check_tonelli on the relevant range.

inline LagrangianModification build_lagrangian_modification(
    LagrangianPtr L, double R, double C1, std::uint64_t seed = 2026) {
  require(R > 0.0, "modification: R must be positive");
  const Manifold& m = L->manifold();

  auto attempt = [&](double factor) -> LagrangianModification {
    // lambda from the sampled max of L over |v|_q <= 2R.
    auto inner = detail::fiber_samples(m, true, L->autonomous(), 2.0 * R, 41,
                                       5, 6, 5, seed);
    double maxL = -std::numeric_limits<double>::infinity();
    for (const auto& s : inner)
      maxL = std::max(maxL, L->eval(s.t, s.x, s.v));
    double lambda = factor * std::max(maxL, 1e-3);

    // mu needs the most negative curvature that the phi clamp introduces,
    // measured against the metric so the bound is chart-invariant, plus the
    // two closed-form floors.
    auto wide = detail::fiber_samples(m, true, L->autonomous(), 6.0 * R, 61, 5,
                                      6, 5, seed + 1);
    double worst = 0.0;
    double minL1 = std::numeric_limits<double>::infinity();
    for (const auto& s : wide) {
      double Lval = L->eval(s.t, s.x, s.v);
      double r = Lval / lambda;
      double L1val = (Lval <= lambda) ? Lval : lambda * PhiClamp::eval(r);
      minL1 = std::min(minL1, L1val);
      if (r <= 1.0 || r >= 2.0) continue;  // phi curvature vanishes outside
      double p1 = PhiClamp::d1(r), p2 = PhiClamp::d2(r);
      Vec dv = L->d_v(s.t, s.x, s.v);
      Mat A = p1 * L->d_vv(s.t, s.x, s.v) + (p2 / lambda) * dv * dv.transpose();
      Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(
          -0.5 * (A + A.transpose()), m.metric(s.x));
      worst = std::max(worst, ges.eigenvalues().maxCoeff());
    }
    double mu = factor * std::max({worst, 1.0 / (4.0 * R),
                                   (2.0 * R - C1 - minL1) / (2.0 * R * R)});

    LagrangianModification mod;
    mod.base = L;
    mod.R = R;
    mod.C1 = C1;
    mod.lambda = lambda;
    mod.mu = mu;
    mod.safety = factor;
    mod.model = std::make_shared<ModifiedLagrangian>(
        L, lambda, std::make_shared<PsiRamp>(mu, R));
    return mod;
  };

  for (double factor : {1.5, 2.0}) {
    LagrangianModification mod = attempt(factor);
    SampleSpec verify_spec;
    verify_spec.v_max = 6.0 * R;
    verify_spec.mag_count = 49;
    verify_spec.q_per_dim = 5;
    verify_spec.extra_dirs = 6;
    verify_spec.t_count = 5;
    verify_spec.seed = seed + 2;
    ModificationReport rep = verify_modification(mod, verify_spec);
    if (rep.all_pass) {
      mod.ell0 = rep.constants.at("ell0");
      mod.ell1 = rep.constants.at("ell1");
      return mod;
    }
    if (factor == 2.0)
      throw std::runtime_error(
          "modification: verification failed even at safety factor 2.0:\n" +
          rep.to_string());
  }
  throw std::logic_error("unreachable");
}

// ---------------------------------------------------------------------------
// Hamiltonian side: H0 = phi(|p|_q) H + (1 - phi(|p|_q)) C |p|_q^2 with phi
// smooth, decreasing, 1 on [0,R], 0 on [R+1, infinity).

struct PhiFade {
  double R = 1.0;
  double eval(double s) const {
    if (s <= R) return 1.0;
    if (s >= R + 1.0) return 0.0;
    return 1.0 - smoothstep5(s - R);
  }
  double d1(double s) const {
    if (s <= R || s >= R + 1.0) return 0.0;
    return -smoothstep5_d1(s - R);
  }
};

class ModifiedHamiltonian final : public Hamiltonian {
 public:
  ModifiedHamiltonian(HamiltonianPtr base, double R, double C)
      : Hamiltonian(base->manifold_ptr()),
        base_(std::move(base)),
        phi_{R},
        C_(C) {
    require(R > 0.0, "modification: R must be positive");
    require(C >= 1.0, "modification: C must be at least 1");
  }

  std::string name() const override {
    return "modified(" + base_->name() + ")";
  }
  bool autonomous() const override { return base_->autonomous(); }

  double eval(double t, const ChartPoint& x, const Vec& p) const override {
    double s2 = p.dot(manifold_->metric(x).inverse() * p);
    double s = std::sqrt(s2);
    if (s <= phi_.R) return base_->eval(t, x, p);  // exact identity branch
    double f = phi_.eval(s);
    double Hb = (f != 0.0) ? base_->eval(t, x, p) : 0.0;
    return f * Hb + (1.0 - f) * C_ * s2;
  }

  Vec d_p(double t, const ChartPoint& x, const Vec& p) const override {
    Mat ginv = manifold_->metric(x).inverse();
    Vec u = ginv * p;
    double s2 = p.dot(u);
    double s = std::sqrt(s2);
    if (s <= phi_.R) return base_->d_p(t, x, p);
    double f = phi_.eval(s), f1 = phi_.d1(s);
    Vec out = 2.0 * C_ * (1.0 - f) * u;
    if (f != 0.0) out += f * base_->d_p(t, x, p);
    if (f1 != 0.0)
      out += f1 * (base_->eval(t, x, p) - C_ * s2) * (u / s);
    return out;
  }

  Vec d_q(double t, const ChartPoint& x, const Vec& p) const override {
    Mat ginv = manifold_->metric(x).inverse();
    Vec u = ginv * p;
    double s2 = p.dot(u);
    double s = std::sqrt(s2);
    if (s <= phi_.R) return base_->d_q(t, x, p);
    Tensor3 dg = manifold_->dmetric(x);
    double f = phi_.eval(s), f1 = phi_.d1(s);
    Vec out = Vec::Zero(dim());
    for (int a = 0; a < dim(); ++a) {
      double ds2 = -u.dot(dg[a] * u);  // d|p|^2_q / dq_a
      out[a] += C_ * (1.0 - f) * ds2;
      if (f1 != 0.0)
        out[a] += f1 * (ds2 / (2.0 * s)) * (base_->eval(t, x, p) - C_ * s2);
    }
    if (f != 0.0) out += f * base_->d_q(t, x, p);
    return out;
  }

  double d_t(double t, const ChartPoint& x, const Vec& p) const override {
    if (autonomous()) return 0.0;
    double s = std::sqrt(p.dot(manifold_->metric(x).inverse() * p));
    double f = phi_.eval(s);
    return (f != 0.0) ? f * base_->d_t(t, x, p) : 0.0;
  }

  const Hamiltonian& base() const { return *base_; }
  double cutoff_radius() const { return phi_.R; }
  double quadratic_constant() const { return C_; }
  const PhiFade& fade() const { return phi_; }

 private:
  HamiltonianPtr base_;
  PhiFade phi_;
  double C_;
};

struct HamiltonianModification {
  HamiltonianPtr base;
  std::shared_ptr<const ModifiedHamiltonian> model;
  double R = 0.0;
  double C = 1.0;
  double safety = 1.5;
  ScalarWitness a;  // integrand lower bound inherited from the base
  ScalarWitness h;  // value lower bound inherited from the base
};

inline ModificationReport verify_hamiltonian_modification(
    const HamiltonianModification& mod, const SampleSpec& spec) {
  const Hamiltonian& H0 = *mod.model;
  const Hamiltonian& H = *mod.base;
  const Manifold& m = H.manifold();
  const double R = mod.R;

  auto samples = detail::fiber_samples(
      m, false, H.autonomous(), spec.v_max, spec.mag_count, spec.q_per_dim,
      spec.extra_dirs, spec.t_count, spec.seed);

  ClauseResult equal{"equal-below-R", true, 0.0, ""};
  ClauseResult growth{"growth-H1p-H2p", true,
                      std::numeric_limits<double>::infinity(), ""};
  ClauseResult integrand{"integrand-lower-bound", true,
                         std::numeric_limits<double>::infinity(), ""};
  ClauseResult value{"value-lower-bound", true,
                     std::numeric_limits<double>::infinity(), ""};

  // (H1') constant h0 comes from the exact quadratic tail; h1 and the (H2')
  // constant h2 are fitted on the inner half and verified on everything.
  double h0 = 0.5 * mod.C;
  double h1_fit = 0.0, h2_fit = 0.0;

  struct Cache {
    double act, val, dqn, dpn;
  };
  std::vector<Cache> cache(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    cache[i] = {action_integrand(H0, s.t, s.x, s.v),
                H0.eval(s.t, s.x, s.v), H0.d_q(s.t, s.x, s.v).norm(),
                H0.d_p(s.t, s.x, s.v).norm()};
    if (s.mag <= 0.5 * spec.v_max) {
      h1_fit = std::max(h1_fit, h0 * s.mag * s.mag - cache[i].act);
      h2_fit = std::max({h2_fit, cache[i].dqn / (1.0 + s.mag * s.mag),
                         cache[i].dpn / (1.0 + s.mag)});
    }
  }
  double h1 = h1_fit, h2 = 1.25 * h2_fit;

  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.mag <= R * (1.0 - 1e-12)) {
      double gap = std::abs(cache[i].val - H.eval(s.t, s.x, s.v));
      if (gap > equal.margin) {
        equal.margin = gap;
        equal.witness = detail::describe(s);
      }
    }
    double g1 = cache[i].act - (h0 * s.mag * s.mag - h1);
    double g2a = h2 * (1.0 + s.mag * s.mag) - cache[i].dqn;
    double g2b = h2 * (1.0 + s.mag) - cache[i].dpn;
    double g = std::min({g1, g2a, g2b});
    if (g < growth.margin) {
      growth.margin = g;
      growth.witness = detail::describe(s);
    }
    double gi = cache[i].act - mod.a.fn(s.mag);
    if (gi < integrand.margin) {
      integrand.margin = gi;
      integrand.witness = detail::describe(s);
    }
    double gv = cache[i].val - mod.h.fn(s.mag);
    if (gv < value.margin) {
      value.margin = gv;
      value.witness = detail::describe(s);
    }
  }

  double slack = 1e-9 * (1.0 + spec.v_max * spec.v_max);
  equal.pass = equal.margin == 0.0;
  growth.pass = growth.margin >= -slack;
  integrand.pass = integrand.margin >= -slack;
  value.pass = value.margin >= -slack;

  ModificationReport rep;
  rep.clauses = {equal, growth, integrand, value};
  rep.all_pass = equal.pass && growth.pass && integrand.pass && value.pass;
  rep.constants["C"] = mod.C;
  rep.constants["R"] = R;
  rep.constants["h0"] = h0;
  rep.constants["h1"] = h1;
  rep.constants["h2"] = h2;
  return rep;
}

inline HamiltonianModification build_hamiltonian_modification(
    HamiltonianPtr H, double R, const ScalarWitness& a, const ScalarWitness& h,
    std::uint64_t seed = 2026) {
  require(R > 0.0, "modification: R must be positive");
  const Manifold& m = H->manifold();

  // The quadratic must dominate the integrand bound from R on.
  for (int i = 0; i <= 200; ++i) {
    double s = R + (5.0 * R) * i / 200.0;
    require(s * s >= a.fn(s),
            "modification: R too small, |p|^2 < a(|p|) at |p| = " +
                std::to_string(s));
  }

  auto attempt = [&](double factor) -> HamiltonianModification {
    // C from the sampled max of H / |p|^2 over the fade shell [R, R+1].
    auto points = sample_base_points(m, 5);
    auto dirs = sample_directions(m.dim(), 6, seed);
    SampleSpec t_spec;
    t_spec.t_count = 5;
    auto ts = sample_times(t_spec, H->autonomous());
    double worst = 1.0;
    for (double t : ts)
      for (const auto& x : points) {
        Mat ginv = m.metric(x).inverse();
        for (const auto& d : dirs) {
          Vec u = d / std::sqrt(d.dot(ginv * d));
          for (int i = 0; i <= 20; ++i) {
            double mag = R + i / 20.0;
            worst = std::max(worst,
                             H->eval(t, x, mag * u) / (mag * mag));
          }
        }
      }
    HamiltonianModification mod;
    mod.base = H;
    mod.R = R;
    mod.C = factor * worst;
    mod.safety = factor;
    mod.a = a;
    mod.h = h;
    mod.model = std::make_shared<ModifiedHamiltonian>(H, R, mod.C);
    return mod;
  };

  for (double factor : {1.5, 2.0}) {
    HamiltonianModification mod = attempt(factor);
    SampleSpec verify_spec;
    verify_spec.v_max = 2.0 * (R + 1.0);
    verify_spec.mag_count = 49;
    verify_spec.q_per_dim = 5;
    verify_spec.extra_dirs = 6;
    verify_spec.t_count = 5;
    verify_spec.seed = seed + 2;
    ModificationReport rep = verify_hamiltonian_modification(mod, verify_spec);
    if (rep.all_pass) return mod;
    if (factor == 2.0)
      throw std::runtime_error(
          "modification: Hamiltonian verification failed at safety 2.0:\n" +
          rep.to_string());
  }
  throw std::logic_error("unreachable");
}

}  // namespace tonelli
