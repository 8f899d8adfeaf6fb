#include <tonelli/checks.hpp>
#include <tonelli/models.hpp>

#include <catch2/catch_amalgamated.hpp>

using namespace tonelli;
using Catch::Approx;

namespace {

// Wrapper exposing only eval, so the interface defaults supply
// finite-difference derivatives to compare analytic overrides against.
class HamiltonianProbe final : public Hamiltonian {
 public:
  explicit HamiltonianProbe(const Hamiltonian& h)
      : Hamiltonian(h.manifold_ptr()), inner_(&h) {}
  std::string name() const override { return "probe"; }
  bool autonomous() const override { return inner_->autonomous(); }
  double eval(double t, const ChartPoint& x, const Vec& p) const override {
    return inner_->eval(t, x, p);
  }

 private:
  const Hamiltonian* inner_;
};

ChartPoint torus_pt(std::initializer_list<double> qs) {
  ChartPoint x{0, Vec(int(qs.size()))};
  int i = 0;
  for (double v : qs) x.q[i++] = v;
  return x;
}

}  // namespace

TEST_CASE("free particle on the 2-torus satisfies all Tonelli conditions") {
  auto L = make_lagrangian({"free"}, build_torus(2));
  TonelliReport rep = check_tonelli(*L);
  CHECK(rep.ell0 == Approx(1.0));
  CHECK(rep.l1_pass);
  CHECK(rep.l2_pass);
  CHECK(rep.l3_pass);
  CHECK(rep.c_of_k[0] == Approx(0.5));  // max(|v| - |v|^2/2) at |v| = 1
  for (size_t k = 1; k < rep.c_of_k.size(); ++k)
    CHECK(rep.c_of_k[k] >= rep.c_of_k[k - 1] - 1e-12);
  CHECK(rep.verdict == "L1 verdict PASS, L2 verdict PASS");
}

TEST_CASE("quartic kinetic energy degenerates only at the zero section") {
  auto L = make_lagrangian({"quartic"}, build_torus(1));
  TonelliReport rep = check_tonelli(*L);
  CHECK(rep.ell0 == Approx(0.0).margin(1e-12));
  CHECK(rep.ell0_away > 0.0);
  CHECK_FALSE(rep.l1_pass);
  CHECK(rep.l1_fail_at_zero_only);
  CHECK(rep.l2_pass);
  CHECK(rep.verdict == "L1 verdict FAIL-at-zero, L2 verdict PASS");
}

TEST_CASE("cosine potential shifts the superlinearity constant") {
  // L = |v|^2/2 - cos(2 pi q): C(1) = 1/2 + 1 attained at |v| = 1, q = 0.
  auto L = make_lagrangian({"mechanical", "cos", 1.0}, build_torus(1));
  TonelliReport rep = check_tonelli(*L);
  CHECK(rep.c_of_k[0] == Approx(1.5));
  CHECK(rep.l1_pass);
}

TEST_CASE("linear-growth kinetic energy fails superlinearity") {
  auto L = std::make_shared<ExpressionLagrangian>(build_torus(1),
                                                  "sqrt(1 + v1^2) * 3");
  TonelliReport rep = check_tonelli(*L);
  CHECK_FALSE(rep.l2_pass);
}

TEST_CASE("check_tonelli rejects undersized sample ranges") {
  auto L = make_lagrangian({"free"}, build_torus(1));
  SampleSpec small;
  small.v_max = 2.0;
  CHECK_THROWS(check_tonelli(*L, small));
}

TEST_CASE("analytic derivatives agree with finite differences") {
  SECTION("mechanical model on the torus") {
    auto L = make_lagrangian({"mechanical", "cos2", 0.1}, build_torus(2));
    CHECK(derivative_consistency(*L) < 1e-5);
  }
  SECTION("quartic model on the torus") {
    auto L = make_lagrangian({"quartic"}, build_torus(1));
    CHECK(derivative_consistency(*L) < 1e-5);
  }
  SECTION("free model on the sphere") {
    auto L = make_lagrangian({"free"}, build_sphere2());
    CHECK(derivative_consistency(*L) < 1e-5);
  }
  SECTION("quartic model on the sphere") {
    auto L = make_lagrangian({"quartic"}, build_sphere2());
    CHECK(derivative_consistency(*L) < 1e-5);
  }
}

TEST_CASE("fiber hessians are symmetric") {
  auto L = make_lagrangian({"quartic"}, build_sphere2());
  auto rng = make_rng(3);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  for (int k = 0; k < 25; ++k) {
    ChartPoint x{k % 2, Vec(2)};
    x.q << u(rng), u(rng);
    Vec v(2);
    v << 3.0 * u(rng), 3.0 * u(rng);
    Mat A = L->d_vv(0.0, x, v);
    CHECK((A - A.transpose()).cwiseAbs().maxCoeff() <
          1e-8 * (1.0 + A.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("legendre transform of the free particle is the identity") {
  auto L = make_lagrangian({"free"}, build_torus(2));
  Vec p(2);
  p << 3.0, 4.0;
  LegendreResult r = legendre(*L, 0.0, torus_pt({0.2, 0.7}), p);
  CHECK(r.v[0] == Approx(3.0));
  CHECK(r.v[1] == Approx(4.0));
  CHECK(r.H == Approx(12.5));
  CHECK(r.residual < 1e-10 * (1.0 + p.norm()));
}

TEST_CASE("legendre transform of the quartic model takes a cube root") {
  auto L = make_lagrangian({"quartic"}, build_torus(1));
  Vec p(1);
  p << 8.0;
  LegendreResult r = legendre(*L, 0.0, torus_pt({0.5}), p);
  CHECK(r.v[0] == Approx(2.0).epsilon(1e-9));
  CHECK(r.H == Approx(12.0).epsilon(1e-9));
}

TEST_CASE("mechanical dual has the closed form kinetic plus potential") {
  auto m = build_torus(2);
  ModelSpec spec{"mechanical", "cos2", 0.1};
  auto L = make_lagrangian(spec, m);
  auto H = make_hamiltonian(spec, m);
  auto rng = make_rng(4);
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  for (int k = 0; k < 20; ++k) {
    ChartPoint x = torus_pt({0.5 * (u(rng) + 2.5) / 2.5, 0.3});
    Vec p(2);
    p << u(rng), u(rng);
    double viaLegendre = legendre(*L, 0.0, x, p).H;
    CHECK(viaLegendre == Approx(H->eval(0.0, x, p)).margin(1e-10));
  }
}

TEST_CASE("legendre round-trip reproduces the momentum") {
  auto L = make_lagrangian({"quartic"}, build_sphere2());
  auto rng = make_rng(5);
  std::uniform_real_distribution<double> u(-1.4, 1.4);
  for (int k = 0; k < 20; ++k) {
    ChartPoint x{k % 2, Vec(2)};
    x.q << u(rng), u(rng);
    Vec p(2);
    p << 3.0 * u(rng), 3.0 * u(rng);
    if (p.norm() < 1e-3) continue;
    LegendreResult r = legendre(*L, 0.0, x, p);
    CHECK((L->d_v(0.0, x, r.v) - p).norm() < 1e-8 * (1.0 + p.norm()));
  }
}

TEST_CASE("fenchel inequality holds with equality exactly at dual pairs") {
  auto m = build_torus(1);
  auto L = make_lagrangian({"mechanical", "cos", 0.4}, m);
  FenchelDualHamiltonian H(L);
  auto rng = make_rng(6);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 30; ++k) {
    ChartPoint x = torus_pt({std::abs(u(rng)) / 3.0});
    Vec p(1), v(1);
    p << u(rng);
    v << u(rng);
    double gap = L->eval(0.0, x, v) + H.eval(0.0, x, p) - p.dot(v);
    CHECK(gap >= -1e-8);
    Vec vstar = legendre(*L, 0.0, x, p).v;
    double gap0 = L->eval(0.0, x, vstar) + H.eval(0.0, x, p) - p.dot(vstar);
    CHECK(std::abs(gap0) < 1e-8);
  }
}

TEST_CASE("legendre reports non-convergence for non-superlinear fibers") {
  auto L = std::make_shared<ExpressionLagrangian>(build_torus(1), "abs(v1)");
  Vec p(1);
  p << 0.5;
  CHECK_THROWS_AS(legendre(*L, 0.0, torus_pt({0.1}), p), std::runtime_error);
}

TEST_CASE("fenchel dual derivatives obey the envelope identities") {
  auto m = build_torus(2);
  auto L = make_lagrangian({"mechanical", "cos2", 0.1}, m);
  FenchelDualHamiltonian H(L);
  HamiltonianProbe probe(H);
  auto rng = make_rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int k = 0; k < 15; ++k) {
    ChartPoint x = torus_pt({0.25 * std::abs(u(rng)), 0.4});
    Vec p(2);
    p << u(rng), u(rng);
    CHECK((H.d_p(0.0, x, p) - probe.d_p(0.0, x, p)).norm() < 1e-5);
    CHECK((H.d_q(0.0, x, p) - probe.d_q(0.0, x, p)).norm() < 1e-5);
  }
}

TEST_CASE("mechanical hamiltonian derivatives match finite differences") {
  auto H = make_hamiltonian({"free"}, build_sphere2());
  HamiltonianProbe probe(*H);
  auto rng = make_rng(8);
  std::uniform_real_distribution<double> u(-1.3, 1.3);
  for (int k = 0; k < 20; ++k) {
    ChartPoint x{k % 2, Vec(2)};
    x.q << u(rng), u(rng);
    Vec p(2);
    p << 2.0 * u(rng), 2.0 * u(rng);
    CHECK((H->d_p(0.0, x, p) - probe.d_p(0.0, x, p)).norm() < 1e-5);
    CHECK((H->d_q(0.0, x, p) - probe.d_q(0.0, x, p)).norm() < 1e-5);
  }
}

TEST_CASE("hamiltonian vector field pairs with the symplectic form") {
  auto H = make_hamiltonian({"mechanical", "cos2", 0.1}, build_torus(2));
  auto rng = make_rng(9);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int k = 0; k < 20; ++k) {
    ChartPoint x = torus_pt({0.3 * std::abs(u(rng)), 0.6});
    Vec p(2);
    p << u(rng), u(rng);
    auto [xdot, pdot] = H->vector_field(0.0, x, p);
    Vec xiq(2), xip(2);
    xiq << u(rng), u(rng);
    xip << u(rng), u(rng);
    // omega((a1,b1),(a2,b2)) = b1.a2 - b2.a1 for tangent vectors (a, b).
    double omega = pdot.dot(xiq) - xip.dot(xdot);
    double h = 1e-6;
    ChartPoint xp = x, xm = x;
    xp.q += h * xiq;
    xm.q -= h * xiq;
    double dH = (H->eval(0.0, xp, p + h * xip) -
                 H->eval(0.0, xm, p - h * xip)) /
                (2.0 * h);
    CHECK(omega == Approx(-dH).margin(1e-8 * (1.0 + std::abs(dH))));
  }
}

TEST_CASE("action integrand matches the radial identity") {
  // For radially symmetric H = f(|p|) the integrand is f'(s) s - f(s).
  auto L = make_lagrangian({"quartic"}, build_torus(1));
  FenchelDualHamiltonian H(L);
  ChartPoint x = torus_pt({0.2});
  for (int i = 0; i < 20; ++i) {
    double s = 0.5 + 7.5 * i / 19.0;
    Vec p(1);
    p << s;
    double integrand = action_integrand(H, 0.0, x, p);
    double h = 1e-5 * (1.0 + s);
    Vec pp(1), pm(1);
    pp << s + h;
    pm << s - h;
    double slope = (H.eval(0.0, x, pp) - H.eval(0.0, x, pm)) / (2.0 * h);
    double oracle = slope * s - H.eval(0.0, x, p);
    CHECK(integrand == Approx(oracle).epsilon(1e-5));
  }
}

TEST_CASE("completeness criterion is trivial for autonomous systems") {
  auto H = make_hamiltonian({"mechanical", "cos2", 0.1}, build_torus(2));
  CompletenessReport rep = check_completeness_criterion(*H);
  CHECK(rep.pass);
  CHECK(rep.autonomous);
  CHECK(rep.c == 0.0);
}

TEST_CASE("oscillating potential admits a finite completeness constant") {
  auto H = std::make_shared<ExpressionHamiltonian>(
      build_torus(1), "p1^2/2 + sin(2*pi*t)*cos(2*pi*q1)");
  REQUIRE_FALSE(H->autonomous());
  CompletenessReport rep = check_completeness_criterion(*H);
  CHECK(rep.pass);
  CHECK(rep.c > 0.0);
  CHECK(std::isfinite(rep.c));
}

TEST_CASE("quadratically self-forced growth fails the completeness bound") {
  auto H = std::make_shared<ExpressionHamiltonian>(
      build_torus(1), "sin(2*pi*t)*(p1^2/2)^2 + p1^2/2");
  CompletenessReport rep = check_completeness_criterion(*H);
  CHECK_FALSE(rep.pass);
}

TEST_CASE("growth bounds hold for the free hamiltonian") {
  auto H = make_hamiltonian({"free"}, build_torus(1));
  GrowthReport rep = check_h1_h2(*H);
  CHECK(rep.h1_pass);
  CHECK(rep.h2_pass);

  ScalarWitness a{[](double s) { return s - 1.0; }, "a(s) = s - 1"};
  GrowthReport rep2 = check_h1_h2(*H, {}, &a, nullptr);
  CHECK(rep2.h1_pass);
}

TEST_CASE("linear hamiltonian growth fails the superlinear bound") {
  auto H = std::make_shared<ExpressionHamiltonian>(build_torus(1), "abs(p1)");
  GrowthReport rep = check_h1_h2(*H);
  CHECK_FALSE(rep.h2_pass);
}

TEST_CASE("explicit quadratic witness certifies the mechanical model") {
  auto H = make_hamiltonian({"mechanical", "cos", 1.0}, build_torus(1));
  ScalarWitness hw{[](double s) { return 0.5 * s * s - 1.0; },
                   "h(s) = s^2/2 - 1"};
  GrowthReport rep = check_h1_h2(*H, {}, nullptr, &hw);
  CHECK(rep.h2_pass);
}

TEST_CASE("expression models parse and evaluate") {
  ExpressionLagrangian L(build_torus(2), "q1^2 + 2*v1*q2 - sin(2*pi*t)");
  CHECK_FALSE(L.autonomous());
  ChartPoint x = torus_pt({0.5, 0.25});
  Vec v(2);
  v << 3.0, -1.0;
  CHECK(L.eval(0.25, x, v) == Approx(0.25 + 1.5 - 1.0));

  ExpressionLagrangian L2(build_torus(1), "v1^2/2");
  CHECK(L2.autonomous());
  CHECK(L2.eval(0.9, torus_pt({0.1}), Vec::Constant(1, 3.0)) == Approx(4.5));

  CHECK_THROWS(ExpressionLagrangian(build_torus(2), "q3 + v1"));
  CHECK_THROWS(ExpressionLagrangian(build_torus(1), "v1 + bogus(q1)"));
  CHECK_THROWS(ExpressionLagrangian(build_torus(1), "v1 ) + 1"));
}

TEST_CASE("expression derivative fallbacks are usable by legendre") {
  ExpressionLagrangian L(build_torus(1), "cosh(v1) - 1");
  Vec p(1);
  p << 1.2;
  LegendreResult r = legendre(L, 0.0, torus_pt({0.0}), p);
  CHECK(std::sinh(r.v[0]) == Approx(1.2).margin(1e-8));
}

TEST_CASE("scaling a lagrangian scales its invariants") {
  auto base = make_lagrangian({"quartic"}, build_torus(1));
  ScaledLagrangian L(base, 2.0);
  Vec p(1);
  p << 16.0;
  LegendreResult r = legendre(L, 0.0, torus_pt({0.0}), p);
  CHECK(r.v[0] == Approx(2.0).epsilon(1e-9));
  CHECK(r.H == Approx(24.0).epsilon(1e-9));

  auto free_base = make_lagrangian({"free"}, build_torus(1));
  ScaledLagrangian Lf(free_base, 3.0);
  TonelliReport rep = check_tonelli(Lf);
  CHECK(rep.ell0 == Approx(3.0));
}

TEST_CASE("registry resolves builtin names and rejects unknown ones") {
  CHECK(make_lagrangian({"free"}, build_torus(2))->name() == "free");
  CHECK(make_lagrangian({"pendulum"}, build_torus(1))->name() ==
        "mechanical(cos)");
  CHECK_THROWS(make_lagrangian({"nope"}, build_torus(1)));
  CHECK_THROWS(make_potential("nope", 2, 1.0));
  CHECK_THROWS(make_lagrangian({"mechanical", "cos2", 0.1}, build_torus(3)));
}
