#include <tonelli/dynamics.hpp>

#include <catch2/catch_amalgamated.hpp>

using namespace tonelli;
using Catch::Approx;

namespace {

double energy_drift(const Trajectory& traj) {
  double e0 = traj.samples.front().invariant;
  double worst = 0.0;
  for (const auto& s : traj.samples)
    worst = std::max(worst, std::abs(s.invariant - e0));
  return worst;
}

ChartPoint torus_pt(double a, double b) {
  Vec q(2);
  q << a, b;
  return {0, q};
}

}  // namespace

TEST_CASE("free particle follows straight lines") {
  auto m = build_torus(2);
  auto L = make_lagrangian({"free"}, m);
  Vec v0(2);
  v0 << 0.3, -0.4;
  Trajectory traj = integrate_lagrangian(*L, {0.0, torus_pt(0.2, 0.7), v0}, 1.0);
  ChartPoint expected = m->rebase(torus_pt(0.5, 0.3));
  CHECK(m->distance(traj.back().x, expected) < 1e-10);
  CHECK((traj.back().v - v0).norm() < 1e-10);
  CHECK(energy_drift(traj) < 1e-12);
}

TEST_CASE("autonomous energy is conserved along the flow") {
  auto m = build_torus(2);
  auto L = make_lagrangian({"mechanical", "cos2", 0.1}, m);
  Vec v0(2);
  v0 << 1.5, 0.5;
  Trajectory traj = integrate_lagrangian(*L, {0.0, torus_pt(0.1, 0.2), v0}, 1.0);
  CHECK(energy_drift(traj) < 1e-8);

  auto H = make_hamiltonian({"mechanical", "cos2", 0.1}, m);
  Trajectory htraj =
      integrate_hamiltonian(*H, {0.0, torus_pt(0.1, 0.2), v0}, 1.0);
  CHECK(energy_drift(htraj) < 1e-8);
}

TEST_CASE("pendulum trajectory matches a tighter-tolerance reference") {
  auto m = build_torus(1);
  auto L = make_lagrangian({"pendulum"}, m);
  FlowState s0{0.0, {0, Vec::Constant(1, 0.1)}, Vec::Constant(1, 1.3)};
  Trajectory coarse = integrate_lagrangian(*L, s0, 1.0, 1e-9);
  Trajectory fine = integrate_lagrangian(*L, s0, 1.0, 1e-12);
  CHECK(m->distance(coarse.back().x, fine.back().x) < 1e-7);
  CHECK((coarse.back().v - fine.back().v).norm() < 1e-7);
}

TEST_CASE("free hamiltonian flow keeps momentum constant") {
  auto m = build_torus(2);
  auto H = make_hamiltonian({"free"}, m);
  Vec p0(2);
  p0 << 0.8, -0.2;
  Trajectory traj =
      integrate_hamiltonian(*H, {0.0, torus_pt(0.0, 0.9), p0}, 1.0);
  CHECK((traj.back().v - p0).norm() == 0.0);
  CHECK(m->distance(traj.back().x, m->rebase(torus_pt(0.8, 0.7))) < 1e-10);
}

TEST_CASE("lagrangian and dual hamiltonian flows coincide") {
  auto m = build_torus(2);
  auto L = make_lagrangian({"mechanical", "cos2", 0.1}, m);
  Vec v0(2);
  v0 << 0.9, 0.4;
  ChartPoint x0 = torus_pt(0.3, 0.6);

  Trajectory el = integrate_lagrangian(*L, {0.0, x0, v0}, 1.0);

  auto H = make_hamiltonian({"mechanical", "cos2", 0.1}, m);
  Vec p0 = L->d_v(0.0, x0, v0);
  Trajectory ham = integrate_hamiltonian(*H, {0.0, x0, p0}, 1.0);

  CHECK(m->distance(el.back().x, ham.back().x) < 1e-6);
  Vec v_end = H->d_p(1.0, ham.back().x, ham.back().v);
  CHECK((el.back().v - v_end).norm() < 1e-6);

  auto m1 = build_torus(1);
  auto Lp = make_lagrangian({"pendulum"}, m1);
  auto Hp = make_hamiltonian({"pendulum"}, m1);
  FlowState s0{0.0, {0, Vec::Constant(1, 0.2)}, Vec::Constant(1, 1.1)};
  Trajectory elp = integrate_lagrangian(*Lp, s0, 1.0);
  Vec pp0 = Lp->d_v(0.0, s0.x, s0.v);
  Trajectory hamp = integrate_hamiltonian(*Hp, {0.0, s0.x, pp0}, 1.0);
  CHECK(m1->distance(elp.back().x, hamp.back().x) < 1e-6);
}

TEST_CASE("integrating forward then backward returns the start") {
  auto m = build_torus(2);
  auto L = make_lagrangian({"mechanical", "cos2", 0.1}, m);
  Vec v0(2);
  v0 << 1.1, -0.7;
  ChartPoint x0 = torus_pt(0.25, 0.85);
  double tol = 1e-9;
  Trajectory fwd = integrate_lagrangian(*L, {0.0, x0, v0}, 1.0, tol);
  Trajectory bwd = integrate_lagrangian(*L, fwd.final_state(), 0.0, tol);
  CHECK(m->distance(bwd.back().x, m->rebase(x0)) < 10.0 * tol);
  CHECK((bwd.back().v - v0).norm() < 10.0 * tol);
}

TEST_CASE("sphere geodesic flow agrees with the exponential map") {
  auto m = build_sphere2();
  auto* sph = dynamic_cast<const RoundSphere2*>(m.get());
  auto L = make_lagrangian({"free"}, m);
  Vec q0(2);
  q0 << 0.3, 0.1;
  ChartPoint x0{0, q0};
  Mat g = m->metric(x0);
  Vec dir(2);
  dir << 1.0, 0.4;
  Vec v0 = dir / std::sqrt(dir.dot(g * dir));

  Trajectory traj = integrate_lagrangian(*L, {0.0, x0, v0}, M_PI, 1e-10);
  Eigen::Vector3d antipode = -sph->embed(x0);
  CHECK(m->distance(traj.back().x, sph->project(antipode)) < 1e-7);
  CHECK(energy_drift(traj) < 1e-8);

  bool chart_switch = false;
  for (const auto& s : traj.samples) chart_switch |= (s.x.chart != 0);
  CHECK(chart_switch);

  Trajectory loop = integrate_lagrangian(*L, {0.0, x0, v0}, 2.0 * M_PI, 1e-10);
  CHECK(m->distance(loop.back().x, x0) < 1e-6);
  CHECK(m->distance(traj.back().x, m->exp(x0, M_PI * v0)) < 1e-7);
}

TEST_CASE("step underflow reports a completeness violation") {
  auto rhs = [](double, const Vec& y) { return Vec(y.array().square()); };
  int acc = 0, rej = 0;
  Vec y0 = Vec::Constant(1, 1.0);
  CHECK_THROWS_WITH(
      detail::dopri5(rhs, 0.0, y0, 2.0, 1e-9, 1e100, acc, rej,
                     [](double, const Vec&) { return true; }),
      Catch::Matchers::ContainsSubstring("completeness"));
}

TEST_CASE("reachable-set estimate for the free particle") {
  auto m = build_torus(2);
  auto L = make_lagrangian({"free"}, m);
  FlowGridSpec spec;
  spec.per_dim = 5;
  ReachableSetEstimate est = estimate_R_A(*L, 2.0, 0.5, spec);
  CHECK(est.R_A == Approx(3.0).margin(1e-9));
  CHECK(est.max_observed == Approx(2.5).margin(1e-9));
  CHECK(est.R_A >= est.A + est.C1);
}

TEST_CASE("reachable-set estimate respects the force bound") {
  auto m = build_torus(2);
  double eps = 0.1;
  auto L = make_lagrangian({"mechanical", "cos2", eps}, m);
  FlowGridSpec spec;
  spec.per_dim = 5;
  double grad_u_max = 2.0 * M_PI * eps * std::sqrt(2.0);
  ReachableSetEstimate e1 = estimate_R_A(*L, 1.0, 0.7, spec);
  ReachableSetEstimate e2 = estimate_R_A(*L, 2.0, 0.7, spec);
  CHECK(e2.R_A <= spec.margin * (2.0 + 0.7 + 2.0 * grad_u_max));
  CHECK(e1.R_A <= e2.R_A);
  CHECK(e1.R_A >= 1.7);
}

TEST_CASE("zero-speed seeds keep the estimate meaningful") {
  auto m = build_torus(2);
  auto L = make_lagrangian({"mechanical", "cos2", 0.1}, m);
  FlowGridSpec spec;
  spec.per_dim = 3;
  ReachableSetEstimate est = estimate_R_A(*L, 0.0, 0.2, spec);
  CHECK(est.R_A >= 0.2);
  CHECK(est.seed_count > 0);
}

TEST_CASE("hamiltonian reachable-set estimate") {
  auto m = build_torus(2);
  auto H = make_hamiltonian({"free"}, m);
  ScalarWitness a{[](double s) { return s - 0.5; }, "a(s) = s - 1/2"};
  FlowGridSpec spec;
  spec.per_dim = 4;
  ReachableSetEstimate est = estimate_R_A(*H, 2.0, a, spec);
  CHECK(est.seed_radius == Approx(2.5).margin(1e-9));
  CHECK(est.R_A == Approx(3.0).margin(1e-8));
}

TEST_CASE("certification of solution records") {
  auto m = build_torus(2);
  auto L = make_lagrangian({"mechanical", "cos2", 0.1}, m);
  double C1 = check_tonelli(*L).c_of_k[0];
  LagrangianModification mod = build_lagrangian_modification(L, 3.0, C1);

  DiscretePath rest = make_constant_path(m, torus_pt(0.5, 0.5), 16);
  Certificate ok = certify_solution(*L, mod, rest, 2.0);
  CHECK(ok.certified);
  CHECK(ok.max_speed == 0.0);
  CHECK(ok.action_gap < 1e-12);

  DiscretePath loop = make_path_from_function(
      m,
      [](double t) {
        Vec q(2);
        q << t, 0.0;
        return ChartPoint{0, q};
      },
      16);
  Certificate slow_cap = certify_solution(*L, mod, loop, 0.5);
  CHECK_FALSE(slow_cap.certified);
  CHECK(slow_cap.witness.find("segment") != std::string::npos);

  Certificate no_room = certify_solution(*L, mod, rest, mod.R + 1.0);
  CHECK_FALSE(no_room.certified);
  CHECK_FALSE(no_room.witness.empty());
}

TEST_CASE("trajectories serialize to structured records") {
  auto m = build_torus(1);
  auto L = make_lagrangian({"pendulum"}, m);
  Trajectory traj = integrate_lagrangian(
      *L, {0.0, {0, Vec::Constant(1, 0.0)}, Vec::Constant(1, 0.5)}, 1.0);
  nlohmann::json j = trajectory_to_json(traj);
  REQUIRE(j.at("samples").size() == traj.samples.size());
  CHECK(j.at("samples").front().at("t").get<double>() == 0.0);
  CHECK(std::isfinite(j.at("samples").back().at("invariant").get<double>()));
  CHECK(j.at("accepted_steps").get<int>() > 0);
}
