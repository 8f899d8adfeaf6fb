#include <tonelli/solver.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace tonelli;
using Catch::Approx;

namespace {

ChartPoint torus_pt(double a, double b) {
  Vec q(2);
  q << a, b;
  return {0, q};
}

LagrangianPtr mechanical_torus(double eps) {
  return make_lagrangian({"mechanical", "cos", eps}, build_torus(2));
}

LagrangianPtr free_torus() { return make_lagrangian({"free"}, build_torus(2)); }

// Interior-node noise: endpoints stay put, so every boundary condition the
// seed satisfied is preserved.
DiscretePath jitter_interior(DiscretePath p, double scale,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 1; i < p.N; ++i) {
    for (int k = 0; k < p.dim(); ++k) p.nodes[i].q[k] += scale * u(rng);
    p.nodes[i] = p.manifold->rebase(p.nodes[i]);
  }
  return p;
}

double node_spread(const DiscretePath& p, const ChartPoint& target) {
  double worst = 0.0;
  for (const auto& x : p.nodes)
    worst = std::max(worst, p.manifold->distance(x, target));
  return worst;
}

LagrangianModification modified(LagrangianPtr L, double R) {
  double C1 = check_tonelli(*L).c_of_k.at(0);
  return build_lagrangian_modification(std::move(L), R, C1);
}

void check_record_invariants(const CriticalPointRecord& rec, int n) {
  CHECK(rec.converged);
  CHECK(rec.grad_dual_norm < 1e-10);
  CHECK(rec.conormal < 1e-6);
  CHECK(rec.index.m >= 0);
  CHECK(rec.index.m_star - rec.index.m >= 0);
  CHECK(rec.index.m_star - rec.index.m <= 2 * n);
  CHECK(rec.index.stable);
}

}  // namespace

TEST_CASE("minimize finds the potential maximum on the torus") {
  auto L = mechanical_torus(0.1);
  auto bc = BoundaryCondition::periodic(2);
  auto seed = jitter_interior(
      make_constant_path(L->manifold_ptr(), torus_pt(0.07, 0.96), 128), 0.01,
      11);

  auto rec = minimize(*L, bc, seed);
  rec.index = morse_index(*L, bc, rec.path);

  CHECK(rec.converged);
  CHECK(rec.action_value == Approx(-0.2).margin(1e-9));
  CHECK(rec.grad_dual_norm < 1e-10);
  CHECK(rec.conormal < 1e-10);
  CHECK(node_spread(rec.path, torus_pt(0.0, 0.0)) < 1e-7);
  CHECK(rec.index.m == 0);
  CHECK(rec.index.m_star == 0);
  CHECK(rec.index.stable);
}

TEST_CASE("minimize recovers the straight segment between fixed endpoints") {
  auto L = free_torus();
  ChartPoint a = torus_pt(0.0, 0.0), b = torus_pt(0.3, 0.4);
  auto bc = BoundaryCondition::fixed_endpoints(2, a, b);
  auto straight = make_linear_path(L->manifold_ptr(), a, b.q, 64);
  auto seed = jitter_interior(straight, 0.02, 23);

  auto rec = minimize(*L, bc, seed);
  rec.index = morse_index(*L, bc, rec.path);

  CHECK(rec.converged);
  CHECK(rec.action_value == Approx(0.125).margin(1e-9));
  CHECK(rec.grad_dual_norm < 1e-10);
  CHECK(rec.max_speed == Approx(0.5).margin(1e-6));
  CHECK(rec.index.m == 0);
  CHECK(rec.index.m_star == 0);
  for (int i = 0; i <= 64; ++i)
    CHECK(rec.path.manifold->distance(rec.path.nodes[i], straight.nodes[i]) <
          1e-7);
}

TEST_CASE("minimize honors neumann natural boundary conditions") {
  auto L = mechanical_torus(0.1);
  auto bc = BoundaryCondition::neumann(2);
  auto seed = jitter_interior(
      make_constant_path(L->manifold_ptr(), torus_pt(0.2, 0.85), 48), 0.01,
      37);

  auto rec = minimize(*L, bc, seed);

  CHECK(rec.converged);
  CHECK(rec.grad_dual_norm < 1e-10);
  CHECK(rec.conormal < 1e-10);

  // A minimizer with free endpoints is a constant loop at a critical point
  // of the potential.
  CHECK(node_spread(rec.path, rec.path.nodes[0]) < 1e-7);
  double best = 1e9;
  for (double target : {-0.2, 0.0, 0.2})
    best = std::min(best, std::abs(rec.action_value - target));
  CHECK(best < 1e-7);

  auto [v0, v1] = endpoint_velocities(rec.path);
  Vec dv0 = L->d_v(0.0, rec.path.nodes[0], v0);
  Vec dv1 = L->d_v(1.0, rec.path.nodes[rec.path.N], v1);
  CHECK(dv0.norm() < 1e-6);
  CHECK(dv1.norm() < 1e-6);
}

TEST_CASE("newton refinement recovers the straight line from noise") {
  auto L = free_torus();
  ChartPoint a = torus_pt(0.0, 0.0), b = torus_pt(0.3, 0.4);
  auto bc = BoundaryCondition::fixed_endpoints(2, a, b);
  auto straight = make_linear_path(L->manifold_ptr(), a, b.q, 32);
  auto seed = jitter_interior(straight, 1e-2, 5);

  auto rec = refine_newton(*L, bc, seed);

  CHECK(rec.converged);
  CHECK(rec.iterations <= 50);
  CHECK(rec.grad_dual_norm < 1e-10);
  for (int i = 0; i <= 32; ++i)
    CHECK(rec.path.manifold->distance(rec.path.nodes[i], straight.nodes[i]) <
          1e-9);
}

TEST_CASE("newton refinement converges on the sphere geodesic") {
  auto m = build_sphere2();
  auto L = make_lagrangian({"free"}, m);
  auto [a, b] = sphere_symmetric_endpoints(m, 1.0);
  auto bc = BoundaryCondition::fixed_endpoints(2, a, b);
  auto seed = sphere_arc_seed(m, 1.0, 64).members[0];

  auto rec = refine_newton(*L, bc, seed);

  CHECK(rec.converged);
  CHECK(rec.grad_dual_norm < 1e-10);
  CHECK(rec.action_value == Approx(0.5).epsilon(1e-3));
}

TEST_CASE("newton refinement is indifferent to index at the saddle") {
  auto L = mechanical_torus(0.1);
  auto bc = BoundaryCondition::periodic(2);
  auto seed =
      make_constant_path(L->manifold_ptr(), torus_pt(0.003, 0.498), 64);

  auto rec = refine_newton(*L, bc, seed);
  rec.index = morse_index(*L, bc, rec.path);

  CHECK(rec.converged);
  CHECK(rec.grad_dual_norm < 1e-10);
  CHECK(rec.action_value == Approx(0.0).margin(1e-9));
  CHECK(node_spread(rec.path, torus_pt(0.0, 0.5)) < 1e-6);
  CHECK(rec.index.m == 1);
  CHECK(rec.index.m_star == 1);
}

TEST_CASE("morse indices of constant loops match the fourier count") {
  auto L = mechanical_torus(0.1);
  auto bc = BoundaryCondition::periodic(2);

  struct Case {
    double q1, q2;
    int m;
  };
  for (const auto& c : {Case{0.0, 0.0, 0}, Case{0.0, 0.5, 1},
                        Case{0.5, 0.0, 1}, Case{0.5, 0.5, 2}}) {
    auto p = make_constant_path(L->manifold_ptr(), torus_pt(c.q1, c.q2), 128);
    IndexPair ip = morse_index(*L, bc, p);
    INFO("constant loop at (" << c.q1 << ", " << c.q2 << ")");
    CHECK(ip.m == c.m);
    CHECK(ip.m_star == c.m);
    CHECK(ip.stable);
    CHECK(ip.m_star - ip.m <= 4);
  }
}

TEST_CASE("minimax finds the saddle from a translation family") {
  auto L = mechanical_torus(0.1);
  auto mod = modified(L, 3.0);
  auto bc = BoundaryCondition::periodic(2);
  auto family = torus_translation_family(L->manifold_ptr(), 0, 0.5, 33, 64);

  CHECK(max_neighbor_distance(family) < 0.1);

  auto mr = minimax(*mod.model, bc, family);

  CHECK(mr.extracted);
  CHECK(mr.level == Approx(0.0).margin(1e-9));
  CHECK(mr.record.converged);
  CHECK(mr.record.grad_dual_norm < 1e-10);
  CHECK(node_spread(mr.record.path, torus_pt(0.0, 0.5)) < 1e-5);
  CHECK(mr.record.index.m == 1);
  CHECK(mr.record.index.m_star == 1);
  for (std::size_t i = 1; i < mr.max_log.size(); ++i)
    CHECK(mr.max_log[i] <= mr.max_log[i - 1] + 1e-12);
  CHECK(mr.family_snapshot.size() == family.members.size());
}

TEST_CASE("minimax pins the torus grid family at the potential minimum") {
  auto L = mechanical_torus(0.1);
  auto mod = modified(L, 3.0);
  auto bc = BoundaryCondition::periodic(2);
  auto family = torus_constant_grid_family(L->manifold_ptr(), 16, 64);

  auto mr = minimax(*mod.model, bc, family);

  CHECK(mr.extracted);
  CHECK(mr.level == Approx(0.2).margin(1e-9));
  CHECK(node_spread(mr.record.path, torus_pt(0.5, 0.5)) < 1e-6);
  CHECK(mr.record.index.m == 2);
  CHECK(mr.record.index.m_star == 2);
}

TEST_CASE("minimax sweeps the detour family to the second sphere geodesic") {
  auto m = build_sphere2();
  auto L = make_lagrangian({"free"}, m);
  auto mod = modified(L, 12.0);
  auto [a, b] = sphere_symmetric_endpoints(m, 1.0);
  auto bc = BoundaryCondition::fixed_endpoints(2, a, b);
  auto family = sphere_detour_family(m, 1.0, 17, 1.2, 128);

  auto mr = minimax(*mod.model, bc, family);

  double target = std::pow(2.0 * M_PI - 1.0, 2) / 2.0;
  CHECK(mr.extracted);
  CHECK(mr.level == Approx(target).epsilon(0.01));
  CHECK(mr.record.index.m == 1);
  CHECK(mr.record.index.m_star == 1);
  for (std::size_t i = 1; i < mr.max_log.size(); ++i)
    CHECK(mr.max_log[i] <= mr.max_log[i - 1] + 1e-12);
}

TEST_CASE("minimax refuses a raw tonelli model") {
  auto L = mechanical_torus(0.1);
  auto bc = BoundaryCondition::periodic(2);
  auto family = torus_translation_family(L->manifold_ptr(), 0, 0.5, 33, 16);
  CHECK_THROWS_WITH(minimax(*L, bc, family),
                    Catch::Matchers::ContainsSubstring("modified"));
}

TEST_CASE("pipeline solves the periodic torus scenario end to end") {
  auto L = mechanical_torus(0.1);
  auto m = L->manifold_ptr();
  auto bc = BoundaryCondition::periodic(2);
  const int N = 128;

  std::vector<SweepFamily> families;
  families.push_back(
      constant_seed_family(m, torus_pt(0.05, 0.95), N));
  families.push_back(torus_translation_family(m, 0, 0.5, 33, N));
  families.push_back(torus_translation_family(m, 1, 0.5, 33, N));
  families.push_back(torus_constant_grid_family(m, 16, N));

  auto out = solve_pipeline(L, bc, families);

  CHECK(out.A == Approx(1.2).margin(1e-9));
  CHECK(out.C1 == Approx(check_tonelli(*L).c_of_k.at(0)).margin(1e-12));
  CHECK(out.R_A >= out.A + out.C1);
  CHECK(out.R == Approx(1.5 * out.R_A).margin(1e-12));
  CHECK(out.family_max_speed == Approx(0.0).margin(1e-12));

  REQUIRE(out.records.size() == 4);
  CHECK(out.uncertified.empty());

  std::vector<double> expect_actions = {-0.2, 0.0, 0.0, 0.2};
  std::vector<int> expect_indices = {0, 1, 1, 2};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& rec = out.records[i];
    INFO("record " << i << " (" << rec.provenance << ")");
    CHECK(rec.action_original == Approx(expect_actions[i]).margin(1e-6));
    CHECK(rec.index.m == expect_indices[i]);
    CHECK(rec.index.m_star == expect_indices[i]);
    CHECK(rec.certificate.certified);
    CHECK(rec.certificate.max_speed < out.R);
    CHECK(rec.certificate.action_gap < 1e-9);
    check_record_invariants(rec, 2);
  }
  for (std::size_t i = 1; i < out.records.size(); ++i)
    CHECK(out.records[i - 1].action_original <=
          out.records[i].action_original + 1e-12);

  // The two saddles come from different translation axes.
  CHECK(family_path_distance(out.records[1].path, out.records[2].path) >
        1e-4);

  // Level ordering across degrees.
  double prev = -1e9;
  for (int deg : {0, 1, 2}) {
    for (const auto& fo : out.families)
      if (fo.degree == deg) {
        CHECK(fo.level >= prev - 1e-9);
        prev = std::max(prev, fo.level);
      }
  }
  for (const auto& fo : out.families) {
    CHECK(fo.extracted);
    for (std::size_t i = 1; i < fo.max_log.size(); ++i)
      CHECK(fo.max_log[i] <= fo.max_log[i - 1] + 1e-12);
  }
}

TEST_CASE("pipeline keeps neumann multiplicity with endpoint residuals") {
  auto L = mechanical_torus(0.1);
  auto m = L->manifold_ptr();
  auto bc = BoundaryCondition::neumann(2);
  const int N = 64;

  std::vector<SweepFamily> families;
  families.push_back(constant_seed_family(m, torus_pt(0.08, 0.91), N));
  families.push_back(torus_translation_family(m, 0, 0.5, 33, N));
  families.push_back(torus_translation_family(m, 1, 0.5, 33, N));
  families.push_back(torus_constant_grid_family(m, 16, N));

  auto out = solve_pipeline(L, bc, families);

  REQUIRE(out.records.size() >= 3);
  for (const auto& rec : out.records) {
    check_record_invariants(rec, 2);
    CHECK(rec.certificate.certified);
    auto [v0, v1] = endpoint_velocities(rec.path);
    CHECK(L->d_v(0.0, rec.path.nodes[0], v0).norm() < 1e-6);
    CHECK(L->d_v(1.0, rec.path.nodes[rec.path.N], v1).norm() < 1e-6);
  }
}

TEST_CASE("pipeline resolves the three sphere geodesics") {
  auto m = build_sphere2();
  auto L = make_lagrangian({"free"}, m);
  auto [a, b] = sphere_symmetric_endpoints(m, 1.0);
  auto bc = BoundaryCondition::fixed_endpoints(2, a, b);
  const int N = 128;

  std::vector<SweepFamily> families;
  families.push_back(sphere_arc_seed(m, 1.0, N));
  families.push_back(sphere_detour_family(m, 1.0, 17, 1.2, N));
  families.push_back(sphere_wrap_family(m, 1.0, 9, 0.8, N));

  auto out = solve_pipeline(L, bc, families);

  REQUIRE(out.records.size() == 3);
  CHECK(out.uncertified.empty());

  double g1 = 0.5;
  double g2 = std::pow(2.0 * M_PI - 1.0, 2) / 2.0;
  double g3 = std::pow(2.0 * M_PI + 1.0, 2) / 2.0;
  CHECK(out.records[0].action_original == Approx(g1).epsilon(0.01));
  CHECK(out.records[1].action_original == Approx(g2).epsilon(0.01));
  CHECK(out.records[2].action_original == Approx(g3).epsilon(0.01));
  CHECK(out.records[0].action_original < out.records[1].action_original);
  CHECK(out.records[1].action_original < out.records[2].action_original);

  for (std::size_t i = 0; i < 3; ++i) {
    const auto& rec = out.records[i];
    INFO("geodesic " << i + 1);
    CHECK(rec.index.m == int(i));
    CHECK(rec.index.m_star == int(i));
    check_record_invariants(rec, 2);
  }
}

TEST_CASE("pipeline collapses duplicate families to one record") {
  auto L = mechanical_torus(0.1);
  auto m = L->manifold_ptr();
  auto bc = BoundaryCondition::periodic(2);

  std::vector<SweepFamily> families;
  families.push_back(torus_translation_family(m, 0, 0.5, 33, 32));
  families.push_back(torus_translation_family(m, 0, 0.5, 33, 32));

  auto out = solve_pipeline(L, bc, families);
  CHECK(out.records.size() == 1);
  CHECK(out.records[0].action_original == Approx(0.0).margin(1e-8));
}

TEST_CASE("scaling the model leaves paths and indices unchanged") {
  auto L = mechanical_torus(0.1);
  auto scaled = std::make_shared<ScaledLagrangian>(L, 3.0);
  auto bc = BoundaryCondition::periodic(2);
  auto seed = jitter_interior(
      make_constant_path(L->manifold_ptr(), torus_pt(0.06, 0.05), 48), 0.005,
      71);

  auto rec1 = minimize(*L, bc, seed);
  auto rec2 = minimize(*scaled, bc, seed);
  rec1.index = morse_index(*L, bc, rec1.path);
  rec2.index = morse_index(*scaled, bc, rec2.path);

  CHECK(rec1.converged);
  CHECK(rec2.converged);
  CHECK(rec2.action_value == Approx(3.0 * rec1.action_value).margin(1e-8));
  CHECK(family_path_distance(rec1.path, rec2.path) < 1e-7);
  CHECK(rec1.index.m == rec2.index.m);
  CHECK(rec1.index.m_star == rec2.index.m_star);

  auto saddle = make_constant_path(L->manifold_ptr(), torus_pt(0.0, 0.5), 48);
  auto ip1 = morse_index(*L, bc, saddle);
  auto ip2 = morse_index(*scaled, bc, saddle);
  CHECK(ip1.m == ip2.m);
  CHECK(ip1.m_star == ip2.m_star);
}

TEST_CASE("mesh refinement doubles segments and preserves geometry") {
  auto m = build_sphere2();
  auto L = make_lagrangian({"free"}, m);
  auto p = sphere_arc_seed(m, 1.0, 32).members[0];
  auto fine = refine_mesh(p);

  CHECK(fine.N == 64);
  for (int i = 0; i <= 32; ++i)
    CHECK(m->distance(fine.nodes[2 * i], p.nodes[i]) < 1e-12);
  CHECK(action(*L, fine) == Approx(action(*L, p)).epsilon(1e-3));
}
