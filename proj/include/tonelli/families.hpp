// Builtin sweep families: parameterized path collections standing in for
// singular cycles of the path space. Torus families sweep constant loops;
// sphere families sweep circle arcs obtained by tilting cutting planes, so
// each family contains its target great-circle member exactly.
#pragma once

#include <tonelli/pathspace.hpp>

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace tonelli {

struct SweepFamily {
  std::string name;
  int degree = 0;
  std::vector<DiscretePath> members;
  std::vector<Vec> params;
  std::array<int, 2> grid_shape{0, 1};  // members laid out row-major
};

inline double family_path_distance(const DiscretePath& a,
                                   const DiscretePath& b) {
  require(a.N == b.N, "family members have mismatched meshes");
  double worst = 0.0;
  for (int i = 0; i <= a.N; ++i)
    worst = std::max(worst, a.manifold->distance(a.nodes[i], b.nodes[i]));
  return worst;
}

// Largest C0 gap between grid-adjacent members; the continuity diagnostic
// for the family-map invariant.
inline double max_neighbor_distance(const SweepFamily& f) {
  int rows = f.grid_shape[0], cols = f.grid_shape[1];
  double worst = 0.0;
  auto at = [&](int r, int c) -> const DiscretePath& {
    return f.members[r * cols + c];
  };
  if (rows * cols != int(f.members.size()) || rows * cols == 0) {
    for (std::size_t i = 0; i + 1 < f.members.size(); ++i)
      worst = std::max(worst,
                       family_path_distance(f.members[i], f.members[i + 1]));
    return worst;
  }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols)
        worst = std::max(worst, family_path_distance(at(r, c), at(r, c + 1)));
      if (r + 1 < rows)
        worst = std::max(worst, family_path_distance(at(r, c), at(r + 1, c)));
    }
  return worst;
}

// ---------------------------------------------------------------------------
// Torus families

inline SweepFamily constant_seed_family(ManifoldPtr m, const ChartPoint& q,
                                        int N) {
  SweepFamily f;
  f.name = "constant-seed";
  f.degree = 0;
  f.members.push_back(make_constant_path(std::move(m), q, N));
  f.params.push_back(Vec::Zero(1));
  f.grid_shape = {1, 1};
  return f;
}

// Degree-1 cycle of constant loops translated along one coordinate. An odd
// member count keeps the sweep off the symmetric midpoint, which is a pinned
// maximum of the mechanical landscape and would freeze the deformation.
inline SweepFamily torus_translation_family(ManifoldPtr m, int axis,
                                            double other, int count, int N) {
  int n = m->dim();
  require(axis >= 0 && axis < n, "translation axis out of range");
  require(count % 2 == 1, "translation family expects an odd member count");
  SweepFamily f;
  f.name = "torus-translation-q" + std::to_string(axis + 1);
  f.degree = 1;
  for (int j = 0; j < count; ++j) {
    double s = double(j) / count;
    Vec q = Vec::Constant(n, other);
    q[axis] = s;
    f.members.push_back(make_constant_path(m, {0, q}, N));
    f.params.push_back(Vec::Constant(1, s));
  }
  f.grid_shape = {count, 1};
  return f;
}

// Degree-2 torus of constant loops on an even grid: the grid contains the
// potential maximum exactly, which is the member the sweep cannot avoid.
inline SweepFamily torus_constant_grid_family(ManifoldPtr m, int per_dim,
                                              int N) {
  require(m->dim() == 2, "constant grid family is two-dimensional");
  require(per_dim % 2 == 0, "constant grid family expects an even count");
  SweepFamily f;
  f.name = "torus-constant-grid";
  f.degree = 2;
  for (int j = 0; j < per_dim; ++j)
    for (int k = 0; k < per_dim; ++k) {
      Vec q(2);
      q << double(j) / per_dim, double(k) / per_dim;
      f.members.push_back(make_constant_path(m, {0, q}, N));
      Vec p(2);
      p << q[0], q[1];
      f.params.push_back(p);
    }
  f.grid_shape = {per_dim, per_dim};
  return f;
}

// ---------------------------------------------------------------------------
// Sphere families. Endpoints sit symmetrically about the north pole on the
// x-z great circle at angular distance theta; the three geodesics joining
// them have lengths theta, 2 pi - theta, and 2 pi + theta.

namespace detail {

inline Eigen::Vector3d sphere_point(double polar) {
  return {std::sin(polar), 0.0, std::cos(polar)};
}

struct CutCircle {
  Eigen::Vector3d center;
  Eigen::Vector3d e1, e2;  // in-plane orthonormal frame, e1 toward A
  double radius;
};

// Circle cut from the unit sphere by the plane with unit normal n passing
// through the point a (which must satisfy |n . a| < 1).
inline CutCircle cut_circle(const Eigen::Vector3d& n,
                            const Eigen::Vector3d& a) {
  double d = n.dot(a);
  CutCircle c;
  c.center = d * n;
  c.radius = std::sqrt(std::max(0.0, 1.0 - d * d));
  c.e1 = (a - c.center) / c.radius;
  c.e2 = n.cross(c.e1);
  return c;
}

inline Eigen::Vector3d circle_point(const CutCircle& c, double angle) {
  return c.center +
         c.radius * (std::cos(angle) * c.e1 + std::sin(angle) * c.e2);
}

// Samples a constant-speed concatenation of embedded curves into a path.
inline DiscretePath sample_embedded(
    ManifoldPtr m,
    const std::vector<std::pair<std::function<Eigen::Vector3d(double)>,
                                double>>& parts,
    int N) {
  auto* sph = dynamic_cast<const RoundSphere2*>(m.get());
  require(sph != nullptr, "embedded sampling needs the round sphere");
  double total = 0.0;
  for (const auto& part : parts) total += part.second;
  DiscretePath p{m, N, {}};
  for (int k = 0; k <= N; ++k) {
    double s = total * k / N;
    std::size_t idx = 0;
    while (idx + 1 < parts.size() && s > parts[idx].second) {
      s -= parts[idx].second;
      ++idx;
    }
    double u = (parts[idx].second > 0.0) ? s / parts[idx].second : 0.0;
    p.nodes.push_back(sph->project(parts[idx].first(std::min(u, 1.0))));
  }
  return p;
}

}  // namespace detail

inline std::pair<ChartPoint, ChartPoint> sphere_symmetric_endpoints(
    const ManifoldPtr& m, double theta) {
  auto* sph = dynamic_cast<const RoundSphere2*>(m.get());
  require(sph != nullptr, "endpoints helper needs the round sphere");
  return {sph->project(detail::sphere_point(theta / 2.0)),
          sph->project(detail::sphere_point(-theta / 2.0))};
}

// Degree-0 seed: the short arc through the north pole.
inline SweepFamily sphere_arc_seed(ManifoldPtr m, double theta, int N) {
  double h = theta / 2.0;
  auto arc = [h, theta](double t) {
    return detail::sphere_point(h - theta * t);
  };
  SweepFamily f;
  f.name = "sphere-short-arc";
  f.degree = 0;
  f.members.push_back(detail::sample_embedded(m, {{arc, theta}}, N));
  f.params.push_back(Vec::Zero(1));
  f.grid_shape = {1, 1};
  return f;
}

// Degree-1 sweep: long arcs on circles cut by planes through the chord AB,
// tilted by psi in [-psi_max, psi_max]. psi = 0 is exactly the second
// geodesic (length 2 pi - theta); tilting shrinks the circle, so the
// centered member is the family maximum.
inline SweepFamily sphere_detour_family(ManifoldPtr m, double theta, int count,
                                        double psi_max, int N) {
  require(count % 2 == 1, "detour family expects an odd member count");
  double h = theta / 2.0;
  Eigen::Vector3d A = detail::sphere_point(h);
  Eigen::Vector3d B = detail::sphere_point(-h);
  Eigen::Vector3d yhat(0.0, 1.0, 0.0), zhat(0.0, 0.0, 1.0);

  SweepFamily f;
  f.name = "sphere-detour";
  f.degree = 1;
  for (int j = 0; j < count; ++j) {
    double psi = psi_max * (2.0 * j / (count - 1) - 1.0);
    Eigen::Vector3d n = std::cos(psi) * yhat + std::sin(psi) * zhat;
    detail::CutCircle c = detail::cut_circle(n, A);
    Eigen::Vector3d rb = B - c.center;
    double beta = std::atan2(rb.dot(c.e2), rb.dot(c.e1));
    double sweep = (beta > 0.0) ? beta - 2.0 * M_PI : beta + 2.0 * M_PI;
    auto arc = [c, sweep](double t) {
      return detail::circle_point(c, sweep * t);
    };
    f.members.push_back(
        detail::sample_embedded(m, {{arc, c.radius * std::abs(sweep)}}, N));
    f.params.push_back(Vec::Constant(1, psi));
  }
  f.grid_shape = {count, 1};
  return f;
}

// Degree-2 sweep: a full loop at A on a circle tilted by psi1, then the short
// chord arc to B on a circle tilted by psi2. (0, 0) is exactly the third
// geodesic (length 2 pi + theta), the pinned maximum of the family.
inline SweepFamily sphere_wrap_family(ManifoldPtr m, double theta, int count,
                                      double psi_max, int N) {
  require(count % 2 == 1, "wrap family expects an odd member count");
  double h = theta / 2.0;
  Eigen::Vector3d A = detail::sphere_point(h);
  Eigen::Vector3d B = detail::sphere_point(-h);
  Eigen::Vector3d yhat(0.0, 1.0, 0.0), zhat(0.0, 0.0, 1.0);

  SweepFamily f;
  f.name = "sphere-wrap";
  f.degree = 2;
  for (int j1 = 0; j1 < count; ++j1)
    for (int j2 = 0; j2 < count; ++j2) {
      double psi1 = psi_max * (2.0 * j1 / (count - 1) - 1.0);
      double psi2 = psi_max * (2.0 * j2 / (count - 1) - 1.0);

      // Loop plane contains A and the arrival tangent; tilting rotates the
      // normal from yhat toward -A, keeping A on the circle.
      Eigen::Vector3d n1 = std::cos(psi1) * yhat - std::sin(psi1) * A;
      detail::CutCircle c1 = detail::cut_circle(n1.normalized(), A);
      auto loop = [c1](double t) {
        return detail::circle_point(c1, -2.0 * M_PI * t);
      };

      Eigen::Vector3d n2 = std::cos(psi2) * yhat + std::sin(psi2) * zhat;
      detail::CutCircle c2 = detail::cut_circle(n2, A);
      Eigen::Vector3d rb = B - c2.center;
      double beta = std::atan2(rb.dot(c2.e2), rb.dot(c2.e1));
      auto arc = [c2, beta](double t) {
        return detail::circle_point(c2, beta * t);
      };

      f.members.push_back(detail::sample_embedded(
          m,
          {{loop, 2.0 * M_PI * c1.radius}, {arc, c2.radius * std::abs(beta)}},
          N));
      Vec p(2);
      p << psi1, psi2;
      f.params.push_back(p);
    }
  f.grid_shape = {count, count};
  return f;
}

}  // namespace tonelli
