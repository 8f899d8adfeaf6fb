// Discrete model of the W^{1,2} path space: uniform-grid paths, the action
// functional with exact node derivatives, boundary conditions as endpoint-pair
// projectors, and the Sobolev metric used for dual norms and gradient
// representatives.
#pragma once

#include <tonelli/models.hpp>

#include <nlohmann/json.hpp>

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace tonelli {

// ---------------------------------------------------------------------------
// Paths

struct DiscretePath {
  ManifoldPtr manifold;
  int N = 0;
  std::vector<ChartPoint> nodes;  // N + 1 entries on t_i = i / N

  int dim() const { return manifold->dim(); }
};

inline DiscretePath make_constant_path(ManifoldPtr m, const ChartPoint& x,
                                       int N) {
  require(N >= 1, "path needs at least one segment");
  DiscretePath p{std::move(m), N, {}};
  ChartPoint r = p.manifold->rebase(x);
  p.nodes.assign(N + 1, r);
  return p;
}

// Nodes interpolated linearly in the chart of q0; suitable when the whole
// segment stays inside one chart's range (the torus always qualifies).
inline DiscretePath make_linear_path(ManifoldPtr m, const ChartPoint& q0,
                                     const Vec& q1_coords, int N) {
  require(N >= 1, "path needs at least one segment");
  DiscretePath p{std::move(m), N, {}};
  p.nodes.reserve(N + 1);
  for (int i = 0; i <= N; ++i) {
    double s = double(i) / N;
    Vec q = (1.0 - s) * q0.q + s * q1_coords;
    p.nodes.push_back(p.manifold->rebase({q0.chart, q}));
  }
  return p;
}

inline DiscretePath make_path_from_function(
    ManifoldPtr m, const std::function<ChartPoint(double)>& gamma, int N) {
  require(N >= 1, "path needs at least one segment");
  DiscretePath p{std::move(m), N, {}};
  p.nodes.reserve(N + 1);
  for (int i = 0; i <= N; ++i)
    p.nodes.push_back(p.manifold->rebase(gamma(double(i) / N)));
  return p;
}

// Per-segment quantities: midpoint state, chord velocity, and the chart frame
// relating the far node's coordinates to the near node's chart.
struct SegmentData {
  double t;        // midpoint time (i + 1/2) / N
  ChartPoint mid;  // in the chart of node i
  Vec v;           // N * delta
  SegmentFrame frame;
};

inline std::vector<SegmentData> precompute_segments(const DiscretePath& p) {
  require(p.N >= 1 && int(p.nodes.size()) == p.N + 1,
          "path node count does not match segment count");
  const Manifold& m = *p.manifold;
  std::vector<SegmentData> segs;
  segs.reserve(p.N);
  for (int i = 0; i < p.N; ++i) {
    const ChartPoint& x = p.nodes[i];
    const ChartPoint& y = p.nodes[i + 1];
    require(m.distance(x, y) < m.injectivity_radius(),
            "segment " + std::to_string(i) + " exceeds the injectivity radius");
    SegmentData s;
    s.frame = m.segment_frame(x, y);
    s.t = (i + 0.5) / p.N;
    s.mid = {x.chart, x.q + 0.5 * s.frame.delta};
    s.v = double(p.N) * s.frame.delta;
    segs.push_back(std::move(s));
  }
  return segs;
}

inline void validate_path(const DiscretePath& p) { precompute_segments(p); }

// ---------------------------------------------------------------------------
// Boundary conditions. The projector acts on the stacked endpoint variation
// (xi_0, xi_N) in the coordinates of the endpoint nodes' charts.

class BoundaryCondition {
 public:
  enum class Kind { Periodic, FixedEndpoints, Neumann, Product, General };

  static BoundaryCondition periodic(int n) {
    BoundaryCondition bc(Kind::Periodic, n);
    return bc;
  }

  static BoundaryCondition fixed_endpoints(int n, ChartPoint q0,
                                           ChartPoint q1) {
    BoundaryCondition bc(Kind::FixedEndpoints, n);
    bc.target0_ = std::move(q0);
    bc.target1_ = std::move(q1);
    return bc;
  }

  static BoundaryCondition neumann(int n) {
    return BoundaryCondition(Kind::Neumann, n);
  }

  static BoundaryCondition product(Mat P0, Mat P1) {
    int n = int(P0.rows());
    BoundaryCondition bc(Kind::Product, n);
    check_projector(P0, "P0");
    check_projector(P1, "P1");
    bc.p0_ = std::move(P0);
    bc.p1_ = std::move(P1);
    return bc;
  }

  // Q = {(q0, q1) : c(q0, q1) = 0} with c a submersion; jac is the m x 2n
  // Jacobian of c. The tangent projector comes from the normal equations.
  static BoundaryCondition general(
      int n, std::function<Vec(const Vec&, const Vec&)> c,
      std::function<Mat(const Vec&, const Vec&)> jac) {
    BoundaryCondition bc(Kind::General, n);
    bc.c_ = std::move(c);
    bc.cjac_ = std::move(jac);
    return bc;
  }

  Kind kind() const { return kind_; }
  int dim() const { return n_; }
  const ChartPoint& target0() const { return target0_; }
  const ChartPoint& target1() const { return target1_; }

  Mat tangent_projector(const Vec& q0, const Vec& q1) const {
    int n = n_;
    Mat P = Mat::Zero(2 * n, 2 * n);
    switch (kind_) {
      case Kind::Periodic:
        P.topLeftCorner(n, n) = 0.5 * Mat::Identity(n, n);
        P.topRightCorner(n, n) = 0.5 * Mat::Identity(n, n);
        P.bottomLeftCorner(n, n) = 0.5 * Mat::Identity(n, n);
        P.bottomRightCorner(n, n) = 0.5 * Mat::Identity(n, n);
        break;
      case Kind::FixedEndpoints:
        break;
      case Kind::Neumann:
        P = Mat::Identity(2 * n, 2 * n);
        break;
      case Kind::Product:
        P.topLeftCorner(n, n) = p0_;
        P.bottomRightCorner(n, n) = p1_;
        break;
      case Kind::General: {
        Mat J = cjac_(q0, q1);
        require(int(J.cols()) == 2 * n,
                "boundary constraint Jacobian has wrong width");
        Mat JJt = J * J.transpose();
        P = Mat::Identity(2 * n, 2 * n) -
            J.transpose() * JJt.ldlt().solve(J);
        break;
      }
    }
    return P;
  }

  double constraint_residual(const Manifold& m, const ChartPoint& x0,
                             const ChartPoint& x1) const {
    switch (kind_) {
      case Kind::Periodic:
        return m.distance(x0, x1);
      case Kind::FixedEndpoints:
        return m.distance(x0, target0_) + m.distance(x1, target1_);
      case Kind::Neumann:
      case Kind::Product:
        return 0.0;
      case Kind::General:
        return c_(x0.q, x1.q).norm();
    }
    return 0.0;
  }

 private:
  BoundaryCondition(Kind k, int n) : kind_(k), n_(n) {}

  static void check_projector(const Mat& P, const char* which) {
    double tol = 1e-10 * (1.0 + P.norm());
    require((P - P.transpose()).norm() <= tol,
            std::string("boundary projector ") + which + " is not symmetric");
    require((P * P - P).norm() <= tol,
            std::string("boundary projector ") + which + " is not idempotent");
  }

  Kind kind_;
  int n_;
  ChartPoint target0_{0, Vec()};
  ChartPoint target1_{0, Vec()};
  Mat p0_, p1_;
  std::function<Vec(const Vec&, const Vec&)> c_;
  std::function<Mat(const Vec&, const Vec&)> cjac_;
};

// Orthonormal-column basis of the projector's range, used to embed the
// constrained endpoint-pair subspace.
inline Mat projector_range_basis(const Mat& P) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (P + P.transpose()));
  int r = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()[i] > 0.5) ++r;
  Mat B(P.rows(), r);
  int c = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()[i] > 0.5) B.col(c++) = es.eigenvectors().col(i);
  return B;
}

// ---------------------------------------------------------------------------
// Variations

using VariationVector = std::vector<Vec>;  // N + 1 per-node tangent vectors

inline Vec flatten(const VariationVector& xi) {
  int n = int(xi.empty() ? 0 : xi[0].size());
  Vec out(int(xi.size()) * n);
  for (std::size_t i = 0; i < xi.size(); ++i)
    out.segment(int(i) * n, n) = xi[i];
  return out;
}

inline VariationVector unflatten(const Vec& z, int num_nodes, int n) {
  VariationVector out(num_nodes);
  for (int i = 0; i < num_nodes; ++i) out[i] = z.segment(i * n, n);
  return out;
}

// Embedding of the bc-constrained node space into full node coordinates.
// Columns: interior nodes first (node-major), then the endpoint-pair basis.
// Periodic uses the natural identification xi_N = xi_0 so that reduced
// operators match the cyclic lattice exactly.
inline Mat constraint_embedding(const DiscretePath& p,
                                const BoundaryCondition& bc) {
  int n = p.dim(), N = p.N;
  int full = (N + 1) * n;
  int interior = (N - 1) * n;
  auto interior_block = [&](Mat& Z) {
    for (int i = 1; i < N; ++i)
      for (int k = 0; k < n; ++k) Z(i * n + k, (i - 1) * n + k) = 1.0;
  };
  switch (bc.kind()) {
    case BoundaryCondition::Kind::FixedEndpoints: {
      Mat Z = Mat::Zero(full, interior);
      interior_block(Z);
      return Z;
    }
    case BoundaryCondition::Kind::Periodic: {
      require(p.nodes[0].chart == p.nodes[N].chart,
              "periodic boundary needs both endpoints in one chart");
      Mat Z = Mat::Zero(full, interior + n);
      interior_block(Z);
      for (int k = 0; k < n; ++k) {
        Z(k, interior + k) = 1.0;
        Z(N * n + k, interior + k) = 1.0;
      }
      return Z;
    }
    case BoundaryCondition::Kind::Neumann: {
      Mat Z = Mat::Zero(full, interior + 2 * n);
      interior_block(Z);
      for (int k = 0; k < n; ++k) {
        Z(k, interior + k) = 1.0;
        Z(N * n + k, interior + n + k) = 1.0;
      }
      return Z;
    }
    default: {
      Mat P = bc.tangent_projector(p.nodes[0].q, p.nodes[N].q);
      Mat B = projector_range_basis(P);
      Mat Z = Mat::Zero(full, interior + int(B.cols()));
      interior_block(Z);
      for (int c = 0; c < B.cols(); ++c) {
        for (int k = 0; k < n; ++k) {
          Z(k, interior + c) = B(k, c);
          Z(N * n + k, interior + c) = B(n + k, c);
        }
      }
      return Z;
    }
  }
}

// ---------------------------------------------------------------------------
// Action, gradient, Hessian

inline double action(const Lagrangian& L, const DiscretePath& p) {
  require(p.manifold.get() == &L.manifold() ||
              p.manifold->name() == L.manifold().name(),
          "path and model live on different manifolds");
  auto segs = precompute_segments(p);
  double sum = 0.0;
  for (const auto& s : segs) sum += L.eval(s.t, s.mid, s.v);
  return sum / p.N;
}

// Exact derivative of the discrete action with respect to all node
// coordinates, before any boundary projection.
inline Vec action_node_derivative(const Lagrangian& L, const DiscretePath& p) {
  auto segs = precompute_segments(p);
  int n = p.dim(), N = p.N;
  Vec g = Vec::Zero((N + 1) * n);
  double inv2N = 0.5 / N;
  for (int i = 0; i < N; ++i) {
    const auto& s = segs[i];
    Vec dq = L.d_q(s.t, s.mid, s.v);
    Vec dv = L.d_v(s.t, s.mid, s.v);
    g.segment(i * n, n) += inv2N * dq - dv;
    Vec gb = inv2N * dq + dv;
    if (!s.frame.identity) gb = s.frame.jac.transpose() * gb;
    g.segment((i + 1) * n, n) += gb;
  }
  return g;
}

// Full-coordinate second derivative of the discrete action (block
// tridiagonal, endpoints unconstrained).
inline Mat action_node_hessian(const Lagrangian& L, const DiscretePath& p) {
  auto segs = precompute_segments(p);
  int n = p.dim(), N = p.N;
  Mat H = Mat::Zero((N + 1) * n, (N + 1) * n);
  double inv4N = 0.25 / N;
  for (int i = 0; i < N; ++i) {
    const auto& s = segs[i];
    Mat dqq = L.d_qq(s.t, s.mid, s.v);
    Mat dqv = L.d_qv(s.t, s.mid, s.v);
    Mat dvv = L.d_vv(s.t, s.mid, s.v);
    Mat sym = 0.5 * (dqv + dqv.transpose());
    Mat skew = 0.5 * (dqv - dqv.transpose());

    Mat Haa = inv4N * dqq - sym + double(p.N) * dvv;
    Mat Hab = inv4N * dqq + skew - double(p.N) * dvv;
    Mat Hbb = inv4N * dqq + sym + double(p.N) * dvv;
    if (!s.frame.identity) {
      Hab = Hab * s.frame.jac;
      Hbb = s.frame.jac.transpose() * Hbb * s.frame.jac;
      Vec w = (0.5 / N) * L.d_q(s.t, s.mid, s.v) + L.d_v(s.t, s.mid, s.v);
      for (int k = 0; k < n; ++k) Hbb += w[k] * s.frame.sec[k];
    }
    H.block(i * n, i * n, n, n) += Haa;
    H.block(i * n, (i + 1) * n, n, n) += Hab;
    H.block((i + 1) * n, i * n, n, n) += Hab.transpose();
    H.block((i + 1) * n, (i + 1) * n, n, n) += Hbb;
  }
  return H;
}

// Reduced Hessian on the bc-constrained subspace.
inline Mat hessian(const Lagrangian& L, const DiscretePath& p,
                   const BoundaryCondition& bc) {
  Mat Z = constraint_embedding(p, bc);
  Mat H = action_node_hessian(L, p);
  return Z.transpose() * H * Z;
}

// ---------------------------------------------------------------------------
// Sobolev metric

// Gram matrix of the W^{1,2} inner product in full node coordinates: the
// same midpoint quadrature applied to g(D_t xi, D_t eta) + g(xi, eta) with
// the covariant derivative using the midpoint Christoffel symbols.
inline Mat w12_gram(const DiscretePath& p) {
  auto segs = precompute_segments(p);
  const Manifold& m = *p.manifold;
  int n = p.dim(), N = p.N;
  Mat G = Mat::Zero((N + 1) * n, (N + 1) * n);
  for (int i = 0; i < N; ++i) {
    const auto& s = segs[i];
    Mat g = m.metric(s.mid);
    Tensor3 Gam = m.christoffel(s.mid);
    Mat Gv(n, n);
    for (int k = 0; k < n; ++k) Gv.row(k) = (Gam[k] * s.v).transpose();
    Mat J = s.frame.identity ? Mat::Identity(n, n) : s.frame.jac;
    Mat Ax = -double(N) * Mat::Identity(n, n) + 0.5 * Gv;
    Mat Ay = (double(N) * Mat::Identity(n, n) + 0.5 * Gv) * J;
    Mat Mx = 0.5 * Mat::Identity(n, n);
    Mat My = 0.5 * J;
    G.block(i * n, i * n, n, n) +=
        (Ax.transpose() * g * Ax + Mx.transpose() * g * Mx) / double(N);
    G.block(i * n, (i + 1) * n, n, n) +=
        (Ax.transpose() * g * Ay + Mx.transpose() * g * My) / double(N);
    G.block((i + 1) * n, i * n, n, n) +=
        (Ay.transpose() * g * Ax + My.transpose() * g * Mx) / double(N);
    G.block((i + 1) * n, (i + 1) * n, n, n) +=
        (Ay.transpose() * g * Ay + My.transpose() * g * My) / double(N);
  }
  return G;
}

inline double w12_inner(const DiscretePath& p, const VariationVector& xi,
                        const VariationVector& eta) {
  require(int(xi.size()) == p.N + 1 && int(eta.size()) == p.N + 1,
          "variation size does not match the path");
  auto segs = precompute_segments(p);
  const Manifold& m = *p.manifold;
  int n = p.dim(), N = p.N;
  double sum = 0.0;
  for (int i = 0; i < N; ++i) {
    const auto& s = segs[i];
    Mat g = m.metric(s.mid);
    Tensor3 Gam = m.christoffel(s.mid);
    Mat Gv(n, n);
    for (int k = 0; k < n; ++k) Gv.row(k) = (Gam[k] * s.v).transpose();
    Vec xb = s.frame.identity ? xi[i + 1] : Vec(s.frame.jac * xi[i + 1]);
    Vec eb = s.frame.identity ? eta[i + 1] : Vec(s.frame.jac * eta[i + 1]);
    Vec xm = 0.5 * (xi[i] + xb);
    Vec em = 0.5 * (eta[i] + eb);
    Vec Dx = double(N) * (xb - xi[i]) + Gv * xm;
    Vec De = double(N) * (eb - eta[i]) + Gv * em;
    sum += (Dx.dot(g * De) + xm.dot(g * em)) / N;
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Gradient with boundary handling

struct GradientResult {
  Vec raw;          // full node coordinates, endpoint pair projected by bc
  Vec reduced;      // pullback to the constrained subspace (Z^T d)
  Vec riesz;        // W^{1,2} representative, embedded in full coordinates
  double dual_norm = 0.0;  // sqrt(d^T G^{-1} d) on the constrained subspace
  double l2_norm = 0.0;    // Euclidean norm of raw
};

inline GradientResult gradient(const Lagrangian& L, const DiscretePath& p,
                               const BoundaryCondition& bc) {
  int n = p.dim(), N = p.N;
  Vec d = action_node_derivative(L, p);

  Mat Z = constraint_embedding(p, bc);
  Vec dr = Z.transpose() * d;
  Mat G = Z.transpose() * w12_gram(p) * Z;
  Eigen::LLT<Mat> llt(G);
  require(llt.info() == Eigen::Success,
          "W^{1,2} Gram matrix is not positive definite");
  Vec z = llt.solve(dr);

  GradientResult out;
  out.raw = d;
  Mat P = bc.tangent_projector(p.nodes[0].q, p.nodes[N].q);
  Vec pair(2 * n);
  pair << d.head(n), d.tail(n);
  pair = P * pair;
  out.raw.head(n) = pair.head(n);
  out.raw.tail(n) = pair.tail(n);
  out.reduced = dr;
  out.riesz = Z * z;
  out.dual_norm = std::sqrt(std::max(0.0, dr.dot(z)));
  out.l2_norm = out.raw.norm();
  return out;
}

// ---------------------------------------------------------------------------
// Boundary diagnostics

// One-sided chord velocities at the two ends, each in its own node's chart.
inline std::pair<Vec, Vec> endpoint_velocities(const DiscretePath& p) {
  const Manifold& m = *p.manifold;
  SegmentFrame first = m.segment_frame(p.nodes[0], p.nodes[1]);
  Vec v0 = double(p.N) * first.delta;
  SegmentFrame last = m.segment_frame(p.nodes[p.N - 1], p.nodes[p.N]);
  Vec v1 = double(p.N) * last.delta;
  if (!last.identity) v1 = last.jac.fullPivLu().solve(v1);
  return {v0, v1};
}

// Worst violation of the natural boundary pairing over an orthonormal basis
// of the admissible endpoint variations: |D_vL(1)[xi_1] - D_vL(0)[xi_0]|.
inline double conormal_residual(const BoundaryCondition& bc,
                                const Lagrangian& L, const DiscretePath& p) {
  int n = p.dim();
  auto [v0, v1] = endpoint_velocities(p);
  Vec dv0 = L.d_v(0.0, p.nodes[0], v0);
  Vec dv1 = L.d_v(1.0, p.nodes[p.N], v1);
  Mat P = bc.tangent_projector(p.nodes[0].q, p.nodes[p.N].q);
  Mat B = projector_range_basis(P);
  double worst = 0.0;
  for (int c = 0; c < B.cols(); ++c) {
    double val = dv1.dot(B.col(c).tail(n)) - dv0.dot(B.col(c).head(n));
    worst = std::max(worst, std::abs(val));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Compactness diagnostic

struct HolderReport {
  bool pass = true;
  double worst_slack = std::numeric_limits<double>::infinity();
  double l2_velocity_norm = 0.0;
  std::string witness;
};

// dist(gamma(t_i), gamma(t_j)) <= |t_i - t_j|^{1/2} ||gamma'||_{L^2} on all
// node pairs; a direct Cauchy-Schwarz consequence, so failures indicate a
// broken path or metric.
inline HolderReport holder_bound_check(const DiscretePath& p) {
  auto segs = precompute_segments(p);
  const Manifold& m = *p.manifold;
  double energy = 0.0;
  for (const auto& s : segs)
    energy += s.v.dot(m.metric(s.mid) * s.v) / p.N;
  HolderReport rep;
  rep.l2_velocity_norm = std::sqrt(energy);
  for (int i = 0; i <= p.N; ++i)
    for (int j = i + 1; j <= p.N; ++j) {
      double bound =
          std::sqrt(double(j - i) / p.N) * rep.l2_velocity_norm;
      double slack = bound - m.distance(p.nodes[i], p.nodes[j]);
      if (slack < rep.worst_slack) {
        rep.worst_slack = slack;
        rep.witness = "nodes (" + std::to_string(i) + ", " +
                      std::to_string(j) + ")";
      }
    }
  rep.pass = rep.worst_slack >= -1e-10 * (1.0 + rep.l2_velocity_norm);
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json path_to_json(const DiscretePath& p) {
  nlohmann::json j;
  j["manifold"] = p.manifold->name();
  j["N"] = p.N;
  j["charts"] = nlohmann::json::array();
  j["nodes"] = nlohmann::json::array();
  for (const auto& node : p.nodes) {
    j["charts"].push_back(node.chart);
    std::vector<double> coords(node.q.data(), node.q.data() + node.q.size());
    j["nodes"].push_back(coords);
  }
  return j;
}

inline DiscretePath path_from_json(const nlohmann::json& j) {
  DiscretePath p;
  p.manifold = make_manifold(j.at("manifold").get<std::string>());
  p.N = j.at("N").get<int>();
  const auto& charts = j.at("charts");
  const auto& nodes = j.at("nodes");
  require(int(charts.size()) == p.N + 1 && int(nodes.size()) == p.N + 1,
          "path record has inconsistent node count");
  for (int i = 0; i <= p.N; ++i) {
    auto coords = nodes[i].get<std::vector<double>>();
    Vec q = Eigen::Map<const Vec>(coords.data(), int(coords.size()));
    p.nodes.push_back({charts[i].get<int>(), q});
  }
  validate_path(p);
  return p;
}

}  // namespace tonelli
