// Chart-based manifold models. Two builtins: the flat torus R^n/Z^n with
// coordinates normalized to [0,1)^n, and the round unit 2-sphere carried by
// two stereographic charts (projection from the north and south pole) whose
// transition map is the coordinate inversion q -> q/|q|^2.
#pragma once

#include <tonelli/core.hpp>

#include <algorithm>
#include <memory>

namespace tonelli {

struct ChartPoint {
  int chart = 0;
  Vec q;
};

// Chart-coordinate data of the displacement from x to a neighbouring point y:
// y's coordinates expressed in x's chart (delta = those coords minus x.q),
// plus the first and second derivative of that expression with respect to
// y's own coordinates. Path-space derivatives chain through these.
struct SegmentFrame {
  Vec delta;   // y (in x's chart) - x.q
  Mat jac;     // d(y-in-x-chart)/d(y.q)
  Tensor3 sec; // second derivative, sec[k](i,j) = d^2 (...)_k / dq_i dq_j
  bool identity = true;  // true when jac == I and sec == 0
};

class Manifold {
 public:
  virtual ~Manifold() = default;

  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual int num_charts() const = 0;
  virtual double injectivity_radius() const = 0;

  virtual Mat metric(const ChartPoint& x) const = 0;
  // dmetric()[a](i,j) = d g_ij / d q_a; d2metric()[a][b](i,j) adds one more.
  virtual Tensor3 dmetric(const ChartPoint& x) const = 0;
  virtual Tensor4 d2metric(const ChartPoint& x) const = 0;
  virtual Tensor3 christoffel(const ChartPoint& x) const = 0;

  // Coordinates of x in another chart. Throws if x is not representable.
  virtual Vec transition(const ChartPoint& x, int target_chart) const = 0;

  // Normalized representative: torus coords wrapped into [0,1)^n, sphere
  // points moved to the chart where their coordinates are smallest.
  virtual ChartPoint rebase(const ChartPoint& x) const = 0;

  virtual SegmentFrame segment_frame(const ChartPoint& x,
                                     const ChartPoint& y) const = 0;

  virtual double distance(const ChartPoint& x, const ChartPoint& y) const = 0;

  // Geodesic exponential; the result is rebased.
  virtual ChartPoint exp(const ChartPoint& x, const Vec& v) const = 0;

  double norm(const ChartPoint& x, const Vec& v) const {
    return std::sqrt(std::max(0.0, v.dot(metric(x) * v)));
  }

  Vec local_delta(const ChartPoint& x, const ChartPoint& y) const {
    return segment_frame(x, y).delta;
  }
};

using ManifoldPtr = std::shared_ptr<const Manifold>;

// ---------------------------------------------------------------------------
// Flat torus R^n/Z^n, one chart, identity metric.

class FlatTorus final : public Manifold {
 public:
  explicit FlatTorus(int n) : n_(n) { require(n >= 1, "torus dimension >= 1"); }

  std::string name() const override { return "torus" + std::to_string(n_); }
  int dim() const override { return n_; }
  int num_charts() const override { return 1; }
  double injectivity_radius() const override { return 0.5; }

  Mat metric(const ChartPoint&) const override {
    return Mat::Identity(n_, n_);
  }
  Tensor3 dmetric(const ChartPoint&) const override {
    return Tensor3(n_, Mat::Zero(n_, n_));
  }
  Tensor4 d2metric(const ChartPoint&) const override {
    return Tensor4(n_, std::vector<Mat>(n_, Mat::Zero(n_, n_)));
  }
  Tensor3 christoffel(const ChartPoint&) const override {
    return Tensor3(n_, Mat::Zero(n_, n_));
  }

  Vec transition(const ChartPoint& x, int target_chart) const override {
    require(target_chart == 0, "torus has a single chart");
    return x.q;
  }

  ChartPoint rebase(const ChartPoint& x) const override {
    ChartPoint r{0, Vec(n_)};
    for (int i = 0; i < n_; ++i) {
      double w = x.q[i] - std::floor(x.q[i]);
      if (w >= 1.0) w -= 1.0;  // guard against floor rounding at 1-eps
      r.q[i] = w;
    }
    return r;
  }

  SegmentFrame segment_frame(const ChartPoint& x,
                             const ChartPoint& y) const override {
    SegmentFrame f;
    f.delta = Vec(n_);
    for (int i = 0; i < n_; ++i) {
      double d = y.q[i] - x.q[i];
      d -= std::round(d);  // wrap into [-1/2, 1/2]
      f.delta[i] = d;
    }
    f.jac = Mat::Identity(n_, n_);
    f.sec = Tensor3(n_, Mat::Zero(n_, n_));
    f.identity = true;
    return f;
  }

  double distance(const ChartPoint& x, const ChartPoint& y) const override {
    return segment_frame(x, y).delta.norm();
  }

  ChartPoint exp(const ChartPoint& x, const Vec& v) const override {
    return rebase({0, x.q + v});
  }

 private:
  int n_;
};

// ---------------------------------------------------------------------------
// Round unit 2-sphere. Chart 0 projects from the north pole (coords 0 at the
// south pole), chart 1 from the south pole. Both carry the conformal metric
// g = 4/(1+|q|^2)^2 I; the chart switch threshold is |q| > 2.

class RoundSphere2 final : public Manifold {
 public:
  static constexpr double kRebaseRadius = 2.0;

  std::string name() const override { return "sphere2"; }
  int dim() const override { return 2; }
  int num_charts() const override { return 2; }
  double injectivity_radius() const override { return M_PI; }

  Mat metric(const ChartPoint& x) const override {
    return conformal(x.q) * Mat::Identity(2, 2);
  }

  Tensor3 dmetric(const ChartPoint& x) const override {
    double w = 1.0 + x.q.squaredNorm();
    Tensor3 dg(2, Mat::Zero(2, 2));
    for (int a = 0; a < 2; ++a)
      dg[a] = (-16.0 * x.q[a] / (w * w * w)) * Mat::Identity(2, 2);
    return dg;
  }

  Tensor4 d2metric(const ChartPoint& x) const override {
    double w = 1.0 + x.q.squaredNorm();
    double w3 = w * w * w, w4 = w3 * w;
    Tensor4 d2(2, std::vector<Mat>(2));
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        double cab = 96.0 * x.q[a] * x.q[b] / w4;
        if (a == b) cab -= 16.0 / w3;
        d2[a][b] = cab * Mat::Identity(2, 2);
      }
    return d2;
  }

  Tensor3 christoffel(const ChartPoint& x) const override {
    // Conformal metric e^{2f} I with f = log 2 - log(1+|q|^2):
    // Gamma^k_ij = delta_ki df_j + delta_kj df_i - delta_ij df_k.
    double w = 1.0 + x.q.squaredNorm();
    Vec df = -2.0 * x.q / w;
    Tensor3 G(2, Mat::Zero(2, 2));
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          double v = 0.0;
          if (k == i) v += df[j];
          if (k == j) v += df[i];
          if (i == j) v -= df[k];
          G[k](i, j) = v;
        }
    return G;
  }

  Vec transition(const ChartPoint& x, int target_chart) const override {
    if (target_chart == x.chart) return x.q;
    double s = x.q.squaredNorm();
    require(s > 1e-16, "point is at the excluded pole of the target chart");
    return x.q / s;
  }

  ChartPoint rebase(const ChartPoint& x) const override {
    if (x.q.norm() <= kRebaseRadius) return x;
    return {1 - x.chart, transition(x, 1 - x.chart)};
  }

  SegmentFrame segment_frame(const ChartPoint& x,
                             const ChartPoint& y) const override {
    SegmentFrame f;
    if (y.chart == x.chart) {
      f.delta = y.q - x.q;
      f.jac = Mat::Identity(2, 2);
      f.sec = Tensor3(2, Mat::Zero(2, 2));
      f.identity = true;
      return f;
    }
    double s = y.q.squaredNorm();
    require(s > 1e-16, "segment endpoint at the excluded pole");
    Vec t = y.q / s;
    f.delta = t - x.q;
    f.jac = (Mat::Identity(2, 2) - 2.0 * (y.q * y.q.transpose()) / s) / s;
    f.sec = Tensor3(2, Mat::Zero(2, 2));
    double s2 = s * s, s3 = s2 * s;
    for (int k = 0; k < 2; ++k)
      for (int j = 0; j < 2; ++j)
        for (int l = 0; l < 2; ++l) {
          double v = 8.0 * y.q[k] * y.q[j] * y.q[l] / s3;
          if (k == j) v -= 2.0 * y.q[l] / s2;
          if (k == l) v -= 2.0 * y.q[j] / s2;
          if (j == l) v -= 2.0 * y.q[k] / s2;
          f.sec[k](j, l) = v;
        }
    f.identity = false;
    return f;
  }

  // Embedding into R^3 as the unit sphere.
  Eigen::Vector3d embed(const ChartPoint& x) const {
    double w = 1.0 + x.q.squaredNorm();
    double z = (x.q.squaredNorm() - 1.0) / w;
    if (x.chart == 1) z = -z;
    return {2.0 * x.q[0] / w, 2.0 * x.q[1] / w, z};
  }

  // Differential of the embedding, 3x2.
  Eigen::Matrix<double, 3, 2> embed_jacobian(const ChartPoint& x) const {
    double w = 1.0 + x.q.squaredNorm();
    Eigen::Matrix<double, 3, 2> J;
    for (int a = 0; a < 2; ++a) {
      for (int i = 0; i < 2; ++i)
        J(i, a) = (i == a ? 2.0 / w : 0.0) - 4.0 * x.q[i] * x.q[a] / (w * w);
      J(2, a) = 4.0 * x.q[a] / (w * w);
      if (x.chart == 1) J(2, a) = -J(2, a);
    }
    return J;
  }

  ChartPoint project(const Eigen::Vector3d& p) const {
    // Pick the chart whose excluded pole is far from p.
    int chart = (p[2] > 0.0) ? 1 : 0;
    double den = (chart == 0) ? (1.0 - p[2]) : (1.0 + p[2]);
    Vec q(2);
    q << p[0] / den, p[1] / den;
    return rebase({chart, q});
  }

  double distance(const ChartPoint& x, const ChartPoint& y) const override {
    Eigen::Vector3d u = embed(x), v = embed(y);
    // atan2 of (sin, cos) stays well conditioned at both ends of [0, pi].
    return std::atan2(u.cross(v).norm(), u.dot(v));
  }

  ChartPoint exp(const ChartPoint& x, const Vec& v) const override {
    Eigen::Vector3d p = embed(x);
    Eigen::Vector3d V = embed_jacobian(x) * v;
    double th = V.norm();
    if (th < 1e-300) return rebase(x);
    Eigen::Vector3d r = std::cos(th) * p + std::sin(th) * (V / th);
    return project(r.normalized());
  }

 private:
  static double conformal(const Vec& q) {
    double w = 1.0 + q.squaredNorm();
    return 4.0 / (w * w);
  }
};

inline ManifoldPtr build_torus(int n) {
  return std::make_shared<FlatTorus>(n);
}

inline ManifoldPtr build_sphere2() {
  return std::make_shared<RoundSphere2>();
}

// Resolves the names used by serialized records and config files.
inline ManifoldPtr make_manifold(const std::string& name) {
  if (name == "sphere2") return build_sphere2();
  if (name.rfind("torus", 0) == 0) {
    int n = std::stoi(name.substr(5));
    require(n >= 1 && n <= 16, "make_manifold: torus dimension out of range");
    return build_torus(n);
  }
  throw std::runtime_error("make_manifold: unknown manifold '" + name + "'");
}

// Gaussian curvature from the Christoffel symbols by central differences
// (2-manifolds only). Used by the geometry checks.
inline double gaussian_curvature(const Manifold& m, const ChartPoint& x,
                                 double h = 1e-5) {
  require(m.dim() == 2, "curvature check needs a 2-manifold");
  auto gamma = [&](const Vec& q) { return m.christoffel({x.chart, q}); };
  // dG[a] = d Gamma / d q_a
  std::array<Tensor3, 2> dG;
  for (int a = 0; a < 2; ++a) {
    Vec qp = x.q, qm = x.q;
    qp[a] += h;
    qm[a] -= h;
    Tensor3 Gp = gamma(qp), Gm = gamma(qm);
    Tensor3 d(2, Mat::Zero(2, 2));
    for (int k = 0; k < 2; ++k) d[k] = (Gp[k] - Gm[k]) / (2.0 * h);
    dG[a] = d;
  }
  Tensor3 G = m.christoffel(x);
  // R^l_{kij} = d_i Gamma^l_jk - d_j Gamma^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik
  auto Rl = [&](int l, int k, int i, int j) {
    double r = dG[i][l](j, k) - dG[j][l](i, k);
    for (int mm = 0; mm < 2; ++mm)
      r += G[l](i, mm) * G[mm](j, k) - G[l](j, mm) * G[mm](i, k);
    return r;
  };
  Mat g = m.metric(x);
  // R_{1212} = g_{1l} R^l_{212}  (indices 0-based: R_{0101})
  double R0101 = 0.0;
  for (int l = 0; l < 2; ++l) R0101 += g(0, l) * Rl(l, 1, 0, 1);
  return R0101 / g.determinant();
}

}  // namespace tonelli
