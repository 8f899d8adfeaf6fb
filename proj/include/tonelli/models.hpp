// Lagrangian and Hamiltonian function objects with first/second derivatives,
// a builtin model registry, expression-tree user models, and the Legendre /
// Fenchel transform. Mixed-partial convention throughout:
//   d_qv(a,b) = d^2 L / (dq_a dv_b).
#pragma once

#include <tonelli/core.hpp>
#include <tonelli/geometry.hpp>

#include <functional>
#include <map>
#include <memory>
#include <utility>

namespace tonelli {

// ---------------------------------------------------------------------------
// Potentials U(t, x) for mechanical models.

class Potential {
 public:
  virtual ~Potential() = default;
  virtual std::string name() const = 0;
  virtual bool autonomous() const { return true; }
  virtual double eval(double t, const ChartPoint& x) const = 0;
  virtual Vec d_q(double t, const ChartPoint& x) const = 0;
  virtual Mat d_qq(double t, const ChartPoint& x) const = 0;
  virtual double d_t(double, const ChartPoint&) const { return 0.0; }
};

using PotentialPtr = std::shared_ptr<const Potential>;

class ZeroPotential final : public Potential {
 public:
  explicit ZeroPotential(int n) : n_(n) {}
  std::string name() const override { return "zero"; }
  double eval(double, const ChartPoint&) const override { return 0.0; }
  Vec d_q(double, const ChartPoint&) const override { return Vec::Zero(n_); }
  Mat d_qq(double, const ChartPoint&) const override {
    return Mat::Zero(n_, n_);
  }

 private:
  int n_;
};

// U(q) = epsilon * sum_i cos(2 pi q_i) on torus charts.
class CosinePotential final : public Potential {
 public:
  CosinePotential(int n, double epsilon) : n_(n), eps_(epsilon) {}
  std::string name() const override { return "cos"; }
  double eval(double, const ChartPoint& x) const override {
    double u = 0.0;
    for (int i = 0; i < n_; ++i) u += std::cos(2.0 * M_PI * x.q[i]);
    return eps_ * u;
  }
  Vec d_q(double, const ChartPoint& x) const override {
    Vec g(n_);
    for (int i = 0; i < n_; ++i)
      g[i] = -2.0 * M_PI * eps_ * std::sin(2.0 * M_PI * x.q[i]);
    return g;
  }
  Mat d_qq(double, const ChartPoint& x) const override {
    Mat h = Mat::Zero(n_, n_);
    for (int i = 0; i < n_; ++i)
      h(i, i) = -4.0 * M_PI * M_PI * eps_ * std::cos(2.0 * M_PI * x.q[i]);
    return h;
  }

 private:
  int n_;
  double eps_;
};

// ---------------------------------------------------------------------------
// Lagrangian interface. Derivative defaults are central finite differences
// with steps h1 = 1e-6 (1+|v|) for first and h2 = 1e-4 (1+|v|) for second
// derivatives; builtin models override with analytic formulas.

class Lagrangian {
 public:
  explicit Lagrangian(ManifoldPtr m) : manifold_(std::move(m)) {}
  virtual ~Lagrangian() = default;

  virtual std::string name() const = 0;
  const Manifold& manifold() const { return *manifold_; }
  const ManifoldPtr& manifold_ptr() const { return manifold_; }
  int dim() const { return manifold_->dim(); }

  virtual bool autonomous() const { return true; }
  bool time_periodic() const { return true; }
  virtual bool analytic_derivatives() const { return false; }

  virtual double eval(double t, const ChartPoint& x, const Vec& v) const = 0;

  virtual Vec d_v(double t, const ChartPoint& x, const Vec& v) const {
    int n = dim();
    double h = FdSteps::first(v.norm());
    Vec g(n), e = v;
    for (int i = 0; i < n; ++i) {
      e[i] = v[i] + h;
      double fp = eval(t, x, e);
      e[i] = v[i] - h;
      double fm = eval(t, x, e);
      e[i] = v[i];
      g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
  }

  virtual Vec d_q(double t, const ChartPoint& x, const Vec& v) const {
    int n = dim();
    double h = FdSteps::first(v.norm());
    Vec g(n);
    ChartPoint y = x;
    for (int i = 0; i < n; ++i) {
      y.q[i] = x.q[i] + h;
      double fp = eval(t, y, v);
      y.q[i] = x.q[i] - h;
      double fm = eval(t, y, v);
      y.q[i] = x.q[i];
      g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
  }

  virtual double d_t(double t, const ChartPoint& x, const Vec& v) const {
    if (autonomous()) return 0.0;
    double h = FdSteps::first(v.norm());
    return (eval(t + h, x, v) - eval(t - h, x, v)) / (2.0 * h);
  }

  virtual Mat d_vv(double t, const ChartPoint& x, const Vec& v) const {
    int n = dim();
    double h = FdSteps::second(v.norm());
    Mat H(n, n);
    double f0 = eval(t, x, v);
    Vec e = v;
    for (int i = 0; i < n; ++i) {
      e[i] = v[i] + h;
      double fp = eval(t, x, e);
      e[i] = v[i] - h;
      double fm = eval(t, x, e);
      e[i] = v[i];
      H(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
      for (int j = i + 1; j < n; ++j) {
        e[i] = v[i] + h;
        e[j] = v[j] + h;
        double fpp = eval(t, x, e);
        e[j] = v[j] - h;
        double fpm = eval(t, x, e);
        e[i] = v[i] - h;
        double fmm = eval(t, x, e);
        e[j] = v[j] + h;
        double fmp = eval(t, x, e);
        e[i] = v[i];
        e[j] = v[j];
        H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
      }
    }
    return H;
  }

  virtual Mat d_qv(double t, const ChartPoint& x, const Vec& v) const {
    int n = dim();
    double h = FdSteps::second(v.norm());
    Mat M(n, n);
    ChartPoint y = x;
    Vec e = v;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        y.q[a] = x.q[a] + h;
        e[b] = v[b] + h;
        double fpp = eval(t, y, e);
        e[b] = v[b] - h;
        double fpm = eval(t, y, e);
        y.q[a] = x.q[a] - h;
        double fmm = eval(t, y, e);
        e[b] = v[b] + h;
        double fmp = eval(t, y, e);
        y.q[a] = x.q[a];
        e[b] = v[b];
        M(a, b) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
      }
    return M;
  }

  virtual Mat d_qq(double t, const ChartPoint& x, const Vec& v) const {
    int n = dim();
    double h = FdSteps::second(v.norm());
    Mat H(n, n);
    double f0 = eval(t, x, v);
    ChartPoint y = x;
    for (int i = 0; i < n; ++i) {
      y.q[i] = x.q[i] + h;
      double fp = eval(t, y, v);
      y.q[i] = x.q[i] - h;
      double fm = eval(t, y, v);
      y.q[i] = x.q[i];
      H(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
      for (int j = i + 1; j < n; ++j) {
        y.q[i] = x.q[i] + h;
        y.q[j] = x.q[j] + h;
        double fpp = eval(t, y, v);
        y.q[j] = x.q[j] - h;
        double fpm = eval(t, y, v);
        y.q[i] = x.q[i] - h;
        double fmm = eval(t, y, v);
        y.q[j] = x.q[j] + h;
        double fmp = eval(t, y, v);
        y.q[i] = x.q[i];
        y.q[j] = x.q[j];
        H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
      }
    }
    return H;
  }

  // Time derivative of D_vL, needed by the Euler-Lagrange vector field.
  virtual Vec d_tv(double t, const ChartPoint& x, const Vec& v) const {
    if (autonomous()) return Vec::Zero(dim());
    double h = FdSteps::second(v.norm());
    return (d_v(t + h, x, v) - d_v(t - h, x, v)) / (2.0 * h);
  }

 protected:
  ManifoldPtr manifold_;
};

using LagrangianPtr = std::shared_ptr<const Lagrangian>;

// L = |v|^2_q / 2 - U(t, q).
class MechanicalLagrangian final : public Lagrangian {
 public:
  MechanicalLagrangian(ManifoldPtr m, PotentialPtr u)
      : Lagrangian(std::move(m)), u_(std::move(u)) {}

  std::string name() const override {
    return u_->name() == "zero" ? "free" : "mechanical(" + u_->name() + ")";
  }
  bool autonomous() const override { return u_->autonomous(); }
  bool analytic_derivatives() const override { return true; }

  double eval(double t, const ChartPoint& x, const Vec& v) const override {
    return 0.5 * v.dot(manifold_->metric(x) * v) - u_->eval(t, x);
  }
  Vec d_v(double, const ChartPoint& x, const Vec& v) const override {
    return manifold_->metric(x) * v;
  }
  Mat d_vv(double, const ChartPoint& x, const Vec&) const override {
    return manifold_->metric(x);
  }
  Vec d_q(double t, const ChartPoint& x, const Vec& v) const override {
    Tensor3 dg = manifold_->dmetric(x);
    Vec g = -u_->d_q(t, x);
    for (int a = 0; a < dim(); ++a) g[a] += 0.5 * v.dot(dg[a] * v);
    return g;
  }
  Mat d_qv(double, const ChartPoint& x, const Vec& v) const override {
    Tensor3 dg = manifold_->dmetric(x);
    Mat M(dim(), dim());
    for (int a = 0; a < dim(); ++a) M.row(a) = (dg[a] * v).transpose();
    return M;
  }
  Mat d_qq(double t, const ChartPoint& x, const Vec& v) const override {
    Tensor4 d2g = manifold_->d2metric(x);
    Mat H = -u_->d_qq(t, x);
    for (int a = 0; a < dim(); ++a)
      for (int b = 0; b < dim(); ++b) H(a, b) += 0.5 * v.dot(d2g[a][b] * v);
    return H;
  }
  double d_t(double t, const ChartPoint& x, const Vec&) const override {
    return -u_->d_t(t, x);
  }
  Vec d_tv(double, const ChartPoint&, const Vec&) const override {
    return Vec::Zero(dim());
  }

  const Potential& potential() const { return *u_; }

 private:
  PotentialPtr u_;
};

// L = |v|^4_q / 4.
class QuarticLagrangian final : public Lagrangian {
 public:
  explicit QuarticLagrangian(ManifoldPtr m) : Lagrangian(std::move(m)) {}
  std::string name() const override { return "quartic"; }
  bool analytic_derivatives() const override { return true; }

  double eval(double, const ChartPoint& x, const Vec& v) const override {
    double s = v.dot(manifold_->metric(x) * v);
    return 0.25 * s * s;
  }
  Vec d_v(double, const ChartPoint& x, const Vec& v) const override {
    Mat g = manifold_->metric(x);
    return v.dot(g * v) * (g * v);
  }
  Mat d_vv(double, const ChartPoint& x, const Vec& v) const override {
    Mat g = manifold_->metric(x);
    Vec gv = g * v;
    return 2.0 * gv * gv.transpose() + v.dot(gv) * g;
  }
  Vec d_q(double, const ChartPoint& x, const Vec& v) const override {
    Mat g = manifold_->metric(x);
    Tensor3 dg = manifold_->dmetric(x);
    double s = v.dot(g * v);
    Vec out(dim());
    for (int a = 0; a < dim(); ++a) out[a] = 0.5 * s * v.dot(dg[a] * v);
    return out;
  }
  Mat d_qv(double, const ChartPoint& x, const Vec& v) const override {
    Mat g = manifold_->metric(x);
    Tensor3 dg = manifold_->dmetric(x);
    double s = v.dot(g * v);
    Vec gv = g * v;
    Mat M(dim(), dim());
    for (int a = 0; a < dim(); ++a) {
      double sa = v.dot(dg[a] * v);
      M.row(a) = (sa * gv + s * (dg[a] * v)).transpose();
    }
    return M;
  }
  Mat d_qq(double, const ChartPoint& x, const Vec& v) const override {
    Mat g = manifold_->metric(x);
    Tensor3 dg = manifold_->dmetric(x);
    Tensor4 d2g = manifold_->d2metric(x);
    double s = v.dot(g * v);
    Mat H(dim(), dim());
    for (int a = 0; a < dim(); ++a)
      for (int b = 0; b < dim(); ++b) {
        double sa = v.dot(dg[a] * v), sb = v.dot(dg[b] * v);
        H(a, b) = 0.5 * sa * sb + 0.5 * s * v.dot(d2g[a][b] * v);
      }
    return H;
  }
  Vec d_tv(double, const ChartPoint&, const Vec&) const override {
    return Vec::Zero(dim());
  }
};

// c * L for a positive constant c.
class ScaledLagrangian final : public Lagrangian {
 public:
  ScaledLagrangian(LagrangianPtr base, double c)
      : Lagrangian(base->manifold_ptr()), base_(std::move(base)), c_(c) {
    require(c_ > 0.0, "scale factor must be positive");
  }
  std::string name() const override { return "scaled(" + base_->name() + ")"; }
  bool autonomous() const override { return base_->autonomous(); }
  bool analytic_derivatives() const override {
    return base_->analytic_derivatives();
  }
  double eval(double t, const ChartPoint& x, const Vec& v) const override {
    return c_ * base_->eval(t, x, v);
  }
  Vec d_v(double t, const ChartPoint& x, const Vec& v) const override {
    return c_ * base_->d_v(t, x, v);
  }
  Vec d_q(double t, const ChartPoint& x, const Vec& v) const override {
    return c_ * base_->d_q(t, x, v);
  }
  double d_t(double t, const ChartPoint& x, const Vec& v) const override {
    return c_ * base_->d_t(t, x, v);
  }
  Mat d_vv(double t, const ChartPoint& x, const Vec& v) const override {
    return c_ * base_->d_vv(t, x, v);
  }
  Mat d_qv(double t, const ChartPoint& x, const Vec& v) const override {
    return c_ * base_->d_qv(t, x, v);
  }
  Mat d_qq(double t, const ChartPoint& x, const Vec& v) const override {
    return c_ * base_->d_qq(t, x, v);
  }
  Vec d_tv(double t, const ChartPoint& x, const Vec& v) const override {
    return c_ * base_->d_tv(t, x, v);
  }

 private:
  LagrangianPtr base_;
  double c_;
};

// ---------------------------------------------------------------------------
// Hamiltonian interface. Flows only need first derivatives.

class Hamiltonian {
 public:
  explicit Hamiltonian(ManifoldPtr m) : manifold_(std::move(m)) {}
  virtual ~Hamiltonian() = default;

  virtual std::string name() const = 0;
  const Manifold& manifold() const { return *manifold_; }
  const ManifoldPtr& manifold_ptr() const { return manifold_; }
  int dim() const { return manifold_->dim(); }
  virtual bool autonomous() const { return true; }

  virtual double eval(double t, const ChartPoint& x, const Vec& p) const = 0;

  virtual Vec d_p(double t, const ChartPoint& x, const Vec& p) const {
    int n = dim();
    double h = FdSteps::first(p.norm());
    Vec g(n), e = p;
    for (int i = 0; i < n; ++i) {
      e[i] = p[i] + h;
      double fp = eval(t, x, e);
      e[i] = p[i] - h;
      double fm = eval(t, x, e);
      e[i] = p[i];
      g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
  }

  virtual Vec d_q(double t, const ChartPoint& x, const Vec& p) const {
    int n = dim();
    double h = FdSteps::first(p.norm());
    Vec g(n);
    ChartPoint y = x;
    for (int i = 0; i < n; ++i) {
      y.q[i] = x.q[i] + h;
      double fp = eval(t, y, p);
      y.q[i] = x.q[i] - h;
      double fm = eval(t, y, p);
      y.q[i] = x.q[i];
      g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
  }

  virtual double d_t(double t, const ChartPoint& x, const Vec& p) const {
    if (autonomous()) return 0.0;
    double h = FdSteps::first(p.norm());
    return (eval(t + h, x, p) - eval(t - h, x, p)) / (2.0 * h);
  }

  // DH[Y] where Y is the fiberwise radial (Liouville) field.
  double liouville_pairing(double t, const ChartPoint& x, const Vec& p) const {
    return p.dot(d_p(t, x, p));
  }

  // (qdot, pdot) = (dH/dp, -dH/dq).
  std::pair<Vec, Vec> vector_field(double t, const ChartPoint& x,
                                   const Vec& p) const {
    return {d_p(t, x, p), -d_q(t, x, p)};
  }

 protected:
  ManifoldPtr manifold_;
};

using HamiltonianPtr = std::shared_ptr<const Hamiltonian>;

// DH[Y] - H, the action integrand.
inline double action_integrand(const Hamiltonian& H, double t,
                               const ChartPoint& x, const Vec& p) {
  return H.liouville_pairing(t, x, p) - H.eval(t, x, p);
}

// H = |p|^2_q / 2 + U(t, q).
class MechanicalHamiltonian final : public Hamiltonian {
 public:
  MechanicalHamiltonian(ManifoldPtr m, PotentialPtr u)
      : Hamiltonian(std::move(m)), u_(std::move(u)) {}
  std::string name() const override {
    return "mechanical_dual(" + u_->name() + ")";
  }
  bool autonomous() const override { return u_->autonomous(); }

  double eval(double t, const ChartPoint& x, const Vec& p) const override {
    Mat ginv = manifold_->metric(x).inverse();
    return 0.5 * p.dot(ginv * p) + u_->eval(t, x);
  }
  Vec d_p(double, const ChartPoint& x, const Vec& p) const override {
    return manifold_->metric(x).inverse() * p;
  }
  Vec d_q(double t, const ChartPoint& x, const Vec& p) const override {
    Mat ginv = manifold_->metric(x).inverse();
    Tensor3 dg = manifold_->dmetric(x);
    Vec gp = ginv * p;
    Vec out = u_->d_q(t, x);
    for (int a = 0; a < dim(); ++a) out[a] += -0.5 * gp.dot(dg[a] * gp);
    return out;
  }
  double d_t(double t, const ChartPoint& x, const Vec&) const override {
    return u_->d_t(t, x);
  }

 private:
  PotentialPtr u_;
};

// ---------------------------------------------------------------------------
// Legendre transform by damped Newton on D_vL(t,x,v) = p.

struct LegendreResult {
  Vec v;
  double H = 0.0;
  int iterations = 0;
  double residual = 0.0;
};

inline LegendreResult legendre(const Lagrangian& L, double t,
                               const ChartPoint& x, const Vec& p) {
  const double tol = 1e-10 * (1.0 + p.norm());
  Vec v = L.manifold().metric(x).ldlt().solve(p);
  Vec r = L.d_v(t, x, v) - p;
  LegendreResult out;
  for (int it = 0; it < 50; ++it) {
    if (r.norm() < tol) {
      out.v = v;
      out.H = p.dot(v) - L.eval(t, x, v);
      out.iterations = it;
      out.residual = r.norm();
      return out;
    }
    Mat A = L.d_vv(t, x, v);
    Vec step = A.fullPivLu().solve(-r);
    if (!step.allFinite()) step = -r;
    // Armijo damping on the residual norm.
    double alpha = 1.0;
    double rn = r.norm();
    for (int k = 0; k < 50; ++k) {
      Vec vn = v + alpha * step;
      Vec rn2 = L.d_v(t, x, vn) - p;
      if (rn2.norm() <= (1.0 - 1e-4 * alpha) * rn) {
        v = vn;
        r = rn2;
        break;
      }
      alpha *= 0.5;
      if (k == 49)
        throw std::runtime_error(
            "legendre: damped Newton stalled (L1/L2 violated on region?)");
    }
  }
  if (r.norm() < tol) {
    out.v = v;
    out.H = p.dot(v) - L.eval(t, x, v);
    out.iterations = 50;
    out.residual = r.norm();
    return out;
  }
  throw std::runtime_error("legendre: no convergence in 50 Newton steps");
}

// Fenchel dual of a Lagrangian, evaluated through the Legendre solve. The
// envelope identities give the derivatives: dH/dp = v*, dH/dq = -dL/dq(v*).
class FenchelDualHamiltonian final : public Hamiltonian {
 public:
  explicit FenchelDualHamiltonian(LagrangianPtr L)
      : Hamiltonian(L->manifold_ptr()), L_(std::move(L)) {}
  std::string name() const override { return "dual(" + L_->name() + ")"; }
  bool autonomous() const override { return L_->autonomous(); }

  double eval(double t, const ChartPoint& x, const Vec& p) const override {
    return legendre(*L_, t, x, p).H;
  }
  Vec d_p(double t, const ChartPoint& x, const Vec& p) const override {
    return legendre(*L_, t, x, p).v;
  }
  Vec d_q(double t, const ChartPoint& x, const Vec& p) const override {
    return -L_->d_q(t, x, legendre(*L_, t, x, p).v);
  }
  double d_t(double t, const ChartPoint& x, const Vec& p) const override {
    if (autonomous()) return 0.0;
    return -L_->d_t(t, x, legendre(*L_, t, x, p).v);
  }
  const Lagrangian& primal() const { return *L_; }

 private:
  LagrangianPtr L_;
};

// ---------------------------------------------------------------------------
// Expression-tree models: scalar formulas in t, q1..qn and v1..vn (p1..pn for
// Hamiltonians), with + - * / ^ and elementary functions. Derivatives
// fall back to finite differences.

namespace expr {

struct Env {
  double t = 0.0;
  const Vec* q = nullptr;
  const Vec* fiber = nullptr;  // v or p
};

class Node {
 public:
  virtual ~Node() = default;
  virtual double eval(const Env& e) const = 0;
};

using NodePtr = std::shared_ptr<const Node>;

class ConstNode final : public Node {
 public:
  explicit ConstNode(double v) : v_(v) {}
  double eval(const Env&) const override { return v_; }

 private:
  double v_;
};

class VarNode final : public Node {
 public:
  // kind: 0 = t, 1 = q_i, 2 = fiber_i
  VarNode(int kind, int index) : kind_(kind), index_(index) {}
  double eval(const Env& e) const override {
    switch (kind_) {
      case 0: return e.t;
      case 1: return (*e.q)[index_];
      default: return (*e.fiber)[index_];
    }
  }

 private:
  int kind_, index_;
};

class BinaryNode final : public Node {
 public:
  BinaryNode(char op, NodePtr a, NodePtr b)
      : op_(op), a_(std::move(a)), b_(std::move(b)) {}
  double eval(const Env& e) const override {
    double x = a_->eval(e), y = b_->eval(e);
    switch (op_) {
      case '+': return x + y;
      case '-': return x - y;
      case '*': return x * y;
      case '/': return x / y;
      default: return std::pow(x, y);
    }
  }

 private:
  char op_;
  NodePtr a_, b_;
};

class CallNode final : public Node {
 public:
  CallNode(double (*f)(double), NodePtr a) : f_(f), a_(std::move(a)) {}
  double eval(const Env& e) const override { return f_(a_->eval(e)); }

 private:
  double (*f_)(double);
  NodePtr a_;
};

class Parser {
 public:
  Parser(std::string src, int n, char fiber_letter)
      : src_(std::move(src)), n_(n), fiber_(fiber_letter) {}

  NodePtr parse() {
    NodePtr e = sum();
    skip_ws();
    require(pos_ == src_.size(), "expression: trailing characters at '" +
                                     src_.substr(pos_) + "'");
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < src_.size() && std::isspace((unsigned char)src_[pos_]))
      ++pos_;
  }
  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr sum() {
    NodePtr e = term();
    for (;;) {
      if (accept('+'))
        e = std::make_shared<BinaryNode>('+', e, term());
      else if (accept('-'))
        e = std::make_shared<BinaryNode>('-', e, term());
      else
        return e;
    }
  }
  NodePtr term() {
    NodePtr e = power();
    for (;;) {
      if (accept('*'))
        e = std::make_shared<BinaryNode>('*', e, power());
      else if (accept('/'))
        e = std::make_shared<BinaryNode>('/', e, power());
      else
        return e;
    }
  }
  NodePtr power() {
    NodePtr e = unary();
    if (accept('^'))
      return std::make_shared<BinaryNode>('^', e, power());  // right assoc
    return e;
  }
  NodePtr unary() {
    if (accept('-'))
      return std::make_shared<BinaryNode>(
          '-', std::make_shared<ConstNode>(0.0), unary());
    accept('+');
    return primary();
  }
  NodePtr primary() {
    skip_ws();
    require(pos_ < src_.size(), "expression: unexpected end");
    char c = src_[pos_];
    if (std::isdigit((unsigned char)c) || c == '.') {
      size_t used = 0;
      double v = std::stod(src_.substr(pos_), &used);
      pos_ += used;
      return std::make_shared<ConstNode>(v);
    }
    if (c == '(') {
      ++pos_;
      NodePtr e = sum();
      require(accept(')'), "expression: missing ')'");
      return e;
    }
    require(std::isalpha((unsigned char)c), "expression: bad token");
    size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum((unsigned char)src_[pos_]) || src_[pos_] == '_'))
      ++pos_;
    std::string id = src_.substr(start, pos_ - start);
    if (accept('(')) {
      NodePtr arg = sum();
      require(accept(')'), "expression: missing ')' after " + id);
      static const std::map<std::string, double (*)(double)> fns = {
          {"sin", std::sin},   {"cos", std::cos},   {"tan", std::tan},
          {"exp", std::exp},   {"log", std::log},   {"sqrt", std::sqrt},
          {"abs", std::fabs},  {"sinh", std::sinh}, {"cosh", std::cosh},
          {"tanh", std::tanh}, {"atan", std::atan}, {"asin", std::asin},
          {"acos", std::acos}};
      auto it = fns.find(id);
      require(it != fns.end(), "expression: unknown function " + id);
      return std::make_shared<CallNode>(it->second, arg);
    }
    if (id == "t") return std::make_shared<VarNode>(0, 0);
    if (id == "pi") return std::make_shared<ConstNode>(M_PI);
    if (id.size() >= 2 && (id[0] == 'q' || id[0] == fiber_)) {
      int k = std::atoi(id.c_str() + 1);
      require(k >= 1 && k <= n_, "expression: index out of range in " + id);
      return std::make_shared<VarNode>(id[0] == 'q' ? 1 : 2, k - 1);
    }
    if (n_ == 1 && (id == "q" || id == std::string(1, fiber_)))
      return std::make_shared<VarNode>(id == "q" ? 1 : 2, 0);
    throw std::runtime_error("expression: unknown identifier " + id);
  }

  std::string src_;
  size_t pos_ = 0;
  int n_;
  char fiber_;
};

}  // namespace expr

class ExpressionLagrangian final : public Lagrangian {
 public:
  ExpressionLagrangian(ManifoldPtr m, const std::string& formula)
      : Lagrangian(std::move(m)),
        formula_(formula),
        root_(expr::Parser(formula, manifold_->dim(), 'v').parse()),
        autonomous_(formula.find('t') == std::string::npos ||
                    probe_time_independence()) {}

  std::string name() const override { return "expr(" + formula_ + ")"; }
  bool autonomous() const override { return autonomous_; }

  double eval(double t, const ChartPoint& x, const Vec& v) const override {
    expr::Env e{t, &x.q, &v};
    return root_->eval(e);
  }

 private:
  bool probe_time_independence() const {
    // "t" may appear inside identifiers like "sqrt"; probe numerically.
    Vec q = Vec::Constant(manifold_->dim(), 0.37);
    Vec v = Vec::Constant(manifold_->dim(), 0.71);
    expr::Env e0{0.123, &q, &v}, e1{0.877, &q, &v};
    return root_->eval(e0) == root_->eval(e1);
  }

  std::string formula_;
  expr::NodePtr root_;
  bool autonomous_;
};

class ExpressionHamiltonian final : public Hamiltonian {
 public:
  ExpressionHamiltonian(ManifoldPtr m, const std::string& formula)
      : Hamiltonian(std::move(m)),
        formula_(formula),
        root_(expr::Parser(formula, manifold_->dim(), 'p').parse()),
        autonomous_(formula.find('t') == std::string::npos ||
                    probe_time_independence()) {}

  std::string name() const override { return "expr(" + formula_ + ")"; }
  bool autonomous() const override { return autonomous_; }

  double eval(double t, const ChartPoint& x, const Vec& p) const override {
    expr::Env e{t, &x.q, &p};
    return root_->eval(e);
  }

 private:
  bool probe_time_independence() const {
    Vec q = Vec::Constant(manifold_->dim(), 0.37);
    Vec p = Vec::Constant(manifold_->dim(), 0.71);
    expr::Env e0{0.123, &q, &p}, e1{0.877, &q, &p};
    return root_->eval(e0) == root_->eval(e1);
  }

  std::string formula_;
  expr::NodePtr root_;
  bool autonomous_;
};

// ---------------------------------------------------------------------------
// Registry.

struct ModelSpec {
  std::string name;        // free | mechanical | quartic | pendulum | expression
  std::string potential;   // zero | cos | cos2
  double epsilon;
  std::string expression;

  ModelSpec(std::string model = "mechanical", std::string pot = "cos",
            double eps = 0.0, std::string expr = "")
      : name(std::move(model)),
        potential(std::move(pot)),
        epsilon(eps),
        expression(std::move(expr)) {}
};

inline PotentialPtr make_potential(const std::string& name, int n,
                                   double epsilon) {
  if (name == "zero" || epsilon == 0.0) return std::make_shared<ZeroPotential>(n);
  if (name == "cos") return std::make_shared<CosinePotential>(n, epsilon);
  if (name == "cos2") {
    require(n == 2, "potential cos2 needs a 2-dimensional manifold");
    return std::make_shared<CosinePotential>(2, epsilon);
  }
  throw std::invalid_argument("unknown potential: " + name);
}

inline LagrangianPtr make_lagrangian(const ModelSpec& spec, ManifoldPtr m) {
  int n = m->dim();
  if (spec.name == "free")
    return std::make_shared<MechanicalLagrangian>(
        std::move(m), std::make_shared<ZeroPotential>(n));
  if (spec.name == "mechanical")
    return std::make_shared<MechanicalLagrangian>(
        std::move(m), make_potential(spec.potential, n, spec.epsilon));
  if (spec.name == "quartic")
    return std::make_shared<QuarticLagrangian>(std::move(m));
  if (spec.name == "pendulum") {
    require(n == 1, "pendulum lives on the circle");
    return std::make_shared<MechanicalLagrangian>(
        std::move(m), std::make_shared<CosinePotential>(1, -1.0));
  }
  if (spec.name == "expression")
    return std::make_shared<ExpressionLagrangian>(std::move(m),
                                                  spec.expression);
  throw std::invalid_argument("unknown lagrangian: " + spec.name);
}

inline HamiltonianPtr make_hamiltonian(const ModelSpec& spec, ManifoldPtr m) {
  int n = m->dim();
  if (spec.name == "free")
    return std::make_shared<MechanicalHamiltonian>(
        std::move(m), std::make_shared<ZeroPotential>(n));
  if (spec.name == "mechanical")
    return std::make_shared<MechanicalHamiltonian>(
        std::move(m), make_potential(spec.potential, n, spec.epsilon));
  if (spec.name == "expression")
    return std::make_shared<ExpressionHamiltonian>(std::move(m),
                                                   spec.expression);
  if (spec.name == "dual" || spec.name == "pendulum" || spec.name == "quartic")
    return std::make_shared<FenchelDualHamiltonian>(
        make_lagrangian(spec.name == "dual"
                            ? ModelSpec{"mechanical", spec.potential,
                                        spec.epsilon, spec.expression}
                            : spec,
                        std::move(m)));
  throw std::invalid_argument("unknown hamiltonian: " + spec.name);
}

}  // namespace tonelli
