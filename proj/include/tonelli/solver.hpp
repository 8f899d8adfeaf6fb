// Critical-point solvers on discrete path spaces: preconditioned descent,
// damped Newton refinement, family minimax, inertia-based Morse indices, and
// the certified end-to-end pipeline that runs descent on a quadratically
// modified model and hands certificates back on the original one.
#pragma once

#include <tonelli/checks.hpp>
#include <tonelli/dynamics.hpp>
#include <tonelli/families.hpp>
#include <tonelli/modification.hpp>
#include <tonelli/pathspace.hpp>

#include <lapacke.h>

#include <algorithm>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tonelli {

// ---------------------------------------------------------------------------
// Records

struct IndexPair {
  int m = -1;       // eigenvalues below -kappa
  int m_star = -1;  // eigenvalues at or below +kappa
  int m_fine = -1;
  int m_star_fine = -1;
  bool stable = false;  // coarse and doubled-mesh counts agree
};

struct CriticalPointRecord {
  DiscretePath path;
  double action_value = 0.0;     // on the model the solver ran on
  double action_original = 0.0;  // on the unmodified model
  double grad_dual_norm = 0.0;
  double conormal = 0.0;
  double max_speed = 0.0;
  IndexPair index;
  Certificate certificate;
  bool converged = false;
  int iterations = 0;
  int family_degree = -1;
  std::string provenance;
};

struct DescentOptions {
  double descent_tol = 1e-3;  // dual-norm handoff to Newton
  double newton_tol = 1e-10;
  long max_iterations = 50000;
  double armijo_c = 1e-4;
  // Raw Tonelli descent is only safe for pure minimization; a finite cap
  // aborts the run as soon as any segment outruns it so the caller can
  // restart on a modified model.
  double speed_cap = std::numeric_limits<double>::infinity();
};

struct NewtonOptions {
  double tol = 1e-10;  // terminal dual gradient norm
  int max_steps = 50;
  int max_damping = 30;
};

struct IndexOptions {
  double kappa_rel = 1e-8;
  bool check_refined = true;
};

struct SpeedCapBreach : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Step helpers

namespace detail {

inline void apply_step(DiscretePath& p, const Vec& dir, double scale) {
  int n = p.dim();
  for (int i = 0; i <= p.N; ++i) {
    p.nodes[i].q += scale * dir.segment(i * n, n);
    p.nodes[i] = p.manifold->rebase(p.nodes[i]);
  }
}

inline std::optional<double> try_action(const Lagrangian& L,
                                        const DiscretePath& p) {
  try {
    return action(L, p);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::optional<GradientResult> try_gradient(const Lagrangian& L,
                                                  const DiscretePath& p,
                                                  const BoundaryCondition& bc) {
  try {
    return gradient(L, p, bc);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

inline double path_max_speed(const DiscretePath& p) {
  double worst = 0.0;
  for (const auto& s : precompute_segments(p))
    worst = std::max(worst,
                     std::sqrt(s.v.dot(p.manifold->metric(s.mid) * s.v)));
  return worst;
}

// Doubles the mesh by inserting each segment's chart midpoint.
inline DiscretePath refine_mesh(const DiscretePath& p) {
  auto segs = precompute_segments(p);
  DiscretePath f{p.manifold, 2 * p.N, {}};
  f.nodes.reserve(2 * p.N + 1);
  for (int i = 0; i < p.N; ++i) {
    f.nodes.push_back(p.nodes[i]);
    f.nodes.push_back(p.manifold->rebase(segs[i].mid));
  }
  f.nodes.push_back(p.nodes[p.N]);
  return f;
}

// ---------------------------------------------------------------------------
// Damped Newton refinement on the constrained system. Expects a start within
// the basin (dual gradient norm around 1e-3 or less); backtracks on the dual
// norm and falls over to a preconditioned descent step whenever the reduced
// Hessian is singular or the Newton direction stalls.

inline CriticalPointRecord refine_newton(const Lagrangian& L,
                                         const BoundaryCondition& bc,
                                         const DiscretePath& start,
                                         const NewtonOptions& opts = {}) {
  CriticalPointRecord rec;
  rec.path = start;
  rec.provenance = "newton";
  validate_path(rec.path);

  GradientResult g = gradient(L, rec.path, bc);
  for (int step = 0; step < opts.max_steps; ++step) {
    if (g.dual_norm < opts.tol) {
      rec.converged = true;
      break;
    }
    rec.iterations = step + 1;

    Mat H = hessian(L, rec.path, bc);
    Mat Z = constraint_embedding(rec.path, bc);
    Eigen::FullPivLU<Mat> lu(H);
    bool moved = false;

    if (lu.isInvertible()) {
      Vec delta = lu.solve(-g.reduced);
      if (delta.allFinite()) {
        Vec full = Z * delta;
        double t = 1.0;
        for (int k = 0; k < opts.max_damping; ++k, t *= 0.5) {
          DiscretePath trial = rec.path;
          detail::apply_step(trial, full, t);
          auto gt = detail::try_gradient(L, trial, bc);
          if (gt && gt->dual_norm < g.dual_norm) {
            rec.path = std::move(trial);
            g = *gt;
            moved = true;
            break;
          }
        }
      }
    }

    if (!moved) {
      // Singular or unproductive Hessian: one Armijo descent step on the
      // action along the Riesz direction.
      double a = action(L, rec.path);
      double t = 1.0;
      for (int k = 0; k < opts.max_damping; ++k, t *= 0.5) {
        DiscretePath trial = rec.path;
        detail::apply_step(trial, g.riesz, -t);
        auto at = detail::try_action(L, trial);
        if (at && *at <= a - 1e-4 * t * g.dual_norm * g.dual_norm) {
          rec.path = std::move(trial);
          g = gradient(L, rec.path, bc);
          moved = true;
          break;
        }
      }
    }
    if (!moved) break;
  }

  if (!rec.converged && g.dual_norm < opts.tol) rec.converged = true;
  rec.grad_dual_norm = g.dual_norm;
  rec.action_value = action(L, rec.path);
  rec.action_original = rec.action_value;
  rec.conormal = conormal_residual(bc, L, rec.path);
  rec.max_speed = path_max_speed(rec.path);
  return rec;
}

// ---------------------------------------------------------------------------
// Preconditioned minimization: W^{1,2} Riesz descent with Armijo backtracking
// until the dual gradient norm clears the Newton handoff threshold, then the
// damped Newton polish above.

inline CriticalPointRecord minimize(const Lagrangian& L,
                                    const BoundaryCondition& bc,
                                    const DiscretePath& seed,
                                    const DescentOptions& opts = {}) {
  DiscretePath p = seed;
  validate_path(p);
  double a = action(L, p);
  double warm = 1.0;
  long iters = 0;

  while (iters < opts.max_iterations) {
    GradientResult g = gradient(L, p, bc);
    if (g.dual_norm < opts.descent_tol) break;
    ++iters;

    bool accepted = false;
    double step = std::min(warm * 2.0, 1e6);
    while (step > 1e-16) {
      DiscretePath trial = p;
      detail::apply_step(trial, g.riesz, -step);
      auto at = detail::try_action(L, trial);
      if (at && *at <= a - opts.armijo_c * step * g.dual_norm * g.dual_norm) {
        p = std::move(trial);
        a = *at;
        warm = step;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    if (path_max_speed(p) > opts.speed_cap)
      throw SpeedCapBreach(
          "descent drove a segment past the speed cap; restart on a "
          "modified model");
  }

  NewtonOptions nopts;
  nopts.tol = opts.newton_tol;
  CriticalPointRecord rec = refine_newton(L, bc, p, nopts);
  rec.iterations += int(iters);
  rec.provenance = "minimize";
  return rec;
}

// ---------------------------------------------------------------------------
// Morse indices by symmetric-indefinite inertia. dsytrf's block-diagonal
// factor carries the eigenvalue signs; no spectral decomposition is needed.

namespace detail {

inline int negative_inertia(Mat A) {
  int n = int(A.rows());
  std::vector<lapack_int> ipiv(n);
  lapack_int info = LAPACKE_dsytrf(LAPACK_COL_MAJOR, 'L', n, A.data(),
                                   std::max(n, 1), ipiv.data());
  require(info >= 0, "symmetric factorization failed");
  int neg = 0;
  for (int i = 0; i < n;) {
    if (ipiv[i] > 0) {
      if (A(i, i) < 0.0) ++neg;
      ++i;
    } else {
      double a = A(i, i), b = A(i + 1, i), c = A(i + 1, i + 1);
      double mean = 0.5 * (a + c);
      double disc = std::sqrt(std::max(0.0, mean * mean - (a * c - b * b)));
      if (mean + disc < 0.0) ++neg;
      if (mean - disc < 0.0) ++neg;
      i += 2;
    }
  }
  return neg;
}

inline std::pair<int, int> shifted_inertia(const Mat& H, double kappa) {
  int n = int(H.rows());
  Mat id = Mat::Identity(n, n);
  int m = negative_inertia(H + kappa * id);
  int m_star = negative_inertia(H - kappa * id);
  return {m, m_star};
}

}  // namespace detail

inline IndexPair morse_index(const Lagrangian& L, const BoundaryCondition& bc,
                             const DiscretePath& p,
                             const IndexOptions& opts = {}) {
  IndexPair out;
  Mat H = hessian(L, p, bc);
  double kappa = opts.kappa_rel * H.norm();
  std::tie(out.m, out.m_star) = detail::shifted_inertia(H, kappa);

  if (opts.check_refined) {
    DiscretePath fine = refine_mesh(p);
    Mat Hf = hessian(L, fine, bc);
    double kf = opts.kappa_rel * Hf.norm();
    std::tie(out.m_fine, out.m_star_fine) = detail::shifted_inertia(Hf, kf);
    out.stable = (out.m == out.m_fine) && (out.m_star == out.m_star_fine);
  } else {
    out.m_fine = out.m;
    out.m_star_fine = out.m_star;
    out.stable = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Family minimax. All members take one preconditioned descent step per round
// with a shared Armijo step length chosen against the family maximum, so the
// max-level log never increases. The argmax member is extracted by Newton as
// soon as its dual gradient is small, and the extraction is accepted only
// when the inertia bracket [m, m*] contains the family degree; otherwise the
// point is cached as rejected and the deformation continues.

struct MinimaxOptions {
  double stagnation_tol = 1e-8;
  int stagnation_window = 50;
  long max_rounds = 5000;
  // Extraction basin gate. The argmax member of a family that crosses a
  // saddle transversally passes through its Newton basin quickly, while the
  // transverse instability of the ridge amplifies roundoff underneath it;
  // a wide gate with per-round attempts wins that race. Rejected critical
  // points (wrong inertia bracket) suppress re-attempts within cache_radius
  // so the argmax can travel past a pinned maximum without thrashing.
  double extract_tol = 0.1;
  double cache_radius = 0.05;
  int max_extractions = 200;
  double armijo_c = 1e-4;
  NewtonOptions newton{};
  IndexOptions index{};
};

struct MinimaxResult {
  CriticalPointRecord record;
  double level = 0.0;
  std::vector<double> max_log;
  std::vector<DiscretePath> family_snapshot;
  int rounds = 0;
  bool extracted = false;
};

namespace detail {

// Per-member cache of the reduced W^{1,2} Gram factor. On flat manifolds
// with a path-independent constraint embedding one factor serves every
// member for the whole run; otherwise a factor is reused until the member
// has drifted far enough to degrade it as a preconditioner.
class GramCache {
 public:
  GramCache(const Manifold& m, const BoundaryCondition& bc,
            double refresh_distance)
      : refresh_(refresh_distance) {
    bool flat = true;
    for (double off : {0.0, 0.31, -0.47}) {
      Tensor3 G = m.christoffel({0, Vec::Constant(m.dim(), off)});
      for (const auto& Gk : G)
        if (Gk.norm() > 1e-13) flat = false;
    }
    shareable_ = flat && bc.kind() != BoundaryCondition::Kind::Product &&
                 bc.kind() != BoundaryCondition::Kind::General;
  }

  const Eigen::LLT<Mat>& factor(std::size_t member, const DiscretePath& p,
                                const BoundaryCondition& bc) {
    if (shareable_) {
      if (shared_.rows() == 0) {
        Mat Z = constraint_embedding(p, bc);
        shared_llt_.compute(Z.transpose() * w12_gram(p) * Z);
        require(shared_llt_.info() == Eigen::Success,
                "W^{1,2} Gram matrix is not positive definite");
        shared_ = Z;
      }
      return shared_llt_;
    }
    if (member >= slots_.size()) slots_.resize(member + 1);
    Slot& s = slots_[member];
    bool stale = s.anchor.empty();
    if (!stale) {
      for (int i = 0; i <= p.N && !stale; ++i)
        stale = p.manifold->distance(s.anchor[i], p.nodes[i]) > refresh_;
    }
    if (stale) {
      Mat Z = constraint_embedding(p, bc);
      s.llt.compute(Z.transpose() * w12_gram(p) * Z);
      require(s.llt.info() == Eigen::Success,
              "W^{1,2} Gram matrix is not positive definite");
      s.anchor = p.nodes;
    }
    return s.llt;
  }

 private:
  struct Slot {
    Eigen::LLT<Mat> llt;
    std::vector<ChartPoint> anchor;
  };
  double refresh_;
  bool shareable_ = false;
  Mat shared_;
  Eigen::LLT<Mat> shared_llt_;
  std::vector<Slot> slots_;
};

}  // namespace detail

inline MinimaxResult minimax(const Lagrangian& L0, const BoundaryCondition& bc,
                             const SweepFamily& family,
                             const MinimaxOptions& opts = {}) {
  require(dynamic_cast<const ModifiedLagrangian*>(&L0) != nullptr,
          "minimax deforms families only on a modified model; minimize is "
          "the raw-model entry point");
  require(!family.members.empty(), "minimax needs a nonempty family");
  std::vector<DiscretePath> mem = family.members;
  std::vector<double> act(mem.size());
  for (std::size_t i = 0; i < mem.size(); ++i) {
    validate_path(mem[i]);
    act[i] = action(L0, mem[i]);
  }

  detail::GramCache cache(*mem[0].manifold, bc, 0.05);
  auto argmax = [&] {
    std::size_t top = 0;
    for (std::size_t i = 1; i < mem.size(); ++i)
      if (act[i] > act[top]) top = i;
    return top;
  };

  MinimaxResult out;
  std::vector<DiscretePath> rejected;
  auto near_rejected = [&](const DiscretePath& p) {
    for (const auto& r : rejected)
      if (family_path_distance(r, p) < opts.cache_radius) return true;
    return false;
  };
  int attempts = 0;
  double warm = 1.0;
  bool done = false;

  for (long round = 0; round < opts.max_rounds && !done; ++round) {
    std::size_t top = argmax();
    out.max_log.push_back(act[top]);
    out.rounds = int(round) + 1;
    if (act[top] < -1e10)
      throw std::runtime_error(
          "family maximum diverged; the family does not obstruct descent");

    std::size_t w = std::size_t(opts.stagnation_window);
    if (out.max_log.size() > w &&
        out.max_log[out.max_log.size() - 1 - w] - act[top] <
            opts.stagnation_tol)
      break;

    // Member-wise Riesz directions against cached Gram factors.
    std::vector<Vec> dirs(mem.size());
    std::vector<double> slopes(mem.size());
    for (std::size_t i = 0; i < mem.size(); ++i) {
      Vec d = action_node_derivative(L0, mem[i]);
      Mat Z = constraint_embedding(mem[i], bc);
      Vec dr = Z.transpose() * d;
      Vec z = cache.factor(i, mem[i], bc).solve(dr);
      dirs[i] = Z * z;
      slopes[i] = std::max(0.0, dr.dot(z));
    }

    if (attempts < opts.max_extractions &&
        slopes[top] < opts.extract_tol * opts.extract_tol * 10.0 &&
        !near_rejected(mem[top])) {
      GradientResult g = gradient(L0, mem[top], bc);
      if (g.dual_norm < opts.extract_tol) {
        ++attempts;
        CriticalPointRecord cand =
            refine_newton(L0, bc, mem[top], opts.newton);
        if (cand.converged && !near_rejected(cand.path)) {
          IndexPair ip = morse_index(L0, bc, cand.path, opts.index);
          if (ip.m <= family.degree && family.degree <= ip.m_star) {
            cand.index = ip;
            cand.family_degree = family.degree;
            cand.provenance = family.name;
            out.record = std::move(cand);
            out.level = out.record.action_value;
            out.extracted = true;
            done = true;
            break;
          }
          rejected.push_back(cand.path);
        }
      }
    }

    // Shared Armijo step on the family maximum.
    double step = std::min(warm * 2.0, 1e6);
    bool accepted = false;
    while (step > 1e-16) {
      std::vector<DiscretePath> trial = mem;
      std::vector<double> ta(mem.size());
      bool valid = true;
      double newmax = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < mem.size() && valid; ++i) {
        detail::apply_step(trial[i], dirs[i], -step);
        auto a = detail::try_action(L0, trial[i]);
        if (!a) {
          valid = false;
          break;
        }
        ta[i] = *a;
        newmax = std::max(newmax, ta[i]);
      }
      if (valid && newmax <= act[top] - opts.armijo_c * step * slopes[top]) {
        mem = std::move(trial);
        act = std::move(ta);
        warm = step;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) warm = std::max(warm * 0.5, 1e-12);
  }

  if (!done) {
    std::size_t top = argmax();
    CriticalPointRecord cand = refine_newton(L0, bc, mem[top], opts.newton);
    cand.index = morse_index(L0, bc, cand.path, opts.index);
    cand.family_degree = family.degree;
    cand.provenance = family.name;
    out.record = std::move(cand);
    out.level = out.record.action_value;
    out.extracted = out.record.converged;
  }
  out.family_snapshot = std::move(mem);
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

struct PipelineOptions {
  SampleSpec tonelli{};
  FlowGridSpec flow{};
  DescentOptions descent{};
  MinimaxOptions minimax{};
  IndexOptions index{};
  double distinct_c0 = 1e-4;
  double distinct_action = 1e-6;
  std::uint64_t mod_seed = 2026;  // sampling seed for the modification build
  // Called at the start of each pipeline stage; callers use it for timing
  // and for attributing errors to the stage that raised them.
  std::function<void(const std::string&)> stage_hook;
};

struct FamilyOutcome {
  std::string name;
  int degree = 0;
  double level = 0.0;
  int rounds = 0;
  bool extracted = false;
  std::vector<double> max_log;
};

struct PipelineResult {
  TonelliReport tonelli;
  ReachableSetEstimate reachable;
  double A = 0.0, C1 = 0.0, R_A = 0.0, R = 0.0;
  double lambda = 0.0, mu = 0.0;
  double family_max_speed = 0.0;
  std::vector<FamilyOutcome> families;
  std::vector<CriticalPointRecord> records;      // certified, sorted by action
  std::vector<CriticalPointRecord> uncertified;  // reported, not counted
};

namespace detail {

inline bool same_solution(const CriticalPointRecord& a,
                          const CriticalPointRecord& b, double c0_tol,
                          double action_tol) {
  if (std::abs(a.action_original - b.action_original) > action_tol)
    return false;
  if (a.path.N != b.path.N) return false;
  return family_path_distance(a.path, b.path) <= c0_tol;
}

}  // namespace detail

inline PipelineResult solve_pipeline(LagrangianPtr L,
                                     const BoundaryCondition& bc,
                                     const std::vector<SweepFamily>& families,
                                     const PipelineOptions& opts = {}) {
  require(L != nullptr, "pipeline needs a model");
  require(!families.empty(), "pipeline needs at least one family");

  auto stage = [&](const char* name) {
    if (opts.stage_hook) opts.stage_hook(name);
  };

  PipelineResult out;
  stage("tonelli-screen");
  out.tonelli = check_tonelli(*L, opts.tonelli);
  require(out.tonelli.l2_pass, "model fails the superlinearity screen");
  require(out.tonelli.l1_pass || out.tonelli.l1_fail_at_zero_only,
          "model fails the fiber convexity screen");
  out.C1 = out.tonelli.c_of_k.at(0);

  double max_action = -std::numeric_limits<double>::infinity();
  for (const auto& f : families)
    for (const auto& m : f.members) {
      validate_path(m);
      require(bc.constraint_residual(*m.manifold, m.nodes.front(),
                                     m.nodes.back()) < 1e-8,
              "family member violates the boundary condition");
      max_action = std::max(max_action, action(*L, m));
      out.family_max_speed = std::max(out.family_max_speed, path_max_speed(m));
    }
  out.A = max_action + 1.0;

  stage("reachable-set");
  out.reachable = estimate_R_A(*L, out.A, out.C1, opts.flow);
  out.R_A = out.reachable.R_A;
  out.R = 1.5 * std::max(out.R_A, out.family_max_speed);

  stage("modification");
  LagrangianModification mod =
      build_lagrangian_modification(L, out.R, out.C1, opts.mod_seed);
  out.lambda = mod.lambda;
  out.mu = mod.mu;
  const Lagrangian& L0 = *mod.model;

  stage("deformation");
  std::vector<CriticalPointRecord> found;
  for (const auto& f : families) {
    FamilyOutcome fo;
    fo.name = f.name;
    fo.degree = f.degree;
    CriticalPointRecord rec;
    if (f.degree == 0) {
      std::size_t best = 0;
      double best_a = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < f.members.size(); ++i) {
        double a = action(L0, f.members[i]);
        if (a < best_a) {
          best_a = a;
          best = i;
        }
      }
      rec = minimize(L0, bc, f.members[best], opts.descent);
      rec.index = morse_index(L0, bc, rec.path, opts.index);
      fo.level = rec.action_value;
      fo.rounds = rec.iterations;
      fo.extracted = rec.converged;
    } else {
      MinimaxOptions mo = opts.minimax;
      mo.index = opts.index;
      MinimaxResult mr = minimax(L0, bc, f, mo);
      rec = mr.record;
      fo.level = mr.level;
      fo.rounds = mr.rounds;
      fo.extracted = mr.extracted;
      fo.max_log = std::move(mr.max_log);
    }
    rec.family_degree = f.degree;
    rec.provenance = f.name;
    found.push_back(std::move(rec));
    out.families.push_back(std::move(fo));
  }

  // Certification against the original model, then indices on it: below the
  // certified speed the two models share their 2-jet, so the inertia there
  // is the original one.
  stage("certification");
  for (auto& rec : found) {
    rec.certificate = certify_solution(*L, mod, rec.path, out.R_A);
    rec.action_original = action(*L, rec.path);
    rec.conormal = conormal_residual(bc, *L, rec.path);
    rec.max_speed = rec.certificate.max_speed;
    rec.index = morse_index(*L, bc, rec.path, opts.index);
  }

  std::stable_sort(found.begin(), found.end(),
                   [](const CriticalPointRecord& a,
                      const CriticalPointRecord& b) {
                     return a.action_original < b.action_original;
                   });

  std::vector<CriticalPointRecord> kept;
  auto quality = [](const CriticalPointRecord& r) {
    return (r.converged ? 2 : 0) + (r.certificate.certified ? 1 : 0);
  };
  for (auto& rec : found) {
    bool dup = false;
    for (auto& k : kept)
      if (detail::same_solution(k, rec, opts.distinct_c0,
                                opts.distinct_action)) {
        dup = true;
        if (quality(rec) > quality(k)) k = rec;
        break;
      }
    if (!dup) kept.push_back(std::move(rec));
  }
  for (auto& rec : kept) {
    if (rec.converged && rec.certificate.certified)
      out.records.push_back(std::move(rec));
    else
      out.uncertified.push_back(std::move(rec));
  }
  return out;
}

}  // namespace tonelli
