// Scenario harness: reproducible run configurations, the desk-scale scenario
// registry with its expectation tables, manifest assembly with per-stage
// timing, report and plot-data emission, and the cross-module property suite.
#pragma once

#include <tonelli/solver.hpp>

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tonelli {

// ---------------------------------------------------------------------------
// Configuration

struct FamilySpec {
  std::string kind;  // constant-seed | torus-translation | torus-grid |
                     // sphere-arc | sphere-detour | sphere-wrap
  int count = 33;    // members (per axis for grid kinds)
  int axis = 0;      // swept coordinate for torus-translation
  double other = 0.5;       // pinned coordinate for torus-translation
  double psi_max = 1.2;     // tilt half-range for the sphere sweeps
  std::vector<double> at;   // base point for constant-seed
};

inline void to_json(nlohmann::json& j, const FamilySpec& f) {
  j = nlohmann::json{{"kind", f.kind},   {"count", f.count},
                     {"axis", f.axis},   {"other", f.other},
                     {"psi_max", f.psi_max}, {"at", f.at}};
}

inline void from_json(const nlohmann::json& j, FamilySpec& f) {
  f.kind = j.at("kind").get<std::string>();
  f.count = j.value("count", 33);
  f.axis = j.value("axis", 0);
  f.other = j.value("other", 0.5);
  f.psi_max = j.value("psi_max", 1.2);
  f.at = j.value("at", std::vector<double>{});
}

struct SolverTolerances {
  double newton = 1e-10;      // terminal dual gradient norm
  double handoff = 1e-3;      // descent-to-Newton switch
  double stagnation = 1e-8;   // family-max stagnation threshold
  double distinct_c0 = 1e-4;  // record dedup: node distance
  double distinct_action = 1e-6;
};

inline void to_json(nlohmann::json& j, const SolverTolerances& t) {
  j = nlohmann::json{{"newton", t.newton},
                     {"handoff", t.handoff},
                     {"stagnation", t.stagnation},
                     {"distinct_c0", t.distinct_c0},
                     {"distinct_action", t.distinct_action}};
}

inline void from_json(const nlohmann::json& j, SolverTolerances& t) {
  SolverTolerances d;
  t.newton = j.value("newton", d.newton);
  t.handoff = j.value("handoff", d.handoff);
  t.stagnation = j.value("stagnation", d.stagnation);
  t.distinct_c0 = j.value("distinct_c0", d.distinct_c0);
  t.distinct_action = j.value("distinct_action", d.distinct_action);
}

struct ScenarioConfig {
  std::string scenario;
  std::string manifold = "torus2";
  std::string model = "mechanical";
  std::string potential = "cos2";
  double epsilon = 0.1;
  std::string expression;  // formula for model = "expression"
  std::string bc = "periodic";  // periodic | neumann | fixed
  double theta = 0.0;  // endpoint separation for symmetric sphere problems
  int mesh = 128;
  std::uint64_t seed = 2026;
  std::string out_dir;  // empty: resolved against the output root
  std::vector<FamilySpec> families;
  SolverTolerances tolerances;
};

inline void to_json(nlohmann::json& j, const ScenarioConfig& c) {
  j = nlohmann::json{{"scenario", c.scenario},
                     {"manifold", c.manifold},
                     {"model", c.model},
                     {"potential", c.potential},
                     {"epsilon", c.epsilon},
                     {"expression", c.expression},
                     {"bc", c.bc},
                     {"theta", c.theta},
                     {"mesh", c.mesh},
                     {"seed", c.seed},
                     {"out_dir", c.out_dir},
                     {"families", c.families},
                     {"tolerances", c.tolerances}};
}

inline void from_json(const nlohmann::json& j, ScenarioConfig& c) {
  ScenarioConfig d;
  c.scenario = j.value("scenario", d.scenario);
  c.manifold = j.value("manifold", d.manifold);
  c.model = j.value("model", d.model);
  c.potential = j.value("potential", d.potential);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.expression = j.value("expression", d.expression);
  c.bc = j.value("bc", d.bc);
  c.theta = j.value("theta", d.theta);
  c.mesh = j.value("mesh", d.mesh);
  c.seed = j.value("seed", d.seed);
  c.out_dir = j.value("out_dir", d.out_dir);
  c.families = j.value("families", std::vector<FamilySpec>{});
  c.tolerances = j.value("tolerances", d.tolerances);
}

// FNV-1a over the canonical (sorted-key) serialization.
inline std::string config_hash(const ScenarioConfig& c) {
  std::string s = nlohmann::json(c).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// ---------------------------------------------------------------------------
// Expectation tables

struct ExpectationTable {
  int min_found = 0;      // certified + uncertified records
  int min_certified = 0;  // certified records
  std::vector<int> index_multiset;  // exact multiset of indices m, when set
  std::vector<double> actions;      // expected actions in ascending order
  double action_abs_tol = -1.0;     // absolute action tolerance when >= 0
  double action_rel_tol = -1.0;     // relative action tolerance when >= 0
  double action_gap_tol = 1e-9;     // certified |A_model - A_base| bound
  double conormal_tol = -1.0;       // endpoint residual bound when >= 0
  bool strictly_increasing_actions = false;
};

inline void to_json(nlohmann::json& j, const ExpectationTable& e) {
  j = nlohmann::json{
      {"min_found", e.min_found},
      {"min_certified", e.min_certified},
      {"index_multiset", e.index_multiset},
      {"actions", e.actions},
      {"action_abs_tol", e.action_abs_tol},
      {"action_rel_tol", e.action_rel_tol},
      {"action_gap_tol", e.action_gap_tol},
      {"conormal_tol", e.conormal_tol},
      {"strictly_increasing_actions", e.strictly_increasing_actions}};
}

inline void from_json(const nlohmann::json& j, ExpectationTable& e) {
  ExpectationTable d;
  e.min_found = j.value("min_found", d.min_found);
  e.min_certified = j.value("min_certified", d.min_certified);
  e.index_multiset = j.value("index_multiset", std::vector<int>{});
  e.actions = j.value("actions", std::vector<double>{});
  e.action_abs_tol = j.value("action_abs_tol", d.action_abs_tol);
  e.action_rel_tol = j.value("action_rel_tol", d.action_rel_tol);
  e.action_gap_tol = j.value("action_gap_tol", d.action_gap_tol);
  e.conormal_tol = j.value("conormal_tol", d.conormal_tol);
  e.strictly_increasing_actions =
      j.value("strictly_increasing_actions", d.strictly_increasing_actions);
}

struct ExpectationVerdict {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline std::vector<ExpectationVerdict> check_expectations(
    const PipelineResult& res, const ExpectationTable& exp) {
  std::vector<ExpectationVerdict> out;
  auto fmt = [](double x) {
    std::ostringstream os;
    os << std::setprecision(12) << x;
    return os.str();
  };

  {
    ExpectationVerdict v{"certified-records", true, ""};
    double worst_gap = 0.0, worst_speed = 0.0;
    for (const auto& r : res.records) {
      if (!r.certificate.certified || !r.converged) v.pass = false;
      worst_gap = std::max(worst_gap, std::abs(r.certificate.action_gap));
      worst_speed = std::max(worst_speed, r.max_speed);
      if (r.max_speed >= res.R) v.pass = false;
      if (std::abs(r.certificate.action_gap) > exp.action_gap_tol)
        v.pass = false;
    }
    v.detail = std::to_string(res.records.size()) + " certified, worst gap " +
               fmt(worst_gap) + ", worst speed " + fmt(worst_speed) +
               " vs R = " + fmt(res.R);
    out.push_back(v);
  }

  if (exp.min_found > 0) {
    int found = int(res.records.size() + res.uncertified.size());
    out.push_back({"found-count", found >= exp.min_found,
                   std::to_string(found) + " found, needed " +
                       std::to_string(exp.min_found)});
  }
  if (exp.min_certified > 0) {
    int cert = int(res.records.size());
    out.push_back({"certified-count", cert >= exp.min_certified,
                   std::to_string(cert) + " certified, needed " +
                       std::to_string(exp.min_certified)});
  }
  if (!exp.index_multiset.empty()) {
    std::vector<int> got;
    for (const auto& r : res.records) got.push_back(r.index.m);
    std::vector<int> want = exp.index_multiset;
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    std::ostringstream os;
    os << "indices {";
    for (int g : got) os << " " << g;
    os << " }, expected {";
    for (int w : want) os << " " << w;
    os << " }";
    out.push_back({"index-multiset", got == want, os.str()});
  }
  if (!exp.actions.empty()) {
    ExpectationVerdict v{"action-values", true, ""};
    if (res.records.size() != exp.actions.size()) {
      v.pass = false;
      v.detail = std::to_string(res.records.size()) + " records vs " +
                 std::to_string(exp.actions.size()) + " expected actions";
    } else {
      double worst = 0.0;
      for (std::size_t k = 0; k < exp.actions.size(); ++k) {
        double tol = exp.action_abs_tol >= 0.0
                         ? exp.action_abs_tol
                         : exp.action_rel_tol * std::abs(exp.actions[k]);
        double err = std::abs(res.records[k].action_original - exp.actions[k]);
        worst = std::max(worst, err - tol);
        if (err > tol) v.pass = false;
      }
      v.detail = "worst excess over tolerance " + fmt(worst);
    }
    out.push_back(v);
  }
  if (exp.strictly_increasing_actions) {
    bool inc = true;
    for (std::size_t k = 1; k < res.records.size(); ++k)
      inc = inc && res.records[k].action_original >
                       res.records[k - 1].action_original;
    out.push_back({"strictly-increasing-actions", inc,
                   std::to_string(res.records.size()) + " actions compared"});
  }
  if (exp.conormal_tol >= 0.0) {
    ExpectationVerdict v{"endpoint-conormal", true, ""};
    double worst = 0.0;
    for (const auto& r : res.records) {
      worst = std::max(worst, r.conormal);
      if (r.conormal >= exp.conormal_tol) v.pass = false;
    }
    v.detail = "worst residual " + fmt(worst) + " vs bound " +
               fmt(exp.conormal_tol);
    out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scenario assembly

inline BoundaryCondition build_boundary(const ScenarioConfig& cfg,
                                        ManifoldPtr m) {
  int n = m->dim();
  if (cfg.bc == "periodic") return BoundaryCondition::periodic(n);
  if (cfg.bc == "neumann") return BoundaryCondition::neumann(n);
  if (cfg.bc == "fixed") {
    require(cfg.manifold == "sphere2" && cfg.theta > 0.0,
            "fixed boundary configs are keyed to a symmetric sphere "
            "separation; set manifold=sphere2 and theta > 0");
    auto [a, b] = sphere_symmetric_endpoints(m, cfg.theta);
    return BoundaryCondition::fixed_endpoints(n, a, b);
  }
  throw std::invalid_argument("unknown boundary condition: " + cfg.bc);
}

inline SweepFamily build_family(const FamilySpec& f, ManifoldPtr m,
                                const ScenarioConfig& cfg) {
  if (f.kind == "constant-seed") {
    require(int(f.at.size()) == m->dim(),
            "constant-seed family needs a base point of manifold dimension");
    Vec q = Eigen::Map<const Vec>(f.at.data(), int(f.at.size()));
    return constant_seed_family(m, ChartPoint{0, q}, cfg.mesh);
  }
  if (f.kind == "torus-translation")
    return torus_translation_family(m, f.axis, f.other, f.count, cfg.mesh);
  if (f.kind == "torus-grid")
    return torus_constant_grid_family(m, f.count, cfg.mesh);
  if (f.kind == "sphere-arc") return sphere_arc_seed(m, cfg.theta, cfg.mesh);
  if (f.kind == "sphere-detour")
    return sphere_detour_family(m, cfg.theta, f.count, f.psi_max, cfg.mesh);
  if (f.kind == "sphere-wrap")
    return sphere_wrap_family(m, cfg.theta, f.count, f.psi_max, cfg.mesh);
  throw std::invalid_argument("unknown family kind: " + f.kind);
}

inline PipelineOptions pipeline_options(const ScenarioConfig& cfg) {
  PipelineOptions opts;
  opts.tonelli.seed = cfg.seed;
  opts.flow.seed = cfg.seed + 1;
  opts.mod_seed = cfg.seed + 2;
  opts.descent.newton_tol = cfg.tolerances.newton;
  opts.descent.descent_tol = cfg.tolerances.handoff;
  opts.minimax.newton.tol = cfg.tolerances.newton;
  opts.minimax.stagnation_tol = cfg.tolerances.stagnation;
  opts.distinct_c0 = cfg.tolerances.distinct_c0;
  opts.distinct_action = cfg.tolerances.distinct_action;
  return opts;
}

// ---------------------------------------------------------------------------
// Manifest

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunManifest {
  std::string config_hash;
  ScenarioConfig config;
  PipelineResult result;
  std::vector<ExpectationVerdict> expectations;
  std::vector<StageTiming> timings;  // sidecar only: wall clock varies
  bool pass = false;
};

inline RunManifest run_scenario(const ScenarioConfig& cfg,
                                const ExpectationTable& expect = {}) {
  RunManifest man;
  man.config = cfg;
  man.config_hash = config_hash(cfg);

  std::string current = "setup";
  auto t_last = std::chrono::steady_clock::now();
  auto close_stage = [&]() {
    auto now = std::chrono::steady_clock::now();
    if (!current.empty())
      man.timings.push_back(
          {current, std::chrono::duration<double>(now - t_last).count()});
    t_last = now;
  };

  try {
    ManifoldPtr m = make_manifold(cfg.manifold);
    LagrangianPtr L = make_lagrangian(
        {cfg.model, cfg.potential, cfg.epsilon, cfg.expression}, m);
    BoundaryCondition bc = build_boundary(cfg, m);
    require(!cfg.families.empty(), "config lists no families");
    std::vector<SweepFamily> fams;
    for (const auto& fs : cfg.families)
      fams.push_back(build_family(fs, m, cfg));

    PipelineOptions opts = pipeline_options(cfg);
    opts.stage_hook = [&](const std::string& s) {
      close_stage();
      current = s;
    };
    man.result = solve_pipeline(L, bc, fams, opts);
    close_stage();
    current = "expectation-check";
    man.expectations = check_expectations(man.result, expect);
    close_stage();
    current.clear();
  } catch (const std::exception& e) {
    throw std::runtime_error("scenario " +
                             (cfg.scenario.empty() ? "<config>" : cfg.scenario) +
                             " failed at stage " + current + ": " + e.what());
  }

  man.pass = true;
  for (const auto& v : man.expectations) man.pass = man.pass && v.pass;
  return man;
}

// ---------------------------------------------------------------------------
// Serialization of results

inline nlohmann::json index_to_json(const IndexPair& ip) {
  return {{"m", ip.m},
          {"m_star", ip.m_star},
          {"m_fine", ip.m_fine},
          {"m_star_fine", ip.m_star_fine},
          {"stable", ip.stable}};
}

inline nlohmann::json certificate_to_json(const Certificate& c) {
  return {{"certified", c.certified},
          {"max_speed", c.max_speed},
          {"R_A", c.R_A},
          {"R", c.R},
          {"action_original", c.action_original},
          {"action_modified", c.action_modified},
          {"action_gap", c.action_gap},
          {"witness", c.witness}};
}

inline nlohmann::json record_to_json(const CriticalPointRecord& r,
                                     bool certified_flag) {
  return {{"certified", certified_flag},
          {"action", r.action_original},
          {"action_model", r.action_value},
          {"dual_norm", r.grad_dual_norm},
          {"conormal", r.conormal},
          {"max_speed", r.max_speed},
          {"index", index_to_json(r.index)},
          {"certificate", certificate_to_json(r.certificate)},
          {"converged", r.converged},
          {"iterations", r.iterations},
          {"family_degree", r.family_degree},
          {"provenance", r.provenance},
          {"path", path_to_json(r.path)}};
}

inline nlohmann::json tonelli_to_json(const TonelliReport& t) {
  return {{"ell0", t.ell0},
          {"ell0_away", t.ell0_away},
          {"l1_verdict", t.l1_verdict()},
          {"c_of_k", t.c_of_k},
          {"l2_pass", t.l2_pass},
          {"l3_pass", t.l3_pass},
          {"max_asymmetry", t.max_asymmetry},
          {"samples", t.sample_description},
          {"verdict", t.verdict}};
}

inline nlohmann::json manifest_to_json(const RunManifest& man) {
  nlohmann::json j;
  j["config"] = man.config;
  j["config_hash"] = man.config_hash;
  j["tonelli"] = tonelli_to_json(man.result.tonelli);
  j["constants"] = {{"A", man.result.A},       {"C1", man.result.C1},
                    {"R_A", man.result.R_A},   {"R", man.result.R},
                    {"lambda", man.result.lambda}, {"mu", man.result.mu},
                    {"family_max_speed", man.result.family_max_speed}};
  j["reachable"] = {{"margin", man.result.reachable.margin},
                    {"max_observed", man.result.reachable.max_observed},
                    {"seed_radius", man.result.reachable.seed_radius},
                    {"seed_count", man.result.reachable.seed_count},
                    {"grid", man.result.reachable.grid_description}};
  j["families"] = nlohmann::json::array();
  for (const auto& f : man.result.families)
    j["families"].push_back({{"name", f.name},
                             {"degree", f.degree},
                             {"level", f.level},
                             {"rounds", f.rounds},
                             {"extracted", f.extracted},
                             {"max_log", f.max_log}});
  j["records"] = nlohmann::json::array();
  for (const auto& r : man.result.records)
    j["records"].push_back(record_to_json(r, true));
  j["uncertified"] = nlohmann::json::array();
  for (const auto& r : man.result.uncertified)
    j["uncertified"].push_back(record_to_json(r, false));
  j["expectations"] = nlohmann::json::array();
  for (const auto& v : man.expectations)
    j["expectations"].push_back(
        {{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
  j["pass"] = man.pass;
  return j;
}

inline nlohmann::json timings_to_json(const RunManifest& man) {
  nlohmann::json j;
  j["stages"] = nlohmann::json::array();
  double total = 0.0;
  for (const auto& t : man.timings) {
    j["stages"].push_back({{"stage", t.stage}, {"seconds", t.seconds}});
    total += t.seconds;
  }
  j["total_seconds"] = total;
  return j;
}

// ---------------------------------------------------------------------------
// Report emission: one manifest document, line-delimited records, a
// human-readable summary, and plot-data tables. Wall-clock numbers go to a
// sidecar so that machine-readable output is byte-identical across reruns.

namespace detail {

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << body;
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::vector<double> segment_speeds(const DiscretePath& p) {
  auto segs = precompute_segments(p);
  std::vector<double> out;
  out.reserve(segs.size());
  for (const auto& s : segs)
    out.push_back(std::sqrt(s.v.dot(p.manifold->metric(s.mid) * s.v)));
  return out;
}

}  // namespace detail

inline std::vector<std::string> emit_report(const RunManifest& man,
                                            const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "plots");
  std::vector<std::string> written;
  auto emit = [&](const fs::path& rel, const std::string& body) {
    std::string full = (fs::path(dir) / rel).string();
    detail::write_text_file(full, body);
    written.push_back(full);
  };

  emit("manifest.json", manifest_to_json(man).dump(2) + "\n");

  {
    std::ostringstream os;
    for (const auto& r : man.result.records)
      os << record_to_json(r, true).dump() << "\n";
    for (const auto& r : man.result.uncertified)
      os << record_to_json(r, false).dump() << "\n";
    emit("records.jsonl", os.str());
  }

  {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "scenario "
       << (man.config.scenario.empty() ? "<config>" : man.config.scenario)
       << "  (config " << man.config_hash << ")\n";
    os << "model " << man.config.model << "/" << man.config.potential
       << " eps=" << man.config.epsilon << " on " << man.config.manifold
       << ", bc=" << man.config.bc << ", mesh N=" << man.config.mesh
       << ", seed=" << man.config.seed << "\n";
    os << "screen: " << man.result.tonelli.verdict << "\n";
    os << "constants: A=" << man.result.A << " C1=" << man.result.C1
       << " R_A=" << man.result.R_A << " R=" << man.result.R
       << " lambda=" << man.result.lambda << " mu=" << man.result.mu << "\n";
    os << "families:\n";
    for (const auto& f : man.result.families)
      os << "  " << f.name << "  degree " << f.degree << "  level " << f.level
         << "  rounds " << f.rounds << "  "
         << (f.extracted ? "extracted" : "not extracted") << "\n";
    os << "solutions (" << man.result.records.size() << " certified, "
       << man.result.uncertified.size() << " uncertified):\n";
    os << "  action  m  m*  speed  conormal  gap  provenance\n";
    for (const auto& r : man.result.records)
      os << "  " << r.action_original << "  " << r.index.m << "  "
         << r.index.m_star << "  " << r.max_speed << "  " << r.conormal
         << "  " << r.certificate.action_gap << "  " << r.provenance << "\n";
    for (const auto& r : man.result.uncertified)
      os << "  " << r.action_original << "  [UNCERTIFIED]  " << r.provenance
         << "\n";
    os << "expectations:\n";
    for (const auto& v : man.expectations)
      os << "  " << (v.pass ? "PASS" : "FAIL") << "  " << v.name << "  ("
         << v.detail << ")\n";
    os << "verdict: " << (man.pass ? "PASS" : "FAIL") << "\n";
    emit("report.txt", os.str());
  }

  {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "# columns: record\taction\tm\tm_star\tcertified\tprovenance\n";
    int k = 0;
    for (const auto& r : man.result.records)
      os << k++ << "\t" << r.action_original << "\t" << r.index.m << "\t"
         << r.index.m_star << "\t1\t" << r.provenance << "\n";
    for (const auto& r : man.result.uncertified)
      os << k++ << "\t" << r.action_original << "\t" << r.index.m << "\t"
         << r.index.m_star << "\t0\t" << r.provenance << "\n";
    emit(fs::path("plots") / "action_vs_index.tsv", os.str());
  }

  {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "# columns: family\tround\tfamily_max\n";
    for (const auto& f : man.result.families)
      for (std::size_t r = 0; r < f.max_log.size(); ++r)
        os << f.name << "\t" << r << "\t" << f.max_log[r] << "\n";
    emit(fs::path("plots") / "family_max.tsv", os.str());
  }

  {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "# R_A = " << man.result.R_A << "\tR = " << man.result.R << "\n";
    os << "# columns: record\tt_mid\tspeed\n";
    int k = 0;
    for (const auto& r : man.result.records) {
      auto sp = detail::segment_speeds(r.path);
      for (std::size_t i = 0; i < sp.size(); ++i)
        os << k << "\t" << (double(i) + 0.5) / double(r.path.N) << "\t"
           << sp[i] << "\n";
      ++k;
    }
    emit(fs::path("plots") / "speed_profiles.tsv", os.str());
  }

  emit("timings.json", timings_to_json(man).dump(2) + "\n");
  return written;
}

// ---------------------------------------------------------------------------
// Scenario registry: fixture files under the scenario directory, one JSON
// document per scenario holding the config, the expectation table, and a
// note recording where the expected numbers come from.

struct Scenario {
  ScenarioConfig config;
  ExpectationTable expect;
  std::string source;
};

inline std::string scenario_dir() {
  if (const char* e = std::getenv("TONELLI_SCENARIO_DIR")) return e;
#ifdef TONELLI_SCENARIO_ROOT
  return TONELLI_SCENARIO_ROOT;
#else
  return "scenarios";
#endif
}

inline std::string output_root() {
  if (const char* e = std::getenv("TONELLI_OUTPUT_ROOT")) return e;
  return "runs";
}

inline Scenario load_scenario_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open scenario file: " + path);
  nlohmann::json j = nlohmann::json::parse(is);
  Scenario s;
  s.config = j.at("config").get<ScenarioConfig>();
  s.expect = j.value("expect", ExpectationTable{});
  s.source = j.value("source", std::string{});
  return s;
}

inline std::vector<std::string> known_scenarios(
    const std::string& dir = scenario_dir()) {
  namespace fs = std::filesystem;
  std::vector<std::string> names;
  if (!fs::is_directory(dir)) return names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json")
      names.push_back(e.path().stem().string());
  std::sort(names.begin(), names.end());
  return names;
}

inline Scenario load_scenario(const std::string& name,
                              const std::string& dir = scenario_dir()) {
  namespace fs = std::filesystem;
  fs::path p = fs::path(dir) / (name + ".json");
  if (!fs::is_regular_file(p)) {
    std::string msg = "unknown scenario '" + name + "'";
    auto names = known_scenarios(dir);
    if (!names.empty()) {
      msg += "; known:";
      for (const auto& n : names) msg += " " + n;
    }
    msg += " (scenario dir: " + dir + ")";
    throw std::runtime_error(msg);
  }
  return load_scenario_file(p.string());
}

// ---------------------------------------------------------------------------
// Property suite

struct PropertyVerdict {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline bool all_pass(const std::vector<PropertyVerdict>& v) {
  for (const auto& r : v)
    if (!r.pass) return false;
  return true;
}

inline std::string verdict_table(const std::vector<PropertyVerdict>& v) {
  std::ostringstream os;
  for (const auto& r : v)
    os << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  (" << r.detail
       << ")\n";
  os << (all_pass(v) ? "all checks passed" : "CHECK FAILURES PRESENT") << "\n";
  return os.str();
}

// Observed convergence orders of the action's directional difference
// quotients against the assembled gradient and hessian, over a decade-spaced
// step ladder. Returns the worst order seen on each ladder.
struct QuotientOrders {
  double gradient = 0.0;
  double hessian = 0.0;
};

inline QuotientOrders action_quotient_orders(const Lagrangian& L,
                                             const DiscretePath& p,
                                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  int n = p.dim();
  auto draw = [&]() {
    VariationVector xi(p.N + 1);
    for (auto& v : xi) {
      v = Vec(n);
      for (int k = 0; k < n; ++k) v[k] = gauss(rng);
    }
    return xi;
  };
  VariationVector xi = draw(), eta = draw();
  Vec xi_flat = flatten(xi), eta_flat = flatten(eta);

  auto shifted = [&](double h) {
    DiscretePath q = p;
    for (int i = 0; i <= p.N; ++i) {
      q.nodes[i].q += h * xi[i];
      q.nodes[i] = q.manifold->rebase(q.nodes[i]);
    }
    return q;
  };

  std::vector<double> hs = {1e-3, 1e-4, 1e-5, 1e-6};
  double base_a = action(L, p);
  Vec base_d = action_node_derivative(L, p);
  double exact_g = base_d.dot(xi_flat);

  Mat H = action_node_hessian(L, p);
  double exact_h = xi_flat.dot(H * eta_flat);

  QuotientOrders out{std::numeric_limits<double>::infinity(),
                     std::numeric_limits<double>::infinity()};
  std::vector<double> ge, he;
  for (double h : hs) {
    DiscretePath q = shifted(h);
    ge.push_back(std::abs((action(L, q) - base_a) / h - exact_g));
    he.push_back(std::abs(
        (action_node_derivative(L, q).dot(eta_flat) - base_d.dot(eta_flat)) /
            h -
        exact_h));
  }
  for (std::size_t k = 0; k + 1 < hs.size(); ++k) {
    out.gradient =
        std::min(out.gradient, std::log10(ge[k] / ge[k + 1]));
    out.hessian = std::min(out.hessian, std::log10(he[k] / he[k + 1]));
  }
  return out;
}

namespace detail {

inline DiscretePath wiggly_torus_path(ManifoldPtr m, int N,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double a1 = 0.05 * uni(rng), a2 = 0.15 * uni(rng), ph = M_PI * uni(rng);
  return make_path_from_function(
      m,
      [&](double t) {
        Vec q(2);
        q << t + a1 * std::sin(2.0 * M_PI * t),
            0.2 + a2 * std::sin(2.0 * M_PI * t + ph);
        return ChartPoint{0, q};
      },
      N);
}

inline DiscretePath sphere_band_path(ManifoldPtr m, int N,
                                     std::uint64_t seed) {
  auto* sph = dynamic_cast<const RoundSphere2*>(m.get());
  require(sph != nullptr, "sphere path needs the round sphere");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double tilt = 0.3 * uni(rng), wob = 0.2 * uni(rng);
  return make_path_from_function(
      m,
      [&](double t) {
        double phi = (0.25 + 0.5 * t) * M_PI + wob * std::sin(2.0 * M_PI * t);
        double az = tilt * std::sin(2.0 * M_PI * t);
        Eigen::Vector3d e(std::sin(phi) * std::cos(az),
                          std::sin(phi) * std::sin(az), -std::cos(phi));
        return sph->project(e);
      },
      N);
}

struct LeakyPsi final : PsiRamp {
  LeakyPsi(double mu, double R, double slope)
      : PsiRamp(mu, R), slope_(slope) {}
  double eval(double s) const override {
    return PsiRamp::eval(s) + slope_ * s;
  }
  double d1(double s) const override { return PsiRamp::d1(s) + slope_; }
  double d2(double s) const override { return PsiRamp::d2(s); }

 private:
  double slope_;
};

}  // namespace detail

inline std::vector<PropertyVerdict> property_suite(
    const std::string& fixture_dir = scenario_dir()) {
  std::vector<PropertyVerdict> out;
  auto fmt = [](double x) {
    std::ostringstream os;
    os << std::setprecision(6) << x;
    return os.str();
  };
  auto torus = build_torus(2);
  auto sphere = build_sphere2();

  {
    struct Case {
      LagrangianPtr L;
      DiscretePath p;
    };
    std::vector<Case> cases;
    for (std::uint64_t s = 1; s <= 5; ++s) {
      cases.push_back({make_lagrangian({"mechanical", "cos2", 0.1}, torus),
                       detail::wiggly_torus_path(torus, 16, s)});
      cases.push_back({make_lagrangian({"quartic"}, torus),
                       detail::wiggly_torus_path(torus, 16, 50 + s)});
      cases.push_back({make_lagrangian({"free"}, sphere),
                       detail::sphere_band_path(sphere, 16, 100 + s)});
    }
    double worst_g = std::numeric_limits<double>::infinity();
    double worst_h = worst_g;
    std::uint64_t seed = 11;
    for (const auto& c : cases) {
      QuotientOrders o = action_quotient_orders(*c.L, c.p, seed++);
      worst_g = std::min(worst_g, o.gradient);
      worst_h = std::min(worst_h, o.hessian);
    }
    out.push_back({"gradient-quotient-order", worst_g >= 0.9,
                   "worst observed order " + fmt(worst_g) + " over " +
                       std::to_string(cases.size()) + " random paths"});
    out.push_back({"hessian-quotient-order", worst_h >= 0.9,
                   "worst observed order " + fmt(worst_h) + " over " +
                       std::to_string(cases.size()) + " random paths"});
  }

  {
    bool pass = true;
    std::string detail;
    for (const auto& spec : std::vector<ModelSpec>{
             {"mechanical", "cos2", 0.1}, {"quartic"}, {"pendulum"}}) {
      auto m = spec.name == "pendulum" ? build_torus(1) : torus;
      TonelliReport rep = check_tonelli(*make_lagrangian(spec, m));
      bool ok = rep.l2_pass && (rep.l1_pass || rep.l1_fail_at_zero_only);
      pass = pass && ok;
      detail += spec.name + ":" + (ok ? "ok " : "FAIL ");
    }
    out.push_back({"growth-screen-zoo", pass, detail});
  }

  SampleSpec mech_spec;
  auto mechL = make_lagrangian({"mechanical", "cos2", 0.1}, torus);
  double mech_c1 = check_tonelli(*mechL, mech_spec).c_of_k.at(0);
  auto quartL = make_lagrangian({"quartic"}, torus);
  double quart_c1 = check_tonelli(*quartL, mech_spec).c_of_k.at(0);

  LagrangianModification mech_mod =
      build_lagrangian_modification(mechL, 5.0, mech_c1);
  LagrangianModification quart_mod =
      build_lagrangian_modification(quartL, 5.0, quart_c1);

  {
    bool pass = true;
    std::string detail;
    for (const auto* mod : {&mech_mod, &quart_mod}) {
      SampleSpec vs;
      vs.v_max = 6.0 * mod->R;
      vs.mag_count = 49;
      vs.q_per_dim = 5;
      vs.extra_dirs = 6;
      vs.t_count = 3;
      vs.seed = 97;
      ModificationReport rep = verify_modification(*mod, vs);
      pass = pass && rep.all_pass;
      detail += mod->base->name() + ":" + (rep.all_pass ? "ok " : "FAIL ");
    }
    out.push_back({"modification-clauses", pass, detail});
  }

  {
    // First-order derivative bound |D_v L0|_{q,*} <= ell2 (1 + |v|_q),
    // fitted on the inner two thirds of the sampled range and verified on
    // all of it.
    bool pass = true;
    double worst = std::numeric_limits<double>::infinity();
    for (const auto* mod : {&mech_mod, &quart_mod}) {
      auto samples = detail::fiber_samples(mod->base->manifold(), true,
                                           mod->base->autonomous(),
                                           6.0 * mod->R, 41, 5, 6, 3, 41);
      double fit = 0.0;
      std::vector<double> ratios;
      for (const auto& s : samples) {
        Mat ginv = mod->base->manifold().metric(s.x).inverse();
        Vec dv = mod->model->d_v(s.t, s.x, s.v);
        double ratio = std::sqrt(dv.dot(ginv * dv)) / (1.0 + s.mag);
        ratios.push_back(ratio);
        if (s.mag <= 4.0 * mod->R) fit = std::max(fit, ratio);
      }
      double ell2 = 1.25 * fit;
      for (double r : ratios) worst = std::min(worst, ell2 - r);
      pass = pass && worst >= 0.0;
    }
    out.push_back({"first-derivative-bound", pass,
                   "worst slack " + fmt(worst) + " against 1.25x inner fit"});
  }

  {
    auto p1 = detail::wiggly_torus_path(torus, 24, 7);
    auto p2 = detail::sphere_band_path(sphere, 24, 8);
    HolderReport h1 = holder_bound_check(p1);
    HolderReport h2 = holder_bound_check(p2);
    out.push_back({"holder-bound", h1.pass && h2.pass,
                   "worst slack " + fmt(std::min(h1.worst_slack,
                                                 h2.worst_slack))});
  }

  {
    PropertyVerdict v{"corrupted-psi-rejected", false, ""};
    try {
      namespace fs = std::filesystem;
      std::string path =
          (fs::path(fixture_dir) / "fixtures" / "corrupted-psi.json").string();
      std::ifstream is(path);
      if (!is) throw std::runtime_error("cannot open fixture: " + path);
      nlohmann::json j = nlohmann::json::parse(is);
      double R = j.at("R").get<double>();
      LagrangianModification bad;
      bad.base = mechL;
      bad.R = R;
      bad.C1 = mech_c1;
      bad.lambda = j.at("lambda").get<double>();
      bad.mu = j.at("mu").get<double>();
      bad.model = std::make_shared<ModifiedLagrangian>(
          mechL, bad.lambda,
          std::make_shared<detail::LeakyPsi>(
              bad.mu, R, j.at("leak_slope").get<double>()));
      SampleSpec vs;
      vs.v_max = 6.0 * R;
      vs.mag_count = 33;
      vs.q_per_dim = 3;
      vs.extra_dirs = 4;
      vs.t_count = 1;
      ModificationReport rep = verify_modification(bad, vs);
      std::string failing;
      for (const auto& c : rep.clauses)
        if (!c.pass) failing += c.clause + " ";
      v.pass = !rep.all_pass && !rep.clause("equal-below-R").pass;
      v.detail = failing.empty() ? "no clause failed (unexpected)"
                                 : "failing clauses: " + failing;
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = e.what();
    }
    out.push_back(v);
  }

  {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> gauss(0.0, 3.0);
    std::uniform_real_distribution<double> uq(0.0, 1.0);
    double worst = 0.0;
    for (const auto& L : {mechL, quartL}) {
      for (int k = 0; k < 500; ++k) {
        Vec q(2), p(2);
        q << uq(rng), uq(rng);
        p << gauss(rng), gauss(rng);
        ChartPoint x{0, q};
        LegendreResult lr = legendre(*L, 0.0, x, p);
        Vec back = L->d_v(0.0, x, lr.v);
        worst = std::max(worst, (back - p).norm() / (1.0 + p.norm()));
      }
    }
    out.push_back({"legendre-roundtrip", worst < 1e-8,
                   "worst relative residual " + fmt(worst) +
                       " on 1000 samples"});
  }

  {
    // Fiberwise duality identity: the Hamiltonian action integrand
    // p . dH/dp - H evaluated at p = D_v L(v) equals L(v).
    auto H = make_hamiltonian({"mechanical", "cos2", 0.1}, torus);
    auto Hq = make_hamiltonian({"quartic"}, torus);
    double worst = 0.0;
    for (int iq = 0; iq < 3; ++iq)
      for (int id = 0; id < 4; ++id)
        for (int im = 1; im <= 8; ++im) {
          Vec q(2);
          q << 0.17 * (iq + 1), 0.29 * (iq + 1);
          double ang = M_PI * id / 4.0;
          Vec u(2);
          u << std::cos(ang), std::sin(ang);
          Vec p = (0.6 * im) * u;
          ChartPoint x{0, q};
          double lhs = action_integrand(*H, 0.0, x, p);
          double rhs = mechL->eval(0.0, x, H->d_p(0.0, x, p));
          worst = std::max(worst, std::abs(lhs - rhs));
          double lhq = action_integrand(*Hq, 0.0, x, p);
          double rhq = quartL->eval(0.0, x, Hq->d_p(0.0, x, p));
          worst = std::max(worst, std::abs(lhq - rhq));
        }
    out.push_back({"duality-pairing-identity", worst < 1e-5,
                   "worst residual " + fmt(worst) + " on radial samples"});
  }

  {
    Vec q(2), v(2);
    q << 0.2, 0.3;
    v << 0.7, -0.4;
    FlowState s0{0.0, {0, q}, v};
    Trajectory traj = integrate_lagrangian(*mechL, s0, 1.0, 1e-10);
    auto energy = [&](const TrajectorySample& s) {
      return s.v.dot(mechL->d_v(s.t, s.x, s.v)) - mechL->eval(s.t, s.x, s.v);
    };
    double drift =
        std::abs(energy(traj.samples.back()) - energy(traj.samples.front()));
    out.push_back({"autonomous-energy-drift", drift < 1e-8,
                   "drift " + fmt(drift) + " over [0,1]"});
  }

  {
    Vec q(2), v(2);
    q << 0.1, 0.45;
    v << 0.5, 0.8;
    auto H = make_hamiltonian({"mechanical", "cos2", 0.1}, torus);
    FlowState sl{0.0, {0, q}, v};
    Vec p = mechL->d_v(0.0, {0, q}, v);
    FlowState sh{0.0, {0, q}, p};
    Trajectory tl = integrate_lagrangian(*mechL, sl, 1.0, 1e-10);
    Trajectory th = integrate_hamiltonian(*H, sh, 1.0, 1e-10);
    double gap = torus->distance(tl.samples.back().x, th.samples.back().x);
    out.push_back({"lagrangian-hamiltonian-agreement", gap < 1e-6,
                   "endpoint distance " + fmt(gap)});
  }

  {
    // Mesh-halving oracle at an exact continuum solution: the discrete
    // gradient's dual norm must shrink at first order or better.
    auto freeS = make_lagrangian({"free"}, sphere);
    auto [a, b] = sphere_symmetric_endpoints(sphere, 1.0);
    auto bc = BoundaryCondition::fixed_endpoints(2, a, b);
    double d24 = gradient(*freeS, sphere_arc_seed(sphere, 1.0, 24).members[0],
                          bc)
                     .dual_norm;
    double d48 = gradient(*freeS, sphere_arc_seed(sphere, 1.0, 48).members[0],
                          bc)
                     .dual_norm;
    double order = std::log2(d24 / d48);
    out.push_back({"mesh-halving-gradient-order", order >= 0.9,
                   "observed order " + fmt(order) + " (dual " + fmt(d24) +
                       " -> " + fmt(d48) + ")"});
  }

  {
    PropertyVerdict v{"hamiltonian-modification-clauses", false, ""};
    try {
      auto circle = build_torus(1);
      auto H = make_hamiltonian({"mechanical", "cos", 1.0}, circle);
      GrowthReport g = check_h1_h2(*H);
      double c0 = g.c0, c1 = g.c1;
      ScalarWitness a{[c0](double s) { return s - c0; },
                      "fitted a(s) = s - c0"};
      ScalarWitness h{[c1](double s) { return s * std::log1p(s) - c1; },
                      "fitted h(s) = s log(1+s) - c1"};
      HamiltonianModification mod =
          build_hamiltonian_modification(H, 5.0, a, h);
      SampleSpec vs;
      vs.v_max = 6.0 * mod.R;
      vs.mag_count = 49;
      vs.q_per_dim = 7;
      vs.extra_dirs = 4;
      vs.t_count = 1;
      ModificationReport rep = verify_hamiltonian_modification(mod, vs);
      double integrand_margin = rep.clause("integrand-lower-bound").margin;
      v.pass = rep.all_pass && integrand_margin >= 0.0;
      v.detail = std::string(rep.all_pass ? "clauses ok" : "clause FAIL") +
                 ", integrand margin " + fmt(integrand_margin);
    } catch (const std::exception& e) {
      v.detail = e.what();
    }
    out.push_back(v);
  }

  return out;
}

}  // namespace tonelli
