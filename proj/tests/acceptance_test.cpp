// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances and runtime budgets are pinned here on purpose.
#include <tonelli/harness.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace tonelli;
namespace fs = std::filesystem;

namespace {

struct Gate {
  std::vector<std::string> lines;
  bool all_ok = true;

  void report(int n, bool ok, const std::string& detail) {
    std::ostringstream os;
    os << (ok ? "PASS" : "FAIL") << " criterion " << n << ": " << detail;
    lines.push_back(os.str());
    all_ok = all_ok && ok;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) return "<missing " + p.string() + ">";
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(4) << x;
  return os.str();
}

// Criterion 1: difference quotients of the action against the assembled
// gradient and Hessian, 5 random paths on each of 3 models, order >= 0.9.
void criterion_1(Gate& gate) {
  auto t0 = std::chrono::steady_clock::now();
  auto torus = build_torus(2);
  auto sphere = build_sphere2();
  std::vector<std::pair<LagrangianPtr, DiscretePath>> cases;
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
  std::uint64_t seed = 311;
  for (const auto& [L, p] : cases) {
    QuotientOrders o = action_quotient_orders(*L, p, seed++);
    worst_g = std::min(worst_g, o.gradient);
    worst_h = std::min(worst_h, o.hessian);
  }
  double secs = seconds_since(t0);
  bool ok = worst_g >= 0.9 && worst_h >= 0.9 && secs < 10.0;
  gate.report(1, ok,
              "gradient/hessian quotient orders " + fmt(worst_g) + "/" +
                  fmt(worst_h) + " (>= 0.9) on 15 random paths in " +
                  fmt(secs) + " s (< 10 s)");
}

// Criterion 2: all modification clauses for R in {1, 5, 20} on the
// mechanical and quartic models; the below-R agreement is node-exact and
// the ramp is C^2 across its two joints to 1e-8.
void criterion_2(Gate& gate) {
  auto t0 = std::chrono::steady_clock::now();
  auto torus = build_torus(2);
  bool ok = true;
  std::string note;
  for (const auto& spec : std::vector<ModelSpec>{
           {"mechanical", "cos2", 0.1}, {"quartic"}}) {
    auto L = make_lagrangian(spec, torus);
    double C1 = check_tonelli(*L).c_of_k.at(0);
    for (double R : {1.0, 5.0, 20.0}) {
      LagrangianModification mod = build_lagrangian_modification(L, R, C1);
      SampleSpec vs;
      vs.v_max = 6.0 * R;
      vs.mag_count = 41;
      vs.q_per_dim = 5;
      vs.extra_dirs = 6;
      vs.t_count = 1;
      vs.seed = 811;
      ModificationReport rep = verify_modification(mod, vs);
      const auto& equal = rep.clause("equal-below-R");
      bool exact = equal.pass && equal.margin == 0.0;
      if (!rep.all_pass || !exact) {
        ok = false;
        note += " [" + spec.name + " R=" + fmt(R) +
                (rep.all_pass ? " below-R not node-exact" : " clause FAIL") +
                "]";
      }
      PsiRamp psi(mod.mu, R);
      double r2 = psi.r_squared();
      for (double seam : {r2, 3.0 * r2}) {
        double eps = 1e-9 * r2;
        // One-sided limits at the seam, reconstructed from each side's own
        // Taylor data so a genuine C^2 joint reads as zero jump.
        double above = psi.eval(seam + eps) - eps * psi.d1(seam + eps) +
                       0.5 * eps * eps * psi.d2(seam + eps);
        double below = psi.eval(seam - eps) + eps * psi.d1(seam - eps) +
                       0.5 * eps * eps * psi.d2(seam - eps);
        double jump_v =
            std::abs(above - below) / (1.0 + std::abs(psi.eval(seam)));
        double jump_1 = std::abs(psi.d1(seam + eps) - psi.d1(seam - eps)) /
                        (1.0 + std::abs(psi.d1(seam)));
        double jump_2 = std::abs(psi.d2(seam + eps) - psi.d2(seam - eps)) /
                        (1.0 + std::abs(psi.d2(seam)));
        if (jump_v > 1e-8 || jump_1 > 1e-8 || jump_2 > 1e-8) {
          ok = false;
          note += " [psi joint at s=" + fmt(seam) + " jumps " + fmt(jump_v) +
                  "/" + fmt(jump_1) + "/" + fmt(jump_2) + "]";
        }
      }
    }
  }
  double secs = seconds_since(t0);
  if (secs >= 5.0) ok = false;
  gate.report(2, ok,
              "modification clauses for R in {1,5,20} on 2 models, node-exact "
              "below R, C2 ramp joints to 1e-8, in " +
                  fmt(secs) + " s (< 5 s)" + note);
}

// Criterion 3: every pipeline record is certified with speed < R and action
// gap < 1e-9; a cutoff radius below the known orbit speed is rejected.
void criterion_3(Gate& gate, const RunManifest& torus_man,
                 const RunManifest& sphere_man) {
  bool ok = true;
  std::string note;
  double worst_gap = 0.0;
  int n_records = 0;

  auto t0 = std::chrono::steady_clock::now();
  for (const RunManifest* man : {&torus_man, &sphere_man})
    for (const auto& rec : man->result.records) {
      ++n_records;
      worst_gap = std::max(worst_gap, std::abs(rec.certificate.action_gap));
      if (!(rec.max_speed < man->result.R) ||
          std::abs(rec.certificate.action_gap) >= 1e-9 ||
          !rec.certificate.certified)
        ok = false;
    }

  auto sphere = build_sphere2();
  auto freeS = make_lagrangian({"free"}, sphere);
  double C1 = check_tonelli(*freeS).c_of_k.at(0);
  LagrangianModification low = build_lagrangian_modification(freeS, 1.0, C1);
  const auto& fast = sphere_man.result.records.back();
  Certificate cert = certify_solution(*freeS, low, fast.path, 0.5);
  if (cert.certified) {
    ok = false;
    note += " [low-R fixture was certified]";
  }
  double secs = seconds_since(t0);
  double per_record = secs / double(n_records + 1);
  if (per_record >= 1.0) ok = false;
  gate.report(3, ok,
              std::to_string(n_records) + " records certified with speed < R, "
              "worst action gap " +
                  fmt(worst_gap) + " (< 1e-9); cutoff below orbit speed -> " +
                  (cert.certified ? "CERTIFIED" : "UNCERTIFIED") + "; " +
                  fmt(per_record) + " s per record (< 1 s)" + note);
}

void criterion_scenario(Gate& gate, int n, const RunManifest& man,
                        double secs, double budget, const std::string& what) {
  std::ostringstream os;
  os << what << ": " << man.result.records.size() << " certified / "
     << man.result.records.size() + man.result.uncertified.size()
     << " found, expectations "
     << (man.pass ? "all PASS" : "FAILED") << ", in " << fmt(secs)
     << " s (< " << fmt(budget) << " s)";
  gate.report(n, man.pass && secs < budget, os.str());
}

// Criterion 7: index stability under mesh doubling and the bracket gap.
void criterion_7(Gate& gate, const std::vector<const RunManifest*>& mans) {
  bool ok = true;
  int count = 0;
  int worst_gap = 0;
  for (const auto* man : mans)
    for (const auto& rec : man->result.records) {
      ++count;
      int gap = rec.index.m_star - rec.index.m;
      worst_gap = std::max(worst_gap, gap);
      if (!rec.index.stable || gap < 0 || gap > 4) ok = false;
      if (rec.index.m_fine != rec.index.m ||
          rec.index.m_star_fine != rec.index.m_star)
        ok = false;
    }
  gate.report(7, ok,
              "indices of " + std::to_string(count) +
                  " records identical under mesh doubling, 0 <= m* - m <= 4 "
                  "(worst gap " +
                  std::to_string(worst_gap) + ")");
}

const PropertyVerdict* find_row(const std::vector<PropertyVerdict>& rows,
                                const std::string& name) {
  for (const auto& r : rows)
    if (r.name == name) return &r;
  return nullptr;
}

void criterion_8(Gate& gate, const std::vector<PropertyVerdict>& rows) {
  bool ok = true;
  std::string note;
  for (const char* name :
       {"legendre-roundtrip", "lagrangian-hamiltonian-agreement",
        "autonomous-energy-drift", "duality-pairing-identity"}) {
    const PropertyVerdict* r = find_row(rows, name);
    if (!r || !r->pass) {
      ok = false;
      note += std::string(" [") + name + (r ? " FAIL" : " missing") + "]";
    }
  }
  gate.report(8, ok,
              "Legendre round-trip < 1e-8 (1000 samples), trajectory "
              "agreement < 1e-6, energy drift < 1e-8, duality identity "
              "< 1e-5" +
                  note);
}

void criterion_9(Gate& gate, const std::vector<PropertyVerdict>& rows) {
  const PropertyVerdict* r = find_row(rows, "hamiltonian-modification-clauses");
  bool ok = r != nullptr && r->pass;
  gate.report(9, ok,
              "momentum-cutoff clauses for |p|^2/2 + cos(2 pi q) at R = 5 "
              "with integrand coercivity margin >= 0" +
                  (r ? " (" + r->detail + ")" : " [row missing]"));
}

// Criterion 10: repeated CLI runs with the same seed produce byte-identical
// machine-readable output.
void criterion_10(Gate& gate) {
#ifdef TONELLI_CLI_PATH
  fs::path root = fs::temp_directory_path() / "tonelli-acceptance";
  fs::remove_all(root);
  fs::path dir_a = root / "a";
  fs::path dir_b = root / "b";
  std::string base = std::string(TONELLI_CLI_PATH) +
                     " scenario torus-periodic --seed 7 --out ";
  int rc_a = std::system((base + dir_a.string() + " > /dev/null 2>&1").c_str());
  int rc_b = std::system((base + dir_b.string() + " > /dev/null 2>&1").c_str());

  bool ok = rc_a == 0 && rc_b == 0;
  std::string note;
  for (const char* rel :
       {"manifest.json", "records.jsonl", "plots/action_vs_index.tsv",
        "plots/family_max.tsv", "plots/speed_profiles.tsv"}) {
    if (slurp(dir_a / rel) != slurp(dir_b / rel)) {
      ok = false;
      note += std::string(" [") + rel + " differs]";
    }
  }
  if (rc_a != 0 || rc_b != 0) note += " [cli exit codes nonzero]";
  fs::remove_all(root);
  gate.report(10, ok,
              "repeated `scenario torus-periodic --seed 7` emits "
              "byte-identical manifest, records, and plot tables" +
                  note);
#else
  gate.report(10, false, "driver path missing from the build");
#endif
}

}  // namespace

int main() {
  Gate gate;

  criterion_1(gate);
  criterion_2(gate);

  auto t4 = std::chrono::steady_clock::now();
  Scenario sc4 = load_scenario("torus-periodic");
  RunManifest man4 = run_scenario(sc4.config, sc4.expect);
  double sec4 = seconds_since(t4);

  auto t5 = std::chrono::steady_clock::now();
  Scenario sc5 = load_scenario("sphere-endpoints");
  RunManifest man5 = run_scenario(sc5.config, sc5.expect);
  double sec5 = seconds_since(t5);

  auto t6 = std::chrono::steady_clock::now();
  Scenario sc6 = load_scenario("torus-neumann");
  RunManifest man6 = run_scenario(sc6.config, sc6.expect);
  double sec6 = seconds_since(t6);

  criterion_3(gate, man4, man5);
  criterion_scenario(gate, 4, man4, sec4, 60.0,
                     "periodic torus desk case at N = 128");
  criterion_scenario(gate, 5, man5, sec5, 120.0,
                     "sphere endpoints desk case at theta = 1");
  criterion_scenario(gate, 6, man6, sec6, 120.0,
                     "free-endpoint desk case with conormal residual < 1e-6");
  criterion_7(gate, {&man4, &man5, &man6});

  auto rows = property_suite();
  criterion_8(gate, rows);
  criterion_9(gate, rows);
  criterion_10(gate);

  for (const auto& line : gate.lines) std::cout << line << "\n";
  std::cout << (gate.all_ok ? "ACCEPTANCE: PASS" : "ACCEPTANCE: FAIL")
            << "\n";
  return gate.all_ok ? 0 : 1;
}
