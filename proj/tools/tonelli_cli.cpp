// Command-line driver: model screening, modification and flow utilities,
// the scenario runner, and the property suite. Exit codes: 0 pass, 1 check
// or expectation failure, 2 usage error, 3 runtime abort.
#include <tonelli/harness.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace tonelli;

struct Args {
  std::vector<std::string> positional;
  std::map<std::string, std::string> flags;

  bool has(const std::string& k) const { return flags.count(k) > 0; }
  std::string get(const std::string& k, const std::string& dflt = "") const {
    auto it = flags.find(k);
    return it == flags.end() ? dflt : it->second;
  }
  double get_num(const std::string& k, double dflt) const {
    auto it = flags.find(k);
    return it == flags.end() ? dflt : std::stod(it->second);
  }
  long get_int(const std::string& k, long dflt) const {
    auto it = flags.find(k);
    return it == flags.end() ? dflt : std::stol(it->second);
  }
};

Args parse_args(int argc, char** argv, int first) {
  Args a;
  for (int i = first; i < argc; ++i) {
    std::string tok = argv[i];
    if (tok.rfind("--", 0) == 0) {
      std::string key = tok.substr(2);
      auto eq = key.find('=');
      if (eq != std::string::npos) {
        a.flags[key.substr(0, eq)] = key.substr(eq + 1);
      } else if (i + 1 < argc) {
        a.flags[key] = argv[++i];
      } else {
        throw std::invalid_argument("flag --" + key + " needs a value");
      }
    } else {
      a.positional.push_back(tok);
    }
  }
  return a;
}

ModelSpec model_spec(const Args& a) {
  return ModelSpec(a.get("model", "mechanical"), a.get("potential", "cos"),
                   a.get_num("epsilon", 0.1), a.get("expression"));
}

ManifoldPtr manifold_arg(const Args& a) {
  return make_manifold(a.get("manifold", "torus2"));
}

std::vector<double> parse_csv(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << j.dump(2) << "\n";
}

int usage() {
  std::cerr <<
      "usage: tonelli <command> [flags]\n"
      "\n"
      "commands:\n"
      "  check-lagrangian   growth/convexity/completeness screen for a model\n"
      "                     [--manifold M] [--model L] [--potential P]\n"
      "                     [--epsilon E] [--out DIR]\n"
      "  modify             build and verify a velocity cutoff\n"
      "                     [model flags] [--R RADIUS] [--seed S] [--out DIR]\n"
      "  flow               integrate the Euler-Lagrange flow\n"
      "                     [model flags] --state q1,..,v1,.. [--t1 T]\n"
      "                     [--tol TOL] [--out DIR]\n"
      "  estimate-ra        a-priori speed bound from flow propagation\n"
      "                     [model flags] --A VALUE [--C1 VALUE]\n"
      "                     [--grid-density D] [--seed S]\n"
      "  solve              run the full pipeline on a config file\n"
      "                     --config FILE [--out DIR] [--seed S] [--mesh N]\n"
      "  index              Morse index of a stored path\n"
      "                     [model flags] --path FILE [--bc periodic|neumann]\n"
      "  scenario NAME      run a registered scenario against its table\n"
      "                     [--out DIR] [--seed S] [--mesh N]\n"
      "  suite              cross-module property checks [--out DIR]\n"
      "\n"
      "Scenario files are read from TONELLI_SCENARIO_DIR when set; reports\n"
      "default to TONELLI_OUTPUT_ROOT (or ./runs) unless --out is given.\n";
  return 2;
}

int cmd_check_lagrangian(const Args& a) {
  auto L = make_lagrangian(model_spec(a), manifold_arg(a));
  SampleSpec spec;
  if (a.has("seed")) spec.seed = std::uint64_t(a.get_int("seed", 2026));
  TonelliReport rep = check_tonelli(*L, spec);
  double fd_err = derivative_consistency(*L);
  bool fd_pass = fd_err < 1e-5;
  std::cout << "model " << L->name() << "\n"
            << "L1 fiber convexity:   " << rep.l1_verdict()
            << "  (ell0 = " << rep.ell0 << ", away from v=0: " << rep.ell0_away
            << ")\n"
            << "L2 superlinearity:    " << (rep.l2_pass ? "PASS" : "FAIL")
            << "  (C(1) = " << rep.c_of_k.at(0) << ")\n"
            << "L3 completeness:      " << (rep.l3_pass ? "PASS" : "FAIL")
            << "\n"
            << "derivative check:     " << (fd_pass ? "PASS" : "FAIL")
            << "  (worst rel err " << fd_err << ")\n"
            << "verdict: " << rep.verdict << "\n";
  if (a.has("out")) {
    std::filesystem::create_directories(a.get("out"));
    write_json_file(a.get("out") + "/screen.json", tonelli_to_json(rep));
  }
  bool usable = rep.l2_pass && (rep.l1_pass || rep.l1_fail_at_zero_only);
  return usable && fd_pass ? 0 : 1;
}

int cmd_modify(const Args& a) {
  auto L = make_lagrangian(model_spec(a), manifold_arg(a));
  double R = a.get_num("R", 5.0);
  std::uint64_t seed = std::uint64_t(a.get_int("seed", 2026));
  double C1 = check_tonelli(*L).c_of_k.at(0);
  LagrangianModification mod = build_lagrangian_modification(L, R, C1, seed);
  SampleSpec spec;
  spec.v_max = 6.0 * R;
  spec.seed = seed + 1;
  ModificationReport rep = verify_modification(mod, spec);
  std::cout << "model " << L->name() << ", R = " << R
            << ", lambda = " << mod.lambda << ", mu = " << mod.mu << "\n"
            << rep.to_string();
  if (a.has("out")) {
    std::filesystem::create_directories(a.get("out"));
    nlohmann::json j{{"R", mod.R},
                     {"C1", mod.C1},
                     {"lambda", mod.lambda},
                     {"mu", mod.mu},
                     {"safety", mod.safety},
                     {"all_pass", rep.all_pass}};
    for (const auto& c : rep.clauses)
      j["clauses"].push_back({{"clause", c.clause},
                              {"pass", c.pass},
                              {"margin", c.margin},
                              {"witness", c.witness}});
    write_json_file(a.get("out") + "/modification.json", j);
  }
  return rep.all_pass ? 0 : 1;
}

int cmd_flow(const Args& a) {
  auto m = manifold_arg(a);
  auto L = make_lagrangian(model_spec(a), m);
  if (!a.has("state"))
    throw std::invalid_argument("flow needs --state q1,..,qn,v1,..,vn");
  std::vector<double> s = parse_csv(a.get("state"));
  int n = m->dim();
  require(int(s.size()) == 2 * n,
          "state needs " + std::to_string(2 * n) + " numbers");
  Vec q(n), v(n);
  for (int i = 0; i < n; ++i) {
    q[i] = s[i];
    v[i] = s[n + i];
  }
  FlowState s0{a.get_num("t0", 0.0), {0, q}, v};
  Trajectory traj = integrate_lagrangian(*L, s0, a.get_num("t1", 1.0),
                                         a.get_num("tol", 1e-9));
  const auto& last = traj.samples.back();
  std::cout << "model " << L->name() << ": " << traj.accepted
            << " accepted steps, " << traj.rejected << " rejected\n"
            << "final t = " << last.t << ", q = [" << last.x.q.transpose()
            << "], |v|_q max = " << traj.max_fiber_norm << "\n"
            << "invariant drift = "
            << std::abs(last.invariant - traj.samples.front().invariant)
            << "\n";
  if (a.has("out")) {
    std::filesystem::create_directories(a.get("out"));
    write_json_file(a.get("out") + "/trajectory.json",
                    trajectory_to_json(traj));
  }
  return 0;
}

int cmd_estimate_ra(const Args& a) {
  auto L = make_lagrangian(model_spec(a), manifold_arg(a));
  if (!a.has("A")) throw std::invalid_argument("estimate-ra needs --A");
  double A = a.get_num("A", 0.0);
  double C1 = a.has("C1") ? a.get_num("C1", 0.0)
                          : check_tonelli(*L).c_of_k.at(0);
  FlowGridSpec spec;
  spec.per_dim = int(a.get_int("grid-density", spec.per_dim));
  if (a.has("seed")) spec.seed = std::uint64_t(a.get_int("seed", 2026));
  ReachableSetEstimate est = estimate_R_A(*L, A, C1, spec);
  std::cout << "model " << L->name() << ", A = " << est.A
            << ", C1 = " << est.C1 << "\n"
            << "seed radius " << est.seed_radius << " (" << est.seed_count
            << " seeds), observed max speed " << est.max_observed << "\n"
            << "R_A = " << est.R_A << " (margin " << est.margin << ")\n"
            << "grid: " << est.grid_description << "\n";
  return 0;
}

int run_and_report(const Scenario& sc, const Args& a) {
  ScenarioConfig cfg = sc.config;
  if (a.has("seed")) cfg.seed = std::uint64_t(a.get_int("seed", cfg.seed));
  if (a.has("mesh")) cfg.mesh = int(a.get_int("mesh", cfg.mesh));
  std::string out = a.get("out");
  if (out.empty()) out = cfg.out_dir;
  if (out.empty())
    out = (std::filesystem::path(output_root()) /
           (cfg.scenario.empty() ? "config" : cfg.scenario))
              .string();

  RunManifest man = run_scenario(cfg, sc.expect);
  emit_report(man, out);
  std::ifstream is(std::filesystem::path(out) / "report.txt");
  std::cout << is.rdbuf();
  std::cout << "report written to " << out << "\n";
  return man.pass ? 0 : 1;
}

int cmd_solve(const Args& a) {
  if (!a.has("config")) throw std::invalid_argument("solve needs --config");
  std::string path = a.get("config");
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j = nlohmann::json::parse(is);
  Scenario sc;
  if (j.contains("config")) {
    sc.config = j.at("config").get<ScenarioConfig>();
    sc.expect = j.value("expect", ExpectationTable{});
  } else {
    sc.config = j.get<ScenarioConfig>();
  }
  return run_and_report(sc, a);
}

int cmd_index(const Args& a) {
  if (!a.has("path")) throw std::invalid_argument("index needs --path FILE");
  std::ifstream is(a.get("path"));
  if (!is) throw std::runtime_error("cannot open path file: " + a.get("path"));
  nlohmann::json j = nlohmann::json::parse(is);
  if (j.contains("path")) j = j.at("path");
  DiscretePath p = path_from_json(j);
  auto L = make_lagrangian(model_spec(a), p.manifold);
  std::string bc_name = a.get("bc", "periodic");
  BoundaryCondition bc = bc_name == "neumann"
                             ? BoundaryCondition::neumann(p.dim())
                             : BoundaryCondition::periodic(p.dim());
  GradientResult g = gradient(*L, p, bc);
  IndexPair ip = morse_index(*L, bc, p);
  std::cout << "path on " << p.manifold->name() << ", N = " << p.N
            << ", action = " << action(*L, p) << "\n"
            << "dual gradient norm = " << g.dual_norm << "\n"
            << "index m = " << ip.m << ", m* = " << ip.m_star << " ("
            << (ip.stable ? "stable" : "UNSTABLE") << " under refinement)\n";
  return 0;
}

int cmd_scenario(const Args& a) {
  if (a.positional.empty())
    throw std::invalid_argument("scenario needs a name");
  return run_and_report(load_scenario(a.positional[0]), a);
}

int cmd_suite(const Args& a) {
  auto verdicts = property_suite();
  std::cout << verdict_table(verdicts);
  if (a.has("out")) {
    std::filesystem::create_directories(a.get("out"));
    nlohmann::json j = nlohmann::json::array();
    for (const auto& v : verdicts)
      j.push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
    write_json_file(a.get("out") + "/property_suite.json", j);
  }
  return all_pass(verdicts) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) return usage();
  std::string cmd = argv[1];
  if (cmd == "--help" || cmd == "-h" || cmd == "help") return usage();
  try {
    Args a = parse_args(argc, argv, 2);
    if (cmd == "check-lagrangian") return cmd_check_lagrangian(a);
    if (cmd == "modify") return cmd_modify(a);
    if (cmd == "flow") return cmd_flow(a);
    if (cmd == "estimate-ra") return cmd_estimate_ra(a);
    if (cmd == "solve") return cmd_solve(a);
    if (cmd == "index") return cmd_index(a);
    if (cmd == "scenario") return cmd_scenario(a);
    if (cmd == "suite") return cmd_suite(a);
    std::cerr << "unknown command: " << cmd << "\n";
    return usage();
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
