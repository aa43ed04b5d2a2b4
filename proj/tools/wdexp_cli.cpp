// wdexp command-line frontend. Exit codes: 0 success, 1 usage/config, 2 infeasible math, 3 verification failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <iostream>
#include <openssl/evp.h>
#include <sstream>

#include "json.hpp"
#include "wdexp/dynamics.hpp"
#include "wdexp/errors.hpp"
#include "wdexp/format.hpp"
#include "wdexp/graphhom.hpp"
#include "wdexp/lrsched.hpp"
#include "wdexp/schedule_io.hpp"
#include "wdexp/statealg.hpp"
#include "wdexp/toymodel.hpp"
#include "wdexp/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wdexp;

namespace {

constexpr int kOk = 0, kConfig = 1, kInfeasible = 2, kFailed = 3;

struct Options {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  bool quiet = false;
};

struct Context {
  std::string command;
  fs::path out;
  json cfg;
  std::string hash;
  bool quiet = false;

  std::string header() const { return fmt::format("wdexp {}\nconfig_sha256: {}", command, hash); }
  json meta() const { return {{"command", command}, {"config_sha256", hash}}; }

  void write_json(const std::string& name, json j) const {
    j["meta"] = meta();
    std::ofstream f(out / name);
    f << j.dump(2) << '\n';
    if (!f) throw ConfigError(fmt::format("cannot write {}", (out / name).string()));
  }
  std::ofstream open(const std::string& name) const {
    std::ofstream f(out / name);
    if (!f) throw ConfigError(fmt::format("cannot write {}", (out / name).string()));
    return f;
  }
  void say(const std::string& s) const {
    if (!quiet) std::cout << s << '\n';
  }
};

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

Context load(const std::string& command, const Options& o) {
  Context c;
  c.command = command;
  c.quiet = o.quiet;
  std::ifstream in(o.config);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", o.config));
  try {
    c.cfg = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config '{}': {}", o.config, e.what()));
  }
  if (!c.cfg.is_object()) throw ConfigError("config must be a JSON object");
  if (o.seed) {
    c.cfg["seed"] = *o.seed;
    if (c.cfg.contains("objective") && c.cfg["objective"].is_object()) c.cfg["objective"]["seed"] = *o.seed;
  }
  if (o.trials) c.cfg["trials"] = *o.trials;
  c.hash = sha256_hex(c.cfg.dump());
  c.out = o.out;
  fs::create_directories(c.out);
  return c;
}

ScheduleSpec schedule_of(const json& cfg) {
  return schedule_from_json(cfg.contains("schedule") ? cfg.at("schedule") : cfg);
}

struct RunSetup {
  ScheduleSpec spec;
  RunConfig run;
};

RunSetup run_setup(const json& cfg) {
  RunSetup s;
  s.spec = schedule_of(cfg);
  if (!cfg.contains("objective") || !cfg["objective"].is_object()) throw ConfigError("config needs an objective object");
  auto obj = make_objective(cfg.at("objective"));
  const auto seed = cfg.value("seed", std::uint64_t{1});
  const auto steps = cfg.value("steps", s.spec.iterations());
  if (steps > s.spec.iterations()) throw ConfigError("steps exceed the schedule length");
  s.run = make_run(obj, s.spec, random_unit(obj->dim(), seed), steps);
  const double v_scale = cfg.value("init_v_scale", 0.0);
  if (v_scale != 0.0) s.run.init_v = v_scale * random_unit(obj->dim(), seed + 1);
  s.run.stabilize_every = cfg.value("stabilize_every", std::int64_t{0});
  s.run.validate(true);
  return s;
}

int cmd_translate(const Context& c) {
  const auto spec = schedule_of(c.cfg);
  const auto sched = translate(spec);
  auto csv = c.open("schedule.csv");
  write_schedule_csv(csv, sched, c.header());
  c.write_json("summary.json", translation_summary(spec, sched));
  c.say(fmt::format("{}: {} iterations, {} corrections", to_string(sched.kind), sched.size(), sched.corrections.size()));
  return kOk;
}

int cmd_run(const Context& c) {
  const auto s = run_setup(c.cfg);
  const auto mode = c.cfg.value("mode", std::string("wd"));
  Trajectory traj;
  if (mode == "wd") traj = run_sgd_wd(s.run);
  else if (mode == "exp") traj = run_sgd_exp(s.run, translate(s.spec));
  else throw ConfigError(fmt::format("unknown run mode '{}'", mode));
  auto csv = c.open("trajectory.csv");
  write_trajectory_csv(csv, traj, nullptr, c.header());
  const auto& last = traj.records.back();
  c.write_json("run.json", {{"mode", mode},
                            {"steps", traj.steps()},
                            {"final_log_norm", last.log_norm},
                            {"final_loss", last.loss},
                            {"log_scale", traj.log_scale}});
  c.say(fmt::format("{} run: {} steps, final log|theta| = {}", mode, traj.steps(), num(last.log_norm)));
  return kOk;
}

int cmd_verify(const Context& c) {
  if (c.cfg.value("steps", std::int64_t{-1}) == 0) {
    // nothing to compare; the config is still checked
    const auto spec = schedule_of(c.cfg);
    const auto sched = translate(spec);
    if (!c.cfg.contains("objective") || !c.cfg["objective"].is_object()) throw ConfigError("config needs an objective object");
    make_objective(c.cfg.at("objective"));
    c.write_json("verify.json", {{"pass", true}, {"vacuous", true}, {"steps", 0}, {"translation", to_string(sched.kind)}});
    c.say("PASS: zero steps, nothing to compare");
    return kOk;
  }
  const auto s = run_setup(c.cfg);
  const auto sched = translate(s.spec);
  ExpOptions opt;
  opt.apply_corrections = c.cfg.value("apply_corrections", true);
  if (c.cfg.contains("perturb"))
    for (const auto& p : c.cfg.at("perturb")) opt.perturb.emplace_back(p.at(0).get<std::int64_t>(), p.at(1).get<double>());
  EquivalenceTolerance tol;
  if (c.cfg.contains("tolerance")) {
    tol.direction = c.cfg["tolerance"].value("direction", tol.direction);
    tol.log_norm = c.cfg["tolerance"].value("log_norm", tol.log_norm);
    tol.grow_with_t = c.cfg["tolerance"].value("grow_with_t", tol.grow_with_t);
  }
  const auto a = run_sgd_wd(s.run);
  const auto b = run_sgd_exp(s.run, sched, opt);
  const auto rep = verify_equivalence(a, b, {}, tol);
  auto fa = c.open("trajectory_wd.csv");
  write_trajectory_csv(fa, a, nullptr, c.header());
  auto fb = c.open("trajectory_exp.csv");
  write_trajectory_csv(fb, b, &a, c.header());
  auto j = rep.to_json();
  j["translation"] = to_string(sched.kind);
  c.write_json("verify.json", j);
  c.say(fmt::format("{}: max 1-cos {:.3e}, max log-norm deviation {:.3e}", rep.pass ? "PASS" : "FAIL",
                    rep.max_one_minus_cos, rep.max_log_norm_dev));
  return rep.pass ? kOk : kFailed;
}

int cmd_dynamics(const Context& c) {
  const auto s = run_setup(c.cfg);
  const auto traj = run_sgd_wd(s.run);
  const auto series = norm_series(traj);
  json j;
  bool ok = true;
  const auto rec = check_norm_recursion(series);
  j["norm_recursion"] = rec.to_json();
  ok &= rec.pass;
  const bool no_wd = std::all_of(s.run.lambda.begin(), s.run.lambda.begin() + traj.steps(), [](double l) { return l == 0.0; });
  if (no_wd) {
    const auto mono = check_monotone_growth(series);
    j["monotone_growth"] = mono.to_json();
    ok &= mono.pass;
  }
  if (s.spec.kind == ScheduleKind::constant) {
    try {
      const auto eq = estimate_equilibrium(series, c.cfg.value("burn_in", std::int64_t{-1}));
      j["equilibrium"] = eq.to_json();
      // the limits need not exist, so a miss is only reported unless asked for
      if (!no_wd && c.cfg.value("require_equilibrium", false)) ok &= eq.pass;
    } catch (const InsufficientLength& e) {
      j["equilibrium"] = {{"skipped", e.what()}};
    }
  }
  if (series.gamma == 0.0) {
    const auto py = check_pythagorean(traj);
    j["pythagorean"] = py.to_json();
    ok &= py.pass;
  }
  auto csv = c.open("norm_residuals.csv");
  std::istringstream hdr(c.header());
  for (std::string line; std::getline(hdr, line);) csv << "# " << line << '\n';
  csv << "t,R,D,residual\n";
  for (std::int64_t t = 0; t < series.steps(); ++t)
    csv << t << ',' << num(series.r(t)) << ',' << num(series.d(t)) << ',' << num(rec.residual[static_cast<std::size_t>(t)])
        << '\n';
  j["pass"] = ok;
  c.write_json("dynamics.json", j);
  c.say(fmt::format("{}: norm recursion max residual {:.3e} (tol {:.3e})", ok ? "PASS" : "FAIL", rec.max_abs, rec.tol));
  return ok ? kOk : kFailed;
}

int cmd_toy(const Context& c) {
  const auto cfg = ToyConfig::from_json(c.cfg);
  const auto task = c.cfg.value("task", std::string("run"));
  if (task == "run") {
    const auto regime = regime_from_string(c.cfg.value("regime", std::string("bn_wd")));
    const auto steps = c.cfg.value("steps", std::int64_t{1000});
    const auto seed = cfg.seeds.front();
    const Vec w0 = toy_init(cfg.m, c.cfg.value("init_angle", 0.5 * cfg.eps), cfg.init_norm, seed);
    const auto run = run_case(regime, cfg, w0, steps, seed);
    auto csv = c.open("toy_angles.csv");
    write_toy_csv(csv, run, c.header());
    const auto& last = run.records.back();
    c.write_json("toy.json", {{"task", task},
                              {"regime", to_string(regime)},
                              {"config", cfg.to_json()},
                              {"final_angle", last.angle},
                              {"final_norm", last.norm},
                              {"final_error", last.error},
                              {"max_orth_residual", run.max_orth_residual()},
                              {"max_pyth_residual", run.max_pyth_residual()},
                              {"norm4_slope", run.norm4_slope()}});
    c.say(fmt::format("{}: final angle {:.4g} rad, norm {:.4g}", to_string(regime), last.angle, last.norm));
    return kOk;
  }
  if (task == "escape") {
    const auto rep = escape_experiment(cfg, c.cfg.value("trials", 100));
    auto j = rep.to_json();
    j["config"] = cfg.to_json();
    c.write_json("escape.json", j);
    c.say(fmt::format("{}: escaped in {}/{} trials (required fraction {:.3f})", rep.pass ? "PASS" : "FAIL", rep.escaped,
                      rep.trials, rep.required));
    return rep.pass ? kOk : kFailed;
  }
  if (task == "chi_square") {
    const auto rep = chi_square_tail_check(c.cfg.value("k", 10), c.cfg.value("beta", 0.5),
                                           c.cfg.value("samples", std::int64_t{100000}), cfg.seeds.front());
    c.write_json("chi_square.json", rep.to_json());
    c.say(fmt::format("{}: estimate {:.4g} vs bound {:.4g}", rep.pass ? "PASS" : "FAIL", rep.estimate, rep.bound));
    return rep.pass ? kOk : kFailed;
  }
  throw ConfigError(fmt::format("unknown toy task '{}'", task));
}

int cmd_graph(const Context& c) {
  const bool wrapped = c.cfg.contains("graph");
  const auto g = CompGraph::from_json(wrapped ? c.cfg.at("graph") : c.cfg);
  CheckOptions opt;
  opt.simplify = c.cfg.value("simplify", false);
  const auto v = is_scale_invariant(g, opt);
  auto j = v.to_json();
  const int orders = c.cfg.value("orders", 5);
  bool consistent = true;
  for (int k = 0; k < orders; ++k) {
    auto o = opt;
    o.tie_seed = static_cast<std::uint64_t>(k + 1);
    consistent &= is_scale_invariant(g, o).invariant == v.invariant;
  }
  j["order_independent"] = consistent;
  int code = consistent ? kOk : kFailed;
  if (c.cfg.value("crosscheck", false)) {
    const auto seed = c.cfg.value("seed", std::uint64_t{1});
    const GraphNetwork net(g, seed);
    try {
      j["crosscheck"] = numeric_crosscheck(g, net, net.init(seed), {0.5, 2.0, 10.0}, opt).to_json();
    } catch (const RealizationMismatch& e) {
      j["crosscheck"] = {{"mismatch", e.what()}};
      code = kFailed;
    }
  }
  c.write_json("verdict.json", j);
  c.say(v.invariant ? "scale invariant" : fmt::format("not scale invariant (fails at '{}')", *v.failing_node));
  return code;
}

int cmd_lemmas(const Context& c) {
  LemmaOptions base;
  base.seed = c.cfg.value("seed", base.seed);
  base.dim = c.cfg.value("dim", static_cast<int>(base.dim));
  base.tol = c.cfg.value("tol", base.tol);
  const int trials = c.cfg.value("trials", 100);
  const auto neg = c.cfg.value("negative_control", std::string("include"));
  if (neg != "include" && neg != "only" && neg != "none") throw ConfigError("negative_control must be include, only or none");
  if (trials < 0) throw ConfigError("trials must be >= 0");

  auto suite = [&](const LemmaOptions& o) {
    auto two = o, four = o;
    two.coords = LemmaOptions::Coordinates::two;
    four.coords = LemmaOptions::Coordinates::four;
    return std::vector<LemmaReport>{verify_lemma_gdw(trials, o), verify_lemma_commute(trials, two),
                                    verify_lemma_commute(trials, four), verify_lemma_gdw_momentum(trials, o),
                                    verify_canonicalization(trials, o)};
  };
  json j;
  bool ok = true;
  if (neg != "only") {
    j["positive"] = json::array();
    for (const auto& r : suite(base)) {
      j["positive"].push_back(r.to_json());
      ok &= r.ok();
    }
  }
  if (neg != "none") {
    auto o = base;
    o.negative_control = true;
    std::size_t detected = 0;
    j["negative_control"] = json::array();
    for (const auto& r : suite(o)) {
      auto rj = r.to_json();
      rj["violations_found"] = r.violations.size();
      rj.erase("violations");  // counterexamples are expected here
      j["negative_control"].push_back(rj);
      detected += r.violations.size();
    }
    if (trials > 0) ok &= detected > 0;
  }
  j["pass"] = ok;
  c.write_json("lemmas.json", j);
  c.say(fmt::format("{}: lemma harness, {} trials per lemma", ok ? "PASS" : "FAIL", trials));
  return ok ? kOk : kFailed;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InfeasibleRoots*>(&e) || dynamic_cast<const NonPositiveAlpha*>(&e) ||
      dynamic_cast<const InvalidBudget*>(&e) || dynamic_cast<const NumericalBlowup*>(&e))
    return kInfeasible;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DimensionMismatch*>(&e) ||
      dynamic_cast<const InvalidArity*>(&e) || dynamic_cast<const CycleDetected*>(&e) ||
      dynamic_cast<const LengthMismatch*>(&e) || dynamic_cast<const json::exception*>(&e) ||
      dynamic_cast<const std::invalid_argument*>(&e))
    return kConfig;
  return kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weight decay / exponential learning rate toolkit"};
  app.require_subcommand(1);
  Options o;
  using Handler = int (*)(const Context&);
  const std::vector<std::tuple<std::string, std::string, Handler>> commands{
      {"translate", "Translate a schedule into its exponential-LR equivalent", cmd_translate},
      {"run", "Run SGD with weight decay (mode wd) or the translated schedule (mode exp)", cmd_run},
      {"verify", "Run both trajectories and check their equivalence", cmd_verify},
      {"dynamics", "Check norm identities on a weight-decay run", cmd_dynamics},
      {"toy", "Last-layer toy model: run, escape or chi_square task", cmd_toy},
      {"graph-check", "Decide scale invariance of a module graph", cmd_graph},
      {"lemmas", "Randomized state-map lemma harness", cmd_lemmas}};
  std::map<CLI::App*, Handler> handlers;
  for (const auto& [name, desc, fn] : commands) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", o.config, "JSON config file")->required();
    sub->add_option("--out", o.out, "Output directory (created if absent)");
    sub->add_option("--seed", o.seed, "Seed override");
    sub->add_option("--trials", o.trials, "Trial-count override");
    sub->add_flag("--quiet", o.quiet, "No summary on stdout");
    handlers[sub] = fn;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  for (auto& [sub, fn] : handlers) {
    if (!sub->parsed()) continue;
    try {
      return fn(load(sub->get_name(), o));
    } catch (const std::exception& e) {
      std::cerr << "wdexp " << sub->get_name() << ": " << e.what() << '\n';
      return exit_code_for(e);
    }
  }
  return kConfig;
}
