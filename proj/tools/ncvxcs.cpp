#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ncvxcs/amp.hpp"
#include "ncvxcs/instance.hpp"
#include "ncvxcs/parallel.hpp"
#include "ncvxcs/penalty.hpp"
#include "ncvxcs/replica.hpp"
#include "ncvxcs/state_evolution.hpp"

#ifndef NCVXCS_VERSION
#define NCVXCS_VERSION "0.0.0"
#endif

using namespace ncvxcs;
using json = nlohmann::ordered_json;

namespace {

constexpr int kOk = 0;
constexpr int kBadConfig = 1;
constexpr int kNumerical = 2;

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Shortest round-trip form, keeping a decimal point on integral values.
std::string short_num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eEni") == std::string::npos) s += ".0";
  return s;
}

double parse_real(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("cannot read " + what + " from '" + s + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

// "lo:hi:step", inclusive of hi within half a step.
std::vector<double> parse_range(const std::string& spec, const std::string& flag) {
  const auto parts = split(spec, ':');
  if (parts.size() != 3) throw ConfigError(flag + " '" + spec + "': expected lo:hi:step, e.g. 0.05:0.5:0.025");
  const double lo = parse_real(parts[0], flag + " lower end");
  const double hi = parse_real(parts[1], flag + " upper end");
  const double step = parse_real(parts[2], flag + " step");
  if (!(step > 0.0) || hi < lo) throw ConfigError(flag + " '" + spec + "': need hi >= lo and a positive step");
  const long count = std::lround(std::floor((hi - lo) / step + 0.5));
  if (count > 1000000) throw ConfigError(flag + " '" + spec + "': more than 1e6 points");
  std::vector<double> out;
  for (long k = 0; k <= count; ++k) out.push_back(lo + static_cast<double>(k) * step);
  return out;
}

// "lo:hi:count" or "lo:hi:count:log".
GridAxis parse_axis(const std::string& spec, const std::string& flag) {
  const auto parts = split(spec, ':');
  if (parts.size() != 3 && parts.size() != 4) {
    throw ConfigError(flag + " '" + spec + "': expected lo:hi:count or lo:hi:count:log");
  }
  GridAxis ax;
  ax.lo = parse_real(parts[0], flag + " lower end");
  ax.hi = parse_real(parts[1], flag + " upper end");
  const double c = parse_real(parts[2], flag + " count");
  if (c < 2 || c != std::floor(c) || c > 100000) throw ConfigError(flag + ": count must be an integer in [2, 1e5]");
  ax.count = static_cast<int>(c);
  if (parts.size() == 4) {
    if (parts[3] != "log") throw ConfigError(flag + ": the optional fourth field must be 'log'");
    ax.log = true;
  }
  return ax;
}

json config_value(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  long long i = 0;
  const auto ir = std::from_chars(s.data(), s.data() + s.size(), i);
  if (!s.empty() && ir.ec == std::errc() && ir.ptr == s.data() + s.size()) return i;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (!s.empty() && res.ec == std::errc() && res.ptr == s.data() + s.size()) return v;
  return s;
}

// ---------------------------------------------------------------- shared options

struct Io {
  std::string config;
  std::string out;
  std::string manifest;
  std::string format = "csv";
  bool dry_run = false;
};

struct Model {
  std::string family = "scad";
  double lambda = 1.0;
  double a = 3.0;
  double alpha = 0.5;
  double rho = 0.1;
  double sigma_x2 = 1.0;

  PenaltySpec penalty() const {
    const Family f = parse_family(family);
    return f == Family::L1 ? PenaltySpec::l1(lambda) : PenaltySpec(f, lambda, a);
  }
  SeParams params() const {
    SeParams p{alpha, rho, sigma_x2};
    p.validate();
    return p;
  }
};

void add_io(CLI::App* sub, Io& io, bool formats = true) {
  sub->add_option("--config", io.config, "flat key=value file; flags override it");
  sub->add_option("--out", io.out, "result path (default: stdout)");
  sub->add_option("--manifest", io.manifest, "manifest path (default: <out>.manifest.json, or stderr)");
  if (formats) sub->add_option("--format", io.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  sub->add_flag("--dry-run", io.dry_run, "validate and print the resolved plan only");
}

void add_family(CLI::App* sub, Model& m) {
  sub->add_option("--family", m.family, "scad, mcp or l1");
}

void add_penalty(CLI::App* sub, Model& m) {
  add_family(sub, m);
  sub->add_option("--lambda", m.lambda, "penalty strength");
  sub->add_option("--a", m.a, "nonconvexity (> 1; ignored for l1)");
}

void add_ensemble(CLI::App* sub, Model& m, bool with_rho = true, bool with_alpha = true) {
  if (with_alpha) sub->add_option("--alpha", m.alpha, "measurement ratio M/N");
  if (with_rho) sub->add_option("--rho", m.rho, "signal density");
  sub->add_option("--sigma-x2", m.sigma_x2, "signal variance");
}

// ---------------------------------------------------------------- run context

class Run {
 public:
  Run(CLI::App* sub, const Io& io, std::string command) : sub_(sub), io_(io), command_(std::move(command)) {
    start_ = std::chrono::steady_clock::now();
  }

  json resolved() const {
    json cfg = json::object();
    for (const CLI::Option* opt : sub_->get_options()) {
      if (opt->get_lnames().empty()) continue;
      const std::string name = opt->get_lnames().front();
      if (name == "help") continue;
      if (opt->get_expected_min() == 0) {
        cfg[name] = opt->count() > 0;
        continue;
      }
      if (opt->count() > 0) {
        const auto& r = opt->results();
        cfg[name] = config_value(r.back());
      } else {
        const std::string d = opt->get_default_str();
        cfg[name] = d.empty() ? json(nullptr) : config_value(d);
      }
    }
    return cfg;
  }

  int plan(const std::string& what) const {
    json j;
    j["command"] = command_;
    j["plan"] = what;
    j["resolved_config"] = resolved();
    std::cout << j.dump(2) << "\n";
    return kOk;
  }

  std::ostream& out() {
    if (io_.out.empty()) return std::cout;
    if (!file_) {
      file_ = std::make_unique<std::ofstream>(io_.out);
      if (!*file_) throw ConfigError("cannot open --out path '" + io_.out + "' for writing");
    }
    return *file_;
  }

  bool json_format() const { return io_.format == "json"; }

  void set_seed(std::uint64_t s) { seed_ = s; }

  void finish() {
    if (file_) file_->flush();
    json m;
    m["command"] = command_;
    m["resolved_config"] = resolved();
    m["seed"] = seed_ ? json(*seed_) : json(nullptr);
    m["version"] = NCVXCS_VERSION;
    m["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::string path = io_.manifest;
    if (path.empty() && !io_.out.empty()) path = io_.out + ".manifest.json";
    if (path.empty()) {
      std::cerr << m.dump() << "\n";
      return;
    }
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open manifest path '" + path + "' for writing");
    f << m.dump(2) << "\n";
  }

 private:
  CLI::App* sub_;
  const Io& io_;
  std::string command_;
  std::unique_ptr<std::ofstream> file_;
  std::optional<std::uint64_t> seed_;
  std::chrono::steady_clock::time_point start_;
};

SePoint pick_start(const std::string& start, std::optional<double> v0, std::optional<double> e0, const SeParams& sp) {
  SePoint s;
  if (start == "default") {
    s = sp.default_start();
  } else if (start == "amp") {
    s = sp.amp_matched_start();
  } else {
    throw ConfigError("--start must be 'default' or 'amp'");
  }
  if (v0) s.V = *v0;
  if (e0) s.eps = *e0;
  if (!(s.V >= 0.0) || !(s.eps >= 0.0)) throw ConfigError("starting V and eps must be nonnegative");
  return s;
}

json saddle_json(const SaddleSolution& s) {
  json j;
  j["Q"] = s.Q;
  j["chi"] = s.chi;
  j["m"] = s.m;
  j["Qt"] = s.Qt;
  j["chit"] = s.chit;
  j["mt"] = s.mt;
  j["rho_hat"] = s.rho_hat;
  j["eps"] = s.eps;
  j["at_lhs"] = s.at_lhs;
  j["converged"] = s.converged;
  j["status"] = std::string(to_string(s.status));
  j["sweeps"] = s.sweeps;
  j["projections"] = s.projections;
  j["last_change"] = s.last_change;
  return j;
}

// ---------------------------------------------------------------- subcommands

struct ProxArgs {
  Io io;
  Model m;
  double s = 1.0;
  double w = 0.0;
};

int run_prox(Run& run, const ProxArgs& x) {
  const PenaltySpec p = x.m.penalty();
  if (!(x.s > 0.0)) throw ConfigError("--s must be positive");
  if (!is_admissible(p, x.s)) {
    throw ConfigError("a = " + short_num(p.a()) + " is not above a_min = " + short_num(a_min(p, x.s)) +
                      " at s = " + short_num(x.s) + "; raise --a or lower --s");
  }
  if (x.io.dry_run) return run.plan("evaluate the threshold at one (s, w)");
  const ThresholdResult r = threshold_field(x.s, x.w, p);
  const double obj = single_body_objective(1.0 / x.s, x.w, r.x_star, p);
  if (run.json_format()) {
    json j;
    j["x_star"] = r.x_star;
    j["region"] = std::string(to_string(r.region));
    j["sigma_factor"] = r.sigma_factor;
    j["objective"] = obj;
    run.out() << j.dump(2) << "\n";
  } else {
    run.out() << "x*=" << short_num(r.x_star) << ", region=" << to_string(r.region)
              << ", slope=" << short_num(r.sigma_factor) << ", objective=" << short_num(obj) << "\n";
  }
  run.finish();
  return kOk;
}

struct AmpArgs {
  Io io;
  Model m;
  std::uint64_t n = 10000;
  std::uint64_t seed = 0;
  std::string schedule;
  int steps = 1;
  int max_iters = 1000;
  double tol = 1e-12;
  double damping = 1.0;
  std::optional<double> vhat_init;
  bool stop_at_schedule_end = false;
  std::string instance;
  std::string save_instance;
};

int run_amp(Run& run, const AmpArgs& x) {
  const Family f = parse_family(x.m.family);
  ControlSchedule sch;
  if (x.schedule.empty()) {
    sch = ControlSchedule::constant(x.m.penalty(), x.steps);
  } else {
    sch = ControlSchedule::parse(x.schedule, f, x.m.a);
  }
  AmpOptions o;
  o.max_iters = x.max_iters;
  o.tol = x.tol;
  o.damping = x.damping;
  o.hold_final = !x.stop_at_schedule_end;
  o.vhat_init = x.vhat_init;
  if (!(o.damping > 0.0 && o.damping <= 1.0)) throw ConfigError("--damping must lie in (0, 1]");
  if (o.max_iters < 1) throw ConfigError("--max-iters must be positive");
  EnsembleParams ep{x.n, x.m.alpha, x.m.rho, x.m.sigma_x2, x.seed};
  if (x.instance.empty()) ep.validate();
  run.set_seed(x.seed);
  if (x.io.dry_run) {
    std::ostringstream os;
    os << "AMP with " << sch.segments.size() << " schedule segment(s), " << sch.total_steps()
       << " scheduled steps, at most " << o.max_iters << " iterations";
    if (x.instance.empty()) {
      os << ", on a " << ep.m_rows() << " x " << ep.n << " instance (seed " << ep.seed << ")";
    } else {
      os << ", on the instance in " << x.instance;
    }
    return run.plan(os.str());
  }
  ProblemInstance inst;
  try {
    inst = x.instance.empty() ? gen_instance(ep) : load_instance(x.instance);
  } catch (const std::bad_alloc&) {
    throw NumericalFailure("not enough memory for the " + std::to_string(ep.m_rows()) + " x " + std::to_string(ep.n) +
                           " matrix; lower --n");
  }
  if (!x.instance.empty()) run.set_seed(inst.params.seed);
  if (!x.save_instance.empty()) save_instance(inst, x.save_instance);
  const AmpReport rep = amp_run(inst, sch, o);
  if (run.json_format()) {
    json j;
    j["status"] = std::string(to_string(rep.status));
    j["iterations"] = rep.iterations;
    j["final_mse"] = rep.final_mse();
    j["success"] = rep.final_mse() <= 1e-8;
    j["violation_t"] = rep.violation_t ? json(*rep.violation_t) : json(nullptr);
    j["floor_clamps"] = rep.floor_clamps;
    json rows = json::array();
    for (const auto& r : rep.trajectory) {
      rows.push_back({{"t", r.t}, {"lambda", r.lambda}, {"a", r.a}, {"mse", r.mse}, {"V_hat", r.V_hat},
                      {"residual", r.residual}});
    }
    j["trajectory"] = rows;
    run.out() << j.dump(2) << "\n";
  } else {
    write_trajectory_csv(run.out(), rep);
  }
  run.finish();
  std::cerr << "status=" << to_string(rep.status) << " iterations=" << rep.iterations
            << " final_mse=" << num(rep.final_mse()) << "\n";
  return rep.status == AmpStatus::Converged ? kOk : kNumerical;
}

struct SeRunArgs {
  Io io;
  Model m;
  std::string start = "default";
  std::optional<double> v0, eps0;
  int max_iters = 5000;
};

int run_se(Run& run, const SeRunArgs& x) {
  const PenaltySpec p = x.m.penalty();
  const SeParams sp = x.m.params();
  const SePoint s = pick_start(x.start, x.v0, x.eps0, sp);
  if (x.max_iters < 1) throw ConfigError("--max-iters must be positive");
  if (x.io.dry_run) return run.plan("iterate the state map from (" + num(s.V) + ", " + num(s.eps) + ")");
  SeOptions o;
  o.max_iters = x.max_iters;
  o.keep_trace = true;
  const SeOutcome r = se_run(s, p, sp, o);
  if (run.json_format()) {
    json j;
    j["classification"] = std::string(to_string(r.classification));
    j["V"] = r.final.V;
    j["eps"] = r.final.eps;
    j["iters"] = r.iters;
    run.out() << j.dump(2) << "\n";
  } else {
    auto& os = run.out();
    os << "t,V,eps\n";
    for (std::size_t t = 0; t < r.trace.size(); ++t) os << t << "," << num(r.trace[t].V) << "," << num(r.trace[t].eps) << "\n";
  }
  run.finish();
  std::cerr << "classification=" << to_string(r.classification) << " iters=" << r.iters << "\n";
  const bool settled = r.classification == SeClass::Success || r.classification == SeClass::FiniteFixedPoint;
  return settled ? kOk : kNumerical;
}

struct GridArgs {
  Io io;
  Model m;
  std::string v_grid, eps_grid;
  int count = 50;
  int jobs = 1;
  int max_iters = 5000;
};

GridSpec grid_of(const GridArgs& x, const SeParams& sp) {
  if (x.count < 2) throw ConfigError("--grid-count must be at least 2");
  GridSpec g = GridSpec::default_for(sp, x.count);
  if (!x.v_grid.empty()) g.v = parse_axis(x.v_grid, "--v-grid");
  if (!x.eps_grid.empty()) g.eps = parse_axis(x.eps_grid, "--eps-grid");
  g.validate();
  if (x.jobs < 1) throw ConfigError("--jobs must be at least 1");
  return g;
}

json grid_json(const GridSpec& g) {
  auto axis = [](const GridAxis& a) { return json{{"lo", a.lo}, {"hi", a.hi}, {"count", a.count}, {"log", a.log}}; };
  return json{{"V", axis(g.v)}, {"eps", axis(g.eps)}};
}

int run_flow(Run& run, const GridArgs& x) {
  const PenaltySpec p = x.m.penalty();
  const SeParams sp = x.m.params();
  const GridSpec g = grid_of(x, sp);
  if (x.io.dry_run) {
    return run.plan("one map step at each of " + std::to_string(g.v.count * g.eps.count) + " grid nodes");
  }
  const auto nodes = flow_field(g, p, sp, x.jobs);
  auto& os = run.out();
  if (run.json_format()) {
    json rows = json::array();
    for (const auto& n : nodes) {
      rows.push_back({{"V", n.V}, {"eps", n.eps}, {"dV", n.dV}, {"deps", n.deps}, {"admissible", n.admissible}});
    }
    os << json{{"grid", grid_json(g)}, {"nodes", rows}}.dump(2) << "\n";
  } else {
    os << "V,eps,dV,deps,admissible\n";
    for (const auto& n : nodes) {
      os << num(n.V) << "," << num(n.eps) << "," << num(n.dV) << "," << num(n.deps) << "," << (n.admissible ? 1 : 0)
         << "\n";
    }
  }
  run.finish();
  return kOk;
}

int run_basin(Run& run, const GridArgs& x) {
  const PenaltySpec p = x.m.penalty();
  const SeParams sp = x.m.params();
  const GridSpec g = grid_of(x, sp);
  if (x.max_iters < 1) throw ConfigError("--max-iters must be positive");
  if (x.io.dry_run) {
    return run.plan("classify " + std::to_string(g.v.count * g.eps.count) + " starting points by iterating the map");
  }
  SeOptions o;
  o.max_iters = x.max_iters;
  const BasinMap b = basin_map(g, p, sp, o, x.jobs);
  auto& os = run.out();
  if (run.json_format()) {
    json j;
    j["volume"] = b.volume;
    j["eps_max"] = b.eps_max;
    j["domain_area"] = b.domain_area;
    j["grid"] = grid_json(g);
    j["params"] = {{"family", std::string(to_string(p.family()))}, {"lambda", p.lambda()}, {"a", p.a()},
                   {"alpha", sp.alpha}, {"rho", sp.rho}, {"sigma_x2", sp.sigma_x2}};
    os << j.dump(2) << "\n";
  } else {
    os << "V0,eps0,class\n";
    const auto vs = g.v.nodes();
    const auto es = g.eps.nodes();
    for (int ie = 0; ie < g.eps.count; ++ie) {
      for (int iv = 0; iv < g.v.count; ++iv) os << num(vs[iv]) << "," << num(es[ie]) << "," << to_string(b.at(iv, ie)) << "\n";
    }
  }
  run.finish();
  std::cerr << "volume=" << num(b.volume) << " eps_max=" << num(b.eps_max) << "\n";
  return kOk;
}

struct ContinueArgs {
  Io io;
  Model m;
  double lambda_start = 1.0, lambda_end = 0.1, lambda_step = 0.01;
  std::string start = "default";
  bool no_reentry = false;
  int max_iters = 5000;
};

int run_continue(Run& run, const ContinueArgs& x) {
  const Family f = parse_family(x.m.family);
  const SeParams sp = x.m.params();
  if (!(x.lambda_step > 0.0) || !(x.lambda_end > 0.0) || x.lambda_end > x.lambda_start) {
    throw ConfigError("need lambda-start >= lambda-end > 0 and a positive lambda-step");
  }
  x.m.penalty();
  const auto lambdas = lambda_path(x.lambda_start, x.lambda_end, x.lambda_step);
  ContinuationOptions o;
  o.start = pick_start(x.start, std::nullopt, std::nullopt, sp);
  o.reentry_search = !x.no_reentry;
  o.se.max_iters = x.max_iters;
  if (x.io.dry_run) return run.plan("track the fixed point over " + std::to_string(lambdas.size()) + " lambda values");
  const auto pts = fixed_point_continuation(lambdas, f, x.m.a, sp, o);
  const auto gaps = continuation_gaps(pts);
  auto& os = run.out();
  if (run.json_format()) {
    json rows = json::array();
    for (const auto& p : pts) {
      rows.push_back({{"lambda", p.lambda}, {"V", p.outcome.final.V}, {"eps", p.outcome.final.eps},
                      {"class", std::string(to_string(p.outcome.classification))}, {"gap", p.gap},
                      {"reentered", p.reentered}});
    }
    json gj = json::array();
    for (const auto& g : gaps) gj.push_back({{"upper", g.upper}, {"lower", g.lower}});
    os << json{{"points", rows}, {"gaps", gj}}.dump(2) << "\n";
  } else {
    os << "lambda,V,eps,class,gap_flag\n";
    for (const auto& p : pts) {
      os << num(p.lambda) << "," << num(p.outcome.final.V) << "," << num(p.outcome.final.eps) << ","
         << to_string(p.outcome.classification) << "," << (p.gap ? 1 : 0) << "\n";
    }
  }
  run.finish();
  for (const auto& g : gaps) std::cerr << "gap: lambda in (" << num(g.lower) << ", " << num(g.upper) << ")\n";
  return kOk;
}

struct SaddleArgs {
  Io io;
  Model m;
  std::optional<double> chi0, eps0;
  double damping = 0.5;
  double tol = 1e-12;
  int max_sweeps = 100000;
};

int run_saddle(Run& run, const SaddleArgs& x) {
  const PenaltySpec p = x.m.penalty();
  const SeParams sp = x.m.params();
  SaddleInit init = SaddleInit::from_se(sp);
  if (x.chi0) init.chi = *x.chi0;
  if (x.eps0) init.eps = *x.eps0;
  if (!(init.chi > 0.0) || !(init.eps >= 0.0)) throw ConfigError("--chi0 must be positive and --eps0 nonnegative");
  SaddleOptions o;
  o.damping = x.damping;
  o.tol = x.tol;
  o.max_sweeps = x.max_sweeps;
  if (!(o.damping > 0.0 && o.damping <= 1.0)) throw ConfigError("--damping must lie in (0, 1]");
  if (x.io.dry_run) return run.plan("solve the saddle-point system from chi=" + num(init.chi) + ", eps=" + num(init.eps));
  const SaddleSolution s = solve_saddle(p, sp, init, o);
  auto& os = run.out();
  if (run.json_format()) {
    os << saddle_json(s).dump(2) << "\n";
  } else {
    os << "Q,chi,m,Qt,chit,mt,rho_hat,eps,at_lhs,converged,status,sweeps\n";
    os << num(s.Q) << "," << num(s.chi) << "," << num(s.m) << "," << num(s.Qt) << "," << num(s.chit) << ","
       << num(s.mt) << "," << num(s.rho_hat) << "," << num(s.eps) << "," << num(s.at_lhs) << ","
       << (s.converged ? 1 : 0) << "," << to_string(s.status) << "," << s.sweeps << "\n";
  }
  run.finish();
  return s.converged ? kOk : kNumerical;
}

struct SuccessArgs {
  Io io;
  Model m;
};

int run_success(Run& run, const SuccessArgs& x) {
  const PenaltySpec p = x.m.penalty();
  const SeParams sp = x.m.params();
  if (x.io.dry_run) return run.plan("solve the scalar success equation and its stability");
  SuccessSolution s;
  try {
    s = solve_success(p, sp);
  } catch (const NoSuccessRoot& e) {
    throw NumericalFailure(std::string(e.what()) + " (scanned [" + num(e.lo()) + ", " + num(e.hi()) +
                           "]); the success solution does not exist here");
  }
  auto& os = run.out();
  if (run.json_format()) {
    json j{{"chit", s.chit},
           {"theta_minus", s.theta_minus},
           {"theta_plus", s.theta_plus},
           {"stable", s.stable},
           {"stability_lhs", s.stability_lhs},
           {"iteration_converged", s.iteration_converged}};
    os << j.dump(2) << "\n";
  } else {
    os << "chit,theta_minus,theta_plus,stable,stability_lhs\n"
       << num(s.chit) << "," << num(s.theta_minus) << "," << num(s.theta_plus) << "," << (s.stable ? 1 : 0) << ","
       << num(s.stability_lhs) << "\n";
  }
  run.finish();
  return kOk;
}

struct PhaseArgs {
  Io io;
  Model m;
  std::string rho_grid, alpha_grid;
  double tol = 1e-5;
  int jobs = 1;
};

int run_phase(Run& run, const PhaseArgs& x) {
  const PenaltySpec p = x.m.penalty();
  if (x.rho_grid.empty() == x.alpha_grid.empty()) throw ConfigError("give exactly one of --rho-grid or --alpha-grid");
  if (x.jobs < 1) throw ConfigError("--jobs must be at least 1");
  const bool over_rho = !x.rho_grid.empty();
  const auto grid = over_rho ? parse_range(x.rho_grid, "--rho-grid") : parse_range(x.alpha_grid, "--alpha-grid");
  for (double g : grid) {
    if (!(g > 0.0 && g <= 1.0)) throw ConfigError("grid values must lie in (0, 1]");
  }
  if (!(x.m.sigma_x2 > 0.0)) throw ConfigError("--sigma-x2 must be positive");
  if (x.io.dry_run) {
    return run.plan(std::string(over_rho ? "alpha_c" : "rho_c") + " at " + std::to_string(grid.size()) + " points");
  }
  std::vector<BoundaryResult> res(grid.size());
  parallel_for(grid.size(), x.jobs, [&](std::size_t k) {
    res[k] = over_rho ? alpha_c(p, grid[k], x.m.sigma_x2, x.tol) : rho_c(p, grid[k], x.m.sigma_x2, x.tol);
  });
  auto& os = run.out();
  const std::string fam(to_string(p.family()));
  if (run.json_format()) {
    json rows = json::array();
    for (std::size_t k = 0; k < grid.size(); ++k) {
      rows.push_back({{over_rho ? "rho" : "alpha", grid[k]}, {over_rho ? "alpha_c" : "rho_c", res[k].value},
                      {"bracketed", res[k].bracketed}});
    }
    os << json{{"family", fam}, {"lambda", p.lambda()}, {"a", p.a()}, {"points", rows}}.dump(2) << "\n";
  } else {
    os << (over_rho ? "rho,alpha_c" : "alpha,rho_c") << ",family,lambda,a\n";
    for (std::size_t k = 0; k < grid.size(); ++k) {
      os << num(grid[k]) << "," << num(res[k].value) << "," << fam << "," << num(p.lambda()) << "," << num(p.a()) << "\n";
    }
  }
  run.finish();
  const bool all = std::all_of(res.begin(), res.end(), [](const BoundaryResult& r) { return r.bracketed; });
  return all ? kOk : kNumerical;
}

struct BoundaryArgs {
  Io io;
  Model m;
  std::string quantity = "a_c";
  std::string lambda_grid, rho_grid;
  int jobs = 1;
};

int run_boundary(Run& run, const BoundaryArgs& x) {
  const Family f = parse_family(x.m.family);
  if (f == Family::L1) throw ConfigError("boundary needs --family scad or mcp; l1 has no a");
  if (x.jobs < 1) throw ConfigError("--jobs must be at least 1");
  x.m.params();
  const bool a_mode = x.quantity == "a_c";
  std::vector<double> grid;
  if (a_mode) {
    if (!x.rho_grid.empty()) throw ConfigError("--rho-grid applies to --quantity lambda_c; use --lambda-grid");
    grid = x.lambda_grid.empty() ? std::vector<double>{x.m.lambda} : parse_range(x.lambda_grid, "--lambda-grid");
    for (double l : grid) {
      if (!(l > 0.0)) throw ConfigError("lambda values must be positive");
    }
  } else {
    if (!x.lambda_grid.empty()) throw ConfigError("--lambda-grid applies to --quantity a_c; use --rho-grid");
    grid = x.rho_grid.empty() ? std::vector<double>{x.m.rho} : parse_range(x.rho_grid, "--rho-grid");
    for (double r : grid) SeParams{x.m.alpha, r, x.m.sigma_x2}.validate();
  }
  if (x.io.dry_run) return run.plan(x.quantity + " at " + std::to_string(grid.size()) + " points");
  std::vector<BoundaryResult> res(grid.size());
  parallel_for(grid.size(), x.jobs, [&](std::size_t k) {
    res[k] = a_mode ? a_c_of_lambda(f, grid[k], x.m.alpha, x.m.rho, x.m.sigma_x2)
                    : lambda_c(f, x.m.alpha, grid[k], x.m.sigma_x2);
  });
  auto& os = run.out();
  const std::string fam(to_string(f));
  const char* key = a_mode ? "lambda" : "rho";
  if (run.json_format()) {
    json rows = json::array();
    for (std::size_t k = 0; k < grid.size(); ++k) {
      rows.push_back({{key, grid[k]}, {x.quantity, res[k].value}, {"capped", res[k].capped}});
    }
    os << json{{"family", fam}, {"alpha", x.m.alpha}, {"points", rows}}.dump(2) << "\n";
  } else {
    os << key << "," << x.quantity << ",capped,family,alpha" << (a_mode ? ",rho" : "") << "\n";
    for (std::size_t k = 0; k < grid.size(); ++k) {
      os << num(grid[k]) << "," << num(res[k].value) << "," << (res[k].capped ? 1 : 0) << "," << fam << ","
         << num(x.m.alpha);
      if (a_mode) os << "," << num(x.m.rho);
      os << "\n";
    }
  }
  run.finish();
  return kOk;
}

struct NccArgs {
  Io io;
  Model m;
  double lambda_start = 1.0, lambda_end = 0.1, lambda_step = 0.002;
  double tol = 1e-3;
  bool max_over_a = false;
};

int run_ncc(Run& run, const NccArgs& x) {
  const Family f = parse_family(x.m.family);
  SeParams{x.m.alpha, 0.5 * x.m.alpha, x.m.sigma_x2}.validate();
  NccOptions o;
  o.lambda_start = x.lambda_start;
  o.lambda_end = x.lambda_end;
  o.lambda_step = x.lambda_step;
  o.tol = x.tol;
  if (!(o.lambda_step > 0.0) || !(o.lambda_end > 0.0) || o.lambda_end > o.lambda_start) {
    throw ConfigError("need lambda-start >= lambda-end > 0 and a positive lambda-step");
  }
  if (!(o.tol > 0.0)) throw ConfigError("--tol must be positive");
  if (!x.max_over_a && f != Family::L1) PenaltySpec(f, 1.0, x.m.a);
  if (x.io.dry_run) return run.plan(x.max_over_a ? "NCC limit for each a in {2, 3, 5, 10}" : "NCC limit at one a");
  auto& os = run.out();
  std::vector<std::pair<double, double>> rows;
  json extra;
  if (x.max_over_a) {
    const NccMax r = ncc_limit_max_over_a(f, x.m.alpha, x.m.sigma_x2, o);
    rows = r.per_a;
    extra = {{"best_a", r.best_a}, {"ncc_limit", r.value}};
  } else {
    const BoundaryResult r = ncc_limit(f, x.m.a, x.m.alpha, x.m.sigma_x2, o);
    rows.emplace_back(x.m.a, r.value);
    extra = {{"a", x.m.a}, {"ncc_limit", r.value}, {"lo", r.lo}, {"hi", r.hi}};
  }
  if (run.json_format()) {
    json j = extra;
    j["family"] = std::string(to_string(f));
    j["alpha"] = x.m.alpha;
    json per = json::array();
    for (const auto& [a, v] : rows) per.push_back({{"a", a}, {"ncc_limit", v}});
    j["per_a"] = per;
    os << j.dump(2) << "\n";
  } else {
    os << "a,ncc_limit,family,alpha\n";
    for (const auto& [a, v] : rows) os << num(a) << "," << num(v) << "," << to_string(f) << "," << num(x.m.alpha) << "\n";
  }
  run.finish();
  return kOk;
}

// ---------------------------------------------------------------- config file

std::vector<std::string> config_args(CLI::App* sub, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = path + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key == "config") throw ConfigError(where + ": a config file cannot name another config file");
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "help") {
      throw ConfigError(where + ": unknown key '" + key + "' for '" + sub->get_name() + "'; see " + sub->get_name() +
                        " --help");
    }
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1" || value == "yes" || value == "on") {
        out.push_back("--" + key);
      } else if (!(value == "false" || value == "0" || value == "no" || value == "off")) {
        throw ConfigError(where + ": '" + key + "' is a switch; use true or false");
      }
      continue;
    }
    out.push_back("--" + key);
    out.push_back(value);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonconvex sparse recovery: thresholds, AMP, state evolution and replica boundaries.", "ncvxcs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", NCVXCS_VERSION);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  ProxArgs prox;
  auto* s_prox = app.add_subcommand("prox", "evaluate the threshold operator at one point");
  prox.io.format = "text";
  add_io(s_prox, prox.io, false);
  s_prox->add_option("--format", prox.io.format, "text or json")->check(CLI::IsMember({"text", "json"}));
  add_penalty(s_prox, prox.m);
  s_prox->add_option("--s", prox.s, "inverse curvature");
  s_prox->add_option("--w", prox.w, "field")->required();

  AmpArgs amp;
  amp.m.rho = 0.28;
  auto* s_amp = app.add_subcommand("amp", "run AMP on a synthetic instance");
  add_io(s_amp, amp.io);
  add_penalty(s_amp, amp.m);
  add_ensemble(s_amp, amp.m);
  s_amp->add_option("--n", amp.n, "signal length N");
  s_amp->add_option("--seed", amp.seed, "instance seed");
  s_amp->add_option("--schedule", amp.schedule, "start:step:end@k lambda plan (default: constant --lambda)");
  s_amp->add_option("--steps", amp.steps, "scheduled steps for a constant lambda");
  s_amp->add_option("--max-iters", amp.max_iters, "iteration cap");
  s_amp->add_option("--tol", amp.tol, "convergence tolerance on the mean squared update");
  s_amp->add_option("--damping", amp.damping, "weight of the new estimate, in (0, 1]");
  s_amp->add_option("--vhat-init", amp.vhat_init, "initial per-component variance (default rho*sigma_x2)");
  s_amp->add_flag("--stop-at-schedule-end", amp.stop_at_schedule_end, "do not hold the last schedule value");
  s_amp->add_option("--instance", amp.instance, "load the instance from a binary file instead of generating it");
  s_amp->add_option("--save-instance", amp.save_instance, "write the instance to a binary file");

  SeRunArgs se;
  auto* s_se = app.add_subcommand("se-run", "iterate the two-dimensional state map");
  add_io(s_se, se.io);
  add_penalty(s_se, se.m);
  add_ensemble(s_se, se.m);
  s_se->add_option("--start", se.start, "default (rho/alpha, rho/alpha) or amp (rho*sigma_x2, rho*sigma_x2)");
  s_se->add_option("--v0", se.v0, "starting V (overrides --start)");
  s_se->add_option("--eps0", se.eps0, "starting eps (overrides --start)");
  s_se->add_option("--max-iters", se.max_iters, "iteration cap");

  auto add_grid = [](CLI::App* sub, GridArgs& g, bool iters) {
    add_io(sub, g.io);
    add_penalty(sub, g.m);
    add_ensemble(sub, g.m);
    sub->add_option("--v-grid", g.v_grid, "lo:hi:count[:log] for V");
    sub->add_option("--eps-grid", g.eps_grid, "lo:hi:count[:log] for eps");
    sub->add_option("--grid-count", g.count, "nodes per axis for the default rectangle");
    sub->add_option("--jobs", g.jobs, "worker threads");
    if (iters) sub->add_option("--max-iters", g.max_iters, "iteration cap per starting point");
  };
  GridArgs flow;
  auto* s_flow = app.add_subcommand("se-flow", "one-step flow field of the state map on a grid");
  add_grid(s_flow, flow, false);
  GridArgs basin;
  auto* s_basin = app.add_subcommand("basin", "basin of attraction of the success state on a grid");
  add_grid(s_basin, basin, true);

  ContinueArgs cont;
  cont.m.rho = 0.32;
  auto* s_cont = app.add_subcommand("continue", "track the fixed point while lambda decreases");
  add_io(s_cont, cont.io);
  add_family(s_cont, cont.m);
  s_cont->add_option("--a", cont.m.a, "nonconvexity");
  add_ensemble(s_cont, cont.m);
  s_cont->add_option("--lambda-start", cont.lambda_start, "first lambda");
  s_cont->add_option("--lambda-end", cont.lambda_end, "last lambda");
  s_cont->add_option("--lambda-step", cont.lambda_step, "decrement");
  s_cont->add_option("--start", cont.start, "default or amp starting state");
  s_cont->add_flag("--no-reentry", cont.no_reentry, "report every lost track as a gap");
  s_cont->add_option("--max-iters", cont.max_iters, "iteration cap per lambda");

  SaddleArgs sad;
  auto* s_sad = app.add_subcommand("saddle", "solve the full saddle-point system");
  add_io(s_sad, sad.io);
  add_penalty(s_sad, sad.m);
  add_ensemble(s_sad, sad.m);
  s_sad->add_option("--chi0", sad.chi0, "starting chi (default rho/alpha)");
  s_sad->add_option("--eps0", sad.eps0, "starting eps (default rho/alpha)");
  s_sad->add_option("--damping", sad.damping, "damping in (0, 1]");
  s_sad->add_option("--tol", sad.tol, "convergence tolerance");
  s_sad->add_option("--max-sweeps", sad.max_sweeps, "sweep cap");

  SuccessArgs suc;
  auto* s_suc = app.add_subcommand("success", "success solution and its stability");
  add_io(s_suc, suc.io);
  add_penalty(s_suc, suc.m);
  add_ensemble(s_suc, suc.m);

  PhaseArgs ph;
  ph.m.lambda = 0.01;
  auto* s_ph = app.add_subcommand("phase", "reconstruction boundary alpha_c(rho) or rho_c(alpha)");
  add_io(s_ph, ph.io);
  add_penalty(s_ph, ph.m);
  s_ph->add_option("--sigma-x2", ph.m.sigma_x2, "signal variance");
  auto* rg = s_ph->add_option("--rho-grid", ph.rho_grid, "lo:hi:step of rho, gives alpha_c");
  auto* ag = s_ph->add_option("--alpha-grid", ph.alpha_grid, "lo:hi:step of alpha, gives rho_c");
  rg->excludes(ag);
  s_ph->add_option("--tol", ph.tol, "bisection tolerance");
  s_ph->add_option("--jobs", ph.jobs, "worker threads");

  BoundaryArgs bd;
  bd.m.rho = 0.3;
  auto* s_bd = app.add_subcommand("boundary", "a_c(lambda) or lambda_c(rho) at fixed alpha");
  add_io(s_bd, bd.io);
  add_family(s_bd, bd.m);
  s_bd->add_option("--lambda", bd.m.lambda, "lambda for a single a_c point");
  add_ensemble(s_bd, bd.m);
  s_bd->add_option("--quantity", bd.quantity, "a_c or lambda_c")->check(CLI::IsMember({"a_c", "lambda_c"}));
  s_bd->add_option("--lambda-grid", bd.lambda_grid, "lo:hi:step of lambda for a_c");
  s_bd->add_option("--rho-grid", bd.rho_grid, "lo:hi:step of rho for lambda_c");
  s_bd->add_option("--jobs", bd.jobs, "worker threads");

  NccArgs ncc;
  auto* s_ncc = app.add_subcommand("ncc", "largest rho reachable by nonconvexity control");
  add_io(s_ncc, ncc.io);
  add_family(s_ncc, ncc.m);
  s_ncc->add_option("--a", ncc.m.a, "nonconvexity");
  add_ensemble(s_ncc, ncc.m, false);
  s_ncc->add_option("--lambda-start", ncc.lambda_start, "first lambda");
  s_ncc->add_option("--lambda-end", ncc.lambda_end, "last lambda");
  s_ncc->add_option("--lambda-step", ncc.lambda_step, "decrement");
  s_ncc->add_option("--tol", ncc.tol, "bisection tolerance on rho");
  s_ncc->add_flag("--max-over-a", ncc.max_over_a, "maximise over a in {2, 3, 5, 10}");

  // Splice config-file entries in front of the explicit flags so the flags win.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (!args.empty()) {
      CLI::App* sub = app.get_subcommand_no_throw(args.front());
      if (sub != nullptr) {
        std::string cfg;
        for (std::size_t i = 1; i < args.size(); ++i) {
          if (args[i] == "--config" && i + 1 < args.size()) cfg = args[i + 1];
          if (args[i].rfind("--config=", 0) == 0) cfg = args[i].substr(9);
        }
        if (!cfg.empty()) {
          auto extra = config_args(sub, cfg);
          args.insert(args.begin() + 1, extra.begin(), extra.end());
        }
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadConfig;
  }

  std::string command = "ncvxcs";
  for (int i = 1; i < argc; ++i) command += std::string(" ") + argv[i];

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "; run with --help for usage\n";
    return kBadConfig;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    auto io_of = [&]() -> const Io& {
      if (name == "prox") return prox.io;
      if (name == "amp") return amp.io;
      if (name == "se-run") return se.io;
      if (name == "se-flow") return flow.io;
      if (name == "basin") return basin.io;
      if (name == "continue") return cont.io;
      if (name == "saddle") return sad.io;
      if (name == "success") return suc.io;
      if (name == "phase") return ph.io;
      if (name == "boundary") return bd.io;
      return ncc.io;
    };
    Run run(sub, io_of(), command);
    if (name == "prox") return run_prox(run, prox);
    if (name == "amp") return run_amp(run, amp);
    if (name == "se-run") return run_se(run, se);
    if (name == "se-flow") return run_flow(run, flow);
    if (name == "basin") return run_basin(run, basin);
    if (name == "continue") return run_continue(run, cont);
    if (name == "saddle") return run_saddle(run, sad);
    if (name == "success") return run_success(run, suc);
    if (name == "phase") return run_phase(run, ph);
    if (name == "boundary") return run_boundary(run, bd);
    return run_ncc(run, ncc);
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const AdmissibilityError& e) {
    std::cerr << "error: " << e.what() << "; raise --a\n";
    return kBadConfig;
  } catch (const std::bad_alloc&) {
    std::cerr << "numerical failure: out of memory; reduce the problem size\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  }
}
