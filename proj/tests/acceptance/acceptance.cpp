// One PASS/FAIL line per acceptance criterion. Exit status is nonzero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ncvxcs/amp.hpp"
#include "ncvxcs/instance.hpp"
#include "ncvxcs/penalty.hpp"
#include "ncvxcs/replica.hpp"
#include "ncvxcs/state_evolution.hpp"
#include "oracles.hpp"

using namespace ncvxcs;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Verdict prox_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(1);
  int bad_x = 0, bad_obj = 0;
  double worst_x = 0.0, worst_obj = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto c = oracle::random_case(gen);
    const auto r = threshold_field(c.s, c.w, c.p);
    const auto g = oracle::grid_minimize(c.s, c.w, c.p);
    const long double xs = r.x_star;
    const double obj = static_cast<double>(xs * xs / (2.0L * c.s) - static_cast<long double>(c.w) * xs +
                                           oracle::penalty_ld(xs, c.p));
    const double dx = std::abs(r.x_star - g.x);
    const double dobj = std::abs(obj - g.value);
    worst_x = std::max(worst_x, dx);
    worst_obj = std::max(worst_obj, dobj);
    bad_x += dx > 1e-4;
    bad_obj += dobj > 1e-8;
  }
  const double secs = seconds_since(t0);
  return {bad_x == 0 && bad_obj == 0 && secs <= 60.0,
          fmt("10000 cases, max |dx|=%.2e, max |dobj|=%.2e, %.1f s", worst_x, worst_obj, secs)};
}

Verdict l1_reduction() {
  double sup = 0.0;
  for (Family fam : {Family::SCAD, Family::MCP}) {
    for (double lambda : {0.1, 1.0, 10.0}) {
      const PenaltySpec p(fam, lambda, 1e8);
      for (double s : {0.1, 0.5, 1.0, 3.0}) {
        for (int k = 0; k <= 20000; ++k) {
          const double w = -10.0 + 1e-3 * k;
          sup = std::max(sup, std::abs(threshold_field(s, w, p).x_star - oracle::soft_threshold(s, w, lambda)));
        }
      }
    }
  }
  double spread = 0.0;
  for (Family fam : {Family::SCAD, Family::MCP}) {
    for (double rho : {0.1, 0.2, 0.3}) {
      double lo = INFINITY, hi = -INFINITY;
      for (double lambda : {0.1, 1.0, 10.0}) {
        const double ac = alpha_c(PenaltySpec(fam, lambda, 1e8), rho).value;
        lo = std::min(lo, ac);
        hi = std::max(hi, ac);
      }
      spread = std::max(spread, hi - lo);
    }
  }
  return {sup <= 1e-6 && spread <= 1e-4,
          fmt("sup |threshold - soft| = %.2e, max alpha_c spread over lambda = %.2e", sup, spread)};
}

Verdict success_anchor() {
  const auto t0 = Clock::now();
  const double scad = alpha_c(PenaltySpec::scad(1e-3, 2), 0.3).value;
  const double mcp = alpha_c(PenaltySpec::mcp(1e-3, 2), 0.3).value;
  const double secs = seconds_since(t0);
  auto inside = [](double v) { return v > 0.300 && v < 0.310; };
  return {inside(scad) && inside(mcp) && secs <= 10.0,
          fmt("alpha_c scad=%.5f mcp=%.5f, %.2f s", scad, mcp, secs)};
}

Verdict at_equivalence() {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int n = 0;
  double worst = 0.0;
  while (n < 20) {
    const Family fam = n % 2 ? Family::MCP : Family::SCAD;
    const PenaltySpec p(fam, 0.05 + 1.95 * u(gen), 1.3 + 10.7 * u(gen));
    const SeParams prm{0.3 + 0.6 * u(gen), 0.05 + 0.25 * u(gen), 1.0};
    SuccessSolution s;
    try {
      s = solve_success(p, prm);
    } catch (const NoSuccessRoot&) {
      continue;
    }
    const double theta = p.lambda() / std::sqrt(2.0 * s.chit);
    const double direct = ((1.0 - prm.rho) * std::erfc(theta) + prm.rho) / prm.alpha;
    worst = std::max(worst, std::abs(at_condition_general(success_as_saddle(s, p, prm), p, prm) - direct));
    ++n;
  }
  return {worst <= 1e-8, fmt("20 points, max |general - closed form| = %.2e", worst)};
}

Verdict se_replica() {
  const PenaltySpec p = PenaltySpec::scad(1, 10);
  const double ac = alpha_c(p, 0.35).value;
  bool ok = true;
  double worst = 0.0, min_at = INFINITY;
  for (double d : {0.01, 0.03, 0.06}) {
    const SeParams prm{ac - d, 0.35, 1.0};
    const SeOutcome se = se_run(prm.default_start(), p, prm);
    const SaddleSolution sol = solve_saddle(p, prm, SaddleInit::from_se(prm));
    ok = ok && se.classification == SeClass::FiniteFixedPoint && sol.converged;
    worst = std::max({worst, std::abs(se.final.V - sol.chi),
                      std::abs(se.final.eps - (sol.Q - 2.0 * sol.m + prm.rho * prm.sigma_x2))});
    min_at = std::min(min_at, sol.at_lhs);
  }
  return {ok && worst <= 1e-8 && min_at > 1.0,
          fmt("alpha_c=%.5f, max |SE - saddle| = %.2e, min at_lhs = %.4f", ac, worst, min_at)};
}

struct AmpBatch {
  std::vector<double> mse;
  std::vector<std::string> status;
  double seconds = 0.0;
};

AmpBatch amp_batch(const ControlSchedule& schedule, int max_iters) {
  AmpBatch b;
  AmpOptions opts;
  opts.max_iters = max_iters;
  const auto t0 = Clock::now();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto inst = gen_instance({10000, 0.5, 0.28, 1.0, seed});
    const auto r = amp_run(inst, schedule, opts);
    b.mse.push_back(r.final_mse());
    b.status.emplace_back(to_string(r.status));
  }
  b.seconds = seconds_since(t0);
  return b;
}

std::string describe(const AmpBatch& b) {
  std::string s;
  for (std::size_t k = 0; k < b.mse.size(); ++k) s += fmt("%s%.2e(%s)", k ? " " : "", b.mse[k], b.status[k].c_str());
  return s;
}

Verdict naive_amp() {
  const auto b = amp_batch(ControlSchedule::constant(PenaltySpec::scad(0.1, 3), 1), 1000);
  const auto failed = std::count_if(b.mse.begin(), b.mse.end(), [](double m) { return m > 1e-2; });
  return {failed >= 4 && b.seconds <= 120.0,
          fmt("mse > 1e-2 in %d/5 [%s], %.1f s", static_cast<int>(failed), describe(b).c_str(), b.seconds)};
}

Verdict controlled_amp() {
  const auto b = amp_batch(ControlSchedule::parse("1.0:-0.1:0.1@20", Family::SCAD, 3), 1000);
  const auto hit = std::count_if(b.mse.begin(), b.mse.end(), [](double m) { return m <= 1e-8; });
  return {hit >= 4 && b.seconds <= 120.0,
          fmt("mse <= 1e-8 in %d/5 [%s], %.1f s", static_cast<int>(hit), describe(b).c_str(), b.seconds)};
}

Verdict continuation_gap() {
  const auto t0 = Clock::now();
  const auto path = lambda_path(1.0, 0.1, 0.002);
  const auto pts = fixed_point_continuation(path, Family::SCAD, 3, SeParams{0.5, 0.32, 1.0});
  const auto gaps = continuation_gaps(pts);
  const double secs = seconds_since(t0);
  if (gaps.size() != 1) return {false, fmt("%zu gaps detected, %.1f s", gaps.size(), secs)};
  const auto& g = gaps.front();
  const bool ok = std::abs(g.upper - 0.5530) <= 0.01 && std::abs(g.lower - 0.2117) <= 0.01 && secs <= 300.0;
  return {ok, fmt("gap (%.4f, %.4f), %.1f s", g.lower, g.upper, secs)};
}

Verdict amp_tracks_se() {
  const auto t0 = Clock::now();
  const SeParams prm{0.5, 0.28, 1.0};
  const auto schedule = ControlSchedule::parse("1.0:-0.1:0.1@20", Family::SCAD, 3);
  std::vector<std::vector<AmpRow>> runs;
  std::size_t longest = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto r = amp_run(gen_instance({20000, prm.alpha, prm.rho, prm.sigma_x2, seed}), schedule);
    longest = std::max(longest, r.trajectory.size());
    runs.push_back(std::move(r.trajectory));
  }
  std::vector<PenaltySpec> ps;
  for (std::size_t t = 1; t < longest; ++t) ps.push_back(schedule.at(static_cast<int>(t)));
  const auto se = se_trajectory(prm.amp_matched_start(), ps, prm);

  double worst = 0.0, worst_v = 0.0;
  int worst_t = 0, compared = 0;
  for (std::size_t t = 1; t < longest && t < se.size(); ++t) {
    double mse = 0.0, v = 0.0;
    for (const auto& tr : runs) {
      const AmpRow& row = t < tr.size() ? tr[t] : tr.back();
      mse += row.mse / 5.0;
      v += prm.alpha * row.V_hat / 5.0;
    }
    if (mse < 1e-6) break;
    ++compared;
    const double dev = std::abs(mse - se[t].eps) / se[t].eps;
    if (dev > worst) {
      worst = dev;
      worst_t = static_cast<int>(t);
    }
    worst_v = std::max(worst_v, std::abs(v - se[t].V) / se[t].V);
  }
  const double secs = seconds_since(t0);
  return {worst <= 0.15 && compared > 0,
          fmt("%d iterations compared, max mse deviation %.3f at t=%d, max alpha*V_hat deviation %.3f, %.1f s",
              compared, worst, worst_t, worst_v, secs)};
}

Verdict basin_properties() {
  const double alpha = 0.5;
  // One rectangle for every density; the invariant line V = 0 is left out.
  GridSpec g = GridSpec::default_for(SeParams{alpha, 0.4, 1.0}, 40);
  g.v.lo = 1e-3 * g.v.hi;
  g.eps.lo = 1e-6 * g.eps.hi;
  g.eps.log = true;

  bool ok = true;
  std::string detail;
  for (double lambda : {0.1, 0.3, 1.0}) {
    const PenaltySpec p = PenaltySpec::scad(lambda, 3);
    const double rc = rho_c(p, alpha).value;
    double prev = -1.0;
    detail += fmt("lambda=%.1f rho_c=%.4f vol:", lambda, rc);
    for (int k = 0; k < 5; ++k) {
      const double vol = basin_map(g, p, SeParams{alpha, rc - 0.04 * k, 1.0}).volume;
      detail += fmt(" %.4g", vol);
      ok = ok && (k == 0 ? vol == 0.0 : vol > prev);
      prev = vol;
    }
    detail += "; ";
  }
  const double v01 = basin_map(g, PenaltySpec::scad(0.1, 3), SeParams{alpha, 0.25, 1.0}).volume;
  const double v03 = basin_map(g, PenaltySpec::scad(0.3, 3), SeParams{alpha, 0.25, 1.0}).volume;
  ok = ok && v01 < v03;
  detail += fmt("rho=0.25: vol(0.1)=%.4g < vol(0.3)=%.4g; ", v01, v03);

  const double rho_l1 = 0.1;
  const double ac_l1 = alpha_c(PenaltySpec::l1(1), rho_l1).value;
  const auto l1 = basin_map(g, PenaltySpec::l1(0.3), SeParams{alpha, rho_l1, 1.0});
  const auto succ = std::count(l1.classes.begin(), l1.classes.end(), SeClass::Success);
  ok = ok && alpha > ac_l1 && succ == static_cast<long>(l1.classes.size());
  detail += fmt("l1 at rho=%.2f (alpha_c=%.4f): %ld/%zu Success", rho_l1, ac_l1, static_cast<long>(succ),
                l1.classes.size());
  return {ok, detail};
}

Verdict penalty_ordering() {
  bool ok = true;
  std::string detail;
  for (double rho : {0.3, 0.35}) {
    const double scad = lambda_c(Family::SCAD, 0.5, rho).value;
    const double mcp = lambda_c(Family::MCP, 0.5, rho).value;
    ok = ok && mcp > scad;
    detail += fmt("rho=%.2f lambda_c scad=%.4f mcp=%.4f; ", rho, scad, mcp);
  }
  const double scad = ncc_limit(Family::SCAD, 3, 0.5).value;
  const double mcp = ncc_limit(Family::MCP, 3, 0.5).value;
  ok = ok && scad - mcp > 0.0 && scad - mcp <= 0.05;
  detail += fmt("ncc scad=%.5f mcp=%.5f diff=%.5f", scad, mcp, scad - mcp);
  return {ok, detail};
}

}  // namespace

int main() {
  const std::vector<std::function<Verdict()>> criteria{
      prox_oracle,    l1_reduction,     success_anchor, at_equivalence,   se_replica,       naive_amp,
      controlled_amp, continuation_gap, amp_tracks_se,  basin_properties, penalty_ordering,
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Verdict v;
    try {
      v = criteria[k]();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("criterion %zu: %s %s\n", k + 1, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
