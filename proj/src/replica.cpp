#include "ncvxcs/replica.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ncvxcs/gauss_math.hpp"

namespace ncvxcs {

namespace {

constexpr double kInvSqrtPi = 1.0 / kSqrtPi;

// 1/(a-1) for SCAD, 1/a for MCP, 0 for L1: the curvature the transition piece removes.
double curvature_loss(const PenaltySpec& p) {
  switch (p.family()) {
    case Family::SCAD: return 1.0 / (p.a() - 1.0);
    case Family::MCP: return 1.0 / p.a();
    case Family::L1: return 0.0;
  }
  return 0.0;
}

struct Thetas {
  double t1 = 0.0;
  double t2 = 0.0;
  double t3 = 0.0;  // SCAD only
};

Thetas thetas(const PenaltySpec& p, double qt, double sigma) {
  const double lam = p.lambda();
  const double d = kSqrt2 * sigma;
  Thetas t;
  t.t1 = lam / d;
  switch (p.family()) {
    case Family::SCAD:
      t.t2 = lam * (1.0 + qt) / d;
      t.t3 = p.a() * lam * qt / d;
      break;
    case Family::MCP: t.t2 = p.a() * lam * qt / d; break;
    case Family::L1: t.t2 = std::numeric_limits<double>::infinity(); break;
  }
  return t;
}

double e2(double t) { return std::isinf(t) ? 0.0 : std::exp(-t * t); }

// Transition-region probability.
double transition_mass(const PenaltySpec& p, const Thetas& t) {
  switch (p.family()) {
    case Family::SCAD: return ncvxcs::erfc(t.t2) - ncvxcs::erfc(t.t3);
    case Family::MCP: return ncvxcs::erfc(t.t1) - ncvxcs::erfc(t.t2);
    case Family::L1: return 0.0;
  }
  return 0.0;
}

}  // namespace

XiTerms xi_terms(const PenaltySpec& p, double qt, double sigma) {
  XiTerms x;
  if (sigma == 0.0) return x;
  const double lam = p.lambda();
  const double s2 = sigma * sigma;
  const Thetas t = thetas(p, qt, sigma);
  switch (p.family()) {
    case Family::SCAD: {
      const double a = p.a();
      const double k = 1.0 / (a - 1.0);
      x.xi4 = ncvxcs::erfc(t.t2) - ncvxcs::erfc(t.t3);
      x.xi1 = (s2 / qt) * (-2.0 * kInvSqrtPi * t.t1 * (e2(t.t1) + (qt - 1.0) * e2(t.t2)) +
                           (1.0 + 2.0 * t.t1 * t.t1) * (ncvxcs::erfc(t.t1) - ncvxcs::erfc(t.t2)));
      const double r = t.t3 / (qt * (a - 1.0));
      x.xi2 = (s2 / (qt - k)) *
              (2.0 * kInvSqrtPi * (theta_exp(t.t2) - theta_exp(t.t3) - 2.0 * r * (e2(t.t2) - e2(t.t3))) +
               (x.xi4 > 0.0 ? (1.0 + 2.0 * r * r) * x.xi4 : 0.0));
      x.xi3 = (s2 / qt) * (2.0 * kInvSqrtPi * theta_exp(t.t3) + ncvxcs::erfc(t.t3));
      x.minus_xi = x.xi1 + x.xi2 + x.xi3 + lam * lam * x.xi4 / (a - 1.0) - (a + 1.0) * lam * lam * ncvxcs::erfc(t.t3);
      break;
    }
    case Family::MCP: {
      const double a = p.a();
      const double k = 1.0 / a;
      x.xi3 = ncvxcs::erfc(t.t1) - ncvxcs::erfc(t.t2);
      x.xi1 = -2.0 * s2 * kInvSqrtPi / (qt - k) *
                  (t.t1 * (e2(t.t1) - e2(t.t2)) - (std::isinf(t.t2) ? 0.0 : e2(t.t2) * (t.t1 - t.t2))) +
              (s2 + lam * lam) * x.xi3 / (qt - k);
      x.xi2 = (s2 / qt) * (2.0 * kInvSqrtPi * theta_exp(t.t2) + ncvxcs::erfc(t.t2)) - a * lam * lam * ncvxcs::erfc(t.t2);
      x.minus_xi = x.xi1 + x.xi2;
      break;
    }
    case Family::L1: {
      x.xi1 = (s2 / qt) * (-2.0 * kInvSqrtPi * theta_exp(t.t1) + (1.0 + 2.0 * t.t1 * t.t1) * ncvxcs::erfc(t.t1));
      x.minus_xi = x.xi1;
      break;
    }
  }
  return x;
}

FieldAverages field_averages(const PenaltySpec& p, double qt, double sigma) {
  FieldAverages f;
  if (sigma == 0.0) return f;
  const Thetas t = thetas(p, qt, sigma);
  const XiTerms x = xi_terms(p, qt, sigma);
  const double k = curvature_loss(p);
  f.active = ncvxcs::erfc(t.t1);
  f.transition = transition_mass(p, t);
  switch (p.family()) {
    case Family::SCAD: f.second = x.xi1 / qt + x.xi2 / (qt - k) + x.xi3 / qt; break;
    case Family::MCP:
      f.second = x.xi1 / (qt - k) +
                 (sigma * sigma / (qt * qt)) * (2.0 * kInvSqrtPi * theta_exp(t.t2) + ncvxcs::erfc(t.t2));
      break;
    case Family::L1: f.second = x.xi1 / qt; break;
  }
  f.slope = (f.active + k * f.transition / (qt - k)) / qt;
  f.slope2 = (f.active - f.transition) / (qt * qt) + f.transition / ((qt - k) * (qt - k));
  return f;
}

std::string_view to_string(SaddleStatus s) {
  switch (s) {
    case SaddleStatus::Converged: return "Converged";
    case SaddleStatus::MaxSweeps: return "MaxSweeps";
    case SaddleStatus::Diverged: return "Diverged";
    case SaddleStatus::Inadmissible: return "Inadmissible";
  }
  return "?";
}

namespace {

struct OmegaUpdate {
  double Q = 0.0;
  double chi = 0.0;
  double m = 0.0;
  double rho_hat = 0.0;
  double eps = 0.0;
  double slope2_avg = 0.0;
};

// Order parameters from conjugates with mt = qt. The error is computed without the
// Q - 2m + rho sigma_x^2 cancellation.
OmegaUpdate omega_from_conjugates(const PenaltySpec& p, const SeParams& params, double qt, double chit) {
  const double mt = qt;
  const SigmaMixture mix = SigmaMixture::from_conjugates(params.rho, chit, mt, params.sigma_x2);
  const FieldAverages lo = field_averages(p, qt, mix.sigma_minus);
  const FieldAverages hi = field_averages(p, qt, mix.sigma_plus);
  const double r = params.rho;
  OmegaUpdate u;
  u.Q = (1.0 - r) * lo.second + r * hi.second;
  u.chi = (1.0 - r) * lo.slope + r * hi.slope;
  u.m = r * params.sigma_x2 * mt * hi.slope;
  u.rho_hat = (1.0 - r) * lo.active + r * hi.active;
  u.slope2_avg = (1.0 - r) * lo.slope2 + r * hi.slope2;
  const ProxPieces pieces = prox_pieces(p, 1.0 / qt);
  const ProxMoments minus = prox_moments(pieces, mix.sigma_minus / qt);
  const ProxMoments plus = prox_moments(pieces, mix.sigma_plus / qt);
  const double signal = std::max(0.0, plus.resid2 + (chit / (qt * qt)) * (2.0 * plus.gain - 1.0));
  u.eps = (1.0 - r) * minus.value2 + r * signal;
  return u;
}

}  // namespace

SaddleSolution solve_saddle(const PenaltySpec& p, const SeParams& params, const SaddleInit& init,
                            const SaddleOptions& opts) {
  params.validate();
  if (!(std::isfinite(init.chi) && std::isfinite(init.eps)) || init.chi <= 0.0 || init.eps < 0.0) {
    throw std::invalid_argument("saddle init needs chi > 0 and eps >= 0, both finite");
  }
  if (!(opts.damping > 0.0 && opts.damping <= 1.0)) throw std::invalid_argument("damping must lie in (0, 1]");
  const double alpha = params.alpha;
  const double k = curvature_loss(p);
  const double g = opts.damping;

  // The iterated state is the conjugate pair (qt, chit); damping it leaves the
  // success ratio chit = alpha eps / chi^2 where the undamped map puts it.
  double qt = alpha / init.chi;
  double chit = alpha * init.eps / (init.chi * init.chi);
  OmegaUpdate prev;
  SaddleSolution sol;
  int streak = 0;
  auto finish = [&](const OmegaUpdate& u, SaddleStatus status) {
    sol.Q = u.Q;
    sol.chi = u.chi;
    sol.m = u.m;
    sol.eps = u.eps;
    sol.rho_hat = u.rho_hat;
    sol.Qt = alpha / u.chi;
    sol.mt = sol.Qt;
    sol.chit = alpha * u.eps / (u.chi * u.chi);
    sol.status = status;
    sol.converged = status == SaddleStatus::Converged;
    const bool admissible = p.family() == Family::L1 || sol.Qt > k;
    sol.at_lhs = admissible && std::isfinite(sol.Qt) ? at_condition_general(sol, p, params)
                                                     : std::numeric_limits<double>::quiet_NaN();
    return sol;
  };
  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    bool projected = false;
    if (p.family() != Family::L1 && qt <= k) {
      qt = k * (1.0 + 1e-9);
      projected = true;
    }
    const OmegaUpdate u = omega_from_conjugates(p, params, qt, chit);
    streak = projected ? streak + 1 : 0;
    sol.projections += projected ? 1 : 0;
    sol.sweeps = sweep;
    if (!std::isfinite(u.chi) || !std::isfinite(u.eps) || u.chi > opts.divergence || u.eps > opts.divergence) {
      return finish(u, SaddleStatus::Diverged);
    }
    if (streak > opts.max_projections) return finish(u, SaddleStatus::Inadmissible);
    if (u.chi <= 1e-300) return finish(u, SaddleStatus::Converged);

    const double qt_next = g * alpha / u.chi + (1.0 - g) * qt;
    const double chit_next = g * alpha * u.eps / (u.chi * u.chi) + (1.0 - g) * chit;
    double change = std::abs(chit_next - chit) / std::max(1.0, chit);
    if (sweep > 1) {
      change = std::max({change, std::abs(u.Q - prev.Q), std::abs(u.chi - prev.chi), std::abs(u.m - prev.m),
                         std::abs(u.eps - prev.eps)});
    } else {
      change = std::numeric_limits<double>::infinity();
    }
    sol.last_change = change;
    prev = u;
    qt = qt_next;
    chit = chit_next;
    if (change <= opts.tol && !projected) return finish(u, SaddleStatus::Converged);
  }
  return finish(prev, SaddleStatus::MaxSweeps);
}

double at_condition_general(const SaddleSolution& sol, const PenaltySpec& p, const SeParams& params) {
  const SigmaMixture mix = SigmaMixture::from_conjugates(params.rho, sol.chit, sol.mt, params.sigma_x2);
  const FieldAverages lo = field_averages(p, sol.Qt, mix.sigma_minus);
  const FieldAverages hi = field_averages(p, sol.Qt, mix.sigma_plus);
  const double avg = (1.0 - params.rho) * lo.slope2 + params.rho * hi.slope2;
  return params.alpha / (sol.chi * sol.chi) * avg;
}

NoSuccessRoot::NoSuccessRoot(double lo, double hi, double min_gap)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "no positive success root in [" << lo << ", " << hi << "]; min of F(chit) - chit is " << min_gap;
        return os.str();
      }()),
      lo_(lo),
      hi_(hi) {}

double success_rhs(const PenaltySpec& p, const SeParams& params, double chit) {
  const double lam = p.lambda();
  const double rho = params.rho;
  const double sx2 = params.sigma_x2;
  const double tm = chit > 0.0 ? lam / std::sqrt(2.0 * chit) : std::numeric_limits<double>::infinity();
  const double tp = lam / std::sqrt(2.0 * sx2);
  const double noise = -2.0 * chit * kInvSqrtPi * theta_exp(tm) + (chit + lam * lam) * ncvxcs::erfc(tm);
  double signal = chit;
  switch (p.family()) {
    case Family::SCAD: {
      const double a = p.a();
      const double am1 = a - 1.0;
      const double c = a * lam / am1;
      signal += lam * lam * (1.0 - ncvxcs::erfc(tp)) +
                (c * c + sx2 / (am1 * am1)) * (ncvxcs::erfc(tp) - ncvxcs::erfc(a * tp)) +
                2.0 * sx2 * tp * kInvSqrtPi / am1 * ((a / am1) * (e2(a * tp) - e2(tp)) - e2(tp));
      break;
    }
    case Family::MCP: {
      const double a = p.a();
      signal += (lam * lam + sx2 / (a * a)) * (1.0 - ncvxcs::erfc(a * tp)) +
                2.0 * sx2 * tp * kInvSqrtPi / a * e2(a * tp) - 4.0 * sx2 * tp * kInvSqrtPi / a;
      break;
    }
    case Family::L1: signal += lam * lam; break;
  }
  return ((1.0 - rho) * noise + rho * signal) / params.alpha;
}

double success_stability_lhs(const PenaltySpec& p, const SeParams& params, double chit) {
  const double tm = chit > 0.0 ? p.lambda() / std::sqrt(2.0 * chit) : std::numeric_limits<double>::infinity();
  return ((1.0 - params.rho) * ncvxcs::erfc(tm) + params.rho) / params.alpha;
}

namespace {

SuccessSolution finish_success(const PenaltySpec& p, const SeParams& params, double chit, bool iterated) {
  SuccessSolution s;
  s.chit = chit;
  s.theta_minus = chit > 0.0 ? p.lambda() / std::sqrt(2.0 * chit) : std::numeric_limits<double>::infinity();
  s.theta_plus = p.lambda() / std::sqrt(2.0 * params.sigma_x2);
  s.stability_lhs = success_stability_lhs(p, params, chit);
  s.stable = s.stability_lhs < 1.0;
  s.iteration_converged = iterated;
  return s;
}

// Geometric bisection of a predicate that is true at lo and false at hi.
template <class Pred>
double geometric_bisect(double lo, double hi, Pred pred, int iters = 200) {
  for (int i = 0; i < iters && hi / lo > 1.0 + 1e-15; ++i) {
    const double mid = std::sqrt(lo * hi);
    if (pred(mid)) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

SuccessSolution solve_success(const PenaltySpec& p, const SeParams& params) {
  params.validate();
  if (params.rho == 0.0) return finish_success(p, params, 0.0, true);
  const double lo = 1e-16;
  const double hi = 1e3 * std::max(params.sigma_x2, p.lambda() * p.lambda());
  auto gap = [&](double c) { return success_rhs(p, params, c) - c; };

  // gap is convex with derivative lhs - 1; its minimum sits where lhs = 1.
  double turn = hi;
  if (success_stability_lhs(p, params, lo) >= 1.0) {
    turn = lo;
  } else if (success_stability_lhs(p, params, hi) >= 1.0) {
    turn = geometric_bisect(lo, hi, [&](double c) { return success_stability_lhs(p, params, c) < 1.0; });
  }
  const double gmin = gap(turn);
  const double glo = gap(lo);
  if (glo <= 0.0) return finish_success(p, params, lo, false);
  if (gmin > 0.0) throw NoSuccessRoot(lo, hi, gmin);

  const double root = geometric_bisect(lo, turn, [&](double c) { return gap(c) > 0.0; });

  // Plain iteration from the bottom of the bracket climbs monotonically to the smaller root.
  double c = lo;
  bool iterated = false;
  for (int i = 0; i < 100000; ++i) {
    const double next = success_rhs(p, params, c);
    if (std::abs(next - c) <= 1e-15 * next) {
      c = next;
      iterated = true;
      break;
    }
    c = next;
  }
  if (iterated && std::abs(c - root) <= 1e-10 * std::max(1.0, root)) return finish_success(p, params, c, true);
  return finish_success(p, params, root, false);
}

bool success_is_stable(const PenaltySpec& p, const SeParams& params) {
  try {
    return solve_success(p, params).stable;
  } catch (const NoSuccessRoot&) {
    return false;
  }
}

SaddleSolution success_as_saddle(const SuccessSolution& s, const PenaltySpec& p, const SeParams& params,
                                 double qtilde) {
  SaddleSolution sol;
  sol.Qt = qtilde;
  sol.mt = qtilde;
  sol.chit = s.chit;
  sol.chi = params.alpha / qtilde;
  sol.Q = params.rho * params.sigma_x2;
  sol.m = params.rho * params.sigma_x2;
  sol.eps = 0.0;
  const SigmaMixture mix = SigmaMixture::from_conjugates(params.rho, sol.chit, sol.mt, params.sigma_x2);
  sol.rho_hat = (1.0 - params.rho) * field_averages(p, qtilde, mix.sigma_minus).active +
                params.rho * field_averages(p, qtilde, mix.sigma_plus).active;
  sol.at_lhs = at_condition_general(sol, p, params);
  sol.converged = true;
  sol.status = SaddleStatus::Converged;
  return sol;
}

namespace {

// Bisection for the boundary between a stable end `good` and an unstable end `bad`.
template <class Pred>
void bisect_boundary(BoundaryResult& r, double good, double bad, double tol, Pred stable) {
  while (std::abs(bad - good) > tol) {
    const double mid = 0.5 * (good + bad);
    const bool s = stable(mid);
    r.history.push_back({mid, s});
    if (s) good = mid;
    else bad = mid;
  }
  r.lo = std::min(good, bad);
  r.hi = std::max(good, bad);
  r.value = 0.5 * (good + bad);
}

}  // namespace

BoundaryResult alpha_c(const PenaltySpec& p, double rho, double sigma_x2, double tol) {
  BoundaryResult r;
  auto stable = [&](double alpha) { return success_is_stable(p, SeParams{alpha, rho, sigma_x2}); };
  const double bad = std::max(rho, 1e-12);
  const double good = 1.0;
  const bool s_good = stable(good);
  r.history.push_back({good, s_good});
  if (!s_good) {
    r.bracketed = false;
    r.value = r.lo = r.hi = good;
    return r;
  }
  bisect_boundary(r, good, bad, tol, stable);
  return r;
}

BoundaryResult rho_c(const PenaltySpec& p, double alpha, double sigma_x2, double tol) {
  BoundaryResult r;
  auto stable = [&](double rho) { return success_is_stable(p, SeParams{alpha, rho, sigma_x2}); };
  const double good = 0.0;
  const double bad = std::min(alpha, 1.0 - 1e-12);
  const bool s_bad = stable(bad);
  r.history.push_back({bad, s_bad});
  if (s_bad) {
    r.bracketed = false;
    r.value = r.lo = r.hi = bad;
    return r;
  }
  bisect_boundary(r, good, bad, tol, stable);
  return r;
}

BoundaryResult a_c_of_lambda(Family family, double lambda, double alpha, double rho, double sigma_x2, double tol) {
  if (family == Family::L1) throw std::invalid_argument("a_c is defined for SCAD and MCP only");
  BoundaryResult r;
  const SeParams params{alpha, rho, sigma_x2};
  auto stable = [&](double a) {
    const bool s = success_is_stable(PenaltySpec(family, lambda, a), params);
    r.history.push_back({a, s});
    return s;
  };
  const double floor_a = 1.0 + kAFloorOffset;
  if (stable(kBoundaryCap)) {
    r.capped = true;
    r.value = r.lo = r.hi = kBoundaryCap;
    return r;
  }
  if (!stable(floor_a)) {
    r.value = 1.0;
    r.lo = 1.0;
    r.hi = floor_a;
    return r;
  }
  // bisect on a - 1 geometrically; stable below the boundary
  double good = floor_a - 1.0;
  double bad = kBoundaryCap - 1.0;
  while (bad / good > 1.0 + tol) {
    const double mid = std::sqrt(good * bad);
    if (stable(1.0 + mid)) good = mid;
    else bad = mid;
  }
  r.lo = 1.0 + good;
  r.hi = 1.0 + bad;
  r.value = 1.0 + std::sqrt(good * bad);
  return r;
}

BoundaryResult lambda_c(Family family, double alpha, double rho, double sigma_x2, double rel_tol) {
  if (family == Family::L1) throw std::invalid_argument("lambda_c is defined for SCAD and MCP only");
  BoundaryResult r;
  auto stable = [&](double lam) {
    const bool s = a_c_of_lambda(family, lam, alpha, rho, sigma_x2).value > 1.0;
    r.history.push_back({lam, s});
    return s;
  };
  double good = 1e-3;
  if (!stable(good)) {
    r.bracketed = false;
    r.value = 0.0;
    r.lo = 0.0;
    r.hi = good;
    return r;
  }
  double bad = good;
  for (;;) {
    bad = std::min(bad * 2.0, kBoundaryCap);
    if (!stable(bad)) break;
    good = bad;
    if (bad >= kBoundaryCap) {
      r.capped = true;
      r.value = r.lo = r.hi = kBoundaryCap;
      return r;
    }
  }
  while (bad / good > 1.0 + rel_tol) {
    const double mid = std::sqrt(good * bad);
    if (stable(mid)) good = mid;
    else bad = mid;
  }
  r.lo = good;
  r.hi = bad;
  r.value = std::sqrt(good * bad);
  return r;
}

bool continuation_controllable(Family family, double a, const SeParams& params, const NccOptions& opts) {
  const auto lambdas = lambda_path(opts.lambda_start, opts.lambda_end, opts.lambda_step);
  ContinuationOptions copts;
  copts.reentry_search = false;
  const auto pts = fixed_point_continuation(lambdas, family, a, params, copts);
  for (const auto& pt : pts) {
    if (pt.gap) return false;
  }
  const auto& last = pts.back();
  if (last.outcome.classification == SeClass::Success) return true;
  SeOptions finish;
  finish.max_iters = opts.final_iters;
  const SeOutcome tail = se_run(last.outcome.final, PenaltySpec(family, last.lambda, a), params, finish);
  return tail.classification == SeClass::Success;
}

BoundaryResult ncc_limit(Family family, double a, double alpha, double sigma_x2, const NccOptions& opts) {
  BoundaryResult r;
  auto ok = [&](double rho) { return continuation_controllable(family, a, SeParams{alpha, rho, sigma_x2}, opts); };
  const double good = opts.rho_lo;
  const double bad = opts.rho_hi > 0.0 ? opts.rho_hi : std::min(alpha, 1.0 - 1e-9);
  const bool g_ok = ok(good);
  r.history.push_back({good, g_ok});
  const bool b_ok = ok(bad);
  r.history.push_back({bad, b_ok});
  if (!g_ok || b_ok) {
    r.bracketed = false;
    r.value = g_ok ? bad : good;
    r.lo = good;
    r.hi = bad;
    return r;
  }
  bisect_boundary(r, good, bad, opts.tol, ok);
  return r;
}

NccMax ncc_limit_max_over_a(Family family, double alpha, double sigma_x2, const NccOptions& opts,
                            const std::vector<double>& a_values) {
  NccMax out;
  out.value = -std::numeric_limits<double>::infinity();
  for (double a : a_values) {
    const double v = ncc_limit(family, a, alpha, sigma_x2, opts).value;
    out.per_a.emplace_back(a, v);
    if (v > out.value) {
      out.value = v;
      out.best_a = a;
    }
  }
  return out;
}

}  // namespace ncvxcs
