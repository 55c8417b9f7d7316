#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ncvxcs/gauss_math.hpp"
#include "ncvxcs/penalty.hpp"
#include "ncvxcs/state_evolution.hpp"

using namespace ncvxcs;

namespace {

// The map evaluated by direct piecewise quadrature of the field-convention threshold.
SePoint quadrature_step(SePoint pt, const PenaltySpec& p, const SeParams& prm) {
  const double s = pt.V / prm.alpha;
  const double nu = pt.eps / prm.alpha;
  double v_next = 0.0, e_next = 0.0;
  const double widths[2] = {std::sqrt(nu), std::sqrt(nu + prm.sigma_x2)};
  const double weights[2] = {1.0 - prm.rho, prm.rho};
  for (int k = 0; k < 2; ++k) {
    const double w = widths[k];
    std::vector<double> cuts;
    for (double b : {p.lambda(), p.lambda() * (1.0 + 1.0 / s), p.a() * p.lambda() / s}) {
      if (std::isfinite(b)) {
        cuts.push_back(s * b / w);
        cuts.push_back(-s * b / w);
      }
    }
    v_next += weights[k] * gauss_expect_piecewise(
                               [&](double z) { return threshold_deriv(s, w * z / s, p); }, cuts);
    if (k == 0) {
      e_next += weights[k] * gauss_expect_piecewise(
                                 [&](double z) {
                                   const double x = threshold_field(s, w * z / s, p).x_star;
                                   return x * x;
                                 },
                                 cuts);
    } else {
      // Condition on m: x0 | m ~ N(m sx^2 / w^2, sx^2 nu / w^2).
      e_next += weights[k] * gauss_expect_piecewise(
                                 [&](double z) {
                                   const double m = w * z;
                                   const double x = threshold_field(s, m / s, p).x_star;
                                   const double mean = m * prm.sigma_x2 / (w * w);
                                   const double var = prm.sigma_x2 * nu / (w * w);
                                   return (x - mean) * (x - mean) + var;
                                 },
                                 cuts);
    }
  }
  return {v_next, e_next};
}

}  // namespace

TEST_CASE("success point is fixed and empty signal stays empty") {
  const SeParams prm{0.5, 0.28, 1.0};
  for (const auto& p : {PenaltySpec::scad(1, 3), PenaltySpec::mcp(0.5, 2.5), PenaltySpec::l1(0.3)}) {
    const auto z = se_step({0.0, 0.0}, p, prm);
    REQUIRE(z);
    CHECK(z->V == 0.0);
    CHECK(z->eps == 0.0);
    const SeParams empty{0.5, 0.0, 1.0};
    for (double v : {0.1, 0.4, 0.9}) {
      const auto n = se_step({v, 0.0}, p, empty);
      REQUIRE(n);
      CHECK(n->eps == 0.0);
      CHECK(n->V == 0.0);
    }
  }
  // V = 0 with eps > 0: identity denoiser, error amplified by 1/alpha.
  const auto id = se_step({0.0, 0.2}, PenaltySpec::scad(1, 3), prm);
  REQUIRE(id);
  CHECK(id->V == 0.0);
  CHECK(id->eps == doctest::Approx(0.2 / 0.5 * (1 - 0.28) + 0.28 * 0.4));
}

TEST_CASE("inadmissible steps are signalled") {
  const SeParams prm{0.5, 0.28, 1.0};
  CHECK_FALSE(se_step({1.0, 0.3}, PenaltySpec::scad(1, 3), prm));
  CHECK(se_step({0.99, 0.3}, PenaltySpec::scad(1, 3), prm));
  CHECK_FALSE(se_step({1.5, 0.3}, PenaltySpec::mcp(1, 3), prm));
  CHECK(se_step({50.0, 0.3}, PenaltySpec::l1(1), prm));
}

TEST_CASE("se_step agrees with independent piecewise quadrature") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    const SeParams prm{0.2 + 0.8 * u(gen), 0.05 + 0.5 * u(gen), 0.5 + u(gen)};
    const int fam = i % 3;
    const double lambda = 0.05 + 1.5 * u(gen);
    const double a = 1.5 + 6.0 * u(gen);
    const PenaltySpec p = fam == 0 ? PenaltySpec::l1(lambda) : (fam == 1 ? PenaltySpec::scad(lambda, a) : PenaltySpec::mcp(lambda, a));
    const SePoint pt{0.02 + 1.5 * u(gen), 1e-3 + u(gen)};
    const auto got = se_step(pt, p, prm);
    if (!got) {
      CHECK_FALSE(is_admissible(p, pt.V / prm.alpha));
      continue;
    }
    const SePoint ref = quadrature_step(pt, p, prm);
    CHECK(got->V == doctest::Approx(ref.V).epsilon(1e-9));
    CHECK(got->eps == doctest::Approx(ref.eps).epsilon(1e-9));
    ++checked;
  }
  CHECK(checked > 150);
}

TEST_CASE("se_step agrees with a Monte-Carlo oracle") {
  const SeParams prm{0.5, 0.28, 1.0};
  const auto p = PenaltySpec::scad(1, 3);
  const SePoint pt{0.5, 0.5};
  const double s = pt.V / prm.alpha;
  const double sn = std::sqrt(pt.eps / prm.alpha);
  std::mt19937_64 gen(12345);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uni;
  const long n = 10'000'000;
  double sv = 0, sv2 = 0, se = 0, se2 = 0;
  for (long i = 0; i < n; ++i) {
    const double x0 = uni(gen) < prm.rho ? normal(gen) : 0.0;
    const double m = x0 + sn * normal(gen);
    const auto r = threshold_field(s, m / s, p);
    const double err = (r.x_star - x0) * (r.x_star - x0);
    sv += r.sigma_factor;
    sv2 += r.sigma_factor * r.sigma_factor;
    se += err;
    se2 += err * err;
  }
  const double mv = sv / n, me = se / n;
  const double sev = std::sqrt((sv2 / n - mv * mv) / n);
  const double see = std::sqrt((se2 / n - me * me) / n);
  const auto got = se_step(pt, p, prm);
  REQUIRE(got);
  CHECK(std::abs(got->V - mv) <= 3.0 * sev);
  CHECK(std::abs(got->eps - me) <= 3.0 * see);
}

TEST_CASE("se_run examples") {
  const SeParams prm{0.5, 0.28, 1.0};
  auto o = se_run({0.0, 0.0}, PenaltySpec::scad(1, 3), prm);
  CHECK(o.classification == SeClass::Success);
  CHECK(o.iters == 0);

  o = se_run(prm.default_start(), PenaltySpec::scad(1, 3), prm);
  CHECK(o.classification == SeClass::FiniteFixedPoint);
  CHECK(o.final.eps > 1e-3);
  const auto again = se_step(o.final, PenaltySpec::scad(1, 3), prm);
  CHECK(again->V == doctest::Approx(o.final.V).epsilon(1e-10));

  // The SCAD flow escapes through the admissibility boundary before any finite bound.
  o = se_run(prm.default_start(), PenaltySpec::scad(0.1, 3), prm);
  CHECK((o.classification == SeClass::Diverged || o.classification == SeClass::Inadmissible));
  // Without an admissibility boundary the same escape shows up as divergence.
  o = se_run({0.0, 0.5}, PenaltySpec::l1(0.1), prm);
  CHECK(o.classification == SeClass::Diverged);
}

TEST_CASE("classification is insensitive to thresholds") {
  const SeParams prm{0.5, 0.25, 1.0};
  const auto p = PenaltySpec::scad(0.3, 3);
  const std::vector<SePoint> starts{{0.05, 1e-3}, {0.2, 0.01}, {0.5, 0.3}, {0.1, 0.1}, {0.8, 0.02}};
  for (const auto& st : starts) {
    const auto base = se_run(st, p, prm).classification;
    for (double f : {1e-2, 1e2}) {
      SeOptions o;
      o.success_tol = 1e-10 * f;
      o.divergence = 1e8 * f;
      CHECK(se_run(st, p, prm, o).classification == base);
    }
  }
}

TEST_CASE("success trajectories end monotone in eps") {
  const SeParams prm{0.5, 0.15, 1.0};
  SeOptions opts;
  opts.keep_trace = true;
  for (const auto& p : {PenaltySpec::scad(0.3, 3), PenaltySpec::mcp(0.3, 3), PenaltySpec::l1(0.5)}) {
    const auto o = se_run({0.05, 0.01}, p, prm, opts);
    REQUIRE(o.classification == SeClass::Success);
    const std::size_t half = o.trace.size() / 2;
    for (std::size_t i = half + 1; i < o.trace.size(); ++i) CHECK(o.trace[i].eps <= o.trace[i - 1].eps);
  }
}

TEST_CASE("flow field") {
  const SeParams prm{0.5, 0.28, 1.0};
  GridSpec g;
  g.v = {0.0, 1.0, 50, false};
  g.eps = {0.0, 1.0, 50, false};
  const auto nodes = flow_field(g, PenaltySpec::scad(0.1, 3), prm, 2);
  REQUIRE(nodes.size() == 2500);
  CHECK(nodes[0].dV == 0.0);
  CHECK(nodes[0].deps == 0.0);
  // On this coarse grid every row above eps = 0 lies above the success band.
  for (const auto& n : nodes) {
    if (n.admissible && n.eps > 0.0) CHECK(n.deps > 0.0);
  }
  // V = 1 means s = a - 1.
  CHECK_FALSE(nodes[49].admissible);
  for (const auto& n : nodes) {
    if (n.admissible && (n.dV != 0.0 || n.deps != 0.0)) {
      CHECK(std::hypot(n.dir_V, n.dir_eps) == doctest::Approx(1.0));
    }
  }
  // Resolving small eps shows the band close to the V-axis that flows to eps = 0.
  GridSpec fine;
  fine.v = {0.0, 1.0, 50, false};
  fine.eps = {0.0, 0.04, 80, false};
  const auto low = flow_field(fine, PenaltySpec::scad(0.1, 3), prm, 2);
  int toward = 0;
  for (const auto& n : low) {
    if (n.admissible && n.deps < 0.0) {
      ++toward;
      CHECK(n.eps < 1.0 / 49.0);
      CHECK(n.eps > 0.0);
    }
  }
  CHECK(toward > 20);
  const SeParams empty{0.5, 0.0, 1.0};
  const auto flat = flow_field(g, PenaltySpec::scad(1.0, 3), empty);
  for (int iv = 0; iv < 50; ++iv) CHECK(flat[iv].deps == 0.0);
}

TEST_CASE("grid cells tile the rectangle") {
  for (bool lg : {false, true}) {
    GridAxis ax{lg ? 1e-4 : 0.0, 2.0, 17, lg};
    double total = 0;
    for (double w : ax.cell_widths()) total += w;
    CHECK(total == doctest::Approx(ax.hi - ax.lo));
    const auto x = ax.nodes();
    CHECK(x.front() == doctest::Approx(ax.lo));
    CHECK(x.back() == doctest::Approx(ax.hi));
  }
  GridSpec bad;
  bad.v = {0.0, 1.0, 5, true};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("basin volume follows its definition") {
  const SeParams prm{0.5, 0.25, 1.0};
  GridSpec g = GridSpec::default_for(prm, 12);
  const auto map = basin_map(g, PenaltySpec::scad(0.3, 3), prm, {}, 2);
  const auto wv = g.v.cell_widths();
  const auto we = g.eps.cell_widths();
  const auto es = g.eps.nodes();
  double vol = 0, emax = 0;
  for (int ie = 0; ie < 12; ++ie) {
    for (int iv = 0; iv < 12; ++iv) {
      if (map.at(iv, ie) == SeClass::Success) {
        vol += wv[iv] * we[ie];
        emax = std::max(emax, es[ie]);
      }
    }
  }
  CHECK(map.volume == doctest::Approx(vol));
  CHECK(map.eps_max == emax);
  CHECK(map.at(0, 0) == SeClass::Success);
  CHECK(map.domain_area == doctest::Approx(1.0 * 0.5));
}

TEST_CASE("l1 basin fills the rectangle above the l1 transition") {
  const SeParams prm{0.5, 0.1, 1.0};
  // V = 0 is excluded: a zero prox step never thresholds, so that line is invariant.
  GridSpec g = GridSpec::default_for(prm, 15);
  g.v.lo = 1e-3 * g.v.hi;
  const auto map = basin_map(g, PenaltySpec::l1(0.3), prm, {}, 2);
  for (auto c : map.classes) CHECK(c == SeClass::Success);
  CHECK(map.volume == doctest::Approx(map.domain_area));
}

TEST_CASE("lambda path") {
  const auto path = lambda_path(1.0, 0.1, 0.002);
  CHECK(path.size() == 451);
  CHECK(path.back() == doctest::Approx(0.1));
  CHECK_THROWS(lambda_path(0.1, 1.0, 0.1));
  const std::vector<double> up{0.1, 0.2};
  CHECK_THROWS(fixed_point_continuation(up, Family::SCAD, 3.0, {0.5, 0.3, 1.0}));
}

TEST_CASE("continuation for a controllable density reaches success without gaps") {
  const SeParams prm{0.5, 0.28, 1.0};
  const auto path = lambda_path(1.0, 0.1, 0.01);
  const auto pts = fixed_point_continuation(path, Family::SCAD, 3.0, prm);
  for (const auto& pt : pts) CHECK_FALSE(pt.gap);
  CHECK(pts.back().outcome.classification == SeClass::Success);
  CHECK(pts.front().outcome.classification == SeClass::FiniteFixedPoint);
  CHECK(continuation_gaps(pts).empty());
}

TEST_CASE("continuation with a huge a has no gap") {
  for (double rho : {0.1, 0.3, 0.4}) {
    const SeParams prm{0.5, rho, 1.0};
    const auto path = lambda_path(1.0, 0.1, 0.01);
    const auto pts = fixed_point_continuation(path, Family::SCAD, 1e8, prm);
    for (const auto& pt : pts) CHECK_FALSE(pt.gap);
  }
}

TEST_CASE("fixed point search finds both roots past the lower gap edge") {
  const SeParams prm{0.5, 0.32, 1.0};
  const auto roots = find_fixed_points(PenaltySpec::scad(0.2, 3), prm);
  REQUIRE(roots.size() == 2);
  CHECK(roots[0].stable());
  CHECK_FALSE(roots[1].stable());
  for (const auto& r : roots) {
    const auto f = se_step(r.point, PenaltySpec::scad(0.2, 3), prm);
    CHECK(f->V == doctest::Approx(r.point.V).epsilon(1e-10));
    CHECK(f->eps == doctest::Approx(r.point.eps).epsilon(1e-10));
  }
  CHECK(find_fixed_points(PenaltySpec::scad(0.4, 3), prm).empty());
}

TEST_CASE("gap bookkeeping") {
  std::vector<ContinuationPoint> pts(6);
  const bool gaps[6] = {false, false, true, true, false, true};
  for (int i = 0; i < 6; ++i) {
    pts[i].lambda = 1.0 - 0.1 * i;
    pts[i].gap = gaps[i];
  }
  const auto g = continuation_gaps(pts);
  REQUIRE(g.size() == 2);
  CHECK(g[0].upper == doctest::Approx(0.9));
  CHECK(g[0].lower == doctest::Approx(0.6));
  CHECK(g[1].upper == doctest::Approx(0.6));
  CHECK(std::isnan(g[1].lower));
}
