#include "ncvxcs/state_evolution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ncvxcs/gauss_math.hpp"
#include "ncvxcs/parallel.hpp"

namespace ncvxcs {

namespace {

bool finite_point(SePoint p) { return std::isfinite(p.V) && std::isfinite(p.eps); }

bool tracked(SeClass c) {
  return c == SeClass::Success || c == SeClass::FiniteFixedPoint || c == SeClass::MaxIters;
}

double admissible_v_bound(const PenaltySpec& p, double alpha) {
  switch (p.family()) {
    case Family::SCAD: return alpha * (p.a() - 1.0);
    case Family::MCP: return alpha * p.a();
    case Family::L1: return std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

}  // namespace

void SeParams::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must lie in [0, 1]");
  if (!(sigma_x2 > 0.0) || !std::isfinite(sigma_x2)) throw std::invalid_argument("sigma_x2 must be positive");
}

std::string_view to_string(SeClass c) {
  switch (c) {
    case SeClass::Success: return "Success";
    case SeClass::FiniteFixedPoint: return "FiniteFixedPoint";
    case SeClass::Diverged: return "Diverged";
    case SeClass::MaxIters: return "MaxIters";
    case SeClass::Inadmissible: return "Inadmissible";
  }
  return "unknown";
}

ProxMoments prox_moments(const ProxPieces& pieces, double width) {
  ProxMoments out;
  if (width == 0.0) {
    for (const ProxPiece& piece : pieces) {
      if (piece.hi > 0.0) {
        out.gain = piece.gain;
        break;
      }
    }
    return out;
  }
  const double w2 = width * width;
  for (const ProxPiece& piece : pieces) {
    const double hi = std::isinf(piece.hi) ? piece.hi : piece.hi / width;
    const TruncatedMoments tm = truncated_moments(piece.lo / width, hi);
    if (tm.mass == 0.0 && tm.second == 0.0) continue;
    const double g = piece.gain;
    const double t = piece.shift;
    // Each half-line contributes equally, hence the factor 2.
    out.gain += 2.0 * g * tm.mass;
    out.value2 += 2.0 * g * g * (w2 * tm.second - 2.0 * width * t * tm.first + t * t * tm.mass);
    const double c1 = g - 1.0;
    const double c0 = -g * t;
    out.resid2 += 2.0 * (c1 * c1 * w2 * tm.second + 2.0 * c1 * c0 * width * tm.first + c0 * c0 * tm.mass);
  }
  return out;
}

std::optional<SePoint> se_step(SePoint pt, const PenaltySpec& p, const SeParams& params) {
  const double s = pt.V / params.alpha;
  if (!is_admissible(p, s)) return std::nullopt;
  const ProxPieces pieces = prox_pieces(p, s);
  const double nu = pt.eps / params.alpha;
  const ProxMoments noise = prox_moments(pieces, std::sqrt(nu));
  const ProxMoments signal = prox_moments(pieces, std::sqrt(nu + params.sigma_x2));
  const double rho = params.rho;
  SePoint next;
  next.V = s * ((1.0 - rho) * noise.gain + rho * signal.gain);
  // Signal part: E(xhat - x0)^2 = E(prox(m) - m)^2 + nu (2 E gain - 1) by Stein's lemma.
  const double signal_err = std::max(0.0, signal.resid2 + nu * (2.0 * signal.gain - 1.0));
  next.eps = (1.0 - rho) * noise.value2 + rho * signal_err;
  return next;
}

SeOutcome se_run(SePoint start, const PenaltySpec& p, const SeParams& params, const SeOptions& opts) {
  SeOutcome out;
  SePoint pt = start;
  if (opts.keep_trace) out.trace.push_back(pt);
  auto is_success = [&](SePoint q) { return q.V <= opts.success_tol && q.eps <= opts.success_tol; };
  for (int it = 0; it < opts.max_iters; ++it) {
    if (is_success(pt)) {
      out.classification = SeClass::Success;
      out.final = pt;
      out.iters = it;
      return out;
    }
    const auto next = se_step(pt, p, params);
    if (!next) {
      out.classification = SeClass::Inadmissible;
      out.final = pt;
      out.iters = it;
      return out;
    }
    if (opts.keep_trace) out.trace.push_back(*next);
    if (!finite_point(*next) || next->V > opts.divergence || next->eps > opts.divergence) {
      out.classification = SeClass::Diverged;
      out.final = *next;
      out.iters = it + 1;
      return out;
    }
    const double scale = opts.fp_tol * std::min(1.0, std::max(next->V, next->eps));
    if (std::abs(next->V - pt.V) <= scale && std::abs(next->eps - pt.eps) <= scale) {
      out.classification = is_success(*next) ? SeClass::Success : SeClass::FiniteFixedPoint;
      out.final = *next;
      out.iters = it + 1;
      return out;
    }
    pt = *next;
  }
  out.classification = is_success(pt) ? SeClass::Success : SeClass::MaxIters;
  out.final = pt;
  out.iters = opts.max_iters;
  return out;
}

std::vector<SePoint> se_trajectory(SePoint start, std::span<const PenaltySpec> penalties, const SeParams& params,
                                   double divergence) {
  std::vector<SePoint> out{start};
  SePoint pt = start;
  for (const PenaltySpec& p : penalties) {
    const auto next = se_step(pt, p, params);
    if (!next || !finite_point(*next)) break;
    out.push_back(*next);
    if (next->V > divergence || next->eps > divergence) break;
    pt = *next;
  }
  return out;
}

std::optional<std::array<double, 4>> se_jacobian(SePoint pt, const PenaltySpec& p, const SeParams& params) {
  std::array<double, 4> j{};
  const double hv = 1e-6 * std::max(pt.V, 1e-12);
  const double he = 1e-6 * std::max(pt.eps, 1e-12);
  for (int col = 0; col < 2; ++col) {
    const double h = col == 0 ? hv : he;
    SePoint plus = pt, minus = pt;
    (col == 0 ? plus.V : plus.eps) += h;
    double denom = 2.0 * h;
    if ((col == 0 ? pt.V : pt.eps) >= h) {
      (col == 0 ? minus.V : minus.eps) -= h;
    } else {
      denom = h;
    }
    const auto fp = se_step(plus, p, params);
    const auto fm = se_step(minus, p, params);
    if (!fp || !fm) return std::nullopt;
    j[col] = (fp->V - fm->V) / denom;
    j[2 + col] = (fp->eps - fm->eps) / denom;
  }
  return j;
}

double spectral_radius(const std::array<double, 4>& j) {
  const double tr = j[0] + j[3];
  const double det = j[0] * j[3] - j[1] * j[2];
  const double disc = 0.25 * tr * tr - det;
  if (disc < 0.0) return std::sqrt(std::max(det, 0.0));
  const double root = std::sqrt(disc);
  return std::max(std::abs(0.5 * tr + root), std::abs(0.5 * tr - root));
}

std::vector<double> GridAxis::nodes() const {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  for (int i = 0; i < count; ++i) {
    const double f = static_cast<double>(i) / (count - 1);
    out[i] = log ? lo * std::pow(hi / lo, f) : lo + f * (hi - lo);
  }
  return out;
}

std::vector<double> GridAxis::cell_widths() const {
  const auto x = nodes();
  std::vector<double> out(count);
  for (int i = 0; i < count; ++i) {
    const double left = i == 0 ? lo : 0.5 * (x[i - 1] + x[i]);
    const double right = i + 1 == count ? hi : 0.5 * (x[i] + x[i + 1]);
    out[i] = right - left;
  }
  return out;
}

void GridSpec::validate() const {
  for (const GridAxis* axis : {&v, &eps}) {
    if (axis->count < 1) throw std::invalid_argument("grid counts must be positive");
    if (!(axis->hi >= axis->lo) || axis->lo < 0.0) throw std::invalid_argument("grid range must satisfy 0 <= lo <= hi");
    if (axis->log && !(axis->lo > 0.0)) throw std::invalid_argument("log-spaced grid axes need lo > 0");
  }
}

GridSpec GridSpec::default_for(const SeParams& params, int count) {
  GridSpec g;
  g.v = {0.0, 2.0 * params.rho / params.alpha, count, false};
  g.eps = {0.0, 2.0 * params.rho * params.sigma_x2, count, false};
  return g;
}

std::vector<FlowNode> flow_field(const GridSpec& grid, const PenaltySpec& p, const SeParams& params, int jobs) {
  grid.validate();
  const auto vs = grid.v.nodes();
  const auto es = grid.eps.nodes();
  std::vector<FlowNode> out(vs.size() * es.size());
  parallel_for(out.size(), jobs, [&](std::size_t k) {
    FlowNode node;
    node.V = vs[k % vs.size()];
    node.eps = es[k / vs.size()];
    const auto next = se_step({node.V, node.eps}, p, params);
    if (!next) {
      node.admissible = false;
    } else {
      node.dV = next->V - node.V;
      node.deps = next->eps - node.eps;
      const double norm = std::hypot(node.dV, node.deps);
      if (norm > 0.0 && std::isfinite(norm)) {
        node.dir_V = node.dV / norm;
        node.dir_eps = node.deps / norm;
      }
    }
    out[k] = node;
  });
  return out;
}

BasinMap basin_map(const GridSpec& grid, const PenaltySpec& p, const SeParams& params, const SeOptions& opts,
                   int jobs) {
  grid.validate();
  BasinMap map;
  map.grid = grid;
  const auto vs = grid.v.nodes();
  const auto es = grid.eps.nodes();
  const auto wv = grid.v.cell_widths();
  const auto we = grid.eps.cell_widths();
  map.classes.assign(vs.size() * es.size(), SeClass::MaxIters);
  SeOptions run_opts = opts;
  run_opts.keep_trace = false;
  parallel_for(map.classes.size(), jobs, [&](std::size_t k) {
    map.classes[k] = se_run({vs[k % vs.size()], es[k / vs.size()]}, p, params, run_opts).classification;
  });
  for (std::size_t k = 0; k < map.classes.size(); ++k) {
    if (map.classes[k] != SeClass::Success) continue;
    map.volume += wv[k % vs.size()] * we[k / vs.size()];
    map.eps_max = std::max(map.eps_max, es[k / vs.size()]);
  }
  map.domain_area = (grid.v.hi - grid.v.lo) * (grid.eps.hi - grid.eps.lo);
  return map;
}

std::vector<FixedPointRoot> find_fixed_points(const PenaltySpec& p, const SeParams& params, double eps_floor) {
  const double v_bound = admissible_v_bound(p, params.alpha);
  const double v_hi = std::min(v_bound, 50.0 * std::max(params.rho / params.alpha, params.rho * params.sigma_x2));
  const double scale = params.sigma_x2;

  // Residual in log coordinates, relative to the state.
  auto residual = [&](double u, double v) -> std::optional<std::array<double, 2>> {
    const SePoint pt{std::exp(u), std::exp(v)};
    const auto f = se_step(pt, p, params);
    if (!f || !finite_point(*f)) return std::nullopt;
    return std::array<double, 2>{f->V / pt.V - 1.0, f->eps / pt.eps - 1.0};
  };

  // Seeds: a log grid, plus the same grid pushed forward by the map so that
  // seeds collect on slow manifolds near attracting or marginal fixed points.
  std::vector<SePoint> seeds;
  constexpr int kSeedsV = 10;
  constexpr int kSeedsE = 10;
  for (int iv = 0; iv < kSeedsV; ++iv) {
    for (int ie = 0; ie < kSeedsE; ++ie) {
      const SePoint seed{v_hi * (iv + 0.5) / kSeedsV, scale * std::pow(10.0, -6.0 + 7.0 * ie / (kSeedsE - 1))};
      seeds.push_back(seed);
      SePoint pt = seed;
      bool alive = true;
      for (int it = 0; it < 200 && alive; ++it) {
        const auto next = se_step(pt, p, params);
        alive = next && finite_point(*next) && next->V > 1e-10 && next->eps > 1e-10 && next->V < 1e6 &&
                next->eps < 1e6;
        if (alive) pt = *next;
      }
      if (alive) seeds.push_back(pt);
    }
  }

  std::vector<FixedPointRoot> roots;
  for (const SePoint& seed : seeds) {
    double u = std::log(seed.V);
    double v = std::log(seed.eps);
    auto g = residual(u, v);
    if (!g) continue;
    bool converged = false;
    for (int it = 0; it < 100 && !converged; ++it) {
      const double h = 1e-7;
      const auto gu = residual(u + h, v);
      const auto gv = residual(u, v + h);
      if (!gu || !gv) break;
      const double j00 = ((*gu)[0] - (*g)[0]) / h, j01 = ((*gv)[0] - (*g)[0]) / h;
      const double j10 = ((*gu)[1] - (*g)[1]) / h, j11 = ((*gv)[1] - (*g)[1]) / h;
      const double det = j00 * j11 - j01 * j10;
      if (!(std::abs(det) > 0.0) || !std::isfinite(det)) break;
      double du = -(j11 * (*g)[0] - j01 * (*g)[1]) / det;
      double dv = -(-j10 * (*g)[0] + j00 * (*g)[1]) / det;
      const double cap = 2.0;
      const double big = std::max(std::abs(du), std::abs(dv));
      if (big > cap) {
        du *= cap / big;
        dv *= cap / big;
      }
      const double norm0 = std::max(std::abs((*g)[0]), std::abs((*g)[1]));
      bool moved = false;
      for (int half = 0; half < 40; ++half) {
        const auto trial = residual(u + du, v + dv);
        if (trial && std::max(std::abs((*trial)[0]), std::abs((*trial)[1])) < norm0) {
          u += du;
          v += dv;
          g = trial;
          moved = true;
          break;
        }
        du *= 0.5;
        dv *= 0.5;
      }
      if (!moved) break;
      converged = std::max(std::abs((*g)[0]), std::abs((*g)[1])) < 1e-12;
    }
    if (!converged) continue;
    const SePoint pt{std::exp(u), std::exp(v)};
    if (pt.eps <= eps_floor) continue;
    const bool duplicate = std::any_of(roots.begin(), roots.end(), [&](const FixedPointRoot& r) {
      return std::abs(r.point.V - pt.V) <= 1e-6 * pt.V && std::abs(r.point.eps - pt.eps) <= 1e-6 * pt.eps;
    });
    if (duplicate) continue;
    const auto jac = se_jacobian(pt, p, params);
    roots.push_back({pt, jac ? spectral_radius(*jac) : std::numeric_limits<double>::infinity()});
  }
  std::sort(roots.begin(), roots.end(), [](const FixedPointRoot& a, const FixedPointRoot& b) {
    return a.point.eps < b.point.eps;
  });
  return roots;
}

std::vector<double> lambda_path(double start, double end, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("lambda step must be positive");
  if (!(start > end) || !(end > 0.0)) throw std::invalid_argument("lambda path must decrease from start to a positive end");
  const auto n = static_cast<long>(std::floor((start - end) / step + 0.5));
  std::vector<double> out;
  out.reserve(n + 1);
  for (long k = 0; k <= n; ++k) out.push_back(start - static_cast<double>(k) * step);
  return out;
}

std::vector<ContinuationPoint> fixed_point_continuation(std::span<const double> lambdas, Family family, double a,
                                                        const SeParams& params, const ContinuationOptions& opts) {
  params.validate();
  for (std::size_t i = 1; i < lambdas.size(); ++i) {
    if (!(lambdas[i] < lambdas[i - 1])) throw std::invalid_argument("lambda path must be strictly decreasing");
  }
  SePoint state = opts.start.value_or(params.default_start());
  std::vector<ContinuationPoint> out;
  out.reserve(lambdas.size());
  for (double lambda : lambdas) {
    const PenaltySpec p(family, lambda, a);
    ContinuationPoint point;
    point.lambda = lambda;
    point.outcome = se_run(state, p, params, opts.se);
    bool ok = tracked(point.outcome.classification);
    if (!ok && opts.reentry_search) {
      const auto roots = find_fixed_points(p, params);
      const FixedPointRoot* best = nullptr;
      double best_dist = std::numeric_limits<double>::infinity();
      for (const auto& r : roots) {
        if (!r.stable()) continue;
        const double d = std::hypot(std::log(r.point.V / std::max(state.V, 1e-300)),
                                    std::log(r.point.eps / std::max(state.eps, 1e-300)));
        if (d < best_dist) {
          best_dist = d;
          best = &r;
        }
      }
      if (best) {
        SeOutcome polished = se_run(best->point, p, params, opts.se);
        if (tracked(polished.classification)) {
          point.outcome = std::move(polished);
          point.reentered = true;
          ok = true;
        }
      }
    }
    point.gap = !ok;
    if (ok) state = point.outcome.final;
    out.push_back(std::move(point));
  }
  return out;
}

std::vector<GapInterval> continuation_gaps(std::span<const ContinuationPoint> points) {
  std::vector<GapInterval> gaps;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  bool open = false;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].gap && !open) {
      gaps.push_back({i == 0 ? nan : points[i - 1].lambda, nan});
      open = true;
    } else if (!points[i].gap && open) {
      gaps.back().lower = points[i].lambda;
      open = false;
    }
  }
  return gaps;
}

}  // namespace ncvxcs
