#include "ncvxcs/amp.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ncvxcs {

namespace {

double parse_number(std::string_view s, std::string_view what, std::string_view spec) {
  double v = 0.0;
  const auto* b = s.data();
  const auto* e = s.data() + s.size();
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) {
    std::ostringstream os;
    os << "schedule '" << spec << "': cannot read " << what << " from '" << s
       << "'; expected start:step:end@k, e.g. 1.0:-0.1:0.1@20";
    throw std::invalid_argument(os.str());
  }
  return v;
}

}  // namespace

void ControlSchedule::validate() const {
  if (segments.empty()) throw std::invalid_argument("schedule has no segments");
  for (const auto& s : segments) {
    if (s.steps <= 0) throw std::invalid_argument("schedule segment needs a positive step count");
    PenaltySpec(family, s.lambda, family == Family::L1 ? std::numeric_limits<double>::infinity() : s.a);
  }
}

int ControlSchedule::total_steps() const {
  int n = 0;
  for (const auto& s : segments) n += s.steps;
  return n;
}

PenaltySpec ControlSchedule::at(int t) const {
  int end = 0;
  for (const auto& s : segments) {
    end += s.steps;
    if (t <= end) return PenaltySpec(family, s.lambda, family == Family::L1 ? std::numeric_limits<double>::infinity() : s.a);
  }
  const auto& last = segments.back();
  return PenaltySpec(family, last.lambda, family == Family::L1 ? std::numeric_limits<double>::infinity() : last.a);
}

ControlSchedule ControlSchedule::constant(const PenaltySpec& p, int steps) {
  ControlSchedule c;
  c.family = p.family();
  c.segments.push_back({p.lambda(), p.a(), steps});
  c.validate();
  return c;
}

ControlSchedule ControlSchedule::parse(std::string_view spec, Family family, double a) {
  const auto at = spec.find('@');
  if (at == std::string_view::npos) {
    throw std::invalid_argument("schedule '" + std::string(spec) + "' lacks '@k'; expected start:step:end@k");
  }
  const double k_raw = parse_number(spec.substr(at + 1), "iterations per value", spec);
  if (k_raw < 1 || k_raw != std::floor(k_raw)) throw std::invalid_argument("schedule iterations per value must be a positive integer");
  const int k = static_cast<int>(k_raw);
  const std::string_view head = spec.substr(0, at);

  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (true) {
    const auto c = head.find(':', pos);
    parts.push_back(head.substr(pos, c == std::string_view::npos ? std::string_view::npos : c - pos));
    if (c == std::string_view::npos) break;
    pos = c + 1;
  }
  ControlSchedule out;
  out.family = family;
  if (parts.size() == 1) {
    out.segments.push_back({parse_number(parts[0], "lambda", spec), a, k});
  } else if (parts.size() == 3) {
    const double start = parse_number(parts[0], "start", spec);
    const double step = parse_number(parts[1], "step", spec);
    const double end = parse_number(parts[2], "end", spec);
    if (step == 0.0 || (end - start) * step < 0.0) {
      throw std::invalid_argument("schedule '" + std::string(spec) + "': step must be nonzero and move start towards end");
    }
    const long count = std::lround(std::floor((end - start) / step + 0.5));
    for (long i = 0; i <= count; ++i) out.segments.push_back({start + static_cast<double>(i) * step, a, k});
  } else {
    throw std::invalid_argument("schedule '" + std::string(spec) + "': expected start:step:end@k or value@k");
  }
  out.validate();
  return out;
}

std::string_view to_string(AmpStatus s) {
  switch (s) {
    case AmpStatus::Converged: return "Converged";
    case AmpStatus::MaxIters: return "MaxIters";
    case AmpStatus::Diverged: return "Diverged";
    case AmpStatus::AdmissibilityViolation: return "AdmissibilityViolation";
  }
  return "?";
}

AmpReport amp_run(const DenseMatrix& A, std::span<const double> y, const ControlSchedule& schedule,
                  const AmpOptions& opts, std::span<const double> truth) {
  schedule.validate();
  const std::size_t n = A.cols();
  const std::size_t m = A.rows();
  if (y.size() != m) throw std::invalid_argument("measurement length does not match the matrix");
  if (!truth.empty() && truth.size() != n) throw std::invalid_argument("truth length does not match the matrix");
  if (!opts.vhat_init) throw std::invalid_argument("amp_run without an instance needs vhat_init");
  if (!(opts.damping > 0.0 && opts.damping <= 1.0)) throw std::invalid_argument("damping must lie in (0, 1]");
  if (opts.max_iters < 1) throw std::invalid_argument("max_iters must be positive");

  const double alpha = static_cast<double>(m) / static_cast<double>(n);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto mse_of = [&](const std::vector<double>& x) {
    if (truth.empty()) return nan;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += (x[i] - truth[i]) * (x[i] - truth[i]);
    return acc / static_cast<double>(n);
  };

  std::vector<double> x(n, 0.0), x_new(n), Ax(m), R(m, 0.0), g(n);
  double V = *opts.vhat_init * static_cast<double>(n) / static_cast<double>(m);
  const int scheduled = schedule.total_steps();

  AmpReport rep;
  const PenaltySpec p0 = schedule.at(1);
  rep.trajectory.push_back({0, p0.lambda(), p0.a(), mse_of(x), V, nan});

  auto residual_into = [&](const std::vector<double>& est) {
    A.multiply(est, Ax);
    double r2 = 0.0;
    for (std::size_t mu = 0; mu < m; ++mu) {
      const double zm = y[mu] - Ax[mu];
      r2 += zm * zm;
    }
    return r2 / static_cast<double>(m);
  };

  bool stopped = false;
  for (int t = 1; t <= opts.max_iters; ++t) {
    if (!opts.hold_final && t > scheduled) {
      rep.status = AmpStatus::MaxIters;
      stopped = true;
      break;
    }
    const PenaltySpec p = schedule.at(t);
    if (!is_admissible(p, V)) {
      rep.trajectory.back().residual = residual_into(x);
      rep.status = AmpStatus::AdmissibilityViolation;
      rep.violation_t = t;
      stopped = true;
      break;
    }
    // Onsager-corrected residual: the previous R carries the memory term.
    const double tau = alpha * V;
    double r2 = 0.0;
    A.sweep(x, g, [&](std::size_t mu, double d) {
      const double zm = y[mu] - d;
      r2 += zm * zm;
      R[mu] = zm / tau + R[mu];
      return R[mu];
    });
    rep.trajectory.back().residual = r2 / static_cast<double>(m);
    double vsum = 0.0;
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = x[i] / V + g[i];
      const ThresholdResult th = threshold_field(V, h, p);
      vsum += th.sigma_factor;
      const double xn = opts.damping * th.x_star + (1.0 - opts.damping) * x[i];
      change += (xn - x[i]) * (xn - x[i]);
      x_new[i] = xn;
    }
    x.swap(x_new);
    change /= static_cast<double>(n);
    double V_next = vsum / static_cast<double>(m);
    if (V_next < 1e-300) {
      V_next = 1e-300;
      ++rep.floor_clamps;
    }
    V = V_next;
    rep.iterations = t;
    const double mse = mse_of(x);
    rep.trajectory.push_back({t, p.lambda(), p.a(), mse, V, nan});
    if (!std::isfinite(V) || V > opts.divergence || !std::isfinite(change) ||
        (!truth.empty() && (!std::isfinite(mse) || mse > opts.divergence))) {
      rep.status = AmpStatus::Diverged;
      stopped = true;
      break;
    }
    if (t >= scheduled && change <= opts.tol) {
      rep.status = AmpStatus::Converged;
      stopped = true;
      break;
    }
  }
  if (!stopped) rep.status = AmpStatus::MaxIters;
  if (std::isnan(rep.trajectory.back().residual)) rep.trajectory.back().residual = residual_into(x);
  rep.final_xhat = std::move(x);
  return rep;
}

AmpReport amp_run(const ProblemInstance& inst, const ControlSchedule& schedule, const AmpOptions& opts) {
  AmpOptions o = opts;
  if (!o.vhat_init) o.vhat_init = inst.params.rho * inst.params.sigma_x2;
  return amp_run(inst.matrix, inst.y, schedule, o, inst.x0);
}

bool success_indicator(const AmpReport& report, double tol) {
  const double mse = report.final_mse();
  if (std::isnan(mse)) throw std::invalid_argument("success indicator needs a run with known truth");
  return mse <= tol;
}

void write_trajectory_csv(std::ostream& out, const AmpReport& report) {
  out << "t,lambda,a,mse,V_hat,residual\n";
  char buf[256];
  for (const auto& r : report.trajectory) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.t, r.lambda, r.a, r.mse, r.V_hat,
                  r.residual);
    out << buf;
  }
}

}  // namespace ncvxcs
