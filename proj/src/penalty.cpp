#include "ncvxcs/penalty.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace ncvxcs {

namespace {

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::string admissibility_message(double a, double a_min) {
  std::ostringstream os;
  os << "nonconvexity parameter a = " << a << " is not above a_min = " << a_min
     << "; the single-body problem has no finite minimizer";
  return os.str();
}

void require_admissible(const PenaltySpec& p, double s) {
  if (!is_admissible(p, s)) throw AdmissibilityError(p.a(), a_min(p, s));
}

}  // namespace

std::string_view to_string(Family family) {
  switch (family) {
    case Family::L1: return "l1";
    case Family::SCAD: return "scad";
    case Family::MCP: return "mcp";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "l1") return Family::L1;
  if (lower == "scad") return Family::SCAD;
  if (lower == "mcp") return Family::MCP;
  throw InvalidPenalty("unknown penalty family '" + std::string(name) + "' (expected l1, scad or mcp)");
}

std::string_view to_string(Region region) {
  switch (region) {
    case Region::Zero: return "Zero";
    case Region::L1Like: return "L1Like";
    case Region::Transition: return "Transition";
    case Region::Ols: return "Ols";
  }
  return "unknown";
}

AdmissibilityError::AdmissibilityError(double a, double a_min)
    : std::domain_error(admissibility_message(a, a_min)), a_(a), a_min_(a_min) {}

PenaltySpec::PenaltySpec(Family family, double lambda, double a)
    : family_(family), lambda_(lambda), a_(family == Family::L1 ? std::numeric_limits<double>::infinity() : a) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw InvalidPenalty("lambda must be a positive finite number");
  }
  if (family != Family::L1 && !(a > 1.0)) {
    throw InvalidPenalty("a must exceed 1 for SCAD and MCP");
  }
}

double penalty_value(double x, const PenaltySpec& p) {
  const double ax = std::abs(x);
  const double lam = p.lambda();
  const double a = p.a();
  switch (p.family()) {
    case Family::L1:
      return lam * ax;
    case Family::SCAD:
      if (ax <= lam) return lam * ax;
      if (ax <= a * lam) return -(ax * ax - 2.0 * a * lam * ax + lam * lam) / (2.0 * (a - 1.0));
      return 0.5 * (a + 1.0) * lam * lam;
    case Family::MCP:
      if (ax <= a * lam) return lam * ax - ax * ax / (2.0 * a);
      return 0.5 * a * lam * lam;
  }
  return 0.0;
}

double a_min(const PenaltySpec& p, double s) {
  switch (p.family()) {
    case Family::L1: return 1.0;
    case Family::SCAD: return std::max(1.0, 1.0 + s);
    case Family::MCP: return std::max(1.0, s);
  }
  return 1.0;
}

bool is_admissible(const PenaltySpec& p, double s) {
  return p.family() == Family::L1 || p.a() > a_min(p, s);
}

ThresholdResult threshold_field(double s, double w, const PenaltySpec& p) {
  if (!(s > 0.0)) throw std::invalid_argument("threshold_field requires s > 0");
  require_admissible(p, s);
  const double aw = std::abs(w);
  const double sg = sgn(w);
  const double lam = p.lambda();
  const double a = p.a();
  const double inv_s = 1.0 / s;
  ThresholdResult r;
  if (aw <= lam) return r;

  switch (p.family()) {
    case Family::L1:
      r.region = Region::L1Like;
      r.sigma_factor = s;
      r.x_star = s * (w - sg * lam);
      return r;
    case Family::SCAD:
      if (aw <= lam * (1.0 + inv_s)) {
        r.region = Region::L1Like;
        r.sigma_factor = s;
        r.x_star = s * (w - sg * lam);
      } else if (aw <= a * lam * inv_s) {
        r.region = Region::Transition;
        r.sigma_factor = 1.0 / (inv_s - 1.0 / (a - 1.0));
        r.x_star = r.sigma_factor * (w - sg * a * lam / (a - 1.0));
      } else {
        r.region = Region::Ols;
        r.sigma_factor = s;
        r.x_star = s * w;
      }
      return r;
    case Family::MCP:
      if (aw <= a * lam * inv_s) {
        r.region = Region::Transition;
        r.sigma_factor = 1.0 / (inv_s - 1.0 / a);
        r.x_star = r.sigma_factor * (w - sg * lam);
      } else {
        r.region = Region::Ols;
        r.sigma_factor = s;
        r.x_star = s * w;
      }
      return r;
  }
  return r;
}

ProxPieces prox_pieces(const PenaltySpec& p, double s) {
  if (!(s >= 0.0)) throw std::invalid_argument("prox step s must be non-negative");
  require_admissible(p, s);
  const double lam = p.lambda();
  const double a = p.a();
  const double inf = std::numeric_limits<double>::infinity();
  ProxPieces out;
  auto push = [&out](double lo, double hi, double gain, double shift, Region region) {
    if (hi > lo) out.pieces[out.count++] = ProxPiece{lo, hi, gain, shift, region};
  };
  push(0.0, s * lam, 0.0, 0.0, Region::Zero);
  switch (p.family()) {
    case Family::L1:
      push(s * lam, inf, 1.0, s * lam, Region::L1Like);
      break;
    case Family::SCAD:
      push(s * lam, (1.0 + s) * lam, 1.0, s * lam, Region::L1Like);
      push((1.0 + s) * lam, a * lam, (a - 1.0) / (a - 1.0 - s), s * a * lam / (a - 1.0),
           Region::Transition);
      push(a * lam, inf, 1.0, 0.0, Region::Ols);
      break;
    case Family::MCP:
      push(s * lam, a * lam, a / (a - s), s * lam, Region::Transition);
      push(a * lam, inf, 1.0, 0.0, Region::Ols);
      break;
  }
  return out;
}

ThresholdResult threshold_prox(double m, double s, const PenaltySpec& p) {
  const ProxPieces pieces = prox_pieces(p, s);
  const double am = std::abs(m);
  ThresholdResult r;
  if (am == 0.0) return r;
  for (const ProxPiece& piece : pieces) {
    if (am <= piece.hi) {
      r.region = piece.region;
      r.sigma_factor = s * piece.gain;
      r.x_star = sgn(m) * piece.gain * (am - piece.shift);
      return r;
    }
  }
  return r;
}

double threshold_deriv(double s, double w, const PenaltySpec& p) {
  return threshold_field(s, w, p).sigma_factor;
}

double single_body_objective(double qtilde, double field, double x, const PenaltySpec& p) {
  return 0.5 * qtilde * x * x - field * x + penalty_value(x, p);
}

double single_body_min_value(double qtilde, double field, const PenaltySpec& p) {
  if (!(qtilde > 0.0)) throw std::invalid_argument("single_body_min_value requires qtilde > 0");
  require_admissible(p, 1.0 / qtilde);
  const double ah = std::abs(field);
  const double lam = p.lambda();
  const double a = p.a();
  if (ah <= lam) return 0.0;
  double minus_two_l = 0.0;
  switch (p.family()) {
    case Family::L1:
      minus_two_l = (ah - lam) * (ah - lam) / qtilde;
      break;
    case Family::SCAD: {
      const double k = 1.0 / (a - 1.0);
      if (ah <= lam * (1.0 + qtilde)) {
        minus_two_l = (ah - lam) * (ah - lam) / qtilde;
      } else if (ah <= a * lam * qtilde) {
        const double c = ah - a * lam * k;
        minus_two_l = c * c / (qtilde - k) + lam * lam * k;
      } else {
        minus_two_l = ah * ah / qtilde - (a + 1.0) * lam * lam;
      }
      break;
    }
    case Family::MCP:
      if (ah <= a * lam * qtilde) {
        minus_two_l = (ah - lam) * (ah - lam) / (qtilde - 1.0 / a);
      } else {
        minus_two_l = ah * ah / qtilde - a * lam * lam;
      }
      break;
  }
  return -0.5 * minus_two_l;
}

}  // namespace ncvxcs
