#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ncvxcs {

enum class Family { L1, SCAD, MCP };

std::string_view to_string(Family family);
/// Accepts "l1", "scad", "mcp" in any case.
Family parse_family(std::string_view name);

class InvalidPenalty : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when the single-body problem has no finite minimizer, i.e. a <= a_min.
class AdmissibilityError : public std::domain_error {
 public:
  AdmissibilityError(double a, double a_min);
  double a() const { return a_; }
  double a_min() const { return a_min_; }

 private:
  double a_;
  double a_min_;
};

/// Penalty family with its nonconvexity parameters. Validated at construction:
/// lambda > 0 always, a > 1 for SCAD and MCP. For L1, a is +inf.
class PenaltySpec {
 public:
  PenaltySpec(Family family, double lambda, double a = std::numeric_limits<double>::infinity());

  static PenaltySpec l1(double lambda) { return {Family::L1, lambda}; }
  static PenaltySpec scad(double lambda, double a) { return {Family::SCAD, lambda, a}; }
  static PenaltySpec mcp(double lambda, double a) { return {Family::MCP, lambda, a}; }

  Family family() const { return family_; }
  double lambda() const { return lambda_; }
  double a() const { return a_; }

  PenaltySpec with_lambda(double lambda) const { return {family_, lambda, a_}; }
  PenaltySpec with_a(double a) const { return {family_, lambda_, a}; }

 private:
  Family family_;
  double lambda_;
  double a_;
};

enum class Region { Zero, L1Like, Transition, Ols };

std::string_view to_string(Region region);

/// x_star = sigma_factor * M(w), where M is the region's shifted input.
struct ThresholdResult {
  double x_star = 0.0;
  double sigma_factor = 0.0;
  Region region = Region::Zero;
};

/// One linear piece of the prox map on the positive half-line:
/// prox(m) = gain * (m - shift) for m in (lo, hi]. Odd extension for m < 0.
struct ProxPiece {
  double lo = 0.0;
  double hi = 0.0;
  double gain = 0.0;
  double shift = 0.0;
  Region region = Region::Zero;
};

struct ProxPieces {
  std::array<ProxPiece, 4> pieces{};
  std::size_t count = 0;

  const ProxPiece* begin() const { return pieces.data(); }
  const ProxPiece* end() const { return pieces.data() + count; }
};

/// J(x; lambda, a).
double penalty_value(double x, const PenaltySpec& p);

/// Smallest a for which the single-body problem with curvature inverse s keeps a
/// finite minimizer: max{1, 1+s} for SCAD, max{1, s} for MCP, 1 for L1.
double a_min(const PenaltySpec& p, double s);

/// a > a_min(p, s); always true for L1.
bool is_admissible(const PenaltySpec& p, double s);

/// argmin_x x^2/(2s) - w x + J(x), evaluated from the closed-form Sigma * M.
/// Requires s > 0. Throws AdmissibilityError when a <= a_min(p, s).
ThresholdResult threshold_field(double s, double w, const PenaltySpec& p);

/// argmin_x (x - m)^2/(2s) + J(x); equals threshold_field(s, m/s). Accepts s = 0
/// (identity map).
ThresholdResult threshold_prox(double m, double s, const PenaltySpec& p);

/// Sigma_p(s, w) = d x_star / d w away from region boundaries.
double threshold_deriv(double s, double w, const PenaltySpec& p);

/// The piecewise-linear structure of the prox map at step s. Requires admissibility.
ProxPieces prox_pieces(const PenaltySpec& p, double s);

/// (qtilde/2) x^2 - field x + J(x).
double single_body_objective(double qtilde, double field, double x, const PenaltySpec& p);

/// min over x of single_body_objective, from the closed-form piecewise minimum.
/// Throws AdmissibilityError when qtilde is below the curvature bound.
double single_body_min_value(double qtilde, double field, const PenaltySpec& p);

}  // namespace ncvxcs
