#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ncvxcs/penalty.hpp"
#include "ncvxcs/state_evolution.hpp"

namespace ncvxcs {

/// Closed-form Gaussian averages of the single-body problem at curvature qtilde and
/// field width sigma. For SCAD all four terms are used; for MCP terms 1..3 (term 3
/// is the transition mass); for L1 only term 1. minus_xi = -2 E[L(qtilde, sigma z)].
struct XiTerms {
  double xi1 = 0.0;
  double xi2 = 0.0;
  double xi3 = 0.0;
  double xi4 = 0.0;
  double minus_xi = 0.0;
};

XiTerms xi_terms(const PenaltySpec& p, double qtilde, double sigma);

/// Per-width averages used by the order-parameter updates.
struct FieldAverages {
  double second = 0.0;      // E[x*^2]
  double slope = 0.0;       // E[dx*/dh]
  double slope2 = 0.0;      // E[(dx*/dh)^2]
  double active = 0.0;      // P(x* != 0)
  double transition = 0.0;  // P(transition region)
};

FieldAverages field_averages(const PenaltySpec& p, double qtilde, double sigma);

struct SaddleInit {
  double chi = 0.0;
  double eps = 0.0;
  /// Starting point matching the default state-evolution start (rho/alpha, rho/alpha).
  static SaddleInit from_se(const SeParams& params) { return {params.rho / params.alpha, params.rho / params.alpha}; }
};

struct SaddleOptions {
  double damping = 0.5;
  double tol = 1e-12;
  int max_sweeps = 100000;
  double divergence = 1e8;
  int max_projections = 200;  // consecutive projected sweeps before giving up
};

enum class SaddleStatus { Converged, MaxSweeps, Diverged, Inadmissible };

std::string_view to_string(SaddleStatus s);

struct SaddleSolution {
  double Q = 0.0;
  double chi = 0.0;
  double m = 0.0;
  double Qt = 0.0;
  double chit = 0.0;
  double mt = 0.0;
  double rho_hat = 0.0;
  double eps = 0.0;
  double at_lhs = 0.0;
  bool converged = false;
  SaddleStatus status = SaddleStatus::MaxSweeps;
  int sweeps = 0;
  int projections = 0;
  double last_change = 0.0;
};

SaddleSolution solve_saddle(const PenaltySpec& p, const SeParams& params, const SaddleInit& init,
                            const SaddleOptions& opts = {});

/// (alpha/chi^2) times the sigma-average of E[(dx*/dh)^2], evaluated at the
/// solution's conjugates.
double at_condition_general(const SaddleSolution& sol, const PenaltySpec& p, const SeParams& params);

struct SuccessSolution {
  double chit = 0.0;
  double theta_minus = 0.0;
  double theta_plus = 0.0;
  bool stable = false;
  double stability_lhs = 0.0;
  bool iteration_converged = false;  // the plain fixed-point iteration reached the same root
};

class NoSuccessRoot : public std::runtime_error {
 public:
  NoSuccessRoot(double lo, double hi, double min_gap);
  double lo() const { return lo_; }
  double hi() const { return hi_; }

 private:
  double lo_;
  double hi_;
};

/// Right-hand side of the scalar equation chit = F(chit) for the success solution.
double success_rhs(const PenaltySpec& p, const SeParams& params, double chit);
/// ((1 - rho) erfc(lambda / sqrt(2 chit)) + rho) / alpha, which equals F'(chit).
double success_stability_lhs(const PenaltySpec& p, const SeParams& params, double chit);

/// Smallest positive root of chit = F(chit). Throws NoSuccessRoot when none exists.
SuccessSolution solve_success(const PenaltySpec& p, const SeParams& params);
/// A stable success solution exists. Does not throw.
bool success_is_stable(const PenaltySpec& p, const SeParams& params);

/// The success solution written as a saddle point with very large curvature.
SaddleSolution success_as_saddle(const SuccessSolution& s, const PenaltySpec& p, const SeParams& params,
                                 double qtilde = 1e12);

struct BracketStep {
  double x = 0.0;
  bool stable = false;
};

struct BoundaryResult {
  double value = 0.0;
  double lo = 0.0;  // bracket at termination
  double hi = 0.0;
  bool capped = false;     // search hit its upper sentinel
  bool bracketed = true;   // ends of the search interval behaved as expected
  std::vector<BracketStep> history;
};

/// Minimum alpha with a stable success solution, bisection to tol.
BoundaryResult alpha_c(const PenaltySpec& p, double rho, double sigma_x2 = 1.0, double tol = 1e-5);
/// Maximum rho with a stable success solution.
BoundaryResult rho_c(const PenaltySpec& p, double alpha, double sigma_x2 = 1.0, double tol = 1e-5);

inline constexpr double kBoundaryCap = 1e6;
inline constexpr double kAFloorOffset = 1e-4;

/// Supremum a in (1, 1e6] with a stable success solution at lambda. Returns 1 when no
/// a is stable and the cap (flagged) when every a is.
BoundaryResult a_c_of_lambda(Family family, double lambda, double alpha, double rho, double sigma_x2 = 1.0,
                             double tol = 1e-6);
/// Supremum lambda with a_c(lambda) > 1, by geometric scan and bisection; capped at 1e6.
BoundaryResult lambda_c(Family family, double alpha, double rho, double sigma_x2 = 1.0, double rel_tol = 1e-6);

struct NccOptions {
  double lambda_start = 1.0;
  double lambda_end = 0.1;
  double lambda_step = 0.002;
  double rho_lo = 0.01;
  double rho_hi = 0.0;  // 0 means alpha
  double tol = 1e-3;
  int final_iters = 200000;
};

/// Continuation from lambda_start to lambda_end has no gap and its terminal state converges to success.
bool continuation_controllable(Family family, double a, const SeParams& params, const NccOptions& opts = {});

/// Largest rho at which continuation_controllable holds, by bisection.
BoundaryResult ncc_limit(Family family, double a, double alpha, double sigma_x2 = 1.0, const NccOptions& opts = {});

struct NccMax {
  double best_a = 0.0;
  double value = 0.0;
  std::vector<std::pair<double, double>> per_a;
};

NccMax ncc_limit_max_over_a(Family family, double alpha, double sigma_x2 = 1.0, const NccOptions& opts = {},
                            const std::vector<double>& a_values = {2.0, 3.0, 5.0, 10.0});

}  // namespace ncvxcs
