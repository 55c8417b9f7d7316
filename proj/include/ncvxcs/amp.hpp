#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ncvxcs/instance.hpp"
#include "ncvxcs/penalty.hpp"

namespace ncvxcs {

struct ScheduleSegment {
  double lambda = 1.0;
  double a = 3.0;
  int steps = 1;
};

/// Piecewise-constant (lambda, a) plan. After the last segment the final values are
/// held (unless the run is told otherwise).
struct ControlSchedule {
  Family family = Family::SCAD;
  std::vector<ScheduleSegment> segments;

  void validate() const;
  int total_steps() const;
  /// Penalty in force at iteration t (1-based); past the end, the last segment.
  PenaltySpec at(int t) const;

  static ControlSchedule constant(const PenaltySpec& p, int steps);
  /// "start:step:end@k": lambda from start towards end by step (inclusive within half a
  /// step), k iterations each, fixed a. "value@k" is a single segment.
  static ControlSchedule parse(std::string_view spec, Family family, double a);
};

struct AmpOptions {
  int max_iters = 1000;
  double tol = 1e-12;          // on ||x^{t+1} - x^t||^2 / N
  double divergence = 1e8;     // on V_hat and mse
  double damping = 1.0;        // weight of the new estimate
  bool hold_final = true;      // keep iterating with the last segment after the schedule ends
  std::optional<double> vhat_init;  // per-component initial variance; default rho * sigma_x2
};

enum class AmpStatus { Converged, MaxIters, Diverged, AdmissibilityViolation };

std::string_view to_string(AmpStatus s);

struct AmpRow {
  int t = 0;
  double lambda = 0.0;
  double a = 0.0;
  double mse = 0.0;       // NaN without truth
  double V_hat = 0.0;
  double residual = 0.0;  // ||y - A xhat||^2 / M
};

struct AmpReport {
  std::vector<AmpRow> trajectory;  // row t = state after t iterations; row 0 is the start
  AmpStatus status = AmpStatus::MaxIters;
  std::vector<double> final_xhat;
  int iterations = 0;
  std::optional<int> violation_t;
  int floor_clamps = 0;

  double final_mse() const { return trajectory.empty() ? 0.0 : trajectory.back().mse; }
};

/// AMP on (A, y). `truth` may be empty, in which case mse is NaN and opts.vhat_init is required.
AmpReport amp_run(const DenseMatrix& A, std::span<const double> y, const ControlSchedule& schedule,
                  const AmpOptions& opts, std::span<const double> truth = {});

AmpReport amp_run(const ProblemInstance& inst, const ControlSchedule& schedule, const AmpOptions& opts = {});

/// Final mse <= tol. Throws std::invalid_argument when the run had no truth.
bool success_indicator(const AmpReport& report, double tol = 1e-8);

/// Header t,lambda,a,mse,V_hat,residual; 17 significant digits.
void write_trajectory_csv(std::ostream& out, const AmpReport& report);

}  // namespace ncvxcs
