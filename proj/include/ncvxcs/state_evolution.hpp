#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ncvxcs/penalty.hpp"

namespace ncvxcs {

struct SePoint {
  double V = 0.0;
  double eps = 0.0;
};

struct SeParams {
  double alpha = 0.5;
  double rho = 0.1;
  double sigma_x2 = 1.0;

  void validate() const;
  /// (rho/alpha, rho/alpha).
  SePoint default_start() const { return {rho / alpha, rho / alpha}; }
  /// State of AMP started from xhat = 0 with per-component variance rho*sigma_x2.
  SePoint amp_matched_start() const { return {rho * sigma_x2, rho * sigma_x2}; }
};

enum class SeClass { Success, FiniteFixedPoint, Diverged, MaxIters, Inadmissible };

std::string_view to_string(SeClass c);

struct SeOptions {
  int max_iters = 5000;
  double success_tol = 1e-10;
  /// Consecutive-difference tolerance, scaled by min(1, max(V, eps)).
  double fp_tol = 1e-12;
  double divergence = 1e8;
  bool keep_trace = false;
};

struct SeOutcome {
  SeClass classification = SeClass::MaxIters;
  SePoint final;
  int iters = 0;
  std::vector<SePoint> trace;
};

/// Gaussian moments of the prox map for input m ~ N(0, w^2):
/// gain = E[d prox/dm], value2 = E[prox(m)^2], resid2 = E[(prox(m) - m)^2].
struct ProxMoments {
  double gain = 0.0;
  double value2 = 0.0;
  double resid2 = 0.0;
};

ProxMoments prox_moments(const ProxPieces& pieces, double width);

/// One step of the two-dimensional map, prox reading with step s = V/alpha.
/// Returns nullopt when a <= a_min(p, V/alpha).
std::optional<SePoint> se_step(SePoint pt, const PenaltySpec& p, const SeParams& params);

SeOutcome se_run(SePoint start, const PenaltySpec& p, const SeParams& params, const SeOptions& opts = {});

/// Iterates the map with penalties[t] at step t; stops early when a step is
/// inadmissible or leaves the divergence bound. Element 0 is the start.
std::vector<SePoint> se_trajectory(SePoint start, std::span<const PenaltySpec> penalties, const SeParams& params,
                                   double divergence = 1e8);

/// Jacobian of the map at pt by central differences, row-major [dV'/dV, dV'/deps, deps'/dV, deps'/deps].
std::optional<std::array<double, 4>> se_jacobian(SePoint pt, const PenaltySpec& p, const SeParams& params);
double spectral_radius(const std::array<double, 4>& j);

struct GridAxis {
  double lo = 0.0;
  double hi = 1.0;
  int count = 10;
  bool log = false;

  std::vector<double> nodes() const;
  /// Length of each node's cell, cells split at midpoints and clipped to [lo, hi].
  std::vector<double> cell_widths() const;
};

struct GridSpec {
  GridAxis v;
  GridAxis eps;

  void validate() const;
  static GridSpec default_for(const SeParams& params, int count = 50);
};

struct FlowNode {
  double V = 0.0;
  double eps = 0.0;
  double dV = 0.0;
  double deps = 0.0;
  double dir_V = 0.0;
  double dir_eps = 0.0;
  bool admissible = true;
};

/// Nodes ordered with V varying fastest.
std::vector<FlowNode> flow_field(const GridSpec& grid, const PenaltySpec& p, const SeParams& params, int jobs = 1);

struct BasinMap {
  GridSpec grid;
  std::vector<SeClass> classes;  // V varies fastest
  double volume = 0.0;
  double eps_max = 0.0;
  double domain_area = 0.0;

  SeClass at(int iv, int ie) const { return classes[static_cast<std::size_t>(ie) * grid.v.count + iv]; }
};

BasinMap basin_map(const GridSpec& grid, const PenaltySpec& p, const SeParams& params, const SeOptions& opts = {},
                   int jobs = 1);

struct FixedPointRoot {
  SePoint point;
  double radius = 0.0;  // spectral radius of the map's Jacobian
  bool stable() const { return radius < 1.0; }
};

/// Multi-start Newton search for fixed points with eps above eps_floor.
std::vector<FixedPointRoot> find_fixed_points(const PenaltySpec& p, const SeParams& params, double eps_floor = 1e-8);

struct ContinuationOptions {
  std::optional<SePoint> start;  // default: params.default_start()
  SeOptions se;
  bool reentry_search = true;
};

struct ContinuationPoint {
  double lambda = 0.0;
  SeOutcome outcome;
  bool gap = false;
  bool reentered = false;  // state recovered by root search rather than warm start
};

/// Decreasing lambda grid from start to end (inclusive within half a step).
std::vector<double> lambda_path(double start, double end, double step);

std::vector<ContinuationPoint> fixed_point_continuation(std::span<const double> lambdas, Family family, double a,
                                                        const SeParams& params, const ContinuationOptions& opts = {});

struct GapInterval {
  double upper = 0.0;  // last lambda with a tracked state before the gap
  double lower = 0.0;  // first lambda with a tracked state after it; NaN if none
};

std::vector<GapInterval> continuation_gaps(std::span<const ContinuationPoint> points);

}  // namespace ncvxcs
