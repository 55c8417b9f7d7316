#pragma once

#include <cmath>
#include <random>

#include "ncvxcs/penalty.hpp"

namespace oracle {

struct GridMin {
  double x = 0.0;
  double value = 0.0;
};

// Minimizes x^2/(2s) - w x + J(x) by nested grid search. The minimizer lies
// between 0 and s*w, so that segment is scanned coarsely and then zoomed in
// down to a step of 1e-6 or finer.
// Penalty written out independently in extended precision.
inline long double penalty_ld(long double x, const ncvxcs::PenaltySpec& p) {
  const long double ax = std::fabs(x);
  const long double lam = p.lambda();
  const long double a = p.a();
  switch (p.family()) {
    case ncvxcs::Family::L1:
      return lam * ax;
    case ncvxcs::Family::SCAD:
      if (ax <= lam) return lam * ax;
      if (ax <= a * lam) return (2.0L * a * lam * ax - ax * ax - lam * lam) / (2.0L * (a - 1.0L));
      return (a + 1.0L) * lam * lam / 2.0L;
    case ncvxcs::Family::MCP:
      if (ax <= a * lam) return lam * ax - ax * ax / (2.0L * a);
      return a * lam * lam / 2.0L;
  }
  return 0.0L;
}

inline GridMin grid_minimize(double s, double w, const ncvxcs::PenaltySpec& p) {
  auto obj = [&](double x) {
    const long double lx = x;
    return lx * lx / (2.0L * s) - static_cast<long double>(w) * lx + penalty_ld(lx, p);
  };
  double lo = std::min(0.0, s * w);
  double hi = std::max(0.0, s * w);
  double best_x = 0.0;
  long double best_v = obj(0.0);
  if (hi - lo == 0.0) return {0.0, 0.0};
  const int points = 2000;
  for (int level = 0; level < 6; ++level) {
    const double step = (hi - lo) / points;
    for (int i = 0; i <= points; ++i) {
      const double x = lo + i * step;
      const long double v = obj(x);
      if (v < best_v) {
        best_x = x;
        best_v = v;
      }
    }
    if (step < 1e-7) break;
    lo = std::max(std::min(0.0, s * w), best_x - 2.0 * step);
    hi = std::min(std::max(0.0, s * w), best_x + 2.0 * step);
  }
  return {best_x, static_cast<double>(best_v)};
}

inline double soft_threshold(double s, double w, double lambda) {
  if (std::abs(w) <= lambda) return 0.0;
  return s * (w - std::copysign(lambda, w));
}

struct RandomCase {
  ncvxcs::PenaltySpec p;
  double s;
  double w;
};

inline RandomCase random_case(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int fam = static_cast<int>(gen() % 3);
  const double s = 0.05 + 4.95 * uni(gen);
  const double lambda = 0.05 + 1.95 * uni(gen);
  const double w = -10.0 + 20.0 * uni(gen);
  const auto family = fam == 0 ? ncvxcs::Family::L1 : (fam == 1 ? ncvxcs::Family::SCAD : ncvxcs::Family::MCP);
  double a = 3.0;
  if (family != ncvxcs::Family::L1) {
    const double amin = ncvxcs::a_min(ncvxcs::PenaltySpec(family, lambda, 2.0), s) + 0.1;
    a = amin + (20.0 - amin) * uni(gen);
    if (a <= amin) a = amin + 1e-3;
  }
  return {ncvxcs::PenaltySpec(family, lambda, a), s, w};
}

}  // namespace oracle
