#include "ncvxcs/gauss_math.hpp"

#include <algorithm>
#include <array>
#include <numbers>
#include <sstream>

namespace ncvxcs {

namespace {

std::string describe_node(double node) {
  std::ostringstream os;
  os.precision(17);
  os << "integrand is not finite at quadrature node z = " << node;
  return os.str();
}

// Newton iteration on the orthonormal Hermite recurrence, weight exp(-x^2).
void hermite_physicists(int n, std::vector<double>& x, std::vector<double>& w) {
  constexpr double kPiM4 = 0.7511255444649425;  // pi^(-1/4)
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  const int half = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < half; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * x[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * x[1];
    } else {
      z = 2.0 * z - x[i - 2];
    }
    double pp = 0.0;
    for (int its = 0; its < 100; ++its) {
      double p1 = kPiM4;
      double p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double step = p1 / pp;
      z -= step;
      if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    x[i] = z;
    x[n - 1 - i] = -z;
    w[i] = 2.0 / (pp * pp);
    w[n - 1 - i] = w[i];
  }
}

}  // namespace

EvaluationError::EvaluationError(double node)
    : std::runtime_error(describe_node(node)), node_(node) {}

GaussQuadrature GaussQuadrature::hermite(int order) {
  if (order < 1) throw std::invalid_argument("quadrature order must be positive");
  std::vector<double> x;
  std::vector<double> w;
  hermite_physicists(order, x, w);
  // z = sqrt(2) x maps exp(-x^2) dx / sqrt(pi) onto Dz.
  for (int i = 0; i < order; ++i) {
    x[i] *= kSqrt2;
    w[i] /= kSqrtPi;
  }
  std::reverse(x.begin(), x.end());
  std::reverse(w.begin(), w.end());
  return GaussQuadrature(std::move(x), std::move(w));
}

GaussQuadrature GaussQuadrature::legendre(int order) {
  if (order < 1) throw std::invalid_argument("quadrature order must be positive");
  std::vector<double> x(order);
  std::vector<double> w(order);
  const int half = (order + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
    double pp = 0.0;
    for (int its = 0; its < 100; ++its) {
      double p1 = 1.0;
      double p2 = 0.0;
      for (int j = 0; j < order; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1);
      }
      pp = order * (z * p1 - p2) / (z * z - 1.0);
      const double step = p1 / pp;
      z -= step;
      if (std::abs(step) <= 1e-16) break;
    }
    x[i] = -z;
    x[order - 1 - i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    w[order - 1 - i] = w[i];
  }
  return GaussQuadrature(std::move(x), std::move(w));
}

const GaussQuadrature& default_dz_quadrature() {
  static const GaussQuadrature rule = GaussQuadrature::hermite(101);
  return rule;
}

double gauss_expect(const ScalarFn& f, const GaussQuadrature& rule) {
  double acc = 0.0;
  const auto nodes = rule.nodes();
  const auto weights = rule.weights();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double v = f(nodes[i]);
    if (!std::isfinite(v)) throw EvaluationError(nodes[i]);
    acc += weights[i] * v;
  }
  return acc;
}

double gauss_expect_piecewise(const ScalarFn& f, std::span<const double> breakpoints,
                              const PiecewiseOptions& opts) {
  static thread_local int cached_order = 0;
  static thread_local std::vector<double> gl_nodes;
  static thread_local std::vector<double> gl_weights;
  if (cached_order != opts.panel_order) {
    const auto rule = GaussQuadrature::legendre(opts.panel_order);
    gl_nodes.assign(rule.nodes().begin(), rule.nodes().end());
    gl_weights.assign(rule.weights().begin(), rule.weights().end());
    cached_order = opts.panel_order;
  }

  std::vector<double> cuts;
  cuts.reserve(breakpoints.size() + 2);
  cuts.push_back(-opts.cutoff);
  for (double b : breakpoints) {
    if (b > -opts.cutoff && b < opts.cutoff) cuts.push_back(b);
  }
  cuts.push_back(opts.cutoff);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  double acc = 0.0;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double lo = cuts[s];
    const double hi = cuts[s + 1];
    const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / opts.panel_width)));
    const double width = (hi - lo) / panels;
    for (int p = 0; p < panels; ++p) {
      const double a = lo + p * width;
      const double half = 0.5 * width;
      const double mid = a + half;
      for (std::size_t k = 0; k < gl_nodes.size(); ++k) {
        const double z = mid + half * gl_nodes[k];
        const double v = f(z);
        if (!std::isfinite(v)) throw EvaluationError(z);
        acc += half * gl_weights[k] * v * normal_pdf(z);
      }
    }
  }
  return acc;
}

double erfc(double x) { return std::erfc(x); }

TruncatedMoments truncated_moments(double lo, double hi) {
  TruncatedMoments out;
  if (!(hi > lo)) return out;
  const double scale = std::max(1.0, lo);
  if (std::isfinite(hi) && (hi - lo) * scale < 0.5) {
    // Narrow interval: closed forms cancel badly, the integrand is smooth.
    static const std::array<double, 12> kNodes = [] {
      const auto r = GaussQuadrature::legendre(12);
      std::array<double, 12> a{};
      std::copy(r.nodes().begin(), r.nodes().end(), a.begin());
      return a;
    }();
    static const std::array<double, 12> kWeights = [] {
      const auto r = GaussQuadrature::legendre(12);
      std::array<double, 12> a{};
      std::copy(r.weights().begin(), r.weights().end(), a.begin());
      return a;
    }();
    const double half = 0.5 * (hi - lo);
    const double mid = lo + half;
    for (std::size_t k = 0; k < kNodes.size(); ++k) {
      const double z = mid + half * kNodes[k];
      const double wpdf = half * kWeights[k] * normal_pdf(z);
      out.mass += wpdf;
      out.first += wpdf * z;
      out.second += wpdf * z * z;
    }
    return out;
  }
  const double pdf_lo = normal_pdf(lo);
  const double pdf_hi = std::isfinite(hi) ? normal_pdf(hi) : 0.0;
  const double hi_pdf_hi = std::isfinite(hi) ? hi * pdf_hi : 0.0;
  const double tail_hi = std::isfinite(hi) ? erfc(hi / kSqrt2) : 0.0;
  out.mass = 0.5 * (erfc(lo / kSqrt2) - tail_hi);
  out.first = pdf_lo - pdf_hi;
  out.second = out.mass + lo * pdf_lo - hi_pdf_hi;
  return out;
}

SigmaMixture SigmaMixture::from_conjugates(double rho, double chit, double mt, double sigma_x2) {
  SigmaMixture mix;
  mix.rho = rho;
  mix.sigma_minus = std::sqrt(std::max(chit, 0.0));
  mix.sigma_plus = std::sqrt(std::max(chit, 0.0) + mt * mt * sigma_x2);
  return mix;
}

}  // namespace ncvxcs
