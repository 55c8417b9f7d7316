#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncvxcs {

inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kSqrtPi = 1.77245385090551602730;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

/// Thrown when an integrand returns a non-finite value at a quadrature node.
class EvaluationError : public std::runtime_error {
 public:
  explicit EvaluationError(double node);
  double node() const { return node_; }

 private:
  double node_;
};

/// Nodes and weights of a quadrature rule. For the Hermite rule the weights
/// integrate against the standard Gaussian measure Dz and sum to one.
class GaussQuadrature {
 public:
  /// Gauss-Hermite rule rescaled to Dz = exp(-z^2/2) dz / sqrt(2 pi).
  static GaussQuadrature hermite(int order = 101);
  /// Gauss-Legendre rule on [-1, 1] with unit weight.
  static GaussQuadrature legendre(int order);

  std::span<const double> nodes() const { return nodes_; }
  std::span<const double> weights() const { return weights_; }
  int order() const { return static_cast<int>(nodes_.size()); }

 private:
  GaussQuadrature(std::vector<double> nodes, std::vector<double> weights)
      : nodes_(std::move(nodes)), weights_(std::move(weights)) {}

  std::vector<double> nodes_;
  std::vector<double> weights_;
};

/// Shared order-101 Hermite rule.
const GaussQuadrature& default_dz_quadrature();

using ScalarFn = std::function<double(double)>;

/// Integral of f against Dz with a full-line Hermite rule. Suited to smooth f.
double gauss_expect(const ScalarFn& f,
                    const GaussQuadrature& rule = default_dz_quadrature());

struct PiecewiseOptions {
  int panel_order = 20;
  double panel_width = 0.5;
  double cutoff = 40.0;  // |z| beyond this carries < 1e-300 of the measure
};

/// Integral of f against Dz for integrands with kinks or jumps at the given
/// breakpoints. Each segment between breakpoints is integrated separately with
/// composite Gauss-Legendre panels, so the breakpoints never fall inside a panel.
double gauss_expect_piecewise(const ScalarFn& f,
                              std::span<const double> breakpoints,
                              const PiecewiseOptions& opts = {});

/// Complementary error function.
double erfc(double x);

inline double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

/// theta * exp(-theta^2), with the theta -> infinity limit taken as 0.
inline double theta_exp(double theta) {
  return std::isinf(theta) ? 0.0 : theta * std::exp(-theta * theta);
}

/// Moments of the standard normal restricted to [lo, hi], 0 <= lo <= hi <= inf:
/// mass = P(lo<z<=hi), first = E[z; .], second = E[z^2; .].
struct TruncatedMoments {
  double mass = 0.0;
  double first = 0.0;
  double second = 0.0;
};

TruncatedMoments truncated_moments(double lo, double hi);

/// Two-point distribution of the effective field width: sigma_minus with
/// probability 1-rho, sigma_plus with probability rho.
struct SigmaMixture {
  double rho = 0.0;
  double sigma_minus = 0.0;
  double sigma_plus = 0.0;

  /// sigma_minus = sqrt(chit), sigma_plus = sqrt(chit + mt^2 sigma_x2).
  static SigmaMixture from_conjugates(double rho, double chit, double mt, double sigma_x2);
};

template <class G>
double sigma_average(G&& g, const SigmaMixture& mix) {
  return (1.0 - mix.rho) * g(mix.sigma_minus) + mix.rho * g(mix.sigma_plus);
}

}  // namespace ncvxcs
