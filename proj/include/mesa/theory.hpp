#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "mesa/ar_data.hpp"
#include "mesa/attention.hpp"

namespace mesa::theory {

/// sum_{t=2}^{T-1} 1/(t-1), i.e. the harmonic number H_{T-2}.
double harmonic_sum(std::size_t T);

struct FlowCoefficients {
  double c1 = 0.0;  // (T-2) k2 + H k3
  double c2 = 0.0;  // (T-2) k1
  std::size_t T = 0;
  ar::Moments moments;

  double fixed_point() const { return c2 / c1; }
};

FlowCoefficients flow_coefficients(const ar::Moments& moments, std::size_t T);

/// Synthetic moments (1, 1, d-1) that make the masked all-ones dynamics
/// coincide with the generic flow.
ar::Moments ones_moments(std::size_t dim);

double fixed_point_ab(const ar::Moments& moments, std::size_t T);
double fixed_point_ab_ones(std::size_t dim, std::size_t T);

struct FlowState {
  double a = 0.0;
  double b = 0.0;
  double tau = 0.0;
  double ab() const { return a * b; }
};

struct FlowDerivative {
  double da = 0.0;
  double db = 0.0;
};

FlowDerivative ode_rhs(double a, double b, const FlowCoefficients& k);
inline FlowDerivative ode_rhs(const FlowState& s, const FlowCoefficients& k) {
  return ode_rhs(s.a, s.b, k);
}

double surrogate_loss(double a, double b, const FlowCoefficients& k);
/// Analytic gradient of surrogate_loss.
FlowDerivative surrogate_gradient(double a, double b, const FlowCoefficients& k);

struct PLCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};
PLCheck pl_check(double a, double b, const FlowCoefficients& k);

struct FlowOptions {
  double dt = 0.0;  // 0 picks 1e-3 / c1
  std::size_t max_steps = 1000000;
  double tol = 1e-6;
  std::size_t record_every = 100;
};

struct FlowResult {
  std::vector<FlowState> states;  // recorded states; first is the init, last the final state
  bool converged = false;
  bool stationary = false;  // started on (0,0) or another exact equilibrium off the target
  std::size_t steps = 0;
  double conservation_drift = 0.0;  // max |(a^2-b^2) - (a0^2-b0^2)|
  const FlowState& final() const { return states.back(); }
};

/// Classical RK4 on ode_rhs until |ab - c2/c1| < tol or max_steps.
FlowResult integrate_flow(double a0, double b0, const FlowCoefficients& k,
                          const FlowOptions& opts = {});

/// CSV with header tau,a,b,ab,surrogate_loss.
void write_flow_csv(std::ostream& out, const FlowResult& flow, const FlowCoefficients& k);

/// Limit of the mean ratio y_j / (W x)_j for a Gaussian-trained model: ab* sigma^2.
double gaussian_ratio_prediction(double sigma, std::size_t T, std::size_t dim = 5);
/// T -> infinity value of the same quantity (kappa1 / kappa2 * sigma^2).
double gaussian_ratio_asymptote(double sigma);

/// Population gradients of the loss for x_1 = 1_d at diagonal parameters
/// (a, b): full d x d blocks for W^KQ_32 and W^PV_12. Every other block has
/// zero population gradient there.
struct OnesGradient {
  Eigen::MatrixXd kq32;
  Eigen::MatrixXd pv12;
};
OnesGradient ones_gradient_probe(double a, double b, std::size_t dim, std::size_t T);

}  // namespace mesa::theory
