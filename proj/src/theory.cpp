#include "mesa/theory.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace mesa::theory {

double harmonic_sum(std::size_t T) {
  double h = 0.0;
  for (std::size_t t = 2; t + 1 <= T; ++t) h += 1.0 / static_cast<double>(t - 1);
  return h;
}

FlowCoefficients flow_coefficients(const ar::Moments& moments, std::size_t T) {
  if (T < 3) throw std::invalid_argument("flow coefficients need T >= 3");
  const double n = static_cast<double>(T - 2);
  FlowCoefficients k;
  k.c1 = n * moments.kappa2 + harmonic_sum(T) * moments.kappa3;
  k.c2 = n * moments.kappa1;
  k.T = T;
  k.moments = moments;
  return k;
}

ar::Moments ones_moments(std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("d must be >= 1");
  return {1.0, 1.0, static_cast<double>(dim - 1), dim, false};
}

double fixed_point_ab(const ar::Moments& moments, std::size_t T) {
  return flow_coefficients(moments, T).fixed_point();
}

double fixed_point_ab_ones(std::size_t dim, std::size_t T) {
  if (dim == 0) throw std::invalid_argument("d must be >= 1");
  if (T < 3) throw std::invalid_argument("T must be >= 3");
  const double ratio = static_cast<double>(dim - 1) / static_cast<double>(T - 2);
  return 1.0 / (1.0 + ratio * harmonic_sum(T));
}

FlowDerivative ode_rhs(double a, double b, const FlowCoefficients& k) {
  return {-a * b * b * k.c1 + b * k.c2, -a * a * b * k.c1 + a * k.c2};
}

double surrogate_loss(double a, double b, const FlowCoefficients& k) {
  const double r = k.c2 - k.c1 * a * b;
  return r * r / (2.0 * k.c1);
}

FlowDerivative surrogate_gradient(double a, double b, const FlowCoefficients& k) {
  // d/da (c2 - c1 ab)^2 / (2 c1) = -(c2 - c1 ab) b
  const double r = k.c2 - k.c1 * a * b;
  return {-r * b, -r * a};
}

PLCheck pl_check(double a, double b, const FlowCoefficients& k) {
  const auto g = surrogate_gradient(a, b, k);
  PLCheck out;
  out.lhs = g.da * g.da + g.db * g.db;
  // min of the surrogate is 0 (attained on ab = c2/c1)
  out.rhs = 2.0 * k.c1 * (a * a + b * b) * surrogate_loss(a, b, k);
  out.holds = out.lhs - out.rhs >= -1e-12 * std::max(out.lhs, out.rhs);
  return out;
}

FlowResult integrate_flow(double a0, double b0, const FlowCoefficients& k,
                          const FlowOptions& opts) {
  if (!(k.c1 > 0.0)) throw std::invalid_argument("integrate_flow needs c1 > 0");
  const double dt = opts.dt > 0.0 ? opts.dt : 1e-3 / k.c1;
  if (!std::isfinite(dt)) throw std::invalid_argument("dt must be finite");
  const std::size_t every = std::max<std::size_t>(1, opts.record_every);
  const double target = k.fixed_point();
  const double invariant = a0 * a0 - b0 * b0;

  FlowResult res;
  FlowState s{a0, b0, 0.0};
  res.states.push_back(s);
  auto done = [&](const FlowState& x) { return std::abs(x.ab() - target) < opts.tol; };

  if (done(s)) {
    res.converged = true;
    return res;
  }
  const auto f0 = ode_rhs(s, k);
  if (f0.da == 0.0 && f0.db == 0.0) {
    res.stationary = true;
    return res;
  }

  for (std::size_t step = 1; step <= opts.max_steps; ++step) {
    const auto k1 = ode_rhs(s.a, s.b, k);
    const auto k2 = ode_rhs(s.a + 0.5 * dt * k1.da, s.b + 0.5 * dt * k1.db, k);
    const auto k3 = ode_rhs(s.a + 0.5 * dt * k2.da, s.b + 0.5 * dt * k2.db, k);
    const auto k4 = ode_rhs(s.a + dt * k3.da, s.b + dt * k3.db, k);
    s.a += dt / 6.0 * (k1.da + 2.0 * k2.da + 2.0 * k3.da + k4.da);
    s.b += dt / 6.0 * (k1.db + 2.0 * k2.db + 2.0 * k3.db + k4.db);
    s.tau = static_cast<double>(step) * dt;
    if (!std::isfinite(s.a) || !std::isfinite(s.b))
      throw std::runtime_error("flow integration blew up; reduce dt");
    res.conservation_drift =
        std::max(res.conservation_drift, std::abs((s.a * s.a - s.b * s.b) - invariant));
    res.steps = step;
    const bool hit = done(s);
    if (hit || step % every == 0 || step == opts.max_steps) res.states.push_back(s);
    if (hit) {
      res.converged = true;
      break;
    }
  }
  return res;
}

void write_flow_csv(std::ostream& out, const FlowResult& flow, const FlowCoefficients& k) {
  const auto old = out.precision(17);
  out << "tau,a,b,ab,surrogate_loss\n";
  for (const auto& s : flow.states)
    out << s.tau << ',' << s.a << ',' << s.b << ',' << s.ab() << ','
        << surrogate_loss(s.a, s.b, k) << '\n';
  out.precision(old);
}

double gaussian_ratio_prediction(double sigma, std::size_t T, std::size_t dim) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  const auto m = ar::closed_form_moments(ar::InitialDistribution::gaussian(dim, sigma));
  return fixed_point_ab(m, T) * sigma * sigma;
}

double gaussian_ratio_asymptote(double sigma) {
  const auto m = ar::closed_form_moments(ar::InitialDistribution::gaussian(1, sigma));
  return m.kappa1 / m.kappa2 * sigma * sigma;
}

OnesGradient ones_gradient_probe(double a, double b, std::size_t dim, std::size_t T) {
  if (dim == 0) throw std::invalid_argument("d must be >= 1");
  if (T < 3) throw std::invalid_argument("T must be >= 3");
  const double n = static_cast<double>(T - 2);
  const double H = harmonic_sum(T);
  const double dm1 = static_cast<double>(dim - 1);

  double kq_off = 0.0;
  for (std::size_t t = 2; t + 1 <= T; ++t) {
    const double rho = static_cast<double>(t - 1);
    kq_off += a * b * b * (2.0 * rho + static_cast<double>(dim) - 2.0) / (rho * rho) - b / rho;
  }
  const double kq_diag = a * b * b * (n + dm1 * H) - b * n;
  const double pv_diag = a * a * b * (n + dm1 * H) - a * n;
  const double pv_off = a * a * b * H;

  OnesGradient g{Eigen::MatrixXd::Constant(dim, dim, kq_off),
                 Eigen::MatrixXd::Constant(dim, dim, pv_off)};
  g.kq32.diagonal().setConstant(kq_diag);
  g.pv12.diagonal().setConstant(pv_diag);
  return g;
}

}  // namespace mesa::theory
