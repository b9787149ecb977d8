#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mesa/ar_data.hpp"

namespace mesa::attention {

using ar::cplx;

/// W^KQ_32 = a I_d, W^PV_12 = b I_d, every other trainable block zero.
struct DiagonalAB {
  double a = 0.0;
  double b = 0.0;
  double product() const noexcept { return a * b; }
};

/// The trainable blocks that reach the prediction:
///   wkq (2d x 2d) = [[W^KQ_22, W^KQ_23], [W^KQ_32, W^KQ_33]]
///   wpv (d x 2d)  = [W^PV_12, W^PV_13]
/// Both stored row-major. `values()` is the flat [wkq, wpv] vector that the
/// gradient kernels and the optimizer work on.
class AttentionParams {
 public:
  AttentionParams() = default;
  explicit AttentionParams(std::size_t dim);

  static AttentionParams from_diagonal(const DiagonalAB& ab, std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t kq_size() const noexcept { return 4 * dim_ * dim_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& kq(std::size_t r, std::size_t c) { return values_[r * 2 * dim_ + c]; }
  double kq(std::size_t r, std::size_t c) const { return values_[r * 2 * dim_ + c]; }
  double& pv(std::size_t r, std::size_t c) { return values_[kq_size() + r * 2 * dim_ + c]; }
  double pv(std::size_t r, std::size_t c) const { return values_[kq_size() + r * 2 * dim_ + c]; }

  /// W^KQ_32 entry (i, j) and W^PV_12 entry (i, j).
  double& kq32(std::size_t i, std::size_t j) { return kq(dim_ + i, j); }
  double kq32(std::size_t i, std::size_t j) const { return kq(dim_ + i, j); }
  double& pv12(std::size_t i, std::size_t j) { return pv(i, j); }
  double pv12(std::size_t i, std::size_t j) const { return pv(i, j); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<const double> wkq() const noexcept { return {values_.data(), kq_size()}; }
  std::span<const double> wpv() const noexcept {
    return {values_.data() + kq_size(), values_.size() - kq_size()};
  }

  Eigen::MatrixXd kq_matrix() const;
  Eigen::MatrixXd pv_matrix() const;

  /// Mean diagonal of W^KQ_32 and of W^PV_12.
  double diag_a() const;
  double diag_b() const;

  /// True when only the diagonals of W^KQ_32 and W^PV_12 are nonzero.
  bool is_diagonal_structure(double tol = 0.0) const;

  /// Largest |entry| outside the diagonals of W^KQ_32 and W^PV_12.
  double max_off_structure() const;

  bool operator==(const AttentionParams&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

/// Prompt embedding E_t (3d x t); column i is e_i = (0_d, x_i, x_{i-1}), x_0 = 0.
struct EmbeddedPrompt {
  std::size_t dim = 0;
  std::size_t t = 0;
  Eigen::MatrixXcd tokens;

  /// Last 2d rows, E^x_t.
  Eigen::MatrixXcd reduced() const { return tokens.bottomRows(2 * dim); }
  Eigen::VectorXcd current() const { return tokens.col(t - 1).tail(2 * dim); }
};

/// Embeds x_1..x_t. t is the 1-based time index, 2 <= t <= T.
EmbeddedPrompt embed(const ar::ARSequence& seq, std::size_t t);

/// y_t = [W^PV_12 W^PV_13] (E^x E^x* / rho_t) [[KQ22 KQ23][KQ32 KQ33]] e^x_t, rho_t = t - 1.
Eigen::VectorXcd predict_next(const AttentionParams& params, const EmbeddedPrompt& prompt);

/// Coordinate j (0-based) through the bilinear form
/// B_j^T (e^x_t^T kron E^x E^x* / rho_t) Vec(A).
cplx quadratic_form_predict(const AttentionParams& params, const EmbeddedPrompt& prompt,
                            std::size_t j);

/// Both algebraic forms of the one-step predictor at time t (1-based):
/// shifted-sum (ab/(t-1)) sum_{i<t} x_{i+1} x_i^* x_t, and the
/// transition form W (ab/(t-1)) sum_{i<t} x_i x_i^* x_t.
struct MesaPrediction {
  Eigen::VectorXcd shifted;
  Eigen::VectorXcd via_transition;
};

MesaPrediction mesa_predict_forms(double ab, const ar::ARSequence& seq, std::size_t t);

/// Returns the shifted-sum form; the transition form is checked against it and
/// a std::logic_error is thrown if they disagree beyond 1e-9 relative.
Eigen::VectorXcd mesa_predict(double ab, const ar::ARSequence& seq, std::size_t t);

/// One gradient step from W = 0 on 1/2 sum_{i<t} ||x_{i+1} - W x_i||^2.
struct OlsStep {
  Eigen::MatrixXcd w_hat;
  Eigen::VectorXcd prediction;
};

OlsStep one_step_gd_ols(const ar::ARSequence& seq, std::size_t t, double eta);

void to_json(nlohmann::json& j, const DiagonalAB& ab);
void from_json(const nlohmann::json& j, DiagonalAB& ab);
void to_json(nlohmann::json& j, const AttentionParams& p);
void from_json(const nlohmann::json& j, AttentionParams& p);

}  // namespace mesa::attention
