#include "mesa/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mesa::attention {

AttentionParams::AttentionParams(std::size_t dim) : dim_(dim), values_(6 * dim * dim, 0.0) {
  if (dim == 0) throw std::invalid_argument("attention parameters need d >= 1");
}

AttentionParams AttentionParams::from_diagonal(const DiagonalAB& ab, std::size_t dim) {
  AttentionParams p(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    p.kq32(i, i) = ab.a;
    p.pv12(i, i) = ab.b;
  }
  return p;
}

Eigen::MatrixXd AttentionParams::kq_matrix() const {
  const auto n = static_cast<Eigen::Index>(2 * dim_);
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) m(r, c) = kq(r, c);
  return m;
}

Eigen::MatrixXd AttentionParams::pv_matrix() const {
  const auto d = static_cast<Eigen::Index>(dim_);
  Eigen::MatrixXd m(d, 2 * d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < 2 * d; ++c) m(r, c) = pv(r, c);
  return m;
}

double AttentionParams::diag_a() const {
  double s = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) s += kq32(i, i);
  return s / static_cast<double>(dim_);
}

double AttentionParams::diag_b() const {
  double s = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) s += pv12(i, i);
  return s / static_cast<double>(dim_);
}

double AttentionParams::max_off_structure() const {
  double worst = 0.0;
  for (std::size_t r = 0; r < 2 * dim_; ++r)
    for (std::size_t c = 0; c < 2 * dim_; ++c)
      if (!(r == dim_ + c)) worst = std::max(worst, std::abs(kq(r, c)));
  for (std::size_t r = 0; r < dim_; ++r)
    for (std::size_t c = 0; c < 2 * dim_; ++c)
      if (r != c) worst = std::max(worst, std::abs(pv(r, c)));
  return worst;
}

bool AttentionParams::is_diagonal_structure(double tol) const { return max_off_structure() <= tol; }

EmbeddedPrompt embed(const ar::ARSequence& seq, std::size_t t) {
  if (t < 2 || t > seq.length())
    throw std::out_of_range("embed: time index must satisfy 2 <= t <= T");
  const std::size_t d = seq.dim();
  EmbeddedPrompt prompt{d, t, Eigen::MatrixXcd::Zero(3 * d, t)};
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      prompt.tokens(d + k, i) = seq.at(i, k);
      if (i > 0) prompt.tokens(2 * d + k, i) = seq.at(i - 1, k);
    }
  }
  return prompt;
}

namespace {

void check_dims(const AttentionParams& params, const EmbeddedPrompt& prompt) {
  if (params.dim() != prompt.dim) throw std::invalid_argument("parameter/prompt dimension mismatch");
  if (prompt.t < 2) throw std::invalid_argument("prediction needs t >= 2");
}

Eigen::MatrixXcd normalized_gram(const EmbeddedPrompt& prompt) {
  const Eigen::MatrixXcd ex = prompt.reduced();
  return ex * ex.adjoint() / static_cast<double>(prompt.t - 1);
}

}  // namespace

Eigen::VectorXcd predict_next(const AttentionParams& params, const EmbeddedPrompt& prompt) {
  check_dims(params, prompt);
  const Eigen::MatrixXcd gram = normalized_gram(prompt);
  const Eigen::MatrixXcd pv = params.pv_matrix().cast<cplx>();
  const Eigen::MatrixXcd kq = params.kq_matrix().cast<cplx>();
  return pv * (gram * (kq * prompt.current()));
}

cplx quadratic_form_predict(const AttentionParams& params, const EmbeddedPrompt& prompt,
                            std::size_t j) {
  check_dims(params, prompt);
  const std::size_t d = params.dim();
  if (j >= d) throw std::out_of_range("quadratic_form_predict: coordinate out of range");
  const auto n = static_cast<Eigen::Index>(2 * d);
  const Eigen::MatrixXcd gram = normalized_gram(prompt);
  const Eigen::VectorXcd e = prompt.current();

  // e^T kron G is the 2d x (2d)^2 block row [e_1 G, ..., e_2d G].
  Eigen::MatrixXcd kron(n, n * n);
  for (Eigen::Index blk = 0; blk < n; ++blk) kron.middleCols(blk * n, n) = e(blk) * gram;

  // Column-major Vec(A).
  Eigen::VectorXcd vec_a(n * n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index r = 0; r < n; ++r) vec_a(c * n + r) = params.kq(r, c);

  Eigen::VectorXcd b_j(n);
  for (Eigen::Index m = 0; m < n; ++m) b_j(m) = params.pv(j, m);

  return b_j.transpose() * (kron * vec_a);
}

MesaPrediction mesa_predict_forms(double ab, const ar::ARSequence& seq, std::size_t t) {
  if (t < 2 || t > seq.length())
    throw std::out_of_range("mesa_predict: time index must satisfy 2 <= t <= T");
  const auto d = static_cast<Eigen::Index>(seq.dim());
  Eigen::MatrixXcd shifted = Eigen::MatrixXcd::Zero(d, d);
  Eigen::MatrixXcd second = Eigen::MatrixXcd::Zero(d, d);
  auto token = [&](std::size_t k) {
    Eigen::VectorXcd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = seq.at(k, i);
    return v;
  };
  for (std::size_t k = 0; k + 1 < t; ++k) {
    const Eigen::VectorXcd xi = token(k);
    shifted += token(k + 1) * xi.adjoint();
    second += xi * xi.adjoint();
  }
  const double scale = ab / static_cast<double>(t - 1);
  const Eigen::VectorXcd xt = token(t - 1);
  Eigen::VectorXcd lambdas(d);
  for (Eigen::Index i = 0; i < d; ++i) lambdas(i) = seq.spectrum()[i];
  return {scale * (shifted * xt), lambdas.asDiagonal() * (scale * (second * xt))};
}

Eigen::VectorXcd mesa_predict(double ab, const ar::ARSequence& seq, std::size_t t) {
  auto forms = mesa_predict_forms(ab, seq, t);
  const double scale = std::max(1.0, forms.shifted.norm());
  if ((forms.shifted - forms.via_transition).norm() > 1e-9 * scale)
    throw std::logic_error("mesa_predict: shifted and transition forms disagree");
  return std::move(forms.shifted);
}

OlsStep one_step_gd_ols(const ar::ARSequence& seq, std::size_t t, double eta) {
  if (t < 2 || t > seq.length())
    throw std::out_of_range("one_step_gd_ols: time index must satisfy 2 <= t <= T");
  const auto d = static_cast<Eigen::Index>(seq.dim());
  // grad_W at W = 0 is -sum (x_{i+1} - 0 x_i) x_i^*, so W_hat = eta sum x_{i+1} x_i^*.
  Eigen::MatrixXcd grad = Eigen::MatrixXcd::Zero(d, d);
  for (std::size_t k = 0; k + 1 < t; ++k)
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c)
        grad(r, c) -= seq.at(k + 1, r) * std::conj(seq.at(k, c));
  OlsStep step;
  step.w_hat = -eta * grad;
  Eigen::VectorXcd xt(d);
  for (Eigen::Index i = 0; i < d; ++i) xt(i) = seq.at(t - 1, i);
  step.prediction = step.w_hat * xt;
  return step;
}

void to_json(nlohmann::json& j, const DiagonalAB& ab) { j = {{"a", ab.a}, {"b", ab.b}}; }

void from_json(const nlohmann::json& j, DiagonalAB& ab) {
  ab.a = j.at("a").get<double>();
  ab.b = j.at("b").get<double>();
}

void to_json(nlohmann::json& j, const AttentionParams& p) {
  j = {{"d", p.dim()},
       {"wkq", std::vector<double>(p.wkq().begin(), p.wkq().end())},
       {"wpv", std::vector<double>(p.wpv().begin(), p.wpv().end())}};
}

void from_json(const nlohmann::json& j, AttentionParams& p) {
  const auto d = j.at("d").get<std::size_t>();
  const auto wkq = j.at("wkq").get<std::vector<double>>();
  const auto wpv = j.at("wpv").get<std::vector<double>>();
  if (wkq.size() != 4 * d * d || wpv.size() != 2 * d * d)
    throw std::invalid_argument("parameter snapshot has wrong block sizes");
  p = AttentionParams(d);
  auto v = p.values();
  std::copy(wkq.begin(), wkq.end(), v.begin());
  std::copy(wpv.begin(), wpv.end(), v.begin() + static_cast<std::ptrdiff_t>(wkq.size()));
}

}  // namespace mesa::attention
