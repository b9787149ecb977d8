// Reference kernel: one sequence (lane) at a time, plain doubles.
#include <vector>

#include "mesa/kernels.hpp"

namespace mesa::kernels {

void eval_group_scalar(const PackedBatch& batch, std::size_t group, std::span<const double> params,
                       double* loss, double* grad) {
  const std::size_t d = batch.dim();
  const std::size_t n = 2 * d;
  const std::size_t T = batch.length();
  const std::size_t np = param_count(d);
  const double* A = params.data();
  const double* P = params.data() + n * n;

  std::vector<double> s_re(n * n), s_im(n * n);
  std::vector<double> e_re(n), e_im(n), v_re(n), v_im(n), w_re(n), w_im(n);
  std::vector<double> r_re(d), r_im(d), q_re(n), q_im(n), z_re(n), z_im(n);

  for (std::size_t lane = 0; lane < kLanes; ++lane) {
    std::fill(s_re.begin(), s_re.end(), 0.0);
    std::fill(s_im.begin(), s_im.end(), 0.0);
    double* gA = grad ? grad + lane * np : nullptr;
    double* gP = gA ? gA + n * n : nullptr;
    if (gA) std::fill(gA, gA + np, 0.0);
    double acc_loss = 0.0;

    for (std::size_t k = 0; k + 1 < T; ++k) {
      for (std::size_t i = 0; i < d; ++i) {
        e_re[i] = batch.re(group, k, i)[lane];
        e_im[i] = batch.im(group, k, i)[lane];
        e_re[d + i] = k > 0 ? batch.re(group, k - 1, i)[lane] : 0.0;
        e_im[d + i] = k > 0 ? batch.im(group, k - 1, i)[lane] : 0.0;
      }
      // S += e e^*
      for (std::size_t m = 0; m < n; ++m)
        for (std::size_t c = 0; c < n; ++c) {
          s_re[m * n + c] = s_re[m * n + c] + (e_re[m] * e_re[c] + e_im[m] * e_im[c]);
          s_im[m * n + c] = s_im[m * n + c] + (e_im[m] * e_re[c] - e_re[m] * e_im[c]);
        }
      if (k == 0) continue;
      const double inv_rho = 1.0 / static_cast<double>(k);

      for (std::size_t m = 0; m < n; ++m) {
        double ar = 0.0, ai = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          ar = ar + A[m * n + c] * e_re[c];
          ai = ai + A[m * n + c] * e_im[c];
        }
        v_re[m] = ar;
        v_im[m] = ai;
      }
      for (std::size_t m = 0; m < n; ++m) {
        double ar = 0.0, ai = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          ar = ar + (s_re[m * n + c] * v_re[c] - s_im[m * n + c] * v_im[c]);
          ai = ai + (s_re[m * n + c] * v_im[c] + s_im[m * n + c] * v_re[c]);
        }
        w_re[m] = ar * inv_rho;
        w_im[m] = ai * inv_rho;
      }
      for (std::size_t j = 0; j < d; ++j) {
        double yr = 0.0, yi = 0.0;
        for (std::size_t m = 0; m < n; ++m) {
          yr = yr + P[j * n + m] * w_re[m];
          yi = yi + P[j * n + m] * w_im[m];
        }
        r_re[j] = yr - batch.re(group, k + 1, j)[lane];
        r_im[j] = yi - batch.im(group, k + 1, j)[lane];
        acc_loss = acc_loss + 0.5 * (r_re[j] * r_re[j] + r_im[j] * r_im[j]);
      }
      if (!gA) continue;

      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t m = 0; m < n; ++m)
          gP[j * n + m] = gP[j * n + m] + (r_re[j] * w_re[m] + r_im[j] * w_im[m]);
      // q = P^T conj(r)
      for (std::size_t m = 0; m < n; ++m) {
        double qr = 0.0, qi = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          qr = qr + P[j * n + m] * r_re[j];
          qi = qi - P[j * n + m] * r_im[j];
        }
        q_re[m] = qr;
        q_im[m] = qi;
      }
      // z = S^T q / rho
      for (std::size_t c = 0; c < n; ++c) {
        double zr = 0.0, zi = 0.0;
        for (std::size_t m = 0; m < n; ++m) {
          zr = zr + (s_re[m * n + c] * q_re[m] - s_im[m * n + c] * q_im[m]);
          zi = zi + (s_re[m * n + c] * q_im[m] + s_im[m * n + c] * q_re[m]);
        }
        z_re[c] = zr * inv_rho;
        z_im[c] = zi * inv_rho;
      }
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
          gA[a * n + b] = gA[a * n + b] + (z_re[a] * e_re[b] - z_im[a] * e_im[b]);
    }
    loss[lane] = acc_loss;
  }
}

}  // namespace mesa::kernels
