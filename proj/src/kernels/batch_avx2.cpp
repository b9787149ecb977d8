// AVX2 kernel: four sequences per call, one per 64-bit lane. The arithmetic
// mirrors batch_scalar.cpp operation for operation. Compiled with -mavx2 only
// (no -mfma) so each lane rounds exactly like the reference.
#include <immintrin.h>

#include <vector>

#include "mesa/kernels.hpp"

// std::vector<__m256d> is fine here (C++17 aligned new); silence the attribute note
#pragma GCC diagnostic ignored "-Wignored-attributes"

namespace mesa::kernels {

namespace {

using vec = __m256d;

inline vec load(const double* p) { return _mm256_loadu_pd(p); }
inline vec bcast(const double* p) { return _mm256_broadcast_sd(p); }
inline vec add(vec a, vec b) { return _mm256_add_pd(a, b); }
inline vec sub(vec a, vec b) { return _mm256_sub_pd(a, b); }
inline vec mul(vec a, vec b) { return _mm256_mul_pd(a, b); }

}  // namespace

void eval_group_avx2(const PackedBatch& batch, std::size_t group, std::span<const double> params,
                     double* loss, double* grad) {
  const std::size_t d = batch.dim();
  const std::size_t n = 2 * d;
  const std::size_t T = batch.length();
  const std::size_t np = param_count(d);
  const double* A = params.data();
  const double* P = params.data() + n * n;
  const vec zero = _mm256_setzero_pd();
  const vec half = _mm256_set1_pd(0.5);

  std::vector<vec> s_re(n * n, zero), s_im(n * n, zero);
  std::vector<vec> e_re(n), e_im(n), v_re(n), v_im(n), w_re(n), w_im(n);
  std::vector<vec> r_re(d), r_im(d), q_re(n), q_im(n), z_re(n), z_im(n);
  std::vector<vec> g(grad ? np : 0, zero);
  vec* gA = grad ? g.data() : nullptr;
  vec* gP = grad ? g.data() + n * n : nullptr;
  vec acc_loss = zero;

  for (std::size_t k = 0; k + 1 < T; ++k) {
    for (std::size_t i = 0; i < d; ++i) {
      e_re[i] = load(batch.re(group, k, i));
      e_im[i] = load(batch.im(group, k, i));
      e_re[d + i] = k > 0 ? load(batch.re(group, k - 1, i)) : zero;
      e_im[d + i] = k > 0 ? load(batch.im(group, k - 1, i)) : zero;
    }
    for (std::size_t m = 0; m < n; ++m)
      for (std::size_t c = 0; c < n; ++c) {
        s_re[m * n + c] = add(s_re[m * n + c], add(mul(e_re[m], e_re[c]), mul(e_im[m], e_im[c])));
        s_im[m * n + c] = add(s_im[m * n + c], sub(mul(e_im[m], e_re[c]), mul(e_re[m], e_im[c])));
      }
    if (k == 0) continue;
    const vec inv_rho = _mm256_set1_pd(1.0 / static_cast<double>(k));

    for (std::size_t m = 0; m < n; ++m) {
      vec ar = zero, ai = zero;
      for (std::size_t c = 0; c < n; ++c) {
        const vec a = bcast(A + m * n + c);
        ar = add(ar, mul(a, e_re[c]));
        ai = add(ai, mul(a, e_im[c]));
      }
      v_re[m] = ar;
      v_im[m] = ai;
    }
    for (std::size_t m = 0; m < n; ++m) {
      vec ar = zero, ai = zero;
      for (std::size_t c = 0; c < n; ++c) {
        const vec sr = s_re[m * n + c], si = s_im[m * n + c];
        ar = add(ar, sub(mul(sr, v_re[c]), mul(si, v_im[c])));
        ai = add(ai, add(mul(sr, v_im[c]), mul(si, v_re[c])));
      }
      w_re[m] = mul(ar, inv_rho);
      w_im[m] = mul(ai, inv_rho);
    }
    for (std::size_t j = 0; j < d; ++j) {
      vec yr = zero, yi = zero;
      for (std::size_t m = 0; m < n; ++m) {
        const vec p = bcast(P + j * n + m);
        yr = add(yr, mul(p, w_re[m]));
        yi = add(yi, mul(p, w_im[m]));
      }
      r_re[j] = sub(yr, load(batch.re(group, k + 1, j)));
      r_im[j] = sub(yi, load(batch.im(group, k + 1, j)));
      acc_loss = add(acc_loss, mul(half, add(mul(r_re[j], r_re[j]), mul(r_im[j], r_im[j]))));
    }
    if (!grad) continue;

    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t m = 0; m < n; ++m)
        gP[j * n + m] = add(gP[j * n + m], add(mul(r_re[j], w_re[m]), mul(r_im[j], w_im[m])));
    for (std::size_t m = 0; m < n; ++m) {
      vec qr = zero, qi = zero;
      for (std::size_t j = 0; j < d; ++j) {
        const vec p = bcast(P + j * n + m);
        qr = add(qr, mul(p, r_re[j]));
        qi = sub(qi, mul(p, r_im[j]));
      }
      q_re[m] = qr;
      q_im[m] = qi;
    }
    for (std::size_t c = 0; c < n; ++c) {
      vec zr = zero, zi = zero;
      for (std::size_t m = 0; m < n; ++m) {
        const vec sr = s_re[m * n + c], si = s_im[m * n + c];
        zr = add(zr, sub(mul(sr, q_re[m]), mul(si, q_im[m])));
        zi = add(zi, add(mul(sr, q_im[m]), mul(si, q_re[m])));
      }
      z_re[c] = mul(zr, inv_rho);
      z_im[c] = mul(zi, inv_rho);
    }
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        gA[a * n + b] = add(gA[a * n + b], sub(mul(z_re[a], e_re[b]), mul(z_im[a], e_im[b])));
  }

  _mm256_storeu_pd(loss, acc_loss);
  if (grad) {
    alignas(32) double lanes[kLanes];
    for (std::size_t p = 0; p < np; ++p) {
      _mm256_store_pd(lanes, g[p]);
      for (std::size_t l = 0; l < kLanes; ++l) grad[l * np + p] = lanes[l];
    }
  }
}

}  // namespace mesa::kernels
