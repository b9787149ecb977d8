#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "mesa/ar_data.hpp"

namespace mesa::kernels {

/// Per-sequence autoregressive loss and gradient over the trainable blocks.
///
/// For one sequence the kernel walks t = 1..T-1 keeping the running Hermitian
/// Gram matrix S_t = sum_{i<=t} e_i e_i^* of the reduced embeddings, and for
/// t >= 2 evaluates
///   w = S_t A e_t / (t-1),   y = P w,   r = y - x_{t+1},
///   loss += |r|^2 / 2,
///   dP   += Re(conj(r) w^T),
///   dA   += Re((S_t^T P^T conj(r)) e_t^T) / (t-1),
/// where A = wkq (2d x 2d) and P = wpv (d x 2d). Parameters and gradients use
/// the flat [wkq row-major, wpv row-major] layout of AttentionParams.
///
/// The scalar kernel is the reference. SIMD kernels run four sequences at once
/// (one per lane) with the same per-lane operation order and no fused
/// multiply-add, so their results match the reference bit for bit.

enum class Backend { Scalar, Avx2 };

std::string_view backend_name(Backend b) noexcept;
bool backend_available(Backend b) noexcept;

/// Best available backend; MESA_KERNEL=scalar|avx2 in the environment overrides.
Backend detect_backend();

inline constexpr std::size_t kLanes = 4;

/// Sequences of equal length and dimension, packed four per group as
/// structure-of-arrays. Unused lanes of the last group hold the zero sequence,
/// which contributes zero loss and zero gradient.
class PackedBatch {
 public:
  PackedBatch() = default;
  explicit PackedBatch(std::span<const ar::ARSequence> sequences);

  std::size_t count() const noexcept { return count_; }
  std::size_t groups() const noexcept { return groups_; }
  std::size_t length() const noexcept { return length_; }
  std::size_t dim() const noexcept { return dim_; }

  /// Pointer to the four lanes of token k (0-based), coordinate i, in group g.
  const double* re(std::size_t g, std::size_t k, std::size_t i) const noexcept {
    return re_.data() + index(g, k, i);
  }
  const double* im(std::size_t g, std::size_t k, std::size_t i) const noexcept {
    return im_.data() + index(g, k, i);
  }

 private:
  std::size_t index(std::size_t g, std::size_t k, std::size_t i) const noexcept {
    return ((g * length_ + k) * dim_ + i) * kLanes;
  }

  std::size_t count_ = 0;
  std::size_t groups_ = 0;
  std::size_t length_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> re_;
  std::vector<double> im_;
};

inline std::size_t param_count(std::size_t dim) { return 6 * dim * dim; }

/// Evaluates one group. `loss` receives kLanes values; `grad`, when non-null,
/// receives kLanes consecutive gradients of param_count(dim) entries each.
void eval_group_scalar(const PackedBatch& batch, std::size_t group, std::span<const double> params,
                       double* loss, double* grad);
void eval_group_avx2(const PackedBatch& batch, std::size_t group, std::span<const double> params,
                     double* loss, double* grad);

/// Per-sequence losses and (optionally) gradients for the whole batch.
struct SequenceTerms {
  std::vector<double> loss;  // count
  std::vector<double> grad;  // count x param_count, empty if not requested
};

SequenceTerms evaluate(const PackedBatch& batch, std::span<const double> params, bool with_grad,
                       Backend backend, unsigned threads = 1);

}  // namespace mesa::kernels
