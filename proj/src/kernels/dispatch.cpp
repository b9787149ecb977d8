#include <cstdlib>
#include <stdexcept>
#include <string>

#include "mesa/kernels.hpp"
#include "mesa/parallel.hpp"

namespace mesa::kernels {

#ifndef MESA_HAVE_AVX2
void eval_group_avx2(const PackedBatch&, std::size_t, std::span<const double>, double*, double*) {
  throw std::runtime_error("AVX2 kernel not compiled into this build");
}
#endif

std::string_view backend_name(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
  }
  return "unknown";
}

bool backend_available(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar: return true;
    case Backend::Avx2:
#if defined(MESA_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

Backend detect_backend() {
  if (const char* env = std::getenv("MESA_KERNEL")) {
    const std::string want(env);
    if (want == "scalar") return Backend::Scalar;
    if (want == "avx2") {
      if (!backend_available(Backend::Avx2))
        throw std::runtime_error("MESA_KERNEL=avx2 requested but AVX2 is unavailable");
      return Backend::Avx2;
    }
    if (!want.empty()) throw std::runtime_error("unknown MESA_KERNEL value: " + want);
  }
  return backend_available(Backend::Avx2) ? Backend::Avx2 : Backend::Scalar;
}

SequenceTerms evaluate(const PackedBatch& batch, std::span<const double> params, bool with_grad,
                       Backend backend, unsigned threads) {
  const std::size_t np = param_count(batch.dim());
  if (params.size() != np) throw std::invalid_argument("parameter vector has wrong size");
  if (!backend_available(backend)) throw std::runtime_error("requested kernel backend unavailable");

  const std::size_t padded = batch.groups() * kLanes;
  std::vector<double> loss(padded, 0.0);
  std::vector<double> grad(with_grad ? padded * np : 0, 0.0);
  auto kernel = backend == Backend::Avx2 ? &eval_group_avx2 : &eval_group_scalar;

  parallel_for(batch.groups(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t g = begin; g < end; ++g)
      kernel(batch, g, params, loss.data() + g * kLanes,
             with_grad ? grad.data() + g * kLanes * np : nullptr);
  });

  loss.resize(batch.count());
  if (with_grad) grad.resize(batch.count() * np);
  return {std::move(loss), std::move(grad)};
}

}  // namespace mesa::kernels
