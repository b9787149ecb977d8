#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mesa/rng.hpp"

namespace mesa::ar {

using cplx = std::complex<double>;

/// Diagonal unitary transition matrix W = diag(lambda_1, ..., lambda_d).
class TransitionSpectrum {
 public:
  static constexpr double kModulusTolerance = 1e-12;

  TransitionSpectrum() = default;
  /// Throws std::invalid_argument if empty or any |lambda_i| deviates from 1.
  explicit TransitionSpectrum(std::vector<cplx> lambdas);

  std::size_t dim() const noexcept { return lambdas_.size(); }
  const std::vector<cplx>& lambdas() const noexcept { return lambdas_; }
  cplx operator[](std::size_t i) const { return lambdas_[i]; }

 private:
  std::vector<cplx> lambdas_;
};

struct Gaussian {
  double sigma;
};
struct SparseUniform {
  double c;
};
struct FixedOnes {};

/// Distribution of the initial token x_1 in R^d.
class InitialDistribution {
 public:
  using Kind = std::variant<Gaussian, SparseUniform, FixedOnes>;

  InitialDistribution(Kind kind, std::size_t dim);

  static InitialDistribution gaussian(std::size_t dim, double sigma) { return {Gaussian{sigma}, dim}; }
  static InitialDistribution sparse_uniform(std::size_t dim, double c) { return {SparseUniform{c}, dim}; }
  static InitialDistribution fixed_ones(std::size_t dim) { return {FixedOnes{}, dim}; }

  const Kind& kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }
  bool is_deterministic() const noexcept { return std::holds_alternative<FixedOnes>(kind_); }

  /// Short textual form: "gaussian(0.5)", "sparse(1)", "ones".
  std::string describe() const;

 private:
  Kind kind_;
  std::size_t dim_;
};

/// A trajectory x_1..x_T with x_{t+1} = W x_t, stored densely (T x d).
/// Token k (0-based) is x_{k+1}.
class ARSequence {
 public:
  ARSequence() = default;
  ARSequence(TransitionSpectrum spectrum, std::vector<double> x1, std::vector<cplx> tokens,
             std::size_t length, std::uint64_t seed);

  std::size_t length() const noexcept { return length_; }
  std::size_t dim() const noexcept { return spectrum_.dim(); }
  const TransitionSpectrum& spectrum() const noexcept { return spectrum_; }
  const std::vector<double>& x1() const noexcept { return x1_; }
  std::uint64_t seed() const noexcept { return seed_; }

  std::span<const cplx> token(std::size_t k) const {
    return {tokens_.data() + k * dim(), dim()};
  }
  cplx at(std::size_t k, std::size_t i) const { return tokens_[k * dim() + i]; }
  const std::vector<cplx>& data() const noexcept { return tokens_; }

 private:
  TransitionSpectrum spectrum_;
  std::vector<double> x1_;
  std::vector<cplx> tokens_;
  std::size_t length_ = 0;
  std::uint64_t seed_ = 0;
};

/// kappa1 = E[x_j^4], kappa2 = E[x_j^6], kappa3 = sum_{r != j} E[x_j^2 x_r^4].
struct Moments {
  double kappa1 = 0.0;
  double kappa2 = 0.0;
  double kappa3 = 0.0;
  std::size_t dim = 0;
  /// False for descriptive values of a distribution outside the zero-mean
  /// moment condition (the deterministic all-ones token).
  bool satisfies_moment_condition = true;
};

TransitionSpectrum sample_spectrum(std::size_t dim, Rng& rng);
TransitionSpectrum sample_spectrum(std::size_t dim, std::uint64_t seed);

std::vector<double> sample_initial(const InitialDistribution& dist, Rng& rng);
std::vector<double> sample_initial(const InitialDistribution& dist, std::uint64_t seed);

/// Closed form x_{t,i} = lambda_i^{t-1} x_{1,i}.
ARSequence generate_sequence(const TransitionSpectrum& spectrum, std::span<const double> x1,
                             std::size_t length, std::uint64_t seed = 0);

/// Direct recurrence x_{t+1} = W x_t. Kept as an oracle for the closed form.
ARSequence generate_sequence_recurrence(const TransitionSpectrum& spectrum,
                                        std::span<const double> x1, std::size_t length);

/// Throws std::domain_error for FixedOnes.
Moments closed_form_moments(const InitialDistribution& dist);

Moments empirical_moments(const InitialDistribution& dist, std::size_t n_samples,
                          std::uint64_t seed);

/// Samples spectrum then x_1 from a stream seeded by `seed`.
ARSequence sample_sequence(const InitialDistribution& dist, std::size_t length,
                           std::uint64_t seed);

/// n sequences; sequence i uses derive_seed(master_seed, i), so the result is
/// identical for any thread count.
std::vector<ARSequence> generate_dataset(const InitialDistribution& dist, std::size_t n,
                                         std::size_t length, std::uint64_t master_seed,
                                         unsigned threads = 1);

/// JSON-lines: one {"seed", "lambdas": [[re,im],...], "x1": [...], "T"} per line.
void write_dataset(std::ostream& out, std::span<const ARSequence> dataset);
void write_dataset(const std::string& path, std::span<const ARSequence> dataset);
std::vector<ARSequence> read_dataset(std::istream& in);
std::vector<ARSequence> read_dataset(const std::string& path);

}  // namespace mesa::ar
