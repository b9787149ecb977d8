#include "mesa/ar_data.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mesa/parallel.hpp"

namespace mesa::ar {

TransitionSpectrum::TransitionSpectrum(std::vector<cplx> lambdas) : lambdas_(std::move(lambdas)) {
  if (lambdas_.empty()) throw std::invalid_argument("transition spectrum must have d >= 1");
  for (const auto& l : lambdas_) {
    if (!(std::abs(std::abs(l) - 1.0) <= kModulusTolerance))
      throw std::invalid_argument("transition eigenvalue is not unit modulus");
  }
}

InitialDistribution::InitialDistribution(Kind kind, std::size_t dim) : kind_(kind), dim_(dim) {
  if (dim_ == 0) throw std::invalid_argument("initial distribution needs d >= 1");
  if (const auto* g = std::get_if<Gaussian>(&kind_); g && !(g->sigma > 0.0))
    throw std::invalid_argument("Gaussian initial distribution needs sigma > 0");
  if (const auto* s = std::get_if<SparseUniform>(&kind_); s && !std::isfinite(s->c))
    throw std::invalid_argument("sparse initial distribution needs a finite c");
}

std::string InitialDistribution::describe() const {
  std::ostringstream os;
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Gaussian>) os << "gaussian(" << k.sigma << ")";
        else if constexpr (std::is_same_v<K, SparseUniform>) os << "sparse(" << k.c << ")";
        else os << "ones";
      },
      kind_);
  return os.str();
}

ARSequence::ARSequence(TransitionSpectrum spectrum, std::vector<double> x1,
                       std::vector<cplx> tokens, std::size_t length, std::uint64_t seed)
    : spectrum_(std::move(spectrum)),
      x1_(std::move(x1)),
      tokens_(std::move(tokens)),
      length_(length),
      seed_(seed) {
  if (tokens_.size() != length_ * spectrum_.dim())
    throw std::invalid_argument("token storage does not match T x d");
}

TransitionSpectrum sample_spectrum(std::size_t dim, Rng& rng) {
  if (dim == 0) throw std::invalid_argument("sample_spectrum: d must be >= 1");
  std::vector<cplx> lambdas(dim);
  for (auto& l : lambdas) l = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
  return TransitionSpectrum(std::move(lambdas));
}

TransitionSpectrum sample_spectrum(std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  return sample_spectrum(dim, rng);
}

std::vector<double> sample_initial(const InitialDistribution& dist, Rng& rng) {
  const std::size_t d = dist.dim();
  std::vector<double> x(d, 0.0);
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Gaussian>) {
          for (auto& v : x) v = k.sigma * rng.normal();
        } else if constexpr (std::is_same_v<K, SparseUniform>) {
          const auto pick = rng.below(2 * d);
          x[pick / 2] = (pick % 2 == 0) ? k.c : -k.c;
        } else {
          std::fill(x.begin(), x.end(), 1.0);
        }
      },
      dist.kind());
  return x;
}

std::vector<double> sample_initial(const InitialDistribution& dist, std::uint64_t seed) {
  Rng rng(seed);
  return sample_initial(dist, rng);
}

namespace {

void check_shape(const TransitionSpectrum& spectrum, std::span<const double> x1, std::size_t length) {
  if (length < 2) throw std::invalid_argument("sequence length T must be >= 2");
  if (x1.size() != spectrum.dim())
    throw std::invalid_argument("x1 dimension does not match spectrum dimension");
}

}  // namespace

ARSequence generate_sequence(const TransitionSpectrum& spectrum, std::span<const double> x1,
                             std::size_t length, std::uint64_t seed) {
  check_shape(spectrum, x1, length);
  const std::size_t d = spectrum.dim();
  std::vector<cplx> tokens(length * d);
  for (std::size_t i = 0; i < d; ++i) {
    const double modulus = std::abs(spectrum[i]);
    const double phase = std::arg(spectrum[i]);
    for (std::size_t k = 0; k < length; ++k) {
      const double p = static_cast<double>(k);
      tokens[k * d + i] = std::polar(std::pow(modulus, p), p * phase) * x1[i];
    }
  }
  return ARSequence(spectrum, std::vector<double>(x1.begin(), x1.end()), std::move(tokens), length,
                    seed);
}

ARSequence generate_sequence_recurrence(const TransitionSpectrum& spectrum,
                                        std::span<const double> x1, std::size_t length) {
  check_shape(spectrum, x1, length);
  const std::size_t d = spectrum.dim();
  std::vector<cplx> tokens(length * d);
  for (std::size_t i = 0; i < d; ++i) tokens[i] = x1[i];
  for (std::size_t k = 1; k < length; ++k)
    for (std::size_t i = 0; i < d; ++i) tokens[k * d + i] = spectrum[i] * tokens[(k - 1) * d + i];
  return ARSequence(spectrum, std::vector<double>(x1.begin(), x1.end()), std::move(tokens), length,
                    0);
}

Moments closed_form_moments(const InitialDistribution& dist) {
  const auto d = static_cast<double>(dist.dim());
  return std::visit(
      [&](const auto& k) -> Moments {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Gaussian>) {
          const double s2 = k.sigma * k.sigma;
          const double s4 = s2 * s2;
          const double s6 = s4 * s2;
          return {3.0 * s4, 15.0 * s6, 3.0 * (d - 1.0) * s6, dist.dim(), true};
        } else if constexpr (std::is_same_v<K, SparseUniform>) {
          const double c2 = k.c * k.c;
          const double c4 = c2 * c2;
          return {c4 / d, c4 * c2 / d, 0.0, dist.dim(), true};
        } else {
          throw std::domain_error("moments undefined for deterministic token");
        }
      },
      dist.kind());
}

Moments empirical_moments(const InitialDistribution& dist, std::size_t n_samples,
                          std::uint64_t seed) {
  if (n_samples == 0) throw std::invalid_argument("empirical_moments needs n_samples >= 1");
  Rng rng(seed);
  const std::size_t d = dist.dim();
  double s4 = 0.0, s6 = 0.0, smix = 0.0;
  std::vector<double> sq(d), quart(d);
  for (std::size_t n = 0; n < n_samples; ++n) {
    const auto x = sample_initial(dist, rng);
    double total_quart = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      sq[j] = x[j] * x[j];
      quart[j] = sq[j] * sq[j];
      total_quart += quart[j];
    }
    for (std::size_t j = 0; j < d; ++j) {
      s4 += quart[j];
      s6 += quart[j] * sq[j];
      smix += sq[j] * (total_quart - quart[j]);
    }
  }
  const double denom = static_cast<double>(n_samples) * static_cast<double>(d);
  return {s4 / denom, s6 / denom, smix / denom, d, !dist.is_deterministic()};
}

ARSequence sample_sequence(const InitialDistribution& dist, std::size_t length,
                           std::uint64_t seed) {
  Rng rng(seed);
  auto spectrum = sample_spectrum(dist.dim(), rng);
  auto x1 = sample_initial(dist, rng);
  return generate_sequence(spectrum, x1, length, seed);
}

std::vector<ARSequence> generate_dataset(const InitialDistribution& dist, std::size_t n,
                                         std::size_t length, std::uint64_t master_seed,
                                         unsigned threads) {
  std::vector<ARSequence> out(n);
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      out[i] = sample_sequence(dist, length, derive_seed(master_seed, i));
  });
  return out;
}

void write_dataset(std::ostream& out, std::span<const ARSequence> dataset) {
  for (const auto& seq : dataset) {
    nlohmann::json rec;
    rec["seed"] = seq.seed();
    auto lambdas = nlohmann::json::array();
    for (const auto& l : seq.spectrum().lambdas()) lambdas.push_back({l.real(), l.imag()});
    rec["lambdas"] = std::move(lambdas);
    rec["x1"] = seq.x1();
    rec["T"] = seq.length();
    out << rec.dump() << '\n';
  }
}

void write_dataset(const std::string& path, std::span<const ARSequence> dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open dataset for writing: " + path);
  write_dataset(out, dataset);
  if (!out) throw std::runtime_error("failed writing dataset: " + path);
}

std::vector<ARSequence> read_dataset(std::istream& in) {
  std::vector<ARSequence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      std::vector<cplx> lambdas;
      for (const auto& pair : rec.at("lambdas")) {
        if (pair.size() != 2) throw std::invalid_argument("complex numbers are [re, im] pairs");
        lambdas.emplace_back(pair.at(0).get<double>(), pair.at(1).get<double>());
      }
      const auto x1 = rec.at("x1").get<std::vector<double>>();
      out.push_back(generate_sequence(TransitionSpectrum(std::move(lambdas)), x1,
                                      rec.at("T").get<std::size_t>(),
                                      rec.at("seed").get<std::uint64_t>()));
    } catch (const std::exception& e) {
      throw std::runtime_error("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ARSequence> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  return read_dataset(in);
}

}  // namespace mesa::ar
