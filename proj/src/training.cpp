#include "mesa/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mesa/rng.hpp"

namespace mesa::training {

std::string describe(const InitSpec& init) {
  std::ostringstream os;
  if (const auto* d = std::get_if<DiagonalInit>(&init))
    os << "diagonal(" << d->a0 << "," << d->b0 << ")";
  else
    os << "gaussian(" << std::get<GaussianInit>(init).sigma_w << ")";
  return os.str();
}

void TrainConfig::validate() const {
  if (n == 0) throw std::invalid_argument("n must be >= 1");
  if (seq_len < 3) throw std::invalid_argument("T_tr must be >= 3 (loss sums t = 2..T-1)");
  if (dim == 0) throw std::invalid_argument("d must be >= 1");
  if (!(step_size > 0.0) || !std::isfinite(step_size))
    throw std::invalid_argument("step_size must be positive");
  if (log_every == 0) throw std::invalid_argument("log_every must be >= 1");
  if (batch_size > n) throw std::invalid_argument("batch_size cannot exceed n");
  if (!(divergence_factor > 1.0)) throw std::invalid_argument("divergence_factor must be > 1");
  if (const auto* g = std::get_if<GaussianInit>(&init); g && !(g->sigma_w >= 0.0))
    throw std::invalid_argument("sigma_w must be non-negative");
}

namespace {

TrainConfig config_from_json(const nlohmann::json& j) {
  static const char* const kKeys[] = {"n",         "T",          "d",          "init",
                                      "a0",        "b0",         "sigma_w",    "step_size",
                                      "epochs",    "mask_nondiagonal", "seed", "log_every",
                                      "batch_size", "divergence_factor", "threads", "kernel"};
  for (const auto& [key, _] : j.items())
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys))
      throw std::invalid_argument("unknown config key: " + key);

  TrainConfig cfg;
  cfg.n = j.value("n", cfg.n);
  cfg.seq_len = j.value("T", cfg.seq_len);
  cfg.dim = j.value("d", cfg.dim);
  const auto init = j.value("init", std::string("diagonal"));
  if (init == "diagonal") {
    cfg.init = DiagonalInit{j.value("a0", 0.1), j.value("b0", 0.1)};
  } else if (init == "gaussian") {
    cfg.init = GaussianInit{j.value("sigma_w", 0.01)};
  } else {
    throw std::invalid_argument("init must be 'diagonal' or 'gaussian'");
  }
  cfg.step_size = j.value("step_size", cfg.step_size);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.mask_nondiagonal = j.value("mask_nondiagonal", cfg.mask_nondiagonal);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.log_every = j.value("log_every", cfg.log_every);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.divergence_factor = j.value("divergence_factor", cfg.divergence_factor);
  cfg.threads = j.value("threads", cfg.threads);
  const auto kernel = j.value("kernel", std::string("auto"));
  if (kernel == "scalar") cfg.backend = kernels::Backend::Scalar;
  else if (kernel == "avx2") cfg.backend = kernels::Backend::Avx2;
  else if (kernel != "auto") throw std::invalid_argument("kernel must be auto, scalar or avx2");
  cfg.validate();
  return cfg;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

TrainConfig parse_config(const std::string& text) {
  const auto body = trim(text);
  if (!body.empty() && body.front() == '{') return config_from_json(nlohmann::json::parse(body));

  nlohmann::json j = nlohmann::json::object();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line without '=': " + line);
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    auto parsed = nlohmann::json::parse(value, nullptr, false);
    j[key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
  }
  return config_from_json(j);
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

nlohmann::json config_to_json(const TrainConfig& cfg) {
  nlohmann::json j = {{"n", cfg.n},
                      {"T", cfg.seq_len},
                      {"d", cfg.dim},
                      {"step_size", cfg.step_size},
                      {"epochs", cfg.epochs},
                      {"mask_nondiagonal", cfg.mask_nondiagonal},
                      {"seed", cfg.seed},
                      {"log_every", cfg.log_every},
                      {"batch_size", cfg.batch_size},
                      {"divergence_factor", cfg.divergence_factor}};
  if (const auto* d = std::get_if<DiagonalInit>(&cfg.init)) {
    j["init"] = "diagonal";
    j["a0"] = d->a0;
    j["b0"] = d->b0;
  } else {
    j["init"] = "gaussian";
    j["sigma_w"] = std::get<GaussianInit>(cfg.init).sigma_w;
  }
  return j;
}

double sequence_loss(const AttentionParams& params, const ar::ARSequence& seq) {
  if (seq.length() < 3) throw std::invalid_argument("sequence_loss needs T >= 3");
  double total = 0.0;
  for (std::size_t t = 2; t + 1 <= seq.length(); ++t) {
    const auto y = attention::predict_next(params, attention::embed(seq, t));
    for (std::size_t j = 0; j < seq.dim(); ++j)
      total += 0.5 * std::norm(y(static_cast<Eigen::Index>(j)) - seq.at(t, j));
  }
  return total;
}

Objective::Objective(std::span<const ar::ARSequence> dataset,
                     std::optional<kernels::Backend> backend, unsigned threads)
    : batch_(dataset),
      backend_(backend.value_or(kernels::detect_backend())),
      threads_(std::max(1u, threads)) {}

kernels::SequenceTerms Objective::per_sequence(const AttentionParams& params, bool with_grad) const {
  if (params.dim() != batch_.dim()) throw std::invalid_argument("parameter dimension mismatch");
  return kernels::evaluate(batch_, params.values(), with_grad, backend_, threads_);
}

double Objective::loss(const AttentionParams& params) const {
  const auto terms = per_sequence(params, false);
  double s = 0.0;
  for (double v : terms.loss) s += v;
  return s / static_cast<double>(terms.loss.size());
}

Objective::LossGrad Objective::loss_and_gradient(const AttentionParams& params) const {
  const auto terms = per_sequence(params, true);
  const std::size_t n = terms.loss.size();
  const std::size_t np = params.size();
  LossGrad out{0.0, AttentionParams(params.dim())};
  auto g = out.grad.values();
  for (std::size_t s = 0; s < n; ++s) {
    out.loss += terms.loss[s];
    const double* gs = terms.grad.data() + s * np;
    for (std::size_t p = 0; p < np; ++p) g[p] += gs[p];
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.loss *= inv;
  for (auto& v : g) v *= inv;
  return out;
}

Objective::GradientStats Objective::gradient_stats(const AttentionParams& params) const {
  const auto terms = per_sequence(params, true);
  const std::size_t n = terms.loss.size();
  const std::size_t np = params.size();
  GradientStats st{AttentionParams(params.dim()), AttentionParams(params.dim())};
  auto mean = st.mean.values();
  auto se = st.std_error.values();
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t p = 0; p < np; ++p) mean[p] += terms.grad[s * np + p];
  for (auto& v : mean) v /= static_cast<double>(n);
  if (n < 2) return st;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t p = 0; p < np; ++p) {
      const double dev = terms.grad[s * np + p] - mean[p];
      se[p] += dev * dev;
    }
  for (auto& v : se) v = std::sqrt(v / static_cast<double>(n - 1) / static_cast<double>(n));
  return st;
}

double batch_loss(const AttentionParams& params, std::span<const ar::ARSequence> dataset) {
  if (dataset.empty()) throw std::invalid_argument("batch_loss: empty dataset");
  return Objective(dataset).loss(params);
}

AttentionParams loss_gradient(const AttentionParams& params,
                              std::span<const ar::ARSequence> dataset) {
  if (dataset.empty()) throw std::invalid_argument("loss_gradient: empty dataset");
  return Objective(dataset).loss_and_gradient(params).grad;
}

AttentionParams mask_nondiagonal(AttentionParams grad) {
  const std::size_t d = grad.dim();
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (i != j) {
        grad.kq32(i, j) = 0.0;
        grad.pv12(i, j) = 0.0;
      }
  return grad;
}

AttentionParams init_params(const InitSpec& init, std::size_t dim, std::uint64_t seed) {
  if (const auto* diag = std::get_if<DiagonalInit>(&init))
    return AttentionParams::from_diagonal({diag->a0, diag->b0}, dim);
  const double sigma = std::get<GaussianInit>(init).sigma_w;
  AttentionParams p(dim);
  Rng rng(derive_seed(seed, 0x1417));
  for (auto& v : p.values()) v = sigma * rng.normal();
  return p;
}

PredictionMetrics prediction_metrics(const AttentionParams& params,
                                     std::span<const ar::ARSequence> test_set) {
  PredictionMetrics m;
  if (test_set.empty()) return m;
  std::vector<double> ratios, errors;
  ratios.reserve(test_set.size());
  errors.reserve(test_set.size());
  std::size_t terms = 0;
  for (const auto& seq : test_set) {
    const std::size_t T = seq.length();
    const auto y = attention::predict_next(params, attention::embed(seq, T - 1));
    double err = 0.0, ratio_sum = 0.0;
    std::size_t used = 0;
    for (std::size_t j = 0; j < seq.dim(); ++j) {
      const auto target = seq.at(T - 1, j);
      const auto yj = y(static_cast<Eigen::Index>(j));
      err += std::norm(yj - target);
      if (target != ar::cplx{0.0, 0.0}) {
        ratio_sum += (yj / target).real();
        ++used;
      }
    }
    errors.push_back(err);
    if (used > 0) ratios.push_back(ratio_sum / static_cast<double>(used));
    terms += used;
  }
  auto mean_se = [](const std::vector<double>& v, double& mean, double& se) {
    if (v.empty()) return;
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) {
      se = 0.0;
      return;
    }
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  };
  mean_se(ratios, m.ratio_mean, m.ratio_std_error);
  mean_se(errors, m.mse_mean, m.mse_std_error);
  m.ratio_terms = terms;
  return m;
}

namespace {

void check_dataset(std::span<const ar::ARSequence> data, const TrainConfig& cfg, const char* what) {
  for (const auto& s : data)
    if (s.dim() != cfg.dim)
      throw std::invalid_argument(std::string(what) + " dimension does not match config d");
}

std::vector<ar::ARSequence> subsample(std::span<const ar::ARSequence> data, std::size_t k,
                                      std::uint64_t seed) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  std::vector<ar::ARSequence> out;
  out.reserve(k);
  for (auto i : idx) out.push_back(data[i]);
  return out;
}

}  // namespace

TrainTrajectory train(const TrainConfig& config, std::span<const ar::ARSequence> train_set,
                      std::span<const ar::ARSequence> test_set) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  check_dataset(train_set, config, "training set");
  check_dataset(test_set, config, "test set");
  if (train_set.front().length() < 3) throw std::invalid_argument("train: sequences need T >= 3");

  const Objective objective(train_set, config.backend, config.threads);
  std::optional<Objective> test_objective;
  if (!test_set.empty()) test_objective.emplace(test_set, config.backend, config.threads);
  const bool minibatch = config.batch_size > 0 && config.batch_size < train_set.size();

  AttentionParams params = init_params(config.init, config.dim, config.seed);
  TrainTrajectory traj;
  double initial_loss = 0.0;

  for (std::size_t epoch = 0;; ++epoch) {
    const bool last = epoch == config.epochs;
    const bool log = last || epoch % config.log_every == 0;

    Objective::LossGrad lg;
    if (minibatch) {
      lg.loss = objective.loss(params);
      if (!last) {
        const auto part = subsample(train_set, config.batch_size, derive_seed(config.seed, epoch));
        lg.grad = Objective(part, config.backend, config.threads).loss_and_gradient(params).grad;
      }
    } else if (last) {
      lg.loss = objective.loss(params);
    } else {
      lg = objective.loss_and_gradient(params);
    }

    if (epoch == 0) initial_loss = lg.loss;
    if (!std::isfinite(lg.loss) ||
        (initial_loss > 0.0 && lg.loss > config.divergence_factor * initial_loss)) {
      std::ostringstream os;
      os << "training diverged at epoch " << epoch << ": loss " << lg.loss << " vs initial "
         << initial_loss << " (step_size " << config.step_size << ", limit "
         << config.divergence_factor << "x); reduce the step size";
      throw TrainingDiverged(os.str());
    }

    if (log) {
      Snapshot s;
      s.epoch = epoch;
      s.params = params;
      s.train_loss = lg.loss;
      if (test_objective) s.test_loss = test_objective->loss(params);
      s.diag_a = params.diag_a();
      s.diag_b = params.diag_b();
      s.ab = s.diag_a * s.diag_b;
      traj.snapshots.push_back(std::move(s));
    }
    if (last) break;

    const AttentionParams step = config.mask_nondiagonal ? mask_nondiagonal(std::move(lg.grad))
                                                         : std::move(lg.grad);
    auto v = params.values();
    const auto g = step.values();
    for (std::size_t p = 0; p < v.size(); ++p) v[p] -= config.step_size * g[p];
  }
  return traj;
}

void write_trajectory_csv(std::ostream& out, const TrainTrajectory& traj) {
  const auto old = out.precision(17);
  out << "epoch,train_loss,test_loss,a,b,ab\n";
  for (const auto& s : traj.snapshots)
    out << s.epoch << ',' << s.train_loss << ',' << s.test_loss << ',' << s.diag_a << ','
        << s.diag_b << ',' << s.ab << '\n';
  out.precision(old);
}

}  // namespace mesa::training
