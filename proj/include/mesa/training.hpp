#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mesa/ar_data.hpp"
#include "mesa/attention.hpp"
#include "mesa/kernels.hpp"

namespace mesa::training {

using attention::AttentionParams;

struct DiagonalInit {
  double a0 = 0.1;
  double b0 = 0.1;
};
struct GaussianInit {
  double sigma_w = 0.01;
};
using InitSpec = std::variant<DiagonalInit, GaussianInit>;

std::string describe(const InitSpec& init);

struct TrainConfig {
  std::size_t n = 10000;
  std::size_t seq_len = 100;  // T_tr
  std::size_t dim = 5;
  InitSpec init = DiagonalInit{};
  double step_size = 0.001;
  std::size_t epochs = 200;
  bool mask_nondiagonal = false;
  std::uint64_t seed = 1;
  std::size_t log_every = 1;
  /// 0 means full batch. Otherwise each epoch uses a seeded subset of this size.
  std::size_t batch_size = 0;
  /// Abort when the training loss exceeds this multiple of its initial value.
  double divergence_factor = 1e6;
  unsigned threads = 1;
  std::optional<kernels::Backend> backend;

  /// Throws std::invalid_argument on an unusable configuration.
  void validate() const;
};

/// Reads a TrainConfig from JSON ({...}) or `key = value` lines. Unknown keys
/// are rejected. Keys: n, T, d, init ("diagonal"|"gaussian"), a0, b0, sigma_w,
/// step_size, epochs, mask_nondiagonal, seed, log_every, batch_size,
/// divergence_factor, threads, kernel ("auto"|"scalar"|"avx2").
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);
nlohmann::json config_to_json(const TrainConfig& cfg);

/// sum_{t=2}^{T-1} |y_t - x_{t+1}|^2 / 2 through the attention forward pass.
double sequence_loss(const AttentionParams& params, const ar::ARSequence& seq);

/// Loss and gradient over a fixed dataset, evaluated with the batch kernels.
/// Per-sequence terms are reduced in index order, so the result does not
/// depend on the thread count.
class Objective {
 public:
  explicit Objective(std::span<const ar::ARSequence> dataset,
                     std::optional<kernels::Backend> backend = std::nullopt, unsigned threads = 1);

  std::size_t size() const noexcept { return batch_.count(); }
  std::size_t dim() const noexcept { return batch_.dim(); }
  kernels::Backend backend() const noexcept { return backend_; }

  double loss(const AttentionParams& params) const;

  struct LossGrad {
    double loss = 0.0;
    AttentionParams grad;
  };
  LossGrad loss_and_gradient(const AttentionParams& params) const;

  /// Entrywise mean gradient and its Monte Carlo standard error
  /// (sample std of the per-sequence gradients over sqrt(n)).
  struct GradientStats {
    AttentionParams mean;
    AttentionParams std_error;
  };
  GradientStats gradient_stats(const AttentionParams& params) const;

  kernels::SequenceTerms per_sequence(const AttentionParams& params, bool with_grad) const;

 private:
  kernels::PackedBatch batch_;
  kernels::Backend backend_;
  unsigned threads_;
};

/// Mean of sequence_loss over the dataset. Throws on an empty dataset.
double batch_loss(const AttentionParams& params, std::span<const ar::ARSequence> dataset);

/// Exact gradient of batch_loss with respect to every entry of wkq and wpv.
AttentionParams loss_gradient(const AttentionParams& params,
                              std::span<const ar::ARSequence> dataset);

/// Zeroes the off-diagonal entries of the W^KQ_32 and W^PV_12 blocks.
AttentionParams mask_nondiagonal(AttentionParams grad);

AttentionParams init_params(const InitSpec& init, std::size_t dim, std::uint64_t seed);

/// Next-token quality at the last position of each test sequence:
/// y_{T-1} against x_T.
struct PredictionMetrics {
  /// Mean of the element-wise ratio y_j / x_{T,j} (real part), skipping
  /// coordinates where x_{T,j} == 0, and its standard error with the
  /// per-sequence average as the sampling unit.
  double ratio_mean = std::numeric_limits<double>::quiet_NaN();
  double ratio_std_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t ratio_terms = 0;
  /// Mean of ||y_{T-1} - x_T||^2 and its standard error.
  double mse_mean = std::numeric_limits<double>::quiet_NaN();
  double mse_std_error = std::numeric_limits<double>::quiet_NaN();
};

PredictionMetrics prediction_metrics(const AttentionParams& params,
                                     std::span<const ar::ARSequence> test_set);

struct Snapshot {
  std::size_t epoch = 0;
  AttentionParams params;
  double train_loss = 0.0;
  double test_loss = std::numeric_limits<double>::quiet_NaN();
  double diag_a = 0.0;
  double diag_b = 0.0;
  double ab = 0.0;
};

struct TrainTrajectory {
  std::vector<Snapshot> snapshots;
  const Snapshot& final() const { return snapshots.back(); }
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Full-batch vanilla gradient descent from init_params(config.init).
TrainTrajectory train(const TrainConfig& config, std::span<const ar::ARSequence> train_set,
                      std::span<const ar::ARSequence> test_set);

/// CSV with header epoch,train_loss,test_loss,a,b,ab.
void write_trajectory_csv(std::ostream& out, const TrainTrajectory& traj);

}  // namespace mesa::training
