#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "rqrf/model.hpp"
#include "rqrf/sampler.hpp"

namespace rqrf {

/// Learning rate over the run: held constant, or decayed linearly to zero at the last step.
enum class LrSchedule { kConstant, kLinear };

struct TrainConfig {
  int epochs = 3;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 7;
  LrSchedule schedule = LrSchedule::kConstant;

  void validate() const;
};

/// -sum ln sigma(gamma cos(q,b+)) - sum ln sigma(-gamma cos(q,b-)) for unit vectors.
template <class Real>
Real contrastive_loss(const Vector<Real>& query, std::span<const Vector<Real>> positives,
                      std::span<const Vector<Real>> negatives, Real gamma);

/// Mean sample loss over `batch`. When `grads` is non-null, the exact gradient of that mean is
/// accumulated into it (same shapes as `model`).
template <class Real>
Real batch_loss(std::span<const TrainingSample> batch, const TokenizedCorpus& texts, const ModelParams<Real>& model,
                ModelParams<Real>* grads);

/// Adaptive-moment optimizer holding one first/second moment buffer per tensor.
class AdamOptimizer {
 public:
  AdamOptimizer(const ModelParams<float>& model, const TrainConfig& config);

  void step(ModelParams<float>& model, const ModelParams<float>& grads);

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

  std::uint64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;  // mean batch loss during the epoch; epoch 0 is the untrained model
  double eval_map = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  ModelParams<float> model;
  std::vector<EpochStats> trace;  // trace[0] is the untrained full-data loss
};

/// Called after initialization (epoch 0) and after every epoch; may fill eval metrics.
using EpochCallback = std::function<void(const ModelParams<float>&, EpochStats&)>;

ModelParams<float> initial_model(const Universe& universe, const ModelConfig& model_config, std::uint64_t seed);

/// Deterministic minibatch training of both towers. Throws NumericError on divergence.
TrainResult train(std::span<const TrainingSample> samples, const Universe& universe, const ModelConfig& model_config,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace rqrf
