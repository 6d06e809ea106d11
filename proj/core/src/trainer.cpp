#include "rqrf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "rqrf/corpus.hpp"
#include "rqrf/error.hpp"
#include "rqrf/random.hpp"

namespace rqrf {

namespace {

// -ln sigma(x), stable for large |x|.
template <class Real>
Real neg_log_sigmoid(Real x) {
  return x > Real(0) ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

template <class Real>
Real sigmoid(Real x) {
  if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

void check_sample_ids(std::span<const TrainingSample> samples, const TokenizedCorpus& texts) {
  for (const TrainingSample& s : samples) {
    if (s.positives.empty()) throw InvalidArgument("training sample without positives");
    if (s.query.index() >= texts.queries.size()) throw ArtifactError("sample references unknown query");
    for (KeywordId k : s.positives) {
      if (k.index() >= texts.keywords.size()) throw ArtifactError("sample references unknown keyword");
    }
    for (KeywordId k : s.negatives) {
      if (k.index() >= texts.keywords.size()) throw ArtifactError("sample references unknown keyword");
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate", "must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1", "must be in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2", "must be in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon", "must be > 0");
}

template <class Real>
Real contrastive_loss(const Vector<Real>& query, std::span<const Vector<Real>> positives,
                      std::span<const Vector<Real>> negatives, Real gamma) {
  if (positives.empty()) throw InvalidArgument("contrastive_loss: no positives");
  Real loss = 0;
  for (const auto& b : positives) loss += neg_log_sigmoid(gamma * query.dot(b));
  for (const auto& b : negatives) loss += neg_log_sigmoid(-gamma * query.dot(b));
  return loss;
}

template <class Real>
Real batch_loss(std::span<const TrainingSample> batch, const TokenizedCorpus& texts, const ModelParams<Real>& model,
                ModelParams<Real>* grads) {
  if (batch.empty()) throw InvalidArgument("batch_loss: empty batch");
  check_sample_ids(batch, texts);
  const Real gamma = static_cast<Real>(model.config.gamma);

  // Each distinct text is encoded once; gradients w.r.t. its output are summed before backprop.
  struct Slot {
    TowerTrace<Real> trace;
    Vector<Real> out;
    Vector<Real> d_out;
  };
  std::map<QueryId, Slot> queries;
  std::map<KeywordId, Slot> keywords;
  for (const TrainingSample& s : batch) {
    queries.try_emplace(s.query);
    for (KeywordId k : s.positives) keywords.try_emplace(k);
    for (KeywordId k : s.negatives) keywords.try_emplace(k);
  }
  for (auto& [q, slot] : queries) {
    slot.out = encode(texts.queries[q.index()], model.query, slot.trace);
    slot.d_out = Vector<Real>::Zero(slot.out.size());
  }
  for (auto& [k, slot] : keywords) {
    slot.out = encode(texts.keywords[k.index()], model.keyword, slot.trace);
    slot.d_out = Vector<Real>::Zero(slot.out.size());
  }

  const Real inv_batch = Real(1) / static_cast<Real>(batch.size());
  Real total = 0;
  for (const TrainingSample& s : batch) {
    Slot& qs = queries.at(s.query);
    Real loss = 0;
    for (KeywordId k : s.positives) {
      Slot& ks = keywords.at(k);
      const Real x = gamma * qs.out.dot(ks.out);
      loss += neg_log_sigmoid(x);
      if (grads) {
        const Real dc = -gamma * sigmoid(-x) * inv_batch;
        qs.d_out += dc * ks.out;
        ks.d_out += dc * qs.out;
      }
    }
    for (KeywordId k : s.negatives) {
      Slot& ks = keywords.at(k);
      const Real x = gamma * qs.out.dot(ks.out);
      loss += neg_log_sigmoid(-x);
      if (grads) {
        const Real dc = gamma * sigmoid(x) * inv_batch;
        qs.d_out += dc * ks.out;
        ks.d_out += dc * qs.out;
      }
    }
    total += loss;
  }
  const Real mean = total * inv_batch;
  if (!std::isfinite(static_cast<double>(mean))) throw NumericError("batch loss is not finite");
  if (grads) {
    for (auto& [q, slot] : queries) backward(slot.trace, model.query, slot.d_out, grads->query);
    for (auto& [k, slot] : keywords) backward(slot.trace, model.keyword, slot.d_out, grads->keyword);
  }
  return mean;
}

AdamOptimizer::AdamOptimizer(const ModelParams<float>& model, const TrainConfig& config)
    : lr_(config.learning_rate), beta1_(config.beta1), beta2_(config.beta2), eps_(config.epsilon) {
  model.visit([&](const std::string&, const float*, const std::vector<std::uint32_t>& dims) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    m_.emplace_back(n, 0.0f);
    v_.emplace_back(n, 0.0f);
  });
}

void AdamOptimizer::step(ModelParams<float>& model, const ModelParams<float>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto b1 = static_cast<float>(beta1_);
  const auto b2 = static_cast<float>(beta2_);
  std::vector<const float*> g;
  grads.visit([&](const std::string&, const float* data, const std::vector<std::uint32_t>&) { g.push_back(data); });
  std::size_t idx = 0;
  model.visit([&](const std::string&, float* data, const std::vector<std::uint32_t>&) {
    auto& m = m_[idx];
    auto& v = v_[idx];
    const float* gt = g[idx];
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * gt[i];
      v[i] = b2 * v[i] + (1.0f - b2) * gt[i] * gt[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      data[i] -= static_cast<float>(lr_ * m_hat / (std::sqrt(v_hat) + eps_));
    }
    ++idx;
  });
}

ModelParams<float> initial_model(const Universe& universe, const ModelConfig& model_config, std::uint64_t seed) {
  auto model = ModelParams<float>::zeros(model_config, Vocabulary::from_universe(universe));
  initialize(model, derive_seed(seed, 0x1a17));
  return model;
}

TrainResult train(std::span<const TrainingSample> samples, const Universe& universe, const ModelConfig& model_config,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (samples.empty()) throw InvalidArgument("train: no samples");
  TrainResult result{initial_model(universe, model_config, config.seed), {}};
  ModelParams<float>& model = result.model;
  const TokenizedCorpus texts = TokenizedCorpus::build(universe, model.vocab, model.config.tower);
  check_sample_ids(samples, texts);

  const auto batch = static_cast<std::size_t>(config.batch_size);
  auto full_loss = [&] {
    double sum = 0.0;
    for (std::size_t i = 0; i < samples.size(); i += batch) {
      const auto chunk = samples.subspan(i, std::min(batch, samples.size() - i));
      sum += static_cast<double>(batch_loss<float>(chunk, texts, model, nullptr)) * static_cast<double>(chunk.size());
    }
    return sum / static_cast<double>(samples.size());
  };

  EpochStats initial{0, full_loss()};
  if (on_epoch) on_epoch(model, initial);
  result.trace.push_back(initial);

  AdamOptimizer adam(model, config);
  ModelParams<float> grads = ModelParams<float>::zeros(model.config, model.vocab);
  std::vector<std::size_t> order(samples.size());
  const std::size_t batches_per_epoch = (samples.size() + batch - 1) / batch;
  const double total_steps = static_cast<double>(batches_per_epoch) * config.epochs;
  std::vector<TrainingSample> chunk;
  chunk.reserve(batch);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, 0x5eed0000ULL + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t i = 0; i < order.size(); i += batch) {
      chunk.clear();
      for (std::size_t j = i; j < std::min(order.size(), i + batch); ++j) chunk.push_back(samples[order[j]]);
      grads.query.set_zero();
      grads.keyword.set_zero();
      float loss = 0.0f;
      try {
        loss = batch_loss<float>(chunk, texts, model, &grads);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(n_batches) + ": " + e.what());
      }
      if (config.schedule == LrSchedule::kLinear) {
        adam.set_learning_rate(config.learning_rate * (1.0 - static_cast<double>(adam.steps()) / total_steps));
      }
      adam.step(model, grads);
      loss_sum += loss;
      ++n_batches;
    }
    EpochStats stats{epoch, loss_sum / static_cast<double>(n_batches)};
    if (!std::isfinite(stats.train_loss)) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch));
    }
    if (on_epoch) on_epoch(model, stats);
    result.trace.push_back(stats);
  }
  return result;
}

template float contrastive_loss<float>(const Vector<float>&, std::span<const Vector<float>>,
                                       std::span<const Vector<float>>, float);
template double contrastive_loss<double>(const Vector<double>&, std::span<const Vector<double>>,
                                         std::span<const Vector<double>>, double);
template float batch_loss<float>(std::span<const TrainingSample>, const TokenizedCorpus&, const ModelParams<float>&,
                                 ModelParams<float>*);
template double batch_loss<double>(std::span<const TrainingSample>, const TokenizedCorpus&,
                                   const ModelParams<double>&, ModelParams<double>*);

}  // namespace rqrf
