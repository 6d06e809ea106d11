#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rqrf/encoder.hpp"
#include "rqrf/tower.hpp"

namespace rqrf {

class Universe;

/// Architecture shared by both towers plus the loss temperature.
struct ModelConfig {
  TowerConfig tower;
  AblationFlags flags;
  double gamma = 10.0;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Query tower, keyword tower and the surface vocabulary they share.
template <class Real>
struct ModelParams {
  ModelConfig config;
  Vocabulary vocab;
  TowerParams<Real> query;
  TowerParams<Real> keyword;

  /// Zero tensors shaped for `vocab`; config.tower's vocab sizes are filled in.
  static ModelParams zeros(ModelConfig config, Vocabulary vocab);

  std::size_t parameter_count() const { return query.parameter_count() + keyword.parameter_count(); }

  template <class Visitor>
  void visit(Visitor&& f) {
    query.visit([&](const std::string& n, Real* d, const std::vector<std::uint32_t>& dims) { f("query." + n, d, dims); });
    keyword.visit([&](const std::string& n, Real* d, const std::vector<std::uint32_t>& dims) { f("keyword." + n, d, dims); });
  }
  template <class Visitor>
  void visit(Visitor&& f) const {
    query.visit([&](const std::string& n, const Real* d, const std::vector<std::uint32_t>& dims) { f("query." + n, d, dims); });
    keyword.visit([&](const std::string& n, const Real* d, const std::vector<std::uint32_t>& dims) { f("keyword." + n, d, dims); });
  }
};

template <class To, class From>
ModelParams<To> cast_model(const ModelParams<From>& m) {
  ModelParams<To> out;
  out.config = m.config;
  out.vocab = m.vocab;
  out.query = cast_params<To>(m.query);
  out.keyword = cast_params<To>(m.keyword);
  return out;
}

/// Glorot-uniform weights r = sqrt(6 / (rows + cols)), zero biases, zero PAD rows.
template <class Real>
void initialize(ModelParams<Real>& model, std::uint64_t seed);

/// A trained model as persisted on disk.
struct Checkpoint {
  ModelParams<float> model;
  std::uint64_t universe_fingerprint = 0;
};

std::uint64_t universe_fingerprint(const Universe& universe);

/// Binary layout: "RQRF", u32 version, u32 tensor count, tensors (name, rank, dims, f32 payload),
/// vocabulary, then a key=value config echo. All integers and floats little-endian.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::string_view bytes);

/// Pre-tokenized texts of every query and keyword in a universe.
struct TokenizedCorpus {
  std::vector<TokenizedText> queries;
  std::vector<TokenizedText> keywords;

  static TokenizedCorpus build(const Universe& universe, const Vocabulary& vocab, const TowerConfig& tower);
};

}  // namespace rqrf
