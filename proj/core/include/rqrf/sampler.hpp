#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rqrf/corpus.hpp"

namespace rqrf {

/// One labelled training record: a query with positive and negative bid keywords.
struct TrainingSample {
  QueryId query;
  std::vector<KeywordId> positives;
  std::vector<KeywordId> negatives;

  friend bool operator==(const TrainingSample&, const TrainingSample&) = default;
};

std::string serialize_samples(std::span<const TrainingSample> samples);
std::vector<TrainingSample> deserialize_samples(std::string_view text);

/// Cosine of the mean pretrained vectors of two word sequences, clamped below at zero.
double relevance(std::span<const WordId> keyword_words, std::span<const WordId> query_words, const WordVecTable& wv);
double relevance(KeywordId b, QueryId q, const Universe& universe, const WordVecTable& wv);

/// price * relevance / ln(n_b + 1).
double rpm_score(double price, double relevance, std::uint64_t n_bidders);

/// score(b|q,a) for b in B(a); throws InvalidArgument otherwise.
double score(KeywordId b, QueryId q, AdId a, const Universe& universe, const LogAggregates& agg,
             const WordVecTable& wv);

using KeywordDistribution = std::vector<std::pair<KeywordId, double>>;

/// p(b|a,q) over B(a) in keyword-id order; uniform when every score is zero.
KeywordDistribution sample_distribution(QueryId q, AdId a, const Universe& universe, const LogAggregates& agg,
                                        const WordVecTable& wv);

/// Normalizes raw non-negative scores; uniform fallback when they sum to zero.
std::vector<double> normalize_scores(std::span<const double> scores);

/// One positive per clicked record drawn from p(b|a,q), plus `neg_ratio` distinct negatives
/// from the query's category pool drawn with weight 1 - p~(b).
std::vector<TrainingSample> draw_samples(const ClickLog& log, const Universe& universe, const WordVecTable& wv,
                                         int neg_ratio, std::uint64_t seed);

}  // namespace rqrf
