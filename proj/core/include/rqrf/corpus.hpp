#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rqrf/ids.hpp"

namespace rqrf {

/// Knobs of the synthetic marketplace. Defaults are the documented reference values.
struct GenConfig {
  int n_categories = 2;
  int words_per_category = 60;
  int subtopics_per_category = 8;
  int keywords_per_category = 100;
  int ads_per_category = 25;
  int queries_per_category = 150;
  int topic_dim = 16;

  double zipf_s = 1.2;
  double price_mu = 0.0;
  double price_sigma = 0.5;
  double click_kappa = 4.0;

  /// Errors of the incumbent ad server's propensity estimate, in cosine units: a fixed bias per
  /// (query, ad) and fresh noise per request. Both zero make the logging policy pick the exact
  /// eCPM-max ad of the category.
  double legacy_bias = 0.6;
  double legacy_noise = 0.3;

  /// Share of queries held out of training logs (always the lowest-traffic ranks).
  double tail_fraction = 0.2;

  int min_keywords_per_ad = 3;
  int max_keywords_per_ad = 8;
  int min_keyword_words = 1;
  int max_keyword_words = 3;
  int min_query_words = 2;
  int max_query_words = 5;

  double subtopic_spread = 1.0;
  double word_spread = 0.6;
  double ad_spread = 0.4;
  /// Probability that a query word is swapped for a near neighbour of the anchor keyword.
  double paraphrase_rate = 0.35;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

struct Word {
  std::string surface;
  CategoryId category;
  std::vector<double> topic;
};

struct Keyword {
  std::vector<WordId> words;
  CategoryId category;
};

struct Bid {
  KeywordId keyword;
  double price = 0.0;
};

struct Ad {
  CategoryId category;
  std::vector<Bid> bids;  // B(a), sorted by keyword id
  std::vector<double> topic;

  const Bid* find_bid(KeywordId keyword) const;
  double max_price() const;
};

struct Query {
  std::vector<WordId> words;
  CategoryId category;
  double traffic = 0.0;
  bool held_out = false;
  std::vector<double> topic;  // normalized mean of word topics; derived
};

/// The synthetic marketplace: categories, vocabulary with latent topics, keywords, ads, queries.
class Universe {
 public:
  int n_categories = 0;
  int topic_dim = 0;
  double click_kappa = 0.0;
  double legacy_bias = 0.0;
  double legacy_noise = 0.0;

  std::vector<Word> words;
  std::vector<Keyword> keywords;
  std::vector<Ad> ads;
  std::vector<Query> queries;

  const Word& word(WordId id) const { return words.at(id.index()); }
  const Keyword& keyword(KeywordId id) const { return keywords.at(id.index()); }
  const Ad& ad(AdId id) const { return ads.at(id.index()); }
  const Query& query(QueryId id) const { return queries.at(id.index()); }

  std::string keyword_text(KeywordId id) const;
  std::string query_text(QueryId id) const;

  const std::vector<KeywordId>& keywords_in(CategoryId c) const { return keywords_by_category_.at(c.index()); }
  const std::vector<AdId>& ads_in(CategoryId c) const { return ads_by_category_.at(c.index()); }
  const std::vector<AdId>& bidders(KeywordId b) const { return bidders_.at(b.index()); }

  /// n_b: number of distinct ads bidding keyword b.
  std::size_t bidder_count(KeywordId b) const { return bidders(b).size(); }

  /// Ground-truth click propensity logistic(kappa * cos(topic(q), topic(a))).
  double propensity(QueryId q, AdId a) const;

  /// Recomputes derived indices and query topics; call after mutating the tables.
  void reindex();

  /// Checks every structural invariant; throws GenerationError on violation.
  void check_invariants() const;

  std::string serialize() const;
  static Universe deserialize(std::string_view text);

 private:
  std::vector<std::vector<KeywordId>> keywords_by_category_;
  std::vector<std::vector<AdId>> ads_by_category_;
  std::vector<std::vector<AdId>> bidders_;
};

Universe generate_universe(const GenConfig& config, std::uint64_t seed);

struct ClickRecord {
  std::uint64_t request_id = 0;
  QueryId query;
  AdId ad;
  bool clicked = false;

  friend bool operator==(const ClickRecord&, const ClickRecord&) = default;
};

struct ClickLog {
  std::vector<ClickRecord> records;

  std::string serialize() const;
  static ClickLog deserialize(std::string_view text);
};

/// Counts derived from a click log: request(q), click(a,q), co-occurrence(a,q), and n_b.
struct LogAggregates {
  std::vector<std::uint64_t> requests;                      // by query
  std::map<std::pair<AdId, QueryId>, std::uint64_t> clicks;  // (a, q) -> clicks
  std::map<std::pair<AdId, QueryId>, std::uint64_t> shows;   // (a, q) -> impressions
  std::vector<std::uint64_t> bidders;                        // n_b by keyword

  std::uint64_t request_count(QueryId q) const { return requests.at(q.index()); }
  std::uint64_t click_count(AdId a, QueryId q) const;
  /// Ads with at least one click for q, ascending id.
  std::vector<AdId> clicked_ads(QueryId q) const;
};

LogAggregates aggregate(const ClickLog& log, const Universe& universe);

/// Simulates `n_requests` single-impression requests. Held-out queries are excluded unless
/// `include_held_out` is set.
ClickLog simulate_click_log(const Universe& universe, std::uint64_t n_requests, std::uint64_t seed,
                            bool include_held_out = false);

/// Unit-norm "pretrained" word vectors: renormalized latent topic plus Gaussian noise.
class WordVecTable {
 public:
  WordVecTable() = default;
  WordVecTable(int dim, std::vector<double> data) : dim_(dim), data_(std::move(data)) {}

  int dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / static_cast<std::size_t>(dim_); }
  std::span<const double> operator[](WordId w) const {
    return {data_.data() + w.index() * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }

 private:
  int dim_ = 0;
  std::vector<double> data_;
};

WordVecTable pretrained_word_vectors(const Universe& universe, double noise_sigma, std::uint64_t seed);

struct HeadTailSplit {
  std::vector<QueryId> head;  // descending traffic
  std::vector<QueryId> tail;  // ascending id
};

/// Head = shortest prefix by descending traffic (ties: ascending id) whose cumulative traffic
/// reaches fraction * total.
HeadTailSplit head_tail_split(const std::map<QueryId, double>& traffic, double fraction);

}  // namespace rqrf
