#pragma once

// Hand-built marketplaces for tests that need exact control over prices, clicks and topics.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "rqrf/corpus.hpp"
#include "rqrf/model.hpp"

namespace rqrf::test {

inline std::vector<double> axis(int dim, int i, double sign = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(dim), 0.0);
  v[static_cast<std::size_t>(i)] = sign;
  return v;
}

inline std::vector<double> unit(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

/// Builder for a one-category universe. Every keyword and query gets its own word.
struct MarketBuilder {
  Universe u;

  explicit MarketBuilder(int topic_dim = 4, double kappa = 4.0) {
    u.n_categories = 1;
    u.topic_dim = topic_dim;
    u.click_kappa = kappa;
  }

  WordId word(const std::string& surface, std::vector<double> topic) {
    u.words.push_back({surface, CategoryId(0), unit(std::move(topic))});
    return WordId(u.words.size() - 1);
  }

  KeywordId keyword(const std::string& surface, std::vector<double> topic) {
    const WordId w = word(surface, std::move(topic));
    u.keywords.push_back({{w}, CategoryId(0)});
    return KeywordId(u.keywords.size() - 1);
  }

  QueryId query(const std::string& surface, std::vector<double> topic, double traffic = 1.0, bool held_out = false) {
    const WordId w = word(surface, std::move(topic));
    u.queries.push_back({{w}, CategoryId(0), traffic, held_out, {}});
    return QueryId(u.queries.size() - 1);
  }

  AdId ad(std::vector<std::pair<KeywordId, double>> bids, std::vector<double> topic) {
    Ad a;
    a.category = CategoryId(0);
    a.topic = unit(std::move(topic));
    for (auto [k, p] : bids) a.bids.push_back({k, p});
    std::sort(a.bids.begin(), a.bids.end(), [](const Bid& x, const Bid& y) { return x.keyword < y.keyword; });
    u.ads.push_back(std::move(a));
    return AdId(u.ads.size() - 1);
  }

  Universe build() {
    u.reindex();
    u.check_invariants();
    return u;
  }
};

/// Appends `n` records of (q, a) with the given click flag.
inline void add_records(ClickLog& log, QueryId q, AdId a, int n, bool clicked) {
  for (int i = 0; i < n; ++i) {
    log.records.push_back({static_cast<std::uint64_t>(log.records.size()), q, a, clicked});
  }
}

/// A small generated marketplace that runs the full pipeline in well under a second.
inline GenConfig small_gen_config() {
  GenConfig g;
  g.n_categories = 2;
  g.words_per_category = 20;
  g.subtopics_per_category = 3;
  g.keywords_per_category = 15;
  g.ads_per_category = 5;
  g.queries_per_category = 20;
  g.topic_dim = 8;
  g.max_keywords_per_ad = 5;
  return g;
}

inline ModelConfig tiny_model_config() {
  ModelConfig m;
  m.tower.t_max = 4;
  m.tower.c_max = 5;
  m.tower.word_dim = 6;
  m.tower.char_dim = 4;
  m.tower.hidden_dim = 8;
  m.tower.out_dim = 8;
  m.tower.n_blocks = 2;
  return m;
}

}  // namespace rqrf::test
