#include "rqrf/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "rqrf/error.hpp"
#include "rqrf/io.hpp"
#include "rqrf/random.hpp"
#include "vec_util.hpp"

namespace rqrf {

namespace {

std::vector<double> mean_vector(std::span<const WordId> words, const WordVecTable& wv) {
  if (words.empty()) throw InvalidArgument("relevance: text has no words");
  std::vector<double> m(static_cast<std::size_t>(wv.dim()), 0.0);
  for (WordId w : words) {
    if (w.index() >= wv.size()) throw InvalidArgument("relevance: word outside the pretrained table");
    const auto v = wv[w];
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += v[i];
  }
  return m;
}

std::string csv(const std::vector<KeywordId>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ids[i].value);
  }
  return out;
}

std::vector<KeywordId> parse_csv(std::string_view text) {
  std::vector<KeywordId> out;
  if (text.empty()) return out;
  for (auto part : io::split(text, ',')) {
    out.emplace_back(static_cast<std::uint32_t>(io::parse_u64(part, "keyword id")));
  }
  return out;
}

// Everything draw_samples needs for one clicked (query, ad) pair.
struct PairTables {
  std::vector<KeywordId> bought;
  DiscreteSampler positive;
  std::vector<KeywordId> pool;
  std::vector<double> negative_weight;  // 1 - p~(b) over pool
};

}  // namespace

std::string serialize_samples(std::span<const TrainingSample> samples) {
  std::string out;
  for (const TrainingSample& s : samples) {
    out += std::to_string(s.query.value);
    out += "\tpos:";
    out += csv(s.positives);
    out += "\tneg:";
    out += csv(s.negatives);
    out += '\n';
  }
  return out;
}

std::vector<TrainingSample> deserialize_samples(std::string_view text) {
  std::vector<TrainingSample> out;
  for (auto line : io::split(text, '\n')) {
    if (line.empty()) continue;
    auto f = io::split(line, '\t');
    if (f.size() != 3 || !f[1].starts_with("pos:") || !f[2].starts_with("neg:")) {
      throw ArtifactError("samples: malformed record");
    }
    TrainingSample s;
    s.query = QueryId(static_cast<std::uint32_t>(io::parse_u64(f[0], "query_id")));
    s.positives = parse_csv(f[1].substr(4));
    s.negatives = parse_csv(f[2].substr(4));
    if (s.positives.empty()) throw ArtifactError("samples: record without positives");
    out.push_back(std::move(s));
  }
  return out;
}

double relevance(std::span<const WordId> keyword_words, std::span<const WordId> query_words, const WordVecTable& wv) {
  const auto kb = mean_vector(keyword_words, wv);
  const auto kq = mean_vector(query_words, wv);
  return std::max(0.0, detail::cosine(kb, kq));
}

double relevance(KeywordId b, QueryId q, const Universe& universe, const WordVecTable& wv) {
  return relevance(universe.keyword(b).words, universe.query(q).words, wv);
}

double rpm_score(double price, double relevance, std::uint64_t n_bidders) {
  if (n_bidders < 1) throw InvalidArgument("score: keyword has no bidders");
  return price * relevance / std::log(static_cast<double>(n_bidders) + 1.0);
}

double score(KeywordId b, QueryId q, AdId a, const Universe& universe, const LogAggregates& agg,
             const WordVecTable& wv) {
  const Bid* bid = universe.ad(a).find_bid(b);
  if (!bid) throw InvalidArgument("score: keyword " + std::to_string(b.value) + " is not bought by ad " + std::to_string(a.value));
  return rpm_score(bid->price, relevance(b, q, universe, wv), agg.bidders.at(b.index()));
}

std::vector<double> normalize_scores(std::span<const double> scores) {
  double total = 0.0;
  for (double s : scores) total += s;
  std::vector<double> p(scores.size());
  if (!(total > 0.0)) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(scores.size()));
    return p;
  }
  for (std::size_t i = 0; i < scores.size(); ++i) p[i] = scores[i] / total;
  return p;
}

KeywordDistribution sample_distribution(QueryId q, AdId a, const Universe& universe, const LogAggregates& agg,
                                        const WordVecTable& wv) {
  const Ad& ad = universe.ad(a);
  if (ad.bids.empty()) throw InvalidArgument("sample_distribution: ad buys no keywords");
  std::vector<double> scores;
  scores.reserve(ad.bids.size());
  for (const Bid& bid : ad.bids) scores.push_back(score(bid.keyword, q, a, universe, agg, wv));
  const auto p = normalize_scores(scores);
  KeywordDistribution out;
  out.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out.emplace_back(ad.bids[i].keyword, p[i]);
  return out;
}

std::vector<TrainingSample> draw_samples(const ClickLog& log, const Universe& universe, const WordVecTable& wv,
                                         int neg_ratio, std::uint64_t seed) {
  if (log.records.empty()) throw InvalidArgument("draw_samples: empty click log");
  if (neg_ratio < 0) throw InvalidArgument("draw_samples: neg_ratio must be >= 0");
  const LogAggregates agg = aggregate(log, universe);

  std::map<std::pair<QueryId, AdId>, PairTables> cache;
  auto tables_for = [&](QueryId q, AdId a) -> const PairTables& {
    auto it = cache.find({q, a});
    if (it != cache.end()) return it->second;
    const CategoryId cat = universe.query(q).category;
    if (universe.ad(a).category != cat) throw ArtifactError("click log shows an ad outside the query's category");
    const auto& pool = universe.keywords_in(cat);
    if (pool.size() < static_cast<std::size_t>(neg_ratio) + 1) {
      throw InvalidArgument("draw_samples: category " + std::to_string(cat.value) + " has " +
                            std::to_string(pool.size()) + " keywords, need neg_ratio + 1");
    }
    PairTables t;
    const auto dist = sample_distribution(q, a, universe, agg, wv);
    std::vector<double> p;
    for (const auto& [k, prob] : dist) {
      t.bought.push_back(k);
      p.push_back(prob);
    }
    t.positive = DiscreteSampler(p);

    // p~ over the whole category: score for keywords the ad buys, relevance alone elsewhere.
    std::vector<double> extended(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const KeywordId k = pool[i];
      extended[i] = universe.ad(a).find_bid(k) ? score(k, q, a, universe, agg, wv) : relevance(k, q, universe, wv);
    }
    const auto p_ext = normalize_scores(extended);
    t.pool = pool;
    t.negative_weight.resize(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) t.negative_weight[i] = 1.0 - p_ext[i];
    return cache.emplace(std::make_pair(q, a), std::move(t)).first->second;
  };

  Rng rng(seed);
  std::vector<TrainingSample> samples;
  for (const ClickRecord& r : log.records) {
    if (!r.clicked) continue;
    const PairTables& t = tables_for(r.query, r.ad);
    TrainingSample s;
    s.query = r.query;
    const KeywordId positive = t.bought[t.positive(rng)];
    s.positives.push_back(positive);

    std::vector<double> weights = t.negative_weight;
    for (std::size_t i = 0; i < t.pool.size(); ++i) {
      if (t.pool[i] == positive) weights[i] = 0.0;
    }
    for (int n = 0; n < neg_ratio; ++n) {
      if (std::all_of(weights.begin(), weights.end(), [](double w) { return w <= 0.0; })) {
        // Only reachable when the remaining weights underflow; spread uniformly over what is left.
        for (std::size_t i = 0; i < t.pool.size(); ++i) {
          if (t.pool[i] != positive &&
              std::find(s.negatives.begin(), s.negatives.end(), t.pool[i]) == s.negatives.end()) {
            weights[i] = 1.0;
          }
        }
      }
      const std::size_t i = rng.categorical(weights);
      s.negatives.push_back(t.pool[i]);
      weights[i] = 0.0;
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace rqrf
