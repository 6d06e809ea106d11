#include "rqrf/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "rqrf/error.hpp"
#include "rqrf/io.hpp"
#include "rqrf/random.hpp"
#include "vec_util.hpp"

namespace rqrf {

namespace {

constexpr std::string_view kUniverseMagic = "rqrf-universe";
constexpr int kUniverseVersion = 1;

// Concentration of word choice around an anchor topic.
constexpr double kTopicSharpness = 6.0;

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw ConfigError(field, what);
}

std::vector<double> gaussian_vector(Rng& rng, int dim, double scale) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  const double s = scale / std::sqrt(static_cast<double>(dim));
  for (double& x : v) x = s * rng.normal();
  return v;
}

std::vector<double> unit_around(Rng& rng, std::span<const double> center, double spread) {
  std::vector<double> v = gaussian_vector(rng, static_cast<int>(center.size()), spread);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += center[i];
  detail::normalize(v);
  return v;
}

std::vector<double> mean_topic(const std::vector<Word>& words, const std::vector<WordId>& ids, int dim) {
  std::vector<double> m(static_cast<std::size_t>(dim), 0.0);
  for (WordId w : ids) {
    const auto& t = words[w.index()].topic;
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += t[i];
  }
  detail::normalize(m);
  return m;
}

std::string join_words(const std::vector<Word>& words, const std::vector<WordId>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += words[ids[i].index()].surface;
  }
  return out;
}

// Weighted draw of `count` distinct items from `pool`.
template <class T>
std::vector<T> draw_distinct(Rng& rng, const std::vector<T>& pool, std::vector<double> weights, std::size_t count) {
  std::vector<T> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count && k < pool.size(); ++k) {
    const std::size_t i = rng.categorical(weights);
    out.push_back(pool[i]);
    weights[i] = 0.0;
    // categorical() falls back to uniform when all weights vanish; keep chosen ones excluded.
    if (std::all_of(weights.begin(), weights.end(), [](double w) { return w <= 0.0; })) {
      for (std::size_t j = 0; j < pool.size(); ++j) {
        if (std::find(out.begin(), out.end(), pool[j]) == out.end()) weights[j] = 1e-300;
      }
    }
  }
  return out;
}

std::string make_syllable(Rng& rng) {
  static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  std::string s;
  s += kConsonants[rng.index(kConsonants.size())];
  s += kVowels[rng.index(kVowels.size())];
  return s;
}

std::string ids_csv(const std::vector<WordId>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ids[i].value);
  }
  return out;
}

std::vector<WordId> parse_ids_csv(std::string_view text) {
  std::vector<WordId> out;
  for (auto part : io::split(text, ',')) out.emplace_back(static_cast<std::uint32_t>(io::parse_u64(part, "word id")));
  return out;
}

}  // namespace

void GenConfig::validate() const {
  require(n_categories >= 1, "n_categories", "must be >= 1");
  require(words_per_category >= 10, "words_per_category", "must be >= 10");
  require(subtopics_per_category >= 1, "subtopics_per_category", "must be >= 1");
  require(subtopics_per_category <= words_per_category, "subtopics_per_category", "must not exceed words_per_category");
  require(keywords_per_category >= 5, "keywords_per_category", "must be >= 5");
  require(ads_per_category >= 2, "ads_per_category", "must be >= 2");
  require(queries_per_category >= 5, "queries_per_category", "must be >= 5");
  require(topic_dim >= 2, "topic_dim", "must be >= 2");
  require(zipf_s > 0.0, "zipf_s", "must be > 0");
  require(std::isfinite(price_mu), "price_mu", "must be finite");
  require(price_sigma > 0.0, "price_sigma", "must be > 0");
  require(click_kappa >= 0.0, "click_kappa", "must be >= 0");
  require(legacy_bias >= 0.0, "legacy_bias", "must be >= 0");
  require(legacy_noise >= 0.0, "legacy_noise", "must be >= 0");
  require(tail_fraction >= 0.0 && tail_fraction < 1.0, "tail_fraction", "must be in [0, 1)");
  require(min_keywords_per_ad >= 1, "min_keywords_per_ad", "must be >= 1");
  require(max_keywords_per_ad >= min_keywords_per_ad, "max_keywords_per_ad", "must be >= min_keywords_per_ad");
  require(max_keywords_per_ad <= keywords_per_category, "max_keywords_per_ad", "must not exceed keywords_per_category");
  require(min_keyword_words >= 1, "min_keyword_words", "must be >= 1");
  require(max_keyword_words >= min_keyword_words, "max_keyword_words", "must be >= min_keyword_words");
  require(max_keyword_words <= words_per_category, "max_keyword_words", "must not exceed words_per_category");
  require(min_query_words >= 1, "min_query_words", "must be >= 1");
  require(max_query_words >= min_query_words, "max_query_words", "must be >= min_query_words");
  require(max_query_words <= words_per_category, "max_query_words", "must not exceed words_per_category");
  require(subtopic_spread >= 0.0, "subtopic_spread", "must be >= 0");
  require(word_spread >= 0.0, "word_spread", "must be >= 0");
  require(ad_spread >= 0.0, "ad_spread", "must be >= 0");
  require(paraphrase_rate >= 0.0 && paraphrase_rate <= 1.0, "paraphrase_rate", "must be in [0, 1]");
}

const Bid* Ad::find_bid(KeywordId keyword) const {
  auto it = std::lower_bound(bids.begin(), bids.end(), keyword,
                             [](const Bid& b, KeywordId k) { return b.keyword < k; });
  if (it == bids.end() || it->keyword != keyword) return nullptr;
  return &*it;
}

double Ad::max_price() const {
  double m = 0.0;
  for (const Bid& b : bids) m = std::max(m, b.price);
  return m;
}

std::string Universe::keyword_text(KeywordId id) const { return join_words(words, keyword(id).words); }

std::string Universe::query_text(QueryId id) const { return join_words(words, query(id).words); }

double Universe::propensity(QueryId q, AdId a) const {
  return detail::logistic(click_kappa * detail::cosine(query(q).topic, ad(a).topic));
}

void Universe::reindex() {
  keywords_by_category_.assign(static_cast<std::size_t>(n_categories), {});
  ads_by_category_.assign(static_cast<std::size_t>(n_categories), {});
  bidders_.assign(keywords.size(), {});
  for (std::size_t k = 0; k < keywords.size(); ++k) {
    keywords_by_category_.at(keywords[k].category.index()).emplace_back(k);
  }
  for (std::size_t a = 0; a < ads.size(); ++a) {
    ads_by_category_.at(ads[a].category.index()).emplace_back(a);
    for (const Bid& b : ads[a].bids) bidders_.at(b.keyword.index()).emplace_back(a);
  }
  for (Query& q : queries) q.topic = mean_topic(words, q.words, topic_dim);
}

void Universe::check_invariants() const {
  auto fail = [](const std::string& what) { throw GenerationError("universe invariant violated: " + what); };
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (words[w].topic.size() != static_cast<std::size_t>(topic_dim)) fail("word topic dimension");
    if (std::abs(detail::norm(words[w].topic) - 1.0) > 1e-9) fail("word topic not unit norm");
  }
  for (std::size_t k = 0; k < keywords.size(); ++k) {
    if (keywords[k].words.empty()) fail("empty keyword");
    for (WordId w : keywords[k].words) {
      if (w.index() >= words.size()) fail("keyword word id out of range");
      if (words[w.index()].category != keywords[k].category) fail("keyword word from another category");
    }
  }
  for (std::size_t a = 0; a < ads.size(); ++a) {
    const Ad& ad = ads[a];
    if (ad.bids.empty()) fail("ad " + std::to_string(a) + " buys no keyword");
    if (std::abs(detail::norm(ad.topic) - 1.0) > 1e-9) fail("ad topic not unit norm");
    for (std::size_t i = 0; i < ad.bids.size(); ++i) {
      const Bid& b = ad.bids[i];
      if (b.keyword.index() >= keywords.size()) fail("bid keyword out of range");
      if (keywords[b.keyword.index()].category != ad.category) fail("ad buys keyword outside its category");
      if (!(b.price > 0.0) || !std::isfinite(b.price)) fail("non-positive price");
      if (i > 0 && !(ad.bids[i - 1].keyword < b.keyword)) fail("bids not sorted/unique");
    }
  }
  for (const Query& q : queries) {
    if (q.words.empty()) fail("empty query");
    if (!(q.traffic > 0.0)) fail("non-positive traffic weight");
    for (WordId w : q.words) {
      if (w.index() >= words.size()) fail("query word id out of range");
    }
  }
  for (int c = 0; c < n_categories; ++c) {
    if (ads_by_category_.at(static_cast<std::size_t>(c)).empty()) fail("category " + std::to_string(c) + " has no ads");
  }
}

Universe generate_universe(const GenConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const int g = config.topic_dim;
  const int n_sub = config.subtopics_per_category;

  Universe u;
  u.n_categories = config.n_categories;
  u.topic_dim = g;
  u.click_kappa = config.click_kappa;
  u.legacy_bias = config.legacy_bias;
  u.legacy_noise = config.legacy_noise;

  std::unordered_set<std::string> used_surfaces;
  std::unordered_set<std::string> used_stems;
  std::vector<std::vector<std::vector<double>>> subtopics(static_cast<std::size_t>(config.n_categories));
  std::vector<std::vector<WordId>> category_words(static_cast<std::size_t>(config.n_categories));

  for (int c = 0; c < config.n_categories; ++c) {
    std::vector<double> center = gaussian_vector(rng, g, 1.0);
    detail::normalize(center);
    std::vector<std::string> stems;
    for (int s = 0; s < n_sub; ++s) {
      subtopics[c].push_back(unit_around(rng, center, config.subtopic_spread));
      std::string stem;
      for (int attempt = 0;; ++attempt) {
        if (attempt > 10000) throw GenerationError("cannot draw a unique word stem");
        stem = make_syllable(rng) + make_syllable(rng);
        if (used_stems.insert(stem).second) break;
      }
      stems.push_back(stem);
    }
    for (int i = 0; i < config.words_per_category; ++i) {
      const int s = i % n_sub;
      Word w;
      w.category = CategoryId(c);
      w.topic = unit_around(rng, subtopics[c][static_cast<std::size_t>(s)], config.word_spread);
      for (int attempt = 0;; ++attempt) {
        if (attempt > 10000) throw GenerationError("cannot draw a unique word surface");
        std::string surface = stems[static_cast<std::size_t>(s)] + make_syllable(rng);
        if (attempt >= 50) surface += make_syllable(rng);
        if (used_surfaces.insert(surface).second) {
          w.surface = std::move(surface);
          break;
        }
      }
      category_words[c].emplace_back(u.words.size());
      u.words.push_back(std::move(w));
    }
  }

  auto weights_towards = [&](const std::vector<WordId>& pool, std::span<const double> anchor) {
    std::vector<double> weights(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
      weights[i] = std::exp(kTopicSharpness * detail::dot(u.words[pool[i].index()].topic, anchor));
    }
    return weights;
  };

  std::unordered_set<std::string> keyword_texts;
  std::vector<std::vector<KeywordId>> category_keywords(static_cast<std::size_t>(config.n_categories));
  for (int c = 0; c < config.n_categories; ++c) {
    const auto& pool = category_words[c];
    for (int k = 0; k < config.keywords_per_category; ++k) {
      Keyword kw;
      kw.category = CategoryId(c);
      for (int attempt = 0;; ++attempt) {
        if (attempt > 10000) throw GenerationError("cannot draw a unique keyword; enlarge words_per_category");
        const auto& anchor = subtopics[c][rng.index(subtopics[c].size())];
        const int len = rng.between(config.min_keyword_words, config.max_keyword_words);
        kw.words = draw_distinct(rng, pool, weights_towards(pool, anchor), static_cast<std::size_t>(len));
        if (keyword_texts.insert(join_words(u.words, kw.words)).second) break;
      }
      category_keywords[c].emplace_back(u.keywords.size());
      u.keywords.push_back(std::move(kw));
    }
  }

  for (int c = 0; c < config.n_categories; ++c) {
    const auto& kw_pool = category_keywords[c];
    std::vector<std::vector<double>> kw_topics;
    for (KeywordId k : kw_pool) kw_topics.push_back(mean_topic(u.words, u.keywords[k.index()].words, g));
    for (int a = 0; a < config.ads_per_category; ++a) {
      Ad ad;
      ad.category = CategoryId(c);
      ad.topic = unit_around(rng, subtopics[c][rng.index(subtopics[c].size())], config.ad_spread);
      std::vector<double> weights(kw_pool.size());
      for (std::size_t i = 0; i < kw_pool.size(); ++i) {
        weights[i] = std::exp(kTopicSharpness * detail::dot(kw_topics[i], ad.topic));
      }
      const int n_bids = rng.between(config.min_keywords_per_ad, config.max_keywords_per_ad);
      for (KeywordId k : draw_distinct(rng, kw_pool, weights, static_cast<std::size_t>(n_bids))) {
        ad.bids.push_back({k, std::exp(config.price_mu + config.price_sigma * rng.normal())});
      }
      std::sort(ad.bids.begin(), ad.bids.end(), [](const Bid& x, const Bid& y) { return x.keyword < y.keyword; });
      u.ads.push_back(std::move(ad));
    }
  }

  std::unordered_set<std::string> query_texts;
  for (int c = 0; c < config.n_categories; ++c) {
    const auto& pool = category_words[c];
    const auto& kw_pool = category_keywords[c];
    for (int i = 0; i < config.queries_per_category; ++i) {
      Query q;
      q.category = CategoryId(c);
      for (int attempt = 0;; ++attempt) {
        if (attempt > 10000) throw GenerationError("cannot draw a unique query; enlarge words_per_category");
        const Keyword& anchor = u.keywords[kw_pool[rng.index(kw_pool.size())].index()];
        const std::vector<double> anchor_topic = mean_topic(u.words, anchor.words, g);
        const auto len = static_cast<std::size_t>(
            std::max<int>(rng.between(config.min_query_words, config.max_query_words),
                          static_cast<int>(anchor.words.size())));
        std::vector<WordId> words;
        for (WordId w : anchor.words) {
          if (rng.bernoulli(config.paraphrase_rate)) {
            std::vector<double> weights = weights_towards(pool, u.words[w.index()].topic);
            for (std::size_t j = 0; j < pool.size(); ++j) {
              if (pool[j] == w || std::find(words.begin(), words.end(), pool[j]) != words.end()) weights[j] = 0.0;
            }
            words.push_back(pool[rng.categorical(weights)]);
          } else if (std::find(words.begin(), words.end(), w) == words.end()) {
            words.push_back(w);
          }
        }
        std::vector<double> weights = weights_towards(pool, anchor_topic);
        for (std::size_t j = 0; j < pool.size(); ++j) {
          if (std::find(words.begin(), words.end(), pool[j]) != words.end()) weights[j] = 0.0;
        }
        if (words.size() < len) {
          for (WordId w : draw_distinct(rng, pool, weights, len - words.size())) words.push_back(w);
        }
        rng.shuffle(words);
        const std::string text = join_words(u.words, words);
        if (keyword_texts.count(text) || !query_texts.insert(text).second) continue;
        q.words = std::move(words);
        break;
      }
      u.queries.push_back(std::move(q));
    }
  }

  // Zipf traffic over a random global ranking; the lowest-traffic ranks are held out.
  const std::size_t n_q = u.queries.size();
  std::vector<std::size_t> order(n_q);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  double total = 0.0;
  for (std::size_t r = 0; r < n_q; ++r) total += std::pow(static_cast<double>(r + 1), -config.zipf_s);
  const auto n_held = static_cast<std::size_t>(std::llround(config.tail_fraction * static_cast<double>(n_q)));
  for (std::size_t r = 0; r < n_q; ++r) {
    Query& q = u.queries[order[r]];
    q.traffic = std::pow(static_cast<double>(r + 1), -config.zipf_s) / total;
    q.held_out = r >= n_q - n_held;
  }

  u.reindex();
  u.check_invariants();
  return u;
}

std::string Universe::serialize() const {
  std::ostringstream out;
  out << kUniverseMagic << ' ' << kUniverseVersion << '\n';
  out << "meta n_categories " << n_categories << '\n';
  out << "meta topic_dim " << topic_dim << '\n';
  out << "meta click_kappa " << io::format_double(click_kappa) << '\n';
  out << "meta legacy_bias " << io::format_double(legacy_bias) << '\n';
  out << "meta legacy_noise " << io::format_double(legacy_noise) << '\n';
  for (std::size_t i = 0; i < words.size(); ++i) {
    const Word& w = words[i];
    out << "word " << i << ' ' << w.category.value << ' ' << w.surface;
    for (double x : w.topic) out << ' ' << io::format_double(x);
    out << '\n';
  }
  for (std::size_t i = 0; i < keywords.size(); ++i) {
    out << "keyword " << i << ' ' << keywords[i].category.value << ' ' << ids_csv(keywords[i].words) << '\n';
  }
  for (std::size_t i = 0; i < ads.size(); ++i) {
    const Ad& a = ads[i];
    out << "ad " << i << ' ' << a.category.value << ' ';
    for (std::size_t j = 0; j < a.bids.size(); ++j) {
      if (j) out << ',';
      out << a.bids[j].keyword.value << ':' << io::format_double(a.bids[j].price);
    }
    for (double x : a.topic) out << ' ' << io::format_double(x);
    out << '\n';
  }
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const Query& q = queries[i];
    out << "query " << i << ' ' << q.category.value << ' ' << io::format_double(q.traffic) << ' '
        << (q.held_out ? 1 : 0) << ' ' << ids_csv(q.words) << '\n';
  }
  out << "end\n";
  return std::move(out).str();
}

Universe Universe::deserialize(std::string_view text) {
  Universe u;
  auto lines = io::split(text, '\n');
  if (lines.empty()) throw ArtifactError("universe: empty file");
  {
    auto head = io::split_whitespace(lines[0]);
    if (head.size() != 2 || head[0] != kUniverseMagic) throw ArtifactError("universe: bad header");
    if (io::parse_int(head[1], "universe version") != kUniverseVersion) {
      throw ArtifactError("universe: unsupported version " + std::string(head[1]));
    }
  }
  bool ended = false;
  auto expect_id = [](std::string_view field, std::size_t next, const char* kind) {
    if (io::parse_u64(field, kind) != next) throw ArtifactError(std::string("universe: non-sequential ") + kind + " id");
  };
  auto parse_topic = [&](const std::vector<std::string_view>& f, std::size_t from) {
    if (f.size() != from + static_cast<std::size_t>(u.topic_dim)) throw ArtifactError("universe: bad topic arity");
    std::vector<double> t;
    for (std::size_t i = from; i < f.size(); ++i) t.push_back(io::parse_double(f[i], "topic"));
    return t;
  };
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    if (ended) throw ArtifactError("universe: content after end marker");
    auto f = io::split_whitespace(lines[ln]);
    const std::string_view kind = f[0];
    if (kind == "meta") {
      if (f.size() != 3) throw ArtifactError("universe: bad meta line");
      if (f[1] == "n_categories") u.n_categories = static_cast<int>(io::parse_int(f[2], "n_categories"));
      else if (f[1] == "topic_dim") u.topic_dim = static_cast<int>(io::parse_int(f[2], "topic_dim"));
      else if (f[1] == "click_kappa") u.click_kappa = io::parse_double(f[2], "click_kappa");
      else if (f[1] == "legacy_bias") u.legacy_bias = io::parse_double(f[2], "legacy_bias");
      else if (f[1] == "legacy_noise") u.legacy_noise = io::parse_double(f[2], "legacy_noise");
      else throw ArtifactError("universe: unknown meta key " + std::string(f[1]));
    } else if (kind == "word") {
      if (f.size() < 4) throw ArtifactError("universe: bad word line");
      expect_id(f[1], u.words.size(), "word");
      Word w;
      w.category = CategoryId(static_cast<std::uint32_t>(io::parse_u64(f[2], "category")));
      w.surface = std::string(f[3]);
      w.topic = parse_topic(f, 4);
      u.words.push_back(std::move(w));
    } else if (kind == "keyword") {
      if (f.size() != 4) throw ArtifactError("universe: bad keyword line");
      expect_id(f[1], u.keywords.size(), "keyword");
      Keyword k;
      k.category = CategoryId(static_cast<std::uint32_t>(io::parse_u64(f[2], "category")));
      k.words = parse_ids_csv(f[3]);
      u.keywords.push_back(std::move(k));
    } else if (kind == "ad") {
      if (f.size() < 4) throw ArtifactError("universe: bad ad line");
      expect_id(f[1], u.ads.size(), "ad");
      Ad a;
      a.category = CategoryId(static_cast<std::uint32_t>(io::parse_u64(f[2], "category")));
      for (auto part : io::split(f[3], ',')) {
        auto kv = io::split(part, ':');
        if (kv.size() != 2) throw ArtifactError("universe: bad bid");
        a.bids.push_back({KeywordId(static_cast<std::uint32_t>(io::parse_u64(kv[0], "keyword id"))),
                          io::parse_double(kv[1], "price")});
      }
      a.topic = parse_topic(f, 4);
      u.ads.push_back(std::move(a));
    } else if (kind == "query") {
      if (f.size() != 6) throw ArtifactError("universe: bad query line");
      expect_id(f[1], u.queries.size(), "query");
      Query q;
      q.category = CategoryId(static_cast<std::uint32_t>(io::parse_u64(f[2], "category")));
      q.traffic = io::parse_double(f[3], "traffic");
      q.held_out = io::parse_u64(f[4], "held_out") != 0;
      q.words = parse_ids_csv(f[5]);
      u.queries.push_back(std::move(q));
    } else if (kind == "end") {
      ended = true;
    } else {
      throw ArtifactError("universe: unknown record type '" + std::string(kind) + "'");
    }
  }
  if (!ended) throw ArtifactError("universe: missing end marker (truncated file?)");
  if (u.n_categories < 1 || u.topic_dim < 1) throw ArtifactError("universe: missing meta fields");
  for (const auto& w : u.words) {
    if (w.category.index() >= static_cast<std::size_t>(u.n_categories)) throw ArtifactError("universe: bad category id");
  }
  for (const auto& k : u.keywords) {
    if (k.category.index() >= static_cast<std::size_t>(u.n_categories)) throw ArtifactError("universe: bad category id");
    for (WordId w : k.words) {
      if (w.index() >= u.words.size()) throw ArtifactError("universe: keyword references unknown word");
    }
  }
  for (const auto& a : u.ads) {
    if (a.category.index() >= static_cast<std::size_t>(u.n_categories)) throw ArtifactError("universe: bad category id");
    for (const Bid& b : a.bids) {
      if (b.keyword.index() >= u.keywords.size()) throw ArtifactError("universe: ad references unknown keyword");
    }
  }
  for (const auto& q : u.queries) {
    if (q.category.index() >= static_cast<std::size_t>(u.n_categories)) throw ArtifactError("universe: bad category id");
    for (WordId w : q.words) {
      if (w.index() >= u.words.size()) throw ArtifactError("universe: query references unknown word");
    }
  }
  u.reindex();
  try {
    u.check_invariants();
  } catch (const GenerationError& e) {
    throw ArtifactError(e.what());
  }
  return u;
}

std::string ClickLog::serialize() const {
  std::string out;
  out.reserve(records.size() * 20);
  for (const ClickRecord& r : records) {
    out += std::to_string(r.request_id);
    out += '\t';
    out += std::to_string(r.query.value);
    out += '\t';
    out += std::to_string(r.ad.value);
    out += '\t';
    out += r.clicked ? '1' : '0';
    out += '\n';
  }
  return out;
}

ClickLog ClickLog::deserialize(std::string_view text) {
  ClickLog log;
  for (auto line : io::split(text, '\n')) {
    if (line.empty()) continue;
    auto f = io::split(line, '\t');
    if (f.size() != 4 || (f[3] != "0" && f[3] != "1")) throw ArtifactError("click log: malformed record");
    ClickRecord r;
    r.request_id = io::parse_u64(f[0], "request_id");
    r.query = QueryId(static_cast<std::uint32_t>(io::parse_u64(f[1], "query_id")));
    r.ad = AdId(static_cast<std::uint32_t>(io::parse_u64(f[2], "ad_id")));
    r.clicked = f[3] == "1";
    log.records.push_back(r);
  }
  return log;
}

std::uint64_t LogAggregates::click_count(AdId a, QueryId q) const {
  auto it = clicks.find({a, q});
  return it == clicks.end() ? 0 : it->second;
}

std::vector<AdId> LogAggregates::clicked_ads(QueryId q) const {
  std::vector<AdId> out;
  for (const auto& [key, n] : clicks) {
    if (key.second == q && n > 0) out.push_back(key.first);
  }
  return out;
}

LogAggregates aggregate(const ClickLog& log, const Universe& universe) {
  LogAggregates agg;
  agg.requests.assign(universe.queries.size(), 0);
  for (const ClickRecord& r : log.records) {
    if (r.query.index() >= universe.queries.size() || r.ad.index() >= universe.ads.size()) {
      throw ArtifactError("click log references ids outside the universe");
    }
    ++agg.requests[r.query.index()];
    ++agg.shows[{r.ad, r.query}];
    if (r.clicked) ++agg.clicks[{r.ad, r.query}];
  }
  agg.bidders.resize(universe.keywords.size());
  for (std::size_t k = 0; k < universe.keywords.size(); ++k) agg.bidders[k] = universe.bidder_count(KeywordId(k));
  return agg;
}

ClickLog simulate_click_log(const Universe& universe, std::uint64_t n_requests, std::uint64_t seed,
                            bool include_held_out) {
  if (n_requests < 1) throw InvalidArgument("simulate_click_log: n_requests must be >= 1");
  for (int c = 0; c < universe.n_categories; ++c) {
    if (universe.ads_in(CategoryId(c)).empty()) {
      throw GenerationError("category " + std::to_string(c) + " has no ads");
    }
  }
  const std::size_t n_q = universe.queries.size();

  // The incumbent server ranks ads by price x estimated propensity. Its estimate is off by a
  // fixed per-(query, ad) bias plus fresh noise per request; without noise every request of a
  // query shows the same ad.
  Rng bias_rng(derive_seed(seed, 1));
  std::vector<std::vector<double>> est(n_q);  // biased cosine estimate per category ad
  for (std::size_t qi = 0; qi < n_q; ++qi) {
    const QueryId q(qi);
    for (AdId a : universe.ads_in(universe.query(q).category)) {
      const double cos = detail::cosine(universe.query(q).topic, universe.ad(a).topic);
      est[qi].push_back(cos + (universe.legacy_bias > 0.0 ? universe.legacy_bias * bias_rng.normal() : 0.0));
    }
  }
  auto pick_ad = [&](QueryId q, Rng* noise_rng) {
    const auto& candidates = universe.ads_in(universe.query(q).category);
    AdId shown;
    double best = -1.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const Ad& ad = universe.ad(candidates[i]);
      const double noise = noise_rng ? universe.legacy_noise * noise_rng->normal() : 0.0;
      const double ecpm = ad.max_price() * detail::logistic(universe.click_kappa * (est[q.index()][i] + noise));
      if (ecpm > best) {
        best = ecpm;
        shown = candidates[i];
      }
    }
    return shown;
  };
  const bool noisy = universe.legacy_noise > 0.0;
  std::vector<AdId> fixed(n_q);
  if (!noisy) {
    for (std::size_t qi = 0; qi < n_q; ++qi) fixed[qi] = pick_ad(QueryId(qi), nullptr);
  }

  std::vector<double> weights(n_q);
  for (std::size_t qi = 0; qi < n_q; ++qi) {
    const Query& q = universe.queries[qi];
    weights[qi] = (include_held_out || !q.held_out) ? q.traffic : 0.0;
  }
  const DiscreteSampler draw_query(weights);
  if (draw_query.empty()) throw GenerationError("no loggable queries");

  Rng noise_rng(derive_seed(seed, 3));
  Rng rng(derive_seed(seed, 2));
  ClickLog log;
  log.records.reserve(n_requests);
  for (std::uint64_t i = 0; i < n_requests; ++i) {
    const std::size_t qi = draw_query(rng);
    const AdId a = noisy ? pick_ad(QueryId(qi), &noise_rng) : fixed[qi];
    log.records.push_back({i, QueryId(qi), a, rng.bernoulli(universe.propensity(QueryId(qi), a))});
  }
  return log;
}

WordVecTable pretrained_word_vectors(const Universe& universe, double noise_sigma, std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("pretrained_word_vectors: noise_sigma must be >= 0");
  const int g = universe.topic_dim;
  std::vector<double> data;
  data.reserve(universe.words.size() * static_cast<std::size_t>(g));
  Rng rng(seed);
  for (const Word& w : universe.words) {
    if (noise_sigma == 0.0) {
      data.insert(data.end(), w.topic.begin(), w.topic.end());
      continue;
    }
    std::vector<double> v = w.topic;
    for (double& x : v) x += noise_sigma * rng.normal();
    detail::normalize(v);
    data.insert(data.end(), v.begin(), v.end());
  }
  return WordVecTable(g, std::move(data));
}

HeadTailSplit head_tail_split(const std::map<QueryId, double>& traffic, double fraction) {
  if (traffic.empty()) throw InvalidArgument("head_tail_split: empty traffic map");
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("head_tail_split: fraction must be in (0, 1)");
  std::vector<std::pair<QueryId, double>> sorted(traffic.begin(), traffic.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
  double total = 0.0;
  for (const auto& [q, c] : sorted) total += c;
  const double target = fraction * total;

  HeadTailSplit split;
  double acc = 0.0;
  std::size_t i = 0;
  for (; i < sorted.size(); ++i) {
    split.head.push_back(sorted[i].first);
    acc += sorted[i].second;
    if (acc >= target) break;
  }
  for (std::size_t j = i + 1; j < sorted.size(); ++j) split.tail.push_back(sorted[j].first);
  std::sort(split.tail.begin(), split.tail.end());
  return split;
}

}  // namespace rqrf
