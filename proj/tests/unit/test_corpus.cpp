#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "fixtures.hpp"
#include "rqrf/corpus.hpp"
#include "rqrf/error.hpp"

using namespace rqrf;

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double true_ecpm(const Universe& u, QueryId q, AdId a) { return u.ad(a).max_price() * u.propensity(q, a); }

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("same config and seed give byte-identical universes and logs") {
    const GenConfig g;
    const Universe a = generate_universe(g, 7);
    const Universe b = generate_universe(g, 7);
    CHECK(a.serialize() == b.serialize());
    CHECK(simulate_click_log(a, 5000, 11).serialize() == simulate_click_log(b, 5000, 11).serialize());
    CHECK(generate_universe(g, 8).serialize() != a.serialize());
  }

  TEST_CASE("reference universe has the documented shape") {
    const Universe u = generate_universe(GenConfig{}, 7);
    CHECK(u.keywords.size() == 200);
    CHECK(u.ads.size() == 50);
    CHECK(u.queries.size() == 300);
    CHECK(std::count_if(u.queries.begin(), u.queries.end(), [](const Query& q) { return q.held_out; }) == 60);
  }

  TEST_CASE("serialization round-trips") {
    const Universe u = generate_universe(test::small_gen_config(), 3);
    const std::string text = u.serialize();
    CHECK(Universe::deserialize(text).serialize() == text);
    CHECK_THROWS_AS(Universe::deserialize("not a universe\n"), ArtifactError);
    CHECK_THROWS_AS(Universe::deserialize(text.substr(0, text.size() / 2)), ArtifactError);
  }

  TEST_CASE("structural invariants") {
    GenConfig g;
    g.ads_per_category = 3;
    const Universe u = generate_universe(g, 7);
    for (const Ad& a : u.ads) {
      REQUIRE_FALSE(a.bids.empty());
      for (const Bid& b : a.bids) {
        CHECK(u.keyword(b.keyword).category == a.category);
        CHECK(b.price > 0.0);
        CHECK(u.bidder_count(b.keyword) >= 1);
      }
      CHECK(norm(a.topic) == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (const Word& w : u.words) CHECK(norm(w.topic) == doctest::Approx(1.0).epsilon(1e-12));
    for (const Query& q : u.queries) {
      for (WordId w : q.words) CHECK(u.word(w).category == q.category);
    }
  }

  TEST_CASE("queries never repeat a keyword verbatim") {
    const Universe u = generate_universe(GenConfig{}, 7);
    std::set<std::string> keywords;
    for (std::size_t k = 0; k < u.keywords.size(); ++k) keywords.insert(u.keyword_text(KeywordId(k)));
    std::set<std::string> queries;
    for (std::size_t q = 0; q < u.queries.size(); ++q) {
      const std::string t = u.query_text(QueryId(q));
      CHECK(keywords.count(t) == 0);
      CHECK(queries.insert(t).second);
    }
  }

  TEST_CASE("traffic follows the Zipf law") {
    GenConfig g;
    g.zipf_s = 1.2;
    g.queries_per_category = 50;  // 100 queries
    const Universe u = generate_universe(g, 7);
    std::vector<double> w;
    double total = 0.0;
    for (const Query& q : u.queries) {
      w.push_back(q.traffic);
      total += q.traffic;
    }
    std::sort(w.rbegin(), w.rend());
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w[0] / w[1] == doctest::Approx(2.2974).epsilon(1e-4));
    CHECK(w[0] / w[1] == doctest::Approx(std::pow(2.0, 1.2)).epsilon(1e-12));
    CHECK(w[1] / w[4] == doctest::Approx(std::pow(2.5, 1.2)).epsilon(1e-12));
  }

  TEST_CASE("held-out queries are the lowest-traffic ones") {
    const Universe u = generate_universe(GenConfig{}, 7);
    double min_seen = 1.0, max_held = 0.0;
    for (const Query& q : u.queries) {
      if (q.held_out) max_held = std::max(max_held, q.traffic);
      else min_seen = std::min(min_seen, q.traffic);
    }
    CHECK(max_held <= min_seen);
  }

  TEST_CASE("kappa = 0 makes every propensity one half") {
    GenConfig g = test::small_gen_config();
    g.click_kappa = 0.0;
    const Universe u = generate_universe(g, 5);
    for (std::size_t q = 0; q < u.queries.size(); ++q) {
      for (std::size_t a = 0; a < u.ads.size(); ++a) CHECK(u.propensity(QueryId(q), AdId(a)) == 0.5);
    }
  }

  TEST_CASE("empirical query frequencies match the Zipf weights") {
    const Universe u = generate_universe(GenConfig{}, 7);
    auto l1_at = [&](std::uint64_t n, std::uint64_t seed, double* expected) {
      const ClickLog log = simulate_click_log(u, n, seed, true);
      std::vector<double> freq(u.queries.size(), 0.0);
      for (const auto& r : log.records) freq[r.query.index()] += 1.0;
      double l1 = 0.0;
      *expected = 0.0;
      for (std::size_t q = 0; q < freq.size(); ++q) {
        const double p = u.queries[q].traffic;
        l1 += std::abs(freq[q] / static_cast<double>(n) - p);
        // E|p_hat - p| under the normal approximation of the multinomial.
        *expected += std::sqrt(2.0 * p * (1.0 - p) / (std::numbers::pi * static_cast<double>(n)));
      }
      return l1;
    };
    // 300 Zipf cells: pure sampling error at 1e5 requests is about 0.028 L1, so compare
    // against that; the 2% bound holds from 1e6 requests on.
    double expected = 0.0;
    const double l1 = l1_at(100000, 21, &expected);
    CHECK(expected == doctest::Approx(0.028).epsilon(0.1));
    CHECK(l1 < 1.2 * expected);
    CHECK(l1_at(1000000, 22, &expected) < 0.02);
  }

  TEST_CASE("training logs exclude held-out queries") {
    const Universe u = generate_universe(GenConfig{}, 7);
    const ClickLog log = simulate_click_log(u, 20000, 5);
    for (const auto& r : log.records) CHECK_FALSE(u.query(r.query).held_out);
  }

  TEST_CASE("noise-free incumbent always shows the eCPM-max ad") {
    GenConfig g = test::small_gen_config();
    g.legacy_bias = 0.0;
    g.legacy_noise = 0.0;
    const Universe u = generate_universe(g, 9);
    const ClickLog log = simulate_click_log(u, 3000, 2, true);
    for (const auto& r : log.records) {
      for (AdId a : u.ads_in(u.query(r.query).category)) CHECK(true_ecpm(u, r.query, r.ad) >= true_ecpm(u, r.query, a));
    }
  }

  TEST_CASE("a category with a single ad shows it on every request") {
    Universe u = generate_universe(test::small_gen_config(), 4);
    const AdId keep = u.ads_in(CategoryId(0)).front();
    std::vector<Ad> ads;
    for (std::size_t a = 0; a < u.ads.size(); ++a) {
      if (u.ads[a].category != CategoryId(0) || AdId(a) == keep) ads.push_back(u.ads[a]);
    }
    u.ads = ads;
    u.reindex();
    u.check_invariants();
    const AdId only = u.ads_in(CategoryId(0)).front();
    const ClickLog log = simulate_click_log(u, 2000, 8, true);
    for (const auto& r : log.records) {
      if (u.query(r.query).category == CategoryId(0)) CHECK(r.ad == only);
    }
  }

  TEST_CASE("aggregates respect click <= co-occurrence") {
    const Universe u = generate_universe(test::small_gen_config(), 4);
    const ClickLog log = simulate_click_log(u, 5000, 1);
    const LogAggregates agg = aggregate(log, u);
    std::uint64_t total = 0;
    for (std::uint64_t r : agg.requests) total += r;
    CHECK(total == log.records.size());
    for (const auto& [key, clicks] : agg.clicks) CHECK(clicks <= agg.shows.at(key));
    for (std::size_t k = 0; k < u.keywords.size(); ++k) CHECK(agg.bidders[k] == u.bidder_count(KeywordId(k)));
  }

  TEST_CASE("click log text format") {
    ClickLog log;
    log.records.push_back({0, QueryId(3), AdId(1), true});
    log.records.push_back({1, QueryId(0), AdId(2), false});
    CHECK(log.serialize() == "0\t3\t1\t1\n1\t0\t2\t0\n");
    CHECK(ClickLog::deserialize(log.serialize()).records == log.records);
    CHECK_THROWS_AS(ClickLog::deserialize("0\t3\t1\n"), ArtifactError);
    CHECK_THROWS_AS(ClickLog::deserialize("0\t3\t1\t2\n"), ArtifactError);
  }

  TEST_CASE("pretrained word vectors") {
    const Universe u = generate_universe(test::small_gen_config(), 4);
    const WordVecTable exact = pretrained_word_vectors(u, 0.0, 1);
    for (std::size_t w = 0; w < u.words.size(); ++w) {
      const auto v = exact[WordId(w)];
      CHECK(std::equal(v.begin(), v.end(), u.words[w].topic.begin()));
    }
    const WordVecTable a = pretrained_word_vectors(u, 0.1, 5);
    const WordVecTable b = pretrained_word_vectors(u, 0.1, 5);
    for (std::size_t w = 0; w < u.words.size(); ++w) {
      const auto va = a[WordId(w)];
      const auto vb = b[WordId(w)];
      CHECK(std::equal(va.begin(), va.end(), vb.begin()));
      CHECK(norm({va.begin(), va.end()}) == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK_THROWS_AS(pretrained_word_vectors(u, -0.1, 5), InvalidArgument);
  }

  TEST_CASE("head/tail split") {
    auto ids = [](const std::vector<QueryId>& v) {
      std::vector<std::uint32_t> out;
      for (QueryId q : v) out.push_back(q.value);
      return out;
    };
    const std::map<QueryId, double> counts{
        {QueryId(1), 50}, {QueryId(2), 30}, {QueryId(3), 10}, {QueryId(4), 5}, {QueryId(5), 5}};
    const HeadTailSplit s = head_tail_split(counts, 0.5);
    CHECK(ids(s.head) == std::vector<std::uint32_t>{1});
    CHECK(ids(s.tail) == std::vector<std::uint32_t>{2, 3, 4, 5});

    const std::map<QueryId, double> uniform{{QueryId(0), 1}, {QueryId(1), 1}, {QueryId(2), 1}, {QueryId(3), 1}};
    CHECK(ids(head_tail_split(uniform, 0.5).head) == std::vector<std::uint32_t>{0, 1});

    const std::map<QueryId, double> distinct{{QueryId(0), 50}, {QueryId(1), 30}, {QueryId(2), 10}, {QueryId(3), 4}};
    const HeadTailSplit all = head_tail_split(distinct, 0.9999);
    CHECK(all.head.size() == 4);
    CHECK(all.tail.empty());

    // Minimality: the head reaches the target and drops below it without its last element.
    const Universe u = generate_universe(GenConfig{}, 7);
    std::map<QueryId, double> traffic;
    for (std::size_t q = 0; q < u.queries.size(); ++q) traffic[QueryId(q)] = u.queries[q].traffic;
    const HeadTailSplit h = head_tail_split(traffic, 0.8);
    double acc = 0.0;
    for (QueryId q : h.head) acc += traffic[q];
    CHECK(acc >= 0.8 - 1e-12);
    CHECK(acc - traffic[h.head.back()] < 0.8);
    CHECK(h.head.size() + h.tail.size() == u.queries.size());

    CHECK_THROWS_AS(head_tail_split({}, 0.5), InvalidArgument);
    CHECK_THROWS_AS(head_tail_split(counts, 1.0), InvalidArgument);
  }

  TEST_CASE("invalid generation config names the field") {
    GenConfig g;
    g.zipf_s = -1.0;
    try {
      g.validate();
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.field() == "zipf_s");
    }
  }
}
