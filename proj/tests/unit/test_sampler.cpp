#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fixtures.hpp"
#include "rqrf/error.hpp"
#include "rqrf/random.hpp"
#include "rqrf/sampler.hpp"

using namespace rqrf;
using rqrf::test::axis;
using rqrf::test::MarketBuilder;

namespace {

// q along e0; k1 on e0, k2 halfway between e0 and e1, k3 orthogonal. Ad 0 buys all three,
// ad 1 buys only k1, so n_k1 = 2 and n_k2 = n_k3 = 1.
struct ScoreMarket {
  Universe u;
  QueryId q;
  KeywordId k1, k2, k3;
  AdId a0, a1;
  WordVecTable wv;
};

ScoreMarket score_market() {
  MarketBuilder b(4);
  ScoreMarket m;
  m.k1 = b.keyword("alpha", axis(4, 0));
  m.k2 = b.keyword("beta", {1, 1, 0, 0});
  m.k3 = b.keyword("gamma", axis(4, 1));
  b.keyword("delta", axis(4, 2));
  b.keyword("epsilon", axis(4, 3));
  b.keyword("zeta", {1, 0, 1, 0});
  m.q = b.query("query", axis(4, 0));
  m.a0 = b.ad({{m.k1, 2.0}, {m.k2, 1.0}, {m.k3, 5.0}}, axis(4, 0));
  m.a1 = b.ad({{m.k1, 1.0}}, axis(4, 0));
  m.u = b.build();
  m.wv = pretrained_word_vectors(m.u, 0.0, 1);
  return m;
}

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("rpm_score oracle values") {
  CHECK(rpm_score(1.0, 1.0, 9) == doctest::Approx(0.434294481903).epsilon(1e-10));
  CHECK(rpm_score(3.0, 1.0, 1) == doctest::Approx(4.328085122667).epsilon(1e-10));
  CHECK(rpm_score(7.0, 0.0, 3) == 0.0);
  CHECK_THROWS_AS(rpm_score(1.0, 1.0, 0), InvalidArgument);
}

TEST_CASE("rpm_score strictly decreases with bidder count") {
  double prev = rpm_score(2.0, 0.5, 1);
  for (std::uint64_t n = 2; n < 200; ++n) {
    const double s = rpm_score(2.0, 0.5, n);
    CHECK(s < prev);
    prev = s;
  }
}

TEST_CASE("normalize_scores") {
  const std::vector<double> a{1.0, 3.0};
  CHECK(normalize_scores(a) == std::vector<double>{0.25, 0.75});
  const std::vector<double> b{4.2};
  CHECK(normalize_scores(b) == std::vector<double>{1.0});
  const std::vector<double> c{0.0, 0.0};
  CHECK(normalize_scores(c) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("relevance is a clamped cosine") {
  const ScoreMarket m = score_market();
  CHECK(relevance(m.k1, m.q, m.u, m.wv) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(relevance(m.k2, m.q, m.u, m.wv) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK(relevance(m.k3, m.q, m.u, m.wv) == doctest::Approx(0.0));

  // Opposite directions clamp to zero instead of going negative.
  const std::vector<double> data{1, 0, -1, 0};
  const WordVecTable wv(2, data);
  const std::vector<WordId> x{WordId(0)}, y{WordId(1)};
  CHECK(relevance(x, y, wv) == 0.0);
  CHECK(relevance(x, x, wv) == doctest::Approx(1.0));
}

TEST_CASE("relevance averages word vectors") {
  const std::vector<double> data{1, 0, 0, 1};
  const WordVecTable wv(2, data);
  const std::vector<WordId> both{WordId(0), WordId(1)}, first{WordId(0)};
  CHECK(relevance(both, first, wv) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK_THROWS_AS(relevance(std::vector<WordId>{}, first, wv), InvalidArgument);
}

TEST_CASE("score uses bid price, relevance and bidder count") {
  const ScoreMarket m = score_market();
  ClickLog log;
  rqrf::test::add_records(log, m.q, m.a0, 3, true);
  const LogAggregates agg = aggregate(log, m.u);
  CHECK(score(m.k1, m.q, m.a0, m.u, agg, m.wv) == doctest::Approx(2.0 / std::log(3.0)).epsilon(1e-12));
  CHECK(score(m.k1, m.q, m.a1, m.u, agg, m.wv) == doctest::Approx(1.0 / std::log(3.0)).epsilon(1e-12));
  CHECK_THROWS_AS(score(m.k2, m.q, m.a1, m.u, agg, m.wv), InvalidArgument);
}

TEST_CASE("sample_distribution oracle") {
  const ScoreMarket m = score_market();
  ClickLog log;
  rqrf::test::add_records(log, m.q, m.a0, 1, true);
  const LogAggregates agg = aggregate(log, m.u);
  const auto d = sample_distribution(m.q, m.a0, m.u, agg, m.wv);
  REQUIRE(d.size() == 3);
  CHECK(d[0].first == m.k1);
  CHECK(d[1].first == m.k2);
  CHECK(d[2].first == m.k3);
  CHECK(d[0].second == doctest::Approx(0.6408741046620554).epsilon(1e-12));
  CHECK(d[1].second == doctest::Approx(0.35912589533794453).epsilon(1e-12));
  CHECK(d[2].second == doctest::Approx(0.0));
  double total = 0.0;
  for (const auto& [k, p] : d) total += p;
  CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("sample_distribution sums to one on a generated market") {
  const Universe u = generate_universe(rqrf::test::small_gen_config(), 3);
  const ClickLog log = simulate_click_log(u, 2000, 4);
  const LogAggregates agg = aggregate(log, u);
  const WordVecTable wv = pretrained_word_vectors(u, 0.1, 5);
  for (const ClickRecord& r : log.records) {
    if (!r.clicked) continue;
    double total = 0.0;
    for (const auto& [k, p] : sample_distribution(r.query, r.ad, u, agg, wv)) {
      CHECK(p >= 0.0);
      total += p;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("draw_samples structure") {
  const Universe u = generate_universe(rqrf::test::small_gen_config(), 3);
  const ClickLog log = simulate_click_log(u, 3000, 4);
  const WordVecTable wv = pretrained_word_vectors(u, 0.1, 5);
  const auto samples = draw_samples(log, u, wv, 4, 6);

  const auto clicked = std::count_if(log.records.begin(), log.records.end(), [](const ClickRecord& r) { return r.clicked; });
  REQUIRE(samples.size() == static_cast<std::size_t>(clicked));

  std::size_t si = 0;
  for (const ClickRecord& r : log.records) {
    if (!r.clicked) continue;
    const TrainingSample& s = samples[si++];
    CHECK(s.query == r.query);
    REQUIRE(s.positives.size() == 1);
    CHECK(u.ad(r.ad).find_bid(s.positives[0]) != nullptr);
    REQUIRE(s.negatives.size() == 4);
    std::set<KeywordId> neg(s.negatives.begin(), s.negatives.end());
    CHECK(neg.size() == 4);
    CHECK(neg.count(s.positives[0]) == 0);
    const CategoryId cat = u.query(s.query).category;
    for (KeywordId k : s.negatives) CHECK(u.keyword(k).category == cat);
  }

  CHECK(draw_samples(log, u, wv, 4, 6) == samples);
  CHECK(draw_samples(log, u, wv, 4, 7) != samples);
}

TEST_CASE("unclicked records produce no samples") {
  const ScoreMarket m = score_market();
  ClickLog log;
  rqrf::test::add_records(log, m.q, m.a0, 10, false);
  CHECK(draw_samples(log, m.u, m.wv, 2, 1).empty());
  CHECK_THROWS_AS(draw_samples(ClickLog{}, m.u, m.wv, 2, 1), InvalidArgument);
}

TEST_CASE("a five-keyword pool forces the other four as negatives") {
  MarketBuilder b(4);
  std::vector<KeywordId> ks;
  for (int i = 0; i < 5; ++i) ks.push_back(b.keyword("kw" + std::to_string(i), axis(4, i % 4)));
  const QueryId q = b.query("q", axis(4, 0));
  const AdId a = b.ad({{ks[0], 1.0}, {ks[1], 2.0}}, axis(4, 0));
  const Universe u = b.build();
  const WordVecTable wv = pretrained_word_vectors(u, 0.0, 1);
  ClickLog log;
  rqrf::test::add_records(log, q, a, 40, true);
  const auto samples = draw_samples(log, u, wv, 4, 9);
  REQUIRE(samples.size() == 40);
  for (const auto& s : samples) {
    std::vector<KeywordId> all = s.negatives;
    all.push_back(s.positives[0]);
    std::sort(all.begin(), all.end());
    CHECK(all == ks);
  }
  CHECK_THROWS_AS(draw_samples(log, u, wv, 5, 9), InvalidArgument);
}

TEST_CASE("positive frequencies follow p(b|a,q)") {
  const ScoreMarket m = score_market();
  ClickLog log;
  rqrf::test::add_records(log, m.q, m.a0, 20000, true);
  const auto samples = draw_samples(log, m.u, m.wv, 1, 11);
  std::size_t k1 = 0, k3 = 0;
  for (const auto& s : samples) {
    k1 += s.positives[0] == m.k1;
    k3 += s.positives[0] == m.k3;
  }
  CHECK(static_cast<double>(k1) / 20000.0 == doctest::Approx(0.64087).epsilon(0.02));
  CHECK(k3 == 0);
}

TEST_CASE("samples round trip") {
  std::vector<TrainingSample> s{{QueryId(3), {KeywordId(1)}, {KeywordId(4), KeywordId(0)}},
                                {QueryId(0), {KeywordId(7)}, {}}};
  CHECK(deserialize_samples(serialize_samples(s)) == s);
  CHECK_THROWS_AS(deserialize_samples("3\tpos:\tneg:1\n"), ArtifactError);
  CHECK_THROWS_AS(deserialize_samples("3\tneg:1\tpos:2\n"), ArtifactError);
  CHECK_THROWS_AS(deserialize_samples("x\tpos:1\tneg:2\n"), ArtifactError);
}

}  // TEST_SUITE
