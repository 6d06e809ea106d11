#include "rqrf/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rqrf/error.hpp"
#include "rqrf/evaluator.hpp"
#include "rqrf/io.hpp"
#include "rqrf/random.hpp"
#include "rqrf/sampler.hpp"
#include "vec_util.hpp"

namespace rqrf {

double rpm(QueryId q, KeywordId b, const LogAggregates& agg, const Universe& universe) {
  const std::uint64_t requests = agg.request_count(q);
  if (requests == 0) throw InvalidArgument("rpm: query " + std::to_string(q.value) + " has no requests");
  double revenue = 0.0;
  for (AdId a : universe.bidders(b)) {
    const std::uint64_t clicks = agg.click_count(a, q);
    if (clicks == 0) continue;
    revenue += universe.ad(a).find_bid(b)->price * static_cast<double>(clicks);
  }
  return revenue / static_cast<double>(requests);
}

std::span<const RewriteTable::Entry> RewriteTable::lookup(std::string_view query_text) const {
  const auto it = table_.find(query_text);
  if (it == table_.end()) return {};
  return it->second;
}

RewriteTable build_memory_baseline(const ClickLog& log, const Universe& universe) {
  const LogAggregates agg = aggregate(log, universe);
  std::map<QueryId, std::map<KeywordId, RewriteTable::Entry>> acc;
  for (const auto& [key, clicks] : agg.clicks) {
    const auto& [a, q] = key;
    if (clicks == 0) continue;
    auto& row = acc[q];
    for (const Bid& b : universe.ad(a).bids) {
      auto& e = row[b.keyword];
      e.keyword = b.keyword;
      e.weighted_clicks += b.price * static_cast<double>(clicks);
      e.clicks += clicks;
    }
  }
  RewriteTable table;
  for (auto& [q, row] : acc) {
    std::vector<RewriteTable::Entry> entries;
    for (auto& [k, e] : row) entries.push_back(e);
    std::sort(entries.begin(), entries.end(), [](const auto& x, const auto& y) {
      if (x.weighted_clicks != y.weighted_clicks) return x.weighted_clicks > y.weighted_clicks;
      return x.keyword < y.keyword;
    });
    table.table_[universe.query_text(q)] = std::move(entries);
  }
  return table;
}

void AbConfig::validate() const {
  if (n_requests == 0) throw ConfigError("n_requests", "must be > 0");
  if (top_k < 1) throw ConfigError("top_k", "must be >= 1");
  if (!(head_fraction > 0.0 && head_fraction < 1.0)) throw ConfigError("head_fraction", "must be in (0, 1)");
}

Retriever memory_retriever(const Universe& universe, const RewriteTable& table, int top_k) {
  return [&universe, &table, top_k](QueryId q) {
    const auto entries = table.lookup(universe.query_text(q));
    std::vector<KeywordId> out;
    for (std::size_t i = 0; i < entries.size() && i < static_cast<std::size_t>(top_k); ++i) {
      out.push_back(entries[i].keyword);
    }
    return out;
  };
}

Retriever model_retriever(const Universe& universe, const ModelParams<float>& model, int top_k) {
  const TokenizedCorpus texts = TokenizedCorpus::build(universe, model.vocab, model.config.tower);
  const KeywordIndex index = KeywordIndex::build(model, universe, texts);
  // Rewrites are fixed per query, so compute them all up front.
  auto cache = std::make_shared<std::vector<std::vector<KeywordId>>>(universe.queries.size());
  for (std::size_t i = 0; i < universe.queries.size(); ++i) {
    const QueryId q(i);
    const auto ranked = rank_candidates(encode(texts.queries[i], model.query), index.category(universe.query(q).category));
    auto& out = (*cache)[i];
    for (std::size_t r = 0; r < ranked.size() && r < static_cast<std::size_t>(top_k); ++r) {
      out.push_back(ranked[r].keyword);
    }
  }
  return [cache](QueryId q) { return cache->at(q.index()); };
}

namespace {

struct Placement {
  bool shown = false;
  AdId ad;
  double price = 0.0;
  double propensity = 0.0;
};

// Eligible ads bid on any retrieved keyword; the auction picks max price * propensity and the
// winner pays its highest matching bid on a click.
Placement auction(const Universe& universe, QueryId q, std::span<const KeywordId> retrieved) {
  std::map<AdId, double> eligible;
  for (KeywordId b : retrieved) {
    for (AdId a : universe.bidders(b)) {
      const double p = universe.ad(a).find_bid(b)->price;
      auto [it, inserted] = eligible.try_emplace(a, p);
      if (!inserted) it->second = std::max(it->second, p);
    }
  }
  Placement best;
  double best_ecpm = -1.0;
  for (const auto& [a, price] : eligible) {
    const double prop = universe.propensity(q, a);
    const double ecpm = price * prop;
    if (ecpm > best_ecpm) {
      best_ecpm = ecpm;
      best = {true, a, price, prop};
    }
  }
  return best;
}

double lift_of(double control, double treatment) {
  if (control > 0.0) return (treatment - control) / control;
  return treatment > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

nlohmann::ordered_json json_number(double x) {
  if (std::isfinite(x)) return x;
  return x > 0 ? "inf" : (x < 0 ? "-inf" : "nan");
}

}  // namespace

const SliceStats& LiftReport::slice(std::string_view name) const {
  for (const auto& s : slices) {
    if (s.name == name) return s;
  }
  throw InvalidArgument("unknown A/B slice '" + std::string(name) + "'");
}

std::string LiftReport::to_text() const {
  std::ostringstream out;
  out << "slice\trequests\tcontrol_rpm\ttreatment_rpm\tlift\tcontrol_coverage\ttreatment_coverage\n";
  for (const auto& s : slices) {
    out << s.name << '\t' << s.requests << '\t' << io::format_double(rpm_display(s.control_rpm)) << '\t'
        << io::format_double(rpm_display(s.treatment_rpm)) << '\t' << io::format_double(s.lift) << '\t'
        << io::format_double(s.control_coverage) << '\t' << io::format_double(s.treatment_coverage) << '\n';
  }
  return std::move(out).str();
}

std::string LiftReport::to_jsonl() const {
  std::string out;
  for (const auto& s : slices) {
    nlohmann::ordered_json j;
    j["record"] = "lift";
    j["slice"] = s.name;
    j["requests"] = s.requests;
    j["control_rpm"] = rpm_display(s.control_rpm);
    j["treatment_rpm"] = rpm_display(s.treatment_rpm);
    j["lift"] = json_number(s.lift);
    j["control_coverage"] = s.control_coverage;
    j["treatment_coverage"] = s.treatment_coverage;
    out += j.dump() + "\n";
  }
  return out;
}

LiftReport run_ab(const Universe& universe, const Retriever& control, const Retriever& treatment,
                  const AbConfig& config) {
  config.validate();
  const std::size_t n_q = universe.queries.size();
  if (n_q == 0) throw InvalidArgument("run_ab: universe has no queries");

  std::vector<Placement> arm_c(n_q), arm_t(n_q);
  std::vector<double> traffic(n_q);
  std::map<QueryId, double> traffic_map;
  for (std::size_t i = 0; i < n_q; ++i) {
    const QueryId q(i);
    arm_c[i] = auction(universe, q, control(q));
    arm_t[i] = auction(universe, q, treatment(q));
    traffic[i] = universe.query(q).traffic;
    traffic_map[q] = traffic[i];
  }
  const HeadTailSplit split = head_tail_split(traffic_map, config.head_fraction);
  std::vector<bool> is_head(n_q, false);
  for (QueryId q : split.head) is_head[q.index()] = true;

  enum { kHead, kTail, kAll, kHeldOut, kSlices };
  std::vector<SliceStats> s(kSlices);
  s[kHead].name = "head";
  s[kTail].name = "tail";
  s[kAll].name = "head&tail";
  s[kHeldOut].name = "held_out";
  std::vector<std::uint64_t> cov_c(kSlices, 0), cov_t(kSlices, 0);

  DiscreteSampler pick(traffic);
  Rng rng(derive_seed(config.seed, 0xab));
  for (std::uint64_t r = 0; r < config.n_requests; ++r) {
    const std::size_t i = pick(rng);
    const double u = rng.uniform();  // shared by both arms
    const double rev_c = arm_c[i].shown && u < arm_c[i].propensity ? arm_c[i].price : 0.0;
    const double rev_t = arm_t[i].shown && u < arm_t[i].propensity ? arm_t[i].price : 0.0;
    auto add = [&](int slice) {
      SliceStats& st = s[static_cast<std::size_t>(slice)];
      ++st.requests;
      st.control_revenue += rev_c;
      st.treatment_revenue += rev_t;
      cov_c[static_cast<std::size_t>(slice)] += arm_c[i].shown;
      cov_t[static_cast<std::size_t>(slice)] += arm_t[i].shown;
    };
    add(is_head[i] ? kHead : kTail);
    add(kAll);
    if (universe.queries[i].held_out) add(kHeldOut);
  }
  for (std::size_t k = 0; k < s.size(); ++k) {
    SliceStats& st = s[k];
    if (st.requests == 0) continue;
    const double n = static_cast<double>(st.requests);
    st.control_rpm = st.control_revenue / n;
    st.treatment_rpm = st.treatment_revenue / n;
    st.lift = lift_of(st.control_rpm, st.treatment_rpm);
    st.control_coverage = static_cast<double>(cov_c[k]) / n;
    st.treatment_coverage = static_cast<double>(cov_t[k]) / n;
  }
  return LiftReport{std::move(s)};
}

LiftReport run_ab(const Universe& universe, const RewriteTable& control, const ModelParams<float>& treatment,
                  const AbConfig& config) {
  config.validate();
  const Retriever memory = memory_retriever(universe, control, config.top_k);
  const Retriever model = model_retriever(universe, treatment, config.top_k);
  if (config.mode == TreatmentMode::kModelOnly) return run_ab(universe, memory, model, config);
  const Retriever augmented = [&](QueryId q) {
    std::vector<KeywordId> out = memory(q);
    for (KeywordId k : model(q)) {
      if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
    }
    return out;
  };
  return run_ab(universe, memory, augmented, config);
}

// ---------------------------------------------------------------------------------------------

void ProportionalitySpec::validate() const {
  if (n_keywords < 2) throw ConfigError("n_keywords", "must be >= 2");
  if (n_ads < 1) throw ConfigError("n_ads", "must be >= 1");
  if (keywords_per_ad < 2 || keywords_per_ad > n_keywords) {
    throw ConfigError("keywords_per_ad", "must be in [2, n_keywords]");
  }
  if (topic_dim < 2) throw ConfigError("topic_dim", "must be >= 2");
  if (max_clicks_per_ad < 1) throw ConfigError("max_clicks_per_ad", "must be >= 1");
  if (!(threshold > 0.0)) throw ConfigError("threshold", "must be > 0");
}

ProportionalityFixture make_proportionality_fixture(const ProportionalitySpec& spec, std::uint64_t seed,
                                                    bool equal_normalizers) {
  spec.validate();
  Rng rng(seed);
  const int g = spec.topic_dim;
  auto random_unit = [&] {
    std::vector<double> v(static_cast<std::size_t>(g));
    for (double& x : v) x = rng.normal();
    detail::normalize(v);
    return v;
  };

  Universe u;
  u.n_categories = 1;
  u.topic_dim = g;
  u.click_kappa = 4.0;
  const std::vector<double> anchor = random_unit();
  u.words.push_back({"query", CategoryId(0), anchor});
  const int zero_kw = spec.n_keywords - 1;  // points away from the query: relevance 0
  for (int k = 0; k < spec.n_keywords; ++k) {
    std::vector<double> t(anchor.size());
    if (k == zero_kw) {
      for (std::size_t d = 0; d < t.size(); ++d) t[d] = -anchor[d];
    } else {
      const std::vector<double> noise = random_unit();
      for (std::size_t d = 0; d < t.size(); ++d) t[d] = anchor[d] + 0.9 * noise[d];
      detail::normalize(t);
    }
    u.words.push_back({"kw" + std::to_string(k), CategoryId(0), std::move(t)});
    u.keywords.push_back({{WordId(k + 1)}, CategoryId(0)});
  }
  u.queries.push_back({{WordId(0)}, CategoryId(0), 1.0, false, {}});

  for (int j = 0; j < spec.n_ads; ++j) {
    std::vector<std::size_t> pool(static_cast<std::size_t>(spec.n_keywords));
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    rng.shuffle(pool);
    pool.resize(static_cast<std::size_t>(spec.keywords_per_ad));
    // The first ad always carries the zero-relevance keyword. Every other keyword is relevant,
    // so each ad still has a positive normalizer.
    if (j == 0 && std::find(pool.begin(), pool.end(), static_cast<std::size_t>(zero_kw)) == pool.end()) {
      pool.back() = static_cast<std::size_t>(zero_kw);
    }
    std::sort(pool.begin(), pool.end());
    Ad ad;
    ad.category = CategoryId(0);
    ad.topic = random_unit();
    for (std::size_t k : pool) ad.bids.push_back({KeywordId(k), std::exp(0.5 * rng.normal())});
    u.ads.push_back(std::move(ad));
  }
  u.reindex();

  ProportionalityFixture fx;
  fx.query = QueryId(0);
  fx.vectors = pretrained_word_vectors(u, 0.0, 0);

  if (equal_normalizers) {
    for (Ad& ad : u.ads) {
      double z = 0.0;
      for (const Bid& b : ad.bids) {
        z += rpm_score(b.price, relevance(b.keyword, fx.query, u, fx.vectors), u.bidder_count(b.keyword));
      }
      if (!(z > 0.0)) throw InternalError("proportionality fixture: ad without relevant keywords");
      for (Bid& b : ad.bids) b.price /= z;
    }
  }
  u.check_invariants();

  // Each ad is clicked a random number of times; as many unclicked impressions again.
  std::uint64_t rid = 0;
  for (std::size_t j = 0; j < u.ads.size(); ++j) {
    const auto clicks = static_cast<int>(rng.between(1, spec.max_clicks_per_ad));
    for (int c = 0; c < clicks; ++c) {
      fx.log.records.push_back({rid++, fx.query, AdId(j), true});
      fx.log.records.push_back({rid++, fx.query, AdId(j), false});
    }
  }
  fx.universe = std::move(u);
  return fx;
}

ProportionalityResult measure_proportionality(const ProportionalityFixture& fx, std::uint64_t n_draws,
                                              std::uint64_t seed) {
  if (n_draws == 0) throw InvalidArgument("measure_proportionality: n_draws must be > 0");
  const Universe& u = fx.universe;
  const LogAggregates agg = aggregate(fx.log, u);
  const QueryId q = fx.query;

  std::vector<AdId> ads;
  std::vector<double> ad_weights;
  std::vector<DiscreteSampler> per_ad;
  std::vector<std::vector<KeywordId>> per_ad_ids;
  for (AdId a : agg.clicked_ads(q)) {
    ads.push_back(a);
    ad_weights.push_back(static_cast<double>(agg.click_count(a, q)));
    const KeywordDistribution dist = sample_distribution(q, a, u, agg, fx.vectors);
    std::vector<double> w;
    std::vector<KeywordId> ids;
    for (const auto& [k, p] : dist) {
      ids.push_back(k);
      w.push_back(p);
    }
    per_ad.emplace_back(w);
    per_ad_ids.push_back(std::move(ids));
  }
  if (ads.empty()) throw InvalidArgument("measure_proportionality: no clicks for the query");

  std::vector<std::uint64_t> counts(u.keywords.size(), 0);
  DiscreteSampler pick_ad(ad_weights);
  Rng rng(seed);
  for (std::uint64_t i = 0; i < n_draws; ++i) {
    const std::size_t j = pick_ad(rng);
    ++counts[per_ad_ids[j][per_ad[j](rng)].index()];
  }

  ProportionalityResult res;
  res.draws = n_draws;
  std::vector<double> predicted(u.keywords.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < u.keywords.size(); ++k) {
    const KeywordId b(k);
    if (agg.bidders.at(k) == 0) continue;
    const double f = relevance(b, q, u, fx.vectors) / std::log(static_cast<double>(agg.bidders[k]) + 1.0);
    predicted[k] = f * rpm(q, b, agg, u);
    total += predicted[k];
  }
  if (!(total > 0.0)) throw InternalError("measure_proportionality: prediction sums to zero");
  for (std::size_t k = 0; k < u.keywords.size(); ++k) {
    ProportionalityRow row{KeywordId(k), predicted[k] / total,
                           static_cast<double>(counts[k]) / static_cast<double>(n_draws)};
    res.l1 += std::abs(row.predicted - row.empirical);
    res.rows.push_back(row);
  }
  return res;
}

namespace {

void append_rows(std::ostringstream& out, const char* label, const ProportionalityResult& r) {
  out << label << " l1: " << io::format_double(r.l1) << " (draws " << r.draws << ")\n";
  out << "keyword\tpredicted\tempirical\n";
  for (const auto& row : r.rows) {
    out << row.keyword.value << '\t' << io::format_double(row.predicted) << '\t' << io::format_double(row.empirical)
        << '\n';
  }
}

nlohmann::ordered_json rows_json(const ProportionalityResult& r) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"keyword", row.keyword.value}, {"predicted", row.predicted}, {"empirical", row.empirical}});
  }
  return rows;
}

}  // namespace

std::string ProportionalityReport::to_text() const {
  std::ostringstream out;
  append_rows(out, "equal-normalizer", equal);
  append_rows(out, "general", general);
  out << "threshold: " << io::format_double(threshold) << '\n';
  out << "result: " << (passed ? "PASS" : "FAIL") << '\n';
  return std::move(out).str();
}

std::string ProportionalityReport::to_jsonl() const {
  nlohmann::ordered_json j;
  j["record"] = "proportionality";
  j["draws"] = equal.draws;
  j["l1"] = equal.l1;
  j["general_l1"] = general.l1;
  j["threshold"] = threshold;
  j["passed"] = passed;
  j["rows"] = rows_json(equal);
  j["general_rows"] = rows_json(general);
  return j.dump() + "\n";
}

ProportionalityReport verify_proportionality(const ProportionalitySpec& spec, std::uint64_t n_draws,
                                             std::uint64_t seed) {
  ProportionalityReport rep;
  rep.threshold = spec.threshold;
  rep.equal = measure_proportionality(make_proportionality_fixture(spec, seed, true), n_draws, derive_seed(seed, 1));
  rep.general = measure_proportionality(make_proportionality_fixture(spec, seed, false), n_draws, derive_seed(seed, 2));
  rep.passed = rep.equal.l1 < rep.threshold;
  return rep;
}

}  // namespace rqrf
