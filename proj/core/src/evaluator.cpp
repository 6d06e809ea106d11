#include "rqrf/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "rqrf/error.hpp"
#include "rqrf/io.hpp"

namespace rqrf {

namespace {

bool contains(std::span<const KeywordId> sorted_set, KeywordId k) {
  return std::binary_search(sorted_set.begin(), sorted_set.end(), k);
}

std::vector<KeywordId> sorted_unique(std::span<const KeywordId> ids) {
  std::vector<KeywordId> out(ids.begin(), ids.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void require_relevant(std::span<const KeywordId> relevant) {
  if (relevant.empty()) throw InvalidArgument("ranking metric: relevant set is empty");
}

}  // namespace

std::vector<EvalCase> build_eval_cases(const ClickLog& log, const Universe& universe) {
  std::map<QueryId, std::set<KeywordId>> relevant;
  for (const ClickRecord& r : log.records) {
    if (r.query.index() >= universe.queries.size() || r.ad.index() >= universe.ads.size()) {
      throw ArtifactError("eval log references ids outside the universe");
    }
    if (!r.clicked) continue;
    auto& set = relevant[r.query];
    for (const Bid& b : universe.ad(r.ad).bids) set.insert(b.keyword);
  }
  std::vector<EvalCase> cases;
  for (auto& [q, set] : relevant) {
    cases.push_back({q, universe.query(q).category, std::vector<KeywordId>(set.begin(), set.end())});
  }
  return cases;
}

KeywordIndex KeywordIndex::build(const ModelParams<float>& model, const Universe& universe,
                                 const TokenizedCorpus& texts) {
  KeywordIndex index;
  index.categories_.resize(static_cast<std::size_t>(universe.n_categories));
  for (int c = 0; c < universe.n_categories; ++c) {
    CategoryIndex& ci = index.categories_[static_cast<std::size_t>(c)];
    ci.ids = universe.keywords_in(CategoryId(c));
    ci.vectors.resize(static_cast<Eigen::Index>(ci.ids.size()), model.config.tower.out_dim);
    for (std::size_t i = 0; i < ci.ids.size(); ++i) {
      ci.vectors.row(static_cast<Eigen::Index>(i)) = encode(texts.keywords.at(ci.ids[i].index()), model.keyword).transpose();
    }
  }
  return index;
}

std::vector<RankedKeyword> rank_candidates(const Vector<float>& query_vec, const CategoryIndex& index) {
  if (index.ids.empty()) throw InvalidArgument("rank_candidates: empty category index");
  if (index.vectors.cols() != query_vec.size()) throw InternalError("rank_candidates: dimension mismatch");
  const Vector<double> q = query_vec.cast<double>();
  const double qn = q.norm();
  std::vector<RankedKeyword> ranked;
  ranked.reserve(index.ids.size());
  for (std::size_t i = 0; i < index.ids.size(); ++i) {
    const Vector<double> k = index.vectors.row(static_cast<Eigen::Index>(i)).transpose().cast<double>();
    const double denom = qn * k.norm();
    ranked.push_back({index.ids[i], denom > 0.0 ? q.dot(k) / denom : 0.0});
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedKeyword& a, const RankedKeyword& b) {
    if (a.cosine != b.cosine) return a.cosine > b.cosine;
    return a.keyword < b.keyword;
  });
  return ranked;
}

double metric_map(std::span<const KeywordId> ranked, std::span<const KeywordId> relevant) {
  require_relevant(relevant);
  const auto rel = sorted_unique(relevant);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (!contains(rel, ranked[i])) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(rel.size());
}

double metric_mrr(std::span<const KeywordId> ranked, std::span<const KeywordId> relevant) {
  require_relevant(relevant);
  const auto rel = sorted_unique(relevant);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (contains(rel, ranked[i])) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

double metric_ndcg(std::span<const KeywordId> ranked, std::span<const KeywordId> relevant) {
  require_relevant(relevant);
  const auto rel = sorted_unique(relevant);
  double dcg = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (contains(rel, ranked[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  double idcg = 0.0;
  for (std::size_t i = 0; i < rel.size(); ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

double metric_nll(KeywordId positive, std::span<const RankedKeyword> candidates, double gamma) {
  double pos_logit = 0.0;
  bool found = false;
  double max_logit = -std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) {
    max_logit = std::max(max_logit, gamma * c.cosine);
    if (c.keyword == positive) {
      pos_logit = gamma * c.cosine;
      found = true;
    }
  }
  if (!found) throw InvalidArgument("metric_nll: positive keyword is not among the candidates");
  double sum = 0.0;
  for (const auto& c : candidates) sum += std::exp(gamma * c.cosine - max_logit);
  return std::max(0.0, max_logit + std::log(sum) - pos_logit);
}

std::string MetricsReport::to_text() const {
  std::ostringstream out;
  out << "cases: " << cases << '\n'
      << "nll: " << io::format_double(nll) << '\n'
      << "map: " << io::format_double(map) << '\n'
      << "mrr: " << io::format_double(mrr) << '\n'
      << "ndcg: " << io::format_double(ndcg) << '\n';
  return std::move(out).str();
}

std::string MetricsReport::to_jsonl() const {
  nlohmann::ordered_json j;
  j["record"] = "metrics";
  j["cases"] = cases;
  j["nll"] = nll;
  j["map"] = map;
  j["mrr"] = mrr;
  j["ndcg"] = ndcg;
  return j.dump() + "\n";
}

std::vector<CaseMetrics> evaluate_cases(const ModelParams<float>& model, std::span<const EvalCase> cases,
                                        const Universe& universe) {
  const TokenizedCorpus texts = TokenizedCorpus::build(universe, model.vocab, model.config.tower);
  const KeywordIndex index = KeywordIndex::build(model, universe, texts);
  std::vector<CaseMetrics> out;
  out.reserve(cases.size());
  std::vector<KeywordId> ids;
  for (const EvalCase& c : cases) {
    if (c.query.index() >= universe.queries.size()) throw ArtifactError("eval case references unknown query");
    const Vector<float> q = encode(texts.queries[c.query.index()], model.query);
    const auto ranked = rank_candidates(q, index.category(c.category));
    ids.clear();
    for (const auto& r : ranked) ids.push_back(r.keyword);
    CaseMetrics m;
    m.map = metric_map(ids, c.relevant);
    m.mrr = metric_mrr(ids, c.relevant);
    m.ndcg = metric_ndcg(ids, c.relevant);
    for (KeywordId k : c.relevant) m.nll += metric_nll(k, ranked, model.config.gamma);
    m.nll /= static_cast<double>(c.relevant.size());
    out.push_back(m);
  }
  return out;
}

MetricsReport summarize(std::span<const EvalCase> cases, std::span<const CaseMetrics> metrics) {
  if (cases.empty()) throw InvalidArgument("evaluate: no eval cases");
  std::vector<std::size_t> order(cases.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (cases[a].query != cases[b].query) return cases[a].query < cases[b].query;
    return cases[a].relevant < cases[b].relevant;
  });
  MetricsReport r;
  for (std::size_t i : order) {
    r.nll += metrics[i].nll;
    r.map += metrics[i].map;
    r.mrr += metrics[i].mrr;
    r.ndcg += metrics[i].ndcg;
  }
  const double n = static_cast<double>(cases.size());
  r.nll /= n;
  r.map /= n;
  r.mrr /= n;
  r.ndcg /= n;
  r.cases = cases.size();
  return r;
}

MetricsReport evaluate(const ModelParams<float>& model, std::span<const EvalCase> cases, const Universe& universe) {
  if (cases.empty()) throw InvalidArgument("evaluate: no eval cases");
  const auto metrics = evaluate_cases(model, cases, universe);
  return summarize(cases, metrics);
}

PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("paired_t_test: samples differ in length");
  if (a.size() < 2) throw InvalidArgument("paired_t_test: need at least two pairs");
  PairedTTest t;
  t.n = a.size();
  const double n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  t.mean_difference = mean;
  const double se = std::sqrt(ss / (n - 1.0) / n);
  if (!(se > 0.0)) {
    t.t_statistic = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    t.p_value = mean == 0.0 ? 1.0 : 0.0;
    return t;
  }
  t.t_statistic = mean / se;
  const boost::math::students_t dist(n - 1.0);
  t.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t.t_statistic)));
  return t;
}

}  // namespace rqrf
