#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rqrf/corpus.hpp"
#include "rqrf/model.hpp"

namespace rqrf {

/// A held-out query with the keywords its clicked ads bought.
struct EvalCase {
  QueryId query;
  CategoryId category;
  std::vector<KeywordId> relevant;  // sorted, unique
};

/// One case per query with at least one click in `log`; relevant = union of B(a) over clicked ads.
std::vector<EvalCase> build_eval_cases(const ClickLog& log, const Universe& universe);

struct RankedKeyword {
  KeywordId keyword;
  double cosine = 0.0;
};

/// Keyword vectors of one category, row i belongs to ids[i].
struct CategoryIndex {
  std::vector<KeywordId> ids;
  Matrix<float> vectors;
};

/// Keyword-tower embeddings of every keyword, grouped by category. Computed once per model.
class KeywordIndex {
 public:
  static KeywordIndex build(const ModelParams<float>& model, const Universe& universe, const TokenizedCorpus& texts);

  const CategoryIndex& category(CategoryId c) const { return categories_.at(c.index()); }
  std::size_t category_count() const { return categories_.size(); }

 private:
  std::vector<CategoryIndex> categories_;
};

/// Brute-force cosine ranking, descending; ties by ascending keyword id.
std::vector<RankedKeyword> rank_candidates(const Vector<float>& query_vec, const CategoryIndex& index);

// Binary-relevance ranking metrics over a full ranked list. Relevant items missing from the
// ranking contribute zero.
double metric_map(std::span<const KeywordId> ranked, std::span<const KeywordId> relevant);
double metric_mrr(std::span<const KeywordId> ranked, std::span<const KeywordId> relevant);
double metric_ndcg(std::span<const KeywordId> ranked, std::span<const KeywordId> relevant);

/// -ln softmax(gamma * cosine)[positive] over the candidate list.
double metric_nll(KeywordId positive, std::span<const RankedKeyword> candidates, double gamma);

struct CaseMetrics {
  double nll = 0.0;
  double map = 0.0;
  double mrr = 0.0;
  double ndcg = 0.0;
};

struct MetricsReport {
  double nll = 0.0;
  double map = 0.0;
  double mrr = 0.0;
  double ndcg = 0.0;
  std::size_t cases = 0;

  std::string to_text() const;
  std::string to_jsonl() const;
};

/// Per-case metrics in case order.
std::vector<CaseMetrics> evaluate_cases(const ModelParams<float>& model, std::span<const EvalCase> cases,
                                        const Universe& universe);

/// Averages per-case metrics in case-id order, so case order does not affect the bits.
MetricsReport summarize(std::span<const EvalCase> cases, std::span<const CaseMetrics> metrics);

MetricsReport evaluate(const ModelParams<float>& model, std::span<const EvalCase> cases, const Universe& universe);

struct PairedTTest {
  double mean_difference = 0.0;
  double t_statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;

  bool significant(double alpha) const { return p_value < alpha; }
};

/// Two-tailed paired t-test on a[i] - b[i].
PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace rqrf
