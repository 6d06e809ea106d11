#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rqrf/corpus.hpp"
#include "rqrf/model.hpp"

namespace rqrf {

/// Raw RPM(q,b) = sum_j price(a_j,b) * click(a_j,q) / request(q). Multiply by 1000 for display.
double rpm(QueryId q, KeywordId b, const LogAggregates& agg, const Universe& universe);

inline double rpm_display(double raw) { return raw * 1000.0; }

/// Exact-match memory rewriter: query text -> keywords of clicked ads ranked by
/// sum price(b|a) * click(a,q), descending, ties by keyword id.
class RewriteTable {
 public:
  struct Entry {
    KeywordId keyword;
    double weighted_clicks = 0.0;
    std::uint64_t clicks = 0;
  };

  /// Empty for queries never clicked in the training log.
  std::span<const Entry> lookup(std::string_view query_text) const;
  std::size_t size() const { return table_.size(); }

  friend RewriteTable build_memory_baseline(const ClickLog& log, const Universe& universe);

 private:
  std::map<std::string, std::vector<Entry>, std::less<>> table_;
};

RewriteTable build_memory_baseline(const ClickLog& log, const Universe& universe);

/// How the treatment arm retrieves: model rewrites alone, or model rewrites added to the
/// memory table's (the way a new rewriter is normally introduced next to an incumbent).
enum class TreatmentMode { kModelOnly, kAugment };

struct AbConfig {
  std::uint64_t n_requests = 100000;
  int top_k = 5;
  double head_fraction = 0.8;  // head = top queries carrying this share of traffic
  std::uint64_t seed = 7;
  TreatmentMode mode = TreatmentMode::kAugment;

  void validate() const;
};

struct SliceStats {
  std::string name;
  std::uint64_t requests = 0;
  double control_revenue = 0.0;
  double treatment_revenue = 0.0;
  double control_rpm = 0.0;  // raw revenue per request
  double treatment_rpm = 0.0;
  double lift = 0.0;  // (treatment - control) / control; +inf when control earns nothing
  double control_coverage = 0.0;
  double treatment_coverage = 0.0;
};

/// Per-slice A/B outcome. Slices "head" and "tail" partition traffic, "head&tail" is all of
/// it, and "held_out" is the part of the tail never seen in training logs.
struct LiftReport {
  std::vector<SliceStats> slices;

  const SliceStats& slice(std::string_view name) const;
  std::string to_text() const;
  std::string to_jsonl() const;
};

using Retriever = std::function<std::vector<KeywordId>(QueryId)>;

/// Paired simulation: both arms see the same query draws and the same click uniforms. Each arm
/// shows the eCPM-max ad among ads bidding its retrieved keywords and earns its bid on a click.
LiftReport run_ab(const Universe& universe, const Retriever& control, const Retriever& treatment,
                  const AbConfig& config);

LiftReport run_ab(const Universe& universe, const RewriteTable& control, const ModelParams<float>& treatment,
                  const AbConfig& config);

/// Top-k memory rewrites for a query.
Retriever memory_retriever(const Universe& universe, const RewriteTable& table, int top_k);

/// Top-k model rewrites among the query's category keywords.
Retriever model_retriever(const Universe& universe, const ModelParams<float>& model, int top_k);

// ---------------------------------------------------------------------------------------------
// Proportionality check of the RPM-oriented sampler.

struct ProportionalitySpec {
  int n_keywords = 10;
  int n_ads = 5;
  int keywords_per_ad = 4;
  int topic_dim = 8;
  int max_clicks_per_ad = 50;
  double threshold = 0.02;

  void validate() const;
};

/// A one-query marketplace with its pretrained vectors and click log.
struct ProportionalityFixture {
  Universe universe;
  WordVecTable vectors;
  ClickLog log;
  QueryId query;
};

/// Builds the fixture. With `equal_normalizers`, each ad's prices are rescaled so that
/// sum_{b in B(a)} score(b|q,a) is the same for every ad. One keyword has zero relevance.
ProportionalityFixture make_proportionality_fixture(const ProportionalitySpec& spec, std::uint64_t seed,
                                                    bool equal_normalizers);

struct ProportionalityRow {
  KeywordId keyword;
  double predicted = 0.0;  // normalized f(b,q) * RPM(q,b)
  double empirical = 0.0;  // share of positive draws
};

struct ProportionalityResult {
  std::vector<ProportionalityRow> rows;
  double l1 = 0.0;
  std::uint64_t draws = 0;
};

/// Draws `n_draws` positives (clicked record proportional to clicks, then p(b|a,q)) and compares
/// their frequencies with the normalized f * RPM prediction.
ProportionalityResult measure_proportionality(const ProportionalityFixture& fixture, std::uint64_t n_draws,
                                              std::uint64_t seed);

struct ProportionalityReport {
  ProportionalityResult equal;    // asserted against the threshold
  ProportionalityResult general;  // unequal normalizers, reported only
  double threshold = 0.02;
  bool passed = false;

  std::string to_text() const;
  std::string to_jsonl() const;
};

ProportionalityReport verify_proportionality(const ProportionalitySpec& spec, std::uint64_t n_draws,
                                             std::uint64_t seed);

}  // namespace rqrf
