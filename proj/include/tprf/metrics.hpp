#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tprf/dense_index.hpp"
#include "tprf/vector_store.hpp"

namespace tprf {

// Evaluation conventions. nDCG always uses raw grades; MAP/RR/Recall
// binarize at grade >= binarize_min_grade (TREC DL passage default 2).
// Linear DCG gain by default, 2^rel - 1 behind the switch.
struct EvalOptions {
  int binarize_min_grade = 2;
  bool exponential_gain = false;
};

// Per-query metric primitives. `ranking` is the ranked passage id list;
// `judgments` maps passage id -> grade for one query. Queries that have
// no passage counting as relevant under the metric's convention carry
// no signal and are skipped by the aggregate layer (std::nullopt).
std::optional<double> ndcg_at(std::span<const std::string> ranking,
                              const std::unordered_map<std::string, int>& judgments,
                              size_t cutoff, const EvalOptions& opts = {});
std::optional<double> average_precision(std::span<const std::string> ranking,
                                        const std::unordered_map<std::string, int>& judgments,
                                        const EvalOptions& opts = {});
std::optional<double> reciprocal_rank(std::span<const std::string> ranking,
                                      const std::unordered_map<std::string, int>& judgments,
                                      const EvalOptions& opts = {});
std::optional<double> recall_at(std::span<const std::string> ranking,
                                const std::unordered_map<std::string, int>& judgments,
                                size_t cutoff, const EvalOptions& opts = {});

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  bool degenerate = false;  // zero variance in the differences
};

// Paired two-tailed t-test: t = mean(d) / (sd(d)/sqrt(n)) with sample
// sd; p from the t distribution with n-1 dof.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

// p' = min(1, m * p) per entry.
std::vector<double> bonferroni(std::span<const double> p_values, size_t m_comparisons);

// Regularized incomplete beta I_x(a, b), exposed for verification.
double regularized_incomplete_beta(double a, double b, double x);
// Two-tailed p-value for a t statistic with `dof` degrees of freedom.
double student_t_two_tailed_p(double t, double dof);

// Ranked results for a set of queries plus the run tag.
struct RunFile {
  std::string tag;
  std::vector<ScoredList> results;
};

// TREC exchange formats. Run lines: `qid Q0 docid rank score tag`;
// qrels lines: `qid 0 docid grade`. Whitespace-separated.
void write_run(const RunFile& run, const std::string& path);
RunFile read_run(const std::string& path);
void write_qrels(const Qrels& qrels, const std::string& path);
Qrels read_qrels(const std::string& path);

// The §-style metric family reported by evaluation commands, in fixed
// column order.
inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {
      "MAP", "RR", "R@1000", "nDCG@1", "nDCG@3", "nDCG@10", "nDCG@100"};
  return names;
}

struct MetricReport {
  std::string tag;
  // metric name -> per-query values (only queries carrying signal).
  std::map<std::string, std::map<std::string, double>> per_query;
  std::map<std::string, double> means;
  // Queries excluded from every mean: unjudged or all-zero grades.
  size_t skipped_queries = 0;
  // Present when compared against a baseline run.
  std::map<std::string, double> p_values;           // Bonferroni-adjusted
  std::map<std::string, bool> significant;          // p < 0.05
  std::map<std::string, bool> degenerate;
};

// Evaluates a run against qrels over the full metric family.
MetricReport evaluate_run(const RunFile& run, const Qrels& qrels,
                          const EvalOptions& opts = {});

// Adds Bonferroni-adjusted paired t-tests of `report` vs `baseline`
// (pairing on queries scored by both). Throws if the query sets are
// disjoint for any metric.
void attach_significance(MetricReport& report, const MetricReport& baseline);

}  // namespace tprf
