#include "tprf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tprf/errors.hpp"

namespace tprf {

namespace {

double gain_of(int grade, const EvalOptions& opts) {
  if (grade <= 0) return 0.0;
  return opts.exponential_gain ? std::pow(2.0, grade) - 1.0 : static_cast<double>(grade);
}

bool is_relevant(int grade, const EvalOptions& opts) {
  return grade >= opts.binarize_min_grade;
}

size_t count_relevant(const std::unordered_map<std::string, int>& judgments,
                      const EvalOptions& opts) {
  size_t n = 0;
  for (const auto& [id, grade] : judgments)
    if (is_relevant(grade, opts)) ++n;
  return n;
}

int lookup_grade(const std::unordered_map<std::string, int>& judgments, const std::string& id) {
  auto it = judgments.find(id);
  return it == judgments.end() ? 0 : it->second;  // unjudged counts as grade 0
}

}  // namespace

std::optional<double> ndcg_at(std::span<const std::string> ranking,
                              const std::unordered_map<std::string, int>& judgments,
                              size_t cutoff, const EvalOptions& opts) {
  if (cutoff == 0) throw_validation("cutoff must be >= 1");
  std::vector<double> ideal_gains;
  ideal_gains.reserve(judgments.size());
  for (const auto& [id, grade] : judgments) {
    const double gn = gain_of(grade, opts);
    if (gn > 0.0) ideal_gains.push_back(gn);
  }
  if (ideal_gains.empty()) return std::nullopt;  // no positive grades: no signal
  std::sort(ideal_gains.begin(), ideal_gains.end(), std::greater<>());

  double dcg = 0.0;
  const size_t depth = std::min(cutoff, ranking.size());
  for (size_t i = 0; i < depth; ++i)
    dcg += gain_of(lookup_grade(judgments, ranking[i]), opts) / std::log2(i + 2.0);

  double idcg = 0.0;
  for (size_t i = 0; i < std::min(cutoff, ideal_gains.size()); ++i)
    idcg += ideal_gains[i] / std::log2(i + 2.0);
  return dcg / idcg;
}

std::optional<double> average_precision(std::span<const std::string> ranking,
                                        const std::unordered_map<std::string, int>& judgments,
                                        const EvalOptions& opts) {
  const size_t total_relevant = count_relevant(judgments, opts);
  if (total_relevant == 0) return std::nullopt;
  size_t hits = 0;
  double sum = 0.0;
  for (size_t i = 0; i < ranking.size(); ++i) {
    if (is_relevant(lookup_grade(judgments, ranking[i]), opts)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(total_relevant);
}

std::optional<double> reciprocal_rank(std::span<const std::string> ranking,
                                      const std::unordered_map<std::string, int>& judgments,
                                      const EvalOptions& opts) {
  if (count_relevant(judgments, opts) == 0) return std::nullopt;
  for (size_t i = 0; i < ranking.size(); ++i)
    if (is_relevant(lookup_grade(judgments, ranking[i]), opts))
      return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

std::optional<double> recall_at(std::span<const std::string> ranking,
                                const std::unordered_map<std::string, int>& judgments,
                                size_t cutoff, const EvalOptions& opts) {
  if (cutoff == 0) throw_validation("cutoff must be >= 1");
  const size_t total_relevant = count_relevant(judgments, opts);
  if (total_relevant == 0) return std::nullopt;
  size_t found = 0;
  const size_t depth = std::min(cutoff, ranking.size());
  for (size_t i = 0; i < depth; ++i)
    if (is_relevant(lookup_grade(judgments, ranking[i]), opts)) ++found;
  return static_cast<double>(found) / static_cast<double>(total_relevant);
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0) throw_validation("incomplete beta argument outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;

  // Continued fraction (modified Lentz); converges fastest for
  // x < (a+1)/(a+b+2), otherwise use the symmetry relation.
  auto contfrac = [](double a_, double b_, double x_) {
    constexpr double tiny = 1e-300;
    constexpr int max_iter = 500;
    double c = 1.0;
    double d = 1.0 - (a_ + b_) * x_ / (a_ + 1.0);
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
      const double m2 = 2.0 * m;
      double num = m * (b_ - m) * x_ / ((a_ + m2 - 1.0) * (a_ + m2));
      d = 1.0 + num * d;
      if (std::fabs(d) < tiny) d = tiny;
      c = 1.0 + num / c;
      if (std::fabs(c) < tiny) c = tiny;
      d = 1.0 / d;
      h *= d * c;
      num = -(a_ + m) * (a_ + b_ + m) * x_ / ((a_ + m2) * (a_ + m2 + 1.0));
      d = 1.0 + num * d;
      if (std::fabs(d) < tiny) d = tiny;
      c = 1.0 + num / c;
      if (std::fabs(c) < tiny) c = tiny;
      d = 1.0 / d;
      const double delta = d * c;
      h *= delta;
      if (std::fabs(delta - 1.0) < 1e-15) break;
    }
    return h;
  };

  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * contfrac(a, b, x) / a;
  return 1.0 - front * contfrac(b, a, 1.0 - x) / b;
}

double student_t_two_tailed_p(double t, double dof) {
  if (dof <= 0.0) throw_validation("degrees of freedom must be positive");
  if (!std::isfinite(t)) return 0.0;
  // P(|T| > t) = I_{dof/(dof + t^2)}(dof/2, 1/2)
  const double x = dof / (dof + t * t);
  return regularized_incomplete_beta(dof / 2.0, 0.5, x);
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw_validation("paired samples must have equal length");
  const size_t n = a.size();
  if (n < 2) throw_validation("paired t-test needs at least 2 pairs");

  double mean = 0.0;
  for (size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double c = (a[i] - b[i]) - mean;
    ss += c * c;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult r;
  if (sd == 0.0) {
    // Identical differences everywhere: the test statistic is undefined.
    r.degenerate = true;
    r.t = 0.0;
    r.p = mean == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p = student_t_two_tailed_p(r.t, static_cast<double>(n - 1));
  return r;
}

std::vector<double> bonferroni(std::span<const double> p_values, size_t m_comparisons) {
  std::vector<double> out;
  out.reserve(p_values.size());
  for (double p : p_values) out.push_back(std::min(1.0, p * static_cast<double>(m_comparisons)));
  return out;
}

void write_run(const RunFile& run, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorKind::Validation, "cannot open '" + path + "' for writing");
  char buf[352];  // %.6f of DBL_MAX needs ~317 chars
  for (const auto& result : run.results) {
    if (result.query_id.find_first_of(" \t\n") != std::string::npos)
      throw_validation("query id contains whitespace: not representable in run format");
    for (size_t i = 0; i < result.items.size(); ++i) {
      const auto& item = result.items[i];
      if (item.passage_id.find_first_of(" \t\n") != std::string::npos)
        throw_validation("passage id contains whitespace: not representable in run format");
      if (i > 0 && item.score > result.items[i - 1].score)
        throw_validation("scores must be non-increasing with rank (query '" +
                         result.query_id + "')");
      std::snprintf(buf, sizeof(buf), "%.6f", item.score);
      os << result.query_id << " Q0 " << item.passage_id << ' ' << (i + 1) << ' ' << buf
         << ' ' << run.tag << '\n';
    }
  }
  if (!os) throw Error(ErrorKind::Validation, "write failed for '" + path + "'");
}

RunFile read_run(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Validation, "cannot open '" + path + "'");
  RunFile run;
  ScoredList* current = nullptr;
  std::string line;
  size_t line_no = 0;
  size_t expected_rank = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string qid, q0, docid, tag;
    size_t rank = 0;
    double score = 0.0;
    if (!(ss >> qid >> q0 >> docid >> rank >> score >> tag))
      throw_parse("run line " + std::to_string(line_no) + ": expected 6 fields");
    if (run.tag.empty()) run.tag = tag;
    if (current == nullptr || current->query_id != qid) {
      // New query block; reject interleaved or repeated blocks.
      for (const auto& r : run.results)
        if (r.query_id == qid)
          throw_parse("run line " + std::to_string(line_no) + ": query '" + qid +
                      "' appears in two separate blocks");
      run.results.push_back({qid, {}});
      current = &run.results.back();
      expected_rank = 1;
    }
    if (rank != expected_rank)
      throw_parse("run line " + std::to_string(line_no) + ": rank " + std::to_string(rank) +
                  " breaks 1..n contiguity");
    if (!current->items.empty() && score > current->items.back().score)
      throw_parse("run line " + std::to_string(line_no) + ": scores increase with rank");
    current->items.push_back({docid, score});
    ++expected_rank;
  }
  return run;
}

void write_qrels(const Qrels& qrels, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorKind::Validation, "cannot open '" + path + "' for writing");
  // Sorted output keeps the file diffable and writes deterministic.
  std::vector<std::pair<std::string, std::string>> keys;
  keys.reserve(qrels.size());
  for (const auto& [qid, docs] : qrels.all())
    for (const auto& [pid, grade] : docs) keys.emplace_back(qid, pid);
  std::sort(keys.begin(), keys.end());
  for (const auto& [qid, pid] : keys)
    os << qid << " 0 " << pid << ' ' << qrels.grade(qid, pid) << '\n';
  if (!os) throw Error(ErrorKind::Validation, "write failed for '" + path + "'");
}

Qrels read_qrels(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Validation, "cannot open '" + path + "'");
  Qrels qrels;
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string qid, iteration, docid;
    long grade = 0;
    if (!(ss >> qid >> iteration >> docid >> grade))
      throw_parse("qrels line " + std::to_string(line_no) + ": expected 4 fields");
    if (grade < 0)
      throw_parse("qrels line " + std::to_string(line_no) + ": negative grade");
    qrels.add(qid, docid, static_cast<int>(grade));
  }
  return qrels;
}

MetricReport evaluate_run(const RunFile& run, const Qrels& qrels, const EvalOptions& opts) {
  MetricReport report;
  report.tag = run.tag;
  for (const auto& result : run.results) {
    const auto* judgments = qrels.judgments(result.query_id);
    if (judgments == nullptr) {
      ++report.skipped_queries;
      continue;
    }
    bool any_positive = false;
    for (const auto& [pid, grade] : *judgments) any_positive = any_positive || grade > 0;
    if (!any_positive) {
      ++report.skipped_queries;
      continue;
    }
    std::vector<std::string> ranking;
    ranking.reserve(result.items.size());
    for (const auto& item : result.items) ranking.push_back(item.passage_id);

    auto put = [&](const std::string& name, std::optional<double> v) {
      if (v) report.per_query[name][result.query_id] = *v;
    };
    put("MAP", average_precision(ranking, *judgments, opts));
    put("RR", reciprocal_rank(ranking, *judgments, opts));
    put("R@1000", recall_at(ranking, *judgments, 1000, opts));
    put("nDCG@1", ndcg_at(ranking, *judgments, 1, opts));
    put("nDCG@3", ndcg_at(ranking, *judgments, 3, opts));
    put("nDCG@10", ndcg_at(ranking, *judgments, 10, opts));
    put("nDCG@100", ndcg_at(ranking, *judgments, 100, opts));
  }
  for (const auto& name : metric_names()) {
    const auto it = report.per_query.find(name);
    if (it == report.per_query.end() || it->second.empty()) {
      report.means[name] = 0.0;
      continue;
    }
    double sum = 0.0;
    for (const auto& [qid, v] : it->second) sum += v;
    report.means[name] = sum / static_cast<double>(it->second.size());
  }
  return report;
}

void attach_significance(MetricReport& report, const MetricReport& baseline) {
  std::vector<double> raw_p;
  std::vector<std::string> with_test;
  std::vector<bool> degenerate_flags;
  for (const auto& name : metric_names()) {
    const auto a_it = report.per_query.find(name);
    const auto b_it = baseline.per_query.find(name);
    if (a_it == report.per_query.end() || b_it == baseline.per_query.end()) continue;
    std::vector<double> a, b;
    for (const auto& [qid, v] : a_it->second) {
      const auto f = b_it->second.find(qid);
      if (f != b_it->second.end()) {
        a.push_back(v);
        b.push_back(f->second);
      }
    }
    if (a.empty()) {
      std::string sample;
      for (const auto& [qid, v] : a_it->second) {
        sample += sample.empty() ? qid : ", " + qid;
        if (sample.size() > 60) break;
      }
      throw_validation("no common queries between runs for metric " + name +
                       " (run has: " + sample + ")");
    }
    if (a.size() < 2) continue;  // cannot test on a single pair
    const TTestResult t = paired_ttest(a, b);
    raw_p.push_back(t.p);
    with_test.push_back(name);
    degenerate_flags.push_back(t.degenerate);
  }
  const auto adjusted = bonferroni(raw_p, metric_names().size());
  for (size_t i = 0; i < with_test.size(); ++i) {
    report.p_values[with_test[i]] = adjusted[i];
    report.significant[with_test[i]] = adjusted[i] < 0.05 && !degenerate_flags[i];
    report.degenerate[with_test[i]] = degenerate_flags[i];
  }
}

}  // namespace tprf
