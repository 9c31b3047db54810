#include "tprf/pipeline.hpp"

#include <cstdio>
#include <sstream>

#include "tprf/dense_index.hpp"
#include "tprf/errors.hpp"

namespace tprf {

PrfMethod parse_prf_method(const std::string& name) {
  if (name == "none") return PrfMethod::None;
  if (name == "avg") return PrfMethod::Average;
  if (name == "rocchio") return PrfMethod::Rocchio;
  if (name == "tprf") return PrfMethod::Tprf;
  throw_config("unknown feedback method '" + name + "' (expected none|avg|rocchio|tprf)");
}

std::string prf_method_name(PrfMethod method) {
  switch (method) {
    case PrfMethod::None: return "none";
    case PrfMethod::Average: return "avg";
    case PrfMethod::Rocchio: return "rocchio";
    case PrfMethod::Tprf: return "tprf";
  }
  return "?";
}

void PipelineConfig::validate() const {
  if (corpus_path.empty() || queries_path.empty())
    throw_config("corpus and queries paths are required");
  if (method == PrfMethod::Tprf && checkpoint_path.empty())
    throw_config("method tprf requires a checkpoint");
  if (method != PrfMethod::None && k == 0)
    throw_config("feedback depth k must be >= 1 for feedback methods");
  if (final_k == 0) throw_config("final_k must be >= 1");
  if (method == PrfMethod::Rocchio) rocchio.validate();
}

std::vector<float> rewrite_query(const VectorStore& corpus, std::span<const float> query,
                                 PrfMethod method, uint32_t k, const RocchioParams& rocchio,
                                 const Parameters* params) {
  if (method == PrfMethod::None)
    return std::vector<float>(query.begin(), query.end());

  const ScoredList first = search(corpus, query, k);
  std::vector<std::span<const float>> feedback;
  feedback.reserve(first.items.size());
  for (const auto& item : first.items)
    feedback.push_back(corpus.row(static_cast<size_t>(corpus.find(item.passage_id))));

  switch (method) {
    case PrfMethod::Average:
      return average_prf(query, feedback);
    case PrfMethod::Rocchio:
      return rocchio_prf(query, feedback, rocchio);
    case PrfMethod::Tprf: {
      if (params == nullptr) throw_config("method tprf requires model parameters");
      return encode(query, feedback, *params);
    }
    default:
      throw_config("unreachable feedback method");
  }
}

RunFile run_search(const VectorStore& corpus, const VectorStore& queries,
                   PrfMethod method, uint32_t k, uint32_t final_k,
                   const RocchioParams& rocchio, const Parameters* params,
                   const std::string& tag) {
  if (queries.dim() != corpus.dim())
    throw_validation("query store dimension does not match corpus dimension");
  if (method == PrfMethod::Tprf) {
    if (params == nullptr) throw_config("method tprf requires model parameters");
    if (params->config.model_dim != corpus.dim())
      throw_validation("checkpoint model_dim " + std::to_string(params->config.model_dim) +
                       " does not match store dimension " + std::to_string(corpus.dim()));
  }
  RunFile run;
  run.tag = tag.empty() ? prf_method_name(method) : tag;
  run.results.reserve(queries.size());
  for (size_t qi = 0; qi < queries.size(); ++qi) {
    const std::vector<float> q =
        rewrite_query(corpus, queries.row(qi), method, k, rocchio, params);
    run.results.push_back(search(corpus, q, final_k, queries.id(qi)));
  }
  return run;
}

RunFile run_search(const PipelineConfig& cfg) {
  cfg.validate();
  const VectorStore corpus = load_store(cfg.corpus_path);
  const VectorStore queries = load_store(cfg.queries_path);
  std::optional<Parameters> params;
  if (cfg.method == PrfMethod::Tprf) params = load_checkpoint(cfg.checkpoint_path);
  RunFile run = run_search(corpus, queries, cfg.method, cfg.k, cfg.final_k, cfg.rocchio,
                           params ? &*params : nullptr, cfg.tag);
  if (!cfg.run_path.empty()) write_run(run, cfg.run_path);
  return run;
}

namespace {

std::string render_table(const MetricReport& report, const MetricReport* baseline) {
  std::ostringstream os;
  os << "metric";
  for (const auto& name : metric_names()) os << '\t' << name;
  os << '\n';

  auto row = [&os](const std::string& label, const MetricReport& r,
                   const MetricReport* sig_source) {
    os << label;
    char buf[32];
    for (const auto& name : metric_names()) {
      std::snprintf(buf, sizeof(buf), "%.4f", r.means.count(name) ? r.means.at(name) : 0.0);
      os << '\t' << buf;
      if (sig_source && sig_source->significant.count(name) &&
          sig_source->significant.at(name))
        os << '*';
    }
    os << '\n';
  };
  if (baseline) row("baseline[" + baseline->tag + "]", *baseline, nullptr);
  row(report.tag, report, baseline ? &report : nullptr);
  if (baseline) {
    os << "p_adj";
    char buf[32];
    for (const auto& name : metric_names()) {
      if (report.p_values.count(name)) {
        std::snprintf(buf, sizeof(buf), "%.4f", report.p_values.at(name));
        os << '\t' << buf;
      } else {
        os << "\t-";
      }
    }
    os << "\n(* = p<0.05 after Bonferroni over " << metric_names().size()
       << " metrics)\n";
  }
  return os.str();
}

}  // namespace

EvalOutput run_eval(const EvalRequest& request) {
  if (request.run_path.empty() || request.qrels_path.empty())
    throw_config("eval requires a run file and a qrels file");
  const Qrels qrels = read_qrels(request.qrels_path);
  const RunFile run = read_run(request.run_path);

  EvalOutput out;
  out.report = evaluate_run(run, qrels, request.options);
  if (out.report.skipped_queries > 0)
    std::fprintf(stderr, "warning: %zu queries excluded (unjudged or no relevant)\n",
                 out.report.skipped_queries);
  if (!request.baseline_path.empty()) {
    const RunFile base_run = read_run(request.baseline_path);
    // Paired tests need shared queries; catch disjoint runs up front.
    bool overlap = false;
    for (const auto& a : run.results) {
      for (const auto& b : base_run.results)
        if (a.query_id == b.query_id) {
          overlap = true;
          break;
        }
      if (overlap) break;
    }
    if (!overlap) {
      std::string sample_a, sample_b;
      for (const auto& r : run.results) {
        sample_a += sample_a.empty() ? r.query_id : ", " + r.query_id;
        if (sample_a.size() > 50) break;
      }
      for (const auto& r : base_run.results) {
        sample_b += sample_b.empty() ? r.query_id : ", " + r.query_id;
        if (sample_b.size() > 50) break;
      }
      throw_validation("runs share no queries: run has [" + sample_a +
                       "], baseline has [" + sample_b + "]");
    }
    out.baseline = evaluate_run(base_run, qrels, request.options);
    attach_significance(out.report, *out.baseline);
  }
  out.table = render_table(out.report, out.baseline ? &*out.baseline : nullptr);
  return out;
}

std::string run_train(const TrainRequest& request) {
  const VectorStore corpus = load_store(request.corpus_path);
  const VectorStore train_queries = load_store(request.train_queries_path);
  const Qrels train_qrels = read_qrels(request.train_qrels_path);
  const VectorStore val_queries = load_store(request.val_queries_path);
  const Qrels val_qrels = read_qrels(request.val_qrels_path);
  const TrainResult result = train(corpus, train_queries, train_qrels, val_queries,
                                   val_qrels, request.model, request.train, request.out_dir);
  std::fprintf(stderr, "best epoch %u val_ndcg10 %.6f -> %s\n", result.best_epoch,
               result.best_val_ndcg10, result.best_checkpoint_path.c_str());
  return result.best_checkpoint_path;
}

}  // namespace tprf
