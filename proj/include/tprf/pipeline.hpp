#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "tprf/metrics.hpp"
#include "tprf/model.hpp"
#include "tprf/prf.hpp"
#include "tprf/trainer.hpp"
#include "tprf/vector_store.hpp"

namespace tprf {

enum class PrfMethod { None, Average, Rocchio, Tprf };

PrfMethod parse_prf_method(const std::string& name);
std::string prf_method_name(PrfMethod method);

// End-to-end retrieval wiring: first-stage feedback depth k, query
// rewrite method, second-stage depth final_k. The second stage always
// searches the full corpus index, never a rerank of stage-1 candidates.
struct PipelineConfig {
  std::string corpus_path;
  std::string queries_path;
  std::string checkpoint_path;  // required for method Tprf
  std::string run_path;         // TREC run output
  std::string tag;              // defaults to the method name
  PrfMethod method = PrfMethod::None;
  uint32_t k = 3;
  uint32_t final_k = 1000;
  RocchioParams rocchio;
  uint64_t seed = 42;

  void validate() const;
};

// In-memory variant used by commands that already hold the stores.
// `params` must be present for method Tprf.
RunFile run_search(const VectorStore& corpus, const VectorStore& queries,
                   PrfMethod method, uint32_t k, uint32_t final_k,
                   const RocchioParams& rocchio, const Parameters* params,
                   const std::string& tag);

// File-level entry point: loads stores (and checkpoint if needed),
// searches, writes the run file, returns the run.
RunFile run_search(const PipelineConfig& cfg);

// Rewrites one query according to the method (identity for None).
std::vector<float> rewrite_query(const VectorStore& corpus, std::span<const float> query,
                                 PrfMethod method, uint32_t k, const RocchioParams& rocchio,
                                 const Parameters* params);

struct EvalRequest {
  std::string run_path;
  std::string baseline_path;  // optional
  std::string qrels_path;
  EvalOptions options;
};

struct EvalOutput {
  MetricReport report;
  std::optional<MetricReport> baseline;
  std::string table;  // rendered TSV table
};

// Evaluates a run (and optionally a baseline with paired significance
// tests, Bonferroni-adjusted across the metric family, marked at p<0.05).
EvalOutput run_eval(const EvalRequest& request);

struct TrainRequest {
  std::string corpus_path;
  std::string train_queries_path;
  std::string train_qrels_path;
  std::string val_queries_path;
  std::string val_qrels_path;
  std::string out_dir;
  ModelConfig model;
  TrainConfig train;
};

// Delegates to train(); returns the best checkpoint path.
std::string run_train(const TrainRequest& request);

}  // namespace tprf
