#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tprf/model.hpp"
#include "tprf/vector_store.hpp"

namespace tprf {

// Wall-time statistics for one method at one feedback depth. Times in
// milliseconds from a monotonic clock; never wall-clock-of-day.
struct LatencyReport {
  std::string method;
  uint32_t prf_depth = 0;
  size_t n_queries = 0;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  std::string environment;
};

// A per-query unit of work to be timed (typically the full path:
// first-stage search -> query rewrite -> second-stage search).
using QueryFn = std::function<void(std::span<const float> query)>;

// Times `fn` over n queries sampled from `queries` without replacement
// (deterministic per seed). `warmup` untimed iterations run first.
// Strictly single-threaded on the measured path.
LatencyReport measure_latency(const QueryFn& fn, const VectorStore& queries, size_t n,
                              size_t warmup, uint64_t seed, const std::string& method,
                              uint32_t prf_depth);

// Builds the per-query pipeline for each k via `make_pipeline` and
// measures it; ks must be ascending. One report row per k.
std::vector<LatencyReport> sweep_prf_depth(
    const std::function<QueryFn(uint32_t k)>& make_pipeline, const VectorStore& queries,
    std::span<const uint32_t> ks, size_t n, size_t warmup, uint64_t seed,
    const std::string& method);

// Relative cost of a text-concatenation feedback encoder whose input is
// capped at `token_cap` tokens: cost ~ min(query + k*passage, cap)^2.
// Self-attention is quadratic in input length, and the cap makes the
// curve plateau once the input saturates. Unit: arbitrary (tokens^2).
double text_prf_cost_model(uint32_t k, uint32_t query_tokens = 12,
                           uint32_t tokens_per_passage = 100, uint32_t token_cap = 512);

struct ModelSizeReport {
  uint64_t parameters = 0;
  uint64_t raw_bytes = 0;         // 4 bytes per parameter
  uint64_t checkpoint_bytes = 0;  // measured from an actual serialized file
};

ModelSizeReport model_size_report(const ModelConfig& config);

// Sample mean / sample stddev (n-1) / min / max, two-pass.
struct SummaryStats {
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
};
SummaryStats summarize(std::span<const double> values);

// "cores=<n> build=<release|debug>"
std::string environment_string();

// Plot-ready CSV: header `k,mean_ms,stddev_ms,method`, one row per report.
std::string latency_csv(std::span<const LatencyReport> reports);
// Tab-separated table with the full statistics.
std::string latency_tsv(std::span<const LatencyReport> reports);

}  // namespace tprf
