#include "tprf/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <thread>

#include "tprf/errors.hpp"
#include "tprf/rng.hpp"

namespace tprf {

SummaryStats summarize(std::span<const double> values) {
  if (values.empty()) throw_validation("summary of an empty sample");
  SummaryStats s;
  s.min = values[0];
  s.max = values[0];
  double sum = 0.0;
  for (double v : values) {
    sum += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) {
      const double c = v - s.mean;
      ss += c * c;
    }
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::string environment_string() {
#ifdef NDEBUG
  const char* build = "release";
#else
  const char* build = "debug";
#endif
  return "cores=" + std::to_string(std::thread::hardware_concurrency()) +
         " build=" + build;
}

LatencyReport measure_latency(const QueryFn& fn, const VectorStore& queries, size_t n,
                              size_t warmup, uint64_t seed, const std::string& method,
                              uint32_t prf_depth) {
  if (n == 0) throw_validation("latency sample size must be >= 1");
  if (n > queries.size())
    throw_validation("requested " + std::to_string(n) + " queries but only " +
                     std::to_string(queries.size()) + " available");
  Rng rng(seed);
  const std::vector<size_t> sample = rng.sample_without_replacement(queries.size(), n);

  using clock = std::chrono::steady_clock;
  for (size_t i = 0; i < warmup; ++i) fn(queries.row(sample[i % n]));

  std::vector<double> times_ms;
  times_ms.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const auto t0 = clock::now();
    fn(queries.row(sample[i]));
    const auto t1 = clock::now();
    times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }

  const SummaryStats stats = summarize(times_ms);
  LatencyReport report;
  report.method = method;
  report.prf_depth = prf_depth;
  report.n_queries = n;
  report.mean_ms = stats.mean;
  report.stddev_ms = stats.stddev;
  report.min_ms = stats.min;
  report.max_ms = stats.max;
  report.environment = environment_string();
  return report;
}

std::vector<LatencyReport> sweep_prf_depth(
    const std::function<QueryFn(uint32_t k)>& make_pipeline, const VectorStore& queries,
    std::span<const uint32_t> ks, size_t n, size_t warmup, uint64_t seed,
    const std::string& method) {
  if (ks.empty()) throw_validation("sweep needs at least one k");
  for (size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == 0) throw_validation("all sweep depths must be >= 1");
    if (i > 0 && ks[i] <= ks[i - 1]) throw_validation("sweep depths must be ascending");
  }
  std::vector<LatencyReport> out;
  out.reserve(ks.size());
  for (uint32_t k : ks)
    out.push_back(measure_latency(make_pipeline(k), queries, n, warmup, seed, method, k));
  return out;
}

double text_prf_cost_model(uint32_t k, uint32_t query_tokens, uint32_t tokens_per_passage,
                           uint32_t token_cap) {
  const uint64_t tokens = static_cast<uint64_t>(query_tokens) +
                          static_cast<uint64_t>(k) * tokens_per_passage;
  const uint64_t effective = std::min<uint64_t>(tokens, token_cap);
  return static_cast<double>(effective) * static_cast<double>(effective);
}

ModelSizeReport model_size_report(const ModelConfig& config) {
  ModelSizeReport report;
  report.parameters = param_count(config);
  report.raw_bytes = size_bytes(config);

  namespace fs = std::filesystem;
  const fs::path tmp =
      fs::temp_directory_path() /
      ("tprf_size_probe_" + std::to_string(
                                std::chrono::steady_clock::now().time_since_epoch().count()) +
       ".tprf");
  const Parameters params = init_params(config, 0);
  save_checkpoint(params, tmp.string());
  report.checkpoint_bytes = static_cast<uint64_t>(fs::file_size(tmp));
  fs::remove(tmp);
  return report;
}

std::string latency_csv(std::span<const LatencyReport> reports) {
  std::ostringstream os;
  os << "k,mean_ms,stddev_ms,method\n";
  char buf[96];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "%u,%.6f,%.6f,", r.prf_depth, r.mean_ms, r.stddev_ms);
    os << buf << r.method << '\n';
  }
  return os.str();
}

std::string latency_tsv(std::span<const LatencyReport> reports) {
  std::ostringstream os;
  os << "method\tk\tn_queries\tmean_ms\tstddev_ms\tmin_ms\tmax_ms\tenvironment\n";
  char buf[160];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "\t%u\t%zu\t%.6f\t%.6f\t%.6f\t%.6f\t", r.prf_depth,
                  r.n_queries, r.mean_ms, r.stddev_ms, r.min_ms, r.max_ms);
    os << r.method << buf << r.environment << '\n';
  }
  return os.str();
}

}  // namespace tprf
