#pragma once

#include <span>
#include <string>
#include <vector>

#include "tprf/vector_store.hpp"

namespace tprf {

// Ranked result for one query: scores non-increasing, ties broken by
// ascending passage id, no duplicates, at most the requested k items.
struct ScoredItem {
  std::string passage_id;
  double score = 0.0;
};

struct ScoredList {
  std::string query_id;
  std::vector<ScoredItem> items;
};

// Exact top-k maximum-dot-product search over every row of the store.
// Scores accumulate in 64-bit in row element order, so results are
// reproducible and directly comparable with a naive full-sort oracle.
ScoredList search(const VectorStore& store, std::span<const float> query, size_t k,
                  const std::string& query_id = "");

// Elementwise equivalent to search(); results always in query order.
// n_threads > 1 partitions the query set across workers.
std::vector<ScoredList> batch_search(const VectorStore& store, const VectorStore& queries,
                                     size_t k, unsigned n_threads = 1);

// Dot product with 64-bit accumulation, shared with callers that need
// scores consistent with search (e.g. rank lookups in tests).
double dot_score(std::span<const float> a, std::span<const float> b);

}  // namespace tprf
