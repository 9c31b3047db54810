#include "tprf/dense_index.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "tprf/errors.hpp"

namespace tprf {

double dot_score(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

namespace {

// "a ranks before b": higher score first, ascending id on ties.
bool ranks_before(double score_a, const std::string& id_a, double score_b,
                  const std::string& id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

}  // namespace

ScoredList search(const VectorStore& store, std::span<const float> query, size_t k,
                  const std::string& query_id) {
  if (query.size() != store.dim())
    throw_validation("query dimension " + std::to_string(query.size()) +
                     " does not match store dimension " + std::to_string(store.dim()));
  if (k == 0) throw_validation("k must be >= 1");
  // Store rows are validated at construction; with a finite query every
  // score is finite and the rank order below is total.
  for (float v : query)
    if (!std::isfinite(v)) throw_validation("query vector contains a non-finite value");

  // Bounded selection: a k-sized heap whose top is the weakest kept
  // entry. With comp(x, y) = "x ranks before y", std::push_heap keeps
  // the comp-largest element (the weakest) at the front.
  struct Entry {
    double score;
    size_t row;
  };
  std::vector<Entry> heap;
  heap.reserve(std::min(k, store.size()) + 1);
  auto stronger = [&store](const Entry& x, const Entry& y) {
    return ranks_before(x.score, store.id(x.row), y.score, store.id(y.row));
  };

  for (size_t r = 0; r < store.size(); ++r) {
    const double s = dot_score(query, store.row(r));
    if (heap.size() < k) {
      heap.push_back({s, r});
      std::push_heap(heap.begin(), heap.end(), stronger);
    } else if (ranks_before(s, store.id(r), heap.front().score, store.id(heap.front().row))) {
      std::pop_heap(heap.begin(), heap.end(), stronger);
      heap.back() = {s, r};
      std::push_heap(heap.begin(), heap.end(), stronger);
    }
  }

  // sort_heap yields ascending order under comp, i.e. strongest first.
  std::sort_heap(heap.begin(), heap.end(), stronger);

  ScoredList out;
  out.query_id = query_id;
  out.items.reserve(heap.size());
  for (const Entry& e : heap) out.items.push_back({store.id(e.row), e.score});
  return out;
}

std::vector<ScoredList> batch_search(const VectorStore& store, const VectorStore& queries,
                                     size_t k, unsigned n_threads) {
  if (queries.dim() != store.dim())
    throw_validation("query store dimension does not match corpus dimension");
  std::vector<ScoredList> results(queries.size());
  auto run_range = [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i)
      results[i] = search(store, queries.row(i), k, queries.id(i));
  };
  if (n_threads <= 1 || queries.size() < 2) {
    run_range(0, queries.size());
    return results;
  }
  const unsigned workers = std::min<unsigned>(n_threads, static_cast<unsigned>(queries.size()));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const size_t chunk = (queries.size() + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const size_t lo = w * chunk;
    const size_t hi = std::min(queries.size(), lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back(run_range, lo, hi);
  }
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace tprf
