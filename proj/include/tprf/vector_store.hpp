#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace tprf {

// Id-addressed collection of fixed-dimension float32 embeddings
// (a passage corpus or a query set). Immutable once built; safe to
// share across reader threads.
class VectorStore {
 public:
  VectorStore() = default;
  explicit VectorStore(uint32_t dim) : dim_(dim) {}

  // Builds and validates in one step: ids unique, row count matches,
  // every entry finite, dim > 0.
  static VectorStore from_rows(uint32_t dim, std::vector<std::string> ids,
                               std::vector<float> row_major_data);

  uint32_t dim() const { return dim_; }
  size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& id(size_t row) const { return ids_[row]; }

  std::span<const float> row(size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  const std::vector<float>& data() const { return data_; }

  // Row index for an external id, or -1 if absent.
  int64_t find(const std::string& id) const;

  void append(const std::string& id, std::span<const float> values);

 private:
  uint32_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;  // row-major, ids_.size() x dim_
  std::unordered_map<std::string, size_t> index_;
};

// Graded relevance judgments keyed by (query id, passage id).
class Qrels {
 public:
  // Sets a grade; duplicate (query, passage) pairs are rejected.
  void add(const std::string& query_id, const std::string& passage_id, int grade);

  // Grade for a pair; unjudged passages count as 0.
  int grade(const std::string& query_id, const std::string& passage_id) const;

  bool has_query(const std::string& query_id) const {
    return entries_.count(query_id) > 0;
  }

  const std::unordered_map<std::string, int>* judgments(const std::string& query_id) const;

  size_t query_count() const { return entries_.size(); }
  size_t size() const { return total_; }

  const std::unordered_map<std::string, std::unordered_map<std::string, int>>& all() const {
    return entries_;
  }

 private:
  std::unordered_map<std::string, std::unordered_map<std::string, int>> entries_;
  size_t total_ = 0;
};

// Desk-scale clustered corpus generator. Each cluster has a unit-norm
// center; its relevant passages are noisy copies of the center and its
// distractors are uniform random unit vectors; one query per cluster.
struct SyntheticConfig {
  uint32_t n_clusters = 8;
  uint32_t passages_per_cluster = 100;
  uint32_t relevant_per_cluster = 5;
  uint32_t dim = 64;
  double sigma_rel = 0.3;
  double sigma_query = 0.6;
  uint64_t seed = 7;

  void validate() const;
};

struct SyntheticData {
  VectorStore corpus;
  VectorStore queries;
  Qrels qrels;
};

// Binary store format, little-endian:
//   magic "DFV1", dim u32, count u32,
//   count null-terminated UTF-8 ids,
//   count*dim float32 payload.
void save_store(const VectorStore& store, const std::string& path);
VectorStore load_store(const std::string& path);

// Text ingest: one row per line, "id<TAB>v1,v2,...,vdim";
// lines starting with '#' and empty lines are skipped.
VectorStore ingest_text(const std::string& path, uint32_t dim);

// Deterministic per seed: same config -> bit-identical stores and qrels.
SyntheticData generate_synthetic(const SyntheticConfig& cfg);

}  // namespace tprf
