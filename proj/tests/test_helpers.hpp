#pragma once

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "tprf/dense_index.hpp"
#include "tprf/rng.hpp"
#include "tprf/vector_store.hpp"

namespace testutil {

// Independent retrieval oracle: score every row the obvious way, full
// sort, cut at k. Deliberately avoids the library's heap path.
inline tprf::ScoredList naive_search(const tprf::VectorStore& store,
                                     std::span<const float> query, size_t k,
                                     const std::string& query_id = "") {
  struct Row {
    std::string id;
    double score;
  };
  std::vector<Row> rows;
  rows.reserve(store.size());
  for (size_t r = 0; r < store.size(); ++r) {
    double s = 0.0;
    const auto vec = store.row(r);
    for (size_t j = 0; j < vec.size(); ++j)
      s += static_cast<double>(query[j]) * static_cast<double>(vec[j]);
    rows.push_back({store.id(r), s});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  tprf::ScoredList out;
  out.query_id = query_id;
  for (size_t i = 0; i < std::min(k, rows.size()); ++i)
    out.items.push_back({rows[i].id, rows[i].score});
  return out;
}

inline tprf::VectorStore random_store(size_t count, uint32_t dim, uint64_t seed,
                                      const std::string& prefix = "p") {
  tprf::Rng rng(seed);
  std::vector<std::string> ids;
  std::vector<float> data;
  data.reserve(count * dim);
  for (size_t i = 0; i < count; ++i) {
    ids.push_back(prefix + std::to_string(i));
    for (uint32_t j = 0; j < dim; ++j)
      data.push_back(static_cast<float>(rng.uniform(-1.0, 1.0)));
  }
  return tprf::VectorStore::from_rows(dim, std::move(ids), std::move(data));
}

inline std::vector<float> random_vec(uint32_t dim, tprf::Rng& rng) {
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

// Unique path under the system temp directory, removed by the caller.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    const auto base = std::filesystem::temp_directory_path();
    path_ = base / ("tprf_test_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file_bytes(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return {};
  std::string data;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) data.append(buf, n);
  std::fclose(f);
  return data;
}

}  // namespace testutil
