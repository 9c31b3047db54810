#include "tprf/vector_store.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>

#include "tprf/errors.hpp"
#include "tprf/rng.hpp"

namespace tprf {

namespace {

constexpr char kMagic[4] = {'D', 'F', 'V', '1'};

void write_u32_le(std::ostream& os, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

bool read_u32_le(std::istream& is, uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
      (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  return true;
}

void write_f32_le(std::ostream& os, float f) {
  write_u32_le(os, std::bit_cast<uint32_t>(f));
}

}  // namespace

VectorStore VectorStore::from_rows(uint32_t dim, std::vector<std::string> ids,
                                   std::vector<float> row_major_data) {
  if (dim == 0) throw_validation("store dimension must be positive");
  if (row_major_data.size() != ids.size() * static_cast<size_t>(dim))
    throw_validation("row data size does not match id count times dimension");
  for (float v : row_major_data)
    if (!std::isfinite(v)) throw_validation("store contains a non-finite value");
  VectorStore s(dim);
  s.ids_ = std::move(ids);
  s.data_ = std::move(row_major_data);
  s.index_.reserve(s.ids_.size());
  for (size_t i = 0; i < s.ids_.size(); ++i) {
    if (!s.index_.emplace(s.ids_[i], i).second)
      throw_validation("duplicate id '" + s.ids_[i] + "'");
  }
  return s;
}

int64_t VectorStore::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? -1 : static_cast<int64_t>(it->second);
}

void VectorStore::append(const std::string& id, std::span<const float> values) {
  if (dim_ == 0) throw_validation("store dimension must be positive");
  if (values.size() != dim_) throw_validation("row dimension mismatch for id '" + id + "'");
  for (float v : values)
    if (!std::isfinite(v)) throw_validation("non-finite value in row '" + id + "'");
  if (!index_.emplace(id, ids_.size()).second)
    throw_validation("duplicate id '" + id + "'");
  ids_.push_back(id);
  data_.insert(data_.end(), values.begin(), values.end());
}

void Qrels::add(const std::string& query_id, const std::string& passage_id, int grade) {
  if (grade < 0) throw_validation("relevance grade must be non-negative");
  auto& per_query = entries_[query_id];
  if (!per_query.emplace(passage_id, grade).second)
    throw_validation("duplicate judgment for (" + query_id + ", " + passage_id + ")");
  ++total_;
}

int Qrels::grade(const std::string& query_id, const std::string& passage_id) const {
  auto it = entries_.find(query_id);
  if (it == entries_.end()) return 0;
  auto jt = it->second.find(passage_id);
  return jt == it->second.end() ? 0 : jt->second;
}

const std::unordered_map<std::string, int>* Qrels::judgments(const std::string& query_id) const {
  auto it = entries_.find(query_id);
  return it == entries_.end() ? nullptr : &it->second;
}

void SyntheticConfig::validate() const {
  if (n_clusters == 0 || passages_per_cluster == 0 || relevant_per_cluster == 0)
    throw_config("cluster, passage and relevant counts must be positive");
  if (relevant_per_cluster > passages_per_cluster)
    throw_config("relevant_per_cluster exceeds passages_per_cluster");
  if (dim == 0) throw_config("dimension must be positive");
  if (!std::isfinite(sigma_rel) || !std::isfinite(sigma_query) || sigma_rel < 0 || sigma_query < 0)
    throw_config("noise scales must be finite and non-negative");
}

void save_store(const VectorStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::Validation, "cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  write_u32_le(os, store.dim());
  write_u32_le(os, static_cast<uint32_t>(store.size()));
  for (const auto& id : store.ids()) {
    if (id.find('\0') != std::string::npos)
      throw_validation("id contains a NUL byte: cannot serialize");
    os.write(id.data(), static_cast<std::streamsize>(id.size()));
    os.put('\0');
  }
  for (float v : store.data()) write_f32_le(os, v);
  if (!os) throw Error(ErrorKind::Validation, "write failed for '" + path + "'");
}

VectorStore load_store(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Validation, "cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4)) throw_format("file too short for magic header");
  if (std::memcmp(magic, kMagic, 4) != 0) throw_format("bad magic: not a DFV1 store");
  uint32_t dim = 0, count = 0;
  if (!read_u32_le(is, dim) || !read_u32_le(is, count))
    throw_corruption("truncated header");
  if (dim == 0) throw_format("header declares zero dimension");

  std::vector<std::string> ids;
  ids.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    std::string id;
    if (!std::getline(is, id, '\0'))
      throw_corruption("truncated id table: expected " + std::to_string(count) + " ids");
    ids.push_back(std::move(id));
  }

  std::vector<float> data(static_cast<size_t>(count) * dim);
  if (!data.empty()) {
    std::vector<unsigned char> raw(data.size() * 4);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
      throw_corruption("truncated payload: expected " + std::to_string(count) + " rows");
    for (size_t i = 0; i < data.size(); ++i) {
      const uint32_t bits = static_cast<uint32_t>(raw[4 * i]) |
                            (static_cast<uint32_t>(raw[4 * i + 1]) << 8) |
                            (static_cast<uint32_t>(raw[4 * i + 2]) << 16) |
                            (static_cast<uint32_t>(raw[4 * i + 3]) << 24);
      data[i] = std::bit_cast<float>(bits);
    }
  }
  // Trailing bytes mean the header undercounts: treat as corruption.
  is.peek();
  if (!is.eof()) throw_corruption("trailing bytes after declared payload");
  return VectorStore::from_rows(dim, std::move(ids), std::move(data));
}

VectorStore ingest_text(const std::string& path, uint32_t dim) {
  if (dim == 0) throw_validation("dimension must be positive");
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Validation, "cannot open '" + path + "'");
  VectorStore store(dim);
  std::string line;
  size_t line_no = 0;
  std::vector<float> row(dim);
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw_parse("line " + std::to_string(line_no) + ": expected 'id<TAB>values'");
    const std::string id = line.substr(0, tab);

    const char* p = line.data() + tab + 1;
    const char* end = line.data() + line.size();
    uint32_t n = 0;
    while (p < end) {
      if (n == dim)
        throw_parse("line " + std::to_string(line_no) + ": more than " +
                    std::to_string(dim) + " components");
      float v = 0.0f;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc())
        throw_parse("line " + std::to_string(line_no) + ": bad float near '" +
                    std::string(p, std::min<size_t>(8, end - p)) + "'");
      if (!std::isfinite(v))
        throw_validation("line " + std::to_string(line_no) + ": non-finite component");
      row[n++] = v;
      p = next;
      if (p < end) {
        if (*p != ',')
          throw_parse("line " + std::to_string(line_no) + ": expected ',' between components");
        ++p;
      }
    }
    if (n != dim)
      throw_parse("line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                  " components, found " + std::to_string(n));
    store.append(id, row);
  }
  return store;
}

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const uint32_t d = cfg.dim;

  auto draw_unit = [&rng, d]() {
    std::vector<double> v(d);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (auto& x : v) {
        x = rng.normal();
        norm2 += x * x;
      }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : v) x *= inv;
    return v;
  };

  std::vector<std::vector<double>> centers(cfg.n_clusters);
  for (auto& c : centers) c = draw_unit();

  SyntheticData out;
  out.corpus = VectorStore(d);
  out.queries = VectorStore(d);

  std::vector<float> row(d);
  size_t passage_no = 0;
  for (uint32_t c = 0; c < cfg.n_clusters; ++c) {
    const std::string query_id = "q" + std::to_string(c);
    for (uint32_t p = 0; p < cfg.passages_per_cluster; ++p) {
      const bool relevant = p < cfg.relevant_per_cluster;
      if (relevant) {
        for (uint32_t j = 0; j < d; ++j)
          row[j] = static_cast<float>(centers[c][j] + cfg.sigma_rel * rng.normal());
      } else {
        const auto u = draw_unit();
        for (uint32_t j = 0; j < d; ++j) row[j] = static_cast<float>(u[j]);
      }
      const std::string pid = "p" + std::to_string(passage_no++);
      out.corpus.append(pid, row);
      // Grade fixed at 2 so both common binarization thresholds
      // (>=1 and >=2) select the same passages.
      if (relevant) out.qrels.add(query_id, pid, 2);
    }
  }
  for (uint32_t c = 0; c < cfg.n_clusters; ++c) {
    for (uint32_t j = 0; j < d; ++j)
      row[j] = static_cast<float>(centers[c][j] + cfg.sigma_query * rng.normal());
    out.queries.append("q" + std::to_string(c), row);
  }
  return out;
}

}  // namespace tprf
