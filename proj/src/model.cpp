#include "tprf/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "tprf/errors.hpp"

namespace tprf {

void ModelConfig::validate() const {
  if (layers == 0 || heads == 0 || model_dim == 0 || ffn_dim == 0)
    throw_config("layers, heads and dimensions must be positive");
  if (model_dim % heads != 0)
    throw_config("model_dim " + std::to_string(model_dim) +
                 " is not divisible by heads " + std::to_string(heads));
  if (!(dropout >= 0.0f) || dropout >= 1.0f)
    throw_config("dropout must lie in [0, 1)");
}

uint64_t Parameters::tensor_entry_count() const {
  uint64_t n = 0;
  for_each_tensor([&n](const Mat& m, bool) { n += m.size(); });
  return n;
}

bool Parameters::all_finite() const {
  bool ok = true;
  for_each_tensor([&ok](const Mat& m, bool) { ok = ok && m.all_finite(); });
  return ok;
}

uint64_t param_count(const ModelConfig& config) {
  config.validate();
  const uint64_t d = config.model_dim;
  const uint64_t f = config.ffn_dim;
  return static_cast<uint64_t>(config.layers) *
         (4 * (d * d + d) + (d * f + f) + (f * d + d) + 4 * d);
}

uint64_t size_bytes(const ModelConfig& config) { return 4 * param_count(config); }

Parameters init_params(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const int d = static_cast<int>(config.model_dim);
  const int f = static_cast<int>(config.ffn_dim);

  auto xavier = [&rng](int fan_in, int fan_out) {
    Mat m(fan_in, fan_out);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : m.a) v = rng.uniform(-bound, bound);
    return m;
  };
  auto zeros = [](int cols) { return Mat(1, cols); };
  auto ones = [](int cols) {
    Mat m(1, cols);
    for (double& v : m.a) v = 1.0;
    return m;
  };

  Parameters p;
  p.config = config;
  p.layers.resize(config.layers);
  for (auto& l : p.layers) {
    l.w_q = xavier(d, d); l.b_q = zeros(d);
    l.w_k = xavier(d, d); l.b_k = zeros(d);
    l.w_v = xavier(d, d); l.b_v = zeros(d);
    l.w_o = xavier(d, d); l.b_o = zeros(d);
    l.w_1 = xavier(d, f); l.b_1 = zeros(f);
    l.w_2 = xavier(f, d); l.b_2 = zeros(d);
    l.ln1_gain = ones(d); l.ln1_bias = zeros(d);
    l.ln2_gain = ones(d); l.ln2_bias = zeros(d);
  }
  return p;
}

Mat build_input_matrix(std::span<const float> query,
                       const std::vector<std::span<const float>>& feedback) {
  if (feedback.empty())
    throw_validation("feedback depth k must be >= 1; use the raw query vector when no "
                     "feedback is available");
  const int d = static_cast<int>(query.size());
  Mat m(static_cast<int>(feedback.size()) + 1, d);
  for (int j = 0; j < d; ++j) m.at(0, j) = query[j];
  for (size_t i = 0; i < feedback.size(); ++i) {
    if (feedback[i].size() != query.size())
      throw_validation("feedback vector dimension does not match query");
    double* row = m.row(static_cast<int>(i) + 1);
    for (int j = 0; j < d; ++j) row[j] = feedback[i][j];
  }
  if (!m.all_finite()) throw_validation("input matrix contains non-finite entries");
  return m;
}

Mat positional_encode(const Mat& input) {
  const int d = input.cols;
  Mat out = input;
  for (int pos = 0; pos < input.rows; ++pos) {
    double* row = out.row(pos);
    for (int j = 0; j < d; ++j) {
      const int pair = j / 2;
      const double angle =
          pos / std::pow(10000.0, (2.0 * pair) / static_cast<double>(d));
      row[j] += (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return out;
}

namespace {

struct LayerLeaves {
  int w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
  int w_1, b_1, w_2, b_2;
  int ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

int build_layer_graph(Tape& t, int x, const LayerLeaves& p, const ModelConfig& cfg,
                      Rng* dropout_rng, std::vector<int>* attention_nodes) {
  const int h = static_cast<int>(cfg.heads);
  const int dh = static_cast<int>(cfg.head_dim());
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool use_dropout = dropout_rng != nullptr && cfg.dropout > 0.0f;

  const int q = t.add_row(t.matmul(x, p.w_q), p.b_q);
  const int k = t.add_row(t.matmul(x, p.w_k), p.b_k);
  const int v = t.add_row(t.matmul(x, p.w_v), p.b_v);

  std::vector<int> heads;
  heads.reserve(h);
  for (int i = 0; i < h; ++i) {
    const int qi = t.slice_cols(q, i * dh, dh);
    const int ki = t.slice_cols(k, i * dh, dh);
    const int vi = t.slice_cols(v, i * dh, dh);
    int attn = t.softmax_rows(t.scale(t.matmul_nt(qi, ki), inv_sqrt_dh));
    if (attention_nodes) attention_nodes->push_back(attn);
    if (use_dropout) attn = t.dropout(attn, cfg.dropout, *dropout_rng);
    heads.push_back(t.matmul(attn, vi));
  }
  const int attn_out = t.add_row(t.matmul(t.concat_cols(heads), p.w_o), p.b_o);
  const int y1 = t.layer_norm(t.add(x, attn_out), p.ln1_gain, p.ln1_bias);

  int hidden = t.relu(t.add_row(t.matmul(y1, p.w_1), p.b_1));
  if (use_dropout) hidden = t.dropout(hidden, cfg.dropout, *dropout_rng);
  const int ffn_out = t.add_row(t.matmul(hidden, p.w_2), p.b_2);
  return t.layer_norm(t.add(y1, ffn_out), p.ln2_gain, p.ln2_bias);
}

}  // namespace

int build_encoder_graph(Tape& tape, int x, const Parameters& params,
                        std::vector<int>* param_leaves, Rng* dropout_rng,
                        std::vector<int>* attention_nodes) {
  int out = x;
  for (const auto& layer : params.layers) {
    LayerLeaves leaves{};
    int* slots[16] = {&leaves.w_q, &leaves.b_q, &leaves.w_k, &leaves.b_k,
                      &leaves.w_v, &leaves.b_v, &leaves.w_o, &leaves.b_o,
                      &leaves.w_1, &leaves.b_1, &leaves.w_2, &leaves.b_2,
                      &leaves.ln1_gain, &leaves.ln1_bias, &leaves.ln2_gain, &leaves.ln2_bias};
    const Mat* tensors[16] = {&layer.w_q, &layer.b_q, &layer.w_k, &layer.b_k,
                              &layer.w_v, &layer.b_v, &layer.w_o, &layer.b_o,
                              &layer.w_1, &layer.b_1, &layer.w_2, &layer.b_2,
                              &layer.ln1_gain, &layer.ln1_bias, &layer.ln2_gain,
                              &layer.ln2_bias};
    for (int i = 0; i < 16; ++i) {
      *slots[i] = tape.leaf_ref(*tensors[i]);
      if (param_leaves) param_leaves->push_back(*slots[i]);
    }
    out = build_layer_graph(tape, out, leaves, params.config, dropout_rng, attention_nodes);
  }
  return out;
}

Mat encoder_layer(const Mat& x, const LayerParams& layer, const ModelConfig& config,
                  Rng* dropout_rng, LayerTrace* trace) {
  if (x.cols != static_cast<int>(config.model_dim))
    throw_validation("input width does not match model_dim");
  Parameters single;
  single.config = config;
  single.config.layers = 1;
  single.layers.push_back(layer);
  Tape tape;
  const int input = tape.leaf(x);
  std::vector<int> attn_nodes;
  const int out = build_encoder_graph(tape, input, single, nullptr, dropout_rng,
                                      trace ? &attn_nodes : nullptr);
  if (trace) {
    trace->attention.clear();
    for (int n : attn_nodes) trace->attention.push_back(tape.value(n));
  }
  return tape.value(out);
}

std::vector<float> encode(std::span<const float> query,
                          const std::vector<std::span<const float>>& feedback,
                          const Parameters& params, OutputReduction reduction) {
  if (query.size() != params.config.model_dim)
    throw_validation("query dimension does not match model_dim");
  const Mat input = positional_encode(build_input_matrix(query, feedback));
  Tape tape;
  const int x = tape.leaf(input);
  const int out = build_encoder_graph(tape, x, params, nullptr, nullptr);
  const int reduced = reduction == OutputReduction::QueryRow ? tape.take_row(out, 0)
                                                             : tape.mean_rows(out);
  const Mat& q = tape.value(reduced);
  std::vector<float> result(q.cols);
  for (int j = 0; j < q.cols; ++j) {
    result[j] = static_cast<float>(q.a[j]);
    if (!std::isfinite(result[j]))
      throw_numeric("encoder produced a non-finite query vector");
  }
  return result;
}

namespace {

constexpr char kCheckpointMagic[4] = {'T', 'P', 'R', 'F'};
constexpr uint32_t kCheckpointVersion = 1;

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

}  // namespace

void save_checkpoint(const Parameters& params, const std::string& path) {
  params.config.validate();
  if (!params.all_finite()) throw_numeric("refusing to save non-finite parameters");
  // Values must survive the float32 narrowing applied at rest.
  bool representable = true;
  params.for_each_tensor([&representable](const Mat& m, bool) {
    for (double v : m.a)
      if (!std::isfinite(static_cast<float>(v))) representable = false;
  });
  if (!representable)
    throw_numeric("parameter magnitude overflows the float32 checkpoint representation");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::Validation, "cannot open '" + path + "' for writing");
  os.write(kCheckpointMagic, 4);
  write_u32_le(os, kCheckpointVersion);
  write_u32_le(os, params.config.layers);
  write_u32_le(os, params.config.heads);
  write_u32_le(os, params.config.model_dim);
  write_u32_le(os, params.config.ffn_dim);
  write_u32_le(os, std::bit_cast<uint32_t>(params.config.dropout));
  params.for_each_tensor([&os](const Mat& m, bool) {
    for (double v : m.a) write_u32_le(os, std::bit_cast<uint32_t>(static_cast<float>(v)));
  });
  if (!os) throw Error(ErrorKind::Validation, "write failed for '" + path + "'");
}

Parameters load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Validation, "cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw_format("bad magic: not a TPRF checkpoint");
  uint32_t version = 0;
  if (!read_u32_le(is, version)) throw_corruption("truncated checkpoint header");
  if (version != kCheckpointVersion)
    throw_format("unsupported checkpoint version " + std::to_string(version));

  ModelConfig cfg;
  uint32_t dropout_bits = 0;
  if (!read_u32_le(is, cfg.layers) || !read_u32_le(is, cfg.heads) ||
      !read_u32_le(is, cfg.model_dim) || !read_u32_le(is, cfg.ffn_dim) ||
      !read_u32_le(is, dropout_bits))
    throw_corruption("truncated checkpoint header");
  cfg.dropout = std::bit_cast<float>(dropout_bits);
  cfg.validate();

  // Shapes come from the config; loading reuses init to allocate them.
  Parameters params = init_params(cfg, 0);
  bool truncated = false;
  params.for_each_tensor([&is, &truncated](Mat& m, bool) {
    if (truncated) return;
    for (double& v : m.a) {
      uint32_t bits = 0;
      if (!read_u32_le(is, bits)) {
        truncated = true;
        return;
      }
      v = static_cast<double>(std::bit_cast<float>(bits));
    }
  });
  if (truncated) throw_corruption("truncated checkpoint payload");
  is.peek();
  if (!is.eof()) throw_corruption("trailing bytes after checkpoint payload");
  if (!params.all_finite()) throw_numeric("checkpoint contains non-finite parameters");
  return params;
}

}  // namespace tprf
