#include "tprf/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tprf/dense_index.hpp"
#include "tprf/errors.hpp"
#include "tprf/metrics.hpp"

namespace tprf {

void TrainConfig::validate() const {
  if (!std::isfinite(lr) || lr < 0.0)
    throw_config("learning rate must be finite and non-negative");
  if (batch_size == 0 || epochs == 0 || n_negatives == 0 || prf_depth == 0)
    throw_config("batch size, epochs, negatives and feedback depth must be positive");
  if (negative_rank_low >= negative_rank_high)
    throw_config("negative rank window low must be below high");
  if (negative_rank_low == 0) throw_config("negative rank window is 1-based");
  if (adamw_beta1 < 0.0 || adamw_beta1 >= 1.0 || adamw_beta2 < 0.0 || adamw_beta2 >= 1.0)
    throw_config("adam betas must lie in [0, 1)");
  if (adamw_eps <= 0.0 || weight_decay < 0.0)
    throw_config("adam epsilon must be positive and weight decay non-negative");
}

OptimizerState OptimizerState::like(const Parameters& params) {
  OptimizerState s;
  params.for_each_tensor([&s](const Mat& m, bool) {
    s.first_moment.emplace_back(m.rows, m.cols);
    s.second_moment.emplace_back(m.rows, m.cols);
  });
  return s;
}

ExampleSet build_examples(const VectorStore& corpus, const VectorStore& queries,
                          const Qrels& qrels, const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.dim() != queries.dim())
    throw_validation("corpus and query dimensions differ");
  Rng rng(cfg.seed);
  ExampleSet out;
  const size_t ranking_depth =
      std::max<size_t>(cfg.negative_rank_high, cfg.prf_depth);

  for (size_t qi = 0; qi < queries.size(); ++qi) {
    const std::string& qid = queries.id(qi);
    const auto* judgments = qrels.judgments(qid);

    // Relevant passages actually present in the corpus, sorted by id so
    // the positive draw is independent of hash-map iteration order.
    std::vector<std::string> relevant_in_store;
    if (judgments) {
      for (const auto& [pid, grade] : *judgments)
        if (grade >= 1 && corpus.find(pid) >= 0) relevant_in_store.push_back(pid);
    }
    std::sort(relevant_in_store.begin(), relevant_in_store.end());
    if (relevant_in_store.empty()) {
      ++out.skipped_no_relevant;
      continue;
    }

    const ScoredList ranking = search(corpus, queries.row(qi), ranking_depth, qid);

    TrainingExample ex;
    ex.query_id = qid;
    ex.query.assign(queries.row(qi).begin(), queries.row(qi).end());

    const size_t k = std::min<size_t>(cfg.prf_depth, ranking.items.size());
    for (size_t i = 0; i < k; ++i) {
      const auto row = corpus.row(static_cast<size_t>(corpus.find(ranking.items[i].passage_id)));
      ex.feedback.emplace_back(row.begin(), row.end());
    }

    ex.positive_id = relevant_in_store[rng.below(relevant_in_store.size())];
    const auto pos_row = corpus.row(static_cast<size_t>(corpus.find(ex.positive_id)));
    ex.positive.assign(pos_row.begin(), pos_row.end());

    // Candidate negatives: first-stage ranks [low, high], 1-based
    // inclusive, minus every labeled-relevant passage.
    std::vector<std::string> window;
    const size_t lo = cfg.negative_rank_low;
    const size_t hi = std::min<size_t>(cfg.negative_rank_high, ranking.items.size());
    for (size_t rank = lo; rank <= hi; ++rank) {
      const std::string& pid = ranking.items[rank - 1].passage_id;
      if (judgments) {
        auto it = judgments->find(pid);
        if (it != judgments->end() && it->second >= 1) continue;
      }
      window.push_back(pid);
    }
    if (window.empty()) {
      ++out.short_windows;  // nothing to contrast against
      continue;
    }
    std::vector<size_t> picks;
    if (window.size() < cfg.n_negatives) {
      ++out.short_windows;
      picks.resize(window.size());
      for (size_t i = 0; i < picks.size(); ++i) picks[i] = i;
    } else {
      picks = rng.sample_without_replacement(window.size(), cfg.n_negatives);
    }
    for (size_t p : picks) {
      ex.negative_ids.push_back(window[p]);
      const auto neg_row = corpus.row(static_cast<size_t>(corpus.find(window[p])));
      ex.negatives.emplace_back(neg_row.begin(), neg_row.end());
    }
    out.examples.push_back(std::move(ex));
  }
  return out;
}

double loss_from_scores(double positive_score, std::span<const double> negative_scores) {
  if (negative_scores.empty()) throw_validation("loss needs at least one negative");
  double mx = positive_score;
  for (double s : negative_scores) mx = std::max(mx, s);
  double sum = std::exp(positive_score - mx);
  for (double s : negative_scores) sum += std::exp(s - mx);
  return -(positive_score - mx - std::log(sum));
}

double loss(std::span<const float> new_query, std::span<const float> positive,
            const std::vector<std::span<const float>>& negatives) {
  if (negatives.empty()) throw_validation("loss needs at least one negative");
  if (positive.size() != new_query.size())
    throw_validation("positive dimension does not match query");
  std::vector<double> neg_scores;
  neg_scores.reserve(negatives.size());
  for (const auto& n : negatives) {
    if (n.size() != new_query.size())
      throw_validation("negative dimension does not match query");
    neg_scores.push_back(dot_score(new_query, n));
  }
  return loss_from_scores(dot_score(new_query, positive), neg_scores);
}

namespace {

Parameters zeros_like(const Parameters& params) {
  Parameters z;
  z.config = params.config;
  z.layers.resize(params.layers.size());
  auto zero = [](const Mat& m) { return Mat(m.rows, m.cols); };
  for (size_t i = 0; i < params.layers.size(); ++i) {
    const auto& s = params.layers[i];
    auto& d = z.layers[i];
    d.w_q = zero(s.w_q); d.b_q = zero(s.b_q);
    d.w_k = zero(s.w_k); d.b_k = zero(s.b_k);
    d.w_v = zero(s.w_v); d.b_v = zero(s.b_v);
    d.w_o = zero(s.w_o); d.b_o = zero(s.b_o);
    d.w_1 = zero(s.w_1); d.b_1 = zero(s.b_1);
    d.w_2 = zero(s.w_2); d.b_2 = zero(s.b_2);
    d.ln1_gain = zero(s.ln1_gain); d.ln1_bias = zero(s.ln1_bias);
    d.ln2_gain = zero(s.ln2_gain); d.ln2_bias = zero(s.ln2_bias);
  }
  return z;
}

}  // namespace

GradResult grad(const Parameters& params, std::span<const TrainingExample> batch,
                const TrainConfig& cfg, Rng* dropout_rng) {
  if (batch.empty()) throw_validation("gradient of an empty batch");
  cfg.validate();
  params.config.validate();
  const uint32_t d = params.config.model_dim;

  GradResult result;
  result.grads = zeros_like(params);
  double loss_sum = 0.0;

  for (size_t ei = 0; ei < batch.size(); ++ei) {
    const TrainingExample& ex = batch[ei];
    if (ex.query.size() != d || ex.positive.size() != d)
      throw_validation("example " + std::to_string(ei) + " dimension mismatch");
    if (ex.negatives.empty())
      throw_validation("example " + std::to_string(ei) + " has no negatives");

    std::vector<std::span<const float>> feedback;
    feedback.reserve(ex.feedback.size());
    for (const auto& f : ex.feedback) feedback.emplace_back(f);

    Tape tape;
    const int x = tape.leaf(positional_encode(build_input_matrix(ex.query, feedback)));
    std::vector<int> leaves;
    const int encoded = build_encoder_graph(tape, x, params, &leaves, dropout_rng);
    const int out_row = tape.take_row(encoded, 0);

    Mat passages(static_cast<int>(ex.negatives.size()) + 1, static_cast<int>(d));
    for (uint32_t j = 0; j < d; ++j) passages.at(0, j) = ex.positive[j];
    for (size_t ni = 0; ni < ex.negatives.size(); ++ni) {
      if (ex.negatives[ni].size() != d)
        throw_validation("example " + std::to_string(ei) + " negative dimension mismatch");
      for (uint32_t j = 0; j < d; ++j)
        passages.at(static_cast<int>(ni) + 1, j) = ex.negatives[ni][j];
    }
    const int scores = tape.matmul_nt(out_row, tape.leaf(std::move(passages)));
    const int loss_node = tape.softmax_xent0(scores);

    const double example_loss = tape.value(loss_node).a[0];
    if (!std::isfinite(example_loss))
      throw_numeric("non-finite loss at batch example " + std::to_string(ei) +
                    " (query '" + ex.query_id + "')");
    loss_sum += example_loss;

    tape.backward(loss_node);
    size_t leaf_idx = 0;
    result.grads.for_each_tensor([&tape, &leaves, &leaf_idx](Mat& g, bool) {
      add_inplace(g, tape.grad(leaves[leaf_idx++]));
    });
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  result.grads.for_each_tensor([inv](Mat& g, bool) { scale_inplace(g, inv); });
  result.mean_loss = loss_sum * inv;
  return result;
}

void adamw_step(Parameters& params, const Parameters& grads, OptimizerState& state,
                const TrainConfig& cfg) {
  std::vector<Mat*> param_tensors;
  std::vector<bool> decayed;
  params.for_each_tensor([&](Mat& m, bool dec) {
    param_tensors.push_back(&m);
    decayed.push_back(dec);
  });
  std::vector<const Mat*> grad_tensors;
  grads.for_each_tensor([&](const Mat& m, bool) { grad_tensors.push_back(&m); });
  if (param_tensors.size() != grad_tensors.size() ||
      param_tensors.size() != state.first_moment.size())
    throw_validation("parameter, gradient and optimizer shapes disagree");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.adamw_beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.adamw_beta2, static_cast<double>(state.step));

  for (size_t t = 0; t < param_tensors.size(); ++t) {
    Mat& p = *param_tensors[t];
    const Mat& g = *grad_tensors[t];
    Mat& m = state.first_moment[t];
    Mat& v = state.second_moment[t];
    if (!p.same_shape(g) || !p.same_shape(m))
      throw_validation("tensor shape mismatch in optimizer step");
    for (size_t i = 0; i < p.a.size(); ++i) {
      const double gi = g.a[i];
      if (!std::isfinite(gi)) throw_numeric("non-finite gradient entry");
      // Decoupled decay acts on the pre-update weight.
      if (decayed[t]) p.a[i] -= cfg.lr * cfg.weight_decay * p.a[i];
      m.a[i] = cfg.adamw_beta1 * m.a[i] + (1.0 - cfg.adamw_beta1) * gi;
      v.a[i] = cfg.adamw_beta2 * v.a[i] + (1.0 - cfg.adamw_beta2) * gi * gi;
      const double m_hat = m.a[i] / bc1;
      const double v_hat = v.a[i] / bc2;
      p.a[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.adamw_eps);
    }
  }
}

double validation_ndcg10(const Parameters& params, const VectorStore& corpus,
                         const VectorStore& queries, const Qrels& qrels,
                         uint32_t prf_depth) {
  constexpr size_t kSecondStageDepth = 1000;
  double sum = 0.0;
  size_t counted = 0;
  for (size_t qi = 0; qi < queries.size(); ++qi) {
    const auto* judgments = qrels.judgments(queries.id(qi));
    if (judgments == nullptr) continue;

    const ScoredList first = search(corpus, queries.row(qi), prf_depth);
    std::vector<std::span<const float>> feedback;
    feedback.reserve(first.items.size());
    for (const auto& item : first.items)
      feedback.push_back(corpus.row(static_cast<size_t>(corpus.find(item.passage_id))));
    const std::vector<float> rewritten = encode(queries.row(qi), feedback, params);
    const ScoredList second = search(corpus, rewritten, kSecondStageDepth);

    std::vector<std::string> ranking;
    ranking.reserve(second.items.size());
    for (const auto& item : second.items) ranking.push_back(item.passage_id);
    const auto v = ndcg_at(ranking, *judgments, 10);
    if (v) {
      sum += *v;
      ++counted;
    }
  }
  return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

TrainResult train(const VectorStore& corpus, const VectorStore& train_queries,
                  const Qrels& train_qrels, const VectorStore& val_queries,
                  const Qrels& val_qrels, const ModelConfig& model_config,
                  const TrainConfig& train_config, const std::string& out_dir) {
  model_config.validate();
  train_config.validate();
  if (corpus.dim() != model_config.model_dim)
    throw_validation("corpus dimension does not match model_dim");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  ExampleSet examples = build_examples(corpus, train_queries, train_qrels, train_config);
  if (examples.examples.empty())
    throw_config("no usable training examples: every query lacked relevant passages");
  if (examples.skipped_no_relevant > 0)
    std::fprintf(stderr, "warning: skipped %zu queries without judged-relevant passages\n",
                 examples.skipped_no_relevant);
  if (examples.short_windows > 0)
    std::fprintf(stderr, "warning: %zu queries had rank windows smaller than n_negatives\n",
                 examples.short_windows);

  Parameters params = init_params(model_config, train_config.seed);
  OptimizerState opt = OptimizerState::like(params);
  // Distinct stream from build_examples' seed use.
  Rng train_rng(train_config.seed ^ 0x9e3779b97f4a7c15ull);

  TrainResult result;
  result.best = params;
  result.best_epoch = 0;
  result.best_val_ndcg10 = -1.0;

  std::ofstream log_file(fs::path(out_dir) / "train_log.tsv", std::ios::trunc);
  log_file << "epoch\tmean_loss\tval_ndcg10\twall_seconds\n";

  auto checkpoint_name = [](uint32_t epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "epoch_%03u.tprf", epoch);
    return std::string(buf);
  };
  auto write_best_pointer = [&out_dir](const std::string& name) {
    std::ofstream best(fs::path(out_dir) / "best", std::ios::trunc);
    best << name << '\n';
  };

  for (uint32_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    train_rng.shuffle(examples.examples);

    double loss_sum = 0.0;
    size_t seen = 0;
    double mean_loss = 0.0;
    double val = 0.0;
    const std::string name = checkpoint_name(epoch);
    try {
      const size_t total = examples.examples.size();
      for (size_t off = 0; off < total; off += train_config.batch_size) {
        const size_t len = std::min<size_t>(train_config.batch_size, total - off);
        const std::span<const TrainingExample> batch(examples.examples.data() + off, len);
        Rng* dropout = model_config.dropout > 0.0f ? &train_rng : nullptr;
        GradResult g = grad(params, batch, train_config, dropout);
        if (!std::isfinite(g.mean_loss)) throw_numeric("non-finite batch loss");
        adamw_step(params, g.grads, opt, train_config);
        loss_sum += g.mean_loss * static_cast<double>(batch.size());
        seen += batch.size();
      }
      if (!std::isfinite(loss_sum)) throw_numeric("non-finite epoch loss");
      mean_loss = loss_sum / static_cast<double>(seen);

      val = validation_ndcg10(params, corpus, val_queries, val_qrels,
                              train_config.prf_depth);
      save_checkpoint(params, (fs::path(out_dir) / name).string());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Numeric) throw;
      // Divergence: keep the checkpoints of completed epochs and point
      // `best` at the best of them before surfacing the failure.
      if (result.best_epoch > 0) write_best_pointer(checkpoint_name(result.best_epoch));
      throw_numeric("training diverged at epoch " + std::to_string(epoch) + " (" +
                    e.what() + "); last good checkpoint retained in " + out_dir);
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char line[160];
    std::snprintf(line, sizeof(line), "%u\t%.8f\t%.6f\t%.3f\n", epoch, mean_loss, val, wall);
    log_file << line;
    log_file.flush();
    result.log.push_back({epoch, mean_loss, val, wall});

    if (val > result.best_val_ndcg10) {
      result.best_val_ndcg10 = val;
      result.best_epoch = epoch;
      result.best = params;
    }
  }

  const std::string best_name = checkpoint_name(result.best_epoch);
  write_best_pointer(best_name);
  result.best_checkpoint_path = (fs::path(out_dir) / best_name).string();
  return result;
}

}  // namespace tprf
