#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tprf/model.hpp"
#include "tprf/vector_store.hpp"

namespace tprf {

// One supervised example: the query, its top-k first-stage feedback,
// one labeled relevant passage and the sampled hard negatives.
struct TrainingExample {
  std::string query_id;
  std::vector<float> query;
  std::vector<std::vector<float>> feedback;
  std::string positive_id;
  std::vector<float> positive;
  std::vector<std::string> negative_ids;
  std::vector<std::vector<float>> negatives;
};

struct TrainConfig {
  double lr = 1e-5;
  uint32_t batch_size = 512;
  uint32_t epochs = 50;
  uint32_t n_negatives = 20;
  uint32_t negative_rank_low = 10;    // 1-based first-stage rank window,
  uint32_t negative_rank_high = 200;  // inclusive on both ends
  uint32_t prf_depth = 3;
  uint64_t seed = 42;
  double adamw_beta1 = 0.9;
  double adamw_beta2 = 0.999;
  double adamw_eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const;
};

// Adam moment accumulators, shaped like the parameter set.
struct OptimizerState {
  std::vector<Mat> first_moment;
  std::vector<Mat> second_moment;
  uint64_t step = 0;

  static OptimizerState like(const Parameters& params);
};

struct ExampleSet {
  std::vector<TrainingExample> examples;
  size_t skipped_no_relevant = 0;  // queries without a judged-relevant passage in store
  size_t short_windows = 0;        // queries whose rank window held fewer than n_negatives
};

// Deterministic per cfg.seed. Feedback is the first-stage top-k;
// negatives are drawn uniformly without replacement from ranks
// [low, high] of the first-stage ranking, excluding labeled-relevant
// passages; the positive is drawn uniformly from the query's labeled
// relevant passages present in the store.
ExampleSet build_examples(const VectorStore& corpus, const VectorStore& queries,
                          const Qrels& qrels, const TrainConfig& cfg);

// Softmax cross-entropy over dot-product scores with the positive as
// the target class, computed with log-sum-exp stabilization:
//   -log( e^{s+} / (e^{s+} + sum_i e^{s-_i}) )
double loss_from_scores(double positive_score, std::span<const double> negative_scores);
double loss(std::span<const float> new_query, std::span<const float> positive,
            const std::vector<std::span<const float>>& negatives);

struct GradResult {
  Parameters grads;  // same shapes as the parameters
  double mean_loss = 0.0;
};

// Gradient of the mean batch loss w.r.t. every parameter, by
// reverse-mode differentiation through the encoder and the loss.
// dropout_rng null disables dropout and makes the result deterministic.
GradResult grad(const Parameters& params, std::span<const TrainingExample> batch,
                const TrainConfig& cfg, Rng* dropout_rng);

// Decoupled-weight-decay Adam with bias correction. Biases and
// layer-norm tensors are exempt from decay.
void adamw_step(Parameters& params, const Parameters& grads, OptimizerState& state,
                const TrainConfig& cfg);

struct EpochLog {
  uint32_t epoch = 0;
  double mean_loss = 0.0;
  double val_ndcg10 = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  Parameters best;
  uint32_t best_epoch = 0;
  double best_val_ndcg10 = 0.0;
  std::vector<EpochLog> log;
  std::string best_checkpoint_path;
};

// Full training loop: per-epoch AdamW over shuffled batches, validation
// nDCG@10 through the complete two-stage feedback pipeline, one
// checkpoint per epoch plus a `best` pointer file and a tab-separated
// log under out_dir. Single-threaded and deterministic per seed.
TrainResult train(const VectorStore& corpus, const VectorStore& train_queries,
                  const Qrels& train_qrels, const VectorStore& val_queries,
                  const Qrels& val_qrels, const ModelConfig& model_config,
                  const TrainConfig& train_config, const std::string& out_dir);

// Mean validation nDCG@10 of the two-stage pipeline under the given
// parameters (first-stage top-k feedback -> encode -> second search).
double validation_ndcg10(const Parameters& params, const VectorStore& corpus,
                         const VectorStore& queries, const Qrels& qrels,
                         uint32_t prf_depth);

}  // namespace tprf
