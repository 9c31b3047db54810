#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tprf/bench.hpp"
#include "tprf/dense_index.hpp"
#include "tprf/errors.hpp"
#include "tprf/metrics.hpp"
#include "tprf/pipeline.hpp"
#include "tprf/trainer.hpp"
#include "tprf/vector_store.hpp"

namespace {

using namespace tprf;

struct SearchArgs {
  PipelineConfig cfg;
  std::string method = "none";
};

void add_search_command(CLI::App& app) {
  auto args = std::make_shared<SearchArgs>();
  CLI::App* cmd = app.add_subcommand("search", "run retrieval with an optional feedback rewrite");
  cmd->add_option("--corpus", args->cfg.corpus_path, "corpus store (DFV1)")->required();
  cmd->add_option("--queries", args->cfg.queries_path, "query store (DFV1)")->required();
  cmd->add_option("--run", args->cfg.run_path, "output TREC run file")->required();
  cmd->add_option("--prf", args->method, "feedback method: none|avg|rocchio|tprf");
  cmd->add_option("--k", args->cfg.k, "feedback depth");
  cmd->add_option("--final-k", args->cfg.final_k, "second-stage depth");
  cmd->add_option("--alpha", args->cfg.rocchio.alpha, "rocchio query weight");
  cmd->add_option("--beta", args->cfg.rocchio.beta, "rocchio feedback weight");
  cmd->add_option("--checkpoint", args->cfg.checkpoint_path, "model checkpoint (tprf method)");
  cmd->add_option("--tag", args->cfg.tag, "run tag (defaults to the method name)");
  cmd->add_option("--seed", args->cfg.seed, "seed");
  cmd->callback([args]() {
    args->cfg.method = parse_prf_method(args->method);
    run_search(args->cfg);
    std::fprintf(stderr, "wrote %s\n", args->cfg.run_path.c_str());
  });
}

struct SynthArgs {
  SyntheticConfig cfg;
  std::string corpus_path, queries_path, qrels_path;
};

void add_synth_command(CLI::App& app) {
  auto args = std::make_shared<SynthArgs>();
  CLI::App* cmd = app.add_subcommand("synth", "generate a clustered synthetic collection");
  cmd->add_option("--clusters", args->cfg.n_clusters, "number of clusters");
  cmd->add_option("--passages", args->cfg.passages_per_cluster, "passages per cluster");
  cmd->add_option("--relevant", args->cfg.relevant_per_cluster, "relevant passages per cluster");
  cmd->add_option("--dim", args->cfg.dim, "embedding dimension");
  cmd->add_option("--sigma-rel", args->cfg.sigma_rel, "noise scale of relevant passages");
  cmd->add_option("--sigma-query", args->cfg.sigma_query, "noise scale of queries");
  cmd->add_option("--seed", args->cfg.seed, "seed");
  cmd->add_option("--corpus", args->corpus_path, "output corpus store")->required();
  cmd->add_option("--queries", args->queries_path, "output query store")->required();
  cmd->add_option("--qrels", args->qrels_path, "output qrels file")->required();
  cmd->callback([args]() {
    const SyntheticData data = generate_synthetic(args->cfg);
    save_store(data.corpus, args->corpus_path);
    save_store(data.queries, args->queries_path);
    write_qrels(data.qrels, args->qrels_path);
    std::fprintf(stderr, "wrote %zu passages, %zu queries, %zu judgments\n",
                 data.corpus.size(), data.queries.size(), data.qrels.size());
  });
}

struct IngestArgs {
  std::string input_path, output_path;
  uint32_t dim = 768;
};

void add_ingest_command(CLI::App& app) {
  auto args = std::make_shared<IngestArgs>();
  CLI::App* cmd = app.add_subcommand("ingest", "convert 'id<TAB>v1,v2,...' text dumps to a store");
  cmd->add_option("--input", args->input_path, "text embedding dump")->required();
  cmd->add_option("--dim", args->dim, "embedding dimension")->required();
  cmd->add_option("--output", args->output_path, "output store")->required();
  cmd->callback([args]() {
    const VectorStore store = ingest_text(args->input_path, args->dim);
    save_store(store, args->output_path);
    std::fprintf(stderr, "wrote %zu rows of dim %u\n", store.size(), store.dim());
  });
}

struct EvalArgs {
  EvalRequest request;
  int min_grade = 2;
  bool exp_gain = false;
};

void add_eval_command(CLI::App& app) {
  auto args = std::make_shared<EvalArgs>();
  CLI::App* cmd = app.add_subcommand("eval", "score a run (optionally against a baseline run)");
  cmd->add_option("--run", args->request.run_path, "run file to score")->required();
  cmd->add_option("--baseline", args->request.baseline_path,
                  "baseline run for paired significance tests");
  cmd->add_option("--qrels", args->request.qrels_path, "qrels file")->required();
  cmd->add_option("--min-grade", args->min_grade,
                  "binarization threshold for MAP/RR/Recall");
  cmd->add_flag("--exp-gain", args->exp_gain, "use 2^rel-1 DCG gain instead of linear");
  cmd->callback([args]() {
    args->request.options.binarize_min_grade = args->min_grade;
    args->request.options.exponential_gain = args->exp_gain;
    const EvalOutput out = run_eval(args->request);
    std::cout << out.table;
  });
}

struct TrainArgs {
  TrainRequest request;
  std::vector<uint32_t> layers{1};
  std::vector<uint32_t> heads{1};
};

void add_train_command(CLI::App& app) {
  auto args = std::make_shared<TrainArgs>();
  CLI::App* cmd = app.add_subcommand("train", "train feedback encoders (layers x heads grid)");
  cmd->add_option("--corpus", args->request.corpus_path)->required();
  cmd->add_option("--train-queries", args->request.train_queries_path)->required();
  cmd->add_option("--train-qrels", args->request.train_qrels_path)->required();
  cmd->add_option("--val-queries", args->request.val_queries_path)->required();
  cmd->add_option("--val-qrels", args->request.val_qrels_path)->required();
  cmd->add_option("--out", args->request.out_dir, "output directory")->required();
  cmd->add_option("--layers", args->layers, "encoder layer counts (list forms a grid)")
      ->delimiter(',');
  cmd->add_option("--heads", args->heads, "attention head counts (list forms a grid)")
      ->delimiter(',');
  cmd->add_option("--dim", args->request.model.model_dim, "model/input dimension");
  cmd->add_option("--ffn", args->request.model.ffn_dim, "feed-forward hidden size");
  cmd->add_option("--dropout", args->request.model.dropout, "dropout probability");
  cmd->add_option("--lr", args->request.train.lr, "learning rate");
  cmd->add_option("--batch-size", args->request.train.batch_size, "batch size");
  cmd->add_option("--epochs", args->request.train.epochs, "training epochs");
  cmd->add_option("--negatives", args->request.train.n_negatives, "negatives per example");
  cmd->add_option("--neg-rank-low", args->request.train.negative_rank_low,
                  "low end of the negative sampling rank window");
  cmd->add_option("--neg-rank-high", args->request.train.negative_rank_high,
                  "high end of the negative sampling rank window");
  cmd->add_option("--k", args->request.train.prf_depth, "feedback depth");
  cmd->add_option("--seed", args->request.train.seed, "seed");
  cmd->callback([args]() {
    namespace fs = std::filesystem;
    const bool grid = args->layers.size() > 1 || args->heads.size() > 1;
    std::string best_path;
    for (uint32_t l : args->layers) {
      for (uint32_t h : args->heads) {
        TrainRequest request = args->request;
        request.model.layers = l;
        request.model.heads = h;
        if (grid)
          request.out_dir =
              (fs::path(args->request.out_dir) /
               ("l" + std::to_string(l) + "_h" + std::to_string(h))).string();
        best_path = run_train(request);
        std::cout << best_path << '\n';
      }
    }
  });
}

struct BenchArgs {
  PipelineConfig cfg;
  std::string method = "tprf";
  size_t n = 100;
  size_t warmup = 10;
  bool size_only = false;
  bool encode_only = false;
  uint32_t layers = 1, heads = 1, dim = 768, ffn = 1024;
};

QueryFn make_pipeline_fn(const VectorStore& corpus, PrfMethod method, uint32_t k,
                         uint32_t final_k, const RocchioParams& rocchio,
                         const Parameters* params, bool encode_only) {
  if (encode_only) {
    return [&corpus, method, k, rocchio, params](std::span<const float> query) {
      rewrite_query(corpus, query, method, k, rocchio, params);
    };
  }
  return [&corpus, method, k, final_k, rocchio, params](std::span<const float> query) {
    const std::vector<float> q = rewrite_query(corpus, query, method, k, rocchio, params);
    search(corpus, q, final_k);
  };
}

void print_size_report(uint32_t layers, uint32_t heads, uint32_t dim, uint32_t ffn) {
  ModelConfig cfg;
  cfg.layers = layers;
  cfg.heads = heads;
  cfg.model_dim = dim;
  cfg.ffn_dim = ffn;
  const ModelSizeReport r = model_size_report(cfg);
  std::printf("layers\theads\tparameters\traw_bytes\tcheckpoint_bytes\n");
  std::printf("%u\t%u\t%llu\t%llu\t%llu\n", layers, heads,
              static_cast<unsigned long long>(r.parameters),
              static_cast<unsigned long long>(r.raw_bytes),
              static_cast<unsigned long long>(r.checkpoint_bytes));
  std::printf(
      "# published full-scale reference points (768-dim embeddings, checkpoints\n"
      "# carrying optimizer state): l=1,h=1 62.7 MB; l=6 299.2 MB; largest 582.9 MB;\n"
      "# text-encoder PRF baseline 503.4 MB. Shown for scale context, not asserted.\n");
}

void add_bench_command(CLI::App& app) {
  auto args = std::make_shared<BenchArgs>();
  CLI::App* cmd = app.add_subcommand("bench", "measure per-query latency or model size");
  cmd->add_option("--corpus", args->cfg.corpus_path);
  cmd->add_option("--queries", args->cfg.queries_path);
  cmd->add_option("--prf", args->method, "feedback method: none|avg|rocchio|tprf");
  cmd->add_option("--k", args->cfg.k, "feedback depth");
  cmd->add_option("--final-k", args->cfg.final_k, "second-stage depth");
  cmd->add_option("--alpha", args->cfg.rocchio.alpha);
  cmd->add_option("--beta", args->cfg.rocchio.beta);
  cmd->add_option("--checkpoint", args->cfg.checkpoint_path);
  cmd->add_option("--n", args->n, "queries to time");
  cmd->add_option("--warmup", args->warmup, "untimed warmup iterations");
  cmd->add_option("--seed", args->cfg.seed);
  cmd->add_flag("--encode-only", args->encode_only, "time only the rewrite stage");
  cmd->add_flag("--size", args->size_only, "print the model size report instead");
  cmd->add_option("--layers", args->layers, "layers (size report)");
  cmd->add_option("--heads", args->heads, "heads (size report)");
  cmd->add_option("--dim", args->dim, "model dim (size report)");
  cmd->add_option("--ffn", args->ffn, "ffn dim (size report)");
  cmd->callback([args]() {
    if (args->size_only) {
      print_size_report(args->layers, args->heads, args->dim, args->ffn);
      return;
    }
    args->cfg.method = parse_prf_method(args->method);
    if (args->cfg.corpus_path.empty() || args->cfg.queries_path.empty())
      throw_config("bench requires --corpus and --queries unless --size is given");
    args->cfg.validate();
    const VectorStore corpus = load_store(args->cfg.corpus_path);
    const VectorStore queries = load_store(args->cfg.queries_path);
    std::optional<Parameters> params;
    if (args->cfg.method == PrfMethod::Tprf)
      params = load_checkpoint(args->cfg.checkpoint_path);
    const QueryFn fn =
        make_pipeline_fn(corpus, args->cfg.method, args->cfg.k, args->cfg.final_k,
                         args->cfg.rocchio, params ? &*params : nullptr, args->encode_only);
    const LatencyReport report =
        measure_latency(fn, queries, args->n, args->warmup, args->cfg.seed,
                        prf_method_name(args->cfg.method), args->cfg.k);
    const std::vector<LatencyReport> rows{report};
    std::cout << latency_tsv(rows);
  });
}

struct SweepArgs {
  BenchArgs bench;
  std::vector<uint32_t> ks{1, 3, 5, 10, 20, 50, 100};
  std::string csv_path;
  bool no_text_sim = false;
};

void add_sweep_command(CLI::App& app) {
  auto args = std::make_shared<SweepArgs>();
  CLI::App* cmd = app.add_subcommand("sweep", "latency as a function of feedback depth");
  cmd->add_option("--corpus", args->bench.cfg.corpus_path)->required();
  cmd->add_option("--queries", args->bench.cfg.queries_path)->required();
  cmd->add_option("--prf", args->bench.method, "feedback method: none|avg|rocchio|tprf");
  cmd->add_option("--ks", args->ks, "ascending feedback depths")->delimiter(',');
  cmd->add_option("--final-k", args->bench.cfg.final_k);
  cmd->add_option("--alpha", args->bench.cfg.rocchio.alpha);
  cmd->add_option("--beta", args->bench.cfg.rocchio.beta);
  cmd->add_option("--checkpoint", args->bench.cfg.checkpoint_path);
  cmd->add_option("--n", args->bench.n, "queries to time per depth");
  cmd->add_option("--warmup", args->bench.warmup);
  cmd->add_option("--seed", args->bench.cfg.seed);
  cmd->add_option("--csv", args->csv_path, "also write the plot-ready CSV here");
  cmd->add_flag("--no-text-sim", args->no_text_sim,
                "omit the simulated text-concatenation PRF cost rows");
  cmd->callback([args]() {
    args->bench.cfg.method = parse_prf_method(args->bench.method);
    args->bench.cfg.k = args->ks.empty() ? 1 : args->ks.front();
    args->bench.cfg.validate();
    const VectorStore corpus = load_store(args->bench.cfg.corpus_path);
    const VectorStore queries = load_store(args->bench.cfg.queries_path);
    std::optional<Parameters> params;
    if (args->bench.cfg.method == PrfMethod::Tprf)
      params = load_checkpoint(args->bench.cfg.checkpoint_path);

    auto make = [&](uint32_t k) {
      return make_pipeline_fn(corpus, args->bench.cfg.method, k, args->bench.cfg.final_k,
                              args->bench.cfg.rocchio, params ? &*params : nullptr,
                              args->bench.encode_only);
    };
    std::vector<LatencyReport> rows =
        sweep_prf_depth(make, queries, args->ks, args->bench.n, args->bench.warmup,
                        args->bench.cfg.seed, prf_method_name(args->bench.cfg.method));
    if (!args->no_text_sim) {
      // Same depths through the capped-attention cost model, reported in
      // pseudo-latency units for shape comparison on one plot.
      for (uint32_t k : args->ks) {
        LatencyReport sim;
        sim.method = "text-prf-sim";
        sim.prf_depth = k;
        sim.n_queries = args->bench.n;
        sim.mean_ms = text_prf_cost_model(k) / 1000.0;
        sim.environment = "model: cost ~ min(tokens,512)^2";
        rows.push_back(sim);
      }
    }
    std::cout << latency_tsv(rows);
    if (!args->csv_path.empty()) {
      std::ofstream csv(args->csv_path, std::ios::trunc);
      csv << latency_csv(rows);
      std::fprintf(stderr, "wrote %s\n", args->csv_path.c_str());
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dense retrieval with transformer-based pseudo-relevance feedback"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from a key=value file");
  app.allow_config_extras(CLI::config_extras_mode::error);

  add_ingest_command(app);
  add_synth_command(app);
  add_search_command(app);
  add_train_command(app);
  add_eval_command(app);
  add_bench_command(app);
  add_sweep_command(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const tprf::Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.kind_name(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 3;
  }
  return 0;
}
