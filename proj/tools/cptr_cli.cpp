// Command-line front end: train/eval/bench/compare on the synthetic recall
// task, plus dataset generation. See README for usage.

#include <CLI11.hpp>

#include "cptr/checkpoint.hpp"
#include "cptr/experiment.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

namespace {

using namespace cptr;
using namespace cptr::harness;

struct SharedFlags {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::optional<std::string> cptr_flag;  // "on" / "off"
  std::optional<std::string> ranks;
  std::optional<int> steps;
  std::string out_path;
  std::string format = "markdown";
};

void add_shared(CLI::App* cmd, SharedFlags& flags) {
  cmd->add_option("--seed", flags.seed, "RNG seed");
  cmd->add_option("--config", flags.config_path, "key = value config file");
  cmd->add_option("--cptr", flags.cptr_flag, "enable the CPTR layer (on|off)")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--ranks", flags.ranks, "Tucker ranks r1,r2,r3");
  cmd->add_option("--steps", flags.steps, "training steps");
  cmd->add_option("--out", flags.out_path, "output path (default stdout)");
  cmd->add_option("--format", flags.format, "report format")
      ->check(CLI::IsMember({"json", "csv", "markdown"}));
}

ExperimentConfig resolve_config(const SharedFlags& flags) {
  ExperimentConfig cfg;
  if (!flags.config_path.empty()) cfg = load_config_file(flags.config_path);
  if (flags.seed) {
    cfg.model.seed = *flags.seed;
    cfg.task.seed = *flags.seed;
  }
  if (flags.cptr_flag) cfg.model.cptr_enabled = *flags.cptr_flag == "on";
  if (flags.ranks) {
    std::stringstream ss(*flags.ranks);
    std::string item;
    for (int i = 0; i < 3; ++i) {
      if (!std::getline(ss, item, ',')) {
        throw ConfigError("--ranks needs three comma-separated integers");
      }
      cfg.model.cptr_ranks[static_cast<std::size_t>(i)] = std::stoll(item);
    }
  }
  if (flags.steps) cfg.train_steps = *flags.steps;
  return cfg;
}

void write_output(const SharedFlags& flags, const std::string& content) {
  if (flags.out_path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream os(flags.out_path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open output file: " + flags.out_path);
  os << content;
}

std::string engine_state_text(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::ostringstream os;
  os << rng;
  return os.str();
}

int cmd_gen_data(const SharedFlags& flags) {
  const ExperimentConfig cfg = resolve_config(flags);
  if (flags.out_path.empty()) throw ConfigError("gen-data requires --out");
  const RecallDataset ds = gen_mixed_recall_dataset(cfg.task, cfg.distances);
  save_dataset(flags.out_path, ds);
  std::cout << "wrote " << ds.sequences.size() << " sequences to " << flags.out_path
            << "\n";
  return 0;
}

int cmd_train(const SharedFlags& flags, const std::string& data_path) {
  const ExperimentConfig cfg = resolve_config(flags);
  if (flags.out_path.empty()) throw ConfigError("train requires --out <checkpoint>");
  const RecallDataset ds = data_path.empty()
                               ? gen_mixed_recall_dataset(cfg.task, cfg.distances)
                               : load_dataset(data_path);
  const std::vector<lm::Batch> batches = ds.to_batches(cfg.batch_size);
  const TrainOutcome t = train_model(cfg.model, batches, cfg.train_steps, cfg.lr);
  if (t.failed) {
    throw std::runtime_error("training diverged at step " +
                             std::to_string(t.failed_step));
  }
  Checkpoint ckpt;
  ckpt.config = cfg.model;
  ckpt.params = t.params;
  ckpt.step = t.steps;
  ckpt.rng_state = engine_state_text(cfg.model.seed);
  save_checkpoint(flags.out_path, ckpt);
  std::cout << "steps=" << t.steps << " first_loss=" << t.first_loss
            << " last_loss=" << t.last_loss << " checkpoint=" << flags.out_path
            << "\n";
  return 0;
}

MetricsReport eval_report(const ExperimentConfig& cfg, const lm::ModelConfig& model_cfg,
                          const lm::ModelParams& params, const RecallDataset& ds,
                          const std::string& label) {
  MetricsReport r;
  r.run_id = label + "-seed" + std::to_string(model_cfg.seed);
  r.config_fingerprint = config_fingerprint(model_cfg);
  r.seed = model_cfg.seed;
  const std::vector<lm::Batch> batches = ds.to_batches(cfg.batch_size);
  r.stream_hash = hex64(token_stream_hash(batches));
  r.perplexity = lm::perplexity(params, model_cfg, batches);
  r.recall = evaluate_recall(params, model_cfg, ds);
  return r;
}

int cmd_eval(const SharedFlags& flags, const std::string& ckpt_path,
             const std::string& data_path) {
  const ExperimentConfig cfg = resolve_config(flags);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  RecallDataset ds;
  if (!data_path.empty()) {
    ds = load_dataset(data_path);
  } else {
    ExperimentConfig eval_cfg = cfg;
    eval_cfg.task.vocab_size = ckpt.config.vocab_size;
    eval_cfg.task.seq_len = ckpt.config.max_seq_len;
    eval_cfg.task.n_sequences = cfg.eval_sequences;
    ds = gen_mixed_recall_dataset(eval_cfg.task, eval_cfg.distances);
  }
  const MetricsReport r = eval_report(cfg, ckpt.config, ckpt.params, ds, "eval");
  write_output(flags, emit_report({r}, parse_report_format(flags.format)));
  return 0;
}

int cmd_bench(const SharedFlags& flags, const std::string& ckpt_path) {
  const ExperimentConfig cfg = resolve_config(flags);
  lm::ModelConfig model_cfg = cfg.model;
  lm::ModelParams params = lm::ModelParams::init(model_cfg);
  if (!ckpt_path.empty()) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    model_cfg = ckpt.config;
    params = std::move(ckpt.params);
  }
  MetricsReport r;
  r.run_id = std::string("bench-") + (model_cfg.cptr_enabled ? "cptr" : "baseline");
  r.config_fingerprint = config_fingerprint(model_cfg);
  r.seed = model_cfg.seed;
  r.ms_per_token = measure_latency(params, model_cfg, cfg.latency_batch_sizes,
                                   cfg.latency_tokens, cfg.latency_repeats);
  write_output(flags, emit_report({r}, parse_report_format(flags.format)));
  return 0;
}

int cmd_compare(const SharedFlags& flags) {
  const ExperimentConfig cfg = resolve_config(flags);
  const ExperimentResult result = run_experiment(cfg);
  write_output(flags, emit_report({result.baseline, result.cptr},
                                  parse_report_format(flags.format)));
  if (result.baseline.failed || result.cptr.failed) return 2;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensorial-reconfiguration language-model benchmark harness"};
  app.require_subcommand(1);

  SharedFlags gen_flags, train_flags, eval_flags, bench_flags, compare_flags;
  std::string train_data, eval_data, eval_ckpt, bench_ckpt;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a recall-task dataset");
  add_shared(gen, gen_flags);

  CLI::App* train = app.add_subcommand("train", "train a model and save a checkpoint");
  add_shared(train, train_flags);
  train->add_option("--data", train_data, "dataset file (default: generated)");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_shared(eval, eval_flags);
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--data", eval_data, "dataset file (default: generated)");

  CLI::App* bench = app.add_subcommand("bench", "measure generation latency");
  add_shared(bench, bench_flags);
  bench->add_option("--ckpt", bench_ckpt, "checkpoint path (default: fresh init)");

  CLI::App* compare =
      app.add_subcommand("compare", "train and compare baseline vs CPTR");
  add_shared(compare, compare_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_flags);
    if (train->parsed()) return cmd_train(train_flags, train_data);
    if (eval->parsed()) return cmd_eval(eval_flags, eval_ckpt, eval_data);
    if (bench->parsed()) return cmd_bench(bench_flags, bench_ckpt);
    if (compare->parsed()) return cmd_compare(compare_flags);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '"' || c == '\n') c = ' ';
    }
    std::cerr << "{\"error\":\"" << msg << "\"}\n";
    return 1;
  }
  return 0;
}
