#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "protoshift/serialize.hpp"
#include "protoshift/synth.hpp"
#include "protoshift/trainer.hpp"

namespace protoshift {

/// Operator-facing run configuration. Every field has a default; a JSON
/// config file may override any of them and unknown keys are rejected.
/// Flags land on top of the parsed file, and the master seed falls back to
/// the PROTO_SHIFT_SEED environment variable when nothing else set it.
/// Derived seeds (encoder, graph model, episode streams, evaluation) come
/// from fixed substreams of the master seed unless pinned explicitly.
struct RunConfig {
    std::string data = "bench";
    std::string out_dir = "run-out";
    std::uint64_t seed = 0;

    // model
    std::vector<std::size_t> encoder_hidden{64};
    std::size_t embed_dim = 32;
    std::vector<std::size_t> gcn_hidden{64};
    std::string distance_mode = "squared";
    std::optional<std::uint64_t> encoder_seed;
    std::optional<std::uint64_t> gcn_seed;

    // train
    std::string preset = "desk-v1";
    std::optional<std::size_t> iterations;
    std::optional<double> encoder_lr;
    std::optional<double> gcn_lr;
    std::optional<double> momentum;
    std::optional<double> adam_beta1;
    std::optional<double> adam_beta2;
    std::optional<double> adam_eps;
    std::optional<std::size_t> decay_every;
    std::optional<double> decay_factor;
    std::size_t n_way = 5;
    std::size_t k_shot = 1;
    std::size_t n_query = kDefaultQueriesPerClass;
    std::string setting = "fulltgt";
    std::vector<int> tgt_visible_classes;
    double lambda = 0.5;
    std::optional<std::uint64_t> train_seed;
    std::optional<std::uint64_t> val_seed;
    std::optional<std::size_t> val_every;
    std::optional<std::size_t> val_episodes;

    // eval
    std::string eval_split = "test";
    std::size_t eval_episodes = 1000;
    std::optional<std::uint64_t> eval_seed;
    std::size_t workers = 1;
    std::optional<std::uint64_t> ablation_seed;
};

/// Strict parse: unknown keys anywhere raise ConfigError naming them, as do
/// wrong types and out-of-range values. Seed resolution order for the master
/// seed is file value, then PROTO_SHIFT_SEED, then 0 (CLI flags override
/// later through the returned struct).
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Concrete training configuration: the preset resolved, explicit overrides
/// applied, and derived seeds filled in.
TrainConfig resolved_train_config(const RunConfig& cfg, int target_domain);
ModelSpec resolved_model_spec(const RunConfig& cfg, std::size_t feature_dim,
                              std::size_t word_dim);
std::uint64_t resolved_eval_seed(const RunConfig& cfg);
std::uint64_t resolved_ablation_seed(const RunConfig& cfg);

/// Writes a complete benchmark directory (created if missing).
void run_synth(const std::string& preset_name, std::optional<std::uint64_t> seed,
               const std::filesystem::path& out_dir, std::ostream& diag);

struct TrainRunOutputs {
    std::filesystem::path checkpoint;
    std::filesystem::path log;
    double best_val_accuracy = 0.0;
    std::size_t best_val_iteration = 0;
    double final_loss = 0.0;
};

/// Loads the benchmark, trains, and writes model.ckpt, train_log.jsonl, and
/// train_summary.json into cfg.out_dir.
TrainRunOutputs run_train(const RunConfig& cfg, std::ostream& diag);

/// Evaluates a checkpoint against a benchmark split. When csv_path is given,
/// per-episode accuracies are also written ("episode,accuracy" rows).
EvalReport run_eval(const std::filesystem::path& checkpoint,
                    const std::filesystem::path& data_dir, const RunConfig& cfg,
                    std::ostream& diag,
                    const std::optional<std::filesystem::path>& csv_path = {});

/// Trains and evaluates one model per grid point; writes sweep.csv
/// ("param,mean,ci95") into cfg.out_dir and returns the rows.
std::vector<SweepRow> run_sweep(const RunConfig& cfg, const std::vector<double>& grid,
                                std::ostream& diag);

/// Runs one ablation arm; writes ablation.csv and the arm's checkpoint into
/// cfg.out_dir.
AblationResult run_ablate(const RunConfig& cfg, AblationKind kind, std::ostream& diag);

/// JSON body of an evaluation report: {ci95, mean, n}.
json eval_report_json(const EvalReport& report);

/// Warns on diag when some dataset class node cannot be reached from any
/// training-class node (the graph cannot move task-shared information there).
void warn_if_disconnected(const ConceptGraph& graph, const ClassNodeMap& map,
                          const FeatureDataset& data, std::ostream& diag);

} // namespace protoshift
