#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "protoshift/episodes.hpp"
#include "protoshift/model.hpp"
#include "protoshift/optim.hpp"

namespace protoshift {

/// One episode per gradient step. The encoder trains with SGD+momentum, the
/// graph model with Adam, both on a shared step-decay schedule.
struct TrainConfig {
    std::size_t iterations = 0;

    double encoder_lr = 0.0;
    double encoder_momentum = 0.9;
    double gcn_lr = 0.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    std::size_t decay_every = 0; // 0 means no decay
    double decay_factor = 1.0;

    std::size_t n_way = 5;
    std::size_t k_shot = 1;
    std::size_t n_query = kDefaultQueriesPerClass;
    ShiftSetting setting;
    double lambda = 0.5;

    std::uint64_t train_seed = 0;
    std::uint64_t val_seed = 1;

    std::size_t val_every = 250;
    std::size_t val_episodes = 200;
};

void validate_config(const TrainConfig& config);

/// Named, versioned hyperparameter presets:
///   desk-v1          : synthetic-benchmark scale, 0.001/0.005, short schedule
///   office-home-v1   : 5000 iterations, 0.001/0.005, halved every 2000
///   mini-imagenet-v1 : 40000 iterations, 0.001/0.005, tenth every 10000
TrainConfig train_preset(const std::string& name);
std::vector<std::string> train_preset_names();

struct TrainResult {
    GpnModel model; // best-validation checkpoint
    double best_val_accuracy = 0.0;
    std::size_t best_val_iteration = 0;
    double final_loss = 0.0;
};

/// Runs the episodic loop and returns the checkpoint with the highest
/// validation accuracy (ties keep the earlier one). The input model is left
/// untouched; training works on a deep clone. Validation runs every
/// val_every iterations and once more after the last one when the cadence
/// missed it, on one fixed set of val_episodes target-domain episodes.
/// When log is given, one JSON object per line is streamed:
/// {iter, loss, lr_encoder, lr_gcn} plus val_acc on validation iterations.
/// A non-finite loss aborts with a diagnostic naming the iteration.
TrainResult train(const GpnModel& model, const FeatureDataset& data,
                  const TrainConfig& config, std::ostream* log = nullptr);

struct EvalReport {
    std::size_t n = 0;
    double mean = 0.0;
    double ci95 = 0.0;
    std::vector<double> accuracies; // per-episode, stream order
};

/// Mean accuracy with a 95% normal confidence interval (sample standard
/// deviation, n-1; ci95 = 0 when n = 1). Episodes draw target-domain samples
/// of the split's classes. The shared-prototype pass is precomputed once;
/// with workers > 1 episodes are scored in parallel, and the report is
/// bitwise identical to the serial one. The model is never mutated.
EvalReport evaluate(const GpnModel& model, const FeatureDataset& data, Split split,
                    std::size_t n_way, std::size_t k_shot, std::size_t n_query,
                    std::size_t episodes, std::uint64_t seed, std::size_t workers = 1);

/// Everything needed to build a fresh, untrained model deterministically.
struct ModelSpec {
    std::vector<std::size_t> encoder_dims; // d_in ... V
    std::vector<std::size_t> gcn_dims;     // J ... V
    std::uint64_t encoder_seed = 0;
    std::uint64_t gcn_seed = 0;
    DistanceMode distance_mode = DistanceMode::Squared;
    GraphForward graph_forward = GraphForward::Gcn;
};

GpnModel build_model(const ModelSpec& spec, ConceptGraph graph, ClassNodeMap class_map,
                     double lambda);

struct SweepRow {
    double lambda = 0.0;
    EvalReport report;
};

/// Trains one model per grid value with identical seeds and data, evaluates
/// each on the test split, and returns rows in grid order.
std::vector<SweepRow> sweep_lambda(const ModelSpec& spec, const ConceptGraph& graph,
                                   const ClassNodeMap& class_map,
                                   const FeatureDataset& data, const TrainConfig& config,
                                   const std::vector<double>& grid,
                                   std::size_t eval_episodes, std::uint64_t eval_seed,
                                   std::size_t workers = 1, std::ostream* progress = nullptr);

enum class AblationKind { Rand, Fc };
std::string ablation_name(AblationKind k);
AblationKind ablation_from_name(const std::string& name);

struct AblationResult {
    AblationKind kind = AblationKind::Rand;
    TrainResult trained;
    EvalReport report;
};

/// rand: word vectors replaced with standard-normal draws (seeded) before
/// training. fc: the shared-prototype pass drops the graph propagation.
/// Everything else matches a plain run with the same spec and config.
AblationResult run_ablation(AblationKind kind, const ModelSpec& spec,
                            const ConceptGraph& graph, const ClassNodeMap& class_map,
                            const FeatureDataset& data, const TrainConfig& config,
                            std::uint64_t rand_seed, std::size_t eval_episodes,
                            std::uint64_t eval_seed, std::size_t workers = 1);

} // namespace protoshift
