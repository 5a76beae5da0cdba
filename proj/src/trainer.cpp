#include "protoshift/trainer.hpp"

#include <cmath>
#include <mutex>
#include <ostream>
#include <thread>

#include "protoshift/serialize.hpp"

namespace protoshift {

void validate_config(const TrainConfig& config) {
    if (config.iterations == 0) throw ValueError("iterations must be positive");
    if (!(config.encoder_lr > 0.0)) throw ValueError("encoder learning rate must be positive");
    if (!(config.gcn_lr > 0.0)) throw ValueError("graph-model learning rate must be positive");
    if (config.encoder_momentum < 0.0 || config.encoder_momentum >= 1.0)
        throw ValueError("momentum must be in [0,1)");
    if (config.decay_every > 0 &&
        !(config.decay_factor > 0.0 && config.decay_factor <= 1.0))
        throw ValueError("decay factor must be in (0,1]");
    if (config.n_way == 0 || config.k_shot == 0 || config.n_query == 0)
        throw ValueError("episode dimensions must be positive");
    if (!(config.lambda >= 0.0 && config.lambda <= 1.0))
        throw ValueError("lambda must be in [0,1]");
    if (config.val_every == 0) throw ValueError("val_every must be positive");
    if (config.val_episodes == 0) throw ValueError("val_episodes must be positive");
}

TrainConfig train_preset(const std::string& name) {
    TrainConfig c;
    if (name == "desk-v1") {
        c.iterations = 1200;
        c.encoder_lr = 0.001;
        c.gcn_lr = 0.005;
        c.decay_every = 400;
        c.decay_factor = 0.5;
        c.val_every = 250;
        c.val_episodes = 200;
        return c;
    }
    if (name == "office-home-v1") {
        c.iterations = 5000;
        c.encoder_lr = 0.001;
        c.gcn_lr = 0.005;
        c.decay_every = 2000;
        c.decay_factor = 0.5;
        return c;
    }
    if (name == "mini-imagenet-v1") {
        c.iterations = 40000;
        c.encoder_lr = 0.001;
        c.gcn_lr = 0.005;
        c.decay_every = 10000;
        c.decay_factor = 0.1;
        return c;
    }
    throw ConfigError("unknown training preset '" + name + "'");
}

std::vector<std::string> train_preset_names() {
    return {"desk-v1", "office-home-v1", "mini-imagenet-v1"};
}

namespace {

double mean_accuracy_over(const GpnModel& model, const EpisodeStream& stream,
                          const Tensor& shared) {
    double acc = 0.0;
    for (std::size_t i = 0; i < stream.size(); ++i)
        acc += episode_accuracy(model, stream.episode(i), &shared);
    return acc / static_cast<double>(stream.size());
}

Tensor frozen_shared_nodes(const GpnModel& model) {
    Tape tape;
    return shared_nodes_forward(tape, model);
}

} // namespace

TrainResult train(const GpnModel& model, const FeatureDataset& data,
                  const TrainConfig& config, std::ostream* log) {
    validate_config(config);
    validate_dataset(data);
    GpnModel working = deep_clone(model);
    working.lambda = config.lambda;
    validate_model(working);
    if (working.encoder.input_dim() != data.feature_dim())
        throw ShapeError("encoder input dim " + std::to_string(working.encoder.input_dim()) +
                         " does not match dataset feature dim " +
                         std::to_string(data.feature_dim()));

    EpisodeStream train_stream(data, Split::Train, config.n_way, config.k_shot,
                               config.n_query, config.setting, config.train_seed,
                               config.iterations);
    ShiftSetting val_setting = config.setting; // kind is ignored off the train split
    EpisodeStream val_stream(data, Split::Val, config.n_way, config.k_shot, config.n_query,
                             val_setting, config.val_seed, config.val_episodes);

    std::vector<Tensor> enc_params = working.encoder.parameters();
    std::vector<Tensor> gcn_params = working.gcn.parameters();
    SgdMomentum enc_opt(enc_params, config.encoder_lr, config.encoder_momentum);
    Adam gcn_opt(gcn_params, config.gcn_lr, config.adam_beta1, config.adam_beta2,
                 config.adam_eps);
    LrSchedule enc_sched{config.encoder_lr,
                         config.decay_every ? config.decay_every : config.iterations,
                         config.decay_every ? config.decay_factor : 1.0};
    LrSchedule gcn_sched{config.gcn_lr, enc_sched.every, enc_sched.factor};
    enc_sched.validate();
    gcn_sched.validate();

    TrainResult result;
    result.best_val_accuracy = -1.0;
    double last_loss = 0.0;
    bool have_best = false;

    for (std::size_t t = 0; t < config.iterations; ++t) {
        const double lr_enc = enc_sched.at(t);
        const double lr_gcn = gcn_sched.at(t);
        enc_opt.set_lr(lr_enc);
        gcn_opt.set_lr(lr_gcn);

        Episode ep = train_stream.episode(t);
        Tape tape;
        Tensor loss = episode_loss(tape, working, ep);
        last_loss = loss.item();
        if (!std::isfinite(last_loss))
            throw ValueError("training aborted: non-finite loss at iteration " +
                             std::to_string(t));
        tape.backward(loss);
        enc_opt.step();
        gcn_opt.step();
        zero_grads(enc_params);
        zero_grads(gcn_params);

        const bool scheduled_val = (t + 1) % config.val_every == 0;
        const bool final_val = (t + 1 == config.iterations) && !scheduled_val && !have_best;
        std::optional<double> val_acc;
        if (scheduled_val || final_val) {
            Tensor shared = frozen_shared_nodes(working);
            val_acc = mean_accuracy_over(working, val_stream, shared);
            if (*val_acc > result.best_val_accuracy) {
                result.best_val_accuracy = *val_acc;
                result.best_val_iteration = t;
                result.model = deep_clone(working);
                have_best = true;
            }
        }
        if (log) {
            json line;
            line["iter"] = t;
            line["loss"] = last_loss;
            line["lr_encoder"] = lr_enc;
            line["lr_gcn"] = lr_gcn;
            if (val_acc) line["val_acc"] = *val_acc;
            *log << line.dump() << '\n';
        }
    }
    result.final_loss = last_loss;
    return result;
}

EvalReport evaluate(const GpnModel& model, const FeatureDataset& data, Split split,
                    std::size_t n_way, std::size_t k_shot, std::size_t n_query,
                    std::size_t episodes, std::uint64_t seed, std::size_t workers) {
    if (episodes == 0) throw ValueError("evaluate needs at least one episode");
    validate_model(model);
    ShiftSetting setting;
    setting.target_domain = data.target_domain;
    EpisodeStream stream(data, split, n_way, k_shot, n_query, setting, seed, episodes);
    Tensor shared = frozen_shared_nodes(model);

    EvalReport report;
    report.n = episodes;
    report.accuracies.assign(episodes, 0.0);
    if (workers <= 1) {
        for (std::size_t i = 0; i < episodes; ++i)
            report.accuracies[i] = episode_accuracy(model, stream.episode(i), &shared);
    } else {
        const std::size_t W = std::min(workers, episodes);
        std::vector<std::thread> pool;
        pool.reserve(W);
        std::exception_ptr failure;
        std::mutex failure_mutex;
        for (std::size_t w = 0; w < W; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < episodes; i += W)
                        report.accuracies[i] =
                            episode_accuracy(model, stream.episode(i), &shared);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            });
        for (std::thread& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }

    // Index-order reduction keeps the report identical for any worker count.
    double sum = 0.0;
    for (double a : report.accuracies) sum += a;
    report.mean = sum / static_cast<double>(episodes);
    if (episodes > 1) {
        double sq = 0.0;
        for (double a : report.accuracies) sq += (a - report.mean) * (a - report.mean);
        double sigma = std::sqrt(sq / static_cast<double>(episodes - 1));
        report.ci95 = 1.96 * sigma / std::sqrt(static_cast<double>(episodes));
    }
    return report;
}

GpnModel build_model(const ModelSpec& spec, ConceptGraph graph, ClassNodeMap class_map,
                     double lambda) {
    GpnModel model;
    model.encoder = init_encoder(spec.encoder_dims, spec.encoder_seed);
    model.gcn = init_gcn(spec.gcn_dims, spec.gcn_seed);
    model.graph = std::move(graph);
    model.class_map = std::move(class_map);
    model.lambda = lambda;
    model.distance_mode = spec.distance_mode;
    model.graph_forward = spec.graph_forward;
    validate_model(model);
    return model;
}

std::vector<SweepRow> sweep_lambda(const ModelSpec& spec, const ConceptGraph& graph,
                                   const ClassNodeMap& class_map,
                                   const FeatureDataset& data, const TrainConfig& config,
                                   const std::vector<double>& grid,
                                   std::size_t eval_episodes, std::uint64_t eval_seed,
                                   std::size_t workers, std::ostream* progress) {
    for (double l : grid)
        if (!(l >= 0.0 && l <= 1.0))
            throw ValueError("sweep grid value " + std::to_string(l) + " outside [0,1]");
    std::vector<SweepRow> rows;
    rows.reserve(grid.size());
    for (double l : grid) {
        TrainConfig cfg = config;
        cfg.lambda = l;
        GpnModel model = build_model(spec, graph, class_map, l);
        TrainResult trained = train(model, data, cfg);
        EvalReport report = evaluate(trained.model, data, Split::Test, cfg.n_way,
                                     cfg.k_shot, cfg.n_query, eval_episodes, eval_seed,
                                     workers);
        if (progress) {
            json line;
            line["lambda"] = l;
            line["mean"] = report.mean;
            line["ci95"] = report.ci95;
            *progress << line.dump() << '\n';
        }
        rows.push_back({l, std::move(report)});
    }
    return rows;
}

std::string ablation_name(AblationKind k) {
    switch (k) {
        case AblationKind::Rand: return "rand";
        case AblationKind::Fc: return "fc";
    }
    throw ValueError("unknown ablation kind");
}

AblationKind ablation_from_name(const std::string& name) {
    if (name == "rand") return AblationKind::Rand;
    if (name == "fc") return AblationKind::Fc;
    throw ValueError("unknown ablation kind '" + name + "' (expected rand or fc)");
}

AblationResult run_ablation(AblationKind kind, const ModelSpec& spec,
                            const ConceptGraph& graph, const ClassNodeMap& class_map,
                            const FeatureDataset& data, const TrainConfig& config,
                            std::uint64_t rand_seed, std::size_t eval_episodes,
                            std::uint64_t eval_seed, std::size_t workers) {
    ModelSpec arm = spec;
    ConceptGraph arm_graph = graph;
    if (kind == AblationKind::Rand) arm_graph = randomize_vectors(graph, rand_seed);
    if (kind == AblationKind::Fc) arm.graph_forward = GraphForward::Mlp;

    AblationResult result;
    result.kind = kind;
    GpnModel model = build_model(arm, std::move(arm_graph), class_map, config.lambda);
    result.trained = train(model, data, config);
    result.report = evaluate(result.trained.model, data, Split::Test, config.n_way,
                             config.k_shot, config.n_query, eval_episodes, eval_seed,
                             workers);
    return result;
}

} // namespace protoshift
