#include "protoshift/run.hpp"

#include <cstdlib>

#include "protoshift/serialize.hpp"

namespace protoshift {

namespace {

void check_keys(const json& j, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(ctx + " must be a JSON object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* key : allowed)
            if (item.key() == key) {
                known = true;
                break;
            }
        if (!known) throw ConfigError("unknown config key '" + ctx + "." + item.key() + "'");
    }
}

double as_double(const json& v, const std::string& ctx) {
    if (!v.is_number()) throw ConfigError("config key '" + ctx + "' must be a number");
    return v.get<double>();
}

std::uint64_t as_u64(const json& v, const std::string& ctx) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ConfigError("config key '" + ctx + "' must be a non-negative integer");
}

std::size_t as_size(const json& v, const std::string& ctx) {
    return static_cast<std::size_t>(as_u64(v, ctx));
}

std::string as_string(const json& v, const std::string& ctx) {
    if (!v.is_string()) throw ConfigError("config key '" + ctx + "' must be a string");
    return v.get<std::string>();
}

std::vector<std::size_t> as_size_array(const json& v, const std::string& ctx) {
    if (!v.is_array()) throw ConfigError("config key '" + ctx + "' must be an array");
    std::vector<std::size_t> out;
    for (const json& e : v) out.push_back(as_size(e, ctx));
    return out;
}

std::vector<int> as_int_array(const json& v, const std::string& ctx) {
    if (!v.is_array()) throw ConfigError("config key '" + ctx + "' must be an array");
    std::vector<int> out;
    for (const json& e : v) {
        if (!e.is_number_integer())
            throw ConfigError("config key '" + ctx + "' must hold integers");
        out.push_back(e.get<int>());
    }
    return out;
}

std::optional<std::uint64_t> env_seed() {
    const char* raw = std::getenv("PROTO_SHIFT_SEED");
    if (!raw || !*raw) return std::nullopt;
    try {
        std::size_t used = 0;
        unsigned long long v = std::stoull(raw, &used);
        if (used != std::string(raw).size())
            throw std::invalid_argument("trailing characters");
        return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("PROTO_SHIFT_SEED must be a non-negative integer, got '" +
                          std::string(raw) + "'");
    }
}

// Fixed substream tags for seeds derived from the master seed.
enum : std::uint64_t {
    kSeedEncoder = 101,
    kSeedGcn = 102,
    kSeedTrain = 103,
    kSeedVal = 104,
    kSeedEval = 105,
    kSeedAblation = 106,
};

} // namespace

RunConfig parse_run_config(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("run config is not valid JSON");
    check_keys(j, "config", {"data", "out_dir", "seed", "model", "train", "eval"});

    RunConfig cfg;
    bool seed_given = false;
    if (j.contains("data")) cfg.data = as_string(j["data"], "config.data");
    if (j.contains("out_dir")) cfg.out_dir = as_string(j["out_dir"], "config.out_dir");
    if (j.contains("seed")) {
        cfg.seed = as_u64(j["seed"], "config.seed");
        seed_given = true;
    }

    if (j.contains("model")) {
        const json& m = j["model"];
        check_keys(m, "config.model",
                   {"encoder_hidden", "embed_dim", "gcn_hidden", "distance_mode",
                    "encoder_seed", "gcn_seed"});
        if (m.contains("encoder_hidden"))
            cfg.encoder_hidden = as_size_array(m["encoder_hidden"], "config.model.encoder_hidden");
        if (m.contains("embed_dim"))
            cfg.embed_dim = as_size(m["embed_dim"], "config.model.embed_dim");
        if (m.contains("gcn_hidden"))
            cfg.gcn_hidden = as_size_array(m["gcn_hidden"], "config.model.gcn_hidden");
        if (m.contains("distance_mode"))
            cfg.distance_mode = as_string(m["distance_mode"], "config.model.distance_mode");
        if (m.contains("encoder_seed"))
            cfg.encoder_seed = as_u64(m["encoder_seed"], "config.model.encoder_seed");
        if (m.contains("gcn_seed"))
            cfg.gcn_seed = as_u64(m["gcn_seed"], "config.model.gcn_seed");
    }

    if (j.contains("train")) {
        const json& t = j["train"];
        check_keys(t, "config.train",
                   {"preset", "iterations", "encoder_lr", "gcn_lr", "momentum",
                    "adam_beta1", "adam_beta2", "adam_eps", "decay_every", "decay_factor",
                    "n_way", "k_shot", "n_query", "setting", "tgt_visible_classes",
                    "lambda", "train_seed", "val_seed", "val_every", "val_episodes"});
        if (t.contains("preset")) cfg.preset = as_string(t["preset"], "config.train.preset");
        if (t.contains("iterations"))
            cfg.iterations = as_size(t["iterations"], "config.train.iterations");
        if (t.contains("encoder_lr"))
            cfg.encoder_lr = as_double(t["encoder_lr"], "config.train.encoder_lr");
        if (t.contains("gcn_lr")) cfg.gcn_lr = as_double(t["gcn_lr"], "config.train.gcn_lr");
        if (t.contains("momentum"))
            cfg.momentum = as_double(t["momentum"], "config.train.momentum");
        if (t.contains("adam_beta1"))
            cfg.adam_beta1 = as_double(t["adam_beta1"], "config.train.adam_beta1");
        if (t.contains("adam_beta2"))
            cfg.adam_beta2 = as_double(t["adam_beta2"], "config.train.adam_beta2");
        if (t.contains("adam_eps"))
            cfg.adam_eps = as_double(t["adam_eps"], "config.train.adam_eps");
        if (t.contains("decay_every"))
            cfg.decay_every = as_size(t["decay_every"], "config.train.decay_every");
        if (t.contains("decay_factor"))
            cfg.decay_factor = as_double(t["decay_factor"], "config.train.decay_factor");
        if (t.contains("n_way")) cfg.n_way = as_size(t["n_way"], "config.train.n_way");
        if (t.contains("k_shot")) cfg.k_shot = as_size(t["k_shot"], "config.train.k_shot");
        if (t.contains("n_query")) cfg.n_query = as_size(t["n_query"], "config.train.n_query");
        if (t.contains("setting")) cfg.setting = as_string(t["setting"], "config.train.setting");
        if (t.contains("tgt_visible_classes"))
            cfg.tgt_visible_classes =
                as_int_array(t["tgt_visible_classes"], "config.train.tgt_visible_classes");
        if (t.contains("lambda")) cfg.lambda = as_double(t["lambda"], "config.train.lambda");
        if (t.contains("train_seed"))
            cfg.train_seed = as_u64(t["train_seed"], "config.train.train_seed");
        if (t.contains("val_seed")) cfg.val_seed = as_u64(t["val_seed"], "config.train.val_seed");
        if (t.contains("val_every"))
            cfg.val_every = as_size(t["val_every"], "config.train.val_every");
        if (t.contains("val_episodes"))
            cfg.val_episodes = as_size(t["val_episodes"], "config.train.val_episodes");
    }

    if (j.contains("eval")) {
        const json& e = j["eval"];
        check_keys(e, "config.eval",
                   {"split", "episodes", "seed", "workers", "ablation_seed"});
        if (e.contains("split")) cfg.eval_split = as_string(e["split"], "config.eval.split");
        if (e.contains("episodes"))
            cfg.eval_episodes = as_size(e["episodes"], "config.eval.episodes");
        if (e.contains("seed")) cfg.eval_seed = as_u64(e["seed"], "config.eval.seed");
        if (e.contains("workers")) cfg.workers = as_size(e["workers"], "config.eval.workers");
        if (e.contains("ablation_seed"))
            cfg.ablation_seed = as_u64(e["ablation_seed"], "config.eval.ablation_seed");
    }

    if (!seed_given) {
        if (auto env = env_seed()) cfg.seed = *env;
    }

    // Enumerated strings fail now, not mid-run.
    try {
        distance_mode_from_name(cfg.distance_mode);
        setting_from_name(cfg.setting);
        split_from_name(cfg.eval_split);
        train_preset(cfg.preset);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0))
        throw ConfigError("config.train.lambda must be in [0,1]");
    if (cfg.workers == 0) throw ConfigError("config.eval.workers must be positive");
    if (cfg.eval_episodes == 0) throw ConfigError("config.eval.episodes must be positive");
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

TrainConfig resolved_train_config(const RunConfig& cfg, int target_domain) {
    TrainConfig tc = train_preset(cfg.preset);
    if (cfg.iterations) tc.iterations = *cfg.iterations;
    if (cfg.encoder_lr) tc.encoder_lr = *cfg.encoder_lr;
    if (cfg.gcn_lr) tc.gcn_lr = *cfg.gcn_lr;
    if (cfg.momentum) tc.encoder_momentum = *cfg.momentum;
    if (cfg.adam_beta1) tc.adam_beta1 = *cfg.adam_beta1;
    if (cfg.adam_beta2) tc.adam_beta2 = *cfg.adam_beta2;
    if (cfg.adam_eps) tc.adam_eps = *cfg.adam_eps;
    if (cfg.decay_every) tc.decay_every = *cfg.decay_every;
    if (cfg.decay_factor) tc.decay_factor = *cfg.decay_factor;
    if (cfg.val_every) tc.val_every = *cfg.val_every;
    if (cfg.val_episodes) tc.val_episodes = *cfg.val_episodes;
    tc.n_way = cfg.n_way;
    tc.k_shot = cfg.k_shot;
    tc.n_query = cfg.n_query;
    tc.lambda = cfg.lambda;
    tc.setting.kind = setting_from_name(cfg.setting);
    tc.setting.target_domain = target_domain;
    tc.setting.tgt_visible_classes = cfg.tgt_visible_classes;
    tc.train_seed = cfg.train_seed.value_or(derive_stream(cfg.seed, kSeedTrain));
    tc.val_seed = cfg.val_seed.value_or(derive_stream(cfg.seed, kSeedVal));
    try {
        validate_config(tc);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return tc;
}

ModelSpec resolved_model_spec(const RunConfig& cfg, std::size_t feature_dim,
                              std::size_t word_dim) {
    ModelSpec spec;
    spec.encoder_dims.push_back(feature_dim);
    for (std::size_t h : cfg.encoder_hidden) spec.encoder_dims.push_back(h);
    spec.encoder_dims.push_back(cfg.embed_dim);
    spec.gcn_dims.push_back(word_dim);
    for (std::size_t h : cfg.gcn_hidden) spec.gcn_dims.push_back(h);
    spec.gcn_dims.push_back(cfg.embed_dim);
    spec.encoder_seed = cfg.encoder_seed.value_or(derive_stream(cfg.seed, kSeedEncoder));
    spec.gcn_seed = cfg.gcn_seed.value_or(derive_stream(cfg.seed, kSeedGcn));
    spec.distance_mode = distance_mode_from_name(cfg.distance_mode);
    spec.graph_forward = GraphForward::Gcn;
    return spec;
}

std::uint64_t resolved_eval_seed(const RunConfig& cfg) {
    return cfg.eval_seed.value_or(derive_stream(cfg.seed, kSeedEval));
}

std::uint64_t resolved_ablation_seed(const RunConfig& cfg) {
    return cfg.ablation_seed.value_or(derive_stream(cfg.seed, kSeedAblation));
}

void warn_if_disconnected(const ConceptGraph& graph, const ClassNodeMap& map,
                          const FeatureDataset& data, std::ostream& diag) {
    std::vector<std::size_t> starts;
    for (int c : data.splits.train)
        starts.push_back(map.node_for_class[static_cast<std::size_t>(c)]);
    if (starts.empty()) return;
    std::vector<char> seen = reachable_from(graph, starts);
    for (const auto* split : {&data.splits.train, &data.splits.val, &data.splits.test})
        for (int c : *split) {
            std::size_t node = map.node_for_class[static_cast<std::size_t>(c)];
            if (!seen[node])
                diag << "warning: class '" << data.class_names[static_cast<std::size_t>(c)]
                     << "' is not reachable from any training-class node\n";
        }
}

void run_synth(const std::string& preset_name, std::optional<std::uint64_t> seed,
               const std::filesystem::path& out_dir, std::ostream& diag) {
    SynthConfig config = synth_preset(preset_name);
    if (seed) config.seed = *seed;
    Benchmark bench = generate_benchmark(config);
    std::filesystem::create_directories(out_dir);
    write_benchmark(out_dir, bench.data, bench.graph);
    diag << "benchmark '" << preset_name << "' (seed " << config.seed << "): "
         << bench.data.sample_count() << " samples, " << bench.data.class_names.size()
         << " classes, " << bench.graph.node_count() << " graph nodes -> "
         << out_dir.string() << "\n";
}

namespace {

struct LoadedBenchmark {
    Benchmark bench;
    ClassNodeMap map;
};

LoadedBenchmark load_for_run(const std::filesystem::path& data_dir, std::ostream& diag) {
    LoadedBenchmark lb;
    lb.bench = load_benchmark(data_dir);
    lb.map = map_classes(lb.bench.graph, lb.bench.data.class_names);
    warn_if_disconnected(lb.bench.graph, lb.map, lb.bench.data, diag);
    return lb;
}

void write_csv(const std::filesystem::path& path,
               const std::vector<std::pair<std::string, EvalReport>>& rows) {
    std::ofstream os = open_output(path);
    os << "param,mean,ci95\n";
    for (const auto& [param, report] : rows)
        os << param << ',' << format_double(report.mean) << ','
           << format_double(report.ci95) << '\n';
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

} // namespace

TrainRunOutputs run_train(const RunConfig& cfg, std::ostream& diag) {
    LoadedBenchmark lb = load_for_run(cfg.data, diag);
    TrainConfig tc = resolved_train_config(cfg, lb.bench.data.target_domain);
    ModelSpec spec =
        resolved_model_spec(cfg, lb.bench.data.feature_dim(), lb.bench.graph.vector_dim());
    GpnModel model = build_model(spec, lb.bench.graph, lb.map, tc.lambda);

    std::filesystem::create_directories(cfg.out_dir);
    TrainRunOutputs out;
    out.log = std::filesystem::path(cfg.out_dir) / "train_log.jsonl";
    out.checkpoint = std::filesystem::path(cfg.out_dir) / "model.ckpt";
    std::ofstream log = open_output(out.log);
    TrainResult result = train(model, lb.bench.data, tc, &log);
    save_model(out.checkpoint, result.model);

    out.best_val_accuracy = result.best_val_accuracy;
    out.best_val_iteration = result.best_val_iteration;
    out.final_loss = result.final_loss;
    json summary;
    summary["best_val_accuracy"] = result.best_val_accuracy;
    summary["best_val_iteration"] = result.best_val_iteration;
    summary["final_loss"] = result.final_loss;
    summary["iterations"] = tc.iterations;
    std::ofstream ss = open_output(std::filesystem::path(cfg.out_dir) / "train_summary.json");
    ss << summary.dump(2) << '\n';

    diag << "trained " << tc.iterations << " iterations; best val accuracy "
         << result.best_val_accuracy << " at iteration " << result.best_val_iteration
         << "; checkpoint " << out.checkpoint.string() << "\n";
    return out;
}

EvalReport run_eval(const std::filesystem::path& checkpoint,
                    const std::filesystem::path& data_dir, const RunConfig& cfg,
                    std::ostream& diag,
                    const std::optional<std::filesystem::path>& csv_path) {
    LoadedBenchmark lb = load_for_run(data_dir, diag);
    GpnModel model = load_model(checkpoint, std::move(lb.bench.graph), std::move(lb.map));
    EvalReport report =
        evaluate(model, lb.bench.data, split_from_name(cfg.eval_split), cfg.n_way,
                 cfg.k_shot, cfg.n_query, cfg.eval_episodes, resolved_eval_seed(cfg),
                 cfg.workers);
    if (csv_path) {
        std::ofstream os = open_output(*csv_path);
        os << "episode,accuracy\n";
        for (std::size_t i = 0; i < report.accuracies.size(); ++i)
            os << i << ',' << format_double(report.accuracies[i]) << '\n';
        if (!os) throw IoError("failed writing '" + csv_path->string() + "'");
    }
    return report;
}

std::vector<SweepRow> run_sweep(const RunConfig& cfg, const std::vector<double>& grid,
                                std::ostream& diag) {
    if (grid.empty()) throw ConfigError("sweep grid is empty");
    LoadedBenchmark lb = load_for_run(cfg.data, diag);
    TrainConfig tc = resolved_train_config(cfg, lb.bench.data.target_domain);
    ModelSpec spec =
        resolved_model_spec(cfg, lb.bench.data.feature_dim(), lb.bench.graph.vector_dim());
    std::vector<SweepRow> rows =
        sweep_lambda(spec, lb.bench.graph, lb.map, lb.bench.data, tc, grid,
                     cfg.eval_episodes, resolved_eval_seed(cfg), cfg.workers, &diag);
    std::filesystem::create_directories(cfg.out_dir);
    std::vector<std::pair<std::string, EvalReport>> csv;
    csv.reserve(rows.size());
    for (const SweepRow& row : rows) csv.emplace_back(format_double(row.lambda), row.report);
    write_csv(std::filesystem::path(cfg.out_dir) / "sweep.csv", csv);
    return rows;
}

AblationResult run_ablate(const RunConfig& cfg, AblationKind kind, std::ostream& diag) {
    LoadedBenchmark lb = load_for_run(cfg.data, diag);
    TrainConfig tc = resolved_train_config(cfg, lb.bench.data.target_domain);
    ModelSpec spec =
        resolved_model_spec(cfg, lb.bench.data.feature_dim(), lb.bench.graph.vector_dim());
    AblationResult result =
        run_ablation(kind, spec, lb.bench.graph, lb.map, lb.bench.data, tc,
                     resolved_ablation_seed(cfg), cfg.eval_episodes,
                     resolved_eval_seed(cfg), cfg.workers);
    std::filesystem::create_directories(cfg.out_dir);
    write_csv(std::filesystem::path(cfg.out_dir) / "ablation.csv",
              {{ablation_name(kind), result.report}});
    save_model(std::filesystem::path(cfg.out_dir) / "model.ckpt", result.trained.model);
    diag << "ablation '" << ablation_name(kind) << "': mean " << result.report.mean
         << " ci95 " << result.report.ci95 << "\n";
    return result;
}

json eval_report_json(const EvalReport& report) {
    json j;
    j["n"] = report.n;
    j["mean"] = report.mean;
    j["ci95"] = report.ci95;
    return j;
}

} // namespace protoshift
