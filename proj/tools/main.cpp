// Command-line front end: synth, train, eval, sweep, ablate.
// Diagnostics go to stderr, data to stdout or files. Exit codes:
// 0 ok, 1 runtime failure, 2 usage or config error.
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "protoshift/run.hpp"
#include "protoshift/serialize.hpp"

namespace {

using namespace protoshift;

std::vector<double> default_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
    return grid;
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> grid;
    std::size_t pos = 0;
    while (true) {
        std::size_t comma = text.find(',', pos);
        std::string token = text.substr(
            pos, comma == std::string::npos ? std::string::npos : comma - pos);
        std::size_t first = token.find_first_not_of(" \t");
        std::size_t last = token.find_last_not_of(" \t");
        if (first == std::string::npos)
            throw ConfigError("empty value in --grid '" + text + "'");
        token = token.substr(first, last - first + 1);
        double value = 0.0;
        try {
            value = parse_double(token);
        } catch (const Error&) {
            throw ConfigError("bad --grid value '" + token + "'");
        }
        if (!(value >= 0.0 && value <= 1.0))
            throw ConfigError("--grid values must be in [0,1], got '" + token + "'");
        grid.push_back(value);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return grid;
}

void print_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
    std::cout << "param,mean,ci95\n";
    for (const auto& [param, report] : rows)
        std::cout << param << ',' << format_double(report.mean) << ','
                  << format_double(report.ci95) << '\n';
}

// Shared config-file + override flags. Each subcommand registers the subset
// it needs; values land on top of the parsed file only when the flag was
// actually given.
struct ConfigFlags {
    std::string config_path;
    std::string data, out, preset, setting, split;
    std::uint64_t seed = 0, train_seed = 0, val_seed = 0, eval_seed = 0;
    std::size_t iterations = 0, n_way = 0, k_shot = 0, n_query = 0;
    std::size_t val_every = 0, val_episodes = 0, episodes = 0, workers = 0;
    double encoder_lr = 0.0, gcn_lr = 0.0, lambda = 0.0;

    CLI::Option* config_opt = nullptr;
    CLI::Option* data_opt = nullptr;
    CLI::Option* out_opt = nullptr;
    CLI::Option* preset_opt = nullptr;
    CLI::Option* setting_opt = nullptr;
    CLI::Option* split_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* train_seed_opt = nullptr;
    CLI::Option* val_seed_opt = nullptr;
    CLI::Option* eval_seed_opt = nullptr;
    CLI::Option* iterations_opt = nullptr;
    CLI::Option* n_way_opt = nullptr;
    CLI::Option* k_shot_opt = nullptr;
    CLI::Option* n_query_opt = nullptr;
    CLI::Option* val_every_opt = nullptr;
    CLI::Option* val_episodes_opt = nullptr;
    CLI::Option* episodes_opt = nullptr;
    CLI::Option* workers_opt = nullptr;
    CLI::Option* encoder_lr_opt = nullptr;
    CLI::Option* gcn_lr_opt = nullptr;
    CLI::Option* lambda_opt = nullptr;

    void add_config(CLI::App& sub) {
        config_opt = sub.add_option("-c,--config", config_path, "JSON run config file");
    }
    void add_data(CLI::App& sub) {
        data_opt = sub.add_option("--data", data, "benchmark directory");
    }
    void add_out(CLI::App& sub) {
        out_opt = sub.add_option("-o,--out", out, "output directory");
    }
    void add_train(CLI::App& sub) {
        preset_opt = sub.add_option("--preset", preset, "training preset")
                         ->check(CLI::IsMember(train_preset_names()));
        iterations_opt = sub.add_option("--iterations", iterations, "training iterations");
        encoder_lr_opt = sub.add_option("--encoder-lr", encoder_lr, "encoder learning rate");
        gcn_lr_opt = sub.add_option("--gcn-lr", gcn_lr, "graph-model learning rate");
        lambda_opt = sub.add_option("--lambda", lambda, "prototype mixing coefficient");
        setting_opt = sub.add_option("--setting", setting, "shift setting")
                          ->check(CLI::IsMember({"tgt", "src+tgt", "fulltgt"}));
        train_seed_opt = sub.add_option("--train-seed", train_seed, "training episode seed");
        val_seed_opt = sub.add_option("--val-seed", val_seed, "validation episode seed");
        val_every_opt = sub.add_option("--val-every", val_every, "validation cadence");
        val_episodes_opt =
            sub.add_option("--val-episodes", val_episodes, "validation episode count");
    }
    void add_episode_shape(CLI::App& sub) {
        n_way_opt = sub.add_option("-N,--n-way", n_way, "classes per episode");
        k_shot_opt = sub.add_option("-K,--k-shot", k_shot, "support samples per class");
        n_query_opt = sub.add_option("-q,--n-query", n_query, "query samples per class");
    }
    void add_eval(CLI::App& sub) {
        episodes_opt = sub.add_option("--episodes", episodes, "evaluation episode count");
        split_opt = sub.add_option("--split", split, "evaluation split")
                        ->check(CLI::IsMember({"train", "val", "test"}));
        workers_opt = sub.add_option("--workers", workers, "evaluation worker threads");
    }
    void add_master_seed(CLI::App& sub) {
        seed_opt = sub.add_option("--seed", seed, "master seed");
    }

    RunConfig resolve() const {
        RunConfig cfg = config_opt && config_opt->count() ? load_run_config(config_path)
                                                          : parse_run_config("{}");
        auto set = [](CLI::Option* opt, auto& field, const auto& value) {
            if (opt && opt->count()) field = value;
        };
        set(data_opt, cfg.data, data);
        set(out_opt, cfg.out_dir, out);
        set(seed_opt, cfg.seed, seed);
        set(preset_opt, cfg.preset, preset);
        set(iterations_opt, cfg.iterations, iterations);
        set(encoder_lr_opt, cfg.encoder_lr, encoder_lr);
        set(gcn_lr_opt, cfg.gcn_lr, gcn_lr);
        set(lambda_opt, cfg.lambda, lambda);
        set(setting_opt, cfg.setting, setting);
        set(train_seed_opt, cfg.train_seed, train_seed);
        set(val_seed_opt, cfg.val_seed, val_seed);
        set(val_every_opt, cfg.val_every, val_every);
        set(val_episodes_opt, cfg.val_episodes, val_episodes);
        set(n_way_opt, cfg.n_way, n_way);
        set(k_shot_opt, cfg.k_shot, k_shot);
        set(n_query_opt, cfg.n_query, n_query);
        set(episodes_opt, cfg.eval_episodes, episodes);
        set(split_opt, cfg.eval_split, split);
        set(workers_opt, cfg.workers, workers);
        set(eval_seed_opt, cfg.eval_seed, eval_seed);
        if (lambda_opt && lambda_opt->count() && !(cfg.lambda >= 0.0 && cfg.lambda <= 1.0))
            throw ConfigError("--lambda must be in [0,1]");
        if (workers_opt && workers_opt->count() && cfg.workers == 0)
            throw ConfigError("--workers must be positive");
        if (episodes_opt && episodes_opt->count() && cfg.eval_episodes == 0)
            throw ConfigError("--episodes must be positive");
        return cfg;
    }
};

int run_cli(int argc, char** argv) {
    CLI::App app{"Few-shot classification under data shift: graph-backed prototypes"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic shifted benchmark");
    std::string synth_preset_name = "easy-shift";
    std::uint64_t synth_seed = 0;
    std::string synth_out = "bench";
    synth->add_option("--preset", synth_preset_name, "benchmark preset")
        ->capture_default_str();
    auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("-o,--out", synth_out, "output directory")->capture_default_str();
    synth->callback([&] {
        std::optional<std::uint64_t> seed;
        if (synth_seed_opt->count()) seed = synth_seed;
        run_synth(synth_preset_name, seed, synth_out, std::cerr);
    });

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model on a benchmark");
    ConfigFlags train_flags;
    train_flags.add_config(*train_cmd);
    train_flags.add_data(*train_cmd);
    train_flags.add_out(*train_cmd);
    train_flags.add_master_seed(*train_cmd);
    train_flags.add_train(*train_cmd);
    train_flags.add_episode_shape(*train_cmd);
    train_cmd->callback([&] {
        RunConfig cfg = train_flags.resolve();
        TrainRunOutputs out = run_train(cfg, std::cerr);
        json summary;
        summary["best_val_accuracy"] = out.best_val_accuracy;
        summary["best_val_iteration"] = out.best_val_iteration;
        summary["checkpoint"] = out.checkpoint.string();
        summary["final_loss"] = out.final_loss;
        summary["log"] = out.log.string();
        std::cout << summary.dump() << '\n';
    });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    ConfigFlags eval_flags;
    std::string eval_checkpoint;
    std::string eval_csv;
    eval_flags.add_config(*eval_cmd);
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "model checkpoint file")
        ->required();
    eval_flags.add_data(*eval_cmd);
    eval_flags.add_episode_shape(*eval_cmd);
    eval_flags.add_eval(*eval_cmd);
    eval_flags.eval_seed_opt =
        eval_cmd->add_option("--seed", eval_flags.eval_seed, "evaluation episode seed");
    auto* eval_csv_opt =
        eval_cmd->add_option("--csv", eval_csv, "also write per-episode accuracies here");
    eval_cmd->callback([&] {
        RunConfig cfg = eval_flags.resolve();
        std::optional<std::filesystem::path> csv;
        if (eval_csv_opt->count()) csv = eval_csv;
        EvalReport report = run_eval(eval_checkpoint, cfg.data, cfg, std::cerr, csv);
        std::cout << eval_report_json(report).dump() << '\n';
    });

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "train and evaluate across a lambda grid");
    ConfigFlags sweep_flags;
    std::string sweep_grid_text;
    sweep_flags.add_config(*sweep_cmd);
    sweep_flags.add_data(*sweep_cmd);
    sweep_flags.add_out(*sweep_cmd);
    sweep_flags.add_master_seed(*sweep_cmd);
    sweep_flags.add_train(*sweep_cmd);
    sweep_flags.add_episode_shape(*sweep_cmd);
    sweep_flags.add_eval(*sweep_cmd);
    auto* sweep_grid_opt = sweep_cmd->add_option(
        "--grid", sweep_grid_text, "comma-separated lambda values (default 0,0.1,...,1)");
    sweep_cmd->callback([&] {
        RunConfig cfg = sweep_flags.resolve();
        std::vector<double> grid =
            sweep_grid_opt->count() ? parse_grid(sweep_grid_text) : default_grid();
        std::vector<SweepRow> rows = run_sweep(cfg, grid, std::cerr);
        std::vector<std::pair<std::string, EvalReport>> table;
        table.reserve(rows.size());
        for (const SweepRow& row : rows)
            table.emplace_back(format_double(row.lambda), row.report);
        print_table(table);
    });

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate one ablation arm");
    ConfigFlags ablate_flags;
    std::string ablate_kind;
    ablate_flags.add_config(*ablate_cmd);
    ablate_flags.add_data(*ablate_cmd);
    ablate_flags.add_out(*ablate_cmd);
    ablate_flags.add_master_seed(*ablate_cmd);
    ablate_flags.add_train(*ablate_cmd);
    ablate_flags.add_episode_shape(*ablate_cmd);
    ablate_flags.add_eval(*ablate_cmd);
    ablate_cmd->add_option("--kind", ablate_kind, "ablation arm")
        ->required()
        ->check(CLI::IsMember({"rand", "fc"}));
    ablate_cmd->callback([&] {
        RunConfig cfg = ablate_flags.resolve();
        AblationResult result = run_ablate(cfg, ablation_from_name(ablate_kind), std::cerr);
        print_table({{ablation_name(result.kind), result.report}});
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const protoshift::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
