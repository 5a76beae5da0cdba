#include <doctest.h>

#include <array>
#include <cmath>
#include <sstream>

#include "protoshift/rng.hpp"
#include "protoshift/trainer.hpp"

#include <json.hpp>

using namespace protoshift;
using nlohmann::json;

namespace {

struct World {
    FeatureDataset data;
    ConceptGraph graph;
    ClassNodeMap map;
    ModelSpec spec;
};

// Eight well-separated Gaussian classes in 4-D: train {0..3}, val {4,5},
// test {6,7}. A ring concept graph over the class names feeds the GCN.
World make_world(double noise = 0.5) {
    World w;
    Rng rng(2026);
    std::vector<double> flat;
    const int per_class = 24;
    for (int cls = 0; cls < 8; ++cls) {
        std::array<double, 4> mean{};
        mean[static_cast<std::size_t>(cls % 4)] = cls < 4 ? 5.0 : -5.0;
        for (int i = 0; i < per_class; ++i) {
            for (double m : mean) flat.push_back(m + noise * rng.normal());
            w.data.labels.push_back(cls);
            w.data.domains.push_back(0);
        }
    }
    w.data.features = Tensor({static_cast<std::size_t>(8 * per_class), 4}, std::move(flat));
    std::vector<std::string> names;
    for (int c = 0; c < 8; ++c) names.push_back("c" + std::to_string(c));
    w.data.class_names = names;
    w.data.splits.train = {0, 1, 2, 3};
    w.data.splits.val = {4, 5};
    w.data.splits.test = {6, 7};
    w.data.target_domain = 0;
    validate_dataset(w.data);

    WordVectorTable t;
    EdgeList edges;
    for (int i = 0; i < 8; ++i) {
        t[names[static_cast<std::size_t>(i)]] = {rng.normal(), rng.normal(), rng.normal()};
        edges.emplace_back(names[static_cast<std::size_t>(i)],
                           names[static_cast<std::size_t>((i + 1) % 8)]);
    }
    w.graph = build_graph(edges, t);
    w.map = map_classes(w.graph, names);

    w.spec.encoder_dims = {4, 8, 4};
    w.spec.gcn_dims = {3, 6, 4};
    w.spec.encoder_seed = 101;
    w.spec.gcn_seed = 102;
    return w;
}

TrainConfig tiny_config() {
    TrainConfig c;
    c.iterations = 30;
    c.encoder_lr = 0.005;
    c.gcn_lr = 0.005;
    c.n_way = 2;
    c.k_shot = 1;
    c.n_query = 5;
    c.setting.kind = SettingKind::FullTgt;
    c.setting.target_domain = 0;
    c.lambda = 0.5;
    c.train_seed = 7;
    c.val_seed = 8;
    c.val_every = 10;
    c.val_episodes = 10;
    return c;
}

bool same_weights(const GpnModel& a, const GpnModel& b) {
    for (std::size_t l = 0; l < a.encoder.layers.size(); ++l) {
        if (a.encoder.layers[l].weight.values() != b.encoder.layers[l].weight.values())
            return false;
        if (a.encoder.layers[l].bias.values() != b.encoder.layers[l].bias.values())
            return false;
    }
    for (std::size_t l = 0; l < a.gcn.layers.size(); ++l)
        if (a.gcn.layers[l].weight.values() != b.gcn.layers[l].weight.values()) return false;
    return true;
}

} // namespace

TEST_CASE("validate_config rejects bad fields") {
    TrainConfig c = tiny_config();
    CHECK_NOTHROW(validate_config(c));
    c.iterations = 0;
    CHECK_THROWS_AS(validate_config(c), ValueError);
    c = tiny_config();
    c.encoder_lr = 0.0;
    CHECK_THROWS_AS(validate_config(c), ValueError);
    c = tiny_config();
    c.decay_every = 10;
    c.decay_factor = 1.5;
    CHECK_THROWS_AS(validate_config(c), ValueError);
    c = tiny_config();
    c.lambda = 1.01;
    CHECK_THROWS_AS(validate_config(c), ValueError);
    c = tiny_config();
    c.val_episodes = 0;
    CHECK_THROWS_AS(validate_config(c), ValueError);
}

TEST_CASE("presets pin the published schedules") {
    CHECK(train_preset_names() ==
          std::vector<std::string>{"desk-v1", "office-home-v1", "mini-imagenet-v1"});

    TrainConfig desk = train_preset("desk-v1");
    CHECK(desk.iterations == 1200);
    CHECK(desk.encoder_lr == 0.001);
    CHECK(desk.gcn_lr == 0.005);
    CHECK(desk.decay_every == 400);
    CHECK(desk.decay_factor == 0.5);
    CHECK(desk.encoder_momentum == 0.9);

    TrainConfig oh = train_preset("office-home-v1");
    CHECK(oh.iterations == 5000);
    CHECK(oh.encoder_lr == 0.001);
    CHECK(oh.gcn_lr == 0.005);
    CHECK(oh.decay_every == 2000);
    CHECK(oh.decay_factor == 0.5);

    TrainConfig mini = train_preset("mini-imagenet-v1");
    CHECK(mini.iterations == 40000);
    CHECK(mini.decay_every == 10000);
    CHECK(mini.decay_factor == 0.1);

    CHECK_THROWS_AS(train_preset("desk-v0"), ConfigError);
}

TEST_CASE("evaluate report matches an independent stats computation") {
    World w = make_world();
    GpnModel model = build_model(w.spec, w.graph, w.map, 0.5);
    EvalReport r = evaluate(model, w.data, Split::Test, 2, 1, 5, 40, 17);

    CHECK(r.n == 40);
    CHECK(r.accuracies.size() == 40);
    double mean = 0.0;
    for (double a : r.accuracies) mean += a;
    mean /= 40.0;
    double ss = 0.0;
    for (double a : r.accuracies) ss += (a - mean) * (a - mean);
    double ci = 1.96 * std::sqrt(ss / 39.0) / std::sqrt(40.0);
    CHECK(std::abs(r.mean - mean) < 1e-12);
    CHECK(std::abs(r.ci95 - ci) < 1e-12);
    CHECK(r.mean >= 0.0);
    CHECK(r.mean <= 1.0);
    CHECK(r.ci95 >= 0.0);

    // single episode: no spread to estimate
    EvalReport one = evaluate(model, w.data, Split::Test, 2, 1, 5, 1, 17);
    CHECK(one.n == 1);
    CHECK(one.ci95 == 0.0);

    CHECK_THROWS_AS(evaluate(model, w.data, Split::Test, 2, 1, 5, 0, 17), ValueError);
}

TEST_CASE("evaluate is deterministic and never mutates the model") {
    World w = make_world();
    GpnModel model = build_model(w.spec, w.graph, w.map, 0.5);
    GpnModel snapshot = deep_clone(model);

    EvalReport a = evaluate(model, w.data, Split::Val, 2, 1, 5, 30, 5);
    EvalReport b = evaluate(model, w.data, Split::Val, 2, 1, 5, 30, 5);
    EvalReport c = evaluate(model, w.data, Split::Val, 2, 1, 5, 30, 6);
    CHECK(a.mean == b.mean);
    CHECK(a.ci95 == b.ci95);
    CHECK(a.accuracies == b.accuracies);
    CHECK(a.accuracies != c.accuracies);
    CHECK(same_weights(model, snapshot));
}

TEST_CASE("parallel evaluation reproduces the serial report bitwise") {
    World w = make_world();
    GpnModel model = build_model(w.spec, w.graph, w.map, 0.5);
    EvalReport serial = evaluate(model, w.data, Split::Test, 2, 1, 5, 64, 23, 1);
    EvalReport par = evaluate(model, w.data, Split::Test, 2, 1, 5, 64, 23, 4);
    CHECK(serial.mean == par.mean);
    CHECK(serial.ci95 == par.ci95);
    CHECK(serial.accuracies == par.accuracies);
}

TEST_CASE("training improves a separable benchmark past chance") {
    World w = make_world();
    GpnModel model = build_model(w.spec, w.graph, w.map, 0.5);
    TrainConfig c = tiny_config();
    c.iterations = 500;
    c.val_every = 100;
    c.val_episodes = 50;
    TrainResult r = train(model, w.data, c);
    CHECK(r.best_val_accuracy > 0.5 + 0.2);
    CHECK(std::isfinite(r.final_loss));
}

TEST_CASE("train logs carry the retained best validation accuracy") {
    World w = make_world();
    GpnModel model = build_model(w.spec, w.graph, w.map, 0.5);
    TrainConfig c = tiny_config();
    c.iterations = 45;
    std::ostringstream log;
    TrainResult r = train(model, w.data, c, &log);

    std::istringstream lines(log.str());
    std::string line;
    std::size_t rows = 0, val_rows = 0;
    double best_seen = -1.0;
    std::size_t best_iter = 0;
    while (std::getline(lines, line)) {
        json j = json::parse(line);
        ++rows;
        CHECK(j.contains("iter"));
        CHECK(j.contains("loss"));
        CHECK(j.contains("lr_encoder"));
        CHECK(j.contains("lr_gcn"));
        if (j.contains("val_acc")) {
            ++val_rows;
            double acc = j["val_acc"].get<double>();
            CHECK(r.best_val_accuracy >= acc);
            if (acc > best_seen) {
                best_seen = acc;
                best_iter = j["iter"].get<std::size_t>();
            }
        }
    }
    CHECK(rows == 45);
    CHECK(val_rows == 4); // scheduled at iterations 9, 19, 29, 39
    CHECK(r.best_val_accuracy == best_seen);
    CHECK(r.best_val_iteration == best_iter);

    // a cadence that never fires still validates once at the end
    std::ostringstream log2;
    TrainConfig c2 = tiny_config();
    c2.iterations = 7;
    c2.val_every = 100;
    TrainResult r2 = train(model, w.data, c2, &log2);
    std::istringstream lines2(log2.str());
    std::size_t val_rows2 = 0;
    std::size_t last_iter = 0;
    while (std::getline(lines2, line)) {
        json j = json::parse(line);
        if (j.contains("val_acc")) {
            ++val_rows2;
            last_iter = j["iter"].get<std::size_t>();
        }
    }
    CHECK(val_rows2 == 1);
    CHECK(last_iter == 6);
    CHECK(r2.best_val_iteration == 6);
}

TEST_CASE("training is bitwise reproducible and leaves the input untouched") {
    World w = make_world();
    GpnModel model = build_model(w.spec, w.graph, w.map, 0.5);
    GpnModel snapshot = deep_clone(model);
    TrainConfig c = tiny_config();

    TrainResult r1 = train(model, w.data, c);
    CHECK(same_weights(model, snapshot)); // input model untouched
    TrainResult r2 = train(model, w.data, c);
    CHECK(same_weights(r1.model, r2.model));
    CHECK(r1.best_val_accuracy == r2.best_val_accuracy);
    CHECK(r1.final_loss == r2.final_loss);

    TrainConfig other = c;
    other.train_seed = 99;
    TrainResult r3 = train(model, w.data, other);
    CHECK(!same_weights(r1.model, r3.model));
}

TEST_CASE("lr schedule is applied during training") {
    World w = make_world();
    GpnModel model = build_model(w.spec, w.graph, w.map, 0.5);
    TrainConfig c = tiny_config();
    c.iterations = 20;
    c.decay_every = 10;
    c.decay_factor = 0.5;
    std::ostringstream log;
    train(model, w.data, c, &log);

    std::istringstream lines(log.str());
    std::string line;
    while (std::getline(lines, line)) {
        json j = json::parse(line);
        auto iter = j["iter"].get<std::size_t>(); // 0-based
        double scale = iter / 10 >= 1 ? 0.5 : 1.0;
        CHECK(j["lr_encoder"].get<double>() == c.encoder_lr * scale);
        CHECK(j["lr_gcn"].get<double>() == c.gcn_lr * scale);
    }
}

TEST_CASE("exploding learning rates abort with a diagnostic") {
    World w = make_world();
    GpnModel model = build_model(w.spec, w.graph, w.map, 0.5);
    TrainConfig c = tiny_config();
    c.encoder_lr = 1e155;
    c.gcn_lr = 1e155;
    CHECK_THROWS_WITH_AS(train(model, w.data, c), doctest::Contains("non-finite"),
                         ValueError);
}

TEST_CASE("sweep_lambda emits rows in grid order") {
    World w = make_world();
    TrainConfig c = tiny_config();
    std::vector<SweepRow> rows =
        sweep_lambda(w.spec, w.graph, w.map, w.data, c, {0.0, 0.5, 1.0}, 20, 31);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].lambda == 0.0);
    CHECK(rows[1].lambda == 0.5);
    CHECK(rows[2].lambda == 1.0);
    for (const auto& row : rows) {
        CHECK(row.report.n == 20);
        CHECK(row.report.mean >= 0.0);
        CHECK(row.report.mean <= 1.0);
    }

    CHECK_THROWS_AS(sweep_lambda(w.spec, w.graph, w.map, w.data, c, {0.0, 1.2}, 5, 31),
                    ValueError);
}

TEST_CASE("ablation kinds are reproducible and named") {
    CHECK(ablation_from_name("rand") == AblationKind::Rand);
    CHECK(ablation_from_name("fc") == AblationKind::Fc);
    CHECK(ablation_name(AblationKind::Rand) == "rand");
    CHECK(ablation_name(AblationKind::Fc) == "fc");
    CHECK_THROWS_AS(ablation_from_name("mlp"), ValueError);

    World w = make_world();
    TrainConfig c = tiny_config();
    AblationResult a = run_ablation(AblationKind::Rand, w.spec, w.graph, w.map, w.data,
                                    c, 41, 20, 31);
    AblationResult b = run_ablation(AblationKind::Rand, w.spec, w.graph, w.map, w.data,
                                    c, 41, 20, 31);
    CHECK(a.report.mean == b.report.mean);
    CHECK(a.report.accuracies == b.report.accuracies);
    CHECK(a.trained.model.graph_forward == GraphForward::Gcn);

    AblationResult fc = run_ablation(AblationKind::Fc, w.spec, w.graph, w.map, w.data,
                                     c, 41, 20, 31);
    CHECK(fc.trained.model.graph_forward == GraphForward::Mlp);
}

TEST_CASE("fc ablation equals plain training when the adjacency is the identity") {
    // an edge-free graph is exactly the regime where propagation is a no-op
    World w = make_world();
    ConceptGraph loner;
    loner.node_names = w.graph.node_names;
    loner.word_vectors = w.graph.word_vectors.clone();
    std::size_t L = loner.node_names.size();
    loner.norm_adj = Tensor::zeros({L, L});
    for (std::size_t i = 0; i < L; ++i) loner.norm_adj.values()[i * L + i] = 1.0;

    TrainConfig c = tiny_config();
    GpnModel plain = build_model(w.spec, loner, w.map, c.lambda);
    TrainResult direct = train(plain, w.data, c);
    EvalReport direct_report = evaluate(direct.model, w.data, Split::Test, c.n_way,
                                        c.k_shot, c.n_query, 20, 31);

    AblationResult fc = run_ablation(AblationKind::Fc, w.spec, loner, w.map, w.data,
                                     c, 41, 20, 31);
    CHECK(fc.report.mean == direct_report.mean);
    CHECK(fc.report.accuracies == direct_report.accuracies);
    CHECK(same_weights(fc.trained.model, direct.model));
}
