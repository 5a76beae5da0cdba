#include "protoshift/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "protoshift/rng.hpp"

namespace protoshift {

namespace {

// Substream purposes under the benchmark seed.
enum : std::uint64_t {
    kStreamSemantics = 0,
    kStreamWordNoise = 1,
    kStreamEmbedding = 2,
    kStreamDomains = 3,
    kStreamSamples = 4,
    kStreamSplits = 5,
};

std::size_t leaf_count(const SynthConfig& c) {
    std::size_t leaves = 1;
    for (std::size_t i = 0; i < c.depth; ++i) {
        if (leaves > 1000000 / c.branching)
            throw ValueError("taxonomy too large: branching^depth past 1e6");
        leaves *= c.branching;
    }
    return leaves;
}

std::size_t total_classes(const SynthConfig& c) {
    return c.train_classes + c.val_classes + c.test_classes;
}

} // namespace

void validate_synth(const SynthConfig& c) {
    if (c.branching < 2) throw ValueError("branching must be at least 2");
    if (c.depth < 1) throw ValueError("depth must be at least 1");
    if (c.feature_dim == 0 || c.word_dim == 0)
        throw ValueError("feature and word dims must be positive");
    if (c.domain_count == 0) throw ValueError("domain count must be positive");
    if (c.samples_per_class_per_domain == 0)
        throw ValueError("samples per class per domain must be positive");
    if (c.train_classes == 0) throw ValueError("need at least one training class");
    if (leaf_count(c) < total_classes(c))
        throw ValueError("tree has " + std::to_string(leaf_count(c)) +
                         " leaves, need " + std::to_string(total_classes(c)) +
                         " for the class splits");
    if (c.tau < 0.0 || c.class_noise < 0.0 || c.shift < 0.0)
        throw ValueError("tau, class_noise, and shift must be non-negative");
}

SynthConfig synth_preset(const std::string& name) {
    SynthConfig c;
    if (name == "easy-shift") {
        c.tau = 1.0;
        c.class_noise = 1.0;
        c.shift = 0.15;
        c.seed = 20260816;
        return c;
    }
    if (name == "hard-shift") {
        c.tau = 1.0;
        c.class_noise = 1.5;
        c.shift = 0.55;
        c.seed = 20260817;
        return c;
    }
    throw ConfigError("unknown benchmark preset '" + name + "'");
}

std::vector<std::string> synth_preset_names() { return {"easy-shift", "hard-shift"}; }

Taxonomy generate_taxonomy(const SynthConfig& config) {
    validate_synth(config);
    const std::size_t b = config.branching, h = config.depth, J = config.word_dim;
    const std::size_t leaves = leaf_count(config);
    const std::size_t total = (leaves * b - 1) / (b - 1); // sum of b^0..b^h

    // Zero-padded BFS index names keep lexicographic order equal to BFS
    // order, which fixes the graph's node layout to the tree layout.
    std::size_t width = std::to_string(total - 1).size();
    auto node_name = [&](std::size_t idx) {
        std::string digits = std::to_string(idx);
        return "n" + std::string(width - digits.size(), '0') + digits;
    };

    Rng sem_rng(derive_stream(config.seed, kStreamSemantics));
    std::vector<std::vector<double>> semantics(total);
    semantics[0].assign(J, 0.0);
    for (std::size_t idx = 1; idx < total; ++idx) {
        const std::size_t parent = (idx - 1) / b;
        semantics[idx] = semantics[parent];
        for (double& v : semantics[idx]) v += sem_rng.normal(0.0, config.tau);
    }

    Rng word_rng(derive_stream(config.seed, kStreamWordNoise));
    WordVectorTable table;
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::vector<double> word = semantics[idx];
        for (double& v : word) v += word_rng.normal(0.0, config.tau / 10.0);
        table[node_name(idx)] = std::move(word);
    }

    EdgeList edges;
    edges.reserve(total - 1);
    for (std::size_t idx = 1; idx < total; ++idx)
        edges.emplace_back(node_name((idx - 1) / b), node_name(idx));

    Taxonomy tax;
    tax.graph = build_graph(edges, table);
    const std::size_t first_leaf = total - leaves;
    const std::size_t C = total_classes(config);
    for (std::size_t c = 0; c < C; ++c) {
        tax.class_names.push_back(node_name(first_leaf + c));
        tax.class_semantics.push_back(semantics[first_leaf + c]);
    }
    return tax;
}

namespace {

/// Product of dim random Givens rotations with angles in +-gamma*pi.
std::vector<double> random_rotation(Rng& rng, std::size_t dim, double gamma) {
    std::vector<double> q(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) q[i * dim + i] = 1.0;
    if (dim < 2) return q;
    for (std::size_t r = 0; r < dim; ++r) {
        std::size_t i = static_cast<std::size_t>(rng.below(dim));
        std::size_t j = static_cast<std::size_t>(rng.below(dim - 1));
        if (j >= i) ++j;
        double theta = rng.uniform(-gamma * std::numbers::pi, gamma * std::numbers::pi);
        double c = std::cos(theta), s = std::sin(theta);
        for (std::size_t k = 0; k < dim; ++k) {
            double a = q[i * dim + k], b2 = q[j * dim + k];
            q[i * dim + k] = c * a - s * b2;
            q[j * dim + k] = s * a + c * b2;
        }
    }
    return q;
}

} // namespace

FeatureDataset generate_dataset(const SynthConfig& config, const Taxonomy& taxonomy) {
    validate_synth(config);
    const std::size_t C = total_classes(config);
    if (taxonomy.class_names.size() != C || taxonomy.class_semantics.size() != C)
        throw ValueError("taxonomy classes do not match the config's split counts");
    const std::size_t J = config.word_dim, d = config.feature_dim;
    const std::size_t D = config.domain_count, spc = config.samples_per_class_per_domain;

    Rng embed_rng(derive_stream(config.seed, kStreamEmbedding));
    std::vector<double> embed(J * d); // [J x d]
    const double embed_sd = 1.0 / std::sqrt(static_cast<double>(J));
    for (double& v : embed) v = embed_rng.normal(0.0, embed_sd);

    std::vector<std::vector<double>> class_means(C, std::vector<double>(d, 0.0));
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < J; ++j) {
            const double s = taxonomy.class_semantics[c][j];
            for (std::size_t k = 0; k < d; ++k) class_means[c][k] += s * embed[j * d + k];
        }

    Rng domain_rng(derive_stream(config.seed, kStreamDomains));
    std::vector<std::vector<double>> rotations(D);
    std::vector<std::vector<double>> translations(D);
    for (std::size_t dom = 0; dom < D; ++dom) {
        if (dom == 0) {
            // The target domain keeps identity geometry; shift is relative.
            rotations[dom].assign(d * d, 0.0);
            for (std::size_t k = 0; k < d; ++k) rotations[dom][k * d + k] = 1.0;
            translations[dom].assign(d, 0.0);
        } else {
            rotations[dom] = random_rotation(domain_rng, d, config.shift);
            translations[dom].assign(d, 0.0);
            for (double& v : translations[dom]) v = domain_rng.normal(0.0, config.shift);
        }
    }

    Rng sample_rng(derive_stream(config.seed, kStreamSamples));
    const std::size_t M = C * D * spc;
    std::vector<double> features;
    features.reserve(M * d);
    std::vector<int> labels, domains;
    labels.reserve(M);
    domains.reserve(M);
    std::vector<double> moved(d);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t dom = 0; dom < D; ++dom) {
            const std::vector<double>& q = rotations[dom];
            for (std::size_t k = 0; k < d; ++k) {
                double acc = translations[dom][k];
                for (std::size_t k2 = 0; k2 < d; ++k2)
                    acc += q[k * d + k2] * class_means[c][k2];
                moved[k] = acc;
            }
            for (std::size_t s = 0; s < spc; ++s) {
                for (std::size_t k = 0; k < d; ++k) {
                    double x = moved[k] + sample_rng.normal(0.0, config.class_noise);
                    // float32 storage is the interface; round now so the
                    // in-memory dataset equals its reloaded form.
                    features.push_back(static_cast<double>(static_cast<float>(x)));
                }
                labels.push_back(static_cast<int>(c));
                domains.push_back(static_cast<int>(dom));
            }
        }

    Rng split_rng(derive_stream(config.seed, kStreamSplits));
    std::vector<int> order(C);
    std::iota(order.begin(), order.end(), 0);
    split_rng.shuffle(order);
    FeatureDataset data;
    data.splits.train.assign(order.begin(), order.begin() + config.train_classes);
    data.splits.val.assign(order.begin() + config.train_classes,
                           order.begin() + config.train_classes + config.val_classes);
    data.splits.test.assign(order.begin() + config.train_classes + config.val_classes,
                            order.begin() + C);
    std::sort(data.splits.train.begin(), data.splits.train.end());
    std::sort(data.splits.val.begin(), data.splits.val.end());
    std::sort(data.splits.test.begin(), data.splits.test.end());

    data.features = Tensor({M, d}, std::move(features));
    data.labels = std::move(labels);
    data.domains = std::move(domains);
    data.class_names = taxonomy.class_names;
    data.target_domain = 0;
    validate_dataset(data);
    return data;
}

Benchmark generate_benchmark(const SynthConfig& config) {
    Taxonomy tax = generate_taxonomy(config);
    Benchmark bench;
    bench.data = generate_dataset(config, tax);
    bench.graph = std::move(tax.graph);
    return bench;
}

void write_benchmark(const std::filesystem::path& dir, const FeatureDataset& data,
                     const ConceptGraph& graph) {
    if (!std::filesystem::is_directory(dir))
        throw IoError("output directory '" + dir.string() + "' does not exist");
    save_dataset(dir, data);
    save_edge_list(dir / "edges.tsv", graph);
    save_word_vectors(dir / "vectors.txt", graph);
}

Benchmark load_benchmark(const std::filesystem::path& dir) {
    Benchmark bench;
    bench.data = load_dataset(dir / "manifest.json");
    bench.graph = build_graph(load_edge_list(dir / "edges.tsv"),
                              load_word_vectors(dir / "vectors.txt"));
    return bench;
}

} // namespace protoshift
