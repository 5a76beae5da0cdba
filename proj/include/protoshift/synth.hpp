#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "protoshift/episodes.hpp"
#include "protoshift/kg.hpp"

namespace protoshift {

/// Desk-scale benchmark generator: a balanced taxonomy provides classes and
/// a concept graph, per-domain transforms provide controllable data shift.
struct SynthConfig {
    std::size_t branching = 3;
    std::size_t depth = 3;
    std::size_t feature_dim = 32;
    std::size_t word_dim = 32;
    std::size_t domain_count = 3;
    std::size_t samples_per_class_per_domain = 40;
    std::size_t train_classes = 16;
    std::size_t val_classes = 5;
    std::size_t test_classes = 6;
    double tau = 1.0;         // semantic diffusion scale per tree level
    double class_noise = 1.0; // sigma_c, within-class sample noise
    double shift = 0.3;       // gamma, domain transform strength
    std::uint64_t seed = 0;
};

/// Scales may be zero and the val/test splits may be empty (degenerate
/// limits are valid test points); other counts must be positive and the tree
/// must have enough leaves for all classes.
void validate_synth(const SynthConfig& config);

/// Committed presets: "easy-shift" (moderate gamma) and "hard-shift" (large
/// gamma, noisier classes). Both carry fixed seeds.
SynthConfig synth_preset(const std::string& name);
std::vector<std::string> synth_preset_names();

/// The generated tree plus the class-to-leaf assignment. class_semantics are
/// the pre-noise leaf vectors the feature embedding is built from; the
/// graph's word vectors add small observation noise on top.
struct Taxonomy {
    ConceptGraph graph;
    std::vector<std::string> class_names;              // class id -> leaf name
    std::vector<std::vector<double>> class_semantics;  // class id -> J-vector
};

/// Balanced b-ary tree of depth h. Node names are "n<index>" with the BFS
/// index zero-padded, so lexicographic order equals BFS order. The root
/// semantic vector is the origin; each child adds Normal(0, tau^2 I); every
/// node's word vector is its semantic vector plus Normal(0, (tau/10)^2 I).
/// Classes are the first train+val+test leaves in BFS order.
Taxonomy generate_taxonomy(const SynthConfig& config);

/// Class mean = fixed linear embedding of the leaf semantic vector. Domain 0
/// is the target and keeps identity geometry; every other domain applies a
/// random Givens-rotation product (angles within +-gamma*pi) plus a
/// Normal(0, gamma^2 I) translation. A sample is its class-domain mean plus
/// Normal(0, sigma_c^2 I), rounded to float32 so in-memory features equal
/// reloaded ones. Rows are ordered class-major, then domain, then sample.
/// Splits are a seeded shuffle of the class ids.
FeatureDataset generate_dataset(const SynthConfig& config, const Taxonomy& taxonomy);

struct Benchmark {
    FeatureDataset data;
    ConceptGraph graph;
};

/// generate_taxonomy + generate_dataset in one call.
Benchmark generate_benchmark(const SynthConfig& config);

/// Emits manifest.json, features.bin, labels.txt, domains.txt, edges.tsv,
/// vectors.txt into an existing directory; round-trips bit-exactly.
void write_benchmark(const std::filesystem::path& dir, const FeatureDataset& data,
                     const ConceptGraph& graph);

/// Loads a directory written by write_benchmark.
Benchmark load_benchmark(const std::filesystem::path& dir);

} // namespace protoshift
