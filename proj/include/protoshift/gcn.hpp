#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "protoshift/kg.hpp"
#include "protoshift/layers.hpp"
#include "protoshift/tensor.hpp"

namespace protoshift {

struct GcnLayer {
    Tensor weight; // [d_l x d_{l+1}]
    Activation activation = Activation::Identity;
};

/// Stacked graph-convolution layers turning word vectors into one shared
/// prototype per graph node. Hidden layers use the leaky rectifier, the final
/// layer is linear. Read-only sharing across evaluation workers is safe;
/// training mutates weights single-threaded.
struct GcnModel {
    std::vector<GcnLayer> layers;
    std::uint64_t seed = 0;

    std::size_t input_dim() const { return layers.front().weight.shape()[0]; }
    std::size_t output_dim() const { return layers.back().weight.shape()[1]; }
    std::vector<std::size_t> dims() const;
    std::vector<Tensor> parameters() const;
};

/// Glorot-initialized model over the dimension chain dims[0] -> ... ->
/// dims.back(). Hidden activations leaky, final identity.
GcnModel init_gcn(const std::vector<std::size_t>& dims, std::uint64_t seed);

/// Layer dims must chain, the final activation must be identity, and every
/// weight must be finite.
void validate_gcn(const GcnModel& model);

/// One propagation per layer: multiply by norm_adj, then by the layer weight,
/// then the activation. Returns the shared prototype of every node [L x V],
/// differentiable w.r.t. each layer weight.
Tensor gcn_forward(Tape& tape, const GcnModel& model, const ConceptGraph& graph);

/// Same layer stack with the adjacency replaced by the identity, so nodes
/// never mix. The fully-connected ablation arm.
Tensor mlp_forward_ablation(Tape& tape, const GcnModel& model, const ConceptGraph& graph);

/// Row n of the result is the graph-output row of class_ids[n]'s node.
/// Differentiable selection; class ids must be mapped and distinct.
Tensor select_prototypes(Tape& tape, const Tensor& all_nodes, const ClassNodeMap& map,
                         const std::vector<int>& class_ids);

/// Fresh parameter storage, same values and flags.
GcnModel deep_clone(const GcnModel& model);

/// Checkpoint: one JSON header line {activations, dims, seed} followed by the
/// layer weights as little-endian float64 blocks in layer order. Byte-exact
/// round-trip.
void save_gcn(const std::filesystem::path& path, const GcnModel& model);
GcnModel load_gcn(const std::filesystem::path& path);
void save_gcn(std::ostream& os, const GcnModel& model);
GcnModel load_gcn(std::istream& is);

} // namespace protoshift
