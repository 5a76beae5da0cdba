#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "protoshift/episodes.hpp"
#include "protoshift/gcn.hpp"
#include "protoshift/kg.hpp"
#include "protoshift/layers.hpp"
#include "protoshift/tensor.hpp"

namespace protoshift {

struct EncoderLayer {
    Tensor weight; // [d_l x d_{l+1}]
    Tensor bias;   // [d_{l+1}]
    Activation activation = Activation::Identity;
};

/// Feature embedder f: an MLP with leaky hidden activations and a linear
/// final layer, applied row-wise to feature matrices.
struct Encoder {
    std::vector<EncoderLayer> layers;
    std::uint64_t seed = 0;

    std::size_t input_dim() const { return layers.front().weight.shape()[0]; }
    std::size_t output_dim() const { return layers.back().weight.shape()[1]; }
    std::vector<std::size_t> dims() const;
    std::vector<Tensor> parameters() const; // weights and biases, layer order
};

/// Glorot weights, zero biases, drawn deterministically from seed.
Encoder init_encoder(const std::vector<std::size_t>& dims, std::uint64_t seed);
void validate_encoder(const Encoder& enc);
Tensor encoder_forward(Tape& tape, const Encoder& enc, const Tensor& x);

/// Checkpoint: JSON header line {activations, dims, seed} then weight and
/// bias blocks per layer, little-endian float64. Byte-exact round-trip.
void save_encoder(std::ostream& os, const Encoder& enc);
Encoder load_encoder(std::istream& is);

enum class DistanceMode { Squared, Unsquared };
std::string distance_mode_name(DistanceMode m);
DistanceMode distance_mode_from_name(const std::string& name);

/// Which shared-prototype forward the model was trained with: the graph
/// propagation or the fully-connected ablation arm.
enum class GraphForward { Gcn, Mlp };
std::string graph_forward_name(GraphForward g);
GraphForward graph_forward_from_name(const std::string& name);

/// The full few-shot classifier: encoder for task-specific prototypes, graph
/// model for task-shared ones, mixed with weight lambda, classified by
/// softmax over negative embedding distances. A frozen model is read-only
/// and shareable across evaluation workers.
struct GpnModel {
    Encoder encoder;
    GcnModel gcn;
    ConceptGraph graph;
    ClassNodeMap class_map;
    double lambda = 0.5;
    DistanceMode distance_mode = DistanceMode::Squared;
    GraphForward graph_forward = GraphForward::Gcn;
};

/// Output dims must agree, lambda must sit in [0,1], parts must validate.
void validate_model(const GpnModel& model);

/// Fresh parameter storage for the trainable parts; the graph and class map
/// are immutable and stay shared.
Encoder deep_clone(const Encoder& enc);
GpnModel deep_clone(const GpnModel& model);

struct PrototypeSet {
    std::vector<int> classes; // episode class ids, row order
    Tensor e_spe;             // [N x V]
    Tensor e_share;           // [N x V]
    Tensor e_mixed;           // [N x V], lambda*e_spe + (1-lambda)*e_share
};

/// Shared prototypes of every graph node: one gcn_forward (or the ablation
/// arm) pass. Episode-independent, so evaluation precomputes it once.
Tensor shared_nodes_forward(Tape& tape, const GpnModel& model);

/// Row n = mean of the encoded support samples of class position n.
Tensor task_specific_prototypes(Tape& tape, const GpnModel& model, const Episode& ep);

PrototypeSet mix_prototypes(Tape& tape, const GpnModel& model, const Tensor& e_spe,
                            const Tensor& e_share);

/// Full prototype assembly for one episode. When shared_all is given it must
/// be a shared_nodes_forward result for this model; otherwise the graph pass
/// runs on the tape.
PrototypeSet compute_prototypes(Tape& tape, const GpnModel& model, const Episode& ep,
                                const Tensor* shared_all = nullptr);

/// Posterior over episode classes per query row: softmax of negative
/// distances. Rows sum to 1. Not recorded for gradients; the training loss
/// goes through episode_loss instead.
Tensor classify(Tape& tape, const GpnModel& model, const Episode& ep,
                const PrototypeSet& protos);

/// Mean negative log-likelihood of the true classes over all queries,
/// differentiable w.r.t. encoder and graph-model weights.
Tensor episode_loss(Tape& tape, const GpnModel& model, const Episode& ep,
                    const Tensor* shared_all = nullptr);

/// Most probable class id per query; distance ties break toward the lowest
/// class position in the episode's class order.
std::vector<int> predict(const GpnModel& model, const Episode& ep,
                         const Tensor* shared_all = nullptr);

double episode_accuracy(const GpnModel& model, const Episode& ep,
                        const Tensor* shared_all = nullptr);

/// Reference path without any graph machinery: prototypes are the support
/// means alone. Bitwise-matches the full model at lambda = 1.
Tensor protonet_episode_loss(Tape& tape, const Encoder& enc, const Episode& ep,
                             DistanceMode mode);
std::vector<int> protonet_predict(const Encoder& enc, const Episode& ep,
                                  DistanceMode mode);

/// Model checkpoint: JSON header {dims{encoder,gcn}, distance_mode,
/// graph_forward, lambda} followed by the encoder and graph-model
/// checkpoints. The graph and class map live with the dataset, not here.
void save_model(const std::filesystem::path& path, const GpnModel& model);

/// Loads weights and hyperparameters, attaching the given graph and map.
GpnModel load_model(const std::filesystem::path& path, ConceptGraph graph,
                    ClassNodeMap class_map);

} // namespace protoshift
