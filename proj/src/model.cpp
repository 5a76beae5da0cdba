#include "protoshift/model.hpp"

#include <cmath>

#include "protoshift/serialize.hpp"

namespace protoshift {

std::vector<std::size_t> Encoder::dims() const {
    std::vector<std::size_t> d;
    d.reserve(layers.size() + 1);
    d.push_back(layers.front().weight.shape()[0]);
    for (const EncoderLayer& l : layers) d.push_back(l.weight.shape()[1]);
    return d;
}

std::vector<Tensor> Encoder::parameters() const {
    std::vector<Tensor> p;
    p.reserve(layers.size() * 2);
    for (const EncoderLayer& l : layers) {
        p.push_back(l.weight);
        p.push_back(l.bias);
    }
    return p;
}

Encoder init_encoder(const std::vector<std::size_t>& dims, std::uint64_t seed) {
    if (dims.size() < 2)
        throw ValueError("init_encoder needs at least two dims, got " +
                         std::to_string(dims.size()));
    for (std::size_t d : dims)
        if (d == 0) throw ValueError("init_encoder dims must be positive");
    Encoder enc;
    enc.seed = seed;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        EncoderLayer layer;
        layer.weight = glorot_init(rng, dims[l], dims[l + 1]);
        layer.weight.set_requires_grad(true);
        layer.bias = Tensor::zeros({dims[l + 1]});
        layer.bias.set_requires_grad(true);
        layer.activation =
            (l + 2 < dims.size()) ? Activation::LeakyRelu : Activation::Identity;
        enc.layers.push_back(std::move(layer));
    }
    return enc;
}

void validate_encoder(const Encoder& enc) {
    if (enc.layers.empty()) throw ValueError("encoder has no layers");
    for (std::size_t l = 0; l < enc.layers.size(); ++l) {
        const EncoderLayer& layer = enc.layers[l];
        if (layer.weight.rank() != 2)
            throw ShapeError("encoder layer " + std::to_string(l) + " weight must be 2-D");
        if (layer.bias.rank() != 1 || layer.bias.shape()[0] != layer.weight.shape()[1])
            throw ShapeError("encoder layer " + std::to_string(l) +
                             " bias does not match its weight");
        if (l + 1 < enc.layers.size() &&
            layer.weight.shape()[1] != enc.layers[l + 1].weight.shape()[0])
            throw ShapeError("encoder layer dims do not chain at layer " + std::to_string(l));
        for (const Tensor* t : {&layer.weight, &layer.bias})
            for (double v : t->values())
                if (!std::isfinite(v))
                    throw ValueError("encoder layer " + std::to_string(l) +
                                     " has a non-finite parameter");
    }
    if (enc.layers.back().activation != Activation::Identity)
        throw ValueError("encoder final activation must be identity");
}

Tensor encoder_forward(Tape& tape, const Encoder& enc, const Tensor& x) {
    if (x.rank() != 2 || x.shape()[1] != enc.input_dim())
        throw ShapeError("encoder input shaped " + shape_str(x.shape()) + ", expected [m x " +
                         std::to_string(enc.input_dim()) + "]");
    Tensor h = x;
    for (const EncoderLayer& layer : enc.layers) {
        h = tape.matmul(h, layer.weight);
        h = tape.add_row_vector(h, layer.bias);
        h = apply_activation(tape, h, layer.activation);
    }
    return h;
}

void save_encoder(std::ostream& os, const Encoder& enc) {
    validate_encoder(enc);
    json j;
    j["dims"] = enc.dims();
    std::vector<std::string> acts;
    for (const EncoderLayer& l : enc.layers) acts.push_back(activation_name(l.activation));
    j["activations"] = acts;
    j["seed"] = enc.seed;
    write_json_line(os, j);
    for (const EncoderLayer& l : enc.layers) {
        write_tensor_values(os, l.weight);
        write_tensor_values(os, l.bias);
    }
}

Encoder load_encoder(std::istream& is) {
    json j = read_json_line(is);
    if (!j.contains("dims") || !j.contains("activations") || !j.contains("seed"))
        throw IoError("encoder checkpoint header is missing dims, activations, or seed");
    std::vector<std::size_t> dims = j["dims"].get<std::vector<std::size_t>>();
    std::vector<std::string> acts = j["activations"].get<std::vector<std::string>>();
    if (dims.size() < 2 || acts.size() + 1 != dims.size())
        throw IoError("encoder checkpoint header dims and activations disagree");
    Encoder enc;
    enc.seed = j["seed"].get<std::uint64_t>();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        EncoderLayer layer;
        layer.weight = read_tensor_values(is, {dims[l], dims[l + 1]});
        layer.weight.set_requires_grad(true);
        layer.bias = read_tensor_values(is, {dims[l + 1]});
        layer.bias.set_requires_grad(true);
        layer.activation = activation_from_name(acts[l]);
        enc.layers.push_back(std::move(layer));
    }
    validate_encoder(enc);
    return enc;
}

std::string distance_mode_name(DistanceMode m) {
    switch (m) {
        case DistanceMode::Squared: return "squared";
        case DistanceMode::Unsquared: return "unsquared";
    }
    throw ValueError("unknown distance mode");
}

DistanceMode distance_mode_from_name(const std::string& name) {
    if (name == "squared") return DistanceMode::Squared;
    if (name == "unsquared") return DistanceMode::Unsquared;
    throw ValueError("unknown distance mode '" + name + "'");
}

std::string graph_forward_name(GraphForward g) {
    switch (g) {
        case GraphForward::Gcn: return "gcn";
        case GraphForward::Mlp: return "mlp";
    }
    throw ValueError("unknown graph forward");
}

GraphForward graph_forward_from_name(const std::string& name) {
    if (name == "gcn") return GraphForward::Gcn;
    if (name == "mlp") return GraphForward::Mlp;
    throw ValueError("unknown graph forward '" + name + "'");
}

void validate_model(const GpnModel& model) {
    validate_encoder(model.encoder);
    validate_gcn(model.gcn);
    if (model.encoder.output_dim() != model.gcn.output_dim())
        throw ShapeError("encoder output dim " + std::to_string(model.encoder.output_dim()) +
                         " does not match graph-model output dim " +
                         std::to_string(model.gcn.output_dim()));
    if (!(model.lambda >= 0.0 && model.lambda <= 1.0))
        throw ValueError("lambda must be in [0,1], got " + std::to_string(model.lambda));
    if (model.graph.node_count() == 0) throw ValueError("model has an empty graph");
    if (model.graph.vector_dim() != model.gcn.input_dim())
        throw ShapeError("graph vector dim does not match graph-model input dim");
    for (std::size_t node : model.class_map.node_for_class)
        if (node >= model.graph.node_count())
            throw ValueError("class map points past the graph");
}

Encoder deep_clone(const Encoder& enc) {
    Encoder out;
    out.seed = enc.seed;
    out.layers.reserve(enc.layers.size());
    for (const EncoderLayer& l : enc.layers)
        out.layers.push_back({l.weight.clone(), l.bias.clone(), l.activation});
    return out;
}

GpnModel deep_clone(const GpnModel& model) {
    GpnModel out = model;
    out.encoder = deep_clone(model.encoder);
    out.gcn = deep_clone(model.gcn);
    return out;
}

Tensor shared_nodes_forward(Tape& tape, const GpnModel& model) {
    return model.graph_forward == GraphForward::Gcn
               ? gcn_forward(tape, model.gcn, model.graph)
               : mlp_forward_ablation(tape, model.gcn, model.graph);
}

namespace {

/// Support means per class position. Rows are class-major, so class n's
/// support block is rows [n*K, (n+1)*K).
Tensor support_means(Tape& tape, const Encoder& enc, const Episode& ep) {
    const std::size_t N = ep.n_way, K = ep.k_shot;
    const std::size_t d = ep.support_features.shape()[1];
    std::vector<Tensor> rows;
    rows.reserve(N);
    for (std::size_t n = 0; n < N; ++n) {
        const double* base = ep.support_features.values().data() + n * K * d;
        Tensor block({K, d}, std::vector<double>(base, base + K * d));
        Tensor embedded = encoder_forward(tape, enc, block);
        rows.push_back(tape.row_mean(embedded));
    }
    return tape.stack_rows(rows);
}

Tensor query_distances(Tape& tape, const Encoder& enc, const Episode& ep,
                       const Tensor& protos, DistanceMode mode) {
    Tensor fq = encoder_forward(tape, enc, ep.query_features);
    Tensor d = tape.pairwise_sq_dist(fq, protos);
    if (mode == DistanceMode::Unsquared) d = tape.sqrt_elem(d);
    return d;
}

Tensor posterior_from_distances(const Tensor& d) {
    const std::size_t Q = d.shape()[0], N = d.shape()[1];
    std::vector<double> out(Q * N);
    for (std::size_t i = 0; i < Q; ++i) {
        double mn = d.at(i, 0);
        for (std::size_t n = 1; n < N; ++n) mn = std::min(mn, d.at(i, n));
        double denom = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            double e = std::exp(mn - d.at(i, n));
            out[i * N + n] = e;
            denom += e;
        }
        for (std::size_t n = 0; n < N; ++n) out[i * N + n] /= denom;
    }
    return Tensor({Q, N}, std::move(out));
}

std::vector<int> argmin_rows(const Tensor& d, const std::vector<int>& class_ids) {
    const std::size_t Q = d.shape()[0], N = d.shape()[1];
    std::vector<int> out(Q);
    for (std::size_t i = 0; i < Q; ++i) {
        std::size_t best = 0;
        for (std::size_t n = 1; n < N; ++n)
            if (d.at(i, n) < d.at(i, best)) best = n;
        out[i] = class_ids[best];
    }
    return out;
}

} // namespace

Tensor task_specific_prototypes(Tape& tape, const GpnModel& model, const Episode& ep) {
    validate_episode(ep);
    return support_means(tape, model.encoder, ep);
}

PrototypeSet mix_prototypes(Tape& tape, const GpnModel& model, const Tensor& e_spe,
                            const Tensor& e_share) {
    if (e_spe.shape() != e_share.shape())
        throw ShapeError("prototype shapes disagree: " + shape_str(e_spe.shape()) + " vs " +
                         shape_str(e_share.shape()));
    PrototypeSet set;
    set.e_spe = e_spe;
    set.e_share = e_share;
    set.e_mixed = tape.axpby(model.lambda, e_spe, 1.0 - model.lambda, e_share);
    return set;
}

PrototypeSet compute_prototypes(Tape& tape, const GpnModel& model, const Episode& ep,
                                const Tensor* shared_all) {
    Tensor e_spe = task_specific_prototypes(tape, model, ep);
    Tensor all = shared_all ? *shared_all : shared_nodes_forward(tape, model);
    Tensor e_share = select_prototypes(tape, all, model.class_map, ep.class_ids);
    PrototypeSet set = mix_prototypes(tape, model, e_spe, e_share);
    set.classes = ep.class_ids;
    return set;
}

Tensor classify(Tape& tape, const GpnModel& model, const Episode& ep,
                const PrototypeSet& protos) {
    if (protos.e_mixed.shape()[0] != ep.n_way)
        throw ShapeError("prototype count " + std::to_string(protos.e_mixed.shape()[0]) +
                         " does not match " + std::to_string(ep.n_way) + "-way episode");
    Tensor d = query_distances(tape, model.encoder, ep, protos.e_mixed, model.distance_mode);
    return posterior_from_distances(d);
}

Tensor episode_loss(Tape& tape, const GpnModel& model, const Episode& ep,
                    const Tensor* shared_all) {
    PrototypeSet protos = compute_prototypes(tape, model, ep, shared_all);
    Tensor d = query_distances(tape, model.encoder, ep, protos.e_mixed, model.distance_mode);
    Tensor logits = tape.scale(d, -1.0);
    return tape.softmax_cross_entropy(logits, ep.query_class_pos);
}

std::vector<int> predict(const GpnModel& model, const Episode& ep,
                         const Tensor* shared_all) {
    Tape tape;
    PrototypeSet protos = compute_prototypes(tape, model, ep, shared_all);
    Tensor d = query_distances(tape, model.encoder, ep, protos.e_mixed, model.distance_mode);
    // argmin distance == argmax posterior: the softmax is monotone, so both
    // the winner and the tie structure coincide.
    return argmin_rows(d, ep.class_ids);
}

double episode_accuracy(const GpnModel& model, const Episode& ep,
                        const Tensor* shared_all) {
    std::vector<int> pred = predict(model, ep, shared_all);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == ep.class_ids[static_cast<std::size_t>(ep.query_class_pos[i])]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

Tensor protonet_episode_loss(Tape& tape, const Encoder& enc, const Episode& ep,
                             DistanceMode mode) {
    validate_episode(ep);
    Tensor protos = support_means(tape, enc, ep);
    Tensor d = query_distances(tape, enc, ep, protos, mode);
    Tensor logits = tape.scale(d, -1.0);
    return tape.softmax_cross_entropy(logits, ep.query_class_pos);
}

std::vector<int> protonet_predict(const Encoder& enc, const Episode& ep,
                                  DistanceMode mode) {
    validate_episode(ep);
    Tape tape;
    Tensor protos = support_means(tape, enc, ep);
    Tensor d = query_distances(tape, enc, ep, protos, mode);
    return argmin_rows(d, ep.class_ids);
}

void save_model(const std::filesystem::path& path, const GpnModel& model) {
    validate_model(model);
    std::ofstream os = open_output(path);
    json j;
    j["lambda"] = model.lambda;
    j["distance_mode"] = distance_mode_name(model.distance_mode);
    j["graph_forward"] = graph_forward_name(model.graph_forward);
    j["dims"] = {{"encoder", model.encoder.dims()}, {"gcn", model.gcn.dims()}};
    write_json_line(os, j);
    save_encoder(os, model.encoder);
    save_gcn(os, model.gcn);
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

GpnModel load_model(const std::filesystem::path& path, ConceptGraph graph,
                    ClassNodeMap class_map) {
    std::ifstream is = open_input(path);
    json j = read_json_line(is);
    for (const char* key : {"lambda", "distance_mode", "graph_forward", "dims"})
        if (!j.contains(key))
            throw IoError(path.string() + ": model header missing '" + std::string(key) + "'");
    GpnModel model;
    model.lambda = j["lambda"].get<double>();
    model.distance_mode = distance_mode_from_name(j["distance_mode"].get<std::string>());
    model.graph_forward = graph_forward_from_name(j["graph_forward"].get<std::string>());
    model.encoder = load_encoder(is);
    model.gcn = load_gcn(is);
    model.graph = std::move(graph);
    model.class_map = std::move(class_map);
    validate_model(model);
    return model;
}

} // namespace protoshift
