#include "protoshift/gcn.hpp"

#include <cmath>
#include <set>

#include "protoshift/serialize.hpp"

namespace protoshift {

std::vector<std::size_t> GcnModel::dims() const {
    std::vector<std::size_t> d;
    d.reserve(layers.size() + 1);
    d.push_back(layers.front().weight.shape()[0]);
    for (const GcnLayer& l : layers) d.push_back(l.weight.shape()[1]);
    return d;
}

std::vector<Tensor> GcnModel::parameters() const {
    std::vector<Tensor> p;
    p.reserve(layers.size());
    for (const GcnLayer& l : layers) p.push_back(l.weight);
    return p;
}

GcnModel init_gcn(const std::vector<std::size_t>& dims, std::uint64_t seed) {
    if (dims.size() < 2)
        throw ValueError("init_gcn needs at least two dims, got " +
                         std::to_string(dims.size()));
    for (std::size_t d : dims)
        if (d == 0) throw ValueError("init_gcn dims must be positive");
    GcnModel model;
    model.seed = seed;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        GcnLayer layer;
        layer.weight = glorot_init(rng, dims[l], dims[l + 1]);
        layer.weight.set_requires_grad(true);
        layer.activation =
            (l + 2 < dims.size()) ? Activation::LeakyRelu : Activation::Identity;
        model.layers.push_back(std::move(layer));
    }
    return model;
}

void validate_gcn(const GcnModel& model) {
    if (model.layers.empty()) throw ValueError("GCN model has no layers");
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const Tensor& w = model.layers[l].weight;
        if (w.rank() != 2)
            throw ShapeError("GCN layer " + std::to_string(l) + " weight must be 2-D");
        if (l + 1 < model.layers.size() &&
            w.shape()[1] != model.layers[l + 1].weight.shape()[0])
            throw ShapeError("GCN layer dims do not chain at layer " + std::to_string(l));
        for (double v : w.values())
            if (!std::isfinite(v))
                throw ValueError("GCN layer " + std::to_string(l) + " has a non-finite weight");
    }
    if (model.layers.back().activation != Activation::Identity)
        throw ValueError("GCN final activation must be identity");
}

namespace {

Tensor layer_stack(Tape& tape, const GcnModel& model, const ConceptGraph& graph,
                   bool propagate) {
    if (graph.vector_dim() != model.input_dim())
        throw ShapeError("graph word-vector dim " + std::to_string(graph.vector_dim()) +
                         " does not match GCN input dim " +
                         std::to_string(model.input_dim()));
    Tensor h = graph.word_vectors;
    for (const GcnLayer& layer : model.layers) {
        if (propagate) h = tape.matmul(graph.norm_adj, h);
        h = tape.matmul(h, layer.weight);
        h = apply_activation(tape, h, layer.activation);
    }
    return h;
}

} // namespace

Tensor gcn_forward(Tape& tape, const GcnModel& model, const ConceptGraph& graph) {
    return layer_stack(tape, model, graph, true);
}

Tensor mlp_forward_ablation(Tape& tape, const GcnModel& model, const ConceptGraph& graph) {
    return layer_stack(tape, model, graph, false);
}

Tensor select_prototypes(Tape& tape, const Tensor& all_nodes, const ClassNodeMap& map,
                         const std::vector<int>& class_ids) {
    if (all_nodes.rank() != 2)
        throw ShapeError("select_prototypes needs a 2-D node matrix");
    if (class_ids.empty()) throw ValueError("select_prototypes got no classes");
    const std::size_t L = all_nodes.shape()[0];
    std::set<int> distinct;
    Tensor selector = Tensor::zeros({class_ids.size(), L});
    for (std::size_t n = 0; n < class_ids.size(); ++n) {
        int c = class_ids[n];
        if (c < 0 || static_cast<std::size_t>(c) >= map.node_for_class.size())
            throw ValueError("select_prototypes: class id " + std::to_string(c) +
                             " is not mapped");
        if (!distinct.insert(c).second)
            throw ValueError("select_prototypes: class id " + std::to_string(c) +
                             " repeats");
        std::size_t node = map.node_for_class[static_cast<std::size_t>(c)];
        if (node >= L)
            throw ValueError("select_prototypes: node index out of range for class " +
                             std::to_string(c));
        selector.values()[n * L + node] = 1.0;
    }
    return tape.matmul(selector, all_nodes);
}

GcnModel deep_clone(const GcnModel& model) {
    GcnModel out;
    out.seed = model.seed;
    out.layers.reserve(model.layers.size());
    for (const GcnLayer& l : model.layers)
        out.layers.push_back({l.weight.clone(), l.activation});
    return out;
}

namespace {

json gcn_header(const GcnModel& model) {
    json j;
    j["dims"] = model.dims();
    std::vector<std::string> acts;
    for (const GcnLayer& l : model.layers) acts.push_back(activation_name(l.activation));
    j["activations"] = acts;
    j["seed"] = model.seed;
    return j;
}

} // namespace

void save_gcn(std::ostream& os, const GcnModel& model) {
    validate_gcn(model);
    write_json_line(os, gcn_header(model));
    for (const GcnLayer& l : model.layers) write_tensor_values(os, l.weight);
}

void save_gcn(const std::filesystem::path& path, const GcnModel& model) {
    std::ofstream os = open_output(path);
    save_gcn(os, model);
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

GcnModel load_gcn(std::istream& is) {
    json j = read_json_line(is);
    if (!j.contains("dims") || !j.contains("activations") || !j.contains("seed"))
        throw IoError("GCN checkpoint header is missing dims, activations, or seed");
    std::vector<std::size_t> dims = j["dims"].get<std::vector<std::size_t>>();
    std::vector<std::string> acts = j["activations"].get<std::vector<std::string>>();
    if (dims.size() < 2 || acts.size() + 1 != dims.size())
        throw IoError("GCN checkpoint header dims and activations disagree");
    GcnModel model;
    model.seed = j["seed"].get<std::uint64_t>();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        GcnLayer layer;
        layer.weight = read_tensor_values(is, {dims[l], dims[l + 1]});
        layer.weight.set_requires_grad(true);
        layer.activation = activation_from_name(acts[l]);
        model.layers.push_back(std::move(layer));
    }
    validate_gcn(model);
    return model;
}

GcnModel load_gcn(const std::filesystem::path& path) {
    std::ifstream is = open_input(path);
    return load_gcn(is);
}

} // namespace protoshift
