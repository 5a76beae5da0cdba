#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "protoshift/tensor.hpp"

namespace protoshift {

/// Undirected concept graph with one word vector per node. Nodes are ordered
/// lexicographically by name; edges are stored with the smaller index first;
/// self-loops are implied and not stored. Immutable after construction and
/// safe to share read-only across evaluation workers.
struct ConceptGraph {
    std::vector<std::string> node_names;
    Tensor word_vectors;                              // [L x J]
    std::set<std::pair<std::size_t, std::size_t>> edges;
    Tensor norm_adj;                                  // [L x L], rows sum to 1

    std::size_t node_count() const { return node_names.size(); }
    std::size_t vector_dim() const { return word_vectors.shape()[1]; }
};

/// Node index per dataset class id (position in the class-name list).
struct ClassNodeMap {
    std::vector<std::size_t> node_for_class;
};

using WordVectorTable = std::map<std::string, std::vector<double>>;
using EdgeList = std::vector<std::pair<std::string, std::string>>;

/// Nodes are the vector-table keys. Every edge endpoint must have a vector,
/// all vectors must share one dimension, and a multi-node graph must have at
/// least one edge. norm_adj is exactly D^{-1}A with self-loops.
ConceptGraph build_graph(const EdgeList& edges, const WordVectorTable& vectors);

/// Fails listing every class name missing from the graph; duplicates in
/// class_names are rejected (the map must stay injective).
ClassNodeMap map_classes(const ConceptGraph& graph,
                         const std::vector<std::string>& class_names);

/// Same structure, word vectors replaced by i.i.d. standard-normal entries.
ConceptGraph randomize_vectors(const ConceptGraph& graph, std::uint64_t seed);

/// BFS over the undirected edges; out[i] is true when node i is reachable
/// from some start node (start nodes are reachable from themselves).
std::vector<char> reachable_from(const ConceptGraph& graph,
                                 const std::vector<std::size_t>& starts);

/// Edge list file: one edge per line, two node names separated by one TAB.
/// Lines starting with '#' and blank lines are ignored.
EdgeList load_edge_list(const std::filesystem::path& path);
void save_edge_list(const std::filesystem::path& path, const ConceptGraph& graph);

/// Word-vector file: header line "name <dim>", then one line per node:
/// the node name, a TAB, and <dim> space-separated decimal reals.
WordVectorTable load_word_vectors(const std::filesystem::path& path);
void save_word_vectors(const std::filesystem::path& path, const ConceptGraph& graph);

} // namespace protoshift
