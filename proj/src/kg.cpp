#include "protoshift/kg.hpp"

#include <algorithm>
#include <deque>
#include <sstream>
#include <unordered_map>

#include "protoshift/rng.hpp"
#include "protoshift/serialize.hpp"

namespace protoshift {

ConceptGraph build_graph(const EdgeList& edges, const WordVectorTable& vectors) {
    if (vectors.empty()) throw ValueError("build_graph: empty word-vector table");

    ConceptGraph g;
    g.node_names.reserve(vectors.size());
    for (const auto& [name, vec] : vectors) g.node_names.push_back(name);
    // std::map iteration is already lexicographic; the sort documents intent.
    std::sort(g.node_names.begin(), g.node_names.end());

    const std::size_t L = g.node_names.size();
    const std::size_t J = vectors.begin()->second.size();
    if (J == 0) throw ValueError("build_graph: zero-dimensional word vectors");
    std::vector<double> flat;
    flat.reserve(L * J);
    for (const std::string& name : g.node_names) {
        const auto& vec = vectors.at(name);
        if (vec.size() != J)
            throw ValueError("build_graph: node '" + name + "' has a vector of dim " +
                             std::to_string(vec.size()) + ", expected " + std::to_string(J));
        flat.insert(flat.end(), vec.begin(), vec.end());
    }
    g.word_vectors = Tensor({L, J}, std::move(flat));

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < L; ++i) index[g.node_names[i]] = i;
    for (const auto& [a, b] : edges) {
        auto ia = index.find(a);
        if (ia == index.end()) throw ValueError("build_graph: edge endpoint '" + a + "' has no word vector");
        auto ib = index.find(b);
        if (ib == index.end()) throw ValueError("build_graph: edge endpoint '" + b + "' has no word vector");
        if (ia->second == ib->second) continue; // self-loops are implied
        g.edges.emplace(std::min(ia->second, ib->second), std::max(ia->second, ib->second));
    }
    if (g.edges.empty() && L > 1)
        throw ValueError("build_graph: empty edge list with " + std::to_string(L) + " nodes");

    std::vector<std::size_t> degree(L, 1); // self-loop
    for (const auto& [i, j] : g.edges) {
        ++degree[i];
        ++degree[j];
    }
    Tensor adj = Tensor::zeros({L, L});
    for (std::size_t i = 0; i < L; ++i)
        adj.values()[i * L + i] = 1.0 / static_cast<double>(degree[i]);
    for (const auto& [i, j] : g.edges) {
        adj.values()[i * L + j] = 1.0 / static_cast<double>(degree[i]);
        adj.values()[j * L + i] = 1.0 / static_cast<double>(degree[j]);
    }
    g.norm_adj = std::move(adj);
    return g;
}

ClassNodeMap map_classes(const ConceptGraph& graph,
                         const std::vector<std::string>& class_names) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < graph.node_count(); ++i) index[graph.node_names[i]] = i;

    std::vector<std::string> seen;
    std::vector<std::string> misses;
    ClassNodeMap map;
    map.node_for_class.reserve(class_names.size());
    for (const std::string& name : class_names) {
        if (std::find(seen.begin(), seen.end(), name) != seen.end())
            throw ValueError("map_classes: duplicate class name '" + name + "'");
        seen.push_back(name);
        auto it = index.find(name);
        if (it == index.end()) {
            misses.push_back(name);
            continue;
        }
        map.node_for_class.push_back(it->second);
    }
    if (!misses.empty()) {
        std::ostringstream os;
        os << "map_classes: no graph node for class";
        if (misses.size() > 1) os << "es";
        for (std::size_t i = 0; i < misses.size(); ++i)
            os << (i ? ", '" : " '") << misses[i] << "'";
        throw ValueError(os.str());
    }
    return map;
}

ConceptGraph randomize_vectors(const ConceptGraph& graph, std::uint64_t seed) {
    ConceptGraph out = graph;
    out.word_vectors = graph.word_vectors.clone();
    Rng rng(seed);
    for (double& v : out.word_vectors.values()) v = rng.normal();
    return out;
}

std::vector<char> reachable_from(const ConceptGraph& graph,
                                 const std::vector<std::size_t>& starts) {
    const std::size_t L = graph.node_count();
    std::vector<std::vector<std::size_t>> nbrs(L);
    for (const auto& [i, j] : graph.edges) {
        nbrs[i].push_back(j);
        nbrs[j].push_back(i);
    }
    std::vector<char> seen(L, 0);
    std::deque<std::size_t> queue;
    for (std::size_t s : starts) {
        if (s >= L) throw ValueError("reachable_from: start index out of range");
        if (!seen[s]) {
            seen[s] = 1;
            queue.push_back(s);
        }
    }
    while (!queue.empty()) {
        std::size_t i = queue.front();
        queue.pop_front();
        for (std::size_t j : nbrs[i])
            if (!seen[j]) {
                seen[j] = 1;
                queue.push_back(j);
            }
    }
    return seen;
}

namespace {

std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

EdgeList load_edge_list(const std::filesystem::path& path) {
    std::ifstream is = open_input(path);
    EdgeList edges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = strip(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t tab = t.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 >= t.size())
            throw IoError(path.string() + ":" + std::to_string(lineno) +
                          ": expected two TAB-separated node names");
        std::string a = strip(t.substr(0, tab));
        std::string b = strip(t.substr(tab + 1));
        if (a.empty() || b.empty() || b.find('\t') != std::string::npos)
            throw IoError(path.string() + ":" + std::to_string(lineno) +
                          ": expected two TAB-separated node names");
        edges.emplace_back(std::move(a), std::move(b));
    }
    return edges;
}

void save_edge_list(const std::filesystem::path& path, const ConceptGraph& graph) {
    std::ofstream os = open_output(path);
    for (const auto& [i, j] : graph.edges)
        os << graph.node_names[i] << '\t' << graph.node_names[j] << '\n';
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

WordVectorTable load_word_vectors(const std::filesystem::path& path) {
    std::ifstream is = open_input(path);
    std::string header;
    if (!std::getline(is, header)) throw IoError(path.string() + ": missing header line");
    std::istringstream hs(strip(header));
    std::string tag;
    long dim = 0;
    if (!(hs >> tag >> dim) || tag != "name" || dim <= 0)
        throw IoError(path.string() + ": header must be 'name <dim>'");

    WordVectorTable table;
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = strip(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t tab = t.find('\t');
        if (tab == std::string::npos)
            throw IoError(path.string() + ":" + std::to_string(lineno) +
                          ": expected '<name>\\t<values>'");
        std::string name = strip(t.substr(0, tab));
        std::istringstream vs(t.substr(tab + 1));
        std::vector<double> values;
        std::string token;
        while (vs >> token) values.push_back(parse_double(token));
        if (name.empty() || values.size() != static_cast<std::size_t>(dim))
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(dim) + " values for node '" + name + "', got " +
                          std::to_string(values.size()));
        if (table.count(name))
            throw IoError(path.string() + ":" + std::to_string(lineno) +
                          ": duplicate node '" + name + "'");
        table[name] = std::move(values);
    }
    return table;
}

void save_word_vectors(const std::filesystem::path& path, const ConceptGraph& graph) {
    std::ofstream os = open_output(path);
    const std::size_t J = graph.vector_dim();
    os << "name " << J << '\n';
    for (std::size_t i = 0; i < graph.node_count(); ++i) {
        os << graph.node_names[i] << '\t';
        for (std::size_t j = 0; j < J; ++j) {
            if (j) os << ' ';
            os << format_double(graph.word_vectors.at(i, j));
        }
        os << '\n';
    }
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

} // namespace protoshift
