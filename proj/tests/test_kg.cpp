#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "protoshift/kg.hpp"
#include "protoshift/serialize.hpp"

using namespace protoshift;

namespace {

WordVectorTable table_for(const std::vector<std::string>& names, std::size_t dim = 2) {
    WordVectorTable t;
    double v = 1.0;
    for (const auto& n : names) {
        std::vector<double> vec(dim);
        for (double& x : vec) x = v++;
        t[n] = vec;
    }
    return t;
}

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "protoshift-kg-test";
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("build_graph normalization oracles") {
    // single node, no edges: self-loop only
    ConceptGraph solo = build_graph({}, table_for({"only"}));
    CHECK(solo.node_count() == 1);
    CHECK(solo.norm_adj.values() == std::vector<double>{1.0});

    // path a-b-c: b's row is [1/3, 1/3, 1/3]
    ConceptGraph path = build_graph({{"a", "b"}, {"b", "c"}}, table_for({"a", "b", "c"}));
    CHECK(path.node_names == std::vector<std::string>{"a", "b", "c"});
    CHECK(path.norm_adj.at(1, 0) == doctest::Approx(1.0 / 3).epsilon(1e-15));
    CHECK(path.norm_adj.at(1, 1) == doctest::Approx(1.0 / 3).epsilon(1e-15));
    CHECK(path.norm_adj.at(1, 2) == doctest::Approx(1.0 / 3).epsilon(1e-15));
    // endpoints see self + one neighbor
    CHECK(path.norm_adj.at(0, 0) == 0.5);
    CHECK(path.norm_adj.at(0, 1) == 0.5);
    CHECK(path.norm_adj.at(0, 2) == 0.0);

    // star with hub of degree 4: hub row entries all 1/5
    ConceptGraph star = build_graph({{"hub", "s1"}, {"hub", "s2"}, {"hub", "s3"}, {"hub", "s4"}},
                                    table_for({"hub", "s1", "s2", "s3", "s4"}));
    std::size_t hub = 0; // "hub" sorts first
    for (std::size_t j = 0; j < 5; ++j)
        CHECK(star.norm_adj.at(hub, j) == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("build_graph row sums and symmetry") {
    ConceptGraph g = build_graph({{"a", "b"}, {"b", "c"}, {"c", "d"}, {"d", "a"}, {"a", "c"}},
                                 table_for({"a", "b", "c", "d"}, 3));
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < g.node_count(); ++j) {
            sum += g.norm_adj.at(i, j);
            // adjacency pattern is symmetric even though D^{-1}A is not
            CHECK((g.norm_adj.at(i, j) > 0) == (g.norm_adj.at(j, i) > 0));
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("build_graph is order-insensitive and duplicate-idempotent") {
    WordVectorTable t = table_for({"a", "b", "c"});
    ConceptGraph g1 = build_graph({{"a", "b"}, {"b", "c"}}, t);
    ConceptGraph g2 = build_graph({{"b", "c"}, {"a", "b"}}, t);
    ConceptGraph g3 = build_graph({{"c", "b"}, {"a", "b"}, {"b", "a"}, {"a", "b"}}, t);
    CHECK(g1.norm_adj.values() == g2.norm_adj.values());
    CHECK(g1.norm_adj.values() == g3.norm_adj.values());
    CHECK(g1.edges == g3.edges);
}

TEST_CASE("build_graph error cases") {
    CHECK_THROWS_WITH_AS(build_graph({{"a", "zz"}}, table_for({"a", "b"})),
                         doctest::Contains("zz"), ValueError);
    WordVectorTable bad = table_for({"a", "b"});
    bad["b"] = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(build_graph({{"a", "b"}}, bad), ValueError);
    CHECK_THROWS_AS(build_graph({}, table_for({"a", "b"})), ValueError);
}

TEST_CASE("map_classes") {
    ConceptGraph g = build_graph({{"a", "b"}, {"b", "c"}}, table_for({"a", "b", "c"}));
    ClassNodeMap m = map_classes(g, {"c", "a"});
    CHECK(m.node_for_class == std::vector<std::size_t>{2, 0});

    CHECK_THROWS_WITH_AS(map_classes(g, {"a", "nope", "what"}),
                         doctest::Contains("nope"), ValueError);
    CHECK_THROWS_WITH_AS(map_classes(g, {"a", "nope", "what"}),
                         doctest::Contains("what"), ValueError);
    CHECK_THROWS_AS(map_classes(g, {"a", "a"}), ValueError);
}

TEST_CASE("randomize_vectors") {
    ConceptGraph g = build_graph({{"a", "b"}}, table_for({"a", "b"}, 4));
    ConceptGraph r1 = randomize_vectors(g, 7);
    ConceptGraph r2 = randomize_vectors(g, 7);
    ConceptGraph r3 = randomize_vectors(g, 8);
    CHECK(r1.word_vectors.shape() == g.word_vectors.shape());
    CHECK(r1.word_vectors.values() == r2.word_vectors.values());
    CHECK(r1.word_vectors.values() != r3.word_vectors.values());
    CHECK(r1.word_vectors.values() != g.word_vectors.values());
    // structure unchanged
    CHECK(r1.norm_adj.values() == g.norm_adj.values());
    CHECK(r1.node_names == g.node_names);
}

TEST_CASE("reachable_from walks the undirected graph") {
    ConceptGraph g = build_graph({{"a", "b"}, {"c", "d"}}, table_for({"a", "b", "c", "d"}));
    std::vector<char> seen = reachable_from(g, {0});
    CHECK(seen == std::vector<char>{1, 1, 0, 0});
}

TEST_CASE("edge list and word vector files round-trip") {
    auto dir = temp_dir();
    auto edges_path = dir / "edges.tsv";
    auto vec_path = dir / "vectors.txt";

    ConceptGraph g = build_graph({{"a", "b"}, {"b", "c"}}, table_for({"a", "b", "c"}, 3));
    save_edge_list(edges_path, g);
    save_word_vectors(vec_path, g);

    EdgeList edges = load_edge_list(edges_path);
    WordVectorTable vecs = load_word_vectors(vec_path);
    ConceptGraph back = build_graph(edges, vecs);
    CHECK(back.node_names == g.node_names);
    CHECK(back.word_vectors.values() == g.word_vectors.values());
    CHECK(back.norm_adj.values() == g.norm_adj.values());

    // second save is byte-identical
    auto read_file = [](const std::filesystem::path& p) {
        std::ifstream is(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(is)),
                           std::istreambuf_iterator<char>());
    };
    std::string first = read_file(edges_path), firstv = read_file(vec_path);
    save_edge_list(edges_path, back);
    save_word_vectors(vec_path, back);
    CHECK(read_file(edges_path) == first);
    CHECK(read_file(vec_path) == firstv);
}

TEST_CASE("edge list parsing: comments, blanks, malformed lines") {
    auto dir = temp_dir();
    auto p = dir / "edges_mixed.tsv";
    {
        std::ofstream os(p);
        os << "# taxonomy edges\n\n" << "a\tb\n" << "b\tc\n";
    }
    CHECK(load_edge_list(p).size() == 2);

    {
        std::ofstream os(p);
        os << "a b no tab here\n";
    }
    CHECK_THROWS_WITH_AS(load_edge_list(p), doctest::Contains(":1:"), IoError);
    CHECK_THROWS_AS(load_edge_list(dir / "missing.tsv"), IoError);
}

TEST_CASE("word vector file parsing errors") {
    auto dir = temp_dir();
    auto p = dir / "vectors_bad.txt";
    {
        std::ofstream os(p);
        os << "name 2\n" << "a\t1.0 2.0\n" << "a\t3.0 4.0\n";
    }
    CHECK_THROWS_AS(load_word_vectors(p), IoError); // duplicate name
    {
        std::ofstream os(p);
        os << "name 2\n" << "a\t1.0\n";
    }
    CHECK_THROWS_AS(load_word_vectors(p), IoError); // wrong arity
    {
        std::ofstream os(p);
        os << "wrong 2\n" << "a\t1.0 2.0\n";
    }
    CHECK_THROWS_AS(load_word_vectors(p), IoError); // bad header
}
