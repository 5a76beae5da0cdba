#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "protoshift/gcn.hpp"
#include "protoshift/rng.hpp"

using namespace protoshift;

namespace {

GcnModel identity_gcn(std::size_t dim, std::size_t depth) {
    GcnModel m;
    for (std::size_t l = 0; l < depth; ++l) {
        GcnLayer layer;
        layer.weight = Tensor::zeros({dim, dim});
        for (std::size_t i = 0; i < dim; ++i) layer.weight.values()[i * dim + i] = 1.0;
        layer.activation = Activation::Identity;
        m.layers.push_back(std::move(layer));
    }
    return m;
}

WordVectorTable random_table(std::size_t n, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    WordVectorTable t;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v(dim);
        for (double& x : v) x = rng.normal();
        t["n" + std::to_string(i)] = v;
    }
    return t;
}

// dense (norm_adj)^depth * H, the reference the identity stack must match
Tensor matpow_times(const Tensor& adj, const Tensor& h, std::size_t depth) {
    const std::size_t L = adj.shape()[0], J = h.shape()[1];
    Tensor cur = h.clone();
    for (std::size_t d = 0; d < depth; ++d) {
        Tensor next = Tensor::zeros({L, J});
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t k = 0; k < L; ++k) {
                double a = adj.at(i, k);
                if (a == 0.0) continue;
                for (std::size_t j = 0; j < J; ++j)
                    next.values()[i * J + j] += a * cur.at(k, j);
            }
        cur = std::move(next);
    }
    return cur;
}

} // namespace

TEST_CASE("gcn_forward oracles") {
    // single node: self-loop identity passes the vector straight through
    WordVectorTable solo;
    solo["x"] = {1.5, -2.0, 0.25};
    ConceptGraph g1 = build_graph({}, solo);
    Tape tape;
    Tensor out1 = gcn_forward(tape, identity_gcn(3, 1), g1);
    CHECK(out1.values() == std::vector<double>{1.5, -2.0, 0.25});

    // two nodes sharing one edge average each other: rows both [1,1]
    WordVectorTable duo;
    duo["a"] = {2.0, 0.0};
    duo["b"] = {0.0, 2.0};
    ConceptGraph g2 = build_graph({{"a", "b"}}, duo);
    Tape tape2;
    Tensor out2 = gcn_forward(tape2, identity_gcn(2, 1), g2);
    CHECK(out2.values() == std::vector<double>{1.0, 1.0, 1.0, 1.0});
}

TEST_CASE("gcn_forward dimension mismatch") {
    WordVectorTable duo;
    duo["a"] = {2.0, 0.0};
    duo["b"] = {0.0, 2.0};
    ConceptGraph g = build_graph({{"a", "b"}}, duo);
    Tape tape;
    CHECK_THROWS_AS(gcn_forward(tape, init_gcn({3, 2}, 1), g), ShapeError);
}

TEST_CASE("gcn_forward gradients wrt every layer weight") {
    ConceptGraph g = build_graph({{"n0", "n1"}, {"n1", "n2"}, {"n2", "n3"}, {"n0", "n2"}},
                                 random_table(4, 3, 11));
    GcnModel model = init_gcn({3, 5, 2}, 21);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        double err = grad_check(
            [&](Tape& tape, const Tensor& w) {
                GcnModel probe = deep_clone(model);
                probe.layers[l].weight = w;
                return tape.sum(gcn_forward(tape, probe, g));
            },
            model.layers[l].weight, 1e-5);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("identity stack equals adjacency matrix power") {
    Rng rng(5);
    for (std::size_t L = 2; L <= 8; ++L) {
        // ring plus random chords keeps the graph connected and irregular
        EdgeList edges;
        for (std::size_t i = 0; i < L; ++i)
            edges.emplace_back("n" + std::to_string(i), "n" + std::to_string((i + 1) % L));
        for (std::size_t c = 0; c < L / 2; ++c) {
            auto i = static_cast<std::size_t>(rng.below(L));
            auto j = static_cast<std::size_t>(rng.below(L));
            if (i != j) edges.emplace_back("n" + std::to_string(i), "n" + std::to_string(j));
        }
        ConceptGraph g = build_graph(edges, random_table(L, 4, 100 + L));
        for (std::size_t depth : {1, 2, 3}) {
            Tape tape;
            Tensor got = gcn_forward(tape, identity_gcn(4, depth), g);
            Tensor want = matpow_times(g.norm_adj, g.word_vectors, depth);
            for (std::size_t k = 0; k < got.size(); ++k)
                CHECK(std::abs(got.values()[k] - want.values()[k]) < 1e-10);
        }
    }
}

TEST_CASE("gcn_forward is invariant under node relabeling") {
    WordVectorTable t1, t2;
    // same logical graph, names chosen to reverse the sort order
    t1["a"] = {1.0, 2.0};
    t1["b"] = {3.0, -1.0};
    t1["c"] = {0.5, 0.5};
    t2["c2"] = t1["a"];
    t2["b2"] = t1["b"];
    t2["a2"] = t1["c"];
    ConceptGraph g1 = build_graph({{"a", "b"}, {"b", "c"}}, t1);
    ConceptGraph g2 = build_graph({{"c2", "b2"}, {"b2", "a2"}}, t2);
    GcnModel model = init_gcn({2, 4, 3}, 77);

    Tape tapeA, tapeB;
    Tensor outA = gcn_forward(tapeA, model, g1);
    Tensor outB = gcn_forward(tapeB, model, g2);
    ClassNodeMap mapA = map_classes(g1, {"a", "b", "c"});
    ClassNodeMap mapB = map_classes(g2, {"c2", "b2", "a2"});
    for (int cls = 0; cls < 3; ++cls) {
        std::size_t ra = mapA.node_for_class[static_cast<std::size_t>(cls)];
        std::size_t rb = mapB.node_for_class[static_cast<std::size_t>(cls)];
        for (std::size_t j = 0; j < outA.shape()[1]; ++j)
            CHECK(outA.at(ra, j) == outB.at(rb, j));
    }
}

TEST_CASE("select_prototypes") {
    WordVectorTable t = random_table(4, 2, 3);
    ConceptGraph g = build_graph({{"n0", "n1"}, {"n1", "n2"}, {"n2", "n3"}}, t);
    ClassNodeMap map = map_classes(g, {"n2", "n0", "n3"}); // class ids 0,1,2
    Tape tape;
    Tensor all = gcn_forward(tape, identity_gcn(2, 1), g);

    Tape t1;
    Tensor sel = select_prototypes(t1, all, map, {0, 1, 2});
    CHECK(sel.shape() == Shape{3, 2});
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(sel.at(0, j) == all.at(2, j));
        CHECK(sel.at(1, j) == all.at(0, j));
        CHECK(sel.at(2, j) == all.at(3, j));
    }

    // permuted class list gives the same rows permuted
    Tape t2;
    Tensor perm = select_prototypes(t2, all, map, {2, 0, 1});
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(perm.at(0, j) == sel.at(2, j));
        CHECK(perm.at(1, j) == sel.at(0, j));
        CHECK(perm.at(2, j) == sel.at(1, j));
    }

    Tape t3;
    CHECK_THROWS_AS(select_prototypes(t3, all, map, {0, 0}), ValueError);
    Tape t4;
    CHECK_THROWS_AS(select_prototypes(t4, all, map, {0, 9}), ValueError);
    Tape t5;
    CHECK_THROWS_AS(select_prototypes(t5, all, map, {}), ValueError);
}

TEST_CASE("init_gcn") {
    GcnModel a = init_gcn({300, 64, 32}, 9);
    GcnModel b = init_gcn({300, 64, 32}, 9);
    GcnModel c = init_gcn({300, 64, 32}, 10);
    CHECK(a.dims() == std::vector<std::size_t>{300, 64, 32});
    CHECK(a.layers[0].activation == Activation::LeakyRelu);
    CHECK(a.layers[1].activation == Activation::Identity);
    for (std::size_t l = 0; l < 2; ++l)
        CHECK(a.layers[l].weight.values() == b.layers[l].weight.values());
    CHECK(a.layers[0].weight.values() != c.layers[0].weight.values());

    double bound = std::sqrt(6.0 / (300 + 64));
    double lo = 0.0, hi = 0.0;
    for (double v : a.layers[0].weight.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo >= -bound);
    CHECK(hi <= bound);
    CHECK(lo < -0.5 * bound); // init actually spreads over the interval
    CHECK(hi > 0.5 * bound);

    CHECK_THROWS_AS(init_gcn({300}, 1), ValueError);
    CHECK_THROWS_AS(init_gcn({4, 0, 2}, 1), ValueError);
}

TEST_CASE("validate_gcn rejects broken models") {
    GcnModel ok = init_gcn({3, 4, 2}, 1);
    CHECK_NOTHROW(validate_gcn(ok));

    GcnModel chain = init_gcn({3, 4, 2}, 1);
    chain.layers[1].weight = Tensor::zeros({5, 2});
    CHECK_THROWS_AS(validate_gcn(chain), ShapeError);

    GcnModel act = init_gcn({3, 4, 2}, 1);
    act.layers.back().activation = Activation::LeakyRelu;
    CHECK_THROWS_AS(validate_gcn(act), ValueError);

    GcnModel inf = init_gcn({3, 4, 2}, 1);
    inf.layers[0].weight.values()[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(validate_gcn(inf), ValueError);
}

TEST_CASE("mlp_forward_ablation") {
    // no edges: D^{-1}A is the identity, the two forwards agree exactly
    WordVectorTable solo;
    solo["z"] = {0.3, -0.7};
    ConceptGraph g0 = build_graph({}, solo);
    GcnModel model = init_gcn({2, 3, 2}, 4);
    Tape ta, tb;
    Tensor viaGcn = gcn_forward(ta, model, g0);
    Tensor viaMlp = mlp_forward_ablation(tb, model, g0);
    CHECK(viaGcn.values() == viaMlp.values());

    // with an edge and identity weights the mlp keeps rows unmixed
    WordVectorTable duo;
    duo["a"] = {2.0, 0.0};
    duo["b"] = {0.0, 2.0};
    ConceptGraph g2 = build_graph({{"a", "b"}}, duo);
    Tape tc;
    Tensor unmixed = mlp_forward_ablation(tc, identity_gcn(2, 1), g2);
    CHECK(unmixed.values() == g2.word_vectors.values());
    Tape td;
    Tensor mixed = gcn_forward(td, identity_gcn(2, 1), g2);
    CHECK(unmixed.values() != mixed.values());
}

TEST_CASE("mlp_forward_ablation gradients") {
    ConceptGraph g = build_graph({{"n0", "n1"}, {"n1", "n2"}}, random_table(3, 3, 6));
    GcnModel model = init_gcn({3, 4, 2}, 8);
    double err = grad_check(
        [&](Tape& tape, const Tensor& w) {
            GcnModel probe = deep_clone(model);
            probe.layers[0].weight = w;
            return tape.sum(mlp_forward_ablation(tape, probe, g));
        },
        model.layers[0].weight, 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("gcn checkpoint round-trip") {
    auto dir = std::filesystem::temp_directory_path() / "protoshift-gcn-test";
    std::filesystem::create_directories(dir);
    auto p1 = dir / "m1.ckpt";
    auto p2 = dir / "m2.ckpt";

    GcnModel model = init_gcn({5, 7, 3}, 123);
    save_gcn(p1, model);
    GcnModel back = load_gcn(p1);
    CHECK(back.seed == model.seed);
    CHECK(back.dims() == model.dims());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        CHECK(back.layers[l].activation == model.layers[l].activation);
        CHECK(back.layers[l].weight.values() == model.layers[l].weight.values());
    }

    save_gcn(p2, back);
    auto read_file = [](const std::filesystem::path& p) {
        std::ifstream is(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(is)),
                           std::istreambuf_iterator<char>());
    };
    CHECK(read_file(p1) == read_file(p2));

    CHECK_THROWS_AS(load_gcn(dir / "missing.ckpt"), IoError);
}

TEST_CASE("deep_clone detaches storage") {
    GcnModel model = init_gcn({2, 3, 2}, 5);
    GcnModel copy = deep_clone(model);
    CHECK(copy.layers[0].weight.values() == model.layers[0].weight.values());
    copy.layers[0].weight.values()[0] += 1.0;
    CHECK(copy.layers[0].weight.values() != model.layers[0].weight.values());
}
