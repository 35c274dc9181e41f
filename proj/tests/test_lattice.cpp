#include <catch_amalgamated.hpp>

#include <random>
#include <set>

#include "blockrg/fields.hpp"
#include "blockrg/lattice.hpp"

using namespace blockrg;

TEST_CASE("cell counts follow the torus size", "[lattice]") {
    auto a = enumerate_cells({2, 0, 1});
    CHECK(a.sites.size() == 8);
    CHECK(a.bonds.size() == 24);
    CHECK(a.plaquettes.size() == 24);

    auto b = enumerate_cells({2, 0, 0});
    CHECK(b.sites.size() == 1);
    CHECK(b.bonds.size() == 3);
    CHECK(b.plaquettes.size() == 3);

    CHECK(enumerate_cells({3, 1, 1}).sites.size() == 729);
}

TEST_CASE("cell enumeration is lexicographic and capped", "[lattice]") {
    auto c = enumerate_cells({2, 0, 1});
    for (std::size_t i = 1; i < c.sites.size(); ++i) CHECK(c.sites[i - 1].coord < c.sites[i].coord);
    CHECK_THROWS_AS(enumerate_cells({2, 0, 3}, 100), Error);
    CHECK_THROWS_AS(TorusSpec({2, -2, 1}).validate(), Error);
}

TEST_CASE("blocks partition the fine torus", "[lattice]") {
    Torus fine({2, 0, 2});
    Blocking B(fine, 2);
    CHECK(B.block_of(fine.index({1, 1, 0})) == B.coarse().index({0, 0, 0}));
    std::vector<int> hits(fine.sites(), 0);
    for (std::size_t y = 0; y < B.coarse().sites(); ++y) {
        auto s = B.sites_in_block(y);
        CHECK(s.size() == 8);
        for (auto x : s) {
            ++hits[x];
            CHECK(B.block_of(x) == y);
        }
    }
    for (int h : hits) CHECK(h == 1);

    Blocking single(Torus({2, 0, 1}), 2);
    CHECK(single.coarse().sites() == 1);
    CHECK(single.sites_in_block(0).size() == 8);
}

TEST_CASE("staircase paths", "[lattice]") {
    Torus t({2, 0, 1});
    CHECK(t.staircase_path(3, 3).empty());
    auto p = t.staircase_path(t.index({0, 0, 0}), t.index({1, 1, 0}));
    REQUIRE(p.size() == 2);
    CHECK(t.bond_axis(p[0].bond) == 0);
    CHECK(t.bond_axis(p[1].bond) == 1);
}

TEST_CASE("staircase paths are gauge consistent", "[lattice][property]") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    for (TorusSpec spec : {TorusSpec{2, 0, 2}, TorusSpec{3, 0, 1}, TorusSpec{2, 1, 1}}) {
        Torus t(spec);
        std::uniform_int_distribution<std::size_t> site(0, t.sites() - 1);
        for (int trial = 0; trial < 50; ++trial) {
            Vec omega(Eigen::Index(t.sites()));
            for (auto& w : omega) w = g(rng);
            GaugeField A = gradient(t, omega);
            std::size_t x = site(rng), y = site(rng);
            for (Winding w : {Winding::geodesic, Winding::direct}) {
                double lhs = line_integral(A, t.staircase_path(x, y, w));
                CHECK(lhs == Catch::Approx(omega[Eigen::Index(y)] - omega[Eigen::Index(x)]).margin(1e-12));
            }
        }
    }
}

namespace {

// Exhaustive minimum over all labelled spanning trees of <= 4 points via
// Pruefer sequences, used as the oracle for small polymers.
double brute_spanning_tree(const std::vector<std::size_t>& cubes, const CubeGrid& g) {
    const int n = int(cubes.size());
    if (n < 2) return 0;
    if (n == 2) return g.center_distance(cubes[0], cubes[1]);
    double best = 1e300;
    std::vector<int> seq(std::size_t(n - 2), 0);
    for (;;) {
        std::vector<int> deg(std::size_t(n), 1);
        for (int s : seq) ++deg[std::size_t(s)];
        double len = 0;
        std::vector<int> d = deg;
        for (int s : seq) {
            int leaf = 0;
            while (d[std::size_t(leaf)] != 1) ++leaf;
            len += g.center_distance(cubes[std::size_t(leaf)], cubes[std::size_t(s)]);
            --d[std::size_t(leaf)];
            --d[std::size_t(s)];
        }
        int u = -1, v = -1;
        for (int i = 0; i < n; ++i)
            if (d[std::size_t(i)] == 1) (u < 0 ? u : v) = i;
        len += g.center_distance(cubes[std::size_t(u)], cubes[std::size_t(v)]);
        best = std::min(best, len);
        std::size_t k = 0;
        while (k < seq.size() && ++seq[k] == n) seq[k++] = 0;
        if (k == seq.size()) break;
    }
    return best;
}

}  // namespace

TEST_CASE("tree distance on simple polymers", "[lattice]") {
    CubeGrid g(Torus({2, 0, 3}), 0);  // 8^3 unit cubes
    auto c = [&](int a, int b, int d) { return g.cube_index({a, b, d}); };
    CHECK(tree_distance_dM(Polymer({c(1, 1, 1)}), g) == 0.0);
    CHECK(tree_distance_dM(Polymer({c(1, 1, 1), c(2, 1, 1)}), g) == Catch::Approx(1.0));
    Polymer line({c(1, 1, 1), c(2, 1, 1), c(3, 1, 1)});
    CHECK(tree_distance_dM(line, g) == Catch::Approx(brute_spanning_tree(line.cubes, g)));
    CHECK(tree_distance_dM(line, g) == Catch::Approx(2.0));
    // Steiner for a bent triple is shorter than the spanning tree
    Polymer bent({c(1, 1, 1), c(2, 1, 1), c(1, 2, 1)});
    CHECK(tree_distance_dM(bent, g) <= brute_spanning_tree(bent.cubes, g) + 1e-12);
    CHECK(tree_distance_dM(bent, g) > 1.9);
    CHECK_THROWS_AS(tree_distance_dM(Polymer(), g), Error);
}

TEST_CASE("tree distance is invariant under translations and cubic symmetries", "[lattice][property]") {
    CubeGrid g(Torus({2, 0, 3}), 0);
    const int n = g.per_axis();
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> coord(0, n - 1), count(1, 5);
    std::array<int, 3> perm{0, 1, 2};
    std::vector<std::array<int, 3>> perms;
    do perms.push_back(perm);
    while (std::next_permutation(perm.begin(), perm.end()));
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<Coord> pts(std::size_t(count(rng)));
        for (auto& p : pts) p = {coord(rng), coord(rng), coord(rng)};
        auto make = [&](auto f) {
            std::vector<std::size_t> cs;
            for (auto p : pts) cs.push_back(g.cube_index(f(p)));
            return Polymer(cs);
        };
        Polymer X = make([](Coord p) { return p; });
        double d0 = tree_distance_dM(X, g);
        if (X.size() <= 4) CHECK(d0 <= brute_spanning_tree(X.cubes, g) + 1e-12);
        Coord shift{coord(rng), coord(rng), coord(rng)};
        CHECK(tree_distance_dM(make([&](Coord p) {
                  return Coord{p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]};
              }), g) == Catch::Approx(d0));
        for (const auto& pm : perms)
            for (int flips = 0; flips < 8; ++flips) {
                Polymer Y = make([&](Coord p) {
                    Coord q;
                    for (int a = 0; a < 3; ++a) q[a] = (flips >> a & 1) ? -p[pm[a]] : p[pm[a]];
                    return q;
                });
                CHECK(tree_distance_dM(Y, g) == Catch::Approx(d0).margin(1e-12));
            }
    }
}

TEST_CASE("reblock images", "[lattice]") {
    Torus t({2, 0, 2});
    CubeGrid fine(t, 0), coarse(t, 1);
    Polymer inside({fine.cube_index({0, 0, 0})});
    CHECK(reblock_image(inside, fine, coarse) == Polymer({coarse.cube_index({0, 0, 0})}));
    Polymer straddle({fine.cube_index({1, 0, 0}), fine.cube_index({2, 0, 0})});
    CHECK(reblock_image(straddle, fine, coarse) ==
          Polymer({coarse.cube_index({0, 0, 0}), coarse.cube_index({1, 0, 0})}));
    CHECK_THROWS_AS(reblock_image(inside, fine, fine), Error);
}

TEST_CASE("preimage count matches exhaustive enumeration", "[lattice]") {
    Torus t({2, 0, 2});
    CubeGrid fine(t, 0), coarse(t, 1);
    Polymer X({coarse.cube_index({0, 0, 0})});
    // independent count: connected induced subgraphs of the 2x2x2 grid graph
    std::vector<Coord> pts;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) pts.push_back({a, b, c});
    auto adjacent = [](Coord p, Coord q) {
        return std::abs(p[0] - q[0]) + std::abs(p[1] - q[1]) + std::abs(p[2] - q[2]) == 1;
    };
    int expected = 0;
    for (int mask = 1; mask < 256; ++mask) {
        std::vector<int> in;
        for (int i = 0; i < 8; ++i)
            if (mask >> i & 1) in.push_back(i);
        std::set<int> seen{in[0]};
        std::vector<int> stack{in[0]};
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int v : in)
                if (!seen.count(v) && adjacent(pts[std::size_t(u)], pts[std::size_t(v)])) {
                    seen.insert(v);
                    stack.push_back(v);
                }
        }
        if (seen.size() == in.size()) ++expected;
    }
    CHECK(int(reblock_preimages(X, fine, coarse).size()) == expected);
}

TEST_CASE("reblock image is monotone", "[lattice][property]") {
    Torus t({2, 0, 3});
    CubeGrid fine(t, 0), coarse(t, 1);
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> cube(0, fine.cube_count() - 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::size_t> a;
        for (int i = 0; i < 1 + int(trial % 6); ++i) a.push_back(cube(rng));
        Polymer Y(a);
        auto b = a;
        for (int i = 0; i < 3; ++i) b.push_back(cube(rng));
        Polymer Y2(b);
        CHECK(reblock_image(Y, fine, coarse).subset_of(reblock_image(Y2, fine, coarse)));
    }
}
