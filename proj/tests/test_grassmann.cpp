#include <catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <random>

#include "blockrg/grassmann.hpp"
#include "blockrg/oracles.hpp"

using namespace blockrg;
using cd = std::complex<double>;
using G = GrassmannPoly;

namespace {

std::shared_ptr<const GrassmannUniverse> universe(std::size_t pairs) {
    return std::make_shared<const GrassmannUniverse>(GrassmannUniverse::anonymous(pairs));
}

cd cofactor_det(const CMat& M) {
    const auto n = M.rows();
    if (n == 1) return M(0, 0);
    cd s = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        CMat minor(n - 1, n - 1);
        for (Eigen::Index r = 1; r < n; ++r)
            for (Eigen::Index c = 0, cc = 0; c < n; ++c)
                if (c != j) minor(r - 1, cc++) = M(r, c);
        s += (j % 2 ? -1.0 : 1.0) * M(0, j) * cofactor_det(minor);
    }
    return s;
}

CMat random_cmat(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> g;
    CMat M(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) M(i, j) = {g(rng), g(rng)};
    return M;
}

// Random element of degree <= max_deg; even_only keeps even degrees.
G random_element(std::mt19937_64& rng, const std::shared_ptr<const GrassmannUniverse>& u, int terms, int max_deg,
                 bool even_only) {
    std::normal_distribution<double> g;
    std::uniform_int_distribution<int> gen(0, u->size() - 1), deg(0, max_deg);
    G r(u);
    for (int t = 0; t < terms; ++t) {
        int d = deg(rng);
        if (even_only && d % 2) --d;
        std::vector<int> gens;
        while (int(gens.size()) < d) {
            int x = gen(rng);
            if (std::find(gens.begin(), gens.end(), x) == gens.end()) gens.push_back(x);
        }
        r += G::monomial(u, gens, cd(g(rng), g(rng)));
    }
    return r;
}

double max_abs_diff(const G& a, const G& b) {
    const G d = a - b;
    double m = 0;
    for (const auto& [k, c] : d.terms()) m = std::max(m, std::abs(c));
    return m;
}

}  // namespace

TEST_CASE("multiplication examples", "[grassmann]") {
    auto u = universe(2);
    G x = G::generator(u, u->psi(0)), y = G::generator(u, u->psi(1));
    CHECK((x * x).is_zero());
    CHECK(max_abs_diff(x * y, -1.0 * (y * x)) == 0.0);
    G one = G::constant(u, 1.0);
    G lhs = (one + x) * (one + y);
    CHECK(max_abs_diff(lhs, one + x + y + x * y) == 0.0);
}

TEST_CASE("nilpotency, bilinearity and associativity", "[grassmann][property]") {
    std::mt19937_64 rng(3);
    auto u = universe(3);
    for (int g = 0; g < u->size(); ++g) {
        G x = G::generator(u, g, cd(1.5, -0.5));
        CHECK((x * x).is_zero());
    }
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 50; ++trial) {
        G a = random_element(rng, u, 6, 3, false), b = random_element(rng, u, 6, 3, false),
          c = random_element(rng, u, 6, 3, false);
        cd s(n(rng), n(rng));
        CHECK(max_abs_diff((a * b) * c, a * (b * c)) < 1e-12);
        CHECK(max_abs_diff(a * (b + s * c), a * b + s * (a * c)) < 1e-12);
        CHECK(max_abs_diff((s * a + b) * c, s * (a * c) + b * c) < 1e-12);
    }
}

TEST_CASE("h-norm", "[grassmann]") {
    auto u = universe(2);
    CHECK(G::constant(u, cd(-2.5, 0)).h_norm(0.7) == Catch::Approx(2.5));
    G e = G::monomial(u, {u->psi(0), u->psi(1)}, 3.0);
    CHECK(e.h_norm(0.5) == Catch::Approx(3 * 0.25));
    CHECK(e.h_norm(1.0) == Catch::Approx(3.0));
}

TEST_CASE("h-norm equals the kernel-table sum", "[grassmann][property]") {
    // oracle: expand each monomial into its antisymmetric kernel entries over all
    // orderings and sum h^n/n! |E_n(x_1..x_n)|
    std::mt19937_64 rng(9);
    auto u = universe(3);
    for (int trial = 0; trial < 30; ++trial) {
        G e = random_element(rng, u, 8, 4, false);
        double h = trial % 2 ? 0.3 : 1.7;
        std::map<std::vector<int>, cd> kernel;
        for (const auto& [m, c] : e.terms()) {
            std::vector<int> gens;
            for (int g = 0; g < 64; ++g)
                if (m >> g & 1) gens.push_back(g);
            do kernel[gens] += c * double(detail::sequence_sign(gens));
            while (std::next_permutation(gens.begin(), gens.end()));
        }
        double oracle = 0;
        for (const auto& [gens, c] : kernel) {
            double fact = 1;
            for (std::size_t i = 2; i <= gens.size(); ++i) fact *= double(i);
            oracle += std::pow(h, double(gens.size())) / fact * std::abs(c);
        }
        CHECK(e.h_norm(h) == Catch::Approx(oracle).epsilon(1e-12));
        // at h = 1 the norm is the plain l1 norm of the coefficient table
        double l1 = 0;
        for (const auto& [m, c] : e.terms()) l1 += std::abs(c);
        CHECK(e.h_norm(1.0) == Catch::Approx(l1).epsilon(1e-14));
    }
}

TEST_CASE("Berezin top element", "[grassmann]") {
    auto u = universe(1);
    CHECK(G::constant(u, 1.0).berezin_top() == cd(0));
    auto u3 = universe(3);
    std::vector<int> seq;
    for (std::size_t i = 0; i < 3; ++i) {
        seq.push_back(u3->bar(i));
        seq.push_back(u3->psi(i));
    }
    G full = G::monomial(u3, seq);
    CHECK(full.berezin_top() == cd(detail::sequence_sign(seq)));
    CHECK(std::abs(full.berezin_top()) == 1.0);
}

TEST_CASE("Gaussian Berezin integral is the determinant", "[grassmann][property]") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        CMat M = random_cmat(rng, 4);
        cd oracle = cofactor_det(M);
        CHECK(std::abs(berezin_gaussian(M) - oracle) <= 1e-12 * std::abs(oracle));
        auto u = universe(4);
        cd via_exp = (-1.0 * G::bilinear(u, M)).exp_truncated().berezin_integral();
        CHECK(std::abs(via_exp - oracle) <= 1e-12 * std::abs(oracle));
    }
    for (Eigen::Index n : {6, 9, 12, 16}) {
        CMat M = random_cmat(rng, n);
        auto ref = oracle::reference_determinant(M);
        cd r(double(ref.real()), double(ref.imag()));
        CHECK(std::abs(berezin_gaussian(M) - r) <= 1e-12 * std::abs(r));
    }
}

TEST_CASE("Gaussian integration moments", "[grassmann]") {
    std::mt19937_64 rng(4);
    auto u = universe(2);
    CMat Gamma = random_cmat(rng, 2);
    std::vector<std::size_t> pairs{0, 1};
    CHECK(G::constant(u, 1.0).gaussian_integrate(Gamma, pairs).constant_term() == cd(1));
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            G two = G::monomial(u, {u->psi(i), u->bar(j)});
            CHECK(std::abs(two.gaussian_integrate(Gamma, pairs).constant_term() -
                           Gamma(Eigen::Index(i), Eigen::Index(j))) < 1e-14);
        }

    // oracle: ratio of Berezin integrals against exp(-<Wbar, Gamma^{-1} W>)
    CMat inv = Gamma.inverse();
    G weight = (-1.0 * G::bilinear(u, inv)).exp_truncated();
    cd norm = weight.berezin_integral();
    auto oracle = [&](const G& e) { return (e * weight).berezin_integral() / norm; };
    G four = G::monomial(u, {u->psi(0), u->bar(0), u->psi(1), u->bar(1)});
    cd lib = four.gaussian_integrate(Gamma, pairs).constant_term();
    CHECK(std::abs(lib - Gamma.determinant()) < 1e-12);
    CHECK(std::abs(lib - oracle(four)) < 1e-12);

    auto u3 = universe(3);
    CMat G3 = random_cmat(rng, 3);
    G w3 = (-1.0 * G::bilinear(u3, CMat(G3.inverse()))).exp_truncated();
    for (int trial = 0; trial < 20; ++trial) {
        G e = random_element(rng, u3, 10, 6, false);
        cd lib3 = e.gaussian_integrate(G3, {0, 1, 2}).constant_term();
        cd ora3 = (e * w3).berezin_integral() / w3.berezin_integral();
        CHECK(std::abs(lib3 - ora3) < 1e-10 * (1 + std::abs(ora3)));
    }
}

TEST_CASE("generating function of the Gaussian measure", "[grassmann][property]") {
    // pairs 0..n-1 are sources eta, pairs n..2n-1 are integrated W
    std::mt19937_64 rng(8);
    const std::size_t n = 3;
    auto u = universe(2 * n);
    for (int trial = 0; trial < 5; ++trial) {
        CMat Gamma = random_cmat(rng, Eigen::Index(n));
        G src(u);
        for (std::size_t i = 0; i < n; ++i) {
            src += G::monomial(u, {u->bar(i), u->psi(n + i)});  // etabar_i W_i
            src += G::monomial(u, {u->bar(n + i), u->psi(i)});  // Wbar_i eta_i
        }
        std::vector<std::size_t> W{n, n + 1, n + 2};
        G lhs = src.exp_truncated().gaussian_integrate(Gamma, W);
        CMat big = CMat::Zero(Eigen::Index(2 * n), Eigen::Index(2 * n));
        big.topLeftCorner(Eigen::Index(n), Eigen::Index(n)) = Gamma;
        G rhs = G::bilinear(u, big).exp_truncated();
        CHECK(max_abs_diff(lhs, rhs) < 1e-12);

        // same through the Berezin route, unnormalised measure carries det Gamma^{-1}
        CMat inv = CMat::Zero(Eigen::Index(2 * n), Eigen::Index(2 * n));
        inv.bottomRightCorner(Eigen::Index(n), Eigen::Index(n)) = Gamma.inverse();
        G weight = (-1.0 * G::bilinear(u, inv)).exp_truncated();
        G raw = (src.exp_truncated() * weight).integrate_pairs(W);
        cd z = weight.integrate_pairs(W).constant_term();
        CHECK(std::abs(z - Gamma.inverse().determinant()) < 1e-10 * std::abs(z));
        CHECK(max_abs_diff(raw * (1.0 / z), rhs) < 1e-10);
    }
}

TEST_CASE("truncated exponential and logarithm", "[grassmann]") {
    auto u = universe(2);
    CHECK(G(u).exp_truncated() == G::constant(u, 1.0));
    G pair = G::monomial(u, {u->bar(0), u->psi(0)}, cd(0.7, 0.2));
    CHECK(max_abs_diff(pair.exp_truncated(), G::constant(u, 1.0) + pair) == 0.0);

    std::mt19937_64 rng(13);
    auto u3 = universe(3);
    for (int trial = 0; trial < 30; ++trial) {
        G e = random_element(rng, u3, 8, 4, true);
        // keep the constant inside the principal branch of log
        e -= G::constant(u3, e.constant_term() - cd(0.3, 0.1 * trial / 30.0));
        CHECK(max_abs_diff(e.exp_truncated().log_truncated(), e) < 1e-11);
    }
}

TEST_CASE("serialisation round trip and universe checks", "[grassmann]") {
    std::mt19937_64 rng(2);
    auto u = universe(3);
    G e = random_element(rng, u, 10, 5, false);
    CHECK(G::from_json(e.to_json(), u) == e);
    CHECK_THROWS_AS(G::from_json(e.to_json(), universe(2)), Error);
    CHECK_THROWS_AS(e + G::constant(universe(2), 1.0), Error);
    CHECK_THROWS_AS(G(u).log_truncated(), Error);
}
