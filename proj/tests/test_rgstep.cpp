#include <catch_amalgamated.hpp>

#include <random>

#include "blockrg/rgstep.hpp"

using namespace blockrg;
using cd = std::complex<double>;

namespace {

GaugeField random_field(const Torus& t, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> g(0.0, scale);
    Vec v(Eigen::Index(t.bonds()));
    for (auto& x : v) x = g(rng);
    return GaugeField(t, v);
}

// exp(a - b) close to 1 compares logarithms modulo 2 pi i
bool same_log(cd a, cd b, double tol) { return std::abs(std::exp(a - b) - 1.0) < tol; }

}  // namespace

TEST_CASE("parameter rescaling", "[rgstep]") {
    DensityParams p{3, 0.2, 0.4, 0.01, 0.05, 1.0};
    DensityParams q = rescale_params(p, 2, 0.001, -0.002);
    CHECK(q.k == 4);
    CHECK(q.e == Catch::Approx(0.2 * std::sqrt(2.0)).epsilon(1e-15));
    CHECK(q.mbar == Catch::Approx(0.8));
    CHECK(q.m == Catch::Approx(2 * 0.011));
    CHECK(q.energy == Catch::Approx(8 * 0.048));
    CHECK(q.b == p.b);
    DensityParams r = rescale_params(p, 3);
    CHECK(r.energy == Catch::Approx(27 * 0.05));
}

TEST_CASE("Gaussian step is the constrained minimum", "[rgstep][property]") {
    Torus t({2, 0, 2});
    const int L = 2;
    Mat K = strength_form(t);
    GaussianStep s = gaussian_step(t, L, K);
    ConstrainedMinimizer m = axial_minimizer(t, L, K);
    std::mt19937_64 rng(17);
    Torus coarse = Blocking(t, L).coarse();
    for (int trial = 0; trial < 20; ++trial) {
        Vec B = random_field(coarse, rng, 1.0).values();
        Vec A = s.H * B;
        CHECK((m.averaging * A - B).cwiseAbs().maxCoeff() < 1e-12);
        // stationarity along every fluctuation direction
        Vec g = s.fluct.basis.transpose() * (K * A);
        CHECK(g.cwiseAbs().maxCoeff() < 1e-10);
        CHECK(0.5 * B.dot(s.coarse_form * B) == Catch::Approx(0.5 * A.dot(K * A)).epsilon(1e-12));
        // fluctuation directions lie in the kernel of the averaging
        CHECK((m.averaging * s.fluct.basis).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK(s.fluct.min_eigenvalue > 0);
    CHECK(std::isfinite(s.log_z()));
}

TEST_CASE("bosonic chain stays gauge invariant", "[rgstep]") {
    Torus t({2, 0, 2});
    BosonChain c = bosonic_chain(t, 2, 2);
    REQUIRE(c.steps.size() == 2);
    CHECK(c.final_torus.sites() == 1);
    CHECK(c.form.rows() == Eigen::Index(c.final_torus.bonds()));
    Eigen::SelfAdjointEigenSolver<Mat> es(c.form);
    CHECK(es.eigenvalues().minCoeff() > -1e-10);

    BosonChain one = bosonic_chain(t, 2, 1);
    Torus mid = unit_coarse(t);
    std::mt19937_64 rng(5);
    Vec w(Eigen::Index(mid.sites()));
    for (auto& x : w) x = std::normal_distribution<double>()(rng);
    CHECK((one.form * gradient(mid, w).values()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((one.form - one.steps[0].coarse_form / 2.0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fermion chain level is a Schur complement", "[rgstep][property]") {
    // oracle: determinant of the joint quadratic form in (psi, Psi)
    Torus t({2, 0, 1});
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        GaugeField A = random_field(t, rng, 0.4);
        const double e = 0.3, mbar = 0.5, b = 1.0;
        FermionChain ch = fermion_chain(A, e, mbar, b, 2, 1);
        REQUIRE(ch.levels.size() == 1);
        const auto& lev = ch.levels[0];
        CMat Q = fermion_average(A, e, 2).Q;
        FermionMatrix Kf = wilson_dirac(A, e, mbar).with_mass();
        const Eigen::Index nf = Kf.rows(), nc = Q.rows();
        const double cw = lev.c_w;
        CHECK(cw == Catch::Approx(b * 4.0));
        CMat big(nf + nc, nf + nc);
        big << Kf + cw * Q.adjoint() * Q, -cw * Q.adjoint(), -cw * Q, cw * CMat::Identity(nc, nc);
        cd oracle = std::log(big.determinant());
        CHECK(same_log(log_det(lev.a11) + log_det(lev.coarse_kernel), oracle, 1e-10));
        CHECK((ch.final_kernel - lev.coarse_kernel / 4.0).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("relative log determinant and zero-momentum weight", "[rgstep]") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    CMat M0(4, 4);
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 4; ++j) M0(i, j) = cd(g(rng), g(rng));
    CHECK(std::abs(relative_log_det(M0, M0)) < 1e-12);
    CVec d(4);
    d << cd(2, 0), cd(0.5, 0.1), cd(1, -1), cd(3, 0);
    cd expect = 0;
    for (auto z : d) expect += std::log(z);
    CHECK(std::abs(relative_log_det(M0, M0 * d.asDiagonal()) - expect) < 1e-12);

    const Eigen::Index n = 8;
    CHECK(zero_momentum_weight(CMat::Identity(n, n)) == Catch::Approx(1.0));
    CHECK(zero_momentum_weight(CMat::Ones(n, n)) == Catch::Approx(double(n) / kSpinDim));
}

TEST_CASE("phase groups reconstruct the interaction exactly", "[rgstep][property]") {
    Torus t({2, 0, 1});
    const int L = 2;
    CubeGrid grid(t, 0);
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 6; ++trial) {
        const double e = 0.2 + 0.1 * trial, mbar = 0.5, b = 1.0;
        GaugeField A = random_field(t, rng, 0.3);
        GaugeField Z = random_field(t, rng, 0.5);
        auto groups = phase_groups(A, e, b, L, grid);
        CMat base = gamma_inv_matrix(A, e, mbar, b, L);
        CMat shifted = gamma_inv_matrix(A + Z, e, mbar, b, L);
        CMat V = phase_interaction(groups, Z.values(), e, base.rows());
        CHECK((shifted - base - V).cwiseAbs().maxCoeff() < 1e-13);
    }
}

TEST_CASE("free fluctuation integral vanishes", "[rgstep]") {
    Torus t({2, 0, 1});
    const int L = 2;
    CubeGrid grid(t, 0);
    GaugeField A(t);
    auto groups = phase_groups(A, 0.0, 1.0, L, grid);
    FluctCovariance fc = fluct_covariance(t, L);
    FermionFluctOp op = fermion_fluct(A, 0.0, 0.5, 1.0, L);
    FluctuationIntegral fi = fluctuation_integral(groups, fc.ambient(), op.gamma, 0.0);
    CHECK(std::abs(fi.vacuum_total) == 0.0);
    for (const auto& [X, K] : fi.bilinear) CHECK(K.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("universe size gate", "[rgstep]") {
    CHECK(universe_fits(Torus({2, 0, 1})));
    CHECK_FALSE(universe_fits(Torus({2, 0, 2})));
    CHECK(fermion_universe(Torus({2, 0, 1}))->size() == 2 * kSpinDim * 8);
}

TEST_CASE("relevant shifts average over cubes", "[rgstep]") {
    CubeGrid grid(Torus({2, 0, 1}), 0);
    RelevantParts rel{{}, {}, PolymerFunction(grid, fermion_universe(Torus({2, 0, 1}))), 0.0};
    rel.mass[Polymer({0})] = 0.8;
    rel.energy[Polymer({0, 1})] = 0.4;
    auto [m, eps] = relevant_shifts(rel, grid);
    const double n = double(grid.cube_count());
    CHECK(m == Catch::Approx(0.8 / n));
    CHECK(eps == Catch::Approx(0.8 / n));
}

TEST_CASE("one full step on the smallest lattice", "[rgstep]") {
    Torus t({2, 0, 1});
    DensityParams p{0, 0.5, 0.5, 1e-3, 2e-3, 1.0};
    EffectiveDensity rho = initial_density(t, p);
    std::mt19937_64 rng(41);
    GaugeField A1 = random_field(Blocking(t, 2).coarse(), rng, 0.2);
    StepResult st = rg_transform(rho, A1, {2, 0, 2, 7});
    REQUIRE(st.small_field);
    const auto& rep = st.report;
    CHECK(rep.at("branch") == "small_field");
    for (const char* key : {"gauge", "threshold", "splits", "normalizations", "det_expansion", "fluctuation", "next"})
        CHECK(rep.contains(key));
    CHECK(rep["gauge"]["constraint_residual_axial"].get<double>() < 1e-12);
    CHECK(rep["gauge"]["gauge_witness_residual"].get<double>() < 1e-10);
    CHECK(rep["splits"]["gauge_split_residual"].get<double>() < 1e-10);
    CHECK(rep["splits"]["critical_point_gradient"].get<double>() < 1e-10);
    CHECK(rep["det_expansion"]["resummation_error"].get<double>() < 1e-10);

    CHECK(st.next.torus.sites() == 1);
    REQUIRE(st.next.E.has_value());
    DensityParams expect = rescale_params(p, 2, st.m_star, st.energy_star);
    CHECK(st.next.params.e == expect.e);
    CHECK(st.next.params.m == expect.m);
    CHECK(st.next.params.energy == expect.energy);

    // same seed, same report
    StepResult again = rg_transform(rho, A1, {2, 0, 2, 7});
    CHECK(again.report.dump() == rep.dump());
}

TEST_CASE("large background takes the large-field branch", "[rgstep]") {
    // a single coarse site carries only flat fields, so use a 4^3 lattice
    Torus t({2, 0, 2});
    DensityParams p{0, 0.5, 0.5, 0, 0, 1.0};
    EffectiveDensity rho = initial_density(t, p);
    std::mt19937_64 rng(2);
    GaugeField A1 = random_field(Blocking(t, 2).coarse(), rng, 50.0);
    StepResult st = rg_transform(rho, A1, {2, 0, 2, 1});
    CHECK_FALSE(st.small_field);
    REQUIRE(st.large_field.has_value());
    CHECK(st.report.at("branch") == "large_field");
    CHECK(st.next.params.k == p.k);
    CHECK(st.report.at("large_cubes").get<long>() > 0);
}
