#include <catch_amalgamated.hpp>

#include <numeric>
#include <random>

#include "blockrg/averaging.hpp"
#include "blockrg/minimizers.hpp"
#include "blockrg/oracles.hpp"

using namespace blockrg;

namespace {

GaugeField random_field(const Torus& t, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Vec v(Eigen::Index(t.bonds()));
    for (auto& x : v) x = g(rng);
    return GaugeField(t, v);
}

Vec random_vec(Eigen::Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Vec v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

CVec random_cvec(Eigen::Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    CVec v(n);
    for (auto& x : v) x = {g(rng), g(rng)};
    return v;
}

double max_abs(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }
double max_abs(const CMat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

TEST_CASE("fermion averaging at A = 0", "[averaging]") {
    Torus t({2, 0, 2});
    AveragingOp q = fermion_average(GaugeField(t), 0.7, 2);
    CVec ones = CVec::Constant(q.Q.cols(), cd(1.3, -0.2));
    CHECK(max_abs(CMat(q.Q * ones - CVec::Constant(q.Q.rows(), cd(1.3, -0.2)))) < 1e-15);
    for (Eigen::Index r = 0; r < q.Q.rows(); ++r) CHECK(std::abs(q.Q.row(r).sum() - cd(1)) < 1e-15);
    CMat QQt = q.Q * q.Q.transpose();
    CHECK(max_abs(CMat(QQt - CMat::Identity(QQt.rows(), QQt.cols()) / 8.0)) < 1e-15);
}

TEST_CASE("fermion averaging is gauge covariant", "[averaging][property]") {
    std::mt19937_64 rng(1);
    for (TorusSpec spec : {TorusSpec{2, 0, 2}, TorusSpec{2, 1, 1}, TorusSpec{3, 0, 1}}) {
        Torus t(spec);
        const int L = spec.base_scale;
        for (int trial = 0; trial < 5; ++trial) {
            GaugeField A = random_field(t, rng);
            Vec w = random_vec(Eigen::Index(t.sites()), rng);
            const double e = 0.9;
            AveragingOp q = fermion_average(A, e, L), qw = fermion_average(gauge_transform(A, w), e, L);
            Vec wc(Eigen::Index(q.blocking.coarse().sites()));
            for (std::size_t y = 0; y < q.blocking.coarse().sites(); ++y)
                wc[Eigen::Index(y)] = w[Eigen::Index(q.blocking.center(y))];
            CMat lhs = qw.Q * site_phase(w, e);
            CMat rhs = site_phase(wc, e) * q.Q;
            CHECK(max_abs(CMat(lhs - rhs)) < 1e-12);
        }
    }
}

TEST_CASE("gauge averaging", "[averaging]") {
    std::mt19937_64 rng(2);
    Torus t({2, 0, 2});
    Blocking B(t, 2);
    Mat Q = gauge_average(B);
    CHECK(max_abs(Mat(Q - oracle::path_sum_average(t, 2))) < 1e-15);
    Torus t3({3, 0, 1});
    CHECK(max_abs(Mat(gauge_average(Blocking(t3, 3)) - oracle::path_sum_average(t3, 3))) < 1e-15);

    for (int mu = 0; mu < 3; ++mu) {
        GaugeField A(t);
        for (std::size_t x = 0; x < t.sites(); ++x) A[t.bond(x, mu)] = 2.5;
        GaugeField QA = gauge_average(A, 2);
        for (std::size_t y = 0; y < QA.torus().sites(); ++y)
            for (int nu = 0; nu < 3; ++nu)
                CHECK(QA[QA.torus().bond(y, nu)] == Catch::Approx(nu == mu ? 2.5 : 0.0).margin(1e-15));
    }
    for (int trial = 0; trial < 5; ++trial) {
        GaugeField pure = gradient(t, random_vec(Eigen::Index(t.sites()), rng));
        CHECK(max_abs(Mat(field_strength(gauge_average(pure, 2)).values)) < 1e-12);
    }
}

TEST_CASE("axial trees", "[averaging]") {
    std::mt19937_64 rng(3);
    Torus t({2, 0, 2});
    AxialTreeSet trees = build_axial_trees(t, 2);
    const std::size_t blocks = trees.blocking.coarse().sites();
    CHECK(trees.edges.size() == 7 * blocks);
    // union-find per block: the tree edges connect the block without cycles
    std::vector<std::size_t> parent(t.sites());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        return parent[x] == x ? x : parent[x] = find(parent[x]);
    };
    for (const auto& e : trees.edges) {
        CHECK(trees.blocking.block_of(e.parent) == trees.blocking.block_of(e.child));
        std::size_t a = find(e.parent), b = find(e.child);
        CHECK(a != b);
        parent[a] = b;
    }
    for (std::size_t y = 0; y < blocks; ++y) {
        auto sites = trees.blocking.sites_in_block(y);
        for (auto x : sites) CHECK(find(x) == find(sites.front()));
    }
    // each in-block non-tree bond closes exactly one cycle: its endpoints are already joined
    for (std::size_t x = 0; x < t.sites(); ++x)
        for (int mu = 0; mu < 3; ++mu) {
            std::size_t xn = t.shift(x, mu);
            if (trees.blocking.block_of(x) != trees.blocking.block_of(xn) || trees.contains(t.bond(x, mu))) continue;
            CHECK(find(x) == find(xn));
        }
    for (int trial = 0; trial < 10; ++trial) {
        GaugeField A = random_field(t, rng);
        GaugeField Ax = gauge_transform(A, axial_gauge_witness(A, trees));
        for (std::size_t b : trees.bonds) CHECK(std::abs(Ax[b]) < 1e-12);
    }
}

TEST_CASE("hierarchical constraints have full rank", "[averaging]") {
    Torus t({2, 0, 2});
    auto k0 = hierarchical_projector(t, 2, 0);
    CHECK(k0.per_level == std::vector<std::size_t>{build_axial_trees(t, 2).bonds.size()});
    CHECK(k0.rank == k0.count());
    auto k1 = hierarchical_projector(t, 2, 1);
    REQUIRE(k1.per_level.size() == 2);
    CHECK(k1.per_level[1] == 7);
    CHECK(k1.rank == k1.count());
    // remaining dimension after the unit-scale axial gauge and Q Z = 0
    FluctCovariance fc = fluct_covariance(t, 2);
    const auto coarse_bonds = Eigen::Index(3 * 8);
    CHECK(fc.dim() == Eigen::Index(t.bonds()) - k0.count() - coarse_bonds);
    CHECK(fc.min_eigenvalue > 0);
}

TEST_CASE("axial and Landau minimizers", "[minimizers]") {
    std::mt19937_64 rng(4);
    Torus t({2, 0, 2});
    ConstrainedMinimizer ax = axial_minimizer(t, 2), la = landau_minimizer(t, 2);
    CHECK(ax.constraint_residual() <= 1e-12);
    CHECK(la.constraint_residual() <= 1e-12);
    GaugeField zero(ax.coarse);
    CHECK(ax.apply(zero).values().isZero());
    CHECK(la.apply(zero).values().isZero());

    FluctCovariance fc = fluct_covariance(t, 2);
    for (int trial = 0; trial < 100; ++trial) {
        GaugeField A1 = random_field(ax.coarse, rng);
        GaugeField Ax = ax.apply(A1), A0 = la.apply(A1);
        for (std::size_t b : ax.tree_bonds) CHECK(Ax[b] == 0.0);
        CHECK(max_abs(Mat(field_strength(Ax).values - field_strength(A0).values)) < 1e-10);
        CHECK(gauge_witness(A0, Ax).residual < 1e-10);
        GaugeField Z(t, fc.basis * random_vec(fc.dim(), rng));
        double lhs = strength_norm_sq(Ax + Z), rhs = strength_norm_sq(Ax) + strength_norm_sq(Z);
        CHECK(std::abs(lhs - rhs) <= 1e-10 * (1 + lhs));
        // Wilson loop around a random closed staircase
        std::size_t x = std::size_t(trial) % t.sites(), y = (7 * std::size_t(trial) + 3) % t.sites();
        auto loop = [&](const GaugeField& F) {
            return line_integral(F, t.staircase_path(x, y)) - line_integral(F, t.staircase_path(x, y, Winding::direct));
        };
        CHECK(loop(Ax) == Catch::Approx(loop(A0)).margin(1e-10));
    }
}

TEST_CASE("iterated minimizer inverts the composite averaging", "[minimizers]") {
    Torus t({2, 0, 2});
    for (int k = 1; k <= 2; ++k) {
        Mat H = iterated_minimizer(t, 2, k);
        Mat Qk = composite_average(t, 2, k);
        CHECK(max_abs(Mat(Qk * H - Mat::Identity(H.cols(), H.cols()))) < 1e-12);
        CHECK(max_abs(Mat(oracle::path_sum_composite(t, 2, k) - Qk)) < 1e-14);
    }
}

TEST_CASE("fluctuation covariance on a three-dimensional slice", "[minimizers]") {
    // oracle: trapezoid quadrature of the restricted Gaussian on span(e_0, e_1, e_2)
    Torus t({2, 0, 1});
    FluctCovariance fc = fluct_covariance(t, 2);
    REQUIRE(fc.dim() >= 3);
    CHECK(fc.min_eigenvalue > 0);
    CHECK(max_abs(Mat(fc.C * fc.form - Mat::Identity(fc.dim(), fc.dim()))) < 1e-10);
    Mat G3 = fc.form.topLeftCorner(3, 3);
    Eigen::SelfAdjointEigenSolver<Mat> es(G3);
    const double R = 9.0 / std::sqrt(es.eigenvalues()(0));
    const int n = 120;
    const double h = 2 * R / n;
    double z = 0;
    Mat second = Mat::Zero(3, 3);
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j)
            for (int k = 0; k <= n; ++k) {
                Eigen::Vector3d s(-R + h * i, -R + h * j, -R + h * k);
                double w = std::exp(-0.5 * s.dot(G3 * s));
                z += w;
                second += w * s * s.transpose();
            }
    z *= h * h * h;
    second *= h * h * h;
    const double formula = std::pow(2 * std::numbers::pi, 1.5) / std::sqrt(G3.determinant());
    CHECK(z == Catch::Approx(formula).epsilon(1e-10));
    CHECK(max_abs(Mat(second / z - G3.inverse())) < 1e-10);
    // the same formula gives the full normalization
    CHECK(fc.log_z() == Catch::Approx(0.5 * double(fc.dim()) * std::log(2 * std::numbers::pi) -
                                      0.5 * std::log(fc.form.determinant())));
}

TEST_CASE("fermion fluctuation operator", "[minimizers]") {
    std::mt19937_64 rng(5);
    Torus t({2, 0, 1});
    const double b = 1.0, mbar = 0.3;
    GaugeField A = random_field(t, rng);

    FermionFluctOp free0 = fermion_fluct(GaugeField(t), 0.0, mbar, b, 2);
    CHECK(max_abs(CMat(fermion_fluct(A, 0.0, mbar, b, 2).gamma - free0.gamma)) == 0.0);

    const double e = 0.7;
    FermionFluctOp op = fermion_fluct(A, e, mbar, b, 2);
    CHECK(max_abs(CMat(op.gamma * op.gamma_inv - CMat::Identity(op.gamma.rows(), op.gamma.cols()))) < 1e-12);
    CHECK(max_abs(CMat(gamma_inv_matrix(A, e, mbar, b, 2) - op.gamma_inv)) < 1e-14);

    // oracle: gradient of the quadratic form in psibar by exact finite differences (it is linear in psibar)
    FermionMatrix Dm = wilson_dirac(A, e, mbar).with_mass();
    CVec Psi1 = random_cvec(op.average.Q.rows(), rng), Psibar1 = random_cvec(op.average.Q.rows(), rng);
    CVec psi = random_cvec(op.gamma.rows(), rng), psibar = random_cvec(op.gamma.rows(), rng);
    CVec fd(psi.size());
    for (Eigen::Index i = 0; i < psi.size(); ++i) {
        CVec shifted = psibar;
        shifted[i] += 1.0;
        fd[i] = fermion_quadratic_form(op, Dm, 1.0, Psibar1, Psi1, shifted, psi) -
                fermion_quadratic_form(op, Dm, 1.0, Psibar1, Psi1, psibar, psi);
    }
    CHECK(max_abs(CMat(fd - fermion_form_gradient(op, Psi1, psi))) < 1e-10);
    CHECK(max_abs(CMat(fermion_form_gradient(op, Psi1, op.crit * Psi1))) < 1e-10);
}

TEST_CASE("fermion normalizer", "[minimizers][property]") {
    std::mt19937_64 rng(6);
    Torus t({2, 0, 1});
    const double b = 1.0, mbar = 0.4, e = 0.8;
    cd free_log = fermion_normalizer_log(fermion_fluct(GaugeField(t), 0.0, mbar, b, 2));
    for (int trial = 0; trial < 5; ++trial) {
        GaugeField A = random_field(t, rng);
        CHECK(std::abs(fermion_normalizer_log(fermion_fluct(A, 0.0, mbar, b, 2)) - free_log) < 1e-12);
        FermionFluctOp op = fermion_fluct(A, e, mbar, b, 2);
        Vec w = random_vec(Eigen::Index(t.sites()), rng);
        cd z1 = std::exp(fermion_normalizer_log(op));
        cd z2 = std::exp(fermion_normalizer_log(fermion_fluct(gauge_transform(A, w), e, mbar, b, 2)));
        CHECK(std::abs(z1 - z2) <= 1e-10 * std::abs(z1));
        cd berezin = berezin_gaussian(op.gamma_inv);
        CHECK(std::abs(berezin - z1) <= 1e-10 * std::abs(z1));
    }
}

TEST_CASE("effective mass of the free fluctuation operator", "[minimizers]") {
    Torus t({2, 0, 2});
    const double b = 1.0;
    FermionFluctOp op = fermion_fluct(GaugeField(t), 0.0, 0.0, b, 2);
    CHECK(op.smallest_singular_value >= 0.5 * b / 2);
}
