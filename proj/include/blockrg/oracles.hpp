#pragma once

// Independent reference computations for verification runs and the test
// suite.  Nothing in the library proper depends on this header.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "blockrg/cluster.hpp"
#include "blockrg/flow.hpp"

namespace blockrg::oracle {

// ---------------------------------------------------------------------------
// gauge averaging by explicit path enumeration

/// Q recomputed by walking every straight L-step path with its own coordinate arithmetic.
inline Mat path_sum_average(const Torus& fine, int L) {
    const int s = fine.side(), sc = s / L;
    auto site = [s](int a, int b, int c) {
        auto w = [s](int v) { return ((v % s) + s) % s; };
        return std::size_t((w(a) * s + w(b)) * s + w(c));
    };
    Mat q = Mat::Zero(3 * Eigen::Index(sc) * sc * sc, Eigen::Index(fine.bonds()));
    const double w = std::pow(double(L), -4);
    for (int y0 = 0; y0 < sc; ++y0)
        for (int y1 = 0; y1 < sc; ++y1)
            for (int y2 = 0; y2 < sc; ++y2)
                for (int mu = 0; mu < 3; ++mu) {
                    Eigen::Index row = 3 * Eigen::Index((y0 * sc + y1) * sc + y2) + mu;
                    for (int a = 0; a < L; ++a)
                        for (int b = 0; b < L; ++b)
                            for (int c = 0; c < L; ++c)
                                for (int step = 0; step < L; ++step) {
                                    int x[3] = {y0 * L + a, y1 * L + b, y2 * L + c};
                                    x[mu] += step;
                                    q(row, Eigen::Index(3 * site(x[0], x[1], x[2]) + std::size_t(mu))) += w;
                                }
                }
    return q;
}

inline Mat path_sum_composite(const Torus& fine, int L, int j) {
    Mat q = Mat::Identity(Eigen::Index(fine.bonds()), Eigen::Index(fine.bonds()));
    Torus cur = fine;
    for (int i = 0; i < j; ++i) {
        q = path_sum_average(cur, L) * q;
        cur = Torus({cur.spec().base_scale, cur.spec().spacing_exp, cur.spec().extent_exp - 1});
    }
    return q;
}

// ---------------------------------------------------------------------------
// constrained Gaussian integrals through the full KKT matrix

struct KKTGaussian {
    double log_integral = 0;  // log int delta(CA - r) exp(-1/2 A^T K A) dA
    double energy = 0;        // minimum of 1/2 A^T K A on the constraint set
};

/// The integral equals (2 pi)^{(n-m)/2} |det KKT|^{-1/2} exp(-energy).
inline KKTGaussian kkt_gaussian(const Mat& K, const Mat& C, const Vec& r) {
    const Eigen::Index n = K.rows(), m = C.rows();
    Mat kkt = Mat::Zero(n + m, n + m);
    kkt.topLeftCorner(n, n) = K;
    kkt.topRightCorner(n, m) = C.transpose();
    kkt.bottomLeftCorner(m, n) = C;
    Eigen::FullPivLU<Mat> lu(kkt);
    if (!lu.isInvertible()) throw Error("singular_kkt", "oracle KKT matrix is singular");
    Vec rhs = Vec::Zero(n + m);
    rhs.tail(m) = r;
    Vec sol = lu.solve(rhs);
    Vec A = sol.head(n);
    double logdet = 0;
    const Mat& LU = lu.matrixLU();
    for (Eigen::Index i = 0; i < n + m; ++i) logdet += std::log(std::abs(LU(i, i)));
    KKTGaussian g;
    g.energy = 0.5 * A.dot(K * A);
    g.log_integral = 0.5 * double(n - m) * std::log(2 * std::numbers::pi) - 0.5 * logdet - g.energy;
    return g;
}

/// Direct route for rho_K(A_K): one Gaussian integral over the fine field with the
/// constraints {Q^j A vanishes on level-j trees, j < K} and Q^K A = L^{-K/2} A_K.
/// The prefactor L^{-K n_K / 2 - sum_{0<k<K} k t_k / 2} collects the Jacobians of the
/// intermediate rescalings.
inline double direct_boson_log_density(const Torus& fine, int L, int K, const Vec& AK) {
    std::vector<Vec> rows;
    Torus cur = fine;
    double log_pref = 0;
    for (int j = 0; j < K; ++j) {
        Mat qj = path_sum_composite(fine, L, j);
        AxialTreeSet trees = build_axial_trees(cur, L);
        for (std::size_t b : trees.bonds) rows.push_back(qj.row(Eigen::Index(b)).transpose());
        if (j > 0) log_pref -= 0.5 * j * double(trees.bonds.size()) * std::log(double(L));
        cur = Torus({cur.spec().base_scale, cur.spec().spacing_exp, cur.spec().extent_exp - 1});
    }
    Mat qK = path_sum_composite(fine, L, K);
    const Eigen::Index nt = Eigen::Index(rows.size()), nK = qK.rows();
    log_pref -= 0.5 * K * double(nK) * std::log(double(L));
    Mat C(nt + nK, Eigen::Index(fine.bonds()));
    for (Eigen::Index i = 0; i < nt; ++i) C.row(i) = rows[std::size_t(i)].transpose();
    C.bottomRows(nK) = qK;
    Vec r = Vec::Zero(nt + nK);
    r.tail(nK) = std::pow(double(L), -0.5 * K) * AK;
    Mat Kf = strength_form(fine);
    return log_pref + kkt_gaussian(Kf, C, r).log_integral;
}

// ---------------------------------------------------------------------------
// fermion determinants

/// Direct route: det(D + mbar) times the Gaussian normalizations c_w and the
/// L^{-2} field rescalings of every coarse level.
inline cd direct_fermion_log(const GaugeField& A, double e, double mbar, double b, int L, int K) {
    CMat M = wilson_dirac(A, e, mbar).with_mass();
    Eigen::PartialPivLU<CMat> lu(M);
    cd s = 0;
    for (Eigen::Index i = 0; i < M.rows(); ++i) s += std::log(lu.matrixLU()(i, i));
    if (lu.permutationP().determinant() < 0) s += cd(0, std::numbers::pi);
    const double cw = b * L * L;
    std::size_t n = 2 * A.torus().sites();
    for (int k = 0; k < K; ++k) {
        n /= std::size_t(L * L * L);
        s += double(n) * std::log(cw / (L * L));
    }
    return s;
}

/// Difference of complex logs reduced to the principal strip.
inline cd log_ratio(cd a, cd b) {
    cd d = a - b;
    double im = std::remainder(d.imag(), 2 * std::numbers::pi);
    return {d.real(), im};
}

/// dD/de and (1/2) d^2D/de^2 at e = 0, assembled from the derivatives of the
/// forward transporters exp(i e A(b)).
inline std::pair<CMat, CMat> dirac_derivatives(const GaugeField& A) {
    const Torus& t = A.torus();
    const auto n = Eigen::Index(t.sites());
    const double eps = t.spacing(), inv = 1.0 / eps;
    std::array<Eigen::Matrix2cd, 3> g;
    g[0] << 0, 1, 1, 0;
    g[1] << 0, cd(0, -1), cd(0, 1), 0;
    g[2] << 1, 0, 0, -1;
    auto kron = [n](const CMat& s, const Eigen::Matrix2cd& spin) {
        CMat out = CMat::Zero(2 * n, 2 * n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) out.block<2, 2>(2 * i, 2 * j) = s(i, j) * spin;
        return out;
    };
    CMat d1 = CMat::Zero(2 * n, 2 * n), d2 = CMat::Zero(2 * n, 2 * n);
    CMat w1 = CMat::Zero(n, n), w2 = CMat::Zero(n, n);
    for (int mu = 0; mu < 3; ++mu) {
        CMat F = CMat::Zero(n, n), F1 = CMat::Zero(n, n), F2 = CMat::Zero(n, n);
        for (std::size_t x = 0; x < t.sites(); ++x) {
            auto xi = Eigen::Index(x), yi = Eigen::Index(t.shift(x, mu));
            cd phase1 = cd(0, eps * A[t.bond(x, mu)]);
            F(xi, yi) += inv;
            F(xi, xi) -= inv;
            F1(xi, yi) += inv * phase1;
            F2(xi, yi) += inv * phase1 * phase1;
        }
        d1 += kron(0.5 * (F1 - F1.adjoint()), g[std::size_t(mu)]);
        d2 += kron(0.5 * (F2 - F2.adjoint()), g[std::size_t(mu)]);
        w1 += F1.adjoint() * F + F.adjoint() * F1;
        w2 += F2.adjoint() * F + 2.0 * F1.adjoint() * F1 + F.adjoint() * F2;
    }
    d1 += kron(0.5 * eps * w1, Eigen::Matrix2cd::Identity());
    d2 += kron(0.5 * eps * w2, Eigen::Matrix2cd::Identity());
    return {d1, 0.5 * d2};
}

/// Second-order coefficient of log det(D_e(A) + mbar): tr(M0^{-1} M2) - 1/2 tr((M0^{-1} M1)^2).
inline cd direct_second_order(const GaugeField& A, double mbar) {
    CMat M0 = wilson_dirac(GaugeField(A.torus()), 0.0, mbar).with_mass();
    auto [M1, M2] = dirac_derivatives(A);
    Eigen::PartialPivLU<CMat> lu(M0);
    CMat X1 = lu.solve(M1), X2 = lu.solve(M2);
    return X2.trace() - 0.5 * (X1 * X1).trace();
}

// ---------------------------------------------------------------------------
// Gaussian quadrature and brute-force fluctuation integrals

struct GaussHermite {
    Vec nodes, weights;  // probabilists' rule, weights sum to 1
};

/// Golub-Welsch: eigen-decomposition of the Jacobi matrix of the He_n recursion.
inline GaussHermite gauss_hermite(int n) {
    Mat J = Mat::Zero(n, n);
    for (int i = 1; i < n; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(double(i));
    Eigen::SelfAdjointEigenSolver<Mat> es(J);
    GaussHermite r{es.eigenvalues(), Vec(n)};
    for (int i = 0; i < n; ++i) r.weights[i] = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
    return r;
}

/// log int exp(sum_X E(X)) dmu_C(Z) dmu_Gamma(W) by tensor-product quadrature
/// over Z = chol(C) u and exact Berezin-Wick integration over W.
inline GrassmannPoly brute_force_log_xi(const std::map<Polymer, MixedPoly>& acts, const Mat& C, const CMat& Gamma,
                                        const std::vector<std::size_t>& fluct_pairs,
                                        std::shared_ptr<const GrassmannUniverse> u, int nodes = 24) {
    const auto nb = C.rows();
    MixedPoly total(u, std::size_t(nb));
    for (const auto& [X, p] : acts) total += p;
    GaussHermite gh = gauss_hermite(nodes);
    Mat chol = nb ? Mat(C.llt().matrixL()) : Mat(0, 0);
    GrassmannPoly acc(u);
    std::vector<int> idx(std::size_t(nb), 0);
    while (true) {
        Vec uvec(nb);
        double w = 1;
        for (Eigen::Index i = 0; i < nb; ++i) {
            uvec[i] = gh.nodes[idx[std::size_t(i)]];
            w *= gh.weights[idx[std::size_t(i)]];
        }
        Vec z = nb ? Vec(chol * uvec) : Vec(0);
        GrassmannPoly ex = total.evaluate(z).exp_truncated();
        if (!fluct_pairs.empty()) ex = ex.gaussian_integrate(Gamma, fluct_pairs);
        acc += ex * cd(w);
        Eigen::Index i = 0;
        for (; i < nb; ++i) {
            if (++idx[std::size_t(i)] < nodes) break;
            idx[std::size_t(i)] = 0;
        }
        if (i == nb) break;
    }
    return acc.log_truncated();
}

/// log int exp(1/2 z^T A z + b^T z + c) dmu_C(z).
inline double gaussian_closed_form(const Mat& C, const Mat& A, const Vec& b, double c) {
    const auto n = C.rows();
    Mat I = Mat::Identity(n, n);
    Mat S = C.inverse() - A;
    Eigen::LLT<Mat> llt(S);
    return c + 0.5 * b.dot(llt.solve(b)) - 0.5 * std::log((I - C * A).determinant());
}

// ---------------------------------------------------------------------------
// determinant by expansion

/// Leibniz-free reference determinant via Gaussian elimination in long double.
inline std::complex<long double> reference_determinant(const CMat& M) {
    const auto n = M.rows();
    std::vector<std::complex<long double>> a(std::size_t(n * n));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) a[std::size_t(i * n + j)] = M(i, j);
    std::complex<long double> det = 1;
    for (Eigen::Index c = 0; c < n; ++c) {
        Eigen::Index p = c;
        for (Eigen::Index r = c + 1; r < n; ++r)
            if (std::abs(a[std::size_t(r * n + c)]) > std::abs(a[std::size_t(p * n + c)])) p = r;
        if (a[std::size_t(p * n + c)] == std::complex<long double>(0)) return 0;
        if (p != c) {
            for (Eigen::Index j = 0; j < n; ++j) std::swap(a[std::size_t(p * n + j)], a[std::size_t(c * n + j)]);
            det = -det;
        }
        auto piv = a[std::size_t(c * n + c)];
        det *= piv;
        for (Eigen::Index r = c + 1; r < n; ++r) {
            auto f = a[std::size_t(r * n + c)] / piv;
            for (Eigen::Index j = c; j < n; ++j) a[std::size_t(r * n + j)] -= f * a[std::size_t(c * n + j)];
        }
    }
    return det;
}

// ---------------------------------------------------------------------------
// flow

/// Linear response (no dependence on eps, m): E_k follows its own affine recursion
/// from E_0 = 0, and the final conditions fix eps_0 = -sum_k L^{-3k} eps*_k,
/// m_0 = -sum_k L^{-k} m*_k.
inline std::pair<double, double> linear_flow_closed_form(const ResponseModel& r, const FlowParams& fp) {
    double E = 0, eps0 = 0, m0 = 0;
    for (int k = 0; k < fp.K; ++k) {
        double ek = fp.e * std::pow(double(fp.L), -0.5 * double(fp.N - k));
        double src = ek * std::pow(-std::log(ek), r.p_exp);
        double es = r.c_eps_E * E + r.c_eps_0 * src;
        double ms = r.c_m_E * E + r.c_m_0 * src;
        eps0 -= std::pow(double(fp.L), -3.0 * k) * es;
        m0 -= std::pow(double(fp.L), -double(k)) * ms;
        E = r.rho * E + r.c_E * src;
    }
    return {eps0, m0};
}

}  // namespace blockrg::oracle
