#pragma once

// Wilson lattice Dirac operator with U(1) covariant differences.
//
// Conventions: spinor index d_s = 2 with gamma_mu the Pauli matrices; the
// forward hop x -> x + eps e_mu carries exp(+i eps e A(x, x + eps e_mu));
// fermion vectors are indexed 2*site + spin.

#include <array>
#include <complex>
#include <fstream>
#include <string>

#include <Eigen/Dense>

#include "blockrg/fields.hpp"

namespace blockrg {

using cd = std::complex<double>;
using FermionMatrix = CMat;

inline const std::array<Eigen::Matrix2cd, 3>& gamma_matrices() {
    static const std::array<Eigen::Matrix2cd, 3> g = [] {
        std::array<Eigen::Matrix2cd, 3> m;
        m[0] << 0, 1, 1, 0;
        m[1] << 0, cd(0, -1), cd(0, 1), 0;
        m[2] << 1, 0, 0, -1;
        return m;
    }();
    return g;
}

/// Kronecker product of a site matrix with a 2x2 spin matrix.
inline CMat spin_kron(const CMat& site_matrix, const Eigen::Matrix2cd& spin) {
    const Eigen::Index n = site_matrix.rows(), m = site_matrix.cols();
    CMat out = CMat::Zero(2 * n, 2 * m);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            if (site_matrix(i, j) != cd(0)) out.block<2, 2>(2 * i, 2 * j) = site_matrix(i, j) * spin;
    return out;
}

inline CMat spin_identity(const CMat& site_matrix) { return spin_kron(site_matrix, Eigen::Matrix2cd::Identity()); }

/// Parallel transporter exp(i eps e A(b)) on a forward bond.
inline cd link_phase(const GaugeField& A, double e, std::size_t b) {
    return std::exp(cd(0, A.torus().spacing() * e * A[b]));
}

/// Scalar (site-space) matrix of (d_mu psi)(x) = eps^{-1}(U(x,mu) psi(x+mu) - psi(x)).
inline CMat forward_difference_sites(const GaugeField& A, double e, int mu) {
    const Torus& t = A.torus();
    const double inv = 1.0 / t.spacing();
    const auto n = Eigen::Index(t.sites());
    CMat d = CMat::Zero(n, n);
    for (std::size_t x = 0; x < t.sites(); ++x) {
        d(Eigen::Index(x), Eigen::Index(t.shift(x, mu))) += inv * link_phase(A, e, t.bond(x, mu));
        d(Eigen::Index(x), Eigen::Index(x)) -= inv;
    }
    return d;
}

/// Covariant forward derivative acting on spinors.
inline FermionMatrix covariant_forward_derivative(const GaugeField& A, double e, int mu) {
    return spin_identity(forward_difference_sites(A, e, mu));
}

struct DiracOperator {
    FermionMatrix matrix;  // the Wilson operator without mass
    double e = 0, eps = 1, mbar = 0;

    /// D + mbar (+ extra mass) on the diagonal.
    FermionMatrix with_mass(double extra = 0.0) const {
        FermionMatrix m = matrix;
        m.diagonal().array() += mbar + extra;
        return m;
    }
};

/// D = sum_mu gamma_mu nabla_mu - (eps/2) Delta with nabla = (d - d^dag)/2 and
/// Delta = -sum_mu d^dag d.
inline DiracOperator wilson_dirac(const GaugeField& A, double e, double mbar) {
    const Torus& t = A.torus();
    const double eps = t.spacing();
    const auto n = Eigen::Index(t.sites());
    const auto& g = gamma_matrices();
    FermionMatrix D = FermionMatrix::Zero(2 * n, 2 * n);
    CMat wilson = CMat::Zero(n, n);
    for (int mu = 0; mu < 3; ++mu) {
        CMat fwd = forward_difference_sites(A, e, mu);
        CMat sym = 0.5 * (fwd - fwd.adjoint());
        D += spin_kron(sym, g[mu]);
        wilson += fwd.adjoint() * fwd;
    }
    D += spin_identity(0.5 * eps * wilson);
    return {std::move(D), e, eps, mbar};
}

/// Site phase matrix U(omega) = diag(exp(-i e omega(x))) so that
/// D(A + d omega) = U D(A) U^{-1}.
inline FermionMatrix site_phase(const Vec& omega, double e) {
    CVec d(2 * omega.size());
    for (Eigen::Index x = 0; x < omega.size(); ++x) {
        cd ph = std::exp(cd(0, -e * omega[x]));
        d[2 * x] = ph;
        d[2 * x + 1] = ph;
    }
    return d.asDiagonal();
}

struct InteractionSplit {
    DiracOperator reference;
    FermionMatrix V;   // D(A + Z) - D(A)
    double max_entry;  // max |V_ij|
    double max_Z;
};

inline InteractionSplit interaction_split(const GaugeField& A_ref, const GaugeField& Z, double e) {
    DiracOperator ref = wilson_dirac(A_ref, e, 0.0);
    FermionMatrix V = wilson_dirac(A_ref + Z, e, 0.0).matrix - ref.matrix;
    double mx = V.size() ? V.cwiseAbs().maxCoeff() : 0.0;
    double mz = Z.values().size() ? Z.values().cwiseAbs().maxCoeff() : 0.0;
    return {std::move(ref), std::move(V), mx, mz};
}

/// Matrix K with <psibar, (D + mbar) psi> + m <psibar, psi> = sum_x eps^3 psibar K psi
/// expressed per generator (K already includes the eps^3 weight).
inline FermionMatrix fermion_action_kernel(const GaugeField& A, double e, double mbar, double m) {
    double w = std::pow(A.torus().spacing(), 3);
    return w * wilson_dirac(A, e, mbar).with_mass(m);
}

inline void write_triplets_csv(const FermionMatrix& M, const std::string& path, double tol = 0.0) {
    std::ofstream out(path);
    out << "row,col,re,im\n";
    out.precision(17);
    for (Eigen::Index i = 0; i < M.rows(); ++i)
        for (Eigen::Index j = 0; j < M.cols(); ++j)
            if (std::abs(M(i, j)) > tol) out << i << ',' << j << ',' << M(i, j).real() << ',' << M(i, j).imag() << '\n';
}

}  // namespace blockrg
