#pragma once

// Constrained minimizers of the free gauge action, the fluctuation covariance
// on the gauge-fixed hyperplane, and the fermion critical-point operators.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "blockrg/averaging.hpp"

namespace blockrg {

/// Decomposition of a full-row-rank constraint matrix C (m x n):
/// right inverse C+ = C^T (C C^T)^{-1} and an orthonormal basis of ker C.
struct ConstraintSplit {
    Mat right_inverse;  // n x m
    Mat null_basis;     // n x (n - m)
    double log_jacobian = 0;  // log |det R| = log det(C C^T)^{1/2}
    Eigen::Index rank = 0;
};

inline ConstraintSplit split_constraints(const Mat& C) {
    const Eigen::Index m = C.rows(), n = C.cols();
    ConstraintSplit s;
    if (m == 0) {
        s.right_inverse = Mat::Zero(n, 0);
        s.null_basis = Mat::Identity(n, n);
        return s;
    }
    Eigen::ColPivHouseholderQR<Mat> qr(C.transpose());
    s.rank = qr.rank();
    if (s.rank < m)
        throw Error("singular_kkt", "constraint matrix has rank " + std::to_string(s.rank) + " of " +
                                        std::to_string(m) + " rows");
    Mat Qfull = qr.householderQ();
    Mat R = qr.matrixR().topLeftCorner(m, m).template triangularView<Eigen::Upper>();
    Mat P = qr.colsPermutation().toDenseMatrix().template cast<double>();
    // C^T P = Q1 R  =>  C = P R^T Q1^T  =>  C+ = Q1 R^{-T} P^T
    Mat rt_inv_pt = R.transpose().triangularView<Eigen::Lower>().solve(Mat(P.transpose()));
    s.right_inverse = Qfull.leftCols(m) * rt_inv_pt;
    s.null_basis = Qfull.rightCols(n - m);
    for (Eigen::Index i = 0; i < m; ++i) s.log_jacobian += std::log(std::abs(R(i, i)));
    return s;
}

/// Moore-Penrose inverse of a symmetric PSD matrix, with relative cutoff.
inline Mat symmetric_pinv(const Mat& G, double rel_tol = 1e-10) {
    Eigen::SelfAdjointEigenSolver<Mat> es(G);
    const Vec& ev = es.eigenvalues();
    double cut = rel_tol * std::max(1.0, ev.cwiseAbs().maxCoeff());
    Vec inv = ev.unaryExpr([cut](double v) { return std::abs(v) > cut ? 1.0 / v : 0.0; });
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

struct ConstrainedMinimizer {
    Torus fine, coarse;
    Mat H;             // fine bonds x coarse bonds
    Mat averaging;     // the gauge averaging used as constraint
    bool axial = true;
    std::vector<std::size_t> tree_bonds;  // forced to zero when axial

    GaugeField apply(const GaugeField& A1) const { return GaugeField(fine, H * A1.values()); }
    /// Operator norm of QH - I.
    double constraint_residual() const {
        Mat R = averaging * H - Mat::Identity(H.cols(), H.cols());
        return R.size() ? Eigen::JacobiSVD<Mat>(R).singularValues()(0) : 0.0;
    }
};

namespace detail {

inline std::vector<std::size_t> complement(std::size_t n, const std::vector<std::size_t>& sorted) {
    std::vector<std::size_t> out;
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (j < sorted.size() && sorted[j] == i) {
            ++j;
            continue;
        }
        out.push_back(i);
    }
    return out;
}

inline Mat select_columns(const Mat& M, const std::vector<std::size_t>& cols) {
    Mat out(M.rows(), Eigen::Index(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) out.col(Eigen::Index(i)) = M.col(Eigen::Index(cols[i]));
    return out;
}

inline Mat embed_rows(const Mat& M, const std::vector<std::size_t>& rows, Eigen::Index n) {
    Mat out = Mat::Zero(n, M.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(Eigen::Index(rows[i])) = M.row(Eigen::Index(i));
    return out;
}

inline Mat principal_submatrix(const Mat& K, const std::vector<std::size_t>& idx) {
    Mat out(Eigen::Index(idx.size()), Eigen::Index(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < idx.size(); ++j) out(Eigen::Index(i), Eigen::Index(j)) = K(Eigen::Index(idx[i]), Eigen::Index(idx[j]));
    return out;
}

}  // namespace detail

/// Minimizer of 1/2 A^T K A subject to QA = A1 and A = 0 on the axial trees.
inline ConstrainedMinimizer axial_minimizer(const Torus& fine, int L, const Mat& K) {
    Blocking B(fine, L);
    Mat Qg = gauge_average(B);
    AxialTreeSet trees = build_axial_trees(fine, L);
    auto free = detail::complement(fine.bonds(), trees.bonds);
    Mat Kf = detail::principal_submatrix(K, free);
    ConstraintSplit cs = split_constraints(detail::select_columns(Qg, free));
    const Mat& N = cs.null_basis;
    Mat G = N.transpose() * Kf * N;
    Eigen::LLT<Mat> llt(G);
    if (llt.info() != Eigen::Success) throw Error("singular_kkt", "reduced Hessian is not positive definite");
    Mat Hf = cs.right_inverse - N * llt.solve(N.transpose() * Kf * cs.right_inverse);
    return {fine, Torus(B.coarse().spec()), detail::embed_rows(Hf, free, Eigen::Index(fine.bonds())), Qg, true,
            trees.bonds};
}

/// The free gauge action 1/2 ||dA||^2.
inline ConstrainedMinimizer axial_minimizer(const Torus& fine, int L) {
    return axial_minimizer(fine, L, strength_form(fine));
}

/// Minimizer over all A with QA = A1; the flat gauge directions are resolved by
/// taking the minimum-norm solution.
inline ConstrainedMinimizer landau_minimizer(const Torus& fine, int L) {
    Blocking B(fine, L);
    Mat Qg = gauge_average(B);
    Mat K = strength_form(fine);
    ConstraintSplit cs = split_constraints(Qg);
    const Mat& N = cs.null_basis;
    Mat G = N.transpose() * K * N;
    Mat H = cs.right_inverse - N * (symmetric_pinv(G) * (N.transpose() * K * cs.right_inverse));
    return {fine, Torus(B.coarse().spec()), std::move(H), Qg, false, {}};
}

/// Least-squares omega with A_x = A_0 + d omega; residual is reported.
struct GaugeWitness {
    Vec omega;
    double residual;
};

inline GaugeWitness gauge_witness(const GaugeField& from, const GaugeField& to) {
    Mat g = gradient_matrix(from.torus());
    Vec diff = to.values() - from.values();
    Vec omega = g.completeOrthogonalDecomposition().solve(diff);
    return {omega, (g * omega - diff).cwiseAbs().maxCoeff()};
}

/// k-fold composition of unit-lattice minimizers: fine lattice -> scale-k lattice.
inline Mat iterated_minimizer(const Torus& fine, int L, int k, bool axial = true) {
    Mat H = Mat::Identity(Eigen::Index(fine.bonds()), Eigen::Index(fine.bonds()));
    Torus cur = fine;
    for (int j = 0; j < k; ++j) {
        ConstrainedMinimizer m = axial ? axial_minimizer(cur, L) : landau_minimizer(cur, L);
        H = H * m.H;
        cur = unit_coarse(cur);
    }
    return H;
}

/// Gaussian measure on {QZ = 0, Z axial}: Z = basis * t with t ~ N(0, C).
struct FluctCovariance {
    Mat basis;        // fine bonds x dim, orthonormal columns
    Mat form;         // restricted quadratic form G = basis^T K basis
    Mat C;            // G^{-1}
    double min_eigenvalue = 0;
    double log_det_C = 0;
    double log_jacobian = 0;  // log det(C_f C_f^T)^{1/2} from the delta(QZ) elimination

    Eigen::Index dim() const { return basis.cols(); }
    /// log of (2 pi)^{dim/2} det(C)^{1/2}.
    double log_z() const { return 0.5 * double(dim()) * std::log(2 * std::numbers::pi) + 0.5 * log_det_C; }
    /// Full normalization of delta(QZ) delta_x(Z) exp(-1/2 ||dZ||^2) DZ.
    double log_z_with_jacobian() const { return log_z() - log_jacobian; }
    /// Covariance in fine bond coordinates.
    Mat ambient() const { return basis * C * basis.transpose(); }
};

inline FluctCovariance fluct_covariance(const Torus& fine, int L, const Mat& K) {
    Blocking B(fine, L);
    Mat Qg = gauge_average(B);
    AxialTreeSet trees = build_axial_trees(fine, L);
    auto free = detail::complement(fine.bonds(), trees.bonds);
    Mat Kf = detail::principal_submatrix(K, free);
    ConstraintSplit cs = split_constraints(detail::select_columns(Qg, free));
    FluctCovariance fc;
    fc.basis = detail::embed_rows(cs.null_basis, free, Eigen::Index(fine.bonds()));
    fc.form = cs.null_basis.transpose() * Kf * cs.null_basis;
    Eigen::SelfAdjointEigenSolver<Mat> es(fc.form);
    fc.min_eigenvalue = fc.dim() ? es.eigenvalues()(0) : 0.0;
    if (fc.dim() && fc.min_eigenvalue <= 0)
        throw Error("not_positive_definite", "restricted quadratic form has eigenvalue " + std::to_string(fc.min_eigenvalue));
    fc.C = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    fc.log_det_C = -es.eigenvalues().array().log().sum();
    fc.log_jacobian = cs.log_jacobian;
    return fc;
}

inline FluctCovariance fluct_covariance(const Torus& fine, int L) { return fluct_covariance(fine, L, strength_form(fine)); }

/// Gamma(A) = (D + mbar + b L^{-1} Q^T(-A) Q(A))^{-1} and the critical-point map.
struct FermionFluctOp {
    AveragingOp average;
    FermionMatrix gamma_inv;
    FermionMatrix gamma;
    FermionMatrix crit;  // b L^{-1} Gamma Q^T(-A): coarse -> fine
    double b = 1.0;
    double smallest_singular_value = 0;

    int L() const { return average.blocking.L(); }
};

inline double smallest_singular_value(const CMat& M) {
    Eigen::JacobiSVD<CMat> svd(M);
    return svd.singularValues()(svd.singularValues().size() - 1);
}

/// Gamma^{-1}(A) alone, for callers that only need its determinant.
inline FermionMatrix gamma_inv_matrix(const GaugeField& A, double e, double mbar, double b, int L) {
    AveragingOp q = fermion_average(A, e, L);
    return wilson_dirac(A, e, mbar).with_mass() + (b / L) * q.transpose_bar() * q.Q;
}

inline FermionFluctOp fermion_fluct(const GaugeField& A, double e, double mbar, double b, int L) {
    FermionFluctOp op{fermion_average(A, e, L), {}, {}, {}, b, 0};
    const double c = b / L;
    CMat QT = op.average.transpose_bar();
    op.gamma_inv = wilson_dirac(A, e, mbar).with_mass() + c * QT * op.average.Q;
    op.smallest_singular_value = smallest_singular_value(op.gamma_inv);
    if (op.smallest_singular_value < 1e-13)
        throw Error("singular_matrix", "Gamma^{-1} smallest singular value " + std::to_string(op.smallest_singular_value));
    Eigen::PartialPivLU<CMat> lu(op.gamma_inv);
    op.gamma = lu.inverse();
    op.crit = c * op.gamma * QT;
    return op;
}

/// Quadratic form on independent (psibar, psi) coefficient vectors:
/// eps^3 psibar^T (D + mbar) psi + b L^{-1} (L eps)^3 (Psibar1 - Qbar psibar)^T (Psi1 - Q psi).
inline cd fermion_quadratic_form(const FermionFluctOp& op, const FermionMatrix& D_mbar, double eps, const CVec& Psibar1,
                                 const CVec& Psi1, const CVec& psibar, const CVec& psi) {
    const int L = op.L();
    double w_f = std::pow(eps, 3), w_c = std::pow(L * eps, 3);
    CVec rb = Psibar1 - op.average.bar() * psibar;
    CVec r = Psi1 - op.average.Q * psi;
    return w_f * (psibar.transpose() * (D_mbar * psi))(0) +
           (op.b / L) * w_c * (rb.transpose() * r)(0);
}

/// Gradient of the quadratic form in psibar (divided by eps^3): (Gamma^{-1} psi - b L^{-1} Q^T Psi1).
inline CVec fermion_form_gradient(const FermionFluctOp& op, const CVec& Psi1, const CVec& psi) {
    return op.gamma_inv * psi - (op.b / op.L()) * op.average.transpose_bar() * Psi1;
}

/// log det via LU (principal branch of the summed logs).
inline cd log_det(const CMat& M) {
    Eigen::PartialPivLU<CMat> lu(M);
    const CMat& U = lu.matrixLU();
    cd s = 0;
    for (Eigen::Index i = 0; i < U.rows(); ++i) s += std::log(U(i, i));
    if (lu.permutationP().determinant() < 0) s += cd(0, std::numbers::pi);
    return s;
}

/// fermion normalizer det(Gamma^{-1}) in log form.
inline cd fermion_normalizer_log(const FermionFluctOp& op) { return log_det(op.gamma_inv); }

struct DecayFit {
    double rate = 0, prefactor = 0;
    std::size_t points = 0;
};

/// Least-squares fit of log|k| = log C - rate * dist over entries above a floor.
inline DecayFit fit_exponential_decay(const std::vector<double>& dist, const std::vector<double>& mag,
                                      double floor = 1e-14) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < dist.size(); ++i)
        if (mag[i] > floor) {
            xs.push_back(dist[i]);
            ys.push_back(std::log(mag[i]));
        }
    DecayFit f;
    f.points = xs.size();
    if (xs.size() < 2) return f;
    Mat X(Eigen::Index(xs.size()), 2);
    Vec y(Eigen::Index(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        X(Eigen::Index(i), 0) = 1;
        X(Eigen::Index(i), 1) = xs[i];
        y[Eigen::Index(i)] = ys[i];
    }
    Vec beta = X.colPivHouseholderQr().solve(y);
    f.prefactor = std::exp(beta[0]);
    f.rate = -beta[1];
    return f;
}

inline void write_matrix_csv(const Mat& M, const std::string& path) { write_sparse_csv(M, path, 0.0); }

}  // namespace blockrg
