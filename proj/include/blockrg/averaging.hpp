#pragma once

// Block averaging of fermion and gauge fields, axial trees in L-cubes, and the
// hierarchical axial gauge-fixing constraint system.

#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "blockrg/dirac.hpp"

namespace blockrg {

/// Fermion averaging Q(A): coarse (y, spin) <- fine (x, spin), entries
/// L^{-3} exp(i e A(Gamma)) with Gamma the in-block staircase from the block
/// center to x.  The phase orientation matches the forward hop of D so that
/// Q(A + d omega) U_fine(omega) = U_coarse(omega|centers) Q(A).
struct AveragingOp {
    Blocking blocking;
    CMat Q;

    /// Q(-A) for barred fields.
    CMat bar() const { return Q.conjugate(); }
    /// Q^T(-A): adjoint with respect to the eps^3-weighted pairings.
    CMat transpose_bar() const { return double(blocking.block_volume()) * Q.adjoint(); }
};

inline AveragingOp fermion_average(const GaugeField& A, double e, int L) {
    Blocking B(A.torus(), L);
    const Torus& fine = B.fine();
    const Torus& coarse = B.coarse();
    const double w = 1.0 / double(B.block_volume());
    CMat site_q = CMat::Zero(Eigen::Index(coarse.sites()), Eigen::Index(fine.sites()));
    for (std::size_t y = 0; y < coarse.sites(); ++y) {
        std::size_t c = B.center(y);
        for (std::size_t x : B.sites_in_block(y)) {
            double phase = e * line_integral(A, fine.staircase_path(c, x, Winding::direct));
            site_q(Eigen::Index(y), Eigen::Index(x)) = w * std::exp(cd(0, phase));
        }
    }
    return {B, spin_identity(site_q)};
}

/// Gauge averaging: (QA)(y, y + L e_mu) = sum_{x in B(y)} L^{-4} A(straight path x -> x + L e_mu).
inline Mat gauge_average(const Blocking& B) {
    const Torus& fine = B.fine();
    const Torus& coarse = B.coarse();
    const int L = B.L();
    const double w = std::pow(double(L), -4);
    Mat q = Mat::Zero(Eigen::Index(coarse.bonds()), Eigen::Index(fine.bonds()));
    for (std::size_t y = 0; y < coarse.sites(); ++y)
        for (int mu = 0; mu < 3; ++mu)
            for (std::size_t x : B.sites_in_block(y)) {
                std::size_t s = x;
                for (int k = 0; k < L; ++k) {
                    q(Eigen::Index(coarse.bond(y, mu)), Eigen::Index(fine.bond(s, mu))) += w;
                    s = fine.shift(s, mu);
                }
            }
    return q;
}

inline GaugeField gauge_average(const GaugeField& A, int L) {
    Blocking B(A.torus(), L);
    return GaugeField(B.coarse(), gauge_average(B) * A.values());
}

struct TreeEdge {
    std::size_t parent, child, bond;
    int sign;  // +1 when child = parent + e_axis
};

/// One comb tree per L-cube, rooted at the block center: spine along axis 2,
/// combs along axis 1, teeth along axis 0.  Edges are listed root-outward.
struct AxialTreeSet {
    Blocking blocking;
    std::vector<TreeEdge> edges;
    std::vector<std::size_t> bonds;  // sorted eliminated bond indices

    bool contains(std::size_t b) const { return std::binary_search(bonds.begin(), bonds.end(), b); }
};

inline AxialTreeSet build_axial_trees(const Torus& t, int L) {
    Blocking B(t, L);
    std::vector<TreeEdge> edges;
    auto grow = [&](const Coord& from, int axis, int lo, int hi, std::vector<Coord>& reached) {
        // walk outward from from[axis] in both directions inside [lo, hi)
        reached.push_back(from);
        for (int dir : {+1, -1}) {
            Coord cur = from;
            while (true) {
                Coord nxt = cur;
                nxt[axis] += dir;
                if (nxt[axis] < lo || nxt[axis] >= hi) break;
                std::size_t p = t.index(cur), c = t.index(nxt);
                std::size_t base = dir > 0 ? p : c;
                edges.push_back({p, c, t.bond(base, axis), dir});
                reached.push_back(nxt);
                cur = nxt;
            }
        }
    };
    for (std::size_t y = 0; y < B.coarse().sites(); ++y) {
        Coord yc = B.coarse().coord(y);
        Coord lo{yc[0] * L, yc[1] * L, yc[2] * L};
        Coord root = t.coord(B.center(y));
        std::vector<Coord> spine, comb, teeth;
        grow(root, 2, lo[2], lo[2] + L, spine);
        for (const Coord& s : spine) grow(s, 1, lo[1], lo[1] + L, comb);
        for (const Coord& s : comb) grow(s, 0, lo[0], lo[0] + L, teeth);
    }
    std::vector<std::size_t> bonds;
    for (const auto& e : edges) bonds.push_back(e.bond);
    std::sort(bonds.begin(), bonds.end());
    return {B, std::move(edges), std::move(bonds)};
}

/// omega with (A + d omega) = 0 on every tree bond (omega = 0 at block centers).
inline Vec axial_gauge_witness(const GaugeField& A, const AxialTreeSet& trees) {
    const double eps = A.torus().spacing();
    Vec omega = Vec::Zero(Eigen::Index(A.torus().sites()));
    for (const auto& e : trees.edges) {
        double a = A[e.bond];
        omega[Eigen::Index(e.child)] = omega[Eigen::Index(e.parent)] - e.sign * eps * a;
    }
    return omega;
}

/// Unit-spaced lattice with 1/L the side: the block lattice after rescaling.
inline Torus unit_coarse(const Torus& t) { return Torus(t.spec().blocked().scaled(-1)); }

inline bool can_block(const Torus& t, int L) { return t.side() >= L && t.side() % L == 0; }

/// Linear constraints {Q^j A vanishes on the scale-j axial trees, j = 0..k}.
struct ConstraintSet {
    Mat rows;                           // constraints x fine bonds
    std::vector<std::size_t> per_level;  // constraint count per scale
    Eigen::Index rank = 0;

    Eigen::Index count() const { return rows.rows(); }
};

/// Composite averaging Q^j from the fine lattice to the scale-j unit lattice.
inline Mat composite_average(const Torus& fine, int L, int j) {
    Mat q = Mat::Identity(Eigen::Index(fine.bonds()), Eigen::Index(fine.bonds()));
    Torus cur = fine;
    for (int i = 0; i < j; ++i) {
        Blocking B(cur, L);
        q = gauge_average(B) * q;
        cur = unit_coarse(cur);
    }
    return q;
}

inline ConstraintSet hierarchical_projector(const Torus& fine, int L, int k) {
    ConstraintSet cs;
    std::vector<Eigen::VectorXd> rows;
    Torus cur = fine;
    Mat q = Mat::Identity(Eigen::Index(fine.bonds()), Eigen::Index(fine.bonds()));
    for (int j = 0; j <= k; ++j) {
        if (!can_block(cur, L)) {
            cs.per_level.push_back(0);
            continue;
        }
        AxialTreeSet trees = build_axial_trees(cur, L);
        for (std::size_t b : trees.bonds) rows.push_back(q.row(Eigen::Index(b)).transpose());
        cs.per_level.push_back(trees.bonds.size());
        if (j < k) {
            q = gauge_average(Blocking(cur, L)) * q;
            cur = unit_coarse(cur);
        }
    }
    cs.rows = Mat(Eigen::Index(rows.size()), Eigen::Index(fine.bonds()));
    for (std::size_t i = 0; i < rows.size(); ++i) cs.rows.row(Eigen::Index(i)) = rows[i].transpose();
    if (cs.rows.rows() > 0) {
        Eigen::ColPivHouseholderQR<Mat> qr(cs.rows.transpose());
        cs.rank = qr.rank();
    }
    return cs;
}

inline void write_sparse_csv(const Mat& M, const std::string& path, double tol = 0.0) {
    std::ofstream out(path);
    out << "row,col,value\n";
    out.precision(17);
    for (Eigen::Index i = 0; i < M.rows(); ++i)
        for (Eigen::Index j = 0; j < M.cols(); ++j)
            if (std::abs(M(i, j)) > tol) out << i << ',' << j << ',' << M(i, j) << '\n';
}

}  // namespace blockrg
