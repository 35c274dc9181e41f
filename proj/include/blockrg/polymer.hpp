#pragma once

// Polymer functions over M-cubes: the localized interaction V_0, determinant
// localization by inclusion-exclusion, the reblock-and-scale map and the
// extraction of the relevant (energy density and mass) parts.

#include <functional>
#include <map>
#include <memory>
#include <vector>

#include "blockrg/grassmann.hpp"
#include "blockrg/minimizers.hpp"
#include "blockrg/smallfield.hpp"

namespace blockrg {

/// E(X) at a fixed background, as Grassmann polynomials in the fermion field.
struct PolymerFunction {
    CubeGrid grid;
    std::shared_ptr<const GrassmannUniverse> universe;
    std::map<Polymer, GrassmannPoly> values;

    PolymerFunction(CubeGrid g, std::shared_ptr<const GrassmannUniverse> u) : grid(std::move(g)), universe(std::move(u)) {}

    void add(const Polymer& X, const GrassmannPoly& p) {
        auto it = values.find(X);
        if (it == values.end())
            values.emplace(X, p);
        else
            it->second += p;
    }
    GrassmannPoly at(const Polymer& X) const {
        auto it = values.find(X);
        return it == values.end() ? GrassmannPoly(universe) : it->second;
    }
    GrassmannPoly total() const {
        GrassmannPoly s(universe);
        for (const auto& [X, p] : values) s += p;
        return s;
    }
    bool is_zero(double tol = 0.0) const {
        for (const auto& [X, p] : values)
            if (p.h_norm(1.0) > tol) return false;
        return true;
    }
    double norm_sum(double h) const {
        double s = 0;
        for (const auto& [X, p] : values) s += p.h_norm(h);
        return s;
    }

    friend PolymerFunction operator+(PolymerFunction a, const PolymerFunction& b) {
        for (const auto& [X, p] : b.values) a.add(X, p);
        return a;
    }
    friend PolymerFunction operator*(cd s, PolymerFunction a) {
        for (auto& [X, p] : a.values) p *= s;
        return a;
    }
};

/// Sites of the fermion universe belonging to the polymer's cubes, as pair indices.
inline std::vector<std::size_t> pairs_in_polymer(const Polymer& X, const CubeGrid& grid, const GrassmannUniverse& u) {
    std::vector<char> in(grid.torus().sites(), 0);
    for (std::size_t c : X.cubes)
        for (std::size_t x : grid.sites_in_cube(c)) in[x] = 1;
    std::vector<std::size_t> out;
    for (std::size_t p = 0; p < u.pairs(); ++p)
        if (in[u.generator(u.bar(p)).site]) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------------------
// V_0 localization

/// Gauge field equal to A on bonds whose base site lies in the selected cubes, 0 elsewhere.
inline GaugeField restrict_to_cubes(const GaugeField& A, const CubeGrid& grid, const std::vector<std::size_t>& cubes) {
    GaugeField out(A.torus());
    for (std::size_t c : cubes)
        for (std::size_t x : grid.sites_in_cube(c))
            for (int mu = 0; mu < 3; ++mu) out[A.torus().bond(x, mu)] = A[A.torus().bond(x, mu)];
    return out;
}

/// Per-cube pieces of V_0: the Dirac difference localized by bond base site and
/// the averaging-term difference localized by the cube holding the block center.
/// Kernels already carry the lattice weights; E_0(cube) = -(bilinear).
struct V0Pieces {
    CubeGrid grid;
    std::vector<FermionMatrix> dirac;      // fine x fine
    std::vector<FermionMatrix> averaging;  // (fine + coarse) x (fine + coarse)
    FermionMatrix dirac_total;             // eps^3 (D(A+Z) - D(A))
    FermionMatrix averaging_total;

    double h_norm(std::size_t cube, double h) const {
        return h * h * (dirac[cube].cwiseAbs().sum() + averaging[cube].cwiseAbs().sum());
    }
    double reassembly_error() const {
        FermionMatrix d = dirac_total, a = averaging_total;
        for (const auto& m : dirac) d -= m;
        for (const auto& m : averaging) a -= m;
        return std::max(d.cwiseAbs().maxCoeff(), a.size() ? a.cwiseAbs().maxCoeff() : 0.0);
    }
};

/// Kernel of b L^{-1} (L eps)^3 |Psi1 - Q psi|^2 on combined (psi, Psi1) vectors, per coarse row.
inline FermionMatrix averaging_row_kernel(const CMat& Q, Eigen::Index row, double weight) {
    const Eigen::Index nf = Q.cols(), nc = Q.rows();
    CVec r = CVec::Zero(nf + nc);
    r.head(nf) = -Q.row(row).transpose();
    r[nf + row] = 1.0;
    return weight * r.conjugate() * r.transpose();
}

inline V0Pieces build_V0(const GaugeField& A_ref, const GaugeField& Z, double e, double b, int L, int M_exp) {
    const Torus& t = A_ref.torus();
    CubeGrid grid(t, M_exp);
    const double eps = t.spacing(), w = std::pow(eps, 3);
    V0Pieces v{grid, {}, {}, {}, {}};
    FermionMatrix D0 = wilson_dirac(A_ref, e, 0).matrix;
    v.dirac_total = w * (wilson_dirac(A_ref + Z, e, 0).matrix - D0);
    for (std::size_t c = 0; c < grid.cube_count(); ++c) {
        GaugeField Zc = restrict_to_cubes(Z, grid, {c});
        v.dirac.push_back(w * (wilson_dirac(A_ref + Zc, e, 0).matrix - D0));
    }
    AveragingOp q0 = fermion_average(A_ref, e, L), q1 = fermion_average(A_ref + Z, e, L);
    const double cw = (b / L) * std::pow(L * eps, 3);
    const Eigen::Index n = q0.Q.cols() + q0.Q.rows();
    v.averaging.assign(grid.cube_count(), FermionMatrix::Zero(n, n));
    v.averaging_total = FermionMatrix::Zero(n, n);
    for (Eigen::Index row = 0; row < q0.Q.rows(); ++row) {
        std::size_t y = std::size_t(row / 2);
        std::size_t cube = grid.cube_of_site(q0.blocking.center(y));
        FermionMatrix d = averaging_row_kernel(q1.Q, row, cw) - averaging_row_kernel(q0.Q, row, cw);
        v.averaging[cube] += d;
        v.averaging_total += d;
    }
    return v;
}

/// -(psibar^T K psi) as a polymer function on single cubes (fine fermion universe only).
inline PolymerFunction v0_dirac_polymers(const V0Pieces& v, std::shared_ptr<const GrassmannUniverse> u) {
    PolymerFunction f(v.grid, u);
    for (std::size_t c = 0; c < v.dirac.size(); ++c) {
        GrassmannPoly p = GrassmannPoly::bilinear(u, -v.dirac[c]);
        if (!p.is_zero()) f.add(Polymer({c}), p);
    }
    return f;
}

// ---------------------------------------------------------------------------
// determinant localization

using ScalarPolymerFunction = std::map<Polymer, cd>;

struct DetExpansion {
    ScalarPolymerFunction terms;  // E^det(X) over all nonempty cube subsets
    cd total_log_ratio;           // log(z(A)/z(0))
    double resummation_error = 0;
};

/// E^det(X) = sum_{Y subset X} (-1)^{|X\Y|} log(z(A|_Y)/z(0)).
inline DetExpansion det_expand(const std::function<cd(const GaugeField&)>& log_z, const GaugeField& A,
                               const CubeGrid& grid) {
    const std::size_t n = grid.cube_count();
    if (n > 12) throw Error("overflow", "determinant localization limited to 12 cubes");
    const std::uint32_t full = (1u << n) - 1;
    const cd base = log_z(GaugeField(A.torus()));
    std::vector<cd> f(full + 1);
    for (std::uint32_t mask = 0; mask <= full; ++mask) {
        std::vector<std::size_t> cubes;
        for (std::size_t c = 0; c < n; ++c)
            if (mask >> c & 1) cubes.push_back(c);
        f[mask] = mask == 0 ? cd(0) : log_z(restrict_to_cubes(A, grid, cubes)) - base;
    }
    // Moebius inversion on the subset lattice (in-place zeta transform inverse)
    std::vector<cd> g = f;
    for (std::size_t c = 0; c < n; ++c)
        for (std::uint32_t mask = 0; mask <= full; ++mask)
            if (mask >> c & 1) g[mask] -= g[mask ^ (1u << c)];
    DetExpansion out;
    out.total_log_ratio = f[full];
    cd sum = 0;
    for (std::uint32_t mask = 1; mask <= full; ++mask) {
        std::vector<std::size_t> cubes;
        for (std::size_t c = 0; c < n; ++c)
            if (mask >> c & 1) cubes.push_back(c);
        out.terms.emplace(Polymer(cubes), g[mask]);
        sum += g[mask];
    }
    out.resummation_error = std::abs(sum - out.total_log_ratio);
    return out;
}

// ---------------------------------------------------------------------------
// reblock and scale

/// Relabelled torus after one RG step: the same points viewed at L times finer spacing.
inline TorusSpec relabel_spec(const TorusSpec& s) { return {s.base_scale, s.spacing_exp + 1, s.extent_exp - 1}; }

/// (LE)(X, psi) = sum_{Y : Ybar = LX} E(Y, psi_L).  Substituting psi_L multiplies a
/// degree-n coefficient by L^{-n}; polymers map to their LM-cube images.
inline PolymerFunction reblock_scale_L(const PolymerFunction& E) {
    const Torus& t = E.grid.torus();
    const int L = t.spec().base_scale;
    CubeGrid coarse(t, E.grid.M_exp() + 1);
    PolymerFunction out(CubeGrid(Torus(relabel_spec(t.spec())), E.grid.M_exp() + 1), E.universe);
    for (const auto& [Y, p] : E.values) {
        GrassmannPoly s(E.universe, p.degree_cap());
        for (const auto& [m, c] : p.terms()) s.add_term(m, c * std::pow(double(L), -std::popcount(m)));
        out.add(reblock_image(Y, E.grid, coarse), s);
    }
    return out;
}

struct NormGrowthAudit {
    double sum_ratio = 0;           // sum_X ||LE(X)|| / sum_Y ||E(Y)||
    double per_polymer_ratio = 0;   // mean over images / mean over sources
    double heuristic = 0;           // L^3
};

inline NormGrowthAudit norm_growth(const PolymerFunction& E, const PolymerFunction& LE, double h, double h_scaled) {
    NormGrowthAudit a;
    double src = E.norm_sum(h), img = LE.norm_sum(h_scaled);
    a.sum_ratio = src > 0 ? img / src : 0.0;
    std::size_t ns = 0, ni = 0;
    for (const auto& [X, p] : E.values) ns += !p.is_zero();
    for (const auto& [X, p] : LE.values) ni += !p.is_zero();
    a.per_polymer_ratio = (ns && ni && src > 0) ? (img / double(ni)) / (src / double(ns)) : 0.0;
    const int L = E.grid.torus().spec().base_scale;
    a.heuristic = double(L) * L * L;
    return a;
}

// ---------------------------------------------------------------------------
// relevant parts

struct RelevantParts {
    std::map<Polymer, double> energy;  // eps*(X)
    std::map<Polymer, double> mass;    // m*(X)
    PolymerFunction remainder;
    double max_imaginary = 0;  // symmetry-violation report
};

inline double polymer_volume(const Polymer& X, const CubeGrid& grid) {
    double m = grid.M() * grid.torus().spacing();
    return double(X.size()) * m * m * m;
}

/// Zero-momentum spin trace of the psibar psi kernel of p over the given pairs.
inline cd psibar_psi_trace(const GrassmannPoly& p, const GrassmannUniverse& u, const std::vector<std::size_t>& pairs) {
    std::map<std::size_t, std::vector<std::size_t>> by_spin;
    for (std::size_t q : pairs) by_spin[std::size_t(u.generator(u.bar(q)).spin)].push_back(q);
    cd s = 0;
    for (const auto& [spin, qs] : by_spin)
        for (std::size_t i : qs)
            for (std::size_t j : qs) s += p.coefficient((Mask(1) << u.bar(i)) | (Mask(1) << u.psi(j)));
    return s;
}

/// E(X) = -eps*(X) Vol(X) - m*(X) int_X psibar psi + (RE)(X).
inline RelevantParts extract_relevant(const PolymerFunction& E) {
    RelevantParts r{{}, {}, PolymerFunction(E.grid, E.universe), 0};
    const GrassmannUniverse& u = *E.universe;
    const double w = std::pow(E.grid.torus().spacing(), 3);
    int spins = 1;
    for (std::size_t q = 0; q < u.pairs(); ++q) spins = std::max(spins, u.generator(u.bar(q)).spin + 1);
    for (const auto& [X, p] : E.values) {
        double vol = polymer_volume(X, E.grid);
        auto pairs = pairs_in_polymer(X, E.grid, u);
        cd c0 = p.constant_term();
        cd tr = psibar_psi_trace(p, u, pairs);
        double sites = double(pairs.size()) / spins;
        double eps_star = -c0.real() / vol;
        double m_star = pairs.empty() ? 0.0 : -tr.real() / (spins * sites * w);
        r.max_imaginary = std::max({r.max_imaginary, std::abs(c0.imag()), std::abs(tr.imag())});
        GrassmannPoly rem = p;
        rem.add_term(0, eps_star * vol);
        for (std::size_t q : pairs) rem.add_term((Mask(1) << u.bar(q)) | (Mask(1) << u.psi(q)), m_star * w);
        r.energy[X] = eps_star;
        r.mass[X] = m_star;
        r.remainder.add(X, rem);
    }
    return r;
}

/// eps*(cube) = sum_{X contains cube} eps*(X), for every cube.
inline std::vector<double> aggregate_per_cube(const std::map<Polymer, double>& part, const CubeGrid& grid) {
    std::vector<double> out(grid.cube_count(), 0.0);
    for (const auto& [X, v] : part)
        for (std::size_t c : X.cubes) out[c] += v;
    return out;
}

// ---------------------------------------------------------------------------
// decay audit

struct DecayAuditEntry {
    Polymer X;
    double d_M;
    double norm;
};

struct DecayAudit {
    std::vector<DecayAuditEntry> entries;
    double kappa = 0;       // fitted kappa'
    double prefactor = 0;
    double sup_weighted = 0;  // max ||E(X)|| e^{kappa' d_M(X)}
};

inline DecayAudit audit_decay(const std::map<Polymer, double>& norms, const CubeGrid& grid) {
    DecayAudit a;
    std::vector<double> d, m;
    for (const auto& [X, n] : norms) {
        double dm = tree_distance_dM(X, grid);
        a.entries.push_back({X, dm, n});
        d.push_back(dm);
        m.push_back(n);
    }
    DecayFit f = fit_exponential_decay(d, m, 1e-300);
    a.kappa = f.rate;
    a.prefactor = f.prefactor;
    for (const auto& e : a.entries) a.sup_weighted = std::max(a.sup_weighted, e.norm * std::exp(a.kappa * e.d_M));
    return a;
}

inline nlohmann::json polymer_table_json(const DecayAudit& a, double h) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : a.entries)
        rows.push_back({{"cubes", e.X.cubes}, {"h", h}, {"norm", e.norm}, {"d_M", e.d_M},
                        {"weighted", e.norm * std::exp(a.kappa * e.d_M)}});
    return {{"kappa_prime", a.kappa}, {"prefactor", a.prefactor}, {"sup_weighted", a.sup_weighted}, {"polymers", rows}};
}

}  // namespace blockrg
