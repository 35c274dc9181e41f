#pragma once

// Small-field / large-field split over M-cubes and the combinatorial identities
// behind the region decomposition.

#include <cmath>
#include <cstdint>
#include <vector>

#include "blockrg/fields.hpp"

namespace blockrg {

/// p(e) = (-log e)^p_exp.
struct SmallFieldThreshold {
    int p_exp = 2;

    double value(double e) const {
        if (!(e > 0 && e < 1)) throw Error("bad_coupling", "threshold needs 0 < e < 1");
        return std::pow(-std::log(e), p_exp);
    }
};

/// Plaquettes whose base site lies in the given cube.
inline std::vector<std::size_t> plaquettes_in_cube(const CubeGrid& grid, std::size_t cube) {
    std::vector<std::size_t> out;
    for (std::size_t x : grid.sites_in_cube(cube))
        for (int p = 0; p < 3; ++p) out.push_back(grid.torus().plaquette(x, p));
    return out;
}

inline double cube_sup_strength(const FieldStrength& F, const CubeGrid& grid, std::size_t cube) {
    double s = 0;
    for (std::size_t p : plaquettes_in_cube(grid, cube)) s = std::max(s, std::abs(F.values[Eigen::Index(p)]));
    return s;
}

/// ||dA||^2 restricted to the plaquettes of one cube.
inline double cube_strength_sq(const FieldStrength& F, const CubeGrid& grid, std::size_t cube) {
    double e3 = std::pow(F.torus.spacing(), 3), s = 0;
    for (std::size_t p : plaquettes_in_cube(grid, cube)) s += e3 * F.values[Eigen::Index(p)] * F.values[Eigen::Index(p)];
    return s;
}

/// chi: sup over plaquettes in the region of |dA(p)| <= p(e).
inline bool smallfield_indicator(const GaugeField& A, const CubeGrid& grid, const std::vector<std::size_t>& region,
                                 double threshold) {
    FieldStrength F = field_strength(A);
    for (std::size_t c : region)
        if (cube_sup_strength(F, grid, c) > threshold) return false;
    return true;
}

/// Per-cube chi values (1 small, 0 large).
inline std::vector<int> cube_indicators(const GaugeField& A, const CubeGrid& grid, double threshold) {
    FieldStrength F = field_strength(A);
    std::vector<int> chi(grid.cube_count());
    for (std::size_t c = 0; c < chi.size(); ++c) chi[c] = cube_sup_strength(F, grid, c) <= threshold ? 1 : 0;
    return chi;
}

/// sum over Omega of prod_{Omega^c} zeta prod_{Omega} chi, in exact integer arithmetic.
inline std::int64_t partition_of_unity_sum(const std::vector<int>& chi) {
    const std::size_t n = chi.size();
    if (n > 24) throw Error("overflow", "region enumeration limited to 24 cubes");
    std::int64_t total = 0;
    for (std::uint32_t omega = 0; omega < (1u << n); ++omega) {
        std::int64_t term = 1;
        for (std::size_t c = 0; c < n && term; ++c) term *= (omega >> c & 1) ? chi[c] : 1 - chi[c];
        total += term;
    }
    return total;
}

struct RegionSumAudit {
    std::size_t cubes = 0;
    double x = 0;
    std::vector<std::uint64_t> complement_counts;  // #Omega with |Omega^c| = k
    bool counts_binomial = false;
    double lhs = 0;          // sum_Omega x^{|Omega^c|}
    double product = 0;      // (1 + x)^n
    double exp_bound = 0;    // exp(x n)
    bool bound_holds = false;
};

inline std::uint64_t binomial(std::size_t n, std::size_t k) {
    std::uint64_t r = 1;
    for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

inline RegionSumAudit region_sum_audit(std::size_t cubes, double x) {
    if (cubes > 24) throw Error("overflow", "region enumeration limited to 24 cubes");
    RegionSumAudit a;
    a.cubes = cubes;
    a.x = x;
    a.complement_counts.assign(cubes + 1, 0);
    for (std::uint32_t omega = 0; omega < (1u << cubes); ++omega)
        ++a.complement_counts[cubes - std::size_t(std::popcount(omega))];
    a.counts_binomial = true;
    for (std::size_t k = 0; k <= cubes; ++k) {
        a.counts_binomial = a.counts_binomial && a.complement_counts[k] == binomial(cubes, k);
        a.lhs += double(a.complement_counts[k]) * std::pow(x, double(k));
    }
    a.product = std::pow(1 + x, double(cubes));
    a.exp_bound = std::exp(x * double(cubes));
    a.bound_holds = a.product <= a.exp_bound * (1 + 1e-15);
    return a;
}

struct SwooshCheck {
    std::size_t cube;
    double sup_strength;
    double lhs;  // exp(-1/4 ||dA||^2_cube)
    double rhs;  // exp(-1/4 p(e)^2)
    bool holds;
};

/// For every cube where the field is large, compare exp(-||dA||^2/4) with exp(-p^2/4).
inline std::vector<SwooshCheck> swoosh_checks(const GaugeField& A, const CubeGrid& grid, double threshold) {
    FieldStrength F = field_strength(A);
    std::vector<SwooshCheck> out;
    for (std::size_t c = 0; c < grid.cube_count(); ++c) {
        double sup = cube_sup_strength(F, grid, c);
        if (sup <= threshold) continue;
        double lhs = std::exp(-0.25 * cube_strength_sq(F, grid, c));
        double rhs = std::exp(-0.25 * threshold * threshold);
        out.push_back({c, sup, lhs, rhs, lhs <= rhs});
    }
    return out;
}

}  // namespace blockrg
