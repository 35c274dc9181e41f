#pragma once

// Toroidal lattice geometry: sites, bonds, plaquettes, L-blocks, M-cubes,
// staircase paths, polymers and the tree distance d_M.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace blockrg {

class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

inline long long ipow(long long base, int exp) {
    long long r = 1;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

/// The torus (L^{-n} Z / L^{Np} Z)^3.  The spacing exponent may be negative
/// so that rescaled coarse lattices (spacing L, L^2, ...) are representable.
struct TorusSpec {
    int base_scale = 2;
    int spacing_exp = 0;
    int extent_exp = 0;

    void validate() const {
        if (base_scale < 2) throw Error("bad_spec", "base_scale must be >= 2");
        if (spacing_exp + extent_exp < 0)
            throw Error("bad_spec", "spacing_exp + extent_exp must be >= 0");
    }
    /// Sites per axis.
    int side() const { return static_cast<int>(ipow(base_scale, spacing_exp + extent_exp)); }
    double spacing() const { return std::pow(double(base_scale), -spacing_exp); }
    std::size_t site_count() const {
        auto s = static_cast<std::size_t>(side());
        return s * s * s;
    }
    std::size_t bond_count() const { return 3 * site_count(); }
    std::size_t plaquette_count() const { return 3 * site_count(); }

    /// Same period, spacing multiplied by L^j.
    TorusSpec scaled(int j) const { return {base_scale, spacing_exp - j, extent_exp + j}; }
    /// Block lattice: spacing multiplied by L, same period.
    TorusSpec blocked() const { return {base_scale, spacing_exp - 1, extent_exp}; }

    friend bool operator==(const TorusSpec&, const TorusSpec&) = default;
};

using Coord = std::array<int, 3>;

struct OrientedBond {
    std::size_t bond;  // unoriented index = 3*site + axis (forward orientation)
    int sign;          // +1 forward, -1 reversed

    friend bool operator==(const OrientedBond&, const OrientedBond&) = default;
};

enum class Winding { geodesic, direct };

inline constexpr std::array<std::array<int, 2>, 3> kPlaquetteAxes{{{0, 1}, {0, 2}, {1, 2}}};

/// Index arithmetic on one torus.  Sites are ordered lexicographically in
/// (x0, x1, x2); bond and plaquette indices are 3*site + axis (or axis pair).
class Torus {
public:
    Torus() : Torus(TorusSpec{}) {}
    explicit Torus(TorusSpec spec) : spec_(spec) {
        spec_.validate();
        side_ = spec_.side();
    }

    const TorusSpec& spec() const { return spec_; }
    int side() const { return side_; }
    double spacing() const { return spec_.spacing(); }
    std::size_t sites() const { return spec_.site_count(); }
    std::size_t bonds() const { return spec_.bond_count(); }
    std::size_t plaquettes() const { return spec_.plaquette_count(); }

    int wrap(int v) const { return ((v % side_) + side_) % side_; }

    std::size_t index(const Coord& c) const {
        return (static_cast<std::size_t>(wrap(c[0])) * side_ + wrap(c[1])) * side_ + wrap(c[2]);
    }
    Coord coord(std::size_t site) const {
        int s = side_;
        return {int(site / (s * s)), int((site / s) % s), int(site % s)};
    }
    std::size_t shift(std::size_t site, int axis, int step = 1) const {
        Coord c = coord(site);
        c[axis] += step;
        return index(c);
    }
    std::size_t bond(std::size_t site, int axis) const { return 3 * site + axis; }
    std::size_t bond_site(std::size_t b) const { return b / 3; }
    int bond_axis(std::size_t b) const { return int(b % 3); }
    std::size_t plaquette(std::size_t site, int pair) const { return 3 * site + pair; }

    /// Oriented boundary x -> x+mu -> x+mu+nu -> x+nu -> x.
    std::array<OrientedBond, 4> plaquette_boundary(std::size_t p) const {
        std::size_t x = p / 3;
        auto [mu, nu] = kPlaquetteAxes[p % 3];
        return {{{bond(x, mu), +1},
                 {bond(shift(x, mu), nu), +1},
                 {bond(shift(x, nu), mu), -1},
                 {bond(x, nu), -1}}};
    }

    /// Geodesic signed displacement from a to b along one axis; ties go forward.
    int displacement(int a, int b, Winding w) const {
        if (w == Winding::direct) return b - a;
        int d = wrap(b - a);
        return (d <= side_ - d) ? d : d - side_;
    }

    /// Axis-ordered staircase path: all steps along axis 0, then 1, then 2.
    std::vector<OrientedBond> staircase_path(std::size_t from, std::size_t to,
                                             Winding w = Winding::geodesic) const {
        std::vector<OrientedBond> path;
        Coord a = coord(from), b = coord(to);
        std::size_t cur = from;
        for (int mu = 0; mu < 3; ++mu) {
            int d = displacement(a[mu], b[mu], w);
            int step = d > 0 ? 1 : -1;
            for (int i = 0; i < std::abs(d); ++i) {
                if (step > 0) {
                    path.push_back({bond(cur, mu), +1});
                    cur = shift(cur, mu, 1);
                } else {
                    cur = shift(cur, mu, -1);
                    path.push_back({bond(cur, mu), -1});
                }
            }
        }
        return path;
    }

    /// Torus distance between coordinates measured in lattice units.
    double distance(const Coord& a, const Coord& b) const {
        double s = 0;
        for (int mu = 0; mu < 3; ++mu) {
            int d = std::abs(displacement(a[mu], b[mu], Winding::geodesic));
            s += double(d) * d;
        }
        return std::sqrt(s);
    }

    friend bool operator==(const Torus& a, const Torus& b) { return a.spec_ == b.spec_; }

private:
    TorusSpec spec_;
    int side_ = 1;
};

enum class CellKind { site, bond, plaquette };

struct Cell {
    std::size_t index;
    Coord coord;
    int axis;  // bond axis, or plaquette pair index; -1 for sites
    CellKind kind;
};

struct CellEnumeration {
    std::vector<Cell> sites, bonds, plaquettes;
};

inline constexpr std::size_t kDefaultCellCap = std::size_t(1) << 24;

inline CellEnumeration enumerate_cells(const TorusSpec& spec, std::size_t cap = kDefaultCellCap) {
    spec.validate();
    // guard the power before it overflows int
    double approx = std::pow(double(spec.base_scale), 3.0 * (spec.spacing_exp + spec.extent_exp));
    if (approx * 7 > double(cap))
        throw Error("overflow", "cell count exceeds configured cap");
    Torus t(spec);
    CellEnumeration out;
    out.sites.reserve(t.sites());
    out.bonds.reserve(t.bonds());
    out.plaquettes.reserve(t.plaquettes());
    for (std::size_t s = 0; s < t.sites(); ++s) {
        Coord c = t.coord(s);
        out.sites.push_back({s, c, -1, CellKind::site});
        for (int a = 0; a < 3; ++a) out.bonds.push_back({t.bond(s, a), c, a, CellKind::bond});
        for (int p = 0; p < 3; ++p)
            out.plaquettes.push_back({t.plaquette(s, p), c, p, CellKind::plaquette});
    }
    return out;
}

inline const char* cell_kind_name(CellKind k) {
    switch (k) {
        case CellKind::site: return "site";
        case CellKind::bond: return "bond";
        default: return "plaquette";
    }
}

/// CSV with columns index,x0,x1,x2,axis,kind in lexicographic order.
inline std::string cells_csv(const CellEnumeration& cells) {
    std::string out = "index,x0,x1,x2,axis,kind\n";
    for (const auto* group : {&cells.sites, &cells.bonds, &cells.plaquettes})
        for (const Cell& c : *group)
            out += std::to_string(c.index) + "," + std::to_string(c.coord[0]) + "," + std::to_string(c.coord[1]) + "," +
                   std::to_string(c.coord[2]) + "," + std::to_string(c.axis) + "," + cell_kind_name(c.kind) + "\n";
    return out;
}

/// L-blocking of a fine torus: block B(y) = {x : floor(x/L) = y}.
class Blocking {
public:
    Blocking(Torus fine, int L) : fine_(fine), L_(L) {
        if (L < 2 || fine.side() % L != 0)
            throw Error("bad_spec", "fine side must be a multiple of the block size");
        coarse_ = Torus(fine.spec().blocked());
    }

    const Torus& fine() const { return fine_; }
    const Torus& coarse() const { return coarse_; }
    int L() const { return L_; }
    std::size_t block_volume() const { return std::size_t(L_) * L_ * L_; }

    std::size_t block_of(std::size_t x) const {
        Coord c = fine_.coord(x);
        return coarse_.index({c[0] / L_, c[1] / L_, c[2] / L_});
    }
    std::vector<std::size_t> sites_in_block(std::size_t y) const {
        Coord c = coarse_.coord(y);
        std::vector<std::size_t> out;
        out.reserve(block_volume());
        for (int i = 0; i < L_; ++i)
            for (int j = 0; j < L_; ++j)
                for (int k = 0; k < L_; ++k)
                    out.push_back(fine_.index({c[0] * L_ + i, c[1] * L_ + j, c[2] * L_ + k}));
        return out;
    }
    /// Least-coordinate site nearest the geometric block center.
    std::size_t center(std::size_t y) const {
        Coord c = coarse_.coord(y);
        int o = (L_ - 1) / 2;
        return fine_.index({c[0] * L_ + o, c[1] * L_ + o, c[2] * L_ + o});
    }

private:
    Torus fine_;
    Torus coarse_;
    int L_;
};

/// Paving of a torus by M-cubes, M = L^m lattice units.
class CubeGrid {
public:
    CubeGrid(Torus t, int M_exp) : torus_(t), M_exp_(M_exp) {
        M_ = int(ipow(t.spec().base_scale, M_exp));
        if (M_exp < 0 || t.side() % M_ != 0) throw Error("bad_spec", "M must divide the torus side");
        per_axis_ = t.side() / M_;
    }
    const Torus& torus() const { return torus_; }
    int M() const { return M_; }
    int M_exp() const { return M_exp_; }
    int per_axis() const { return per_axis_; }
    std::size_t cube_count() const { return std::size_t(per_axis_) * per_axis_ * per_axis_; }

    Coord cube_coord(std::size_t c) const {
        int s = per_axis_;
        return {int(c / (s * s)), int((c / s) % s), int(c % s)};
    }
    std::size_t cube_index(const Coord& c) const {
        auto w = [&](int v) { return ((v % per_axis_) + per_axis_) % per_axis_; };
        return (std::size_t(w(c[0])) * per_axis_ + w(c[1])) * per_axis_ + w(c[2]);
    }
    std::size_t cube_of_site(std::size_t x) const {
        Coord c = torus_.coord(x);
        return cube_index({c[0] / M_, c[1] / M_, c[2] / M_});
    }
    std::vector<std::size_t> sites_in_cube(std::size_t cube) const {
        Coord c = cube_coord(cube);
        std::vector<std::size_t> out;
        for (int i = 0; i < M_; ++i)
            for (int j = 0; j < M_; ++j)
                for (int k = 0; k < M_; ++k)
                    out.push_back(torus_.index({c[0] * M_ + i, c[1] * M_ + j, c[2] * M_ + k}));
        return out;
    }
    /// Face neighbours (deduplicated; small grids wrap onto themselves).
    std::vector<std::size_t> neighbours(std::size_t cube) const {
        std::vector<std::size_t> out;
        Coord c = cube_coord(cube);
        for (int mu = 0; mu < 3; ++mu)
            for (int s : {-1, 1}) {
                Coord d = c;
                d[mu] += s;
                std::size_t n = cube_index(d);
                if (n != cube && std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
            }
        return out;
    }
    /// Center-to-center torus distance in units of M.
    double center_distance(std::size_t a, std::size_t b) const {
        Coord ca = cube_coord(a), cb = cube_coord(b);
        double s = 0;
        for (int mu = 0; mu < 3; ++mu) {
            int d = std::abs(ca[mu] - cb[mu]);
            d = std::min(d, per_axis_ - d);
            s += double(d) * d;
        }
        return std::sqrt(s);
    }

    friend bool operator==(const CubeGrid& a, const CubeGrid& b) {
        return a.torus_ == b.torus_ && a.M_exp_ == b.M_exp_;
    }

private:
    Torus torus_;
    int M_exp_;
    int M_;
    int per_axis_;
};

/// A set of M-cubes (sorted, unique).  Connectedness is a property, not an
/// invariant of the type: cluster expansions also produce non-connected sets.
struct Polymer {
    std::vector<std::size_t> cubes;

    Polymer() = default;
    explicit Polymer(std::vector<std::size_t> c) : cubes(std::move(c)) {
        std::sort(cubes.begin(), cubes.end());
        cubes.erase(std::unique(cubes.begin(), cubes.end()), cubes.end());
    }
    std::size_t size() const { return cubes.size(); }
    bool empty() const { return cubes.empty(); }
    bool contains(std::size_t c) const { return std::binary_search(cubes.begin(), cubes.end(), c); }
    bool subset_of(const Polymer& o) const {
        return std::includes(o.cubes.begin(), o.cubes.end(), cubes.begin(), cubes.end());
    }
    Polymer unite(const Polymer& o) const {
        std::vector<std::size_t> u;
        std::set_union(cubes.begin(), cubes.end(), o.cubes.begin(), o.cubes.end(), std::back_inserter(u));
        return Polymer(std::move(u));
    }
    friend auto operator<=>(const Polymer&, const Polymer&) = default;
};

inline bool is_connected(const Polymer& X, const CubeGrid& grid) {
    if (X.empty()) return false;
    std::vector<std::size_t> stack{X.cubes.front()};
    std::vector<char> seen(X.size(), 0);
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
        std::size_t c = stack.back();
        stack.pop_back();
        for (std::size_t n : grid.neighbours(c)) {
            auto it = std::lower_bound(X.cubes.begin(), X.cubes.end(), n);
            if (it == X.cubes.end() || *it != n) continue;
            auto k = std::size_t(it - X.cubes.begin());
            if (!seen[k]) {
                seen[k] = 1;
                ++count;
                stack.push_back(n);
            }
        }
    }
    return count == X.size();
}

namespace detail {

inline double mst_length(const std::vector<std::size_t>& cubes, const CubeGrid& grid) {
    const std::size_t n = cubes.size();
    if (n < 2) return 0.0;
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::vector<char> in(n, 0);
    best[0] = 0;
    double total = 0;
    for (std::size_t it = 0; it < n; ++it) {
        std::size_t u = n;
        for (std::size_t i = 0; i < n; ++i)
            if (!in[i] && (u == n || best[i] < best[u])) u = i;
        in[u] = 1;
        total += best[u];
        for (std::size_t i = 0; i < n; ++i)
            if (!in[i]) best[i] = std::min(best[i], grid.center_distance(cubes[u], cubes[i]));
    }
    return total;
}

// Steiner minimal tree for three points with side lengths a, b, c.
inline double steiner3(double a, double b, double c) {
    double s2 = a * a + b * b + c * c;
    auto angle_ge_120 = [](double opp, double x, double y) {
        // cos(angle opposite opp) <= -1/2
        return x > 0 && y > 0 && (x * x + y * y - opp * opp) / (2 * x * y) <= -0.5;
    };
    if (angle_ge_120(a, b, c) || angle_ge_120(b, a, c) || angle_ge_120(c, a, b))
        return a + b + c - std::max({a, b, c});
    double s = (a + b + c) / 2;
    double area = std::sqrt(std::max(0.0, s * (s - a) * (s - b) * (s - c)));
    return std::sqrt(s2 / 2 + 2 * std::sqrt(3.0) * area);
}

}  // namespace detail

/// d_M(X): length of the joining tree over cube centers divided by M.
/// Exact Steiner length for up to three cubes, minimum spanning tree otherwise.
inline double tree_distance_dM(const Polymer& X, const CubeGrid& grid) {
    if (X.empty()) throw Error("bad_polymer", "tree distance of an empty polymer");
    if (X.size() == 3) {
        double a = grid.center_distance(X.cubes[1], X.cubes[2]);
        double b = grid.center_distance(X.cubes[0], X.cubes[2]);
        double c = grid.center_distance(X.cubes[0], X.cubes[1]);
        return detail::steiner3(a, b, c);
    }
    return detail::mst_length(X.cubes, grid);
}

/// Ybar: the union of all LM-cubes meeting Y, expressed on the LM grid.
inline Polymer reblock_image(const Polymer& Y, const CubeGrid& fine, const CubeGrid& coarse) {
    const int L = fine.torus().spec().base_scale;
    if (coarse.M() != fine.M() * L || coarse.torus().side() != fine.torus().side())
        throw Error("bad_spec", "coarse grid must be the LM paving of the same torus");
    std::vector<std::size_t> out;
    for (std::size_t c : Y.cubes) {
        Coord k = fine.cube_coord(c);
        out.push_back(coarse.cube_index({k[0] / L, k[1] / L, k[2] / L}));
    }
    return Polymer(std::move(out));
}

/// All connected M-polymers Y with reblock_image(Y) == X.
inline std::vector<Polymer> reblock_preimages(const Polymer& X, const CubeGrid& fine,
                                              const CubeGrid& coarse) {
    std::vector<std::size_t> pool;
    for (std::size_t c = 0; c < fine.cube_count(); ++c) {
        Polymer img = reblock_image(Polymer({c}), fine, coarse);
        if (X.contains(img.cubes.front())) pool.push_back(c);
    }
    if (pool.size() > 24) throw Error("overflow", "too many candidate cubes for preimage enumeration");
    std::vector<Polymer> out;
    for (std::uint64_t mask = 1; mask < (std::uint64_t(1) << pool.size()); ++mask) {
        std::vector<std::size_t> cs;
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (mask >> i & 1) cs.push_back(pool[i]);
        Polymer Y(std::move(cs));
        if (reblock_image(Y, fine, coarse) == X && is_connected(Y, fine)) out.push_back(std::move(Y));
    }
    return out;
}

}  // namespace blockrg
