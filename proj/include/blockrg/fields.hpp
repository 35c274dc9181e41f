#pragma once

// Real (noncompact) abelian gauge fields on bonds, field strengths, gauge
// transformations and the scale maps between lattices.

#include <complex>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "blockrg/lattice.hpp"

namespace blockrg {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

inline constexpr int kSpinDim = 2;

/// A(b) on forward-oriented bonds; A(-b) = -A(b) is implied by OrientedBond::sign.
class GaugeField {
public:
    GaugeField() = default;
    explicit GaugeField(Torus t) : torus_(t), values_(Vec::Zero(Eigen::Index(t.bonds()))) {}
    GaugeField(Torus t, Vec values) : torus_(t), values_(std::move(values)) {
        if (values_.size() != Eigen::Index(t.bonds())) throw Error("bad_field", "gauge field size mismatch");
    }

    const Torus& torus() const { return torus_; }
    const Vec& values() const { return values_; }
    Vec& values() { return values_; }
    double operator[](std::size_t b) const { return values_[Eigen::Index(b)]; }
    double& operator[](std::size_t b) { return values_[Eigen::Index(b)]; }
    double operator()(const OrientedBond& ob) const { return ob.sign * values_[Eigen::Index(ob.bond)]; }

    GaugeField& operator+=(const GaugeField& o) {
        values_ += o.values_;
        return *this;
    }
    friend GaugeField operator+(GaugeField a, const GaugeField& b) { return a += b; }
    friend GaugeField operator-(GaugeField a, const GaugeField& b) {
        a.values_ -= b.values_;
        return a;
    }
    friend GaugeField operator*(double s, GaugeField a) {
        a.values_ *= s;
        return a;
    }

private:
    Torus torus_;
    Vec values_;
};

struct FieldStrength {
    Torus torus;
    Vec values;
};

/// Line integral eps * sum A(b) along an oriented path.
inline double line_integral(const GaugeField& A, const std::vector<OrientedBond>& path) {
    double s = 0;
    for (const auto& ob : path) s += A(ob);
    return A.torus().spacing() * s;
}

/// dA(p) = eps^{-1} sum_{b in dp} A(b).
inline FieldStrength field_strength(const GaugeField& A) {
    const Torus& t = A.torus();
    FieldStrength F{t, Vec(Eigen::Index(t.plaquettes()))};
    const double inv = 1.0 / t.spacing();
    for (std::size_t p = 0; p < t.plaquettes(); ++p) {
        double s = 0;
        for (const auto& ob : t.plaquette_boundary(p)) s += A(ob);
        F.values[Eigen::Index(p)] = inv * s;
    }
    return F;
}

/// ||dA||^2 = sum_p eps^3 |dA(p)|^2.
inline double strength_norm_sq(const GaugeField& A) {
    double e3 = std::pow(A.torus().spacing(), 3);
    return e3 * field_strength(A).values.squaredNorm();
}

/// Plaquette-by-bond matrix of d (includes eps^{-1}).
inline Mat curl_matrix(const Torus& t) {
    Mat d = Mat::Zero(Eigen::Index(t.plaquettes()), Eigen::Index(t.bonds()));
    const double inv = 1.0 / t.spacing();
    for (std::size_t p = 0; p < t.plaquettes(); ++p)
        for (const auto& ob : t.plaquette_boundary(p)) d(Eigen::Index(p), Eigen::Index(ob.bond)) += inv * ob.sign;
    return d;
}

/// Quadratic form K with ||dA||^2 = A^T K A.
inline Mat strength_form(const Torus& t) {
    Mat d = curl_matrix(t);
    return std::pow(t.spacing(), 3) * (d.transpose() * d);
}

/// Bond-by-site matrix of the lattice gradient (d omega)(x,x+e) = eps^{-1}(omega(x+e)-omega(x)).
inline Mat gradient_matrix(const Torus& t) {
    Mat g = Mat::Zero(Eigen::Index(t.bonds()), Eigen::Index(t.sites()));
    const double inv = 1.0 / t.spacing();
    for (std::size_t x = 0; x < t.sites(); ++x)
        for (int mu = 0; mu < 3; ++mu) {
            auto b = Eigen::Index(t.bond(x, mu));
            g(b, Eigen::Index(t.shift(x, mu))) += inv;
            g(b, Eigen::Index(x)) -= inv;
        }
    return g;
}

inline GaugeField gradient(const Torus& t, const Vec& omega) { return GaugeField(t, gradient_matrix(t) * omega); }

inline GaugeField gauge_transform(const GaugeField& A, const Vec& omega) {
    return A + gradient(A.torus(), omega);
}

/// Exact bookkeeping of a power L^{twice_exp/2}: squares are rational.
struct HalfPower {
    int base = 2;
    int twice_exp = 0;

    double value() const { return std::pow(double(base), 0.5 * twice_exp); }
    /// Exponent of L in the square.
    int squared_exp() const { return twice_exp; }
    HalfPower operator*(const HalfPower& o) const { return {base, twice_exp + o.twice_exp}; }
};

/// Gauge amplitude factor L^{-j/2} for a relabel by L^j.
inline HalfPower gauge_scale_factor(int L, int j) { return {L, -j}; }
inline HalfPower fermion_scale_factor(int L, int j) { return {L, -2 * j}; }

/// Exponent of L acquired by ||dA||^2 under the gauge relabel by L^j:
/// amplitude^2 * (eps^{-1})^2 * eps^3.
inline int strength_norm_scaling_exp(int j) {
    const int amplitude = gauge_scale_factor(2, j).squared_exp();
    const int inverse_spacing_sq = -2 * j;
    const int volume = 3 * j;
    return amplitude + inverse_spacing_sq + volume;
}

/// A_{L^j}(b) = L^{-j/2} A(b / L^j): same index structure, spacing times L^j.
inline GaugeField scale_gauge(const GaugeField& A, int j) {
    const Torus& t = A.torus();
    Torus s(t.spec().scaled(j));
    return GaugeField(s, gauge_scale_factor(t.spec().base_scale, j).value() * A.values());
}

/// Psi_{L^j}(x) = L^{-j} Psi(x / L^j).
inline CVec scale_fermion(const CVec& psi, int L, int j) { return fermion_scale_factor(L, j).value() * psi; }

inline nlohmann::json to_json(const GaugeField& A) {
    const auto& s = A.torus().spec();
    return {{"format", "blockrg-gauge-v1"},
            {"base_scale", s.base_scale},
            {"spacing_exp", s.spacing_exp},
            {"extent_exp", s.extent_exp},
            {"values", std::vector<double>(A.values().data(), A.values().data() + A.values().size())}};
}

inline GaugeField gauge_from_json(const nlohmann::json& j) {
    if (j.at("format") != "blockrg-gauge-v1") throw Error("bad_format", "unknown gauge field format");
    Torus t({j.at("base_scale").get<int>(), j.at("spacing_exp").get<int>(), j.at("extent_exp").get<int>()});
    auto v = j.at("values").get<std::vector<double>>();
    return GaugeField(t, Eigen::Map<Vec>(v.data(), Eigen::Index(v.size())));
}

inline void write_csv(const GaugeField& A, const std::string& path) {
    std::ofstream out(path);
    out << "# blockrg-gauge-v1\nbond,x0,x1,x2,axis,value\n";
    out.precision(17);
    const Torus& t = A.torus();
    for (std::size_t b = 0; b < t.bonds(); ++b) {
        Coord c = t.coord(t.bond_site(b));
        out << b << ',' << c[0] << ',' << c[1] << ',' << c[2] << ',' << t.bond_axis(b) << ',' << A[b] << '\n';
    }
}

}  // namespace blockrg
