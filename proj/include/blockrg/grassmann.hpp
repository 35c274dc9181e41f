#pragma once

// Finite Grassmann algebra over Dirac pairs (psibar, psi) with sparse
// canonical-form coefficients, Berezin integration and Gaussian (Wick)
// integration.

#include <bit>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "blockrg/lattice.hpp"

namespace blockrg {

using Mask = std::uint64_t;
inline constexpr int kMaxGenerators = 64;

struct Generator {
    std::size_t site = 0;
    int spin = 0;
    bool bar = false;
};

/// Canonical generator order: all bar generators first, then all unbarred,
/// each block lexicographic in (site, spin).  Pair i is (bar(i), psi(i)).
class GrassmannUniverse {
public:
    GrassmannUniverse() = default;

    /// Pairs labelled by (site, spin); order given is the canonical pair order.
    explicit GrassmannUniverse(std::vector<std::pair<std::size_t, int>> pairs) : pairs_(std::move(pairs)) {
        if (2 * pairs_.size() > std::size_t(kMaxGenerators))
            throw Error("overflow", "Grassmann universe limited to 64 generators");
    }
    static GrassmannUniverse lattice(std::size_t sites, int spins = 2) {
        std::vector<std::pair<std::size_t, int>> p;
        for (std::size_t x = 0; x < sites; ++x)
            for (int a = 0; a < spins; ++a) p.emplace_back(x, a);
        return GrassmannUniverse(std::move(p));
    }
    static GrassmannUniverse anonymous(std::size_t pairs) { return lattice(pairs, 1); }

    std::size_t pairs() const { return pairs_.size(); }
    int size() const { return int(2 * pairs_.size()); }
    int bar(std::size_t pair) const { return int(pair); }
    int psi(std::size_t pair) const { return int(pairs_.size() + pair); }
    Generator generator(int g) const {
        bool b = std::size_t(g) < pairs_.size();
        const auto& p = pairs_[b ? g : g - pairs_.size()];
        return {p.first, p.second, b};
    }
    std::size_t pair_of(int g) const { return std::size_t(g) % pairs_.size(); }
    Mask pair_mask(std::size_t pair) const { return (Mask(1) << bar(pair)) | (Mask(1) << psi(pair)); }

    friend bool operator==(const GrassmannUniverse&, const GrassmannUniverse&) = default;

private:
    std::vector<std::pair<std::size_t, int>> pairs_;
};

namespace detail {

/// Sign of m1 * m2 relative to the canonical (ascending) product of m1|m2.
inline int merge_sign(Mask a, Mask b) {
    int inversions = 0;
    while (b) {
        int j = std::countr_zero(b);
        b &= b - 1;
        inversions += std::popcount(j + 1 < 64 ? (a >> (j + 1)) : Mask(0));
    }
    return (inversions & 1) ? -1 : 1;
}

/// Parity of the permutation sorting seq ascending (entries distinct).
inline int sequence_sign(const std::vector<int>& seq) {
    int inv = 0;
    for (std::size_t i = 0; i < seq.size(); ++i)
        for (std::size_t j = i + 1; j < seq.size(); ++j)
            if (seq[i] > seq[j]) ++inv;
    return (inv & 1) ? -1 : 1;
}

inline std::vector<int> bits(Mask m) {
    std::vector<int> out;
    while (m) {
        out.push_back(std::countr_zero(m));
        m &= m - 1;
    }
    return out;
}

}  // namespace detail

template <class Scalar>
class BasicGrassmann {
public:
    using Terms = std::map<Mask, Scalar>;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    BasicGrassmann() = default;
    explicit BasicGrassmann(std::shared_ptr<const GrassmannUniverse> u, int degree_cap = kMaxGenerators)
        : universe_(std::move(u)), degree_cap_(degree_cap) {}

    static BasicGrassmann constant(std::shared_ptr<const GrassmannUniverse> u, Scalar c) {
        BasicGrassmann r(std::move(u));
        r.add_term(0, c);
        return r;
    }
    /// Single generator g.
    static BasicGrassmann generator(std::shared_ptr<const GrassmannUniverse> u, int g, Scalar c = Scalar(1)) {
        BasicGrassmann r(std::move(u));
        r.add_term(Mask(1) << g, c);
        return r;
    }
    /// Ordered product of generators with coefficient c (any order; sign handled).
    static BasicGrassmann monomial(std::shared_ptr<const GrassmannUniverse> u, const std::vector<int>& gens,
                                   Scalar c = Scalar(1)) {
        BasicGrassmann r(u);
        Mask m = 0;
        for (int g : gens) {
            if (m >> g & 1) return r;  // nilpotent
            m |= Mask(1) << g;
        }
        r.add_term(m, c * Scalar(detail::sequence_sign(gens)));
        return r;
    }
    /// <psibar, M psi> = sum_ij psibar_i M_ij psi_j over the universe's pairs.
    static BasicGrassmann bilinear(std::shared_ptr<const GrassmannUniverse> u, const Matrix& M) {
        BasicGrassmann r(u);
        for (Eigen::Index i = 0; i < M.rows(); ++i)
            for (Eigen::Index j = 0; j < M.cols(); ++j)
                if (M(i, j) != Scalar(0))
                    r.add_term((Mask(1) << u->bar(i)) | (Mask(1) << u->psi(j)), M(i, j));
        return r;
    }

    const std::shared_ptr<const GrassmannUniverse>& universe() const { return universe_; }
    const Terms& terms() const { return terms_; }
    int degree_cap() const { return degree_cap_; }
    void set_degree_cap(int cap) { degree_cap_ = cap; }
    bool is_zero() const { return terms_.empty(); }
    int max_degree() const {
        int d = -1;
        for (const auto& [m, c] : terms_) d = std::max(d, std::popcount(m));
        return d;
    }
    Scalar coefficient(Mask m) const {
        auto it = terms_.find(m);
        return it == terms_.end() ? Scalar(0) : it->second;
    }
    Scalar constant_term() const { return coefficient(0); }

    void add_term(Mask m, Scalar c) {
        if (c == Scalar(0) || std::popcount(m) > degree_cap_) return;
        auto [it, inserted] = terms_.emplace(m, c);
        if (!inserted) {
            it->second += c;
            if (it->second == Scalar(0)) terms_.erase(it);
        }
    }

    BasicGrassmann& operator+=(const BasicGrassmann& o) {
        check_universe(o);
        for (const auto& [m, c] : o.terms_) add_term(m, c);
        return *this;
    }
    BasicGrassmann& operator-=(const BasicGrassmann& o) {
        check_universe(o);
        for (const auto& [m, c] : o.terms_) add_term(m, -c);
        return *this;
    }
    BasicGrassmann& operator*=(Scalar s) {
        if (s == Scalar(0)) {
            terms_.clear();
            return *this;
        }
        for (auto& [m, c] : terms_) c *= s;
        return *this;
    }
    friend BasicGrassmann operator+(BasicGrassmann a, const BasicGrassmann& b) { return a += b; }
    friend BasicGrassmann operator-(BasicGrassmann a, const BasicGrassmann& b) { return a -= b; }
    friend BasicGrassmann operator*(BasicGrassmann a, Scalar s) { return a *= s; }
    friend BasicGrassmann operator*(Scalar s, BasicGrassmann a) { return a *= s; }

    friend BasicGrassmann operator*(const BasicGrassmann& a, const BasicGrassmann& b) {
        a.check_universe(b);
        BasicGrassmann r(a.universe_, std::min(a.degree_cap_, b.degree_cap_));
        for (const auto& [ma, ca] : a.terms_)
            for (const auto& [mb, cb] : b.terms_) {
                if (ma & mb) continue;
                if (std::popcount(ma) + std::popcount(mb) > r.degree_cap_) continue;
                r.add_term(ma | mb, ca * cb * Scalar(detail::merge_sign(ma, mb)));
            }
        return r;
    }

    /// Drop coefficients below tol in magnitude.
    BasicGrassmann& prune(double tol) {
        for (auto it = terms_.begin(); it != terms_.end();)
            it = std::abs(it->second) <= tol ? terms_.erase(it) : std::next(it);
        return *this;
    }

    /// Weighted l1 norm.  For E = sum_n 1/n! sum E_n(x_1..x_n) Psi(x_1)...Psi(x_n)
    /// with antisymmetric E_n, each stored canonical coefficient c of degree n
    /// stands for n! kernel entries of magnitude |c|, so ||E||_h = sum h^n |c|.
    /// Lattice weights eps^3 per point are absorbed in the stored coefficients.
    double h_norm(double h) const {
        double s = 0;
        for (const auto& [m, c] : terms_) s += std::pow(h, std::popcount(m)) * std::abs(c);
        return s;
    }

    /// Raw coefficient of the full canonical product of all generators.
    Scalar berezin_top() const {
        int n = universe_ ? universe_->size() : 0;
        Mask full = n == 64 ? ~Mask(0) : (Mask(1) << n) - 1;
        return coefficient(full);
    }

    /// Berezin integral normalised so that prod_i (psi_i psibar_i) integrates to 1.
    Scalar berezin_integral() const {
        std::vector<std::size_t> all(universe_->pairs());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return integrate_pairs(all).constant_term();
    }

    /// Partial Berezin integral over the given pairs.  Integrated generators are
    /// moved to the right of the remaining ones before evaluation.
    BasicGrassmann integrate_pairs(const std::vector<std::size_t>& pairs) const {
        Mask sub = 0;
        std::vector<int> pair_seq;
        for (std::size_t p : pairs) {
            sub |= universe_->pair_mask(p);
            pair_seq.push_back(universe_->psi(p));
            pair_seq.push_back(universe_->bar(p));
        }
        const int full_sign = detail::sequence_sign(pair_seq);
        BasicGrassmann r(universe_, degree_cap_);
        for (const auto& [m, c] : terms_) {
            if ((m & sub) != sub) continue;
            Mask ext = m & ~sub;
            int s = detail::merge_sign(ext, sub) * full_sign;
            r.add_term(ext, c * Scalar(s));
        }
        return r;
    }

    /// Normalised Gaussian integral over the given pairs with covariance
    /// Gamma (indexed in the order of `pairs`): int W_i Wbar_j dmu = Gamma_ij,
    /// higher moments by Wick's theorem (determinants of Gamma sub-blocks).
    BasicGrassmann gaussian_integrate(const Matrix& Gamma, const std::vector<std::size_t>& pairs) const {
        if (Gamma.rows() != Eigen::Index(pairs.size()) || Gamma.cols() != Gamma.rows())
            throw Error("bad_covariance", "covariance dimension does not match integrated pairs");
        Eigen::FullPivLU<Matrix> lu(Gamma);
        if (!lu.isInvertible()) throw Error("singular_covariance", "Grassmann covariance is singular");
        Mask sub = 0;
        std::vector<int> local(64, -1);
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            sub |= universe_->pair_mask(pairs[k]);
            local[universe_->bar(pairs[k])] = int(k);
            local[universe_->psi(pairs[k])] = int(k);
        }
        const int np = int(universe_->pairs());
        BasicGrassmann r(universe_, degree_cap_);
        for (const auto& [m, c] : terms_) {
            Mask in = m & sub;
            Mask ext = m & ~sub;
            if (in == 0) {
                r.add_term(ext, c);
                continue;
            }
            std::vector<int> bars, psis;
            for (int g : detail::bits(in)) (g < np ? bars : psis).push_back(g);
            if (bars.size() != psis.size()) continue;
            // canonical ascending = sign * (W_i1 Wbar_j1)(W_i2 Wbar_j2)...
            std::vector<int> seq;
            const std::size_t k = bars.size();
            Matrix sub_gamma(k, k);
            for (std::size_t a = 0; a < k; ++a) {
                seq.push_back(psis[a]);
                seq.push_back(bars[a]);
                for (std::size_t b = 0; b < k; ++b)
                    sub_gamma(a, b) = Gamma(local[psis[a]], local[bars[b]]);
            }
            Scalar val = k == 0 ? Scalar(1) : sub_gamma.determinant();
            int s = detail::sequence_sign(seq) * detail::merge_sign(ext, in);
            r.add_term(ext, c * val * Scalar(s));
        }
        return r;
    }

    /// exp(E).  The series terminates because generators are nilpotent.
    BasicGrassmann exp_truncated() const {
        Scalar c0 = constant_term();
        BasicGrassmann nil = *this;
        nil.terms_.erase(0);
        BasicGrassmann result = constant(universe_, Scalar(1));
        result.degree_cap_ = degree_cap_;
        BasicGrassmann term = result;
        for (int k = 1; !term.is_zero() && k <= kMaxGenerators + 1; ++k) {
            term = term * nil;
            term *= Scalar(1.0 / k);
            result += term;
        }
        if (c0 != Scalar(0)) result *= std::exp(c0);
        return result;
    }

    /// log(E) for E with invertible constant term.
    BasicGrassmann log_truncated() const {
        Scalar c0 = constant_term();
        if (c0 == Scalar(0)) throw Error("not_invertible", "log of an element with zero constant term");
        BasicGrassmann nil = *this;
        nil.terms_.erase(0);
        nil *= Scalar(1) / c0;
        BasicGrassmann result(universe_, degree_cap_);
        BasicGrassmann power = constant(universe_, Scalar(1));
        for (int k = 1; k <= kMaxGenerators + 1; ++k) {
            power = power * nil;
            if (power.is_zero()) break;
            result += power * Scalar((k % 2 ? 1.0 : -1.0) / k);
        }
        result.add_term(0, std::log(c0));
        return result;
    }

    nlohmann::json to_json() const {
        nlohmann::json terms = nlohmann::json::array();
        for (const auto& [m, c] : terms_) {
            nlohmann::json t;
            t["indices"] = detail::bits(m);
            if constexpr (std::is_same_v<Scalar, std::complex<double>>) {
                t["re"] = c.real();
                t["im"] = c.imag();
            } else {
                t["re"] = double(c);
                t["im"] = 0.0;
            }
            terms.push_back(std::move(t));
        }
        return {{"format", "blockrg-grassmann-v1"},
                {"generators", universe_ ? universe_->size() : 0},
                {"terms", std::move(terms)}};
    }
    static BasicGrassmann from_json(const nlohmann::json& j, std::shared_ptr<const GrassmannUniverse> u) {
        if (j.at("format") != "blockrg-grassmann-v1") throw Error("bad_format", "unknown Grassmann format");
        if (j.at("generators").get<int>() != u->size())
            throw Error("universe_mismatch", "generator count differs from universe");
        BasicGrassmann r(u);
        for (const auto& t : j.at("terms")) {
            Mask m = 0;
            for (int g : t.at("indices")) m |= Mask(1) << g;
            if constexpr (std::is_same_v<Scalar, std::complex<double>>)
                r.add_term(m, Scalar(t.at("re").get<double>(), t.at("im").get<double>()));
            else
                r.add_term(m, Scalar(t.at("re").get<double>()));
        }
        return r;
    }

    friend bool operator==(const BasicGrassmann& a, const BasicGrassmann& b) { return a.terms_ == b.terms_; }

private:
    void check_universe(const BasicGrassmann& o) const {
        if (universe_ && o.universe_ && universe_ != o.universe_ && !(*universe_ == *o.universe_))
            throw Error("universe_mismatch", "Grassmann elements from different universes");
    }

    std::shared_ptr<const GrassmannUniverse> universe_;
    int degree_cap_ = kMaxGenerators;
    Terms terms_;
};

using GrassmannPoly = BasicGrassmann<std::complex<double>>;
using RealGrassmannPoly = BasicGrassmann<double>;

/// Berezin integral of prod_k factors[k], pruning partial products that can
/// no longer reach the top element.  Used for large Dirac-pair determinants.
template <class Scalar>
Scalar berezin_integral_of_product(const std::vector<BasicGrassmann<Scalar>>& factors) {
    if (factors.empty()) return Scalar(0);
    auto u = factors.front().universe();
    const int n = u->size();
    // generators still available from factors k..end
    std::vector<Mask> avail(factors.size() + 1, 0);
    for (std::size_t k = factors.size(); k-- > 0;) {
        Mask m = 0;
        for (const auto& [mm, c] : factors[k].terms()) m |= mm;
        avail[k] = avail[k + 1] | m;
    }
    Mask full = n == 64 ? ~Mask(0) : (Mask(1) << n) - 1;
    BasicGrassmann<Scalar> acc = BasicGrassmann<Scalar>::constant(u, Scalar(1));
    for (std::size_t k = 0; k < factors.size(); ++k) {
        BasicGrassmann<Scalar> next = acc * factors[k];
        BasicGrassmann<Scalar> pruned(u);
        for (const auto& [m, c] : next.terms())
            if ((m | avail[k + 1]) == full) pruned.add_term(m, c);
        acc = std::move(pruned);
    }
    return acc.berezin_integral();
}

/// int exp(-<psibar, M psi>) Dpsi via the factorised product of pair factors.
template <class Derived>
auto berezin_gaussian(const Eigen::MatrixBase<Derived>& M) {
    using Scalar = typename Derived::Scalar;
    const auto n = std::size_t(M.rows());
    auto u = std::make_shared<const GrassmannUniverse>(GrassmannUniverse::anonymous(n));
    std::vector<BasicGrassmann<Scalar>> factors;
    for (std::size_t i = 0; i < n; ++i) {
        // exp(-psibar_i (M psi)_i) = 1 - psibar_i (M psi)_i
        BasicGrassmann<Scalar> f = BasicGrassmann<Scalar>::constant(u, Scalar(1));
        for (std::size_t j = 0; j < n; ++j)
            if (M(i, j) != Scalar(0))
                f.add_term((Mask(1) << u->bar(i)) | (Mask(1) << u->psi(j)), -M(i, j));
        factors.push_back(std::move(f));
    }
    return berezin_integral_of_product(factors);
}

}  // namespace blockrg
