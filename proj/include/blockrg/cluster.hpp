#pragma once

// Mixed boson/Grassmann polynomials and the truncated cluster (Ursell)
// expansion of log int exp(sum_X E(X)) dmu_C(Z) dmu_Gamma(W).

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <vector>

#include "blockrg/polymer.hpp"

namespace blockrg {

using BosonExponents = std::vector<std::uint8_t>;

/// sum_k Z^{alpha_k} G_k with G_k Grassmann polynomials (external psi and fluctuation W).
class MixedPoly {
public:
    MixedPoly() = default;
    MixedPoly(std::shared_ptr<const GrassmannUniverse> u, std::size_t bosons) : u_(std::move(u)), nb_(bosons) {}

    static MixedPoly grassmann(std::size_t bosons, const GrassmannPoly& g) {
        MixedPoly r(g.universe(), bosons);
        r.add(BosonExponents(bosons, 0), g);
        return r;
    }
    /// c * Z_i.
    static MixedPoly boson(std::shared_ptr<const GrassmannUniverse> u, std::size_t bosons, std::size_t i, cd c = 1.0) {
        MixedPoly r(u, bosons);
        BosonExponents a(bosons, 0);
        a[i] = 1;
        r.add(a, GrassmannPoly::constant(u, c));
        return r;
    }

    const std::map<BosonExponents, GrassmannPoly>& terms() const { return terms_; }
    std::size_t bosons() const { return nb_; }
    const std::shared_ptr<const GrassmannUniverse>& universe() const { return u_; }
    bool is_zero() const { return terms_.empty(); }

    void add(const BosonExponents& a, const GrassmannPoly& g) {
        if (g.is_zero()) return;
        auto it = terms_.find(a);
        if (it == terms_.end()) {
            terms_.emplace(a, g);
            return;
        }
        it->second += g;
        if (it->second.is_zero()) terms_.erase(it);
    }

    MixedPoly& operator+=(const MixedPoly& o) {
        for (const auto& [a, g] : o.terms_) add(a, g);
        return *this;
    }
    friend MixedPoly operator+(MixedPoly a, const MixedPoly& b) { return a += b; }
    friend MixedPoly operator*(cd s, MixedPoly a) {
        for (auto& [k, g] : a.terms_) g *= s;
        return a;
    }
    friend MixedPoly operator*(const MixedPoly& a, const MixedPoly& b) {
        MixedPoly r(a.u_ ? a.u_ : b.u_, std::max(a.nb_, b.nb_));
        for (const auto& [ea, ga] : a.terms_)
            for (const auto& [eb, gb] : b.terms_) {
                BosonExponents e(r.nb_, 0);
                for (std::size_t i = 0; i < r.nb_; ++i) e[i] = std::uint8_t(ea[i] + eb[i]);
                r.add(e, ga * gb);
            }
        return r;
    }

    int boson_degree() const {
        int d = 0;
        for (const auto& [e, g] : terms_) {
            int s = 0;
            for (auto k : e) s += k;
            d = std::max(d, s);
        }
        return d;
    }

    /// Grassmann polynomial at a fixed boson configuration.
    GrassmannPoly evaluate(const Vec& z) const {
        GrassmannPoly r(u_);
        for (const auto& [e, g] : terms_) {
            double m = 1;
            for (std::size_t i = 0; i < nb_; ++i) m *= std::pow(z[Eigen::Index(i)], int(e[i]));
            r += g * cd(m);
        }
        return r;
    }

    double h_norm(double h) const {
        double s = 0;
        for (const auto& [e, g] : terms_) s += g.h_norm(h);
        return s;
    }

private:
    std::shared_ptr<const GrassmannUniverse> u_;
    std::size_t nb_ = 0;
    std::map<BosonExponents, GrassmannPoly> terms_;
};

/// Gaussian moments E[Z^alpha] for covariance C by Isserlis' theorem, memoized.
class IsserlisMoments {
public:
    explicit IsserlisMoments(Mat C) : C_(std::move(C)) {}

    double operator()(const BosonExponents& a) {
        auto it = cache_.find(a);
        if (it != cache_.end()) return it->second;
        int total = 0;
        for (auto k : a) total += k;
        double v;
        if (total == 0)
            v = 1.0;
        else if (total % 2)
            v = 0.0;
        else {
            std::size_t first = 0;
            while (a[first] == 0) ++first;
            BosonExponents rest = a;
            --rest[first];
            v = 0;
            for (std::size_t j = 0; j < rest.size(); ++j) {
                if (rest[j] == 0) continue;
                BosonExponents r2 = rest;
                double mult = r2[j];
                --r2[j];
                v += mult * C_(Eigen::Index(first), Eigen::Index(j)) * (*this)(r2);
            }
        }
        cache_.emplace(a, v);
        return v;
    }

private:
    Mat C_;
    std::map<BosonExponents, double> cache_;
};

/// Joint Gaussian expectation over bosons (covariance C) and fluctuation pairs (covariance Gamma).
class MixedGaussian {
public:
    MixedGaussian(Mat C, CMat Gamma, std::vector<std::size_t> fluct_pairs)
        : bosons_(std::move(C)), gamma_(std::move(Gamma)), pairs_(std::move(fluct_pairs)) {}

    GrassmannPoly expect(const MixedPoly& p) {
        GrassmannPoly r(p.universe());
        for (const auto& [e, g] : p.terms()) {
            double mb = bosons_(e);
            if (mb == 0.0) continue;
            r += (pairs_.empty() ? g : g.gaussian_integrate(gamma_, pairs_)) * cd(mb);
        }
        return r;
    }

private:
    IsserlisMoments bosons_;
    CMat gamma_;
    std::vector<std::size_t> pairs_;
};

namespace detail {

/// All set partitions of {0..n-1}, as block lists.
inline std::vector<std::vector<std::vector<int>>> set_partitions(int n) {
    std::vector<std::vector<std::vector<int>>> out;
    std::vector<std::vector<int>> cur;
    std::function<void(int)> rec = [&](int i) {
        if (i == n) {
            out.push_back(cur);
            return;
        }
        for (std::size_t b = 0; b < cur.size(); ++b) {
            cur[b].push_back(i);
            rec(i + 1);
            cur[b].pop_back();
        }
        cur.push_back({i});
        rec(i + 1);
        cur.pop_back();
    };
    rec(0);
    return out;
}

inline double factorial(int n) {
    double f = 1;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

}  // namespace detail

struct ClusterOptions {
    int order_max = 4;
    double truncation_tol = 1e-8;
};

struct ClusterResult {
    PolymerFunction sharp;                   // E^#(X)
    std::vector<double> order_norms;         // h=1 norm of the order-n contribution
    double truncation_estimate = 0;          // Richardson-style tail estimate
    bool converged = true;
};

/// E^#(Y) = sum over multisets {X_1..X_n} with union Y of kappa(E_{X_1},...,E_{X_n}) / prod(mult!).
inline ClusterResult cluster_expand(const std::map<Polymer, MixedPoly>& activities, const CubeGrid& grid,
                                    MixedGaussian& measure, std::shared_ptr<const GrassmannUniverse> u,
                                    const ClusterOptions& opt = {}) {
    ClusterResult res{PolymerFunction(grid, u), {}, 0, true};
    std::vector<Polymer> keys;
    std::vector<const MixedPoly*> acts;
    for (const auto& [X, p] : activities)
        if (!p.is_zero()) {
            keys.push_back(X);
            acts.push_back(&p);
        }
    if (keys.empty()) return res;
    for (const auto* a : acts)
        for (const auto& [e, g] : a->terms())
            for (const auto& [m, c] : g.terms())
                if (std::popcount(m) % 2)
                    throw Error("odd_activity", "cluster expansion needs Grassmann-even activities");

    std::map<std::vector<int>, GrassmannPoly> moment_cache;
    auto moment = [&](std::vector<int> idx) -> GrassmannPoly {
        std::sort(idx.begin(), idx.end());
        auto it = moment_cache.find(idx);
        if (it != moment_cache.end()) return it->second;
        MixedPoly prod = *acts[std::size_t(idx[0])];
        for (std::size_t k = 1; k < idx.size(); ++k) prod = prod * *acts[std::size_t(idx[k])];
        GrassmannPoly m = measure.expect(prod);
        moment_cache.emplace(idx, m);
        return m;
    };

    const int K = int(keys.size());
    for (int n = 1; n <= opt.order_max; ++n) {
        auto partitions = detail::set_partitions(n);
        double order_norm = 0;
        std::vector<int> ms(std::size_t(n), 0);
        // nondecreasing index tuples = multisets
        std::function<void(int, int)> rec = [&](int pos, int start) {
            if (pos == n) {
                GrassmannPoly kappa(u);
                for (const auto& part : partitions) {
                    const int nb = int(part.size());
                    GrassmannPoly prod = GrassmannPoly::constant(u, 1.0);
                    for (const auto& block : part) {
                        std::vector<int> idx;
                        for (int p : block) idx.push_back(ms[std::size_t(p)]);
                        prod = prod * moment(idx);
                    }
                    double coef = detail::factorial(nb - 1) * ((nb - 1) % 2 ? -1.0 : 1.0);
                    kappa += prod * cd(coef);
                }
                double mult = 1;
                for (int i = 0, run = 1; i < n; ++i) {
                    if (i + 1 < n && ms[std::size_t(i + 1)] == ms[std::size_t(i)])
                        ++run;
                    else {
                        mult *= detail::factorial(run);
                        run = 1;
                    }
                }
                kappa *= cd(1.0 / mult);
                Polymer Y = keys[std::size_t(ms[0])];
                for (int i = 1; i < n; ++i) Y = Y.unite(keys[std::size_t(ms[std::size_t(i)])]);
                order_norm += kappa.h_norm(1.0);
                res.sharp.add(Y, kappa);
                return;
            }
            for (int i = start; i < K; ++i) {
                ms[std::size_t(pos)] = i;
                rec(pos + 1, i);
            }
        };
        rec(0, 0);
        res.order_norms.push_back(order_norm);
    }
    const auto& on = res.order_norms;
    double last = on.back();
    double prev = on.size() >= 2 ? on[on.size() - 2] : 0.0;
    if (last == 0)
        res.truncation_estimate = 0;
    else if (prev == 0)
        res.truncation_estimate = last;
    else {
        double ratio = last / prev;
        res.truncation_estimate = ratio < 1 ? last * ratio / (1 - ratio) : std::numeric_limits<double>::infinity();
    }
    res.converged = res.truncation_estimate <= opt.truncation_tol;
    return res;
}

}  // namespace blockrg
