#pragma once

// The counterterm flow in summary mode: scalars (eps_k, m_k) and a norm
// summary of E_k, the two-point boundary-value problem for (eps_0, m_0), and
// the bound ladder |eps_k| <= e_k^{1/4}, |m_k| <= e_k^{3/4}, ||E_k|| <= e_k^{1/4}.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <nlohmann/json.hpp>

#include "blockrg/lattice.hpp"

namespace blockrg {

/// 50 decimal digits; forward shooting amplifies eps_0 errors by L^{3K}.
using Real = boost::multiprecision::cpp_bin_float_50;

struct FlowParams {
    int L = 2;
    int N = 20;
    int K = 18;
    double e = 1e-3;

    /// e_k = L^{-(N-k)/2} e.
    double coupling(int k) const { return std::pow(double(L), -0.5 * (N - k)) * e; }
};

template <class T>
struct BasicFlowState {
    int k = 0;
    double e_k = 0;
    T eps = 0, m = 0, E = 0;
    T eps_star = 0, m_star = 0;  // responses evaluated at this state
};
using FlowState = BasicFlowState<double>;

/// (eps*, m*, new E-norm) as functions of the current state.
///
/// kind "toy":
///   eps* = c_eps_E E + c_eps_0 e p(e)
///   m*   = c_m_E E + c_m_0 e p(e) + c_mm m^2 / e^{3/4}
///   E'   = rho E + c_E e p(e) + c_Em m^2 / e^{3/4}
/// with p(e) = (-log e)^p_exp.  "linear" is the toy model with c_mm = c_Em = 0,
/// "zero" has every coefficient zero, "tabulated" replays fixed sequences.
struct ResponseModel {
    std::string kind = "toy";
    int p_exp = 2;
    double c_eps_E = 0.1, c_eps_0 = 0.01;
    double c_m_E = 0.01, c_m_0 = 0.01, c_mm = 0.05;
    double rho = 0.5, c_E = 0.01, c_Em = 0.05;
    std::vector<double> eps_table, m_table, E_table;

    static ResponseModel zero() {
        ResponseModel r;
        r.kind = "zero";
        r.c_eps_E = r.c_eps_0 = r.c_m_E = r.c_m_0 = r.c_mm = r.rho = r.c_E = r.c_Em = 0;
        return r;
    }
    static ResponseModel linear() {
        ResponseModel r;
        r.kind = "linear";
        r.c_mm = r.c_Em = 0;
        return r;
    }
    static ResponseModel tabulated(std::vector<double> eps, std::vector<double> m, std::vector<double> E) {
        ResponseModel r = zero();
        r.kind = "tabulated";
        r.eps_table = std::move(eps);
        r.m_table = std::move(m);
        r.E_table = std::move(E);
        return r;
    }

    double source(double e) const { return e * std::pow(-std::log(e), p_exp); }

    template <class T>
    void respond(BasicFlowState<T>& s, T& E_next) const {
        if (kind == "tabulated") {
            auto at = [&](const std::vector<double>& v) { return s.k < int(v.size()) ? T(v[std::size_t(s.k)]) : T(0); };
            s.eps_star = at(eps_table);
            s.m_star = at(m_table);
            E_next = at(E_table);
            return;
        }
        const double src = s.e_k > 0 && s.e_k < 1 ? source(s.e_k) : 0.0;
        const T m2 = s.m * s.m / T(std::pow(s.e_k, 0.75));
        s.eps_star = c_eps_E * s.E + T(c_eps_0 * src);
        s.m_star = c_m_E * s.E + T(c_m_0 * src) + c_mm * m2;
        E_next = rho * s.E + T(c_E * src) + c_Em * m2;
    }

    nlohmann::json to_json() const {
        return {{"kind", kind},   {"p_exp", p_exp}, {"c_eps_E", c_eps_E}, {"c_eps_0", c_eps_0},
                {"c_m_E", c_m_E}, {"c_m_0", c_m_0}, {"c_mm", c_mm},       {"rho", rho},
                {"c_E", c_E},     {"c_Em", c_Em}};
    }
};

/// eps_{k+1} = L^3 (eps_k + eps*_k), m_{k+1} = L (m_k + m*_k), E_{k+1} from the model.
template <class T>
BasicFlowState<T> flow_step(BasicFlowState<T>& s, const ResponseModel& model, const FlowParams& fp) {
    T E_next = 0;
    model.respond(s, E_next);
    BasicFlowState<T> n;
    n.k = s.k + 1;
    n.e_k = fp.coupling(n.k);
    const T L = fp.L;
    n.eps = L * L * L * (s.eps + s.eps_star);
    n.m = L * (s.m + s.m_star);
    n.E = E_next;
    return n;
}

/// States 0..K; the responses are filled in for k < K.
template <class T>
std::vector<BasicFlowState<T>> forward_flow(T eps0, T m0, const ResponseModel& model, const FlowParams& fp) {
    std::vector<BasicFlowState<T>> traj;
    BasicFlowState<T> s;
    s.e_k = fp.coupling(0);
    s.eps = eps0;
    s.m = m0;
    for (int k = 0; k < fp.K; ++k) {
        BasicFlowState<T> n = flow_step(s, model, fp);
        traj.push_back(s);
        s = n;
    }
    traj.push_back(s);
    return traj;
}

inline std::vector<FlowState> to_double(const std::vector<BasicFlowState<Real>>& t) {
    std::vector<FlowState> out;
    for (const auto& s : t)
        out.push_back({s.k, s.e_k, double(s.eps), double(s.m), double(s.E), double(s.eps_star), double(s.m_star)});
    return out;
}

struct BVPResult {
    Real eps0 = 0, m0 = 0;
    std::vector<FlowState> trajectory;
    double residual_eps = 0, residual_m = 0;
    int iterations = 0;
    bool converged = false;
    // multi-start probe
    int starts = 0;
    int starts_converged = 0;
    double max_start_deviation = 0;  // relative to the bound scale e_0^{1/4}, e_0^{3/4}
    bool unique = false;
};

namespace detail {

/// Damped Newton on (eps_0, m_0) -> (eps_K, m_K) with a forward-difference Jacobian.
inline bool shoot(Real& eps0, Real& m0, const ResponseModel& model, const FlowParams& fp, int& iters,
                  Real& r_eps, Real& r_m) {
    auto resid = [&](const Real& a, const Real& b, Real& re, Real& rm) {
        auto t = forward_flow<Real>(a, b, model, fp);
        re = t.back().eps;
        rm = t.back().m;
    };
    const Real LK = boost::multiprecision::pow(Real(fp.L), fp.K);
    const Real scale_e = LK * LK * LK, scale_m = LK;
    resid(eps0, m0, r_eps, r_m);
    for (iters = 0; iters < 200; ++iters) {
        Real nrm = abs(r_eps) / scale_e + abs(r_m) / scale_m;
        if (abs(r_eps) <= Real(1e-30) && abs(r_m) <= Real(1e-30)) return true;
        const Real h = Real(1e-30);
        Real a1, b1, a2, b2;
        resid(eps0 + h, m0, a1, b1);
        resid(eps0, m0 + h, a2, b2);
        Real J00 = (a1 - r_eps) / h, J10 = (b1 - r_m) / h, J01 = (a2 - r_eps) / h, J11 = (b2 - r_m) / h;
        Real det = J00 * J11 - J01 * J10;
        if (det == 0) return false;
        Real de = -(J11 * r_eps - J01 * r_m) / det;
        Real dm = -(-J10 * r_eps + J00 * r_m) / det;
        Real lambda = 1;
        for (int ls = 0; ls < 60; ++ls) {
            Real ne, nm;
            resid(eps0 + lambda * de, m0 + lambda * dm, ne, nm);
            if (abs(ne) / scale_e + abs(nm) / scale_m < nrm || ls == 59) {
                eps0 += lambda * de;
                m0 += lambda * dm;
                r_eps = ne;
                r_m = nm;
                break;
            }
            lambda /= 2;
        }
    }
    return abs(r_eps) <= Real(1e-12) && abs(r_m) <= Real(1e-12);
}

/// Initial guess by fixed-point iteration on the whole trajectory: E forwards
/// (contracting), eps and m backwards from eps_K = m_K = 0 (contracting by
/// L^{-3} and L^{-1}), responses evaluated on the current iterate.
/// The starting trajectory is zero, or uniform in the bound box when an rng is given.
inline void backward_sweep(Real& eps0, Real& m0, const ResponseModel& model, const FlowParams& fp,
                           std::mt19937_64* rng = nullptr, int sweeps = 60) {
    const Real L = fp.L;
    const auto K = std::size_t(fp.K);
    std::vector<BasicFlowState<Real>> t(K + 1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t k = 0; k <= K; ++k) {
        t[k].k = int(k);
        t[k].e_k = fp.coupling(int(k));
        if (rng) {
            t[k].eps = u(*rng) * std::pow(t[k].e_k, 0.25);
            t[k].m = u(*rng) * std::pow(t[k].e_k, 0.75);
            t[k].E = std::abs(u(*rng)) * std::pow(t[k].e_k, 0.25);
        }
    }
    for (int s = 0; s < sweeps; ++s) {
        t[0].E = 0;
        for (std::size_t k = 0; k < K; ++k) {
            Real En = 0;
            model.respond(t[k], En);
            t[k + 1].E = En;
        }
        t[K].eps = t[K].m = 0;
        for (std::size_t k = K; k-- > 0;) {
            t[k].eps = t[k + 1].eps / (L * L * L) - t[k].eps_star;
            t[k].m = t[k + 1].m / L - t[k].m_star;
        }
    }
    eps0 = t[0].eps;
    m0 = t[0].m;
}

}  // namespace detail

/// Find (eps_0, m_0) with eps_K = m_K = 0 and E_0 = 0.
inline BVPResult bvp_solve(const FlowParams& fp, const ResponseModel& model, int starts = 10,
                           std::uint64_t seed = 1) {
    if (fp.K < 1 || fp.K > fp.N) throw Error("bad_config", "need 1 <= K <= N");
    BVPResult r;
    detail::backward_sweep(r.eps0, r.m0, model, fp);
    Real re, rm;
    r.converged = detail::shoot(r.eps0, r.m0, model, fp, r.iterations, re, rm);
    r.residual_eps = double(abs(re));
    r.residual_m = double(abs(rm));
    r.trajectory = to_double(forward_flow<Real>(r.eps0, r.m0, model, fp));
    if (!r.converged) throw Error("no_convergence", "shooting did not reach the final conditions");

    // multi-start: random trajectories in the bound box seed the sweep and the shooting
    const double e0 = fp.coupling(0);
    const double se = std::pow(e0, 0.25), sm = std::pow(e0, 0.75);
    std::mt19937_64 rng(seed);
    r.starts = starts;
    r.unique = true;
    for (int i = 0; i < starts; ++i) {
        Real a = 0, b = 0, xe, xm;
        detail::backward_sweep(a, b, model, fp, &rng);
        int it = 0;
        bool ok = detail::shoot(a, b, model, fp, it, xe, xm);
        if (!ok) continue;
        ++r.starts_converged;
        double dev = std::max(double(abs(a - r.eps0)) / se, double(abs(b - r.m0)) / sm);
        r.max_start_deviation = std::max(r.max_start_deviation, dev);
        if (dev > 1e-12) r.unique = false;
    }
    if (r.starts_converged < starts) r.unique = false;
    return r;
}

struct BoundRow {
    int k;
    double e_k;
    bool eps_ok, m_ok, E_ok;
};

struct BoundReport {
    std::vector<BoundRow> rows;
    bool all_pass = true;
    int first_failure = -1;
};

/// |eps_k| <= e_k^{1/4}, |m_k| <= e_k^{3/4}, E-norm <= e_k^{1/4} for every k.
inline BoundReport bound_check(const std::vector<FlowState>& traj) {
    BoundReport rep;
    for (const auto& s : traj) {
        double q = std::pow(s.e_k, 0.25), t = std::pow(s.e_k, 0.75);
        BoundRow row{s.k, s.e_k, std::abs(s.eps) <= q, std::abs(s.m) <= t, std::abs(s.E) <= q};
        bool ok = row.eps_ok && row.m_ok && row.E_ok;
        if (!ok && rep.all_pass) rep.first_failure = s.k;
        rep.all_pass = rep.all_pass && ok;
        rep.rows.push_back(row);
    }
    return rep;
}

/// Per-polymer form of the E bound: ||E(X)||_{h_k} <= e_k^{1/4} exp(-kappa d_M(X)).
struct PolymerBound {
    double worst_ratio = 0;  // max over X of norm / bound
    bool holds = true;
};

inline PolymerBound polymer_bound(const std::vector<std::pair<double, double>>& norm_and_distance, double e_k,
                                  double kappa) {
    PolymerBound b;
    for (const auto& [n, d] : norm_and_distance) {
        double bound = std::pow(e_k, 0.25) * std::exp(-kappa * d);
        b.worst_ratio = std::max(b.worst_ratio, n / bound);
    }
    b.holds = b.worst_ratio <= 1.0;
    return b;
}

inline std::string trajectory_csv(const std::vector<FlowState>& traj, const BoundReport& b) {
    std::string out = "k,e_k,eps_k,m_k,E_norm,eps_ok,m_ok,E_ok\n";
    char buf[256];
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const auto& s = traj[i];
        const auto& r = b.rows[i];
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%d,%d,%d\n", s.k, s.e_k, s.eps, s.m, s.E,
                      int(r.eps_ok), int(r.m_ok), int(r.E_ok));
        out += buf;
    }
    return out;
}

}  // namespace blockrg
