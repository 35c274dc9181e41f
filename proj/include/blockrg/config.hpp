#pragma once

// Run configuration: every free constant of the construction as a knob, read
// from a flat JSON object.  Unknown keys are rejected so typos fail loudly.

#include <cstdint>
#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "blockrg/lattice.hpp"

namespace blockrg {

struct Tolerances {
    double grassmann_det = 1e-12;
    double covariance = 1e-12;
    double minimizer = 1e-12;
    double energy_split = 1e-10;
    double effective_mass_fraction = 0.5;
    double cluster = 1e-8;
    double det_resummation = 1e-10;
    double sunset_ratio = 1e-10;
    double series_relative = 1e-6;
    double bvp_residual = 1e-12;
    double closed_form = 1e-12;
    double mode_consistency = 1e-10;

    void scale(double s) {
        for (double* t : {&grassmann_det, &covariance, &minimizer, &energy_split, &cluster, &det_resummation,
                          &sunset_ratio, &series_relative, &bvp_residual, &closed_form, &mode_consistency})
            *t *= s;
    }
};

struct RunConfig {
    // lattice: side = L^extent_exp sites of spacing L^{-spacing_exp}
    int base_scale = 2;
    int spacing_exp = 0;
    int extent_exp = 2;
    int M_exp = 1;
    // couplings
    double e = 0.5;
    double mbar = 0.5;
    double b = 1.0;
    int p_exp = 2;
    // norms and decay
    double h = 1.0;
    double kappa = 0.5;
    int order_max = 4;
    // flow
    int N = 20;
    int K = 18;
    double flow_e = 1e-3;
    std::string flow_model = "toy";
    // verification sizes
    int trials = 100;
    int chain_K = 2;
    std::uint64_t seed = 1;
    Tolerances tol;

    TorusSpec spec() const { return {base_scale, spacing_exp, extent_exp}; }
    int L() const { return base_scale; }
};

inline void validate(const RunConfig& c) {
    auto bad = [](const std::string& m) { throw Error("bad_config", m); };
    if (c.base_scale < 2) bad("L must be at least 2");
    if (c.extent_exp < 1) bad("extent_exp must be at least 1");
    if (ipow(c.base_scale, 3 * c.extent_exp) > (1 << 18)) bad("fine site count above cap 2^18");
    if (c.M_exp < 0 || c.M_exp > c.extent_exp) bad("M_exp outside [0, extent_exp]");
    if (!(c.e >= 0)) bad("e must be nonnegative");
    if (!(c.b > 0)) bad("b must be positive");
    if (c.p_exp < 1) bad("p_exp must be positive");
    if (!(c.h > 0) || !(c.kappa > 0)) bad("h and kappa must be positive");
    if (c.order_max < 1) bad("order_max must be positive");
    if (c.K < 1 || c.K > c.N) bad("need 1 <= K <= N");
    if (!(c.flow_e > 0 && c.flow_e < 1)) bad("flow_e must lie in (0, 1)");
    if (c.trials < 1 || c.chain_K < 1) bad("trials and chain_K must be positive");
    const auto& t = c.tol;
    for (double v : {t.grassmann_det, t.covariance, t.minimizer, t.energy_split, t.effective_mass_fraction, t.cluster,
                     t.det_resummation, t.sunset_ratio, t.series_relative, t.bvp_residual, t.closed_form,
                     t.mode_consistency})
        if (!(v > 0)) bad("tolerances must be positive");
}

#define BLOCKRG_TOL_FIELDS(X)                                                                                     \
    X(grassmann_det) X(covariance) X(minimizer) X(energy_split) X(effective_mass_fraction) X(cluster)              \
        X(det_resummation) X(sunset_ratio) X(series_relative) X(bvp_residual) X(closed_form) X(mode_consistency)

#define BLOCKRG_CFG_FIELDS(X)                                                                                     \
    X(base_scale) X(spacing_exp) X(extent_exp) X(M_exp) X(e) X(mbar) X(b) X(p_exp) X(h) X(kappa) X(order_max) X(N) \
        X(K) X(flow_e) X(flow_model) X(trials) X(chain_K) X(seed)

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j, t;
#define X(f) j[#f] = c.f;
    BLOCKRG_CFG_FIELDS(X)
#undef X
#define X(f) t[#f] = c.tol.f;
    BLOCKRG_TOL_FIELDS(X)
#undef X
    j["tolerances"] = t;
    return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error("bad_config", "configuration must be a JSON object");
    RunConfig c;
    std::set<std::string> known{"tolerances"};
#define X(f)                                  \
    known.insert(#f);                         \
    if (j.contains(#f)) j.at(#f).get_to(c.f);
    BLOCKRG_CFG_FIELDS(X)
#undef X
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw Error("bad_config", "unknown key '" + k + "'");
    if (j.contains("tolerances")) {
        const auto& t = j.at("tolerances");
        std::set<std::string> tk;
#define X(f)                                      \
    tk.insert(#f);                                \
    if (t.contains(#f)) t.at(#f).get_to(c.tol.f);
        BLOCKRG_TOL_FIELDS(X)
#undef X
        for (const auto& [k, v] : t.items())
            if (!tk.count(k)) throw Error("bad_config", "unknown tolerance '" + k + "'");
    }
    validate(c);
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw Error("bad_config", std::string("JSON parse error: ") + ex.what());
    }
    return config_from_json(j);
}

}  // namespace blockrg
