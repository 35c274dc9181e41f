#pragma once

// One renormalization group step on tiny lattices: the bosonic Gaussian step
// with axial gauge fixing, the fermion block-averaging step through the
// critical point, parameter rescaling, and the localized fluctuation integral.

#include <complex>
#include <map>
#include <optional>
#include <random>
#include <tuple>
#include <vector>

#include <Eigen/Eigenvalues>

#include "blockrg/cluster.hpp"

namespace blockrg {

/// Coupling constants carried by the effective density at scale k.
struct DensityParams {
    int k = 0;
    double e = 0;       // gauge coupling e_k
    double mbar = 0;    // mass in the Dirac term
    double m = 0;       // mass counterterm m_k
    double energy = 0;  // energy density eps_k
    double b = 1.0;
};

/// e_{k+1} = L^{1/2} e_k, mbar and m scale by L, eps by L^3; counterterm shifts added first.
inline DensityParams rescale_params(const DensityParams& p, int L, double m_star = 0, double energy_star = 0) {
    DensityParams q = p;
    q.k = p.k + 1;
    q.e = std::sqrt(double(L)) * p.e;
    q.mbar = L * p.mbar;
    q.m = L * (p.m + m_star);
    q.energy = double(L) * L * L * (p.energy + energy_star);
    return q;
}

// ---------------------------------------------------------------------------
// bosonic sector

/// int delta(QA - B) delta_x(A) exp(-1/2 A^T K A) dA = exp(log_z - 1/2 B^T coarse_form B).
struct GaussianStep {
    Torus fine;
    Mat H;            // axial minimizer for the form K
    Mat coarse_form;  // H^T K H, coarse unit-lattice indices before field rescaling
    FluctCovariance fluct;
    std::size_t tree_bonds = 0;

    double log_z() const { return fluct.log_z_with_jacobian(); }
};

inline GaussianStep gaussian_step(const Torus& fine, int L, const Mat& K) {
    ConstrainedMinimizer m = axial_minimizer(fine, L, K);
    GaussianStep s{fine, m.H, m.H.transpose() * K * m.H, fluct_covariance(fine, L, K), m.tree_bonds.size()};
    return s;
}

/// rho_k(A_k) = exp(log_norm - 1/2 A_k^T form A_k) on the unit level-k lattice,
/// obtained by K successive steps with A_{k+1} = L^{1/2} Q A_k.
struct BosonChain {
    std::vector<GaussianStep> steps;
    Torus final_torus;
    Mat form;
    double log_norm = 0;

    double log_density(const Vec& AK) const { return log_norm - 0.5 * AK.dot(form * AK); }
};

inline BosonChain bosonic_chain(const Torus& fine, int L, int K) {
    BosonChain c{{}, fine, strength_form(fine), 0.0};
    Torus cur = fine;
    for (int k = 0; k < K; ++k) {
        GaussianStep s = gaussian_step(cur, L, c.form);
        Torus next = unit_coarse(cur);
        // rho_{k+1}(A') = L^{-n'/2} rhotilde(L^{-1/2} A')
        c.log_norm += s.log_z() - 0.5 * double(next.bonds()) * std::log(double(L));
        c.form = s.coarse_form / double(L);
        c.steps.push_back(std::move(s));
        cur = next;
    }
    c.final_torus = cur;
    return c;
}

// ---------------------------------------------------------------------------
// fermion sector

inline Torus level_torus(const Torus& fine, int L, int k) {
    Torus cur = fine;
    for (int j = 0; j < k; ++j) cur = unit_coarse(cur);
    return cur;
}

/// Level-k background A_k = L^{k/2} Q^k A on the unit lattice, with coupling e_k = L^{k/2} e.
inline GaugeField level_field(const GaugeField& A, int L, int k) {
    Torus t = level_torus(A.torus(), L, k);
    return GaugeField(t, std::pow(double(L), 0.5 * k) * (composite_average(A.torus(), L, k) * A.values()));
}

inline double level_coupling(double e, int L, int k) { return std::pow(double(L), 0.5 * k) * e; }

/// Integrating psi against exp(-psibar K psi - c_w |Psi - Q psi|^2) with
/// A11 = K + c_w Q^dag Q gives det(A11) exp(-Psibar Kc Psi), Kc = c_w - c_w^2 Q A11^{-1} Q^dag.
struct FermionLevel {
    FermionMatrix a11;
    FermionMatrix coarse_kernel;  // before the Psi -> L^{-1} Psi rescaling
    double c_w = 0;
};

struct FermionChain {
    std::vector<FermionLevel> levels;
    FermionMatrix final_kernel;  // rescaled kernel at level K

    /// sum_k log det A11_k + log det K_K.
    cd log_value() const {
        cd s = 0;
        for (const auto& l : levels) s += log_det(l.a11);
        return s + log_det(final_kernel);
    }
};

inline FermionChain fermion_chain(const GaugeField& A, double e, double mbar, double b, int L, int K) {
    FermionChain ch;
    FermionMatrix kern = wilson_dirac(A, e, mbar).with_mass();
    const double cw = b / L * double(L) * L * L;
    for (int k = 0; k < K; ++k) {
        AveragingOp q = fermion_average(level_field(A, L, k), level_coupling(e, L, k), L);
        FermionLevel lev;
        lev.c_w = cw;
        lev.a11 = kern + cw * q.Q.adjoint() * q.Q;
        Eigen::PartialPivLU<CMat> lu(lev.a11);
        const Eigen::Index nc = q.Q.rows();
        lev.coarse_kernel = cw * CMat::Identity(nc, nc) - cw * cw * q.Q * lu.solve(CMat(q.Q.adjoint()));
        kern = lev.coarse_kernel / double(L * L);
        ch.levels.push_back(std::move(lev));
    }
    ch.final_kernel = kern;
    return ch;
}

/// log det(M0^{-1} M) as a sum of principal logarithms of eigenvalues; continuous near M = M0.
inline cd relative_log_det(const CMat& M0, const CMat& M) {
    CMat R = Eigen::PartialPivLU<CMat>(M0).solve(M);
    Eigen::ComplexEigenSolver<CMat> es(R, false);
    cd s = 0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) s += std::log(es.eigenvalues()(i));
    return s;
}

inline cd relative_chain_log(const FermionChain& ref, const FermionChain& c) {
    cd s = 0;
    for (std::size_t k = 0; k < c.levels.size(); ++k) s += relative_log_det(ref.levels[k].a11, c.levels[k].a11);
    return s + relative_log_det(ref.final_kernel, c.final_kernel);
}

/// Second-order coefficient of log Z(e) along the block-averaging route, by
/// symmetric differences with one Richardson extrapolation.
struct SeriesCoefficient {
    cd value;
    cd coarse;      // unextrapolated estimate at step h
    double step = 0;
};

inline SeriesCoefficient chain_second_order(const GaugeField& A, double mbar, double b, int L, int K, double h = 0.02) {
    FermionChain ref = fermion_chain(A, 0.0, mbar, b, L, K);
    auto c2 = [&](double s) {
        cd fp = relative_chain_log(ref, fermion_chain(A, s, mbar, b, L, K));
        cd fm = relative_chain_log(ref, fermion_chain(A, -s, mbar, b, L, K));
        return (fp + fm) / (2 * s * s);
    };
    cd big = c2(h), small = c2(h / 2);
    return {(4.0 * small - big) / 3.0, big, h};
}

/// Smallest singular value, zero-momentum diagonal weight and count for a fermion kernel.
inline double zero_momentum_weight(const FermionMatrix& K) {
    const Eigen::Index n = K.rows();
    cd s = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i % kSpinDim; j < n; j += kSpinDim) s += K(i, j);
    return s.real() / double(n);
}

// ---------------------------------------------------------------------------
// phase decomposition of the fluctuation interaction

/// A group of matrix entries that all pick up the factor exp(i e s.Z) when A -> A + Z.
struct PhaseGroup {
    std::vector<std::pair<std::size_t, double>> s;  // sparse phase vector over bonds
    std::vector<std::tuple<Eigen::Index, Eigen::Index, cd>> entries;
    std::size_t cube = 0;
};

/// Gamma^{-1}(A + Z) - Gamma^{-1}(A) = sum_g (exp(i e s_g.Z) - 1) M_g exactly.
inline std::vector<PhaseGroup> phase_groups(const GaugeField& A, double e, double b, int L, const CubeGrid& grid) {
    const Torus& t = A.torus();
    const double eps = t.spacing(), inv2 = 0.5 / eps;
    const auto& g = gamma_matrices();
    std::vector<PhaseGroup> out;
    for (std::size_t x = 0; x < t.sites(); ++x)
        for (int mu = 0; mu < 3; ++mu) {
            std::size_t bnd = t.bond(x, mu), y = t.shift(x, mu);
            cd U = link_phase(A, e, bnd);
            Eigen::Matrix2cd fwd = U * inv2 * (g[std::size_t(mu)] - Eigen::Matrix2cd::Identity());
            Eigen::Matrix2cd bwd = std::conj(U) * inv2 * (-g[std::size_t(mu)] - Eigen::Matrix2cd::Identity());
            PhaseGroup plus, minus;
            plus.s = {{bnd, eps}};
            minus.s = {{bnd, -eps}};
            plus.cube = minus.cube = grid.cube_of_site(x);
            for (int a = 0; a < 2; ++a)
                for (int c = 0; c < 2; ++c) {
                    auto xi = Eigen::Index(2 * x) + a, yi = Eigen::Index(2 * y) + c;
                    auto xj = Eigen::Index(2 * x) + c, yj = Eigen::Index(2 * y) + a;
                    if (fwd(a, c) != cd(0)) plus.entries.emplace_back(xi, yi, fwd(a, c));
                    if (bwd(a, c) != cd(0)) minus.entries.emplace_back(yj, xj, bwd(a, c));
                }
            out.push_back(std::move(plus));
            out.push_back(std::move(minus));
        }
    // b L^{-1} Q^T Q = b L^2 Q^dag Q; entries pair sites of one block
    Blocking B(t, L);
    const double w = 1.0 / double(B.block_volume());
    const double coef = b * L * L * w * w;
    for (std::size_t y = 0; y < B.coarse().sites(); ++y) {
        std::size_t c = B.center(y);
        auto sites = B.sites_in_block(y);
        std::vector<std::map<std::size_t, double>> paths;
        for (std::size_t x : sites) {
            std::map<std::size_t, double> sv;
            for (const auto& ob : t.staircase_path(c, x, Winding::direct)) sv[ob.bond] += ob.sign * eps;
            paths.push_back(std::move(sv));
        }
        for (std::size_t i = 0; i < sites.size(); ++i)
            for (std::size_t j = 0; j < sites.size(); ++j) {
                if (i == j) continue;
                std::map<std::size_t, double> diff = paths[j];
                for (const auto& [bb, v] : paths[i]) diff[bb] -= v;
                PhaseGroup pg;
                for (const auto& [bb, v] : diff)
                    if (v != 0) pg.s.emplace_back(bb, v);
                double ell = 0;
                for (const auto& [bb, v] : pg.s) ell += v * A[bb];
                cd val = coef * std::exp(cd(0, e * ell));
                pg.cube = grid.cube_of_site(c);
                for (int a = 0; a < kSpinDim; ++a)
                    pg.entries.emplace_back(Eigen::Index(2 * sites[i]) + a, Eigen::Index(2 * sites[j]) + a, val);
                if (!pg.s.empty()) out.push_back(std::move(pg));
            }
    }
    return out;
}

inline FermionMatrix phase_interaction(const std::vector<PhaseGroup>& groups, const Vec& Z, double e, Eigen::Index n) {
    FermionMatrix V = FermionMatrix::Zero(n, n);
    for (const auto& g : groups) {
        double ph = 0;
        for (const auto& [bb, v] : g.s) ph += v * Z[Eigen::Index(bb)];
        cd f = std::exp(cd(0, e * ph)) - 1.0;
        for (const auto& [i, j, c] : g.entries) V(i, j) += f * c;
    }
    return V;
}

/// Fluctuation integral over Z ~ N(0, C) of det(1 + Gamma V(Z)), to second order in V,
/// using exact Gaussian phase moments E exp(i e s.Z) = exp(-e^2 s^T C s / 2).
/// Also the first-order psibar psi kernel -E V(Z).  Terms are attributed to the
/// union of the cubes of their phase groups.
struct FluctuationIntegral {
    std::map<Polymer, cd> vacuum;
    std::map<Polymer, FermionMatrix> bilinear;  // coefficient of psibar_i psi_j
    cd vacuum_total = 0;
};

inline FluctuationIntegral fluctuation_integral(const std::vector<PhaseGroup>& groups, const Mat& C_amb,
                                                const FermionMatrix& Gamma, double e) {
    const auto G = Eigen::Index(groups.size()), nb = C_amb.rows(), n = Gamma.rows();
    Mat S = Mat::Zero(G, nb);
    for (Eigen::Index i = 0; i < G; ++i)
        for (const auto& [bb, v] : groups[std::size_t(i)].s) S(i, Eigen::Index(bb)) += v;
    Mat sigma = S * C_amb * S.transpose();
    Vec phi = (-0.5 * e * e * sigma.diagonal()).array().exp();
    CVec tr(G);
    for (Eigen::Index i = 0; i < G; ++i) {
        cd s = 0;
        for (const auto& [a, c, v] : groups[std::size_t(i)].entries) s += v * Gamma(c, a);
        tr[i] = s;
    }
    FluctuationIntegral out;
    auto add = [&](const Polymer& X, cd v) {
        out.vacuum[X] += v;
        out.vacuum_total += v;
    };
    for (Eigen::Index i = 0; i < G; ++i) {
        const auto& gi = groups[std::size_t(i)];
        Polymer Xi({gi.cube});
        add(Xi, (phi[i] - 1.0) * tr[i]);
        auto& K = out.bilinear.try_emplace(Xi, FermionMatrix::Zero(n, n)).first->second;
        for (const auto& [a, c, v] : gi.entries) K(a, c) -= (phi[i] - 1.0) * v;
    }
    for (Eigen::Index i = 0; i < G; ++i) {
        const auto& gi = groups[std::size_t(i)];
        for (Eigen::Index j = 0; j < G; ++j) {
            const auto& gj = groups[std::size_t(j)];
            double joint = phi[i] * phi[j] * std::exp(-e * e * sigma(i, j));
            double second = joint - phi[i] - phi[j] + 1.0;
            double cov = joint - phi[i] * phi[j];
            cd loop = 0;
            for (const auto& [a, c, v] : gi.entries)
                for (const auto& [a2, c2, v2] : gj.entries) loop += v * v2 * Gamma(c, a2) * Gamma(c2, a);
            cd val = -0.5 * second * loop + 0.5 * cov * tr[i] * tr[j];
            add(Polymer({gi.cube, gj.cube}), val);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// the full step

struct EffectiveDensity {
    DensityParams params;
    Torus torus;       // unit lattice carrying A_k
    Mat gauge_form;    // 1/2 A^T form A, the free gauge action in smeared positions
    double log_norm = 0;
    std::optional<PolymerFunction> E;  // polymer activities in the fermion field
};

inline EffectiveDensity initial_density(const Torus& t, const DensityParams& p) {
    return {p, t, strength_form(t), 0.0, std::nullopt};
}

struct StepOptions {
    int L = 2;
    int M_exp = 0;
    int p_exp = 2;
    std::uint64_t seed = 1;
};

struct LargeFieldBranch {
    std::vector<int> chi;
    std::int64_t partition_sum = 0;
    RegionSumAudit regions;
};

struct StepResult {
    bool small_field = true;
    std::optional<LargeFieldBranch> large_field;
    EffectiveDensity next;
    nlohmann::json report;
    FluctuationIntegral sharp;
    DetExpansion det;
    double m_star = 0, energy_star = 0;
};

/// Translation-averaged counterterm shifts (m*, eps*) from the per-polymer parts:
/// sum_X c(X) int_X f = int f(x) sum_{X containing x} c(X).
inline std::pair<double, double> relevant_shifts(const RelevantParts& rel, const CubeGrid& grid) {
    auto avg = [&](const std::map<Polymer, double>& part) {
        auto per = aggregate_per_cube(part, grid);
        double s = 0;
        for (double v : per) s += v;
        return per.empty() ? 0.0 : s / double(per.size());
    };
    return {avg(rel.mass), avg(rel.energy)};
}

inline std::shared_ptr<const GrassmannUniverse> fermion_universe(const Torus& t) {
    return std::make_shared<const GrassmannUniverse>(GrassmannUniverse::lattice(t.sites(), kSpinDim));
}

inline bool universe_fits(const Torus& t) { return 2 * kSpinDim * t.sites() <= std::size_t(kMaxGenerators); }

/// One step rho_k -> rho_{k+1} around the coarse background A1 (on the blocked lattice).
inline StepResult rg_transform(const EffectiveDensity& rho, const GaugeField& A1, const StepOptions& opt) {
    const Torus& t = rho.torus;
    const int L = opt.L;
    const DensityParams& p = rho.params;
    StepResult out;
    nlohmann::json rep;
    rep["k"] = p.k;
    rep["lattice_side"] = t.side();
    CubeGrid grid(t, opt.M_exp);

    // gauge sector: minimizers and the Gaussian fluctuation measure
    ConstrainedMinimizer hx = axial_minimizer(t, L, rho.gauge_form);
    ConstrainedMinimizer h0 = landau_minimizer(t, L);
    GaugeField Ax = hx.apply(A1), A0 = h0.apply(A1);
    GaussianStep gs = gaussian_step(t, L, rho.gauge_form);
    GaugeWitness wit = gauge_witness(A0, Ax);
    rep["gauge"] = {{"constraint_residual_axial", hx.constraint_residual()},
                    {"constraint_residual_landau", h0.constraint_residual()},
                    {"landau_axial_strength_gap",
                     (field_strength(Ax).values - field_strength(A0).values).cwiseAbs().maxCoeff()},
                    {"gauge_witness_residual", wit.residual},
                    {"fluct_dim", gs.fluct.dim()},
                    {"fluct_min_eigenvalue", gs.fluct.min_eigenvalue},
                    {"log_z_gauge", gs.log_z()},
                    {"tree_bonds", gs.tree_bonds}};

    // small-field gate
    SmallFieldThreshold thr{opt.p_exp};
    double pe = p.e > 0 && p.e < 1 ? thr.value(p.e) : std::numeric_limits<double>::infinity();
    std::vector<int> chi = cube_indicators(Ax, grid, pe);
    bool small = std::all_of(chi.begin(), chi.end(), [](int c) { return c == 1; });
    rep["threshold"] = pe;
    if (!small) {
        out.small_field = false;
        LargeFieldBranch lf{chi, grid.cube_count() <= 24 ? partition_of_unity_sum(chi) : 0,
                            region_sum_audit(std::min<std::size_t>(grid.cube_count(), 24), std::exp(-0.25 * pe * pe))};
        rep["branch"] = "large_field";
        rep["large_cubes"] = std::count(chi.begin(), chi.end(), 0);
        rep["partition_of_unity_sum"] = lf.partition_sum;
        out.large_field = lf;
        out.report = rep;
        out.next = rho;
        return out;
    }
    rep["branch"] = "small_field";

    // split residuals at seeded random fields
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Vec tz(gs.fluct.dim());
    for (auto& v : tz) v = nd(rng);
    GaugeField Z(t, gs.fluct.basis * tz);
    double lhs = 0.5 * (Ax + Z).values().dot(rho.gauge_form * (Ax + Z).values());
    double rhs = 0.5 * Ax.values().dot(rho.gauge_form * Ax.values()) + 0.5 * Z.values().dot(rho.gauge_form * Z.values());

    // fermion sector in the Landau representative (gauge-invariant quantities only)
    FermionFluctOp fop = fermion_fluct(A0, p.e, p.mbar, p.b, L);
    const Eigen::Index nf = fop.gamma.rows(), nc = fop.average.Q.rows();
    auto rnd = [&](Eigen::Index n) {
        CVec v(n);
        for (auto& z : v) z = cd(nd(rng), nd(rng));
        return v;
    };
    CVec Psi1 = rnd(nc), Psib1 = rnd(nc), W = rnd(nf), Wb = rnd(nf);
    FermionMatrix Dm = wilson_dirac(A0, p.e, p.mbar).with_mass();
    const double cL = p.b / L * std::pow(double(L), 3);
    CVec crit = fop.crit * Psi1;
    CVec critb = cL * (fop.gamma.transpose() * (fop.average.Q.transpose() * Psib1));
    cd f_full = fermion_quadratic_form(fop, Dm, t.spacing(), Psib1, Psi1, critb + Wb, crit + W);
    cd f_crit = fermion_quadratic_form(fop, Dm, t.spacing(), Psib1, Psi1, critb, crit);
    cd f_fluct = std::pow(t.spacing(), 3) * (Wb.transpose() * (fop.gamma_inv * W))(0);
    CVec grad = fermion_form_gradient(fop, Psi1, crit);
    rep["splits"] = {{"gauge_split_residual", std::abs(lhs - rhs)},
                     {"critical_point_gradient", grad.cwiseAbs().maxCoeff()},
                     {"fermion_split_cross_term", std::abs(f_full - f_crit - f_fluct)}};

    // normalizations
    cd log_zf = fermion_normalizer_log(fop);
    FermionFluctOp fop0 = fermion_fluct(GaugeField(t), p.e, p.mbar, p.b, L);
    cd log_zf0 = fermion_normalizer_log(fop0);
    rep["normalizations"] = {{"log_z_gauge", gs.log_z()},
                             {"log_z_fermion_re", log_zf.real()},
                             {"log_z_fermion_im", log_zf.imag()},
                             {"log_z_fermion_free", log_zf0.real()},
                             {"log_rescale_jacobian", -0.5 * double(unit_coarse(t).bonds()) * std::log(double(L))},
                             {"gamma_inv_smallest_singular_value", fop.smallest_singular_value}};

    // determinant localization over cubes and the fluctuation integral
    auto log_z = [&](const GaugeField& Ar) { return log_det(gamma_inv_matrix(Ar, p.e, p.mbar, p.b, L)); };
    out.det = det_expand(log_z, A0, grid);
    auto groups = phase_groups(A0, p.e, p.b, L, grid);
    out.sharp = fluctuation_integral(groups, gs.fluct.ambient(), fop.gamma, p.e);
    rep["det_expansion"] = {{"resummation_error", out.det.resummation_error},
                            {"log_ratio_re", out.det.total_log_ratio.real()},
                            {"terms", out.det.terms.size()}};
    rep["fluctuation"] = {{"vacuum_re", out.sharp.vacuum_total.real()},
                          {"vacuum_im", out.sharp.vacuum_total.imag()},
                          {"polymers", out.sharp.vacuum.size()},
                          {"phase_groups", groups.size()}};

    // relevant parts of the incoming activity, new activity, rescaling
    EffectiveDensity next;
    double m_star = 0, energy_star = 0;
    if (universe_fits(t)) {
        auto u = rho.E ? rho.E->universe : fermion_universe(t);
        PolymerFunction Enew(grid, u);
        if (rho.E) {
            RelevantParts rel = extract_relevant(*rho.E);
            std::tie(m_star, energy_star) = relevant_shifts(rel, grid);
            Enew = Enew + rel.remainder;
        }
        for (const auto& [X, v] : out.sharp.vacuum) Enew.add(X, GrassmannPoly::constant(u, v));
        for (const auto& [X, K] : out.sharp.bilinear) Enew.add(X, GrassmannPoly::bilinear(u, K));
        for (const auto& [X, v] : out.det.terms) Enew.add(X, GrassmannPoly::constant(u, v));
        for (auto& [X, poly] : Enew.values) poly.prune(1e-300);
        next.E = reblock_scale_L(Enew);
    }
    out.m_star = m_star;
    out.energy_star = energy_star;
    next.params = rescale_params(p, L, m_star, energy_star);
    next.torus = unit_coarse(t);
    next.gauge_form = gs.coarse_form / double(L);
    next.log_norm = rho.log_norm + gs.log_z() - 0.5 * double(next.torus.bonds()) * std::log(double(L));
    rep["next"] = {{"e", next.params.e}, {"mbar", next.params.mbar}, {"m", next.params.m},
                   {"energy", next.params.energy}, {"m_star", m_star}, {"energy_star", energy_star}};
    out.next = std::move(next);
    out.report = rep;
    return out;
}

}  // namespace blockrg
