#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "adiabatic/bands.hpp"
#include "adiabatic/calculus.hpp"
#include "adiabatic/config_json.hpp"
#include "adiabatic/core.hpp"
#include "adiabatic/discretize.hpp"
#include "adiabatic/model.hpp"
#include "adiabatic/superadiabatic.hpp"

namespace adiabatic {

inline constexpr double kSlopeTolerance = 0.3;

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

/// Least-squares line through (log eps, log norm). Points at or below the
/// round-off floor must be excluded by the caller.
inline RateFit fit_rate(const std::vector<double>& eps, const std::vector<double>& norms) {
    if (eps.size() != norms.size())
        throw DimensionMismatch("fit_rate: mismatched inputs");
    if (eps.size() < 3) throw InsufficientPoints("fit_rate: need at least 3 points");
    const std::size_t n = eps.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::log(eps[i]);
        const double y = std::log(norms[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    const double den = n * sxx - sx * sx;
    RateFit fit;
    fit.slope = (n * sxy - sx * sy) / den;
    fit.intercept = (sy - fit.slope * sx) / n;
    const double ss_tot = syy - sy * sy / n;
    double ss_res = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = std::log(norms[i]);
        const double pred = fit.intercept + fit.slope * std::log(eps[i]);
        ss_res += (y - pred) * (y - pred);
    }
    fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

enum class ClaimKind {
    Commutator,        // ||[H, P^l] chi(H)||
    ProjectionDefect,  // ||(P^l)^2 - P^l||
    PepsP0,            // ||Peps - P0||
    PepsExpansion,     // ||(Peps - sum_{k<=l} dP_k) chi(H)||
    SpectralDistance,  // worst dist(mu, sigma(H)) over mu in sigma(Heff) below Lambda-delta
    UnitaryEquivalence,
    HeffExpansion
};

inline std::string claim_name(ClaimKind k) {
    switch (k) {
        case ClaimKind::Commutator: return "commutator";
        case ClaimKind::ProjectionDefect: return "projection_defect";
        case ClaimKind::PepsP0: return "peps_p0";
        case ClaimKind::PepsExpansion: return "peps_expansion";
        case ClaimKind::SpectralDistance: return "spectral_distance";
        case ClaimKind::UnitaryEquivalence: return "unitary_equivalence";
        case ClaimKind::HeffExpansion: return "heff_expansion";
    }
    return "?";
}

inline std::optional<ClaimKind> claim_from_name(const std::string& s) {
    for (ClaimKind k :
         {ClaimKind::Commutator, ClaimKind::ProjectionDefect, ClaimKind::PepsP0,
          ClaimKind::PepsExpansion, ClaimKind::SpectralDistance,
          ClaimKind::UnitaryEquivalence, ClaimKind::HeffExpansion})
        if (claim_name(k) == s) return k;
    return std::nullopt;
}

struct SweepConfig {
    ModelConfig model;
    BandSelector band;
    int depth = 2;
    std::vector<double> eps_grid;
    std::optional<CutoffSpec> cutoff;  // auto-anchored from the certificate if unset
    std::vector<ClaimKind> claims = {
        ClaimKind::Commutator,      ClaimKind::ProjectionDefect,
        ClaimKind::PepsP0,          ClaimKind::PepsExpansion,
        ClaimKind::SpectralDistance, ClaimKind::UnitaryEquivalence,
        ClaimKind::HeffExpansion};

    void validate() const {
        if (eps_grid.size() < 4) throw ConfigError("eps grid needs at least 4 points");
        for (std::size_t i = 0; i < eps_grid.size(); ++i) {
            if (!(eps_grid[i] > 0) || eps_grid[i] > 0.25)
                throw ConfigError("eps values must lie in (0, 1/4]");
            if (i > 0 && !(eps_grid[i] < eps_grid[i - 1]))
                throw ConfigError("eps grid must be strictly decreasing");
        }
        if (depth < 0 || depth > kMaxRecursionDepth)
            throw ConfigError("unsupported recursion depth");
    }
};

struct ClaimResult {
    std::string name;
    int level = -1;  // -1 when the claim has no level parameter
    std::vector<double> eps;
    std::vector<double> norms;          // NaN where evaluation failed
    std::vector<bool> excluded;         // below noise floor or failed
    std::optional<RateFit> fit;
    double threshold = 0.0;
    bool exact_regime = false;
    bool pass = false;
    std::vector<std::string> notes;
};

struct SweepReport {
    int nb = 0, nf = 0, rank = 0, depth = 0;
    double delta = 0.0, Lambda = 0.0, cutoff_width = 0.0;
    std::vector<ClaimResult> claims;
    std::vector<std::string> errors;  // per-eps failures

    bool all_pass() const {
        for (const auto& c : claims)
            if (!c.pass) return false;
        return true;
    }
};

namespace detail {

/// eps-independent setup shared by every point of a sweep.
struct BandSetup {
    BundleModel model;
    FibreSpectra spectra;
    Eigenband band;
    Mat p0;
    Mat frame;
    Mat resolvent;
    CutoffSpec cutoff;
    std::function<double(double)> chi;
};

inline BandSetup prepare_band(const ModelConfig& mc, const BandSelector& sel,
                              const std::optional<CutoffSpec>& cutoff) {
    BandSetup s;
    s.model = build_model(mc);
    s.spectra = solve_fibre_spectra(s.model);
    s.band = track_band(s.spectra, sel);
    s.band.certificate = certify_gap(s.band, s.spectra);
    s.p0 = band_projection(s.model, s.band).matrix;
    s.frame = band_frame(s.model, s.band);
    s.resolvent = reduced_resolvent(s.model, s.band, s.spectra).matrix;
    if (cutoff) {
        s.cutoff = *cutoff;
    } else {
        // Anchor Lambda between the band's max and the next band's min.
        const double band_max = s.band.lambda.maxCoeff();
        double next_min = std::numeric_limits<double>::infinity();
        for (int i = 0; i < s.model.nb; ++i)
            next_min = std::min(next_min,
                                s.band.lambda[i] + s.band.certificate.gap_above[i]);
        s.cutoff.Lambda = std::isfinite(next_min) ? 0.5 * (band_max + next_min)
                                                  : band_max + 1.0;
        s.cutoff.width = s.band.certificate.delta / 2;
        s.cutoff.shape = CutoffShape::SmoothBump;
    }
    s.chi = smooth_cutoff(s.cutoff);
    return s;
}

/// Everything computed at one eps point.
struct EpsWork {
    double eps = 0.0;
    FullAssembly assembly;
    HermitianEig h_eig;
    Mat chi_h;
    ProjectionStack stack;  // with Peps and Ueps at full depth
    std::string error;      // non-empty on failure

    bool ok() const { return error.empty(); }
};

inline EpsWork compute_eps_point(const BandSetup& s, double eps, int depth,
                                 bool need_peps) {
    EpsWork w;
    w.eps = eps;
    try {
        w.assembly = assemble_full(s.model, eps);
        w.h_eig = eig_hermitian(w.assembly.full.matrix);
        w.chi_h = w.h_eig.apply(s.chi);
        w.stack = build_PN(s.p0, w.assembly.full.matrix, s.resolvent, depth, eps);
        if (need_peps) {
            w.stack = smooth_cutoff_projection(w.stack, w.h_eig, s.chi);
            RawOperator u = intertwiner(w.stack.Peps, s.p0);
            w.stack.Ueps = std::move(u.matrix);
            w.stack.has_Ueps = true;
        }
    } catch (const AdiabaticError& e) {
        w.error = e.what();
    }
    return w;
}

inline int env_thread_count() {
    if (const char* v = std::getenv("ADIABATIC_THREADS")) {
        const int n = std::atoi(v);
        if (n >= 1) return n;
    }
    return 1;
}

}  // namespace detail

/// Runs the full sweep: per eps assemble, build the correction tower and the
/// super-adiabatic projection, evaluate every requested claim, then fit
/// log-log rates against the pinned thresholds.
inline SweepReport run_sweep(const SweepConfig& cfg) {
    cfg.validate();
    detail::BandSetup setup = detail::prepare_band(cfg.model, cfg.band, cfg.cutoff);
    const int depth = cfg.depth;
    const bool need_peps =
        std::any_of(cfg.claims.begin(), cfg.claims.end(), [](ClaimKind k) {
            return k != ClaimKind::Commutator && k != ClaimKind::ProjectionDefect;
        });

    SweepReport report;
    report.nb = setup.model.nb;
    report.nf = setup.model.nf;
    report.rank = setup.model.n;
    report.depth = depth;
    report.delta = setup.band.certificate.delta;
    report.Lambda = setup.cutoff.Lambda;
    report.cutoff_width = setup.cutoff.width;

    const std::size_t ne = cfg.eps_grid.size();
    std::vector<detail::EpsWork> work(ne);
    const int nthreads = std::min<int>(detail::env_thread_count(), int(ne));
    if (nthreads <= 1) {
        for (std::size_t i = 0; i < ne; ++i)
            work[i] = detail::compute_eps_point(setup, cfg.eps_grid[i], depth, need_peps);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (int t = 0; t < nthreads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < ne; i = next.fetch_add(1))
                    work[i] =
                        detail::compute_eps_point(setup, cfg.eps_grid[i], depth, need_peps);
            });
        for (auto& t : pool) t.join();
    }
    for (const auto& w : work)
        if (!w.ok())
            report.errors.push_back("eps=" + std::to_string(w.eps) + ": " + w.error);

    // Instantiate claim rows (levels expanded).
    struct Row {
        ClaimKind kind;
        int level;
        double threshold;
    };
    std::vector<Row> rows;
    for (ClaimKind k : cfg.claims) {
        switch (k) {
            case ClaimKind::Commutator:
                for (int l = 0; l <= depth; ++l)
                    rows.push_back({k, l, l + 1 - kSlopeTolerance});
                break;
            case ClaimKind::ProjectionDefect:
                for (int l = 1; l <= depth; ++l)
                    rows.push_back({k, l, l + 1 - kSlopeTolerance});
                break;
            case ClaimKind::PepsP0:
                rows.push_back({k, -1, 0.7});
                break;
            case ClaimKind::PepsExpansion:
                for (int l = 0; l <= depth; ++l)
                    rows.push_back({k, l, l + 1 - kSlopeTolerance});
                break;
            case ClaimKind::SpectralDistance:
                rows.push_back({k, -1, depth + 1 - kSlopeTolerance});
                break;
            case ClaimKind::UnitaryEquivalence:
                rows.push_back({k, -1, depth + 1 - kSlopeTolerance});
                break;
            case ClaimKind::HeffExpansion:
                rows.push_back({k, -1, 2.7});
                break;
        }
    }

    // Hypothesis for the unitary-equivalence claim: ground band and a
    // lower-bounded kinetic part. With H_1 = 0 the kinetic part is
    // positive semi-definite; otherwise check the eigenvalue bound.
    auto unitary_equivalence_applicable = [&](const detail::EpsWork& w,
                                              std::string& why) {
        if (cfg.band.index != 1) {
            why = "skipped: tracked band is not the ground band";
            return false;
        }
        if (setup.model.perturbation_kind == PerturbationKind::Zero) return true;
        Mat kin = w.eps * w.eps * w.assembly.minus_delta_h + w.eps * w.assembly.h1;
        const double min_eig = eig_hermitian(kin).values.minCoeff();
        if (min_eig < -10.0 * w.eps) {
            why = "skipped: kinetic part not bounded below by -10 eps";
            return false;
        }
        return true;
    };

    for (const Row& row : rows) {
        ClaimResult res;
        res.name = claim_name(row.kind);
        res.level = row.level;
        res.threshold = row.threshold;
        for (std::size_t i = 0; i < ne; ++i) {
            const auto& w = work[i];
            res.eps.push_back(cfg.eps_grid[i]);
            double value = std::numeric_limits<double>::quiet_NaN();
            if (w.ok()) {
                switch (row.kind) {
                    case ClaimKind::Commutator: {
                        Mat p = w.stack.partial(row.level);
                        value = commutator_norm(w.assembly.full.matrix, p, w.chi_h);
                        break;
                    }
                    case ClaimKind::ProjectionDefect: {
                        Mat p = w.stack.partial(row.level);
                        value = operator_norm(Mat(p * p - p));
                        break;
                    }
                    case ClaimKind::PepsP0:
                        value = operator_norm(Mat(w.stack.Peps - setup.p0));
                        break;
                    case ClaimKind::PepsExpansion: {
                        Mat diff = (w.stack.Peps - w.stack.partial(row.level)) * w.chi_h;
                        value = operator_norm(diff);
                        break;
                    }
                    case ClaimKind::SpectralDistance: {
                        EffectiveOperator heff = effective_operator(
                            w.stack, w.assembly.full.matrix, setup.frame);
                        HermitianEig he = eig_hermitian(heff.matrix);
                        const double limit = setup.cutoff.Lambda - report.delta;
                        double worst = 0.0;
                        bool any = false;
                        for (Eigen::Index k = 0; k < he.values.size(); ++k) {
                            const double mu = he.values[k];
                            if (mu > limit) continue;
                            any = true;
                            double dist = std::numeric_limits<double>::infinity();
                            for (Eigen::Index q = 0; q < w.h_eig.values.size(); ++q)
                                dist = std::min(dist, std::abs(mu - w.h_eig.values[q]));
                            worst = std::max(worst, dist);
                        }
                        if (any) value = worst;
                        break;
                    }
                    case ClaimKind::UnitaryEquivalence: {
                        std::string why;
                        if (!unitary_equivalence_applicable(w, why)) {
                            if (res.notes.empty()) res.notes.push_back(why);
                            break;
                        }
                        EffectiveOperator heff = effective_operator(
                            w.stack, w.assembly.full.matrix, setup.frame);
                        HermitianEig he = eig_hermitian(heff.matrix);
                        Mat hx = w.h_eig.apply(
                            [&](double t) { return t * setup.chi(t); });
                        Mat lhs = setup.frame.adjoint() *
                                  (w.stack.Ueps.adjoint() * hx * w.stack.Ueps) *
                                  setup.frame;
                        Mat rhs = he.apply([&](double t) { return t * setup.chi(t); });
                        value = operator_norm(Mat(lhs - rhs));
                        break;
                    }
                    case ClaimKind::HeffExpansion: {
                        EffectiveOperator heff = effective_operator(
                            w.stack, w.assembly.full.matrix, setup.frame);
                        EffectiveOperator ha =
                            adiabatic_operator(setup.frame, w.assembly.full.matrix);
                        EffectiveOperator corr = second_order_correction(
                            setup.p0, w.assembly.full.matrix, setup.resolvent,
                            setup.frame);
                        HermitianEig he = eig_hermitian(heff.matrix);
                        Mat chi1 = he.apply(setup.chi);
                        Mat chi2 = he.apply(
                            [&](double t) { return setup.chi(t) * setup.chi(t); });
                        Mat lhs = heff.matrix * chi2;
                        Mat rhs = chi1 * (ha.matrix + corr.matrix) * chi1;
                        value = operator_norm(Mat(lhs - rhs));
                        break;
                    }
                }
            }
            res.norms.push_back(value);
            res.excluded.push_back(!(value > kNoiseFloor));
        }

        std::vector<double> fe, fn;
        bool all_floor = true;
        for (std::size_t i = 0; i < ne; ++i) {
            if (std::isnan(res.norms[i])) continue;
            if (res.norms[i] > kNoiseFloor) {
                fe.push_back(res.eps[i]);
                fn.push_back(res.norms[i]);
                all_floor = false;
            }
        }
        if (all_floor) {
            bool any_value = std::any_of(res.norms.begin(), res.norms.end(),
                                         [](double v) { return !std::isnan(v); });
            res.exact_regime = any_value;
            res.pass = any_value;
            if (any_value)
                res.notes.push_back("exact regime: all norms at the round-off floor");
        } else if (fe.size() >= 3) {
            res.fit = fit_rate(fe, fn);
            res.pass = res.fit->slope >= res.threshold;
        } else {
            res.notes.push_back("insufficient points above the noise floor");
            res.pass = false;
        }
        report.claims.push_back(std::move(res));
    }
    return report;
}

// --- spectrum table ---

struct SpectrumTable {
    std::vector<double> h;      // lowest eigenvalues of H
    std::vector<double> ha;     // of the adiabatic operator
    std::vector<double> heff;   // of the effective operator
    bool clipped = false;
};

inline SpectrumTable spectrum_command(const ModelConfig& mc, double eps, int count,
                                      const BandSelector& sel = {},
                                      int depth = 2) {
    detail::BandSetup setup = detail::prepare_band(mc, sel, std::nullopt);
    detail::EpsWork w = detail::compute_eps_point(setup, eps, depth, true);
    if (!w.ok()) throw AdiabaticError(w.error);
    EffectiveOperator heff =
        effective_operator(w.stack, w.assembly.full.matrix, setup.frame);
    EffectiveOperator ha = adiabatic_operator(setup.frame, w.assembly.full.matrix);
    HermitianEig eh = eig_hermitian(heff.matrix);
    HermitianEig ea = eig_hermitian(ha.matrix);

    SpectrumTable t;
    const int n_band = int(eh.values.size());
    if (count > n_band) {
        t.clipped = true;
        count = n_band;
    }
    for (int k = 0; k < count; ++k) {
        t.h.push_back(w.h_eig.values[k]);
        t.ha.push_back(ea.values[k]);
        t.heff.push_back(eh.values[k]);
    }
    return t;
}

// --- report persistence ---

inline json report_to_json(const SweepReport& r) {
    json j = json::object();
    j["environment"] = {{"base_points", r.nb},
                        {"fibre_points", r.nf},
                        {"rank", r.rank},
                        {"depth", r.depth},
                        {"delta", r.delta},
                        {"Lambda", r.Lambda},
                        {"cutoff_width", r.cutoff_width}};
    j["errors"] = r.errors;
    j["all_pass"] = r.all_pass();
    json claims = json::array();
    for (const auto& c : r.claims) {
        json jc = json::object();
        jc["name"] = c.name;
        jc["level"] = c.level;
        jc["eps"] = c.eps;
        json norms = json::array();
        for (double v : c.norms)
            norms.push_back(std::isnan(v) ? json(nullptr) : json(v));
        jc["norms"] = norms;
        jc["excluded"] = c.excluded;
        if (c.fit) {
            jc["slope"] = c.fit->slope;
            jc["intercept"] = c.fit->intercept;
            jc["r2"] = c.fit->r2;
        }
        jc["threshold"] = c.threshold;
        jc["exact_regime"] = c.exact_regime;
        jc["pass"] = c.pass;
        jc["notes"] = c.notes;
        claims.push_back(jc);
    }
    j["claims"] = claims;
    return j;
}

/// Writes report.json (full) and claims.csv (per-claim norm table) under dir.
inline void export_report(const SweepReport& r, const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir + "/report.json");
        if (!out) throw AdiabaticError("cannot write report.json under " + dir);
        out << report_to_json(r).dump(2) << "\n";
    }
    std::ofstream csv(dir + "/claims.csv");
    if (!csv) throw AdiabaticError("cannot write claims.csv under " + dir);
    csv.precision(17);
    csv << "claim,level,eps,norm,excluded\n";
    for (const auto& c : r.claims)
        for (std::size_t i = 0; i < c.eps.size(); ++i)
            csv << c.name << "," << c.level << "," << c.eps[i] << "," << c.norms[i]
                << "," << (c.excluded[i] ? 1 : 0) << "\n";
}

/// Sweep configuration from the documented JSON layout.
inline SweepConfig parse_sweep_config(const json& j) {
    detail::reject_unknown_keys(
        j, {"model", "band", "depth", "epsilon", "cutoff", "claims"}, "sweep");
    SweepConfig cfg;
    cfg.model = parse_model_config(j.at("model"));
    if (j.contains("band")) {
        detail::reject_unknown_keys(j.at("band"), {"index", "multiplicity"}, "band");
        cfg.band.index = j.at("band").value("index", 1);
        cfg.band.multiplicity = j.at("band").value("multiplicity", 1);
    }
    cfg.depth = j.value("depth", 2);
    const json& e = j.at("epsilon");
    if (e.is_array()) {
        cfg.eps_grid = e.get<std::vector<double>>();
    } else {
        detail::reject_unknown_keys(e, {"pow2_from", "pow2_to"}, "epsilon");
        const int from = e.at("pow2_from").get<int>();
        const int to = e.at("pow2_to").get<int>();
        if (to > from) throw ConfigError("epsilon: pow2_to must be <= pow2_from");
        for (int p = from; p >= to; --p) cfg.eps_grid.push_back(std::ldexp(1.0, p));
    }
    if (j.contains("cutoff")) {
        detail::reject_unknown_keys(j.at("cutoff"), {"Lambda", "width"}, "cutoff");
        CutoffSpec spec;
        spec.Lambda = j.at("cutoff").at("Lambda").get<double>();
        spec.width = j.at("cutoff").at("width").get<double>();
        cfg.cutoff = spec;
    }
    if (j.contains("claims")) {
        cfg.claims.clear();
        for (const auto& name : j.at("claims")) {
            auto k = claim_from_name(name.get<std::string>());
            if (!k) throw ConfigError("unknown claim \"" + name.get<std::string>() + "\"");
            cfg.claims.push_back(*k);
        }
    }
    cfg.validate();
    return cfg;
}

}  // namespace adiabatic
