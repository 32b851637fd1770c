#pragma once

#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "adiabatic/core.hpp"
#include "adiabatic/model.hpp"

namespace adiabatic {

using json = nlohmann::json;

namespace detail {

inline void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto& item : j.items())
        if (!allowed.count(item.key()))
            throw ConfigError(where + ": unknown key \"" + item.key() + "\"");
}

inline double get_num(const json& j, const std::string& key, double fallback) {
    return j.contains(key) ? j.at(key).get<double>() : fallback;
}

}  // namespace detail

/// Parses the documented model-config JSON. Function fields are given as
/// named presets plus parameters; unknown keys are rejected.
inline ModelConfig parse_model_config(const json& j) {
    detail::reject_unknown_keys(
        j,
        {"base_circumference", "base_points", "fibre_points", "rank", "warp",
         "potential", "connection_x", "connection_y", "perturbation"},
        "model");

    ModelConfig cfg;
    cfg.base_circumference = detail::get_num(j, "base_circumference", 2.0 * M_PI);
    cfg.base_points = j.contains("base_points") ? j.at("base_points").get<int>() : 64;
    cfg.fibre_points = j.contains("fibre_points") ? j.at("fibre_points").get<int>() : 24;
    cfg.rank = j.contains("rank") ? j.at("rank").get<int>() : 1;
    const int n = cfg.rank;
    const double L = cfg.base_circumference;

    if (j.contains("warp")) {
        const json& w = j.at("warp");
        detail::reject_unknown_keys(
            w, {"preset", "value", "offset", "amplitude", "harmonic"}, "warp");
        const std::string preset = w.at("preset").get<std::string>();
        if (preset == "const") {
            const double v = detail::get_num(w, "value", 1.0);
            cfg.warp = [v](double) { return v; };
        } else if (preset == "sin") {
            const double off = detail::get_num(w, "offset", 1.0);
            const double amp = detail::get_num(w, "amplitude", 0.3);
            const double harm = detail::get_num(w, "harmonic", 1.0);
            cfg.warp = [off, amp, harm, L](double x) {
                return off + amp * std::sin(2.0 * M_PI * harm * x / L);
            };
        } else {
            throw ConfigError("warp: unknown preset \"" + preset + "\"");
        }
    } else {
        cfg.warp = [](double) { return 1.0; };
    }

    if (j.contains("potential")) {
        const json& p = j.at("potential");
        detail::reject_unknown_keys(
            p, {"preset", "values", "amplitudes", "harmonic", "phases"}, "potential");
        const std::string preset = p.at("preset").get<std::string>();
        if (preset == "zero") {
            cfg.potential = nullptr;
        } else if (preset == "constant_diag" || preset == "cosine_diag" ||
                   preset == "cosine_bump_diag" || preset == "cosine_wave_diag") {
            std::vector<double> values = p.at("values").get<std::vector<double>>();
            if (int(values.size()) != n)
                throw ConfigError("potential: \"values\" must have one entry per rank");
            std::vector<double> amps(n, 0.0), phases(n, 0.0);
            double harm = 1.0;
            if (preset != "constant_diag") {
                amps = p.at("amplitudes").get<std::vector<double>>();
                if (int(amps.size()) != n)
                    throw ConfigError("potential: \"amplitudes\" must match rank");
                if (p.contains("phases")) {
                    phases = p.at("phases").get<std::vector<double>>();
                    if (int(phases.size()) != n)
                        throw ConfigError("potential: \"phases\" must match rank");
                }
                harm = detail::get_num(p, "harmonic", 1.0);
            }
            // Fibre profiles: a fibre-constant potential commutes with every
            // fibre eigenprojection and leaves the model separable, so the
            // non-trivial presets modulate along the fibre. The bump 4y(1-y)
            // shifts the band function at first order; the wave sin(2 pi y) is
            // orthogonal to the ground-state density, which mixes bands while
            // keeping the band function nearly flat.
            const int profile_kind = (preset == "cosine_bump_diag")   ? 1
                                     : (preset == "cosine_wave_diag") ? 2
                                                                      : 0;
            cfg.potential = [values, amps, phases, harm, L, n,
                             profile_kind](double x, double y) {
                const double profile = profile_kind == 1 ? 4.0 * y * (1.0 - y)
                                       : profile_kind == 2
                                           ? std::sin(2.0 * M_PI * y)
                                           : 1.0;
                Mat v = Mat::Zero(n, n);
                for (int c = 0; c < n; ++c)
                    v(c, c) = profile * (values[c] + amps[c] * std::cos(2.0 * M_PI * harm *
                                                                            x / L +
                                                                        phases[c]));
                return v;
            };
        } else {
            throw ConfigError("potential: unknown preset \"" + preset + "\"");
        }
    }

    if (j.contains("connection_x")) {
        const json& c = j.at("connection_x");
        detail::reject_unknown_keys(c, {"preset", "value"}, "connection_x");
        const std::string preset = c.at("preset").get<std::string>();
        if (preset == "zero") {
            cfg.connection_x = nullptr;
        } else if (preset == "constant_phase") {
            const double a = detail::get_num(c, "value", 0.0);
            cfg.connection_x = [a, n](double, double) {
                return Mat(Complex(0, a) * Mat::Identity(n, n));
            };
        } else {
            throw ConfigError("connection_x: unknown preset \"" + preset + "\"");
        }
    }

    if (j.contains("connection_y")) {
        const json& c = j.at("connection_y");
        detail::reject_unknown_keys(c, {"preset", "amplitude"}, "connection_y");
        const std::string preset = c.at("preset").get<std::string>();
        if (preset == "zero") {
            cfg.connection_y = nullptr;
        } else if (preset == "phase_bump") {
            const double t = detail::get_num(c, "amplitude", 0.0);
            cfg.connection_y = [t, n](double, double y) {
                return Mat(Complex(0, t * std::sin(M_PI * y)) * Mat::Identity(n, n));
            };
        } else {
            throw ConfigError("connection_y: unknown preset \"" + preset + "\"");
        }
    }

    if (j.contains("perturbation")) {
        const json& p = j.at("perturbation");
        detail::reject_unknown_keys(p, {"kind", "amplitude", "harmonic", "offset"},
                                    "perturbation");
        const std::string kind = p.at("kind").get<std::string>();
        const double amp = detail::get_num(p, "amplitude", 0.0);
        const double harm = detail::get_num(p, "harmonic", 1.0);
        const double off = detail::get_num(p, "offset", 0.0);
        if (kind == "zero") {
            cfg.perturbation.kind = PerturbationKind::Zero;
        } else if (kind == "first_order") {
            cfg.perturbation.kind = PerturbationKind::FirstOrder;
            cfg.perturbation.first_order_coeff = [amp, harm, off, L, n](double x, double) {
                return Mat((off + amp * std::sin(2.0 * M_PI * harm * x / L)) *
                           Mat::Identity(n, n));
            };
        } else if (kind == "second_order") {
            cfg.perturbation.kind = PerturbationKind::SecondOrder;
            cfg.perturbation.second_order_coeff = [amp, harm, off, L](double x) {
                return off + amp * std::sin(2.0 * M_PI * harm * x / L);
            };
        } else {
            throw ConfigError("perturbation: unknown kind \"" + kind + "\"");
        }
    }

    return cfg;
}

inline ModelConfig load_model_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open model config " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("invalid JSON in " + path + ": " + e.what());
    }
    return parse_model_config(j);
}

}  // namespace adiabatic
