// Tests for the rate-fitting and sweep driver: log-log fits against closed
// forms, config parsing, report persistence, and determinism.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "adiabatic/sweep.hpp"

using namespace adiabatic;
using Catch::Approx;

namespace {

std::vector<double> pow2_grid(int from, int to) {
    std::vector<double> g;
    for (int p = from; p >= to; --p) g.push_back(std::ldexp(1.0, p));
    return g;
}

ModelConfig flat_scalar_config(int nb, int nf) {
    ModelConfig mc;
    mc.base_circumference = 2.0 * M_PI;
    mc.base_points = nb;
    mc.fibre_points = nf;
    mc.rank = 1;
    mc.warp = [](double) { return 1.0; };
    return mc;
}

// Scalar model with a fibre-modulated potential; [H, P0] != 0 here, so the
// sweep norms sit above the round-off floor.
ModelConfig detuned_scalar_config(int nb, int nf, double amp) {
    ModelConfig mc = flat_scalar_config(nb, nf);
    mc.potential = [amp](double x, double y) {
        Mat v(1, 1);
        v(0, 0) = amp * std::cos(x) * std::sin(2.0 * M_PI * y);
        return v;
    };
    return mc;
}

SweepConfig tiny_sweep_config() {
    SweepConfig cfg;
    cfg.model = detuned_scalar_config(12, 6, 2.0);
    cfg.band = BandSelector{1, 1};
    cfg.depth = 1;
    cfg.eps_grid = pow2_grid(-3, -6);
    cfg.claims = {ClaimKind::Commutator, ClaimKind::ProjectionDefect,
                  ClaimKind::PepsP0};
    return cfg;
}

}  // namespace

TEST_CASE("fit_rate recovers an exact power law exactly", "[sweep]") {
    std::vector<double> eps = pow2_grid(-3, -8);
    std::vector<double> norms;
    for (double e : eps) norms.push_back(3.7 * e * e);
    RateFit fit = fit_rate(eps, norms);
    CHECK(fit.slope == Approx(2.0).margin(1e-12));
    CHECK(fit.intercept == Approx(std::log(3.7)).margin(1e-12));
    CHECK(fit.r2 == Approx(1.0).margin(1e-12));
}

TEST_CASE("fit_rate tolerates a subleading correction", "[sweep]") {
    std::vector<double> eps = pow2_grid(-3, -8);
    std::vector<double> norms;
    for (double e : eps) norms.push_back(0.42 * e * e * e * (1.0 + 0.1 * e));
    RateFit fit = fit_rate(eps, norms);
    CHECK(fit.slope >= 2.9);
    CHECK(fit.slope <= 3.1);
    CHECK(fit.r2 > 0.999);
}

TEST_CASE("fit_rate input validation", "[sweep]") {
    CHECK_THROWS_AS(fit_rate({0.1, 0.05}, {1.0, 0.5, 0.25}), DimensionMismatch);
    CHECK_THROWS_AS(fit_rate({0.1, 0.05}, {1.0, 0.5}), InsufficientPoints);
    CHECK_THROWS_AS(fit_rate({}, {}), InsufficientPoints);
}

TEST_CASE("norms pinned at the floor leave nothing to fit", "[sweep]") {
    // Caller-side contract: points at or below the noise floor are dropped
    // before fitting; if everything is at the floor the fit must refuse.
    std::vector<double> eps = pow2_grid(-3, -7);
    std::vector<double> norms(eps.size(), 1e-14);
    std::vector<double> fe, fn;
    for (std::size_t i = 0; i < eps.size(); ++i)
        if (norms[i] > kNoiseFloor) {
            fe.push_back(eps[i]);
            fn.push_back(norms[i]);
        }
    CHECK(fe.empty());
    CHECK_THROWS_AS(fit_rate(fe, fn), InsufficientPoints);
}

TEST_CASE("sweep config validation", "[sweep]") {
    SweepConfig cfg = tiny_sweep_config();
    CHECK_NOTHROW(cfg.validate());

    SECTION("too few eps points") {
        cfg.eps_grid = {0.25, 0.125, 0.0625};
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
    SECTION("eps above 1/4") {
        cfg.eps_grid = {0.5, 0.25, 0.125, 0.0625};
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
    SECTION("non-positive eps") {
        cfg.eps_grid = {0.25, 0.125, 0.0625, 0.0};
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
    SECTION("grid not strictly decreasing") {
        cfg.eps_grid = {0.25, 0.125, 0.125, 0.0625};
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
    SECTION("unsupported depth") {
        cfg.depth = 7;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
}

TEST_CASE("sweep config JSON parsing", "[sweep]") {
    json j = json::parse(R"({
        "model": {
            "base_points": 12, "fibre_points": 6, "rank": 1,
            "warp": {"preset": "const", "value": 1.0},
            "potential": {"preset": "cosine_wave_diag",
                          "values": [0.0], "amplitudes": [2.0]}
        },
        "band": {"index": 1, "multiplicity": 1},
        "depth": 1,
        "epsilon": {"pow2_from": -3, "pow2_to": -6},
        "claims": ["commutator", "peps_p0"]
    })");

    SECTION("pow2 range expands to a decreasing grid") {
        SweepConfig cfg = parse_sweep_config(j);
        REQUIRE(cfg.eps_grid.size() == 4);
        CHECK(cfg.eps_grid.front() == Approx(0.125));
        CHECK(cfg.eps_grid.back() == Approx(1.0 / 64.0));
        REQUIRE(cfg.claims.size() == 2);
        CHECK(cfg.claims[0] == ClaimKind::Commutator);
        CHECK(cfg.claims[1] == ClaimKind::PepsP0);
        CHECK(cfg.depth == 1);
    }
    SECTION("explicit eps array is accepted") {
        j["epsilon"] = {0.25, 0.125, 0.0625, 0.03125};
        SweepConfig cfg = parse_sweep_config(j);
        CHECK(cfg.eps_grid == std::vector<double>{0.25, 0.125, 0.0625, 0.03125});
    }
    SECTION("unknown top-level key is rejected") {
        j["extra"] = 1;
        CHECK_THROWS_AS(parse_sweep_config(j), ConfigError);
    }
    SECTION("unknown claim name is rejected") {
        j["claims"] = {"commutator", "no_such_claim"};
        CHECK_THROWS_AS(parse_sweep_config(j), ConfigError);
    }
    SECTION("inverted pow2 range is rejected") {
        j["epsilon"] = {{"pow2_from", -6}, {"pow2_to", -3}};
        CHECK_THROWS_AS(parse_sweep_config(j), ConfigError);
    }
}

TEST_CASE("claim names round-trip", "[sweep]") {
    for (ClaimKind k :
         {ClaimKind::Commutator, ClaimKind::ProjectionDefect, ClaimKind::PepsP0,
          ClaimKind::PepsExpansion, ClaimKind::SpectralDistance,
          ClaimKind::UnitaryEquivalence, ClaimKind::HeffExpansion}) {
        auto back = claim_from_name(claim_name(k));
        REQUIRE(back.has_value());
        CHECK(*back == k);
    }
    CHECK_FALSE(claim_from_name("bogus").has_value());
}

TEST_CASE("run_sweep expands claim rows by level", "[sweep]") {
    SweepConfig cfg = tiny_sweep_config();
    SweepReport rep = run_sweep(cfg);
    // commutator levels 0..depth, defect levels 1..depth, peps_p0 once.
    REQUIRE(rep.claims.size() == std::size_t(2 * cfg.depth + 2));
    CHECK(rep.claims[0].name == "commutator");
    CHECK(rep.claims[0].level == 0);
    CHECK(rep.claims[1].level == 1);
    CHECK(rep.claims[2].name == "projection_defect");
    CHECK(rep.claims[2].level == 1);
    CHECK(rep.claims[3].name == "peps_p0");
    CHECK(rep.claims[3].level == -1);
    CHECK(rep.errors.empty());
    for (const auto& c : rep.claims) {
        CHECK(c.eps.size() == cfg.eps_grid.size());
        CHECK(c.norms.size() == cfg.eps_grid.size());
        CHECK(c.excluded.size() == cfg.eps_grid.size());
    }
    // The leading commutator norm behaves like eps on this model.
    const ClaimResult& c0 = rep.claims[0];
    REQUIRE(c0.fit.has_value());
    CHECK(c0.fit->slope >= 0.7);
    CHECK(c0.pass);
}

TEST_CASE("separable model reports the exact regime", "[sweep]") {
    // With a fibre-constant potential the band projection commutes with H
    // exactly, so every commutator norm sits at the round-off floor.
    SweepConfig cfg = tiny_sweep_config();
    cfg.model = flat_scalar_config(12, 6);
    cfg.claims = {ClaimKind::Commutator};
    SweepReport rep = run_sweep(cfg);
    REQUIRE(rep.claims.size() == 2);
    for (const auto& c : rep.claims) {
        CHECK(c.exact_regime);
        CHECK(c.pass);
        for (std::size_t i = 0; i < c.norms.size(); ++i) {
            CHECK(c.norms[i] <= kNoiseFloor);
            CHECK(c.excluded[i]);
        }
    }
    CHECK(rep.all_pass());
}

TEST_CASE("identical configs produce bit-identical reports", "[sweep]") {
    SweepConfig cfg = tiny_sweep_config();
    const std::string a = report_to_json(run_sweep(cfg)).dump(2);
    const std::string b = report_to_json(run_sweep(cfg)).dump(2);
    CHECK(a == b);
}

TEST_CASE("worker-thread count does not change the report", "[sweep]") {
    SweepConfig cfg = tiny_sweep_config();
    const std::string serial = report_to_json(run_sweep(cfg)).dump(2);
    setenv("ADIABATIC_THREADS", "3", 1);
    const std::string threaded = report_to_json(run_sweep(cfg)).dump(2);
    unsetenv("ADIABATIC_THREADS");
    CHECK(serial == threaded);
}

TEST_CASE("report export round-trips and matches the schema", "[sweep]") {
    SweepConfig cfg = tiny_sweep_config();
    SweepReport rep = run_sweep(cfg);
    const std::string dir =
        (std::filesystem::temp_directory_path() / "adiabatic_report_test").string();
    std::filesystem::remove_all(dir);
    export_report(rep, dir);

    SECTION("JSON round-trip") {
        std::ifstream in(dir + "/report.json");
        REQUIRE(in.good());
        json j;
        in >> j;
        CHECK(j == report_to_json(rep));
        CHECK(j.at("environment").at("base_points").get<int>() == 12);
        CHECK(j.at("all_pass").get<bool>() == rep.all_pass());
    }

    SECTION("report carries every field the schema requires") {
        std::ifstream sin(std::string(ADIABATIC_SOURCE_DIR) +
                          "/docs/report_schema.json");
        REQUIRE(sin.good());
        json schema;
        sin >> schema;
        json j = report_to_json(rep);
        for (const auto& key : schema.at("required"))
            CHECK(j.contains(key.get<std::string>()));
        const json& env_req =
            schema.at("properties").at("environment").at("required");
        for (const auto& key : env_req)
            CHECK(j.at("environment").contains(key.get<std::string>()));
        const json& claim_req =
            schema.at("properties").at("claims").at("items").at("required");
        REQUIRE(!j.at("claims").empty());
        for (const auto& jc : j.at("claims"))
            for (const auto& key : claim_req)
                CHECK(jc.contains(key.get<std::string>()));
    }

    SECTION("CSV has one row per claim per eps point") {
        std::ifstream csv(dir + "/claims.csv");
        REQUIRE(csv.good());
        std::string line;
        REQUIRE(std::getline(csv, line));
        CHECK(line == "claim,level,eps,norm,excluded");
        std::size_t rows = 0;
        while (std::getline(csv, line))
            if (!line.empty()) ++rows;
        CHECK(rows == rep.claims.size() * cfg.eps_grid.size());
    }
}

TEST_CASE("spectrum table matches the flat closed form", "[sweep]") {
    const int nb = 12, nf = 6;
    ModelConfig mc = flat_scalar_config(nb, nf);
    const double eps = 1.0 / 16.0;
    SpectrumTable t = spectrum_command(mc, eps, 5);
    REQUIRE(t.heff.size() == 5);
    REQUIRE(t.ha.size() == 5);
    CHECK_FALSE(t.clipped);

    // On the flat model the effective operator is exactly the adiabatic one:
    // eps^2 times the periodic horizontal Laplacian shifted by the first
    // fibre eigenvalue.
    const double hy = 1.0 / nf;
    const double lambda1 = 2.0 / (hy * hy) * (1.0 - std::cos(M_PI * hy));
    const double hx = 2.0 * M_PI / nb;
    std::vector<double> expected;
    for (int k = 0; k < nb; ++k)
        expected.push_back(lambda1 + eps * eps * 2.0 / (hx * hx) *
                                         (1.0 - std::cos(2.0 * M_PI * k / nb)));
    std::sort(expected.begin(), expected.end());
    for (int k = 0; k < 5; ++k) {
        CHECK(t.heff[k] == Approx(expected[k]).margin(1e-8));
        CHECK(t.ha[k] == Approx(expected[k]).margin(1e-8));
        // Bottom of sigma(H) coincides with the band spectrum here.
        CHECK(t.h[k] == Approx(expected[k]).margin(1e-8));
    }
}

TEST_CASE("spectrum table clips an oversized count", "[sweep]") {
    ModelConfig mc = flat_scalar_config(12, 6);
    SpectrumTable t = spectrum_command(mc, 1.0 / 16.0, 1000);
    CHECK(t.clipped);
    CHECK(t.heff.size() == 12);
}
