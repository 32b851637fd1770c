// Command-line front end: model validation, band export, rate sweeps and
// spectrum tables.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "adiabatic/bands.hpp"
#include "adiabatic/config_json.hpp"
#include "adiabatic/sweep.hpp"

using namespace adiabatic;

namespace {

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    json j;
    in >> j;
    return j;
}

int cmd_validate(const std::string& path) {
    BundleModel model = build_model(parse_model_config(load_json(path)));
    DiagnosticsReport report = validate_model(model);
    for (const auto& c : report.checks) {
        std::printf("%-32s %s  worst=%.3e %s\n", c.name.c_str(),
                    c.pass ? "PASS" : "FAIL", c.worst,
                    c.location.empty() ? "" : ("at " + c.location).c_str());
    }
    return report.all_pass() ? 0 : 1;
}

int cmd_bands(const std::string& path, const std::string& out, int index,
              int multiplicity) {
    BundleModel model = build_model(parse_model_config(load_json(path)));
    FibreSpectra spectra = solve_fibre_spectra(model);
    Eigenband band = track_band(spectra, {index, multiplicity});
    band.certificate = certify_gap(band, spectra);
    std::printf("band index %d, multiplicity %d\n", index, multiplicity);
    std::printf("  lambda range [%.8g, %.8g]\n", band.lambda.minCoeff(),
                band.lambda.maxCoeff());
    std::printf("  gap certificate delta = %.8g\n", band.certificate.delta);
    if (!out.empty()) {
        export_band_json(out, band);
        std::printf("  written to %s\n", out.c_str());
    }
    return 0;
}

int cmd_sweep(const std::string& path, const std::string& out) {
    SweepConfig cfg = parse_sweep_config(load_json(path));
    SweepReport report = run_sweep(cfg);
    for (const auto& c : report.claims) {
        std::printf("%-20s", c.level >= 0
                                 ? (c.name + "[" + std::to_string(c.level) + "]").c_str()
                                 : c.name.c_str());
        if (c.exact_regime) {
            std::printf(" PASS  (exact regime)\n");
        } else if (c.fit) {
            std::printf(" %s  slope=%.3f (threshold %.2f) R2=%.4f\n",
                        c.pass ? "PASS" : "FAIL", c.fit->slope, c.threshold,
                        c.fit->r2);
        } else {
            std::printf(" %s  %s\n", c.pass ? "PASS" : "FAIL",
                        c.notes.empty() ? "no fit" : c.notes.front().c_str());
        }
    }
    for (const auto& e : report.errors) std::printf("error: %s\n", e.c_str());
    if (!out.empty()) export_report(report, out);
    return report.all_pass() ? 0 : 1;
}

int cmd_spectrum(const std::string& path, double eps, int count, int band) {
    SpectrumTable t = spectrum_command(parse_model_config(load_json(path)), eps, count,
                                       {band, 1});
    if (t.clipped) std::printf("warning: count clipped to band dimension\n");
    std::printf("%4s %16s %16s %16s %12s %12s\n", "k", "H", "H_a", "H_eff",
                "|H-Heff|", "|Ha-Heff|");
    for (std::size_t k = 0; k < t.heff.size(); ++k)
        std::printf("%4zu %16.10g %16.10g %16.10g %12.3e %12.3e\n", k, t.h[k], t.ha[k],
                    t.heff[k], std::abs(t.h[k] - t.heff[k]),
                    std::abs(t.ha[k] - t.heff[k]));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adiabatic spectral toolkit"};
    app.require_subcommand(1);

    std::string model_path, out, sweep_path;
    int band_index = 1, multiplicity = 1, count = 8;
    double eps = 1.0 / 32;

    auto* validate = app.add_subcommand("validate", "check model invariants");
    validate->add_option("model", model_path, "model config JSON")->required();

    auto* bands = app.add_subcommand("bands", "track a band and certify its gap");
    bands->add_option("model", model_path, "model config JSON")->required();
    bands->add_option("--out", out, "write band JSON here");
    bands->add_option("--band", band_index, "band index at x=0 (1-based)");
    bands->add_option("--multiplicity", multiplicity, "band multiplicity");

    auto* sweep = app.add_subcommand("sweep", "run an eps sweep with rate fits");
    sweep->add_option("config", sweep_path, "sweep config JSON")->required();
    sweep->add_option("--out", out, "report output directory");

    auto* spectrum = app.add_subcommand("spectrum", "eigenvalue table of H, H_a, H_eff");
    spectrum->add_option("model", model_path, "model config JSON")->required();
    spectrum->add_option("--eps", eps, "adiabatic parameter");
    spectrum->add_option("--count", count, "number of eigenvalues");
    spectrum->add_option("--band", band_index, "band index at x=0 (1-based)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return cmd_validate(model_path);
        if (bands->parsed()) return cmd_bands(model_path, out, band_index, multiplicity);
        if (sweep->parsed()) return cmd_sweep(sweep_path, out);
        if (spectrum->parsed()) return cmd_spectrum(model_path, eps, count, band_index);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
