#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "adiabatic/core.hpp"

namespace adiabatic {

enum class PerturbationKind { Zero, FirstOrder, SecondOrder };

/// Specification of the perturbation H_1. The first-order kind carries a
/// Hermitian matrix field b(x,y) multiplying the symmetrized horizontal
/// momentum, plus an optional Hermitian zeroth-order field. The second-order
/// kind reuses the horizontal stencil with a scalar edge weight c(x).
struct PerturbationSpec {
    PerturbationKind kind = PerturbationKind::Zero;
    std::function<Mat(double, double)> first_order_coeff;   // b(x,y), Hermitian n x n
    std::function<Mat(double, double)> zeroth_order_coeff;  // Hermitian n x n
    std::function<double(double)> second_order_coeff;       // c(x)
};

/// Continuum problem definition; all fields are functions of (x, y) with x on
/// the periodic base circle [0, L) and y on the unit interval.
struct ModelConfig {
    double base_circumference = 2.0 * M_PI;
    int base_points = 64;
    int fibre_points = 24;
    int rank = 1;
    std::function<double(double)> warp;                   // f(x) > 0
    std::function<Mat(double, double)> potential;         // Hermitian n x n
    std::function<Mat(double, double)> connection_x;      // anti-Hermitian n x n
    std::function<Mat(double, double)> connection_y;      // anti-Hermitian n x n
    PerturbationSpec perturbation;
};

/// Grid limits. The lower base floor admits the tiny cross-check grids used
/// by the brute-force comparisons.
inline constexpr int kMinBasePoints = 6;
inline constexpr int kMinFibrePoints = 4;
inline constexpr int kMaxGridPoints = 4096;
inline constexpr double kFieldTol = 1e-12;

/// The validated, sampled problem. Connections are sampled on grid edges
/// (midpoints), everything else on nodes. Interior fibre nodes are
/// y_j = j/N_F for j = 1..N_F-1; Dirichlet ends are eliminated.
struct BundleModel {
    double L = 0.0;
    int nb = 0;    // base grid points
    int nf = 0;    // fibre subintervals; nf-1 interior nodes
    int n = 1;     // bundle rank

    RealVec warp;                    // f at base nodes, size nb
    std::vector<Mat> potential;      // V at (i, j), index i*(nf-1)+(j-1)
    std::vector<Mat> connection_x;   // A_x at x-edge i+1/2, y node j; i*(nf-1)+(j-1)
    std::vector<Mat> connection_y;   // A_y at x node i, y-edge e+1/2; i*nf + e
    PerturbationKind perturbation_kind = PerturbationKind::Zero;
    std::vector<Mat> pert_first;     // b at nodes
    std::vector<Mat> pert_zeroth;    // at nodes
    RealVec pert_second;             // c at base nodes

    ModelConfig config;              // retained for grid refinement

    double hx() const { return L / nb; }
    double hy() const { return 1.0 / nf; }
    int fibre_nodes() const { return nf - 1; }
    int fibre_dim() const { return (nf - 1) * n; }
    int dim() const { return nb * fibre_dim(); }
    double x(int i) const { return L * i / nb; }
    double y(int j) const { return double(j) / nf; }

    int node(int i, int j, int c = 0) const {
        return (i * (nf - 1) + (j - 1)) * n + c;
    }
    const Mat& pot(int i, int j) const { return potential[i * (nf - 1) + (j - 1)]; }
    const Mat& ax(int i, int j) const { return connection_x[i * (nf - 1) + (j - 1)]; }
    const Mat& ay(int i, int e) const { return connection_y[i * nf + e]; }
};

namespace detail {

inline void check_square(const Mat& m, int n, const std::string& what) {
    if (m.rows() != n || m.cols() != n)
        throw ConfigError(what + ": expected a " + std::to_string(n) + "x" +
                          std::to_string(n) + " matrix sample");
}

}  // namespace detail

inline BundleModel build_model(const ModelConfig& config) {
    if (!(config.base_circumference > 0))
        throw ConfigError("base circumference must be positive");
    if (config.base_points < kMinBasePoints || config.base_points > kMaxGridPoints)
        throw ConfigError("base_points out of supported range");
    if (config.fibre_points < kMinFibrePoints || config.fibre_points > kMaxGridPoints)
        throw ConfigError("fibre_points out of supported range");
    if (config.rank < 1) throw ConfigError("rank must be at least 1");

    BundleModel m;
    m.L = config.base_circumference;
    m.nb = config.base_points;
    m.nf = config.fibre_points;
    m.n = config.rank;
    m.config = config;

    const int nb = m.nb, nf = m.nf, n = m.n;
    const double hx = m.hx(), hy = m.hy();

    m.warp.resize(nb);
    for (int i = 0; i < nb; ++i) {
        const double f = config.warp ? config.warp(m.x(i)) : 1.0;
        if (!(f > 0))
            throw ConfigError("warp must be positive; violated at x index " +
                              std::to_string(i));
        m.warp[i] = f;
    }

    auto sample_field = [&](const std::function<Mat(double, double)>& fn,
                            double x, double y, const std::string& what) {
        if (!fn) return Mat(Mat::Zero(n, n));
        Mat s = fn(x, y);
        detail::check_square(s, n, what);
        return s;
    };

    m.potential.reserve(nb * (nf - 1));
    m.connection_x.reserve(nb * (nf - 1));
    for (int i = 0; i < nb; ++i) {
        for (int j = 1; j < nf; ++j) {
            Mat v = sample_field(config.potential, m.x(i), m.y(j), "potential");
            if (herm_residual(v) > kFieldTol)
                throw ConfigError("potential sample is not Hermitian at grid (" +
                                  std::to_string(i) + "," + std::to_string(j) + ")");
            m.potential.push_back(std::move(v));

            Mat a = sample_field(config.connection_x, m.x(i) + 0.5 * hx, m.y(j),
                                 "connection_x");
            if ((a + a.adjoint()).cwiseAbs().maxCoeff() > kFieldTol)
                throw ConfigError("connection_x sample is not anti-Hermitian at grid (" +
                                  std::to_string(i) + "," + std::to_string(j) + ")");
            m.connection_x.push_back(std::move(a));
        }
    }

    m.connection_y.reserve(nb * nf);
    for (int i = 0; i < nb; ++i) {
        for (int e = 0; e < nf; ++e) {
            Mat a = sample_field(config.connection_y, m.x(i), (e + 0.5) * hy,
                                 "connection_y");
            if ((a + a.adjoint()).cwiseAbs().maxCoeff() > kFieldTol)
                throw ConfigError("connection_y sample is not anti-Hermitian at grid (" +
                                  std::to_string(i) + "," + std::to_string(e) + ")");
            m.connection_y.push_back(std::move(a));
        }
    }

    m.perturbation_kind = config.perturbation.kind;
    if (m.perturbation_kind == PerturbationKind::FirstOrder) {
        for (int i = 0; i < nb; ++i)
            for (int j = 1; j < nf; ++j) {
                Mat b = sample_field(config.perturbation.first_order_coeff, m.x(i),
                                     m.y(j), "perturbation coefficient");
                if (herm_residual(b) > kFieldTol)
                    throw ConfigError("first-order perturbation coefficient must be Hermitian");
                m.pert_first.push_back(std::move(b));
                m.pert_zeroth.push_back(sample_field(
                    config.perturbation.zeroth_order_coeff, m.x(i), m.y(j),
                    "perturbation zeroth-order coefficient"));
            }
    } else if (m.perturbation_kind == PerturbationKind::SecondOrder) {
        m.pert_second.resize(nb);
        for (int i = 0; i < nb; ++i)
            m.pert_second[i] = config.perturbation.second_order_coeff
                                   ? config.perturbation.second_order_coeff(m.x(i))
                                   : 0.0;
    }
    return m;
}

struct DiagnosticsCheck {
    std::string name;
    bool pass = true;
    double worst = 0.0;
    std::string location;
};

struct DiagnosticsReport {
    std::vector<DiagnosticsCheck> checks;
    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

/// Re-checks every model invariant and reports worst-case violations.
inline DiagnosticsReport validate_model(const BundleModel& m) {
    DiagnosticsReport report;

    DiagnosticsCheck pos{"warp_positivity"};
    pos.worst = m.warp.minCoeff();
    for (int i = 0; i < m.nb; ++i)
        if (!(m.warp[i] > 0)) {
            pos.pass = false;
            pos.location = "x index " + std::to_string(i);
            pos.worst = m.warp[i];
            break;
        }
    report.checks.push_back(pos);

    DiagnosticsCheck herm{"potential_hermiticity"};
    for (int i = 0; i < m.nb; ++i)
        for (int j = 1; j < m.nf; ++j) {
            const double r = herm_residual(m.pot(i, j));
            if (r > herm.worst) {
                herm.worst = r;
                herm.location = "(" + std::to_string(i) + "," + std::to_string(j) + ")";
            }
        }
    herm.pass = herm.worst <= kFieldTol;
    report.checks.push_back(herm);

    DiagnosticsCheck skew{"connection_anti_hermiticity"};
    auto upd = [&skew](const Mat& a, const std::string& loc) {
        const double r = (a + a.adjoint()).cwiseAbs().maxCoeff();
        if (r > skew.worst) {
            skew.worst = r;
            skew.location = loc;
        }
    };
    for (std::size_t k = 0; k < m.connection_x.size(); ++k)
        upd(m.connection_x[k], "A_x sample " + std::to_string(k));
    for (std::size_t k = 0; k < m.connection_y.size(); ++k)
        upd(m.connection_y[k], "A_y sample " + std::to_string(k));
    skew.pass = skew.worst <= kFieldTol;
    report.checks.push_back(skew);

    DiagnosticsCheck pert{"perturbation_coefficients"};
    for (const auto& b : m.pert_first) {
        const double r = herm_residual(b);
        if (r > pert.worst) pert.worst = r;
    }
    for (const auto& b : m.pert_zeroth) {
        const double r = herm_residual(b);
        if (r > pert.worst) pert.worst = r;
    }
    pert.pass = pert.worst <= kFieldTol;
    report.checks.push_back(pert);

    return report;
}

/// Fibre-wise unitary change of bundle frame; identity at the Dirichlet ends.
struct GaugeField {
    int nb = 0, nf = 0, n = 1;
    std::vector<Mat> g;  // nodes (i, j) for j = 0..nf, index i*(nf+1)+j

    const Mat& at(int i, int j) const { return g[i * (nf + 1) + j]; }
    Mat& at(int i, int j) { return g[i * (nf + 1) + j]; }

    static GaugeField identity(int nb, int nf, int n) {
        GaugeField gf;
        gf.nb = nb;
        gf.nf = nf;
        gf.n = n;
        gf.g.assign(std::size_t(nb) * (nf + 1), Mat::Identity(n, n));
        return gf;
    }

    static GaugeField from_function(const BundleModel& m,
                                    const std::function<Mat(double, double)>& fn) {
        GaugeField gf = identity(m.nb, m.nf, m.n);
        for (int i = 0; i < m.nb; ++i)
            for (int j = 1; j < m.nf; ++j) gf.at(i, j) = fn(m.x(i), m.y(j));
        return gf;
    }
};

namespace detail {

/// exp(A) for anti-Hermitian A, through the eigendecomposition of -iA.
inline Mat unitary_exp(const Mat& a) {
    Eigen::SelfAdjointEigenSolver<Mat> es(Mat(Complex(0, -1) * a));
    Vec phases(es.eigenvalues().size());
    for (Eigen::Index k = 0; k < phases.size(); ++k)
        phases[k] = std::exp(Complex(0, 1) * es.eigenvalues()[k]);
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

/// Principal logarithm of a unitary matrix; returns an anti-Hermitian matrix.
inline Mat unitary_log(const Mat& u) {
    Eigen::ComplexEigenSolver<Mat> es(u);
    Vec logs(es.eigenvalues().size());
    for (Eigen::Index k = 0; k < logs.size(); ++k)
        logs[k] = Complex(0, std::arg(es.eigenvalues()[k]));
    Mat v = es.eigenvectors();
    Mat out = v * logs.asDiagonal() * v.inverse();
    return 0.5 * (out - out.adjoint());
}

}  // namespace detail

/// Conjugates the model by a fibre-wise unitary field. Link phases are
/// conjugated exactly: exp(-h A') = g_left exp(-h A) g_right^dagger, so the
/// assembled operators transform by the lifted block unitary with no
/// discretization error.
inline BundleModel gauge_transform(const BundleModel& m, const GaugeField& gf) {
    if (gf.nb != m.nb || gf.nf != m.nf || gf.n != m.n)
        throw DimensionMismatch("gauge field does not match model grid");
    const Mat eye = Mat::Identity(m.n, m.n);
    for (int i = 0; i < m.nb; ++i)
        for (int j = 0; j <= m.nf; ++j) {
            const Mat& g = gf.at(i, j);
            if ((g * g.adjoint() - eye).cwiseAbs().maxCoeff() > kUnitaryTol)
                throw ConfigError("gauge field is not unitary at (" +
                                  std::to_string(i) + "," + std::to_string(j) + ")");
            if ((j == 0 || j == m.nf) &&
                (g - eye).cwiseAbs().maxCoeff() > kUnitaryTol)
                throw ConfigError("gauge field must fix the Dirichlet ends");
        }

    BundleModel out = m;
    const double hx = m.hx(), hy = m.hy();
    for (int i = 0; i < m.nb; ++i) {
        const int in = (i + 1) % m.nb;
        for (int j = 1; j < m.nf; ++j) {
            const int k = i * (m.nf - 1) + (j - 1);
            out.potential[k] = gf.at(i, j) * m.potential[k] * gf.at(i, j).adjoint();
            // Horizontal link between base nodes i and i+1 at fibre node j.
            Mat u = detail::unitary_exp(Mat(-hx * m.connection_x[k]));
            Mat up = gf.at(i, j) * u * gf.at(in, j).adjoint();
            out.connection_x[k] = -detail::unitary_log(up) / hx;
            if (!m.pert_first.empty())
                out.pert_first[k] = gf.at(i, j) * m.pert_first[k] * gf.at(i, j).adjoint();
            if (!m.pert_zeroth.empty())
                out.pert_zeroth[k] = gf.at(i, j) * m.pert_zeroth[k] * gf.at(i, j).adjoint();
        }
        for (int e = 0; e < m.nf; ++e) {
            const int k = i * m.nf + e;
            Mat u = detail::unitary_exp(Mat(-hy * m.connection_y[k]));
            Mat up = gf.at(i, e) * u * gf.at(i, e + 1).adjoint();
            out.connection_y[k] = -detail::unitary_log(up) / hy;
        }
    }
    return out;
}

/// Block-diagonal unitary on the full interior-node space built from a gauge
/// field; conjugating assembled operators by this matrix realizes the gauge
/// transformation exactly.
inline Mat lift_gauge(const BundleModel& m, const GaugeField& gf) {
    Mat g = Mat::Zero(m.dim(), m.dim());
    for (int i = 0; i < m.nb; ++i)
        for (int j = 1; j < m.nf; ++j)
            g.block(m.node(i, j), m.node(i, j), m.n, m.n) = gf.at(i, j);
    return g;
}

}  // namespace adiabatic
