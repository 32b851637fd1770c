#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "adiabatic/core.hpp"
#include "adiabatic/model.hpp"

namespace adiabatic {

namespace detail {

inline Mat link_x(const BundleModel& m, int i, int j) {
    return unitary_exp(Mat(-m.hx() * m.ax(i, j)));
}

inline Mat link_y(const BundleModel& m, int i, int e) {
    return unitary_exp(Mat(-m.hy() * m.ay(i, e)));
}

}  // namespace detail

/// Discrete -Delta_V^E + V at base point x_i: Dirichlet covariant differences
/// on the fibre, scaled by the vertical metric f(x_i), assembled as
/// D^dagger D / f + V so Hermiticity is structural.
inline FibreOperator assemble_fibre_operator(const BundleModel& m, int x_index) {
    if (x_index < 0 || x_index >= m.nb)
        throw DimensionMismatch("assemble_fibre_operator: x_index out of range");
    const int n = m.n, fd = m.fibre_dim();
    const double hy = m.hy();
    // Covariant forward differences on fibre edges; Dirichlet ends eliminated.
    Mat d = Mat::Zero(m.nf * n, fd);
    for (int e = 0; e < m.nf; ++e) {
        if (e + 1 <= m.nf - 1)
            d.block(e * n, e * n, n, n) = detail::link_y(m, x_index, e) / hy;
        if (e >= 1)
            d.block(e * n, (e - 1) * n, n, n) -= Mat::Identity(n, n) / hy;
    }
    Mat h = (d.adjoint() * d) / m.warp[x_index];
    for (int j = 1; j < m.nf; ++j)
        h.block((j - 1) * n, (j - 1) * n, n, n) += m.pot(x_index, j);
    return {x_index, hermitize(h)};
}

/// Block-diagonal lift of all fibre operators to the full space.
inline Mat assemble_fibre_blockdiag(const BundleModel& m) {
    const int fd = m.fibre_dim();
    Mat h = Mat::Zero(m.dim(), m.dim());
    for (int i = 0; i < m.nb; ++i)
        h.block(i * fd, i * fd, fd, fd) = assemble_fibre_operator(m, i).matrix;
    return h;
}

namespace detail {

/// Shared horizontal stencil: covariant second differences in x with link
/// phases and the volume-weight drift folded in symmetrically (geometric-mean
/// edge weights), optionally with a scalar coefficient per x-edge.
inline Mat horizontal_stencil(const BundleModel& m, const RealVec* edge_coeff) {
    const int n = m.n, fn = m.fibre_nodes();
    const double hx2 = m.hx() * m.hx();
    Mat h = Mat::Zero(m.dim(), m.dim());
    for (int i = 0; i < m.nb; ++i) {
        const int in = (i + 1) % m.nb;
        const int ip = (i + m.nb - 1) % m.nb;
        const double ce = edge_coeff ? (*edge_coeff)[i] : 1.0;
        const double cp = edge_coeff ? (*edge_coeff)[ip] : 1.0;
        const double wf = std::sqrt(m.warp[in] / m.warp[i]);  // forward edge fold
        const double wb = std::sqrt(m.warp[ip] / m.warp[i]);  // backward edge fold
        for (int j = 1; j < m.nf; ++j) {
            const int row = m.node(i, j);
            h.block(row, row, n, n) +=
                ((ce * wf + cp * wb) / hx2) * Mat::Identity(n, n);
            Mat u = link_x(m, i, j);
            h.block(row, m.node(in, j), n, n) -= (ce / hx2) * u;
            h.block(m.node(in, j), row, n, n) -= (ce / hx2) * u.adjoint();
        }
    }
    return h;
}

}  // namespace detail

/// The eps-independent discrete -Delta_H, Hermitian with respect to the
/// flat-measure representation (volume weights folded in).
inline DiscreteOperator assemble_horizontal_laplacian(const BundleModel& m) {
    return {hermitize(detail::horizontal_stencil(m, nullptr)), OperatorLabel::DeltaH};
}

namespace detail {

/// Anti-Hermitian covariant x-derivative (centered, with link phases).
inline Mat horizontal_derivative_skew(const BundleModel& m) {
    const int n = m.n;
    const double two_hx = 2.0 * m.hx();
    Mat d = Mat::Zero(m.dim(), m.dim());
    for (int i = 0; i < m.nb; ++i) {
        const int in = (i + 1) % m.nb;
        for (int j = 1; j < m.nf; ++j) {
            Mat u = link_x(m, i, j);
            d.block(m.node(i, j), m.node(in, j), n, n) += u / two_hx;
            d.block(m.node(in, j), m.node(i, j), n, n) -= u.adjoint() / two_hx;
        }
    }
    return d;
}

inline Mat blockdiag_field(const BundleModel& m, const std::vector<Mat>& field) {
    Mat b = Mat::Zero(m.dim(), m.dim());
    for (int i = 0; i < m.nb; ++i)
        for (int j = 1; j < m.nf; ++j)
            b.block(m.node(i, j), m.node(i, j), m.n, m.n) =
                field[i * (m.nf - 1) + (j - 1)];
    return b;
}

}  // namespace detail

/// Hermitian realization of H_1. Derivative factors carry the eps-scaled
/// convention: first-order terms use the symmetrized momentum -i eps D_x,
/// second-order terms reuse the horizontal stencil scaled by eps^2.
inline DiscreteOperator assemble_perturbation(const BundleModel& m, double eps = 1.0) {
    Mat h1 = Mat::Zero(m.dim(), m.dim());
    switch (m.perturbation_kind) {
        case PerturbationKind::Zero:
            break;
        case PerturbationKind::FirstOrder: {
            Mat dmom = Complex(0, -1) * eps * detail::horizontal_derivative_skew(m);
            Mat b = detail::blockdiag_field(m, m.pert_first);
            h1 = 0.5 * (b * dmom + dmom * b);
            if (!m.pert_zeroth.empty())
                h1 += detail::blockdiag_field(m, m.pert_zeroth);
            break;
        }
        case PerturbationKind::SecondOrder: {
            RealVec edge(m.nb);
            for (int i = 0; i < m.nb; ++i)
                edge[i] = 0.5 * (m.pert_second[i] + m.pert_second[(i + 1) % m.nb]);
            h1 = eps * eps * detail::horizontal_stencil(m, &edge);
            break;
        }
    }
    return {hermitize(h1), OperatorLabel::H1, eps};
}

/// H(eps) with its exact splitting into the three addends.
struct FullAssembly {
    double eps = 0.0;
    Mat minus_delta_h;      // -Delta_H, eps-independent
    Mat h1;                 // H_1 at this eps
    Mat hf;                 // blockdiag H^F
    DiscreteOperator full;  // eps^2 * (-Delta_H) + eps * H_1 + H^F
};

inline FullAssembly assemble_full(const BundleModel& m, double eps) {
    if (!(eps > 0) || eps > 1.0)
        throw ConfigError("assemble_full: eps must lie in (0, 1]");
    FullAssembly a;
    a.eps = eps;
    a.minus_delta_h = assemble_horizontal_laplacian(m).matrix;
    a.h1 = assemble_perturbation(m, eps).matrix;
    a.hf = assemble_fibre_blockdiag(m);
    Mat h = eps * eps * a.minus_delta_h + eps * a.h1 + a.hf;
    a.full = DiscreteOperator(std::move(h), OperatorLabel::HFull, eps);
    return a;
}

namespace detail {

/// Covariant forward x-difference, square, used only by the Sobolev norms.
inline Mat sobolev_dx(const BundleModel& m) {
    const int n = m.n;
    const double hx = m.hx();
    Mat d = Mat::Zero(m.dim(), m.dim());
    for (int i = 0; i < m.nb; ++i) {
        const int in = (i + 1) % m.nb;
        for (int j = 1; j < m.nf; ++j) {
            d.block(m.node(i, j), m.node(in, j), n, n) = link_x(m, i, j) / hx;
            d.block(m.node(i, j), m.node(i, j), n, n) -= Mat::Identity(n, n) / hx;
        }
    }
    return d;
}

/// Covariant forward y-difference with the vertical metric scaling, square
/// per fibre block (Dirichlet padding at the top end).
inline Mat sobolev_dy(const BundleModel& m) {
    const int n = m.n;
    const double hy = m.hy();
    Mat d = Mat::Zero(m.dim(), m.dim());
    for (int i = 0; i < m.nb; ++i) {
        const double s = 1.0 / (hy * std::sqrt(m.warp[i]));
        for (int j = 1; j < m.nf; ++j) {
            if (j + 1 <= m.nf - 1)
                d.block(m.node(i, j), m.node(i, j + 1), n, n) =
                    s * link_y(m, i, j);
            d.block(m.node(i, j), m.node(i, j), n, n) -=
                s * Mat::Identity(n, n);
        }
    }
    return d;
}

}  // namespace detail

/// Discrete eps-scaled Sobolev norm of order k (single-chart form):
/// ||v||^2 = sum_{a<=k} ||(eps D_x)^a v||^2_{W^{k-a}(fibre)}, where the fibre
/// norm stacks vertical covariant differences. Equals the volume-weighted L2
/// norm for k = 0.
inline double sobolev_norm(const Vec& v, int k, double eps, const BundleModel& m) {
    if (k < 0 || k > 4) throw ConfigError("sobolev_norm: supported orders are 0..4");
    if (v.size() != m.dim())
        throw DimensionMismatch("sobolev_norm: vector dimension mismatch");
    const Mat dx = detail::sobolev_dx(m);
    const Mat dy = detail::sobolev_dy(m);
    const double vol = m.hx() * m.hy();
    double total = 0.0;
    Vec hx_term = v;
    for (int a = 0; a <= k; ++a) {
        Vec u = hx_term;
        for (int b = 0; b <= k - a; ++b) {
            total += vol * u.squaredNorm();
            if (b < k - a) u = dy * u;
        }
        if (a < k) hx_term = eps * (dx * hx_term);
    }
    return std::sqrt(total);
}

// --- operator import/export (text, matrix-market coordinate layout) ---

inline void write_matrix(const std::string& path, const Mat& m,
                         const std::string& comment = "") {
    std::ofstream out(path);
    if (!out) throw AdiabaticError("cannot open " + path + " for writing");
    out << "%%MatrixMarket matrix coordinate complex general\n";
    if (!comment.empty()) out << "% " << comment << "\n";
    std::size_t nnz = 0;
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            if (m(r, c) != Complex(0, 0)) ++nnz;
    out << m.rows() << " " << m.cols() << " " << nnz << "\n";
    char buf[96];
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            const Complex z = m(r, c);
            if (z == Complex(0, 0)) continue;
            std::snprintf(buf, sizeof buf, "%ld %ld %.17g %.17g\n", long(r + 1),
                          long(c + 1), z.real(), z.imag());
            out << buf;
        }
}

inline Mat read_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw AdiabaticError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("%%MatrixMarket", 0) != 0)
        throw AdiabaticError("bad matrix header in " + path);
    while (std::getline(in, line) && !line.empty() && line[0] == '%') {
    }
    std::istringstream head(line);
    long rows = 0, cols = 0, nnz = 0;
    head >> rows >> cols >> nnz;
    if (rows <= 0 || cols <= 0) throw AdiabaticError("bad matrix sizes in " + path);
    Mat m = Mat::Zero(rows, cols);
    for (long k = 0; k < nnz; ++k) {
        long r, c;
        double re, im;
        if (!(in >> r >> c >> re >> im))
            throw AdiabaticError("truncated matrix data in " + path);
        m(r - 1, c - 1) = Complex(re, im);
    }
    return m;
}

}  // namespace adiabatic
