#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "adiabatic/core.hpp"

namespace adiabatic {

/// Result of a Hermitian eigendecomposition: M = vectors * diag(values) * vectors^dagger,
/// eigenvalues ascending.
struct HermitianEig {
    Eigen::VectorXd values;
    Mat vectors;

    /// Reassembles f(M) from the decomposition.
    Mat apply(const std::function<double(double)>& f) const {
        Eigen::VectorXd fv(values.size());
        for (Eigen::Index i = 0; i < values.size(); ++i) fv[i] = f(values[i]);
        return vectors * fv.asDiagonal() * vectors.adjoint();
    }
};

inline HermitianEig eig_hermitian(const Mat& m) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if (herm_residual(m) > 1e-10 * scale)
        throw AdiabaticError("eig_hermitian: input is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Mat> solver(m);
    if (solver.info() != Eigen::Success)
        throw AdiabaticError("eig_hermitian: eigensolver did not converge");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

enum class CutoffShape { SmoothBump, SharpIndicator };

/// Energy cutoff: identically one on (-inf, Lambda - width], zero on [Lambda, inf),
/// with a C^inf transition for SmoothBump.
struct CutoffSpec {
    double Lambda = 1.0;
    double width = 0.5;
    CutoffShape shape = CutoffShape::SmoothBump;
};

inline std::function<double(double)> smooth_cutoff(const CutoffSpec& spec) {
    if (!(spec.width > 0)) throw ConfigError("cutoff width must be positive");
    const double Lambda = spec.Lambda;
    const double w = spec.width;
    if (spec.shape == CutoffShape::SharpIndicator) {
        return [Lambda](double s) { return s <= Lambda ? 1.0 : 0.0; };
    }
    auto e = [](double t) { return t > 0 ? std::exp(-1.0 / t) : 0.0; };
    return [Lambda, w, e](double s) {
        const double t = (Lambda - s) / w;
        if (t >= 1.0) return 1.0;
        if (t <= 0.0) return 0.0;
        const double a = e(t);
        return a / (a + e(1.0 - t));
    };
}

/// f(H) through the full eigendecomposition (exact at matrix scale).
inline RawOperator apply_function(const DiscreteOperator& h,
                                  const std::function<double(double)>& f,
                                  const std::string& label = "f(H)") {
    return {eig_hermitian(h.matrix).apply(f), label};
}

namespace detail {

inline double power_iteration_norm(const Mat& a) {
    const Eigen::Index n = a.cols();
    // Deterministic start vector.
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = Complex(1.0, 0.0) / std::sqrt(double(n));
    double est = 0.0;
    const int max_iter = 5000;
    for (int it = 0; it < max_iter; ++it) {
        Vec w = a.adjoint() * (a * v);
        double nw = w.norm();
        if (nw == 0.0) return 0.0;
        v = w / nw;
        double next = std::sqrt(nw);
        if (it > 2 && std::abs(next - est) <= 1e-8 * std::max(next, 1e-300)) {
            return next;
        }
        est = next;
    }
    return est;  // converged estimate within iteration cap
}

}  // namespace detail

/// Spectral norm (largest singular value).
inline double operator_norm(const Mat& a) {
    if (a.size() == 0) return 0.0;
    if (a.rows() <= 128 && a.cols() <= 128) {
        return a.jacobiSvd().singularValues()(0);
    }
    return detail::power_iteration_norm(a);
}

inline double operator_norm(const RawOperator& a) { return operator_norm(a.matrix); }
inline double operator_norm(const DiscreteOperator& a) { return operator_norm(a.matrix); }

}  // namespace adiabatic
