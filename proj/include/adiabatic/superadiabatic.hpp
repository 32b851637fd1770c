#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "adiabatic/calculus.hpp"
#include "adiabatic/core.hpp"

namespace adiabatic {

inline constexpr int kMaxRecursionDepth = 4;

/// The tower of super-adiabatic corrections at a fixed eps. Increments store
/// eps^k P_k directly, so the recursion never divides by eps.
struct ProjectionStack {
    double epsilon = 0.0;
    int N = 0;
    Mat P0;
    std::vector<Mat> increments;  // increments[k-1] = eps^k P_k, k = 1..N
    Mat PN;                       // P0 + sum of increments
    Mat Pchi;                     // regularized almost-projection
    Mat Peps;                     // exact orthogonal projection
    Mat Ueps;                     // unitary intertwiner
    bool has_Peps = false;
    bool has_Ueps = false;

    /// Partial sum P^l = P_0 + sum_{k<=l} eps^k P_k.
    Mat partial(int l) const {
        Mat p = P0;
        for (int k = 0; k < l && k < int(increments.size()); ++k) p += increments[k];
        return p;
    }
};

/// Effective operator on band coefficient space, together with the embedding
/// frame identifying that space with the range of P_0.
struct EffectiveOperator {
    Mat matrix;  // (nb*m) x (nb*m), Hermitian
    Mat frame;   // d x (nb*m), orthonormal columns
};

/// Compression P_0 H P_0 restricted to band coefficient space.
inline EffectiveOperator adiabatic_operator(const Mat& frame, const Mat& h) {
    if (frame.rows() != h.rows() || h.rows() != h.cols())
        throw DimensionMismatch("adiabatic_operator: dimension mismatch");
    return {hermitize(frame.adjoint() * h * frame), frame};
}

/// One level of the diagonal/off-diagonal recursion: appends the next
/// increment built from the commutator with H and the reduced resolvent.
inline ProjectionStack superadiabatic_step(const ProjectionStack& stack, const Mat& h,
                                           const Mat& r) {
    if (h.rows() != stack.P0.rows() || r.rows() != stack.P0.rows())
        throw DimensionMismatch("superadiabatic_step: dimension mismatch");
    ProjectionStack out = stack;
    const int n_cur = stack.N;
    const Mat& p0 = stack.P0;

    const Mat comm = h * stack.PN - stack.PN * h;

    // Off-diagonal part: -R [H, P^N] P0 + P0 [H, P^N] R.
    Mat off = -r * (comm * p0) + (p0 * comm) * r;

    // Diagonal part from the truncated square Q = sum_{k+l <= N+1} dP_k dP_l.
    std::vector<const Mat*> terms(n_cur + 1);
    terms[0] = &p0;
    for (int k = 1; k <= n_cur; ++k) terms[k] = &stack.increments[k - 1];
    Mat q = Mat::Zero(h.rows(), h.cols());
    for (int k = 0; k <= n_cur; ++k)
        for (int l = 0; l <= n_cur; ++l)
            if (k + l <= n_cur + 1) q += (*terms[k]) * (*terms[l]);
    // diag = -P0 D P0 + (1-P0) D (1-P0) with D the truncated-square defect.
    Mat defect = q - stack.PN;
    Mat diag = defect - p0 * defect - defect * p0;

    out.increments.push_back(hermitize(diag + off));
    out.PN = stack.PN + out.increments.back();
    out.N = n_cur + 1;
    out.has_Peps = false;
    out.has_Ueps = false;
    return out;
}

/// Iterates the recursion from P^0 = P_0 up to depth N.
inline ProjectionStack build_PN(const Mat& p0, const Mat& h, const Mat& r, int depth,
                                double eps) {
    if (depth < 0 || depth > kMaxRecursionDepth)
        throw ConfigError("build_PN: supported depths are 0..4");
    ProjectionStack stack;
    stack.epsilon = eps;
    stack.N = 0;
    stack.P0 = p0;
    stack.PN = p0;
    for (int k = 0; k < depth; ++k) stack = superadiabatic_step(stack, h, r);
    return stack;
}

/// Regularizes P^N with the energy cutoff and extracts the nearby exact
/// orthogonal projection from the spectrum of the regularized operator
/// (clustered at zero and one).
inline ProjectionStack smooth_cutoff_projection(const ProjectionStack& stack,
                                                const HermitianEig& h_eig,
                                                const std::function<double(double)>& chi) {
    ProjectionStack out = stack;
    const Mat x = h_eig.apply(chi);
    const Mat dp = stack.PN - stack.P0;
    const Mat eye = Mat::Identity(x.rows(), x.cols());
    out.Pchi = hermitize(stack.P0 + dp * x + x * dp * (eye - x));

    HermitianEig pe = eig_hermitian(out.Pchi);
    for (Eigen::Index i = 0; i < pe.values.size(); ++i)
        if (pe.values[i] > 0.25 && pe.values[i] < 0.75)
            throw SpectralAmbiguity(
                "regularized projection has eigenvalue " +
                std::to_string(pe.values[i]) +
                " in the ambiguity zone [0.25, 0.75]; eps too large for the gap");
    out.Peps = pe.apply([](double t) { return t >= 0.5 ? 1.0 : 0.0; });
    out.Peps = hermitize(out.Peps);
    out.has_Peps = true;
    return out;
}

/// Sz.-Nagy unitary intertwining the two projections: U P0 = Peps U.
inline RawOperator intertwiner(const Mat& peps, const Mat& p0) {
    const Mat eye = Mat::Identity(p0.rows(), p0.cols());
    const Mat d = p0 - peps;
    HermitianEig s = eig_hermitian(Mat(eye - d * d));
    if (s.values.minCoeff() <= 0)
        throw NonUnitaryIntertwiner("projections too far apart: 1-(P0-Peps)^2 singular");
    const Mat inv_sqrt = s.apply([](double t) { return 1.0 / std::sqrt(t); });
    Mat u = (peps * p0 + (eye - peps) * (eye - p0)) * inv_sqrt;
    const double unit = operator_norm(Mat(u.adjoint() * u - eye));
    const double twine = operator_norm(Mat(u * p0 - peps * u));
    if (unit > kUnitaryTol || twine > kUnitaryTol)
        throw NonUnitaryIntertwiner("intertwiner checks failed: |U*U-1|=" +
                                    std::to_string(unit) + ", |UP0-PepsU|=" +
                                    std::to_string(twine));
    return {u, "U_eps"};
}

/// H_eff = U* Peps H Peps U compressed to band coefficient space.
inline EffectiveOperator effective_operator(const ProjectionStack& stack, const Mat& h,
                                            const Mat& frame) {
    if (!stack.has_Peps || !stack.has_Ueps)
        throw AdiabaticError("effective_operator: stack lacks Peps/Ueps");
    Mat inner = stack.Peps * h * stack.Peps;
    Mat compressed = frame.adjoint() * (stack.Ueps.adjoint() * inner * stack.Ueps) * frame;
    return {hermitize(compressed), frame};
}

/// Leading super-adiabatic correction M = P0 [P0,H] R [P0,H] P0 on band space.
inline EffectiveOperator second_order_correction(const Mat& p0, const Mat& h,
                                                 const Mat& r, const Mat& frame) {
    Mat c = p0 * h - h * p0;  // [P0, H]
    Mat mcorr = frame.adjoint() * (c * r * c) * frame;
    return {hermitize(mcorr), frame};
}

/// ||[H, P] rho(H)||, the invariance defect of ran(P) at energies below the
/// cutoff support.
inline double commutator_norm(const Mat& h, const Mat& p, const Mat& rho_of_h) {
    Mat c = (h * p - p * h) * rho_of_h;
    return operator_norm(c);
}

inline double commutator_norm(const DiscreteOperator& h, const RawOperator& p,
                              const std::function<double(double)>& rho) {
    const Mat rho_h = eig_hermitian(h.matrix).apply(rho);
    return commutator_norm(h.matrix, p.matrix, rho_h);
}

}  // namespace adiabatic
