#pragma once

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <stdexcept>
#include <string>

namespace adiabatic {

using Complex = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RealVec = Eigen::VectorXd;

// Absolute tolerances used throughout the library.
inline constexpr double kHermTol = 1e-12;
inline constexpr double kUnitaryTol = 1e-10;
inline constexpr double kResidualTol = 1e-10;
inline constexpr double kNoiseFloor = 1e-11;

struct AdiabaticError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : AdiabaticError {
    using AdiabaticError::AdiabaticError;
};

struct DimensionMismatch : AdiabaticError {
    using AdiabaticError::AdiabaticError;
};

struct OverlapAmbiguity : AdiabaticError {
    int x_index;
    OverlapAmbiguity(int x, const std::string& what)
        : AdiabaticError(what), x_index(x) {}
};

struct ClosureFailure : AdiabaticError {
    using AdiabaticError::AdiabaticError;
};

struct GapTooSmall : AdiabaticError {
    double delta;
    double threshold;
    GapTooSmall(double d, double t)
        : AdiabaticError("spectral gap " + std::to_string(d) +
                         " below threshold " + std::to_string(t)),
          delta(d), threshold(t) {}
};

struct SingularReducedResolvent : AdiabaticError {
    using AdiabaticError::AdiabaticError;
};

struct SpectralAmbiguity : AdiabaticError {
    using AdiabaticError::AdiabaticError;
};

struct NonUnitaryIntertwiner : AdiabaticError {
    using AdiabaticError::AdiabaticError;
};

struct InsufficientPoints : AdiabaticError {
    using AdiabaticError::AdiabaticError;
};

/// Max-norm of M - M^dagger; the Hermiticity residual used by all invariants.
inline double herm_residual(const Mat& m) {
    return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline Mat hermitize(const Mat& m) { return 0.5 * (m + m.adjoint()); }

enum class OperatorLabel { HFBlock, DeltaH, H1, HFull, Projection, Other };

inline std::string label_name(OperatorLabel l) {
    switch (l) {
        case OperatorLabel::HFBlock: return "H_F_block";
        case OperatorLabel::DeltaH: return "Delta_H";
        case OperatorLabel::H1: return "H1";
        case OperatorLabel::HFull: return "H_full";
        case OperatorLabel::Projection: return "projection";
        default: return "other";
    }
}

/// Hermitian full-space operator with provenance. The constructor enforces
/// the Hermiticity invariant; non-Hermitian intermediates use RawOperator.
struct DiscreteOperator {
    Mat matrix;
    OperatorLabel label = OperatorLabel::Other;
    std::optional<double> epsilon;  // none for eps-independent operators

    DiscreteOperator() = default;
    DiscreteOperator(Mat m, OperatorLabel l,
                     std::optional<double> eps = std::nullopt)
        : matrix(std::move(m)), label(l), epsilon(eps) {
        if (herm_residual(matrix) > kHermTol)
            throw AdiabaticError("operator labeled " + label_name(label) +
                                 " is not Hermitian within tolerance");
    }
};

struct RawOperator {
    Mat matrix;
    std::string label;
};

/// Fibre operator H^F at one base point, on the interior fibre nodes.
struct FibreOperator {
    int x_index = 0;
    Mat matrix;
};

}  // namespace adiabatic
