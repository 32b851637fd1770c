#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "adiabatic/calculus.hpp"
#include "adiabatic/core.hpp"
#include "adiabatic/discretize.hpp"
#include "adiabatic/model.hpp"

namespace adiabatic {

/// Full eigendecomposition of H^F(x) for every base point.
struct FibreSpectra {
    std::vector<Eigen::VectorXd> values;  // ascending, per x
    std::vector<Mat> vectors;             // unitary, per x
};

inline FibreSpectra solve_fibre_spectra(const BundleModel& m) {
    FibreSpectra s;
    s.values.reserve(m.nb);
    s.vectors.reserve(m.nb);
    for (int i = 0; i < m.nb; ++i) {
        try {
            HermitianEig e = eig_hermitian(assemble_fibre_operator(m, i).matrix);
            s.values.push_back(std::move(e.values));
            s.vectors.push_back(std::move(e.vectors));
        } catch (const AdiabaticError& err) {
            throw AdiabaticError("fibre eigensolve failed at x index " +
                                 std::to_string(i) + ": " + err.what());
        }
    }
    return s;
}

struct GapCertificate {
    double delta = 0.0;
    RealVec f_minus, f_plus;       // per-x bounding functions
    RealVec gap_below, gap_above;  // per-x distances to the nearest neighbors
};

struct BandSelector {
    int index = 1;         // 1-based position of the band at x = 0
    int multiplicity = 1;  // m
};

struct Eigenband {
    RealVec lambda;                          // per-x eigenvalue (cluster mean)
    int multiplicity = 1;
    std::vector<Mat> frame;                  // per-x d_F x m orthonormal frames
    std::vector<std::vector<int>> cluster;   // per-x member indices in the spectrum
    GapCertificate certificate;
};

inline constexpr double kClusterRelTol = 1e-8;
inline constexpr double kOverlapThreshold = 0.5;
inline constexpr double kDefaultGapThreshold = 1e-6;

namespace detail {

/// Groups ascending eigenvalues into clusters of relative width tol.
inline std::vector<std::pair<int, int>> cluster_ranges(const Eigen::VectorXd& vals,
                                                       double tol) {
    std::vector<std::pair<int, int>> out;
    int start = 0;
    for (int i = 1; i <= vals.size(); ++i) {
        if (i == vals.size() || vals[i] - vals[i - 1] > tol) {
            out.emplace_back(start, i);
            start = i;
        }
    }
    return out;
}

/// Closest orthonormal alignment of the previous frame inside the span of
/// the cluster columns; removes arbitrary eigensolver phases and rotations.
inline Mat align_frame(const Mat& cluster_vectors, const Mat& previous_frame) {
    Mat overlap = cluster_vectors.adjoint() * previous_frame;
    Eigen::JacobiSVD<Mat> svd(overlap, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return cluster_vectors * (svd.matrixU() * svd.matrixV().adjoint());
}

/// Mean squared subspace overlap of frame with the given eigenvector block.
inline double subspace_overlap(const Mat& cluster_vectors, const Mat& frame) {
    return (cluster_vectors.adjoint() * frame).squaredNorm() / double(frame.cols());
}

}  // namespace detail

/// Follows the selected eigenvalue cluster around the base circle by maximal
/// subspace overlap between adjacent points, realigning frames for smooth
/// variation, and checks that the transported frame closes up.
inline Eigenband track_band(const FibreSpectra& spectra, const BandSelector& sel) {
    const int nb = int(spectra.values.size());
    if (nb == 0) throw AdiabaticError("track_band: empty spectra");
    const int m = sel.multiplicity;
    if (m < 1 || sel.index < 1) throw ConfigError("track_band: bad selector");
    const int k0 = sel.index - 1;
    const auto& v0 = spectra.values[0];
    if (k0 + m > v0.size()) throw ConfigError("track_band: selector exceeds spectrum");

    const double scale = std::max(1.0, v0.cwiseAbs().maxCoeff());
    const double tol = kClusterRelTol * scale;

    // The selected cluster at x = 0 must have exactly m members.
    auto ranges0 = detail::cluster_ranges(v0, tol);
    std::pair<int, int> sel_range{-1, -1};
    for (const auto& r : ranges0)
        if (k0 >= r.first && k0 < r.second) sel_range = r;
    if (sel_range.second - sel_range.first != m)
        throw OverlapAmbiguity(
            0, "selected cluster at x=0 has " +
                   std::to_string(sel_range.second - sel_range.first) +
                   " members, expected " + std::to_string(m));

    Eigenband band;
    band.multiplicity = m;
    band.lambda.resize(nb);
    band.frame.resize(nb);
    band.cluster.resize(nb);

    auto record = [&](int i, std::pair<int, int> range, const Mat& frame) {
        band.lambda[i] =
            spectra.values[i].segment(range.first, range.second - range.first).mean();
        band.frame[i] = frame;
        band.cluster[i].clear();
        for (int k = range.first; k < range.second; ++k) band.cluster[i].push_back(k);
    };

    Mat frame = spectra.vectors[0].middleCols(sel_range.first, m);
    record(0, sel_range, frame);

    for (int i = 1; i < nb; ++i) {
        const auto& vals = spectra.values[i];
        auto ranges = detail::cluster_ranges(vals, tol);
        double best = -1.0;
        std::pair<int, int> best_range{0, 0};
        for (const auto& r : ranges) {
            Mat cols = spectra.vectors[i].middleCols(r.first, r.second - r.first);
            const double o = detail::subspace_overlap(cols, frame);
            if (o > best) {
                best = o;
                best_range = r;
            }
        }
        if (best < kOverlapThreshold)
            throw OverlapAmbiguity(i, "largest subspace overlap " +
                                          std::to_string(best) +
                                          " below 0.5 at x index " +
                                          std::to_string(i));
        if (best_range.second - best_range.first != m)
            throw OverlapAmbiguity(
                i, "tracked cluster at x index " + std::to_string(i) + " has " +
                       std::to_string(best_range.second - best_range.first) +
                       " members, expected " + std::to_string(m));
        Mat cols =
            spectra.vectors[i].middleCols(best_range.first, m);
        frame = detail::align_frame(cols, frame);
        record(i, best_range, frame);
    }

    // Closure: the transported frame must still span the starting eigenspace.
    Mat start = spectra.vectors[0].middleCols(sel_range.first, m);
    const double closure = detail::subspace_overlap(start, frame);
    if (closure < kOverlapThreshold)
        throw ClosureFailure("band does not close around the base circle (overlap " +
                             std::to_string(closure) + ")");
    return band;
}

/// Builds the gap certificate: bounding functions at midpoints to the nearest
/// spectral neighbors and delta = half the minimal distance from them to the
/// spectrum.
inline GapCertificate certify_gap(const Eigenband& band, const FibreSpectra& spectra,
                                  double threshold = kDefaultGapThreshold) {
    const int nb = int(spectra.values.size());
    GapCertificate cert;
    cert.f_minus.resize(nb);
    cert.f_plus.resize(nb);
    cert.gap_below.resize(nb);
    cert.gap_above.resize(nb);
    double min_dist = std::numeric_limits<double>::infinity();
    for (int i = 0; i < nb; ++i) {
        const auto& vals = spectra.values[i];
        const int lo = band.cluster[i].front();
        const int hi = band.cluster[i].back();
        const double lam = band.lambda[i];
        const double below =
            lo > 0 ? lam - vals[lo - 1] : std::numeric_limits<double>::infinity();
        const double above = hi + 1 < vals.size()
                                 ? vals[hi + 1] - lam
                                 : std::numeric_limits<double>::infinity();
        cert.gap_below[i] = below;
        cert.gap_above[i] = above;
        cert.f_minus[i] = std::isfinite(below) ? lam - below / 2
                                               : lam - (std::isfinite(above) ? above / 2 : 1.0);
        cert.f_plus[i] = std::isfinite(above) ? lam + above / 2 : lam + 1.0;
        min_dist = std::min(min_dist, std::min(below, above) / 2);
    }
    cert.delta = min_dist / 2;
    if (!(cert.delta > threshold)) throw GapTooSmall(cert.delta, threshold);
    return cert;
}

/// Block-diagonal band projection P_0 on the full space.
inline DiscreteOperator band_projection(const BundleModel& m, const Eigenband& band) {
    const int fd = m.fibre_dim();
    Mat p = Mat::Zero(m.dim(), m.dim());
    for (int i = 0; i < m.nb; ++i)
        p.block(i * fd, i * fd, fd, fd) = band.frame[i] * band.frame[i].adjoint();
    return {hermitize(p), OperatorLabel::Projection};
}

/// Embedding frame Phi (d x nb*m, orthonormal columns) identifying the range
/// of P_0 with band coefficient space; P_0 = Phi Phi^dagger.
inline Mat band_frame(const BundleModel& m, const Eigenband& band) {
    const int fd = m.fibre_dim();
    const int mm = band.multiplicity;
    Mat phi = Mat::Zero(m.dim(), m.nb * mm);
    for (int i = 0; i < m.nb; ++i)
        phi.block(i * fd, i * mm, fd, mm) = band.frame[i];
    return phi;
}

/// Reduced resolvent R = (H^F - lambda)^{-1} (1 - P_0), block-diagonal,
/// assembled spectrally.
inline DiscreteOperator reduced_resolvent(const BundleModel& m, const Eigenband& band,
                                          const FibreSpectra& spectra) {
    const int fd = m.fibre_dim();
    const double delta = band.certificate.delta;
    Mat r = Mat::Zero(m.dim(), m.dim());
    for (int i = 0; i < m.nb; ++i) {
        const auto& vals = spectra.values[i];
        const auto& vecs = spectra.vectors[i];
        Mat block = Mat::Zero(fd, fd);
        for (int k = 0; k < vals.size(); ++k) {
            if (std::find(band.cluster[i].begin(), band.cluster[i].end(), k) !=
                band.cluster[i].end())
                continue;
            const double d = vals[k] - band.lambda[i];
            if (delta > 0 && std::abs(d) < delta / 2)
                throw SingularReducedResolvent(
                    "eigenvalue at distance " + std::to_string(std::abs(d)) +
                    " from the band inside the certified gap at x index " +
                    std::to_string(i));
            block += (1.0 / d) * (vecs.col(k) * vecs.col(k).adjoint());
        }
        r.block(i * fd, i * fd, fd, fd) = block;
    }
    return {hermitize(r), OperatorLabel::Other};
}

/// JSON export of the band and its certificate (plotting / regression input).
inline void export_band_json(const std::string& path, const Eigenband& band) {
    std::ofstream out(path);
    if (!out) throw AdiabaticError("cannot open " + path + " for writing");
    auto arr = [&out](const RealVec& v) {
        out << "[";
        for (int i = 0; i < v.size(); ++i)
            out << (i ? "," : "") << v[i];
        out << "]";
    };
    out << "{\n  \"lambda\": ";
    arr(band.lambda);
    out << ",\n  \"multiplicity\": " << band.multiplicity;
    out << ",\n  \"delta\": " << band.certificate.delta;
    out << ",\n  \"f_minus\": ";
    arr(band.certificate.f_minus);
    out << ",\n  \"f_plus\": ";
    arr(band.certificate.f_plus);
    out << "\n}\n";
}

}  // namespace adiabatic
