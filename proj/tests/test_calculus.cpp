// Spectral calculus: eigendecomposition, smooth cutoffs, operator functions
// and norms, each checked against an independent closed form or a second
// algorithm.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "adiabatic/calculus.hpp"

using namespace adiabatic;

namespace {

Mat random_hermitian(int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> g;
    Mat a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = Complex(g(rng), g(rng));
    return hermitize(a);
}

Mat random_matrix(int rows, int cols, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> g;
    Mat a(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) a(i, j) = Complex(g(rng), g(rng));
    return a;
}

}  // namespace

TEST_CASE("eig_hermitian reconstructs the input and orders eigenvalues") {
    const Mat m = random_hermitian(40, 11);
    HermitianEig e = eig_hermitian(m);

    Mat rebuilt = e.vectors * e.values.asDiagonal().toDenseMatrix().cast<Complex>() *
                  e.vectors.adjoint();
    CHECK((rebuilt - m).cwiseAbs().maxCoeff() < 1e-12 * m.cwiseAbs().maxCoeff() * 40);

    for (Eigen::Index i = 1; i < e.values.size(); ++i)
        CHECK(e.values[i] >= e.values[i - 1]);

    Mat eye = Mat::Identity(40, 40);
    CHECK((e.vectors.adjoint() * e.vectors - eye).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("eig_hermitian matches the closed form for a 2x2 Pauli combination") {
    // H = a sigma_x + b sigma_z has eigenvalues -+ sqrt(a^2 + b^2).
    const double a = 0.6, b = -1.1;
    Mat h(2, 2);
    h << b, a, a, -b;
    HermitianEig e = eig_hermitian(h);
    const double r = std::sqrt(a * a + b * b);
    CHECK(e.values[0] == Catch::Approx(-r).epsilon(1e-14));
    CHECK(e.values[1] == Catch::Approx(r).epsilon(1e-14));
}

TEST_CASE("eig_hermitian rejects non-Hermitian input") {
    Mat m = random_matrix(8, 8, 3);
    CHECK_THROWS_AS(eig_hermitian(m), AdiabaticError);
}

TEST_CASE("smooth_cutoff plateau, support, and smooth transition") {
    CutoffSpec spec{10.0, 2.0, CutoffShape::SmoothBump};
    auto chi = smooth_cutoff(spec);

    // Identically one up to Lambda - width, zero beyond Lambda.
    CHECK(chi(-50.0) == 1.0);
    CHECK(chi(8.0) == 1.0);
    CHECK(chi(10.0) == 0.0);
    CHECK(chi(25.0) == 0.0);

    // Strictly between 0 and 1 inside the transition window, monotone.
    // The first few percent of the window stay at 1.0 to round-off because
    // the bump weight vanishes to all orders at the plateau edge.
    double prev = 1.0;
    for (double s = 8.3; s < 9.75; s += 0.05) {
        const double v = chi(s);
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        CHECK(v <= prev + 1e-15);
        prev = v;
    }

    // Symmetry of the bump construction: chi(Lambda - w/2 - t) + chi(Lambda - w/2 + t) = 1.
    for (double t = 0.1; t < 1.0; t += 0.2)
        CHECK(chi(9.0 - t) + chi(9.0 + t) == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("smooth_cutoff sharp indicator variant") {
    CutoffSpec spec{3.0, 1.0, CutoffShape::SharpIndicator};
    auto chi = smooth_cutoff(spec);
    CHECK(chi(2.999) == 1.0);
    CHECK(chi(3.0) == 1.0);
    CHECK(chi(3.001) == 0.0);
}

TEST_CASE("smooth_cutoff rejects non-positive width") {
    CHECK_THROWS_AS(smooth_cutoff({1.0, 0.0, CutoffShape::SmoothBump}), ConfigError);
    CHECK_THROWS_AS(smooth_cutoff({1.0, -2.0, CutoffShape::SmoothBump}), ConfigError);
}

TEST_CASE("apply_function is multiplicative over the spectrum") {
    DiscreteOperator h{random_hermitian(30, 7), OperatorLabel::Other};

    // f(H) g(H) = (fg)(H), and chi^2 != chi for a smooth cutoff.
    auto chi = smooth_cutoff({0.5, 1.0, CutoffShape::SmoothBump});
    Mat a = apply_function(h, chi).matrix;
    Mat b = apply_function(h, [&](double s) { return chi(s) * chi(s); }).matrix;
    CHECK((a * a - b).cwiseAbs().maxCoeff() < 1e-12);

    // Identity function returns H itself.
    Mat id = apply_function(h, [](double s) { return s; }).matrix;
    CHECK((id - h.matrix).cwiseAbs().maxCoeff() < 1e-12 * 30);
}

TEST_CASE("apply_function absorbs spectral projections below the plateau") {
    // On a diagonal operator the cutoff acts entry-wise: eigenvectors below the
    // plateau are fixed, eigenvectors above the support are annihilated.
    Eigen::VectorXd d(4);
    d << -1.0, 0.2, 5.0, 9.0;
    Mat m = d.cast<Complex>().asDiagonal();
    DiscreteOperator h{m, OperatorLabel::Other};
    auto chi = smooth_cutoff({4.0, 2.0, CutoffShape::SmoothBump});
    Mat c = apply_function(h, chi).matrix;
    CHECK(std::abs(c(0, 0) - Complex(1, 0)) < 1e-14);
    CHECK(std::abs(c(1, 1) - Complex(1, 0)) < 1e-14);
    CHECK(std::abs(c(2, 2)) < 1.0);  // transition zone
    CHECK(std::abs(c(3, 3)) < 1e-14);
}

TEST_CASE("operator_norm agrees with a full SVD oracle across sizes") {
    for (int size : {5, 60, 129, 300}) {
        Mat a = random_matrix(size, size, 100 + size);
        Eigen::JacobiSVD<Mat> svd(a);
        const double oracle = svd.singularValues()(0);
        CHECK(operator_norm(a) == Catch::Approx(oracle).epsilon(1e-6));
    }
}

TEST_CASE("operator_norm handles rectangular and trivial inputs") {
    Mat a = random_matrix(140, 30, 9);
    Eigen::JacobiSVD<Mat> svd(a);
    CHECK(operator_norm(a) == Catch::Approx(svd.singularValues()(0)).epsilon(1e-6));

    CHECK(operator_norm(Mat(Mat::Zero(200, 200))) == 0.0);
    CHECK(operator_norm(Mat(Mat::Identity(150, 150))) == Catch::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("operator_norm is submultiplicative and respects the triangle inequality") {
    Mat a = random_matrix(150, 150, 21);
    Mat b = random_matrix(150, 150, 22);
    const double na = operator_norm(a);
    const double nb = operator_norm(b);
    CHECK(operator_norm(Mat(a * b)) <= na * nb * (1 + 1e-8));
    CHECK(operator_norm(Mat(a + b)) <= (na + nb) * (1 + 1e-8));
}

TEST_CASE("hermitize and herm_residual are consistent") {
    Mat a = random_matrix(12, 12, 31);
    Mat h = hermitize(a);
    CHECK(herm_residual(h) < 1e-15 * a.cwiseAbs().maxCoeff());
    CHECK(herm_residual(a) > 0.1);  // generic matrix is far from Hermitian
}
