#include <doctest.h>

#include "evofam/hilbert.hpp"

#include <Eigen/Eigenvalues>

using namespace evofam;

namespace {

Matrix random_matrix(Rng& rng, Index n, double scale) {
    Matrix A = random_complex_vector(rng, n * n).reshaped(n, n);
    const double nrm = spectral_norm_flat(A);
    return nrm > 0 ? Matrix(A * (scale / nrm)) : A;
}

// independent route: exponential of a normal matrix through its eigenbasis
Matrix exp_via_eigen(const Matrix& A, double r) {
    Eigen::ComplexEigenSolver<Matrix> es(A);
    Vector lam = es.eigenvalues();
    Matrix V = es.eigenvectors();
    Vector elam(lam.size());
    for (Index i = 0; i < lam.size(); ++i) elam[i] = std::exp(-r * lam[i]);
    return V * elam.asDiagonal() * V.inverse();
}

}  // namespace

TEST_CASE("weighted_norm basics") {
    auto s4 = DiscreteSpace::counting(4);
    Vector e1 = Vector::Zero(4);
    e1[0] = 1;
    CHECK(weighted_norm(s4, e1, 2) == doctest::Approx(1.0));
    CHECK(weighted_norm(s4, Vector::Ones(4), 1) == doctest::Approx(4.0));

    RealVector w(2);
    w << 0.5, 0.5;
    auto s2 = DiscreteSpace::weighted(w);
    Vector u(2);
    u << 2, 2;
    CHECK(weighted_norm(s2, u, 1) == doctest::Approx(2.0));
    CHECK(weighted_norm(s2, u, kInfinityNorm) == doctest::Approx(2.0));

    CHECK_THROWS_AS(weighted_norm(s4, u, 2), DimensionError);
    CHECK_THROWS_AS(weighted_norm(s2, u, 0.5), ValidationError);
}

TEST_CASE("matrix_exponential closed forms") {
    CHECK((matrix_exponential(Matrix::Zero(3, 3), 5.0) - Matrix::Identity(3, 3)).norm() == 0.0);

    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 1;
    d(1, 1) = 2;
    Matrix E = matrix_exponential(d, 1.0);
    CHECK(std::abs(E(0, 0) - std::exp(-1.0)) < 1e-14);
    CHECK(std::abs(E(1, 1) - std::exp(-2.0)) < 1e-14);
    CHECK(std::abs(E(0, 1)) < 1e-15);

    Matrix nil = Matrix::Zero(2, 2);
    nil(0, 1) = -1;
    Matrix N = matrix_exponential(nil, 1.0);
    CHECK(std::abs(N(0, 0) - 1.0) < 1e-14);
    CHECK(std::abs(N(0, 1) - 1.0) < 1e-14);
    CHECK(std::abs(N(1, 1) - 1.0) < 1e-14);
    CHECK(std::abs(N(1, 0)) < 1e-15);
}

TEST_CASE("matrix_exponential vs eigendecomposition oracle on normal matrices") {
    Rng rng = make_rng(42);
    for (int trial = 0; trial < 10; ++trial) {
        const Index n = 3 + trial;
        Matrix B = random_matrix(rng, n, 1.0);
        Matrix H = 5.0 * (B + B.adjoint());  // Hermitian, normal
        Matrix got = matrix_exponential(H, 1.0);
        Matrix want = exp_via_eigen(H, 1.0);
        CHECK(spectral_norm_flat(got - want) / spectral_norm_flat(want) < 1e-11);
    }
}

TEST_CASE("matrix_exponential semigroup and contraction properties") {
    Rng rng = make_rng(7);
    auto space = DiscreteSpace::counting(6);
    for (int trial = 0; trial < 8; ++trial) {
        Matrix A = random_matrix(rng, 6, 10.0);
        std::uniform_real_distribution<double> unif(0.0, 10.0);
        const double r = unif(rng), s = unif(rng);
        Matrix lhs = matrix_exponential(A, r + s);
        Matrix rhs = matrix_exponential(A, r) * matrix_exponential(A, s);
        CHECK(spectral_norm_flat(lhs - rhs) < 1e-10 * std::max(1.0, spectral_norm_flat(lhs)));
    }
    // contraction for Hermitian PSD generators
    for (int trial = 0; trial < 6; ++trial) {
        Matrix B = random_matrix(rng, 6, 2.0);
        Matrix psd = B.adjoint() * B;
        for (double r : {0.0, 0.3, 1.0, 7.5}) {
            CHECK(operator_norm(space, matrix_exponential(psd, r), NormP::Two, NormP::Two) <=
                  1.0 + 1e-12);
        }
    }
}

TEST_CASE("matrix_exponential input validation") {
    Matrix bad = Matrix::Zero(2, 2);
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(matrix_exponential(bad, 1.0), ValidationError);
    CHECK_THROWS_AS(matrix_exponential(Matrix::Zero(2, 3), 1.0), DimensionError);
}

TEST_CASE("operator_norm supported pairs") {
    auto s2 = DiscreteSpace::counting(2);
    CHECK(operator_norm(s2, Matrix::Identity(2, 2), NormP::Two, NormP::Two) ==
          doctest::Approx(1.0));

    Matrix A = Matrix::Zero(2, 2);
    A(0, 1) = 3;
    CHECK(operator_norm(s2, A, NormP::One, NormP::Inf) == doctest::Approx(3.0));

    RealVector w(2);
    w << 0.5, 0.5;
    auto sw = DiscreteSpace::weighted(w);
    CHECK(operator_norm(sw, Matrix::Identity(2, 2), NormP::One, NormP::Inf) ==
          doctest::Approx(2.0));

    CHECK_THROWS_AS(operator_norm(s2, A, NormP::Inf, NormP::One), ValidationError);
}

TEST_CASE("operator_norm (2,2) is submultiplicative") {
    Rng rng = make_rng(11);
    RealVector w(5);
    w << 1, 2, 0.5, 1.5, 3;
    auto space = DiscreteSpace::weighted(w);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix A = random_matrix(rng, 5, 2.0);
        Matrix B = random_matrix(rng, 5, 3.0);
        const double prod = operator_norm(space, A * B, NormP::Two, NormP::Two);
        const double bound =
            operator_norm(space, A, NormP::Two, NormP::Two) *
            operator_norm(space, B, NormP::Two, NormP::Two);
        CHECK(prod <= bound * (1.0 + 1e-12));
    }
}

TEST_CASE("spectral_summary") {
    auto s2 = DiscreteSpace::counting(2);
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 1;
    d(1, 1) = 3;
    auto sum = spectral_summary(s2, d);
    CHECK(sum.min_sym_eigen == doctest::Approx(1.0));
    CHECK(sum.max_sym_eigen == doctest::Approx(3.0));

    Matrix lap(2, 2);
    lap << 1, -1, -1, 1;
    Vector ker = Vector::Ones(2);
    auto gap = spectral_summary(s2, lap, &ker);
    CHECK(gap.spectral_gap_on_complement == doctest::Approx(2.0));

    Matrix skew(3, 3);
    skew.setZero();
    skew(0, 1) = Complex(0, 2);
    skew(1, 0) = Complex(0, 2);
    skew(0, 2) = 1.5;
    skew(2, 0) = -1.5;
    auto sk = spectral_summary(DiscreteSpace::counting(3), skew);
    CHECK(std::abs(sk.min_sym_eigen) < 1e-12);
    CHECK(std::abs(sk.max_sym_eigen) < 1e-12);
}

TEST_CASE("spectral_summary max of -A matches smallest accretivity shift on random vectors") {
    Rng rng = make_rng(3);
    RealVector w(6);
    w << 1, 0.5, 2, 1, 1.5, 0.7;
    auto space = DiscreteSpace::weighted(w);
    Matrix A = random_matrix(rng, 6, 4.0);
    const double omega = spectral_summary(space, Matrix(-A)).max_sym_eigen;
    double needed = -std::numeric_limits<double>::infinity();
    Vector best;
    auto rayleigh = [&](const Vector& u) {
        const double re = std::real(weighted_inner(space, A * u, u));
        const double n2 = std::real(weighted_inner(space, u, u));
        return -re / n2;
    };
    for (int i = 0; i < 1000; ++i) {
        Vector u = random_complex_vector(rng, 6);
        const double q = rayleigh(u);
        if (q > needed) {
            needed = q;
            best = u;
        }
    }
    CHECK(needed <= omega + 1e-9);  // every sampled vector admits the eigenvalue shift
    // refine the best sample by power iteration on the shifted Hermitian part
    // (independent route to the same extremal quotient)
    const Matrix W = space.weights.cast<Complex>().asDiagonal();
    const Matrix WA = W * A;
    const Matrix S = -0.5 * (WA + WA.adjoint());
    const Matrix shifted =
        space.weights.cwiseInverse().cast<Complex>().asDiagonal() * S +
        (std::abs(omega) + 10.0) * Matrix::Identity(6, 6);
    for (int it = 0; it < 3000; ++it) {
        best = shifted * best;
        best /= best.norm();
    }
    CHECK(rayleigh(best) == doctest::Approx(omega).epsilon(1e-9));
}

TEST_CASE("space validation") {
    RealVector w(2);
    w << 1.0, -0.5;
    auto bad = DiscreteSpace::weighted(w);
    CHECK_THROWS_AS(bad.validate(), ValidationError);

    auto good = DiscreteSpace::counting(3);
    Matrix g = Matrix::Identity(3, 3);
    g(0, 1) = 0.5;  // not Hermitian
    good.v_metric = g;
    CHECK_THROWS_AS(good.validate(), ValidationError);
}

TEST_CASE("spectral norm switches to power iteration above dim 512") {
    const Index n = 600;
    Rng rng = make_rng(1234);
    Vector d(n);
    for (Index i = 0; i < n; ++i) d[i] = 0.1 + 0.9 * static_cast<double>(i) / n;
    d[77] = 3.5;  // isolated top singular value
    Matrix A = d.asDiagonal();
    CHECK(spectral_norm_flat(A) == doctest::Approx(3.5).epsilon(1e-8));
}

TEST_CASE("matrix_exponential reports overflow with scaling diagnostics") {
    Matrix A = -Matrix::Identity(2, 2);  // exp(+r) growth
    try {
        matrix_exponential(A, 1e4);
        FAIL("expected an overflow error");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("squaring") != std::string::npos);
    }
}
