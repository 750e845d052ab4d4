#include <doctest.h>

#include "evofam/propagator.hpp"

using namespace evofam;

namespace {

Matrix k2_laplacian() {
    Matrix L(2, 2);
    L << 1, -1, -1, 1;
    return L;
}

Matrix tridiag_laplacian(Index n) {
    Matrix L = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        L(i, i) = 2;
        if (i > 0) L(i, i - 1) = -1;
        if (i + 1 < n) L(i, i + 1) = -1;
    }
    return L;
}

// smooth non-commuting 4x4 path: rotating frame around a fixed diagonal
OperatorPath rotating_diffusion_path(SpacePtr space, double horizon) {
    return smooth_path(space, horizon, [](double t) {
        Matrix R = Matrix::Identity(4, 4);
        const double c = std::cos(t), s = std::sin(t);
        R(0, 0) = c; R(0, 1) = -s; R(1, 0) = s; R(1, 1) = c;
        const double c2 = std::cos(0.7 * t), s2 = std::sin(0.7 * t);
        Matrix R2 = Matrix::Identity(4, 4);
        R2(2, 2) = c2; R2(2, 3) = -s2; R2(3, 2) = s2; R2(3, 3) = c2;
        Vector d(4);
        d << 1.0, 2.0, 0.5, 1.5;
        Matrix Q = R * R2;
        return Matrix(Q * d.asDiagonal() * Q.adjoint());
    });
}

}  // namespace

TEST_CASE("assemble: constant path telescopes to the semigroup") {
    auto space = make_space(DiscreteSpace::counting(2));
    const Matrix A0 = k2_laplacian();
    auto path = smooth_path(space, 1.0, [A0](double) { return A0; });
    auto prop = assemble(path, Partition::uniform(0.0, 1.0, 7));
    for (auto [t, s] : {std::pair{1.0, 0.0}, {0.9, 0.15}, {0.5, 0.5}}) {
        const Matrix want = matrix_exponential(A0, t - s);
        CHECK(spectral_norm_flat(prop.evaluate(t, s) - want) < 1e-12);
    }
}

TEST_CASE("assemble: aligned piecewise path is exact") {
    auto space = make_space(DiscreteSpace::counting(3));
    Rng rng = make_rng(2);
    Matrix A1 = random_complex_vector(rng, 9).reshaped(3, 3);
    Matrix A2 = random_complex_vector(rng, 9).reshaped(3, 3);
    auto path = piecewise_constant_path(space, {0.0, 0.5, 1.0}, {A1, A2});
    auto prop = assemble(path, Partition::from_breakpoints(path, 0.0, 1.0));
    const Matrix want = matrix_exponential(A2, 0.5) * matrix_exponential(A1, 0.5);
    CHECK((prop.evaluate(1.0, 0.0) - want).norm() == 0.0);
}

TEST_CASE("zero path gives the identity") {
    auto space = make_space(DiscreteSpace::counting(3));
    auto path = smooth_path(space, 2.0, [](double) { return Matrix::Zero(3, 3); });
    auto prop = assemble(path, Partition::uniform(0.0, 2.0, 5));
    CHECK((prop.evaluate(1.7, 0.3) - Matrix::Identity(3, 3)).norm() < 1e-14);
    CHECK((prop.evaluate(0.4, 0.4) - Matrix::Identity(3, 3)).norm() == 0.0);
}

TEST_CASE("evolution law on partition points") {
    auto space = make_space(DiscreteSpace::counting(4));
    auto path = rotating_diffusion_path(space, 1.0);
    auto prop = assemble(path, Partition::uniform(0.0, 1.0, 16));
    const auto& pts = prop.partition().points;
    for (std::size_t i = 0; i < pts.size(); i += 3)
        for (std::size_t r = i; r < pts.size(); r += 4)
            for (std::size_t j = r; j < pts.size(); j += 5) {
                const Matrix lhs = prop.evaluate(pts[j], pts[i]);
                const Matrix rhs = prop.evaluate(pts[j], pts[r]) * prop.evaluate(pts[r], pts[i]);
                CHECK(spectral_norm_flat(lhs - rhs) <= 1e-10 * 4);
            }
}

TEST_CASE("off-partition endpoints use partial factors") {
    auto space = make_space(DiscreteSpace::counting(2));
    const Matrix A0 = k2_laplacian();
    auto path = smooth_path(space, 1.0, [A0](double) { return A0; });
    auto prop = assemble(path, Partition::uniform(0.0, 1.0, 4));
    const Matrix got = prop.evaluate(0.6, 0.1);  // crosses 0.25 and 0.5
    CHECK(spectral_norm_flat(got - matrix_exponential(A0, 0.5)) < 1e-12);
}

TEST_CASE("propagate_to_tolerance: commuting scalar-in-time path has a closed form") {
    auto space = make_space(DiscreteSpace::counting(4));
    const Matrix L = tridiag_laplacian(4);
    auto path = smooth_path(space, 1.0, [L](double t) { return Matrix((2.0 + std::sin(t)) * L); });
    auto prop = propagate_to_tolerance(path, 0.0, 1.0, 1e-8);
    CHECK(prop.converged());
    // int_0^1 (2 + sin r) dr = 3 - cos 1
    const Matrix want = matrix_exponential(L, 3.0 - std::cos(1.0));
    CHECK(spectral_norm_flat(prop.evaluate(1.0, 0.0) - want) < 1e-7);
}

TEST_CASE("propagate_to_tolerance: piecewise-constant path converges immediately") {
    auto space = make_space(DiscreteSpace::counting(2));
    auto path = piecewise_constant_path(space, {0.0, 0.35, 1.0},
                                        {k2_laplacian(), Matrix(2.0 * k2_laplacian())});
    auto prop = propagate_to_tolerance(path, 0.0, 1.0, 1e-10);
    CHECK(prop.converged());
    CHECK(prop.refinement_history().size() <= 2);
}

TEST_CASE("propagate_to_tolerance agrees with the ODE oracle on a non-commuting path") {
    auto space = make_space(DiscreteSpace::counting(4));
    auto path = rotating_diffusion_path(space, 1.0);
    auto prop = propagate_to_tolerance(path, 0.0, 1.0, 1e-8);
    const Matrix via_ode = ode_oracle(path, 0.0, 1.0, 1e-10);
    const double diff = spectral_norm_flat(prop.evaluate(1.0, 0.0) - via_ode);
    CHECK(diff < 1e-6);
    // refinement differences decay monotonically after the first step
    const auto& hist = prop.refinement_history();
    for (std::size_t k = 2; k < hist.size(); ++k) CHECK(hist[k].second <= hist[k - 1].second * 1.01);
}

TEST_CASE("ode_oracle basics") {
    auto space = make_space(DiscreteSpace::counting(2));
    auto zero = smooth_path(space, 1.0, [](double) { return Matrix::Zero(2, 2); });
    CHECK((ode_oracle(zero, 0.0, 1.0, 1e-10) - Matrix::Identity(2, 2)).norm() < 1e-12);

    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 1;
    d(1, 1) = 2;
    auto diag = smooth_path(space, 1.0, [d](double) { return d; });
    const Matrix got = ode_oracle(diag, 0.0, 1.0, 1e-12);
    CHECK(std::abs(got(0, 0) - std::exp(-1.0)) < 1e-9);
    CHECK(std::abs(got(1, 1) - std::exp(-2.0)) < 1e-9);
}

TEST_CASE("ode_oracle honors breakpoints of piecewise paths") {
    auto space = make_space(DiscreteSpace::counting(2));
    Matrix A1 = k2_laplacian();
    Matrix A2 = Matrix::Identity(2, 2);
    auto path = piecewise_constant_path(space, {0.0, 0.4, 1.0}, {A1, A2});
    const Matrix want = matrix_exponential(A2, 0.6) * matrix_exponential(A1, 0.4);
    CHECK(spectral_norm_flat(ode_oracle(path, 0.0, 1.0, 1e-11) - want) < 1e-8);
}

TEST_CASE("rescaling identity factor by factor") {
    auto space = make_space(DiscreteSpace::counting(4));
    auto path = rotating_diffusion_path(space, 1.0);
    const double omega = 0.8;
    auto shifted = rescaled(path, omega);
    auto part = Partition::uniform(0.0, 1.0, 8);
    auto p0 = assemble(path, part);
    auto p1 = assemble(shifted, part);
    for (auto [t, s] : {std::pair{1.0, 0.0}, {0.75, 0.25}, {0.5, 0.125}}) {
        const Matrix lhs = p1.evaluate(t, s);
        const Matrix rhs = std::exp(-omega * (t - s)) * p0.evaluate(t, s);
        CHECK(spectral_norm_flat(lhs - rhs) < 1e-10);
    }
}

TEST_CASE("returned-adjoint propagator identity") {
    RealVector w(3);
    w << 0.5, 1.0, 2.0;
    auto space = make_space(DiscreteSpace::weighted(w));
    Rng rng = make_rng(9);
    Matrix B = random_complex_vector(rng, 9).reshaped(3, 3);
    auto path = smooth_path(space, 1.0, [B](double t) {
        return Matrix(B + t * B.adjoint() + 2.0 * Matrix::Identity(3, 3));
    });
    auto back = returned_adjoint(path);

    auto part = Partition::uniform(0.2, 0.7, 8);
    // reflection of [s, t] about T/2
    Partition reflected;
    for (auto it = part.points.rbegin(); it != part.points.rend(); ++it)
        reflected.points.push_back(1.0 - *it);

    auto prop = assemble(path, reflected);
    auto prop_back = assemble(back, part);
    const Matrix lhs = weighted_adjoint(*space, prop_back.evaluate(0.7, 0.2));
    const Matrix rhs = prop.evaluate(1.0 - 0.2, 1.0 - 0.7);
    CHECK(spectral_norm_weighted(*space, lhs - rhs) < 1e-10);
}

TEST_CASE("quasi-contraction bound holds for every tested partition") {
    auto space = make_space(DiscreteSpace::counting(3));
    Rng rng = make_rng(21);
    // piecewise-constant elliptic path: bound integrates exactly
    std::vector<Matrix> pieces;
    for (int k = 0; k < 3; ++k) {
        Matrix B = random_complex_vector(rng, 9).reshaped(3, 3);
        pieces.push_back(B + B.adjoint() + Matrix::Identity(3, 3));
    }
    auto path = piecewise_constant_path(space, {0.0, 0.3, 0.8, 1.2}, pieces);
    auto omega = omega_profile(path, default_time_grid(path, 12));
    for (std::size_t segs : {3u, 6u, 12u, 24u}) {
        auto prop = assemble(path, Partition::from_breakpoints(path, 0.0, 1.2).merged_with(
                                       Partition::uniform(0.0, 1.2, segs).points));
        for (auto [t, s] : {std::pair{1.2, 0.0}, {0.9, 0.3}, {0.4, 0.1}}) {
            const double norm = spectral_norm_weighted(*space, prop.evaluate(t, s));
            CHECK(norm <= std::exp(omega.integrate(s, t)) + 1e-9);
        }
    }
}

TEST_CASE("partition validation and errors") {
    auto space = make_space(DiscreteSpace::counting(2));
    auto path = smooth_path(space, 1.0, [](double) { return Matrix::Zero(2, 2); });
    Partition bad;
    bad.points = {0.3};
    CHECK_THROWS_AS(assemble(path, bad), ValidationError);
    Partition outside = Partition::uniform(0.0, 2.0, 4);
    CHECK_THROWS_AS(assemble(path, outside), ValidationError);
    auto prop = assemble(path, Partition::uniform(0.0, 1.0, 4));
    CHECK_THROWS_AS(prop.evaluate(0.2, 0.5), ValidationError);
    CHECK_THROWS_AS(prop.evaluate(1.5, 0.0), ValidationError);
}
