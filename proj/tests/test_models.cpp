#include <doctest.h>

#include "evofam/kernels.hpp"
#include "evofam/models.hpp"
#include "evofam/properties.hpp"

#include <fstream>

using namespace evofam;

TEST_CASE("dynamic graph builder basics") {
    GraphModel k2 = make_path_graph(2, EdgeSchedule::constant(RealVector::Ones(1)), 1.0);
    auto path = build_dynamic_graph(k2);
    Matrix want(2, 2);
    want << 1, -1, -1, 1;
    CHECK((path(0.3) - want).norm() == 0.0);

    // middle node Dirichlet: decoupled diagonal
    GraphModel three = make_path_graph(3, EdgeSchedule{}, 1.0);
    three.dirichlet_nodes = {1};
    three.schedule.weights = [](double) {
        RealVector m(2);
        m << 2.0, 5.0;
        return m;
    };
    three.schedule.regularity = Regularity::PiecewiseConstant;
    auto restricted = build_dynamic_graph(three);
    CHECK(restricted.dim() == 2);
    Matrix diag = restricted(0.1);
    CHECK(diag(0, 0) == Complex(2.0, 0.0));
    CHECK(diag(1, 1) == Complex(5.0, 0.0));
    CHECK(std::abs(diag(0, 1)) == 0.0);

    // Hermitian PSD at every sampled t when m >= 0
    Rng rng = make_rng(5);
    GraphModel rnd = make_path_graph(5, EdgeSchedule{}, 1.0);
    rnd.schedule.weights = [](double t) {
        RealVector m(4);
        for (int e = 0; e < 4; ++e) m[e] = 0.5 + 0.5 * std::sin(t + e);
        return m;
    };
    rnd.schedule.regularity = Regularity::Smooth;
    auto rpath = build_dynamic_graph(rnd);
    for (double t : {0.1, 0.4, 0.9}) {
        const Matrix A = rpath(t);
        CHECK((A - A.adjoint()).cwiseAbs().maxCoeff() < 1e-14);
        CHECK(spectral_summary(*rpath.space, A).min_sym_eigen >= -1e-12);
    }

    // on/off schedule leaves an exact piecewise propagator
    GraphModel onoff = make_path_graph(3, EdgeSchedule{}, 1.0);
    onoff.schedule = EdgeSchedule{};
    onoff.schedule.weights = [](double t) {
        RealVector m(2);
        m << (t < 0.5 ? 1.0 : 0.0), 1.0;
        return m;
    };
    onoff.schedule.regularity = Regularity::PiecewiseConstant;
    onoff.schedule.breakpoints = {0.5};
    auto opath = build_dynamic_graph(onoff);
    CHECK(!opath.flags.empty());  // switching the first edge off disconnects node 0
    auto prop = assemble(opath, Partition::from_breakpoints(opath, 0.0, 1.0));
    const Matrix direct =
        matrix_exponential(opath(0.75), 0.5) * matrix_exponential(opath(0.25), 0.5);
    CHECK((prop.evaluate(1.0, 0.0) - direct).norm() == 0.0);
}

TEST_CASE("pagerank generator on the directed 3-cycle") {
    GraphModel cyc = make_directed_cycle(3, EdgeSchedule::constant(RealVector::Ones(3)), 1.0);
    auto path = build_pagerank(cyc);
    Matrix A = path(0.2);
    Matrix C = Matrix::Zero(3, 3);  // cyclic permutation
    C(1, 0) = 1;
    C(2, 1) = 1;
    C(0, 2) = 1;
    CHECK((A - (Matrix::Identity(3, 3) - C)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((Eigen::RowVectorXcd::Ones(3) * A).cwiseAbs().maxCoeff() == 0.0);

    // probability input stays a probability vector
    auto prop = assemble(path, Partition::uniform(0.0, 1.0, 6));
    Vector e1 = Vector::Zero(3);
    e1[0] = 1;
    const Vector out = prop.evaluate(0.8, 0.0) * e1;
    CHECK(out.real().minCoeff() >= -1e-12);
    CHECK(out.real().sum() == doctest::Approx(1.0).epsilon(1e-12));

    GraphModel dangling = make_directed_cycle(3, EdgeSchedule{}, 1.0);
    dangling.schedule.weights = [](double t) {
        RealVector m(3);
        m << 1.0, (t > 0.5 ? 0.0 : 1.0), 1.0;
        return m;
    };
    dangling.schedule.regularity = Regularity::PiecewiseConstant;
    dangling.schedule.breakpoints = {0.5};
    CHECK_THROWS_WITH_AS(build_pagerank(dangling) /* node 1 dangles after t=0.5 */,
                         doctest::Contains("node 1"), ValidationError);
}

TEST_CASE("black-scholes discretization") {
    auto sigma = ScalarSchedule::piecewise({0.0, 0.5, 1.0}, {0.2, 0.4});
    auto path = build_black_scholes(sigma, 0.05, 0.5, 4.0, 128, 1.0);
    REQUIRE(path.declared_constants.has_value());
    // declared shift is sup (sigma^2 - 3r/2)^+
    CHECK(path.declared_constants->omega == doctest::Approx(0.4 * 0.4 - 1.5 * 0.05));
    CHECK(path.declared_constants->alpha == doctest::Approx(0.5 * 0.2 * 0.2));

    // declared constants actually verify on random data
    const double slack = verify_form_constants(path, *path.declared_constants, 2000, 20, 7);
    CHECK(slack >= -1e-9 * path.declared_constants->M);

    // with 3r >= sigma^2 the family is a contraction
    auto calm = build_black_scholes(ScalarSchedule::constant(0.2), 0.05, 0.5, 4.0, 64, 1.0);
    CHECK(calm.declared_constants->omega == 0.0);
    auto prop = assemble(calm, Partition::uniform(0.0, 1.0, 8));
    CHECK(operator_norm(*calm.space, prop.evaluate(1.0, 0.0), NormP::Two, NormP::Two) <=
          1.0 + 1e-10);

    // sub-Markovian: positivity criterion + sup-norm contraction
    auto prop2 = propagate_to_tolerance(path, 0.0, 1.0, 1e-8);
    auto pairs = ts_grid(prop2, 5);
    auto pos = check_positivity(prop2, pairs);
    CHECK(pos.verdict == Verdict::Holds);
    CHECK(*pos.criterion_verdict == Verdict::Holds);
    auto cc = check_linf_l1_contractivity(prop2, pairs);
    CHECK(cc.details.at("norm_inf_to_inf") <= 1.0 + 1e-10);

    // payoff below the identity profile stays below it
    const RealVector x = path.space->coords->col(0);
    Vector payoff(x.size());
    for (Index i = 0; i < x.size(); ++i) payoff[i] = std::min(x[i], 2.0);
    for (const auto& [t, s] : pairs) {
        const Vector u = prop2.evaluate(t, s) * payoff;
        CHECK((u.real() - x).maxCoeff() <= 1e-9);
    }

    CHECK_THROWS_AS(
        build_black_scholes(ScalarSchedule::constant(-0.1), 0.05, 0.5, 4.0, 64, 1.0),
        ValidationError);
}

TEST_CASE("metric interval model: spectral gap converges to pi^2 at rate m^-2") {
    const double pi = std::acos(-1.0);
    double prev_err = std::numeric_limits<double>::infinity();
    for (int m : {16, 32, 64, 128}) {
        auto path = build_metric_graph(make_interval_model(m, ScalarSchedule::constant(1.0), 1.0));
        auto eq = equilibrium(path);
        REQUIRE(eq.applicability == Verdict::Holds);
        const double gap = eq.gap_profile(0.5);
        const double err = std::abs(gap - pi * pi);
        CHECK(err < prev_err * 0.5);  // at least first order gain per doubling (O(m^-2) expected)
        if (m == 64) CHECK(err / (pi * pi) < 0.02);
        prev_err = err;
    }
}

TEST_CASE("metric graph assembly: stochastic Kirchhoff star") {
    auto path = build_metric_graph(make_star_model(3, 16, 1.0));
    // generator rows and columns sum to zero (Markovian and stochastic)
    const Matrix A = path(0.3);
    const RealVector w = path.space->weights;
    CHECK((A * Vector::Ones(A.cols())).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(((w.cast<Complex>().transpose() * A)).cwiseAbs().maxCoeff() < 1e-12);

    auto prop = propagate_to_tolerance(path, 0.0, 1.0, 1e-9);
    auto pairs = ts_grid(prop, 5);
    CHECK(check_stochastic(prop, pairs).verdict == Verdict::Holds);
    CHECK(check_positivity(prop, pairs).verdict == Verdict::Holds);

    // convergence to the mean at the metric-graph gap rate (>= pi^2/9)
    auto eq = equilibrium(path);
    REQUIRE(eq.applicability == Verdict::Holds);
    const double pi = std::acos(-1.0);
    CHECK(eq.gap_profile(0.2) >= pi * pi / 9.0);
    std::vector<double> t_grid{0.25, 0.5, 1.0};
    CHECK(check_longtime(prop, eq, t_grid).verdict == Verdict::Holds);
}

TEST_CASE("loop with antisymmetric trace space: contractive but not positive") {
    auto path = build_metric_graph(make_loop_model(24, 1.0));
    auto prop = propagate_to_tolerance(path, 0.0, 1.0, 1e-9);
    auto pairs = ts_grid(prop, 6);
    CHECK(check_linf_l1_contractivity(prop, pairs).verdict == Verdict::Holds);
    auto pos = check_positivity(prop, pairs);
    CHECK(pos.verdict == Verdict::Fails);
    CHECK(*pos.criterion_verdict == Verdict::Fails);
}

TEST_CASE("elliptic 1d: coefficient formulas") {
    Elliptic1DModel mod;
    mod.cells = 32;
    mod.a11 = [](double, double) { return Complex(1.0, 0.0); };
    mod.b1 = [](double, double) { return Complex(1.0, 0.0); };
    mod.nu = 1.0;
    mod.c0 = 1.0;
    mod.horizon = 1.0;
    mod.regularity = Regularity::PiecewiseConstant;

    // b == 1, c == 0, a0 == 0: omega_2 = (1/2 + 1/2) * 1 = 1
    CHECK(omega_p_bound(mod, 2.0) == doctest::Approx(1.0));
    CHECK(omega_p_bound(mod, 4.0) == doctest::Approx(0.75));
    CHECK_THROWS_AS(omega_p_bound(mod, 1.0), ValidationError);
    CHECK_THROWS_AS(omega_p_bound(mod, std::numeric_limits<double>::infinity()), ValidationError);

    Elliptic1DModel pure = mod;
    pure.b1 = nullptr;
    auto lc0 = linear_contractivity_constants(pure);
    CHECK(lc0.alpha1 == 0.0);
    CHECK(lc0.alpha2 == 0.0);
    CHECK(lc0.alpha2_star == 0.0);
    CHECK(omega_p_bound(pure, 8.0) == doctest::Approx(0.0));

    Elliptic1DModel cmod = mod;
    cmod.b1 = nullptr;
    cmod.c1 = [](double, double) { return Complex(1.0, 0.0); };
    auto lc = linear_contractivity_constants(cmod);
    CHECK(lc.alpha1 == doctest::Approx(1.0));
    CHECK(lc.alpha1_star == doctest::Approx(1.0));
    CHECK(lc.alpha2 == doctest::Approx(1.0));
    CHECK(lc.alpha2_star == doctest::Approx(0.0));

    // rho = 2 perturbation (worst weight psi' = -1): c_rho = 1 + 2 = 3, so
    // alpha_{2,rho} = 9, within the bound 2 alpha2 + 2 rho^2 c0^2 / nu = 10
    auto pert = perturbed_coefficients(cmod, [](double) { return -1.0; }, 2.0);
    auto lcp = linear_contractivity_constants(pert);
    CHECK(lcp.alpha2 == doctest::Approx(9.0));
    CHECK(lcp.alpha2 <= 2.0 * lc.alpha2 + 2.0 * 4.0 * 1.0 + 1e-12);
}

TEST_CASE("elliptic 1d: davies perturbation routes agree") {
    Elliptic1DModel mod;
    mod.cells = 48;
    mod.a11 = [](double, double) { return Complex(1.0, 0.0); };
    mod.b1 = [](double, double) { return Complex(0.7, 0.0); };
    mod.c1 = [](double, double) { return Complex(0.2, 0.0); };
    mod.a0 = [](double, double) { return Complex(0.1, 0.0); };
    mod.nu = 1.0;
    mod.c0 = 1.0;
    mod.horizon = 1.0;
    mod.regularity = Regularity::PiecewiseConstant;

    auto base = build_elliptic_1d(mod);
    auto psi = coordinate_weight(*base.space);
    const double rho = 1.5;

    // element-level perturbed assembly == matrix similarity, to roundoff
    auto direct = assemble_davies_elliptic_1d(mod, psi, rho);
    auto conj = davies_perturb(base, psi, rho);
    CHECK((direct(0.4) - conj(0.4)).cwiseAbs().maxCoeff() < 1e-9);

    // continuum-coefficient assembly converges at O(h^2)
    double prev = std::numeric_limits<double>::infinity();
    for (int cells : {16, 32, 64}) {
        Elliptic1DModel fine = mod;
        fine.cells = cells;
        auto cont = build_elliptic_1d(perturbed_coefficients(fine, [](double) { return 1.0; }, rho));
        auto disc = assemble_davies_elliptic_1d(fine, coordinate_weight(*cont.space), rho);
        const double diff = (cont(0.4) - disc(0.4)).cwiseAbs().maxCoeff() /
                            cont(0.4).cwiseAbs().maxCoeff();
        CHECK(diff < prev);
        prev = diff;
    }
    CHECK(prev < 1e-3);
}

TEST_CASE("elliptic 1d with b = c is self-adjoint in law") {
    Elliptic1DModel mod;
    mod.cells = 40;
    mod.a11 = [](double, double) { return Complex(1.0, 0.0); };
    mod.b1 = [](double, double) { return Complex(0.5, 0.0); };
    mod.c1 = [](double, double) { return Complex(0.5, 0.0); };
    mod.nu = 1.0;
    mod.c0 = 1.0;
    mod.horizon = 1.0;
    mod.regularity = Regularity::PiecewiseConstant;
    auto path = build_elliptic_1d(mod);
    // the generator is Hermitian in the weighted metric
    const Matrix A = path(0.5);
    CHECK((A - weighted_adjoint(*path.space, A)).cwiseAbs().maxCoeff() < 1e-11);
    // kernel symmetry against the returned adjoint
    auto prop = assemble(path, Partition::uniform(0.0, 1.0, 8));
    auto back_prop = assemble(returned_adjoint(path), Partition::uniform(0.0, 1.0, 8));
    const Matrix g1 = kernel_matrix(prop, 0.75, 0.25);
    const Matrix g2 = kernel_matrix(back_prop, 0.75, 0.25);
    CHECK((g1 - g2.conjugate()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("edge list loader") {
    const std::string file = "/tmp/evofam_edges.txt";
    {
        std::ofstream out(file);
        out << "# head tail schedule\n0 1 0\n1 2 1\n";
    }
    std::vector<ScalarSchedule> schedules{ScalarSchedule::constant(1.0),
                                          ScalarSchedule::piecewise({0.0, 0.5, 1.0}, {2.0, 3.0})};
    GraphModel g = load_edge_list(file, schedules, 1.0);
    CHECK(g.num_nodes == 3);
    CHECK(g.edges.size() == 2);
    const RealVector m0 = g.schedule.weights(0.25);
    CHECK(m0[0] == 1.0);
    CHECK(m0[1] == 2.0);
    const RealVector m1 = g.schedule.weights(0.75);
    CHECK(m1[1] == 3.0);
    CHECK(g.schedule.breakpoints == std::vector<double>{0.5});
}
