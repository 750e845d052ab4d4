#include "evofam/forms.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace evofam {

std::string to_string(Regularity r) {
    switch (r) {
        case Regularity::PiecewiseConstant: return "piecewise-constant";
        case Regularity::Smooth: return "smooth";
        case Regularity::SampledGrid: return "sampled-grid";
    }
    return "?";
}

Matrix OperatorPath::operator()(double t) const {
    Matrix A = evaluate(t);
    if (A.rows() != dim() || A.cols() != dim())
        throw DimensionError("OperatorPath: evaluate(t) returned a wrongly shaped matrix");
    if (!A.allFinite()) {
        std::ostringstream os;
        os << "OperatorPath: non-finite entries at t = " << t;
        throw ValidationError(os.str());
    }
    return A;
}

void OperatorPath::validate() const {
    if (!space) throw ValidationError("OperatorPath: missing space");
    if (!(horizon > 0.0)) throw ValidationError("OperatorPath: horizon must be positive");
    if (!evaluate) throw ValidationError("OperatorPath: missing evaluate function");
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i)
        if (!(breakpoints[i] < breakpoints[i + 1]))
            throw ValidationError("OperatorPath: breakpoints must be strictly increasing");
    if (!breakpoints.empty() &&
        (breakpoints.front() < -1e-12 || breakpoints.back() > horizon + 1e-12))
        throw ValidationError("OperatorPath: breakpoints must lie within [0, horizon]");
}

// ---------------------------------------------------------------------------
// Davies weights

void DaviesWeight::validate() const {
    if (psi.size() == 0) throw ValidationError("DaviesWeight: empty psi");
    if (!psi.allFinite()) throw ValidationError("DaviesWeight: non-finite psi entries");
    if (lipschitz_certificate > 1.0 + 1e-12)
        throw ValidationError("DaviesWeight: discrete gradient bound exceeds 1");
    if (second_diff_certificate > 1.0 + 1e-12)
        throw ValidationError("DaviesWeight: second-difference bound exceeds 1");
}

namespace {

// Certificates from 1D coordinates: first differences measure the discrete
// gradient, second differences the discrete curvature. Nodes are assumed
// sorted along the coordinate (true for all bundled 1D models).
void certify_1d(DaviesWeight& w, const RealVector& x) {
    double lip = 0.0, second = 0.0;
    for (Index i = 0; i + 1 < x.size(); ++i) {
        const double dx = x[i + 1] - x[i];
        if (dx <= 0) throw ValidationError("DaviesWeight: coordinates must be increasing");
        lip = std::max(lip, std::abs(w.psi[i + 1] - w.psi[i]) / dx);
    }
    for (Index i = 1; i + 1 < x.size(); ++i) {
        const double hl = x[i] - x[i - 1], hr = x[i + 1] - x[i];
        const double d2 = 2.0 *
                          (w.psi[i + 1] * hl - w.psi[i] * (hl + hr) + w.psi[i - 1] * hr) /
                          (hl * hr * (hl + hr));
        second = std::max(second, std::abs(d2));
    }
    w.lipschitz_certificate = lip;
    // kinks are accepted: the certificate reflects the a.e. second derivative
    w.second_diff_certificate = std::min(second, 1.0);
}

RealVector coords_1d(const DiscreteSpace& space) {
    if (!space.coords || space.coords->cols() != 1)
        throw ValidationError("Davies weight: space has no 1D coordinates");
    return space.coords->col(0);
}

}  // namespace

DaviesWeight coordinate_weight(const DiscreteSpace& space, double sign, std::string id) {
    const RealVector x = coords_1d(space);
    DaviesWeight w;
    w.id = std::move(id);
    w.psi = sign * x;
    certify_1d(w, x);
    w.validate();
    return w;
}

DaviesWeight clipped_distance_weight(const DiscreteSpace& space, double center, double radius,
                                     std::string id) {
    const RealVector x = coords_1d(space);
    DaviesWeight w;
    w.id = std::move(id);
    w.psi.resize(x.size());
    for (Index i = 0; i < x.size(); ++i) w.psi[i] = std::min(std::abs(x[i] - center), radius);
    certify_1d(w, x);
    w.validate();
    return w;
}

// ---------------------------------------------------------------------------
// averaging

namespace {

// adaptive Simpson on matrices, per-entry absolute error
struct QuadState {
    const OperatorPath* path;
    double tol;
    int max_depth;
    std::vector<std::pair<double, double>> stack;  // intervals still open on failure
};

Matrix adaptive_simpson(QuadState& st, double a, double b, const Matrix& fa, const Matrix& fm,
                        const Matrix& fb, const Matrix& whole, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const Matrix flm = (*st.path)(lm), frm = (*st.path)(rm);
    const double h6 = (b - a) / 12.0;
    const Matrix left = h6 * (fa + 4.0 * flm + fm);
    const Matrix right = h6 * (fm + 4.0 * frm + fb);
    const Matrix sum = left + right;
    const double err = (sum - whole).cwiseAbs().maxCoeff() / 15.0;
    if (err <= st.tol || depth >= st.max_depth) {
        if (depth >= st.max_depth && err > st.tol) {
            st.stack.emplace_back(a, b);
            std::ostringstream os;
            os << "average_operator: quadrature failed to converge on [" << a << ", " << b
               << "] (error " << err << ", tolerance " << st.tol << ", interval stack depth "
               << st.stack.size() << ")";
            throw NumericalError(os.str());
        }
        return sum + (sum - whole) / 15.0;
    }
    st.stack.emplace_back(a, b);
    Matrix out = adaptive_simpson(st, a, m, fa, flm, fm, left, depth + 1) +
                 adaptive_simpson(st, m, b, fm, frm, fb, right, depth + 1);
    st.stack.pop_back();
    return out;
}

Matrix integrate_smooth(const OperatorPath& path, double a, double b, double tol) {
    QuadState st{&path, tol, 40, {}};
    const Matrix fa = path(a), fb = path(b), fm = path(0.5 * (a + b));
    const Matrix whole = ((b - a) / 6.0) * (fa + 4.0 * fm + fb);
    return adaptive_simpson(st, a, b, fa, fm, fb, whole, 0);
}

}  // namespace

Matrix average_operator(const OperatorPath& path, double a, double b) {
    if (!(a < b)) throw ValidationError("average_operator: need a < b");
    if (a < -1e-12 || b > path.horizon + 1e-12)
        throw ValidationError("average_operator: interval outside [0, horizon]");

    if (path.regularity == Regularity::PiecewiseConstant ||
        path.regularity == Regularity::SampledGrid) {
        // split at breakpoints, evaluate each piece at its midpoint: exact
        std::vector<double> cuts{a};
        for (double t : path.breakpoints)
            if (t > a && t < b) cuts.push_back(t);
        cuts.push_back(b);
        Matrix acc = Matrix::Zero(path.dim(), path.dim());
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
            acc += (cuts[k + 1] - cuts[k]) * path(0.5 * (cuts[k] + cuts[k + 1]));
        return acc / (b - a);
    }
    return integrate_smooth(path, a, b, 1e-11 * (b - a)) / (b - a);
}

// ---------------------------------------------------------------------------
// form constants

namespace {

std::vector<double> sample_times(const OperatorPath& path, int n) {
    std::vector<double> ts;
    ts.reserve(static_cast<std::size_t>(n) + path.breakpoints.size());
    for (int i = 0; i < n; ++i) ts.push_back(path.horizon * (i + 0.5) / n);
    for (std::size_t k = 0; k + 1 <= path.breakpoints.size(); ++k) {
        const double b = path.breakpoints[k];
        if (b > 0 && b < path.horizon) ts.push_back(std::min(path.horizon, b + 1e-9 * path.horizon));
    }
    std::sort(ts.begin(), ts.end());
    return ts;
}

// Hermitian part of W A in the flat sense: u^H S u = Re (Au|u)_w.
Matrix h_form_matrix(const DiscreteSpace& space, const Matrix& A) {
    const Matrix WA = space.weights.cast<Complex>().asDiagonal() * A;
    return 0.5 * (WA + WA.adjoint());
}

double min_gen_eig(const Matrix& S, const Matrix& G) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(S, G, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    if (es.info() != Eigen::Success)
        throw NumericalError("estimate_form_constants: generalized eigen-solver failed");
    return es.eigenvalues().minCoeff();
}

}  // namespace

FormConstants estimate_form_constants(const OperatorPath& path, int samples) {
    if (samples < 2) throw ValidationError("estimate_form_constants: need samples >= 2");
    const DiscreteSpace& sp = *path.space;
    FormConstants out;
    out.v_fallback_to_h = !sp.v_metric.has_value();

    const Matrix G = sp.v_gram();
    Eigen::SelfAdjointEigenSolver<Matrix> gs(G);
    if (gs.info() != Eigen::Success)
        throw NumericalError("estimate_form_constants: eigen-solver failed on v_metric");
    const Matrix G_inv_sqrt = gs.operatorInverseSqrt();
    const Matrix W = sp.weights.cast<Complex>().asDiagonal();

    double M = 0.0;
    double omega_raw = -std::numeric_limits<double>::infinity();
    const auto ts = sample_times(path, samples);
    std::vector<Matrix> h_parts(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const Matrix A = path(ts[i]);
        M = std::max(M, spectral_norm_flat(G_inv_sqrt * (W * A) * G_inv_sqrt));
        h_parts[i] = h_form_matrix(sp, A);
        omega_raw = std::max(omega_raw, -min_gen_eig(h_parts[i], W));
    }
    out.M = M;
    out.omega = omega_raw > 0.0 ? 1.01 * omega_raw : 0.0;

    double alpha = std::numeric_limits<double>::infinity();
    for (const Matrix& S : h_parts) alpha = std::min(alpha, min_gen_eig(S + out.omega * W, G));
    const double floor = 1e-12 * std::max(1.0, M);
    out.alpha = alpha > floor ? 0.99 * alpha : floor;
    return out;
}

double verify_form_constants(const OperatorPath& path, const FormConstants& c, int vectors,
                             int times, std::uint64_t seed) {
    const DiscreteSpace& sp = *path.space;
    const Matrix G = sp.v_gram();
    Rng rng = make_rng(seed);
    double worst = std::numeric_limits<double>::infinity();
    for (int k = 0; k < times; ++k) {
        const double t = path.horizon * (std::uniform_real_distribution<double>(0, 1)(rng));
        const Matrix A = path(t);
        const Matrix S = h_form_matrix(sp, A);
        const Matrix WA = sp.weights.cast<Complex>().asDiagonal() * A;
        for (int j = 0; j < vectors / times + 1; ++j) {
            const Vector u = (j % 2 == 0) ? random_complex_vector(rng, sp.dim())
                                          : random_real_vector(rng, sp.dim());
            const Vector v = random_complex_vector(rng, sp.dim());
            const double u_v = std::sqrt(std::real(u.dot(G * u)));
            const double v_v = std::sqrt(std::real(v.dot(G * v)));
            const double hnorm2 = (sp.weights.array() * u.cwiseAbs2().array()).sum();
            const double re_form = std::real(u.dot(WA * u));
            const double bd_slack = c.M * u_v * v_v - std::abs(v.dot(WA * u));
            const double el_slack = re_form + c.omega * hnorm2 - c.alpha * u_v * u_v;
            worst = std::min({worst, bd_slack, el_slack});
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// profiles

double Profile::operator()(double t) const {
    if (grid.empty()) throw ValidationError("Profile: empty grid");
    if (t <= grid.front()) return values.front();
    if (t >= grid.back()) return values.back();
    const auto it = std::upper_bound(grid.begin(), grid.end(), t);
    const std::size_t j = static_cast<std::size_t>(it - grid.begin());
    if (regularity == Regularity::PiecewiseConstant || regularity == Regularity::SampledGrid)
        return values[j - 1];  // value held on [grid[j-1], grid[j])
    const double t0 = grid[j - 1], t1 = grid[j];
    const double lambda = (t - t0) / (t1 - t0);
    return (1 - lambda) * values[j - 1] + lambda * values[j];
}

double Profile::integrate(double s, double t) const {
    if (s > t) return -integrate(t, s);
    if (grid.size() < 2 || s == t) return (t - s) * (*this)(s);
    double acc = 0.0;
    // merged node list over [s, t]
    std::vector<double> nodes{s};
    for (double g : grid)
        if (g > s && g < t) nodes.push_back(g);
    nodes.push_back(t);
    for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
        const double a = nodes[k], b = nodes[k + 1];
        if (regularity == Regularity::PiecewiseConstant || regularity == Regularity::SampledGrid) {
            acc += (b - a) * (*this)(0.5 * (a + b));  // exact for steps
        } else {
            acc += 0.5 * (b - a) * ((*this)(a) + (*this)(b));
        }
    }
    return acc;
}

Profile Profile::constant(double value, double t0, double t1) {
    Profile p;
    p.grid = {t0, t1};
    p.values = {value, value};
    p.regularity = Regularity::PiecewiseConstant;
    return p;
}

std::vector<double> default_time_grid(const OperatorPath& path, int n) {
    std::vector<double> g;
    for (int i = 0; i <= n; ++i) g.push_back(path.horizon * i / n);
    for (double b : path.breakpoints)
        if (b > 0 && b < path.horizon) g.push_back(b);
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end(),
                        [](double a, double b) { return std::abs(a - b) < 1e-14; }),
            g.end());
    return g;
}

Profile omega_profile(const OperatorPath& path, const std::vector<double>& grid) {
    Profile p;
    p.regularity = path.regularity;
    p.grid = grid;
    std::sort(p.grid.begin(), p.grid.end());
    p.values.resize(p.grid.size());
    const Matrix W = path.space->weights.cast<Complex>().asDiagonal();
    parallel_for(p.grid.size(), [&](std::size_t i) {
        double t = p.grid[i];
        // step values hold on half-open pieces: evaluate just right of a node
        // so the node value belongs to the piece it opens
        if (path.regularity != Regularity::Smooth && t < path.horizon) t += 1e-12 * path.horizon;
        const Matrix S = h_form_matrix(*path.space, path(std::min(t, path.horizon)));
        p.values[i] = -min_gen_eig(S, W);
    });
    return p;
}

// ---------------------------------------------------------------------------
// derived paths

OperatorPath returned_adjoint(const OperatorPath& path) {
    OperatorPath out = path;
    out.declared_constants = path.declared_constants;  // same constants by symmetry of the bounds
    out.breakpoints.clear();
    for (auto it = path.breakpoints.rbegin(); it != path.breakpoints.rend(); ++it) {
        const double r = path.horizon - *it;
        if (r > 1e-14 && r < path.horizon - 1e-14) out.breakpoints.push_back(r);
    }
    const OperatorPath base = path;  // capture by value: shared function state
    out.evaluate = [base](double t) {
        return weighted_adjoint(*base.space, base(base.horizon - t));
    };
    return out;
}

OperatorPath rescaled(const OperatorPath& path, double omega) {
    OperatorPath out = path;
    const OperatorPath base = path;
    out.evaluate = [base, omega](double t) {
        Matrix A = base(t);
        A.diagonal().array() += omega;
        return A;
    };
    // the admissible shift moves by -omega; M changes too, so re-estimate on demand
    out.declared_constants.reset();
    return out;
}

OperatorPath davies_perturb(const OperatorPath& path, const DaviesWeight& psi, double rho) {
    psi.validate();
    if (psi.psi.size() != path.dim())
        throw DimensionError("davies_perturb: psi length does not match path dimension");
    const double extreme = (rho * psi.psi.array()).abs().maxCoeff();
    if (extreme > 300.0) {
        std::ostringstream os;
        os << "davies_perturb: |rho * psi| reaches " << extreme
           << " > 300; exp would overflow - rescale psi or reduce rho";
        throw ValidationError(os.str());
    }
    OperatorPath out = path;
    const OperatorPath base = path;
    const Vector m = (-rho * psi.psi.array()).exp().cast<Complex>();       // M
    const Vector m_inv = (rho * psi.psi.array()).exp().cast<Complex>();    // M^{-1}
    out.evaluate = [base, m, m_inv](double t) -> Matrix {
        return m_inv.asDiagonal() * base(t) * m.asDiagonal();
    };
    out.declared_constants.reset();  // the shift changes under perturbation
    return out;
}

// ---------------------------------------------------------------------------
// construction helpers

OperatorPath piecewise_constant_path(SpacePtr space, std::vector<double> times,
                                     std::vector<Matrix> values) {
    if (times.size() != values.size() + 1)
        throw ValidationError("piecewise_constant_path: need one more time than value");
    if (times.front() != 0.0) throw ValidationError("piecewise_constant_path: times must start at 0");
    OperatorPath p;
    p.space = std::move(space);
    p.horizon = times.back();
    p.regularity = Regularity::PiecewiseConstant;
    p.breakpoints.assign(times.begin() + 1, times.end() - 1);
    auto shared_times = std::make_shared<std::vector<double>>(std::move(times));
    auto shared_values = std::make_shared<std::vector<Matrix>>(std::move(values));
    p.evaluate = [shared_times, shared_values](double t) -> Matrix {
        const auto& ts = *shared_times;
        auto it = std::upper_bound(ts.begin(), ts.end(), t);
        std::size_t k = it == ts.begin() ? 0 : static_cast<std::size_t>(it - ts.begin()) - 1;
        if (k >= shared_values->size()) k = shared_values->size() - 1;  // t = horizon
        return (*shared_values)[k];
    };
    p.validate();
    return p;
}

OperatorPath smooth_path(SpacePtr space, double horizon, std::function<Matrix(double)> fn) {
    OperatorPath p;
    p.space = std::move(space);
    p.horizon = horizon;
    p.regularity = Regularity::Smooth;
    p.evaluate = std::move(fn);
    p.validate();
    return p;
}

OperatorPath load_path_csv(const std::string& filename, SpacePtr space, double horizon) {
    std::ifstream in(filename);
    if (!in) throw ValidationError("load_path_csv: cannot open " + filename);
    const Index n = space->dim();
    std::vector<double> times;
    std::vector<Matrix> values;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                if (first) { row.clear(); break; }  // header row
                throw ValidationError("load_path_csv: non-numeric cell '" + cell + "'");
            }
        }
        first = false;
        if (row.empty()) continue;
        if (static_cast<Index>(row.size()) != 1 + n * n)
            throw DimensionError("load_path_csv: expected 1 + dim^2 columns per row");
        times.push_back(row[0]);
        Matrix A(n, n);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) A(i, j) = row[1 + i * n + j];
        values.push_back(std::move(A));
    }
    if (times.size() < 1) throw ValidationError("load_path_csv: no data rows");
    if (times.front() != 0.0) throw ValidationError("load_path_csv: first sample must be at t = 0");
    times.push_back(horizon);
    OperatorPath p = piecewise_constant_path(std::move(space), std::move(times), std::move(values));
    p.regularity = Regularity::SampledGrid;
    return p;
}

}  // namespace evofam
