#include "evofam/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace evofam {

// ---------------------------------------------------------------------------
// Partition

double Partition::mesh() const {
    double m = 0.0;
    for (std::size_t k = 0; k + 1 < points.size(); ++k) m = std::max(m, points[k + 1] - points[k]);
    return m;
}

void Partition::validate() const {
    if (points.size() < 2) throw ValidationError("Partition: need at least two points");
    for (std::size_t k = 0; k + 1 < points.size(); ++k)
        if (!(points[k] < points[k + 1]))
            throw ValidationError("Partition: points must be strictly increasing");
}

Partition Partition::uniform(double a, double b, std::size_t segments) {
    if (!(a < b) || segments == 0) throw ValidationError("Partition::uniform: need a < b, segments > 0");
    Partition p;
    p.points.resize(segments + 1);
    for (std::size_t k = 0; k <= segments; ++k)
        p.points[k] = a + (b - a) * static_cast<double>(k) / static_cast<double>(segments);
    p.points.back() = b;
    return p;
}

Partition Partition::from_breakpoints(const OperatorPath& path, double a, double b,
                                      std::size_t fallback_segments) {
    std::vector<double> pts{a};
    for (double t : path.breakpoints)
        if (t > a + 1e-14 && t < b - 1e-14) pts.push_back(t);
    pts.push_back(b);
    if (pts.size() == 2) return uniform(a, b, fallback_segments);
    Partition p;
    p.points = std::move(pts);
    p.validate();
    return p;
}

Partition Partition::refined() const {
    Partition p;
    p.points.reserve(points.size() * 2 - 1);
    for (std::size_t k = 0; k + 1 < points.size(); ++k) {
        p.points.push_back(points[k]);
        p.points.push_back(0.5 * (points[k] + points[k + 1]));
    }
    p.points.push_back(points.back());
    return p;
}

Partition Partition::merged_with(const std::vector<double>& extra) const {
    Partition p = *this;
    for (double t : extra)
        if (t > a() + 1e-14 && t < b() - 1e-14) p.points.push_back(t);
    std::sort(p.points.begin(), p.points.end());
    p.points.erase(std::unique(p.points.begin(), p.points.end(),
                               [](double x, double y) { return std::abs(x - y) < 1e-14; }),
                   p.points.end());
    return p;
}

// ---------------------------------------------------------------------------
// Propagator

Propagator::Propagator(OperatorPath path, Partition partition)
    : path_(std::move(path)),
      partition_(std::move(partition)),
      cache_(std::make_unique<ProductCache>()) {
    partition_.validate();
    if (partition_.a() < -1e-12 || partition_.b() > path_.horizon + 1e-12)
        throw ValidationError("Propagator: partition outside [0, horizon]");
    const std::size_t n = partition_.segments();
    averages_.resize(n);
    exponentials_.resize(n);
    parallel_for(n, [&](std::size_t k) {
        const double a = partition_.points[k], b = partition_.points[k + 1];
        averages_[k] = average_operator(path_, a, b);
        exponentials_[k] = matrix_exponential(averages_[k], b - a);
    });
}

Propagator assemble(const OperatorPath& path, Partition partition) {
    return Propagator(path, std::move(partition));
}

std::size_t Propagator::segment_of(double t) const {
    const auto& pts = partition_.points;
    auto it = std::upper_bound(pts.begin(), pts.end(), t);
    if (it == pts.begin()) return 0;
    std::size_t k = static_cast<std::size_t>(it - pts.begin()) - 1;
    if (k >= partition_.segments()) k = partition_.segments() - 1;
    return k;
}

// Ordered product E_{j-1} ... E_i of full segment factors (later times left).
Matrix Propagator::product(std::size_t i, std::size_t j) const {
    if (j <= i) return Matrix::Identity(path_.dim(), path_.dim());
    {
        std::lock_guard<std::mutex> lock(cache_->mutex);
        auto it = cache_->products.find({i, j});
        if (it != cache_->products.end()) return it->second;
    }
    // build from the longest cached prefix [i, k)
    std::size_t k = j - 1;
    Matrix acc;
    bool found = false;
    {
        std::lock_guard<std::mutex> lock(cache_->mutex);
        for (; k > i; --k) {
            auto it = cache_->products.find({i, k});
            if (it != cache_->products.end()) {
                acc = it->second;
                found = true;
                break;
            }
        }
    }
    if (!found) {
        k = i + 1;
        acc = exponentials_[i];
    }
    for (std::size_t m = k; m < j; ++m) {
        acc = exponentials_[m] * acc;
        std::lock_guard<std::mutex> lock(cache_->mutex);
        cache_->products.emplace(std::make_pair(i, m + 1), acc);
    }
    return acc;
}

Matrix Propagator::evaluate(double t, double s) const {
    const double a = partition_.a(), b = partition_.b();
    if (s < a - 1e-12 || t > b + 1e-12 || s > t + 1e-12) {
        std::ostringstream os;
        os << "Propagator::evaluate: (t, s) = (" << t << ", " << s << ") outside [" << a << ", "
           << b << "] or s > t";
        throw ValidationError(os.str());
    }
    s = std::clamp(s, a, b);
    t = std::clamp(t, a, b);
    if (t <= s) return Matrix::Identity(path_.dim(), path_.dim());

    const auto& pts = partition_.points;
    const std::size_t ks = segment_of(s);
    const std::size_t kt = t >= b ? partition_.segments() - 1 : segment_of(t);

    if (ks == kt) return matrix_exponential(averages_[ks], t - s);

    const bool s_aligned = std::abs(s - pts[ks]) < 1e-14;
    const bool t_aligned = std::abs(t - pts[kt + 1]) < 1e-14 || t >= b;

    // full factors cover segments [first_full, last_full)
    const std::size_t first_full = s_aligned ? ks : ks + 1;
    const std::size_t last_full = t_aligned ? kt + 1 : kt;

    Matrix acc = product(first_full, last_full);
    if (!s_aligned) acc = acc * matrix_exponential(averages_[ks], pts[ks + 1] - s);
    if (!t_aligned) acc = matrix_exponential(averages_[kt], t - pts[kt]) * acc;
    return acc;
}

void Propagator::export_csv(const std::string& dir,
                            const std::vector<std::pair<double, double>>& pairs) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream out(fs::path(dir) / "partition.csv");
        out << "lambda\r\n";
        for (double p : partition_.points) {
            std::ostringstream os;
            os.precision(17);
            os << p;
            out << os.str() << "\r\n";
        }
    }
    for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
        const auto [t, s] = pairs[idx];
        const Matrix U = evaluate(t, s);
        std::ostringstream name;
        name << "U_" << idx << ".csv";
        std::ofstream out(fs::path(dir) / name.str());
        out.precision(17);
        out << "t,s,i,j,re,im\r\n";
        for (Index i = 0; i < U.rows(); ++i)
            for (Index j = 0; j < U.cols(); ++j)
                out << t << ',' << s << ',' << i << ',' << j << ',' << U(i, j).real() << ','
                    << U(i, j).imag() << "\r\n";
    }
}

// ---------------------------------------------------------------------------
// refinement loop

Propagator propagate_to_tolerance(const OperatorPath& path, double s, double t, double tol) {
    if (!(tol > 0.0)) throw ValidationError("propagate_to_tolerance: tol must be positive");
    if (!(0.0 <= s && s < t && t <= path.horizon + 1e-12))
        throw ValidationError("propagate_to_tolerance: need 0 <= s < t <= horizon");

    constexpr std::size_t kMaxSegments = 1u << 16;

    Partition part = Partition::from_breakpoints(path, s, t);
    Propagator prop = assemble(path, part);
    Matrix u_prev = prop.evaluate(t, s);
    std::vector<std::pair<double, double>> history;

    double last_diff = std::numeric_limits<double>::infinity();
    for (;;) {
        if (part.segments() * 2 > kMaxSegments) {
            std::ostringstream os;
            os << "propagate_to_tolerance: refinement cap (" << kMaxSegments
               << " segments) reached without convergence; history:";
            for (auto& [mesh, diff] : history) os << " (mesh " << mesh << ", diff " << diff << ")";
            throw NumericalError(os.str());
        }
        part = part.refined();
        Propagator next = assemble(path, part);
        const Matrix u_next = next.evaluate(t, s);
        const double diff = spectral_norm_weighted(*path.space, u_next - u_prev);
        history.emplace_back(part.mesh(), diff);
        const bool two_consecutive = diff <= tol && last_diff <= tol;
        last_diff = diff;
        u_prev = u_next;
        prop = std::move(next);
        if (two_consecutive) {
            prop.converged_ = true;
            break;
        }
    }
    prop.refinement_history_ = std::move(history);
    prop.tolerance_ = tol;
    return prop;
}

// ---------------------------------------------------------------------------
// ODE oracle: Dormand-Prince 5(4), matrix right-hand side -A(t) U

namespace {

struct Dopri5 {
    // Butcher tableau
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    // embedded 4th-order weights
    static constexpr double e1 = 5179.0 / 57600, e3 = 7571.0 / 16695, e4 = 393.0 / 640,
                            e5 = -92097.0 / 339200, e6 = 187.0 / 2100, e7 = 1.0 / 40;
};

}  // namespace

Matrix ode_oracle(const OperatorPath& path, double s, double t, double tol) {
    if (!(tol > 0.0)) throw ValidationError("ode_oracle: tol must be positive");
    if (!(0.0 <= s && s < t && t <= path.horizon + 1e-12))
        throw ValidationError("ode_oracle: need 0 <= s < t <= horizon");

    // mandatory boundaries: breakpoints inside (s, t)
    std::vector<double> stops{s};
    for (double b : path.breakpoints)
        if (b > s + 1e-14 && b < t - 1e-14) stops.push_back(b);
    stops.push_back(t);

    const Index n = path.dim();
    Matrix U = Matrix::Identity(n, n);
    auto rhs = [&path](double time, const Matrix& Y) -> Matrix { return -(path(time) * Y); };

    for (std::size_t seg = 0; seg + 1 < stops.size(); ++seg) {
        double x = stops[seg];
        const double x_end = stops[seg + 1];
        // half-open pieces: sample the right-hand side strictly inside
        const double inner_shift = 1e-12 * (x_end - x);
        double h = (x_end - x) / 16.0;
        Matrix k1 = rhs(x + inner_shift, U);
        while (x < x_end - 1e-14 * path.horizon) {
            h = std::min(h, x_end - x);
            if (h < 1e-14 * std::max(1.0, path.horizon)) {
                std::ostringstream os;
                os << "ode_oracle: step size underflow at t = " << x;
                throw NumericalError(os.str());
            }
            using D = Dopri5;
            const Matrix k2 = rhs(x + D::c2 * h, U + h * (D::a21 * k1));
            const Matrix k3 = rhs(x + D::c3 * h, U + h * (D::a31 * k1 + D::a32 * k2));
            const Matrix k4 = rhs(x + D::c4 * h, U + h * (D::a41 * k1 + D::a42 * k2 + D::a43 * k3));
            const Matrix k5 = rhs(x + D::c5 * h,
                                  U + h * (D::a51 * k1 + D::a52 * k2 + D::a53 * k3 + D::a54 * k4));
            const Matrix k6 =
                rhs(std::min(x + h, x_end - inner_shift),
                    U + h * (D::a61 * k1 + D::a62 * k2 + D::a63 * k3 + D::a64 * k4 +
                             D::a65 * k5));
            const Matrix y5 =
                U + h * (D::b1 * k1 + D::b3 * k3 + D::b4 * k4 + D::b5 * k5 + D::b6 * k6);
            const Matrix k7 = rhs(std::min(x + h, x_end - inner_shift), y5);
            const Matrix y4 = U + h * (D::e1 * k1 + D::e3 * k3 + D::e4 * k4 + D::e5 * k5 +
                                       D::e6 * k6 + D::e7 * k7);
            const double scale = std::max(1.0, U.norm());
            const double err = (y5 - y4).norm() / scale;
            if (err <= tol) {
                x += h;
                U = y5;
                k1 = k7;  // FSAL
            }
            const double factor =
                err > 0 ? 0.9 * std::pow(tol / err, 0.2) : 4.0;
            h *= std::clamp(factor, 0.2, 4.0);
        }
    }
    return U;
}

}  // namespace evofam
