#pragma once

#include "evofam/hilbert.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace evofam {

enum class Regularity { PiecewiseConstant, Smooth, SampledGrid };

std::string to_string(Regularity r);

/// Boundedness / ellipticity constants of a path: |a(t;u,v)| <= M |u|_V |v|_V
/// and Re(A(t)u|u) + omega |u|^2 >= alpha |u|_V^2.
struct FormConstants {
    double M = 0.0;
    double alpha = 0.0;
    double omega = 0.0;
    bool v_fallback_to_h = false;  // set when v_metric was absent and V = H was used
};

/// Time-dependent operator t -> A(t) on a discretized space, t in [0, T].
///
/// Piecewise-constant and sampled-grid paths hold each value on the
/// half-open interval between breakpoints; breakpoints are also honored as mandatory
/// nodes by averaging, partition refinement and the ODE oracle. Evaluation
/// must be safe to call concurrently.
struct OperatorPath {
    SpacePtr space;
    double horizon = 0.0;
    std::function<Matrix(double)> evaluate;
    Regularity regularity = Regularity::Smooth;
    std::vector<double> breakpoints;  // strictly increasing, inside [0, horizon]
    std::optional<FormConstants> declared_constants;
    std::vector<std::string> flags;  // builder warnings (e.g. disconnected support)

    Index dim() const { return space->dim(); }
    Matrix operator()(double t) const;

    void validate() const;
};

/// Exponential weight for Davies perturbations: one value of psi per node,
/// with certified discrete gradient and second-difference bounds (both <= 1).
struct DaviesWeight {
    std::string id;
    RealVector psi;
    double lipschitz_certificate = 0.0;
    double second_diff_certificate = 0.0;

    void validate() const;
};

/// Lipschitz weight psi(x) = sign * x along 1D coordinates.
DaviesWeight coordinate_weight(const DiscreteSpace& space, double sign = 1.0,
                               std::string id = "coordinate");

/// Clipped distance weight psi(x) = min(dist(x, center), radius) for
/// coordinate spaces (1D) with unit-speed certificates.
DaviesWeight clipped_distance_weight(const DiscreteSpace& space, double center, double radius,
                                     std::string id = "clipped-distance");

/// Interval average (1/(b-a)) int_a^b A(r) dr. Exact for piecewise-constant
/// paths (split at breakpoints); adaptive quadrature to per-entry absolute
/// tolerance 1e-11 otherwise.
Matrix average_operator(const OperatorPath& path, double a, double b);

/// Sampled estimate of (M, alpha, omega); see FormConstants. omega carries a
/// 1% safety margin; alpha is floored at a tiny positive value when the path
/// is not V-coercive after the omega shift.
FormConstants estimate_form_constants(const OperatorPath& path, int samples);

/// Verifies declared or estimated constants on random vectors at fresh
/// sample times; returns the worst signed slack (>= 0 means all hold).
double verify_form_constants(const OperatorPath& path, const FormConstants& c, int vectors,
                             int times, std::uint64_t seed);

/// Scalar function of time with the interpolation rule of the path that
/// produced it. Integration is exact for piecewise-constant data and
/// composite-trapezoid otherwise.
struct Profile {
    std::vector<double> grid;    // strictly increasing
    std::vector<double> values;  // same length
    Regularity regularity = Regularity::Smooth;

    double operator()(double t) const;
    double integrate(double s, double t) const;

    static Profile constant(double value, double t0, double t1);
};

/// t -> largest eigenvalue of minus the Hermitian part of A(t) in the
/// weighted metric (the smallest admissible accretivity shift at each time).
Profile omega_profile(const OperatorPath& path, const std::vector<double>& grid);

/// Convenience grid: n uniform nodes on [0, horizon] merged with the path's
/// breakpoints.
std::vector<double> default_time_grid(const OperatorPath& path, int n);

/// Time-reversed weighted adjoint t -> A(T-t)^{*w}; an involution.
OperatorPath returned_adjoint(const OperatorPath& path);

/// t -> A(t) + omega I.
OperatorPath rescaled(const OperatorPath& path, double omega);

/// Similarity transform t -> M^{-1} A(t) M with M = diag(exp(-rho psi)).
OperatorPath davies_perturb(const OperatorPath& path, const DaviesWeight& psi, double rho);

/// Sampled-grid path from CSV rows (t, row-major matrix entries); each row
/// holds until the next sample time (half-open pieces).
OperatorPath load_path_csv(const std::string& filename, SpacePtr space, double horizon);

/// Piecewise-constant path from explicit pieces: values[k] on
/// [times[k], times[k+1]), times.front() = 0, times.back() = horizon.
OperatorPath piecewise_constant_path(SpacePtr space, std::vector<double> times,
                                     std::vector<Matrix> values);

/// Smooth path from a callable.
OperatorPath smooth_path(SpacePtr space, double horizon, std::function<Matrix(double)> fn);

}  // namespace evofam
