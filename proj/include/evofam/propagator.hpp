#pragma once

#include "evofam/forms.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

namespace evofam {

/// Strictly increasing time points spanning a subinterval of [0, T].
struct Partition {
    std::vector<double> points;

    double a() const { return points.front(); }
    double b() const { return points.back(); }
    std::size_t segments() const { return points.size() - 1; }
    double mesh() const;

    void validate() const;

    static Partition uniform(double a, double b, std::size_t segments);
    /// Endpoints plus every path breakpoint inside (a, b); falls back to
    /// `fallback_segments` uniform pieces when there are no interior nodes.
    static Partition from_breakpoints(const OperatorPath& path, double a, double b,
                                      std::size_t fallback_segments = 4);
    /// Insert the midpoint of every gap.
    Partition refined() const;
    /// Merge extra nodes (deduplicated) into the partition.
    Partition merged_with(const std::vector<double>& extra) const;
};

/// Cached product-integral evolution family U(t, s) over one partition:
/// interval averages A_k of the path on each segment and their semigroup
/// factors exp(-(lambda_{k+1}-lambda_k) A_k), composed in descending time
/// order. A finished Propagator is immutable and safe to share across
/// threads; evaluate() is concurrent-safe (the product cache is internally
/// synchronized).
class Propagator {
public:
    Propagator(OperatorPath path, Partition partition);

    const OperatorPath& path() const { return path_; }
    const Partition& partition() const { return partition_; }
    const DiscreteSpace& space() const { return *path_.space; }
    const std::vector<Matrix>& segment_averages() const { return averages_; }
    const std::vector<Matrix>& segment_exponentials() const { return exponentials_; }

    /// U(t, s) for a() <= s <= t <= b(); off-partition endpoints are handled
    /// with partial first/last factors.
    Matrix evaluate(double t, double s) const;

    /// Evolution family properties and diagnostics.
    bool converged() const { return converged_; }
    double tolerance() const { return tolerance_; }
    const std::vector<std::pair<double, double>>& refinement_history() const {
        return refinement_history_;
    }

    /// Export: partition.csv plus one matrix file per (t, s) pair under `dir`.
    void export_csv(const std::string& dir,
                    const std::vector<std::pair<double, double>>& pairs) const;

private:
    friend Propagator propagate_to_tolerance(const OperatorPath&, double, double, double);

    std::size_t segment_of(double t) const;
    Matrix product(std::size_t i, std::size_t j) const;  // E_{j-1} ... E_i

    OperatorPath path_;
    Partition partition_;
    std::vector<Matrix> averages_;
    std::vector<Matrix> exponentials_;
    std::vector<std::pair<double, double>> refinement_history_;
    bool converged_ = false;
    double tolerance_ = 0.0;

    struct ProductCache {
        std::mutex mutex;
        std::map<std::pair<std::size_t, std::size_t>, Matrix> products;
    };
    mutable std::unique_ptr<ProductCache> cache_;
};

/// Assemble U over the given partition (averages and exponentials; the
/// per-segment exponentials are computed in parallel).
Propagator assemble(const OperatorPath& path, Partition partition);

/// Dyadically refine from the path's breakpoints (or 4 uniform segments)
/// until two consecutive refinements change U(t,s) by at most tol in the
/// weighted spectral norm. Throws NumericalError with the recorded history
/// when 2^16 segments are reached without convergence.
Propagator propagate_to_tolerance(const OperatorPath& path, double s, double t, double tol);

/// Independent reference: integrates U' = -A(t) U, U(s) = I with an adaptive
/// embedded Runge-Kutta pair (Dormand-Prince 5(4)); path breakpoints are
/// mandatory step boundaries. Deliberately shares no code with the
/// product-integral route.
Matrix ode_oracle(const OperatorPath& path, double s, double t, double tol);

}  // namespace evofam
