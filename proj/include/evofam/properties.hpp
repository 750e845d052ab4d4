#pragma once

#include "evofam/propagator.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace evofam {

enum class Verdict { Holds, Fails, NotApplicable };

std::string to_string(Verdict v);

/// Location of the worst violation (or the witness of a failed criterion).
struct Witness {
    double t = std::numeric_limits<double>::quiet_NaN();
    double s = std::numeric_limits<double>::quiet_NaN();
    Index i = -1;
    Index j = -1;
    std::string note;
};

/// Structured verdict of one property check.
///
/// `verdict` judges the conclusion measured on the assembled propagator;
/// `criterion_verdict`, when present, judges the pointwise condition on the
/// generators. The two are reported independently and never inferred from
/// one another. For quantitative bounds, margin = bound_requested -
/// bound_measured and is nonnegative whenever the verdict holds.
struct PropertyReport {
    std::string property_name;
    Verdict verdict = Verdict::NotApplicable;
    std::optional<Verdict> criterion_verdict;
    double bound_requested = std::numeric_limits<double>::quiet_NaN();
    double bound_measured = std::numeric_limits<double>::quiet_NaN();
    double margin = std::numeric_limits<double>::quiet_NaN();
    long samples_used = 0;
    std::uint64_t seed = 0;
    std::optional<Witness> witness;
    std::map<std::string, double> details;
    std::vector<std::string> notes;

    bool holds() const { return verdict == Verdict::Holds; }
};

/// Equilibrium structure of a path with constant one-dimensional kernel:
/// right kernel vector u, left kernel vector phi with (phi|u) = 1, rank-one
/// projector P = u (W phi)^H, and the spectral-gap profile on Ker(P).
struct EquilibriumData {
    Verdict applicability = Verdict::NotApplicable;
    std::string reason;
    int kernel_dimension = 0;
    Vector u;
    Vector phi;
    Matrix projector;
    Profile gap_profile;
};

/// Pairs (t, s) with s < t drawn from the propagator's partition points
/// (aligned evaluation reuses cached products), n values per axis.
std::vector<std::pair<double, double>> ts_grid(const Propagator& prop, int n);

// --- checks -----------------------------------------------------------------

/// |U(t,s)|_2 <= exp(int_s^t omega) on the grid.
PropertyReport check_quasi_contractivity(const Propagator& prop, const Profile& omega,
                                          const std::vector<std::pair<double, double>>& pairs,
                                          double tol = 1e-9);

/// Generator criterion: off-diagonal entries of Re A(t) <= 0 at sampled t.
PropertyReport criterion_positivity(const OperatorPath& path, int samples);

/// Conclusion: min entry of U(t,s) >= -1e-10 over the grid, plus the
/// generator criterion at `samples` times.
PropertyReport check_positivity(const Propagator& prop,
                                const std::vector<std::pair<double, double>>& pairs,
                                int samples = 33);

/// Weighted row/column-sum induced norms over the grid; completely
/// contractive when both stay <= 1 + 1e-10.
PropertyReport check_linf_l1_contractivity(const Propagator& prop,
                                           const std::vector<std::pair<double, double>>& pairs);

/// Criterion: weighted column sums of A(t) vanish; conclusion: U preserves
/// weighted totals and is positive.
PropertyReport check_stochastic(const Propagator& prop,
                                const std::vector<std::pair<double, double>>& pairs,
                                int samples = 33);

/// Monte-Carlo bound |U(t,s) f|_p <= exp(int_s^t omega_p) |f|_p on random
/// real and complex data.
PropertyReport check_lp_quasi_contractivity(const Propagator& prop, double p,
                                            const Profile& omega_p,
                                            const std::vector<std::pair<double, double>>& pairs,
                                            int n_samples, std::uint64_t seed);

/// Sweep of the previous check with omega_p = alpha1 + p * alpha2.
std::vector<PropertyReport> check_linear_quasi_contractivity(
    const Propagator& prop, double alpha1, double alpha2, const std::vector<double>& ps,
    const std::vector<std::pair<double, double>>& pairs, int n_samples, std::uint64_t seed);

/// Entrywise |U(t,s)_ij| <= V(t,s)_ij over the grid plus a random-vector
/// check; partitions must be aligned. When the dominated family lives on a
/// subspace (Dirichlet restriction), index_map sends its node indices into
/// the dominating space; without a map the spaces must have equal dimension.
PropertyReport check_domination(const Propagator& dominated, const Propagator& dominating,
                                const std::vector<std::pair<double, double>>& pairs,
                                int n_vectors = 100, std::uint64_t seed = 1,
                                const std::vector<Index>* index_map = nullptr);

/// Kernel vectors, projector and gap profile of the time-averaged operator;
/// applicability checks (one-dimensional kernel, kernel vectors constant in
/// t within 1e-8 rad) are recorded instead of thrown.
EquilibriumData equilibrium(const OperatorPath& path, int samples = 33);

/// |U(t, t0) - P|_2 <= exp(-int_{t0}^t gap) over the grid.
PropertyReport check_longtime(const Propagator& prop, const EquilibriumData& eq,
                              const std::vector<double>& t_grid, double tol = 1e-8);

/// Long-run average rate Omega of omega beyond t0 (requires >= 5
/// sign-consistent windows); fits the prefactor on the first half of the
/// grid and verifies on the rest.
PropertyReport check_uniform_exponential_stability(const Propagator& prop, const Profile& omega,
                                                   double t0);

}  // namespace evofam
