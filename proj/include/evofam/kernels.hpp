#pragma once

#include "evofam/properties.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace evofam {

/// Integral-kernel values of U(t,s): Gamma(t,s; x_i, y_j) = U_ij / w_j.
Matrix kernel_matrix(const Propagator& prop, double t, double s);

/// Free heat kernel on the integer lattice:
/// G(r; n1, n2) = (1/2pi) int_{-pi}^{pi} cos((n1-n2) q) exp(-2r(1-cos q)) dq,
/// by adaptive quadrature to absolute tolerance 1e-12.
double reference_kernel_Z(double r, long n1, long n2);

/// Nash / Gagliardo-Nirenberg constants of a discrete V space.
struct FunctionalConstants {
    double nash_C = 0.0;
    double nash_mu = 0.0;
    double gn_C = 0.0;
    double gn_N = 0.0;
};

struct InequalityEstimate {
    double C = 0.0;           // certified constant (inflated, validated)
    double searched_max = 0.0;  // best ratio found by the search
    long candidates = 0;
    long validation_vectors = 0;
};

/// Smallest C such that |u|_2^{2+4/mu} <= C |u|_V^2 |u|_1^{4/mu} over a
/// candidate search set (coordinates, random vectors, bump profiles,
/// projected-gradient ascent), inflated by 5% and certified against a fresh
/// validation set. Throws when the ratio is unbounded over the search set.
InequalityEstimate estimate_nash_constant(const DiscreteSpace& space, double mu,
                                          std::uint64_t seed = 2024);

/// Same machinery for |u|_q <= C |u|_2^{1-theta} |u|_V^theta with
/// theta = N (q-2) / (2 q); requires theta <= 1.
InequalityEstimate estimate_gn_constant(const DiscreteSpace& space, double q, double N,
                                        std::uint64_t seed = 2024);

/// (mu C_N / 4 alpha)^{mu/2} dt^{-mu/2} exp(max(omega, omega_tilde) dt).
double nash_ultracontractivity_bound(double alpha, double C_N, double mu, double omega,
                                     double omega_tilde, double dt);

struct GnBound {
    double value = 0.0;
    double omega_bar = 0.0;
};

/// C_G^{N/2} alpha^{-N^2/(4(N+2))} exp(omega_bar dt) dt^{-N^2/(2(N+2))} with
/// omega_bar = omega + a1 + a1* + 2(N+2)/N (a2 + a2*).
GnBound gn_ultracontractivity_bound(double alpha, double C_G, double N, double alpha1,
                                    double alpha2, double alpha1_star, double alpha2_star,
                                    double omega, double dt);

struct LadderConstants {
    double C = 0.0;
    double mu = 0.0;
};

/// Iteration-ladder constants for integer N >= 3: with R = N/(N-1),
/// p_k = 2 R^k, t_k = ((N+1)/(2N)) (2R)^{-k},
/// C = prod_k t_k^{-kappa1/(2 p_k)} and
/// mu = sum_k t_k ((p_k - 1)^2 + 2N/(N-2)) / p_k. The identities
/// sum t_k = 1 and sum 1/p_k = N/2 are verified internally to 1e-12.
LadderConstants ladder_constants(int N, double kappa1);

/// One cell of the Davies sweep: one exponential weight at one rho.
struct DaviesCell {
    std::string psi_id;
    double rho = 0.0;
    double omega_rho = 0.0;  // measured ellipticity shift of the perturbed path
    std::vector<double> dt;
    std::vector<double> norm_1_inf;  // sup over the (t,s) anchors at each dt
};

/// Fitted constants of the kernel bound
/// |Gamma(t,s;x,y)| <= c e^{omega (t-s)} (t-s)^{-n/2} e^{-b d(x,y)^2/(t-s)}
/// plus the sweep data that produced them. residual <= 0 means the bound
/// holds on every checked kernel sample.
struct KernelBoundFit {
    double c = 0.0;
    double n = 0.0;
    double omega = 0.0;       // fitted envelope rate omega_tilde
    std::optional<double> b;  // beta^2 / (4 omega); absent when rho_grid = {0}
    double beta = 1.0;
    double envelope_misfit = 0.0;    // least-squares misfit before c was inflated
    double envelope_residual = 0.0;  // log-domain residual of the rho-envelope fit (<= 0)
    double residual = std::numeric_limits<double>::quiet_NaN();  // pointwise kernel residual
    std::vector<double> rho_grid;
    std::vector<std::string> psi_family;
    std::string metric;  // which distance realizes d(x,y) on this model
    std::vector<DaviesCell> cells;
};

struct DaviesSweepOptions {
    std::vector<double> dt_grid;  // default: geometric {2^-8 .. 1} * horizon
    double beta = 1.0;
    std::optional<double> alpha_ref;  // ellipticity level for omega_rho (default: declared alpha)
    int refinements = 0;              // extra dyadic refinements of the assembly partition
    int ellipticity_samples = 9;
    std::string metric = "coordinate";
};

/// Assemble the perturbed propagator for every (psi, rho), measure the
/// 1->inf norms over the dt grid, fit the smallest quadratic-in-rho envelope
/// (bisection over omega with (c, n) refit), set b = beta^2/(4 omega), and
/// verify the pointwise kernel bound on the unperturbed kernel.
KernelBoundFit davies_sweep(const OperatorPath& path, const std::vector<DaviesWeight>& psi_family,
                            const std::vector<double>& rho_grid, DaviesSweepOptions options = {});

/// Entrywise comparison 0 <= Gamma(t,s) <= reference(t-s; n_i, n_j) on
/// integer-lattice models, over the dt grid.
PropertyReport verify_gaussian_domination(const Propagator& prop,
                                          const std::function<double(double, long, long)>& reference,
                                          const std::vector<double>& dt_grid);

/// CSV export of kernel values and a fitted bound (columns t,s,x,y,gamma,bound).
void export_kernel_csv(const std::string& filename, const Propagator& prop,
                       const std::vector<std::pair<double, double>>& pairs,
                       const KernelBoundFit* fit = nullptr);

}  // namespace evofam
