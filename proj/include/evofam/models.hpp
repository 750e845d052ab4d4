#pragma once

#include "evofam/forms.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace evofam {

/// Per-edge weight schedule t -> m(t, e).
struct EdgeSchedule {
    std::function<RealVector(double)> weights;
    Regularity regularity = Regularity::PiecewiseConstant;
    std::vector<double> breakpoints;

    static EdgeSchedule constant(RealVector m);
};

/// Oriented graph with a time-dependent edge-weight schedule. Each edge is a
/// (initial, terminal) node pair; the signed incidence matrix has -1 at the
/// initial and +1 at the terminal endpoint.
struct GraphModel {
    Index num_nodes = 0;
    std::vector<std::pair<Index, Index>> edges;
    EdgeSchedule schedule;
    std::vector<Index> dirichlet_nodes;
    int max_degree = 0;  // declared uniform local-finiteness bound
    double horizon = 1.0;
    std::optional<RealMatrix> coords;
    // When set, an edge whose weight drops below reference_weight keeps the
    // missing diagonal contribution at both endpoints: switching an edge off
    // acts as an absorbing (Dirichlet) cut instead of a free disconnection.
    bool absorbing_off_edges = false;
    double reference_weight = 1.0;

    RealMatrix incidence() const;
    void validate() const;
};

/// Path of weighted graph Laplacians L(t) = I M(t) I^T, with rows/columns of
/// Dirichlet nodes removed. Disconnected active edge sets are flagged on the
/// returned path, not rejected.
OperatorPath build_dynamic_graph(const GraphModel& model);

/// Heat-kernel pagerank generator A(t) = I - S(t) with S the column-stochastic
/// out-degree-normalized transition matrix; weighted column sums of A vanish
/// by construction. Throws on a dangling node (zero out-degree at some t).
OperatorPath build_pagerank(const GraphModel& model);

/// Path graph on n nodes (consecutive integer coordinates).
GraphModel make_path_graph(Index n, EdgeSchedule schedule, double horizon);

/// Lattice window {-radius..radius} with the two outermost nodes Dirichlet:
/// the restriction keeps full lattice degrees on every retained node.
GraphModel make_truncated_z_lattice(Index radius, EdgeSchedule schedule, double horizon);

/// Fully-connected directed cycle 0 -> 1 -> ... -> n-1 -> 0.
GraphModel make_directed_cycle(Index n, EdgeSchedule schedule, double horizon);

/// Scalar schedule with declared bounds (used for volatilities, conductances).
struct ScalarSchedule {
    std::function<double(double)> value;
    Regularity regularity = Regularity::Smooth;
    std::vector<double> breakpoints;
    double lo = 0.0;
    double hi = 0.0;

    static ScalarSchedule constant(double v);
    static ScalarSchedule piecewise(std::vector<double> times, std::vector<double> values);
};

/// Truncated Black-Scholes generator with time-dependent volatility on
/// [x_min, x_max] (Dirichlet at the artificial boundaries), P1 elements with
/// lumped reaction. Declared shift: sup_t (sigma(t)^2 - 3r/2)^+.
OperatorPath build_black_scholes(const ScalarSchedule& sigma, double rate, double x_min,
                                 double x_max, int cells, double horizon);

/// Metric graph: every edge is a unit interval carrying -d/dx(c d/dx) + p,
/// coupled through a trace subspace Y of the 2|E|-dimensional endpoint space
/// and a boundary operator Sigma(t) on Y.
struct MetricGraphModel {
    GraphModel graph;       // combinatorial layer (schedule unused)
    int points_per_edge = 16;  // subintervals per edge, >= 3
    std::function<double(double, Index, double)> conductance;  // (t, edge, x)
    double gamma = 1.0;                                        // declared lower bound
    std::function<double(double, Index, double)> potential;    // may be null (0)
    Matrix vertex_space_Y;                      // 2E x k basis, normalized internally
    std::function<Matrix(double)> sigma_schedule;  // k x k in Y coordinates; may be null
    Regularity regularity = Regularity::PiecewiseConstant;
    std::vector<double> breakpoints;
    double horizon = 1.0;
    bool y_generalized_ideal = false;  // declared, not auto-decided
    bool y_cv_invariant = false;       // declared, not auto-decided
};

/// Trace basis of vertex-wise constants (continuity/Kirchhoff conditions).
Matrix kirchhoff_vertex_basis(const GraphModel& graph);

/// P1 assembly; weights are the lumped element masses, v_metric the reduced
/// unit stiffness plus mass. Kirchhoff conditions emerge from the
/// unconstrained variational assembly.
OperatorPath build_metric_graph(const MetricGraphModel& model);

/// Single edge with free (Neumann) ends, conductance c(t), zero potential.
MetricGraphModel make_interval_model(int points, ScalarSchedule conductance, double horizon);

/// Equilateral star with continuity/Kirchhoff coupling at the center.
MetricGraphModel make_star_model(int edges, int points_per_edge, double horizon);

/// Single loop with trace space Y = span{(1,-1)} and Sigma = 0.
MetricGraphModel make_loop_model(int points, double horizon);

/// 1D second-order model with complex-capable coefficients on a truncated
/// interval; nu is the declared ellipticity of Re a11, c0 the declared sup
/// bound of all coefficients.
struct Elliptic1DModel {
    double x_min = 0.0;
    double x_max = 1.0;
    int cells = 64;
    enum class Boundary { Dirichlet, Neumann } boundary = Boundary::Neumann;
    std::function<Complex(double, double)> a11;  // (t, x)
    std::function<Complex(double, double)> b1;
    std::function<Complex(double, double)> c1;
    std::function<Complex(double, double)> a0;
    double nu = 1.0;
    double c0 = 1.0;
    Regularity regularity = Regularity::Smooth;
    std::vector<double> breakpoints;
    double horizon = 1.0;

    void validate() const;
};

OperatorPath build_elliptic_1d(const Elliptic1DModel& model);

/// Lp quasi-contraction rate from the model's coefficient sup norms, branch
/// p in [2, inf) or (1, 2]; p = 1 and p = inf are outside the formula.
double omega_p_bound(const Elliptic1DModel& model, double p);

struct LinearContractivityConstants {
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    double alpha1_star = 0.0;
    double alpha2_star = 0.0;
};

/// alpha1 = |(Re a0 - m)^-| + |b - c|^2 / nu, alpha2 = |Re c|^2 / nu,
/// alpha2* = |Re b|^2 / nu, alpha1* = alpha1 (m = 0 for real a11).
LinearContractivityConstants linear_contractivity_constants(const Elliptic1DModel& model);

/// Coefficient-level Davies perturbation (continuum formulas):
/// b -> b + rho a11 psi', c -> c - rho a11 psi',
/// a0 -> a0 - rho^2 a11 psi'^2 - rho psi' (b - c).
Elliptic1DModel perturbed_coefficients(const Elliptic1DModel& model,
                                       const std::function<double(double)>& psi_prime,
                                       double rho);

/// Element-level perturbed assembly with the exact discrete product rule:
/// agrees with davies_perturb(build_elliptic_1d(model), psi, rho) to roundoff
/// and with build_elliptic_1d(perturbed_coefficients(...)) to O((rho h)^2).
OperatorPath assemble_davies_elliptic_1d(const Elliptic1DModel& model, const DaviesWeight& psi,
                                         double rho);

/// Load a graph from an edge-list file (one edge per line: head tail
/// [schedule-id]); schedules resolved by the supplied table.
GraphModel load_edge_list(const std::string& filename,
                          const std::vector<ScalarSchedule>& schedules, double horizon);

}  // namespace evofam
