#include "evofam/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace evofam {

// ---------------------------------------------------------------------------
// schedules

EdgeSchedule EdgeSchedule::constant(RealVector m) {
    EdgeSchedule s;
    auto shared = std::make_shared<RealVector>(std::move(m));
    s.weights = [shared](double) { return *shared; };
    s.regularity = Regularity::PiecewiseConstant;
    return s;
}

ScalarSchedule ScalarSchedule::constant(double v) {
    ScalarSchedule s;
    s.value = [v](double) { return v; };
    s.regularity = Regularity::PiecewiseConstant;
    s.lo = s.hi = v;
    return s;
}

ScalarSchedule ScalarSchedule::piecewise(std::vector<double> times, std::vector<double> values) {
    if (times.size() != values.size() + 1)
        throw ValidationError("ScalarSchedule::piecewise: need one more time than value");
    ScalarSchedule s;
    s.lo = *std::min_element(values.begin(), values.end());
    s.hi = *std::max_element(values.begin(), values.end());
    s.breakpoints.assign(times.begin() + 1, times.end() - 1);
    auto ts = std::make_shared<std::vector<double>>(std::move(times));
    auto vs = std::make_shared<std::vector<double>>(std::move(values));
    s.value = [ts, vs](double t) {
        auto it = std::upper_bound(ts->begin(), ts->end(), t);
        std::size_t k = it == ts->begin() ? 0 : static_cast<std::size_t>(it - ts->begin()) - 1;
        if (k >= vs->size()) k = vs->size() - 1;
        return (*vs)[k];
    };
    s.regularity = Regularity::PiecewiseConstant;
    return s;
}

// ---------------------------------------------------------------------------
// graphs

RealMatrix GraphModel::incidence() const {
    RealMatrix inc = RealMatrix::Zero(num_nodes, static_cast<Index>(edges.size()));
    for (std::size_t e = 0; e < edges.size(); ++e) {
        inc(edges[e].first, static_cast<Index>(e)) = -1.0;
        inc(edges[e].second, static_cast<Index>(e)) = 1.0;
    }
    return inc;
}

void GraphModel::validate() const {
    if (num_nodes <= 0) throw ValidationError("GraphModel: need at least one node");
    std::vector<int> degree(num_nodes, 0);
    for (const auto& [a, b] : edges) {
        if (a < 0 || a >= num_nodes || b < 0 || b >= num_nodes)
            throw ValidationError("GraphModel: edge endpoint out of range");
        if (a == b) throw ValidationError("GraphModel: self-loops are not allowed");
        degree[a]++;
        degree[b]++;
    }
    const int max_deg = degree.empty() ? 0 : *std::max_element(degree.begin(), degree.end());
    if (max_degree > 0 && max_deg > max_degree) {
        std::ostringstream os;
        os << "GraphModel: node degree " << max_deg << " exceeds the declared bound " << max_degree;
        throw ValidationError(os.str());
    }
    for (Index v : dirichlet_nodes)
        if (v < 0 || v >= num_nodes) throw ValidationError("GraphModel: Dirichlet node out of range");
    if (!schedule.weights) throw ValidationError("GraphModel: missing weight schedule");
}

namespace {

std::vector<double> schedule_samples(double horizon, const std::vector<double>& breakpoints,
                                     int n) {
    std::vector<double> ts;
    for (int k = 0; k < n; ++k) ts.push_back(horizon * (k + 0.5) / n);
    for (double b : breakpoints)
        if (b < horizon) ts.push_back(b + 1e-9 * horizon);
    return ts;
}

// connected components of the active edge set, restricted to kept nodes
int active_components(const GraphModel& model, const RealVector& m,
                      const std::vector<Index>& keep) {
    std::vector<Index> parent(model.num_nodes);
    std::iota(parent.begin(), parent.end(), Index{0});
    std::function<Index(Index)> find = [&](Index x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t e = 0; e < model.edges.size(); ++e) {
        if (m[static_cast<Index>(e)] == 0.0) continue;
        const Index a = find(model.edges[e].first), b = find(model.edges[e].second);
        if (a != b) parent[a] = b;
    }
    std::set<Index> roots;
    for (Index v : keep) roots.insert(find(v));
    return static_cast<int>(roots.size());
}

}  // namespace

OperatorPath build_dynamic_graph(const GraphModel& model) {
    model.validate();
    std::vector<Index> keep;
    {
        std::set<Index> drop(model.dirichlet_nodes.begin(), model.dirichlet_nodes.end());
        for (Index v = 0; v < model.num_nodes; ++v)
            if (!drop.count(v)) keep.push_back(v);
    }
    if (keep.empty()) throw ValidationError("build_dynamic_graph: all nodes are Dirichlet");

    const RealMatrix inc_full = model.incidence();
    RealMatrix inc(static_cast<Index>(keep.size()), inc_full.cols());
    for (std::size_t r = 0; r < keep.size(); ++r) inc.row(static_cast<Index>(r)) = inc_full.row(keep[r]);

    DiscreteSpace raw = DiscreteSpace::counting(static_cast<Index>(keep.size()));
    if (model.coords) {
        RealMatrix coords(static_cast<Index>(keep.size()), model.coords->cols());
        for (std::size_t r = 0; r < keep.size(); ++r)
            coords.row(static_cast<Index>(r)) = model.coords->row(keep[r]);
        raw.coords = coords;
    }
    auto space = make_space(std::move(raw));

    OperatorPath path;
    path.space = space;
    path.horizon = model.horizon;
    path.regularity = model.schedule.regularity;
    path.breakpoints = model.schedule.breakpoints;
    const auto schedule = model.schedule.weights;
    const auto inc_shared = std::make_shared<RealMatrix>(std::move(inc));
    const bool absorbing = model.absorbing_off_edges;
    const double ref_w = model.reference_weight;
    path.evaluate = [inc_shared, schedule, absorbing, ref_w](double t) -> Matrix {
        const RealVector m = schedule(t);
        if (m.size() != inc_shared->cols())
            throw DimensionError("build_dynamic_graph: schedule returned wrong edge count");
        RealMatrix L = (*inc_shared) * m.asDiagonal() * inc_shared->transpose();
        if (absorbing) {
            const RealVector ghost = (ref_w - m.array()).max(0.0).matrix();
            L += RealMatrix((inc_shared->cwiseAbs2() * ghost).asDiagonal());
        }
        return L.cast<Complex>();
    };
    path.validate();

    // PSD Laplacian: contraction family; declared constants on V = H
    path.declared_constants = FormConstants{0.0, 0.0, 0.0, true};
    double sup_norm = 0.0;
    bool disconnected = false;
    for (double t : schedule_samples(model.horizon, model.schedule.breakpoints, 9)) {
        const RealVector m = schedule(t);
        sup_norm = std::max(sup_norm, spectral_norm_flat(path(t)));
        if (active_components(model, m, keep) > 1) disconnected = true;
    }
    path.declared_constants->M = std::max(1e-12, 1.05 * sup_norm);
    path.declared_constants->alpha = 1e-12 * path.declared_constants->M;
    if (disconnected) path.flags.push_back("disconnected-support");
    return path;
}

OperatorPath build_pagerank(const GraphModel& model) {
    model.validate();
    if (!model.dirichlet_nodes.empty())
        throw ValidationError("build_pagerank: Dirichlet nodes are not meaningful here");
    const Index n = model.num_nodes;

    // every node must have out-weight at every sampled time
    for (double t : schedule_samples(model.horizon, model.schedule.breakpoints, 33)) {
        const RealVector m = model.schedule.weights(t);
        RealVector deg = RealVector::Zero(n);
        for (std::size_t e = 0; e < model.edges.size(); ++e) {
            if (m[static_cast<Index>(e)] < 0.0)
                throw ValidationError("build_pagerank: negative edge weight");
            deg[model.edges[e].first] += m[static_cast<Index>(e)];
        }
        for (Index v = 0; v < n; ++v)
            if (!(deg[v] > 0.0)) {
                std::ostringstream os;
                os << "build_pagerank: node " << v << " has zero out-degree at t = " << t;
                throw ValidationError(os.str());
            }
    }

    auto space = make_space(DiscreteSpace::counting(n));
    OperatorPath path;
    path.space = space;
    path.horizon = model.horizon;
    path.regularity = model.schedule.regularity;
    path.breakpoints = model.schedule.breakpoints;
    const auto edges = std::make_shared<std::vector<std::pair<Index, Index>>>(model.edges);
    const auto schedule = model.schedule.weights;
    path.evaluate = [edges, schedule, n](double t) -> Matrix {
        const RealVector m = schedule(t);
        RealVector deg = RealVector::Zero(n);
        for (std::size_t e = 0; e < edges->size(); ++e) deg[(*edges)[e].first] += m[static_cast<Index>(e)];
        RealMatrix S = RealMatrix::Zero(n, n);
        for (std::size_t e = 0; e < edges->size(); ++e) {
            const auto [v, w] = (*edges)[e];
            S(w, v) += m[static_cast<Index>(e)] / deg[v];
        }
        RealMatrix A = RealMatrix::Zero(n, n);
        for (Index v = 0; v < n; ++v) {
            double diag = 0.0;
            for (Index w = 0; w < n; ++w) {
                if (w == v) continue;
                A(w, v) = -S(w, v);
                diag += S(w, v);  // same summands, same order: columns sum to zero exactly
            }
            A(v, v) = diag;
        }
        return A.cast<Complex>();
    };
    path.validate();
    return path;
}

GraphModel make_path_graph(Index n, EdgeSchedule schedule, double horizon) {
    GraphModel g;
    g.num_nodes = n;
    for (Index i = 0; i + 1 < n; ++i) g.edges.emplace_back(i, i + 1);
    g.schedule = std::move(schedule);
    g.max_degree = 2;
    g.horizon = horizon;
    RealMatrix coords(n, 1);
    for (Index i = 0; i < n; ++i) coords(i, 0) = static_cast<double>(i);
    g.coords = coords;
    return g;
}

GraphModel make_truncated_z_lattice(Index radius, EdgeSchedule schedule, double horizon) {
    const Index n = 2 * radius + 3;  // window plus one Dirichlet node on each side
    GraphModel g = make_path_graph(n, std::move(schedule), horizon);
    g.dirichlet_nodes = {0, n - 1};
    RealMatrix coords(n, 1);
    for (Index i = 0; i < n; ++i) coords(i, 0) = static_cast<double>(i - radius - 1);
    g.coords = coords;
    return g;
}

GraphModel make_directed_cycle(Index n, EdgeSchedule schedule, double horizon) {
    GraphModel g;
    g.num_nodes = n;
    for (Index i = 0; i < n; ++i) g.edges.emplace_back(i, (i + 1) % n);
    g.schedule = std::move(schedule);
    g.max_degree = 2;
    g.horizon = horizon;
    return g;
}

// ---------------------------------------------------------------------------
// Black-Scholes

OperatorPath build_black_scholes(const ScalarSchedule& sigma, double rate, double x_min,
                                 double x_max, int cells, double horizon) {
    if (!(0.0 < x_min && x_min < x_max))
        throw ValidationError("build_black_scholes: need 0 < x_min < x_max");
    if (cells < 4) throw ValidationError("build_black_scholes: need at least 4 cells");
    if (!(sigma.lo > 0.0) || sigma.lo > sigma.hi)
        throw ValidationError("build_black_scholes: need 0 < sigma_lo <= sigma_hi");
    for (double t : schedule_samples(horizon, sigma.breakpoints, 33)) {
        const double s = sigma.value(t);
        if (!(s >= sigma.lo - 1e-12) || !(s <= sigma.hi + 1e-12)) {
            std::ostringstream os;
            os << "build_black_scholes: sigma(" << t << ") = " << s
               << " violates the declared bounds [" << sigma.lo << ", " << sigma.hi << "]";
            throw ValidationError(os.str());
        }
    }

    const Index n_nodes = cells + 1;
    const double h = (x_max - x_min) / cells;
    RealVector x(n_nodes);
    for (Index i = 0; i < n_nodes; ++i) x[i] = x_min + h * i;

    // Dirichlet at both artificial boundaries: interior nodes only
    const Index dim = n_nodes - 2;
    RealVector w = RealVector::Constant(dim, h);

    // time-independent pieces: x^2-weighted stiffness, x-weighted drift
    RealMatrix stiff2 = RealMatrix::Zero(dim, dim);
    RealMatrix drift = RealMatrix::Zero(dim, dim);
    auto interior = [dim](Index node) { return node >= 1 && node <= dim; };
    for (Index e = 0; e < cells; ++e) {
        const double xa = x[e], xb = x[e + 1];
        const double int_x2 = (xb * xb * xb - xa * xa * xa) / 3.0;
        // element contributions for nodes (e, e+1); interior offsets are node-1
        const Index nd[2] = {e, e + 1};
        const double s_loc[2][2] = {{int_x2 / (h * h), -int_x2 / (h * h)},
                                    {-int_x2 / (h * h), int_x2 / (h * h)}};
        // int_e x phi_i dx for the two hat functions
        const double ia = (xb * xb * xb / 6.0 - xa * xa * xb / 2.0 + xa * xa * xa / 3.0) / h;
        const double ib = (xb * xb * xb / 3.0 - xa * xb * xb / 2.0 + xa * xa * xa / 6.0) / h;
        const double m_loc[2] = {ia, ib};  // int x phi over the element
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) {
                if (!interior(nd[r]) || !interior(nd[c])) continue;
                stiff2(nd[r] - 1, nd[c] - 1) += s_loc[r][c];
                // drift: coefficient of u' = (u_b - u_a)/h against int x phi_r
                drift(nd[r] - 1, nd[c] - 1) += m_loc[r] * (c == 1 ? 1.0 : -1.0) / h;
            }
    }

    DiscreteSpace raw = DiscreteSpace::weighted(w);
    RealMatrix coords(dim, 1);
    for (Index i = 0; i < dim; ++i) coords(i, 0) = x[i + 1];
    raw.coords = coords;
    Matrix v_metric = stiff2.cast<Complex>();
    v_metric += w.cast<Complex>().asDiagonal();
    raw.v_metric = 0.5 * (v_metric + v_metric.adjoint());
    auto space = make_space(std::move(raw));

    OperatorPath path;
    path.space = space;
    path.horizon = horizon;
    path.regularity = sigma.regularity;
    path.breakpoints = sigma.breakpoints;
    auto stiff_ptr = std::make_shared<RealMatrix>(std::move(stiff2));
    auto drift_ptr = std::make_shared<RealMatrix>(std::move(drift));
    auto w_ptr = std::make_shared<RealVector>(w);
    const auto sig = sigma.value;
    path.evaluate = [stiff_ptr, drift_ptr, w_ptr, sig, rate](double t) -> Matrix {
        const double s2 = sig(t) * sig(t);
        RealMatrix K = 0.5 * s2 * (*stiff_ptr) + (s2 - rate) * (*drift_ptr);
        K += (rate * w_ptr->array()).matrix().asDiagonal();  // lumped reaction
        // generator = W^{-1} K on the lumped space
        return (w_ptr->cwiseInverse().asDiagonal() * K).cast<Complex>();
    };
    path.validate();

    const double lo2 = sigma.lo * sigma.lo, hi2 = sigma.hi * sigma.hi;
    FormConstants c;
    c.alpha = 0.5 * lo2;
    c.omega = std::max(0.0, hi2 - 1.5 * rate);
    c.M = 0.5 * hi2 + std::max(std::abs(lo2 - rate), std::abs(hi2 - rate)) + std::abs(rate);
    c.v_fallback_to_h = false;
    path.declared_constants = c;
    return path;
}

// ---------------------------------------------------------------------------
// metric graphs

Matrix kirchhoff_vertex_basis(const GraphModel& graph) {
    const Index E = static_cast<Index>(graph.edges.size());
    Matrix B = Matrix::Zero(2 * E, graph.num_nodes);
    for (Index e = 0; e < E; ++e) {
        B(e, graph.edges[e].first) = 1.0;       // u_e(0) sits at the initial vertex
        B(E + e, graph.edges[e].second) = 1.0;  // u_e(1) at the terminal vertex
    }
    return B;
}

namespace {

// normalize the trace basis so each column has a pivot slot with entry 1 and
// the columns represent nodal trace values directly
Matrix normalize_trace_basis(Matrix B) {
    const Index rows = B.rows(), cols = B.cols();
    std::vector<bool> used(rows, false);
    for (Index j = 0; j < cols; ++j) {
        Index pivot = -1;
        double best = 0.0;
        for (Index r = 0; r < rows; ++r) {
            if (used[r]) continue;
            if (std::abs(B(r, j)) > best) {
                best = std::abs(B(r, j));
                pivot = r;
            }
        }
        if (pivot < 0 || best < 1e-12)
            throw ValidationError("build_metric_graph: Y basis is rank-deficient");
        used[pivot] = true;
        B.col(j) /= B(pivot, j);
        for (Index k = 0; k < cols; ++k) {
            if (k == j) continue;
            B.col(k) -= B(pivot, k) * B.col(j);
        }
    }
    return B;
}

}  // namespace

OperatorPath build_metric_graph(const MetricGraphModel& model) {
    model.graph.validate();
    if (model.points_per_edge < 3)
        throw ValidationError("build_metric_graph: need points_per_edge >= 3");
    if (!(model.gamma > 0.0)) throw ValidationError("build_metric_graph: need gamma > 0");
    const Index E = static_cast<Index>(model.graph.edges.size());
    const Index m = model.points_per_edge;
    const double h = 1.0 / m;
    const Index full = E * (m + 1);

    const Matrix B = normalize_trace_basis(model.vertex_space_Y);
    if (B.rows() != 2 * E)
        throw DimensionError("build_metric_graph: Y basis must have 2|E| rows");
    const Index kY = B.cols();

    // reduced dofs: interior nodes of every edge, then Y coordinates
    const Index n_int = E * (m - 1);
    const Index dim = n_int + kY;
    auto full_node = [m](Index e, Index k) { return e * (m + 1) + k; };

    RealMatrix C = RealMatrix::Zero(full, dim);
    {
        Index col = 0;
        for (Index e = 0; e < E; ++e)
            for (Index k = 1; k < m; ++k) C(full_node(e, k), col++) = 1.0;
        for (Index j = 0; j < kY; ++j)
            for (Index e = 0; e < E; ++e) {
                C(full_node(e, 0), n_int + j) = B(e, j).real();
                C(full_node(e, m), n_int + j) = B(E + e, j).real();
            }
        if (B.imag().cwiseAbs().maxCoeff() > 1e-12)
            throw ValidationError("build_metric_graph: complex Y bases are not supported");
    }

    // lumped full mass: h/2 at edge ends, h inside
    RealVector w_full = RealVector::Constant(full, h);
    for (Index e = 0; e < E; ++e) {
        w_full[full_node(e, 0)] = 0.5 * h;
        w_full[full_node(e, m)] = 0.5 * h;
    }
    const RealMatrix Wred_full = C.transpose() * w_full.asDiagonal() * C;
    RealVector w_red = Wred_full.diagonal();
    std::vector<std::string> flags;
    if ((Wred_full - RealMatrix(w_red.asDiagonal())).cwiseAbs().maxCoeff() > 1e-12)
        flags.push_back("lumped-trace-mass");

    // unit-conductance stiffness, reduced (time-independent; also the V metric)
    RealMatrix stiff1 = RealMatrix::Zero(full, full);
    for (Index e = 0; e < E; ++e)
        for (Index k = 0; k < m; ++k) {
            const Index a = full_node(e, k), b = full_node(e, k + 1);
            stiff1(a, a) += 1.0 / h;
            stiff1(b, b) += 1.0 / h;
            stiff1(a, b) -= 1.0 / h;
            stiff1(b, a) -= 1.0 / h;
        }
    const RealMatrix stiff1_red = C.transpose() * stiff1 * C;

    DiscreteSpace raw = DiscreteSpace::weighted(w_red);
    Matrix v = stiff1_red.cast<Complex>();
    v += w_red.cast<Complex>().asDiagonal();
    raw.v_metric = 0.5 * (v + v.adjoint());
    if (E == 1) {  // a single edge has a canonical arclength coordinate
        RealMatrix coords(dim, 1);
        Index col = 0;
        for (Index k = 1; k < m; ++k) coords(col++, 0) = h * k;
        for (Index j = 0; j < kY; ++j) coords(n_int + j, 0) = B(0, j).real() != 0.0 ? 0.0 : 1.0;
        raw.coords = coords;
    }
    auto space = make_space(std::move(raw));

    OperatorPath path;
    path.space = space;
    path.horizon = model.horizon;
    path.regularity = model.regularity;
    path.breakpoints = model.breakpoints;
    path.flags = flags;
    if (model.y_generalized_ideal) path.flags.push_back("declared-generalized-ideal");
    if (model.y_cv_invariant) path.flags.push_back("declared-cv-invariant");

    const auto conductance = model.conductance;
    const auto potential = model.potential;
    const auto sigma = model.sigma_schedule;
    auto C_ptr = std::make_shared<RealMatrix>(std::move(C));
    auto w_ptr = std::make_shared<RealVector>(w_red);
    path.evaluate = [=, gamma = model.gamma](double t) -> Matrix {
        RealMatrix K = RealMatrix::Zero(full, full);
        for (Index e = 0; e < E; ++e)
            for (Index k = 0; k < m; ++k) {
                const double xm = h * (k + 0.5);
                const double c = conductance ? conductance(t, e, xm) : 1.0;
                if (!(c >= gamma - 1e-12)) {
                    std::ostringstream os;
                    os << "build_metric_graph: conductance " << c << " below gamma = " << gamma
                       << " at t = " << t;
                    throw ValidationError(os.str());
                }
                const Index a = full_node(e, k), b = full_node(e, k + 1);
                K(a, a) += c / h;
                K(b, b) += c / h;
                K(a, b) -= c / h;
                K(b, a) -= c / h;
                if (potential) {  // lumped zeroth-order term
                    K(a, a) += potential(t, e, h * k) * 0.5 * h;
                    K(b, b) += potential(t, e, h * (k + 1)) * 0.5 * h;
                }
            }
        Matrix K_red = (C_ptr->transpose() * K * (*C_ptr)).cast<Complex>();
        if (sigma) {
            const Matrix S = sigma(t);
            if (S.rows() != kY || S.cols() != kY)
                throw DimensionError("build_metric_graph: Sigma(t) has the wrong size");
            K_red.block(n_int, n_int, kY, kY) += S;
        }
        return w_ptr->cwiseInverse().cast<Complex>().asDiagonal() * K_red;
    };
    path.validate();

    if (!model.potential && !model.sigma_schedule) {
        // Re a + (gamma/2)|u|^2 >= (gamma/2)|u|_V^2 since c >= gamma
        FormConstants c;
        c.alpha = 0.5 * model.gamma;
        c.omega = 0.5 * model.gamma;
        double sup = 0.0;
        for (double t : schedule_samples(model.horizon, model.breakpoints, 5))
            sup = std::max(sup, spectral_norm_weighted(*space, path(t)));
        c.M = std::max(1.05 * sup, c.alpha);
        path.declared_constants = c;
    }
    return path;
}

MetricGraphModel make_interval_model(int points, ScalarSchedule conductance, double horizon) {
    MetricGraphModel mg;
    mg.graph.num_nodes = 2;
    mg.graph.edges = {{0, 1}};
    mg.graph.schedule = EdgeSchedule::constant(RealVector::Ones(1));
    mg.graph.max_degree = 1;
    mg.graph.horizon = horizon;
    mg.points_per_edge = points;
    if (!(conductance.lo > 0.0))
        throw ValidationError("make_interval_model: conductance must be bounded below");
    mg.gamma = conductance.lo;
    const auto c = conductance.value;
    mg.conductance = [c](double t, Index, double) { return c(t); };
    mg.vertex_space_Y = Matrix::Identity(2, 2);  // free ends
    mg.regularity = conductance.regularity;
    mg.breakpoints = conductance.breakpoints;
    mg.horizon = horizon;
    mg.y_generalized_ideal = true;
    mg.y_cv_invariant = true;
    return mg;
}

MetricGraphModel make_star_model(int edges, int points_per_edge, double horizon) {
    MetricGraphModel mg;
    mg.graph.num_nodes = edges + 1;  // center is node 0
    for (Index e = 0; e < edges; ++e) mg.graph.edges.emplace_back(0, e + 1);
    mg.graph.schedule = EdgeSchedule::constant(RealVector::Ones(edges));
    mg.graph.max_degree = edges;
    mg.graph.horizon = horizon;
    mg.points_per_edge = points_per_edge;
    mg.gamma = 1.0;
    mg.conductance = [](double, Index, double) { return 1.0; };
    mg.vertex_space_Y = kirchhoff_vertex_basis(mg.graph);
    mg.horizon = horizon;
    mg.y_generalized_ideal = true;
    mg.y_cv_invariant = true;
    return mg;
}

MetricGraphModel make_loop_model(int points, double horizon) {
    MetricGraphModel mg;
    mg.graph.num_nodes = 2;
    mg.graph.edges = {{0, 1}};
    mg.graph.schedule = EdgeSchedule::constant(RealVector::Ones(1));
    mg.graph.max_degree = 1;
    mg.graph.horizon = horizon;
    mg.points_per_edge = points;
    mg.gamma = 1.0;
    mg.conductance = [](double, Index, double) { return 1.0; };
    Matrix y(2, 1);
    y << 1.0, -1.0;  // u(1) = -u(0)
    mg.vertex_space_Y = y;
    mg.horizon = horizon;
    mg.y_cv_invariant = true;  // (1,-1) entrywise c_V-multiples stay in Y
    return mg;
}

// ---------------------------------------------------------------------------
// 1D elliptic models

void Elliptic1DModel::validate() const {
    if (!(x_min < x_max)) throw ValidationError("Elliptic1DModel: need x_min < x_max");
    if (cells < 4) throw ValidationError("Elliptic1DModel: need at least 4 cells");
    if (!(nu > 0.0)) throw ValidationError("Elliptic1DModel: need nu > 0");
    if (!a11) throw ValidationError("Elliptic1DModel: missing a11");
    if (!(horizon > 0.0)) throw ValidationError("Elliptic1DModel: need a positive horizon");
}

namespace {

Complex eval_or_zero(const std::function<Complex(double, double)>& f, double t, double x) {
    return f ? f(t, x) : Complex(0.0, 0.0);
}

struct CoefficientSups {
    double re_a0_minus_m_neg = 0.0;  // sup (Re a0 - m)^-
    double b_minus_c = 0.0;          // sup |b - c|
    double re_b = 0.0;
    double re_c = 0.0;
};

CoefficientSups coefficient_sups(const Elliptic1DModel& mod) {
    CoefficientSups s;
    const int nt = 17, nx = 129;
    std::vector<double> ts = schedule_samples(mod.horizon, mod.breakpoints, nt);
    for (double t : ts)
        for (int i = 0; i <= nx; ++i) {
            const double x = mod.x_min + (mod.x_max - mod.x_min) * i / nx;
            const Complex a = mod.a11(t, x);
            if (std::abs(a.imag()) > 1e-12)
                throw ValidationError(
                    "elliptic 1d: complex a11 requires first-derivative bounds that are not "
                    "supplied; use a real a11");
            if (!(a.real() >= mod.nu - 1e-12)) {
                std::ostringstream os;
                os << "elliptic 1d: Re a11(" << t << ", " << x << ") = " << a.real()
                   << " violates the declared ellipticity nu = " << mod.nu;
                throw ValidationError(os.str());
            }
            const Complex b = eval_or_zero(mod.b1, t, x);
            const Complex c = eval_or_zero(mod.c1, t, x);
            const Complex a0 = eval_or_zero(mod.a0, t, x);
            const double m = (c.imag() - b.imag()) / (4.0 * mod.nu);
            s.re_a0_minus_m_neg = std::max(s.re_a0_minus_m_neg, -(a0.real() - m));
            s.b_minus_c = std::max(s.b_minus_c, std::abs(b - c));
            s.re_b = std::max(s.re_b, std::abs(b.real()));
            s.re_c = std::max(s.re_c, std::abs(c.real()));
        }
    s.re_a0_minus_m_neg = std::max(0.0, s.re_a0_minus_m_neg);
    return s;
}

}  // namespace

OperatorPath build_elliptic_1d(const Elliptic1DModel& model) {
    model.validate();
    const Index n_nodes = model.cells + 1;
    const double h = (model.x_max - model.x_min) / model.cells;
    const bool dirichlet = model.boundary == Elliptic1DModel::Boundary::Dirichlet;
    const Index lo = dirichlet ? 1 : 0;
    const Index hi = dirichlet ? n_nodes - 2 : n_nodes - 1;
    const Index dim = hi - lo + 1;

    RealVector x(n_nodes);
    for (Index i = 0; i < n_nodes; ++i) x[i] = model.x_min + h * i;
    RealVector w(dim);
    for (Index i = 0; i < dim; ++i) {
        const Index node = lo + i;
        w[i] = (node == 0 || node == n_nodes - 1) ? 0.5 * h : h;
    }

    // reduced unit stiffness for the V metric
    RealMatrix stiff1 = RealMatrix::Zero(dim, dim);
    for (Index e = 0; e < model.cells; ++e) {
        const Index a = e, b = e + 1;
        auto red = [lo, hi](Index node) -> Index {
            return (node >= lo && node <= hi) ? node - lo : -1;
        };
        const Index ra = red(a), rb = red(b);
        if (ra >= 0) stiff1(ra, ra) += 1.0 / h;
        if (rb >= 0) stiff1(rb, rb) += 1.0 / h;
        if (ra >= 0 && rb >= 0) {
            stiff1(ra, rb) -= 1.0 / h;
            stiff1(rb, ra) -= 1.0 / h;
        }
    }

    DiscreteSpace raw = DiscreteSpace::weighted(w);
    RealMatrix coords(dim, 1);
    for (Index i = 0; i < dim; ++i) coords(i, 0) = x[lo + i];
    raw.coords = coords;
    Matrix v = stiff1.cast<Complex>();
    v += w.cast<Complex>().asDiagonal();
    raw.v_metric = 0.5 * (v + v.adjoint());
    auto space = make_space(std::move(raw));

    OperatorPath path;
    path.space = space;
    path.horizon = model.horizon;
    path.regularity = model.regularity;
    path.breakpoints = model.breakpoints;
    const auto mod = std::make_shared<Elliptic1DModel>(model);
    auto x_ptr = std::make_shared<RealVector>(std::move(x));
    auto w_ptr = std::make_shared<RealVector>(w);
    path.evaluate = [mod, x_ptr, w_ptr, h, lo, hi, dim](double t) -> Matrix {
        Matrix K = Matrix::Zero(dim, dim);
        auto red = [lo, hi](Index node) -> Index {
            return (node >= lo && node <= hi) ? node - lo : -1;
        };
        const Index cells = static_cast<Index>(x_ptr->size()) - 1;
        for (Index e = 0; e < cells; ++e) {
            const double xm = 0.5 * ((*x_ptr)[e] + (*x_ptr)[e + 1]);
            const Complex a = mod->a11(t, xm);
            const Complex b = eval_or_zero(mod->b1, t, xm);
            const Complex c = eval_or_zero(mod->c1, t, xm);
            const Index rn[2] = {red(e), red(e + 1)};
            // principal (a/h) [[1,-1],[-1,1]], drift rows b/2 * [-1, 1],
            // rows of c-block are -c/2 and +c/2
            const Complex blk[2][2] = {
                {a / h - b / 2.0 - c / 2.0, -a / h + b / 2.0 - c / 2.0},
                {-a / h - b / 2.0 + c / 2.0, a / h + b / 2.0 + c / 2.0}};
            for (int r = 0; r < 2; ++r)
                for (int col = 0; col < 2; ++col)
                    if (rn[r] >= 0 && rn[col] >= 0) K(rn[r], rn[col]) += blk[r][col];
        }
        if (mod->a0) {  // lumped reaction
            for (Index i = 0; i < dim; ++i)
                K(i, i) += mod->a0(t, (*x_ptr)[lo + i]) * (*w_ptr)[i];
        }
        return w_ptr->cwiseInverse().cast<Complex>().asDiagonal() * K;
    };
    path.validate();

    const CoefficientSups sups = coefficient_sups(model);
    FormConstants c;
    c.alpha = 0.5 * model.nu;
    // sup of |Re(b+c)| + |Im(b-c)| enters the shift through a Young split
    double mixed = 0.0;
    for (double t : schedule_samples(model.horizon, model.breakpoints, 17))
        for (int i = 0; i <= 64; ++i) {
            const double xx = model.x_min + (model.x_max - model.x_min) * i / 64.0;
            const Complex b = eval_or_zero(model.b1, t, xx);
            const Complex cc = eval_or_zero(model.c1, t, xx);
            mixed = std::max(mixed, std::abs((b + cc).real()) + std::abs((b - cc).imag()));
        }
    c.omega = 0.5 * mixed * mixed + sups.re_a0_minus_m_neg;
    c.M = std::max(1.05 * estimate_form_constants(path, 9).M, c.alpha);
    path.declared_constants = c;
    return path;
}

double omega_p_bound(const Elliptic1DModel& model, double p) {
    if (!(p > 1.0) || std::isinf(p))
        throw ValidationError("omega_p_bound: the formula branches cover p in (1, inf) only");
    const CoefficientSups s = coefficient_sups(model);
    const double bc2 = s.b_minus_c * s.b_minus_c;
    if (p >= 2.0)
        return s.re_a0_minus_m_neg + (1.0 / p + 0.5) * bc2 / model.nu +
               p * s.re_c * s.re_c / model.nu;
    return s.re_a0_minus_m_neg + (0.5 + (p - 1.0) / p) * bc2 / model.nu +
           p / (model.nu * (p - 1.0)) * s.re_b * s.re_b;
}

LinearContractivityConstants linear_contractivity_constants(const Elliptic1DModel& model) {
    const CoefficientSups s = coefficient_sups(model);
    LinearContractivityConstants out;
    out.alpha1 = s.re_a0_minus_m_neg + s.b_minus_c * s.b_minus_c / model.nu;
    out.alpha2 = s.re_c * s.re_c / model.nu;
    out.alpha2_star = s.re_b * s.re_b / model.nu;
    out.alpha1_star = out.alpha1;
    return out;
}

Elliptic1DModel perturbed_coefficients(const Elliptic1DModel& model,
                                       const std::function<double(double)>& psi_prime,
                                       double rho) {
    Elliptic1DModel out = model;
    const auto a11 = model.a11;
    const auto b1 = model.b1, c1 = model.c1, a0 = model.a0;
    out.b1 = [a11, b1, psi_prime, rho](double t, double x) {
        return eval_or_zero(b1, t, x) + rho * a11(t, x) * psi_prime(x);
    };
    out.c1 = [a11, c1, psi_prime, rho](double t, double x) {
        return eval_or_zero(c1, t, x) - rho * a11(t, x) * psi_prime(x);
    };
    out.a0 = [a11, b1, c1, a0, psi_prime, rho](double t, double x) {
        const double dp = psi_prime(x);
        return eval_or_zero(a0, t, x) - rho * rho * a11(t, x) * dp * dp -
               rho * dp * (eval_or_zero(b1, t, x) - eval_or_zero(c1, t, x));
    };
    return out;
}

OperatorPath assemble_davies_elliptic_1d(const Elliptic1DModel& model, const DaviesWeight& psi,
                                         double rho) {
    OperatorPath base = build_elliptic_1d(model);
    psi.validate();
    if (psi.psi.size() != base.dim())
        throw DimensionError("assemble_davies_elliptic_1d: psi length does not match grid");
    // element-level exact product rule: each element block picks up the
    // factors e^{rho(psi_i - psi_j)}, i.e. the discrete perturbed
    // coefficients a cosh(2 delta), b + a sinh(2 delta)/h, ... with
    // delta = rho (psi_{i+1}-psi_i)/2; assembling them is identical to
    // conjugating the assembled form matrix by the nodal exponentials
    const Vector scale = (rho * psi.psi.array()).exp().cast<Complex>();
    const Vector scale_inv = (-rho * psi.psi.array()).exp().cast<Complex>();
    OperatorPath out = base;
    out.evaluate = [base, scale, scale_inv](double t) -> Matrix {
        return scale.asDiagonal() * base(t) * scale_inv.asDiagonal();
    };
    out.declared_constants.reset();
    return out;
}

// ---------------------------------------------------------------------------
// loaders

GraphModel load_edge_list(const std::string& filename,
                          const std::vector<ScalarSchedule>& schedules, double horizon) {
    std::ifstream in(filename);
    if (!in) throw ValidationError("load_edge_list: cannot open " + filename);
    GraphModel g;
    g.horizon = horizon;
    std::vector<std::size_t> ids;
    std::string line;
    Index max_node = -1;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        long a, b;
        std::size_t id = 0;
        ss >> a >> b;
        if (ss.fail()) throw ValidationError("load_edge_list: malformed line '" + line + "'");
        ss >> id;  // optional schedule id, defaults to 0
        if (id >= schedules.size())
            throw ValidationError("load_edge_list: schedule id out of range in '" + line + "'");
        g.edges.emplace_back(a, b);
        ids.push_back(id);
        max_node = std::max<Index>(max_node, std::max<Index>(a, b));
    }
    g.num_nodes = max_node + 1;
    EdgeSchedule es;
    std::set<double> bps;
    Regularity reg = Regularity::PiecewiseConstant;
    for (std::size_t id : ids) {
        for (double b : schedules[id].breakpoints) bps.insert(b);
        if (schedules[id].regularity == Regularity::Smooth) reg = Regularity::Smooth;
    }
    es.regularity = reg;
    es.breakpoints.assign(bps.begin(), bps.end());
    auto sched_ptr = std::make_shared<std::vector<ScalarSchedule>>(schedules);
    auto ids_ptr = std::make_shared<std::vector<std::size_t>>(std::move(ids));
    es.weights = [sched_ptr, ids_ptr](double t) {
        RealVector m(static_cast<Index>(ids_ptr->size()));
        for (std::size_t e = 0; e < ids_ptr->size(); ++e)
            m[static_cast<Index>(e)] = (*sched_ptr)[(*ids_ptr)[e]].value(t);
        return m;
    };
    g.schedule = std::move(es);
    return g;
}

}  // namespace evofam
