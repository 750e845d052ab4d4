#include "evofam/hilbert.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace evofam {

// ---------------------------------------------------------------------------
// threading / rng helpers declared in common.hpp

namespace {

std::atomic<int> g_thread_count{0};  // 0 = not set yet

int default_thread_count() {
    if (const char* env = std::getenv("EVOFAM_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace

int thread_count() {
    int n = g_thread_count.load();
    if (n <= 0) {
        n = default_thread_count();
        g_thread_count.store(n);
    }
    return n;
}

void set_thread_count(int n) { g_thread_count.store(n > 0 ? n : default_thread_count()); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const int threads = thread_count();
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(threads, n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

Vector random_complex_vector(Rng& rng, Index n) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = Complex(gauss(rng), gauss(rng));
    return v;
}

Vector random_real_vector(Rng& rng, Index n) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = Complex(gauss(rng), 0.0);
    return v;
}

// ---------------------------------------------------------------------------
// DiscreteSpace

Matrix DiscreteSpace::v_gram() const {
    if (v_metric) return *v_metric;
    return weights.cast<Complex>().asDiagonal();
}

void DiscreteSpace::validate() const {
    if (weights.size() == 0) throw ValidationError("DiscreteSpace: empty weight vector");
    for (Index i = 0; i < weights.size(); ++i) {
        if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
            std::ostringstream os;
            os << "DiscreteSpace: weight[" << i << "] = " << weights[i] << " is not strictly positive";
            throw ValidationError(os.str());
        }
    }
    if (v_metric) {
        if (v_metric->rows() != dim() || v_metric->cols() != dim())
            throw DimensionError("DiscreteSpace: v_metric shape does not match dim");
        const double asym = (*v_metric - v_metric->adjoint()).cwiseAbs().maxCoeff();
        const double scale = std::max(1.0, v_metric->cwiseAbs().maxCoeff());
        if (asym > 1e-12 * scale) throw ValidationError("DiscreteSpace: v_metric is not Hermitian");
        Eigen::SelfAdjointEigenSolver<Matrix> es(*v_metric, Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success)
            throw NumericalError("DiscreteSpace: eigen-solver failed on v_metric");
        if (es.eigenvalues().minCoeff() <= 0.0)
            throw ValidationError("DiscreteSpace: v_metric minimum eigenvalue is not positive");
    }
    if (coords && coords->rows() != dim())
        throw DimensionError("DiscreteSpace: coords must have one row per node");
}

DiscreteSpace DiscreteSpace::counting(Index n) {
    DiscreteSpace s;
    s.weights = RealVector::Ones(n);
    return s;
}

DiscreteSpace DiscreteSpace::weighted(RealVector w) {
    DiscreteSpace s;
    s.weights = std::move(w);
    return s;
}

SpacePtr make_space(DiscreteSpace space) {
    space.validate();
    return std::make_shared<const DiscreteSpace>(std::move(space));
}

// ---------------------------------------------------------------------------
// norms

double weighted_norm(const DiscreteSpace& space, const Vector& u, double p) {
    if (u.size() != space.dim()) {
        std::ostringstream os;
        os << "weighted_norm: expected vector of length " << space.dim() << ", got " << u.size();
        throw DimensionError(os.str());
    }
    if (std::isinf(p)) return u.size() == 0 ? 0.0 : u.cwiseAbs().maxCoeff();
    if (p < 1.0) throw ValidationError("weighted_norm: p must lie in [1, inf]");
    if (p == 1.0) return (space.weights.array() * u.cwiseAbs().array()).sum();
    if (p == 2.0) return std::sqrt((space.weights.array() * u.cwiseAbs2().array()).sum());
    const double s = (space.weights.array() * u.cwiseAbs().array().pow(p)).sum();
    return std::pow(s, 1.0 / p);
}

Complex weighted_inner(const DiscreteSpace& space, const Vector& x, const Vector& y) {
    return (y.conjugate().array() * space.weights.cast<Complex>().array() * x.array()).sum();
}

Matrix weighted_adjoint(const DiscreteSpace& space, const Matrix& A) {
    return space.weights.cwiseInverse().cast<Complex>().asDiagonal() * A.adjoint() *
           space.weights.cast<Complex>().asDiagonal();
}

// ---------------------------------------------------------------------------
// matrix exponential: scaling and squaring, Padé order from the 1-norm

namespace {

double one_norm(const Matrix& A) {
    return A.size() == 0 ? 0.0 : A.cwiseAbs().colwise().sum().maxCoeff();
}

void pade3(const Matrix& A, const Matrix& A2, Matrix& U, Matrix& V) {
    static const double b[] = {120., 60., 12., 1.};
    const Matrix I = Matrix::Identity(A.rows(), A.cols());
    U.noalias() = A * (b[3] * A2 + b[1] * I);
    V = b[2] * A2 + b[0] * I;
}

void pade5(const Matrix& A, const Matrix& A2, const Matrix& A4, Matrix& U, Matrix& V) {
    static const double b[] = {30240., 15120., 3360., 420., 30., 1.};
    const Matrix I = Matrix::Identity(A.rows(), A.cols());
    U.noalias() = A * (b[5] * A4 + b[3] * A2 + b[1] * I);
    V = b[4] * A4 + b[2] * A2 + b[0] * I;
}

void pade7(const Matrix& A, const Matrix& A2, const Matrix& A4, const Matrix& A6, Matrix& U,
           Matrix& V) {
    static const double b[] = {17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.};
    const Matrix I = Matrix::Identity(A.rows(), A.cols());
    U.noalias() = A * (b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I);
    V = b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;
}

void pade9(const Matrix& A, const Matrix& A2, const Matrix& A4, const Matrix& A6, Matrix& U,
           Matrix& V) {
    static const double b[] = {17643225600., 8821612800., 2075673600., 302702400., 30270240.,
                               2162160.,     110880.,     3960.,       90.,        1.};
    const Matrix I = Matrix::Identity(A.rows(), A.cols());
    const Matrix A8 = A6 * A2;
    U.noalias() = A * (b[9] * A8 + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I);
    V = b[8] * A8 + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;
}

void pade13(const Matrix& A, const Matrix& A2, const Matrix& A4, const Matrix& A6, Matrix& U,
            Matrix& V) {
    static const double b[] = {64764752532480000., 32382376266240000., 7771770303897600.,
                               1187353796428800.,  129060195264000.,   10559470521600.,
                               670442572800.,      33522128640.,       1323241920.,
                               40840800.,          960960.,            16380.,
                               182.,               1.};
    const Matrix I = Matrix::Identity(A.rows(), A.cols());
    Matrix tmp = b[13] * A6 + b[11] * A4 + b[9] * A2;
    U.noalias() = A * (A6 * tmp + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I);
    tmp = b[12] * A6 + b[10] * A4 + b[8] * A2;
    V.noalias() = A6 * tmp;
    V += b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;
}

}  // namespace

Matrix matrix_exponential(const Matrix& A, double r) {
    if (A.rows() != A.cols()) throw DimensionError("matrix_exponential: matrix must be square");
    if (!A.allFinite() || !std::isfinite(r))
        throw ValidationError("matrix_exponential: non-finite entries in input");
    if (r < 0.0) throw ValidationError("matrix_exponential: r must be nonnegative");

    Matrix B = (-r) * A;
    const double nb = one_norm(B);

    // order thresholds for L1-norm of the scaled matrix
    constexpr double theta3 = 1.495585217958292e-2;
    constexpr double theta5 = 2.539398330063230e-1;
    constexpr double theta7 = 9.504178996162932e-1;
    constexpr double theta9 = 2.097847961257068;
    constexpr double theta13 = 5.371920351148152;

    Matrix U, V;
    int squarings = 0;
    if (nb <= theta9) {
        const Matrix B2 = B * B;
        if (nb <= theta3) {
            pade3(B, B2, U, V);
        } else {
            const Matrix B4 = B2 * B2;
            if (nb <= theta5) {
                pade5(B, B2, B4, U, V);
            } else {
                const Matrix B6 = B4 * B2;
                if (nb <= theta7)
                    pade7(B, B2, B4, B6, U, V);
                else
                    pade9(B, B2, B4, B6, U, V);
            }
        }
    } else {
        squarings = std::max(0, static_cast<int>(std::ceil(std::log2(nb / theta13))));
        if (squarings > 1022) {
            std::ostringstream os;
            os << "matrix_exponential: 1-norm " << nb << " requires " << squarings
               << " squarings; scaling overflow";
            throw NumericalError(os.str());
        }
        B *= std::ldexp(1.0, -squarings);
        const Matrix B2 = B * B;
        const Matrix B4 = B2 * B2;
        const Matrix B6 = B4 * B2;
        pade13(B, B2, B4, B6, U, V);
    }

    Matrix numer = V + U;
    Matrix denom = V - U;
    Matrix E = denom.partialPivLu().solve(numer);
    for (int k = 0; k < squarings; ++k) {
        E = E * E;
        if (!E.allFinite()) {
            std::ostringstream os;
            os << "matrix_exponential: overflow during squaring step " << (k + 1) << " of "
               << squarings << " (scaled 1-norm " << one_norm(B) << ", input 1-norm " << nb << ")";
            throw NumericalError(os.str());
        }
    }
    return E;
}

// ---------------------------------------------------------------------------
// operator norms

double spectral_norm_flat(const Matrix& A) {
    if (A.size() == 0) return 0.0;
    if (A.rows() <= 512) {
        return Eigen::BDCSVD<Matrix>(A).singularValues()(0);
    }
    // power iteration on A^H A
    constexpr double tol = 1e-10;
    constexpr int max_iter = 10000;
    Rng rng = make_rng(0x5eed);
    Vector v = random_complex_vector(rng, A.cols());
    v /= v.norm();
    double sigma = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Vector w = A.adjoint() * (A * v);
        const double lambda = w.norm();
        if (lambda == 0.0) return 0.0;
        w /= lambda;
        const double sigma_new = std::sqrt(lambda);
        const double drift = (w - v).norm();
        v.swap(w);
        if (drift < tol || std::abs(sigma_new - sigma) < tol * std::max(1.0, sigma_new)) {
            return sigma_new;
        }
        sigma = sigma_new;
    }
    std::ostringstream os;
    os << "spectral_norm_flat: power iteration did not converge in " << max_iter << " iterations";
    throw NumericalError(os.str());
}

double spectral_norm_weighted(const DiscreteSpace& space, const Matrix& A) {
    const RealVector sqrtw = space.weights.cwiseSqrt();
    const Matrix flat = sqrtw.cast<Complex>().asDiagonal() * A *
                        sqrtw.cwiseInverse().cast<Complex>().asDiagonal();
    return spectral_norm_flat(flat);
}

double operator_norm(const DiscreteSpace& space, const Matrix& A, NormP p_in, NormP p_out) {
    if (A.rows() != space.dim() || A.cols() != space.dim())
        throw DimensionError("operator_norm: matrix shape does not match space dimension");
    const RealVector& w = space.weights;

    if (p_in == NormP::Two && p_out == NormP::Two) return spectral_norm_weighted(space, A);
    if (p_in == NormP::One && p_out == NormP::One) {
        // max over columns of (sum_i w_i |A_ij|) / w_j
        double best = 0.0;
        for (Index j = 0; j < A.cols(); ++j)
            best = std::max(best, (w.array() * A.col(j).cwiseAbs().array()).sum() / w[j]);
        return best;
    }
    if (p_in == NormP::Inf && p_out == NormP::Inf) {
        return A.size() == 0 ? 0.0 : A.cwiseAbs().rowwise().sum().maxCoeff();
    }
    if (p_in == NormP::One && p_out == NormP::Inf) {
        // kernel sup: max_ij |A_ij| / w_j
        double best = 0.0;
        for (Index j = 0; j < A.cols(); ++j)
            best = std::max(best, A.col(j).cwiseAbs().maxCoeff() / w[j]);
        return best;
    }
    if (p_in == NormP::One && p_out == NormP::Two) {
        double best = 0.0;
        for (Index j = 0; j < A.cols(); ++j) {
            const double col = std::sqrt((w.array() * A.col(j).cwiseAbs2().array()).sum());
            best = std::max(best, col / w[j]);
        }
        return best;
    }
    if (p_in == NormP::Two && p_out == NormP::Inf) {
        double best = 0.0;
        for (Index i = 0; i < A.rows(); ++i) {
            best = std::max(best,
                            std::sqrt((A.row(i).cwiseAbs2().array() / w.transpose().array()).sum()));
        }
        return best;
    }
    throw ValidationError(
        "operator_norm: unsupported (p_in, p_out); supported pairs are (1,1), (2,2), (inf,inf), "
        "(1,2), (2,inf), (1,inf)");
}

// ---------------------------------------------------------------------------
// spectral summary

SpectralSummary spectral_summary(const DiscreteSpace& space, const Matrix& A,
                                 const Vector* kernel_vector) {
    if (A.rows() != space.dim() || A.cols() != space.dim())
        throw DimensionError("spectral_summary: matrix shape does not match space dimension");

    const RealVector sqrtw = space.weights.cwiseSqrt();
    const Matrix flat = sqrtw.cast<Complex>().asDiagonal() * A *
                        sqrtw.cwiseInverse().cast<Complex>().asDiagonal();
    const Matrix H = 0.5 * (flat + flat.adjoint());

    Eigen::SelfAdjointEigenSolver<Matrix> es(H, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw NumericalError("spectral_summary: eigen-solver failed to converge");

    SpectralSummary out;
    out.min_sym_eigen = es.eigenvalues().minCoeff();
    out.max_sym_eigen = es.eigenvalues().maxCoeff();

    if (kernel_vector) {
        if (kernel_vector->size() != space.dim())
            throw DimensionError("spectral_summary: kernel vector length does not match space");
        Vector q = sqrtw.cast<Complex>().asDiagonal() * (*kernel_vector);
        const double qn = q.norm();
        if (qn == 0.0) throw ValidationError("spectral_summary: kernel vector must be nonzero");
        q /= qn;
        // orthonormal basis of the complement via a Householder reflector
        Vector v = q;
        v[0] += (std::abs(q[0]) > 0 ? q[0] / std::abs(q[0]) : Complex(1, 0));
        v /= v.norm();
        Matrix reflector = Matrix::Identity(space.dim(), space.dim()) - 2.0 * v * v.adjoint();
        // reflector maps q to (up to phase) -e_0; its columns 1..n-1 span the complement
        const Matrix Qc = reflector.rightCols(space.dim() - 1);
        const Matrix Hc = Qc.adjoint() * H * Qc;
        Eigen::SelfAdjointEigenSolver<Matrix> esc(0.5 * (Hc + Hc.adjoint()), Eigen::EigenvaluesOnly);
        if (esc.info() != Eigen::Success)
            throw NumericalError("spectral_summary: eigen-solver failed on the complement block");
        out.spectral_gap_on_complement = esc.eigenvalues().minCoeff();
    }
    return out;
}

}  // namespace evofam
