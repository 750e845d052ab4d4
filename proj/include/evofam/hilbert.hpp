#pragma once

#include "evofam/common.hpp"

#include <limits>
#include <memory>
#include <optional>

namespace evofam {

/// Finite-dimensional weighted Hilbert space.
///
/// `weights` are the cell measures of the underlying discretization (all 1
/// for pure graph nodes, the grid spacing h for discretized intervals); the
/// H inner product is (u|v) = sum_i w_i u_i conj(v_i). `v_metric`, when
/// present, is the Hermitian positive-definite Gram matrix of the V inner
/// product; when absent V = H. `coords` hold per-node geometric positions
/// used by distance-based kernel bounds.
struct DiscreteSpace {
    RealVector weights;
    std::optional<Matrix> v_metric;
    std::optional<RealMatrix> coords;  // dim x geometric-dimension

    Index dim() const { return weights.size(); }

    /// Gram matrix of the V inner product (weights on the diagonal when
    /// v_metric is absent).
    Matrix v_gram() const;

    /// Throws ValidationError if any invariant fails.
    void validate() const;

    static DiscreteSpace counting(Index n);            // weights all 1
    static DiscreteSpace weighted(RealVector weights);
};

using SpacePtr = std::shared_ptr<const DiscreteSpace>;

SpacePtr make_space(DiscreteSpace space);

/// Eigenvalue summary of the Hermitian part of an operator in the weighted
/// metric. `spectral_gap_on_complement` is only meaningful when a kernel
/// vector was supplied.
struct SpectralSummary {
    double max_sym_eigen = 0.0;
    double min_sym_eigen = 0.0;
    double spectral_gap_on_complement = 0.0;
};

constexpr double kInfinityNorm = std::numeric_limits<double>::infinity();

/// Weighted L^p norm, p in [1, inf]; p = inf gives max_i |u_i|.
double weighted_norm(const DiscreteSpace& space, const Vector& u, double p);

/// exp(-r A) by scaling-and-squaring with a Padé approximant whose order is
/// selected from the 1-norm of -rA. Relative accuracy about 1e-12 in the
/// spectral norm for well-conditioned inputs.
Matrix matrix_exponential(const Matrix& A, double r);

enum class NormP { One, Two, Inf };

/// Induced operator norm between weighted L^p spaces. Supported pairs:
/// (1,1), (2,2), (inf,inf), (1,2), (2,inf), (1,inf). The (1,inf) norm is
/// the kernel sup max_ij |A_ij| / w_j.
double operator_norm(const DiscreteSpace& space, const Matrix& A, NormP p_in, NormP p_out);

/// Eigenvalues of the Hermitian part of A in the weighted inner product.
/// With a kernel vector, also the smallest Hermitian-part eigenvalue on its
/// weighted-orthogonal complement.
SpectralSummary spectral_summary(const DiscreteSpace& space, const Matrix& A,
                                 const Vector* kernel_vector = nullptr);

// --- small helpers shared across modules ---

/// (x|y) in the weighted metric: sum_i w_i x_i conj(y_i).
Complex weighted_inner(const DiscreteSpace& space, const Vector& x, const Vector& y);

/// Adjoint in the weighted metric: W^{-1} A^H W.
Matrix weighted_adjoint(const DiscreteSpace& space, const Matrix& A);

/// Flat spectral norm (largest singular value); SVD up to dim 512, power
/// iteration above (tol 1e-10, at most 1e4 iterations).
double spectral_norm_flat(const Matrix& A);

/// Spectral norm of A as an operator on the weighted L^2 space.
double spectral_norm_weighted(const DiscreteSpace& space, const Matrix& A);

}  // namespace evofam
