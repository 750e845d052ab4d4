#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace evofam {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Base class of all structured errors thrown by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Mismatched vector/matrix sizes; message names expected and actual.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Invalid argument or violated precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Numerical failure (non-convergence, overflow, step underflow).
class NumericalError : public Error {
public:
    using Error::Error;
};

// -------------------------------------------------------------------------
// Threading. Checks and sweeps that are data-parallel go through
// parallel_for; results are written by index so the outcome is
// deterministic regardless of the thread count.

int thread_count();
void set_thread_count(int n);  // n <= 0 restores the default

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// -------------------------------------------------------------------------
// Deterministic RNG. All Monte-Carlo loops derive their streams from an
// explicit seed so reports are reproducible.

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

/// Independent substream for parallel chunks: seed mixed with the chunk id
/// (splitmix64 finalizer).
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return Rng(z ^ (z >> 31));
}

Vector random_complex_vector(Rng& rng, Index n);
Vector random_real_vector(Rng& rng, Index n);

inline bool approx_equal(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace evofam
