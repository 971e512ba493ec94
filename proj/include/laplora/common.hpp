#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

// =============================================================================
// laplora/common.hpp
// Shared ground: error taxonomy, the row-major dense matrix, seedable RNG
// with portable uniform/normal draws, and seed-derivation helpers.
// =============================================================================

namespace laplora {

inline constexpr const char* kVersion = "0.1.0";

// -----------------------------------------------------------------------------
// Errors. One branch of std::runtime_error per failure family so callers
// (and the CLI exit-code mapping) can tell them apart.
// -----------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dimension mismatch between operands.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Input value outside the documented domain (e.g. lambda outside [0,2]).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated file contents.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Files of one container disagree with each other (row counts etc.).
class ConsistencyError : public Error {
public:
    using Error::Error;
};

/// Semantic constraint violated (overlapping masks, label out of range).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Cached artifact does not match the data it claims to describe.
class StaleCacheError : public Error {
public:
    using Error::Error;
};

/// Bad argument value (k > n, dropout rate outside [0,1), ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Training-time data problem (empty train mask, too few nodes).
class DataError : public Error {
public:
    using Error::Error;
};

/// API used against its stated contract (non-scalar loss, missing grad).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Iterative solver ran out of iterations; carries the worst residual seen.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& msg, double residual)
        : Error(msg), worst_residual(residual) {}
    double worst_residual = 0.0;
};

// -----------------------------------------------------------------------------
// DenseMatrix: row-major, 64-bit, value-semantic.
// -----------------------------------------------------------------------------

struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, rows*cols entries

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::size_t size() const { return data.size(); }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

/// 17 significant digits: enough to round-trip any 64-bit float through text.
inline std::string format_real17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// -----------------------------------------------------------------------------
// RNG. mt19937_64 streams seeded through splitmix64 so that every consumer
// (weight init, dropout, graph sampling) owns a private stream derived from
// (user seed, purpose tags). Draw helpers avoid std::*_distribution, whose
// output is implementation-defined.
// -----------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Chains splitmix64 over the parts; any change to any part changes the result.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t state = 0x243f6a8885a308d3ULL;  // arbitrary nonzero start
    std::uint64_t out = splitmix64(state);
    for (std::uint64_t p : parts) {
        state ^= p;
        out = splitmix64(state);
    }
    return out;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t bits() { return gen_(); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (pair cached).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n) {
        // Rejection-free modulo bias is negligible for our n << 2^64;
        // kept simple and portable.
        return static_cast<std::size_t>(gen_() % n);
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace laplora
