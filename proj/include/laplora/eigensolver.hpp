#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "laplora/common.hpp"
#include "laplora/sparse.hpp"

// =============================================================================
// laplora/eigensolver.hpp
// Partial eigendecomposition of the normalized Laplacian: the k smallest
// eigenpairs, found by Lanczos with full reorthogonalization on the shifted
// operator 2I - L (largest of the shift == smallest of L; the [0,2] spectrum
// makes the shift exact and inversion-free). Because every new direction is
// reorthogonalized against the whole basis, the Rayleigh-Ritz matrix is kept
// as an explicit projection rather than assumed tridiagonal; that makes
// random continuations after a Krylov breakdown exact, so degenerate
// eigenvalues are resolved within a sweep. Converged pairs are locked in
// ascending order and deflated; unconverged sweeps restart warm from the
// best remaining Ritz vector, so progress compounds on clustered spectra.
// =============================================================================

namespace laplora {

struct EigenBasis {
    std::size_t k = 0;
    std::vector<double> eigenvalues;  // ascending, in [0,2]
    DenseMatrix eigenvectors;         // n x k, column-orthonormal
    std::uint64_t graph_hash = 0;

    std::size_t n_nodes() const { return eigenvectors.rows; }
};

namespace detail {

// y = (2I - L) x
inline void shifted_matvec(const SparseMatrix& l, const double* x, double* y) {
    spmv(l, x, y);
    for (std::size_t i = 0; i < l.n_rows; ++i) y[i] = 2.0 * x[i] - y[i];
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

// w -= (v.w) v for every v in basis; two classical Gram-Schmidt passes.
inline void orthogonalize_against(std::vector<double>& w,
                                  const std::vector<std::vector<double>>& basis) {
    for (int pass = 0; pass < 2; ++pass)
        for (const auto& v : basis) {
            const double c = dot(v, w);
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= c * v[i];
        }
}

// Orthogonalize w against both spans and normalize, repeating the projection
// while the norm collapses (DGKS criterion). Normalizing only once the
// surviving component dominates keeps the division from amplifying rounding
// residue left in the span directions — the classic source of ghost copies
// of locked eigenvalues. Returns the final norm, or 0.0 when w lies
// numerically inside the spans (breakdown).
inline double orthonormalize_robust(std::vector<double>& w,
                                    const std::vector<std::vector<double>>& a,
                                    const std::vector<std::vector<double>>& b) {
    for (int rep = 0; rep < 3; ++rep) {
        const double before = norm2(w);
        orthogonalize_against(w, a);
        orthogonalize_against(w, b);
        const double after = norm2(w);
        if (after < 1e-10) return 0.0;
        if (after > 0.7 * before) {
            for (double& x : w) x /= after;
            return after;
        }
    }
    return 0.0;
}

}  // namespace detail

/// k smallest eigenpairs of a symmetric L with spectrum in [0,2].
/// Deterministic for a fixed seed. tol bounds the per-pair residual
/// ||L u - lambda u|| <= tol * max(1, lambda); max_iter caps restarts.
inline EigenBasis partial_eigen(const SparseMatrix& l, std::size_t k, double tol = 1e-8,
                                std::size_t max_iter = 0, std::uint64_t seed = 0) {
    if (l.n_rows != l.n_cols) throw ShapeError("partial_eigen: L must be square");
    const std::size_t n = l.n_rows;
    if (k < 1 || k > n) throw ParameterError("partial_eigen: need 1 <= k <= n");
    if (max_iter == 0) max_iter = 10 * k;

    Rng rng(derive_seed({seed, 0xe16e7ULL}));
    std::vector<std::vector<double>> locked_vecs;
    std::vector<double> locked_vals;
    double worst_residual = 0.0;

    // Best unconverged Ritz vector from the previous sweep; warm-starting the
    // next sweep from it lets accuracy compound on tightly clustered spectra.
    std::vector<double> warm;

    std::vector<double> z(n), tmp(n);
    for (std::size_t sweep = 0; locked_vecs.size() < k; ++sweep) {
        if (sweep >= max_iter)
            throw ConvergenceError("partial_eigen: no convergence within max_iter restarts",
                                   worst_residual);

        const std::size_t remaining = k - locked_vecs.size();
        const std::size_t m_cap = n - locked_vecs.size();
        const std::size_t m_max =
            std::min(m_cap, std::max<std::size_t>(4 * remaining + 48, 96));

        // Start vector: warm Ritz vector when available, else random; always
        // deflated against the locked pairs.
        const std::vector<std::vector<double>> no_span;
        std::vector<double> v = std::move(warm);
        warm.clear();
        double vnorm = 0.0;
        if (!v.empty()) {
            vnorm = detail::orthonormalize_robust(v, locked_vecs, no_span);
        } else {
            v.assign(n, 0.0);
        }
        while (vnorm == 0.0) {
            for (std::size_t i = 0; i < n; ++i) v[i] = rng.uniform(-1.0, 1.0);
            vnorm = detail::orthonormalize_robust(v, locked_vecs, no_span);
        }

        std::vector<std::vector<double>> basis;
        basis.reserve(m_max);
        basis.push_back(std::move(v));

        // Explicit Rayleigh-Ritz projection t = B^T (2I - L) B. Full
        // reorthogonalization already costs O(n m) per step, so keeping the
        // exact projection is free at that order, and it stays correct when a
        // breakdown forces the random continuation below (which breaks the
        // tridiagonal structure a plain Lanczos recurrence would rely on).
        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m_max),
                                                  static_cast<Eigen::Index>(m_max));
        std::size_t filled = 0;  // completed columns of t
        for (;;) {
            detail::shifted_matvec(l, basis[filled].data(), z.data());
            for (std::size_t i = 0; i <= filled; ++i) {
                const double tij = detail::dot(basis[i], z);
                t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(filled)) = tij;
                t(static_cast<Eigen::Index>(filled), static_cast<Eigen::Index>(i)) = tij;
            }
            ++filled;

            const bool at_cap = filled == m_max;
            bool locked_here = false;
            if (at_cap || filled % 16 == 0) {
                // Rayleigh-Ritz over the current basis: walk Ritz pairs in
                // ascending lambda (descending shifted value), locking the
                // converged prefix. Prefix-only locking keeps the locked set
                // the smallest eigenvalues seen so far, never a later one
                // adopted while an earlier one is still unresolved.
                const Eigen::MatrixXd tm = t.topLeftCorner(
                    static_cast<Eigen::Index>(filled), static_cast<Eigen::Index>(filled));
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tm);
                if (es.info() != Eigen::Success)
                    throw ConvergenceError("partial_eigen: projected eigensolve failed",
                                           worst_residual);
                for (std::size_t c = 0; c < filled && locked_vecs.size() < k; ++c) {
                    const std::size_t col = filled - 1 - c;  // es sorts ascending
                    const double lambda =
                        2.0 - es.eigenvalues()(static_cast<Eigen::Index>(col));
                    std::vector<double> y(n, 0.0);
                    for (std::size_t b = 0; b < filled; ++b) {
                        const double s = es.eigenvectors()(
                            static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(col));
                        const double* vb = basis[b].data();
                        for (std::size_t i = 0; i < n; ++i) y[i] += s * vb[i];
                    }
                    // True residual ||L y - lambda y|| (== the shifted residual).
                    spmv(l, y.data(), tmp.data());
                    double r2 = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        const double d = tmp[i] - lambda * y[i];
                        r2 += d * d;
                    }
                    const double resid = std::sqrt(r2);
                    if (resid > tol * std::max(1.0, lambda)) {
                        if (at_cap) {
                            worst_residual = std::max(worst_residual, resid);
                            warm = std::move(y);
                        }
                        break;
                    }
                    // Lock: re-orthonormalize against already locked pairs.
                    const double yn = detail::orthonormalize_robust(y, locked_vecs, no_span);
                    if (yn == 0.0) continue;  // collapsed onto locked span; skip
                    locked_vecs.push_back(std::move(y));
                    locked_vals.push_back(std::clamp(lambda, 0.0, 2.0));
                    locked_here = true;
                }
            }
            // Restart deflated once anything locked; give up on the sweep at
            // the basis cap (the warm vector carries its progress forward).
            if (locked_here || at_cap || locked_vecs.size() >= k) break;

            // Grow the basis with the orthonormalized image of the newest
            // vector; on breakdown continue with a fresh random direction
            // (possible whenever the deflated space is not yet spanned, and
            // filled < m_max <= m_cap guarantees it is not).
            std::vector<double> w = z;
            double b = detail::orthonormalize_robust(w, locked_vecs, basis);
            while (b == 0.0) {
                for (std::size_t i = 0; i < n; ++i) w[i] = rng.uniform(-1.0, 1.0);
                b = detail::orthonormalize_robust(w, locked_vecs, basis);
            }
            basis.push_back(std::move(w));
        }
    }

    // Ascending lambda; stable on ties so locking order breaks them.
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return locked_vals[a] < locked_vals[b]; });

    EigenBasis out;
    out.k = k;
    out.eigenvalues.resize(k);
    out.eigenvectors = DenseMatrix(n, k);
    for (std::size_t c = 0; c < k; ++c) {
        out.eigenvalues[c] = locked_vals[order[c]];
        const auto& u = locked_vecs[order[c]];
        for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, c) = u[i];
    }
    return out;
}

// -----------------------------------------------------------------------------
// Cache file: little-endian binary.
//   "LLRA" | u32 version=1 | u64 graph_hash | u32 n | u32 k |
//   k f64 eigenvalues | n*k f64 eigenvector entries, column-major
// -----------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& buf, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(buf, v);
}

class ByteReader {
public:
    ByteReader(const std::string& data, const std::string& what)
        : data_(data), what_(what) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }

    double f64() {
        const std::uint64_t v = u64();
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }

    std::string bytes(std::size_t count) {
        need(count);
        std::string s = data_.substr(pos_, count);
        pos_ += count;
        return s;
    }

    bool exhausted() const { return pos_ == data_.size(); }

private:
    void need(std::size_t count) const {
        if (pos_ + count > data_.size())
            throw FormatError(what_ + ": truncated file");
    }
    const std::string& data_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::string read_binary_or_throw(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + p.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

inline void write_binary_or_throw(const std::filesystem::path& p, const std::string& buf) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open for writing: " + p.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("write failed: " + p.string());
}

}  // namespace detail

inline void save_eigen_cache(const EigenBasis& basis, const std::filesystem::path& path) {
    std::string buf;
    buf.reserve(24 + 8 * (basis.k + basis.n_nodes() * basis.k));
    buf += "LLRA";
    detail::put_u32(buf, 1);
    detail::put_u64(buf, basis.graph_hash);
    detail::put_u32(buf, static_cast<std::uint32_t>(basis.n_nodes()));
    detail::put_u32(buf, static_cast<std::uint32_t>(basis.k));
    for (double v : basis.eigenvalues) detail::put_f64(buf, v);
    for (std::size_t c = 0; c < basis.k; ++c)
        for (std::size_t i = 0; i < basis.n_nodes(); ++i)
            detail::put_f64(buf, basis.eigenvectors(i, c));
    detail::write_binary_or_throw(path, buf);
}

inline EigenBasis load_eigen_cache(const std::filesystem::path& path,
                                   std::uint64_t expected_hash) {
    const std::string data = detail::read_binary_or_throw(path);
    detail::ByteReader r(data, path.string());
    if (r.bytes(4) != "LLRA") throw FormatError(path.string() + ": bad magic");
    const std::uint32_t version = r.u32();
    if (version != 1) throw FormatError(path.string() + ": unsupported version");
    EigenBasis basis;
    basis.graph_hash = r.u64();
    const std::uint32_t n = r.u32();
    const std::uint32_t k = r.u32();
    if (basis.graph_hash != expected_hash)
        throw StaleCacheError(path.string() + ": graph hash mismatch (stale cache)");
    basis.k = k;
    basis.eigenvalues.resize(k);
    for (std::uint32_t i = 0; i < k; ++i) basis.eigenvalues[i] = r.f64();
    basis.eigenvectors = DenseMatrix(n, k);
    for (std::uint32_t c = 0; c < k; ++c)
        for (std::uint32_t i = 0; i < n; ++i) basis.eigenvectors(i, c) = r.f64();
    if (!r.exhausted()) throw FormatError(path.string() + ": trailing bytes");
    return basis;
}

}  // namespace laplora
