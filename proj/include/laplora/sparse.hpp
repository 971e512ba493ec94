#pragma once

#include <algorithm>
#include <cstddef>
#include <tuple>
#include <vector>

#include "laplora/common.hpp"

// =============================================================================
// laplora/sparse.hpp
// Compressed sparse row matrix and the sparse-dense product. Carries the
// adjacency, degree, Laplacian and propagation operators of the library.
// =============================================================================

namespace laplora {

struct SparseMatrix {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<std::size_t> row_offsets;  // length n_rows + 1, non-decreasing
    std::vector<std::size_t> col_indices;  // strictly increasing within a row
    std::vector<double> values;            // parallel to col_indices

    SparseMatrix() : row_offsets(1, 0) {}
    SparseMatrix(std::size_t rows, std::size_t cols)
        : n_rows(rows), n_cols(cols), row_offsets(rows + 1, 0) {}

    std::size_t nnz() const { return values.size(); }

    static SparseMatrix identity(std::size_t n) {
        SparseMatrix m(n, n);
        m.col_indices.resize(n);
        m.values.assign(n, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            m.col_indices[i] = i;
            m.row_offsets[i + 1] = i + 1;
        }
        return m;
    }

    /// Builds from (row, col, value) triplets; duplicates are summed.
    static SparseMatrix from_triplets(
        std::size_t rows, std::size_t cols,
        std::vector<std::tuple<std::size_t, std::size_t, double>> triplets) {
        for (const auto& [i, j, v] : triplets) {
            (void)v;
            if (i >= rows || j >= cols)
                throw ShapeError("from_triplets: index out of range");
        }
        std::sort(triplets.begin(), triplets.end(),
                  [](const auto& a, const auto& b) {
                      return std::tie(std::get<0>(a), std::get<1>(a)) <
                             std::tie(std::get<0>(b), std::get<1>(b));
                  });
        SparseMatrix m(rows, cols);
        std::size_t last_i = rows, last_j = cols;  // sentinel: no entry yet
        std::vector<std::size_t> row_counts(rows, 0);
        for (const auto& [i, j, v] : triplets) {
            if (i == last_i && j == last_j) {
                m.values.back() += v;
                continue;
            }
            m.col_indices.push_back(j);
            m.values.push_back(v);
            ++row_counts[i];
            last_i = i;
            last_j = j;
        }
        for (std::size_t i = 0; i < rows; ++i)
            m.row_offsets[i + 1] = m.row_offsets[i] + row_counts[i];
        return m;
    }

    /// Throws unless the CSR structural invariants hold.
    void check_invariants() const {
        if (row_offsets.size() != n_rows + 1)
            throw ShapeError("SparseMatrix: row_offsets length != n_rows + 1");
        if (row_offsets.front() != 0)
            throw ShapeError("SparseMatrix: row_offsets[0] != 0");
        if (row_offsets.back() != values.size())
            throw ShapeError("SparseMatrix: row_offsets[n_rows] != nnz");
        if (col_indices.size() != values.size())
            throw ShapeError("SparseMatrix: col/value length mismatch");
        for (std::size_t i = 0; i < n_rows; ++i) {
            if (row_offsets[i] > row_offsets[i + 1])
                throw ShapeError("SparseMatrix: row_offsets decreasing");
            for (std::size_t p = row_offsets[i]; p < row_offsets[i + 1]; ++p) {
                if (col_indices[p] >= n_cols)
                    throw ShapeError("SparseMatrix: column index out of range");
                if (p > row_offsets[i] && col_indices[p - 1] >= col_indices[p])
                    throw ShapeError("SparseMatrix: columns not strictly increasing");
            }
        }
    }

    DenseMatrix to_dense() const {
        DenseMatrix d(n_rows, n_cols);
        for (std::size_t i = 0; i < n_rows; ++i)
            for (std::size_t p = row_offsets[i]; p < row_offsets[i + 1]; ++p)
                d(i, col_indices[p]) = values[p];
        return d;
    }
};

/// Sparse-dense product S * X. Per-row accumulation runs in ascending column
/// order, so the result is bit-reproducible.
inline DenseMatrix spmm(const SparseMatrix& s, const DenseMatrix& x) {
    if (s.n_cols != x.rows)
        throw ShapeError("spmm: S.n_cols != X.rows");
    DenseMatrix out(s.n_rows, x.cols);
    const std::size_t f = x.cols;
    for (std::size_t i = 0; i < s.n_rows; ++i) {
        double* dst = out.data.data() + i * f;
        for (std::size_t p = s.row_offsets[i]; p < s.row_offsets[i + 1]; ++p) {
            const double v = s.values[p];
            const double* src = x.data.data() + s.col_indices[p] * f;
            for (std::size_t c = 0; c < f; ++c) dst[c] += v * src[c];
        }
    }
    return out;
}

/// S^T * G without materializing the transpose; scatter order follows the CSR
/// row-major walk of S, which is fixed, so this too is deterministic.
inline DenseMatrix spmm_transposed(const SparseMatrix& s, const DenseMatrix& g) {
    if (s.n_rows != g.rows)
        throw ShapeError("spmm_transposed: S.n_rows != G.rows");
    DenseMatrix out(s.n_cols, g.cols);
    const std::size_t f = g.cols;
    for (std::size_t i = 0; i < s.n_rows; ++i) {
        const double* src = g.data.data() + i * f;
        for (std::size_t p = s.row_offsets[i]; p < s.row_offsets[i + 1]; ++p) {
            const double v = s.values[p];
            double* dst = out.data.data() + s.col_indices[p] * f;
            for (std::size_t c = 0; c < f; ++c) dst[c] += v * src[c];
        }
    }
    return out;
}

/// Sparse matrix-vector product, used by the eigensolver's hot loop.
inline void spmv(const SparseMatrix& s, const double* x, double* y) {
    for (std::size_t i = 0; i < s.n_rows; ++i) {
        double acc = 0.0;
        for (std::size_t p = s.row_offsets[i]; p < s.row_offsets[i + 1]; ++p)
            acc += s.values[p] * x[s.col_indices[p]];
        y[i] = acc;
    }
}

}  // namespace laplora
