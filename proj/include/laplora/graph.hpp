#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "laplora/common.hpp"
#include "laplora/sparse.hpp"

// =============================================================================
// laplora/graph.hpp
// Graph container plus the operators every spectral piece of the library
// stands on: symmetrized edges, normalized Laplacian L, propagation S = I - L.
// =============================================================================

namespace laplora {

using EdgeList = std::vector<std::pair<std::size_t, std::size_t>>;

struct GraphDataset {
    std::size_t n_nodes = 0;
    EdgeList edges;  // canonical: (min,max), sorted, unique
    DenseMatrix features;
    std::vector<int> labels;
    std::vector<std::uint8_t> train_mask;
    std::vector<std::uint8_t> val_mask;
    std::vector<std::uint8_t> test_mask;
    std::string name;
    int n_classes = 0;
};

/// Canonicalizes an undirected edge list: each edge as (min,max), sorted,
/// deduplicated. (u,v) and (v,u) collapse to one edge; self-loops keep a
/// single copy.
inline EdgeList symmetrize(const EdgeList& edges, std::size_t n) {
    EdgeList out;
    out.reserve(edges.size());
    for (const auto& [u, v] : edges) {
        if (u >= n || v >= n)
            throw std::out_of_range("symmetrize: edge endpoint >= n");
        out.emplace_back(std::min(u, v), std::max(u, v));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// Unweighted symmetric adjacency from the canonical edge list.
/// With add_self_loops, builds A + I (the renormalization-trick adjacency).
inline SparseMatrix adjacency(const GraphDataset& data, bool add_self_loops = false) {
    std::vector<std::tuple<std::size_t, std::size_t, double>> trip;
    trip.reserve(2 * data.edges.size() + (add_self_loops ? data.n_nodes : 0));
    for (const auto& [u, v] : data.edges) {
        trip.emplace_back(u, v, 1.0);
        if (u != v) trip.emplace_back(v, u, 1.0);
    }
    if (add_self_loops)
        for (std::size_t i = 0; i < data.n_nodes; ++i) trip.emplace_back(i, i, 1.0);
    return SparseMatrix::from_triplets(data.n_nodes, data.n_nodes, std::move(trip));
}

/// L = I - D^{-1/2} A D^{-1/2}. Isolated nodes get the row [.. 1 ..] (diagonal
/// 1, nothing else), so no degree ever divides by zero. Eigenvalues lie in
/// [0,2] by construction. With renormalize, A is replaced by A + I first.
inline SparseMatrix normalized_laplacian(const GraphDataset& data, bool renormalize = false) {
    const std::size_t n = data.n_nodes;
    const SparseMatrix a = adjacency(data, renormalize);
    std::vector<double> inv_sqrt_deg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t p = a.row_offsets[i]; p < a.row_offsets[i + 1]; ++p)
            deg += a.values[p];
        if (deg > 0.0) inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }
    std::vector<std::tuple<std::size_t, std::size_t, double>> trip;
    trip.reserve(a.nnz() + n);
    for (std::size_t i = 0; i < n; ++i) trip.emplace_back(i, i, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = a.row_offsets[i]; p < a.row_offsets[i + 1]; ++p) {
            const std::size_t j = a.col_indices[p];
            // s_i*s_j first: multiplication commutes bitwise, so L_ij == L_ji exactly
            const double w = inv_sqrt_deg[i] * inv_sqrt_deg[j];
            trip.emplace_back(i, j, -a.values[p] * w);
        }
    }
    return SparseMatrix::from_triplets(n, n, std::move(trip));
}

/// S = I - L, same sparsity pattern plus the diagonal.
inline SparseMatrix propagation_operator(const SparseMatrix& l) {
    if (l.n_rows != l.n_cols)
        throw ShapeError("propagation_operator: L must be square");
    std::vector<std::tuple<std::size_t, std::size_t, double>> trip;
    trip.reserve(l.nnz() + l.n_rows);
    for (std::size_t i = 0; i < l.n_rows; ++i) trip.emplace_back(i, i, 1.0);
    for (std::size_t i = 0; i < l.n_rows; ++i)
        for (std::size_t p = l.row_offsets[i]; p < l.row_offsets[i + 1]; ++p)
            trip.emplace_back(i, l.col_indices[p], -l.values[p]);
    return SparseMatrix::from_triplets(l.n_rows, l.n_cols, std::move(trip));
}

}  // namespace laplora
